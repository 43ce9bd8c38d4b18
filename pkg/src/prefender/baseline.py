"""Reference Tagged (next-line) and Stride (reference prediction table) prefetchers."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum


class Outcome(str, Enum):
    MISS = "MISS"
    HIT_ON_TAGGED = "HIT_ON_TAGGED"
    HIT = "HIT"


class TaggedPrefetcher:
    def __init__(self, line_size: int = 64):
        self.line_size = line_size

    def on_access(self, blk: int, outcome: Outcome) -> int | None:
        if outcome is Outcome.HIT:
            return None
        return blk + self.line_size


class StrideState(str, Enum):
    INIT = "INIT"
    TRANSIENT = "TRANSIENT"
    STEADY = "STEADY"


@dataclass
class StrideEntry:
    pc: int
    last_addr: int
    stride: int = 0
    state: StrideState = StrideState.INIT


class StridePrefetcher:
    """Per-PC stride detection; predicts only after a stride is seen twice in a row."""

    def __init__(self, table_size: int = 64, line_size: int = 64):
        if table_size < 1:
            raise ValueError("stride.table_size must be >= 1")
        self.table_size = table_size
        self.line_size = line_size
        self.table: OrderedDict[int, StrideEntry] = OrderedDict()

    def on_access(self, pc: int, addr: int) -> int | None:
        e = self.table.get(pc)
        if e is None:
            if len(self.table) >= self.table_size:
                self.table.popitem(last=False)
            self.table[pc] = StrideEntry(pc, addr)
            return None
        self.table.move_to_end(pc)
        delta = addr - e.last_addr
        e.last_addr = addr
        if delta == e.stride and delta != 0:
            e.state = StrideState.STEADY
        elif e.state is StrideState.STEADY:
            e.state = StrideState.INIT
        else:
            e.state = StrideState.TRANSIENT
            e.stride = delta
        if e.state is StrideState.STEADY:
            target = addr + e.stride
            if target < 0:
                return None
            return target & ~(self.line_size - 1)
        return None
