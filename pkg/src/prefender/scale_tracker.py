"""Scale Tracker: per-register (fixed value, scale) propagation and same-page candidates.

``fva`` is the register's value when it is a pure function of immediates, else
``None`` (NA). ``sc`` is the learned multiplicative step of the value, or
``None`` (NA) for the valid+valid rows of the rule table.
"""

from __future__ import annotations

from dataclasses import dataclass

from .isa import NUM_REGS, MicroInstruction, Opcode
from .memory import CacheConfig

SC_SATURATE = (1 << 63) - 1

_ADD_OPS = {Opcode.ADD: 1, Opcode.SUB: -1}
_ADDI_OPS = {Opcode.ADDI: 1, Opcode.SUBI: -1}
_MUL_REG = {Opcode.MUL, Opcode.SHL, Opcode.SHR}
_MUL_IMM = {Opcode.MULI, Opcode.SHLI, Opcode.SHRI}


@dataclass
class RegTrack:
    fva: int | None = None
    sc: int | None = 1


@dataclass(frozen=True)
class StCandidate:
    blk: int
    anchor: int
    sc_used: int


def _apply(op: Opcode, a: int, b: int) -> int:
    if op in (Opcode.MUL, Opcode.MULI):
        return a * b
    if op in (Opcode.SHL, Opcode.SHLI):
        return a << min(b & 127, 127) if b >= 0 else a
    return a >> min(b, 127) if b >= 0 else a


class ScaleTracker:
    """Calculation buffer: one ``RegTrack`` per architectural register."""

    def __init__(self, cfg: CacheConfig | None = None, bit_width: int = 64):
        if bit_width not in (64, 16):
            raise ValueError("st.bit_width must be 64 or 16")
        self.cfg = cfg or CacheConfig()
        self.bit_width = bit_width
        self.tracks = [RegTrack() for _ in range(NUM_REGS)]

    def _fva(self, v: int) -> int:
        v &= (1 << self.bit_width) - 1
        # keep fixed values signed so negative offsets behave like two's complement
        if v >= 1 << (self.bit_width - 1):
            v -= 1 << self.bit_width
        return v

    def _sc(self, v: int) -> int:
        v = abs(v)
        if self.bit_width == 16:
            v &= 0xFFFF
        elif v > SC_SATURATE:
            v = SC_SATURATE
        return v if v >= 1 else 1

    def track(self, ins: MicroInstruction) -> RegTrack:
        """Apply the rule table to ``ins`` and return the new track of ``rd``."""
        t = self.tracks
        op = ins.opcode
        if op is Opcode.LOADI:
            new = RegTrack(self._fva(ins.imm), 1)
        elif op in _ADDI_OPS:
            a = t[ins.rs0]
            if a.fva is None:
                new = RegTrack(None, a.sc)
            else:
                new = RegTrack(self._fva(a.fva + _ADDI_OPS[op] * ins.imm), 1)
        elif op in _ADD_OPS:
            a, b = t[ins.rs0], t[ins.rs1]
            if a.fva is not None and b.fva is not None:
                new = RegTrack(self._fva(a.fva + _ADD_OPS[op] * b.fva), None)
            elif a.fva is None and b.fva is not None:
                new = RegTrack(None, a.sc)
            elif a.fva is not None:
                new = RegTrack(None, b.sc)
            else:
                new = RegTrack(None, min(a.sc, b.sc))
        elif op in _MUL_IMM:
            a = t[ins.rs0]
            if a.fva is None:
                new = RegTrack(None, self._sc(_apply(op, a.sc, ins.imm)))
            else:
                new = RegTrack(self._fva(_apply(op, a.fva, ins.imm)), 1)
        elif op in _MUL_REG:
            a, b = t[ins.rs0], t[ins.rs1]
            if a.fva is not None and b.fva is not None:
                new = RegTrack(self._fva(_apply(op, a.fva, b.fva)), None)
            elif a.fva is None and b.fva is not None:
                new = RegTrack(None, self._sc(_apply(op, a.sc, b.fva)))
            elif a.fva is not None:
                new = RegTrack(None, self._sc(_apply(op, a.fva, b.sc)))
            else:
                new = RegTrack(None, self._sc(_apply(op, a.sc, b.sc)))
        elif op in (Opcode.FLUSH, Opcode.HALT):
            raise ValueError(f"{op.value} writes no register")
        else:
            # LOAD, TIME, XOR and anything else: reinitialise
            new = RegTrack(None, 1)
        t[ins.rd] = new
        return new

    def candidates_for_load(self, rs: int, eff_addr: int) -> list[StCandidate]:
        return candidates_for_load(self.tracks[rs], eff_addr, self.cfg)


def candidates_for_load(track: RegTrack, eff_addr: int, cfg: CacheConfig) -> list[StCandidate]:
    """Blocks at ``eff_addr -/+ sc`` that stay in the page of ``eff_addr``.

    Nothing is produced unless ``line_size < sc < page_size``.
    """
    sc = track.sc
    if sc is None or sc <= cfg.line_size or sc >= cfg.page_size:
        return []
    anchor = cfg.block(eff_addr)
    page = eff_addr // cfg.page_size
    out = []
    for addr in (eff_addr - sc, eff_addr + sc):
        if addr >= 0 and addr // cfg.page_size == page:
            out.append(StCandidate(cfg.block(addr), anchor, sc))
    return out
