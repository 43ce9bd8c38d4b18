"""Micro-ISA, assembly parser, and a blocking in-order core with a cycle counter."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .memory import HitLevel, MemoryFault

NUM_REGS = 32
MASK64 = (1 << 64) - 1
PC_BASE = 0x8000
PC_STEP = 8


class Opcode(str, Enum):
    LOADI = "LOADI"
    LOAD = "LOAD"
    ADD = "ADD"
    ADDI = "ADDI"
    SUB = "SUB"
    SUBI = "SUBI"
    MUL = "MUL"
    MULI = "MULI"
    SHL = "SHL"
    SHLI = "SHLI"
    SHR = "SHR"
    SHRI = "SHRI"
    XOR = "XOR"
    FLUSH = "FLUSH"
    TIME = "TIME"
    HALT = "HALT"


# opcode -> operand shape
#   "ri": rd, imm      "rm": rd, imm(rs0)     "rrr": rd, rs0, rs1
#   "rri": rd, rs0, imm  "m": imm(rs0)  "r": rd  "": none
SHAPES = {
    Opcode.LOADI: "ri",
    Opcode.LOAD: "rm",
    Opcode.ADD: "rrr",
    Opcode.SUB: "rrr",
    Opcode.MUL: "rrr",
    Opcode.SHL: "rrr",
    Opcode.SHR: "rrr",
    Opcode.XOR: "rrr",
    Opcode.ADDI: "rri",
    Opcode.SUBI: "rri",
    Opcode.MULI: "rri",
    Opcode.SHLI: "rri",
    Opcode.SHRI: "rri",
    Opcode.FLUSH: "m",
    Opcode.TIME: "r",
    Opcode.HALT: "",
}

WRITES_RD = frozenset(op for op, shape in SHAPES.items() if shape.startswith("r"))


@dataclass(frozen=True, slots=True)
class MicroInstruction:
    opcode: Opcode
    rd: int = 0
    rs0: int = 0
    rs1: int = 0
    imm: int = 0
    pc: int = 0

    def __str__(self) -> str:
        op = self.opcode.value.lower()
        shape = SHAPES[self.opcode]
        if shape == "ri":
            return f"{op} r{self.rd}, {self.imm:#x}"
        if shape == "rm":
            return f"{op} r{self.rd}, {self.imm}(r{self.rs0})"
        if shape == "rrr":
            return f"{op} r{self.rd}, r{self.rs0}, r{self.rs1}"
        if shape == "rri":
            return f"{op} r{self.rd}, r{self.rs0}, {self.imm}"
        if shape == "m":
            return f"{op} {self.imm}(r{self.rs0})"
        if shape == "r":
            return f"{op} r{self.rd}"
        return op


class ParseError(ValueError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


_MEM_RE = re.compile(r"^(-?(?:0x[0-9a-f]+|\d+))?\((r\d+)\)$", re.IGNORECASE)


def _parse_imm(tok: str, line_no: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise ParseError(line_no, f"bad immediate {tok!r}") from None


def _parse_reg(tok: str, line_no: int) -> int:
    if not re.fullmatch(r"[rR]\d+", tok):
        raise ParseError(line_no, f"expected register, got {tok!r}")
    n = int(tok[1:])
    if not 0 <= n < NUM_REGS:
        raise ParseError(line_no, f"register r{n} out of range 0..{NUM_REGS - 1}")
    return n


def _parse_mem(tok: str, line_no: int) -> tuple[int, int]:
    m = _MEM_RE.match(tok)
    if not m:
        raise ParseError(line_no, f"expected imm(reg), got {tok!r}")
    imm = _parse_imm(m.group(1), line_no) if m.group(1) else 0
    return imm, _parse_reg(m.group(2), line_no)


def parse_line(text: str, line_no: int, pc: int) -> MicroInstruction | None:
    text = text.split("#", 1)[0].strip()
    if not text:
        return None
    mnemonic, _, rest = text.partition(" ")
    try:
        op = Opcode(mnemonic.upper())
    except ValueError:
        raise ParseError(line_no, f"unknown mnemonic {mnemonic!r}") from None
    args = [a.strip() for a in rest.split(",")] if rest.strip() else []
    shape = SHAPES[op]
    want = {"ri": 2, "rm": 2, "rrr": 3, "rri": 3, "m": 1, "r": 1, "": 0}[shape]
    if len(args) != want:
        raise ParseError(line_no, f"{mnemonic} takes {want} operand(s), got {len(args)}")
    if shape == "ri":
        return MicroInstruction(op, rd=_parse_reg(args[0], line_no), imm=_parse_imm(args[1], line_no), pc=pc)
    if shape == "rm":
        imm, rs0 = _parse_mem(args[1], line_no)
        return MicroInstruction(op, rd=_parse_reg(args[0], line_no), rs0=rs0, imm=imm, pc=pc)
    if shape == "rrr":
        rd, rs0, rs1 = (_parse_reg(a, line_no) for a in args)
        return MicroInstruction(op, rd=rd, rs0=rs0, rs1=rs1, pc=pc)
    if shape == "rri":
        return MicroInstruction(
            op, rd=_parse_reg(args[0], line_no), rs0=_parse_reg(args[1], line_no),
            imm=_parse_imm(args[2], line_no), pc=pc,
        )
    if shape == "m":
        imm, rs0 = _parse_mem(args[0], line_no)
        return MicroInstruction(op, rs0=rs0, imm=imm, pc=pc)
    if shape == "r":
        return MicroInstruction(op, rd=_parse_reg(args[0], line_no), pc=pc)
    return MicroInstruction(op, pc=pc)


def parse_program(text: str) -> list[MicroInstruction]:
    """Decode one instruction per line; pc = 0x8000 + 8 * line index (0-based)."""
    prog = []
    for idx, line in enumerate(text.splitlines()):
        ins = parse_line(line, idx + 1, PC_BASE + PC_STEP * idx)
        if ins is not None:
            prog.append(ins)
    return prog


def format_program(prog: list[MicroInstruction]) -> str:
    return "".join(f"{ins}\n" for ins in prog)


@dataclass
class Program:
    """Instructions plus an initial data image (address -> 64-bit word)."""

    instructions: list[MicroInstruction]
    memory: dict[int, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.instructions)


# register-writing ops without side effects: (regs, ins) -> new rd value
_ALU = {
    Opcode.LOADI: lambda r, i: i.imm & MASK64,
    Opcode.ADD: lambda r, i: (r[i.rs0] + r[i.rs1]) & MASK64,
    Opcode.ADDI: lambda r, i: (r[i.rs0] + i.imm) & MASK64,
    Opcode.SUB: lambda r, i: (r[i.rs0] - r[i.rs1]) & MASK64,
    Opcode.SUBI: lambda r, i: (r[i.rs0] - i.imm) & MASK64,
    Opcode.MUL: lambda r, i: (r[i.rs0] * r[i.rs1]) & MASK64,
    Opcode.MULI: lambda r, i: (r[i.rs0] * i.imm) & MASK64,
    Opcode.SHL: lambda r, i: (r[i.rs0] << (r[i.rs1] & 63)) & MASK64,
    Opcode.SHLI: lambda r, i: (r[i.rs0] << (i.imm & 63)) & MASK64,
    Opcode.SHR: lambda r, i: r[i.rs0] >> (r[i.rs1] & 63),
    Opcode.SHRI: lambda r, i: r[i.rs0] >> (i.imm & 63),
    Opcode.XOR: lambda r, i: r[i.rs0] ^ r[i.rs1],
}


@dataclass(frozen=True, slots=True)
class StepResult:
    instr: MicroInstruction
    cycle: int  # cycle at which the instruction started
    latency: int
    hit_level: HitLevel | None = None
    value: int | None = None  # value written to rd, if any
    fault: str | None = None


class CoreState:
    def __init__(self, program: Program | list[MicroInstruction]):
        if not isinstance(program, Program):
            program = Program(list(program))
        self.program = program
        self.memory = dict(program.memory)
        self.regs = [0] * NUM_REGS
        self.cycle = 0
        self.pc_index = 0
        self.fault: str | None = None
        self.retired = 0

    @property
    def halted(self) -> bool:
        return self.fault is not None or self.pc_index >= len(self.program.instructions)

    def step(self, port) -> StepResult:
        """Execute one instruction.

        ``port`` is the memory-side hook object (see ``pipeline.Pipeline``):
        it performs demand loads and flushes and observes register writes.
        """
        if self.halted:
            raise RuntimeError("core is halted")
        ins = self.program.instructions[self.pc_index]
        self.pc_index += 1
        op = ins.opcode
        regs = self.regs
        start = self.cycle
        value = None
        level = None
        latency = 1
        if op is Opcode.LOAD:
            addr = (regs[ins.rs0] + ins.imm) & MASK64
            try:
                res = port.load(ins, addr, start)
            except MemoryFault as exc:
                self.fault = str(exc)
                self.pc_index = len(self.program.instructions)
                return StepResult(ins, start, 0, fault=self.fault)
            latency = res.latency
            level = res.hit_level
            value = self.memory.get(addr, 0)
        elif op in _ALU:
            value = _ALU[op](regs, ins)
        elif op is Opcode.TIME:
            value = start
        elif op is Opcode.FLUSH:
            addr = (regs[ins.rs0] + ins.imm) & MASK64
            try:
                port.flush(ins, addr, start)
            except MemoryFault as exc:
                self.fault = str(exc)
                self.pc_index = len(self.program.instructions)
                return StepResult(ins, start, 0, fault=self.fault)
        elif op is Opcode.HALT:
            self.pc_index = len(self.program.instructions)
        if value is not None:
            regs[ins.rd] = value
            port.reg_write(ins)
        self.cycle = start + latency
        self.retired += 1
        return StepResult(ins, start, latency, level, value)

    def run(self, port, max_steps: int | None = None) -> list[StepResult]:
        out = []
        while not self.halted and (max_steps is None or len(out) < max_steps):
            out.append(self.step(port))
        return out
