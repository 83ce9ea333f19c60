"""Recursive-descent CFG recovery and instruction-to-micro-IR lifting.

Each decoded instruction is spilled into explicit statements over
single-assignment temporaries: register reads land in temporaries,
arithmetic happens on temporaries and inline constants, and writes become
PutReg/Store statements. Conditional branches become Exit statements whose
guard is a 1-bit comparison temporary; the comparison is recovered by
fusing the most recent flag-setting instruction in the block with the
branch condition. When no flag producer is visible in the block, the guard
degrades to a test of the rflags pseudo-register.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import x86
from .elf import LoadedBinary
from .ir import (
    BasicBlock,
    Const,
    ConstOperand,
    Exit,
    GetReg,
    IMark,
    Load,
    MicroExpr,
    MicroStmt,
    Op,
    Opaque,
    PutReg,
    RdTmp,
    RegOperand,
    Store,
    TempOperand,
    WrTmp,
)

JCC = frozenset("j" + s for s in x86.CC_SUFFIX)
SETCC = frozenset("set" + s for s in x86.CC_SUFFIX)
CMOVCC = frozenset("cmov" + s for s in x86.CC_SUFFIX)

# instructions that leave the block's pending comparison intact
_FLAG_TRANSPARENT = frozenset(
    ("mov", "movzx", "movsx", "movsxd", "lea", "push", "pop", "leave",
     "cdqe", "cwde", "cdq", "cqo", "nop", "endbr64", "endbr32", "pause")
) | JCC | SETCC | CMOVCC

_BINOP_NAME = {"add": "Add", "sub": "Sub", "and": "And", "or": "Or", "xor": "Xor"}
_SHIFT_NAME = {"shl": "Shl", "shr": "Shr", "sar": "Sar"}


@dataclass
class LiftContext:
    """Per-block lifting state: temp allocation plus pending flag source."""

    next_tmp: int = 0
    # (lhs expr, rhs expr, width) mimicking a `cmp lhs, rhs`
    pending_cmp: tuple[MicroExpr, MicroExpr, int] | None = None

    def tmp(self, width: int) -> TempOperand:
        t = TempOperand(self.next_tmp, width)
        self.next_tmp += 1
        return t


class _Emitter:
    def __init__(self, ctx: LiftContext):
        self.ctx = ctx
        self.stmts: list[MicroStmt] = []

    def emit(self, stmt: MicroStmt):
        self.stmts.append(stmt)

    def spill(self, expr: MicroExpr, width: int) -> RdTmp:
        t = self.ctx.tmp(width)
        self.emit(WrTmp(t, expr))
        return RdTmp(t)

    def reg(self, base: str, width: int) -> RegOperand:
        return RegOperand(x86.reg_name(base, width), width)

    def read_reg(self, base: str, width: int) -> RdTmp:
        return self.spill(GetReg(self.reg(base, width)), width)

    def const(self, value: int, width: int) -> Const:
        return Const(ConstOperand(value & ((1 << width) - 1), width))

    def add_disp(self, expr: MicroExpr, disp: int) -> MicroExpr:
        if disp == 0:
            return expr
        if disp > 0:
            return self.spill(Op("Add64", (expr, self.const(disp, 64))), 64)
        return self.spill(Op("Sub64", (expr, self.const(-disp, 64))), 64)

    def mem_addr(self, mem: x86.Mem, insn: x86.Insn) -> MicroExpr:
        if mem.rip_relative:
            return self.const(insn.addr + insn.length + mem.disp, 64)
        expr: MicroExpr | None = None
        if mem.base is not None:
            expr = self.read_reg(mem.base, 64)
        if mem.index is not None:
            idx: MicroExpr = self.read_reg(mem.index, 64)
            if mem.scale > 1:
                shift = self.const(mem.scale.bit_length() - 1, 8)
                idx = self.spill(Op("Shl64", (idx, shift)), 64)
            expr = idx if expr is None else self.spill(Op("Add64", (expr, idx)), 64)
        if expr is None:
            return self.const(mem.disp, 64)
        return self.add_disp(expr, mem.disp)

    def load(self, addr: MicroExpr, width: int) -> RdTmp:
        return self.spill(Load(addr, width), width)

    def read_operand(self, op, insn: x86.Insn) -> MicroExpr:
        kind = op[0]
        if kind == "reg":
            return self.read_reg(op[1], op[2])
        if kind == "imm":
            return self.const(op[1], op[2])
        if kind == "mem":
            return self.load(self.mem_addr(op[1], insn), op[2])
        raise ValueError(f"cannot read operand {op!r}")

    def write_reg(self, base: str, width: int, value: MicroExpr):
        self.emit(PutReg(self.reg(base, width), value))

    def write_operand(self, op, value: MicroExpr, insn: x86.Insn):
        kind = op[0]
        if kind == "reg":
            self.write_reg(op[1], op[2], value)
        elif kind == "mem":
            self.emit(Store(self.mem_addr(op[1], insn), value))
        else:
            raise ValueError(f"cannot write operand {op!r}")


def _guard_expr(cc: str, pending, em: _Emitter) -> MicroExpr:
    """1-bit expression for a condition code given the pending comparison."""
    if pending is not None:
        lhs, rhs, w = pending
        table = {
            "e": ("CmpEQ", lhs, rhs), "ne": ("CmpNE", lhs, rhs),
            "l": ("CmpLTS", lhs, rhs), "ge": ("CmpLES", rhs, lhs),
            "le": ("CmpLES", lhs, rhs), "g": ("CmpLTS", rhs, lhs),
            "b": ("CmpLTU", lhs, rhs), "ae": ("CmpLEU", rhs, lhs),
            "be": ("CmpLEU", lhs, rhs), "a": ("CmpLTU", rhs, lhs),
            "s": ("CmpLTS", lhs, rhs), "ns": ("CmpLES", rhs, lhs),
        }
        if cc in table:
            name, a, b = table[cc]
            return Op(f"{name}{w}", (a, b))
    # flag state not recoverable from this block
    flags = em.read_reg("rflags", 64)
    return Op("CmpNE64", (flags, em.const(0, 64)))


def lift_instruction(insn: x86.Insn, ctx: LiftContext | None = None) -> list[MicroStmt]:
    """Lift one decoded instruction into an IMark-led statement list."""
    ctx = ctx if ctx is not None else LiftContext()
    em = _Emitter(ctx)
    em.emit(IMark(insn.addr, insn.length))
    mnem = insn.mnemonic
    w = insn.width
    ops = insn.operands

    def set_pending(lhs, rhs, width):
        ctx.pending_cmp = (lhs, rhs, width)

    if mnem in ("nop", "endbr64", "endbr32", "pause"):
        pass

    elif mnem == "mov":
        dst, src = ops
        if src[0] == "imm":
            em.write_operand(dst, em.const(src[1], src[2]), insn)
        elif src[0] == "reg" and dst[0] == "mem":
            em.emit(Store(em.mem_addr(dst[1], insn), GetReg(em.reg(src[1], src[2]))))
        else:
            em.write_operand(dst, em.read_operand(src, insn), insn)

    elif mnem in ("movzx", "movsx", "movsxd"):
        dst, src = ops
        src_w = src[2]
        val = em.read_operand(src, insn)
        conv = "Uto" if mnem == "movzx" else "Sto"
        widened = em.spill(Op(f"{src_w}{conv}{dst[2]}", (val,)), dst[2])
        em.write_reg(dst[1], dst[2], widened)

    elif mnem == "lea":
        dst, src = ops
        addr = em.mem_addr(src[1], insn)
        if dst[2] != 64:
            addr = em.spill(Op(f"64to{dst[2]}", (addr,)), dst[2])
        em.write_reg(dst[1], dst[2], addr)

    elif mnem in _BINOP_NAME:
        dst, src = ops
        if dst[0] == "mem":
            addr = em.mem_addr(dst[1], insn)
            a: MicroExpr = em.load(addr, w)
        else:
            addr = None
            a = em.read_reg(dst[1], dst[2])
        b = em.read_operand(src, insn)
        res = em.spill(Op(f"{_BINOP_NAME[mnem]}{w}", (a, b)), w)
        if addr is not None:
            em.emit(Store(addr, res))
        else:
            em.write_reg(dst[1], dst[2], res)
        if mnem == "sub":
            set_pending(a, b, w)
        else:
            set_pending(res, em.const(0, w), w)

    elif mnem == "cmp":
        a = em.read_operand(ops[0], insn)
        b = em.read_operand(ops[1], insn)
        set_pending(a, b, w)

    elif mnem == "test":
        a = em.read_operand(ops[0], insn)
        b = em.read_operand(ops[1], insn)
        masked = em.spill(Op(f"And{w}", (a, b)), w)
        set_pending(masked, em.const(0, w), w)

    elif mnem in _SHIFT_NAME:
        dst, amount = ops
        if dst[0] == "mem":
            addr = em.mem_addr(dst[1], insn)
            a = em.load(addr, w)
        else:
            addr = None
            a = em.read_reg(dst[1], dst[2])
        amt = em.read_operand(amount, insn)
        res = em.spill(Op(f"{_SHIFT_NAME[mnem]}{w}", (a, amt)), w)
        if addr is not None:
            em.emit(Store(addr, res))
        else:
            em.write_reg(dst[1], dst[2], res)
        set_pending(res, em.const(0, w), w)

    elif mnem in ("inc", "dec"):
        dst = ops[0]
        opname = "Add" if mnem == "inc" else "Sub"
        if dst[0] == "mem":
            addr = em.mem_addr(dst[1], insn)
            a = em.load(addr, w)
        else:
            addr = None
            a = em.read_reg(dst[1], dst[2])
        res = em.spill(Op(f"{opname}{w}", (a, em.const(1, w))), w)
        if addr is not None:
            em.emit(Store(addr, res))
        else:
            em.write_reg(dst[1], dst[2], res)
        set_pending(res, em.const(0, w), w)

    elif mnem in ("neg", "not"):
        dst = ops[0]
        opname = "Neg" if mnem == "neg" else "Not"
        if dst[0] == "mem":
            addr = em.mem_addr(dst[1], insn)
            a = em.load(addr, w)
        else:
            addr = None
            a = em.read_reg(dst[1], dst[2])
        res = em.spill(Op(f"{opname}{w}", (a,)), w)
        if addr is not None:
            em.emit(Store(addr, res))
        else:
            em.write_reg(dst[1], dst[2], res)
        if mnem == "neg":
            set_pending(res, em.const(0, w), w)

    elif mnem == "imul":
        if len(ops) == 1:  # rdx:rax = rax * r/m; only the low half is modeled
            a = em.read_reg("rax", w)
            b = em.read_operand(ops[0], insn)
            res = em.spill(Op(f"Mul{w}", (a, b)), w)
            em.write_reg("rax", w, res)
        elif len(ops) == 2:
            a = em.read_reg(ops[0][1], ops[0][2])
            b = em.read_operand(ops[1], insn)
            res = em.spill(Op(f"Mul{w}", (a, b)), w)
            em.write_reg(ops[0][1], ops[0][2], res)
        else:
            a = em.read_operand(ops[1], insn)
            b = em.const(ops[2][1], w)
            res = em.spill(Op(f"Mul{w}", (a, b)), w)
            em.write_reg(ops[0][1], ops[0][2], res)
        set_pending(res, em.const(0, w), w)

    elif mnem == "mul":
        a = em.read_reg("rax", w)
        b = em.read_operand(ops[0], insn)
        res = em.spill(Op(f"Mul{w}", (a, b)), w)
        em.write_reg("rax", w, res)
        ctx.pending_cmp = None

    elif mnem in ("div", "idiv"):
        if w == 8:
            em.emit(Opaque(f"{mnem}8"))
            ctx.pending_cmp = None
        else:
            # dividend approximated by rax; the rdx high half is sign/zero
            # fill at -O0 and carries no extra information
            signed = mnem == "idiv"
            a = em.read_reg("rax", w)
            b = em.read_operand(ops[0], insn)
            quot = em.spill(Op(f"Div{'S' if signed else 'U'}{w}", (a, b)), w)
            rem = em.spill(Op(f"Mod{'S' if signed else 'U'}{w}", (a, b)), w)
            em.write_reg("rax", w, quot)
            em.write_reg("rdx", w, rem)
            ctx.pending_cmp = None

    elif mnem == "push":
        src = ops[0]
        rsp = em.read_reg("rsp", 64)
        new_sp = em.spill(Op("Sub64", (rsp, em.const(8, 64))), 64)
        em.write_reg("rsp", 64, new_sp)
        if src[0] == "reg":
            em.emit(Store(new_sp, GetReg(em.reg(src[1], 64))))
        else:
            em.emit(Store(new_sp, em.read_operand(src, insn)))

    elif mnem == "pop":
        dst = ops[0]
        rsp = em.read_reg("rsp", 64)
        val = em.load(rsp, 64)
        em.write_reg("rsp", 64, em.spill(Op("Add64", (rsp, em.const(8, 64))), 64))
        em.write_operand(dst, val, insn)

    elif mnem == "leave":
        rbp = em.read_reg("rbp", 64)
        em.write_reg("rsp", 64, rbp)
        val = em.load(rbp, 64)
        em.write_reg("rsp", 64, em.spill(Op("Add64", (rbp, em.const(8, 64))), 64))
        em.write_reg("rbp", 64, val)

    elif mnem == "cdqe":
        em.write_reg("rax", 64, em.spill(Op("32Sto64", (em.read_reg("rax", 32),)), 64))
    elif mnem == "cwde":
        em.write_reg("rax", 32, em.spill(Op("16Sto32", (em.read_reg("rax", 16),)), 32))
    elif mnem == "cdq":
        res = em.spill(Op("Sar32", (em.read_reg("rax", 32), em.const(31, 8))), 32)
        em.write_reg("rdx", 32, res)
    elif mnem == "cqo":
        res = em.spill(Op("Sar64", (em.read_reg("rax", 64), em.const(63, 8))), 64)
        em.write_reg("rdx", 64, res)

    elif mnem in SETCC:
        guard = em.spill(_guard_expr(mnem[3:], ctx.pending_cmp, em), 1)
        em.write_operand(ops[0], em.spill(Op("1Uto8", (guard,)), 8), insn)

    elif mnem in JCC:
        guard = em.spill(_guard_expr(mnem[1:], ctx.pending_cmp, em), 1)
        em.emit(Exit(guard, ops[0][1]))

    elif mnem == "call":
        if ops and ops[0][0] != "rel":
            em.read_operand(ops[0], insn)  # materialize the indirect target
        rsp = em.read_reg("rsp", 64)
        new_sp = em.spill(Op("Sub64", (rsp, em.const(8, 64))), 64)
        em.write_reg("rsp", 64, new_sp)
        em.emit(Store(new_sp, em.const(insn.addr + insn.length, 64)))
        ctx.pending_cmp = None

    elif mnem == "ret":
        rsp = em.read_reg("rsp", 64)
        em.load(rsp, 64)
        em.write_reg("rsp", 64, em.spill(Op("Add64", (rsp, em.const(8, 64))), 64))

    elif mnem == "jmp":
        if ops and ops[0][0] != "rel":
            em.read_operand(ops[0], insn)  # materialize the indirect target

    else:
        em.emit(Opaque(insn.mnemonic))
        ctx.pending_cmp = None

    return em.stmts


# ---------------------------------------------------------------------------
# CFG recovery


@dataclass
class Cfg:
    blocks: dict[int, BasicBlock] = field(default_factory=dict)
    entries: list[int] = field(default_factory=list)
    unresolved: list[int] = field(default_factory=list)  # indirect-flow sites
    external: list[int] = field(default_factory=list)  # dropped callee targets


@dataclass
class Program:
    """A lifted (or dump-loaded) binary plus its classification metadata."""

    binary_id: str
    arch: str
    cfg: Cfg
    label: object | None = None


_BLOCK_ENDERS = frozenset(("jmp", "call", "ret", "hlt", "ud2", "int3", "int")) | JCC


def _disassemble(binary: LoadedBinary, addr: int,
                 known_starts) -> tuple[BasicBlock, int | None]:
    """One block plus the site address of an unresolved indirect transfer."""
    block = BasicBlock(addr=addr)
    ctx = LiftContext()
    sec = binary.section_at(addr)
    if sec is None or not sec.executable:
        block.stmts.append(Opaque("bad:unmapped"))
        block.end = addr
        return block, None
    pos = addr
    limit = sec.vaddr + len(sec.data)
    while True:
        if pos >= limit:
            block.stmts.append(Opaque("bad:eof"))
            block.end = pos
            return block, None
        try:
            insn = x86.decode(sec.data, pos - sec.vaddr, pos)
        except x86.DecodeError:
            block.stmts.append(Opaque(f"bad:{sec.data[pos - sec.vaddr]:#04x}"))
            block.end = pos
            return block, None

        nxt = pos + insn.length
        boundary = next((s for s in known_starts if pos < s < nxt), None)
        if boundary is not None:
            # instruction straddles a known block start; stop short
            block.successors = [(boundary, "fallthrough")]
            block.end = pos
            return block, None

        block.stmts.extend(lift_instruction(insn, ctx))
        mnem = insn.mnemonic

        if mnem in _BLOCK_ENDERS:
            block.end = nxt
            indirect = None
            if mnem in JCC:
                block.successors = [(insn.operands[0][1], "branch_taken"),
                                    (nxt, "fallthrough")]
            elif mnem == "jmp":
                if insn.operands[0][0] == "rel":
                    block.successors = [(insn.operands[0][1], "jump")]
                else:
                    indirect = pos
            elif mnem == "call":
                if insn.operands[0][0] == "rel":
                    block.successors = [(insn.operands[0][1], "call"),
                                        (nxt, "fallthrough")]
                else:
                    block.successors = [(nxt, "fallthrough")]
                    indirect = pos
            # ret/hlt/ud2/int*: no static successors
            return block, indirect

        if nxt in known_starts:
            block.successors = [(nxt, "fallthrough")]
            block.end = nxt
            return block, None
        pos = nxt


def disassemble_block(binary: LoadedBinary, addr: int,
                      known_starts: frozenset[int] | set[int] = frozenset()) -> BasicBlock:
    """Decode and lift one basic block starting at addr.

    Decoding stops at the first control-flow instruction, at a previously
    seen block start, or at undecodable bytes (which leave an opaque
    terminator and no successors).
    """
    return _disassemble(binary, addr, known_starts)[0]


def _split_block(cfg: Cfg, addr: int) -> bool:
    """Split the block containing addr at that instruction boundary."""
    for start, block in cfg.blocks.items():
        if block.end is None or not (start < addr < block.end):
            continue
        for i, stmt in enumerate(block.stmts):
            if isinstance(stmt, IMark) and stmt.addr == addr:
                tail = BasicBlock(addr=addr, stmts=block.stmts[i:],
                                  successors=block.successors, end=block.end)
                block.stmts = block.stmts[:i]
                block.successors = [(addr, "fallthrough")]
                block.end = addr
                cfg.blocks[addr] = tail
                return True
        return False  # not on an instruction boundary
    return False


def build_cfg(binary: LoadedBinary) -> Cfg:
    """Recursive descent over all function seeds until fixpoint."""
    cfg = Cfg()
    seeds = [binary.entry] + sorted(
        {s.addr for s in binary.symbols if s.is_function and binary.is_executable(s.addr)}
    )
    entries = []
    for s in seeds:
        if binary.is_executable(s) and s not in entries:
            entries.append(s)

    unresolved: set[int] = set()
    external: set[int] = set()
    worklist: deque[int] = deque(entries)
    queued = set(entries)

    while worklist:
        addr = worklist.popleft()
        if addr in cfg.blocks:
            continue
        inside = any(
            b.end is not None and start < addr < b.end
            for start, b in cfg.blocks.items()
        )
        if inside:
            if not _split_block(cfg, addr):
                unresolved.add(addr)
            continue

        block, indirect = _disassemble(binary, addr, set(cfg.blocks))
        cfg.blocks[addr] = block
        if indirect is not None:
            unresolved.add(indirect)

        kept = []
        for succ, kind in block.successors:
            if binary.is_executable(succ):
                kept.append((succ, kind))
                if kind == "call" and succ not in entries:
                    entries.append(succ)
                if succ not in cfg.blocks and succ not in queued:
                    worklist.append(succ)
                    queued.add(succ)
            else:
                external.add(succ)
        block.successors = kept

    cfg.entries = sorted(entries)
    cfg.unresolved = sorted(unresolved)
    cfg.external = sorted(external)
    return cfg


def discover_functions(binary: LoadedBinary) -> list[int]:
    """Entry point, function symbols, and direct call targets found by descent."""
    return build_cfg(binary).entries


def lift_binary(data: bytes, binary_id: str, label=None) -> Program:
    from .elf import load_elf

    binary = load_elf(data)
    return Program(binary_id=binary_id, arch="x86_64", cfg=build_cfg(binary), label=label)
