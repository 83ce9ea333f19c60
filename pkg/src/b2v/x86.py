"""Table-driven x86-64 instruction decoder for the lifted subset.

Covers the integer ALU/data-movement/control-flow instructions emitted by C
compilers at -O0, plus enough extras (endbr64, setcc, cmovcc, string ops,
syscall) that ordinary crt/startup code decodes with correct lengths.
Anything else raises DecodeError, which callers turn into an opaque block
terminator.

Sub-registers are canonicalized to their 64-bit name with an access width,
so `eax` decodes as ("reg", "rax", 32). High-byte registers (ah..bh) fold
into the same name at width 8.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class DecodeError(Exception):
    pass


R64 = ("rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
       "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15")

CC_SUFFIX = ("o", "no", "b", "ae", "e", "ne", "be", "a",
             "s", "ns", "p", "np", "l", "ge", "le", "g")

_GRP1 = ("add", "or", "adc", "sbb", "and", "sub", "xor", "cmp")
_GRP2 = ("rol", "ror", "rcl", "rcr", "shl", "shr", "sal", "sar")
_GRP3 = ("test", "test", "not", "neg", "mul", "imul", "div", "idiv")

_LEGACY_PREFIXES = frozenset((0x66, 0x67, 0xF0, 0xF2, 0xF3,
                              0x2E, 0x3E, 0x26, 0x64, 0x65, 0x36))

_X87_NAMES = {
    (0xD9, 0xFF): "fcos", (0xD9, 0xFE): "fsin", (0xD9, 0xFA): "fsqrt",
    (0xD9, 0xE0): "fchs", (0xD9, 0xE1): "fabs", (0xD9, 0xF0): "f2xm1",
    (0xD9, 0xE8): "fld1", (0xD9, 0xEE): "fldz",
}


@dataclass(frozen=True)
class Mem:
    base: str | None = None
    index: str | None = None
    scale: int = 1
    disp: int = 0
    rip_relative: bool = False


# operand encodings: ("reg", name, width) | ("imm", signed_value, width)
# | ("mem", Mem, width) | ("rel", absolute_target)
Operand = tuple


@dataclass
class Insn:
    addr: int
    length: int
    mnemonic: str
    operands: tuple[Operand, ...] = ()
    width: int = 32
    rep: bool = False


class _Cursor:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("ran off end of code")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def peek(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("ran off end of code")
        return self.data[self.pos]

    def bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("ran off end of code")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def s8(self) -> int:
        return int.from_bytes(self.bytes(1), "little", signed=True)

    def s16(self) -> int:
        return int.from_bytes(self.bytes(2), "little", signed=True)

    def s32(self) -> int:
        return int.from_bytes(self.bytes(4), "little", signed=True)

    def s64(self) -> int:
        return int.from_bytes(self.bytes(8), "little", signed=True)


def _reg(field_val: int, width: int) -> Operand:
    return ("reg", R64[field_val & 0xF], width)


def _simm(cur: _Cursor, width: int) -> int:
    if width == 8:
        return cur.s8()
    if width == 16:
        return cur.s16()
    return cur.s32()


class _Decoder:
    def __init__(self, data: bytes, offset: int, addr: int):
        self.cur = _Cursor(data, offset)
        self.start = offset
        self.addr = addr
        self.opsize16 = False
        self.rep = False
        self.repne = False
        self.rex = 0

    # -- prefix and field helpers -----------------------------------------

    def _prefixes(self):
        while True:
            b = self.cur.peek()
            if b in _LEGACY_PREFIXES:
                self.cur.u8()
                if b == 0x66:
                    self.opsize16 = True
                elif b == 0xF3:
                    self.rep = True
                elif b == 0xF2:
                    self.repne = True
                continue
            if 0x40 <= b <= 0x4F:
                self.rex = self.cur.u8()
                # REX must immediately precede the opcode
                if self.cur.peek() in _LEGACY_PREFIXES:
                    raise DecodeError("legacy prefix after REX")
            break

    @property
    def rex_w(self) -> bool:
        return bool(self.rex & 0x8)

    def opwidth(self) -> int:
        if self.rex_w:
            return 64
        if self.opsize16:
            return 16
        return 32

    def _modrm(self, width: int) -> tuple[int, Operand]:
        """Returns (reg field, r/m operand)."""
        modrm = self.cur.u8()
        mod = modrm >> 6
        reg = ((modrm >> 3) & 7) | ((self.rex & 0x4) << 1)
        rm = modrm & 7
        if mod == 3:
            return reg, _reg(rm | ((self.rex & 0x1) << 3), width)

        base = index = None
        scale = 1
        disp = 0
        rip_rel = False
        if rm == 4:
            sib = self.cur.u8()
            ss = sib >> 6
            idx = ((sib >> 3) & 7) | ((self.rex & 0x2) << 2)
            bse = (sib & 7) | ((self.rex & 0x1) << 3)
            if idx != 4:  # rsp can never be an index
                index = R64[idx]
                scale = 1 << ss
            if (sib & 7) == 5 and mod == 0:
                disp = self.cur.s32()
            else:
                base = R64[bse]
        elif rm == 5 and mod == 0:
            rip_rel = True
            disp = self.cur.s32()
        else:
            base = R64[rm | ((self.rex & 0x1) << 3)]

        if mod == 1:
            disp += self.cur.s8()
        elif mod == 2:
            disp += self.cur.s32()
        return reg, ("mem", Mem(base, index, scale, disp, rip_rel), width)

    def _insn(self, mnemonic: str, operands=(), width=None) -> Insn:
        length = self.cur.pos - self.start
        if length > 15:
            raise DecodeError("instruction longer than 15 bytes")
        return Insn(self.addr, length, mnemonic,
                    tuple(operands), width or self.opwidth(), rep=self.rep)

    def _rel_target(self, rel: int) -> int:
        length = self.cur.pos - self.start
        return (self.addr + length + rel) & 0xFFFFFFFFFFFFFFFF

    # -- opcode dispatch ---------------------------------------------------

    def decode(self) -> Insn:
        self._prefixes()
        op = self.cur.u8()

        if op == 0x0F:
            return self._decode_0f()

        # ALU ops in the classic 00..3D pattern
        if op < 0x40 and (op & 7) < 6 and not op & 0x40:
            family = _GRP1[op >> 3]
            variant = op & 7
            if variant in (0, 1):  # r/m, r
                width = 8 if variant == 0 else self.opwidth()
                reg, rm = self._modrm(width)
                return self._insn(family, (rm, _reg(reg, width)), width)
            if variant in (2, 3):  # r, r/m
                width = 8 if variant == 2 else self.opwidth()
                reg, rm = self._modrm(width)
                return self._insn(family, (_reg(reg, width), rm), width)
            if variant in (4, 5):  # al/ax/eax/rax, imm
                width = 8 if variant == 4 else self.opwidth()
                imm = _simm(self.cur, min(width, 32))
                return self._insn(family, (_reg(0, width), ("imm", imm, width)), width)

        if 0x50 <= op <= 0x57:
            return self._insn("push", (_reg((op & 7) | ((self.rex & 1) << 3), 64),), 64)
        if 0x58 <= op <= 0x5F:
            return self._insn("pop", (_reg((op & 7) | ((self.rex & 1) << 3), 64),), 64)

        if op == 0x63:  # movsxd r64, r/m32
            reg, rm = self._modrm(32)
            return self._insn("movsxd", (_reg(reg, 64), rm), 64)

        if op == 0x68:
            imm = self.cur.s32()
            return self._insn("push", (("imm", imm, 64),), 64)
        if op == 0x6A:
            imm = self.cur.s8()
            return self._insn("push", (("imm", imm, 64),), 64)

        if op in (0x69, 0x6B):  # imul r, r/m, imm
            width = self.opwidth()
            reg, rm = self._modrm(width)
            imm = self.cur.s8() if op == 0x6B else _simm(self.cur, min(width, 32))
            return self._insn("imul", (_reg(reg, width), rm, ("imm", imm, width)), width)

        if 0x70 <= op <= 0x7F:
            rel = self.cur.s8()
            return self._insn("j" + CC_SUFFIX[op & 0xF], (("rel", self._rel_target(rel)),), 64)

        if op in (0x80, 0x81, 0x83):
            width = 8 if op == 0x80 else self.opwidth()
            reg, rm = self._modrm(width)
            imm = self.cur.s8() if op in (0x80, 0x83) else _simm(self.cur, min(width, 32))
            return self._insn(_GRP1[reg & 7], (rm, ("imm", imm, width)), width)

        if op in (0x84, 0x85):  # test r/m, r
            width = 8 if op == 0x84 else self.opwidth()
            reg, rm = self._modrm(width)
            return self._insn("test", (rm, _reg(reg, width)), width)

        if op in (0x86, 0x87):
            width = 8 if op == 0x86 else self.opwidth()
            reg, rm = self._modrm(width)
            return self._insn("xchg", (rm, _reg(reg, width)), width)

        if op in (0x88, 0x89, 0x8A, 0x8B):
            width = 8 if op in (0x88, 0x8A) else self.opwidth()
            reg, rm = self._modrm(width)
            if op in (0x88, 0x89):
                return self._insn("mov", (rm, _reg(reg, width)), width)
            return self._insn("mov", (_reg(reg, width), rm), width)

        if op == 0x8D:
            width = self.opwidth()
            reg, rm = self._modrm(width)
            if rm[0] != "mem":
                raise DecodeError("lea with register source")
            return self._insn("lea", (_reg(reg, width), rm), width)

        if op == 0x8F:
            _, rm = self._modrm(64)
            return self._insn("pop", (rm,), 64)

        if op == 0x90:
            if self.rep:  # pause
                return self._insn("pause", (), 64)
            return self._insn("nop", (), 64)

        if op == 0x98:
            return self._insn("cdqe" if self.rex_w else "cwde", (), self.opwidth())
        if op == 0x99:
            return self._insn("cqo" if self.rex_w else "cdq", (), self.opwidth())

        if op in (0xA8, 0xA9):  # test al/eax, imm
            width = 8 if op == 0xA8 else self.opwidth()
            imm = _simm(self.cur, min(width, 32))
            return self._insn("test", (_reg(0, width), ("imm", imm, width)), width)

        if 0xB0 <= op <= 0xB7:
            imm = self.cur.s8()
            return self._insn("mov", (_reg((op & 7) | ((self.rex & 1) << 3), 8),
                              ("imm", imm, 8)), 8)
        if 0xB8 <= op <= 0xBF:
            width = self.opwidth()
            imm = self.cur.s64() if width == 64 else _simm(self.cur, width)
            return self._insn("mov", (_reg((op & 7) | ((self.rex & 1) << 3), width),
                              ("imm", imm, width)), width)

        if op in (0xC0, 0xC1, 0xD0, 0xD1, 0xD2, 0xD3):
            width = 8 if op in (0xC0, 0xD0, 0xD2) else self.opwidth()
            reg, rm = self._modrm(width)
            mnem = _GRP2[reg & 7]
            if mnem == "sal":
                mnem = "shl"
            if op in (0xC0, 0xC1):
                amount: Operand = ("imm", self.cur.u8(), 8)
            elif op in (0xD0, 0xD1):
                amount = ("imm", 1, 8)
            else:
                amount = ("reg", "rcx", 8)
            return self._insn(mnem, (rm, amount), width)

        if op == 0xC2:
            self.cur.bytes(2)
            return self._insn("ret", (), 64)
        if op == 0xC3:
            return self._insn("ret", (), 64)

        if op in (0xC6, 0xC7):
            width = 8 if op == 0xC6 else self.opwidth()
            reg, rm = self._modrm(width)
            if (reg & 7) != 0:
                raise DecodeError(f"unsupported group 11 op {reg & 7}")
            imm = _simm(self.cur, min(width, 32))
            return self._insn("mov", (rm, ("imm", imm, width)), width)

        if op == 0xC9:
            return self._insn("leave", (), 64)
        if op == 0xCC:
            return self._insn("int3", (), 64)
        if op == 0xCD:
            self.cur.u8()
            return self._insn("int", (), 64)

        if op == 0xE8:
            rel = self.cur.s32()
            return self._insn("call", (("rel", self._rel_target(rel)),), 64)
        if op == 0xE9:
            rel = self.cur.s32()
            return self._insn("jmp", (("rel", self._rel_target(rel)),), 64)
        if op == 0xEB:
            rel = self.cur.s8()
            return self._insn("jmp", (("rel", self._rel_target(rel)),), 64)

        if op == 0xF4:
            return self._insn("hlt", (), 64)

        if op in (0xF6, 0xF7):
            width = 8 if op == 0xF6 else self.opwidth()
            reg, rm = self._modrm(width)
            mnem = _GRP3[reg & 7]
            if mnem == "test":
                imm = _simm(self.cur, min(width, 32))
                return self._insn("test", (rm, ("imm", imm, width)), width)
            return self._insn(mnem, (rm,), width)

        if op == 0xFE:
            reg, rm = self._modrm(8)
            if (reg & 7) == 0:
                return self._insn("inc", (rm,), 8)
            if (reg & 7) == 1:
                return self._insn("dec", (rm,), 8)
            raise DecodeError("unsupported group 4 op")

        if op == 0xFF:
            width = self.opwidth()
            reg, rm = self._modrm(width)
            sel = reg & 7
            if sel == 0:
                return self._insn("inc", (rm,), width)
            if sel == 1:
                return self._insn("dec", (rm,), width)
            # call/jmp/push through r/m are 64-bit regardless of REX.W
            rm64 = (rm[0], rm[1], 64)
            if sel == 2:
                return self._insn("call", (rm64,), 64)
            if sel == 4:
                return self._insn("jmp", (rm64,), 64)
            if sel == 6:
                return self._insn("push", (rm64,), 64)
            raise DecodeError(f"unsupported group 5 op {sel}")

        # x87 escapes: generic ModRM decode for length, names for a few
        if 0xD8 <= op <= 0xDF:
            modrm = self.cur.peek()
            if modrm >= 0xC0:
                self.cur.u8()
                mnem = _X87_NAMES.get((op, modrm), f"x87+{op - 0xD8}")
            else:
                self._modrm(self.opwidth())
                mnem = f"x87m+{op - 0xD8}"
            return self._insn(mnem, (), 64)

        # one-byte string ops; semantics are opaque but lengths matter
        if op in (0xA4, 0xA5, 0xAA, 0xAB, 0xAC, 0xAD, 0xA6, 0xA7, 0xAE, 0xAF):
            names = {0xA4: "movsb", 0xA5: "movs", 0xAA: "stosb", 0xAB: "stos",
                     0xAC: "lodsb", 0xAD: "lods", 0xA6: "cmpsb", 0xA7: "cmps",
                     0xAE: "scasb", 0xAF: "scas"}
            mnem = names[op]
            if self.rep or self.repne:
                mnem = ("rep " if self.rep else "repnz ") + mnem
            return self._insn(mnem, (), self.opwidth())

        raise DecodeError(f"unsupported opcode {op:#04x}")

    def _decode_0f(self) -> Insn:
        op = self.cur.u8()

        if op == 0x05:
            return self._insn("syscall", (), 64)
        if op == 0x0B:
            return self._insn("ud2", (), 64)
        if op == 0x1E and self.rep:
            sub = self.cur.u8()
            if sub == 0xFA:
                return self._insn("endbr64", (), 64)
            if sub == 0xFB:
                return self._insn("endbr32", (), 64)
            raise DecodeError(f"unsupported f3 0f 1e {sub:#04x}")
        if op == 0x1F:  # multi-byte nop
            self._modrm(self.opwidth())
            return self._insn("nop", (), 64)
        if op == 0x31:
            return self._insn("rdtsc", (), 64)
        if op == 0xA2:
            return self._insn("cpuid", (), 64)

        if 0x40 <= op <= 0x4F:
            width = self.opwidth()
            reg, rm = self._modrm(width)
            return self._insn("cmov" + CC_SUFFIX[op & 0xF], (_reg(reg, width), rm), width)

        if 0x80 <= op <= 0x8F:
            rel = self.cur.s32()
            return self._insn("j" + CC_SUFFIX[op & 0xF], (("rel", self._rel_target(rel)),), 64)

        if 0x90 <= op <= 0x9F:
            _, rm = self._modrm(8)
            return self._insn("set" + CC_SUFFIX[op & 0xF], (rm,), 8)

        if op == 0xAF:
            width = self.opwidth()
            reg, rm = self._modrm(width)
            return self._insn("imul", (_reg(reg, width), rm), width)

        if op in (0xB6, 0xB7, 0xBE, 0xBF):
            src_width = 8 if op in (0xB6, 0xBE) else 16
            width = self.opwidth()
            reg, rm = self._modrm(src_width)
            mnem = "movzx" if op in (0xB6, 0xB7) else "movsx"
            return self._insn(mnem, (_reg(reg, width), rm), width)

        raise DecodeError(f"unsupported opcode 0f {op:#04x}")


def decode(data: bytes, offset: int, addr: int) -> Insn:
    """Decode one instruction at data[offset:], located at virtual `addr`."""
    return _Decoder(data, offset, addr).decode()


def _subregs(base: str, d: str, w: str, b: str) -> dict[int, str]:
    return {64: base, 32: d, 16: w, 8: b}


SUBREG: dict[str, dict[int, str]] = {
    "rax": _subregs("rax", "eax", "ax", "al"),
    "rcx": _subregs("rcx", "ecx", "cx", "cl"),
    "rdx": _subregs("rdx", "edx", "dx", "dl"),
    "rbx": _subregs("rbx", "ebx", "bx", "bl"),
    "rsp": _subregs("rsp", "esp", "sp", "spl"),
    "rbp": _subregs("rbp", "ebp", "bp", "bpl"),
    "rsi": _subregs("rsi", "esi", "si", "sil"),
    "rdi": _subregs("rdi", "edi", "di", "dil"),
    "rip": {64: "rip"},
    "rflags": {64: "rflags"},
}
for _n in range(8, 16):
    _r = f"r{_n}"
    SUBREG[_r] = _subregs(_r, f"{_r}d", f"{_r}w", f"{_r}b")

# width-specific name -> canonical 64-bit register
BASE_OF: dict[str, str] = {
    name: base for base, by_width in SUBREG.items() for name in by_width.values()
}


def reg_name(base: str, width: int) -> str:
    """Architectural name for a width-limited access to a 64-bit register."""
    try:
        return SUBREG[base][width]
    except KeyError:
        raise DecodeError(f"no {width}-bit name for {base}") from None
