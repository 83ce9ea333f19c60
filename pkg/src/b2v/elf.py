"""Minimal 64-bit little-endian ELF reader: sections, symbols, entry point."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field


class ElfError(Exception):
    """Malformed ELF input."""


class UnsupportedArchError(ElfError):
    """Well-formed ELF for an architecture we do not lift."""


EM_X86_64 = 0x3E
SHT_NOBITS = 8
SHT_SYMTAB = 2
SHT_DYNSYM = 11
SHF_EXECINSTR = 0x4
STT_FUNC = 2


@dataclass
class Section:
    name: str
    vaddr: int
    data: bytes
    executable: bool


@dataclass
class Symbol:
    name: str
    addr: int
    is_function: bool


@dataclass
class LoadedBinary:
    entry: int
    sections: list[Section] = field(default_factory=list)
    symbols: list[Symbol] = field(default_factory=list)

    def section_at(self, addr: int) -> Section | None:
        for sec in self.sections:
            if sec.vaddr <= addr < sec.vaddr + len(sec.data):
                return sec
        return None

    def is_executable(self, addr: int) -> bool:
        sec = self.section_at(addr)
        return sec is not None and sec.executable

    def read(self, addr: int, length: int) -> bytes:
        sec = self.section_at(addr)
        if sec is None:
            return b""
        off = addr - sec.vaddr
        return sec.data[off : off + length]


def load_elf(data: bytes) -> LoadedBinary:
    """Parse an x86-64 ELF image from raw bytes.

    Raises ElfError on malformed input and UnsupportedArchError when the
    file is valid ELF but not 64-bit little-endian x86-64.
    """
    if len(data) < 64:
        raise ElfError("input shorter than an ELF header")
    if data[:4] != b"\x7fELF":
        raise ElfError("missing ELF magic")
    ei_class, ei_data = data[4], data[5]
    if ei_class != 2:
        raise UnsupportedArchError("not a 64-bit ELF (EI_CLASS != ELFCLASS64)")
    if ei_data != 1:
        raise UnsupportedArchError("not little-endian (EI_DATA != ELFDATA2LSB)")

    (e_type, e_machine, _ver, e_entry, _phoff, e_shoff, _flags, _ehsize,
     _phentsize, _phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
        "<HHIQQQIHHHHHH", data, 16
    )
    if e_machine != EM_X86_64:
        raise UnsupportedArchError(f"unsupported machine type {e_machine:#x}")
    if e_shoff == 0 or e_shnum == 0:
        raise ElfError("no section headers")
    if e_shoff + e_shnum * e_shentsize > len(data):
        raise ElfError("section header table extends past end of file")

    raw_sections = []
    for i in range(e_shnum):
        off = e_shoff + i * e_shentsize
        (sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size, sh_link,
         _info, _align, _entsize) = struct.unpack_from("<IIQQQQIIQQ", data, off)
        raw_sections.append(
            (sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size, sh_link, _entsize)
        )

    if e_shstrndx >= len(raw_sections):
        raise ElfError("bad section name string table index")
    strtab_off, strtab_size = raw_sections[e_shstrndx][4], raw_sections[e_shstrndx][5]
    shstr = data[strtab_off : strtab_off + strtab_size]

    def sec_name(name_off: int) -> str:
        end = shstr.find(b"\x00", name_off)
        if end < 0:
            return ""
        return shstr[name_off:end].decode("latin-1")

    binary = LoadedBinary(entry=e_entry)
    for sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size, _link, _ent in raw_sections:
        if sh_addr == 0 or sh_size == 0:
            continue
        if sh_type == SHT_NOBITS:
            payload = b"\x00" * sh_size
        else:
            if sh_offset + sh_size > len(data):
                raise ElfError(f"section {sec_name(sh_name)!r} extends past end of file")
            payload = data[sh_offset : sh_offset + sh_size]
        binary.sections.append(
            Section(
                name=sec_name(sh_name),
                vaddr=sh_addr,
                data=payload,
                executable=bool(sh_flags & SHF_EXECINSTR),
            )
        )
    binary.sections.sort(key=lambda s: s.vaddr)

    for idx, raw in enumerate(raw_sections):
        sh_name, sh_type, _flags, _addr, sh_offset, sh_size, sh_link, sh_entsize = raw
        if sh_type not in (SHT_SYMTAB, SHT_DYNSYM) or sh_entsize == 0:
            continue
        if sh_link >= len(raw_sections):
            continue
        str_off, str_size = raw_sections[sh_link][4], raw_sections[sh_link][5]
        names = data[str_off : str_off + str_size]
        count = sh_size // sh_entsize
        for i in range(count):
            off = sh_offset + i * sh_entsize
            if off + 24 > len(data):
                break
            st_name, st_info, _other, _shndx, st_value, _size = struct.unpack_from(
                "<IBBHQQ", data, off
            )
            if st_value == 0:
                continue
            end = names.find(b"\x00", st_name)
            name = names[st_name:end].decode("latin-1") if end >= 0 else ""
            binary.symbols.append(
                Symbol(name=name, addr=st_value, is_function=(st_info & 0xF) == STT_FUNC)
            )

    # deterministic, de-duplicated symbol order
    seen = set()
    uniq = []
    for sym in sorted(binary.symbols, key=lambda s: (s.addr, s.name)):
        key = (sym.addr, sym.name, sym.is_function)
        if key not in seen:
            seen.add(key)
            uniq.append(sym)
    binary.symbols = uniq
    return binary
