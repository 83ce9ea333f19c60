// Thin wrappers over GNU binutils: readelf for the header, objdump for the
// decoded instruction stream. Parsing targets the Intel-syntax listing of
// binutils 2.3x; continuation lines (raw bytes of long instructions) fold
// into the preceding record.

import { execFileSync } from "node:child_process";

export interface InsnRecord {
  addr: number;
  length: number;
  mnemonic: string;      // prefixes folded away ("bnd jmp" -> "jmp")
  operands: string;      // raw operand text, comment stripped
  target: number | null; // direct branch/call target when present
  bad: boolean;
}

export interface Listing {
  entry: number;
  machine: string;
  elfClass: string;
  symbols: Map<number, string>;   // label addresses from section listings
  insns: Map<number, InsnRecord>;
}

export class ToolchainError extends Error {}

function run(cmd: string, args: string[]): string {
  try {
    return execFileSync(cmd, args, { encoding: "utf-8", maxBuffer: 1 << 28 });
  } catch (err: any) {
    const stderr = err?.stderr ? String(err.stderr) : String(err);
    throw new ToolchainError(`${cmd} ${args.join(" ")} failed: ${stderr.trim()}`);
  }
}

export function readHeader(path: string): { entry: number; machine: string; elfClass: string } {
  const text = run("readelf", ["-h", path]);
  const entry = /Entry point address:\s+0x([0-9a-f]+)/i.exec(text);
  const machine = /Machine:\s+(.+)/.exec(text);
  const elfClass = /Class:\s+(\S+)/.exec(text);
  if (!entry || !machine || !elfClass) {
    throw new ToolchainError(`unparseable readelf output for ${path}`);
  }
  return {
    entry: parseInt(entry[1], 16),
    machine: machine[1].trim(),
    elfClass: elfClass[1].trim(),
  };
}

const SYMBOL_LINE = /^([0-9a-f]+) <([^>]+)>:$/;
const INSN_LINE = /^\s+([0-9a-f]+):\t([0-9a-f ]+?)(?:\t(.*))?$/;
const TARGET = /^([0-9a-f]+) <[^>]*>/;
const PREFIXES = new Set(["bnd", "lock", "rep", "repz", "repnz", "data16", "cs", "ds", "notrack"]);

export function parseListing(text: string): Omit<Listing, "entry" | "machine" | "elfClass"> {
  const symbols = new Map<number, string>();
  const insns = new Map<number, InsnRecord>();
  let current: InsnRecord | null = null;

  for (const raw of text.split("\n")) {
    const line = raw.trimEnd();
    const sym = SYMBOL_LINE.exec(line);
    if (sym) {
      symbols.set(parseInt(sym[1], 16), sym[2]);
      current = null;
      continue;
    }
    const m = INSN_LINE.exec(line);
    if (!m) {
      if (line === "" || line.startsWith("Disassembly") || line.endsWith(":")) current = null;
      continue;
    }
    const addr = parseInt(m[1], 16);
    const byteCount = m[2].trim().split(/\s+/).filter(Boolean).length;
    const text3 = (m[3] ?? "").trim();
    if (text3 === "") {
      // continuation line: more bytes of the previous instruction
      if (current && current.addr + current.length === addr) current.length += byteCount;
      continue;
    }

    let body = text3;
    const comment = body.indexOf("#");
    let commentText = "";
    if (comment >= 0) {
      commentText = body.slice(comment + 1).trim();
      body = body.slice(0, comment).trim();
    }
    const bad = body.includes("(bad)") || body.startsWith(".byte");
    let mnemonic = "";
    let operands = "";
    if (!bad) {
      const words = body.split(/\s+/);
      let i = 0;
      while (i < words.length - 1 && PREFIXES.has(words[i])) i++;
      mnemonic = words[i] ?? "";
      operands = words.slice(i + 1).join(" ");
    }
    let target: number | null = null;
    const direct = TARGET.exec(operands);
    if (direct && !operands.includes("[")) target = parseInt(direct[1], 16);

    current = { addr, length: byteCount, mnemonic, operands, target, bad };
    insns.set(addr, current);
  }
  return { symbols, insns };
}

export function disassemble(path: string): Listing {
  const header = readHeader(path);
  if (header.elfClass !== "ELF64" || !/X86-64/i.test(header.machine)) {
    throw new ToolchainError(
      `unsupported architecture: ${header.elfClass} ${header.machine}`);
  }
  const text = run("objdump", ["-d", "-M", "intel", path]);
  const { symbols, insns } = parseListing(text);
  return { ...header, symbols, insns };
}
