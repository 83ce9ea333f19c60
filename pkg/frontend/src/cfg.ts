// Block carving over objdump's instruction stream: classic two-pass leader
// analysis, then reachability from the entry point and function symbols.

import { DumpBlock, hex } from "./ir.js";
import { isJcc, liftInsn } from "./lift.js";
import { InsnRecord, Listing } from "./objdump.js";

const TERMINATORS = new Set(["jmp", "call", "ret", "hlt", "ud2", "int3"]);

function isTerminator(insn: InsnRecord): boolean {
  return insn.bad || TERMINATORS.has(insn.mnemonic) || isJcc(insn.mnemonic);
}

export interface CarvedBlock {
  addr: number;
  insns: InsnRecord[];
  successors: number[];
}

export function carveBlocks(listing: Listing): Map<number, CarvedBlock> {
  const addrs = [...listing.insns.keys()].sort((a, b) => a - b);
  const leaders = new Set<number>();
  const seeds: number[] = [];

  const addSeed = (a: number) => {
    if (listing.insns.has(a)) {
      leaders.add(a);
      seeds.push(a);
    }
  };
  addSeed(listing.entry);
  for (const a of listing.symbols.keys()) addSeed(a);

  for (const addr of addrs) {
    const insn = listing.insns.get(addr)!;
    if (insn.target !== null && listing.insns.has(insn.target)) {
      leaders.add(insn.target);
    }
    if (isTerminator(insn) && listing.insns.has(addr + insn.length)) {
      leaders.add(addr + insn.length);
    }
  }

  const blocks = new Map<number, CarvedBlock>();
  for (const leader of [...leaders].sort((a, b) => a - b)) {
    const insns: InsnRecord[] = [];
    const successors: number[] = [];
    let pos = leader;
    for (;;) {
      const insn = listing.insns.get(pos);
      if (insn === undefined) break; // listing gap: alignment padding etc.
      insns.push(insn);
      const next = pos + insn.length;
      if (isTerminator(insn)) {
        if (isJcc(insn.mnemonic)) {
          if (insn.target !== null && listing.insns.has(insn.target)) {
            successors.push(insn.target);
          }
          if (listing.insns.has(next)) successors.push(next);
        } else if (insn.mnemonic === "jmp") {
          if (insn.target !== null && listing.insns.has(insn.target)) {
            successors.push(insn.target);
          }
        } else if (insn.mnemonic === "call") {
          if (insn.target !== null && listing.insns.has(insn.target)) {
            successors.push(insn.target);
          }
          if (listing.insns.has(next)) successors.push(next);
        }
        break;
      }
      if (leaders.has(next)) {
        successors.push(next);
        break;
      }
      if (!listing.insns.has(next)) break;
      pos = next;
    }
    if (insns.length) blocks.set(leader, { addr: leader, insns, successors });
  }

  // keep only blocks reachable from the entry point and function symbols
  const reachable = new Set<number>();
  const work = seeds.filter((s) => blocks.has(s));
  while (work.length) {
    const addr = work.pop()!;
    if (reachable.has(addr)) continue;
    reachable.add(addr);
    for (const succ of blocks.get(addr)!.successors) {
      if (blocks.has(succ) && !reachable.has(succ)) work.push(succ);
    }
  }
  const kept = new Map<number, CarvedBlock>();
  for (const addr of [...reachable].sort((a, b) => a - b)) {
    kept.set(addr, blocks.get(addr)!);
  }
  return kept;
}

export function blockToDump(block: CarvedBlock): DumpBlock {
  const temps = { next: 0 };
  const stmts = block.insns.flatMap((insn) => liftInsn(insn, temps));
  return {
    addr: hex(block.addr),
    stmts,
    successors: block.successors.map((s) => hex(s)),
  };
}
