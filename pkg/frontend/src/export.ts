import { basename } from "node:path";

import { blockToDump, carveBlocks } from "./cfg.js";
import { ProgramDump, encodeDump } from "./ir.js";
import { disassemble } from "./objdump.js";

export function exportBinary(path: string,
                             label: string | number | null = null): ProgramDump {
  const listing = disassemble(path);
  const blocks = carveBlocks(listing);
  return {
    v: 1,
    binary_id: basename(path),
    arch: "x86_64",
    label,
    blocks: [...blocks.values()].map(blockToDump),
  };
}

export function exportLine(path: string,
                           label: string | number | null = null): string {
  return encodeDump(exportBinary(path, label)) + "\n";
}

export interface OpaqueAudit {
  total: number;
  opaque: number;
  mnemonics: Record<string, number>;
}

/** Count statements that fell back to Opaque, for the audit report. */
export function auditOpaque(dump: ProgramDump): OpaqueAudit {
  const audit: OpaqueAudit = { total: 0, opaque: 0, mnemonics: {} };
  for (const block of dump.blocks) {
    for (const stmt of block.stmts) {
      audit.total += 1;
      if (stmt.kind === "Opaque") {
        audit.opaque += 1;
        audit.mnemonics[stmt.mnemonic] = (audit.mnemonics[stmt.mnemonic] ?? 0) + 1;
      }
    }
  }
  return audit;
}
