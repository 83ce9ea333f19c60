"""Program graphs: per-block computational DAGs wired along the CFG.

Pipeline per binary:

  lift or load dump
    -> per-block register renaming (versioned subscripts, eax_0, eax_1, ...)
    -> per-block computational forest (argument -> instruction edges,
       operand nodes shared within the block by rendered label)
    -> Source/Sink completion (single-source, single-sink DAG per block)
    -> pruning of temporary plumbing (producer -> t -> consumer becomes
       producer -> consumer; temps without both sides stay)
    -> SSA suffix removal from labels (topology untouched)
    -> inter-block edges Sink(A) -> Source(B) for every CFG edge A -> B

Node order and edge order are deterministic functions of the input, so the
serialized graph is byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import x86
from .ir import (
    BasicBlock,
    Const,
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
    WrTmp,
    render,
)
from .lifter import Program

SOURCE_LABEL = "Source"
SINK_LABEL = "Sink"


# ---------------------------------------------------------------------------
# Register renaming


def _group_fn(arch: str):
    if arch == "x86_64":
        return lambda name: x86.BASE_OF.get(name, name)
    return lambda name: name


def subscript_registers(stmts: list[MicroStmt], arch: str = "x86_64") -> list[MicroStmt]:
    """Attach per-block version subscripts to every register operand.

    A register group's first mention gets version 0; every redefinition
    bumps the version, so no two definitions of one register share a node
    downstream. Aliased sub-registers (eax, rax) share one counter.
    """
    group_of = _group_fn(arch)
    counters: dict[str, int] = {}

    def read(reg: RegOperand) -> RegOperand:
        g = group_of(reg.name)
        counters.setdefault(g, 0)
        return RegOperand(reg.name, reg.width, counters[g])

    def write(reg: RegOperand) -> RegOperand:
        g = group_of(reg.name)
        if g in counters:
            counters[g] += 1
        else:
            counters[g] = 0
        return RegOperand(reg.name, reg.width, counters[g])

    def walk(expr: MicroExpr) -> MicroExpr:
        if isinstance(expr, GetReg):
            return GetReg(read(expr.reg))
        if isinstance(expr, Op):
            return Op(expr.opcode, tuple(walk(a) for a in expr.args))
        if isinstance(expr, Load):
            return Load(walk(expr.addr), expr.width)
        return expr

    out: list[MicroStmt] = []
    for stmt in stmts:
        if isinstance(stmt, WrTmp):
            out.append(WrTmp(stmt.dst, walk(stmt.rhs)))
        elif isinstance(stmt, PutReg):
            rhs = walk(stmt.rhs)  # reads before the write takes effect
            out.append(PutReg(write(stmt.dst), rhs))
        elif isinstance(stmt, Store):
            out.append(Store(walk(stmt.addr), walk(stmt.data)))
        elif isinstance(stmt, Exit):
            out.append(Exit(walk(stmt.guard), stmt.target))
        else:
            out.append(stmt)
    return out


# ---------------------------------------------------------------------------
# Per-block DAGs


@dataclass
class BlockDag:
    labels: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)  # const/reg/temp/op/stmt/opaque/source/sink
    edges: list[tuple[int, int]] = field(default_factory=list)
    source: int | None = None
    sink: int | None = None
    # node index before pruning, for provenance checks
    origin: list[int] = field(default_factory=list)

    def add_node(self, label: str, kind: str) -> int:
        self.labels.append(label)
        self.kinds.append(kind)
        self.origin.append(len(self.labels) - 1)
        return len(self.labels) - 1

    def add_edge(self, src: int, dst: int):
        if src == dst:
            return
        if (src, dst) not in self._edge_set:
            self._edge_set.add((src, dst))
            self.edges.append((src, dst))

    def __post_init__(self):
        self._edge_set = set(self.edges)
        if not self.origin:
            self.origin = list(range(len(self.labels)))

    def copy(self) -> "BlockDag":
        return BlockDag(list(self.labels), list(self.kinds), list(self.edges),
                        self.source, self.sink, list(self.origin))


def block_to_forest(block: BasicBlock) -> BlockDag:
    """Computational forest of one renamed block.

    Operand nodes (constants, register versions, temporaries) are shared
    within the block by rendered label; every operation/statement occurrence
    gets its own node with edges from its arguments, and definition edges
    point from the defining node to the defined operand.
    """
    dag = BlockDag()
    operand_ids: dict[str, int] = {}

    def operand(label: str, kind: str) -> int:
        if label not in operand_ids:
            operand_ids[label] = dag.add_node(label, kind)
        return operand_ids[label]

    def expr_node(expr: MicroExpr) -> int:
        if isinstance(expr, Const):
            return operand(expr.const.render(), "const")
        if isinstance(expr, RdTmp):
            return operand(expr.tmp.render(), "temp")
        if isinstance(expr, GetReg):
            return operand(expr.reg.render(), "reg")
        if isinstance(expr, Op):
            node = dag.add_node(expr.opcode, "op")
            for arg in expr.args:
                dag.add_edge(expr_node(arg), node)
            return node
        if isinstance(expr, Load):
            node = dag.add_node("Load", "op")
            dag.add_edge(expr_node(expr.addr), node)
            return node
        raise TypeError(f"not an expression: {expr!r}")

    for stmt in block.stmts:
        if isinstance(stmt, WrTmp):
            rhs = expr_node(stmt.rhs)
            dag.add_edge(rhs, operand(stmt.dst.render(), "temp"))
        elif isinstance(stmt, PutReg):
            rhs = expr_node(stmt.rhs)
            put = dag.add_node("Put", "stmt")
            dag.add_edge(rhs, put)
            dag.add_edge(put, operand(stmt.dst.render(), "reg"))
        elif isinstance(stmt, Store):
            node = dag.add_node("Store", "stmt")
            dag.add_edge(expr_node(stmt.addr), node)
            dag.add_edge(expr_node(stmt.data), node)
        elif isinstance(stmt, Exit):
            node = dag.add_node("Exit", "stmt")
            dag.add_edge(expr_node(stmt.guard), node)
            dag.add_edge(operand(f"{stmt.target:#x}", "const"), node)
        elif isinstance(stmt, IMark):
            continue
        elif isinstance(stmt, Opaque):
            dag.add_node(stmt.mnemonic, "opaque")
        else:
            raise TypeError(f"not a statement: {stmt!r}")
    return dag


def add_source_sink(forest: BlockDag) -> BlockDag:
    """Single Source feeding all roots, single Sink absorbing all leaves."""
    dag = forest.copy()
    n = len(dag.labels)
    indeg = [0] * n
    outdeg = [0] * n
    for s, d in dag.edges:
        outdeg[s] += 1
        indeg[d] += 1
    source = dag.add_node(SOURCE_LABEL, "source")
    sink = dag.add_node(SINK_LABEL, "sink")
    dag.source, dag.sink = source, sink
    if n == 0:
        dag.add_edge(source, sink)
        return dag
    for i in range(n):
        if indeg[i] == 0:
            dag.add_edge(source, i)
        if outdeg[i] == 0:
            dag.add_edge(i, sink)
    return dag


def prune(dag: BlockDag) -> BlockDag:
    """Contract temporary-variable plumbing.

    Any temp with both a producer and at least one consumer is replaced by
    direct producer -> consumer edges for all consumers; temps missing one
    side (live-in reads, dead writes) keep their node. Reachability between
    all surviving nodes is preserved.
    """
    labels = list(dag.labels)
    kinds = list(dag.kinds)
    ins: list[list[int]] = [[] for _ in labels]
    outs: list[list[int]] = [[] for _ in labels]
    edge_seen = set(dag.edges)
    order = {e: i for i, e in enumerate(dag.edges)}
    next_order = len(order)
    for s, d in dag.edges:
        outs[s].append(d)
        ins[d].append(s)

    alive = [True] * len(labels)
    changed = True
    while changed:
        changed = False
        for node, kind in enumerate(kinds):
            if kind != "temp" or not alive[node]:
                continue
            producers = [p for p in ins[node] if alive[p] and kinds[p] != "source"]
            consumers = [c for c in outs[node] if alive[c] and kinds[c] != "sink"]
            if not producers or not consumers:
                continue
            alive[node] = False
            changed = True
            for p in producers:
                for c in consumers:
                    if p == c or (p, c) in edge_seen:
                        continue
                    edge_seen.add((p, c))
                    order[(p, c)] = next_order
                    next_order += 1
                    outs[p].append(c)
                    ins[c].append(p)

    remap: dict[int, int] = {}
    out = BlockDag()
    for i, (label, kind) in enumerate(zip(labels, kinds)):
        if alive[i]:
            new = out.add_node(label, kind)
            out.origin[new] = dag.origin[i]
            remap[i] = new
    kept = [
        (s, d) for (s, d) in sorted(order, key=order.get)
        if alive[s] and alive[d]
    ]
    for s, d in kept:
        out.add_edge(remap[s], remap[d])
    out.source = remap.get(dag.source) if dag.source is not None else None
    out.sink = remap.get(dag.sink) if dag.sink is not None else None
    return out


def strip_ssa(dag: BlockDag) -> BlockDag:
    """Drop version subscripts from labels; node identity is unchanged."""
    out = dag.copy()
    for i, kind in enumerate(out.kinds):
        if kind == "reg":
            base, _, suffix = out.labels[i].rpartition("_")
            if base and suffix.isdigit():
                out.labels[i] = base
        elif kind == "temp":
            out.labels[i] = "t"
    return out


# ---------------------------------------------------------------------------
# Whole-program assembly


@dataclass
class ProgramGraph:
    nodes: list[tuple[int, str]] = field(default_factory=list)  # (id, label)
    edges: list[tuple[int, int]] = field(default_factory=list)
    block_spans: dict[int, tuple[int, int]] = field(default_factory=dict)
    kinds: list[str] = field(default_factory=list)
    dropped_edges: int = 0

    @property
    def n(self) -> int:
        return len(self.nodes)

    def labels(self) -> list[str]:
        return [label for _, label in self.nodes]


def build_block_dag(block: BasicBlock, arch: str = "x86_64",
                    do_prune: bool = True, do_strip: bool = True) -> BlockDag:
    stmts = subscript_registers(block.stmts, arch)
    renamed = BasicBlock(addr=block.addr, stmts=stmts, successors=block.successors)
    dag = add_source_sink(block_to_forest(renamed))
    if do_prune:
        dag = prune(dag)
    if do_strip:
        dag = strip_ssa(dag)
    return dag


def connect_blocks(cfg_blocks: dict[int, BasicBlock],
                   dags: dict[int, BlockDag]) -> ProgramGraph:
    graph = ProgramGraph()
    offsets: dict[int, dict[int, int]] = {}
    for addr in sorted(dags):
        dag = dags[addr]
        remap: dict[int, int] = {}
        ordered = [dag.source] + [
            i for i in range(len(dag.labels)) if i not in (dag.source, dag.sink)
        ] + [dag.sink]
        for local in ordered:
            nid = len(graph.nodes)
            graph.nodes.append((nid, dag.labels[local]))
            graph.kinds.append(dag.kinds[local])
            remap[local] = nid
        for s, d in dag.edges:
            graph.edges.append((remap[s], remap[d]))
        offsets[addr] = remap
        graph.block_spans[addr] = (remap[dag.source], remap[dag.sink])

    seen = set()
    for addr in sorted(dags):
        for succ, _kind in cfg_blocks[addr].successors:
            if succ not in graph.block_spans:
                graph.dropped_edges += 1
                continue
            edge = (graph.block_spans[addr][1], graph.block_spans[succ][0])
            if edge not in seen:
                seen.add(edge)
                graph.edges.append(edge)
    return graph


def build_graph(program: Program) -> ProgramGraph:
    dags = {
        addr: build_block_dag(block, program.arch)
        for addr, block in sorted(program.cfg.blocks.items())
    }
    return connect_blocks(program.cfg.blocks, dags)


def build_program_graph(path) -> ProgramGraph:
    """ELF file or .b2v.jsonl dump to a finished program graph."""
    return build_graph(load_program(path))


def load_program(path) -> Program:
    import os

    from .interchange import read_dump
    from .lifter import lift_binary

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"\x7fELF":
        with open(path, "rb") as fh:
            return lift_binary(fh.read(), binary_id=os.path.basename(str(path)))
    programs = read_dump(path)
    if len(programs) != 1:
        raise ValueError(f"{path}: expected exactly one program, found {len(programs)}")
    return programs[0]


# ---------------------------------------------------------------------------
# Serialization


def graph_to_json(graph: ProgramGraph) -> str:
    obj = {
        "nodes": [{"id": nid, "label": label} for nid, label in graph.nodes],
        "edges": [[s, d] for s, d in graph.edges],
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def _dot_escape(label: str) -> str:
    return label.replace("\\", "\\\\").replace('"', '\\"')


def graph_to_dot(graph: ProgramGraph) -> str:
    lines = ["digraph program {"]
    for nid, label in graph.nodes:
        lines.append(f'  n{nid} [label="{_dot_escape(label)}"];')
    for s, d in graph.edges:
        lines.append(f"  n{s} -> n{d};")
    lines.append("}")
    return "\n".join(lines) + "\n"
