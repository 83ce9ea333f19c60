import re
from collections import defaultdict

from b2v.graph import (
    add_source_sink,
    block_to_forest,
    build_block_dag,
    build_graph,
    connect_blocks,
    graph_to_dot,
    graph_to_json,
    prune,
    strip_ssa,
    subscript_registers,
)
from b2v.interchange import read_dump
from b2v.ir import (
    BasicBlock,
    Const,
    ConstOperand,
    GetReg,
    Op,
    PutReg,
    RdTmp,
    RegOperand,
    TempOperand,
    WrTmp,
)

SSA_SUFFIX = re.compile(r"_[0-9]+$")
FORBIDDEN = ("Iex_Const", "Iex_WrtTmp", "Iex_RdTmp")


def c32(v):
    return Const(ConstOperand(v, 32))


def eax(ssa=None):
    return RegOperand("eax", 32, ssa)


def add_put_block():
    # t0 = Add32(eax_0, 0x1) ; PutReg(eax_1, t0)
    return BasicBlock(addr=0x1000, stmts=[
        WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
        PutReg(eax(1), RdTmp(TempOperand(0, 32))),
    ])


def edge_labels(dag):
    return {(dag.labels[s], dag.labels[d]) for s, d in dag.edges}


class TestForest:
    def test_add_put_block_nodes_and_edges(self):
        forest = block_to_forest(add_put_block())
        assert sorted(forest.labels) == sorted(["eax_0", "0x1", "Add32", "t0", "Put", "eax_1"])
        assert edge_labels(forest) == {
            ("eax_0", "Add32"), ("0x1", "Add32"), ("Add32", "t0"),
            ("t0", "Put"), ("Put", "eax_1"),
        }

    def test_two_reads_share_one_node(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
            WrTmp(TempOperand(1, 32), Op("Sub32", (GetReg(eax(0)), c32(2)))),
        ])
        forest = block_to_forest(block)
        assert forest.labels.count("eax_0") == 1
        eax_node = forest.labels.index("eax_0")
        assert sum(1 for s, _ in forest.edges if s == eax_node) == 2

    def test_distinct_versions_distinct_nodes(self):
        stmts = subscript_registers([
            PutReg(eax(), c32(1)),
            PutReg(eax(), c32(2)),
        ])
        forest = block_to_forest(BasicBlock(addr=0, stmts=stmts))
        assert "eax_0" in forest.labels and "eax_1" in forest.labels

    def test_empty_block(self):
        forest = block_to_forest(BasicBlock(addr=0, stmts=[]))
        assert forest.labels == [] and forest.edges == []


class TestSourceSink:
    def test_two_disjoint_trees_one_source_one_sink(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
            WrTmp(TempOperand(1, 64), Op("Add64", (GetReg(RegOperand("rbx", 64, 0)), Const(ConstOperand(2, 64))))),
        ])
        dag = add_source_sink(block_to_forest(block))
        assert dag.labels.count("Source") == 1
        assert dag.labels.count("Sink") == 1
        # weakly connected
        adj = defaultdict(set)
        for s, d in dag.edges:
            adj[s].add(d)
            adj[d].add(s)
        seen = {0}
        stack = [0]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        assert seen == set(range(len(dag.labels)))

    def test_empty_block_degenerates_to_source_sink_edge(self):
        dag = add_source_sink(block_to_forest(BasicBlock(addr=0, stmts=[])))
        assert dag.labels == ["Source", "Sink"]
        assert dag.edges == [(0, 1)]

    def test_single_node_path(self):
        block = BasicBlock(addr=0, stmts=[])
        from b2v.ir import Opaque
        block.stmts.append(Opaque("fcos"))
        dag = add_source_sink(block_to_forest(block))
        assert edge_labels(dag) == {("Source", "fcos"), ("fcos", "Sink")}


class TestPrune:
    def test_chain_contraction(self):
        dag = add_source_sink(block_to_forest(add_put_block()))
        pruned = prune(dag)
        assert "t0" not in pruned.labels
        assert ("Add32", "Put") in edge_labels(pruned)

    def test_const_fanout_shares_node(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
            WrTmp(TempOperand(1, 32), Op("Sub32", (GetReg(eax(0)), c32(1)))),
        ])
        dag = prune(add_source_sink(block_to_forest(block)))
        assert dag.labels.count("0x1") == 1
        one = dag.labels.index("0x1")
        assert sum(1 for s, _ in dag.edges if s == one) == 2

    def test_no_temps_is_fixpoint(self):
        block = BasicBlock(addr=0, stmts=[PutReg(eax(0), c32(5))])
        dag = add_source_sink(block_to_forest(block))
        pruned = prune(dag)
        assert pruned.labels == dag.labels
        assert pruned.edges == dag.edges

    def test_dead_temp_kept(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
        ])
        pruned = prune(add_source_sink(block_to_forest(block)))
        assert "t0" in pruned.labels  # written, never read: structural use remains

    def test_live_in_temp_kept(self):
        block = BasicBlock(addr=0, stmts=[
            PutReg(eax(0), RdTmp(TempOperand(9, 32))),
        ])
        pruned = prune(add_source_sink(block_to_forest(block)))
        assert "t9" in pruned.labels

    def test_temp_chain_fully_contracts(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
            WrTmp(TempOperand(1, 32), RdTmp(TempOperand(0, 32))),
            PutReg(eax(1), RdTmp(TempOperand(1, 32))),
        ])
        pruned = prune(add_source_sink(block_to_forest(block)))
        assert "t0" not in pruned.labels and "t1" not in pruned.labels
        assert ("Add32", "Put") in edge_labels(pruned)

    def test_multi_consumer_temp_fans_out_edges(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(0, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
            PutReg(eax(1), RdTmp(TempOperand(0, 32))),
            PutReg(RegOperand("ebx", 32, 0), RdTmp(TempOperand(0, 32))),
        ])
        pruned = prune(add_source_sink(block_to_forest(block)))
        assert "t0" not in pruned.labels
        add_node = pruned.labels.index("Add32")
        put_targets = [d for s, d in pruned.edges if s == add_node]
        assert len(put_targets) == 2  # one edge per consumer


def _closure(n, edges):
    reach = [set() for _ in range(n)]
    adj = defaultdict(list)
    for s, d in edges:
        adj[s].append(d)
    for start in range(n):
        stack = [start]
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt not in reach[start]:
                    reach[start].add(nxt)
                    stack.append(nxt)
    return reach


class TestPruneReachability:
    def test_reachability_preserved_on_fixtures(self, fixture_programs):
        for name, program in fixture_programs.items():
            for block in program.cfg.blocks.values():
                full = add_source_sink(block_to_forest(
                    BasicBlock(block.addr, subscript_registers(block.stmts, program.arch),
                               block.successors)))
                pruned = prune(full)
                reach_full = _closure(len(full.labels), full.edges)
                reach_pruned = _closure(len(pruned.labels), pruned.edges)
                for new_a, old_a in enumerate(pruned.origin):
                    expected = {
                        old_b for old_b in reach_full[old_a]
                        if old_b in set(pruned.origin)
                    }
                    got = {pruned.origin[b] for b in reach_pruned[new_a]}
                    assert got == expected, f"{name} block {block.addr:#x}"


class TestStrip:
    def test_labels_stripped_topology_unchanged(self):
        dag = prune(add_source_sink(block_to_forest(add_put_block())))
        stripped = strip_ssa(dag)
        assert stripped.edges == dag.edges
        assert "eax" in stripped.labels
        assert not any(SSA_SUFFIX.search(l) for l in stripped.labels)

    def test_temps_become_bare_t(self):
        block = BasicBlock(addr=0, stmts=[
            WrTmp(TempOperand(17, 32), Op("Add32", (GetReg(eax(0)), c32(1)))),
        ])
        stripped = strip_ssa(prune(add_source_sink(block_to_forest(block))))
        assert "t" in stripped.labels

    def test_nodes_not_merged_after_relabel(self):
        stmts = subscript_registers([
            PutReg(eax(), c32(1)),
            PutReg(eax(), c32(2)),
        ])
        dag = strip_ssa(prune(add_source_sink(block_to_forest(
            BasicBlock(addr=0, stmts=stmts)))))
        assert dag.labels.count("eax") == 2


class TestSubscripting:
    def test_versions_consecutive_from_zero_property(self):
        from hypothesis import given, strategies as st

        regs = st.sampled_from(["eax", "ebx", "rcx", "rax"])

        @st.composite
        def blocks(draw):
            stmts = []
            for i in range(draw(st.integers(1, 12))):
                if draw(st.booleans()):
                    stmts.append(PutReg(RegOperand(draw(regs), 32),
                                        c32(draw(st.integers(0, 9)))))
                else:
                    stmts.append(WrTmp(TempOperand(i, 32),
                                       GetReg(RegOperand(draw(regs), 32))))
            return stmts

        @given(blocks())
        def check(stmts):
            from b2v.x86 import BASE_OF

            renamed = subscript_registers(stmts)
            seen: dict[str, list[int]] = {}

            def record(reg):
                group = BASE_OF.get(reg.name, reg.name)
                seq = seen.setdefault(group, [])
                if not seq or reg.ssa_index != seq[-1]:
                    seq.append(reg.ssa_index)

            for stmt in renamed:
                if isinstance(stmt, WrTmp) and isinstance(stmt.rhs, GetReg):
                    record(stmt.rhs.reg)
                elif isinstance(stmt, PutReg):
                    record(stmt.dst)
            for group, seq in seen.items():
                # versions appear in order, consecutively, starting at zero
                assert seq == sorted(set(seq)), (group, seq)
                assert seq == list(range(len(seq))), (group, seq)

        check()

    def test_reads_before_write_share_version_zero(self):
        stmts = subscript_registers([
            WrTmp(TempOperand(0, 32), GetReg(RegOperand("eax", 32))),
            WrTmp(TempOperand(1, 32), GetReg(RegOperand("eax", 32))),
            PutReg(RegOperand("eax", 32), RdTmp(TempOperand(0, 32))),
            WrTmp(TempOperand(2, 32), GetReg(RegOperand("eax", 32))),
        ])
        assert stmts[0].rhs.reg.ssa_index == 0
        assert stmts[1].rhs.reg.ssa_index == 0
        assert stmts[2].dst.ssa_index == 1
        assert stmts[3].rhs.reg.ssa_index == 1

    def test_aliased_subregisters_share_counter(self):
        stmts = subscript_registers([
            PutReg(RegOperand("eax", 32), c32(1)),
            WrTmp(TempOperand(0, 64), GetReg(RegOperand("rax", 64))),
        ])
        assert stmts[0].dst.ssa_index == 0
        assert stmts[1].rhs.reg.ssa_index == 0
        stmts2 = subscript_registers([
            PutReg(RegOperand("eax", 32), c32(1)),
            PutReg(RegOperand("rax", 64), Const(ConstOperand(2, 64))),
        ])
        assert stmts2[1].dst.ssa_index == 1


class TestProgramGraph:
    def test_fig1_fixture_topology(self, fixture_dumps):
        program = read_dump(fixture_dumps["fig1"])[0]
        graph = build_graph(program)
        labels = graph.labels()
        assert labels.count("Source") == 3
        assert labels.count("Sink") == 3
        expected = set()
        for src, dst in ((0x1000, 0x2000), (0x1000, 0x3000), (0x2000, 0x3000)):
            expected.add((graph.block_spans[src][1], graph.block_spans[dst][0]))
        spans = set(graph.block_spans.values())
        inter = {
            (s, d) for s, d in graph.edges
            if any(s == sink for _, sink in spans) and any(d == src for src, _ in spans)
        }
        assert inter == expected

    def test_loop_edge_between_blocks_allowed(self, fixture_dumps):
        program = read_dump(fixture_dumps["edgecases"])[0]
        graph = build_graph(program)
        sink_20 = graph.block_spans[0x20][1]
        source_10 = graph.block_spans[0x10][0]
        assert (sink_20, source_10) in graph.edges

    def test_missing_successor_counted_dropped(self, fixture_dumps):
        program = read_dump(fixture_dumps["edgecases"])[0]
        graph = build_graph(program)
        assert graph.dropped_edges == 1  # 0x99 does not exist

    def test_no_duplicate_edges_no_self_loops(self, fixture_programs):
        for program in fixture_programs.values():
            graph = build_graph(program)
            assert len(graph.edges) == len(set(graph.edges))
            assert all(s != d for s, d in graph.edges)

    def test_per_block_unique_source_sink_and_acyclic(self, fixture_programs):
        for name, program in fixture_programs.items():
            graph = build_graph(program)
            spans = graph.block_spans
            intra = defaultdict(list)
            node_block = {}
            for addr, (src, snk) in spans.items():
                hi = snk
                lo = src
                for nid in range(lo, hi + 1):
                    node_block[nid] = addr
            inter = {(s, d) for s, d in graph.edges
                     if node_block[s] != node_block[d]}
            for s, d in graph.edges:
                if (s, d) not in inter:
                    intra[node_block[s]].append((s, d))
            for addr, (src, snk) in spans.items():
                edges = intra[addr]
                nodes = [n for n, b in node_block.items() if b == addr]
                indeg = {n: 0 for n in nodes}
                outdeg = {n: 0 for n in nodes}
                for s, d in edges:
                    outdeg[s] += 1
                    indeg[d] += 1
                roots = [n for n in nodes if indeg[n] == 0]
                leaves = [n for n in nodes if outdeg[n] == 0]
                assert roots == [src], f"{name}:{addr:#x}"
                assert leaves == [snk], f"{name}:{addr:#x}"
                # acyclicity by DFS
                color = {n: 0 for n in nodes}
                adj = defaultdict(list)
                for s, d in edges:
                    adj[s].append(d)

                def acyclic(node):
                    color[node] = 1
                    for nxt in adj[node]:
                        if color[nxt] == 1:
                            return False
                        if color[nxt] == 0 and not acyclic(nxt):
                            return False
                    color[node] = 2
                    return True

                assert all(acyclic(n) for n in nodes if color[n] == 0)

    def test_label_hygiene(self, fixture_programs):
        for name, program in fixture_programs.items():
            graph = build_graph(program)
            for label in graph.labels():
                assert not SSA_SUFFIX.search(label), (name, label)
                assert label not in FORBIDDEN, (name, label)

    def test_label_closure_by_node_kind(self, fixture_programs):
        from b2v.ir import OPCODE_TABLE
        from b2v.x86 import BASE_OF

        hexish = re.compile(r"0x[0-9a-f]+$")
        for name, program in fixture_programs.items():
            graph = build_graph(program)
            for (nid, label), kind in zip(graph.nodes, graph.kinds):
                if kind == "source":
                    assert label == "Source"
                elif kind == "sink":
                    assert label == "Sink"
                elif kind == "temp":
                    assert label == "t"
                elif kind == "const":
                    assert hexish.fullmatch(label), (name, label)
                elif kind == "reg":
                    assert label in BASE_OF, (name, label)
                elif kind == "op":
                    assert label in OPCODE_TABLE or label == "Load", (name, label)
                elif kind == "stmt":
                    assert label in ("Put", "Store", "Exit"), (name, label)
                else:
                    assert kind == "opaque", (name, kind)

    def test_ssa_freshness_before_strip(self, fixture_programs):
        # no two register definitions in one block share a node
        for program in fixture_programs.values():
            for block in program.cfg.blocks.values():
                dag = build_block_dag(block, program.arch, do_strip=False)
                put_targets = [
                    d for s, d in dag.edges
                    if dag.labels[s] == "Put" and dag.kinds[s] == "stmt"
                ]
                assert len(put_targets) == len(set(put_targets))

    def test_serialization_deterministic(self, fixture_binaries, fixture_dumps):
        from b2v.graph import build_program_graph

        for path in list(fixture_binaries.values()) + list(fixture_dumps.values()):
            a = graph_to_json(build_program_graph(path))
            b = graph_to_json(build_program_graph(path))
            assert a == b

    def test_lift_and_dump_paths_agree(self, fixture_binaries, tmp_path):
        from b2v.graph import build_program_graph
        from b2v.interchange import write_dump
        from b2v.lifter import lift_binary

        path = fixture_binaries["branching"]
        program = lift_binary(path.read_bytes(), binary_id="branching")
        dump = tmp_path / "branching.b2v.jsonl"
        write_dump(program, dump)
        assert graph_to_json(build_program_graph(path)) == \
            graph_to_json(build_program_graph(dump))

    def test_dot_output_shape(self, fixture_dumps):
        graph = build_graph(read_dump(fixture_dumps["minimal"])[0])
        dot = graph_to_dot(graph)
        assert dot.startswith("digraph")
        assert dot.count("->") == len(graph.edges)
