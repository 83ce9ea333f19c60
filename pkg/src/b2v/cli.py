"""Command-line surface: lift, graph, validate, corpus-make, train, sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_UNSUPPORTED = 3


def _parse_layers(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _load_config(args) -> "TrainConfig":
    from .train import TrainConfig

    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
        if "layer_sizes" in base:
            base["layer_sizes"] = tuple(base["layer_sizes"])
    config = TrainConfig(**base)
    overrides = {
        "layers": "layer_sizes", "lr": "learning_rate", "seed": "seed",
        "runs": "runs", "epochs": "max_epochs", "patience": "patience",
        "min_count": "min_count", "batch_size": "batch_size",
        "optimizer": "optimizer", "adjacency": "adjacency", "jobs": "jobs",
    }
    for flag, attr in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    return config


def _cmd_lift(args) -> int:
    from .elf import ElfError, UnsupportedArchError
    from .interchange import FILE_SUFFIX, write_dump
    from .lifter import lift_binary

    try:
        data = Path(args.input).read_bytes()
        program = lift_binary(data, binary_id=Path(args.input).name)
    except UnsupportedArchError as exc:
        print(f"error: unsupported architecture: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ElfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = args.output or (args.input + FILE_SUFFIX)
    write_dump(program, out)
    if args.unresolved_report:
        with open(args.unresolved_report, "w") as fh:
            for addr in program.cfg.unresolved:
                fh.write(f"{addr:#x}\n")
    print(f"wrote {out} ({len(program.cfg.blocks)} blocks, "
          f"{len(program.cfg.unresolved)} unresolved sites)")
    return EXIT_OK


def _cmd_graph(args) -> int:
    from .elf import ElfError, UnsupportedArchError
    from .graph import build_graph, graph_to_dot, graph_to_json, load_program
    from .interchange import DumpFormatError

    try:
        graph = build_graph(load_program(args.input))
    except UnsupportedArchError as exc:
        print(f"error: unsupported architecture: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ElfError, DumpFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    text = graph_to_dot(graph) if args.format == "dot" else graph_to_json(graph)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .interchange import validate_dump

    violations = validate_dump(args.input)
    for v in violations:
        print(v)
    print(f"{len(violations)} violation(s)")
    return EXIT_OK if not violations else EXIT_ERROR


def _cmd_corpus_make(args) -> int:
    from .corpus import FAMILIES, make_corpus

    families = args.families.split(",") if args.families else None
    if families:
        unknown = [f for f in families if f not in FAMILIES]
        if unknown:
            print(f"error: unknown families {unknown}", file=sys.stderr)
            return EXIT_ERROR
    manifest = make_corpus(args.out, families=families, variants=args.variants,
                           seed=args.seed, jobs=args.jobs or 1)
    print(f"wrote {manifest}")
    return EXIT_OK


def _result_table(report: dict) -> str:
    """Plain-text results table with the baseline-substitution footer."""
    lines = []
    if report.get("task") == "per_group_binary":
        lines.append(f"{'group':<12} {'mean':>7} {'std':>7}  per-run accuracies")
        for group, res in sorted(report["groups"].items()):
            accs = " ".join(f"{a:.3f}" for a in res["accuracies"])
            lines.append(f"{group:<12} {res['mean_accuracy']:>7.4f} "
                         f"{res['std_accuracy']:>7.4f}  {accs}")
    else:
        rows = [("graph model", report["result"])]
        if "baseline" in report:
            rows.append(("line-bag baseline", report["baseline"]["result"]))
        lines.append(f"{'model':<18} {'mean':>7} {'std':>7}  per-run accuracies")
        for name, res in rows:
            accs = " ".join(f"{a:.3f}" for a in res["accuracies"])
            lines.append(f"{name:<18} {res['mean_accuracy']:>7.4f} "
                         f"{res['std_accuracy']:>7.4f}  {accs}")
    lines.append("note: the baseline classifier is a linear softmax "
                 "standing in for a kernel SVM")
    return "\n".join(lines)


def _cmd_train(args) -> int:
    from .baseline import run_bow_experiment
    from .train import read_manifest, run_experiment

    config = _load_config(args)
    manifest = read_manifest(args.manifest)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "effective-config.json").write_text(
            json.dumps(config.to_dict(), indent=2))
    report = run_experiment(manifest, config, out_dir)
    if args.baseline:
        report["baseline"] = run_bow_experiment(manifest, config)
    table = _result_table(report)
    if out_dir:
        (out_dir / "experiment.json").write_text(json.dumps(report, indent=2))
        (out_dir / "results.txt").write_text(table + "\n")
    if args.log_format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(table)
    return EXIT_OK


def _cmd_eval(args) -> int:
    from . import gcn
    from .features import load_vocab, featurize
    from .graph import build_graph, load_program
    from .train import read_manifest

    run_dir = Path(args.run_dir)
    model, header = gcn.load_checkpoint(run_dir / "model.ckpt")
    vocab = load_vocab(run_dir / "vocab.txt")
    classes = json.loads((run_dir / "results.json").read_text())["classes"]
    manifest = read_manifest(args.manifest)
    correct = 0
    for entry in manifest.entries:
        graph = build_graph(load_program(entry.path))
        feats = featurize(graph, vocab)
        adj = gcn.normalize_adjacency(graph.edges, graph.n, model.config.adjacency)
        batch = gcn.batch_graphs([feats], [adj], [0])
        _, probs = gcn.forward(model, batch)
        pred = classes[int(np.argmax(probs[0]))]
        correct += pred == entry.label
    total = len(manifest.entries)
    print(f"accuracy: {correct}/{total} = {correct / total:.4f}" if total else "empty manifest")
    return EXIT_OK


def _cmd_predict(args) -> int:
    from . import gcn
    from .features import load_vocab, featurize
    from .graph import build_graph, load_program

    run_dir = Path(args.run_dir)
    model, _ = gcn.load_checkpoint(run_dir / "model.ckpt")
    vocab = load_vocab(run_dir / "vocab.txt")
    classes = json.loads((run_dir / "results.json").read_text())["classes"]
    graph = build_graph(load_program(args.input))
    feats = featurize(graph, vocab)
    adj = gcn.normalize_adjacency(graph.edges, graph.n, model.config.adjacency)
    batch = gcn.batch_graphs([feats], [adj], [0])
    _, probs = gcn.forward(model, batch)
    ranked = np.argsort(probs[0])[::-1][: args.top]
    for idx in ranked:
        print(f"{classes[int(idx)]}\t{probs[0][int(idx)]:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .train import read_manifest, sweep

    config = _load_config(args)
    manifest = read_manifest(args.manifest)
    depths = range(args.min_depth, args.max_depth + 1)
    widths = tuple(int(w) for w in args.widths.split(","))
    rows = sweep(manifest, config, depths=depths, widths=widths,
                 sweep_epochs=args.sweep_epochs)
    text = json.dumps(rows, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(f"{'kind':<6} {'value':>5} {'val_acc':>8} {'s/100':>8}")
    for row in rows:
        print(f"{row['kind']:<6} {row['value']:>5} "
              f"{row['val_accuracy']:>8.4f} {row['seconds_per_100']:>8.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="b2v",
                                     description="binary program graphs and classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="lift an ELF binary to a .b2v.jsonl dump")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--unresolved-report")
    p.set_defaults(fn=_cmd_lift)

    p = sub.add_parser("graph", help="emit the program graph for a binary or dump")
    p.add_argument("input")
    p.add_argument("--format", choices=("dot", "json"), default="json")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=_cmd_graph)

    p = sub.add_parser("validate", help="validate a dump file against the schema")
    p.add_argument("input")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("corpus-make", help="generate and compile the C corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--families")
    p.add_argument("--variants", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=_cmd_corpus_make)

    def add_train_flags(p):
        p.add_argument("--config")
        p.add_argument("--layers", type=_parse_layers)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--min-count", dest="min_count", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--optimizer", choices=("adam", "sgd"))
        p.add_argument("--adjacency", choices=("symmetric", "row"))
        p.add_argument("--jobs", type=int)

    p = sub.add_parser("train", help="run the multi-seed experiment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--baseline", action="store_true",
                   help="also run the bag-of-words baseline on identical splits")
    p.add_argument("--log-format", choices=("text", "json"), default="text")
    add_train_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved run directory on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("predict", help="classify one binary or dump")
    p.add_argument("input")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--top", type=int, default=3)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("sweep", help="depth/width sweep with timing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--min-depth", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--widths", default="32,64,128,256")
    p.add_argument("--sweep-epochs", type=int, default=5)
    add_train_flags(p)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
