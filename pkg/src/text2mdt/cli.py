"""Command-line interface.

Exit codes: 0 success, 1 domain failure (invalid trees, empty dataset,
unknown record, undecodable scores), 2 I/O or parse error, 3 record ids
that do not line up.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import MdtError, Triplet, has_errors
from .data import (
    DatasetRecord,
    ParseError,
    SchemaError,
    ValidationError,
    build_subtasks,
    compute_stats,
    dumps_record,
    load_dataset,
    node_from_json,
    node_to_json,
    record_violations,
    write_subtasks,
)
from .decode import DecodingIncomplete, decode_node_grouping, decode_tree_assembly
from .metrics import EvalConfig, IdMismatch, evaluate
from .render import render_ascii, render_dot

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_ALIGN = 0, 1, 2, 3

log = logging.getLogger("text2mdt")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}", EXIT_IO)
    return p


def _load(path: str, mode: str) -> list[DatasetRecord]:
    p = _require_file(path)
    try:
        return load_dataset(p, mode=mode)
    except (ParseError, SchemaError, OSError) as exc:
        raise CliError(str(exc), EXIT_IO) from None
    except ValidationError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_validate(args) -> int:
    records = _load(args.file, "lenient")
    lines = []
    n_err = n_warn = 0
    for rec in records:
        # lenient load collects everything; re-check under the requested mode
        for v in record_violations(rec.text, rec.tree, args.mode):
            if v.severity == "error":
                n_err += 1
            else:
                n_warn += 1
            lines.append(f"{rec.id}\t{v.index}\t{v.rule}\t{v.severity}\t{v.message}")
    if args.format == "structured":
        payload = {
            "records": len(records),
            "violations": n_err,
            "warnings": n_warn,
            "items": [dict(zip(("id", "index", "rule", "severity", "message"), l.split("\t"))) for l in lines],
        }
        _emit(json.dumps(payload, ensure_ascii=False, indent=2), args.out)
    else:
        lines.append(f"{len(records)} records, {n_err} violations, {n_warn} warnings")
        _emit("\n".join(lines), args.out)
    return EXIT_DOMAIN if n_err else EXIT_OK


def _format_scores(scores: dict) -> str:
    width = max(len(k) for k in scores)
    return "\n".join(f"{k:<{width}}  {v:.4f}" for k, v in scores.items())


def cmd_eval(args) -> int:
    gold = _load(args.gold, args.mode)
    pred = _load(args.pred, "lenient")
    cfg = EvalConfig(ng_include_role=args.ng_include_role, lr_convention=args.lr_convention)
    try:
        report = evaluate(pred, gold, cfg, breakdown=args.breakdown)
    except IdMismatch as exc:
        raise CliError(str(exc), EXIT_ALIGN) from None
    if args.format == "structured":
        text = json.dumps(report.to_dict(), ensure_ascii=False, indent=2)
    else:
        text = f"{len(report.per_record)} records ({report.n_invalid} invalid predictions)\n"
        text += _format_scores(report.summary())
    _emit(text, args.out)
    if args.figures:
        from .plots import plot_eval

        for p in plot_eval(report, args.figures):
            log.info("wrote %s", p)
    return EXIT_OK


def _stats_table(d: dict) -> str:
    out = [f"records               {d['record_count']}", "", "depth  amount  proportion"]
    n = d["record_count"]
    for depth, c in d["depth_histogram"].items():
        out.append(f"{depth:>5}  {c:>6}  {100 * c / n:9.2f}%")
    out += ["", f"{'relation':<20}  amount  proportion"]
    total = d["triplet_count"] or 1
    for rel, c in d["relation_histogram"].items():
        out.append(f"{rel:<20}  {c:>6}  {100 * c / total:9.2f}%")
    nc = d["node_counts"]
    out += [
        "",
        f"nodes                 {nc['total']} ({nc['decision']} decision, {nc['condition']} condition)",
        f"logical relations     {nc['or']} or, {nc['and']} and, {nc['null']} null",
        f"avg nodes per tree    {d['avg_nodes_per_tree']:.2f}",
        f"avg triplets per tree {d['avg_triplets_per_tree']:.2f}",
        f"records with SEO      {d['seo_record_count']}",
    ]
    return "\n".join(out)


def cmd_stats(args) -> int:
    records = _load(args.file, args.mode)
    if not records:
        raise CliError(f"{args.file}: dataset is empty", EXIT_DOMAIN)
    stats = compute_stats(records)
    d = stats.to_dict()
    text = json.dumps(d, ensure_ascii=False, indent=2) if args.format == "structured" else _stats_table(d)
    _emit(text, args.out)
    if args.figures:
        from .plots import plot_stats

        for p in plot_stats(stats, args.figures):
            log.info("wrote %s", p)
    return EXIT_OK


def cmd_render(args) -> int:
    records = _load(args.file, "lenient")
    rec = next((r for r in records if r.id == args.id), None)
    if rec is None:
        raise CliError(f"no record with id {args.id!r}", EXIT_DOMAIN)
    if has_errors(rec.violations):
        raise CliError(f"record {args.id} is not a valid tree: {rec.violations[0]}", EXIT_DOMAIN)
    text = render_dot(rec.tree, name=rec.id) if args.style == "dot" else render_ascii(rec.tree)
    _emit(text, args.out)
    return EXIT_OK


def _table(obj: dict, what: str) -> tuple:
    try:
        shape = tuple(int(x) for x in obj["shape"])
        data = np.asarray(obj["data"], dtype=float).reshape(shape)
        return data, list(obj["labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"malformed {what} table: {exc}", EXIT_IO) from None


def _decode_one(obj: dict, task: Optional[str], force: bool) -> dict:
    task = task or obj.get("task")
    rid = str(obj.get("id", "decoded"))
    if task == "ng":
        try:
            triplets = [Triplet(*t) for t in obj["triplets"]]
        except (KeyError, TypeError) as exc:
            raise CliError(f"malformed triplet list: {exc}", EXIT_IO) from None
        probs, labels = _table(obj.get("pair_probs", {}), "pair_probs")
        groups = decode_node_grouping(probs, triplets, labels=labels)
        return {"id": rid, "nodes": [node_to_json(g) for g in groups]}
    if task == "tree":
        try:
            nodes = [node_from_json({"role": "D", **n}, f"score node {i}") for i, n in enumerate(obj["nodes"])]
        except (KeyError, TypeError, SchemaError) as exc:
            raise CliError(f"malformed node list: {exc}", EXIT_IO) from None
        roles, role_labels = _table(obj.get("role_probs", {}), "role_probs")
        edges, edge_labels = _table(obj.get("edge_probs", {}), "edge_probs")
        tree = decode_tree_assembly(roles, edges, nodes, force=force, role_labels=role_labels, edge_labels=edge_labels)
        return DatasetRecord(rid, str(obj.get("text", "")), tree.preorder()).to_json()
    raise CliError(f"unknown decode task {task!r}; use ng or tree", EXIT_IO)


def cmd_decode(args) -> int:
    p = _require_file(args.scores)
    try:
        raw = p.read_text(encoding="utf-8")
        try:
            # a single document: one object or an array of them
            whole = json.loads(raw)
            objs = whole if isinstance(whole, list) else [whole]
        except json.JSONDecodeError:
            objs = [json.loads(line) for line in raw.splitlines() if line.strip()]
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CliError(f"{args.scores}: {exc}", EXIT_IO) from None
    if not all(isinstance(o, dict) for o in objs):
        raise CliError(f"{args.scores}: every score entry must be an object", EXIT_IO)
    out = []
    for obj in objs:
        try:
            out.append(dumps_record(_decode_one(obj, args.task, args.force)))
        except DecodingIncomplete as exc:
            raise CliError(f"record {obj.get('id', '?')}: {exc}", EXIT_DOMAIN) from None
        except (ValueError, MdtError) as exc:
            raise CliError(f"record {obj.get('id', '?')}: {exc}", EXIT_IO) from None
    _emit("\n".join(out), args.out)
    return EXIT_OK


def cmd_build_subtasks(args) -> int:
    records = _load(args.input, args.mode)
    if not args.out:
        raise CliError("build-subtasks needs --out DIR", EXIT_IO)
    subtasks = build_subtasks(records, augment_factor=args.augment, seed=args.seed)
    paths = write_subtasks(subtasks, args.out)
    for kind, path in paths.items():
        print(f"{kind}\t{len(subtasks[kind])}\t{path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="text2mdt", description="Medical decision tree tooling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=True, fmt=True):
        if mode:
            p.add_argument("--mode", choices=("strict", "lenient"), default="strict")
        if fmt:
            p.add_argument("--format", choices=("table", "structured"), default="table")
        p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("validate", help="check every record against the tree invariants")
    p.add_argument("file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="score predicted trees against gold trees")
    p.add_argument("gold")
    p.add_argument("pred")
    common(p)
    p.add_argument("--lr-convention", choices=("similarity", "paper-raw"), default="similarity")
    p.add_argument("--ng-include-role", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--breakdown", action="store_true", help="also score triplets and node grouping from the trees")
    p.add_argument("--figures", metavar="DIR", help="write report figures to DIR")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("file")
    common(p)
    p.add_argument("--figures", metavar="DIR", help="write histogram figures to DIR")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("render", help="draw one tree")
    p.add_argument("file")
    p.add_argument("--id", required=True, dest="id")
    p.add_argument("--style", choices=("ascii", "dot"), default="ascii")
    common(p, mode=False, fmt=False)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("decode", help="decode node-grouping or tree-assembly score tables")
    p.add_argument("scores")
    p.add_argument("--task", choices=("ng", "tree"))
    p.add_argument("--force", action="store_true", help="always complete tree assembly into a valid tree")
    common(p, mode=False, fmt=False)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("build-subtasks", help="write TE/NG/TA subtask datasets")
    p.add_argument("input")
    p.add_argument("--augment", type=int, default=4, help="NG/TA size multiplier (default 4)")
    p.add_argument("--seed", type=int, default=0)
    common(p, fmt=False)
    p.set_defaults(func=cmd_build_subtasks)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
