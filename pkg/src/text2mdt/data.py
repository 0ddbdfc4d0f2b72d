"""Dataset I/O, corpus statistics, annotator agreement and subtask datasets.

Canonical file layout: UTF-8, one JSON object per line::

    {"id": "...", "text": "...", "tree": [
        {"role": "C", "triples": [["subj", "clinical_feature", "obj"]], "logic_rel": "null"},
        ...]}

``tree`` lists the nodes in preorder. The reader also accepts a whole-file
JSON array and the field spellings of the upstream release (``logical_rel``,
``triplets``, Chinese relation names, records without ids).
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import (
    RELATION_TYPES,
    LogicalRel,
    MalformedInput,
    MdtError,
    MdtNode,
    Role,
    Triplet,
    Violation,
    has_errors,
    preorder_depth,
    validate_tree,
)

log = logging.getLogger(__name__)

# upstream label spellings -> canonical relation names
RELATION_ALIASES = {
    "临床表现": "clinical_feature",
    "治疗药物": "therapeutic_drug",
    "治疗方案": "medical_option",
    "用法用量": "usage_or_dosage",
    "用法": "usage_or_dosage",
    "用量": "usage_or_dosage",
    "禁用药物": "forbidden_drug",
    "基本情况": "basic_information",
    "prohibited_drug": "forbidden_drug",
}
_TRIPLE_KEYS = ("triples", "triplets", "triple", "spo")
_LOGIC_KEYS = ("logic_rel", "logical_rel", "logical_relation", "logic")
_KNOWN_NODE_KEYS = {"role", *_TRIPLE_KEYS, *_LOGIC_KEYS}
_KNOWN_RECORD_KEYS = {"id", "text", "tree", "nodes"}


class ParseError(MdtError):
    pass


class SchemaError(MdtError):
    pass


class ValidationError(MdtError):
    def __init__(self, record_id: str, violations: Sequence[Violation]):
        self.record_id = record_id
        self.violations = list(violations)
        first = next(v for v in self.violations if v.severity == "error")
        super().__init__(f"record {record_id}: {first}")


class LengthMismatch(MdtError, ValueError):
    pass


class EmptyInput(MdtError, ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    text: str
    tree: tuple
    violations: tuple = field(default=(), compare=False)

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "tree": [node_to_json(n) for n in self.tree]}


def node_to_json(node) -> dict:
    out = {}
    if getattr(node, "role", None) is not None:
        out["role"] = node.role.value
    out["triples"] = [t.as_list() for t in node.triplets]
    out["logic_rel"] = node.logical_rel.value
    return out


def _first(d: dict, keys: Sequence[str], default=None):
    for k in keys:
        if k in d:
            return d[k]
    return default


def node_from_json(obj: dict, where: str = "") -> MdtNode:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: node must be an object")
    if "role" not in obj:
        raise SchemaError(f"{where}: node without 'role'")
    extra = set(obj) - _KNOWN_NODE_KEYS
    if extra:
        log.info("%s: ignoring unmapped node fields %s", where, sorted(extra))
    raw = _first(obj, _TRIPLE_KEYS, [])
    triplets = []
    for t in raw:
        if isinstance(t, dict):
            t = [t.get("subject", t.get("sub")), t.get("relation", t.get("rel")), t.get("object", t.get("obj"))]
        if not isinstance(t, (list, tuple)) or len(t) != 3 or not all(isinstance(x, str) for x in t):
            raise SchemaError(f"{where}: triplet must be three strings, got {t!r}")
        s, r, o = t
        triplets.append(Triplet(s, RELATION_ALIASES.get(r, r), o))
    try:
        return MdtNode(Role.parse(obj["role"]), tuple(triplets), LogicalRel.parse(_first(obj, _LOGIC_KEYS)))
    except MalformedInput as exc:
        raise SchemaError(f"{where}: {exc}") from None


def record_violations(text: str, nodes: Sequence[MdtNode], mode: str = "strict") -> list[Violation]:
    """Tree invariants plus the record-level rules (nonempty text and tree)."""
    out = validate_tree(nodes, mode=mode) if nodes else [Violation(-1, "empty-tree", "record has no nodes")]
    if not text.strip():
        out.append(Violation(-1, "empty-text", "record text is empty"))
    return out


def record_from_json(obj: dict, index: int, mode: str = "strict") -> DatasetRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"record {index}: expected an object")
    rid = obj.get("id")
    if rid is None:
        rid = str(index)
        log.debug("record %d has no id; using its position", index)
    rid = str(rid)
    if "text" not in obj:
        raise SchemaError(f"record {rid}: missing field 'text'")
    raw_tree = obj.get("tree", obj.get("nodes"))
    if raw_tree is None:
        raise SchemaError(f"record {rid}: missing field 'tree'")
    extra = set(obj) - _KNOWN_RECORD_KEYS
    if extra:
        log.info("record %s: ignoring unmapped fields %s", rid, sorted(extra))
    nodes = tuple(node_from_json(n, f"record {rid} node {i}") for i, n in enumerate(raw_tree))
    if not isinstance(obj["text"], str):
        raise SchemaError(f"record {rid}: text must be a string")

    violations = record_violations(obj["text"], nodes, mode)
    if mode == "strict" and has_errors(violations):
        raise ValidationError(rid, violations)
    return DatasetRecord(rid, obj["text"], nodes, tuple(violations))


def _read_objects(path: Path) -> list:
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc})") from None
    stripped = raw.lstrip()
    if stripped.startswith("["):
        try:
            objs = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        return objs
    objs = []
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            objs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: {exc.msg}") from None
    return objs


def load_dataset(path: Union[str, Path], mode: str = "strict") -> list[DatasetRecord]:
    """Read and validate a dataset file.

    Strict mode raises :class:`ValidationError` on the first invalid record;
    lenient mode keeps every record with its violations attached.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', not {mode!r}")
    objs = _read_objects(Path(path))
    return [record_from_json(o, i, mode) for i, o in enumerate(objs)]


def dumps_record(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def save_dataset(records: Iterable[DatasetRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec.to_json()) + "\n")


@dataclass
class CorpusStats:
    record_count: int
    depth_histogram: dict
    relation_histogram: dict
    node_counts: dict
    triplet_count: int
    avg_nodes_per_tree: float
    avg_triplets_per_tree: float
    seo_record_count: int

    def to_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "depth_histogram": {str(k): v for k, v in sorted(self.depth_histogram.items())},
            "relation_histogram": dict(self.relation_histogram),
            "node_counts": dict(self.node_counts),
            "triplet_count": self.triplet_count,
            "avg_nodes_per_tree": self.avg_nodes_per_tree,
            "avg_triplets_per_tree": self.avg_triplets_per_tree,
            "seo_record_count": self.seo_record_count,
        }


def has_seo(triplets: Iterable[Triplet]) -> bool:
    """True when two distinct triplets share exactly one entity mention.

    Pairs sharing both entities are entity-pair overlap, not SEO.
    """
    uniq = list(dict.fromkeys(triplets))
    for i, a in enumerate(uniq):
        ea = {a.subject, a.object}
        for b in uniq[i + 1 :]:
            if len(ea & {b.subject, b.object}) == 1:
                return True
    return False


def compute_stats(records: Sequence[DatasetRecord]) -> CorpusStats:
    depth = Counter()
    relations = Counter({r: 0 for r in RELATION_TYPES})
    nodes = Counter({"total": 0, "decision": 0, "condition": 0, "and": 0, "or": 0, "null": 0})
    n_triplets = 0
    seo = 0
    for rec in records:
        depth[preorder_depth(rec.tree)] += 1
        tri = [t for node in rec.tree for t in node.triplets]
        n_triplets += len(tri)
        relations.update(t.relation for t in tri)
        for node in rec.tree:
            nodes["total"] += 1
            nodes["condition" if node.is_condition else "decision"] += 1
            nodes[node.logical_rel.value] += 1
        seo += has_seo(tri)
    n = len(records)
    return CorpusStats(
        record_count=n,
        depth_histogram=dict(sorted(depth.items())),
        relation_histogram=dict(relations.most_common()),
        node_counts=dict(nodes),
        triplet_count=n_triplets,
        avg_nodes_per_tree=nodes["total"] / n if n else 0.0,
        avg_triplets_per_tree=n_triplets / n if n else 0.0,
        seo_record_count=seo,
    )


def cohens_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Cohen's kappa between two annotators over the same items."""
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} vs {len(labels_b)} labels")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("no items to compare")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class SubtaskRecord:
    kind: str  # "TE" | "NG" | "TA"
    id: str
    copy: int
    input: dict
    target: dict

    def to_json(self) -> dict:
        return {"kind": self.kind, "id": self.id, "copy": self.copy, "input": self.input, "target": self.target}


def _stream(seed: int, record_id: str, copy: int) -> random.Random:
    # one independent stream per (record, copy), so the output never depends on processing order
    digest = hashlib.sha256(f"{seed}\x1f{record_id}\x1f{copy}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _shuffled(items: list, seed: int, rid: str, copy: int) -> list:
    if copy == 0:
        return list(items)
    out = list(items)
    _stream(seed, rid, copy).shuffle(out)
    return out


def copies_per_record(augment_factor: int) -> int:
    """Number of NG/TA records emitted per source record.

    ``augment_factor`` is the total size multiplier: 0 and 1 both give the
    original only, 4 gives the original order plus three shuffles (800
    records -> 3200).
    """
    if augment_factor < 0:
        raise ValueError("augment_factor must be >= 0")
    return max(1, augment_factor)


def build_subtasks(records: Sequence[DatasetRecord], augment_factor: int = 4, seed: int = 0) -> dict:
    """Build the triplet-extraction, node-grouping and tree-assembly datasets.

    NG inputs list the record's triplets, TA inputs its nodes (without
    roles); copy 0 keeps the original order and later copies are seeded
    shuffles. NG targets skip triplet-free placeholder nodes.
    """
    copies = copies_per_record(augment_factor)
    te, ng, ta = [], [], []
    for rec in records:
        triplets = [t.as_list() for node in rec.tree for t in node.triplets]
        groups = [
            {"triples": [t.as_list() for t in node.triplets], "logic_rel": node.logical_rel.value}
            for node in rec.tree
            if node.triplets
        ]
        unrolled = [{"triples": [t.as_list() for t in n.triplets], "logic_rel": n.logical_rel.value} for n in rec.tree]
        full = [node_to_json(n) for n in rec.tree]

        te.append(SubtaskRecord("TE", rec.id, 0, {"text": rec.text}, {"triples": triplets}))
        for c in range(copies):
            ng.append(
                SubtaskRecord(
                    "NG", rec.id, c,
                    {"text": rec.text, "triples": _shuffled(triplets, seed, rec.id + "/ng", c)},
                    {"nodes": groups},
                )
            )
            ta.append(
                SubtaskRecord(
                    "TA", rec.id, c,
                    {"text": rec.text, "nodes": _shuffled(unrolled, seed, rec.id + "/ta", c)},
                    {"tree": full},
                )
            )
    return {"TE": te, "NG": ng, "TA": ta}


def write_subtasks(subtasks: dict, outdir: Union[str, Path]) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind, recs in subtasks.items():
        p = outdir / f"{kind.lower()}.jsonl"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for r in recs:
                fh.write(dumps_record(r.to_json()) + "\n")
        paths[kind] = p
    return paths
