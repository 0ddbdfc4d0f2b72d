"""Evaluation metrics for triplet extraction, node grouping and tree assembly.

Node contents are compared through *atoms*: a role label, a triplet, or a
logical-relation label, each indivisible. Edit distances only allow
insertions and deletions of atoms (cost 1 each).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, NamedTuple, Optional, Sequence, Union

from .core import (
    InvalidTree,
    Mdt,
    MdtError,
    MdtNode,
    NodeGroup,
    Triplet,
    as_tree,
    decision_paths,
    extract_triplets,
    serialize_preorder,
)

MAX_PERMUTED_NODES = 12
LR_CONVENTIONS = ("similarity", "paper-raw")


class PermutationLimitExceeded(MdtError):
    pass


class IdMismatch(MdtError):
    def __init__(self, missing_pred: Sequence[str], missing_gold: Sequence[str], duplicates: Sequence[str] = ()):
        self.missing_pred = list(missing_pred)
        self.missing_gold = list(missing_gold)
        self.duplicates = list(duplicates)
        parts = []
        if self.missing_pred:
            parts.append(f"no prediction for {self.missing_pred}")
        if self.missing_gold:
            parts.append(f"no gold record for {self.missing_gold}")
        if self.duplicates:
            parts.append(f"duplicate ids {self.duplicates}")
        super().__init__("; ".join(parts))


class Atom(NamedTuple):
    kind: str  # "role" | "triplet" | "logic"
    payload: str


def triplet_atom(t: Triplet) -> Atom:
    # a JSON array is an injective encoding, so atom equality == triplet equality
    return Atom("triplet", json.dumps(t.as_list(), ensure_ascii=False))


def node_atoms(node: Union[MdtNode, NodeGroup], include_role: bool) -> tuple:
    """Atom tuple of one node: (role?, canonical triplets..., logical relation)."""
    atoms = []
    if include_role:
        if node.role is None:
            raise ValueError("role atoms requested for a node without a role")
        atoms.append(Atom("role", node.role.value))
    atoms.extend(triplet_atom(t) for t in node.canonical_triplets())
    atoms.append(Atom("logic", node.logical_rel.value))
    return tuple(atoms)


@dataclass(frozen=True)
class EvalConfig:
    # None means: off for plain node-grouping scores, on for tree breakdowns
    ng_include_role: Optional[bool] = None
    lr_convention: str = "similarity"
    permutation_limit: int = 9

    def __post_init__(self):
        if self.permutation_limit < 1:
            raise ValueError("permutation_limit must be >= 1")
        if self.lr_convention not in LR_CONVENTIONS:
            raise ValueError(f"lr_convention must be one of {LR_CONVENTIONS}")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, matched: int, n_pred: int, n_gold: int) -> "PRF":
        if n_pred == 0 and n_gold == 0:
            return cls(1.0, 1.0, 1.0)
        p = matched / n_pred if n_pred else 0.0
        r = matched / n_gold if n_gold else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def triplet_prf(pred: Iterable[Triplet], gold: Iterable[Triplet]) -> PRF:
    """Strict instance-level precision/recall/F1 with multiset matching."""
    pred_c, gold_c = Counter(pred), Counter(gold)
    matched = sum((pred_c & gold_c).values())
    return PRF.from_counts(matched, sum(pred_c.values()), sum(gold_c.values()))


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Insert/delete edit distance between two atom sequences.

    Equals ``len(a) + len(b) - 2 * LCS(a, b)``.
    """
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1]
            else:
                cur[j] = 1 + min(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _ratio(ed: int, len_pred: int, len_gold: int, convention: str) -> float:
    if convention == "similarity":
        total = len_pred + len_gold
        return 1.0 if total == 0 else 1.0 - ed / total
    longest = max(len_pred, len_gold)
    return 0.0 if longest == 0 else ed / longest


class _LcsRow:
    """Bit-parallel LCS state against a fixed sequence (Hyyro's update)."""

    def __init__(self, seq: Sequence):
        self.m = len(seq)
        self.full = (1 << self.m) - 1
        self.masks: dict = {}
        for i, x in enumerate(seq):
            self.masks[x] = self.masks.get(x, 0) | (1 << i)

    def advance(self, v: int, symbols: Iterable) -> int:
        full = self.full
        for x in symbols:
            mask = self.masks.get(x, 0)
            u = v & mask
            v = ((v + u) | (v & ~mask)) & full
        return v

    def lcs(self, v: int) -> int:
        return self.m - bin(v).count("1")


@dataclass(frozen=True)
class NgMatch:
    distance: int
    len_pred: int
    len_gold: int
    permutation: tuple  # gold node indices in the best order


def _min_over_permutations(pred_atoms: tuple, gold_blocks: Sequence[tuple], prune: bool) -> tuple:
    row = _LcsRow(pred_atoms)
    m = row.m
    len_gold = sum(len(b) for b in gold_blocks)
    pred_counts = Counter(pred_atoms)

    # identical gold nodes are interchangeable; try each distinct block once per level
    distinct: dict = {}
    for idx, block in enumerate(gold_blocks):
        distinct.setdefault(block, []).append(idx)
    blocks = list(distinct)
    remaining = [len(distinct[b]) for b in blocks]
    rest = Counter(a for b in gold_blocks for a in b)

    def overlap(c: Counter) -> int:
        return sum(min(n, pred_counts[a]) for a, n in c.items())

    floor = m + len_gold - 2 * min(m, overlap(rest))
    best_ed = math.inf
    best_order: list = []
    order: list = []

    def dfs(v: int):
        nonlocal best_ed, best_order
        if best_ed == floor:
            return
        if len(order) == len(gold_blocks):
            ed = m + len_gold - 2 * row.lcs(v)
            if ed < best_ed:
                best_ed, best_order = ed, list(order)
            return
        if prune:
            upper = min(m, row.lcs(v) + overlap(rest))
            if m + len_gold - 2 * upper >= best_ed:
                return
        for k, block in enumerate(blocks):
            if not remaining[k]:
                continue
            remaining[k] -= 1
            rest.subtract(block)
            order.append(k)
            dfs(row.advance(v, block))
            order.pop()
            rest.update(block)
            remaining[k] += 1

    dfs(row.full)

    used = {b: list(ix) for b, ix in distinct.items()}
    perm = tuple(used[blocks[k]].pop(0) for k in best_order)
    return int(best_ed), len_gold, perm


def _gold_nodes(gold: Union[Mdt, Sequence[MdtNode]]) -> tuple:
    return serialize_preorder(gold) if isinstance(gold, Mdt) else tuple(gold)


def ng_match(
    pred_nodes: Sequence[Union[MdtNode, NodeGroup]],
    gold: Union[Mdt, Sequence[MdtNode]],
    cfg: Optional[EvalConfig] = None,
    include_role: Optional[bool] = None,
) -> NgMatch:
    """Edit distance between a predicted grouping and the best gold node order.

    Without role atoms, nodes that hold no triplets (decision placeholders)
    are dropped from both sides, since they carry no grouping information.
    """
    cfg = cfg or EvalConfig()
    if include_role is None:
        include_role = bool(cfg.ng_include_role)
    gold_nodes = _gold_nodes(gold)
    pred_nodes = list(pred_nodes)
    if not include_role:
        gold_nodes = tuple(n for n in gold_nodes if n.triplets)
        pred_nodes = [n for n in pred_nodes if n.triplets]
    if len(gold_nodes) > MAX_PERMUTED_NODES:
        raise PermutationLimitExceeded(
            f"{len(gold_nodes)} gold nodes; permutation search is capped at {MAX_PERMUTED_NODES}"
        )
    pred_atoms = tuple(a for n in pred_nodes for a in node_atoms(n, include_role))
    gold_blocks = [node_atoms(n, include_role) for n in gold_nodes]
    prune = len(gold_nodes) > cfg.permutation_limit
    ed, len_gold, perm = _min_over_permutations(pred_atoms, gold_blocks, prune)
    return NgMatch(ed, len(pred_atoms), len_gold, perm)


def ng_ed(pred_nodes, gold, cfg: Optional[EvalConfig] = None) -> int:
    return ng_match(pred_nodes, gold, cfg).distance


def ng_lr(pred_nodes, gold, cfg: Optional[EvalConfig] = None, include_role: Optional[bool] = None) -> float:
    """Levenshtein ratio of a node grouping.

    ``similarity``: 1 - ED / (len_pred + len_gold), in [0, 1].
    ``paper-raw``: ED / max(len_pred, len_gold); can exceed 1 under
    insert/delete costs.
    """
    cfg = cfg or EvalConfig()
    match = ng_match(pred_nodes, gold, cfg, include_role)
    return _ratio(match.distance, match.len_pred, match.len_gold, cfg.lr_convention)


def tree_atoms(tree: Union[Mdt, Sequence[MdtNode]]) -> tuple:
    nodes = serialize_preorder(as_tree(tree))
    return tuple(a for n in nodes for a in node_atoms(n, include_role=True))


def tree_acc(pred, gold) -> int:
    p = serialize_preorder(as_tree(pred))
    g = serialize_preorder(as_tree(gold))
    # preorder plus roles fixes the shape, so comparing node keys in order is enough
    return int(len(p) == len(g) and all(a.key() == b.key() for a, b in zip(p, g)))


def dp_f1(pred, gold) -> PRF:
    pred_paths = {p.key() for p in decision_paths(pred)}
    gold_paths = {p.key() for p in decision_paths(gold)}
    return PRF.from_counts(len(pred_paths & gold_paths), len(pred_paths), len(gold_paths))


def tree_lr(pred, gold, cfg: Optional[EvalConfig] = None) -> float:
    cfg = cfg or EvalConfig()
    a, b = tree_atoms(pred), tree_atoms(gold)
    return _ratio(edit_distance(a, b), len(a), len(b), cfg.lr_convention)


@dataclass
class RecordScores:
    id: str
    tree_acc: float
    dp: PRF
    tree_lr: float
    triplet: Optional[PRF] = None
    ng_lr: Optional[float] = None
    invalid: bool = False
    note: str = ""


@dataclass
class EvalReport:
    tree_acc: float
    dp: PRF
    tree_lr: float
    triplet: Optional[PRF] = None
    ng_lr: Optional[float] = None
    per_record: list = field(default_factory=list)
    config: Optional[EvalConfig] = None

    @property
    def dp_f1(self) -> float:
        return self.dp.f1

    @property
    def n_invalid(self) -> int:
        return sum(r.invalid for r in self.per_record)

    def summary(self) -> dict:
        out: dict[str, Any] = {}
        if self.triplet is not None:
            out["triplet_precision"] = self.triplet.precision
            out["triplet_recall"] = self.triplet.recall
            out["triplet_f1"] = self.triplet.f1
        if self.ng_lr is not None:
            out["ng_lr"] = self.ng_lr
        out["tree_acc"] = self.tree_acc
        out["dp_precision"] = self.dp.precision
        out["dp_recall"] = self.dp.recall
        out["dp_f1"] = self.dp.f1
        out["tree_lr"] = self.tree_lr
        return out

    def to_dict(self) -> dict:
        return {
            "records": len(self.per_record),
            "invalid_predictions": self.n_invalid,
            "config": asdict(self.config) if self.config else None,
            "scores": self.summary(),
            "per_record": [asdict(r) for r in self.per_record],
        }


def _mean(xs: list) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _mean_prf(prfs: list) -> PRF:
    return PRF(_mean([p.precision for p in prfs]), _mean([p.recall for p in prfs]), _mean([p.f1 for p in prfs]))


def _by_id(records, side: str) -> tuple:
    out: dict = {}
    dupes = []
    for rec in records:
        rid, nodes = (rec.id, rec.tree) if hasattr(rec, "tree") else rec
        if rid in out:
            dupes.append(f"{side}:{rid}")
        out[rid] = tuple(nodes)
    return out, dupes


def score_record(rid: str, pred_nodes: Sequence[MdtNode], gold_nodes: Sequence[MdtNode], cfg: EvalConfig, breakdown: bool) -> RecordScores:
    gold_tree = as_tree(gold_nodes)
    try:
        pred_tree = as_tree(pred_nodes)
    except InvalidTree as exc:
        scores = RecordScores(rid, 0.0, PRF(0.0, 0.0, 0.0), 0.0, invalid=True, note=str(exc))
    else:
        scores = RecordScores(rid, float(tree_acc(pred_tree, gold_tree)), dp_f1(pred_tree, gold_tree), tree_lr(pred_tree, gold_tree, cfg))
    if breakdown:
        include_role = True if cfg.ng_include_role is None else cfg.ng_include_role
        scores.triplet = triplet_prf(extract_triplets(pred_nodes), extract_triplets(gold_nodes))
        scores.ng_lr = ng_lr(pred_nodes, gold_tree, cfg, include_role=include_role)
    return scores


def evaluate(pred_records, gold_records, cfg: Optional[EvalConfig] = None, breakdown: bool = False) -> EvalReport:
    """Score predicted trees against gold trees, record by record.

    Records are objects with ``id`` and ``tree`` (preorder nodes) or plain
    ``(id, nodes)`` pairs. Aggregates are macro averages over records, in
    gold order. A structurally invalid prediction scores 0 on the tree
    metrics and is flagged; its triplets and nodes still count in the
    breakdown.
    """
    cfg = cfg or EvalConfig()
    pred, dp = _by_id(pred_records, "pred")
    gold, dg = _by_id(gold_records, "gold")
    missing_pred = [k for k in gold if k not in pred]
    missing_gold = [k for k in pred if k not in gold]
    if missing_pred or missing_gold or dp or dg:
        raise IdMismatch(missing_pred, missing_gold, dp + dg)

    per = [score_record(rid, pred[rid], gnodes, cfg, breakdown) for rid, gnodes in gold.items()]
    report = EvalReport(
        tree_acc=_mean([r.tree_acc for r in per]),
        dp=_mean_prf([r.dp for r in per]),
        tree_lr=_mean([r.tree_lr for r in per]),
        per_record=per,
        config=cfg,
    )
    if breakdown:
        report.triplet = _mean_prf([r.triplet for r in per])
        report.ng_lr = _mean([r.ng_lr for r in per])
    return report
