"""Score-table algorithms for the three pipeline subtasks.

Everything here consumes probability tables produced elsewhere (an encoder
with a biaffine head, a generative model, hand-made fixtures) and turns them
into structures. No training happens here.

Tables are numpy arrays indexed ``[i, j, label]``. Ties are broken by
probability descending, then smaller indices first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    LogicalRel,
    Mdt,
    MdtError,
    MdtNode,
    NodeGroup,
    Role,
    Triplet,
    TreeNode,
    decision,
)

NG_LABELS = ("and", "or", "null")
EDGE_LABELS = ("left", "right", "none")
ROLE_LABELS = ("C", "D")
PROB_CLAMP = 1e-12
NORM_TOL = 1e-6


class DimensionMismatch(MdtError, ValueError):
    pass


class NormalizationError(MdtError, ValueError):
    pass


class DecodingIncomplete(MdtError):
    def __init__(self, message: str, nodes: Sequence[int] = ()):
        self.nodes = list(nodes)
        super().__init__(f"{message}: nodes {self.nodes}" if self.nodes else message)


@dataclass(frozen=True)
class BiaffineParams:
    U: np.ndarray  # (d, K, d)
    W: np.ndarray  # (2d, K)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if U.ndim != 3 or U.shape[0] != U.shape[2]:
            raise DimensionMismatch(f"U must be d x K x d, got {U.shape}")
        d, k = U.shape[0], U.shape[1]
        if W.shape != (2 * d, k):
            raise DimensionMismatch(f"W must be {2 * d} x {k}, got {W.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.U.shape[0]

    @property
    def k(self) -> int:
        return self.U.shape[1]


def biaffine_score(h1, h2, params: BiaffineParams) -> np.ndarray:
    """Raw label scores ``h1^T U[:, k, :] h2 + W[:, k] . (h1 ++ h2)`` for each k."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != (params.d,) or h2.shape != (params.d,):
        raise DimensionMismatch(f"expected vectors of length {params.d}, got {h1.shape} and {h2.shape}")
    bilinear = np.einsum("i,ikj,j->k", h1, params.U, h2)
    return bilinear + np.concatenate([h1, h2]) @ params.W


def softmax(scores, axis: int = -1) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


def check_table(probs, n: Optional[int] = None, k: Optional[int] = None) -> np.ndarray:
    """Validate a square pair table of label distributions; returns it as float array."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 3 or p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"pair table must be n x n x k, got {p.shape}")
    if n is not None and p.shape[0] != n:
        raise DimensionMismatch(f"pair table covers {p.shape[0]} items, expected {n}")
    if k is not None and p.shape[2] != k:
        raise DimensionMismatch(f"pair table has {p.shape[2]} labels, expected {k}")
    if p.size and (np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > NORM_TOL)):
        raise NormalizationError("every cell must hold a probability distribution")
    return p


def table_loss(probs, gold_labels) -> float:
    """Mean cross-entropy over all n x n cells of a pair table."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(gold_labels)
    if p.ndim != 3 or p.shape[0] != p.shape[1] or y.shape != p.shape[:2]:
        raise DimensionMismatch(f"table {p.shape} and gold labels {y.shape} do not line up")
    if y.size and (y.min() < 0 or y.max() >= p.shape[2]):
        raise DimensionMismatch("gold label index out of range")
    n = p.shape[0]
    if n == 0:
        return 0.0
    picked = np.take_along_axis(p, y[..., None].astype(int), axis=-1)[..., 0]
    return float(-np.log(np.maximum(picked, PROB_CLAMP)).sum() / (n * n))


def decode_spans(probs, labels: Sequence[str], entity_labels: Sequence[str]) -> list[tuple]:
    """Entity spans ``(start, end, type)`` from the upper triangle of a token table.

    Cells whose argmax is an entity type are taken greedily, highest
    probability first; a span overlapping an accepted one is dropped.
    """
    p = np.asarray(probs, dtype=float)
    n = p.shape[0]
    ent_ix = {labels.index(e) for e in entity_labels}
    cands = []
    for i in range(n):
        for j in range(i, n):
            k = int(np.argmax(p[i, j]))
            if k in ent_ix:
                cands.append((-p[i, j, k], i, j, labels[k]))
    cands.sort()
    taken = np.zeros(n, dtype=bool)
    spans = []
    for _, i, j, lab in cands:
        if taken[i : j + 1].any():
            continue
        taken[i : j + 1] = True
        spans.append((i, j, lab))
    spans.sort()
    return spans


def decode_triplet_table(
    probs,
    labels: Sequence[str],
    entity_labels: Sequence[str],
    relation_labels: Sequence[str],
    tokens: Sequence[str],
    joiner: str = "",
) -> list[Triplet]:
    """Greedy joint entity/relation decode of a token-pair table.

    ``labels`` names the last axis; it must contain every entity and relation
    label plus one null label. A relation cell (i, j) yields a triplet when i
    and j are the start tokens of two decoded spans, head at i.
    """
    labels = list(labels)
    p = check_table(probs, n=len(tokens), k=len(labels))
    missing = [x for x in (*entity_labels, *relation_labels) if x not in labels]
    if missing or len(labels) != len(entity_labels) + len(relation_labels) + 1:
        raise DimensionMismatch(f"label set does not partition into entities, relations and null: {missing}")

    spans = decode_spans(p, labels, entity_labels)
    starts = {i: joiner.join(tokens[i : j + 1]) for i, j, _ in spans}
    rel_ix = {labels.index(r) for r in relation_labels}
    cands = []
    for i in starts:
        for j in starts:
            if i == j:
                continue
            k = int(np.argmax(p[i, j]))
            if k in rel_ix:
                cands.append((-p[i, j, k], i, j, labels[k]))
    cands.sort()
    out = dict.fromkeys(Triplet(starts[i], rel, starts[j]) for _, i, j, rel in cands)
    return list(out)


class _Groups:
    """Union-find over triplets where each component remembers its link label."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.label: list = [None] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def link(self, a: int, b: int, label: str) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return self.label[ra] == label
        if any(self.label[r] not in (None, label) for r in (ra, rb)):
            return False
        lo, hi = min(ra, rb), max(ra, rb)
        self.parent[hi] = lo
        self.label[lo] = label
        return True


def decode_node_grouping(pair_probs, triplets: Sequence[Triplet], labels: Sequence[str] = NG_LABELS) -> list[NodeGroup]:
    """Group triplets into nodes from a triplet-pair table over {and, or, null}.

    Each unordered pair takes the argmax label of its symmetrised
    distribution. Non-null pairs are established in order of probability
    mass; a pair is rejected when it would put a triplet under both AND and
    OR, checked per connected component. Components become nodes, ordered
    by their first triplet.
    """
    labels = list(labels)
    if sorted(labels) != sorted(NG_LABELS):
        raise DimensionMismatch(f"node grouping labels must be {NG_LABELS}, got {labels}")
    n = len(triplets)
    p = check_table(pair_probs, n=n, k=3)
    p = p[:, :, [labels.index(x) for x in NG_LABELS]]
    sym = (p + p.transpose(1, 0, 2)) / 2

    cands = []
    for i in range(n):
        for j in range(i + 1, n):
            k = int(np.argmax(sym[i, j]))
            if NG_LABELS[k] != "null":
                cands.append((-sym[i, j, k], i, j, NG_LABELS[k]))
    cands.sort()

    groups = _Groups(n)
    for _, i, j, lab in cands:
        groups.link(i, j, lab)

    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(groups.find(i), []).append(i)
    out = []
    for root in sorted(members, key=lambda r: members[r][0]):
        ix = members[root]
        rel = LogicalRel(groups.label[root]) if len(ix) > 1 else LogicalRel.NULL
        out.append(NodeGroup(tuple(triplets[i] for i in ix), rel))
    return out


def _components(parent: list, n: int) -> list:
    def root(x):
        while parent[x] is not None:
            x = parent[x]
        return x

    return [root(i) for i in range(n)]


def decode_tree_assembly(
    role_probs,
    edge_probs,
    nodes: Sequence[Union[NodeGroup, MdtNode]],
    force: bool = True,
    role_labels: Sequence[str] = ROLE_LABELS,
    edge_labels: Sequence[str] = EDGE_LABELS,
) -> Mdt:
    """Assign roles and connect nodes into a binary decision tree.

    Roles are per-node argmax. Directed edges ``parent -> child`` (the argmax
    of cell ``[parent, child]`` when it is left/right) are accepted greedily
    by probability when the child has no parent yet, the parent is a
    condition, the parent's slot is free and no cycle forms.

    In force mode the result is completed into a valid tree: stray roots are
    hung into the best free condition slot (a decision leaf with triplets is
    promoted to condition when no slot is free), and remaining free slots get
    empty decision placeholders. Without force, any stray root or free slot
    raises :class:`DecodingIncomplete`.
    """
    n = len(nodes)
    if n == 0:
        raise DecodingIncomplete("no nodes to assemble")
    rp = np.asarray(role_probs, dtype=float)
    if rp.shape != (n, 2):
        raise DimensionMismatch(f"role table must be {n} x 2, got {rp.shape}")
    if np.any(rp < 0) or np.any(np.abs(rp.sum(axis=-1) - 1.0) > NORM_TOL):
        raise NormalizationError("role rows must be distributions")
    rp = rp[:, [list(role_labels).index(x) for x in ROLE_LABELS]]
    ep = check_table(edge_probs, n=n, k=3)
    ep = ep[:, :, [list(edge_labels).index(x) for x in EDGE_LABELS]]

    groups = []
    for i, node in enumerate(nodes):
        if len(node.triplets) <= 1 and node.logical_rel is not LogicalRel.NULL:
            raise ValueError(f"node {i}: logical relation must be null with <= 1 triplet")
        if len(node.triplets) > 1 and node.logical_rel is LogicalRel.NULL:
            raise ValueError(f"node {i}: multi-triplet node needs and/or")
        groups.append((tuple(node.triplets), node.logical_rel))

    roles = [Role.CONDITION if int(np.argmax(rp[i])) == 0 else Role.DECISION for i in range(n)]
    # an empty condition is never valid
    empty_conditions = [i for i, r in enumerate(roles) if r is Role.CONDITION and not groups[i][0]]
    if empty_conditions and not force:
        raise DecodingIncomplete("condition role assigned to nodes without triplets", empty_conditions)
    for i in empty_conditions:
        roles[i] = Role.DECISION

    parent: list = [None] * n
    slots: list = [[None, None] for _ in range(n)]

    cands = []
    for a in range(n):
        for c in range(n):
            if a == c:
                continue
            k = int(np.argmax(ep[a, c]))
            if k < 2:
                cands.append((-ep[a, c, k], a, c, k))
    cands.sort()
    accepted = 0
    for _, a, c, k in cands:
        if accepted == n - 1:
            break
        if parent[c] is not None or roles[a] is not Role.CONDITION or slots[a][k] is not None:
            continue
        comp = _components(parent, n)
        if comp[a] == comp[c]:
            continue
        parent[c] = a
        slots[a][k] = c
        accepted += 1

    roots = [i for i in range(n) if parent[i] is None]
    main = _pick_root(roots, roles, rp)
    if not force:
        if len(roots) > 1:
            raise DecodingIncomplete("nodes left without a parent", [r for r in roots if r != main])
        open_slots = [i for i in range(n) if roles[i] is Role.CONDITION and None in slots[i]]
        if open_slots:
            raise DecodingIncomplete("condition nodes with unfilled child slots", open_slots)
    else:
        for r in sorted(roots):
            if r != main:
                _hang(r, roles, parent, slots, groups, rp, ep)

    def build(i: int) -> TreeNode:
        node = MdtNode(roles[i], groups[i][0], groups[i][1])
        if roles[i] is not Role.CONDITION:
            return TreeNode(node)
        kids = [build(s) if s is not None else TreeNode(decision()) for s in slots[i]]
        return TreeNode(node, kids[0], kids[1])

    return Mdt(build(main))


def _pick_root(roots: list, roles: list, rp: np.ndarray) -> int:
    # prefer a condition, then the most condition-like node, then the lowest index
    return min(roots, key=lambda r: (roles[r] is not Role.CONDITION, -rp[r, 0], r))


def _hang(r: int, roles, parent, slots, groups, rp, ep) -> None:
    """Attach stray root ``r`` under a free condition slot of another component."""
    n = len(roles)
    comp = _components(parent, n)
    best = None
    for a in range(n):
        if comp[a] == comp[r] or roles[a] is not Role.CONDITION:
            continue
        for k in (0, 1):
            if slots[a][k] is None:
                key = (-ep[a, r, k], a, k)
                if best is None or key < best:
                    best = key
    if best is None:
        # no free slot anywhere: promote the most condition-like decision leaf
        leaves = [a for a in range(n) if comp[a] != comp[r] and roles[a] is Role.DECISION and groups[a][0]]
        if not leaves:
            # every possible host is an empty placeholder; r's subtree is dropped
            return
        a = min(leaves, key=lambda a: (-rp[a, 0], a))
        roles[a] = Role.CONDITION
        best = (0.0, a, 0 if ep[a, r, 0] >= ep[a, r, 1] else 1)
    _, a, k = best
    parent[r] = a
    slots[a][k] = r
