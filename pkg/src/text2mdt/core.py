"""Medical decision tree data model.

A tree is exchanged as a preorder sequence of :class:`MdtNode`. Condition
nodes always own exactly two children (left = "Yes", right = "No");
decision nodes are leaves. Because the role alone tells whether a node
has children, the preorder sequence determines the tree uniquely.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

RELATION_TYPES = (
    "clinical_feature",
    "therapeutic_drug",
    "medical_option",
    "usage_or_dosage",
    "forbidden_drug",
    "basic_information",
)


class MdtError(Exception):
    """Base class for errors raised by this package."""


class MalformedInput(MdtError, ValueError):
    pass


class InvalidTree(MdtError, ValueError):
    pass


class PrematureExhaustion(InvalidTree):
    """A condition node ran out of nodes before both children were read."""


class LeftoverNodes(InvalidTree):
    """Nodes remain after the root's subtree is complete."""


class UnknownRelationWarning(UserWarning):
    pass


class Role(str, enum.Enum):
    CONDITION = "C"
    DECISION = "D"

    @classmethod
    def parse(cls, value: Union[str, "Role"]) -> "Role":
        if isinstance(value, Role):
            return value
        key = str(value).strip().lower()
        if key in ("c", "condition", "cond"):
            return cls.CONDITION
        if key in ("d", "decision", "dec"):
            return cls.DECISION
        raise MalformedInput(f"unknown node role: {value!r}")


class LogicalRel(str, enum.Enum):
    AND = "and"
    OR = "or"
    NULL = "null"

    @classmethod
    def parse(cls, value: Union[str, "LogicalRel", None]) -> "LogicalRel":
        if isinstance(value, LogicalRel):
            return value
        if value is None:
            return cls.NULL
        key = str(value).strip().lower()
        if key in ("", "none"):
            return cls.NULL
        try:
            return cls(key)
        except ValueError:
            raise MalformedInput(f"unknown logical relation: {value!r}") from None


class Branch(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    TERMINAL = "terminal"


def check_relation(label: str, mode: str = "strict") -> str:
    """Check a relation label against the closed vocabulary.

    Strict mode raises :class:`MalformedInput`; lenient mode keeps the label
    and emits an :class:`UnknownRelationWarning`.
    """
    if label in RELATION_TYPES:
        return label
    if mode == "strict":
        raise MalformedInput(f"unknown relation label: {label!r}")
    warnings.warn(f"keeping unknown relation label {label!r}", UnknownRelationWarning, stacklevel=2)
    return label


@dataclass(frozen=True, order=True)
class Triplet:
    subject: str
    relation: str
    object: str

    def as_list(self) -> list:
        return [self.subject, self.relation, self.object]

    def __str__(self) -> str:
        return f"({self.subject}, {self.relation}, {self.object})"


@dataclass(frozen=True)
class MdtNode:
    role: Role
    triplets: tuple = ()
    logical_rel: LogicalRel = LogicalRel.NULL

    def __post_init__(self):
        object.__setattr__(self, "role", Role.parse(self.role))
        object.__setattr__(self, "logical_rel", LogicalRel.parse(self.logical_rel))
        object.__setattr__(self, "triplets", tuple(self.triplets))

    @property
    def is_condition(self) -> bool:
        return self.role is Role.CONDITION

    def canonical_triplets(self) -> tuple:
        # lexicographic by (subject, relation, object)
        return tuple(sorted(self.triplets))

    def key(self) -> tuple:
        """Order-insensitive identity used by the equality-based metrics."""
        return (self.role.value, self.canonical_triplets(), self.logical_rel.value)


@dataclass(frozen=True)
class NodeGroup:
    """A grouped set of triplets without a role, as produced by node grouping."""

    triplets: tuple = ()
    logical_rel: LogicalRel = LogicalRel.NULL

    def __post_init__(self):
        object.__setattr__(self, "logical_rel", LogicalRel.parse(self.logical_rel))
        object.__setattr__(self, "triplets", tuple(self.triplets))

    role = None

    def canonical_triplets(self) -> tuple:
        return tuple(sorted(self.triplets))

    def with_role(self, role: Union[str, Role]) -> MdtNode:
        return MdtNode(Role.parse(role), self.triplets, self.logical_rel)


def condition(*triplets: Triplet, logical_rel: Union[str, LogicalRel, None] = None) -> MdtNode:
    """Shorthand for a condition node; the connective defaults to AND for 2+ triplets."""
    if logical_rel is None:
        logical_rel = LogicalRel.AND if len(triplets) > 1 else LogicalRel.NULL
    return MdtNode(Role.CONDITION, triplets, logical_rel)


def decision(*triplets: Triplet, logical_rel: Union[str, LogicalRel, None] = None) -> MdtNode:
    if logical_rel is None:
        logical_rel = LogicalRel.AND if len(triplets) > 1 else LogicalRel.NULL
    return MdtNode(Role.DECISION, triplets, logical_rel)


@dataclass(frozen=True)
class Violation:
    index: int  # node position in the preorder sequence, -1 for whole-tree rules
    rule: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        where = f"node {self.index}" if self.index >= 0 else "tree"
        return f"[{self.severity}] {self.rule} at {where}: {self.message}"


def has_errors(violations: Iterable[Violation]) -> bool:
    return any(v.severity == "error" for v in violations)


def _structure_walk(nodes: Sequence[MdtNode]) -> Iterator[Violation]:
    # Each condition pushes two open child slots; each node fills one.
    open_slots: list[int] = []  # index of the condition owning each open slot
    for i, node in enumerate(nodes):
        if i > 0 and not open_slots:
            yield Violation(
                i, "leftover-nodes", f"{len(nodes) - i} node(s) remain after the root subtree is complete"
            )
            return
        if open_slots:
            open_slots.pop()
        if node.is_condition:
            open_slots.extend((i, i))
    if open_slots:
        owner = open_slots[-1]
        missing = sum(1 for s in open_slots if s == owner)
        side = "left and right children" if missing == 2 else "right child"
        yield Violation(owner, "premature-exhaustion", f"condition node lacks its {side}")


def validate_tree(nodes: Sequence[MdtNode], mode: str = "strict", conformance: bool = False) -> list[Violation]:
    """Check every node-level and tree-level invariant of a preorder sequence.

    Returns a list of violations (empty when the tree is valid). Unknown
    relation labels are errors in strict mode and warnings in lenient mode.
    With ``conformance`` set, trees shallower than the dataset's minimum depth
    of 2 get a warning.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', not {mode!r}")
    if not nodes:
        raise MalformedInput("empty node sequence")

    out: list[Violation] = []
    for i, node in enumerate(nodes):
        n_tri = len(node.triplets)
        if n_tri <= 1 and node.logical_rel is not LogicalRel.NULL:
            out.append(
                Violation(i, "logic-rel-null-iff-single", f"{n_tri} triplet(s) but logical relation {node.logical_rel.value!r}")
            )
        elif n_tri > 1 and node.logical_rel is LogicalRel.NULL:
            out.append(Violation(i, "logic-rel-null-iff-single", f"{n_tri} triplets but logical relation 'null'"))
        if n_tri == 0 and node.is_condition:
            out.append(Violation(i, "empty-condition", "condition node without triplets"))
        for t in node.triplets:
            if not t.subject or not t.object:
                out.append(Violation(i, "empty-entity", f"triplet {t} has an empty subject or object"))
            if t.relation not in RELATION_TYPES:
                sev = "error" if mode == "strict" else "warning"
                out.append(Violation(i, "unknown-relation", f"relation {t.relation!r} not in vocabulary", sev))
    out.extend(_structure_walk(nodes))
    if conformance and not has_errors(out) and preorder_depth(nodes) < 2:
        out.append(Violation(-1, "shallow-tree", "dataset trees have depth 2 to 4", "warning"))
    return out


@dataclass(frozen=True)
class TreeNode:
    node: MdtNode
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def children(self) -> tuple:
        return tuple(c for c in (self.left, self.right) if c is not None)


@dataclass(frozen=True)
class Mdt:
    """A medical decision tree with explicit child links."""

    root: TreeNode

    def preorder(self) -> tuple:
        return serialize_preorder(self)

    def __len__(self) -> int:
        return len(self.preorder())

    @property
    def depth(self) -> int:
        def rec(t: Optional[TreeNode]) -> int:
            return 0 if t is None else 1 + max(rec(t.left), rec(t.right))

        return rec(self.root)


def parse_preorder(nodes: Sequence[MdtNode]) -> Mdt:
    """Rebuild the tree encoded by a preorder node sequence.

    Condition nodes consume their left subtree and then their right subtree;
    decision nodes are leaves.
    """
    if not nodes:
        raise MalformedInput("empty node sequence")
    pos = 0

    def build() -> TreeNode:
        nonlocal pos
        idx = pos
        node = nodes[idx]
        pos += 1
        if not node.is_condition:
            return TreeNode(node)
        children = []
        for _ in range(2):
            if pos >= len(nodes):
                raise PrematureExhaustion(f"condition node {idx} lacks children")
            children.append(build())
        return TreeNode(node, children[0], children[1])

    root = build()
    if pos != len(nodes):
        raise LeftoverNodes(f"{len(nodes) - pos} node(s) remain after index {pos - 1}")
    return Mdt(root)


def serialize_preorder(tree: Mdt) -> tuple:
    out: list[MdtNode] = []
    stack = [tree.root]
    while stack:
        t = stack.pop()
        if t.node.is_condition:
            if t.left is None or t.right is None:
                raise InvalidTree("condition node with a missing child")
            stack.append(t.right)
            stack.append(t.left)
        elif t.left is not None or t.right is not None:
            raise InvalidTree("decision node with children")
        out.append(t.node)
    return tuple(out)


def as_tree(tree: Union[Mdt, Sequence[MdtNode]]) -> Mdt:
    if isinstance(tree, Mdt):
        return tree
    return parse_preorder(tree)


@dataclass(frozen=True)
class DecisionPath:
    steps: tuple  # ((MdtNode, Branch), ...)

    def key(self) -> tuple:
        return tuple((node.key(), branch.value) for node, branch in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def decision_paths(tree: Union[Mdt, Sequence[MdtNode]]) -> list[DecisionPath]:
    """All root-to-leaf paths, left to right."""
    tree = as_tree(tree)
    serialize_preorder(tree)  # structural check
    paths: list[DecisionPath] = []

    def rec(t: TreeNode, prefix: tuple):
        if not t.node.is_condition:
            paths.append(DecisionPath(prefix + ((t.node, Branch.TERMINAL),)))
            return
        rec(t.left, prefix + ((t.node, Branch.LEFT),))
        rec(t.right, prefix + ((t.node, Branch.RIGHT),))

    rec(tree.root, ())
    return paths


def extract_triplets(tree: Union[Mdt, Sequence[MdtNode]], dedupe: bool = False) -> list[Triplet]:
    """Triplets of every node in preorder; duplicates kept unless ``dedupe``."""
    nodes = tree.preorder() if isinstance(tree, Mdt) else tree
    out = [t for node in nodes for t in node.triplets]
    if dedupe:
        out = list(dict.fromkeys(out))
    return out


def preorder_depth(nodes: Sequence[MdtNode]) -> int:
    """Number of levels spanned by a preorder sequence.

    Tolerates malformed sequences (missing children or leftovers), which is
    what corpus statistics over leniently loaded files need.
    """
    depth = 0
    open_levels: list[int] = []
    for i, node in enumerate(nodes):
        level = open_levels.pop() if open_levels else 1
        depth = max(depth, level)
        if node.is_condition:
            open_levels.extend((level + 1, level + 1))
    return depth
