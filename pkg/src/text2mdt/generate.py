"""Random valid trees and score tables, for fuzzing and property tests."""

from __future__ import annotations

import random
from typing import Optional

import numpy as np

from .core import RELATION_TYPES, LogicalRel, Mdt, MdtNode, Role, Triplet, TreeNode

ENTITIES = ("患者", "发热", "咳嗽", "头孢", "阿莫西林", "儿童", "孕妇", "手术", "10mg", "过敏")


def random_triplet(rng: random.Random, vocab: int = len(ENTITIES)) -> Triplet:
    ents = ENTITIES[:vocab]
    return Triplet(rng.choice(ents), rng.choice(RELATION_TYPES), rng.choice(ents))


def random_node(rng: random.Random, role: Role, max_triplets: int = 3, vocab: int = len(ENTITIES)) -> MdtNode:
    lo = 1 if role is Role.CONDITION else 0
    n = rng.randint(lo, max_triplets)
    triplets = tuple(random_triplet(rng, vocab) for _ in range(n))
    rel = rng.choice((LogicalRel.AND, LogicalRel.OR)) if n > 1 else LogicalRel.NULL
    return MdtNode(role, triplets, rel)


def random_tree(
    rng: random.Random,
    max_conditions: int = 4,
    max_triplets: int = 3,
    vocab: int = len(ENTITIES),
    n_conditions: Optional[int] = None,
) -> Mdt:
    """A random valid tree with up to ``max_conditions`` condition nodes."""
    if n_conditions is None:
        n_conditions = rng.randint(0, max_conditions)

    def build(k: int) -> TreeNode:
        if k == 0:
            return TreeNode(random_node(rng, Role.DECISION, max_triplets, vocab))
        left = rng.randint(0, k - 1)
        node = random_node(rng, Role.CONDITION, max_triplets, vocab)
        return TreeNode(node, build(left), build(k - 1 - left))

    return Mdt(build(n_conditions))


def random_table(rng: np.random.Generator, n: int, k: int, sharpness: float = 3.0) -> np.ndarray:
    """An n x n x k table of softmax-normalised random scores."""
    logits = rng.normal(scale=sharpness, size=(n, n, k))
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
