import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

from text2mdt.core import LogicalRel, Mdt, MdtNode, Role, TreeNode, Triplet
from text2mdt.generate import random_tree

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

ENTITIES = ["患者", "发热", "咳嗽", "头孢", "儿童"]
RELS = ["clinical_feature", "therapeutic_drug", "medical_option"]

triplets = st.builds(Triplet, st.sampled_from(ENTITIES), st.sampled_from(RELS), st.sampled_from(ENTITIES))


@st.composite
def nodes(draw, role):
    lo = 1 if role is Role.CONDITION else 0
    ts = draw(st.lists(triplets, min_size=lo, max_size=3))
    rel = draw(st.sampled_from([LogicalRel.AND, LogicalRel.OR])) if len(ts) > 1 else LogicalRel.NULL
    return MdtNode(role, tuple(ts), rel)


@st.composite
def trees(draw, max_conditions=4):
    k = draw(st.integers(0, max_conditions))

    def build(k):
        if k == 0:
            return TreeNode(draw(nodes(Role.DECISION)))
        left = draw(st.integers(0, k - 1))
        return TreeNode(draw(nodes(Role.CONDITION)), build(left), build(k - 1 - left))

    return Mdt(build(k))


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def rng():
    return random.Random(20241017)


@pytest.fixture
def sample_tree(rng):
    return random_tree(rng)
