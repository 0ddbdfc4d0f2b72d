"""Medical decision trees: data model, metrics, decoders and dataset tooling."""

__version__ = "0.1.0"

from .core import (
    RELATION_TYPES,
    Branch,
    DecisionPath,
    InvalidTree,
    LeftoverNodes,
    LogicalRel,
    MalformedInput,
    Mdt,
    MdtError,
    MdtNode,
    NodeGroup,
    PrematureExhaustion,
    Role,
    TreeNode,
    Triplet,
    Violation,
    condition,
    decision,
    decision_paths,
    extract_triplets,
    has_errors,
    parse_preorder,
    serialize_preorder,
    validate_tree,
)
from .metrics import (
    PRF,
    EvalConfig,
    EvalReport,
    edit_distance,
    evaluate,
    ng_ed,
    ng_lr,
    tree_acc,
    tree_lr,
    dp_f1,
    triplet_prf,
)
