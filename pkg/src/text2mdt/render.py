"""Text and Graphviz drawings of decision trees.

Left children are the "Yes" branch and right children the "No" branch.
Conditions are drawn as diamonds, decisions as boxes.
"""

from __future__ import annotations

from typing import Sequence, Union

from .core import Mdt, MdtNode, TreeNode, as_tree


def node_label(node: MdtNode) -> str:
    if not node.triplets:
        return "(none)"
    joiner = f" {node.logical_rel.value.upper()} " if len(node.triplets) > 1 else ""
    return joiner.join(str(t) for t in node.triplets)


def _mark(node: MdtNode) -> str:
    return "<C>" if node.is_condition else "[D]"


def render_ascii(tree: Union[Mdt, Sequence[MdtNode]]) -> str:
    tree = as_tree(tree)
    lines = [f"{_mark(tree.root.node)} {node_label(tree.root.node)}"]

    def rec(t: TreeNode, indent: str):
        if not t.node.is_condition:
            return
        for branch, child, last in (("Yes", t.left, False), ("No", t.right, True)):
            elbow = "└─" if last else "├─"
            lines.append(f"{indent}{elbow} {branch}: {_mark(child.node)} {node_label(child.node)}")
            rec(child, indent + ("   " if last else "│  "))

    rec(tree.root, "")
    return "\n".join(lines)


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def render_dot(tree: Union[Mdt, Sequence[MdtNode]], name: str = "mdt") -> str:
    tree = as_tree(tree)
    out = [f"digraph {_dot_quote(name)} {{", "  node [fontname=\"sans-serif\"];"]
    counter = 0

    def rec(t: TreeNode) -> str:
        nonlocal counter
        nid = f"n{counter}"
        counter += 1
        shape = "diamond" if t.node.is_condition else "box"
        out.append(f"  {nid} [shape={shape}, label={_dot_quote(node_label(t.node))}];")
        if t.node.is_condition:
            yes = rec(t.left)
            out.append(f"  {nid} -> {yes} [label=\"Yes\"];")
            no = rec(t.right)
            out.append(f"  {nid} -> {no} [label=\"No\"];")
        return nid

    rec(tree.root)
    out.append("}")
    return "\n".join(out)
