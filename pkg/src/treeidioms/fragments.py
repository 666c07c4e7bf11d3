"""Idiom fragments: AST fragments with labeled holes, and matching.

A fragment is a tree of Interior/Token nodes that may have Hole leaves in
nonterminal positions. A hole binds a whole subtree of its nonterminal type;
identically labeled holes must bind node-identical subtrees (structural
equality including lexemes). Token nodes inside a fragment match on the
exact lexeme.

Idiom file format: JSON, ``{"idioms": [{"id": int, "root": <fragnode>}]}``
where <fragnode> extends the corpus node forms with ``{"hole": label,
"nt": name}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .grammar import (
    CorpusEntry, FragNode, Grammar, Hole, Interior, Node, NodePath, Token,
    Violation, iter_nodes, node_at,
)


class FragmentError(ValueError):
    pass


class InstantiateError(ValueError):
    def __init__(self, message: str, label: Optional[str] = None):
        super().__init__(message)
        self.label = label


@dataclass(frozen=True)
class Fragment:
    id: int
    root: Interior  # may contain Hole leaves

    def __post_init__(self):
        if not isinstance(self.root, Interior):
            raise FragmentError("fragment root must be an interior node")
        types: dict[str, str] = {}
        for _, n in iter_nodes(self.root):
            if isinstance(n, Hole):
                if types.setdefault(n.label, n.nt) != n.nt:
                    raise FragmentError(
                        f"hole label {n.label!r} used with types "
                        f"{types[n.label]!r} and {n.nt!r}")

    @property
    def size(self) -> int:
        """Number of non-hole nodes."""
        return fragment_size(self.root)


def fragment_size(root: FragNode) -> int:
    return sum(1 for _, n in iter_nodes(root) if not isinstance(n, Hole))


def hole_labels(root: FragNode) -> list[str]:
    """Distinct hole labels in depth-first order of first appearance."""
    seen: list[str] = []
    for _, n in iter_nodes(root):
        if isinstance(n, Hole) and n.label not in seen:
            seen.append(n.label)
    return seen


def hole_paths(root: FragNode) -> list[tuple[NodePath, Hole]]:
    return [(p, n) for p, n in iter_nodes(root) if isinstance(n, Hole)]


def is_terminal_idiom(fragment: Fragment) -> bool:
    """True iff the fragment has no holes (fully concrete)."""
    return not any(isinstance(n, Hole) for _, n in iter_nodes(fragment.root))


def validate_fragment(grammar: Grammar, fragment: Fragment) -> list[Violation]:
    """Grammar conformance for fragments: like validate_ast, but a Hole is
    acceptable wherever a nonterminal of its type is expected."""
    out: list[Violation] = []
    for path, node in iter_nodes(fragment.root):
        if not isinstance(node, Interior):
            continue
        if not grammar.has_production(node.production_id):
            out.append(Violation(path, f"unknown production {node.production_id}"))
            continue
        prod = grammar.production(node.production_id)
        if prod.lhs != node.nt:
            out.append(Violation(path, f"production {prod.id} expands {prod.lhs!r}"))
        if len(node.children) != len(prod.rhs):
            out.append(Violation(path, f"arity mismatch for production {prod.id}"))
            continue
        for i, (sym, child) in enumerate(zip(prod.rhs, node.children)):
            if sym.is_nonterminal:
                ok = (isinstance(child, Interior) and child.nt == sym.name) or \
                     (isinstance(child, Hole) and child.nt == sym.name)
                if not ok:
                    out.append(Violation(path + (i,), f"expected nonterminal {sym.name!r}"))
            else:
                if not isinstance(child, Token) or child.term_class != sym.name:
                    out.append(Violation(path + (i,), f"expected terminal class {sym.name!r}"))
    return out


@dataclass
class Occurrence:
    idiom_id: int
    entry_id: Optional[str]
    anchor: NodePath
    bindings: dict[str, NodePath]  # hole label -> absolute path of bound subtree


class IdiomSet:
    """An ordered set of fragments with dense ids, indexed by root symbol."""

    def __init__(self, grammar: Grammar, fragments):
        self.grammar = grammar
        self.fragments: tuple[Fragment, ...] = tuple(fragments)
        ids = [f.id for f in self.fragments]
        if ids != list(range(len(ids))):
            raise FragmentError("idiom ids must be dense from 0")
        self.by_root_nt: dict[str, tuple[Fragment, ...]] = {}
        self.by_root_production: dict[int, tuple[Fragment, ...]] = {}
        for f in self.fragments:
            self.by_root_nt.setdefault(f.root.nt, ())
            self.by_root_nt[f.root.nt] += (f,)
            self.by_root_production.setdefault(f.root.production_id, ())
            self.by_root_production[f.root.production_id] += (f,)

    def fragment(self, idiom_id: int) -> Fragment:
        if 0 <= idiom_id < len(self.fragments):
            return self.fragments[idiom_id]
        raise KeyError(idiom_id)

    def rooted_at(self, nt: str) -> tuple[Fragment, ...]:
        return self.by_root_nt.get(nt, ())

    def __len__(self):
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)


def match_at(fragment: Fragment, root: Node, anchor: NodePath) -> Optional[Occurrence]:
    """Match the fragment against the subtree at `anchor`.

    Returns an occurrence iff the subtree is an instantiation of the
    fragment: interior/token fragment nodes must coincide node-for-node,
    holes bind whole subtrees of their nonterminal type, and repeated labels
    must bind node-identical subtrees.
    """
    target = node_at(root, anchor)
    bindings: dict[str, NodePath] = {}
    bound: dict[str, Node] = {}

    def walk(fnode: FragNode, node: Node, path: NodePath) -> bool:
        if isinstance(fnode, Hole):
            if not isinstance(node, Interior) or node.nt != fnode.nt:
                return False
            prev = bound.get(fnode.label)
            if prev is not None:
                return prev == node
            bound[fnode.label] = node
            bindings[fnode.label] = path
            return True
        if isinstance(fnode, Token):
            return (isinstance(node, Token) and node.term_class == fnode.term_class
                    and node.lexeme == fnode.lexeme)
        if not isinstance(node, Interior) or node.production_id != fnode.production_id \
                or node.nt != fnode.nt:
            return False
        return all(walk(fc, nc, path + (i,))
                   for i, (fc, nc) in enumerate(zip(fnode.children, node.children)))

    if walk(fragment.root, target, anchor):
        return Occurrence(fragment.id, None, anchor, bindings)
    return None


def find_occurrences(idioms: IdiomSet, entry: CorpusEntry) -> list[Occurrence]:
    """Every occurrence of every idiom at every anchor, nested and
    overlapping ones included; ordered by anchor (depth-first) then idiom id."""
    out: list[Occurrence] = []
    for path, node in iter_nodes(entry.ast):
        if not isinstance(node, Interior):
            continue
        for frag in idioms.by_root_production.get(node.production_id, ()):
            occ = match_at(frag, entry.ast, path)
            if occ is not None:
                occ.entry_id = entry.id
                out.append(occ)
    return out


def instantiate(fragment: Fragment, bindings: dict[str, Node]) -> Interior:
    """Substitute a subtree for every hole. Bound subtrees' root
    nonterminals must match the hole types."""

    def walk(fnode: FragNode) -> Node:
        if isinstance(fnode, Hole):
            try:
                sub = bindings[fnode.label]
            except KeyError:
                raise InstantiateError(f"no binding for hole {fnode.label!r}",
                                       label=fnode.label) from None
            if not isinstance(sub, Interior) or sub.nt != fnode.nt:
                raise InstantiateError(
                    f"hole {fnode.label!r} has type {fnode.nt!r}, binding does not match",
                    label=fnode.label)
            return sub
        if isinstance(fnode, Token):
            return fnode
        return Interior(fnode.nt, fnode.production_id,
                        tuple(walk(c) for c in fnode.children))

    return walk(fragment.root)


def covered_paths(fragment: Fragment, anchor: NodePath) -> list[NodePath]:
    """Absolute paths of the nodes an occurrence at `anchor` covers, i.e.
    the non-hole nodes of the instantiation (the steps ApplyIdiom replaces)."""
    return [anchor + p for p, n in iter_nodes(fragment.root) if not isinstance(n, Hole)]


def binding_subtrees(root: Node, occ: Occurrence) -> dict[str, Node]:
    return {label: node_at(root, path) for label, path in occ.bindings.items()}


# ---------------------------------------------------------------------------
# serialization

def frag_node_to_json(node: FragNode) -> dict:
    if isinstance(node, Hole):
        return {"hole": node.label, "nt": node.nt}
    if isinstance(node, Token):
        return {"t": node.term_class, "lex": node.lexeme}
    return {"p": node.production_id,
            "children": [frag_node_to_json(c) for c in node.children]}


def frag_node_from_json(obj: dict, grammar: Grammar) -> FragNode:
    if "hole" in obj:
        return Hole(obj["hole"], obj["nt"])
    if "t" in obj:
        return Token(obj["t"], obj["lex"])
    pid = int(obj["p"])
    prod = grammar.production(pid)
    children = tuple(frag_node_from_json(c, grammar) for c in obj.get("children", []))
    return Interior(prod.lhs, pid, children)


def canonical_fragment_key(root: FragNode) -> str:
    """Stable string identity for a fragment body (used for deterministic
    ordering, never parsed back)."""
    return json.dumps(frag_node_to_json(root), sort_keys=True, separators=(",", ":"))


def save_idioms(idioms: IdiomSet, path) -> None:
    obj = {"idioms": [{"id": f.id, "root": frag_node_to_json(f.root)}
                      for f in idioms.fragments]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_idioms(path, grammar: Grammar) -> IdiomSet:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    frags = []
    for item in sorted(obj["idioms"], key=lambda d: d["id"]):
        root = frag_node_from_json(item["root"], grammar)
        frags.append(Fragment(int(item["id"]), root))
    return IdiomSet(grammar, frags)
