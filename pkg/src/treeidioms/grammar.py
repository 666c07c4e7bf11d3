"""Context-free grammars, abstract syntax trees, and corpus serialization.

Trees are immutable values: interior nodes reference a grammar production and
hold their children positionally, token leaves carry a terminal-class name and
an opaque lexeme. Everything hashes and compares structurally, so subtrees can
be used directly as dictionary keys (the fragment miner relies on this).

File formats:
  grammar:  JSON object  {"start", "terminal_classes", "productions": [
                {"id", "lhs", "rhs": [{"nt": name} | {"tc": name}]}]}
  corpus:   JSON Lines, one object per entry:
                {"id", "spec", "ast": <node>}
            where <node> is {"p": production_id, "children": [<node>]}
            or {"t": terminal_class, "lex": lexeme}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional, Union

NodePath = tuple[int, ...]


class GrammarError(ValueError):
    """A grammar definition violates its invariants."""


class CorpusError(ValueError):
    """A corpus or grammar file is malformed or inconsistent."""

    def __init__(self, message: str, line: Optional[int] = None,
                 entry_id: Optional[str] = None):
        if line is not None:
            message = f"line {line}: {message}"
        if entry_id is not None:
            message = f"entry {entry_id!r}: {message}"
        super().__init__(message)
        self.line = line
        self.entry_id = entry_id


@dataclass(frozen=True)
class Sym:
    """One right-hand-side slot: a nonterminal or a terminal class."""

    kind: str  # "nt" | "tc"
    name: str

    @staticmethod
    def nt(name: str) -> "Sym":
        return Sym("nt", name)

    @staticmethod
    def tc(name: str) -> "Sym":
        return Sym("tc", name)

    @property
    def is_nonterminal(self) -> bool:
        return self.kind == "nt"


@dataclass(frozen=True)
class Production:
    id: int
    lhs: str
    rhs: tuple[Sym, ...]


@dataclass(frozen=True)
class Interior:
    """An AST node produced by expanding `production_id`; children are
    positional and must match the production's rhs."""

    nt: str
    production_id: int
    children: tuple

    def __repr__(self):
        return f"Interior({self.nt}#{self.production_id}, {len(self.children)} kids)"


@dataclass(frozen=True)
class Token:
    term_class: str
    lexeme: str


@dataclass(frozen=True)
class Hole:
    """A labeled nonterminal leaf. Valid only inside idiom fragments; a
    concrete AST never contains one. Identically labeled holes must stand
    for identical subtrees."""

    label: str
    nt: str


Node = Union[Interior, Token]
FragNode = Union[Interior, Token, Hole]


class Grammar:
    """A context-free grammar over nonterminals and terminal classes.

    Nonterminals are derived from production left-hand sides; every rhs
    symbol must be declared, production ids must be dense from 0, and the
    nonterminal / terminal-class namespaces must not overlap.
    """

    def __init__(self, productions, start: str, terminal_classes):
        self.productions: tuple[Production, ...] = tuple(productions)
        self.start = start
        self.terminal_classes = frozenset(terminal_classes)
        self.nonterminals = frozenset(p.lhs for p in self.productions)
        self._check()
        self.by_lhs: dict[str, tuple[Production, ...]] = {}
        for p in self.productions:
            self.by_lhs.setdefault(p.lhs, ())
            self.by_lhs[p.lhs] = self.by_lhs[p.lhs] + (p,)
        self._by_id = {p.id: p for p in self.productions}

    def _check(self):
        ids = sorted(p.id for p in self.productions)
        if ids != list(range(len(self.productions))):
            raise GrammarError("production ids must be unique and dense from 0")
        if self.start not in self.nonterminals:
            raise GrammarError(f"start symbol {self.start!r} has no production")
        overlap = self.nonterminals & self.terminal_classes
        if overlap:
            raise GrammarError(f"names used as both nonterminal and terminal class: {sorted(overlap)}")
        for p in self.productions:
            for sym in p.rhs:
                if sym.is_nonterminal:
                    if sym.name not in self.nonterminals:
                        raise GrammarError(
                            f"production {p.id}: rhs nonterminal {sym.name!r} has no production")
                elif sym.name not in self.terminal_classes:
                    raise GrammarError(
                        f"production {p.id}: undeclared terminal class {sym.name!r}")

    def production(self, pid: int) -> Production:
        try:
            return self._by_id[pid]
        except KeyError:
            raise GrammarError(f"unknown production id {pid}") from None

    def has_production(self, pid: int) -> bool:
        return pid in self._by_id

    def __eq__(self, other):
        return (isinstance(other, Grammar)
                and self.productions == other.productions
                and self.start == other.start
                and self.terminal_classes == other.terminal_classes)


@dataclass
class CorpusEntry:
    id: str
    spec: str  # natural-language task text; carried through, never interpreted
    ast: Interior


@dataclass(frozen=True)
class Violation:
    path: NodePath
    message: str


def node_at(root: Node, path: NodePath) -> Node:
    node = root
    for i, idx in enumerate(path):
        if not isinstance(node, Interior) or idx >= len(node.children):
            raise ValueError(f"path {path} does not resolve (failed at {path[:i + 1]})")
        node = node.children[idx]
    return node


def iter_nodes(root: Node, prefix: NodePath = ()) -> Iterator[tuple[NodePath, Node]]:
    """Yield (path, node) pairs in depth-first preorder."""
    stack = [(prefix, root)]
    while stack:
        path, node = stack.pop()
        yield path, node
        if isinstance(node, Interior):
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))


def node_count(root: Node) -> int:
    return sum(1 for _ in iter_nodes(root))


def validate_ast(grammar: Grammar, root: Node,
                 require_start: bool = False) -> list[Violation]:
    """Check a tree against the grammar; violations are data, not failures."""
    out: list[Violation] = []
    if require_start and (not isinstance(root, Interior) or root.nt != grammar.start):
        got = root.nt if isinstance(root, Interior) else f"token {root.term_class!r}"
        out.append(Violation((), f"root must be the start symbol {grammar.start!r}, got {got}"))
    for path, node in iter_nodes(root):
        if isinstance(node, Token):
            continue
        if isinstance(node, Hole):
            out.append(Violation(path, f"hole {node.label!r} is not allowed in a concrete tree"))
            continue
        if not grammar.has_production(node.production_id):
            out.append(Violation(path, f"unknown production {node.production_id}"))
            continue
        prod = grammar.production(node.production_id)
        if prod.lhs != node.nt:
            out.append(Violation(
                path, f"production {prod.id} expands {prod.lhs!r}, node claims {node.nt!r}"))
        if len(node.children) != len(prod.rhs):
            out.append(Violation(
                path, f"production {prod.id} has arity {len(prod.rhs)}, node has {len(node.children)}"))
            continue
        for i, (sym, child) in enumerate(zip(prod.rhs, node.children)):
            if sym.is_nonterminal:
                if not isinstance(child, Interior) or child.nt != sym.name:
                    out.append(Violation(path + (i,), f"expected nonterminal {sym.name!r}"))
            else:
                if not isinstance(child, Token) or child.term_class != sym.name:
                    out.append(Violation(path + (i,), f"expected terminal class {sym.name!r}"))
    return out


def is_valid(grammar: Grammar, root: Node) -> bool:
    return not validate_ast(grammar, root)


# ---------------------------------------------------------------------------
# serialization

def grammar_to_json(grammar: Grammar) -> dict:
    return {
        "start": grammar.start,
        "terminal_classes": sorted(grammar.terminal_classes),
        "productions": [
            {"id": p.id, "lhs": p.lhs,
             "rhs": [{"nt": s.name} if s.is_nonterminal else {"tc": s.name} for s in p.rhs]}
            for p in sorted(grammar.productions, key=lambda p: p.id)
        ],
    }


def grammar_from_json(obj: dict) -> Grammar:
    try:
        prods = []
        for p in obj["productions"]:
            rhs = []
            for s in p["rhs"]:
                if "nt" in s:
                    rhs.append(Sym.nt(s["nt"]))
                elif "tc" in s:
                    rhs.append(Sym.tc(s["tc"]))
                else:
                    raise CorpusError(f"rhs symbol must have 'nt' or 'tc': {s}")
            prods.append(Production(int(p["id"]), p["lhs"], tuple(rhs)))
        return Grammar(prods, obj["start"], obj["terminal_classes"])
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed grammar object: {exc}") from exc


def save_grammar(grammar: Grammar, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(grammar_to_json(grammar), fh, indent=2)
        fh.write("\n")


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"grammar file is not valid JSON: {exc}") from exc
    return grammar_from_json(obj)


def node_to_json(node: Node) -> dict:
    if isinstance(node, Token):
        return {"t": node.term_class, "lex": node.lexeme}
    return {"p": node.production_id, "children": [node_to_json(c) for c in node.children]}


def node_from_json(obj: dict, grammar: Grammar) -> Node:
    if "t" in obj:
        return Token(obj["t"], obj["lex"])
    if "p" not in obj:
        raise CorpusError(f"node object must have 'p' or 't': {obj}")
    pid = int(obj["p"])
    if not grammar.has_production(pid):
        raise CorpusError(f"unknown production {pid} in node")
    prod = grammar.production(pid)
    children = tuple(node_from_json(c, grammar) for c in obj.get("children", []))
    return Interior(prod.lhs, pid, children)


def save_corpus(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({"id": e.id, "spec": e.spec, "ast": node_to_json(e.ast)}))
            fh.write("\n")


def load_corpus(path, grammar: Grammar) -> list[CorpusEntry]:
    """Load a JSONL corpus, validating every tree against the grammar."""
    entries: list[CorpusEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"not valid JSON: {exc}", line=lineno) from exc
            try:
                eid, spec, ast_obj = obj["id"], obj["spec"], obj["ast"]
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"missing field {exc}", line=lineno) from exc
            if eid in seen:
                raise CorpusError("duplicate entry id", line=lineno, entry_id=eid)
            seen.add(eid)
            try:
                root = node_from_json(ast_obj, grammar)
            except CorpusError as exc:
                raise CorpusError(str(exc), line=lineno, entry_id=eid) from exc
            bad = validate_ast(grammar, root, require_start=True)
            if bad:
                v = bad[0]
                raise CorpusError(f"invalid ast at path {list(v.path)}: {v.message}",
                                  line=lineno, entry_id=eid)
            entries.append(CorpusEntry(eid, spec, root))
    return entries
