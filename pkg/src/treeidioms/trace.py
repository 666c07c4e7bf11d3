"""Depth-first action traces over ASTs.

A trace linearizes a tree into the sequence of decisions a top-down,
left-to-right generator would take: ApplyRule at every interior node,
GetToken at every token leaf. Traces may additionally contain ApplyIdiom
steps, which emit a whole fragment in one action; replay inlines the
fragment body and continues at its holes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .grammar import (
    Grammar, Hole, Interior, Node, NodePath, Sym, Token, validate_ast,
)


@dataclass(frozen=True)
class ApplyRule:
    production_id: int


@dataclass(frozen=True)
class ApplyIdiom:
    idiom_id: int


@dataclass(frozen=True)
class GetToken:
    lexeme: str


Action = Union[ApplyRule, ApplyIdiom, GetToken]


@dataclass(frozen=True)
class TraceStep:
    t: int  # 1-based
    frontier: NodePath
    action: Action


ActionTrace = list[TraceStep]


class ReplayError(ValueError):
    """A trace is illegal for the grammar/idiom set it is replayed against."""

    def __init__(self, message: str, timestep: Optional[int] = None,
                 expected: Optional[str] = None):
        if timestep is not None:
            message = f"step {timestep}: {message}"
        super().__init__(message)
        self.timestep = timestep
        self.expected = expected


def to_trace(grammar: Grammar, root: Interior) -> ActionTrace:
    """Linearize a valid tree. The result has exactly one step per node."""
    bad = validate_ast(grammar, root)
    if bad:
        v = bad[0]
        raise ValueError(f"invalid ast at path {list(v.path)}: {v.message}")
    steps: ActionTrace = []
    stack: list[tuple[NodePath, Node]] = [((), root)]
    while stack:
        path, node = stack.pop()
        if isinstance(node, Token):
            steps.append(TraceStep(len(steps) + 1, path, GetToken(node.lexeme)))
        else:
            steps.append(TraceStep(len(steps) + 1, path, ApplyRule(node.production_id)))
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))
    return steps


def _actions_of(trace) -> list[tuple[Action, Optional[NodePath]]]:
    out = []
    for item in trace:
        if isinstance(item, TraceStep):
            out.append((item.action, item.frontier))
        else:
            out.append((item, None))
    return out


def from_trace(grammar: Grammar, trace, idioms=None,
               start: Optional[str] = None) -> Interior:
    """Replay a trace into a tree, inlining ApplyIdiom steps.

    `trace` may hold TraceStep items or bare actions. When frontier paths are
    present they are checked against the replay position. `idioms` is any
    object with a ``fragment(id)`` accessor; it is only required when the
    trace contains ApplyIdiom steps. Replay does not re-check that repeated
    hole labels received identical subtrees -- the actions fully determine
    the tree, and matching enforces that constraint where it matters.
    """
    items = _actions_of(trace)
    start_sym = start if start is not None else grammar.start
    pos = 0

    def take(path: NodePath, expected: str):
        nonlocal pos
        if pos >= len(items):
            raise ReplayError(f"trace ends but frontier {list(path)} still expects {expected!r}",
                              timestep=pos + 1, expected=expected)
        action, frontier = items[pos]
        if frontier is not None and frontier != path:
            raise ReplayError(
                f"frontier mismatch: step says {list(frontier)}, replay is at {list(path)}",
                timestep=pos + 1)
        pos += 1
        return action

    def build_nt(nt: str, path: NodePath) -> Interior:
        t = pos + 1
        action = take(path, nt)
        if isinstance(action, ApplyRule):
            if not grammar.has_production(action.production_id):
                raise ReplayError(f"unknown production {action.production_id}", timestep=t)
            prod = grammar.production(action.production_id)
            if prod.lhs != nt:
                raise ReplayError(
                    f"production {prod.id} expands {prod.lhs!r}, frontier expects {nt!r}",
                    timestep=t, expected=nt)
            children = tuple(
                build_sym(sym, path + (i,)) for i, sym in enumerate(prod.rhs))
            return Interior(nt, prod.id, children)
        if isinstance(action, ApplyIdiom):
            if idioms is None:
                raise ReplayError(f"trace uses idiom {action.idiom_id} but no idiom set given",
                                  timestep=t)
            try:
                frag = idioms.fragment(action.idiom_id)
            except KeyError:
                raise ReplayError(f"unresolved idiom id {action.idiom_id}", timestep=t) from None
            if frag.root.nt != nt:
                raise ReplayError(
                    f"idiom {action.idiom_id} is rooted at {frag.root.nt!r}, frontier expects {nt!r}",
                    timestep=t, expected=nt)
            return build_frag(frag.root, path)
        raise ReplayError(f"frontier expects nonterminal {nt!r}, got token action", timestep=t,
                          expected=nt)

    def build_tc(tc: str, path: NodePath) -> Token:
        t = pos + 1
        action = take(path, tc)
        if not isinstance(action, GetToken):
            raise ReplayError(f"frontier expects terminal class {tc!r}, got {action}", timestep=t,
                              expected=tc)
        return Token(tc, action.lexeme)

    def build_sym(sym: Sym, path: NodePath) -> Node:
        if sym.is_nonterminal:
            return build_nt(sym.name, path)
        return build_tc(sym.name, path)

    def build_frag(fnode, path: NodePath) -> Node:
        # inline the fragment body; holes resume normal trace consumption
        if isinstance(fnode, Hole):
            return build_nt(fnode.nt, path)
        if isinstance(fnode, Token):
            return fnode
        children = tuple(
            build_frag(c, path + (i,)) for i, c in enumerate(fnode.children))
        return Interior(fnode.nt, fnode.production_id, children)

    root = build_nt(start_sym, ())
    if pos != len(items):
        raise ReplayError(f"{len(items) - pos} trailing action(s) after the tree completed",
                          timestep=pos + 1)
    return root
