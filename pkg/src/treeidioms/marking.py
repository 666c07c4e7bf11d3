"""Annotate a corpus with all idiom occurrences and quantify overlap.

Marking preserves every occurrence, overlapping and nested ones included.
The greedy rewrite is the deterministic baseline it replaces: scan
occurrences in (rank, position) order, keep one whenever none of its covered
timesteps was already consumed, and rewrite kept ones into ApplyIdiom
actions. The fraction it throws away is the statistic of interest.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .fragments import IdiomSet, Occurrence, covered_paths, find_occurrences
from .grammar import CorpusEntry, CorpusError, Grammar, NodePath, node_from_json, validate_ast
from .trace import ActionTrace, ApplyIdiom, TraceStep, to_trace


@dataclass
class MarkedEntry:
    entry: CorpusEntry
    trace: ActionTrace  # original trace, one step per node
    occurrences: list[Occurrence]
    t_of_path: dict[NodePath, int]
    by_timestep: dict[int, list[Occurrence]] = field(default_factory=dict)

    def anchored_at(self, t: int) -> list[Occurrence]:
        return self.by_timestep.get(t, [])


@dataclass
class MarkedCorpus:
    grammar: Grammar
    idioms: IdiomSet
    entries: list[MarkedEntry]

    def entry(self, entry_id: str) -> MarkedEntry:
        for me in self.entries:
            if me.entry.id == entry_id:
                return me
        raise KeyError(f"unknown entry {entry_id!r}")


@dataclass
class OverlapStats:
    total_occurrences: int
    kept_by_greedy: int
    discard_rate: float
    usage: dict[int, int]  # idiom id -> occurrences kept


def _mark_entry(grammar: Grammar, idioms: IdiomSet, entry: CorpusEntry) -> MarkedEntry:
    trace = to_trace(grammar, entry.ast)
    t_of = {step.frontier: step.t for step in trace}
    occs = find_occurrences(idioms, entry)
    me = MarkedEntry(entry, trace, occs, t_of)
    for occ in occs:
        me.by_timestep.setdefault(t_of[occ.anchor], []).append(occ)
    return me


def mark(corpus, idioms: IdiomSet, grammar: Grammar | None = None,
         threads: int = 1) -> MarkedCorpus:
    grammar = grammar or idioms.grammar
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(lambda e: _mark_entry(grammar, idioms, e), corpus))
    else:
        entries = [_mark_entry(grammar, idioms, e) for e in corpus]
    return MarkedCorpus(grammar, idioms, entries)


def occurrence_timesteps(marked_entry: MarkedEntry, idioms: IdiomSet,
                         occ: Occurrence) -> list[int]:
    frag = idioms.fragment(occ.idiom_id)
    return [marked_entry.t_of_path[p] for p in covered_paths(frag, occ.anchor)]


def greedy_rewrite(marked: MarkedCorpus, order=None) -> tuple[list[tuple[str, ActionTrace]], OverlapStats]:
    """Deterministically rewrite each entry, keeping at most one occurrence
    per covered timestep. `order` is a ranked list of idiom ids (defaults to
    the idiom set's own order); occurrences are scanned by (rank, anchor
    position). Returns the rewritten traces and the overlap statistics.
    """
    idioms = marked.idioms
    if order is None:
        order = [f.id for f in idioms.fragments]
    rank = {fid: i for i, fid in enumerate(order)}

    total = 0
    kept = 0
    usage: dict[int, int] = {f.id: 0 for f in idioms.fragments}
    rewritten: list[tuple[str, ActionTrace]] = []

    for me in marked.entries:
        total += len(me.occurrences)
        candidates = [occ for occ in me.occurrences if occ.idiom_id in rank]
        candidates.sort(key=lambda occ: (rank[occ.idiom_id], me.t_of_path[occ.anchor]))
        consumed: set[int] = set()
        anchor_action: dict[int, ApplyIdiom] = {}
        for occ in candidates:
            steps = occurrence_timesteps(me, idioms, occ)
            if any(t in consumed for t in steps):
                continue
            consumed.update(steps)
            anchor_action[me.t_of_path[occ.anchor]] = ApplyIdiom(occ.idiom_id)
            kept += 1
            usage[occ.idiom_id] += 1
        new_steps: ActionTrace = []
        for step in me.trace:
            if step.t in anchor_action:
                new_steps.append(TraceStep(len(new_steps) + 1, step.frontier,
                                           anchor_action[step.t]))
            elif step.t not in consumed:
                new_steps.append(TraceStep(len(new_steps) + 1, step.frontier, step.action))
        rewritten.append((me.entry.id, new_steps))

    rate = 0.0 if total == 0 else 1.0 - kept / total
    return rewritten, OverlapStats(total, kept, rate, usage)


# ---------------------------------------------------------------------------
# serialization: corpus JSONL extended with an "occurrences" field per entry

def save_marked(marked: MarkedCorpus, path) -> None:
    from .grammar import node_to_json
    with open(path, "w", encoding="utf-8") as fh:
        for me in marked.entries:
            obj = {
                "id": me.entry.id,
                "spec": me.entry.spec,
                "ast": node_to_json(me.entry.ast),
                "occurrences": [
                    {"idiom": occ.idiom_id,
                     "anchor": list(occ.anchor),
                     "bindings": {label: list(p) for label, p in sorted(occ.bindings.items())}}
                    for occ in me.occurrences
                ],
            }
            fh.write(json.dumps(obj))
            fh.write("\n")


def load_marked(path, grammar: Grammar, idioms: IdiomSet) -> MarkedCorpus:
    entries: list[MarkedEntry] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"not valid JSON: {exc}", line=lineno) from exc
            root = node_from_json(obj["ast"], grammar)
            bad = validate_ast(grammar, root, require_start=True)
            if bad:
                raise CorpusError(f"invalid ast: {bad[0].message}", line=lineno,
                                  entry_id=obj.get("id"))
            entry = CorpusEntry(obj["id"], obj["spec"], root)
            trace = to_trace(grammar, root)
            t_of = {step.frontier: step.t for step in trace}
            occs = [Occurrence(o["idiom"], entry.id, tuple(o["anchor"]),
                               {label: tuple(p) for label, p in o["bindings"].items()})
                    for o in obj.get("occurrences", [])]
            me = MarkedEntry(entry, trace, occs, t_of)
            for occ in occs:
                if occ.anchor not in t_of:
                    raise CorpusError(f"occurrence anchor {list(occ.anchor)} is not a node",
                                      line=lineno, entry_id=entry.id)
                me.by_timestep.setdefault(t_of[occ.anchor], []).append(occ)
            entries.append(me)
    return MarkedCorpus(grammar, idioms, entries)
