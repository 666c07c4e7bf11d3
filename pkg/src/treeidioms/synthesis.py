"""Idiom-aware training objective, exact trace-set oracle, count-based
reference scorer, and idiom-unrolling decode.

The scorer seam: anything that maps (context, legal action set) to a
probability distribution over exactly that set. The context is a finite
collapse of the partial tree -- frontier symbol, parent production, previous
action, child index -- but the full trace prefix is passed through so richer
scorers can condition on more. The task description text never reaches the
reference scorer.

At training time, each timestep of the original trace admits the original
action or any idiom occurrence anchored exactly there; the loss averages the
log-probabilities over that choice set per timestep. The enumeration oracle
walks every trace that could generate the tree (idiom steps skip the covered
nodes and resume at holes) and reports the exact log objective next to its
per-timestep lower bound, all scored with the original-trace contexts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .fragments import Fragment, IdiomSet, hole_paths
from .grammar import Grammar, Interior, Node, NodePath, Token, iter_nodes, validate_ast
from .marking import MarkedCorpus, MarkedEntry
from .trace import Action, ActionTrace, ApplyIdiom, ApplyRule, GetToken, TraceStep, from_trace


class ScorerContractError(RuntimeError):
    """A scorer returned a malformed distribution (support or normalization)."""


class TraceCapError(RuntimeError):
    """Exact enumeration refused: the trace set exceeds the cap."""

    def __init__(self, estimated: int, cap: int):
        super().__init__(f"trace set has {estimated} traces, over the cap of {cap}; "
                         "the exact objective is intractable here")
        self.estimated = estimated
        self.cap = cap


class DecodeBudgetError(RuntimeError):
    def __init__(self, partial: ActionTrace, max_steps: int):
        super().__init__(f"decode exhausted its budget of {max_steps} steps")
        self.partial = partial
        self.max_steps = max_steps


class Vocabulary:
    """Token vocabulary with an UNK bucket, shared across terminal classes."""

    def __init__(self, tokens: Iterable[str], unk: str = "<UNK>"):
        self.unk = unk
        self.tokens: tuple[str, ...] = tuple(sorted(set(tokens) - {unk}))
        self._set = frozenset(self.tokens)

    def canon(self, lexeme: str) -> str:
        return lexeme if lexeme in self._set else self.unk

    def canon_action(self, action: Action) -> Action:
        if isinstance(action, GetToken):
            return GetToken(self.canon(action.lexeme))
        return action

    @staticmethod
    def from_marked(marked: MarkedCorpus, entry_ids=None) -> "Vocabulary":
        wanted = None if entry_ids is None else set(entry_ids)
        lexemes = []
        for me in marked.entries:
            if wanted is not None and me.entry.id not in wanted:
                continue
            for step in me.trace:
                if isinstance(step.action, GetToken):
                    lexemes.append(step.action.lexeme)
        return Vocabulary(lexemes)


@dataclass(frozen=True)
class ActionContext:
    frontier: str                    # nonterminal or terminal-class name
    parent_production: Optional[int]  # None at the root
    prev: Optional[Action]            # None at the first step
    child_index: int


def contexts_for_trace(root: Interior, trace: ActionTrace) -> list[ActionContext]:
    """Derive the per-step contexts of an original (idiom-free) trace."""
    node_by_path: dict[NodePath, Node] = dict(iter_nodes(root))
    out = []
    for i, step in enumerate(trace):
        path = step.frontier
        node = node_by_path[path]
        frontier = node.nt if isinstance(node, Interior) else node.term_class
        if path:
            parent = node_by_path[path[:-1]]
            ppid, idx = parent.production_id, path[-1]
        else:
            ppid, idx = None, 0
        prev = trace[i - 1].action if i > 0 else None
        out.append(ActionContext(frontier, ppid, prev, idx))
    return out


def legal_actions(grammar: Grammar, idioms: Optional[IdiomSet], frontier: str,
                  vocab: Vocabulary) -> list[Action]:
    """Every action admissible at a frontier symbol. Idiom operators come
    first (then productions by id), which doubles as the deterministic
    preference order greedy decoding uses on ties."""
    if frontier in grammar.nonterminals:
        acts: list[Action] = []
        if idioms is not None:
            acts.extend(ApplyIdiom(f.id) for f in idioms.rooted_at(frontier))
        acts.extend(ApplyRule(p.id) for p in grammar.by_lhs[frontier])
        return acts
    if frontier in grammar.terminal_classes:
        return [GetToken(tok) for tok in vocab.tokens] + [GetToken(vocab.unk)]
    raise ValueError(f"unknown frontier symbol {frontier!r}")


class ActionScorer:
    """Interface: a distribution over exactly the given legal action set."""

    vocab: Vocabulary

    def distribution(self, ctx: ActionContext, legal: Sequence[Action],
                     prefix: Optional[ActionTrace] = None) -> dict[Action, float]:
        raise NotImplementedError


class UniformScorer(ActionScorer):
    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def distribution(self, ctx, legal, prefix=None):
        p = 1.0 / len(legal)
        return {a: p for a in legal}


class CountScorer(ActionScorer):
    """Fractional count tables with add-k smoothing over the legal set.

    Contexts are canonicalized through the vocabulary (a previous GetToken
    with an out-of-vocabulary lexeme becomes UNK), so unseen contexts fall
    back to the uniform distribution.
    """

    def __init__(self, vocab: Vocabulary, k: float = 0.1):
        self.vocab = vocab
        self.k = k
        self.counts: dict[ActionContext, dict[Action, float]] = {}

    def _canon_ctx(self, ctx: ActionContext) -> ActionContext:
        if isinstance(ctx.prev, GetToken):
            return ActionContext(ctx.frontier, ctx.parent_production,
                                 self.vocab.canon_action(ctx.prev), ctx.child_index)
        return ctx

    def observe(self, ctx: ActionContext, action: Action, weight: float) -> None:
        row = self.counts.setdefault(self._canon_ctx(ctx), {})
        act = self.vocab.canon_action(action)
        row[act] = row.get(act, 0.0) + weight

    def distribution(self, ctx, legal, prefix=None):
        row = self.counts.get(self._canon_ctx(ctx), {})
        k = self.k
        denom = sum(row.get(a, 0.0) for a in legal) + k * len(legal)
        return {a: (row.get(a, 0.0) + k) / denom for a in legal}


def _check_distribution(dist: dict[Action, float], legal: Sequence[Action]) -> None:
    legal_set = set(legal)
    if any(a not in legal_set for a in dist):
        bad = next(a for a in dist if a not in legal_set)
        raise ScorerContractError(f"scorer put mass on illegal action {bad}")
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-9 or any(p < 0 for p in dist.values()):
        raise ScorerContractError(f"scorer distribution sums to {total}, not 1")


@dataclass
class ChoiceSet:
    t: int
    frontier: NodePath
    original: Action
    matching: tuple[int, ...]       # idiom ids anchored at this timestep
    actions: tuple[Action, ...]     # {original} | {ApplyIdiom(i) for i in matching}


def choice_sets(marked: MarkedCorpus, entry_id: str) -> list[ChoiceSet]:
    me = marked.entry(entry_id)
    out = []
    for step in me.trace:
        ids = tuple(sorted({occ.idiom_id for occ in me.anchored_at(step.t)}))
        actions = (step.action,) + tuple(ApplyIdiom(i) for i in ids)
        out.append(ChoiceSet(step.t, step.frontier, step.action, ids, actions))
    return out


@dataclass
class StepScore:
    t: int
    frontier: NodePath
    size_a: int
    action_logps: dict[Action, float]


@dataclass
class TraceStats:
    num_traces: int
    exact_log_j: float
    bound: float                       # log|T| + mean per-trace log-probability
    admit_by_t: dict[int, int]         # c(T, t)
    admit_by_action: dict[tuple[int, Action], int]


@dataclass
class ObjectiveReport:
    entry_id: str
    steps: list[StepScore]
    loss: float
    trace_stats: Optional[TraceStats] = None


def _step_distributions(marked: MarkedCorpus, me: MarkedEntry, scorer: ActionScorer,
                        sets: list[ChoiceSet]):
    """Per-timestep scorer distributions under the original-trace contexts."""
    ctxs = contexts_for_trace(me.entry.ast, me.trace)
    node_by_path = dict(iter_nodes(me.entry.ast))
    dists = []
    for i, cs in enumerate(sets):
        node = node_by_path[cs.frontier]
        frontier = node.nt if isinstance(node, Interior) else node.term_class
        legal = legal_actions(marked.grammar, marked.idioms, frontier, scorer.vocab)
        dist = scorer.distribution(ctxs[i], legal, prefix=me.trace[:i])
        _check_distribution(dist, legal)
        dists.append(dist)
    return dists


def _logp_of(dist: dict[Action, float], action: Action, vocab: Vocabulary) -> float:
    p = dist.get(vocab.canon_action(action))
    if p is None:
        raise ScorerContractError(f"scorer assigned no mass to admissible action {action}")
    return math.log(p)


def objective(marked: MarkedCorpus, entry_id: str, scorer: ActionScorer,
              oracle_cap: Optional[int] = None) -> ObjectiveReport:
    """Per-timestep averaged loss:
    -sum_t (1/|A(T_t)|) sum_{a in A(T_t)} log Pr(a | context_t).
    With no idiom occurrences this is exactly the negative log-likelihood of
    the original trace. Pass `oracle_cap` to also run the enumeration oracle.
    """
    me = marked.entry(entry_id)
    sets = choice_sets(marked, entry_id)
    dists = _step_distributions(marked, me, scorer, sets)
    steps = []
    loss = 0.0
    for cs, dist in zip(sets, dists):
        logps = {a: _logp_of(dist, a, scorer.vocab) for a in cs.actions}
        loss -= sum(logps.values()) / len(cs.actions)
        steps.append(StepScore(cs.t, cs.frontier, len(cs.actions), logps))
    stats = enumerate_traces(marked, entry_id, scorer, cap=oracle_cap) \
        if oracle_cap is not None else None
    return ObjectiveReport(entry_id, steps, loss, stats)


def count_traces(marked: MarkedCorpus, entry_id: str) -> int:
    """|T| for an entry, without enumerating."""
    me = marked.entry(entry_id)
    return _TraceWalker(marked, me).count(())


class _TraceWalker:
    def __init__(self, marked: MarkedCorpus, me: MarkedEntry):
        self.me = me
        self.idioms = marked.idioms
        self.node_by_path: dict[NodePath, Node] = dict(iter_nodes(me.entry.ast))
        self._memo: dict[NodePath, int] = {}

    def _options(self, path: NodePath):
        """(head action, subtree root paths) pairs available at a node."""
        node = self.node_by_path[path]
        t = self.me.t_of_path[path]
        if isinstance(node, Token):
            return [(GetToken(node.lexeme), [])]
        kids = [path + (i,) for i in range(len(node.children))]
        opts = [(ApplyRule(node.production_id), kids)]
        for occ in self.me.anchored_at(t):
            frag = self.idioms.fragment(occ.idiom_id)
            holes = [occ.anchor + rel for rel, _ in hole_paths(frag.root)]
            opts.append((ApplyIdiom(occ.idiom_id), holes))
        return opts

    def count(self, path: NodePath) -> int:
        got = self._memo.get(path)
        if got is not None:
            return got
        total = 0
        for _, parts in self._options(path):
            n = 1
            for p in parts:
                n *= self.count(p)
            total += n
        self._memo[path] = total
        return total

    def walk(self, path: NodePath) -> Iterator[list[tuple[int, Action]]]:
        t = self.me.t_of_path[path]
        for action, parts in self._options(path):
            yield from self._expand([(t, action)], parts, 0)

    def _expand(self, prefix, parts, i) -> Iterator[list[tuple[int, Action]]]:
        if i == len(parts):
            yield prefix
            return
        for seq in self.walk(parts[i]):
            yield from self._expand(prefix + seq, parts, i + 1)


def enumerate_traces(marked: MarkedCorpus, entry_id: str, scorer: ActionScorer,
                     cap: Optional[int] = 1_000_000) -> TraceStats:
    """Enumerate every trace that generates the entry's AST (at each frontier:
    the original production, or any idiom occurrence anchored there, skipping
    its covered steps and continuing at holes). Every step is scored with the
    original-trace context of the timestep it expands. Refuses when the
    estimated trace count exceeds `cap`.
    """
    me = marked.entry(entry_id)
    walker = _TraceWalker(marked, me)
    est = walker.count(())
    if cap is not None and est > cap:
        raise TraceCapError(est, cap)

    sets = choice_sets(marked, entry_id)
    dists = _step_distributions(marked, me, scorer, sets)
    logp_table: dict[tuple[int, Action], float] = {}
    for cs, dist in zip(sets, dists):
        for a in cs.actions:
            logp_table[(cs.t, a)] = _logp_of(dist, a, scorer.vocab)

    trace_logps: list[float] = []
    admit_t: dict[int, int] = {}
    admit_ta: dict[tuple[int, Action], int] = {}
    for seq in walker.walk(()):
        s = 0.0
        for t, a in seq:
            s += logp_table[(t, a)]
            admit_t[t] = admit_t.get(t, 0) + 1
            admit_ta[(t, a)] = admit_ta.get((t, a), 0) + 1
        trace_logps.append(s)

    n = len(trace_logps)
    assert n == est
    hi = max(trace_logps)
    exact = hi + math.log(sum(math.exp(x - hi) for x in trace_logps))
    bound = math.log(n) + sum(trace_logps) / n
    return TraceStats(n, exact, bound, admit_t, admit_ta)


def train_count_scorer(marked: MarkedCorpus, entry_ids=None, epochs: int = 1,
                       k: float = 0.1) -> CountScorer:
    """Accumulate weight 1/|A(T_t)| for every admissible action at every
    timestep of the chosen entries (all by default)."""
    if not marked.entries:
        raise ValueError("cannot train on an empty marked corpus")
    vocab = Vocabulary.from_marked(marked, entry_ids)
    scorer = CountScorer(vocab, k=k)
    wanted = None if entry_ids is None else set(entry_ids)
    for me in marked.entries:
        if wanted is not None and me.entry.id not in wanted:
            continue
        ctxs = contexts_for_trace(me.entry.ast, me.trace)
        sets = choice_sets(marked, me.entry.id)
        for ctx, cs in zip(ctxs, sets):
            w = epochs / len(cs.actions)
            for a in cs.actions:
                scorer.observe(ctx, a, w)
    return scorer


# ---------------------------------------------------------------------------
# decoding

@dataclass
class DecodeResult:
    ast: Interior
    trace: ActionTrace
    log_prob: float


def _fragment_obligations(frag: Fragment, base_path: NodePath) -> list[tuple]:
    """Interleaved DFS of a fragment body: forced actions for concrete nodes,
    score obligations at holes (context comes from the enclosing fragment
    node, previous action from the body's own sequence)."""
    obs: list[tuple] = []

    def walk(fn, path, parent_pid, idx):
        if isinstance(fn, Token):
            obs.append(("forced", GetToken(fn.lexeme)))
        elif isinstance(fn, Interior):
            obs.append(("forced", ApplyRule(fn.production_id)))
            for i, c in enumerate(fn.children):
                walk(c, path + (i,), fn.production_id, i)
        else:  # Hole
            obs.append(("score", path, fn.nt, parent_pid, idx))

    walk(frag.root, base_path, None, 0)
    return obs


def _argmax(dist: dict[Action, float], legal: Sequence[Action]) -> Action:
    # first maximum in legal order; legal puts idiom actions before rules,
    # so ties prefer the more abstract action
    best, best_p = None, -1.0
    for a in legal:
        p = dist[a]
        if p > best_p:
            best, best_p = a, p
    return best


def decode(scorer: ActionScorer, grammar: Grammar, idioms: Optional[IdiomSet],
           start: Optional[str] = None, strategy: str = "greedy",
           beam_width: int = 5, max_steps: int = 512) -> DecodeResult:
    """Generate a tree action-by-action from the scorer.

    The emitted trace records ApplyIdiom as a single step; the fragment body
    is unrolled on the fly: its own actions are fed through as the previous-
    action context (teacher forcing), and scoring resumes at each hole.
    Greedy picks the most probable action, preferring idioms on ties. Beam
    search keeps `beam_width` candidates by total log-probability and picks
    the finished one with the best length-normalized score.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if strategy == "greedy":
        return _decode_beam(scorer, grammar, idioms, start, 1, max_steps)
    if strategy == "beam":
        return _decode_beam(scorer, grammar, idioms, start, beam_width, max_steps)
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass
class _BeamState:
    stack: tuple
    prev: Optional[Action]
    emitted: tuple
    log_prob: float


def _advance_forced(st: _BeamState) -> _BeamState:
    stack, prev = st.stack, st.prev
    while stack and stack[-1][0] == "forced":
        prev = stack[-1][1]
        stack = stack[:-1]
    return _BeamState(stack, prev, st.emitted, st.log_prob)


def _decode_beam(scorer, grammar, idioms, start, width, max_steps) -> DecodeResult:
    start = start or grammar.start
    init = _BeamState((("score", (), start, None, 0),), None, (), 0.0)
    beams = [init]
    finished: list[_BeamState] = []
    longest_partial: tuple = ()
    while beams:
        nxt: list[_BeamState] = []
        for st in beams:
            st = _advance_forced(st)
            if not st.stack:
                finished.append(st)
                continue
            if len(st.emitted) >= max_steps:
                if len(st.emitted) > len(longest_partial):
                    longest_partial = st.emitted
                continue
            _, path, frontier, ppid, idx = st.stack[-1]
            rest = st.stack[:-1]
            legal = legal_actions(grammar, idioms, frontier, scorer.vocab)
            ctx = ActionContext(frontier, ppid, st.prev, idx)
            dist = scorer.distribution(ctx, legal, prefix=list(st.emitted))
            _check_distribution(dist, legal)
            if width == 1:
                pick = [_argmax(dist, legal)]
            else:
                pick = sorted(legal, key=lambda a: -dist[a])[:width]
            for action in pick:
                step = TraceStep(len(st.emitted) + 1, path, action)
                lp = st.log_prob + math.log(dist[action]) if dist[action] > 0 else -math.inf
                if isinstance(action, ApplyRule):
                    prod = grammar.production(action.production_id)
                    obs = []
                    for i, sym in enumerate(prod.rhs):
                        obs.append(("score", path + (i,), sym.name, prod.id, i))
                    nxt.append(_BeamState(rest + tuple(reversed(obs)), action,
                                          st.emitted + (step,), lp))
                elif isinstance(action, GetToken):
                    nxt.append(_BeamState(rest, action, st.emitted + (step,), lp))
                else:
                    frag = idioms.fragment(action.idiom_id)
                    obs = _fragment_obligations(frag, path)
                    nxt.append(_BeamState(rest + tuple(reversed(obs)), st.prev,
                                          st.emitted + (step,), lp))
        nxt.sort(key=lambda s: (-s.log_prob, tuple(repr(e.action) for e in s.emitted)))
        beams = nxt[:width]
    if not finished:
        raise DecodeBudgetError(list(longest_partial), max_steps)
    best = max(finished, key=lambda s: (s.log_prob / max(len(s.emitted), 1),
                                        tuple(repr(e.action) for e in s.emitted)))
    trace = list(best.emitted)
    ast = from_trace(grammar, trace, idioms, start=start)
    bad = validate_ast(grammar, ast)
    if bad:
        raise RuntimeError(f"decode produced an invalid tree: {bad[0]}")
    return DecodeResult(ast, trace, best.log_prob)


@dataclass
class UsageStats:
    per_output: list[int]              # idiom actions per decoded output
    histogram: dict[int, int]          # idioms-per-output -> number of outputs
    per_idiom: dict[int, int]          # idiom id -> total uses
    distinct_idioms: list[int]


def idiom_usage_stats(decoded) -> UsageStats:
    per_output: list[int] = []
    per_idiom: dict[int, int] = {}
    for item in decoded:
        trace = item.trace if isinstance(item, DecodeResult) else item
        n = 0
        for step in trace:
            action = step.action if isinstance(step, TraceStep) else step
            if isinstance(action, ApplyIdiom):
                n += 1
                per_idiom[action.idiom_id] = per_idiom.get(action.idiom_id, 0) + 1
        per_output.append(n)
    hist: dict[int, int] = {}
    for n in per_output:
        hist[n] = hist.get(n, 0) + 1
    return UsageStats(per_output, hist, per_idiom, sorted(per_idiom))


# ---------------------------------------------------------------------------
# serialization

def _action_to_json(action: Action) -> dict:
    if isinstance(action, ApplyRule):
        return {"rule": action.production_id}
    if isinstance(action, ApplyIdiom):
        return {"idiom": action.idiom_id}
    return {"tok": action.lexeme}


def _action_from_json(obj: dict) -> Action:
    if "rule" in obj:
        return ApplyRule(int(obj["rule"]))
    if "idiom" in obj:
        return ApplyIdiom(int(obj["idiom"]))
    return GetToken(obj["tok"])


def _ctx_to_json(ctx: ActionContext) -> dict:
    return {
        "frontier": ctx.frontier,
        "parent": ctx.parent_production,
        "prev": {"start": True} if ctx.prev is None else _action_to_json(ctx.prev),
        "child": ctx.child_index,
    }


def _ctx_from_json(obj: dict) -> ActionContext:
    prev = None if obj["prev"] == {"start": True} else _action_from_json(obj["prev"])
    return ActionContext(obj["frontier"], obj["parent"], prev, obj["child"])


def save_scorer(scorer: CountScorer, path) -> None:
    rows = []
    for ctx, row in scorer.counts.items():
        for action, w in row.items():
            rows.append({"ctx": _ctx_to_json(ctx), "action": _action_to_json(action), "w": w})
    rows.sort(key=lambda r: (json.dumps(r["ctx"], sort_keys=True),
                             json.dumps(r["action"], sort_keys=True)))
    obj = {"k": scorer.k, "vocab": list(scorer.vocab.tokens), "counts": rows}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_scorer(path) -> CountScorer:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    scorer = CountScorer(Vocabulary(obj["vocab"]), k=float(obj["k"]))
    for row in obj["counts"]:
        ctx = _ctx_from_json(row["ctx"])
        scorer.counts.setdefault(ctx, {})[_action_from_json(row["action"])] = float(row["w"])
    return scorer


def report_to_json(report: ObjectiveReport) -> dict:
    out = {
        "entry": report.entry_id,
        "loss": report.loss,
        "steps": [
            {"t": s.t, "frontier": list(s.frontier), "num_actions": s.size_a,
             "actions": [{"action": _action_to_json(a), "logp": lp}
                         for a, lp in s.action_logps.items()]}
            for s in report.steps
        ],
    }
    if report.trace_stats is not None:
        ts = report.trace_stats
        out["trace_set"] = {
            "num_traces": ts.num_traces,
            "exact_log_j": ts.exact_log_j,
            "bound": ts.bound,
            "admit_by_t": {str(t): c for t, c in sorted(ts.admit_by_t.items())},
        }
    return out
