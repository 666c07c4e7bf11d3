"""Idiom mining by MCMC over per-node splitting points.

Every interior node of every corpus tree carries an indicator z_v; cutting
the trees at the z=true nodes tiles them into fragments (token leaves always
stay with their parent's fragment, cut-point children become holes). The
fragment multiset is scored by a collapsed Pitman-Yor predictive, one
restaurant per root nonterminal, with the single-table simplification: each
fragment type is one table, so the type count plays the table-count role and
increment/decrement stay exact.

The prior behind that predictive: per root nonterminal, fragment
probabilities follow a two-parameter stick-breaking construction, weight
pi_k = u_k * prod_{j<k} (1 - u_j) with u_k ~ Beta(1 - d, alpha + k*d) and
atoms drawn from the base measure. The sticks are never sampled; the
collapsed form below is equivalent and avoids truncation.

The base measure over fragments is the corpus-estimated PCFG extended with a
stop probability: a fragment is generated by expanding its root, then at
every nonterminal leaf either stopping (a hole, probability p_stop) or
expanding with a production drawn from the smoothed corpus PCFG.

Sampling sweeps visit every non-root interior node in corpus order and
resample z_v from its exact conditional (default), or propose block flips of
type-identical sites with a Metropolis-Hastings correction (blocking="type").
Per-sweep cost is linear in total corpus size for bounded fragment sizes.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .fragments import canonical_fragment_key
from .grammar import Grammar, Hole, Interior, Node, iter_nodes


class CountsError(RuntimeError):
    """The incremental count tables disagree with the split state."""


@dataclass
class MinerConfig:
    alpha: float = 5.0        # Pitman-Yor concentration
    discount: float = 0.5     # Pitman-Yor discount, in [0, 1)
    iterations: int = 10      # MCMC sweeps
    p_stop: float = 0.5       # base-measure stop probability at nonterminal leaves
    seed: int = 0
    min_count: int = 2        # extraction threshold on final-state counts
    blocking: str = "site"    # "site" | "type"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if not 0 < self.p_stop < 1:
            raise ValueError("p_stop must be in (0, 1)")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.blocking not in ("site", "type"):
            raise ValueError("blocking must be 'site' or 'type'")


@dataclass
class BaseGrammar:
    """The no-fragment pTSG: per-production probabilities estimated from the
    corpus with add-one smoothing, so every production has positive mass."""

    grammar: Grammar
    p0: dict[int, float]
    log_p0: dict[int, float]


def estimate_base(grammar: Grammar, corpus) -> BaseGrammar:
    if not corpus:
        raise ValueError("cannot estimate base probabilities from an empty corpus")
    counts = {p.id: 0 for p in grammar.productions}
    for entry in corpus:
        for _, node in iter_nodes(entry.ast):
            if isinstance(node, Interior):
                counts[node.production_id] += 1
    p0: dict[int, float] = {}
    for lhs, prods in grammar.by_lhs.items():
        total = sum(counts[p.id] for p in prods)
        denom = total + len(prods)  # add-one smoothing
        for p in prods:
            p0[p.id] = (counts[p.id] + 1) / denom
    return BaseGrammar(grammar, p0, {pid: math.log(v) for pid, v in p0.items()})


def base_fragment_log_prob(base: BaseGrammar, root: Interior, p_stop: float) -> float:
    """log P0 of a fragment: production choices, a stop factor per hole, a
    continue factor per non-root interior node. Token lexemes are free."""
    log_stop = math.log(p_stop)
    log_go = math.log(1.0 - p_stop)
    acc = 0.0
    stack: list[tuple[object, bool]] = [(root, True)]
    while stack:
        node, is_root = stack.pop()
        if isinstance(node, Hole):
            acc += log_stop
        elif isinstance(node, Interior):
            acc += base.log_p0[node.production_id]
            if not is_root:
                acc += log_go
            for c in node.children:
                stack.append((c, False))
    return acc


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


class PypCounts:
    """Fragment count tables: per root nonterminal N, the total token count
    n_N and per-type counts n_f (types with zero count are dropped, so the
    type-dict size is K_N)."""

    def __init__(self):
        self.n: dict[str, int] = {}
        self.types: dict[str, dict[Interior, int]] = {}

    def add(self, frag: Interior) -> None:
        nt = frag.nt
        self.n[nt] = self.n.get(nt, 0) + 1
        tab = self.types.setdefault(nt, {})
        tab[frag] = tab.get(frag, 0) + 1

    def remove(self, frag: Interior) -> None:
        nt = frag.nt
        tab = self.types.get(nt)
        if not tab or frag not in tab:
            raise CountsError(f"removing unseen fragment rooted at {nt!r}")
        tab[frag] -= 1
        if tab[frag] == 0:
            del tab[frag]
        self.n[nt] -= 1
        if self.n[nt] < 0:
            raise CountsError(f"negative restaurant total for {nt!r}")

    def count(self, frag: Interior) -> int:
        tab = self.types.get(frag.nt)
        return tab.get(frag, 0) if tab else 0

    def total(self, nt: str) -> int:
        return self.n.get(nt, 0)

    def k(self, nt: str) -> int:
        tab = self.types.get(nt)
        return len(tab) if tab else 0

    def total_fragments(self) -> int:
        return sum(self.n.values())

    def snapshot(self) -> dict[str, dict[Interior, int]]:
        return {nt: dict(tab) for nt, tab in self.types.items() if tab}

    def equals(self, other: "PypCounts") -> bool:
        return self.snapshot() == other.snapshot()

    @staticmethod
    def recount(state: "SplitState") -> "PypCounts":
        """Rebuild tables from scratch off the split state."""
        counts = PypCounts()
        for tree in state.trees:
            for idx in tree.fragment_roots():
                counts.add(tree.fragment_at(idx))
        return counts


def predictive_prob(counts, base: BaseGrammar, frag: Interior, cfg: MinerConfig) -> float:
    """Collapsed Pitman-Yor posterior predictive of drawing `frag` at its
    root nonterminal: (max(n_f - d, 0) + (alpha + d*K_N) * P0(f)) / (n_N + alpha)."""
    n_f = counts.count(frag)
    n_n = counts.total(frag.nt)
    k_n = counts.k(frag.nt)
    p0 = math.exp(base_fragment_log_prob(base, frag, cfg.p_stop))
    return (max(n_f - cfg.discount, 0.0)
            + (cfg.alpha + cfg.discount * k_n) * p0) / (n_n + cfg.alpha)


def _log_predictive(counts, base, frag, cfg, p0cache) -> float:
    n_f = counts.count(frag)
    n_n = counts.total(frag.nt)
    k_n = counts.k(frag.nt)
    lp0 = p0cache(frag)
    acc = -math.inf
    if n_f - cfg.discount > 0:
        acc = math.log(n_f - cfg.discount)
    coef = cfg.alpha + cfg.discount * k_n
    if coef > 0:
        acc = _logaddexp(acc, math.log(coef) + lp0)
    return acc - math.log(n_n + cfg.alpha)


class TreeState:
    """One corpus tree flattened to preorder arrays, plus the z indicators.

    z is defined per interior node; the root is pinned to true and token
    leaves never cut. Fragment extraction walks down from a cut node,
    turning cut interior children into holes labeled l0, l1, ... in
    depth-first order.
    """

    def __init__(self, entry_id: str, root: Interior):
        self.entry_id = entry_id
        self.nodes: list[Node] = []
        self.parent: list[int] = []
        self.kids: list[list[int]] = []
        self.interior: list[bool] = []
        stack: list[tuple[Node, int]] = [(root, -1)]
        while stack:
            node, par = stack.pop()
            idx = len(self.nodes)
            self.nodes.append(node)
            self.parent.append(par)
            self.kids.append([])
            self.interior.append(isinstance(node, Interior))
            if par >= 0:
                self.kids[par].append(idx)
            if isinstance(node, Interior):
                for c in reversed(node.children):
                    stack.append((c, idx))
        # reversed-push keeps preorder, but children were appended in visit
        # order, which is left-to-right already; nothing to fix.
        self.z: list[bool] = [self.interior[i] for i in range(len(self.nodes))]
        self.sites: list[int] = [i for i in range(1, len(self.nodes)) if self.interior[i]]

    def __len__(self):
        return len(self.nodes)

    def fragment_roots(self) -> list[int]:
        return [i for i in range(len(self.nodes)) if self.interior[i] and self.z[i]]

    def cut_ancestor(self, v: int) -> int:
        """Nearest strictly-above node with z true (the root is always cut)."""
        a = self.parent[v]
        while not self.z[a]:
            a = self.parent[a]
        return a

    def fragment_at(self, root_idx: int, ov_site: int = -1, ov_val: bool = False) -> Interior:
        counter = [0]

        def zval(i: int) -> bool:
            return ov_val if i == ov_site else self.z[i]

        def build(i: int, is_root: bool):
            node = self.nodes[i]
            if not self.interior[i]:
                return node
            if not is_root and zval(i):
                label = f"l{counter[0]}"
                counter[0] += 1
                return Hole(label, node.nt)
            children = tuple(build(c, False) for c in self.kids[i])
            return Interior(node.nt, node.production_id, children)

        return build(root_idx, True)

    def region_at(self, root_idx: int, ov_site: int = -1, ov_val: bool = False) -> set[int]:
        """Node indices a fragment at root_idx touches, boundary holes included."""
        out = {root_idx}

        def zval(i: int) -> bool:
            return ov_val if i == ov_site else self.z[i]

        def walk(i: int):
            for c in self.kids[i]:
                out.add(c)
                if self.interior[c] and not zval(c):
                    walk(c)

        walk(root_idx)
        return out


class SplitState:
    def __init__(self, grammar: Grammar, trees):
        self.grammar = grammar
        self.trees: list[TreeState] = list(trees)

    @staticmethod
    def from_corpus(grammar: Grammar, corpus) -> "SplitState":
        return SplitState(grammar, (TreeState(e.id, e.ast) for e in corpus))

    def num_cut(self) -> int:
        return sum(1 for t in self.trees for i in t.fragment_roots())


def _check_totals(state: SplitState, counts: PypCounts) -> None:
    expect = state.num_cut()
    got = counts.total_fragments()
    if expect != got:
        raise CountsError(f"count tables hold {got} fragments, split state implies {expect}")


def _make_p0_cache(base: BaseGrammar, cfg: MinerConfig) -> Callable[[Interior], float]:
    cache: dict[Interior, float] = {}

    def get(frag: Interior) -> float:
        lp = cache.get(frag)
        if lp is None:
            lp = base_fragment_log_prob(base, frag, cfg.p_stop)
            cache[frag] = lp
        return lp

    return get


def _resample_site(tree: TreeState, v: int, counts: PypCounts, base: BaseGrammar,
                   cfg: MinerConfig, rng: random.Random, p0c) -> None:
    a = tree.cut_ancestor(v)
    if tree.z[v]:
        f_above = tree.fragment_at(a, ov_site=v, ov_val=True)
        f_below = tree.fragment_at(v)
        counts.remove(f_above)
        counts.remove(f_below)
        f_merged = tree.fragment_at(a, ov_site=v, ov_val=False)
    else:
        f_merged = tree.fragment_at(a)
        counts.remove(f_merged)
        f_above = tree.fragment_at(a, ov_site=v, ov_val=True)
        f_below = tree.fragment_at(v)

    logw0 = _log_predictive(counts, base, f_merged, cfg, p0c)
    # joint weight of the split side: add f_above provisionally so the
    # second predictive sees it (matters when both share a root nonterminal)
    logw1 = _log_predictive(counts, base, f_above, cfg, p0c)
    counts.add(f_above)
    logw1 += _log_predictive(counts, base, f_below, cfg, p0c)
    counts.remove(f_above)

    # z=true with probability w1 / (w0 + w1)
    diff = logw0 - logw1
    p_split = 0.0 if diff > 700 else 1.0 / (1.0 + math.exp(diff))
    split = rng.random() < p_split
    tree.z[v] = split
    if split:
        counts.add(f_above)
        counts.add(f_below)
    else:
        counts.add(f_merged)


def gibbs_sweep(state: SplitState, counts: PypCounts, base: BaseGrammar,
                cfg: MinerConfig, rng: random.Random,
                p0c=None) -> tuple[SplitState, PypCounts]:
    """One sequential-scan sweep: resample every non-root interior node in
    corpus order from its exact conditional. Counts stay consistent."""
    _check_totals(state, counts)
    if p0c is None:
        p0c = _make_p0_cache(base, cfg)
    for tree in state.trees:
        for v in tree.sites:
            _resample_site(tree, v, counts, base, cfg, rng, p0c)
    return state, counts


def _seq_log_add(counts, base, frags, cfg, p0c, keep: bool) -> float:
    acc = 0.0
    for f in frags:
        acc += _log_predictive(counts, base, f, cfg, p0c)
        counts.add(f)
    if not keep:
        for f in frags:
            counts.remove(f)
    return acc


def typed_sweep(state: SplitState, counts: PypCounts, base: BaseGrammar,
                cfg: MinerConfig, rng: random.Random,
                p0c=None) -> tuple[SplitState, PypCounts]:
    """Blocked sweep: sites whose hypothetical merged fragment is
    type-identical are flipped together, restricted to disjoint regions so
    the flip is a symmetric involution, and accepted by Metropolis-Hastings.
    """
    _check_totals(state, counts)
    if p0c is None:
        p0c = _make_p0_cache(base, cfg)

    # group sites by merged-fragment type (invariant under the block flip)
    keys: dict[tuple[int, int], str] = {}
    groups: dict[str, list[tuple[int, int]]] = {}
    for ti, tree in enumerate(state.trees):
        for v in tree.sites:
            a = tree.cut_ancestor(v)
            key = canonical_fragment_key(tree.fragment_at(a, ov_site=v, ov_val=False))
            keys[(ti, v)] = key
            groups.setdefault(key, []).append((ti, v))

    handled: set[str] = set()
    for ti, tree in enumerate(state.trees):
        for v in tree.sites:
            key = keys[(ti, v)]
            if key in handled:
                continue
            handled.add(key)
            block: list[tuple[int, int]] = []
            claimed: dict[int, set[int]] = {}
            for tj, w in groups[key]:
                tw = state.trees[tj]
                aw = tw.cut_ancestor(w)
                region = tw.region_at(aw, ov_site=w, ov_val=False)
                taken = claimed.setdefault(tj, set())
                if taken & region:
                    continue
                taken |= region
                block.append((tj, w))
            _propose_block_flip(state, block, counts, base, cfg, rng, p0c)
    return state, counts


def _propose_block_flip(state, block, counts, base, cfg, rng, p0c) -> None:
    roots: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for tj, w in block:
        tw = state.trees[tj]
        for r in (tw.cut_ancestor(w), w):
            if (tj, r) not in seen and tw.z[r]:
                seen.add((tj, r))
                roots.append((tj, r))

    before = [state.trees[tj].fragment_at(r) for tj, r in roots]
    for f in before:
        counts.remove(f)
    log_before = _seq_log_add(counts, base, before, cfg, p0c, keep=False)

    for tj, w in block:
        state.trees[tj].z[w] = not state.trees[tj].z[w]

    after_roots = [(tj, r) for tj, r in roots if state.trees[tj].z[r]]
    for tj, w in block:
        if state.trees[tj].z[w] and (tj, w) not in seen:
            after_roots.append((tj, w))
    after = [state.trees[tj].fragment_at(r) for tj, r in after_roots]
    log_after = _seq_log_add(counts, base, after, cfg, p0c, keep=False)

    ratio = log_after - log_before
    if ratio >= 0 or rng.random() < math.exp(ratio):
        for f in after:
            counts.add(f)
    else:
        for tj, w in block:
            state.trees[tj].z[w] = not state.trees[tj].z[w]
        for f in before:
            counts.add(f)


@dataclass
class MinedFragment:
    root: Interior
    count: int
    predictive: float
    log_base: float


@dataclass
class MinedGrammar:
    base: BaseGrammar
    cfg: MinerConfig
    counts: "PypCounts | CountsSummary"
    fragments: list[MinedFragment]
    state: Optional[SplitState] = None
    sweep_seconds: list[float] = field(default_factory=list)

    @property
    def grammar(self) -> Grammar:
        return self.base.grammar


def extract_fragments(state: SplitState, counts: PypCounts, base: BaseGrammar,
                      cfg: MinerConfig) -> list[MinedFragment]:
    out = []
    for nt in sorted(counts.types):
        for frag, n_f in counts.types[nt].items():
            if n_f >= cfg.min_count:
                out.append(MinedFragment(
                    root=frag,
                    count=n_f,
                    predictive=predictive_prob(counts, base, frag, cfg),
                    log_base=base_fragment_log_prob(base, frag, cfg.p_stop)))
    out.sort(key=lambda m: (-m.count, canonical_fragment_key(m.root)))
    return out


class CountsSummary:
    """Read-only stand-in for PypCounts rebuilt from a mined-pool file:
    restaurant totals and type counts for the stored fragments, zero for
    anything else."""

    def __init__(self, totals: dict[str, int], ks: dict[str, int],
                 frag_counts: dict[Interior, int]):
        self._totals = totals
        self._ks = ks
        self._frag_counts = frag_counts

    def count(self, frag: Interior) -> int:
        return self._frag_counts.get(frag, 0)

    def total(self, nt: str) -> int:
        return self._totals.get(nt, 0)

    def k(self, nt: str) -> int:
        return self._ks.get(nt, 0)


def save_pool(mined: MinedGrammar, path) -> None:
    """Persist everything `rank` needs to re-score without re-running MCMC:
    base probabilities, restaurant summaries, and the extracted fragments
    with their final-state counts."""
    import json

    from .fragments import frag_node_to_json

    counts = mined.counts
    restaurants = [{"nt": nt, "n": counts.total(nt), "k": counts.k(nt)}
                   for nt in sorted(set(counts.n) | set(counts.types))]
    obj = {
        "config": {
            "alpha": mined.cfg.alpha, "discount": mined.cfg.discount,
            "iterations": mined.cfg.iterations, "p_stop": mined.cfg.p_stop,
            "seed": mined.cfg.seed, "min_count": mined.cfg.min_count,
            "blocking": mined.cfg.blocking,
        },
        "base": {"p0": {str(pid): p for pid, p in sorted(mined.base.p0.items())}},
        "restaurants": restaurants,
        "fragments": [{"root": frag_node_to_json(m.root), "count": m.count}
                      for m in mined.fragments],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_pool(path, grammar: Grammar) -> MinedGrammar:
    import json

    from .fragments import frag_node_from_json

    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    c = obj["config"]
    cfg = MinerConfig(alpha=c["alpha"], discount=c["discount"],
                      iterations=c["iterations"], p_stop=c["p_stop"],
                      seed=c["seed"], min_count=c["min_count"],
                      blocking=c["blocking"])
    p0 = {int(pid): float(p) for pid, p in obj["base"]["p0"].items()}
    base = BaseGrammar(grammar, p0, {pid: math.log(p) for pid, p in p0.items()})
    totals = {r["nt"]: r["n"] for r in obj["restaurants"]}
    ks = {r["nt"]: r["k"] for r in obj["restaurants"]}
    frag_counts: dict[Interior, int] = {}
    fragments = []
    for item in obj["fragments"]:
        root = frag_node_from_json(item["root"], grammar)
        frag_counts[root] = item["count"]
    counts = CountsSummary(totals, ks, frag_counts)
    for item in obj["fragments"]:
        root = frag_node_from_json(item["root"], grammar)
        fragments.append(MinedFragment(
            root=root, count=item["count"],
            predictive=predictive_prob(counts, base, root, cfg),
            log_base=base_fragment_log_prob(base, root, cfg.p_stop)))
    return MinedGrammar(base=base, cfg=cfg, counts=counts, fragments=fragments)


def mine(grammar: Grammar, corpus, cfg: MinerConfig) -> MinedGrammar:
    """Run the sampler from the all-split initialization for cfg.iterations
    sweeps and extract the final state's fragment types with count >=
    cfg.min_count. Deterministic for a fixed (corpus, cfg) pair."""
    if not corpus:
        raise ValueError("cannot mine an empty corpus")
    base = estimate_base(grammar, corpus)
    state = SplitState.from_corpus(grammar, corpus)
    counts = PypCounts.recount(state)
    rng = random.Random(cfg.seed)
    p0c = _make_p0_cache(base, cfg)
    sweep = typed_sweep if cfg.blocking == "type" else gibbs_sweep
    timings: list[float] = []
    for _ in range(cfg.iterations):
        t0 = time.perf_counter()
        sweep(state, counts, base, cfg, rng, p0c)
        timings.append(time.perf_counter() - t0)
    mined = MinedGrammar(base=base, cfg=cfg, counts=counts,
                         fragments=extract_fragments(state, counts, base, cfg),
                         state=state, sweep_seconds=timings)
    return mined
