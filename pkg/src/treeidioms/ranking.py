"""Score, filter, and select the top-K mined idioms.

Two ranking functions: tree coverage (how many corpus trees contain at least
one occurrence) and coverage times per-node cross-entropy gain between the
posterior predictive and the base measure. Terminal idioms (no holes) are
filtered out before selection. Natural log throughout; only the ordering
matters for selection.

Ranked idiom file: the idiom JSON with per-idiom
``{"cov": int, "cov_score": float, "cxe_score": float, "size": int}`` added.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .fragments import (
    Fragment, IdiomSet, frag_node_from_json, frag_node_to_json,
    is_terminal_idiom, match_at,
)
from .grammar import Grammar, Interior, iter_nodes
from .miner import MinedGrammar, _log_predictive, _make_p0_cache


@dataclass
class ScoredIdiom:
    fragment: Fragment
    coverage_count: int
    cov_score: float
    cxe_score: float
    size: int


def tree_contains(fragment: Fragment, root: Interior) -> bool:
    for path, node in iter_nodes(root):
        if isinstance(node, Interior) and node.production_id == fragment.root.production_id:
            if match_at(fragment, root, path) is not None:
                return True
    return False


def score_cov(idiom: Fragment, corpus) -> int:
    """Number of distinct corpus trees containing at least one occurrence."""
    return sum(1 for e in corpus if tree_contains(idiom, e.ast))


def score_cxe(idiom: Fragment, corpus, mined: MinedGrammar,
              coverage: int | None = None) -> float:
    """coverage/|D| * (1/|I|) * log(posterior predictive / base prob)."""
    if coverage is None:
        coverage = score_cov(idiom, corpus)
    if coverage == 0:
        return 0.0
    p0c = _make_p0_cache(mined.base, mined.cfg)
    log_p1 = _log_predictive(mined.counts, mined.base, idiom.root, mined.cfg, p0c)
    log_p0 = p0c(idiom.root)
    return (coverage / len(corpus)) * (log_p1 - log_p0) / idiom.size


def score_idioms(fragments, corpus, mined: MinedGrammar) -> list[ScoredIdiom]:
    out = []
    for frag in fragments:
        cov = score_cov(frag, corpus)
        out.append(ScoredIdiom(
            fragment=frag,
            coverage_count=cov,
            cov_score=float(cov),
            cxe_score=score_cxe(frag, corpus, mined, coverage=cov),
            size=frag.size))
    return out


def select_top(scored, score_kind: str, k: int, grammar: Grammar) -> IdiomSet:
    """Filter terminal idioms, rank by the chosen score (descending, ties
    broken by larger size then smaller original id), take K, and assign
    dense idiom ids."""
    if score_kind not in ("cov", "cxe"):
        raise ValueError(f"score_kind must be 'cov' or 'cxe', got {score_kind!r}")
    if k < 0:
        raise ValueError("K must be nonnegative")
    pool = [s for s in scored if not is_terminal_idiom(s.fragment)]
    key = (lambda s: s.cov_score) if score_kind == "cov" else (lambda s: s.cxe_score)
    pool.sort(key=lambda s: (-key(s), -s.size, s.fragment.id))
    chosen = pool[:k]
    frags = [Fragment(i, s.fragment.root) for i, s in enumerate(chosen)]
    return IdiomSet(grammar, frags)


def save_ranked(idioms: IdiomSet, scored_by_root, path) -> None:
    """Write the ranked idiom file. `scored_by_root` maps fragment roots to
    their ScoredIdiom (scores survive the id reassignment of select_top)."""
    items = []
    for f in idioms.fragments:
        s = scored_by_root[f.root]
        items.append({
            "id": f.id,
            "root": frag_node_to_json(f.root),
            "cov": s.coverage_count,
            "cov_score": s.cov_score,
            "cxe_score": s.cxe_score,
            "size": s.size,
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"idioms": items}, fh, indent=2)
        fh.write("\n")


def load_ranked(path, grammar: Grammar) -> tuple[IdiomSet, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    frags = []
    for item in sorted(obj["idioms"], key=lambda d: d["id"]):
        frags.append(Fragment(int(item["id"]), frag_node_from_json(item["root"], grammar)))
    return IdiomSet(grammar, frags), obj["idioms"]
