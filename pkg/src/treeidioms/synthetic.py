"""Synthetic corpora with known ground truth.

Three generator profiles:

* planted  -- a small statement/expression grammar; each tree has three
  statement slots, 1-3 of which receive an instance of one of five planted
  multi-node fragments (the rest are noise). The planted fragments' root
  productions are reserved: the noise generator never draws them, so every
  occurrence in the corpus is a recorded insertion and the sidecar log is
  exact ground truth.
* overlap  -- unary chains over a two-production grammar plus one
  self-overlapping idiom, so a deterministic rewrite must discard a large
  share of occurrences.
* scaling  -- noise-only trees from the planted grammar, sized to hit a
  target total node count, for the linear-complexity measurements.

Sidecar ground-truth log: JSONL of {"entry", "fragment", "anchor"}.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .fragments import Fragment, instantiate
from .grammar import CorpusEntry, Grammar, Hole, Interior, Production, Sym, Token, node_count

_IDS = ("x", "y", "z", "w", "a", "b", "c", "d", "e", "f", "g", "h")
_NUMS = ("0", "1", "2", "3", "5", "7", "8", "9", "10", "42", "64", "100")


def build_demo_grammar() -> Grammar:
    prods = [
        Production(0, "Prog", (Sym.nt("Stmt"), Sym.nt("Stmt"), Sym.nt("Stmt"))),
        Production(1, "Stmt", (Sym.tc("id"), Sym.nt("E"))),            # assign
        Production(2, "Stmt", (Sym.nt("E"),)),                          # print
        Production(3, "Stmt", (Sym.nt("E"),)),                          # return
        Production(4, "Stmt", (Sym.tc("id"), Sym.nt("E"), Sym.nt("E"))),  # for-loop
        Production(5, "Stmt", (Sym.nt("E"), Sym.nt("E"))),              # if
        Production(6, "Stmt", (Sym.tc("id"), Sym.nt("E"), Sym.nt("E"))),  # 2-arg call stmt
        Production(7, "Stmt", (Sym.nt("E"), Sym.nt("E"))),              # while
        Production(8, "Stmt", (Sym.tc("id"), Sym.nt("E"))),             # augmented assign
        Production(9, "E", (Sym.nt("E"), Sym.nt("E"))),                 # add
        Production(10, "E", (Sym.nt("E"), Sym.nt("E"))),                # mul
        Production(11, "E", (Sym.tc("id"),)),                           # var
        Production(12, "E", (Sym.tc("num"),)),                          # literal
        Production(13, "E", (Sym.tc("id"), Sym.nt("E"))),               # 1-arg call
    ]
    return Grammar(prods, "Prog", ("id", "num"))


# productions 4-8 are reserved for the planted fragments; noise never draws them
_NOISE_STMTS = (1, 2, 3)


def _e(grammar, pid, *children):
    return Interior(grammar.production(pid).lhs, pid, tuple(children))


def demo_fragments(grammar: Grammar) -> list[Fragment]:
    """The five planted idioms, one per reserved statement production."""
    tok = Token
    var_n = _e(grammar, 11, tok("id", "n"))
    var_acc = _e(grammar, 11, tok("id", "acc"))
    var_k = _e(grammar, 11, tok("id", "k"))
    lit_1 = _e(grammar, 12, tok("num", "1"))
    return [
        # for i in range(<e>): <e>
        Fragment(0, _e(grammar, 4, tok("id", "i"),
                       _e(grammar, 13, tok("id", "range"), Hole("l0", "E")),
                       Hole("l1", "E"))),
        # if <e> * n: <e>
        Fragment(1, _e(grammar, 5, _e(grammar, 10, Hole("l0", "E"), var_n),
                       Hole("l1", "E"))),
        # update(acc, <e>)
        Fragment(2, _e(grammar, 6, tok("id", "update"), var_acc, Hole("l0", "E"))),
        # total += <e> + 1
        Fragment(3, _e(grammar, 8, tok("id", "total"),
                       _e(grammar, 9, Hole("l0", "E"), lit_1))),
        # while k + <e>: <e>
        Fragment(4, _e(grammar, 7, _e(grammar, 9, var_k, Hole("l0", "E")),
                       Hole("l1", "E"))),
    ]


@dataclass
class PlantRecord:
    entry_id: str
    fragment_id: int
    anchor: tuple[int, ...]


@dataclass
class PlantSpec:
    num_trees: int = 500
    fragments: list[Fragment] = field(default_factory=list)
    plants_min: int = 1
    plants_max: int = 3
    noise_depth: int = 2
    seed: int = 0


def _rand_expr(grammar: Grammar, rng: random.Random, depth: int, max_depth: int) -> Interior:
    if depth >= max_depth:
        r = rng.random()
        if r < 0.55:
            return _e(grammar, 11, Token("id", rng.choice(_IDS)))
        return _e(grammar, 12, Token("num", rng.choice(_NUMS)))
    r = rng.random()
    if r < 0.20:
        return _e(grammar, 9, _rand_expr(grammar, rng, depth + 1, max_depth),
                  _rand_expr(grammar, rng, depth + 1, max_depth))
    if r < 0.35:
        return _e(grammar, 10, _rand_expr(grammar, rng, depth + 1, max_depth),
                  _rand_expr(grammar, rng, depth + 1, max_depth))
    if r < 0.45:
        return _e(grammar, 13, Token("id", rng.choice(_IDS)),
                  _rand_expr(grammar, rng, depth + 1, max_depth))
    if r < 0.75:
        return _e(grammar, 11, Token("id", rng.choice(_IDS)))
    return _e(grammar, 12, Token("num", rng.choice(_NUMS)))


def _rand_stmt(grammar: Grammar, rng: random.Random, max_depth: int) -> Interior:
    pid = rng.choice(_NOISE_STMTS)
    if pid == 1:
        return _e(grammar, 1, Token("id", rng.choice(_IDS)),
                  _rand_expr(grammar, rng, 0, max_depth))
    return _e(grammar, pid, _rand_expr(grammar, rng, 0, max_depth))


def _plant_instance(grammar: Grammar, frag: Fragment, rng: random.Random,
                    max_depth: int) -> Interior:
    from .fragments import hole_paths
    bindings = {}
    for _, hole in hole_paths(frag.root):
        if hole.label in bindings:
            continue
        if hole.nt == "E":
            bindings[hole.label] = _rand_expr(grammar, rng, 0, max_depth)
        else:
            bindings[hole.label] = _rand_stmt(grammar, rng, max_depth)
    return instantiate(frag, bindings)


def generate_planted(grammar: Grammar, spec: PlantSpec) -> tuple[list[CorpusEntry], list[PlantRecord]]:
    """Build the planted corpus. Slot 0 is always planted (the plant count
    range still holds: 1 <= plants <= 3); remaining plants land on random
    slots. Accidental occurrences cannot arise because noise never uses the
    reserved root productions."""
    if not spec.fragments:
        raise ValueError("PlantSpec.fragments must not be empty")
    if not 1 <= spec.plants_min <= spec.plants_max <= 3:
        raise ValueError("plant count range must lie within [1, 3]")
    from .fragments import validate_fragment
    for f in spec.fragments:
        bad = validate_fragment(grammar, f)
        if bad:
            raise ValueError(f"planted fragment {f.id} is invalid: {bad[0].message}")
    rng = random.Random(spec.seed)
    entries: list[CorpusEntry] = []
    records: list[PlantRecord] = []
    for i in range(spec.num_trees):
        eid = f"t{i:05d}"
        n_plants = rng.randint(spec.plants_min, spec.plants_max)
        slots = [0] + rng.sample([1, 2], n_plants - 1)
        stmts = []
        for slot in range(3):
            if slot in slots:
                frag = rng.choice(spec.fragments)
                stmts.append(_plant_instance(grammar, frag, rng, spec.noise_depth))
                records.append(PlantRecord(eid, frag.id, (slot,)))
            else:
                stmts.append(_rand_stmt(grammar, rng, spec.noise_depth))
        root = _e(grammar, 0, *stmts)
        entries.append(CorpusEntry(eid, f"synthetic task {i}", root))
    return entries, records


def generate_scaling(grammar: Grammar, target_nodes: int, seed: int = 0,
                     noise_depth: int = 3) -> list[CorpusEntry]:
    """Noise-only trees until the total node count reaches the target."""
    rng = random.Random(seed)
    entries = []
    total = 0
    i = 0
    while total < target_nodes:
        stmts = [_rand_stmt(grammar, rng, noise_depth) for _ in range(3)]
        root = _e(grammar, 0, *stmts)
        entries.append(CorpusEntry(f"s{i:06d}", f"scaling task {i}", root))
        total += node_count(root)
        i += 1
    return entries


# ---------------------------------------------------------------------------
# overlap profile

def build_overlap_grammar() -> Grammar:
    prods = [
        Production(0, "E", (Sym.nt("E"),)),      # wrap
        Production(1, "E", (Sym.tc("num"),)),    # leaf
    ]
    return Grammar(prods, "E", ("num",))


def overlap_fragment(grammar: Grammar) -> Fragment:
    """Three stacked wraps with a hole below: occurrences on a chain overlap
    at every level."""
    return Fragment(0, _e(grammar, 0, _e(grammar, 0, _e(grammar, 0, Hole("l0", "E")))))


def generate_overlap(grammar: Grammar, num_trees: int = 40, min_chain: int = 9,
                     max_chain: int = 15, seed: int = 0) -> tuple[list[CorpusEntry], list[PlantRecord]]:
    rng = random.Random(seed)
    entries = []
    records = []
    for i in range(num_trees):
        eid = f"o{i:05d}"
        n = rng.randint(min_chain, max_chain)
        node = _e(grammar, 1, Token("num", rng.choice(_NUMS)))
        for _ in range(n):
            node = _e(grammar, 0, node)
        entries.append(CorpusEntry(eid, f"chain task {i}", node))
        # the 3-wrap idiom anchors wherever three wraps stack: depths 0..n-3
        for depth in range(0, n - 2):
            records.append(PlantRecord(eid, 0, (0,) * depth))
    return entries, records


# ---------------------------------------------------------------------------
# sidecar IO

def save_plant_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"entry": r.entry_id, "fragment": r.fragment_id,
                                 "anchor": list(r.anchor)}))
            fh.write("\n")


def load_plant_records(path) -> list[PlantRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                out.append(PlantRecord(obj["entry"], obj["fragment"], tuple(obj["anchor"])))
    return out
