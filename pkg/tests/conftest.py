import random

import pytest

from treeidioms.fragments import Fragment
from treeidioms.grammar import (
    Grammar, Hole, Interior, Production, Sym, Token, iter_nodes,
)
from treeidioms.synthesis import ActionScorer


# ---------------------------------------------------------------------------
# small fixed grammars

@pytest.fixture(scope="session")
def num_grammar():
    """S -> Num, Num -> <number>: the smallest two-node tree grammar."""
    return Grammar([Production(0, "S", (Sym.nt("Num"),)),
                    Production(1, "Num", (Sym.tc("number"),))],
                   "S", ("number",))


@pytest.fixture(scope="session")
def expr_grammar():
    """E -> E+E | <number> | <ident>."""
    return Grammar([Production(0, "E", (Sym.nt("E"), Sym.nt("E"))),
                    Production(1, "E", (Sym.tc("number"),)),
                    Production(2, "E", (Sym.tc("ident"),))],
                   "E", ("number", "ident"))


def plus(a, b):
    return Interior("E", 0, (a, b))


def num(x):
    return Interior("E", 1, (Token("number", x),))


def var(x):
    return Interior("E", 2, (Token("ident", x),))


@pytest.fixture(scope="session")
def pyfig_grammar():
    """Hand-written Python-subset grammar for the if/compare/subscript shape."""
    return Grammar([
        Production(0, "stmt", (Sym.nt("expr"), Sym.nt("stmtlist"))),   # if
        Production(1, "stmt", (Sym.nt("expr"), Sym.nt("expr"))),       # assign
        Production(2, "stmtlist", (Sym.nt("stmt"), Sym.nt("stmtlist"))),  # cons
        Production(3, "stmtlist", ()),                                  # nil
        Production(4, "expr", (Sym.nt("expr"), Sym.nt("expr"))),       # compare-eq
        Production(5, "expr", (Sym.nt("expr"), Sym.nt("expr"))),       # subscript
        Production(6, "expr", (Sym.nt("expr"), Sym.nt("expr"))),       # binop-add
        Production(7, "expr", (Sym.tc("id"),)),                        # name
        Production(8, "expr", (Sym.tc("number"),)),                    # num literal
    ], "stmt", ("id", "number"))


@pytest.fixture(scope="session")
def call_grammar():
    """expr -> f(arg, kw=value) | name | number: enough for the
    sorted-with-keyword idiom."""
    return Grammar([
        Production(0, "expr", (Sym.tc("id"), Sym.nt("expr"), Sym.tc("id"), Sym.nt("expr"))),
        Production(1, "expr", (Sym.tc("id"),)),
        Production(2, "expr", (Sym.tc("number"),)),
    ], "expr", ("id", "number"))


@pytest.fixture(scope="session")
def sorted_rev_idiom(call_grammar):
    """sorted(<hole>, reverse=True) as a fragment."""
    true_name = Interior("expr", 1, (Token("id", "True"),))
    root = Interior("expr", 0, (Token("id", "sorted"), Hole("l0", "expr"),
                                Token("id", "reverse"), true_name))
    return Fragment(0, root)


# ---------------------------------------------------------------------------
# random generators

def min_depths(grammar):
    md = {nt: None for nt in grammar.nonterminals}
    changed = True
    while changed:
        changed = False
        for p in grammar.productions:
            kids = [md[s.name] for s in p.rhs if s.is_nonterminal]
            if any(k is None for k in kids):
                continue
            d = 1 + max(kids, default=0)
            if md[p.lhs] is None or d < md[p.lhs]:
                md[p.lhs] = d
                changed = True
    return md


_LEXEMES = ("a", "b", "c", "n", "m", "q", "0", "1", "2", "7")


def random_tree(grammar, rng, nt=None, max_depth=8):
    """A uniformly-messy random tree: productions chosen at random, with the
    depth budget enforced through each nonterminal's minimum completion depth."""
    md = min_depths(grammar)

    def gen(sym, budget):
        options = [p for p in grammar.by_lhs[sym]
                   if 1 + max([md[s.name] for s in p.rhs if s.is_nonterminal] or [0]) <= budget]
        if not options:
            options = sorted(grammar.by_lhs[sym],
                             key=lambda p: max([md[s.name] for s in p.rhs
                                                if s.is_nonterminal] or [0]))[:1]
        p = rng.choice(options)
        children = []
        for s in p.rhs:
            if s.is_nonterminal:
                children.append(gen(s.name, budget - 1))
            else:
                children.append(Token(s.name, rng.choice(_LEXEMES)))
        return Interior(sym, p.id, tuple(children))

    return gen(nt or grammar.start, max_depth)


def random_fragment(tree, rng, max_size=12, repeat_labels=False):
    """Cut a fragment out of a random subtree: walk down from a random
    interior anchor, turning interior children into holes at random or when
    the size budget runs out. Optionally merge two same-type hole labels to
    exercise repeated-label unification."""
    anchors = [n for _, n in iter_nodes(tree) if isinstance(n, Interior)]
    anchor = rng.choice(anchors)
    counter = [0]
    size = [0]

    def build(node, is_root):
        if isinstance(node, Token):
            size[0] += 1
            return node
        if not is_root and (size[0] >= max_size or rng.random() < 0.4):
            label = f"l{counter[0]}"
            counter[0] += 1
            return Hole(label, node.nt)
        size[0] += 1
        return Interior(node.nt, node.production_id,
                        tuple(build(c, False) for c in node.children))

    root = build(anchor, True)
    if repeat_labels and counter[0] >= 2:
        holes = [n for _, n in iter_nodes(root) if isinstance(n, Hole)]
        a, b = rng.sample(holes, 2)
        if a.nt == b.nt:
            def relabel(node):
                if isinstance(node, Hole) and node.label == b.label:
                    return Hole(a.label, node.nt)
                if isinstance(node, Interior):
                    return Interior(node.nt, node.production_id,
                                    tuple(relabel(c) for c in node.children))
                return node
            root = relabel(root)
    return Fragment(0, root)


# ---------------------------------------------------------------------------
# independent matcher oracle: every anchor, positional walk, pairwise
# equality of same-label bindings by an explicit recursive comparison

def nodes_equal(a, b):
    if isinstance(a, Token) and isinstance(b, Token):
        return a.term_class == b.term_class and a.lexeme == b.lexeme
    if isinstance(a, Interior) and isinstance(b, Interior):
        if a.nt != b.nt or a.production_id != b.production_id \
                or len(a.children) != len(b.children):
            return False
        return all(nodes_equal(x, y) for x, y in zip(a.children, b.children))
    return False


def oracle_match(fragment, tree, anchor_path, anchor_node):
    found = []  # (label, path, subtree) for every hole position

    def walk(fnode, node, path):
        if isinstance(fnode, Hole):
            if not isinstance(node, Interior) or node.nt != fnode.nt:
                return False
            found.append((fnode.label, path, node))
            return True
        if isinstance(fnode, Token):
            return isinstance(node, Token) and node.term_class == fnode.term_class \
                and node.lexeme == fnode.lexeme
        if not isinstance(node, Interior):
            return False
        if node.production_id != fnode.production_id or node.nt != fnode.nt:
            return False
        if len(node.children) != len(fnode.children):
            return False
        return all(walk(fc, nc, path + (i,))
                   for i, (fc, nc) in enumerate(zip(fnode.children, node.children)))

    if not walk(fragment.root, anchor_node, anchor_path):
        return None
    first = {}
    bindings = {}
    for label, path, sub in found:
        if label in first:
            if not nodes_equal(first[label], sub):
                return None
        else:
            first[label] = sub
            bindings[label] = path
    return bindings


def oracle_occurrences(idioms, tree):
    """All-anchors brute force; returns sorted (anchor, idiom_id, bindings)."""
    out = []
    for path, node in iter_nodes(tree):
        if not isinstance(node, Interior):
            continue
        for frag in idioms:
            b = oracle_match(frag, tree, path, node)
            if b is not None:
                out.append((path, frag.id, b))
    out.sort(key=lambda x: (x[0], x[1]))
    return out


# ---------------------------------------------------------------------------
# a deterministic random scorer (per-context distributions drawn once)

class RandomScorer(ActionScorer):
    def __init__(self, vocab, seed):
        self.vocab = vocab
        self.rng = random.Random(seed)
        self.cache = {}

    def distribution(self, ctx, legal, prefix=None):
        key = (ctx, tuple(legal))
        dist = self.cache.get(key)
        if dist is None:
            weights = [self.rng.random() ** 3 + 1e-4 for _ in legal]
            total = sum(weights)
            dist = {a: w / total for a, w in zip(legal, weights)}
            self.cache[key] = dist
        return dict(dist)


# ---------------------------------------------------------------------------
# the shared planted-corpus pipeline (the acceptance configuration)

@pytest.fixture(scope="session")
def planted_pipeline():
    from treeidioms import marking as mrk
    from treeidioms import miner as mnr
    from treeidioms import ranking as rnk
    from treeidioms import synthesis as sobj
    from treeidioms import synthetic as syn
    from treeidioms.grammar import Hole as H, iter_nodes as itn

    grammar = syn.build_demo_grammar()
    planted = syn.demo_fragments(grammar)
    spec = syn.PlantSpec(num_trees=500, fragments=planted, seed=7)
    entries, records = syn.generate_planted(grammar, spec)
    cfg = mnr.MinerConfig(alpha=5.0, discount=0.5, iterations=10, seed=7)
    mined = mnr.mine(grammar, entries, cfg)
    candidates = [Fragment(i, m.root) for i, m in enumerate(mined.fragments)
                  if any(isinstance(n, H) for _, n in itn(m.root))]
    scored = rnk.score_idioms(candidates, entries, mined)
    top20 = rnk.select_top(scored, "cov", 20, grammar)
    marked = mrk.mark(entries, top20, grammar)
    scorer = sobj.train_count_scorer(marked)
    return {
        "grammar": grammar, "planted": planted, "entries": entries,
        "records": records, "cfg": cfg, "mined": mined, "scored": scored,
        "top20": top20, "marked": marked, "scorer": scorer,
    }
