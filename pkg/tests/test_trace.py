import random

import pytest

from treeidioms.fragments import Fragment, IdiomSet
from treeidioms.grammar import Hole, Interior, Token, node_count
from treeidioms.trace import (
    ApplyIdiom, ApplyRule, GetToken, ReplayError, from_trace, to_trace,
)

from conftest import num, plus, random_tree, var


def test_smallest_trace(num_grammar):
    tree = Interior("S", 0, (Interior("Num", 1, (Token("number", "1"),)),))
    steps = to_trace(num_grammar, tree)
    assert [s.action for s in steps] == [ApplyRule(0), ApplyRule(1), GetToken("1")]
    assert [s.frontier for s in steps] == [(), (0,), (0, 0)]
    assert steps[0].t == 1


def test_figure_tree_trace_starts_with_if(pyfig_grammar):
    name = lambda s: Interior("expr", 7, (Token("id", s),))
    lit = lambda s: Interior("expr", 8, (Token("number", s),))
    cond = Interior("expr", 4, (Interior("expr", 5, (name("lst"), lit("0"))), lit("1")))
    assign = Interior("stmt", 1, (name("n"), Interior("expr", 6, (name("n"), lit("1")))))
    tree = Interior("stmt", 0, (cond, Interior("stmtlist", 2, (assign, Interior("stmtlist", 3, ())))))
    steps = to_trace(pyfig_grammar, tree)
    assert steps[0].action == ApplyRule(0)  # the if-production expands first
    assert len(steps) == node_count(tree)


def test_roundtrip_random_trees(expr_grammar):
    rng = random.Random(5)
    for _ in range(100):
        tree = random_tree(expr_grammar, rng)
        steps = to_trace(expr_grammar, tree)
        assert len(steps) == node_count(tree)
        assert from_trace(expr_grammar, steps) == tree


def test_to_trace_rejects_invalid(num_grammar):
    bad = Interior("S", 99, (Interior("Num", 1, (Token("number", "1"),)),))
    with pytest.raises(ValueError):
        to_trace(num_grammar, bad)


def test_replay_idiom_inlines_body(call_grammar, sorted_rev_idiom):
    idioms = IdiomSet(call_grammar, [sorted_rev_idiom])
    actions = [ApplyIdiom(0), ApplyRule(1), GetToken("my_list")]
    tree = from_trace(call_grammar, actions, idioms)
    assert tree == Interior("expr", 0, (
        Token("id", "sorted"),
        Interior("expr", 1, (Token("id", "my_list"),)),
        Token("id", "reverse"),
        Interior("expr", 1, (Token("id", "True"),)),
    ))


def test_replay_without_idiom_matches_to_trace(expr_grammar):
    tree = plus(num("1"), var("a"))
    assert from_trace(expr_grammar, to_trace(expr_grammar, tree)) == tree


def test_truncated_trace_fails_at_first_missing_step(expr_grammar):
    tree = plus(num("1"), var("a"))
    steps = to_trace(expr_grammar, tree)[:-1]
    with pytest.raises(ReplayError) as exc:
        from_trace(expr_grammar, steps)
    assert exc.value.timestep == len(steps) + 1


def test_truncated_mid_idiom(call_grammar, sorted_rev_idiom):
    idioms = IdiomSet(call_grammar, [sorted_rev_idiom])
    with pytest.raises(ReplayError):
        from_trace(call_grammar, [ApplyIdiom(0)], idioms)


def test_illegal_action_names_expected_symbol(expr_grammar):
    with pytest.raises(ReplayError) as exc:
        from_trace(expr_grammar, [GetToken("1")])
    assert exc.value.expected == "E"
    assert exc.value.timestep == 1


def test_unresolved_idiom_id(call_grammar, sorted_rev_idiom):
    idioms = IdiomSet(call_grammar, [sorted_rev_idiom])
    with pytest.raises(ReplayError):
        from_trace(call_grammar, [ApplyIdiom(7)], idioms)
    with pytest.raises(ReplayError):
        from_trace(call_grammar, [ApplyIdiom(0)], idioms=None)


def test_trailing_actions_rejected(num_grammar):
    tree = Interior("S", 0, (Interior("Num", 1, (Token("number", "1"),)),))
    steps = to_trace(num_grammar, tree)
    with pytest.raises(ReplayError):
        from_trace(num_grammar, steps + [GetToken("2")])


def test_frontier_mismatch_detected(expr_grammar):
    tree = plus(num("1"), var("a"))
    steps = to_trace(expr_grammar, tree)
    broken = steps[:1] + [steps[1].__class__(steps[1].t, (1, 0), steps[1].action)] + steps[2:]
    with pytest.raises(ReplayError):
        from_trace(expr_grammar, broken)


def test_repeated_label_holes_replay(expr_grammar):
    # idiom <x> + <x>: replay fills each hole from its own steps
    frag = Fragment(0, plus(Hole("l0", "E"), Hole("l0", "E")))
    idioms = IdiomSet(expr_grammar, [frag])
    actions = [ApplyIdiom(0), ApplyRule(2), GetToken("n"), ApplyRule(2), GetToken("n")]
    assert from_trace(expr_grammar, actions, idioms) == plus(var("n"), var("n"))
