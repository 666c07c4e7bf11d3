import random

import pytest

from treeidioms.grammar import (
    CorpusEntry, CorpusError, Grammar, GrammarError, Interior, Production, Sym,
    Token, grammar_from_json, grammar_to_json, is_valid, load_corpus,
    load_grammar, node_at, node_count, save_corpus, save_grammar, validate_ast,
)

from conftest import num, plus, random_tree, var


def two_node_tree():
    return Interior("S", 0, (Interior("Num", 1, (Token("number", "1"),)),))


def test_smallest_valid_tree(num_grammar):
    assert validate_ast(num_grammar, two_node_tree()) == []
    assert is_valid(num_grammar, two_node_tree())


def test_unknown_production_flagged_at_root(num_grammar):
    bad = Interior("S", 99, (Interior("Num", 1, (Token("number", "1"),)),))
    violations = validate_ast(num_grammar, bad)
    assert violations and violations[0].path == ()
    assert "unknown production" in violations[0].message


def test_child_kind_mismatch(num_grammar):
    bad = Interior("S", 0, (Token("number", "1"),))
    violations = validate_ast(num_grammar, bad)
    assert any(v.path == (0,) for v in violations)


def test_arity_mismatch(expr_grammar):
    bad = Interior("E", 0, (num("1"),))
    assert any("arity" in v.message for v in validate_ast(expr_grammar, bad))


def test_figure_style_python_subset_tree_validates(pyfig_grammar):
    # if lst[0] == 1: n = n + 1
    name = lambda s: Interior("expr", 7, (Token("id", s),))
    lit = lambda s: Interior("expr", 8, (Token("number", s),))
    cond = Interior("expr", 4, (Interior("expr", 5, (name("lst"), lit("0"))), lit("1")))
    assign = Interior("stmt", 1, (name("n"), Interior("expr", 6, (name("n"), lit("1")))))
    body = Interior("stmtlist", 2, (assign, Interior("stmtlist", 3, ())))
    tree = Interior("stmt", 0, (cond, body))
    assert validate_ast(pyfig_grammar, tree) == []


def test_grammar_invariants():
    with pytest.raises(GrammarError):  # sparse ids
        Grammar([Production(1, "S", (Sym.tc("x"),))], "S", ("x",))
    with pytest.raises(GrammarError):  # undeclared rhs nonterminal
        Grammar([Production(0, "S", (Sym.nt("T"),))], "S", ())
    with pytest.raises(GrammarError):  # start has no production
        Grammar([Production(0, "S", (Sym.tc("x"),))], "T", ("x",))
    with pytest.raises(GrammarError):  # name used as both nt and terminal class
        Grammar([Production(0, "S", (Sym.tc("S"),))], "S", ("S",))


def test_node_at_and_count(expr_grammar):
    tree = plus(plus(var("a"), num("1")), num("1"))
    assert node_at(tree, ()) is tree
    assert node_at(tree, (0, 1)) == num("1")
    assert node_at(tree, (0, 1, 0)) == Token("number", "1")
    assert node_count(tree) == 8
    with pytest.raises(ValueError):
        node_at(tree, (5,))


def test_grammar_roundtrip(tmp_path, expr_grammar):
    p = tmp_path / "g.json"
    save_grammar(expr_grammar, p)
    assert load_grammar(p) == expr_grammar
    # stable under a second trip
    obj = grammar_to_json(grammar_from_json(grammar_to_json(expr_grammar)))
    assert obj == grammar_to_json(expr_grammar)


def test_corpus_roundtrip(tmp_path, expr_grammar):
    rng = random.Random(11)
    entries = [CorpusEntry(f"e{i}", f"task {i}", random_tree(expr_grammar, rng))
               for i in range(25)]
    p = tmp_path / "c.jsonl"
    save_corpus(entries, p)
    back = load_corpus(p, expr_grammar)
    assert [e.id for e in back] == [e.id for e in entries]
    assert all(a.ast == b.ast and a.spec == b.spec for a, b in zip(back, entries))
    # byte-stable
    p2 = tmp_path / "c2.jsonl"
    save_corpus(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_empty_corpus(tmp_path, num_grammar):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_corpus(p, num_grammar) == []


def test_malformed_corpus_reports_line(tmp_path, num_grammar):
    p = tmp_path / "bad.jsonl"
    good = '{"id": "a", "spec": "", "ast": {"p": 0, "children": [{"p": 1, "children": [{"t": "number", "lex": "1"}]}]}}'
    p.write_text(good + "\nnot json\n")
    with pytest.raises(CorpusError) as exc:
        load_corpus(p, num_grammar)
    assert "line 2" in str(exc.value)


def test_invalid_ast_reports_entry(tmp_path, num_grammar):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "spec": "", "ast": {"p": 1, "children": [{"t": "number", "lex": "1"}]}}\n')
    with pytest.raises(CorpusError) as exc:
        load_corpus(p, num_grammar)
    assert "'a'" in str(exc.value)


def test_duplicate_entry_id(tmp_path, num_grammar):
    line = '{"id": "a", "spec": "", "ast": {"p": 0, "children": [{"p": 1, "children": [{"t": "number", "lex": "1"}]}]}}'
    p = tmp_path / "dup.jsonl"
    p.write_text(line + "\n" + line + "\n")
    with pytest.raises(CorpusError) as exc:
        load_corpus(p, num_grammar)
    assert "duplicate" in str(exc.value)


def test_large_corpus_loads(tmp_path, num_grammar):
    entries = [CorpusEntry(f"e{i}", "", two_node_tree()) for i in range(10000)]
    p = tmp_path / "big.jsonl"
    save_corpus(entries, p)
    assert len(load_corpus(p, num_grammar)) == 10000
