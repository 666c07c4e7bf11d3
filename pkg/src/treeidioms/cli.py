"""Pipeline driver: gen, mine, rank, mark, train-scorer, decode, stats.

Every command is a pure function of its input files plus the seed; rerunning
with identical arguments rewrites byte-identical outputs. Exit codes: 0 ok,
1 usage error, 2 data error (bad files, missing upstream artifacts).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import fragments as frg
from . import grammar as gmr
from . import marking as mrk
from . import miner as mnr
from . import synthesis as obj
from . import ranking as rnk
from . import synthetic as syn
from .trace import TraceStep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _need(path, stage_hint):
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"missing {path!r}; run `treeidioms {stage_hint}` first")
    return path


# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)

    def p(name):
        return os.path.join(args.out_dir, name)

    if args.profile == "planted":
        grammar = syn.build_demo_grammar()
        frags = syn.demo_fragments(grammar)
        spec = syn.PlantSpec(num_trees=args.trees, fragments=frags,
                             plants_min=args.plants_min, plants_max=args.plants_max,
                             noise_depth=args.noise_depth, seed=args.seed)
        entries, records = syn.generate_planted(grammar, spec)
        idioms = frg.IdiomSet(grammar, frags)
        frg.save_idioms(idioms, p("planted_idioms.json"))
    elif args.profile == "overlap":
        grammar = syn.build_overlap_grammar()
        frag = syn.overlap_fragment(grammar)
        entries, records = syn.generate_overlap(grammar, num_trees=args.trees,
                                                seed=args.seed)
        frg.save_idioms(frg.IdiomSet(grammar, [frag]), p("idioms.json"))
    elif args.profile == "scaling":
        grammar = syn.build_demo_grammar()
        entries = syn.generate_scaling(grammar, args.target_nodes, seed=args.seed)
        records = []
    else:
        raise ValueError(f"unknown profile {args.profile!r}")

    gmr.save_grammar(grammar, p("grammar.json"))
    gmr.save_corpus(entries, p("corpus.jsonl"))
    syn.save_plant_records(records, p("truth.jsonl"))
    total = sum(gmr.node_count(e.ast) for e in entries)
    print(f"wrote {len(entries)} trees ({total} nodes) to {args.out_dir}")
    return 0


def _miner_config(args) -> mnr.MinerConfig:
    return mnr.MinerConfig(alpha=args.alpha, discount=args.discount,
                           iterations=args.iters, p_stop=args.p_stop,
                           seed=args.seed, min_count=args.min_count,
                           blocking=args.blocking)


def cmd_mine(args) -> int:
    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    corpus = gmr.load_corpus(_need(args.corpus, "gen"), grammar)
    cfg = _miner_config(args)
    t0 = time.perf_counter()
    mined = mnr.mine(grammar, corpus, cfg)
    mine_secs = time.perf_counter() - t0
    for i, s in enumerate(mined.sweep_seconds, start=1):
        print(f"sweep {i}: {s:.3f}s")
    print(f"mining: {mine_secs:.3f}s, {len(mined.fragments)} fragment types "
          f"with count >= {cfg.min_count}")

    t0 = time.perf_counter()
    candidates = [frg.Fragment(i, m.root) for i, m in enumerate(mined.fragments)
                  if any(isinstance(n, gmr.Hole) for _, n in gmr.iter_nodes(m.root))]
    scored = rnk.score_idioms(candidates, corpus, mined)
    idioms = rnk.select_top(scored, args.score, args.top, grammar)
    print(f"ranking: {time.perf_counter() - t0:.3f}s, kept {len(idioms)} idioms")

    by_root = {s.fragment.root: s for s in scored}
    rnk.save_ranked(idioms, by_root, args.out)
    if args.pool_out:
        mnr.save_pool(mined, args.pool_out)
    if args.timing_out:
        with open(args.timing_out, "w", encoding="utf-8") as fh:
            json.dump({"total_nodes": sum(gmr.node_count(e.ast) for e in corpus),
                       "mine_seconds": mine_secs,
                       "sweep_seconds": mined.sweep_seconds}, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_rank(args) -> int:
    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    corpus = gmr.load_corpus(_need(args.corpus, "gen"), grammar)
    mined = mnr.load_pool(_need(args.pool, "mine (with --pool-out)"), grammar)
    candidates = [frg.Fragment(i, m.root) for i, m in enumerate(mined.fragments)
                  if any(isinstance(n, gmr.Hole) for _, n in gmr.iter_nodes(m.root))]
    scored = rnk.score_idioms(candidates, corpus, mined)
    idioms = rnk.select_top(scored, args.score, args.top, grammar)
    by_root = {s.fragment.root: s for s in scored}
    rnk.save_ranked(idioms, by_root, args.out)
    print(f"ranked {len(candidates)} candidates, kept {len(idioms)}")
    return 0


def cmd_mark(args) -> int:
    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    corpus = gmr.load_corpus(_need(args.corpus, "gen"), grammar)
    idioms, _ = rnk.load_ranked(_need(args.idioms, "mine"), grammar)
    marked = mrk.mark(corpus, idioms, grammar, threads=args.threads)
    mrk.save_marked(marked, args.out)
    total = sum(len(me.occurrences) for me in marked.entries)
    print(f"marked {total} occurrences across {len(marked.entries)} entries")
    return 0


def cmd_train_scorer(args) -> int:
    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    idioms, _ = rnk.load_ranked(_need(args.idioms, "mine"), grammar)
    marked = mrk.load_marked(_need(args.marked, "mark"), grammar, idioms)
    scorer = obj.train_count_scorer(marked, epochs=args.epochs, k=args.smoothing)
    obj.save_scorer(scorer, args.out)
    print(f"trained on {len(marked.entries)} entries, "
          f"{len(scorer.counts)} contexts, vocab {len(scorer.vocab.tokens)}")
    return 0


def cmd_decode(args) -> int:
    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    idioms, _ = rnk.load_ranked(_need(args.idioms, "mine"), grammar)
    scorer = obj.load_scorer(_need(args.scorer, "train-scorer"))
    results = []
    for i in range(args.num):
        res = obj.decode(scorer, grammar, idioms, strategy=args.strategy,
                         beam_width=args.beam_width, max_steps=args.max_steps)
        results.append(res)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, res in enumerate(results):
            fh.write(json.dumps({
                "id": f"gen{i:04d}",
                "ast": gmr.node_to_json(res.ast),
                "log_prob": res.log_prob,
                "trace": [{"t": s.t, "frontier": list(s.frontier),
                           "action": obj._action_to_json(s.action)} for s in res.trace],
            }))
            fh.write("\n")
    usage = obj.idiom_usage_stats(results)
    print(f"decoded {len(results)} outputs; idiom actions per output: "
          f"{usage.per_output}")
    return 0


def _load_decoded_traces(path, grammar):
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            steps = [TraceStep(s["t"], tuple(s["frontier"]), obj._action_from_json(s["action"]))
                     for s in rec["trace"]]
            traces.append(steps)
    return traces


def cmd_stats(args) -> int:
    from . import report as rpt

    grammar = gmr.load_grammar(_need(args.grammar, "gen"))
    idioms, _ = rnk.load_ranked(_need(args.idioms, "mine"), grammar)
    marked = mrk.load_marked(_need(args.marked, "mark"), grammar, idioms)
    _, overlap = mrk.greedy_rewrite(marked)

    usage = None
    if args.decodes:
        traces = _load_decoded_traces(_need(args.decodes, "decode"), grammar)
        usage = obj.idiom_usage_stats(traces)

    os.makedirs(args.out_dir, exist_ok=True)
    written = rpt.stats_report(args.out_dir, overlap, usage, figures=not args.no_figures)

    summary = {
        "total_occurrences": overlap.total_occurrences,
        "kept_by_greedy": overlap.kept_by_greedy,
        "discard_rate": overlap.discard_rate,
    }
    if usage is not None:
        summary["usage_histogram"] = {str(k): usage.histogram[k]
                                      for k in sorted(usage.histogram)}
        summary["distinct_idioms_used"] = len(usage.distinct_idioms)

    if args.scorer:
        scorer = obj.load_scorer(_need(args.scorer, "train-scorer"))
        if args.threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                reports = list(pool.map(
                    lambda me: obj.objective(marked, me.entry.id, scorer),
                    marked.entries))
        else:
            reports = [obj.objective(marked, me.entry.id, scorer) for me in marked.entries]
        path = os.path.join(args.out_dir, "objective.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for rep in reports:
                fh.write(json.dumps(obj.report_to_json(rep)))
                fh.write("\n")
        written["objective_jsonl"] = path
        summary["mean_objective_loss"] = sum(r.loss for r in reports) / len(reports)

    path = os.path.join(args.out_dir, "stats.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["stats_json"] = path
    print(f"discard_rate {overlap.discard_rate:.3f}; wrote {len(written)} files "
          f"to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="treeidioms",
                 description="Mine, rank, and mark AST idioms; train and decode "
                             "against the idiom-aware objective.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic corpus with ground truth")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--profile", choices=("planted", "overlap", "scaling"),
                   default="planted")
    g.add_argument("--trees", type=int, default=500)
    g.add_argument("--plants-min", type=int, default=1)
    g.add_argument("--plants-max", type=int, default=3)
    g.add_argument("--noise-depth", type=int, default=2)
    g.add_argument("--target-nodes", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    def miner_flags(p):
        p.add_argument("--alpha", type=float, default=5.0)
        p.add_argument("--discount", type=float, default=0.5)
        p.add_argument("--iters", type=int, default=10)
        p.add_argument("--p-stop", type=float, default=0.5)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--min-count", type=int, default=2)
        p.add_argument("--blocking", choices=("site", "type"), default="site")

    m = sub.add_parser("mine", help="mine idioms and write the ranked idiom file")
    m.add_argument("--grammar", required=True)
    m.add_argument("--corpus", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--pool-out", default=None,
                   help="also write the raw mined-fragment pool for `rank`")
    m.add_argument("--timing-out", default=None)
    m.add_argument("--score", choices=("cov", "cxe"), default="cov")
    m.add_argument("--top", type=int, default=80)
    miner_flags(m)
    m.set_defaults(func=cmd_mine)

    r = sub.add_parser("rank", help="re-rank a mined pool without re-running MCMC")
    r.add_argument("--grammar", required=True)
    r.add_argument("--corpus", required=True)
    r.add_argument("--pool", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--score", choices=("cov", "cxe"), default="cov")
    r.add_argument("--top", type=int, default=80)
    r.set_defaults(func=cmd_rank)

    k = sub.add_parser("mark", help="annotate the corpus with all idiom occurrences")
    k.add_argument("--grammar", required=True)
    k.add_argument("--corpus", required=True)
    k.add_argument("--idioms", required=True)
    k.add_argument("--out", required=True)
    k.add_argument("--threads", type=int, default=1)
    k.set_defaults(func=cmd_mark)

    t = sub.add_parser("train-scorer", help="train the count-based reference scorer")
    t.add_argument("--grammar", required=True)
    t.add_argument("--idioms", required=True)
    t.add_argument("--marked", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--smoothing", type=float, default=0.1)
    t.set_defaults(func=cmd_train_scorer)

    d = sub.add_parser("decode", help="generate programs with idiom unrolling")
    d.add_argument("--grammar", required=True)
    d.add_argument("--idioms", required=True)
    d.add_argument("--scorer", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--num", type=int, default=1)
    d.add_argument("--strategy", choices=("greedy", "beam"), default="greedy")
    d.add_argument("--beam-width", type=int, default=5)
    d.add_argument("--max-steps", type=int, default=512)
    d.set_defaults(func=cmd_decode)

    s = sub.add_parser("stats", help="overlap and idiom-usage report (CSV + figures)")
    s.add_argument("--grammar", required=True)
    s.add_argument("--idioms", required=True)
    s.add_argument("--marked", required=True)
    s.add_argument("--decodes", default=None)
    s.add_argument("--scorer", default=None)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except (gmr.CorpusError, gmr.GrammarError, frg.FragmentError, ValueError,
            KeyError, FileNotFoundError, json.JSONDecodeError, mnr.CountsError,
            obj.DecodeBudgetError, obj.ScorerContractError, obj.TraceCapError) as exc:
        print(f"treeidioms {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
