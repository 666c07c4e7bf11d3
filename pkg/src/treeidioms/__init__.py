"""Corpus-to-idioms toolkit: mine common AST fragments with labeled holes,
rank and mark them, and train/decode against an idiom-aware action objective."""

__version__ = "0.1.0"

from .grammar import (  # noqa: F401
    CorpusEntry, Grammar, GrammarError, CorpusError, Hole, Interior, Production,
    Sym, Token, Violation, is_valid, iter_nodes, load_corpus, load_grammar,
    node_at, node_count, save_corpus, save_grammar, validate_ast,
)
from .trace import (  # noqa: F401
    Action, ActionTrace, ApplyIdiom, ApplyRule, GetToken, ReplayError,
    TraceStep, from_trace, to_trace,
)
from .fragments import (  # noqa: F401
    Fragment, FragmentError, IdiomSet, InstantiateError, Occurrence,
    find_occurrences, instantiate, is_terminal_idiom, load_idioms, match_at,
    save_idioms, validate_fragment,
)
from .miner import (  # noqa: F401
    BaseGrammar, CountsError, MinedGrammar, MinerConfig, PypCounts, SplitState,
    base_fragment_log_prob, estimate_base, gibbs_sweep, mine, predictive_prob,
)
from .ranking import ScoredIdiom, score_cov, score_cxe, score_idioms, select_top  # noqa: F401
from .marking import MarkedCorpus, OverlapStats, greedy_rewrite, mark  # noqa: F401
from .synthesis import (  # noqa: F401
    ActionContext, ActionScorer, ChoiceSet, CountScorer, DecodeBudgetError,
    DecodeResult, ObjectiveReport, ScorerContractError, TraceCapError,
    UniformScorer, Vocabulary, choice_sets, decode, enumerate_traces,
    idiom_usage_stats, legal_actions, objective, train_count_scorer,
)
