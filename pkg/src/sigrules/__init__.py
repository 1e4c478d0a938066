"""Class association rule mining with multiple-testing correction."""

__version__ = "0.1.0"

from .corrections import (
    CorrectionOutcome,
    Method,
    SplitMode,
    SplitSpec,
    bh_select,
    bonferroni_select,
    count_tests,
    holdout_run,
    make_split,
)
from .dataset import CategoricalDataset, class_distribution, load_csv, write_csv
from .fisher import (
    BufferCache,
    RuleScorer,
    build_log_factorials,
    build_pvalue_buffer,
    fisher_p,
    hypergeom_pmf,
)
from .miner import MinedPattern, choose_representation, class_support_under_labels, mine_closed
from .permutation import (
    PermutationRun,
    perm_fdr_select,
    perm_fwer_cutoff,
    perm_fwer_select,
    permute_labels,
    run_permutations,
)
from .rules import TestedRule, score_rules
from .synth import EmbeddedRule, SynthParams, generate, generate_split_pair
