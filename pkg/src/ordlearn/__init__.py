"""Sequential observational learning with ordered states."""
from .core import (AdequacyResult, Belief, StateSpace, UtilityTable, adequate_knowledge, choice_set,
                   expected_difference, make_belief)
from .signals import (FiniteMatrix, LocationFamily, MixtureAtomFamily, PosteriorSequence, action_probability,
                      bayes_update, from_descriptor, from_posteriors, log_likelihood, sample_signal)
from .reports import CheckReport, ProbePlan
from .conditions import (check_dub, check_mlrp, check_pairwise_ub, check_pidd, check_scd, check_unbounded_beliefs,
                         check_universal_dub, distinguishability, implication_audit, scd_oracle, tail_classify)
from .dynamics import (StrategyPartition, Trajectory, belief_after_action, detect_stationary, fosd_check,
                       martingale_residual, simulate_run, stationary_scan, strategy_partition)

__version__ = "0.1.0"
