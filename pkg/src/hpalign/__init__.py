"""Joint learning and event-type alignment of two Hawkes processes via fused Gromov-Wasserstein transport."""

__version__ = "0.1.0"

from .hawkes import (
    CorpusStats,
    EventSequence,
    HawkesParams,
    InfeasibleParametersError,
    compensator,
    intensity_at,
    neg_log_likelihood,
    nll_gradients,
    simulate,
)
from .learn import AlignmentConfig, JointState, SGDConfig, align, regularizer_gradients, update_hawkes
from .metrics import cosine_similarity, plan_entropy, top_k_accuracy
from .transport import (
    SinkhornError,
    empirical_marginal,
    fgw_discrepancy,
    fused_cost,
    relational_cost,
    sinkhorn,
    sinkhorn_prox_step,
    solve_transport,
)
