"""Structure learning for mixed graphical models.

Learns an undirected graph over Gaussian, binary, and count variables by
running a birth-death MCMC over each vertex's neighbourhood, scoring
candidate neighbourhoods with BIC/EBIC evidence, and combining the
thresholded inclusion probabilities with the AND or OR rule. Ships with the
simulation generators and recovery metrics needed to evaluate the method
end-to-end.
"""

__version__ = "0.1.0"

from .errors import (
    ChainStuckError,
    DivergentSpecError,
    IngestError,
    InvalidInputError,
    InvalidSpecError,
    MixnetError,
    RankDeficiencyError,
)
from .evaluation import RocCurve, RocPoint, auc, f1, is_degenerate, roc
from .glm import (
    Dataset,
    GlmFit,
    Kind,
    ScoreConfig,
    conditional_loglik,
    fit_node,
    log_evidence,
    loglik_gradient,
    score,
)
from .graph import Confusion, Graph, NeighbourhoodSet, combine, graph_diff
from .mcmc import (
    ChainConfig,
    ChainTrace,
    inclusion_probabilities,
    learn_structure,
    log_prior,
    log_rate,
    run_chain,
)
from .sim import (
    MixedModelSpec,
    gen_random,
    gen_scale_free,
    gen_spec,
    gibbs_sample,
    precision_matrix,
    sample_from_precision,
    sample_gaussian,
)

__all__ = [
    "__version__",
    "MixnetError",
    "InvalidInputError",
    "InvalidSpecError",
    "IngestError",
    "RankDeficiencyError",
    "ChainStuckError",
    "DivergentSpecError",
    "Graph",
    "NeighbourhoodSet",
    "Confusion",
    "combine",
    "graph_diff",
    "Dataset",
    "GlmFit",
    "Kind",
    "ScoreConfig",
    "fit_node",
    "conditional_loglik",
    "loglik_gradient",
    "score",
    "log_evidence",
    "ChainConfig",
    "ChainTrace",
    "log_prior",
    "log_rate",
    "run_chain",
    "inclusion_probabilities",
    "learn_structure",
    "MixedModelSpec",
    "gen_scale_free",
    "gen_random",
    "gen_spec",
    "precision_matrix",
    "sample_from_precision",
    "sample_gaussian",
    "gibbs_sample",
    "RocPoint",
    "RocCurve",
    "f1",
    "is_degenerate",
    "roc",
    "auc",
]
