"""N-way random indexing: incremental, fixed-memory lossy tensor encoding.

Vectors, matrices and higher-order tensors are stored in a dense state array
of fixed (reduced) size and accessed only through encode and decode
operations built on sparse balanced-ternary random index vectors.  Encoding
is additive and on-line; component ranges can be extended at any time without
touching the state.
"""

from .core import (
    BadMagicError,
    CapacityError,
    ChecksumError,
    DimensionSpec,
    NriSpec,
    NriTensor,
    PersistenceError,
    TopList,
    TruncatedError,
    VersionError,
    load,
    new_tensor,
)
from .experiments import (
    RecoveryConfig,
    RecoveryReport,
    index_dim_for_ratio,
    run_recovery,
    snr_db,
    sweep,
)
from .ternary import (
    DotDistribution,
    IndexVector,
    SeriesDomainWarning,
    count_at_dot,
    count_at_dot_hyp,
    count_total,
    dot,
    generate_index_vector,
    hyp3f2_terminating,
    monte_carlo_dot,
    prob_dot_exact,
    prob_dot_series,
)
from .textlang import (
    CoocModel,
    SynonymItem,
    Vocabulary,
    build_cooc_model,
    evaluate_synonyms,
    jaccard,
    make_planted_corpus,
    tokenize,
)

__version__ = "0.1.0"
