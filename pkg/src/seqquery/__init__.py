"""seqquery: predictive probabilistic queries over autoregressive sequence models.

Answers questions like "when does A first occur", "does A happen before B",
and "how often does A occur in the next K steps" against any next-token
model, with exact enumeration, importance sampling under a query-restricted
proposal, beam-search lower bounds, and a hybrid estimator, all
cross-checkable against closed-form Markov oracles.
"""

from .models import (
    Distribution,
    MarkovSequenceModel,
    NGramModel,
    SequenceModel,
    SyntheticMixerModel,
    TemperatureWrapped,
    UniformModel,
    apply_temperature,
    fit_ngram,
    sequence_logprob,
)
from .queries import (
    ProductQuery,
    Query,
    QueryError,
    Vocab,
    make_a_before_b,
    make_count,
    make_hitting_time,
    make_kth_marginal,
)

__version__ = "0.1.0"
