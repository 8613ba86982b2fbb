"""Query-restricted proposal distribution.

The proposal keeps the model's conditionals but renormalizes each step over
the query part's allowed tokens, so a K-step draw costs exactly K model
calls, lands inside the part by construction, and dominates the model on
the part (q >= p path-wise).  Sampling within a step is inverse-CDF over
the domain tokens in ascending id order, one uniform per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import inverse_cdf_pick, restrict_logp
from .models import Distribution, SequenceModel
from .queries import ProductQuery
from .rng import substream

NEG_INF = float("-inf")


class ZeroMassDomain(ValueError):
    """The model puts zero probability on every allowed token of a step."""


def restrict_and_normalize(dist: Distribution, domain: Sequence[int]) -> tuple[Distribution, float]:
    """Restrict a distribution to ``domain`` and renormalize.

    Returns the restricted distribution and rho, the log of the mass the
    unrestricted distribution assigns to the domain.  Raises
    ``ZeroMassDomain`` when that mass is exactly zero.
    """
    dom = np.asarray(sorted(set(domain)), dtype=np.int64)
    if dom.size == 0:
        raise ValueError("domain must be nonempty")
    if dom[0] < 0 or dom[-1] >= dist.size:
        raise ValueError(f"domain {dom.tolist()} outside vocab of size {dist.size}")
    out, rho = restrict_logp(dist.logp, dom)
    if rho == NEG_INF:
        raise ZeroMassDomain(f"restricted mass is zero on domain {dom.tolist()}")
    return Distribution(out), rho


@dataclass(frozen=True)
class Proposal:
    """Restricted autoregressive proposal for one product part."""

    model: SequenceModel
    part: ProductQuery
    history: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "history", tuple(self.history))
        for d in self.part.domains:
            for t in d:
                self.model.vocab.check_token(t)

    @property
    def horizon(self) -> int:
        return self.part.horizon


@dataclass(frozen=True)
class DrawRecord:
    """One proposal draw.

    ``log_q`` is the proposal log-likelihood of the sampled path, ``log_rho``
    the accumulated log restricted mass, and ``log_p = log_q + log_rho`` the
    model log-likelihood, so log_q >= log_p always.  The importance weight
    p/q is exp(log_rho).  A draw that hits a zero-mass step is ``dead``: it
    carries weight zero but still counts against sample budgets.
    """

    seq: tuple[int, ...]
    log_q: float
    log_rho: float
    model_calls: int
    dead: bool = False

    @property
    def log_p(self) -> float:
        if self.dead:
            return NEG_INF
        return self.log_q + self.log_rho

    @property
    def weight(self) -> float:
        if self.dead:
            return 0.0
        return float(np.exp(self.log_rho))


def draw(proposal: Proposal, gen: np.random.Generator) -> DrawRecord:
    """Sample one path from the proposal; K model calls unless it dies."""
    model, history = proposal.model, proposal.history
    seq: list[int] = []
    log_q = 0.0
    log_rho = 0.0
    calls = 0
    for domain in proposal.part.domains:
        dist = model.next(history, seq)
        calls += 1
        dom = np.asarray(domain, dtype=np.int64)
        restricted, rho = restrict_logp(dist.logp, dom)
        if rho == NEG_INF:
            return DrawRecord(tuple(seq), log_q, NEG_INF, calls, dead=True)
        u = gen.random()
        tok = int(dom[inverse_cdf_pick(np.exp(restricted[dom]), u)])
        seq.append(tok)
        log_q += float(restricted[tok])
        log_rho += rho
    return DrawRecord(tuple(seq), log_q, log_rho, calls)


def restricted_entropy(
    proposal: Proposal, M: int, seed: int, stream_offset: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of -E_q[log q] with its standard error.

    Dead draws contribute their partial -log_q (the entropy of the reachable
    support); positive models never produce them.
    """
    if M < 1:
        raise ValueError(f"need at least one sample, got {M}")
    vals = np.empty(M)
    for m in range(M):
        rec = draw(proposal, substream(seed, stream_offset + m))
        vals[m] = -rec.log_q
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    return mean, se
