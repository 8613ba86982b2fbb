"""Query-probability estimators."""

from __future__ import annotations

import math

from ..models import SequenceModel
from ..queries import Query
from .core import (
    GroundTruthConfig,
    QueryTooLarge,
    exact,
    importance_sampling,
    naive_mc,
    surrogate_ground_truth,
    uniform_mc,
)
from .results import Estimate
from .search import (
    Beam,
    BeamSet,
    ProposalTree,
    admission_diagnostic,
    beam_search_coverage,
    beam_search_fixed,
    beam_search_tail_split,
    choose_split,
    hybrid,
    sample_remainder,
)
from .sweep import shared_prefix_sweep

__all__ = [
    "Beam",
    "BeamSet",
    "Estimate",
    "GroundTruthConfig",
    "ProposalTree",
    "QueryTooLarge",
    "admission_diagnostic",
    "beam_estimate",
    "beam_search_coverage",
    "beam_search_fixed",
    "beam_search_tail_split",
    "choose_split",
    "exact",
    "hybrid",
    "importance_sampling",
    "naive_mc",
    "sample_remainder",
    "shared_prefix_sweep",
    "surrogate_ground_truth",
    "uniform_mc",
]


def beam_estimate(
    query: Query,
    model: SequenceModel,
    history,
    kind: str = "fixed",
    B: int | None = None,
    alpha: float | None = None,
    schedule: str = "geometric",
    width_cap: int = 100000,
) -> Estimate:
    """Beam-search lower bound for a whole query: per-part searches summed.

    For multi-part queries the error bound of the coverage variant adds
    across parts (each part's gap is bounded by its own coverage
    complement).
    """
    calls0 = model.calls
    values = []
    parts_meta = []
    bound_terms = []
    for i, part in enumerate(query.parts):
        if kind == "fixed":
            bs, est = beam_search_fixed(part, model, history, B)
        elif kind == "coverage":
            bs, est, bound = beam_search_coverage(part, model, history, alpha, schedule, width_cap)
            bound_terms.append(bound)
        elif kind == "tail_split":
            bs, _ = beam_search_tail_split(part, model, history, width_cap)
        else:
            raise ValueError(f"unknown beam kind {kind!r}")
        values.append(bs.value())
        parts_meta.append(
            {"part": i, "estimate": bs.value(), "coverage": bs.coverage, "widths": bs.widths, "partial": bs.partial}
        )
    meta = {"method": f"beam_search_{kind}", "parts": parts_meta}
    if bound_terms:
        meta["bound"] = math.fsum(bound_terms)
    return Estimate.make(math.fsum(values), None, True, model.calls - calls0, meta)
