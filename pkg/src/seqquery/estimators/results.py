"""Estimator result type shared by all methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Estimate:
    """Value + uncertainty + bound flag + cost of one estimator run.

    ``value`` is clamped to [0, 1]; ``raw_value`` keeps the unclamped
    number (uniform Monte Carlo can legitimately exceed 1 before clamping).
    ``std_error`` is None for deterministic methods.  ``model_calls`` must
    equal the model counter delta of the run.  ``meta['parts']`` carries the
    per-part breakdown.
    """

    value: float
    raw_value: float
    std_error: float | None
    is_lower_bound: bool
    model_calls: int
    meta: dict = field(default_factory=dict)

    @classmethod
    def make(cls, raw: float, std_error, is_lower_bound: bool, model_calls: int, meta=None) -> "Estimate":
        meta = dict(meta or {})
        value = min(1.0, max(0.0, raw))
        if value != raw:
            meta["clamped"] = True
        return cls(value, raw, std_error, is_lower_bound, model_calls, meta)

    def to_json(self) -> str:
        doc = {
            "value": self.value,
            "raw_value": self.raw_value,
            "std_error": self.std_error,
            "lower_bound": self.is_lower_bound,
            "model_calls": self.model_calls,
            "parts": self.meta.get("parts", []),
            "meta": {k: v for k, v in self.meta.items() if k != "parts"},
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Estimate":
        doc = json.loads(text)
        meta = dict(doc.get("meta", {}))
        if doc.get("parts"):
            meta["parts"] = doc["parts"]
        return cls(
            doc["value"], doc["raw_value"], doc["std_error"], doc["lower_bound"], doc["model_calls"], meta
        )
