"""Outcome record shared by every estimate verifier."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field


def _clean(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def _restore(value):
    if value in ("nan", "inf", "-inf"):
        return float(value)
    if isinstance(value, dict):
        return {k: _restore(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_restore(v) for v in value]
    return value


@dataclass
class BoundReport:
    """Verdict of one inequality check.

    ``worst_margin`` is the smallest ``rhs - lhs`` over all samples in the
    inequality's own units; ``passed`` holds iff it is at least ``-slack``
    (verifiers that judge fitted constants instead say so in ``details``).
    A non-empty ``hypothesis_flags`` marks the verdict out-of-hypothesis.
    """

    name: str
    target: str
    passed: bool
    worst_margin: float
    slack: float = 0.0
    fitted_constants: dict = field(default_factory=dict)
    hypothesis_flags: list = field(default_factory=list)
    resolution_stability: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def in_hypothesis(self):
        return not self.hypothesis_flags

    @property
    def verdict(self):
        word = "pass" if self.passed else "fail"
        return word if self.in_hypothesis else f"{word} (out-of-hypothesis)"

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d["verdict"] = self.verdict
        return _clean(d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = _restore(dict(d))
        d.pop("verdict", None)
        d["passed"] = d.pop("pass")
        return cls(**d)
