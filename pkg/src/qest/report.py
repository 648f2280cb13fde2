"""Result records shared by the compute modules and the command line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class MseEstimate:
    """Monte Carlo mean squared error; ``std_error = sample_std / sqrt(trials)``."""

    mean: float
    std_error: float
    trials: int
    theta: float
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "trials": self.trials,
                "theta": self.theta, "seed": self.seed}


def mse_from_errors(sq: np.ndarray, theta: float, seed: int) -> MseEstimate:
    sq = np.asarray(sq, dtype=float).ravel()
    if sq.size < 1:
        raise ValueError("at least one trial is required")
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
    return MseEstimate(float(np.mean(sq)), se, int(sq.size), float(theta), int(seed))


@dataclass
class RiskReport:
    """Numbers with a label saying which computation produced each of them."""

    command: str
    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    config: Any = None

    def add(self, key: str, value, source: str) -> None:
        self.values[key] = value
        self.provenance[key] = source

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        out = {"command": self.command, "values": to_jsonable(self.values),
               "provenance": dict(self.provenance), "notes": list(self.notes)}
        if self.config is not None:
            out["config"] = to_jsonable(self.config)
        return out


def to_jsonable(x):
    """Convert numpy values, complex matrices and the infinite marker for JSON output."""
    from .fisher import is_infinite

    if is_infinite(x):
        return "infinite"
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "to_dict"):
        return to_jsonable(x.to_dict())
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return [[float(v.real), float(v.imag)] for v in x.ravel()] if x.ndim == 1 else \
                [to_jsonable(row) for row in x]
        return x.tolist()
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v) or math.isinf(v):
            raise ValueError("non-finite float in report")
        return v
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x
