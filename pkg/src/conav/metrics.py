"""Trial metrics: proximity cost, normalised speeds and report records."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .safety import SafetyParams

DEFAULT_THRESH = 1.0


def pad_to_same_length(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Repeat the final waypoint of the shorter sequence until both match."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    n = max(len(a), len(b))
    if len(a) and len(a) < n:
        a = np.vstack([a, np.repeat(a[-1:], n - len(a), axis=0)])
    if len(b) and len(b) < n:
        b = np.vstack([b, np.repeat(b[-1:], n - len(b), axis=0)])
    return a, b


def proximity_events(gamma_r, gamma_h, params: SafetyParams, thresh: float = DEFAULT_THRESH) -> np.ndarray:
    """Barrier values B(gamma_r^i, gamma_h^i) that fall below `thresh`."""
    r, h = pad_to_same_length(gamma_r, gamma_h)
    if not len(r) or not len(h):
        return np.zeros(0)
    b = np.sum((r - h) ** 2, axis=1) - params.radius ** 2
    return b[b < thresh]


def proximity_cost(gamma_r, gamma_h, params: SafetyParams, thresh: float = DEFAULT_THRESH) -> float:
    """inf if any event is negative, 1/sum(events) otherwise, 0 with no events."""
    z = proximity_events(gamma_r, gamma_h, params, thresh)
    if not len(z):
        return 0.0
    if np.any(z < 0):
        return math.inf
    total = float(np.sum(z))
    return math.inf if total == 0 else 1.0 / total


def normalized_speed(optimal_cost: float, actual_time: float, nominal_speed: float) -> float:
    if actual_time <= 0:
        raise ValueError("actual_time must be > 0")
    return (optimal_cost / nominal_speed) / actual_time


@dataclass
class TrialReport:
    map_id: str
    method: str
    seed: int
    f_priority: float | None
    outcome: str
    r_cost_to_goal: float
    h_cost_to_goal: float
    rns: float | None
    hns: float | None
    pi: int
    pc: float
    steps: int
    signals_sent: int
    fallback_cycles: int
    safety_violations: int
    tube_breaches: int
    unexplained_violations: int
    rns_anomalous: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


REPORT_FIELDS = list(TrialReport.__dataclass_fields__)
