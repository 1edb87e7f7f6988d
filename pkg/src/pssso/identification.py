"""Identification monitors and step-count bounds for solver traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidSetError
from .manifolds import ManifoldDesc
from .sets import _as_vector
from .solvers import SolverTrace

__all__ = [
    "IdentificationReport",
    "first_identification",
    "predicted_steps_linear",
    "predicted_steps_finite_length",
    "fb_predicted_steps",
    "error_series",
]


def first_identification(trace: SolverTrace, m: ManifoldDesc, tol: float
                         ) -> Tuple[Optional[int], Optional[int]]:
    """First touch of the manifold and the index it is never left after.

    Returns ``(first, stable_from)`` where ``first`` is the least k with
    ``x_k`` on ``m`` within ``tol`` and ``stable_from`` the least k such
    that membership holds for every later iterate of the trace; both are
    ``None`` when the trace never reaches the manifold.  Stochastic
    methods can touch and leave, so the two indices differ in general.
    """
    flags = manifold_flags(trace, m, tol)
    first = stable = None
    for k, on in enumerate(flags):
        if on and first is None:
            first = k
    for k in range(len(flags) - 1, -1, -1):
        if flags[k]:
            stable = k
        else:
            break
    return first, stable


def manifold_flags(trace: SolverTrace, m: ManifoldDesc, tol: float) -> np.ndarray:
    return np.array([m.contains(x, tol) for x in trace.xs], dtype=bool)


def predicted_steps_linear(d: float, gamma: float, p: float, c: float,
                           rho: float) -> int:
    """Smallest K >= 0 with ``(1 + gamma p) C rho^K <= d``.

    This is the identification bound for linearly convergent primal
    iterates whose dual error is dominated by ``p`` times the primal
    error.  Clamps to 0 when the bound holds immediately.
    """
    if not 0.0 < rho < 1.0:
        raise InvalidSetError("rho must lie in (0, 1)")
    if d <= 0 or c <= 0 or p < 0:
        raise InvalidSetError("d, C must be positive and p nonnegative")
    front = (1.0 + gamma * p) * c
    if front <= d:
        return 0
    k = int(np.ceil((np.log(d) - np.log(front)) / np.log(rho)))
    k = max(0, k)
    # Guard the ceil against floating error: enforce minimality exactly.
    while front * rho ** k > d:
        k += 1
    while k > 0 and front * rho ** (k - 1) <= d:
        k -= 1
    return k


def predicted_steps_finite_length(residuals, length: float, d: float,
                                  gamma: float, p: float) -> Optional[int]:
    """Least k whose residual prefix-sum reaches ``length - d/(1+gamma p)``.

    For finite-length trajectories the tail beyond k is at most the total
    length minus the prefix, so once the prefix passes the threshold the
    remaining error fits under the identification radius.  Returns ``None``
    when the recorded series never reaches the threshold.
    """
    residuals = np.asarray(residuals, dtype=float)
    if np.any(residuals < 0):
        raise InvalidSetError("residuals must be nonnegative")
    if d <= 0:
        raise InvalidSetError("d must be positive")
    threshold = length - d / (1.0 + gamma * p)
    if threshold <= 0:
        return 0
    prefix = np.concatenate([[0.0], np.cumsum(residuals)])
    hits = np.flatnonzero(prefix >= threshold)
    return int(hits[0]) if hits.size else None


def fb_predicted_steps(x0, xbar, gamma: float, rho: float, d: float) -> int:
    """Least K with ``rho^K (1 + 2/rho) ||x0 - xbar|| <= d``.

    Specialization of the linear bound to Forward-Backward splitting,
    where the dual error chain contributes the combined constant
    ``1 + 2/rho`` directly (``gamma`` cancels and is kept for interface
    symmetry).
    """
    del gamma
    if not 0.0 < rho < 1.0:
        raise InvalidSetError("rho must lie in (0, 1)")
    if d <= 0:
        raise InvalidSetError("d must be positive")
    x0 = np.asarray(x0, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    front = (1.0 + 2.0 / rho) * float(np.linalg.norm(x0 - xbar))
    if front <= d:
        return 0
    k = max(0, int(np.ceil((np.log(d) - np.log(front)) / np.log(rho))))
    while front * rho ** k > d:
        k += 1
    while k > 0 and front * rho ** (k - 1) <= d:
        k -= 1
    return k


def error_series(trace: SolverTrace, xbar, ubar, gamma: float,
                 norm: str = "l2") -> np.ndarray:
    """Per-iterate errors ``||(x_k + gamma u_k) - (xbar + gamma ubar)||``.

    Entry ``j`` corresponds to iterate ``k = j + 1`` (dual vectors start at
    the first update).  The sup norm variant is the sharp one for l1-type
    geometry, whose dual unit ball is the sup-norm ball.
    """
    if trace.duals is None:
        raise InvalidSetError("trace carries no dual vectors")
    xbar = _as_vector(xbar, trace.xs.shape[1])
    ubar = _as_vector(ubar, trace.xs.shape[1])
    zbar = xbar + gamma * ubar
    z = trace.xs[1:] + gamma * trace.duals
    diff = z - zbar[None, :]
    if norm == "l2":
        return np.linalg.norm(diff, axis=1)
    if norm == "linf":
        return np.max(np.abs(diff), axis=1)
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class IdentificationReport:
    """Identification outcome of one solver run."""

    first_identified: Optional[int]
    stable_from: Optional[int]
    predicted_steps: Optional[int]
    radius: float
    norm: str
    on_manifold: list = field(default_factory=list)
    below_radius: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.first_identified is not None and self.stable_from is not None
                and self.stable_from < self.first_identified):
            raise InvalidSetError("stable_from cannot precede first touch")
        if self.predicted_steps is not None and self.predicted_steps < 0:
            raise InvalidSetError("predicted step counts are nonnegative")

    def to_json_dict(self) -> dict:
        return {
            "first_identified": self.first_identified,
            "stable_from": self.stable_from,
            "predicted_steps": self.predicted_steps,
            "radius": self.radius,
            "norm": self.norm,
            "on_manifold": [bool(b) for b in self.on_manifold],
            "below_radius": [bool(b) for b in self.below_radius],
            "params": self.params,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
