"""Forward-Backward splitting and mini-batch proximal SGD with traces.

Both solvers record, per iteration, the primal iterate, the dual vector
recovered from the proximal step, the active-structure size (exact
nonzero count for vector problems, relative-tolerance rank for matrix
problems), the residual and the step size.  Runs are deterministic given
(problem, seed); mini-batch index sets come from a counter-based Philox
stream so independent runs never share randomness.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidSetError, NoClosedFormError
from .operators import (
    PartlySmoothOperator,
    SmoothMap,
    SubdiffL1,
    detect_rank,
    soft_threshold,
)
from .sets import _as_vector

__all__ = [
    "StepSchedule",
    "CompositeProblem",
    "SolverTrace",
    "run_fb",
    "run_prox_sgd",
    "generate_lasso",
    "fb_rate_params",
]


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequence: constant, c/(k+k0) decay, or a0/sqrt(k+1)."""

    kind: str
    a0: float
    k0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "inverse", "inverse_sqrt"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.a0 <= 0:
            raise ConfigError("step size must be positive")

    @classmethod
    def constant(cls, a0: float) -> "StepSchedule":
        return cls("constant", a0)

    @classmethod
    def inverse(cls, c: float, k0: float = 1.0) -> "StepSchedule":
        return cls("inverse", c, k0)

    @classmethod
    def inverse_sqrt(cls, a0: float) -> "StepSchedule":
        return cls("inverse_sqrt", a0)

    def at(self, k: int) -> float:
        if self.kind == "constant":
            return self.a0
        if self.kind == "inverse":
            return self.a0 / (k + self.k0)
        return self.a0 / np.sqrt(k + 1.0)


@dataclass(frozen=True)
class CompositeProblem:
    """Monotone inclusion ``0 in A(x) + B(x)`` with structured A.

    ``smooth`` is the cocoercive single-valued part B (the gradient of the
    data term); ``kappa``/``lipschitz`` are its strong-monotonicity and
    Lipschitz moduli, so B is ``1/lipschitz``-cocoercive.
    """

    nonsmooth: PartlySmoothOperator
    smooth: SmoothMap
    kappa: float
    lipschitz: float
    a_mat: Optional[np.ndarray] = None
    b_vec: Optional[np.ndarray] = None
    mu: Optional[float] = None
    alpha: Optional[float] = None
    structure: str = "support"

    def __post_init__(self):
        if self.kappa > self.lipschitz + 1e-12:
            raise InvalidSetError("kappa cannot exceed the Lipschitz modulus")

    @property
    def dim(self) -> int:
        return self.smooth.dim

    @property
    def beta(self) -> float:
        return 1.0 / self.lipschitz

    @classmethod
    def lasso(cls, a_mat: np.ndarray, b_vec: np.ndarray, mu: float
              ) -> "CompositeProblem":
        """``mu ||x||_1 + (1/m) sum_i (a_i^T x - b_i)^2 / 2``."""
        a_mat = np.asarray(a_mat, dtype=float)
        b_vec = _as_vector(b_vec, a_mat.shape[0])
        m, n = a_mat.shape
        h = a_mat.T @ a_mat / m
        c = -a_mat.T @ b_vec / m
        sig = np.linalg.svd(a_mat, compute_uv=False)
        lip = float(sig[0] ** 2 / m)
        kap = float(sig[-1] ** 2 / m) if m >= n else 0.0
        return cls(nonsmooth=SubdiffL1(mu, n), smooth=SmoothMap.affine(h, c),
                   kappa=kap, lipschitz=lip, a_mat=a_mat, b_vec=b_vec, mu=mu)

    @classmethod
    def elastic_net(cls, a_mat: np.ndarray, b_vec: np.ndarray, lam: float,
                    alpha: float) -> "CompositeProblem":
        """``||Ax - b||^2/2 + lam ||x||_1 + alpha ||x||^2/2``."""
        a_mat = np.asarray(a_mat, dtype=float)
        b_vec = _as_vector(b_vec, a_mat.shape[0])
        n = a_mat.shape[1]
        h = a_mat.T @ a_mat + alpha * np.eye(n)
        c = -a_mat.T @ b_vec
        sig = np.linalg.svd(a_mat, compute_uv=False)
        smin = float(sig[-1]) if a_mat.shape[0] >= n else 0.0
        return cls(nonsmooth=SubdiffL1(lam, n), smooth=SmoothMap.affine(h, c),
                   kappa=smin ** 2 + alpha, lipschitz=float(sig[0] ** 2) + alpha,
                   a_mat=a_mat, b_vec=b_vec, mu=lam, alpha=alpha)

    @classmethod
    def prox_instance(cls, nonsmooth: PartlySmoothOperator, b_vec: np.ndarray,
                      structure: str = "support") -> "CompositeProblem":
        """``f(x) + ||x - b||^2/2`` posed as an inclusion with B = x - b."""
        b_vec = _as_vector(b_vec, nonsmooth.dim)
        return cls(nonsmooth=nonsmooth, smooth=SmoothMap.affine(1.0, -b_vec),
                   kappa=1.0, lipschitz=1.0, b_vec=b_vec, structure=structure)


def _active_size(x: np.ndarray, structure: str, shape=None) -> int:
    if structure == "support":
        # Exact nonzero count; proximal steps produce exact zeros, so this
        # mirrors support curves from exact-arithmetic runs.
        return int(np.count_nonzero(x))
    if structure == "rank":
        sig = np.linalg.svd(x.reshape(shape), compute_uv=False)
        return detect_rank(sig)
    raise ValueError(f"unknown structure {structure!r}")


@dataclass
class SolverTrace:
    """Per-iteration record of a solver run."""

    xs: np.ndarray
    duals: Optional[np.ndarray]
    residuals: np.ndarray
    steps: np.ndarray
    active_sizes: np.ndarray
    structure: str
    seed: Optional[int] = None
    batch_sets: Optional[list] = None
    stop_tol: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_iters(self) -> int:
        return len(self.residuals)

    @property
    def final_x(self) -> np.ndarray:
        return self.xs[-1]

    def dual(self, k: int) -> np.ndarray:
        """Dual vector paired with iterate k (defined for k >= 1)."""
        if self.duals is None:
            raise InvalidSetError("trace carries no dual vectors")
        if k < 1:
            raise IndexError("dual vectors start at iteration 1")
        return self.duals[k - 1]

    def write_csv(self, path, reference: Optional[np.ndarray] = None,
                  identified: Optional[np.ndarray] = None) -> None:
        header = ["iter", "support_size" if self.structure == "support" else "rank",
                  "residual", "err_l2", "err_linf", "step", "identified"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(len(self.xs)):
                err2 = errinf = ""
                if reference is not None:
                    diff = self.xs[k] - reference
                    err2 = repr(float(np.linalg.norm(diff)))
                    errinf = repr(float(np.max(np.abs(diff), initial=0.0)))
                writer.writerow([
                    k,
                    int(self.active_sizes[k]),
                    repr(float(self.residuals[k - 1])) if k >= 1 else "",
                    err2,
                    errinf,
                    repr(float(self.steps[k - 1])) if k >= 1 else "",
                    "" if identified is None else int(bool(identified[k])),
                ])

    def to_json_dict(self, include_vectors: bool = False) -> dict:
        out = {
            "n_iters": self.n_iters,
            "structure": self.structure,
            "seed": self.seed,
            "stop_tol": self.stop_tol,
            "active_sizes": [int(a) for a in self.active_sizes],
            "residuals": [float(r) for r in self.residuals],
            "steps": [float(s) for s in self.steps],
            "meta": self.meta,
        }
        if include_vectors:
            out["xs"] = self.xs.tolist()
            if self.duals is not None:
                out["duals"] = self.duals.tolist()
        return out

    def write_json(self, path, include_vectors: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(include_vectors), fh, indent=1)


def run_fb(prob: CompositeProblem, gamma: float, x0, max_iter: int,
           stop_tol: float, shape=None) -> SolverTrace:
    """Forward-Backward splitting ``x+ = J_{gamma A}((Id - gamma B) x)``.

    Valid for ``0 < gamma < 2 beta`` with ``beta = 1/L``.  The dual vector
    ``u+ = (x - x+)/gamma - B(x)`` lies in ``A(x+)`` by construction and is
    recorded at every step.  Stops on ``||x+ - x|| < stop_tol``.
    """
    if not 0.0 < gamma < 2.0 * prob.beta:
        raise ConfigError(
            f"gamma must lie in (0, {2.0 * prob.beta:.6g}); got {gamma}")
    x = _as_vector(x0, prob.dim)
    shape = shape or _shape_of(prob)
    xs, duals, resid, sizes = [x], [], [], [_active_size(x, prob.structure, shape)]
    for _ in range(max_iter):
        g = prob.smooth(x)
        x_next = prob.nonsmooth.resolvent(x - gamma * g, gamma)
        duals.append((x - x_next) / gamma - g)
        r = float(np.linalg.norm(x_next - x))
        xs.append(x_next)
        resid.append(r)
        sizes.append(_active_size(x_next, prob.structure, shape))
        x = x_next
        if r < stop_tol:
            break
    return SolverTrace(
        xs=np.array(xs), duals=np.array(duals), residuals=np.array(resid),
        steps=np.full(len(resid), gamma), active_sizes=np.array(sizes),
        structure=prob.structure, stop_tol=stop_tol,
        meta={"solver": "fb", "gamma": gamma,
              "stop_rule": "||x_k - x_{k-1}|| < stop_tol"})


def _shape_of(prob: CompositeProblem):
    ns = prob.nonsmooth
    if hasattr(ns, "p") and hasattr(ns, "q"):
        return (ns.p, ns.q)
    return None


def run_prox_sgd(prob: CompositeProblem, schedule: StepSchedule, batch: int,
                 x0, max_iter: int, seed: int) -> SolverTrace:
    """Mini-batch proximal SGD on the finite-sum lasso problem.

    Each iteration samples an index set of size ``batch`` uniformly
    without replacement, takes the sampled gradient step and applies the
    l1 proximal map:

        x+ = prox_{mu a_k ||.||_1}( x - (a_k/s) sum_{i in I}(a_i^T x - b_i) a_i )

    The dual vector ``(x - x+)/(mu a_k) - (1/(s mu)) sum_i (a_i^T x - b_i) a_i``
    lies in the unit-scale l1 subdifferential at ``x+`` and is recorded
    when ``mu > 0``.  Indices come from a Philox stream keyed by ``seed``.
    """
    if prob.a_mat is None or prob.b_vec is None or prob.mu is None:
        raise ConfigError("prox-SGD needs the finite-sum data (A, b, mu)")
    m = prob.a_mat.shape[0]
    if not 1 <= batch <= m:
        raise ConfigError(f"batch size must lie in [1, {m}]")
    mu = prob.mu
    x = _as_vector(x0, prob.dim)
    rng = np.random.Generator(np.random.Philox(key=seed))
    xs, duals, resid, steps, batches = [x], [], [], [], []
    sizes = [_active_size(x, "support")]
    for k in range(max_iter):
        a_k = schedule.at(k)
        if a_k <= 0:
            raise ConfigError("step sizes must be positive")
        idx = np.sort(rng.choice(m, size=batch, replace=False))
        rows = prob.a_mat[idx]
        grad = rows.T @ (rows @ x - prob.b_vec[idx]) / batch
        x_next = soft_threshold(x - a_k * grad, mu * a_k) if mu > 0 \
            else x - a_k * grad
        if mu > 0:
            duals.append((x - x_next) / (mu * a_k) - grad / mu)
        resid.append(float(np.linalg.norm(x_next - x)))
        steps.append(a_k)
        batches.append(idx)
        xs.append(x_next)
        sizes.append(_active_size(x_next, "support"))
        x = x_next
    return SolverTrace(
        xs=np.array(xs), duals=np.array(duals) if duals else None,
        residuals=np.array(resid), steps=np.array(steps),
        active_sizes=np.array(sizes), structure="support", seed=seed,
        batch_sets=batches,
        meta={"solver": "prox_sgd", "batch": batch, "schedule": schedule.kind})


def generate_lasso(m: int, n: int, kappa_sparsity: int, sigma1: float,
                   sigma2: float, mu: float, seed: int,
                   x_true: Optional[np.ndarray] = None):
    """Seeded lasso instance: Gaussian rows, sparse +-1 ground truth.

    Rows ``a_i`` have i.i.d. ``N(0, sigma1^2)`` entries and observations
    ``b_i = a_i^T x_true + noise`` with ``N(0, sigma2^2)`` noise.  When
    ``x_true`` is not supplied it has ``kappa_sparsity`` unit-magnitude
    entries at seeded positions.  Returns ``(problem, x_true)``.
    """
    if kappa_sparsity > n:
        raise ConfigError("sparsity cannot exceed the dimension")
    if sigma1 <= 0 or sigma2 < 0:
        raise ConfigError("sigma1 must be positive and sigma2 nonnegative")
    rng = np.random.Generator(np.random.Philox(key=seed))
    if x_true is None:
        pos = rng.choice(n, size=kappa_sparsity, replace=False)
        x_true = np.zeros(n)
        x_true[pos] = rng.choice([-1.0, 1.0], size=kappa_sparsity)
    else:
        x_true = _as_vector(x_true, n)
    a_mat = rng.normal(0.0, sigma1, (m, n))
    noise = rng.normal(0.0, sigma2, m) if sigma2 > 0 else np.zeros(m)
    b_vec = a_mat @ x_true + noise
    return CompositeProblem.lasso(a_mat, b_vec, mu), x_true


def fb_rate_params(prob: CompositeProblem, gamma: float):
    """Certified linear-rate constants ``(kappa, beta, rho)`` for FB.

    Requires ``t = gamma (2 kappa - gamma / beta^2)`` in (0, 1); then
    ``rho = sqrt(1 - t)`` contracts ``||x_k - xbar||`` at every step.
    """
    kappa, beta = prob.kappa, prob.beta
    if kappa <= 0:
        raise ConfigError("linear rate needs strong monotonicity (kappa > 0)")
    t = gamma * (2.0 * kappa - gamma / beta ** 2)
    if not 0.0 < t < 1.0:
        hi = min(2.0 * beta, 2.0 * kappa * beta ** 2)
        raise ConfigError(
            f"gamma*(2*kappa - gamma/beta^2) = {t:.6g} outside (0, 1); "
            f"choose gamma in (0, {hi:.6g})")
    return kappa, beta, float(np.sqrt(1.0 - t))
