"""Degenerate identification experiments: boundary dual vectors.

Both instances minimize ``f(x) + ||x - b||^2 / 2`` by Forward-Backward
splitting with a small step so the trajectory's active structure is
visible.  The dual vector at the solution sits on the boundary of the
value set, so which manifold gets identified depends on the starting
point: some starts land on the minimal manifold, others on the enlarged
one.
"""

from __future__ import annotations

import numpy as np

from ..identification import IdentificationReport, first_identification
from ..manifolds import FixedSupport, enlarge_manifold
from ..operators import SubdiffL1, SubdiffNuclear, detect_rank
from ..solvers import CompositeProblem, run_fb
from .common import ExperimentResult, ensure_out_dir, write_json, write_manifest

B_VALUES = np.array([3.0, 1.0, 0.5])
_SUPPORT_TOL = 1e-14


def cmd_degenerate_l1(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/degenerate_l1")
    lam = config.get("problem", {}).get("lam", 1.0)
    solver = config.get("solver", {})
    gamma = solver.get("gamma", 0.1)
    max_iter = solver.get("max_iter", 2000)
    stop_tol = solver.get("stop_tol", 1e-12)

    prob = CompositeProblem.prox_instance(SubdiffL1(lam, 3), B_VALUES)
    xbar = np.array([2.0, 0.0, 0.0])
    ubar = B_VALUES - xbar
    a_set = prob.nonsmooth.eval(xbar)
    minimal = prob.nonsmooth.active_manifold(xbar)
    enlarged = enlarge_manifold(minimal, a_set, ubar, margin=1e-6)

    starts = {
        "choice1": np.array([2.0, 2.0, 2.0]),
        "choice2": np.array([0.0, -2.0, -2.0]),
    }
    expected = {"choice1": enlarged.support, "choice2": minimal.support}

    failures = []
    summary = {"xbar": xbar, "ubar": ubar,
               "minimal_support": sorted(minimal.support),
               "enlarged_support": sorted(enlarged.support)}
    files = []
    for name, x0 in starts.items():
        trace = run_fb(prob, gamma, x0, max_iter, stop_tol)
        final = trace.final_x
        support = frozenset(int(i) for i in np.flatnonzero(np.abs(final) > _SUPPORT_TOL))
        conv = float(np.max(np.abs(final - xbar)))
        identified = FixedSupport(support, 3)
        first, stable = first_identification(trace, identified, _SUPPORT_TOL)
        report = IdentificationReport(
            first_identified=first, stable_from=stable, predicted_steps=None,
            radius=0.0, norm="linf",
            params={"gamma": gamma, "start": name,
                    "final_support": sorted(support),
                    "expected_support": sorted(expected[name]),
                    "max_error": conv, "n_iters": trace.n_iters})
        csv_path = out / f"support_{name}.csv"
        trace.write_csv(csv_path, reference=xbar)
        report.write_json(out / f"report_{name}.json")
        files += [str(csv_path), str(out / f"report_{name}.json")]
        summary[name] = {"support": sorted(support), "max_error": conv,
                         "n_iters": trace.n_iters}
        if support != expected[name]:
            failures.append(f"{name}: support {sorted(support)} != "
                            f"expected {sorted(expected[name])}")
        if conv > 1e-10:
            failures.append(f"{name}: final error {conv:.3e} above 1e-10")
        if emit_svg:
            from ..svgplot import line_chart
            svg = out / f"support_{name}.svg"
            line_chart(svg, [(name, np.arange(len(trace.active_sizes)),
                              trace.active_sizes)],
                       title="support size vs iteration", xlabel="iteration",
                       ylabel="support size")
            files.append(str(svg))
    write_manifest(out, "degenerate-l1", config,
                   {"stop_tol": stop_tol, "support_tol": _SUPPORT_TOL})
    write_json(out / "summary.json", summary)
    return ExperimentResult("degenerate-l1", not failures, summary,
                            files, failures)


def cmd_degenerate_nuclear(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/degenerate_nuclear")
    solver = config.get("solver", {})
    gamma = solver.get("gamma", 0.1)
    max_iter = solver.get("max_iter", 2000)
    stop_tol = solver.get("stop_tol", 1e-8)
    seed = config.get("seed", 0)

    rng = np.random.Generator(np.random.Philox(key=seed))
    q1 = _haar_orthogonal(rng)
    q2 = _haar_orthogonal(rng)
    b_mat = q1 @ np.diag(B_VALUES) @ q2.T
    op = SubdiffNuclear(1.0, 3, 3)
    prob = CompositeProblem.prox_instance(op, b_mat.ravel(), structure="rank")

    xbar = q1 @ np.diag([2.0, 0.0, 0.0]) @ q2.T
    starts = {
        "choice1": q1 @ np.diag([3.0, 3.0, 3.0]) @ q2.T,
        "choice2": rng.standard_normal((3, 3)),
        "choice3": np.zeros((3, 3)),
    }
    expected = {"choice1": 2, "choice2": 2, "choice3": 1}

    failures = []
    summary = {"b_singular_values": B_VALUES, "seed": seed}
    files = []
    for name, x0 in starts.items():
        trace = run_fb(prob, gamma, x0.ravel(), max_iter, stop_tol)
        sig = np.linalg.svd(trace.final_x.reshape(3, 3), compute_uv=False)
        rank = detect_rank(sig)
        csv_path = out / f"rank_{name}.csv"
        trace.write_csv(csv_path, reference=xbar.ravel())
        files.append(str(csv_path))
        summary[name] = {"rank": rank, "expected": expected[name],
                         "final_singular_values": sig,
                         "n_iters": trace.n_iters}
        if rank != expected[name]:
            failures.append(f"{name}: rank {rank} != expected {expected[name]}")
        if emit_svg:
            from ..svgplot import line_chart
            svg = out / f"rank_{name}.svg"
            line_chart(svg, [(name, np.arange(len(trace.active_sizes)),
                              trace.active_sizes)],
                       title="rank vs iteration", xlabel="iteration",
                       ylabel="rank")
            files.append(str(svg))
    write_manifest(out, "degenerate-nuclear", config,
                   {"stop_tol": stop_tol, "rank_rule": "1e-10 relative"})
    write_json(out / "summary.json", summary)
    return ExperimentResult("degenerate-nuclear", not failures, summary,
                            files, failures)


def _haar_orthogonal(rng: np.random.Generator, n: int = 3) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
