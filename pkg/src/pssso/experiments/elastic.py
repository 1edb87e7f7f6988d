"""Elastic-net identification-step bound.

The squared-norm term makes the objective strongly convex, so FB enjoys a
certified linear rate rho and the predicted identification step

    K = least k with rho^k (1 + 2/rho) ||x0 - xbar|| <= d

is finite whenever the solution is nondegenerate.  The observed first
stable identification index must not exceed K (the bound is loose by
construction; looseness is fine, violation is not).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..identification import (
    IdentificationReport,
    fb_predicted_steps,
    first_identification,
)
from ..local_geometry import LocalUnionSpec, identification_radius
from ..operators import SubdiffL1
from ..solvers import CompositeProblem, fb_rate_params, run_fb
from .common import ExperimentResult, ensure_out_dir, write_json, write_manifest

_MANIFOLD_TOL = 1e-12


def build_instance(config: dict):
    pcfg = {"m": 20, "n": 32, "lam": 0.2, "alpha": 0.5, "sigma1": 1.0}
    pcfg.update(config.get("problem", {}))
    seed = config.get("seed", 3)
    rng = np.random.Generator(np.random.Philox(key=seed))
    m, n = pcfg["m"], pcfg["n"]
    a_mat = rng.normal(0.0, pcfg["sigma1"], (m, n)) / np.sqrt(m)
    x_gen = np.zeros(n)
    pos = rng.choice(n, size=max(1, n // 8), replace=False)
    x_gen[pos] = rng.choice([-1.0, 1.0], size=pos.size)
    b_vec = a_mat @ x_gen + 0.1 * rng.standard_normal(m)
    prob = CompositeProblem.elastic_net(a_mat, b_vec, pcfg["lam"], pcfg["alpha"])
    x0 = rng.standard_normal(n)
    return prob, x0, pcfg, seed


def cmd_elastic_net_bound(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/elastic_net_bound")
    scfg = config.get("solver", {})
    prob, x0, pcfg, seed = build_instance(config)
    lam = pcfg["lam"]

    # Default step maximizes nothing in particular; kappa / L^2 sits well
    # inside the admissible interval for the linear rate.
    gamma = scfg.get("gamma", prob.kappa / prob.lipschitz ** 2)
    kappa, beta, rho = fb_rate_params(prob, gamma)
    if not 0.0 < gamma < 2.0 * beta:
        raise ConfigError(f"gamma must lie in (0, {2 * beta:.6g})")

    stop_tol = scfg.get("stop_tol", 1e-12)
    max_iter = scfg.get("max_iter", 50000)
    ref = run_fb(prob, gamma, np.zeros(prob.dim), max_iter=max_iter * 4,
                 stop_tol=1e-14)
    xbar = ref.final_x
    ubar = -prob.smooth(xbar)

    support = SubdiffL1(lam, prob.dim).active_manifold(xbar)
    active = np.abs(xbar)[list(support.support)]
    eps = 0.5 * float(np.min(active))
    spec = LocalUnionSpec(SubdiffL1(lam, prob.dim), support, xbar, ubar,
                          gamma=gamma, eps=eps)
    d = identification_radius(spec, "l2")
    if d <= 0:
        raise ConfigError("instance is degenerate; reseed the experiment")

    predicted = fb_predicted_steps(x0, xbar, gamma, rho, d)
    trace = run_fb(prob, gamma, x0, max_iter, stop_tol)
    first, stable = first_identification(trace, support, _MANIFOLD_TOL)

    ok = stable is not None and stable <= predicted
    report = IdentificationReport(
        first_identified=first, stable_from=stable, predicted_steps=predicted,
        radius=d, norm="l2",
        params={"gamma": gamma, "rho": rho, "kappa": kappa, "beta": beta,
                "eps": eps, "seed": seed, "x0_error": float(
                    np.linalg.norm(x0 - xbar))})
    report.write_json(out / "report.json")
    csv_path = out / "support_curve.csv"
    trace.write_csv(csv_path, reference=xbar)

    summary = {"observed_first": first, "observed_stable": stable,
               "predicted": predicted, "rho": rho, "d": d,
               "support_size": len(support.support)}
    failures = [] if ok else [
        f"observed stable identification {stable} exceeds predicted {predicted}"]
    files = [str(csv_path), str(out / "report.json")]
    if emit_svg:
        from ..svgplot import line_chart
        svg = out / "support_curve.svg"
        ks = np.arange(len(trace.active_sizes))
        line_chart(svg, [("support size", ks, trace.active_sizes)],
                   title="elastic net support identification",
                   xlabel="iteration", ylabel="support size",
                   hline=None)
        files.append(str(svg))
    write_manifest(out, "elastic-net-bound", config,
                   {"stop_tol": stop_tol, "manifold_tol": _MANIFOLD_TOL})
    write_json(out / "summary.json", summary)
    return ExperimentResult("elastic-net-bound", ok, summary, files, failures)
