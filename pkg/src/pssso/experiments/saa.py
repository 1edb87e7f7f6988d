"""Sample-average consistency of the lasso solution pair.

The expectation problem is approximated by finite sums of growing size m;
the primal-dual pair (x_m + u_m) should approach the population pair at
the Monte-Carlo rate 1/sqrt(m).  The population solution has no closed
form, so it is stood in for by a heavily oversampled surrogate problem
(the oversampling factor is a config knob).
"""

from __future__ import annotations

import csv

import numpy as np

from ..solvers import generate_lasso, run_fb
from .common import ExperimentResult, ensure_out_dir, run_pool, write_json, write_manifest

SLOPE_RANGE = (-0.65, -0.35)


def _solve_pair(m, pcfg, seed, stop_tol, x_true):
    prob, _ = generate_lasso(m, pcfg["n"], pcfg["sparsity"], pcfg["sigma1"],
                             pcfg["sigma2"], pcfg["mu"], seed, x_true=x_true)
    trace = run_fb(prob, 1.0 / prob.lipschitz, np.zeros(prob.dim),
                   max_iter=500000, stop_tol=stop_tol)
    x = trace.final_x
    u = -prob.a_mat.T @ (prob.a_mat @ x - prob.b_vec) / (m * prob.mu)
    return x, u


def cmd_saa_consistency(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/saa_consistency")
    pcfg = {"n": 20, "sparsity": 4, "sigma1": 1.0, "sigma2": 0.3, "mu": 0.3}
    pcfg.update(config.get("problem", {}))
    scfg = config.get("solver", {})
    saa = config.get("saa", {})
    m_grid = saa.get("m_grid", [50, 100, 200, 400, 800, 1600])
    n_seeds = saa.get("n_seeds", 20)
    factor = saa.get("surrogate_factor", 16)
    stop_tol = scfg.get("stop_tol", 1e-12)
    base_seed = config.get("seed", 0)

    # One fixed ground truth defines the sampling distribution; every
    # (m, seed) cell draws fresh data from it.
    rng = np.random.Generator(np.random.Philox(key=base_seed))
    pos = rng.choice(pcfg["n"], size=pcfg["sparsity"], replace=False)
    x_true = np.zeros(pcfg["n"])
    x_true[pos] = rng.choice([-1.0, 1.0], size=pcfg["sparsity"])

    m_ref = factor * max(m_grid)
    x_star, u_star = _solve_pair(m_ref, pcfg, 10_000_019 + base_seed,
                                 stop_tol, x_true)
    pair_star = x_star + u_star

    def cell(args):
        m, seed = args
        x, u = _solve_pair(m, pcfg, seed, stop_tol, x_true)
        return float(np.linalg.norm((x + u) - pair_star))

    means, stds = [], []
    for m in m_grid:
        dists = run_pool(cell, [(m, 1000 * (base_seed + 1) + m + s)
                                for s in range(n_seeds)])
        means.append(float(np.mean(dists)))
        stds.append(float(np.std(dists) / np.sqrt(n_seeds)))

    slope, intercept = np.polyfit(np.log(m_grid), np.log(means), 1)
    ok = SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]

    csv_path = out / "distances.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "mean_pair_distance", "stderr"])
        for m, mu_d, sd in zip(m_grid, means, stds):
            writer.writerow([m, repr(mu_d), repr(sd)])

    summary = {"m_grid": list(m_grid), "means": means, "stderr": stds,
               "slope": float(slope), "intercept": float(intercept),
               "slope_range": SLOPE_RANGE, "m_ref": m_ref,
               "n_seeds": n_seeds}
    failures = [] if ok else [
        f"fitted slope {slope:.3f} outside {SLOPE_RANGE}"]
    files = [str(csv_path)]
    if emit_svg:
        from ..svgplot import line_chart
        svg = out / "distances.svg"
        line_chart(svg, [("mean distance", np.log10(m_grid), means)],
                   title="pair distance vs m (log-log)",
                   xlabel="log10 m", ylabel="distance", log_y=True)
        files.append(str(svg))
    write_manifest(out, "saa-consistency", config, {"stop_tol": stop_tol})
    write_json(out / "summary.json", summary)
    return ExperimentResult("saa-consistency", ok, summary, files, failures)
