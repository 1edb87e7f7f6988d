"""Point-cloud emission for local unions in two and three dimensions.

Three instances: the translated sign operator whose zero has a fully
interior dual vector (a proximal-point trajectory enters the union and
stays), and box-indicator normal cones at an interior point (the union is
the manifold slab) and at a face point (the union extends along the
outward normal).  Data is written as CSV point lists for external
plotting; no rendering happens here.
"""

from __future__ import annotations

import csv

import numpy as np

from ..errors import ConfigError
from ..local_geometry import LocalUnionSpec, union_membership
from ..operators import NormalConeBox, Perturbed, SmoothMap, SubdiffL1, localize
from .common import ExperimentResult, ensure_out_dir, write_json, write_manifest

SIGN_SHIFT = np.array([7.0, 0.5, 0.5])
TRAJECTORY_START = np.array([9.0, 1.2, -1.2])


def sign_plus_shift_operator() -> Perturbed:
    """``A(x) = sign(x) + (x - [7, 1/2, 1/2])`` on R^3."""
    return Perturbed(SubdiffL1(1.0, 3), SmoothMap.affine(1.0, -SIGN_SHIFT))


def sign_plus_shift_spec(eps: float) -> LocalUnionSpec:
    op = sign_plus_shift_operator()
    xbar = np.array([6.0, 0.0, 0.0])
    ubar = np.zeros(3)
    manifold = SubdiffL1(1.0, 3).active_manifold(xbar)
    return LocalUnionSpec(op, manifold, xbar, ubar, gamma=1.0, eps=eps)


def proximal_point_trajectory(spec: LocalUnionSpec, x0, n_steps: int):
    """Proximal-point pairs (x_k, u_k) and union flags for z_k = x_k + g u_k."""
    op, gamma = spec.operator, spec.gamma
    xs, us, zs, flags = [np.asarray(x0, dtype=float)], [], [], []
    for _ in range(n_steps):
        x_next = op.resolvent(xs[-1], gamma)
        u_next = (xs[-1] - x_next) / gamma
        z = x_next + gamma * u_next
        xs.append(x_next)
        us.append(u_next)
        zs.append(z)
        flags.append(union_membership(spec, z) is not None)
    return np.array(xs), np.array(us), np.array(zs), flags


def sample_union_cloud(spec: LocalUnionSpec, n_manifold: int = 9,
                       n_dual: int = 7) -> np.ndarray:
    """Grid sample of the local union: manifold points x dual boxes."""
    from ..sets import BoxProduct, Singleton

    xbar, eps, gamma = spec.xbar, spec.eps, spec.gamma
    loc = localize(spec.operator, xbar, spec.ubar, eps)
    tangent = [i for i in range(spec.operator.dim)
               if _is_tangent(spec.manifold, i)]
    offsets = np.linspace(-eps, eps, n_manifold) * 0.999
    points = []
    grids = [offsets if i in tangent else np.array([0.0])
             for i in range(spec.operator.dim)]
    for shift in _product_grid(grids):
        x = xbar + shift
        value = loc.eval(x)
        if value is None:
            continue
        if isinstance(value, Singleton):
            points.append(x + gamma * value.point)
            continue
        if not isinstance(value, BoxProduct):
            raise ConfigError("demo instances must have box-valued duals")
        axes = [np.linspace(lo, hi, n_dual) if lo < hi else np.array([lo])
                for lo, hi in zip(value.lo, value.hi)]
        for u in _product_grid(axes):
            points.append(x + gamma * u)
    return np.array(points)


def _is_tangent(manifold, i: int) -> bool:
    pt, _ = manifold.projectors(None)
    return bool(pt[i, i] > 0.5)


def _product_grid(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _write_points(path, points, labels=None) -> None:
    points = np.asarray(points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = [f"x{i}" for i in range(points.shape[1])]
        writer.writerow(cols + (["label"] if labels is not None else []))
        for i, p in enumerate(points):
            row = [repr(float(v)) for v in p]
            if labels is not None:
                row.append(labels[i])
            writer.writerow(row)


def cmd_local_union_demo(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/local_union_demo")
    ucfg = config.get("union", {})
    eps = ucfg.get("eps", 0.5)
    n_steps = config.get("solver", {}).get("max_iter", 30)

    spec = sign_plus_shift_spec(eps)
    if spec.operator.dim > 3:
        raise ConfigError("demo instances are limited to dimension <= 3")
    cloud = sample_union_cloud(spec)
    _write_points(out / "sign_shift_union.csv", cloud)
    xs, us, zs, flags = proximal_point_trajectory(spec, TRAJECTORY_START, n_steps)
    _write_points(out / "sign_shift_trajectory.csv", zs,
                  labels=["inside" if f else "outside" for f in flags])
    _write_points(out / "sign_shift_zbar.csv", spec.zbar()[None, :])

    # Box indicator, interior point: the normal cone is trivial and the
    # union is just the manifold slab around xbar.
    box = NormalConeBox(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    x_int = np.array([0.2, 0.0])
    spec_int = LocalUnionSpec(box, box.active_manifold(x_int), x_int,
                              np.zeros(2), gamma=1.0, eps=0.4)
    _write_points(out / "box_interior_union.csv", sample_union_cloud(spec_int))

    # Box indicator, face point: the union extends along the outward normal.
    x_face = np.array([1.0, 0.0])
    u_face = np.array([0.3, 0.0])
    spec_face = LocalUnionSpec(box, box.active_manifold(x_face), x_face,
                               u_face, gamma=1.0, eps=0.4)
    _write_points(out / "box_face_union.csv", sample_union_cloud(spec_face))

    first_inside = next((k for k, f in enumerate(flags) if f), None)
    summary = {
        "eps": eps,
        "trajectory_flags": flags[:10],
        "first_inside_index": first_inside,
        "stays_inside": bool(first_inside is not None
                             and all(flags[first_inside:])),
        "n_union_points": int(cloud.shape[0]),
    }
    files = [str(out / n) for n in
             ("sign_shift_union.csv", "sign_shift_trajectory.csv",
              "sign_shift_zbar.csv", "box_interior_union.csv",
              "box_face_union.csv")]
    write_manifest(out, "local-union-demo", config, {"eps": eps})
    write_json(out / "summary.json", summary)
    return ExperimentResult("local-union-demo", True, summary, files, [])
