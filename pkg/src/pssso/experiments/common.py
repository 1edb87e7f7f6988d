"""Shared plumbing for the experiment commands: manifests, output, pools."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..config import config_hash

__all__ = ["ExperimentResult", "write_manifest", "write_json", "run_pool",
           "DEVIATION_NOTES"]

# Precision mapping applied throughout: the reference experiments were run
# in extended precision with stop tolerances down to 1e-20 and zero
# thresholds of 1e-30; in double precision stop tolerances map to 1e-12
# (1e-8 for the nuclear degenerate run so the terminal rank stays above
# the relative detection floor) and zero/rank detection uses the relative
# rule 1e-10 * (1 + scale).
DEVIATION_NOTES = [
    "stop tolerances mapped from extended precision to double: 1e-12 default",
    "nuclear degenerate run stops at 1e-8 so rank detection stays above the "
    "relative 1e-10 floor",
    "support/rank zero detection: relative 1e-10 rule instead of 1e-30 "
    "absolute under extended precision",
    "support-size trace columns count exact nonzeros (proximal steps "
    "produce exact zeros)",
]


@dataclass
class ExperimentResult:
    """Outcome handed back to the CLI."""

    name: str
    ok: bool
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(_to_jsonable(data), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir: Path, experiment: str, config: dict,
                   tolerances: dict) -> Path:
    path = Path(out_dir) / "manifest.json"
    write_json(path, {
        "experiment": experiment,
        "config": config,
        "config_hash": config_hash(config),
        "code_version": __version__,
        "tolerances": tolerances,
        "deviation_notes": DEVIATION_NOTES,
    })
    return path


def thread_count() -> int:
    raw = os.environ.get("PSSSO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_pool(fn, items):
    """Map fn over items, in order, optionally on a thread pool.

    PSSSO_THREADS caps the worker count; results are collected in input
    order so reductions stay deterministic regardless of scheduling.
    """
    workers = thread_count()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def ensure_out_dir(config: dict, default: str) -> Path:
    out = Path(config.get("output_dir", default))
    out.mkdir(parents=True, exist_ok=True)
    return out
