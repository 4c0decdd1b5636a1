"""
Post-run summary: reference values, N-sweep convergence slopes and V-sweep trends.

Groups are keyed by (d, gamma, alpha, p, backend, method). Within a group the
records at one V form an N-sweep and the records ordered by V form a V-sweep.
"""
import json
import logging
import os
from collections import defaultdict
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from boltzgap.sweep import records as rec
from boltzgap.sweep.records import ResultRecord

log = logging.getLogger(__name__)

# (d, gamma, alpha, V, N, p) -> gap, isotropic cross-sections with unit sphere integral
REFERENCE_GAPS: Dict[Tuple[int, float, float, float, int, int], float] = {
    **{(2, g, -1.0, 5.0, 24, 0): v for g, v in
       zip((0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0), (0.25, 0.29, 0.34, 0.44, 0.58, 0.67, 0.72))},
    (3, 0.0, -2.0, 5.0, 20, 0): 0.383798,
    (3, 0.0, -2.0, 5.0, 20, 1): 0.351826,
    (3, 0.0, -2.0, 5.0, 24, 0): 0.353494,
    (3, 0.0, -2.0, 5.0, 24, 1): 0.332835,
    **{(3, g, -2.0, 5.0, 20, 0): v for g, v in
       zip((0.25, 0.5, 0.75, 1.0), (0.45, 0.62, 0.83, 1.10))},
}

# (d, gamma, alpha) -> continuum gap
LIMITS: Dict[Tuple[int, float, float], float] = {
    (2, 0.0, -1.0): 0.25,
    (3, 0.0, -2.0): 1.0 / 3.0,
    (3, 0.0, 0.0): 1.0,
}

STABLE_CHANGE = 0.20
DECAY_RATIO = 0.5
PLATEAU_CHANGE = 0.02


def reference_gap(r: ResultRecord) -> Optional[float]:
    return REFERENCE_GAPS.get((r.d, r.gamma, r.alpha, r.V, r.N, r.p))


def limit_gap(d: int, gamma: float, alpha: float) -> Optional[float]:
    return LIMITS.get((d, gamma, alpha))


def convergence_slope(dv: List[float], gaps: List[float], limit: float) -> Optional[float]:
    """Least-squares slope of log|gap - limit| against log dv."""
    err = np.abs(np.asarray(gaps, dtype=float) - limit)
    h = np.asarray(dv, dtype=float)
    keep = (err > 0) & np.isfinite(err)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(h[keep]), np.log(err[keep]), 1)[0])


def classify_trend(gaps: List[float]) -> Dict[str, Any]:
    """'stable', 'decaying' or 'mixed' for gaps ordered by increasing V."""
    g = np.asarray(gaps, dtype=float)
    if g.size < 2 or not np.all(np.isfinite(g)):
        return {"trend": "insufficient", "pseudo_plateau": False}
    rel = np.abs(np.diff(g)) / np.maximum(np.abs(g[:-1]), 1e-300)
    overall = abs(g[-1] - g[0]) / max(abs(g[0]), 1e-300)
    if np.all(np.diff(g) < 0) and g[-1] < DECAY_RATIO * g[0]:
        trend = "decaying"
    elif overall < STABLE_CHANGE:
        trend = "stable"
    else:
        trend = "mixed"
    return {
        "trend": trend,
        "relative_change": float(overall),
        "pseudo_plateau": bool(trend == "decaying" and np.any(rel < PLATEAU_CHANGE)),
    }


def _group(records: List[ResultRecord]) -> Dict[Tuple, List[ResultRecord]]:
    groups: Dict[Tuple, List[ResultRecord]] = defaultdict(list)
    for r in records:
        groups[(r.d, r.gamma, r.alpha, r.p, r.backend, r.method)].append(r)
    return groups


def summarize_records(records: List[ResultRecord]) -> Dict[str, Any]:
    out: Dict[str, Any] = {"groups": []}
    for (d, gamma, alpha, p, backend, method), rows in sorted(_group(records).items()):
        limit = limit_gap(d, gamma, alpha)
        points = []
        for r in sorted(rows, key=lambda r: (r.V, r.N)):
            ref = reference_gap(r)
            points.append({
                "V": r.V, "N": r.N, "dv": 2.0 * r.V / r.N, "gap": r.gap, "zeros": r.zeros,
                "reference": ref, "deviation": None if ref is None else abs(r.gap - ref),
                "limit_deviation": None if limit is None else abs(r.gap - limit),
            })
        group: Dict[str, Any] = {
            "d": d, "gamma": gamma, "alpha": alpha, "p": p, "backend": backend, "method": method,
            "limit": limit, "points": points, "n_sweeps": [], "v_sweep": None,
        }
        by_v: Dict[float, List[dict]] = defaultdict(list)
        for pt in points:
            by_v[pt["V"]].append(pt)
        if limit is not None:
            for V, pts in sorted(by_v.items()):
                if len(pts) < 2:
                    continue
                errs = [abs(pt["gap"] - limit) for pt in pts]
                group["n_sweeps"].append({
                    "V": V, "N": [pt["N"] for pt in pts],
                    "slope": convergence_slope([pt["dv"] for pt in pts], [pt["gap"] for pt in pts], limit),
                    "monotone": bool(np.all(np.diff(errs) < 0)),
                })
        if len(by_v) >= 2:
            # finest N at each V
            chosen = [max(pts, key=lambda pt: pt["N"]) for _, pts in sorted(by_v.items())]
            group["v_sweep"] = {"V": [pt["V"] for pt in chosen], "gaps": [pt["gap"] for pt in chosen],
                                **classify_trend([pt["gap"] for pt in chosen])}
        out["groups"].append(group)
    out["records"] = len(records)
    return out


def summarize(run_dir: str, results: Optional[str] = None) -> Dict[str, Any]:
    """Summarize a run directory's results and write summary.json next to them."""
    if results is None:
        results = os.path.join(run_dir, "results.csv")
        if not os.path.isfile(results) and os.path.isfile(os.path.join(run_dir, "results.json")):
            results = os.path.join(run_dir, "results.json")
        cfg_path = os.path.join(run_dir, "config.json")
        if os.path.isfile(cfg_path):
            with open(cfg_path) as f:
                out = json.load(f).get("out")
            if out and os.path.isfile(out):
                results = out
    records = rec.load(results)
    summary = summarize_records(records)
    summary["results"] = results
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    log.info(f"[summary] {len(records)} records in {len(summary['groups'])} groups from {results}")
    return summary
