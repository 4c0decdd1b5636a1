#!/usr/bin/env python3
import json
import os
import shutil
from datetime import datetime

from boltzgap.sweep.summary import summarize


def collect(run_id: str, outdir: str = None, runs_dir: str = None):
    base = os.path.join(runs_dir or os.environ.get("BOLTZGAP_RUNS_DIR") or os.path.join(os.getcwd(), "runs"), run_id)
    if not os.path.exists(base):
        raise SystemExit(f"Run {run_id} not found at {base}")
    outdir = outdir or os.path.join(base, "bundle")
    os.makedirs(outdir, exist_ok=True)

    # results, logs, config, tool metadata and diagnostics; matrix dumps are left in place
    for name in ("logs", "config.json", "tool.json", "diagnostics.json", "results.csv", "results.json"):
        src = os.path.join(base, name)
        if os.path.isdir(src):
            shutil.copytree(src, os.path.join(outdir, os.path.basename(src)), dirs_exist_ok=True)
        elif os.path.isfile(src):
            shutil.copy2(src, outdir)

    cfg = {}
    cfg_path = os.path.join(base, "config.json")
    if os.path.isfile(cfg_path):
        with open(cfg_path) as fh:
            cfg = json.load(fh)
    if cfg.get("out") and os.path.isfile(cfg["out"]):
        shutil.copy2(cfg["out"], outdir)

    summary = summarize(base)
    failed = 0
    logp = os.path.join(base, "logs", "run.log")
    if os.path.isfile(logp):
        with open(logp, "r", errors="ignore") as fh:
            failed = sum(1 for line in fh if " failed" in line and "ERROR" in line)

    tool = {}
    tool_path = os.path.join(base, "tool.json")
    if os.path.isfile(tool_path):
        with open(tool_path) as fh:
            tool = json.load(fh)

    manifest = {
        "tool": tool.get("tool_name", "boltzgap"),
        "version": tool.get("version", "unknown"),
        "run_id": run_id,
        "collected_at": datetime.utcnow().isoformat() + "Z",
        "files": sorted(os.listdir(outdir)),
        "params": cfg.get("params", {}),
        "records": summary["records"],
        "failed_points": failed,
        "groups": [
            {k: g[k] for k in ("d", "gamma", "alpha", "p", "backend", "method", "limit", "n_sweeps", "v_sweep")}
            for g in summary["groups"]
        ],
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)

    print("[collect] Bundled at", outdir)
    return outdir


if __name__ == "__main__":
    import sys
    if len(sys.argv) < 2:
        print("Usage: collect_results.py <run_id> [destdir]")
        raise SystemExit(2)
    collect(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else None)
