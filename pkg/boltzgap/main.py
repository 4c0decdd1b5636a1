"""
Entrypoint: python -m boltzgap

    python -m boltzgap run --dim 2 --gamma 0 --alpha -1 --V 5 --N 8,12,16 --out gaps.csv
    python -m boltzgap run --config presets/table1.cfg --gamma 0.5
    python -m boltzgap summarize runs/<run_id>

`run` is implied when the first argument is a flag. Exit codes: 0 every point
succeeded (or the sweep was empty), 1 some point failed, 2 configuration error.
"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from boltzgap.config import build_run_config, read_preset
from boltzgap.errors import ConfigError
from boltzgap.sweep.manager import SweepManager
from boltzgap.sweep.summary import summarize

EXIT_OK = 0
EXIT_POINT_FAILED = 1
EXIT_CONFIG = 2

_RUN_FLAGS = [
    ("--dim", "physical velocity dimension, 2 or 3"),
    ("--gamma", "potential exponent, or a comma list to sweep gamma"),
    ("--alpha", "angular exponent (< 0: cutoff)"),
    ("--V", "comma list of domain half-widths"),
    ("--N", "comma list of elements per axis"),
    ("--fixed-dv", "hold the mesh size fixed across V (derives N = 2V/dv)"),
    ("--basis", "p0 | p1"),
    ("--backend", "grad | direct | both"),
    ("--method", "nullspace | corrected | both"),
    ("--tri-order", "points per triangle for the direct backend (1, 3, 6, 7)"),
    ("--plane-order", "Gauss-Hermite points per axis for the k2 plane integral"),
    ("--ang-tol", "adaptive angular quadrature tolerance"),
    ("--kernel-order", "Gauss points per axis for far kernel blocks"),
    ("--near-order", "Gauss points per Duffy direction for near kernel blocks"),
    ("--nu-order", "Gauss points per axis for nu blocks"),
    ("--plane-table", "on | off: tabulate the k2 plane integral once per run"),
    ("--asym-bound", "relative asymmetry above which assembly is reported as under-resolved"),
    ("--strict-symmetry", "on | off: fail the point instead of logging an ERROR"),
    ("--representation", "auto | F | g: unknown for the grad backend (auto: g with --backend both)"),
    ("--threads", "assembly workers (env BOLTZGAP_THREADS)"),
    ("--out", "results path"),
    ("--format", "csv | json"),
    ("--dump-matrix", "directory (or .bgap file for one point) for binary matrix dumps"),
    ("--normalize-b", "on | off: rescale b to unit sphere integral"),
    ("--parallel-points", "points run concurrently"),
    ("--eig-mode", "dense | iterative"),
    ("--memory-budget-gb", "per-matrix memory budget"),
    ("--runs-dir", "base directory for run folders (env BOLTZGAP_RUNS_DIR)"),
    ("--run-id", "run folder name; reuse it to resume"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boltzgap", description="Spectral gaps of linearized Boltzmann operators")
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run a V x N sweep")
    run_p.add_argument("--config", help="preset file of key = value lines")
    for flag, text in _RUN_FLAGS:
        run_p.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"), default=None, help=text)

    sum_p = sub.add_parser("summarize", help="summarize a finished run directory")
    sum_p.add_argument("run_dir")
    sum_p.add_argument("--results", default=None, help="results file, if not in the run directory")
    return parser


def _merged_values(args: argparse.Namespace) -> Dict[str, str]:
    values: Dict[str, str] = {}
    if args.config:
        values.update(read_preset(args.config))
    for flag, _ in _RUN_FLAGS:
        key = flag.lstrip("-").replace("-", "_")
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    return values


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = build_run_config(_merged_values(args))
        ctx = SweepManager().run(cfg)
    except ConfigError as e:
        print(f"[boltzgap] configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"[boltzgap] run {ctx.run_id}: {ctx.done} recorded, {ctx.skipped} skipped, {ctx.failed} failed "
          f"-> {ctx.out_path}")
    return EXIT_POINT_FAILED if ctx.failed else EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    try:
        summary = summarize(args.run_dir, args.results)
    except (OSError, ValueError) as e:
        print(f"[boltzgap] cannot summarize {args.run_dir}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for g in summary["groups"]:
        head = f"d={g['d']} gamma={g['gamma']:g} alpha={g['alpha']:g} p={g['p']} {g['backend']}/{g['method']}"
        print(head)
        for pt in g["points"]:
            ref = "" if pt["reference"] is None else f" ref={pt['reference']:g}"
            print(f"    V={pt['V']:g} N={pt['N']} gap={pt['gap']:.6g}{ref}")
        for ns in g["n_sweeps"]:
            print(f"    N-sweep V={ns['V']:g}: slope={ns['slope']} monotone={ns['monotone']}")
        if g["v_sweep"]:
            print(f"    V-sweep: {g['v_sweep']['trend']} pseudo_plateau={g['v_sweep']['pseudo_plateau']}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("-") and argv[0] not in ("-h", "--help"):
        argv = ["run"] + argv
    console = logging.StreamHandler()
    console.setLevel(logging.WARNING)
    logging.basicConfig(format="%(asctime)s %(levelname)s: %(message)s", handlers=[console])
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args)
    if args.command == "summarize":
        return cmd_summarize(args)
    parser.print_help()
    return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
