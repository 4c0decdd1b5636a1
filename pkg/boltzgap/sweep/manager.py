import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Set, Tuple

import numpy as np

from boltzgap import __version__
from boltzgap.collision.direct import assemble_direct
from boltzgap.collision.grad_splitting import assemble_grad
from boltzgap.collision.matrix import CollisionMatrix, dump_matrix
from boltzgap.config import OperatorParams, RunConfig
from boltzgap.constraints import constraint_matrix, log_constraint_summary
from boltzgap.errors import BoltzGapError
from boltzgap.kernels import nu_profile, nu_range
from boltzgap.logger import attach_library_logs, close_run_logger, detach_library_logs, get_run_logger, run_dir_for
from boltzgap.mesh_basis import BasisSpec, Representation, build_mesh
from boltzgap.spectra import spectral_gap
from boltzgap.sweep import records as rec
from boltzgap.sweep.records import PointKey, ResultRecord

TOOL_NAME = "boltzgap"
NU_SLACK = 0.05


def _assemble_grad(mesh, basis, params, cfg: RunConfig, threads: int, diag: Dict[str, Any]) -> CollisionMatrix:
    nu = nu_profile(params, mesh.V, mesh.dv, cfg.quadrature.nu_table_size, cfg.quadrature.nu_rtol)
    diag["nu_range"] = list(nu_range(mesh, nu, cfg.quadrature.nu_order))
    rep = Representation.G if cfg.grad_representation() == "g" else Representation.F
    return assemble_grad(mesh, basis, params, nu=nu, settings=cfg.quadrature, threads=threads,
                         memory_budget_gb=cfg.memory_budget_gb, representation=rep)


def _assemble_direct(mesh, basis, params, cfg: RunConfig, threads: int, diag: Dict[str, Any]) -> CollisionMatrix:
    return assemble_direct(mesh, basis, params, settings=cfg.quadrature, threads=threads,
                           memory_budget_gb=cfg.memory_budget_gb)


@dataclass
class PointJob:
    index: int
    params: OperatorParams
    V: float
    N: int
    backend: str
    methods: List[str]

    def label(self, cfg: RunConfig) -> str:
        p = self.params
        return rec.point_label(p.d, p.gamma, p.alpha, self.V, self.N, cfg.p, self.backend)


@dataclass
class PointOutcome:
    job: PointJob
    records: List[ResultRecord] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    failed: int = 0


class SweepContext:
    def __init__(self, run_id: str, cfg: RunConfig, runs_dir: Optional[str] = None):
        self.run_id = run_id
        self.cfg = cfg
        self.run_dir = run_dir_for(run_id, runs_dir)
        self.logger = get_run_logger(run_id, runs_dir)
        self.start_time = time.time()
        self.out_path = cfg.out or os.path.join(self.run_dir, f"results.{cfg.format}")
        self.total = 0
        self.done = 0
        self.failed = 0
        self.skipped = 0
        self.finished = False
        self.existing: List[ResultRecord] = []
        self.results: Dict[int, List[ResultRecord]] = {}
        self.diagnostics: Dict[str, Any] = {}
        self.lock = threading.Lock()

    @property
    def records(self) -> List[ResultRecord]:
        """Previously stored records followed by this run's, in sweep order."""
        return self.existing + [r for i in sorted(self.results) for r in self.results[i]]


class SweepManager:
    def __init__(self, runs_dir: Optional[str] = None):
        self.runs_dir = runs_dir
        self.runs: Dict[str, SweepContext] = {}
        self.backends: Dict[str, Callable[..., CollisionMatrix]] = {
            "grad": _assemble_grad,
            "direct": _assemble_direct,
        }

    # --------------------------------------------------------------------------
    # Run lifecycle
    # --------------------------------------------------------------------------
    def start_run(self, cfg: RunConfig) -> SweepContext:
        runs_dir = cfg.runs_dir or self.runs_dir
        run_id = cfg.run_id or str(uuid.uuid4())
        run_dir = run_dir_for(run_id, runs_dir)
        os.makedirs(run_dir, exist_ok=True)

        ctx = SweepContext(run_id, cfg, runs_dir)
        self.runs[run_id] = ctx

        with open(os.path.join(run_dir, "config.json"), "w") as f:
            json.dump(cfg.model_dump(mode="json"), f, indent=2)
        with open(os.path.join(run_dir, "tool.json"), "w") as f:
            json.dump({"tool_name": TOOL_NAME, "version": __version__}, f, indent=2)
        diag_path = os.path.join(run_dir, "diagnostics.json")
        if os.path.isfile(diag_path):
            with open(diag_path) as f:
                ctx.diagnostics = json.load(f)

        p, gammas = cfg.params, [q.gamma for q in cfg.operator_points()]
        ctx.logger.info(
            f"[sweep] starting run {run_id} d={p.d} gamma={gammas} alpha={p.alpha} p={cfg.p} "
            f"backend={cfg.backend} method={cfg.method} V={cfg.V} N={cfg.N} fixed_dv={cfg.fixed_dv} "
            f"threads={cfg.threads} parallel_points={cfg.parallel_points} out={ctx.out_path}"
        )
        return ctx

    def run(self, cfg: RunConfig) -> SweepContext:
        """Execute every (V, N) point of cfg; failed points are logged and skipped."""
        points = cfg.points()
        ctx = self.start_run(cfg)
        handler = attach_library_logs(ctx.logger)
        try:
            ctx.existing = rec.load(ctx.out_path, cfg.format)
            jobs = self._plan(ctx, points)
            if cfg.parallel_points > 1 and len(jobs) > 1:
                self._run_parallel(ctx, jobs)
            else:
                threads = cfg.threads
                for job in jobs:
                    self._collect(ctx, self._run_point(ctx, job, threads))
            self._write(ctx)
            ctx.logger.info(f"[sweep] run {ctx.run_id} finished: done={ctx.done} failed={ctx.failed} "
                            f"skipped={ctx.skipped} in {time.time() - ctx.start_time:.1f}s")
        finally:
            ctx.finished = True
            detach_library_logs(handler)
            close_run_logger(ctx.logger)
        return ctx

    def _plan(self, ctx: SweepContext, points: List[Tuple[float, int]]) -> List[PointJob]:
        cfg = ctx.cfg
        have: Set[PointKey] = {r.key() for r in ctx.existing}
        jobs: List[PointJob] = []
        for p in cfg.operator_points():
            for V, N in points:
                for backend in cfg.backends():
                    methods = []
                    for method in cfg.methods():
                        if rec.point_key(p.d, p.gamma, p.alpha, V, N, cfg.p, backend, method) in have:
                            ctx.skipped += 1
                            ctx.logger.info(f"[sweep] gamma={p.gamma:g} V={V:g} N={N} {backend}/{method} "
                                            f"already recorded, skipping")
                        else:
                            methods.append(method)
                    if methods:
                        jobs.append(PointJob(index=len(jobs), params=p, V=float(V), N=int(N), backend=backend,
                                             methods=methods))
        ctx.total = sum(len(j.methods) for j in jobs)
        return jobs

    def _run_parallel(self, ctx: SweepContext, jobs: List[PointJob]):
        workers = min(ctx.cfg.parallel_points, len(jobs))
        threads = max(1, ctx.cfg.threads // workers)
        ctx.logger.info(f"[sweep] {len(jobs)} points on {workers} concurrent slots, {threads} workers each")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(self._run_point, ctx, job, threads) for job in jobs]
            for fut in as_completed(futures):
                self._collect(ctx, fut.result())

    # --------------------------------------------------------------------------
    # One point: mesh -> assemble -> constrain -> eigensolve -> record
    # --------------------------------------------------------------------------
    def _run_point(self, ctx: SweepContext, job: PointJob, threads: int) -> PointOutcome:
        cfg, params = ctx.cfg, job.params
        label = job.label(cfg)
        out = PointOutcome(job=job)
        diag = out.diagnostics
        try:
            mesh = build_mesh(job.V, job.N, params.d)
            basis = BasisSpec(p=cfg.p, d=params.d)
            t0 = time.perf_counter()
            G = self.backends[job.backend](mesh, basis, params, cfg, threads, diag)
            t_asm = time.perf_counter() - t0
            diag.update({k: _plain(v) for k, v in G.diagnostics.items()})
            diag["M"] = G.size
            diag["representation"] = G.representation.value
            diag["t_asm"] = t_asm
            ctx.logger.info(f"[{job.backend}] {label} M={G.size} {G.representation.value} t_asm={t_asm:.2f}s")
            if "nu_range" in diag:
                ctx.logger.info(f"[{job.backend}] {label} nu range [{diag['nu_range'][0]:.6g}, "
                                f"{diag['nu_range'][1]:.6g}]")
            if cfg.dump_matrix:
                path = self._dump_path(ctx, label)
                dump_matrix(G, path)
                diag["matrix_dump"] = path
            cs = constraint_matrix(mesh, basis, G.representation, cfg.quadrature.moment_order)
            diag.update(log_constraint_summary(cs, ctx.logger))
        except BoltzGapError:
            ctx.logger.exception(f"[sweep] {label} failed during assembly")
            out.failed = len(job.methods)
            diag["error"] = "assembly"
            return out

        for method in job.methods:
            try:
                res = spectral_gap(G, cs, method=method, zero_tol_rel=cfg.zero_tol_rel, eig_mode=cfg.eig_mode)
            except BoltzGapError:
                ctx.logger.exception(f"[eig] {label} method={method} failed")
                out.failed += 1
                diag[f"error_{method}"] = "eigensolve"
                continue
            out.records.append(ResultRecord(
                d=params.d, gamma=params.gamma, alpha=params.alpha, V=job.V, N=job.N, p=cfg.p,
                backend=job.backend, method=method, M=G.size, gap=res.gap, eigs=res.leading(rec.N_EIGS).tolist(),
                zeros=res.zeros, t_asm=t_asm, t_eig=res.seconds,
            ))
            diag[f"zero_tol_{method}"] = res.zero_tol
            ctx.logger.info(f"[eig] {label} method={method} gap={res.gap:.10g} zeros={res.zeros} "
                            f"t_eig={res.seconds:.2f}s")
            if "nu_range" in diag:
                nu_min = diag["nu_range"][0]
                diag["gap_below_nu_min"] = bool(res.gap <= nu_min * (1.0 + NU_SLACK))
                if not diag["gap_below_nu_min"]:
                    ctx.logger.warning(f"[eig] {label} gap={res.gap:.6g} above min nu={nu_min:.6g}; "
                                       f"quadrature too coarse?")
        return out

    def _dump_path(self, ctx: SweepContext, label: str) -> str:
        target = ctx.cfg.dump_matrix
        if target.endswith(".bgap") and ctx.total <= len(ctx.cfg.methods()):
            return target
        base = os.path.join(ctx.run_dir, "matrices") if target in ("run", "1", "on") else target
        return os.path.join(base, f"{label}.bgap")

    # --------------------------------------------------------------------------
    # Results (single writer)
    # --------------------------------------------------------------------------
    def _collect(self, ctx: SweepContext, out: PointOutcome):
        with ctx.lock:
            ctx.results[out.job.index] = out.records
            ctx.done += len(out.records)
            ctx.failed += out.failed
            ctx.diagnostics[out.job.label(ctx.cfg)] = out.diagnostics
            self._write(ctx)

    def _write(self, ctx: SweepContext):
        rec.emit(ctx.records, ctx.cfg.format, ctx.out_path, allow_empty=True)
        with open(os.path.join(ctx.run_dir, "diagnostics.json"), "w") as f:
            json.dump(ctx.diagnostics, f, indent=2)

    def status(self) -> Dict[str, Dict[str, Any]]:
        out = {}
        for run_id, ctx in self.runs.items():
            out[run_id] = {
                "cfg": ctx.cfg.model_dump(mode="json"), "total": ctx.total, "done": ctx.done,
                "failed": ctx.failed, "skipped": ctx.skipped, "finished": ctx.finished, "out": ctx.out_path,
            }
        return out


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


def run(config: RunConfig, runs_dir: Optional[str] = None) -> List[ResultRecord]:
    """Run a sweep and return this run's records (including ones found in the output file)."""
    return SweepManager(runs_dir).run(config).records
