import json
import os

import pytest

from boltzgap.config import OperatorParams, QuadratureSettings, RunConfig
from boltzgap.errors import ConfigError, RankDeficiencyError
from boltzgap.sweep import records as rec
from boltzgap.sweep.manager import SweepManager, run

FAST_QUAD = QuadratureSettings(nu_table_size=128)


def small_config(tmp_path, **overrides) -> RunConfig:
    values = dict(params=OperatorParams(d=2, gamma=0.0, alpha=-1.0), V=[3.0], N=[4], quadrature=FAST_QUAD,
                  runs_dir=str(tmp_path / "runs"), run_id="small")
    values.update(overrides)
    return RunConfig(**values)


def test_run_writes_artifacts(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path))
    assert ctx.finished and ctx.done == 1 and ctx.failed == 0
    for name in ("config.json", "tool.json", "diagnostics.json", "results.csv", os.path.join("logs", "run.log")):
        assert os.path.isfile(os.path.join(ctx.run_dir, name)), name
    tool = json.load(open(os.path.join(ctx.run_dir, "tool.json")))
    assert tool["tool_name"] == "boltzgap"
    (record,) = rec.load(ctx.out_path)
    assert record.M == 16 and record.backend == "grad" and record.method == "nullspace"
    assert record.gap > 0
    diag = json.load(open(os.path.join(ctx.run_dir, "diagnostics.json")))
    (point,) = diag.values()
    assert len(point["nu_range"]) == 2
    assert point["M"] == 16


def test_resume_skips_recorded_points(tmp_path):
    SweepManager().run(small_config(tmp_path))
    ctx = SweepManager().run(small_config(tmp_path, N=[4, 6]))
    assert ctx.skipped == 1
    assert ctx.done == 1
    assert sorted(r.N for r in rec.load(ctx.out_path)) == [4, 6]


def test_both_methods_agree(tmp_path):
    records = run(small_config(tmp_path, method="both"))
    by_method = {r.method: r for r in records}
    assert by_method["corrected"].zeros == 4
    assert by_method["corrected"].gap == pytest.approx(by_method["nullspace"].gap, rel=1e-6)


def test_empty_sweep(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path, V=[], N=[]))
    assert ctx.done == 0 and ctx.failed == 0
    assert open(ctx.out_path).read().splitlines() == [",".join(rec.HEADER)]


def test_failed_point_is_recorded_and_sweep_continues(tmp_path):
    manager = SweepManager()
    real = manager.backends["grad"]

    def flaky(mesh, basis, params, cfg, threads, diag):
        if mesh.N == 4:
            raise RankDeficiencyError("injected")
        return real(mesh, basis, params, cfg, threads, diag)

    manager.backends["grad"] = flaky
    ctx = manager.run(small_config(tmp_path, N=[4, 6]))
    assert ctx.failed == 1
    assert [r.N for r in ctx.records] == [6]
    log_text = open(os.path.join(ctx.run_dir, "logs", "run.log")).read()
    assert "injected" in log_text


def test_fixed_dv_must_divide_domain(tmp_path):
    with pytest.raises(ConfigError):
        SweepManager().run(small_config(tmp_path, fixed_dv=0.7))


def test_fixed_dv_derives_n(tmp_path):
    records = run(small_config(tmp_path, V=[2.0, 3.0], N=[], fixed_dv=1.0))
    assert [(r.V, r.N) for r in records] == [(2.0, 4), (3.0, 6)]


def test_parallel_points_keep_sweep_order(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path, N=[6, 4, 5], parallel_points=3, threads=3))
    assert [r.N for r in rec.load(ctx.out_path)] == [6, 4, 5]


def test_status_and_json_output(tmp_path):
    manager = SweepManager()
    out = str(tmp_path / "gaps.json")
    manager.run(small_config(tmp_path, out=out, format="json"))
    status = manager.status()["small"]
    assert status["finished"] is True
    assert status["done"] == 1 and status["total"] == 1
    assert status["out"] == out
    assert len(rec.load(out)) == 1


def test_matrix_dump_per_point(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path, dump_matrix="run"))
    dumps = os.listdir(os.path.join(ctx.run_dir, "matrices"))
    assert dumps == ["d2_g0_a-1_V3_N4_p0_grad.bgap"]


def test_gamma_sweep_runs_each_operator(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path, gammas=[0.0, 0.5], N=[4, 5]))
    assert [(r.gamma, r.N) for r in rec.load(ctx.out_path)] == [(0.0, 4), (0.0, 5), (0.5, 4), (0.5, 5)]
    diag = json.load(open(os.path.join(ctx.run_dir, "diagnostics.json")))
    assert sorted(k for k in diag if "_N4_" in k) == ["d2_g0.5_a-1_V3_N4_p0_grad", "d2_g0_a-1_V3_N4_p0_grad"]
    assert {point["representation"] for point in diag.values()} == {"F-rep"}


def test_both_backends_assemble_the_same_representation(tmp_path):
    ctx = SweepManager().run(small_config(tmp_path, backend="both"))
    diag = json.load(open(os.path.join(ctx.run_dir, "diagnostics.json")))
    assert {point["representation"] for point in diag.values()} == {"g-rep"}
    assert len(diag) == 2
