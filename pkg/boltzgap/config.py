"""
Configuration models for boltzgap

- OperatorParams: the physics (d, gamma, alpha, cross-section normalization)
- QuadratureSettings: every quadrature knob with its default
- RunConfig: one sweep = V list x N list at fixed physics
- Preset files: flat `key = value` text mirroring the CLI flags
"""

import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from boltzgap.errors import ConfigError

# ------------------------------------------------------------------------------
# Physics
# ------------------------------------------------------------------------------
class OperatorParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: Literal[2, 3] = Field(..., description="velocity dimension")
    gamma: float = Field(..., description="potential exponent, in (-d, 1]")
    alpha: float = Field(..., lt=2.0, description="angular exponent")
    b_normalized: Optional[bool] = Field(None, description="rescale b to unit sphere integral (alpha < 0 only)")

    @model_validator(mode="after")
    def _check(self):
        if not (-self.d < self.gamma <= 1.0):
            raise ValueError(f"gamma={self.gamma} outside (-{self.d}, 1]")
        if self.b_normalized and self.alpha >= 0:
            raise ValueError("b_normalized requires alpha < 0 (integrable cross-section)")
        return self

    @property
    def integrable(self) -> bool:
        return self.alpha < 0

    @property
    def normalized(self) -> bool:
        # default: on for cutoff kernels, off otherwise
        if self.b_normalized is None:
            return self.alpha < 0
        return bool(self.b_normalized)

    @property
    def beta(self) -> float:
        """Exponent of the planar factor (|xi-v|^2+|w|^2)^beta."""
        return 0.5 * (self.gamma + 1.0 + self.alpha)


class QuadratureSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    kernel_order: int = Field(3, ge=1, le=16, description="Gauss points per axis, far kernel blocks")
    nu_order: int = Field(4, ge=1, le=16, description="Gauss points per axis, nu blocks")
    near_order: int = Field(6, ge=2, le=24, description="Gauss points per Duffy direction, near blocks")
    plane_order: int = Field(32, ge=2, le=128, description="Gauss-Hermite points per axis on the plane")
    tri_order: Literal[1, 3, 6, 7] = Field(7, description="points per triangle, direct backend")
    ang_tol: float = Field(1e-7, gt=0, description="adaptive polar quadrature tolerance")
    ang_max_intervals: int = Field(200, ge=4)
    arc_order: int = Field(8, ge=2, le=32, description="Gauss points per sub-arc for non-constant b")
    moment_order: int = Field(6, ge=2, le=16)
    nu_table_size: int = Field(1024, ge=16)
    nu_rtol: float = Field(1e-8, gt=0)
    prune_tol: float = Field(1e-16, ge=0)
    asym_bound: float = Field(1e-3, gt=0, description="error above this relative pre-symmetrization asymmetry")
    strict_symmetry: bool = Field(False, description="fail the point instead of logging when asym_bound is exceeded")
    plane_table: bool = Field(True, description="adaptive planar-integral table; off uses per-pair Gauss-Hermite sums")
    plane_table_size: int = Field(160, ge=16, le=2048, description="nodes per axis of the planar table")


# ------------------------------------------------------------------------------
# Run
# ------------------------------------------------------------------------------
class RunConfig(BaseModel):
    params: OperatorParams
    gammas: List[float] = Field(default_factory=list, description="gamma sweep; empty means params.gamma only")
    representation: Literal["auto", "F", "g"] = "auto"
    V: List[float] = Field(default_factory=list)
    N: List[int] = Field(default_factory=list)
    fixed_dv: Optional[float] = Field(None, gt=0)
    p: Literal[0, 1] = 0
    backend: Literal["grad", "direct", "both"] = "grad"
    method: Literal["nullspace", "corrected", "both"] = "nullspace"
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    threads: int = Field(1, ge=1, le=1024)
    parallel_points: int = Field(1, ge=1, le=256)
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    dump_matrix: Optional[str] = None
    runs_dir: Optional[str] = None
    run_id: Optional[str] = None
    memory_budget_gb: float = Field(8.0, gt=0)
    eig_mode: Literal["dense", "iterative"] = "dense"
    zero_tol_rel: float = Field(1e-8, gt=0)
    tier: Literal["fast", "slow"] = "fast"

    @field_validator("V")
    @classmethod
    def _positive_v(cls, v):
        for x in v:
            if x <= 0:
                raise ValueError(f"V={x} must be positive")
        return v

    @field_validator("N")
    @classmethod
    def _n_at_least_two(cls, v):
        for x in v:
            if x < 2:
                raise ValueError(f"N={x} must be >= 2")
        return v

    @model_validator(mode="after")
    def _backend_vs_alpha(self):
        if self.backend in ("grad", "both") and not self.params.integrable:
            raise ValueError("backend=grad requires alpha < 0; use backend=direct for non-cutoff kernels")
        d = self.params.d
        for g in self.gammas:
            if not (-d < g <= 1.0):
                raise ValueError(f"gamma={g} outside (-{d}, 1]")
        return self

    def operator_points(self) -> List[OperatorParams]:
        """Physics of every sweep point: params alone, or one copy per entry of gammas."""
        if not self.gammas:
            return [self.params]
        base = self.params.model_dump()
        return [OperatorParams(**{**base, "gamma": g}) for g in self.gammas]

    def grad_representation(self) -> str:
        """'F' or 'g'. auto picks g when the direct backend runs alongside, so both produce the same matrix."""
        if self.representation == "auto":
            return "g" if self.backend == "both" else "F"
        return self.representation

    def backends(self) -> List[str]:
        return ["grad", "direct"] if self.backend == "both" else [self.backend]

    def methods(self) -> List[str]:
        return ["nullspace", "corrected"] if self.method == "both" else [self.method]

    def points(self) -> List[tuple]:
        """(V, N) pairs of the sweep; with fixed_dv, N = 2V/dv per V."""
        if self.fixed_dv is not None:
            pts = []
            for V in self.V:
                n = 2.0 * V / self.fixed_dv
                if abs(n - round(n)) > 1e-9 * max(1.0, n):
                    raise ConfigError(f"fixed-dv={self.fixed_dv} does not divide 2V={2 * V}")
                pts.append((V, int(round(n))))
            return pts
        return [(V, N) for V in self.V for N in self.N]


# ------------------------------------------------------------------------------
# Preset files and flag merging
# ------------------------------------------------------------------------------
_QUAD_KEYS = {
    "tri_order": "tri_order",
    "plane_order": "plane_order",
    "ang_tol": "ang_tol",
    "kernel_order": "kernel_order",
    "nu_order": "nu_order",
    "near_order": "near_order",
    "asym_bound": "asym_bound",
    "strict_symmetry": "strict_symmetry",
    "plane_table": "plane_table",
    "plane_table_size": "plane_table_size",
}
_QUAD_FLAGS = ("strict_symmetry", "plane_table")
_QUAD_INTS = ("tri_order", "plane_order", "kernel_order", "nu_order", "near_order", "plane_table_size")


def _parse_float_list(spec: Any) -> List[float]:
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    out: List[float] = []
    for part in str(spec or "").split(","):
        part = part.strip()
        if part:
            out.append(float(part))
    return out


def _parse_int_list(spec: Any) -> List[int]:
    vals = _parse_float_list(spec)
    for x in vals:
        if x != int(x):
            raise ConfigError(f"N={x} is not an integer")
    return [int(x) for x in vals]


def _parse_onoff(val: Any) -> Optional[bool]:
    if val is None or isinstance(val, bool):
        return val
    s = str(val).strip().lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    if s in ("", "auto", "default"):
        return None
    raise ConfigError(f"expected on|off, got {val!r}")


def read_preset(path: str) -> Dict[str, str]:
    """Parse a flat key=value preset; keys normalized to underscores."""
    if not os.path.isfile(path):
        raise ConfigError(f"preset file not found: {path}")
    out: Dict[str, str] = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return out


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from flat flag-style values (preset and CLI merged)."""
    v = {k.replace("-", "_"): val for k, val in values.items() if val is not None}
    try:
        if "dim" not in v:
            raise ConfigError("missing required key: dim")
        for key in ("gamma", "alpha"):
            if key not in v:
                raise ConfigError(f"missing required key: {key}")
        gammas = _parse_float_list(v["gamma"])
        if not gammas:
            raise ConfigError("gamma is empty")
        params = OperatorParams(
            d=int(v["dim"]),
            gamma=gammas[0],
            alpha=float(v["alpha"]),
            b_normalized=_parse_onoff(v.get("normalize_b")),
        )
        quad_values = {dst: v[src] for src, dst in _QUAD_KEYS.items() if src in v}
        for key in _QUAD_FLAGS:
            if key in quad_values:
                quad_values[key] = bool(_parse_onoff(quad_values[key]))
        for key in _QUAD_INTS:
            # Literal-typed orders only accept ints
            if key in quad_values:
                quad_values[key] = int(quad_values[key])
        quad = QuadratureSettings(**quad_values)
        basis = str(v.get("basis", "p0")).lower()
        if basis not in ("p0", "p1"):
            raise ConfigError(f"basis must be p0 or p1, got {basis}")
        threads = v.get("threads") or os.environ.get("BOLTZGAP_THREADS") or 1
        cfg = dict(
            params=params,
            gammas=gammas if len(gammas) > 1 else [],
            representation=v.get("representation", "auto"),
            V=_parse_float_list(v.get("V", "")),
            N=_parse_int_list(v.get("N", "")),
            fixed_dv=float(v["fixed_dv"]) if "fixed_dv" in v else None,
            p=int(basis[1]),
            backend=v.get("backend", "grad"),
            method=v.get("method", "nullspace"),
            quadrature=quad,
            threads=int(threads),
            parallel_points=int(v.get("parallel_points", 1)),
            out=v.get("out"),
            format=v.get("format", "csv"),
            dump_matrix=v.get("dump_matrix"),
            runs_dir=v.get("runs_dir"),
            run_id=v.get("run_id"),
            eig_mode=v.get("eig_mode", "dense"),
            tier=v.get("tier", "fast"),
        )
        if "memory_budget_gb" in v:
            cfg["memory_budget_gb"] = float(v["memory_budget_gb"])
        return RunConfig(**cfg)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
