"""
Pointwise physics: Maxwellian, angular cross-section b, collision frequency nu.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import special
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline

from boltzgap.config import OperatorParams
from boltzgap.errors import QuadratureToleranceError, SingularEvaluationError, UnsupportedCrossSectionError
from boltzgap.mesh_basis import Mesh, element_nodes, maxwellian_weight

log = logging.getLogger(__name__)


def maxwellian(v, d: int = None) -> np.ndarray:
    """(2 pi)^{-d/2} exp(-|v|^2/2); d defaults to the trailing axis length."""
    v = np.asarray(v, dtype=float)
    if d is not None and v.shape[-1] != d:
        raise ValueError(f"point dimension {v.shape[-1]} does not match d={d}")
    return maxwellian_weight(v)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^n in R^{n+1}."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


# ------------------------------------------------------------------------------
# Cross-section
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class CrossSection:
    params: OperatorParams
    amplitude: float

    @property
    def exponent(self) -> float:
        """Power of sin(theta/2)."""
        return -(self.params.d - 1) - self.params.alpha

    @property
    def is_constant(self) -> bool:
        return self.exponent == 0.0


def _shape_integral(d: int, alpha: float) -> float:
    # integral over S^{d-1} of sin^{-(d-1)-alpha}(theta/2)
    return sphere_area(d - 2) * 2.0 ** (d - 2) * special.beta(-alpha / 2.0, (d - 1) / 2.0)


def cross_section(params: OperatorParams) -> CrossSection:
    if params.normalized:
        amp = 1.0 / _shape_integral(params.d, params.alpha)
    else:
        amp = 1.0 / (2.0 ** (params.d - 1) * math.pi)
    return CrossSection(params=params, amplitude=amp)


def cross_section_b(cos_theta, cs: CrossSection) -> np.ndarray:
    c = np.asarray(cos_theta, dtype=float)
    s2 = np.clip(0.5 * (1.0 - c), 0.0, 1.0)
    e = cs.exponent
    if e == 0.0:
        return np.full_like(s2, cs.amplitude)
    if e < 0 and np.any(s2 == 0.0):
        raise SingularEvaluationError("b evaluated at theta = 0 where it is singular")
    return cs.amplitude * s2 ** (0.5 * e)


def b_of_angle(theta, cs: CrossSection) -> np.ndarray:
    """b as a function of the scattering angle theta in [0, pi]; no singularity check."""
    s = np.abs(np.sin(0.5 * np.asarray(theta, dtype=float)))
    e = cs.exponent
    if e == 0.0:
        return np.full_like(s, cs.amplitude)
    with np.errstate(divide="ignore"):
        return cs.amplitude * s ** e


def sphere_integral_b(cs: CrossSection) -> float:
    if not cs.params.integrable:
        raise UnsupportedCrossSectionError(f"sphere integral of b diverges for alpha={cs.params.alpha} >= 0")
    return cs.amplitude * _shape_integral(cs.params.d, cs.params.alpha)


# ------------------------------------------------------------------------------
# Collision frequency
# ------------------------------------------------------------------------------
def _radial_factor(kappa: np.ndarray, d: int) -> np.ndarray:
    """kappa^{1-d/2} I_{d/2-1}(kappa) e^{-kappa}, stable at kappa -> 0."""
    nu = 0.5 * d - 1.0
    kappa = np.asarray(kappa, dtype=float)
    small = kappa < 1.0
    out = np.empty_like(kappa)
    ks = kappa[small]
    out[small] = 0.5 ** nu / special.gamma(nu + 1.0) * special.hyp0f1(nu + 1.0, 0.25 * ks * ks) * np.exp(-ks)
    kl = kappa[~small]
    out[~small] = kl ** (-nu) * special.ive(nu, kl)
    return out


def _nu_radial(s: float, d: int, gamma: float, rtol: float) -> float:
    """(2 pi)^{-d/2} int |v - v*|^gamma exp(-|v*|^2/2) dv* at |v| = s, as a radial integral in r = |v - v*|."""
    power = gamma + d - 1.0

    def smooth(r):
        return float(_radial_factor(np.array([r * s]), d)[0] * math.exp(-0.5 * (r - s) ** 2))

    split = s if s > 0 else 1.0
    logger = logging.getLogger(__name__)
    with warnings.catch_warnings(record=True) as messages:
        warnings.simplefilter("always", category=IntegrationWarning)
        a, ea = quad(smooth, 0.0, split, weight="alg", wvar=(power, 0.0), epsrel=rtol, epsabs=0.0, limit=200)
        b, eb = quad(lambda r: r ** power * smooth(r), split, np.inf, epsrel=rtol, epsabs=0.0, limit=200)
        for warning in messages:
            logger.warning(f"[nu] s={s:.6g}: {warning.message}")
    total = a + b
    err = ea + eb
    if err > 1e3 * rtol * abs(total):
        raise QuadratureToleranceError(f"collision frequency at |v|={s:.6g} not converged", err / abs(total))
    return total


@dataclass(frozen=True)
class NuProfile:
    """
    Radial table of nu for one operator on a domain of half-width V.

    Values below r_direct come from direct quadrature; the rest from a cubic
    spline over table_size samples on [0, r_max].
    """
    params: OperatorParams
    V: float
    table_size: int = 1024
    r_direct: float = 0.0
    rtol: float = 1e-8
    scale: float = field(init=False)
    r: np.ndarray = field(init=False, repr=False)
    values: np.ndarray = field(init=False, repr=False)
    spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        if not self.params.integrable:
            raise UnsupportedCrossSectionError(
                f"collision frequency diverges for alpha={self.params.alpha} >= 0 (non-cutoff)")
        object.__setattr__(self, "scale", sphere_integral_b(cross_section(self.params)))
        r_max = math.sqrt(self.params.d) * self.V * 1.02
        r = np.linspace(0.0, r_max, self.table_size)
        vals = np.array([self.scale * _nu_radial(s, self.params.d, self.params.gamma, self.rtol) for s in r])
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", vals)
        # nu is even in |v|
        object.__setattr__(self, "spline", CubicSpline(r, vals, bc_type=((1, 0.0), "not-a-knot")))

    def direct(self, s: float) -> float:
        return self.scale * _nu_radial(float(s), self.params.d, self.params.gamma, self.rtol)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        radius = np.sqrt(np.sum(points * points, axis=-1))
        out = self.spline(radius)
        near = radius < self.r_direct
        if np.any(near):
            cache = {}
            flat_r = radius[near]
            vals = np.empty(flat_r.size)
            for i, s in enumerate(flat_r):
                key = round(float(s), 14)
                if key not in cache:
                    cache[key] = self.direct(s)
                vals[i] = cache[key]
            out[near] = vals
        return out


@lru_cache(maxsize=32)
def nu_profile(params: OperatorParams, V: float, dv: float = 0.0, table_size: int = 1024,
               rtol: float = 1e-8) -> NuProfile:
    return NuProfile(params=params, V=float(V), table_size=table_size, r_direct=2.0 * dv, rtol=rtol)


def collision_frequency(v, nu: NuProfile) -> float:
    """nu(v) by direct radial quadrature."""
    v = np.asarray(v, dtype=float)
    return nu.direct(float(np.sqrt(np.sum(v * v))))


def nu_closed_form_at_zero(gamma: float, d: int) -> float:
    return 2.0 ** (gamma / 2.0) * math.gamma((gamma + d) / 2.0) / math.gamma(d / 2.0)


def nu_range(mesh: Mesh, nu: NuProfile, order: int = 4) -> Tuple[float, float]:
    """Range of nu over the element quadrature nodes of the mesh."""
    pts, _, _ = element_nodes(mesh, order)
    vals = nu.evaluate(pts.reshape(-1, mesh.d))
    return float(vals.min()), float(vals.max())
