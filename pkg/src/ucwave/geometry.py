"""Carleman-weight geometry for 1D unique continuation of the wave equation.

The spatial domain is the interval Omega = (-R, 0) with data region
omega = (-R, -r); the weight center y = beta sits to the right of the origin,
outside Omega. The quadratic weight

    psi(t, x) = (x - y)^2 - (1 - eps) * t^2

organizes the stability landscape through its super-level sets
U(s) = {psi > s}: the Hoelder region is B = U(rho), the stretched regions are
B_kappa = U(kappa * rho), and the a-priori region is Q_tilde = U(delta).

Everything here is immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigurationError, UsageError

__all__ = [
    "GeometryConfig",
    "WeightParams",
    "Region",
    "PseudoconvexityReport",
    "derive_params",
    "psi",
    "grad_margin",
    "region_contains",
    "check_pseudoconvexity",
    "gamma_contains",
]

_T_SLACK = 1e-12


@dataclass(frozen=True)
class GeometryConfig:
    """User-facing geometry parameters.

    T = None selects the minimal admissible time horizon
    sqrt((rho1 - rho) / (1 - eps)); an explicit T is validated against that
    lower bound. ``rho_fraction`` places rho inside [rho0, rho1).
    """

    r: float
    R: float
    beta: float
    eps: float
    rho_fraction: float = 0.1
    delta_fraction: float = 0.1
    T: float | None = None
    time_interval: str = "symmetric"
    dim: int = 1

    def __post_init__(self):
        if not (0.0 < self.r < self.R):
            raise ConfigurationError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        if self.beta <= 0.0:
            raise ConfigurationError(f"need beta > 0, got {self.beta}")
        if not (0.0 < self.eps < 1.0):
            raise ConfigurationError(f"need eps in (0, 1), got {self.eps}")
        if not (0.0 <= self.rho_fraction < 1.0):
            raise ConfigurationError(
                f"need rho_fraction in [0, 1), got {self.rho_fraction}"
            )
        if not (0.0 < self.delta_fraction < 1.0):
            raise ConfigurationError(
                f"need delta_fraction in (0, 1), got {self.delta_fraction}"
            )
        if self.time_interval not in ("symmetric", "forward"):
            raise ConfigurationError(
                f"time_interval must be 'symmetric' or 'forward', got {self.time_interval!r}"
            )
        if self.dim != 1:
            raise ConfigurationError("only spatial dimension 1 is supported")


@dataclass(frozen=True)
class WeightParams:
    """Derived weight parameters; ``y`` is the 1D weight center (= beta)."""

    rho0: float
    rho1: float
    rho: float
    T: float
    y: float
    eps: float
    delta: float
    R: float
    r: float
    time_interval: str = "symmetric"

    @property
    def t_lo(self) -> float:
        return -self.T if self.time_interval == "symmetric" else 0.0

    @property
    def t_hi(self) -> float:
        return self.T

    def with_interval(self, time_interval: str) -> "WeightParams":
        return replace(self, time_interval=time_interval)


def derive_params(cfg: GeometryConfig) -> WeightParams:
    """Compute rho0 = r^2 + beta^2, rho1 = (r + beta)^2, rho, delta and T."""
    rho0 = cfg.r**2 + cfg.beta**2
    rho1 = (cfg.r + cfg.beta) ** 2
    rho = rho0 + cfg.rho_fraction * (rho1 - rho0)
    t_min = math.sqrt((rho1 - rho) / (1.0 - cfg.eps))
    if cfg.T is None:
        T = t_min
    else:
        if cfg.T < t_min * (1.0 - _T_SLACK):
            raise ConfigurationError(
                f"explicit T={cfg.T} violates T >= sqrt((rho1 - rho)/(1 - eps)) "
                f"= {t_min:.12g}"
            )
        T = cfg.T
    return WeightParams(
        rho0=rho0,
        rho1=rho1,
        rho=rho,
        T=T,
        y=cfg.beta,
        eps=cfg.eps,
        delta=cfg.delta_fraction * rho,
        R=cfg.R,
        r=cfg.r,
        time_interval=cfg.time_interval,
    )


def psi(p: WeightParams, t, x):
    """The quadratic weight psi(t, x) = (x - y)^2 - (1 - eps) t^2."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return (x - p.y) ** 2 - (1.0 - p.eps) * t**2


def grad_margin(p: WeightParams, t, x):
    """|grad_x psi|^2 - |d_t psi|^2 = 4((x-y)^2 - (1-eps)^2 t^2).

    Positivity of this quantity is the non-null-gradient part of the
    pseudoconvexity condition.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return 4.0 * ((x - p.y) ** 2 - (1.0 - p.eps) ** 2 * t**2)


@dataclass(frozen=True)
class Region:
    """Pointwise membership descriptor for the regions used in error norms.

    kinds: "Q" (full cylinder), "omega_T" (data set), "level" (psi > s),
    "B" (psi > rho), "B_kappa" (psi > kappa*rho), "Q_minus_B" (psi <= rho).
    """

    kind: str
    s: float | None = None
    kappa: float | None = None

    @staticmethod
    def full() -> "Region":
        return Region("Q")

    @staticmethod
    def omega_T() -> "Region":
        return Region("omega_T")

    @staticmethod
    def level(s: float) -> "Region":
        return Region("level", s=s)

    @staticmethod
    def B() -> "Region":
        return Region("B")

    @staticmethod
    def B_kappa(kappa: float) -> "Region":
        if not (0.0 < kappa <= 1.0):
            raise ConfigurationError(f"kappa must be in (0, 1], got {kappa}")
        return Region("B_kappa", kappa=kappa)

    @staticmethod
    def complement_of_B() -> "Region":
        return Region("Q_minus_B")

    def label(self) -> str:
        if self.kind == "B_kappa":
            return f"B_{self.kappa:g}"
        if self.kind == "level":
            return f"level_{self.s:g}"
        return {"Q": "Q", "omega_T": "omega", "B": "B", "Q_minus_B": "QminusB"}[
            self.kind
        ]


def region_contains(p: WeightParams, reg: Region, t, x):
    """Vectorized membership predicate; B_kappa-style sets use strict psi > s."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    in_q = (t >= p.t_lo) & (t <= p.t_hi) & (x >= -p.R) & (x <= 0.0)
    if reg.kind == "Q":
        return in_q
    if reg.kind == "omega_T":
        return in_q & (x < -p.r)
    if reg.kind == "level":
        return in_q & (psi(p, t, x) > reg.s)
    if reg.kind == "B":
        return in_q & (psi(p, t, x) > p.rho)
    if reg.kind == "B_kappa":
        return in_q & (psi(p, t, x) > reg.kappa * p.rho)
    if reg.kind == "Q_minus_B":
        return in_q & (psi(p, t, x) <= p.rho)
    raise ConfigurationError(f"unknown region kind {reg.kind!r}")


@dataclass(frozen=True)
class PseudoconvexityReport:
    passed: bool
    n_samples: int
    hessian_max_dev: float
    hessian_min_value: float
    grad_min_margin: float
    worst_point: tuple[float, float] | None
    message: str = ""


def _sample_q_tilde(p: WeightParams, n: int, rng: np.random.Generator):
    """Rejection-sample n points of Q_tilde = {psi > delta}."""
    ts = np.empty(0)
    xs = np.empty(0)
    # Q_tilde occupies an O(1) fraction of Q for sane parameters
    while ts.size < n:
        m = max(4 * (n - ts.size), 256)
        tc = rng.uniform(p.t_lo, p.t_hi, size=m)
        xc = rng.uniform(-p.R, 0.0, size=m)
        keep = psi(p, tc, xc) > p.delta
        ts = np.concatenate([ts, tc[keep]])
        xs = np.concatenate([xs, xc[keep]])
    return ts[:n], xs[:n]


def check_pseudoconvexity(
    p: WeightParams, sample_count: int, rng_seed: int = 0
) -> PseudoconvexityReport:
    """Verify the two pseudoconvexity conditions by randomized sampling.

    (i) On random null vectors X = (a, theta), |theta| = |a| != 0, the Hessian
    quadratic form of psi equals 2 a^2 eps and must be positive. The form is
    evaluated through second differences of psi, which are exact for a
    quadratic weight, so this is an independent check of the implemented psi.
    (ii) At random points of Q_tilde the spacetime differential of psi is not
    null: |grad psi|^2 - |d_t psi|^2 > 0.
    """
    if sample_count < 1:
        raise ConfigurationError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    ts, xs = _sample_q_tilde(p, sample_count, rng)

    a = rng.uniform(0.5, 1.5, size=sample_count) * rng.choice(
        [-1.0, 1.0], size=sample_count
    )
    theta = np.abs(a) * rng.choice([-1.0, 1.0], size=sample_count)

    # exact second difference of a quadratic: psi(p+X) - 2 psi(p) + psi(p-X)
    hess_form = (
        psi(p, ts + a, xs + theta) - 2.0 * psi(p, ts, xs) + psi(p, ts - a, xs - theta)
    )
    expected = 2.0 * a**2 * p.eps
    scale = np.maximum(np.abs(expected), 1.0)
    dev = np.abs(hess_form - expected) / scale
    hess_ok = bool(np.all(dev <= 1e-12) and np.all(hess_form > 0.0))

    margins = grad_margin(p, ts, xs)
    i_min = int(np.argmin(margins))
    grad_ok = bool(margins[i_min] > 0.0)

    passed = hess_ok and grad_ok
    worst = None if passed else (float(ts[i_min]), float(xs[i_min]))
    msg = ""
    if not hess_ok:
        j = int(np.argmax(dev)) if np.any(dev > 1e-12) else int(np.argmin(hess_form))
        worst = (float(ts[j]), float(xs[j]))
        msg = (
            "Hessian form on null vectors is degenerate or deviates from 2 a^2 eps"
            f" (value {hess_form[j]:.3e}, expected {expected[j]:.3e})"
        )
    elif not grad_ok:
        msg = (
            f"gradient margin nonpositive at (t, x) = {worst}:"
            f" {margins[i_min]:.3e}"
        )
    return PseudoconvexityReport(
        passed=passed,
        n_samples=sample_count,
        hessian_max_dev=float(np.max(dev)),
        hessian_min_value=float(np.min(hess_form)),
        grad_min_margin=float(margins[i_min]),
        worst_point=worst,
        message=msg,
    )


def gamma_contains(cfg: GeometryConfig, T: float, t: float, x_b: float) -> bool:
    """Membership in the light-cone boundary set on the forward interval.

    Gamma = {(t, x) in [0, T] x dOmega : dist(x, omega) <= T/2 - |t - T/2|},
    with dist(-R, omega) = 0 and dist(0, omega) = r in one space dimension.
    """
    if cfg.time_interval != "forward":
        raise UsageError(
            "gamma_contains is defined on the forward interval [0, T] only"
        )
    if not (0.0 <= t <= T):
        raise ConfigurationError(f"t={t} outside [0, {T}]")
    if abs(x_b - (-cfg.R)) < 1e-12:
        dist = 0.0
    elif abs(x_b) < 1e-12:
        dist = cfg.r
    else:
        raise ConfigurationError(f"x_b={x_b} is not a boundary point of (-R, 0)")
    return dist <= T / 2.0 - abs(t - T / 2.0)
