"""Finite element spaces: dG(q) in time tensor CG(k) in space, plus the
finite-dimensional trace spaces on the lateral boundary.

Coefficient vectors are flat numpy arrays ordered slab-major:
``coeff[n * (q+1) * n_sp + a * n_sp + i]`` is the value at time node a of slab
n and spatial node i. Time nodes are Gauss-Lobatto per slab (for q >= 1 the
slab endpoints are nodes, which keeps interface jumps sparse); spatial nodes
are equispaced Lagrange nodes per cell, shared at cell boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import LagrangeBasis, equispaced_nodes, gauss_lobatto_nodes, gauss_rule
from .exceptions import ConfigurationError, UsageError
from .geometry import GeometryConfig, derive_params, gamma_contains
from .mesh import SpaceTimeMesh

__all__ = [
    "SlabSpace",
    "FieldPair",
    "TraceSpace",
    "LiftedField",
    "interpolate",
    "lift",
    "eval_field",
    "build_trace_space",
    "check_A1",
]


class SlabSpace:
    """Tensor-product space of one scalar space-time field."""

    def __init__(self, mesh: SpaceTimeMesh, k: int, q: int):
        if k < 1:
            raise ConfigurationError(f"spatial degree k must be >= 1, got {k}")
        if q < 0:
            raise ConfigurationError(f"time degree q must be >= 0, got {q}")
        self.mesh = mesh
        self.k = k
        self.q = q
        self.n_sp = k * mesh.n_x + 1
        self.dofs_per_slab = (q + 1) * self.n_sp
        self.global_dof_count = mesh.N * self.dofs_per_slab
        self.time_basis = LagrangeBasis(gauss_lobatto_nodes(q))
        self.space_basis = LagrangeBasis(equispaced_nodes(k))
        # global spatial FE nodes: per-cell equispaced nodes, endpoints shared
        nodes = mesh.spatial_nodes
        local = self.space_basis.nodes
        per_cell = nodes[:-1, None] + mesh.h_x * local[None, :k]
        self.fe_nodes = np.append(per_cell.ravel(), nodes[-1])
        assert self.fe_nodes.size == self.n_sp

    # --- indexing -------------------------------------------------------
    def dof(self, n: int, a: int, i: int) -> int:
        return n * self.dofs_per_slab + a * self.n_sp + i

    def reshape(self, w: np.ndarray) -> np.ndarray:
        """View coefficients as (N, q+1, n_sp)."""
        return np.asarray(w).reshape(self.mesh.N, self.q + 1, self.n_sp)

    def time_nodes(self, n: int) -> np.ndarray:
        t0, t1 = self.mesh.slabs[n]
        return t0 + (t1 - t0) * self.time_basis.nodes

    # --- point location -------------------------------------------------
    def _slab_index(self, t, side: str):
        t = np.asarray(t, dtype=float)
        base = (t - self.mesh.t_lo) / self.mesh.h_t
        if side == "right":
            n = np.floor(base + 1e-12)
        elif side == "left":
            n = np.ceil(base - 1e-12) - 1.0
        else:
            raise ConfigurationError(f"slab_side must be 'left' or 'right', got {side!r}")
        return np.clip(n, 0, self.mesh.N - 1).astype(int)

    def _cell_index(self, x):
        x = np.asarray(x, dtype=float)
        c = np.floor((x + self.mesh.cfg.R) / self.mesh.h_x)
        return np.clip(c, 0, self.mesh.n_x - 1).astype(int)

    # --- evaluation -----------------------------------------------------
    def eval_many(self, w: np.ndarray, t, x, side: str = "right") -> np.ndarray:
        """Vectorized point evaluation; at slab interfaces the limit from the
        requested side is returned."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, x = np.broadcast_arrays(t, x)
        shape = t.shape
        t = t.ravel()
        x = x.ravel()
        w3 = self.reshape(w)
        n = self._slab_index(t, side)
        tau = (t - self.mesh.slabs[n, 0]) / self.mesh.h_t
        c = self._cell_index(x)
        xi = (x - self.fe_nodes[c * self.k]) / self.mesh.h_x
        tvals = self.time_basis.values(tau)  # (q+1, npts)
        svals = self.space_basis.values(xi)  # (k+1, npts)
        loc = c[:, None] * self.k + np.arange(self.k + 1)[None, :]
        coefs = w3[n[:, None, None], np.arange(self.q + 1)[None, :, None], loc[:, None, :]]
        out = np.einsum("pal,ap,lp->p", coefs, tvals, svals)
        return out.reshape(shape)

    def spatial_eval_many(self, coeffs_sp: np.ndarray, x) -> np.ndarray:
        """Evaluate a purely spatial coefficient vector (length n_sp)."""
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        c = self._cell_index(x)
        xi = (x - self.fe_nodes[c * self.k]) / self.mesh.h_x
        svals = self.space_basis.values(xi)
        loc = c[:, None] * self.k + np.arange(self.k + 1)[None, :]
        return np.einsum("pl,lp->p", coeffs_sp[loc], svals)

    def interface_jumps(self, w: np.ndarray) -> np.ndarray:
        """Spatial coefficient vectors of the jumps [w^n], n = 1..N-1."""
        w3 = self.reshape(w)
        if self.mesh.N < 2:
            return np.zeros((0, self.n_sp))
        bot, top = self.interface_time_dofs()
        return w3[1:, bot, :] - w3[:-1, top, :]

    def interface_time_dofs(self) -> tuple[int, int]:
        """(bottom, top) local time-node indices carrying the slab traces."""
        if self.q == 0:
            return 0, 0
        return 0, self.q

    def trace_bottom(self, w: np.ndarray, n: int) -> np.ndarray:
        """Spatial coefficients of w at t_n^+ (only exact for q != 0 nodal at
        endpoints; for q = 0 the constant value)."""
        w3 = self.reshape(w)
        bot, top = self.interface_time_dofs()
        if self.q == 0:
            return w3[n, 0, :]
        return w3[n, bot, :]

    def trace_top(self, w: np.ndarray, n: int) -> np.ndarray:
        w3 = self.reshape(w)
        bot, top = self.interface_time_dofs()
        return w3[n, top, :]


@dataclass
class FieldPair:
    """Coefficient pair (u1, u2) on a shared SlabSpace."""

    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.shape != self.u2.shape:
            raise ConfigurationError("u1 and u2 must conform to the same space")

    @staticmethod
    def zeros(space: SlabSpace) -> "FieldPair":
        z = np.zeros(space.global_dof_count)
        return FieldPair(z.copy(), z.copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])


def _call_vectorized(f: Callable, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    try:
        v = np.asarray(f(t, x), dtype=float)
        if v.shape == t.shape:
            return v
    except (TypeError, ValueError):
        pass
    return np.vectorize(lambda a, b: float(f(a, b)))(t, x)


def interpolate(space: SlabSpace, f: Callable) -> np.ndarray:
    """Tensor nodal interpolant: coefficients are f at the (time, space) nodes."""
    N, q, n_sp = space.mesh.N, space.q, space.n_sp
    ts = np.empty((N, q + 1))
    for n in range(N):
        ts[n] = space.time_nodes(n)
    T = np.broadcast_to(ts[:, :, None], (N, q + 1, n_sp))
    X = np.broadcast_to(space.fe_nodes[None, None, :], (N, q + 1, n_sp))
    vals = _call_vectorized(f, np.ascontiguousarray(T), np.ascontiguousarray(X))
    return vals.ravel().copy()


def eval_field(
    space: SlabSpace, w: np.ndarray, t: float, x: float, slab_side: str = "right"
) -> float:
    """Single-point evaluation with one-sided limits at slab interfaces."""
    return float(space.eval_many(w, np.array([t]), np.array([x]), side=slab_side)[0])


class LiftedField:
    """Continuous-in-time postprocessing L_h w of a dG-in-time field.

    On the first slab L_h w = w; on slab n >= 1 the interface jump [w^n] is
    subtracted with the linear ramp theta_n(t) = (t_{n+1} - t)/(t_{n+1} - t_n),
    which removes the discontinuity at every interface.
    """

    def __init__(self, space: SlabSpace, w: np.ndarray):
        self.space = space
        self.w = np.asarray(w, dtype=float)
        self.jumps = space.interface_jumps(w)  # (N-1, n_sp), jump at t_n for n>=1

    def __call__(self, t, x):
        space = self.space
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, x = np.broadcast_arrays(t, x)
        shape = t.shape
        tf = t.ravel()
        xf = x.ravel()
        raw = space.eval_many(self.w, tf, xf, side="right")
        n = space._slab_index(tf, "right")
        mask = n >= 1
        if np.any(mask) and self.jumps.size:
            theta = (space.mesh.slabs[n[mask], 1] - tf[mask]) / space.mesh.h_t
            c = space._cell_index(xf[mask])
            xi = (xf[mask] - space.fe_nodes[c * space.k]) / space.mesh.h_x
            svals = space.space_basis.values(xi)
            loc = c[:, None] * space.k + np.arange(space.k + 1)[None, :]
            jump_coefs = self.jumps[n[mask] - 1]  # (npts, n_sp)
            rows = np.arange(loc.shape[0])[:, None]
            jv = np.einsum("pl,lp->p", jump_coefs[rows, loc], svals)
            raw = raw.copy()
            raw[mask] -= jv * theta
        return raw.reshape(shape)


def lift(space: SlabSpace, w: np.ndarray) -> LiftedField:
    return LiftedField(space, w)


# ----------------------------------------------------------------------
# finite-dimensional trace spaces on Sigma = I_T x {-R, 0}
# ----------------------------------------------------------------------


class TraceSpace:
    """Span of closed-form boundary functions with Gram matrices on Sigma.

    ``funcs[m](t, x)`` must be evaluable for x in {-R, 0}; the Gram matrix on
    Sigma is computed with composite Gauss quadrature in time (12 points per
    panel), which resolves the trigonometric families used here to machine
    precision.
    """

    def __init__(
        self,
        funcs: Sequence[Callable],
        t_lo: float,
        t_hi: float,
        R: float,
        n_panels: int = 64,
        labels: Sequence[str] | None = None,
    ):
        self.funcs = list(funcs)
        self.M = len(self.funcs)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.R = float(R)
        self.labels = list(labels) if labels is not None else [
            f"phi_{m+1}" for m in range(self.M)
        ]
        self._n_panels = max(n_panels, 8)
        self.gram_sigma = self._gram_on_intervals(
            [(-R, t_lo, t_hi), (0.0, t_lo, t_hi)]
        )
        if self.M and np.linalg.eigvalsh(self.gram_sigma)[0] <= 0.0:
            raise ConfigurationError(
                "trace basis is linearly dependent on Sigma (Gram not SPD)"
            )

    def boundary_points(self) -> tuple[float, float]:
        return (-self.R, 0.0)

    def eval_on_boundary(self, t, x_b: float) -> np.ndarray:
        """Values of all basis functions at times t on boundary point x_b:
        shape (M, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.M, t.size))
        for m, f in enumerate(self.funcs):
            out[m] = np.asarray(f(t, np.full_like(t, x_b)), dtype=float)
        return out

    def _gram_on_intervals(self, pieces) -> np.ndarray:
        """Gram over a union of time intervals on given boundary points;
        pieces = [(x_b, a, b), ...]."""
        G = np.zeros((self.M, self.M))
        pts, wts = gauss_rule(12)
        for x_b, a, b in pieces:
            if b <= a:
                continue
            edges = np.linspace(a, b, self._n_panels + 1)
            for lo, hi in zip(edges[:-1], edges[1:]):
                tq = lo + (hi - lo) * pts
                wq = (hi - lo) * wts
                vals = self.eval_on_boundary(tq, x_b)
                G += (vals * wq) @ vals.T
        return G

    def gram_gamma(self, gamma_predicate: Callable[[float, float], bool]) -> np.ndarray:
        """Gram over Gamma, located per boundary point by bisection on the
        predicate (each 1D Gamma slice is a symmetric interval in t)."""
        pieces = []
        for x_b in self.boundary_points():
            interval = _gamma_interval(gamma_predicate, x_b, self.t_lo, self.t_hi)
            if interval is not None:
                pieces.append((x_b, interval[0], interval[1]))
        return self._gram_on_intervals(pieces)


def _gamma_interval(pred, x_b: float, t_lo: float, t_hi: float):
    """The Gamma slice at a boundary point is [d, T-d] by construction; find
    it from the predicate alone (bisection, tolerance 1e-12)."""
    mid = 0.5 * (t_lo + t_hi)
    if not pred(mid, x_b):
        return None
    lo, hi = t_lo, mid
    if pred(lo, x_b):
        left = lo
    else:
        for _ in range(60):
            m = 0.5 * (lo + hi)
            if pred(m, x_b):
                hi = m
            else:
                lo = m
        left = hi
    lo, hi = mid, t_hi
    if pred(hi, x_b):
        right = hi
    else:
        for _ in range(60):
            m = 0.5 * (lo + hi)
            if pred(m, x_b):
                lo = m
            else:
                hi = m
        right = lo
    return left, right


def fourier_mode(m: int, amplitude: float = 1.0) -> Callable:
    """cos(m pi t / 4) cos(m pi x / 4): an exact 1D wave solution."""
    a = m * np.pi / 4.0

    def f(t, x):
        return amplitude * np.cos(a * np.asarray(t)) * np.cos(a * np.asarray(x))

    return f


def build_trace_space(cfg: GeometryConfig, M: int, family: str = "fourier_modes") -> TraceSpace:
    """Standard trace family on Sigma for the configured time interval."""
    if M < 1:
        raise ConfigurationError(f"trace dimension M must be >= 1, got {M}")
    if family != "fourier_modes":
        raise ConfigurationError(f"unknown trace family {family!r}")
    p = derive_params(cfg)
    funcs = [fourier_mode(m) for m in range(1, M + 1)]
    return TraceSpace(funcs, p.t_lo, p.t_hi, cfg.R,
                      labels=[f"phi_{m}" for m in range(1, M + 1)])


def check_A1(
    ts: TraceSpace,
    gamma_predicate: Callable[[float, float], bool],
    tol: float = 1e-10,
) -> dict:
    """Injectivity of restriction-to-Gamma on the trace space.

    On a finite-dimensional space, phi|_Gamma = 0 => phi = 0 is equivalent to
    positive definiteness of the Gamma Gram matrix; the margin is the
    scale-free ratio lambda_min(gram_Gamma) / lambda_max(gram_Sigma).
    """
    if ts.M == 0:
        return {"holds": True, "margin": float("inf")}
    gram_gamma = ts.gram_gamma(gamma_predicate)
    lam_min = float(np.linalg.eigvalsh(gram_gamma)[0])
    lam_max = float(np.linalg.eigvalsh(ts.gram_sigma)[-1])
    margin = lam_min / lam_max
    return {"holds": bool(margin > tol), "margin": margin}


def default_gamma_predicate(cfg: GeometryConfig, T: float) -> Callable:
    if cfg.time_interval != "forward":
        raise UsageError("Gamma is defined on the forward interval only")
    return lambda t, x_b: gamma_contains(cfg, T, t, x_b)
