"""Bilinear forms of the stabilized primal-dual space-time method.

The method couples a primal pair U = (u1, u2) (displacement and velocity),
an optional boundary multiplier mu in the broken-in-time trace space, and a
dual pair Z = (z1, z2). The first-order optimality system is symmetric
indefinite and block-tridiagonal in the slab index:

    [ S + aug    aug_Umu    A^T ] [ U  ]   [ (data, w1)_omega ]
    [ aug_muU    G + J_mu    0  ] [ mu ] = [ 0                ]
    [ A          0          -S* ] [ Z  ]   [ 0                ]

S collects the data mass on omega_T, the gradient-jump, Galerkin-least-
squares, velocity-compatibility and Tikhonov stabilizers plus the slab-jump
penalties; S* is the dual stabilizer. All element integrals are Gauss
quadrature of exactness degree 2*max(k, q) + 3 per direction, exact for every
polynomial integrand appearing here. The mesh width h = h_x carries all
stabilizer scalings; the slab width is comparable by construction.

Assembly may be parallelized over slabs; the assembled system is immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import LagrangeBasis, equispaced_nodes, gauss_lobatto_nodes, gauss_rule
from .exceptions import AssemblyError, ConfigurationError
from .mesh import SpaceTimeMesh
from .spaces import FieldPair, SlabSpace, TraceSpace

__all__ = [
    "StabilizationWeights",
    "DofLayout",
    "SaddleSystem",
    "assemble_A",
    "assemble_primal_stab",
    "assemble_jump_stab",
    "assemble_dual_stab",
    "assemble_data_mass",
    "assemble_saddle",
    "spectral_system",
    "mass_blocks",
    "triple_norm",
]


@dataclass(frozen=True)
class StabilizationWeights:
    """Penalty constants of the stabilizers.

    c_J, c_G, c_I0 are relative weights inside the slab-local primal
    stabilizer, which carries the overall scale c_primal; c_data scales the
    data misfit and c_dual the dual stabilizer. The defaults put the data
    term far above the residual stabilizers, which is what makes the optimal
    rate visible in the data set and in the Hoelder region.

    gamma = 0 is admissible only together with a finite-dimensional trace
    space (otherwise the stabilization norm degenerates).
    """

    gamma: float = 1e-4
    c_data: float = 1e4
    c_primal: float = 1e-4
    c_dual: float = 1.0
    c_J: float = 1.0
    c_G: float = 1.0
    c_I0: float = 1.0
    c_jump1: float = 1.0
    c_jump2: float = 1.0
    c_dual_sigma: float = 1.0

    def __post_init__(self):
        for name in (
            "c_data", "c_primal", "c_dual",
            "c_J", "c_G", "c_I0", "c_jump1", "c_jump2", "c_dual_sigma",
        ):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be positive")
        if self.gamma < 0.0:
            raise ConfigurationError("gamma must be >= 0")


@dataclass(frozen=True)
class DofLayout:
    """Per-slab unknown layout [u1 | u2 | mu | z1 | z2]."""

    N: int
    P: int
    Pd: int
    M_trace: int = 0

    @property
    def block_size(self) -> int:
        return 2 * self.P + self.M_trace + 2 * self.Pd

    @property
    def total(self) -> int:
        return self.N * self.block_size

    @property
    def u1(self) -> slice:
        return slice(0, self.P)

    @property
    def u2(self) -> slice:
        return slice(self.P, 2 * self.P)

    @property
    def mu(self) -> slice:
        return slice(2 * self.P, 2 * self.P + self.M_trace)

    @property
    def z1(self) -> slice:
        o = 2 * self.P + self.M_trace
        return slice(o, o + self.Pd)

    @property
    def z2(self) -> slice:
        o = 2 * self.P + self.M_trace + self.Pd
        return slice(o, o + self.Pd)

    def pack(self, U: FieldPair, mu: np.ndarray | None, Z: FieldPair | None) -> np.ndarray:
        x = np.zeros(self.total)
        xs = x.reshape(self.N, self.block_size)
        xs[:, self.u1] = U.u1.reshape(self.N, self.P)
        xs[:, self.u2] = U.u2.reshape(self.N, self.P)
        if self.M_trace:
            if mu is not None:
                xs[:, self.mu] = np.asarray(mu, dtype=float).reshape(self.N, self.M_trace)
        if Z is not None and self.Pd:
            xs[:, self.z1] = Z.u1.reshape(self.N, self.Pd)
            xs[:, self.z2] = Z.u2.reshape(self.N, self.Pd)
        return x

    def unpack(self, x: np.ndarray):
        xs = np.asarray(x).reshape(self.N, self.block_size)
        U = FieldPair(xs[:, self.u1].ravel().copy(), xs[:, self.u2].ravel().copy())
        mu = xs[:, self.mu].ravel().copy() if self.M_trace else None
        Z = (
            FieldPair(xs[:, self.z1].ravel().copy(), xs[:, self.z2].ravel().copy())
            if self.Pd
            else None
        )
        return U, mu, Z

    def flip_dual(self, x: np.ndarray) -> np.ndarray:
        """Return x with the dual components negated (for the norm identity)."""
        y = np.array(x, dtype=float, copy=True).reshape(self.N, self.block_size)
        y[:, self.z1] *= -1.0
        y[:, self.z2] *= -1.0
        return y.ravel()


class SaddleSystem:
    """Assembled block-tridiagonal symmetric system.

    diag_blocks[n] is dense; coupling[n] is the sparse block coupling slab n
    to slab n+1 (rows in slab n+1, columns in slab n).
    """

    def __init__(self, layout, diag_blocks, coupling, rhs, meta=None):
        self.layout = layout
        self.diag_blocks = diag_blocks
        self.coupling = coupling
        self.rhs = np.asarray(rhs, dtype=float)
        self.meta = meta or {}

    def matvec(self, x: np.ndarray) -> np.ndarray:
        m = self.layout.block_size
        N = self.layout.N
        xs = np.asarray(x).reshape(N, m)
        ys = np.zeros_like(xs)
        for n in range(N):
            ys[n] += self.diag_blocks[n] @ xs[n]
        for n, C in enumerate(self.coupling):
            ys[n + 1] += C @ xs[n]
            ys[n] += C.T @ xs[n + 1]
        return ys.ravel()

    def to_dense(self) -> np.ndarray:
        m = self.layout.block_size
        N = self.layout.N
        A = np.zeros((N * m, N * m))
        for n in range(N):
            A[n * m : (n + 1) * m, n * m : (n + 1) * m] = self.diag_blocks[n]
        for n, C in enumerate(self.coupling):
            Cd = C.toarray() if sp.issparse(C) else np.asarray(C)
            A[(n + 1) * m : (n + 2) * m, n * m : (n + 1) * m] = Cd
            A[n * m : (n + 1) * m, (n + 1) * m : (n + 2) * m] = Cd.T
        return A

    def symmetry_error(self) -> float:
        err = 0.0
        for D in self.diag_blocks:
            scale = max(np.abs(D).max(), 1.0)
            err = max(err, np.abs(D - D.T).max() / scale)
        return err

    def norm_estimate(self) -> float:
        v = max(np.abs(D).max() for D in self.diag_blocks)
        if self.coupling:
            v = max(v, max(np.abs(C).max() for C in self.coupling))
        return float(v)


# ----------------------------------------------------------------------
# element matrices
# ----------------------------------------------------------------------


def _time_matrices(q_test: int, q_trial: int, h_t: float) -> dict:
    """Slab time matrices; rows test, columns trial.

    M: (l_b, l_a), D_trial: (l_b', l_a), D_test: (l_b, l_a'), DD: (l_b', l_a').
    """
    bt = LagrangeBasis(gauss_lobatto_nodes(q_test))
    br = LagrangeBasis(gauss_lobatto_nodes(q_trial))
    pts, wts = gauss_rule(max(q_test, q_trial) + 2)
    vt, dvt = bt.values(pts), bt.derivs(pts)
    vr, dvr = br.values(pts), br.derivs(pts)
    return {
        "M": h_t * (vt * wts) @ vr.T,
        "D_trial": (vt * wts) @ dvr.T,
        "D_test": (dvt * wts) @ vr.T,
        "DD": (dvt * wts) @ dvr.T / h_t,
    }


def _spatial_matrices(mesh: SpaceTimeMesh, k_test: int, k_trial: int) -> dict:
    """Global 1D matrices on the CG spaces (rows test, columns trial)."""
    bt = LagrangeBasis(equispaced_nodes(k_test))
    br = LagrangeBasis(equispaced_nodes(k_trial))
    pts, wts = gauss_rule(max(k_test, k_trial) + 2)
    vt, d1t, d2t = bt.values(pts), bt.derivs(pts), bt.second_derivs(pts)
    vr, d1r, d2r = br.values(pts), br.derivs(pts), br.second_derivs(pts)
    h = mesh.h_x
    n_t = k_test * mesh.n_x + 1
    n_r = k_trial * mesh.n_x + 1

    Me = h * (vt * wts) @ vr.T
    Ke = (d1t * wts) @ d1r.T / h
    D2Me = (vt * wts) @ d2r.T / h  # int phi_j'' phi_i
    D2D2e = (d2t * wts) @ d2r.T / h**3

    M = np.zeros((n_t, n_r))
    K = np.zeros((n_t, n_r))
    M_omega = np.zeros((n_t, n_r))
    D2M = np.zeros((n_t, n_r))
    D2D2 = np.zeros((n_t, n_r))
    omega_set = set(int(c) for c in mesh.omega_cells)
    for c in range(mesh.n_x):
        it = c * k_test
        ir = c * k_trial
        M[it : it + k_test + 1, ir : ir + k_trial + 1] += Me
        K[it : it + k_test + 1, ir : ir + k_trial + 1] += Ke
        D2M[it : it + k_test + 1, ir : ir + k_trial + 1] += D2Me
        D2D2[it : it + k_test + 1, ir : ir + k_trial + 1] += D2D2e
        if c in omega_set:
            M_omega[it : it + k_test + 1, ir : ir + k_trial + 1] += Me

    # facet gradient jumps: [phi'](x_f) for each interior cell boundary
    dt0, dt1 = bt.derivs(np.array([0.0, 1.0])).T / h
    dr0, dr1 = br.derivs(np.array([0.0, 1.0])).T / h
    J = np.zeros((n_t, n_r))
    for f in mesh.interior_facets:
        c_left, c_right = f - 1, f
        jt = np.zeros(n_t)
        jt[c_right * k_test : c_right * k_test + k_test + 1] += dt0
        jt[c_left * k_test : c_left * k_test + k_test + 1] -= dt1
        jr = np.zeros(n_r)
        jr[c_right * k_trial : c_right * k_trial + k_trial + 1] += dr0
        jr[c_left * k_trial : c_left * k_trial + k_trial + 1] -= dr1
        J += np.outer(jt, jr)

    # boundary point values/derivatives at x = -R (cell 0) and x = 0 (last)
    v0t = np.zeros(n_t)
    v0t[: k_test + 1] = bt.values(np.array([0.0]))[:, 0]
    v1t = np.zeros(n_t)
    v1t[-(k_test + 1) :] = bt.values(np.array([1.0]))[:, 0]
    v0r = np.zeros(n_r)
    v0r[: k_trial + 1] = br.values(np.array([0.0]))[:, 0]
    v1r = np.zeros(n_r)
    v1r[-(k_trial + 1) :] = br.values(np.array([1.0]))[:, 0]
    d0r = np.zeros(n_r)
    d0r[: k_trial + 1] = br.derivs(np.array([0.0]))[:, 0] / h
    d1r_g = np.zeros(n_r)
    d1r_g[-(k_trial + 1) :] = br.derivs(np.array([1.0]))[:, 0] / h

    Bmass = np.outer(v0t, v0r) + np.outer(v1t, v1r)
    # n grad u = -u'(-R) at the left boundary and +u'(0) at the right one
    Bflux = np.outer(v1t, d1r_g) - np.outer(v0t, d0r)
    return {
        "M": M,
        "K": K,
        "M_omega": M_omega,
        "D2M": D2M,
        "D2D2": D2D2,
        "J": J,
        "Bmass": Bmass,
        "Bflux": Bflux,
        "bvals_left": v0r,
        "bvals_right": v1r,
    }


# ----------------------------------------------------------------------
# per-slab blocks
# ----------------------------------------------------------------------


def _check_same_mesh(space: SlabSpace, dual_space: SlabSpace):
    if space.mesh is not dual_space.mesh:
        raise AssemblyError("primal and dual spaces must share the mesh")


def _A_slab(space: SlabSpace, dual_space: SlabSpace) -> np.ndarray:
    """Per-slab block of the wave form A[U, Y]; rows (y1, y2), cols (u1, u2)."""
    _check_same_mesh(space, dual_space)
    mesh = space.mesh
    tm = _time_matrices(dual_space.q, space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, dual_space.k, space.k)
    Pd, P = dual_space.dofs_per_slab, space.dofs_per_slab
    A = np.zeros((2 * Pd, 2 * P))
    A[:Pd, :P] = np.kron(tm["M"], sm["K"]) - np.kron(tm["M"], sm["Bflux"])
    A[:Pd, P:] = np.kron(tm["D_trial"], sm["M"])
    A[Pd:, :P] = np.kron(tm["D_trial"], sm["M"])
    A[Pd:, P:] = -np.kron(tm["M"], sm["M"])
    return A


def _primal_slab(space: SlabSpace, weights: StabilizationWeights) -> np.ndarray:
    """Slab-local primal stabilizer S (gradient-jump, GLS, velocity
    compatibility, Tikhonov); the trace term is handled by the augmented
    multiplier blocks, never here."""
    mesh = space.mesh
    h = mesh.h_x
    s = min(space.q, space.k)
    tm = _time_matrices(space.q, space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, space.k, space.k)
    P = space.dofs_per_slab
    S = np.zeros((2 * P, 2 * P))
    # J: facet gradient jumps on u1
    S[:P, :P] += weights.c_primal * weights.c_J * h * np.kron(tm["M"], sm["J"])
    # G: element residual (dt u2 - dxx u1)
    cg = weights.c_primal * weights.c_G * h**2
    S[P:, P:] += cg * np.kron(tm["DD"], sm["M"])
    S[:P, P:] -= cg * np.kron(tm["D_trial"], sm["D2M"].T)
    S[P:, :P] -= cg * np.kron(tm["D_test"], sm["D2M"])
    S[:P, :P] += cg * np.kron(tm["M"], sm["D2D2"])
    # I0: u2 = dt u1
    ci = weights.c_primal * weights.c_I0
    S[P:, P:] += ci * np.kron(tm["M"], sm["M"])
    S[:P, P:] -= ci * np.kron(tm["D_test"], sm["M"])
    S[P:, :P] -= ci * np.kron(tm["D_trial"], sm["M"])
    S[:P, :P] += ci * np.kron(tm["DD"], sm["M"])
    # Tikhonov
    if weights.gamma > 0.0:
        S[:P, :P] += weights.gamma * h ** (2 * s) * np.kron(tm["M"], sm["M"])
    return S


def _data_mass_slab(space: SlabSpace) -> np.ndarray:
    mesh = space.mesh
    tm = _time_matrices(space.q, space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, space.k, space.k)
    P = space.dofs_per_slab
    D = np.zeros((2 * P, 2 * P))
    D[:P, :P] = np.kron(tm["M"], sm["M_omega"])
    return D


def _dual_slab(dual_space: SlabSpace, weights: StabilizationWeights) -> np.ndarray:
    mesh = dual_space.mesh
    tm = _time_matrices(dual_space.q, dual_space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, dual_space.k, dual_space.k)
    Pd = dual_space.dofs_per_slab
    Sd = np.zeros((2 * Pd, 2 * Pd))
    Sd[:Pd, :Pd] = (
        np.kron(tm["M"], sm["M"])
        + np.kron(tm["M"], sm["K"])
        + weights.c_dual_sigma / mesh.h_x * np.kron(tm["M"], sm["Bmass"])
    )
    Sd[Pd:, Pd:] = np.kron(tm["M"], sm["M"])
    return weights.c_dual * Sd


def _mass_slab(space: SlabSpace) -> np.ndarray:
    mesh = space.mesh
    tm = _time_matrices(space.q, space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, space.k, space.k)
    P = space.dofs_per_slab
    Mb = np.zeros((2 * P, 2 * P))
    Mb[:P, :P] = np.kron(tm["M"], sm["M"])
    Mb[P:, P:] = np.kron(tm["M"], sm["M"])
    return Mb


def _jump_weight_matrices(space: SlabSpace, weights: StabilizationWeights):
    """Spatial weight matrices of the slab-interface penalties."""
    mesh = space.mesh
    sm = _spatial_matrices(mesh, space.k, space.k)
    h = mesh.h_x
    W1 = weights.c_jump1 * (sm["M"] / h + h * sm["K"])
    W2 = weights.c_jump2 * sm["M"] / h
    return W1, W2


def _jump_insert(space: SlabSpace, W1, W2, sign_rows_top: bool):
    """Diagonal jump contribution at a slab's bottom (False) or top (True)
    interface trace, as a (2P, 2P) matrix."""
    P = space.dofs_per_slab
    n_sp = space.n_sp
    bot, top = space.interface_time_dofs()
    a = top if sign_rows_top else bot
    out = np.zeros((2 * P, 2 * P))
    sl = slice(a * n_sp, (a + 1) * n_sp)
    out[:P, :P][sl, sl] += W1
    out[P:, P:][sl, sl] += W2
    return out


def _jump_coupling(space: SlabSpace, W1, W2) -> sp.csr_matrix:
    """Coupling block (slab n+1 rows at its bottom trace, slab n columns at
    its top trace): -W on both components."""
    P = space.dofs_per_slab
    n_sp = space.n_sp
    bot, top = space.interface_time_dofs()
    rows_off = bot * n_sp
    cols_off = top * n_sp
    blk = sp.lil_matrix((2 * P, 2 * P))
    blk[rows_off : rows_off + n_sp, cols_off : cols_off + n_sp] = -W1
    blk[P + rows_off : P + rows_off + n_sp, P + cols_off : P + cols_off + n_sp] = -W2
    return blk.tocsr()


# ----------------------------------------------------------------------
# trace-space (augmented multiplier) blocks
# ----------------------------------------------------------------------


def _trace_blocks(space: SlabSpace, trace: TraceSpace):
    """Per-slab boundary blocks of (u1 - mu, w1 - eta)_Sigma.

    Returns (Bm, G_list, X_list, P_list):
      Bm      (2P, 2P)  boundary mass of u1 on Sigma^n (slab independent),
      G_list[n] (M, M)  trace Gram on Sigma^n,
      X_list[n] (2P, M) coupling (mu, w1)_Sigma^n (positive sign),
      P_list[n] (M, M)  pointwise boundary Gram at interface t_n, n=1..N-1.
    """
    mesh = space.mesh
    tm = _time_matrices(space.q, space.q, mesh.h_t)
    sm = _spatial_matrices(mesh, space.k, space.k)
    P = space.dofs_per_slab
    Bm = np.zeros((2 * P, 2 * P))
    Bm[:P, :P] = np.kron(tm["M"], sm["Bmass"])

    M = trace.M
    pts, wts = gauss_rule(12)
    tb = space.time_basis
    bvals = {"left": sm["bvals_left"], "right": sm["bvals_right"]}
    xb = {"left": -mesh.cfg.R, "right": 0.0}
    G_list, X_list = [], []
    for n in range(mesh.N):
        t0, t1 = mesh.slabs[n]
        tq = t0 + (t1 - t0) * pts
        wq = (t1 - t0) * wts
        lvals = tb.values(pts)  # (q+1, nq)
        G = np.zeros((M, M))
        X = np.zeros((2 * P, M))
        for side in ("left", "right"):
            phis = trace.eval_on_boundary(tq, xb[side])  # (M, nq)
            G += (phis * wq) @ phis.T
            # c[a, j] = int l_a(t) phi_j(t, b) dt
            c = (lvals * wq) @ phis.T  # (q+1, M)
            X[:P] += np.kron(c, bvals[side][:, None]).reshape(P, M)
        G_list.append(G)
        X_list.append(X)

    P_list = []
    for n in range(1, mesh.N):
        tn = mesh.slabs[n, 0]
        Pn = np.zeros((M, M))
        for side in ("left", "right"):
            v = trace.eval_on_boundary(np.array([tn]), xb[side])[:, 0]
            Pn += np.outer(v, v)
        P_list.append(Pn)
    return Bm, G_list, X_list, P_list


# ----------------------------------------------------------------------
# public global assemblies (slab-structured sparse matrices)
# ----------------------------------------------------------------------


def _slab_diag_sparse(block: np.ndarray, N: int) -> sp.csr_matrix:
    return sp.block_diag([sp.csr_matrix(block)] * N, format="csr")


def assemble_A(primal: SlabSpace, dual: SlabSpace) -> sp.csr_matrix:
    """Global matrix of the wave bilinear form; rows are dual-space dofs."""
    return _slab_diag_sparse(_A_slab(primal, dual), primal.mesh.N)


def assemble_primal_stab(
    space: SlabSpace,
    weights: StabilizationWeights,
    trace: TraceSpace | None = None,
) -> sp.csr_matrix:
    """Slab-local primal stabilizer on the (u1, u2) dof space."""
    if weights.gamma == 0.0 and trace is None:
        raise ConfigurationError(
            "gamma = 0 requires a finite-dimensional trace space; otherwise the"
            " stabilization norm is degenerate"
        )
    return _slab_diag_sparse(_primal_slab(space, weights), space.mesh.N)


def assemble_jump_stab(space: SlabSpace, weights: StabilizationWeights) -> sp.csr_matrix:
    """Slab-interface penalties; empty for a single slab."""
    N = space.mesh.N
    P2 = 2 * space.dofs_per_slab
    if N < 2:
        return sp.csr_matrix((P2 * N, P2 * N))
    W1, W2 = _jump_weight_matrices(space, weights)
    D_bot = _jump_insert(space, W1, W2, sign_rows_top=False)
    D_top = _jump_insert(space, W1, W2, sign_rows_top=True)
    C = _jump_coupling(space, W1, W2)
    rows, cols, vals = [], [], []

    def _add(block, r0, c0):
        B = sp.coo_matrix(block)
        rows.append(B.row + r0)
        cols.append(B.col + c0)
        vals.append(B.data)

    for n in range(N):
        if n >= 1:
            _add(D_bot, n * P2, n * P2)
        if n <= N - 2:
            _add(D_top, n * P2, n * P2)
    for n in range(N - 1):
        _add(C, (n + 1) * P2, n * P2)
        _add(C.T, n * P2, (n + 1) * P2)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(P2 * N, P2 * N),
    )


def assemble_dual_stab(dual_space: SlabSpace, weights: StabilizationWeights) -> sp.csr_matrix:
    return _slab_diag_sparse(_dual_slab(dual_space, weights), dual_space.mesh.N)


def assemble_data_mass(space: SlabSpace) -> sp.csr_matrix:
    """Mass of the u1 component restricted to the data set omega_T."""
    return _slab_diag_sparse(_data_mass_slab(space), space.mesh.N)


def mass_blocks(space: SlabSpace, dual_space: SlabSpace, layout: DofLayout):
    """Per-slab mass blocks of the eigen pencil, aligned with the layout."""
    if layout.M_trace:
        raise ConfigurationError("the eigen pencil is defined without a trace space")
    Mu = _mass_slab(space)
    Mz = _mass_slab(dual_space)
    m = layout.block_size
    Mn = np.zeros((m, m))
    Mn[: 2 * layout.P, : 2 * layout.P] = Mu
    Mn[2 * layout.P :, 2 * layout.P :] = Mz
    return [Mn] * layout.N


# ----------------------------------------------------------------------
# right-hand side
# ----------------------------------------------------------------------


def _rhs_blocks(space: SlabSpace, data: Callable, layout: DofLayout) -> np.ndarray:
    """(data, w1)_{omega_T} assembled slabwise into the global layout."""
    mesh = space.mesh
    n_q = max(space.k, space.q) + 4
    tpts, twts = gauss_rule(n_q)
    xpts, xwts = gauss_rule(n_q)
    tb_vals = space.time_basis.values(tpts)  # (q+1, nq)
    sb_vals = space.space_basis.values(xpts)  # (k+1, nq)
    rhs = np.zeros(layout.total)
    rb = rhs.reshape(layout.N, layout.block_size)
    cells = mesh.omega_cells
    if cells.size == 0:
        return rhs
    x_left = mesh.spatial_nodes[mesh.cells[cells, 0]]
    # quadrature points: (n_cells, nq)
    X = x_left[:, None] + mesh.h_x * xpts[None, :]
    for n in range(mesh.N):
        t0, t1 = mesh.slabs[n]
        Tq = t0 + (t1 - t0) * tpts
        vals = np.asarray(
            data(Tq[:, None, None] + 0.0 * X[None, :, :], X[None, :, :] + 0.0 * Tq[:, None, None]),
            dtype=float,
        )  # (nq_t, n_cells, nq_x)
        wtd = vals * (mesh.h_t * twts)[:, None, None] * (mesh.h_x * xwts)[None, None, :]
        # contract with time and space test bases: (q+1, n_cells, k+1)
        contrib = np.einsum("gch,ag,lh->acl", wtd, tb_vals, sb_vals)
        local = np.zeros((space.q + 1, space.n_sp))
        for ci, c in enumerate(cells):
            i0 = c * space.k
            local[:, i0 : i0 + space.k + 1] += contrib[:, ci, :]
        rb[n, layout.u1] = local.ravel()
    return rhs


# ----------------------------------------------------------------------
# the full system
# ----------------------------------------------------------------------


def _build_system(
    space: SlabSpace,
    dual_space: SlabSpace,
    weights: StabilizationWeights,
    trace: TraceSpace | None,
    data: Callable | None,
    include_A: bool = True,
    dual_sign: float = -1.0,
) -> SaddleSystem:
    _check_same_mesh(space, dual_space)
    if weights.gamma == 0.0 and trace is None:
        raise ConfigurationError(
            "gamma = 0 requires a finite-dimensional trace space; otherwise the"
            " stabilization norm is degenerate"
        )
    mesh = space.mesh
    N = mesh.N
    layout = DofLayout(
        N=N,
        P=space.dofs_per_slab,
        Pd=dual_space.dofs_per_slab,
        M_trace=trace.M if trace is not None else 0,
    )
    m = layout.block_size
    P2 = 2 * layout.P

    S0 = _primal_slab(space, weights) + weights.c_data * _data_mass_slab(space)
    Sd = _dual_slab(dual_space, weights)
    A = _A_slab(space, dual_space) if include_A else None
    W1, W2 = _jump_weight_matrices(space, weights)
    D_bot = _jump_insert(space, W1, W2, sign_rows_top=False)
    D_top = _jump_insert(space, W1, W2, sign_rows_top=True)
    C_jump = _jump_coupling(space, W1, W2)

    zsl = slice(layout.z1.start, m)
    base = np.zeros((m, m))
    base[:P2, :P2] = S0
    base[zsl, zsl] = dual_sign * Sd
    if include_A:
        base[zsl, :P2] = A
        base[:P2, zsl] = A.T

    trace_data = None
    if trace is not None:
        trace_data = _trace_blocks(space, trace)
        Bm, G_list, X_list, P_list = trace_data

    diag = []
    for n in range(N):
        D = base.copy()
        if N >= 2:
            if n >= 1:
                D[:P2, :P2] += D_bot
            if n <= N - 2:
                D[:P2, :P2] += D_top
        if trace is not None:
            D[:P2, :P2] += Bm
            D[layout.mu, layout.mu] += G_list[n]
            D[:P2, layout.mu] -= X_list[n]
            D[layout.mu, :P2] -= X_list[n].T
            inv_h = 1.0 / mesh.h_x
            if n >= 1:
                D[layout.mu, layout.mu] += inv_h * P_list[n - 1]
            if n <= N - 2:
                D[layout.mu, layout.mu] += inv_h * P_list[n]
        diag.append(D)

    coupling = []
    for n in range(N - 1):
        blk = sp.lil_matrix((m, m))
        blk[:P2, :P2] = C_jump
        if trace is not None:
            blk[layout.mu, layout.mu] = -(1.0 / mesh.h_x) * P_list[n]
        coupling.append(blk.tocsr())

    if data is not None:
        rhs = weights.c_data * _rhs_blocks(space, data, layout)
    else:
        rhs = np.zeros(layout.total)

    meta = {
        "trace_blocks": trace_data,
        "weights": weights,
        "spaces": (space, dual_space),
        "dual_sign": dual_sign,
        "include_A": include_A,
    }
    return SaddleSystem(layout, diag, coupling, rhs, meta)


def assemble_saddle(
    space: SlabSpace,
    dual_space: SlabSpace,
    weights: StabilizationWeights,
    trace: TraceSpace | None = None,
    data: Callable | None = None,
) -> SaddleSystem:
    """The optimality system B[(U, mu, Z), (W, eta, Y)] = (data, w1)_omega.

    Without a trace space the multiplier block is omitted entirely (the trace
    stabilizer vanishes identically for V = L^2(Sigma)). With a trace space
    the boundary term is realized through the broken-in-time multiplier with
    its interface penalty; the projection form is never assembled directly.
    """
    return _build_system(space, dual_space, weights, trace, data,
                         include_A=True, dual_sign=-1.0)


def spectral_system(
    space: SlabSpace,
    dual_space: SlabSpace,
    weights: StabilizationWeights,
) -> SaddleSystem:
    """The symmetric pencil matrix of the worst-case-noise eigenproblem.

    This is the saddle matrix itself (data mass folded into the primal
    stabilizer block, dual block -S*). Against the mass pencil its negative
    eigenvalues are bounded away from zero by the dual stabilizer, so the
    smallest-magnitude eigenvalue is the positive one carried by a primal
    mode that nearly solves the wave equation while being almost invisible
    in the data set.
    """
    return _build_system(space, dual_space, weights, None, None,
                         include_A=True, dual_sign=-1.0)


def triple_norm(
    space: SlabSpace,
    dual_space: SlabSpace,
    weights: StabilizationWeights,
    trace: TraceSpace | None,
    U: FieldPair,
    Z: FieldPair,
    mu: np.ndarray | None = None,
) -> float:
    """The stabilization norm |||(U, Z)|||.

    Squares to S(U,U) + jump penalties + ||u1||^2_{omega_T} + S*(Z,Z), plus
    the boundary terms ||u1 - mu||^2_Sigma and the mu interface penalty when a
    trace space is active (mu defaults to zero). Coincides with
    B[(U,mu,Z), (U,mu,-Z)] for the assembled system.
    """
    sys_norm = _build_system(space, dual_space, weights, trace, None,
                             include_A=False, dual_sign=+1.0)
    x = sys_norm.layout.pack(U, mu, Z)
    val = float(x @ sys_norm.matvec(x))
    return float(np.sqrt(max(val, 0.0)))
