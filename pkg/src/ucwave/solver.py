"""Direct solution of the block-tridiagonal saddle system and the
shift-invert iteration for the worst-case noise eigenpair.

The factorization is a block-Thomas elimination in slab order; every Schur
complement stays symmetric, so the per-block factorization is LAPACK's
Bunch-Kaufman (sytrf) with symmetric pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import get_lapack_funcs

from .exceptions import EigenError, FactorizationError, SolverQualityError
from .forms import SaddleSystem

__all__ = ["BlockTriFactorization", "EigenResult", "factorize", "solve", "smallest_eigenpair"]

_EPS = float(np.finfo(np.float64).eps)


@dataclass
class _BlockFactor:
    ldu: np.ndarray
    ipiv: np.ndarray
    rcond: float


class BlockTriFactorization:
    """Factors of the slab-ordered Schur complements plus solve machinery."""

    def __init__(self, system: SaddleSystem, blocks: list[_BlockFactor]):
        self.system = system
        self._blocks = blocks
        self._sytrs = get_lapack_funcs("sytrs", (blocks[0].ldu,))

    def block_solve(self, n: int, b: np.ndarray) -> np.ndarray:
        f = self._blocks[n]
        x, info = self._sytrs(f.ldu, f.ipiv, np.asarray(b, dtype=float), lower=1)
        if info != 0:
            raise FactorizationError(f"sytrs failed on slab {n} (info={info})")
        return x

    def raw_solve(self, rhs: np.ndarray) -> np.ndarray:
        sys = self.system
        N = sys.layout.N
        m = sys.layout.block_size
        b = np.asarray(rhs, dtype=float).reshape(N, m)
        z = np.empty_like(b)
        z[0] = b[0]
        for n in range(1, N):
            z[n] = b[n] - sys.coupling[n - 1] @ self.block_solve(n - 1, z[n - 1])
        x = np.empty_like(b)
        x[N - 1] = self.block_solve(N - 1, z[N - 1])
        for n in range(N - 2, -1, -1):
            x[n] = self.block_solve(n, z[n] - sys.coupling[n].T @ x[n + 1])
        return x.ravel()


def factorize(system: SaddleSystem) -> BlockTriFactorization:
    """Forward block elimination with Bunch-Kaufman factors per Schur block.

    Raises FactorizationError, naming the slab, on an exactly singular block
    or a condition estimate beyond 1/eps.
    """
    N = system.layout.N
    m = system.layout.block_size
    for n, D in enumerate(system.diag_blocks):
        if D.shape != (m, m):
            raise FactorizationError(f"diagonal block {n} is not square of size {m}")
    probe = np.zeros((m, m))
    sytrf, sycon = get_lapack_funcs(("sytrf", "sycon"), (probe,))
    sytrs = get_lapack_funcs("sytrs", (probe,))

    blocks: list[_BlockFactor] = []
    S = system.diag_blocks[0].copy()
    for n in range(N):
        anorm = np.abs(S).sum(axis=0).max() if S.size else 0.0
        ldu, ipiv, info = sytrf(S, lower=1)
        if info > 0:
            raise FactorizationError(
                f"singular Schur block at slab {n} (zero pivot in sytrf)"
            )
        if info < 0:
            raise FactorizationError(f"sytrf illegal argument on slab {n}")
        rcond, cinfo = sycon(ldu, ipiv, anorm, lower=1)
        if not np.isfinite(rcond) or rcond < _EPS:
            raise FactorizationError(
                f"numerically singular Schur block at slab {n}"
                f" (rcond = {rcond:.3e})"
            )
        blocks.append(_BlockFactor(ldu=ldu, ipiv=ipiv, rcond=float(rcond)))
        if n < N - 1:
            C = system.coupling[n]
            Ct = C.toarray().T if sp.issparse(C) else np.asarray(C).T
            X, sinfo = sytrs(ldu, ipiv, Ct, lower=1)
            if sinfo != 0:
                raise FactorizationError(f"sytrs failed on slab {n}")
            S = system.diag_blocks[n + 1] - C @ X
    return BlockTriFactorization(system, blocks)


def solve(fact: BlockTriFactorization, rhs: np.ndarray) -> np.ndarray:
    """Backward/forward substitution with a residual post-check; one step of
    iterative refinement is applied if the relative residual exceeds 1e-9."""
    sys = fact.system
    rhs = np.asarray(rhs, dtype=float)
    if rhs.size != sys.layout.total:
        raise SolverQualityError(
            f"rhs length {rhs.size} does not match system size {sys.layout.total}"
        )
    x = fact.raw_solve(rhs)
    norm_b = np.linalg.norm(rhs)
    norm_a = sys.norm_estimate() * sys.layout.block_size

    def rel_res(xv):
        r = sys.matvec(xv) - rhs
        scale = norm_a * np.linalg.norm(xv) + norm_b
        return np.linalg.norm(r) / scale if scale > 0 else np.linalg.norm(r), r

    res, r = rel_res(x)
    if res > 1e-9:
        x = x - fact.raw_solve(r)
        res, _ = rel_res(x)
    if res > 1e-6:
        raise SolverQualityError(
            f"relative residual {res:.3e} above 1e-6 after refinement"
        )
    return x


@dataclass
class EigenResult:
    lam: float
    mode: np.ndarray
    residual: float
    iterations: int


def _pencil_matvec(blocks, layout, x):
    xs = np.asarray(x).reshape(layout.N, layout.block_size)
    ys = np.empty_like(xs)
    for n in range(layout.N):
        ys[n] = blocks[n] @ xs[n]
    return ys.ravel()


def smallest_eigenpair(
    B_sys: SaddleSystem,
    M_blocks,
    tol: float = 1e-8,
    max_iter: int = 300,
    seed: int = 0,
    subspace: int = 3,
) -> EigenResult:
    """Smallest-magnitude eigenpair of the pencil (B, M) by shift-invert
    subspace iteration at shift zero (with a tiny regularizing shift as a
    fallback when B itself is singular).

    M_blocks is the list of per-slab mass blocks aligned with the layout of
    B_sys. A small M-orthonormalized block accelerates convergence when the
    near-zero spectrum clusters; the returned eigenvalue is the Rayleigh
    quotient of the extracted Ritz vector and the convergence test is the
    pencil residual ||B x - lam M x|| / ||x||_M <= tol.
    """
    layout = B_sys.layout
    M_blocks = list(M_blocks)
    if len(M_blocks) != layout.N:
        raise EigenError("one mass block per slab is required")
    b = max(1, min(subspace, layout.total))

    shift = 0.0
    try:
        fact = factorize(B_sys)
    except FactorizationError:
        shift = 1e-12 * B_sys.norm_estimate()
        shifted_diag = [
            D - shift * Mn for D, Mn in zip(B_sys.diag_blocks, M_blocks)
        ]
        shifted = SaddleSystem(layout, shifted_diag, B_sys.coupling,
                               np.zeros(layout.total))
        fact = factorize(shifted)

    def m_apply(V):
        out = np.empty_like(V)
        for j in range(V.shape[1]):
            out[:, j] = _pencil_matvec(M_blocks, layout, V[:, j])
        return out

    def m_orthonormalize(V):
        # modified Gram-Schmidt in the M inner product
        for j in range(V.shape[1]):
            for i in range(j):
                V[:, j] -= (V[:, i] @ _pencil_matvec(M_blocks, layout, V[:, j])) * V[:, i]
            nrm = np.sqrt(V[:, j] @ _pencil_matvec(M_blocks, layout, V[:, j]))
            if not np.isfinite(nrm) or nrm == 0.0:
                raise EigenError("shift-invert iteration produced a null vector")
            V[:, j] /= nrm
        return V

    rng = np.random.default_rng(seed)
    V = m_orthonormalize(rng.standard_normal((layout.total, b)))

    lam = np.inf
    residual = np.inf
    for it in range(1, max_iter + 1):
        W = np.empty_like(V)
        MV = m_apply(V)
        for j in range(b):
            W[:, j] = fact.raw_solve(MV[:, j])
        V = m_orthonormalize(W)
        # Rayleigh-Ritz on the block; M-Gram is the identity here
        BV = np.column_stack([B_sys.matvec(V[:, j]) for j in range(b)])
        Bp = V.T @ BV
        theta, Y = np.linalg.eigh(0.5 * (Bp + Bp.T))
        jmin = int(np.argmin(np.abs(theta)))
        x = V @ Y[:, jmin]
        mx = _pencil_matvec(M_blocks, layout, x)
        lam = float(x @ B_sys.matvec(x)) / float(x @ mx)
        residual = float(np.linalg.norm(B_sys.matvec(x) - lam * mx) / np.sqrt(x @ mx))
        if residual <= tol:
            return EigenResult(lam=lam, mode=x, residual=residual, iterations=it)
    raise EigenError(
        f"eigen iteration did not converge in {max_iter} iterations"
        f" (last Rayleigh quotient {lam:.6e}, residual {residual:.3e})"
    )
