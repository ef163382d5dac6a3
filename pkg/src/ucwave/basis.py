"""1D nodal Lagrange bases and Gauss quadrature on the reference interval [0, 1].

Basis functions are kept as monomial coefficient rows so that values and the
first two derivatives share one evaluation path (``np.polyval`` on
``np.polyder``-reduced coefficients). Degrees stay small (<= 4 in practice),
so the monomial representation is well conditioned.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "gauss_rule",
    "gauss_lobatto_nodes",
    "equispaced_nodes",
    "LagrangeBasis",
]


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    if n < 1:
        raise ValueError("quadrature rule needs at least one point")
    pts, wts = np.polynomial.legendre.leggauss(n)
    return 0.5 * (pts + 1.0), 0.5 * wts


def gauss_lobatto_nodes(p: int) -> np.ndarray:
    """p+1 Gauss-Lobatto nodes on [0, 1]; for p = 0 the slab midpoint."""
    if p < 0:
        raise ValueError("polynomial degree must be nonnegative")
    if p == 0:
        return np.array([0.5])
    if p == 1:
        return np.array([0.0, 1.0])
    # interior nodes are the roots of P_p'(x) on (-1, 1)
    leg = np.polynomial.legendre.Legendre.basis(p)
    interior = leg.deriv().roots()
    nodes = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    return 0.5 * (nodes + 1.0)


def equispaced_nodes(p: int) -> np.ndarray:
    if p < 0:
        raise ValueError("polynomial degree must be nonnegative")
    if p == 0:
        return np.array([0.5])
    return np.linspace(0.0, 1.0, p + 1)


class LagrangeBasis:
    """Nodal Lagrange basis on [0, 1] for a given node set."""

    def __init__(self, nodes: np.ndarray):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("nodes must be a nonempty 1D array")
        self.nodes = nodes
        self.n = nodes.size
        # coeffs[j] are the monomial coefficients (highest power first) of l_j
        coeffs = []
        for j in range(self.n):
            others = np.delete(nodes, j)
            c = np.poly(others) if others.size else np.array([1.0])
            c = c / np.prod(nodes[j] - others) if others.size else c
            coeffs.append(c)
        self._c0 = coeffs
        self._c1 = [np.polyder(c) for c in coeffs]
        self._c2 = [np.polyder(c, 2) for c in coeffs]

    def _eval(self, coeff_list, x):
        x = np.asarray(x, dtype=float)
        out = np.empty((self.n,) + x.shape)
        for j, c in enumerate(coeff_list):
            out[j] = np.polyval(c, x)
        return out

    def values(self, x) -> np.ndarray:
        """Basis values at x, shape (n_basis, *x.shape)."""
        return self._eval(self._c0, x)

    def derivs(self, x) -> np.ndarray:
        return self._eval(self._c1, x)

    def second_derivs(self, x) -> np.ndarray:
        return self._eval(self._c2, x)
