"""Tensor-product space-time mesh: uniform cells on (-R, 0), uniform time slabs.

The data-region boundary x = -r is required to be a mesh node so that all
data integrals are exact without cut cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import ConfigurationError
from .geometry import GeometryConfig, WeightParams

__all__ = ["SpaceTimeMesh", "build_mesh", "refine"]

_RATIO_BOUNDS = (0.25, 4.0)


@dataclass(frozen=True)
class SpaceTimeMesh:
    spatial_nodes: np.ndarray  # n_x + 1 sorted coordinates on [-R, 0]
    cells: np.ndarray  # (n_x, 2) node index pairs
    interior_facets: np.ndarray  # node indices strictly inside Omega
    slabs: np.ndarray  # (N, 2) slab endpoints
    h_x: float
    h_t: float
    omega_cells: np.ndarray  # indices of cells fully inside omega
    cfg: GeometryConfig
    params: WeightParams

    @property
    def n_x(self) -> int:
        return self.cells.shape[0]

    @property
    def N(self) -> int:
        return self.slabs.shape[0]

    @property
    def t_lo(self) -> float:
        return float(self.slabs[0, 0])

    @property
    def t_hi(self) -> float:
        return float(self.slabs[-1, 1])


def _compatible_nx_hint(cfg: GeometryConfig) -> int:
    frac = Fraction(cfg.r / cfg.R).limit_denominator(10**6)
    return frac.denominator


def build_mesh(
    cfg: GeometryConfig, p: WeightParams, n_x: int, N: int
) -> SpaceTimeMesh:
    """Uniform mesh with n_x spatial cells and N time slabs over the interval."""
    if n_x < 2:
        raise ConfigurationError(f"n_x must be >= 2, got {n_x}")
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    h_x = cfg.R / n_x
    pos = cfg.r / h_x
    if abs(pos - round(pos)) > 1e-9:
        hint = _compatible_nx_hint(cfg)
        raise ConfigurationError(
            f"x = -r = {-cfg.r} is not a node for n_x = {n_x}; "
            f"choose n_x as a multiple of {hint}"
        )
    nodes = np.linspace(-cfg.R, 0.0, n_x + 1)
    cells = np.column_stack([np.arange(n_x), np.arange(1, n_x + 1)])
    facets = np.arange(1, n_x)
    t_lo = -p.T if cfg.time_interval == "symmetric" else 0.0
    t_edges = np.linspace(t_lo, p.T, N + 1)
    slabs = np.column_stack([t_edges[:-1], t_edges[1:]])
    h_t = (p.T - t_lo) / N
    ratio = h_t / h_x
    if not (_RATIO_BOUNDS[0] <= ratio <= _RATIO_BOUNDS[1]):
        raise ConfigurationError(
            f"h_t/h_x = {ratio:.3g} outside [{_RATIO_BOUNDS[0]}, {_RATIO_BOUNDS[1]}];"
            " the slab width must be comparable to the cell width"
        )
    # cells with both endpoints <= -r are fully inside omega
    omega_cells = np.where(nodes[cells[:, 1]] <= -cfg.r + 1e-12)[0]
    return SpaceTimeMesh(
        spatial_nodes=nodes,
        cells=cells,
        interior_facets=facets,
        slabs=slabs,
        h_x=h_x,
        h_t=h_t,
        omega_cells=omega_cells,
        cfg=cfg,
        params=p,
    )


def refine(mesh: SpaceTimeMesh) -> SpaceTimeMesh:
    """Uniform refinement: double both n_x and N; coarse nodes are kept."""
    return build_mesh(mesh.cfg, mesh.params, 2 * mesh.n_x, 2 * mesh.N)
