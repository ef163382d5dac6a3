import numpy as np
import pytest

from ucwave.exceptions import ConfigurationError
from ucwave.geometry import GeometryConfig, derive_params
from ucwave.mesh import build_mesh, refine


class TestBuildMesh:
    def test_standard_eight_cells(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 8, 8)
        assert m.n_x == 8
        assert np.allclose(np.diff(m.spatial_nodes), 0.125)
        np.testing.assert_array_equal(m.omega_cells, [0, 1])

    def test_node_alignment_requires_divisibility(self, cfg51, p51):
        # -0.75 is a node iff n_x is divisible by 4
        with pytest.raises(ConfigurationError, match="multiple of 4"):
            build_mesh(cfg51, p51, 6, 6)
        for n_x in (4, 8, 12):
            build_mesh(cfg51, p51, n_x, n_x)

    def test_single_slab(self, cfg_half, p_half):
        m = build_mesh(cfg_half, p_half, 2, 1)
        assert m.N == 1
        assert m.slabs.shape == (1, 2)

    def test_partitions_exact(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 16, 16)
        assert np.sum(np.diff(m.spatial_nodes)) == pytest.approx(cfg51.R, rel=1e-13)
        widths = m.slabs[:, 1] - m.slabs[:, 0]
        assert np.sum(widths) == pytest.approx(2 * p51.T, rel=1e-13)
        assert np.allclose(widths, widths[0], rtol=1e-13)

    def test_interior_facets(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 8, 8)
        np.testing.assert_array_equal(m.interior_facets, np.arange(1, 8))

    def test_omega_measure(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 16, 16)
        total = sum(
            m.spatial_nodes[c + 1] - m.spatial_nodes[c] for c in m.omega_cells
        )
        assert total == pytest.approx(cfg51.R - cfg51.r, rel=1e-13)

    def test_ratio_guard(self, cfg51, p51):
        with pytest.raises(ConfigurationError, match="h_t/h_x"):
            build_mesh(cfg51, p51, 8, 1)

    def test_forward_interval(self, cfg_forward, p_forward):
        m = build_mesh(cfg_forward, p_forward, 8, 8)
        assert m.t_lo == 0.0
        assert m.t_hi == pytest.approx(2.0)


class TestRefine:
    def test_doubles_both(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 8, 8)
        f = refine(m)
        assert (f.n_x, f.N) == (16, 16)

    def test_nested_nodes(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 8, 8)
        f = refine(m)
        coarse = np.round(m.spatial_nodes, 12)
        fine = np.round(f.spatial_nodes, 12)
        assert np.all(np.isin(coarse, fine))

    def test_ratio_preserved(self, cfg51, p51):
        m = build_mesh(cfg51, p51, 8, 8)
        f = refine(m)
        assert f.h_t / f.h_x == pytest.approx(m.h_t / m.h_x, rel=1e-13)
