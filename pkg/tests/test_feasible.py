import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leoprecode.feasible import (AnalogPrecoder, PhaseShifterSpec, assemble_blockdiag,
                                 nearest_constellation_index, npp_analog_update, project_hull_cps,
                                 project_hull_dps, project_hull_matrix, round_to_feasible,
                                 stack_blocks, support_mask)
from leoprecode.model import Architecture

from conftest import random_complex
from oracles import nearest_point_exhaustive, project_polygon_exact, project_polygon_grid

FULLY = Architecture.FULLY_CONNECTED
PARTIAL = Architecture.PARTIALLY_CONNECTED
finite = st.floats(-5, 5, allow_nan=False)


class TestSpec:
    def test_constellation(self):
        pts = PhaseShifterSpec(FULLY, 2).constellation()
        np.testing.assert_allclose(pts, np.exp(1j * np.pi * np.array([1, 3, 5, 7]) / 4))

    def test_rejects_digital_and_zero_bits(self):
        with pytest.raises(ValueError):
            PhaseShifterSpec(Architecture.FULLY_DIGITAL)
        with pytest.raises(ValueError):
            PhaseShifterSpec(FULLY, 0)

    def test_from_resolution(self):
        assert PhaseShifterSpec.from_resolution("fully", "inf").continuous
        assert PhaseShifterSpec.from_resolution("partially", 3).levels == 8


class TestCpsProjection:
    def test_interior(self):
        assert project_hull_cps(0.5 + 0j) == 0.5

    def test_radial(self):
        np.testing.assert_allclose(project_hull_cps(3 + 4j), 0.6 + 0.8j)

    @given(finite, finite)
    def test_inside_disc(self, re, im):
        assert abs(project_hull_cps(complex(re, im))) <= 1 + 1e-15


class TestDpsProjection:
    def test_edge_midpoint(self):
        np.testing.assert_allclose(project_hull_dps(1 + 0j, 4), np.sqrt(0.5), atol=1e-15)

    def test_vertex_fixed(self):
        z = np.exp(1j * np.pi / 4)
        np.testing.assert_allclose(project_hull_dps(z, 4), z, atol=1e-15)

    def test_interior_fixed(self):
        z = 0.3 * np.exp(1j * np.pi / 4)
        np.testing.assert_allclose(project_hull_dps(z, 4), z, atol=1e-15)

    @pytest.mark.parametrize("L", [2, 4, 8, 16])
    def test_matches_exact_oracle(self, rng, L):
        z = 3 * np.sqrt(rng.uniform(size=1000)) * np.exp(2j * np.pi * rng.uniform(size=1000))
        got = project_hull_dps(z, L)
        ref = np.array([project_polygon_exact(x, L) for x in z])
        assert np.max(np.abs(got - ref)) <= 1e-6

    @pytest.mark.parametrize("L", [4, 8])
    def test_matches_grid_oracle(self, rng, L):
        z = 3 * np.sqrt(rng.uniform(size=25)) * np.exp(2j * np.pi * rng.uniform(size=25))
        got = project_hull_dps(z, L)
        ref = np.array([project_polygon_grid(x, L) for x in z])
        assert np.max(np.abs(got - ref)) <= 1e-5

    @pytest.mark.parametrize("L", [None, 2, 4, 16])
    def test_nonexpansive(self, rng, L):
        x = 2 * random_complex(rng, 10_000)
        y = 2 * random_complex(rng, 10_000)
        proj = project_hull_cps if L is None else (lambda v: project_hull_dps(v, L))
        assert np.all(np.abs(proj(x) - proj(y)) <= np.abs(x - y) + 1e-12)

    def test_bad_levels(self):
        with pytest.raises(ValueError):
            project_hull_dps(1j, 1)


class TestMatrixProjection:
    @pytest.mark.parametrize("bits", [None, 2, 4])
    def test_feasible_unchanged_and_idempotent(self, rng, bits):
        spec = PhaseShifterSpec(FULLY, bits)
        v = round_to_feasible(random_complex(rng, 8, 4), spec).v
        np.testing.assert_allclose(project_hull_matrix(v, spec), v, atol=1e-12)
        x = 2 * random_complex(rng, 8, 4)
        once = project_hull_matrix(x, spec)
        np.testing.assert_allclose(project_hull_matrix(once, spec), once, atol=1e-12)

    def test_partial_support(self, rng):
        spec = PhaseShifterSpec(PARTIAL, 3)
        out = project_hull_matrix(random_complex(rng, 8, 4), spec)
        mask = support_mask(8, 4, spec)
        assert np.all(out[~mask] == 0)


class TestRounding:
    def test_tie_goes_to_smaller_index(self):
        out = round_to_feasible(np.array([[1 + 0j]]), PhaseShifterSpec(FULLY, 2)).v
        np.testing.assert_allclose(out, np.exp(1j * np.pi / 4))

    def test_constellation_fixed(self):
        spec = PhaseShifterSpec(FULLY, 3)
        pts = spec.constellation()[None, :]
        np.testing.assert_array_equal(round_to_feasible(pts, spec).v, pts)

    @pytest.mark.parametrize("bits", [1, 2, 3, 4])
    def test_matches_exhaustive(self, rng, bits):
        L = 2**bits
        z = random_complex(rng, 2000)
        # include exact ties between neighbouring points
        ties = np.exp(2j * np.pi * np.arange(L) / L)
        z = np.concatenate([z, ties, 0.3 * ties])
        idx = nearest_constellation_index(z, L)
        ref = np.array([nearest_point_exhaustive(x, L) for x in z])
        np.testing.assert_array_equal(idx, ref)

    def test_cps_zero_entry(self):
        out = round_to_feasible(np.array([[0j, 2j]]), PhaseShifterSpec(FULLY)).v
        np.testing.assert_allclose(out, [[1, 1j]])

    @pytest.mark.parametrize("arch", [FULLY, PARTIAL])
    @pytest.mark.parametrize("bits", [None, 2, 4])
    def test_output_feasible(self, rng, arch, bits):
        spec = PhaseShifterSpec(arch, bits)
        assert round_to_feasible(random_complex(rng, 12, 4), spec).is_feasible()


class TestAnalogPrecoder:
    def test_infeasible_detected(self):
        spec = PhaseShifterSpec(FULLY, 2)
        assert not AnalogPrecoder(np.ones((4, 2), complex), spec).is_feasible()
        assert not AnalogPrecoder(0.5 * np.exp(1j * np.pi / 4) * np.ones((4, 2)), spec).is_feasible()

    def test_partial_orthogonality(self):
        spec = PhaseShifterSpec(PARTIAL)
        v = assemble_blockdiag(np.exp(1j * np.arange(8.0)), 4)
        pre = AnalogPrecoder(v, spec)
        assert pre.is_feasible()
        np.testing.assert_allclose(v.conj().T @ v, 2 * np.eye(4))
        np.testing.assert_allclose(stack_blocks(v), np.exp(1j * np.arange(8.0)))

    def test_mask_divisibility(self):
        with pytest.raises(ValueError):
            support_mask(8, 3, PhaseShifterSpec(PARTIAL))


class TestNpp:
    def test_feasible_ls_unchanged(self, rng):
        spec = PhaseShifterSpec(FULLY, 2)
        v = round_to_feasible(random_complex(rng, 8, 4), spec).v
        w = random_complex(rng, 4, 4)
        np.testing.assert_allclose(npp_analog_update(v @ w, w, spec).v, v, atol=1e-9)

    def test_scalar_identity(self):
        spec = PhaseShifterSpec(FULLY)
        b = np.array([[3 + 4j]])
        np.testing.assert_allclose(npp_analog_update(b, np.ones((1, 1)), spec).v,
                                   round_to_feasible(b, spec).v)

    def test_partial_support_and_feasibility(self, rng):
        spec = PhaseShifterSpec(PARTIAL, 2)
        out = npp_analog_update(random_complex(rng, 8, 3), random_complex(rng, 4, 3), spec)
        assert out.is_feasible()
