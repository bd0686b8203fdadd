import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linkforms import formtools as ft
from linkforms.euclid_kernels import (DoubleFormValue, EuclidPoint, LinearSubspaceSpec, SingularInputError,
                                      UnsupportedCodimensionError, bidegree_part, bs_delta0_components,
                                      bs_delta0_value, bs_diagonal_value, bs_linear_subspace_components,
                                      bs_linear_subspace_value, green_kernel_value,
                                      green_linear_subspace_components, green_linear_subspace_value,
                                      heat_evolve_components, heat_evolve_curve_r3, sphere_volume)
from linkforms.exterior_core import MultiIndex, all_multi_indices
from linkforms.parametrix_asym import circle_heat_evolution_bessel, circle_knot

FOUR_PI = 4 * np.pi
finite = st.floats(-3, 3, allow_nan=False)


def points(n):
    return st.lists(finite, min_size=n, max_size=n).map(np.array)


def mi(*idx, n=3):
    return MultiIndex(tuple(idx), n)


def as_product_form(value: DoubleFormValue) -> np.ndarray:
    """Component array of a double form viewed as a form on R^n x R^n (y-slots shifted by n)."""
    n = value.n
    degree = value.p + (value.q or 0) if value.q is not None else value.p
    out = np.zeros(len(all_multi_indices(2 * n, degree)))
    for (a, b), v in value.coeffs.items():
        idx = MultiIndex(a.indices + tuple(i + n for i in b.indices), 2 * n)
        out[ft.position(idx)] += v
    return out


@pytest.mark.parametrize("m, expected", [(0, 2.0), (1, 2 * np.pi), (2, 4 * np.pi), (3, 2 * np.pi ** 2)])
def test_sphere_volume(m, expected):
    assert sphere_volume(m) == pytest.approx(expected, rel=1e-14)


def test_euclid_point_rejects_nan():
    with pytest.raises(ValueError):
        EuclidPoint((0.0, np.nan, 1.0))


class TestGreenKernel:
    def test_scalar_kernel_n3(self):
        g = green_kernel_value([0, 0, 0], [1, 0, 0], 0)
        assert g.coeffs == {(mi(1, 2, 3), mi()): pytest.approx(1 / FOUR_PI)}

    def test_one_forms_n3_magnitudes(self):
        g = green_kernel_value([0, 0, 0], [1, 0, 0], 1)
        assert len(g.coeffs) == 3
        assert all(abs(v) == pytest.approx(1 / FOUR_PI) for v in g.coeffs.values())

    @pytest.mark.parametrize("n", [3, 4])
    def test_reflection_symmetry(self, n, rng):
        for _ in range(20):
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            for k in range(n + 1):
                lhs = green_kernel_value(y, x, n - k).reflected()
                rhs = green_kernel_value(x, y, k).scaled((-1.0) ** n)
                assert lhs.max_abs_difference(rhs) == 0.0

    def test_coincident_points(self):
        with pytest.raises(SingularInputError):
            green_kernel_value([1, 2, 3], [1, 2, 3], 1)

    def test_needs_n_at_least_three(self):
        with pytest.raises(ValueError):
            green_kernel_value([0, 0], [1, 0], 0)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_codifferential_in_y_is_diagonal_biot_savart(self, k, rng):
        # the (n-k, k-1) part of the diagonal kernel is d_y^* of the Green kernel,
        # with d_y^* passing the x-slots with the Koszul sign (-1)^(n-k)
        n = 3
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        diag = bidegree_part(bs_diagonal_value(x, y), n - k, k - 1)
        y_basis = all_multi_indices(n, k)
        for J in all_multi_indices(n, n - k):
            def slot(pts, J=J):
                flat = np.asarray(pts).reshape(-1, n)
                vals = np.array([[green_kernel_value(x, p, k).get(J, K) for K in y_basis] for p in flat])
                return vals.reshape(np.shape(pts)[:-1] + (len(y_basis),))

            dstar = (-1) ** (n - k) * ft.fd_codifferential(slot, y, n, k, h=1e-3, order=4)
            for pos, K in enumerate(all_multi_indices(n, k - 1)):
                assert dstar[pos] == pytest.approx(diag.get(J, K), abs=1e-9)


class TestPointBiotSavart:
    def test_on_axis(self):
        v = bs_delta0_value([1, 0, 0])
        assert v.get((2, 3)) == pytest.approx(1 / FOUR_PI)
        assert v.get((1, 2)) == 0 and v.get((1, 3)) == 0

    @given(points(3), st.floats(0.1, 10))
    def test_scaling(self, x, lam):
        if np.linalg.norm(x) < 1e-3:
            return
        a = bs_delta0_components(lam * x)
        b = bs_delta0_components(x)
        np.testing.assert_allclose(a, lam ** -2 * b, rtol=1e-12, atol=1e-300)

    def test_unit_flux_through_sphere(self):
        nodes, w = np.polynomial.legendre.leggauss(32)
        polar, az = np.arccos(-nodes), 2 * np.pi * np.arange(64) / 64
        pg, ag = np.meshgrid(polar, az, indexing="ij")
        u, tang = ft.sphere_frame(np.eye(3), (pg.ravel(), ag.ravel()))
        weights = np.repeat(w, 64) * 2 * np.pi / 64
        flux = np.sum(weights * ft.evaluate_on_vectors(bs_delta0_components(u), 3, 2, tang))
        assert flux == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("x", [[1.0, 0.3, -0.5], [0.0, 2.0, 1.0], [-1.5, -1.0, 0.7]])
    def test_closed_away_from_origin(self, x):
        d = ft.fd_exterior_derivative(bs_delta0_components, np.array(x), 3, 2, h=1e-3, order=4)
        assert np.max(np.abs(d)) < 1e-10

    def test_origin_is_singular(self):
        with pytest.raises(SingularInputError):
            bs_delta0_value([0, 0, 0])


class TestDiagonalBiotSavart:
    def test_example_point_pair(self):
        v = bs_diagonal_value([1, 0, 0], [0, 0, 0])
        c = 1 / FOUR_PI
        assert v.get((2, 3), ()) == pytest.approx(c)
        assert v.get((), (2, 3)) == pytest.approx(c)
        assert v.get((2,), (3,)) == pytest.approx(-c)
        assert v.get((3,), (2,)) == pytest.approx(c)
        assert len(v.coeffs) == 4

    def test_cube_in_every_mixed_coefficient(self):
        # all three (1,1) coefficients carry |x - y|^3; scaling by 2 divides them by 4
        x, y = np.array([0.3, -0.2, 0.9]), np.array([-0.4, 0.5, 0.1])
        a = bidegree_part(bs_diagonal_value(x, y), 1, 1)
        b = bidegree_part(bs_diagonal_value(2 * x, 2 * y), 1, 1)
        assert b.max_abs_difference(a.scaled(0.25)) < 1e-15

    def test_pullback_of_point_form(self, rng):
        n = 3
        for _ in range(100):
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            vecs = rng.standard_normal((n - 1, 2 * n))
            lhs = ft.evaluate_on_vectors(as_product_form(bs_diagonal_value(x, y)), 2 * n, n - 1, vecs)
            rhs = ft.evaluate_on_vectors(bs_delta0_components(x - y), n, n - 1, vecs[:, :n] - vecs[:, n:])
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_coincident(self):
        with pytest.raises(SingularInputError):
            bs_diagonal_value([1, 1, 1], [1, 1, 1])


class TestLinearSubspace:
    def test_point_subspace_matches_point_form(self, rng):
        spec = LinearSubspaceSpec(3, 0, tuple(map(tuple, np.eye(3))))
        x = rng.standard_normal((50, 3))
        np.testing.assert_allclose(bs_linear_subspace_components(spec, x), bs_delta0_components(x), rtol=1e-13)

    def test_line_in_r4(self):
        spec = LinearSubspaceSpec.coordinate(4, [4])
        v = bs_linear_subspace_value(spec, [1, 0, 0, 0])
        assert v.get((2, 3), ()) == pytest.approx(1 / FOUR_PI)
        assert sum(abs(c) for c in v.coeffs.values()) == pytest.approx(1 / FOUR_PI)

    def test_unit_flux_around_line_in_r4(self):
        spec = LinearSubspaceSpec.coordinate(4, [1])
        nodes, w = np.polynomial.legendre.leggauss(24)
        pg, ag = np.meshgrid(np.arccos(-nodes), 2 * np.pi * np.arange(48) / 48, indexing="ij")
        u, tang = ft.sphere_frame(spec.normal, (pg.ravel(), ag.ravel()))
        weights = np.repeat(w, 48) * 2 * np.pi / 48
        comps = bs_linear_subspace_components(spec, u + 0.7 * spec.tangent[0])
        assert np.sum(weights * ft.evaluate_on_vectors(comps, 4, 2, tang)) == pytest.approx(1.0, abs=1e-12)

    def test_green_example(self):
        spec = LinearSubspaceSpec(3, 0, tuple(map(tuple, np.eye(3))))
        v = green_linear_subspace_value(spec, [2, 0, 0])
        assert v.get((1, 2, 3), ()) == pytest.approx(1 / (FOUR_PI * 2))

    @pytest.mark.parametrize("x", [[0.5, 1.0, -0.3, 2.0], [1.2, -0.4, 0.9, 0.1]])
    def test_codifferential_of_green_is_biot_savart(self, x):
        spec = LinearSubspaceSpec.coordinate(4, [1])
        x = np.array(x)
        field = lambda p: green_linear_subspace_components(spec, p)
        errs = []
        for h in (2e-3, 1e-3):
            dstar = ft.fd_codifferential(field, x, 4, 3, h=h)
            errs.append(np.max(np.abs(dstar - bs_linear_subspace_components(spec, x))))
        assert errs[1] < 1e-6
        assert errs[1] < 0.3 * errs[0] or errs[1] < 1e-9

    def test_rotation_equivariance(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        base = LinearSubspaceSpec.coordinate(4, [2])
        rotated = LinearSubspaceSpec(4, 1, tuple(map(tuple, np.asarray(base.frame) @ q.T)))
        x = rng.standard_normal(4)
        a = green_linear_subspace_components(base, x)
        b = green_linear_subspace_components(rotated, q @ x)
        assert np.linalg.norm(a) == pytest.approx(np.linalg.norm(b), rel=1e-13)

    def test_rejects_low_codimension(self):
        spec = LinearSubspaceSpec.coordinate(3, [1])
        with pytest.raises(UnsupportedCodimensionError):
            bs_linear_subspace_value(spec, [0, 1, 0])

    def test_rejects_point_on_subspace(self):
        spec = LinearSubspaceSpec.coordinate(4, [1])
        with pytest.raises(SingularInputError):
            bs_linear_subspace_value(spec, [3.0, 0, 0, 0])

    def test_orientation_is_checked(self):
        frame = np.eye(3)
        frame[0] = -frame[0]
        with pytest.raises(ValueError):
            LinearSubspaceSpec(3, 0, tuple(map(tuple, frame)))


class TestHeatEvolution:
    @pytest.mark.parametrize("t", [0.01, 0.05, 0.3])
    def test_matches_bessel_closed_form(self, t, rng):
        knot = circle_knot(1.0)
        x = rng.uniform(-1.5, 1.5, (20, 3))
        np.testing.assert_allclose(heat_evolve_components(knot, t, x),
                                   circle_heat_evolution_bessel(1.0, t, x), atol=1e-10, rtol=1e-9)

    def test_conserves_action_on_harmonic_test_form(self):
        # eta = x1 dx2 has vanishing Laplacian, so int e^{-t Lap} L ^ eta = loop integral = pi
        knot, t, h = circle_knot(1.0), 0.05, 0.08
        ax = np.arange(-2.88, 2.88 + h / 2, h)
        az = np.arange(-1.84, 1.84 + h / 2, h)
        X, Y, Z = np.meshgrid(ax, ax, az, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        vals = heat_evolve_components(knot, t, pts)
        eta = np.zeros((pts.shape[0], 3))
        eta[:, 1] = pts[:, 0]
        density = ft.wedge(vals, 2, eta, 1, 3)[:, 0]
        assert np.sum(density) * h ** 3 == pytest.approx(np.pi, abs=1e-6)

    @pytest.mark.parametrize("t", [0.01, 0.005, 0.0025])
    def test_gaussian_envelope(self, t):
        knot = circle_knot(1.0)
        val = np.linalg.norm(heat_evolve_curve_r3(knot, t, [1.5, 0, 0]).single_slot_array())
        envelope = np.exp(-0.25 / (4 * t)) / (4 * np.pi * t)
        assert 0.7 < val / envelope < 1.0

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            heat_evolve_curve_r3(circle_knot(1.0), 0.0, [0, 0, 0])
