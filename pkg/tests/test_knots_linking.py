import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linkforms.curves import Knot
from linkforms.euclid_kernels import LinearSubspaceSpec, bs_linear_subspace_components
from linkforms.knots_linking import (DistanceError, HomologyError, LinkReport, b2_probe, cable_link,
                                     crossing_linking, gauss_linking, isotopy_perturb, knot_normal_frame,
                                     perturb_link, torus_hopf_pair, torus_linking, whitehead_link)
from linkforms.torus_spectral import EwaldBiotSavart


def circle(centre, radius=1.0, plane=(0, 1), name="c"):
    cos_c, sin_c = np.zeros((3, 1)), np.zeros((3, 1))
    cos_c[plane[0], 0], sin_c[plane[1], 0] = radius, radius
    return Knot.from_fourier(centre, cos_c, sin_c, name=name)


def test_hopf_gauss(hopf):
    report = gauss_linking(*hopf)
    assert report.rounded == -1
    assert report.residual < 1e-6


def test_hopf_crossing(hopf):
    assert crossing_linking(*hopf) == -1


def test_translated_apart_is_unlinked():
    a, b = circle([0, 0, 0]), circle([3, 0, 0], plane=(0, 2))
    assert gauss_linking(a, b).rounded == 0
    assert crossing_linking(a, b) == 0


def test_whitehead_has_zero_linking():
    eight, oval = whitehead_link()
    assert gauss_linking(eight, oval, quad_n=512).residual < 1e-6
    assert gauss_linking(eight, oval, quad_n=512).rounded == 0
    assert crossing_linking(eight, oval) == 0


def test_cable_links_twice():
    report = gauss_linking(*cable_link(), quad_n=512)
    assert report.rounded == -2 and report.residual < 1e-6
    assert crossing_linking(*cable_link()) == -2


def test_orientation_laws(hopf):
    a, b = hopf
    base = gauss_linking(a, b).raw
    assert gauss_linking(b, a).raw == pytest.approx(base, abs=1e-10)
    assert gauss_linking(a.reversed(), b).raw == pytest.approx(-base, abs=1e-10)
    assert gauss_linking(a.reversed(), b.reversed()).raw == pytest.approx(base, abs=1e-10)


def test_quadrature_doubling_converged(hopf):
    assert abs(gauss_linking(*hopf, quad_n=128).raw - gauss_linking(*hopf, quad_n=256).raw) < 1e-8


def test_too_close_is_rejected():
    a, b = circle([0, 0, 0]), circle([0, 0, 0.0005])
    with pytest.raises(DistanceError):
        gauss_linking(a, b)


def test_gauss_needs_three_dimensions():
    a = Knot.from_fourier([0, 0], [[1], [0]], [[0], [1]])
    with pytest.raises(ValueError):
        gauss_linking(a, a)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_isotopy_preserves_linking(seed):
    a, b = perturb_link(*cable_link(), seed=seed)
    assert gauss_linking(a, b, quad_n=512).rounded == -2


def test_perturbation_is_deterministic(hopf):
    a1, b1 = perturb_link(*hopf, seed=7)
    a2, b2 = perturb_link(*hopf, seed=7)
    assert np.array_equal(a1.cos_coeffs, a2.cos_coeffs) and np.array_equal(b1.sin_coeffs, b2.sin_coeffs)


def test_perturbation_amplitude_bound(hopf):
    a = hopf[0]
    moved = isotopy_perturb(a, seed=3, amplitude=0.1)
    s = np.linspace(0, 2 * np.pi, 400)
    assert np.max(np.linalg.norm(moved.position(s) - a.position(s), axis=-1)) <= 0.1 + 1e-12
    with pytest.raises(ValueError):
        isotopy_perturb(a, seed=3, amplitude=0.3, separation=0.5)


def test_link_report_rounding():
    report = LinkReport.from_raw("x", -0.9999, 0.0)
    assert report.rounded == -1 and report.residual == pytest.approx(1e-4)
    assert "runtime" not in report.as_dict(include_runtime=False)


class TestTorusBackend:
    def test_torus_hopf(self):
        report = torus_linking(*torus_hopf_pair())
        assert report.rounded == -1 and report.residual < 1e-8

    def test_geodesic_is_rejected(self):
        a = torus_hopf_pair()[0]
        geodesic = Knot.from_fourier([0, 0.5, 0.5], np.zeros((3, 1)), np.zeros((3, 1)), winding=[1, 0, 0],
                                     ambient="torus", name="g")
        with pytest.raises(HomologyError, match="not nullhomologous"):
            torus_linking(a, geodesic, modes=6)


class TestProbe:
    @pytest.mark.parametrize("s", [0.0, 2.1, 4.0])
    def test_torus_probe_around_circle(self, s):
        knot = torus_hopf_pair()[1]
        field = EwaldBiotSavart(knot, modes=12)
        point, frame, _ = knot_normal_frame(knot, s)
        assert b2_probe(field, None, point, frame, radius=0.02) == pytest.approx(1.0, abs=1e-6)

    def test_line_in_r4_is_exact(self):
        spec = LinearSubspaceSpec.coordinate(4, [4])
        field = lambda x: bs_linear_subspace_components(spec, x)
        value = b2_probe(field, None, [0, 0, 0, 1.5], spec.normal, radius=0.3, quad_n=64)
        assert abs(value - 1.0) < 1e-13

    def test_unsupported_codimension(self):
        with pytest.raises(ValueError):
            b2_probe(lambda x: x, None, np.zeros(5), np.eye(5)[:4], radius=0.1)

    def test_normal_frame_orientation(self, hopf):
        _, frame, tangent = knot_normal_frame(hopf[0], 1.3)
        assert np.linalg.det(np.vstack([frame, tangent])) == pytest.approx(1.0)
