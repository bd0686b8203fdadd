"""The ten acceptance criteria, each recorded as one pass/fail line in the run summary."""

import time

import numpy as np
import pytest
from scipy.special import gamma

from linkforms.cli_report import RunConfig, fixture_path, render_report, run_linking_suite, run_parametrix_suite
from linkforms.curves import Knot
from linkforms.euclid_kernels import LinearSubspaceSpec, bs_linear_subspace_components
from linkforms.knots_linking import b2_probe, gauss_linking, hopf_pair, knot_normal_frame
from linkforms.parametrix_asym import hj_eval
from linkforms.torus_spectral import (EwaldBiotSavart, current_from_knot, d_form, dlf2_identity_residual,
                                      dlf_identity_residual, dstar_form, hodge_star_torus, inner_product,
                                      laplace_form, random_form, verify_current_op_signs)

SAMPLES = 100


@pytest.fixture(scope="module")
def parametrix_report():
    return run_parametrix_suite(RunConfig())


def metric_values(report, prefix=""):
    return {m.name: m.value for m in report.metrics if m.name.startswith(prefix)}


def test_01_gauss_hopf(acceptance):
    start = time.perf_counter()
    report = gauss_linking(*hopf_pair(), quad_n=256)
    elapsed = time.perf_counter() - start
    ok = abs(report.rounded) == 1 and report.residual <= 1e-6 and elapsed <= 5.0
    acceptance(1, "Gauss integral on the Hopf pair", ok,
               f"raw {report.raw:.12f}, residual {report.residual:.1e}, {elapsed:.2f} s")
    assert ok


@pytest.mark.slow
def test_02_backend_agreement(acceptance):
    start = time.perf_counter()
    failures, count = [], 0
    for name in ("hopf", "whitehead", "cable", "torus_hopf"):
        report = run_linking_suite(RunConfig(isotopies=20), fixture_path(name))
        pair = report.results["pairs"][0]
        count += len(pair["items"])
        backends = set(pair["agreement_matrix"])
        if pair["linking_number"] is None or backends != {"gauss", "crossing", "torus"}:
            failures.append(f"{name}: backends {sorted(backends)}, value {pair['linking_number']}")
        failures += [f"{name}: {m.name} = {m.value:.2e}" for m in report.metrics if not m.passed]
    elapsed = time.perf_counter() - start
    ok = not failures and count == 4 * 21 and elapsed <= 600
    acceptance(2, "three linking backends agree on 4 fixtures x 20 isotopies", ok,
               f"{count} configurations, {elapsed:.0f} s" + (f"; {failures[:3]}" if failures else ""))
    assert ok, failures


def test_03_hodge_identities(acceptance):
    rng = np.random.default_rng(3)
    n, modes, worst = 3, 4, 0.0
    for k in range(n + 1):
        for _ in range(SAMPLES):
            omega = random_form(rng, n, k, modes, decay=2.0)
            scale = max(1.0, laplace_form(omega).max_abs())
            residuals = []
            if k <= n - 2:
                residuals.append(d_form(d_form(omega)).max_abs())
            if k >= 2:
                residuals.append(dstar_form(dstar_form(omega)).max_abs())
            lap = laplace_form(omega)
            if k > 0:
                lap = lap - d_form(dstar_form(omega))
            if k < n:
                lap = lap - dstar_form(d_form(omega))
            residuals.append(lap.max_abs())
            residuals.append((hodge_star_torus(hodge_star_torus(omega)) - omega.scaled((-1) ** (k * (n - k)))).max_abs())
            # star Laplacian star = (-1)^{k(n-k)} Laplacian
            sls = hodge_star_torus(laplace_form(hodge_star_torus(omega)))
            residuals.append((sls - laplace_form(omega).scaled((-1) ** (k * (n - k)))).max_abs())
            if k < n:
                beta = random_form(rng, n, k + 1, modes, decay=2.0)
                lhs, rhs = inner_product(d_form(omega), beta), inner_product(omega, dstar_form(beta))
                residuals.append(abs(lhs - rhs) / max(1.0, abs(lhs)))
            worst = max(worst, max(residuals) / scale)
    signs = verify_current_op_signs(samples=SAMPLES, n=n, modes=modes, seed=3)["max_residual"]
    ok = worst <= 1e-12 and signs <= 1e-12
    acceptance(3, "Hodge identities on the truncated torus", ok,
               f"identities {worst:.1e}, current signs {signs:.1e}")
    assert ok


def test_04_green_kernel_identities(acceptance):
    residuals = {f"lap{k}": dlf_identity_residual(k, modes=12) for k in range(4)}
    residuals.update({f"dstar{k}": dlf2_identity_residual(k, modes=12) for k in range(4)})
    residuals["dstar_total"] = dlf2_identity_residual(None, modes=12)
    worst = max(residuals.values())
    ok = worst <= 1e-13
    acceptance(4, "Green-kernel Laplacian and codifferential identities, M = 12", ok, f"max {worst:.1e}")
    assert ok


def test_05a_special_functions_closed_forms(parametrix_report):
    values = metric_values(parametrix_report, "hj")
    assert all(values[f"hj{j}.closed_vs_quadrature"] <= 1e-9 for j in range(1, 6))
    assert values["hj1.at_zero"] == 0.0
    assert all(values[f"hj{j}.small_r_limit"] <= 1e-3 for j in (4, 5))


@pytest.mark.xfail(strict=True, reason="r H_3(r) / 2 = sqrt(pi) - r + O(r^3), so at r = 0.01 the deficit is "
                                       "0.01, ten times the 1e-3 allowance")
def test_05_special_functions(acceptance, parametrix_report):
    values = metric_values(parametrix_report, "hj")
    closed = max(values[f"hj{j}.closed_vs_quadrature"] for j in range(1, 6))
    r = 0.01
    limits = {j: abs(r ** (j - 2) * hj_eval(j, r) / 2 ** (j - 2) - gamma(j / 2 - 1)) for j in (3, 4, 5)}
    ok = closed <= 1e-9 and hj_eval(1, 0.0) == 2.0 and max(limits.values()) <= 1e-3
    acceptance(5, "H_j closed forms, H_1(0) = 2, small-r limits", ok,
               f"closed vs quadrature {closed:.1e}; limit gaps at r = 0.01 " +
               ", ".join(f"j={j}: {v:.1e}" for j, v in limits.items()))
    assert ok


def test_06_parametrix_error_order(acceptance):
    start = time.perf_counter()
    report = run_parametrix_suite(RunConfig())  # timed on its own, separately from the shared fixture
    elapsed = time.perf_counter() - start
    values = metric_values(report)
    slopes = {n: values[f"circle.slope{n}"] for n in (1, 2)}
    line = max(values["line.relative_error"], values["line.eta1.max_abs"], values["line.eta2.max_abs"])
    ok = all(slopes[n] >= n - 0.25 for n in (1, 2)) and line <= 1e-12 and elapsed <= 300
    acceptance(6, "parametrix error order on the unit circle, exact on the line", ok,
               f"slopes N=1 {slopes[1]:.2f}, N=2 {slopes[2]:.2f}; line {line:.1e}; suite {elapsed:.0f} s")
    assert ok


def test_07_mean_curvature(acceptance, parametrix_report):
    values = metric_values(parametrix_report)
    closed = max(values[f"mean_curvature.rho{r}.closed"] for r in (1, 2, 4))
    numeric = max(values[f"mean_curvature.rho{r}.numeric"] for r in (1, 2, 4))
    vertical, horizontal = values["dstar_eta0.vertical"], values["dstar_eta0.horizontal"]
    ok = closed <= 1e-6 and numeric <= 1e-3 and vertical <= 1e-2 and horizontal <= 1e-3
    acceptance(7, "mean curvature from j and the codifferential of eta_0", ok,
               f"closed {closed:.1e}, numeric {numeric:.1e}, vertical {vertical:.1e}, horizontal {horizontal:.1e}")
    assert ok


def test_08_transverse_disk_probe(acceptance):
    circle = Knot.from_fourier([np.pi] * 3, [[0.5], [0], [0]], [[0], [0.5], [0]], ambient="torus", name="probe")
    current = current_from_knot(circle, modes=12)
    field = EwaldBiotSavart(circle, modes=12, current=current)
    torus_values = []
    for s in (0.0, 2.0, 4.0):
        point, frame, _ = knot_normal_frame(circle, s)
        torus_values.append(b2_probe(field, None, point, frame, radius=0.05))
    spec = LinearSubspaceSpec.coordinate(4, [4])
    flat = b2_probe(lambda x: bs_linear_subspace_components(spec, x), None, [0, 0, 0, 0.7], spec.normal, 0.4,
                    quad_n=64)
    torus_gap = max(abs(v - 1.0) for v in torus_values)
    ok = current.harmonic_norm < 1e-12 and torus_gap <= 1e-2 and abs(flat - 1.0) <= 1e-12
    acceptance(8, "transverse-disk probe equals 1", ok,
               f"torus gap {torus_gap:.1e} over 3 base points, R^4 line gap {abs(flat - 1.0):.1e}")
    assert ok


def test_09_extendibility(acceptance, parametrix_report):
    values = metric_values(parametrix_report, "extendibility")
    worst = parametrix_report.results["extendibility_geodesic"]["worst"]
    ok = (values["extendibility.point.variation"] <= 1e-12 and values["extendibility.point.verdict"] == 1.0
          and values["extendibility.geodesic.verdict"] == 1.0 and all(b < a for a, b in zip(worst, worst[1:])))
    acceptance(9, "blow-up extendibility of the point and geodesic Biot-Savart forms", ok,
               f"point variation {values['extendibility.point.variation']:.1e}; geodesic tail "
               + ", ".join(f"{w:.1e}" for w in worst))
    assert ok


def test_10_determinism(acceptance):
    texts = {}
    for workers in (1, 4, 8):
        cfg = RunConfig(workers=workers, isotopies=3, seed=11)
        link = render_report(run_linking_suite(cfg, fixture_path("hopf")), "json")
        line = render_report(run_parametrix_suite(RunConfig(workers=workers, quick="line")), "json")
        texts[workers] = (link, line)
    ok = texts[1] == texts[4] == texts[8]
    acceptance(10, "reports are byte-identical across 1, 4 and 8 workers", ok,
               f"{len(texts[1][0])} + {len(texts[1][1])} bytes per run")
    assert ok
