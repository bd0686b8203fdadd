import csv
import io
import json

import numpy as np
import pytest

from linkforms.cli_report import (FIXTURES, KnotSet, Metric, Report, RunConfig, SchemaError, emit_report,
                                  fixture_path, knot_file_data, linking_sign_table, load_knot_data, main,
                                  parse_knot_file, render_report, run_heat_evolve, run_kernel_eval,
                                  run_linking_suite, run_parametrix_suite)
from linkforms.curves import ClosureError, Knot, KnotError
from linkforms.knots_linking import gauss_linking


def circle_samples(count=64, radius=1.0, shift=(0.0, 0.0, 0.0)):
    s = 2 * np.pi * np.arange(count + 1) / count
    return (np.stack([radius * np.cos(s), radius * np.sin(s), 0 * s], axis=-1) + np.array(shift)).tolist()


def knot_doc(*entries, ambient="euclidean", dim=3):
    return {"schema": 1, "ambient": ambient, "dim": dim, "knots": list(entries)}


def fourier_entry(name, center=(0, 0, 0), cos=((1,), (0,), (0,)), sin=((0,), (1,), (0,)), **extra):
    data = {"center": list(center), "cos": [list(r) for r in cos], "sin": [list(r) for r in sin]}
    data.update(extra)
    return {"name": name, "representation": "fourier", "data": data}


def write(tmp_path, doc, name="knots.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestKnotFiles:
    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_fixtures_parse(self, name):
        assert len(parse_knot_file(fixture_path(name))) == 2

    def test_unknown_fixture(self):
        with pytest.raises(KeyError):
            fixture_path("trefoil")

    def test_open_curve_names_the_knot(self, tmp_path):
        pts = circle_samples()
        pts[-1] = [0.5, 0.5, 0.0]
        doc = knot_doc({"name": "broken", "representation": "samples", "data": {"points": pts}})
        with pytest.raises(ClosureError, match=r"\$\.knots\[0\] \(knot 'broken'\)"):
            parse_knot_file(write(tmp_path, doc))

    def test_samples_and_fourier_agree(self, tmp_path):
        partner = fourier_entry("partner", center=(1, 0, 0), cos=((1,), (0,), (0,)), sin=((0,), (0,), (1,)))
        sampled = knot_doc({"name": "c", "representation": "samples", "data": {"points": circle_samples()}}, partner)
        fourier = knot_doc(fourier_entry("c"), partner)
        a = parse_knot_file(write(tmp_path, sampled, "a.json"))
        b = parse_knot_file(write(tmp_path, fourier, "b.json"))
        assert abs(gauss_linking(*a).raw - gauss_linking(*b).raw) <= 1e-8

    @pytest.mark.parametrize("mutate, path", [
        (lambda d: d.update(schema=2), r"\$\.schema"),
        (lambda d: d.update(ambient="sphere"), r"\$\.ambient"),
        (lambda d: d.pop("knots"), r"\$\.knots: missing"),
        (lambda d: d["knots"][0]["data"].update(center=[0, 0]), r"\$\.knots\[0\]\.data"),
        (lambda d: d["knots"][0]["data"].update(center="origin"), r"\$\.knots\[0\]\.data\.center"),
        (lambda d: d["knots"][0].update(representation="spline"), r"\$\.knots\[0\]\.representation"),
        (lambda d: d["knots"][0].update(orientation=2), r"\$\.knots\[0\]\.orientation"),
        (lambda d: d["knots"].append(d["knots"][0]), r"unique"),
    ])
    def test_schema_errors_name_the_field(self, mutate, path):
        doc = knot_doc(fourier_entry("a"))
        mutate(doc)
        with pytest.raises(SchemaError, match=path):
            load_knot_data(doc)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError, match="invalid JSON"):
            parse_knot_file(path)

    def test_round_trip(self):
        knots = parse_knot_file(fixture_path("whitehead"))
        again = load_knot_data(knot_file_data(knots)).knots
        for a, b in zip(knots, again):
            assert a.name == b.name and np.array_equal(a.cos_coeffs, b.cos_coeffs)


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.modes, cfg.quad, cfg.torus_quad, cfg.tube_res) == (12, 256, 512, (64, 64, 64))
        assert cfg.tol(1e-3) == 1e-3

    @pytest.mark.parametrize("kwargs", [dict(modes=1), dict(torus_quad=600), dict(tube_res=(64, 64)),
                                        dict(format="xml"), dict(workers=0), dict(order=4), dict(quick="all")])
    def test_range_errors(self, kwargs):
        with pytest.raises(SchemaError):
            RunConfig(**kwargs)

    def test_config_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("[run]\nseed = 5\nformat = csv\n[linking]\nmodes = 8\n[parametrix]\ntube_res = 16,16,32\n")
        cfg = RunConfig.from_sources(path, modes=10)
        assert (cfg.seed, cfg.format, cfg.modes, cfg.tube_res) == (5, "csv", 10, (16, 16, 32))

    @pytest.mark.parametrize("text, match", [("[extra]\na = 1\n", "unknown section"),
                                             ("[run]\nmodes = 3\n", "unknown key"),
                                             ("[linking]\nmodes = many\n", "cannot parse")])
    def test_config_file_errors(self, tmp_path, text, match):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        with pytest.raises(SchemaError, match=match):
            RunConfig.from_sources(path)


@pytest.fixture(scope="module")
def hopf_report():
    return run_linking_suite(RunConfig(), fixture_path("hopf"))


class TestReports:
    def test_hopf_suite(self, hopf_report):
        pair = hopf_report.results["pairs"][0]
        assert pair["linking_number"] == -1
        assert set(pair["agreement_matrix"]) == {"gauss", "crossing", "torus"}
        assert hopf_report.passed

    def test_json_round_trip(self, hopf_report):
        data = json.loads(render_report(hopf_report, "json"))
        assert data["suite"] == "link" and data["passed"] is True
        assert data["sign_constants"]["gauss_integral"] == -1
        assert len(data["metrics"]) == len(hopf_report.metrics)
        assert "timings" not in data

    def test_csv_has_one_row_per_metric(self, hopf_report):
        rows = list(csv.reader(io.StringIO(render_report(hopf_report, "csv"))))
        assert rows[0] == ["suite", "metric", "value", "comparator", "tolerance", "passed"]
        assert len(rows) - 1 == len(hopf_report.metrics)

    def test_sidecar(self, hopf_report, tmp_path):
        out = tmp_path / "report.json"
        emit_report(hopf_report, "json", out)
        timings = json.loads((tmp_path / "report.json.timings.json").read_text())
        assert "total" in timings

    def test_single_knot_has_no_pairs(self, tmp_path):
        path = write(tmp_path, knot_doc(fourier_entry("alone")))
        report = run_linking_suite(RunConfig(), path)
        assert report.results["pairs"] == [] and report.metrics == []
        assert main(["link", str(path)]) == 0

    def test_geodesic_pair_is_skipped(self, tmp_path):
        circle = fourier_entry("loop", center=(3, 3, 3), cos=((0.5,), (0,), (0,)), sin=((0,), (0.5,), (0,)))
        line = fourier_entry("line", center=(0, 1, 1), cos=((0,), (0,), (0,)), sin=((0,), (0,), (0,)),
                             winding=[1, 0, 0])
        report = run_linking_suite(RunConfig(), write(tmp_path, knot_doc(circle, line, ambient="torus")))
        assert report.results["skipped"][0]["reason"] == "homology"
        assert "[1, 0, 0]" in report.results["skipped"][0]["detail"]

    def test_failed_metric_fails_report(self):
        report = Report("x", {}, {}, [Metric.at_most("a", 2.0, 1.0), Metric.holds("b", True)])
        assert not report.passed

    def test_quick_line_is_exact(self):
        report = run_parametrix_suite(RunConfig(quick="line"))
        assert report.passed
        assert {m.name: m.value for m in report.metrics}["line.eta1.max_abs"] == 0.0

    def test_kernel_eval(self):
        report = run_kernel_eval(RunConfig(), "delta0", np.array([1.0, 0.0, 0.0]))
        assert report.passed
        rows = report.results["coefficients"]
        assert rows == [{"x": [2, 3], "y": [], "value": pytest.approx(1 / (4 * np.pi))}]

    def test_heat_evolve_on_torus(self):
        report = run_heat_evolve(RunConfig(modes=8), fixture_path("torus_hopf"), "torus_hopf_a", [0.5],
                                 np.array([[3.0, 3.0, 3.0]]))
        assert report.passed and len(report.results["snapshots"]) == 1

    def test_sign_table(self):
        rows = linking_sign_table(3)
        assert rows[1] == {"n": 3, "k": 1, "surface1_x_knot2": 1, "knot1_x_surface2": -1,
                           "surface1_knot2": -1, "knot1_surface2": -1}


class TestMain:
    def test_link_fixture(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        assert main(["link", "fixture:hopf", "--format", "csv", "--out", str(out)]) == 0
        assert out.read_text().startswith("suite,metric")

    def test_unknown_fixture_exits_two(self, capsys):
        assert main(["link", "fixture:nope"]) == 2
        assert "unknown fixture" in capsys.readouterr().err

    def test_bad_config_exits_two(self, capsys):
        assert main(["signs", "--modes", "99"]) == 2
        assert "modes" in capsys.readouterr().err

    def test_signs(self, capsys):
        assert main(["signs"]) == 0
        assert json.loads(capsys.readouterr().out)["suite"] == "signs"

    def test_kernel_subspace(self, capsys):
        assert main(["kernel", "eval", "subspace", "--x", "1,0,0,0", "--axes", "4"]) == 0
        rows = json.loads(capsys.readouterr().out)["results"]["coefficients"]
        assert rows[0]["x"] == [2, 3]

    def test_failing_metric_exits_one(self, capsys):
        assert main(["kernel", "eval", "delta0", "--x", "0.001,0,0", "--tolerance-scale", "1e-6"]) == 1
        assert "FAIL closedness" in capsys.readouterr().err
