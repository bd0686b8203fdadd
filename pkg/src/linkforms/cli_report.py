"""Batch front end: knot-file and config ingestion, suite orchestration, reports.

Every number that carries a verdict is recorded as a :class:`Metric` with
its tolerance and comparator.  The process exit code is nonzero exactly when
some metric fails.  Wall-clock timings never enter the main report; they go
to a ``<out>.timings.json`` sidecar so that identical inputs give
byte-identical reports for any worker count.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata, resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy
from scipy.special import gamma

from . import euclid_kernels as ek
from . import formtools as ft
from . import parametrix_asym as pa
from .calibration import SIGN_CONSTANTS
from .curves import Knot, KnotError
from .exterior_core import codiff_sign, current_op_sign
from .knots_linking import (DistanceError, HomologyError, LinkReport, crossing_linking, embed_in_torus, gauss_linking,
                            perturb_link, torus_linking)
from .torus_spectral import (current_from_knot, eval_form_at, heat_semigroup, verify_current_op_signs,
                             EwaldBiotSavart)

__all__ = [
    "SchemaError",
    "KnotSet",
    "RunConfig",
    "Metric",
    "Report",
    "load_knot_data",
    "parse_knot_file",
    "knot_file_data",
    "fixture_path",
    "run_linking_suite",
    "run_parametrix_suite",
    "run_signs_report",
    "run_kernel_eval",
    "run_heat_evolve",
    "emit_report",
    "main",
]

SCHEMA_VERSION = 1
TWO_PI = 2.0 * np.pi

FIXTURES = {
    "hopf": "hopf.json",
    "whitehead": "whitehead.json",
    "cable": "cable.json",
    "torus_hopf": "torus_hopf.json",
}


# -- knot files ------------------------------------------------------------------------

class SchemaError(ValueError):
    """A knot file or config violates its schema; the message names the field path."""


@dataclass(frozen=True)
class KnotSet:
    ambient: str
    dim: int
    knots: Tuple[Knot, ...]


def _require(obj: dict, key: str, kind, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{path}.{key}: missing")
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _numeric_array(value, shape_desc: str, path: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}: expected {shape_desc} of numbers") from None
    if arr.ndim != ndim:
        raise SchemaError(f"{path}: expected {shape_desc}, got an array of rank {arr.ndim}")
    return arr


def _knot_from_entry(entry: dict, ambient: str, dim: int, path: str) -> Knot:
    name = _require(entry, "name", str, path)
    rep = _require(entry, "representation", str, path)
    orientation = entry.get("orientation", 1)
    if orientation not in (1, -1):
        raise SchemaError(f"{path}.orientation: must be 1 or -1")
    data = _require(entry, "data", dict, path)
    try:
        if rep == "fourier":
            center = _numeric_array(_require(data, "center", list, f"{path}.data"), "a vector", f"{path}.data.center", 1)
            cos_c = _numeric_array(_require(data, "cos", list, f"{path}.data"), "a matrix", f"{path}.data.cos", 2)
            sin_c = _numeric_array(_require(data, "sin", list, f"{path}.data"), "a matrix", f"{path}.data.sin", 2)
            winding = data.get("winding", [0] * dim)
            if center.size != dim or cos_c.shape[0] != dim or sin_c.shape[0] != dim:
                raise SchemaError(f"{path}.data: coefficient rows must match dim={dim}")
            return Knot.from_fourier(center, cos_c, sin_c, winding, orientation, ambient, name)
        if rep == "samples":
            pts = _numeric_array(_require(data, "points", list, f"{path}.data"), "a matrix", f"{path}.data.points", 2)
            if pts.shape[1] != dim:
                raise SchemaError(f"{path}.data.points: rows must have dim={dim} entries")
            return Knot.from_samples(pts, orientation, ambient, name)
    except KnotError as err:
        raise type(err)(f"{path} (knot {name!r}): {err}") from err
    raise SchemaError(f"{path}.representation: expected 'fourier' or 'samples', got {rep!r}")


def load_knot_data(data: Any) -> KnotSet:
    """Validate a decoded knot file and construct its knots."""
    if not isinstance(data, dict):
        raise SchemaError("$: expected an object")
    version = _require(data, "schema", int, "$")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"$.schema: unsupported version {version}")
    ambient = _require(data, "ambient", str, "$")
    if ambient not in ("euclidean", "torus"):
        raise SchemaError(f"$.ambient: expected 'euclidean' or 'torus', got {ambient!r}")
    dim = _require(data, "dim", int, "$")
    if dim < 2:
        raise SchemaError("$.dim: must be at least 2")
    entries = _require(data, "knots", list, "$")
    knots = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError(f"$.knots[{i}]: expected an object")
        knots.append(_knot_from_entry(entry, ambient, dim, f"$.knots[{i}]"))
    names = [k.name for k in knots]
    if len(set(names)) != len(names):
        raise SchemaError("$.knots: knot names must be unique")
    return KnotSet(ambient, dim, tuple(knots))


def _read_knot_set(path) -> KnotSet:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise SchemaError(f"{path}: cannot read ({err.strerror})") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON at line {err.lineno}") from err
    return load_knot_data(data)


def parse_knot_file(path) -> List[Knot]:
    return list(_read_knot_set(path).knots)


def knot_file_data(knots: Sequence[Knot], ambient: Optional[str] = None) -> dict:
    """Serialise knots into the file schema using the Fourier representation."""
    ambient = ambient or (knots[0].ambient if knots else "euclidean")
    dim = knots[0].n if knots else 3
    return {
        "schema": SCHEMA_VERSION,
        "ambient": ambient,
        "dim": dim,
        "knots": [{"name": k.name, "representation": "fourier", "orientation": k.orientation,
                   "data": k.to_json_data()} for k in knots],
    }


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(FIXTURES)}")
    return Path(str(resources.files("linkforms") / "fixtures" / FIXTURES[name]))


# -- configuration ---------------------------------------------------------------------

_RANGES = {
    "modes": (2, 32),
    "quad": (16, 8192),
    "torus_quad": (64, 8192),
    "tube_res": (8, 512),
    "tolerance_scale": (1e-6, 1e6),
    "seed": (0, 2 ** 32 - 1),
    "workers": (1, 64),
    "isotopies": (0, 1000),
    "order": (0, 3),
}

_SECTIONS = {
    "run": ("seed", "format", "workers", "tolerance_scale"),
    "linking": ("modes", "quad", "torus_quad", "isotopies"),
    "parametrix": ("tube_res", "order", "quick"),
}


@dataclass(frozen=True)
class RunConfig:
    modes: int = 12
    quad: int = 256
    torus_quad: int = 512
    tube_res: Tuple[int, int, int] = (64, 64, 64)
    tolerance_scale: float = 1.0
    seed: int = 0
    format: str = "json"
    workers: int = 1
    isotopies: int = 0
    order: int = 2
    quick: str = "none"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tube_res", tuple(int(v) for v in self.tube_res))
        for name, (lo, hi) in _RANGES.items():
            value = getattr(self, name)
            values = value if isinstance(value, tuple) else (value,)
            if name == "tube_res" and len(values) != 3:
                raise SchemaError("tube_res: expected three resolutions (s, r, theta)")
            for v in values:
                if not lo <= v <= hi:
                    raise SchemaError(f"{name}: {v} outside [{lo}, {hi}]")
        if self.torus_quad & (self.torus_quad - 1):
            raise SchemaError("torus_quad: must be a power of two")
        if self.format not in ("json", "csv"):
            raise SchemaError(f"format: expected 'json' or 'csv', got {self.format!r}")
        if self.quick not in ("none", "line"):
            raise SchemaError(f"quick: expected 'none' or 'line', got {self.quick!r}")

    def tol(self, base: float) -> float:
        return base * self.tolerance_scale

    def as_dict(self) -> dict:
        out = asdict(self)
        out["tube_res"] = list(self.tube_res)
        return out

    def report_dict(self) -> dict:
        """Settings that can change results; the worker count is left out so reports match across pools."""
        out = self.as_dict()
        del out["workers"]
        return out

    @classmethod
    def from_sources(cls, path=None, **overrides) -> "RunConfig":
        """Defaults, then the key = value config file, then explicit overrides."""
        values: Dict[str, Any] = {}
        if path is not None:
            parser = configparser.ConfigParser()
            if not parser.read(path):
                raise SchemaError(f"{path}: cannot read config")
            known = {f.name: f for f in fields(cls)}
            for section in parser.sections():
                if section not in _SECTIONS:
                    raise SchemaError(f"[{section}]: unknown section")
                for key, raw in parser.items(section):
                    key = key.replace("-", "_")
                    if key not in _SECTIONS[section]:
                        raise SchemaError(f"[{section}].{key}: unknown key")
                    values[key] = _coerce(known[key].default, raw, f"[{section}].{key}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(default, raw: str, path: str):
    try:
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(","))
        return type(default)(raw.strip())
    except ValueError:
        raise SchemaError(f"{path}: cannot parse {raw!r}") from None


# -- reports ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metric:
    name: str
    value: float
    tolerance: float
    comparator: str  # "<=" or ">="
    passed: bool

    @classmethod
    def at_most(cls, name: str, value: float, tolerance: float) -> "Metric":
        return cls(name, float(value), float(tolerance), "<=", bool(value <= tolerance))

    @classmethod
    def at_least(cls, name: str, value: float, bound: float) -> "Metric":
        return cls(name, float(value), float(bound), ">=", bool(value >= bound))

    @classmethod
    def holds(cls, name: str, ok: bool) -> "Metric":
        return cls(name, 1.0 if ok else 0.0, 1.0, ">=", bool(ok))


@dataclass
class Report:
    suite: str
    config: dict
    results: dict
    metrics: List[Metric]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "config": self.config,
            "versions": _versions(),
            "sign_constants": dict(SIGN_CONSTANTS),
            "results": self.results,
            "metrics": [asdict(m) for m in self.metrics],
            "passed": self.passed,
        }


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"linkforms": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if np.isfinite(val) else repr(val)
    return obj


def render_report(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(_to_jsonable(report.to_dict()), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["suite", "metric", "value", "comparator", "tolerance", "passed"])
        for m in report.metrics:
            writer.writerow([report.suite, m.name, repr(m.value), m.comparator, repr(m.tolerance),
                             "pass" if m.passed else "fail"])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: Report, fmt: str = "json", out=None) -> Optional[Path]:
    """Write the report (and a timings sidecar next to it); stdout when ``out`` is None."""
    text = render_report(report, fmt)
    if out is None:
        sys.stdout.write(text)
        return None
    out = Path(out)
    sidecar = out.with_name(out.name + ".timings.json")
    try:
        out.write_text(text)
        sidecar.write_text(json.dumps(_to_jsonable(report.timings), sort_keys=True, indent=2) + "\n")
    except OSError as err:
        raise OSError(f"cannot write report to {out}: {err.strerror}") from err
    return out


def _run_tasks(func: Callable, tasks: Sequence, workers: int) -> List:
    """Map in order; a process pool when more than one worker is requested."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


# -- linking suite ---------------------------------------------------------------------

_EUCLID_TOL = 1e-3
_TORUS_TOL = 1e-2
_TORUS_MIN_DISTANCE = 0.05


def _pair_in_torus(k1: Knot, k2: Knot) -> Tuple[Optional[Tuple[Knot, Knot]], str]:
    """Rescale a Euclidean pair about its bounding-box centre into the fundamental cube."""
    lo = np.minimum(k1.bounding_box()[0], k2.bounding_box()[0])
    hi = np.maximum(k1.bounding_box()[1], k2.bounding_box()[1])
    mid = 0.5 * (lo + hi)
    extent = float(np.max(hi - mid))
    scale = min(0.5, 0.8 * np.pi / extent)
    pair = tuple(embed_in_torus(k.translated(-mid), scale) for k in (k1, k2))
    dist = pair[0].min_distance(pair[1], 512, TWO_PI)
    if dist < _TORUS_MIN_DISTANCE:
        return None, f"separation {dist:.3e} after scaling by {scale:g} is below {_TORUS_MIN_DISTANCE}"
    return pair, f"scaled by {scale:g}"


def _pair_in_space(k1: Knot, k2: Knot) -> Tuple[Optional[Tuple[Knot, Knot]], str]:
    """Lift a nullhomologous torus pair to R^3 when both curves sit inside one open cube."""
    lo = np.minimum(k1.bounding_box()[0], k2.bounding_box()[0])
    hi = np.maximum(k1.bounding_box()[1], k2.bounding_box()[1])
    if np.any(hi - lo >= TWO_PI):
        return None, "the pair does not fit in one fundamental cube"
    return (k1.with_ambient("euclidean"), k2.with_ambient("euclidean")), "lifted"


def _linking_item(task: Tuple) -> dict:
    """All applicable backends on one (possibly perturbed) pair."""
    k1, k2, ambient, isotopy, seed, cfg = task
    if isotopy:
        k1, k2 = perturb_link(k1, k2, seed, period=TWO_PI if ambient == "torus" else None)
    if ambient == "euclidean":
        space, space_note = (k1, k2), "given"
        torus, torus_note = _pair_in_torus(k1, k2)
    else:
        torus, torus_note = (k1, k2), "given"
        space, space_note = _pair_in_space(k1, k2)
    backends: Dict[str, dict] = {}
    timings: Dict[str, float] = {}
    notes = {"euclidean": space_note, "torus": torus_note}
    if space is not None:
        rep = gauss_linking(*space, quad_n=cfg.quad)
        backends["gauss"] = rep.as_dict(include_runtime=False)
        timings["gauss"] = rep.runtime
        tick = time.perf_counter()
        count = crossing_linking(*space, seed=seed)
        rep = LinkReport.from_raw("crossing", count, time.perf_counter() - tick, seed=seed)
        backends["crossing"] = rep.as_dict(include_runtime=False)
        timings["crossing"] = rep.runtime
    if torus is not None:
        rep = torus_linking(*torus, modes=cfg.modes, quad_n=cfg.torus_quad)
        backends["torus"] = rep.as_dict(include_runtime=False)
        timings["torus"] = rep.runtime
    return {"isotopy": isotopy, "seed": seed, "backends": backends, "notes": notes, "timings": timings}


def _isotopy_seed(base: int, pair_index: int, isotopy: int) -> int:
    return int(np.random.SeedSequence([base, pair_index, isotopy]).generate_state(1)[0])


def run_linking_suite(config: RunConfig, knot_file) -> Report:
    """Every backend on every pair of the file, plus seeded isotopies of each pair."""
    kset = knot_file if isinstance(knot_file, KnotSet) else _read_knot_set(knot_file)
    knots = kset.knots
    pairs, skipped = [], []
    for i in range(len(knots)):
        for j in range(i + 1, len(knots)):
            k1, k2 = knots[i], knots[j]
            nontrivial = [k for k in (k1, k2) if np.any(k.winding != 0)]
            if nontrivial:
                skipped.append({"pair": [k1.name, k2.name], "reason": "homology",
                                "detail": "; ".join(f"knot {k.name!r} has homology class "
                                                    f"{[int(w) for w in k.winding]}" for k in nontrivial)})
                continue
            pairs.append((k1, k2))
    tasks = [(k1, k2, kset.ambient, iso, _isotopy_seed(config.seed, p, iso), config)
             for p, (k1, k2) in enumerate(pairs) for iso in range(config.isotopies + 1)]
    start = time.perf_counter()
    try:
        outcomes = _run_tasks(_linking_item, tasks, config.workers)
    except (DistanceError, HomologyError, KnotError) as err:
        raise type(err)(f"linking suite: {err}") from err
    timings: Dict[str, float] = {}
    metrics: List[Metric] = []
    pair_results = []
    per = config.isotopies + 1
    for p, (k1, k2) in enumerate(pairs):
        label = f"{k1.name}~{k2.name}"
        items = outcomes[p * per:(p + 1) * per]
        names = sorted({b for it in items for b in it["backends"]})
        for it in items:
            tag = f"{label}/iso{it['isotopy']}"
            for b, t in it.pop("timings").items():
                timings[f"{tag}/{b}"] = t
            for b in names:
                rep = it["backends"].get(b)
                if rep is None:
                    continue
                tol = config.tol(_TORUS_TOL if b == "torus" else _EUCLID_TOL)
                metrics.append(Metric.at_most(f"{tag}/{b}.residual", rep["residual"], tol))
            rounded = {it["backends"][b]["rounded"] for b in names if b in it["backends"]}
            metrics.append(Metric.holds(f"{tag}/agreement", len(rounded) == 1))
        matrix = {a: {b: all(it["backends"][a]["rounded"] == it["backends"][b]["rounded"]
                             for it in items if a in it["backends"] and b in it["backends"])
                      for b in names} for a in names}
        values = sorted({it["backends"][b]["rounded"] for it in items for b in it["backends"]})
        pair_results.append({"pair": [k1.name, k2.name], "linking_number": values[0] if len(values) == 1 else None,
                             "agreement_matrix": matrix, "items": items})
    timings["total"] = time.perf_counter() - start
    results = {"ambient": kset.ambient, "knots": [k.name for k in knots], "pairs": pair_results,
               "skipped": skipped}
    return Report("link", config.report_dict(), results, metrics, timings)


# -- parametrix suite ------------------------------------------------------------------

ORDER_TIMES = tuple(float(t) for t in np.geomspace(4e-4, 1e-2, 6))
EXTENDIBILITY_RADII = (0.2, 0.1, 0.05, 0.025, 0.0125)
HJ_RADII = tuple(float(r) for r in np.geomspace(1e-3, 3.0, 300))


def _flat_item(kind: str, cfg: RunConfig) -> Tuple[List[Metric], dict]:
    """Line or coordinate geodesic: the recursion is trivial and the parametrix exact."""
    spec = pa.CurveGeometrySpec(kind)
    grid = pa.TubeGrid(spec, *cfg.tube_res)
    rec = pa.eta_recursion(spec, grid, cfg.order)
    metrics = [Metric.at_most(f"{kind}.eta{i}.max_abs", float(np.max(np.abs(rec.fields[i].values))), 0.0)
               for i in range(1, cfg.order + 1)]
    metrics += [Metric.at_most(f"{kind}.transport{i + 1}", r, 0.0) for i, r in enumerate(rec.residuals)]
    fit = pa.error_order_fit(rec, cfg.order, ORDER_TIMES)
    scale = [float(pa.heat_profile(0.0, t)) for t in ORDER_TIMES]
    rel = max(e / s for e, s in zip(fit.errors, scale))
    metrics.append(Metric.at_most(f"{kind}.relative_error", rel, cfg.tol(1e-12)))
    return metrics, {"errors": fit.errors, "times": fit.times}


def _circle_item(cfg: RunConfig) -> Tuple[List[Metric], dict]:
    spec = pa.CurveGeometrySpec("circle", 1.0)
    grid = pa.TubeGrid(spec, *cfg.tube_res)
    rec = pa.eta_recursion(spec, grid, cfg.order)
    metrics = [Metric.at_most(f"circle.transport{i + 1}", r, cfg.tol(1e-4)) for i, r in enumerate(rec.residuals)]
    fits = {}
    for order in range(cfg.order + 1):
        fit = pa.error_order_fit(rec, order, ORDER_TIMES)
        fits[order] = fit.as_dict()
        metrics.append(Metric.at_least(f"circle.slope{order}", fit.slope, order - 0.25 * cfg.tolerance_scale))
    return metrics, {"transport_residuals": rec.residuals, "series_tails": rec.series_tails, "fits": fits}


def _curvature_item(cfg: RunConfig) -> Tuple[List[Metric], dict]:
    metrics, detail = [], {}
    for rho in (1.0, 2.0, 4.0):
        spec = pa.CurveGeometrySpec("circle", rho)
        for method, tol in (("closed", 1e-6), ("numeric", 1e-3)):
            res = pa.mean_curvature_residual(spec, method)
            metrics.append(Metric.at_most(f"mean_curvature.rho{rho:g}.{method}", res, cfg.tol(tol)))
    spec = pa.CurveGeometrySpec("circle", 1.0)
    lim = pa.dstar_eta0_limit(spec)
    metrics.append(Metric.at_most("dstar_eta0.vertical", lim.residual, cfg.tol(1e-2)))
    metrics.append(Metric.at_most("dstar_eta0.horizontal", lim.horizontal, cfg.tol(1e-3)))
    detail["dstar_eta0"] = lim.as_dict()
    metrics.append(Metric.at_most("jacobian_identity", pa.jacobian_identity_residual(spec), cfg.tol(1e-8)))
    metrics.append(Metric.at_most("product_rule", pa.product_rule_residual(spec), cfg.tol(1e-6)))
    return metrics, detail


def _special_item(cfg: RunConfig) -> Tuple[List[Metric], dict]:
    metrics, detail = [], {}
    for j in range(1, 6):
        worst = 0.0
        for r in HJ_RADII:
            closed = pa.hj_eval(j, r, "closed")
            quad = pa.hj_eval(j, r, "quadrature")
            worst = max(worst, abs(closed - quad) / max(1.0, abs(quad)))
        metrics.append(Metric.at_most(f"hj{j}.closed_vs_quadrature", worst, cfg.tol(1e-9)))
    metrics.append(Metric.at_most("hj1.at_zero", abs(pa.hj_eval(1, 0.0) - 2.0), 0.0))
    limits = {}
    for j in (3, 4, 5):
        r = 0.01
        val = r ** (j - 2) * pa.hj_eval(j, r) / 2 ** (j - 2)
        limits[j] = val
        metrics.append(Metric.at_most(f"hj{j}.small_r_limit", abs(val - gamma(j / 2 - 1)), cfg.tol(1e-3)))
    detail["small_r_values"] = limits
    return metrics, detail


def _extendibility_point_item(cfg: RunConfig) -> Tuple[List[Metric], dict]:
    rep = pa.extendibility_probe(ek.bs_delta0_components, 2, np.zeros((1, 3)), np.eye(3),
                                 np.zeros((1, 0, 3)), EXTENDIBILITY_RADII)
    worst = max(rep.worst)
    return [Metric.at_most("extendibility.point.variation", worst, cfg.tol(1e-12)),
            Metric.holds("extendibility.point.verdict", rep.verdict)], rep.as_dict()


def _extendibility_geodesic_item(cfg: RunConfig) -> Tuple[List[Metric], dict]:
    geodesic = Knot.from_fourier([0.0, np.pi, np.pi], np.zeros((3, 1)), np.zeros((3, 1)), winding=[1, 0, 0],
                                 ambient="torus", name="geodesic")
    bs = EwaldBiotSavart(geodesic, modes=cfg.modes, quad_n=4096)
    base = np.array([[s, np.pi, np.pi] for s in (0.3, 2.0, 4.5)])
    normal = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    tangent = np.tile(np.array([[[1.0, 0.0, 0.0]]]), (3, 1, 1))
    rep = pa.extendibility_probe(bs, 1, base, normal, tangent, EXTENDIBILITY_RADII)
    monotone = all(b < a for a, b in zip(rep.worst, rep.worst[1:]))
    return [Metric.holds("extendibility.geodesic.verdict", rep.verdict),
            Metric.holds("extendibility.geodesic.monotone_tail", monotone)], rep.as_dict()


_PARAMETRIX_ITEMS: Dict[str, Callable[[RunConfig], Tuple[List[Metric], dict]]] = {
    "line": lambda cfg: _flat_item("line", cfg),
    "geodesic": lambda cfg: _flat_item("geodesic", cfg),
    "circle": _circle_item,
    "curvature": _curvature_item,
    "special_functions": _special_item,
    "extendibility_point": _extendibility_point_item,
    "extendibility_geodesic": _extendibility_geodesic_item,
}


def _parametrix_item(task: Tuple[str, RunConfig]) -> Tuple[str, List[Metric], dict, float]:
    name, cfg = task
    start = time.perf_counter()
    metrics, detail = _PARAMETRIX_ITEMS[name](cfg)
    return name, metrics, detail, time.perf_counter() - start


def run_parametrix_suite(config: RunConfig) -> Report:
    """Heat-parametrix checks; ``quick = "line"`` runs only the straight line.

    A recursion depth the grid cannot resolve raises
    :class:`~linkforms.parametrix_asym.ResolutionError` naming the stage and
    a refinement to try.
    """
    names = ["line"] if config.quick == "line" else list(_PARAMETRIX_ITEMS)
    start = time.perf_counter()
    outcomes = _run_tasks(_parametrix_item, [(n, config) for n in names], config.workers)
    metrics, results, timings = [], {}, {}
    for name, item_metrics, detail, runtime in outcomes:
        metrics.extend(item_metrics)
        results[name] = detail
        timings[name] = runtime
    timings["total"] = time.perf_counter() - start
    return Report("parametrix", config.report_dict(), results, metrics, timings)


# -- sign ledger report ----------------------------------------------------------------

def linking_sign_table(n: int) -> List[dict]:
    """Relative signs of the four intersection counts that define lk(K1, K2).

    For knots of dimensions k and n-k-1, the counts I(S1 x K2, diagonal),
    I(K1 x S2, diagonal), I(S1, K2) and I(K1, S2) equal lk times
    1, (-1)^k, (-1)^(n-k-1) and (-1)^n respectively.
    """
    rows = []
    for k in range(0, n):
        rows.append({"n": n, "k": k, "surface1_x_knot2": 1, "knot1_x_surface2": (-1) ** k,
                     "surface1_knot2": (-1) ** (n - k - 1), "knot1_surface2": (-1) ** n})
    return rows


def run_signs_report(config: RunConfig, n: int = 3) -> Report:
    start = time.perf_counter()
    check = verify_current_op_signs(samples=100, n=n, modes=4, seed=config.seed)
    metrics = []
    for k, residuals in sorted(check["identities"].items()):
        for op, val in sorted(residuals.items()):
            metrics.append(Metric.at_most(f"current_ops.k{k}.{op}", val, config.tol(1e-12)))
    results = {
        "codifferential_signs": {str(k): codiff_sign(n, k) for k in range(n + 1)},
        "current_operator_signs": {op: {str(k): current_op_sign(op, n, k) for k in range(n + 1)}
                                   for op in ("d", "dstar", "green")},
        "linking_signs": linking_sign_table(n),
        "current_identity_residuals": check["identities"],
        "skipped": check["skipped"],
    }
    return Report("signs", config.report_dict(), results, metrics, {"total": time.perf_counter() - start})


# -- pointwise kernels and heat snapshots ----------------------------------------------

def _parse_points(text: str, dim: Optional[int] = None) -> np.ndarray:
    try:
        pts = np.array([[float(v) for v in chunk.split(",")] for chunk in text.split(";") if chunk.strip()])
    except ValueError:
        raise SchemaError(f"cannot parse points {text!r}; expected 'x,y,z;x,y,z'") from None
    if pts.ndim != 2 or (dim is not None and pts.shape[1] != dim):
        raise SchemaError(f"points {text!r} must all have {dim or 'the same number of'} coordinates")
    return pts


def _coeff_rows(value: ek.DoubleFormValue) -> List[dict]:
    return [{"x": list(a.indices), "y": list(b.indices), "value": v}
            for (a, b), v in sorted(value.coeffs.items(), key=lambda kv: (kv[0][0].indices, kv[0][1].indices))]


def run_kernel_eval(config: RunConfig, kind: str, x: np.ndarray, y: Optional[np.ndarray] = None,
                    degree: int = 0, axes: Sequence[int] = ()) -> Report:
    """Evaluate one kernel at one point (pair) and check that it is finite and, where it applies, closed."""
    n = x.size
    metrics = []
    if kind == "delta0":
        value = ek.bs_delta0_value(x)
        residual = np.max(np.abs(ft.fd_exterior_derivative(ek.bs_delta0_components, x, n, n - 1, h=1e-4)))
        metrics.append(Metric.at_most("closedness", float(residual) / max(1.0, max(map(abs, value.coeffs.values()))),
                                      config.tol(1e-8)))
    elif kind == "diagonal":
        if y is None:
            raise SchemaError("the diagonal kernel needs a second point")
        value = ek.bs_diagonal_value(x, y)
    elif kind == "green":
        if y is None:
            raise SchemaError("the Green kernel needs a second point")
        value = ek.green_kernel_value(x, y, degree)
    elif kind == "subspace":
        spec = ek.LinearSubspaceSpec.coordinate(n, axes)
        value = ek.bs_linear_subspace_value(spec, x)

        def field_fn(pts):
            return ek.bs_linear_subspace_components(spec, pts)

        residual = np.max(np.abs(ft.fd_exterior_derivative(field_fn, x, n, spec.codim - 1, h=1e-4)))
        metrics.append(Metric.at_most("closedness", float(residual) / max(1.0, max(map(abs, value.coeffs.values()))),
                                      config.tol(1e-8)))
    else:
        raise SchemaError(f"unknown kernel {kind!r}")
    finite = all(np.isfinite(v) for v in value.coeffs.values())
    metrics.append(Metric.holds("finite", finite))
    results = {"kernel": kind, "x": x.tolist(), "y": None if y is None else y.tolist(), "degree": degree,
               "bidegree": [value.p, value.q], "coefficients": _coeff_rows(value)}
    return Report("kernel", config.report_dict(), results, metrics, {})


def run_heat_evolve(config: RunConfig, knot_file, name: str, times: Sequence[float], points: np.ndarray) -> Report:
    """Heat-evolved current of one knot at the given points and times (R^3 quadrature or torus spectrum)."""
    kset = knot_file if isinstance(knot_file, KnotSet) else _read_knot_set(knot_file)
    matches = [k for k in kset.knots if k.name == name]
    if not matches:
        raise SchemaError(f"no knot named {name!r}; available: {[k.name for k in kset.knots]}")
    knot = matches[0]
    start = time.perf_counter()
    snapshots, metrics = [], []
    if kset.ambient == "torus":
        current = current_from_knot(knot, config.modes, config.torus_quad)
    for t in times:
        if not t > 0:
            raise SchemaError(f"times must be positive, got {t}")
        if kset.ambient == "torus":
            vals = eval_form_at(heat_semigroup(current.form, t), points)
        else:
            vals = ek.heat_evolve_components(knot, t, points)
        snapshots.append({"t": float(t), "values": np.asarray(vals).tolist()})
        metrics.append(Metric.holds(f"t{t:g}.finite", bool(np.all(np.isfinite(vals)))))
        if kset.ambient == "torus":
            # size of the first discarded Fourier shell relative to the zero mode
            tail = float(np.exp(-t * (config.modes + 1) ** 2))
            metrics.append(Metric.at_most(f"t{t:g}.spectral_tail", tail, config.tol(1e-6)))
    results = {"ambient": kset.ambient, "knot": name, "points": points.tolist(), "snapshots": snapshots,
               "basis": [list(i.indices) for i in ft.basis(knot.n, knot.n - 1)]}
    return Report("heat", config.report_dict(), results, metrics, {"total": time.perf_counter() - start})


# -- command line ----------------------------------------------------------------------

def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file with [run], [linking], [parametrix] sections")
    p.add_argument("--modes", type=int, help="Fourier cutoff M for torus backends (default 12)")
    p.add_argument("--quad", type=int, help="Gauss-integral nodes per curve (default 256)")
    p.add_argument("--torus-quad", type=int, help="curve nodes for torus currents (default 512)")
    p.add_argument("--tube-res", help="tube grid resolutions s,r,theta (default 64,64,64)")
    p.add_argument("--seed", type=int, help="base seed for isotopies and projections (default 0)")
    p.add_argument("--out", help="report path; a .timings.json sidecar is written next to it")
    p.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    p.add_argument("--tolerance-scale", type=float, help="multiply every tolerance (default 1)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkforms", description="Linking forms, kernels and heat asymptotics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link", help="linking numbers of every pair in a knot file")
    p.add_argument("knot_file", help="JSON knot file, or fixture:<name>")
    p.add_argument("--isotopies", type=int, help="seeded perturbations per pair (default 0)")
    _common_flags(p)

    p = sub.add_parser("kernel", help="pointwise kernel values")
    ksub = p.add_subparsers(dest="action", required=True)
    q = ksub.add_parser("eval")
    q.add_argument("kind", choices=("delta0", "diagonal", "green", "subspace"))
    q.add_argument("--x", required=True, help="comma-separated point")
    q.add_argument("--y", help="second point for two-point kernels")
    q.add_argument("--degree", type=int, default=0, help="form degree for the Green kernel")
    q.add_argument("--axes", default="1", help="1-based coordinate axes spanning the subspace")
    _common_flags(q)

    p = sub.add_parser("heat", help="heat-evolved knot currents")
    hsub = p.add_subparsers(dest="action", required=True)
    q = hsub.add_parser("evolve")
    q.add_argument("knot_file")
    q.add_argument("--knot", required=True, help="name of the knot to evolve")
    q.add_argument("--times", required=True, help="comma-separated positive times")
    q.add_argument("--points", required=True, help="points as 'x,y,z;x,y,z'")
    _common_flags(q)

    p = sub.add_parser("parametrix", help="small-time heat asymptotics suite")
    p.add_argument("--order", type=int, help="parametrix order N (default 2)")
    p.add_argument("--quick", choices=("none", "line"), help="'line' runs only the straight-line case")
    _common_flags(p)

    p = sub.add_parser("signs", help="sign conventions and their numerical checks")
    _common_flags(p)
    return parser


def _resolve_knot_file(arg: str):
    if arg.startswith("fixture:"):
        return fixture_path(arg.split(":", 1)[1])
    return Path(arg)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    tube = None
    if getattr(args, "tube_res", None):
        try:
            tube = tuple(int(v) for v in args.tube_res.split(","))
        except ValueError:
            raise SchemaError(f"--tube-res: cannot parse {args.tube_res!r}") from None
    return RunConfig.from_sources(
        args.config, modes=args.modes, quad=args.quad, torus_quad=args.torus_quad, tube_res=tube, seed=args.seed,
        format=args.format, tolerance_scale=args.tolerance_scale, workers=args.workers,
        isotopies=getattr(args, "isotopies", None), order=getattr(args, "order", None),
        quick=getattr(args, "quick", None))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "link":
            report = run_linking_suite(cfg, _resolve_knot_file(args.knot_file))
        elif args.command == "kernel":
            x = _parse_points(args.x)[0]
            y = _parse_points(args.y, x.size)[0] if args.y else None
            axes = [int(a) for a in args.axes.split(",") if a.strip()]
            report = run_kernel_eval(cfg, args.kind, x, y, args.degree, axes)
        elif args.command == "heat":
            times = [float(t) for t in args.times.split(",")]
            report = run_heat_evolve(cfg, _resolve_knot_file(args.knot_file), args.knot, times,
                                     _parse_points(args.points))
        elif args.command == "parametrix":
            report = run_parametrix_suite(cfg)
        else:
            report = run_signs_report(cfg)
        emit_report(report, cfg.format, args.out)
    except (SchemaError, KnotError, ValueError, RuntimeError, OSError, KeyError) as err:
        print(f"linkforms: error: {err}", file=sys.stderr)
        return 2
    failed = [m.name for m in report.metrics if not m.passed]
    for name in failed:
        print(f"linkforms: FAIL {name}", file=sys.stderr)
    return 1 if failed else 0
