"""Config-driven experiment runner: ``lab <kind> --config file.yaml [--out dir]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import yaml

from . import __version__

RECORD_SCHEMA = "scatlab.run/1"


class UsageError(Exception):
    pass


@dataclass
class Outcome:
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    metrics: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)  # name -> callable(fig)
    raw: dict = field(default_factory=dict)  # CSV tables without an automatic plot
    documents: dict = field(default_factory=dict)  # name -> JSON-able object
    failure: str | None = None


@dataclass(frozen=True)
class Experiment:
    kind: str
    description: str
    topic: str
    required: tuple
    columns: dict
    runner: Callable


# --------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_DECAY = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["power_law", "exponential", "stretched_exp", "product", "power"]},
                   "params": {"type": "object"}},
}
_METRIC = {
    "type": "object",
    "properties": {"end_kind": {"enum": ["cusp", "cylinder", "custom_profile"]},
                   "n": {"type": "integer", "minimum": 1},
                   "params": {"type": "object"}, "core_floor": _POS},
}

BASE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "expect": {"type": "boolean"},
        "end": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["cusp", "cylinder"]}, "n": {"type": "integer", "minimum": 1},
                           "side": _POS, "circumference": _POS, "modes": {"type": "integer", "minimum": 1}},
        },
        "mode": {"type": "integer", "minimum": 0},
        "grid": {
            "type": "object",
            "required": ["stop", "points"],
            "additionalProperties": False,
            "properties": {"stop": _POS, "points": {"type": "integer", "minimum": 3}, "start": _NUM,
                           "spacing": {"enum": ["uniform", "geometric"]},
                           "formulation": {"enum": ["log_x", "cusp_u"]}},
        },
        "perturbation": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {"type": {"enum": ["none", "square_well", "envelope"]},
                           "depth": _NUM, "width": _POS, "start": _NUM, "profile": _DECAY,
                           "p_amp": _NUM, "w_amp": _NUM, "q_amp": _NUM},
        },
        "beta": _DECAY,
        "metric": _METRIC,
        "metric_h": _METRIC,
        "params": {"type": "object"},
        "tolerances": {"type": "object", "additionalProperties": _POS},
    },
}


def _schema_for(kind: str) -> dict:
    schema = json.loads(json.dumps(BASE_SCHEMA))
    schema["required"] = ["kind", *CATALOG[kind].required]
    schema["properties"]["kind"] = {"const": kind}
    return schema


def validate_config(config, kind: str) -> None:
    if not isinstance(config, dict):
        raise UsageError("config must be a mapping")
    validator = jsonschema.Draft202012Validator(_schema_for(kind))
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  at /{'/'.join(map(str, e.absolute_path))}: {e.message}" for e in errors]
        raise UsageError("config does not validate:\n" + "\n".join(lines))


# --------------------------------------------------------------------------
# shared builders


def _tol(cfg, key, default):
    return float(cfg.get("tolerances", {}).get(key, default))


def _params(cfg) -> dict:
    return cfg.get("params", {}) or {}


def _end(cfg):
    from .operators import EndModel
    spec = cfg.get("end", {"kind": "cusp"})
    modes = int(spec.get("modes", 8))
    if spec["kind"] == "cylinder":
        return EndModel.cylinder(float(spec.get("circumference", 2 * math.pi)), modes)
    return EndModel.cusp(int(spec.get("n", 1)), float(spec.get("side", 1.0)), modes)


def _operator(cfg):
    from .operators import GridSpec, build_mode_operator
    g = cfg["grid"]
    grid = GridSpec(float(g["stop"]), int(g["points"]), g.get("start"), g.get("spacing", "uniform"))
    return build_mode_operator(_end(cfg), int(cfg.get("mode", 0)), grid, g.get("formulation", "log_x"))


def _perturbation(cfg):
    from .decay import DecayProfile
    from .operators import Perturbation
    spec = cfg.get("perturbation", {"type": "none"})
    if spec["type"] == "none":
        return Perturbation()
    if spec["type"] == "square_well":
        return Perturbation.square_well(float(spec["depth"]), float(spec["width"]), float(spec.get("start", 0.0)))
    return Perturbation(DecayProfile.from_dict(spec["profile"]), float(spec.get("p_amp", 0.0)),
                        float(spec.get("w_amp", 0.0)), float(spec.get("q_amp", 0.0)))


def _beta(cfg):
    from .decay import DecayProfile
    return DecayProfile.from_dict(cfg["beta"])


def _well(cfg):
    spec = cfg.get("perturbation", {"type": "none"})
    if spec["type"] == "square_well" and float(spec.get("start", 0.0)) == 0.0:
        return float(spec["depth"]), float(spec["width"])
    return None


# --------------------------------------------------------------------------
# runners


def run_equiv_check(cfg) -> Outcome:
    from .geometry import (MetricPair, check_beta_equivalence, default_grid, knorm_difference,
                           metric_from_spec, nabla_characterization_check)
    p = _params(cfg)
    k = int(p.get("k", 2))
    pair = MetricPair(metric_from_spec(cfg["metric"]), metric_from_spec(cfg["metric_h"]), k)
    beta = _beta(cfg)
    xs = default_grid(float(p.get("x_max", 200.0)), int(p.get("points", 2001)))
    eq = check_beta_equivalence(pair, k, beta, xs)
    agree, nab, _ = nabla_characterization_check(pair, k, beta, xs)
    diff = knorm_difference(pair, k, xs)
    b = np.exp(beta.log(1 + xs))
    expect = bool(cfg.get("expect", True))
    rows = list(zip(xs, diff, b, diff / b))
    return Outcome(
        verdicts={"equivalence_matches_expectation": eq.passed == expect,
                  "symmetric": eq.passed == eq.reverse_passed,
                  "characterization_agrees": bool(agree)},
        tables={"knorm": (["x", "knorm_difference", "beta", "ratio"], rows)},
        metrics={"C": eq.C, "reverse_C": eq.reverse_C, "tail_slope": eq.tail_slope, "equivalent": eq.passed},
    )


def run_cover(cfg) -> Outcome:
    from .covering import FiniteMetricSpace, greedy_cover, hyperbolic_disk_cloud, kappa_estimate, poincare
    p = _params(cfg)
    pts = hyperbolic_disk_cloud(int(p.get("points", 2000)), float(p.get("radius", 4.0)), int(cfg.get("seed", 0)))
    space = FiniteMetricSpace(coords=pts, metric=poincare)
    h = float(p.get("h", 0.5))
    rep = greedy_cover(space, h, float(p.get("a", 2.0)))
    s_list = [float(s) for s in p.get("kappa_s", [0.2, 0.4, 0.6])]
    kap = [kappa_estimate(space, s).kappa for s in s_list]
    slope = float(np.polyfit(s_list, np.log(kap), 1)[0]) if len(s_list) > 1 else 0.0
    centers = [(c, pts[c, 0], pts[c, 1], r) for c, r in zip(rep.centers, rep.radii)]

    def draw(fig):
        ax = fig.add_subplot(111)
        ax.scatter(pts[:, 0], pts[:, 1], s=1, c="0.7")
        ax.scatter(pts[rep.centers, 0], pts[rep.centers, 1], s=6, c="C3")
        ax.set_aspect("equal")
        ax.set_title("greedy cover centers")

    return Outcome(
        verdicts={"covered": rep.covered, "separated": rep.separation >= 1.0,
                  "multiplicity_bounded": rep.multiplicity <= _tol(cfg, "max_multiplicity", 64)},
        tables={"centers": (["index", "x", "y", "radius"], centers),
                "kappa": (["s", "kappa", "log_kappa"], [(s, k, math.log(k)) for s, k in zip(s_list, kap)])},
        metrics={"centers": len(rep.centers), "multiplicity": rep.multiplicity,
                 "intersection_multiplicity": rep.intersection_multiplicity,
                 "separation": rep.separation, "kappa_log_slope": slope},
        figures={"cover": draw},
    )


def run_spectrum(cfg) -> Outcome:
    op = _operator(cfg)
    count = int(_params(cfg).get("count", 10))
    ev = op.lowest_eigenvalues(count)
    verdicts = {"symmetric": op.symmetry_defect() <= _tol(cfg, "symmetry", 1e-10)}
    metrics = {"lowest": float(ev[0])}
    end = _end(cfg)
    if end.kind == "cusp" and int(cfg.get("mode", 0)) == 0 and op.formulation == "log_x":
        L = float(op.nodes[-1] - op.nodes[0])
        expected = end.threshold + (math.pi / L) ** 2
        rel = abs(ev[0] - expected) / expected
        verdicts["threshold_recovered"] = rel <= _tol(cfg, "threshold", 0.01)
        metrics.update(expected=expected, relative_error=rel)
    return Outcome(verdicts, {"eigenvalues": (["index", "eigenvalue"], list(enumerate(ev)))}, metrics)


def run_propagate(cfg) -> Outcome:
    from .funcalc import cosine_propagator
    from .scattering import smooth_bump
    p = _params(cfg)
    op = _operator(cfg)
    x = op.distance
    c, r = float(p.get("center", 5.0)), float(p.get("radius", 0.5))
    f0 = smooth_bump(c - r, c + r)(x)
    s = float(p.get("s", 0.5))
    res = cosine_propagator(op, f0, s, p.get("method", "leapfrog"), dt=p.get("dt"))
    return Outcome(
        verdicts={"leakage": res.leakage <= _tol(cfg, "leakage", 1e-6)},
        tables={"propagation": (["x", "f0", "fs"], list(zip(x, f0, res.values)))},
        metrics={"leakage": res.leakage, "energy_drift": res.energy_drift, "dt": res.dt},
    )


def run_opnorm_growth(cfg) -> Outcome:
    from .funcalc import weighted_opnorm_growth
    p = _params(cfg)
    op = _operator(cfg)
    beta = np.exp(_beta(cfg).log(1 + op.distance))
    s = np.linspace(0.0, float(p.get("s_max", 20.0)), int(p.get("s_count", 21)))
    fit = weighted_opnorm_growth(op, beta, s)
    return Outcome(
        verdicts={"exponential_growth_fit": fit.residual <= _tol(cfg, "residual", 0.2),
                  "heat_bound": fit.heat_bound_passed},
        tables={"growth": (["s", "norm", "fit"], list(zip(fit.s, fit.norms, fit.C * np.exp(fit.c * fit.s))))},
        metrics={"C": fit.C, "c": fit.c, "residual": fit.residual},
    )


def run_heat_trace(cfg) -> Outcome:
    from .funcalc import SpectralDecomposition
    from .operators import perturb_operator
    from .trace import duhamel_difference, heat_difference, schatten
    p = _params(cfg)
    op_g = _operator(cfg)
    op_h, _ = perturb_operator(op_g, _perturbation(cfg))
    sd_g, sd_h = SpectralDecomposition.of(op_g), SpectralDecomposition.of(op_h)
    rows, worst = [], 0.0
    for t in p.get("times", [0.1, 1.0]):
        direct = heat_difference(op_g, op_h, float(t), sd_g, sd_h)
        duh = duhamel_difference(op_g, op_h, float(t), int(p.get("m", 32)), sd_g, sd_h)
        err = float(np.linalg.norm(direct - duh))
        rep = schatten(direct, op_g.mass)
        worst = max(worst, err)
        rows.append((float(t), rep.trace_norm, rep.hs_norm, err))
    tables = {"trace": (["t", "trace_norm", "hs_norm", "duhamel_error"], rows)}
    if p.get("L_list"):
        from .trace import truncation_stability
        trunc = truncation_stability(_end(cfg), int(cfg.get("mode", 0)), _perturbation(cfg),
                                     float(p.get("truncation_t", 1.0)), [float(v) for v in p["L_list"]],
                                     float(p.get("density", 4.0)))
        tables["truncation"] = (["L", "points", "t", "trace_norm", "hs_norm", "increment"],
                                [(r.L, r.points, r.t, r.trace_norm, r.hs_norm, r.increment) for r in trunc])
    return Outcome(
        verdicts={"duhamel_identity": worst <= _tol(cfg, "duhamel", 1e-8)},
        tables=tables,
        metrics={"max_duhamel_error": worst},
    )


def _free_model(cfg):
    from .scattering import CuspFreeModel
    p = _params(cfg)
    return CuspFreeModel(int(p.get("n", 1)), float(p.get("x_max", 300.0)), int(p.get("points", 2999)))


def run_wave_op(cfg) -> Outcome:
    from .operators import perturb_operator
    from .scattering import wave_operator
    p = _params(cfg)
    model = _free_model(cfg)
    op_h, _ = perturb_operator(model.op, _perturbation(cfg))
    g = model.packet(float(p.get("lam0", 1.0)), float(p.get("sigma", 0.15)), float(p.get("x0", 30.0)),
                     p.get("direction", "incoming"))
    times = [float(t) for t in p.get("times", [20, 30, 40, 50, 60])]
    res = wave_operator(op_h, model, g, times, _tol(cfg, "cauchy", 1e-3))
    return Outcome(
        verdicts={"cauchy_converged": res.converged,
                  "isometric": float(res.isometry_defect.max()) <= _tol(cfg, "isometry", 1e-8)},
        tables={"wave_operator": (["t", "cauchy_increment", "isometry_defect", "intertwining_defect"],
                                  list(zip(res.times, res.cauchy_increments, res.isometry_defect,
                                           res.intertwining_defect)))},
        metrics={"final_increment": float(res.cauchy_increments[-1])},
    )


def run_smatrix(cfg) -> Outcome:
    from .operators import perturb_operator
    from .scattering import phase_difference, smatrix_stationary, square_well_phase
    p = _params(cfg)
    op0 = _operator(cfg)
    op_h, _ = perturb_operator(op0, _perturbation(cfg))
    lams = np.linspace(float(p.get("lam_min", 0.1)), float(p.get("lam_max", 3.0)), int(p.get("count", 30)))
    res = smatrix_stationary(op_h, lams)
    verdicts = {"unitary": res.unitarity_defect <= _tol(cfg, "unitarity", 1e-10)}
    metrics = {"unitarity_defect": res.unitarity_defect}
    well = _well(cfg)
    oracle = np.full(lams.shape, math.nan)
    if well is not None:
        oracle = square_well_phase(lams, *well)
        err = float(np.max(np.abs(phase_difference(res.delta, oracle))))
        verdicts["oracle_phase"] = err <= _tol(cfg, "phase", 1e-6)
        metrics["oracle_error"] = err
    rows = list(zip(lams, res.delta, oracle, res.S.real, res.S.imag, np.abs(res.S) - 1))
    columns = ["lambda", "delta", "oracle_delta", "re_S", "im_S", "abs_S_minus_1"]
    return Outcome(verdicts, {"phase_shift": (columns, rows)}, metrics)


def run_resolvent_cont(cfg) -> Outcome:
    from .continuation import birman_schwinger, extrapolated_poles, resonance_scan, square_well_resonances
    from .operators import EndModel, GridSpec, build_mode_operator, perturb_operator
    p = _params(cfg)
    n = int(p.get("n", 1))
    stop = float(p.get("stop", 6.0))
    pert = _perturbation(cfg)

    def build(h):
        op0 = build_mode_operator(EndModel.cusp(n), 0, GridSpec(stop, int(round(stop / h)) - 1))
        op_h, _ = perturb_operator(op0, pert)
        return birman_schwinger(op0, op_h)

    h0 = float(p.get("h", 0.02))
    window = tuple(float(v) for v in p.get("window", [0.2, 8.0, -3.0, -0.05]))
    grid = tuple(int(v) for v in p.get("grid", [100, 100]))
    rep = resonance_scan(build(h0), window, grid)
    zs = extrapolated_poles(build, h0, [q["z"] for q in rep.poles], int(p.get("levels", 3))) if rep.poles else []
    well = _well(cfg)
    rows, worst = [], 0.0
    oracle = []
    if well is not None and zs:
        oracle = square_well_resonances(*well, zs)
    for k, (q, z) in enumerate(zip(rep.poles, zs)):
        o = oracle[k] if k < len(oracle) else complex(math.nan, math.nan)
        err = abs(z - o)
        worst = max(worst, err) if math.isfinite(err) else worst
        rows.append((z.real, z.imag, q["min_sv"], q["rank"], q["winding"], o.real, o.imag, err))
    verdicts = {}
    if pert.is_zero:
        verdicts["no_poles_without_perturbation"] = not rep.poles
    else:
        verdicts["poles_found"] = bool(rep.poles)
        if well is not None:
            verdicts["oracle_match"] = bool(rep.poles) and worst <= _tol(cfg, "pole", 1e-4)
    sv, re, im = rep.min_sv, rep.re, rep.im

    def draw(fig):
        ax = fig.add_subplot(111)
        mesh = ax.pcolormesh(re, im, np.log10(np.maximum(sv, 1e-16)), shading="auto")
        fig.colorbar(mesh, ax=ax, label="log10 min singular value")
        for z in zs:
            ax.plot(z.real, z.imag, "r+", ms=10)
        ax.set_xlabel("Re z")
        ax.set_ylabel("Im z")

    heat = [(z.real, z.imag, math.log10(max(v, 1e-300)))
            for z, v in zip((re[None, :] + 1j * im[:, None]).ravel(), sv.ravel())]
    poles_doc = {"window": list(window), "grid": list(grid),
                 "poles": [{"re_z": z.real, "im_z": z.imag, "re_lambda": (0.25 * n * n + z * z).real,
                            "im_lambda": (0.25 * n * n + z * z).imag, "min_sv": q["min_sv"], "rank": q["rank"]}
                           for q, z in zip(rep.poles, zs)]}
    return Outcome(
        verdicts,
        {"poles": (["re_z", "im_z", "min_sv", "rank", "winding", "oracle_re", "oracle_im", "error"], rows)},
        {"scan_seconds": rep.seconds, "poles": len(zs), "max_oracle_error": worst},
        {"fredholm_scan": draw},
        raw={"heatmap": (["re_z", "im_z", "log10_min_sv"], heat)},
        documents={"resonances": poles_doc},
    )


def run_hypotheses(cfg) -> Outcome:
    from .geometry import metric_from_spec
    from .trace import check_trace_class_hypotheses
    p = _params(cfg)
    metric = metric_from_spec(cfg["metric"])
    rep = check_trace_class_hypotheses(_beta(cfg), float(p.get("a", 0.0)), float(p.get("b", 2.0)), metric,
                                     p.get("dim"))
    rows = [("i", rep.check_i, math.nan), ("ii", rep.check_ii, rep.integral),
            ("iii", rep.check_iii, rep.sup_iii), ("iii_alt", rep.check_iii_alt, rep.exponent_iii_alt)]
    return Outcome(
        verdicts={"hypotheses_match_expectation": rep.passed == bool(cfg.get("expect", True))},
        tables={"checks": (["condition", "passed", "value"], rows)},
        metrics={"passed": rep.passed, "exponent_iii": rep.exponent_iii, "tail_slope": rep.tail_slope,
                 "dim": rep.dim},
    )


CATALOG: dict[str, Experiment] = {e.kind: e for e in [
    Experiment("equiv-check", "beta-equivalence of two warped metrics and its Levi-Civita characterization",
               "metric equivalence under decay", ("metric", "metric_h", "beta"),
               {"knorm": "x, knorm_difference, beta, ratio"}, run_equiv_check),
    Experiment("cover", "greedy covering of a hyperbolic disk cloud, multiplicities and kappa(s)",
               "uniform coverings", (), {"centers": "index, x, y, radius", "kappa": "s, kappa, log_kappa"},
               run_cover),
    Experiment("spectrum", "lowest eigenvalues of a mode operator of a warped end",
               "spectrum of the cusp", ("end", "grid"), {"eigenvalues": "index, eigenvalue"}, run_spectrum),
    Experiment("propagate", "cos(s sqrt(A)) by leapfrog or spectrally, with causal-ball leakage",
               "finite propagation speed", ("end", "grid"), {"propagation": "x, f0, fs"}, run_propagate),
    Experiment("opnorm-growth", "growth of the wave propagator norm on a beta-weighted space",
               "functional calculus on weighted spaces", ("end", "grid", "beta"),
               {"growth": "s, norm, fit"}, run_opnorm_growth),
    Experiment("heat-trace", "trace norm of a heat-semigroup difference and the Duhamel identity",
               "trace-class heat differences", ("end", "grid", "perturbation"),
               {"trace": "t, trace_norm, hs_norm, duhamel_error",
                "truncation": "L, points, t, trace_norm, hs_norm, increment (when params.L_list is set)"}, run_heat_trace),
    Experiment("wave-op", "Cauchy convergence and isometry of the wave operator on a cusp end",
               "time-dependent scattering", ("perturbation",),
               {"wave_operator": "t, cauchy_increment, isometry_defect, intertwining_defect"}, run_wave_op),
    Experiment("smatrix", "stationary phase shifts with a square-well oracle column",
               "stationary scattering and the scattering matrix", ("grid", "perturbation"),
               {"phase_shift": "lambda, delta, oracle_delta, re_S, im_S, abs_S_minus_1"}, run_smatrix),
    Experiment("resolvent-cont", "second-sheet resonances from a Birman-Schwinger Fredholm scan",
               "meromorphic continuation of the resolvent", ("perturbation",),
               {"poles": "re_z, im_z, min_sv, rank, winding, oracle_re, oracle_im, error",
                "heatmap": "re_z, im_z, log10_min_sv"}, run_resolvent_cont),
    Experiment("hypotheses", "decay and injectivity-radius conditions of the trace-class theorem",
               "main trace-class theorem", ("metric", "beta"), {"checks": "condition, passed, value"},
               run_hypotheses),
]}


def list_experiments() -> list[dict]:
    return [{"kind": e.kind, "description": f"{e.description} [{e.topic}]", "topic": e.topic,
             "required": list(e.required), "csv": e.columns} for e in CATALOG.values()]


# --------------------------------------------------------------------------
# persistence


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    return value


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _plot_table(fig, name, columns, rows) -> bool:
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float) if rows else np.zeros((0, 0))
    except (TypeError, ValueError):
        return False
    if data.shape[0] < 2 or data.shape[1] < 2:
        return False
    ax = fig.add_subplot(111)
    x = data[:, 0]
    positive = np.all(data[:, 1:][np.isfinite(data[:, 1:])] > 0)
    for j in range(1, data.shape[1]):
        ax.plot(x, data[:, j], marker=".", label=columns[j])
    if positive and np.nanmax(data[:, 1:]) / max(np.nanmin(data[:, 1:]), 1e-300) > 1e3:
        ax.set_yscale("log")
    ax.set_xlabel(columns[0])
    ax.set_title(name)
    ax.legend()
    return True


def _write_figures(out: Path, outcome: Outcome) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    paths = []
    jobs = [(name, lambda fig, n=name, t=tab: _plot_table(fig, n, *t)) for name, tab in outcome.tables.items()]
    jobs += [(name, lambda fig, f=f: f(fig) or True) for name, f in outcome.figures.items()]
    for name, job in jobs:
        fig = Figure(figsize=(6, 4))
        if job(fig):
            path = out / f"{name}.png"
            fig.savefig(path, dpi=100, metadata={"Software": None})
            paths.append(path)
    return paths


def run_experiment(kind: str, config: dict, out: Path) -> tuple[dict, int]:
    """Run one experiment, write artifacts into ``out`` and return (record, exit code)."""
    exp = CATALOG[kind]
    validate_config(config, kind)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        with np.errstate(all="ignore"):
            outcome = exp.runner(config)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        outcome = Outcome(failure=f"{type(exc).__name__}: {exc}")
    wall = time.perf_counter() - start

    files = []
    for name, (columns, rows) in {**outcome.tables, **outcome.raw}.items():
        path = out / f"{name}.csv"
        _write_csv(path, columns, rows)
        files.append(path)
    for name, doc in outcome.documents.items():
        path = out / f"{name}.json"
        path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        files.append(path)
    if outcome.failure is None:
        files += _write_figures(out, outcome)
    passed = outcome.failure is None and all(outcome.verdicts.values())
    record = {
        "schema": RECORD_SCHEMA,
        "kind": kind,
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
        "wall_time": wall,
        "verdicts": outcome.verdicts,
        "metrics": outcome.metrics,
        "passed": passed,
        "failure": outcome.failure,
        "manifest": [{"file": p.name, "sha256": _digest(p)} for p in files],
    }
    record = _jsonable(record)
    (out / "record.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record, 0 if passed else 2


# --------------------------------------------------------------------------
# entry point


def _threads():
    raw = os.environ.get("LAB_THREADS")
    if not raw:
        return None
    try:
        count = int(raw)
    except ValueError:
        raise UsageError(f"LAB_THREADS must be a positive integer, got {raw!r}") from None
    if count < 1:
        raise UsageError(f"LAB_THREADS must be a positive integer, got {raw!r}")
    return count


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lab", description="Run scatlab experiments from YAML configs.")
    parser.add_argument("kind", help="experiment kind, or 'list'")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--out", help="output directory (default: config 'out' or ./runs/<kind>)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        if args.kind == "list":
            for entry in list_experiments():
                print(f"{entry['kind']:<15} {entry['description']}")
                print(f"{'':<15} required: {', '.join(entry['required']) or '-'}; "
                      f"csv: {'; '.join(f'{k}({v})' for k, v in entry['csv'].items())}")
            return 0
        if args.kind not in CATALOG:
            raise UsageError(f"unknown kind {args.kind!r}; valid kinds: {', '.join(CATALOG)}")
        if not args.config:
            raise UsageError("--config is required")
        try:
            config = yaml.safe_load(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise UsageError(f"config is not valid YAML: {exc}") from None
        if isinstance(config, dict) and "kind" not in config:
            config = {"kind": args.kind, **config}
        out = Path(args.out or (config.get("out") if isinstance(config, dict) else None) or f"runs/{args.kind}")
        threads = _threads()
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                record, code = run_experiment(args.kind, config, out)
        else:
            record, code = run_experiment(args.kind, config, out)
    except UsageError as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if record["passed"] else "FAIL"
    print(f"{args.kind}: {status}  ({out / 'record.json'})")
    for name, ok in record["verdicts"].items():
        print(f"  {'ok ' if ok else 'BAD'} {name}")
    if record["failure"]:
        print(f"  refused: {record['failure']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
