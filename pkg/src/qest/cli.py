"""Command line entry point.

Usage::

    qest <choi|fisher|phase|simulate> --config run.json [--out path] [--format json|csv] [--timing]

Exit codes: 0 success, 1 configuration error, 2 validation or precondition
failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .channel import (ChannelFamily, choi_pair, exponential_phase_damping, make_depolarizing_family,
                      make_shift_mixture_family, make_unitary_family, tensor_power)
from .errors import DegenerateError, QestError
from .estimate import (CovariantPhaseEstimator, NoonRepetitionEstimator, bell_phase_damping_estimator,
                       covariant_stage2_builder, local_minimax_risk, simulate_mse, sld_stage2_builder,
                       trine_phase_estimator, two_step_estimator, unbiasedness_diagnostics)
from .fisher import condition_c, fisher_for_input, is_infinite, max_rld_channel, optimize_sld_input
from .phase import noon_probability_curve, phase_bounds_report, risk_table, simulate_covariant_estimator
from .report import RiskReport, to_jsonable

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("choi", "fisher", "phase", "simulate")

_complex = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_cmatrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _complex}}
_interval = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_sweep = {"type": "object", "additionalProperties": False, "required": ["lo", "hi", "points"],
          "properties": {"lo": {"type": "number"}, "hi": {"type": "number"},
                         "points": {"type": "integer", "minimum": 1}}}
_theta = {"oneOf": [{"type": "number"}, _sweep]}
_count = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema"],
    "properties": {
        "schema": {"const": 1},
        "family": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {
                "kind": {"enum": ["unitary", "phase_damping", "depolarizing", "shift_mixture"]},
                "params": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "hamiltonian": _cmatrix,
                        "rates": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                        "dim": {"type": "integer", "minimum": 2, "maximum": 16},
                        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        "h_diag": {"type": "array", "items": {"type": "number"}},
                        "param_space": _interval,
                        "period": {"type": ["number", "null"], "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "theta": _theta,
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"format": {"enum": ["json", "csv"]}, "path": {"type": "string"}}},
        "choi": {"type": "object", "additionalProperties": False,
                 "properties": {"fd_step": {"type": "number", "exclusiveMinimum": 0}}},
        "fisher": {"type": "object", "additionalProperties": False,
                   "properties": {"restarts": _count, "steps": _count, "seed": {"type": "integer", "minimum": 0},
                                  "optimize": {"type": "boolean"}, "tensor_power": {"type": "integer", "minimum": 2},
                                  "inputs": {"type": "array", "items": _cmatrix}}},
        "phase": {"type": "object", "additionalProperties": False, "required": ["n"],
                  "properties": {"n": {"type": "integer", "minimum": 0, "maximum": 5000},
                                 "sweep": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 5000}},
                                 "curve_n": {"type": "integer", "minimum": 1, "maximum": 20},
                                 "curve_points": {"type": "integer", "minimum": 2}}},
        "simulate": {
            "type": "object", "additionalProperties": False, "required": ["seed", "strategy"],
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "strategy": {"oneOf": [{"enum": ["two_step", "covariant", "noon"]},
                                       {"type": "array", "minItems": 1,
                                        "items": {"enum": ["two_step", "covariant", "noon"]}}]},
                "n": {"type": "integer", "minimum": 1},
                "k": _count,
                "trials": _count,
                "replicas": _count,
                "grid_size": {"type": "integer", "minimum": 8},
                "local": {"type": "object", "additionalProperties": False, "required": ["theta0", "eps"],
                          "properties": {"theta0": {"type": "number"}, "eps": {"type": "number", "exclusiveMinimum": 0},
                                         "grid_points": {"type": "integer", "minimum": 5},
                                         "alpha": {"type": "number"}}},
                "diagnostics": {"type": "object", "additionalProperties": False, "required": ["thetas"],
                                "properties": {"thetas": _sweep, "trials": _count}},
            },
        },
    },
}


class ConfigError(Exception):
    pass


# -- config handling ----------------------------------------------------------------

def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from exc


def _matrix(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=np.complex128)


def build_family(spec: Optional[dict]) -> ChannelFamily:
    if spec is None:
        raise ConfigError("this command needs a 'family' block")
    kind, p = spec["kind"], spec.get("params", {})
    extra = {}
    if "param_space" in p:
        extra["param_space"] = tuple(p["param_space"])
    try:
        if kind == "unitary":
            if "hamiltonian" not in p:
                raise ConfigError("unitary family needs params.hamiltonian")
            return make_unitary_family(_matrix(p["hamiltonian"]), period=p.get("period"), **extra)
        if kind == "phase_damping":
            if "rates" not in p:
                raise ConfigError("phase_damping family needs params.rates")
            return exponential_phase_damping(p["rates"], **extra)
        if kind == "depolarizing":
            return make_depolarizing_family(p.get("dim", 2), **extra)
        if "probs" not in p or "h_diag" not in p:
            raise ConfigError("shift_mixture family needs params.probs and params.h_diag")
        return make_shift_mixture_family(p["probs"], p["h_diag"], period=p.get("period"), **extra)
    except (QestError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid family parameters: {exc}") from exc


def thetas(cfg: dict) -> list[float]:
    t = cfg.get("theta")
    if t is None:
        raise ConfigError("this command needs 'theta'")
    if isinstance(t, dict):
        return [float(x) for x in np.linspace(t["lo"], t["hi"], t["points"])]
    return [float(t)]


def _strategies(sim: dict) -> list[str]:
    s = sim["strategy"]
    return [s] if isinstance(s, str) else list(s)


# -- commands -------------------------------------------------------------------

def cmd_choi(cfg: dict) -> RiskReport:
    f = build_family(cfg.get("family"))
    step = cfg.get("choi", {}).get("fd_step", 1e-5)
    rep = RiskReport("choi", config=cfg)
    points = []
    for t in thetas(cfg):
        pair = choi_pair(f, t, fd_step=step)
        points.append({"theta": t, "rho": pair.rho, "deriv": pair.deriv, "source": pair.source,
                       "residuals": pair.marginal_residuals(), "condition_c": condition_c(pair)})
    rep.add("points", points, "Choi matrix and derivative from the Kraus operators; residuals of the "
            "output-marginal identities; range condition on the derivative")
    rep.add("condition_c", all(p["condition_c"] for p in points), "range(rho) contains range(D) at every theta")
    return rep


def cmd_fisher(cfg: dict) -> RiskReport:
    f = build_family(cfg.get("family"))
    opts = cfg.get("fisher", {})
    rep = RiskReport("fisher", config=cfg)
    points = []
    for t in thetas(cfg):
        pair = choi_pair(f, t)
        bound = max_rld_channel(pair)
        entry = {"theta": t, "condition_c": condition_c(pair), "j_rld_max": bound.value}
        if bound.witness is not None:
            entry["witness"] = {"vector": bound.witness.vector, "a": bound.witness.a,
                                "epsilon": bound.witness.epsilon, "note": bound.witness.note}
        if opts.get("optimize", True):
            opt = optimize_sld_input(pair, opts.get("restarts", 16), opts.get("steps", 200), opts.get("seed", 0))
            entry["j_sld_opt"] = opt.value
            entry["j_sld_opt_input"] = opt.a
        if opts.get("inputs"):
            entry["inputs"] = []
            for a in opts["inputs"]:
                a = _matrix(a)
                try:
                    j_s = fisher_for_input(pair, a, "SLD")
                except QestError as exc:
                    j_s = f"undefined: {exc}"
                entry["inputs"].append({"a": a, "j_sld": j_s, "j_rld": fisher_for_input(pair, a, "RLD")})
        if "tensor_power" in opts:
            n = opts["tensor_power"]
            joint = max_rld_channel(choi_pair(tensor_power(f, n), t)).value
            entry["tensor_power"] = n
            entry["j_rld_max_tensor_power"] = joint
            if is_infinite(joint) or is_infinite(bound.value):
                entry["additivity_residual"] = "not applicable: range condition fails"
            else:
                entry["additivity_residual"] = abs(joint - n * bound.value)
        points.append(entry)
    rep.add("points", points, "j_rld_max: operator norm of Tr_K D rho^+ D (maximum RLD Fisher information over "
            "inputs); j_sld_opt: best input found by projected gradient ascent (a lower bound); "
            "additivity_residual: |J^R of the tensor power - n J^R|")
    return rep


def cmd_phase(cfg: dict) -> RiskReport:
    opts = cfg["phase"] if "phase" in cfg else None
    if opts is None:
        raise ConfigError("phase command needs a 'phase' block")
    n = opts["n"]
    rep = RiskReport("phase", config=cfg)
    if n >= 1:
        bounds = phase_bounds_report(n)
        for k, v in bounds.values.items():
            rep.add(k, v, bounds.provenance[k])
    else:
        from .phase import covariant_minimax_risk

        rep.add("n", 0, "input")
        rep.add("covariant", covariant_minimax_risk(0).risk, "no rotations: prior risk pi^2/3")
    sweep = opts.get("sweep", [])
    rep.add("table", [{"n": a, "value": b, "scaled_value": c} for a, b, c in risk_table(sweep)],
            "covariant mini-max risk and n^2 times it (finite-n values computed here)")
    curve_n = opts.get("curve_n", 20)
    x, y = noon_probability_curve(curve_n, opts.get("curve_points", 1000))
    rep.add("curve", {"n": curve_n, "x": x, "y": y}, "noon parity probability cos^2(n theta / 2)")
    return rep


def cmd_simulate(cfg: dict) -> RiskReport:
    sim = cfg.get("simulate")
    if sim is None:
        raise ConfigError("simulate command needs a 'simulate' block with a seed")
    seed = sim["seed"]
    rep = RiskReport("simulate", config=cfg)
    ts = thetas(cfg)
    for strategy in _strategies(sim):
        if strategy == "two_step":
            rep.add("two_step", _two_step(cfg, sim, ts, seed),
                    "two-step estimator: sqrt(n) uses to localize, the rest for the refined measurement")
        elif strategy == "covariant":
            n = sim.get("n", 8)
            grid = sim.get("grid_size", max(512, 8 * (n + 1)))
            runs = []
            for t in ts:
                res = simulate_covariant_estimator(n, t, sim.get("trials", 10_000), grid, seed)
                runs.append({"theta": t, "mse": res.estimate, "risk": res.risk, "discrete_risk": res.discrete_risk,
                             "allowance": res.allowance})
            rep.add("covariant", runs, "Monte Carlo of the discretized covariant scheme vs its exact risk")
            if "local" in sim:
                rep.add("covariant_local", _local(None, CovariantPhaseEstimator(n, grid), sim, seed),
                        "n^alpha times the largest simulated MSE over the neighbourhood grid")
        else:
            n, k = sim.get("n", 8), sim.get("k", 1)
            est = NoonRepetitionEstimator(n, k)
            runs = [{"theta": t, "mse": simulate_mse(None, t, est, sim.get("trials", 10_000), seed)} for t in ts]
            rep.add("noon", runs, "Monte Carlo of repeated noon parity measurements")
            if "local" in sim:
                rep.add("noon_local", _local(None, est, sim, seed),
                        "n^alpha times the largest simulated MSE over the neighbourhood grid")
            if "diagnostics" in sim:
                d = sim["diagnostics"]
                grid = np.linspace(d["thetas"]["lo"], d["thetas"]["hi"], d["thetas"]["points"])
                rep.add("noon_diagnostics", unbiasedness_diagnostics(None, est, grid, d.get("trials", 10_000), seed),
                        "mean, variance and slope of the estimate; classical Cramer-Rao check per point")
    return rep


def _local(f, est, sim, seed):
    loc = sim["local"]
    return local_minimax_risk(f, est, loc["theta0"], loc["eps"], loc.get("grid_points", 9),
                              sim.get("trials", 10_000), seed, loc.get("alpha", 2.0))


def _two_step(cfg, sim, ts, seed):
    kind = cfg.get("family", {}).get("kind")
    f = build_family(cfg.get("family"))
    if f.dim_in != 2:
        raise ConfigError("two_step supports qubit families")
    if kind == "phase_damping":
        stage1, builder = bell_phase_damping_estimator(), sld_stage2_builder(f)
    elif kind == "unitary":
        if f.period is None:
            raise ConfigError("two_step with a unitary family needs params.period")
        stage1, builder = trine_phase_estimator(), covariant_stage2_builder()
    else:
        raise ConfigError("two_step supports phase_damping and unitary families")
    n = sim.get("n", 1024)
    out = []
    for t in ts:
        r = two_step_estimator(f, t, n, stage1, builder, seed, sim.get("replicas", 1000))
        entry = r.to_dict()
        entry["theta"] = t
        entry["n_mse"] = n * r.mse.mean
        entry["n2_mse"] = n * n * r.mse.mean
        out.append(entry)
    return out


HANDLERS = {"choi": cmd_choi, "fisher": cmd_fisher, "phase": cmd_phase, "simulate": cmd_simulate}


# -- output ---------------------------------------------------------------------

def render_json(rep: RiskReport) -> str:
    return json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([to_jsonable(v) for v in row])
    return buf.getvalue()


def render_csv(rep: RiskReport) -> dict[str, str]:
    """CSV documents keyed by suffix ("" for the main file, "_curve" for a companion curve).

    Tables have columns ``(n, value, scaled_value)``; curves ``(x, y[, stderr])``.
    """
    v = rep.values
    if rep.command == "phase":
        rows = [(r["n"], r["value"], r["scaled_value"]) for r in v["table"]]
        curve = v["curve"]
        return {"": _csv(("n", "value", "scaled_value"), rows),
                "_curve": _csv(("x", "y"), zip(curve["x"], curve["y"]))}
    if rep.command == "fisher":
        return {"": _csv(("x", "y"), [(p["theta"], p["j_rld_max"]) for p in v["points"]])}
    if rep.command == "simulate":
        rows = []
        for key in ("covariant", "noon"):
            for r in v.get(key, []):
                rows.append((r["theta"], r["mse"].mean, r["mse"].std_error))
        for r in v.get("two_step", []):
            rows.append((r["theta"], r["mse"]["mean"], r["mse"]["std_error"]))
        return {"": _csv(("x", "y", "stderr"), rows)}
    raise ConfigError(f"csv output is not available for '{rep.command}'; use json")


def write_output(rep: RiskReport, fmt: str, out: Optional[str]) -> None:
    if fmt == "json":
        text = render_json(rep)
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
        return
    docs = render_csv(rep)
    if not out:
        for suffix, text in docs.items():
            if suffix:
                sys.stdout.write(f"# {suffix.lstrip('_')}\n")
            sys.stdout.write(text)
        return
    base = Path(out)
    for suffix, text in docs.items():
        base.with_name(base.stem + suffix + base.suffix).write_text(text)


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qest", description="Quantum channel estimation bounds and simulations.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=("json", "csv"), help="overrides output.format in the config")
    p.add_argument("--timing", action="store_true", help="include wall time (makes output run-dependent)")
    p.add_argument("--version", action="version", version=f"qest {__version__}")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        output = cfg.get("output", {})
        fmt = args.format or output.get("format", "json")
        out = args.out or output.get("path")
        start = time.perf_counter()
        rep = HANDLERS[args.command](cfg)
        if args.timing:
            rep.add("wall_time_s", time.perf_counter() - start, "measured")
        write_output(rep, fmt, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, DegenerateError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QestError, ValueError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
