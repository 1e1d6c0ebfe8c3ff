"""Command-line driver.

Usage::

    isoflow --config run.json [--output DIR] [--verbose] [--no-figures]
    isoflow demo --seed 7 --output out/

The run is described by a strict JSON config (see docs/config.md).  Exit
codes: 0 success, 2 invalid config or failed validation, 3 numerical
failure (``error.json`` written), 4 unsupported singular configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger("isoflow")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_UNSUPPORTED = 4

COMMANDS = ("validate", "periods", "flow", "continue", "demo")
CONSTRUCTIONS = ("demo", "manufactured_collision", "real_collision", "vanishing_c")

_TOL_DEFAULTS = {
    "rtol": 1e-9,
    "atol": 1e-10,
    "quad": 1e-12,
    "newton": 1e-11,
    "event": 1e-8,
    "validate": 1e-10,
}
_OUTPUT_DEFAULTS = {"dir": "isoflow-out", "stem": "run", "figures": True}
_TOP_KEYS = {
    "command",
    "input",
    "construction",
    "c",
    "t_span",
    "tolerances",
    "delta",
    "output",
    "seed",
    "max_steps",
}


class ConfigError(ValueError):
    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    construction: str | None = None
    c: object = None
    t_span: tuple | None = None
    tolerances: dict = field(default_factory=lambda: dict(_TOL_DEFAULTS))
    delta: float | None = None
    output: dict = field(default_factory=lambda: dict(_OUTPUT_DEFAULTS))
    seed: int = 7
    max_steps: int = 20000
    base_dir: str = "."

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def _number(value, name, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", name)
    if not np.isfinite(value):
        raise ConfigError("must be finite", name)
    if positive and value <= 0:
        raise ConfigError("must be positive", name)
    return float(value)


def _check_c(spec, name="c"):
    if isinstance(spec, list):
        if not spec:
            raise ConfigError("empty list", name)
        return [_check_c(s, f"{name}[{k}]") for k, s in enumerate(spec)]
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("expected an object with a 'kind'", name)
    allowed = {"constant": {"kind", "coeffs"}, "b": {"kind", "factor", "shift"}, "markers": {"kind", "markers", "values"}}
    kind = spec["kind"]
    if kind not in allowed:
        raise ConfigError(f"unknown kind '{kind}' (expected one of {sorted(allowed)})", name)
    extra = set(spec) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown key '{sorted(extra)[0]}'", name)
    if kind == "constant":
        _pairs(spec.get("coeffs"), f"{name}.coeffs")
    if kind == "markers":
        m = _pairs(spec.get("markers"), f"{name}.markers")
        v = _pairs(spec.get("values"), f"{name}.values")
        if len(m) != len(v):
            raise ConfigError("markers and values differ in length", name)
    if kind == "b":
        _number(spec.get("factor", 1.0), f"{name}.factor")
        if not isinstance(spec.get("shift", 0), int):
            raise ConfigError("shift must be an integer", f"{name}.shift")
    return spec


def _pairs(x, name):
    if not isinstance(x, list) or not x:
        raise ConfigError("expected a non-empty list of [re, im] pairs", name)
    out = []
    for p in x:
        if isinstance(p, (int, float)) and not isinstance(p, bool):
            out.append(complex(p))
        elif isinstance(p, list) and len(p) == 2:
            out.append(complex(_number(p[0], name), _number(p[1], name)))
        else:
            raise ConfigError("expected numbers or [re, im] pairs", name)
    return out


def parse_config(text, base_dir="."):
    """Strict parse of a JSON run config; unknown keys are rejected."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError("unknown key", sorted(unknown)[0])
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"expected one of {list(COMMANDS)}", "command")
    cfg = RunConfig(command=cmd, base_dir=base_dir)
    if "input" in raw:
        if not isinstance(raw["input"], str) or not raw["input"]:
            raise ConfigError("must be a non-empty path", "input")
        cfg.input = raw["input"]
    if "construction" in raw:
        if raw["construction"] not in CONSTRUCTIONS:
            raise ConfigError(f"expected one of {list(CONSTRUCTIONS)}", "construction")
        cfg.construction = raw["construction"]
    if cfg.input and cfg.construction:
        raise ConfigError("give either 'input' or 'construction', not both", "input")
    if cmd != "demo" and not (cfg.input or cfg.construction):
        raise ConfigError("required for this command (or give 'construction')", "input")
    if "c" in raw:
        cfg.c = _check_c(raw["c"])
    if "t_span" in raw:
        ts = raw["t_span"]
        if not isinstance(ts, list) or len(ts) != 2:
            raise ConfigError("expected [t0, t1]", "t_span")
        t0, t1 = _number(ts[0], "t_span"), _number(ts[1], "t_span")
        if not t0 < t1:
            raise ConfigError("t0 must be smaller than t1", "t_span")
        cfg.t_span = (t0, t1)
    if "tolerances" in raw:
        tol = raw["tolerances"]
        if not isinstance(tol, dict):
            raise ConfigError("expected an object", "tolerances")
        for k, v in tol.items():
            if k not in _TOL_DEFAULTS:
                raise ConfigError("unknown key", f"tolerances.{k}")
            cfg.tolerances[k] = _number(v, f"tolerances.{k}", positive=True)
    if "delta" in raw and raw["delta"] is not None:
        cfg.delta = _number(raw["delta"], "delta", positive=True)
    if "output" in raw:
        out = raw["output"]
        if not isinstance(out, dict):
            raise ConfigError("expected an object", "output")
        for k, v in out.items():
            if k not in _OUTPUT_DEFAULTS:
                raise ConfigError("unknown key", f"output.{k}")
            if k == "figures":
                if not isinstance(v, bool):
                    raise ConfigError("expected true or false", "output.figures")
            elif not isinstance(v, str) or not v:
                raise ConfigError("must be a non-empty string", f"output.{k}")
            cfg.output[k] = v
    if "seed" in raw:
        if isinstance(raw["seed"], bool) or not isinstance(raw["seed"], int):
            raise ConfigError("expected an integer", "seed")
        cfg.seed = raw["seed"]
    if "max_steps" in raw:
        if isinstance(raw["max_steps"], bool) or not isinstance(raw["max_steps"], int) or raw["max_steps"] <= 0:
            raise ConfigError("expected a positive integer", "max_steps")
        cfg.max_steps = raw["max_steps"]
    return cfg


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------
def _opts(cfg):
    from .flow import FlowOptions

    tol = cfg.tolerances
    return FlowOptions(
        rtol=tol["rtol"],
        atol=tol["atol"],
        quad_tol=tol["quad"],
        newton_tol=tol["newton"],
        event_threshold=tol["event"],
        max_steps=cfg.max_steps,
    )


def _random_c(sd, rng):
    from .whitham import c_basis

    basis = c_basis(sd.flags, sd.genus)
    w = rng.standard_normal(len(basis))
    out = basis[0] * w[0]
    for wk, cb in zip(w[1:], basis[1:]):
        out = out + cb * wk
    return out


def make_c_map(spec, sd):
    """c map from a config entry (validated by parse_config)."""
    from .whitham import BCMap, ConstantCMap, MarkerCMap, c_project

    kind = spec["kind"]
    if kind == "b":
        return BCMap(spec.get("factor", 1.0), spec.get("shift", 0))
    if kind == "markers":
        return MarkerCMap(_pairs(spec["markers"], "c.markers"), _pairs(spec["values"], "c.values"))
    coeffs = np.array(_pairs(spec["coeffs"], "c.coeffs"))
    d = sd.flags.deg_c(sd.genus)
    if len(coeffs) > d + 1:
        raise ConfigError(f"degree of c exceeds {d}", "c.coeffs")
    c = c_project(sd.flags, sd.genus, coeffs)
    if np.max(np.abs(c.coeffs[: len(coeffs)] - coeffs)) > 1e-12 * max(1.0, np.max(np.abs(coeffs))):
        raise ConfigError(f"c is not fixed by the {sd.flags.involution.value} involution", "c.coeffs")
    return ConstantCMap(c)


@dataclass
class Problem:
    sd: object
    c_maps: list
    t_span: tuple


def _problem(cfg):
    """Initial data, c maps and time span for a run."""
    from .constructions import default_c, demo_data, manufactured_collision, singular_point, vanishing_c
    from .curve import SpectralData
    from .whitham import ConstantCMap

    rng = np.random.default_rng(cfg.seed)
    t_span = cfg.t_span
    if cfg.construction == "manufactured_collision":
        fam = manufactured_collision(opts=_opts(cfg))
        return Problem(fam.sd0, [ConstantCMap(fam.c)], t_span or (fam.t0, 0.1))
    if cfg.construction == "real_collision":
        sd = singular_point(real_collision=True)
        return Problem(sd, [ConstantCMap(default_c(sd.flags, sd.genus))], t_span or (0.0, 0.1))
    if cfg.construction == "vanishing_c":
        sd = singular_point()
        return Problem(sd, [ConstantCMap(vanishing_c(0.4 + 0.8j, sd.flags, sd.genus))], t_span or (0.0, 0.1))
    if cfg.construction == "demo" or (cfg.command == "demo" and cfg.input is None):
        sd = demo_data(cfg.seed)
    else:
        path = cfg.resolve(cfg.input)
        try:
            with open(path) as fh:
                sd = SpectralData.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}", "input") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid spectral data in {path}: {exc}", "input") from exc
    if cfg.c is None:
        if cfg.command in ("flow", "continue") and cfg.construction is None:
            raise ConfigError("required for this command", "c")
        maps = [ConstantCMap(_random_c(sd, rng))]
    else:
        specs = cfg.c if isinstance(cfg.c, list) else [cfg.c]
        maps = [make_c_map(s, sd) for s in specs]
    return Problem(sd, maps, t_span or (0.0, 0.2))


def _threads():
    raw = os.environ.get("ISOFLOW_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ISOFLOW_THREADS must be a positive integer, got '{raw}'") from exc
    if n < 1:
        raise ConfigError(f"ISOFLOW_THREADS must be a positive integer, got '{raw}'")
    return n


def write_roots_csv(traj, path, which="a"):
    """Root paths in long format: t, root, re, im (roots ordered by continuity)."""
    from .plotting import root_paths

    t, ra, rb = root_paths(traj)
    r = ra if which == "a" else rb
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "root", "re", "im"])
        for ti, row in zip(t, r):
            for k, z in enumerate(row):
                w.writerow([repr(float(ti)), k, repr(float(z.real)), repr(float(z.imag))])
    return path


def write_trajectory(traj, outdir, stem, figures=True):
    paths = {"jsonl": os.path.join(outdir, f"{stem}.jsonl")}
    traj.to_jsonl(paths["jsonl"])
    paths["csv"] = write_roots_csv(traj, os.path.join(outdir, f"{stem}_roots.csv"), "a")
    paths["csv_b"] = write_roots_csv(traj, os.path.join(outdir, f"{stem}_b_roots.csv"), "b")
    if figures:
        from .plotting import write_figures

        paths["figures"] = write_figures(traj, outdir, stem)
    return paths


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_validate(cfg, prob, outdir):
    from .curve import validate

    rep = validate(prob.sd, cfg.tolerances["validate"])
    for key in ("P", "R", "T"):
        print(f"{key}: {'pass' if getattr(rep, key) else 'fail'}")
    print("valid" if rep.ok else "invalid: " + "; ".join(rep.failures))
    _write_json(os.path.join(outdir, f"{cfg.output['stem']}_validate.json"), rep.to_dict())
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def _require_valid(cfg, sd):
    from .curve import validate

    rep = validate(sd, cfg.tolerances["validate"])
    if not rep.ok:
        raise ConfigError("input fails validation: " + "; ".join(rep.failures), "input")


def cmd_periods(cfg, prob, outdir):
    from .periods import build_frame, edge_values

    _require_valid(cfg, prob.sd)
    frame = build_frame(prob.sd, cfg.tolerances["quad"])
    path = os.path.join(outdir, f"{cfg.output['stem']}_frame.json")
    with open(path, "w") as fh:
        fh.write(frame.to_json())
    vals, _ = edge_values(prob.sd, frame, cfg.tolerances["quad"])
    for k, v in enumerate(vals):
        print(f"edge {k}: {v.real:+.15e} {v.imag:+.15e}i")
    return EXIT_OK


def _flow_one(args):
    from .flow import integrate_flow

    sd, cmap, t_span, opts = args
    return integrate_flow(sd, cmap, t_span, opts)


def cmd_flow(cfg, prob, outdir):
    _require_valid(cfg, prob.sd)
    opts = _opts(cfg)
    jobs = [(prob.sd, cm, prob.t_span, opts) for cm in prob.c_maps]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(_flow_one, jobs))
    else:
        trajs = [_flow_one(j) for j in jobs]
    stem = cfg.output["stem"]
    for k, traj in enumerate(trajs):
        name = stem if len(trajs) == 1 else f"{stem}_{k}"
        write_trajectory(traj, outdir, name, cfg.output["figures"])
        ev = ", ".join(f"{e['kind']} at t={e['t']:.9g}" for e in traj.events) or "none"
        print(f"{name}: {len(traj.samples)} samples, t in [{traj.times[0]:.6g}, {traj.times[-1]:.6g}], events: {ev}")
    return EXIT_OK


def cmd_continue(cfg, prob, outdir):
    from .flow import Trajectory, integrate_flow, relative_resultant
    from .periods import build_frame
    from .singular import continue_through, detect_singularity, glued_trajectory

    opts = _opts(cfg)
    cmap = prob.c_maps[0]
    t0, t1 = prob.t_span
    sd0 = prob.sd
    stem = cfg.output["stem"]
    if relative_resultant(sd0) < opts.event_threshold:
        # already at a common root
        pre = Trajectory(frame=build_frame(sd0, opts.quad_tol))
        pre.append(t0, sd0, {"resultant": float(relative_resultant(sd0))})
        ev = detect_singularity(pre, cmap, sd=sd0)
        ev.frame = pre.frame
    else:
        _require_valid(cfg, sd0)
        pre = integrate_flow(sd0, cmap, (t0, t1), opts)
        if not any(e["kind"] == "resultant_zero" for e in pre.events):
            write_trajectory(pre, outdir, stem, cfg.output["figures"])
            print(f"no common root reached on [{t0:.6g}, {t1:.6g}]")
            return EXIT_OK
        ev = detect_singularity(pre, cmap)
    res = continue_through(ev, cmap, cfg.delta, t1, opts)
    glued = glued_trajectory(pre, res)
    write_trajectory(glued, outdir, stem, cfg.output["figures"])
    res.to_json(os.path.join(outdir, f"{stem}_charts.json"))
    print(f"common root at t* = {res.t_star:.9g}, delta = {res.delta:.3e}")
    for m in res.monitor:
        print(
            f"  s = {m['s']:.3e}: hausdorff(a) = {m['hausdorff_a']:.3e}, "
            f"resultant in/out = {m['resultant_in']:.2e}/{m['resultant_out']:.2e}, "
            f"period residual in/out = {m['residual_in']:.1e}/{m['residual_out']:.1e}"
        )
    return EXIT_OK


def cmd_demo(cfg, prob, outdir):
    stem = cfg.output["stem"]
    with open(os.path.join(outdir, f"{stem}_input.json"), "w") as fh:
        fh.write(prob.sd.to_json())
    _write_json(os.path.join(outdir, f"{stem}_c.json"), prob.c_maps[0].to_dict())
    return cmd_flow(cfg, prob, outdir)


_RUNNERS = {
    "validate": cmd_validate,
    "periods": cmd_periods,
    "flow": cmd_flow,
    "continue": cmd_continue,
    "demo": cmd_demo,
}


def _classify(exc):
    from .curve import CurveError
    from .singular import HypothesisError, UnsupportedSingularity

    if isinstance(exc, (ConfigError, CurveError)):
        return EXIT_VALIDATION
    if isinstance(exc, (UnsupportedSingularity, HypothesisError)):
        return EXIT_UNSUPPORTED
    return EXIT_NUMERICAL


def run(cfg, outdir=None):
    """Execute a parsed config; returns the exit status."""
    from .flow import FlowError
    from .periods import PeriodError
    from .poly import RootFindingError
    from .singular import SingularError
    from .whitham import TangentError

    outdir = outdir or cfg.resolve(cfg.output["dir"])
    os.makedirs(outdir, exist_ok=True)
    started = time.time()
    try:
        prob = _problem(cfg)
        code = _RUNNERS[cfg.command](cfg, prob, outdir)
    except (ConfigError, SingularError, FlowError, PeriodError, TangentError, RootFindingError, ValueError, np.linalg.LinAlgError) as exc:
        code = _classify(exc)
        print(f"error: {exc}", file=sys.stderr)
        if code != EXIT_VALIDATION:
            diag = {
                "command": cfg.command,
                "exit_code": code,
                "error": type(exc).__name__,
                "message": str(exc),
                "elapsed": time.time() - started,
            }
            if isinstance(exc, TangentError):
                diag["sigma_min"] = exc.sigma_min
            _write_json(os.path.join(outdir, "error.json"), diag)
    log.info("%s finished in %.2f s with exit code %d", cfg.command, time.time() - started, code)
    return code


def build_parser():
    p = argparse.ArgumentParser(
        prog="isoflow",
        description="Periods and isoperiodic flows of hyperelliptic spectral data.",
        epilog=(
            "Config defaults: tolerances rtol=1e-9 atol=1e-10 quad=1e-12 newton=1e-11 event=1e-8 "
            "validate=1e-10; output dir=isoflow-out stem=run figures=true; seed=7; max_steps=20000; "
            "t_span=[0, 0.2]. Environment: ISOFLOW_THREADS caps the number of trajectories "
            "integrated in parallel. Exit codes: 0 ok, 2 validation, 3 numerical, 4 unsupported singular case."
        ),
    )
    p.add_argument("command", nargs="?", choices=COMMANDS, help="command (overrides the config)")
    p.add_argument("--config", metavar="PATH", help="JSON run config (see docs/config.md)")
    p.add_argument("--output", metavar="DIR", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="seed for randomized constructions (overrides the config)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
            cfg = parse_config(text, base_dir=os.path.dirname(os.path.abspath(args.config)))
        elif args.command is not None:
            cfg = parse_config(json.dumps({"command": args.command}) if args.command == "demo" else "{}")
        else:
            raise ConfigError("give --config PATH or the demo command")
        if args.command is not None and args.config:
            cfg.command = args.command
        if args.seed is not None:
            cfg.seed = args.seed
        if args.no_figures:
            cfg.output["figures"] = False
        _threads()
    except OSError as exc:
        print(f"error: cannot read config: {exc.strerror}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    outdir = args.output or cfg.resolve(cfg.output["dir"])
    return run(cfg, outdir)


if __name__ == "__main__":
    sys.exit(main())
