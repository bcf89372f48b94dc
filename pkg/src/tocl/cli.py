"""Command-line driver: ``tocl check|linearize|solve|moment|simulate``.

Exit codes: 0 success, 2 condition failure, 3 divergence, 4 configuration
error.  Jobs read a TOML (or JSON) file with a ``[system]`` table, or use a
built-in preset, and write flat files into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import fixedpoint, moment, sim
from .expr import ExprSyntaxError
from .linearize import F0_at, LinearizationError, LinearizationReport, check_system
from .model import ControlSystem, ModelError
from .moment import BangBangControl, MomentProblem, MomentSolveError
from .presets import PRESETS, preset
from .series import DEFAULT_ORDER
from .svg import emit_svg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("tocl")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONDITION, EXIT_DIVERGED, EXIT_CONFIG = 0, 2, 3, 4
TASKS = ("check", "linearize", "solve", "moment", "simulate")


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------------------

@dataclass
class JobConfig:
    system: dict | None = None
    task: str = "check"
    x0: list[float] | None = None
    c: float | str = 1.0
    tol: float = 1e-8
    max_iter: int = 1000
    order: int = DEFAULT_ORDER
    method: str = "symbolic"
    out: str = "tocl-out"
    step_hint: float | None = None
    moment: dict | None = None
    control: dict | None = None

    def build_system(self) -> ControlSystem:
        if not self.system:
            raise ConfigError("no [system] table and no preset given")
        s = self.system
        try:
            a, b = list(s["a"]), list(s["b"])
        except KeyError as exc:
            raise ConfigError(f"system is missing {exc.args[0]!r}") from None
        n = int(s.get("n", len(a)))
        if len(a) != n or len(b) != n:
            raise ConfigError(f"system declares n={n} but a has {len(a)} and b has {len(b)} components")
        try:
            return ControlSystem.from_strings(a, b, t_radius=float(s.get("t_radius", 1.0)),
                                              x_radius=float(s.get("x_radius", 1.0)),
                                              name=str(s.get("name", "")))
        except ExprSyntaxError as exc:
            raise ConfigError(f"cannot parse expression: {exc}") from None
        except ModelError as exc:
            raise ConfigError(str(exc)) from None


def _parse_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").strip("[]()").split(",") if v]
    except ValueError:
        raise ConfigError(f"cannot parse vector {text!r}") from None


def _parse_c(value) -> float | str:
    if isinstance(value, str):
        if value.strip().lower() == "auto":
            return "auto"
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"c must be a number in (0, 1] or 'auto', got {value!r}") from None
    value = float(value)
    if not 0 < value <= 1:
        raise ConfigError(f"c must lie in (0, 1], got {value}")
    return value


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None


def config_from_dict(data: dict) -> JobConfig:
    cfg = JobConfig()
    job = dict(data.get("job", {}))
    system = data.get("system")
    if isinstance(system, dict) and "preset" in system:
        base = _preset(system["preset"])
        base.update({k: v for k, v in system.items() if k != "preset"})
        system = base
    elif "preset" in data:
        system = _preset(data["preset"])
    cfg.system = system
    for key in ("task", "x0", "c", "tol", "max_iter", "order", "method", "out", "step_hint"):
        if key in job:
            setattr(cfg, key, job[key])
    cfg.moment = data.get("moment")
    cfg.control = data.get("control")
    _validate(cfg)
    return cfg


def _preset(name: str) -> dict:
    try:
        return preset(name)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None


def _validate(cfg: JobConfig) -> None:
    if cfg.task not in TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}")
    cfg.c = _parse_c(cfg.c)
    if cfg.x0 is not None:
        cfg.x0 = [float(v) for v in cfg.x0]
        if cfg.system and len(cfg.x0) != len(cfg.system.get("a", [])):
            raise ConfigError(f"x0 has {len(cfg.x0)} components, system has {len(cfg.system['a'])}")
    if cfg.method not in ("symbolic", "numeric"):
        raise ConfigError("method must be 'symbolic' or 'numeric'")
    if int(cfg.order) < 4:
        raise ConfigError("truncation order must be at least 4")
    cfg.order = int(cfg.order)
    cfg.max_iter = int(cfg.max_iter)
    cfg.tol = float(cfg.tol)


# -- report ----------------------------------------------------------------------------------

@dataclass
class Report:
    task: str
    status: str
    exit_code: int
    system: dict | None = None
    body: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema_version {version!r}")
        return cls(task=d["task"], status=d["status"], exit_code=int(d["exit_code"]),
                   system=d.get("system"), body=dict(d.get("body", {})), schema_version=version)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_report(report: Report, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_report(path) -> Report:
    try:
        return Report.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None


# -- tasks -------------------------------------------------------------------------------------

def run_check(cfg: JobConfig, system: ControlSystem | None = None) -> LinearizationReport:
    system = system or cfg.build_system()
    return check_system(system, order=cfg.order, method=cfg.method)


def _check_body(rep: LinearizationReport) -> dict:
    body: dict[str, Any] = {"verdicts": [v.to_dict() for v in rep.verdicts],
                            "linearizable": rep.linearizable,
                            "fixed_point_ready": rep.fixed_point_ready}
    if rep.indicial is not None:
        body["roots"] = list(rep.indicial.roots)
    return body


def _linearize_body(rep: LinearizationReport, cfg: JobConfig) -> dict:
    body = _check_body(rep)
    if rep.gamma is not None:
        show = 10
        body["gamma"] = [str(gi.truncate(show + 1)) for gi in rep.gamma.components]
    df = rep.driftless
    if df is not None:
        body["g"] = [str(gi) for gi in df.g]
        body["L"] = [[str(v) for v in row] for row in df.L]
        body["ode_residual"] = df.residual
        if cfg.x0 is not None:
            body["x0"] = cfg.x0
            body["F0"] = F0_at(df, cfg.x0)
    return body


@dataclass
class SolveResult:
    report: Report
    trace: fixedpoint.FixedPointTrace | None = None
    trajectory: sim.Trajectory | None = None


def run_solve(cfg: JobConfig, out: Path | None = None) -> SolveResult:
    """Check, iterate, simulate; write report.json, trace.json, trajectory.csv and trajectory.svg."""
    system = cfg.build_system()
    if cfg.x0 is None:
        raise ConfigError("solve needs x0")
    rep = run_check(cfg, system)
    sys_info = _system_info(cfg)
    if not rep.fixed_point_ready:
        report = Report("solve", "condition_failure", EXIT_CONDITION, sys_info, _check_body(rep))
        _finish(report, out)
        return SolveResult(report)
    df = rep.driftless
    try:
        F0 = F0_at(df, cfg.x0)
    except LinearizationError as exc:
        raise ConfigError(str(exc)) from None
    kw = dict(tol=cfg.tol, max_iter=cfg.max_iter, F0=F0)
    try:
        if cfg.c == "auto":
            trace = fixedpoint.iterate_auto(df, cfg.x0, **kw)
        else:
            trace = fixedpoint.iterate(df, cfg.x0, float(cfg.c), **kw)
    except MomentSolveError as exc:
        report = Report("solve", "diverged", EXIT_DIVERGED, sys_info,
                        {"message": f"inner moment solve failed: {exc}; retry with a smaller c"})
        _finish(report, out)
        return SolveResult(report)
    body: dict[str, Any] = {
        "roots": list(df.roots), "x0": cfg.x0, "c": trace.c, "tol": cfg.tol,
        "iterations": trace.iterations, "residuals": trace.residuals,
        "final_residual": trace.residuals[-1] if trace.residuals else None,
        "F0": F0, "y0": trace.iterates[0], "limit": trace.limit,
    }
    if trace.attempts:
        body["attempts"] = trace.attempts
    if not trace.converged:
        body["message"] = (trace.message or trace.status) + "; retry with a smaller c (or --c auto)"
        report = Report("solve", trace.status, EXIT_DIVERGED, sys_info, body)
        _finish(report, out, trace=trace)
        return SolveResult(report, trace)
    ctrl = trace.final_control
    body.update(theta=ctrl.theta, sigma=ctrl.sigma, switches=list(ctrl.switches),
                control=ctrl.to_dict(), tail_bound=trace.tail_bound,
                reported_residual=trace.residuals[-1] + trace.tail_bound)
    traj = None
    try:
        traj = sim.integrate(system, cfg.x0, ctrl, cfg.step_hint)
        body["terminal_error"] = traj.terminal_error
    except sim.NeighborhoodExit as exc:
        body["simulation"] = {"status": "neighborhood_exit", "time": exc.time, "state": exc.state}
    if ctrl.theta > system.t_radius:
        body["warning"] = f"theta={ctrl.theta:.6g} exceeds t_radius={system.t_radius:g}"
    report = Report("solve", "converged", EXIT_OK, sys_info, body)
    _finish(report, out, trace=trace, traj=traj)
    return SolveResult(report, trace, traj)


def run_moment(cfg: JobConfig) -> Report:
    spec = cfg.moment
    if not spec or "exponents" not in spec or "y" not in spec:
        raise ConfigError("moment task needs a [moment] table with exponents and y")
    try:
        p = MomentProblem(tuple(spec["exponents"]), tuple(spec["y"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        ctrl = moment.solve(p)
    except MomentSolveError as exc:
        return Report("moment", "solve_failed", EXIT_DIVERGED, None,
                      {"exponents": list(p.exponents), "y": list(p.y), "message": str(exc)})
    body = {"exponents": list(p.exponents), "y": list(p.y), "control": ctrl.to_dict(),
            "theta": ctrl.theta, "residual": moment.residual(ctrl, p)}
    if bool(spec.get("verify", True)) and ctrl.theta > 0:
        body["minimal"] = moment.verify_minimality(ctrl, p)
    return Report("moment", "ok", EXIT_OK, None, body)


def run_simulate(cfg: JobConfig, out: Path | None = None) -> SolveResult:
    system = cfg.build_system()
    if cfg.x0 is None or not cfg.control:
        raise ConfigError("simulate needs x0 and a [control] table (sigma, switches, theta)")
    try:
        ctrl = BangBangControl.from_dict(cfg.control)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad control: {exc}") from None
    sys_info = _system_info(cfg)
    try:
        traj = sim.integrate(system, cfg.x0, ctrl, cfg.step_hint)
    except sim.NeighborhoodExit as exc:
        report = Report("simulate", "neighborhood_exit", EXIT_CONDITION, sys_info,
                        {"time": exc.time, "state": exc.state})
        _finish(report, out)
        return SolveResult(report)
    body = {"x0": cfg.x0, "control": ctrl.to_dict(), "terminal_state": traj.terminal_state,
            "terminal_error": traj.terminal_error, "samples": len(traj)}
    report = Report("simulate", "ok", EXIT_OK, sys_info, body)
    _finish(report, out, traj=traj)
    return SolveResult(report, trajectory=traj)


def _system_info(cfg: JobConfig) -> dict | None:
    return dict(cfg.system) if cfg.system else None


def _finish(report: Report, out: Path | None, *, trace=None, traj=None) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    if trace is not None:
        rows = trace.rows()
        (out / "trace.json").write_text(json.dumps(_jsonable(rows), indent=1) + "\n", encoding="utf-8")
    if traj is not None:
        sim.write_csv(traj, out / "trajectory.csv")
        emit_svg(traj, out / "trajectory.svg")


def run_job(cfg: JobConfig, out: Path | None) -> Report:
    if cfg.task in ("check", "linearize"):
        rep = run_check(cfg)
        body = _check_body(rep) if cfg.task == "check" else _linearize_body(rep, cfg)
        code = EXIT_OK if (rep.ok and rep.linearizable) else EXIT_CONDITION
        report = Report(cfg.task, "ok" if code == EXIT_OK else "condition_failure", code,
                        _system_info(cfg), body)
        _finish(report, out)
        return report
    if cfg.task == "solve":
        return run_solve(cfg, out).report
    if cfg.task == "simulate":
        return run_simulate(cfg, out).report
    report = run_moment(cfg)
    _finish(report, out)
    return report


# -- entry point -----------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 4), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


VECTOR_FLAGS = ("--x0", "--y", "--exponents")


def _join_vector_flags(argv: Sequence[str]) -> list[str]:
    """Let ``--x0 -0.4,0.2`` through: argparse would read the value as an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in VECTOR_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tocl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="task", required=True, parser_class=_Parser)
    for task in TASKS:
        p = sub.add_parser(task)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="TOML or JSON job file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in system")
        p.add_argument("--x0", help="initial state, comma separated")
        p.add_argument("--c", help="relaxation factor in (0, 1] or 'auto'")
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--order", type=int, help="series truncation order K")
        p.add_argument("--method", choices=("symbolic", "numeric"))
        p.add_argument("--out", help="output directory")
        p.add_argument("--batch", help="file with one x0 per line (or a JSON list); solved concurrently")
        p.add_argument("--jobs", type=int, default=None, help="worker processes for --batch")
        p.add_argument("--exponents", help="moment task: exponents, comma separated")
        p.add_argument("--y", help="moment task: target moments, comma separated")
        p.add_argument("--control", help="simulate task: JSON {sigma, switches, theta}")
    return parser


def _config_from_args(args) -> JobConfig:
    data: dict[str, Any] = read_config_file(args.config) if args.config else {}
    if args.preset:
        data["system"] = {"preset": args.preset}
    job = dict(data.get("job", {}))
    job["task"] = args.task
    if args.x0:
        job["x0"] = _parse_vector(args.x0)
    for name in ("c", "tol", "order", "method", "out"):
        if getattr(args, name) is not None:
            job[name] = getattr(args, name)
    if args.max_iter is not None:
        job["max_iter"] = args.max_iter
    data["job"] = job
    if args.exponents or args.y:
        data["moment"] = {"exponents": [int(v) for v in _parse_vector(args.exponents or "")],
                          "y": _parse_vector(args.y or "")}
    if args.control:
        try:
            data["control"] = json.loads(args.control)
        except ValueError as exc:
            raise ConfigError(f"--control is not valid JSON: {exc}") from None
    return config_from_dict(data)


def _read_batch(path) -> list[list[float]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read batch file: {exc}") from None
    if text.lstrip().startswith("["):
        try:
            return [[float(v) for v in row] for row in json.loads(text)]
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"malformed batch file: {exc}") from None
    return [_parse_vector(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]


def _batch_worker(payload) -> tuple[int, dict]:
    cfg_dict, out = payload
    _setup_logging()
    cfg = JobConfig(**cfg_dict)
    try:
        report = run_job(cfg, Path(out))
    except ConfigError as exc:
        report = Report(cfg.task, "config_error", EXIT_CONFIG, None, {"message": str(exc)})
        _finish(report, Path(out))
    return report.exit_code, {"x0": cfg.x0, "status": report.status, "exit_code": report.exit_code,
                              "out": str(out)}


def run_batch(cfg: JobConfig, starts: Sequence[Sequence[float]], out: Path, jobs: int | None = None) -> int:
    payloads = []
    for i, x0 in enumerate(starts):
        d = asdict(cfg)
        d["x0"] = list(x0)
        payloads.append((d, str(out / f"job{i:03d}")))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_batch_worker, payloads))
    out.mkdir(parents=True, exist_ok=True)
    summary = [r for _, r in results]
    (out / "batch.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n", encoding="utf-8")
    return max((code for code, _ in results), default=EXIT_OK)


def _setup_logging() -> None:
    level = os.environ.get("TOCL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_join_vector_flags(argv))
        cfg = _config_from_args(args)
        out = Path(cfg.out)
        if args.batch:
            code = run_batch(cfg, _read_batch(args.batch), out, args.jobs)
            print(f"batch finished; summary in {out / 'batch.json'}")
            return code
        report = run_job(cfg, out)
    except ConfigError as exc:
        print(f"tocl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_summary(report, out)
    return report.exit_code


def _print_summary(report: Report, out: Path) -> None:
    b = report.body
    print(f"{report.task}: {report.status}")
    for v in b.get("verdicts", []):
        print(f"  {v['name']:<10} {v['status']:<14} {v.get('detail', '')}")
    if "roots" in b:
        print(f"  roots: {b['roots']}")
    if "theta" in b:
        print(f"  theta = {b['theta']:.6f}  switches = {b.get('switches', b.get('control', {}).get('switches'))}")
    if "iterations" in b:
        print(f"  iterations = {b['iterations']}  c = {b.get('c')}")
    if "terminal_error" in b:
        print(f"  terminal |x(theta)| = {b['terminal_error']:.3e}")
    if "message" in b:
        print(f"  {b['message']}")
    print(f"  report: {out / 'report.json'}")


if __name__ == "__main__":
    sys.exit(main())
