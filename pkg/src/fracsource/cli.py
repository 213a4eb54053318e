"""Command-line driver: ``fracsource <mode> --config <path> [--out <dir>] [--workers <n>] [--seed <u64>]``.

Exit codes: 0 success, 1 usage error, 2 a solvability condition or checked
inequality failed, 3 the iteration diverged or did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from fracsource.errors import (
    ConditionViolationError,
    DenominatorDegeneracyError,
    FracSourceError,
    IterationDivergenceError,
    NoConvergenceError,
    ShapeMismatchError,
    UsageError,
)
from fracsource.estimates import EstimateCheck, contraction_monitor, validate_apriori
from fracsource.forward import SampledProblem, forward_solve, load_npz
from fracsource.inverse import SolverConfig, _jsonable, check_conditions, inverse_solve
from fracsource.presets import Manufactured, mms_generate
from fracsource.verification import run_suites

SCHEMA_VERSION = "1.0"
MODES = ("forward", "inverse", "verify", "mms", "study")
DEFAULTS = {
    "alpha": 0.5,
    "T": 1.0,
    "N": 65,
    "M": 65,
    "K": 8,
    "epsilon": 0.5,
    "tol_rel": 1e-12,
    "max_iters": 60,
    "dalpha_psi": "auto",
    "output_dir": "fracsource-out",
    "workers": 1,
    "seed": 0,
    "write_solution": True,
}
STUDY_COLUMNS = ("level", "dt", "dx", "K", "err_u_L2", "err_h_L2", "order_u", "order_h", "iters", "kappa")
EXIT = {"ok": 0, "usage_error": 1, "condition_violation": 2, "checks_failed": 2, "divergence": 3}

log = logging.getLogger("fracsource")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("fracsource").joinpath("schemas", name).read_text())


def validate_config(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid config at {where}: {exc.message}") from None
    return {**DEFAULTS, **raw}


def fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % float(value)


@dataclass
class RunReport:
    mode: str
    config: dict
    status: str = "ok"
    message: str = ""
    timing: dict = field(default_factory=dict)
    conditions: dict | None = None
    errors: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    history: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT[self.status]

    def to_dict(self) -> dict:
        return _jsonable({
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "status": self.status,
            "exit_code": self.exit_code,
            "message": self.message,
            "config": self.config,
            "timing": self.timing,
            "conditions": self.conditions,
            "errors": self.errors,
            "checks": [c.to_dict() if isinstance(c, EstimateCheck) else c for c in self.checks],
            "history": self.history,
            "warnings": self.warnings,
        })

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)


def relative_l2(approx: np.ndarray, exact: np.ndarray, problem: SampledProblem) -> float:
    """Relative L2 error over ``(0,T) x G`` (modes, if present, summed by Parseval)."""
    diff, ref = approx - exact, exact
    if diff.ndim == 3:
        diff, ref = np.sum(diff**2, axis=-1), np.sum(ref**2, axis=-1)
    else:
        diff, ref = diff**2, ref**2
    w, dt = problem.xgrid.weights, problem.tgrid.dt

    def integral(a):
        per_t = a @ w
        return dt * (per_t.sum() - 0.5 * (per_t[0] + per_t[-1]))

    den = integral(ref)
    num = integral(diff)
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


def _problem(cfg: dict, N=None, M=None, K=None) -> tuple[SampledProblem, Manufactured | None, np.ndarray | None]:
    N, M, K = N or cfg["N"], M or cfg["M"], K or cfg["K"]
    if "data" in cfg:
        path = Path(cfg["data"])
        if not path.is_file():
            raise UsageError(f"data file {path} not found")
        try:
            problem, h = load_npz(path, K, cfg.get("alpha"))
        except (ShapeMismatchError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot use data file {path}: {exc}") from None
        return problem, None, h
    mf = mms_generate(cfg.get("preset", "mode1"), cfg["alpha"], cfg["T"])
    return mf.data.sample(N, M, K), mf, None


def _solver_config(cfg: dict, K: int) -> SolverConfig:
    return SolverConfig(
        K=K, epsilon=cfg["epsilon"], max_iters=cfg["max_iters"], tol_rel=cfg["tol_rel"],
        delta=cfg.get("delta"), workers=cfg["workers"], dalpha_psi=cfg["dalpha_psi"],
    )


def write_solution(out: Path, problem: SampledProblem, coeffs: np.ndarray, h: np.ndarray | None):
    t, x = problem.tgrid.nodes, problem.xgrid.nodes
    N, M, K = coeffs.shape
    ti, xi, ki = np.meshgrid(np.arange(N), np.arange(M), np.arange(K), indexing="ij")
    table = np.column_stack([t[ti.ravel()], x[xi.ravel()], ki.ravel() + 1, coeffs.ravel()])
    np.savetxt(out / "solution_u.csv", table, fmt=["%.17g", "%.17g", "%d", "%.17g"], delimiter=",",
               header="t,x,k,value", comments="")
    if h is not None:
        tt, xx = np.meshgrid(t, x, indexing="ij")
        table = np.column_stack([tt.ravel(), xx.ravel(), np.asarray(h).ravel()])
        np.savetxt(out / "h.csv", table, fmt="%.17g", delimiter=",", header="t,x,value", comments="")


def run_forward(cfg: dict, report: RunReport, out: Path):
    problem, mf, h = _problem(cfg)
    if mf is not None:
        h = mf.h_exact(problem.tgrid, problem.xgrid)
    if h is None:
        raise UsageError("forward mode needs a preset or an 'h' array in the data file")
    t0 = time.perf_counter()
    u = forward_solve(h, problem, cfg["workers"])
    report.timing["solve_s"] = time.perf_counter() - t0
    psi_hat = u.coeffs @ problem.omega_k
    report.errors["overdetermination_rel"] = relative_l2(psi_hat, problem.psi, problem)
    if mf is not None:
        report.errors["err_u_L2"] = relative_l2(u.coeffs, mf.exact_coeffs(problem.tgrid, problem.xgrid, problem.basis), problem)
    if cfg["write_solution"]:
        write_solution(out, problem, u.coeffs, h)


def run_inverse(cfg: dict, report: RunReport, out: Path):
    problem, mf, _ = _problem(cfg)
    solver = _solver_config(cfg, problem.basis.K)
    t0 = time.perf_counter()
    try:
        result = inverse_solve(problem, solver)
    except ConditionViolationError as exc:
        if exc.report is not None:
            report.conditions = exc.report.to_dict()
        raise
    report.timing["solve_s"] = time.perf_counter() - t0
    report.conditions = result.report.to_dict()
    report.history = result.diagnostics()
    report.warnings.extend(result.warnings)
    if len(result.history) >= 3:
        report.history["contraction"] = contraction_monitor(result.history, result.report).to_dict()
    report.checks.extend(validate_apriori(result.field, result.h, problem, result.report, solver.epsilon))
    if mf is not None:
        tg, xg = problem.tgrid, problem.xgrid
        report.errors["err_u_L2"] = relative_l2(result.field.coeffs, mf.exact_coeffs(tg, xg, problem.basis), problem)
        report.errors["err_h_L2"] = relative_l2(result.h, mf.h_exact(tg, xg), problem)
    if cfg["write_solution"]:
        write_solution(out, problem, result.field.coeffs, result.h)
    if not all(c.passed for c in report.checks):
        report.status = "checks_failed"
        report.message = "a priori bound violated: " + ", ".join(c.name for c in report.checks if not c.passed)


def run_mms(cfg: dict, report: RunReport, out: Path):
    if "data" in cfg:
        raise UsageError("mms mode works on presets only")
    run_inverse(cfg, report, out)
    problem, mf, _ = _problem(cfg)
    # the exact pair must be a fixed point of the discrete iteration up to scheme error
    h_star = mf.h_exact(problem.tgrid, problem.xgrid)
    u = forward_solve(h_star, problem, cfg["workers"])
    exact = mf.exact_coeffs(problem.tgrid, problem.xgrid, problem.basis)
    report.errors["fixed_point_rel"] = relative_l2(u.coeffs, exact, problem)


def run_verify(cfg: dict, report: RunReport, out: Path):
    t0 = time.perf_counter()
    report.checks.extend(run_suites(cfg["seed"]))
    report.timing["suites_s"] = time.perf_counter() - t0
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        report.status = "checks_failed"
        report.message = "failed: " + ", ".join(failed)


def _pairwise_orders(errors: list[float], steps: list[float]) -> list[float | None]:
    orders: list[float | None] = [None]
    for i in range(1, len(errors)):
        e0, e1, s0, s1 = errors[i - 1], errors[i], steps[i - 1], steps[i]
        if e0 > 0 and e1 > 0 and s0 != s1:
            orders.append(math.log(e0 / e1) / math.log(s0 / s1))
        else:
            orders.append(None)
    return orders


def fitted_order(errors: list[float], steps: list[float]) -> float | None:
    e, s = np.asarray(errors), np.asarray(steps)
    if np.any(e <= 0) or len(set(steps)) < 2:
        return None
    return float(np.polyfit(np.log(s), np.log(e), 1)[0])


def convergence_study(cfg: dict, report: RunReport | None = None) -> list[dict]:
    """Sweep one resolution parameter and tabulate errors against the manufactured pair."""
    study = cfg.get("study")
    if study is None:
        raise UsageError("study mode needs a 'study' block with 'vary' and 'levels'")
    levels = study["levels"]
    if len(levels) < 3:
        raise UsageError(f"a convergence study needs at least 3 levels, got {len(levels)}")
    if "data" in cfg:
        raise UsageError("convergence studies need a preset with a known exact solution")
    vary = study["vary"]
    rows = []
    for i, level in enumerate(levels):
        N = level if vary == "time" else cfg["N"]
        M = level if vary == "space" else cfg["M"]
        K = level if vary == "modes" else cfg["K"]
        mf = mms_generate(cfg.get("preset", "mode1"), cfg["alpha"], cfg["T"])
        problem = mf.data.sample(N, M, K)
        result = inverse_solve(problem, _solver_config(cfg, K))
        tg, xg = problem.tgrid, problem.xgrid
        rows.append({
            "level": i,
            "dt": tg.dt,
            "dx": xg.dx,
            "K": K,
            "err_u_L2": relative_l2(result.field.coeffs, mf.exact_coeffs(tg, xg, problem.basis), problem),
            "err_h_L2": relative_l2(result.h, mf.h_exact(tg, xg), problem),
            "iters": result.iterations,
            "kappa": result.report.kappa,
        })
        if report is not None:
            report.warnings.extend(f"level {i}: {w}" for w in result.warnings)
    key = {"time": "dt", "space": "dx", "modes": "K"}[vary]
    steps = [r[key] if vary != "modes" else 1.0 / r[key] for r in rows]
    for name in ("u", "h"):
        errs = [r[f"err_{name}_L2"] for r in rows]
        for r, order in zip(rows, _pairwise_orders(errs, steps)):
            r[f"order_{name}"] = order
        if report is not None:
            report.errors[f"fitted_order_{name}"] = fitted_order(errs, steps)
    return rows


def write_study(path: Path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STUDY_COLUMNS)
        for r in rows:
            writer.writerow([fmt(r[c]) for c in STUDY_COLUMNS])


def run_study(cfg: dict, report: RunReport, out: Path):
    t0 = time.perf_counter()
    rows = convergence_study(cfg, report)
    report.timing["study_s"] = time.perf_counter() - t0
    write_study(out / "study.csv", rows)
    report.history["study"] = rows
    for r in rows:
        report.errors[f"err_h_L2[{r['level']}]"] = r["err_h_L2"]


RUNNERS = {
    "forward": run_forward,
    "inverse": run_inverse,
    "mms": run_mms,
    "verify": run_verify,
    "study": run_study,
}


def run(mode: str, cfg: dict, out: Path) -> RunReport:
    """Execute one mode; the report records any failure instead of raising."""
    report = RunReport(mode, cfg)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        RUNNERS[mode](cfg, report, out)
    except (ConditionViolationError, DenominatorDegeneracyError) as exc:
        report.status, report.message = "condition_violation", str(exc)
    except (IterationDivergenceError, NoConvergenceError) as exc:
        report.status, report.message = "divergence", str(exc)
        report.history.setdefault("w_history", list(getattr(exc, "history", [])))
    except (UsageError, OSError) as exc:
        report.status, report.message = "usage_error", str(exc)
    except FracSourceError as exc:
        report.status, report.message = "usage_error", f"{type(exc).__name__}: {exc}"
    report.timing["total_s"] = time.perf_counter() - t0
    text = report.dumps()
    jsonschema.validate(json.loads(text), load_schema("report.schema.json"))
    if out.is_dir():
        (out / "report.json").write_text(text + "\n")
    return report


def configure_logging() -> None:
    level = os.environ.get("FRACSOURCE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"FRACSOURCE_LOG must be one of error, info, debug, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracsource", description="Inverse source solver for time-fractional diffusion.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--workers", type=int, help="threads for per-mode solves")
    p.add_argument("--seed", type=_u64, help="seed for randomized suites")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        configure_logging()
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        cfg = validate_config(raw)
        if args.workers is not None:
            if args.workers < 1:
                raise UsageError("--workers must be at least 1")
            cfg["workers"] = args.workers
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = str(args.out)
    except UsageError as exc:
        print(f"fracsource: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg["output_dir"])
    report = run(args.mode, cfg, out)
    if report.status != "ok":
        print(f"fracsource: {report.status}: {report.message}", file=sys.stderr)
    else:
        log.info("%s finished in %.3fs, report at %s", args.mode, report.timing["total_s"], out / "report.json")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
