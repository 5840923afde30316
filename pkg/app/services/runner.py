"""
Scenario execution.

A scenario is parsed and every function and tuple it defines is built before
any check runs; checks then only read those objects, so they can run on a
thread pool while the report keeps the order of the file.
"""
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import ValidationError

from app.core import catalog
from app.core.bernstein import BernsteinFunction, GridSpec, tilt, validate_bernstein
from app.core.bounds import theorem1_check, theorem2_check
from app.core.errors import ScenarioError
from app.core.operator_calculus import (
    diagonal_oracle,
    divided_difference_identity_check,
    frechet_remainder_study,
    subordinate,
)
from app.core.perturbation import (
    DeterminantHandle,
    determinant_identity_checks,
    krein_integral_check,
    resolvent_trace_check,
    spectral_shift,
    stieltjes_inversion,
    subordinated_shift_check,
    trace_formula_check,
    trace_semigroup_diff,
)
from app.core.semigroups import GeneratorTuple, norm, planted_tuple, random_basis, validate
from app.schemas import scenario as schema
from app.schemas.report import CheckRecord, ExperimentReport, RunMetadata
from app.services.reports import jsonable, write_frame, write_report
from app.services.suites import random_pair, random_tuple, run_bound_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


@dataclass
class CheckOutcome:
    passed: bool
    values: dict = field(default_factory=dict)
    residual: float | None = None
    budget: float | None = None
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)


def load_scenario(path: str | Path) -> schema.Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"Scenario file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"Scenario file {path} is not valid JSON: {exc}") from exc
    try:
        return schema.Scenario.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(f"Scenario file {path} failed validation:\n{exc}") from exc


def _complex(value) -> complex:
    return complex(*value) if isinstance(value, (list, tuple)) else complex(value)


class ScenarioRunner:
    def __init__(self, scenario: schema.Scenario, output_dir: Path | None = None, parallel: int = 1):
        self.scenario = scenario
        self.output_dir = output_dir
        self.parallel = max(1, parallel)
        self.functions: dict[str, BernsteinFunction] = {}
        self.tuples: dict[str, GeneratorTuple] = {}
        try:
            for name in scenario.functions:
                self.function(name)
            for name, spec in scenario.tuples.items():
                self.tuples[name] = self._build_tuple(name, spec)
        except (ValueError, np.linalg.LinAlgError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"Scenario {scenario.name}: {type(exc).__name__}: {exc}") from exc

    # resolution

    def function(self, name: str, _stack: tuple[str, ...] = ()) -> BernsteinFunction:
        if name in self.functions:
            return self.functions[name]
        if name in _stack:
            raise ScenarioError(f"Function {name!r} is defined in terms of itself")
        spec = self.scenario.functions[name]
        stack = _stack + (name,)
        if isinstance(spec, schema.DiracSpec):
            psi = catalog.dirac(spec.v0, spec.mass)
        elif isinstance(spec, schema.FracPowerSpec):
            psi = catalog.frac_power(spec.alpha, spec.coordinate, spec.arity, spec.mass)
        elif isinstance(spec, schema.LogResolventSpec):
            psi = catalog.log_resolvent(spec.lam, spec.coordinate, spec.arity, spec.mass)
        elif isinstance(spec, schema.SumSpec):
            psi = catalog.combine(*(self.function(p, stack) for p in spec.parts))
        elif isinstance(spec, schema.ScaleSpec):
            psi = catalog.scale(spec.factor, self.function(spec.part, stack))
        else:
            psi = tilt(self.function(spec.part, stack), spec.shift)
        self.functions[name] = psi
        return psi

    def _build_tuple(self, name: str, spec) -> GeneratorTuple:
        if isinstance(spec, schema.ExplicitTupleSpec):
            return GeneratorTuple(np.array(spec.matrices), label=name)
        if isinstance(spec, schema.PlantedTupleSpec):
            eigenvalues = np.array(spec.eigenvalues)
            basis = None
            if spec.basis is not None:
                basis = np.array(spec.basis)
            elif spec.basis_seed is not None:
                basis = random_basis(np.random.default_rng(spec.basis_seed), eigenvalues.shape[0], spec.basis_kind)
            return planted_tuple(eigenvalues, basis, label=name)
        if isinstance(spec, schema.RandomTupleSpec):
            return random_tuple(spec.seed, spec.n, spec.d, spec.basis_kind)
        pair = random_pair(spec.seed, spec.n, spec.d, spec.basis_kind)
        return pair[0] if spec.member == "A" else pair[1]

    def inputs_digest(self, check) -> str:
        functions, tuples = schema.check_refs(check)
        closure, pending = {}, list(functions)
        while pending:
            ref = pending.pop()
            if ref not in closure:
                closure[ref] = self.scenario.functions[ref]
                pending.extend(schema.function_refs(closure[ref]))
        payload = {
            "check": check.model_dump(mode="json"),
            "functions": {k: v.model_dump(mode="json") for k, v in sorted(closure.items())},
            "tuples": {k: self.scenario.tuples[k].model_dump(mode="json") for k in sorted(set(tuples))},
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    # execution

    def run(self) -> ExperimentReport:
        checks = self.scenario.operations
        if self.parallel > 1 and len(checks) > 1:
            with ThreadPoolExecutor(max_workers=self.parallel) as pool:
                records = list(pool.map(self.run_check, checks))
        else:
            records = [self.run_check(check) for check in checks]
        return ExperimentReport(scenario=self.scenario.name, passed=all(r.passed for r in records), checks=records)

    def run_check(self, check) -> CheckRecord:
        digest = self.inputs_digest(check)
        handler = HANDLERS[check.op]
        logger.info("Running %s (%s)", check.id, check.op)
        try:
            outcome = handler(self, check)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("Check %s raised %s: %s", check.id, type(exc).__name__, exc)
            return CheckRecord(id=check.id, op=check.op, inputs_digest=digest, tolerance=check.tolerance,
                               passed=False, error=f"{type(exc).__name__}: {exc}")
        artifacts = []
        for suffix, frame in outcome.frames.items():
            filename = f"{check.id}.csv" if len(outcome.frames) == 1 else f"{check.id}_{suffix}.csv"
            if self.output_dir is not None:
                write_frame(frame, self.output_dir / filename)
            artifacts.append(filename)
        if not outcome.passed:
            logger.warning("Check %s failed: residual %s, tolerance %g", check.id, outcome.residual, check.tolerance)
        return CheckRecord(
            id=check.id,
            op=check.op,
            inputs_digest=digest,
            values=jsonable(outcome.values),
            residual=None if outcome.residual is None else float(outcome.residual),
            budget=None if outcome.budget is None else float(outcome.budget),
            tolerance=check.tolerance,
            passed=bool(outcome.passed),
            artifacts=artifacts,
        )


# handlers, one per check op

def _validate_bernstein(runner: ScenarioRunner, check: schema.ValidateBernsteinCheck) -> CheckOutcome:
    grid = GridSpec(lower=check.lower, upper=check.upper, points=check.points, tolerance=check.tolerance)
    report = validate_bernstein(runner.function(check.psi), grid)
    return CheckOutcome(report.passed, report.to_dict(), residual=float(len(report.violations)))


def _validate_tuple(runner: ScenarioRunner, check: schema.ValidateTupleCheck) -> CheckOutcome:
    report = validate(runner.tuples[check.tuple], check.max_bound)
    return CheckOutcome(report.passed == check.expect_pass, report.to_dict())


def _diagonal_oracle(runner: ScenarioRunner, check: schema.DiagonalOracleCheck) -> CheckOutcome:
    result = diagonal_oracle(runner.function(check.psi), runner.tuples[check.tuple])
    return CheckOutcome(result["residual"] <= check.tolerance, result, result["residual"], result["budget"])


def _subordination(runner: ScenarioRunner, check: schema.SubordinationCheck) -> CheckOutcome:
    psi, generators = runner.function(check.psi), runner.tuples[check.tuple]
    direct = subordinate(psi, generators, check.t, "exp_of_psi")
    mixed = subordinate(psi, generators, check.t, "widder")
    residual = norm(direct.value - mixed.value)
    ceiling = generators.bound ** generators.arity
    size = norm(mixed.value)
    values = {"residual": residual, "norm": size, "ceiling": ceiling}
    passed = residual <= check.tolerance and size <= ceiling + check.tolerance
    return CheckOutcome(passed, values, residual, direct.quadrature_budget + mixed.quadrature_budget)


def _frechet_remainder(runner: ScenarioRunner, check: schema.FrechetRemainderCheck) -> CheckOutcome:
    generators = runner.tuples[check.tuple]
    if check.direction == "identity":
        directions = np.stack([np.eye(generators.dimension)] * generators.arity)
    else:
        directions = np.array(check.direction)
    study = frechet_remainder_study(runner.function(check.psi), generators, directions, check.h_grid, check.norm)
    negligible = float(study.frame["remainder"].max()) <= check.tolerance
    passed = negligible or (study.slope >= check.min_slope and study.ratio_drop >= check.min_ratio_drop)
    values = {k: v for k, v in study.to_dict().items() if k != "rows"}
    return CheckOutcome(passed, values, frames={"remainder": study.frame})


def _divided_difference(runner: ScenarioRunner, check: schema.DividedDifferenceCheck) -> CheckOutcome:
    result = divided_difference_identity_check(runner.function(check.psi), check.index,
                                               runner.tuples[check.tuple], np.array(check.extra))
    residual = max(result.residual, result.diagonal_residual)
    return CheckOutcome(residual <= check.tolerance, result.to_dict(), residual, result.budget)


def _trace_semigroup(runner: ScenarioRunner, check: schema.TraceSemigroupCheck) -> CheckOutcome:
    a, b = runner.tuples[check.a], runner.tuples[check.b]
    result = trace_semigroup_diff(a, b, check.v)
    laplace = spectral_shift(a, b).laplace(check.v)
    residual = abs(result["value"] - laplace)
    values = dict(result, laplace=laplace)
    return CheckOutcome(result["within_bound"] and residual <= check.tolerance, values, residual)


def _trace_formula(runner: ScenarioRunner, check: schema.TraceFormulaCheck) -> CheckOutcome:
    result = trace_formula_check(runner.function(check.psi), runner.tuples[check.a], runner.tuples[check.b])
    residual = max(result["residual"], result["oracle_residual"])
    return CheckOutcome(residual <= check.tolerance, result, residual, result["budget"])


def _resolvent_trace(runner: ScenarioRunner, check: schema.ResolventTraceCheck) -> CheckOutcome:
    a, b = runner.tuples[check.a], runner.tuples[check.b]
    rows = []
    for lam in check.lam_grid:
        result = resolvent_trace_check(a, b, lam)
        rows.append({"lam": lam, "lhs": result["lhs"], "rhs": result["rhs"], "residual": result["residual"]})
    residual = max(r["residual"] for r in rows)
    return CheckOutcome(residual <= check.tolerance, {"rows": rows}, residual)


def _subordinated_shift(runner: ScenarioRunner, check: schema.SubordinatedShiftCheck) -> CheckOutcome:
    result = subordinated_shift_check(runner.function(check.psi), runner.tuples[check.a],
                                      runner.tuples[check.b], check.s_grid)
    return CheckOutcome(result["residual"] <= check.tolerance, {"rows": result["rows"]},
                        result["residual"], result["budget"], {"laplace": pd.DataFrame(result["rows"])})


def _determinant(runner: ScenarioRunner, check: schema.DeterminantCheck) -> CheckOutcome:
    handle = DeterminantHandle.of(runner.tuples[check.a], runner.tuples[check.b])
    rows = []
    for raw in check.z_grid:
        z = _complex(raw)
        value = handle(z, "stieltjes")
        row = {"z_real": z.real, "z_imag": z.imag, "delta_real": value.real, "delta_imag": value.imag,
               "determinant_error": abs(value - handle.by_determinant(z)) / max(abs(value), 1e-300),
               "trace_error": float("nan")}
        if z.imag == 0.0:
            row["trace_error"] = abs(value - handle.by_trace(z)) / max(abs(value), 1e-300)
        rows.append(row)
    frame = pd.DataFrame(rows)
    determinant_error = float(frame["determinant_error"].max())
    trace_error = float(frame["trace_error"].max(skipna=True)) if frame["trace_error"].notna().any() else 0.0
    passed = determinant_error <= check.tolerance and trace_error <= check.trace_tolerance

    limits = [abs(handle(lam, "stieltjes") - 1.0) for lam in sorted(check.limit_grid)]
    monotone = all(later < earlier for earlier, later in zip(limits, limits[1:]))
    if limits:
        passed = passed and monotone and limits[-1] <= check.limit_tolerance
    values = {"determinant_error": determinant_error, "trace_error": trace_error,
              "limit_distances": limits, "limit_monotone": monotone}
    return CheckOutcome(passed, values, determinant_error, frames={"grid": frame})


def _determinant_identities(runner: ScenarioRunner, check: schema.DeterminantIdentityCheck) -> CheckOutcome:
    result = determinant_identity_checks(runner.tuples[check.a], runner.tuples[check.b],
                                         runner.tuples[check.c], [_complex(z) for z in check.z_grid])
    summary = result["summary"]
    residual = max(summary["determinant_error"], summary["multiplicative_error"],
                   summary["multiplicative_error_det"], summary["log_derivative_error"])
    passed = residual <= check.tolerance and summary["central_difference_error"] <= check.derivative_tolerance
    return CheckOutcome(passed, summary, residual, frames={"grid": result["frame"]})


def _stieltjes_inversion(runner: ScenarioRunner, check: schema.StieltjesInversionCheck) -> CheckOutcome:
    handle = DeterminantHandle.of(runner.tuples[check.a], runner.tuples[check.b])
    frame = stieltjes_inversion(handle, check.t_grid, check.method, check.y, check.orders)
    distance = handle.xi.distance_to_jump(frame["t"].to_numpy())
    usable = frame[(distance >= check.min_distance) & ~frame["at_jump"]]
    if check.method == "complex":
        residual = float(usable["abs_error"].max()) if len(usable) else 0.0
        return CheckOutcome(residual <= check.tolerance, {"points": len(usable)}, residual, frames={"samples": frame})

    decreasing = True
    finals = []
    for _, group in usable.groupby("t", sort=True):
        errors = group.sort_values("k")["abs_error"].to_numpy()
        decreasing = decreasing and bool(np.all(np.diff(errors) < 0.0) or np.all(errors == 0.0))
        finals.append(float(errors[-1]))
    residual = max(finals, default=0.0)
    return CheckOutcome(decreasing and residual <= check.tolerance, {"decreasing": decreasing}, residual,
                        frames={"samples": frame})


def _krein_integral(runner: ScenarioRunner, check: schema.KreinIntegralCheck) -> CheckOutcome:
    result = krein_integral_check(runner.function(check.psi), runner.tuples[check.a], runner.tuples[check.b])
    return CheckOutcome(result["residual"] <= check.tolerance, result, result["residual"], result["budget"])


def _theorem1(runner: ScenarioRunner, check: schema.Theorem1Check) -> CheckOutcome:
    report = theorem1_check(runner.function(check.psi), runner.tuples[check.a], runner.tuples[check.b], check.id)
    return CheckOutcome(report.passed, report.to_dict(), max(0.0, -report.margin), report.budget)


def _theorem2(runner: ScenarioRunner, check: schema.Theorem2Check) -> CheckOutcome:
    report = theorem2_check(runner.function(check.psi), runner.tuples[check.a], runner.tuples[check.b],
                            check.norm, check.id)
    return CheckOutcome(report.passed, report.to_dict(), max(0.0, -report.margin), report.budget)


def _bound_suite(runner: ScenarioRunner, check: schema.BoundSuiteCheck) -> CheckOutcome:
    frame = run_bound_suite(runner.function(check.psi), check.theorem, check.count, check.seed,
                            check.d, check.norm, check.basis_kind)
    violations = int((~frame["pass"]).sum())
    values = {"members": len(frame), "violations": violations, "min_margin": float(frame["margin"].min())}
    return CheckOutcome(violations == 0, values, float(violations), frames={"suite": frame})


HANDLERS = {
    "validate_bernstein": _validate_bernstein,
    "validate_tuple": _validate_tuple,
    "diagonal_oracle": _diagonal_oracle,
    "subordination": _subordination,
    "frechet_remainder": _frechet_remainder,
    "divided_difference_identity": _divided_difference,
    "trace_semigroup_diff": _trace_semigroup,
    "trace_formula": _trace_formula,
    "resolvent_trace": _resolvent_trace,
    "subordinated_shift": _subordinated_shift,
    "perturbation_determinant": _determinant,
    "determinant_identities": _determinant_identities,
    "stieltjes_inversion": _stieltjes_inversion,
    "krein_integral": _krein_integral,
    "theorem1": _theorem1,
    "theorem2": _theorem2,
    "bound_suite": _bound_suite,
}


def _metadata(scenario: schema.Scenario, path: Path, started: datetime, elapsed: float, parallel: int) -> RunMetadata:
    return RunMetadata(
        scenario=scenario.name,
        scenario_file=str(path),
        started_at=started.isoformat(),
        wall_clock_seconds=elapsed,
        platform=platform.platform(),
        python=sys.version.split()[0],
        versions={"numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__,
                  "pydantic": pydantic.__version__},
        parallel=parallel,
    )


def run_scenario(path: str | Path, output_dir: str | Path, fmt: str = "json",
                 parallel: int = 1) -> tuple[ExperimentReport | None, int]:
    """Run one scenario file; returns the report and the exit code."""
    path, output_dir = Path(path), Path(output_dir)
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    try:
        scenario = load_scenario(path)
        runner = ScenarioRunner(scenario, output_dir, parallel)
    except ScenarioError as exc:
        logger.error("%s", exc)
        return None, EXIT_CONFIG_ERROR
    report = runner.run()
    write_report(report, _metadata(scenario, path, started, time.perf_counter() - clock, parallel), output_dir, fmt)
    failed = [check.id for check in report.checks if not check.passed]
    if failed:
        logger.error("Scenario %s: %d of %d checks failed: %s", scenario.name, len(failed),
                     len(report.checks), ", ".join(failed))
        return report, EXIT_CHECK_FAILED
    logger.info("Scenario %s: all %d checks passed", scenario.name, len(report.checks))
    return report, EXIT_OK
