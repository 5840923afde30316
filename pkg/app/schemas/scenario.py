"""Scenario file schema: named functions, named tuples and an ordered list of checks."""
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

ComplexValue = Union[float, tuple[float, float]]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Bernstein functions

class DiracSpec(_Spec):
    kind: Literal["dirac"]
    v0: list[Annotated[float, Field(ge=0.0)]]
    mass: float = Field(1.0, gt=0.0)


class FracPowerSpec(_Spec):
    kind: Literal["frac_power"]
    alpha: float = Field(gt=0.0, lt=1.0)
    coordinate: int = Field(0, ge=0)
    arity: int = Field(1, ge=1)
    mass: float = Field(1.0, gt=0.0)


class LogResolventSpec(_Spec):
    kind: Literal["log_resolvent"]
    lam: float = Field(gt=0.0)
    coordinate: int = Field(0, ge=0)
    arity: int = Field(1, ge=1)
    mass: float = Field(1.0, gt=0.0)


class SumSpec(_Spec):
    kind: Literal["sum"]
    parts: list[str] = Field(min_length=1)


class ScaleSpec(_Spec):
    kind: Literal["scale"]
    factor: float = Field(gt=0.0)
    part: str


class TiltSpec(_Spec):
    kind: Literal["tilt"]
    shift: float = Field(le=0.0)
    part: str


FunctionSpec = Annotated[
    Union[DiracSpec, FracPowerSpec, LogResolventSpec, SumSpec, ScaleSpec, TiltSpec],
    Field(discriminator="kind"),
]


# Generator tuples

class ExplicitTupleSpec(_Spec):
    kind: Literal["explicit"]
    matrices: list[list[list[float]]] = Field(min_length=1)


class PlantedTupleSpec(_Spec):
    kind: Literal["planted"]
    eigenvalues: list[list[float]] = Field(min_length=1)  # d rows of n-tuples
    basis: list[list[float]] | None = None
    basis_seed: int | None = None
    basis_kind: Literal["orthogonal", "general"] = "orthogonal"


class RandomTupleSpec(_Spec):
    kind: Literal["random"]
    seed: int
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    basis_kind: Literal["orthogonal", "general"] = "orthogonal"


class PairMemberSpec(_Spec):
    kind: Literal["random_pair"]
    seed: int
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    member: Literal["A", "B"]
    basis_kind: Literal["orthogonal", "general"] = "orthogonal"


TupleSpec = Annotated[
    Union[ExplicitTupleSpec, PlantedTupleSpec, RandomTupleSpec, PairMemberSpec],
    Field(discriminator="kind"),
]


# Checks

class _Check(_Spec):
    id: str
    tolerance: float = Field(gt=0.0)


class ValidateBernsteinCheck(_Check):
    op: Literal["validate_bernstein"]
    psi: str
    lower: float = Field(-10.0, lt=0.0)
    upper: float = Field(-0.1, lt=0.0)
    points: int = Field(7, ge=2)


class ValidateTupleCheck(_Check):
    op: Literal["validate_tuple"]
    tuple: str
    max_bound: float | None = Field(None, gt=0.0)
    expect_pass: bool = True


class DiagonalOracleCheck(_Check):
    op: Literal["diagonal_oracle"]
    psi: str
    tuple: str


class SubordinationCheck(_Check):
    op: Literal["subordination"]
    psi: str
    tuple: str
    t: float = Field(ge=0.0)


class FrechetRemainderCheck(_Check):
    op: Literal["frechet_remainder"]
    psi: str
    tuple: str
    direction: list[list[list[float]]] | Literal["identity"] = "identity"
    h_grid: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4], min_length=2)
    norm: Literal["operator", "trace"] = "operator"
    min_slope: float = 1.9
    min_ratio_drop: float = 10.0


class DividedDifferenceCheck(_Check):
    op: Literal["divided_difference_identity"]
    psi: str
    tuple: str
    index: int = Field(0, ge=0)
    extra: list[list[float]]


class TraceSemigroupCheck(_Check):
    op: Literal["trace_semigroup_diff"]
    a: str
    b: str
    v: list[Annotated[float, Field(ge=0.0)]]


class _PairCheck(_Check):
    a: str
    b: str


class TraceFormulaCheck(_PairCheck):
    op: Literal["trace_formula"]
    psi: str


class ResolventTraceCheck(_PairCheck):
    op: Literal["resolvent_trace"]
    lam_grid: list[list[float]] = Field(min_length=1)


class SubordinatedShiftCheck(_PairCheck):
    op: Literal["subordinated_shift"]
    psi: str
    s_grid: list[Annotated[float, Field(gt=0.0)]] = Field(default_factory=lambda: [0.5, 1.0, 2.0])


class DeterminantCheck(_PairCheck):
    op: Literal["perturbation_determinant"]
    z_grid: list[ComplexValue] = Field(min_length=1)
    limit_grid: list[Annotated[float, Field(gt=0.0)]] = Field(default_factory=list)
    limit_tolerance: float = Field(1e-4, gt=0.0)
    trace_tolerance: float = Field(1e-5, gt=0.0)


class DeterminantIdentityCheck(_PairCheck):
    op: Literal["determinant_identities"]
    c: str
    z_grid: list[ComplexValue] = Field(min_length=1)
    derivative_tolerance: float = Field(1e-6, gt=0.0)


class StieltjesInversionCheck(_PairCheck):
    op: Literal["stieltjes_inversion"]
    method: Literal["complex", "real"]
    t_grid: list[Annotated[float, Field(gt=0.0)]] = Field(min_length=1)
    y: float = Field(1e-3, gt=0.0)
    orders: list[Annotated[int, Field(ge=2)]] = Field(default_factory=lambda: [4, 8, 16])
    min_distance: float = Field(0.1, ge=0.0)


class KreinIntegralCheck(_PairCheck):
    op: Literal["krein_integral"]
    psi: str


class Theorem1Check(_PairCheck):
    op: Literal["theorem1"]
    psi: str


class Theorem2Check(_PairCheck):
    op: Literal["theorem2"]
    psi: str
    norm: Literal["operator", "trace"] = "trace"


class BoundSuiteCheck(_Check):
    op: Literal["bound_suite"]
    psi: str
    theorem: Literal[1, 2]
    count: int = Field(100, ge=1)
    seed: int
    d: int = Field(4, ge=1)
    norm: Literal["operator", "trace"] = "trace"
    basis_kind: Literal["orthogonal", "general"] = "orthogonal"


CheckSpec = Annotated[
    Union[
        ValidateBernsteinCheck, ValidateTupleCheck, DiagonalOracleCheck, SubordinationCheck,
        FrechetRemainderCheck, DividedDifferenceCheck, TraceSemigroupCheck, TraceFormulaCheck,
        ResolventTraceCheck, SubordinatedShiftCheck, DeterminantCheck, DeterminantIdentityCheck,
        StieltjesInversionCheck, KreinIntegralCheck, Theorem1Check, Theorem2Check, BoundSuiteCheck,
    ],
    Field(discriminator="op"),
]

FUNCTION_FIELDS = ("psi",)
TUPLE_FIELDS = ("tuple", "a", "b", "c")


def function_refs(spec) -> list[str]:
    if isinstance(spec, SumSpec):
        return list(spec.parts)
    if isinstance(spec, (ScaleSpec, TiltSpec)):
        return [spec.part]
    return []


def check_refs(check) -> tuple[list[str], list[str]]:
    functions = [getattr(check, f) for f in FUNCTION_FIELDS if hasattr(check, f)]
    tuples = [getattr(check, f) for f in TUPLE_FIELDS if hasattr(check, f)]
    return functions, tuples


class Scenario(_Spec):
    name: str
    description: str = ""
    functions: dict[str, FunctionSpec] = Field(default_factory=dict)
    tuples: dict[str, TupleSpec] = Field(default_factory=dict)
    operations: list[CheckSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _references_resolve(self) -> "Scenario":
        for name, spec in self.functions.items():
            for ref in function_refs(spec):
                if ref not in self.functions:
                    raise ValueError(f"function {name!r} references undefined function {ref!r}")
        seen = set()
        for check in self.operations:
            if check.id in seen:
                raise ValueError(f"duplicate check id {check.id!r}")
            seen.add(check.id)
            functions, tuples = check_refs(check)
            for ref in functions:
                if ref not in self.functions:
                    raise ValueError(f"check {check.id!r} references undefined function {ref!r}")
            for ref in tuples:
                if ref not in self.tuples:
                    raise ValueError(f"check {check.id!r} references undefined tuple {ref!r}")
        return self
