"""JSON file models for the cli.

Matrices are row-major nested lists. The dims block is authoritative: every
array is checked against it and a mismatch names the offending field.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dissynth.config import settings
from dissynth.datamodel import ExperimentData, NoiseModel, PlantModel, stack_noise_channels
from dissynth.dissipativity import (
    SupplyRate,
    l2_gain_supply,
    passive_supply,
    state_strict_passive_supply,
)
from dissynth.matcore import Matrix
from dissynth.synthesis import KnownOutputs, SynthesisProblem

MatrixList = list[list[float]]


class FileModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


def to_matrix(name: str, value: MatrixList | None, rows: int, cols: int) -> Matrix:
    """Nested list to array, checked against (rows, cols); [] stands for an empty matrix."""
    if value is None:
        raise ValueError(f"{name}: required")
    arr = np.asarray(value, dtype=float)
    if arr.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    if arr.ndim != 2 or arr.shape != (rows, cols):
        raise ValueError(f"{name}: expected shape ({rows}, {cols}), got {arr.shape}")
    return arr


def from_matrix(value: Matrix | None) -> MatrixList | None:
    return None if value is None else np.asarray(value, dtype=float).tolist()


# --- Supply and noise blocks ---


class SupplySpec(FileModel):
    kind: Literal["passive", "l2gain", "stateStrictPassive", "custom"]
    gamma: float | None = None
    epsilon: float | None = Field(None, alias="epsMin", gt=0)
    maximize_epsilon: bool = Field(False, alias="maximizeEpsilon")
    s: MatrixList | None = Field(None, alias="S")

    @model_validator(mode="after")
    def _check_params(self) -> "SupplySpec":
        if self.kind == "l2gain" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("supply.gamma: a positive gain bound is required for l2gain")
        if self.kind == "custom" and self.s is None:
            raise ValueError("supply.S: required for a custom supply")
        if self.maximize_epsilon and self.kind != "stateStrictPassive":
            raise ValueError("supply.maximizeEpsilon: only for stateStrictPassive")
        return self

    def build(self, in_dim: int, out_dim: int, n: int) -> SupplyRate:
        """Supply over (in_dim inputs, out_dim outputs); state-strict adds the n states."""
        match self.kind:
            case "passive":
                if in_dim != out_dim:
                    raise ValueError(f"supply: passivity needs d = p, got {in_dim} and {out_dim}")
                return passive_supply(in_dim)
            case "l2gain":
                return l2_gain_supply(in_dim, out_dim, self.gamma)
            case "stateStrictPassive":
                if in_dim != out_dim:
                    raise ValueError(
                        f"supply: state-strict passivity needs d = p, got {in_dim} and {out_dim}"
                    )
                epsilon = settings.epsilon_min if self.epsilon is None else self.epsilon
                return state_strict_passive_supply(n, in_dim, epsilon)
            case _:
                size = in_dim + out_dim
                return SupplyRate(to_matrix("supply.S", self.s, size, size), in_dim, out_dim)


class NoiseSpec(FileModel):
    kind: Literal["normBound", "energyBound", "custom"]
    radius: float | None = Field(None, ge=0)
    bound: float | None = Field(None, ge=0)
    phi: MatrixList | None = Field(None, alias="Phi")

    def build(self, d: int, horizon: int) -> NoiseModel:
        match self.kind:
            case "normBound":
                radius = 1.0 if self.radius is None else self.radius
                return NoiseModel.norm_bound(d, horizon, radius)
            case "energyBound":
                if self.bound is None:
                    raise ValueError("noise.bound: required for energyBound")
                return NoiseModel.energy_bound(d, horizon, self.bound)
            case _:
                size = d + horizon
                return NoiseModel.custom(to_matrix("noise.Phi", self.phi, size, size), d)


# --- Problem file ---


class Dims(FileModel):
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    p: int = Field(ge=0)
    d: int = Field(ge=1)
    horizon: int = Field(alias="T", ge=1)


class ProblemFile(FileModel):
    dims: Dims
    mode: Literal["known", "unknown"]
    seed: int | None = None
    e: MatrixList = Field(alias="E")
    f: MatrixList = Field(alias="F")
    c_s: MatrixList | None = Field(None, alias="C_s")
    d_s: MatrixList | None = Field(None, alias="D_s")
    u_minus: MatrixList = Field(alias="U_minus")
    x: MatrixList = Field(alias="X")
    y_minus: MatrixList | None = Field(None, alias="Y_minus")
    w_minus: MatrixList | None = Field(None, alias="W_minus")
    supply: SupplySpec
    noise: NoiseSpec

    @model_validator(mode="after")
    def _check_shapes(self) -> "ProblemFile":
        n, m, p, d, horizon = (
            self.dims.n, self.dims.m, self.dims.p, self.dims.d, self.dims.horizon,
        )
        to_matrix("E", self.e, n, d)
        to_matrix("F", self.f, p, d)
        to_matrix("U_minus", self.u_minus, m, horizon)
        to_matrix("X", self.x, n, horizon + 1)
        if self.mode == "known" or self.c_s is not None or self.d_s is not None:
            to_matrix("C_s", self.c_s, p, n)
            to_matrix("D_s", self.d_s, p, m)
        if self.mode == "unknown" or self.y_minus is not None:
            to_matrix("Y_minus", self.y_minus, p, horizon)
        if self.w_minus is not None:
            to_matrix("W_minus", self.w_minus, d, horizon)
        return self

    def with_mode(self, mode: str | None) -> "ProblemFile":
        if mode is None or mode == self.mode:
            return self
        return ProblemFile.model_validate({**self.model_dump(by_alias=True), "mode": mode})

    def to_problem(self) -> SynthesisProblem:
        dims = self.dims
        n, m, p, d, horizon = dims.n, dims.m, dims.p, dims.d, dims.horizon
        y = None if self.mode == "known" else to_matrix("Y_minus", self.y_minus, p, horizon)
        u = to_matrix("U_minus", self.u_minus, m, horizon)
        data = ExperimentData(u, to_matrix("X", self.x, n, horizon + 1), y)
        known = None
        if self.mode == "known":
            known = KnownOutputs(to_matrix("C_s", self.c_s, p, n), to_matrix("D_s", self.d_s, p, m))
        return SynthesisProblem(
            data=data,
            e=to_matrix("E", self.e, n, d),
            f=to_matrix("F", self.f, p, d),
            noise=self.noise.build(d, horizon),
            supply=self.supply.build(d, p, n),
            known=known,
            maximize_epsilon=self.supply.maximize_epsilon,
        )


# --- Result file ---


class VerificationBlock(FileModel):
    samples: int
    min_eig: float = Field(alias="minEig")
    passed: bool = Field(alias="pass")
    consistent: int | None = None
    seed: int | None = None


class DiagnosticsBlock(FileModel):
    supply_inertia: bool = Field(alias="supplyInertia")
    rank: bool
    pi_class: bool | None = Field(None, alias="piClass")
    positive_eigenvalue: bool | None = Field(None, alias="positiveEigenvalue")
    interior_sufficient: bool | None = Field(None, alias="interiorSufficient")
    output_cancellation: bool | None = Field(None, alias="outputCancellation")


class ResultFile(FileModel):
    status: Literal["feasible", "infeasible", "undecided"]
    branch: Literal["unknownOutput", "knownOutputStrict", "knownOutputDegenerate"] | None = None
    k: MatrixList | None = Field(None, alias="K")
    p: MatrixList | None = Field(None, alias="P")
    alpha: float | None = None
    epsilon: float | None = None
    feasibility_margin: float | None = Field(None, alias="feasibilityMargin")
    reason: str | None = None
    verification: VerificationBlock | None = None
    diagnostics: DiagnosticsBlock | None = None

    @model_validator(mode="after")
    def _check_feasible(self) -> "ResultFile":
        if self.status == "feasible" and (self.k is None or self.p is None or self.branch is None):
            raise ValueError("feasible results need K, P and branch")
        return self


# --- Analysis and S-lemma files ---


class ModelDims(FileModel):
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    p: int = Field(ge=1)


class ModelFile(FileModel):
    """A plant quadruple (A, B, C, D) and a supply over (u, y) for analysis."""

    dims: ModelDims
    a: MatrixList = Field(alias="A")
    b: MatrixList = Field(alias="B")
    c: MatrixList = Field(alias="C")
    d: MatrixList = Field(alias="D")
    supply: SupplySpec
    strict: bool = False

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelFile":
        self.matrices()
        return self

    def matrices(self) -> tuple[Matrix, Matrix, Matrix, Matrix]:
        n, m, p = self.dims.n, self.dims.m, self.dims.p
        return (
            to_matrix("A", self.a, n, n),
            to_matrix("B", self.b, n, m),
            to_matrix("C", self.c, p, n),
            to_matrix("D", self.d, p, m),
        )


class AnalysisFile(FileModel):
    status: Literal["feasible", "infeasible", "undecided"]
    p: MatrixList | None = Field(None, alias="P")
    margin: float | None = None
    reason: str | None = None


class SlemmaFile(FileModel):
    q: int = Field(ge=1)
    r: int = Field(ge=1)
    m: MatrixList = Field(alias="M")
    n: MatrixList = Field(alias="N")

    @model_validator(mode="after")
    def _check_shapes(self) -> "SlemmaFile":
        size = self.q + self.r
        to_matrix("M", self.m, size, size)
        to_matrix("N", self.n, size, size)
        return self


class SlemmaResultFile(FileModel):
    status: Literal["feasible", "infeasible"]
    alpha: float
    residual_min_eig: float = Field(alias="residualMinEig")


# --- Generator config ---


class InputLaw(FileModel):
    kind: Literal["gaussian", "feedback"] = "gaussian"
    scale: float = Field(1.0, ge=0)
    k: MatrixList | None = Field(None, alias="K")


class NoiseLaw(FileModel):
    kind: Literal["uniform", "ball", "zero"] = "uniform"
    low: float = 0.0
    high: float = 1.0
    radius: float = Field(1.0, ge=0)


class GenConfig(FileModel):
    """True plant, excitation and noise laws for synthetic experiments.

    With noise_channels = "stacked", E (n x d1) and F (p x d2) act on separate
    noise components and the recorded problem uses ([E 0], [0 F]) with d = d1 + d2.
    """

    dims: Dims
    mode: Literal["known", "unknown"] = "known"
    seed: int | None = None
    a: MatrixList = Field(alias="A")
    b: MatrixList = Field(alias="B")
    c: MatrixList = Field(alias="C")
    d: MatrixList = Field(alias="D")
    e: MatrixList = Field(alias="E")
    f: MatrixList = Field(alias="F")
    x0: list[float] | None = None
    inputs: InputLaw = InputLaw()
    noise_law: NoiseLaw = Field(NoiseLaw(), alias="noiseLaw")
    noise_channels: Literal["shared", "stacked"] = Field("shared", alias="noiseChannels")
    supply: SupplySpec
    noise: NoiseSpec

    @model_validator(mode="after")
    def _check_shapes(self) -> "GenConfig":
        self.plant()
        if self.x0 is not None and len(self.x0) != self.dims.n:
            raise ValueError(f"x0: expected {self.dims.n} entries, got {len(self.x0)}")
        if self.inputs.kind == "feedback":
            to_matrix("inputs.K", self.inputs.k, self.dims.m, self.dims.n)
        return self

    def plant(self) -> PlantModel:
        n, m, p, d = self.dims.n, self.dims.m, self.dims.p, self.dims.d
        if self.noise_channels == "stacked":
            e = np.asarray(self.e, dtype=float)
            if e.ndim != 2 or e.shape[0] != n or not 0 < e.shape[1] < d:
                raise ValueError(f"E: expected {n} rows and fewer than {d} columns when stacked")
            e, f = stack_noise_channels(
                to_matrix("E", self.e, n, e.shape[1]), to_matrix("F", self.f, p, d - e.shape[1])
            )
        else:
            e, f = to_matrix("E", self.e, n, d), to_matrix("F", self.f, p, d)
        return PlantModel(
            to_matrix("A", self.a, n, n),
            to_matrix("B", self.b, n, m),
            to_matrix("C", self.c, p, n),
            to_matrix("D", self.d, p, m),
            e,
            f,
        )


SCHEMAS: dict[str, type[BaseModel]] = {
    "problem": ProblemFile,
    "result": ResultFile,
    "gen": GenConfig,
    "model": ModelFile,
    "analysis": AnalysisFile,
    "slemma": SlemmaFile,
    "slemma-result": SlemmaResultFile,
}
