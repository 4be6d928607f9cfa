"""Request/response models shared by the HTTP service and the CLI.

Configs are JSON documents with ``schema_version`` and ``kind``; unknown fields
are rejected everywhere.
"""
from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

Matrix = list[list[float]]

REF_A = [[1.0, 2.0], [1.0, 0.5]]
REF_B = [[1.0], [0.5]]
REF_P = [[2.4, 1.2], [1.2, 3.4]]
# open-loop unstable, N = 2 with zero terminal weight stabilizes it suboptimally
REGRET_A = [[1.2, 0.4], [0.2, 0.7]]
REGRET_B = [[1.0], [0.5]]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSpec(Strict):
    A: Matrix = Field(default_factory=lambda: [row[:] for row in REF_A])
    B: Matrix = Field(default_factory=lambda: [row[:] for row in REF_B])
    sigma_w: float = Field(1.0, ge=0)
    sigma_x: float = Field(0.0, ge=0)


class CostModel(Strict):
    Q: Optional[Matrix] = None
    R: Optional[Matrix] = None


class OutputSpec(Strict):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "json"


class _Base(Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    system: SystemSpec = Field(default_factory=SystemSpec)
    cost: CostModel = Field(default_factory=CostModel)
    seed: int = Field(0, ge=0, lt=2**64)
    jobs: int = Field(1, ge=1)
    output: OutputSpec = Field(default_factory=OutputSpec)


class DareConfig(_Base):
    kind: Literal["dare"] = "dare"
    tol: float = Field(1e-12, gt=0)
    max_iter: int = Field(100_000, ge=1)


class SynthesizeConfig(_Base):
    kind: Literal["synthesize"] = "synthesize"
    nominal: Optional[SystemSpec] = None
    N: int = Field(1, ge=1)
    P_terminal: Union[Matrix, Literal["zero", "optimal"]] = "zero"


class EmpiricalSpec(Strict):
    T: int = Field(4096, ge=1)
    trials: int = Field(64, ge=1)


class EvaluateConfig(_Base):
    kind: Literal["evaluate"] = "evaluate"
    K: Optional[Matrix] = None
    nominal: Optional[SystemSpec] = None
    N: int = Field(1, ge=1)
    P_terminal: Union[Matrix, Literal["zero", "optimal"]] = "zero"
    empirical: Optional[EmpiricalSpec] = None


class BoundConfig(_Base):
    kind: Literal["bound"] = "bound"
    nominal: Optional[SystemSpec] = None
    P_terminal: Union[Matrix, Literal["zero", "optimal"]] = "zero"
    eps_m: Optional[float] = Field(None, ge=0)
    eps_p: Optional[float] = Field(None, ge=0)
    eps: float = Field(0.0, ge=0)
    horizons: list[int] = Field(default_factory=lambda: list(range(1, 16)))

    @field_validator("horizons")
    @classmethod
    def _positive(cls, v):
        if not v or min(v) < 1:
            raise ValueError("horizons must be a non-empty list of integers >= 1")
        return v


class SweepConfig(_Base):
    kind: Literal["sweep"] = "sweep"
    P_terminal: Union[Matrix, Literal["zero", "optimal"]] = Field(
        default_factory=lambda: [row[:] for row in REF_P]
    )
    horizons: list[int] = Field(default_factory=lambda: list(range(1, 16)))
    num_models: int = Field(20, ge=0)
    perturbation_range: float = Field(0.5, ge=0)

    @field_validator("horizons")
    @classmethod
    def _positive(cls, v):
        if not v or min(v) < 1:
            raise ValueError("horizons must be a non-empty list of integers >= 1")
        return sorted(set(v))


class IdentifyConfig(_Base):
    kind: Literal["identify"] = "identify"
    T_grid: list[int] = Field(default_factory=lambda: [2**6, 2**8, 2**10, 2**12])
    num_seeds: int = Field(20, ge=1)
    sigma_u: float = Field(1.0, ge=0)
    t_h: int = Field(2, ge=1)


class ModeSpec(Strict):
    mode: Literal["fixed", "adaptive_log"]
    N: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _needs_n(self):
        if self.mode == "fixed" and self.N is None:
            raise ValueError("fixed mode needs N")
        return self

    @property
    def label(self) -> str:
        return f"fixed_N{self.N}" if self.mode == "fixed" else "adaptive_log"


def _regret_system() -> SystemSpec:
    return SystemSpec(A=[r[:] for r in REGRET_A], B=[r[:] for r in REGRET_B])


class AdaptiveExperimentConfig(_Base):
    kind: Literal["adaptive"] = "adaptive"
    system: SystemSpec = Field(default_factory=_regret_system)
    modes: list[ModeSpec] = Field(
        default_factory=lambda: [ModeSpec(mode="fixed", N=2), ModeSpec(mode="adaptive_log")]
    )
    T_total: int = Field(2**14, ge=4)
    num_seeds: int = Field(20, ge=1)
    k0: int = Field(3, ge=1)
    K0: Optional[Matrix] = None
    gamma_bar: Optional[float] = Field(None, gt=0, lt=1)
    max_N: int = Field(200, ge=1)
    informative_tol: float = Field(1e-6, ge=0)
    oracle_model: bool = False
    exploration_exponent: float = Field(0.25, ge=0)
    include_steps: bool = False

    @model_validator(mode="after")
    def _long_enough(self):
        if self.T_total < 2 ** (self.k0 + 1):
            raise ValueError(f"T_total must be >= 2^(k0+1) = {2 ** (self.k0 + 1)}")
        return self


ExperimentConfig = Annotated[
    Union[
        DareConfig,
        SynthesizeConfig,
        EvaluateConfig,
        BoundConfig,
        SweepConfig,
        IdentifyConfig,
        AdaptiveExperimentConfig,
    ],
    Field(discriminator="kind"),
]

CONFIG_TYPES = {
    "dare": DareConfig,
    "synthesize": SynthesizeConfig,
    "evaluate": EvaluateConfig,
    "bound": BoundConfig,
    "sweep": SweepConfig,
    "identify": IdentifyConfig,
    "adaptive": AdaptiveExperimentConfig,
}


# ---- responses --------------------------------------------------------------


class DareResult(Strict):
    kind: Literal["dare"] = "dare"
    P_star: Matrix
    K_star: Matrix
    L_star: Matrix
    J_star: float
    iterations: int
    residual: float
    beta: Optional[float]
    assumption1: bool


class SynthesizeResult(Strict):
    kind: Literal["synthesize"] = "synthesize"
    N: int
    K: Matrix
    stable: bool
    spectral_radius: float
    gap: Optional[float]


class EvaluateResult(Strict):
    kind: Literal["evaluate"] = "evaluate"
    K: Matrix
    stable: bool
    spectral_radius: float
    Sigma_K: Optional[Matrix]
    J_K: Optional[float]
    J_star: float
    gap: Optional[float]
    empirical_mean: Optional[float] = None
    empirical_stderr: Optional[float] = None


class BoundRow(Strict):
    N: int
    e_hat: Optional[float]
    g: Optional[float]
    preconditions_met: bool
    failed_conditions: list[str]
    known_model_bound: Optional[float]
    simplified_shape: float


class BoundResult(Strict):
    kind: Literal["bound"] = "bound"
    eps_m: float
    eps_p: float
    beta: float
    upsilon: float
    p_star_norm: float
    psi: float
    gamma1: float
    alpha: Optional[float]
    gamma2: Optional[float]
    psi_tilde: float
    gamma_bar: float
    criterion: Optional[float]
    recommendation: Optional[str]
    gain_gap_bound: float
    controller_gap_bound: float
    controller_gap_preconditions_met: bool
    rows: list[BoundRow]


class SweepRecord(Strict):
    model_index: int
    N: int
    stable: bool
    gap: Optional[float]
    normalized_gap: Optional[float]


class SweepModel(Strict):
    model_index: int
    dA: Matrix
    dB: Matrix
    complete: bool
    argmin_N: Optional[int]
    argmin_class: Literal["one", "max", "interior", "unstable"]


class SweepResult(Strict):
    kind: Literal["sweep"] = "sweep"
    seed: int
    horizons: list[int]
    records: list[SweepRecord]
    models: list[SweepModel]


class IdentifyRow(Strict):
    T: int
    median: float
    q25: float
    q75: float
    num_seeds: int


class IdentifyResult(Strict):
    kind: Literal["identify"] = "identify"
    rows: list[IdentifyRow]
    loglog_slope: Optional[float]


class EpochInfo(Strict):
    k: int
    t_k: int
    N: int
    eps_measured: Optional[float]
    regressor_min_singular: Optional[float]
    carried_over: bool
    K: Matrix


class AdaptiveRun(Strict):
    seed_index: int
    seed: int
    mode: str
    status: Literal["ok", "diverged"]
    message: Optional[str] = None
    final_regret: Optional[float] = None
    sqrtT_ratio: Optional[float] = None
    linear_slope: Optional[float] = None
    checkpoints: dict[str, float] = Field(default_factory=dict)
    epochs: list[EpochInfo] = Field(default_factory=list)
    steps: Optional[list[list[float]]] = None  # rows of (t, epoch, stage_cost, cum_regret)


class AdaptiveResult(Strict):
    kind: Literal["adaptive"] = "adaptive"
    J_star: float
    gamma_bar: float
    runs: list[AdaptiveRun]


ExperimentResult = Annotated[
    Union[
        DareResult,
        SynthesizeResult,
        EvaluateResult,
        BoundResult,
        SweepResult,
        IdentifyResult,
        AdaptiveResult,
    ],
    Field(discriminator="kind"),
]
