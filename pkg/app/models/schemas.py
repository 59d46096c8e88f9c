from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Dict, Tuple, Any
from enum import Enum


class Space(str, Enum):
    """Coordinate space a point lives in"""
    U = "u"
    PHASE = "phase"


class Command(str, Enum):
    """Command-line commands"""
    VERIFY = "verify"
    INTEGRATE = "integrate"
    HIERARCHY = "hierarchy"
    SPECTRUM = "spectrum"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class SuiteName(str, Enum):
    """Verification suites runnable through `verify --suite`"""
    JACOBI = "jacobi"
    COMPATIBILITY = "compatibility"
    PUSHFORWARD = "pushforward"
    LAX = "lax"
    LENARD = "lenard"
    CONFORMAL = "conformal"
    OEVEL = "oevel"  # deformation relations of the master symmetries
    COMMUTE = "commute"
    INVOLUTION = "involution"
    CONJUGACY = "conjugacy"
    TDSYM = "tdsym"
    BIHAMILTONIAN = "bihamiltonian"
    MASTER = "master"
    HIERARCHY = "hierarchy"


class Dimension(BaseModel):
    """Dimension bookkeeping for lattice parameter n"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Lattice parameter")
    N: int = Field(..., description="u-space dimension 2n-1")
    M: int = Field(..., description="Phase-space dimension 2N")
    lax_size: int = Field(..., description="Lax matrix size 2n")

    @model_validator(mode="after")
    def check_relations(self):
        if self.N != 2 * self.n - 1 or self.M != 2 * self.N or self.lax_size != 2 * self.n:
            raise ValueError("inconsistent dimension bookkeeping")
        return self


class SampleSpec(BaseModel):
    """Seeded sampling request; box defaults depend on the space"""
    model_config = ConfigDict(frozen=True)

    seed: int
    count: int = Field(..., ge=1)
    box: Optional[Tuple[float, float]] = None

    @field_validator("box")
    @classmethod
    def validate_box(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("box lower bound must be below upper bound")
        return v


class CheckResult(BaseModel):
    """One residual compared against its tolerance"""
    suite: str
    name: str
    residual: float
    tolerance: float
    passed: bool
    hard: bool = True
    detail: Optional[str] = None


class CoefficientFit(BaseModel):
    """Least-squares scalar fit of a deformation relation"""
    relation: str = Field(..., description="tensor, hamiltonian or commutator")
    i: int
    j: int
    measured: float
    predicted: float
    relative_residual: float
    scalarity_spread: float = Field(..., ge=0.0)
    points: int
    field: str = "master"

    @property
    def is_scalar(self) -> bool:
        return self.scalarity_spread < 1e-6

    @property
    def magnitude_error(self) -> float:
        return abs(abs(self.measured) - abs(self.predicted))

    @property
    def sign_agrees(self) -> bool:
        if abs(self.predicted) == 0.0:
            return True
        return (self.measured > 0) == (self.predicted > 0)


class ConformalFit(BaseModel):
    """Measured conformal constants of X0"""
    lambda_: float = Field(..., alias="lambda")
    mu: float
    nu: float
    residuals: Dict[str, float]
    lambda_exact_zero: bool
    points: int

    model_config = ConfigDict(populate_by_name=True)


class DiscrepancyEntry(BaseModel):
    """Entry where the transcribed J3 bracket list disagrees with the generated one"""
    row: str
    col: str
    max_abs_difference: float


class DriftReport(BaseModel):
    """Drift of invariants and eigenvalues along a monitored trajectory"""
    invariant_drift: List[float]
    eigenvalue_drift: List[float]
    max_invariant_drift: float
    max_eigenvalue_drift: float
    steps: int
    method: str = "rk4"
    stride: int
    positive: bool = True
    failed: bool = False
    error: Optional[str] = None


class VerificationReport(BaseModel):
    """Structured result of a verification run"""
    tool: str
    version: str
    n: int
    seed: int
    points: int
    prng: str
    suites: List[str]
    tolerances: Dict[str, float]
    checks: List[CheckResult] = Field(default_factory=list)
    fits: List[CoefficientFit] = Field(default_factory=list)
    conformal: Optional[ConformalFit] = None
    discrepancies: List[DiscrepancyEntry] = Field(default_factory=list)
    measurements: Dict[str, Any] = Field(default_factory=dict)
    passed: bool = True


class SpectrumReport(BaseModel):
    tool: str
    version: str
    n: int
    u: List[float]
    eigenvalues: List[float]
    invariants: List[float]
    newton_residuals: List[float]
    eigensolver: str


class HierarchyDump(BaseModel):
    tool: str
    version: str
    n: int
    seed: int
    point: Dict[str, List[float]]
    recursion: List[List[float]]
    tensors: Dict[str, List[List[float]]]
    flows: Dict[str, List[float]]
    master_fields: Dict[str, List[float]]
    hamiltonians: Dict[str, float]


class RunConfig(BaseModel):
    """Validated command-line configuration"""
    command: Command
    n: int = Field(..., ge=1)
    seed: int
    points: int = Field(..., ge=1)
    suites: List[SuiteName] = Field(default_factory=list)
    tol_overrides: Dict[str, float] = Field(default_factory=dict)
    t1: float = 10.0
    dt: float = 1e-3
    kmax: int = Field(default=4, ge=1)
    space: Space = Space.U
    init: Optional[str] = None
    u: Optional[List[float]] = None
    origin: bool = False
    output_path: Optional[str] = None
    format: OutputFormat = OutputFormat.JSON

    @model_validator(mode="after")
    def check_command_options(self):
        if self.command == Command.INTEGRATE:
            if self.t1 <= 0 or self.dt <= 0:
                raise ValueError("t1 and dt must be positive")
            if self.dt > self.t1:
                raise ValueError("dt must not exceed t1")
        if self.command == Command.HIERARCHY and not 2 <= self.kmax <= 6:
            raise ValueError("kmax must lie in 2..6 for the hierarchy dump")
        if self.format == OutputFormat.CSV and self.command != Command.INTEGRATE:
            raise ValueError(f"{self.command.value} writes JSON only; CSV is for integrate trajectories")
        return self
