import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import InvalidLagError, InvalidObservationError, ShapeMismatchError, SolverError

# Relative tolerance used to decide that a zero lag is real.
REAL_TOL = 1e-12


class Method(Enum):
    """The four gridless 1-bit channel estimators."""
    BIANM = "BiANM"
    REBIANM = "ReBiANM"
    DEBIANM = "DeBiANM"
    REDEBIANM = "ReDeBiANM"

    @property
    def is_decoupled(self) -> bool:
        return self in (Method.DEBIANM, Method.REDEBIANM)

    @classmethod
    def parse(cls, name: str) -> "Method":
        """Case-insensitive lookup by display name."""
        for method in cls:
            if method.value.lower() == name.strip().lower():
                return method
        known = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown method '{name}' (expected one of {known})")


class SeparationPolicy(Enum):
    NONE = "none"
    ENFORCE_JOINT = "enforce-joint"
    ENFORCE_DECOUPLED = "enforce-decoupled"


class SdpVariant(Enum):
    COUPLED = "coupled"
    DECOUPLED = "decoupled"


class MeasurementConstraint(Enum):
    """How the measurements enter the program."""
    SIGN_CONSISTENT = "sign-consistent"
    EQUALITY = "equality"


class SolverStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    INFEASIBLE_SUSPECTED = "infeasible-suspected"


class LagLevel(Enum):
    ONE = "one"
    TWO = "two"


def _is_real(value: complex) -> bool:
    return abs(value.imag) <= REAL_TOL * max(1.0, abs(value.real))


@dataclass(frozen=True, eq=False)
class OneLevelLagVector:
    """Lags u[0..K-1] of a K x K Hermitian Toeplitz matrix.

    Entry (i, j) of the expanded matrix is u[i-j] for i >= j and
    conj(u[j-i]) otherwise.
    """
    u: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=complex).reshape(-1)
        if u.size == 0:
            raise InvalidLagError("lag vector must have at least one entry")
        if not _is_real(u[0]):
            raise InvalidLagError(f"zero lag must be real, got {u[0]}")
        u = u.copy()
        u[0] = u[0].real
        object.__setattr__(self, "u", u)

    @property
    def K(self) -> int:
        return int(self.u.size)


@dataclass(frozen=True, eq=False)
class TwoLevelLagTable:
    """Lags u(k1, k2) of an MN x MN two-level Hermitian Toeplitz matrix.

    ``values`` has shape (N, 2M-1); column ``k2 + M - 1`` holds intra-block
    lag k2. Negative block lags follow u(-k1, -k2) = conj(u(k1, k2)).
    """
    values: np.ndarray
    M: int
    N: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        expected = (self.N, 2 * self.M - 1)
        if self.M < 1 or self.N < 1 or values.shape != expected:
            raise ShapeMismatchError(
                f"lag table shape {values.shape} does not match dims "
                f"(M={self.M}, N={self.N}); expected {expected}"
            )
        row = values[0]
        centre = self.M - 1
        if not _is_real(row[centre]):
            raise InvalidLagError(f"u(0,0) must be real, got {row[centre]}")
        scale = max(1.0, float(np.max(np.abs(row))))
        if np.max(np.abs(row - np.conj(row[::-1]))) > 1e-10 * scale:
            raise InvalidLagError("row k1=0 must satisfy u(0,-k2) = conj(u(0,k2))")
        values = values.copy()
        values[0, centre] = values[0, centre].real
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, M: int, N: int) -> "TwoLevelLagTable":
        return cls(np.zeros((N, 2 * M - 1), dtype=complex), M, N)

    def at(self, k1: int, k2: int) -> complex:
        """Lag value for any (k1, k2), negative block lags included."""
        if abs(k1) >= self.N or abs(k2) >= self.M:
            raise IndexError(f"lag ({k1}, {k2}) outside dims (M={self.M}, N={self.N})")
        if k1 >= 0:
            return complex(self.values[k1, k2 + self.M - 1])
        return complex(np.conj(self.values[-k1, -k2 + self.M - 1]))


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    """Ground-truth multipath channel H = sum_l alpha_l a_M(theta_l) a_N(tau_l)^H."""
    M: int
    N: int
    L: int
    alphas: np.ndarray
    thetas: np.ndarray
    taus: np.ndarray
    H: np.ndarray
    seed: Optional[int] = None

    @property
    def h(self) -> np.ndarray:
        """vec(H); entry (m, n) lands at index n*M + m."""
        return self.H.reshape(-1, order="F")

    def to_record(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "N": self.N,
            "L": self.L,
            "alphas": [[float(a.real), float(a.imag)] for a in self.alphas],
            "thetas": [float(t) for t in self.thetas],
            "taus": [float(t) for t in self.taus],
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SeparationReport:
    """Minimum pairwise gaps and the two separation verdicts."""
    delta_theta: float
    delta_tau: float
    joint_ok: bool
    decoupled_ok: bool
    joint_bound: float
    d1: float
    d2: float
    extrapolated: bool

    def to_record(self) -> Dict[str, Any]:
        return {
            "delta_theta": self.delta_theta,
            "delta_tau": self.delta_tau,
            "joint_ok": self.joint_ok,
            "decoupled_ok": self.decoupled_ok,
            "joint_bound": self.joint_bound,
            "d1": self.d1,
            "d2": self.d2,
            "extrapolated": self.extrapolated,
        }


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Phi = X^T kron I_M for diagonal pilots X = diag(x), kept as a diagonal."""
    pilots: np.ndarray
    M: int

    def __post_init__(self) -> None:
        pilots = np.asarray(self.pilots, dtype=complex).reshape(-1)
        if pilots.size == 0 or self.M < 1:
            raise ShapeMismatchError("sensing operator needs M >= 1 and at least one pilot")
        if np.any(pilots == 0):
            raise InvalidObservationError("pilot symbols must be nonzero")
        object.__setattr__(self, "pilots", pilots)

    @property
    def N(self) -> int:
        return int(self.pilots.size)

    @property
    def size(self) -> int:
        return self.M * self.N

    @property
    def diagonal(self) -> np.ndarray:
        return np.repeat(self.pilots, self.M)

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.size,):
            raise ShapeMismatchError(f"expected vector of length {self.size}, got {v.shape}")
        return v

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.diagonal * self._check(h)

    def solve(self, y: np.ndarray) -> np.ndarray:
        """Phi^{-1} y."""
        return self._check(y) / self.diagonal


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Pilots, noise level and the 1-bit samples of one measurement."""
    pilots: np.ndarray
    sigma2: float
    samples: Tuple[np.ndarray, ...]
    R_voted: np.ndarray
    r: np.ndarray
    phi: SensingOperator

    @property
    def X(self) -> np.ndarray:
        return np.diag(self.pilots)

    @property
    def Rprime(self) -> np.ndarray:
        return np.diag(self.r)

    @property
    def k_os(self) -> int:
        return len(self.samples)

    @property
    def M(self) -> int:
        return self.phi.M

    @property
    def N(self) -> int:
        return self.phi.N


class SolverSettings(BaseModel):
    """ADMM settings. Defaults are calibrated on the single-atom oracle."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    rho: float = Field(default=1.0, gt=0)
    eps_abs: float = Field(default=1e-5, gt=0)
    eps_rel: float = Field(default=1e-4, gt=0)
    max_iterations: int = Field(default=5000, ge=1)
    over_relaxation: float = Field(default=1.6, ge=1.0, le=1.9)
    adaptive_penalty: bool = True
    record_trace: bool = False


@dataclass(frozen=True, eq=False)
class StructuredSdp:
    """One of the four convex programs in solver-ready form.

    ``weight`` is the MN x MN trace weight of the coupled program;
    ``weight_angle`` / ``weight_delay`` are the M x M and N x N weights of the
    decoupled program. ``None`` stands for the identity.
    """
    variant: SdpVariant
    M: int
    N: int
    r: np.ndarray
    phi: SensingOperator
    weight: Optional[np.ndarray] = None
    weight_angle: Optional[np.ndarray] = None
    weight_delay: Optional[np.ndarray] = None
    constraint: MeasurementConstraint = MeasurementConstraint.SIGN_CONSISTENT
    target: Optional[np.ndarray] = None
    p: float = 1.0

    def __post_init__(self) -> None:
        if (self.phi.M, self.phi.N) != (self.M, self.N):
            raise ShapeMismatchError(
                f"sensing operator dims ({self.phi.M}, {self.phi.N}) "
                f"do not match problem dims ({self.M}, {self.N})"
            )
        r = np.asarray(self.r, dtype=complex).reshape(-1)
        if r.size != self.M * self.N:
            raise ShapeMismatchError(f"sign vector length {r.size} != MN={self.M * self.N}")
        if not (np.all(np.abs(r.real) == 1) and np.all(np.abs(r.imag) == 1)):
            raise InvalidObservationError("sign vector entries must lie in {+-1 +-j}")
        object.__setattr__(self, "r", r)
        if self.constraint is MeasurementConstraint.EQUALITY:
            if self.target is None:
                raise SolverError("equality constraint requires a target")
            target = np.asarray(self.target, dtype=complex).reshape(-1)
            if target.size != self.M * self.N:
                raise ShapeMismatchError("equality target must have length MN")
            object.__setattr__(self, "target", target)
        if self.p <= 0:
            raise SolverError("normalisation target p must be positive")
        if self.variant is SdpVariant.COUPLED:
            self._check_weight(self.weight, self.M * self.N, "weight")
        else:
            self._check_weight(self.weight_angle, self.M, "weight_angle")
            self._check_weight(self.weight_delay, self.N, "weight_delay")

    @staticmethod
    def _check_weight(weight: Optional[np.ndarray], side: int, name: str) -> None:
        if weight is None:
            return
        if weight.shape != (side, side):
            raise ShapeMismatchError(f"{name} must be {side}x{side}, got {weight.shape}")
        scale = max(1.0, float(np.max(np.abs(weight))))
        if np.max(np.abs(weight - weight.conj().T)) > 1e-10 * scale:
            raise SolverError(f"{name} must be Hermitian")
        if np.linalg.eigvalsh(weight).min() <= 0:
            raise SolverError(f"{name} must be positive definite")

    @property
    def psd_side(self) -> int:
        if self.variant is SdpVariant.COUPLED:
            return self.M * self.N + 1
        return self.M + self.N

    def coupled_weight(self) -> np.ndarray:
        if self.weight is None:
            return np.eye(self.M * self.N, dtype=complex)
        return self.weight

    def decoupled_weights(self) -> Tuple[np.ndarray, np.ndarray]:
        angle = np.eye(self.M, dtype=complex) if self.weight_angle is None else self.weight_angle
        delay = np.eye(self.N, dtype=complex) if self.weight_delay is None else self.weight_delay
        return angle, delay


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    primal_residual: float
    dual_residual: float
    rho: float


@dataclass(frozen=True)
class SolverReport:
    """Outcome of one structured-SDP solve."""
    status: SolverStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    min_eigenvalue: float
    sign_violations: int
    normalization_residual: float
    psd_side: int
    rho: float
    restoration_shift: float
    settings: SolverSettings
    trace: Tuple[IterationTrace, ...] = ()

    @property
    def converged(self) -> bool:
        return self.status is SolverStatus.CONVERGED

    def to_record(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective": self.objective,
            "min_eigenvalue": self.min_eigenvalue,
            "sign_violations": self.sign_violations,
            "normalization_residual": self.normalization_residual,
            "psd_side": self.psd_side,
            "rho": self.rho,
            "restoration_shift": self.restoration_shift,
            "settings": self.settings.model_dump(),
        }


class CoupledSolution(NamedTuple):
    h: np.ndarray
    u: TwoLevelLagTable
    delta: float
    report: SolverReport


class DecoupledSolution(NamedTuple):
    H: np.ndarray
    u_theta: OneLevelLagVector
    u_tau: OneLevelLagVector
    report: SolverReport


@dataclass(frozen=True)
class CertificateReport:
    """Independent feasibility check of a returned solution."""
    min_eigenvalue: float
    trace: float
    min_sign_component: float
    normalization_residual: float

    @property
    def psd_ok(self) -> bool:
        return self.min_eigenvalue >= -1e-6 * max(self.trace, 1.0)

    @property
    def sign_ok(self) -> bool:
        return self.min_sign_component >= -1e-6

    @property
    def normalization_ok(self) -> bool:
        return self.normalization_residual <= 1e-4

    @property
    def passed(self) -> bool:
        return self.psd_ok and self.sign_ok and self.normalization_ok


@dataclass(frozen=True, eq=False)
class SpectralComponents:
    """Frequencies and powers retrieved from a Toeplitz lag vector."""
    frequencies: np.ndarray
    powers: np.ndarray
    relative_error: float
    rank_deficient: bool
    ambiguous: bool


@dataclass(frozen=True)
class EstimatorConfig:
    method: Method
    J: int = 5
    zeta0: float = 1.0
    solver: SolverSettings = field(default_factory=SolverSettings)
    retrieve_paths: bool = False
    L: Optional[int] = None

    def __post_init__(self) -> None:
        if self.J < 0:
            raise ValueError("J must be non-negative")
        if not self.zeta0 > 0:
            raise ValueError("zeta0 must be positive")
        if self.retrieve_paths and (self.L is None or self.L < 1):
            raise ValueError("path retrieval needs the path count L")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Unit-norm channel estimate plus per-solve diagnostics."""
    method: Method
    h_hat: np.ndarray
    reports: Tuple[SolverReport, ...]
    wall_time_s: float
    zetas: Tuple[float, ...] = ()
    theta_hat: Optional[np.ndarray] = None
    tau_hat: Optional[np.ndarray] = None

    @property
    def final_report(self) -> SolverReport:
        return self.reports[-1]

    @property
    def converged(self) -> bool:
        return all(report.converged for report in self.reports)

    @property
    def status(self) -> SolverStatus:
        for report in self.reports:
            if not report.converged:
                return report.status
        return SolverStatus.CONVERGED

    def to_record(self, include_time: bool = True) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "method": self.method.value,
            "h_hat": [[float(v.real), float(v.imag)] for v in self.h_hat],
            "reports": [report.to_record() for report in self.reports],
            "zetas": list(self.zetas),
            "theta_hat": None if self.theta_hat is None else self.theta_hat.tolist(),
            "tau_hat": None if self.tau_hat is None else self.tau_hat.tolist(),
        }
        if include_time:
            record["wall_time_s"] = self.wall_time_s
        return record


@dataclass(frozen=True)
class TrialRecord:
    """One (method, SNR, trial) outcome of a Monte-Carlo sweep."""
    method: str
    snr_db: float
    trial: int
    seed: int
    nmse: float
    time_s: float
    status: str
    k_os: int
    primal_residual: float
    dual_residual: float
    joint_separated: bool
    decoupled_separated: bool

    def to_row(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "snr_db": self.snr_db,
            "trial": self.trial,
            "seed": self.seed,
            "nmse": self.nmse,
            "time_s": self.time_s,
            "status": self.status,
            "k_os": self.k_os,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "joint_separated": self.joint_separated,
            "decoupled_separated": self.decoupled_separated,
        }


@dataclass(frozen=True)
class BenchRecord:
    method: str
    size: int
    median_time_s: float
    repeats: int
    psd_side: int

    def to_row(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "size": self.size,
            "median_time_s": self.median_time_s,
            "repeats": self.repeats,
            "psd_side": self.psd_side,
        }


def snr_db_to_sigma2(snr_db: float) -> float:
    """SNR = 1/sigma^2; an infinite SNR is the noiseless case."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(10.0 ** (-snr_db / 10.0))


class ExperimentConfig(BaseModel):
    """Monte-Carlo sweep and benchmark configuration."""
    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    M: int = Field(ge=1)
    N: int = Field(ge=1)
    L: int = Field(default=3, ge=1)
    snr_db: List[float] = Field(default_factory=lambda: [-10.0, 0.0, 10.0, 20.0, 30.0])
    trials: int = Field(default=20, ge=1)
    methods: List[Method] = Field(default_factory=lambda: list(Method))
    oversampling: int = Field(default=1, ge=1)
    oversampling_baseline: bool = False
    seed: int = Field(default=0, ge=0)
    separation: SeparationPolicy = SeparationPolicy.NONE
    out: str = "results"
    workers: int = Field(default=1, ge=1)
    J: int = Field(default=5, ge=0)
    zeta0: float = Field(default=1.0, gt=0)
    scale_fit_metric: bool = False
    sizes: List[int] = Field(default_factory=lambda: [8, 16, 24])
    repeats: int = Field(default=5, ge=1)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @field_validator("snr_db")
    @classmethod
    def _snr_nonempty(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("snr list must not be empty")
        return value

    @field_validator("methods")
    @classmethod
    def _methods_nonempty(cls, value: List[Method]) -> List[Method]:
        if not value:
            raise ValueError("methods list must not be empty")
        return value

    @field_validator("oversampling")
    @classmethod
    def _oversampling_odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"oversampling factor must be odd, got {value}")
        return value

    @field_validator("sizes")
    @classmethod
    def _sizes_ascending(cls, value: List[int]) -> List[int]:
        if not value or any(s < 2 for s in value):
            raise ValueError("sizes must be a non-empty list of integers >= 2")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("sizes must be strictly ascending")
        return value

    @model_validator(mode="after")
    def _paths_fit(self) -> "ExperimentConfig":
        if self.L > min(self.M, self.N):
            raise ValueError(f"L={self.L} exceeds min(M, N)={min(self.M, self.N)}")
        return self

    def estimator_config(self, method: Method) -> EstimatorConfig:
        return EstimatorConfig(method=method, J=self.J, zeta0=self.zeta0, solver=self.solver)

    def oversampling_levels(self) -> List[int]:
        if self.oversampling > 1 and self.oversampling_baseline:
            return [1, self.oversampling]
        return [self.oversampling]
