"""BiANM, ReBiANM, DeBiANM and ReDeBiANM channel estimators."""
import logging
import time
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from ..domain.entities import (
    CoupledSolution,
    DecoupledSolution,
    EstimateResult,
    EstimatorConfig,
    Method,
    ObservationSet,
    OneLevelLagVector,
    SdpVariant,
    SolverReport,
    StructuredSdp,
    TwoLevelLagTable,
)
from ..domain.errors import NumericalError
from ..domain.toeplitz import expand_one_level, expand_two_level, vandermonde_retrieve

if TYPE_CHECKING:
    from .interfaces import ConicSolver

logger = logging.getLogger(__name__)


def zeta_schedule(J: int, zeta0: float = 1.0) -> Tuple[float, ...]:
    """zeta_1 = zeta0, halved before every further reweighted solve."""
    return tuple(zeta0 / 2.0**j for j in range(J))


def regularized_inverse(T: np.ndarray, zeta: float) -> np.ndarray:
    """(T + zeta I)^{-1} through a Cholesky factorisation."""
    A = 0.5 * (T + T.conj().T) + zeta * np.eye(T.shape[0])
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
        inv = scipy.linalg.cho_solve(factor, np.eye(T.shape[0], dtype=complex))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"Cholesky factorisation of T + zeta I failed (zeta={zeta}): {exc}",
            side=T.shape[0],
            norm=float(np.linalg.norm(np.nan_to_num(T))),
            non_finite=int(np.count_nonzero(~np.isfinite(T))),
        ) from exc
    return 0.5 * (inv + inv.conj().T)


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalise a zero vector")
    return v / norm


def nmse(h_hat: np.ndarray, h_true: np.ndarray, scale_fit: bool = False) -> float:
    """Squared error between the unit-normalised estimate and channel.

    Phase is not quotiented out: 1-bit measurements only lose positive real
    scale. With ``scale_fit`` the best positive rescaling of h_hat is used
    instead, giving 1 - max(0, Re<h_hat, h>)^2 / (|h_hat|^2 |h|^2).
    """
    a, b = _unit(h_hat), _unit(h_true)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if scale_fit:
        c = max(0.0, float(np.vdot(a, b).real))
        return 1.0 - c * c
    return float(np.linalg.norm(a - b) ** 2)


def alignment(h_hat: np.ndarray, h_true: np.ndarray) -> float:
    """|<h_hat, h>| of the unit-normalised vectors."""
    return float(abs(np.vdot(_unit(h_hat), _unit(h_true))))


class ChannelEstimator:
    """Builds the structured programs from 1-bit observations and solves them."""

    def __init__(self, solver: "ConicSolver") -> None:
        self._solver = solver

    def estimate(self, obs: ObservationSet, config: EstimatorConfig) -> EstimateResult:
        handlers: Dict[Method, Callable[[ObservationSet, EstimatorConfig], EstimateResult]] = {
            Method.BIANM: self.estimate_bianm,
            Method.REBIANM: self.estimate_rebianm,
            Method.DEBIANM: self.estimate_debianm,
            Method.REDEBIANM: self.estimate_redebianm,
        }
        return handlers[config.method](obs, config)

    def _coupled_problem(
        self, obs: ObservationSet, weight: Optional[np.ndarray] = None
    ) -> StructuredSdp:
        return StructuredSdp(SdpVariant.COUPLED, obs.M, obs.N, obs.r, obs.phi, weight=weight)

    def _decoupled_problem(
        self,
        obs: ObservationSet,
        weight_angle: Optional[np.ndarray] = None,
        weight_delay: Optional[np.ndarray] = None,
    ) -> StructuredSdp:
        return StructuredSdp(
            SdpVariant.DECOUPLED, obs.M, obs.N, obs.r, obs.phi,
            weight_angle=weight_angle, weight_delay=weight_delay,
        )

    def estimate_bianm(self, obs: ObservationSet, config: EstimatorConfig) -> EstimateResult:
        return self._run_coupled(obs, config, Method.BIANM, J=0)

    def estimate_rebianm(self, obs: ObservationSet, config: EstimatorConfig) -> EstimateResult:
        return self._run_coupled(obs, config, Method.REBIANM, J=config.J)

    def estimate_debianm(self, obs: ObservationSet, config: EstimatorConfig) -> EstimateResult:
        return self._run_decoupled(obs, config, Method.DEBIANM, J=0)

    def estimate_redebianm(self, obs: ObservationSet, config: EstimatorConfig) -> EstimateResult:
        return self._run_decoupled(obs, config, Method.REDEBIANM, J=config.J)

    def _run_coupled(
        self, obs: ObservationSet, config: EstimatorConfig, method: Method, J: int
    ) -> EstimateResult:
        start = time.perf_counter()
        solution = self._solver.solve_coupled(self._coupled_problem(obs), config.solver)
        reports: List[SolverReport] = [solution.report]
        zetas = zeta_schedule(J, config.zeta0)
        for j, zeta in enumerate(zetas, 1):
            weight = regularized_inverse(expand_two_level(solution.u), zeta)
            solution = self._solver.solve_coupled(self._coupled_problem(obs, weight), config.solver)
            reports.append(solution.report)
            logger.debug("%s reweight %d/%d (zeta=%.4g): objective %.6g",
                         method.value, j, J, zeta, solution.report.objective)
        h_hat = _unit(solution.h)
        theta_hat = tau_hat = None
        if config.retrieve_paths and config.L is not None:
            theta_hat, tau_hat = _retrieve_coupled(solution, config.L)
        return self._result(method, h_hat, reports, start, zetas, theta_hat, tau_hat)

    def _run_decoupled(
        self, obs: ObservationSet, config: EstimatorConfig, method: Method, J: int
    ) -> EstimateResult:
        start = time.perf_counter()
        solution = self._solver.solve_decoupled(self._decoupled_problem(obs), config.solver)
        reports: List[SolverReport] = [solution.report]
        zetas = zeta_schedule(J, config.zeta0)
        for j, zeta in enumerate(zetas, 1):
            weight_angle = regularized_inverse(expand_one_level(solution.u_theta), zeta)
            weight_delay = regularized_inverse(expand_one_level(solution.u_tau), zeta)
            problem = self._decoupled_problem(obs, weight_angle, weight_delay)
            solution = self._solver.solve_decoupled(problem, config.solver)
            reports.append(solution.report)
            logger.debug("%s reweight %d/%d (zeta=%.4g): objective %.6g",
                         method.value, j, J, zeta, solution.report.objective)
        h_hat = _unit(np.asarray(solution.H).reshape(-1, order="F"))
        theta_hat = tau_hat = None
        if config.retrieve_paths and config.L is not None:
            theta_hat, tau_hat = _retrieve_decoupled(solution, config.L)
        return self._result(method, h_hat, reports, start, zetas, theta_hat, tau_hat)

    @staticmethod
    def _result(
        method: Method,
        h_hat: np.ndarray,
        reports: List[SolverReport],
        start: float,
        zetas: Tuple[float, ...],
        theta_hat: Optional[np.ndarray],
        tau_hat: Optional[np.ndarray],
    ) -> EstimateResult:
        result = EstimateResult(
            method=method,
            h_hat=h_hat,
            reports=tuple(reports),
            wall_time_s=time.perf_counter() - start,
            zetas=zetas,
            theta_hat=theta_hat,
            tau_hat=tau_hat,
        )
        if not result.converged:
            logger.warning("%s returned with solver status %s", method.value, result.status.value)
        return result


def _retrieve(u: OneLevelLagVector, L: int) -> np.ndarray:
    rank = min(L, u.K - 1)
    if rank < 1:
        return np.empty(0)
    return vandermonde_retrieve(u, rank).frequencies


def _retrieve_coupled(solution: CoupledSolution, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """Angles from the k1 = 0 marginal, delays from the k2 = 0 marginal."""
    table: TwoLevelLagTable = solution.u
    M = table.M
    angle_lags = OneLevelLagVector(table.values[0, M - 1:])
    delay_lags = OneLevelLagVector(table.values[:, M - 1])
    thetas = _retrieve(angle_lags, L)
    # Delay marginal lags are sum p exp(+j 2 pi tau k1), i.e. frequency -tau.
    taus = np.sort(np.mod(-_retrieve(delay_lags, L), 1.0))
    return thetas, taus


def _retrieve_decoupled(solution: DecoupledSolution, L: int) -> Tuple[np.ndarray, np.ndarray]:
    return _retrieve(solution.u_theta, L), _retrieve(solution.u_tau, L)
