"""ADMM backend for the coupled and decoupled atomic-norm SDPs.

Both programs share one splitting:

    minimise   f(x)
    subject to S(x) = Z,  Z PSD
               g(x) = s,  s in p * simplex   (or s = rotated target)

x gathers the structured variables (Toeplitz lags, h or H, delta), S(x)
assembles the PSD block and g(x) is Phi h rotated by the observed signs,
so sign consistency plus l1 normalisation is exactly the scaled simplex.
The x-update is a closed-form least-squares step (lag averaging), the Z
step is one eigendecomposition and the s step a simplex projection.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from ..domain.channel import quantize_one_bit
from ..domain.entities import (
    CertificateReport,
    CoupledSolution,
    DecoupledSolution,
    IterationTrace,
    LagLevel,
    MeasurementConstraint,
    OneLevelLagVector,
    SdpVariant,
    SensingOperator,
    SolverReport,
    SolverSettings,
    SolverStatus,
    StructuredSdp,
    TwoLevelLagTable,
)
from ..domain.errors import SolverError
from ..domain.toeplitz import (
    expand_one_level,
    expand_two_level,
    lag_project,
    min_eigenvalue,
    psd_project,
)

logger = logging.getLogger(__name__)

# Residual-balancing constants for the adaptive penalty.
BALANCE_RATIO = 10.0
BALANCE_FACTOR = 2.0
BALANCE_EVERY = 10
LOG_EVERY = 100


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {s : s >= 0, sum(s) = 1} by sort and threshold."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise SolverError("cannot project an empty vector onto the simplex")
    if not np.all(np.isfinite(v)):
        raise SolverError("simplex projection needs finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - (css - 1.0) / ks > 0)[0][-1]
    threshold = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - threshold, 0.0)


def rotate(y: np.ndarray, r: np.ndarray) -> np.ndarray:
    """[Re r * Re y ; Im r * Im y]; nonnegative iff y is sign consistent with r."""
    return np.concatenate([r.real * y.real, r.imag * y.imag])


def unrotate(t: np.ndarray, r: np.ndarray) -> np.ndarray:
    n = r.size
    return r.real * t[:n] + 1j * r.imag * t[n:]


@dataclass
class _Iterate:
    """Structured variables of either program."""
    lags: Tuple[np.ndarray, ...]
    h: np.ndarray
    delta: float = 0.0


class _CoupledStructure:
    """[[T_2D(u), h], [h^H, delta]] with objective tr(Theta T)/(2MN) + delta/2."""

    def __init__(self, problem: StructuredSdp) -> None:
        self.M, self.N = problem.M, problem.N
        self.n = self.M * self.N
        self.side = self.n + 1
        self.weight = problem.coupled_weight()
        self.identity_weight = problem.weight is None
        self.cost = self.weight / (2.0 * self.n)

    def table(self, it: _Iterate) -> TwoLevelLagTable:
        return TwoLevelLagTable(it.lags[0], self.M, self.N)

    def assemble(self, it: _Iterate) -> np.ndarray:
        S = np.empty((self.side, self.side), dtype=complex)
        S[: self.n, : self.n] = expand_two_level(self.table(it))
        S[: self.n, self.n] = it.h
        S[self.n, : self.n] = np.conj(it.h)
        S[self.n, self.n] = it.delta
        return S

    def update(self, W: np.ndarray, t: np.ndarray, phi: np.ndarray, rho: float) -> _Iterate:
        n = self.n
        u = lag_project(W[:n, :n] - self.cost / rho, LagLevel.TWO, (self.M, self.N))
        w_h = 0.5 * (W[:n, n] + np.conj(W[n, :n]))
        h = (2.0 * w_h + np.conj(phi) * t) / (2.0 + np.abs(phi) ** 2)
        delta = float(W[n, n].real) - 1.0 / (2.0 * rho)
        return _Iterate((u.values,), h, delta)

    def objective(self, it: _Iterate) -> float:
        T = expand_two_level(self.table(it))
        if self.identity_weight:
            trace = float(np.trace(T).real)
        else:
            trace = float(np.real(np.sum(self.weight * T.T)))
        return trace / (2.0 * self.n) + 0.5 * it.delta

    def shift(self, it: _Iterate, amount: float) -> _Iterate:
        values = it.lags[0].copy()
        values[0, self.M - 1] += amount
        return _Iterate((values,), it.h, it.delta + amount)

    def solution(self, it: _Iterate, report: SolverReport) -> CoupledSolution:
        return CoupledSolution(it.h, self.table(it), it.delta, report)


class _DecoupledStructure:
    """[[T(u_theta), H], [H^H, T(u_tau)]] with weighted traces over 2M and 2N."""

    def __init__(self, problem: StructuredSdp) -> None:
        self.M, self.N = problem.M, problem.N
        self.n = self.M * self.N
        self.side = self.M + self.N
        self.weight_angle, self.weight_delay = problem.decoupled_weights()
        self.identity_weight = problem.weight_angle is None and problem.weight_delay is None
        self.cost_angle = self.weight_angle / (2.0 * self.M)
        self.cost_delay = self.weight_delay / (2.0 * self.N)

    def matrix(self, h: np.ndarray) -> np.ndarray:
        return h.reshape(self.M, self.N, order="F")

    def assemble(self, it: _Iterate) -> np.ndarray:
        M = self.M
        S = np.empty((self.side, self.side), dtype=complex)
        H = self.matrix(it.h)
        S[:M, :M] = expand_one_level(OneLevelLagVector(it.lags[0]))
        S[M:, M:] = expand_one_level(OneLevelLagVector(it.lags[1]))
        S[:M, M:] = H
        S[M:, :M] = H.conj().T
        return S

    def update(self, W: np.ndarray, t: np.ndarray, phi: np.ndarray, rho: float) -> _Iterate:
        M = self.M
        u_theta = lag_project(W[:M, :M] - self.cost_angle / rho, LagLevel.ONE, M)
        u_tau = lag_project(W[M:, M:] - self.cost_delay / rho, LagLevel.ONE, self.N)
        w_H = 0.5 * (W[:M, M:] + W[M:, :M].conj().T)
        w_h = w_H.reshape(-1, order="F")
        h = (2.0 * w_h + np.conj(phi) * t) / (2.0 + np.abs(phi) ** 2)
        return _Iterate((u_theta.u, u_tau.u), h)

    def objective(self, it: _Iterate) -> float:
        T_theta = expand_one_level(OneLevelLagVector(it.lags[0]))
        T_tau = expand_one_level(OneLevelLagVector(it.lags[1]))
        if self.identity_weight:
            a = float(np.trace(T_theta).real)
            b = float(np.trace(T_tau).real)
        else:
            a = float(np.real(np.sum(self.weight_angle * T_theta.T)))
            b = float(np.real(np.sum(self.weight_delay * T_tau.T)))
        return a / (2.0 * self.M) + b / (2.0 * self.N)

    def shift(self, it: _Iterate, amount: float) -> _Iterate:
        u_theta, u_tau = it.lags[0].copy(), it.lags[1].copy()
        u_theta[0] += amount
        u_tau[0] += amount
        return _Iterate((u_theta, u_tau), it.h)

    def solution(self, it: _Iterate, report: SolverReport) -> DecoupledSolution:
        return DecoupledSolution(
            self.matrix(it.h),
            OneLevelLagVector(it.lags[0]),
            OneLevelLagVector(it.lags[1]),
            report,
        )


_Structure = Union[_CoupledStructure, _DecoupledStructure]


class AdmmConicSolver:
    """First-order solver for the structured SDPs (implements ConicSolver)."""

    def solve_coupled(
        self, problem: StructuredSdp, settings: Optional[SolverSettings] = None
    ) -> CoupledSolution:
        if problem.variant is not SdpVariant.COUPLED:
            raise SolverError("solve_coupled needs a coupled problem")
        structure = _CoupledStructure(problem)
        it, report = self._run(problem, structure, settings or SolverSettings())
        return structure.solution(it, report)

    def solve_decoupled(
        self, problem: StructuredSdp, settings: Optional[SolverSettings] = None
    ) -> DecoupledSolution:
        if problem.variant is not SdpVariant.DECOUPLED:
            raise SolverError("solve_decoupled needs a decoupled problem")
        structure = _DecoupledStructure(problem)
        it, report = self._run(problem, structure, settings or SolverSettings())
        return structure.solution(it, report)

    def solve(
        self, problem: StructuredSdp, settings: Optional[SolverSettings] = None
    ) -> Union[CoupledSolution, DecoupledSolution]:
        if problem.variant is SdpVariant.COUPLED:
            return self.solve_coupled(problem, settings)
        return self.solve_decoupled(problem, settings)

    def _project_measurements(self, problem: StructuredSdp, v: np.ndarray) -> np.ndarray:
        if problem.constraint is MeasurementConstraint.EQUALITY:
            return rotate(problem.target, problem.r)
        return problem.p * simplex_project(v / problem.p)

    def _run(
        self, problem: StructuredSdp, structure: _Structure, settings: SolverSettings
    ) -> Tuple[_Iterate, SolverReport]:
        phi = problem.phi.diagonal
        r = problem.r
        n = structure.n
        side = structure.side
        gamma = settings.over_relaxation
        rho = settings.rho
        scale = np.sqrt(side * side + 2 * n)

        Z = np.zeros((side, side), dtype=complex)
        Lam = np.zeros_like(Z)
        s = self._project_measurements(problem, np.full(2 * n, problem.p / (2 * n)))
        mu = np.zeros(2 * n)

        trace: List[IterationTrace] = []
        primal_history: List[float] = []
        status = SolverStatus.MAX_ITER
        primal = dual = float("inf")
        eps_pri = float("inf")
        iteration = 0

        for iteration in range(1, settings.max_iterations + 1):
            it = structure.update(Z - Lam, unrotate(s - mu, r), phi, rho)
            S = structure.assemble(it)
            g = rotate(phi * it.h, r)

            S_hat = gamma * S + (1.0 - gamma) * Z
            g_hat = gamma * g + (1.0 - gamma) * s

            Z_old, s_old = Z, s
            Z = psd_project(S_hat + Lam)
            s = self._project_measurements(problem, g_hat + mu)
            Lam = Lam + S_hat - Z
            mu = mu + g_hat - s

            primal = float(np.sqrt(np.linalg.norm(S - Z) ** 2 + np.linalg.norm(g - s) ** 2))
            dual = rho * float(np.sqrt(np.linalg.norm(Z - Z_old) ** 2 + np.linalg.norm(s - s_old) ** 2))
            eps_pri = scale * settings.eps_abs + settings.eps_rel * max(
                float(np.sqrt(np.linalg.norm(S) ** 2 + np.linalg.norm(g) ** 2)),
                float(np.sqrt(np.linalg.norm(Z) ** 2 + np.linalg.norm(s) ** 2)),
            )
            eps_dual = scale * settings.eps_abs + settings.eps_rel * rho * float(
                np.sqrt(np.linalg.norm(Lam) ** 2 + np.linalg.norm(mu) ** 2)
            )
            primal_history.append(primal)
            if settings.record_trace:
                trace.append(IterationTrace(iteration, primal, dual, rho))
            if iteration % LOG_EVERY == 0:
                logger.debug(
                    "iter %d: primal=%.3e (tol %.1e) dual=%.3e (tol %.1e) rho=%.3g",
                    iteration, primal, eps_pri, dual, eps_dual, rho,
                )
            if primal <= eps_pri and dual <= eps_dual:
                status = SolverStatus.CONVERGED
                break

            if settings.adaptive_penalty and iteration % BALANCE_EVERY == 0:
                if primal > BALANCE_RATIO * dual:
                    rho *= BALANCE_FACTOR
                    Lam, mu = Lam / BALANCE_FACTOR, mu / BALANCE_FACTOR
                elif dual > BALANCE_RATIO * primal:
                    rho /= BALANCE_FACTOR
                    Lam, mu = Lam * BALANCE_FACTOR, mu * BALANCE_FACTOR

        if status is not SolverStatus.CONVERGED:
            status = self._diagnose(primal_history, eps_pri)
            logger.warning(
                "ADMM stopped after %d iterations with status %s (primal=%.3e dual=%.3e)",
                iteration, status.value, primal, dual,
            )

        it, shift, lam_min = self._restore(problem, structure, it, s)
        report = self._report(
            problem, structure, it, settings, status, iteration, primal, dual, rho, shift, lam_min,
            tuple(trace),
        )
        return it, report

    @staticmethod
    def _diagnose(history: List[float], eps_pri: float) -> SolverStatus:
        """Flag a primal residual that stalls far above tolerance."""
        if len(history) >= 100:
            half = history[len(history) // 2]
            last = history[-1]
            if last > 100.0 * eps_pri and last > 0.5 * half:
                return SolverStatus.INFEASIBLE_SUSPECTED
        return SolverStatus.MAX_ITER

    def _restore(
        self, problem: StructuredSdp, structure: _Structure, it: _Iterate, s: np.ndarray
    ) -> Tuple[_Iterate, float, float]:
        """Move the final iterate onto the feasible set.

        h is rebuilt from the projected measurement vector, which makes it
        exactly sign consistent and normalised; any negative eigenvalue of
        the assembled block is then lifted by shifting the Toeplitz
        diagonals.
        """
        if problem.constraint is MeasurementConstraint.EQUALITY:
            h = problem.phi.solve(problem.target)
        else:
            h = problem.phi.solve(unrotate(s, problem.r))
        it = _Iterate(it.lags, h, it.delta)
        lam = min_eigenvalue(structure.assemble(it))
        shift = 0.0
        if lam < 0:
            shift = -lam
            it = structure.shift(it, shift)
            logger.debug("feasibility restoration shifted diagonals by %.3e", shift)
            lam = min_eigenvalue(structure.assemble(it))
        return it, shift, lam

    def _report(
        self,
        problem: StructuredSdp,
        structure: _Structure,
        it: _Iterate,
        settings: SolverSettings,
        status: SolverStatus,
        iterations: int,
        primal: float,
        dual: float,
        rho: float,
        shift: float,
        lam_min: float,
        trace: Tuple[IterationTrace, ...],
    ) -> SolverReport:
        g = rotate(problem.phi.apply(it.h), problem.r)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(g))))
        return SolverReport(
            status=status,
            iterations=iterations,
            primal_residual=primal,
            dual_residual=dual,
            objective=structure.objective(it),
            min_eigenvalue=lam_min,
            sign_violations=int(np.count_nonzero(g < -tol)),
            normalization_residual=_normalization_residual(problem, problem.phi.apply(it.h)),
            psd_side=structure.side,
            rho=rho,
            restoration_shift=shift,
            settings=settings,
            trace=trace,
        )


def _normalization_residual(problem: StructuredSdp, y: np.ndarray) -> float:
    if problem.constraint is MeasurementConstraint.EQUALITY:
        return float(np.max(np.abs(y - problem.target)))
    return abs(float(np.sum(np.abs(y.real)) + np.sum(np.abs(y.imag))) - problem.p)


def certify(
    problem: StructuredSdp, solution: Union[CoupledSolution, DecoupledSolution]
) -> CertificateReport:
    """Re-verify PSD, sign and normalisation constraints from scratch."""
    if isinstance(solution, CoupledSolution):
        h = np.asarray(solution.h)
        n = h.size
        block = np.empty((n + 1, n + 1), dtype=complex)
        block[:n, :n] = expand_two_level(solution.u)
        block[:n, n] = h
        block[n, :n] = np.conj(h)
        block[n, n] = solution.delta
    else:
        H = np.asarray(solution.H)
        h = H.reshape(-1, order="F")
        block = np.block(
            [
                [expand_one_level(solution.u_theta), H],
                [H.conj().T, expand_one_level(solution.u_tau)],
            ]
        )
    y = problem.phi.apply(h)
    g = rotate(y, problem.r)
    return CertificateReport(
        min_eigenvalue=min_eigenvalue(block),
        trace=float(np.trace(block).real),
        min_sign_component=float(g.min()),
        normalization_residual=_normalization_residual(problem, y),
    )


def _equality_problem(variant: SdpVariant, h: np.ndarray, M: int, N: int) -> StructuredSdp:
    phi = SensingOperator(np.ones(N, dtype=complex), M)
    r = quantize_one_bit(h)
    return StructuredSdp(
        variant, M, N, r, phi, constraint=MeasurementConstraint.EQUALITY, target=h
    )


def atomic_norm_coupled(
    h: np.ndarray, M: int, N: int, settings: Optional[SolverSettings] = None,
    solver: Optional[AdmmConicSolver] = None,
) -> Tuple[float, SolverReport]:
    """Atomic norm of vec(H) over the vectorised atoms (two-level Toeplitz SDP)."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    problem = _equality_problem(SdpVariant.COUPLED, h, M, N)
    report = (solver or AdmmConicSolver()).solve_coupled(problem, settings).report
    return report.objective, report


def atomic_norm_decoupled(
    H: np.ndarray, settings: Optional[SolverSettings] = None,
    solver: Optional[AdmmConicSolver] = None,
) -> Tuple[float, SolverReport]:
    """Atomic norm of H over the matrix atoms (decoupled one-level SDP)."""
    H = np.asarray(H, dtype=complex)
    M, N = H.shape
    problem = _equality_problem(SdpVariant.DECOUPLED, H.reshape(-1, order="F"), M, N)
    report = (solver or AdmmConicSolver()).solve_decoupled(problem, settings).report
    return report.objective, report
