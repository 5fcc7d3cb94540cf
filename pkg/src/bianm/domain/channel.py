"""Multipath channel generation, 1-bit observation and separation checks."""
import logging
import math
from itertools import combinations
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .entities import (
    ChannelInstance,
    ObservationSet,
    SensingOperator,
    SeparationPolicy,
    SeparationReport,
)
from .errors import InvalidObservationError, SeparationInfeasibleError, ShapeMismatchError

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.Generator]

MAX_REDRAWS = 10_000
# Upper end of the delay range drawn by generate_channel.
DELAY_SPREAD = 0.25
# Constant of the decoupled separation bound d = 1.19 / floor((K-1)/4).
DECOUPLED_CONSTANT = 1.19


def steering_vector(K: int, beta: float) -> np.ndarray:
    """a_K(beta) = [exp(-j 2 pi beta k)], k = 0..K-1; beta is wrapped into [0, 1)."""
    if K < 1:
        raise ValueError(f"steering vector length must be positive, got {K}")
    beta = float(beta) % 1.0
    return np.exp(-2j * np.pi * beta * np.arange(K))


def steering_matrix(K: int, betas: Sequence[float]) -> np.ndarray:
    betas = np.mod(np.asarray(betas, dtype=float), 1.0)
    return np.exp(-2j * np.pi * np.outer(np.arange(K), betas))


def atom(M: int, N: int, theta: float, tau: float) -> np.ndarray:
    """Vectorised atom conj(a_N(tau)) kron a_M(theta), i.e. vec(a_M a_N^H)."""
    return np.kron(np.conj(steering_vector(N, tau)), steering_vector(M, theta))


def build_channel_matrix(
    alphas: np.ndarray, thetas: np.ndarray, taus: np.ndarray, M: int, N: int
) -> np.ndarray:
    A_theta = steering_matrix(M, thetas)
    A_tau = steering_matrix(N, taus)
    return (A_theta * np.asarray(alphas)) @ A_tau.conj().T


def _torus_gap(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def decoupled_bound(K: int) -> float:
    """1.19 / floor((K-1)/4); infinite when K < 5."""
    q = (K - 1) // 4
    return math.inf if q == 0 else DECOUPLED_CONSTANT / q


def check_separation(
    thetas: Sequence[float], taus: Sequence[float], M: int, N: int
) -> SeparationReport:
    """Joint (two-dimensional) and decoupled minimum-separation verdicts.

    Gaps are measured on the unit torus because steering vectors are
    1-periodic.
    """
    thetas = list(map(float, thetas))
    taus = list(map(float, taus))
    if len(thetas) != len(taus) or not thetas:
        raise ValueError("need at least one path with matching theta/tau lists")
    joint_bound = 1.0 / min(M, N)
    d1, d2 = decoupled_bound(M), decoupled_bound(N)

    delta_theta = delta_tau = joint_gap = math.inf
    for i, j in combinations(range(len(thetas)), 2):
        gt = _torus_gap(thetas[i], thetas[j])
        gd = _torus_gap(taus[i], taus[j])
        delta_theta = min(delta_theta, gt)
        delta_tau = min(delta_tau, gd)
        joint_gap = min(joint_gap, max(gt, gd))

    # A single path has no pairs and satisfies both conditions vacuously.
    single = len(thetas) == 1
    return SeparationReport(
        delta_theta=delta_theta,
        delta_tau=delta_tau,
        joint_ok=single or joint_gap > joint_bound,
        decoupled_ok=single or (delta_theta > d1 and delta_tau > d2),
        joint_bound=joint_bound,
        d1=d1,
        d2=d2,
        extrapolated=M != N,
    )


def separation_of(channel: ChannelInstance) -> SeparationReport:
    return check_separation(channel.thetas, channel.taus, channel.M, channel.N)


def paths_distinct(thetas: Sequence[float], taus: Sequence[float]) -> bool:
    """No two paths share both angle and delay."""
    pairs = list(zip(thetas, taus))
    return len(set(pairs)) == len(pairs)


def _policy_satisfied(report: SeparationReport, policy: SeparationPolicy) -> bool:
    if policy is SeparationPolicy.ENFORCE_JOINT:
        return report.joint_ok
    if policy is SeparationPolicy.ENFORCE_DECOUPLED:
        return report.decoupled_ok
    return True


def generate_channel(
    M: int,
    N: int,
    L: int,
    rng_seed: Optional[int] = None,
    separation_policy: SeparationPolicy = SeparationPolicy.NONE,
    max_redraws: int = MAX_REDRAWS,
) -> ChannelInstance:
    """Draw thetas ~ U[0,1), taus ~ U[0,1/4], alphas ~ CN(0, 1/L)."""
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if not 1 <= L <= min(M, N):
        raise ValueError(f"L must lie in 1..min(M, N)={min(M, N)}, got {L}")
    rng = np.random.default_rng(rng_seed)

    for _ in range(max_redraws):
        thetas = rng.uniform(0.0, 1.0, L)
        taus = rng.uniform(0.0, DELAY_SPREAD, L)
        alphas = math.sqrt(1.0 / (2 * L)) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
        if not paths_distinct(thetas, taus):
            continue
        report = check_separation(thetas, taus, M, N)
        if _policy_satisfied(report, separation_policy):
            H = build_channel_matrix(alphas, thetas, taus, M, N)
            return ChannelInstance(M, N, L, alphas, thetas, taus, H, rng_seed)

    gap = 1.0 / min(M, N)
    if separation_policy is SeparationPolicy.ENFORCE_DECOUPLED:
        gap = max(decoupled_bound(M), decoupled_bound(N))
    raise SeparationInfeasibleError(separation_policy.value, gap, max_redraws)


def channel_from_record(record: Dict[str, Any]) -> ChannelInstance:
    M, N, L = int(record["M"]), int(record["N"]), int(record["L"])
    alphas = np.array([complex(re, im) for re, im in record["alphas"]])
    thetas = np.asarray(record["thetas"], dtype=float)
    taus = np.asarray(record["taus"], dtype=float)
    if not (alphas.size == thetas.size == taus.size == L):
        raise ShapeMismatchError(f"record lists must all have length L={L}")
    if not 1 <= L <= min(M, N):
        raise ShapeMismatchError(f"L must lie in 1..min(M, N)={min(M, N)}, got {L}")
    if not paths_distinct(np.mod(thetas, 1.0), np.mod(taus, 1.0)):
        raise ShapeMismatchError("record lists two paths with the same (theta, tau)")
    H = build_channel_matrix(alphas, thetas, taus, M, N)
    return ChannelInstance(M, N, L, alphas, thetas, taus, H, record.get("seed"))


def _pilot_vector(X: Optional[np.ndarray], N: int) -> np.ndarray:
    if X is None:
        return np.ones(N, dtype=complex)
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        pilots = X
    elif X.ndim == 2 and X.shape[0] == X.shape[1]:
        if np.count_nonzero(X - np.diag(np.diagonal(X))):
            raise ShapeMismatchError("pilot matrix X must be diagonal")
        pilots = np.diagonal(X)
    else:
        raise ShapeMismatchError(f"pilot matrix must be N x N, got {X.shape}")
    if pilots.size != N:
        raise ShapeMismatchError(f"expected {N} pilots, got {pilots.size}")
    return pilots


def synthesize_rx(
    channel: ChannelInstance,
    sigma2: float,
    rng_seed: SeedLike = None,
    X: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Y = H X + noise with i.i.d. CN(0, sigma2) entries; pilots default to ones."""
    if sigma2 < 0:
        raise InvalidObservationError(f"noise variance must be non-negative, got {sigma2}")
    pilots = _pilot_vector(X, channel.N)
    Y = channel.H * pilots[None, :]
    if sigma2 > 0:
        rng = np.random.default_rng(rng_seed)
        shape = Y.shape
        noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        Y = Y + math.sqrt(sigma2 / 2.0) * noise
    return Y


def quantize_one_bit(Y: np.ndarray) -> np.ndarray:
    """Componentwise sign of real and imaginary parts; sign(0) = +1."""
    Y = np.asarray(Y)
    re = np.where(np.real(Y) >= 0, 1.0, -1.0)
    im = np.where(np.imag(Y) >= 0, 1.0, -1.0)
    return re + 1j * im


def majority_vote(samples: Sequence[np.ndarray]) -> np.ndarray:
    """Vote real and imaginary signs independently across an odd number of samples."""
    if len(samples) == 0 or len(samples) % 2 == 0:
        raise InvalidObservationError(
            f"majority vote needs an odd number of samples, got {len(samples)}"
        )
    stack = np.stack([np.asarray(s) for s in samples])
    if not (np.all(np.abs(stack.real) == 1) and np.all(np.abs(stack.imag) == 1)):
        raise InvalidObservationError("samples must contain only +-1 +-j entries")
    re = np.sign(stack.real.sum(axis=0))
    im = np.sign(stack.imag.sum(axis=0))
    return re + 1j * im


def vectorize_obs(R: np.ndarray, X: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SensingOperator]:
    """r = vec(R) and Phi = X^T kron I_M as a diagonal operator."""
    R = np.asarray(R)
    if R.ndim != 2:
        raise ShapeMismatchError(f"R must be an M x N matrix, got shape {R.shape}")
    M, N = R.shape
    pilots = _pilot_vector(X, N)
    return R.reshape(-1, order="F"), SensingOperator(pilots, M)


def observe(
    channel: ChannelInstance,
    sigma2: float,
    rng_seed: SeedLike = None,
    k_os: int = 1,
    X: Optional[np.ndarray] = None,
) -> ObservationSet:
    """Draw k_os noisy 1-bit samples of one channel and fuse them by vote."""
    if k_os < 1 or k_os % 2 == 0:
        raise InvalidObservationError(f"oversampling factor must be odd, got {k_os}")
    rng = np.random.default_rng(rng_seed)
    pilots = _pilot_vector(X, channel.N)
    samples = tuple(
        quantize_one_bit(synthesize_rx(channel, sigma2, rng, pilots)) for _ in range(k_os)
    )
    R_voted = majority_vote(samples)
    r, phi = vectorize_obs(R_voted, pilots)
    logger.debug("observed channel: sigma2=%.3g k_os=%d", sigma2, k_os)
    return ObservationSet(pilots, float(sigma2), samples, R_voted, r, phi)
