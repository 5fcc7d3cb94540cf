"""One-level and two-level Hermitian Toeplitz structures.

Lag convention used throughout: entry (i, j) of an expanded matrix holds the
lag i - j (row minus column). Two-level matrices are indexed so that the
pair (n, m) maps to row n*M + m, which is the column-major vec() of an
M x N matrix.
"""
import logging
import warnings
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .entities import LagLevel, OneLevelLagVector, SpectralComponents, TwoLevelLagTable
from .errors import InvalidLagError, NumericalError, ShapeMismatchError

logger = logging.getLogger(__name__)

LagTable = Union[OneLevelLagVector, TwoLevelLagTable]
# evr, scipy's default, can fail on finite Hermitian input.
EIGH_DRIVERS = ("evd", "ev")


def hermitian_part(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + G.conj().T)


def is_hermitian(G: np.ndarray, rtol: float = 1e-12) -> bool:
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(G)))) if G.size else 1.0
    return bool(np.max(np.abs(G - G.conj().T), initial=0.0) <= rtol * scale)


def expand_one_level(u: OneLevelLagVector) -> np.ndarray:
    """K x K Hermitian Toeplitz matrix with first column u."""
    return scipy.linalg.toeplitz(u.u, np.conj(u.u))


@lru_cache(maxsize=32)
def _two_level_index(M: int, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Flat lag ids and conjugation mask for every entry of an MN x MN matrix.

    The lag id of (k1, k2) with k1 >= 0 is k1*(2M-1) + k2 + M - 1; entries
    with a negative block lag point at the id of (-k1, -k2) and are marked
    for conjugation.
    """
    n = np.repeat(np.arange(N), M)
    m = np.tile(np.arange(M), N)
    k1 = n[:, None] - n[None, :]
    k2 = m[:, None] - m[None, :]
    conj = k1 < 0
    k1 = np.where(conj, -k1, k1)
    k2 = np.where(conj, -k2, k2)
    ids = k1 * (2 * M - 1) + k2 + (M - 1)
    ids.setflags(write=False)
    conj.setflags(write=False)
    return ids, conj


def expand_two_level(u: TwoLevelLagTable) -> np.ndarray:
    """MN x MN block-Toeplitz matrix with Toeplitz blocks built from u."""
    ids, conj = _two_level_index(u.M, u.N)
    flat = u.values.reshape(-1)
    T = flat[ids]
    return np.where(conj, np.conj(T), T)


def _lag_project_one(G: np.ndarray) -> OneLevelLagVector:
    K = G.shape[0]
    u = np.array([np.mean(np.diagonal(G, offset=-k)) for k in range(K)], dtype=complex)
    u[0] = u[0].real
    return OneLevelLagVector(u)


def _lag_project_two(G: np.ndarray, M: int, N: int) -> TwoLevelLagTable:
    ids, conj = _two_level_index(M, N)
    keep = ~conj
    size = N * (2 * M - 1)
    lag_ids = ids[keep]
    entries = G[keep]
    counts = np.bincount(lag_ids, minlength=size)
    sums = np.bincount(lag_ids, weights=entries.real, minlength=size) + 1j * np.bincount(
        lag_ids, weights=entries.imag, minlength=size
    )
    values = (sums / np.maximum(counts, 1)).reshape(N, 2 * M - 1)
    # (0, -k2) classes: both halves were averaged over the symmetrised input.
    values[0] = 0.5 * (values[0] + np.conj(values[0, ::-1]))
    values[0, M - 1] = values[0, M - 1].real
    return TwoLevelLagTable(values, M, N)


def lag_project(
    G: np.ndarray, level: LagLevel, dims: Union[int, Tuple[int, int]]
) -> LagTable:
    """Orthogonal projection of a Hermitian matrix onto the Toeplitz subspace.

    Every lag value is the mean of the entries of G sharing that lag. ``dims``
    is K for one level and (M, N) for two levels.
    """
    G = np.asarray(G, dtype=complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {G.shape}")
    G = hermitian_part(G)
    if level is LagLevel.ONE:
        K = dims if isinstance(dims, int) else dims[0]
        if G.shape[0] != K:
            raise ShapeMismatchError(f"matrix side {G.shape[0]} != K={K}")
        return _lag_project_one(G)
    if isinstance(dims, int):
        raise ShapeMismatchError("two-level projection needs dims (M, N)")
    M, N = dims
    if G.shape[0] != M * N:
        raise ShapeMismatchError(f"matrix side {G.shape[0]} != MN={M * N}")
    return _lag_project_two(G, M, N)


def _numerical_error(message: str, G: np.ndarray, exc: Optional[Exception] = None) -> NumericalError:
    return NumericalError(
        message if exc is None else f"{message}: {exc}",
        side=G.shape[0],
        norm=float(np.linalg.norm(np.nan_to_num(G))),
        non_finite=int(np.count_nonzero(~np.isfinite(G))),
    )


def _eigh(G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(G)):
        raise _numerical_error("eigendecomposition of a non-finite matrix", G)
    error: Optional[Exception] = None
    for driver in EIGH_DRIVERS:
        try:
            return scipy.linalg.eigh(G, driver=driver)
        except (np.linalg.LinAlgError, ValueError) as exc:
            error = exc
            logger.debug("eigh driver %s failed on side %d: %s", driver, G.shape[0], exc)
    raise _numerical_error("eigendecomposition failed", G, error)


def psd_project_eig(G: np.ndarray) -> Tuple[np.ndarray, float]:
    """PSD projection plus the smallest eigenvalue of the input."""
    G = hermitian_part(np.asarray(G, dtype=complex))
    w, V = _eigh(G)
    clipped = np.maximum(w, 0.0)
    P = (V * clipped) @ V.conj().T
    return hermitian_part(P), float(w[0])


def psd_project(G: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    return psd_project_eig(G)[0]


def min_eigenvalue(G: np.ndarray) -> float:
    G = hermitian_part(np.asarray(G, dtype=complex))
    if not np.all(np.isfinite(G)):
        raise _numerical_error("eigenvalue of a non-finite matrix", G)
    try:
        return float(
            scipy.linalg.eigh(G, eigvals_only=True, subset_by_index=[0, 0], driver="evx")[0]
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.debug("eigh driver evx failed on side %d: %s", G.shape[0], exc)
    return float(_eigh(G)[0][0])


def vandermonde_retrieve(u: OneLevelLagVector, rank: int) -> SpectralComponents:
    """Frequencies and powers of a PSD Toeplitz matrix by shift invariance.

    The dominant ``rank``-dimensional eigenspace of T(u) is spanned by
    a_K(f_i); its shift invariance U[1:] = U[:-1] Psi gives
    eig(Psi) = exp(-j 2 pi f_i). Powers come from a least-squares fit of the
    first column u = sum_i p_i a_K(f_i).
    """
    K = u.K
    if rank < 1 or rank > K - 1:
        raise ValueError(f"rank must lie in 1..{K - 1}, got {rank}")
    T = expand_one_level(u)
    w, V = _eigh(T)
    w, V = w[::-1], V[:, ::-1]
    top = max(float(w[0]), 0.0)
    if top == 0.0:
        warnings.warn("zero Toeplitz matrix; no components retrieved", RuntimeWarning)
        return SpectralComponents(np.empty(0), np.empty(0), 0.0, True, True)
    tol = 1e-8 * top * K
    effective = int(np.count_nonzero(w[:rank] > tol))
    rank_deficient = effective < rank
    if rank_deficient:
        logger.warning("Toeplitz rank %d below requested %d", effective, rank)
    # Flat or nearly flat spectrum: the noise floor is as large as the signal.
    ambiguous = bool(effective > 0 and w[effective] >= 0.5 * w[effective - 1]) if effective < K else True
    if effective == 0:
        return SpectralComponents(np.empty(0), np.empty(0), 1.0, True, ambiguous)

    Us = V[:, :effective]
    psi = scipy.linalg.pinv(Us[:-1]) @ Us[1:]
    z = np.linalg.eigvals(psi)
    freqs = np.mod(-np.angle(z) / (2.0 * np.pi), 1.0)
    order = np.argsort(freqs)
    freqs = freqs[order]

    A = np.exp(-2j * np.pi * np.outer(np.arange(K), freqs))
    coef, *_ = np.linalg.lstsq(A, u.u, rcond=None)
    powers = np.maximum(coef.real, 0.0)
    fitted = (A * powers) @ A.conj().T
    rel_err = float(np.linalg.norm(fitted - T) / max(np.linalg.norm(T), np.finfo(float).tiny))
    return SpectralComponents(freqs, powers, rel_err, rank_deficient, ambiguous)
