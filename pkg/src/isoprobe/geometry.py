"""Spectral geometry of embedding matrices and the partition-function isotropy score.

For a unit direction u the partition function is ``F(u) = sum_i exp(u . w_i)``.
Isotropy is ``min F(u) / max F(u)`` with u ranging over the principal axes of the
(centered) embedding cloud, taken with both signs. Everything is computed in log
space so large-norm embeddings never overflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import ThreadpoolController

from isoprobe.errors import ContractError, IsoprobeWarning
from isoprobe.store import as_matrix

UNIT_TOL = 1e-8
RANK_TOL = 1e-10
# eigenvalues closer than this (relative to the largest) are treated as tied
TIE_TOL = 1e-8
# eigenvalues below this fraction of the mean squared row norm are centering round-off
NOISE_FLOOR = 1e-26

_threadpools = ThreadpoolController()


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    mean: np.ndarray
    eigenvalues: np.ndarray  # descending, clamped at 0
    eigenvectors: np.ndarray  # eigenvectors[k] pairs with eigenvalues[k]
    rank: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.dim

    def covariance(self) -> np.ndarray:
        u = self.eigenvectors
        return (u.T * self.eigenvalues) @ u


@dataclass(frozen=True)
class IsotropyReport:
    isotropy: float
    log_f_min: float
    log_f_max: float
    argmin_index: int
    argmax_index: int
    n_vectors: int
    dim: int
    rank_deficient: bool

    @property
    def neg_ln_isotropy(self) -> float:
        # from the logs directly, so it stays finite when the ratio underflows
        return self.log_f_max - self.log_f_min

    @property
    def neg_log10_isotropy(self) -> float:
        return self.neg_ln_isotropy / math.log(10.0)

    def to_dict(self) -> dict:
        return asdict(self)


def center(m) -> tuple[np.ndarray, np.ndarray]:
    m = as_matrix(m)
    mean = m.mean(axis=0)
    return m - mean, mean


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude component is positive (first index on ties)."""
    lead = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), lead])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _tie_blocks(values, tol):
    start = 0
    for j in range(1, len(values) + 1):
        if j == len(values) or values[j - 1] - values[j] > tol:
            yield start, j
            start = j


def _canonical_block(basis, mean, centered):
    """Rotation-covariant orthonormal basis for a tied eigenspace spanned by ``basis``.

    The solver's basis inside a degenerate eigenspace is arbitrary, but the partition
    function of uncentered rows is not constant over it. Lead with the mean's
    component in the subspace, then order the rest by the fourth-moment matrix
    ``sum_i |z_i|^2 z_i z_i^T`` of the projected centered rows.
    """
    head = []
    coords = basis @ mean
    norm = float(np.linalg.norm(coords))
    if norm > 1e-12 * max(float(np.linalg.norm(mean)), 1e-300):
        a = coords / norm
        head.append(a @ basis)
        q, _ = np.linalg.qr(np.column_stack([a, np.eye(len(a))]))
        basis = q[:, 1 : len(a)].T @ basis
    if basis.shape[0] >= 2:
        z = centered @ basis.T
        k4 = (z * np.einsum("ij,ij->i", z, z)[:, None]).T @ z / z.shape[0]
        w, v = np.linalg.eigh((k4 + k4.T) / 2)
        basis = v[:, np.argsort(-w, kind="stable")].T @ basis
    return np.vstack(head + [basis]) if head else basis


def spectral_decomposition(m) -> SpectralDecomposition:
    """Eigen-decomposition of the divisor-N covariance of the centered rows.

    Within a block of tied eigenvalues the basis is fixed by :func:`_canonical_block`
    so that downstream scores do not depend on the solver's arbitrary choice.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if n < 2:
        raise ContractError(f"spectral decomposition needs N >= 2 rows, got {n}")
    centered, mean = center(m)
    cov = (centered.T @ centered) / n
    cov = (cov + cov.T) / 2
    # threaded LAPACK eigensolvers are not bit-reproducible across thread counts
    with _threadpools.limit(limits=1, user_api="blas"):
        return _decompose(m, n, centered, mean, cov)


def _decompose(m, n, centered, mean, cov):
    values, vectors = np.linalg.eigh(cov)
    floor = NOISE_FLOOR * float(np.einsum("ij,ij->", m, m)) / n
    values = np.where(values > floor, values, 0.0)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order].T
    top = values[0]
    for lo, hi in _tie_blocks(values, TIE_TOL * top):
        if hi - lo > 1:
            vectors[lo:hi] = _canonical_block(vectors[lo:hi], mean, centered)
    vectors = _orient(vectors)
    rank = int(np.count_nonzero(values > RANK_TOL * top)) if top > 0 else 0
    values.setflags(write=False)
    vectors.setflags(write=False)
    mean.setflags(write=False)
    return SpectralDecomposition(mean, values, vectors, rank)


def _logsumexp_columns(scores: np.ndarray) -> np.ndarray:
    shift = scores.max(axis=0)
    return shift + np.log(np.exp(scores - shift).sum(axis=0))


def log_partition(u, m) -> float:
    """``log sum_i exp(u . w_i)`` via max-shift; ``u`` must be a unit vector."""
    m = as_matrix(m)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (m.shape[1],):
        raise ContractError(f"direction has shape {u.shape}, expected ({m.shape[1]},)")
    norm = float(np.linalg.norm(u))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ContractError(f"direction must be unit length, |u| = {norm!r}")
    return float(_logsumexp_columns((m @ u)[:, None])[0])


def candidate_log_partitions(m, decomposition: SpectralDecomposition, chunk_rows=8192):
    """Log-partition for +u_k (first d entries) and -u_k (last d entries).

    Rows are streamed in fixed-size chunks and each candidate keeps its own running
    max-shifted sum, so memory stays O(chunk x d) and the result does not depend on
    how many threads evaluate a chunk.
    """
    u = decomposition.eigenvectors
    d = u.shape[0]
    n = m.shape[0]
    shift = np.full(2 * d, -np.inf)
    total = np.zeros(2 * d)
    for start in range(0, n, chunk_rows):
        proj = m[start : start + chunk_rows] @ u.T
        scores = np.concatenate([proj, -proj], axis=1)
        new_shift = np.maximum(shift, scores.max(axis=0))
        total = total * np.exp(shift - new_shift) + np.exp(scores - new_shift).sum(axis=0)
        shift = new_shift
    return shift + np.log(total)


def isotropy_score(m, decomposition: SpectralDecomposition | None = None) -> IsotropyReport:
    """Partition-function isotropy of ``m``.

    Principal axes come from the centered covariance; the partition function itself
    is evaluated on the rows as given, so a common offset counts as anisotropy.
    """
    m = as_matrix(m)
    if decomposition is None:
        decomposition = spectral_decomposition(m)
    logs = candidate_log_partitions(m, decomposition)
    d = decomposition.dim
    imin = int(np.argmin(logs))
    imax = int(np.argmax(logs))
    lo, hi = float(logs[imin]), float(logs[imax])
    return IsotropyReport(
        isotropy=math.exp(lo - hi),
        log_f_min=lo,
        log_f_max=hi,
        argmin_index=imin % d,
        argmax_index=imax % d,
        n_vectors=m.shape[0],
        dim=d,
        rank_deficient=decomposition.rank_deficient,
    )


def average_random_cosine(m, n_pairs: int, seed: int) -> float:
    """Mean cosine similarity over ``n_pairs`` random pairs of distinct rows.

    Pairs touching a zero-norm row are skipped with a warning.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if n < 2:
        raise ContractError(f"need at least 2 rows, got {n}")
    if n_pairs < 1:
        raise ContractError(f"n_pairs must be >= 1, got {n_pairs}")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=n_pairs)
    # offset in [1, n) guarantees j != i
    j = (i + rng.integers(1, n, size=n_pairs)) % n
    norms = np.linalg.norm(m, axis=1)
    ok = (norms[i] > 0) & (norms[j] > 0)
    skipped = int(n_pairs - ok.sum())
    if skipped == n_pairs:
        raise ContractError("every sampled pair involves a zero-norm row")
    if skipped:
        warnings.warn(
            f"skipped {skipped} of {n_pairs} pairs with a zero-norm row",
            IsoprobeWarning,
            stacklevel=2,
        )
    i, j = i[ok], j[ok]
    cos = np.einsum("ij,ij->i", m[i], m[j]) / (norms[i] * norms[j])
    return float(np.clip(cos, -1.0, 1.0).mean())


def project_2d(m) -> np.ndarray:
    """Coordinates of the centered rows on the two leading principal axes."""
    m = as_matrix(m)
    if m.shape[1] < 2:
        raise ContractError(f"2-D projection needs d >= 2, got {m.shape[1]}")
    dec = spectral_decomposition(m)
    return (m - dec.mean) @ dec.eigenvectors[:2].T
