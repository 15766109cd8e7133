"""Small dense Gaussian numerics.

Covariance matrices are plain ``numpy`` arrays. Every function here works by
Cholesky factorizations and triangular solves; nothing forms an explicit
inverse except :func:`pd_inverse`, which does so through a solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

# Pivots at or below max(REL_PIVOT_TOL * trace / d, ABS_PIVOT_FLOOR) are rejected.
REL_PIVOT_TOL = 1e-12
ABS_PIVOT_FLOOR = 1e-15
SYMMETRY_TOL = 1e-8


class NotPositiveDefinite(ValueError):
    """Raised when a matrix fails the positive-definiteness check."""


class AsymmetryTooLarge(ValueError):
    """Raised by :func:`symmetrize` for matrices that are not nearly symmetric."""


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return ``(M + M.T) / 2``, refusing matrices that are visibly asymmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return M.copy()
    scale = np.abs(M).max()
    if not np.isfinite(scale):
        raise ValueError("matrix has non-finite entries")
    asym = np.abs(M - M.T).max()
    if asym > SYMMETRY_TOL * scale:
        raise AsymmetryTooLarge(f"relative asymmetry {asym / scale:.3g} exceeds {SYMMETRY_TOL:g}")
    return 0.5 * (M + M.T)


def cholesky_factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == M``.

    Raises:
        NotPositiveDefinite: if the factorization breaks down or the smallest
            pivot ``L[i, i]**2`` falls under the scale-aware floor.
    """
    M = symmetrize(M)
    d = M.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    floor = max(REL_PIVOT_TOL * M.trace() / d, ABS_PIVOT_FLOOR)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    smallest = L.diagonal().min() ** 2
    if not smallest > floor:
        raise NotPositiveDefinite(f"smallest pivot {smallest:.3g} below floor {floor:.3g}")
    return L


def solve_pd(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``M x = b`` for positive-definite ``M``; ``b`` may be a vector or a matrix."""
    L = cholesky_factor(M)
    return linalg.cho_solve((L, True), np.asarray(b, dtype=float), check_finite=False)


def pd_inverse(M: np.ndarray) -> np.ndarray:
    """Symmetrized ``M^{-1}`` computed by a Cholesky solve against the identity."""
    M = np.asarray(M, dtype=float)
    return symmetrize(solve_pd(M, np.eye(M.shape[0])))


def extreme_eigenvalues(M: np.ndarray) -> tuple[float, float]:
    """Largest and smallest eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(symmetrize(M))
    return float(w[-1]), float(w[0])


def sample_mvn(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the Cholesky factor of ``cov`` and ``z ~ N(0, I)``."""
    mean = np.asarray(mean, dtype=float)
    L = cholesky_factor(cov)
    if L.shape[0] != mean.shape[0]:
        raise ValueError(f"mean has length {mean.shape[0]} but cov is {L.shape[0]}x{L.shape[0]}")
    return mean + L @ rng.standard_normal(mean.shape[0])


@dataclass(frozen=True)
class JointGaussian:
    """A Gaussian over ``D`` coordinates with named, contiguous blocks.

    ``blocks`` maps a label to a half-open ``(start, stop)`` range; ranges are
    disjoint and together cover ``[0, D)``.
    """

    mean: np.ndarray
    cov: np.ndarray
    blocks: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        D = len(self.mean)
        if self.cov.shape != (D, D):
            raise ValueError(f"cov shape {self.cov.shape} does not match mean length {D}")
        covered = np.zeros(D, dtype=int)
        for name, (lo, hi) in self.blocks.items():
            if not 0 <= lo < hi <= D:
                raise ValueError(f"block {name!r} range ({lo}, {hi}) outside [0, {D})")
            covered[lo:hi] += 1
        if self.blocks and not np.all(covered == 1):
            raise ValueError("blocks must be disjoint and cover every coordinate")

    @property
    def dim(self) -> int:
        return len(self.mean)

    def block(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Marginal mean and covariance of one block."""
        lo, hi = self.blocks[name]
        return self.mean[lo:hi], self.cov[lo:hi, lo:hi]


def condition_joint_gaussian(j: JointGaussian, observed, values) -> JointGaussian:
    """Condition ``j`` on ``x[observed] = values``.

    Returns the Gaussian over the remaining coordinates, in their original
    order. Blocks that lose coordinates shrink; blocks that lose all of them
    are dropped.
    """
    observed = np.asarray(observed, dtype=int).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if observed.size != values.size:
        raise ValueError("observed indices and values differ in length")
    if observed.size == 0:
        return j
    if len(set(observed.tolist())) != observed.size:
        raise ValueError("observed indices repeat")
    keep = np.setdiff1d(np.arange(j.dim), observed)

    S_bb = j.cov[np.ix_(observed, observed)]
    S_ab = j.cov[np.ix_(keep, observed)]
    L = cholesky_factor(S_bb)
    gain = linalg.cho_solve((L, True), S_ab.T, check_finite=False).T
    mean = j.mean[keep] + gain @ (values - j.mean[observed])
    cov = symmetrize(j.cov[np.ix_(keep, keep)] - gain @ S_ab.T)

    blocks = {}
    start = 0
    for name, (lo, hi) in sorted(j.blocks.items(), key=lambda kv: kv[1][0]):
        width = int(np.count_nonzero((keep >= lo) & (keep < hi)))
        if width:
            blocks[name] = (start, start + width)
            start += width
    return JointGaussian(mean=mean, cov=cov, blocks=blocks)
