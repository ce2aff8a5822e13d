"""Small dense linear-algebra and statistics primitives.

Matrices are plain ``numpy`` float arrays. Everything here is written out
explicitly (Cholesky, cyclic Jacobi) so the rest of the toolkit does not
depend on LAPACK behaviour for its reference results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantColumn,
    NoConvergence,
    NotSymmetric,
    SingularMatrix,
    TooFewValues,
)

SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _check_symmetric(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"NotSymmetric: matrix is {m.shape[0]}x{m.shape[1]}")
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise NotSymmetric("NotSymmetric: |A - A^T| exceeds 1e-10")


def solve_spd(a, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky.

    A pivot is rejected when it falls below ``PIVOT_TOL`` times the original
    diagonal entry of its column, which makes the singularity test
    independent of column scaling.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=float).reshape(-1)
    _check_symmetric(a)
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"dimension mismatch: A is {n}x{n}, b has {b.shape[0]}")

    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        scale = max(abs(a[j, j]), np.finfo(float).tiny)
        if not pivot > PIVOT_TOL * scale:
            raise SingularMatrix(
                f"SingularMatrix: pivot {pivot:.3e} at column {j} (collinear features?)",
                relative_pivot=float(pivot / scale),
            )
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]

    # forward then back substitution
    z = np.zeros(n)
    for i in range(n):
        z[i] = (b[i] - lower[i, :i] @ z[:i]) / lower[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (z[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, aligned with eigenvalues

    def vector(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return v @ np.diag(self.eigenvalues) @ v.T


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its largest-magnitude entry is non-negative.

    Ties go to the lowest index (``argmax`` semantics).
    """
    if v.size and v[int(np.argmax(np.abs(v)))] < 0:
        return -v
    return v


def eigh_sym(m) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    a = as_matrix(m)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1.0)
    off_mask = ~np.eye(n, dtype=bool)

    for _ in range(JACOBI_MAX_SWEEPS + 1):
        off = math.sqrt(float(np.sum(a[off_mask] ** 2)))
        if off <= JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    t = apq / diff  # small-angle limit, avoids overflow in theta
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"NoConvergence: Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    for i in range(n):
        col = vectors[:, i]
        vectors[:, i] = canonical_sign(col / np.linalg.norm(col))
    return EigenDecomposition(values, vectors)


def mean_std(x) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 2:
        raise TooFewValues(f"TooFewValues: need at least 2 values, got {x.size}")
    mean = float(np.mean(x))
    return mean, float(math.sqrt(np.sum((x - mean) ** 2) / (x.size - 1)))


def pearson_corr(x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ValueError("vectors differ in length")
    if x.size < 2:
        raise TooFewValues("TooFewValues: correlation needs at least 2 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0:
        raise ConstantColumn("x")
    if syy == 0.0:
        raise ConstantColumn("y")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


# -- reproducible randomness -------------------------------------------------


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Hash a seed together with integer keys into an independent 64-bit seed."""
    h = mix64(seed & _MASK64)
    for k in keys:
        h = mix64(h ^ mix64((k + _GOLDEN) & _MASK64))
    return h


class SplitMix64:
    """Counter-based generator: draw ``i`` is ``mix64(seed + (i + 1) * golden)``.

    The algorithm is fixed so that every seeded result in the toolkit stays
    reproducible across versions and platforms.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * _GOLDEN)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via multiply-shift (bias < n / 2**64)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def normal(self) -> float:
        """Standard normal variate by Box-Muller (one draw per call)."""
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def seeded_shuffle(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of ``range(n)`` driven by :class:`SplitMix64`."""
    if n < 0:
        raise ValueError("n must be non-negative")
    perm = list(range(n))
    rng = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = rng.randbelow(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
