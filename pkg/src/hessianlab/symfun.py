"""Elementary symmetric functions, the k-Hessian operator and cone tests.

Everything here accepts either a single object (a spectrum of shape ``(n,)``
or a matrix of shape ``(n, n)``) or a stack of them with leading batch axes.
The scalar front-ends (``hessian_op``, ``in_gamma``...) validate and raise;
the ``batch_*`` helpers are the vectorized workhorses used by the grid code
and never raise on inadmissible input.

Notation: ``sigma_k^{ij}[A]`` is the derivative of ``sigma_k`` with respect
to the entry ``A_ij`` (entries treated as independent), and
``F = sigma_k^{1/k}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AdmissibilityError, DegeneracyError, DomainError

__all__ = [
    "ConeVerdict",
    "as_spectrum",
    "as_symmetric",
    "eigenvalues",
    "sigma_elem",
    "sigma_minor",
    "sigma_partial",
    "sigma_grad_matrix",
    "in_gamma",
    "hessian_op",
    "hessian_op_grad",
    "normalized_g_matrix",
    "trace_identity_residual",
    "maclaurin_gap",
    "maclaurin_bound",
    "newton_lower_gap",
    "concavity_witness",
    "batch_operator",
    "batch_cone_member",
]


# ---------------------------------------------------------------------------
# validation

def as_spectrum(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise DomainError(f"spectrum must be a 1-d sequence, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise DomainError("spectrum has non-finite entries")
    return lam


def as_symmetric(A) -> np.ndarray:
    """Return ``A`` as an exactly symmetric float array.

    Off-diagonal pairs are averaged, so the result satisfies ``A[i, j] ==
    A[j, i]`` bit for bit.  Asymmetry larger than round-off is rejected.
    """
    A = np.array(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    At = np.swapaxes(A, -1, -2)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if np.max(np.abs(A - At), initial=0.0) > 1e-10 * scale:
        raise DomainError("matrix is not symmetric")
    return 0.5 * (A + At)


def _check_order(k: int, n: int, lo: int = 0) -> None:
    if not lo <= k <= n:
        raise DomainError(f"order k={k} outside [{lo}, {n}]")


def eigenvalues(A) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (or stack of them)."""
    return np.linalg.eigvalsh(as_symmetric(A))


# ---------------------------------------------------------------------------
# elementary symmetric polynomials

def _esf_all(lam: np.ndarray, kmax: int) -> np.ndarray:
    """sigma_0..sigma_kmax of the last axis, via the product-expansion recurrence."""
    out = np.zeros(lam.shape[:-1] + (kmax + 1,))
    out[..., 0] = 1.0
    for i in range(lam.shape[-1]):
        li = lam[..., i]
        for j in range(min(i + 1, kmax), 0, -1):
            out[..., j] += li * out[..., j - 1]
    return out


def sigma_elem(lam, k: int) -> float:
    """k-th elementary symmetric polynomial of the entries of ``lam``.

    ``lam`` may carry leading batch axes; the last axis is the spectrum.
    ``sigma_0`` is 1 by convention.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_order(k, n)
    out = _esf_all(lam, k)[..., k]
    return float(out) if out.ndim == 0 else out


def _det(M: np.ndarray) -> np.ndarray:
    """Determinant of a stack of m x m matrices by explicit expansion (m <= 4)."""
    m = M.shape[-1]
    if m == 0:
        return np.ones(M.shape[:-2])
    if m == 1:
        return M[..., 0, 0].copy()
    if m == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if m == 3:
        a = M
        return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
                - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
                + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))
    if m == 4:
        total = np.zeros(M.shape[:-2])
        rest = [1, 2, 3]
        for c in range(4):
            cols = [j for j in range(4) if j != c]
            minor = M[..., rest, :][..., :, cols]
            total = total + (-1) ** c * M[..., 0, c] * _det(minor)
        return total
    return np.linalg.det(M)


@lru_cache(maxsize=None)
def _subsets(n: int, k: int):
    return tuple(itertools.combinations(range(n), k))


def sigma_minor(A, k: int):
    """Sum of all k x k principal minors of ``A``."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    n = A.shape[-1]
    _check_order(k, n)
    total = np.zeros(A.shape[:-2])
    for S in _subsets(n, k):
        idx = list(S)
        total = total + _det(A[..., idx, :][..., :, idx])
    return float(total) if total.ndim == 0 else total


def sigma_grad_matrix(A, k: int) -> np.ndarray:
    """Matrix of derivatives ``sigma_k^{ij}[A]`` from the principal-minor sum.

    Each principal minor contributes its cofactors, so no eigenvector
    derivatives (and no trouble at repeated eigenvalues) are involved.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    _check_order(k, n, lo=1)
    out = np.zeros(A.shape)
    for S in _subsets(n, k):
        for pa, a in enumerate(S):
            for pb, b in enumerate(S):
                rows = [s for s in S if s != a]
                cols = [s for s in S if s != b]
                minor = A[..., rows, :][..., :, cols]
                out[..., a, b] += (-1) ** (pa + pb) * _det(minor)
    return out


def sigma_partial(lam, k: int) -> tuple:
    """Partial derivatives of sigma_k with respect to each eigenvalue."""
    lam = as_spectrum(lam)
    n = lam.size
    _check_order(k, n, lo=1)
    return tuple(sigma_elem(np.delete(lam, i), k - 1) for i in range(n))


# ---------------------------------------------------------------------------
# Garding cone

@dataclass(frozen=True)
class ConeVerdict:
    member: bool
    first_failing_j: int | None
    sigma_values: tuple

    def __bool__(self):
        return self.member


def in_gamma(lam, k: int) -> ConeVerdict:
    """Strict membership of ``lam`` in the cone {sigma_j > 0, j = 1..k}."""
    lam = as_spectrum(lam)
    _check_order(k, lam.size, lo=1)
    sig = _esf_all(lam, k)[1:]
    failing = [j + 1 for j, s in enumerate(sig) if not s > 0.0]
    first = failing[0] if failing else None
    return ConeVerdict(member=first is None, first_failing_j=first,
                       sigma_values=tuple(float(s) for s in sig))


def batch_cone_member(lam: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cone test over the last axis.

    Returns ``(member, first_failing_j)`` with ``first_failing_j == 0`` for
    members.
    """
    sig = _esf_all(lam, k)[..., 1:]
    bad = ~(sig > 0.0)
    member = ~np.any(bad, axis=-1)
    first = np.where(member, 0, np.argmax(bad, axis=-1) + 1)
    return member, first


def _verdict_of_matrix(A: np.ndarray, k: int) -> ConeVerdict:
    return in_gamma(np.linalg.eigvalsh(A), k)


# ---------------------------------------------------------------------------
# the concave operator F = sigma_k^{1/k}

def hessian_op(A, k: int) -> float:
    """``F[A] = sigma_k[A]^{1/k}``; requires ``sigma_k[A] >= 0``."""
    A = as_symmetric(A)
    _check_order(k, A.shape[-1], lo=1)
    s = sigma_minor(A, k)
    if s < 0.0:
        raise AdmissibilityError(f"sigma_{k}[A] = {s:.6g} < 0", _verdict_of_matrix(A, k))
    return s ** (1.0 / k)


def hessian_op_grad(A, k: int) -> np.ndarray:
    """Derivative ``F^{ij}[A] = (1/k) sigma_k^{(1-k)/k} sigma_k^{ij}``."""
    A = as_symmetric(A)
    _check_order(k, A.shape[-1], lo=1)
    s = sigma_minor(A, k)
    if not s > 0.0:
        raise AdmissibilityError(f"sigma_{k}[A] = {s:.6g} is not positive",
                                 _verdict_of_matrix(A, k))
    return s ** ((1.0 - k) / k) / k * sigma_grad_matrix(A, k)


def batch_operator(H: np.ndarray, k: int, grad: bool = True):
    """F and F^{ij} over a stack of matrices without admissibility checks.

    Returns ``(sigma, F, Fij)``; ``F`` is NaN wherever ``sigma_k < 0`` and
    ``Fij`` is NaN wherever ``sigma_k <= 0``.
    """
    sig = sigma_minor(H, k)
    sig = np.atleast_1d(sig)
    with np.errstate(invalid="ignore", divide="ignore"):
        F = np.where(sig >= 0.0, np.abs(sig) ** (1.0 / k), np.nan)
        if not grad:
            return sig, F, None
        scale = np.where(sig > 0.0, np.abs(sig) ** ((1.0 - k) / k) / k, np.nan)
    Fij = scale[..., None, None] * sigma_grad_matrix(H, k)
    return sig, F, Fij


def normalized_g_matrix(A, k: int) -> np.ndarray:
    """Unit-trace normalization ``G = F^{ij} / tr F^{ij}``."""
    Fij = hessian_op_grad(A, k)
    tr = float(np.trace(Fij))
    if not tr > 1e-300:
        raise DegeneracyError(f"trace of F^ij is {tr:.3g}")
    G = Fij / tr
    # a second pass drives tr(G) to 1 within one ulp-scale rounding
    return G / float(np.trace(G))


def trace_identity_residual(A, k: int) -> float:
    """|sum_i sigma_k^{ii} - (n-k+1) sigma_{k-1}| / max(1, |sigma_{k-1}|)."""
    A = as_symmetric(A)
    n = A.shape[-1]
    _check_order(k, n, lo=1)
    lhs = float(np.trace(sigma_grad_matrix(A, k)))
    s_prev = sigma_minor(A, k - 1)
    return abs(lhs - (n - k + 1) * s_prev) / max(1.0, abs(s_prev))


def maclaurin_bound(n: int, k: int) -> float:
    """Sharp upper bound of ``maclaurin_gap`` over the cone."""
    return math.comb(n, k) ** (1.0 / k) / math.comb(n, k - 1) ** (1.0 / (k - 1))


def _require_admissible(A: np.ndarray, k: int) -> None:
    v = _verdict_of_matrix(A, k)
    if not v.member:
        raise AdmissibilityError(f"matrix not in Gamma_{k} (sigma_{v.first_failing_j} <= 0)", v)


def maclaurin_gap(A, k: int) -> float:
    """Ratio ``sigma_k^{1/k} / sigma_{k-1}^{1/(k-1)}``.

    Bounded above by :func:`maclaurin_bound` on the cone (normalized
    Maclaurin inequality), with equality at multiples of the identity.
    """
    A = as_symmetric(A)
    n = A.shape[-1]
    _check_order(k, n, lo=2)
    _require_admissible(A, k)
    return sigma_minor(A, k) ** (1.0 / k) / sigma_minor(A, k - 1) ** (1.0 / (k - 1))


def newton_lower_gap(A, k: int) -> float:
    """``sigma_{k-1} / (sigma_1^{1/(k-1)} sigma_k^{(k-2)/(k-1)})``, scale invariant."""
    A = as_symmetric(A)
    n = A.shape[-1]
    _check_order(k, n, lo=2)
    _require_admissible(A, k)
    s1 = sigma_minor(A, 1)
    sk = sigma_minor(A, k)
    if not sk > 0.0:
        raise AdmissibilityError(f"sigma_{k} = {sk:.3g} is not positive")
    return sigma_minor(A, k - 1) / (s1 ** (1.0 / (k - 1)) * sk ** ((k - 2.0) / (k - 1)))


def concavity_witness(A, B, theta: float, k: int) -> float:
    """``F[theta A + (1-theta) B] - theta F[A] - (1-theta) F[B]`` (nonnegative)."""
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta={theta} outside [0, 1]")
    A = as_symmetric(A)
    B = as_symmetric(B)
    _require_admissible(A, k)
    _require_admissible(B, k)
    mid = theta * A + (1.0 - theta) * B
    return hessian_op(mid, k) - theta * hessian_op(A, k) - (1.0 - theta) * hessian_op(B, k)
