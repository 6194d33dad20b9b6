"""Right-hand-side models, exponent transforms and pointwise inequality probes.

Fields are vectorized callables on point arrays of shape ``(m, n)`` (a single
point of shape ``(n,)`` is accepted too).  Derivatives are analytic where the
catalog provides them and central differences otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InsufficientDataError, ParameterError

__all__ = [
    "AnalyticField",
    "ExponentProfile",
    "ProbeReport",
    "ThresholdClass",
    "REGIMES",
    "bump_eta",
    "constant",
    "quadratic",
    "affine",
    "radial_power",
    "exp_quadratic",
    "wang_field",
    "product",
    "sum_of",
    "power_transform",
    "power_of",
    "threshold_classify",
    "c11_quotient_sup",
    "c21_defect_inf",
    "holder_probe",
    "lattice_samples",
    "stable",
    "default_directions",
]


def _points(x, n):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != n:
        raise DomainError(f"points have dimension {x.shape[-1]}, field expects {n}")
    return x, single


@dataclass(frozen=True)
class AnalyticField:
    """Scalar field on R^n with optional analytic first and second derivatives."""

    n: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5
    name: str = "field"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        pts, single = _points(x, self.n)
        v = np.asarray(self.value_fn(pts), dtype=float)
        return v[0] if single else v

    value = __call__

    def gradient(self, x):
        pts, single = _points(x, self.n)
        if self.gradient_fn is not None:
            g = np.asarray(self.gradient_fn(pts), dtype=float)
        else:
            g = self._fd_gradient(pts)
        return g[0] if single else g

    def hessian(self, x):
        pts, single = _points(x, self.n)
        if self.hessian_fn is not None:
            H = np.asarray(self.hessian_fn(pts), dtype=float)
        elif self.gradient_fn is not None:
            H = self._fd_hessian_from_gradient(pts)
        else:
            H = self._fd_hessian_from_values(pts)
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        return H[0] if single else H

    def _fd_gradient(self, pts):
        s = self.fd_step
        out = np.empty(pts.shape)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = s
            out[:, i] = (self.value_fn(pts + e) - self.value_fn(pts - e)) / (2 * s)
        return out

    def _fd_hessian_from_gradient(self, pts):
        s = self.fd_step
        out = np.empty(pts.shape + (self.n,))
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = s
            out[:, :, j] = (self.gradient_fn(pts + e) - self.gradient_fn(pts - e)) / (2 * s)
        return out

    def _fd_hessian_from_values(self, pts):
        s = self.fd_step
        f = self.value_fn
        n = self.n
        out = np.empty(pts.shape + (n,))
        f0 = f(pts)
        eye = np.eye(n) * s
        for i in range(n):
            out[:, i, i] = (f(pts + eye[i]) - 2 * f0 + f(pts - eye[i])) / s**2
            for j in range(i + 1, n):
                d = (f(pts + eye[i] + eye[j]) - f(pts + eye[i] - eye[j])
                     - f(pts - eye[i] + eye[j]) + f(pts - eye[i] - eye[j])) / (4 * s**2)
                out[:, i, j] = out[:, j, i] = d
        return out


# ---------------------------------------------------------------------------
# catalog

def constant(c: float, n: int) -> AnalyticField:
    c = float(c)
    return AnalyticField(
        n,
        lambda x: np.full(x.shape[0], c),
        lambda x: np.zeros(x.shape),
        lambda x: np.zeros(x.shape + (x.shape[-1],)),
        name="constant", params={"value": c},
    )


def quadratic(n: int, a: float = 1.0, b: float = 0.0, matrix=None, center=None) -> AnalyticField:
    """``a |x - center|^2 + b``, or ``(x-center)^T M (x-center) + b`` if ``matrix`` is given."""
    M = a * np.eye(n) if matrix is None else np.asarray(matrix, dtype=float)
    M = 0.5 * (M + M.T)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)

    def value(x):
        y = x - c
        return np.einsum("mi,ij,mj->m", y, M, y) + b

    return AnalyticField(
        n, value,
        lambda x: 2.0 * (x - c) @ M,
        lambda x: np.broadcast_to(2.0 * M, x.shape + (n,)).copy(),
        name="quadratic", params={"a": a, "b": b},
    )


def affine(n: int, coeffs, const: float = 0.0) -> AnalyticField:
    w = np.asarray(coeffs, dtype=float)
    return AnalyticField(
        n,
        lambda x: x @ w + const,
        lambda x: np.broadcast_to(w, x.shape).copy(),
        lambda x: np.zeros(x.shape + (n,)),
        name="affine", params={"coeffs": w.tolist(), "const": const},
    )


def radial_power(n: int, p: float, scale: float = 1.0) -> AnalyticField:
    """``scale * |x|^p``."""
    p = float(p)

    def value(x):
        return scale * np.linalg.norm(x, axis=-1) ** p

    def gradient(x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, scale * p * r ** (p - 2.0), 0.0)
        return c[:, None] * x

    def hessian(x):
        r = np.linalg.norm(x, axis=-1)
        eye = np.eye(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, scale * p * r ** (p - 2.0), 0.0)
            u = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], 0.0)
        H = c[:, None, None] * (eye + (p - 2.0) * u[:, :, None] * u[:, None, :])
        at0 = r == 0
        if np.any(at0):
            H[at0] = 2.0 * scale * eye if p == 2.0 else (0.0 if p > 2.0 else np.inf)
        return H

    return AnalyticField(n, value, gradient, hessian, name="radial_power",
                         params={"p": p, "scale": scale})


def exp_quadratic(n: int, c: float = 1.0, scale: float = 1.0) -> AnalyticField:
    """``scale * exp(c |x|^2)``."""

    def value(x):
        return scale * np.exp(c * np.sum(x * x, axis=-1))

    def gradient(x):
        return (2.0 * c * value(x))[:, None] * x

    def hessian(x):
        v = value(x)
        return 2.0 * c * v[:, None, None] * (np.eye(n) + 2.0 * c * x[:, :, None] * x[:, None, :])

    return AnalyticField(n, value, gradient, hessian, name="exp_quadratic",
                         params={"c": c, "scale": scale})


def bump_eta(t):
    """Smooth even cutoff: ``exp(-1/(1-t^2))`` on (-1, 1), zero elsewhere."""
    t = np.asarray(t, dtype=float)
    gap = 1.0 - t * t
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(gap > 0.0, np.exp(-1.0 / np.where(gap > 0.0, gap, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def _bump_eta_prime(t):
    gap = 1.0 - t * t
    live = gap > 1e-3  # exp(-1000) underflows anyway
    safe = np.where(live, gap, 1.0)
    return np.where(live, np.exp(-1.0 / safe) * (-2.0 * t / safe**2), 0.0)


def wang_field(alpha: float, beta: float, n: int) -> AnalyticField:
    """Cusp-supported right-hand side ``eta(x_n / |x'|^alpha) |x'|^beta``.

    The value on the axis ``x' = 0`` is 0 (continuous extension, beta > 0).
    Gradient is analytic; the Hessian falls back to differences of it.
    """
    if not alpha > 1.0:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    if not beta > 0.0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if n < 2:
        raise ParameterError("wang_field needs n >= 2")

    def parts(x):
        rho = np.linalg.norm(x[:, :-1], axis=-1)
        live = rho > 0.0
        rs = np.where(live, rho, 1.0)
        t = np.where(live, x[:, -1] / rs**alpha, 2.0)
        return rho, rs, t, live

    def value(x):
        rho, rs, t, live = parts(x)
        return np.where(live, bump_eta(t) * rs**beta, 0.0)

    def gradient(x):
        rho, rs, t, live = parts(x)
        eta = bump_eta(t)
        deta = _bump_eta_prime(t)
        g = np.zeros(x.shape)
        radial = rs ** (beta - 2.0) * (beta * eta - alpha * t * deta)
        g[:, :-1] = np.where(live, radial, 0.0)[:, None] * x[:, :-1]
        g[:, -1] = np.where(live, deta * rs ** (beta - alpha), 0.0)
        return g

    return AnalyticField(n, value, gradient, None, fd_step=1e-6, name="wang",
                         params={"alpha": alpha, "beta": beta})


def product(f: AnalyticField, g: AnalyticField) -> AnalyticField:
    if f.n != g.n:
        raise DomainError("dimension mismatch in product")

    def value(x):
        return f.value_fn(x) * g.value_fn(x)

    def gradient(x):
        return f.value_fn(x)[:, None] * g.gradient(x) + g.value_fn(x)[:, None] * f.gradient(x)

    def hessian(x):
        fv, gv = f.value_fn(x), g.value_fn(x)
        df, dg = f.gradient(x), g.gradient(x)
        cross = df[:, :, None] * dg[:, None, :]
        return (fv[:, None, None] * g.hessian(x) + gv[:, None, None] * f.hessian(x)
                + cross + np.swapaxes(cross, -1, -2))

    return AnalyticField(f.n, value, gradient, hessian, name="product",
                         params={"a": f.name, "b": g.name})


def sum_of(f: AnalyticField, g: AnalyticField) -> AnalyticField:
    if f.n != g.n:
        raise DomainError("dimension mismatch in sum")
    return AnalyticField(
        f.n,
        lambda x: f.value_fn(x) + g.value_fn(x),
        lambda x: f.gradient(x) + g.gradient(x),
        lambda x: f.hessian(x) + g.hessian(x),
        name="sum", params={"a": f.name, "b": g.name},
    )


def power_transform(f: AnalyticField, inv_p: float) -> AnalyticField:
    """Pointwise power ``f ** inv_p`` with chain-rule derivatives.

    Zero maps to zero (derivatives there are reported as 0).  A negative
    value at a queried point raises :class:`DomainError`.
    """
    q = float(inv_p)
    if not q > 0.0:
        raise DomainError(f"exponent must be positive, got {inv_p}")

    def base(x):
        v = f.value_fn(x)
        if np.any(v < 0.0):
            bad = x[np.argmax(v < 0.0)]
            raise DomainError(f"negative base value at point {bad.tolist()}")
        return v

    def value(x):
        return base(x) ** q

    def gradient(x):
        v = base(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(v > 0.0, q * v ** (q - 1.0), 0.0)
        return c[:, None] * f.gradient(x)

    def hessian(x):
        v = base(x)
        df = f.gradient(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = np.where(v > 0.0, q * v ** (q - 1.0), 0.0)
            c2 = np.where(v > 0.0, q * (q - 1.0) * v ** (q - 2.0), 0.0)
        return (c1[:, None, None] * f.hessian(x)
                + c2[:, None, None] * df[:, :, None] * df[:, None, :])

    return AnalyticField(f.n, value, gradient, hessian, fd_step=f.fd_step,
                         name="power_of", params={"base": f.name, "q": q})


power_of = power_transform


# ---------------------------------------------------------------------------
# exponent bookkeeping

REGIMES = ("C11_sharp", "C21_sharp", "C21_relaxed", "concavity_natural")


@dataclass(frozen=True)
class ExponentProfile:
    """Which power ``g = f^{1/p}`` is assumed regular, and how regular."""

    k: int
    regime: str = "C11_sharp"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ParameterError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.k < 2:
            raise ParameterError("exponent profiles need k >= 2")

    @property
    def p(self) -> float:
        k = self.k
        return {
            "C11_sharp": k - 1.0,
            "C21_sharp": (2.0 * k - 2.0) / 3.0,
            "C21_relaxed": 2.0 * k / 3.0,
            "concavity_natural": float(k),
        }[self.regime]

    @property
    def smoothness(self) -> str:
        return "C11" if self.regime in ("C11_sharp", "concavity_natural") else "C21"


@dataclass(frozen=True)
class ThresholdClass:
    regime: str  # subcritical | critical | supercritical
    threshold: float
    c11_exponent: float
    c21_exponent: float
    c11_holder: float
    c21_holder: float

    @property
    def expect_blowup(self) -> bool:
        return self.regime == "subcritical"


def threshold_classify(alpha: float, beta: float, k: int) -> ThresholdClass:
    """Place ``beta`` relative to ``2(k-1)(alpha-1)``.

    Also returns the regularity exponents of the counterexample family at
    ``beta = 2(k-1)(alpha-1) - 1``: the power made C^{1,1}
    (``1/(k-1-(2k-1)/(2 alpha))``), the power made C^{2,1}
    (``1/(2(k-1)/3 - (2k-1)/(3 alpha))``), and the Hölder exponents left for
    the sharp powers ``f^{1/(k-1)}`` and ``f^{3/(2k-2)}``.
    """
    if not alpha > 1.0:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    if k < 2:
        raise ParameterError("k must be at least 2")
    thr = 2.0 * (k - 1) * (alpha - 1.0)
    if math.isclose(beta, thr, rel_tol=1e-12, abs_tol=1e-12):
        regime = "critical"
    elif beta < thr:
        regime = "subcritical"
    else:
        regime = "supercritical"
    return ThresholdClass(
        regime=regime,
        threshold=thr,
        c11_exponent=1.0 / (k - 1 - (2 * k - 1) / (2.0 * alpha)),
        c21_exponent=1.0 / (2.0 * (k - 1) / 3.0 - (2 * k - 1) / (3.0 * alpha)),
        c11_holder=1.0 - (2 * k - 1) / (alpha * (k - 1)),
        c21_holder=1.0 - (6 * k - 3) / (2.0 * alpha * (k - 1)),
    )


# ---------------------------------------------------------------------------
# probes

@dataclass(frozen=True)
class ProbeReport:
    sup_c11_quotient: float
    inf_c21_defect: float
    sample_count: int
    alpha: float
    argext: tuple = ()

    def __post_init__(self):
        if self.sample_count < 1:
            raise ParameterError("probe needs at least one sample")


def stable(a: float, b: float, rel: float = 0.05) -> bool:
    """True when two probe values agree to relative ``rel``."""
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def lattice_samples(lo, hi, per_axis: int) -> np.ndarray:
    """Tensor lattice of ``per_axis`` points per axis spanning the box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _default_floor(values: np.ndarray) -> float:
    return 1e-14 * max(float(np.max(np.abs(values), initial=0.0)), 1e-300)


def _positive_values(g: AnalyticField, pts: np.ndarray) -> np.ndarray:
    v = g(pts)
    bad = ~(v > 0.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"field is not positive at sample {pts[i].tolist()} (value {v[i]:.3g})")
    return v


def c11_quotient_sup(g: AnalyticField, omega, floor: float | None = None) -> ProbeReport:
    """Sup over samples of ``|grad g|^2 / g`` (denominator floored)."""
    pts, _ = _points(omega, g.n)
    v = _positive_values(g, pts)
    floor = _default_floor(v) if floor is None else floor
    q = np.sum(g.gradient(pts) ** 2, axis=-1) / np.maximum(v, floor)
    i = int(np.argmax(q))
    return ProbeReport(float(q[i]), math.nan, len(pts), math.nan, tuple(pts[i]))


def default_directions(n: int, rng: np.random.Generator) -> np.ndarray:
    """Coordinate axes plus ``2n`` random unit vectors."""
    if n == 1:
        return np.ones((1, 1))
    rand = rng.standard_normal((2 * n, n))
    rand /= np.linalg.norm(rand, axis=-1, keepdims=True)
    return np.vstack([np.eye(n), rand])


def c21_defect_inf(g: AnalyticField, alpha: float, omega, directions=None,
                   floor: float | None = None, seed: int = 0) -> ProbeReport:
    """Inf over samples and directions of ``(g_ee - alpha g_e^2 / g) / g^{1/3}``.

    With ``directions=None`` each sample gets the coordinate axes plus ``2n``
    fresh random unit vectors drawn from ``seed``.
    """
    if not alpha < 0.5:
        raise ParameterError(f"alpha must be below 1/2, got {alpha}")
    pts, _ = _points(omega, g.n)
    v = _positive_values(g, pts)
    floor = _default_floor(v) if floor is None else floor
    vf = np.maximum(v, floor)
    grad = g.gradient(pts)
    hess = g.hessian(pts)
    if directions is None:
        rng = np.random.default_rng(seed)
        dirs = np.stack([default_directions(g.n, rng) for _ in range(len(pts))])
    else:
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        dirs = np.broadcast_to(d, (len(pts),) + d.shape)
    ge = np.einsum("mi,mdi->md", grad, dirs)
    gee = np.einsum("mdi,mij,mdj->md", dirs, hess, dirs)
    defect = (gee - alpha * ge**2 / vf[:, None]) / np.cbrt(vf)[:, None]
    flat = int(np.argmin(defect))
    m = flat // defect.shape[1]
    return ProbeReport(math.nan, float(defect.ravel()[flat]), len(pts), float(alpha), tuple(pts[m]))


def holder_probe(g: AnalyticField, order: int, omega) -> float:
    """Empirical Hölder exponent of the ``order``-th derivative of ``g``.

    ``omega`` holds point pairs, shape ``(m, 2, n)``.  The exponent is the
    least-squares slope of ``log |D^order g(x) - D^order g(y)|`` against
    ``log |x - y|``; pairs with identical derivatives are dropped.
    """
    if order not in (1, 2):
        raise ParameterError("order must be 1 or 2")
    pairs = np.asarray(omega, dtype=float)
    if pairs.ndim == 2 and g.n == 1:
        pairs = pairs[..., None]
    if pairs.ndim != 3 or pairs.shape[1] != 2:
        raise DomainError("sample pairs must have shape (m, 2, n)")
    x, y = pairs[:, 0], pairs[:, 1]
    if order == 1:
        diff = np.linalg.norm(g.gradient(x) - g.gradient(y), axis=-1)
    else:
        diff = np.linalg.norm(g.hessian(x) - g.hessian(y), axis=(-2, -1))
    dist = np.linalg.norm(x - y, axis=-1)
    keep = (diff > 0.0) & (dist > 0.0) & np.isfinite(diff)
    if np.count_nonzero(keep) < 8:
        raise InsufficientDataError(f"need at least 8 usable sample pairs, got {np.count_nonzero(keep)}")
    slope, _ = np.polyfit(np.log(dist[keep]), np.log(diff[keep]), 1)
    return float(slope)
