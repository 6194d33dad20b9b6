"""Damped Newton for ``F[D^2 u] = (f + eps)^{1/k}`` and eps-continuation.

The nonlinear system is posed on interior nodes; boundary nodes hold the
Dirichlet data.  Residual, merit function and stopping test all use the root
form ``F = sigma_k^{1/k}``.  The step direction comes from the power form by
default,
``sum_ij sigma_k^{ij}[D^2 u_h] (D^2_h delta)_ij = (f + eps) - sigma_k[D^2 u_h]``,
with ``delta = 0`` on the boundary; the root-form model is available via
``NewtonOptions.linearization``.  Each step backtracks until the trial
iterate is admissible (at the configured margin) and the max-norm residual
has strictly decreased.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import symfun
from .disc import Ball, GridDomain, GridField, _hessian_array, _mask_from_spectra, spectral_norms
from .errors import (AdmissibilityError, DomainError, NumericalError, ParameterError,
                     SafeguardError, ScaleError)
from .fields import AnalyticField, ExponentProfile

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "NewtonOptions",
    "SolveReport",
    "AuditRecord",
    "REPORT_HEADER",
    "subsolution_init",
    "harmonic_majorant",
    "newton_solve",
    "continuation_solve",
    "maximum_principle_audit",
    "solution_error",
]


@dataclass(eq=False)
class ProblemSpec:
    domain: GridDomain
    k: int
    f: AnalyticField
    phi: AnalyticField
    eps_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    exponent_profile: ExponentProfile | None = None

    def __post_init__(self):
        n = self.domain.n
        if not 2 <= self.k <= n:
            raise ParameterError(f"need 2 <= k <= n, got k={self.k}, n={n}")
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps:
            raise ParameterError("eps schedule is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ParameterError("eps schedule must be strictly decreasing")
        if not eps[-1] > 0.0:
            raise ParameterError("eps schedule must stay positive")
        self.eps_schedule = eps
        fv = self.f_interior
        if np.any(~np.isfinite(fv)):
            raise ScaleError("right-hand side is not finite on the grid")
        if np.any(fv < 0.0):
            i = int(np.argmin(fv))
            raise DomainError(f"right-hand side negative at {self.domain.interior_points[i].tolist()}")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def f_interior(self) -> np.ndarray:
        if not hasattr(self, "_f_int"):
            self._f_int = np.asarray(self.f(self.domain.interior_points), dtype=float)
        return self._f_int

    @property
    def phi_boundary(self) -> np.ndarray:
        if not hasattr(self, "_phi_b"):
            self._phi_b = np.asarray(self.phi(self.domain.boundary_points), dtype=float)
        return self._phi_b

    def target(self, eps: float) -> np.ndarray:
        return (self.f_interior + eps) ** (1.0 / self.k)

    def with_domain(self, domain: GridDomain) -> "ProblemSpec":
        return ProblemSpec(domain, self.k, self.f, self.phi, self.eps_schedule, self.exponent_profile)


@dataclass(frozen=True)
class NewtonOptions:
    residual_tol: float | None = None  # None: 1e-9 * (1 + max (f+eps)^{1/k})
    max_iters: int = 60
    backtrack: float = 0.5
    min_step: float = 1e-10
    admissibility_margin: float = 0.0
    linear_solver_tol: float = 1e-12
    collar_width: float = 0.1
    linearization: str = "sigma"  # step model: "sigma", "root" or row-wise "adaptive"

    def __post_init__(self):
        if self.residual_tol is not None and not self.residual_tol > 0.0:
            raise ParameterError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if not 0.0 < self.backtrack < 1.0:
            raise ParameterError("backtracking factor must lie in (0, 1)")
        if self.admissibility_margin < 0.0:
            raise ParameterError("admissibility margin must be nonnegative")
        if self.linearization not in ("root", "sigma", "adaptive"):
            raise ParameterError(f"unknown linearization {self.linearization!r}")


REPORT_HEADER = ("h", "eps", "iters", "residual", "sup_second", "weighted_sup", "admissible", "wall_time_s")


@dataclass(frozen=True)
class AuditRecord:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    violations: tuple = ()


@dataclass(frozen=True, eq=False)
class SolveReport:
    eps: float
    h: float
    iterations: int
    final_residual: float
    sup_second: float
    weighted_interior_sup: float
    admissible: bool
    audits: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    status: str = "converged"
    u: GridField | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def row(self, timing: bool = True) -> list[str]:
        """CSV cells in ``REPORT_HEADER`` order; timing can be blanked for reproducible files."""
        return [repr(self.h), repr(self.eps), str(self.iterations), repr(self.final_residual),
                repr(self.sup_second), repr(self.weighted_interior_sup),
                "true" if self.admissible else "false",
                f"{self.wall_time_s:.3f}" if timing else ""]


# ---------------------------------------------------------------------------
# linear algebra helpers

def _solve(A: sp.spmatrix, b: np.ndarray, tol: float) -> np.ndarray:
    A = A.tocsc()
    try:
        x = spla.spsolve(A, b)
        if np.all(np.isfinite(x)):
            return x
    except RuntimeError as exc:  # singular factor
        log.debug("direct solve failed: %s", exc)
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=200, maxiter=50, M=M)
    if info != 0 or not np.all(np.isfinite(x)):
        raise NumericalError(f"linear solve failed (gmres info={info})")
    return x


def _dirichlet_solve(domain: GridDomain, op: sp.csr_matrix, boundary: np.ndarray, rhs=None) -> np.ndarray:
    A_int, A_bnd = domain.split(op)
    b = -(A_bnd @ boundary)
    if rhs is not None:
        b = b + rhs
    return _solve(A_int, b, 1e-12)


def harmonic_majorant(spec: ProblemSpec) -> GridField:
    """Discrete harmonic function with the problem's boundary data."""
    dom = spec.domain
    interior = _dirichlet_solve(dom, dom.laplacian, spec.phi_boundary)
    return GridField(dom, np.concatenate([interior, spec.phi_boundary]))


def subsolution_init(spec: ProblemSpec, eps: float | None = None) -> GridField:
    """Strictly admissible starting guess below the solution.

    ``u0 = (K/2)(|x - c|^2 - R^2) + P_phi`` with ``P_phi`` the discrete
    harmonic extension of the boundary data and
    ``K = (2 max f / C(n,k))^{1/k} + 1``.  If the harmonic part spoils
    admissibility or ``sigma_k[D^2 u0] >= f + eps`` somewhere, ``K`` is
    doubled until both hold.

    Off the ball the bowl does not vanish on the boundary, so its discrete
    harmonic extension is subtracted first.  On a box this leaves a
    torsion-like profile that is not k-admissible near corners for k >= 2,
    and the scale search fails with :class:`ScaleError`.
    """
    dom = spec.domain
    n, k = dom.n, spec.k
    eps = spec.eps_schedule[0] if eps is None else eps
    fmax = float(np.max(spec.f_interior, initial=0.0)) + eps
    K = (2.0 * fmax / math.comb(n, k)) ** (1.0 / k) + 1.0
    if not math.isfinite(K):
        raise ScaleError(f"subsolution scale overflow (max f = {fmax:.3g})")
    harm = harmonic_majorant(spec)
    c = dom.shape.origin
    R = dom.shape.circumradius
    bowl = 0.5 * (np.sum((dom.interior_points - c) ** 2, axis=-1) - R * R)
    if not isinstance(dom.shape, Ball):
        bowl_b = 0.5 * (np.sum((dom.boundary_points - c) ** 2, axis=-1) - R * R)
        bowl = bowl - _dirichlet_solve(dom, dom.laplacian, bowl_b)
    target = spec.f_interior + eps
    for _ in range(64):
        vals = harm.values.copy()
        vals[: dom.n_interior] += K * bowl
        H = _hessian_array(dom, vals)
        lam = np.linalg.eigvalsh(H)
        member, _ = symfun.batch_cone_member(lam, k)
        if np.all(member) and np.all(symfun.sigma_minor(H, k) >= target):
            return GridField(dom, vals)
        K *= 2.0
        if not math.isfinite(K):
            break
    raise ScaleError(f"could not find an admissible subsolution scale on {dom.shape.describe()}")


# ---------------------------------------------------------------------------
# Newton

def _jacobian(dom: GridDomain, Fij: np.ndarray) -> sp.csr_matrix:
    n = dom.n
    ops = dom.hessian_ops
    J = None
    for (i, j), op in ops.items():
        w = Fij[:, i, j] if i == j else 2.0 * Fij[:, i, j]
        term = sp.diags(w) @ op[:, : dom.n_interior]
        J = term if J is None else J + term
    return J.tocsr()


def _newton_system(Fij, r, sig, target, k, mode):
    """Row-wise Newton model: root form ``F`` or power form ``sigma_k``.

    A root-form row asked to lower ``F`` by a large factor overshoots out of
    the cone (``F`` is concave), so in ``adaptive`` mode rows whose node sits
    above its target use the ``sigma_k`` linearization instead.  Both rows
    vanish at the same root.
    """
    if mode == "root":
        return Fij, r
    goal = target**k
    rows = np.ones_like(r, dtype=bool) if mode == "sigma" else sig > goal
    # sigma_k^{ij} = k sigma^{(k-1)/k} F^{ij}
    scale = np.where(rows, k * sig ** ((k - 1.0) / k), 1.0)
    rhs = np.where(rows, goal - sig, r)
    return Fij * scale[:, None, None], rhs


def _state(dom, vals, k, target, margin):
    H = _hessian_array(dom, vals)
    lam = np.linalg.eigvalsh(H)
    member, _ = symfun.batch_cone_member(lam - margin, k)
    return H, lam, member


def _collar_min_laplacian(dom: GridDomain, H: np.ndarray, width: float) -> float:
    d = dom.distance[: dom.n_interior]
    near = d <= width
    if not np.any(near):
        return math.nan
    return float(np.min(np.trace(H[near], axis1=-2, axis2=-1)))


def _report(spec, eps, u, H, res, iters, admissible, t0, status, opts):
    dom = spec.domain
    norms = spectral_norms(H)
    audits = {
        "collar_min_laplacian": AuditRecord(
            "collar_min_laplacian", True,
            {"min": _collar_min_laplacian(dom, H, opts.collar_width), "width": opts.collar_width}),
    }
    return SolveReport(
        eps=float(eps), h=dom.h, iterations=iters, final_residual=float(res),
        sup_second=float(np.max(norms)),
        weighted_interior_sup=float(np.max(dom.distance[: dom.n_interior] * norms)),
        admissible=bool(admissible), audits=audits, wall_time_s=time.perf_counter() - t0,
        status=status, u=u,
    )


def newton_solve(spec: ProblemSpec, eps: float, u_init: GridField,
                 opts: NewtonOptions = NewtonOptions()):
    """Solve the eps-regularized problem from an admissible start.

    Returns ``(report, u)``.  Raises :class:`SafeguardError` (carrying the
    report and last accepted iterate) when backtracking reaches the minimum
    step without finding an admissible trial point.
    """
    t0 = time.perf_counter()
    if not eps >= 0.0:
        raise ParameterError("eps must be nonnegative")
    dom = spec.domain
    if u_init.domain is not dom:
        raise DomainError("initial guess lives on a different grid")
    k = spec.k
    margin = opts.admissibility_margin
    vals = u_init.values.copy()
    vals[dom.n_interior:] = spec.phi_boundary
    target = spec.target(eps)
    tol = opts.residual_tol if opts.residual_tol is not None else 1e-9 * (1.0 + float(np.max(target)))

    H, lam, member = _state(dom, vals, k, target, margin)
    if not np.all(member):
        rep = _mask_from_spectra(lam - margin, k)
        raise AdmissibilityError(
            f"initial guess not admissible at node {rep.worst_node} "
            f"(sigma_{rep.worst_verdict.first_failing_j} <= 0)", rep.worst_verdict)
    sig, F, Fij = symfun.batch_operator(H, k)
    r = target - F
    res = float(np.max(np.abs(r)))
    iters = 0
    status = "max_iters"
    while True:
        if res <= tol:
            status = "converged"
            break
        if iters >= opts.max_iters:
            break
        W, rhs = _newton_system(Fij, r, sig, target, k, opts.linearization)
        delta = _solve(_jacobian(dom, W), rhs, opts.linear_solver_tol)
        s = 1.0
        accepted = False
        last_admissible = True
        while s >= opts.min_step:
            trial = vals.copy()
            trial[: dom.n_interior] += s * delta
            Ht, lamt, membert = _state(dom, trial, k, target, margin)
            last_admissible = bool(np.all(membert))
            if last_admissible:
                sigt, Ft, Fijt = symfun.batch_operator(Ht, k)
                rt = target - Ft
                rest = float(np.max(np.abs(rt)))
                if rest < res:
                    accepted = True
                    break
            s *= opts.backtrack
        if not accepted:
            if not last_admissible:
                report = _report(spec, eps, GridField(dom, vals), H, res, iters, False, t0,
                                 "safeguard", opts)
                raise SafeguardError(
                    f"admissibility lost at minimum step (eps={eps:g}, h={dom.h:g}, iter={iters})",
                    report=report, field=GridField(dom, vals))
            status = "stalled"
            break
        vals, H, sig, F, Fij, r, res = trial, Ht, sigt, Ft, Fijt, rt, rest
        iters += 1
        log.debug("eps=%g iter=%d step=%g residual=%.3e", eps, iters, s, res)
    u = GridField(dom, vals)
    return _report(spec, eps, u, H, res, iters, True, t0, status, opts), u


def continuation_solve(spec: ProblemSpec, opts: NewtonOptions = NewtonOptions(),
                       u_init: GridField | None = None) -> list[SolveReport]:
    """Solve along the eps schedule, warm-starting each stage.

    A safeguard failure ends the schedule; the failing stage's report (status
    ``"safeguard"``) is the last entry.
    """
    u = subsolution_init(spec) if u_init is None else u_init
    reports = []
    for eps in spec.eps_schedule:
        try:
            rep, u = newton_solve(spec, eps, u, opts)
        except SafeguardError as exc:
            log.warning("continuation stopped early: %s", exc)
            reports.append(exc.report)
            break
        reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# audits

def maximum_principle_audit(u: GridField, spec: ProblemSpec, lower: GridField | None = None,
                            upper: GridField | None = None) -> AuditRecord:
    """Check ``lower - tau <= u <= upper + tau`` with ``tau = 10 h^2 (1 + |u|_inf)``.

    Defaults: ``lower`` is :func:`subsolution_init`, ``upper`` the harmonic
    majorant.  Also records ``sup|u|`` and a one-sided gradient bound at the
    boundary.
    """
    dom = spec.domain
    lower = subsolution_init(spec) if lower is None else lower
    upper = harmonic_majorant(spec) if upper is None else upper
    tau = 10.0 * dom.h**2 * (1.0 + u.max_abs())
    below = lower.values - tau - u.values
    above = u.values - upper.values - tau
    violations = []
    for node in np.flatnonzero(below > 0.0):
        violations.append((int(node), "below_subsolution", float(below[node])))
    for node in np.flatnonzero(above > 0.0):
        violations.append((int(node), "above_harmonic", float(above[node])))
    links = dom.boundary_links
    if len(links):
        grad_b = float(np.max(np.abs(u.values[links[:, 1]] - u.values[links[:, 0]]) / dom.link_lengths))
    else:
        grad_b = math.nan
    return AuditRecord(
        "maximum_principle", not violations,
        {"tau": tau, "sup_abs_u": u.max_abs(), "boundary_gradient": grad_b,
         "c1_quantity": u.max_abs() + grad_b},
        tuple(sorted(violations)),
    )


def solution_error(u: GridField, exact: AnalyticField) -> float:
    """Max-norm nodal error against an exact solution."""
    return float(np.max(np.abs(u.values - exact(u.domain.points))))
