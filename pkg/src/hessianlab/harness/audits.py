"""Post-solve audits built on the normalized linearization ``G = F^{ij} / tr F^{ij}``.

Hard assertions are limited to facts that hold exactly for any admissible
Hessian (Euler identity, unit trace of ``G``, the barrier value ``-t``).
Everything that depends on an unknown constant is recorded as a measured
extremum and never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import symfun
from ..disc import Ball, GridField, fd_hessian, spectral_norms
from ..errors import AdmissibilityError, UnsupportedDomainError
from ..solver import AuditRecord, ProblemSpec

__all__ = ["AuditBundle", "STATEMENTS", "barrier_audit", "g_diagnostics", "audit_tolerance"]

# quantity -> (role, statement); role "asserted" means a hard check
STATEMENTS = {
    "trace_F_min": ("asserted", "tr F^{ij} > 0 at admissible nodes"),
    "g_unit_trace_dev": ("asserted", "tr G = 1 by construction"),
    "euler_dev": ("asserted", "tr(G D^2u) = k sigma_k / ((n-k+1) sigma_{k-1}) (Euler identity)"),
    "g_trace_min": ("asserted", "tr(G D^2u) >= -tau (nonnegative by the Euler identity)"),
    "g_trace_max": ("recorded", "K in 0 <= tr(G D^2u) <= K"),
    "trace_lower_const": ("recorded",
                          "C in tr F^{ij} >= (1/C) max{1, sigma_1^{1/(k-1)} f^{-1/(k(k-1))}}"),
    "dir_first_ratio": ("recorded", "K in |tr(G D^2u_xi)| <= K |xi| sigma_1^{-1/(k-1)}"),
    "dir_second_ratio": ("recorded", "K in tr(G D^2u_xixi) >= -K |xi|^2 sigma_1^{-1/(k-1)}"),
    "barrier_max": ("asserted", "tr(G D^2psi) = -t <= -1 for psi = t(R^2-|x|^2)/2"),
    "collar_min_laplacian": ("recorded", "delta_0 in Laplacian u >= delta_0 on a boundary collar"),
    "weighted_interior_sup": ("recorded", "sup d(x) |D^2u(x)| over interior nodes"),
}


def audit_tolerance(u: GridField) -> float:
    """Sandwich/sign tolerance ``10 h^2 (1 + |u|_inf)``."""
    return 10.0 * u.domain.h ** 2 * (1.0 + u.max_abs())


def _admissible_operator(u: GridField, k: int):
    H = fd_hessian(u).matrices
    lam = np.linalg.eigvalsh(H)
    member, _ = symfun.batch_cone_member(lam, k)
    sig, F, Fij = symfun.batch_operator(H, k)
    ok = member & (sig > 0.0)
    return H, lam, ok, sig, Fij


def barrier_audit(u: GridField, spec: ProblemSpec, t: float = 2.0) -> AuditRecord:
    """Evaluate ``tr(G_h D^2_h psi)`` for ``psi = t (R^2 - |x - c|^2) / 2`` on a ball.

    ``G_h`` comes from the discrete Hessian of ``u``.  Since ``D^2 psi = -t I``
    and ``tr G = 1`` the exact value is ``-t`` at every node.
    """
    dom = spec.domain
    shape = dom.shape
    if not isinstance(shape, Ball):
        raise UnsupportedDomainError(f"barrier audit needs a ball, got {shape.describe()}")
    R, c = shape.radius, shape.origin
    t = float(t)
    psi_vals = 0.5 * t * (R * R - np.sum((dom.points - c) ** 2, axis=-1))
    psi = GridField(dom, psi_vals)
    Hpsi = fd_hessian(psi).matrices

    _, _, ok, _, Fij = _admissible_operator(u, spec.k)
    if not np.any(ok):
        raise AdmissibilityError("no admissible node to audit")
    G = Fij[ok] / np.trace(Fij[ok], axis1=-2, axis2=-1)[:, None, None]
    tr = np.einsum("mij,mij->m", G, Hpsi[ok])
    dev = np.abs(tr + t)
    bound = -1.0 + 10.0 * dom.h
    nodes = np.flatnonzero(ok)

    violations = []
    for i in np.flatnonzero(dev > 1e-8):
        violations.append((int(nodes[i]), "barrier_value", float(dev[i])))
    for i in np.flatnonzero(tr > bound):
        violations.append((int(nodes[i]), "barrier_bound", float(tr[i] - bound)))
    n_int = dom.n_interior
    psi_in_min = float(np.min(psi_vals[:n_int]))
    psi_bd = float(np.max(np.abs(psi_vals[n_int:]), initial=0.0))
    grad_bd = t * np.linalg.norm(dom.boundary_points - c, axis=-1)
    grad_dev = float(np.max(np.abs(grad_bd - t * R), initial=0.0))
    scale = 1e-12 * max(1.0, t * R * R)
    shape_ok = psi_in_min > 0.0 and psi_bd <= scale and grad_dev <= scale * max(1.0, R)
    if t * R >= 1.0 and grad_dev <= scale * max(1.0, R):
        grad_ok = bool(np.all(grad_bd >= 1.0 - scale))
    else:
        grad_ok = t * R < 1.0  # only claimed for t >= 1/R
    skipped = int(np.count_nonzero(~ok))
    passed = not violations and shape_ok and skipped == 0
    return AuditRecord(
        "barrier", passed,
        {"t": t, "max_trace": float(np.max(tr)), "min_trace": float(np.min(tr)),
         "max_dev": float(np.max(dev)), "bound": bound, "psi_interior_min": psi_in_min,
         "psi_boundary_max_abs": psi_bd, "boundary_gradient_dev": grad_dev,
         "boundary_gradient_ge_1": grad_ok, "skipped": skipped},
        tuple(sorted(violations)),
    )


@dataclass(frozen=True)
class AuditBundle:
    values: dict
    evaluated: int
    skipped: int
    failures: tuple = ()
    barrier: AuditRecord | None = None

    @property
    def passed(self) -> bool:
        return not self.failures and (self.barrier is None or self.barrier.passed)

    def rows(self) -> list[tuple]:
        """(quantity, value, role, statement) in a fixed order."""
        out = []
        for key, (role, text) in STATEMENTS.items():
            if key in self.values:
                out.append((key, self.values[key], role, text))
        return out


def _axis_differences(H: np.ndarray, nb: np.ndarray, h: float, valid: np.ndarray):
    """Central differences of a nodal matrix field along each axis."""
    n = nb.shape[1]
    d = np.full((n,) + H.shape, np.nan)
    ok = np.zeros((n, len(H)), dtype=bool)
    for a in range(n):
        m, p = nb[:, a, 0], nb[:, a, 1]
        good = (m >= 0) & (p >= 0) & valid
        good[good] &= valid[m[good]] & valid[p[good]]
        d[a, good] = (H[p[good]] - H[m[good]]) / (2.0 * h)
        ok[a] = good
    return d, ok


def g_diagnostics(u: GridField, spec: ProblemSpec, xi=None, eps: float | None = None,
                  collar_width: float = 0.1, barrier_t: float | None = 2.0) -> AuditBundle:
    """Structural diagnostics of an admissible discrete solution.

    ``xi`` is an array of directions (rows, normalized here); the default is
    the coordinate axes.  Third and fourth derivatives are taken as central
    differences of the discrete Hessian field, so nodes within two cells of
    the boundary drop out of those two ratios.  ``eps`` is the
    regularization of the stage that produced ``u`` (default: last of the
    schedule).
    """
    dom = spec.domain
    n, k, h = dom.n, spec.k, dom.h
    eps = spec.eps_schedule[-1] if eps is None else float(eps)
    xi = np.eye(n) if xi is None else np.atleast_2d(np.asarray(xi, dtype=float))
    xi = xi / np.linalg.norm(xi, axis=-1, keepdims=True)

    H, lam, ok, sig, Fij = _admissible_operator(u, k)
    evaluated = int(np.count_nonzero(ok))
    skipped = len(ok) - evaluated
    if evaluated == 0:
        raise AdmissibilityError("no admissible node to audit")
    tau = audit_tolerance(u)
    vals: dict = {"tau": tau}
    failures = []

    trF = np.trace(Fij[ok], axis1=-2, axis2=-1)
    G = Fij[ok] / trF[:, None, None]
    vals["trace_F_min"] = float(np.min(trF))
    if not vals["trace_F_min"] > 0.0:
        failures.append("trace_F_min")
    vals["g_unit_trace_dev"] = float(np.max(np.abs(np.trace(G, axis1=-2, axis2=-1) - 1.0)))
    if vals["g_unit_trace_dev"] > 1e-12:
        failures.append("g_unit_trace_dev")

    trGH = np.einsum("mij,mij->m", G, H[ok])
    esf = symfun.sigma_elem(lam[ok], k)
    esf_prev = symfun.sigma_elem(lam[ok], k - 1)
    euler = k * esf / ((n - k + 1) * esf_prev)
    vals["euler_dev"] = float(np.max(np.abs(trGH - euler) / np.maximum(1.0, np.abs(euler))))
    if vals["euler_dev"] > 1e-9:
        failures.append("euler_dev")
    vals["g_trace_min"] = float(np.min(trGH))
    vals["g_trace_max"] = float(np.max(trGH))
    if vals["g_trace_min"] < -tau:
        failures.append("g_trace_min")

    s1 = lam[ok].sum(axis=-1)
    fe = spec.f_interior[ok] + eps
    lower = np.maximum(1.0, s1 ** (1.0 / (k - 1)) * fe ** (-1.0 / (k * (k - 1))))
    vals["trace_lower_const"] = float(np.max(lower / trF))

    # third and fourth differences of u through the Hessian field
    Hn = np.where(ok[:, None, None], H, np.nan)
    nb = dom.axis_neighbors
    dH, ok1 = _axis_differences(Hn, nb, h, ok)
    first_ok = ok1.all(axis=0)
    d2 = np.full((n, n) + H.shape, np.nan)
    ok2 = np.zeros((n, n, len(H)), dtype=bool)
    for a in range(n):
        m, p = nb[:, a, 0], nb[:, a, 1]
        good = ok1[a] & (m >= 0) & (p >= 0)
        good[good] &= ok[m[good]] & ok[p[good]]
        d2[a, a, good] = (Hn[p[good]] - 2.0 * Hn[good] + Hn[m[good]]) / h**2
        ok2[a, a] = good
        db, okb = _axis_differences(dH[a], nb, h, ok1[a])
        for b in range(n):
            if b == a:
                continue
            d2[a, b] = db[b]
            ok2[a, b] = okb[b]
    second_ok = ok2.all(axis=(0, 1))
    sym2 = 0.5 * (d2 + d2.transpose(1, 0, 2, 3, 4))

    Gfull = np.full(H.shape, np.nan)
    Gfull[ok] = G
    s1full = np.full(len(H), np.nan)
    s1full[ok] = s1
    weight = s1full ** (1.0 / (k - 1))
    first, second = [], []
    for e in xi:
        if np.any(first_ok):
            Du = np.einsum("a,amij->mij", e, dH[:, first_ok])
            first.append(np.abs(np.einsum("mij,mij->m", Gfull[first_ok], Du)) * weight[first_ok])
        if np.any(second_ok):
            D2u = np.einsum("a,b,abmij->mij", e, e, sym2[:, :, second_ok])
            second.append(-np.einsum("mij,mij->m", Gfull[second_ok], D2u) * weight[second_ok])
    vals["dir_first_ratio"] = float(np.max(np.concatenate(first))) if first else math.nan
    vals["dir_second_ratio"] = float(np.max(np.concatenate(second))) if second else math.nan
    vals["dir_first_nodes"] = int(np.count_nonzero(first_ok))
    vals["dir_second_nodes"] = int(np.count_nonzero(second_ok))

    d = dom.distance[: dom.n_interior]
    near = d <= collar_width
    lap = np.trace(H, axis1=-2, axis2=-1)
    vals["collar_min_laplacian"] = float(np.min(lap[near])) if np.any(near) else math.nan
    vals["collar_width"] = float(collar_width)
    vals["weighted_interior_sup"] = float(np.max(d * spectral_norms(H)))

    barrier = None
    if barrier_t is not None and isinstance(dom.shape, Ball):
        barrier = barrier_audit(u, spec, barrier_t)
        vals["barrier_max"] = barrier.values["max_trace"]
    return AuditBundle(vals, evaluated, skipped, tuple(failures), barrier)
