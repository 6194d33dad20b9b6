"""Experiment suites: solve, sharpness, probe and kernel.

Each suite turns a config block into independent row tasks.  Tasks carry
only the config text and block name (plus a row index), so they can run in
worker processes; results are assembled in config order, which keeps the
CSV output independent of ``--jobs``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import symfun
from ..disc import Ball, Box, build_domain, fd_hessian, spectral_norms, write_dump
from ..errors import ConfigError, HessianLabError, NumericalError, SafeguardError
from ..fields import (ExponentProfile, REGIMES, c11_quotient_sup, c21_defect_inf, lattice_samples,
                      power_transform, stable, threshold_classify, wang_field)
from ..solver import (NewtonOptions, ProblemSpec, continuation_solve, maximum_principle_audit,
                      newton_solve, solution_error, subsolution_init)
from .audits import g_diagnostics
from .config import Block, as_vector

__all__ = ["SuiteResult", "RowResult", "validate_block", "run_block", "SOLVE_HEADER",
           "SHARPNESS_HEADER", "PROBE_HEADER", "KERNEL_HEADER", "AUDIT_HEADER", "fmt"]

SOLVE_HEADER = ("case", "h", "eps", "iters", "residual", "sup_second", "weighted_sup", "admissible",
                "wall_time_s", "status", "stages", "total_iters", "max_error", "error_ratio",
                "sandwich_violations", "barrier_max_dev")
SHARPNESS_HEADER = ("beta", "h", "eps_min", "sup_second", "growth", "window_sup", "window_growth",
                    "classification", "status")
PROBE_HEADER = ("entry", "field", "regime", "p", "collar", "density", "samples",
                "sup_c11_quotient", "inf_c21_defect", "growth", "stable", "status")
KERNEL_HEADER = ("n", "k", "check", "samples", "value", "tolerance", "passed")
AUDIT_HEADER = ("case", "h", "quantity", "value", "role", "statement")


def fmt(x) -> str:
    """Stable text form of a CSV cell."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return "" if x is None else str(x)


@dataclass
class RowResult:
    rows: list = field(default_factory=list)
    audits: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    numerical: list = field(default_factory=list)
    dumps: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)


@dataclass
class SuiteResult:
    block: str
    suite: str
    header: tuple
    rows: list
    failures: list
    numerical: list
    plots: dict = field(default_factory=dict)  # name -> (m, 2) array; columns named in plot_axes
    plot_axes: dict = field(default_factory=dict)
    audits: list = field(default_factory=list)
    dumps: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and not self.numerical


# ---------------------------------------------------------------------------
# plans: parsed, validated block parameters

def _shape(b: Block):
    kind = b.text("shape", "ball")
    n = b.integer("n", 2)
    if n < 1:
        raise ConfigError(f"{b.key('n')}: dimension must be positive", b.key("n"))
    center = b.numbers("center")
    center = None if center is None else as_vector(center, n, b.key("center"))
    try:
        if kind == "ball":
            return Ball(b.number("radius", 1.0), n, center)
        if kind == "box":
            hw = as_vector(b.numbers("halfwidths", (1.0,)), n, b.key("halfwidths"))
            return Box(tuple(hw), center)
    except HessianLabError as exc:
        raise ConfigError(f"{b.key('shape')}: {exc}", b.key("shape")) from None
    raise ConfigError(f"{b.key('shape')}: unknown shape {kind!r} (ball or box)", b.key("shape"))


def _h_list(b: Block):
    hs = b.numbers("h", required=True)
    if not hs or any(not h > 0 for h in hs):
        raise ConfigError(f"{b.key('h')}: mesh widths must be positive", b.key("h"))
    if any(b2 >= a for a, b2 in zip(hs, hs[1:])):
        raise ConfigError(f"{b.key('h')}: h list must be strictly decreasing", b.key("h"))
    return hs


def _eps(b: Block):
    eps = b.numbers("eps", (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8))
    if eps == (0.0,):
        return eps
    if any(not e > 0 for e in eps) or any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ConfigError(f"{b.key('eps')}: schedule must be positive and strictly decreasing "
                          "(or the single value 0 for a direct solve)", b.key("eps"))
    return eps


def _options(b: Block):
    kw = {}
    if b.has("max_iters"):
        kw["max_iters"] = b.integer("max_iters")
    if b.has("residual_tol"):
        kw["residual_tol"] = b.number("residual_tol")
    if b.has("linearization"):
        kw["linearization"] = b.text("linearization")
    kw["collar_width"] = b.number("collar", 0.1)
    try:
        return NewtonOptions(**kw)
    except HessianLabError as exc:
        raise ConfigError(f"{b.name}: {exc}", b.key("linearization")) from None


def _k(b: Block, n):
    k = b.integer("k", 2)
    if not 2 <= k <= n:
        raise ConfigError(f"{b.key('k')}: need 2 <= k <= n = {n}, got {k}", b.key("k"))
    return k


@dataclass
class SolvePlan:
    shape: object
    hs: tuple
    k: int
    f: object
    phi: object
    exact: object
    eps: tuple
    gap: float
    opts: NewtonOptions
    barrier_t: float
    audit_dirs: int
    dump: bool
    asserts: dict


def _solve_plan(b: Block) -> SolvePlan:
    shape = _shape(b)
    n = shape.n
    asserts = {}
    if b.has("assert.max_iters"):
        asserts["max_iters"] = b.integer("assert.max_iters")
    for key in ("max_residual", "max_error"):
        if b.has(f"assert.{key}"):
            asserts[key] = b.number(f"assert.{key}")
    for key in ("error_ratio", "sup_second"):
        if b.has(f"assert.{key}"):
            v = b.numbers(f"assert.{key}")
            if len(v) != 2:
                raise ConfigError(f"{b.key('assert.' + key)}: expected two numbers", b.key("assert." + key))
            asserts[key] = v
    asserts["sandwich"] = b.flag("assert.sandwich", True)
    asserts["structure"] = b.flag("assert.structure", True)
    return SolvePlan(
        shape=shape, hs=_h_list(b), k=_k(b, n), f=b.field("f", n), phi=b.field("phi", n),
        exact=b.field("exact", n, required=False), eps=_eps(b), gap=b.number("gap", 0.1),
        opts=_options(b), barrier_t=b.number("barrier_t", 2.0),
        audit_dirs=b.integer("audit_dirs", 2), dump=b.flag("dump", False), asserts=asserts,
    )


@dataclass
class SharpnessPlan:
    shape: object
    hs: tuple
    k: int
    alpha: float
    betas: tuple
    phi: object
    eps: tuple
    gap: float
    opts: NewtonOptions
    window: float
    growth_min: float | None
    variation_max: float | None


def _sharpness_plan(b: Block) -> SharpnessPlan:
    shape = _shape(b)
    n = shape.n
    alpha = b.number("alpha", required=True)
    betas = b.numbers("beta", ())
    if not betas:
        raise ConfigError(f"{b.key('beta')}: beta list is empty", b.key("beta"))
    k = _k(b, n)
    for beta in betas:
        try:
            wang_field(alpha, beta, n)
            threshold_classify(alpha, beta, k)
        except HessianLabError as exc:
            raise ConfigError(f"{b.key('beta')}: {exc}", b.key("beta")) from None
    eps = _eps(b)
    if eps == (0.0,):
        raise ConfigError(f"{b.key('eps')}: sharpness sweeps need a positive schedule", b.key("eps"))
    return SharpnessPlan(
        shape=shape, hs=_h_list(b), k=k, alpha=alpha, betas=betas,
        phi=b.field("phi", n, required=False) or _zero(n), eps=eps, gap=b.number("gap", 0.1),
        opts=_options(b), window=b.number("window", 0.25),
        growth_min=b.number("assert.growth_min"), variation_max=b.number("assert.variation_max"),
    )


def _zero(n):
    from ..fields import constant
    return constant(0.0, n)


@dataclass
class ProbeEntry:
    name: str
    field_text: str
    g: object
    n: int
    lo: np.ndarray
    hi: np.ndarray
    regime: str
    p: float
    alpha: float
    collars: tuple
    sampler: str
    cusp_alpha: float
    asserts: dict


@dataclass
class ProbePlan:
    densities: tuple
    entries: list


def _probe_plan(b: Block) -> ProbePlan:
    dens = tuple(int(d) for d in b.numbers("densities", (201, 401)))
    if len(dens) != 2 or min(dens) < 2:
        raise ConfigError(f"{b.key('densities')}: need two sample densities >= 2", b.key("densities"))
    names = b.names("entries", required=True)
    if not names:
        raise ConfigError(f"{b.key('entries')}: no probe entries", b.key("entries"))
    entries = []
    for e in names:
        lo = b.numbers(f"{e}.lo", required=True)
        hi = b.numbers(f"{e}.hi", required=True)
        n = len(lo)
        if len(hi) != n or any(a >= c for a, c in zip(lo, hi)):
            raise ConfigError(f"{b.key(e + '.hi')}: box bounds must match and satisfy lo < hi",
                              b.key(f"{e}.hi"))
        f = b.field(f"{e}.field", n)
        regime = b.text(f"{e}.regime", "none")
        p = 1.0
        if regime != "none":
            if regime not in REGIMES:
                raise ConfigError(f"{b.key(e + '.regime')}: unknown regime {regime!r}", b.key(f"{e}.regime"))
            try:
                p = ExponentProfile(b.integer(f"{e}.k", 2), regime).p
            except HessianLabError as exc:
                raise ConfigError(f"{b.key(e + '.k')}: {exc}", b.key(f"{e}.k")) from None
        g = f if p == 1.0 else power_transform(f, 1.0 / p)
        sampler = b.text(f"{e}.sampler", "lattice")
        if sampler not in ("lattice", "cusp"):
            raise ConfigError(f"{b.key(e + '.sampler')}: unknown sampler {sampler!r}", b.key(f"{e}.sampler"))
        if sampler == "cusp" and n != 2:
            raise ConfigError(f"{b.key(e + '.sampler')}: cusp sampler is planar", b.key(f"{e}.sampler"))
        collars = b.numbers(f"{e}.collar", (0.0,))
        asserts = {}
        if b.has(f"{e}.assert.sup"):
            v = b.numbers(f"{e}.assert.sup")
            if len(v) != 2:
                raise ConfigError(f"{b.key(e + '.assert.sup')}: expected value, tolerance", b.key(f"{e}.assert.sup"))
            asserts["sup"] = v
        if b.has(f"{e}.assert.c21_nonneg"):
            asserts["c21_nonneg"] = b.flag(f"{e}.assert.c21_nonneg")
        if b.has(f"{e}.assert.growth_min"):
            asserts["growth_min"] = b.number(f"{e}.assert.growth_min")
        if b.has(f"{e}.assert.stable"):
            asserts["stable"] = b.flag(f"{e}.assert.stable")
        alpha = b.number(f"{e}.alpha", 1.0 / 3.0)
        if not alpha < 0.5:
            raise ConfigError(f"{b.key(e + '.alpha')}: must be below 1/2", b.key(f"{e}.alpha"))
        entries.append(ProbeEntry(
            name=e, field_text=b.raw[f"{e}.field"], g=g, n=n, lo=np.asarray(lo), hi=np.asarray(hi),
            regime=regime, p=p, alpha=alpha, collars=collars, sampler=sampler,
            cusp_alpha=b.number(f"{e}.cusp_alpha", 4.0), asserts=asserts))
    return ProbePlan(dens, entries)


@dataclass
class KernelPlan:
    ns: tuple
    samples: int
    grad_samples: int
    pairs: int
    tol: dict


def _kernel_plan(b: Block) -> KernelPlan:
    ns = tuple(int(v) for v in b.numbers("n", (2, 3, 4)))
    if any(not 1 <= v <= 4 for v in ns):
        raise ConfigError(f"{b.key('n')}: dimensions must lie in 1..4", b.key("n"))
    tol = {
        "dual_route": b.number("tol.dual_route", 1e-10),
        "trace_identity": b.number("tol.trace_identity", 1e-9),
        "operator_gradient": b.number("tol.operator_gradient", 1e-6),
        "concavity": b.number("tol.concavity", 1e-12),
    }
    return KernelPlan(ns, b.integer("samples", 1000), b.integer("grad_samples", 200),
                      b.integer("pairs", 500), tol)


_PLANNERS = {"solve": _solve_plan, "sharpness": _sharpness_plan, "probe": _probe_plan,
             "kernel": _kernel_plan}


def plan_block(b: Block):
    return _PLANNERS[b.suite](b)


def validate_block(b: Block):
    """Parse every key of a block; unknown keys are reported by name."""
    plan = plan_block(b)
    extra = b.unused()
    if extra:
        raise ConfigError(f"unknown key {extra[0]} for a {b.suite} block", extra[0])
    return plan


# ---------------------------------------------------------------------------
# row tasks (run in workers)

@dataclass(frozen=True)
class RowTask:
    text: str
    source: str
    block: str
    seed: int
    key: object
    timing: bool


def _plan_from(task: RowTask):
    from .config import parse_config
    cfg = parse_config(task.text, task.source)
    cfg.seed = task.seed
    block = next(b for b in cfg.blocks if b.name == task.block)
    return cfg, plan_block(block)


def _cells(header, **values):
    return [values.get(col, "") for col in header]


def _solve_row(task) -> RowResult:
    cfg, plan = _plan_from(task)
    bname, idx, timing = task.block, task.key, task.timing
    h = plan.hs[idx]
    out = RowResult()
    dom = build_domain(plan.shape, h, plan.gap)
    direct = plan.eps == (0.0,)
    spec = ProblemSpec(dom, plan.k, plan.f, plan.phi, (1e-1,) if direct else plan.eps)
    try:
        if direct:
            rep, u = newton_solve(spec, 0.0, subsolution_init(spec, 0.0), plan.opts)
            reports = [rep]
        else:
            reports = continuation_solve(spec, plan.opts)
            u = reports[-1].u
    except HessianLabError as exc:
        out.numerical.append(f"{bname} h={h:g}: {exc}")
        out.rows.append(_cells(SOLVE_HEADER, case=bname, h=fmt(h), status="error"))
        return out
    last = reports[-1]
    if not last.converged:
        out.numerical.append(f"{bname} h={h:g}: final stage {last.status} at eps={last.eps:g}")
    err = solution_error(u, plan.exact) if plan.exact is not None else math.nan
    out.data = {"h": h, "error": err, "iters": last.iterations, "residual": last.final_residual,
                "sup_second": last.sup_second}

    mp = maximum_principle_audit(u, spec)
    rng = np.random.default_rng([cfg.seed, idx])
    dirs = np.eye(dom.n)
    if plan.audit_dirs > 0:
        extra = rng.standard_normal((plan.audit_dirs, dom.n))
        dirs = np.vstack([dirs, extra / np.linalg.norm(extra, axis=-1, keepdims=True)])
    bundle = None
    barrier_dev = math.nan
    if last.admissible:
        try:
            bundle = g_diagnostics(u, spec, dirs, eps=last.eps, collar_width=plan.opts.collar_width,
                                   barrier_t=plan.barrier_t if isinstance(dom.shape, Ball) else None)
        except HessianLabError as exc:
            out.numerical.append(f"{bname} h={h:g}: diagnostics failed: {exc}")
    if bundle is not None:
        for q, v, role, text in bundle.rows():
            out.audits.append([bname, fmt(h), q, fmt(v), role, text])
        out.audits.append([bname, fmt(h), "skipped_nodes", fmt(bundle.skipped), "recorded",
                           "inadmissible nodes left out of the diagnostics"])
        if bundle.barrier is not None:
            barrier_dev = bundle.barrier.values["max_dev"]
        if plan.asserts["structure"] and not bundle.passed:
            why = list(bundle.failures)
            if bundle.barrier is not None and not bundle.barrier.passed:
                why.append("barrier")
            out.failures.append(f"{bname} h={h:g}: structural audit failed ({', '.join(why)})")
    for q in ("tau", "sup_abs_u", "boundary_gradient", "c1_quantity"):
        out.audits.append([bname, fmt(h), f"sandwich_{q}", fmt(mp.values[q]), "recorded",
                           "lower - tau <= u <= harmonic majorant + tau"])
    out.audits.append([bname, fmt(h), "sandwich_violations", fmt(len(mp.violations)), "asserted",
                       "lower - tau <= u <= harmonic majorant + tau"])
    if plan.asserts["sandwich"] and not mp.passed:
        out.failures.append(f"{bname} h={h:g}: {len(mp.violations)} sandwich violation(s), "
                            f"first at node {mp.violations[0][0]} ({mp.violations[0][1]})")
    if plan.dump:
        import io
        buf = io.StringIO()
        write_dump(u, buf)
        out.dumps[f"{bname}_h{idx}.dump"] = buf.getvalue()

    row = last.row(timing=timing)
    out.rows.append([bname] + row + [last.status, fmt(len(reports)),
                                     fmt(sum(r.iterations for r in reports)), fmt(err), "",
                                     fmt(len(mp.violations)), fmt(barrier_dev)])
    return out


def _window_sup(u, radius):
    dom = u.domain
    norms = spectral_norms(fd_hessian(u).matrices)
    r = np.linalg.norm(dom.interior_points - dom.shape.origin, axis=-1)
    near = r < radius
    return float(np.max(norms[near])) if np.any(near) else math.nan


def _sharpness_row(task) -> RowResult:
    cfg, plan = _plan_from(task)
    bname, (ib, ih) = task.block, task.key
    beta, h = plan.betas[ib], plan.hs[ih]
    out = RowResult()
    dom = build_domain(plan.shape, h, plan.gap)
    n = dom.n
    spec = ProblemSpec(dom, plan.k, wang_field(plan.alpha, beta, n), plan.phi, plan.eps)
    try:
        reports = continuation_solve(spec, plan.opts)
    except HessianLabError as exc:
        out.numerical.append(f"{bname} beta={beta:g} h={h:g}: {exc}")
        out.data = {"beta": beta, "h": h, "sup": math.nan, "window": math.nan, "status": "error"}
        return out
    good = [r for r in reports if r.converged]
    last = reports[-1]
    status = last.status
    if status != "converged" or len(reports) < len(plan.eps):
        out.numerical.append(f"{bname} beta={beta:g} h={h:g}: stopped at eps={last.eps:g} ({status})")
    ref = good[-1] if good else last
    out.data = {"beta": beta, "h": h, "eps_min": ref.eps, "sup": ref.sup_second,
                "window": _window_sup(ref.u, plan.window), "status": status}
    return out


def _probe_points(e: ProbeEntry, collar: float, density: int) -> np.ndarray:
    lo = e.lo.copy()
    lo[0] += collar
    if e.sampler == "lattice":
        return lattice_samples(lo, e.hi, density)
    x1 = np.linspace(lo[0], e.hi[0], density)
    t = np.linspace(-1.0, 1.0, density + 2)[1:-1]
    X, T = np.meshgrid(x1, t, indexing="ij")
    return np.stack([X.ravel(), (T * np.abs(X) ** e.cusp_alpha).ravel()], axis=-1)


def _probe_row(task) -> RowResult:
    cfg, plan = _plan_from(task)
    bname, ie = task.block, task.key
    e = plan.entries[ie]
    out = RowResult()
    prev = None
    sups = []
    for collar in e.collars:
        per = []
        for dens in plan.densities:
            pts = _probe_points(e, collar, dens)
            try:
                q = c11_quotient_sup(e.g, pts).sup_c11_quotient
                d = c21_defect_inf(e.g, e.alpha, pts, seed=cfg.seed).inf_c21_defect
                status = "ok"
            except HessianLabError as exc:
                q = d = math.nan
                status = f"error: {exc}"
                out.numerical.append(f"{bname}.{e.name} collar={collar:g}: {exc}")
            per.append((dens, len(pts), q, d, status))
        q_lo, q_hi = per[0][2], per[1][2]
        flag = stable(q_lo, q_hi)
        growth = q_hi / prev if prev is not None and prev > 0 else math.nan
        if prev is not None:
            flag = flag and stable(prev, q_hi)
        for dens, count, q, d, status in per:
            out.rows.append([e.name, e.field_text, e.regime, fmt(e.p), fmt(collar), fmt(dens),
                             fmt(count), fmt(q), fmt(d), fmt(growth), fmt(flag), status])
        sups.append((collar, q_hi, min(per[0][3], per[1][3]), flag, growth))
        prev = q_hi
    out.data = {"entry": e.name, "sups": sups}

    a = e.asserts
    for collar, q, dmin, flag, growth in sups:
        if "sup" in a and not abs(q - a["sup"][0]) <= a["sup"][1]:
            out.failures.append(f"{bname}.{e.name} collar={collar:g}: sup quotient {q!r} "
                                f"not within {a['sup'][1]:g} of {a['sup'][0]:g}")
        if a.get("c21_nonneg") and not dmin >= 0.0:
            out.failures.append(f"{bname}.{e.name} collar={collar:g}: C21 defect inf {dmin!r} < 0")
        if "growth_min" in a and not math.isnan(growth) and not growth >= a["growth_min"]:
            out.failures.append(f"{bname}.{e.name} collar={collar:g}: growth {growth:.4g} "
                                f"< {a['growth_min']:g}")
    if "stable" in a:
        final = sups[-1][3]
        if final != a["stable"]:
            out.failures.append(f"{bname}.{e.name}: stability flag {final} (expected {a['stable']})")
    return out


def _admissible_samples(rng, n, k, count):
    """Random symmetric matrices with spectra in the cone, away from its edge."""
    out = []
    while len(out) < count:
        lam = rng.standard_normal((4 * count, n)) + 1.0
        member, _ = symfun.batch_cone_member(lam, k)
        sk = symfun.sigma_elem(lam, k)
        keep = member & (sk > 0.05)
        for v in lam[keep][: count - len(out)]:
            Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            out.append((Q * v) @ Q.T)
    return np.array(out)


def _kernel_row(task) -> RowResult:
    cfg, plan = _plan_from(task)
    bname, (n, k) = task.block, task.key
    rng = np.random.default_rng([cfg.seed, n, k])
    out = RowResult()
    tol = plan.tol

    A = rng.standard_normal((plan.samples, n, n))
    A = 0.5 * (A + A.transpose(0, 2, 1))
    minor = symfun.sigma_minor(A, k)
    eig = symfun.sigma_elem(np.linalg.eigvalsh(A), k)
    dual = float(np.max(np.abs(minor - eig) / np.maximum(1.0, np.abs(eig))))
    checks = [("dual_route", plan.samples, dual, dual <= tol["dual_route"])]

    lhs = np.trace(symfun.sigma_grad_matrix(A, k), axis1=-2, axis2=-1)
    prev = symfun.sigma_minor(A, k - 1) if k > 1 else np.ones(plan.samples)
    trace = float(np.max(np.abs(lhs - (n - k + 1) * prev) / np.maximum(1.0, np.abs(prev))))
    checks.append(("trace_identity", plan.samples, trace, trace <= tol["trace_identity"]))

    S = _admissible_samples(rng, n, k, plan.grad_samples)
    _, _, Fij = symfun.batch_operator(S, k)
    delta = 1e-5
    fd = np.zeros_like(Fij)
    for i, j in itertools.product(range(n), repeat=2):
        if j < i:
            continue
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        _, Fp, _ = symfun.batch_operator(S + delta * E, k, grad=False)
        _, Fm, _ = symfun.batch_operator(S - delta * E, k, grad=False)
        d = (Fp - Fm) / (2.0 * delta)
        if i == j:
            fd[:, i, i] = d
        else:
            fd[:, i, j] = fd[:, j, i] = 0.5 * d
    grad = float(np.max(np.linalg.norm(fd - Fij, axis=(1, 2)) / np.linalg.norm(Fij, axis=(1, 2))))
    checks.append(("operator_gradient", plan.grad_samples, grad, grad <= tol["operator_gradient"]))

    P = _admissible_samples(rng, n, k, 2 * plan.pairs)
    theta = rng.uniform(0.0, 1.0, plan.pairs)
    wit = min(symfun.concavity_witness(P[2 * m], P[2 * m + 1], theta[m], k) for m in range(plan.pairs))
    checks.append(("concavity", plan.pairs, float(wit), wit >= -tol["concavity"]))

    for name, count, value, ok in checks:
        out.rows.append([fmt(n), fmt(k), name, fmt(count), fmt(value), fmt(tol[name]), fmt(bool(ok))])
        if not ok:
            out.failures.append(f"{bname} n={n} k={k}: {name} = {value!r} beyond {tol[name]:g}")
    return out


# ---------------------------------------------------------------------------
# assembly

def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _variation(values):
    v = [x for x in values if math.isfinite(x)]
    if len(v) < 2:
        return math.nan
    return max(v) / min(v) - 1.0


def run_block(cfg, block: Block, jobs: int = 1, timing: bool = False) -> SuiteResult:
    plan = plan_block(block)

    def tasks(keys):
        return [RowTask(cfg.text, cfg.source, block.name, cfg.seed, key, timing) for key in keys]

    if block.suite == "solve":
        return _assemble_solve(block, plan, _map(_solve_row, tasks(range(len(plan.hs))), jobs))
    if block.suite == "sharpness":
        keys = [(ib, ih) for ib in range(len(plan.betas)) for ih in range(len(plan.hs))]
        return _assemble_sharpness(block, plan, _map(_sharpness_row, tasks(keys), jobs))
    if block.suite == "probe":
        return _assemble_probe(block, plan, _map(_probe_row, tasks(range(len(plan.entries))), jobs))
    keys = [(n, k) for n in plan.ns for k in range(1, n + 1)]
    result = SuiteResult(block.name, "kernel", KERNEL_HEADER, [], [], [])
    _merge(result, _map(_kernel_row, tasks(keys), jobs))
    return result


def _merge(result: SuiteResult, parts):
    for r in parts:
        result.rows += r.rows
        result.audits += r.audits
        result.failures += r.failures
        result.numerical += r.numerical
        result.dumps.update(r.dumps)


def _assemble_solve(block, plan, parts) -> SuiteResult:
    result = SuiteResult(block.name, "solve", SOLVE_HEADER, [], [], [])
    _merge(result, parts)
    data = [p.data for p in parts]
    err_col = SOLVE_HEADER.index("error_ratio")
    ratios = []
    for i in range(1, len(data)):
        a, b = data[i - 1], data[i]
        if a and b and b["error"] > 0:
            r = a["error"] / b["error"]
            ratios.append((b["h"], r))
            result.rows[i][err_col] = fmt(r)
    a = plan.asserts
    fin = data[-1] if data and data[-1] else None
    if fin is not None:
        if "max_iters" in a and fin["iters"] > a["max_iters"]:
            result.failures.append(f"{block.name}: {fin['iters']} Newton iterations > {a['max_iters']}")
        if "max_residual" in a and not fin["residual"] <= a["max_residual"]:
            result.failures.append(f"{block.name}: residual {fin['residual']:.3e} > {a['max_residual']:g}")
        if "max_error" in a and not fin["error"] <= a["max_error"]:
            result.failures.append(f"{block.name}: max error {fin['error']:.3e} > {a['max_error']:g}")
        if "sup_second" in a:
            target, rel = a["sup_second"]
            if not abs(fin["sup_second"] - target) <= rel * abs(target):
                result.failures.append(f"{block.name}: sup_second {fin['sup_second']:.6g} not within "
                                       f"{100 * rel:g}% of {target:.6g}")
    if "error_ratio" in a:
        lo, hi = a["error_ratio"]
        if not ratios:
            result.failures.append(f"{block.name}: error ratio needs an exact solution and two grids")
        for h, r in ratios:
            if not lo <= r <= hi:
                result.failures.append(f"{block.name}: error ratio {r:.4g} at h={h:g} outside [{lo:g}, {hi:g}]")
    pts = [(1.0 / d["h"], d["error"]) for d in data if d and math.isfinite(d["error"])]
    if pts:
        result.plots[f"{block.name}_error"] = np.array(pts)
        result.plot_axes[f"{block.name}_error"] = ("1/h", "max_error")
    pts = [(1.0 / d["h"], d["sup_second"]) for d in data if d]
    if pts:
        result.plots[f"{block.name}_sup_second"] = np.array(pts)
        result.plot_axes[f"{block.name}_sup_second"] = ("1/h", "sup_second")
    return result


def _assemble_sharpness(block, plan, parts) -> SuiteResult:
    result = SuiteResult(block.name, "sharpness", SHARPNESS_HEADER, [], [], [])
    _merge(result, parts)
    nh = len(plan.hs)
    for ib, beta in enumerate(plan.betas):
        cls = threshold_classify(plan.alpha, beta, plan.k)
        series = [parts[ib * nh + ih].data for ih in range(nh)]
        sups = [d["sup"] for d in series]
        growths = []
        for ih, d in enumerate(series):
            g = sups[ih] / sups[ih - 1] if ih else math.nan
            wg = d["window"] / series[ih - 1]["window"] if ih else math.nan
            growths.append(g)
            result.rows.append([fmt(beta), fmt(d["h"]), fmt(d.get("eps_min", math.nan)), fmt(d["sup"]),
                                fmt(g), fmt(d["window"]), fmt(wg), cls.regime, d["status"]])
        name = f"{block.name}_beta{beta:g}"
        result.plots[name] = np.array([(1.0 / d["h"], d["sup"]) for d in series])
        result.plot_axes[name] = ("1/h", "sup_second")
        result.plots[name + "_window"] = np.array([(1.0 / d["h"], d["window"]) for d in series])
        result.plot_axes[name + "_window"] = ("1/h", f"sup_second_r<{plan.window:g}")
        if cls.regime == "subcritical" and plan.growth_min is not None:
            for ih in range(1, nh):
                if not growths[ih] >= plan.growth_min:
                    result.failures.append(
                        f"{block.name}: beta={beta:g} (subcritical) growth {growths[ih]:.4f} at "
                        f"h={plan.hs[ih]:g} below {plan.growth_min:g}")
        if cls.regime == "supercritical" and plan.variation_max is not None:
            var = _variation(sups)
            if not var <= plan.variation_max:
                result.failures.append(
                    f"{block.name}: beta={beta:g} (supercritical) variation {var:.4f} over the ladder "
                    f"exceeds {plan.variation_max:g}")
    return result


def _assemble_probe(block, plan, parts) -> SuiteResult:
    result = SuiteResult(block.name, "probe", PROBE_HEADER, [], [], [])
    _merge(result, parts)
    for p in parts:
        sups = p.data["sups"]
        if len(sups) > 1 and all(c > 0 for c, *_ in sups):
            name = f"{block.name}_{p.data['entry']}"
            result.plots[name] = np.array([(1.0 / c, q) for c, q, *_ in sups])
            result.plot_axes[name] = ("1/collar", "sup_c11_quotient")
    return result
