"""Run config blocks, write CSV / plot-data / report / figure files, pick the exit code."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..disc import build_domain, read_dump
from ..errors import ConfigError, HessianLabError
from ..solver import ProblemSpec, maximum_principle_audit
from .audits import g_diagnostics
from .config import ExperimentConfig
from .suites import AUDIT_HEADER, SuiteResult, fmt, plan_block, run_block

log = logging.getLogger(__name__)

__all__ = ["RunOutcome", "run_config", "run_audit", "EXIT_PASS", "EXIT_ASSERT", "EXIT_CONFIG",
           "EXIT_NUMERICAL", "csv_text"]

EXIT_PASS, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

KERNEL_STATEMENTS = {
    "dual_route": "sigma_k as a sum of principal minors equals sigma_k of the eigenvalues",
    "trace_identity": "sum_i sigma_k^{ii} = (n-k+1) sigma_{k-1}",
    "operator_gradient": "F^{ij} = dF/dA_ij agrees with central differences of F = sigma_k^{1/k}",
    "concavity": "F(theta A + (1-theta) B) >= theta F(A) + (1-theta) F(B) on the cone",
}
PROBE_STATEMENTS = (
    ("sup_c11_quotient", "sup |grad g|^2 / g, bounded when g >= 0 has bounded second derivatives"),
    ("inf_c21_defect", "inf (g_ee - alpha g_e^2 / g) / g^{1/3}, bounded below when g is C^{2,1}"),
)


@dataclass
class RunOutcome:
    results: list
    exit_code: int
    files: list = field(default_factory=list)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _plot_text(axes, xy) -> str:
    lines = [f"# {axes[0]} {axes[1]}"]
    lines += [f"{fmt(float(x))} {fmt(float(y))}" for x, y in np.asarray(xy)]
    return "\n".join(lines) + "\n"


def _exit_code(results) -> int:
    if any(r.numerical for r in results):
        return EXIT_NUMERICAL
    if any(r.failures for r in results):
        return EXIT_ASSERT
    return EXIT_PASS


def _report(cfg: ExperimentConfig, results, code: int) -> str:
    out = [f"experiment: {cfg.name}", f"seed: {cfg.seed}",
           f"exit code: {code} ({['pass', 'assertion failure', 'config error', 'numerical failure'][code]})",
           ""]
    for r in results:
        out.append(f"[{r.block}] suite={r.suite} {'PASS' if r.passed else 'FAIL'}")
        if r.suite == "kernel":
            for name, text in KERNEL_STATEMENTS.items():
                out.append(f"  {name}: {text}")
        elif r.suite == "probe":
            for name, text in PROBE_STATEMENTS:
                out.append(f"  {name}: {text}")
            out.append("  stable: sup quotient agrees (5%) across both densities and with the previous collar")
        elif r.suite == "sharpness":
            out.append("  classification: beta against 2(k-1)(alpha-1); subcritical data admit no "
                       "C^{1,1} solution, so sup |D^2 u_h| should grow under refinement")
            out.append("  growth: ratio of sup |D^2 u_h| to the previous (coarser) grid at the smallest eps")
            out.append("  window_sup: same sup restricted to the ball of radius `window` around the "
                       "degenerate point (diagnostic only)")
        elif r.suite == "solve":
            seen = {}
            for case, h, q, v, role, text in r.audits:
                seen.setdefault(q, (role, text))
            for q, (role, text) in seen.items():
                out.append(f"  {q} [{role}]: {text}")
        for msg in r.failures:
            out.append(f"  assertion failed: {msg}")
        for msg in r.numerical:
            out.append(f"  numerical failure: {msg}")
        out.append("")
    return "\n".join(out)


def run_config(cfg: ExperimentConfig, suite: str | None = None, out=None, jobs: int = 1,
               timing: bool | None = None, figures: bool = True) -> RunOutcome:
    """Execute the selected blocks and write all artifacts under ``out``."""
    blocks = cfg.select(suite)
    if not blocks:
        raise ConfigError(f"config has no {suite or 'runnable'} block", f"{suite}.suite")
    outdir = Path(out or cfg.out or "hessianlab_out")
    outdir.mkdir(parents=True, exist_ok=True)
    timing = cfg.timing if timing is None else timing
    results: list[SuiteResult] = []
    files: list[Path] = []
    for b in blocks:
        log.info("running block %s (%s)", b.name, b.suite)
        res = run_block(cfg, b, jobs=jobs, timing=timing)
        results.append(res)
        p = outdir / f"{b.name}.csv"
        p.write_text(csv_text(res.header, res.rows))
        files.append(p)
        if res.audits:
            p = outdir / f"{b.name}_audits.csv"
            p.write_text(csv_text(AUDIT_HEADER, res.audits))
            files.append(p)
        for name, xy in res.plots.items():
            p = outdir / "plots" / f"{name}.dat"
            p.parent.mkdir(exist_ok=True)
            p.write_text(_plot_text(res.plot_axes[name], xy))
            files.append(p)
        for name, text in res.dumps.items():
            p = outdir / name
            p.write_text(text)
            files.append(p)
        if figures:
            files += render(res, outdir / "figures")
    code = _exit_code(results)
    p = outdir / "report.txt"
    p.write_text(_report(cfg, results, code))
    files.append(p)
    return RunOutcome(results, code, files)


def render(res, outdir):
    from .figures import render_suite
    return render_suite(res, outdir)


def run_audit(dump_path, cfg: ExperimentConfig, out=None, block: str | None = None,
              t: float | None = None):
    """Re-run the post-solve audits on a saved solution dump.

    The dump is matched against every (solve block, h) grid of the config.
    Returns ``(exit_code, rows, failures)``.
    """
    candidates = [b for b in cfg.select("solve") if block is None or b.name == block]
    if not candidates:
        raise ConfigError(f"no solve block{' named ' + block if block else ''} to audit against",
                          f"{block or 'solve'}.suite")
    for b in candidates:
        plan = plan_block(b)
        for h in plan.hs:
            dom = build_domain(plan.shape, h, plan.gap)
            try:
                u = read_dump(dump_path, dom)
            except HessianLabError:
                continue
            eps = plan.eps if plan.eps != (0.0,) else (1e-1,)
            spec = ProblemSpec(dom, plan.k, plan.f, plan.phi, eps)
            rows = []
            failures = []
            mp = maximum_principle_audit(u, spec)
            rows.append([b.name, fmt(h), "sandwich_violations", fmt(len(mp.violations)), "asserted",
                         "lower - tau <= u <= harmonic majorant + tau"])
            if not mp.passed:
                failures.append("sandwich")
            bundle = g_diagnostics(u, spec, eps=0.0 if plan.eps == (0.0,) else plan.eps[-1],
                                   barrier_t=plan.barrier_t if t is None else t)
            for q, v, role, text in bundle.rows():
                rows.append([b.name, fmt(h), q, fmt(v), role, text])
            rows.append([b.name, fmt(h), "skipped_nodes", fmt(bundle.skipped), "recorded",
                         "inadmissible nodes left out of the diagnostics"])
            failures += list(bundle.failures)
            if bundle.barrier is not None and not bundle.barrier.passed:
                failures.append("barrier")
            if out is not None:
                outdir = Path(out)
                outdir.mkdir(parents=True, exist_ok=True)
                (outdir / f"audit_{Path(dump_path).stem}.csv").write_text(csv_text(AUDIT_HEADER, rows))
            return (EXIT_ASSERT if failures else EXIT_PASS), rows, failures
    raise ConfigError(f"dump {dump_path} matches no grid of the solve blocks in {cfg.source}",
                      "h")
