import csv
import io
import math
from pathlib import Path

import numpy as np
import pytest

from hessianlab import disc, fields, solver
from hessianlab.errors import ConfigError, UnsupportedDomainError
from hessianlab.harness import cli
from hessianlab.harness.audits import barrier_audit, g_diagnostics
from hessianlab.harness.config import parse_config, parse_number, resolve_field
from hessianlab.harness.runner import EXIT_ASSERT, EXIT_CONFIG, EXIT_PASS, run_config

REPO = Path(__file__).resolve().parents[1]
MINIMAL = REPO / "configs" / "minimal.cfg"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture(scope="module")
def ball_quadratic():
    dom = disc.build_domain(disc.Ball(1.0, 3), 1 / 8)
    u = dom.sample(lambda x: 0.5 * np.sum(x * x, axis=1))
    spec = solver.ProblemSpec(dom, 2, fields.constant(3.0, 3), fields.quadratic(3, a=0.5))
    return u, spec


# ------------------------------------------------------------------- config

def test_parse_number_arithmetic():
    assert parse_number("1/(3*sqrt(2))", "x") == pytest.approx(1 / (3 * math.sqrt(2)))
    assert parse_number("-2**3 + pi", "x") == pytest.approx(-8 + math.pi)
    with pytest.raises(ConfigError):
        parse_number("__import__('os')", "x")


def test_resolve_field_nested():
    f = resolve_field("product(exp_quadratic(c=1), quadratic(a=1, b=1))", 2)
    x = np.array([[0.3, -0.4]])
    assert f(x)[0] == pytest.approx(math.exp(0.25) * 1.25)


def test_dotted_field_parameters():
    cfg = parse_config("a.suite = solve\na.h = 1/8\na.f = constant\na.f.c = 2\na.phi = constant(c=0)\n")
    assert cfg.blocks[0].raw["f.c"] == "2"


@pytest.mark.parametrize("text,key", [
    ("a.suite = solve\na.h = 1/8\na.f = constnt(c=1)\na.phi = constant(c=0)\n", "a.f"),
    ("a.suite = solve\na.h = 1/8\na.f = constant(c=1)\na.phi = constant(c=0)\na.tolerance = 3\n",
     "a.tolerance"),
    ("a.suite = sharpness\na.h = 1/8\na.alpha = 4\na.beta = \n", "a.beta"),
    ("a.suite = solve\na.h = 1/8, 1/4\na.f = constant(c=1)\na.phi = constant(c=0)\n", "a.h"),
    ("a.suite = warp\n", "a.suite"),
    ("a.h = 1/8\n", "a.suite"),
    ("a.suite = solve\na.suite = probe\n", "a.suite"),
])
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert key in str(info.value)


def test_cli_misspelled_field(tmp_path, capsys):
    text = MINIMAL.read_text().replace("constant(c=1)", "konstant(c=1)")
    code = cli.main(["run", str(write_cfg(tmp_path, text)), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "quad.f" in capsys.readouterr().err


def test_cli_unreadable_config(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


# ------------------------------------------------------------------- runs

def test_minimal_config(tmp_path, capsys):
    out = tmp_path / "min"
    code = cli.main(["run", str(MINIMAL), "--out", str(out), "--no-figures"])
    assert code == EXIT_PASS
    rows = read_csv(out / "quad.csv")
    assert len(rows) == 2
    assert rows[0][:8] == ["case", "h", "eps", "iters", "residual", "sup_second", "weighted_sup",
                           "admissible"]
    assert rows[1][-2] == "0"  # sandwich violations
    assert capsys.readouterr().out.startswith("quad,solve,pass,1")
    report = (out / "report.txt").read_text()
    assert "exit code: 0" in report and "tr(G D^2u)" in report


def test_assertion_failure_exit(tmp_path):
    text = MINIMAL.read_text().replace("quad.assert.max_error = 1e-9", "quad.assert.max_iters = 0")
    code = cli.main(["run", str(write_cfg(tmp_path, text)), "--out", str(tmp_path / "o"),
                     "--no-figures"])
    assert code == EXIT_ASSERT


def test_audit_command(tmp_path, capsys):
    # the barrier bound -1 + 10h only separates t = 0.5 once h < 1/20
    text = MINIMAL.read_text().replace("1/8", "1/32") + "quad.dump = true\n"
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out), "--no-figures"]) == EXIT_PASS
    dump = next(out.glob("*.dump"))
    capsys.readouterr()
    assert cli.main(["audit", str(dump), str(cfg)]) == EXIT_PASS
    printed = capsys.readouterr().out
    assert "barrier_max" in printed
    assert cli.main(["audit", str(dump), str(cfg), "--barrier-t", "0.5"]) == EXIT_ASSERT


def test_audit_grid_mismatch(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL.read_text() + "quad.dump = true\n")
    out = tmp_path / "o"
    cli.main(["run", str(cfg), "--out", str(out), "--no-figures"])
    dump = next(out.glob("*.dump"))
    other = write_cfg(tmp_path, MINIMAL.read_text().replace("1/8", "1/4"), "other.cfg")
    assert cli.main(["audit", str(dump), str(other)]) == EXIT_CONFIG


def test_critical_beta_not_asserted(tmp_path):
    cfg = parse_config(
        "s.suite = sharpness\ns.h = 1/8, 1/16\ns.alpha = 4\ns.beta = 6\n"
        "s.eps = 1e-1, 1e-2\ns.assert.growth_min = 100\ns.assert.variation_max = 0\n")
    outcome = run_config(cfg, out=tmp_path, figures=False)
    res = outcome.results[0]
    assert [r[7] for r in res.rows] == ["critical", "critical"]
    assert res.failures == [] and outcome.exit_code == EXIT_PASS
    dat = (tmp_path / "plots" / "s_beta6.dat").read_text().splitlines()
    assert dat[0] == "# 1/h sup_second" and len(dat) == 3


def test_probe_suite_rows(tmp_path):
    cfg = parse_config(
        "p.suite = probe\np.densities = 101, 201\np.entries = sq, lin\n"
        "p.sq.field = quadratic(a=1)\np.sq.lo = 1e-3\np.sq.hi = 1\np.sq.assert.stable = true\n"
        "p.lin.field = affine(coeffs=(1,))\np.lin.lo = 0\np.lin.hi = 1\n"
        "p.lin.collar = 1e-2, 1e-3\np.lin.assert.stable = false\n")
    outcome = run_config(cfg, out=tmp_path, figures=False)
    rows = outcome.results[0].rows
    sq = [r for r in rows if r[0] == "sq"]
    assert all(float(r[7]) == pytest.approx(4.0) for r in sq)
    assert outcome.exit_code == EXIT_PASS


def test_determinism_across_jobs(tmp_path):
    cfg = parse_config(
        "seed = 3\n"
        "k.suite = kernel\nk.n = 2, 3\nk.samples = 50\nk.grad_samples = 10\nk.pairs = 20\n"
        "q.suite = solve\nq.h = 1/8, 1/16\nq.f = constant(c=1)\nq.phi = quadratic(a=0.5)\nq.eps = 0\n")
    a = run_config(cfg, out=tmp_path / "a", jobs=1, figures=False)
    b = run_config(cfg, out=tmp_path / "b", jobs=2, figures=False)
    assert a.exit_code == b.exit_code == EXIT_PASS
    for name in ("k.csv", "q.csv", "q_audits.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_kernel_samples(tmp_path):
    text = "k.suite = kernel\nk.n = 3\nk.samples = 20\nk.grad_samples = 5\nk.pairs = 5\n"
    a = run_config(parse_config("seed = 1\n" + text), out=tmp_path / "a", figures=False)
    b = run_config(parse_config("seed = 2\n" + text), out=tmp_path / "b", figures=False)
    assert a.results[0].rows != b.results[0].rows


def test_timing_flag_fills_column(tmp_path):
    cfg = parse_config(MINIMAL.read_text())
    run_config(cfg, out=tmp_path, timing=True, figures=False)
    rows = read_csv(tmp_path / "quad.csv")
    assert rows[1][rows[0].index("wall_time_s")] != ""


def test_figures_written(tmp_path):
    cfg = parse_config(MINIMAL.read_text())
    outcome = run_config(cfg, out=tmp_path, figures=True)
    assert outcome.exit_code == EXIT_PASS


# ------------------------------------------------------------------- audits

@pytest.fixture(scope="module")
def fine_disc_quadratic():
    dom = disc.build_domain(disc.Ball(1.0, 2), 1 / 32)
    u = dom.sample(lambda x: 0.5 * np.sum(x * x, axis=1))
    spec = solver.ProblemSpec(dom, 2, fields.constant(1.0, 2), fields.quadratic(2, a=0.5))
    return u, spec


def test_barrier_examples(fine_disc_quadratic):
    u, spec = fine_disc_quadratic
    rec = barrier_audit(u, spec, t=2.0)
    assert rec.passed
    assert rec.values["max_dev"] <= 1e-8
    assert rec.values["max_trace"] == pytest.approx(-2.0, abs=1e-8)
    one = barrier_audit(u, spec, t=1.0)
    assert one.values["boundary_gradient_dev"] <= 1e-12
    assert one.values["boundary_gradient_ge_1"]
    half = barrier_audit(u, spec, t=0.5)
    assert not half.passed
    assert any(v[1] == "barrier_bound" for v in half.violations)


def test_barrier_non_ball():
    dom = disc.build_domain(disc.Box((1.0, 1.0)), 1 / 8)
    u = dom.sample(lambda x: np.sum(x * x, axis=1))
    spec = solver.ProblemSpec(dom, 2, fields.constant(1.0, 2), fields.constant(0.0, 2))
    with pytest.raises(UnsupportedDomainError):
        barrier_audit(u, spec)


def test_g_diagnostics_identity(ball_quadratic):
    u, spec = ball_quadratic
    b = g_diagnostics(u, spec, eps=0.0)
    assert b.passed and b.skipped == 0
    assert b.values["g_trace_min"] == pytest.approx(1.0, abs=1e-10)
    assert b.values["g_trace_max"] == pytest.approx(1.0, abs=1e-10)
    assert abs(b.values["dir_first_ratio"]) < 1e-8
    roles = {q: role for q, _, role, _ in b.rows()}
    assert roles["g_trace_max"] == "recorded" and roles["euler_dev"] == "asserted"


def test_g_diagnostics_skips_inadmissible(ball_quadratic):
    u, spec = ball_quadratic
    vals = u.values.copy()
    vals[0] -= 1.0  # a dent makes the node and its neighbours non-convex
    b = g_diagnostics(u.domain.field(vals), spec, eps=0.0)
    assert b.skipped >= 1


def test_radial_direction_ratio_stable():
    ratios = []
    for h in (1 / 32, 1 / 64):
        dom = disc.build_domain(disc.Ball(1.0, 2), h)
        spec = solver.ProblemSpec(dom, 2, fields.radial_power(2, 2.0),
                                  fields.constant(1 / (3 * math.sqrt(2)), 2))
        rep = solver.continuation_solve(spec)[-1]
        b = g_diagnostics(rep.u, spec, eps=spec.eps_schedule[-1])
        assert b.passed
        ratios.append(b.values["dir_first_ratio"])
    assert all(math.isfinite(r) for r in ratios)
    assert abs(ratios[1] - ratios[0]) <= 0.2 * max(abs(r) for r in ratios)
