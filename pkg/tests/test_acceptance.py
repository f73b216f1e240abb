"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the terminal summary (see ``conftest.py``) so
they are visible without ``-s``.
"""

import math
import time

import numpy as np
import pytest

from conftest import boundary_points
from moi2d import (
    DomainError,
    ProcessSpec,
    Rho1Evaluator,
    SolutionEvaluator,
    UnsolvableCorrelationError,
    build_image_set_mapping,
    build_image_set_rotation,
    rho1_line_pdf,
    verify_image_set,
)
from moi2d.bvn import standard_bvn_cdf
from moi2d.cli import main as cli_main
from moi2d.correlation import rho_from_k
from moi2d.montecarlo import Diffusion, SimConfig, compare, empirical_pdf, empirical_survival, simulate
from oracles import bvn_cdf_quad, quadrant_integral

RESULTS: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str, elapsed: float, limit: float | None = None) -> bool:
    if limit is not None:
        detail += f"; {elapsed:.1f} s (limit {limit:.0f} s)"
        ok = ok and elapsed < limit
    else:
        detail += f"; {elapsed:.1f} s"
    line = f"criterion {n:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def suite_specs(seed=2):
    """Criterion 2/3 suite: k = 2..12, 100 random start points each."""
    rng = np.random.default_rng(seed)
    for k in range(2, 13):
        for _ in range(100):
            s0 = tuple(rng.uniform(-3.0, -0.05, size=2))
            mu = tuple(rng.uniform(-1.0, 1.0, size=2))
            yield ProcessSpec(mu=mu, s0=s0, k=k)


def direct_image_sum(iset, x, t):
    """Plain weighted sum of the image Gaussians and its largest term (no regrouping)."""
    spec = iset.spec
    d = x[:, None, :] - (iset.sources + np.array(spec.mu) * t)
    q = np.einsum("nji,ik,njk->nj", d, spec.lam, d)
    terms = iset.weights * np.exp(-q / (2 * t)) / (2 * math.pi * t * math.sqrt(spec.det_sigma))
    return terms.sum(axis=1), np.max(np.abs(terms), axis=1)


def test_criterion_01_boundary_conditions():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = direct = 0.0
    grid = np.stack(np.meshgrid(np.linspace(-8, -0.02, 60), np.linspace(-8, -0.02, 60), indexing="ij"), axis=-1)
    for k in (2, 3, 5, 8):
        for _ in range(20):
            spec = ProcessSpec(mu=tuple(rng.uniform(-2, 2, 2)), s0=tuple(rng.uniform(-3, -0.3, 2)), k=k)
            ev = SolutionEvaluator.from_spec(spec)
            pts = boundary_points(rng, 200, 8.0)
            for t in (0.1, 1.0, 5.0):
                # interior peak: grid maximum plus the drifted start point
                mode = np.minimum(np.array(spec.s0) + np.array(spec.mu) * t, -0.02)
                peak = max(float(np.max(ev.pdf(grid, t))), float(ev.pdf(mode, t)))
                worst = max(worst, float(np.max(np.abs(ev.pdf(pts, t)))) / peak)
                # supplementary: the unregrouped sum cancels to round-off of its largest term
                total, top = direct_image_sum(ev.iset, pts, t)
                seen = top > 1e-280  # far from the sources the terms underflow unevenly
                direct = max(direct, float(np.max(np.abs(total[seen]) / top[seen])))
    ok = record(1, "boundary vanishing", worst < 1e-10,
                f"max |Xi|/interior peak = {worst:.2e} (< 1e-10); unpaired image sum / largest term {direct:.1e}",
                time.perf_counter() - t0, 10)
    assert ok


def test_criterion_02_closure_and_geometry():
    t0 = time.perf_counter()
    closure = ellipse = 0.0
    violations = 0
    for spec in suite_specs():
        d = verify_image_set(build_image_set_rotation(spec))
        closure = max(closure, d.closure_residual)
        ellipse = max(ellipse, d.ellipse_residual)
        violations += len(d.quadrant_violations)
    ok = closure < 1e-10 and ellipse < 1e-10 and violations == 0
    ok = record(2, "closure and geometry", ok,
                f"closure {closure:.1e}, ellipse {ellipse:.1e}, interior sources {violations}",
                time.perf_counter() - t0, 5)
    assert ok


def test_criterion_03_formalism_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    src_diff = pdf_diff = 0.0
    for spec in suite_specs():
        a, b = build_image_set_mapping(spec), build_image_set_rotation(spec)
        src_diff = max(src_diff, float(np.max(np.abs(a.sources - b.sources))))
        ea, eb = SolutionEvaluator(a), SolutionEvaluator(b)
        x = -rng.uniform(0.01, 4.0, size=(10, 2))
        pdf_diff = max(pdf_diff, float(np.max(np.abs(ea.pdf(x, 1.0) - eb.pdf(x, 1.0)))) / ea.free_peak(1.0))
    ok = record(3, "formalism equivalence", src_diff < 1e-10 and pdf_diff < 1e-10,
                f"sources {src_diff:.1e}, pdf/peak {pdf_diff:.1e} (< 1e-10)", time.perf_counter() - t0)
    assert ok


def test_criterion_04_fpe_residual_order():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    ratios = []
    for k in (2, 3, 5):
        for _ in range(20):
            spec = ProcessSpec(mu=tuple(rng.uniform(-1.5, 1.5, 2)), s0=tuple(rng.uniform(-2.5, -0.5, 2)), k=k)
            ev = SolutionEvaluator.from_spec(spec)
            x, t = rng.uniform(-2.5, -0.4, 2), rng.uniform(0.3, 1.5)
            ratios.append(ev.fpe_residual(x, t, 0.02) / ev.fpe_residual(x, t, 0.01))
    ratios = np.array(ratios)
    ok = bool(np.all((ratios >= 3.5) & (ratios <= 4.5)))
    ok = record(4, "FPE residual is second order", ok,
                f"ratio range [{ratios.min():.3f}, {ratios.max():.3f}] over {ratios.size} points", time.perf_counter() - t0)
    assert ok


FIELD_CASES = [
    (ProcessSpec(mu=(1, 2), s0=(-1.5, -1.5), k=3), (0.25, 0.5, 1.0)),
    (ProcessSpec(mu=(3, 1), s0=(-1.0, -1.5), k=8), (0.1, 0.2, 0.3)),
]


@pytest.mark.slow
def test_criterion_05_density_fields():
    t0 = time.perf_counter()
    edges = np.linspace(-4.5, 0.0, 11)
    ok, parts = True, []
    for spec, times in FIELD_CASES:
        cfg = SimConfig(dt=1e-3, n_traj=50_000, horizon=max(times), seed=5, bridge_correction=True)
        batch = simulate(spec, cfg, snapshots=times)
        ev = SolutionEvaluator.from_spec(spec)
        for t in times:
            exact = ev.bin_masses(edges, edges, t)
            hist = empirical_pdf(batch, t, edges, edges)
            rep = compare(exact, hist.mass, cfg.n_traj, min_expected=20)
            frac = rep.fraction_within(4.0)
            ok = ok and rep.l1_distance <= 0.05 and frac >= 0.95
            parts.append(f"k={spec.k} t={t}: L1 {rep.l1_distance:.3f}, |z|<=4 {frac:.2f}")
    ok = record(5, "density fields vs Monte Carlo", ok, "; ".join(parts), time.perf_counter() - t0, 120)
    assert ok


@pytest.mark.slow
def test_criterion_06_survival_curve():
    t0 = time.perf_counter()
    spec = ProcessSpec(mu=(2, 1), s0=(-1.5, -1.5), k=3)
    cfg = SimConfig(dt=1e-3, n_traj=50_000, horizon=1.0, seed=6)
    ts = np.linspace(0.02, 1.0, 50)
    emp = empirical_survival(simulate(spec, cfg), ts)
    rep = compare(SolutionEvaluator.from_spec(spec).survival(ts), emp, cfg.n_traj, bias_allowance=1.5 * math.sqrt(cfg.dt))
    frac = rep.fraction_within(3.0)
    ok = record(6, "survival curve vs Monte Carlo", frac >= 0.95,
                f"|z|<=3 at {frac:.2f} of 50 points, sup-norm {rep.sup_norm:.4f}", time.perf_counter() - t0, 60)
    assert ok


@pytest.mark.slow
def test_criterion_07_survival_increases_with_rho():
    t0 = time.perf_counter()
    mu, s0 = (2.0, 1.0), (-1.5, -1.5)
    rhos = sorted([rho_from_k(k) for k in range(2, 9)] + [-0.25, -0.1])
    cfg = SimConfig(dt=1e-3, n_traj=50_000, horizon=1.0, seed=7)
    allowance = 1.5 * math.sqrt(cfg.dt)
    emp, se = [], []
    for rho in rhos:
        s = float(empirical_survival(simulate(Diffusion(mu=mu, s0=s0, rho=rho), cfg), [1.0])[0])
        emp.append(s)
        se.append(math.sqrt(s * (1 - s) / cfg.n_traj))
    monotone = all(emp[i + 1] >= emp[i] - 3 * math.hypot(se[i], se[i + 1]) for i in range(len(rhos) - 1))
    worst = 0.0
    for k in range(2, 9):
        i = rhos.index(rho_from_k(k))
        exact = SolutionEvaluator.from_spec(ProcessSpec(mu=mu, s0=s0, k=k)).survival(1.0)
        worst = max(worst, (abs(exact - emp[i]) - allowance) / se[i])
    ok = record(7, "survival increases with rho", monotone and worst <= 3.0,
                f"monotone within 3 SE: {monotone}; worst analytic excess {worst:.2f} SE",
                time.perf_counter() - t0, 180)
    assert ok


def test_criterion_08_survival_cdf_vs_quadrature():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        k = int(rng.integers(2, 9))
        spec = ProcessSpec(mu=tuple(rng.uniform(-1.5, 1.5, 2)), s0=tuple(rng.uniform(-2.5, -0.3, 2)), k=k)
        ev = SolutionEvaluator.from_spec(spec)
        for t in (0.5, 2.0):
            ref = quadrant_integral(lambda a, b: ev.pdf(np.array([a, b]), t), lo=-25.0, epsabs=1e-9, epsrel=1e-8)
            worst = max(worst, abs(ev.survival(t) - ref))
    ok = record(8, "survival by CDFs vs quadrature", worst < 1e-6, f"max difference {worst:.1e} (< 1e-6)",
                time.perf_counter() - t0)
    assert ok


def test_criterion_09_bivariate_cdf():
    t0 = time.perf_counter()
    grid = np.linspace(-5, 5, 15)
    worst = 0.0
    for rho in np.linspace(-0.99, 0.99, 9):
        got = standard_bvn_cdf(grid[:, None], grid[None, :], rho)
        ref = np.array([[bvn_cdf_quad(h, w, rho) for w in grid] for h in grid])
        worst = max(worst, float(np.max(np.abs(got - ref))))
    ident = max(abs(standard_bvn_cdf(0.0, 0.0, r) - (0.25 + math.asin(r) / (2 * math.pi)))
                for r in np.linspace(-0.99, 0.99, 41))
    ok = record(9, "bivariate normal CDF", worst < 5e-13 and ident < 1e-13,
                f"grid error {worst:.1e} (< 5e-13), quadrant identity {ident:.1e} (< 1e-13)", time.perf_counter() - t0)
    assert ok


@pytest.mark.slow
def test_criterion_10_perfect_anticorrelation():
    t0 = time.perf_counter()
    s0 = (-1.0, -1.0)
    ev = Rho1Evaluator.from_start(s0, (0.0, 0.0))
    xs = np.linspace(0.0, ev.a, 101)
    sym = max(float(np.max(np.abs(rho1_line_pdf(ev, xs, t) - rho1_line_pdf(ev, -xs, t)))) for t in (0.1, 0.5, 2.0))
    # the series itself, evaluated right at the walls (line_pdf reports 0 there by definition)
    walls = np.array([ev.a, -ev.b])
    bnd = max(
        float(np.max(np.abs(ev._series(lambda src, t=t: np.exp(-(walls - src) ** 2 / (4 * t)) / math.sqrt(4 * math.pi * t)))))
        for t in (0.1, 0.5, 2.0)
    )
    times = (0.25, 0.5, 1.0)
    cfg = SimConfig(dt=1e-3, n_traj=50_000, horizon=1.0, seed=10, bridge_correction=True)
    batch = simulate(Diffusion(mu=(0.0, 0.0), s0=s0, rho=-0.9999), cfg, snapshots=times)
    edges = np.linspace(-ev.b, ev.a, 13)
    fracs, surv_z = [], []
    for t in times:
        p = batch.snapshots[t]
        p = p[~np.isnan(p[:, 0])]
        xz = ((p[:, 0] - s0[0]) - (p[:, 1] - s0[1])) / math.sqrt(2.0)
        counts, _ = np.histogram(xz, edges)
        rep = compare(ev.interval_mass(edges[:-1], edges[1:], t), counts / cfg.n_traj, cfg.n_traj, min_expected=20)
        fracs.append(rep.fraction_within(3.0))
        s = ev.survival(t)
        surv_z.append(abs(empirical_survival(batch, [t])[0] - s) / math.sqrt(s * (1 - s) / cfg.n_traj))
    ok = sym < 1e-12 and bnd < 1e-12 and min(fracs) >= 0.95 and max(surv_z) <= 3.0
    ok = record(10, "rho = -1 line solution", ok,
                f"asymmetry {sym:.1e}, wall value {bnd:.1e}, bins |z|<=3 min {min(fracs):.2f}, "
                f"survival |z| max {max(surv_z):.2f}", time.perf_counter() - t0)
    assert ok


def test_criterion_11_unsolvable_rejection(capsys):
    t0 = time.perf_counter()
    named = True
    for rho in (0.3, -0.3, -0.6):
        try:
            ProcessSpec.from_rho(mu=(0, 0), s0=(-1, -1), rho=rho)
            named = False
        except UnsolvableCorrelationError as exc:
            named = named and "rho = -cos(pi/k)" in str(exc) and isinstance(exc, DomainError)
        code = cli_main(["images", "--rho", str(rho), "--s0", "-1,-1"])
        err = capsys.readouterr().err
        named = named and code == 1 and "rho = -cos(pi/k)" in err
    cfg = SimConfig(dt=1e-2, n_traj=500, horizon=0.5)
    sims = all(simulate(Diffusion(mu=(0, 0), s0=(-1, -1), rho=r), cfg).n_traj == 500 for r in (-1.0, -0.6, -0.3, 0.0))
    ok = record(11, "unsolvable rho rejected", named and sims,
                f"closed form refused with the solvability condition named: {named}; simulation runs: {sims}",
                time.perf_counter() - t0)
    with capsys.disabled():
        pass
    assert ok
