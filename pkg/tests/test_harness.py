import csv
import math

import numpy as np
import pytest

from cylsp.errors import DomainError, SolverError
from cylsp.harness import (
    CSV_COLUMNS,
    SweepConfig,
    SweepReport,
    SweepRow,
    fit_decay,
    fit_decay_samples,
    local_decay_rate,
    rescaled_profile_check,
    run_sweep,
    solve_single,
)
from cylsp.penalty import decay_envelope
from cylsp.poisson import uniform_grid
from cylsp.solver import SolverOptions

CIRCLE = (0.0, 2.0)


def test_fit_recovers_its_own_envelope():
    g = uniform_grid((-1.5, 1.5), (0.5, 3.5), 0.05)
    S, R = g.mesh()
    u = g.like(decay_envelope("base", 2.5, 0.7, 0.1, np.stack([S, R], -1), CIRCLE))
    fit = fit_decay(u, CIRCLE, 0.1, edge=0.0)
    assert fit.C == pytest.approx(2.5, rel=1e-6)
    assert fit.lam == pytest.approx(0.7, rel=1e-6)
    assert fit.lam_hat == pytest.approx(7.0, rel=1e-6)
    assert fit.rms < 1e-10


def test_fit_quadratic_case_recovers_nu():
    rng = np.random.default_rng(1)
    pts = np.stack([rng.uniform(-1, 1, 200), rng.uniform(1, 3, 200)], -1)
    vals = decay_envelope("inf-quadratic", 1.3, 0.5, 0.2, pts, CIRCLE, nu=0.05)
    fit = fit_decay_samples(pts, vals, 0.2, CIRCLE, "inf-quadratic")
    assert fit.nu == pytest.approx(0.05, rel=1e-6) and fit.lam == pytest.approx(0.5, rel=1e-6)


def test_fit_rejects_empty_tail():
    g = uniform_grid((-1, 1), (1, 3), 0.05)
    with pytest.raises(SolverError):
        fit_decay(g, CIRCLE, 0.1)
    with pytest.raises(SolverError):
        fit_decay_samples(np.zeros((5, 2)) + 1, np.ones(5), 0.1, CIRCLE)


def test_local_rate_of_pure_exponential():
    g = uniform_grid((-1, 1), (1, 3), 0.02)
    S, R = g.mesh()
    u = g.like(np.exp(-13.0 * np.hypot(S, R - 2.0)))
    assert local_decay_rate(u, CIRCLE, 0.05) == pytest.approx(13.0, rel=1e-10)


def test_profile_check_self_and_center(ground11):
    eps, n, window = 1.0, 81, 3.0
    h = 2 * window / (n - 1) * eps
    g = uniform_grid((-4, 4), (0.0, 8.0), h)
    s0, r0 = g.s[len(g.s) // 2], g.r[len(g.r) // 2]
    S, R = g.mesh()
    u = g.like(ground11(np.hypot(S - s0, R - r0) / eps))
    assert rescaled_profile_check(u, (s0, r0), eps, ground11, window, n) < 1e-12
    shifted = g.like(u.values * 1.1)
    dev0 = rescaled_profile_check(shifted, (s0, r0), eps, ground11, 0.0)
    assert dev0 == pytest.approx(0.1 * ground11.w[0], rel=1e-10)


def test_profile_window_too_large(ground11):
    g = uniform_grid((-1, 1), (1, 3), 0.05)
    with pytest.raises(DomainError):
        rescaled_profile_check(g, CIRCLE, 0.5, ground11, 3.0)


def test_sweep_config_validation(flagship):
    with pytest.raises(DomainError):
        SweepConfig(flagship, eps=(0.1, 0.2))
    with pytest.raises(DomainError):
        SweepConfig(flagship, eps=(0.1, -0.05))
    with pytest.raises(DomainError):
        SweepConfig(flagship, eps=(0.1,), cells_per_eps=4)
    cfg = SweepConfig.from_problem(flagship, eps=[0.2], tol=1e-7)
    assert cfg.eps == (0.2,) and cfg.solver.tol == 1e-7


def test_empty_sweep(flagship, tmp_path):
    rep = run_sweep(SweepConfig(flagship, eps=(), out_dir=tmp_path))
    assert rep.rows == []
    with open(tmp_path / "sweep.csv") as fh:
        assert next(csv.reader(fh)) == list(CSV_COLUMNS)


def test_csv_columns_fixed(tmp_path):
    rows = [SweepRow(eps=0.1, J_over_eps2=1.0, penal_active=False), SweepRow(eps=0.05)]
    rep = SweepReport(rows, 1.9, 9.2, 4.7)
    rep.write_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rd = list(csv.DictReader(fh))
    assert tuple(rd[0]) == CSV_COLUMNS
    assert rd[0]["penal_active"] == "0" and rd[1]["penal_active"] == ""
    assert rep.row(0.05) is rows[1]


def test_single_eps_sweep_matches_direct_solve(flagship, flagship_ring, tmp_path):
    cfg = SweepConfig(flagship, eps=(0.2,), half_width_eps=8.0, out_dir=tmp_path)
    rep = run_sweep(cfg, keep_reports=True)
    row = rep.row(0.2)
    assert row.status == "ok", row.message
    _, direct = solve_single(flagship, 0.2, flagship_ring.r_star, 8.0, 8.0, SolverOptions())
    assert row.J_over_eps2 == pytest.approx(direct.energy / 0.04, rel=1e-10)
    assert row.r_star == pytest.approx(direct.r_star, abs=1e-10)
    assert row.target_pi_infM == pytest.approx(math.pi * flagship_ring.value)
    assert row.target_r_star == pytest.approx(flagship_ring.r_star)
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "solve_eps0.2.json").exists()
    assert row.verify_original and not row.penal_active
