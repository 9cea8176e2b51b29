import dataclasses
import json
from types import SimpleNamespace

import numpy as np
import pytest

from cylsp.errors import DomainError
from cylsp.limit2d import shoot_radial_ground_state
from cylsp.model import PotentialSpec, RegionLambda
from cylsp.penalty import PenalizationParams
from cylsp.solver import (
    PenalizedProblem,
    build_ansatz,
    cutoff,
    descent_solve,
    energy_J,
    grad_J,
    make_grid,
    mountain_pass_level,
    verify_original,
)

ONE = [{"kind": "constant", "c": 1.0}]


def flagship_problem(flagship, eps, half_width=8.0, center=1.9, rho=True):
    spec = flagship.spec if rho else dataclasses.replace(flagship.spec, rho=())
    return PenalizedProblem(spec, flagship.region, PenalizationParams(eps), make_grid(center, eps, 8, half_width),
                            flagship.p)


def local_problem(eps, half_width=8.0, cells=8):
    spec = PotentialSpec.from_records(ONE, ONE, [])
    return PenalizedProblem(spec, RegionLambda(2.0, 1.0, 1.0), PenalizationParams(eps),
                            make_grid(2.0, eps, cells, half_width), 4.0)


@pytest.fixture(scope="module")
def small(flagship):
    return flagship_problem(flagship, 0.2)


@pytest.fixture(scope="module")
def small_solution(small, ground11):
    a = float(small.spec.V_at(0.0, 1.9))
    gs = shoot_radial_ground_state(a, 1.0, 4.0)
    u0, _ = build_ansatz(small, gs, (0.0, 1.9))
    return descent_solve(small, u0)


def smooth_field(problem, rng):
    S, R = problem.grid.mesh()
    out = np.zeros(S.shape)
    for _ in range(3):
        s0, r0, w = rng.uniform(-0.5, 0.5), rng.uniform(1.5, 2.3), rng.uniform(0.2, 0.5)
        out += rng.uniform(-0.5, 1.5) * np.exp(-((S - s0) ** 2 + (R - r0) ** 2) / w**2)
    return out


def test_grid_layout():
    g = make_grid(1.9, 0.2, 8, 14)
    assert g.h_s == pytest.approx(0.025)
    assert g.r[0] > 0
    assert np.allclose(g.s, -g.s[::-1])


def test_zero_field(small):
    z = small.field(np.zeros(small.grid.shape))
    assert energy_J(small, z) == 0.0
    assert np.all(grad_J(small, z).values == 0.0)


def test_gradient_directional_derivative(small):
    rng = np.random.default_rng(5)
    orders = []
    for _ in range(20):
        u, v = smooth_field(small, rng), smooth_field(small, rng)
        exact = float(np.sum(small.gradient(u) * v * small.vol))
        errs = []
        for h in (1e-3, 1e-4):
            fd = (small.energy(u + h * v) - small.energy(u - h * v)) / (2 * h)
            errs.append(abs(fd - exact))
        assert errs[1] <= 1e-6 * abs(exact) + 1e-12
        if errs[1] > 1e-13 * abs(exact):
            orders.append(np.log10(errs[0] / errs[1]))
    assert orders and min(orders) >= 1.9


def test_local_reduction(flagship):
    prob = flagship_problem(flagship, 0.2, rho=False)
    rng = np.random.default_rng(2)
    u = np.abs(smooth_field(prob, rng)) * cutoff(prob.region.level(*prob.grid.mesh()))
    expect = 0.5 * (prob.eps**2 * u.ravel() @ (prob.stiff @ u.ravel()) + np.sum(prob.V * u**2 * prob.vol)) \
        - np.sum(u**5 / 5 * prob.vol)
    assert prob.energy(u) == pytest.approx(expect, rel=1e-13)


def test_scaling_toward_limit_energy(ground11):
    target = 2 * np.pi * 2.0 * ground11.energy
    gaps = []
    for eps in (0.2, 0.1, 0.05):
        vals = []
        for cells in (8, 16):
            prob = local_problem(eps, cells=cells)
            u, _ = build_ansatz(prob, ground11, (0.0, 2.0))
            vals.append(prob.energy(u.values) / eps**2)
        # the grid error is second order in h/eps and does not depend on eps; extrapolate it away
        gaps.append(abs((4 * vals[1] - vals[0]) / 3 - target) / target)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-4


def test_fiber_has_single_maximum(small, ground11):
    u, t = build_ansatz(small, ground11)
    f = small.fiber(u.values / t)
    vals = np.array([f(s) for s in np.linspace(0, 4 * t, 400)])
    peaks = np.sum((vals[1:-1] > vals[:-2]) & (vals[1:-1] >= vals[2:]))
    assert peaks == 1 and vals[-1] < 0


def test_cutoff_inactive_at_small_eps(flagship):
    prob = flagship_problem(flagship, 0.05)
    gs = shoot_radial_ground_state(float(prob.spec.V_at(0.0, 1.9)), 1.0, 4.0)
    with_cut, _ = build_ansatz(prob, gs, (0.0, 1.9))
    without, _ = build_ansatz(prob, gs, (0.0, 1.9), use_cutoff=False)
    J1, J2 = prob.energy(with_cut.values), prob.energy(without.values)
    assert abs(J1 - J2) / J1 < 1e-6


def test_descent_converges(small, small_solution):
    rep = small_solution
    assert rep.residual <= small.options.tol
    assert rep.positive and np.min(rep.u.values) >= -1e-12
    assert abs(rep.s_star) <= 2 * small.h
    assert abs(rep.r_star - 1.8969598813409838) <= 2 * 0.2
    levels = [h["J"] for h in rep.history if h["phase"] == "descent"]
    assert all(b < a for a, b in zip(levels, levels[1:]))


def test_fixed_point_restart(small, small_solution):
    again = descent_solve(small, small_solution.u, mp_level=False)
    assert again.iterations == 0 and again.newton_steps <= 1
    assert again.energy == pytest.approx(small_solution.energy, rel=1e-10)


def test_zero_initial_rejected(small):
    with pytest.raises(DomainError):
        descent_solve(small, small.field(np.zeros(small.grid.shape)))


def test_mountain_pass_level(small, small_solution):
    J = small_solution.energy
    c = small_solution.c_eps
    assert J <= c <= 1.01 * J
    fine = mountain_pass_level(small, small_solution.u, n=1601)
    assert fine >= c - 1e-12 * abs(c)


def test_mountain_pass_local_case(flagship):
    prob = flagship_problem(flagship, 0.2, rho=False)
    gs = shoot_radial_ground_state(float(prob.spec.V_at(0.0, 1.9)), 1.0, 4.0)
    u0, _ = build_ansatz(prob, gs, (0.0, 1.9))
    rep = descent_solve(prob, u0)
    assert rep.c_eps == pytest.approx(rep.energy, rel=1e-6)


def test_verify_original(small, small_solution):
    flag, margin = verify_original(small, small_solution)
    assert flag and np.all(margin.values >= 0)
    zero_out = small.field(np.where(small.inside, small_solution.u.values, 0.0))
    flag, margin = verify_original(small, SimpleNamespace(u=zero_out))
    assert flag
    assert np.allclose(margin.values[~small.inside], small.L[~small.inside])
    big = small.field(np.where(small.inside, 0.0, 10.0))
    flag, _ = verify_original(small, SimpleNamespace(u=big))
    assert not flag


def test_report_recomputable(tmp_path, small, small_solution):
    from cylsp.poisson import CylField
    rep = small_solution
    rep.save(tmp_path, "s")
    u = CylField.load(tmp_path / "s_u.txt")
    rec = json.loads((tmp_path / "s.json").read_text())
    assert small.energy(u.values) == pytest.approx(rec["energy"], rel=1e-10)
    assert small.relative_residual(u.values) == pytest.approx(rec["residual"], rel=1e-4, abs=1e-10)
    assert float(np.max(u.values)) <= rec["u_max"] * (1 + 1e-10)


def test_phi_lower_bound(small, small_solution):
    from cylsp.penalty import effective_W_eps
    c, cp = small_solution.phi_bound
    assert c > 0 and cp == 1.0
    S, R = small.grid.mesh()
    # the minorant holds on the whole box, not only on the shell where it was fitted
    assert np.all(small_solution.phi.values >= c / (cp + np.hypot(S, R)) * (1 - 1e-12))
    W = effective_W_eps(small.spec, small.params, c, cp, S, R)
    assert np.all(W >= (1 - small.params.mu) * small.V)


def test_mountain_pass_geometry_guard(flagship, small_solution):
    from cylsp.solver import mountain_pass_geometry
    prob = flagship_problem(flagship, 0.2)
    assert mountain_pass_geometry(prob, small_solution.u.values)
    # a direction concentrated outside the region sees only the linear branch of g; still positive
    out = np.where(prob.inside, 0.0, 1.0)
    assert mountain_pass_geometry(prob, out)
