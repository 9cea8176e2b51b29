import numpy as np
import pytest

from cylsp.errors import DomainError
from cylsp.model import PotentialSpec, RegionLambda
from cylsp.penalty import (
    G_from_coefficients,
    PenalizationParams,
    check_g_properties,
    cosh_barrier,
    crossing_point,
    decay_envelope,
    effective_W,
    effective_W_eps,
    g_from_coefficients,
    hardy_H,
    hardy_positivity_check,
    hardy_potential,
    penalized_G,
    penalized_g,
)
from cylsp.poisson import uniform_grid

ONE = [{"kind": "constant", "c": 1.0}]


def random_bump(grid, rng):
    """Smooth compactly supported bump away from the axis and the box faces."""
    S, R = grid.mesh()
    s0, r0 = rng.uniform(-1, 1), rng.uniform(0.8, 2.2)
    w = rng.uniform(0.3, 0.7)
    x2 = ((S - s0) ** 2 + (R - r0) ** 2) / w**2
    vals = np.where(x2 < 1, np.exp(-1 / (1 - np.minimum(x2, 1 - 1e-12))), 0.0)
    return grid.like(rng.uniform(0.5, 2) * vals)


def test_params_validation():
    with pytest.raises(DomainError):
        PenalizationParams(0.0)
    with pytest.raises(DomainError):
        PenalizationParams(0.1, kappa=0.25)
    with pytest.raises(DomainError):
        PenalizationParams(0.1, mu=1.0)
    assert PenalizationParams(0.2).with_eps(0.1).eps == 0.1


def test_hardy_examples():
    pr = PenalizationParams(0.1)
    assert hardy_potential(pr, (0.0, 1.0)) == pytest.approx(0.1)
    assert hardy_potential(pr, (np.e, 0.0)) == pytest.approx(0.1 / (2 * np.e**2))
    assert hardy_potential(pr, (0.0, 0.0, 1.0)) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        hardy_potential(pr, (0.0, 0.0))


def test_hardy_bound_million_points():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(10**6, 3)) * np.exp(rng.uniform(-8, 8, size=(10**6, 1)))
    pr = PenalizationParams(0.1, kappa=0.2, beta=0.5)
    H = hardy_potential(pr, x)
    assert np.all(H * np.sum(x**2, axis=1) <= 0.2 * (1 + 1e-14))


@pytest.mark.parametrize("kappa", [0.1, 0.2, 0.24])
def test_hardy_positivity_random_bumps(kappa):
    grid = uniform_grid((-2, 2), (0, 3.2), 0.05)
    rng = np.random.default_rng(int(kappa * 100))
    pr = PenalizationParams(0.1, kappa=kappa)
    for _ in range(20):
        assert hardy_positivity_check(random_bump(grid, rng), pr).passed


def test_hardy_positivity_zero_field():
    grid = uniform_grid((-1, 1), (0, 1), 0.1)
    chk = hardy_positivity_check(grid, PenalizationParams(0.1, kappa=0.2499))
    assert chk.lhs == 0 and chk.rhs == 0 and chk.passed


@pytest.fixture
def ring_setup():
    sp = PotentialSpec.from_records(ONE, ONE, ONE)
    return sp, RegionLambda(2.0, 1.0, 1.0), PenalizationParams(0.1)


def test_g_inside_and_negative(ring_setup):
    sp, reg, pr = ring_setup
    assert penalized_g(sp, reg, pr, 4.0, (0.0, 2.0), 2.0) == pytest.approx(16.0)
    assert penalized_g(sp, reg, pr, 4.0, (0.0, 2.0), -1.0) == 0.0
    assert penalized_G(sp, reg, pr, 4.0, (0.0, 2.0), 2.0) == pytest.approx(32 / 5)


def test_g_outside_branches(ring_setup):
    sp, reg, pr = ring_setup
    x = (0.0, 5.0)
    L = pr.eps**2 * hardy_H(pr.kappa, pr.beta, 0.0, 5.0) + pr.mu
    assert penalized_g(sp, reg, pr, 4.0, x, 10.0) == pytest.approx(10 * L)
    small = 1e-2
    assert penalized_g(sp, reg, pr, 4.0, x, small) == pytest.approx(small**4)
    assert penalized_G(sp, reg, pr, 4.0, x, small) == pytest.approx(small**5 / 5)
    sc = crossing_point(L, 1.0, 4.0)
    assert sc**3 == pytest.approx(L)


def test_G_is_primitive(ring_setup):
    from scipy.integrate import quad
    sp, reg, pr = ring_setup
    for x in [(0.0, 2.0), (0.0, 5.0), (3.0, 0.5)]:
        for s in (0.1, 0.5, 1.3):
            num = quad(lambda t: penalized_g(sp, reg, pr, 4.0, x, t), 0, s, epsabs=0, epsrel=1e-12, limit=200)[0]
            assert penalized_G(sp, reg, pr, 4.0, x, s) == pytest.approx(num, rel=1e-9)


def test_branch_continuity():
    K, L, p = 2.0, 0.3, 4.0
    sc = float(crossing_point(L, K, p))
    lo, hi = np.nextafter(sc, 0), np.nextafter(sc, 1)
    assert g_from_coefficients(False, K, L, p, lo) == pytest.approx(g_from_coefficients(False, K, L, p, hi), rel=1e-12)
    assert G_from_coefficients(False, K, L, p, lo) == pytest.approx(G_from_coefficients(False, K, L, p, hi), rel=1e-12)


def test_g_properties_flagship(flagship):
    pr = PenalizationParams(0.05)
    s = np.linspace(-2, 2, 50)
    r = np.linspace(0.05, 4, 50)
    S, R = np.meshgrid(s, r, indexing="ij")
    rep = check_g_properties(flagship.spec, flagship.region, pr, flagship.p, np.stack([S.ravel(), R.ravel()], 1),
                             np.geomspace(1e-4, 10, 50))
    assert rep.ok, rep.worst


def test_effective_potentials():
    sp = PotentialSpec.from_records([], ONE, ONE)
    assert effective_W(sp, 0.0, 3.0) == pytest.approx(0.25)
    sp2 = PotentialSpec.from_records([{"kind": "constant", "c": 2.0}], ONE, [])
    pr = PenalizationParams(0.1, mu=0.1)
    assert effective_W_eps(sp2, pr, 1.0, 1.0, 0.0, 1.0) == pytest.approx(0.9 * 2.0)
    sp3 = PotentialSpec.from_records(ONE, ONE, ONE)
    assert effective_W(sp3, 0.0, 1e9) == pytest.approx(1.0, abs=1e-8)


def test_envelope_examples():
    circle = (0.0, 2.0)
    assert decay_envelope("base", 3.0, 1.0, 0.1, (0.0, 2.0), circle) == pytest.approx(1.0)
    x = (0.0, 3.0)
    e1 = decay_envelope("base", 1.0, 1.0, 0.1, x, circle) * 4
    e2 = decay_envelope("base", 1.0, 1.0, 0.05, x, circle) * 4
    assert e2 == pytest.approx(e1**2, rel=1e-12)
    ray = np.stack([np.zeros(20), np.linspace(2, 6, 20)], 1)
    vals = decay_envelope("base", 1.0, 1.0, 0.1, ray, circle)
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("case,kw", [("inf-quadratic", {"nu": 0.1}), ("∞-subquadratic", {"alpha": 1.0}),
                                     ("0-quadratic", {"nu": 0.1}), ("0-superquadratic", {"gamma": 3.0})])
def test_envelope_cases(case, kw):
    ray = np.stack([np.zeros(20), np.linspace(2.1, 6, 20)], 1)
    vals = decay_envelope(case, 1.0, 1.0, 0.1, ray, (0.0, 2.0), **kw)
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)


def test_envelope_errors():
    with pytest.raises(DomainError):
        decay_envelope("nope", 1.0, 1.0, 0.1, (0.0, 1.0), (0.0, 2.0))
    with pytest.raises(DomainError):
        decay_envelope("base", -1.0, 1.0, 0.1, (0.0, 1.0), (0.0, 2.0))
    with pytest.raises(DomainError):
        decay_envelope("inf-quadratic", 1.0, 1.0, 0.1, (0.0, 1.0), (0.0, 2.0))


def test_cosh_barrier():
    c = (0.0, 2.0)
    assert cosh_barrier(1.0, 0.5, 0.1, (0.0, 2.5), c) == pytest.approx(1.0)
    assert cosh_barrier(1.0, 0.5, 0.1, c, c) == pytest.approx(np.cosh(5.0))
    # parity in R - d
    assert cosh_barrier(1.0, 0.5, 0.1, (0.0, 2.2), c) == pytest.approx(cosh_barrier(1.0, 0.5, 0.1, (0.0, 2.8), c))
