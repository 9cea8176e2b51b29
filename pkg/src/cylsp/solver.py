"""Penalized Schrödinger–Poisson functional on the reduced half-plane and a
solver for its positive critical points.

Unknowns are cell values of ``u`` on a :class:`~cylsp.poisson.CylField` grid.
Every integral carries the ring volume ``2π r h_s h_r`` and the gradient term
uses the symmetric finite-volume stiffness form, so the discrete energy and
its discrete gradient are exactly consistent.

The solve has two phases: a Nehari-projected, Sobolev-preconditioned descent
that brings the concentrated ansatz close to a critical point, followed by a
Newton–Krylov polish of the Euler–Lagrange residual.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import linalg as spla

from . import penalty, poisson
from .errors import DomainError, InvariantError, NonConvergenceError, SolverError, StagnationError
from .limit2d import GroundState2D
from .model import PotentialSpec, RegionLambda, classify_growth, cyl_distance
from .penalty import PenalizationParams
from .poisson import CylField

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 400
    max_newton: int = 100
    switch_tol: float = 2e-2
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    negative_tol: float = 1e-10


def make_grid(center_r: float, eps: float, cells_per_eps: float = 8.0, half_width_eps: float = 14.0) -> CylField:
    """Square box of half-width ``half_width_eps·ε`` around ``(0, center_r)``.

    The r-range is clipped at the axis; cells sit at ``(j+½)h`` so no sample
    lies on it. ``s = 0`` is a cell face, which keeps the grid symmetric under
    ``s → -s``.
    """
    h = eps / cells_per_eps
    half = int(np.ceil(half_width_eps * cells_per_eps))
    ns = 2 * half
    j0 = max(0, int(np.floor(center_r / h)) - half)
    j1 = int(np.floor(center_r / h)) + half
    return CylField(np.zeros((ns, j1 - j0)), h, h, -half * h + 0.5 * h, (j0 + 0.5) * h)


@dataclass(eq=False)
class PenalizedProblem:
    spec: PotentialSpec
    region: RegionLambda
    params: PenalizationParams
    grid: CylField
    p: float = 4.0
    options: SolverOptions = field(default_factory=SolverOptions)
    excluded_radius: float = 0.0

    def __post_init__(self):
        if not self.p > 3:
            raise DomainError("p must exceed 3")
        growth = classify_growth(self.spec, self.p)
        if not growth.admissible:
            raise DomainError(f"potentials are not admissible: {growth}")
        self.growth = growth
        S, R = self.grid.mesh()
        self.V = np.broadcast_to(self.spec.V_at(S, R), S.shape).copy()
        self.K = np.broadcast_to(self.spec.K_at(S, R), S.shape).copy()
        self.rho = np.broadcast_to(self.spec.rho_at(S, R), S.shape).copy()
        for name, arr in (("V", self.V), ("K", self.K), ("rho", self.rho)):
            if np.any(arr < 0):
                raise InvariantError(f"{name} is negative on the grid")
        self.inside = self.region.contains(S, R)
        self.L = penalty.linear_coefficient(self.spec, self.params, S, R, self.excluded_radius)
        self.vol = np.array(self.grid.volumes)
        self.stiff = _stiffness_matrix(self.grid)
        self.has_poisson = bool(np.any(self.rho > 0))
        self._op = poisson.operator_for(self.grid) if self.has_poisson else None

    @property
    def eps(self) -> float:
        return self.params.eps

    @property
    def h(self) -> float:
        return self.grid.h_s

    def field(self, values) -> CylField:
        return self.grid.like(values)

    def potential(self, u):
        """``φ_u`` on the grid (zeros when ρ ≡ 0)."""
        if not self.has_poisson:
            return np.zeros(self.grid.shape)
        return self._op.apply(self.rho * u**2)

    def g(self, u):
        return penalty.g_from_coefficients(self.inside, self.K, self.L, self.p, u)

    def G(self, u):
        return penalty.G_from_coefficients(self.inside, self.K, self.L, self.p, u)

    def dg(self, u):
        return penalty.dg_from_coefficients(self.inside, self.K, self.L, self.p, u)

    def parts(self, u, phi=None):
        """Quadratic, quartic and nonlinear parts of ``J_ε`` (before signs)."""
        phi = self.potential(u) if phi is None else phi
        quad = 0.5 * (self.eps**2 * float(u.ravel() @ (self.stiff @ u.ravel())) + float(np.sum(self.V * u**2 * self.vol)))
        quart = 0.25 * float(np.sum(phi * self.rho * u**2 * self.vol))
        nonlin = float(np.sum(self.G(u) * self.vol))
        return quad, quart, nonlin

    def energy(self, u, phi=None) -> float:
        quad, quart, nonlin = self.parts(u, phi)
        return quad + quart - nonlin

    def gradient(self, u, phi=None):
        """L²(2πr)-gradient ``−ε²Δu + Vu + ρφ_u u − g_ε(x,u)``."""
        phi = self.potential(u) if phi is None else phi
        lap = (self.stiff @ u.ravel()).reshape(u.shape) / self.vol
        return self.eps**2 * lap + self.V * u + self.rho * phi * u - self.g(u)

    def norm(self, a) -> float:
        return float(np.sqrt(np.sum(a**2 * self.vol)))

    def relative_residual(self, u, F=None, phi=None) -> float:
        F = self.gradient(u, phi) if F is None else F
        den = self.norm(self.g(u))
        return self.norm(F) / den if den > 0 else self.norm(F)

    def hess_apply(self, u, phi, v):
        """Second derivative of ``J_ε`` at ``u`` applied to ``v`` (volume-weighted form)."""
        out = self.eps**2 * (self.stiff @ v.ravel()).reshape(v.shape)
        out = out + self.vol * (self.V + self.rho * phi - self.dg(u)) * v
        if self.has_poisson:
            out = out + self.vol * self.rho * u * self._op.apply(2.0 * self.rho * u * v)
        return out

    def local_matrix(self, u, phi, shift=0.0):
        diag = self.vol * (self.V + self.rho * phi - self.dg(u) + shift)
        return (self.eps**2 * self.stiff + sparse.diags(diag.ravel())).tocsc()

    def fiber(self, u, phi=None):
        """Return ``t ↦ J_ε(t u)`` using ``J(tu) = t² A + t⁴ B − Σ G(tu)``."""
        quad, quart, _ = self.parts(u, phi)
        vol = self.vol

        def f(t):
            return t**2 * quad + t**4 * quart - float(np.sum(self.G(t * u) * vol))
        return f

    def nehari_scale(self, u, phi=None, t_max=1e3):
        """Maximizer ``t*`` of the fiber map and its value."""
        f = self.fiber(u, phi)
        ts = np.geomspace(1e-3, t_max, 121)
        vals = np.array([f(t) for t in ts])
        if vals[-1] >= 0:
            raise DomainError("fiber map does not become negative: no mass where the nonlinearity is superlinear")
        k = int(np.argmax(vals))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
        res = optimize.minimize_scalar(lambda t: -f(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * hi})
        t = float(res.x) if -res.fun >= vals[k] else float(ts[k])
        return t, f(t)


def _stiffness_matrix(grid: CylField):
    """Sparse symmetric matrix with ``uᵀ S u = ∫|∇u|²`` (finite volumes, Dirichlet box)."""
    ns, nr = grid.shape
    ws, wr = poisson.laplacian_weights(grid)
    idx = np.arange(ns * nr).reshape(ns, nr)
    diag = np.zeros((ns, nr))
    rows, cols, vals = [], [], []
    # s faces: interior pairs plus the two boundary faces per column
    diag += 2 * ws[None, :]
    a, b = idx[:-1, :].ravel(), idx[1:, :].ravel()
    w = np.broadcast_to(ws[None, :], (ns - 1, nr)).ravel()
    rows += [a, b]
    cols += [b, a]
    vals += [-w, -w]
    # r faces
    diag += wr[None, :-1] + wr[None, 1:]
    a, b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    w = np.broadcast_to(wr[None, 1:-1], (ns, nr - 1)).ravel()
    rows += [a, b]
    cols += [b, a]
    vals += [-w, -w]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(ns * nr, ns * nr))


def energy_J(problem: PenalizedProblem, u: CylField) -> float:
    return problem.energy(u.values)


def grad_J(problem: PenalizedProblem, u: CylField) -> CylField:
    return problem.field(problem.gradient(u.values))


# --------------------------------------------------------------------------
# ansatz


def cutoff(level):
    """Smooth cut-off of the ellipse level: 1 for ``ℓ ≤ 0.36``, 0 for ``ℓ ≥ 1``."""
    lo, hi = 0.36, 1.0
    t = np.clip((np.asarray(level, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    a = np.exp(-1.0 / np.where(mid, 1.0 - t, 1.0))
    b = np.exp(-1.0 / np.where(mid, t, 1.0))
    out[mid] = (a / (a + b))[mid]
    out[t <= 0] = 1.0
    return out


def build_ansatz(problem: PenalizedProblem, ground: GroundState2D, center=None, use_cutoff=True):
    """Rescaled ground state around the circle ``center = (0, r₀)``, cut off in Λ
    and moved onto its fiber maximum. Returns ``(field, t*)``."""
    center = (0.0, problem.region.r0) if center is None else center
    S, R = problem.grid.mesh()
    d = cyl_distance(np.stack([S, R], axis=-1), np.asarray(center, dtype=float))
    u0 = ground(d / problem.eps)
    if use_cutoff:
        u0 = u0 * cutoff(problem.region.level(S, R))
    if not np.all(np.isfinite(u0)) or not np.any(u0 > 0):
        raise SolverError("ansatz is empty or non-finite")
    t, val = problem.nehari_scale(u0)
    if not np.isfinite(val):
        raise SolverError("ansatz energy is not finite")
    return problem.field(t * u0), t


# --------------------------------------------------------------------------
# solve


@dataclass
class SolveReport:
    u: CylField
    phi: CylField
    eps: float
    energy: float
    residual: float
    s_star: float
    r_star: float
    u_max: float
    c_eps: float
    positive: bool
    penal_active: bool
    energy_norm: float
    interaction: float
    iterations: int
    newton_steps: int
    history: list
    wall_time: float = 0.0
    phi_bound: tuple = (np.nan, 1.0)

    def summary(self) -> dict:
        keys = ("eps", "energy", "residual", "s_star", "r_star", "u_max", "c_eps", "positive", "penal_active",
                "energy_norm", "interaction", "iterations", "newton_steps", "wall_time")
        out = {k: getattr(self, k) for k in keys}
        out["phi_bound"] = list(self.phi_bound)
        out["h"] = self.u.h_s
        out["shape"] = list(self.u.shape)
        return out

    def save(self, directory, stem="solve"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.u.save(directory / f"{stem}_u.txt")
        self.phi.save(directory / f"{stem}_phi.txt")
        rec = self.summary()
        rec["history"] = self.history
        tmp = directory / f"{stem}.json.tmp"
        tmp.write_text(json.dumps(rec, indent=2, default=float))
        tmp.replace(directory / f"{stem}.json")


def locate_maximum(u: CylField):
    """Sub-cell maximizer from a parabola through the three samples along each axis."""
    v = u.values
    k, j = np.unravel_index(int(np.argmax(v)), v.shape)

    def vertex(fm, f0, fp):
        den = fm - 2 * f0 + fp
        return 0.0 if den >= 0 else 0.5 * (fm - fp) / den

    ds = vertex(v[k - 1, j], v[k, j], v[k + 1, j]) if 0 < k < v.shape[0] - 1 else 0.0
    dr = vertex(v[k, j - 1], v[k, j], v[k, j + 1]) if 0 < j < v.shape[1] - 1 else 0.0
    return float(u.s[k] + ds * u.h_s), float(u.r[j] + dr * u.h_r), float(v[k, j])


def _descent(problem: PenalizedProblem, u, opts: SolverOptions, history, switch):
    """Nehari-projected preconditioned gradient descent; returns the last iterate."""
    phi = problem.potential(u)
    shift = 0.1 + float(np.max(problem.rho * phi))
    P = (problem.eps**2 * problem.stiff + sparse.diags((problem.vol * (problem.V + shift)).ravel())).tocsc()
    lu = spla.splu(P)
    t, level = problem.nehari_scale(u, phi)
    u = t * u
    phi = problem.potential(u)
    step = 1.0
    for it in range(opts.max_iter):
        F = problem.gradient(u, phi)
        res = problem.relative_residual(u, F, phi)
        history.append({"phase": "descent", "iter": it, "J": level, "residual": res, "step": step})
        if res <= max(switch, opts.tol):
            return u, it
        d = -lu.solve((problem.vol * F).ravel()).reshape(u.shape)
        slope = float(np.sum(problem.vol * F * d))
        if slope >= 0:
            raise StagnationError("preconditioned direction is not a descent direction", history)
        step = min(1.0, 2.0 * step)
        for _ in range(opts.max_backtracks):
            trial = u + step * d
            try:
                t, new_level = problem.nehari_scale(trial)
            except DomainError:
                new_level = np.inf
            if new_level <= level + opts.armijo * step * slope:
                break
            step *= opts.backtrack
        else:
            raise StagnationError(f"line search failed at iteration {it} (J={level:.12g})", history)
        if not new_level < level:
            raise InvariantError("accepted descent step did not decrease the energy")
        u = t * trial
        level = new_level
        phi = problem.potential(u)
    raise NonConvergenceError(f"descent did not reach the switch tolerance in {opts.max_iter} iterations", history)


def _newton(problem: PenalizedProblem, u, opts: SolverOptions, history):
    target = opts.tol * 1e-3
    phi = problem.potential(u)
    F = problem.gradient(u, phi)
    res = problem.relative_residual(u, F, phi)
    n = u.size
    for k in range(opts.max_newton):
        history.append({"phase": "newton", "iter": k, "J": problem.energy(u, phi), "residual": res})
        if res <= target:
            return u, k
        lu = spla.splu(problem.local_matrix(u, phi))
        A = spla.LinearOperator((n, n), matvec=lambda v: problem.hess_apply(u, phi, v.reshape(u.shape)).ravel())
        M = spla.LinearOperator((n, n), matvec=lambda v: lu.solve(v))
        rhs = -(problem.vol * F).ravel()
        delta, info = spla.gmres(A, rhs, M=M, rtol=1e-10, atol=0.0, restart=60, maxiter=20)
        delta = delta.reshape(u.shape)
        step = 1.0
        for _ in range(12):
            trial = u + step * delta
            phi_t = problem.potential(trial)
            F_t = problem.gradient(trial, phi_t)
            res_t = problem.relative_residual(trial, F_t, phi_t)
            if res_t < res:
                break
            step *= 0.5
        else:
            if res <= opts.tol:
                return u, k
            raise StagnationError(f"Newton step failed to reduce the residual ({res:.3e})", history)
        if res_t > 0.5 * res and res <= opts.tol:
            u, phi, F, res = trial, phi_t, F_t, res_t
            history.append({"phase": "newton", "iter": k + 1, "J": problem.energy(u, phi), "residual": res})
            return u, k + 1
        history[-1].update(step=step, gmres_info=int(info))
        u, phi, F, res = trial, phi_t, F_t, res_t
    if res <= opts.tol:
        return u, opts.max_newton
    raise NonConvergenceError(f"Newton polish stopped at residual {res:.3e}", history)


def descent_solve(problem: PenalizedProblem, initial: CylField, mp_level=True) -> SolveReport:
    """Find a positive critical point of ``J_ε`` starting from ``initial``."""
    t0 = time.perf_counter()
    opts = problem.options
    u = np.array(initial.values, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DomainError("initial field is not finite")
    J0 = problem.energy(u)
    if not (np.isfinite(J0) and J0 > 0):
        raise DomainError(f"initial field must have finite positive energy (J = {J0})")
    if not mountain_pass_geometry(problem, u):
        raise DomainError("J is not positive on a small sphere around 0; reduce kappa or mu")
    history: list = []
    iters = 0
    switch = opts.switch_tol
    while True:
        if problem.relative_residual(u) > max(switch, opts.tol):
            u, k = _descent(problem, u, opts, history, switch)
            iters += k
        try:
            u_newton, nsteps = _newton(problem, u, opts, history)
            break
        except SolverError:
            # outside Newton's basin: descend further before polishing again
            if switch <= 10 * opts.tol:
                raise
            log.info("Newton polish failed from residual %.1e; tightening the switch", switch)
            switch /= 10.0
    u = u_newton
    phi = problem.potential(u)
    res = problem.relative_residual(u, phi=phi)
    if res > opts.tol:
        raise NonConvergenceError(f"final residual {res:.3e} exceeds tol {opts.tol:.1e}", history)
    neg = problem.norm(np.minimum(u, 0.0))
    if neg > opts.negative_tol:
        raise InvariantError(f"solution has a negative part of L2 norm {neg:.3e}")
    u_field = problem.field(u)
    s_star, r_star, u_max = locate_maximum(u_field)
    energy = problem.energy(u, phi)
    quad = problem.eps**2 * float(u.ravel() @ (problem.stiff @ u.ravel())) + float(np.sum(problem.V * u**2 * problem.vol))
    report = SolveReport(
        u=u_field, phi=problem.field(phi), eps=problem.eps, energy=energy, residual=res,
        s_star=s_star, r_star=r_star, u_max=u_max, c_eps=np.nan, positive=bool(neg <= opts.negative_tol),
        penal_active=False, energy_norm=quad, interaction=float(4 * np.pi * np.sum(phi * problem.rho * u**2 * problem.vol)),
        iterations=iters, newton_steps=nsteps, history=history,
    )
    flag, _ = verify_original(problem, report)
    report.penal_active = not flag
    report.phi_bound = phi_lower_bound(problem, report.phi)
    if mp_level:
        report.c_eps = mountain_pass_level(problem, report.u)
    report.wall_time = time.perf_counter() - t0
    log.info("eps=%g solved: J=%.10g residual=%.2e r*=%.5f (%d+%d its, %.1fs)", problem.eps, energy, res,
             r_star, iters, nsteps, report.wall_time)
    return report


def mountain_pass_level(problem: PenalizedProblem, u_star: CylField, n=401, t_max=8.0) -> float:
    """Maximum of ``J_ε`` on the sampled segment ``t ↦ t·T u*``, ``t ∈ [0, 1]``."""
    f = problem.fiber(u_star.values)
    T = 2.0
    while f(T) >= 0:
        T *= 2.0
        if T > t_max * 1e3:
            raise SolverError("no multiple of the solution with negative energy")
    ts = np.linspace(0.0, T, n)
    ts = np.union1d(ts, [1.0])
    vals = np.array([f(t) for t in ts])
    return float(np.max(vals))


def mountain_pass_geometry(problem: PenalizedProblem, direction, radius=1e-2) -> bool:
    """``J_ε > 0`` at the point of norm ``radius`` along ``direction``.

    The norm is ``‖·‖_{H_{V,ε}}``; near 0 the quadratic part must dominate,
    which fails when the penalization constants are too large.
    """
    d = np.asarray(direction, dtype=float)
    quad = problem.eps**2 * float(d.ravel() @ (problem.stiff @ d.ravel())) + float(np.sum(problem.V * d**2 * problem.vol))
    if not quad > 0:
        return False
    return problem.energy(radius * d / np.sqrt(quad)) > 0


def phi_lower_bound(problem: PenalizedProblem, phi, shell_cells=2):
    """Constants ``(C_ε, C'_ε)`` of a minorant ``φ ≥ C_ε/(C'_ε + |x|)``.

    ``C'_ε = 1`` and ``C_ε`` is the minimum of ``φ·(1+|x|)`` over the outer
    ``shell_cells`` layers of the box (the axis side excluded).
    """
    vals = phi.values if isinstance(phi, CylField) else np.asarray(phi)
    S, R = problem.grid.mesh()
    mask = np.zeros(vals.shape, dtype=bool)
    mask[:shell_cells, :] = mask[-shell_cells:, :] = True
    mask[:, -shell_cells:] = True
    if problem.grid.r0 - 0.5 * problem.grid.h_r > 1e-12:
        mask[:, :shell_cells] = True
    return float(np.min(vals[mask] * (1.0 + np.hypot(S[mask], R[mask])))), 1.0


def verify_original(problem: PenalizedProblem, report: SolveReport):
    """Check ``K u^{p-1} ≤ ε²H + μV`` outside Λ; returns ``(flag, margin field)``."""
    u = np.maximum(report.u.values, 0.0)
    margin = problem.L - problem.K * u ** (problem.p - 1)
    margin = np.where(problem.inside, np.inf, margin)
    flag = bool(np.all(margin[~problem.inside] >= 0))
    return flag, problem.field(np.where(problem.inside, 0.0, margin))
