"""ε-sweeps of the penalized solver with concentration diagnostics."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import limit2d, penalty
from .config import ProblemConfig
from .errors import DomainError, SolverError
from .limit2d import GroundState2D
from .model import cyl_distance, eval_potentials, minimize_M_on_ring
from .penalty import PenalizationParams
from .poisson import CylField
from .solver import PenalizedProblem, SolverOptions, SolveReport, build_ansatz, descent_solve, make_grid, verify_original

log = logging.getLogger(__name__)

CSV_COLUMNS = ("eps", "c_eps_over_eps2", "J_over_eps2", "r_star", "s_star", "u_max", "lambda_hat",
               "penal_active", "target_pi_infM", "target_r_star")


@dataclass
class SweepConfig:
    problem: ProblemConfig
    eps: tuple = (0.2, 0.1, 0.05)
    cells_per_eps: float = 8.0
    half_width_eps: float = 14.0
    out_dir: Path | None = None
    envelope_case: str = "auto"
    profile_window: float = 3.0
    threads: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("eps list must be positive and strictly decreasing")
        if self.cells_per_eps < 8:
            raise DomainError("need at least 8 cells per eps in the concentration zone")
        self.eps = eps

    @classmethod
    def from_problem(cls, problem: ProblemConfig, eps=None, out_dir=None, tol=None, threads=1):
        sv = problem.solver
        opts = SolverOptions(**{k: sv[k] for k in ("tol", "max_iter", "max_newton", "switch_tol") if k in sv})
        if tol is not None:
            opts.tol = float(tol)
        sw = problem.sweep
        return cls(problem=problem, eps=tuple(eps if eps is not None else sw.get("eps", (0.2, 0.1, 0.05))),
                   cells_per_eps=float(sv.get("cells_per_eps", 8)), half_width_eps=float(sv.get("half_width_eps", 14)),
                   out_dir=Path(out_dir) if out_dir else None, envelope_case=sw.get("envelope_case", "auto"),
                   profile_window=float(sw.get("profile_window", 3.0)), threads=int(threads), solver=opts)


@dataclass
class SweepRow:
    eps: float
    status: str = "ok"
    message: str = ""
    c_eps_over_eps2: float = math.nan
    J_over_eps2: float = math.nan
    r_star: float = math.nan
    s_star: float = math.nan
    u_max: float = math.nan
    lambda_hat: float = math.nan
    penal_active: bool | None = None
    target_pi_infM: float = math.nan
    target_r_star: float = math.nan
    target_2pi_infM: float = math.nan
    residual: float = math.nan
    h: float = math.nan
    positive: bool | None = None
    verify_original: bool | None = None
    decay_C: float = math.nan
    decay_lambda: float = math.nan
    decay_rms: float = math.nan
    local_rate: float = math.nan
    profile_deviation: float = math.nan
    boundary_distance: float = math.nan
    energy_norm_over_eps2: float = math.nan
    interaction_over_eps2: float = math.nan
    iterations: int = 0
    newton_steps: int = 0
    wall_time: float = math.nan

    def csv_record(self) -> dict:
        rec = {k: getattr(self, k) for k in CSV_COLUMNS}
        rec["penal_active"] = "" if self.penal_active is None else int(self.penal_active)
        return rec


@dataclass
class SweepReport:
    rows: list
    target_r_star: float
    inf_M: float
    e11: float
    reports: dict = field(default_factory=dict, repr=False)

    def row(self, eps) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.eps, eps):
                return r
        raise KeyError(eps)

    def write_csv(self, path):
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r.csv_record())
        tmp.replace(path)

    def write_json(self, path):
        rec = {"target_r_star": self.target_r_star, "inf_M": self.inf_M, "E11": self.e11,
               "rows": [asdict(r) for r in self.rows]}
        Path(path).write_text(json.dumps(rec, indent=2, default=float))


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class DecayFit:
    C: float
    lam: float
    lam_hat: float
    nu: float | None
    rms: float
    n: int
    case: str


def fit_decay_samples(points, values, eps, circle, case="base", alpha=None, gamma=None) -> DecayFit:
    """Least-squares fit of ``log u`` to the log form of an envelope.

    Unknowns are ``log C`` and ``λ`` (and ``ν`` for the quadratic cases);
    ``α``/``γ`` are taken as given for the sub/superquadratic cases.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float).ravel()
    keep = vals > 0
    pts, vals = pts[keep], vals[keep]
    if vals.size < 10:
        raise SolverError(f"decay fit needs at least 10 positive samples, got {vals.size}")
    rad = np.hypot(pts[:, 0], pts[:, 1])
    d = cyl_distance(pts, np.asarray(circle, dtype=float))
    q = d / (1.0 + d)
    y = np.log(vals)
    cols = [np.ones_like(y)]
    case = penalty._ALIASES.get(case, case)
    if case in ("base", "inf-quadratic", "0-quadratic"):
        y = y + np.log1p(rad)
        cols.append(-q / eps)
        if case == "inf-quadratic":
            cols.append(-np.log1p(rad) / eps)
        elif case == "0-quadratic":
            cols.append(np.log(rad / (1.0 + rad)) / eps)
    elif case == "inf-subquadratic":
        cols.append(-q * (1.0 + rad) ** ((2.0 - alpha) / 2.0) / eps)
    elif case == "0-superquadratic":
        cols.append(-q * (rad / (1.0 + rad)) ** ((gamma - 2.0) / 2.0) / eps)
    else:
        raise DomainError(f"unknown envelope case {case!r}")
    X = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    nu = float(coef[2]) if X.shape[1] > 2 else None
    lam = float(coef[1])
    return DecayFit(C=float(np.exp(coef[0])), lam=lam, lam_hat=lam / eps, nu=nu, rms=rms, n=int(y.size), case=case)


def fit_decay(u: CylField, circle, eps, case="base", floor=1e-12, core=2.0, edge=3.0, **kw) -> DecayFit:
    """Fit an envelope to the cell values of ``u`` outside the core ``d < core·ε``.

    Cells closer than ``edge·ε`` to a Dirichlet face of the box are dropped
    (the axis side, when the box reaches it, is not a boundary).
    """
    S, R = u.mesh()
    d = cyl_distance(np.stack([S, R], axis=-1), np.asarray(circle, dtype=float))
    s_lo, s_hi = u.s[0] - 0.5 * u.h_s, u.s[-1] + 0.5 * u.h_s
    r_lo, r_hi = u.r[0] - 0.5 * u.h_r, u.r[-1] + 0.5 * u.h_r
    margin = np.minimum.reduce([S - s_lo, s_hi - S, r_hi - R])
    if r_lo > 1e-12:
        margin = np.minimum(margin, R - r_lo)
    mask = (u.values > floor) & (d >= core * eps) & (margin >= edge * eps)
    pts = np.stack([S[mask], R[mask]], axis=-1)
    return fit_decay_samples(pts, u.values[mask], eps, circle, case, **kw)


def local_decay_rate(u: CylField, circle, eps, window=(2.0, 6.0), edge=3.0) -> float:
    """Slope ``k`` of ``log u ≈ a − k·d`` for ``window[0]·ε ≤ d ≤ window[1]·ε``.

    A plain exponential rate per unit length, without the saturating
    ``d/(1+d)`` of the envelopes; expected to scale like ``1/ε``.
    """
    S, R = u.mesh()
    d = cyl_distance(np.stack([S, R], axis=-1), np.asarray(circle, dtype=float))
    margin = np.minimum.reduce([S - u.s[0], u.s[-1] - S, u.r[-1] - R])
    mask = (d >= window[0] * eps) & (d <= window[1] * eps) & (u.values > 0) & (margin >= edge * eps)
    if mask.sum() < 10:
        raise SolverError("too few samples for the local decay rate")
    X = np.stack([np.ones(mask.sum()), -d[mask]], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(u.values[mask]), rcond=None)
    return float(coef[1])


def rescaled_profile_check(u: CylField, center, eps, ground: GroundState2D, window=3.0, n=81) -> float:
    """``sup_{|y|≤R} |u(x̄ + εy) − w(|y|)|`` with bilinear interpolation of ``u``."""
    s0, r0 = map(float, center)
    if window == 0:
        y_s = np.zeros(1)
        y_r = np.zeros(1)
    else:
        g = np.linspace(-window, window, n)
        Ys, Yr = np.meshgrid(g, g, indexing="ij")
        inside = Ys**2 + Yr**2 <= window**2
        y_s, y_r = Ys[inside], Yr[inside]
    xs, xr = s0 + eps * y_s, r0 + eps * y_r
    if xs.min() < u.s[0] or xs.max() > u.s[-1] or xr.min() < u.r[0] or xr.max() > u.r[-1]:
        raise DomainError("profile window exceeds the grid")
    interp = RegularGridInterpolator((u.s, u.r), u.values, method="linear")
    v = interp(np.stack([xs, xr], axis=-1))
    w = ground(np.hypot(y_s, y_r))
    return float(np.max(np.abs(v - w)))


# --------------------------------------------------------------------------
# sweep


def _penalization(cfg: ProblemConfig, eps) -> PenalizationParams:
    pen = cfg.penalization
    return PenalizationParams(eps, float(pen["kappa"]), float(pen["beta"]), float(pen["mu"]))


def solve_single(cfg: ProblemConfig, eps, center_r, cells_per_eps=8.0, half_width_eps=14.0,
                 options: SolverOptions | None = None, ground_cache=None):
    """Grid, problem, ansatz and solve for one ε. Returns ``(problem, report)``."""
    grid = make_grid(center_r, eps, cells_per_eps, half_width_eps)
    problem = PenalizedProblem(cfg.spec, cfg.region, _penalization(cfg, eps), grid, cfg.p,
                               options=options or SolverOptions(),
                               excluded_radius=float(cfg.solver.get("excluded_radius", 0.0)))
    a, b, _ = eval_potentials(cfg.spec, 0.0, center_r)
    ground = _ground(a, b, cfg.p, ground_cache)
    u0, _ = build_ansatz(problem, ground, (0.0, center_r))
    return problem, descent_solve(problem, u0)


def _ground(a, b, p, cache=None):
    key = (round(a, 14), round(b, 14), p)
    if cache is not None and key in cache:
        return cache[key]
    gs = limit2d.shoot_radial_ground_state(a, b, p)
    if cache is not None:
        cache[key] = gs
    return gs


def _row(config: SweepConfig, eps, targets, ground_cache) -> tuple[SweepRow, SolveReport | None]:
    cfg = config.problem
    e11, ring = targets
    row = SweepRow(eps=eps, target_pi_infM=math.pi * ring.value, target_2pi_infM=2 * math.pi * ring.value,
                   target_r_star=ring.r_star)
    try:
        problem, rep = solve_single(cfg, eps, ring.r_star, config.cells_per_eps, config.half_width_eps,
                                    config.solver, ground_cache)
    except SolverError as exc:
        row.status, row.message = "failed", f"{type(exc).__name__}: {exc}"
        log.warning("eps=%g failed: %s", eps, exc)
        return row, None
    flag, _ = verify_original(problem, rep)
    row.c_eps_over_eps2 = rep.c_eps / eps**2
    row.J_over_eps2 = rep.energy / eps**2
    row.r_star, row.s_star, row.u_max = rep.r_star, rep.s_star, rep.u_max
    row.penal_active = rep.penal_active
    row.verify_original = flag
    row.residual, row.h, row.positive = rep.residual, problem.h, rep.positive
    row.energy_norm_over_eps2 = rep.energy_norm / eps**2
    row.interaction_over_eps2 = rep.interaction / eps**2
    row.iterations, row.newton_steps, row.wall_time = rep.iterations, rep.newton_steps, rep.wall_time
    row.boundary_distance = cfg.region.boundary_distance(rep.s_star, rep.r_star)
    case = config.envelope_case
    growth = problem.growth
    if case == "auto":
        case = penalty.envelope_case_for(growth)
    try:
        fit = fit_decay(rep.u, (0.0, rep.r_star), eps, case, alpha=growth.alpha, gamma=growth.gamma)
        row.decay_C, row.decay_lambda, row.lambda_hat, row.decay_rms = fit.C, fit.lam, fit.lam_hat, fit.rms
    except SolverError as exc:
        row.message = f"decay fit: {exc}"
    try:
        row.local_rate = local_decay_rate(rep.u, (0.0, rep.r_star), eps)
    except SolverError:
        pass
    a, b, _ = eval_potentials(cfg.spec, rep.s_star, rep.r_star)
    ground = _ground(a, b, cfg.p, ground_cache)
    try:
        row.profile_deviation = rescaled_profile_check(rep.u, (rep.s_star, rep.r_star), eps, ground,
                                                       config.profile_window)
    except DomainError as exc:
        row.message = f"profile check: {exc}"
    if config.out_dir is not None:
        rep.save(config.out_dir, stem=f"solve_eps{eps:g}")
    return row, rep


def run_sweep(config: SweepConfig, keep_reports=False) -> SweepReport:
    cfg = config.problem
    cache = limit2d.build_cache(cfg.p)
    ring = minimize_M_on_ring(cfg.spec, cache.e11, cfg.p, cfg.region)
    ground_cache: dict = {}
    if config.out_dir is not None:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    work = lambda e: _row(config, e, (cache.e11, ring), ground_cache)  # noqa: E731
    if config.threads > 1 and len(config.eps) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(work, config.eps))
    else:
        results = [work(e) for e in config.eps]
    report = SweepReport(rows=[r for r, _ in results], target_r_star=ring.r_star, inf_M=ring.value, e11=cache.e11)
    if keep_reports:
        report.reports = {r.eps: rep for r, rep in results if rep is not None}
    if config.out_dir is not None:
        report.write_csv(Path(config.out_dir) / "sweep.csv")
        report.write_json(Path(config.out_dir) / "sweep.json")
    return report
