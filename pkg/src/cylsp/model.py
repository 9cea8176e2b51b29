"""Problem data: potentials V, K, ρ, the region Λ, growth classes and M/A.

Everything is written in the reduced coordinates ``s`` (along the symmetry
axis) and ``r ≥ 0`` (distance to the axis), so cylindrical symmetry holds by
construction. Potentials are sums of closed-form terms whose asymptotics are
known exactly; that is what makes ``classify_growth`` decidable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import DomainError, InvariantError

INF = math.inf


class Unclassifiable(Exception):
    """Raised internally when a term has no determinate asymptotic order."""


# --------------------------------------------------------------------------
# terms
#
# Each term reports its asymptotics as a pair (lo, hi) of exponents:
#   at infinity: c|x|^lo <= term <= C|x|^hi for large |x|
#   at the origin: c|x|^lo <= term <= C|x|^hi for small |x|
# lo is None when the term has no positive lower bound there (it may vanish);
# hi = -inf (infinity) / +inf (origin) when the term vanishes faster than any power.


def _norm(s, r):
    return np.hypot(s, r)


@dataclass(frozen=True)
class Constant:
    c: float
    kind: str = field(default="constant", init=False)

    def __call__(self, s, r):
        return np.full(np.broadcast(s, r).shape, float(self.c))

    def singular_at(self, s, r):
        return np.zeros(np.broadcast(s, r).shape, dtype=bool)

    def at_infinity(self):
        return (0.0, 0.0) if self.c > 0 else (None, -INF)

    def at_origin(self):
        return (0.0, 0.0) if self.c > 0 else (None, INF)


@dataclass(frozen=True)
class Power:
    """``c |x|^q`` with ``|x|`` the Euclidean norm in R^3."""

    c: float
    q: float
    kind: str = field(default="power", init=False)

    def __call__(self, s, r):
        with np.errstate(divide="ignore"):
            return self.c * _norm(s, r) ** self.q

    def singular_at(self, s, r):
        return (self.q < 0) & (_norm(s, r) == 0)

    def at_infinity(self):
        return (self.q, self.q) if self.c > 0 else (None, -INF)

    def at_origin(self):
        return (self.q, self.q) if self.c > 0 else (None, INF)


@dataclass(frozen=True)
class RingPoly:
    """``Σ c_ij s^i (r - r_center)^j``, optionally restricted to a window.

    ``coeffs`` is a tuple of ``(i, j, c)``; outside ``window`` (a pair of
    ``(lo, hi)`` intervals for s and r) the term is zero.
    """

    coeffs: tuple
    r_center: float = 0.0
    window: tuple | None = None
    kind: str = field(default="poly", init=False)

    def __call__(self, s, r):
        s = np.asarray(s, dtype=float)
        r = np.asarray(r, dtype=float)
        out = np.zeros(np.broadcast(s, r).shape)
        dr = r - self.r_center
        for i, j, c in self.coeffs:
            out = out + c * s**i * dr**j
        if self.window is not None:
            (s0, s1), (r0, r1) = self.window
            out = np.where((s >= s0) & (s <= s1) & (r >= r0) & (r <= r1), out, 0.0)
        return out

    def singular_at(self, s, r):
        return np.zeros(np.broadcast(s, r).shape, dtype=bool)

    def _sum_of_even_monomials(self):
        return all(c >= 0 and i % 2 == 0 and j % 2 == 0 for i, j, c in self.coeffs)

    def at_infinity(self):
        if self.window is not None:
            return (None, -INF)
        nonzero = [(i, j, c) for i, j, c in self.coeffs if c != 0]
        if not nonzero:
            return (None, -INF)
        if not self._sum_of_even_monomials():
            raise Unclassifiable("polynomial term is not a sum of nonnegative even monomials")
        hi = float(max(i + j for i, j, _ in nonzero))
        pure_s = [i for i, j, c in nonzero if j == 0]
        pure_r = [j for i, j, c in nonzero if i == 0]
        lo = float(min(max(pure_s), max(pure_r))) if pure_s and pure_r else None
        return (lo, hi)

    def at_origin(self):
        if self.window is not None:
            (s0, s1), (r0, r1) = self.window
            if not (s0 < 0 < s1 and r0 <= 0 < r1):
                return (None, INF)
        v0 = float(self(0.0, 0.0))
        if v0 > 0:
            return (0.0, 0.0)
        raise Unclassifiable("polynomial term vanishes at the origin; order not determined")


@dataclass(frozen=True)
class Gaussian:
    """``c exp(-((s-s0)² + (r-r0)²)/width²)``."""

    c: float
    s0: float
    r0: float
    width: float
    kind: str = field(default="gaussian", init=False)

    def __call__(self, s, r):
        return self.c * np.exp(-((np.asarray(s) - self.s0) ** 2 + (np.asarray(r) - self.r0) ** 2) / self.width**2)

    def singular_at(self, s, r):
        return np.zeros(np.broadcast(s, r).shape, dtype=bool)

    def at_infinity(self):
        return (None, -INF)

    def at_origin(self):
        return (0.0, 0.0) if self.c > 0 else (None, INF)


@dataclass(frozen=True)
class Bump:
    """Smooth bump ``c exp(1 - 1/(1-t²))`` supported in the shell ``r_in < |x| < r_out``."""

    c: float
    r_in: float
    r_out: float
    kind: str = field(default="bump", init=False)

    def __post_init__(self):
        if not 0 <= self.r_in < self.r_out:
            raise DomainError(f"bump shell needs 0 <= r_in < r_out, got {self.r_in}, {self.r_out}")

    def __call__(self, s, r):
        rad = _norm(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
        mid = 0.5 * (self.r_in + self.r_out)
        half = 0.5 * (self.r_out - self.r_in)
        t2 = ((rad - mid) / half) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            val = np.where(t2 < 1, np.exp(1 - 1 / np.where(t2 < 1, 1 - t2, 1.0)), 0.0)
        return self.c * val

    def singular_at(self, s, r):
        return np.zeros(np.broadcast(s, r).shape, dtype=bool)

    def at_infinity(self):
        return (None, -INF)

    def at_origin(self):
        if self.r_in > 0:
            return (None, INF)
        raise Unclassifiable("bump touching the origin has no power-law order there")


TERM_KINDS = {"constant": Constant, "power": Power, "poly": RingPoly, "gaussian": Gaussian, "bump": Bump}


def make_term(rec: dict):
    """Build a term from a config record ``{kind: ..., **params}``."""
    rec = dict(rec)
    kind = rec.pop("kind", None)
    if kind not in TERM_KINDS:
        raise DomainError(f"unknown term kind {kind!r}; expected one of {sorted(TERM_KINDS)}")
    if kind == "poly":
        rec["coeffs"] = tuple(tuple(float(x) if k == 2 else int(x) for k, x in enumerate(t)) for t in rec["coeffs"])
        if rec.get("window") is not None:
            rec["window"] = tuple(tuple(map(float, w)) for w in rec["window"])
    try:
        return TERM_KINDS[kind](**rec)
    except TypeError as exc:
        raise DomainError(f"bad parameters for term {kind!r}: {exc}") from None


def _evaluate(terms, s, r):
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.zeros(np.broadcast(s, r).shape)
    for t in terms:
        if np.any(t.singular_at(s, r)):
            raise DomainError(f"{t.kind} term evaluated at its singularity (the origin)")
        out = out + t(s, r)
    return out


@dataclass(frozen=True)
class PotentialSpec:
    """Closed-form descriptions of V, K and ρ.

    ``exponents`` carries declared (σ, τ, α, γ) metadata, if any.
    """

    V: tuple = ()
    K: tuple = ()
    rho: tuple = ()
    exponents: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.K or all(getattr(t, "c", 1.0) == 0 for t in self.K):
            raise InvariantError("K must not vanish identically")

    @classmethod
    def from_records(cls, V: Sequence[dict], K: Sequence[dict], rho: Sequence[dict] = (), exponents=None):
        return cls(V=tuple(make_term(t) for t in V), K=tuple(make_term(t) for t in K),
                   rho=tuple(make_term(t) for t in rho), exponents=dict(exponents or {}))

    def V_at(self, s, r):
        return _evaluate(self.V, s, r)

    def K_at(self, s, r):
        return _evaluate(self.K, s, r)

    def rho_at(self, s, r):
        return _evaluate(self.rho, s, r)


def eval_potentials(spec: PotentialSpec, s, r):
    """Return ``(V, K, ρ)`` at ``(s, r)``; raises on singular points or ``r < 0``."""
    if np.any(np.asarray(r) < 0):
        raise DomainError("r must be nonnegative")
    V, K, rho = spec.V_at(s, r), spec.K_at(s, r), spec.rho_at(s, r)
    for name, val in (("V", V), ("K", K), ("rho", rho)):
        if np.any(val < 0):
            raise InvariantError(f"{name} is negative at an evaluated point")
    if np.ndim(V) == 0:
        return float(V), float(K), float(rho)
    return V, K, rho


# --------------------------------------------------------------------------
# region Λ


@dataclass(frozen=True)
class RegionLambda:
    """Axis-avoiding ellipse of revolution ``(s/a_s)² + ((r-r0)/a_r)² < 1``."""

    r0: float
    a_s: float
    a_r: float

    def __post_init__(self):
        if not (self.a_s > 0 and self.a_r > 0):
            raise DomainError("region half-widths must be positive")
        if not self.r0 - self.a_r > 0:
            raise InvariantError(f"closure of the region meets the axis (r0 - a_r = {self.r0 - self.a_r})")

    @property
    def axis_margin(self) -> float:
        return self.r0 - self.a_r

    def level(self, s, r):
        return (np.asarray(s) / self.a_s) ** 2 + ((np.asarray(r) - self.r0) / self.a_r) ** 2

    def contains(self, s, r):
        return self.level(s, r) < 1.0

    @property
    def slice_bounds(self) -> tuple[float, float]:
        return self.r0 - self.a_r, self.r0 + self.a_r

    def boundary_distance(self, s, r, n=2048):
        """``d_d`` from (s, r) to the boundary ellipse, by dense sampling."""
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        bs = self.a_s * np.cos(t)
        br = self.r0 + self.a_r * np.sin(t)
        return float(np.min(np.hypot(bs - s, br - r)))


# --------------------------------------------------------------------------
# growth classification


@dataclass(frozen=True)
class GrowthClass:
    g1_inf: bool = False
    g2_inf: bool = False
    g3_inf: bool = False
    g1_0: bool = False
    g2_0: bool = False
    g3_0: bool = False
    sigma: float | None = None
    alpha: float | None = None
    tau: float | None = None
    gamma: float | None = None
    unclassifiable: bool = False
    reason: str = ""

    @property
    def admissible(self) -> bool:
        return (not self.unclassifiable and (self.g1_inf or self.g2_inf or self.g3_inf)
                and (self.g1_0 or self.g2_0 or self.g3_0))

    def flags(self) -> dict:
        return {"G1_inf": self.g1_inf, "G2_inf": self.g2_inf, "G3_inf": self.g3_inf,
                "G1_0": self.g1_0, "G2_0": self.g2_0, "G3_0": self.g3_0}


def _check_sign(terms):
    for t in terms:
        if getattr(t, "c", 1.0) < 0:
            raise Unclassifiable(f"{t.kind} term has a negative coefficient")


def _sum_infinity(terms):
    los = [lo for lo, _ in (t.at_infinity() for t in terms) if lo is not None]
    his = [hi for _, hi in (t.at_infinity() for t in terms)]
    return (max(los) if los else None, max(his) if his else -INF)


def _sum_origin(terms):
    pairs = [t.at_origin() for t in terms]
    los = [lo for lo, _ in pairs if lo is not None]
    his = [hi for _, hi in pairs]
    return (min(los) if los else None, min(his) if his else INF)


def classify_growth(spec: PotentialSpec, p: float) -> GrowthClass:
    """Decide which growth sets hold at infinity and at the origin.

    Works from the exact term asymptotics; W = V + ρ/(1+|x|). Specs whose
    order cannot be determined yield ``unclassifiable=True``.
    """
    if not p > 3:
        raise DomainError(f"growth classification needs p > 3, got {p}")
    try:
        for terms in (spec.V, spec.K, spec.rho):
            _check_sign(terms)
        lo_v, _ = _sum_infinity(spec.V)
        lo_rho, _ = _sum_infinity(spec.rho)
        _, hi_k = _sum_infinity(spec.K)
        v0_lo, _ = _sum_origin(spec.V)
        _, k0_hi = _sum_origin(spec.K)
    except Unclassifiable as exc:
        return GrowthClass(unclassifiable=True, reason=str(exc))

    candidates = [x for x in (lo_v, None if lo_rho is None else lo_rho - 1.0) if x is not None]
    w_lo = max(candidates) if candidates else None

    g1_inf = hi_k < p - 3
    g2_inf = w_lo is not None and w_lo >= -2.0
    g3_inf = w_lo is not None and w_lo > -2.0
    g1_0 = k0_hi > -2.0
    g2_0 = v0_lo is not None and v0_lo <= -2.0
    g3_0 = v0_lo is not None and v0_lo < -2.0
    return GrowthClass(
        g1_inf=g1_inf, g2_inf=g2_inf, g3_inf=g3_inf, g1_0=g1_0, g2_0=g2_0, g3_0=g3_0,
        sigma=hi_k, alpha=(0.0 - w_lo if g3_inf else None), tau=k0_hi, gamma=(0.0 - v0_lo if g3_0 else None),
    )


# --------------------------------------------------------------------------
# concentration functionals


def _check_nonneg(V, K):
    if np.any(V < 0) or np.any(K < 0):
        raise InvariantError("V and K must be nonnegative")


def auxiliary_potential_M(spec: PotentialSpec, e11: float, p: float, s, r):
    """``E(1,1) r V^{(p+1)/(p-1)-1} K^{-2/(p-1)}``, and ``+∞`` where K = 0."""
    V, K, _ = eval_potentials(spec, s, r)
    V, K = np.asarray(V, dtype=float), np.asarray(K, dtype=float)
    _check_nonneg(V, K)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = e11 * np.asarray(r, dtype=float) * V ** ((p + 1) / (p - 1) - 1) * K ** (-2.0 / (p - 1))
    m = np.where(K > 0, m, INF)
    return float(m) if m.ndim == 0 else m


def concentration_functional_A(spec: PotentialSpec, p: float, s, r):
    """``V^{(p+1)/(p-1)-3/2} K^{-2/(p-1)}``, and ``+∞`` where K = 0."""
    V, K, _ = eval_potentials(spec, s, r)
    V, K = np.asarray(V, dtype=float), np.asarray(K, dtype=float)
    _check_nonneg(V, K)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = V ** ((p + 1) / (p - 1) - 1.5) * K ** (-2.0 / (p - 1))
    a = np.where(K > 0, a, INF)
    return float(a) if a.ndim == 0 else a


class NoMinimizerError(DomainError):
    pass


@dataclass(frozen=True)
class RingMinimum:
    r_star: float
    value: float
    boundary_value: float
    inf_region: float
    interior: bool
    hyp_strict: bool
    hyp_double: bool

    @property
    def point(self) -> tuple[float, float]:
        return (0.0, self.r_star)


def _region_samples(region: RegionLambda, n):
    ss = np.linspace(-region.a_s, region.a_s, n)
    rr = np.linspace(*region.slice_bounds, n)
    S, R = np.meshgrid(ss, rr, indexing="ij")
    inside = region.contains(S, R)
    return S[inside], R[inside]


def minimize_M_on_ring(spec: PotentialSpec, e11: float, p: float, region: RegionLambda, n=2001) -> RingMinimum:
    """Minimize M over the slice ``Λ ∩ π`` (s = 0) by dense sampling and Brent refinement.

    Also reports ``0 < inf_{Λ∩π} M < inf_{∂Λ∩π} M`` (``hyp_strict``) and
    ``inf_{Λ∩π} M < 2 inf_Λ M`` (``hyp_double``).
    """
    lo, hi = region.slice_bounds
    rr = np.linspace(lo, hi, n)
    m = auxiliary_potential_M(spec, e11, p, 0.0, rr)
    if not np.any(np.isfinite(m)):
        raise NoMinimizerError("M is +inf on the whole slice (K vanishes)")
    if not np.all(np.isfinite(m)):
        raise DomainError("M is not continuous on the closed slice (K vanishes at some points)")
    k = int(np.argmin(m))
    if 0 < k < n - 1:
        res = optimize.minimize_scalar(lambda x: auxiliary_potential_M(spec, e11, p, 0.0, x),
                                       bounds=(rr[k - 1], rr[k + 1]), method="bounded",
                                       options={"xatol": 1e-13})
        r_star, value = (float(res.x), float(res.fun)) if res.fun <= m[k] else (float(rr[k]), float(m[k]))
        interior = True
    else:
        r_star, value = float(rr[k]), float(m[k])
        interior = False
    boundary = float(min(m[0], m[-1]))
    s2, r2 = _region_samples(region, 401)
    inf_region = float(min(np.min(auxiliary_potential_M(spec, e11, p, s2, r2)), value))
    hyp_strict = bool(interior and 0 < value < boundary)
    hyp_double = bool(value < 2 * inf_region)
    return RingMinimum(r_star=r_star, value=value, boundary_value=boundary, inf_region=inf_region,
                       interior=hyp_strict, hyp_strict=hyp_strict, hyp_double=hyp_double)


@dataclass(frozen=True)
class PointMinimum:
    point: tuple[float, float]
    value: float
    boundary_value: float
    interior: bool


def minimize_A_in_region(spec: PotentialSpec, p: float, region: RegionLambda, n=401) -> PointMinimum:
    """Minimize A over the region by 2D sampling plus a Nelder-Mead polish."""
    s2, r2 = _region_samples(region, n)
    a = concentration_functional_A(spec, p, s2, r2)
    if not np.any(np.isfinite(a)):
        raise NoMinimizerError("A is +inf on the whole region")
    k = int(np.argmin(a))
    x0 = np.array([s2[k], r2[k]])

    def f(x):
        if not region.contains(x[0], x[1]):
            return INF
        return concentration_functional_A(spec, p, x[0], x[1])

    res = optimize.minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    point, value = (tuple(map(float, res.x)), float(res.fun)) if res.fun <= a[k] else ((float(x0[0]), float(x0[1])), float(a[k]))
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    bs, br = region.a_s * np.cos(t), region.r0 + region.a_r * np.sin(t)
    boundary = float(np.min(concentration_functional_A(spec, p, bs, br)))
    return PointMinimum(point=point, value=value, boundary_value=boundary, interior=bool(0 < value < boundary))


# --------------------------------------------------------------------------
# geometry


def cyl_distance(x, y):
    """Distance between the circles represented by ``x = (s, r)`` and ``y = (s, r)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x[..., 1] < 0) or np.any(y[..., 1] < 0):
        raise DomainError("r components must be nonnegative")
    d = np.hypot(x[..., 0] - y[..., 0], x[..., 1] - y[..., 1])
    return float(d) if np.ndim(d) == 0 else d


def to_cylindrical(point, axis=(0.0, 0.0, 1.0)):
    """Reduce a 3D point to ``(s, r)`` relative to the line spanned by ``axis``."""
    point = np.asarray(point, dtype=float)
    d = np.asarray(axis, dtype=float)
    d = d / np.linalg.norm(d)
    s = point @ d
    r = np.linalg.norm(point - np.multiply.outer(s, d), axis=-1)
    return np.stack([s, r], axis=-1)
