"""Hardy-type penalization: the potential H, the penalized nonlinearity g_ε
with its primitive, effective potentials and the decay envelopes used to
check computed solutions.

Points are given in reduced coordinates ``(s, r)``; ``|x| = √(s² + r²)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import PotentialSpec, RegionLambda, cyl_distance
from .poisson import CylField, gradient_energy


@dataclass(frozen=True)
class PenalizationParams:
    eps: float
    kappa: float = 0.1
    beta: float = 1.0
    mu: float = 0.1

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if not 0 < self.kappa < 0.25:
            raise DomainError("kappa must lie in (0, 1/4)")
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        if not 0 < self.mu < 1:
            raise DomainError("mu must lie in (0, 1)")

    def with_eps(self, eps) -> "PenalizationParams":
        return PenalizationParams(eps, self.kappa, self.beta, self.mu)


def _norm(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] not in (2, 3):
        raise DomainError("points must have 2 (s, r) or 3 Cartesian components")
    return np.linalg.norm(x, axis=-1)


def hardy_H(kappa, beta, s, r):
    """``κ / (|x|² (log²|x| + 1)^{(1+β)/2})`` at ``|x| = √(s²+r²)``."""
    rad2 = np.asarray(s, dtype=float) ** 2 + np.asarray(r, dtype=float) ** 2
    if np.any(rad2 == 0):
        raise DomainError("the penalization potential is singular at the origin")
    log_r = 0.5 * np.log(rad2)
    return kappa / (rad2 * (log_r**2 + 1.0) ** ((1.0 + beta) / 2.0))


def hardy_potential(params: PenalizationParams, x):
    """H at a point given as ``(s, r)`` or as a 3D point (vectorized on leading axes)."""
    rad = _norm(x)
    out = hardy_H(params.kappa, params.beta, rad, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class HardyCheck:
    lhs: float
    rhs: float
    grad_energy: float
    passed: bool


def hardy_positivity_check(u: CylField, params: PenalizationParams, rel_slack=1e-6) -> HardyCheck:
    """``∫(|∇u|² − H u²) ≥ (¼ − κ) ∫ u²/|x|²`` for a field on the reduced grid.

    The gradient energy uses the finite-volume stiffness form (zero outside the
    grid); the other integrals use the midpoint rule with weight ``2πr``.
    """
    S, R = u.mesh()
    vol = u.volumes
    u2 = u.values**2
    grad = gradient_energy(u.values, u)
    H = hardy_H(params.kappa, params.beta, S, R)
    lhs = grad - float(np.sum(H * u2 * vol))
    rhs = (0.25 - params.kappa) * float(np.sum(u2 / (S**2 + R**2) * vol))
    return HardyCheck(lhs, rhs, grad, bool(lhs >= rhs - rel_slack * grad))


# --------------------------------------------------------------------------
# penalized nonlinearity


def linear_coefficient(spec: PotentialSpec, params: PenalizationParams, s, r, excluded_radius=0.0):
    """``ε² H + μ V``; inside ``excluded_radius`` of the origin only ``μ V`` is kept."""
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    rad2 = s**2 + r**2
    far = rad2 > excluded_radius**2
    H = np.zeros(np.broadcast(s, r).shape)
    if np.any(far):
        sb, rb = np.broadcast_arrays(s, r)
        H[far] = hardy_H(params.kappa, params.beta, sb[far], rb[far])
    return params.eps**2 * H + params.mu * spec.V_at(s, r)


def crossing_point(L, K, p):
    """``s_c = (L/K)^{1/(p-1)}``; infinite where ``K = 0``."""
    L = np.asarray(L, dtype=float)
    K = np.asarray(K, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(K > 0, (L / np.where(K > 0, K, 1.0)) ** (1.0 / (p - 1.0)), np.inf)


def g_from_coefficients(inside, K, L, p, u):
    """Penalized nonlinearity given the pointwise data ``χ_Λ``, ``K`` and ``L = ε²H + μV``."""
    up = np.maximum(u, 0.0)
    power = K * up**p
    return np.where(inside, power, np.minimum(L * up, power))


def G_from_coefficients(inside, K, L, p, u):
    """Exact primitive of :func:`g_from_coefficients` in ``u``."""
    up = np.maximum(u, 0.0)
    power = K * up ** (p + 1) / (p + 1)
    sc = crossing_point(L, K, p)
    sc_f = np.where(np.isfinite(sc), sc, 0.0)
    linear = K * sc_f ** (p + 1) / (p + 1) + 0.5 * L * (up**2 - sc_f**2)
    outside = np.where(up <= sc, power, linear)
    return np.where(inside, power, outside)


def dg_from_coefficients(inside, K, L, p, u):
    """``∂g/∂u`` (one-sided at the crossing point; zero for ``u ≤ 0``)."""
    up = np.maximum(u, 0.0)
    dpow = p * K * up ** (p - 1)
    sc = crossing_point(L, K, p)
    out = np.where(inside, dpow, np.where(up <= sc, dpow, L))
    return np.where(u > 0, out, 0.0)


def _pointwise(spec, region, params, s, r, excluded_radius):
    inside = region.contains(s, r)
    K = spec.K_at(s, r)
    L = linear_coefficient(spec, params, s, r, excluded_radius)
    return inside, K, L


def penalized_g(spec: PotentialSpec, region: RegionLambda, params: PenalizationParams, p, x, s_val,
                excluded_radius=0.0):
    """``g_ε(x, s_val)`` at ``x = (s, r)``."""
    s, r = np.asarray(x, dtype=float)[..., 0], np.asarray(x, dtype=float)[..., 1]
    out = g_from_coefficients(*_pointwise(spec, region, params, s, r, excluded_radius), p, np.asarray(s_val, float))
    return float(out) if np.ndim(out) == 0 else out


def penalized_G(spec: PotentialSpec, region: RegionLambda, params: PenalizationParams, p, x, s_val,
                excluded_radius=0.0):
    """``G_ε(x, s_val) = ∫₀^{s_val} g_ε(x, t) dt`` in closed form."""
    s, r = np.asarray(x, dtype=float)[..., 0], np.asarray(x, dtype=float)[..., 1]
    out = G_from_coefficients(*_pointwise(spec, region, params, s, r, excluded_radius), p, np.asarray(s_val, float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GPropertyReport:
    g1: bool
    g2: bool
    g3_inside: bool
    g3_outside: bool
    g4: bool
    continuity: bool
    worst: dict

    @property
    def ok(self) -> bool:
        return self.g1 and self.g2 and self.g3_inside and self.g3_outside and self.g4 and self.continuity


def check_g_properties(spec, region, params, p, points, s_values) -> GPropertyReport:
    """Evaluate (g1)-(g4) and branch continuity on the lattice ``points x s_values``.

    ``points`` has shape ``(n, 2)`` and ``s_values`` is an increasing positive grid.
    """
    pts = np.asarray(points, dtype=float)
    sv = np.asarray(s_values, dtype=float)
    inside, K, L = _pointwise(spec, region, params, pts[:, 0], pts[:, 1], 0.0)
    ins, Kc, Lc = inside[:, None], K[:, None], L[:, None]
    g = g_from_coefficients(ins, Kc, Lc, p, sv[None, :])
    G = G_from_coefficients(ins, Kc, Lc, p, sv[None, :])
    worst = {}

    tiny = g_from_coefficients(inside, K, L, p, 1e-6) / 1e-6
    unit = g_from_coefficients(inside, K, L, p, 1.0)
    pos = unit > 0
    ratio = np.max(tiny[pos] / unit[pos]) if np.any(pos) else 0.0
    worst["g1"] = float(ratio)
    g1 = bool(ratio < 1e-3)

    with np.errstate(divide="ignore", invalid="ignore"):
        over = g / sv[None, :] ** p - Kc
    worst["g2"] = float(np.max(over))
    g2 = bool(np.all(over <= 1e-12 * np.maximum(Kc, 1.0)))

    gs = g * sv[None, :]
    scale = np.maximum(np.abs(gs), 1e-300)
    dev_in = np.abs((p + 1) * G - gs) / scale
    worst["g3_inside"] = float(np.max(dev_in[inside])) if np.any(inside) else 0.0
    g3_in = bool(worst["g3_inside"] <= 1e-12)
    out = ~inside
    if np.any(out):
        lo = (2 * G - gs)[out] / scale[out]
        hi = (gs - Lc * sv[None, :] ** 2)[out] / scale[out]
        worst["g3_outside"] = float(max(np.max(lo), np.max(hi)))
        g3_out = bool(worst["g3_outside"] <= 1e-12)
    else:
        worst["g3_outside"] = -np.inf
        g3_out = True

    q = g / sv[None, :]
    dq = np.diff(q, axis=1)
    worst["g4"] = float(-np.min(dq / np.maximum(np.abs(q[:, 1:]), 1e-300)))
    g4 = bool(np.all(dq >= -1e-12 * np.abs(q[:, 1:])))

    sc = crossing_point(L, K, p)
    fin = np.isfinite(sc) & ~inside & (sc > 0)
    cont = 0.0
    if np.any(fin):
        below = np.nextafter(sc[fin], 0)
        above = np.nextafter(sc[fin], np.inf)
        gl = g_from_coefficients(False, K[fin], L[fin], p, below)
        gr = g_from_coefficients(False, K[fin], L[fin], p, above)
        Gl = G_from_coefficients(False, K[fin], L[fin], p, below)
        Gr = G_from_coefficients(False, K[fin], L[fin], p, above)
        cont = float(max(np.max(np.abs(gl - gr) / np.maximum(np.abs(gl), 1e-300)),
                         np.max(np.abs(Gl - Gr) / np.maximum(np.abs(Gl), 1e-300))))
    worst["continuity"] = cont
    return GPropertyReport(g1, g2, g3_in, g3_out, g4, bool(cont <= 1e-12), worst)


# --------------------------------------------------------------------------
# effective potentials


def effective_W(spec: PotentialSpec, s, r):
    """``W = V + ρ/(1+|x|)``."""
    rad = np.hypot(s, r)
    return spec.V_at(s, r) + spec.rho_at(s, r) / (1.0 + rad)


def effective_W_eps(spec: PotentialSpec, params: PenalizationParams, c_eps, c_eps_prime, s, r):
    """``W_ε = (1−μ)V + C_ε ρ/(C'_ε + |x|)`` with the φ lower-bound constants supplied by the caller."""
    rad = np.hypot(s, r)
    return (1.0 - params.mu) * spec.V_at(s, r) + c_eps * spec.rho_at(s, r) / (c_eps_prime + rad)


# --------------------------------------------------------------------------
# decay envelopes

ENVELOPE_CASES = ("base", "inf-quadratic", "inf-subquadratic", "0-quadratic", "0-superquadratic")
_ALIASES = {"∞-quadratic": "inf-quadratic", "∞-subquadratic": "inf-subquadratic"}


def decay_envelope(case, C, lam, eps, x, circle, nu=None, alpha=None, gamma=None):
    """Evaluate one of the decay bounds at ``x = (s, r)`` around the circle ``circle = (s̄, r̄)``.

    ``d`` is the circle distance to ``circle``. The envelope is
    ``C exp(-(λ/ε) q(d) m(x)) f(x)`` where ``q = d/(1+d)`` and the factors are

    * base: ``m = 1``, ``f = (1+|x|)^{-1}``
    * inf-quadratic: base times ``(1+|x|)^{-ν/ε}``
    * inf-subquadratic: ``m = (1+|x|)^{(2-α)/2}``, ``f = 1``
    * 0-quadratic: base times ``(|x|/(1+|x|))^{ν/ε}``
    * 0-superquadratic: ``m = (|x|/(1+|x|))^{(γ-2)/2}``, ``f = 1``
    """
    case = _ALIASES.get(case, case)
    if case not in ENVELOPE_CASES:
        raise DomainError(f"unknown envelope case {case!r}")
    if not (C > 0 and lam > 0 and eps > 0):
        raise DomainError("envelope constants must be positive")
    x = np.asarray(x, dtype=float)
    rad = np.hypot(x[..., 0], x[..., 1])
    d = cyl_distance(x, np.asarray(circle, dtype=float))
    q = d / (1.0 + d)
    if case == "base":
        out = C * np.exp(-(lam / eps) * q) / (1.0 + rad)
    elif case == "inf-quadratic":
        _need(nu, "nu")
        out = C * np.exp(-(lam / eps) * q) / (1.0 + rad) * (1.0 + rad) ** (-nu / eps)
    elif case == "inf-subquadratic":
        _need(alpha, "alpha")
        out = C * np.exp(-(lam / eps) * q * (1.0 + rad) ** ((2.0 - alpha) / 2.0))
    elif case == "0-quadratic":
        _need(nu, "nu")
        out = C * np.exp(-(lam / eps) * q) / (1.0 + rad) * (rad / (1.0 + rad)) ** (nu / eps)
    else:
        _need(gamma, "gamma")
        out = C * np.exp(-(lam / eps) * q * (rad / (1.0 + rad)) ** ((gamma - 2.0) / 2.0))
    return float(out) if np.ndim(out) == 0 else out


def _need(v, name):
    if v is None or not v > 0:
        raise DomainError(f"this envelope case needs a positive {name}")


def envelope_case_for(growth) -> str:
    """Pick the envelope matching a GrowthClass; the base bound when no sharper case applies."""
    if growth.flags().get("G3_inf") and growth.alpha is not None and 0 < growth.alpha < 2:
        return "inf-subquadratic"
    return "base"


def cosh_barrier(lam, R, eps, x, center):
    """``cosh(λ(R − d)/ε)`` with ``d`` the circle distance from ``x`` to ``center``."""
    d = cyl_distance(np.asarray(x, dtype=float), np.asarray(center, dtype=float))
    out = np.cosh(lam * (R - d) / eps)
    return float(out) if np.ndim(out) == 0 else out
