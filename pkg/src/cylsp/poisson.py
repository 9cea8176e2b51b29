"""Newtonian potential of cylindrically symmetric densities.

Fields live on the reduced half-plane ``(s, r)``; cell ``(k, j)`` stands for
the solid ring of volume ``2π r_j h_s h_r``. The potential is the direct sum
of ring-ring interactions. Because the kernel depends on ``s`` only through
``s - s'``, the sum over source columns is a Toeplitz product; it is applied
exactly with zero-padded FFTs along ``s`` (no approximation of the kernel).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

FOUR_PI = 4.0 * np.pi


def ellipk_agm(m):
    """Complete elliptic integral ``K(m) = π / (2 AGM(1, √(1-m)))``, vectorized."""
    m = np.asarray(m, dtype=float)
    if np.any((m < 0) | (m >= 1)):
        raise DomainError("ellipk_agm needs 0 <= m < 1")
    out = _agm_k(m)
    return float(out) if out.ndim == 0 else out


def _agm_k(m):
    a = np.ones_like(m)
    b = np.sqrt(np.maximum(1.0 - m, 0.0))
    for _ in range(40):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= 1e-16 * a):
            break
    return np.pi / (2.0 * a)


def _ring_kernel(r, rp, ds):
    # unchecked; coincident rings give inf and are overwritten by callers
    den = (r + rp) ** 2 + ds**2
    m = 4.0 * r * rp / den
    with np.errstate(divide="ignore"):
        return _agm_k(m) / (2.0 * np.pi**2 * np.sqrt(den))


def ring_kernel(r, rp, ds):
    """Angular average of ``1/(4π|x-y|)`` over the ring of radius ``rp``.

    ``x`` sits at radius ``r`` and axial offset ``ds`` from the ring. Equals
    ``K(m) / (2π² √((r+r')² + Δs²))`` with ``m = 4 r r' / ((r+r')² + Δs²)``.
    """
    r, rp, ds = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, rp, ds)))
    if np.any(r < 0) or np.any(rp < 0):
        raise DomainError("ring radii must be nonnegative")
    if np.any((r == rp) & (ds == 0)):
        raise DomainError("coincident rings: use the regularized self-cell rule")
    out = _ring_kernel(r, rp, ds)
    return float(out) if out.ndim == 0 else out


NEAR_CELLS = 2


@functools.lru_cache(maxsize=8)
def _subcell_nodes(n, split):
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * x, 0.5 * w
    centers = (np.arange(split) + 0.5) / split - 0.5
    nodes = (centers[:, None] + x[None, :] / split).ravel()
    weights = np.tile(w / split, split)
    return nodes, weights


def cell_average_kernel(r, rp, ds, h_s, h_r, n=4, split=1):
    """Kernel from the point ``(r, 0)`` averaged over the source cell centered
    at ``(rp, ds)`` with the volume weight ``r'/rp`` (tensor Gauss-Legendre).

    With ``split=2`` the nodes avoid the cell center, which makes the rule
    usable on the self cell where the kernel has a log singularity.
    """
    x, w = _subcell_nodes(n, split)
    r = np.asarray(r, dtype=float)[..., None, None]
    rp = np.asarray(rp, dtype=float)[..., None, None]
    ds = np.asarray(ds, dtype=float)[..., None, None]
    rq = rp + x[:, None] * h_r
    sq = ds + x[None, :] * h_s
    vals = _ring_kernel(r, rq, sq) * (rq / rp)
    return np.sum(vals * w[:, None] * w[None, :], axis=(-2, -1))


def self_cell_kernel(r, h_s, h_r):
    """Regularized diagonal entry: cell average of the kernel around its own center."""
    return cell_average_kernel(r, r, 0.0, h_s, h_r, n=6, split=2)


def _kernel_block(r_i, r_src, lags, h_s, h_r):
    """Kernel from target radius ``r_i`` to every source radius and axial lag.

    Cells within ``NEAR_CELLS`` of the target use cell-averaged values; the rest
    use the midpoint value.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        blk = _ring_kernel(r_i, r_src[:, None], lags[None, :])
    near_j = np.nonzero(np.abs(r_src - r_i) <= NEAR_CELLS * h_r * (1 + 1e-9))[0]
    near_k = np.nonzero(np.abs(lags) <= NEAR_CELLS * h_s * (1 + 1e-9))[0]
    for j in near_j:
        for k in near_k:
            if abs(r_src[j] - r_i) < 0.5 * h_r and abs(lags[k]) < 0.5 * h_s:
                blk[j, k] = self_cell_kernel(r_i, h_s, h_r)
            else:
                blk[j, k] = cell_average_kernel(r_i, r_src[j], lags[k], h_s, h_r)
    return blk


@dataclass(frozen=True, eq=False)
class CylField:
    """Scalar field on a uniform ``(s, r)`` grid; ``values[k, j] = f(s_k, r_j)``.

    ``s_k = s0 + k h_s`` and ``r_j = r0 + j h_r`` with ``r0 > 0``; solver grids
    use ``r0 = (j0 + ½) h_r`` so no sample sits on the axis.
    """

    values: np.ndarray
    h_s: float
    h_r: float
    s0: float
    r0: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DomainError("CylField values must be a 2D array")
        if not self.r0 > 0:
            raise DomainError("r samples must be strictly positive")
        if not np.all(np.isfinite(v)):
            raise DomainError("CylField values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @property
    def s(self):
        return self.s0 + self.h_s * np.arange(self.shape[0])

    @property
    def r(self):
        return self.r0 + self.h_r * np.arange(self.shape[1])

    def mesh(self):
        return np.meshgrid(self.s, self.r, indexing="ij")

    @property
    def volumes(self):
        return np.broadcast_to(2 * np.pi * self.r * self.h_s * self.h_r, self.shape)

    def like(self, values) -> "CylField":
        return CylField(values, self.h_s, self.h_r, self.s0, self.r0)

    def same_grid(self, other: "CylField") -> bool:
        return (self.shape == other.shape and np.isclose(self.h_s, other.h_s) and np.isclose(self.h_r, other.h_r)
                and np.isclose(self.s0, other.s0) and np.isclose(self.r0, other.r0))

    def integral(self, values=None) -> float:
        """``∫ f dV`` over R^3 with the cylindrical volume weight."""
        v = self.values if values is None else values
        return float(np.sum(v * self.volumes))

    def save(self, path):
        ns, nr = self.shape
        header = f"cylfield v1\nns nr h_s h_r s0 r0\n{ns} {nr} {self.h_s!r} {self.h_r!r} {self.s0!r} {self.r0!r}"
        np.savetxt(path, self.values, header=header)

    @classmethod
    def load(cls, path) -> "CylField":
        with open(path) as fh:
            lines = [next(fh) for _ in range(3)]
        ns, nr, h_s, h_r, s0, r0 = lines[2].lstrip("# ").split()
        values = np.loadtxt(path, ndmin=2).reshape(int(ns), int(nr))
        return cls(values, float(h_s), float(h_r), float(s0), float(r0))


def uniform_grid(s_range, r_range, h_s, h_r=None) -> CylField:
    """Zero field on cells covering ``s_range x r_range``; r cells are at (j+½)h_r."""
    h_r = h_s if h_r is None else h_r
    ns = int(round((s_range[1] - s_range[0]) / h_s))
    j0 = int(np.floor(max(r_range[0], 0.0) / h_r + 1e-9))
    j1 = int(np.ceil(r_range[1] / h_r - 1e-9))
    s0 = s_range[0] + 0.5 * h_s
    return CylField(np.zeros((ns, j1 - j0)), h_s, h_r, s0, (j0 + 0.5) * h_r)


# --------------------------------------------------------------------------
# the ring-sum operator


class RingOperator:
    """Exact ``φ_k,i = Σ_{k',j} G(r_i, r_j, s_k - s_k') f_k',j vol_j`` on one grid.

    Near cells use :func:`_kernel_block`'s cell averages. Applying the operator costs
    two FFTs along ``s`` and a batched ``nr x nr`` product per frequency.
    """

    def __init__(self, ns, nr, h_s, h_r, r0):
        self.ns, self.nr, self.h_s, self.h_r, self.r0 = ns, nr, h_s, h_r, r0
        self.length = 2 * ns
        r = r0 + h_r * np.arange(nr)
        self.vol = 2 * np.pi * r * h_s * h_r
        lags = h_s * np.arange(ns)
        nfreq = self.length // 2 + 1
        khat = np.empty((nfreq, nr, nr))
        col = np.zeros((nr, self.length))
        for i in range(nr):
            blk = _kernel_block(r[i], r, lags, h_s, h_r)
            col[:, :ns] = blk
            col[:, ns + 1:] = blk[:, :0:-1]
            col[:, ns] = 0.0
            khat[:, i, :] = np.fft.rfft(col, axis=1).real.T
        # near-cell averages are taken around the source cell only; symmetrize
        # so that the discrete interaction form stays symmetric
        self.khat = 0.5 * (khat + khat.transpose(0, 2, 1))

    def apply(self, density: np.ndarray) -> np.ndarray:
        f = density * self.vol[None, :]
        fh = np.fft.rfft(f, n=self.length, axis=0)
        stacked = np.stack([fh.real, fh.imag], axis=-1)
        out = np.matmul(self.khat, stacked)
        ph = out[..., 0] + 1j * out[..., 1]
        return np.fft.irfft(ph, n=self.length, axis=0)[: self.ns]


@functools.lru_cache(maxsize=2)
def ring_operator(ns, nr, h_s, h_r, r0) -> RingOperator:
    return RingOperator(ns, nr, h_s, h_r, r0)


def operator_for(field: CylField) -> RingOperator:
    ns, nr = field.shape
    return ring_operator(ns, nr, float(field.h_s), float(field.h_r), float(field.r0))


def _check_source(source: CylField):
    if np.any(source.values < 0):
        raise DomainError("source density must be nonnegative")


def newtonian_potential(source: CylField) -> CylField:
    """``φ = (1/4π|x|) ⋆ source`` sampled at the cell centers of the source grid."""
    _check_source(source)
    if not np.any(source.values):
        return source.like(np.zeros(source.shape))
    return source.like(operator_for(source).apply(source.values))


def newtonian_potential_direct(source: CylField) -> CylField:
    """Same sum as :func:`newtonian_potential`, evaluated cell by cell (O(N²))."""
    _check_source(source)
    S, R = source.mesh()
    F = (source.values * source.volumes).ravel()
    s_flat, r_flat = S.ravel(), R.ravel()
    out = np.empty(F.size)
    h_s, h_r = source.h_s, source.h_r
    for n in range(F.size):
        ds = s_flat[n] - s_flat
        with np.errstate(divide="ignore", invalid="ignore"):
            k = _ring_kernel(r_flat[n], r_flat, ds)
        near = np.nonzero((np.abs(r_flat - r_flat[n]) <= NEAR_CELLS * h_r * (1 + 1e-9))
                          & (np.abs(ds) <= NEAR_CELLS * h_s * (1 + 1e-9)))[0]
        for m in near:
            if m == n:
                k[m] = self_cell_kernel(r_flat[n], h_s, h_r)
            else:
                k[m] = 0.5 * (cell_average_kernel(r_flat[n], r_flat[m], ds[m], h_s, h_r)
                              + cell_average_kernel(r_flat[m], r_flat[n], ds[m], h_s, h_r))
        out[n] = k @ F
    return source.like(out.reshape(source.shape))


def potential_at(source: CylField, s, r):
    """Potential of ``source`` at arbitrary points off the source cell centers."""
    _check_source(source)
    S, R = source.mesh()
    F = (source.values * source.volumes).ravel()
    s_flat, r_flat = S.ravel(), R.ravel()
    s = np.atleast_1d(np.asarray(s, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s, r = np.broadcast_arrays(s, r)
    out = np.empty(s.shape)
    for idx in np.ndindex(s.shape):
        out[idx] = ring_kernel(r[idx], r_flat, s[idx] - s_flat) @ F
    return out


def interaction_energy(f: CylField, g: CylField) -> float:
    """``D(f,g) = ∫∫ f(x) g(y) / |x-y| dx dy`` through the same ring sum."""
    _check_source(f)
    _check_source(g)
    if not f.same_grid(g):
        raise DomainError("interaction_energy needs fields on the same grid")
    if not np.any(g.values) or not np.any(f.values):
        return 0.0
    phi_g = newtonian_potential(g)
    return FOUR_PI * f.integral(f.values * phi_g.values)


# --------------------------------------------------------------------------
# discrete cylindrical Laplacian (finite-volume form)


def laplacian_weights(field: CylField):
    """Face coefficients of the symmetric finite-volume stiffness form.

    Returns ``(ws, wr)``: ``ws[j]`` multiplies s-differences in row ``j``
    (``2π r_j h_r / h_s``), ``wr[j]`` the r-face between rows ``j-1`` and
    ``j`` (``2π r_{j-½} h_s / h_r``, length ``nr+1``). A face at ``r = 0``
    has zero weight.
    """
    r = field.r
    ws = 2 * np.pi * r * field.h_r / field.h_s
    faces = field.r0 - 0.5 * field.h_r + field.h_r * np.arange(field.shape[1] + 1)
    faces = np.where(np.abs(faces) < 1e-12 * field.h_r, 0.0, faces)
    wr = 2 * np.pi * faces * field.h_s / field.h_r
    return ws, wr


def stiffness_apply(values, field: CylField):
    """``S u`` where ``u^T S u = ∫|∇u|²`` (Dirichlet zero outside the grid)."""
    ws, wr = laplacian_weights(field)
    up = np.pad(values, 1)
    ds = np.diff(up[:, 1:-1], axis=0)
    dr = np.diff(up[1:-1, :], axis=1)
    flux_s = ds * ws[None, :]
    flux_r = dr * wr[None, :]
    return -(np.diff(flux_s, axis=0) + np.diff(flux_r, axis=1))


def gradient_energy(values, field: CylField) -> float:
    ws, wr = laplacian_weights(field)
    up = np.pad(values, 1)
    ds = np.diff(up[:, 1:-1], axis=0)
    dr = np.diff(up[1:-1, :], axis=1)
    return float(np.sum(ds**2 * ws[None, :]) + np.sum(dr**2 * wr[None, :]))


def cyl_laplacian(values, field: CylField):
    """Discrete ``∂²_s + ∂²_r + (1/r)∂_r``."""
    return -stiffness_apply(values, field) / field.volumes


def poisson_residual(phi: CylField, source: CylField) -> float:
    """Relative residual of ``-Δ_cyl φ = source`` on interior cells.

    Normalized by the source norm; for a zero source the absolute residual
    norm is returned.
    """
    if not phi.same_grid(source):
        raise DomainError("poisson_residual needs matching grids")
    res = -cyl_laplacian(phi.values, phi) - source.values
    inner = np.zeros(phi.shape, dtype=bool)
    inner[1:-1, :-1] = True
    if phi.r0 > 0.75 * phi.h_r:
        inner[:, 0] = False
    vol = phi.volumes
    num = np.sqrt(np.sum(res[inner] ** 2 * vol[inner]))
    den = np.sqrt(np.sum(source.values[inner] ** 2 * vol[inner]))
    return float(num / den) if den > 0 else float(num)
