"""Unfitted parametric finite elements for the (stochastic) Mullins-Sekerka problem.

Closed polygonal curves are stored counter-clockwise. The nodal normal points
into the enclosed region, so a circle of radius R has discrete curvature +1/R
and the bulk potential on it is alpha/R. Per step one linear system couples

    k (grad v, grad phi) - 2 <(Y - Y_old).nu, phi(Y_old)>_h = (g dW, phi)_h
    <v(Y_old), chi>_h - alpha <kappa, chi>_h                = 0
    <kappa nu, eta>_h + <Y_rho, eta_rho / |Y_old_rho|>      = 0

with lumped (nodal) quadrature on the curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .mesh import (FeFunction, Mesh, assemble_lumped_mass, assemble_stiffness, build_from_base,
                   build_uniform_mesh, evaluation_matrix, locate_points)

ALPHA = np.sqrt(2.0) / 3.0


class MsError(RuntimeError):
    pass


class TopologyError(MsError):
    """The front-tracking curve self-intersected."""


@dataclass(frozen=True)
class Curve:
    positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def size(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class MsParams:
    alpha: float = ALPHA
    g: float = 0.0
    k: float = 1e-5
    n_curve: int = 128
    base_n: int = 64
    h_min: float | None = None
    band: float | None = None
    extinction_radius: float | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n_curve < 8:
            raise ValueError("curves need at least 8 nodes")
        if self.k <= 0:
            raise ValueError("time step must be positive")

    @property
    def adaptive(self) -> bool:
        return self.h_min is not None and self.h_min < 1.0 / self.base_n * (1 - 1e-9)


def regular_polygon(center=(0.5, 0.5), radius=0.2, n=128, phase=0.0) -> Curve:
    th = phase + 2.0 * np.pi * np.arange(n) / n
    return Curve(np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], 1))


def _as_list(curves) -> list[Curve]:
    return [curves] if isinstance(curves, Curve) else list(curves)


def segment_lengths(curve: Curve) -> np.ndarray:
    d = np.roll(curve.positions, -1, axis=0) - curve.positions
    return np.hypot(d[:, 0], d[:, 1])


def length_element(curve: Curve) -> np.ndarray:
    """|Y_rho| on each segment (i, i+1) for the uniform parameter grid rho_i = i/N."""
    L = segment_lengths(curve)
    if np.any(L <= 0.0):
        raise MsError(f"zero-length segment at index {int(np.argmin(L))}")
    return curve.size * L


def nodal_weights(curve: Curve) -> np.ndarray:
    """Lumped curve quadrature weights (L_{i-1} + L_i) / 2."""
    L = segment_lengths(curve)
    return 0.5 * (L + np.roll(L, 1))


def discrete_normal(curve: Curve) -> np.ndarray:
    """Unit nodal normals: the length-weighted tangent average rotated by +90 degrees.

    For counter-clockwise curves these point into the enclosed region.
    """
    Y = curve.positions
    if np.any(segment_lengths(curve) <= 0.0):
        raise MsError("zero-length segment")
    t = np.roll(Y, -1, axis=0) - np.roll(Y, 1, axis=0)
    nu = np.stack([-t[:, 1], t[:, 0]], axis=1)
    norm = np.hypot(nu[:, 0], nu[:, 1])
    if np.any(norm <= 0.0):
        raise MsError("degenerate node: neighbours coincide")
    return nu / norm[:, None]


def curve_stiffness(curve: Curve) -> sp.csr_matrix:
    """Matrix of <u_rho, eta_rho / |Y_rho|> for scalar P1 functions on the curve."""
    n = curve.size
    wt = 1.0 / segment_lengths(curve)
    i = np.arange(n)
    j = (i + 1) % n
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([wt, wt, -wt, -wt])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def curvature_residual(curve: Curve, kappa, curve_old: Curve | None = None) -> np.ndarray:
    """Residual (N, 2) of the weak curvature identity with geometry frozen at ``curve_old``."""
    old = curve if curve_old is None else curve_old
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (old.size,) or curve.size != old.size:
        raise ValueError("size mismatch")
    Ac = curve_stiffness(old)
    ell = nodal_weights(old)
    nu = discrete_normal(old)
    return (ell * kappa)[:, None] * nu + Ac @ curve.positions


def enclosed_area(curve: Curve) -> float:
    """Shoelace area, positive for counter-clockwise curves."""
    x, y = curve.positions[:, 0], curve.positions[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class Coupling:
    """Bulk-to-curve evaluation data for all curve nodes (components stacked)."""

    phi: sp.csr_matrix
    ell: np.ndarray
    nu: np.ndarray
    triangles: np.ndarray
    offsets: tuple

    def velocity_block(self) -> tuple:
        """The (x, y) blocks of the bulk rows: -2 * phi^T diag(ell nu_d)."""
        return tuple(-2.0 * (self.phi.T @ sp.diags(self.ell * self.nu[:, d])) for d in range(2))


def assemble_coupling(curves, mesh: Mesh) -> Coupling:
    curves = _as_list(curves)
    Y = np.concatenate([c.positions for c in curves])
    if np.any(Y < 0.0) or np.any(Y > 1.0):
        raise MsError("curve node outside the unit square")
    tri, _ = locate_points(mesh, Y)
    phi = evaluation_matrix(mesh, Y)
    ell = np.concatenate([nodal_weights(c) for c in curves])
    nu = np.concatenate([discrete_normal(c) for c in curves])
    offsets = tuple(np.cumsum([0] + [c.size for c in curves]).tolist())
    return Coupling(phi, ell, nu, tri, offsets)


def _split(vec: np.ndarray, offsets) -> list:
    return [vec[a:b] for a, b in zip(offsets[:-1], offsets[1:])]


def _bulk_ops(mesh: Mesh, cache={}):
    key = mesh.mesh_id
    if key not in cache:
        if len(cache) > 8:
            cache.clear()
        cache[key] = (assemble_stiffness(mesh), assemble_lumped_mass(mesh))
    return cache[key]


def ms_step(curves, params: MsParams, mesh: Mesh, dW=None):
    """One step of the coupled curve / bulk system.

    Returns ``(new_curves, v, kappas)``; single-curve input gives a single
    curve and kappa array back.
    """
    single = isinstance(curves, Curve)
    curves = _as_list(curves)
    A, m = _bulk_ops(mesh)
    cp = assemble_coupling(curves, mesh)
    nb = mesh.num_nodes
    nc = cp.offsets[-1]
    Ac = sp.block_diag([curve_stiffness(c) for c in curves], format="csr")
    L = sp.diags(cp.ell)
    Bx, By = cp.velocity_block()
    K = sp.bmat([
        [params.k * A, None, Bx, By],
        [L @ cp.phi, -params.alpha * L, None, None],
        [None, sp.diags(cp.ell * cp.nu[:, 0]), Ac, None],
        [None, sp.diags(cp.ell * cp.nu[:, 1]), None, Ac],
    ], format="csc")
    Y = np.concatenate([c.positions for c in curves])
    load = np.zeros(nb)
    if dW is not None and params.g != 0:
        vals = dW.values if isinstance(dW, FeFunction) else np.asarray(dW, dtype=float)
        load = params.g * m * vals
    rhs = np.concatenate([load, np.zeros(nc), -(Ac @ Y[:, 0]), -(Ac @ Y[:, 1])])
    try:
        sol = spla.splu(K, permc_spec="COLAMD").solve(rhs)
    except RuntimeError as exc:
        raise MsError(f"singular coupled system: {exc}") from exc
    res = np.linalg.norm(K @ sol - rhs)
    scale = max(np.linalg.norm(rhs), np.abs(K).max() * np.linalg.norm(sol))
    if not np.isfinite(res) or res > 1e-10 * scale:
        raise MsError(f"coupled solve inaccurate: residual {res:.3e}")
    v = sol[:nb]
    kappa = sol[nb:nb + nc]
    dY = np.stack([sol[nb + nc:nb + 2 * nc], sol[nb + 2 * nc:]], axis=1)
    new = [Curve(y + d) for y, d in zip(_split(Y, cp.offsets), _split(dY, cp.offsets))]
    kappas = _split(kappa, cp.offsets)
    if single:
        return new[0], FeFunction(mesh, v), kappas[0]
    return new, FeFunction(mesh, v), kappas


def normal_flux(curves_old, curves_new) -> float:
    """Discrete normal flux sum_i (Y_new - Y_old)_i . nu_i ell_i over all components."""
    total = 0.0
    for a, b in zip(_as_list(curves_old), _as_list(curves_new)):
        d = b.positions - a.positions
        total += float(np.sum((d * discrete_normal(a)).sum(1) * nodal_weights(a)))
    return total


def _segments_intersect(P1, P2, Q1, Q2) -> np.ndarray:
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - \
               (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    d1 = orient(Q1, Q2, P1)
    d2 = orient(Q1, Q2, P2)
    d3 = orient(P1, P2, Q1)
    d4 = orient(P1, P2, Q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_simple(curves) -> bool:
    """True if no two non-adjacent segments (of any components) cross."""
    curves = _as_list(curves)
    starts, ends, comp, idx, sizes = [], [], [], [], []
    for c_i, c in enumerate(curves):
        Y = c.positions
        starts.append(Y)
        ends.append(np.roll(Y, -1, axis=0))
        comp.append(np.full(c.size, c_i))
        idx.append(np.arange(c.size))
        sizes.append(np.full(c.size, c.size))
    S, E = np.concatenate(starts), np.concatenate(ends)
    comp, idx, sizes = np.concatenate(comp), np.concatenate(idx), np.concatenate(sizes)
    hit = _segments_intersect(S[:, None], E[:, None], S[None, :], E[None, :])
    same = comp[:, None] == comp[None, :]
    gap = np.abs(idx[:, None] - idx[None, :])
    adjacent = same & ((gap <= 1) | (gap == sizes[:, None] - 1))
    return not np.any(hit & ~adjacent)


def rightmost_x(curves) -> float:
    return float(max(c.positions[:, 0].max() for c in _as_list(curves)))


# ---------------------------------------------------------------------------
# bulk meshes


def band_mesh(curves, base_n: int, h_min: float, band: float) -> Mesh:
    """NVB mesh refined to size <= h_min within ``band`` of the curves."""
    pts = []
    for c in _as_list(curves):
        Y = c.positions
        Z = np.roll(Y, -1, axis=0)
        for s in np.linspace(0.0, 1.0, 4, endpoint=False):
            pts.append((1 - s) * Y + s * Z)
    tree = cKDTree(np.concatenate(pts))
    tol = 1e-9

    def split(_b, _code, _depth, verts):
        a2 = abs((verts[1, 0] - verts[0, 0]) * (verts[2, 1] - verts[0, 1])
                 - (verts[2, 0] - verts[0, 0]) * (verts[1, 1] - verts[0, 1]))
        h = np.sqrt(a2)
        if h <= h_min * (1 + tol):
            return False
        dist, _ = tree.query(verts.mean(axis=0))
        return dist <= band + h

    return build_from_base(base_n, split)


def needs_remesh(mesh: Mesh, cp: Coupling, h_min: float) -> bool:
    return bool(np.any(mesh.sizes[cp.triangles] > h_min * (1 + 1e-9)))


@dataclass
class MsRun:
    curves: list
    mesh: Mesh
    t: float = 0.0
    j: int = 0
    events: list = field(default_factory=list)
    v: FeFunction | None = None
    kappas: list | None = None


def bulk_mesh_for(curves, params: MsParams) -> Mesh:
    if not params.adaptive:
        return build_uniform_mesh(params.base_n)
    band = params.band if params.band is not None else 4.0 * params.h_min
    return band_mesh(curves, params.base_n, params.h_min, band)


def advance(run: MsRun, params: MsParams, dW=None) -> MsRun:
    """One step with extinction handling and (optional) band re-meshing.

    A component whose area-equivalent radius drops below the extinction
    radius is removed and the event recorded; a self-intersection of the
    remaining curves raises :class:`TopologyError`.
    """
    new, v, kappas = ms_step(run.curves, params, run.mesh, dW)
    t = run.t + params.k
    j = run.j + 1
    r_ext = params.extinction_radius
    if r_ext is None:
        r_ext = 2.0 * (params.h_min if params.h_min is not None else 1.0 / params.base_n)
    keep_c, keep_k = [], []
    for i, (c, kap) in enumerate(zip(new, kappas)):
        a = enclosed_area(c)
        if a <= 0.0 or np.sqrt(a / np.pi) <= r_ext:
            run.events.append({"event": "extinction", "component": i, "step": j, "t": t,
                               "area": a})
        else:
            keep_c.append(c)
            keep_k.append(kap)
    if not keep_c:
        raise MsError("all interface components vanished")
    if not is_simple(keep_c):
        raise TopologyError(f"curve self-intersection at step {j}")
    mesh = run.mesh
    if params.adaptive:
        cp = assemble_coupling(keep_c, mesh)
        if needs_remesh(mesh, cp, params.h_min) or len(keep_c) != len(new):
            mesh = bulk_mesh_for(keep_c, params)
    return MsRun(keep_c, mesh, t, j, run.events, v, keep_k)
