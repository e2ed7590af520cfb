"""Post-processing of phase-field and front-tracking runs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ch import double_well, h_minus1_norm, operators
from .mesh import FeFunction, Mesh, evaluate


@dataclass(frozen=True)
class LevelSet:
    """Polyline chains of a contour; ``closed[i]`` marks chains returning to their start.

    ``edges[i]`` holds the mesh edge (node pair) each point of chain ``i`` lies on.
    """

    chains: tuple
    closed: tuple
    edges: tuple
    level: float

    @property
    def points(self) -> np.ndarray:
        if not self.chains:
            return np.zeros((0, 2))
        return np.concatenate(self.chains)

    def __len__(self):
        return len(self.chains)


def extract_level_set(X: FeFunction, level: float = 0.0) -> LevelSet:
    """Marching triangles on the P1 interpolant; chains are stitched by shared edges.

    A node exactly at ``level`` counts as above it, so every triangle is cut
    by zero or two edges.
    """
    mesh = X.mesh
    u = X.values - level
    above = u >= 0.0
    tri = mesh.triangles
    cut = {}
    adj: dict = defaultdict(list)
    for t in np.nonzero(above[tri].any(axis=1) & ~above[tri].all(axis=1))[0]:
        v = tri[t]
        ends = []
        for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
            if above[a] != above[b]:
                e = (a, b) if a < b else (b, a)
                if e not in cut:
                    s = u[e[0]] / (u[e[0]] - u[e[1]])
                    cut[e] = (1.0 - s) * mesh.nodes[e[0]] + s * mesh.nodes[e[1]]
                ends.append(e)
        adj[ends[0]].append(ends[1])
        adj[ends[1]].append(ends[0])
    chains, closed, edges = [], [], []
    seen = set()
    # open chains start at degree-one edges (domain boundary)
    starts = [e for e in adj if len(adj[e]) == 1] + list(adj)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        prev, cur = None, s
        while True:
            nxt = [e for e in adj[cur] if e != prev and e not in seen]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)
        is_closed = len(chain) > 2 and s in adj[cur]
        chains.append(np.array([cut[e] for e in chain]))
        closed.append(is_closed)
        edges.append(np.array(chain, dtype=np.int64))
    return LevelSet(tuple(chains), tuple(closed), tuple(edges), float(level))


@dataclass(frozen=True)
class RadialDeviation:
    max: float
    mean: float
    x_axis: float  # signed deviation on the ray {center + (s, 0), s > 0}; nan if missing


def _ray_crossing(ls: LevelSet, center) -> float:
    """Largest distance along the +x ray from ``center`` at which a chain crosses it."""
    cx, cy = center
    best = np.nan
    for c, closed in zip(ls.chains, ls.closed):
        p = c
        q = np.roll(c, -1, axis=0) if closed else c[1:]
        p = p if closed else c[:-1]
        dy0, dy1 = p[:, 1] - cy, q[:, 1] - cy
        hit = (dy0 * dy1 <= 0) & (dy0 != dy1)
        if not np.any(hit):
            continue
        s = dy0[hit] / (dy0[hit] - dy1[hit])
        x = p[hit, 0] + s * (q[hit, 0] - p[hit, 0])
        x = x[x > cx]
        if x.size:
            best = np.nanmax([best, x.max() - cx])
    return best


def radial_deviation(ls: LevelSet, center=(0.5, 0.5), R: float = 0.2) -> RadialDeviation:
    pts = ls.points
    if pts.size == 0:
        raise ValueError("empty level set")
    d = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]) - R
    return RadialDeviation(float(np.abs(d).max()), float(np.abs(d).mean()),
                           float(_ray_crossing(ls, center) - R))


def rightmost_point(ls: LevelSet) -> float:
    pts = ls.points
    if pts.size == 0:
        raise ValueError("empty level set")
    return float(pts[:, 0].max())


def compensated_level(X_relaxed: FeFunction, probe=(0.7, 0.5)) -> float:
    """Value of the relaxed profile at ``probe``; its contour reproduces the intended interface."""
    return float(evaluate(X_relaxed, np.asarray(probe, dtype=float)[None])[0])


def fit_circle(points) -> tuple[np.ndarray, float]:
    """Algebraic least-squares (Kasa) circle fit: returns (center, radius)."""
    p = np.asarray(points, dtype=float)
    if p.shape[0] < 3:
        raise ValueError("need at least three points")
    M = np.column_stack([p[:, 0], p[:, 1], np.ones(len(p))])
    rhs = (p ** 2).sum(axis=1)
    (a, b, c), *_ = np.linalg.lstsq(M, rhs, rcond=None)
    center = np.array([a / 2, b / 2])
    return center, float(np.sqrt(c + center @ center))


def h_minus1_distance(X: FeFunction, Y: FeFunction, tol: float = 1e-10) -> float:
    if X.mesh_id != Y.mesh_id:
        raise ValueError("functions live on different meshes")
    _, m = operators(X.mesh)
    diff = X.values - Y.values
    if abs(m @ diff) > tol:
        raise ValueError(f"lumped means differ by {m @ diff:.3e}")
    diff = diff - (m @ diff) / m.sum()
    return h_minus1_norm(FeFunction(X.mesh, diff))


def convergence_order(pairs) -> float:
    """Least-squares slope of log(error) against log(parameter)."""
    a = np.asarray(pairs, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 3:
        raise ValueError("need at least three (parameter, error) pairs")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ValueError("parameters and errors must be positive")
    return float(np.polyfit(np.log(a[:, 0]), np.log(a[:, 1]), 1)[0])


# ---------------------------------------------------------------------------
# spectral constant
#
# min over lumped-mean-zero psi of
#     (eps |grad psi|^2 + (1/eps)(f'(u) psi, psi)_h) / |grad (-Delta_h)^{-1} psi|^2.
# With B = eps A + (1/eps) M diag f'(u) and psi = M^{-1} A x this is the pencil
#     K x = lambda A x,   K = A M^{-1} B M^{-1} A,
# on vectors modulo constants.


class SpectralError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(f"{message} (best estimate {estimate:.6g})")
        self.estimate = estimate


@dataclass(frozen=True)
class SpectralResult:
    lam: float
    psi: FeFunction
    residual: float
    iterations: int
    factorizations: int
    lower: float


def spectral_matrices(u: FeFunction, eps: float):
    """(K, A, M-weights, B) for the pencil above."""
    A, m = operators(u.mesh)
    df = double_well(u.values)[2]
    B = eps * A + sp.diags(m * df / eps)
    Minv = sp.diags(1.0 / m)
    K = (A @ Minv @ B @ Minv @ A).tocsc()
    K = 0.5 * (K + K.T)
    return K, A.tocsc(), m, B


class _Shifted:
    """Factorization of the bordered matrix [[K - s A, w], [w^T, -1]], w = m.

    Its Schur complement K - s A + w w^T is positive definite iff s is below
    every eigenvalue of the pencil, i.e. iff exactly one pivot of a symmetric
    (unpivoted) LDL^T factorization is negative.
    """

    def __init__(self, K, A, w, s):
        n = K.shape[0]
        wc = sp.csc_matrix(w.reshape(-1, 1))
        Z = sp.bmat([[K - s * A, wc], [wc.T, sp.csc_matrix([[-1.0]])]], format="csc")
        self.n = n
        self.lu = spla.splu(Z, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c):
            raise SpectralError("symmetric factorization pivoted", np.nan)
        d = self.lu.U.diagonal()
        self.negatives = int(np.sum(d < 0))

    @property
    def below(self) -> bool:
        return self.negatives == 1

    def solve(self, r):
        r = np.asarray(r, dtype=float)
        pad = np.zeros((1,) + r.shape[1:])
        return self.lu.solve(np.concatenate([r, pad]))[:self.n]


def _ritz(K, A, X):
    """Rayleigh-Ritz on span(X): Ritz values, vectors and relative residuals."""
    import scipy.linalg
    Q, _ = np.linalg.qr(X)
    AQ, KQ = A @ Q, K @ Q
    theta, C = scipy.linalg.eigh(Q.T @ KQ, Q.T @ AQ)
    V = Q @ C
    R = KQ @ C - (AQ @ C) * theta
    # normwise backward error of each Ritz pair
    nK = spla.norm(K, 1)
    nA = spla.norm(A, 1)
    scale = (nK + np.abs(theta) * nA) * np.linalg.norm(V, axis=0)
    return theta, V, np.linalg.norm(R, axis=0) / scale


def spectral_constant(u: FeFunction, eps: float, tol: float = 1e-6, max_iter: int = 200,
                      seed: int = 0, block: int = 4) -> SpectralResult:
    """Smallest eigenvalue of the pencil by inertia bracketing and block inverse iteration.

    The bracket ``[lo, hi]`` has ``lo`` certified below the spectrum (by the
    inertia of the shifted factorization) and ``hi`` a Rayleigh quotient.
    Block inverse iteration with shift ``lo`` and Rayleigh-Ritz then resolves
    the (often nearly double) lowest eigenvalue.

    Convergence is declared when the normwise backward error
    ``|K x - lam A x| / ((|K|_1 + |lam| |A|_1) |x|)`` is below ``tol`` and
    the lowest Ritz value changed by less than ``tol / 10`` (relative) in
    the last sweep.

    Raises
    ------
    SpectralError
        If the eigen-residual does not reach ``tol``; the best
        Rayleigh quotient is attached as ``estimate``.
    """
    K, A, m, _ = spectral_matrices(u, eps)
    n = K.shape[0]
    w = m / np.linalg.norm(m)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    X -= X.mean(axis=0)
    nfac = 0

    def shift(s):
        nonlocal nfac
        nfac += 1
        return _Shifted(K, A, w, s)

    def sweep(fac, X, count):
        for _ in range(count):
            X = fac.solve(A @ X)
            X -= X.mean(axis=0)
            X, _ = np.linalg.qr(X)
        return X

    floor = -1.0 / (4.0 * eps ** 3) - 1.0
    theta, _, _ = _ritz(K, A, X)
    hi = theta[0]
    lo, s = None, min(-1.0, hi - 1.0)
    while lo is None:
        s = max(s, floor)
        f = shift(s)
        if f.below:
            lo, fac = s, f
        elif s <= floor:
            raise SpectralError("lower bound shift not definite", hi)
        else:
            hi = min(hi, s)
            s *= 4.0
    it = 0
    lam, res = hi, np.inf
    while it < max_iter:
        X = sweep(fac, X, 2)
        it += 2
        theta, V, r = _ritz(K, A, X)
        change = abs(theta[0] - lam)
        lam, res = theta[0], r[0]
        hi = min(hi, lam)
        if res <= tol and change <= 0.1 * tol * max(abs(lam), 1.0):
            break
        # move the shift up towards the spectrum while it stays certified
        s = lo + 0.5 * (hi - lo) if hi - lo < 4.0 * max(abs(hi), 1.0) else hi - 0.25 * (hi - lo)
        if hi - lo > 1e-6 * max(abs(hi), 1.0):
            f = shift(s)
            if f.below:
                lo, fac = s, f
            else:
                hi = s
        X = V
    if res > tol:
        raise SpectralError(f"no convergence after {it} iterations, residual {res:.2e}", lam)
    x = V[:, 0]
    psi = (A @ x) / m
    return SpectralResult(float(lam), FeFunction(u.mesh, psi), float(res), it, nfac, float(lo))
