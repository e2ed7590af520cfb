"""Triangulations of the unit square and P1 finite-element machinery.

Meshes are newest-vertex-bisection (NVB) refinements of a uniform base mesh.
Every triangle is stored as ``(a, b, c)`` with ``a`` the newest vertex and
``(b, c)`` the refinement edge, so bisecting inserts the midpoint of ``(b, c)``.

Node identity across meshes is carried by integer coordinate keys (units of
``1 / (base_n * KEY_SCALE)``), which makes transfer between any two meshes of
the same refinement family exact nodal interpolation.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

KEY_SCALE = 2**24

# boundary tags
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


class MeshError(ValueError):
    pass


class Mesh:
    """Conforming triangulation of (0,1)^2 produced by NVB from a uniform base.

    Parameters are normally produced by :func:`build_uniform_mesh` or
    :func:`refine`; the constructor only freezes and validates the arrays.
    """

    def __init__(self, nodes, triangles, keys, parents, codes, base_n):
        self.nodes = _frozen(np.asarray(nodes, dtype=float))
        self.triangles = _frozen(np.asarray(triangles, dtype=np.int64))
        self.keys = _frozen(np.asarray(keys, dtype=np.int64))
        self.parents = _frozen(np.asarray(parents, dtype=np.int64))
        # (base triangle index, bisection path code); root code is 1
        self.codes = _frozen(np.asarray(codes, dtype=np.int64))
        self.base_n = int(base_n)
        self.refinement_level = _frozen(_code_depth(self.codes[:, 1]))

        p = self.nodes[self.triangles]
        self.areas = _frozen(0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                                    - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])))
        if np.any(self.areas <= 0.0):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"triangle {bad} has non-positive signed area {self.areas[bad]:.3e}")
        self.boundary_edges, self.boundary_tags = _boundary(self)
        digest = hashlib.sha1()
        digest.update(self.nodes.tobytes())
        digest.update(self.triangles.tobytes())
        self.mesh_id = digest.hexdigest()[:16]
        self._key_index = None
        self._locator = None

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        """Local mesh size sqrt(2|T|); equals the leg length of the right isosceles triangles."""
        return np.sqrt(2.0 * self.areas)

    @property
    def diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e = np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]], axis=1)
        return np.sqrt((e**2).sum(axis=2)).max(axis=1)

    def key_index(self) -> dict:
        if self._key_index is None:
            self._key_index = {(int(a), int(b)): i for i, (a, b) in enumerate(self.keys)}
        return self._key_index

    def min_angle(self) -> float:
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = (u * v).sum(1) / np.sqrt((u**2).sum(1) * (v**2).sum(1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(angles))

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def __repr__(self):
        return f"Mesh(id={self.mesh_id}, nodes={self.num_nodes}, triangles={self.num_triangles})"


@dataclass(frozen=True)
class FeFunction:
    """Nodal coefficient vector of a P1 field on ``mesh``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.num_nodes,):
            raise ValueError(f"expected {self.mesh.num_nodes} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite value at node {int(np.argmin(np.isfinite(v)))}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def mesh_id(self) -> str:
        return self.mesh.mesh_id


@dataclass(frozen=True)
class TransferMap:
    """Node correspondence between a source and a target mesh.

    ``source[i]`` is the source index of target node ``i`` or -1 for a node
    absent from the source; such nodes carry their parent edge in ``parents``.
    """

    source_id: str
    target_id: str
    source: np.ndarray
    parents: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _code_depth(codes: np.ndarray) -> np.ndarray:
    return np.array([int(c).bit_length() - 1 for c in codes], dtype=np.int64)


def _boundary(mesh: Mesh):
    t = mesh.triangles
    e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    s = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(s, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    once = counts[inv] == 1
    bedges = e[once]
    k = mesh.keys
    full = mesh.base_n * KEY_SCALE
    tags = np.zeros(len(bedges), dtype=np.int64)
    a, b = k[bedges[:, 0]], k[bedges[:, 1]]
    tags[(a[:, 1] == 0) & (b[:, 1] == 0)] = BOTTOM
    tags[(a[:, 0] == full) & (b[:, 0] == full)] = RIGHT
    tags[(a[:, 1] == full) & (b[:, 1] == full)] = TOP
    tags[(a[:, 0] == 0) & (b[:, 0] == 0)] = LEFT
    if np.any(tags == 0):
        raise MeshError("boundary edge not on the unit square boundary (mesh not conforming)")
    return _frozen(bedges), _frozen(tags)


def build_uniform_mesh(n: int) -> Mesh:
    """Uniform mesh with ``(n+1)^2`` nodes and ``2 n^2`` right isosceles triangles.

    Each cell is split along its (0,0)-(1,1) diagonal; the diagonal is the
    refinement edge of both halves, so the labelling is NVB-compatible.
    """
    if int(n) < 1:
        raise MeshError("n must be >= 1")
    n = int(n)
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    keys = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64) * KEY_SCALE
    nodes = keys / float(n * KEY_SCALE)

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            p00, p10, p11, p01 = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((p10, p11, p00))
            tris.append((p01, p00, p11))
    tris = np.array(tris, dtype=np.int64)
    codes = np.stack([np.arange(len(tris)), np.ones(len(tris), dtype=np.int64)], axis=1)
    parents = -np.ones((len(nodes), 2), dtype=np.int64)
    return Mesh(nodes, tris, keys, parents, codes, n)


# ---------------------------------------------------------------------------
# assembly


def _gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric basis functions per triangle, shape (T,3,2)."""
    p = mesh.nodes[mesh.triangles]
    twice = 2.0 * mesh.areas
    g = np.empty((mesh.num_triangles, 3, 2))
    for i in range(3):
        b = p[:, (i + 1) % 3]
        c = p[:, (i + 2) % 3]
        g[:, i, 0] = (b[:, 1] - c[:, 1]) / twice
        g[:, i, 1] = (c[:, 0] - b[:, 0]) / twice
    return g


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix A_ij = int grad(phi_i) . grad(phi_j)."""
    if np.any(mesh.areas <= 1e-300):
        raise MeshError("degenerate triangle in stiffness assembly")
    g = _gradients(mesh)
    local = np.einsum("tid,tjd->tij", g, g) * mesh.areas[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.num_nodes,) * 2).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix: one third of the patch area per node."""
    m = np.zeros(mesh.num_nodes)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def gradient_per_triangle(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    g = _gradients(mesh)
    return np.einsum("tid,ti->td", g, np.asarray(values)[mesh.triangles])


def interpolate(f: Callable, mesh: Mesh) -> FeFunction:
    """Nodal interpolant of ``f``; ``f`` receives an (N,2) array of points."""
    vals = np.asarray(f(mesh.nodes), dtype=float)
    if vals.shape == ():
        vals = np.full(mesh.num_nodes, float(vals))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite value at node {i} ({mesh.nodes[i, 0]}, {mesh.nodes[i, 1]})")
    return FeFunction(mesh, vals)


# ---------------------------------------------------------------------------
# refinement


class _Builder:
    """Mutable NVB state used while building a new mesh from the base mesh."""

    def __init__(self, base: Mesh):
        self.keys = [tuple(k) for k in base.keys.tolist()]
        self.parents = [(-1, -1)] * len(self.keys)
        self.tris = [tuple(t) for t in base.triangles.tolist()]
        self.codes = [tuple(c) for c in base.codes.tolist()]
        self.alive = [True] * len(self.tris)
        self.edge_tris: dict = {}
        for t, (a, b, c) in enumerate(self.tris):
            for e in ((b, c), (c, a), (a, b)):
                self.edge_tris.setdefault(_ekey(*e), []).append(t)
        self.midpoints: dict = {}

    def neighbour(self, t: int, e: tuple):
        for s in self.edge_tris[_ekey(*e)]:
            if s != t:
                return s
        return None

    def midpoint(self, b: int, c: int) -> int:
        e = _ekey(b, c)
        m = self.midpoints.get(e)
        if m is None:
            kb, kc = self.keys[b], self.keys[c]
            sx, sy = kb[0] + kc[0], kb[1] + kc[1]
            if sx % 2 or sy % 2:
                raise MeshError("refinement depth exceeds key resolution")
            m = len(self.keys)
            self.keys.append((sx // 2, sy // 2))
            self.parents.append(e)
            self.midpoints[e] = m
        return m

    def _split(self, t: int) -> tuple[int, int]:
        a, b, c = self.tris[t]
        m = self.midpoint(b, c)
        base_idx, code = self.codes[t]
        self.alive[t] = False
        for e in ((b, c), (c, a), (a, b)):
            self.edge_tris[_ekey(*e)].remove(t)
        kids = []
        for tri, cc in (((m, a, b), 2 * code), ((m, c, a), 2 * code + 1)):
            s = len(self.tris)
            self.tris.append(tri)
            self.codes.append((base_idx, cc))
            self.alive.append(True)
            x, y, z = tri
            for e in ((y, z), (z, x), (x, y)):
                self.edge_tris.setdefault(_ekey(*e), []).append(s)
            kids.append(s)
        if not self.edge_tris[_ekey(b, c)]:
            del self.edge_tris[_ekey(b, c)]
        return kids[0], kids[1]

    def bisect(self, t: int) -> list[int]:
        """Bisect leaf ``t`` with conforming closure; returns all created leaves."""
        created = []
        a, b, c = self.tris[t]
        nb = self.neighbour(t, (b, c))
        if nb is not None:
            _, nb_b, nb_c = self.tris[nb]
            if _ekey(nb_b, nb_c) != _ekey(b, c):
                created.extend(self.bisect(nb))
                nb = self.neighbour(t, (b, c))
        created.extend(self._split(t))
        if nb is not None:
            created.extend(self._split(nb))
        return created

    def finish(self, base_n: int) -> Mesh:
        leaves = [t for t, ok in enumerate(self.alive) if ok]
        tris = np.array([self.tris[t] for t in leaves], dtype=np.int64)
        codes = np.array([self.codes[t] for t in leaves], dtype=np.int64)
        keys = np.array(self.keys, dtype=np.int64)
        nodes = keys / float(base_n * KEY_SCALE)
        parents = np.array(self.parents, dtype=np.int64)
        return Mesh(nodes, tris, keys, parents, codes, base_n)


def _ekey(a: int, b: int) -> tuple:
    return (a, b) if a < b else (b, a)


_BASE_CACHE: dict = {}


def _base(n: int) -> Mesh:
    if n not in _BASE_CACHE:
        _BASE_CACHE[n] = build_uniform_mesh(n)
    return _BASE_CACHE[n]


def build_from_base(base_n: int, split: Callable) -> Mesh:
    """Rebuild an NVB mesh from the uniform base.

    ``split(base_index, code, depth, vertex_coords)`` decides whether a leaf is
    bisected; closure bisections are added as needed for conformity.
    """
    base = _base(base_n)
    bld = _Builder(base)
    scale = 1.0 / (base_n * KEY_SCALE)
    queue = deque(range(len(bld.tris)))
    while queue:
        t = queue.popleft()
        if not bld.alive[t]:
            continue
        base_idx, code = bld.codes[t]
        depth = code.bit_length() - 1
        verts = np.array([bld.keys[v] for v in bld.tris[t]], dtype=float) * scale
        if split(base_idx, code, depth, verts):
            queue.extend(bld.bisect(t))
    return bld.finish(base_n)


def _target_split(mesh: Mesh, targets: np.ndarray) -> Callable:
    leaf = {}
    anc = {}
    for (b, c), tg in zip(mesh.codes.tolist(), targets.tolist()):
        leaf[(b, c)] = tg
        c >>= 1
        while c >= 1:
            anc[(b, c)] = max(anc.get((b, c), -1), tg)
            c >>= 1

    def split(base_idx, code, depth, verts):
        key = (base_idx, code)
        if key in leaf:
            return depth < leaf[key]
        if key in anc:
            return depth < anc[key]
        c = code >> 1
        while (base_idx, c) not in leaf:
            c >>= 1
        return depth < leaf[(base_idx, c)]

    return split


def refine(mesh: Mesh, marked) -> tuple[Mesh, TransferMap]:
    """Bisect every marked triangle (plus conforming closure)."""
    marked = np.asarray(sorted(set(int(i) for i in marked)), dtype=np.int64)
    if marked.size == 0:
        return mesh, transfer_map(mesh, mesh)
    targets = mesh.refinement_level.copy()
    targets[marked] += 1
    new = build_from_base(mesh.base_n, _target_split(mesh, targets))
    return new, transfer_map(mesh, new)


def adapt(mesh: Mesh, refine_set, coarsen_set) -> tuple[Mesh, TransferMap]:
    """Refine ``refine_set`` once and undo one bisection level on ``coarsen_set``.

    A bisection is only undone when every descendant of the parent asks for
    it and conformity permits; coarsening never goes below the base mesh.
    """
    refine_set = np.asarray(list(refine_set), dtype=np.int64)
    coarsen_set = np.asarray(list(coarsen_set), dtype=np.int64)
    if refine_set.size == 0 and coarsen_set.size == 0:
        return mesh, transfer_map(mesh, mesh)
    targets = mesh.refinement_level.copy()
    targets[refine_set] += 1
    targets[coarsen_set] = np.maximum(targets[coarsen_set] - 1, 0)
    new = build_from_base(mesh.base_n, _target_split(mesh, targets))
    if np.array_equal(new.keys, mesh.keys) and np.array_equal(new.triangles, mesh.triangles):
        new = mesh
    return new, transfer_map(mesh, new)


def adapt_marks(X_prev, X_cur, eps: float, h_min: float, h_max: float):
    """Refinement/coarsening marks from the gradient indicator.

    eta = max(|grad X_prev|, |grad X_cur|) per triangle. Refine where
    eps*eta >= 1e-2 and size > h_min, coarsen where eps*eta <= 1e-3 and
    size < h_max.
    """
    Xp = X_prev.values if isinstance(X_prev, FeFunction) else np.asarray(X_prev)
    Xc = X_cur.values if isinstance(X_cur, FeFunction) else np.asarray(X_cur)
    mesh = X_cur.mesh if isinstance(X_cur, FeFunction) else None
    if isinstance(X_prev, FeFunction) and mesh is not None and X_prev.mesh_id != mesh.mesh_id:
        raise ValueError("X_prev and X_cur live on different meshes")
    if not 0.0 < h_min <= h_max:
        raise ValueError("need 0 < h_min <= h_max")
    gp = np.linalg.norm(gradient_per_triangle(mesh, Xp), axis=1)
    gc = np.linalg.norm(gradient_per_triangle(mesh, Xc), axis=1)
    ind = eps * np.maximum(gp, gc)
    h = mesh.sizes
    tol = 1e-9
    ref = np.flatnonzero((ind >= 1e-2) & (h > h_min * (1 + tol)))
    coa = np.flatnonzero((ind <= 1e-3) & (h < h_max * (1 - tol)))
    return ref, coa


# ---------------------------------------------------------------------------
# transfer


def transfer_map(src: Mesh, dst: Mesh) -> TransferMap:
    if src.base_n != dst.base_n:
        raise MeshError("meshes do not share a base mesh")
    idx = src.key_index()
    source = np.array([idx.get((int(a), int(b)), -1) for a, b in dst.keys], dtype=np.int64)
    missing = source < 0
    if np.any(missing & (dst.parents[:, 0] < 0)):
        raise MeshError("meshes are not related by refinement history")
    return TransferMap(src.mesh_id, dst.mesh_id, _frozen(source), dst.parents)


def transfer(u, src: Mesh, dst: Mesh, tmap: TransferMap | None = None) -> FeFunction:
    """Nodal interpolation of ``u`` from ``src`` onto ``dst``."""
    vals = u.values if isinstance(u, FeFunction) else np.asarray(u, dtype=float)
    if vals.shape != (src.num_nodes,):
        raise ValueError("u does not live on the source mesh")
    if src is dst or src.mesh_id == dst.mesh_id:
        return FeFunction(dst, vals)
    if tmap is None:
        tmap = transfer_map(src, dst)
    elif tmap.source_id != src.mesh_id or tmap.target_id != dst.mesh_id:
        raise MeshError("transfer map does not match the meshes")
    return FeFunction(dst, transfer_values(vals, tmap))


def transfer_values(vals: np.ndarray, tmap: TransferMap) -> np.ndarray:
    out = np.empty(len(tmap.source))
    have = tmap.source >= 0
    out[have] = vals[tmap.source[have]]
    # parents precede children in node order
    for i in np.flatnonzero(~have):
        p, q = tmap.parents[i]
        out[i] = 0.5 * (out[p] + out[q])
    return out


# ---------------------------------------------------------------------------
# point location


class _Locator:
    """Triangles bucketed by base-grid cell; buckets padded with -1 to a table."""

    def __init__(self, mesh: Mesh):
        n = mesh.base_n
        p = mesh.nodes[mesh.triangles]
        lo = np.floor(p.min(axis=1) * n + 1e-9).astype(int).clip(0, n - 1)
        hi = np.floor(p.max(axis=1) * n - 1e-9).astype(int).clip(0, n - 1)
        buckets: list[list[int]] = [[] for _ in range(n * n)]
        for t in range(mesh.num_triangles):
            for i in range(lo[t, 0], hi[t, 0] + 1):
                for j in range(lo[t, 1], hi[t, 1] + 1):
                    buckets[j * n + i].append(t)
        width = max(len(b) for b in buckets)
        table = np.full((n * n, width), -1, dtype=np.int64)
        for r, b in enumerate(buckets):
            table[r, :len(b)] = b
        self.n = n
        self.table = table
        self.p = p


def _barycentric(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points ``x[..., 2]`` in triangles ``p[..., 3, 2]``."""
    a, b, c = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    det = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (c[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1])
    l1 = ((x[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
          - (c[..., 0] - a[..., 0]) * (x[..., 1] - a[..., 1])) / det
    l2 = ((b[..., 0] - a[..., 0]) * (x[..., 1] - a[..., 1])
          - (x[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def locate_points(mesh: Mesh, xs) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangles and barycentric coordinates for points ``xs`` (P, 2)."""
    xs = np.asarray(xs, dtype=float).reshape(-1, 2)
    tol = 1e-12
    bad = ~np.all(np.isfinite(xs), axis=1) | np.any(xs < -tol, axis=1) | np.any(xs > 1 + tol, axis=1)
    if np.any(bad):
        raise ValueError(f"point {xs[np.argmax(bad)]} outside the unit square")
    if mesh._locator is None:
        mesh._locator = _Locator(mesh)
    loc = mesh._locator
    ij = np.clip(np.floor(xs * loc.n), 0, loc.n - 1).astype(int)
    cand = loc.table[ij[:, 1] * loc.n + ij[:, 0]]
    lam = _barycentric(loc.p[np.maximum(cand, 0)], xs[:, None, :])
    score = np.where(cand >= 0, lam.min(axis=2), -np.inf)
    best = np.argmax(score, axis=1)
    rows = np.arange(len(xs))
    if np.any(score[rows, best] < -1e-10):
        r = int(np.argmin(score[rows, best]))
        raise ValueError(f"point {xs[r]} could not be located")
    bary = np.clip(lam[rows, best], 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    return cand[rows, best], bary


def point_locate(mesh: Mesh, x) -> tuple[int, np.ndarray]:
    """Triangle containing ``x`` and its barycentric coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError("expected a single 2D point")
    tri, bary = locate_points(mesh, x[None])
    return int(tri[0]), bary[0]


def evaluation_matrix(mesh: Mesh, xs) -> sp.csr_matrix:
    """Sparse matrix E with (E u)_r = u_h(xs[r]) for nodal vectors u."""
    tri, bary = locate_points(mesh, xs)
    rows = np.repeat(np.arange(len(tri)), 3)
    cols = mesh.triangles[tri].ravel()
    return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(len(tri), mesh.num_nodes))


def evaluate(u: FeFunction, xs) -> np.ndarray:
    return evaluation_matrix(u.mesh, xs) @ u.values


def is_conforming(mesh: Mesh) -> bool:
    """No hanging nodes: every interior edge is shared by exactly two triangles
    and no node lies in the interior of another triangle's edge."""
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        return False
    # a hanging node would be a midpoint key lying on an edge as a non-vertex
    edge_mid = {}
    k = mesh.keys
    for a, b in np.unique(e, axis=0):
        s = k[a] + k[b]
        if s[0] % 2 == 0 and s[1] % 2 == 0:
            edge_mid[(int(s[0] // 2), int(s[1] // 2))] = True
    idx = mesh.key_index()
    return not any(key in idx for key in edge_mid)
