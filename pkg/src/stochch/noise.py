"""Discrete Wiener increments: truncated cosine noise and space-time white noise.

Random numbers come from a Philox counter-based generator keyed by
``(seed, variant)`` with the time-step index in the counter, so increment ``j``
is reproducible on its own without replaying earlier steps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .mesh import FeFunction, Mesh, assemble_lumped_mass, transfer_map, transfer_values

SMOOTH = "smooth_cosine"
WHITE = "white"
_STREAM = {WHITE: 0, SMOOTH: 1}


@dataclass(frozen=True)
class NoiseSpec:
    variant: str = WHITE
    modes: int = 64
    seed: int = 0
    normalize_mean: bool = True

    def __post_init__(self):
        if self.variant not in _STREAM:
            raise ValueError(f"unknown noise variant {self.variant!r}")
        if self.variant == SMOOTH and self.modes < 1:
            raise ValueError("smooth noise needs at least one mode per direction")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def standard_normals(seed: int, step: int, count: int, stream: int = 0) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64),
                              counter=np.array([0, 0, step, 0], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal(count)


def lumped_mean(values: np.ndarray, m: np.ndarray) -> float:
    return float(m @ values / m.sum())


def evaluate_cosine_sum(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """0.5 * sum_{k,l=1..K} cos(2 pi k x1) cos(2 pi l x2) coeffs[k-1, l-1]."""
    K = coeffs.shape[0]
    freqs = 2.0 * np.pi * np.arange(1, K + 1)
    c1 = np.cos(np.outer(points[:, 0], freqs))
    c2 = np.cos(np.outer(points[:, 1], freqs))
    return 0.5 * np.einsum("ik,ik->i", c1, c2 @ coeffs.T)


def smooth_coefficients(spec: NoiseSpec, k: float, step: int) -> np.ndarray:
    K = spec.modes
    z = standard_normals(spec.seed, step, K * K, _STREAM[SMOOTH])
    return np.sqrt(k) * z.reshape(K, K)


def white_coefficients(spec: NoiseSpec, k: float, step: int, count: int) -> np.ndarray:
    return np.sqrt(k) * standard_normals(spec.seed, step, count, _STREAM[WHITE])


def smooth_values(spec: NoiseSpec, mesh: Mesh, dbeta: np.ndarray) -> np.ndarray:
    vals = evaluate_cosine_sum(np.asarray(dbeta, dtype=float), mesh.nodes)
    if spec.normalize_mean:
        vals = vals - lumped_mean(vals, assemble_lumped_mass(mesh))
    return vals


def white_values(spec: NoiseSpec, mesh: Mesh, dbeta: np.ndarray) -> np.ndarray:
    m = assemble_lumped_mass(mesh)
    vals = np.asarray(dbeta, dtype=float) / np.sqrt(m)
    if spec.normalize_mean:
        vals = vals - lumped_mean(vals, m)
    return vals


def sample_smooth_increment(spec: NoiseSpec, mesh: Mesh, k: float, step: int,
                            dbeta: np.ndarray | None = None) -> FeFunction:
    """Nodal interpolant of the truncated cosine series with N(0, k) coefficients.

    ``dbeta`` overrides the random coefficients (shape ``(K, K)``).
    """
    if spec.variant != SMOOTH:
        raise ValueError("spec is not a smooth-cosine noise")
    if k <= 0:
        raise ValueError("time step must be positive")
    if dbeta is None:
        dbeta = smooth_coefficients(spec, k, step)
    return FeFunction(mesh, smooth_values(spec, mesh, dbeta))


def sample_white_increment(spec: NoiseSpec, mesh: Mesh, k: float, step: int,
                           dbeta: np.ndarray | None = None) -> FeFunction:
    """Space-time white noise: coefficient dbeta_l / sqrt(|supp phi_l| / 3), mean removed."""
    if spec.variant != WHITE:
        raise ValueError("spec is not a white noise")
    if k <= 0:
        raise ValueError("time step must be positive")
    if dbeta is None:
        dbeta = white_coefficients(spec, k, step, mesh.num_nodes)
    return FeFunction(mesh, white_values(spec, mesh, dbeta))


def sample_increment(spec: NoiseSpec, mesh: Mesh, k: float, step: int) -> FeFunction:
    if spec.variant == SMOOTH:
        return sample_smooth_increment(spec, mesh, k, step)
    return sample_white_increment(spec, mesh, k, step)


@dataclass(frozen=True)
class NoisePath:
    """Realised increments on a time grid of step ``k``.

    Smooth paths store the cosine coefficients of every step (``kind ==
    "coefficients"``) and can be evaluated on any mesh; white paths store nodal
    increments on ``mesh`` (``kind == "values"``). A path with ``blocks=None``
    is generated lazily from the counter-based generator at step
    ``k * substeps`` and split evenly into ``substeps`` pieces.
    """

    spec: NoiseSpec
    k: float
    n_steps: int
    mesh: Mesh | None = None
    blocks: tuple | None = None
    kind: str = "coefficients"
    substeps: int = 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.k

    @property
    def mesh_id(self) -> str | None:
        return None if self.mesh is None else self.mesh.mesh_id

    def block(self, j: int) -> np.ndarray:
        if not 0 <= j < self.n_steps:
            raise IndexError(f"step {j} outside path of {self.n_steps} steps")
        if self.blocks is not None:
            return self.blocks[j]
        coarse_k = self.k * self.substeps
        if self.spec.variant == SMOOTH:
            c = smooth_coefficients(self.spec, coarse_k, j // self.substeps)
        else:
            c = white_coefficients(self.spec, coarse_k, j // self.substeps, self.mesh.num_nodes)
        return c / self.substeps

    def increment(self, j: int, mesh: Mesh | None = None) -> FeFunction:
        """Increment of step ``j`` (0-based) as a nodal function."""
        b = self.block(j)
        if self.spec.variant == SMOOTH:
            target = mesh if mesh is not None else self.mesh
            return FeFunction(target, smooth_values(self.spec, target, b))
        if mesh is not None and mesh.mesh_id != self.mesh.mesh_id:
            raise ValueError("white-noise path lives on a different mesh; restrict it first")
        if self.kind == "values":
            return FeFunction(self.mesh, b)
        return FeFunction(self.mesh, white_values(self.spec, self.mesh, b))

    def materialize(self) -> "NoisePath":
        return replace(self, blocks=tuple(self.block(j) for j in range(self.n_steps)), substeps=1)


def generate_path(spec: NoiseSpec, mesh: Mesh | None, k: float, n_steps: int,
                  lazy: bool = False) -> NoisePath:
    if spec.variant == WHITE and mesh is None:
        raise ValueError("white-noise paths need a mesh")
    path = NoisePath(spec, float(k), int(n_steps), mesh)
    return path if lazy else path.materialize()


def interpolate_path(path: NoisePath, m: int) -> NoisePath:
    """Refine the time grid by ``m`` using piecewise-linear interpolation of W(t)."""
    if int(m) != m or m < 1:
        raise ValueError("refinement factor must be a positive integer")
    m = int(m)
    if m == 1:
        return path
    if path.blocks is None:
        return replace(path, k=path.k / m, n_steps=path.n_steps * m, substeps=path.substeps * m)
    blocks = tuple(b / m for b in path.blocks for _ in range(m))
    return replace(path, k=path.k / m, n_steps=path.n_steps * m, blocks=blocks)


def refine_time_grid(path: NoisePath, fine_k: float) -> NoisePath:
    ratio = path.k / fine_k
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * ratio:
        raise ValueError(f"fine step {fine_k} does not divide path step {path.k}")
    return interpolate_path(path, m)


def restrict_to_mesh(path: NoisePath, new_mesh: Mesh, tmap=None) -> NoisePath:
    """Move a path to ``new_mesh``.

    Smooth paths are re-evaluated from their coefficients; white paths are
    transferred nodally and their lumped mean removed again.
    """
    if path.spec.variant == SMOOTH:
        return replace(path, mesh=new_mesh)
    if tmap is None:
        tmap = transfer_map(path.mesh, new_mesh)
    m = assemble_lumped_mass(new_mesh)
    blocks = []
    for j in range(path.n_steps):
        v = transfer_values(path.increment(j).values, tmap)
        if path.spec.normalize_mean:
            v = v - lumped_mean(v, m)
        blocks.append(v)
    return replace(path, mesh=new_mesh, blocks=tuple(blocks), kind="values", substeps=1)


# ---------------------------------------------------------------------------
# archive
#
# little-endian layout:
#   8s   magic b"SCHNOISE"
#   I    format version (1)
#   B    variant (0 white, 1 smooth_cosine)
#   B    normalize_mean
#   B    kind (0 coefficients, 1 values)
#   x    pad
#   I    modes
#   Q    seed
#   d    k
#   d    horizon
#   Q    n_steps
#   Q    block length (floats per step)
#   16s  mesh id (ascii, zero padded; empty for mesh-free paths)
# followed by n_steps blocks of float64.

_MAGIC = b"SCHNOISE"
_HEADER = struct.Struct("<8sIBBBxIQddQQ16s")


def write_archive(path: NoisePath, filename) -> None:
    p = path.materialize() if path.blocks is None else path
    blen = int(np.asarray(p.blocks[0]).size) if p.n_steps else 0
    header = _HEADER.pack(_MAGIC, 1, _STREAM[p.spec.variant], int(p.spec.normalize_mean),
                          0 if p.kind == "coefficients" else 1, p.spec.modes, int(p.spec.seed),
                          p.k, p.horizon, p.n_steps, blen,
                          (p.mesh_id if p.spec.variant == WHITE else "").encode("ascii"))
    with open(filename, "wb") as fh:
        fh.write(header)
        for b in p.blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def read_archive(filename, mesh: Mesh | None = None) -> NoisePath:
    with open(filename, "rb") as fh:
        raw = fh.read()
    (magic, version, variant, normalize, kind, modes, seed, k, _horizon, n_steps, blen,
     mesh_id) = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError("not a noise path archive")
    spec = NoiseSpec(WHITE if variant == 0 else SMOOTH, modes, seed, bool(normalize))
    mesh_id = mesh_id.rstrip(b"\0").decode("ascii")
    if mesh_id and (mesh is None or mesh.mesh_id != mesh_id):
        raise ValueError(f"archive was written on mesh {mesh_id}; pass that mesh")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    data = data.reshape(n_steps, blen)
    shape = (modes, modes) if spec.variant == SMOOTH and kind == 0 else (blen,)
    blocks = tuple(row.reshape(shape).copy() for row in data)
    return NoisePath(spec, k, n_steps, mesh, blocks, "coefficients" if kind == 0 else "values")
