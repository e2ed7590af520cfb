"""Implicit mass-lumped finite-element stepper for the stochastic Cahn-Hilliard system.

Each step solves, for the pair (X, w) on a P1 space with lumped mass m and
stiffness A,

    m (X - X_old) + k A w            = eps**gamma * g * m dW
    eps A X + (1/eps) m f(X) - m w   = 0

by Newton's method with the exact Jacobian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import cg_solve, dense_solve, gmres_solve
from .mesh import (FeFunction, Mesh, adapt, adapt_marks, assemble_lumped_mass,
                   assemble_stiffness, interpolate, transfer_values)

IMPLICIT_F = "implicit_f"
FTILDE = "ftilde"


class ParameterWarning(UserWarning):
    """Parameters outside the range covered by the convergence theory."""


class NewtonError(RuntimeError):
    def __init__(self, step: int, residual: float, iterations: int):
        super().__init__(f"Newton did not converge in step {step}: residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.step = step
        self.residual = residual
        self.iterations = iterations


def double_well(u):
    """Return (F(u), f(u), f'(u)) for F(u) = (u^2 - 1)^2 / 4."""
    u = np.asarray(u, dtype=float)
    return 0.25 * (u * u - 1.0) ** 2, u**3 - u, 3.0 * u * u - 1.0


@dataclass(frozen=True)
class ChParams:
    eps: float
    gamma: float = 1.0
    g: float = 0.0
    k: float = 1e-5
    T: float = 1e-3
    nonlinearity: str = IMPLICIT_F
    newton_tol: float = 1e-9
    newton_max_iter: int = 30
    adapt: bool = False
    h_min: float = 1.0 / 64
    h_max: float = 1.0 / 64
    linear_solver: str = "direct"

    def __post_init__(self):
        if self.eps <= 0 or self.k <= 0 or self.T <= 0:
            raise ValueError("eps, k and T must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if self.nonlinearity not in (IMPLICIT_F, FTILDE):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.linear_solver not in ("direct", "gmres"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    def check_assumptions(self) -> list[str]:
        """Warn (never fail) where the parameters leave the analysed regime."""
        notes = []
        if self.g != 0 and self.gamma <= 1.5:
            notes.append(f"gamma = {self.gamma} <= 3/2")
        if self.k > self.eps**3:
            notes.append(f"k = {self.k:g} > eps^3 = {self.eps**3:g}")
        for n in notes:
            warnings.warn(n, ParameterWarning, stacklevel=2)
        return notes

    @property
    def noise_scale(self) -> float:
        return self.eps**self.gamma * self.g


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class Circle:
    center: tuple = (0.5, 0.5)
    radius: float = 0.2

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return np.hypot(x[:, 0] - self.center[0], x[:, 1] - self.center[1]) - self.radius


@dataclass(frozen=True)
class TwoCircles:
    c1: tuple = (0.3, 0.5)
    r1: float = 0.15
    c2: tuple = (0.7, 0.5)
    r2: float = 0.1

    def __post_init__(self):
        if np.hypot(self.c1[0] - self.c2[0], self.c1[1] - self.c2[1]) <= self.r1 + self.r2:
            raise ValueError("circles overlap")

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(Circle(self.c1, self.r1).signed_distance(x),
                          Circle(self.c2, self.r2).signed_distance(x))


def tanh_profile(interface, eps: float):
    return lambda x: np.tanh(interface.signed_distance(x) / (np.sqrt(2.0) * eps))


def initial_profile(interface, eps: float, mesh: Mesh) -> FeFunction:
    """Nodal interpolant of tanh(d(x) / (sqrt(2) eps)); d < 0 inside."""
    return interpolate(tanh_profile(interface, eps), mesh)


def adapt_to_profile(fn, mesh: Mesh, eps: float, h_min: float, h_max: float,
                     max_rounds: int = 20) -> Mesh:
    """Refine ``mesh`` until the indicator of ``fn`` requests no more refinement."""
    for _ in range(max_rounds):
        X = interpolate(fn, mesh)
        ref, _ = adapt_marks(X, X, eps, h_min, h_max)
        if ref.size == 0:
            break
        mesh, _ = adapt(mesh, ref, [])
    return mesh


# ---------------------------------------------------------------------------
# state


@lru_cache(maxsize=16)
def operators(mesh: Mesh):
    return assemble_stiffness(mesh), assemble_lumped_mass(mesh)


@dataclass(frozen=True)
class ChState:
    mesh: Mesh
    X: FeFunction
    w: FeFunction
    t: float = 0.0
    j: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.mesh_id != self.mesh.mesh_id or self.w.mesh_id != self.mesh.mesh_id:
            raise ValueError("X and w must live on the state mesh")

    @classmethod
    def initial(cls, X: FeFunction, eps: float, t: float = 0.0) -> "ChState":
        """State with the chemical potential consistent with X."""
        A, m = operators(X.mesh)
        w = (eps * (A @ X.values)) / m + double_well(X.values)[1] / eps
        st = cls(X.mesh, X, FeFunction(X.mesh, w), t, 0)
        return replace(st, diagnostics={"energy": energy(X, eps), "mass": mass(X),
                                        "newton_iters": 0, "linear_iters": 0,
                                        "dofs": X.mesh.num_nodes})


def energy(X: FeFunction, eps: float) -> float:
    """Ginzburg-Landau energy: exact P1 gradient term plus lumped potential term."""
    A, m = operators(X.mesh)
    x = X.values
    return float(0.5 * eps * (x @ (A @ x)) + (m @ double_well(x)[0]) / eps)


def mass(X: FeFunction) -> float:
    _, m = operators(X.mesh)
    return float(m @ X.values)


def _nonlinearity(params: ChParams, X, X_old):
    if params.nonlinearity == FTILDE:
        s = X + X_old
        return 0.5 * (X * X - 1.0) * s, X * s + 0.5 * (X * X - 1.0)
    _, f, df = double_well(X)
    return f, df


def residual(params: ChParams, mesh: Mesh, X, w, X_old, noise_load):
    """Residual vectors of both equations (tested against every basis function)."""
    A, m = operators(mesh)
    f, _ = _nonlinearity(params, X, X_old)
    r1 = m * (X - X_old) + params.k * (A @ w) - noise_load
    r2 = params.eps * (A @ X) + m * f / params.eps - m * w
    return r1, r2


def _residual_norm(r1, r2, m) -> float:
    return float(np.sqrt(((r1 * r1 + r2 * r2) / m).sum()))


def _jacobian(params: ChParams, mesh: Mesh, X, X_old):
    A, m = operators(mesh)
    _, df = _nonlinearity(params, X, X_old)
    M = sp.diags(m)
    return sp.bmat([[M, params.k * A],
                    [params.eps * A + sp.diags(m * df / params.eps), -M]], format="csc")


def _schur_solve(J, rhs, m, k):
    """Eliminate dw through the diagonal block -M and factor the X-block.

    With J = [[M, kA], [C, -M]]: (M + k A M^-1 C) dX = b1 + k A M^-1 b2 and
    dw = M^-1 (C dX - b2).
    """
    n = m.shape[0]
    kA = J[:n, n:]
    C = J[n:, :n]
    Minv = sp.diags(1.0 / m)
    S = (sp.diags(m) + kA @ Minv @ C).tocsc()
    b1, b2 = rhs[:n], rhs[n:]
    dX = spla.splu(S, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1).solve(b1 + kA @ (b2 / m))
    dw = (C @ dX - b2) / m
    return np.concatenate([dX, dw])


def _linear_solve(J, rhs, params: ChParams, m=None):
    n = rhs.shape[0]
    if n <= 400:
        return dense_solve(J.toarray(), rhs), 1
    if params.linear_solver == "gmres":
        ilu = spla.spilu(J, drop_tol=1e-6, fill_factor=20)
        prec = spla.LinearOperator(J.shape, ilu.solve)
        x, rep = gmres_solve(J, rhs, tol=1e-10, restart=100, max_iter=50, M=prec)
        if rep.converged:
            return x, rep.iterations
    if m is not None:
        x = _schur_solve(J, rhs, m, params.k)
        if np.linalg.norm(J @ x - rhs) <= 1e-10 * np.linalg.norm(rhs):
            return x, 1
    return spla.splu(J, permc_spec="COLAMD").solve(rhs), 1


def newton_solve(params: ChParams, mesh: Mesh, X_old, w_guess, noise_load, step_index=0):
    """Solve one implicit step; returns (X, w, newton_iters, linear_iters, residual)."""
    _, m = operators(mesh)
    X = np.array(X_old, dtype=float)
    w = np.array(w_guess, dtype=float)
    n = mesh.num_nodes
    lin = 0
    r1, r2 = residual(params, mesh, X, w, X_old, noise_load)
    res = _residual_norm(r1, r2, m)
    it = 0
    while res > params.newton_tol:
        if it >= params.newton_max_iter or not np.isfinite(res):
            raise NewtonError(step_index, res, it)
        J = _jacobian(params, mesh, X, X_old)
        delta, li = _linear_solve(J, -np.concatenate([r1, r2]), params, m)
        lin += li
        X += delta[:n]
        w += delta[n:]
        it += 1
        r1, r2 = residual(params, mesh, X, w, X_old, noise_load)
        res = _residual_norm(r1, r2, m)
    return X, w, it, lin, res


def noise_load(params: ChParams, mesh: Mesh, dW=None) -> np.ndarray:
    """Right-hand side eps^gamma g m_l dW of the mass equation (zeros without noise)."""
    if dW is None or params.g == 0:
        return np.zeros(mesh.num_nodes)
    vals = dW.values if isinstance(dW, FeFunction) else np.asarray(dW, dtype=float)
    if isinstance(dW, FeFunction) and dW.mesh_id != mesh.mesh_id:
        raise ValueError("noise increment lives on a different mesh")
    _, m = operators(mesh)
    return params.noise_scale * m * vals


def step(state: ChState, params: ChParams, dW=None) -> ChState:
    """Advance one time step; ``dW`` is a Wiener increment on ``state.mesh`` or None."""
    mesh = state.mesh
    load = noise_load(params, mesh, dW)
    X_old = state.X.values
    X, w, it, lin, res = newton_solve(params, mesh, X_old, state.w.values, load, state.j + 1)
    Xf = FeFunction(mesh, X)
    diag = {"energy": energy(Xf, params.eps), "mass": mass(Xf), "newton_iters": it,
            "linear_iters": lin, "dofs": mesh.num_nodes, "residual": res}
    new = ChState(mesh, Xf, FeFunction(mesh, w), state.t + params.k, state.j + 1, diag)
    if params.adapt:
        new = adapt_state(new, X_old, params)
    return new


def step_ftilde(state: ChState, params: ChParams, dW=None) -> ChState:
    return step(state, replace(params, nonlinearity=FTILDE), dW)


def adapt_state(state: ChState, X_prev, params: ChParams) -> ChState:
    """Re-mesh from the indicator of (X_prev, X) and move the state to the new mesh.

    Coarsening drops nodes, so the lumped mass is restored afterwards by a
    constant shift of X (refinement alone is mass-exact).
    """
    ref, coa = adapt_marks(FeFunction(state.mesh, X_prev), state.X, params.eps,
                           params.h_min, params.h_max)
    new_mesh, tmap = adapt(state.mesh, ref, coa)
    if new_mesh is state.mesh:
        return state
    X = transfer_values(state.X.values, tmap)
    w = transfer_values(state.w.values, tmap)
    _, m = operators(new_mesh)
    if np.any(tmap.source < 0) or new_mesh.num_nodes < state.mesh.num_nodes:
        X = X + (state.diagnostics.get("mass", mass(state.X)) - m @ X) / m.sum()
    Xf = FeFunction(new_mesh, X)
    diag = dict(state.diagnostics, dofs=new_mesh.num_nodes, mass=mass(Xf),
                energy=energy(Xf, params.eps))
    return ChState(new_mesh, Xf, FeFunction(new_mesh, w), state.t, state.j, diag)


def relax_state(state: ChState, params: ChParams, relax_T: float, callback=None,
                min_k: float | None = None) -> ChState:
    """Deterministic evolution (g = 0) for time ``relax_T``.

    The step starts at ``params.k``; a Newton failure halves it (down to
    ``min_k``, default ``params.k / 1024``) and successes double it back.
    """
    if relax_T <= 0:
        raise ValueError("relaxation time must be positive")
    det = replace(params, g=0.0)
    min_k = params.k / 1024 if min_k is None else min_k
    t, k = 0.0, params.k
    while t < relax_T * (1 - 1e-12):
        k_try = min(k, relax_T - t)
        try:
            state = step(state, replace(det, k=k_try))
        except NewtonError:
            if k_try / 2 < min_k:
                raise
            k = k_try / 2
            continue
        t += k_try
        k = min(2 * k, params.k)
        if callback is not None:
            callback(state)
    return replace(state, t=0.0, j=0)


def relax(X0: FeFunction, params: ChParams, relax_T: float) -> FeFunction:
    return relax_state(ChState.initial(X0, params.eps), params, relax_T).X


def h_minus1_norm(v, mesh: Mesh | None = None, tol: float = 1e-12) -> float:
    """Discrete H^-1 norm ||grad y|| with -Delta_h y = v, y of zero mean."""
    if isinstance(v, FeFunction):
        mesh, vals = v.mesh, v.values
    else:
        vals = np.asarray(v, dtype=float)
    A, m = operators(mesh)
    mean = m @ vals
    if abs(mean) > 1e-12 * max(1.0, np.abs(vals).max()):
        raise ValueError(f"input has non-zero lumped mean {mean:.3e}")
    b = m * vals
    b = b - b.mean()
    if not np.any(b):
        return 0.0
    y, rep = cg_solve(A, b, tol=tol, constraint=m)
    return float(np.sqrt(max(y @ (A @ y), 0.0)))
