"""Actuation mechanisms, cost functionals and their reduced-space evaluation.

Three actuation types are supported: distributed shape functions, the
indicator of a rectangular subdomain, and a Dirichlet trace on one wall. Costs
use the discrete L2 norm ``||W||^2 = h_x h_y sum W_ij^2`` summed over the U and
V components; pressure mismatches are taken between mean-free fields.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .grid import BoundaryConditions, GridSpec, OperatorSet, homogeneous_bc
from .ns_full import ForcingSpec, FullModel, FullState, integrate
from .ns_reduced import ReducedModel
from .pod_deim import ReducedBasis


def l2_norm_sq(U, V, grid: GridSpec) -> float:
    return grid.h_x * grid.h_y * (float(np.sum(U * U)) + float(np.sum(V * V)))


def pressure_mismatch(P, P_target, grid: GridSpec) -> float:
    D = (P - P.mean()) - (P_target - P_target.mean())
    return grid.h_x * grid.h_y * float(np.sum(D * D))


# --------------------------------------------------------------------------
# actuation

@dataclass
class Distributed:
    """Body force ``sum_i alpha_i psi_i`` with staggered shape pairs ``(psi_u, psi_v)``."""

    shapes: Sequence[tuple]

    @property
    def m(self) -> int:
        return len(self.shapes)

    def shape_fields(self, grid: GridSpec):
        for pu, pv in self.shapes:
            if pu.shape != grid.shape_u or pv.shape != grid.shape_v:
                raise ValueError("shape fields do not match the staggered grid")
        return list(self.shapes)


@dataclass
class Subdomain:
    """Force ``alpha * direction * 1_omega`` on both velocity components.

    ``direction`` sets the sign (and weight) of each component; the indicator
    is evaluated at the staggered unknown locations, boundaries included.
    """

    omega: tuple = ((0.3, 0.7), (0.3, 0.7))
    direction: tuple = (1.0, 1.0)
    m: int = 1

    def indicator(self, X, Y):
        (x0, x1), (y0, y1) = self.omega
        tol = 1e-12
        return ((X >= x0 - tol) & (X <= x1 + tol) & (Y >= y0 - tol) & (Y <= y1 + tol)).astype(float)

    def shape_fields(self, grid: GridSpec):
        du, dv = self.direction
        return [(du * self.indicator(*grid.mesh_u()), dv * self.indicator(*grid.mesh_v()))]


@dataclass
class DirichletBoundary:
    """Control entering the trace ``g(s, t, alpha)`` of one velocity component on one wall."""

    trace: Callable
    wall: str = "N"
    component: str = "u"
    m: int = 1

    def __post_init__(self):
        if self.wall not in "NSEW" or len(self.wall) != 1 or self.component not in ("u", "v"):
            raise ValueError(f"bad wall/component {self.component}_{self.wall}")

    def boundary_conditions(self, base: Optional[BoundaryConditions] = None) -> BoundaryConditions:
        base = base or homogeneous_bc()
        return replace(base, **{f"{self.component}_{self.wall}": self.trace})

    def shape_fields(self, grid: GridSpec):
        return []


Actuation = Union[Distributed, Subdomain, DirichletBoundary]


def apply_actuation(rhs_u, rhs_v, actuation: Actuation, alpha, dt: float, grid: GridSpec):
    """Add ``dt * sum_i alpha_i psi_i`` to the momentum right-hand sides.

    Boundary actuation leaves the right-hand sides untouched; it acts through
    :meth:`DirichletBoundary.boundary_conditions`.
    """
    shapes = actuation.shape_fields(grid)
    if not shapes:
        return rhs_u, rhs_v
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.size != len(shapes):
        raise ValueError(f"control has {a.size} components, actuation expects {len(shapes)}")
    out_u, out_v = np.array(rhs_u, dtype=float), np.array(rhs_v, dtype=float)
    for ai, (pu, pv) in zip(a, shapes):
        out_u += dt * ai * pu
        out_v += dt * ai * pv
    return out_u, out_v


def actuated_model(ops: OperatorSet, dt: float, actuation: Optional[Actuation],
                   bc: Optional[BoundaryConditions] = None, forcing: Optional[ForcingSpec] = None):
    """Full model, boundary conditions and forcing with the actuation wired in."""
    bc = bc or homogeneous_bc()
    forcing = forcing or ForcingSpec()
    if isinstance(actuation, DirichletBoundary):
        bc = actuation.boundary_conditions(bc)
    elif actuation is not None:
        forcing = replace(forcing, shapes=list(forcing.shapes) + actuation.shape_fields(ops.grid))
    return FullModel(ops, dt, bc, forcing), bc, forcing


def check_compatibility(bc: BoundaryConditions, grid: GridSpec, controls=(0.0,), times=(0.0,), tol=1e-10):
    """Raise when the boundary data carries net normal flux (incompatible projection)."""
    for t in times:
        for a in controls:
            flux = bc.net_normal_flux(grid, t, a)
            if abs(flux) > tol:
                raise ValueError(f"boundary data has net normal flux {flux:.3e} at t={t}, alpha={a}")


# --------------------------------------------------------------------------
# costs

@dataclass
class CostSpec:
    """Cost ``sum_j dt e^{-lam t_j} L(y_j, a_j) + weight * g(y_T)``.

    ``target`` is None (zero target), one FullState (stationary target) or a
    list of FullStates indexed by time level. ``kind`` selects the terminal
    term: ``"velocity"`` (L2 mismatch) or ``"pressure"`` (mean-free mismatch).
    """

    target: Union[None, FullState, Sequence[FullState]] = None
    kind: str = "velocity"
    gamma_pen: float = 0.0
    lam: float = 0.0
    terminal_weight: float = 1.0
    running: bool = True
    terminal: bool = True
    dt: Optional[float] = None
    t0: float = 0.0

    def __post_init__(self):
        if self.gamma_pen < 0 or self.lam < 0 or self.terminal_weight < 0:
            raise ValueError("cost weights and discount must be non-negative")
        if self.kind not in ("velocity", "pressure"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "pressure" and self.target is None:
            raise ValueError("pressure cost needs a target")

    def target_at(self, t: Optional[float], grid: GridSpec) -> FullState:
        """Target state, piecewise constant between time levels."""
        if self.target is None:
            return FullState.zeros(grid)
        if isinstance(self.target, FullState):
            return self.target
        seq = list(self.target)
        if t is None:
            return seq[-1]
        if self.dt is None:
            raise ValueError("trajectory targets need the level spacing dt")
        k = int(np.floor((t - self.t0) / self.dt + 1e-9))
        if not 0 <= k < len(seq):
            raise KeyError(f"no target at t={t}")
        return seq[k]


def running_cost(state: FullState, alpha, t: float, cost: CostSpec, grid: GridSpec) -> float:
    if not cost.running:
        return 0.0
    tgt = cost.target_at(t, grid)
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    return l2_norm_sq(state.U - tgt.U, state.V - tgt.V, grid) + cost.gamma_pen * float(a @ a)


def terminal_cost(state: FullState, cost: CostSpec, grid: GridSpec, t: Optional[float] = None) -> float:
    if not cost.terminal:
        return 0.0
    tgt = cost.target_at(t, grid)
    if cost.kind == "pressure":
        val = pressure_mismatch(state.P, tgt.P, grid)
    else:
        val = l2_norm_sq(state.U - tgt.U, state.V - tgt.V, grid)
    return cost.terminal_weight * val


def cost_trace(states: Sequence[FullState], controls: Sequence, cost: CostSpec, grid: GridSpec, dt: float):
    """Rows ``(t, J_running, J_cumulative)``; the last row carries the terminal term."""
    rows = []
    total = 0.0
    for j, a in enumerate(controls):
        t = states[j].t
        inc = dt * np.exp(-cost.lam * (t - cost.t0)) * running_cost(states[j], a, t, cost, grid)
        total += inc
        rows.append((t, inc, total))
    T = states[len(controls)].t
    term = np.exp(-cost.lam * (T - cost.t0)) * terminal_cost(states[len(controls)], cost, grid, T)
    total += term
    rows.append((T, term, total))
    return rows


def total_cost(states, controls, cost: CostSpec, grid: GridSpec, dt: float) -> float:
    return cost_trace(states, controls, cost, grid, dt)[-1][2]


def write_cost_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "J_running", "J_cumulative"])
        for t, r, c in rows:
            w.writerow([repr(float(t)), repr(float(r)), repr(float(c))])


def make_target_stationary(ops: OperatorSet, bc: BoundaryConditions, dt: float, T_long: float,
                           init: Optional[FullState] = None, forcing: Optional[ForcingSpec] = None):
    """Integrate the uncontrolled dynamics to ``T_long``.

    Returns the final state and the relative L2 change over the last step.
    """
    g = ops.grid
    init = init or FullState.zeros(g)
    n_t = int(round(T_long / dt))
    if n_t == 0:
        return init, 0.0
    traj = integrate(init, FullModel(ops, dt, bc, forcing), n_t)
    a, b = traj.states[-2], traj.states[-1]
    nb = np.sqrt(l2_norm_sq(b.U, b.V, g))
    change = np.sqrt(l2_norm_sq(b.U - a.U, b.V - a.V, g))
    return b, (0.0 if nb == 0 else change / nb)


# --------------------------------------------------------------------------
# reduced-space tree problem

@dataclass
class _ProjectedTarget:
    uv: np.ndarray      # scaled reduced velocity coefficients
    uv_resid: float     # out-of-span velocity energy
    p: Optional[np.ndarray] = None
    p_resid: float = 0.0
    p_sum: float = 0.0


class ReducedTreeProblem:
    """Node states, dynamics and costs for tree DP on the reduced model.

    A node stores ``sqrt(h_x h_y) * [vec(U_hat), vec(V_hat)]`` so that the
    Euclidean distance between nodes equals the discrete L2 distance of the
    lifted velocities. For pressure costs the scaled reduced pressure is
    appended and also enters the pruning distance: nodes with equal
    velocities share their future but not their terminal pressure cost.
    """

    def __init__(self, model: ReducedModel, basis: ReducedBasis, cost: CostSpec):
        self.model, self.basis, self.cost = model, basis, cost
        self.grid = model.rops.grid
        g = self.grid
        self.s = np.sqrt(g.h_x * g.h_y)
        self.shape_u = (basis.U_l.shape[1], basis.U_r.shape[1])
        self.shape_v = (basis.V_l.shape[1], basis.V_r.shape[1])
        self.shape_p = (basis.P_l.shape[1], basis.P_r.shape[1])
        self.du = int(np.prod(self.shape_u))
        self.dv = self.du + int(np.prod(self.shape_v))
        self.carry_pressure = cost.kind == "pressure"
        self.dim = self.dv + (int(np.prod(self.shape_p)) if self.carry_pressure else 0)
        self.prune_dims = slice(0, self.dim)
        self._targets: dict = {}
        c = np.outer(basis.P_l.sum(axis=0), basis.P_r.sum(axis=0))
        self._ones_p = c.reshape(-1)

    # packing
    def pack(self, Uh, Vh, Ph=None):
        Uh, Vh = np.asarray(Uh), np.asarray(Vh)
        lead = Uh.shape[:-2]
        parts = [Uh.reshape(lead + (-1,)), Vh.reshape(lead + (-1,))]
        if self.carry_pressure:
            if Ph is None:
                Ph = np.zeros(lead + self.shape_p)
            parts.append(np.asarray(Ph).reshape(lead + (-1,)))
        return self.s * np.concatenate(parts, axis=-1)

    def unpack(self, X):
        X = np.asarray(X) / self.s
        lead = X.shape[:-1]
        Uh = X[..., :self.du].reshape(lead + self.shape_u)
        Vh = X[..., self.du:self.dv].reshape(lead + self.shape_v)
        Ph = X[..., self.dv:].reshape(lead + self.shape_p) if self.carry_pressure else None
        return Uh, Vh, Ph

    def root(self, state: FullState):
        b = self.basis
        return self.pack(b.U_l.T @ state.U @ b.U_r, b.V_l.T @ state.V @ b.V_r, b.P_l.T @ state.P @ b.P_r)

    # dynamics
    def dyn(self, X, a, t):
        Uh, Vh, _ = self.unpack(X)
        N = X.shape[0]
        alpha = np.broadcast_to(np.atleast_1d(np.asarray(a, dtype=float)), (N, np.size(a))).copy()
        Un, Vn, Pn = self.model.step_arrays(Uh, Vh, alpha)
        return self.pack(Un, Vn, Pn)

    # costs
    def _project_target(self, tgt: FullState) -> _ProjectedTarget:
        key = id(tgt)
        if key in self._targets:
            return self._targets[key][1]
        b, g = self.basis, self.grid
        Uh, Vh = b.U_l.T @ tgt.U @ b.U_r, b.V_l.T @ tgt.V @ b.V_r
        uv = self.s * np.concatenate([Uh.reshape(-1), Vh.reshape(-1)])
        resid = l2_norm_sq(tgt.U, tgt.V, g) - float(uv @ uv)
        out = _ProjectedTarget(uv, max(resid, 0.0))
        if self.carry_pressure:
            Ph = b.P_l.T @ tgt.P @ b.P_r
            out.p = self.s * Ph.reshape(-1)
            out.p_resid = max(g.h_x * g.h_y * float(np.sum(tgt.P**2)) - float(out.p @ out.p), 0.0)
            out.p_sum = float(tgt.P.sum())
        self._targets[key] = (tgt, out)  # keep tgt alive so its id stays unique
        return out

    def velocity_mismatch(self, X, tgt: FullState):
        pt = self._project_target(tgt)
        D = X[:, :self.dv] - pt.uv
        return np.einsum("ij,ij->i", D, D) + pt.uv_resid

    def pressure_mismatch(self, X, tgt: FullState):
        """Mean-free lifted pressure mismatch from reduced coordinates."""
        pt = self._project_target(tgt)
        g = self.grid
        Xp = X[:, self.dv:]
        D = Xp - pt.p
        full = np.einsum("ij,ij->i", D, D) + pt.p_resid
        n = g.n_x * g.n_y
        mean = (Xp @ self._ones_p / self.s - pt.p_sum) / n
        return full - g.h_x * g.h_y * n * mean**2

    def running(self, X, a, t):
        c = self.cost
        if not c.running:
            return np.zeros(len(X))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        # discounting is applied level by level in the backward recursion
        return self.velocity_mismatch(X, c.target_at(t, self.grid)) + c.gamma_pen * float(a @ a)

    def terminal(self, X):
        c = self.cost
        if not c.terminal:
            return np.zeros(len(X))
        tgt = c.target_at(None, self.grid)
        if c.kind == "pressure":
            return c.terminal_weight * self.pressure_mismatch(X, tgt)
        return c.terminal_weight * self.velocity_mismatch(X, tgt)
