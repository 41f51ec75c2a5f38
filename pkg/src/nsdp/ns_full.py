"""Full-order matrix-form Navier-Stokes integrator.

One step (semi-implicit Euler with Chorin projection):

1. upwinded advection terms ``F_U``, ``F_V`` at the current state;
2. two Sylvester solves for the implicit viscous terms;
3. pressure Sylvester solve on the divergence of the intermediate field and
   the projection ``U - B1_U^T Phi``, ``V - Phi B2_V``.

``Phi`` is the pressure scaled by ``-dt`` (``U_new = U* - dt grad p``); the
stored state carries the physical pressure ``p = -Phi / dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .grid import (BoundaryConditions, GridSpec, OperatorSet, Traces, divergence_tr,
                   extend_u, extend_v, homogeneous_bc, pad_u, pad_v, viscous_boundary)
from .sylvester import SylvesterFactorization

Control = Union[float, np.ndarray]


@dataclass
class FullState:
    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "FullState":
        return cls(np.zeros(grid.shape_u), np.zeros(grid.shape_v), np.zeros(grid.shape_p), t)

    def copy(self) -> "FullState":
        return FullState(self.U.copy(), self.V.copy(), self.P.copy(), self.t)


@dataclass
class ForcingSpec:
    """Body force, control shape fields and the upwinding rule.

    ``shapes`` holds one ``(psi_u, psi_v)`` pair per control component; the
    momentum right-hand sides receive ``dt * sum_i alpha_i * psi_i``.
    ``gamma_up=None`` recomputes the upwind weight every step.
    """

    f_u: Optional[np.ndarray] = None
    f_v: Optional[np.ndarray] = None
    shapes: Sequence[tuple] = ()
    gamma_up: Optional[float] = None

    def __post_init__(self):
        if self.gamma_up is not None and not 0.0 <= self.gamma_up <= 1.0:
            raise ValueError(f"gamma_up must lie in [0, 1], got {self.gamma_up}")


def upwind_weight(U, V, grid: GridSpec, tr: Traces, dt: float) -> float:
    umax = np.abs(pad_u(U, tr)).max(initial=0.0)
    vmax = np.abs(pad_v(V, tr)).max(initial=0.0)
    return float(min(1.2 * dt * max(umax / grid.h_x, vmax / grid.h_y), 1.0))


def _advection_parts(U, V, tr: Traces):
    Ue = extend_u(U, tr)
    Ve = extend_v(V, tr)
    # values at cell corners, (n_x+1) x (n_y+1)
    uk = 0.5 * (Ue[:, 1:] + Ue[:, :-1])
    udk = 0.5 * (Ue[:, 1:] - Ue[:, :-1])
    vk = 0.5 * (Ve[1:] + Ve[:-1])
    vdk = 0.5 * (Ve[1:] - Ve[:-1])
    # values at cell centres, n_x x n_y
    Ub = Ue[:, 1:-1]
    Vb = Ve[1:-1]
    uc = 0.5 * (Ub[1:] + Ub[:-1])
    udc = 0.5 * (Ub[1:] - Ub[:-1])
    vc = 0.5 * (Vb[:, 1:] + Vb[:, :-1])
    vdc = 0.5 * (Vb[:, 1:] - Vb[:, :-1])
    return uk, udk, vk, vdk, uc, udc, vc, vdc


def advection_tr(U, V, grid: GridSpec, tr: Traces, gamma: float):
    """Upwinded conservative advection ``(F_U, F_V)`` for fixed wall values."""
    uk, udk, vk, vdk, uc, udc, vc, vdc = _advection_parts(U, V, tr)
    hx, hy = grid.h_x, grid.h_y
    G_u = uc**2 - gamma * np.abs(uc) * udc
    H_y = uk * vk - gamma * udk * np.abs(vk)
    F_U = np.diff(G_u, axis=0) / hx + np.diff(H_y, axis=1)[1:-1, :] / hy
    G_v = vc**2 - gamma * np.abs(vc) * vdc
    H_x = uk * vk - gamma * np.abs(uk) * vdk
    F_V = np.diff(G_v, axis=1) / hy + np.diff(H_x, axis=0)[:, 1:-1] / hx
    return F_U, F_V


def _check_shapes(U, V, grid):
    if U.shape != grid.shape_u or V.shape != grid.shape_v:
        raise ValueError(f"shape mismatch: U {U.shape}, V {V.shape} on a {grid.n_x}x{grid.n_y} grid")


def nonlinear_U(U, V, ops: OperatorSet, bc: BoundaryConditions, t=0.0, alpha=0.0, gamma_up=0.0):
    _check_shapes(U, V, ops.grid)
    return advection_tr(U, V, ops.grid, bc.traces(ops.grid, t, alpha), gamma_up)[0]


def nonlinear_V(U, V, ops: OperatorSet, bc: BoundaryConditions, t=0.0, alpha=0.0, gamma_up=0.0):
    _check_shapes(U, V, ops.grid)
    return advection_tr(U, V, ops.grid, bc.traces(ops.grid, t, alpha), gamma_up)[1]


def pressure_factorization(ops: OperatorSet) -> SylvesterFactorization:
    fact = ops.extras.get("pressure_fact")
    if fact is None:
        fact = SylvesterFactorization(ops.L1_P, ops.L2_P)
        ops.extras["pressure_fact"] = fact
    return fact


def solve_pressure(div: np.ndarray, ops: OperatorSet, pin=(0, 0)):
    """Solve ``L1_P Phi + Phi L2_P = div`` with the constant mode removed.

    ``pin=None`` keeps the zero-mean solution; otherwise ``Phi[pin] = 0``.
    """
    Phi = pressure_factorization(ops).solve(div, deflate=True)
    if pin is not None:
        Phi = Phi - Phi[pin]
    return Phi


def pressure_correct(U, V, ops: OperatorSet, bc: Optional[BoundaryConditions] = None,
                     t=0.0, alpha=0.0, pin=(0, 0)):
    """Projection potential ``Phi`` making ``project(U, V, Phi)`` divergence free."""
    _check_shapes(U, V, ops.grid)
    bc = bc or homogeneous_bc()
    div = divergence_tr(U, V, ops, bc.traces(ops.grid, t, alpha))
    return solve_pressure(div, ops, pin)


def project(U, V, Phi, ops: OperatorSet):
    return U - ops.B1_U.T @ Phi, V - Phi @ ops.B2_V


class FullModel:
    """Full-order stepper with the Sylvester factorizations prepared once."""

    def __init__(self, ops: OperatorSet, dt: float, bc: Optional[BoundaryConditions] = None,
                 forcing: Optional[ForcingSpec] = None, pin=(0, 0)):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.ops, self.grid, self.dt = ops, ops.grid, float(dt)
        self.bc = bc or homogeneous_bc()
        self.forcing = forcing or ForcingSpec()
        self.pin = pin
        nu, mu = ops.A1_U.shape[0], ops.A2_V.shape[0]
        self.fact_u = SylvesterFactorization(np.eye(nu) - dt * ops.A1_U, -dt * ops.A2_U.T)
        self.fact_v = SylvesterFactorization(np.eye(ops.A1_V.shape[0]) - dt * ops.A1_V, -dt * ops.A2_V.T)
        # negative definite viscous operators leave no zero eigenvalue sum
        assert not self.fact_u.is_singular and not self.fact_v.is_singular
        pressure_factorization(ops)
        self.last_gamma = None

    def traces(self, t, alpha):
        return self.bc.traces(self.grid, t, alpha)

    def gamma(self, U, V, tr):
        if self.forcing.gamma_up is not None:
            return self.forcing.gamma_up
        return upwind_weight(U, V, self.grid, tr, self.dt)

    def actuation(self, alpha):
        fu = np.zeros(self.grid.shape_u)
        fv = np.zeros(self.grid.shape_v)
        if self.forcing.f_u is not None:
            fu = fu + self.forcing.f_u
        if self.forcing.f_v is not None:
            fv = fv + self.forcing.f_v
        if self.forcing.shapes:
            a = np.atleast_1d(np.asarray(alpha, dtype=float))
            if a.size != len(self.forcing.shapes):
                raise ValueError(f"control has {a.size} components, actuation expects {len(self.forcing.shapes)}")
            for ai, (pu, pv) in zip(a, self.forcing.shapes):
                fu = fu + ai * pu
                fv = fv + ai * pv
        return fu, fv

    def step(self, state: FullState, alpha: Control = 0.0, return_parts: bool = False):
        """Advance one step.

        With ``return_parts=True`` also returns a dict holding the advection
        terms ``F_U``, ``F_V`` and the pre-projection velocities ``U_star``,
        ``V_star`` of this step.
        """
        dt, g, ops = self.dt, self.grid, self.ops
        t0, t1 = state.t, state.t + dt
        tr0 = self.traces(t0, alpha)
        tr1 = self.traces(t1, alpha)
        gamma = self.gamma(state.U, state.V, tr0)
        self.last_gamma = gamma
        F_U, F_V = advection_tr(state.U, state.V, g, tr0, gamma)
        bu, bv = viscous_boundary(g, tr1)
        fu, fv = self.actuation(alpha)
        U_star = self.fact_u.solve(state.U - dt * F_U + dt * (bu + fu))
        V_star = self.fact_v.solve(state.V - dt * F_V + dt * (bv + fv))
        div = divergence_tr(U_star, V_star, ops, tr1)
        Phi = solve_pressure(div, ops, self.pin)
        U_new, V_new = project(U_star, V_star, Phi, ops)
        new = FullState(U_new, V_new, -Phi / dt, t1)
        if not (np.all(np.isfinite(U_new)) and np.all(np.isfinite(V_new))):
            raise FloatingPointError(f"non-finite velocity at t={t1:.6g}")
        if return_parts:
            return new, {"F_U": F_U, "F_V": F_V, "U_star": U_star, "V_star": V_star}
        return new


_MODEL_CACHE: dict = {}


def step(state: FullState, ops: OperatorSet, dt: float, bc: Optional[BoundaryConditions] = None,
         forcing: Optional[ForcingSpec] = None, alpha: Control = 0.0) -> FullState:
    """Functional form of :meth:`FullModel.step` (factorizations cached per ops/dt)."""
    key = (id(ops), float(dt), id(bc), id(forcing))
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = FullModel(ops, dt, bc, forcing)
        if len(_MODEL_CACHE) > 32:
            _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = model
    return model.step(state, alpha)


@dataclass
class Trajectory:
    states: list
    controls: list
    snapshots: dict = field(default_factory=dict)
    gammas: list = field(default_factory=list)

    @property
    def final(self) -> FullState:
        return self.states[-1]


def control_values(control_signal, n_t: int):
    if callable(control_signal):
        return None
    arr = np.asarray(control_signal, dtype=float)
    if arr.ndim == 0:
        return [float(arr)] * n_t
    if len(arr) != n_t:
        raise ValueError(f"control signal has {len(arr)} entries, need {n_t}")
    return list(arr)


def integrate(init: FullState, model: FullModel, n_t: int, control_signal=0.0,
              record: bool = False) -> Trajectory:
    """Run ``n_t`` steps; ``control_signal`` is a constant, a sequence or ``f(t)``.

    With ``record=True`` the trajectory also keeps U, V, P snapshots of every
    state (the initial one included), and the advection terms and
    pre-projection velocities of every step.
    """
    values = control_values(control_signal, n_t)
    traj = Trajectory([init], [])
    snaps = {"U": [init.U], "V": [init.V], "P": [init.P], "F_U": [], "F_V": [],
             "U_star": [], "V_star": []} if record else {}
    state = init
    for j in range(n_t):
        a = values[j] if values is not None else control_signal(state.t)
        state, parts = model.step(state, a, return_parts=True)
        traj.states.append(state)
        traj.controls.append(a)
        traj.gammas.append(model.last_gamma)
        if record:
            snaps["U"].append(state.U)
            snaps["V"].append(state.V)
            snaps["P"].append(state.P)
            for name, val in parts.items():
                snaps[name].append(val)
    traj.snapshots = snaps
    return traj
