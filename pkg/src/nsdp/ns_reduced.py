"""Reduced-order integrator on two-sided POD coordinates.

The online step mirrors the full one (advection, viscous Sylvester solve,
pressure projection) with every operator replaced by its projection, the
advection terms by two-sided DEIM and the upwind weight frozen at the offline
value. All arrays may carry a leading batch axis so that many tree nodes can
be advanced with one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ns_full import FullState, control_values
from .pod_deim import ReducedBasis, ReducedOperators, deim_nonlinear_U, deim_nonlinear_V
from .sylvester import SylvesterFactorization


@dataclass
class ReducedState:
    Uh: np.ndarray
    Vh: np.ndarray
    Ph: np.ndarray
    t: float = 0.0


def project_state(state: FullState, basis: ReducedBasis) -> ReducedState:
    b = basis
    return ReducedState(b.U_l.T @ state.U @ b.U_r, b.V_l.T @ state.V @ b.V_r,
                        b.P_l.T @ state.P @ b.P_r, state.t)


def lift_state(rstate: ReducedState, basis: ReducedBasis) -> FullState:
    b = basis
    return FullState(b.U_l @ rstate.Uh @ b.U_r.T, b.V_l @ rstate.Vh @ b.V_r.T,
                     b.P_l @ rstate.Ph @ b.P_r.T, rstate.t)


def _split_control(alpha, batch: Optional[int], n_shapes: int):
    """Return (scalar control for boundary data, per-shape components)."""
    a = np.asarray(alpha, dtype=float)
    if batch is None:
        comps = a.reshape(-1)
        scalar = float(comps[0]) if comps.size else 0.0
    else:
        comps = a.reshape(batch, -1)
        scalar = comps[:, 0]
    if n_shapes and comps.shape[-1] != n_shapes:
        raise ValueError(f"control has {comps.shape[-1]} components, actuation expects {n_shapes}")
    return scalar, comps


def _scale(c, M):
    c = np.asarray(c, dtype=float)
    return c * M if c.ndim == 0 else c[:, None, None] * M


class ReducedModel:
    """Reduced stepper; every Sylvester factorization is computed here once.

    ``pin="corner"`` fixes the lifted pressure potential at grid point (0, 0)
    like the full model; ``pin=None`` keeps the mean-free potential.
    """

    def __init__(self, rops: ReducedOperators, dt: float, pin: Optional[str] = "corner"):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if pin not in ("corner", None):
            raise ValueError(f"unknown pressure pin {pin!r}")
        self.rops, self.dt, self.pin = rops, float(dt), pin
        r = rops
        self.fact_u = SylvesterFactorization(np.eye(r.A1_U.shape[0]) - dt * r.A1_U, -dt * r.A2_U.T)
        self.fact_v = SylvesterFactorization(np.eye(r.A1_V.shape[0]) - dt * r.A1_V, -dt * r.A2_V.T)
        self.fact_p = SylvesterFactorization(r.L1_P, r.L2_P)
        self._const = np.outer(r.P_ones_l, r.P_ones_r)

    def _forces(self, scalar, comps):
        r = self.rops
        fu = r.bu0 + _scale(scalar, r.bu1)
        fv = r.bv0 + _scale(scalar, r.bv1)
        if r.f_u is not None:
            fu = fu + r.f_u
        if r.f_v is not None:
            fv = fv + r.f_v
        for i, (su, sv) in enumerate(r.shapes):
            fu = fu + _scale(comps[..., i], su)
            fv = fv + _scale(comps[..., i], sv)
        return fu, fv

    def step_arrays(self, Uh, Vh, alpha=0.0):
        """Advance reduced coefficients; returns ``(Uh, Vh, Ph)``.

        With a leading batch axis of length N, ``alpha`` must hold N controls.
        """
        r, dt = self.rops, self.dt
        batch = Uh.shape[0] if Uh.ndim == 3 else None
        scalar, comps = _split_control(alpha, batch, len(r.shapes))
        FU = deim_nonlinear_U(Uh, Vh, r, scalar)
        FV = deim_nonlinear_V(Uh, Vh, r, scalar)
        fu, fv = self._forces(scalar, comps)
        Us = self.fact_u.solve(Uh - dt * FU + dt * fu)
        Vs = self.fact_v.solve(Vh - dt * FV + dt * fv)
        div = r.divU_l @ Us @ r.divU_r + r.divV_l @ Vs @ r.divV_r + r.div0 + _scale(scalar, r.div1)
        Phi = self.fact_p.solve(div, deflate=True)
        if self.pin == "corner":
            val = r.P_row0_l @ Phi @ r.P_row0_r
            Phi = Phi - _scale(val, self._const)
        Un = Us - r.gradU_l @ Phi @ r.gradU_r
        Vn = Vs - r.gradV_l @ Phi @ r.gradV_r
        if not (np.all(np.isfinite(Un)) and np.all(np.isfinite(Vn))):
            raise FloatingPointError("non-finite reduced velocity")
        return Un, Vn, -Phi / dt

    def step(self, state: ReducedState, alpha=0.0) -> ReducedState:
        Uh, Vh, Ph = self.step_arrays(state.Uh, state.Vh, alpha)
        return ReducedState(Uh, Vh, Ph, state.t + self.dt)


def reduced_integrate(init: ReducedState, model: ReducedModel, n_t: int, control_signal=0.0):
    values = control_values(control_signal, n_t)
    states = [init]
    state = init
    for j in range(n_t):
        a = values[j] if values is not None else control_signal(state.t)
        state = model.step(state, a)
        states.append(state)
    return states
