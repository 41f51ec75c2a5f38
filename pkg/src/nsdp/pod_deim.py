"""Two-sided POD bases, Q-DEIM indices and offline assembly of reduced operators.

A state matrix is compressed as ``X ~ X_l Xhat X_r^T``. The advection terms
are approximated by two-sided DEIM: the full nonlinear matrix is only needed
on a row index set ``I`` and a column index set ``J``, and every quantity the
upwinded fluxes need on ``I x J`` (and on the neighbouring rows/columns) is an
affine function ``L X R + K`` of the state, so its samples reduce to small
offline products ``(L[rows] X_l) Xhat (X_r^T R[:, cols])``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la

from .grid import (BoundaryConditions, OperatorSet, Traces, differencing, divergence_tr,
                   homogeneous_bc, viscous_boundary)
from .ns_full import ForcingSpec, _advection_parts

log = logging.getLogger(__name__)


class DegenerateSnapshotsError(ValueError):
    pass


_FAMILIES = ("U", "V", "P", "F_U", "F_V", "U_star", "V_star")


@dataclass
class SnapshotSet:
    """Snapshot families; ``U_star``/``V_star`` are optional pre-projection velocities."""

    U: list = field(default_factory=list)
    V: list = field(default_factory=list)
    P: list = field(default_factory=list)
    F_U: list = field(default_factory=list)
    F_V: list = field(default_factory=list)
    U_star: list = field(default_factory=list)
    V_star: list = field(default_factory=list)

    @property
    def n_s(self) -> int:
        return len(self.U)

    def extend(self, other):
        if isinstance(other, SnapshotSet):
            other = {name: getattr(other, name) for name in _FAMILIES}
        for name in _FAMILIES:
            getattr(self, name).extend(other.get(name, []))

    def validate(self):
        for name in ("U", "V", "P", "F_U", "F_V"):
            fam = getattr(self, name)
            if not fam:
                raise DegenerateSnapshotsError(f"snapshot family {name} is empty")
            shapes = {s.shape for s in fam}
            if len(shapes) != 1:
                raise ValueError(f"snapshot family {name} mixes shapes {sorted(shapes)}")


def truncation_rank(s: np.ndarray, tol: float) -> int:
    """Smallest k with ``sqrt(sum_{i>k} s_i^2) / sqrt(sum s_i^2) <= tol``."""
    energy = np.cumsum((s**2)[::-1])[::-1]  # energy[k] = sum_{i>=k} s_i^2
    total = energy[0]
    tail = np.append(energy[1:], 0.0)
    ok = np.sqrt(tail) <= tol * np.sqrt(total)
    return int(np.argmax(ok)) + 1


def two_sided_pod(snapshots: Sequence[np.ndarray], tol: float, max_rank: Optional[int] = None,
                  return_svals: bool = False):
    """Left and right POD bases of a family of matrix snapshots.

    Left basis: leading left singular vectors of ``[S_1, ..., S_ns]``;
    right basis: the same for ``[S_1^T, ..., S_ns^T]``.
    """
    if len(snapshots) == 0:
        raise DegenerateSnapshotsError("empty snapshot list")
    if not 0 < tol <= 1:
        raise ValueError(f"tol must lie in (0, 1], got {tol}")
    left = np.hstack(snapshots)
    right = np.hstack([S.T for S in snapshots])
    if not np.any(left):
        raise DegenerateSnapshotsError("all snapshots are zero; no basis can be built")
    Ql, sl, _ = np.linalg.svd(left, full_matrices=False)
    Qr, sr, _ = np.linalg.svd(right, full_matrices=False)
    kl, kr = truncation_rank(sl, tol), truncation_rank(sr, tol)
    if max_rank is not None:
        kl, kr = min(kl, max_rank), min(kr, max_rank)
    out = (Ql[:, :kl], Qr[:, :kr])
    if return_svals:
        return out + (sl, sr)
    return out


def with_constant(B: np.ndarray, atol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis spanning ``[1, B]`` with the constant vector first."""
    n = B.shape[0]
    one = np.full((n, 1), 1.0 / np.sqrt(n))
    R = B - one @ (one.T @ B)
    Q, s, _ = np.linalg.svd(R, full_matrices=False)
    Q = Q[:, s > atol]
    # directions with small s lose orthogonality to the constant; reorthogonalize once more
    Q = np.linalg.qr(Q - one @ (one.T @ Q))[0]
    return np.hstack([one, Q])


def qdeim_indices(Phi: np.ndarray) -> np.ndarray:
    """Interpolation rows of ``Phi`` from a column-pivoted QR of ``Phi^T``."""
    m, p = Phi.shape
    if p > m:
        raise ValueError(f"cannot pick {p} indices from {m} rows")
    _, R, piv = la.qr(Phi.T, pivoting=True, mode="economic")
    d = np.abs(np.diag(R))
    if d.size == 0 or d[-1] <= 1e-12 * max(d[0], 1e-300):
        raise np.linalg.LinAlgError("DEIM basis is rank deficient")
    idx = np.asarray(piv[:p], dtype=int)
    cond = np.linalg.cond(Phi[idx, :])
    log.debug("Q-DEIM: %d indices, ||(D^T Phi)^-1||-based cond %.3e", p, cond)
    return idx


@dataclass
class ReducedBasis:
    U_l: np.ndarray
    U_r: np.ndarray
    V_l: np.ndarray
    V_r: np.ndarray
    P_l: np.ndarray
    P_r: np.ndarray
    Phi_U_l: np.ndarray
    Phi_U_r: np.ndarray
    Phi_V_l: np.ndarray
    Phi_V_r: np.ndarray
    idx_U_l: np.ndarray
    idx_U_r: np.ndarray
    idx_V_l: np.ndarray
    idx_V_r: np.ndarray
    tol: float = 0.0
    tolerances: dict = field(default_factory=dict)

    def ranks(self) -> dict:
        return {
            "U": [self.U_l.shape[1], self.U_r.shape[1]],
            "V": [self.V_l.shape[1], self.V_r.shape[1]],
            "P": [self.P_l.shape[1], self.P_r.shape[1]],
            "F_U": [self.Phi_U_l.shape[1], self.Phi_U_r.shape[1]],
            "F_V": [self.Phi_V_l.shape[1], self.Phi_V_r.shape[1]],
        }

    def bases(self) -> dict:
        return {k: getattr(self, k) for k in ("U_l", "U_r", "V_l", "V_r", "P_l", "P_r",
                                              "Phi_U_l", "Phi_U_r", "Phi_V_l", "Phi_V_r")}

    @classmethod
    def identity(cls, ops: OperatorSet) -> "ReducedBasis":
        """Untruncated bases (every basis the identity, every index selected)."""
        g = ops.grid
        I = np.eye
        mu, nu = g.shape_u
        mv, nv = g.shape_v
        return cls(I(mu), I(nu), I(mv), I(nv), I(g.n_x), I(g.n_y),
                   I(mu), I(nu), I(mv), I(nv),
                   np.arange(mu), np.arange(nu), np.arange(mv), np.arange(nv), 0.0)


def build_reduced_basis(snaps: SnapshotSet, tol: float, deim_tol: Optional[float] = None,
                        pressure_tol: Optional[float] = None, max_rank: Optional[int] = None,
                        pressure_constant: bool = True, use_intermediate: bool = True) -> ReducedBasis:
    """POD bases for U, V, P, F_U, F_V and Q-DEIM indices for the nonlinear families.

    Parameters
    ----------
    snaps : SnapshotSet
    tol : float
        Relative tail-energy tolerance of every family.
    deim_tol, pressure_tol : float, optional
        Separate tolerances for the nonlinear and pressure families; default ``tol``.
    max_rank : int, optional
        Cap on every rank.
    pressure_constant : bool
        Augment the pressure bases with the constant vector so that the
        reduced pressure pencil keeps an exactly separable null mode.
    use_intermediate : bool
        Add the pre-projection velocities (if recorded) to the velocity
        families. The reduced viscous solve lives in the velocity space, so
        that space must also represent the fields before projection.
    """
    snaps.validate()
    deim_tol = tol if deim_tol is None else deim_tol
    pressure_tol = tol if pressure_tol is None else pressure_tol
    U_fam, V_fam = list(snaps.U), list(snaps.V)
    if use_intermediate:
        U_fam += snaps.U_star
        V_fam += snaps.V_star
    U_l, U_r = two_sided_pod(U_fam, tol, max_rank)
    V_l, V_r = two_sided_pod(V_fam, tol, max_rank)
    P_l, P_r = two_sided_pod(snaps.P, pressure_tol, max_rank)
    if pressure_constant:
        P_l, P_r = with_constant(P_l), with_constant(P_r)
    FU_l, FU_r = two_sided_pod(snaps.F_U, deim_tol, max_rank)
    FV_l, FV_r = two_sided_pod(snaps.F_V, deim_tol, max_rank)
    return ReducedBasis(U_l, U_r, V_l, V_r, P_l, P_r, FU_l, FU_r, FV_l, FV_r,
                        qdeim_indices(FU_l), qdeim_indices(FU_r),
                        qdeim_indices(FV_l), qdeim_indices(FV_r), tol,
                        {"tol": tol, "deim_tol": deim_tol, "pressure_tol": pressure_tol})


# --------------------------------------------------------------------------
# affine fields entering the advection terms

def _affine_maps(ops: OperatorSet) -> dict:
    """``name -> (source, L, R)`` so that ``field = L X R + K(traces)``."""
    g = ops.grid
    Dx = differencing(g.n_x)
    Dy = differencing(g.n_y)
    Iu = np.eye(g.n_y)
    Iv = np.eye(g.n_x)
    return {
        "uc": ("U", ops.C_x @ ops.E_x, Iu),
        "udc": ("U", 0.5 * Dx @ ops.E_x, Iu),
        "uk": ("U", ops.E_x, ops.Ka_y.T),
        "udk": ("U", ops.E_x, ops.Kd_y.T),
        "vk": ("V", ops.Ka_x, ops.E_y.T),
        "vdk": ("V", ops.Kd_x, ops.E_y.T),
        "vc": ("V", Iv, ops.E_y.T @ ops.C_y.T),
        "vdc": ("V", Iv, 0.5 * ops.E_y.T @ Dy.T),
    }


_PART_ORDER = ("uk", "udk", "vk", "vdk", "uc", "udc", "vc", "vdc")


def boundary_fields(ops: OperatorSet, tr: Traces) -> dict:
    g = ops.grid
    parts = _advection_parts(np.zeros(g.shape_u), np.zeros(g.shape_v), tr)
    return dict(zip(_PART_ORDER, parts))


@dataclass
class SampledField:
    """Samples ``field[rows, cols]`` as ``left @ Xhat @ right + K0 + alpha * K1``."""

    left: np.ndarray
    right: np.ndarray
    K0: np.ndarray
    K1: np.ndarray
    source: str

    def __call__(self, Xhat, alpha=0.0):
        out = self.left @ Xhat @ self.right + self.K0
        a = np.asarray(alpha, dtype=float)
        if a.ndim == 0:
            return out + float(a) * self.K1 if a != 0 else out
        return out + a[:, None, None] * self.K1


def _affine_split(fn, atol=1e-10):
    """Split ``fn(alpha)`` into ``K0 + alpha K1`` and check affinity."""
    K0 = fn(0.0)
    K1 = fn(1.0) - K0
    Kh = fn(0.5)
    if not np.allclose(Kh, K0 + 0.5 * K1, atol=atol * max(1.0, np.abs(K1).max(initial=0.0))):
        raise ValueError("boundary traces are not affine in the control")
    return K0, K1


# names of the sampled fields: (field, row shift, col shift)
_SAMPLES_U = {
    "uc_0": ("uc", 0, 0), "uc_1": ("uc", 1, 0), "udc_0": ("udc", 0, 0), "udc_1": ("udc", 1, 0),
    "uk_a": ("uk", 1, 0), "uk_b": ("uk", 1, 1), "udk_a": ("udk", 1, 0), "udk_b": ("udk", 1, 1),
    "vk_a": ("vk", 1, 0), "vk_b": ("vk", 1, 1),
}
_SAMPLES_V = {
    "vc_0": ("vc", 0, 0), "vc_1": ("vc", 0, 1), "vdc_0": ("vdc", 0, 0), "vdc_1": ("vdc", 0, 1),
    "uk_a": ("uk", 0, 1), "uk_b": ("uk", 1, 1), "vk_a": ("vk", 0, 1), "vk_b": ("vk", 1, 1),
    "vdk_a": ("vdk", 0, 1), "vdk_b": ("vdk", 1, 1),
}


def sample_advection(ops: OperatorSet, basis: ReducedBasis, bc: BoundaryConditions,
                     which: str, rows=None, cols=None) -> dict:
    """Offline products for the sampled advection term ``F_U`` or ``F_V``."""
    maps = _affine_maps(ops)
    g = ops.grid
    if which == "U":
        rows = basis.idx_U_l if rows is None else rows
        cols = basis.idx_U_r if cols is None else cols
        spec = _SAMPLES_U
    else:
        rows = basis.idx_V_l if rows is None else rows
        cols = basis.idx_V_r if cols is None else cols
        spec = _SAMPLES_V
    rows, cols = np.asarray(rows), np.asarray(cols)
    bfields = {}
    for a in (0.0, 0.5, 1.0):
        bfields[a] = boundary_fields(ops, bc.traces(g, 0.0, a))
    out = {}
    for name, (fname, dr, dc) in spec.items():
        source, L, R = maps[fname]
        Xl, Xr = (basis.U_l, basis.U_r) if source == "U" else (basis.V_l, basis.V_r)
        r, c = rows + dr, cols + dc
        K0, K1 = _affine_split(lambda a: bfields[a][fname][np.ix_(r, c)])
        out[name] = SampledField(L[r] @ Xl, Xr.T @ R[:, c], K0, K1, source)
    return out


def deim_projectors(X_l, X_r, Phi_l, Phi_r, idx_l, idx_r):
    """``X_l^T Phi_l (D_l^T Phi_l)^-1`` and ``(Phi_r^T D_r)^-1 Phi_r^T X_r``."""
    Sl = Phi_l[idx_l]
    Sr = Phi_r[idx_r]
    left = np.linalg.solve(Sl.T, (X_l.T @ Phi_l).T).T
    right = np.linalg.solve(Sr.T, Phi_r.T @ X_r)
    return left, right, float(np.linalg.cond(Sl)), float(np.linalg.cond(Sr))


@dataclass
class ReducedOperators:
    grid: object
    ranks: dict
    # viscous
    A1_U: np.ndarray
    A2_U: np.ndarray
    A1_V: np.ndarray
    A2_V: np.ndarray
    bu0: np.ndarray
    bu1: np.ndarray
    bv0: np.ndarray
    bv1: np.ndarray
    # pressure
    L1_P: np.ndarray
    L2_P: np.ndarray
    divU_l: np.ndarray
    divU_r: np.ndarray
    divV_l: np.ndarray
    divV_r: np.ndarray
    div0: np.ndarray
    div1: np.ndarray
    gradU_l: np.ndarray
    gradU_r: np.ndarray
    gradV_l: np.ndarray
    gradV_r: np.ndarray
    P_row0_l: np.ndarray
    P_row0_r: np.ndarray
    P_ones_l: np.ndarray
    P_ones_r: np.ndarray
    # DEIM
    projU_l: np.ndarray
    projU_r: np.ndarray
    projV_l: np.ndarray
    projV_r: np.ndarray
    samples_U: dict
    samples_V: dict
    # actuation
    shapes: list = field(default_factory=list)
    f_u: Optional[np.ndarray] = None
    f_v: Optional[np.ndarray] = None
    gamma_up: float = 0.0
    deim_cond: dict = field(default_factory=dict)

    def arrays(self) -> dict:
        """Flat ``name -> ndarray`` view of every stored matrix."""
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, np.ndarray):
                out[k] = v
        for prefix, d in (("sU", self.samples_U), ("sV", self.samples_V)):
            for name, sf in d.items():
                for part in ("left", "right", "K0", "K1"):
                    out[f"{prefix}.{name}.{part}"] = getattr(sf, part)
        for i, (pu, pv) in enumerate(self.shapes):
            out[f"shape{i}.u"] = pu
            out[f"shape{i}.v"] = pv
        return out


def assemble_reduced(ops: OperatorSet, basis: ReducedBasis, bc: Optional[BoundaryConditions] = None,
                     forcing: Optional[ForcingSpec] = None, gamma_up: float = 0.0) -> ReducedOperators:
    """Project every coefficient matrix once; online work is then rank-sized.

    Boundary data is taken at t = 0 and must be affine in the (scalar) control.
    """
    bc = bc or homogeneous_bc()
    forcing = forcing or ForcingSpec()
    g = ops.grid
    b = basis
    Ul, Ur, Vl, Vr, Pl, Pr = b.U_l, b.U_r, b.V_l, b.V_r, b.P_l, b.P_r

    def vis(a):
        return viscous_boundary(g, bc.traces(g, 0.0, a))

    bu0, bu1 = _affine_split(lambda a: vis(a)[0])
    bv0, bv1 = _affine_split(lambda a: vis(a)[1])
    zeroU, zeroV = np.zeros(g.shape_u), np.zeros(g.shape_v)
    d0, d1 = _affine_split(lambda a: divergence_tr(zeroU, zeroV, ops, bc.traces(g, 0.0, a)))

    pUl, pUr, cUl, cUr = deim_projectors(Ul, Ur, b.Phi_U_l, b.Phi_U_r, b.idx_U_l, b.idx_U_r)
    pVl, pVr, cVl, cVr = deim_projectors(Vl, Vr, b.Phi_V_l, b.Phi_V_r, b.idx_V_l, b.idx_V_r)

    shapes = [(Ul.T @ pu @ Ur, Vl.T @ pv @ Vr) for pu, pv in forcing.shapes]
    f_u = None if forcing.f_u is None else Ul.T @ forcing.f_u @ Ur
    f_v = None if forcing.f_v is None else Vl.T @ forcing.f_v @ Vr

    return ReducedOperators(
        grid=g, ranks=b.ranks(),
        A1_U=Ul.T @ ops.A1_U @ Ul, A2_U=Ur.T @ ops.A2_U @ Ur,
        A1_V=Vl.T @ ops.A1_V @ Vl, A2_V=Vr.T @ ops.A2_V @ Vr,
        bu0=Ul.T @ bu0 @ Ur, bu1=Ul.T @ bu1 @ Ur,
        bv0=Vl.T @ bv0 @ Vr, bv1=Vl.T @ bv1 @ Vr,
        L1_P=Pl.T @ ops.L1_P @ Pl, L2_P=Pr.T @ ops.L2_P @ Pr,
        divU_l=Pl.T @ ops.B1_U @ Ul, divU_r=Ur.T @ Pr,
        divV_l=Pl.T @ Vl, divV_r=Vr.T @ ops.B2_V.T @ Pr,
        div0=Pl.T @ d0 @ Pr, div1=Pl.T @ d1 @ Pr,
        gradU_l=Ul.T @ ops.B1_U.T @ Pl, gradU_r=Pr.T @ Ur,
        gradV_l=Vl.T @ Pl, gradV_r=Pr.T @ ops.B2_V @ Vr,
        P_row0_l=Pl[0].copy(), P_row0_r=Pr[0].copy(),
        P_ones_l=Pl.sum(axis=0), P_ones_r=Pr.sum(axis=0),
        projU_l=pUl, projU_r=pUr, projV_l=pVl, projV_r=pVr,
        samples_U=sample_advection(ops, b, bc, "U"),
        samples_V=sample_advection(ops, b, bc, "V"),
        shapes=shapes, f_u=f_u, f_v=f_v, gamma_up=float(gamma_up),
        deim_cond={"U_l": cUl, "U_r": cUr, "V_l": cVl, "V_r": cVr},
    )


def _abs(x):
    return np.abs(x)


def sampled_advection_U(Uh, Vh, rops: ReducedOperators, alpha=0.0, gamma=None):
    """``F_U`` on the DEIM index grid, from rank-sized products only."""
    s = rops.samples_U
    gam = rops.gamma_up if gamma is None else gamma
    g = rops.grid
    uc0, uc1 = s["uc_0"](Uh, alpha), s["uc_1"](Uh, alpha)
    ud0, ud1 = s["udc_0"](Uh, alpha), s["udc_1"](Uh, alpha)
    G0 = uc0 * uc0 - gam * _abs(uc0) * ud0
    G1 = uc1 * uc1 - gam * _abs(uc1) * ud1
    uka, ukb = s["uk_a"](Uh, alpha), s["uk_b"](Uh, alpha)
    uda, udb = s["udk_a"](Uh, alpha), s["udk_b"](Uh, alpha)
    vka, vkb = s["vk_a"](Vh, alpha), s["vk_b"](Vh, alpha)
    Ha = uka * vka - gam * uda * _abs(vka)
    Hb = ukb * vkb - gam * udb * _abs(vkb)
    return (G1 - G0) / g.h_x + (Hb - Ha) / g.h_y


def sampled_advection_V(Uh, Vh, rops: ReducedOperators, alpha=0.0, gamma=None):
    s = rops.samples_V
    gam = rops.gamma_up if gamma is None else gamma
    g = rops.grid
    vc0, vc1 = s["vc_0"](Vh, alpha), s["vc_1"](Vh, alpha)
    vd0, vd1 = s["vdc_0"](Vh, alpha), s["vdc_1"](Vh, alpha)
    G0 = vc0 * vc0 - gam * _abs(vc0) * vd0
    G1 = vc1 * vc1 - gam * _abs(vc1) * vd1
    uka, ukb = s["uk_a"](Uh, alpha), s["uk_b"](Uh, alpha)
    vka, vkb = s["vk_a"](Vh, alpha), s["vk_b"](Vh, alpha)
    vda, vdb = s["vdk_a"](Vh, alpha), s["vdk_b"](Vh, alpha)
    Ha = uka * vka - gam * _abs(uka) * vda
    Hb = ukb * vkb - gam * _abs(ukb) * vdb
    return (G1 - G0) / g.h_y + (Hb - Ha) / g.h_x


def deim_nonlinear_U(Uh, Vh, rops: ReducedOperators, alpha=0.0, gamma=None):
    """Reduced advection term ``U_l^T F_U U_r`` approximated by two-sided DEIM."""
    return rops.projU_l @ sampled_advection_U(Uh, Vh, rops, alpha, gamma) @ rops.projU_r


def deim_nonlinear_V(Uh, Vh, rops: ReducedOperators, alpha=0.0, gamma=None):
    return rops.projV_l @ sampled_advection_V(Uh, Vh, rops, alpha, gamma) @ rops.projV_r
