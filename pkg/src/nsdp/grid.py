"""Staggered-grid geometry and finite-difference coefficient matrices.

Layout (rows index x, columns index y):

* ``U`` holds u on the interior vertical faces, shape ``(n_x - 1, n_y)``;
* ``V`` holds v on the interior horizontal faces, shape ``(n_x, n_y - 1)``;
* ``P`` holds cell-centred pressure, shape ``(n_x, n_y)``.

Boundary values enter through padding (``U_bar`` gets a west/east row,
``V_bar`` a south/north column) and through ghost values mirrored across walls
on which a component is not stored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

Trace = Callable[[np.ndarray, float, float], np.ndarray]


@dataclass(frozen=True)
class GridSpec:
    n_x: int
    n_y: int
    b_x: float = 1.0
    b_y: float = 1.0
    r: float = 100.0

    def __post_init__(self):
        # n = 2 is accepted so a single interior face can be checked by hand.
        if self.n_x < 2 or self.n_y < 2:
            raise ValueError(f"need at least 2 cells per direction, got {self.n_x}x{self.n_y}")
        if self.b_x <= 0 or self.b_y <= 0:
            raise ValueError("domain lengths must be positive")
        if self.r <= 0:
            raise ValueError("Reynolds number must be positive")

    @property
    def h_x(self) -> float:
        return self.b_x / self.n_x

    @property
    def h_y(self) -> float:
        return self.b_y / self.n_y

    @property
    def eps(self) -> float:
        return 1.0 / self.r

    @property
    def shape_u(self):
        return (self.n_x - 1, self.n_y)

    @property
    def shape_v(self):
        return (self.n_x, self.n_y - 1)

    @property
    def shape_p(self):
        return (self.n_x, self.n_y)

    # coordinates of the stored unknowns
    def x_faces(self):
        return np.arange(self.n_x + 1) * self.h_x

    def y_faces(self):
        return np.arange(self.n_y + 1) * self.h_y

    def x_centers(self):
        return (np.arange(self.n_x) + 0.5) * self.h_x

    def y_centers(self):
        return (np.arange(self.n_y) + 0.5) * self.h_y

    def mesh_u(self):
        return np.meshgrid(self.x_faces()[1:-1], self.y_centers(), indexing="ij")

    def mesh_v(self):
        return np.meshgrid(self.x_centers(), self.y_faces()[1:-1], indexing="ij")

    def mesh_p(self):
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")

    def transposed(self) -> "GridSpec":
        return GridSpec(self.n_y, self.n_x, self.b_y, self.b_x, self.r)


class Traces(NamedTuple):
    """Wall values evaluated at one (t, alpha).

    ``uW``/``uE`` live at the y cell centres (length n_y), ``uS``/``uN`` at the
    x faces including corners (length n_x + 1); symmetrically for v.
    """

    uW: np.ndarray
    uE: np.ndarray
    uS: np.ndarray
    uN: np.ndarray
    vS: np.ndarray
    vN: np.ndarray
    vW: np.ndarray
    vE: np.ndarray


def _zero_trace(s, t, alpha):
    return np.zeros_like(s)


@dataclass(frozen=True)
class BoundaryConditions:
    """Per-wall Dirichlet traces ``g(s, t, alpha)`` with ``s`` the wall coordinate.

    Missing traces are zero (no-slip). Tangential traces (u on S/N, v on W/E)
    are imposed through ghost values; normal traces through padding.
    """

    u_N: Optional[Trace] = None
    u_S: Optional[Trace] = None
    u_E: Optional[Trace] = None
    u_W: Optional[Trace] = None
    v_N: Optional[Trace] = None
    v_S: Optional[Trace] = None
    v_E: Optional[Trace] = None
    v_W: Optional[Trace] = None

    def _eval(self, fn, s, t, alpha):
        if fn is None:
            return np.zeros_like(s)
        val = np.asarray(fn(s, t, alpha), dtype=float)
        val = np.broadcast_to(val, s.shape).astype(float)
        if not np.all(np.isfinite(val)):
            raise FloatingPointError(f"boundary trace not finite at t={t}, alpha={alpha}")
        return val

    def traces(self, grid: GridSpec, t: float = 0.0, alpha: float = 0.0) -> Traces:
        xf, yf = grid.x_faces(), grid.y_faces()
        xc, yc = grid.x_centers(), grid.y_centers()
        e = self._eval
        return Traces(
            uW=e(self.u_W, yc, t, alpha), uE=e(self.u_E, yc, t, alpha),
            uS=e(self.u_S, xf, t, alpha), uN=e(self.u_N, xf, t, alpha),
            vS=e(self.v_S, xc, t, alpha), vN=e(self.v_N, xc, t, alpha),
            vW=e(self.v_W, yf, t, alpha), vE=e(self.v_E, yf, t, alpha),
        )

    def transposed(self) -> "BoundaryConditions":
        """Mirror the problem across the diagonal (x <-> y, u <-> v)."""
        return BoundaryConditions(
            u_N=self.v_E, u_S=self.v_W, u_E=self.v_N, u_W=self.v_S,
            v_N=self.u_E, v_S=self.u_W, v_E=self.u_N, v_W=self.u_S,
        )

    def net_normal_flux(self, grid: GridSpec, t: float = 0.0, alpha: float = 0.0) -> float:
        """Discrete boundary flux; zero is required for a solvable projection."""
        tr = self.traces(grid, t, alpha)
        return float(grid.h_y * (tr.uE.sum() - tr.uW.sum())
                     + grid.h_x * (tr.vN.sum() - tr.vS.sum()))


def homogeneous_bc() -> BoundaryConditions:
    return BoundaryConditions()


def lid_driven_bc(speed: float = 1.0) -> BoundaryConditions:
    """Moving top wall: tangential velocity ``speed`` on y = b_y, no-slip elsewhere."""
    return BoundaryConditions(u_N=lambda s, t, a: np.full_like(s, speed))


def top_wall_bc(profile: Trace) -> BoundaryConditions:
    """Tangential top-wall velocity ``u(x, b_y, t) = profile(x, t, alpha)``."""
    return BoundaryConditions(u_N=profile)


# --------------------------------------------------------------------------
# 1D building blocks

def second_difference(n: int, h: float, kind: str = "dirichlet") -> np.ndarray:
    """Tridiagonal ``(1, -2, 1)/h^2`` with wall rows folded according to ``kind``.

    ``dirichlet``: wall values sit one node beyond the ends (diagonal -2);
    ``ghost``: walls sit half a cell beyond the ends (diagonal -3);
    ``neumann``: zero normal derivative (diagonal -1).
    """
    end = {"dirichlet": -2.0, "ghost": -3.0, "neumann": -1.0}[kind]
    A = np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    A[0, 0] = A[-1, -1] = end
    if n == 1 and kind == "neumann":
        A[0, 0] = 0.0
    return A / h**2


def averaging(n: int) -> np.ndarray:
    """``n x (n+1)`` matrix with 1/2 on the main and upper diagonal."""
    C = np.zeros((n, n + 1))
    idx = np.arange(n)
    C[idx, idx] = 0.5
    C[idx, idx + 1] = 0.5
    return C


def differencing(n: int, h: float = 1.0) -> np.ndarray:
    """``n x (n+1)`` forward difference ``(x[i+1] - x[i]) / h``."""
    D = np.zeros((n, n + 1))
    idx = np.arange(n)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D / h


def embed(n: int) -> np.ndarray:
    """``(n+2) x n`` zero-padding ``[0; I; 0]``."""
    E = np.zeros((n + 2, n))
    E[1:-1] = np.eye(n)
    return E


def corner_average(n: int) -> np.ndarray:
    """Values at the n+1 nodes between/around n cell-centred values.

    End rows are zero: the wall value itself is supplied as a boundary term.
    """
    K = np.zeros((n + 1, n))
    idx = np.arange(1, n)
    K[idx, idx - 1] = 0.5
    K[idx, idx] = 0.5
    return K


def corner_half_difference(n: int) -> np.ndarray:
    """Half differences at the n+1 nodes, using ghost values at the ends."""
    K = np.zeros((n + 1, n))
    idx = np.arange(1, n)
    K[idx, idx - 1] = -0.5
    K[idx, idx] = 0.5
    K[0, 0] = 1.0
    K[n, n - 1] = -1.0
    return K


@dataclass(frozen=True)
class OperatorSet:
    grid: GridSpec
    # viscous operators (already scaled by 1/r)
    A1_U: np.ndarray
    A2_U: np.ndarray
    A1_V: np.ndarray
    A2_V: np.ndarray
    # divergence on interior unknowns and on padded fields
    B1_U: np.ndarray
    B2_V: np.ndarray
    B1bar_U: np.ndarray
    B2bar_V: np.ndarray
    # pressure Laplacian pair (positive semidefinite, constant null vector)
    L1_P: np.ndarray
    L2_P: np.ndarray
    # averaging / differencing used by the advection terms
    C_x: np.ndarray
    C_y: np.ndarray
    E_x: np.ndarray
    E_y: np.ndarray
    Ka_x: np.ndarray
    Ka_y: np.ndarray
    Kd_x: np.ndarray
    Kd_y: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def B1_V(self) -> np.ndarray:
        """x-differencing of corner values onto v locations, ``(n_x) x (n_x+1)``."""
        return differencing(self.grid.n_x, self.grid.h_x)

    @property
    def B2_U(self) -> np.ndarray:
        """y-differencing of corner values onto u locations, ``(n_y) x (n_y+1)``."""
        return differencing(self.grid.n_y, self.grid.h_y)


def build_operators(grid: GridSpec) -> OperatorSet:
    nx, ny, hx, hy, eps = grid.n_x, grid.n_y, grid.h_x, grid.h_y, grid.eps
    B1bar = differencing(nx, hx)
    B2bar = differencing(ny, hy)
    B1 = B1bar[:, 1:-1]
    B2 = B2bar[:, 1:-1]
    return OperatorSet(
        grid=grid,
        A1_U=eps * second_difference(nx - 1, hx, "dirichlet"),
        A2_U=eps * second_difference(ny, hy, "ghost"),
        A1_V=eps * second_difference(nx, hx, "ghost"),
        A2_V=eps * second_difference(ny - 1, hy, "dirichlet"),
        B1_U=B1, B2_V=B2, B1bar_U=B1bar, B2bar_V=B2bar,
        L1_P=B1 @ B1.T, L2_P=B2 @ B2.T,
        C_x=averaging(nx), C_y=averaging(ny),
        E_x=embed(nx - 1), E_y=embed(ny - 1),
        Ka_x=corner_average(nx), Ka_y=corner_average(ny),
        Kd_x=corner_half_difference(nx), Kd_y=corner_half_difference(ny),
    )


# --------------------------------------------------------------------------
# padding and boundary terms

def pad_u(U: np.ndarray, tr: Traces) -> np.ndarray:
    """``U_bar``: U with the west/east wall values as first/last rows."""
    return np.vstack([tr.uW[None, :], U, tr.uE[None, :]])


def pad_v(V: np.ndarray, tr: Traces) -> np.ndarray:
    """``V_bar``: V with the south/north wall values as first/last columns."""
    return np.hstack([tr.vS[:, None], V, tr.vN[:, None]])


def pad_boundary(X: np.ndarray, bc: BoundaryConditions, grid: GridSpec,
                 t: float = 0.0, alpha: float = 0.0, component: str = "u") -> np.ndarray:
    tr = bc.traces(grid, t, alpha)
    if component == "u":
        if X.shape != grid.shape_u:
            raise ValueError(f"U has shape {X.shape}, expected {grid.shape_u}")
        return pad_u(X, tr)
    if component == "v":
        if X.shape != grid.shape_v:
            raise ValueError(f"V has shape {X.shape}, expected {grid.shape_v}")
        return pad_v(X, tr)
    raise ValueError(f"unknown component {component!r}")


def extend_u(U: np.ndarray, tr: Traces) -> np.ndarray:
    """U padded on all sides, ghost columns mirrored across the S/N walls."""
    Ub = pad_u(U, tr)
    return np.hstack([(2 * tr.uS - Ub[:, 0])[:, None], Ub, (2 * tr.uN - Ub[:, -1])[:, None]])


def extend_v(V: np.ndarray, tr: Traces) -> np.ndarray:
    """V padded on all sides, ghost rows mirrored across the W/E walls."""
    Vb = pad_v(V, tr)
    return np.vstack([(2 * tr.vW - Vb[0])[None, :], Vb, (2 * tr.vE - Vb[-1])[None, :]])


def viscous_boundary(grid: GridSpec, tr: Traces):
    """Constant parts of the folded viscous stencils (already scaled by 1/r)."""
    hx2, hy2, eps = grid.h_x**2, grid.h_y**2, grid.eps
    bu = np.zeros(grid.shape_u)
    bu[0, :] += tr.uW / hx2
    bu[-1, :] += tr.uE / hx2
    bu[:, 0] += 2 * tr.uS[1:-1] / hy2
    bu[:, -1] += 2 * tr.uN[1:-1] / hy2
    bv = np.zeros(grid.shape_v)
    bv[0, :] += 2 * tr.vW[1:-1] / hx2
    bv[-1, :] += 2 * tr.vE[1:-1] / hx2
    bv[:, 0] += tr.vS / hy2
    bv[:, -1] += tr.vN / hy2
    return eps * bu, eps * bv


def divergence_tr(U: np.ndarray, V: np.ndarray, ops: OperatorSet, tr: Traces) -> np.ndarray:
    return ops.B1bar_U @ pad_u(U, tr) + pad_v(V, tr) @ ops.B2bar_V.T


def divergence(U: np.ndarray, V: np.ndarray, ops: OperatorSet,
               bc: Optional[BoundaryConditions] = None, t: float = 0.0, alpha: float = 0.0) -> np.ndarray:
    """Cell-centred divergence ``B1_U U + V B2_V^T`` plus wall fluxes from ``bc``."""
    g = ops.grid
    if U.shape != g.shape_u or V.shape != g.shape_v:
        raise ValueError(f"shape mismatch: U {U.shape}, V {V.shape} on a {g.n_x}x{g.n_y} grid")
    if bc is None:
        return ops.B1_U @ U + V @ ops.B2_V.T
    return divergence_tr(U, V, ops, bc.traces(g, t, alpha))
