"""Pointwise and vectorised (Kronecker) reference implementations.

These are written with explicit loops over grid points and assembled sparse
matrices, independently of the 1D coefficient matrices used by the matrix
solver, and serve as correctness baselines on small grids. The vector-form
stepper is also the timing baseline of the simulate command.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import BoundaryConditions, GridSpec, Traces


class _Fields:
    """Velocity lookup including wall values and mirrored ghosts."""

    def __init__(self, U, V, grid: GridSpec, tr: Traces):
        self.U, self.V, self.g, self.tr = U, V, grid, tr

    def u(self, i, j):
        # i: x-face index 0..n_x, j: y-centre index -1..n_y
        nx, ny = self.g.n_x, self.g.n_y
        if j == -1:
            return 2 * self.tr.uS[i] - self.u(i, 0)
        if j == ny:
            return 2 * self.tr.uN[i] - self.u(i, ny - 1)
        if i == 0:
            return self.tr.uW[j]
        if i == nx:
            return self.tr.uE[j]
        return self.U[i - 1, j]

    def v(self, i, j):
        # i: x-centre index -1..n_x, j: y-face index 0..n_y
        nx, ny = self.g.n_x, self.g.n_y
        if i == -1:
            return 2 * self.tr.vW[j] - self.v(0, j)
        if i == nx:
            return 2 * self.tr.vE[j] - self.v(nx - 1, j)
        if j == 0:
            return self.tr.vS[i]
        if j == ny:
            return self.tr.vN[i]
        return self.V[i, j - 1]


def advection_pointwise(U, V, grid: GridSpec, tr: Traces, gamma: float):
    f = _Fields(U, V, grid, tr)
    nx, ny, hx, hy = grid.n_x, grid.n_y, grid.h_x, grid.h_y

    def uflux_x(k, j):  # cell centre (k, j)
        ua = 0.5 * (f.u(k, j) + f.u(k + 1, j))
        ud = 0.5 * (f.u(k + 1, j) - f.u(k, j))
        return ua * ua - gamma * abs(ua) * ud

    def vflux_y(i, c):  # cell centre (i, c)
        va = 0.5 * (f.v(i, c) + f.v(i, c + 1))
        vd = 0.5 * (f.v(i, c + 1) - f.v(i, c))
        return va * va - gamma * abs(va) * vd

    def corner(xi, yc):  # corner (xi, yc): x-face xi, y-face yc
        ua = 0.5 * (f.u(xi, yc - 1) + f.u(xi, yc))
        ud = 0.5 * (f.u(xi, yc) - f.u(xi, yc - 1))
        va = 0.5 * (f.v(xi - 1, yc) + f.v(xi, yc))
        vd = 0.5 * (f.v(xi, yc) - f.v(xi - 1, yc))
        return ua, ud, va, vd

    def cflux_y(xi, yc):
        ua, ud, va, _ = corner(xi, yc)
        return ua * va - gamma * ud * abs(va)

    def cflux_x(xi, yc):
        ua, _, va, vd = corner(xi, yc)
        return ua * va - gamma * abs(ua) * vd

    F_U = np.zeros(grid.shape_u)
    for i in range(nx - 1):
        for j in range(ny):
            F_U[i, j] = ((uflux_x(i + 1, j) - uflux_x(i, j)) / hx
                         + (cflux_y(i + 1, j + 1) - cflux_y(i + 1, j)) / hy)
    F_V = np.zeros(grid.shape_v)
    for i in range(nx):
        for j in range(ny - 1):
            F_V[i, j] = ((vflux_y(i, j + 1) - vflux_y(i, j)) / hy
                         + (cflux_x(i + 1, j + 1) - cflux_x(i, j + 1)) / hx)
    return F_U, F_V


def divergence_pointwise(U, V, grid: GridSpec, tr: Traces):
    f = _Fields(U, V, grid, tr)
    D = np.zeros(grid.shape_p)
    for i in range(grid.n_x):
        for j in range(grid.n_y):
            D[i, j] = (f.u(i + 1, j) - f.u(i, j)) / grid.h_x + (f.v(i, j + 1) - f.v(i, j)) / grid.h_y
    return D


def _laplacian_u(grid: GridSpec, tr: Traces):
    """5-point Laplacian of u (vec, column-major) and its boundary constant."""
    m, n = grid.n_x - 1, grid.n_y
    hx2, hy2 = grid.h_x**2, grid.h_y**2
    rows, cols, vals = [], [], []
    b = np.zeros(m * n)
    for j in range(n):
        for i in range(m):
            k = i + m * j
            diag = -2 / hx2 - 2 / hy2
            for di, bval in ((-1, tr.uW[j]), (1, tr.uE[j])):
                if 0 <= i + di < m:
                    rows.append(k); cols.append(k + di); vals.append(1 / hx2)
                else:
                    b[k] += bval / hx2
            for dj, wall in ((-1, tr.uS), (1, tr.uN)):
                if 0 <= j + dj < n:
                    rows.append(k); cols.append(k + m * dj); vals.append(1 / hy2)
                else:
                    diag -= 1 / hy2
                    b[k] += 2 * wall[i + 1] / hy2
            rows.append(k); cols.append(k); vals.append(diag)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m * n, m * n)), b


def _laplacian_v(grid: GridSpec, tr: Traces):
    m, n = grid.n_x, grid.n_y - 1
    hx2, hy2 = grid.h_x**2, grid.h_y**2
    rows, cols, vals = [], [], []
    b = np.zeros(m * n)
    for j in range(n):
        for i in range(m):
            k = i + m * j
            diag = -2 / hx2 - 2 / hy2
            for di, wall in ((-1, tr.vW), (1, tr.vE)):
                if 0 <= i + di < m:
                    rows.append(k); cols.append(k + di); vals.append(1 / hx2)
                else:
                    diag -= 1 / hx2
                    b[k] += 2 * wall[j + 1] / hx2
            for dj, bval in ((-1, tr.vS[i]), (1, tr.vN[i])):
                if 0 <= j + dj < n:
                    rows.append(k); cols.append(k + m * dj); vals.append(1 / hy2)
                else:
                    b[k] += bval / hy2
            rows.append(k); cols.append(k); vals.append(diag)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m * n, m * n)), b


def _neumann_pressure(grid: GridSpec, pin=(0, 0)):
    """Negative Neumann Laplacian with the pinned row replaced by ``phi[pin] = 0``."""
    m, n = grid.n_x, grid.n_y
    hx2, hy2 = grid.h_x**2, grid.h_y**2
    A = sp.lil_matrix((m * n, m * n))
    for j in range(n):
        for i in range(m):
            k = i + m * j
            for di in (-1, 1):
                if 0 <= i + di < m:
                    A[k, k + di] = -1 / hx2
                    A[k, k] += 1 / hx2
            for dj in (-1, 1):
                if 0 <= j + dj < n:
                    A[k, k + m * dj] = -1 / hy2
                    A[k, k] += 1 / hy2
    kp = pin[0] + m * pin[1]
    A[kp, :] = 0
    A[kp, kp] = 1.0
    return A.tocsc(), kp


def vec(X):
    return X.reshape(-1, order="F")


def unvec(x, shape):
    return x.reshape(shape, order="F")


class VectorModel:
    """Semi-implicit Euler / Chorin step in vector (Kronecker) form."""

    def __init__(self, grid: GridSpec, dt: float, bc: BoundaryConditions, pin=(0, 0)):
        self.grid, self.dt, self.bc, self.pin = grid, float(dt), bc, pin
        tr = bc.traces(grid, 0.0, 0.0)
        Lu, _ = _laplacian_u(grid, tr)
        Lv, _ = _laplacian_v(grid, tr)
        eps = grid.eps
        self.Mu = spla.splu((sp.identity(Lu.shape[0]) - dt * eps * Lu).tocsc())
        self.Mv = spla.splu((sp.identity(Lv.shape[0]) - dt * eps * Lv).tocsc())
        Ap, self.kp = _neumann_pressure(grid, pin)
        self.Mp = spla.splu(Ap)

    def step(self, U, V, t=0.0, alpha=0.0, gamma=None, force_u=None, force_v=None):
        g, dt = self.grid, self.dt
        tr0 = self.bc.traces(g, t, alpha)
        tr1 = self.bc.traces(g, t + dt, alpha)
        if gamma is None:
            umax = max(np.abs(U).max(initial=0), np.abs(tr0.uW).max(), np.abs(tr0.uE).max())
            vmax = max(np.abs(V).max(initial=0), np.abs(tr0.vS).max(), np.abs(tr0.vN).max())
            gamma = min(1.2 * dt * max(umax / g.h_x, vmax / g.h_y), 1.0)
        F_U, F_V = advection_pointwise(U, V, g, tr0, gamma)
        _, bu = _laplacian_u(g, tr1)
        _, bv = _laplacian_v(g, tr1)
        ru = vec(U - dt * F_U) + dt * g.eps * bu
        rv = vec(V - dt * F_V) + dt * g.eps * bv
        if force_u is not None:
            ru += dt * vec(force_u)
        if force_v is not None:
            rv += dt * vec(force_v)
        Us = unvec(self.Mu.solve(ru), g.shape_u)
        Vs = unvec(self.Mv.solve(rv), g.shape_v)
        div = vec(divergence_pointwise(Us, Vs, g, tr1))
        div[self.kp] = 0.0
        phi = unvec(self.Mp.solve(div), g.shape_p)
        Un = Us + np.diff(phi, axis=0) / g.h_x
        Vn = Vs + np.diff(phi, axis=1) / g.h_y
        return Un, Vn, -phi / dt
