"""Sparse operator assembly and factorization cache, one instance per grid.

Everything works on flattened C-order arrays: cell fields raveled from shape
(nx, ny), velocities packed as the concatenation of the interior x-face
values u[1:nx, :] and interior y-face values v[:, 1:ny]. Boundary-normal
faces are excluded from the packed vector because no-penetration pins them
to zero; tangential wall values enter the node stencils as one-sided
differences against the exact wall value zero.

The viscous and Stokes operators are assembled variationally from first
order difference maps, so they are symmetric (semi)definite by construction
and the quadratic form z' M(eta) z equals the midpoint quadrature of
2 eta |Dv|^2 exactly. The convection operator is assembled in flux form and
then explicitly antisymmetrized, which makes the discrete self-advection
energy-neutral, <conv(v, v), v> = 0, independently of the divergence of v.

Linear systems with a constant-nullspace (Neumann Poisson) or a pressure
nullspace (Stokes) are squared up with a scalar Lagrange multiplier row and
column instead of pinning a reference value; the multiplier absorbs exactly
the incompatible mean of the right-hand side, so compatible problems are
solved unperturbed.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .grid import Grid, MACVelocity

__all__ = ["GridOperators", "get_ops"]


class GridOperators:
    """Difference maps, quadratic forms, and cached LU factorizations."""

    def __init__(self, grid: Grid):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        self.nx, self.ny = nx, ny
        self.hx, self.hy = grid.hx, grid.hy
        self.area = grid.cell_area
        self.ncells = nx * ny
        self.n_u = (nx - 1) * ny
        self.n_v = nx * (ny - 1)
        self.n_vel = self.n_u + self.n_v
        self.nnodes = (nx + 1) * (ny + 1)

        self._C = np.arange(self.ncells).reshape(nx, ny)
        self._IU = np.arange(self.n_u).reshape(nx - 1, ny)
        self._IV = np.arange(self.n_v).reshape(nx, ny - 1)
        self._N = np.arange(self.nnodes).reshape(nx + 1, ny + 1)

    # -- velocity packing -------------------------------------------------

    def pack(self, w: MACVelocity) -> np.ndarray:
        return np.concatenate([w.u[1:-1, :].ravel(), w.v[:, 1:-1].ravel()])

    def unpack(self, z: np.ndarray) -> MACVelocity:
        nx, ny = self.nx, self.ny
        u = np.zeros((nx + 1, ny))
        v = np.zeros((nx, ny + 1))
        u[1:-1, :] = z[: self.n_u].reshape(nx - 1, ny)
        v[:, 1:-1] = z[self.n_u:].reshape(nx, ny - 1)
        return MACVelocity(u, v)

    # -- first-order maps --------------------------------------------------

    @cached_property
    def Gx(self):
        """Cell field to interior x-faces: (f[i,j] - f[i-1,j]) / hx."""
        C, IU = self._C, self._IU
        rows = [IU, IU]
        cols = [C[1:, :], C[:-1, :]]
        vals = [1.0 / self.hx, -1.0 / self.hx]
        return _build(rows, cols, vals, (self.n_u, self.ncells))

    @cached_property
    def Gy(self):
        C, IV = self._C, self._IV
        rows = [IV, IV]
        cols = [C[:, 1:], C[:, :-1]]
        vals = [1.0 / self.hy, -1.0 / self.hy]
        return _build(rows, cols, vals, (self.n_v, self.ncells))

    @cached_property
    def G(self):
        """Packed face gradient of a cell field."""
        return sparse.vstack([self.Gx, self.Gy]).tocsr()

    @cached_property
    def D(self):
        """Packed divergence; exact negative adjoint of G."""
        return (-self.G.T).tocsr()

    @cached_property
    def Lap(self):
        """Five-point Neumann Laplacian, Lap = D G = -G' G."""
        return (self.D @ self.G).tocsr()

    @cached_property
    def Lap2(self):
        return (self.Lap @ self.Lap).tocsr()

    @cached_property
    def eye_cells(self):
        return sparse.identity(self.ncells, format="csr")

    @cached_property
    def eye_vel(self):
        return sparse.identity(self.n_vel, format="csr")

    # -- velocity derivative maps (variational building blocks) -----------

    @cached_property
    def Bxx(self):
        """du/dx at cell centers from packed velocity (u block only)."""
        return self.D[:, : self.n_u].tocsr()

    @cached_property
    def Byy(self):
        return self.D[:, self.n_u:].tocsr()

    @cached_property
    def Tyu(self):
        """du/dy at nodes; one-sided 2/h stencil against the wall value zero."""
        N, IU = self._N, self._IU
        nx, ny = self.nx, self.ny
        rows = [N[1:nx, 1:ny], N[1:nx, 1:ny], N[1:nx, 0], N[1:nx, ny]]
        cols = [IU[:, 1:], IU[:, :-1], IU[:, 0], IU[:, -1]]
        vals = [1.0 / self.hy, -1.0 / self.hy, 2.0 / self.hy, -2.0 / self.hy]
        return _build(rows, cols, vals, (self.nnodes, self.n_vel))

    @cached_property
    def Txv(self):
        """dv/dx at nodes; columns live in the v block of the packed vector."""
        N, IV = self._N, self._IV
        nx, ny = self.nx, self.ny
        off = self.n_u
        rows = [N[1:nx, 1:ny], N[1:nx, 1:ny], N[0, 1:ny], N[nx, 1:ny]]
        cols = [off + IV[1:, :], off + IV[:-1, :], off + IV[0, :], off + IV[-1, :]]
        vals = [1.0 / self.hx, -1.0 / self.hx, 2.0 / self.hx, -2.0 / self.hx]
        return _build(rows, cols, vals, (self.nnodes, self.n_vel))

    @cached_property
    def node_of_cells(self):
        """Average of the 1, 2, or 4 cells adjacent to each node."""
        nx, ny = self.nx, self.ny
        N, C = self._N, self._C
        cx = np.where((np.arange(nx + 1) == 0) | (np.arange(nx + 1) == nx), 1, 2)
        cy = np.where((np.arange(ny + 1) == 0) | (np.arange(ny + 1) == ny), 1, 2)
        wnode = 1.0 / (cx[:, None] * cy[None, :])
        rows, cols, vals = [], [], []
        for di in (-1, 0):
            for dj in (-1, 0):
                i0, i1 = max(0, -di), nx + 1 - max(0, 1 + di)
                j0, j1 = max(0, -dj), ny + 1 - max(0, 1 + dj)
                r = N[i0:i1, j0:j1]
                c = C[i0 + di: i1 + di, j0 + dj: j1 + dj]
                rows.append(r)
                cols.append(c)
                vals.append(wnode[i0:i1, j0:j1])
        return _build(rows, cols, vals, (self.nnodes, self.ncells))

    # -- quadratic forms ---------------------------------------------------

    def visc_form(self, eta_cells: np.ndarray):
        """SPD matrix M with z' M z = quadrature of 2 eta |Dv|^2."""
        ec = np.asarray(eta_cells, dtype=float).ravel()
        en = self.node_of_cells @ ec
        a = self.area
        Tn = self._Tn
        M = (2.0 * a) * sparse.block_diag(
            (self.Bxx.T @ sparse.diags(ec) @ self.Bxx,
             self.Byy.T @ sparse.diags(ec) @ self.Byy)
        )
        M = M + a * (Tn.T @ sparse.diags(en) @ Tn)
        return M.tocsc()

    @cached_property
    def _Tn(self):
        return (self.Tyu + self.Txv).tocsr()

    @cached_property
    def stokes_stiffness(self):
        """Strong-form vector Laplacian (full gradient), K z ~ -Lap z at faces."""
        K = sparse.block_diag((self.Bxx.T @ self.Bxx, self.Byy.T @ self.Byy))
        K = K + self.Tyu.T @ self.Tyu + self.Txv.T @ self.Txv
        return K.tocsr()

    def velocity_grad_sq(self, z: np.ndarray) -> float:
        """Quadrature of |grad v|^2 of a packed velocity."""
        return float(self.area * (z @ (self.stokes_stiffness @ z)))

    # -- convection --------------------------------------------------------

    @cached_property
    def _Axc_u(self):
        C, IU = self._C, self._IU
        rows = [C[1:, :], C[:-1, :]]
        cols = [IU, IU]
        return _build(rows, cols, [0.5, 0.5], (self.ncells, self.n_u))

    @cached_property
    def _Ayc_v(self):
        C, IV = self._C, self._IV
        rows = [C[:, 1:], C[:, :-1]]
        cols = [IV, IV]
        return _build(rows, cols, [0.5, 0.5], (self.ncells, self.n_v))

    @cached_property
    def _Ayn_u(self):
        N, IU = self._N, self._IU
        nx, ny = self.nx, self.ny
        rows = [N[1:nx, 1:ny], N[1:nx, 1:ny]]
        cols = [IU[:, 1:], IU[:, :-1]]
        return _build(rows, cols, [0.5, 0.5], (self.nnodes, self.n_u))

    @cached_property
    def _Axn_v(self):
        N, IV = self._N, self._IV
        nx, ny = self.nx, self.ny
        rows = [N[1:nx, 1:ny], N[1:nx, 1:ny]]
        cols = [IV[1:, :], IV[:-1, :]]
        return _build(rows, cols, [0.5, 0.5], (self.nnodes, self.n_v))

    @cached_property
    def _Dyn_u(self):
        N, IU = self._N, self._IU
        nx = self.nx
        rows = [IU, IU]
        cols = [N[1:nx, 1:], N[1:nx, :-1]]
        return _build(rows, cols, [1.0 / self.hy, -1.0 / self.hy], (self.n_u, self.nnodes))

    @cached_property
    def _Dxn_v(self):
        N, IV = self._N, self._IV
        ny = self.ny
        rows = [IV, IV]
        cols = [N[1:, 1:ny], N[:-1, 1:ny]]
        return _build(rows, cols, [1.0 / self.hx, -1.0 / self.hx], (self.n_v, self.nnodes))

    def convection_matrix(self, adv: np.ndarray):
        """Flux-form (divergence) advection by the packed field adv.

        Transporting velocities are centered averages of adv; wall fluxes
        vanish because the transporting normal components are zero there.
        """
        au = adv[: self.n_u]
        av = adv[self.n_u:]
        m_cu = self._Axc_u @ au
        m_nv = self._Axn_v @ av
        m_cv = self._Ayc_v @ av
        m_nu = self._Ayn_u @ au
        Cu = (self.Gx @ sparse.diags(m_cu) @ self._Axc_u
              + self._Dyn_u @ sparse.diags(m_nv) @ self._Ayn_u)
        Cv = (self.Gy @ sparse.diags(m_cv) @ self._Ayc_v
              + self._Dxn_v @ sparse.diags(m_nu) @ self._Axn_v)
        return sparse.block_diag((Cu, Cv)).tocsr()

    def convect_skew(self, adv: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Antisymmetrized advection of packed z by packed adv.

        <convect_skew(a, z), z> = 0 identically, which is the discrete analog
        of the vanishing self-advection work used by the energy law.
        """
        Cm = self.convection_matrix(adv)
        return 0.5 * (Cm @ z - Cm.T @ z)

    # -- factorizations ----------------------------------------------------

    @cached_property
    def lu_neumann(self):
        """LU of the mean-constrained Neumann problem [-Lap, e; e', 0]."""
        A = (-self.Lap).tocsr()
        e = sparse.csr_matrix(np.ones((self.ncells, 1)))
        S = sparse.bmat([[A, e], [e.T, None]], format="csc")
        return splu(S)

    def solve_neumann(self, f: np.ndarray):
        """Solve -Lap u = f - mean(f) with mean(u) = 0; returns (u, multiplier)."""
        rhs = np.empty(self.ncells + 1)
        rhs[:-1] = f
        rhs[-1] = 0.0
        sol = self.lu_neumann.solve(rhs)
        return sol[:-1], float(sol[-1])

    @cached_property
    def lu_helmholtz(self):
        return splu((self.eye_cells - self.Lap).tocsc())

    def solve_helmholtz(self, f: np.ndarray) -> np.ndarray:
        return self.lu_helmholtz.solve(f)

    @cached_property
    def lu_stokes(self):
        """LU of the MAC Stokes saddle problem with mean-zero pressure."""
        K = self.stokes_stiffness
        G, D = self.G, self.D
        e = sparse.csr_matrix(np.ones((self.ncells, 1)))
        S = sparse.bmat([[K, G, None], [D, None, e], [None, e.T, None]], format="csc")
        return splu(S)

    def solve_stokes(self, f: np.ndarray):
        """Solve -Lap u + G p = f, D u = 0; returns (z, p, multiplier)."""
        rhs = np.zeros(self.n_vel + self.ncells + 1)
        rhs[: self.n_vel] = f
        sol = self.lu_stokes.solve(rhs)
        z = sol[: self.n_vel]
        p = sol[self.n_vel: self.n_vel + self.ncells]
        return z, p, float(sol[-1])


def _build(rows, cols, vals, shape):
    r = np.concatenate([np.asarray(x).ravel() for x in rows])
    c = np.concatenate([np.asarray(x).ravel() for x in cols])
    v = np.concatenate([
        np.broadcast_to(np.asarray(val, dtype=float), np.asarray(col).shape).ravel()
        for val, col in zip(vals, cols)
    ])
    return sparse.csr_matrix((v, (r, c)), shape=shape)


_CACHE: dict[tuple, GridOperators] = {}


def get_ops(grid: Grid) -> GridOperators:
    key = (grid.nx, grid.ny, grid.Lx, grid.Ly)
    ops = _CACHE.get(key)
    if ops is None:
        ops = _CACHE[key] = GridOperators(grid)
    return ops
