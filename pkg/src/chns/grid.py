"""Uniform rectangular MAC grid and second-order staggered difference operators.

Layout: scalar fields (phi, mu, sigma, p) live at cell centers as arrays of
shape (nx, ny); velocity components live on faces, u on x-normal faces with
shape (nx+1, ny) and v on y-normal faces with shape (nx, ny+1). Cell (i, j)
is centered at ((i+0.5)*hx, (j+0.5)*hy).

Boundary conditions are baked into the stencils. Scalars satisfy homogeneous
Neumann conditions through zero boundary fluxes (the mirrored-ghost form of
the second-order one-sided stencil), and velocities satisfy no-slip: the
normal components are stored on the boundary faces and pinned to zero, while
tangential wall values enter derivative stencils as exact zeros at half-cell
distance. With this layout the face gradient and the cell divergence are
exact negative adjoints of each other, div(grad f) equals the five-point
Neumann Laplacian identically, and advective fluxes telescope, so the
conservation and summation-by-parts identities used by the verification
harness hold to roundoff rather than to truncation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "MACVelocity",
    "make_grid",
    "laplacian_neumann",
    "gradient_to_faces",
    "divergence_mac",
    "advect_scalar",
    "mean",
    "norms",
    "SCALAR_NORM_KINDS",
    "VELOCITY_NORM_KINDS",
]

SCALAR_NORM_KINDS = ("l1", "l2", "l3", "l6", "linf", "h1", "h2", "w23", "mean")
VELOCITY_NORM_KINDS = ("l2", "linf", "h1")


@dataclass(frozen=True)
class Grid:
    """Uniform nx-by-ny cell grid on the rectangle [0, Lx] x [0, Ly]."""

    nx: int
    ny: int
    Lx: float
    Ly: float

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(
                f"grid needs at least 4 cells per direction for the boundary "
                f"stencils, got nx={self.nx}, ny={self.ny}"
            )
        if not (self.Lx > 0.0 and self.Ly > 0.0):
            raise ValueError(f"domain lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def volume(self) -> float:
        return self.Lx * self.Ly

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    def cell_centers(self):
        """Meshgrid arrays X, Y of shape (nx, ny) with cell-center coordinates."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def new_scalar(self, fill: float = 0.0) -> np.ndarray:
        return np.full((self.nx, self.ny), float(fill))

    def new_velocity(self) -> "MACVelocity":
        return MACVelocity(
            u=np.zeros((self.nx + 1, self.ny)),
            v=np.zeros((self.nx, self.ny + 1)),
        )


@dataclass
class MACVelocity:
    """Staggered velocity: u on x-faces (nx+1, ny), v on y-faces (nx, ny+1).

    The first and last rows of u and columns of v are the boundary-normal
    components; no-penetration means they stay exactly zero.
    """

    u: np.ndarray
    v: np.ndarray

    def copy(self) -> "MACVelocity":
        return MACVelocity(self.u.copy(), self.v.copy())

    def max_abs(self) -> float:
        return max(float(np.abs(self.u).max()), float(np.abs(self.v).max()))


def make_grid(nx: int, ny: int, Lx: float, Ly: float) -> Grid:
    """Build a uniform MAC grid, rejecting degenerate sizes."""
    return Grid(int(nx), int(ny), float(Lx), float(Ly))


def _check_scalar(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.nx, grid.ny):
        raise ValueError(f"scalar field shape {f.shape} does not match grid ({grid.nx}, {grid.ny})")
    return f


def laplacian_neumann(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with zero-flux (homogeneous Neumann) walls.

    Computed as the divergence of the interior face fluxes, so the output
    sums to zero over the cells exactly (discrete divergence theorem).
    """
    f = _check_scalar(grid, f)
    hx, hy = grid.hx, grid.hy
    fx = np.zeros((grid.nx + 1, grid.ny))
    fy = np.zeros((grid.nx, grid.ny + 1))
    fx[1:-1, :] = (f[1:, :] - f[:-1, :]) / hx
    fy[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / hy
    return (fx[1:, :] - fx[:-1, :]) / hx + (fy[:, 1:] - fy[:, :-1]) / hy


def gradient_to_faces(grid: Grid, f: np.ndarray) -> MACVelocity:
    """Centered difference of a cell field onto faces; boundary normals are zero."""
    f = _check_scalar(grid, f)
    w = grid.new_velocity()
    w.u[1:-1, :] = (f[1:, :] - f[:-1, :]) / grid.hx
    w.v[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / grid.hy
    return w


def divergence_mac(grid: Grid, w: MACVelocity) -> np.ndarray:
    """Per-cell flux difference of a face field."""
    return (w.u[1:, :] - w.u[:-1, :]) / grid.hx + (w.v[:, 1:] - w.v[:, :-1]) / grid.hy


def advect_scalar(grid: Grid, w: MACVelocity, f: np.ndarray) -> np.ndarray:
    """div(w f) with f interpolated to faces by centered averaging.

    Wall fluxes are dropped outright (no-penetration), so the advective mass
    Sum(output) * cell_area telescopes to zero for any w and f.
    """
    f = _check_scalar(grid, f)
    fu = np.zeros((grid.nx + 1, grid.ny))
    fv = np.zeros((grid.nx, grid.ny + 1))
    fu[1:-1, :] = w.u[1:-1, :] * 0.5 * (f[1:, :] + f[:-1, :])
    fv[:, 1:-1] = w.v[:, 1:-1] * 0.5 * (f[:, 1:] + f[:, :-1])
    return (fu[1:, :] - fu[:-1, :]) / grid.hx + (fv[:, 1:] - fv[:, :-1]) / grid.hy


def mean(grid: Grid, f: np.ndarray) -> float:
    """Domain average Sum(f) * cell_area / |Omega| (cells are uniform)."""
    return float(np.asarray(f, dtype=float).mean())


def _first_diff(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered first difference, one-sided two-point at the boundary cells."""
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    d[0] = (f[1] - f[0]) / h
    d[-1] = (f[-1] - f[-2]) / h
    return np.moveaxis(d, 0, axis)


def _second_diff(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Three-point second difference, stencil shifted inward at boundary cells."""
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    d[0] = (f[0] - 2.0 * f[1] + f[2]) / (h * h)
    d[-1] = (f[-1] - 2.0 * f[-2] + f[-3]) / (h * h)
    return np.moveaxis(d, 0, axis)


def _second_differences(grid: Grid, f: np.ndarray):
    fxx = _second_diff(f, grid.hx, 0)
    fyy = _second_diff(f, grid.hy, 1)
    fxy = _first_diff(_first_diff(f, grid.hx, 0), grid.hy, 1)
    return fxx, fxy, fyy


def _velocity_gradient_sq(grid: Grid, w: MACVelocity) -> float:
    """Quadrature of |grad v|^2 with one-sided tangential stencils at walls."""
    hx, hy, a = grid.hx, grid.hy, grid.cell_area
    dudx = (w.u[1:, :] - w.u[:-1, :]) / hx
    dvdy = (w.v[:, 1:] - w.v[:, :-1]) / hy
    dudy = np.zeros((grid.nx + 1, grid.ny + 1))
    dudy[:, 1:-1] = (w.u[:, 1:] - w.u[:, :-1]) / hy
    dudy[:, 0] = 2.0 * w.u[:, 0] / hy
    dudy[:, -1] = -2.0 * w.u[:, -1] / hy
    dvdx = np.zeros((grid.nx + 1, grid.ny + 1))
    dvdx[1:-1, :] = (w.v[1:, :] - w.v[:-1, :]) / hx
    dvdx[0, :] = 2.0 * w.v[0, :] / hx
    dvdx[-1, :] = -2.0 * w.v[-1, :] / hx
    cells = np.sum(dudx**2) + np.sum(dvdy**2)
    nodes = np.sum(dudy**2) + np.sum(dvdx**2)
    return float(a * (cells + nodes))


def norms(grid: Grid, f, kind: str) -> float:
    """Midpoint-quadrature norms of a cell field or a MAC velocity.

    Scalar kinds: "l1", "l2", "l3", "l6", "linf", "h1" and "h2" (seminorms
    from face gradients and second differences), "w23" (L^3 norm of the
    second differences, the W^{2,3} surrogate) and "mean". Velocity kinds:
    "l2", "linf", "h1" (full-gradient seminorm).
    """
    a = grid.cell_area
    if isinstance(f, MACVelocity):
        if kind == "l2":
            return float(np.sqrt(a * (np.sum(f.u**2) + np.sum(f.v**2))))
        if kind == "linf":
            return f.max_abs()
        if kind == "h1":
            return float(np.sqrt(_velocity_gradient_sq(grid, f)))
        raise ValueError(f"unknown velocity norm kind {kind!r}; expected one of {VELOCITY_NORM_KINDS}")

    f = _check_scalar(grid, f)
    if kind == "mean":
        return mean(grid, f)
    if kind == "linf":
        return float(np.abs(f).max())
    if kind in ("l1", "l2", "l3", "l6"):
        p = float(kind[1:])
        return float((a * np.sum(np.abs(f) ** p)) ** (1.0 / p))
    if kind == "h1":
        g = gradient_to_faces(grid, f)
        return float(np.sqrt(a * (np.sum(g.u**2) + np.sum(g.v**2))))
    if kind in ("h2", "w23"):
        fxx, fxy, fyy = _second_differences(grid, f)
        mag = np.sqrt(fxx**2 + 2.0 * fxy**2 + fyy**2)
        if kind == "h2":
            return float(np.sqrt(a * np.sum(mag**2)))
        return float((a * np.sum(mag**3)) ** (1.0 / 3.0))
    raise ValueError(f"unknown scalar norm kind {kind!r}; expected one of {SCALAR_NORM_KINDS}")
