"""Inverse elliptic operators and the negative-order norms built from them.

Provides the Neumann Poisson inverse (-Lap)^(-1) on mean-zero data, the
Helmholtz inverse (I - Lap)^(-1), the Leray projection onto discretely
divergence-free face fields, the constant-viscosity no-slip Stokes solve,
and the dual norms these inverses induce. The Stokes energy norm of the
inverse is the metric in which trajectory pairs are compared by the
diagnostics module.

All solves go through cached sparse LU factorizations (one per grid), so a
call costs two triangular sweeps. SolverConfig.rel_tol is therefore a
verification bound on the returned residual rather than an iteration
control; a residual above it raises SolverError.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, MACVelocity, gradient_to_faces, mean
from .operators import get_ops

__all__ = [
    "SolverConfig",
    "SolverError",
    "StokesSolution",
    "solve_neumann_poisson",
    "solve_helmholtz",
    "leray_project",
    "solve_stokes",
    "dual_norm_v0",
    "dual_norm_h1",
    "dual_norm_stokes",
]


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed to meet its tolerance.

    Carries the residual history of the failed iteration when one exists.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


@dataclass(frozen=True)
class SolverConfig:
    """Residual tolerance contract for the elliptic solves."""

    rel_tol: float = 1e-10
    max_iters: int | None = None
    method: str = "direct-lu"

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-4):
            raise ValueError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


_DEFAULT = SolverConfig()


@dataclass
class StokesSolution:
    """Divergence-free no-slip velocity and mean-zero pressure."""

    u: MACVelocity
    p: np.ndarray


def _l2(grid: Grid, vec: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_area * np.sum(vec * vec)))


def solve_neumann_poisson(grid: Grid, f: np.ndarray, config: SolverConfig | None = None) -> np.ndarray:
    """Solve -Lap u = f with zero-flux walls; u has mean zero.

    The right-hand side must be compatible (mean zero); an incompatible mean
    is subtracted, reported through a warning, and the compatible part is
    solved exactly.
    """
    cfg = config or _DEFAULT
    ops = get_ops(grid)
    fvec = np.asarray(f, dtype=float).ravel()
    scale = _l2(grid, fvec)
    u, lam = ops.solve_neumann(fvec)
    if abs(lam) > cfg.rel_tol * scale + 1e-13:
        warnings.warn(
            f"Neumann Poisson right-hand side has mean {lam:.3e}; "
            "the incompatible mean was subtracted",
            stacklevel=2,
        )
    resid = (-(ops.Lap @ u)) - (fvec - lam)
    if _l2(grid, resid) > cfg.rel_tol * max(scale, 1e-30):
        raise SolverError(
            f"Neumann Poisson residual {_l2(grid, resid):.3e} exceeds "
            f"rel_tol * |f| = {cfg.rel_tol * scale:.3e}"
        )
    return u.reshape(grid.nx, grid.ny)


def solve_helmholtz(grid: Grid, f: np.ndarray, config: SolverConfig | None = None) -> np.ndarray:
    """Solve (I - Lap) u = f with zero-flux walls."""
    cfg = config or _DEFAULT
    ops = get_ops(grid)
    fvec = np.asarray(f, dtype=float).ravel()
    u = ops.solve_helmholtz(fvec)
    resid = u - ops.Lap @ u - fvec
    scale = max(_l2(grid, fvec), 1e-30)
    if _l2(grid, resid) > cfg.rel_tol * scale:
        raise SolverError(f"Helmholtz residual {_l2(grid, resid):.3e} exceeds tolerance")
    return u.reshape(grid.nx, grid.ny)


def leray_project(grid: Grid, w: MACVelocity, config: SolverConfig | None = None):
    """Split w = P(w) + grad z; returns (P(w), z) with div P(w) = 0.

    z solves the Neumann Poisson problem Lap z = div w, which is compatible
    whenever w carries zero boundary-normal components.
    """
    from .grid import divergence_mac

    div = divergence_mac(grid, w)
    z = solve_neumann_poisson(grid, -div, config)
    gz = gradient_to_faces(grid, z)
    proj = MACVelocity(w.u - gz.u, w.v - gz.v)
    return proj, z


def solve_stokes(grid: Grid, f: MACVelocity, config: SolverConfig | None = None) -> StokesSolution:
    """Solve -Lap u + grad p = f, div u = 0, no-slip walls, mean-zero p.

    The saddle-point solve absorbs any discrete-gradient part of f into the
    pressure, so the velocity only sees the divergence-free part of the
    forcing (same effect as projecting f first).
    """
    cfg = config or _DEFAULT
    ops = get_ops(grid)
    fvec = ops.pack(f)
    z, p, _ = ops.solve_stokes(fvec)
    mom = ops.stokes_stiffness @ z + ops.G @ p - fvec
    div = ops.D @ z
    scale = max(float(np.sqrt(grid.cell_area * np.sum(fvec**2))), 1e-30)
    if _l2(grid, mom) > cfg.rel_tol * scale or _l2(grid, div) > cfg.rel_tol * max(scale, 1.0):
        raise SolverError(
            f"Stokes residuals (momentum {_l2(grid, mom):.3e}, divergence "
            f"{_l2(grid, div):.3e}) exceed tolerance"
        )
    return StokesSolution(u=ops.unpack(z), p=p.reshape(grid.nx, grid.ny))


def dual_norm_v0(grid: Grid, f: np.ndarray, config: SolverConfig | None = None) -> float:
    """Negative-order norm |grad N(f - mean)| with the mean split off.

    For mean-zero f this is the plain dual norm; otherwise it returns
    sqrt(|f - mean|_dual^2 + mean^2), the usual full-dual-space convention.
    """
    fbar = mean(grid, f)
    f0 = np.asarray(f, dtype=float) - fbar
    u = solve_neumann_poisson(grid, f0, config)
    g = gradient_to_faces(grid, u)
    sq = grid.cell_area * (np.sum(g.u**2) + np.sum(g.v**2))
    return float(np.sqrt(sq + fbar * fbar))


def dual_norm_h1(grid: Grid, f: np.ndarray, config: SolverConfig | None = None) -> float:
    """Dual norm sqrt(<f, (I - Lap)^(-1) f>); zero only for f = 0."""
    fvec = np.asarray(f, dtype=float).ravel()
    u = solve_helmholtz(grid, f, config).ravel()
    val = grid.cell_area * float(fvec @ u)
    return float(np.sqrt(max(val, 0.0)))


def dual_norm_stokes(grid: Grid, w: MACVelocity, config: SolverConfig | None = None) -> float:
    """Energy norm |grad S^(-1) w| of the Stokes inverse.

    Discrete-gradient parts of w contribute nothing: they are absorbed by
    the pressure inside the saddle solve, which realizes the projection onto
    divergence-free fields implicitly.
    """
    ops = get_ops(grid)
    sol = solve_stokes(grid, w, config)
    z = ops.pack(sol.u)
    return float(np.sqrt(max(ops.velocity_grad_sq(z), 0.0)))
