"""Time integration of the coupled phase-field / flow / nutrient system.

One step advances the quadruple (v, phi, sigma, p) with its chemical
potential mu through three substeps:

1. Phase field: implicit convex-split update. The convex part of the
   double-well derivative and the fourth-order term are implicit, the
   concave quadratic part and the chemotaxis shift are explicit, advection
   is explicit in divergence form. The implicit problem is strictly convex
   and solved by a damped Newton iteration; the stepped potential is always
   the globally defined quadratic-tail regularization, so iterates can never
   leave an admissible set.
2. Nutrient: linear solve with implicit diffusion and reaction, explicit
   advection, and the cross-diffusion flux evaluated at the fresh phase
   field.
3. Momentum: explicit antisymmetrized convection, implicit variable
   viscosity assembled variationally (so the dissipated power matches the
   diagnostics quadrature exactly), capillary forcing (mu + chi sigma) times
   the face gradient of phi, then a pressure projection onto discretely
   divergence-free fields.

The mean of phi obeys a closed linear recursion (advection and diffusion
telescope exactly), which the stepper re-pins after each Newton solve so
long runs conserve mass to roundoff instead of to the Newton tolerance.

`CouplingMode.picard` repeats the three substeps inside one step, feeding
the freshly computed velocity back in as the advecting field, until the
iterates agree in L2; `sequential` is exactly one sweep of that map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .elliptic import SolverConfig, SolverError, solve_neumann_poisson
from .grid import Grid, MACVelocity, advect_scalar, gradient_to_faces, mean
from .operators import get_ops
from .potential import (
    MaterialLaws,
    PotentialSpec,
    interp_h,
    psi0_prime,
    psi0_second,
    viscosity_eta,
)

__all__ = [
    "PhysParams",
    "State",
    "CouplingMode",
    "CFLWarning",
    "chemical_potential",
    "ch_substep",
    "sigma_substep",
    "ns_substep",
    "step",
    "run",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITERS = 50
MAX_LINE_SEARCH_HALVINGS = 30
CFL_LIMIT = 0.5


class CFLWarning(UserWarning):
    """Advective CFL number exceeded the documented explicit-convection limit."""


@dataclass(frozen=True)
class PhysParams:
    """Coefficients and constitutive laws of the coupled system.

    source is the nutrient supply S: either None (zero), a constant, or a
    callable S(X, Y, t) evaluated at cell centers.
    """

    A: float
    B: float
    chi: float = 0.0
    alpha: float = 0.0
    c0: float = 0.0
    consumption: float = 0.0
    laws: MaterialLaws = field(default_factory=MaterialLaws)
    potential: PotentialSpec = field(default_factory=PotentialSpec.quartic)
    source: object = None

    def __post_init__(self):
        if not self.A > 0.0:
            raise ValueError(f"A must be positive, got {self.A}")
        if not self.B > 0.0:
            raise ValueError(f"B must be positive, got {self.B}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not (-1.0 < self.c0 < 1.0):
            raise ValueError(f"c0 must lie in (-1, 1), got {self.c0}")

    def stepping_potential(self) -> PotentialSpec:
        """The potential actually advanced in time.

        The bare logarithmic variant cannot be stepped (Newton iterates may
        momentarily cross 1 - eps); runs must carry a regularization width.
        """
        if self.potential.kind == "logarithmic":
            raise ValueError(
                "stepping requires the regularized potential; build the spec with "
                "PotentialSpec.regularized(theta, theta_c, eps) or use with_eps()"
            )
        return self.potential

    def source_field(self, grid: Grid, t: float):
        if self.source is None:
            return 0.0
        if callable(self.source):
            X, Y = grid.cell_centers()
            return np.asarray(self.source(X, Y, t), dtype=float)
        return float(self.source)


@dataclass
class State:
    """Discrete state at time t; phi, mu, sigma, p are (nx, ny) cell arrays."""

    t: float
    grid: Grid
    v: MACVelocity
    phi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    p: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.grid, self.v.copy(), self.phi.copy(),
                     self.mu.copy(), self.sigma.copy(), self.p.copy())


@dataclass(frozen=True)
class CouplingMode:
    """Per-step coupling: one sweep of the substeps, or their fixed point."""

    kind: str = "sequential"
    tol: float = 1e-10
    max_iters: int = 25

    def __post_init__(self):
        if self.kind not in ("sequential", "picard"):
            raise ValueError(f"unknown coupling mode {self.kind!r}")
        if not self.tol > 0.0:
            raise ValueError(f"coupling tolerance must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    @classmethod
    def sequential(cls) -> "CouplingMode":
        return cls("sequential")

    @classmethod
    def picard(cls, tol: float = 1e-10, max_iters: int = 25) -> "CouplingMode":
        return cls("picard", tol=tol, max_iters=max_iters)


def chemical_potential(grid: Grid, params: PhysParams, phi: np.ndarray,
                       sigma: np.ndarray) -> np.ndarray:
    """mu = A Psi'(phi) - B Lap(phi) - chi sigma for the stepped potential."""
    pot = params.stepping_potential()
    ops = get_ops(grid)
    lap_phi = (ops.Lap @ phi.ravel()).reshape(grid.nx, grid.ny)
    conv_part = psi0_prime(phi, pot) - pot.theta0 * phi
    return params.A * conv_part - params.B * lap_phi - params.chi * sigma


def _quad_l2(grid: Grid, vec: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_area * np.sum(vec * vec)))


def ch_substep(state: State, dt: float, params: PhysParams,
               adv_vel: MACVelocity | None = None,
               newton_tol: float = NEWTON_TOL,
               newton_max_iters: int = NEWTON_MAX_ITERS):
    """Implicit convex-split phase-field update; returns (phi_new, mu_new).

    Solves
        (phi - phi_n)/dt + div(v phi_n) = Lap(mu) - alpha (phi - c0),
        mu = A Psi0'(phi) - A theta0 phi_n - B Lap(phi) - chi sigma_n
    by Newton iteration with residual-halving line search. Raises
    SolverError with the residual history on non-convergence.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.grid
    ops = get_ops(grid)
    pot = params.stepping_potential()
    th0 = pot.theta0
    A, B, alpha, chi, c0 = params.A, params.B, params.alpha, params.chi, params.c0

    phin = state.phi.ravel()
    sign = state.sigma.ravel()
    adv = advect_scalar(grid, adv_vel if adv_vel is not None else state.v, state.phi).ravel()

    Lap, Lap2, eye = ops.Lap, ops.Lap2, ops.eye_cells
    b = phin / dt - adv + alpha * c0 + Lap @ (A * th0 * phin + chi * sign)
    c_lin = 1.0 / dt + alpha

    def residual(p):
        return c_lin * p - Lap @ (A * psi0_prime(p, pot)) + B * (Lap2 @ p) - b

    phi = phin.copy()
    r = residual(phi)
    rnorm = _quad_l2(grid, r)
    target = newton_tol * max(_quad_l2(grid, b), 1.0)
    history = [rnorm]

    it = 0
    while rnorm > target:
        if it >= newton_max_iters:
            raise SolverError(
                f"phase-field Newton iteration stalled at residual {rnorm:.3e} "
                f"(target {target:.3e})", history)
        J = (c_lin * eye
             - Lap @ sparse.diags(A * psi0_second(phi, pot))
             + B * Lap2).tocsc()
        delta = splu(J).solve(-r)
        lam = 1.0
        for _ in range(MAX_LINE_SEARCH_HALVINGS):
            trial = phi + lam * delta
            r_trial = residual(trial)
            rn_trial = _quad_l2(grid, r_trial)
            if rn_trial < rnorm:
                phi, r, rnorm = trial, r_trial, rn_trial
                break
            lam *= 0.5
        else:
            raise SolverError(
                f"phase-field Newton line search failed at residual {rnorm:.3e}", history)
        history.append(rnorm)
        it += 1

    # Pin the exact mean recursion (advective and diffusive means telescope
    # analytically); keeps mass conservation at roundoff over long runs.
    target_mean = (phin.mean() + dt * alpha * c0) / (1.0 + dt * alpha)
    phi = phi + (target_mean - phi.mean())

    mu = A * psi0_prime(phi, pot) - A * th0 * phin - B * (Lap @ phi) - chi * sign
    return phi.reshape(grid.nx, grid.ny), mu.reshape(grid.nx, grid.ny)


def sigma_substep(state: State, phi_new: np.ndarray, dt: float, params: PhysParams,
                  adv_vel: MACVelocity | None = None) -> np.ndarray:
    """Nutrient update: implicit diffusion and reaction, explicit advection.

    The cross-diffusion flux -chi Lap(phi) uses the already-updated phase
    field; the supply S is sampled at the new time level.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.grid
    ops = get_ops(grid)
    C = params.consumption

    h = np.asarray(interp_h(phi_new, params.laws), dtype=float).ravel()
    diag_react = 1.0 + dt * C * h
    if diag_react.min() <= 0.0:
        raise SolverError(
            f"nutrient reaction term 1 + dt*C*h reaches {diag_react.min():.3e} <= 0; "
            "reduce dt or the negative consumption rate")

    adv = advect_scalar(grid, adv_vel if adv_vel is not None else state.v, state.sigma).ravel()
    S = params.source_field(grid, state.t + dt)
    S = S.ravel() if isinstance(S, np.ndarray) else S
    rhs = state.sigma.ravel() / dt - adv - params.chi * (ops.Lap @ phi_new.ravel()) + S

    Asys = ((1.0 / dt) * ops.eye_cells - ops.Lap + C * sparse.diags(h)).tocsc()
    sig = splu(Asys).solve(rhs)
    return sig.reshape(grid.nx, grid.ny)


def ns_substep(state: State, phi_new: np.ndarray, mu_new: np.ndarray,
               sigma_new: np.ndarray, dt: float, params: PhysParams,
               adv_vel: MACVelocity | None = None,
               solver_config: SolverConfig | None = None):
    """Momentum update and pressure projection; returns (v_new, p_new).

    The capillary force (mu + chi sigma) grad(phi) is assembled face-wise
    with the scalar factor averaged to faces; a pure-gradient force is then
    absorbed by the pressure up to the implicit viscous coupling.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.grid
    ops = get_ops(grid)
    adv = adv_vel if adv_vel is not None else state.v

    cfl = dt * adv.max_abs() / min(grid.hx, grid.hy)
    if cfl > CFL_LIMIT:
        warnings.warn(
            f"advective CFL number {cfl:.2f} exceeds {CFL_LIMIT}; "
            "the explicit convection term may destabilize the run",
            CFLWarning, stacklevel=2)

    z_n = ops.pack(state.v)
    z_adv = ops.pack(adv)
    conv = ops.convect_skew(z_adv, z_adv)

    fac = mu_new + params.chi * sigma_new
    gphi = gradient_to_faces(grid, phi_new)
    fac_u = 0.5 * (fac[1:, :] + fac[:-1, :])
    fac_v = 0.5 * (fac[:, 1:] + fac[:, :-1])
    force = np.concatenate([
        (fac_u * gphi.u[1:-1, :]).ravel(),
        (fac_v * gphi.v[:, 1:-1]).ravel(),
    ])

    eta = viscosity_eta(phi_new, params.laws)
    M = ops.visc_form(eta)
    a = grid.cell_area
    Asys = ((a / dt) * ops.eye_vel + M).tocsc()
    rhs = a * (z_n / dt - conv + force)
    z_star = splu(Asys).solve(rhs)

    div_star = ops.D @ z_star
    q = solve_neumann_poisson(grid, (-div_star / dt).reshape(grid.nx, grid.ny),
                              solver_config)
    z_new = z_star - dt * (ops.G @ q.ravel())
    return ops.unpack(z_new), q


def _substeps(state: State, dt: float, params: PhysParams, adv: MACVelocity,
              newton_tol: float, newton_max_iters: int,
              solver_config: SolverConfig | None):
    phi, mu = ch_substep(state, dt, params, adv_vel=adv,
                         newton_tol=newton_tol, newton_max_iters=newton_max_iters)
    sigma = sigma_substep(state, phi, dt, params, adv_vel=adv)
    v, p = ns_substep(state, phi, mu, sigma, dt, params, adv_vel=adv,
                      solver_config=solver_config)
    return phi, mu, sigma, v, p


def step(state: State, dt: float, params: PhysParams,
         mode: CouplingMode = CouplingMode.sequential(),
         newton_tol: float = NEWTON_TOL,
         newton_max_iters: int = NEWTON_MAX_ITERS,
         solver_config: SolverConfig | None = None) -> State:
    """Advance one time step in sequential or per-step fixed-point mode.

    Picard mode iterates the substep sweep with the freshly computed
    velocity as the advecting field until successive iterates differ by
    less than mode.tol in L2 across all fields; it raises SolverError with
    the contraction history if max_iters sweeps do not converge.
    """
    grid = state.grid
    if mode.kind == "sequential":
        phi, mu, sigma, v, p = _substeps(state, dt, params, state.v,
                                         newton_tol, newton_max_iters, solver_config)
        return State(state.t + dt, grid, v, phi, mu, sigma, p)

    adv = state.v
    prev = None
    deltas: list[float] = []
    for _ in range(mode.max_iters):
        phi, mu, sigma, v, p = _substeps(state, dt, params, adv,
                                         newton_tol, newton_max_iters, solver_config)
        if prev is not None:
            dv = MACVelocity(v.u - prev[3].u, v.v - prev[3].v)
            delta = max(
                _quad_l2(grid, phi - prev[0]),
                _quad_l2(grid, mu - prev[1]),
                _quad_l2(grid, sigma - prev[2]),
                float(np.sqrt(grid.cell_area * (np.sum(dv.u**2) + np.sum(dv.v**2)))),
            )
            deltas.append(delta)
            if delta < mode.tol:
                return State(state.t + dt, grid, v, phi, mu, sigma, p)
        prev = (phi, mu, sigma, v, p)
        adv = v
    factors = [deltas[i + 1] / deltas[i] for i in range(len(deltas) - 1) if deltas[i] > 0]
    raise SolverError(
        f"per-step fixed-point iteration did not reach tol={mode.tol:.1e} in "
        f"{mode.max_iters} sweeps (last delta {deltas[-1] if deltas else float('nan'):.3e}, "
        f"contraction factors {factors})", deltas)


def picard_deltas(state: State, dt: float, params: PhysParams,
                  mode: CouplingMode,
                  newton_tol: float = NEWTON_TOL,
                  newton_max_iters: int = NEWTON_MAX_ITERS):
    """Run one picard step and return (new_state, iterate-difference history).

    Instrumented variant of step() used to measure contraction factors.
    """
    grid = state.grid
    adv = state.v
    prev = None
    deltas: list[float] = []
    for _ in range(mode.max_iters):
        phi, mu, sigma, v, p = _substeps(state, dt, params, adv,
                                         newton_tol, newton_max_iters, None)
        if prev is not None:
            dv = MACVelocity(v.u - prev[3].u, v.v - prev[3].v)
            delta = max(
                _quad_l2(grid, phi - prev[0]),
                _quad_l2(grid, mu - prev[1]),
                _quad_l2(grid, sigma - prev[2]),
                float(np.sqrt(grid.cell_area * (np.sum(dv.u**2) + np.sum(dv.v**2)))),
            )
            deltas.append(delta)
            if delta < mode.tol:
                return State(state.t + dt, grid, v, phi, mu, sigma, p), deltas
        prev = (phi, mu, sigma, v, p)
        adv = v
    raise SolverError("per-step fixed-point iteration did not converge", deltas)


def run(state: State, params: PhysParams, dt: float, T: float,
        mode: CouplingMode = CouplingMode.sequential(),
        observer=None, observe_every: int = 1,
        newton_tol: float = NEWTON_TOL,
        newton_max_iters: int = NEWTON_MAX_ITERS,
        solver_config: SolverConfig | None = None) -> State:
    """Advance from t=0 to T with fixed dt; returns the final state.

    observer(step_index, prev_state, state) is called on the initial state
    (with prev_state None), every observe_every steps, and on the final
    step; it is the hook through which series and snapshots are streamed.
    On a substep failure the SolverError is re-raised with the last valid
    state attached as exc.last_state.
    """
    if T < 0.0:
        raise ValueError(f"T must be nonnegative, got {T}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, dt):
        warnings.warn(f"T={T} is not a multiple of dt={dt}; running {nsteps} steps",
                      stacklevel=2)
    if observer is not None:
        observer(0, None, state)
    current = state
    for n in range(1, nsteps + 1):
        prev = current
        try:
            current = step(current, dt, params, mode=mode, newton_tol=newton_tol,
                           newton_max_iters=newton_max_iters,
                           solver_config=solver_config)
        except SolverError as exc:
            exc.last_state = prev
            raise
        if observer is not None and (n % observe_every == 0 or n == nsteps):
            observer(n, prev, current)
    return current
