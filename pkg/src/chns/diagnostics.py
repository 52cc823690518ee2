"""Structural functionals evaluated on discrete states.

This module is the verification side of the package: the free energy with
its kinetic, bulk, gradient, nutrient, and chemotaxis-coupling parts, the
dissipation and source functionals entering the energy balance, the exact
mean-value law of the phase field, and the two-trajectory stability metrics

    W = 1/2 |grad Sinv(v1 - v2)|^2 + 1/2 |phi1 - phi2|_dual^2
        + 1/2 |sigma1 - sigma2|_dual^2 + |mean(phi1) - mean(phi2)|,
    Z = |grad v|^2 + |phi|_w23^2 + |phi|_H2^4 + |Psi'(phi)|_L1
        + |sigma|_H1^2 + 1   (per trajectory),

with the dual norms realized through the inverse Helmholtz and Stokes
operators. holder_fit extracts the exponent of the power-law relation
between initial and worst-case W over a perturbation ladder, the checkable
signature of Holder-type continuous dependence on the data.

All quadratures use midpoint sums and the same face/node stencils as the
stepper, so the energy identity telescopes against the scheme to roundoff
where the scheme is exact and to O(dt^2) per step where operators are
staggered in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import dual_norm_h1, dual_norm_stokes
from .grid import Grid, MACVelocity, gradient_to_faces, mean, norms
from .operators import get_ops
from .potential import psi_prime, psi_value, interp_h, viscosity_eta
from .stepper import PhysParams, State

__all__ = [
    "EnergyReport",
    "DissipationParts",
    "RemainderParts",
    "StabilityMetrics",
    "energy",
    "dissipation",
    "remainder",
    "report",
    "energy_residual",
    "mean_phi_error",
    "stability_metrics",
    "holder_fit",
    "SeriesCollector",
]


@dataclass
class EnergyReport:
    """Energy, dissipation, and source functionals of one state."""

    kinetic: float = 0.0
    potential_bulk: float = 0.0
    gradient: float = 0.0
    nutrient: float = 0.0
    cross: float = 0.0
    total: float = 0.0
    viscous: float = 0.0
    chem: float = 0.0
    nutrient_flux: float = 0.0
    oono: float = 0.0
    reaction: float = 0.0


@dataclass
class DissipationParts:
    viscous: float
    chem: float
    nutrient_flux: float

    @property
    def total(self) -> float:
        return self.viscous + self.chem + self.nutrient_flux


@dataclass
class RemainderParts:
    oono: float
    reaction: float

    @property
    def total(self) -> float:
        return self.oono + self.reaction


@dataclass
class StabilityMetrics:
    """Distance W between two states and the size functional Z of each."""

    W: float
    Z1: float
    Z2: float


def _face_grad_sq(grid: Grid, f: np.ndarray) -> float:
    g = gradient_to_faces(grid, f)
    return float(grid.cell_area * (np.sum(g.u**2) + np.sum(g.v**2)))


def energy(state: State, params: PhysParams) -> EnergyReport:
    """Free-energy parts of one state (dissipation and sources left zero)."""
    grid = state.grid
    a = grid.cell_area
    rep = EnergyReport()
    rep.kinetic = 0.5 * a * float(np.sum(state.v.u**2) + np.sum(state.v.v**2))
    rep.potential_bulk = params.A * a * float(np.sum(psi_value(state.phi, params.potential)))
    rep.gradient = 0.5 * params.B * _face_grad_sq(grid, state.phi)
    rep.nutrient = 0.5 * a * float(np.sum(state.sigma**2))
    rep.cross = params.chi * a * float(np.sum(state.sigma * (1.0 - state.phi)))
    rep.total = rep.kinetic + rep.potential_bulk + rep.gradient + rep.nutrient + rep.cross
    return rep


def dissipation(state: State, params: PhysParams) -> DissipationParts:
    """Dissipated powers, with stencils matching the stepper's operators."""
    grid = state.grid
    ops = get_ops(grid)
    z = ops.pack(state.v)
    M = ops.visc_form(viscosity_eta(state.phi, params.laws))
    viscous = float(z @ (M @ z))
    chem = _face_grad_sq(grid, state.mu)
    nutrient_flux = _face_grad_sq(grid, state.sigma - params.chi * state.phi)
    return DissipationParts(viscous, chem, nutrient_flux)


def remainder(state: State, params: PhysParams, t: float | None = None) -> RemainderParts:
    """Source terms of the energy balance at time t (defaults to state.t)."""
    grid = state.grid
    a = grid.cell_area
    t = state.t if t is None else t
    oono = -params.alpha * a * float(np.sum((state.phi - params.c0) * state.mu))
    S = params.source_field(grid, t)
    h = interp_h(state.phi, params.laws)
    integrand = (-params.consumption * h * state.sigma + S) * (
        state.sigma + params.chi * (1.0 - state.phi))
    reaction = a * float(np.sum(integrand))
    return RemainderParts(oono, reaction)


def report(state: State, params: PhysParams) -> EnergyReport:
    """Full report: energy, dissipation, and remainder parts together."""
    rep = energy(state, params)
    d = dissipation(state, params)
    r = remainder(state, params)
    rep.viscous, rep.chem, rep.nutrient_flux = d.viscous, d.chem, d.nutrient_flux
    rep.oono, rep.reaction = r.oono, r.reaction
    return rep


def energy_residual(prev: State, next_state: State, dt: float, params: PhysParams) -> float:
    """Per-step defect of the discrete energy balance.

    Returns E(next) - E(prev) + dt*D(next) - dt*R(next): O(dt^2) on smooth
    runs, and bounded above by roundoff when all sources are off (the scheme
    then dissipates at least the measured rate).
    """
    e1 = energy(next_state, params).total
    e0 = energy(prev, params).total
    d = dissipation(next_state, params).total
    r = remainder(next_state, params).total
    return e1 - e0 + dt * d - dt * r


def mean_phi_error(state: State, params: PhysParams, phi0_mean: float) -> float:
    """Deviation of mean(phi) from the closed-form relaxation law.

    The law is mean(phi)(t) = c0 + exp(-alpha t) (mean(phi0) - c0); at
    alpha = 0 it reduces to exact conservation.
    """
    expected = params.c0 + np.exp(-params.alpha * state.t) * (phi0_mean - params.c0)
    return abs(mean(state.grid, state.phi) - expected)


def _z_functional(state: State, params: PhysParams) -> float:
    grid = state.grid
    pot = params.stepping_potential()
    grad_v_sq = norms(grid, state.v, "h1") ** 2
    w23 = norms(grid, state.phi, "w23")
    h2_full_sq = (norms(grid, state.phi, "l2") ** 2
                  + norms(grid, state.phi, "h1") ** 2
                  + norms(grid, state.phi, "h2") ** 2)
    psi1 = norms(grid, psi_prime(state.phi, pot), "l1")
    sig_h1_sq = norms(grid, state.sigma, "l2") ** 2 + norms(grid, state.sigma, "h1") ** 2
    return grad_v_sq + w23**2 + h2_full_sq**2 + psi1 + sig_h1_sq + 1.0


def stability_metrics(s1: State, s2: State, params: PhysParams) -> StabilityMetrics:
    """Two-trajectory distance W and per-trajectory size Z.

    Both states must live on the same grid. W vanishes exactly when the
    velocity difference is a discrete gradient, the phi and sigma
    differences are zero, and the means agree.
    """
    if s1.grid != s2.grid:
        raise ValueError("stability metrics require both states on the same grid")
    grid = s1.grid
    dv = MACVelocity(s1.v.u - s2.v.u, s1.v.v - s2.v.v)
    w = (0.5 * dual_norm_stokes(grid, dv) ** 2
         + 0.5 * dual_norm_h1(grid, s1.phi - s2.phi) ** 2
         + 0.5 * dual_norm_h1(grid, s1.sigma - s2.sigma) ** 2
         + abs(mean(grid, s1.phi) - mean(grid, s2.phi)))
    return StabilityMetrics(W=w, Z1=_z_functional(s1, params), Z2=_z_functional(s2, params))


def holder_fit(runs) -> float:
    """Least-squares exponent of sup_t W against W(0) on a log-log scale.

    runs is a sequence of (W0, sup_W) pairs from a perturbation ladder; at
    least three distinct positive magnitudes are required. Returns the
    fitted slope gamma; gamma > 0 is the Holder-dependence signature.
    """
    pairs = [(float(w0), float(sw)) for w0, sw in runs]
    if len(pairs) < 3:
        raise ValueError(f"holder_fit needs at least 3 perturbation magnitudes, got {len(pairs)}")
    w0 = np.array([p[0] for p in pairs])
    sw = np.array([p[1] for p in pairs])
    if np.any(w0 <= 0.0) or np.any(sw <= 0.0):
        raise ValueError("holder_fit requires positive W0 and sup_W (drop the delta=0 run)")
    if np.unique(w0).size != w0.size:
        raise ValueError("holder_fit requires distinct W0 magnitudes")
    span = w0.max() / w0.min()
    if span < 100.0:
        raise ValueError(f"perturbation magnitudes span only {span:.1f}x; need >= 2 decades")
    gamma = np.polyfit(np.log(w0), np.log(sw), 1)[0]
    return float(gamma)


class SeriesCollector:
    """run() observer that accumulates the diagnostic time series.

    Records one row per observed step: time, energy parts, dissipation and
    remainder parts, the phase and nutrient means, max|phi|, the divergence
    sup-norm, and the per-step energy residual (zero on the initial row).
    """

    def __init__(self, params: PhysParams, dt: float):
        self.params = params
        self.dt = dt
        self.rows: list[dict] = []

    def __call__(self, n: int, prev: State | None, state: State):
        from .grid import divergence_mac

        rep = report(state, self.params)
        residual = 0.0 if prev is None else energy_residual(prev, state, self.dt, self.params)
        div_inf = float(np.abs(divergence_mac(state.grid, state.v)).max())
        self.rows.append({
            "t": state.t,
            "E": rep.total,
            "E_kin": rep.kinetic,
            "E_pot": rep.potential_bulk,
            "E_grad": rep.gradient,
            "E_nut": rep.nutrient,
            "E_cross": rep.cross,
            "D_visc": rep.viscous,
            "D_chem": rep.chem,
            "D_nut": rep.nutrient_flux,
            "R_oono": rep.oono,
            "R_react": rep.reaction,
            "mean_phi": mean(state.grid, state.phi),
            "mean_sigma": mean(state.grid, state.sigma),
            "max_abs_phi": float(np.abs(state.phi).max()),
            "div_inf": div_inf,
            "residual": residual,
        })

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])
