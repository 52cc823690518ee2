"""Constitutive laws: double-well potentials, viscosity blend, consumption weight.

The free-energy density Psi splits as Psi(r) = Psi0(r) - (theta0/2) r^2 with
Psi0 convex; the time stepper treats Psi0' implicitly and the quadratic part
explicitly, which is what turns the implicit phase-field substep into a
strictly convex problem. Three variants are supported:

* "logarithmic": Psi0(r) = (theta/2)[(1-r)ln(1-r) + (1+r)ln(1+r)] with
  0 < theta < theta_c and theta0 = theta_c. Psi0' blows up at r = +-1, which
  is what keeps the phase field inside the physical interval. Psi is
  normalized so Psi0(0) = 0; this shifts the energy by a constant only.
* "regularized_log": same well, but Psi0' is replaced outside
  [-(1-eps), 1-eps] by its first-order Taylor extension, making it defined on
  all of R, C^1, and with Psi0'' >= theta everywhere. It agrees with the
  logarithmic form on |r| <= 1-eps and is the variant actually stepped.
* "quartic": the polynomial approximation Psi(r) = (1-r^2)^2 / 4 with
  Psi0' = r^3 and theta0 = 1. It carries no bound on |r|.

The viscosity is the linear blend of the two pure-phase values, extended
constantly outside [-1, 1] (the value there is immaterial once the bound
|phi| <= 1 holds). The consumption weight is h(r) = (1+r)/2, clamped to
[0, 1] by default so the nutrient sink keeps a definite sign on overshoots.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import xlogy

__all__ = [
    "PotentialSpec",
    "MaterialLaws",
    "PotentialDomainError",
    "psi0_value",
    "psi0_prime",
    "psi0_second",
    "psi0_prime_eps",
    "psi_value",
    "psi_prime",
    "viscosity_eta",
    "interp_h",
]


class PotentialDomainError(ValueError):
    """Raised when the unregularized logarithmic potential is evaluated at |r| >= 1."""


_KINDS = ("logarithmic", "regularized_log", "quartic")


@dataclass(frozen=True)
class PotentialSpec:
    """Double-well variant plus its parameters.

    eps0 is the width below which the quadratic-tail extension is guaranteed
    monotone for the logarithmic well; any eps0 < 1 works for this family,
    0.5 is a safe default.
    """

    kind: str
    theta: float = 1.0
    theta_c: float = 2.0
    eps: float = 0.0
    eps0: float = 0.5

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind in ("logarithmic", "regularized_log"):
            if not (0.0 < self.theta < self.theta_c):
                raise ValueError(
                    f"logarithmic potential requires 0 < theta < theta_c, "
                    f"got theta={self.theta}, theta_c={self.theta_c}"
                )
            if not (0.0 < self.eps0 <= 1.0):
                raise ValueError(f"eps0 must lie in (0, 1], got {self.eps0}")
        if self.kind == "regularized_log" and not (0.0 < self.eps < self.eps0):
            raise ValueError(f"regularization width must satisfy 0 < eps < eps0={self.eps0}, got {self.eps}")

    @classmethod
    def logarithmic(cls, theta: float, theta_c: float) -> "PotentialSpec":
        return cls("logarithmic", theta=theta, theta_c=theta_c)

    @classmethod
    def regularized(cls, theta: float, theta_c: float, eps: float, eps0: float = 0.5) -> "PotentialSpec":
        return cls("regularized_log", theta=theta, theta_c=theta_c, eps=eps, eps0=eps0)

    @classmethod
    def quartic(cls) -> "PotentialSpec":
        return cls("quartic")

    @property
    def theta0(self) -> float:
        """Coefficient of the explicit concave part -(theta0/2) r^2."""
        return 1.0 if self.kind == "quartic" else self.theta_c

    def with_eps(self, eps: float) -> "PotentialSpec":
        """Regularized copy of a logarithmic-family spec with the given width."""
        if self.kind == "quartic":
            raise ValueError("the quartic potential has no singular part to regularize")
        return replace(self, kind="regularized_log", eps=float(eps))


@dataclass(frozen=True)
class MaterialLaws:
    """Pure-phase viscosities and the consumption-interpolation clamp flag."""

    eta1: float = 1.0
    eta2: float = 1.0
    h_clamp: bool = True

    def __post_init__(self):
        if not (self.eta1 > 0.0 and self.eta2 > 0.0):
            raise ValueError(f"viscosities must be positive, got eta1={self.eta1}, eta2={self.eta2}")


def _log_psi0_value(r, theta):
    return 0.5 * theta * (xlogy(1.0 - r, 1.0 - r) + xlogy(1.0 + r, 1.0 + r))


def _log_psi0_prime(r, theta):
    return 0.5 * theta * (np.log1p(r) - np.log1p(-r))


def _log_psi0_second(r, theta):
    return theta / (1.0 - r * r)


def _require_open_interval(r, what: str):
    if np.any(np.abs(r) >= 1.0):
        raise PotentialDomainError(f"{what} of the logarithmic potential is singular at |r| >= 1")


def _eps_branches(r, eps: float, theta: float):
    """Values of the quadratic-tail extension of Psi0'.

    Returns (value, prime, second) arrays valid on all of R; the branch at
    |r| <= 1-eps is the logarithmic well itself.
    """
    rp = 1.0 - eps
    v_edge = _log_psi0_value(rp, theta)
    p_edge = _log_psi0_prime(rp, theta)
    s_edge = _log_psi0_second(rp, theta)

    rc = np.clip(r, -rp, rp)
    value = _log_psi0_value(rc, theta)
    prime = _log_psi0_prime(rc, theta)
    second = _log_psi0_second(rc, theta)

    up = r > rp
    dn = r < -rp
    d_up = np.where(up, r - rp, 0.0)
    d_dn = np.where(dn, r + rp, 0.0)
    value = np.where(up, v_edge + p_edge * d_up + 0.5 * s_edge * d_up**2, value)
    value = np.where(dn, v_edge - p_edge * d_dn + 0.5 * s_edge * d_dn**2, value)
    prime = np.where(up, p_edge + s_edge * d_up, prime)
    prime = np.where(dn, -p_edge + s_edge * d_dn, prime)
    second = np.where(up | dn, s_edge, second)
    return value, prime, second


def _as_array(r):
    return np.asarray(r, dtype=float)


def _maybe_scalar(out, r):
    return float(out) if np.isscalar(r) or np.ndim(r) == 0 else out


def psi0_value(r, spec: PotentialSpec):
    """Convex part Psi0 (normalized so the logarithmic family has Psi0(0)=0)."""
    x = _as_array(r)
    if spec.kind == "quartic":
        return _maybe_scalar(0.25 * (1.0 + x**4), r)
    if spec.kind == "logarithmic":
        _require_open_interval(x, "Psi0")
        return _maybe_scalar(_log_psi0_value(x, spec.theta), r)
    value, _, _ = _eps_branches(x, spec.eps, spec.theta)
    return _maybe_scalar(value, r)


def psi0_prime(r, spec: PotentialSpec):
    """Derivative of the convex part; singular at +-1 for the logarithmic variant."""
    x = _as_array(r)
    if spec.kind == "quartic":
        return _maybe_scalar(x**3, r)
    if spec.kind == "logarithmic":
        _require_open_interval(x, "Psi0'")
        return _maybe_scalar(_log_psi0_prime(x, spec.theta), r)
    _, prime, _ = _eps_branches(x, spec.eps, spec.theta)
    return _maybe_scalar(prime, r)


def psi0_second(r, spec: PotentialSpec):
    """Second derivative of the convex part (>= theta for the log family)."""
    x = _as_array(r)
    if spec.kind == "quartic":
        return _maybe_scalar(3.0 * x**2, r)
    if spec.kind == "logarithmic":
        _require_open_interval(x, "Psi0''")
        return _maybe_scalar(_log_psi0_second(x, spec.theta), r)
    _, _, second = _eps_branches(x, spec.eps, spec.theta)
    return _maybe_scalar(second, r)


def psi0_prime_eps(r, eps: float, spec: PotentialSpec):
    """Quadratic-tail extension of Psi0' with an explicit width eps.

    Defined on all of R, C^1, monotone with slope >= theta, and equal to
    psi0_prime on |r| <= 1-eps.
    """
    if spec.kind == "quartic":
        raise ValueError("the quartic potential has no singular part to regularize")
    if not (0.0 < eps < spec.eps0):
        raise ValueError(f"regularization width must satisfy 0 < eps < eps0={spec.eps0}, got {eps}")
    x = _as_array(r)
    _, prime, _ = _eps_branches(x, eps, spec.theta)
    return _maybe_scalar(prime, r)


def psi_value(r, spec: PotentialSpec):
    """Full double-well density Psi(r) = Psi0(r) - (theta0/2) r^2.

    For the quartic variant this is exactly (1 - r^2)^2 / 4.
    """
    x = _as_array(r)
    if spec.kind == "quartic":
        return _maybe_scalar(0.25 * (1.0 - x**2) ** 2, r)
    return _maybe_scalar(psi0_value(x, spec) - 0.5 * spec.theta0 * x**2, r)


def psi_prime(r, spec: PotentialSpec):
    """Derivative Psi'(r) = Psi0'(r) - theta0 * r."""
    x = _as_array(r)
    return _maybe_scalar(psi0_prime(x, spec) - spec.theta0 * x, r)


def viscosity_eta(r, laws: MaterialLaws):
    """Linear blend eta1*(1+r)/2 + eta2*(1-r)/2 with r clamped to [-1, 1]."""
    x = np.clip(_as_array(r), -1.0, 1.0)
    out = laws.eta1 * 0.5 * (1.0 + x) + laws.eta2 * 0.5 * (1.0 - x)
    return _maybe_scalar(out, r)


def interp_h(r, laws: MaterialLaws):
    """Consumption interpolation h(r) = (1+r)/2, clamped to [0, 1] by default."""
    out = 0.5 * (1.0 + _as_array(r))
    if laws.h_clamp:
        out = np.clip(out, 0.0, 1.0)
    return _maybe_scalar(out, r)
