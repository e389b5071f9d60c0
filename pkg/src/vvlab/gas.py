"""Gamma-law gas: closure constants, flux algebra, wave-structure primitives.

Everything here is a pure function of value inputs; arrays broadcast like
scalars.  Density rho = 0 is the vacuum: momentum is forced to zero and no
velocity is ever formed there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Densities below this are treated as exact vacuum (guards exp(theta*log(rho))).
VACUUM_RHO = 1e-300


@dataclass(frozen=True)
class GasLaw:
    """Adiabatic exponent gamma > 1 and the constants derived from it.

    kappa is pinned to (gamma-1)^2/(4*gamma); with that normalisation the
    sound speed is exactly theta*rho**theta.
    """

    gamma: float
    theta: float = field(init=False)
    lambda_exp: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        g = float(self.gamma)
        object.__setattr__(self, "theta", (g - 1.0) / 2.0)
        object.__setattr__(self, "lambda_exp", (3.0 - g) / (2.0 * (g - 1.0)))
        object.__setattr__(self, "kappa", (g - 1.0) ** 2 / (4.0 * g))

    @property
    def energy_coeff(self) -> float:
        """Coefficient kappa/(gamma-1) of the internal energy."""
        return self.kappa / (self.gamma - 1.0)


@dataclass(frozen=True)
class State:
    """Point value (rho, m) with the vacuum convention rho = 0 => m = 0."""

    rho: float
    m: float = 0.0

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError(f"negative density {self.rho}")
        if self.rho < VACUUM_RHO and self.m != 0.0:
            raise ValueError("vacuum state must carry zero momentum")

    @property
    def u(self) -> float:
        if self.rho < VACUUM_RHO:
            raise ValueError("velocity undefined at vacuum")
        return self.m / self.rho

    @classmethod
    def from_velocity(cls, rho: float, u: float) -> "State":
        return cls(rho, rho * u if rho >= VACUUM_RHO else 0.0)


def _check_nonnegative(rho):
    if np.any(np.asarray(rho) < 0.0):
        raise ValueError("density must be nonnegative")


def pow_rho(rho, expo: float):
    """rho**expo via exp(expo*log(rho)), returning 0 at (near-)vacuum.

    Safe for negative exponents at rho = 0, unlike plain power.
    """
    rho = np.asarray(rho, dtype=float)
    mask = rho >= VACUUM_RHO
    out = np.zeros_like(rho)
    np.exp(expo * np.log(rho, where=mask, out=np.zeros_like(rho)),
           where=mask, out=out)
    out[~mask] = 0.0
    return out if out.ndim else float(out)


def pressure(law: GasLaw, rho):
    """p(rho) = kappa * rho**gamma."""
    _check_nonnegative(rho)
    return law.kappa * pow_rho(rho, law.gamma)


def pressure_deriv(law: GasLaw, rho):
    """p'(rho) = kappa*gamma*rho**(gamma-1); equals (theta*rho**theta)**2."""
    _check_nonnegative(rho)
    return law.kappa * law.gamma * pow_rho(rho, law.gamma - 1.0)


def sound_speed(law: GasLaw, rho):
    """c(rho) = theta * rho**theta."""
    _check_nonnegative(rho)
    return law.theta * pow_rho(rho, law.theta)


def internal_energy(law: GasLaw, rho):
    """e(rho) = kappa/(gamma-1) * rho**gamma."""
    _check_nonnegative(rho)
    return law.energy_coeff * pow_rho(rho, law.gamma)


def internal_energy_deriv(law: GasLaw, rho):
    """e'(rho) = kappa*gamma/(gamma-1) * rho**(gamma-1)."""
    _check_nonnegative(rho)
    return law.energy_coeff * law.gamma * pow_rho(rho, law.gamma - 1.0)


def relative_energy(law: GasLaw, rho, rho_ref):
    """Second-order remainder e(rho) - e(rho_ref) - e'(rho_ref)(rho - rho_ref).

    Nonnegative by convexity of e; zero exactly at rho = rho_ref.
    """
    _check_nonnegative(rho)
    if np.any(np.asarray(rho_ref) <= 0.0):
        raise ValueError("reference density must be positive")
    rho = np.asarray(rho, dtype=float)
    rho_ref = np.asarray(rho_ref, dtype=float)
    out = (internal_energy(law, rho) - internal_energy(law, rho_ref)
           - internal_energy_deriv(law, rho_ref) * (rho - rho_ref))
    # clamp the tiny negative round-off near rho == rho_ref
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def eigenvalues(law: GasLaw, s: State) -> tuple[float, float]:
    """Characteristic speeds u -/+ theta*rho**theta; coincide only at vacuum."""
    if s.rho < VACUUM_RHO:
        return (0.0, 0.0) if s.m == 0.0 else (s.m, s.m)
    c = law.theta * s.rho ** law.theta
    u = s.u
    return (u - c, u + c)


def eigenvalues_arrays(law: GasLaw, rho, u):
    c = law.theta * pow_rho(rho, law.theta)
    return u - c, u + c


def riemann_invariants(law: GasLaw, s: State) -> tuple[float, float]:
    """(u + rho**theta, u - rho**theta); both equal u at vacuum."""
    if s.rho < VACUUM_RHO:
        return (0.0, 0.0)
    r = s.rho ** law.theta
    u = s.u
    return (u + r, u - r)


def flux(law: GasLaw, s: State) -> tuple[float, float]:
    """Convective flux (m, m^2/rho + p); (0, 0) at vacuum."""
    if s.rho < VACUUM_RHO:
        return (0.0, 0.0)
    return (s.m, s.m * s.u + pressure(law, s.rho))


def flux_arrays(law: GasLaw, rho, m):
    """Vectorised convective flux with the vacuum rows zeroed."""
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    live = rho >= VACUUM_RHO
    f2 = np.zeros_like(rho)
    np.divide(m * m, rho, where=live, out=f2)
    f2 += law.kappa * pow_rho(rho, law.gamma)
    return np.where(live, m, 0.0), np.where(live, f2, 0.0)


def mechanical_energy_pair(law: GasLaw, s: State) -> tuple[float, float]:
    """Kinetic-plus-internal energy and its flux; the convex reference pair."""
    if s.rho < VACUUM_RHO:
        return (0.0, 0.0)
    u = s.u
    eta = 0.5 * s.m * u + internal_energy(law, s.rho)
    q = 0.5 * s.m * u * u + s.m * internal_energy_deriv(law, s.rho)
    return (eta, q)


def mechanical_energy_arrays(law: GasLaw, rho, m):
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    live = rho >= VACUUM_RHO
    u = np.zeros_like(rho)
    np.divide(m, rho, where=live, out=u)
    eta = 0.5 * m * u + internal_energy(law, rho)
    q = 0.5 * m * u * u + m * internal_energy_deriv(law, rho)
    return np.where(live, eta, 0.0), np.where(live, q, 0.0)


def mechanical_energy_gradient(law: GasLaw, rho, m):
    """(d/drho, d/dm) of the mechanical energy at rho > 0."""
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(rho < VACUUM_RHO):
        raise ValueError("gradient undefined at vacuum")
    u = m / rho
    return (-0.5 * u * u + internal_energy_deriv(law, rho), u)


@dataclass(frozen=True)
class ReferenceProfile:
    """Smooth monotone far-field profile used to anchor the relative energy.

    Equals (rho_minus, u_minus) for x <= -transition_halfwidth and
    (rho_plus, u_plus) for x >= +transition_halfwidth, blended by a quintic
    smoothstep (C^2) in between.
    """

    rho_minus: float
    rho_plus: float
    u_minus: float
    u_plus: float
    transition_halfwidth: float = 0.5

    def __post_init__(self):
        if self.rho_minus <= 0.0 or self.rho_plus <= 0.0:
            raise ValueError("end-state densities must be positive")
        if self.transition_halfwidth <= 0.0:
            raise ValueError("transition halfwidth must be positive")

    def _blend(self, x):
        t = (np.asarray(x, dtype=float) + self.transition_halfwidth) / (
            2.0 * self.transition_halfwidth)
        t = np.clip(t, 0.0, 1.0)
        return t * t * t * (t * (6.0 * t - 15.0) + 10.0)

    def rho_bar(self, x):
        s = self._blend(x)
        return self.rho_minus + (self.rho_plus - self.rho_minus) * s

    def u_bar(self, x):
        s = self._blend(x)
        return self.u_minus + (self.u_plus - self.u_minus) * s

    def m_bar(self, x):
        return self.rho_bar(x) * self.u_bar(x)


def relative_energy_bound_constant(law: GasLaw, rho_max: float,
                                   rho_ref_lo: float, rho_ref_hi: float,
                                   n: int = 2000) -> float:
    """Empirical sup of rho*(rho**theta - ref**theta)**2 / e*(rho, ref).

    Finite for every gamma > 1; used as a sanity constant, not a proof.
    """
    rhos = np.linspace(0.0, rho_max, n)
    refs = np.linspace(rho_ref_lo, rho_ref_hi, 21)
    worst = 0.0
    for ref in refs:
        num = rhos * (pow_rho(rhos, law.theta) - ref ** law.theta) ** 2
        den = relative_energy(law, rhos, ref)
        mask = den > 1e-14
        if np.any(mask):
            worst = max(worst, float(np.max(num[mask] / den[mask])))
    return worst


def check_gamma_identity(law: GasLaw, tol: float = 1e-14) -> bool:
    """2*theta*lambda + theta == 1, the exponent identity behind the
    linear-in-rho growth of the entropy flux."""
    return math.isclose(2.0 * law.theta * law.lambda_exp + law.theta, 1.0,
                        rel_tol=tol, abs_tol=tol)
