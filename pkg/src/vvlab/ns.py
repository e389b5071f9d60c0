"""Explicit viscous solver for the 1D barotropic system with momentum
diffusion acting on the velocity.

Convective part: local Lax-Friedrichs (Rusanov) interface fluxes with wave
speed |u| + theta*rho**theta.  Viscous part: explicit second difference of
u = m/rho added to the momentum update, so the diffusion acts on velocity
exactly as written in the momentum equation.  Forward Euler in time under
the twin constraints

    dt <= cfl * dx / max(|u| + theta*rho**theta)
    dt <= visc_safety * dx^2 * min(rho) / (2*eps).

Far-field Dirichlet ghost cells emulate the whole-line problem; the window
must be wide enough that no wave reaches the boundary before t_end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .gas import GasLaw, ReferenceProfile, pow_rho, pressure, relative_energy
from .grid import Grid1D, Snapshot, Trajectory


class DensityFloorBreach(RuntimeError):
    """Nonpositive density appeared during evolution; carries (t, x, rho)."""

    def __init__(self, t, x, rho):
        super().__init__(f"density floor breach at t={t}, x={x}: rho={rho}")
        self.t, self.x, self.rho = t, x, rho


class SolverDivergence(RuntimeError):
    """Non-finite field values appeared during evolution."""


class FarFieldMismatch(ValueError):
    """Initial data disagrees with the reference end states."""


@dataclass(frozen=True)
class NSConfig:
    epsilon: float
    t_end: float
    cfl: float = 0.4
    visc_safety: float = 0.4
    snapshot_times: tuple = ()
    mollifier_width: float = 0.05

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.cfl <= 0.0 or self.visc_safety <= 0.0:
            raise ValueError("safety factors must be positive")
        if self.cfl >= 1.0 or self.visc_safety >= 1.0:
            # allowed so that deliberately unstable runs can be exercised;
            # strict validation happens at config-file level
            warnings.warn("safety factor >= 1: run is expected to fail",
                          stacklevel=2)
        if self.mollifier_width <= 0.0:
            raise ValueError("mollifier width must be positive")

    def with_epsilon(self, eps: float, mollifier_width=None) -> "NSConfig":
        return replace(self, epsilon=eps,
                       mollifier_width=mollifier_width
                       or self.mollifier_width)


@dataclass
class InitialData:
    grid: Grid1D
    rho0: np.ndarray
    u0: np.ndarray
    provenance: str = "raw"          # raw | cutoff | mollified
    energy_total: float = np.nan     # E0
    slope_energy: float = np.nan     # E1 = eps^2 int rho_x^2 / rho^3
    momentum_deviation: float = np.nan   # M0 = int rho |u - u_bar|

    @property
    def m0(self) -> np.ndarray:
        return self.rho0 * self.u0


@dataclass
class FluidField:
    grid: Grid1D
    rho: np.ndarray
    m: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if np.any(self.rho <= 0.0):
            raise DensityFloorBreach(self.t, float("nan"),
                                     float(np.min(self.rho)))


def _mollifier_kernel(width: float, dx: float) -> np.ndarray:
    """Discrete bump exp(-1/(1-(x/w)^2)) on |x| < w, normalised to sum 1."""
    half = max(1, int(np.ceil(width / dx)) - 1)
    xs = np.arange(-half, half + 1) * dx / width
    kern = np.zeros_like(xs)
    inside = np.abs(xs) < 1.0
    kern[inside] = np.exp(-1.0 / (1.0 - xs[inside] ** 2))
    return kern / kern.sum()


def _smooth(values: np.ndarray, kern: np.ndarray) -> np.ndarray:
    half = (kern.size - 1) // 2
    padded = np.pad(values, half, mode="edge")
    return np.convolve(padded, kern, mode="valid")


def energy_of_data(law: GasLaw, grid: Grid1D, rho, u,
                   ref: ReferenceProfile) -> float:
    """Trapezoid value of int (rho|u - u_bar|^2 / 2 + e*(rho, rho_bar))."""
    x = grid.centers()
    integrand = 0.5 * np.asarray(rho) * (np.asarray(u) - ref.u_bar(x)) ** 2 \
        + relative_energy(law, rho, ref.rho_bar(x))
    return float(np.trapezoid(integrand, dx=grid.dx))


def prepare_initial_data(raw: InitialData, cfg: NSConfig, law: GasLaw,
                         ref: ReferenceProfile,
                         far_field_tol: float = 1e-8) -> InitialData:
    """Density floor at sqrt(eps), then mollification of both fields.

    The floor removes vacuum regions; the mollifier makes the slope energy
    finite.  Far-field values are preserved exactly beyond the mollified
    band because the raw data is constant there.  The returned record
    reports the three data functionals (total energy, slope energy,
    momentum deviation from the reference)."""
    grid = raw.grid
    x = grid.centers()
    if np.any(raw.rho0 < 0.0):
        raise ValueError("raw density must be nonnegative")

    L0 = ref.transition_halfwidth
    outside = (x < -L0 - cfg.mollifier_width) | (x > L0 + cfg.mollifier_width)
    side = x > 0.0
    want_rho = np.where(side, ref.rho_plus, ref.rho_minus)
    want_u = np.where(side, ref.u_plus, ref.u_minus)
    bad = outside & (
        (np.abs(raw.rho0 - want_rho) > far_field_tol)
        | (np.abs(raw.u0 - want_u) > far_field_tol))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise FarFieldMismatch(
            f"initial data deviates from the end states at x={x[i]}: "
            f"(rho, u)=({raw.rho0[i]}, {raw.u0[i]})")

    floor = np.sqrt(cfg.epsilon)
    rho = np.maximum(raw.rho0, floor)
    u = np.array(raw.u0, dtype=float, copy=True)

    kern = _mollifier_kernel(cfg.mollifier_width, grid.dx)
    rho = _smooth(rho, kern)
    u = _smooth(u, kern)

    drho = np.gradient(rho, grid.dx)
    e1 = cfg.epsilon ** 2 * float(np.trapezoid(drho ** 2 / rho ** 3, dx=grid.dx))
    m0 = float(np.trapezoid(rho * np.abs(u - ref.u_bar(x)), dx=grid.dx))
    e0 = energy_of_data(law, grid, rho, u, ref)
    return InitialData(grid=grid, rho0=rho, u0=u, provenance="mollified",
                       energy_total=e0, slope_energy=e1,
                       momentum_deviation=m0)


def stable_dt(law: GasLaw, cfg: NSConfig, grid: Grid1D, rho, m) -> float:
    u = m / rho
    speed = float(np.max(np.abs(u) + law.theta * pow_rho(rho, law.theta)))
    dt_conv = cfg.cfl * grid.dx / max(speed, 1e-14)
    dt_visc = cfg.visc_safety * grid.dx ** 2 * float(np.min(rho)) \
        / (2.0 * cfg.epsilon)
    return min(dt_conv, dt_visc)


def _advance(law, cfg, grid, rho, m, dt, ghost):
    """One forward-Euler step; returns (rho, m, dissipation_increment)."""
    (rho_l, m_l), (rho_r, m_r) = ghost
    dx = grid.dx

    re = np.concatenate([[rho_l], rho, [rho_r]])
    me = np.concatenate([[m_l], m, [m_r]])
    ue = me / re

    p = pressure(law, re)
    c = law.theta * pow_rho(re, law.theta)
    f1 = me
    f2 = me * ue + p

    sl = slice(None, -1)
    sr = slice(1, None)
    a = np.maximum(np.abs(ue[sl]) + c[sl], np.abs(ue[sr]) + c[sr])
    flux1 = 0.5 * (f1[sl] + f1[sr]) - 0.5 * a * (re[sr] - re[sl])
    flux2 = 0.5 * (f2[sl] + f2[sr]) - 0.5 * a * (me[sr] - me[sl])

    visc = cfg.epsilon * (ue[2:] - 2.0 * ue[1:-1] + ue[:-2]) / dx ** 2

    rho_new = rho - dt / dx * (flux1[1:] - flux1[:-1])
    m_new = m - dt / dx * (flux2[1:] - flux2[:-1]) + dt * visc

    du = (ue[1:] - ue[:-1]) / dx
    diss = cfg.epsilon * dt * float(np.sum(du * du)) * dx
    return rho_new, m_new, diss


def step(f: FluidField, cfg: NSConfig, law: GasLaw,
         ref: ReferenceProfile) -> FluidField:
    """Advance one stable step; conservative in mass up to the boundary
    fluxes, aborting on any positivity loss."""
    ghost = ((ref.rho_minus, ref.rho_minus * ref.u_minus),
             (ref.rho_plus, ref.rho_plus * ref.u_plus))
    dt = stable_dt(law, cfg, f.grid, f.rho, f.m)
    dt = min(dt, cfg.t_end - f.t) if cfg.t_end > f.t else dt
    rho, m, _ = _advance(law, cfg, f.grid, f.rho, f.m, dt, ghost)
    t_new = f.t + dt
    _check_state(f.grid, rho, m, t_new)
    return FluidField(grid=f.grid, rho=rho, m=m, t=t_new)


def _check_state(grid, rho, m, t):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
        raise SolverDivergence(f"non-finite field values at t={t}")
    if np.any(rho <= 0.0):
        i = int(np.argmin(rho))
        raise DensityFloorBreach(t, float(grid.centers()[i]), float(rho[i]))


def run(init: InitialData, cfg: NSConfig, law: GasLaw,
        ref: ReferenceProfile) -> Trajectory:
    """Integrate prepared data to t_end, capturing the requested snapshots.

    Each snapshot carries min rho, max |u| and the dissipation accumulated
    so far.  A warning is emitted if the outermost 5% of cells drift off
    the far-field states (window too small)."""
    grid = init.grid
    rho = np.array(init.rho0, dtype=float, copy=True)
    m = np.array(init.m0, dtype=float, copy=True)
    _check_state(grid, rho, m, 0.0)

    schedule = np.asarray(cfg.snapshot_times if len(cfg.snapshot_times)
                          else [cfg.t_end], dtype=float)
    if schedule[0] != 0.0:
        schedule = np.concatenate([[0.0], schedule])
    if abs(schedule[-1] - cfg.t_end) > 1e-12:
        raise ValueError("snapshot schedule must end at t_end")

    ghost = ((ref.rho_minus, ref.rho_minus * ref.u_minus),
             (ref.rho_plus, ref.rho_plus * ref.u_plus))

    traj = Trajectory(grid=grid, epsilon=cfg.epsilon, meta={
        "scheme": "rusanov+explicit-viscosity",
        "energy_total": init.energy_total,
        "slope_energy": init.slope_energy,
        "momentum_deviation": init.momentum_deviation,
    })
    traj.snapshots.append(Snapshot.capture(0.0, rho, m, 0.0))

    band = max(1, int(0.05 * grid.n_cells))
    warned = False
    dissipation = 0.0
    t = 0.0
    next_idx = 1
    while t < cfg.t_end - 1e-14:
        dt = stable_dt(law, cfg, grid, rho, m)
        if next_idx < schedule.size:
            dt = min(dt, schedule[next_idx] - t)
        dt = min(dt, cfg.t_end - t)
        rho, m, dd = _advance(law, cfg, grid, rho, m, dt, ghost)
        dissipation += dd
        t += dt
        _check_state(grid, rho, m, t)
        if next_idx < schedule.size and t >= schedule[next_idx] - 1e-14:
            traj.snapshots.append(Snapshot.capture(schedule[next_idx],
                                                   rho, m, dissipation))
            next_idx += 1
            if not warned:
                dev = max(
                    float(np.max(np.abs(rho[:band] - ghost[0][0]))),
                    float(np.max(np.abs(m[:band] - ghost[0][1]))),
                    float(np.max(np.abs(rho[-band:] - ghost[1][0]))),
                    float(np.max(np.abs(m[-band:] - ghost[1][1]))))
                if dev > 1e-8:
                    warnings.warn(
                        f"window too small: far-field deviation {dev:.3e} "
                        f"at t={t:.4g}", stacklevel=2)
                    warned = True
    return traj


def riemann_initial_data(grid: Grid1D, rho_l, u_l, rho_r, u_r,
                         x_jump: float = 0.0) -> InitialData:
    x = grid.centers()
    rho0 = np.where(x < x_jump, rho_l, rho_r).astype(float)
    u0 = np.where(x < x_jump, u_l, u_r).astype(float)
    return InitialData(grid=grid, rho0=rho0, u0=u0, provenance="raw")


def reference_initial_data(grid: Grid1D, ref: ReferenceProfile) -> InitialData:
    x = grid.centers()
    return InitialData(grid=grid, rho0=np.asarray(ref.rho_bar(x), dtype=float),
                       u0=np.asarray(ref.u_bar(x), dtype=float),
                       provenance="raw")


__all__ = [
    "NSConfig", "InitialData", "FluidField", "DensityFloorBreach",
    "SolverDivergence", "FarFieldMismatch", "prepare_initial_data",
    "energy_of_data", "stable_dt", "step", "run", "riemann_initial_data",
    "reference_initial_data",
]
