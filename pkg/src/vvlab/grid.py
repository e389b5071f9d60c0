"""Uniform 1D grids and the snapshot/trajectory containers shared by the
viscous solver, the inviscid reference solver, and the analysis layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_cells < 1:
            raise ValueError("need at least one cell")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def window_mask(self, lo: float, hi: float) -> np.ndarray:
        """Boolean mask of cell centers inside [lo, hi]."""
        x = self.centers()
        return (x >= lo) & (x <= hi)


@dataclass
class Snapshot:
    """Fields at one instant plus the running scalar monitors."""

    t: float
    rho: np.ndarray
    m: np.ndarray
    min_rho: float = 0.0
    max_abs_u: float = 0.0
    visc_dissipation: float = 0.0   # accumulated eps*int int |u_x|^2 up to t

    @classmethod
    def capture(cls, t, rho, m, dissipation=0.0):
        rho = np.array(rho, dtype=float, copy=True)
        m = np.array(m, dtype=float, copy=True)
        live = rho > 0.0
        max_u = float(np.max(np.abs(m[live] / rho[live]))) if live.any() else 0.0
        return cls(t=float(t), rho=rho, m=m,
                   min_rho=float(rho.min()), max_abs_u=max_u,
                   visc_dissipation=float(dissipation))


@dataclass
class Trajectory:
    """Time-ordered snapshots on a fixed grid."""

    grid: Grid1D
    snapshots: list[Snapshot] = field(default_factory=list)
    epsilon: float | None = None      # None for the inviscid reference
    meta: dict = field(default_factory=dict)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def field_matrix(self, name: str) -> np.ndarray:
        """(n_snapshots, n_cells) matrix of rho or m."""
        return np.stack([getattr(s, name) for s in self.snapshots])

    def at_time(self, t: float, atol: float = 1e-9) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t - t) <= atol:
                return s
        raise KeyError(f"no snapshot at t={t}")


def snapshot_schedule(t_end: float, count: int) -> np.ndarray:
    """Uniform schedule 0..t_end inclusive with `count` instants."""
    if count < 2:
        raise ValueError("need at least two snapshot instants")
    return np.linspace(0.0, t_end, count)
