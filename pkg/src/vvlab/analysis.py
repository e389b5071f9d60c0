"""Uniform-estimate monitors, entropy-dissipation diagnostics, commutator
residuals, and the viscosity-ladder convergence study.

All time integrals are trapezoid sums over the stored snapshots, all space
derivatives are centered differences of the stored fields; the acceptance
knob for "independent of the viscosity" is a factor-2 comparison against
the largest-viscosity rung.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import euler, ns
from .entropy import EntropyWeight, m_derivative_fields, pair_fields
from .gas import GasLaw, ReferenceProfile, internal_energy_deriv, \
    mechanical_energy_arrays, pow_rho, relative_energy
from .grid import Grid1D, Snapshot, Trajectory, snapshot_schedule


class InternalConsistencyError(RuntimeError):
    """The two algebraically equal energy forms disagreed numerically."""


# ---------------------------------------------------------------------------
# energy functional
# ---------------------------------------------------------------------------

def energy_functional(law: GasLaw, ref: ReferenceProfile, grid: Grid1D,
                      rho, m, cross_check: bool = True,
                      tol: float = 1e-9) -> float:
    """Total relative mechanical energy against the reference profile.

    Evaluates both the Taylor-remainder form and the kinetic-plus-relative
    form and cross-checks them; they agree identically in exact arithmetic.
    """
    x = grid.centers()
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    rb = np.asarray(ref.rho_bar(x), dtype=float)
    ub = np.asarray(ref.u_bar(x), dtype=float)
    mb = rb * ub

    live = rho > 0.0
    dev = m - rho * ub
    kinetic = np.zeros_like(rho)
    np.divide(0.5 * dev * dev, rho, where=live, out=kinetic)
    form_b = float(np.trapezoid(
        kinetic + relative_energy(law, rho, rb), dx=grid.dx))

    if cross_check:
        eta, _ = mechanical_energy_arrays(law, rho, m)
        eta_b, _ = mechanical_energy_arrays(law, rb, mb)
        grad_r = -0.5 * ub * ub + internal_energy_deriv(law, rb)
        form_a = float(np.trapezoid(
            eta - eta_b - grad_r * (rho - rb) - ub * (m - mb), dx=grid.dx))
        scale = max(1.0, abs(form_a), abs(form_b))
        if abs(form_a - form_b) > tol * scale:
            raise InternalConsistencyError(
                f"energy forms disagree: {form_a} vs {form_b}")
    return form_b


# ---------------------------------------------------------------------------
# estimate monitors
# ---------------------------------------------------------------------------

@dataclass
class EstimateReport:
    """Time series of the five monitored functionals for one run."""

    epsilon: float
    times: np.ndarray
    energy: np.ndarray           # E(t)
    dissipation: np.ndarray      # eps * int_0^t int |u_x|^2
    density_slope: np.ndarray    # eps^2 int rho_x^2/rho^3 + eps int_0^t int
                                 # rho^(gamma-3) rho_x^2
    density_power: np.ndarray    # int_0^t int_K rho^(gamma+1)
    flux_power: np.ndarray       # int_0^t int_K (rho|u|^3 + rho^(gamma+theta))
    window: tuple[float, float] = (0.0, 0.0)

    FUNCTIONALS = ("energy", "dissipation", "density_slope",
                   "density_power", "flux_power")

    def peaks(self) -> dict[str, float]:
        return {name: float(np.max(getattr(self, name)))
                for name in self.FUNCTIONALS}


def _cumulative_trapezoid(times, values):
    out = np.zeros_like(values)
    dt = np.diff(times)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


def monitor_estimates(traj: Trajectory, law: GasLaw, ref: ReferenceProfile,
                      window: tuple[float, float]) -> EstimateReport:
    """Populate the five-functional report from a viscous trajectory."""
    if traj.epsilon is None:
        raise ValueError("estimate monitors apply to viscous runs")
    eps = traj.epsilon
    grid = traj.grid
    dx = grid.dx
    times = traj.times()
    kmask = grid.window_mask(*window)
    xw = grid.centers()[kmask]

    energy = np.empty(times.size)
    ux_sq = np.empty(times.size)
    slope_now = np.empty(times.size)
    slope_flux = np.empty(times.size)
    dens_pow = np.empty(times.size)
    flux_pow = np.empty(times.size)

    for k, snap in enumerate(traj.snapshots):
        rho, m = snap.rho, snap.m
        if np.min(rho) <= 0.0:
            raise ValueError("viscous snapshot with nonpositive density")
        u = m / rho
        energy[k] = energy_functional(law, ref, grid, rho, m)
        ux = np.gradient(u, dx)
        rx = np.gradient(rho, dx)
        ux_sq[k] = float(np.trapezoid(ux * ux, dx=dx))
        slope_now[k] = float(np.trapezoid(rx * rx / rho ** 3, dx=dx))
        slope_flux[k] = float(np.trapezoid(
            pow_rho(rho, law.gamma - 3.0) * rx * rx, dx=dx))
        dens_pow[k] = float(np.trapezoid(
            pow_rho(rho[kmask], law.gamma + 1.0), x=xw))
        flux_pow[k] = float(np.trapezoid(
            rho[kmask] * np.abs(u[kmask]) ** 3
            + pow_rho(rho[kmask], law.gamma + law.theta), x=xw))

    return EstimateReport(
        epsilon=eps,
        times=times,
        energy=energy,
        dissipation=eps * _cumulative_trapezoid(times, ux_sq),
        density_slope=eps ** 2 * slope_now
        + eps * _cumulative_trapezoid(times, slope_flux),
        density_power=_cumulative_trapezoid(times, dens_pow),
        flux_power=_cumulative_trapezoid(times, flux_pow),
        window=tuple(window),
    )


# ---------------------------------------------------------------------------
# dissipation decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationSplit:
    """Norms of the three viscous terms in the entropy balance of one run."""

    epsilon: float
    flux_l2: float       # || eps eta_m u_x ||_L2
    velsq_l1: float      # || eps eta_mu |u_x|^2 ||_L1
    mixed_l1: float      # || eps eta_mrho rho_x u_x ||_L1


def dissipation_split(traj: Trajectory, psi: EntropyWeight, law: GasLaw,
                      window: tuple[float, float],
                      order: int = 24) -> DissipationSplit:
    if traj.epsilon is None:
        raise ValueError("the dissipation split applies to viscous runs")
    eps = traj.epsilon
    grid = traj.grid
    dx = grid.dx
    kmask = grid.window_mask(*window)
    xw = grid.centers()[kmask]
    times = traj.times()

    flux_sq = np.empty(times.size)
    velsq = np.empty(times.size)
    mixed = np.empty(times.size)
    for k, snap in enumerate(traj.snapshots):
        rho, m = snap.rho, snap.m
        u = m / rho
        ux = np.gradient(u, dx)[kmask]
        rx = np.gradient(rho, dx)[kmask]
        eta_m, _, eta_mu, eta_mrho = m_derivative_fields(
            law, psi, rho[kmask], m[kmask], order=order)
        flux_sq[k] = float(np.trapezoid((eps * eta_m * ux) ** 2, x=xw))
        velsq[k] = float(np.trapezoid(np.abs(eps * eta_mu) * ux * ux, x=xw))
        mixed[k] = float(np.trapezoid(np.abs(eps * eta_mrho * rx * ux), x=xw))

    return DissipationSplit(
        epsilon=eps,
        flux_l2=math.sqrt(float(np.trapezoid(flux_sq, x=times))),
        velsq_l1=float(np.trapezoid(velsq, x=times)),
        mixed_l1=float(np.trapezoid(mixed, x=times)),
    )


def entropy_balance_residual(traj: Trajectory, psi: EntropyWeight,
                             law: GasLaw, bump, order: int = 24) -> float:
    """Weak residual of the full viscous entropy balance against one test
    function; decreases like O(dx + dt) under simultaneous refinement."""
    if traj.epsilon is None:
        raise ValueError("balance residual applies to viscous runs")
    eps = traj.epsilon
    grid = traj.grid
    dx = grid.dx
    x = grid.centers()
    times = traj.times()

    rows = np.empty(times.size)
    for k, snap in enumerate(traj.snapshots):
        rho, m = snap.rho, snap.m
        u = m / rho
        ux = np.gradient(u, dx)
        rx = np.gradient(rho, dx)
        eta, q = pair_fields(law, psi, rho, m, order=order)
        eta_m, _, eta_mu, eta_mrho = m_derivative_fields(
            law, psi, rho, m, order=order)
        t = times[k]
        rows[k] = float(np.trapezoid(
            -eta * bump.dt(t, x) - q * bump.dx(t, x)
            + eps * eta_m * ux * bump.dx(t, x)
            + eps * eta_mu * ux * ux * bump(t, x)
            + eps * eta_mrho * rx * ux * bump(t, x), dx=dx))
    total = float(np.trapezoid(rows, x=times))
    snap0 = traj.snapshots[0]
    eta0, _ = pair_fields(law, psi, snap0.rho, snap0.m, order=order)
    total -= float(np.trapezoid(eta0 * bump(0.0, x), dx=dx))
    return abs(total)


# ---------------------------------------------------------------------------
# entropy inequality audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeBump:
    """Nonnegative C^2 bump (1-tau^2)^3 (1-xi^2)^3 on a space-time box."""

    t_center: float
    t_halfwidth: float
    x_center: float
    x_halfwidth: float

    def _tau(self, t):
        return (t - self.t_center) / self.t_halfwidth

    def _xi(self, x):
        return (np.asarray(x, dtype=float) - self.x_center) / self.x_halfwidth

    @staticmethod
    def _prof(z):
        return np.where(np.abs(z) < 1.0, (1.0 - z * z) ** 3, 0.0)

    @staticmethod
    def _dprof(z):
        return np.where(np.abs(z) < 1.0, -6.0 * z * (1.0 - z * z) ** 2, 0.0)

    def __call__(self, t, x):
        return self._prof(self._tau(t)) * self._prof(self._xi(x))

    def dt(self, t, x):
        return (self._dprof(self._tau(t)) / self.t_halfwidth
                * self._prof(self._xi(x)))

    def dx(self, t, x):
        return (self._prof(self._tau(t))
                * self._dprof(self._xi(x)) / self.x_halfwidth)


def bump_bank(t_end: float, window: tuple[float, float],
              count: int = 5) -> list[SpaceTimeBump]:
    """Nonnegative test functions covering the study region, all vanishing
    at t = t_end and at the window edges; the first one straddles t = 0."""
    lo, hi = window
    span = hi - lo
    bumps = [SpaceTimeBump(0.0, 0.45 * t_end, 0.5 * (lo + hi), 0.45 * span)]
    for k in range(1, count):
        frac = k / count
        bumps.append(SpaceTimeBump(
            t_center=0.5 * t_end * frac + 0.2 * t_end,
            t_halfwidth=0.19 * t_end,
            x_center=lo + span * (0.25 + 0.5 * frac),
            x_halfwidth=0.18 * span * (1.0 + 0.5 * frac),
        ))
    return bumps


def entropy_inequality_audit(traj: Trajectory, law: GasLaw,
                             bumps: list[SpaceTimeBump] | None = None,
                             weights: list[EntropyWeight] | None = None,
                             order: int = 16) -> float:
    """Worst positive excess of the weak entropy inequality.

    For each convex generator and nonnegative bump the audited quantity is
    -iint (eta phi_t + q phi_x) - int eta(0) phi(0, .); viscous runs add
    the flux correction +iint eps eta_m u_x phi_x.  Nonpositive values mean
    the inequality holds for that pair."""
    from .entropy import standard_test_weights
    if weights is None:
        weights = standard_test_weights()
    grid = traj.grid
    dx = grid.dx
    x = grid.centers()
    times = traj.times()
    if bumps is None:
        bumps = bump_bank(float(times[-1]), (x[0], x[-1]))

    viscous = traj.epsilon is not None
    rho_mat = traj.field_matrix("rho")
    m_mat = traj.field_matrix("m")
    if viscous:
        u_mat = m_mat / rho_mat
        ux_mat = np.gradient(u_mat, dx, axis=1)

    worst = -np.inf
    for psi in weights:
        eta_mat, q_mat = pair_fields(law, psi, rho_mat, m_mat, order=order)
        if viscous:
            eta_m_mat = m_derivative_fields(law, psi, rho_mat, m_mat,
                                            order=order)[0]
        for bump in bumps:
            rows = np.empty(times.size)
            for k, t in enumerate(times):
                integrand = (-eta_mat[k] * bump.dt(t, x)
                             - q_mat[k] * bump.dx(t, x))
                if viscous:
                    integrand = integrand + (traj.epsilon * eta_m_mat[k]
                                             * ux_mat[k] * bump.dx(t, x))
                rows[k] = float(np.trapezoid(integrand, dx=dx))
            excess = float(np.trapezoid(rows, x=times))
            excess -= float(np.trapezoid(eta_mat[0] * bump(0.0, x), dx=dx))
            worst = max(worst, excess)
    return worst


# ---------------------------------------------------------------------------
# commutator diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutatorReport:
    epsilon: float | None
    s_points: tuple[float, float]
    generator_width: float
    block_cells: int
    n_blocks: int
    region: tuple[int, int]          # (time rows, space cells) used
    aggregate: float                 # sum over blocks of |residual| * area
    mean_residual: float


def commutator_residual(traj: Trajectory, law: GasLaw,
                        window: tuple[float, float],
                        s_points: tuple[float, float] = (-0.5, 0.5),
                        generator_width: float = 0.5,
                        block_cells: int = 8,
                        order: int = 24) -> CommutatorReport:
    """Block-averaged residual of the pairwise product relation.

    Over each space-time block the averages of eta1*q2 - eta2*q1 are
    compared with the corresponding products of averages; for fields that
    are constant per block the residual vanishes identically."""
    s1, s2 = s_points
    half = 0.5 * generator_width
    psi1 = EntropyWeight.spline(s1 - half, s1 + half)
    psi2 = EntropyWeight.spline(s2 - half, s2 + half)

    grid = traj.grid
    kmask = grid.window_mask(*window)
    times = traj.times()
    dts = np.diff(times)
    if dts.size and (np.max(dts) - np.min(dts)) > 1e-9 * np.max(dts):
        raise ValueError("block averaging expects a uniform snapshot grid")

    rho = traj.field_matrix("rho")[:, kmask]
    m = traj.field_matrix("m")[:, kmask]
    nt = rho.shape[0] // block_cells * block_cells
    nx = rho.shape[1] // block_cells * block_cells
    if nt == 0 or nx == 0:
        raise ValueError("window too small for the requested block size")
    rho, m = rho[:nt, :nx], m[:nt, :nx]

    eta1, q1 = pair_fields(law, psi1, rho, m, order=order)
    eta2, q2 = pair_fields(law, psi2, rho, m, order=order)
    prod = eta1 * q2 - eta2 * q1

    def _block_mean(a):
        return a.reshape(nt // block_cells, block_cells,
                         nx // block_cells, block_cells).mean(axis=(1, 3))

    r = np.abs(_block_mean(prod)
               - (_block_mean(eta1) * _block_mean(q2)
                  - _block_mean(eta2) * _block_mean(q1)))
    area = (block_cells * float(dts[0] if dts.size else 1.0)) \
        * (block_cells * grid.dx)
    return CommutatorReport(
        epsilon=traj.epsilon,
        s_points=(s1, s2),
        generator_width=generator_width,
        block_cells=block_cells,
        n_blocks=int(r.size),
        region=(nt, nx),
        aggregate=float(np.sum(r) * area),
        mean_residual=float(np.mean(r)),
    )


# ---------------------------------------------------------------------------
# L1 distance
# ---------------------------------------------------------------------------

def l1_distance(grid_a: Grid1D, snap_a: Snapshot, grid_b: Grid1D,
                snap_b: Snapshot, window: tuple[float, float]) -> float:
    """int_K (|rho_a - rho_b| + |m_a - m_b|) with linear re-gridding."""
    lo, hi = window
    if lo >= hi:
        raise ValueError("empty window")
    for g in (grid_a, grid_b):
        if hi < g.x_min or lo > g.x_max:
            raise ValueError("window disjoint from a snapshot grid")
    mask = grid_a.window_mask(lo, hi)
    x = grid_a.centers()[mask]
    rho_a, m_a = snap_a.rho[mask], snap_a.m[mask]
    if grid_b is grid_a or (grid_b.n_cells == grid_a.n_cells
                            and grid_b.x_min == grid_a.x_min
                            and grid_b.x_max == grid_a.x_max):
        rho_b, m_b = snap_b.rho[mask], snap_b.m[mask]
    else:
        xb = grid_b.centers()
        rho_b = np.interp(x, xb, snap_b.rho)
        m_b = np.interp(x, xb, snap_b.m)
    return float(np.trapezoid(np.abs(rho_a - rho_b) + np.abs(m_a - m_b), x=x))


# ---------------------------------------------------------------------------
# the ladder study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonLadder:
    epsilons: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)

    def __post_init__(self):
        eps = self.epsilons
        if len(eps) < 3:
            raise ValueError("ladder needs at least 3 rungs")
        if any(e <= 0 for e in eps) or any(
                a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("ladder must be strictly decreasing, positive")


@dataclass
class RungResult:
    epsilon: float
    ok: bool
    error: str = ""
    data_functionals: dict = field(default_factory=dict)
    estimates: EstimateReport | None = None
    split: DissipationSplit | None = None
    audit_excess: float | None = None
    commutator: CommutatorReport | None = None
    distance_to_reference: float | None = None
    min_rho: float | None = None


@dataclass
class StudyReport:
    gamma: float
    window: tuple[float, float]
    ladder: tuple[float, ...]
    grid: tuple[float, float, int]
    t_end: float
    rungs: list[RungResult] = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    reference_cells: int = 0

    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def to_plain(self) -> dict:
        rungs = []
        for r in self.rungs:
            entry = {
                "epsilon": r.epsilon,
                "ok": r.ok,
                "error": r.error,
                "data_functionals": dict(sorted(
                    r.data_functionals.items())),
                "audit_excess": r.audit_excess,
                "distance_to_reference": r.distance_to_reference,
                "min_rho": r.min_rho,
            }
            if r.estimates is not None:
                entry["functional_peaks"] = dict(sorted(
                    r.estimates.peaks().items()))
            if r.split is not None:
                entry["dissipation_split"] = {
                    "flux_l2": r.split.flux_l2,
                    "velsq_l1": r.split.velsq_l1,
                    "mixed_l1": r.split.mixed_l1,
                }
            if r.commutator is not None:
                entry["commutator_aggregate"] = r.commutator.aggregate
                entry["commutator_mean"] = r.commutator.mean_residual
            rungs.append(entry)
        return {
            "gamma": self.gamma,
            "t_end": self.t_end,
            "window": list(self.window),
            "grid": list(self.grid),
            "ladder": list(self.ladder),
            "reference_cells": self.reference_cells,
            "rungs": rungs,
            "metrics": dict(sorted(self.metrics.items())),
            "verdicts": dict(sorted(self.verdicts.items())),
        }


def _fit_slope(xs, ys):
    lx, ly = np.log(np.asarray(xs)), np.log(np.asarray(ys))
    return float(np.polyfit(lx, ly, 1)[0])


def vv_study(law: GasLaw, ref: ReferenceProfile, grid: Grid1D,
             raw_data: ns.InitialData, ladder: EpsilonLadder, t_end: float,
             window: tuple[float, float], snapshot_count: int = 101,
             cfl: float = 0.4, visc_safety: float = 0.4,
             reference_cells: int = 4000,
             split_psi: EntropyWeight | None = None,
             rung_overrides: dict | None = None) -> StudyReport:
    """Run the whole pipeline down the viscosity ladder.

    prepare -> run -> monitor -> split -> audit -> commutator -> distance,
    then the uniform-bound and trend verdicts.  A failing rung is recorded
    and skipped; the verdicts are computed over the surviving rungs as long
    as at least three remain.  The mollifier width shrinks with epsilon so
    the prepared data converge to the raw datum."""
    if split_psi is None:
        split_psi = EntropyWeight.spline(-1.0, 1.0)
    schedule = snapshot_schedule(t_end, snapshot_count)
    report = StudyReport(gamma=law.gamma, window=tuple(window),
                         ladder=tuple(ladder.epsilons),
                         grid=(grid.x_min, grid.x_max, grid.n_cells),
                         t_end=t_end, reference_cells=reference_cells)

    # inviscid reference from the raw datum on a finer grid
    fine = Grid1D(grid.x_min, grid.x_max, reference_cells)
    xf = fine.centers()
    rho_f = np.interp(xf, grid.centers(), raw_data.rho0)
    u_f = np.interp(xf, grid.centers(), raw_data.u0)
    ref_traj = euler.godunov_run(
        law, rho_f, rho_f * u_f, fine, t_end,
        snapshot_times=[t_end], cfl=0.45,
        far_field=(_far_state(ref, "minus"), _far_state(ref, "plus")))
    ref_snap = ref_traj.snapshots[-1]

    overrides = rung_overrides or {}
    for eps in ladder.epsilons:
        rung = RungResult(epsilon=eps, ok=False)
        report.rungs.append(rung)
        try:
            cfg = ns.NSConfig(
                epsilon=eps, t_end=t_end, cfl=overrides.get(eps, {}).get(
                    "cfl", cfl),
                visc_safety=visc_safety,
                snapshot_times=tuple(schedule),
                mollifier_width=eps)
            prep = ns.prepare_initial_data(raw_data, cfg, law, ref)
            rung.data_functionals = {
                "energy_total": prep.energy_total,
                "slope_energy": prep.slope_energy,
                "momentum_deviation": prep.momentum_deviation,
            }
            traj = ns.run(prep, cfg, law, ref)
            rung.min_rho = min(s.min_rho for s in traj.snapshots)
            rung.estimates = monitor_estimates(traj, law, ref, window)
            rung.split = dissipation_split(traj, split_psi, law, window)
            rung.audit_excess = entropy_inequality_audit(traj, law)
            rung.commutator = commutator_residual(traj, law, window)
            rung.distance_to_reference = l1_distance(
                grid, traj.snapshots[-1], fine, ref_snap, window)
            rung.ok = True
        except Exception as exc:   # rung isolation by construction
            rung.error = f"{type(exc).__name__}: {exc}"

    alive = [r for r in report.rungs if r.ok]
    verdicts = {"enough_rungs": len(alive) >= 3}
    if len(alive) >= 3:
        top = alive[0]          # largest viscosity among survivors
        for name in EstimateReport.FUNCTIONALS:
            peak_top = top.estimates.peaks()[name]
            peak_max = max(r.estimates.peaks()[name] for r in alive)
            verdicts[f"uniform_{name}"] = bool(
                peak_max <= 2.0 * max(peak_top, 1e-300))
        slope = _fit_slope([r.epsilon for r in alive],
                           [max(r.split.flux_l2, 1e-300) for r in alive])
        report.metrics["flux_slope"] = slope
        verdicts["flux_slope_ge_0.35"] = bool(slope >= 0.35)
        l1_top = top.split.velsq_l1 + top.split.mixed_l1
        l1_max = max(r.split.velsq_l1 + r.split.mixed_l1 for r in alive)
        verdicts["l1_terms_bounded"] = bool(
            l1_max <= 2.0 * max(l1_top, 1e-300))
        dists = [r.distance_to_reference for r in alive]
        verdicts["convergence_decreasing"] = bool(
            all(a > b for a, b in zip(dists, dists[1:])))
        verdicts["convergence_halved"] = bool(
            dists[-1] <= 0.5 * dists[0])
        verdicts["commutator_trend"] = bool(
            alive[-1].commutator.aggregate <= top.commutator.aggregate)
    report.verdicts = verdicts
    return report


def _far_state(ref: ReferenceProfile, side: str):
    from .gas import State
    if side == "minus":
        return State(ref.rho_minus, ref.rho_minus * ref.u_minus)
    return State(ref.rho_plus, ref.rho_plus * ref.u_plus)
