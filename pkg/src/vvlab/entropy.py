"""Weak entropy pairs of the isentropic system.

A generator function psi produces the pair

    eta(rho, m) = rho * int_{-1}^{1} psi(u + rho**theta s) (1-s^2)^lam ds,
    q(rho, m)   = rho * int_{-1}^{1} (u + theta rho**theta s)
                                     psi(u + rho**theta s) (1-s^2)^lam ds,

with lam = (3-gamma)/(2(gamma-1)) > -1/2.  The weight (1-s^2)^lam is the
Gauss-Jacobi weight, so fixed-order rules integrate smooth generators to
near machine precision.  Generators with kinks or spline knots are handled
by splitting [-1, 1] at the knot preimages: end segments keep the singular
endpoint factor inside a one-sided Jacobi rule, interior segments use
Gauss-Legendre with the (then smooth) weight folded into the integrand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import roots_jacobi

from .gas import VACUUM_RHO, GasLaw, State, pow_rho, pressure_deriv


class QuadratureConvergenceError(RuntimeError):
    """Raised when doubling the rule order fails to stabilise the pair."""


class KernelNearSingularError(ValueError):
    """Direct kernel evaluation too close to its singular support boundary."""


# ---------------------------------------------------------------------------
# moments of the weight (1 - s^2)^lam
# ---------------------------------------------------------------------------

def weight_mass(lam: float) -> float:
    """c_lam = int_{-1}^{1} (1-s^2)^lam ds."""
    return math.sqrt(math.pi) * math.gamma(lam + 1.0) / math.gamma(lam + 1.5)


def weight_even_moment(lam: float, k: int) -> float:
    """int s^k (1-s^2)^lam ds for even k, by the two-term recurrence.

    Odd moments vanish; requesting one returns 0.
    """
    if k % 2:
        return 0.0
    val = weight_mass(lam)
    for j in range(1, k // 2 + 1):
        val *= (2.0 * j - 1.0) / (2.0 * j + 2.0 * lam + 1.0)
    return val


def weight_abs_moment(lam: float, k: int) -> float:
    """int |s|^k (1-s^2)^lam ds; closed Beta form, valid for odd k too."""
    return math.gamma((k + 1) / 2.0) * math.gamma(lam + 1.0) / math.gamma(
        (k + 1) / 2.0 + lam + 1.0)


# ---------------------------------------------------------------------------
# quadrature rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _rule(kind: str, order: int, lam: float):
    if kind == "sym":
        return roots_jacobi(order, lam, lam)
    if kind == "left":        # weight (1+t)^lam, singular end at t = -1
        return roots_jacobi(order, 0.0, lam)
    if kind == "right":       # weight (1-t)^lam, singular end at t = +1
        return roots_jacobi(order, lam, 0.0)
    if kind == "leg":
        return np.polynomial.legendre.leggauss(order)
    raise ValueError(kind)


@dataclass(frozen=True)
class JacobiQuadrature:
    """Symmetric Gauss-Jacobi rule for the weight (1-s^2)^lambda_exp."""

    order: int
    lambda_exp: float
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, lambda_exp: float, order: int = 32) -> "JacobiQuadrature":
        if order < 1:
            raise ValueError("order must be positive")
        nodes, weights = roots_jacobi(order, lambda_exp, lambda_exp)
        return cls(order=order, lambda_exp=lambda_exp,
                   nodes=nodes, weights=weights)

    def validate(self, tol: float = 1e-12) -> float:
        """Worst relative error on the even power moments up to 2*order - 1."""
        worst = 0.0
        for k in range(0, 2 * self.order, 2):
            exact = weight_even_moment(self.lambda_exp, k)
            got = float(self.weights @ self.nodes ** k)
            worst = max(worst, abs(got - exact) / abs(exact))
        if worst > tol:
            raise QuadratureConvergenceError(
                f"moment mismatch {worst:.3e} exceeds {tol:.1e}")
        return worst

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


# ---------------------------------------------------------------------------
# generator functions
# ---------------------------------------------------------------------------

class EntropyWeight:
    """Generator psi with derivatives, smoothness breakpoints, and support.

    Construct via the classmethods; `breakpoints` lists the w-values where
    psi loses smoothness (kinks, spline knots) so quadrature can split there.
    """

    def __init__(self, kind, value, d1, d2, breakpoints=(), support=None,
                 label=""):
        self.kind = kind
        self._value = value
        self._d1 = d1
        self._d2 = d2
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.support = support
        self.label = label or kind

    def __call__(self, w):
        return self._value(np.asarray(w, dtype=float))

    def d1(self, w):
        return self._d1(np.asarray(w, dtype=float))

    def d2(self, w):
        return self._d2(np.asarray(w, dtype=float))

    def __repr__(self):
        return f"EntropyWeight({self.label})"

    @classmethod
    def constant(cls, sign: int = 1) -> "EntropyWeight":
        s = float(sign)
        return cls("constant",
                   lambda w: np.full_like(w, s),
                   lambda w: np.zeros_like(w),
                   lambda w: np.zeros_like(w),
                   label=f"constant({sign:+d})")

    @classmethod
    def linear(cls, sign: int = 1) -> "EntropyWeight":
        s = float(sign)
        return cls("linear",
                   lambda w: s * w,
                   lambda w: np.full_like(w, s),
                   lambda w: np.zeros_like(w),
                   label=f"linear({sign:+d})")

    @classmethod
    def square(cls) -> "EntropyWeight":
        return cls("square",
                   lambda w: w * w,
                   lambda w: 2.0 * w,
                   lambda w: np.full_like(w, 2.0))

    @classmethod
    def sharp(cls) -> "EntropyWeight":
        # 0.5*w*|w|: C^1 with first derivative |w|, second sign(w) a.e.
        return cls("sharp",
                   lambda w: 0.5 * w * np.abs(w),
                   lambda w: np.abs(w),
                   lambda w: np.sign(w),
                   breakpoints=(0.0,))

    @classmethod
    def shifted_sharp(cls, u_ref: float) -> "EntropyWeight":
        c = float(u_ref)
        return cls("shifted_sharp",
                   lambda w: 0.5 * (w - c) * np.abs(w - c),
                   lambda w: np.abs(w - c),
                   lambda w: np.sign(w - c),
                   breakpoints=(c,),
                   label=f"shifted_sharp({c})")

    @classmethod
    def spline(cls, a: float, b: float) -> "EntropyWeight":
        """Cubic B-spline bump on [a, b], C^2, normalised to unit maximum."""
        if not b > a:
            raise ValueError("need b > a")
        knots = np.linspace(a, b, 5)
        base = BSpline.basis_element(knots, extrapolate=False)
        peak = float(base(0.5 * (a + b)))
        db1 = base.derivative(1)
        db2 = base.derivative(2)

        def _masked(fn, w):
            w = np.asarray(w, dtype=float)
            out = np.zeros_like(w)
            mask = (w > a) & (w < b)
            if np.any(mask):
                out[mask] = fn(w[mask]) / peak
            return out

        return cls("spline",
                   lambda w: _masked(base, w),
                   lambda w: _masked(db1, w),
                   lambda w: _masked(db2, w),
                   breakpoints=tuple(knots),
                   support=(a, b),
                   label=f"spline[{a},{b}]")


def standard_test_weights() -> list[EntropyWeight]:
    """The convex generator set {+-1, +-s, s^2} used by the entropy audits."""
    return [EntropyWeight.constant(+1), EntropyWeight.constant(-1),
            EntropyWeight.linear(+1), EntropyWeight.linear(-1),
            EntropyWeight.square()]


# ---------------------------------------------------------------------------
# core integrator
# ---------------------------------------------------------------------------

def _blocks(psi, u, rt, lam, order):
    """Yield (w_nodes, s_nodes, total_weight) matrices covering [-1, 1].

    Splits at the preimages of psi.breakpoints that fall strictly inside,
    so that every block integrand is smooth; the weight (1-s^2)^lam lives
    in the rule on end blocks and in `total_weight` on interior blocks.
    """
    n = u.size
    kcount = psi.breakpoints.size
    if kcount:
        imgs = (psi.breakpoints[None, :] - u[:, None]) / rt[:, None]
        inside = (imgs > -1.0) & (imgs < 1.0)
        seg = inside.any(axis=1)
    else:
        seg = np.zeros(n, dtype=bool)

    plain = ~seg
    if np.any(plain):
        t, w = _rule("sym", order, lam)
        s = np.broadcast_to(t, (int(plain.sum()), order))
        warg = u[plain, None] + rt[plain, None] * t[None, :]
        yield plain, warg, s, np.broadcast_to(w, s.shape)

    if np.any(seg):
        us, rs = u[seg, None], rt[seg, None]
        im = imgs[seg]
        ins = inside[seg]
        left = np.where(ins, im, np.inf).min(axis=1)
        right = np.where(ins, im, -np.inf).max(axis=1)

        t, w = _rule("left", order, lam)
        s = -1.0 + 0.5 * (left[:, None] + 1.0) * (t[None, :] + 1.0)
        coeff = (0.5 * (left + 1.0)) ** (1.0 + lam)
        yield seg, us + rs * s, s, coeff[:, None] * (1.0 - s) ** lam * w

        t, w = _rule("right", order, lam)
        s = right[:, None] + 0.5 * (1.0 - right[:, None]) * (t[None, :] + 1.0)
        coeff = (0.5 * (1.0 - right)) ** (1.0 + lam)
        yield seg, us + rs * s, s, coeff[:, None] * (1.0 + s) ** lam * w

        if kcount > 1:
            t, w = _rule("leg", order, lam)
            clipped = np.clip(im, left[:, None], right[:, None])
            for j in range(kcount - 1):
                sa, sb = clipped[:, j], clipped[:, j + 1]
                half = 0.5 * (sb - sa)
                s = (0.5 * (sa + sb))[:, None] + half[:, None] * t[None, :]
                yield (seg, us + rs * s, s,
                       half[:, None] * (1.0 - s * s) ** lam * w)


def weight_integrals(law: GasLaw, psi: EntropyWeight, rho, u,
                     order: int = 32, derivs: bool = False):
    """s-integrals of psi and (if asked) its derivatives against the weight.

    Returns dict with keys 'i0', 'i1' (psi and s*psi) and, when derivs,
    'j1', 'j2', 'j2s' (psi', psi'', s*psi'').  Vacuum states and states
    outside the generator's support wedge contribute exact zeros.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    rho, u = np.broadcast_arrays(rho, u)
    shape = rho.shape
    rho, u = rho.ravel(), u.ravel()

    rt = pow_rho(rho, law.theta)
    live = rho >= VACUUM_RHO
    if psi.support is not None:
        a, b = psi.support
        live &= (u + rt >= a) & (u - rt <= b)

    keys = ("i0", "i1", "j1", "j2", "j2s") if derivs else ("i0", "i1")
    out = {k: np.zeros(rho.size) for k in keys}
    idx = np.flatnonzero(live)
    if idx.size:
        uu, rr = u[idx], rt[idx]
        for mask, warg, s, wtot in _blocks(psi, uu, rr, law.lambda_exp, order):
            sub = idx[mask]
            f = psi(warg)
            out["i0"][sub] += (f * wtot).sum(axis=1)
            out["i1"][sub] += (f * s * wtot).sum(axis=1)
            if derivs:
                out["j1"][sub] += (psi.d1(warg) * wtot).sum(axis=1)
                f2 = psi.d2(warg)
                out["j2"][sub] += (f2 * wtot).sum(axis=1)
                out["j2s"][sub] += (f2 * s * wtot).sum(axis=1)
    return {k: v.reshape(shape) for k, v in out.items()}


def pair_fields(law: GasLaw, psi: EntropyWeight, rho, m, order: int = 32):
    """(eta, q) arrays for per-cell (rho, m) fields."""
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    live = rho >= VACUUM_RHO
    u = np.zeros_like(rho)
    np.divide(m, rho, where=live, out=u)
    ints = weight_integrals(law, psi, rho, u, order=order)
    rt = pow_rho(rho, law.theta)
    eta = rho * ints["i0"]
    q = rho * (u * ints["i0"] + law.theta * rt * ints["i1"])
    return eta, q


def m_derivative_fields(law: GasLaw, psi: EntropyWeight, rho, m,
                        order: int = 32):
    """(eta_m, eta_mm, eta_mu, eta_mrho) arrays; rho must be positive."""
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(rho < VACUUM_RHO):
        raise ValueError("m-derivatives are defined away from vacuum only")
    u = m / rho
    ints = weight_integrals(law, psi, rho, u, order=order, derivs=True)
    rt = pow_rho(rho, law.theta)
    eta_m = ints["j1"]
    eta_mm = ints["j2"] / rho
    eta_mu = ints["j2"]
    eta_mrho = law.theta * pow_rho(rho, law.theta - 1.0) * ints["j2s"]
    del rt
    return eta_m, eta_mm, eta_mu, eta_mrho


def _pair_scalar(law, psi, s: State, order: int):
    eta, q = pair_fields(law, psi, np.array([s.rho]), np.array([s.m]),
                         order=order)
    return float(eta[0]), float(q[0])


def entropy_pair(law: GasLaw, psi: EntropyWeight,
                 quad: JacobiQuadrature | None, s: State,
                 tol: float = 1e-10) -> tuple[float, float]:
    """(eta, q) at a state, with an order-doubling convergence check.

    With an explicit rule the pair is evaluated at `quad.order` and twice
    that; disagreement beyond `tol` raises QuadratureConvergenceError.
    With quad=None the order doubles from 16 until converged (cap 512).
    """
    if s.rho < VACUUM_RHO:
        return (0.0, 0.0)

    def _change(a, b):
        scale = max(abs(b[0]) + abs(b[1]), 1e-300)
        return (abs(a[0] - b[0]) + abs(a[1] - b[1])) / scale

    if quad is not None:
        coarse = _pair_scalar(law, psi, s, quad.order)
        fine = _pair_scalar(law, psi, s, 2 * quad.order)
        if _change(coarse, fine) > tol:
            raise QuadratureConvergenceError(
                f"pair not converged at order {quad.order} for {psi.label}")
        return fine

    order = 16
    prev = _pair_scalar(law, psi, s, order)
    while order < 512:
        order *= 2
        cur = _pair_scalar(law, psi, s, order)
        if _change(prev, cur) <= tol:
            return cur
        prev = cur
    raise QuadratureConvergenceError(
        f"pair not converged at cap order 512 for {psi.label}")


def entropy_m_derivatives(law: GasLaw, psi: EntropyWeight,
                          quad: JacobiQuadrature | None, s: State):
    """(eta_m, eta_mm, eta_mu, eta_mrho) at a single state with rho > 0."""
    if s.rho < VACUUM_RHO:
        raise ValueError("m-derivatives are defined away from vacuum only")
    order = quad.order if quad is not None else 64
    vals = m_derivative_fields(law, psi, np.array([s.rho]), np.array([s.m]),
                               order=order)
    return tuple(float(v[0]) for v in vals)


# ---------------------------------------------------------------------------
# the kernel and its PDE
# ---------------------------------------------------------------------------

def entropy_kernel(law: GasLaw, rho: float, v: float) -> float:
    """Kernel value (rho**(2 theta) - v^2)^lam on its support, else 0.

    For lam < 0 the value diverges at |v| = rho**theta; evaluations inside
    the relative margin 1e-8 of that boundary are refused.
    """
    if rho < 0.0:
        raise ValueError("negative density")
    if rho < VACUUM_RHO:
        return 0.0
    rt = rho ** law.theta
    av = abs(v)
    if av >= rt:
        return 0.0
    if law.lambda_exp < 0.0 and av > rt * (1.0 - 1e-8):
        raise KernelNearSingularError(
            f"|v|={av} within margin of support edge {rt}")
    return (rt * rt - v * v) ** law.lambda_exp


def kernel_pde_residual(law: GasLaw, rho: float, u: float, s: float,
                        h: float = 1e-4) -> tuple[float, float]:
    """FD residual of k_rr - (p'(rho)/rho^2) k_uu at an interior point.

    Returns (|residual|, max(|k_rr|, |k_uu|)) for relative comparison.
    """
    def k(r, uu):
        return entropy_kernel(law, r, s - uu)

    k0 = k(rho, u)
    krr = (k(rho + h, u) - 2.0 * k0 + k(rho - h, u)) / (h * h)
    kuu = (k(rho, u + h) - 2.0 * k0 + k(rho, u - h)) / (h * h)
    coeff = pressure_deriv(law, rho) / rho ** 2
    return abs(krr - coeff * kuu), max(abs(krr), abs(kuu))


def entropy_pde_residual(law: GasLaw, psi: EntropyWeight, s: State,
                         h: float = 1e-4, order: int = 48):
    """Max-norm FD residual of grad q = grad eta * grad F at a state.

    Returns (residual, scale) with scale = max(1, |grad q|_inf).
    """
    if s.rho <= 2.0 * h:
        raise ValueError("state too close to vacuum for the FD stencil")
    rhos = np.array([s.rho + h, s.rho - h, s.rho, s.rho])
    ms = np.array([s.m, s.m, s.m + h, s.m - h])
    eta, q = pair_fields(law, psi, rhos, ms, order=order)
    eta_r = (eta[0] - eta[1]) / (2.0 * h)
    eta_m = (eta[2] - eta[3]) / (2.0 * h)
    q_r = (q[0] - q[1]) / (2.0 * h)
    q_m = (q[2] - q[3]) / (2.0 * h)
    u = s.u
    df21 = pressure_deriv(law, s.rho) - u * u
    df22 = 2.0 * u
    res = max(abs(q_r - eta_m * df21), abs(q_m - (eta_r + eta_m * df22)))
    scale = max(1.0, abs(q_r), abs(q_m))
    return res, scale


# ---------------------------------------------------------------------------
# bound reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthBoundReport:
    """Empirical sups of the six growth ratios of a compact C^2 generator."""

    eta_over_rho: float
    q_over_rho_scale: float
    eta_m: float
    rho_eta_mm: float
    eta_mu: float
    scaled_eta_mrho: float

    def as_dict(self):
        return dict(eta_over_rho=self.eta_over_rho,
                    q_over_rho_scale=self.q_over_rho_scale,
                    eta_m=self.eta_m, rho_eta_mm=self.rho_eta_mm,
                    eta_mu=self.eta_mu, scaled_eta_mrho=self.scaled_eta_mrho)

    def max_relative_change(self, other: "GrowthBoundReport") -> float:
        a, b = self.as_dict(), other.as_dict()
        worst = 0.0
        for k in a:
            scale = max(abs(a[k]), abs(b[k]), 1e-300)
            worst = max(worst, abs(a[k] - b[k]) / scale)
        return worst


def growth_bound_report(law: GasLaw, psi: EntropyWeight, rho_grid, u_grid,
                        order: int = 32) -> GrowthBoundReport:
    """Measure the growth ratios of a compactly supported generator.

    eta scales like rho, q like rho*max(1, rho**theta), the m-derivative
    combinations stay bounded; the sups here must stabilise as the rho
    range is extended for those statements to hold empirically.
    """
    if psi.support is None:
        raise ValueError("growth bounds require a compactly supported psi")
    rho = np.asarray(rho_grid, dtype=float)
    uu = np.asarray(u_grid, dtype=float)
    R, U = np.meshgrid(rho, uu, indexing="ij")
    M = R * U
    eta, q = pair_fields(law, psi, R, M, order=order)
    eta_m, eta_mm, eta_mu, eta_mrho = m_derivative_fields(
        law, psi, R, M, order=order)
    rt = pow_rho(R, law.theta)
    q_scale = R * np.maximum(1.0, rt)
    return GrowthBoundReport(
        eta_over_rho=float(np.max(np.abs(eta) / R)),
        q_over_rho_scale=float(np.max(np.abs(q) / q_scale)),
        eta_m=float(np.max(np.abs(eta_m))),
        rho_eta_mm=float(np.max(np.abs(R * eta_mm))),
        eta_mu=float(np.max(np.abs(eta_mu))),
        scaled_eta_mrho=float(np.max(
            np.abs(pow_rho(R, 1.0 - law.theta) * eta_mrho))),
    )


@dataclass(frozen=True)
class SharpBoundReport:
    """Envelope constants of the pair generated by 0.5*w*|w|."""

    upper: float        # sup |eta| / (rho u^2 + rho^gamma)
    lower: float        # inf  q   / (rho|u|^3 + rho^(gamma+theta))


def sharp_bound_report(law: GasLaw, rho_grid, u_grid,
                       order: int = 48) -> SharpBoundReport:
    psi = EntropyWeight.sharp()
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("sharp bounds need rho > 0")
    uu = np.asarray(u_grid, dtype=float)
    R, U = np.meshgrid(rho, uu, indexing="ij")
    eta, q = pair_fields(law, psi, R, R * U, order=order)
    up_den = R * U * U + pow_rho(R, law.gamma)
    lo_den = R * np.abs(U) ** 3 + pow_rho(R, law.gamma + law.theta)
    return SharpBoundReport(
        upper=float(np.max(np.abs(eta) / up_den)),
        lower=float(np.min(q / lo_den)),
    )


def dump_pair_table(path, law: GasLaw, psi: EntropyWeight, states,
                    order: int = 32):
    """Write (rho, u, eta, q) rows in full round-trip precision."""
    rho = np.array([s.rho for s in states], dtype=float)
    m = np.array([s.m for s in states], dtype=float)
    eta, q = pair_fields(law, psi, rho, m, order=order)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "u", "eta", "q"])
        for i, s in enumerate(states):
            u = s.m / s.rho if s.rho >= VACUUM_RHO else 0.0
            writer.writerow([repr(s.rho), repr(u), repr(float(eta[i])),
                             repr(float(q[i]))])
