"""Exercise boundaries by backward induction and premium-formula pricing.

The American price decomposes into the European price plus a time integral
of the premium kernel along the exercise boundary. Evaluating that
decomposition on the boundary itself yields an integral equation whose
value at any date only involves later boundary values, so a backward sweep
over a uniform time grid determines the whole curve: the terminal value is
known analytically, and each earlier value solves a scalar equation. The
premium integral is discretized by the trapezoid rule whose zero-time node
is the analytic kernel limit weighted by the local boundary-crossing mass;
all other nodes depend on already-solved values only.

Monotone families carry one boundary in the VIX coordinate; the mixture
family carries a lower/upper pair in the factor coordinate (one of the two
may be degenerate at 0 / inf when the corresponding map part is absent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .cir import CirParams
from .european import (DEFAULT_CONFIG, OptionSpec, QuadratureConfig,
                       euro_fast, factor_state, kernel_row, _kernel_cut,
                       _strike_cuts)
from .models import (ModelSpec, critical_levels, f_deriv, f_eval, g_eval,
                     mixture_inverse, waiting_benefit)

__all__ = [
    "Boundary",
    "SolverConfig",
    "SolverError",
    "terminal_levels",
    "solve_boundary",
    "american_price",
    "smooth_fit_check",
    "exercise_region_query",
    "convexity_witness",
]


class SolverError(RuntimeError):
    """The boundary iteration failed to converge or broke an invariant."""


@dataclass(frozen=True)
class SolverConfig:
    n_steps: int = 200
    inner_tol: float = 1e-9
    max_inner_iters: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if not self.inner_tol > 0.0:
            raise ValueError("inner_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class Boundary:
    """Exercise boundary curve(s) on a time grid.

    ``values`` is the single curve for monotone families (VIX coordinate)
    or the lower curve for mixtures (factor coordinate); ``upper`` is the
    mixture's upper curve. Between grid points values interpolate linearly.
    """

    times: np.ndarray
    values: np.ndarray
    upper: np.ndarray | None = None
    kind: str = "call"
    family: str = "a1"
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_pair(self) -> bool:
        return self.upper is not None

    @property
    def expiry(self) -> float:
        return float(self.times[-1])

    def value_at(self, t):
        return np.interp(t, self.times, self.values)

    def upper_at(self, t):
        if self.upper is None:
            raise ValueError("this boundary has a single curve")
        return np.interp(t, self.times, self.upper)

    def to_csv(self, path):
        with open(path, "w") as fh:
            if self.is_pair:
                fh.write("t,b_lower,b_upper\n")
                for t, lo, hi in zip(self.times, self.values, self.upper):
                    fh.write(f"{t:.12g},{lo:.12g},{hi:.12g}\n")
            else:
                fh.write("t,b\n")
                for t, v in zip(self.times, self.values):
                    fh.write(f"{t:.12g},{v:.12g}\n")


def terminal_levels(m: ModelSpec, p: CirParams, option: OptionSpec):
    """Boundary value(s) at expiry, from the critical thresholds."""
    levels = critical_levels(m, p, option.rate, option.strike)
    if not m.is_mixture:
        if option.kind == "call":
            return max(option.strike, levels.x_star)
        return min(option.strike, levels.x_star)
    lo = levels.k_lower
    if levels.y_lower is not None:
        lo = min(lo, levels.y_lower)
    hi = levels.k_upper
    if levels.y_upper is not None:
        hi = max(hi, levels.y_upper)
    return lo, hi


# ---------------------------------------------------------------------------
# scalar equation solver (damped fixed point, secant-accelerated, bracketed)
# ---------------------------------------------------------------------------

def _solve_step(update, x0, tol, max_iters, damping):
    """Solve x = update(x) near x0.

    Damped fixed-point steps with secant acceleration on the residual; a
    residual bracket is tracked along the way and bisection takes over when
    an accelerated step leaves it or the iteration stalls.
    """
    lo = hi = None  # bracket: resid > 0 at lo, < 0 at hi
    x = x0
    prev = None  # (x, resid)
    for _ in range(max_iters):
        fx = update(x)
        resid = fx - x
        if abs(resid) <= tol:
            return x if abs(resid) == 0.0 else fx
        if resid > 0.0:
            lo = x if lo is None else max(lo, x)
        else:
            hi = x if hi is None else min(hi, x)
        cand = x + damping * resid
        if prev is not None:
            x1, r1 = prev
            if r1 != resid:
                sec = x - resid * (x - x1) / (resid - r1)
                if np.isfinite(sec) and sec > 0.0:
                    cand = sec
        if lo is not None and hi is not None and not (min(lo, hi) < cand < max(lo, hi)):
            cand = 0.5 * (lo + hi)
        prev = (x, resid)
        if cand <= 0.0:
            cand = 0.5 * x
        x = cand
    if lo is not None and hi is not None:
        # final bisection sweep on the residual
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            r = update(mid) - mid
            if abs(r) <= tol or abs(hi - lo) <= tol:
                return mid
            if r > 0.0:
                lo = mid
            else:
                hi = mid
    raise SolverError(f"inner iteration did not converge (last residual {resid:.3e})")


# ---------------------------------------------------------------------------
# boundary solvers
# ---------------------------------------------------------------------------

# Near expiry the value-matching equation degenerates whenever the terminal
# boundary sits away from the strike: every term is of the order of the time
# step and the first backward roots carry a grid-independent wobble. The
# sweep therefore pins the first _PIN_STEPS values at the terminal level
# (their true displacement is O(sqrt(dt))), discards the first actually
# solved value, and rebuilds the startup window with a square-root bridge
# anchored at the first trusted step. Monotonicity is imposed afterwards as
# an isotonic projection whose adjustments are reported, so the sweep itself
# always works with raw solutions and can self-correct.
_PIN_STEPS = 2
_BRIDGE_STEPS = 1


def solve_boundary(m: ModelSpec, p: CirParams, option: OptionSpec,
                   cfg: SolverConfig = SolverConfig(),
                   quad: QuadratureConfig = DEFAULT_CONFIG) -> Boundary:
    """Backward induction on the boundary integral equation(s)."""
    if m.is_mixture:
        if option.kind != "call":
            raise SolverError("mixture contracts support calls only")
        return _solve_mixture(m, p, option, cfg, quad)
    return _solve_single(m, p, option, cfg, quad)


def _trapezoid_weights(n_nodes, dt):
    w = np.full(n_nodes, dt)
    w[-1] = 0.5 * dt
    return w


def _sweep_single(m, p, option, times, b, start, cfg, quad):
    """Solve b[i] for i = start-1 .. 0 on a uniform grid, in place.

    The premium integral uses the trapezoid rule; the zero-time node is the
    analytic kernel limit, which carries weight 1/2 on top of the trapezoid
    half-panel because exactly half of the local mass sits in the stopping
    region when evaluating on the boundary itself.
    """
    strike = option.strike
    sign = 1.0 if option.kind == "call" else -1.0
    n_last = len(times) - 1
    dt = times[1] - times[0]
    cuts = np.empty_like(b)
    for j in range(start, n_last + 1):
        cuts[j] = _kernel_cut(m, option, b[j])
    for i in range(start - 1, -1, -1):
        tau = times[n_last] - times[i]
        u = dt * np.arange(1, n_last - i + 1)
        cut_slice = cuts[i + 1:]
        weights = _trapezoid_weights(n_last - i, dt)

        def update(bb):
            y0 = g_eval(m, bb)
            euro = euro_fast(m, p, option, tau, y0, quad)
            row = kernel_row(m, p, option, y0, u, (cut_slice,), quad)
            benefit = -sign * float(waiting_benefit(m, p, option.rate,
                                                    strike, y0))
            prem = 0.25 * dt * benefit + float(row @ weights)
            return strike + sign * (euro + prem)

        try:
            b[i] = _solve_step(update, b[i + 1], cfg.inner_tol,
                               cfg.max_inner_iters, cfg.damping)
        except SolverError as exc:
            raise SolverError(
                f"boundary step at t={times[i]:.6g} failed: {exc}") from exc
        cuts[i] = _kernel_cut(m, option, b[i])


def _startup_steps(n_steps):
    pinned = _PIN_STEPS if n_steps >= 4 * (_PIN_STEPS + _BRIDGE_STEPS) else 0
    return pinned, (_BRIDGE_STEPS if pinned else 0)


def _apply_bridge(times, vals, n_window):
    """Rebuild the last ``n_window`` interior values on a sqrt profile."""
    if not n_window:
        return
    n_last = len(times) - 1
    anchor = n_last - n_window - 1
    expiry = times[n_last]
    span = expiry - times[anchor]
    for i in range(anchor + 1, n_last):
        w = math.sqrt((expiry - times[i]) / span)
        vals[i] = vals[n_last] + (vals[anchor] - vals[n_last]) * w


def _isotonic_backward(values, decreasing_in_t, tol):
    """Project onto the monotone cone, returning (projected, adjustments)."""
    out = values.copy()
    clips = []
    for i in range(len(out) - 2, -1, -1):
        bound = out[i + 1]
        if decreasing_in_t:
            fixed = max(out[i], bound)
        else:
            fixed = min(out[i], bound)
        if fixed != out[i] and abs(fixed - out[i]) > tol:
            clips.append((i, float(out[i] - fixed)))
        out[i] = fixed
    return out, clips


def _solve_single(m, p, option, cfg, quad):
    expiry = option.maturity
    is_call = option.kind == "call"
    b_term = terminal_levels(m, p, option)
    n = cfg.n_steps
    times = np.linspace(0.0, expiry, n + 1)
    b = np.empty(n + 1)
    b[n] = b_term

    pinned, discard = _startup_steps(n)
    b[n - pinned:n] = b_term
    _sweep_single(m, p, option, times, b, n - pinned, cfg, quad)
    _apply_bridge(times, b, pinned + discard)

    b, clips = _isotonic_backward(b, decreasing_in_t=is_call,
                                  tol=cfg.inner_tol * 1e3)
    diag = {"monotonicity_clips": [(float(times[i]), gap) for i, gap in clips]}
    return Boundary(times=times, values=b, kind=option.kind,
                    family=m.family, diagnostics=diag)


def _sweep_mixture(m, p, option, times, lower, upper, start, cfg, quad,
                   solve_lower, solve_upper, k_lo, k_hi):
    strike = option.strike
    n_last = len(times) - 1
    dt = times[1] - times[0]
    for i in range(start - 1, -1, -1):
        tau = times[n_last] - times[i]
        u = dt * np.arange(1, n_last - i + 1)
        cut_lo = np.minimum(lower[i + 1:], k_lo)
        cut_hi = np.maximum(upper[i + 1:], k_hi)
        weights = _trapezoid_weights(n_last - i, dt)

        def make_update(branch):
            other = upper[i + 1] if branch == "lower" else lower[i + 1]

            def update(yy):
                euro = euro_fast(m, p, option, tau, yy, quad)
                row = kernel_row(m, p, option, yy, u, (cut_lo, cut_hi), quad)
                # half mass on the boundary being solved, plus whatever the
                # far boundary contributes (usually negligible)
                vol = p.kappa * math.sqrt(yy * dt)
                d_other = (other - yy) / vol if branch == "lower" else (yy - other) / vol
                frac = 0.5 + _zero_node_mass(-abs(d_other))
                benefit = -float(waiting_benefit(m, p, option.rate, strike, yy))
                prem = 0.5 * dt * frac * benefit + float(row @ weights)
                return mixture_inverse(m, strike + euro + prem, branch)
            return update

        for active, curve, branch in ((solve_lower, lower, "lower"),
                                      (solve_upper, upper, "upper")):
            if not active:
                curve[i] = curve[i + 1]
                continue
            try:
                curve[i] = _solve_step(make_update(branch), curve[i + 1],
                                       cfg.inner_tol, cfg.max_inner_iters,
                                       cfg.damping)
            except SolverError as exc:
                raise SolverError(
                    f"{branch} boundary step at t={times[i]:.6g} failed: "
                    f"{exc}") from exc
        if lower[i] >= upper[i]:
            raise SolverError(
                f"boundaries crossed at t={times[i]:.6g}: "
                f"{lower[i]:.6g} >= {upper[i]:.6g}")


def _solve_mixture(m, p, option, cfg, quad):
    expiry = option.maturity
    lo_term, hi_term = terminal_levels(m, p, option)
    k_lo, k_hi = _strike_cuts(m, option.strike)
    n = cfg.n_steps
    times = np.linspace(0.0, expiry, n + 1)
    lower = np.empty(n + 1)
    upper = np.empty(n + 1)
    lower[n] = lo_term
    upper[n] = hi_term
    solve_lower = lo_term > 0.0
    solve_upper = np.isfinite(hi_term)

    pinned, discard = _startup_steps(n)
    lower[n - pinned:n] = lo_term
    upper[n - pinned:n] = hi_term
    _sweep_mixture(m, p, option, times, lower, upper, n - pinned, cfg, quad,
                   solve_lower, solve_upper, k_lo, k_hi)
    if solve_lower:
        _apply_bridge(times, lower, pinned + discard)
    if solve_upper:
        _apply_bridge(times, upper, pinned + discard)

    lower, clips_lo = _isotonic_backward(lower, decreasing_in_t=False,
                                         tol=cfg.inner_tol * 1e3)
    upper, clips_hi = _isotonic_backward(upper, decreasing_in_t=True,
                                         tol=cfg.inner_tol * 1e3)
    diag = {"monotonicity_clips":
            [(float(times[i]), gap) for i, gap in clips_lo + clips_hi]}
    return Boundary(times=times, values=lower, upper=upper, kind="call",
                    family="mixture", diagnostics=diag)


# ---------------------------------------------------------------------------
# pricing against a solved boundary
# ---------------------------------------------------------------------------

def _zero_node_mass(d):
    """Effective weight of the premium integrand's zero-time node.

    Models the kernel on the first time panel as the local benefit times the
    Gaussian mass past the boundary, ``Phi(d / sqrt(s))``; pairing its exact
    panel integral with the trapezoid's half-weight endpoint yields the
    factor ``2 V(d) - Phi(d)`` with ``V(d) = int_0^1 Phi(d/sqrt(s)) ds``.
    Smooth sigmoid: 0 deep in continuation, 1 deep in the stopping region.
    """
    a = abs(d)
    if not a < 40.0:  # saturated (covers +-inf against a degenerate boundary)
        return 1.0 if d > 0.0 else 0.0
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    cdf_a = 0.5 * special.erfc(-a / math.sqrt(2.0))
    v = cdf_a * (1.0 + a * a) + a * phi_a - a * a
    if d < 0.0:
        v = 1.0 - v
    cdf_d = cdf_a if d >= 0.0 else 1.0 - cdf_a
    return 2.0 * v - cdf_d


def _zero_node_value(m, p, option, boundary, t, state, y0, du):
    """Smoothly indicated waiting-benefit term anchoring the premium at u=0."""
    sign = 1.0 if option.kind == "call" else -1.0
    benefit = -sign * float(waiting_benefit(m, p, option.rate,
                                            option.strike, y0))
    sqrt_du = math.sqrt(du)
    if boundary.is_pair:
        vol = p.kappa * math.sqrt(y0) * sqrt_du
        d_lo = (boundary.value_at(t) - y0) / vol
        d_hi = (y0 - boundary.upper_at(t)) / vol
        return benefit * (_zero_node_mass(d_lo) + _zero_node_mass(d_hi))
    vol = p.kappa * abs(float(f_deriv(m, y0, 1))) * math.sqrt(y0) * sqrt_du
    b = boundary.value_at(t)
    d = (state - b) / vol if option.kind == "call" else (b - state) / vol
    return benefit * _zero_node_mass(d)


def american_price(m: ModelSpec, p: CirParams, option: OptionSpec,
                   boundary: Boundary, t: float, state: float,
                   quad: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """European price plus the premium integral along the boundary.

    The time integral uses the trapezoid rule on the boundary grid; the
    zero-time endpoint is the analytic kernel limit weighted by the local
    Gaussian crossing mass, which keeps the premium accurate deep in the
    stopping region and smooth across the boundary.
    """
    tau = option.maturity - t
    if tau < 0.0:
        raise ValueError("valuation time lies beyond maturity")
    if tau == 0.0:
        x = f_eval(m, state) if m.is_mixture else state
        return float(option.payoff_vix(x))
    grid_step = boundary.times[1] - boundary.times[0]
    n_sub = max(1, int(math.ceil(tau / grid_step - 1e-12)))
    du = tau / n_sub
    u = du * np.arange(1, n_sub + 1)
    y0 = factor_state(m, state)
    if boundary.is_pair:
        k_lo, k_hi = _strike_cuts(m, option.strike)
        cuts = (np.minimum(boundary.value_at(t + u), k_lo),
                np.maximum(boundary.upper_at(t + u), k_hi))
    else:
        z = boundary.value_at(t + u)
        cuts = (np.array([_kernel_cut(m, option, zz) for zz in z]),)
    row = kernel_row(m, p, option, y0, u, cuts, quad)
    weights = np.full(n_sub, du)
    weights[-1] = 0.5 * du
    zero_node = _zero_node_value(m, p, option, boundary, t, state, y0, du)
    prem = 0.5 * du * zero_node + float(row @ weights)
    return euro_fast(m, p, option, tau, y0, quad) + max(prem, 0.0)


def exercise_region_query(boundary: Boundary, t: float, state: float) -> str:
    """Classify a state as ``"exercise"`` or ``"continue"`` (region closed)."""
    if not 0.0 <= t <= boundary.expiry:
        raise ValueError("time outside the boundary grid")
    if boundary.is_pair:
        if state <= boundary.value_at(t) or state >= boundary.upper_at(t):
            return "exercise"
        return "continue"
    b = boundary.value_at(t)
    if boundary.kind == "call":
        return "exercise" if state >= b else "continue"
    return "exercise" if state <= b else "continue"


def smooth_fit_check(m: ModelSpec, p: CirParams, option: OptionSpec,
                     boundary: Boundary, t: float, which: str = "single",
                     step_frac: float = 1e-3,
                     quad: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Gap between the continuation-side delta and the payoff slope.

    The derivative is a one-sided finite difference of the premium-formula
    price taken from inside the continuation region; at a true smooth-fit
    point the gap vanishes up to discretization error.
    """
    if t >= option.maturity:
        raise ValueError("smooth fit is checked strictly before expiry")
    if boundary.is_pair:
        if which not in ("lower", "upper"):
            raise ValueError("pick 'lower' or 'upper' for a mixture boundary")
        b = boundary.value_at(t) if which == "lower" else boundary.upper_at(t)
        eps = step_frac * b
        if which == "lower":  # continuation lies above the lower boundary
            d = (american_price(m, p, option, boundary, t, b + eps, quad)
                 - american_price(m, p, option, boundary, t, b, quad)) / eps
        else:
            d = (american_price(m, p, option, boundary, t, b, quad)
                 - american_price(m, p, option, boundary, t, b - eps, quad)) / eps
        return d - float(f_deriv(m, b, 1))
    b = boundary.value_at(t)
    eps = step_frac * b
    if boundary.kind == "call":  # continuation below the boundary
        d = (american_price(m, p, option, boundary, t, b, quad)
             - american_price(m, p, option, boundary, t, b - eps, quad)) / eps
        return d - 1.0
    d = (american_price(m, p, option, boundary, t, b + eps, quad)
         - american_price(m, p, option, boundary, t, b, quad)) / eps
    return d + 1.0


def convexity_witness(states, prices, tol: float = 1e-7):
    """First grid triple where the middle value rises above the chord.

    Returns ``(x1, x2, x3)`` exposing a convexity violation larger than
    ``tol``, or ``None`` when the sampled values are convex.
    """
    x = np.asarray(states, dtype=float)
    v = np.asarray(prices, dtype=float)
    for i in range(1, len(x) - 1):
        w = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1])
        chord = (1.0 - w) * v[i - 1] + w * v[i + 1]
        if v[i] > chord + tol:
            return float(x[i - 1]), float(x[i]), float(x[i + 1])
    return None
