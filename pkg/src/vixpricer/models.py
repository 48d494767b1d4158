"""Catalog of VIX map functions and their critical thresholds.

A model maps the square-root factor ``Y`` to the VIX through ``X = f(Y)``
where ``f`` is a sum of power terms:

* family ``a1`` (generalized 3/2): ``f(y) = sum_j w_j * y**(-p_j)``,
  strictly decreasing and convex, ranging from +inf down to 0;
* family ``a2`` (generalized 1/2): ``f(y) = sum_j w_j * y**p_j`` with
  powers in (0, 1], strictly increasing and weakly concave;
* family ``mixture``: an ``a1`` part plus an ``a2`` part, U-shaped in the
  factor. One of the two parts may be empty, which degenerates to a single
  monotone branch expressed in factor coordinates.

The module also evaluates the waiting-benefit function ``h`` (the drift of
the discounted payoff along the factor), locates the level thresholds that
determine terminal exercise boundaries, and verifies the sign-structure
assumptions the boundary theory relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cir import CirParams
from .numerics import bracket_downcrossing, newton_bisect

__all__ = [
    "AssumptionError",
    "ModelSpec",
    "CriticalLevels",
    "model_from_dict",
    "model_to_dict",
    "f_eval",
    "f_deriv",
    "g_eval",
    "mixture_inverse",
    "waiting_benefit",
    "h_kernel",
    "big_h_kernel",
    "x_star",
    "payoff_levels",
    "critical_levels",
    "validate_model_params",
]

_ROOT_TOL = 1e-12
_GRID = np.geomspace(1e-4, 1e3, 1000)


class AssumptionError(ValueError):
    """A model/parameter combination breaks a required sign structure."""


@dataclass(frozen=True)
class ModelSpec:
    """One VIX map: family tag plus (weight, power) term lists.

    ``terms`` holds the family's own powers for ``a1``/``a2`` models; for the
    mixture family ``terms`` is the decreasing (a1) part and ``terms_a2`` the
    increasing (a2) part.
    """

    family: str
    terms: tuple = ()
    terms_a2: tuple = ()

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in ("a1", "a2", "mixture"):
            raise ValueError(f"unknown model family {self.family!r}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "terms", _clean_terms(self.terms))
        object.__setattr__(self, "terms_a2", _clean_terms(self.terms_a2))
        if fam in ("a1", "a2"):
            if not self.terms:
                raise ValueError(f"family {fam!r} needs at least one term")
            if self.terms_a2:
                raise ValueError("terms_a2 is only meaningful for the mixture family")
        else:
            if not self.terms and not self.terms_a2:
                raise ValueError("mixture needs at least one term on either side")
        for _, p in self.decreasing_terms:
            if p <= 0.0:
                raise ValueError(f"decreasing-side power must be positive, got {p}")
        for _, p in self.increasing_terms:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"increasing-side power must lie in (0, 1], got {p}")
        _check_shape(self)

    @property
    def decreasing_terms(self):
        """(weight, power) pairs entering as w * y**(-p)."""
        if self.family == "a1":
            return self.terms
        if self.family == "a2":
            return ()
        return self.terms

    @property
    def increasing_terms(self):
        """(weight, power) pairs entering as w * y**p."""
        if self.family == "a2":
            return self.terms
        if self.family == "a1":
            return ()
        return self.terms_a2

    @property
    def is_mixture(self) -> bool:
        return self.family == "mixture"


def _clean_terms(terms):
    out = []
    for w, p in terms:
        w, p = float(w), float(p)
        if not (np.isfinite(w) and w > 0.0):
            raise ValueError(f"term weight must be positive, got {w}")
        if not np.isfinite(p):
            raise ValueError(f"term power must be finite, got {p}")
        out.append((w, p))
    return tuple(out)


def _check_shape(m: ModelSpec):
    """Sampled monotonicity / single-minimum checks at construction."""
    y = _GRID
    d1 = f_deriv(m, y, 1)
    if m.family == "a1":
        if not (np.all(d1 < 0.0) and np.all(f_deriv(m, y, 2) > 0.0)):
            raise AssumptionError("a1 map must be strictly decreasing and convex")
    elif m.family == "a2":
        if not (np.all(d1 > 0.0) and np.all(f_deriv(m, y, 2) <= 0.0)):
            raise AssumptionError("a2 map must be strictly increasing and weakly concave")
    elif m.terms and m.terms_a2:
        sign = np.sign(d1)
        changes = np.nonzero(np.diff(sign))[0]
        if len(changes) != 1 or not (sign[0] < 0 < sign[-1]):
            raise AssumptionError("mixture map must fall then rise (one minimum)")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_from_dict(doc: dict) -> ModelSpec:
    """Build a model from ``{"class": ..., "terms": [{"weight","power"},...]}``."""
    try:
        fam = str(doc["class"]).lower()
        terms = tuple((t["weight"], t["power"]) for t in doc.get("terms", []))
        terms_a2 = tuple((t["weight"], t["power"]) for t in doc.get("terms_a2", []))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc
    return ModelSpec(family=fam, terms=terms, terms_a2=terms_a2)


def model_to_dict(m: ModelSpec) -> dict:
    doc = {"class": m.family,
           "terms": [{"weight": w, "power": p} for w, p in m.terms]}
    if m.terms_a2:
        doc["terms_a2"] = [{"weight": w, "power": p} for w, p in m.terms_a2]
    return doc


# ---------------------------------------------------------------------------
# map evaluation
# ---------------------------------------------------------------------------

def f_eval(m: ModelSpec, y):
    """VIX level f(y) at factor level(s) y > 0."""
    return f_deriv(m, y, 0)


def f_deriv(m: ModelSpec, y, order: int = 1):
    """Derivative of the VIX map, orders 0 through 4."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"unsupported derivative order {order}")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0.0):
        raise ValueError("factor level must be strictly positive")
    out = np.zeros_like(y_arr)
    for w, p in m.decreasing_terms:
        coef = w * _falling(-p, order)
        out = out + coef * y_arr ** (-p - order)
    for w, p in m.increasing_terms:
        coef = w * _falling(p, order)
        if coef != 0.0:
            out = out + coef * y_arr ** (p - order)
    return out if isinstance(y, np.ndarray) else float(out)


def _falling(s, k):
    c = 1.0
    for i in range(k):
        c *= s - i
    return c


def g_eval(m: ModelSpec, x: float) -> float:
    """Inverse of the map: f(g(x)) = x. Monotone families only."""
    if m.is_mixture:
        raise ValueError("the mixture map has no global inverse; use mixture_inverse")
    if not x > 0.0:
        raise ValueError("VIX level must be strictly positive")
    if len(m.terms) == 1:
        w, p = m.terms[0]
        if m.family == "a1":
            return (w / x) ** (1.0 / p)
        return (x / w) ** (1.0 / p)
    return _solve_monotone(m, x, decreasing=(m.family == "a1"))


def minimum_location(m: ModelSpec) -> float:
    """Factor level minimizing a mixture map (inf / 0 for one-sided cases)."""
    if not m.is_mixture:
        raise ValueError("minimum_location applies to mixture maps")
    if not m.terms_a2:
        return math.inf
    if not m.terms:
        return 0.0
    obj = lambda yy: -f_deriv(m, yy, 1)  # + below the minimum, - above
    lo, hi = bracket_downcrossing(obj, 1.0)
    return newton_bisect(obj, lo, hi, dfn=lambda yy: -f_deriv(m, yy, 2),
                         rel_tol=_ROOT_TOL)


def mixture_inverse(m: ModelSpec, x: float, branch: str) -> float:
    """Factor level solving f(y) = x on the requested side of the minimum.

    ``branch`` is ``"lower"`` (left of the minimum, f decreasing) or
    ``"upper"``. Requires ``x >= f(y_min)``; at the minimum both branches
    return the minimizer itself.
    """
    if branch not in ("lower", "upper"):
        raise ValueError(f"branch must be 'lower' or 'upper', got {branch!r}")
    if not m.is_mixture:
        raise ValueError("mixture_inverse applies to mixture maps")
    y_min = minimum_location(m)
    if not np.isfinite(y_min):
        # purely decreasing: only the lower branch exists
        if branch == "upper":
            raise ValueError("upper branch is empty for a decreasing-only mixture")
        return _solve_monotone(m, x, decreasing=True)
    if y_min == 0.0:
        if branch == "lower":
            raise ValueError("lower branch is empty for an increasing-only mixture")
        return _solve_monotone(m, x, decreasing=False)
    f_min = float(f_eval(m, y_min))
    if x < f_min * (1.0 - 1e-14):
        raise ValueError(f"no factor level reaches VIX level {x} (minimum {f_min})")
    if x <= f_min * (1.0 + 1e-14):
        return y_min
    obj = lambda yy: f_eval(m, yy) - x
    if branch == "lower":
        lo = y_min
        while obj(lo) <= 0.0:
            lo *= 0.5
            if lo < 1e-300:
                raise ValueError("lower branch bracketing failed")
        return newton_bisect(obj, lo, y_min, dfn=lambda yy: f_deriv(m, yy, 1),
                             rel_tol=_ROOT_TOL)
    hi = y_min
    while obj(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("upper branch bracketing failed")
    return newton_bisect(obj, y_min, hi, dfn=lambda yy: f_deriv(m, yy, 1),
                         rel_tol=_ROOT_TOL)


def _solve_monotone(m: ModelSpec, x: float, decreasing: bool) -> float:
    obj = (lambda yy: f_eval(m, yy) - x) if decreasing else (lambda yy: x - f_eval(m, yy))
    lo, hi = bracket_downcrossing(obj, 1.0)
    d = (lambda yy: f_deriv(m, yy, 1)) if decreasing else (lambda yy: -f_deriv(m, yy, 1))
    return newton_bisect(obj, lo, hi, dfn=d, rel_tol=_ROOT_TOL)


# ---------------------------------------------------------------------------
# waiting benefit
# ---------------------------------------------------------------------------

def waiting_benefit(m: ModelSpec, p: CirParams, r: float, strike: float, y):
    """Drift-adjusted payoff rate h, expressed in the factor coordinate.

    ``h(y) = (beta - alpha y) f'(y) + kappa^2 y f''(y) / 2 - r f(y) + r K``.
    Terms sharing a power are grouped so the evaluation stays finite near
    the origin even when individual pieces diverge.
    """
    y_arr = np.asarray(y, dtype=float)
    out = np.full_like(y_arr, r * strike)
    half_k2 = 0.5 * p.kappa ** 2
    for w, pw in m.decreasing_terms:
        out = out + (w * pw * (half_k2 * (pw + 1.0) - p.beta)) * y_arr ** (-pw - 1.0)
        out = out + (w * (pw * p.alpha - r)) * y_arr ** (-pw)
    for w, pw in m.increasing_terms:
        out = out + (w * pw * (p.beta + half_k2 * (pw - 1.0))) * y_arr ** (pw - 1.0)
        out = out - (w * (pw * p.alpha + r)) * y_arr ** pw
    return out if isinstance(y, np.ndarray) else float(out)


def _waiting_benefit_dy(m, p, r, y):
    y_arr = np.asarray(y, dtype=float)
    out = np.zeros_like(y_arr)
    half_k2 = 0.5 * p.kappa ** 2
    for w, pw in m.decreasing_terms:
        out = out + (w * pw * (half_k2 * (pw + 1.0) - p.beta)) * (-pw - 1.0) * y_arr ** (-pw - 2.0)
        out = out + (w * (pw * p.alpha - r)) * (-pw) * y_arr ** (-pw - 1.0)
    for w, pw in m.increasing_terms:
        if pw != 1.0:
            out = out + (w * pw * (p.beta + half_k2 * (pw - 1.0))) * (pw - 1.0) * y_arr ** (pw - 2.0)
        out = out - (w * (pw * p.alpha + r)) * pw * y_arr ** (pw - 1.0)
    return out if isinstance(y, np.ndarray) else float(out)


def h_kernel(m: ModelSpec, p: CirParams, r: float, strike: float, level):
    """Waiting benefit at a market level.

    For monotone families the level is a VIX value and the factor is
    recovered through the inverse map; for the mixture family the level is
    the factor itself.
    """
    if m.is_mixture:
        return waiting_benefit(m, p, r, strike, level)
    return waiting_benefit(m, p, r, strike, g_eval(m, float(level)))


def big_h_kernel(m: ModelSpec, p: CirParams, r: float, strike: float, level,
                 kind: str = "call"):
    """Waiting benefit restricted to the contract's payoff region.

    Calls: ``h * 1{level in payoff region}``. Puts (monotone families):
    the put payoff flips the sign of the benefit, ``-h * 1{x <= K}``.
    """
    if m.is_mixture:
        if kind != "call":
            raise ValueError("mixture contracts support calls only")
        k_lo, k_hi, _ = payoff_levels(m, strike)
        y = float(level)
        inside = y <= k_lo or y >= k_hi
        return waiting_benefit(m, p, r, strike, y) if inside else 0.0
    x = float(level)
    if kind == "call":
        return h_kernel(m, p, r, strike, x) if x >= strike else 0.0
    if kind == "put":
        return -h_kernel(m, p, r, strike, x) if x <= strike else 0.0
    raise ValueError(f"unknown contract kind {kind!r}")


# ---------------------------------------------------------------------------
# parameter conditions and critical thresholds
# ---------------------------------------------------------------------------

def validate_model_params(m: ModelSpec, p: CirParams):
    """Reject parameter pairings whose waiting benefit loses its sign shape.

    Every decreasing-side power needs ``beta > kappa^2 (p + 1) / 2`` so the
    benefit falls to -inf at the relevant end; the increasing side needs
    ``beta + kappa^2 (p - 1) / 2 > 0``, which the Feller condition implies.
    """
    half_k2 = 0.5 * p.kappa ** 2
    for _, pw in m.decreasing_terms:
        if p.beta <= half_k2 * (pw + 1.0):
            raise AssumptionError(
                f"beta={p.beta} must exceed kappa^2 (p+1)/2 = {half_k2 * (pw + 1.0)} "
                f"for decreasing power {pw}")
    for _, pw in m.increasing_terms:
        if p.beta + half_k2 * (pw - 1.0) <= 0.0:
            raise AssumptionError(
                f"beta={p.beta} too small for increasing power {pw}")


@dataclass(frozen=True)
class CriticalLevels:
    """Thresholds governing terminal exercise behavior.

    Monotone families use only ``x_star`` (VIX level where the waiting
    benefit changes sign). The mixture family uses the factor levels where
    the map crosses the strike (``k_lower``/``k_upper``), the benefit
    sign-change points on each payoff lobe (``y_lower``/``y_upper``, None
    when the benefit keeps one sign on a lobe) and the map minimizer.
    """

    x_star: float | None = None
    k_lower: float | None = None
    k_upper: float | None = None
    y_lower: float | None = None
    y_upper: float | None = None
    y_min: float | None = None


def x_star(m: ModelSpec, p: CirParams, r: float, strike: float) -> float:
    """Sign-change level of the waiting benefit for a monotone family."""
    if m.is_mixture:
        raise ValueError("x_star is defined for monotone families only")
    validate_model_params(m, p)
    h = lambda yy: waiting_benefit(m, p, r, strike, yy)
    dh = lambda yy: _waiting_benefit_dy(m, p, r, yy)
    if m.family == "a1":
        # h rises from -inf (large VIX = small factor) to r K
        lo, hi = bracket_downcrossing(lambda yy: -h(yy), 1.0)
        y_root = newton_bisect(lambda yy: -h(yy), lo, hi,
                               dfn=lambda yy: -dh(yy), rel_tol=_ROOT_TOL)
    else:
        lo, hi = bracket_downcrossing(h, 1.0)
        y_root = newton_bisect(h, lo, hi, dfn=dh, rel_tol=_ROOT_TOL)
    return float(f_eval(m, y_root))


def payoff_levels(m: ModelSpec, strike: float):
    """Factor levels bounding the in-the-money set of a mixture call.

    Returns ``(k_lower, k_upper, y_min)``; one-sided mixtures report 0 or
    inf for the missing side. Contracts with ``f(y_min) >= K`` have no
    out-of-the-money band and are rejected.
    """
    if strike <= 0.0:
        raise ValueError("strike must be strictly positive")
    if not m.is_mixture:
        raise ValueError("payoff_levels applies to mixture maps")
    y_min = minimum_location(m)
    if not np.isfinite(y_min):
        return _solve_monotone(m, strike, decreasing=True), math.inf, y_min
    if y_min == 0.0:
        return 0.0, _solve_monotone(m, strike, decreasing=False), y_min
    f_min = float(f_eval(m, y_min))
    if f_min >= strike:
        raise ValueError(
            f"strike {strike} does not exceed the map minimum {f_min}; the "
            "mixture payoff region would cover every factor level")
    return (mixture_inverse(m, strike, "lower"),
            mixture_inverse(m, strike, "upper"), y_min)


def _scan_sign_change(h_vals, grid):
    """Indices of sign changes on a grid (zeros attach to the left sign)."""
    sign = np.sign(h_vals)
    # carry previous sign through exact zeros
    for i in range(1, len(sign)):
        if sign[i] == 0.0:
            sign[i] = sign[i - 1]
    return np.nonzero(np.diff(sign))[0]


def critical_levels(m: ModelSpec, p: CirParams, r: float, strike: float) -> CriticalLevels:
    """All exercise thresholds, with the sign-structure grid verification.

    Raises :class:`AssumptionError` if the waiting benefit changes sign more
    than once on the scanned range (disconnected exercise regions are out of
    scope) or in the wrong direction.
    """
    if strike <= 0.0:
        raise ValueError("strike must be strictly positive")
    validate_model_params(m, p)
    if not m.is_mixture:
        xs = x_star(m, p, r, strike)
        _verify_single_change(m, p, r, strike)
        return CriticalLevels(x_star=xs)

    k_lo, k_hi, y_min = payoff_levels(m, strike)
    y_lower = y_upper = None
    if k_lo > 0.0:
        y_lower = _lobe_sign_change(m, p, r, strike,
                                    np.geomspace(1e-4 * k_lo, k_lo, 1000),
                                    rising=True)
    if np.isfinite(k_hi):
        y_upper = _lobe_sign_change(m, p, r, strike,
                                    np.geomspace(k_hi, 1e3 * k_hi, 1000),
                                    rising=False)
    return CriticalLevels(k_lower=k_lo, k_upper=k_hi,
                          y_lower=y_lower, y_upper=y_upper, y_min=y_min)


def _verify_single_change(m, p, r, strike):
    # factor grid covering VIX levels [1e-4, 1e3]
    ends = sorted((g_eval(m, 1e-4), g_eval(m, 1e3)))
    grid = np.geomspace(max(ends[0], 1e-300), ends[1], 1000)
    h_vals = waiting_benefit(m, p, r, strike, grid)
    changes = _scan_sign_change(h_vals, grid)
    if len(changes) != 1:
        raise AssumptionError(
            f"waiting benefit changes sign {len(changes)} times on the scan "
            "grid; a single crossing is required")


def _lobe_sign_change(m, p, r, strike, grid, rising):
    """Unique benefit sign change on one payoff lobe, or None if one-signed."""
    h_vals = waiting_benefit(m, p, r, strike, grid)
    changes = _scan_sign_change(h_vals, grid)
    if len(changes) == 0:
        if np.all(h_vals <= 0.0):
            return None
        raise AssumptionError(
            "waiting benefit is positive across an entire payoff lobe; the "
            "two-boundary structure does not apply")
    if len(changes) > 1:
        raise AssumptionError(
            f"waiting benefit changes sign {len(changes)} times on a payoff lobe")
    i = changes[0]
    direction_ok = (h_vals[i] < 0.0 < h_vals[i + 1]) if rising else (h_vals[i] > 0.0 > h_vals[i + 1])
    if not direction_ok:
        raise AssumptionError("waiting benefit changes sign in the wrong direction")
    obj = (lambda yy: -waiting_benefit(m, p, r, strike, yy)) if rising else \
        (lambda yy: waiting_benefit(m, p, r, strike, yy))
    return newton_bisect(obj, grid[i], grid[i + 1],
                         dfn=(lambda yy: -_waiting_benefit_dy(m, p, r, yy)) if rising
                         else (lambda yy: _waiting_benefit_dy(m, p, r, yy)),
                         rel_tol=_ROOT_TOL)
