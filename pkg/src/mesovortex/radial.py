"""Radial vortex-free field on the unit disc with a centred disc inclusion.

With ``S1 = D(0, R)`` the field ``h0(r)`` solves

    -h'' - h'/r + h   = 0   on (0, R)
    -h'' - h'/r + a h = 0   on (R, 1)
    h(R-) = h(R+),  h'(R-) = h'(R+) / a,  h'(0) = 0,  h(1) = 1.

Inside, ``h0 = a0 * sum a_{2k} r^{2k}`` with ``a_{2k} = 1 / (4^k (k!)^2)``
(the modified Bessel series of I0).  Outside, ``h0 = sum b_n (r - R)^n``
where the Taylor coefficients follow a three-term recursion obtained from
``r h'' + h' - a r h = 0``; the series has radius of convergence ``R`` (the
singular point r = 0), so evaluating it at ``r = 1`` needs ``R > 1/2``.
``a0`` follows from ``h(1) = 1``.

A constant-coefficient variant, in which ``1/r`` is frozen at ``1/R`` on the
outer annulus, is kept for comparison: its Taylor coefficients are generated
by the ``gamma`` recursion.

RK4 shooting on the flux form of the ODE is the reference solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateParameterError, NumericError, ParameterError
from .obstacle import CriticalLambdas

SMALL_A_PROBES = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class RadialParams:
    R: float
    a: float
    N: int = 40
    m: int = 4096
    allow_degenerate: bool = False

    def __post_init__(self):
        if not 0 < self.R < 1:
            raise ParameterError(f"inclusion radius must lie in (0, 1), got {self.R}")
        if not self.a > 0:
            raise ParameterError(f"a must be positive, got {self.a}")
        if self.a == 1 and not self.allow_degenerate:
            raise DegenerateParameterError("a = 1 without the degenerate flag")
        if self.N < 8:
            raise ParameterError("truncation order must be at least 8")
        if self.m < 16:
            raise ParameterError("shooting grid needs at least 16 steps")


@dataclass(frozen=True)
class RadialSeries:
    R: float
    a: float
    a0: float
    alpha: float
    beta: float
    inner: np.ndarray      # a_{2n+2}, n = 0..N
    outer: np.ndarray      # b_n, n = 0..N
    gamma: np.ndarray      # gamma_n, n = -3..N  (index n + 3)
    ratio: float           # geometric decay of the outer terms at r = 1
    a0_rel_error: float    # truncation error of the a0 denominator, relative

    def gamma_at(self, n: int) -> float:
        return float(self.gamma[n + 3])


# ------------------------------------------------------------ coefficients

def bessel_coefficients(count: int) -> np.ndarray:
    """``1 / (4^k (k!)^2)`` for k = 0..count-1."""
    c = np.empty(count)
    c[0] = 1.0
    for k in range(1, count):
        c[k] = c[k - 1] / (4.0 * k * k)
    return c


def _converged_sum(term, start=0, limit=10000):
    total, k = 0.0, start
    while True:
        t = term(k)
        total += t
        if abs(t) <= 1e-18 * max(abs(total), 1e-300) or k - start > limit:
            return total
        k += 1


def alpha_beta(R: float) -> tuple:
    """``h0(R)/a0`` and ``h0'(R-)/a0``: the series of I0(R) and I1(R)."""
    alpha = _converged_sum(lambda k: R ** (2 * k) / (4.0 ** k * math.factorial(k) ** 2))
    beta = _converged_sum(lambda k: (2 * k + 2) * R ** (2 * k + 1)
                          / (4.0 ** (k + 1) * math.factorial(k + 1) ** 2))
    return alpha, beta


def outer_recursion(b0: float, b1: float, R: float, a: float, N: int) -> np.ndarray:
    """Taylor coefficients about r = R of the solution of ``r h'' + h' - a r h = 0``.

    ``R (n+1)(n+2) b_{n+2} = a R b_n + a b_{n-1} - (n+1)^2 b_{n+1}``.
    """
    b = np.zeros(max(N + 1, 2))
    b[0], b[1] = b0, b1
    for n in range(0, N - 1):
        prev = b[n - 1] if n >= 1 else 0.0
        b[n + 2] = (a * R * b[n] + a * prev - (n + 1) ** 2 * b[n + 1]) / (R * (n + 1) * (n + 2))
    return b[: N + 1]


def gamma_sequence(R: float, a: float, N: int) -> np.ndarray:
    """``gamma_{-3} = 1, gamma_{-2} = -1/R, gamma_{n+1} = -gamma_n/R + a gamma_{n-1}``; n = -3..N."""
    g = np.empty(N + 4)
    g[0], g[1] = 1.0, -1.0 / R
    for k in range(2, N + 4):
        g[k] = -g[k - 1] / R + a * g[k - 2]
    return g


def frozen_outer_coefficients(b0: float, b1: float, R: float, a: float, N: int) -> np.ndarray:
    """Taylor coefficients of ``-h'' - h'/R + a h = 0`` about r = R.

    ``b_{n+2} = (gamma_{n-2} b1 + a gamma_{n-3} b0) / (n+2)!``, applied from
    n = 0 (starting later leaves b2 and b3 undefined).
    """
    g = gamma_sequence(R, a, N)
    b = np.zeros(N + 1)
    b[0], b[1] = b0, b1
    for n in range(0, N - 1):
        b[n + 2] = (g[n - 2 + 3] * b1 + a * g[n - 3 + 3] * b0) / math.factorial(n + 2)
    return b


def _decay_ratio(terms: np.ndarray) -> float:
    """Geometric decay rate of a term sequence from its envelope over the last quarter."""
    env = np.maximum(np.abs(terms[1:]), np.abs(terms[:-1]))
    k = max(4, len(env) // 4)
    tail, head = env[-1], env[-1 - k]
    if head == 0.0:
        return 0.0
    if tail == 0.0:
        return 0.0
    return float((tail / head) ** (1.0 / k))


def _tail_bound(terms: np.ndarray, ratio: float) -> float:
    last = max(abs(terms[-1]), abs(terms[-2]))
    return float(last * ratio / (1.0 - ratio)) if ratio < 1 else math.inf


def series_coefficients(params: RadialParams) -> RadialSeries:
    """Series solution; raises ConvergenceError if the a0 denominator diverges."""
    R, a, N = params.R, params.a, params.N
    alpha, beta = alpha_beta(R)
    s = 1.0 - R
    # outer series for a0 = 1, then rescale: b0 = a0 alpha, b1 = a a0 beta
    unit = outer_recursion(alpha, a * beta, R, a, N)
    terms = unit * s ** np.arange(N + 1)
    ratio = _decay_ratio(terms)
    if ratio >= 1.0 or not np.all(np.isfinite(terms)):
        raise ConvergenceError(
            f"outer series does not converge at r = 1 for R = {R} (decay ratio {ratio:.3g})")
    denom = float(np.sum(terms))
    tail = _tail_bound(terms, ratio)
    if not denom > 0:
        raise NumericError("a0 denominator is not positive")
    a0 = 1.0 / denom
    inner = a0 * bessel_coefficients(N + 2)[1:]
    return RadialSeries(R, a, a0, alpha, beta, inner, a0 * unit, gamma_sequence(R, a, N),
                        ratio, tail / denom)


def h0_radial_series(series: RadialSeries, r: float) -> tuple:
    """Series value of h0 at ``r`` and an estimate of the truncation error."""
    if not 0 <= r <= 1:
        raise ParameterError("r must lie in [0, 1]")
    if r < series.R:
        coeffs = np.concatenate(([series.a0], series.inner))
        terms = coeffs * r ** (2 * np.arange(len(coeffs)))
        value = float(np.sum(terms))
        own = abs(terms[-1])
    else:
        N = len(series.outer) - 1
        s = r - series.R
        terms = series.outer * s ** np.arange(N + 1)
        value = float(np.sum(terms))
        q = series.ratio * s / (1.0 - series.R)
        own = _tail_bound(terms, q) if q > 0 else 0.0
    return value, float(own + abs(value) * series.a0_rel_error)


# --------------------------------------------------------------- shooting

@dataclass(frozen=True)
class RadialProfile:
    r: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    R: float
    a: float
    split: int          # index of r = R; dh there is h'(R-)
    dh_outer_R: float   # h'(R+)


def _rk4(f, r0, y0, r1, steps):
    rs = np.linspace(r0, r1, steps + 1)
    ys = np.empty((steps + 1, 2))
    ys[0] = y0
    y = np.array(y0, dtype=float)
    for k in range(steps):
        r, dr = rs[k], rs[k + 1] - rs[k]
        k1 = f(r, y)
        k2 = f(r + dr / 2, y + dr / 2 * k1)
        k3 = f(r + dr / 2, y + dr / 2 * k2)
        k4 = f(r + dr, y + dr * k3)
        y = y + dr / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[k + 1] = y
    return rs, ys


def shoot_ode(params: RadialParams, frozen_outer: bool = False, r_start: float = 1e-6) -> RadialProfile:
    """RK4 solution of the radial problem, normalized so that ``h(1) = 1``.

    Integrates ``h' = p q / r, q' = r h`` (``q = r h' / p`` is the flux, which
    is continuous at ``R``) from ``r_start`` with the Taylor start
    ``h = 1 + r^2/4``, then rescales by ``1/h(1)`` since the problem is linear.
    ``frozen_outer`` replaces ``1/r`` by ``1/R`` on the annulus.
    """
    R, a, m = params.R, params.a, params.m
    m_in = min(max(int(round(m * R)), 4), m - 4)
    m_out = m - m_in
    dr_in = R / m_in
    if not r_start < dr_in:
        raise NumericError("start radius is not below the first step")

    inner = lambda r, y: np.array([y[1] / r, r * y[0]])
    y0 = (1.0 + r_start**2 / 4.0, r_start**2 / 2.0)
    # first short step to the grid, then uniform steps
    _, first = _rk4(inner, r_start, y0, dr_in, 1)
    r_in, y_in = _rk4(inner, dr_in, first[-1], R, m_in - 1)
    r_in = np.concatenate(([0.0], r_in))
    h_in = np.concatenate(([1.0], y_in[:, 0]))
    dh_in = np.concatenate(([0.0], y_in[:, 1] / r_in[1:]))

    qR = y_in[-1, 1]
    if frozen_outer:
        outer = lambda r, y: np.array([y[1], a * y[0] - y[1] / R])
        r_out, y_out = _rk4(outer, R, (y_in[-1, 0], a * qR / R), 1.0, m_out)
        h_out, dh_out = y_out[:, 0], y_out[:, 1]
    else:
        outer = lambda r, y: np.array([a * y[1] / r, r * y[0]])
        r_out, y_out = _rk4(outer, R, (y_in[-1, 0], qR), 1.0, m_out)
        h_out, dh_out = y_out[:, 0], a * y_out[:, 1] / r_out

    r = np.concatenate((r_in, r_out[1:]))
    h = np.concatenate((h_in, h_out[1:]))
    dh = np.concatenate((dh_in, dh_out[1:]))
    if not np.all(np.isfinite(h)) or h[-1] <= 0:
        raise NumericError("shooting produced a non-finite or non-positive profile")
    scale = 1.0 / h[-1]
    return RadialProfile(r, h * scale, dh * scale, R, a, len(r_in) - 1, float(dh_out[0] * scale))


def radial_lambdas(params: RadialParams, profile: RadialProfile | None = None) -> CriticalLambdas:
    """Critical ratios from a scan of the shooting profile (no monotonicity assumed)."""
    if profile is None:
        profile = shoot_ode(params)
    k = profile.split
    m1 = np.max(1.0 - profile.h[: k + 1])
    m2 = np.max((1.0 - profile.h[k:]) / params.a)
    return CriticalLambdas(float(1.0 / (2.0 * m1)), float(1.0 / (2.0 * m2)))


# --------------------------------------------------------------- small a

def log_series(x: float, max_terms: int = 100000) -> tuple:
    """Alternating series ``sum (-1)^n x^(n+1) / (n+1)`` (= ln(1+x)) and its last term."""
    if not 0 <= x < 1:
        raise ConvergenceError(f"alternating series diverges for x = {x}")
    total, term, n = 0.0, x, 0
    while abs(term) > 1e-17 * max(abs(total), 1e-300):
        if n >= max_terms:
            raise ConvergenceError("alternating series did not settle")
        total += (-1) ** n * term
        n += 1
        term = x ** (n + 1) / (n + 1)
    return total, term


def small_a_limit(R: float) -> dict:
    """Limits of ``a0`` and ``(1 - b0)/a`` as ``a -> 0+``.

    To first order in ``a`` the annulus solution is
    ``alpha + a (alpha (r^2 - R^2)/4 + (R beta - alpha R^2/2) ln(r/R))``,
    and ``ln(1/R)`` is summed as the alternating series in ``1/R - 1``.
    """
    if not 0.5 < R < 1:
        raise ParameterError("the small-a analysis needs 1/2 < R < 1")
    alpha, beta = alpha_beta(R)
    log_term, last = log_series(1.0 / R - 1.0)
    c0 = (alpha * (1 - R * R) / 4.0 + (R * beta - alpha * R * R / 2.0) * log_term) / alpha
    return {"alpha": alpha, "beta": beta, "alpha_inv": 1.0 / alpha, "c0": c0,
            "series_remainder": last}


def small_a_check(R: float, N: int = 60, probes=SMALL_A_PROBES) -> dict:
    """Report whether ``c0 > 1 - 1/alpha``, i.e. whether pinning in S2 wins for small a.

    ``c0`` is cross-checked by quadratic extrapolation to ``a = 0`` of
    ``(1 - b0(a))/a`` computed from the full series at the probe values.
    """
    lim = small_a_limit(R)
    values = []
    for a in probes:
        ser = series_coefficients(RadialParams(R, a, N=N))
        values.append((1.0 - ser.outer[0]) / a)
    deg = min(2, len(probes) - 1)
    c0_extrap = float(np.polyval(np.polyfit(probes, values, deg), 0.0))
    rel = abs(c0_extrap - lim["c0"]) / abs(lim["c0"])
    threshold = 1.0 - lim["alpha_inv"]
    return {**lim, "one_minus_alpha_inv": threshold, "holds": bool(lim["c0"] > threshold),
            "probes": list(probes), "ratios": values, "c0_extrapolated": c0_extrap,
            "extrapolation_rel_gap": rel}
