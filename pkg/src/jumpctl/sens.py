"""Emission statistics of the uncontrolled dynamics from the tilted generator.

theta(s) is the rightmost eigenvalue of L_s. The activity k = -theta' and
susceptibility chi = theta'' come from Richardson-refined central
differences, and the rate function phi(k) from a numerical Legendre
transform.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linops, liouville
from .model import ControlPolicy, ModelParams

FD_STEP = 1e-4
DEFAULT_S_RANGE = (-0.5, 2.0)
DEFAULT_S_POINTS = 241
IMAG_WARN = 1e-8


def default_s_grid():
    return np.linspace(*DEFAULT_S_RANGE, DEFAULT_S_POINTS)


def scgf(p: ModelParams, s: float) -> float:
    """Largest-real-part eigenvalue of the tilted Lindbladian."""
    value = linops.dominant_eig(liouville.tilted_lindbladian(p, s), linops.LARGEST_REAL).value
    if abs(value.imag) > IMAG_WARN:
        warnings.warn(f"theta({s}) has imaginary residue {value.imag:.2e}", RuntimeWarning,
                      stacklevel=2)
    return float(value.real)


def derivatives(theta: Callable[[float], float], s: float, h: float = FD_STEP):
    """(k, chi) = (-theta'(s), theta''(s)) by central differences at h and 2h, Richardson-combined."""
    t0 = theta(s)
    tp1, tm1 = theta(s + h), theta(s - h)
    tp2, tm2 = theta(s + 2 * h), theta(s - 2 * h)
    d1_h = (tp1 - tm1) / (2 * h)
    d1_2h = (tp2 - tm2) / (4 * h)
    d2_h = (tp1 - 2 * t0 + tm1) / h**2
    d2_2h = (tp2 - 2 * t0 + tm2) / (4 * h**2)
    k = -(4 * d1_h - d1_2h) / 3
    chi = (4 * d2_h - d2_2h) / 3
    return t0, k, chi


def activity(p: ModelParams, s: float) -> float:
    return derivatives(lambda x: scgf(p, x), s)[1]


def susceptibility(p: ModelParams, s: float) -> float:
    return derivatives(lambda x: scgf(p, x), s)[2]


@dataclass
class LDCurve:
    grid: np.ndarray
    theta: np.ndarray
    k: np.ndarray
    chi: np.ndarray

    def rows(self):
        return zip(self.grid, self.theta, self.k, self.chi)

    def peak(self):
        """Grid value where chi is largest."""
        return float(self.grid[int(np.argmax(self.chi))])


def theta_function(p: ModelParams, policy: ControlPolicy | None = None) -> Callable[[float], float]:
    """theta(s) for the given policy: tilted generator when uncontrolled, x-ensemble inversion otherwise."""
    if policy is None or not policy.controlled:
        if policy is not None and policy.unitary is not None:
            raise ValueError("an uncontrolled policy cannot carry a unitary")
        return lambda s: scgf(p, s)
    from .xens import ControlledDynamics

    return ControlledDynamics(policy, p).theta


def curve_from_theta(theta, grid, workers=1) -> LDCurve:
    grid = np.asarray(grid, dtype=float)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cols = list(pool.map(lambda s: derivatives(theta, s), grid))
    else:
        cols = [derivatives(theta, s) for s in grid]
    cols = np.array(cols, dtype=float).reshape(len(grid), 3)
    return LDCurve(grid, cols[:, 0], cols[:, 1], cols[:, 2])


def ld_curve(p: ModelParams, grid=None, policy: ControlPolicy | None = None, workers=1) -> LDCurve:
    grid = default_s_grid() if grid is None else grid
    return curve_from_theta(theta_function(p, policy), grid, workers)


# ---------------------------------------------------------------- rate function

GOLDEN = (math.sqrt(5) - 1) / 2


def golden_max(f, lo, hi, tol=1e-9, max_iter=200):
    """Maximize a unimodal ``f`` on [lo, hi]; returns (argmax, max)."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # the ends are candidates too: the sup may sit on the boundary
    best = max(((lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)), key=lambda kv: kv[1])
    return best


@dataclass
class RateFunction:
    k: np.ndarray
    phi: np.ndarray
    s_star: np.ndarray
    at_boundary: np.ndarray

    def rows(self):
        return zip(self.k, self.phi, self.s_star, self.at_boundary.astype(int))


def rate_function(p: ModelParams, k_grid, policy: ControlPolicy | None = None,
                  s_bounds=DEFAULT_S_RANGE, tol=1e-9) -> RateFunction:
    """phi(k) = sup_s [-s k - theta(s)] over ``s_bounds``.

    Points whose maximizer lands on an end of ``s_bounds`` are flagged: there
    the supremum is cut off by the scanned interval and phi is a lower bound.
    """
    theta = theta_function(p, policy)
    cache = {}

    def th(s):
        if s not in cache:
            cache[s] = theta(s)
        return cache[s]

    lo, hi = s_bounds
    k_grid = np.asarray(k_grid, dtype=float)
    phi = np.empty_like(k_grid)
    s_star = np.empty_like(k_grid)
    edge = np.zeros(k_grid.shape, dtype=bool)
    for i, k in enumerate(k_grid):
        s, val = golden_max(lambda x: -x * k - th(x), lo, hi, tol)
        phi[i], s_star[i] = val, s
        edge[i] = min(s - lo, hi - s) <= 10 * tol
    return RateFunction(k_grid, phi, s_star, edge)


def theta_from_rate(rate: RateFunction, s_values):
    """Inverse Legendre transform sup_k [-s k - phi(k)] over the sampled k grid.

    The discrete maximum is refined by a parabola through its neighbours.
    Returns (theta, interior) where ``interior`` marks s values whose
    maximizer is strictly inside the grid.
    """
    k, phi = rate.k, rate.phi
    out = np.empty(len(s_values))
    interior = np.zeros(len(s_values), dtype=bool)
    for j, s in enumerate(s_values):
        vals = -s * k - phi
        i = int(np.argmax(vals))
        if 0 < i < len(k) - 1:
            interior[j] = True
            x = k[i - 1:i + 2]
            y = vals[i - 1:i + 2]
            a, b, _ = np.polyfit(x - x[1], y, 2)
            out[j] = y[1] - b * b / (4 * a) if a < 0 else y[1]
        else:
            out[j] = vals[i]
    return out, interior
