"""Controlled dynamics through the fixed-jump-number (x) ensemble.

Because every emission resets the atom to ``|0><0|`` and the control only
depends on the time since the last emission, the controlled process is a
renewal process. Its per-jump tilted map

    F_x = J Qhat_x,        Qhat_x = int_0^inf e^{-x tau} Q(tau) dtau,

has largest eigenvalue e^{g(x)}, and theta(s) is the functional inverse of g.
Q(tau) is the no-jump propagator with a pulse U inserted after every
elapsed ``delta_t`` (at most ``policy.repeats`` times).

F_x has rank one (its range is spanned by |0><0|), so its only nonzero
eigenvalue is the |0><0| coefficient of F_x |0><0|. g is evaluated that way.
This only needs Qhat_x applied to |0><0|, which for the repeated reset
converges on a wider x-range than the full matrix series: U' sends the
no-jump state back to |0>, so the slowest sector of U e^{dt R} is never
reached from a reset and must not limit the domain of g.
"""

from __future__ import annotations

import cmath
import math
import warnings

import numpy as np
import scipy.integrate
import scipy.optimize

from . import linops, liouville
from .errors import (
    AccuracyError,
    DegeneracyWarning,
    DivergenceError,
    DomainError,
    RangeError,
    SingularityError,
    SpectralError,
)
from .model import ControlPolicy, ModelParams, control_unitary, effective_hamiltonian
from .sens import LDCurve, curve_from_theta, derivatives

I9 = np.eye(liouville.SUPER_DIM, dtype=complex)
RHO0 = liouville.vectorize(np.diag([1.0, 0.0, 0.0]))
RADIUS_MARGIN = 1e-9
MAX_BRACKET = 1e6
KRYLOV_TOL = 1e-10
INVERSION_TOL = 1e-9


def krylov_basis(M, v, tol=KRYLOV_TOL):
    """Orthonormal basis (columns) of span{v, M v, M^2 v, ...} by Arnoldi.

    A new direction is kept only if it carries more than ``tol`` of the
    norm of the vector it came from.
    """
    basis = [v / np.linalg.norm(v)]
    while len(basis) < len(v):
        w = M @ basis[-1]
        scale = np.linalg.norm(w)
        for _ in range(2):
            for b in basis:
                w = w - b * np.vdot(b, w)
        nw = np.linalg.norm(w)
        if scale == 0.0 or nw <= tol * scale:
            break
        basis.append(w / nw)
    return np.column_stack(basis)


class ControlledDynamics:
    """Cached superoperators for one (policy, params) pair."""

    def __init__(self, policy: ControlPolicy, p: ModelParams):
        self.policy = policy
        self.params = p
        self.R = liouville.no_jump_generator(p)
        self.J = liouville.jump_superop(p)
        self.pulses = policy.pulses
        if self.pulses:
            self.dt = policy.delta_t
            self.U = control_unitary(policy, p)
            self.Us = liouville.unitary_superop(self.U)
            self.B = linops.expm(self.R, self.dt)
            self.UB = self.Us @ self.B
        self._powers = None
        self.matrix_abscissa = self._abscissa()
        if self.pulses == math.inf:
            # cycle map restricted to the sector reachable from a reset
            self._K = krylov_basis(self.UB, RHO0)
            self._UB_reach = self._K.conj().T @ self.UB @ self._K
            radius = np.abs(np.linalg.eigvals(self._UB_reach)).max()
            self.abscissa = math.log(radius) / self.dt if radius > 0 else -math.inf
        else:
            self.abscissa = self.matrix_abscissa

    # ---------------------------------------------------------- time domain

    def no_jump_map(self, tau: float) -> np.ndarray:
        if tau < 0:
            raise DomainError(f"tau must be >= 0, got {tau}")
        if not self.pulses or tau < self.dt:
            return linops.expm(self.R, tau)
        m = min(int(math.floor(tau / self.dt)), self.pulses)
        return linops.expm(self.R, tau - m * self.dt) @ np.linalg.matrix_power(self.UB, m)

    def survival(self, tau: float) -> float:
        rho0 = np.zeros(liouville.SUPER_DIM, dtype=complex)
        rho0[0] = 1.0
        return float((liouville.trace_functional() @ self.no_jump_map(tau) @ rho0).real)

    # ------------------------------------------------------- Laplace domain

    def _abscissa(self):
        """Infimum of x for which the Laplace integral of Q converges."""
        if self.pulses == math.inf:
            radius = np.abs(np.linalg.eigvals(self.UB)).max()
            return math.log(radius) / self.dt if radius > 0 else -math.inf
        return float(np.linalg.eigvals(self.R).real.max())

    def _check_domain(self, x):
        """Convergence of the full matrix transform."""
        if self.pulses == math.inf:
            radius = float(np.abs(np.linalg.eigvals(math.exp(-self.dt * x) * self.UB)).max())
            if radius >= 1 - RADIUS_MARGIN:
                raise DivergenceError(
                    f"repeated-pulse series diverges at x={x}: spectral radius {radius:.12g}",
                    spectral_radius=radius)
        elif x <= self.matrix_abscissa:
            raise DivergenceError(
                f"Laplace transform diverges at x={x} (abscissa {self.matrix_abscissa:.12g})",
                spectral_radius=math.exp(self.matrix_abscissa - x))

    def _resolvent(self, x):
        return linops.solve(x * I9 - self.R, I9)

    def _repeat_powers(self):
        # (U B)^{m-1} for m = 1..M, built once per instance
        if self._powers is None:
            P = np.empty((self.pulses, 9, 9), dtype=complex)
            P[0] = I9
            for m in range(1, self.pulses):
                P[m] = self.UB @ P[m - 1]
            self._powers = P
        return self._powers

    def segment_integral(self, x):
        """(int_0^dt e^{u(R - x)} du, e^{dt(R - x)}) from one augmented exponential."""
        n = liouville.SUPER_DIM
        A = np.zeros((2 * n, 2 * n), dtype=complex)
        A[:n, :n] = self.R - x * I9
        A[:n, n:] = I9
        E = linops.expm(A, self.dt)
        return E[:n, n:], E[:n, :n]

    def laplace_no_jump(self, x: float) -> np.ndarray:
        self._check_domain(x)
        if not self.pulses:
            return self._resolvent(x)
        if self.pulses == math.inf:
            # sum over pulses m of int_{m dt}^{(m+1) dt}: S_x (q U B)^m
            seg, qB = self.segment_integral(x)
            return seg @ linops.solve(I9 - self.Us @ qB, I9)
        q = math.exp(-self.dt * x)
        D = (I9 - self.Us) @ self.B
        if self.pulses == 1:
            bracket = I9 - q * D
        else:
            weights = q ** np.arange(1, self.pulses + 1)
            bracket = I9 - D @ np.tensordot(weights, self._repeat_powers(), axes=1)
        return self._resolvent(x) @ bracket

    def laplace_infinite_closed_form(self, x: float) -> np.ndarray:
        """(x - R)^{-1} (I - e^{dt(R - x)}) (I - U e^{dt(R - x)})^{-1}, the resummed form as usually displayed."""
        if self.pulses != math.inf:
            raise DomainError("closed form applies to the infinitely repeated policy only")
        self._check_domain(x)
        qB = math.exp(-self.dt * x) * self.B
        return self._resolvent(x) @ (I9 - qB) @ linops.solve(I9 - self.Us @ qB, I9)

    def tilted_map(self, x: float) -> np.ndarray:
        return self.J @ self.laplace_no_jump(x)

    def reset_transform(self, x: float) -> np.ndarray:
        """Qhat_x |0><0|, on the domain where the renewal series converges."""
        if self.pulses != math.inf:
            return self.laplace_no_jump(x) @ RHO0
        if x <= self.abscissa:
            radius = math.exp(self.dt * (self.abscissa - x))
            raise DivergenceError(
                f"renewal series diverges at x={x}: spectral radius {radius:.12g} "
                f"on the reachable sector", spectral_radius=radius)
        seg, _ = self.segment_integral(x)
        q = math.exp(-self.dt * x)
        K = self._K
        reduced = np.eye(K.shape[1]) - q * self._UB_reach
        return seg @ (K @ linops.solve(reduced, K.conj().T @ RHO0))

    def g(self, x: float) -> float:
        """log of the nonzero eigenvalue of the rank-one map F_x."""
        lam = complex((self.J @ self.reset_transform(x))[0])
        if lam.real <= 0 or abs(lam.imag) > 1e-9 * max(1.0, abs(lam)):
            raise SpectralError(f"dominant eigenvalue of F_x at x={x} is not real positive: {lam}")
        return math.log(lam.real)

    # ------------------------------------------------------------ inversion

    def _g_or_inf(self, x):
        try:
            return self.g(x)
        except (DivergenceError, SpectralError, SingularityError, ArithmeticError):
            return math.inf

    def theta(self, s: float) -> float:
        """theta(s) = g^{-1}(s), by bracketing and bisection on the decreasing g."""
        if self.params.gamma == 0:
            return 0.0
        g0 = self.g(0.0)
        if s > g0:
            lo, hi = self.abscissa, 0.0
            if not math.isfinite(lo):
                lo = -1.0
                while self._g_or_inf(lo) <= s:
                    lo *= 2
                    if lo < -MAX_BRACKET:
                        raise RangeError(f"s={s} exceeds the attainable range of g",
                                         attainable=(g0, self._g_or_inf(lo)))
        else:
            lo, hi = 0.0, 1.0
            while self.g(hi) >= s:
                lo, hi = hi, 2 * hi
                if hi > MAX_BRACKET:
                    raise RangeError(f"s={s} is below the attainable range of g",
                                     attainable=(self.g(hi), g0))
        for _ in range(300):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self._g_or_inf(mid) > s:
                lo = mid
            else:
                hi = mid
        reached = self._g_or_inf(hi)
        at_edge = hi - self.abscissa <= 1e-12 * max(1.0, abs(self.abscissa))
        if at_edge and reached < s - INVERSION_TOL * max(1.0, abs(s)):
            # g stays finite up to the edge of its domain and never reaches s
            raise RangeError(f"s={s} exceeds sup g = {reached:.12g} on x > {self.abscissa:.12g}",
                             attainable=(-math.inf, reached))
        return 0.5 * (lo + hi)


# ------------------------------------------------------------- module surface

def no_jump_map(policy: ControlPolicy, p: ModelParams, tau: float) -> np.ndarray:
    return ControlledDynamics(policy, p).no_jump_map(tau)


def laplace_no_jump(policy: ControlPolicy, p: ModelParams, x: float) -> np.ndarray:
    return ControlledDynamics(policy, p).laplace_no_jump(x)


def x_tilted_map(policy: ControlPolicy, p: ModelParams, x: float) -> np.ndarray:
    return ControlledDynamics(policy, p).tilted_map(x)


def g_of_x(policy: ControlPolicy, p: ModelParams, x: float) -> float:
    return ControlledDynamics(policy, p).g(x)


def controlled_scgf(policy: ControlPolicy, p: ModelParams, s: float) -> float:
    return ControlledDynamics(policy, p).theta(s)


def controlled_curve(policy: ControlPolicy, p: ModelParams, grid, workers=1) -> LDCurve:
    return curve_from_theta(ControlledDynamics(policy, p).theta, grid, workers)


def typical_statistics(policy: ControlPolicy, p: ModelParams):
    """(k(0), chi(0)): mean emission rate and scaled variance of the typical dynamics."""
    _, k, chi = derivatives(ControlledDynamics(policy, p).theta, 0.0)
    return k, chi


def g_curve(policy: ControlPolicy, p: ModelParams, x_grid):
    dyn = ControlledDynamics(policy, p)
    return np.array([dyn.g(x) for x in x_grid])


# ------------------------------------------------------- scalar renewal oracle

class WaitingTimeDensity:
    """w(t) = gamma |<1| exp(-i t H_eff) |0>|^2 from the 3x3 eigendecomposition of H_eff."""

    def __init__(self, p: ModelParams):
        self.gamma = p.gamma
        eps, V = np.linalg.eig(effective_hamiltonian(p))
        weights = V[1, :] * np.linalg.solve(V, np.eye(3)[:, 0])
        self._terms = [(complex(c), complex(-1j * e)) for c, e in zip(weights, eps)]
        self.decay_abscissa = float(2 * eps.imag.max())
        self.envelope = self.gamma * float(np.abs(weights).sum()) ** 2

    def __call__(self, t, x=0.0):
        """w(t) * exp(-x t), with the discount folded into the amplitudes to avoid overflow."""
        amp = sum(c * cmath.exp((r - 0.5 * x) * t) for c, r in self._terms)
        return self.gamma * (amp.real ** 2 + amp.imag ** 2)

    def laplace(self, x, tol=1e-14, max_horizon=1e7):
        kappa = x - self.decay_abscissa
        if kappa <= 0:
            raise DivergenceError(f"waiting-time Laplace transform diverges at x={x}")
        # integrand <= envelope * exp(-kappa t)
        horizon = max(math.log(max(self.envelope / (kappa * tol), 1.0)) / kappa, 1.0)
        if horizon > max_horizon:
            raise AccuracyError(f"tail not converged: horizon {horizon:.3g} exceeds {max_horizon:.3g}")
        f = lambda t: self(t, x)
        total, err = 0.0, 0.0
        a, b = 0.0, 1.0
        while a < horizon:
            b = min(b, horizon)
            val, e = scipy.integrate.quad(f, a, b, epsabs=tol, epsrel=1e-13, limit=400)
            total += val
            err += e
            a, b = b, 2 * b
        if err > 1e-10 * max(total, tol):
            raise AccuracyError(f"quadrature error estimate {err:.3e} too large for {total:.6g}")
        return total


def renewal_scalar_scgf(p: ModelParams, s: float) -> float:
    """theta(s) from exp(-s) What(x) = 1, with What the Laplace transform of the
    uncontrolled waiting-time density. Independent of the superoperator machinery."""
    if p.gamma == 0:
        warnings.warn("gamma = 0: no emissions, returning the theta = 0 branch",
                      DegeneracyWarning, stacklevel=2)
        return 0.0
    w = WaitingTimeDensity(p)
    f = lambda x: math.log(w.laplace(x)) - s
    a = w.decay_abscissa
    if f(0.0) >= 0:
        lo, hi = 0.0, 1.0
        while f(hi) > 0:
            lo, hi = hi, 2 * hi
            if hi > MAX_BRACKET:
                raise RangeError(f"no root for s={s}")
    else:
        hi, lo = 0.0, a / 2
        while f(lo) < 0:
            hi, lo = lo, a + (lo - a) / 2
            if lo - a < 1e-12:
                raise RangeError(f"no root for s={s}")
    return scipy.optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
