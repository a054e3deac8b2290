"""Discrete-time hybrid system-controller model of the repeated reset.

Time is cut into steps ``dt`` with the Kraus pair

    K0 = e^{-i dt H} sqrt(1 - dt J^dag J),    K1 = e^{-i dt H} sqrt(dt) J.

A classical clock with ``n = delta_t / dt`` states counts steps since the
last emission (or pulse). The joint state stays block diagonal in the clock,
so it is stored as an ``(n, 3, 3)`` array and the tilted transfer map is
applied block by block.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linops, xens
from .errors import AlignmentError, DomainError, SpectralError
from .model import DIM, ControlPolicy, ModelParams, PolicyKind, build_hamiltonian, build_jump, control_unitary

ALIGN_TOL = 1e-9
POSITIVITY_TOL = 1e-9


def kraus_pair(p: ModelParams, dt: float):
    """(K0, K1) for one time step; requires ``dt * gamma < 1``."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    J = build_jump(p)
    JdJ = J.conj().T @ J
    if dt * p.gamma >= 1:
        raise DomainError(f"dt={dt} must be below 1/gamma={1 / p.gamma:.6g}: "
                          "1 - dt J^dag J is not positive")
    # J^dag J is diagonal, so the square root is elementwise
    root = np.diag(np.sqrt(1.0 - dt * np.diag(JdJ).real)).astype(complex)
    W = linops.expm(-1j * build_hamiltonian(p), dt)
    return W @ root, math.sqrt(dt) * (W @ J)


def clock_states(delta_t: float, dt: float) -> int:
    ratio = delta_t / dt
    n = int(round(ratio))
    if abs(ratio - n) > ALIGN_TOL * max(1.0, ratio):
        raise AlignmentError(f"delta_t/dt = {ratio!r} is not an integer")
    if n < 2:
        raise AlignmentError(f"the clock needs n >= 2 states, got delta_t/dt = {ratio!r}")
    return n


@dataclass
class HybridStepMap:
    """Tilted one-step map on block-diagonal states ``rho[l]``, l = 0..n-1."""

    n: int
    dt: float
    s: float
    K0: np.ndarray
    K1: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self._K0h = self.K0.conj().T
        self._UK0 = self.U @ self.K0
        self._UK0h = self._UK0.conj().T
        self._K1h = self.K1.conj().T
        self._weight = 0.0 if self.s == math.inf else math.exp(-self.s)

    def __call__(self, blocks: np.ndarray) -> np.ndarray:
        blocks = np.asarray(blocks)
        if blocks.shape != (self.n, DIM, DIM):
            raise DomainError(f"expected blocks of shape {(self.n, DIM, DIM)}, got {blocks.shape}")
        out = np.empty_like(blocks, dtype=complex)
        out[1:] = self.K0 @ blocks[:-1] @ self._K0h
        out[0] = self._UK0 @ blocks[-1] @ self._UK0h
        out[0] += self._weight * (self.K1 @ blocks.sum(axis=0) @ self._K1h)
        return out

    def initial(self) -> np.ndarray:
        """Deterministic start: identity-proportional, uniform over clock states, unit trace."""
        return np.broadcast_to(np.eye(DIM, dtype=complex) / (DIM * self.n), (self.n, DIM, DIM)).copy()

    @staticmethod
    def total_trace(blocks) -> complex:
        return complex(np.trace(blocks, axis1=-2, axis2=-1).sum())


def _check_policy(policy: ControlPolicy):
    if policy.kind is not PolicyKind.REPEAT_RESET or policy.repeats != math.inf:
        raise DomainError("the hybrid controller implements the infinitely repeated reset only")


def hybrid_step(p: ModelParams, policy: ControlPolicy, dt: float, s: float) -> HybridStepMap:
    _check_policy(policy)
    n = clock_states(policy.delta_t, dt)
    K0, K1 = kraus_pair(p, dt)
    return HybridStepMap(n, dt, s, K0, K1, control_unitary(policy, p))


def discrete_scgf(p: ModelParams, policy: ControlPolicy, dt: float, s: float, *,
                  rtol: float = 1e-12, max_iter: int = 100_000) -> float:
    """ln(lambda_max) / dt of the tilted hybrid map, by power iteration."""
    step = hybrid_step(p, policy, dt, s)
    pair = linops.power_iteration(step, step.initial(), functional=HybridStepMap.total_trace,
                                  rtol=rtol, max_iter=max_iter)
    lam = pair.value
    if lam.real <= 0 or abs(lam.imag) > POSITIVITY_TOL * max(1.0, abs(lam)):
        raise SpectralError(f"dominant eigenvalue of the hybrid map is not real positive: {lam}")
    return math.log(lam.real) / dt


@dataclass
class ConvergenceStudy:
    s: np.ndarray
    delta_t: np.ndarray
    theta_discrete: np.ndarray
    theta_reference: np.ndarray

    @property
    def abs_err(self):
        return np.abs(self.theta_discrete - self.theta_reference)

    @property
    def rel_err(self):
        ref = np.abs(self.theta_reference)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ref > 0, self.abs_err / np.where(ref > 0, ref, 1.0), self.abs_err)

    def rows(self):
        return zip(self.s, self.delta_t, self.theta_discrete, self.theta_reference,
                   self.abs_err, self.rel_err)

    def _by_s(self):
        for s in np.unique(self.s):
            sel = self.s == s
            order = np.argsort(-self.delta_t[sel])  # coarse to fine
            yield s, self.delta_t[sel][order], self.abs_err[sel][order]

    def monotone(self):
        """{s: True if the error shrinks strictly with every refinement of dt}."""
        return {float(s): bool(np.all(np.diff(err) < 0)) for s, _, err in self._by_s()}

    def empirical_order(self):
        """{s: least-squares slope of log(abs_err) against log(dt)}."""
        out = {}
        for s, dts, err in self._by_s():
            ok = err > 0
            out[float(s)] = (float(np.polyfit(np.log(dts[ok]), np.log(err[ok]), 1)[0])
                             if ok.sum() >= 2 else math.nan)
        return out


def convergence_study(p: ModelParams, policy: ControlPolicy, s_grid, dt_list,
                      workers: int = 1) -> ConvergenceStudy:
    """theta^{dt}(s) against the continuous-time x-ensemble result for every (s, dt)."""
    _check_policy(policy)
    s_grid = [float(s) for s in s_grid]
    dt_list = [float(d) for d in dt_list]
    dyn = xens.ControlledDynamics(policy, p)
    reference = {s: dyn.theta(s) for s in s_grid}
    cells = [(s, d) for s in s_grid for d in dt_list]
    job = lambda cell: discrete_scgf(p, policy, cell[1], cell[0])
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(job, cells))
    else:
        values = [job(c) for c in cells]
    return ConvergenceStudy(
        np.array([c[0] for c in cells]), np.array([c[1] for c in cells]),
        np.array(values), np.array([reference[c[0]] for c in cells]),
    )


def marginal(blocks) -> np.ndarray:
    """System state with the controller traced out."""
    return np.asarray(blocks).sum(axis=0)


def block_superop(step: HybridStepMap) -> np.ndarray:
    """Dense (9n x 9n) matrix of the step map; for small-n checks only."""
    n = step.n
    basis = np.zeros((n, DIM, DIM), dtype=complex)
    cols = []
    # columns follow the C-order flattening of the (n, 3, 3) block array
    for idx in np.ndindex(basis.shape):
        basis[idx] = 1.0
        cols.append(step(basis).reshape(-1))
        basis[idx] = 0.0
    return np.array(cols).T


__all__ = [
    "HybridStepMap", "ConvergenceStudy", "kraus_pair", "hybrid_step", "discrete_scgf",
    "convergence_study", "clock_states", "marginal", "block_superop",
]
