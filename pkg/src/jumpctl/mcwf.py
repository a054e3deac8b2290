"""Quantum-jump trajectories of the (controlled) V system.

Every emission resets the atom to ``|0>`` and restarts the control clock,
so each waiting time is drawn by the norm-threshold rule: draw u in (0, 1],
follow the conditional no-jump state, and jump when its squared norm first
drops below u. The no-jump path after a reset is the same every time. It is
evaluated once on a micro-step grid (used only to bracket crossings) and
propagated exactly from the last pulse instant for the bisection, so pulses
fire exactly at multiples of ``delta_t``.

Trajectory ``i`` of a run with seed ``seed`` draws its uniforms from the
stream ``SeedSequence([seed, i])``, so batches, chunks and threads all
reproduce the serial result.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import linops
from .errors import DomainError
from .model import ControlPolicy, ModelParams, control_unitary, effective_hamiltonian, no_jump_state
from .xens import ControlledDynamics

MICRO_STEP = 1e-3
TIME_TOL = 1e-9
UNIFORM_BLOCK = 256
SURVIVAL_FLOOR = 1e-16
MAX_HORIZON = 1e6
STARTS = ("reset", "stationary")


@dataclass
class TrajectoryRecord:
    seed: int
    t_max: float
    jump_times: list = field(default_factory=list)
    control_applications: list = field(default_factory=list)
    index: int = 0
    start_age: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TrajectoryRecord":
        return cls(**json.loads(line))


class NoJumpPath:
    """Conditional no-jump state after a reset, with pulses at multiples of ``delta_t``."""

    def __init__(self, p: ModelParams, policy: ControlPolicy, horizon: float,
                 micro_step: float = MICRO_STEP):
        if micro_step <= 0:
            raise DomainError("micro_step must be positive")
        self.params = p
        self.policy = policy
        self.micro_step = micro_step
        Heff = effective_hamiltonian(p)
        self.eps, self.V = np.linalg.eig(Heff)
        self.Vinv = np.linalg.inv(self.V)
        self.dt = policy.delta_t if policy.controlled else math.inf
        n_pulses = 0
        if policy.controlled:
            n_pulses = int(min(policy.pulses, math.floor(horizon / self.dt)))
        self.n_pulses = n_pulses
        psi = np.array([1, 0, 0], dtype=complex)
        starts = [psi]
        if n_pulses:
            U = control_unitary(policy, p)
            step = U @ linops.expm(-1j * Heff, self.dt)
            for _ in range(n_pulses):
                psi = step @ psi
                starts.append(psi)
        self.coef = np.array([self.Vinv @ v for v in starts])
        self.horizon = horizon
        self.grid = np.arange(0.0, horizon + micro_step, micro_step)
        norms = np.empty_like(self.grid)
        for a in range(0, len(self.grid), 100_000):
            norms[a:a + 100_000] = self.norm2(self.grid[a:a + 100_000])
        # survival is non-increasing; clip rounding noise so searchsorted sees sorted data
        self.norms = np.minimum.accumulate(norms)

    def segment(self, tau):
        if self.n_pulses == 0:
            return np.zeros(np.shape(tau), dtype=int)
        return np.minimum(np.floor(np.asarray(tau) / self.dt).astype(int), self.n_pulses)

    def psi(self, tau):
        """Unnormalized state at times ``tau`` (array), shape ``tau.shape + (3,)``."""
        tau = np.asarray(tau, dtype=float)
        m = self.segment(tau)
        local = tau - m * self.dt if self.n_pulses else tau
        phases = np.exp(-1j * local[..., None] * self.eps)
        return (phases * self.coef[m]) @ self.V.T

    def norm2(self, tau):
        amp = self.psi(tau)
        return (amp.real ** 2 + amp.imag ** 2).sum(axis=-1)

    def first_crossing(self, level):
        """Smallest tau with squared norm below ``level`` (inf beyond the horizon)."""
        level = np.asarray(level, dtype=float)
        i = np.searchsorted(-self.norms, -level, side="right")
        out = np.full(level.shape, np.inf)
        ok = i < len(self.grid)
        if not ok.any():
            return out
        i = np.maximum(i[ok], 1)
        lo, hi = self.grid[i - 1], self.grid[i]
        lev = level[ok]
        n_iter = max(1, int(math.ceil(math.log2(self.micro_step / TIME_TOL))))
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self.norm2(mid) < lev
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        out[ok] = hi
        return out


def _survival_horizon(path_factory_norm, start=1.0):
    t = start
    while path_factory_norm(t) > SURVIVAL_FLOOR:
        t *= 2
        if t > MAX_HORIZON:
            raise DomainError("survival does not decay within the maximum horizon")
    return t


class JumpSampler:
    """Shared precomputation for many trajectories of one (params, policy, t_max)."""

    def __init__(self, p: ModelParams, policy: ControlPolicy, t_max: float,
                 micro_step: float = MICRO_STEP, start: str = "reset"):
        if not t_max > 0:
            raise DomainError(f"t_max must be positive, got {t_max}")
        if start not in STARTS:
            raise DomainError(f"start must be one of {STARTS}, got {start!r}")
        self.params = p
        self.policy = policy
        self.t_max = float(t_max)
        self.start = start
        self.micro_step = micro_step
        age_cap = 0.0
        if start == "stationary":
            probe = NoJumpPath(p, policy, 0.0, micro_step)
            age_cap = _survival_horizon(lambda t: float(probe.norm2(np.array([t]))[0]))
        self.path = NoJumpPath(p, policy, age_cap + self.t_max, micro_step)
        if start == "stationary":
            n_age = int(round(age_cap / micro_step)) + 1
            S = self.path.norms[:n_age]
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (S[1:] + S[:-1]) * micro_step)])
            self._age_grid = self.path.grid[:n_age]
            self._age_cdf = cum / cum[-1]
            self.mean_waiting_time = cum[-1]

    def _ages(self, u):
        # inverse of the equilibrium age law S(a) / mean, linear within a cell
        return np.interp(u, self._age_cdf, self._age_grid)

    def run(self, seed: int, indices):
        """Jump times for trajectories ``indices``.

        Returns (per-trajectory list of jump-time arrays, start ages).
        """
        indices = np.asarray(indices, dtype=np.int64)
        n = len(indices)
        gens = [np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(i)])))
                for i in indices]
        buf = np.array([g.random(UNIFORM_BLOCK) for g in gens]).reshape(n, UNIFORM_BLOCK)
        ptr = np.zeros(n, dtype=np.int64)

        def draw(rows):
            for r in rows[ptr[rows] >= UNIFORM_BLOCK]:
                buf[r] = gens[r].random(UNIFORM_BLOCK)
                ptr[r] = 0
            u = 1.0 - buf[rows, ptr[rows]]
            ptr[rows] += 1
            return u

        rows = np.arange(n)
        last = np.zeros(n)
        scale = np.ones(n)
        ages = np.zeros(n)
        if self.start == "stationary" and n:
            ages = self._ages(1.0 - draw(rows))
            last = -ages
            scale = self.path.norm2(ages)
        who, when = [], []
        active = rows
        while active.size:
            level = draw(active) * scale[active]
            t_jump = last[active] + self.path.first_crossing(level)
            hit = t_jump <= self.t_max
            who.append(active[hit])
            when.append(t_jump[hit])
            last[active[hit]] = t_jump[hit]
            scale[active] = 1.0
            active = active[hit]
        who = np.concatenate(who) if who else np.zeros(0, dtype=int)
        when = np.concatenate(when) if when else np.zeros(0)
        order = np.argsort(who, kind="stable")
        who, when = who[order], when[order]
        bounds = np.searchsorted(who, np.arange(n + 1))
        return [when[bounds[j]:bounds[j + 1]] for j in range(n)], ages

    def control_times(self, jumps, age=0.0):
        """Pulse instants: multiples of delta_t after each renewal, up to ``repeats`` per period."""
        if not self.policy.controlled:
            return []
        dt, M = self.policy.delta_t, self.policy.pulses
        renewals = np.concatenate([[-age], jumps])
        ends = np.concatenate([jumps, [self.t_max]])
        out = []
        for j, (r, e) in enumerate(zip(renewals, ends)):
            final = j == len(jumps)
            m = 1
            while m <= M:
                t = r + m * dt
                if t > e or (t == e and not final):
                    break
                if t > 0:
                    out.append(float(t))
                m += 1
        return out

    def records(self, seed: int, indices):
        jumps, ages = self.run(seed, indices)
        return [
            TrajectoryRecord(
                seed=int(seed), t_max=self.t_max, jump_times=[float(t) for t in jt],
                control_applications=self.control_times(jt, age), index=int(i),
                start_age=float(age),
            )
            for i, jt, age in zip(indices, jumps, ages)
        ]

    def counts(self, seed: int, n_traj: int, workers: int = 1, chunk: int = 1000):
        """Emission count of each of ``n_traj`` trajectories."""
        chunks = [np.arange(a, min(a + chunk, n_traj)) for a in range(0, n_traj, chunk)]

        def job(idx):
            jumps, _ = self.run(seed, idx)
            return np.array([len(j) for j in jumps], dtype=np.int64)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(job, chunks))
        else:
            parts = [job(c) for c in chunks]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def sample_trajectory(p: ModelParams, policy: ControlPolicy, t_max: float, seed: int,
                      index: int = 0, micro_step: float = MICRO_STEP,
                      start: str = "reset") -> TrajectoryRecord:
    return JumpSampler(p, policy, t_max, micro_step, start).records(seed, [index])[0]


def sample_trajectories(p: ModelParams, policy: ControlPolicy, t_max: float, n_traj: int,
                        seed: int, micro_step: float = MICRO_STEP, start: str = "reset"):
    return JumpSampler(p, policy, t_max, micro_step, start).records(seed, np.arange(n_traj))


def survival(p: ModelParams, policy: ControlPolicy, t: float) -> float:
    """Exact probability of no emission during [0, t] after a reset."""
    return ControlledDynamics(policy, p).survival(t)


def occupations(p: ModelParams, t: float):
    psi = no_jump_state(p, t).state
    return tuple(float(x) for x in np.abs(psi) ** 2)


@dataclass
class EmissionHistogram:
    t: float
    n_traj: int
    K: np.ndarray
    count: np.ndarray
    scaled_log_prob: np.ndarray
    samples: np.ndarray

    def rows(self):
        return zip(self.K, self.count, self.scaled_log_prob)

    @property
    def fano(self):
        return float(self.samples.var(ddof=1) / self.samples.mean())


def emission_histogram(p: ModelParams, policy: ControlPolicy, t: float, n_traj: int, seed: int,
                       micro_step: float = MICRO_STEP, start: str = "reset",
                       workers: int = 1) -> EmissionHistogram:
    """Distribution of the number of emissions in [0, t] over ``n_traj`` trajectories.

    ``scaled_log_prob`` is ``-(1/t) log(count / n_traj)``; only observed K are listed.
    """
    if n_traj < 1:
        raise DomainError("n_traj must be >= 1")
    samples = JumpSampler(p, policy, t, micro_step, start).counts(seed, n_traj, workers)
    K, count = np.unique(samples, return_counts=True)
    return EmissionHistogram(t, n_traj, K, count, -np.log(count / n_traj) / t, samples)


def binned_counts(record: TrajectoryRecord, bin_width: float = 0.5):
    """Emission counts of one trajectory in consecutive bins of ``bin_width``."""
    n_bins = max(1, int(math.ceil(record.t_max / bin_width)))
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(record.jump_times, bins=edges)
    return edges[:-1], counts
