"""Three-level V system: operators, no-jump evolution and control unitaries.

Basis order is ``|0>, |1>, |2>``. Level 1 decays to 0 with rate ``gamma``;
level 2 is the dark (shelving) state, driven from 0 by ``omega02``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import linops
from .errors import DegeneracyWarning, DomainError

DIM = 3
MAX_FINITE_REPEATS = 10_000


@dataclass(frozen=True)
class ModelParams:
    omega01: float = 1.0
    omega02: float = 0.1
    gamma: float = 4.0

    def __post_init__(self):
        for name in ("omega01", "omega02", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")


class PolicyKind(str, enum.Enum):
    NONE = "none"
    ROTATE_AWAY = "single_rotate_away"
    PI_HALF = "single_pi_half"
    REPEAT_RESET = "repeat_reset"


@dataclass(frozen=True)
class ControlPolicy:
    """Which feedback scheme runs after a no-jump interval ``delta_t``.

    ``repeats`` is the number of pulses allowed per no-jump period: 1 for
    the single-pulse kinds, ``M`` or ``math.inf`` for ``REPEAT_RESET``.
    ``unitary`` overrides the kind's default control unitary (used to pair
    a formula with a different pulse, e.g. the identity).
    """

    kind: PolicyKind = PolicyKind.NONE
    delta_t: float | None = None
    repeats: float = 1
    unitary: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.NONE:
            return
        if self.delta_t is None or not (self.delta_t > 0) or not math.isfinite(self.delta_t):
            raise DomainError(f"delta_t must be a positive finite time for {self.kind.value}")
        if self.kind is not PolicyKind.REPEAT_RESET and self.repeats != 1:
            raise DomainError(f"{self.kind.value} applies exactly one pulse")
        if self.repeats != math.inf:
            if self.repeats != int(self.repeats) or not 1 <= self.repeats <= MAX_FINITE_REPEATS:
                raise DomainError(f"repeats must be an integer in [1, {MAX_FINITE_REPEATS}] or inf")
            object.__setattr__(self, "repeats", int(self.repeats))
        if self.unitary is not None:
            U = np.asarray(self.unitary, dtype=complex)
            if U.shape != (DIM, DIM):
                raise DomainError(f"unitary must be {DIM}x{DIM}")
            object.__setattr__(self, "unitary", U)

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def rotate_away(cls, delta_t, unitary=None):
        return cls(PolicyKind.ROTATE_AWAY, float(delta_t), 1, unitary)

    @classmethod
    def pi_half(cls, delta_t, unitary=None):
        return cls(PolicyKind.PI_HALF, float(delta_t), 1, unitary)

    @classmethod
    def repeat_reset(cls, delta_t, repeats=math.inf, unitary=None):
        return cls(PolicyKind.REPEAT_RESET, float(delta_t), repeats, unitary)

    @property
    def controlled(self):
        return self.kind is not PolicyKind.NONE

    @property
    def pulses(self):
        """Maximum number of pulses per no-jump period (0, a count, or inf)."""
        return 0 if self.kind is PolicyKind.NONE else self.repeats

    def with_unitary(self, U):
        return ControlPolicy(self.kind, self.delta_t, self.repeats, U)


def build_hamiltonian(p: ModelParams) -> np.ndarray:
    H = np.zeros((DIM, DIM), dtype=complex)
    H[0, 1] = H[1, 0] = p.omega01
    H[0, 2] = H[2, 0] = p.omega02
    return H


def build_jump(p: ModelParams) -> np.ndarray:
    if p.gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {p.gamma}")
    J = np.zeros((DIM, DIM), dtype=complex)
    J[0, 1] = math.sqrt(p.gamma)
    return J


def effective_hamiltonian(p: ModelParams) -> np.ndarray:
    """``H - (i/2) J^dag J``, the generator of the conditional no-jump evolution."""
    J = build_jump(p)
    return build_hamiltonian(p) - 0.5j * (J.conj().T @ J)


class NoJumpState(NamedTuple):
    state: np.ndarray
    survival: float


def no_jump_state(p: ModelParams, t: float) -> NoJumpState:
    """Normalized ``exp(-i t H_eff)|0>`` and its squared norm."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    psi = linops.expm(-1j * effective_hamiltonian(p), t)[:, 0]
    norm2 = float(np.vdot(psi, psi).real)
    return NoJumpState(psi / math.sqrt(norm2), norm2)


def _frame(v):
    """Unitary whose first column is ``v``; remaining columns by Gram-Schmidt over e0, e1, e2."""
    cols = [v / np.linalg.norm(v)]
    for e in np.eye(DIM, dtype=complex):
        w = e.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for c in cols:
                w = w - c * np.vdot(c, w)
        nw = np.linalg.norm(w)
        if nw > 1e-8:
            cols.append(w / nw)
        if len(cols) == DIM:
            break
    return np.column_stack(cols)


def unitary_mapping(source, target):
    """A unitary taking unit vector ``source`` to unit vector ``target``.

    Deterministic: both vectors are completed to orthonormal frames in a
    fixed basis order and the frames are matched column by column.
    """
    return _frame(np.asarray(target, dtype=complex)) @ _frame(np.asarray(source, dtype=complex)).conj().T


def pi_half_unitary():
    """``exp[i (pi/2)(|0><2| + |2><0|)]``."""
    X02 = np.zeros((DIM, DIM), dtype=complex)
    X02[0, 2] = X02[2, 0] = 1.0
    return linops.expm(1j * (math.pi / 2) * X02)


def control_unitary(policy: ControlPolicy, p: ModelParams) -> np.ndarray:
    """Control pulse for ``policy``.

    ``ROTATE_AWAY`` maps ``|psi_dt> = a|0> + b|1> + c|2>`` to
    ``a|0> + sqrt(|b|^2+|c|^2)|1>``; ``REPEAT_RESET`` maps it to ``|0>``;
    ``PI_HALF`` is state independent. When ``b = c = 0`` there is nothing to
    reverse and the identity is returned with a :class:`DegeneracyWarning`.
    """
    if policy.unitary is not None:
        return policy.unitary
    if policy.kind is PolicyKind.NONE:
        raise DomainError("the uncontrolled policy has no control unitary")
    if policy.kind is PolicyKind.PI_HALF:
        return pi_half_unitary()
    psi = no_jump_state(p, policy.delta_t).state
    a, b, c = psi
    rest = math.sqrt(abs(b) ** 2 + abs(c) ** 2)
    if rest < 1e-14:
        warnings.warn("no-jump state is already |0>; returning identity control",
                      DegeneracyWarning, stacklevel=2)
        return np.eye(DIM, dtype=complex)
    if policy.kind is PolicyKind.ROTATE_AWAY:
        target = np.array([a, rest, 0.0], dtype=complex)
    else:
        target = np.array([1.0, 0.0, 0.0], dtype=complex)
    return unitary_mapping(psi, target)
