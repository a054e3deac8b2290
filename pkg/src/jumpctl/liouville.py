"""Superoperators as 9x9 matrices.

Convention: column stacking, ``vec(rho) = rho.reshape(-1, order="F")``, so
that ``vec(A rho B) = kron(B.T, A) @ vec(rho)``. Every module that turns a
density matrix into a vector goes through :func:`vectorize`.
"""

from __future__ import annotations

import numpy as np

from . import linops
from .errors import DimensionError
from .model import DIM, ModelParams, build_hamiltonian, build_jump

SUPER_DIM = DIM * DIM


def vectorize(rho):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(v):
    v = np.asarray(v, dtype=complex).reshape(-1)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"length {v.size} is not a square")
    return v.reshape(d, d, order="F")


def sandwich(A, B):
    """Matrix of ``rho -> A rho B``."""
    return np.kron(np.asarray(B, dtype=complex).T, np.asarray(A, dtype=complex))


def trace_functional(d=DIM):
    """Row vector ``vec(I)^dag``: contracting it with ``vec(rho)`` gives ``Tr rho``."""
    return vectorize(np.eye(d)).conj()


def commutator(H):
    I = np.eye(H.shape[0])
    return sandwich(H, I) - sandwich(I, H)


def anticommutator(A):
    I = np.eye(A.shape[0])
    return sandwich(A, I) + sandwich(I, A)


def no_jump_generator(p: ModelParams):
    """R(.) = -i[H, .] - 1/2 {J^dag J, .}"""
    J = build_jump(p)
    return -1j * commutator(build_hamiltonian(p)) - 0.5 * anticommutator(J.conj().T @ J)


def jump_superop(p: ModelParams):
    """J(.) = J . J^dag"""
    J = build_jump(p)
    return sandwich(J, J.conj().T)


def lindbladian(p: ModelParams):
    return no_jump_generator(p) + jump_superop(p)


def tilted_lindbladian(p: ModelParams, s: float):
    """L_s = R + exp(-s) J; ``s = inf`` drops the jump term."""
    weight = 0.0 if s == np.inf else np.exp(-s)
    return no_jump_generator(p) + weight * jump_superop(p)


def unitary_superop(U):
    U = np.asarray(U, dtype=complex)
    return sandwich(U, U.conj().T)


def propagate(generator, t):
    """exp(t * generator) on the superoperator level."""
    return linops.expm(generator, t)
