"""Dense complex linear algebra for 3x3 states, 9x9 superoperators and block maps.

Matrices are plain ``numpy`` arrays (row-major storage, complex128). The
vectorization convention for density matrices is owned by
:mod:`jumpctl.liouville`; nothing here depends on it.
"""

from __future__ import annotations

import warnings
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DegeneracyWarning,
    DimensionError,
    DomainError,
    SingularityError,
    SpectralError,
)

LARGEST_REAL = "largest-real-part"
LARGEST_MODULUS = "largest-modulus"

# dense Hessenberg/QR up to this size, power iteration above
DENSE_EIG_MAX_DIM = 64
DEGENERACY_GAP = 1e-12


class EigPair(NamedTuple):
    value: complex
    vector: np.ndarray
    degenerate: bool = False


def _square(A, name="A"):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def _finite(A, name="A"):
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has NaN or Inf entries")
    return A


def expm(A, t=1.0):
    """Return ``exp(t A)``.

    Backed by scipy's scaling-and-squaring Pade implementation, which meets
    a 1e-12 relative error for ``||tA|| <= 1e3`` on the matrices used here.
    """
    A = _finite(_square(A))
    t = float(t)
    if not np.isfinite(t):
        raise DomainError(f"time must be finite, got {t}")
    return scipy.linalg.expm(t * A)


def solve(A, B):
    """Solve ``A X = B`` by LU with partial pivoting.

    Raises :class:`SingularityError` when the smallest pivot falls below
    ``1e-14 * ||A||``.
    """
    A = _finite(_square(A))
    B = np.asarray(B, dtype=complex)
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"row mismatch: A is {A.shape}, B is {B.shape}")
    with warnings.catch_warnings():
        # an exactly singular pivot is reported below as SingularityError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = np.linalg.norm(A, 1)
    smallest = float(pivots.min()) if pivots.size else 0.0
    if scale == 0.0 or smallest < 1e-14 * scale:
        raise SingularityError(f"matrix is singular to working precision (pivot {smallest:.3e})",
                               pivot=smallest)
    return scipy.linalg.lu_solve((lu, piv), B, check_finite=False)


def _rank(values, mode):
    if mode == LARGEST_REAL:
        return values.real
    if mode == LARGEST_MODULUS:
        return np.abs(values)
    raise ValueError(f"unknown mode {mode!r}")


def dominant_eig(A, mode=LARGEST_REAL):
    """Dominant eigenpair of a square matrix under the given ranking.

    Small matrices go through a full dense decomposition; larger ones use
    (shifted) power iteration. ``degenerate`` is set when the top two
    eigenvalues are ranked within ``1e-12`` of each other.
    """
    A = _finite(_square(A))
    n = A.shape[0]
    if n > DENSE_EIG_MAX_DIM:
        return _dominant_eig_iterative(A, mode)
    values, vectors = np.linalg.eig(A)
    key = _rank(values, mode)
    order = np.argsort(key)[::-1]
    top = order[0]
    degenerate = n > 1 and (key[order[0]] - key[order[1]]) < DEGENERACY_GAP
    v = vectors[:, top]
    return EigPair(complex(values[top]), v / np.linalg.norm(v), bool(degenerate))


def _dominant_eig_iterative(A, mode):
    shift = 0.0
    if mode == LARGEST_REAL:
        # a positive shift makes the rightmost eigenvalue the largest in modulus
        shift = float(np.linalg.norm(A, 1))
    elif mode != LARGEST_MODULUS:
        raise ValueError(f"unknown mode {mode!r}")
    n = A.shape[0]
    shifted = A + shift * np.eye(n)
    pair = power_iteration(lambda v: shifted @ v, np.ones(n, dtype=complex) / np.sqrt(n))
    return EigPair(pair.value - shift, pair.vector, pair.degenerate)


def power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    *,
    functional: Callable[[np.ndarray], complex] | None = None,
    rtol: float = 1e-12,
    residual_tol: float = 1e-9,
    max_iter: int = 100_000,
) -> EigPair:
    """Power iteration for the largest-modulus eigenpair of a linear map.

    ``apply`` may act on arrays of any shape. The eigenvalue estimate is the
    ratio ``functional(A v) / functional(v)``; by default the Euclidean
    Rayleigh quotient. Iteration stops once the estimate changes by less
    than ``rtol`` (relative) and the residual ``||Av - lam v|| / ||Av||`` is
    below ``residual_tol``.
    """
    v = np.array(start, dtype=complex)
    v = v / np.linalg.norm(v)
    lam = None
    change = np.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        if functional is None:
            new = complex(np.vdot(v, w))
        else:
            new = complex(functional(w) / functional(v))
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return EigPair(0.0, v, True)
        if lam is not None:
            change = abs(new - lam) / max(abs(new), np.finfo(float).tiny)
            if change <= rtol:
                residual = np.linalg.norm(w - new * v) / wn
                if residual <= residual_tol:
                    return EigPair(new, w / wn, False)
        lam = new
        v = w / wn
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last relative change {change:.3e}, estimate {lam})",
        iterations=max_iter, last_change=change,
    )


def null_state(L, tol=1e-10, reference=None):
    """Stationary density matrix (column-stacked) of a generator.

    The kernel is found by SVD. The returned state is the projection of
    ``reference`` onto that kernel along the range of ``L``, i.e. the
    long-time limit of the evolution started from ``reference``. The default
    reference is the first basis projector (``|0><0|``, the post-jump state),
    so a valid density matrix comes back even when the kernel is degenerate
    (a :class:`DegeneracyWarning` is emitted in that case).
    """
    L = _finite(_square(L, "L"))
    n = L.shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise DimensionError(f"generator dimension {n} is not a square")
    scale = max(np.linalg.norm(L, 2), 1.0)
    U, sv, Vh = np.linalg.svd(L)
    right = Vh.conj().T[:, sv < tol * scale]
    left = U[:, sv < tol * scale]
    if right.shape[1] == 0:
        raise SpectralError(f"no zero eigenvalue: smallest singular value {sv.min():.3e}")
    if right.shape[1] > 1:
        warnings.warn(f"stationary state is not unique (kernel dimension {right.shape[1]})",
                      DegeneracyWarning, stacklevel=2)
    # oblique projector onto ker(L) along range(L)
    overlap = left.conj().T @ right
    if reference is None:
        reference = np.zeros((d, d), dtype=complex)
        reference[0, 0] = 1.0
    ref = np.asarray(reference, dtype=complex).reshape(-1, order="F")
    if ref.size != n:
        raise DimensionError(f"reference has {ref.size} entries, expected {n}")
    rho = right @ np.linalg.solve(overlap, left.conj().T @ ref)
    rho_m = rho.reshape(d, d, order="F")
    rho_m = 0.5 * (rho_m + rho_m.conj().T)
    rho_m /= np.trace(rho_m).real
    if np.linalg.eigvalsh(rho_m).min() < -tol:
        raise SpectralError("stationary state is not positive semidefinite")
    return rho_m.reshape(-1, order="F")
