"""System norms and membership in the controller sets.

``hinf_norm`` brackets the H-infinity norm by bisection on the
bounded-real Hamiltonian: for a stable system, ``||T||_inf < gamma`` iff
``sigma_max(D) < gamma`` and the Hamiltonian built at level ``gamma`` has
no eigenvalue on the imaginary axis.  Membership tests evaluate that
criterion once at the requested level instead of bisecting.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .errors import InfiniteH2NormError, NumericalFailure, PreconditionError
from .model import close_loop
from .numerics import DEFAULT_TOL, is_hurwitz, max_abs, solve_lyapunov

STRICTLY_PROPER_ATOL = 1e-12

_SWEEP_POINTS = 200
_MAX_DOUBLINGS = 60
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class NormResult:
    value: float
    lo: float
    hi: float
    method: str


def _hamiltonian_batch(A, B, C, D, gamma):
    """Bounded-real Hamiltonians for stacked systems (leading batch axis).

    Returns ``(H, feasible)`` where ``feasible`` flags ``gamma > sigma_max(D)``;
    entries of ``H`` for infeasible members are meaningless.
    """
    n_w = B.shape[-1]
    DtD = np.swapaxes(D, -1, -2) @ D
    R = gamma**2 * np.eye(n_w) - DtD
    feasible = np.linalg.eigvalsh(R)[..., 0] > 0
    R = np.where(feasible[..., None, None], R, np.eye(n_w))
    Bt = np.swapaxes(B, -1, -2)
    Ct = np.swapaxes(C, -1, -2)
    RiDtC = np.linalg.solve(R, np.swapaxes(D, -1, -2) @ C)
    RiBt = np.linalg.solve(R, Bt)
    F = A + B @ RiDtC
    G = B @ RiBt
    Q = Ct @ C + Ct @ D @ np.linalg.solve(R, np.swapaxes(D, -1, -2) @ C)
    top = np.concatenate([F, G], axis=-1)
    bottom = np.concatenate([-Q, -np.swapaxes(F, -1, -2)], axis=-1)
    return np.concatenate([top, bottom], axis=-2), feasible


def _no_imaginary_eigs(H, tol):
    eigs = np.linalg.eigvals(H)
    scale = np.maximum(1.0, np.abs(H).sum(axis=-2).max(axis=-1))
    return ~np.any(np.abs(eigs.real) <= tol.eig_tol * scale[..., None], axis=-1)


def hinf_below_batch(A, B, C, D, gamma, tol=DEFAULT_TOL):
    """Vectorized ``||T||_inf < gamma`` for stacked *stable* systems."""
    H, feasible = _hamiltonian_batch(A, B, C, D, gamma)
    return feasible & _no_imaginary_eigs(H, tol)


def _below(sys, gamma, tol):
    return bool(hinf_below_batch(sys.A, sys.B, sys.C, sys.D, gamma, tol))


def _sweep_frequencies(A):
    mags = np.abs(np.linalg.eigvals(A))
    mags = mags[mags > 0]
    w_lo = mags.min() / 100 if mags.size else 1e-3
    w_hi = mags.max() * 100 if mags.size else 1e3
    return np.concatenate([[0.0], np.logspace(np.log10(w_lo), np.log10(w_hi),
                                              _SWEEP_POINTS)])


def sigma_max_at(sys, omegas):
    """Largest singular value of ``T(j omega)`` on a frequency grid."""
    n = sys.A.shape[0]
    eye = np.eye(n)
    out = np.empty(len(omegas))
    for i, w in enumerate(omegas):
        G = sys.C @ np.linalg.solve(1j * w * eye - sys.A, sys.B) + sys.D
        out[i] = np.linalg.norm(G, 2)
    return out


def hinf_norm(sys, tol=DEFAULT_TOL):
    """H-infinity norm of a stable closed loop, bracketed by bisection.

    ``value`` is the upper end of the bracket, so ``value < gamma`` is a
    safe strict-membership test.
    """
    if not is_hurwitz(sys.A, tol):
        raise PreconditionError("H-infinity norm requires a Hurwitz A matrix")
    sigma_d = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if max_abs(sys.B) == 0 or max_abs(sys.C) == 0:
        return NormResult(sigma_d, sigma_d, sigma_d, "hamiltonian-bisection")

    sweep = float(sigma_max_at(sys, _sweep_frequencies(sys.A)).max())
    lo = max(sigma_d, sweep)
    hi = 2 * sweep + sigma_d
    for _ in range(_MAX_DOUBLINGS):
        if _below(sys, hi, tol):
            break
        lo, hi = hi, 2 * hi
    else:
        raise NumericalFailure("no upper bound for the H-infinity norm found")

    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= tol.bisect_tol * hi:
            return NormResult(float(hi), float(lo), float(hi),
                              "hamiltonian-bisection")
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        if _below(sys, mid, tol):
            hi = mid
        else:
            lo = mid
    raise NumericalFailure("H-infinity bisection did not converge")


def h2_norm_squared(sys, tol=DEFAULT_TOL):
    """Squared H2 norm ``trace(B^T P_o B)`` from the observability Gramian."""
    if max_abs(sys.D) > STRICTLY_PROPER_ATOL:
        raise InfiniteH2NormError("H2 norm is infinite when D_cl != 0")
    if not is_hurwitz(sys.A, tol):
        raise PreconditionError("H2 norm requires a Hurwitz A matrix")
    Po = solve_lyapunov(sys.A, sys.C.T @ sys.C, tol)
    return float(np.trace(sys.B.T @ Po @ sys.B))


def in_cstab(plant, K, tol=DEFAULT_TOL):
    return is_hurwitz(close_loop(plant, K).A, tol)


def in_kgamma(plant, K, gamma, strictly_proper=False, tol=DEFAULT_TOL):
    """Stabilizing with closed-loop H-infinity norm strictly below ``gamma``."""
    gamma = check_positive(gamma, "gamma")
    if strictly_proper and not K.strictly_proper:
        return False
    sys = close_loop(plant, K)
    if not is_hurwitz(sys.A, tol):
        return False
    return _below(sys, gamma, tol)


def in_lgamma(plant, K, gamma, tol=DEFAULT_TOL):
    """Strictly proper, stabilizing, squared H2 norm strictly below ``gamma``."""
    gamma = check_positive(gamma, "gamma")
    if not K.strictly_proper:
        return False
    sys = close_loop(plant, K)
    if not is_hurwitz(sys.A, tol):
        return False
    return h2_norm_squared(sys, tol) < gamma
