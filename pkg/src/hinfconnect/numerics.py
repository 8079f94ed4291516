"""Dense linear-algebra kernels.

Everything here is a pure function of its (finite, real) inputs.  The
eigen and Schur work is delegated to LAPACK through numpy/scipy; the
Riccati solver assembles its own Hamiltonian and extracts the stable
invariant subspace from an ordered real Schur form so that indefinite
quadratic terms (needed by the bounded-real equation) are supported.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._validation import as_matrix, as_square
from .errors import (InvalidInputError, NoStabilizingSolutionError,
                     PreconditionError, SingularInputError)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances threaded through every module.

    eig_tol
        Relative threshold for "eigenvalue on the imaginary axis" and for
        numerical rank decisions.
    lmi_margin
        Relative strictness margin: ``M < 0`` is accepted when
        ``lambda_max(M) < -lmi_margin * (1 + max|M_ij|)``.
    bisect_tol
        Relative width of the H-infinity bisection bracket.
    stability_margin
        A matrix is Hurwitz when its spectral abscissa is below
        ``-stability_margin``.
    """

    eig_tol: float = 1e-9
    lmi_margin: float = 1e-8
    bisect_tol: float = 1e-6
    stability_margin: float = 1e-8

    def __post_init__(self):
        for name in ("eig_tol", "lmi_margin", "bisect_tol", "stability_margin"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidInputError(f"tolerance {name} must be positive")


DEFAULT_TOL = Tolerances()


def sym(M):
    """Symmetric part of a square matrix."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def max_abs(M):
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


def min_eig_sym(M):
    """Smallest eigenvalue of the symmetric part of ``M``."""
    M = as_square(M, "M")
    return float(np.linalg.eigvalsh(sym(M))[0])


def max_eig_sym(M):
    M = as_square(M, "M")
    return float(np.linalg.eigvalsh(sym(M))[-1])


def lmi_slack(M):
    """Return ``(lambda_max(M), required)`` for a strict ``M < 0`` test.

    The inequality is accepted when ``lambda_max < -required``; ``required``
    is the relative margin factor ``1 + max|M_ij|`` (multiply by
    ``Tolerances.lmi_margin``).
    """
    M = sym(M)
    return max_eig_sym(M), 1.0 + max_abs(M)


def is_negative_definite(M, tol=DEFAULT_TOL):
    lam, scale = lmi_slack(M)
    return lam < -tol.lmi_margin * scale


def is_positive_definite(M, tol=DEFAULT_TOL):
    return is_negative_definite(-np.asarray(M, dtype=float), tol)


def spectral_abscissa(A):
    """Largest real part over the eigenvalues of ``A``."""
    A = as_square(A, "A")
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A, tol=DEFAULT_TOL):
    return spectral_abscissa(A) < -tol.stability_margin


def solve_lyapunov(A, Q, tol=DEFAULT_TOL):
    """Solve ``A^T P + P A + Q = 0`` for Hurwitz ``A`` (Bartels-Stewart)."""
    A = as_square(A, "A")
    Q = sym(as_square(Q, "Q"))
    if Q.shape != A.shape:
        raise InvalidInputError("A and Q must have equal shapes")
    if not is_hurwitz(A, tol):
        raise PreconditionError("solve_lyapunov requires a Hurwitz matrix")
    return sym(sla.solve_continuous_lyapunov(A.T, -Q))


def solve_riccati(A, G, Q, tol=DEFAULT_TOL, stabilizing=True):
    """Stabilizing solution of ``A^T P + P A - P G P + Q = 0``.

    ``G`` and ``Q`` are symmetric but may be indefinite.  The solution is
    read off the stable invariant subspace of the Hamiltonian
    ``[[A, -G], [-Q, -A^T]]`` obtained from a real Schur form whose
    left-half-plane eigenvalues are reordered to the top.  On success
    ``A - G P`` is Hurwitz.  With ``stabilizing=False`` the antistable
    subspace is used instead and ``A - G P`` is anti-Hurwitz.
    """
    A = as_square(A, "A")
    n = A.shape[0]
    G = sym(as_square(G, "G"))
    Q = sym(as_square(Q, "Q"))
    if G.shape != (n, n) or Q.shape != (n, n):
        raise InvalidInputError("A, G, Q must share their dimension")
    H = np.block([[A, -G], [-Q, -A.T]])
    scale = max(1.0, np.linalg.norm(H, 1))
    eigs = np.linalg.eigvals(H)
    if np.any(np.abs(eigs.real) <= tol.eig_tol * scale):
        raise NoStabilizingSolutionError(
            "Hamiltonian has eigenvalues on the imaginary axis")
    T, Z, sdim = sla.schur(H, output="real",
                           sort="lhp" if stabilizing else "rhp")
    if sdim != n:
        raise NoStabilizingSolutionError(
            f"invariant subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1.0 / (np.finfo(float).eps * 1e2):
        raise NoStabilizingSolutionError("stable subspace is not a graph")
    P = np.linalg.solve(U1.T, U2.T).T
    if not np.all(np.isfinite(P)):
        raise NoStabilizingSolutionError("Riccati solution is not finite")
    return sym(P)


def solve_care(A, B, Q, R, tol=DEFAULT_TOL):
    """Stabilizing solution of ``A^T P + P A - P B R^{-1} B^T P + Q = 0``."""
    A = as_square(A, "A")
    B = as_matrix(B, "B")
    R = sym(as_square(R, "R"))
    if B.shape[0] != A.shape[0] or R.shape[0] != B.shape[1]:
        raise InvalidInputError("inconsistent CARE dimensions")
    if min_eig_sym(R) <= 0:
        raise InvalidInputError("R must be positive definite")
    G = B @ np.linalg.solve(R, B.T)
    return solve_riccati(A, G, Q, tol)


def polar_decompose(M, tol=DEFAULT_TOL):
    """Right polar factors ``M = Q S`` with ``Q`` orthogonal and ``S > 0``."""
    M = as_square(M, "M")
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= tol.eig_tol * max(1.0, sv[0]):
        raise SingularInputError("polar decomposition of a singular matrix")
    Q, S = sla.polar(M, side="right")
    return Q, sym(S)


def _rotation_blocks(R):
    """Canonical planes and angles of a rotation matrix.

    Returns ``(Z, planes)`` where ``Z`` is orthogonal and each entry of
    ``planes`` is ``(i, j, theta)``: a rotation by ``theta`` in the plane
    spanned by columns ``i, j`` of ``Z``.  Eigenvalue pairs at ``-1`` are
    paired in Schur order and always assigned ``theta = +pi``.
    """
    n = R.shape[0]
    T, Z = sla.schur(R, output="real")
    planes = []
    flipped = []
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 1e-13:
            s = 0.5 * (T[i + 1, i] - T[i, i + 1])
            c = 0.5 * (T[i, i] + T[i + 1, i + 1])
            planes.append((i, i + 1, float(np.arctan2(s, c))))
            i += 2
        else:
            if T[i, i] < 0:
                flipped.append(i)
            i += 1
    if len(flipped) % 2:
        raise InvalidInputError("relative rotation has determinant -1")
    for a, b in zip(flipped[::2], flipped[1::2]):
        planes.append((a, b, float(np.pi)))
    return Z, planes


def _check_rotation(Q, name, tol):
    Q = as_square(Q, name)
    n = Q.shape[0]
    if max_abs(Q.T @ Q - np.eye(n)) > 1e3 * tol.eig_tol:
        raise InvalidInputError(f"{name} is not orthogonal")
    if np.linalg.det(Q) <= 0:
        raise InvalidInputError(f"{name} must have determinant +1")
    return Q


def rotation_log(R, tol=DEFAULT_TOL):
    """Principal real logarithm (skew-symmetric) of a rotation matrix."""
    R = _check_rotation(R, "R", tol)
    Z, planes = _rotation_blocks(R)
    L = np.zeros_like(R)
    for i, j, theta in planes:
        L[j, i], L[i, j] = theta, -theta
    return Z @ L @ Z.T


def special_orthogonal_path(Q0, Q1, t, tol=DEFAULT_TOL):
    """Point at ``t`` on the geodesic ``Q0 exp(t log(Q0^T Q1))`` in SO(n)."""
    Q0 = _check_rotation(Q0, "Q0", tol)
    Q1 = _check_rotation(Q1, "Q1", tol)
    if Q0.shape != Q1.shape:
        raise InvalidInputError("Q0 and Q1 must have equal shapes")
    t = float(t)
    Z, planes = _rotation_blocks(Q0.T @ Q1)
    E = np.eye(Q0.shape[0])
    for i, j, theta in planes:
        c, s = np.cos(t * theta), np.sin(t * theta)
        E[i, i], E[i, j], E[j, i], E[j, j] = c, -s, s, c
    return Q0 @ (Z @ E @ Z.T)
