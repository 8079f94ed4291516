"""Constructive LMI certificates for closed loops.

The bounded-real witness ``P`` comes from the stabilizing solution of the
bounded-real Riccati equation for the closed loop with its performance
output padded by ``eps * I``.  The padding makes the Riccati residual equal
to ``-eps**2 / gamma * I``, which turns the (non-strict) Riccati equality
into a strict matrix inequality at the original level ``gamma``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .analysis import STRICTLY_PROPER_ATOL, h2_norm_squared
from .errors import (CertificateError, NoStabilizingSolutionError,
                     PreconditionError)
from .model import close_loop
from .numerics import (DEFAULT_TOL, is_hurwitz, lmi_slack, max_abs,
                       min_eig_sym, solve_lyapunov, solve_riccati, sym)

_EPS_FLOOR = 1e-14
_DELTA_FLOOR = 1e-16


@dataclass(frozen=True)
class HinfCertificate:
    """``P > 0`` making the bounded-real block matrix negative definite."""

    P: np.ndarray
    gamma: float
    lmi_margin_achieved: float
    pos_def_margin: float
    eps: float = 0.0


@dataclass(frozen=True)
class H2Certificate:
    """``(P, Gamma)`` certifying ``||T||_2^2 < gamma`` for a strictly proper loop."""

    P: np.ndarray
    Gamma: np.ndarray
    gamma: float
    lmi_margin_achieved: float
    pos_def_margin: float
    trace_slack: float


def bounded_real_matrix(P, sys, gamma):
    """``[[A'P + PA, PB, C'], [B'P, -gamma I, D'], [C, D, -gamma I]]``."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n_z, n_w = D.shape
    return np.block([
        [A.T @ P + P @ A, P @ B, C.T],
        [B.T @ P, -gamma * np.eye(n_w), D.T],
        [C, D, -gamma * np.eye(n_z)],
    ])


def verify_bounded_real(P, sys, gamma):
    """Return ``(lambda_max(bounded-real matrix), lambda_min(P))``."""
    M = sym(bounded_real_matrix(P, sys, gamma))
    return float(np.linalg.eigvalsh(M)[-1]), min_eig_sym(P)


def certifies(P, sys, gamma, tol=DEFAULT_TOL):
    lam, scale = lmi_slack(bounded_real_matrix(P, sys, gamma))
    p_min = min_eig_sym(P)
    return (lam < -tol.lmi_margin * scale
            and p_min > tol.lmi_margin * (1.0 + max_abs(P)))


def _bounded_real_riccati(sys, gamma, eps, tol, stabilizing=True):
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n, n_w = A.shape[0], B.shape[1]
    R = gamma * np.eye(n_w) - D.T @ D / gamma
    Ri_DtC = np.linalg.solve(R, D.T @ C) / gamma
    F = A + B @ Ri_DtC
    G = -B @ np.linalg.solve(R, B.T)
    Q = (C.T @ C + C.T @ D @ Ri_DtC) / gamma + (eps**2 / gamma) * np.eye(n)
    return solve_riccati(F, G, Q, tol, stabilizing)


def maximal_bounded_real_solution(sys, gamma, eps, tol=DEFAULT_TOL):
    """Anti-stabilizing solution of the same regularized Riccati equation.

    It dominates the stabilizing one, so convex combinations of the two are
    interior witnesses that are better conditioned than either extreme.
    """
    return _bounded_real_riccati(sys, gamma, eps, tol, stabilizing=False)


def _check_bounded_real_inputs(sys, gamma, tol):
    gamma = check_positive(gamma, "gamma")
    if not is_hurwitz(sys.A, tol):
        raise PreconditionError("bounded-real certificate needs a stable loop")
    sigma_d = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if sigma_d >= gamma:
        raise CertificateError("gamma does not exceed sigma_max(D_cl)")
    return gamma


def inverse_bounded_real_matrix(Q, sys, gamma):
    """Bounded-real matrix for ``P = Q^{-1}`` after the congruence
    ``blockdiag(Q, I, I)``; affine in ``Q``."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n_z, n_w = D.shape
    return np.block([
        [A @ Q + Q @ A.T, B, Q @ C.T],
        [B.T, -gamma * np.eye(n_w), D.T],
        [C @ Q, D, -gamma * np.eye(n_z)],
    ])


_CENTER_RADII = (1.5, 3.0, 10.0, 100.0)


def centered_witnesses(sys, gamma, P0, share=0.5, tol=DEFAULT_TOL):
    """Verified witnesses at analytic centers of the bounded-real set.

    ``P0`` must satisfy the inequality (absolutely).  Centers are taken in
    ``P`` and in ``Q = P^{-1}``, inside balls of growing radius around the
    start, with a fraction ``share`` of ``P0``'s margins kept as a shift.
    Riccati witnesses hug faces of the set; centers are well inside it.
    """
    from .lmi import AffineLmi, VarSpec, analytic_center

    n2 = sys.A.shape[0]
    m = n2 + sys.B.shape[1] + sys.C.shape[0]
    spec = [VarSpec("P", (n2, n2), True)]
    Q0 = sym(np.linalg.inv(P0))
    for form, start in ((bounded_real_matrix, P0), (inverse_bounded_real_matrix, Q0)):
        mu = -share * float(np.linalg.eigvalsh(sym(form(start, sys, gamma)))[-1])
        mu_p = share * min_eig_sym(start)
        if not (mu > 0 and mu_p > 0):
            continue
        lmi = AffineLmi.from_functions(spec, [
            lambda v, form=form, mu=mu: form(v["P"], sys, gamma) + mu * np.eye(m),
            lambda v, mu_p=mu_p: mu_p * np.eye(n2) - v["P"]])
        z0 = lmi.pack({"P": start})
        for factor in _CENTER_RADII:
            z = analytic_center(lmi, z0, factor * (1.0 + float(np.linalg.norm(z0))))
            P = sym(lmi.unpack(z)["P"])
            if form is inverse_bounded_real_matrix:
                P = sym(np.linalg.inv(P))
            if certifies(P, sys, gamma, tol):
                yield P


def _certificate(P, sys, gamma, eps):
    lam, p_min = verify_bounded_real(P, sys, gamma)
    return HinfCertificate(P, gamma, -lam, p_min, eps)


def bounded_real_witnesses(sys, gamma, tol=DEFAULT_TOL):
    """Yield every verified certificate along the halving ``eps`` sequence.

    Callers that need more than strictness of the bounded-real LMI (for
    example margins after a congruence) pick from this sequence.  When no
    Riccati solution clears the relative margin but some satisfies the
    inequality, analytic centers started from the best one are tried.
    """
    gamma = _check_bounded_real_inputs(sys, gamma, tol)
    eps = 1.0 + float(np.linalg.norm(sys.C, 2))
    found, best, best_rel = False, None, -np.inf
    while eps >= _EPS_FLOOR:
        try:
            P = _bounded_real_riccati(sys, gamma, eps, tol)
        except NoStabilizingSolutionError:
            P = None
        if P is not None and certifies(P, sys, gamma, tol):
            found = True
            yield _certificate(P, sys, gamma, eps)
        elif P is not None and not found and min_eig_sym(P) > 0:
            lam, scale = lmi_slack(bounded_real_matrix(P, sys, gamma))
            if lam < 0 and -lam / scale > best_rel:
                best, best_rel = (P, eps), -lam / scale
        eps *= 0.5
    if not found and best is not None:
        for P in centered_witnesses(sys, gamma, best[0], tol=tol):
            yield _certificate(P, sys, gamma, best[1])
            return


def bounded_real_certificate_for(sys, gamma, tol=DEFAULT_TOL):
    """Certificate for a closed loop given directly as ``(A, B, C, D)``."""
    for cert in bounded_real_witnesses(sys, gamma, tol):
        return cert
    raise CertificateError(
        "no strict bounded-real certificate; gamma is too close to the norm")


def bounded_real_certificate(plant, K, gamma, tol=DEFAULT_TOL):
    """Witness ``P`` for ``K`` in the H-infinity set at level ``gamma``."""
    return bounded_real_certificate_for(close_loop(plant, K), gamma, tol)


def h2_blocks(P, Gamma, sys):
    n_w = sys.B.shape[1]
    block1 = np.block([[sys.A.T @ P + P @ sys.A, P @ sys.B],
                       [sys.B.T @ P, -np.eye(n_w)]])
    block2 = np.block([[P, sys.C.T], [sys.C, Gamma]])
    return sym(block1), sym(block2)


def verify_h2(P, Gamma, sys):
    """Return ``(lambda_max(block1), lambda_min(block2), trace(Gamma))``."""
    block1, block2 = h2_blocks(P, Gamma, sys)
    return (float(np.linalg.eigvalsh(block1)[-1]),
            float(np.linalg.eigvalsh(block2)[0]), float(np.trace(Gamma)))


def _h2_ok(P, Gamma, sys, gamma, tol):
    block1, block2 = h2_blocks(P, Gamma, sys)
    lam1, s1 = lmi_slack(block1)
    lam2, s2 = lmi_slack(-block2)
    slack = gamma - float(np.trace(Gamma))
    return (lam1 < -tol.lmi_margin * s1 and lam2 < -tol.lmi_margin * s2
            and slack > tol.lmi_margin * (1.0 + gamma))


def h2_certificate_for(sys, gamma, tol=DEFAULT_TOL, share=0.25):
    """H2 certificate for a closed loop given as ``(A, B, C, D)``.

    ``share`` is the fraction of ``gamma - ||T||_2^2`` spent on the Gramian
    regularization; the rest is left for the strict trace inequality.
    """
    gamma = check_positive(gamma, "gamma")
    if not 0 < share < 1:
        raise ValueError("share must lie in (0, 1)")
    h2 = h2_norm_squared(sys, tol)
    if h2 >= gamma:
        raise PreconditionError("squared H2 norm is not below gamma")
    A, B, C = sys.A, sys.B, sys.C
    n = A.shape[0]
    # Regularized controllability Gramian A Pc + Pc A' + BB' + eps^2 I = 0.
    Pc = solve_lyapunov(A.T, B @ B.T, tol)
    L = solve_lyapunov(A.T, np.eye(n), tol)
    spread = float(np.trace(C @ L @ C.T))
    eps2 = share * (gamma - h2) / spread if spread > 0 else 1.0
    Pc_eps = sym(Pc + eps2 * L)
    P = sym(np.linalg.inv(Pc_eps))
    S = sym(C @ Pc_eps @ C.T)
    n_z = S.shape[0]
    level = max(float(np.trace(S)) / n_z, 1e-12)
    # Spend half of the remaining trace budget on the diagonal shift first.
    delta = 0.5 * (gamma - float(np.trace(S))) / (level * n_z)
    while delta >= _DELTA_FLOOR:
        Gamma = S + delta * level * np.eye(n_z)
        if _h2_ok(P, Gamma, sys, gamma, tol):
            lam1, lam2, tr = verify_h2(P, Gamma, sys)
            return H2Certificate(P, Gamma, gamma, -lam1, lam2, gamma - tr)
        delta *= 0.5
    raise CertificateError("no strict H2 certificate with the configured margins")


def h2_certificate(plant, K, gamma, tol=DEFAULT_TOL, share=0.25):
    """Witness ``(P, Gamma)`` for ``K`` in the LQG strict sublevel set."""
    if max_abs(K.D_K) > STRICTLY_PROPER_ATOL:
        raise PreconditionError("H2 certificates need a strictly proper controller")
    return h2_certificate_for(close_loop(plant, K), gamma, tol, share)
