"""Change of variables between controllers and the convexified set.

A controller ``K`` with bounded-real witness ``P`` is lifted to

    Z = (X, Y, Ahat, Bhat, Chat, Dhat, Pi, Xi)

with ``Xi Pi = I - Y X``; the first six entries satisfy LMIs that are
affine in them.  ``reconstruct`` maps any such ``Z`` back to a controller
through two block-triangular solves.  ``sign(det Pi)`` labels which of the
two components of the lifted set ``Z`` lives in.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from ._validation import as_square, check_positive
from .certify import (_h2_ok, bounded_real_matrix, bounded_real_witnesses,
                      centered_witnesses, certifies, h2_blocks, h2_certificate,
                      maximal_bounded_real_solution)
from .errors import (CertificateError, InvalidInputError,
                     NoStabilizingSolutionError, InvariantViolation, LiftError,
                     PreconditionError, SingularInputError)
from .model import (Controller, check_compatible, close_loop,
                    similarity_transform)
from .numerics import (DEFAULT_TOL, is_negative_definite,
                       is_positive_definite, lmi_slack, max_abs,
                       solve_lyapunov, sym)

_PERTURBATION_DRAWS = 20


@dataclass(frozen=True)
class FPoint:
    X: np.ndarray
    Y: np.ndarray
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Dhat: np.ndarray

    def __post_init__(self):
        for name in ("X", "Y", "Ahat", "Bhat", "Chat", "Dhat"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        object.__setattr__(self, "X", sym(self.X))
        object.__setattr__(self, "Y", sym(self.Y))

    def blend(self, other, t):
        """Convex combination ``(1 - t) self + t other``."""
        return FPoint(*[(1 - t) * a + t * b for a, b in
                        zip(self.as_tuple(), other.as_tuple())])

    def as_tuple(self):
        return (self.X, self.Y, self.Ahat, self.Bhat, self.Chat, self.Dhat)


@dataclass(frozen=True)
class LiftedPoint:
    X: np.ndarray
    Y: np.ndarray
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Dhat: np.ndarray
    Pi: np.ndarray
    Xi: np.ndarray

    def __post_init__(self):
        for name in ("X", "Y", "Ahat", "Bhat", "Chat", "Dhat", "Pi", "Xi"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def fpoint(self):
        return FPoint(self.X, self.Y, self.Ahat, self.Bhat, self.Chat, self.Dhat)

    def coupling_residual(self):
        """``max|Xi Pi - (I - Y X)|``."""
        n = self.X.shape[0]
        return max_abs(self.Xi @ self.Pi - (np.eye(n) - self.Y @ self.X))

    @classmethod
    def from_fpoint(cls, p, Pi=None):
        """Attach the factorization ``Xi = (I - Y X) Pi^{-1}`` (``Pi = I`` by default)."""
        n = p.X.shape[0]
        Pi = np.eye(n) if Pi is None else as_square(Pi, "Pi")
        Xi = np.linalg.solve(Pi.T, (np.eye(n) - p.Y @ p.X).T).T
        return cls(*p.as_tuple(), Pi, Xi)


def eval_M_gamma(plant, p, gamma):
    """The synthesis matrix ``M_gamma``; affine in the entries of ``p``."""
    A, B1, B2 = plant.A, plant.B1, plant.B2
    C1, C2 = plant.C1, plant.C2
    D11, D12, D21 = plant.D11, plant.D12, plant.D21
    n_x, n_w, n_u, n_y, n_z = plant.dims
    X, Y = p.X, p.Y
    Ah, Bh, Ch, Dh = p.Ahat, p.Bhat, p.Chat, p.Dhat
    if (X.shape != (n_x, n_x) or Y.shape != (n_x, n_x) or Ah.shape != (n_x, n_x)
            or Bh.shape != (n_x, n_y) or Ch.shape != (n_u, n_x)
            or Dh.shape != (n_u, n_y)):
        raise InvalidInputError("lifted variables do not match the plant")
    B2Ch = B2 @ Ch
    BhC2 = Bh @ C2
    M11 = A @ X + X @ A.T + B2Ch + B2Ch.T
    M12 = Ah.T + (A + B2 @ Dh @ C2)
    M13 = B1 + B2 @ Dh @ D21
    M14 = (C1 @ X + D12 @ Ch).T
    M22 = A.T @ Y + Y @ A + BhC2 + BhC2.T
    M23 = Y @ B1 + Bh @ D21
    M24 = (C1 + D12 @ Dh @ C2).T
    M33 = -gamma * np.eye(n_w)
    M34 = (D11 + D12 @ Dh @ D21).T
    M44 = -gamma * np.eye(n_z)
    return np.block([
        [M11, M12, M13, M14],
        [M12.T, M22, M23, M24],
        [M13.T, M23.T, M33, M34],
        [M14.T, M24.T, M34.T, M44],
    ])


def coupling_matrix(p):
    n = p.X.shape[0]
    return np.block([[p.X, np.eye(n)], [np.eye(n), p.Y]])


def in_F_gamma(plant, p, gamma, strictly_proper=False, tol=DEFAULT_TOL):
    if strictly_proper and max_abs(p.Dhat) > 1e-12:
        return False
    return (is_positive_definite(coupling_matrix(p), tol)
            and is_negative_definite(eval_M_gamma(plant, p, gamma), tol))


def _partition(P, n):
    return P[:n, :n], P[:n, n:]


def _lift_from_P(plant, K, P):
    n = plant.n_x
    A, B2, C2 = plant.A, plant.B2, plant.C2
    Y, Xi = _partition(P, n)
    Pinv = np.linalg.inv(P)
    X, Pi = Pinv[:n, :n], Pinv[n:, :n]
    DK, CK, BK, AK = K.D_K, K.C_K, K.B_K, K.A_K
    Ahat = (Y @ (A + B2 @ DK @ C2) @ X + Xi @ BK @ C2 @ X
            + Y @ B2 @ CK @ Pi + Xi @ AK @ Pi)
    Bhat = Y @ B2 @ DK + Xi @ BK
    Chat = DK @ C2 @ X + CK @ Pi
    return LiftedPoint(sym(X), sym(Y), Ahat, Bhat, Chat, DK.copy(), Pi, Xi)


def _xi_degenerate(P, n, tol):
    Xi = P[:n, n:]
    sv = np.linalg.svd(Xi, compute_uv=False)
    return sv[-1] <= np.sqrt(tol.eig_tol) * np.linalg.norm(P, 2)


def _perturbed_witness(P, ok, slack, n, rng, tol):
    """Shift the off-diagonal block of ``P`` until it is well invertible.

    ``slack`` bounds the step so the strict inequalities survive; the step
    is halved until ``ok`` re-verifies them.
    """
    for _ in range(_PERTURBATION_DRAWS):
        E, _ = np.linalg.qr(rng.standard_normal((n, n)))
        delta = 0.5 * slack
        while delta > 1e-3 * slack:
            Pt = P.copy()
            Pt[:n, n:] += delta * E
            Pt[n:, :n] += delta * E.T
            if ok(Pt) and not _xi_degenerate(Pt, n, tol):
                return Pt
            delta *= 0.5
    raise LiftError("could not perturb the witness to an invertible coupling block")


def _step_bound(sys, margin, P):
    gain = 2 * np.linalg.norm(sys.A, 2) + 2 * np.linalg.norm(sys.B, 2) + 1.0
    return min(margin / gain, float(np.linalg.eigvalsh(P)[0]))


_BLEND_WEIGHTS = np.concatenate([[0.0], np.logspace(-10, 0, 31)])


def _lifted_score(plant, Z, gamma, tol):
    """Smallest relative strictness margin of the lifted point (>1 passes)."""
    try:
        _check_lifted(Z, tol)
    except InvariantViolation:
        return -np.inf
    lam_m, s_m = lmi_slack(eval_M_gamma(plant, Z.fpoint, gamma))
    lam_c, s_c = lmi_slack(-coupling_matrix(Z))
    return min(-lam_m / s_m, -lam_c / s_c) / tol.lmi_margin


def _best_blend(plant, K, sys, gamma, cert, tol):
    """Blend the minimal witness towards the maximal one; keep the best lift."""
    try:
        P_max = maximal_bounded_real_solution(sys, gamma, cert.eps, tol)
    except NoStabilizingSolutionError:
        P_max = None
    weights = _BLEND_WEIGHTS if P_max is not None else _BLEND_WEIGHTS[:1]
    best, best_score = None, -np.inf
    for t in weights:
        P = cert.P if t == 0 else sym((1 - t) * cert.P + t * P_max)
        if t and not certifies(P, sys, gamma, tol):
            continue
        Z = _lift_from_P(plant, K, P)
        score = _lifted_score(plant, Z, gamma, tol)
        if score > best_score:
            best, best_score = (P, Z), score
    return best, best_score


def _balancing_transform(plant, K, tol):
    """Similarity making the controller block of the closed-loop Gramians
    equal and diagonal, or ``None`` when the loop is unstable."""
    n = plant.n_x
    sys = close_loop(plant, K)
    reg = tol.eig_tol * np.eye(2 * n)
    try:
        Wc = solve_lyapunov(sys.A.T, sys.B @ sys.B.T + reg * (1 + max_abs(sys.B)) ** 2, tol)
        Wo = solve_lyapunov(sys.A, sys.C.T @ sys.C + reg * (1 + max_abs(sys.C)) ** 2, tol)
        Lc = np.linalg.cholesky(sym(Wc[n:, n:]))
    except (PreconditionError, np.linalg.LinAlgError):
        return None
    U, sv, _ = np.linalg.svd(Lc.T @ Wo[n:, n:] @ Lc)
    if sv[-1] <= 0:
        return None
    return np.diag(sv**0.25) @ U.T @ np.linalg.inv(Lc)


def _in_balanced_coordinates(plant, K, tol, lift_fn, exc):
    """Lift ``T(K)`` for the balancing ``T`` and map the point back.

    The convex part of a lifted point does not depend on the controller
    realization, but the Riccati witnesses of badly scaled realizations are
    numerically unusable.  Re-raises ``exc`` if this also fails.
    """
    T = _balancing_transform(plant, K, tol)
    if T is None:
        raise exc
    try:
        out = lift_fn(similarity_transform(K, T, tol))
        Z = out[0] if isinstance(out, tuple) else out
        Z = transform_lifted(Z, np.linalg.inv(T), tol)
        _check_lifted(Z, tol)
    except (LiftError, CertificateError, InvariantViolation, SingularInputError):
        raise exc from None
    return (Z,) + out[1:] if isinstance(out, tuple) else Z


def lift(plant, K, gamma, P=None, seed=0, tol=DEFAULT_TOL):
    """Lift a member of the H-infinity set to the convexified coordinates.

    ``P`` defaults to the Riccati-based bounded-real certificates, tried in
    order of decreasing regularization.  For each, convex combinations of
    the minimal and maximal Riccati solutions are scanned and the one whose
    lifted point has the largest strict margins is kept.  When no blend
    clears the margins, analytic centers of the bounded-real set are used,
    then barrier ascent on the lifted margins, and finally small random
    moves of the off-diagonal block.  If all of that fails the controller
    is moved to balanced coordinates, lifted there and mapped back.  A
    caller-supplied witness is the only candidate (it is still verified).
    """
    gamma = check_positive(gamma, "gamma")
    check_compatible(plant, K)
    if P is not None:
        return _lift_riccati(plant, K, gamma, P, seed, tol)
    try:
        return _lift_riccati(plant, K, gamma, None, seed, tol)
    except (LiftError, CertificateError) as exc:
        return _in_balanced_coordinates(
            plant, K, tol, lambda Kb: _lift_riccati(plant, Kb, gamma, None, seed, tol), exc)


def _lift_riccati(plant, K, gamma, P, seed, tol):
    n = plant.n_x
    sys = close_loop(plant, K)
    rng = np.random.default_rng(seed)
    if P is not None:
        P = sym(as_square(P, "P"))
        if not certifies(P, sys, gamma, tol):
            raise LiftError("supplied P does not certify the controller")
        margin = -float(np.linalg.eigvalsh(sym(bounded_real_matrix(P, sys, gamma)))[-1])
        Z = _lift_from_P(plant, K, P)
        if not _xi_degenerate(P, n, tol) and _lifted_score(plant, Z, gamma, tol) > 1:
            return Z
        return _perturb_and_lift(plant, K, sys, gamma, P, margin, rng, tol)

    found = False
    fallback = []
    first = None
    for cert in bounded_real_witnesses(sys, gamma, tol):
        found = True
        first = first or cert
        best, score = _best_blend(plant, K, sys, gamma, cert, tol)
        if score > 1:
            return best[1]
        fallback.append((cert.P if best is None else best[0],
                         cert.lmi_margin_achieved))
    if not found:
        raise CertificateError(
            "no strict bounded-real certificate; gamma is too close to the norm")
    Z, P_center = _centered_lift(plant, K, sys, gamma, first, tol)
    if Z is not None:
        return Z
    Z = _ascent_lift(plant, K, gamma, first.P if P_center is None else P_center, tol)
    if Z is not None:
        return Z
    for P, margin in fallback:
        try:
            return _perturb_and_lift(plant, K, sys, gamma, P, margin, rng, tol)
        except LiftError:
            continue
    raise LiftError("no certificate produced a lifted point with strict margins")


def _centered_lift(plant, K, sys, gamma, cert, tol):
    """Lift from analytic centers of the bounded-real set around ``cert.P``.

    Riccati witnesses sit next to ``P = 0`` faces when the loop is weakly
    observable or controllable; centers keep half of the witness margin
    but move ``P`` well inside the cone.  Returns ``(Z, P)``; when no lift
    clears the margins ``Z`` is ``None`` and ``P`` the best-scoring center.
    """
    best, best_score = None, -np.inf
    for P in centered_witnesses(sys, gamma, cert.P, tol=tol):
        Z = _lift_from_P(plant, K, P)
        score = _lifted_score(plant, Z, gamma, tol)
        if score > 1:
            return Z, P
        if score > best_score:
            best, best_score = P, score
    return None, best


class _Cleared(Exception):
    pass


_ASCENT_ITERATIONS = 300
_OUTSIDE = 1e10


def _ascent_lift(plant, K, gamma, P0, tol):
    """Maximize a log-barrier of the lifted constraints over the witness.

    Both lifted constraints are congruences of the bounded-real ones by a
    factor that itself depends on ``P``, so no affine center targets them;
    quasi-Newton ascent on the barrier does.  Stops once the strict margins
    clear.
    """
    n2 = P0.shape[0]
    iu = np.triu_indices(n2)
    Z0 = _lift_from_P(plant, K, P0)
    s_m = 1.0 + max_abs(eval_M_gamma(plant, Z0.fpoint, gamma))
    s_c = 1.0 + max_abs(coupling_matrix(Z0))

    def unpack(q):
        P = np.zeros((n2, n2))
        P[iu] = q
        return P + np.triu(P, 1).T

    def barrier(q):
        try:
            Z = _lift_from_P(plant, K, unpack(q))
            a = np.linalg.eigvalsh(sym(-eval_M_gamma(plant, Z.fpoint, gamma)) / s_m)
            b = np.linalg.eigvalsh(sym(coupling_matrix(Z)) / s_c)
        except np.linalg.LinAlgError:
            return _OUTSIDE
        if a[0] <= 0 or b[0] <= 0:
            return _OUTSIDE
        return -float(np.log(a).sum() + np.log(b).sum())

    found = {}

    def check(q):
        Z = _lift_from_P(plant, K, unpack(q))
        if _lifted_score(plant, Z, gamma, tol) > 1:
            found["Z"] = Z
            raise _Cleared

    if barrier(P0[iu]) >= _OUTSIDE:
        return None
    try:
        optimize.minimize(barrier, P0[iu], method="BFGS", callback=check,
                          options={"maxiter": _ASCENT_ITERATIONS})
    except _Cleared:
        return found["Z"]
    return None


def _perturb_and_lift(plant, K, sys, gamma, P, margin, rng, tol):
    # Near-singular Xi or thin margins after the congruence: move P inside
    # the strict bounded-real cone until the lift clears them.
    n = plant.n_x
    P = _perturbed_witness(
        P, lambda Pt: (certifies(Pt, sys, gamma, tol)
                       and _lifted_score(plant, _lift_from_P(plant, K, Pt),
                                         gamma, tol) > 1),
        _step_bound(sys, margin, P), n, rng, tol)
    return _lift_from_P(plant, K, P)


def _check_lifted(Z, tol):
    n = Z.X.shape[0]
    bound = 1e-9 * (1 + np.linalg.norm(Z.Y, 2) * np.linalg.norm(Z.X, 2))
    if Z.coupling_residual() > bound:
        raise InvariantViolation("coupling identity Xi Pi = I - Y X violated")
    for name in ("Pi", "Xi"):
        M = getattr(Z, name)
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= tol.eig_tol * max(1.0, sv[0]):
            raise InvariantViolation(f"{name} is singular")
    if n and not is_positive_definite(coupling_matrix(Z), tol):
        raise InvariantViolation("[X, I; I, Y] is not positive definite")


def reconstruct(plant, Z, tol=DEFAULT_TOL):
    """Controller ``Phi(Z)`` obtained by two block-triangular solves."""
    A, B2, C2 = plant.A, plant.B2, plant.C2
    X, Y, Pi, Xi = Z.X, Z.Y, Z.Pi, Z.Xi
    for name, M in (("Pi", Pi), ("Xi", Xi)):
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= tol.eig_tol * max(1.0, sv[0]):
            raise SingularInputError(f"{name} is singular; Phi is undefined")
    D_K = Z.Dhat.copy()
    # Left factor [[I, 0], [Y B2, Xi]]: eliminate the first block row.
    B_mid = np.linalg.solve(Xi, Z.Bhat - Y @ B2 @ Z.Dhat)
    A_mid = np.linalg.solve(Xi, Z.Ahat - Y @ A @ X - Y @ B2 @ Z.Chat)
    # Right factor [[I, C2 X], [0, Pi]]: back-substitute the second column.
    C_K = np.linalg.solve(Pi.T, (Z.Chat - D_K @ C2 @ X).T).T
    A_K = np.linalg.solve(Pi.T, (A_mid - B_mid @ C2 @ X).T).T
    return Controller(A_K, B_mid, C_K, D_K)


def component_sign(Z, tol=DEFAULT_TOL):
    """``+1`` or ``-1``: the sign of ``det(Pi)``."""
    sign, logdet = np.linalg.slogdet(Z.Pi)
    if sign == 0 or logdet <= np.log(tol.eig_tol):
        raise InvariantViolation("det(Pi) vanishes; lifted point is degenerate")
    return int(sign)


def transform_lifted(Z, T, tol=DEFAULT_TOL):
    """``Pi <- T Pi``, ``Xi <- Xi T^{-1}``; realizes the controller similarity."""
    T = as_square(T, "T")
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] <= tol.eig_tol * max(1.0, sv[0]):
        raise SingularInputError("T is singular")
    Xi = np.linalg.solve(T.T, Z.Xi.T).T
    return replace(Z, Pi=T @ Z.Pi, Xi=Xi)


def congruence_factor(Z):
    """``T = [[X, I], [Pi, 0]]`` relating ``M_gamma`` to the bounded-real matrix."""
    n = Z.X.shape[0]
    return np.block([[Z.X, np.eye(n)], [Z.Pi, np.zeros((n, n))]])


def eval_M_lqg(plant, p, Gamma):
    """The two H2 synthesis blocks and ``trace(Gamma)`` at ``p`` (``Dhat = 0``)."""
    if max_abs(p.Dhat) > 1e-12:
        raise InvalidInputError("H2 synthesis blocks need Dhat = 0")
    A, B1, B2 = plant.A, plant.B1, plant.B2
    C1, C2, D12, D21 = plant.C1, plant.C2, plant.D12, plant.D21
    n_x, n_w, _, _, n_z = plant.dims
    Gamma = np.asarray(Gamma, dtype=float)
    if Gamma.shape != (n_z, n_z):
        raise InvalidInputError(f"Gamma must be {n_z}x{n_z}")
    X, Y, Ah, Bh, Ch = p.X, p.Y, p.Ahat, p.Bhat, p.Chat
    M11 = A @ X + X @ A.T + B2 @ Ch + (B2 @ Ch).T
    M22 = A.T @ Y + Y @ A + Bh @ C2 + (Bh @ C2).T
    M23 = Y @ B1 + Bh @ D21
    block1 = np.block([
        [M11, Ah.T + A, B1],
        [Ah + A.T, M22, M23],
        [B1.T, M23.T, -np.eye(n_w)],
    ])
    CX = C1 @ X + D12 @ Ch
    I = np.eye(n_x)
    block2 = np.block([
        [X, I, CX.T],
        [I, Y, C1.T],
        [CX, C1, Gamma],
    ])
    return block1, block2, float(np.trace(Gamma))


def in_F_lqg(plant, p, Gamma, gamma, tol=DEFAULT_TOL):
    block1, block2, tr = eval_M_lqg(plant, p, Gamma)
    return (is_negative_definite(block1, tol)
            and is_positive_definite(block2, tol)
            and gamma - tr > tol.lmi_margin * (1.0 + gamma))


_H2_SHARES = (0.25, 0.5, 0.1, 0.75, 0.03)


def lift_h2(plant, K, gamma, seed=0, tol=DEFAULT_TOL):
    """Lift a member of the LQG sublevel set; returns ``(Z, Gamma)``.

    Several splits of the slack ``gamma - ||T||_2^2`` between the Gramian
    regularization and the trace inequality are tried in turn, first in the
    given controller coordinates and then in balanced ones.
    """
    gamma = check_positive(gamma, "gamma")
    check_compatible(plant, K)
    try:
        return _lift_h2(plant, K, gamma, seed, tol)
    except (LiftError, CertificateError) as exc:
        return _in_balanced_coordinates(
            plant, K, tol, lambda Kb: _lift_h2(plant, Kb, gamma, seed, tol), exc)


def _lift_h2(plant, K, gamma, seed, tol):
    n = plant.n_x
    sys = close_loop(plant, K)
    rng = np.random.default_rng(seed)
    last = None
    for share in _H2_SHARES:
        try:
            cert = h2_certificate(plant, K, gamma, tol, share)
        except CertificateError as exc:
            last = exc
            continue
        Gamma = cert.Gamma

        def ok(Pt, Gamma=Gamma):
            if not _h2_ok(Pt, Gamma, sys, gamma, tol):
                return False
            Z = _lift_from_P(plant, K, Pt)
            try:
                _check_lifted(Z, tol)
            except InvariantViolation:
                return False
            return in_F_lqg(plant, Z.fpoint, Gamma, gamma, tol)

        P = cert.P
        if not _xi_degenerate(P, n, tol) and ok(P):
            return _lift_from_P(plant, K, P), Gamma
        margin = min(cert.lmi_margin_achieved, cert.pos_def_margin)
        try:
            P = _perturbed_witness(P, ok, _step_bound(sys, margin, P), n, rng, tol)
        except LiftError as exc:
            last = exc
            continue
        return _lift_from_P(plant, K, P), Gamma
    if isinstance(last, CertificateError):
        raise last
    raise LiftError("no H2 witness produced a lifted point with strict margins")


__all__ = [
    "FPoint", "LiftedPoint", "eval_M_gamma", "coupling_matrix", "in_F_gamma",
    "lift", "reconstruct", "component_sign", "transform_lifted",
    "congruence_factor", "eval_M_lqg", "in_F_lqg", "lift_h2", "h2_blocks",
]
