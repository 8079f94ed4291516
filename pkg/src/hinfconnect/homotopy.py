"""Explicit paths between controllers of the H-infinity sublevel set.

Within one component a path is built in lifted coordinates: the convex part
``(X, Y, Ahat, Bhat, Chat, Dhat)`` is interpolated linearly and ``Pi`` moves
along a path of invertible matrices with fixed determinant sign; ``Xi`` is
recomputed from the coupling identity at every sample.  Every sample is
mapped back to a controller and checked independently.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_square, check_positive
from .analysis import hinf_norm, in_kgamma
from .errors import (BridgeInfeasibleError, InvalidInputError,
                     NotABridgeError, NumericalFailure, PreconditionError)
from .liftmap import (LiftedPoint, component_sign, lift, reconstruct,
                      transform_lifted)
from .model import augment_reduced, check_compatible, close_loop, similarity_transform
from .numerics import DEFAULT_TOL, polar_decompose, special_orthogonal_path

CONNECTED = "connected"
DIFFERENT = "different-components"
BRIDGED = "bridged"
FAILED = "failed"

_REFINE_FRACTION = 0.1


def _reflection(n):
    R = np.eye(n)
    R[0, 0] = -1.0
    return R


def gl_path(M0, M1, t, tol=DEFAULT_TOL):
    """Point at ``t`` on a path of invertible matrices from ``M0`` to ``M1``.

    Both endpoints are split into polar factors ``Q S``; the orthogonal
    factor follows the rotation geodesic and the positive factor a straight
    line.  Negative-determinant endpoints are first multiplied by the
    reflection ``diag(-1, 1, ..., 1)``, which is undone at the end.
    """
    M0 = as_square(M0, "M0")
    M1 = as_square(M1, "M1")
    if M0.shape != M1.shape:
        raise InvalidInputError("M0 and M1 must have equal shapes")
    s0, s1 = np.sign(np.linalg.det(M0)), np.sign(np.linalg.det(M1))
    if s0 == 0 or s1 == 0:
        raise InvalidInputError("endpoints must be invertible")
    if s0 != s1:
        raise InvalidInputError("endpoints have opposite determinant signs")
    t = float(t)
    R = _reflection(M0.shape[0]) if s0 < 0 else np.eye(M0.shape[0])
    Q0, S0 = polar_decompose(R @ M0, tol)
    Q1, S1 = polar_decompose(R @ M1, tol)
    Q = special_orthogonal_path(Q0, Q1, t, tol)
    return R @ Q @ ((1.0 - t) * S0 + t * S1)


def _rel_err(K, K_ref):
    A, B = K.matrix(), K_ref.matrix()
    return float(np.max(np.abs(A - B), initial=0.0)
                 / max(1.0, np.max(np.abs(B), initial=0.0)))


@dataclass(frozen=True)
class PathSample:
    t: float
    controller: object
    hinf: float
    sign: int


@dataclass
class PathResult:
    status: str
    samples: list = field(default_factory=list)
    witness_T: np.ndarray = None
    endpoint_errors: tuple = (float("nan"), float("nan"))
    failing_t: float = None
    gamma: float = None

    @property
    def max_hinf(self):
        return max((s.hinf for s in self.samples), default=float("nan"))

    @property
    def margin(self):
        """``gamma - max_t ||T(t)||_inf`` over the emitted samples."""
        return self.gamma - self.max_hinf


def _check_sample(plant, K, gamma, strictly_proper, tol):
    """H-infinity value of ``K``'s loop, or ``None`` when ``K`` is not a member."""
    if not in_kgamma(plant, K, gamma, strictly_proper, tol):
        return None
    try:
        value = hinf_norm(close_loop(plant, K), tol).value
    except (NumericalFailure, PreconditionError):
        return None
    return value if value < gamma else None


def _lifted_at(Za, Zb, t, tol):
    fp = Za.fpoint.blend(Zb.fpoint, t)
    Pi = gl_path(Za.Pi, Zb.Pi, t, tol)
    return LiftedPoint.from_fpoint(fp, Pi)


def _segment(plant, Za, Zb, gamma, ts, strictly_proper, tol):
    """Verified samples along the lifted segment; stops at the first failure."""
    samples = []
    for t in ts:
        Z = _lifted_at(Za, Zb, t, tol)
        K = reconstruct(plant, Z, tol)
        value = _check_sample(plant, K, gamma, strictly_proper, tol)
        if value is None:
            return samples, float(t)
        samples.append(PathSample(float(t), K, float(value), component_sign(Z, tol)))
    return samples, None


def _refine(plant, Za, Zb, gamma, samples, strictly_proper, tol, rounds):
    """Insert midpoints where adjacent H-infinity values jump by more than
    a tenth of the remaining slack."""
    for _ in range(rounds):
        inserted = False
        out = [samples[0]]
        for a, b in zip(samples, samples[1:]):
            slack = gamma - max(a.hinf, b.hinf)
            if abs(a.hinf - b.hinf) > _REFINE_FRACTION * slack:
                mid, fail = _segment(plant, Za, Zb, gamma, [0.5 * (a.t + b.t)],
                                     strictly_proper, tol)
                if fail is not None:
                    return out, fail
                out.extend(mid)
                inserted = True
            out.append(b)
        samples = out
        if not inserted:
            break
    return samples, None


def _ts(n_samples):
    n_samples = int(n_samples)
    if n_samples < 1:
        raise InvalidInputError("n_samples must be at least 1")
    return np.linspace(0.0, 1.0, n_samples + 1)


def _require_member(plant, K, gamma, strictly_proper, tol, name):
    check_compatible(plant, K)
    if not in_kgamma(plant, K, gamma, strictly_proper, tol):
        raise PreconditionError(f"{name} is not in the H-infinity set at gamma={gamma:g}")


def connect_lifted(plant, Z0, Z1, gamma, n_samples=100, strictly_proper=False,
                   refine=0, tol=DEFAULT_TOL):
    """Verified path between two lifted points of the same component."""
    if component_sign(Z0, tol) != component_sign(Z1, tol):
        raise InvalidInputError("lifted endpoints lie in different components")
    samples, fail = _segment(plant, Z0, Z1, gamma, _ts(n_samples),
                             strictly_proper, tol)
    if fail is None and refine:
        samples, fail = _refine(plant, Z0, Z1, gamma, samples, strictly_proper,
                                tol, refine)
    return samples, fail


def connect(plant, K0, K1, gamma, n_samples=100, seed=0, refine=0, tol=DEFAULT_TOL):
    """Join two members of the H-infinity set by a verified sampled path.

    When the lifted endpoints lie in different components the result has
    status ``different-components`` and ``witness_T = diag(1, ..., 1, -1)``;
    its samples then join ``K0`` to ``T_W(K1)``, the image of ``K1`` under
    the coordinate change ``W`` that lands in ``K0``'s component.
    """
    gamma = check_positive(gamma, "gamma")
    strictly_proper = K0.strictly_proper and K1.strictly_proper
    _require_member(plant, K0, gamma, strictly_proper, tol, "K0")
    _require_member(plant, K1, gamma, strictly_proper, tol, "K1")
    Z0 = lift(plant, K0, gamma, seed=seed, tol=tol)
    Z1 = lift(plant, K1, gamma, seed=seed, tol=tol)
    status, target, witness = CONNECTED, K1, None
    if component_sign(Z0, tol) != component_sign(Z1, tol):
        witness = np.eye(plant.n_x)
        witness[-1, -1] = -1.0
        Z1 = transform_lifted(Z1, witness, tol)
        target = similarity_transform(K1, witness, tol)
        status = DIFFERENT
    samples, fail = connect_lifted(plant, Z0, Z1, gamma, n_samples,
                                   strictly_proper, refine, tol)
    if fail is not None:
        return PathResult(FAILED, samples, witness, failing_t=fail, gamma=gamma)
    errors = (_rel_err(samples[0].controller, K0),
              _rel_err(samples[-1].controller, target))
    return PathResult(status, samples, witness, errors, gamma=gamma)


def transform_path(plant, path, T, gamma, seed=0, tol=DEFAULT_TOL):
    """Map every sample of ``path`` through the similarity ``T``.

    Each image is re-verified and independently re-lifted to record its
    component sign; for ``det T < 0`` the signs flip.
    """
    gamma = check_positive(gamma, "gamma")
    T = as_square(T, "T")
    samples = []
    for s in path.samples:
        K = similarity_transform(s.controller, T, tol)
        strictly_proper = s.controller.strictly_proper
        value = _check_sample(plant, K, gamma, strictly_proper, tol)
        if value is None:
            return PathResult(FAILED, samples, T, failing_t=s.t, gamma=gamma)
        sign = component_sign(lift(plant, K, gamma, seed=seed, tol=tol), tol)
        samples.append(PathSample(s.t, K, float(value), sign))
    ends = (path.samples[0].controller, path.samples[-1].controller)
    errors = tuple(_rel_err(samples[i].controller,
                            similarity_transform(ends[i], T, tol)) for i in (0, -1))
    return PathResult(path.status, samples, T, errors, gamma=gamma)


def _flip(n):
    T = np.eye(n)
    T[-1, -1] = -1.0
    return T


def dual_lift_fixed_point(plant, K_aug, gamma, seed=0, tol=DEFAULT_TOL):
    """Lifts of a bridge controller into both components: ``(Z_plus, Z_minus)``.

    ``K_aug`` must be invariant under the similarity ``diag(I, -1)``; then
    the flipped lift still reconstructs to ``K_aug``.
    """
    gamma = check_positive(gamma, "gamma")
    check_compatible(plant, K_aug)
    T = _flip(plant.n_x)
    if _rel_err(similarity_transform(K_aug, T, tol), K_aug) > 1e-10:
        raise NotABridgeError("controller is not fixed by diag(I, -1)")
    if not in_kgamma(plant, K_aug, gamma, K_aug.strictly_proper, tol):
        raise BridgeInfeasibleError(
            f"bridge controller is not in the H-infinity set at gamma={gamma:g}")
    Z = lift(plant, K_aug, gamma, seed=seed, tol=tol)
    Z_other = transform_lifted(Z, T, tol)
    if component_sign(Z, tol) > 0:
        return Z, Z_other
    return Z_other, Z


def connect_via_bridge(plant, K0, K1, gamma, K_red, n_samples=100, seed=0,
                       refine=0, tol=DEFAULT_TOL):
    """Join ``K0`` and ``K1`` through the padded reduced-order controller.

    ``K_red`` of order ``n_x - 1`` is padded with a decoupled stable state;
    that controller lifts into both components, so each endpoint is joined
    to it inside its own component.  Times run over ``[0, 1/2]`` for the
    first leg and ``[1/2, 1]`` for the second.
    """
    gamma = check_positive(gamma, "gamma")
    K_aug = augment_reduced(K_red, plant.n_x)
    # The path stays strictly proper only if all three controllers are.
    strictly_proper = (K0.strictly_proper and K1.strictly_proper
                       and K_aug.strictly_proper)
    _require_member(plant, K0, gamma, strictly_proper, tol, "K0")
    _require_member(plant, K1, gamma, strictly_proper, tol, "K1")
    if not in_kgamma(plant, K_aug, gamma, strictly_proper, tol):
        raise BridgeInfeasibleError(
            f"padded bridge controller is not in the H-infinity set at gamma={gamma:g}")
    Z_plus, Z_minus = dual_lift_fixed_point(plant, K_aug, gamma, seed, tol)
    bridge = {1: Z_plus, -1: Z_minus}
    Z0 = lift(plant, K0, gamma, seed=seed, tol=tol)
    Z1 = lift(plant, K1, gamma, seed=seed, tol=tol)

    first, fail = connect_lifted(plant, Z0, bridge[component_sign(Z0, tol)], gamma,
                                 n_samples, strictly_proper, refine, tol)
    if fail is not None:
        return PathResult(FAILED, first, failing_t=0.5 * fail, gamma=gamma)
    second, fail = connect_lifted(plant, bridge[component_sign(Z1, tol)], Z1, gamma,
                                  n_samples, strictly_proper, refine, tol)
    first = [PathSample(0.5 * s.t, s.controller, s.hinf, s.sign) for s in first]
    second = [PathSample(0.5 + 0.5 * s.t, s.controller, s.hinf, s.sign)
              for s in second]
    if fail is not None:
        return PathResult(FAILED, first + second, failing_t=0.5 + 0.5 * fail,
                          gamma=gamma)
    # Both legs meet at K_aug; keep one copy of the junction.
    samples = first + second[1:]
    errors = (_rel_err(samples[0].controller, K0),
              _rel_err(samples[-1].controller, K1))
    return PathResult(BRIDGED, samples, None, errors, gamma=gamma)


__all__ = [
    "PathResult", "PathSample", "gl_path", "connect", "connect_lifted",
    "transform_path", "dual_lift_fixed_point", "connect_via_bridge",
    "CONNECTED", "DIFFERENT", "BRIDGED", "FAILED",
]
