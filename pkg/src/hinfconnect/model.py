"""State-space data model: plants, full-order controllers, closed loops."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_square, check_shape
from .errors import InvalidInputError, SingularInputError
from .numerics import DEFAULT_TOL, min_eig_sym, sym


@dataclass(frozen=True)
class Plant:
    """Generalized plant

        dx/dt = A x + B1 w + B2 u
        z     = C1 x + D11 w + D12 u
        y     = C2 x + D21 w
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        n_x = self.A.shape[0]
        n_w, n_u = self.B1.shape[1], self.B2.shape[1]
        n_z, n_y = self.C1.shape[0], self.C2.shape[0]
        check_shape(self.A, (n_x, n_x), "A")
        check_shape(self.B1, (n_x, n_w), "B1")
        check_shape(self.B2, (n_x, n_u), "B2")
        check_shape(self.C1, (n_z, n_x), "C1")
        check_shape(self.C2, (n_y, n_x), "C2")
        check_shape(self.D11, (n_z, n_w), "D11")
        check_shape(self.D12, (n_z, n_u), "D12")
        check_shape(self.D21, (n_y, n_w), "D21")
        if min(n_x, n_w, n_u, n_y, n_z) < 1:
            raise InvalidInputError("all plant dimensions must be >= 1")

    @property
    def dims(self):
        """``(n_x, n_w, n_u, n_y, n_z)``."""
        return (self.A.shape[0], self.B1.shape[1], self.B2.shape[1],
                self.C2.shape[0], self.C1.shape[0])

    @property
    def n_x(self):
        return self.A.shape[0]

    def replace(self, **changes):
        fields = {name: getattr(self, name) for name in
                  ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21")}
        fields.update(changes)
        return Plant(**fields)


@dataclass(frozen=True)
class Controller:
    """Dynamic controller ``d(xi)/dt = A_K xi + B_K y``, ``u = C_K xi + D_K y``."""

    A_K: np.ndarray
    B_K: np.ndarray
    C_K: np.ndarray
    D_K: np.ndarray

    def __post_init__(self):
        for name in ("A_K", "B_K", "C_K", "D_K"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise InvalidInputError(f"{name} must be 2-D")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        n_k = self.A_K.shape[0]
        n_u, n_y = self.D_K.shape
        check_shape(self.A_K, (n_k, n_k), "A_K")
        check_shape(self.B_K, (n_k, n_y), "B_K")
        check_shape(self.C_K, (n_u, n_k), "C_K")

    @property
    def order(self):
        return self.A_K.shape[0]

    @property
    def io_dims(self):
        """``(n_u, n_y)``."""
        return self.D_K.shape

    def matrix(self):
        """Block form ``[[D_K, C_K], [B_K, A_K]]``."""
        return np.block([[self.D_K, self.C_K], [self.B_K, self.A_K]])

    @classmethod
    def from_matrix(cls, K, n_u, n_y):
        K = as_matrix(K, "K")
        return cls(A_K=K[n_u:, n_y:], B_K=K[n_u:, :n_y],
                   C_K=K[:n_u, n_y:], D_K=K[:n_u, :n_y])

    @property
    def strictly_proper(self):
        return bool(np.max(np.abs(self.D_K), initial=0.0) <= 1e-12)

    def __add__(self, other):
        return Controller(self.A_K + other.A_K, self.B_K + other.B_K,
                          self.C_K + other.C_K, self.D_K + other.D_K)

    def __mul__(self, alpha):
        alpha = float(alpha)
        return Controller(alpha * self.A_K, alpha * self.B_K,
                          alpha * self.C_K, alpha * self.D_K)

    __rmul__ = __mul__


def check_compatible(plant, K):
    n_x, _, n_u, n_y, _ = plant.dims
    if K.order != n_x:
        raise InvalidInputError(
            f"controller order {K.order} differs from plant order {n_x}")
    if K.io_dims != (n_u, n_y):
        raise InvalidInputError(
            f"controller maps {K.io_dims[1]} outputs to {K.io_dims[0]} inputs,"
            f" plant needs {n_y} -> {n_u}")


@dataclass(frozen=True)
class ClosedLoop:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        n = self.A.shape[0]
        check_shape(self.A, (n, n), "A_cl")
        check_shape(self.B, (n, self.D.shape[1]), "B_cl")
        check_shape(self.C, (self.D.shape[0], n), "C_cl")

    def freqresp(self, s):
        return freqresp(self.A, self.B, self.C, self.D, s)


def close_loop(plant, K):
    """Interconnect ``plant`` with the full-order controller ``K``."""
    check_compatible(plant, K)
    A, B1, B2 = plant.A, plant.B1, plant.B2
    C1, C2 = plant.C1, plant.C2
    D11, D12, D21 = plant.D11, plant.D12, plant.D21
    A_cl = np.block([[A + B2 @ K.D_K @ C2, B2 @ K.C_K],
                     [K.B_K @ C2, K.A_K]])
    B_cl = np.vstack([B1 + B2 @ K.D_K @ D21, K.B_K @ D21])
    C_cl = np.hstack([C1 + D12 @ K.D_K @ C2, D12 @ K.C_K])
    D_cl = D11 + D12 @ K.D_K @ D21
    return ClosedLoop(A_cl, B_cl, C_cl, D_cl)


def freqresp(A, B, C, D, s):
    """Evaluate ``C (sI - A)^{-1} B + D`` at the complex point ``s``."""
    n = A.shape[0]
    if n == 0:
        return np.asarray(D, dtype=complex)
    return C @ np.linalg.solve(s * np.eye(n) - A, B) + D


def _checked_inverse(T, tol):
    T = as_square(T, "T")
    sv = np.linalg.svd(T, compute_uv=False)
    if sv.size and sv[-1] <= tol.eig_tol * max(1.0, sv[0]):
        raise SingularInputError("similarity transformation is singular")
    return np.linalg.inv(T)


def similarity_transform(K, T, tol=DEFAULT_TOL):
    """Change controller coordinates: ``(T A T^-1, T B, C T^-1, D)``."""
    T = as_square(T, "T")
    if T.shape[0] != K.order:
        raise InvalidInputError("T must match the controller order")
    Tinv = _checked_inverse(T, tol)
    return Controller(T @ K.A_K @ Tinv, T @ K.B_K, K.C_K @ Tinv, K.D_K)


def _numerical_rank(M, tol):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > tol.eig_tol * sv[0]))


@dataclass(frozen=True)
class PBHReport:
    """Per-eigenvalue outcome of the PBH rank tests on ``(A, B2, C2)``."""

    eigenvalues: tuple
    controllable: tuple
    observable: tuple
    stabilizable: bool = field(init=False)
    detectable: bool = field(init=False)
    margin: float = 0.0

    def __post_init__(self):
        stab = all(ok for lam, ok in zip(self.eigenvalues, self.controllable)
                   if lam.real >= -self.margin)
        det = all(ok for lam, ok in zip(self.eigenvalues, self.observable)
                  if lam.real >= -self.margin)
        object.__setattr__(self, "stabilizable", stab)
        object.__setattr__(self, "detectable", det)


def _pbh(A, B, C, tol):
    n = A.shape[0]
    eigs = np.linalg.eigvals(A) if n else np.array([])
    ctrb, obsv = [], []
    for lam in eigs:
        shifted = A - lam * np.eye(n)
        ctrb.append(_numerical_rank(np.hstack([shifted, B]), tol) == n)
        obsv.append(_numerical_rank(np.vstack([shifted, C]), tol) == n)
    return eigs, ctrb, obsv


def check_stabilizable_detectable(plant, tol=DEFAULT_TOL):
    """PBH rank tests for stabilizability of (A, B2), detectability of (C2, A)."""
    eigs, ctrb, obsv = _pbh(plant.A, plant.B2, plant.C2, tol)
    return PBHReport(tuple(complex(e) for e in eigs), tuple(ctrb),
                     tuple(obsv), margin=tol.stability_margin)


def is_minimal(K, tol=DEFAULT_TOL):
    """True iff ``(A_K, B_K)`` is controllable and ``(C_K, A_K)`` observable."""
    _, ctrb, obsv = _pbh(K.A_K, K.B_K, K.C_K, tol)
    return all(ctrb) and all(obsv)


@dataclass(frozen=True)
class LqgWeights:
    """Process/measurement noise covariances ``W, V`` and costs ``Q, R``."""

    W: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("W", "V", "Q", "R"):
            object.__setattr__(self, name, sym(as_square(getattr(self, name), name)))


def psd_sqrt(M, tol=DEFAULT_TOL, name="matrix"):
    """Principal square root of a symmetric positive semidefinite matrix.

    Eigenvalues in ``[-eig_tol, 0]`` are treated as round-off and clamped.
    """
    M = sym(as_square(M, name))
    w, V = np.linalg.eigh(M)
    if w[0] < -tol.eig_tol * max(1.0, abs(w[-1])):
        raise InvalidInputError(f"{name} is not positive semidefinite")
    w = np.clip(w, 0.0, None)
    return sym((V * np.sqrt(w)) @ V.T)


def lqg_plant(A, B, C, weights, tol=DEFAULT_TOL):
    """Generalized plant whose H2 problem is the LQG problem for ``(A, B, C)``.

    ``B1 = [W^1/2, 0]``, ``C1 = [Q^1/2; 0]``, ``D12 = [0; R^1/2]``,
    ``D21 = [0, V^1/2]``, ``D11 = 0``.
    """
    A = as_square(A, "A")
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    check_shape(weights.W, (n, n), "W")
    check_shape(weights.Q, (n, n), "Q")
    check_shape(weights.R, (m, m), "R")
    check_shape(weights.V, (p, p), "V")
    for name in ("R", "V"):
        if min_eig_sym(getattr(weights, name)) <= 0:
            raise InvalidInputError(f"{name} must be positive definite")
    Wh = psd_sqrt(weights.W, tol, "W")
    Qh = psd_sqrt(weights.Q, tol, "Q")
    Rh = psd_sqrt(weights.R, tol, "R")
    Vh = psd_sqrt(weights.V, tol, "V")
    return Plant(
        A=A,
        B1=np.hstack([Wh, np.zeros((n, p))]),
        B2=B,
        C1=np.vstack([Qh, np.zeros((m, n))]),
        C2=C,
        D11=np.zeros((n + m, n + p)),
        D12=np.vstack([np.zeros((n, m)), Rh]),
        D21=np.hstack([np.zeros((p, n)), Vh]),
    )


def augment_reduced(K_red, n_x=None, pole=-1.0):
    """Pad a reduced-order controller with one decoupled stable state.

    The appended state has dynamics ``pole`` and no coupling, so the result
    is a fixed point of the similarity ``diag(I, -1)``.
    """
    order = K_red.order
    if n_x is not None and order != n_x - 1:
        raise InvalidInputError(
            f"reduced controller must have order {n_x - 1}, got {order}")
    if not pole < 0:
        raise InvalidInputError("appended pole must be stable")
    n_u, n_y = K_red.io_dims
    A_K = np.zeros((order + 1, order + 1))
    A_K[:order, :order] = K_red.A_K
    A_K[order, order] = pole
    B_K = np.vstack([K_red.B_K, np.zeros((1, n_y))])
    C_K = np.hstack([K_red.C_K, np.zeros((n_u, 1))])
    return Controller(A_K, B_K, C_K, K_red.D_K.copy())


def example1_plant(a=1.0):
    """Scalar plant with every block equal to one except ``D11 = 0``."""
    one = np.ones((1, 1))
    return Plant(A=a * one, B1=one, B2=one, C1=one, C2=one,
                 D11=np.zeros((1, 1)), D12=one, D21=one)


def scalar_controller(a_k, b_k, c_k, d_k=0.0):
    return Controller([[a_k]], [[b_k]], [[c_k]], [[d_k]])


EXAMPLE1_K1 = scalar_controller(-2.0, -2.0, 2.0, 0.0)
EXAMPLE1_K2 = scalar_controller(-2.0, 2.0, -2.0, 0.0)
