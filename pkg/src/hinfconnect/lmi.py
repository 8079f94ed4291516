"""Strict feasibility of affine LMI families and controller synthesis.

An :class:`AffineLmi` stores each constraint ``F(z) = F0 + sum_k z_k F_k``
(required ``< 0``) by its constant term and a stacked basis.  Bases are
obtained by evaluating the structured matrix functions of
:mod:`hinfconnect.liftmap` at unit vectors, so the LMIs here are the same
expressions used for membership testing.

:func:`solve_feasibility` minimizes the largest scaled eigenvalue over all
constraints as a phase-I problem (``min t`` subject to ``F_i(z) < t I``)
along a log-barrier central path; the run stops as soon as the exact
relative strictness test passes.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._validation import check_positive
from .analysis import h2_norm_squared, hinf_norm, in_kgamma, in_lgamma
from .errors import (AssumptionViolationError, InvalidInputError,
                     NumericalFailure, SingularInputError, SynthesisError)
from .liftmap import (FPoint, LiftedPoint, coupling_matrix, eval_M_gamma,
                      eval_M_lqg, reconstruct)
from .model import check_stabilizable_detectable, close_loop
from .numerics import DEFAULT_TOL, lmi_slack, sym

FEASIBLE = "feasible"
INFEASIBLE = "infeasible-within-budget"

_DEFAULT_BUDGET = 400


@dataclass(frozen=True)
class VarSpec:
    name: str
    shape: tuple
    symmetric: bool = False

    @property
    def size(self):
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c


def _unpack(spec, chunk):
    if spec.symmetric:
        n = spec.shape[0]
        M = np.zeros((n, n))
        M[np.triu_indices(n)] = chunk
        return M + np.triu(M, 1).T
    return np.asarray(chunk, dtype=float).reshape(spec.shape)


def _pack(spec, M):
    M = np.asarray(M, dtype=float)
    if spec.symmetric:
        return sym(M)[np.triu_indices(spec.shape[0])]
    return M.reshape(-1)


@dataclass
class AffineLmi:
    """Constraints ``F_i(z) < 0`` that are affine in a decision vector ``z``.

    ``constraints`` holds ``(F0, basis)`` pairs with ``basis`` of shape
    ``(d, m, m)``; ``variables`` maps slices of ``z`` to named matrices.
    """

    variables: list
    constraints: list
    names: list = field(default_factory=list)

    @property
    def dim(self):
        return sum(v.size for v in self.variables)

    def slices(self):
        out, start = {}, 0
        for v in self.variables:
            out[v.name] = slice(start, start + v.size)
            start += v.size
        return out

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        return {v.name: _unpack(v, z[s]) for v, s in
                zip(self.variables, self.slices().values())}

    def pack(self, values):
        return np.concatenate([_pack(v, values[v.name]) for v in self.variables])

    def evaluate(self, z):
        """The constraint matrices ``F_i(z)``."""
        z = np.asarray(z, dtype=float)
        return [F0 + np.tensordot(z, basis, axes=1) for F0, basis in self.constraints]

    @classmethod
    def from_functions(cls, variables, functions, names=None):
        """Build the affine representation of matrix-valued ``functions``.

        Each function takes a ``{name: matrix}`` dict; affinity is assumed and
        can be checked with :func:`affinity_defect`.
        """
        lmi = cls(list(variables), [], list(names or []))
        d = lmi.dim
        zero = lmi.unpack(np.zeros(d))
        for fun in functions:
            F0 = sym(fun(zero))
            basis = np.empty((d,) + F0.shape)
            for k in range(d):
                e = np.zeros(d)
                e[k] = 1.0
                basis[k] = sym(fun(lmi.unpack(e))) - F0
            lmi.constraints.append((F0, basis))
        return lmi


def affinity_defect(lmi, z1, z2):
    """``max |F(z1+z2) - F(z1) - F(z2) + F(0)|`` over all constraints."""
    d = lmi.dim
    parts = zip(lmi.evaluate(z1 + z2), lmi.evaluate(z1), lmi.evaluate(z2),
                lmi.evaluate(np.zeros(d)))
    return max(float(np.max(np.abs(a - b - c + e))) for a, b, c, e in parts)


@dataclass(frozen=True)
class FeasibilityResult:
    status: str
    z: np.ndarray
    margin: float
    iterations: int
    relative_margin: float = float("nan")

    @property
    def feasible(self):
        return self.status == FEASIBLE


def _relative_margins(mats):
    """Per-constraint ``-lambda_max / (1 + max|F|)``."""
    out = []
    for F in mats:
        lam, scale = lmi_slack(F)
        out.append(-lam / scale)
    return np.array(out)


def _absolute_margin(mats):
    return min(-float(np.linalg.eigvalsh(sym(F))[-1]) for F in mats)


def _barrier_terms(lmi, weights, x, radius):
    """Value, gradient and Hessian of the phase-I barrier at ``x = (z, t)``.

    Each scaled constraint contributes ``-log det(t I - F_i(z) / w_i)``; a
    ball ``|z| < radius`` keeps the iterates bounded.  Returns ``None`` when
    ``x`` is outside the barrier domain.
    """
    z, t = x[:-1], x[-1]
    d = z.size
    f = 0.0
    g = np.zeros(d + 1)
    H = np.zeros((d + 1, d + 1))
    for (F0, basis), w in zip(lmi.constraints, weights):
        m = F0.shape[0]
        S = t * np.eye(m) - (F0 + np.tensordot(z, basis, axes=1)) / w
        try:
            L = np.linalg.cholesky(sym(S))
        except np.linalg.LinAlgError:
            return None
        diag = np.diag(L)
        if diag.min() <= 0 or not np.all(np.isfinite(diag)):
            return None
        f -= 2.0 * float(np.sum(np.log(diag)))
        Sinv = linalg.cho_solve((L, True), np.eye(m))
        # Derivatives of S along z_k and t are -basis_k / w and I.
        G = np.einsum("ij,kjl->kil", Sinv, basis) / w
        g[:d] += np.einsum("kii->k", G)
        g[d] -= float(np.trace(Sinv))
        H[:d, :d] += np.einsum("kij,lji->kl", G, G)
        Gt = Sinv @ Sinv
        H[:d, d] -= np.einsum("ij,kji->k", Sinv, G)
        H[d, d] += float(np.trace(Gt))
    H[d, :d] = H[:d, d]
    room = radius**2 - float(z @ z)
    if room <= 0:
        return None
    f -= np.log(room)
    g[:d] += 2.0 * z / room
    H[:d, :d] += 2.0 * np.eye(d) / room + 4.0 * np.outer(z, z) / room**2
    return f, g, H


def analytic_center(lmi, z0, radius, max_steps=60):
    """Damped Newton on ``-sum log det(-F_i(z)) - log(radius**2 - |z|**2)``.

    ``z0`` must be strictly feasible.  The center is far from every face
    of the feasible set, so matrix variables come out well conditioned.
    """
    d = lmi.dim
    x = np.append(np.asarray(z0, dtype=float), 0.0)
    weights = [1.0] * len(lmi.constraints)
    terms = _barrier_terms(lmi, weights, x, radius)
    if terms is None:
        raise InvalidInputError("analytic_center needs a strictly feasible start")
    for _ in range(max_steps):
        f, g, H = terms
        g, H = g[:d], H[:d, :d]
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        decrement = float(-g @ step)
        if not np.isfinite(decrement) or decrement < 1e-12:
            break
        s = 1.0
        while s > 1e-10:
            trial = x.copy()
            trial[:d] += s * step
            new = _barrier_terms(lmi, weights, trial, radius)
            if new is not None and new[0] <= f - 0.25 * s * decrement:
                break
            s *= 0.5
        else:
            break
        x, terms = trial, new
    return x[:d]


class _Found(Exception):
    pass


_RADII = (1e2, 1e4, 1e6)


def solve_feasibility(lmi, budget=_DEFAULT_BUDGET, seed=0, z0=None,
                      target=None, tol=DEFAULT_TOL, radii=_RADII):
    """Find ``z`` with every ``F_i(z) < 0`` by the relative strictness test.

    Minimizes ``t`` subject to ``F_i(z) / w_i < t I`` (``w_i = 1 + max|F0_i|``)
    along the log-barrier central path with damped Newton steps, inside a
    ball ``|z| < r``.  The run stops as soon as the exact relative test
    clears ``target`` (default ``tol.lmi_margin``).  When the central path
    shows the optimum of ``t`` in the ball is positive, the next (larger)
    radius in ``radii`` is tried; small balls are tried first because the
    feasible sets here are unbounded and far-out points give badly scaled
    controllers.  ``budget`` caps the total number of Newton steps.  Any
    point clearing ``tol.lmi_margin`` is reported feasible; an infeasible
    status is not a proof of infeasibility.
    """
    budget = int(budget)
    if budget < 1:
        raise InvalidInputError("budget must be a positive integer")
    target = tol.lmi_margin if target is None else float(target)
    d = lmi.dim
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=1e-2, size=d) if z0 is None else np.array(z0, dtype=float)
    if z.shape != (d,):
        raise InvalidInputError(f"start point must have length {d}")
    weights = [1.0 + float(np.max(np.abs(F0))) for F0, _ in lmi.constraints]
    n_rows = sum(F0.shape[0] for F0, _ in lmi.constraints) + 1

    state = {"steps": 0, "best": z.copy(), "best_rel": -np.inf}

    def record(zc):
        rel = float(_relative_margins(lmi.evaluate(zc)).min())
        if rel > state["best_rel"]:
            state["best"], state["best_rel"] = zc.copy(), rel
        if rel > target:
            raise _Found

    def scaled_top(zc):
        return max(float(np.linalg.eigvalsh(sym(F) / w)[-1])
                   for F, w in zip(lmi.evaluate(zc), weights))

    try:
        record(z)
        if d == 0:
            raise _Found
        for radius in radii:
            if state["steps"] >= budget:
                break
            start = state["best"]
            norm = float(np.linalg.norm(start))
            if norm >= 0.5 * radius:
                start = start * (0.5 * radius / norm)
            x = np.append(start, scaled_top(start) + 1.0)
            _central_path(lmi, weights, x, radius, n_rows, budget, state, record)
    except _Found:
        pass
    z = state["best"]
    mats = lmi.evaluate(z)
    rel = float(_relative_margins(mats).min())
    status = FEASIBLE if rel > tol.lmi_margin else INFEASIBLE
    return FeasibilityResult(status, z, _absolute_margin(mats), state["steps"], rel)


def _central_path(lmi, weights, x, radius, n_rows, budget, state, record):
    c = 1.0
    while state["steps"] < budget:
        # Centering for the current weight c on t.
        for _ in range(100):
            if state["steps"] >= budget:
                return
            f, g, H = _barrier_terms(lmi, weights, x, radius)
            f, g = f + c * x[-1], g.copy()
            g[-1] += c
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
            decrement = float(-g @ step)
            if not np.isfinite(decrement) or decrement < 0:
                step, decrement = -g, float(g @ g)
            if decrement < 1e-10:
                break
            s = 1.0
            while s > 1e-12:
                trial = x + s * step
                terms = _barrier_terms(lmi, weights, trial, radius)
                if terms is not None and terms[0] + c * trial[-1] <= f - 0.25 * s * decrement:
                    break
                s *= 0.5
            else:
                break
            x = trial
            state["steps"] += 1
            record(x[:-1])
        # On the central path the optimum t* is at least t - rows / c.
        if x[-1] - n_rows / c > 0 or n_rows / c < 1e-13:
            return
        c *= 8.0


def _synthesis_vars(plant, strictly_proper):
    n_x, _, n_u, n_y, _ = plant.dims
    specs = [VarSpec("X", (n_x, n_x), True), VarSpec("Y", (n_x, n_x), True),
             VarSpec("Ahat", (n_x, n_x)), VarSpec("Bhat", (n_x, n_y)),
             VarSpec("Chat", (n_u, n_x))]
    if not strictly_proper:
        specs.append(VarSpec("Dhat", (n_u, n_y)))
    return specs


def _fpoint(plant, values):
    n_u, n_y = plant.dims[2], plant.dims[3]
    Dhat = values.get("Dhat", np.zeros((n_u, n_y)))
    return FPoint(values["X"], values["Y"], values["Ahat"], values["Bhat"],
                  values["Chat"], Dhat)


def assemble_synthesis_lmi(plant, gamma, strictly_proper=False, tol=DEFAULT_TOL):
    """``M_gamma < 0`` and ``[X, I; I, Y] > 0`` over the lifted variables."""
    gamma = check_positive(gamma, "gamma")
    n = plant.n_x

    def coupling(v):
        p = _fpoint(plant, v)
        return -coupling_matrix(p) + tol.lmi_margin * np.eye(2 * n)

    def synthesis(v):
        return eval_M_gamma(plant, _fpoint(plant, v), gamma)

    return AffineLmi.from_functions(_synthesis_vars(plant, strictly_proper),
                                    [coupling, synthesis],
                                    ["coupling", "synthesis"])


def assemble_h2_synthesis_lmi(plant, gamma, tol=DEFAULT_TOL):
    """The two H2 synthesis blocks plus ``trace(Gamma) < gamma``."""
    gamma = check_positive(gamma, "gamma")
    n_z = plant.dims[4]
    specs = _synthesis_vars(plant, True) + [VarSpec("Gamma", (n_z, n_z), True)]

    def blocks(v):
        return eval_M_lqg(plant, _fpoint(plant, v), v["Gamma"])

    return AffineLmi.from_functions(
        specs,
        [lambda v: blocks(v)[0], lambda v: -blocks(v)[1],
         lambda v: np.array([[blocks(v)[2] - gamma]])],
        ["h2-dynamics", "h2-output", "trace"])


def _initial_point(lmi, rng):
    values = {}
    for spec in lmi.variables:
        if spec.name in ("X", "Y"):
            values[spec.name] = 2.0 * np.eye(spec.shape[0])
        elif spec.name == "Gamma":
            values[spec.name] = np.eye(spec.shape[0])
        else:
            values[spec.name] = np.zeros(spec.shape)
    return lmi.pack(values) + rng.normal(scale=1e-2, size=lmi.dim)


@dataclass(frozen=True)
class SynthesisResult:
    controller: object
    lifted: LiftedPoint
    feasibility: FeasibilityResult
    Gamma: np.ndarray = None


# Relative margins tried in turn when the reconstructed controller fails the
# independent check (deeper points are further from the boundary).
_SYNTHESIS_TARGETS = (1e-4, 1e-3, 1e-2, 1e-6)


def _solve_lifted(plant, lmi, budget, seed, z0, tol, verify, fallback_msg):
    rng = np.random.default_rng(seed)
    start = _initial_point(lmi, rng) if z0 is None else np.asarray(z0, dtype=float)
    last = None
    for target in _SYNTHESIS_TARGETS:
        res = solve_feasibility(lmi, budget, seed, start, target, tol)
        last = res
        if not res.feasible:
            break
        values = lmi.unpack(res.z)
        Z = LiftedPoint.from_fpoint(_fpoint(plant, values))
        try:
            K = reconstruct(plant, Z, tol)
        except SingularInputError:
            continue
        if verify(K):
            return SynthesisResult(K, Z, res, values.get("Gamma"))
        start = res.z
    raise SynthesisError(
        f"{fallback_msg} (status {last.status}, relative margin "
        f"{last.relative_margin:.3g})")


def synthesize_lifted(plant, gamma, strictly_proper=False, seed=0,
                      budget=_DEFAULT_BUDGET, z0=None, tol=DEFAULT_TOL):
    """Synthesis returning the controller together with its lifted point."""
    gamma = check_positive(gamma, "gamma")
    lmi = assemble_synthesis_lmi(plant, gamma, strictly_proper, tol)

    def verify(K):
        if not in_kgamma(plant, K, gamma, strictly_proper, tol):
            return False
        try:
            return hinf_norm(close_loop(plant, K), tol).value < gamma
        except NumericalFailure:
            return False

    return _solve_lifted(plant, lmi, budget, seed, z0, tol, verify,
                         f"no verified controller at gamma={gamma:g}")


def synthesize(plant, gamma, strictly_proper=False, seed=0,
               budget=_DEFAULT_BUDGET, tol=DEFAULT_TOL):
    """A controller with closed-loop H-infinity norm below ``gamma``.

    Solves the synthesis LMI, factors ``I - Y X`` with ``Pi = I`` and maps
    back through the reconstruction; the result is re-checked with the
    Hamiltonian test before it is returned.
    """
    return synthesize_lifted(plant, gamma, strictly_proper, seed, budget,
                             tol=tol).controller


def synthesize_h2(plant, gamma, seed=0, budget=_DEFAULT_BUDGET, tol=DEFAULT_TOL):
    """Strictly proper controller with squared H2 norm below ``gamma``."""
    gamma = check_positive(gamma, "gamma")
    lmi = assemble_h2_synthesis_lmi(plant, gamma, tol)

    def verify(K):
        return (in_lgamma(plant, K, gamma, tol)
                and h2_norm_squared(close_loop(plant, K), tol) < gamma)

    return _solve_lifted(plant, lmi, budget, seed, None, tol, verify,
                         f"no verified H2 controller at gamma={gamma:g}")


@dataclass(frozen=True)
class GammaStarResult:
    """Bracket ``lo < gamma* <= hi``; ``lo`` is a numerical lower estimate."""

    lo: float
    hi: float
    witness: SynthesisResult
    probes: int
    budget_exhausted: bool

    def __iter__(self):
        return iter((self.lo, self.hi))


_MAX_DOUBLINGS = 40
_MAX_HALVINGS = 60


def gamma_star(plant, strictly_proper=False, rel_tol=0.01, budget=_DEFAULT_BUDGET,
               max_probes=60, seed=0, gamma0=1.0, tol=DEFAULT_TOL):
    """Bracket the optimal H-infinity level by bisection on synthesis.

    A level counts as feasible only when synthesis returns a controller that
    passes the Hamiltonian check; failure to find one within ``budget`` is
    treated as infeasible, so ``lo`` is an estimate rather than a proof.
    """
    rel_tol = check_positive(rel_tol, "rel_tol")
    gamma0 = check_positive(gamma0, "gamma0")
    report = check_stabilizable_detectable(plant, tol)
    if not (report.stabilizable and report.detectable):
        raise AssumptionViolationError(
            "(A, B2) must be stabilizable and (C2, A) detectable")

    probes = 0
    z_warm = None

    def attempt(g):
        nonlocal probes, z_warm
        probes += 1
        try:
            res = synthesize_lifted(plant, g, strictly_proper, seed, budget,
                                    z_warm, tol)
        except SynthesisError:
            return None
        z_warm = res.feasibility.z
        return res

    hi, lo = gamma0, None
    witness = attempt(hi)
    if witness is None:
        lo = hi
        for _ in range(_MAX_DOUBLINGS):
            hi *= 2.0
            witness = attempt(hi)
            if witness is not None:
                break
            lo = hi
            if hi > 1e9:
                break
        if witness is None:
            raise AssumptionViolationError("no feasible level found up to 1e9")
    else:
        g = hi
        for _ in range(_MAX_HALVINGS):
            if probes >= max_probes:
                break
            g *= 0.5
            res = attempt(g)
            if res is None:
                lo = g
                break
            hi, witness = g, res
        if lo is None:
            # Feasible all the way down: the infimum is (numerically) zero.
            return GammaStarResult(0.0, hi, witness, probes, probes >= max_probes)

    exhausted = False
    while hi / lo > 1.0 + rel_tol:
        if probes >= max_probes:
            exhausted = True
            break
        mid = float(np.sqrt(lo * hi))
        # Warm starts come from the feasible side only.
        z_warm = witness.feasibility.z
        res = attempt(mid)
        if res is None:
            lo = mid
        else:
            hi, witness = mid, res
    return GammaStarResult(float(lo), float(hi), witness, probes, exhausted)


__all__ = [
    "AffineLmi", "VarSpec", "FeasibilityResult", "SynthesisResult",
    "GammaStarResult", "assemble_synthesis_lmi", "assemble_h2_synthesis_lmi",
    "affinity_defect", "solve_feasibility", "synthesize", "synthesize_lifted",
    "synthesize_h2", "gamma_star", "FEASIBLE", "INFEASIBLE",
]
