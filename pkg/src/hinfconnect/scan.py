"""Membership grids over two controller parameters.

Every cell holds a controller obtained from a base controller by setting two
entries; all cells are tested in one batched Hamiltonian evaluation.
Connected regions of member cells are counted with 4-neighbour labeling.
"""

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._validation import check_positive
from .analysis import STRICTLY_PROPER_ATOL, hinf_below_batch
from .errors import InvalidInputError
from .model import Controller, check_compatible
from .numerics import DEFAULT_TOL

_PARAM = re.compile(r"^(A_K|B_K|C_K|D_K)(?:\[(\d+),(\d+)\])?$")

# Default slice: strictly proper scalar controllers with A_K fixed.  The
# scalar loop depends on B_K, C_K only through their product, and the sign
# of that product is what separates the two regions when A > 0.
DEFAULT_FIXED = {"A_K": -5.0, "D_K": 0.0}
DEFAULT_RANGE = (-10.0, 10.0)


@dataclass(frozen=True)
class AxisSpec:
    """``count`` evenly spaced values of controller entry ``name`` in ``[lo, hi]``."""

    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        _parse_param(self.name)
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInputError(f"axis {self.name}: need finite lo < hi")
        if int(self.count) < 2:
            raise InvalidInputError(f"axis {self.name}: count must be >= 2")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    @property
    def values(self):
        return np.linspace(self.lo, self.hi, self.count)

    @classmethod
    def parse(cls, text):
        """``"B_K:-10:10:201"`` -> ``AxisSpec("B_K", -10, 10, 201)``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise InvalidInputError(f"axis spec {text!r}: expected NAME:LO:HI:COUNT")
        try:
            return cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
        except ValueError as exc:
            raise InvalidInputError(f"axis spec {text!r}: {exc}") from exc

    def to_dict(self):
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "count": self.count}


@dataclass
class ScanGrid:
    """``membership[i, j]`` is the cell at ``y.values[i]``, ``x.values[j]``."""

    x: AxisSpec
    y: AxisSpec
    gamma: float
    membership: np.ndarray
    fixed: dict = field(default_factory=dict)
    strictly_proper: bool = True

    def __post_init__(self):
        self.membership = np.asarray(self.membership, dtype=bool)
        if self.membership.shape != (self.y.count, self.x.count):
            raise InvalidInputError("membership shape does not match the axes")

    @property
    def component_count(self):
        return count_components(self.membership)


def count_components(mask):
    """Number of 4-connected regions of ``True`` cells."""
    _, n = ndimage.label(np.asarray(mask, dtype=bool))
    return int(n)


def _parse_param(name):
    m = _PARAM.match(name.replace(" ", ""))
    if not m:
        raise InvalidInputError(
            f"unknown controller parameter {name!r}; use A_K, B_K, C_K, D_K or e.g. A_K[0,1]")
    block = m.group(1)
    idx = (int(m.group(2)), int(m.group(3))) if m.group(2) else (0, 0)
    return block, idx


def _base_controller(plant, fixed):
    n_x, _, n_u, n_y, _ = plant.dims
    blocks = {"A_K": np.zeros((n_x, n_x)), "B_K": np.zeros((n_x, n_y)),
              "C_K": np.zeros((n_u, n_x)), "D_K": np.zeros((n_u, n_y))}
    for name, value in fixed.items():
        block, idx = _parse_param(name)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            _set_entry(blocks[block], idx, float(arr), name)
        elif arr.shape == blocks[block].shape:
            blocks[block] = arr.copy()
        else:
            raise InvalidInputError(f"fixed value for {name} has the wrong shape")
    return Controller(**blocks)


def _set_entry(M, idx, value, name):
    i, j = idx
    if not (0 <= i < M.shape[0] and 0 <= j < M.shape[1]):
        raise InvalidInputError(f"parameter {name} is out of range")
    M[i, j] = value


def _batched_loops(plant, base, x, y):
    """Closed-loop matrices for every grid cell, batch axes ``(ny, nx)``."""
    xs, ys = x.values, y.values
    shape = (len(ys), len(xs))
    blocks = {}
    for block in ("A_K", "B_K", "C_K", "D_K"):
        M = getattr(base, block)
        blocks[block] = np.broadcast_to(M, shape + M.shape).copy()
    for axis, vals, expand in ((x, xs, (None, slice(None))), (y, ys, (slice(None), None))):
        block, (i, j) = _parse_param(axis.name)
        M = blocks[block]
        if not (0 <= i < M.shape[2] and 0 <= j < M.shape[3]):
            raise InvalidInputError(f"parameter {axis.name} is out of range")
        M[..., i, j] = np.broadcast_to(vals[expand], shape)
    A, B1, B2 = plant.A, plant.B1, plant.B2
    C1, C2 = plant.C1, plant.C2
    D11, D12, D21 = plant.D11, plant.D12, plant.D21
    AK, BK, CK, DK = blocks["A_K"], blocks["B_K"], blocks["C_K"], blocks["D_K"]
    top = np.concatenate([A + B2 @ DK @ C2, B2 @ CK], axis=-1)
    bottom = np.concatenate([BK @ C2, AK], axis=-1)
    A_cl = np.concatenate([top, bottom], axis=-2)
    B_cl = np.concatenate([B1 + B2 @ DK @ D21, BK @ D21], axis=-2)
    C_cl = np.concatenate([C1 + D12 @ DK @ C2, D12 @ CK], axis=-1)
    D_cl = D11 + D12 @ DK @ D21
    return A_cl, B_cl, C_cl, D_cl, DK


def scan_grid(plant, x, y, gamma, fixed=None, strictly_proper=True, tol=DEFAULT_TOL):
    """Evaluate membership in the H-infinity set on a 2-D parameter grid."""
    gamma = check_positive(gamma, "gamma")
    if x.name == y.name:
        raise InvalidInputError("the two axes must be different parameters")
    fixed = dict(DEFAULT_FIXED if fixed is None else fixed)
    for axis in (x, y):
        fixed.pop(axis.name, None)
    base = _base_controller(plant, fixed)
    check_compatible(plant, base)
    A_cl, B_cl, C_cl, D_cl, DK = _batched_loops(plant, base, x, y)
    abscissa = np.linalg.eigvals(A_cl).real.max(axis=-1)
    member = abscissa < -tol.stability_margin
    if strictly_proper:
        member &= np.abs(DK).max(axis=(-2, -1)) <= STRICTLY_PROPER_ATOL
    idx = np.nonzero(member)
    if idx[0].size:
        below = hinf_below_batch(A_cl[idx], B_cl[idx], C_cl[idx], D_cl[idx], gamma, tol)
        member[idx] = below
    return ScanGrid(x, y, gamma, member, fixed, strictly_proper)


def default_axes(count=201):
    """The default slice: ``B_K`` along x, ``C_K`` along y, both in [-10, 10]."""
    lo, hi = DEFAULT_RANGE
    return AxisSpec("B_K", lo, hi, count), AxisSpec("C_K", lo, hi, count)


def write_csv(grid, path):
    """First row: blank corner then x values; each later row: y value then 0/1."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([""] + [repr(float(v)) for v in grid.x.values]) + "\n")
        for yv, row in zip(grid.y.values, grid.membership):
            fh.write(",".join([repr(float(yv))] + ["1" if c else "0" for c in row]) + "\n")


def read_csv(path):
    """Return ``(x_values, y_values, membership)`` from a grid CSV."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    try:
        xs = np.array([float(v) for v in lines[0].split(",")[1:]])
        ys, rows = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            ys.append(float(parts[0]))
            cells = [int(c) for c in parts[1:]]
            if any(c not in (0, 1) for c in cells) or len(cells) != len(xs):
                raise ValueError("cells must be 0/1 and match the header")
            rows.append(cells)
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"malformed grid CSV: {exc}") from exc
    return xs, np.array(ys), np.array(rows, dtype=bool)


def sidecar(grid):
    return {
        "gamma": repr(float(grid.gamma)),
        "component_count": grid.component_count,
        "axes": {"x": grid.x.to_dict(), "y": grid.y.to_dict()},
        "fixed": {k: np.asarray(v, dtype=float).tolist() for k, v in grid.fixed.items()},
        "strictly_proper": grid.strictly_proper,
    }


__all__ = ["AxisSpec", "ScanGrid", "scan_grid", "count_components",
           "default_axes", "write_csv", "read_csv", "sidecar", "DEFAULT_FIXED"]
