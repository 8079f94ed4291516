"""JSON encoding of plants, controllers, lifted points, certificates and paths.

Matrices are nested row-major lists and every real is written as the
shortest decimal string that round-trips (``repr(float)``), so encoding
followed by decoding reproduces the arrays bit for bit.  Dimensions are
stored explicitly so empty blocks keep their shape.
"""

import json
import math

import numpy as np

from .certify import H2Certificate, HinfCertificate
from .errors import HinfConnectError, InvalidInputError
from .homotopy import PathResult, PathSample
from .liftmap import LiftedPoint
from .model import Controller, Plant

_PLANT_BLOCKS = ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21")
_CONTROLLER_BLOCKS = ("A_K", "B_K", "C_K", "D_K")
_LIFTED_BLOCKS = ("X", "Y", "Ahat", "Bhat", "Chat", "Dhat", "Pi", "Xi")


def real_to_str(x):
    return repr(float(x))


def str_to_real(s, name="value"):
    if isinstance(s, bool) or not isinstance(s, (str, int, float)):
        raise InvalidInputError(f"{name}: expected a decimal string")
    try:
        return float(s)
    except ValueError as exc:
        raise InvalidInputError(f"{name}: {s!r} is not a real number") from exc


def matrix_to_json(M):
    M = np.asarray(M, dtype=float)
    return [[real_to_str(v) for v in row] for row in M]


def matrix_from_json(data, shape, name):
    rows, cols = shape
    if not isinstance(data, list) or len(data) != rows:
        raise InvalidInputError(f"{name}: expected {rows} rows")
    out = np.empty((rows, cols))
    for i, row in enumerate(data):
        if not isinstance(row, list) or len(row) != cols:
            raise InvalidInputError(f"{name}: row {i} must have {cols} entries")
        for j, v in enumerate(row):
            out[i, j] = str_to_real(v, f"{name}[{i}][{j}]")
    return out


def _dim(dims, key):
    v = dims.get(key) if isinstance(dims, dict) else None
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise InvalidInputError(f"dims.{key} must be a non-negative integer")
    return v


def _kind(data, expected):
    if not isinstance(data, dict):
        raise InvalidInputError("expected a JSON object")
    kind = data.get("kind")
    if kind != expected:
        raise InvalidInputError(f"expected kind {expected!r}, got {kind!r}")


def _field(data, key):
    if key not in data:
        raise InvalidInputError(f"missing field {key!r}")
    return data[key]


def plant_to_json(plant):
    n_x, n_w, n_u, n_y, n_z = plant.dims
    out = {"kind": "plant",
           "dims": {"n_x": n_x, "n_w": n_w, "n_u": n_u, "n_y": n_y, "n_z": n_z}}
    for name in _PLANT_BLOCKS:
        out[name] = matrix_to_json(getattr(plant, name))
    return out


def plant_from_json(data):
    _kind(data, "plant")
    d = _field(data, "dims")
    n_x, n_w, n_u = _dim(d, "n_x"), _dim(d, "n_w"), _dim(d, "n_u")
    n_y, n_z = _dim(d, "n_y"), _dim(d, "n_z")
    shapes = {"A": (n_x, n_x), "B1": (n_x, n_w), "B2": (n_x, n_u),
              "C1": (n_z, n_x), "C2": (n_y, n_x), "D11": (n_z, n_w),
              "D12": (n_z, n_u), "D21": (n_y, n_w)}
    blocks = {k: matrix_from_json(_field(data, k), shapes[k], k) for k in _PLANT_BLOCKS}
    return Plant(**blocks)


def controller_to_json(K):
    n_u, n_y = K.io_dims
    out = {"kind": "controller", "dims": {"n_k": K.order, "n_u": n_u, "n_y": n_y}}
    for name in _CONTROLLER_BLOCKS:
        out[name] = matrix_to_json(getattr(K, name))
    return out


def controller_from_json(data):
    _kind(data, "controller")
    d = _field(data, "dims")
    n_k, n_u, n_y = _dim(d, "n_k"), _dim(d, "n_u"), _dim(d, "n_y")
    shapes = {"A_K": (n_k, n_k), "B_K": (n_k, n_y), "C_K": (n_u, n_k), "D_K": (n_u, n_y)}
    return Controller(**{k: matrix_from_json(_field(data, k), shapes[k], k)
                         for k in _CONTROLLER_BLOCKS})


def lifted_to_json(Z):
    n = Z.X.shape[0]
    n_u, n_y = Z.Dhat.shape
    out = {"kind": "lifted", "dims": {"n_x": n, "n_u": n_u, "n_y": n_y}}
    for name in _LIFTED_BLOCKS:
        out[name] = matrix_to_json(getattr(Z, name))
    return out


def lifted_from_json(data):
    _kind(data, "lifted")
    d = _field(data, "dims")
    n, n_u, n_y = _dim(d, "n_x"), _dim(d, "n_u"), _dim(d, "n_y")
    shapes = {"X": (n, n), "Y": (n, n), "Ahat": (n, n), "Bhat": (n, n_y),
              "Chat": (n_u, n), "Dhat": (n_u, n_y), "Pi": (n, n), "Xi": (n, n)}
    return LiftedPoint(**{k: matrix_from_json(_field(data, k), shapes[k], k)
                          for k in _LIFTED_BLOCKS})


def certificate_to_json(cert):
    if isinstance(cert, HinfCertificate):
        return {"kind": "hinf-certificate", "dims": {"n": cert.P.shape[0]},
                "P": matrix_to_json(cert.P), "gamma": real_to_str(cert.gamma),
                "lmi_margin_achieved": real_to_str(cert.lmi_margin_achieved),
                "pos_def_margin": real_to_str(cert.pos_def_margin),
                "eps": real_to_str(cert.eps)}
    if isinstance(cert, H2Certificate):
        return {"kind": "h2-certificate",
                "dims": {"n": cert.P.shape[0], "n_z": cert.Gamma.shape[0]},
                "P": matrix_to_json(cert.P), "Gamma": matrix_to_json(cert.Gamma),
                "gamma": real_to_str(cert.gamma),
                "lmi_margin_achieved": real_to_str(cert.lmi_margin_achieved),
                "pos_def_margin": real_to_str(cert.pos_def_margin),
                "trace_slack": real_to_str(cert.trace_slack)}
    raise TypeError(f"not a certificate: {type(cert).__name__}")


def certificate_from_json(data):
    if not isinstance(data, dict):
        raise InvalidInputError("expected a JSON object")
    kind = data.get("kind")
    d = _field(data, "dims")
    n = _dim(d, "n")
    reals = {k: str_to_real(_field(data, k), k)
             for k in ("gamma", "lmi_margin_achieved", "pos_def_margin")}
    P = matrix_from_json(_field(data, "P"), (n, n), "P")
    if kind == "hinf-certificate":
        return HinfCertificate(P, eps=str_to_real(_field(data, "eps"), "eps"), **reals)
    if kind == "h2-certificate":
        n_z = _dim(d, "n_z")
        Gamma = matrix_from_json(_field(data, "Gamma"), (n_z, n_z), "Gamma")
        return H2Certificate(P, Gamma, trace_slack=str_to_real(
            _field(data, "trace_slack"), "trace_slack"), **reals)
    raise InvalidInputError(f"unknown certificate kind {kind!r}")


def _opt_real(x):
    return None if x is None else real_to_str(x)


def path_to_json(path):
    out = {"kind": "path", "status": path.status,
           "gamma": _opt_real(path.gamma),
           "n_samples": len(path.samples),
           "endpoint_errors": [real_to_str(e) for e in path.endpoint_errors],
           "failing_t": _opt_real(path.failing_t),
           "witness_T": None if path.witness_T is None else {
               "dims": {"n": int(np.shape(path.witness_T)[0])},
               "data": matrix_to_json(path.witness_T)},
           "samples": [{"t": real_to_str(s.t), "hinf": real_to_str(s.hinf),
                        "sign": int(s.sign), "controller": controller_to_json(s.controller)}
                       for s in path.samples]}
    if path.samples and math.isfinite(path.max_hinf):
        out["max_hinf"] = real_to_str(path.max_hinf)
    return out


def path_from_json(data):
    _kind(data, "path")
    samples = []
    for i, s in enumerate(_field(data, "samples")):
        if not isinstance(s, dict):
            raise InvalidInputError(f"samples[{i}] must be an object")
        sign = _field(s, "sign")
        if sign not in (-1, 0, 1):
            raise InvalidInputError(f"samples[{i}].sign must be -1, 0 or 1")
        samples.append(PathSample(str_to_real(_field(s, "t"), "t"),
                                  controller_from_json(_field(s, "controller")),
                                  str_to_real(_field(s, "hinf"), "hinf"), sign))
    W = data.get("witness_T")
    if W is not None:
        n = _dim(_field(W, "dims"), "n")
        W = matrix_from_json(_field(W, "data"), (n, n), "witness_T")
    errs = _field(data, "endpoint_errors")
    if not isinstance(errs, list) or len(errs) != 2:
        raise InvalidInputError("endpoint_errors must hold two reals")
    gamma, failing = data.get("gamma"), data.get("failing_t")
    return PathResult(
        status=_field(data, "status"), samples=samples, witness_T=W,
        endpoint_errors=tuple(str_to_real(e, "endpoint_errors") for e in errs),
        failing_t=None if failing is None else str_to_real(failing, "failing_t"),
        gamma=None if gamma is None else str_to_real(gamma, "gamma"))


_DECODERS = {"plant": plant_from_json, "controller": controller_from_json,
             "lifted": lifted_from_json, "hinf-certificate": certificate_from_json,
             "h2-certificate": certificate_from_json, "path": path_from_json}


def loads(text, kind=None):
    """Decode a JSON document; ``kind`` restricts the accepted object type."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("kind") not in _DECODERS:
        raise InvalidInputError("JSON object lacks a known 'kind'")
    if kind is not None and data["kind"] != kind and not (
            kind == "certificate" and data["kind"].endswith("-certificate")):
        raise InvalidInputError(f"expected a {kind}, got {data['kind']}")
    try:
        return _DECODERS[data["kind"]](data)
    except HinfConnectError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise InvalidInputError(f"malformed {data['kind']}: {exc}") from exc


def load(path, kind=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    return loads(text, kind)


_ENCODERS = ((Plant, plant_to_json), (Controller, controller_to_json),
             (LiftedPoint, lifted_to_json), (HinfCertificate, certificate_to_json),
             (H2Certificate, certificate_to_json), (PathResult, path_to_json))


def to_json(obj):
    for cls, enc in _ENCODERS:
        if isinstance(obj, cls):
            return enc(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent=2):
    return json.dumps(obj if isinstance(obj, dict) else to_json(obj), indent=indent)
