"""Command-line interface.

Exit codes: 0 success, 1 failed example assertion, 2 invalid input,
3 violated precondition, 4 numerical failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .analysis import h2_norm_squared, hinf_norm, in_cstab, in_kgamma, in_lgamma
from .certify import bounded_real_certificate, h2_certificate
from .errors import HinfConnectError, InvalidInputError
from .homotopy import connect, connect_via_bridge
from .liftmap import component_sign, lift, lift_h2, reconstruct
from .lmi import gamma_star, synthesize_h2, synthesize_lifted
from .model import (EXAMPLE1_K1, EXAMPLE1_K2, close_loop, example1_plant)
from .numerics import Tolerances, spectral_abscissa
from .scan import DEFAULT_FIXED, AxisSpec, default_axes, scan_grid, sidecar, write_csv

EXIT_OK, EXIT_ASSERT = 0, 1
EXAMPLE1_GAMMA = 3.33


def _add_globals(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--tol-eig", type=float, default=d(1e-9))
    p.add_argument("--tol-lmi", type=float, default=d(1e-8))
    p.add_argument("--tol-bisect", type=float, default=d(1e-6))
    p.add_argument("--tol-stability", type=float, default=d(1e-8))
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--strictly-proper", action="store_true", default=d(False))
    p.add_argument("--out", default=d(None), help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hinfconnect",
        description="Membership, certificates, lifts, synthesis and paths "
                    "for H-infinity output-feedback controller sets.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_globals(p, suppress=True)
        return p

    cmd("example1", "check the scalar example controllers and their midpoint")

    p = cmd("scan", "membership grid over two controller parameters")
    p.add_argument("plant", nargs="?", help="plant JSON (default: the scalar example)")
    p.add_argument("--a", type=float, default=1.0,
                   help="A of the scalar example plant when no plant file is given")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--x", help="x axis as NAME:LO:HI:COUNT (default B_K:-10:10:201)")
    p.add_argument("--y", help="y axis as NAME:LO:HI:COUNT (default C_K:-10:10:201)")
    p.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE",
                   help="fixed controller entry; default A_K=-5, D_K=0")

    p = cmd("norm", "closed-loop H-infinity (or squared H2) norm")
    p.add_argument("plant")
    p.add_argument("controller")
    p.add_argument("--h2", action="store_true")

    p = cmd("check", "membership in the H-infinity (or LQG) sublevel set")
    p.add_argument("plant")
    p.add_argument("controller")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--h2", action="store_true")

    p = cmd("certify", "LMI certificate for a member controller")
    p.add_argument("plant")
    p.add_argument("controller")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--h2", action="store_true")

    p = cmd("lift", "lift a member controller to the convex parameters")
    p.add_argument("plant")
    p.add_argument("controller")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--h2", action="store_true")

    p = cmd("reconstruct", "controller from a lifted point")
    p.add_argument("plant")
    p.add_argument("lifted")

    p = cmd("synthesize", "controller at a given level by LMI feasibility")
    p.add_argument("plant")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--h2", action="store_true")
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--lifted-out", help="also write the lifted point here")

    p = cmd("gamma-star", "bracket the optimal H-infinity level")
    p.add_argument("plant")
    p.add_argument("--rel-tol", type=float, default=0.01)
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--max-probes", type=int, default=60)

    p = cmd("path", "verified sampled path between two member controllers")
    p.add_argument("plant")
    p.add_argument("K0")
    p.add_argument("K1")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--n-samples", type=int, default=100,
                   help="number of intervals; n_samples + 1 points per leg")
    p.add_argument("--refine", type=int, default=0)
    p.add_argument("--bridge", help="reduced-order controller JSON used as a bridge")
    return parser


def _tol(args):
    try:
        return Tolerances(args.tol_eig, args.tol_lmi, args.tol_bisect, args.tol_stability)
    except HinfConnectError:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(str(exc)) from exc


def _emit(args, payload):
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _r(x):
    return io.real_to_str(x)


def cmd_example1(args, tol):
    t0 = time.perf_counter()
    plant = example1_plant(1.0)
    lines, ok = [], True
    for name, K in (("K1", EXAMPLE1_K1), ("K2", EXAMPLE1_K2)):
        res = hinf_norm(close_loop(plant, K), tol)
        member = in_kgamma(plant, K, EXAMPLE1_GAMMA, tol=tol)
        ok &= member and res.hi < EXAMPLE1_GAMMA
        lines.append(f"{name}: hinf in [{res.lo:.9f}, {res.hi:.9f}]  "
                     f"member(gamma={EXAMPLE1_GAMMA}) = {member}")
    mid = 0.5 * (EXAMPLE1_K1 + EXAMPLE1_K2)
    abscissa = spectral_abscissa(close_loop(plant, mid).A)
    unstable = not in_cstab(plant, mid, tol)
    ok &= unstable
    lines.append(f"midpoint: stabilizing = {not unstable}  "
                 f"unstable eigenvalue = {abscissa:.12g}")
    lines.append(f"elapsed: {time.perf_counter() - t0:.3f} s")
    lines.append("PASS" if ok else "FAIL: an example assertion does not hold")
    _emit(args, "\n".join(lines))
    return EXIT_OK if ok else EXIT_ASSERT


def _parse_fix(items):
    fixed = dict(DEFAULT_FIXED)
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"--fix {item!r}: expected NAME=VALUE")
        try:
            fixed[name.strip()] = float(value)
        except ValueError as exc:
            raise InvalidInputError(f"--fix {item!r}: {exc}") from exc
    return fixed


def cmd_scan(args, tol):
    if not args.out:
        raise InvalidInputError("scan needs --out for the CSV file")
    plant = io.load(args.plant, "plant") if args.plant else example1_plant(args.a)
    dx, dy = default_axes()
    x = AxisSpec.parse(args.x) if args.x else dx
    y = AxisSpec.parse(args.y) if args.y else dy
    grid = scan_grid(plant, x, y, args.gamma, _parse_fix(args.fix),
                     strictly_proper=True, tol=tol)
    out = Path(args.out)
    try:
        write_csv(grid, out)
        out.with_suffix(".json").write_text(json.dumps(sidecar(grid), indent=2) + "\n",
                                            encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot write {out}: {exc}") from exc
    print(json.dumps({"csv": str(out), "sidecar": str(out.with_suffix(".json")),
                      "component_count": grid.component_count}))
    return EXIT_OK


def _plant_controller(args):
    return io.load(args.plant, "plant"), io.load(args.controller, "controller")


def cmd_norm(args, tol):
    plant, K = _plant_controller(args)
    sys_cl = close_loop(plant, K)
    if args.h2:
        _emit(args, {"h2_squared": _r(h2_norm_squared(sys_cl, tol))})
    else:
        res = hinf_norm(sys_cl, tol)
        _emit(args, {"value": _r(res.value), "lo": _r(res.lo), "hi": _r(res.hi),
                     "method": res.method})
    return EXIT_OK


def cmd_check(args, tol):
    plant, K = _plant_controller(args)
    stable = in_cstab(plant, K, tol)
    if args.h2:
        member = in_lgamma(plant, K, args.gamma, tol)
        kind = "lqg"
    else:
        member = in_kgamma(plant, K, args.gamma, args.strictly_proper, tol)
        kind = "hinf"
    _emit(args, {"member": bool(member), "stabilizing": bool(stable), "set": kind,
                 "gamma": _r(args.gamma), "strictly_proper": bool(args.strictly_proper)})
    return EXIT_OK


def cmd_certify(args, tol):
    plant, K = _plant_controller(args)
    if args.h2:
        cert = h2_certificate(plant, K, args.gamma, tol)
    else:
        cert = bounded_real_certificate(plant, K, args.gamma, tol)
    _emit(args, io.certificate_to_json(cert))
    return EXIT_OK


def cmd_lift(args, tol):
    plant, K = _plant_controller(args)
    if args.h2:
        Z, Gamma = lift_h2(plant, K, args.gamma, args.seed, tol)
        out = io.lifted_to_json(Z)
        out["Gamma"] = io.matrix_to_json(Gamma)
    else:
        Z = lift(plant, K, args.gamma, seed=args.seed, tol=tol)
        out = io.lifted_to_json(Z)
    out["component_sign"] = component_sign(Z, tol)
    _emit(args, out)
    return EXIT_OK


def cmd_reconstruct(args, tol):
    plant = io.load(args.plant, "plant")
    Z = io.load(args.lifted, "lifted")
    _emit(args, io.controller_to_json(reconstruct(plant, Z, tol)))
    return EXIT_OK


def cmd_synthesize(args, tol):
    plant = io.load(args.plant, "plant")
    if args.h2:
        res = synthesize_h2(plant, args.gamma, args.seed, args.budget, tol)
    else:
        res = synthesize_lifted(plant, args.gamma, args.strictly_proper, args.seed,
                                args.budget, tol=tol)
    if args.lifted_out:
        Path(args.lifted_out).write_text(io.dumps(res.lifted) + "\n", encoding="utf-8")
    _emit(args, io.controller_to_json(res.controller))
    return EXIT_OK


def cmd_gamma_star(args, tol):
    plant = io.load(args.plant, "plant")
    res = gamma_star(plant, args.strictly_proper, args.rel_tol, args.budget,
                     args.max_probes, args.seed, tol=tol)
    _emit(args, {"lo": _r(res.lo), "hi": _r(res.hi), "probes": res.probes,
                 "budget_exhausted": res.budget_exhausted,
                 "controller": io.controller_to_json(res.witness.controller)})
    return EXIT_OK


def cmd_path(args, tol):
    plant = io.load(args.plant, "plant")
    K0 = io.load(args.K0, "controller")
    K1 = io.load(args.K1, "controller")
    if args.bridge:
        K_red = io.load(args.bridge, "controller")
        res = connect_via_bridge(plant, K0, K1, args.gamma, K_red, args.n_samples,
                                 args.seed, args.refine, tol)
    else:
        res = connect(plant, K0, K1, args.gamma, args.n_samples, args.seed,
                      args.refine, tol)
    _emit(args, io.path_to_json(res))
    return EXIT_OK


COMMANDS = {
    "example1": cmd_example1, "scan": cmd_scan, "norm": cmd_norm,
    "check": cmd_check, "certify": cmd_certify, "lift": cmd_lift,
    "reconstruct": cmd_reconstruct, "synthesize": cmd_synthesize,
    "gamma-star": cmd_gamma_star, "path": cmd_path,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        tol = _tol(args)
        return COMMANDS[args.command](args, tol)
    except HinfConnectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: linear algebra failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
