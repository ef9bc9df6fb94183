"""Command-line entry point: ``finrank verify|sweep|average|a2|random``.

Exit codes: 0 success, 1 a check failed, 2 invalid input or usage.
``FINRANK_THREADS`` and ``FINRANK_TOL_SCALE`` set defaults for
``--threads`` and ``--tol-scale``; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from finrank import __version__
from finrank.averaging import line_average
from finrank.herglotz import poisson_kernel
from finrank.linalg import ValidationError
from finrank.perturbation import perturbed_model
from finrank.scenario import Scenario, ScenarioError, load_scenario, random_scenario
from finrank.singularity import A2_CONSTANT, a2_bound_check, conjugated_perturbed_measure, vector_mutual_singularity
from finrank.suites import SUITES, verify

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
AVERAGE_TOL = 1e-5


class InputError(Exception):
    pass


def parse_complex(text: str) -> complex:
    """Accept ``1+2i``, ``2i``, ``-0.5-1j`` and similar."""
    t = text.strip().replace(" ", "").replace("i", "j")
    try:
        return complex(t)
    except ValueError:
        raise InputError(f"cannot parse complex number {text!r}") from None


def _env_number(name: str, kind, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        v = kind(raw)
    except ValueError:
        raise InputError(f"environment variable {name}={raw!r} is not a valid {kind.__name__}") from None
    if v <= 0:
        raise InputError(f"environment variable {name} must be positive")
    return v


def _settings(args) -> tuple[int, float]:
    threads = args.threads if args.threads is not None else _env_number("FINRANK_THREADS", int, 1)
    scale = args.tol_scale if args.tol_scale is not None else _env_number("FINRANK_TOL_SCALE", float, 1.0)
    if threads < 1 or scale <= 0:
        raise InputError("--threads and --tol-scale must be positive")
    return threads, scale


def _write(path: str | None, text: str, out) -> None:
    if path is None or path == "-":
        out.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def cmd_verify(args, out) -> int:
    sc = load_scenario(args.scenario)
    threads, scale = _settings(args)
    suites = None if not args.suite else args.suite
    report = verify(sc, suites, tol_scale=scale, threads=threads)
    if args.out:
        _write(args.out, report.to_json(), out)
    if args.json and not args.out:
        out.write(report.to_json() + "\n")
    else:
        out.write(report.to_text() + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def sweep_rows(sc: Scenario, t_min: float, t_max: float, steps: int, eps_min: float = 1e-6):
    """One row per t: eigenvalues of A + B (G0 + t G) B^*, the number of
    atoms shared by M and G M^G G, the largest range overlap there and the
    sampled A2 maximum."""
    model = sc.model()
    M = model.measure()
    for t in np.linspace(t_min, t_max, steps):
        G = sc.gamma0 + t * sc.gamma
        eig = perturbed_model(model, G).eig.values
        res = vector_mutual_singularity(M, conjugated_perturbed_measure(model, G))
        overlap = res.max_overlap if res.common_atoms else float("nan")
        a2 = a2_bound_check(model, G, eps_min=eps_min).max_value
        yield float(t), [float(v) for v in eig], len(res.common_atoms), overlap, a2


def cmd_sweep(args, out) -> int:
    if args.steps < 2:
        raise InputError("--steps must be at least 2")
    if not args.t_max > args.t_min:
        raise InputError("--t-max must exceed --t-min")
    sc = load_scenario(args.scenario)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"eig{k}" for k in range(sc.N)] + ["n_common", "max_overlap", "a2_max"])
    failed = False
    prev = None
    for t, eig, n_common, ov, a2 in sweep_rows(sc, args.t_min, args.t_max, args.steps, args.eps_min):
        w.writerow([repr(t)] + [repr(v) for v in eig] + [n_common, repr(ov), repr(a2)])
        if prev is not None and np.any(np.asarray(eig) < np.asarray(prev) - 1e-9):
            failed = True  # trajectories must be nondecreasing for Gamma > 0
        if a2 > A2_CONSTANT + 1e-8 or (n_common and ov > 1e-8):
            failed = True
        prev = eig
    _write(args.out, buf.getvalue(), out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_average(args, out) -> int:
    if args.kernel != "poisson":
        raise InputError(f"unsupported kernel {args.kernel!r}")
    z = parse_complex(args.z)
    if z.imag == 0:
        raise InputError("the Poisson kernel needs Im z != 0")
    _, scale = _settings(args)
    fam = load_scenario(args.scenario).family()
    res = line_average(fam, poisson_kernel(z))
    target = fam.gamma_inverse()
    dev = float(np.abs(res.value - target).max())
    ok = dev <= AVERAGE_TOL * scale
    payload = {"z": {"re": z.real, "im": z.imag},
               "average": {"re": res.value.real.tolist(), "im": res.value.imag.tolist()},
               "gamma_inverse": {"re": target.real.tolist(), "im": target.imag.tolist()},
               "max_deviation": dev, "tolerance": AVERAGE_TOL * scale,
               "quadrature_error_estimate": res.quadrature_error_estimate,
               "status": "pass" if ok else "fail"}
    out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_a2(args, out) -> int:
    if not args.eps_min > 0:
        raise InputError("--eps-min must be positive")
    sc = load_scenario(args.scenario)
    model = sc.model()
    rows = []
    ok = True
    for label, G in (("Gamma0", sc.gamma0), ("Gamma0+Gamma", sc.gamma0 + sc.gamma)):
        r = a2_bound_check(model, G, eps_min=args.eps_min)
        ok &= r.holds
        rows.append({"coupling": label, "sup_norm": r.max_value, "a2": r.max_value ** 2,
                     "argmax": {"re": r.argmax.real, "im": r.argmax.imag},
                     "bound": A2_CONSTANT, "holds": r.holds})
    out.write(json.dumps({"eps_min": args.eps_min, "results": rows}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_random(args, out) -> int:
    try:
        sc = random_scenario(args.d, args.N, args.seed)
    except ScenarioError as exc:
        raise InputError(str(exc)) from None
    _write(args.out, sc.to_json(), out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finrank", description="Checks for finite-rank self-adjoint perturbations.")
    p.add_argument("--version", action="version", version=f"finrank {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--tol-scale", type=float, default=None)

    v = sub.add_parser("verify", help="run verification suites on a scenario")
    v.add_argument("scenario", help="scenario JSON file or inline JSON text")
    v.add_argument("--suite", action="append", choices=SUITES + ("all",),
                   help="suite to run (repeatable; default all)")
    v.add_argument("--out", help="write the JSON report here")
    v.add_argument("--json", action="store_true", help="print JSON instead of text")
    common(v)

    s = sub.add_parser("sweep", help="trajectories and A2 samples along Gamma0 + t Gamma")
    s.add_argument("scenario")
    s.add_argument("--t-min", type=float, required=True)
    s.add_argument("--t-max", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--eps-min", type=float, default=1e-6)
    s.add_argument("--out", help="CSV output path (default stdout)")

    a = sub.add_parser("average", help="line average of a kernel against Gamma^-1")
    a.add_argument("scenario")
    a.add_argument("--kernel", default="poisson")
    a.add_argument("--z", required=True, help="kernel point, e.g. 0.5+1i")
    common(a)

    q = sub.add_parser("a2", help="sampled joint Poisson A2 quantity")
    q.add_argument("scenario")
    q.add_argument("--eps-min", type=float, default=1e-6)

    r = sub.add_parser("random", help="generate a random cyclic scenario")
    r.add_argument("--d", type=int, required=True)
    r.add_argument("--N", type=int, required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out")
    return p


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "average": cmd_average,
            "a2": cmd_a2, "random": cmd_random}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (InputError, ValidationError) as exc:
        sys.stderr.write(f"finrank: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
