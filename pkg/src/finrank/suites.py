"""Verification suites run against a scenario, and the report they produce.

Each check has a name, a descriptive anchor naming the property it tests,
a default tolerance and a function computing a measured value.  Reports
are deterministic for a given scenario and version: wall-clock data lives
in a separate ``timing`` section.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from finrank import __version__
from finrank.averaging import (
    GaussianWeight,
    line_average,
    null_set_scan,
    orthogonal_weighted_average,
    poisson_growth_exponent,
    poisson_mass_bound,
    residue_total,
)
from finrank.herglotz import (
    HerglotzEval,
    blowup_ratios,
    boundary_density,
    cauchy_matrix,
    poisson_kernel,
)
from finrank.linalg import hermitize, operator_norm
from finrank.measure import ScalarMeasure, dyadic_density_bound_check, trace_measure
from finrank.perturbation import (
    aronszajn_krein,
    ac_density_transform,
    im_transform_identity_residual,
    perturbed_measure_direct,
)
from finrank.representation import (
    build_spectral_map,
    divided_difference_residual,
    intertwining_residual,
    kernel_a2_lower_bound,
    p_alpha_operator,
    t_epsilon_operator,
    tag_independence_residual,
    unitarity_residual,
)
from finrank.scenario import Scenario
from finrank.singularity import (
    A2_CONSTANT,
    a2_bound_check,
    a2_characteristic,
    common_atom_coupling,
    conjugated_perturbed_measure,
    vector_mutual_singularity,
)

SUITES = ("ak", "averaging", "ad", "a2", "representation", "bounds", "dyadic", "boundary")


@dataclass(frozen=True)
class Outcome:
    value: float
    passed: bool | None  # None: skipped
    repro: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CheckSpec:
    name: str
    suite: str
    anchor: str
    tolerance: float
    fn: Callable
    scaled: bool = True  # whether FINRANK_TOL_SCALE applies
    comparison: str = "<="


@dataclass(frozen=True)
class CheckRecord:
    name: str
    anchor: str
    status: str
    value: float | None
    tolerance: float
    repro: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "status": self.status,
                "value": self.value, "tolerance": self.tolerance, "repro": self.repro}


@dataclass
class Report:
    version: str
    scenario_digest: str
    records: list
    timing: dict

    @property
    def summary(self) -> dict:
        out = {"pass": 0, "fail": 0, "skip": 0}
        for r in self.records:
            out[r.status] += 1
        return out

    @property
    def passed(self) -> bool:
        return self.summary["fail"] == 0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {"tool": "finrank", "version": self.version, "scenario_digest": self.scenario_digest,
               "summary": self.summary, "checks": [r.to_dict() for r in self.records]}
        if include_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(_jsonable(self.to_dict(include_timing)), indent=2, sort_keys=True)

    def to_text(self) -> str:
        w = max([len(r.name) for r in self.records] + [5])
        lines = [f"finrank {self.version}  scenario {self.scenario_digest[:12]}"]
        for r in self.records:
            val = "-" if r.value is None else f"{r.value:.3e}"
            lines.append(f"{r.status.upper():4}  {r.name:<{w}}  {val:>10}  tol {r.tolerance:.1e}  {r.anchor}")
        s = self.summary
        lines.append(f"{s['pass']} passed, {s['fail']} failed, {s['skip']} skipped")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


# ----------------------------------------------------------------------------
# shared sample sets


class Context:
    """Lazily built objects shared by the checks of one run."""

    def __init__(self, scenario: Scenario, pair_override=None):
        self.scenario = scenario
        self.model = scenario.model()
        self.family = scenario.family()
        self.pair_override = pair_override
        rng = np.random.default_rng(scenario.seed)
        x = self.model.measure().locations
        lo, hi = float(x.min()) - 1.0, float(x.max()) + 1.0
        re = rng.uniform(lo, hi, 20)
        im = 10.0 ** rng.uniform(-2, 1, 20)
        self.z_upper = [complex(a, b) for a, b in zip(re, im)]
        self.z_all = self.z_upper + [z.conjugate() for z in self.z_upper[:4]]
        g0, g = scenario.gamma0, scenario.gamma
        w, V = np.linalg.eigh(g)
        singular = (V[:, -1:] * w[-1]) @ V[:, -1:].conj().T  # rank-one part of Gamma
        self.couplings = [("Gamma0", g0), ("Gamma", g), ("Gamma0+Gamma", g0 + g),
                          ("Gamma0-Gamma", g0 - g)]
        if scenario.d >= 2:
            self.couplings.append(("rank-deficient", hermitize(singular)))
        self.rng_seed = scenario.seed


def _worst(items):
    """items: iterable of (value, repro); returns max value and its repro."""
    best, rep = -np.inf, {}
    for v, r in items:
        if v > best:
            best, rep = v, r
    return float(best), rep


# ----------------------------------------------------------------------------
# check implementations


def _ak_values(ctx: Context):
    M = ctx.model.measure()
    for label, G in ctx.couplings:
        MG = perturbed_measure_direct(ctx.model, G)
        for z in ctx.z_all:
            F = HerglotzEval(z, cauchy_matrix(M, z))
            left = aronszajn_krein(F, G).value
            right = aronszajn_krein(F, G, side="right").value
            direct = cauchy_matrix(MG, z)
            yield label, z, F.value, left, right, direct, G


def check_ak_route(ctx):
    v, rep = _worst((operator_norm(d - l) / (1 + operator_norm(d)), {"G": lab, "z": z})
                    for lab, z, F, l, r, d, G in _ak_values(ctx))
    return v, rep


def check_ak_left_right(ctx):
    return _worst((operator_norm(l - r) / (1 + operator_norm(l)), {"G": lab, "z": z})
                  for lab, z, F, l, r, d, G in _ak_values(ctx))


def check_ak_resolvent(ctx):
    eye = np.eye(ctx.scenario.d)
    return _worst((operator_norm((eye + F @ G) @ l - F) / (1 + operator_norm(F)), {"G": lab, "z": z})
                  for lab, z, F, l, r, d, G in _ak_values(ctx))


def check_herglotz(ctx):
    M = ctx.model.measure()
    items = []
    for label, G in ctx.couplings:
        for z in ctx.z_upper:
            FG = aronszajn_krein(HerglotzEval(z, cauchy_matrix(M, z)), G)
            items.append((-FG.herglotz_margin(), {"G": label, "z": z}))
    return _worst(items)


def check_im_identity(ctx):
    return _worst((im_transform_identity_residual(ctx.model, G, z), {"G": lab, "z": z})
                  for lab, G in ctx.couplings for z in ctx.z_all)


def check_mass(ctx):
    BB = ctx.model.B.conj().T @ ctx.model.B
    return _worst((operator_norm(perturbed_measure_direct(ctx.model, G).total_mass() - BB)
                   / (1 + operator_norm(BB)), {"G": lab}) for lab, G in ctx.couplings)


def check_cyclicity(ctx):
    from finrank.perturbation import perturbed_model
    if not ctx.model.cyclicity:
        return Outcome(0.0, None, {"reason": "unperturbed model is not cyclic"})
    bad = [lab for lab, G in ctx.couplings if not perturbed_model(ctx.model, G).cyclicity]
    return Outcome(float(len(bad)), not bad, {"G": bad} if bad else {})


_Z_AVERAGE = (1j, 2j, 1 + 1j)


def check_residue_total(ctx):
    ginv = ctx.family.gamma_inverse()
    return _worst((float(np.abs(residue_total(ctx.family, z).value - ginv).max()), {"z": z})
                  for z in _Z_AVERAGE)


def check_residue_z_independence(ctx):
    vals = [residue_total(ctx.family, z).value for z in _Z_AVERAGE]
    return float(max(np.abs(a - b).max() for a in vals for b in vals)), {}


def check_line_average(ctx):
    res = line_average(ctx.family, poisson_kernel(1j))
    dev = float(np.abs(res.value - ctx.family.gamma_inverse()).max())
    return dev, {"f": "poisson kernel at i", "error_estimate": res.quadrature_error_estimate}


def check_homogeneity(ctx):
    a = residue_total(ctx.family, 1j).value
    b = residue_total(ctx.family.scaled(2.0), 1j).value
    return float(np.abs(b - 0.5 * a).max()), {"scale": 2.0}


def check_poisson_bound(ctx):
    ts = np.concatenate([np.linspace(-20, 20, 41), [-1e3, 1e3]])
    samples = [ctx.family.coupling(t) for t in ts] + [G for _, G in ctx.couplings]
    res = poisson_mass_bound(ctx.model, samples, slack=0.0)
    return Outcome(res.max_value - res.bound, res.max_value <= res.bound + ctx.tol,
                   {"max": res.max_value, "bound": res.bound})


def check_poisson_growth(ctx):
    return poisson_growth_exponent(ctx.family), {"t_range": [10.0, 1e4]}


def check_weighted_average(ctx):
    fam = ctx.family
    samples = 2000
    res = orthogonal_weighted_average(fam, poisson_kernel(1j), GaussianWeight(),
                                      mc_samples=samples, seed=ctx.rng_seed)
    target = res.total_weight * fam.gamma_inverse()
    dev = float(np.abs(res.value - target).max())
    if res.stderr == 0.0:
        return Outcome(dev, dev <= 1e-5, {"samples": res.samples, "exact_reduction": True})
    return Outcome(dev / res.stderr, dev / res.stderr <= ctx.tol,
                   {"samples": samples, "stderr": res.stderr, "seed": ctx.rng_seed})


def check_null_set(ctx):
    pts = list(ctx.model.measure().locations)
    grid = np.linspace(-10, 10, 201)
    out = null_set_scan(ctx.family, pts, grid)
    limit = ctx.model.N * len(pts)
    return Outcome(float(len(out)), len(out) <= limit, {"window": [-10, 10], "limit": limit})


def _ad_pairs(ctx):
    M = ctx.model.measure()
    if ctx.pair_override is not None:
        yield "override", ctx.pair_override[0], ctx.pair_override[1]
        return
    for label, G in ctx.couplings:
        yield label, M, conjugated_perturbed_measure(ctx.model, G)
    if ctx.scenario.d >= 2:
        rng = np.random.default_rng(ctx.rng_seed)
        G, lam = common_atom_coupling(ctx.model, rng)
        yield f"forced-common-atom@{lam:.6g}", M, conjugated_perturbed_measure(ctx.model, G)


def check_ad(ctx):
    worst, rep, ok = 0.0, {}, True
    for label, M, N in _ad_pairs(ctx):
        res = vector_mutual_singularity(M, N)
        if not res.singular:
            ok = False
            x, ov = max(res.violations, key=lambda p: p[1])
            return Outcome(ov, False, {"G": label, "atom": x, "overlap": ov})
        if res.max_overlap >= worst:
            worst, rep = res.max_overlap, {"G": label, "common_atoms": len(res.common_atoms)}
    return Outcome(worst, ok and worst <= ctx.tol, rep)


def check_ad_witness(ctx):
    bad = []
    for label, M, N in _ad_pairs(ctx):
        res = vector_mutual_singularity(M, N)
        if res.singular and not res.witness.verify(M, N):
            bad.append(label)
    return Outcome(float(len(bad)), not bad, {"G": bad} if bad else {})


def check_a2_bound(ctx):
    items = []
    for label, G in ctx.couplings:
        r = a2_bound_check(ctx.model, G, eps_min=1e-6, slack=0.0)
        items.append((r.max_value, {"G": label, "z": r.argmax}))
    v, rep = _worst(items)
    return Outcome(v, v <= A2_CONSTANT + ctx.tol, rep)


def check_a2_identity(ctx):
    return _worst((a2_bound_check(ctx.model, G, eps_min=1e-6).identity_residual, {"G": lab})
                  for lab, G in ctx.couplings)


def check_a2_order(ctx):
    M = ctx.model.measure()
    return _worst((a2_characteristic(M, conjugated_perturbed_measure(ctx.model, G)).order_residual,
                   {"G": lab}) for lab, G in ctx.couplings)


def _atomic_or_skip(ctx):
    return ctx.scenario.ac is None


def _rep_coupling(ctx):
    return ctx.scenario.gamma0 + ctx.scenario.gamma


def check_unitarity(ctx):
    return _worst((unitarity_residual(build_spectral_map(ctx.model, G)), {"G": lab})
                  for lab, G in ctx.couplings)


def check_intertwining(ctx):
    return _worst((intertwining_residual(build_spectral_map(ctx.model, G), ctx.model, G), {"G": lab})
                  for lab, G in ctx.couplings)


def check_tag_independence(ctx):
    return _worst((tag_independence_residual(ctx.model, G), {"G": lab}) for lab, G in ctx.couplings)


def check_divided_difference(ctx):
    return _worst((divided_difference_residual(ctx.model, G, seed=ctx.rng_seed), {"G": lab})
                  for lab, G in ctx.couplings)


_EPS_LADDER = (1.0, 0.1, 0.01, 1e-4)


def check_t_epsilon(ctx):
    items = []
    for lab, G in ctx.couplings:
        for e in _EPS_LADDER:
            for sgn in (1, -1):
                items.append((t_epsilon_operator(ctx.model, G, sgn * e).norm, {"G": lab, "eps": sgn * e}))
    v, rep = _worst(items)
    return Outcome(v, v <= 2.0 + ctx.tol, rep)


def _alpha_ladder(ctx):
    xs = ctx.model.measure().locations
    return [complex(x, h) for x in xs for h in (1.0, 1e-1, 1e-2, 1e-3, 1e-4)]


def check_p_alpha(ctx):
    items = [(p_alpha_operator(ctx.model, G, a).norm, {"G": lab, "alpha": a})
             for lab, G in ctx.couplings for a in _alpha_ladder(ctx)]
    v, rep = _worst(items)
    return Outcome(v, v <= 4.0 + ctx.tol, rep)


def check_kernel_factorization(ctx):
    M = ctx.model.measure()
    bad = []
    for lab, G in ctx.couplings:
        N = conjugated_perturbed_measure(ctx.model, G)
        for a in _alpha_ladder(ctx)[::3]:
            r = kernel_a2_lower_bound(lambda s, a=a: 2 * a.imag / (s - a),
                                      lambda t, a=a: 1.0 / (t - np.conj(a)), M, N)
            if not r.holds:
                bad.append({"G": lab, "alpha": a, "lhs": r.lhs, "norm": r.t_norm})
    return Outcome(float(len(bad)), not bad, bad[0] if bad else {})


def check_a2_chain(ctx):
    """A2 sample at alpha equals ||P_alpha|| / (2 pi)."""
    items = []
    for lab, G in ctx.couplings:
        for a in _alpha_ladder(ctx)[::2]:
            a2 = a2_bound_check(ctx.model, G, z_samples=[a]).max_value
            p = p_alpha_operator(ctx.model, G, a).norm / (2 * np.pi)
            items.append((abs(a2 - p) / (1 + p), {"G": lab, "alpha": a}))
    return _worst(items)


def _dyadic_inputs(ctx):
    mu = trace_measure(ctx.model.measure())
    lo = np.floor(float(mu.locations.min()) - 1.0)
    hi = np.ceil(float(mu.locations.max()) + 1.0)
    ac = ctx.scenario.ac_measure()
    if ac is not None:
        dens = np.real(np.trace(ac.ac.densities, axis1=1, axis2=2))
        mu = ScalarMeasure(mu.locations, mu.masses, ac.ac.start, ac.ac.end, dens)
    else:
        # atomic + smooth background, so atom-free cells carry mass
        u = np.linspace(0.0, 1.0, 33)
        mu = ScalarMeasure(mu.locations, mu.masses, lo, hi, 0.5 + 0.4 * np.sin(2 * np.pi * u))
    level = 3
    cells = np.arange(lo, hi, 2.0 ** -level)
    free = [(float(a), float(a + 2.0 ** -level)) for a in cells
            if not np.any((mu.locations >= a) & (mu.locations < a + 2.0 ** -level))]
    return mu, free


def check_dyadic(ctx):
    mu, E = _dyadic_inputs(ctx)
    if not E:
        return Outcome(0.0, None, {"reason": "no atom-free cells"})
    probe = dyadic_density_bound_check(mu, E, np.inf)
    alpha = 1.01 * probe.max_lower_density + 1e-12
    res = dyadic_density_bound_check(mu, E, alpha)
    if not res.applicable:
        return Outcome(0.0, None, {"reason": "hypothesis not met"})
    return Outcome(res.mass - res.bound, bool(res.holds), {"alpha": alpha, "cells": len(E)})


def _interior_points(ac, count: int = 7) -> list[float]:
    """Cell midpoints of the density grid near evenly spread interior
    locations; nodes are kinks of the piecewise-linear density, where the
    boundary limit picks up an eps log eps term that extrapolation cannot
    remove."""
    h = ac.spacing
    targets = np.linspace(ac.start, ac.end, count + 4)[2:-2]
    cells = np.clip(np.floor((targets - ac.start) / h), 0, ac.nodes - 2)
    return [float(ac.start + (c + 0.5) * h) for c in cells]


def check_ac_recovery(ctx):
    M = ctx.scenario.ac_measure()
    if M is None:
        return Outcome(0.0, None, {"reason": "scenario has no a.c. part"})
    ac = M.ac
    xs = _interior_points(ac)
    items = []
    for x in xs:
        bv = boundary_density(M, float(x))
        W = ac.density_at(float(x))
        if bv.value is None:
            items.append((float("inf"), {"x": float(x), "reason": "boundary limit diverged"}))
            continue
        items.append((operator_norm(bv.value - W) / max(operator_norm(W), 1e-12), {"x": float(x)}))
    return _worst(items)


def check_kato_rosenblum(ctx):
    M = ctx.scenario.ac_measure()
    if M is None:
        return Outcome(0.0, None, {"reason": "scenario has no a.c. part"})
    ac = M.ac
    items, rank_bad, skipped = [], [], []
    G = ctx.scenario.gamma0
    for x in _interior_points(ac):
        r = ac_density_transform(M, G, float(x))
        if r.exceptional:
            skipped.append(float(x))
            continue
        items.append((r.residual, {"x": float(x)}))
        if not r.rank_ok:
            rank_bad.append(float(x))
    if not items:
        return Outcome(0.0, None, {"exceptional": skipped})
    v, rep = _worst(items)
    rep = dict(rep, exceptional=skipped, rank_mismatch=rank_bad)
    return Outcome(v, v <= ctx.tol and not rank_bad, rep)


def check_singular_blowup(ctx):
    mu = trace_measure(ctx.model.measure())
    items = []
    for x in mu.locations:
        r = blowup_ratios(mu, float(x), (1e-4, 5e-5, 2.5e-5))[0]
        items.append((abs(r - 1.0), {"atom": float(x), "ratio": float(r)}))
    return _worst(items)


CHECKS = [
    CheckSpec("ak-route-agreement", "ak", "aronszajn-krein formula vs eigendecomposition", 1e-9, check_ak_route),
    CheckSpec("ak-left-right", "ak", "aronszajn-krein left and right forms", 1e-10, check_ak_left_right),
    CheckSpec("ak-resolvent-identity", "ak", "(I + F G) F_G = F", 1e-10, check_ak_resolvent),
    CheckSpec("herglotz-preservation", "ak", "perturbed transforms are Herglotz", 1e-12, check_herglotz),
    CheckSpec("im-identity", "ak", "imaginary-part congruence identity", 1e-9, check_im_identity),
    CheckSpec("mass-conservation", "ak", "total mass B^*B preserved", 1e-10, check_mass),
    CheckSpec("cyclicity-preserved", "ak", "cyclicity preserved under perturbation", 0.0, check_cyclicity, False),
    CheckSpec("residue-total", "averaging", "residue integral equals Gamma^-1", 1e-6, check_residue_total),
    CheckSpec("residue-z-independence", "averaging", "residue integral independent of z", 2e-6,
              check_residue_z_independence),
    CheckSpec("line-average", "averaging", "spectral averaging over the coupling line", 1e-5, check_line_average),
    CheckSpec("gamma-homogeneity", "averaging", "average scales as Gamma^-1", 1e-10, check_homogeneity),
    CheckSpec("poisson-bound", "averaging", "uniform Poisson boundedness", 1e-8, check_poisson_bound),
    CheckSpec("poisson-growth", "averaging", "Poisson mass growth exponent along the line", 2.1,
              check_poisson_growth, False),
    CheckSpec("weighted-average", "averaging", "averaging over the orthogonal complement of Gamma", 3.0,
              check_weighted_average, False),
    CheckSpec("null-set-finite", "averaging", "exceptional couplings finite on a window", 0.0,
              check_null_set, False),
    CheckSpec("ad-singularity", "ad", "vector mutual singularity of M and G M^G G", 1e-8, check_ad),
    CheckSpec("ad-witness", "ad", "singularity witness projections", 0.0, check_ad_witness, False),
    CheckSpec("a2-bound", "a2", "joint Poisson A2 bound 8/pi", 1e-8, check_a2_bound),
    CheckSpec("a2-identity", "a2", "A2 quantity with G inside the root", 1e-10, check_a2_identity),
    CheckSpec("a2-order-symmetry", "a2", "A2 characteristic order invariance", 1e-10, check_a2_order),
    CheckSpec("spectral-unitarity", "representation", "spectral representation is unitary", 1e-8,
              check_unitarity),
    CheckSpec("spectral-intertwining", "representation", "spectral representation intertwines", 1e-8,
              check_intertwining),
    CheckSpec("spectral-tag-independence", "representation", "spectral representation independent of tags",
              1e-8, check_tag_independence),
    CheckSpec("spectral-divided-difference", "representation", "divided-difference form of the representation",
              1e-8, check_divided_difference),
    CheckSpec("t-epsilon-norm", "bounds", "weighted Cauchy operators have norm at most 2", 1e-8, check_t_epsilon),
    CheckSpec("p-alpha-norm", "bounds", "weighted Poisson operators have norm at most 4", 1e-8, check_p_alpha),
    CheckSpec("kernel-factorization", "bounds", "factorized kernel lower bound", 0.0,
              check_kernel_factorization, False),
    CheckSpec("a2-p-alpha-chain", "bounds", "A2 sample equals Poisson operator norm / 2 pi", 1e-10,
              check_a2_chain),
    CheckSpec("dyadic-density", "dyadic", "dyadic lower density bound", 0.0, check_dyadic, False),
    CheckSpec("ac-density-recovery", "boundary", "a.c. density from boundary values", 0.01, check_ac_recovery),
    CheckSpec("kato-rosenblum", "boundary", "a.c. density congruence and rank", 1e-4, check_kato_rosenblum),
    CheckSpec("singular-blowup", "boundary", "Poisson extension blowup at atoms", 5e-3, check_singular_blowup),
]

CHECKS_BY_NAME = {c.name: c for c in CHECKS}
ANCHORS = {c.name: c.anchor for c in CHECKS}


def select(suites) -> list[CheckSpec]:
    if suites is None or "all" in suites:
        return list(CHECKS)
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(sorted(unknown))}")
    return [c for c in CHECKS if c.suite in suites]


def _run_one(spec: CheckSpec, ctx: Context, tolerance: float) -> tuple[CheckRecord, float]:
    start = time.perf_counter()
    ctx_local = _Bound(ctx, tolerance)
    try:
        out = spec.fn(ctx_local)
        if not isinstance(out, Outcome):
            value, repro = out
            out = Outcome(value, value <= tolerance, repro)
        status = "skip" if out.passed is None else ("pass" if out.passed else "fail")
        value = None if out.passed is None else float(out.value)
        rec = CheckRecord(spec.name, spec.anchor, status, value, tolerance, dict(out.repro))
    except Exception as exc:  # a crashing check is a failing check
        rec = CheckRecord(spec.name, spec.anchor, "fail", None, tolerance,
                          {"error": f"{type(exc).__name__}: {exc}"})
    return rec, time.perf_counter() - start


class _Bound:
    """Context view carrying the tolerance of the check being run."""

    def __init__(self, ctx: Context, tol: float):
        self._ctx = ctx
        self.tol = tol

    def __getattr__(self, name):
        return getattr(self._ctx, name)


def effective_tolerance(spec: CheckSpec, scenario: Scenario, tol_scale: float) -> float:
    if spec.name in scenario.tolerances:
        return scenario.tolerances[spec.name]
    return spec.tolerance * tol_scale if spec.scaled else spec.tolerance


def verify(scenario: Scenario, suites=None, tol_scale: float = 1.0, threads: int = 1,
           pair_override=None) -> Report:
    """Run the selected suites; records come back in registry order
    regardless of `threads`."""
    specs = select(suites)
    ctx = Context(scenario, pair_override)
    started = datetime.now(timezone.utc).isoformat()
    args = [(s, ctx, effective_tolerance(s, scenario, tol_scale)) for s in specs]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _run_one(*a), args))
    else:
        results = [_run_one(*a) for a in args]
    records = [r for r, _ in results]
    timing = {"started": started, "seconds": {r.name: round(t, 6) for r, t in results}}
    return Report(__version__, scenario.digest(), records, timing)
