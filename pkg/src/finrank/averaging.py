"""Averaging of perturbed spectral measures over the line ``G0 + t G``.

For a positive definite ``G`` the perturbed measures integrate, in ``t``,
to ``G^{-1}`` times Lebesgue measure.  Three independent computations of
this average are provided:

* `residue_total` integrates the closed form ``h_z(t) = Im F_{G(t)}(z) / pi``
  (the Poisson-kernel case) with an exact series for the two tails;
* `line_average` integrates ``int f dM^{G(t)}`` using eigendecompositions of
  the perturbed matrices, for any vectorized ``f``;
* `orthogonal_weighted_average` additionally averages over the Frobenius
  orthogonal complement of ``G`` by importance-sampled Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as spi
from scipy.optimize import brentq

from finrank.herglotz import cauchy_matrix
from finrank.linalg import (
    ValidationError,
    check_hermitian,
    hermitize,
    im_part,
    operator_norm,
)
from finrank.measure import EvaluationError, integrate
from finrank.perturbation import (
    OperatorModel,
    aronszajn_krein,
    perturbed_measure_direct,
    perturb,
)
from finrank.herglotz import HerglotzEval

F_COND_LIMIT = 1e12
NULL_SET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PerturbationFamily:
    """The line ``t -> G0 + t G`` of couplings with ``G > 0``."""

    model: OperatorModel
    gamma0: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        d = self.model.d
        g0 = hermitize(check_hermitian(self.gamma0, name="Gamma0"))
        g = hermitize(check_hermitian(self.gamma, name="Gamma"))
        for name, m in (("Gamma0", g0), ("Gamma", g)):
            if m.shape != (d, d):
                raise ValidationError(f"{name} must be {d}x{d}, got {m.shape}")
        lam = float(np.linalg.eigvalsh(g).min())
        if lam <= 1e-12:
            raise ValidationError(f"Gamma must be positive definite: lambda_min = {lam:.3e}")
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "gamma", g)

    @property
    def d(self) -> int:
        return self.model.d

    def coupling(self, t: float) -> np.ndarray:
        return self.gamma0 + t * self.gamma

    def scaled(self, c: float) -> "PerturbationFamily":
        """Same ``G0`` with ``G`` replaced by ``c G``."""
        return PerturbationFamily(self.model, self.gamma0, c * self.gamma)

    def gamma_inverse(self) -> np.ndarray:
        return hermitize(np.linalg.inv(self.gamma))


# ----------------------------------------------------------------------------
# residue profile


def _inverse_transform(family: PerturbationFamily, z: complex) -> np.ndarray | None:
    F = cauchy_matrix(family.model.measure(), z)
    if np.linalg.cond(F) > F_COND_LIMIT:
        return None
    return np.linalg.inv(F)


def h_z_profile(family: PerturbationFamily, z: complex, t: float) -> np.ndarray:
    """``(1/pi) Im F_{G0 + t G}(z)``, evaluated as
    ``(2 pi i)^{-1} ([F(z)^{-1} + G(t)]^{-1} - [F(conj z)^{-1} + G(t)]^{-1})``.

    Falls back to the Aronszajn-Krein form when ``F(z)`` is numerically
    singular (for instance when ``B`` has columns outside the spectral
    subspace seen at `z`).
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValidationError(f"h_z needs Im z > 0, got {z}")
    Finv = _inverse_transform(family, z)
    return _h_from_inverse(family, z, Finv, t)


def _h_from_inverse(family, z, Finv, t) -> np.ndarray:
    G = family.coupling(t)
    if Finv is None:
        F = HerglotzEval(z, cauchy_matrix(family.model.measure(), z))
        return hermitize(im_part(aronszajn_krein(F, G).value)) / np.pi
    # F(conj z)^{-1} = (F(z)^{-1})^*, so the second inverse is the adjoint of the first
    X = np.linalg.inv(Finv + G)
    return hermitize(im_part(X)) / np.pi


def h_z_ak_form(family: PerturbationFamily, z: complex, t: float) -> np.ndarray:
    """Same quantity as `h_z_profile`, always through ``(I + F G)^{-1} F``."""
    F = HerglotzEval(complex(z), cauchy_matrix(family.model.measure(), z))
    return hermitize(im_part(aronszajn_krein(F, family.coupling(t)).value)) / np.pi


@dataclass(frozen=True, eq=False)
class ResidueTotal:
    value: np.ndarray
    error_estimate: float
    T: float
    tail: np.ndarray


def _artanh_series(S: np.ndarray, T: float, tol: float = 1e-16) -> tuple[np.ndarray, float]:
    # sum over odd k of S^k / (k T^k); converges for ||S|| < T
    Y = S / T
    Y2 = Y @ Y
    term = Y.copy()
    out = np.zeros_like(Y)
    k = 1
    while True:
        contrib = term / k
        out += contrib
        size = operator_norm(contrib)
        if size <= tol * (1 + operator_norm(out)) or k > 400:
            return out, size
        term = term @ Y2
        k += 2


def residue_total(family: PerturbationFamily, z: complex = 1j, T: float | None = None,
                  epsabs: float = 1e-10) -> ResidueTotal:
    """``int_R h_z(t) dt``; equals ``G^{-1}`` for every ``z`` in the upper
    half-plane.

    The interval ``[-T, T]`` is integrated adaptively.  Beyond it,
    ``[C + t G]^{-1}`` with ``C = F(z)^{-1} + G0`` expands in powers of
    ``1/t``; the even powers cancel between the two tails and the odd ones
    sum to ``-(2/pi) G^{-1/2} Im artanh(S/T) G^{-1/2}`` with
    ``S = G^{-1/2} C G^{-1/2}``, used here as an exact tail.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValidationError(f"residue_total needs Im z > 0, got {z}")
    d = family.d
    Finv = _inverse_transform(family, z)
    if Finv is None:
        raise EvaluationError(f"F({z}) is numerically singular; residue form unavailable")
    w, V = np.linalg.eigh(family.gamma)
    g_mhalf = (V / np.sqrt(w)) @ V.conj().T
    S = g_mhalf @ (Finv + family.gamma0) @ g_mhalf
    if T is None:
        T = max(20.0, 10.0 * operator_norm(S))
    elif T <= 1.5 * operator_norm(S):
        raise ValidationError(f"T = {T} too small for the tail series (needs T > {operator_norm(S):.3g})")
    series, last = _artanh_series(S, T)
    tail = -(2.0 / np.pi) * g_mhalf @ im_part(series) @ g_mhalf
    tail = hermitize(tail)

    def flat(t):
        h = _h_from_inverse(family, z, Finv, t)
        return np.concatenate([h.real.ravel(), h.imag.ravel()])

    # resonances of the profile sit near t = -Re eig(S) scaled back by G
    pts = sorted({float(p) for p in -np.linalg.eigvals(S).real if -T < p < T})
    pieces = [-T] + pts + [T]
    total = np.zeros(2 * d * d)
    err = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        if b - a <= 0:
            continue
        res, e = spi.quad_vec(flat, a, b, epsabs=epsabs, epsrel=1e-12, limit=2000)
        total += res
        err += float(e)
    inner = (total[: d * d] + 1j * total[d * d:]).reshape(d, d)
    value = hermitize(inner + tail)
    return ResidueTotal(value, err + float(last), float(T), tail)


# ----------------------------------------------------------------------------
# line average through eigendecompositions


@dataclass(frozen=True, eq=False)
class LineAverageResult:
    value: np.ndarray
    quadrature_error_estimate: float
    t_range_used: tuple
    tail_correction: np.ndarray


def _direct_integrand(family: PerturbationFamily, f: Callable, t: float) -> np.ndarray:
    M = perturbed_measure_direct(family.model, family.coupling(t))
    val = integrate(M, f)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"inner integral is not finite at t = {float(t)!r}")
    return val


def default_window(family: PerturbationFamily) -> float:
    """Half-width of the central t-window: past it, ``d`` eigenvalues of the
    perturbed matrix have left the spectrum of ``A`` far behind."""
    model = family.model
    bmin = float(np.linalg.svd(model.B, compute_uv=False)[-1])
    lam = float(np.linalg.eigvalsh(family.gamma).min())
    scale = 1.0 + operator_norm(model.A) + operator_norm(family.gamma0) * operator_norm(model.B) ** 2
    return 10.0 * scale / (lam * bmin ** 2)


def line_average(family: PerturbationFamily, f: Callable, T: float | None = None,
                 epsabs: float = 1e-9, tail_nodes: int = 40) -> LineAverageResult:
    """``int_R (int f dM^{G0 + t G}) dt`` for a vectorized integrable `f`.

    The window ``[-T, T]`` is integrated adaptively.  Each tail is mapped to
    ``u in (0, 1]`` by ``t = T/u``; the integrand is analytic in ``u`` there,
    so a Gauss-Legendre rule is used, and the difference against a rule of
    half the size is the tail error estimate.
    """
    if T is None:
        T = default_window(family)
    d = family.d

    def flat(t):
        v = _direct_integrand(family, f, t)
        return np.concatenate([v.real.ravel(), v.imag.ravel()])

    def unflat(v):
        return (v[: d * d] + 1j * v[d * d:]).reshape(d, d)

    res, err = spi.quad_vec(flat, -T, T, epsabs=epsabs, epsrel=1e-10, limit=4000)
    central = unflat(res)

    def tail(n):
        u, w = np.polynomial.legendre.leggauss(n)
        u = 0.5 * (u + 1.0)
        w = 0.5 * w
        acc = np.zeros((d, d), dtype=complex)
        for ui, wi in zip(u, w):
            t = T / ui
            jac = T / ui ** 2
            acc += wi * jac * (_direct_integrand(family, f, t) + _direct_integrand(family, f, -t))
        return acc

    fine = tail(tail_nodes)
    coarse = tail(tail_nodes // 2)
    tail_err = operator_norm(fine - coarse)
    value = central + fine
    if np.allclose(value, value.conj().T, atol=1e-12 * (1 + np.abs(value).max())):
        value = hermitize(value)
    return LineAverageResult(value, float(err) + tail_err, (-float(T), float(T)), fine)


# ----------------------------------------------------------------------------
# uniform Poisson bounds


@dataclass(frozen=True)
class PoissonBound:
    max_value: float
    bound: float
    holds: bool
    values: tuple


def poisson_mass(model: OperatorModel, G) -> float:
    """``|| int dM^G(x) / (1 + x^2) ||``."""
    M = perturbed_measure_direct(model, G)
    return operator_norm(integrate(M, lambda x: 1.0 / (1.0 + x ** 2)))


def poisson_mass_bound(model: OperatorModel, G_samples: Sequence, slack: float = 1e-8) -> PoissonBound:
    """Largest Poisson mass over the samples against ``2 ||(Im F(i)^{-1})^{-1}||``."""
    F = cauchy_matrix(model.measure(), 1j)
    bound = 2.0 * operator_norm(np.linalg.inv(im_part(np.linalg.inv(F))))
    vals = tuple(poisson_mass(model, G) for G in G_samples)
    top = max(vals) if vals else 0.0
    return PoissonBound(top, bound, top <= bound + slack, vals)


def poisson_growth_exponent(family: PerturbationFamily, t_min: float = 10.0,
                            t_max: float = 1e4, samples: int = 25) -> float:
    """Least-squares slope of ``log ||int dM^{G(t)}/(1+x^2)||`` against
    ``log |t|`` over both signs of ``t`` in ``[t_min, t_max]``."""
    ts = np.geomspace(t_min, t_max, samples)
    xs, ys = [], []
    for t in ts:
        for s in (t, -t):
            v = poisson_mass(family.model, family.coupling(s))
            if v > 0:
                xs.append(np.log(t))
                ys.append(np.log(v))
    if len(xs) < 2:
        return float("-inf")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


# ----------------------------------------------------------------------------
# averaging over the orthogonal complement of G


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of the real space of d x d Hermitian matrices."""
    out = []
    for j in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[j, j] = 1.0
        out.append(E)
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = E[k, j] = 1.0 / np.sqrt(2)
            out.append(E)
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = 1j / np.sqrt(2)
            E[k, j] = -1j / np.sqrt(2)
            out.append(E)
    return out


def frobenius(S: np.ndarray, T: np.ndarray) -> float:
    """``Re tr(T^* S)``."""
    return float(np.real(np.trace(T.conj().T @ S)))


def orthogonal_complement_basis(G: np.ndarray, tol: float = 1e-10) -> list[np.ndarray]:
    """Frobenius-orthonormal basis (``d^2 - 1`` elements) of the Hermitian
    matrices orthogonal to `G`, by Gram-Schmidt against ``G / ||G||_F``."""
    G = hermitize(G)
    d = G.shape[0]
    nrm = np.sqrt(frobenius(G, G))
    if nrm == 0:
        raise ValidationError("G must be nonzero")
    basis = [G / nrm]
    for E in hermitian_basis(d):
        v = E.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for q in basis:
                v = v - frobenius(v, q) * q
        n = np.sqrt(frobenius(v, v))
        if n > tol:
            basis.append(v / n)
    return basis[1:]


@dataclass(frozen=True)
class GaussianWeight:
    """``amplitude * exp(-|c|^2 / (2 width^2))`` in orthonormal coordinates
    ``c`` of an ``n``-dimensional space."""

    amplitude: float = 1.0
    width: float = 1.0

    def __call__(self, c: np.ndarray) -> np.ndarray:
        c = np.atleast_2d(c)
        return self.amplitude * np.exp(-np.sum(c ** 2, axis=1) / (2 * self.width ** 2))

    def total(self, n: int) -> float:
        return float(self.amplitude * (2 * np.pi * self.width ** 2) ** (n / 2))


@dataclass(frozen=True, eq=False)
class WeightedAverageResult:
    value: np.ndarray
    stderr: float  # operator norm of the entrywise standard-error matrix
    stderr_matrix: np.ndarray
    total_weight: float  # a = int Phi over the orthogonal complement
    samples: int
    budget_exceeded: bool


def _sample_coordinates(seed: int, index: int, n: int, sigma: float) -> np.ndarray:
    # counter-based stream: (seed, sample index) fixes the draw
    bitgen = np.random.Philox(key=int(seed) & (2 ** 64 - 1), counter=[0, 0, 0, index])
    return sigma * np.random.Generator(bitgen).standard_normal(n)


def _resonance_rule(gamma0s: np.ndarray, gamma: np.ndarray, nodes: int,
                    rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample quadrature nodes and weights on the whole t-line.

    The integrand peaks where ``G0 + t G`` is singular, i.e. at the
    eigenvalues ``r_j`` of ``-G^{-1/2} G0 G^{-1/2}``.  The line is cut at
    midpoints between consecutive ``r_j``; on the piece around ``r_j`` the
    substitution ``t = r_j + rho tan(phi)`` followed by Gauss-Legendre in
    ``phi`` resolves the peak and the algebraic tails alike.
    """
    w, V = np.linalg.eigh(gamma)
    g_mhalf = (V / np.sqrt(w)) @ V.conj().T
    r = np.linalg.eigvalsh(-(g_mhalf[None] @ gamma0s @ g_mhalf[None]))  # (batch, d)
    x, wx = np.polynomial.legendre.leggauss(nodes)
    batch, d = r.shape
    mids = 0.5 * (r[:, 1:] + r[:, :-1])
    lo = np.concatenate([np.full((batch, 1), -np.pi / 2), np.arctan((mids - r[:, 1:]) / rho)], axis=1)
    hi = np.concatenate([np.arctan((mids - r[:, :-1]) / rho), np.full((batch, 1), np.pi / 2)], axis=1)
    half = 0.5 * (hi - lo)
    phi = 0.5 * (hi + lo)[..., None] + half[..., None] * x  # (batch, d, nodes)
    t = r[..., None] + rho * np.tan(phi)
    wt = half[..., None] * wx * rho / np.cos(phi) ** 2
    return t.reshape(batch, -1), wt.reshape(batch, -1)


def _batched_line_integrals(model: OperatorModel, gamma0s: np.ndarray, gamma: np.ndarray,
                            f: Callable, nodes: int, rho: float) -> np.ndarray:
    """Line integrals ``int (int f dM^{G0 + t G}) dt`` for a batch of base
    points ``G0``; returns an array of shape (batch, d, d)."""
    t, wt = _resonance_rule(gamma0s, gamma, nodes, rho)
    B = model.B
    Bh = B.conj().T
    couplings = gamma0s[:, None] + t[:, :, None, None] * gamma[None, None]
    H = model.A[None, None] + B[None, None] @ couplings @ Bh[None, None]
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    lam, V = np.linalg.eigh(H)
    Y = np.conj(np.swapaxes(V, -1, -2)) @ B  # row k is (V^* B)_k
    fx = np.asarray(f(lam), dtype=float)
    inner = np.swapaxes(Y.conj() * fx[..., None], -1, -2) @ Y
    return np.einsum("bn,bnij->bij", wt, inner)


def orthogonal_weighted_average(family: PerturbationFamily, f: Callable,
                                phi: GaussianWeight = GaussianWeight(),
                                mc_samples: int = 10_000, seed: int = 0,
                                proposal_scale: float = 1.5, nodes: int = 64,
                                rel_tol: float = 0.05, chunk: int = 500) -> WeightedAverageResult:
    """Monte-Carlo estimate of
    ``int_{G-perp} Phi(G0') int_R (int f dM^{G0 + G0' + t G}) dt dG0'``.

    Base points ``G0'`` are drawn from an isotropic Gaussian of width
    ``proposal_scale * phi.width`` in orthonormal coordinates of ``G-perp``
    and reweighted by ``Phi / q``.  A proposal wider than ``Phi`` keeps
    the importance weights square integrable.  Each sample's line integral
    uses a fixed composite rule centred on the parameters where
    ``G0 + t G`` is singular.

    For ``d = 1`` the complement is ``{0}`` and the result is the plain
    line average, scaled by ``Phi(0)``.
    """
    basis = orthogonal_complement_basis(family.gamma)
    n = len(basis)
    a = phi.total(n)
    d = family.d
    if n == 0:
        res = line_average(family, f)
        return WeightedAverageResult(phi.amplitude * res.value, 0.0, np.zeros((d, d)),
                                     phi.amplitude, 1, False)
    if phi.amplitude == 0:
        z = np.zeros((d, d), dtype=complex)
        return WeightedAverageResult(z, 0.0, np.zeros((d, d)), 0.0, 0, False)
    sigma = proposal_scale * phi.width
    E = np.array(basis)
    rho = 1.0 / (float(np.linalg.eigvalsh(family.gamma).max()) * operator_norm(family.model.B) ** 2)
    draws = np.array([_sample_coordinates(seed, i, n, sigma) for i in range(mc_samples)])
    log_q = -np.sum(draws ** 2, axis=1) / (2 * sigma ** 2) - 0.5 * n * np.log(2 * np.pi * sigma ** 2)
    weights = phi(draws) / np.exp(log_q)
    contributions = np.empty((mc_samples, d, d), dtype=complex)
    for s in range(0, mc_samples, chunk):
        c = draws[s: s + chunk]
        g0s = family.gamma0[None] + np.einsum("bk,kij->bij", c, E)
        contributions[s: s + chunk] = weights[s: s + chunk, None, None] * _batched_line_integrals(
            family.model, g0s, family.gamma, f, nodes, rho)
    value = hermitize(contributions.mean(axis=0))
    se = (contributions.real.std(axis=0, ddof=1) + 1j * contributions.imag.std(axis=0, ddof=1))
    se = se / np.sqrt(mc_samples)
    se_norm = operator_norm(np.abs(se))
    target_scale = max(operator_norm(value), 1e-300)
    return WeightedAverageResult(value, se_norm, se, a, mc_samples,
                                 se_norm > rel_tol * target_scale)


# ----------------------------------------------------------------------------
# exceptional parameters


def eigen_trajectories(family: PerturbationFamily, t_grid: Sequence[float]) -> np.ndarray:
    """Sorted eigenvalues of ``A + B (G0 + t G) B^*`` along `t_grid`
    (shape ``len(t_grid) x N``)."""
    return np.array([np.linalg.eigvalsh(perturb(family.model, family.coupling(t)))
                     for t in t_grid])


def _atom_mass_at(family: PerturbationFamily, t: float, x: float, tol: float) -> float:
    H = perturb(family.model, family.coupling(t))
    lam, V = np.linalg.eigh(H)
    sel = np.abs(lam - x) <= tol * (1 + abs(x))
    if not sel.any():
        return 0.0
    Y = V[:, sel].conj().T @ family.model.B
    return float(np.linalg.norm(Y) ** 2)


def null_set_scan(family: PerturbationFamily, points: Sequence[float], t_grid: Sequence[float],
                  tol: float = NULL_SET_TOL, mass_tol: float = 1e-10) -> list[float]:
    """Parameters ``t`` in the window spanned by `t_grid` at which
    ``M^{G0 + t G}`` has an atom at one of `points`.

    Eigenvalue trajectories are nondecreasing in ``t`` (``G > 0``), so each
    trajectory crosses a level at most once up to plateaus; crossings are
    bracketed on the grid and refined with Brent's method.  A crossing only
    counts when the perturbed measure actually charges the point.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if t_grid.size < 2:
        raise ValidationError("t_grid needs at least two points")
    traj = eigen_trajectories(family, t_grid)
    scale = 1.0 + float(np.abs(traj).max())
    if np.any(np.diff(traj, axis=0) < -1e-10 * scale):
        raise AssertionError("eigenvalue trajectories are not monotone in t")
    found: list[float] = []
    for c in points:
        c = float(c)
        for k in range(traj.shape[1]):
            g = traj[:, k] - c

            def gk(t, k=k):
                return float(np.linalg.eigvalsh(perturb(family.model, family.coupling(t)))[k] - c)

            for i in range(t_grid.size):
                if abs(g[i]) <= tol * (1 + abs(c)):
                    found.append(float(t_grid[i]))
                if i + 1 < t_grid.size and g[i] * g[i + 1] < 0:
                    found.append(float(brentq(gk, t_grid[i], t_grid[i + 1], xtol=1e-14, rtol=1e-15)))
    found.sort()
    merged: list[float] = []
    for t in found:
        if merged and abs(t - merged[-1]) <= 1e-9 * (1 + abs(t)):
            continue
        merged.append(t)
    out = []
    for t in merged:
        if any(_atom_mass_at(family, t, c, 1e-8) > mass_tol for c in points):
            out.append(t)
    return out
