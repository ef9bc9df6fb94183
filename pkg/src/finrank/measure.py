"""Matrix-valued measures: finite atom lists plus an optional absolutely
continuous part given by a piecewise-linear PSD density on a uniform grid.

Atoms model the singular part and the grid density models the a.c. part;
there is no singular-continuous component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from finrank.linalg import (
    ValidationError,
    NotPSDError,
    PSD_CLAMP,
    hermitize,
    operator_norm,
    psd_rank,
)

ATOM_MERGE_TOL = 1e-12
LOCATION_MATCH_TOL = 1e-10


class EvaluationError(ValueError):
    """A test function returned a non-finite value."""


def _check_psd_stack(mats: np.ndarray, what: str) -> np.ndarray:
    if mats.size == 0:
        return mats
    asym = np.abs(mats - np.conj(np.swapaxes(mats, -1, -2))).max(axis=(-1, -2))
    norms = np.abs(mats).max(axis=(-1, -2))
    bad = np.nonzero(asym > 1e-12 * (1.0 + norms))[0]
    if bad.size:
        raise ValidationError(f"{what} #{bad[0]} is not Hermitian (asymmetry {asym[bad[0]]:.3e})")
    mats = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    lo = np.linalg.eigvalsh(mats)
    top = np.abs(lo).max(axis=-1)
    bad = np.nonzero(lo[:, 0] < -PSD_CLAMP * top - 1e-300)[0]
    if bad.size:
        k = bad[0]
        raise NotPSDError(f"{what} #{k} is not PSD: eigenvalue {lo[k, 0]:.6e}")
    return mats


@dataclass(frozen=True, eq=False)
class ACPart:
    """Piecewise-linear density on ``nodes`` equally spaced points of
    ``[start, end]``; zero outside."""

    start: float
    end: float
    densities: np.ndarray  # (nodes, d, d)

    def __post_init__(self):
        D = np.asarray(self.densities, dtype=complex)
        if D.ndim != 3 or D.shape[1] != D.shape[2]:
            raise ValidationError(f"densities must have shape (nodes, d, d), got {D.shape}")
        if D.shape[0] < 2:
            raise ValidationError("an a.c. grid needs at least two nodes")
        if not self.end > self.start:
            raise ValidationError(f"empty grid [{self.start}, {self.end}]")
        object.__setattr__(self, "densities", _check_psd_stack(D, "density node"))

    @property
    def nodes(self) -> int:
        return self.densities.shape[0]

    @property
    def spacing(self) -> float:
        return (self.end - self.start) / (self.nodes - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.end, self.nodes)

    def density_at(self, x: float) -> np.ndarray:
        d = self.densities.shape[1]
        if x < self.start or x > self.end:
            return np.zeros((d, d), dtype=complex)
        pos = (x - self.start) / self.spacing
        j = min(int(math.floor(pos)), self.nodes - 2)
        s = pos - j
        return (1.0 - s) * self.densities[j] + s * self.densities[j + 1]


@dataclass(frozen=True, eq=False)
class MatrixMeasure:
    d: int
    locations: np.ndarray
    weights: np.ndarray
    ac: ACPart | None = None

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float).reshape(-1)
        W = np.asarray(self.weights, dtype=complex).reshape(-1, self.d, self.d)
        if W.shape[0] != locs.size:
            raise ValidationError(f"{locs.size} atom locations but {W.shape[0]} weights")
        if locs.size > 1 and np.min(np.diff(locs)) <= ATOM_MERGE_TOL:
            raise ValidationError("atom locations must be strictly increasing (use from_atoms)")
        if not np.all(np.isfinite(locs)):
            raise ValidationError("atom locations must be finite")
        W = _check_psd_stack(W, "atom weight")
        if self.ac is not None and self.ac.densities.shape[1] != self.d:
            raise ValidationError("a.c. density size does not match d")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", W)

    @classmethod
    def from_atoms(cls, locations, weights, d: int | None = None, ac: ACPart | None = None,
                   merge_tol: float = ATOM_MERGE_TOL) -> "MatrixMeasure":
        """Build from unsorted atoms; atoms closer than `merge_tol` are
        merged (summed weight, mean location)."""
        locs = np.asarray(locations, dtype=float).reshape(-1)
        if d is None:
            W0 = np.asarray(weights, dtype=complex)
            d = 1 if W0.ndim <= 1 else W0.shape[-1]
        W = np.asarray(weights, dtype=complex).reshape(-1, d, d)
        order = np.argsort(locs, kind="stable")
        locs, W = locs[order], W[order]
        out_x, out_w = [], []
        i = 0
        while i < locs.size:
            j = i + 1
            while j < locs.size and locs[j] - locs[j - 1] <= merge_tol:
                j += 1
            out_x.append(float(np.mean(locs[i:j])))
            out_w.append(W[i:j].sum(axis=0))
            i = j
        return cls(d, np.array(out_x), np.array(out_w).reshape(-1, d, d), ac)

    @classmethod
    def zero(cls, d: int) -> "MatrixMeasure":
        return cls(d, np.zeros(0), np.zeros((0, d, d), dtype=complex))

    @property
    def is_atomic(self) -> bool:
        return self.ac is None

    @property
    def atoms(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.locations.tolist(), self.weights))

    def singular_part(self) -> "MatrixMeasure":
        return MatrixMeasure(self.d, self.locations, self.weights)

    def scaled(self, c: float) -> "MatrixMeasure":
        ac = None if self.ac is None else ACPart(self.ac.start, self.ac.end, c * self.ac.densities)
        return MatrixMeasure(self.d, self.locations, c * self.weights, ac)

    def congruence(self, G) -> "MatrixMeasure":
        """The measure ``G^* M G`` (atomwise and nodewise)."""
        G = np.asarray(G, dtype=complex)
        gn = float(np.linalg.norm(G, 2)) ** 2 if G.size else 0.0
        W = _congruent_stack(G, self.weights, gn)
        ac = None
        if self.ac is not None:
            ac = ACPart(self.ac.start, self.ac.end, _congruent_stack(G, self.ac.densities, gn))
        return MatrixMeasure(G.shape[1], self.locations, W, ac)

    def atom_weight(self, x: float, tol: float = LOCATION_MATCH_TOL) -> np.ndarray:
        if self.locations.size:
            k = int(np.argmin(np.abs(self.locations - x)))
            if abs(self.locations[k] - x) <= tol * (1.0 + abs(x)):
                return self.weights[k]
        return np.zeros((self.d, self.d), dtype=complex)

    def total_mass(self) -> np.ndarray:
        return integrate(self, lambda x: np.ones_like(x))


def _congruent_stack(G: np.ndarray, W: np.ndarray, g_norm_sq: float) -> np.ndarray:
    """``G^* W_k G`` with eigenvalues below the rounding level of the
    product, ``||G||^2 ||W_k||``, clamped to zero; cancellation can leave
    tiny negative eigenvalues that are not a property of the input."""
    out = hermitize_stack(np.einsum("ji,kjl,lm->kim", G.conj(), W, G))
    if out.size == 0:
        return out
    lam, V = np.linalg.eigh(out)
    floor = 1e-13 * g_norm_sq * np.abs(np.linalg.eigvalsh(W)).max(axis=-1)
    clip = (lam < 0) & (lam >= -floor[:, None])
    if not clip.any():
        return out
    lam = np.where(clip, 0.0, lam)
    return hermitize_stack((V * lam[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2)))


def hermitize_stack(W: np.ndarray) -> np.ndarray:
    return 0.5 * (W + np.conj(np.swapaxes(W, -1, -2)))


@dataclass(frozen=True, eq=False)
class ScalarMeasure:
    """Nonnegative scalar measure: atoms plus a piecewise-linear density."""

    locations: np.ndarray
    masses: np.ndarray
    ac_start: float = 0.0
    ac_end: float = 1.0
    ac_density: np.ndarray | None = None
    _cum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float).reshape(-1)
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if locs.size != m.size:
            raise ValidationError("locations and masses differ in length")
        if np.any(m < 0):
            raise ValidationError("atom masses must be nonnegative")
        order = np.argsort(locs, kind="stable")
        object.__setattr__(self, "locations", locs[order])
        object.__setattr__(self, "masses", m[order])
        if self.ac_density is not None:
            v = np.asarray(self.ac_density, dtype=float).reshape(-1)
            if v.size < 2 or np.any(v < 0):
                raise ValidationError("a.c. density needs >= 2 nonnegative node values")
            h = (self.ac_end - self.ac_start) / (v.size - 1)
            cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
            object.__setattr__(self, "ac_density", v)
            object.__setattr__(self, "_cum", cum)

    @classmethod
    def atomic(cls, locations, masses) -> "ScalarMeasure":
        return cls(np.asarray(locations, float), np.asarray(masses, float))

    @classmethod
    def uniform(cls, start: float, end: float, density: float = 1.0, nodes: int = 2,
                locations=(), masses=()) -> "ScalarMeasure":
        return cls(np.asarray(locations, float), np.asarray(masses, float), start, end,
                   np.full(nodes, float(density)))

    def cumulative(self, x) -> np.ndarray:
        """``mu((-inf, x))`` for an array of points."""
        x = np.asarray(x, dtype=float)
        csum = np.concatenate([[0.0], np.cumsum(self.masses)])
        out = csum[np.searchsorted(self.locations, x, side="left")]
        if self.ac_density is not None:
            v = self.ac_density
            n = v.size
            h = (self.ac_end - self.ac_start) / (n - 1)
            xc = np.clip(x, self.ac_start, self.ac_end)
            j = np.clip(np.floor((xc - self.ac_start) / h).astype(int), 0, n - 2)
            s = xc - (self.ac_start + j * h)
            out = out + self._cum[j] + v[j] * s + (v[j + 1] - v[j]) * s * s / (2.0 * h)
        return out

    def mass(self, a: float, b: float) -> float:
        """``mu([a, b))``."""
        c = self.cumulative(np.array([a, b]))
        return float(c[1] - c[0])

    def as_matrix(self) -> MatrixMeasure:
        ac = None
        if self.ac_density is not None:
            ac = ACPart(self.ac_start, self.ac_end, self.ac_density.reshape(-1, 1, 1))
        return MatrixMeasure(1, self.locations, self.masses.reshape(-1, 1, 1), ac)


# ----------------------------------------------------------------------------
# operations


def spectral_measure(model, merge_tol: float = ATOM_MERGE_TOL) -> MatrixMeasure:
    """Matrix spectral measure ``B^* E(.) B`` of an operator model.

    One atom per distinct eigenvalue of ``model.A``; eigenvalues closer than
    ``merge_tol * max(1, ||A||)`` form one atom with weight ``B^* P B``.
    """
    values, vectors = model.eig.values, model.eig.vectors
    B = np.asarray(model.B, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 0.0)
    tol = merge_tol * scale
    locs, weights = [], []
    i = 0
    while i < values.size:
        j = i + 1
        while j < values.size and values[j] - values[j - 1] <= tol:
            j += 1
        Y = vectors[:, i:j].conj().T @ B
        locs.append(float(np.mean(values[i:j])))
        weights.append(Y.conj().T @ Y)
        i = j
    d = B.shape[1]
    return MatrixMeasure(d, np.array(locs), hermitize_stack(np.array(weights).reshape(-1, d, d)))


def trace_measure(M: MatrixMeasure) -> ScalarMeasure:
    masses = np.real(np.trace(M.weights, axis1=1, axis2=2)) if M.locations.size else np.zeros(0)
    masses = np.maximum(masses, 0.0)
    if M.ac is None:
        return ScalarMeasure(M.locations, masses)
    dens = np.maximum(np.real(np.trace(M.ac.densities, axis1=1, axis2=2)), 0.0)
    return ScalarMeasure(M.locations, masses, M.ac.start, M.ac.end, dens)


def _evaluate(f: Callable, xs: np.ndarray) -> np.ndarray:
    if xs.size == 0:
        return np.zeros(0, dtype=complex)
    vals = np.broadcast_to(np.asarray(f(xs), dtype=complex), xs.shape)
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        raise EvaluationError(f"test function is not finite at x = {float(xs[bad[0]])!r}")
    return vals


def integrate(M: MatrixMeasure, f: Callable) -> np.ndarray:
    """``int f dM``: exact over atoms, trapezoid rule over the grid density.

    `f` must accept a 1-d array of points and return values of the same
    shape (or a scalar).
    """
    out = np.einsum("k,kij->ij", _evaluate(f, M.locations), M.weights) if M.locations.size \
        else np.zeros((M.d, M.d), dtype=complex)
    if M.ac is not None:
        fx = _evaluate(f, M.ac.grid)
        wts = np.full(M.ac.nodes, M.ac.spacing)
        wts[0] = wts[-1] = 0.5 * M.ac.spacing
        out = out + np.einsum("k,kij->ij", fx * wts, M.ac.densities)
    return out


def unitarily_equivalent(M: MatrixMeasure, N: MatrixMeasure,
                         tol: float = LOCATION_MATCH_TOL) -> bool:
    """Whether multiplication by t in L^2(M) and in L^2(N) are unitarily
    equivalent: same support and the same density rank pointwise.

    The dimensions ``M.d`` and ``N.d`` may differ.
    """
    if (M.ac is None) != (N.ac is None):
        raise ValidationError("cannot compare an atomic measure with one carrying an a.c. part")
    if M.ac is not None:
        a, b = M.ac, N.ac
        if a.nodes != b.nodes or abs(a.start - b.start) > tol or abs(a.end - b.end) > tol:
            raise ValidationError("a.c. parts must live on the same grid to be compared")
        for Dm, Dn in zip(a.densities, b.densities):
            if psd_rank(Dm) != psd_rank(Dn):
                return False
    mx = [x for x, W in M.atoms if psd_rank(W) > 0]
    nx = [x for x, W in N.atoms if psd_rank(W) > 0]
    if len(mx) != len(nx):
        return False
    for x, y in zip(mx, nx):
        if abs(x - y) > tol * (1.0 + abs(x)):
            return False
        if psd_rank(M.atom_weight(x)) != psd_rank(N.atom_weight(y)):
            return False
    return True


def form_boundedness(M: MatrixMeasure) -> float:
    """``|| int dM(t) / (|t| + 1) ||``."""
    return operator_norm(integrate(M, lambda x: 1.0 / (np.abs(x) + 1.0)))


# ----------------------------------------------------------------------------
# dyadic densities


def dyadic_expectation(mu: ScalarMeasure, n: int, x: float) -> float:
    """``mu(I) / |I|`` for the dyadic interval ``I`` of length ``2**-n``
    containing `x`."""
    length = 2.0 ** (-n)
    k = math.floor(x / length)
    return mu.mass(k * length, (k + 1) * length) / length


def _alignment_level(e: float, n_max: int) -> int:
    if e == 0.0:
        return -1024
    for n in range(-60, n_max + 1):
        scaled = e * 2.0 ** n
        if scaled == math.floor(scaled):
            return n
    raise ValidationError(f"endpoint {float(e)!r} is not dyadic at level <= {n_max}")


@dataclass(frozen=True)
class DyadicCheck:
    applicable: bool
    holds: bool | None
    mass: float
    bound: float
    max_lower_density: float


def dyadic_density_bound_check(mu: ScalarMeasure, E: Sequence[tuple[float, float]],
                               alpha: float, n_max: int = 12) -> DyadicCheck:
    """Check ``mu(E) <= alpha |E|`` whenever the lower dyadic density of `mu`
    is below `alpha` everywhere on `E`.

    `E` is a finite union of half-open intervals ``[a, b)`` whose endpoints
    are dyadic rationals.  The lower density is the minimum of
    `dyadic_expectation` over levels from the coarsest one at which every
    dyadic interval meeting `E` lies inside `E`, down to `n_max`; it is
    evaluated exactly on every level-`n_max` cell of `E`.
    """
    comps = [(float(a), float(b)) for a, b in E if b > a]
    if not comps:
        return DyadicCheck(True, True, 0.0, 0.0, 0.0)
    n_min = max(_alignment_level(e, n_max) for ab in comps for e in ab)
    n_min = max(n_min, -60)
    if n_min > n_max:
        raise ValidationError(f"E needs level {n_min} > n_max = {n_max}")
    h = 2.0 ** (-n_max)
    lower = []
    for a, b in comps:
        cells = a + h * np.arange(round((b - a) / h))
        dens = np.full(cells.size, np.inf)
        for n in range(n_min, n_max + 1):
            L = 2.0 ** (-n)
            left = np.floor(cells / L) * L
            cum = mu.cumulative(np.concatenate([left, left + L]))
            dens = np.minimum(dens, (cum[cells.size:] - cum[:cells.size]) / L)
        lower.append(dens)
    lower = np.concatenate(lower)
    max_lower = float(lower.max())
    total_len = sum(b - a for a, b in comps)
    mass = sum(mu.mass(a, b) for a, b in comps)
    bound = alpha * total_len
    if not max_lower < alpha:
        return DyadicCheck(False, None, mass, bound, max_lower)
    return DyadicCheck(True, bool(mass <= bound * (1.0 + 1e-12)), mass, bound, max_lower)
