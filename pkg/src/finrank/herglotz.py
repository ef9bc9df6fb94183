"""Matrix Cauchy transforms, Poisson extensions and boundary values.

The a.c. part of a `MatrixMeasure` is integrated exactly against the Cauchy
kernel (the density is piecewise linear, so each grid cell contributes a
closed-form logarithm).  Boundary values on the real axis are obtained by
evaluating on the vertical ray ``x + i*eps`` for a ladder of heights and
extrapolating polynomially to ``eps = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from finrank.linalg import ValidationError, hermitize, im_part, operator_norm, psd_rank
from finrank.measure import ACPart, MatrixMeasure, ScalarMeasure

MIN_IM = 1e-8
HERGLOTZ_TOL = 1e-12
DEFAULT_LADDER = (1e-2, 5e-3, 2.5e-3)
DIVERGENCE_RATIO = 1.5


class PrecisionError(ValueError):
    pass


class HerglotzViolation(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HerglotzEval:
    z: complex
    value: np.ndarray

    def herglotz_margin(self) -> float:
        """Smallest eigenvalue of ``sign(Im z) * Im F(z)`` relative to
        ``1 + ||F||``; nonnegative up to rounding for Herglotz functions."""
        lam = float(np.linalg.eigvalsh(im_part(self.value)).min())
        return np.sign(self.z.imag) * lam / (1.0 + operator_norm(self.value))

    def is_herglotz(self, tol: float = HERGLOTZ_TOL) -> bool:
        return self.herglotz_margin() >= -tol


def poisson_kernel(w: complex) -> Callable:
    """``x -> Im w / (pi |x - w|^2)``, the Poisson kernel of the upper
    half-plane at `w` (integrates to 1)."""
    w = complex(w)
    if w.imag <= 0:
        raise ValidationError("Poisson kernel needs Im w > 0")
    return lambda x: w.imag / (np.pi * np.abs(np.asarray(x) - w) ** 2)


def _ac_cauchy(ac: ACPart, z: complex) -> np.ndarray:
    # exact integral of the piecewise-linear density against 1/(t - z); the
    # per-cell slope terms telescope to D[-1] - D[0]
    x = ac.grid
    D = ac.densities
    lg = np.log(x - z)
    L = np.diff(lg)
    slope = np.diff(D, axis=0) / ac.spacing
    vz = D[:-1] + slope * (z - x[:-1])[:, None, None]
    return np.einsum("k,kij->ij", L, vz) + (D[-1] - D[0])


def cauchy_matrix(M: MatrixMeasure, z: complex) -> np.ndarray:
    """``F(z) = int dM(t) / (t - z)`` as a bare array.

    Evaluation below the axis is the adjoint of the evaluation at the
    conjugate point, so ``F(conj z) = F(z)^*`` holds bit for bit.
    """
    z = complex(z)
    if z.imag < 0:
        return cauchy_matrix(M, z.conjugate()).conj().T
    out = np.einsum("k,kij->ij", 1.0 / (M.locations - z), M.weights) if M.locations.size \
        else np.zeros((M.d, M.d), dtype=complex)
    if M.ac is not None:
        out = out + _ac_cauchy(M.ac, z)
    return out


def cauchy_transform(M: MatrixMeasure, z: complex, min_im: float = MIN_IM) -> HerglotzEval:
    z = complex(z)
    if abs(z.imag) < min_im:
        raise PrecisionError(
            f"|Im z| = {abs(z.imag):.1e} is below {min_im:.0e}; use boundary_density for "
            "values on the real axis"
        )
    return HerglotzEval(z, cauchy_matrix(M, z))


def poisson_extension(M: MatrixMeasure, z: complex) -> np.ndarray:
    """``(1/pi) int Im z / |z - s|^2 dM(s)``, the harmonic extension."""
    z = complex(z)
    if z.imag <= 0:
        raise ValidationError(f"Poisson extension needs Im z > 0, got {z}")
    out = np.zeros((M.d, M.d), dtype=complex)
    if M.locations.size:
        ker = z.imag / (np.pi * np.abs(z - M.locations) ** 2)
        out = out + np.einsum("k,kij->ij", ker, M.weights)
    if M.ac is not None:
        out = out + im_part(_ac_cauchy(M.ac, z)) / np.pi
    return hermitize(out)


def scalar_poisson(mu: ScalarMeasure, z: complex) -> float:
    return float(np.real(poisson_extension(mu.as_matrix(), z)[0, 0]))


# ----------------------------------------------------------------------------
# boundary values


@dataclass(frozen=True, eq=False)
class BoundaryValue:
    value: np.ndarray | None
    converged: bool
    error_estimate: float
    ladder: tuple
    samples: np.ndarray  # (rungs, ...) raw evaluations
    differences: np.ndarray  # norms of successive raw differences


def _extrapolation_weights(eps: np.ndarray) -> np.ndarray:
    """Lagrange weights for evaluating the interpolating polynomial at 0."""
    w = np.ones(eps.size)
    for k in range(eps.size):
        for j in range(eps.size):
            if j != k:
                w[k] *= eps[j] / (eps[j] - eps[k])
    return w


def extrapolate_to_zero(fn: Callable[[float], np.ndarray], eps_ladder: Sequence[float],
                        abs_floor: float = 1e-12, detect_divergence: bool = True) -> BoundaryValue:
    """Richardson-style polynomial extrapolation of ``fn(eps)`` to 0.

    The ladder is declared divergent when successive raw differences grow
    by at least ``DIVERGENCE_RATIO`` per halving of ``eps`` (and are above
    rounding level), e.g. when an atom sits under the evaluation point.
    This is a heuristic: callers that know where the singularities are
    should pass ``detect_divergence=False`` and decide themselves.
    """
    eps = np.asarray(eps_ladder, dtype=float)
    if eps.size < 3:
        raise ValidationError("eps ladder needs at least three rungs")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValidationError("eps ladder must be positive and strictly decreasing")
    samples = np.array([np.asarray(fn(float(e))) for e in eps])
    diffs = np.array([np.linalg.norm(samples[k + 1] - samples[k]) for k in range(eps.size - 1)])
    scale = 1.0 + float(np.max([np.linalg.norm(s) for s in samples]))
    floor = abs_floor * scale
    # an atom under x makes the samples grow like 1/eps: differences double
    # on a halving ladder, while kinks of a grid density only wobble them
    growing = detect_divergence and all(diffs[k + 1] >= DIVERGENCE_RATIO * diffs[k] * (eps[k] / eps[k + 1]) / 2.0
                  and diffs[k + 1] > floor for k in range(diffs.size - 1))
    if growing:
        return BoundaryValue(None, False, float("inf"), tuple(eps), samples, diffs)
    full = np.tensordot(_extrapolation_weights(eps), samples, axes=1)
    lower = np.tensordot(_extrapolation_weights(eps[1:]), samples[1:], axes=1)
    err = float(np.linalg.norm(full - lower))
    return BoundaryValue(full, True, err, tuple(eps), samples, diffs)


def boundary_density(M: MatrixMeasure, x: float,
                     eps_ladder: Sequence[float] = DEFAULT_LADDER) -> BoundaryValue:
    """Non-tangential (vertical) boundary value of the Poisson extension at
    `x`, i.e. the a.c. density of `M` at `x`."""
    fn = lambda e: poisson_extension(M, x + 1j * e)  # noqa: E731
    # the measure is explicit, so divergence means an atom under x; the
    # growth heuristic misfires near inflections of a grid density
    if M.locations.size and np.min(np.abs(M.locations - x)) <= min(eps_ladder):
        samples = np.array([np.asarray(fn(float(e))) for e in eps_ladder])
        diffs = np.linalg.norm(np.diff(samples, axis=0).reshape(len(eps_ladder) - 1, -1), axis=1)
        return BoundaryValue(None, False, float("inf"), tuple(eps_ladder), samples, diffs)
    bv = extrapolate_to_zero(fn, eps_ladder, detect_divergence=False)
    if bv.value is not None:
        bv = BoundaryValue(hermitize(bv.value), True, bv.error_estimate, bv.ladder,
                           bv.samples, bv.differences)
    return bv


def boundary_transform(F: Callable[[complex], np.ndarray], x: float,
                       eps_ladder: Sequence[float]) -> BoundaryValue:
    """Boundary value ``F(x + i0)`` of an arbitrary matrix function."""
    return extrapolate_to_zero(lambda e: np.asarray(F(x + 1j * e), dtype=complex), eps_ladder)


def blowup_ratios(mu: ScalarMeasure, x: float, eps_ladder: Sequence[float]) -> np.ndarray:
    """``pi * eps * mu(x + i eps) / mu({x})`` along the ladder; tends to 1 at an atom."""
    k = np.nonzero(np.abs(mu.locations - x) <= 1e-12 * (1 + abs(x)))[0]
    if not k.size or mu.masses[k[0]] <= 0:
        raise ValidationError(f"x = {x} is not an atom of the measure")
    m = float(mu.masses[k[0]])
    return np.array([np.pi * e * scalar_poisson(mu, x + 1j * e) / m for e in eps_ladder])


def singular_blowup_check(mu: ScalarMeasure, x: float,
                          eps_ladder: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)) -> bool:
    """Whether ``mu(x + i eps) >= m / (2 pi eps)`` on every rung, where ``m``
    is the mass of the atom at `x`."""
    r = blowup_ratios(mu, x, eps_ladder)
    return bool(np.all(r >= 0.5))


# ----------------------------------------------------------------------------
# inversion


def stieltjes_reconstruct(F: Callable[[complex], np.ndarray], start: float, end: float,
                          nodes: int, eps_ladder: Sequence[float] = DEFAULT_LADDER,
                          herglotz_tol: float = 1e-10) -> MatrixMeasure:
    """Recover the a.c. density ``(1/pi) Im F(x + i0)`` on a uniform grid."""
    grid = np.linspace(start, end, nodes)
    dens = []
    for x in grid:
        samples = {}

        def im_f(e, x=x):
            v = np.atleast_2d(np.asarray(F(x + 1j * e), dtype=complex))
            imv = im_part(v)
            lam = float(np.linalg.eigvalsh(imv).min())
            if lam < -herglotz_tol * (1.0 + operator_norm(v)):
                raise HerglotzViolation(
                    f"Im F(z) has eigenvalue {lam:.3e} at z = {x + 1j * e}: not Herglotz")
            samples[e] = v
            return imv / np.pi

        bv = extrapolate_to_zero(im_f, eps_ladder)
        if bv.value is None:
            raise PrecisionError(f"boundary limit diverges at x = {x} (atom nearby?)")
        D = hermitize(bv.value)
        w, V = np.linalg.eigh(D)
        dens.append((V * np.maximum(w, 0.0)) @ V.conj().T)
    dens = np.array(dens)
    return MatrixMeasure(dens.shape[1], np.zeros(0), np.zeros((0,) + dens.shape[1:]),
                         ACPart(start, end, dens))


def density_rank(D: np.ndarray, rank_tol: float = 1e-6) -> int:
    return psd_rank(D, rank_tol)
