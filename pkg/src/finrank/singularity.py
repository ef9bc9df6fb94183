"""Vector mutual singularity of matrix measures and the joint Poisson A2
characteristic of a perturbation pair.

For a finite model every measure is atomic, so singular parts are the
measures themselves and mutual singularity is decided atom by atom: at a
shared atom the ranges of the two weights must be orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from finrank.averaging import PerturbationFamily, null_set_scan
from finrank.herglotz import poisson_extension
from finrank.linalg import (
    RANK_TOL,
    ValidationError,
    hermitize,
    operator_norm,
    psd_sqrt,
    range_projection,
    subspace_overlap,
)
from finrank.measure import MatrixMeasure, ScalarMeasure
from finrank.perturbation import OperatorModel, _check_coupling, perturbed_measure_direct

ORTHOGONALITY_TOL = 1e-8
WITNESS_TOL = 1e-10
A2_CONSTANT = 8.0 / np.pi


class UnsupportedInputError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class SingularityWitness:
    """A projection field ``Pi`` on the joint atoms with ``Pi M Pi = 0`` and
    ``(I - Pi) N (I - Pi) = 0``."""

    points: list
    projections: list

    def verify(self, M: MatrixMeasure, N: MatrixMeasure, tol: float = WITNESS_TOL) -> bool:
        d = M.d
        eye = np.eye(d)
        for x, P in zip(self.points, self.projections):
            if np.abs(P - P.conj().T).max() > tol or np.abs(P @ P - P).max() > tol:
                return False
            W, V = M.atom_weight(x), N.atom_weight(x)
            if operator_norm(P @ W @ P) > tol * (1 + operator_norm(W)):
                return False
            Q = eye - P
            if operator_norm(Q @ V @ Q) > tol * (1 + operator_norm(V)):
                return False
        return True


@dataclass(frozen=True, eq=False)
class SingularityResult:
    singular: bool
    witness: SingularityWitness | None
    violations: list = field(default_factory=list)  # (x, overlap)
    common_atoms: list = field(default_factory=list)
    max_overlap: float = 0.0

    def __bool__(self) -> bool:
        return self.singular


def _joint_atoms(M: MatrixMeasure, N: MatrixMeasure, rel_tol: float):
    """Merge the atom lists; returns (x, W or None, V or None) triples."""
    out = []
    i = j = 0
    xm, xn = M.locations, N.locations
    while i < xm.size or j < xn.size:
        if j >= xn.size or (i < xm.size and xm[i] < xn[j] - rel_tol * (1 + abs(xm[i]))):
            out.append((float(xm[i]), M.weights[i], None))
            i += 1
        elif i >= xm.size or xn[j] < xm[i] - rel_tol * (1 + abs(xn[j])):
            out.append((float(xn[j]), None, N.weights[j]))
            j += 1
        else:
            out.append((float(0.5 * (xm[i] + xn[j])), M.weights[i], N.weights[j]))
            i += 1
            j += 1
    return out


def vector_mutual_singularity(M: MatrixMeasure, N: MatrixMeasure,
                              tol: float = ORTHOGONALITY_TOL, rank_tol: float = RANK_TOL,
                              match_tol: float = 1e-9) -> SingularityResult:
    """Decide whether two atomic matrix measures are vector mutually singular.

    Atoms closer than ``match_tol * (1 + |x|)`` are treated as shared.  At a
    shared atom the ranges of the two weights must have overlap (cosine of
    the smallest principal angle) at most `tol`; the witness projection is
    the range projection of the second weight.  Weights whose largest
    eigenvalue is below ``rank_tol`` times the overall weight scale count as
    zero.
    """
    if M.d != N.d:
        raise ValidationError(f"dimension mismatch: {M.d} vs {N.d}")
    if not (M.is_atomic and N.is_atomic):
        raise UnsupportedInputError("vector mutual singularity is decided for atomic measures only")
    d = M.d
    scale = max([operator_norm(w) for w in M.weights] + [operator_norm(w) for w in N.weights] + [0.0])
    floor = rank_tol * scale

    def significant(W):
        return W is not None and operator_norm(W) > floor

    points, projections, violations, common = [], [], [], []
    worst = 0.0
    for x, W, V in _joint_atoms(M, N, match_tol):
        has_w, has_v = significant(W), significant(V)
        if has_w and has_v:
            Pw = range_projection(W, rank_tol)
            Pv = range_projection(V, rank_tol)
            ov = subspace_overlap(Pw, Pv, tol=1e-8)
            common.append(x)
            worst = max(worst, ov)
            if ov > tol:
                violations.append((x, ov))
            P = Pv
        elif has_v:
            P = np.eye(d, dtype=complex)
        else:
            P = np.zeros((d, d), dtype=complex)
        points.append(x)
        projections.append(hermitize(P))
    if violations:
        return SingularityResult(False, None, violations, common, worst)
    return SingularityResult(True, SingularityWitness(points, projections), [], common, worst)


def conjugated_perturbed_measure(model: OperatorModel, G) -> MatrixMeasure:
    """``G M^G G`` atom by atom."""
    G = _check_coupling(model, G)
    return perturbed_measure_direct(model, G).congruence(G)


def ad_check(model: OperatorModel, G, tol: float = ORTHOGONALITY_TOL) -> SingularityResult:
    """Mutual singularity of ``M`` and ``G M^G G`` (the singular parts of the
    unperturbed measure and of the conjugated perturbed one).

    Singular or indefinite `G` is accepted; where ``G W^G G`` vanishes the
    condition holds trivially.
    """
    return vector_mutual_singularity(model.measure(), conjugated_perturbed_measure(model, G), tol)


# ----------------------------------------------------------------------------
# joint Poisson A2 characteristic


def poisson_stack(M: MatrixMeasure, zs: np.ndarray) -> np.ndarray:
    """Poisson extensions ``M(z)`` for a batch of points (shape (n, d, d))."""
    zs = np.asarray(zs, dtype=complex).ravel()
    if np.any(zs.imag <= 0):
        raise ValidationError("Poisson extension needs Im z > 0")
    if not M.is_atomic:
        return np.array([poisson_extension(M, z) for z in zs])
    if not M.locations.size:
        return np.zeros((zs.size, M.d, M.d), dtype=complex)
    ker = zs.imag[:, None] / (np.pi * np.abs(zs[:, None] - M.locations[None, :]) ** 2)
    out = np.einsum("nk,kij->nij", ker, M.weights)
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def poisson_factor_stack(M: MatrixMeasure, zs: np.ndarray) -> np.ndarray:
    """Factors ``X(z)`` with ``X X^* = M(z)`` for a batch of points.

    For atomic `M` the blocks are ``sqrt(p_k(z)) W_k^{1/2}`` (shape
    (n, d, K d)), so no square root of the summed, possibly cancelling,
    Poisson extension is ever taken.  Otherwise the square root of
    `poisson_stack` is returned.
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    if not M.is_atomic:
        return _sqrt_stack(poisson_stack(M, zs))
    if np.any(zs.imag <= 0):
        raise ValidationError("Poisson extension needs Im z > 0")
    K, d = M.locations.size, M.d
    if K == 0:
        return np.zeros((zs.size, d, d), dtype=complex)
    roots = np.array([psd_sqrt(W, rank_tol=RANK_TOL) for W in M.weights])  # (K, d, d)
    ker = zs.imag[:, None] / (np.pi * np.abs(zs[:, None] - M.locations[None, :]) ** 2)
    X = np.sqrt(ker)[:, :, None, None] * roots[None]  # (n, K, d, d)
    return X.transpose(0, 2, 1, 3).reshape(zs.size, d, K * d)


def _sqrt_stack(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(P)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _factor_sqrt_stack(Y: np.ndarray) -> np.ndarray:
    """``(Y Y^*)^{1/2}`` from the SVD of ``Y``; unlike the eigenvalues of
    ``Y Y^*``, singular values near zero keep absolute accuracy."""
    U, sv, _ = np.linalg.svd(Y, full_matrices=False)
    return (U * sv[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


def _hermitian_t(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def _square_factor(X: np.ndarray) -> np.ndarray:
    """Square ``R`` with ``R^* R = X X^*`` (triangular factor of ``X^*``)."""
    return np.linalg.qr(_hermitian_t(X), mode="r")


def _norm_stack(X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(X, ord=2, axis=(-2, -1))


def default_z_samples(measures: Sequence[MatrixMeasure], eps_min: float = 1e-6,
                      eps_max: float = 10.0, n_eps: int = 25, extra_x: int = 9) -> np.ndarray:
    """Tensor grid: x at every atom, at midpoints between atoms and on a
    uniform grid over the atom hull, times log-spaced heights."""
    xs = np.concatenate([m.locations for m in measures] + [np.zeros(0)])
    if xs.size:
        xs = np.unique(xs)
        mids = 0.5 * (xs[1:] + xs[:-1])
        hull = np.linspace(xs.min() - 1.0, xs.max() + 1.0, extra_x)
        xs = np.unique(np.concatenate([xs, mids, hull]))
    else:
        xs = np.linspace(-1.0, 1.0, extra_x)
    eps = np.geomspace(eps_min, eps_max, n_eps)
    return (xs[:, None] + 1j * eps[None, :]).ravel()


@dataclass(frozen=True)
class A2Result:
    value: float
    argmax: complex
    order_residual: float  # | ||M^1/2 N^1/2|| - ||N^1/2 M^1/2|| | at the worst sample


def a2_characteristic(M: MatrixMeasure, N: MatrixMeasure, z_samples=None,
                      eps_min: float = 1e-6) -> A2Result:
    """``max_z ||M(z)^{1/2} N(z)^{1/2}||^2`` over the samples."""
    zs = default_z_samples([M, N], eps_min) if z_samples is None else np.asarray(z_samples, complex)
    Ms = _sqrt_stack(poisson_stack(M, zs))
    Ns = _sqrt_stack(poisson_stack(N, zs))
    a = _norm_stack(Ms @ Ns)
    b = _norm_stack(Ns @ Ms)
    k = int(np.argmax(a))
    return A2Result(float(a[k] ** 2), complex(zs[k]), float(np.max(np.abs(a - b))))


@dataclass(frozen=True)
class A2BoundCheck:
    holds: bool
    max_value: float
    margin: float
    argmax: complex
    identity_residual: float
    bound: float = A2_CONSTANT


def a2_bound_check(model: OperatorModel, G, z_samples=None, eps_min: float = 1e-6,
                   slack: float = 1e-8) -> A2BoundCheck:
    """Sampled sup of ``||M(z)^{1/2} (G M^G(z) G)^{1/2}||`` against ``8/pi``.

    Also measures the gap to ``||M(z)^{1/2} G M^G(z)^{1/2}||``, which is the
    same number for every ``z``.
    """
    G = _check_coupling(model, G)
    M = model.measure()
    MG = perturbed_measure_direct(model, G)
    zs = default_z_samples([M, MG], eps_min) if z_samples is None else np.asarray(z_samples, complex)
    # with M(z) = X X^* and M^G(z) = Z Z^*:  ||M(z)^{1/2} C|| = ||X^* C|| = ||R C||
    # for X^* = Q R; likewise G Z = L Q' with L square, so G M^G(z) G = L L^*
    R = _square_factor(poisson_factor_stack(M, zs))
    L = _hermitian_t(_square_factor(G[None] @ poisson_factor_stack(MG, zs)))
    vals = _norm_stack(R @ _factor_sqrt_stack(L))
    alt = _norm_stack(R @ L)
    k = int(np.argmax(vals))
    top = float(vals[k])
    ident = float(np.max(np.abs(vals - alt) / (1.0 + vals)))
    return A2BoundCheck(top <= A2_CONSTANT + slack, top, A2_CONSTANT - top, complex(zs[k]), ident)


def a2_blowup_profile(M: MatrixMeasure, N: MatrixMeasure, x: float,
                      eps_ladder: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)) -> np.ndarray:
    """``||M(x + i eps)^{1/2} N(x + i eps)^{1/2}||`` along a ladder of heights.

    At a shared atom with non-orthogonal ranges this grows like ``1/eps``;
    with orthogonal ranges it stays bounded.
    """
    zs = x + 1j * np.asarray(eps_ladder, dtype=float)
    return _norm_stack(_sqrt_stack(poisson_stack(M, zs)) @ _sqrt_stack(poisson_stack(N, zs)))


def blows_up(profile: np.ndarray, eps_ladder: Sequence[float], factor: float = 0.5) -> bool:
    """Whether the profile grows at least like ``factor / eps`` relative to
    its first rung."""
    eps = np.asarray(eps_ladder, dtype=float)
    expected = profile[0] * eps[0] / eps
    return bool(profile[0] > 0 and np.all(profile[1:] >= factor * expected[1:]))


# ----------------------------------------------------------------------------
# exceptional parameters


def exceptional_parameter_scan(family: PerturbationFamily, nu: ScalarMeasure,
                               t_grid: Sequence[float]) -> list[float]:
    """Parameters in the window of `t_grid` at which the atomic part of the
    trace measure of ``M^{G0 + t G}`` shares an atom with `nu`."""
    if nu.ac_density is not None and np.any(nu.ac_density > 0):
        raise UnsupportedInputError("nu must be purely atomic")
    pts = [float(x) for x, m in zip(nu.locations, nu.masses) if m > 0]
    out = null_set_scan(family, pts, t_grid)
    # each monotone trajectory meets each point at most once
    if len(out) > family.model.N * len(pts):
        raise AssertionError(f"{len(out)} exceptions exceed N * |points| = {family.model.N * len(pts)}")
    return out


def common_atom_coupling(model: OperatorModel, rng: np.random.Generator,
                         index: int | None = None) -> tuple[np.ndarray, float]:
    """A Hermitian coupling ``G`` for which an eigenvalue ``lam`` of ``A``
    stays an atom of ``M^G`` (``d >= 2`` required).

    With ``(lam, u)`` an eigenpair of ``A`` and ``c`` orthogonal to
    ``B^* u``, the vector ``w = (lam - A)^+ B c + s u`` satisfies
    ``(A + B G B^*) w = lam w`` as soon as ``G y = c`` for ``y = B^* w``;
    ``G`` is the Hermitian solution of that equation plus an arbitrary
    Hermitian part acting on ``y``'s orthogonal complement.  Returns
    ``(G, lam)``.
    """
    d = model.d
    if d < 2:
        raise ValidationError("a forced common atom needs d >= 2")
    vals, vecs = model.eig.values, model.eig.vectors
    k = int(rng.integers(vals.size)) if index is None else index
    lam, u = float(vals[k]), vecs[:, k]
    bu = model.B.conj().T @ u
    c = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    if np.linalg.norm(bu) > 0:
        q = bu / np.linalg.norm(bu)
        c = c - q * (q.conj() @ c)
    R = np.linalg.pinv(lam * np.eye(model.N) - model.A, rcond=1e-10)
    s = rng.standard_normal()
    w = R @ (model.B @ c) + s * u
    y = model.B.conj().T @ w
    ny = float(np.real(y.conj() @ y))
    yc = complex(y.conj() @ c)  # real by construction
    G = (np.outer(c, y.conj()) + np.outer(y, c.conj())) / ny - yc.real * np.outer(y, y.conj()) / ny ** 2
    H = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    P = np.eye(d) - np.outer(y, y.conj()) / ny
    G = G + P @ (H + H.conj().T) @ P / 2
    return hermitize(G), lam
