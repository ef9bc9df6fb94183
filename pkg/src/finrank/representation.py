"""The spectral representation of ``A + B G B^*`` as a finite matrix, and
weighted integral operators between ``L^2(M)`` and ``L^2(G M^G G)``.

Functions in ``L^2(M)`` for an atomic ``M`` are stored by their values at
the atoms ("atom-value coordinates": one ``C^d`` block per atom).  The
weighted norm is ``sum_k f_k^* W_k f_k``; multiplying block ``k`` by
``W_k^{1/2}`` ("whitening") turns it into the Euclidean norm and identifies
``L^2(M)`` with the range of the whitening map.

The representation map is pinned down on resolvent functions
``k_z(s) = 1/(s - z)``:  ``V k_z e = k_z (I + G F(z)) e``.  Enough tags
``(z, e)`` span ``L^2(M)``, so ``V`` is the unique linear map sending the
whitened tag values to the whitened images.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from finrank.herglotz import cauchy_matrix
from finrank.linalg import (
    RANK_TOL,
    ValidationError,
    hermitize,
    operator_norm,
    psd_pinv_sqrt,
    psd_rank,
    psd_sqrt,
)
from finrank.measure import MatrixMeasure
from finrank.perturbation import OperatorModel, _check_coupling, perturbed_measure_direct

GRAM_CLOSED_FORM_TOL = 1e-12
MIN_TAG_IM = 1e-3


class SpanningError(ValueError):
    """The resolvent tags do not span the weighted space."""


def _require_atomic(M: MatrixMeasure, what: str) -> None:
    if not M.is_atomic:
        raise ValidationError(f"{what} must be purely atomic")


def whitening(M: MatrixMeasure, rank_tol: float = RANK_TOL) -> np.ndarray:
    """``blockdiag(W_k^{1/2})`` with numerically null directions dropped."""
    _require_atomic(M, "measure")
    d = M.d
    K = M.locations.size
    S = np.zeros((K * d, K * d), dtype=complex)
    for k, W in enumerate(M.weights):
        S[k * d:(k + 1) * d, k * d:(k + 1) * d] = psd_sqrt(W, rank_tol=rank_tol)
    return S


def whitening_pinv(M: MatrixMeasure, rank_tol: float = RANK_TOL) -> np.ndarray:
    d = M.d
    K = M.locations.size
    S = np.zeros((K * d, K * d), dtype=complex)
    for k, W in enumerate(M.weights):
        S[k * d:(k + 1) * d, k * d:(k + 1) * d] = psd_pinv_sqrt(W, rank_tol=rank_tol)
    return S


def l2_dimension(M: MatrixMeasure, rank_tol: float = RANK_TOL) -> int:
    """``sum_k rank W_k``."""
    return int(sum(psd_rank(W, rank_tol) for W in M.weights))


def _cauchy_column(locations: np.ndarray, z: complex, v: np.ndarray) -> np.ndarray:
    return (v[None, :] / (locations - z)[:, None]).ravel()


@dataclass(frozen=True, eq=False)
class WeightedSpaceBasis:
    """A family of resolvent functions ``k_z e`` in ``L^2(measure)``.

    ``gram[m, n]`` is ``<tag_n, tag_m>``, linear in the first slot, computed
    from atom values; construction cross-checks it against the closed form
    ``sum_k e_m^* W_k e_n / ((x_k - conj z_m)(x_k - z_n))``.
    """

    measure: MatrixMeasure
    functions: list  # (z, e) pairs
    gram: np.ndarray = field(init=False, repr=False)
    values: np.ndarray = field(init=False, repr=False)  # atom-value columns

    def __post_init__(self):
        M = self.measure
        _require_atomic(M, "measure")
        x = M.locations
        X = np.array([_cauchy_column(x, complex(z), np.asarray(e, complex))
                      for z, e in self.functions]).T
        Wblk = sla.block_diag(*M.weights) if x.size else np.zeros((0, 0))
        gram = hermitize(X.conj().T @ Wblk @ X)
        closed = np.empty_like(gram)
        for m, (zm, em) in enumerate(self.functions):
            for n, (zn, en) in enumerate(self.functions):
                c = 1.0 / ((x - np.conj(zm)) * (x - zn))
                closed[m, n] = np.einsum("k,i,kij,j->", c, np.conj(em), M.weights, en)
        scale = 1.0 + float(np.abs(closed).max(initial=0.0))
        if np.abs(gram - closed).max(initial=0.0) > GRAM_CLOSED_FORM_TOL * scale:
            raise AssertionError("Gram matrix disagrees with its closed form")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "values", X)

    @property
    def rank(self) -> int:
        return psd_rank(self.gram, 1e-12)

    @property
    def spans(self) -> bool:
        return self.rank == l2_dimension(self.measure)


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    """A linear map ``L^2(domain) -> L^2(codomain)`` stored in atom-value
    coordinates."""

    domain: MatrixMeasure
    codomain: MatrixMeasure
    matrix: np.ndarray

    def __post_init__(self):
        rows = self.codomain.locations.size * self.codomain.d
        cols = self.domain.locations.size * self.domain.d
        if self.matrix.shape != (rows, cols):
            raise ValidationError(f"matrix shape {self.matrix.shape} != ({rows}, {cols})")
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("operator matrix has non-finite entries")

    def whitened(self) -> np.ndarray:
        return whitening(self.codomain) @ self.matrix @ whitening_pinv(self.domain)

    def norm(self) -> float:
        return operator_norm(self.whitened())

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=complex).ravel()


def weighted_norm(M: MatrixMeasure, f: np.ndarray) -> float:
    return float(np.linalg.norm(whitening(M) @ np.asarray(f, complex).ravel()))


# ----------------------------------------------------------------------------
# the spectral map


def chebyshev_tags(M: MatrixMeasure, count: int, height: float = 1.0) -> list[complex]:
    """`count` points at Chebyshev abscissae over the widened atom hull,
    alternating between the lines ``Im z = +height`` and ``Im z = -height``."""
    x = M.locations
    lo, hi = (float(x.min()) - 1.0, float(x.max()) + 1.0) if x.size else (-1.0, 1.0)
    half = max(1, (count + 1) // 2)
    k = np.arange(half)
    c = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k + 1) * np.pi / (2 * half))
    return [complex(v, height) for v in c] + [complex(v, -height) for v in c]


def _tags_for(points: Sequence[complex], d: int) -> list[tuple[complex, np.ndarray]]:
    eye = np.eye(d, dtype=complex)
    return [(complex(z), eye[:, i]) for z in points for i in range(d)]


@dataclass(frozen=True, eq=False)
class SpectralMap:
    operator: WeightedOperator
    tags_used: list
    conditioning: float  # condition number of the thinned whitened tag matrix

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    def whitened(self) -> np.ndarray:
        return self.operator.whitened()


def build_spectral_map(model: OperatorModel, G, z_tags: Sequence[complex] | None = None,
                       rank_tol: float = RANK_TOL, thin_tol: float = 1e-10) -> SpectralMap:
    """The unitary ``V: L^2(M) -> L^2(M^G)`` with ``V (A+BGB^*) = (mult. by s) V``.

    Default tags: ``2 dim L^2(M) / d`` points from `chebyshev_tags`, each
    paired with the standard basis of ``C^d``.  The tag family is thinned to
    a linearly independent subset by column-pivoted QR of the whitened
    values.
    """
    G = _check_coupling(model, G)
    M = model.measure()
    MG = perturbed_measure_direct(model, G)
    d = model.d
    dim = l2_dimension(M, rank_tol)
    if z_tags is None:
        z_tags = chebyshev_tags(M, max(2, int(np.ceil(2 * dim / d))))
    z_tags = [complex(z) for z in z_tags]
    if len(set(z_tags)) != len(z_tags):
        raise ValidationError("tag points must be distinct")
    if any(abs(z.imag) < MIN_TAG_IM for z in z_tags):
        raise ValidationError(f"tag points need |Im z| >= {MIN_TAG_IM}")
    tags = _tags_for(z_tags, d)
    eye = np.eye(d)
    X = np.array([_cauchy_column(M.locations, z, e) for z, e in tags]).T
    images = {z: eye + G @ cauchy_matrix(M, z) for z in z_tags}
    Y = np.array([_cauchy_column(MG.locations, z, images[z] @ e) for z, e in tags]).T
    S_in, S_out = whitening(M, rank_tol), whitening(MG, rank_tol)
    Xw, Yw = S_in @ X, S_out @ Y
    _, R, piv = sla.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    r = int(np.sum(diag > thin_tol * diag[0])) if diag.size else 0
    if r < dim:
        raise SpanningError(f"tags span {r} of {dim} dimensions; use more or different tag points")
    sel = np.sort(piv[:r])
    Xs, Ys = Xw[:, sel], Yw[:, sel]
    sv = np.linalg.svd(Xs, compute_uv=False)
    Vw = Ys @ np.linalg.pinv(Xs, rcond=thin_tol)
    matrix = whitening_pinv(MG, rank_tol) @ Vw @ S_in
    op = WeightedOperator(M, MG, matrix)
    return SpectralMap(op, [tags[i] for i in sel], float(sv[0] / sv[-1]))


def unitarity_residual(V: SpectralMap) -> float:
    """``||V^* W_out V - W_in|| / (1 + ||W_in||)`` in atom-value coordinates
    (isometry), together with the co-isometry defect in whitened form; the
    larger of the two is returned."""
    op = V.operator
    W_in = sla.block_diag(*op.domain.weights)
    W_out = sla.block_diag(*op.codomain.weights)
    iso = operator_norm(op.matrix.conj().T @ W_out @ op.matrix - W_in) / (1.0 + operator_norm(W_in))
    Vw = op.whitened()
    P_out = whitening(op.codomain) @ whitening_pinv(op.codomain)
    co = operator_norm(Vw @ Vw.conj().T - P_out)
    return float(max(iso, co))


def perturbed_operator_on_l2(model: OperatorModel, G) -> np.ndarray:
    """``A + B G B^*`` acting on ``L^2(M)`` in atom-value coordinates:
    ``f -> s f(s) + G int [dM] f``."""
    G = _check_coupling(model, G)
    M = model.measure()
    d, K = M.d, M.locations.size
    mult = np.kron(np.diag(M.locations), np.eye(d))
    rank_part = np.kron(np.ones((K, 1)), G) @ np.hstack(list(M.weights))
    return mult + rank_part


def intertwining_residual(V: SpectralMap, model: OperatorModel, G) -> float:
    """Weighted operator norm of ``V (A + B G B^*) - (mult. by s) V``."""
    op = V.operator
    A_in = perturbed_operator_on_l2(model, G)
    mult_out = np.kron(np.diag(op.codomain.locations), np.eye(op.codomain.d))
    diff = op.matrix @ A_in - mult_out @ op.matrix
    return operator_norm(whitening(op.codomain) @ diff @ whitening_pinv(op.domain))


def tag_independence_residual(model: OperatorModel, G, first: Sequence[complex] | None = None,
                              second: Sequence[complex] | None = None) -> float:
    """Whitened distance between two spectral maps built from different tags.

    Defaults: Chebyshev points on ``Im z = +-1`` against points on
    ``Im z = +-2`` with a shifted abscissa grid."""
    V1 = build_spectral_map(model, G, first)
    if second is None:
        M = model.measure()
        n = max(2, int(np.ceil(2 * l2_dimension(M) / model.d))) + 1
        second = [z + 0.1 for z in chebyshev_tags(M, n, height=2.0)]
    V2 = build_spectral_map(model, G, second)
    return operator_norm(V1.whitened() - V2.whitened())


def divided_difference_image(model: OperatorModel, G, h: Callable, dh: Callable,
                             e: np.ndarray, rank_tol: float = RANK_TOL,
                             match_tol: float = 1e-9) -> np.ndarray:
    """Atom values on ``M^G`` of
    ``h(s) e - G int (h(t) - h(s)) / (t - s) [dM(t)] e``,
    with ``h'(s)`` on the diagonal ``t = s``."""
    G = _check_coupling(model, G)
    M = model.measure()
    MG = perturbed_measure_direct(model, G)
    e = np.asarray(e, dtype=complex)
    out = []
    for s in MG.locations:
        acc = np.zeros(model.d, dtype=complex)
        for t, W in zip(M.locations, M.weights):
            if abs(t - s) <= match_tol * (1 + abs(s)):
                q = dh(s)
            else:
                q = (h(t) - h(s)) / (t - s)
            acc += q * (W @ e)
        out.append(h(s) * e - G @ acc)
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def divided_difference_residual(model: OperatorModel, G, V: SpectralMap | None = None,
                                degree: int | None = None, seed: int = 0) -> float:
    """Largest weighted discrepancy between ``V (h e)`` from the tag
    construction and the divided-difference formula, over a random
    polynomial ``h`` of degree below the number of atoms and basis vectors
    ``e``; relative to ``1 + ||h e||``.

    ``h`` is drawn in the Chebyshev basis of the joint atom hull of ``M``
    and ``M^G``, so it stays of unit size on both supports and the formula
    does not cancel catastrophically.
    """
    if V is None:
        V = build_spectral_map(model, G)
    M, MG = V.operator.domain, V.operator.codomain
    K = M.locations.size
    deg = max(0, K - 1) if degree is None else degree
    pts = np.concatenate([M.locations, MG.locations])
    lo, hi = float(pts.min()), float(pts.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
    p = np.polynomial.Chebyshev(c / np.sqrt(deg + 1), domain=[lo, hi])
    dp = p.deriv()
    worst = 0.0
    for i in range(model.d):
        e = np.eye(model.d, dtype=complex)[:, i]
        f = np.concatenate([p(x) * e for x in M.locations])
        via_tags = V.operator.apply(f)
        via_formula = divided_difference_image(model, G, p, dp, e)
        diff = weighted_norm(MG, via_tags - via_formula)
        worst = max(worst, diff / (1.0 + weighted_norm(M, f)))
    return worst


# ----------------------------------------------------------------------------
# weighted integral operators into L^2(G M^G G)


def _kernel_operator(M: MatrixMeasure, N: MatrixMeasure,
                     kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> WeightedOperator:
    """``f -> int K(s, t) [dM(t)] f(t)`` from ``L^2(M)`` to ``L^2(N)``."""
    _require_atomic(M, "domain measure")
    _require_atomic(N, "codomain measure")
    Kst = kernel(N.locations[:, None], M.locations[None, :])
    blocks = Kst[:, :, None, None] * M.weights[None, :, :, :]
    J, K, d = N.locations.size, M.locations.size, M.d
    matrix = blocks.transpose(0, 2, 1, 3).reshape(J * d, K * d)
    return WeightedOperator(M, N, matrix)


def _pair(model: OperatorModel, G):
    G = _check_coupling(model, G)
    M = model.measure()
    N = perturbed_measure_direct(model, G).congruence(G)
    return M, N


@dataclass(frozen=True, eq=False)
class OperatorNorm:
    operator: WeightedOperator
    norm: float


def t_epsilon_operator(model: OperatorModel, G, eps: float) -> OperatorNorm:
    """Kernel ``1/(s - t + i eps)`` (`eps` signed, nonzero) from ``L^2(M)``
    to ``L^2(G M^G G)``."""
    eps = float(eps)
    if eps == 0:
        raise ValidationError("eps must be nonzero")
    M, N = _pair(model, G)
    op = _kernel_operator(M, N, lambda s, t: 1.0 / (s - t + 1j * eps))
    return OperatorNorm(op, op.norm())


def p_alpha_operator(model: OperatorModel, G, alpha: complex) -> OperatorNorm:
    """Kernel ``2 Im(alpha) / ((s - alpha)(t - conj alpha))``."""
    alpha = complex(alpha)
    if alpha.imag == 0:
        raise ValidationError("alpha must be off the real axis")
    M, N = _pair(model, G)
    op = _kernel_operator(M, N, lambda s, t: 2 * alpha.imag / ((s - alpha) * (t - np.conj(alpha))))
    return OperatorNorm(op, op.norm())


@dataclass(frozen=True)
class KernelBound:
    lhs: float
    t_norm: float
    holds: bool


def kernel_a2_lower_bound(k1: Callable, k2: Callable, M: MatrixMeasure, N: MatrixMeasure,
                          T_norm: float | None = None, rtol: float = 1e-10) -> KernelBound:
    """``||(int |k1|^2 dN)^{1/2} (int |k2|^2 dM)^{1/2}||`` against the norm of
    the kernel ``k1(s) k2(t)`` from ``L^2(M)`` to ``L^2(N)``.

    Without `T_norm` the operator is assembled and its norm computed.
    """
    _require_atomic(M, "M")
    _require_atomic(N, "N")
    a = np.abs(np.asarray(k1(N.locations), dtype=complex)) ** 2
    b = np.abs(np.asarray(k2(M.locations), dtype=complex)) ** 2
    Nk = np.einsum("k,kij->ij", a, N.weights) if N.locations.size else np.zeros((N.d, N.d))
    Mk = np.einsum("k,kij->ij", b, M.weights) if M.locations.size else np.zeros((M.d, M.d))
    lhs = operator_norm(psd_sqrt(Nk) @ psd_sqrt(Mk))
    if T_norm is None:
        T_norm = _kernel_operator(M, N, lambda s, t: k1(s) * k2(t)).norm()
    return KernelBound(lhs, float(T_norm), lhs <= T_norm * (1 + rtol) + 1e-14)
