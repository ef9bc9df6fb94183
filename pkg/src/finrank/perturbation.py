"""Finite-rank perturbations ``A + B G B^*`` and their spectral measures.

The perturbed measure is available by two independent routes: directly,
from an eigendecomposition of the perturbed matrix, and through the
Aronszajn-Krein formula applied to the unperturbed Cauchy transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from finrank.herglotz import (
    HerglotzEval,
    boundary_transform,
    cauchy_matrix,
    cauchy_transform,
)
from finrank.linalg import (
    EigenSystem,
    ValidationError,
    check_hermitian,
    hermitian_eig,
    hermitize,
    im_part,
    operator_norm,
    psd_rank,
)
from finrank.measure import ATOM_MERGE_TOL, MatrixMeasure, spectral_measure

AK_COND_LIMIT = 1e12


class IllConditionedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CyclicityReport:
    cyclic: bool
    deficient: list  # (eigenvalue, multiplicity, rank of P B)

    def __bool__(self) -> bool:
        return self.cyclic


@dataclass(frozen=True, eq=False)
class OperatorModel:
    """Hermitian ``A`` (N x N) with a full-column-rank coupling ``B`` (N x d).

    The eigendecomposition of ``A`` is computed once at construction, so a
    model is immutable and safe to share between threads.
    """

    A: np.ndarray
    B: np.ndarray
    eig: EigenSystem = field(init=False, repr=False)
    cyclicity: CyclicityReport = field(init=False, repr=False)
    _measure: MatrixMeasure = field(init=False, repr=False)

    def __post_init__(self):
        A = hermitize(check_hermitian(self.A, tol=1e-12 * (1 + np.abs(self.A).max(initial=0)),
                                      name="A"))
        B = np.asarray(self.B, dtype=complex)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != A.shape[0]:
            raise ValidationError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        if B.shape[1] > B.shape[0]:
            raise ValidationError("B must have d <= N columns")
        sv = np.linalg.svd(B, compute_uv=False)
        if sv.size == 0 or sv[-1] <= 1e-10 * sv[0]:
            raise ValidationError("B must have full column rank")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "eig", hermitian_eig(A))
        object.__setattr__(self, "cyclicity", cyclicity_check(self))
        object.__setattr__(self, "_measure", spectral_measure(self))

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    def measure(self) -> MatrixMeasure:
        return self._measure

    def resolvent_transform(self, z: complex) -> np.ndarray:
        """``B^* (A - z)^{-1} B`` by a linear solve (no eigenvectors)."""
        return self.B.conj().T @ np.linalg.solve(self.A - z * np.eye(self.N), self.B)


def _check_coupling(model: OperatorModel, G) -> np.ndarray:
    G = check_hermitian(np.atleast_2d(np.asarray(G, dtype=complex)), name="G")
    if G.shape != (model.d, model.d):
        raise ValidationError(f"G must be {model.d}x{model.d}, got {G.shape}")
    return hermitize(G)


def perturb(model: OperatorModel, G) -> np.ndarray:
    """``A + B G B^*``."""
    G = _check_coupling(model, G)
    return hermitize(model.A + model.B @ G @ model.B.conj().T)


def perturbed_model(model: OperatorModel, G) -> OperatorModel:
    return OperatorModel(perturb(model, G), model.B)


def perturbed_measure_direct(model: OperatorModel, G,
                             merge_tol: float = ATOM_MERGE_TOL) -> MatrixMeasure:
    return spectral_measure(perturbed_model(model, G), merge_tol)


def aronszajn_krein(F: HerglotzEval, G, side: str = "left",
                    cond_limit: float = AK_COND_LIMIT) -> HerglotzEval:
    """Perturbed transform ``(I + F G)^{-1} F`` (or ``F (I + G F)^{-1}``
    with ``side="right"``)."""
    Fz = np.asarray(F.value, dtype=complex)
    G = hermitize(np.atleast_2d(np.asarray(G, dtype=complex)))
    eye = np.eye(Fz.shape[0])
    K = eye + Fz @ G if side == "left" else eye + G @ Fz
    c = np.linalg.cond(K)
    if not np.isfinite(c) or c > cond_limit:
        raise IllConditionedError(f"I + F G has condition number {c:.3e} at z = {F.z}")
    if side == "left":
        return HerglotzEval(F.z, np.linalg.solve(K, Fz))
    return HerglotzEval(F.z, np.linalg.solve(K.T, Fz.T).T)


def ak_transform(model: OperatorModel, G, z: complex) -> np.ndarray:
    return aronszajn_krein(cauchy_transform(model.measure(), z), G).value


def im_transform_identity_residual(model: OperatorModel, G, z: complex) -> float:
    """Relative residual of ``Im F_G = (I + F^* G)^{-1} Im F (I + G F)^{-1}``
    with ``F_G`` computed directly from the perturbed operator."""
    G = _check_coupling(model, G)
    F = cauchy_matrix(model.measure(), z)
    FG = cauchy_matrix(perturbed_measure_direct(model, G), z)
    eye = np.eye(model.d)
    left = np.linalg.inv(eye + F.conj().T @ G)
    right = np.linalg.inv(eye + G @ F)
    rhs = left @ im_part(F) @ right
    lhs = im_part(FG)
    return operator_norm(lhs - rhs) / (1.0 + operator_norm(lhs))


def _eigen_clusters(values: np.ndarray, tol: float) -> list[tuple[int, int]]:
    out, i = [], 0
    while i < values.size:
        j = i + 1
        while j < values.size and values[j] - values[j - 1] <= tol:
            j += 1
        out.append((i, j))
        i = j
    return out


def cyclicity_check(model: OperatorModel, eig_tol: float = 1e-9,
                    rank_tol: float = 1e-8) -> CyclicityReport:
    """``Ran B`` is cyclic for ``A`` iff ``rank(P_l B) = rank(P_l)`` for every
    eigenprojection ``P_l``.

    Eigenvalues within ``eig_tol * max(1, ||A||)`` share one eigenspace.
    """
    values, V = model.eig.values, model.eig.vectors
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    bnorm = float(np.linalg.norm(model.B, 2))
    deficient = []
    for i, j in _eigen_clusters(values, eig_tol * scale):
        Y = V[:, i:j].conj().T @ model.B
        sv = np.linalg.svd(Y, compute_uv=False)
        r = int(np.sum(sv > rank_tol * bnorm))
        if r < j - i:
            deficient.append((float(np.mean(values[i:j])), j - i, r))
    return CyclicityReport(not deficient, deficient)


def cyclicity_preserved_check(model: OperatorModel, G) -> bool:
    if not model.cyclicity:
        raise ValidationError("the unperturbed model is not cyclic")
    return bool(perturbed_model(model, G).cyclicity)


# ----------------------------------------------------------------------------
# absolutely continuous densities


@dataclass(frozen=True)
class DensityTransform:
    x: float
    residual: float | None
    rank_before: int
    rank_after: int
    exceptional: bool

    @property
    def rank_ok(self) -> bool:
        return self.rank_before == self.rank_after


def ac_density_transform(M: MatrixMeasure, G, x: float,
                         eps_ladder: Sequence[float] = (1e-3, 5e-4, 2.5e-4),
                         cond_limit: float = 1e8, rank_tol: float = 1e-6) -> DensityTransform:
    """Compare the boundary density of the AK-transformed Cauchy transform of
    `M` at `x` with the congruence ``(I + F_+^* G)^{-1} W(x) (I + G F_+)^{-1}``.

    ``F_+`` is the extrapolated boundary value of ``F(x + i eps)``.  Points
    where ``I + G F_+`` is numerically singular are reported as exceptional
    and not evaluated.
    """
    if M.ac is None:
        raise ValidationError("measure has no absolutely continuous part")
    G = hermitize(np.atleast_2d(np.asarray(G, dtype=complex)))
    eye = np.eye(M.d)
    Fp = boundary_transform(lambda z: cauchy_matrix(M, z), x, eps_ladder)
    if Fp.value is None:
        return DensityTransform(x, None, 0, 0, True)
    K = eye + G @ Fp.value
    if np.linalg.cond(K) > cond_limit:
        return DensityTransform(x, None, 0, 0, True)
    W = M.ac.density_at(x)
    Kinv = np.linalg.inv(K)
    predicted = hermitize(Kinv.conj().T @ W @ Kinv)

    def im_fg(z):
        F = cauchy_matrix(M, z)
        return im_part(np.linalg.solve(eye + F @ G, F)) / np.pi

    observed = boundary_transform(im_fg, x, eps_ladder)
    if observed.value is None:
        return DensityTransform(x, None, 0, 0, True)
    WG = hermitize(observed.value)
    resid = operator_norm(WG - predicted) / (1e-12 + max(operator_norm(predicted),
                                                          operator_norm(WG)))
    return DensityTransform(x, resid, psd_rank(W, rank_tol), psd_rank(WG, rank_tol), False)
