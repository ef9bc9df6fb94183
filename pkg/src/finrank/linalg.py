"""Dense complex linear algebra shared by every other module.

Everything here works on small dense ``numpy`` arrays (dimensions up to a
few dozen).  Hermitian eigendecompositions go through LAPACK by default; a
cyclic Jacobi solver is kept alongside as an independent implementation
that the test-suite uses to cross-check LAPACK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
RANK_TOL = 1e-10
PSD_CLAMP = 1e-10


class ValidationError(ValueError):
    """Input violates a structural invariant (Hermiticity, shape, ...)."""


class NotPSDError(ValidationError):
    pass


def as_matrix(H, name: str = "matrix") -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim == 0:
        H = H.reshape(1, 1)
    if H.ndim != 2:
        raise ValidationError(f"{name} must be two-dimensional, got shape {H.shape}")
    return H


def check_hermitian(H, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    """Return `H` as a complex array, raising if it is not Hermitian.

    The error message names the entry with the largest asymmetry.
    """
    H = as_matrix(H, name)
    if H.shape[0] != H.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {H.shape}")
    asym = np.abs(H - H.conj().T)
    worst = float(asym.max()) if asym.size else 0.0
    if worst > tol:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise ValidationError(
            f"{name} is not Hermitian: |H[{i},{j}] - conj(H[{j},{i}])| = {worst:.3e} > {tol:.1e}"
        )
    return H


def hermitize(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    return 0.5 * (H + H.conj().T)


def im_part(F) -> np.ndarray:
    """Hermitian imaginary part (F - F^*) / 2i."""
    F = np.asarray(F, dtype=complex)
    return (F - F.conj().T) / 2j


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.vectors
        return (V * self.values) @ V.conj().T


def jacobi_eigh(H, tol: float = 1e-15, max_sweeps: int = 60) -> EigenSystem:
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot entry, then applies
    the real symmetric Jacobi rotation.  Converges quadratically once the
    off-diagonal mass is small.
    """
    A = check_hermitian(H, tol=max(HERMITIAN_TOL, 1e-12 * (1 + _fro(H)))).copy()
    A = hermitize(A)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    scale = max(_fro(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = _fro(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                r = abs(apq)
                if r <= 1e-300:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                phase = apq / r
                theta = 0.5 * np.arctan2(2.0 * r, aqq - app)
                c, s = np.cos(theta), np.sin(theta)
                # phase removal diag(1, conj(phase)) followed by a real rotation
                J = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)
                cols = A[:, [p, q]] @ J
                A[:, [p, q]] = cols
                rows = J.conj().T @ A[[p, q], :]
                A[[p, q], :] = rows
                A[p, q] = A[q, p] = 0.0
                V[:, [p, q]] = V[:, [p, q]] @ J
    values = np.real(np.diag(A))
    order = np.argsort(values, kind="stable")
    return EigenSystem(values[order], V[:, order])


def _fro(H) -> float:
    return float(np.linalg.norm(np.asarray(H)))


def hermitian_eig(H, method: str = "lapack") -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Parameters
    ----------
    H : array_like
        Square Hermitian matrix (checked to 1e-12 absolute).
    method : {"lapack", "jacobi"}
        ``"jacobi"`` selects the in-house cyclic Jacobi solver.
    """
    H = check_hermitian(H)
    if method == "jacobi":
        return jacobi_eigh(H)
    if method != "lapack":
        raise ValueError(f"unknown eigensolver {method!r}")
    w, V = np.linalg.eigh(hermitize(H))
    return EigenSystem(w, V)


def psd_sqrt(P, rank_tol: float | None = None, clamp: float = PSD_CLAMP) -> np.ndarray:
    """Positive semidefinite square root.

    Eigenvalues in ``[-clamp*||P||, 0)`` are treated as zero; anything more
    negative raises `NotPSDError`.  With `rank_tol`, eigenvalues at or below
    ``rank_tol * lambda_max`` are also zeroed, which keeps the root of a
    numerically rank-deficient weight from picking up ``sqrt(noise)``.
    """
    P = hermitize(as_matrix(P))
    w, V = np.linalg.eigh(P)
    w = _clamp(w, clamp)
    if rank_tol is not None and w.size:
        w = np.where(w > rank_tol * max(w.max(), 0.0), w, 0.0)
    return hermitize((V * np.sqrt(w)) @ V.conj().T)


def psd_pinv_sqrt(P, rank_tol: float = RANK_TOL, clamp: float = PSD_CLAMP) -> np.ndarray:
    """Moore-Penrose inverse of the square root, restricted to Ran P."""
    P = hermitize(as_matrix(P))
    w, V = np.linalg.eigh(P)
    w = _clamp(w, clamp)
    top = max(w.max(), 0.0) if w.size else 0.0
    keep = w > rank_tol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return hermitize((V * inv) @ V.conj().T)


def _clamp(w: np.ndarray, clamp: float) -> np.ndarray:
    if not w.size:
        return w
    norm = float(np.max(np.abs(w)))
    lo = float(w.min())
    if lo < -clamp * norm:
        raise NotPSDError(f"matrix is not positive semidefinite: eigenvalue {lo:.6e}")
    return np.where(w < 0.0, 0.0, w)


def operator_norm(T) -> float:
    """Largest singular value."""
    T = np.asarray(T, dtype=complex)
    if T.size == 0:
        return 0.0
    if T.ndim < 2:
        T = T.reshape(1, -1)
    return float(np.linalg.svd(T, compute_uv=False)[0])


def range_projection(P, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projection onto the span of eigenvectors of the PSD matrix
    `P` with eigenvalue above ``rank_tol * lambda_max``."""
    P = hermitize(as_matrix(P))
    w, V = np.linalg.eigh(P)
    top = float(w.max()) if w.size else 0.0
    if top <= 0.0:
        return np.zeros_like(P)
    U = V[:, w > rank_tol * top]
    return hermitize(U @ U.conj().T)


def psd_rank(P, rank_tol: float = RANK_TOL) -> int:
    P = hermitize(as_matrix(P))
    w = np.linalg.eigvalsh(P)
    top = float(w.max()) if w.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.sum(w > rank_tol * top))


def is_projection(P, tol: float = 1e-10) -> bool:
    P = np.asarray(P, dtype=complex)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    return bool(
        np.abs(P - P.conj().T).max(initial=0.0) <= tol
        and np.abs(P @ P - P).max(initial=0.0) <= tol
    )


def subspace_overlap(P1, P2, tol: float = 1e-10) -> float:
    """``||P1 P2||``: cosine of the smallest principal angle between the
    ranges of two orthogonal projections (0 when orthogonal)."""
    P1 = as_matrix(P1)
    P2 = as_matrix(P2)
    for name, P in (("P1", P1), ("P2", P2)):
        if not is_projection(P, tol):
            raise ValidationError(f"{name} is not an orthogonal projection")
    return operator_norm(P1 @ P2)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))
