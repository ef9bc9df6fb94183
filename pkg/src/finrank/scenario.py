"""JSON scenario files: parsing, validation and random generation.

A scenario is a JSON object::

    {
      "d": 2, "N": 3,
      "A": {"diag": [0, 1, 2]}            or {"re": [[...]], "im": [[...]]},
      "B": {"re": [[...]], "im": [[...]]} or a plain nested list (real),
      "Gamma0": ..., "Gamma": ...,          (same matrix forms)
      "ac": {"start": -1, "end": 1, "densities": [[[...]]]},   optional
      "seed": 7, "tolerances": {"check-name": 1e-9},            optional
      "name": "free text"                                       optional
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from finrank.averaging import PerturbationFamily
from finrank.linalg import ValidationError, check_hermitian
from finrank.measure import ACPart, MatrixMeasure
from finrank.perturbation import OperatorModel

MAX_RANDOM_DIM = 64
RANDOM_RETRIES = 20


class ScenarioError(ValidationError):
    """Malformed or invalid scenario; the message names the location."""


@dataclass(frozen=True, eq=False)
class Scenario:
    d: int
    N: int
    A: np.ndarray
    B: np.ndarray
    gamma0: np.ndarray
    gamma: np.ndarray
    ac: ACPart | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    name: str = ""

    def model(self) -> OperatorModel:
        return OperatorModel(self.A, self.B)

    def family(self) -> PerturbationFamily:
        return PerturbationFamily(self.model(), self.gamma0, self.gamma)

    def ac_measure(self) -> MatrixMeasure | None:
        if self.ac is None:
            return None
        return MatrixMeasure(self.d, np.zeros(0), np.zeros((0, self.d, self.d)), self.ac)

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "N": self.N,
            "A": _matrix_json(self.A),
            "B": _matrix_json(self.B),
            "Gamma0": _matrix_json(self.gamma0),
            "Gamma": _matrix_json(self.gamma),
            "seed": int(self.seed),
        }
        if self.ac is not None:
            out["ac"] = {
                "start": self.ac.start,
                "end": self.ac.end,
                "densities": {"re": self.ac.densities.real.tolist(),
                              "im": self.ac.densities.imag.tolist()},
            }
        if self.tolerances:
            out["tolerances"] = dict(self.tolerances)
        if self.name:
            out["name"] = self.name
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _matrix_json(X: np.ndarray) -> dict:
    X = np.asarray(X, dtype=complex)
    return {"re": X.real.tolist(), "im": X.imag.tolist()}


def _parse_matrix(spec, where: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    try:
        if isinstance(spec, dict):
            if "diag" in spec:
                diag = np.asarray(spec["diag"], dtype=float)
                if diag.ndim != 1:
                    raise ScenarioError(f"{where}.diag must be a flat list")
                X = np.diag(diag).astype(complex)
            elif "re" in spec:
                re = np.asarray(spec["re"], dtype=float)
                im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
                if re.shape != im.shape:
                    raise ScenarioError(f"{where}: re has shape {re.shape} but im has {im.shape}")
                X = re + 1j * im
            else:
                raise ScenarioError(f"{where}: expected a 'diag' or 're'/'im' matrix object")
        elif isinstance(spec, list):
            X = np.asarray(spec, dtype=float).astype(complex)
        else:
            raise ScenarioError(f"{where}: expected a matrix, got {type(spec).__name__}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}: not a rectangular numeric array ({exc})") from None
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ScenarioError(f"{where}: expected a 2-d matrix, got {X.ndim} dimensions")
    if not np.all(np.isfinite(X)):
        raise ScenarioError(f"{where}: contains non-finite entries")
    if shape is not None and X.shape != shape:
        raise ScenarioError(f"{where}: expected shape {shape}, got {X.shape}")
    return X


def _hermitian(X: np.ndarray, where: str) -> np.ndarray:
    try:
        return check_hermitian(X, tol=1e-12 * (1 + float(np.abs(X).max(initial=0.0))), name=where)
    except ValidationError as exc:
        raise ScenarioError(str(exc)) from None


def _int_field(obj: dict, key: str, lo: int, hi: int | None = None) -> int:
    if key not in obj:
        raise ScenarioError(f"missing field '{key}'")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"field '{key}' must be an integer, got {v!r}")
    if v < lo or (hi is not None and v > hi):
        raise ScenarioError(f"field '{key}' = {v} out of range")
    return v


def scenario_from_dict(obj) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("scenario must be a JSON object")
    known = {"d", "N", "A", "B", "Gamma0", "Gamma", "ac", "seed", "tolerances", "name"}
    extra = sorted(set(obj) - known)
    if extra:
        raise ScenarioError(f"unknown field(s): {', '.join(extra)}")
    d = _int_field(obj, "d", 1)
    N = _int_field(obj, "N", d)
    for key in ("A", "B", "Gamma0", "Gamma"):
        if key not in obj:
            raise ScenarioError(f"missing field '{key}'")
    A = _hermitian(_parse_matrix(obj["A"], "A", (N, N)), "A")
    B = _parse_matrix(obj["B"], "B", (N, d))
    g0 = _hermitian(_parse_matrix(obj["Gamma0"], "Gamma0", (d, d)), "Gamma0")
    g = _hermitian(_parse_matrix(obj["Gamma"], "Gamma", (d, d)), "Gamma")
    lam = float(np.linalg.eigvalsh(0.5 * (g + g.conj().T)).min())
    if lam <= 1e-12:
        raise ScenarioError(f"Gamma must be positive definite: lambda_min = {lam:.6g}")
    sv = np.linalg.svd(B, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ScenarioError(f"B must have full column rank: sigma_min = {sv[-1]:.3e}")
    ac = None
    if obj.get("ac") is not None:
        spec = obj["ac"]
        if not isinstance(spec, dict) or not {"start", "end", "densities"} <= set(spec):
            raise ScenarioError("ac must be an object with start, end and densities")
        dens = spec["densities"]
        if isinstance(dens, dict):
            re = np.asarray(dens.get("re"), dtype=float)
            im = np.asarray(dens.get("im", np.zeros_like(re)), dtype=float)
            D = re + 1j * im
        else:
            D = np.asarray(dens, dtype=float).astype(complex)
        if D.ndim != 3 or D.shape[1:] != (d, d):
            raise ScenarioError(f"ac.densities must have shape (nodes, {d}, {d}), got {D.shape}")
        try:
            ac = ACPart(float(spec["start"]), float(spec["end"]), D)
        except ValidationError as exc:
            raise ScenarioError(f"ac: {exc}") from None
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ScenarioError(f"field 'seed' must be an unsigned 64-bit integer, got {seed!r}")
    tol = obj.get("tolerances", {}) or {}
    if not isinstance(tol, dict) or not all(isinstance(v, (int, float)) and v > 0 for v in tol.values()):
        raise ScenarioError("tolerances must map check names to positive numbers")
    name = obj.get("name", "")
    return Scenario(d, N, A, B, g0, g, ac, seed, {k: float(v) for k, v in tol.items()}, str(name))


def load_scenario(source) -> Scenario:
    """Parse a scenario from a path or from inline JSON text."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from None
    else:
        text = str(source)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(obj)


def random_scenario(d: int, N: int, seed: int) -> Scenario:
    """Reproducible random scenario with a cyclic coupling.

    ``A`` has GUE-style entries, ``B`` is complex Gaussian (full rank almost
    surely), ``Gamma0`` is a random Hermitian matrix and ``Gamma`` a shifted
    Wishart matrix ``W W^* / d + I / 2``.
    """
    if not 1 <= d <= N <= MAX_RANDOM_DIM:
        raise ScenarioError(f"need 1 <= d <= N <= {MAX_RANDOM_DIM}, got d={d}, N={N}")
    if not 0 <= seed < 2 ** 64:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    rng = np.random.default_rng(seed)

    def cgauss(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    for _ in range(RANDOM_RETRIES):
        X = cgauss(N, N)
        A = (X + X.conj().T) / (2 * np.sqrt(N))
        B = cgauss(N, d)
        Y = cgauss(d, d)
        g0 = (Y + Y.conj().T) / 2
        W = cgauss(d, d)
        g = W @ W.conj().T / d + 0.5 * np.eye(d)
        try:
            model = OperatorModel(A, B)
        except ValidationError:
            continue
        if model.cyclicity:
            return Scenario(d, N, model.A, model.B, 0.5 * (g0 + g0.conj().T),
                            0.5 * (g + g.conj().T), None, seed)
    raise ScenarioError(f"no cyclic scenario after {RANDOM_RETRIES} attempts (d={d}, N={N}, seed={seed})")


def random_ac_part(d: int, seed: int, nodes: int = 201, start: float = -1.0,
                   end: float = 1.0, rank: int | None = None) -> ACPart:
    """Smooth PSD density ``U K(x) U^*`` on a uniform grid.

    ``U`` is a fixed ``d x rank`` isometry and ``K(x) = C(x) C(x)^*`` with
    ``C`` a random quadratic polynomial, so every node density has the
    same range and linear interpolation between nodes keeps the rank.  The
    rank is drawn from ``1..d`` when not given.
    """
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, d + 1)) if rank is None else rank
    Z = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    U, _ = np.linalg.qr(Z)
    coef = [(rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2 * r)
            for _ in range(3)]
    coef[0] = coef[0] + np.eye(r)  # keeps K(x) well inside the PD cone
    grid = np.linspace(start, end, nodes)
    u = (grid - 0.5 * (start + end)) / (0.5 * (end - start))
    C = coef[0][None] + u[:, None, None] * coef[1][None] + (u ** 2)[:, None, None] * coef[2][None]
    D = U[None] @ (C @ np.conj(np.swapaxes(C, -1, -2))) @ U.conj().T[None]
    return ACPart(start, end, 0.5 * (D + np.conj(np.swapaxes(D, -1, -2))))


def with_ac(scenario: Scenario, ac: ACPart) -> Scenario:
    return Scenario(scenario.d, scenario.N, scenario.A, scenario.B, scenario.gamma0, scenario.gamma,
                    ac, scenario.seed, dict(scenario.tolerances), scenario.name)
