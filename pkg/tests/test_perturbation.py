import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_hermitian
from finrank.herglotz import HerglotzEval, boundary_transform, cauchy_matrix
from finrank.linalg import ValidationError, operator_norm
from finrank.measure import ACPart, MatrixMeasure
from finrank.perturbation import (
    IllConditionedError,
    OperatorModel,
    ac_density_transform,
    ak_transform,
    aronszajn_krein,
    cyclicity_check,
    cyclicity_preserved_check,
    im_transform_identity_residual,
    perturb,
    perturbed_measure_direct,
)
from finrank.scenario import random_scenario

seeds = st.integers(0, 2**32 - 1)


def test_perturb_examples(rank_one, diag01):
    assert np.allclose(perturb(diag01, np.zeros((2, 2))), diag01.A)
    assert np.allclose(perturb(rank_one, [[2.5]]), [[2.5]])
    assert np.allclose(perturb(diag01, np.diag([1.0, 0.0])), np.eye(2))
    with pytest.raises(ValidationError):
        perturb(diag01, np.eye(3))


def test_model_rejects_rank_deficient_b():
    with pytest.raises(ValidationError):
        OperatorModel(np.eye(2), np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_perturbed_measure_examples(rank_one, diag01):
    M = perturbed_measure_direct(rank_one, [[1.0]])
    assert M.locations.tolist() == [1.0] and np.allclose(M.weights[0], 1)
    M0 = perturbed_measure_direct(diag01, np.zeros((2, 2)))
    assert np.allclose(M0.locations, diag01.measure().locations)
    M1 = perturbed_measure_direct(diag01, np.diag([1.0, 0.0]))
    assert np.allclose(M1.locations, [1.0]) and np.allclose(M1.weights[0], np.eye(2))


def test_ak_examples(rank_one):
    F = HerglotzEval(1j, cauchy_matrix(rank_one.measure(), 1j))
    assert np.allclose(aronszajn_krein(F, np.zeros((1, 1))).value, F.value)
    assert np.allclose(aronszajn_krein(F, [[1.0]]).value, (1 + 1j) / 2)
    # cross-check: the perturbed measure is a unit atom at 1
    assert np.isclose(1 / (1 - 1j), (1 + 1j) / 2)


def test_ak_ill_conditioned():
    F = HerglotzEval(1j, np.array([[1.0]]))
    with pytest.raises(IllConditionedError):
        aronszajn_krein(F, [[-1.0]])


@given(seeds, st.integers(1, 4), st.integers(0, 8))
def test_ak_routes_agree(seed, d, extra):
    sc = random_scenario(d, d + extra, seed)
    model = sc.model()
    rng = np.random.default_rng(seed)
    G = random_hermitian(rng, d, 2.0)
    MG = perturbed_measure_direct(model, G)
    eye = np.eye(d)
    for z in (2j, complex(rng.uniform(-2, 2), 10 ** rng.uniform(-2, 1)), -0.5 - 0.3j):
        F = HerglotzEval(z, cauchy_matrix(model.measure(), z))
        left = aronszajn_krein(F, G).value
        right = aronszajn_krein(F, G, side="right").value
        direct = cauchy_matrix(MG, z)
        assert operator_norm(direct - left) <= 1e-9 * (1 + operator_norm(direct))
        assert operator_norm(left - right) <= 1e-10 * (1 + operator_norm(left))
        assert operator_norm((eye + F.value @ G) @ left - F.value) <= 1e-10 * (1 + operator_norm(F.value))
        if z.imag > 0:
            assert aronszajn_krein(F, G).is_herglotz()
        assert np.allclose(ak_transform(model, G, z), left)


@given(seeds, st.integers(1, 4))
def test_mass_conservation(seed, d):
    sc = random_scenario(d, d + 3, seed)
    model = sc.model()
    G = random_hermitian(np.random.default_rng(seed), d)
    BB = model.B.conj().T @ model.B
    assert operator_norm(perturbed_measure_direct(model, G).total_mass() - BB) <= 1e-10 * (1 + operator_norm(BB))
    assert operator_norm(model.measure().total_mass() - BB) <= 1e-10 * (1 + operator_norm(BB))


def test_im_identity_examples(rank_one, diag01):
    assert im_transform_identity_residual(diag01, np.zeros((2, 2)), 1j) <= 1e-15
    assert im_transform_identity_residual(rank_one, [[1.0]], 1j) <= 1e-12


@given(seeds, st.integers(1, 4))
def test_im_identity_random(seed, d):
    sc = random_scenario(d, d + 4, seed)
    rng = np.random.default_rng(seed)
    G = random_hermitian(rng, d, 3.0)
    for _ in range(5):
        z = complex(rng.uniform(-3, 3), rng.choice([-1, 1]) * 10 ** rng.uniform(-2, 1))
        assert im_transform_identity_residual(sc.model(), G, z) <= 1e-9


def test_cyclicity_examples():
    r = cyclicity_check(OperatorModel(np.zeros((2, 2)), np.array([[1.0], [0.0]])))
    assert not r and r.deficient[0][0] == 0.0
    assert cyclicity_check(OperatorModel(np.diag([0.0, 1.0]), np.array([[1.0], [1.0]])))
    assert cyclicity_check(OperatorModel(np.diag([3.0, 3.0, 1.0]), np.eye(3)))


def test_cyclicity_preserved_examples(diag01):
    assert cyclicity_preserved_check(diag01, np.zeros((2, 2)))
    assert cyclicity_preserved_check(diag01, np.diag([1.0, 0.0]))


@given(seeds, st.integers(1, 3))
def test_cyclicity_preserved_random(seed, d):
    sc = random_scenario(d, d + 3, seed)
    assert cyclicity_preserved_check(sc.model(), random_hermitian(np.random.default_rng(seed), d))


def _uniform(d=1, density=1.0, nodes=401):
    D = np.array([density * np.eye(d)] * nodes, dtype=complex)
    return MatrixMeasure(d, np.zeros(0), np.zeros((0, d, d)), ACPart(-1.0, 1.0, D))


def test_density_transform_zero_coupling():
    r = ac_density_transform(_uniform(), [[0.0]], 0.0)
    assert not r.exceptional and r.residual <= 1e-6 and r.rank_ok


def test_density_transform_scalar_closed_form():
    M = _uniform()
    r = ac_density_transform(M, [[0.1]], 0.0)
    assert r.residual <= 1e-4
    # w^gamma = w / |1 + gamma F_+|^2 with w = 1 and F_+(0) = i pi
    expected = 1 / abs(1 + 0.1j * np.pi) ** 2
    bv = boundary_transform(lambda z: np.imag(1 / (1 / cauchy_matrix(M, z) + 0.1)) / np.pi, 0.0,
                            (1e-3, 5e-4, 2.5e-4))
    assert abs(float(np.real(bv.value[0, 0])) - expected) <= 1e-4 * expected


def test_density_transform_rank_deficient():
    grid = np.linspace(-1, 1, 201)
    D = np.array([np.diag([1.0 + 0.5 * x, 0.0]) for x in grid], dtype=complex)
    M = MatrixMeasure(2, np.zeros(0), np.zeros((0, 2, 2)), ACPart(-1.0, 1.0, D))
    r = ac_density_transform(M, np.array([[0.3, 0.2], [0.2, -0.4]]), 0.1)
    assert r.rank_before == r.rank_after == 1 and r.residual <= 1e-4


def test_density_transform_requires_ac(rank_one):
    with pytest.raises(ValidationError):
        ac_density_transform(rank_one.measure(), [[1.0]], 0.0)
