import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_hermitian, random_psd
from finrank.averaging import PerturbationFamily
from finrank.linalg import operator_norm
from finrank.measure import ACPart, MatrixMeasure, ScalarMeasure
from finrank.singularity import (
    A2_CONSTANT,
    UnsupportedInputError,
    a2_blowup_profile,
    a2_bound_check,
    a2_characteristic,
    ad_check,
    blows_up,
    common_atom_coupling,
    conjugated_perturbed_measure,
    exceptional_parameter_scan,
    vector_mutual_singularity,
)
from finrank.scenario import random_scenario

E1 = np.diag([1.0, 0.0])
E2 = np.diag([0.0, 1.0])
seeds = st.integers(0, 2**32 - 1)


def atoms(xs, ws):
    return MatrixMeasure.from_atoms(xs, [np.atleast_2d(w) for w in ws])


def test_mutual_singularity_examples():
    r = vector_mutual_singularity(atoms([1.0], [E2]), atoms([1.0], [E1]))
    assert r.singular and np.allclose(r.witness.projections[0], E1)
    r = vector_mutual_singularity(atoms([0.0], [E1]), atoms([0.0], [E1]))
    assert not r and r.violations == [(0.0, pytest.approx(1.0))]
    r = vector_mutual_singularity(atoms([0.0], [np.eye(2)]), atoms([1.0], [np.eye(2)]))
    assert r.singular and r.common_atoms == []
    assert np.allclose(r.witness.projections[0], 0) and np.allclose(r.witness.projections[1], np.eye(2))


def test_mutual_singularity_rejects_ac():
    ac = MatrixMeasure(1, np.zeros(0), np.zeros((0, 1, 1)), ACPart(0, 1, np.ones((3, 1, 1))))
    with pytest.raises(UnsupportedInputError):
        vector_mutual_singularity(ac, atoms([0.0], [1.0]))


def test_ad_examples(diag01):
    r = ad_check(diag01, E1)
    assert r.singular and len(r.common_atoms) == 1 and np.isclose(r.common_atoms[0], 1.0)
    GMG = conjugated_perturbed_measure(diag01, E1)
    assert np.allclose(GMG.atom_weight(1.0), E1)
    assert ad_check(diag01, np.zeros((2, 2))).singular


@given(seeds, st.integers(1, 4), st.integers(0, 8))
def test_ad_random_with_witness(seed, d, extra):
    sc = random_scenario(d, d + extra, seed)
    model = sc.model()
    rng = np.random.default_rng(seed)
    for G in (random_hermitian(rng, d, 2.0), sc.gamma0, random_psd(rng, d, 1)):
        r = ad_check(model, G)
        assert r.singular and r.max_overlap <= 1e-8
        assert r.witness.verify(model.measure(), conjugated_perturbed_measure(model, G))


@given(seeds, st.integers(2, 4), st.integers(0, 6))
def test_forced_common_atom(seed, d, extra):
    sc = random_scenario(d, d + extra, seed)
    model = sc.model()
    G, lam = common_atom_coupling(model, np.random.default_rng(seed))
    r = ad_check(model, G)
    assert any(abs(x - lam) < 1e-7 for x in r.common_atoms)
    assert r.singular and r.max_overlap <= 1e-8


def test_a2_characteristic_examples():
    M, N = atoms([0.0], [1.0]), atoms([1.0], [1.0])
    assert np.isclose(a2_characteristic(M, N, [1j]).value, 1 / (2 * np.pi ** 2))
    assert a2_characteristic(M, MatrixMeasure.zero(1), [1j, 2j]).value == 0.0


@given(seeds, st.integers(1, 3))
def test_a2_symmetry_and_monotonicity(seed, d):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-2, 2, 3)
    Ws = [random_psd(rng, d) for _ in xs]
    Vs = [random_psd(rng, d) for _ in xs]
    M, N = atoms(xs, Ws), atoms(xs + 0.1, Vs)
    zs = np.concatenate([xs + 0.01j, xs + 1j, [0.5j]])
    a, b = a2_characteristic(M, N, zs), a2_characteristic(N, M, zs)
    assert abs(a.value - b.value) <= 1e-10 * (1 + a.value) and a.order_residual <= 1e-10 * (1 + a.value)
    shrink = rng.uniform(0, 1, len(xs))
    Mp = atoms(xs, [s * W for s, W in zip(shrink, Ws)])
    assert a2_characteristic(Mp, N, zs).value <= a.value * (1 + 1e-12)


def test_a2_bound_examples(rank_one, diag01):
    r = a2_bound_check(rank_one, [[1.0]], [1j])
    assert np.isclose(r.max_value, 1 / (np.pi * np.sqrt(2))) and r.holds
    r = a2_bound_check(diag01, np.eye(2), [1j])
    assert np.isclose(r.max_value, max(1 / (np.pi * np.sqrt(2)), 1 / (np.pi * np.sqrt(10))))
    r = a2_bound_check(diag01, np.zeros((2, 2)))
    assert r.max_value == 0.0 and np.isclose(r.margin, A2_CONSTANT)


@given(seeds, st.integers(1, 4))
def test_a2_bound_random(seed, d):
    sc = random_scenario(d, d + 4, seed)
    rng = np.random.default_rng(seed)
    for G in (sc.gamma0 + sc.gamma, random_hermitian(rng, d, 5.0)):
        r = a2_bound_check(sc.model(), G, eps_min=1e-6)
        assert r.holds and r.identity_residual <= 1e-10


def test_blowup_detector():
    # a hand-built pair that shares an atom with overlapping ranges
    broken = a2_blowup_profile(atoms([0.0], [E1]), atoms([0.0], [np.ones((2, 2)) / 2]), 0.0,
                               (1e-1, 1e-2, 1e-3, 1e-4))
    assert blows_up(broken, (1e-1, 1e-2, 1e-3, 1e-4))
    ok = a2_blowup_profile(atoms([0.0], [E1]), atoms([0.0], [E2]), 0.0, (1e-1, 1e-2, 1e-3, 1e-4))
    assert not blows_up(ok, (1e-1, 1e-2, 1e-3, 1e-4)) and ok.max() < 1e-12


def test_exceptional_scan_examples(rank_one, diag01):
    grid = np.linspace(-2, 2, 41)
    fam = PerturbationFamily(diag01, np.zeros((2, 2)), np.eye(2))
    assert np.allclose(exceptional_parameter_scan(fam, ScalarMeasure.atomic([0.5], [1.0]), grid), [-0.5, 0.5])
    assert exceptional_parameter_scan(fam, ScalarMeasure.atomic([7.0], [1.0]), grid) == []
    fam1 = PerturbationFamily(rank_one, np.zeros((1, 1)), np.ones((1, 1)))
    assert np.allclose(exceptional_parameter_scan(fam1, ScalarMeasure.atomic([-1.3], [1.0]), grid), [-1.3])
    with pytest.raises(UnsupportedInputError):
        exceptional_parameter_scan(fam1, ScalarMeasure.uniform(0, 1), grid)
