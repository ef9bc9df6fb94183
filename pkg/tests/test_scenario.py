import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finrank.linalg import psd_rank
from finrank.perturbation import OperatorModel
from finrank.scenario import (
    ScenarioError,
    load_scenario,
    random_ac_part,
    random_scenario,
    scenario_from_dict,
    with_ac,
)

MINIMAL = {"d": 1, "N": 1, "A": {"diag": [0]}, "B": [[1]],
           "Gamma0": {"diag": [0]}, "Gamma": {"diag": [1]}}


def test_minimal_rank_one_text_is_valid():
    sc = load_scenario(json.dumps(MINIMAL))
    assert (sc.d, sc.N) == (1, 1)
    assert sc.model().measure().locations.tolist() == [0.0]


def test_negative_gamma_names_lambda_min():
    obj = dict(MINIMAL, d=2, N=2, A={"diag": [0, 1]}, B=[[1, 0], [0, 1]],
               Gamma0={"diag": [0, 0]}, Gamma={"diag": [1, -0.5]})
    with pytest.raises(ScenarioError, match=r"lambda_min = -0\.5"):
        scenario_from_dict(obj)


def test_non_hermitian_entry_is_located():
    obj = dict(MINIMAL, d=1, N=2, A=[[0, 1], [2, 1]], B=[[1], [1]])
    with pytest.raises(ScenarioError, match=r"\[0, ?1\]|\(0, ?1\)"):
        scenario_from_dict(obj)


def test_parse_error_reports_position():
    with pytest.raises(ScenarioError, match="line 1, column"):
        load_scenario('{"d": 1,, }')


@pytest.mark.parametrize("patch, fragment", [
    ({"N": 0}, "'N'"),
    ({"B": [[0]]}, "full column rank"),
    ({"A": [[0, 0], [0, 0]]}, "shape"),
    ({"extra": 1}, "unknown field"),
    ({"seed": -1}, "seed"),
    ({"tolerances": {"ak-left-right": 0}}, "tolerances"),
])
def test_invalid_fields_rejected(patch, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        scenario_from_dict(dict(MINIMAL, **patch))


def test_missing_file_is_a_scenario_error(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "absent.json")


@given(st.integers(1, 4), st.integers(0, 8), st.integers(0, 2 ** 32))
def test_random_scenario_is_bitwise_deterministic(d, extra, seed):
    a, b = random_scenario(d, d + extra, seed), random_scenario(d, d + extra, seed)
    assert a.to_json() == b.to_json()
    assert a.digest() == b.digest()


@given(st.integers(1, 6), st.integers(0, 2 ** 32))
def test_identity_coupling_is_always_cyclic(n, seed):
    A = random_scenario(n, n, seed).A
    assert OperatorModel(A, np.eye(n)).cyclicity


def test_thousand_draws_validate():
    for seed in range(1000):
        sc = random_scenario(2, 6, seed)
        assert np.linalg.eigvalsh(sc.gamma).min() > 0
        assert sc.model().cyclicity


def test_json_round_trip_preserves_digest():
    sc = with_ac(random_scenario(2, 3, 5), random_ac_part(2, 5, nodes=11))
    back = load_scenario(sc.to_json())
    assert back.digest() == sc.digest()
    np.testing.assert_array_equal(back.ac.densities, sc.ac.densities)


def test_random_scenario_bounds():
    with pytest.raises(ScenarioError, match="d <= N"):
        random_scenario(3, 2, 0)


@given(st.integers(1, 4), st.integers(0, 2 ** 32))
def test_random_ac_part_has_constant_rank(d, seed):
    ac = random_ac_part(d, seed, nodes=21)
    ranks = {psd_rank(D, 1e-9) for D in ac.densities}
    assert len(ranks) == 1
    mid = ac.density_at(float(ac.start + 0.5 * ac.spacing))
    assert psd_rank(mid, 1e-9) in ranks
