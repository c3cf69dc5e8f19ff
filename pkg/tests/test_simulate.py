"""Scenario definitions and the panel simulator: determinism and moments."""

import math

import numpy as np
import pytest

from bimix.dataio import dataset_from_csv_text, dataset_to_csv_text
from bimix.model import InvalidModelError, validate
from bimix.simulate import (
    CovariateLaw,
    ScenarioTruth,
    get_scenario,
    scenario1,
    scenario2,
    simulate_dataset,
    solow_scenario,
)


class TestScenarioDefinitions:
    def test_scenario1_truth(self):
        st = scenario1()
        np.testing.assert_allclose(
            st.truth.pi, np.array([[0.4, 0.1], [0.2, 0.3]])
        )
        assert st.truth.pi.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(st.truth.profiles[0].U, [[-1.0], [1.0]])
        np.testing.assert_allclose(st.truth.profiles[1].U, [[2.0], [-2.0]])
        np.testing.assert_allclose(st.truth.profiles[0].lam, [0.5])
        np.testing.assert_allclose(st.truth.profiles[0].gamma, [0.5, 0.75])
        np.testing.assert_allclose(st.truth.profiles[1].gamma, [1.0, 0.25])

    def test_scenario2_adds_third_component(self):
        st = scenario2()
        assert st.spec.profiles[1].K == 3
        np.testing.assert_allclose(
            st.truth.pi, np.array([[0.1, 0.1, 0.2], [0.2, 0.3, 0.1]])
        )
        np.testing.assert_allclose(st.truth.profiles[1].U, [[2.0], [-2.0], [0.0]])

    def test_scenario_specs_validate_against_own_data(self):
        for st in (scenario1(), scenario2(), solow_scenario()):
            data, labels = simulate_dataset(st, n=8, T=3, seed=1)
            assert validate(st.spec, data) == []
            assert labels.shape == (8, 2)

    def test_solow_scenario_structure(self):
        st = solow_scenario()
        assert st.spec.K == (6, 2)
        assert st.spec.profiles[0].family == "gaussian"
        assert st.spec.profiles[1].family == "student_t"
        assert st.truth.profiles[1].gamma_shape == pytest.approx(math.log(1.69))
        assert st.truth.pi.sum() == pytest.approx(1.0)

    def test_get_scenario_aliases(self):
        assert get_scenario("1").name == get_scenario("scenario1").name
        assert get_scenario("2").name == get_scenario("scenario2").name
        assert get_scenario("solow").name == solow_scenario().name
        with pytest.raises(InvalidModelError):
            get_scenario("9")

    def test_truth_must_match_spec(self):
        st = scenario1()
        with pytest.raises(InvalidModelError):
            ScenarioTruth(
                name="broken",
                spec=st.spec.with_components(3, 2),
                truth=st.truth,
                covariate_law=st.covariate_law,
            )

    def test_covariate_law_must_cover_spec(self):
        st = scenario1()
        with pytest.raises(InvalidModelError):
            ScenarioTruth(
                name="broken",
                spec=st.spec,
                truth=st.truth,
                covariate_law=CovariateLaw.standard_normal("x"),
            )


class TestSimulateDataset:
    def test_deterministic_given_seed(self, sc1):
        a_data, a_labels = simulate_dataset(sc1, n=12, T=4, seed=99)
        b_data, b_labels = simulate_dataset(sc1, n=12, T=4, seed=99)
        assert dataset_to_csv_text(a_data) == dataset_to_csv_text(b_data)
        np.testing.assert_array_equal(a_labels, b_labels)

    def test_different_seeds_differ(self, sc1):
        a_data, _ = simulate_dataset(sc1, n=12, T=4, seed=99)
        b_data, _ = simulate_dataset(sc1, n=12, T=4, seed=100)
        assert dataset_to_csv_text(a_data) != dataset_to_csv_text(b_data)

    def test_shapes_and_ids(self, sc1):
        data, labels = simulate_dataset(sc1, n=11, T=3, seed=5)
        assert data.n == 11
        assert data.J == 2
        assert all(len(u.observations) == 3 for u in data.units)
        assert data.unit_ids[0] == "u01"
        assert data.unit_ids[-1] == "u11"
        times = [o.time for o in data.units[0].observations]
        assert times == [1, 2, 3]
        assert labels.min() >= 0
        assert labels[:, 0].max() < 2 and labels[:, 1].max() < 2

    def test_rejects_empty_panel(self, sc1):
        with pytest.raises(InvalidModelError):
            simulate_dataset(sc1, n=0, T=3, seed=1)
        with pytest.raises(InvalidModelError):
            simulate_dataset(sc1, n=3, T=0, seed=1)

    def test_conditional_mean_of_first_profile(self, sc1):
        data, labels = simulate_dataset(sc1, n=400, T=25, seed=7)
        u_values = np.array([-1.0, 1.0])
        resid = []
        for unit, (k1, _) in zip(data.units, labels):
            for obs in unit.observations:
                resid.append(obs.y[0] - 0.5 * obs.covariates["x"] - u_values[k1])
        resid = np.asarray(resid)
        # sd of y1 given z averages E[exp(0.5+0.75z)] = exp(0.5 + 0.75^2/2)
        sd = math.exp(0.5 + 0.75**2 / 2)
        band = 3 * sd / math.sqrt(resid.size)
        assert abs(resid.mean()) < band

    def test_conditional_scale_of_first_profile(self, sc1):
        data, labels = simulate_dataset(sc1, n=400, T=25, seed=8)
        u_values = np.array([-1.0, 1.0])
        standardized = []
        for unit, (k1, _) in zip(data.units, labels):
            for obs in unit.observations:
                mu = u_values[k1] + 0.5 * obs.covariates["x"]
                sigma = math.exp(0.5 + 0.75 * obs.covariates["z"])
                standardized.append((obs.y[0] - mu) / sigma)
        standardized = np.asarray(standardized)
        nT = standardized.size
        assert abs(standardized.mean()) < 3 / math.sqrt(nT)
        # var of the sample variance of N(0,1) draws is ~2/nT
        assert abs(standardized.var() - 1.0) < 3 * math.sqrt(2.0 / nT)

    def test_second_profile_moments(self, sc1):
        data, labels = simulate_dataset(sc1, n=400, T=25, seed=9)
        u_values = np.array([2.0, -2.0])
        standardized = []
        for unit, (_, k2) in zip(data.units, labels):
            for obs in unit.observations:
                mu = u_values[k2] + 0.5 * obs.covariates["x"]
                sigma = math.exp(1.0 + 0.25 * obs.covariates["z"])
                standardized.append((obs.y[1] - mu) / sigma)
        standardized = np.asarray(standardized)
        nT = standardized.size
        assert abs(standardized.mean()) < 3 / math.sqrt(nT)
        assert abs(standardized.var() - 1.0) < 3 * math.sqrt(2.0 / nT)

    def test_label_frequencies_match_pi(self):
        st = scenario2()
        _, labels = simulate_dataset(st, n=100000, T=1, seed=10)
        counts = np.zeros((2, 3))
        for k1, k2 in labels:
            counts[k1, k2] += 1
        freq = counts / labels.shape[0]
        np.testing.assert_allclose(freq, st.truth.pi, atol=0.005)

    def test_csv_round_trip_lossless(self, sc1):
        data, _ = simulate_dataset(sc1, n=7, T=4, seed=12)
        text = dataset_to_csv_text(data)
        back = dataset_from_csv_text(text)
        assert back.unit_ids == data.unit_ids
        for ua, ub in zip(data.units, back.units):
            for oa, ob in zip(ua.observations, ub.observations):
                assert oa.time == ob.time
                assert oa.y == ob.y
                assert oa.covariates == ob.covariates

    def test_unit_draws_use_per_unit_streams(self, sc1):
        """Growing n leaves the first units' draws untouched."""
        small, small_labels = simulate_dataset(sc1, n=5, T=3, seed=33)
        large, large_labels = simulate_dataset(sc1, n=9, T=3, seed=33)
        np.testing.assert_array_equal(small_labels, large_labels[:5])
        for ua, ub in zip(small.units, large.units[:5]):
            for oa, ob in zip(ua.observations, ub.observations):
                assert oa.y == ob.y
                assert oa.covariates == ob.covariates


class TestCovariateLaw:
    def test_standard_normal_constructor(self):
        law = CovariateLaw.standard_normal("x", "z")
        assert law.names == ("x", "z")
        np.testing.assert_array_equal(law.means, [0.0, 0.0])
        np.testing.assert_array_equal(law.sds, [1.0, 1.0])

    def test_describe_mentions_names(self):
        law = CovariateLaw.standard_normal("x", "z")
        text = law.describe()
        assert "x" in text and "z" in text

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidModelError):
            CovariateLaw(names=("x",), means=(0.0, 1.0), sds=(1.0,))
