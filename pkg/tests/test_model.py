"""Domain types: dataset and spec invariants, parameter counting, ordering."""

import math

import numpy as np
import pytest

from bimix.em import component_logliks, observed_loglik
from bimix.model import (
    InvalidModelError,
    LinkFunction,
    ModelSpec,
    Observation,
    PanelDataset,
    ParameterSet,
    ProfileParams,
    ProfileSpec,
    Unit,
    count_parameters,
    validate,
)


def make_unit(uid, rows, names=("x",)):
    obs = []
    for t, y, cov in rows:
        obs.append(Observation(time=t, y=y, covariates=dict(zip(names, cov))))
    return Unit(unit_id=uid, observations=obs)


def tiny_dataset(J=2):
    rng = np.random.default_rng(5)
    units = []
    for i in range(4):
        rows = []
        for t in range(3):
            y = tuple(rng.normal(size=J))
            rows.append((t + 1, y, (rng.normal(),)))
        units.append(make_unit(f"u{i}", rows))
    return PanelDataset(units=units)


def gaussian_profile(K=1, fixed=("x",), random=("intercept",), scale=()):
    return ProfileSpec(
        family="gaussian",
        mean_fixed=fixed,
        mean_random=random,
        scale_covariates=scale,
        K=K,
    )


class TestLinkFunction:
    def test_identity(self):
        link = LinkFunction.identity()
        assert link.apply(2.5) == 2.5
        assert link.inverse(-1.0) == -1.0
        assert link.derivative(3.0) == 1.0

    def test_log_round_trip(self):
        link = LinkFunction.log()
        for theta in (0.1, 1.0, 37.5):
            assert link.inverse(link.apply(theta)) == pytest.approx(theta, rel=1e-14)
        assert link.derivative(4.0) == pytest.approx(0.25)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidModelError):
            LinkFunction("probit")


class TestPanelDataset:
    def test_basic_fields(self):
        data = tiny_dataset()
        assert data.n == 4
        assert data.J == 2
        assert data.n_observations == 12
        assert data.unit_ids == ("u0", "u1", "u2", "u3")

    def test_duplicate_unit_ids_rejected(self):
        unit = make_unit("a", [(1, (0.0,), (0.0,))])
        with pytest.raises(InvalidModelError, match="duplicate"):
            PanelDataset(units=[unit, unit])

    def test_times_must_increase(self):
        rows = [(2, (0.0,), (0.0,)), (2, (1.0,), (0.0,))]
        with pytest.raises(InvalidModelError, match="strictly increasing"):
            PanelDataset(units=[make_unit("a", rows)])

    def test_empty_unit_rejected(self):
        with pytest.raises(InvalidModelError, match="no observations"):
            PanelDataset(units=[Unit(unit_id="a", observations=())])

    def test_inconsistent_covariates_rejected(self):
        good = make_unit("a", [(1, (0.0,), (0.0,))])
        bad = Unit(
            unit_id="b",
            observations=[Observation(time=1, y=(0.0,), covariates={"z": 1.0})],
        )
        with pytest.raises(InvalidModelError, match="covariate"):
            PanelDataset(units=[good, bad])

    def test_response_dimension_consistency(self):
        one = make_unit("a", [(1, (0.0,), (0.0,))])
        two = make_unit("b", [(1, (0.0, 1.0), (0.0,))])
        with pytest.raises(InvalidModelError):
            PanelDataset(units=[one, two])


class TestProfileSpecViolations:
    def test_well_formed(self):
        assert gaussian_profile().violations() == []

    def test_k_zero_flagged(self):
        bad = gaussian_profile(K=0)
        assert any("K must be >= 1" in v for v in bad.violations())

    def test_missing_intercept_flagged(self):
        bad = gaussian_profile(random=("x2",), fixed=())
        assert any("intercept" in v for v in bad.violations())

    def test_fixed_random_overlap_flagged(self):
        bad = gaussian_profile(fixed=("x",), random=("intercept", "x"))
        assert any("both fixed and random" in v for v in bad.violations())

    def test_duplicate_names_flagged(self):
        bad = gaussian_profile(scale=("z", "z"))
        assert any("duplicate" in v for v in bad.violations())

    def test_links_are_fixed(self):
        bad = ProfileSpec(
            family="gaussian",
            mean_fixed=(),
            mean_random=("intercept",),
            scale_covariates=(),
            K=1,
            scale_link=LinkFunction.identity(),
        )
        assert any("scale link" in v for v in bad.violations())


class TestValidate:
    def test_self_consistent_scenario(self, sc1, sc1_small):
        data, _ = sc1_small
        assert validate(sc1.spec, data) == []

    def test_missing_covariate_named(self):
        data = tiny_dataset(J=1)
        spec = ModelSpec(profiles=[gaussian_profile(fixed=("open",))])
        problems = validate(spec, data)
        assert len(problems) == 1
        assert "open" in problems[0]
        assert "u0" in problems[0]

    def test_k_zero_reported(self):
        data = tiny_dataset(J=1)
        spec = ModelSpec(profiles=[gaussian_profile(K=0)])
        assert any("K must be >= 1" in v for v in validate(spec, data))

    def test_j_mismatch_reported(self):
        data = tiny_dataset(J=1)
        spec = ModelSpec(profiles=[gaussian_profile(), gaussian_profile()])
        assert any("profile" in v.lower() for v in validate(spec, data))


class TestCountParameters:
    def test_univariate_level_model_anchor(self):
        spec = ModelSpec(
            profiles=[
                ProfileSpec(
                    family="gaussian",
                    mean_fixed=("a", "b", "c"),
                    mean_random=("intercept",),
                    scale_covariates=(),
                    K=6,
                )
            ]
        )
        assert count_parameters(spec) == 15

    def test_bivariate_growth_model_anchor(self):
        spec = ModelSpec(
            profiles=[
                ProfileSpec(
                    family="gaussian",
                    mean_fixed=("a", "b", "c"),
                    mean_random=("intercept",),
                    scale_covariates=(),
                    K=6,
                ),
                ProfileSpec(
                    family="student_t",
                    mean_fixed=(),
                    mean_random=("intercept", "lag"),
                    scale_covariates=("z1", "z2", "z3", "z4", "z5"),
                    K=2,
                ),
            ]
        )
        assert count_parameters(spec) == 32

    def test_minimal_model(self):
        spec = ModelSpec(
            profiles=[
                ProfileSpec(
                    family="gaussian",
                    mean_fixed=(),
                    mean_random=("intercept",),
                    scale_covariates=(),
                    K=1,
                )
            ]
        )
        assert count_parameters(spec) == 2

    def test_invariant_to_name_reordering(self):
        base = ModelSpec(
            profiles=[
                gaussian_profile(fixed=("a", "b"), scale=("p", "q")),
                gaussian_profile(fixed=("b", "a"), scale=("q", "p")),
            ]
        )
        d1, d2 = (
            count_parameters(ModelSpec(profiles=[p])) for p in base.profiles
        )
        assert d1 == d2

    def test_additive_over_profiles(self):
        p1 = gaussian_profile(K=2)
        p2 = gaussian_profile(K=3, fixed=(), scale=("z",))
        joint = count_parameters(ModelSpec(profiles=[p1, p2]))
        solo1 = count_parameters(ModelSpec(profiles=[p1]))
        solo2 = count_parameters(ModelSpec(profiles=[p2]))
        # solo models carry (K_j - 1) mixing parameters, the joint K1*K2 - 1
        expected = (solo1 - 1) + (solo2 - 2) + (2 * 3 - 1)
        assert joint == expected


class TestParameterSet:
    def test_pi_must_sum_to_one(self):
        profile = ProfileParams(lam=[], U=[[0.0]], gamma=[0.0])
        with pytest.raises(InvalidModelError, match="sum to 1"):
            ParameterSet(profiles=[profile], pi=[[0.5], [0.6]])

    def test_pi_must_be_nonnegative(self):
        profile = ProfileParams(lam=[], U=[[0.0], [1.0]], gamma=[0.0])
        with pytest.raises(InvalidModelError, match="non-negative"):
            ParameterSet(profiles=[profile], pi=[[1.1], [-0.1]])

    def test_marginals(self, sc1):
        truth = sc1.truth
        np.testing.assert_allclose(truth.pi_marginal(0), truth.pi.sum(axis=1))
        np.testing.assert_allclose(truth.pi_marginal(1), truth.pi.sum(axis=0))
        assert truth.pi_marginal(0).sum() == pytest.approx(1.0)
        assert truth.pi_marginal(1).sum() == pytest.approx(1.0)

    def test_univariate_pi_is_column(self):
        profile = ProfileParams(lam=[], U=[[0.0], [1.0]], gamma=[0.0])
        ps = ParameterSet(profiles=[profile], pi=[0.25, 0.75])
        assert ps.pi.shape == (2, 1)

    def test_canonicalized_sorts_by_first_support_column(self, sc1):
        truth = sc1.truth
        canon = truth.canonicalized()
        for profile in canon.profiles:
            first = profile.U[:, 0]
            assert np.all(np.diff(first) >= 0)

    def test_canonicalized_idempotent(self, sc1):
        once = sc1.truth.canonicalized()
        twice = once.canonicalized()
        for a, b in zip(once.profiles, twice.profiles):
            np.testing.assert_array_equal(a.U, b.U)
        np.testing.assert_array_equal(once.pi, twice.pi)

    def test_canonicalized_preserves_likelihood(self, sc1, sc1_small):
        data, _ = sc1_small
        truth = sc1.truth
        canon = truth.canonicalized()
        ll = observed_loglik(component_logliks(sc1.spec, data, truth), truth.pi)
        ll_c = observed_loglik(component_logliks(sc1.spec, data, canon), canon.pi)
        assert ll_c == pytest.approx(ll, abs=1e-10)

    def test_reordered_round_trip(self, sc1):
        truth = sc1.truth
        orders = (np.array([1, 0]), np.array([1, 0]))
        back = truth.reordered(orders).reordered(orders)
        for a, b in zip(truth.profiles, back.profiles):
            np.testing.assert_array_equal(a.U, b.U)
        np.testing.assert_array_equal(truth.pi, back.pi)

    def test_shape_violations_catch_wrong_k(self, sc1):
        wrong = sc1.spec.with_components(3, 2)
        assert sc1.truth.shape_violations(wrong) != []


class TestModelSpec:
    def test_j_and_k(self, sc1):
        assert sc1.spec.J == 2
        assert sc1.spec.K == (2, 2)
        assert sc1.spec.pi_shape() == (2, 2)
        assert sc1.spec.n_components == 4

    def test_with_components(self, sc1):
        grown = sc1.spec.with_components(3, 4)
        assert grown.K == (3, 4)
        assert grown.profiles[0].mean_fixed == sc1.spec.profiles[0].mean_fixed

    def test_dict_round_trip(self, sc1):
        doc = sc1.spec.to_dict()
        again = ModelSpec.from_dict(doc)
        assert again == sc1.spec

    def test_empty_profiles_rejected(self):
        with pytest.raises(InvalidModelError):
            ModelSpec(profiles=[])


class TestFitResultInvariants:
    def test_criteria_match_definition(self, sc1_small_fit, sc1, sc1_small):
        fit = sc1_small_fit
        data, _ = sc1_small
        assert fit.aic == pytest.approx(-2.0 * fit.loglik + 2.0 * fit.d)
        assert fit.bic == pytest.approx(
            -2.0 * fit.loglik + fit.d * math.log(data.n)
        )
        assert fit.d == count_parameters(sc1.spec)

    def test_trace_non_decreasing(self, sc1_small_fit):
        diffs = np.diff(sc1_small_fit.loglik_trace)
        assert diffs.min() >= -1e-8

    def test_final_params_canonical(self, sc1_small_fit):
        for profile in sc1_small_fit.params.profiles:
            assert np.all(np.diff(profile.U[:, 0]) >= 0)

    def test_assignments_shape(self, sc1_small_fit, sc1_small):
        data, _ = sc1_small
        assert sc1_small_fit.assignments.shape == (data.n, 2)
