"""Synthetic panel generation from a model plus true parameter values.

Two canned bivariate designs with known truths are provided for Monte Carlo
work, plus a larger bivariate design with a Student-t growth-style profile.
Generation is deterministic given a seed and splits the random stream per
unit, so draws for one unit do not depend on how many units follow it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    INTERCEPT_NAME,
    InvalidModelError,
    ModelSpec,
    Observation,
    PanelDataset,
    ParameterSet,
    ProfileParams,
    ProfileSpec,
    Unit,
)


@dataclass(frozen=True)
class CovariateLaw:
    """Independent normal draws for each named covariate, one value per cell."""

    names: tuple[str, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "sds", tuple(float(v) for v in self.sds))
        if not (len(self.names) == len(self.means) == len(self.sds)):
            raise InvalidModelError("names, means, and sds must align")
        if len(set(self.names)) != len(self.names):
            raise InvalidModelError("duplicate covariate names")
        if any(sd < 0 for sd in self.sds):
            raise InvalidModelError("sds must be non-negative")

    @classmethod
    def standard_normal(cls, *names: str) -> "CovariateLaw":
        return cls(tuple(names), (0.0,) * len(names), (1.0,) * len(names))

    def describe(self) -> str:
        parts = [
            f"{name} ~ N({mean:g}, {sd:g}^2)"
            for name, mean, sd in zip(self.names, self.means, self.sds)
        ]
        return "i.i.d. " + ", ".join(parts)


@dataclass(frozen=True)
class ScenarioTruth:
    """A model, its true parameter values, and the covariate draw law."""

    name: str
    spec: ModelSpec
    truth: ParameterSet
    covariate_law: CovariateLaw

    def __post_init__(self):
        problems = self.truth.shape_violations(self.spec)
        if problems:
            raise InvalidModelError("; ".join(problems))
        available = set(self.covariate_law.names)
        for j, profile in enumerate(self.spec.profiles, start=1):
            for cov in profile.covariates_used():
                if cov not in available:
                    raise InvalidModelError(
                        f"profile {j} uses covariate {cov!r} "
                        "absent from the covariate law"
                    )


def _unit_id(i: int, n: int) -> str:
    width = len(str(n))
    return f"u{i + 1:0{width}d}"


def simulate_dataset(
    st: ScenarioTruth, n: int, T: int, seed: int
) -> tuple[PanelDataset, np.ndarray]:
    """Draw a balanced panel of n units with T periods each.

    Per unit, in order: the component pair from the joint probabilities, the
    covariate matrix, then noise for each profile in turn.  Returns the
    dataset and the drawn 0-based labels, one column per profile.
    """
    if n < 1 or T < 1:
        raise InvalidModelError("n and T must be >= 1")
    spec = st.spec
    law = st.covariate_law
    pi_flat = st.truth.pi.ravel()
    pi_cum = np.cumsum(pi_flat)
    K2 = st.truth.pi.shape[1]
    means = np.array(law.means)
    sds = np.array(law.sds)
    col = {name: idx for idx, name in enumerate(law.names)}

    children = np.random.SeedSequence(seed).spawn(n)
    units = []
    labels = np.empty((n, spec.J), dtype=int)
    for i in range(n):
        rng = np.random.default_rng(children[i])
        cell = int(
            min(np.searchsorted(pi_cum, rng.random(), side="right"), len(pi_flat) - 1)
        )
        k1, k2 = divmod(cell, K2)
        ks = (k1, k2)
        labels[i] = ks[: spec.J]
        C = rng.standard_normal((T, len(law.names))) * sds + means

        y_cols = []
        for j, spec_j in enumerate(spec.profiles):
            p = st.truth.profiles[j]
            mu = _design(spec_j.mean_random, C, col, T) @ p.U[ks[j]]
            if spec_j.mean_fixed:
                mu = mu + _design(spec_j.mean_fixed, C, col, T) @ p.lam
            Z1 = np.column_stack(
                [np.ones(T), _design(spec_j.scale_covariates, C, col, T)]
            )
            sigma = np.exp(Z1 @ p.gamma)
            if spec_j.has_shape:
                eps = rng.standard_t(math.exp(p.gamma_shape), size=T)
            else:
                eps = rng.standard_normal(T)
            y_cols.append(mu + sigma * eps)

        obs = tuple(
            Observation(
                time=t + 1,
                y=tuple(float(y_cols[j][t]) for j in range(spec.J)),
                covariates={name: float(C[t, col[name]]) for name in law.names},
            )
            for t in range(T)
        )
        units.append(Unit(unit_id=_unit_id(i, n), observations=obs))
    return PanelDataset(tuple(units)), labels


def _design(names, C, col, T) -> np.ndarray:
    if not names:
        return np.empty((T, 0))
    cols = [
        np.ones(T) if name == INTERCEPT_NAME else C[:, col[name]] for name in names
    ]
    return np.column_stack(cols)


def _two_covariate_profile(family: str, K: int) -> ProfileSpec:
    return ProfileSpec(
        family=family,
        mean_fixed=("x",),
        mean_random=(INTERCEPT_NAME,),
        scale_covariates=("z",),
        K=K,
    )


def scenario1() -> ScenarioTruth:
    """Two gaussian profiles with 2 x 2 components and well-separated means."""
    spec = ModelSpec(
        (
            _two_covariate_profile("gaussian", 2),
            _two_covariate_profile("gaussian", 2),
        )
    )
    truth = ParameterSet(
        profiles=(
            ProfileParams(
                lam=np.array([0.5]),
                U=np.array([[-1.0], [1.0]]),
                gamma=np.array([0.5, 0.75]),
            ),
            ProfileParams(
                lam=np.array([0.5]),
                U=np.array([[2.0], [-2.0]]),
                gamma=np.array([1.0, 0.25]),
            ),
        ),
        pi=np.array([[0.4, 0.1], [0.2, 0.3]]),
    )
    return ScenarioTruth(
        name="scenario1",
        spec=spec,
        truth=truth,
        covariate_law=CovariateLaw.standard_normal("x", "z"),
    )


def scenario2() -> ScenarioTruth:
    """Scenario 1 with a third second-profile component at zero, 2 x 3."""
    spec = ModelSpec(
        (
            _two_covariate_profile("gaussian", 2),
            _two_covariate_profile("gaussian", 3),
        )
    )
    truth = ParameterSet(
        profiles=(
            ProfileParams(
                lam=np.array([0.5]),
                U=np.array([[-1.0], [1.0]]),
                gamma=np.array([0.5, 0.75]),
            ),
            ProfileParams(
                lam=np.array([0.5]),
                U=np.array([[2.0], [-2.0], [0.0]]),
                gamma=np.array([1.0, 0.25]),
            ),
        ),
        pi=np.array([[0.1, 0.1, 0.2], [0.2, 0.3, 0.1]]),
    )
    return ScenarioTruth(
        name="scenario2",
        spec=spec,
        truth=truth,
        covariate_law=CovariateLaw.standard_normal("x", "z"),
    )


def solow_scenario() -> ScenarioTruth:
    """Synthetic bivariate growth design: gaussian level plus Student-t growth.

    The first profile regresses the level on three accumulation covariates
    with six intercept components; the second is a heavy-tailed growth
    profile with two components, a component-specific slope, and a
    covariate-driven scale.  Truth values are round numbers of realistic
    magnitude; covariates are independent normals.
    """
    spec = ModelSpec(
        (
            ProfileSpec(
                family="gaussian",
                mean_fixed=("sk", "sh", "ngd"),
                mean_random=(INTERCEPT_NAME,),
                scale_covariates=(),
                K=6,
            ),
            ProfileSpec(
                family="student_t",
                mean_fixed=(),
                mean_random=(INTERCEPT_NAME, "lnyc"),
                scale_covariates=("unempl", "fin", "infl", "open", "govcons"),
                K=2,
            ),
        )
    )
    truth = ParameterSet(
        profiles=(
            ProfileParams(
                lam=np.array([0.14, 0.46, -0.61]),
                U=np.array([[9.64], [7.48], [8.07], [6.97], [8.59], [9.01]]),
                gamma=np.array([-1.28]),
            ),
            ProfileParams(
                lam=np.empty(0),
                U=np.array([[1.05, -0.09], [-0.1, 0.02]]),
                gamma=np.array([-1.52, 1.34, -0.31, 0.03, 0.05, -0.15]),
                gamma_shape=math.log(1.69),
            ),
        ),
        pi=np.array(
            [
                [0.18, 0.04],
                [0.04, 0.12],
                [0.04, 0.14],
                [0.03, 0.06],
                [0.04, 0.09],
                [0.14, 0.08],
            ]
        ),
    )
    law = CovariateLaw(
        names=(
            "sk",
            "sh",
            "ngd",
            "lnyc",
            "unempl",
            "fin",
            "infl",
            "open",
            "govcons",
        ),
        means=(0.0, 0.0, 0.0, 8.509, 0.3, 0.8, 0.5, 0.6, 0.3),
        sds=(1.0, 1.0, 1.0, 1.268, 0.1, 0.3, 0.3, 0.3, 0.1),
    )
    return ScenarioTruth(name="solow", spec=spec, truth=truth, covariate_law=law)


SCENARIOS = {
    "1": scenario1,
    "2": scenario2,
    "scenario1": scenario1,
    "scenario2": scenario2,
    "solow": solow_scenario,
}


def get_scenario(key: str) -> ScenarioTruth:
    """Look up a canned scenario by id ("1", "2", or "solow")."""
    try:
        return SCENARIOS[str(key)]()
    except KeyError:
        raise InvalidModelError(
            f"unknown scenario {key!r}; expected one of 1, 2, solow"
        ) from None
