"""Shared domain types: panel datasets, model specifications, parameter sets.

A model couples one or two univariate location-scale regression profiles
through a discrete joint mixing distribution.  Each profile's mean carries
component-specific coefficients (support points), the scale follows a
log-linear regression, and Student-t profiles add a constant shape
parameter.  All types here are immutable value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

INTERCEPT_NAME = "intercept"

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
FAMILIES = (GAUSSIAN, STUDENT_T)

# Shape (degrees of freedom) bounds on the natural scale used during
# estimation; the upper bound is numerically indistinguishable from gaussian.
NU_MIN = 0.5
NU_MAX = 200.0

PI_TOL = 1e-12


class BimixError(Exception):
    """Base class for all library errors."""


class InvalidModelError(BimixError):
    """A specification, dataset, or parameter set breaks a structural contract."""


class NumericalFailureError(BimixError):
    """A density or likelihood evaluation produced non-finite values."""


class DegenerateComponentError(BimixError):
    """A mixture component lost essentially all posterior weight."""

    def __init__(self, profile: int, component: int, total_weight: float):
        self.profile = profile
        self.component = component
        self.total_weight = total_weight
        super().__init__(
            f"component {component + 1} of profile {profile + 1} is degenerate "
            f"(total weight {total_weight:.3e})"
        )


class MultiStartError(BimixError):
    """Every start of a multi-start fit failed."""

    def __init__(self, reasons: Sequence[str]):
        self.reasons = tuple(reasons)
        super().__init__("all starts failed: " + "; ".join(self.reasons))


def _frozen_array(values: Any, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LinkFunction:
    """Monotone transform between a distribution parameter and its predictor."""

    kind: str

    IDENTITY = "identity"
    LOG = "log"

    def __post_init__(self):
        if self.kind not in (self.IDENTITY, self.LOG):
            raise InvalidModelError(f"unknown link kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "LinkFunction":
        return cls(cls.IDENTITY)

    @classmethod
    def log(cls) -> "LinkFunction":
        return cls(cls.LOG)

    def apply(self, theta):
        """Map the parameter to the predictor scale, g(theta)."""
        if self.kind == self.IDENTITY:
            return theta
        return np.log(theta)

    def inverse(self, eta):
        """Map the predictor back to the parameter scale, g^-1(eta)."""
        if self.kind == self.IDENTITY:
            return eta
        return np.exp(eta)

    def derivative(self, theta):
        """d g(theta) / d theta on the link's domain."""
        if self.kind == self.IDENTITY:
            return np.ones_like(np.asarray(theta, dtype=float))
        return 1.0 / np.asarray(theta, dtype=float)


@dataclass(frozen=True)
class Observation:
    """One time point of one unit: responses plus named covariate values."""

    time: int
    y: tuple[float, ...]
    covariates: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "time", int(self.time))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        object.__setattr__(self, "covariates", dict(self.covariates))


@dataclass(frozen=True)
class Unit:
    """A statistical unit with its time-ordered observations."""

    unit_id: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))


@dataclass(frozen=True)
class PanelDataset:
    """Unbalanced panel of units carrying J responses and named covariates.

    Structural invariants (unique unit ids, at least one observation per
    unit, strictly increasing times, a common response dimension J in {1, 2},
    and a common covariate set) are enforced at construction.
    """

    units: tuple[Unit, ...]
    covariate_names: tuple[str, ...] = field(init=False)
    J: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if not self.units:
            raise InvalidModelError("dataset has no units")
        seen_ids = set()
        for unit in self.units:
            if unit.unit_id in seen_ids:
                raise InvalidModelError(f"duplicate unit_id {unit.unit_id!r}")
            seen_ids.add(unit.unit_id)
            if len(unit.observations) < 1:
                raise InvalidModelError(f"unit {unit.unit_id!r} has no observations")
            times = [obs.time for obs in unit.observations]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InvalidModelError(
                    f"unit {unit.unit_id!r}: times must be strictly increasing"
                )
        first = self.units[0].observations[0]
        j = len(first.y)
        if j not in (1, 2):
            raise InvalidModelError(f"response dimension must be 1 or 2, got {j}")
        names = tuple(first.covariates.keys())
        name_set = set(names)
        for unit in self.units:
            for obs in unit.observations:
                if len(obs.y) != j:
                    raise InvalidModelError(
                        f"unit {unit.unit_id!r}: inconsistent response dimension"
                    )
                if set(obs.covariates.keys()) != name_set:
                    raise InvalidModelError(
                        f"unit {unit.unit_id!r}: inconsistent covariate names"
                    )
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "J", j)

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(unit.unit_id for unit in self.units)

    @property
    def n_observations(self) -> int:
        return sum(len(unit.observations) for unit in self.units)

    def response_values(self, j: int) -> np.ndarray:
        """All values of response j stacked unit-major, time order preserved."""
        return np.array(
            [obs.y[j] for unit in self.units for obs in unit.observations]
        )


@dataclass(frozen=True)
class ProfileSpec:
    """Declarative description of one response profile.

    mean_fixed holds covariates with a common coefficient, mean_random holds
    covariates whose coefficients vary by component (the literal name
    "intercept" denotes a constant-one column), and scale_covariates feed a
    log-linear scale regression with an implicit leading intercept.
    """

    family: str
    mean_fixed: tuple[str, ...]
    mean_random: tuple[str, ...]
    scale_covariates: tuple[str, ...]
    K: int
    mean_link: LinkFunction = LinkFunction(LinkFunction.IDENTITY)
    scale_link: LinkFunction = LinkFunction(LinkFunction.LOG)
    shape_link: LinkFunction = LinkFunction(LinkFunction.LOG)

    def __post_init__(self):
        object.__setattr__(self, "mean_fixed", tuple(self.mean_fixed))
        object.__setattr__(self, "mean_random", tuple(self.mean_random))
        object.__setattr__(self, "scale_covariates", tuple(self.scale_covariates))
        object.__setattr__(self, "K", int(self.K))

    @property
    def has_shape(self) -> bool:
        return self.family == STUDENT_T

    @property
    def p_fixed(self) -> int:
        return len(self.mean_fixed)

    @property
    def p_random(self) -> int:
        return len(self.mean_random)

    @property
    def n_scale_coeffs(self) -> int:
        return 1 + len(self.scale_covariates)

    def violations(self, label: str = "profile") -> list[str]:
        """Structural problems of this profile, empty when well formed."""
        out = []
        if self.family not in FAMILIES:
            out.append(f"{label}: unknown family {self.family!r}")
        if self.K < 1:
            out.append(f"{label}: K must be >= 1, got {self.K}")
        if not self.mean_random:
            out.append(f"{label}: mean_random must not be empty")
        elif INTERCEPT_NAME not in self.mean_random:
            out.append(f"{label}: mean_random must include {INTERCEPT_NAME!r}")
        overlap = set(self.mean_fixed) & set(self.mean_random)
        if overlap:
            out.append(
                f"{label}: covariates cannot be both fixed and random: "
                + ", ".join(sorted(overlap))
            )
        for group, names in (
            ("mean_fixed", self.mean_fixed),
            ("mean_random", self.mean_random),
            ("scale_covariates", self.scale_covariates),
        ):
            if len(set(names)) != len(names):
                out.append(f"{label}: duplicate names in {group}")
        if self.mean_link.kind != LinkFunction.IDENTITY:
            out.append(f"{label}: mean link must be identity")
        if self.scale_link.kind != LinkFunction.LOG:
            out.append(f"{label}: scale link must be log")
        if self.shape_link.kind != LinkFunction.LOG:
            out.append(f"{label}: shape link must be log")
        return out

    def covariates_used(self) -> tuple[str, ...]:
        """Names this profile reads from the data, intercept excluded."""
        names = []
        for name in self.mean_fixed + self.mean_random + self.scale_covariates:
            if name != INTERCEPT_NAME and name not in names:
                names.append(name)
        return tuple(names)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "mean_fixed": list(self.mean_fixed),
            "mean_random": list(self.mean_random),
            "scale_covariates": list(self.scale_covariates),
            "mean_link": self.mean_link.kind,
            "scale_link": self.scale_link.kind,
            "shape_link": self.shape_link.kind,
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ProfileSpec":
        return cls(
            family=doc["family"],
            mean_fixed=tuple(doc.get("mean_fixed", ())),
            mean_random=tuple(doc["mean_random"]),
            scale_covariates=tuple(doc.get("scale_covariates", ())),
            K=int(doc["K"]),
            mean_link=LinkFunction(doc.get("mean_link", LinkFunction.IDENTITY)),
            scale_link=LinkFunction(doc.get("scale_link", LinkFunction.LOG)),
            shape_link=LinkFunction(doc.get("shape_link", LinkFunction.LOG)),
        )


@dataclass(frozen=True)
class ModelSpec:
    """One or two response profiles sharing a joint mixing distribution."""

    profiles: tuple[ProfileSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if len(self.profiles) not in (1, 2):
            raise InvalidModelError(
                f"model must have 1 or 2 profiles, got {len(self.profiles)}"
            )

    @property
    def J(self) -> int:
        return len(self.profiles)

    @property
    def K(self) -> tuple[int, ...]:
        return tuple(p.K for p in self.profiles)

    @property
    def n_components(self) -> int:
        return int(np.prod(self.K))

    def pi_shape(self) -> tuple[int, int]:
        """Mixing matrix shape, (K1, 1) for univariate models."""
        if self.J == 1:
            return (self.profiles[0].K, 1)
        return (self.profiles[0].K, self.profiles[1].K)

    def with_components(self, *K: int) -> "ModelSpec":
        """Copy of this model with the component counts replaced."""
        if len(K) != self.J:
            raise InvalidModelError(
                f"expected {self.J} component counts, got {len(K)}"
            )
        return ModelSpec(
            tuple(replace(p, K=int(k)) for p, k in zip(self.profiles, K))
        )

    def to_dict(self) -> dict:
        return {"profiles": [p.to_dict() for p in self.profiles]}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ModelSpec":
        return cls(tuple(ProfileSpec.from_dict(p) for p in doc["profiles"]))


@dataclass(frozen=True)
class ProfileParams:
    """Coefficients of one profile.

    lam: fixed mean coefficients, shape (p_fixed,).
    U: support points, one row per component, shape (K, p_random).
    gamma: scale coefficients with leading intercept, shape (1 + q,).
    gamma_shape: shape coefficient on the link (log) scale, Student-t only.
    """

    lam: np.ndarray
    U: np.ndarray
    gamma: np.ndarray
    gamma_shape: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "lam", _frozen_array(np.atleast_1d(self.lam)))
        object.__setattr__(self, "U", _frozen_array(np.atleast_2d(self.U)))
        object.__setattr__(self, "gamma", _frozen_array(np.atleast_1d(self.gamma)))
        if self.gamma_shape is not None:
            object.__setattr__(self, "gamma_shape", float(self.gamma_shape))

    @property
    def K(self) -> int:
        return self.U.shape[0]

    def to_dict(self) -> dict:
        return {
            "lam": self.lam.tolist(),
            "U": self.U.tolist(),
            "gamma": self.gamma.tolist(),
            "gamma_shape": self.gamma_shape,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ProfileParams":
        return cls(
            lam=np.array(doc["lam"], dtype=float).reshape(-1),
            U=np.atleast_2d(np.array(doc["U"], dtype=float)),
            gamma=np.array(doc["gamma"], dtype=float).reshape(-1),
            gamma_shape=doc.get("gamma_shape"),
        )


@dataclass(frozen=True)
class ParameterSet:
    """All free parameters: per-profile coefficients plus joint probabilities.

    pi is stored K1 x K2, or K1 x 1 for univariate models; entries are
    non-negative and sum to one.
    """

    profiles: tuple[ProfileParams, ...]
    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        pi = np.array(self.pi, dtype=float)
        if pi.ndim == 1:
            pi = pi[:, None]
        if pi.ndim != 2:
            raise InvalidModelError(f"pi must be a matrix, got ndim {pi.ndim}")
        if np.any(pi < 0):
            raise InvalidModelError("pi entries must be non-negative")
        total = float(pi.sum())
        if abs(total - 1.0) > PI_TOL:
            raise InvalidModelError(f"pi must sum to 1, got {total!r}")
        object.__setattr__(self, "pi", _frozen_array(pi))

    @property
    def J(self) -> int:
        return len(self.profiles)

    def pi_marginal(self, j: int) -> np.ndarray:
        """Marginal component probabilities of profile j (0-based)."""
        axis = 1 - j
        return self.pi.sum(axis=axis)

    def shape_violations(self, spec: ModelSpec) -> list[str]:
        """Dimension mismatches between these parameters and a model."""
        out = []
        if len(self.profiles) != spec.J:
            out.append(
                f"parameters have {len(self.profiles)} profiles, model has {spec.J}"
            )
            return out
        for j, (p, s) in enumerate(zip(self.profiles, spec.profiles), start=1):
            if p.lam.shape != (s.p_fixed,):
                out.append(
                    f"profile {j}: lam has shape {p.lam.shape}, "
                    f"expected ({s.p_fixed},)"
                )
            if p.U.shape != (s.K, s.p_random):
                out.append(
                    f"profile {j}: U has shape {p.U.shape}, "
                    f"expected ({s.K}, {s.p_random})"
                )
            if p.gamma.shape != (s.n_scale_coeffs,):
                out.append(
                    f"profile {j}: gamma has shape {p.gamma.shape}, "
                    f"expected ({s.n_scale_coeffs},)"
                )
            if s.has_shape and p.gamma_shape is None:
                out.append(f"profile {j}: student_t requires gamma_shape")
            if not s.has_shape and p.gamma_shape is not None:
                out.append(f"profile {j}: gaussian must not carry gamma_shape")
        if self.pi.shape != spec.pi_shape():
            out.append(
                f"pi has shape {self.pi.shape}, expected {spec.pi_shape()}"
            )
        return out

    def canonical_orderings(self) -> tuple[np.ndarray, ...]:
        """Per-profile row orders sorting each U ascending by first column."""
        return tuple(
            np.argsort(p.U[:, 0], kind="stable") for p in self.profiles
        )

    def reordered(self, orders: Sequence[np.ndarray]) -> "ParameterSet":
        """Permute components per profile, carrying pi along consistently."""
        if len(orders) != self.J:
            raise InvalidModelError("one ordering per profile required")
        profiles = tuple(
            replace(p, U=p.U[np.asarray(order)])
            for p, order in zip(self.profiles, orders)
        )
        row_order = np.asarray(orders[0])
        col_order = np.asarray(orders[1]) if self.J == 2 else np.array([0])
        pi = self.pi[np.ix_(row_order, col_order)]
        return ParameterSet(profiles, pi)

    def canonicalized(self) -> "ParameterSet":
        """Normal form under component relabelling; idempotent."""
        return self.reordered(self.canonical_orderings())

    def to_dict(self) -> dict:
        return {
            "profiles": [p.to_dict() for p in self.profiles],
            "pi": self.pi.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ParameterSet":
        return cls(
            profiles=tuple(ProfileParams.from_dict(p) for p in doc["profiles"]),
            pi=np.array(doc["pi"], dtype=float),
        )


@dataclass(frozen=True)
class StandardErrors:
    """Standard errors arranged like a ParameterSet; NaN marks unavailable."""

    profiles: tuple[ProfileParams, ...]
    pi: np.ndarray
    ill_conditioned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(
            self, "pi", _frozen_array(np.atleast_2d(np.asarray(self.pi, dtype=float)))
        )

    def to_dict(self) -> dict:
        return {
            "profiles": [p.to_dict() for p in self.profiles],
            "pi": self.pi.tolist(),
            "ill_conditioned": self.ill_conditioned,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "StandardErrors":
        def clean(seq):
            return [
                clean(v) if isinstance(v, list) else (math.nan if v is None else v)
                for v in seq
            ]

        profiles = []
        for p in doc["profiles"]:
            profiles.append(
                ProfileParams(
                    lam=np.array(clean(p["lam"]), dtype=float).reshape(-1),
                    U=np.atleast_2d(np.array(clean(p["U"]), dtype=float)),
                    gamma=np.array(clean(p["gamma"]), dtype=float).reshape(-1),
                    gamma_shape=p.get("gamma_shape"),
                )
            )
        return cls(
            profiles=tuple(profiles),
            pi=np.array(clean(doc["pi"]), dtype=float),
            ill_conditioned=bool(doc.get("ill_conditioned", False)),
        )


@dataclass(frozen=True)
class FitResult:
    """Outcome of one estimation run.

    assignments holds the most-probable component per unit as 0-based
    indices, one column per profile.  posteriors and assignments are None
    when the fit failed before they could be computed.
    """

    params: ParameterSet
    loglik: float
    loglik_trace: np.ndarray
    converged: bool
    n_iterations: int
    d: int
    aic: float
    bic: float
    posteriors: Any
    assignments: np.ndarray | None
    unit_ids: tuple[str, ...]
    standard_errors: StandardErrors | None = None
    reason: str | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "loglik_trace", _frozen_array(np.atleast_1d(self.loglik_trace))
        )
        if self.assignments is not None:
            object.__setattr__(
                self,
                "assignments",
                _frozen_array(np.atleast_2d(self.assignments), dtype=int),
            )
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "loglik_trace": self.loglik_trace.tolist(),
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "d": self.d,
            "aic": self.aic,
            "bic": self.bic,
            "posteriors": None
            if self.posteriors is None
            else self.posteriors.w.tolist(),
            "assignments": None
            if self.assignments is None
            else (self.assignments + 1).tolist(),
            "unit_ids": list(self.unit_ids),
            "standard_errors": None
            if self.standard_errors is None
            else self.standard_errors.to_dict(),
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FitResult":
        from .em import PosteriorWeights

        nan = math.nan
        posteriors = None
        if doc.get("posteriors") is not None:
            posteriors = PosteriorWeights(np.array(doc["posteriors"], dtype=float))
        assignments = None
        if doc.get("assignments") is not None:
            assignments = np.array(doc["assignments"], dtype=int) - 1
        params = ParameterSet.from_dict(doc["params"])
        ses = None
        if doc.get("standard_errors") is not None:
            ses = StandardErrors.from_dict(doc["standard_errors"])
            # A null shape entry is NaN when the profile has a shape parameter.
            fixed = []
            for se_p, par_p in zip(ses.profiles, params.profiles):
                if par_p.gamma_shape is not None and se_p.gamma_shape is None:
                    fixed.append(replace(se_p, gamma_shape=math.nan))
                else:
                    fixed.append(se_p)
            ses = StandardErrors(
                tuple(fixed), ses.pi, ill_conditioned=ses.ill_conditioned
            )
        return cls(
            params=params,
            loglik=nan if doc["loglik"] is None else float(doc["loglik"]),
            loglik_trace=np.array(
                [nan if v is None else v for v in doc["loglik_trace"]], dtype=float
            ),
            converged=bool(doc["converged"]),
            n_iterations=int(doc["n_iterations"]),
            d=int(doc["d"]),
            aic=nan if doc["aic"] is None else float(doc["aic"]),
            bic=nan if doc["bic"] is None else float(doc["bic"]),
            posteriors=posteriors,
            assignments=assignments,
            unit_ids=tuple(doc["unit_ids"]),
            standard_errors=ses,
            reason=doc.get("reason"),
        )


def count_parameters(spec: ModelSpec) -> int:
    """Number of independent parameters of the model.

    Per profile: fixed mean coefficients, K support points times the random
    design width, scale coefficients (intercept included), and one shape
    coefficient for Student-t profiles.  The joint probabilities add the
    product of the component counts minus one.
    """
    d = 0
    for p in spec.profiles:
        d += p.p_fixed + p.K * p.p_random + p.n_scale_coeffs
        if p.has_shape:
            d += 1
    return d + spec.n_components - 1


def validate(spec: ModelSpec, data: PanelDataset) -> list[str]:
    """Human-readable mismatches between a model and a dataset, one per problem."""
    violations = []
    for j, profile in enumerate(spec.profiles, start=1):
        violations.extend(profile.violations(label=f"profile {j}"))
    if spec.J != data.J:
        violations.append(
            f"model has {spec.J} profiles but data carries {data.J} responses"
        )
    available = set(data.covariate_names)
    needed = []
    for profile in spec.profiles:
        for name in profile.covariates_used():
            if name not in needed:
                needed.append(name)
    first_unit = data.units[0].unit_id
    for name in needed:
        if name not in available:
            violations.append(
                f"covariate {name!r} missing from the data "
                f"(first offending unit {first_unit!r})"
            )
    return violations
