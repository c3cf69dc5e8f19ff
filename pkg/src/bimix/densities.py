"""Location-scale log-densities, their scores, and weighted profile maximizers.

The maximizer performs one generalized ascent pass for a single profile:
an exact weighted least-squares update of the mean coefficients (iteratively
reweighted for Student-t), a Fisher-scoring update of the log-scale
coefficients, and a bounded one-dimensional search for the Student-t shape.
Every step is guarded by halving so the weighted log-likelihood never
decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import digamma, gammaln

from .model import (
    GAUSSIAN,
    NU_MAX,
    NU_MIN,
    STUDENT_T,
    DegenerateComponentError,
    InvalidModelError,
    NumericalFailureError,
    ProfileParams,
    ProfileSpec,
)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Inner ascent pass: iteration cap, stopping improvement, and step halvings.
INNER_MAX_ITER = 50
INNER_TOL = 1e-10
MAX_HALVINGS = 30
DEGENERACY_TOL = 1e-10


def _check_domain(sigma, nu=None):
    if not np.all(np.isfinite(sigma)) or np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be finite and positive")
    if nu is not None and (
        not np.all(np.isfinite(nu)) or np.any(np.asarray(nu) <= 0)
    ):
        raise ValueError("nu must be finite and positive")


def log_density_gaussian(y, mu, sigma):
    """Gaussian log-density with scale (standard deviation) sigma."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(mu))):
        raise ValueError("y and mu must be finite")
    _check_domain(sigma)
    r = (y - mu) / sigma
    out = -HALF_LOG_2PI - np.log(sigma) - 0.5 * r * r
    return float(out) if out.ndim == 0 else out


def log_density_t(y, mu, sigma, nu):
    """Student-t log-density with location mu, scale sigma, shape nu."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(mu))):
        raise ValueError("y and mu must be finite")
    _check_domain(sigma, nu)
    r = (y - mu) / sigma
    out = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * math.pi)
        - np.log(sigma)
        - ((nu + 1.0) / 2.0) * np.log1p(r * r / nu)
    )
    return float(out) if np.ndim(out) == 0 else out


def score_gaussian(y, mu, sigma):
    """Gradient of the gaussian log-density w.r.t. (mu, log sigma)."""
    _check_domain(sigma)
    r = (np.asarray(y, dtype=float) - mu) / sigma
    return r / sigma, r * r - 1.0


def score_t(y, mu, sigma, nu):
    """Gradient of the Student-t log-density w.r.t. (mu, log sigma, log nu)."""
    _check_domain(sigma, nu)
    r = (np.asarray(y, dtype=float) - mu) / sigma
    r2 = r * r
    w = (nu + 1.0) / (nu + r2)
    d_mu = w * r / sigma
    d_logsigma = w * r2 - 1.0
    d_nu = (
        0.5 * digamma((nu + 1.0) / 2.0)
        - 0.5 * digamma(nu / 2.0)
        - 0.5 / nu
        - 0.5 * np.log1p(r2 / nu)
        + (nu + 1.0) * r2 / (2.0 * nu * (nu + r2))
    )
    return d_mu, d_logsigma, nu * d_nu


@dataclass(frozen=True)
class WeightedObservation:
    """One response value with its design rows, component, and weight.

    mean_random_row carries the value for every name in mean_random, the
    intercept included as 1.0; scale_row carries only the named scale
    covariates (the engine prepends the constant).  Weights are typically
    posterior probabilities in [0, 1] but any non-negative value is legal.
    """

    y: float
    mean_fixed_row: tuple[float, ...]
    mean_random_row: tuple[float, ...]
    scale_row: tuple[float, ...]
    weight: float
    component_index: int

    def __post_init__(self):
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(
            self, "mean_fixed_row", tuple(float(v) for v in self.mean_fixed_row)
        )
        object.__setattr__(
            self, "mean_random_row", tuple(float(v) for v in self.mean_random_row)
        )
        object.__setattr__(
            self, "scale_row", tuple(float(v) for v in self.scale_row)
        )
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "component_index", int(self.component_index))
        if not math.isfinite(self.weight) or self.weight < 0:
            raise InvalidModelError("weight must be finite and non-negative")


class ProfileBatch:
    """Flat weighted regression problem for one profile.

    Rows pair one response value with one component; the expanded design A
    stacks the fixed columns with one block of random columns per component,
    so the mean update is a single weighted least-squares solve.
    """

    def __init__(self, spec: ProfileSpec, y, Xf, Xr, Z1, comp):
        self.spec = spec
        self.y = np.asarray(y, dtype=float)
        self.Xf = np.asarray(Xf, dtype=float).reshape(len(self.y), -1)
        self.Xr = np.asarray(Xr, dtype=float).reshape(len(self.y), -1)
        self.Z1 = np.asarray(Z1, dtype=float).reshape(len(self.y), -1)
        self.comp = np.asarray(comp, dtype=int)
        self.K = spec.K
        p1, p2 = self.Xf.shape[1], self.Xr.shape[1]
        M = len(self.y)
        A = np.zeros((M, p1 + self.K * p2))
        A[:, :p1] = self.Xf
        rows = np.arange(M)
        for col in range(p2):
            A[rows, p1 + self.comp * p2 + col] = self.Xr[:, col]
        self.A = A
        self.p1 = p1
        self.p2 = p2

    @classmethod
    def from_observations(
        cls, spec: ProfileSpec, obs: Sequence[WeightedObservation]
    ) -> tuple["ProfileBatch", np.ndarray]:
        if not obs:
            raise InvalidModelError("no observations")
        y = [o.y for o in obs]
        Xf = [o.mean_fixed_row for o in obs]
        Xr = [o.mean_random_row for o in obs]
        Z1 = [(1.0,) + o.scale_row for o in obs]
        comp = [o.component_index for o in obs]
        if min(comp) < 0 or max(comp) >= spec.K:
            raise InvalidModelError("component_index out of range")
        w = np.array([o.weight for o in obs], dtype=float)
        return cls(spec, y, Xf, Xr, Z1, comp), w

    def coef_vector(self, params: ProfileParams) -> np.ndarray:
        return np.concatenate([params.lam, params.U.ravel()])

    def split_coef(self, coef: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam = coef[: self.p1]
        U = coef[self.p1 :].reshape(self.K, self.p2)
        return lam, U

    def mu(self, coef: np.ndarray) -> np.ndarray:
        return self.A @ coef

    def sigma(self, gamma: np.ndarray) -> np.ndarray:
        return np.exp(self.Z1 @ gamma)


def _weighted_loglik(batch, w, coef, gamma, nu):
    resid = batch.y - batch.mu(coef)
    eta = batch.Z1 @ gamma
    # overflow to inf (or dividing by an underflowed scale) is a
    # legitimate zero-density limit, not an error
    with np.errstate(over="ignore", divide="ignore"):
        sigma = np.exp(eta)
        r2 = (resid / sigma) ** 2
        if batch.spec.family == GAUSSIAN:
            logf = -HALF_LOG_2PI - eta - 0.5 * r2
        else:
            logf = (
                gammaln((nu + 1.0) / 2.0)
                - gammaln(nu / 2.0)
                - 0.5 * math.log(nu * math.pi)
                - eta
                - ((nu + 1.0) / 2.0) * np.log1p(r2 / nu)
            )
    if np.all(np.isfinite(logf)):
        return float(w @ logf)
    # Zero-weight rows must not turn -inf into NaN.
    return float(w @ np.where(w > 0.0, logf, 0.0))


def _halving_accept(batch, w, objective, coef, gamma, nu, new_coef, new_gamma):
    """Move toward the candidate, halving until the objective does not drop."""
    best = (coef, gamma, objective)
    step = 1.0
    for _ in range(MAX_HALVINGS + 1):
        cand_coef = coef + step * (new_coef - coef)
        cand_gamma = gamma + step * (new_gamma - gamma)
        if np.all(np.isfinite(cand_coef)) and np.all(np.isfinite(cand_gamma)):
            value = _weighted_loglik(batch, w, cand_coef, cand_gamma, nu)
            if math.isfinite(value) and value >= objective:
                return cand_coef, cand_gamma, value
        step *= 0.5
    return best


def _solve_or_gradient(matrix, rhs, current):
    """Newton direction target, falling back to a gradient move when singular."""
    try:
        solution = np.linalg.solve(matrix, rhs)
        if np.all(np.isfinite(solution)):
            return solution
    except np.linalg.LinAlgError:
        pass
    gradient = rhs - matrix @ current
    norm = float(np.linalg.norm(gradient))
    if norm == 0.0 or not math.isfinite(norm):
        return current
    return current + gradient / norm


def _mean_update(batch, w, coef, gamma, nu, objective):
    sigma = batch.sigma(gamma)
    inv_var = w / (sigma * sigma)
    if batch.spec.family == STUDENT_T:
        resid = batch.y - batch.mu(coef)
        r2 = (resid / sigma) ** 2
        inv_var = inv_var * (nu + 1.0) / (nu + r2)
    Aw = batch.A * inv_var[:, None]
    normal = Aw.T @ batch.A
    rhs = Aw.T @ batch.y
    target = _solve_or_gradient(normal, rhs, coef)
    return _halving_accept(batch, w, objective, coef, gamma, nu, target, gamma)


def _scale_update(batch, w, coef, gamma, nu, objective):
    sigma = batch.sigma(gamma)
    r = (batch.y - batch.mu(coef)) / sigma
    r2 = r * r
    if batch.spec.family == GAUSSIAN:
        u = r2 - 1.0
        curvature = 2.0
    else:
        u = (nu + 1.0) * r2 / (nu + r2) - 1.0
        curvature = 2.0 * nu / (nu + 3.0)
    score = batch.Z1.T @ (w * u)
    info = curvature * ((batch.Z1 * w[:, None]).T @ batch.Z1)
    try:
        step = np.linalg.solve(info, score)
        if not np.all(np.isfinite(step)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        norm = float(np.linalg.norm(score))
        step = score / norm if norm > 0 and math.isfinite(norm) else np.zeros_like(score)
    return _halving_accept(
        batch, w, objective, coef, gamma, nu, coef, gamma + step
    )


def _shape_update(batch, w, coef, gamma, lognu, objective):
    result = minimize_scalar(
        lambda lv: -_weighted_loglik(batch, w, coef, gamma, math.exp(lv)),
        bounds=(math.log(NU_MIN), math.log(NU_MAX)),
        method="bounded",
        options={"xatol": 1e-8},
    )
    candidate = float(np.clip(result.x, math.log(NU_MIN), math.log(NU_MAX)))
    value = _weighted_loglik(batch, w, coef, gamma, math.exp(candidate))
    if math.isfinite(value) and value > objective:
        return candidate, value
    return lognu, objective


def maximize_profile(
    batch: ProfileBatch,
    w: np.ndarray,
    current: ProfileParams,
    *,
    update_shape: bool = True,
    profile_index: int = 0,
    max_inner: int = INNER_MAX_ITER,
) -> ProfileParams:
    """One guarded ascent pass on the weighted profile log-likelihood.

    Weights are normalized to mean one internally so the stopping rule does
    not depend on their overall scale; degeneracy is judged on raw totals.
    """
    w = np.asarray(w, dtype=float)
    totals = np.bincount(batch.comp, weights=w, minlength=batch.K)
    for k, total in enumerate(totals):
        if total < DEGENERACY_TOL:
            raise DegenerateComponentError(profile_index, k, float(total))
    wn = w / w.mean()

    coef = batch.coef_vector(current)
    gamma = current.gamma.copy()
    is_t = batch.spec.family == STUDENT_T
    lognu = float(current.gamma_shape) if is_t else 0.0
    nu = math.exp(lognu) if is_t else math.nan

    objective = _weighted_loglik(batch, wn, coef, gamma, nu)
    if not math.isfinite(objective):
        raise NumericalFailureError(
            "weighted profile log-likelihood is not finite at the current point"
        )
    for _ in range(max_inner):
        previous = objective
        coef, gamma, objective = _mean_update(batch, wn, coef, gamma, nu, objective)
        coef, gamma, objective = _scale_update(batch, wn, coef, gamma, nu, objective)
        if objective - previous < INNER_TOL:
            break
    if is_t and update_shape:
        lognu, objective = _shape_update(batch, wn, coef, gamma, lognu, objective)
        nu = math.exp(lognu)
        for _ in range(2):
            previous = objective
            coef, gamma, objective = _mean_update(
                batch, wn, coef, gamma, nu, objective
            )
            coef, gamma, objective = _scale_update(
                batch, wn, coef, gamma, nu, objective
            )
            if objective - previous < INNER_TOL:
                break

    lam, U = batch.split_coef(coef)
    return ProfileParams(
        lam=lam, U=U, gamma=gamma, gamma_shape=lognu if is_t else None
    )


def weighted_profile_mstep(
    spec: ProfileSpec,
    obs: Sequence[WeightedObservation],
    current: ProfileParams,
    *,
    update_shape: bool = True,
) -> ProfileParams:
    """Update one profile's parameters from weighted observations.

    Returns parameters whose weighted log-likelihood is at least that of
    `current`; raises DegenerateComponentError when a component's total
    weight falls below the degeneracy threshold.
    """
    batch, w = ProfileBatch.from_observations(spec, obs)
    return maximize_profile(batch, w, current, update_shape=update_shape)


def weighted_profile_loglik(
    spec: ProfileSpec,
    obs: Sequence[WeightedObservation],
    params: ProfileParams,
) -> float:
    """Weighted profile log-likelihood at the given parameters (raw weights)."""
    batch, w = ProfileBatch.from_observations(spec, obs)
    nu = math.exp(params.gamma_shape) if spec.has_shape else math.nan
    return _weighted_loglik(batch, w, batch.coef_vector(params), params.gamma, nu)
