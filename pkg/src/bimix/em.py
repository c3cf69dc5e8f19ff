"""EM estimation: E-step, M-step, convergence control, multi-start, errors.

The estimator alternates posterior computation with a closed-form update of
the joint mixing probabilities and one guarded ascent pass per profile.
Multi-start runs several random initializations for a burn-in, keeps the
best, and continues it to convergence.  Standard errors come from the
numerically differentiated observed information over a free (simplex-free)
parameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .densities import (
    HALF_LOG_2PI,
    ProfileBatch,
    WeightedObservation,
    maximize_profile,
    weighted_profile_mstep,
)
from .model import (
    GAUSSIAN,
    INTERCEPT_NAME,
    BimixError,
    DegenerateComponentError,
    FitResult,
    InvalidModelError,
    ModelSpec,
    MultiStartError,
    NumericalFailureError,
    PanelDataset,
    ParameterSet,
    ProfileParams,
    StandardErrors,
    count_parameters,
    validate,
)

POSTERIOR_TOL = 1e-10
PI_PIN_TOL = 1e-10
MAX_RETRIES = 3


@dataclass(frozen=True)
class PosteriorWeights:
    """Per-unit posterior component-pair probabilities with marginals."""

    w: np.ndarray
    w1: np.ndarray = field(init=False)
    w2: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 3:
            raise InvalidModelError(f"posteriors must be n x K1 x K2, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidModelError("posteriors must be finite")
        if np.any(w < 0):
            raise InvalidModelError("posteriors must be non-negative")
        sums = w.sum(axis=(1, 2))
        if np.any(np.abs(sums - 1.0) > POSTERIOR_TOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise InvalidModelError(
                f"posterior slice of unit index {worst} sums to {sums[worst]!r}"
            )
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        w1 = w.sum(axis=2)
        w2 = w.sum(axis=1)
        w1.flags.writeable = False
        w2.flags.writeable = False
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def marginal(self, j: int) -> np.ndarray:
        return self.w1 if j == 0 else self.w2


@dataclass(frozen=True)
class EmControl:
    """Iteration, tolerance, and multi-start settings."""

    max_iterations: int = 500
    rel_tol: float = 1e-8
    n_starts: int = 20
    burn_in_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidModelError("max_iterations must be >= 1")
        if self.rel_tol <= 0:
            raise InvalidModelError("rel_tol must be > 0")
        if self.n_starts < 1:
            raise InvalidModelError("n_starts must be >= 1")
        if self.burn_in_iterations < 1:
            raise InvalidModelError("burn_in_iterations must be >= 1")
        if self.seed < 0:
            raise InvalidModelError("seed must be >= 0")


class ProfileDesign:
    """Design matrices of one profile, plus the flat M-step problem."""

    def __init__(self, spec_j, data: PanelDataset, j: int):
        rows = [obs for unit in data.units for obs in unit.observations]
        N = len(rows)
        self.spec = spec_j
        self.y = np.array([r.y[j] for r in rows], dtype=float)

        def column(name):
            if name == INTERCEPT_NAME:
                return np.ones(N)
            return np.array([r.covariates[name] for r in rows], dtype=float)

        self.Xf = (
            np.column_stack([column(n) for n in spec_j.mean_fixed])
            if spec_j.mean_fixed
            else np.empty((N, 0))
        )
        self.Xr = np.column_stack([column(n) for n in spec_j.mean_random])
        self.Z1 = np.column_stack(
            [np.ones(N)] + [column(n) for n in spec_j.scale_covariates]
        )
        K = spec_j.K
        self.batch = ProfileBatch(
            spec_j,
            np.tile(self.y, K),
            np.tile(self.Xf, (K, 1)),
            np.tile(self.Xr, (K, 1)),
            np.tile(self.Z1, (K, 1)),
            np.repeat(np.arange(K), N),
        )

    def component_logliks(self, params: ProfileParams) -> np.ndarray:
        """Per-row log-density under each component, shape (N, K)."""
        mu = self.Xr @ params.U.T
        if self.Xf.shape[1]:
            mu = mu + (self.Xf @ params.lam)[:, None]
        eta = self.Z1 @ params.gamma
        # overflow to inf (or dividing by an underflowed scale) is a
        # legitimate zero-density limit, not an error
        with np.errstate(over="ignore", divide="ignore"):
            r2 = ((self.y[:, None] - mu) / np.exp(eta)[:, None]) ** 2
            if self.spec.family == GAUSSIAN:
                return -HALF_LOG_2PI - eta[:, None] - 0.5 * r2
            nu = math.exp(params.gamma_shape)
            return (
                gammaln((nu + 1.0) / 2.0)
                - gammaln(nu / 2.0)
                - 0.5 * math.log(nu * math.pi)
                - eta[:, None]
                - ((nu + 1.0) / 2.0) * np.log1p(r2 / nu)
            )


class ModelDesign:
    """Precomputed arrays for one (model, dataset) pair."""

    def __init__(self, spec: ModelSpec, data: PanelDataset):
        self.spec = spec
        self.n = data.n
        self.unit_ids = data.unit_ids
        counts = np.array([len(u.observations) for u in data.units])
        self.unit_starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.unit_index = np.repeat(np.arange(data.n), counts)
        self.profiles = [
            ProfileDesign(spec_j, data, j)
            for j, spec_j in enumerate(spec.profiles)
        ]

    @classmethod
    def from_data(cls, spec: ModelSpec, data: PanelDataset) -> "ModelDesign":
        return cls(spec, data)

    def unit_logliks(self, j: int, params_j: ProfileParams) -> np.ndarray:
        """Per-unit log-likelihood under each component of profile j, (n, K_j)."""
        rowwise = self.profiles[j].component_logliks(params_j)
        return np.add.reduceat(rowwise, self.unit_starts, axis=0)


def _component_logliks(design: ModelDesign, params: ParameterSet) -> np.ndarray:
    ull = [design.unit_logliks(j, p) for j, p in enumerate(params.profiles)]
    if len(ull) == 1:
        comp = ull[0][:, :, None]
    else:
        comp = ull[0][:, :, None] + ull[1][:, None, :]
    bad = np.isnan(comp) | np.isposinf(comp)
    if bad.any():
        i, k1, k2 = np.argwhere(bad)[0]
        raise NumericalFailureError(
            f"component log-likelihood is non-finite for unit "
            f"{design.unit_ids[i]!r} at components ({k1 + 1}, {k2 + 1})"
        )
    return comp


def component_logliks(
    spec: ModelSpec, data: PanelDataset, params: ParameterSet
) -> np.ndarray:
    """Per-unit, per-component-pair log-likelihood array, shape (n, K1, K2)."""
    return _component_logliks(ModelDesign.from_data(spec, data), params)


def _unit_logsumexp(comp_ll: np.ndarray, pi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    per_unit = logsumexp(log_pi[None, :, :] + comp_ll, axis=(1, 2))
    if np.any(np.isneginf(per_unit)):
        i = int(np.argmax(np.isneginf(per_unit)))
        raise NumericalFailureError(
            f"all components have zero likelihood for unit index {i}"
        )
    return per_unit


def observed_loglik(comp_ll: np.ndarray, pi: np.ndarray) -> float:
    """Observed-data log-likelihood; zero-probability cells are excluded."""
    comp_ll = np.asarray(comp_ll, dtype=float)
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    return float(_unit_logsumexp(comp_ll, pi).sum())


def e_step(comp_ll: np.ndarray, pi: np.ndarray) -> PosteriorWeights:
    """Posterior component-pair probabilities per unit, normalized in log space."""
    comp_ll = np.asarray(comp_ll, dtype=float)
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    per_unit = _unit_logsumexp(comp_ll, pi)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    w = np.exp(log_pi[None, :, :] + comp_ll - per_unit[:, None, None])
    return PosteriorWeights(w)


def _posteriors_and_loglik(
    comp_ll: np.ndarray, pi: np.ndarray
) -> tuple[PosteriorWeights, float]:
    per_unit = _unit_logsumexp(comp_ll, pi)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    w = np.exp(log_pi[None, :, :] + comp_ll - per_unit[:, None, None])
    return PosteriorWeights(w), float(per_unit.sum())


def m_step_pi(posteriors: PosteriorWeights) -> np.ndarray:
    """Closed-form update of the joint mixing probabilities."""
    pi = posteriors.w.mean(axis=0)
    return pi / pi.sum()


def _update_profiles(
    design: ModelDesign, posteriors: PosteriorWeights, params: ParameterSet
) -> tuple[ProfileParams, ...]:
    updated = []
    for j, profile in enumerate(design.profiles):
        marginal = posteriors.marginal(j)
        w_flat = marginal[design.unit_index].T.ravel()
        updated.append(
            maximize_profile(
                profile.batch, w_flat, params.profiles[j], profile_index=j
            )
        )
    return tuple(updated)


def m_step_regression(
    spec: ModelSpec,
    data: PanelDataset,
    posteriors: PosteriorWeights,
    params: ParameterSet,
) -> tuple[ProfileParams, ...]:
    """Update every profile's coefficients from marginal posterior weights.

    Builds one weighted observation per (data row, component) pair with the
    unit's marginal posterior as weight, then runs the guarded profile
    maximizer.  Returns the updated per-profile parameters.
    """
    rows = [
        (i, obs) for i, unit in enumerate(data.units) for obs in unit.observations
    ]
    updated = []
    for j, spec_j in enumerate(spec.profiles):
        marginal = posteriors.marginal(j)
        obs_list = []
        for k in range(spec_j.K):
            for i, obs in rows:
                obs_list.append(
                    WeightedObservation(
                        y=obs.y[j],
                        mean_fixed_row=tuple(
                            obs.covariates[n] for n in spec_j.mean_fixed
                        ),
                        mean_random_row=tuple(
                            1.0 if n == INTERCEPT_NAME else obs.covariates[n]
                            for n in spec_j.mean_random
                        ),
                        scale_row=tuple(
                            obs.covariates[n] for n in spec_j.scale_covariates
                        ),
                        weight=marginal[i, k],
                        component_index=k,
                    )
                )
        updated.append(weighted_profile_mstep(spec_j, obs_list, params.profiles[j]))
    return tuple(updated)


@dataclass
class EmState:
    """Internal loop outcome: last parameters, trace, and failure reason."""

    params: ParameterSet
    trace: list[float]
    converged: bool
    error: str | None = None

    @property
    def n_iterations(self) -> int:
        return max(len(self.trace) - 1, 0)


def _em_loop(
    design: ModelDesign,
    params: ParameterSet,
    max_iter: int,
    rel_tol: float,
    prior_trace: Sequence[float] | None = None,
) -> EmState:
    trace = list(prior_trace) if prior_trace else []
    try:
        comp_ll = _component_logliks(design, params)
        posteriors, ll = _posteriors_and_loglik(comp_ll, params.pi)
        if not trace:
            trace.append(ll)
    except (DegenerateComponentError, NumericalFailureError) as exc:
        return EmState(params, trace, converged=False, error=str(exc))
    for _ in range(max_iter):
        try:
            new_pi = m_step_pi(posteriors)
            new_profiles = _update_profiles(design, posteriors, params)
            candidate = ParameterSet(new_profiles, new_pi)
            comp_ll = _component_logliks(design, candidate)
            posteriors, new_ll = _posteriors_and_loglik(comp_ll, candidate.pi)
        except (DegenerateComponentError, NumericalFailureError) as exc:
            return EmState(params, trace, converged=False, error=str(exc))
        params = candidate
        trace.append(new_ll)
        if abs(new_ll - ll) / (1.0 + abs(ll)) < rel_tol:
            return EmState(params, trace, converged=True)
        ll = new_ll
    return EmState(params, trace, converged=False)


def _pooled_params(design: ModelDesign) -> tuple[ProfileParams, ...]:
    """Single-component fit of every profile with unit weights."""
    pooled = []
    for j, profile in enumerate(design.profiles):
        spec1 = replace(profile.spec, K=1)
        N = len(profile.y)
        batch = ProfileBatch(
            spec1, profile.y, profile.Xf, profile.Xr, profile.Z1, np.zeros(N, int)
        )
        sd = float(profile.y.std())
        start = ProfileParams(
            lam=np.zeros(spec1.p_fixed),
            U=np.full((1, spec1.p_random), 0.0),
            gamma=np.concatenate(
                [[math.log(max(sd, 1e-8))], np.zeros(len(spec1.scale_covariates))]
            ),
            gamma_shape=math.log(10.0) if spec1.has_shape else None,
        )
        try:
            intercept_col = spec1.mean_random.index(INTERCEPT_NAME)
        except ValueError:
            intercept_col = 0
        U0 = np.zeros((1, spec1.p_random))
        U0[0, intercept_col] = float(profile.y.mean())
        start = replace(start, U=U0)
        ones = np.ones(N)
        params = start
        for _ in range(3):
            params = maximize_profile(batch, ones, params, profile_index=j)
        pooled.append(params)
    return tuple(pooled)


def random_initialization(
    spec: ModelSpec,
    data: PanelDataset,
    rng: np.random.Generator,
    design: ModelDesign | None = None,
    pooled: tuple[ProfileParams, ...] | None = None,
) -> ParameterSet:
    """Pooled single-component fit with jittered intercepts, uniform pi.

    The jitter offset per component is half the 10-90 percentile spread of
    the response times Uniform(-1, 1), applied to the intercept column.
    """
    if design is None:
        design = ModelDesign.from_data(spec, data)
    if pooled is None:
        pooled = _pooled_params(design)
    profiles = []
    for j, spec_j in enumerate(spec.profiles):
        base = pooled[j]
        q10, q90 = np.quantile(design.profiles[j].y, [0.10, 0.90])
        spread = (q90 - q10) / 2.0
        try:
            intercept_col = spec_j.mean_random.index(INTERCEPT_NAME)
        except ValueError:
            intercept_col = 0
        U = np.repeat(base.U, spec_j.K, axis=0)
        U[:, intercept_col] += spread * rng.uniform(-1.0, 1.0, size=spec_j.K)
        profiles.append(replace(base, U=U))
    pi = np.full(spec.pi_shape(), 1.0 / spec.n_components)
    return ParameterSet(tuple(profiles), pi)


def _map_cells(posteriors: PosteriorWeights, J: int) -> np.ndarray:
    n, K1, K2 = posteriors.w.shape
    flat = posteriors.w.reshape(n, K1 * K2)
    best = np.argmax(flat, axis=1)
    k1, k2 = np.divmod(best, K2)
    if J == 1:
        return k1[:, None]
    return np.column_stack([k1, k2])


def _finalize(
    design: ModelDesign, state: EmState, compute_se: bool = False
) -> FitResult:
    spec = design.spec
    d = count_parameters(spec)
    n = design.n
    loglik = state.trace[-1] if state.trace else math.nan
    reason = state.error
    converged = state.converged and state.error is None
    trace_arr = np.asarray(state.trace, dtype=float)
    if trace_arr.size > 1 and np.any(np.diff(trace_arr) < -1e-8):
        converged = False
        reason = reason or "log-likelihood decreased beyond tolerance"

    orders = state.params.canonical_orderings()
    params = state.params.reordered(orders)
    posteriors = None
    assignments = None
    try:
        comp_ll = _component_logliks(design, params)
        posteriors, _ = _posteriors_and_loglik(comp_ll, params.pi)
        assignments = _map_cells(posteriors, spec.J)
    except (DegenerateComponentError, NumericalFailureError) as exc:
        reason = reason or str(exc)
        converged = False

    ses = None
    if compute_se and posteriors is not None:
        try:
            ses = _standard_errors(design, params)
        except (NumericalFailureError, np.linalg.LinAlgError):
            ses = None
    return FitResult(
        params=params,
        loglik=loglik,
        loglik_trace=trace_arr if trace_arr.size else np.array([math.nan]),
        converged=converged,
        n_iterations=state.n_iterations,
        d=d,
        aic=-2.0 * loglik + 2.0 * d,
        bic=-2.0 * loglik + d * math.log(n),
        posteriors=posteriors,
        assignments=assignments,
        unit_ids=design.unit_ids,
        standard_errors=ses,
        reason=reason,
    )


def _check_inputs(spec: ModelSpec, data: PanelDataset) -> None:
    problems = validate(spec, data)
    if problems:
        raise InvalidModelError("; ".join(problems))


def em_fit(
    spec: ModelSpec,
    data: PanelDataset,
    init: ParameterSet,
    control: EmControl,
    compute_se: bool = False,
) -> FitResult:
    """Run the estimator from one initialization until convergence.

    On a degenerate component or numerical failure the fit restarts from a
    fresh random initialization up to three times; a persistent failure is
    surfaced in the result with converged=False and a reason.
    """
    _check_inputs(spec, data)
    bad = init.shape_violations(spec)
    if bad:
        raise InvalidModelError("; ".join(bad))
    design = ModelDesign.from_data(spec, data)
    state = _em_loop(design, init, control.max_iterations, control.rel_tol)
    retries = 0
    while state.error is not None and retries < MAX_RETRIES:
        retries += 1
        rng = np.random.default_rng([control.seed, retries])
        try:
            fresh = random_initialization(spec, data, rng, design=design)
        except BimixError:
            # no usable restart point; keep the original failure state
            break
        state = _em_loop(design, fresh, control.max_iterations, control.rel_tol)
    return _finalize(design, state, compute_se=compute_se)


def multi_start_fit(
    spec: ModelSpec,
    data: PanelDataset,
    control: EmControl,
    compute_se: bool = False,
) -> FitResult:
    """Burn in several random starts, continue the best until convergence.

    Deterministic given control.seed; ties on the burn-in log-likelihood are
    broken by start index.  Raises MultiStartError when every start fails.
    """
    _check_inputs(spec, data)
    design = ModelDesign.from_data(spec, data)
    pooled = _pooled_params(design)
    rng = np.random.default_rng(control.seed)
    candidates: list[EmState] = []
    for _ in range(control.n_starts):
        init = random_initialization(spec, data, rng, design=design, pooled=pooled)
        candidates.append(
            _em_loop(design, init, control.burn_in_iterations, control.rel_tol)
        )

    def burn_ll(s: EmState) -> float:
        if s.error is not None or not s.trace:
            return -math.inf
        return s.trace[-1]

    order = sorted(
        range(len(candidates)), key=lambda s: (-burn_ll(candidates[s]), s)
    )
    reasons = []
    for idx in order:
        cand = candidates[idx]
        if cand.error is not None or not cand.trace:
            reasons.append(f"start {idx}: {cand.error or 'no iterations completed'}")
            continue
        if cand.converged:
            return _finalize(design, cand, compute_se=compute_se)
        remaining = max(control.max_iterations - cand.n_iterations, 1)
        cont = _em_loop(
            design, cand.params, remaining, control.rel_tol, prior_trace=cand.trace
        )
        if cont.error is None:
            return _finalize(design, cont, compute_se=compute_se)
        reasons.append(f"start {idx}: {cont.error}")
    raise MultiStartError(reasons)


class _FreeParameterization:
    """Pack and unpack the free parameter vector used for standard errors.

    Joint probabilities enter through log-ratios against the largest cell;
    cells at or below the pinning tolerance are held fixed and receive no
    free parameter.
    """

    def __init__(self, spec: ModelSpec, params: ParameterSet):
        self.spec = spec
        flat_pi = params.pi.ravel()
        self.pi_shape = params.pi.shape
        self.pinned = flat_pi <= PI_PIN_TOL
        self.pinned_values = np.where(self.pinned, flat_pi, 0.0)
        self.active = np.flatnonzero(~self.pinned)
        ref_pos = int(np.argmax(flat_pi[self.active]))
        self.ref = int(self.active[ref_pos])
        self.free_cells = np.array(
            [c for c in self.active if c != self.ref], dtype=int
        )
        self.blocks = []
        offset = 0
        for spec_j in spec.profiles:
            sizes = {
                "lam": spec_j.p_fixed,
                "U": spec_j.K * spec_j.p_random,
                "gamma": spec_j.n_scale_coeffs,
                "shape": 1 if spec_j.has_shape else 0,
            }
            block = {}
            for key, size in sizes.items():
                block[key] = slice(offset, offset + size)
                offset += size
            self.blocks.append(block)
        self.pi_slice = slice(offset, offset + len(self.free_cells))
        self.size = offset + len(self.free_cells)

    def pack(self, params: ParameterSet) -> np.ndarray:
        theta = np.empty(self.size)
        for block, p in zip(self.blocks, params.profiles):
            theta[block["lam"]] = p.lam
            theta[block["U"]] = p.U.ravel()
            theta[block["gamma"]] = p.gamma
            if block["shape"].stop > block["shape"].start:
                theta[block["shape"]] = p.gamma_shape
        flat_pi = params.pi.ravel()
        theta[self.pi_slice] = np.log(flat_pi[self.free_cells] / flat_pi[self.ref])
        return theta

    def unpack(self, theta: np.ndarray) -> ParameterSet:
        profiles = []
        for block, spec_j in zip(self.blocks, self.spec.profiles):
            shape_slice = block["shape"]
            profiles.append(
                ProfileParams(
                    lam=theta[block["lam"]],
                    U=theta[block["U"]].reshape(spec_j.K, spec_j.p_random),
                    gamma=theta[block["gamma"]],
                    gamma_shape=float(theta[shape_slice][0])
                    if shape_slice.stop > shape_slice.start
                    else None,
                )
            )
        logits = np.zeros(len(self.active))
        order = {c: i for i, c in enumerate(self.active)}
        for a, cell in zip(theta[self.pi_slice], self.free_cells):
            logits[order[cell]] = a
        soft = np.exp(logits - logsumexp(logits))
        scale = 1.0 - float(self.pinned_values.sum())
        flat_pi = self.pinned_values.copy()
        flat_pi[self.active] = scale * soft
        return ParameterSet(tuple(profiles), flat_pi.reshape(self.pi_shape))


def _covariance_from_information(
    info: np.ndarray, noise_floor: float = 0.0
) -> tuple[np.ndarray, bool]:
    """Invert the information, NaN-ing directions without curvature."""
    info = 0.5 * (info + info.T)
    eigvals, eigvecs = np.linalg.eigh(info)
    tol = max(max(float(eigvals.max()), 0.0) * 1e-10, noise_floor)
    bad = eigvals <= tol
    ill = bool(bad.any())
    D = info.shape[0]
    cov = np.zeros((D, D))
    good = ~bad
    if good.any():
        V = eigvecs[:, good]
        cov = (V / eigvals[good]) @ V.T
    bad_load = (eigvecs[:, bad] ** 2).sum(axis=1) if ill else np.zeros(D)
    affected = bad_load > 1e-8
    cov[affected, :] = math.nan
    cov[:, affected] = math.nan
    return cov, ill


def _standard_errors(design: ModelDesign, params: ParameterSet) -> StandardErrors:
    spec = design.spec
    packer = _FreeParameterization(spec, params)
    theta0 = packer.pack(params)
    D = packer.size

    def objective(theta: np.ndarray) -> float:
        try:
            ps = packer.unpack(theta)
            return observed_loglik(_component_logliks(design, ps), ps.pi)
        except (NumericalFailureError, InvalidModelError):
            return math.nan

    h = 1e-5 * (1.0 + np.abs(theta0))
    H = np.empty((D, D))
    f0 = objective(theta0)
    for a in range(D):
        ea = np.zeros(D)
        ea[a] = h[a]
        H[a, a] = (objective(theta0 + ea) - 2.0 * f0 + objective(theta0 - ea)) / (
            h[a] * h[a]
        )
        for b in range(a + 1, D):
            eb = np.zeros(D)
            eb[b] = h[b]
            H[a, b] = H[b, a] = (
                objective(theta0 + ea + eb)
                - objective(theta0 + ea - eb)
                - objective(theta0 - ea + eb)
                + objective(theta0 - ea - eb)
            ) / (4.0 * h[a] * h[b])

    if not np.all(np.isfinite(H)):
        cov = np.full((D, D), math.nan)
        ill = True
    else:
        # eigenvalues below the rounding error of the central differences
        # are indistinguishable from zero curvature
        h_min = float(h.min())
        noise = 10.0 * np.finfo(float).eps * (1.0 + abs(f0)) / (h_min * h_min)
        cov, ill = _covariance_from_information(-H, noise_floor=noise)

    with np.errstate(invalid="ignore"):
        se_theta = np.sqrt(np.diag(cov))

    se_profiles = []
    for block, spec_j in zip(packer.blocks, spec.profiles):
        shape_slice = block["shape"]
        se_profiles.append(
            ProfileParams(
                lam=se_theta[block["lam"]],
                U=se_theta[block["U"]].reshape(spec_j.K, spec_j.p_random),
                gamma=se_theta[block["gamma"]],
                gamma_shape=float(se_theta[shape_slice][0])
                if shape_slice.stop > shape_slice.start
                else None,
            )
        )

    # Delta method for the probabilities themselves.
    flat_pi = params.pi.ravel()
    se_pi = np.full(flat_pi.shape, math.nan)
    n_free = len(packer.free_cells)
    if n_free == 0:
        se_pi[packer.active] = 0.0
    else:
        cov_pi = cov[packer.pi_slice, packer.pi_slice]
        if np.all(np.isfinite(cov_pi)):
            scale = 1.0 - float(packer.pinned_values.sum())
            soft = flat_pi[packer.active] / scale
            free_pos = [
                int(np.flatnonzero(packer.active == c)[0])
                for c in packer.free_cells
            ]
            # Rows: active cells; columns: free logits.
            J = np.empty((len(packer.active), n_free))
            for col, fpos in enumerate(free_pos):
                for rowi in range(len(packer.active)):
                    kron = 1.0 if rowi == fpos else 0.0
                    J[rowi, col] = scale * soft[rowi] * (kron - soft[fpos])
            var = np.einsum("if,fg,ig->i", J, cov_pi, J)
            with np.errstate(invalid="ignore"):
                se_pi[packer.active] = np.sqrt(np.maximum(var, 0.0))
    return StandardErrors(
        profiles=tuple(se_profiles),
        pi=se_pi.reshape(params.pi.shape),
        ill_conditioned=ill,
    )


def standard_errors(
    spec: ModelSpec, data: PanelDataset, params: ParameterSet
) -> StandardErrors:
    """Observed-information standard errors at (assumed) maximizing parameters.

    The information is the negated central-difference Hessian of the
    observed log-likelihood over the free parameterization; directions
    without curvature yield NaN entries and set ill_conditioned.
    """
    _check_inputs(spec, data)
    bad = params.shape_violations(spec)
    if bad:
        raise InvalidModelError("; ".join(bad))
    return _standard_errors(ModelDesign.from_data(spec, data), params)
