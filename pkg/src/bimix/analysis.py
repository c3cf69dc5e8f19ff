"""Model selection, clustering agreement, Monte Carlo benchmarking, shares.

Selection fits a grid of component counts and flags the AIC/BIC winners.
Benchmarking repeatedly simulates from a known truth, refits, aligns
component labels, and aggregates bias, spread, and clustering agreement.
The share inversion maps growth-regression coefficients to factor shares.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .em import EmControl, PosteriorWeights, multi_start_fit
from .model import (
    BimixError,
    InvalidModelError,
    ModelSpec,
    PanelDataset,
    ParameterSet,
    count_parameters,
)
from .simulate import ScenarioTruth, simulate_dataset

MAX_FAILURE_SHARE = 0.2
EXHAUSTIVE_ALIGN_MAX_K = 6


def information_criteria(loglik: float, d: int, n: int) -> tuple[float, float]:
    """Penalized fit measures; n is the number of units, not observations."""
    if n < 1:
        raise InvalidModelError(f"n must be >= 1, got {n}")
    if d < 0:
        raise InvalidModelError(f"d must be >= 0, got {d}")
    aic = -2.0 * loglik + 2.0 * d
    bic = -2.0 * loglik + d * math.log(n)
    return aic, bic


@dataclass(frozen=True)
class SelectionRow:
    """One grid cell: component counts, fit quality, and criteria."""

    k1: int
    k2: int
    loglik: float
    d: int
    aic: float
    bic: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class SelectionTable:
    """Grid of fits over component counts with AIC/BIC winners flagged.

    Winners are chosen among converged rows when any converged, otherwise
    among all rows with a finite criterion; best_aic/best_bic hold the
    winning (k1, k2) pairs or None when no row qualifies.
    """

    rows: tuple[SelectionRow, ...]
    n: int
    best_aic: tuple[int, int] | None = field(init=False)
    best_bic: tuple[int, int] | None = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

        def best(key):
            pool = [r for r in self.rows if r.converged and math.isfinite(key(r))]
            if not pool:
                pool = [r for r in self.rows if math.isfinite(key(r))]
            if not pool:
                return None
            winner = min(pool, key=lambda r: (key(r), r.k1, r.k2))
            return (winner.k1, winner.k2)

        object.__setattr__(self, "best_aic", best(lambda r: r.aic))
        object.__setattr__(self, "best_bic", best(lambda r: r.bic))

    def to_csv_text(self) -> str:
        lines = ["k1,k2,loglik,d,aic,bic,converged,aic_best,bic_best,error"]
        for r in self.rows:
            cell = (r.k1, r.k2)
            lines.append(
                ",".join(
                    [
                        str(r.k1),
                        str(r.k2),
                        repr(r.loglik),
                        str(r.d),
                        repr(r.aic),
                        repr(r.bic),
                        str(int(r.converged)),
                        str(int(cell == self.best_aic)),
                        str(int(cell == self.best_bic)),
                        '"' + (r.error or "").replace('"', '""') + '"',
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'K1':>3} {'K2':>3} {'loglik':>12} {'d':>4} {'AIC':>12} {'BIC':>12}  flags"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            flags = []
            if (r.k1, r.k2) == self.best_aic:
                flags.append("AIC*")
            if (r.k1, r.k2) == self.best_bic:
                flags.append("BIC*")
            if not r.converged:
                flags.append("not-converged")
            lines.append(
                f"{r.k1:>3} {r.k2:>3} {r.loglik:>12.2f} {r.d:>4} "
                f"{r.aic:>12.2f} {r.bic:>12.2f}  {' '.join(flags)}"
            )
        return "\n".join(lines) + "\n"


def _grid_cell(payload) -> SelectionRow:
    spec, data, control, k1, k2 = payload
    if spec.J == 1:
        sub = spec.with_components(k1)
    else:
        sub = spec.with_components(k1, k2)
    d = count_parameters(sub)
    try:
        fit = multi_start_fit(sub, data, control)
    except BimixError as exc:
        nan = math.nan
        return SelectionRow(k1, k2, nan, d, nan, nan, False, error=str(exc))
    return SelectionRow(
        k1, k2, fit.loglik, fit.d, fit.aic, fit.bic, fit.converged,
        error=fit.reason,
    )


def grid_select(
    spec: ModelSpec,
    data: PanelDataset,
    k1_range: Sequence[int],
    k2_range: Sequence[int] | None,
    control: EmControl,
    jobs: int = 1,
) -> SelectionTable:
    """Fit every (K1, K2) cell of the grid and tabulate the criteria.

    Per-cell failures are recorded in their row and never abort the grid;
    rows come back sorted by (K1, K2).  jobs > 1 runs cells in separate
    processes with identical results.
    """
    k1_list = sorted(set(int(k) for k in k1_range))
    if not k1_list:
        raise InvalidModelError("k1 range must be non-empty")
    if spec.J == 1:
        k2_list = [1]
        if k2_range is not None and sorted(set(k2_range)) not in ([1], []):
            raise InvalidModelError("univariate models take no k2 range")
    else:
        k2_list = sorted(set(int(k) for k in (k2_range or [])))
        if not k2_list:
            raise InvalidModelError("k2 range must be non-empty")
    if min(k1_list) < 1 or min(k2_list) < 1:
        raise InvalidModelError("component counts must be >= 1")

    payloads = [
        (spec, data, control, k1, k2)
        for k1, k2 in itertools.product(k1_list, k2_list)
    ]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_grid_cell, payloads))
    else:
        rows = [_grid_cell(p) for p in payloads]
    return SelectionTable(rows=tuple(rows), n=data.n)


def map_classify(posteriors: PosteriorWeights) -> np.ndarray:
    """Most-probable component pair per unit, ties broken lexicographically.

    Returns 0-based (k1, k2) rows; the k2 column is all zeros when the
    second dimension is absent.
    """
    n, K1, K2 = posteriors.w.shape
    flat = posteriors.w.reshape(n, K1 * K2)
    best = np.argmax(flat, axis=1)
    k1, k2 = np.divmod(best, K2)
    return np.column_stack([k1, k2])


def _as_labels(partition) -> np.ndarray:
    arr = np.asarray(partition)
    if arr.ndim == 2:
        # Joint partitions: each distinct row is one label.
        _, codes = np.unique(arr, axis=0, return_inverse=True)
        return codes
    if arr.ndim != 1:
        raise InvalidModelError("partition must be 1-D labels or 2-D label rows")
    _, codes = np.unique(arr, return_inverse=True)
    return codes


def rand_index(a, b) -> float:
    """Fraction of unit pairs on which two partitions agree.

    A pair agrees when both partitions put it together or both apart; the
    result is invariant to relabelling either partition.
    """
    la, lb = _as_labels(a), _as_labels(b)
    if len(la) != len(lb):
        raise InvalidModelError("partitions must have equal length")
    n = len(la)
    if n < 2:
        raise InvalidModelError("rand_index needs at least 2 units")
    table = np.zeros((la.max() + 1, lb.max() + 1))
    np.add.at(table, (la, lb), 1.0)

    def comb2(x):
        return float((x * (x - 1.0) / 2.0).sum())

    together_both = comb2(table)
    together_a = comb2(table.sum(axis=1))
    together_b = comb2(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    agreements = total + 2.0 * together_both - together_a - together_b
    return agreements / total


def align_components(
    estimated: ParameterSet, truth: ParameterSet
) -> tuple[np.ndarray, ...]:
    """Per-profile orderings matching estimated support rows to true rows.

    Returns one permutation per profile such that reordering the estimate
    with them minimizes the total squared distance between support points;
    exhaustive for K <= 6, assignment-solver beyond.
    """
    if estimated.J != truth.J:
        raise InvalidModelError("parameter sets have different profile counts")
    orders = []
    for p_est, p_true in zip(estimated.profiles, truth.profiles):
        if p_est.U.shape != p_true.U.shape:
            raise InvalidModelError(
                f"support shapes differ: {p_est.U.shape} vs {p_true.U.shape}"
            )
        K = p_est.U.shape[0]
        cost = ((p_est.U[:, None, :] - p_true.U[None, :, :]) ** 2).sum(axis=2)
        if K <= EXHAUSTIVE_ALIGN_MAX_K:
            best_perm = min(
                itertools.permutations(range(K)),
                key=lambda perm: sum(cost[perm[l], l] for l in range(K)),
            )
            orders.append(np.array(best_perm, dtype=int))
        else:
            rows, cols = linear_sum_assignment(cost)
            orders.append(rows[np.argsort(cols)])
    return tuple(orders)


def parameter_labels(spec: ModelSpec) -> tuple[str, ...]:
    """Stable flat names for every independent parameter of the model."""
    labels = []
    for j, p in enumerate(spec.profiles, start=1):
        for name in p.mean_fixed:
            labels.append(f"p{j}.lambda.{name}")
        for k in range(p.K):
            for name in p.mean_random:
                labels.append(f"p{j}.u{k + 1}.{name}")
        labels.append(f"p{j}.gamma.const")
        for name in p.scale_covariates:
            labels.append(f"p{j}.gamma.{name}")
        if p.has_shape:
            labels.append(f"p{j}.lognu")
    K1, K2 = spec.pi_shape()
    for k1 in range(K1):
        for k2 in range(K2):
            labels.append(f"pi.{k1 + 1}.{k2 + 1}")
    return tuple(labels)


def flatten_parameters(params: ParameterSet) -> np.ndarray:
    """Parameter values in the order produced by parameter_labels."""
    parts = []
    for p in params.profiles:
        parts.append(p.lam)
        parts.append(p.U.ravel())
        parts.append(p.gamma)
        if p.gamma_shape is not None:
            parts.append([p.gamma_shape])
    parts.append(params.pi.ravel())
    return np.concatenate([np.asarray(x, dtype=float).ravel() for x in parts])


@dataclass(frozen=True)
class BenchmarkReport:
    """Aggregated Monte Carlo results for one scenario and panel size.

    Means, biases, and standard deviations are taken across successful
    replications after component alignment; avg_rand compares true joint
    cells with the fitted most-probable cells.  valid is False when more
    than a fifth of the replications failed.
    """

    scenario: str
    n: int
    T: int
    R: int
    labels: tuple[str, ...]
    truth: np.ndarray
    mean: np.ndarray
    bias: np.ndarray
    std: np.ndarray
    avg_rand: float
    n_failed: int
    failures: tuple[str, ...]
    valid: bool

    def __post_init__(self):
        for name in ("truth", "mean", "bias", "std"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "failures", tuple(self.failures))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "T": self.T,
            "R": self.R,
            "labels": list(self.labels),
            "truth": self.truth.tolist(),
            "mean": self.mean.tolist(),
            "bias": self.bias.tolist(),
            "std": self.std.tolist(),
            "avg_rand": self.avg_rand,
            "n_failed": self.n_failed,
            "failures": list(self.failures),
            "valid": self.valid,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BenchmarkReport":
        nan = math.nan

        def clean(xs):
            return np.array([nan if v is None else v for v in xs], dtype=float)

        return cls(
            scenario=doc["scenario"],
            n=int(doc["n"]),
            T=int(doc["T"]),
            R=int(doc["R"]),
            labels=tuple(doc["labels"]),
            truth=clean(doc["truth"]),
            mean=clean(doc["mean"]),
            bias=clean(doc["bias"]),
            std=clean(doc["std"]),
            avg_rand=nan if doc["avg_rand"] is None else float(doc["avg_rand"]),
            n_failed=int(doc["n_failed"]),
            failures=tuple(doc.get("failures", ())),
            valid=bool(doc["valid"]),
        )

    def to_csv_text(self) -> str:
        lines = ["parameter,truth,mean,bias,std"]
        for lbl, t, m, b, s in zip(
            self.labels, self.truth, self.mean, self.bias, self.std
        ):
            lines.append(f"{lbl},{t!r},{m!r},{b!r},{s!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(len(lbl) for lbl in self.labels)
        header = (
            f"{'parameter':<{width}} {'truth':>9} {'mean':>9} "
            f"{'bias':>9} {'std':>9}"
        )
        lines = [
            f"scenario {self.scenario}: n={self.n}, T={self.T}, "
            f"R={self.R}, failed={self.n_failed}"
            + ("" if self.valid else "  [INVALID: too many failures]"),
            header,
            "-" * len(header),
        ]
        for lbl, t, m, b, s in zip(
            self.labels, self.truth, self.mean, self.bias, self.std
        ):
            lines.append(
                f"{lbl:<{width}} {t:>9.3f} {m:>9.3f} {b:>9.3f} {s:>9.3f}"
            )
        lines.append(f"average Rand index = {self.avg_rand:.3f}")
        return "\n".join(lines) + "\n"


def _replication_seeds(seed: int, r: int) -> tuple[int, int]:
    state = np.random.SeedSequence((seed, r)).generate_state(2)
    return int(state[0]), int(state[1])


def _benchmark_rep(payload) -> dict:
    st, n, T, control, r = payload
    sim_seed, fit_seed = _replication_seeds(control.seed, r)
    data, labels = simulate_dataset(st, n, T, sim_seed)
    try:
        fit = multi_start_fit(st.spec, data, replace(control, seed=fit_seed))
    except BimixError as exc:
        return {"r": r, "error": str(exc)}
    if fit.posteriors is None or not math.isfinite(fit.loglik):
        return {"r": r, "error": fit.reason or "fit produced no posteriors"}
    orders = align_components(fit.params, st.truth)
    aligned = fit.params.reordered(orders)
    estimates = flatten_parameters(aligned)
    rand = rand_index(labels, fit.assignments)
    return {"r": r, "estimates": estimates, "rand": rand}


def benchmark_scenario(
    st: ScenarioTruth,
    n: int,
    T: int,
    R: int,
    control: EmControl,
    jobs: int = 1,
) -> BenchmarkReport:
    """Simulate-and-refit R times and aggregate bias, spread, and agreement.

    Each replication derives its simulation and fitting seeds from
    (control.seed, r), so results do not depend on worker count or
    replication order.  Failed replications are excluded and counted.
    """
    if R < 2:
        raise InvalidModelError("R must be >= 2")
    payloads = [(st, n, T, control, r) for r in range(R)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_benchmark_rep, payloads))
    else:
        outcomes = [_benchmark_rep(p) for p in payloads]
    outcomes.sort(key=lambda o: o["r"])

    truth_vec = flatten_parameters(st.truth)
    labels = parameter_labels(st.spec)
    estimates = [o["estimates"] for o in outcomes if "estimates" in o]
    rands = [o["rand"] for o in outcomes if "estimates" in o]
    failures = tuple(f"replication {o['r']}: {o['error']}" for o in outcomes if "error" in o)
    n_failed = len(failures)
    if estimates:
        mat = np.vstack(estimates)
        mean = mat.mean(axis=0)
        std = mat.std(axis=0, ddof=1) if len(estimates) > 1 else np.full(mat.shape[1], math.nan)
        avg_rand = float(np.mean(rands))
    else:
        mean = np.full(truth_vec.shape, math.nan)
        std = np.full(truth_vec.shape, math.nan)
        avg_rand = math.nan
    return BenchmarkReport(
        scenario=st.name,
        n=n,
        T=T,
        R=R,
        labels=labels,
        truth=truth_vec,
        mean=mean,
        bias=mean - truth_vec,
        std=std,
        avg_rand=avg_rand,
        n_failed=n_failed,
        failures=failures,
        valid=(n_failed / R) <= MAX_FAILURE_SHARE,
    )


@dataclass(frozen=True)
class SolowShares:
    """Physical- and human-capital output shares recovered from coefficients."""

    alpha: float
    beta: float

    def implied_coefficients(self) -> tuple[float, float]:
        """Forward map back to the regression coefficients on log rates."""
        rest = 1.0 - self.alpha - self.beta
        return self.alpha / rest, self.beta / rest


def recover_solow_shares(lambda_sk: float, lambda_sh: float) -> SolowShares:
    """Invert the growth-regression coefficients into factor shares.

    With s = 1 / (1 + lambda_sk + lambda_sh), alpha = lambda_sk * s and
    beta = lambda_sh * s; substituting the shares back reproduces the
    coefficients to floating-point accuracy.
    """
    if not (lambda_sk >= 0):
        raise InvalidModelError(f"lambda_sk must be >= 0, got {lambda_sk!r}")
    if not (lambda_sh >= 0):
        raise InvalidModelError(f"lambda_sh must be >= 0, got {lambda_sh!r}")
    if not (1.0 + lambda_sk + lambda_sh > 0):
        raise InvalidModelError(
            f"1 + lambda_sk + lambda_sh must be > 0, got {1.0 + lambda_sk + lambda_sh!r}"
        )
    s = 1.0 / (1.0 + lambda_sk + lambda_sh)
    return SolowShares(alpha=lambda_sk * s, beta=lambda_sh * s)
