"""Extended-precision brute-force likelihood oracles used by several tests.

Everything here recomputes the mixture likelihood from first principles with
mpmath at 50 significant digits: per-observation densities, naive per-term
products across time and profiles, and plain sums over mixture cells.  No
log-sum-exp, no shortcuts, so agreement with the fast implementation is
meaningful.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def mp_log_gaussian(y, mu, sigma):
    z = (mp.mpf(y) - mp.mpf(mu)) / mp.mpf(sigma)
    return -mp.log(2 * mp.pi) / 2 - mp.log(mp.mpf(sigma)) - z * z / 2


def mp_log_t(y, mu, sigma, nu):
    nu = mp.mpf(nu)
    z = (mp.mpf(y) - mp.mpf(mu)) / mp.mpf(sigma)
    return (
        mp.loggamma((nu + 1) / 2)
        - mp.loggamma(nu / 2)
        - mp.log(nu * mp.pi) / 2
        - mp.log(mp.mpf(sigma))
        - (nu + 1) / 2 * mp.log(1 + z * z / nu)
    )


def mp_unit_cell_loglik(spec, params, unit, j, k):
    """Sum over the unit's observations of log f(y_itj | component k)."""
    profile = spec.profiles[j]
    pp = params.profiles[j]
    total = mp.mpf(0)
    for obs in unit.observations:
        y = obs.y[j]
        mu = mp.mpf(0)
        for name, coef in zip(profile.mean_fixed, pp.lam):
            mu += mp.mpf(obs.covariates[name]) * mp.mpf(coef)
        for col, name in enumerate(profile.mean_random):
            value = 1.0 if name == "intercept" else obs.covariates[name]
            mu += mp.mpf(value) * mp.mpf(pp.U[k, col])
        eta = mp.mpf(pp.gamma[0])
        for name, coef in zip(profile.scale_covariates, pp.gamma[1:]):
            eta += mp.mpf(obs.covariates[name]) * mp.mpf(coef)
        sigma = mp.e**eta
        if profile.family == "student_t":
            nu = mp.e ** mp.mpf(pp.gamma_shape)
            total += mp_log_t(y, mu, sigma, nu)
        else:
            total += mp_log_gaussian(y, mu, sigma)
    return total


def mp_cell_logliks(spec, params, data):
    """n x K1 x K2 array (object dtype) of per-unit per-cell log-likelihoods."""
    K1, K2 = params.pi.shape
    out = np.empty((data.n, K1, K2), dtype=object)
    for i, unit in enumerate(data.units):
        for k1 in range(K1):
            ll1 = mp_unit_cell_loglik(spec, params, unit, 0, k1)
            for k2 in range(K2):
                ll = ll1
                if spec.J == 2:
                    ll = ll + mp_unit_cell_loglik(spec, params, unit, 1, k2)
                out[i, k1, k2] = ll
    return out


def mp_mixture(spec, params, data):
    """(loglik, posteriors) by naive products and plain sums in mpmath."""
    cell = mp_cell_logliks(spec, params, data)
    n, K1, K2 = cell.shape
    posteriors = np.empty((n, K1, K2), dtype=float)
    total = mp.mpf(0)
    for i in range(n):
        terms = np.empty((K1, K2), dtype=object)
        denom = mp.mpf(0)
        for k1 in range(K1):
            for k2 in range(K2):
                term = mp.mpf(float(params.pi[k1, k2])) * mp.e ** cell[i, k1, k2]
                terms[k1, k2] = term
                denom += term
        total += mp.log(denom)
        for k1 in range(K1):
            for k2 in range(K2):
                posteriors[i, k1, k2] = float(terms[k1, k2] / denom)
    return float(total), posteriors
