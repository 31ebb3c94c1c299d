"""Estimators and checks used by the experiments.

Mass fits for exponentially decaying correlations, Gaussianity checks,
sphere-cap tests and autocorrelation diagnostics for Markov chain output.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import special, stats

from .errors import InvalidParameterError


@dataclass(frozen=True)
class FitResult:
    mass: float
    log_amplitude: float
    mass_err: float
    log_amplitude_err: float
    residual_norm: float

    def as_dict(self) -> dict:
        return asdict(self)


def exp_mass_fit(r, y, power_correction: float = 0.0) -> FitResult:
    """Fit ``log y + c log r = log A - m r`` by least squares.

    ``c`` is ``power_correction``; ``(d-1)/2`` removes the usual
    ``r^{-(d-1)/2}`` prefactor of a massive propagator.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    if r.ndim != 1 or r.shape != y.shape or r.size < 3:
        raise InvalidParameterError("need at least 3 matching (r, y) points")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InvalidParameterError("y must be positive and finite")
    if np.any(np.diff(r) <= 0):
        raise InvalidParameterError("r must be strictly increasing")
    t = np.log(y) + power_correction * np.log(r)
    X = np.column_stack([np.ones_like(r), -r])
    coef, _, _, _ = np.linalg.lstsq(X, t, rcond=None)
    resid = t - X @ coef
    dof = r.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(mass=float(coef[1]), log_amplitude=float(coef[0]),
                     mass_err=float(se[1]), log_amplitude_err=float(se[0]),
                     residual_norm=float(np.linalg.norm(resid)))


def normality_checks(series, min_n: int = 1000) -> dict:
    """Skewness and excess-kurtosis z-scores plus KS distance to the fitted normal."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < min_n:
        raise InvalidParameterError(f"need at least {min_n} values, got {n}")
    sd = x.std()
    if not sd > 0:
        raise InvalidParameterError("series is constant")
    skew = stats.skew(x)
    kurt = stats.kurtosis(x)  # excess
    ks = stats.kstest(x, "norm", args=(x.mean(), sd)).statistic
    return {
        "n": n,
        "skew": float(skew),
        "skew_z": float(skew / np.sqrt(6.0 / n)),
        "kurtosis": float(kurt),
        "kurtosis_z": float(kurt / np.sqrt(24.0 / n)),
        "ks": float(ks),
    }


def normality_pass(report: dict, z_max: float = 4.0, ks_max: float | None = None) -> bool:
    ok = abs(report["skew_z"]) <= z_max and abs(report["kurtosis_z"]) <= z_max
    if ks_max is None:
        # 99.9% Lilliefors-type bound with a safety factor for fitted parameters
        ks_max = 1.5 / np.sqrt(report["n"])
    return bool(ok and report["ks"] <= ks_max)


def cap_cdf(t, n: int):
    """CDF of the first coordinate of a uniform point on S^n.

    The density is proportional to ``(1 - u^2)^{(n-2)/2}`` on [-1, 1], so the
    CDF is the regularized incomplete beta ``I_{(1+t)/2}(n/2, n/2)``.
    """
    if n < 1:
        raise InvalidParameterError("n must be positive")
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    return special.betainc(n / 2.0, n / 2.0, (1.0 + t) / 2.0)


def cap_measure_test(points, n: int) -> dict:
    """KS distance between the first coordinates of ``points`` and :func:`cap_cdf`."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != n + 1:
        raise InvalidParameterError(f"expected points of shape (N, {n + 1})")
    if np.any(np.abs(np.sum(p * p, axis=1) - 1.0) > 1e-9):
        raise InvalidParameterError("points are not on the unit sphere")
    res = stats.kstest(p[:, 0], lambda t: cap_cdf(t, n))
    return {"n_points": p.shape[0], "ks": float(res.statistic), "pvalue": float(res.pvalue)}


# ---------------------------------------------------------------------------
# autocorrelation
# ---------------------------------------------------------------------------

def autocorrelation(x) -> np.ndarray:
    """Normalized autocorrelation function via FFT."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n]
    return acf / acf[0]


def integrated_autocorr_time(x) -> float:
    """Geyer's initial positive sequence estimate of the integrated autocorrelation time."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 100:
        raise InvalidParameterError("need at least 100 values")
    if not np.ptp(x) > 0:
        raise InvalidParameterError("series is constant")
    rho = autocorrelation(x)
    m = (rho.size - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    neg = np.nonzero(pairs <= 0)[0]
    k = neg[0] if neg.size else pairs.size
    gamma = pairs[:k]
    # monotone sequence constraint
    gamma = np.minimum.accumulate(gamma)
    tau = -1.0 + 2.0 * float(np.sum(gamma))
    return max(tau, 1.0 / x.size)


def diagnostics(series) -> tuple[float, float]:
    """``(tau, ESS)`` with ``ESS = N / tau``."""
    x = np.asarray(series, dtype=float).ravel()
    tau = integrated_autocorr_time(x)
    return tau, x.size / tau


def mean_and_se(series) -> tuple[float, float]:
    """Sample mean with an autocorrelation-corrected standard error."""
    x = np.asarray(series, dtype=float).ravel()
    tau = integrated_autocorr_time(x)
    return float(x.mean()), float(np.sqrt(tau * x.var(ddof=1) / x.size))


def covariance_with_se(a, b) -> tuple[float, float]:
    """Covariance of two aligned (possibly correlated-in-time) series and its standard error.

    The standard error uses the autocorrelation time of the centred product.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    prod = (a - a.mean()) * (b - b.mean())
    if not np.ptp(prod) > 0:
        raise InvalidParameterError("degenerate series")
    tau = integrated_autocorr_time(prod)
    return float(prod.mean()), float(np.sqrt(tau * prod.var(ddof=1) / prod.size))


def covariance_matrix_se(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariance of iid rows and the entrywise standard errors."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    sq = xc**2
    # Var(x_i x_j) for centred variables, estimated from the data
    m4 = (sq.T @ sq) / n
    se = np.sqrt(np.clip(m4 - cov**2, 0.0, None) / n)
    return cov, se
