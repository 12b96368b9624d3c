"""Parametric autocorrelation families and rate-regime classification.

Two stationary Gaussian families are supported:

* a fractional Ornstein-Uhlenbeck process parametrized by mean reversion
  ``kappa``, stationary standard deviation ``nu``, and Hurst exponent
  ``hurst`` (roughness index ``alpha = hurst - 1/2``);
* a Cauchy-class process parametrized by roughness index ``alpha``,
  memory decay exponent ``beta``, and standard deviation ``nu``, whose
  correlation is ``(1 + |h|^{2a+1})^{-b/(2a+1)}``.

Both expose true correlations (``rho(0) == 1``); autocovariances are
``nu**2 * rho``.  Correlation evaluations are memoized per parameter
point; the fOU correlation has a special-function closed form with an
adaptive-quadrature twin kept for cross-checking.
"""
from __future__ import annotations

import enum
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc, hyp1f1

from .errors import DomainError

__all__ = [
    "Family",
    "FouParams",
    "CauchyParams",
    "ModelSpec",
    "Roughness",
    "Memory",
    "CltCase",
    "RegimeLabel",
    "fou_acf",
    "cauchy_acf",
    "acv_vector",
    "correlation_at_lags",
    "correlation_grid",
    "classify_regime",
    "arfima_d_from_beta",
]

# Integration window: exp(-40) is far below the quadrature tolerance, so the
# truncated mass never registers.
_QUAD_CUT = 40.0
_QUAD_EPSABS = 1e-12
_QUAD_EPSREL = 1e-11


class Family(enum.Enum):
    FOU = "fou"
    CAUCHY = "cauchy"


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class FouParams:
    """Fractional Ornstein-Uhlenbeck parameters.

    ``kappa``: mean-reversion speed (> 0, per day when lags are in days).
    ``nu``: stationary standard deviation (> 0).
    ``hurst``: Hurst exponent of the driving noise, in (0, 1).
    ``mu``: stationary mean.
    """

    kappa: float
    nu: float
    hurst: float
    mu: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", _check_finite("kappa", self.kappa))
        object.__setattr__(self, "nu", _check_finite("nu", self.nu))
        object.__setattr__(self, "hurst", _check_finite("hurst", self.hurst))
        object.__setattr__(self, "mu", _check_finite("mu", self.mu))
        if self.kappa <= 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        if self.nu <= 0:
            raise DomainError(f"nu must be > 0, got {self.nu}")
        if not 0.0 < self.hurst < 1.0:
            raise DomainError(f"hurst must lie in (0, 1), got {self.hurst}")

    @property
    def alpha(self) -> float:
        """Roughness index, ``hurst - 1/2``."""
        return self.hurst - 0.5

    @property
    def scale_b(self) -> float:
        """Variance-normalizing constant ``sqrt(kappa^{2H} / (H * Gamma(2H)))``."""
        two_h = 2.0 * self.hurst
        return math.sqrt(self.kappa**two_h / (self.hurst * gamma_fn(two_h)))

    def shape_key(self) -> tuple:
        return (Family.FOU, self.kappa, self.hurst)


@dataclass(frozen=True)
class CauchyParams:
    """Cauchy-class parameters.

    ``beta``: tail decay exponent (> 0); long memory when beta <= 1.
    ``nu``: stationary standard deviation (> 0).
    ``alpha``: roughness index in (-1/2, 1/2); rough paths when alpha < 0.
    ``mu``: stationary mean.
    """

    beta: float
    nu: float
    alpha: float
    mu: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", _check_finite("beta", self.beta))
        object.__setattr__(self, "nu", _check_finite("nu", self.nu))
        object.__setattr__(self, "alpha", _check_finite("alpha", self.alpha))
        object.__setattr__(self, "mu", _check_finite("mu", self.mu))
        if self.beta <= 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if self.nu <= 0:
            raise DomainError(f"nu must be > 0, got {self.nu}")
        if not -0.5 < self.alpha < 0.5:
            raise DomainError(f"alpha must lie in (-1/2, 1/2), got {self.alpha}")

    @property
    def fractal_exponent(self) -> float:
        """Origin-behavior exponent ``2*alpha + 1``, in (0, 2)."""
        return 2.0 * self.alpha + 1.0

    def shape_key(self) -> tuple:
        return (Family.CAUCHY, self.beta, self.alpha)


Params = FouParams | CauchyParams


@dataclass(frozen=True)
class ModelSpec:
    """A parametric family plus how its mean is treated during estimation.

    ``mean_mode`` is ``"known"`` (the mean is ``params.mu`` and fixed) or
    ``"estimated"`` (the mean is profiled out / reported by estimators;
    ``params.mu`` is then the current value, e.g. the simulation truth).
    """

    params: Params
    mean_mode: str = "known"

    def __post_init__(self) -> None:
        if not isinstance(self.params, (FouParams, CauchyParams)):
            raise DomainError(f"unsupported params type {type(self.params).__name__}")
        if self.mean_mode not in ("known", "estimated"):
            raise DomainError(f"mean_mode must be 'known' or 'estimated', got {self.mean_mode!r}")

    @property
    def family(self) -> Family:
        return Family.FOU if isinstance(self.params, FouParams) else Family.CAUCHY

    @property
    def mean_is_estimated(self) -> bool:
        return self.mean_mode == "estimated"


class Roughness(enum.Enum):
    ROUGH = "rough"
    BROWNIAN = "brownian"
    SMOOTH = "smooth"


class Memory(enum.Enum):
    SHORT = "short"
    LONG = "long"


class CltCase(enum.Enum):
    CASE1_GAUSSIAN = "CASE1_GAUSSIAN"
    CASE2_BOUNDARY = "CASE2_BOUNDARY"
    CASE3_ROSENBLATT = "CASE3_ROSENBLATT"


@dataclass(frozen=True)
class RegimeLabel:
    roughness: Roughness
    memory: Memory
    clt_case: CltCase
    beta_decay: float


def _fou_shifted_integrand(y: float, x: float, two_h: float) -> float:
    # Variance-reduced form of the defining integral: subtracting
    # x^{2H} * e^{-|y|} inside the integral (its total mass is exactly
    # 2 x^{2H}) removes the catastrophic cancellation at large kappa*h.
    return math.exp(-abs(y)) * (abs(x + y) ** two_h - x**two_h)


def _fou_correlation_scalar(kappa: float, hurst: float, h: float) -> float:
    x = kappa * abs(h)
    two_h = 2.0 * hurst
    pts = sorted({p for p in (-x, 0.0) if -_QUAD_CUT < p < _QUAD_CUT})
    integral, _ = quad(
        _fou_shifted_integrand,
        -_QUAD_CUT,
        _QUAD_CUT,
        args=(x, two_h),
        points=pts or None,
        epsabs=_QUAD_EPSABS,
        epsrel=_QUAD_EPSREL,
        limit=400,
    )
    # The shifted integral equals I(x) - 2 x^{2H}, i.e. twice the bracketed
    # quantity of the raw expression; the prefactor b^2 / (2 kappa^{2H})
    # = 1 / (2 H Gamma(2H)) then makes rho_0 = 1.
    return 0.25 * integral / (hurst * gamma_fn(two_h))


# Beyond this point exp(x) would lose the closed form to overflow and
# cancellation; an even-order asymptotic expansion takes over.
_FOU_ASYMPTOTIC_X = 600.0


def _fou_correlation_closed(kappa: float, hurst: float, h) -> np.ndarray:
    """Vectorized fOU correlation via incomplete-gamma / 1F1 identities.

    Splitting the defining integral at its kinks gives, with ``x = kappa|h|``
    and ``a = 2H + 1``,

        I(x) = e^x Gamma(a) Q(a, x)                       (right tail)
             + x^a e^{-x} 1F1(a; a+1; x) / a              (inner piece)
             + Gamma(a) e^{-x},                           (reflected tail)

    where ``Q`` is the regularized upper incomplete gamma, and the
    correlation is ``(I(x) - 2 x^{2H}) / (4 H Gamma(2H))``.  For ``x``
    beyond the overflow range the even terms of the large-``x`` expansion
    ``I - 2x^{2H} = 2 x^{2H} sum_{k even} ff_k(2H) / x^k`` are used
    (``ff_k`` the falling factorial), which is also free of cancellation.
    At ``H = 1/2`` the closed form collapses to ``e^{-x}`` exactly.
    """
    x = kappa * np.abs(np.asarray(h, dtype=float))
    two_h = 2.0 * hurst
    a = two_h + 1.0
    norm = 4.0 * hurst * gamma_fn(two_h)
    out = np.empty(x.shape, dtype=float)

    small = x < _FOU_ASYMPTOTIC_X
    if small.any():
        xs = x[small]
        gam_a = gamma_fn(a)
        ex_neg = np.exp(-xs)
        i_val = (
            np.exp(xs) * gam_a * gammaincc(a, xs)
            + xs**a * ex_neg * hyp1f1(a, a + 1.0, xs) / a
            + gam_a * ex_neg
        )
        out[small] = (i_val - 2.0 * xs**two_h) / norm
    if not small.all():
        xb = x[~small]
        series = np.zeros_like(xb)
        ff = 1.0
        inv_x2 = 1.0 / (xb * xb)
        power = np.ones_like(xb)
        for k in range(1, 13):
            ff *= two_h - (k - 1)
            if k % 2 == 0:
                power = power * inv_x2
                series += ff * power
        out[~small] = xb**two_h * series / (2.0 * hurst * gamma_fn(two_h))
    return out


def fou_acf(params: FouParams, h):
    """Correlation of the stationary fOU process at lag ``h`` (time units).

    Evaluates the defining integral in closed form (incomplete gamma plus
    confluent hypergeometric pieces) normalized so the lag-zero value is
    exactly one.  Accepts a scalar or an array of lags; negative lags are
    folded by symmetry.
    """
    arr = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("lag h must be finite")
    out = _fou_correlation_closed(params.kappa, params.hurst, arr)
    if arr.ndim == 0:
        return float(out[()])
    return out


def cauchy_acf(params: CauchyParams, h):
    """Correlation ``(1 + |h|^{2a+1})^{-b/(2a+1)}`` of the Cauchy class."""
    arr = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("lag h must be finite")
    a = params.fractal_exponent
    out = (1.0 + np.abs(arr) ** a) ** (-params.beta / a)
    if arr.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Memoized correlation evaluation.  Keyed by the shape parameters and the
# sampling interval; values map integer lag -> correlation.  The lock makes
# concurrent read/insert safe; entries are evicted LRU beyond a bound.
# ---------------------------------------------------------------------------

_cache_lock = threading.Lock()
_corr_cache: OrderedDict[tuple, np.ndarray] = OrderedDict()
_CACHE_MAX_ENTRIES = 160
# Largest consecutive-lag grid worth keeping around (512 KiB per entry).
# Million-lag requests (exact simulation of huge series) are computed
# directly and never stored, so the cache cannot balloon.
_CACHE_MAX_LAGS = 65_536


def _raw_correlation(params: Params, times: np.ndarray) -> np.ndarray:
    if isinstance(params, CauchyParams):
        return np.atleast_1d(cauchy_acf(params, times))
    return np.atleast_1d(_fou_correlation_closed(params.kappa, params.hurst, times))


def _cached_prefix(params: Params, delta: float, n_lags: int) -> np.ndarray:
    """Correlations at consecutive lags ``0..n_lags-1`` from the grid cache.

    Grids grow geometrically per (shape, delta) key so the usual pattern of
    creeping lag requests during a fit recomputes at most a handful of
    times.  The returned slice aliases the cache; callers must not mutate.
    """
    key = params.shape_key() + (float(delta),)
    with _cache_lock:
        grid = _corr_cache.get(key)
        if grid is not None:
            _corr_cache.move_to_end(key)
    if grid is not None and grid.size >= n_lags:
        return grid[:n_lags]
    want = max(256, 1 << max(0, int(np.ceil(np.log2(n_lags)))))
    want = max(min(want, _CACHE_MAX_LAGS), n_lags)
    fresh = _raw_correlation(params, np.arange(want) * delta)
    if want <= _CACHE_MAX_LAGS:
        with _cache_lock:
            held = _corr_cache.get(key)
            if held is None or held.size < fresh.size:
                _corr_cache[key] = fresh
                _corr_cache.move_to_end(key)
                while len(_corr_cache) > _CACHE_MAX_ENTRIES:
                    _corr_cache.popitem(last=False)
    return fresh[:n_lags]


def correlation_at_lags(params: Params, delta: float, lags) -> np.ndarray:
    """Correlations at integer lag multiples of ``delta``, memoized.

    Lags below the cache ceiling are served from a shared consecutive-lag
    grid (one vectorized evaluation, then fancy indexing); anything larger
    is evaluated directly without touching the cache.
    """
    if not (math.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be positive and finite, got {delta}")
    lag_arr = np.asarray(lags, dtype=np.int64)
    if lag_arr.size == 0:
        return np.empty(lag_arr.shape)
    if lag_arr.min() < 0:
        raise DomainError("lags must be nonnegative integers")
    top = int(lag_arr.max()) + 1
    if top <= _CACHE_MAX_LAGS:
        return _cached_prefix(params, delta, top)[lag_arr]
    vals = _raw_correlation(params, lag_arr.ravel() * delta)
    return vals.reshape(lag_arr.shape)


def correlation_grid(params: Params, delta: float, n_lags: int) -> np.ndarray:
    """Dense correlation grid ``rho(0), rho(delta), ..., rho((n_lags-1) delta)``."""
    if n_lags < 1:
        raise DomainError("n_lags must be >= 1")
    if n_lags <= _CACHE_MAX_LAGS:
        return _cached_prefix(params, delta, n_lags).copy()
    return _raw_correlation(params, np.arange(n_lags) * delta)


def acv_vector(model: ModelSpec, lags, delta: float) -> np.ndarray:
    """Autocovariances ``nu^2 * rho(lag * delta)`` at integer lags."""
    rho = correlation_at_lags(model.params, delta, lags)
    return model.params.nu**2 * rho


def classify_regime(model: ModelSpec) -> RegimeLabel:
    """Roughness/memory labels and the CLT case of the score asymptotics.

    The decay exponent ``beta_decay`` is the hyperbolic tail index of the
    correlation: ``2(1 - H)`` for the fOU family and ``beta`` for the Cauchy
    class.  The central-limit case is the standard Gaussian one whenever the
    exponent exceeds 1/2 or the correlation is integrable, the boundary case
    at exactly 1/2, and the Rosenblatt regime below 1/2.
    """
    p = model.params
    if isinstance(p, FouParams):
        alpha = p.alpha
        beta_decay = 2.0 * (1.0 - p.hurst)
        long_memory = p.hurst > 0.5
        integrable = p.hurst <= 0.5 or beta_decay > 1.0
    else:
        alpha = p.alpha
        beta_decay = p.beta
        long_memory = p.beta <= 1.0
        integrable = p.beta > 1.0
    if alpha < 0:
        rough = Roughness.ROUGH
    elif alpha == 0:
        rough = Roughness.BROWNIAN
    else:
        rough = Roughness.SMOOTH
    if beta_decay > 0.5 or integrable:
        case = CltCase.CASE1_GAUSSIAN
    elif beta_decay == 0.5:
        case = CltCase.CASE2_BOUNDARY
    else:
        case = CltCase.CASE3_ROSENBLATT
    return RegimeLabel(
        roughness=rough,
        memory=Memory.LONG if long_memory else Memory.SHORT,
        clt_case=case,
        beta_decay=beta_decay,
    )


def arfima_d_from_beta(beta_decay: float) -> float:
    """Fractional differencing order implied by a decay exponent in (0, 1]."""
    b = float(beta_decay)
    if not (math.isfinite(b) and 0.0 < b <= 1.0):
        raise DomainError(f"beta_decay must lie in (0, 1], got {beta_decay}")
    return (1.0 - b) / 2.0
