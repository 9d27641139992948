"""Closed-form bounds on quantization error, rate gap and feedback bits,
plus the empirical checks that exercise them.

The `check_*` functions return a BoundReport; a failed check is data, not
an exception.
"""

import json
import math
import warnings

import numpy as np
from future.utils import raise_with_traceback
from scipy.integrate import IntegrationWarning, quad
from scipy.special import betaln
from scipy.stats import kstest
from traitlets.log import get_logger

from .channel import calibrate_power, draw_channel, make_correlation
from .codebook import FORM_REDUCED, build_statistics, quantize
from .errors import InvalidArgumentError, NumericError
from .streams import (ROLE_ANGLES, ROLE_CHANNEL, ROLE_CODEBOOK, complex_gaussian, derive_seed,
                      make_stream)


CDF_GRID = np.round(np.arange(1, 20) * 0.05, 2)
STATISTICAL_SLACK = 3.0
BETA_CHAIN_TOLERANCE = 1e-8
BETA_CHAIN_MAX_BITS = 30
INTEGRATION_TOLERANCE = 1e-10
SPHERE_KS_THRESHOLD = 0.006
EXTREME_KS_THRESHOLD = 0.02
KS_CRITICAL_1PCT = 1.63


def _check_unit_interval(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > 1.0) or np.any(np.isnan(z)):
        raise InvalidArgumentError("z must lie in [0, 1], got {}".format(repr(z)))
    return z


def _check_rank(r, minimum=2):
    if int(r) != r or r < minimum:
        raise InvalidArgumentError("Rank must be an integer >= {}, got {}".format(minimum, repr(r)))


def _check_bits(bits):
    if bits < 0:
        raise InvalidArgumentError("Number of feedback bits must be non-negative, got {}".format(repr(bits)))


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def sphere_cdf(z, r):
    """Pr{|g^H v|^2 / (||g||^2 ||v||^2) <= z} for isotropic g, v in C^r."""
    z = _check_unit_interval(z)
    _check_rank(r)
    return _scalar_or_array(1.0 - (1.0 - z) ** (r - 1))


def max_z_cdf_bound(z, r, bits):
    _check_bits(bits)
    return _scalar_or_array(np.power(sphere_cdf(z, r), 2.0 ** bits))


def quant_error_bound(bits, r):
    _check_bits(bits)
    _check_rank(r, minimum=1)
    if r == 1:
        get_logger().info("Rank one channel: any statistics codeword quantizes its direction exactly, error bound is 0")
        return 0.0
    return 2.0 ** (-bits / (r - 1.0))


def rate_gap_bound(calibration, bits, r):
    K = calibration.num_users
    interference = calibration.per_user_power * (K - 1) * calibration.mean_channel_gain * quant_error_bound(bits, r)
    return math.log2(1.0 + interference)


def required_bits(snr_db, K, r, b, exact_slope=False):
    """Smallest B that keeps the rate gap bound at or below log2(b); real valued."""
    if not b > 1:
        raise InvalidArgumentError("Gap target b must exceed 1 (gap log2(b) > 0), got {}".format(repr(b)))
    if K < 2:
        raise InvalidArgumentError("Need at least two users, got K={}".format(K))
    _check_rank(r)
    # the literal slope is (r-1)/3; the exact one is (r-1) log2(10)/10
    slope = (r - 1) * math.log2(10.0) / 10.0 if exact_slope else (r - 1) / 3.0
    return slope * snr_db + (r - 1) * math.log2((K - 1) / (b - 1.0))


class BoundReport:

    def __init__(self, name, inputs, bound_value, empirical_value=None, slack=0.0, satisfied=None, details=None):
        self.name = name
        self.inputs = inputs
        self.bound_value = float(bound_value)
        self.empirical_value = None if empirical_value is None else float(empirical_value)
        self.slack = float(slack)
        if satisfied is None:
            satisfied = self.empirical_value is not None and self.empirical_value <= self.bound_value + self.slack
        self.satisfied = bool(satisfied)
        self.details = details or {}

    def to_dict(self):
        return {
            'name': self.name,
            'inputs': self.inputs,
            'bound': self.bound_value,
            'empirical': self.empirical_value,
            'slack': self.slack,
            'satisfied': self.satisfied,
            'details': self.details,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return "<BoundReport: {} {} satisfied={}>".format(self.name, repr(self.inputs), self.satisfied)


def beta_chain_check(bits, r):
    """Checks  int_0^1 (1-s^(r-1))^(2^B) ds = 2^B beta(2^B, r/(r-1)) <= 2^(-B/(r-1))."""
    _check_bits(bits)
    _check_rank(r)
    if bits > BETA_CHAIN_MAX_BITS:
        raise InvalidArgumentError("Beta chain is evaluated for B <= {}, got {}".format(BETA_CHAIN_MAX_BITS, bits))

    size = 2.0 ** bits
    power = r - 1

    def integrand(s):
        x = s ** power
        return 0.0 if x >= 1.0 else math.exp(size * math.log1p(-x))

    # the integrand falls off around s ~ size^(-1/(r-1)); give quad the breakpoints
    scale = size ** (-1.0 / power)
    points = [scale * f for f in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0) if scale * f < 1.0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', IntegrationWarning)
        integral, achieved = quad(integrand, 0.0, 1.0, points=points or None, epsabs=1e-14, epsrel=1e-12, limit=500)
    if achieved > INTEGRATION_TOLERANCE:
        raise NumericError("Integration for B={} r={} did not converge, achieved tolerance {:.3e} ({})".format(
            bits, r, achieved, "; ".join(str(w.message) for w in caught)))

    try:
        closed_form = math.exp(bits * math.log(2.0) + betaln(size, r / (r - 1.0)))
    except OverflowError as e:
        raise_with_traceback(NumericError("Beta function overflow for B={} r={}: {}".format(bits, r, repr(e))))

    bound = quant_error_bound(bits, r)
    chain_gap = abs(integral - closed_form)
    satisfied = chain_gap < BETA_CHAIN_TOLERANCE and (1.0 - closed_form) >= (1.0 - bound) - 1e-12
    return BoundReport('beta_chain', {'B': bits, 'r': r}, bound, closed_form, slack=1e-12, satisfied=satisfied,
                       details={'integral': integral, 'integration_error': achieved, 'chain_gap': chain_gap})


class AngleSample:

    def __init__(self, g, v, gamma, squared_cosine_sphere, squared_cosine_ellipse):
        self.g = g
        self.v = v
        self.gamma = gamma
        self.squared_cosine_sphere = squared_cosine_sphere
        self.squared_cosine_ellipse = squared_cosine_ellipse

    def __repr__(self):
        return "<AngleSample: sphere={:.6g}, ellipse={:.6g}>".format(self.squared_cosine_sphere, self.squared_cosine_ellipse)


class AngleSampleBatch:

    def __init__(self, g, v, gamma, squared_cosine_sphere, squared_cosine_ellipse):
        self.g = g
        self.v = v
        self.gamma = gamma
        self.squared_cosine_sphere = squared_cosine_sphere
        self.squared_cosine_ellipse = squared_cosine_ellipse

    @property
    def rank(self):
        return len(self.gamma)

    def __len__(self):
        return len(self.squared_cosine_sphere)

    def __getitem__(self, i):
        return AngleSample(self.g[i], self.v[i], self.gamma,
                           float(self.squared_cosine_sphere[i]), float(self.squared_cosine_ellipse[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def squared_cosines(g, v):
    """Row-wise |g^H v|^2 / (||g||^2 ||v||^2)."""
    inner = np.sum(g.conj() * v, axis=-1)
    norms = np.sum(np.abs(g) ** 2, axis=-1) * np.sum(np.abs(v) ** 2, axis=-1)
    return np.clip(np.abs(inner) ** 2 / norms, 0.0, 1.0)


def sample_ellipse_angles(gamma, n, seed):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 2:
        gamma = np.diag(gamma)
    if np.any(gamma < 0):
        raise InvalidArgumentError("Stretch factors must be non-negative, got {}".format(repr(gamma)))
    # zero stretch removes a dimension
    gamma = gamma[gamma > 0]
    if len(gamma) < 2:
        raise InvalidArgumentError("Need at least two positive stretch factors, got {}".format(repr(gamma)))

    rng = make_stream(seed, ROLE_ANGLES)
    g = complex_gaussian(rng, (n, len(gamma)))
    v = complex_gaussian(rng, (n, len(gamma)))
    sphere = squared_cosines(g, v)
    if np.all(gamma == gamma[0]):
        ellipse = sphere.copy()
    else:
        ellipse = squared_cosines(g * gamma, v * gamma)
    return AngleSampleBatch(g, v, gamma, sphere, ellipse)


def empirical_cdf(samples, grid):
    """Fraction of samples <= z for each z in grid."""
    ordered = np.sort(np.asarray(samples))
    return np.searchsorted(ordered, grid, side='right') / float(len(ordered))


def pipeline_squared_cosines(num_antennas, r, bits, n, seed, profile='equal', form=FORM_REDUCED):
    """Z = max_i |h~^H c_i|^2 over n draws of channel and statistics codebook, one correlation model."""
    model = make_correlation(num_antennas, r, profile, seed)
    values = np.empty(n)
    for t in range(n):
        sample = draw_channel(model, make_stream(seed, ROLE_CHANNEL, t))
        codebook = build_statistics(model, bits, derive_seed(make_stream(seed, ROLE_CODEBOOK, t)), form=form)
        values[t] = quantize(sample, codebook).squared_cosine
    return values


def ks_threshold(floor, n):
    """KS acceptance distance: `floor`, widened to the 1% critical value for small n."""
    return max(floor, KS_CRITICAL_1PCT / math.sqrt(n))


def check_sphere_cdf(r, n, seed, threshold=None):
    threshold = ks_threshold(SPHERE_KS_THRESHOLD, n) if threshold is None else threshold
    samples = sample_ellipse_angles(np.ones(r), n, seed).squared_cosine_sphere
    distance = kstest(samples, lambda z: sphere_cdf(np.clip(z, 0.0, 1.0), r)).statistic
    return BoundReport('sphere_cdf', {'r': r, 'n': n}, threshold, distance)


def check_max_z_cdf(r, bits, n, seed, num_antennas=64, profile='equal'):
    values = pipeline_squared_cosines(num_antennas, r, bits, n, seed, profile)
    excess = empirical_cdf(values, CDF_GRID) - max_z_cdf_bound(CDF_GRID, r, bits)
    worst = int(np.argmax(excess))
    return BoundReport('max_z_cdf', {'r': r, 'B': bits, 'n': n, 'M': num_antennas, 'profile': profile},
                       0.0, excess[worst], slack=STATISTICAL_SLACK / math.sqrt(n),
                       details={'worst_z': float(CDF_GRID[worst])})


def check_quantization_error(r, bits, n, seed, num_antennas=64, profile='equal'):
    errors = 1.0 - pipeline_squared_cosines(num_antennas, r, bits, n, seed, profile)
    stderr = float(np.std(errors, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return BoundReport('quantization_error', {'r': r, 'B': bits, 'n': n, 'M': num_antennas, 'profile': profile},
                       quant_error_bound(bits, r), np.mean(errors), slack=STATISTICAL_SLACK * stderr,
                       details={'stderr': stderr})


def check_order_statistic(r, bits, n, seed):
    """Pr{max of 2^B < z} against the 2^B-th power of the single-codeword CDF, sphere case."""
    size = 1 << bits
    rng = make_stream(seed, ROLE_ANGLES)
    g = complex_gaussian(rng, (n, 1, r))
    v = complex_gaussian(rng, (n, size, r))
    singles = squared_cosines(np.broadcast_to(g, v.shape), v)
    maxima = np.max(singles, axis=1)
    mismatch = np.abs(empirical_cdf(maxima, CDF_GRID) - empirical_cdf(singles.ravel(), CDF_GRID) ** size)
    worst = int(np.argmax(mismatch))
    return BoundReport('order_statistic', {'r': r, 'B': bits, 'n': n}, 0.0, mismatch[worst],
                       slack=STATISTICAL_SLACK / math.sqrt(n), details={'worst_z': float(CDF_GRID[worst])})


def check_dominance(gamma, n, seed):
    batch = sample_ellipse_angles(gamma, n, seed)
    excess = empirical_cdf(batch.squared_cosine_ellipse, CDF_GRID) - sphere_cdf(CDF_GRID, batch.rank)
    worst = int(np.argmax(excess))
    return BoundReport('dominance', {'gamma': [float(x) for x in batch.gamma], 'n': n}, 0.0, excess[worst],
                       slack=STATISTICAL_SLACK / math.sqrt(n), details={'worst_z': float(CDF_GRID[worst])})


def check_extreme_ellipse(r, n, seed, epsilon=1e-6, threshold=None):
    """One collapsed axis: the ellipse angle behaves like a sphere angle in r-1 dimensions."""
    threshold = ks_threshold(EXTREME_KS_THRESHOLD, n) if threshold is None else threshold
    _check_rank(r, minimum=3)
    gamma = np.ones(r)
    gamma[-1] = epsilon
    samples = sample_ellipse_angles(gamma, n, seed).squared_cosine_ellipse
    distance = kstest(samples, lambda z: sphere_cdf(np.clip(z, 0.0, 1.0), r - 1)).statistic
    return BoundReport('extreme_ellipse', {'r': r, 'n': n, 'epsilon': epsilon}, threshold, distance)


def check_monotonicity(max_bits=30, ranks=range(2, 9)):
    violations = []
    for r in ranks:
        values = [quant_error_bound(b, r) for b in range(max_bits + 1)]
        violations += [('bits', r, b) for b in range(max_bits) if not values[b + 1] < values[b]]
    for b in range(1, max_bits + 1):
        values = [quant_error_bound(b, r) for r in ranks]
        violations += [('rank', r, b) for r, lo, hi in zip(ranks, values, values[1:]) if not hi > lo]

    def gap(snr_db, K, bits):
        return rate_gap_bound(calibrate_power(snr_db, K, 64.0), bits, 4)

    snrs = np.arange(-10.0, 31.0, 5.0)
    violations += [('snr', s, None) for s, t in zip(snrs, snrs[1:]) if not gap(t, 10, 10) > gap(s, 10, 10)]
    violations += [('users', K, None) for K in range(2, 16) if not gap(6.0, K + 1, 10) > gap(6.0, K, 10)]
    violations += [('gap_bits', b, None) for b in range(0, 40) if not gap(6.0, 10, b + 1) < gap(6.0, 10, b)]
    if violations:
        get_logger().warning("Monotonicity violations: {}".format(repr(violations[:10])))
    return BoundReport('monotonicity', {'max_bits': max_bits, 'ranks': list(ranks)}, 0.0, len(violations),
                       details={'violations': [repr(v) for v in violations[:10]]})
