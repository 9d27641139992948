"""Correlated channel model h = R^{1/2} h_w with R^{1/2} = U diag(sigma) U^H.

Only the first `rank` diagonal entries of diag(sigma) are non-zero, so
every operation works with the active eigenbasis U[:, :rank].
"""

import json

import numpy as np
from scipy.stats import unitary_group
from traitlets.log import get_logger

from .errors import InvalidArgumentError
from .streams import ROLE_CORRELATION, complex_gaussian, make_stream


UNITARY_TOLERANCE = 1e-10
TRACE_TOLERANCE = 1e-9

PROFILE_EQUAL = 'equal'
PROFILE_EXPONENTIAL = 'exponential'
PROFILE_EXPLICIT = 'explicit'


class SingularValueProfile:

    def __init__(self, kind, decay=None, values=None):
        if kind not in (PROFILE_EQUAL, PROFILE_EXPONENTIAL, PROFILE_EXPLICIT):
            raise InvalidArgumentError("Unknown singular value profile: {}".format(repr(kind)))
        if kind == PROFILE_EXPONENTIAL and (decay is None or not 0.0 < decay <= 1.0):
            raise InvalidArgumentError("Exponential profile needs a decay in (0, 1], got {}".format(repr(decay)))
        if kind == PROFILE_EXPLICIT:
            if not values:
                raise InvalidArgumentError("Explicit profile needs at least one value")
            if any(not v > 0 for v in values):
                raise InvalidArgumentError("Explicit profile entries must be positive, got {}".format(repr(values)))
            values = tuple(float(v) for v in values)
        self.kind = kind
        self.decay = decay
        self.values = values

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, SingularValueProfile):
            return spec
        if isinstance(spec, (list, tuple)):
            return cls(PROFILE_EXPLICIT, values=spec)
        text = str(spec).strip()
        head, _, tail = text.partition(':')
        try:
            if head == PROFILE_EQUAL and not tail:
                return cls(PROFILE_EQUAL)
            if head == PROFILE_EXPONENTIAL:
                return cls(PROFILE_EXPONENTIAL, decay=float(tail))
            if head == PROFILE_EXPLICIT:
                return cls(PROFILE_EXPLICIT, values=[float(v) for v in tail.split(',')])
            # bare comma separated list
            return cls(PROFILE_EXPLICIT, values=[float(v) for v in text.split(',')])
        except ValueError:
            raise InvalidArgumentError("Cannot parse singular value profile: {}".format(repr(text)))

    def sigma(self, rank):
        if self.kind == PROFILE_EQUAL:
            return np.ones(rank)
        if self.kind == PROFILE_EXPONENTIAL:
            # sigma_i^2 proportional to decay^(i-1)
            return np.sqrt(self.decay ** np.arange(rank))
        if len(self.values) != rank:
            raise InvalidArgumentError(
                "Explicit profile has {} entries but rank is {}".format(len(self.values), rank))
        return np.sort(np.asarray(self.values, dtype=float))[::-1]

    def describe(self):
        if self.kind == PROFILE_EQUAL:
            return PROFILE_EQUAL
        if self.kind == PROFILE_EXPONENTIAL:
            return "{}:{!r}".format(PROFILE_EXPONENTIAL, self.decay)
        return "{}:{}".format(PROFILE_EXPLICIT, ",".join(repr(v) for v in self.values))

    def __repr__(self):
        return "<SingularValueProfile: {}>".format(self.describe())


def haar_unitary(num_antennas, rng):
    if num_antennas == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    # QR of a complex Gaussian matrix with the diagonal phases of R removed
    return unitary_group.rvs(num_antennas, random_state=rng)


def _frozen(array):
    array = np.array(array)
    array.setflags(write=False)
    return array


class CorrelationModel:

    def __init__(self, eigenbasis, singular_values, profile, seed, trace_target):
        self.eigenbasis = _frozen(eigenbasis)
        self.singular_values = _frozen(singular_values)
        self.profile = profile
        self.seed = seed
        self.trace_target = float(trace_target)
        self.active_basis = _frozen(self.eigenbasis[:, :self.rank])
        self._validate()

    @property
    def num_antennas(self):
        return self.eigenbasis.shape[0]

    @property
    def rank(self):
        return len(self.singular_values)

    @property
    def mean_channel_gain(self):
        return float(np.sum(self.singular_values ** 2))

    @property
    def is_scaled_identity(self):
        return self.rank == self.num_antennas and np.all(self.singular_values == self.singular_values[0])

    def sqrt_matrix(self):
        if self.is_scaled_identity:
            return self.singular_values[0] * np.eye(self.num_antennas)
        return (self.active_basis * self.singular_values) @ self.active_basis.conj().T

    def correlation_matrix(self):
        return (self.active_basis * self.singular_values ** 2) @ self.active_basis.conj().T

    def apply_sqrt(self, vectors):
        """R^{1/2} applied to a vector, or to each row of a (n, M) array."""
        vectors = np.asarray(vectors)
        if self.is_scaled_identity:
            return self.singular_values[0] * vectors
        coefficients = vectors @ self.active_basis.conj()
        return (coefficients * self.singular_values) @ self.active_basis.T

    def coefficients(self, vector):
        return self.active_basis.conj().T @ vector

    def subspace_residual(self, vector):
        vector = np.asarray(vector)
        return np.linalg.norm(vector - self.active_basis @ self.coefficients(vector))

    def to_dict(self):
        return {
            'M': self.num_antennas,
            'r': self.rank,
            'profile': self.profile.describe(),
            'seed': self.seed,
            'trace_target': self.trace_target,
            'sigma': [float(s) for s in self.singular_values],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        document = json.loads(text)
        model = make_correlation(document['M'], document['r'], document['profile'], document['seed'],
                                 trace_target=document.get('trace_target'))
        if not np.allclose(model.singular_values, document['sigma'], rtol=1e-12, atol=0.0):
            raise InvalidArgumentError("Replayed singular values differ from the stored ones")
        return model

    def _validate(self):
        M = self.num_antennas
        if self.eigenbasis.shape != (M, M):
            raise InvalidArgumentError("Eigenbasis must be square, got shape {}".format(self.eigenbasis.shape))
        drift = np.linalg.norm(self.eigenbasis.conj().T @ self.eigenbasis - np.eye(M))
        if drift > UNITARY_TOLERANCE:
            raise InvalidArgumentError("Eigenbasis is not unitary (drift {:.3e})".format(drift))
        if not 1 <= self.rank <= M:
            raise InvalidArgumentError("Rank must be within [1, {}], got {}".format(M, self.rank))
        if np.any(self.singular_values <= 0) or np.any(np.diff(self.singular_values) > 0):
            raise InvalidArgumentError("Singular values must be positive and non-increasing")
        if abs(self.mean_channel_gain - self.trace_target) > TRACE_TOLERANCE * self.trace_target:
            raise InvalidArgumentError("trace(R) = {} differs from target {}".format(self.mean_channel_gain, self.trace_target))

    def __repr__(self):
        return "<CorrelationModel: M={}, r={}, profile={}, seed={}>".format(
            self.num_antennas, self.rank, self.profile.describe(), self.seed)


def make_correlation(num_antennas, rank, profile=PROFILE_EQUAL, seed=0, trace_target=None):
    if num_antennas < 1:
        raise InvalidArgumentError("Number of antennas must be positive, got {}".format(num_antennas))
    if not 1 <= rank <= num_antennas:
        raise InvalidArgumentError("Rank must be within [1, {}], got {}".format(num_antennas, rank))
    profile = SingularValueProfile.parse(profile)
    if trace_target is None:
        trace_target = float(num_antennas)
    if not trace_target > 0:
        raise InvalidArgumentError("Trace target must be positive, got {}".format(trace_target))

    sigma = profile.sigma(rank)
    sigma = sigma * np.sqrt(trace_target / np.sum(sigma ** 2))
    eigenbasis = haar_unitary(num_antennas, make_stream(seed, ROLE_CORRELATION))

    model = CorrelationModel(eigenbasis, sigma, profile, seed, trace_target)
    get_logger().debug("Built correlation model {}, sigma: {}".format(repr(model), repr(sigma)))
    return model


class ChannelSample:

    def __init__(self, h, h_w):
        self.h = h
        self.h_w = h_w
        self.norm_sq = float(np.real(np.vdot(h, h)))
        self.norm = np.sqrt(self.norm_sq)
        self.direction = h / self.norm if self.norm_sq > 0 else np.zeros_like(h)

    @property
    def num_antennas(self):
        return len(self.h)

    def __repr__(self):
        return "<ChannelSample: M={}, norm_sq={:.6g}>".format(self.num_antennas, self.norm_sq)


def draw_channel(model, rng):
    h_w = complex_gaussian(rng, model.num_antennas)
    return ChannelSample(model.apply_sqrt(h_w), h_w)


def channel_matrix(samples):
    return np.column_stack([s.h for s in samples])


class PowerCalibration:

    def __init__(self, snr_db, transmit_power, num_users, mean_channel_gain):
        self.snr_db = float(snr_db)
        self.transmit_power = float(transmit_power)
        self.num_users = int(num_users)
        self.mean_channel_gain = float(mean_channel_gain)

    @property
    def per_user_power(self):
        return self.transmit_power / self.num_users

    def recomputed_snr_db(self):
        return 10.0 * np.log10(self.per_user_power * self.mean_channel_gain)

    def __repr__(self):
        return "<PowerCalibration: snr_db={}, gamma={:.6g}, K={}, gain={:.6g}>".format(
            self.snr_db, self.transmit_power, self.num_users, self.mean_channel_gain)


def calibrate_power(snr_db, num_users, model):
    if num_users < 1:
        raise InvalidArgumentError("Number of users must be positive, got {}".format(num_users))
    gain = model.mean_channel_gain if isinstance(model, CorrelationModel) else float(model)
    if not gain > 0:
        raise InvalidArgumentError("Mean channel gain must be positive, got {}".format(gain))
    transmit_power = num_users * 10.0 ** (snr_db / 10.0) / gain
    return PowerCalibration(snr_db, transmit_power, num_users, gain)
