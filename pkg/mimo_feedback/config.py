import hashlib
import json
import math
import os

import numpy as np
from future.utils import raise_with_traceback
from traitlets import Bool, Enum, Float, Integer, List, Unicode, validate
from traitlets.config import Configurable

from .channel import SingularValueProfile
from .codebook import DEFAULT_MAX_BITS, KIND_EIGEN, KIND_RVQ, KIND_STATISTICS
from .errors import InvalidArgumentError, UsageError


SCHEME_IDEAL = 'ideal'
SCHEME_STATISTICS = KIND_STATISTICS
SCHEME_RVQ = KIND_RVQ
SCHEME_EIGEN = KIND_EIGEN
SCHEMES = (SCHEME_IDEAL, SCHEME_STATISTICS, SCHEME_RVQ, SCHEME_EIGEN)
SCHEME_ALIASES = {'eigen': SCHEME_EIGEN}

SAMPLER_ORDER_STATISTIC = 'order-statistic'
SAMPLER_SCAN = 'scan'
SAMPLER_AUTO = 'auto'

LINEAR_RULE_OFFSET = 3.17
ROUNDING_SLACK = 1e-12

THREADS_ENV = 'MIMO_FB_THREADS'


class BitRule:
    """How many feedback bits each SNR point gets.

    linear[:offset]   B = ceil((r-1)/3 * snr_db + offset)
    fixed:B          the same B everywhere
    list:B1,B2,...   one B per grid point
    """

    def __init__(self, kind, offset=LINEAR_RULE_OFFSET, values=()):
        self.kind = kind
        self.offset = offset
        self.values = tuple(values)

    @classmethod
    def parse(cls, text):
        head, _, tail = str(text).strip().partition(':')
        try:
            if head == 'linear':
                return cls('linear', offset=float(tail) if tail else LINEAR_RULE_OFFSET)
            if head == 'fixed':
                return cls('fixed', values=(cls._bits(tail),))
            if head == 'list':
                return cls('list', values=[cls._bits(v) for v in tail.split(',')])
        except ValueError:
            pass
        raise InvalidArgumentError("Cannot parse bit rule: {}".format(repr(text)))

    @staticmethod
    def _bits(text):
        value = float(text)
        if value < 0 or value != int(value):
            raise ValueError(text)
        return int(value)

    def bits(self, index, snr_db, rank):
        """(B used, unrounded value) for grid point `index`."""
        if self.kind == 'linear':
            raw = (rank - 1) / 3.0 * snr_db + self.offset
            return max(0, int(math.ceil(raw - ROUNDING_SLACK))), raw
        value = self.values[0] if self.kind == 'fixed' else self.values[index]
        return value, float(value)

    def describe(self):
        if self.kind == 'linear':
            return "linear:{!r}".format(self.offset)
        return "{}:{}".format(self.kind, ",".join(str(v) for v in self.values))

    def __repr__(self):
        return "<BitRule: {}>".format(self.describe())


def canonical_scheme(name):
    name = SCHEME_ALIASES.get(name.strip(), name.strip())
    if name not in SCHEMES:
        raise InvalidArgumentError("Unknown scheme {}, expected one of {}".format(repr(name), ", ".join(SCHEMES)))
    return name


class ExperimentConfig(Configurable):

    num_antennas = Integer(64, help="Number of base station antennas M").tag(config=True)
    num_users = Integer(10, help="Number of single-antenna users K").tag(config=True)
    rank = Integer(4, help="Rank r of each user's correlation matrix").tag(config=True)
    profile = Unicode('equal', help="Singular value profile: equal, exponential:rho or explicit:a,b,...").tag(config=True)
    trace_target = Float(None, allow_none=True, help="trace(R) normalization, None for M").tag(config=True)

    snr_grid_db = List(Float(), default_value=[0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
                       help="Receive SNR grid in dB").tag(config=True)
    bit_rule = Unicode('linear', help="Feedback bits per SNR point: linear[:offset], fixed:B or list:B1,...").tag(config=True)
    rvq_bit_rule = Unicode(None, allow_none=True, help="Bit rule override for the RVQ scheme").tag(config=True)
    schemes = List(Unicode(), default_value=list(SCHEMES), help="Schemes to evaluate").tag(config=True)

    trials = Integer(500, help="Monte Carlo trials per grid point").tag(config=True)
    master_seed = Integer(42, help="Master seed of every random stream").tag(config=True)
    gap_target_bps = Float(None, allow_none=True, help="Rate gap target in bps/Hz for the required-bits search").tag(config=True)

    shared_correlation = Bool(False, help="Use one correlation model for every user and trial").tag(config=True)
    fixed_codebook = Bool(False, help="Reuse each user's codebook across trials").tag(config=True)
    codebook_form = Enum(['reduced', 'full'], 'reduced', help="Statistics codebook storage form").tag(config=True)
    rvq_sampler = Enum([SAMPLER_ORDER_STATISTIC, SAMPLER_SCAN], SAMPLER_ORDER_STATISTIC,
                       help="Draw the RVQ winner from its order-statistic law or scan the codebook").tag(config=True)
    statistics_sampler = Enum([SAMPLER_AUTO, SAMPLER_ORDER_STATISTIC, SAMPLER_SCAN], SAMPLER_AUTO,
                              help="Same choice for statistics codebooks; auto samples equal profiles").tag(config=True)
    assert_lemma1 = Bool(False, help="Check the per-sample interference bound on every trial").tag(config=True)
    max_bits = Integer(DEFAULT_MAX_BITS, help="Largest codebook B that may be built").tag(config=True)
    workers = Integer(0, help="Worker processes, 0 for one per CPU").tag(config=True)

    @validate('num_antennas', 'num_users', 'rank', 'trials')
    def _positive(self, proposal):
        if proposal['value'] < 1:
            raise InvalidArgumentError("{} must be positive, got {}".format(proposal['trait'].name, proposal['value']))
        return proposal['value']

    @validate('master_seed', 'workers', 'max_bits')
    def _non_negative(self, proposal):
        if proposal['value'] < 0:
            raise InvalidArgumentError("{} must be non-negative, got {}".format(proposal['trait'].name, proposal['value']))
        return proposal['value']

    @validate('trace_target', 'gap_target_bps')
    def _positive_or_none(self, proposal):
        value = proposal['value']
        if value is not None and not value > 0:
            raise InvalidArgumentError("{} must be positive, got {}".format(proposal['trait'].name, value))
        return value

    @validate('snr_grid_db')
    def _grid(self, proposal):
        if not proposal['value']:
            raise InvalidArgumentError("SNR grid must not be empty")
        if not all(np.isfinite(proposal['value'])):
            raise InvalidArgumentError("SNR grid must be finite, got {}".format(repr(proposal['value'])))
        return proposal['value']

    @validate('schemes')
    def _schemes(self, proposal):
        schemes = []
        for name in proposal['value']:
            name = canonical_scheme(name)
            if name not in schemes:
                schemes.append(name)
        if not schemes:
            raise InvalidArgumentError("At least one scheme is needed")
        return schemes

    @validate('bit_rule', 'rvq_bit_rule')
    def _bit_rule(self, proposal):
        if proposal['value'] is not None:
            BitRule.parse(proposal['value'])
        return proposal['value']

    def check(self):
        """Cross-field validation; raises InvalidArgumentError."""
        M, K, r = self.num_antennas, self.num_users, self.rank
        if r > M:
            raise InvalidArgumentError("Rank {} exceeds the number of antennas {}".format(r, M))
        if K > M:
            raise InvalidArgumentError("Zero-forcing needs users <= antennas, got K={} M={}".format(K, M))
        SingularValueProfile.parse(self.profile).sigma(r)
        for rule in (self.bit_rule, self.rvq_bit_rule):
            if rule is None:
                continue
            parsed = BitRule.parse(rule)
            if parsed.kind == 'list' and len(parsed.values) != len(self.snr_grid_db):
                raise InvalidArgumentError("Bit list {} has {} entries for {} SNR points".format(
                    rule, len(parsed.values), len(self.snr_grid_db)))
        if self.shared_correlation and r < K:
            raise InvalidArgumentError(
                "Shared correlation puts all channels in one rank {} subspace; zero-forcing {} users needs rank >= users".format(r, K))
        if self.shared_correlation and SCHEME_EIGEN in self.schemes and K > 1:
            raise InvalidArgumentError("Eigen-baseline with a shared correlation feeds back one direction for all users")
        return self

    def rule_for(self, scheme):
        if scheme == SCHEME_RVQ and self.rvq_bit_rule is not None:
            return BitRule.parse(self.rvq_bit_rule)
        return BitRule.parse(self.bit_rule)

    def bits_for(self, snr_db, scheme):
        """(B, unrounded B) for an SNR value and scheme; only list rules need `snr_db` on the grid."""
        if scheme == SCHEME_IDEAL:
            return 0, 0.0
        if scheme == SCHEME_EIGEN:
            return 0, 0.0
        rule = self.rule_for(scheme)
        if rule.kind != 'list':
            return rule.bits(None, snr_db, self.rank)
        matches = np.flatnonzero(np.isclose(self.snr_grid_db, snr_db, rtol=0.0, atol=1e-9))
        if len(matches) == 0:
            raise InvalidArgumentError("SNR {} is not on the grid {}".format(snr_db, self.snr_grid_db))
        return rule.bits(int(matches[0]), snr_db, self.rank)

    def sampler_for(self, scheme):
        if self.fixed_codebook:
            return SAMPLER_SCAN
        if scheme == SCHEME_RVQ:
            return self.rvq_sampler
        if self.statistics_sampler == SAMPLER_AUTO:
            equal = SingularValueProfile.parse(self.profile).kind == 'equal'
            return SAMPLER_ORDER_STATISTIC if equal else SAMPLER_SCAN
        return self.statistics_sampler

    @property
    def mean_channel_gain(self):
        return float(self.num_antennas) if self.trace_target is None else self.trace_target

    def snapshot(self):
        return dict((name, getattr(self, name)) for name in sorted(self.trait_names(config=True)))

    @classmethod
    def from_snapshot(cls, snapshot):
        return cls(**snapshot)

    def derive(self, **changes):
        snapshot = self.snapshot()
        snapshot.update(changes)
        return self.from_snapshot(snapshot)

    def config_hash(self):
        snapshot = self.snapshot()
        # worker count never changes results
        snapshot.pop('workers')
        text = json.dumps(snapshot, sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def __repr__(self):
        return "<ExperimentConfig: {}>".format(repr(self.snapshot()))


def resolve_workers(requested):
    """Worker processes to use: `requested` (0 = one per CPU), capped by MIMO_FB_THREADS."""
    workers = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV, '').strip()
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise InvalidArgumentError("{} must be an integer, got {}".format(THREADS_ENV, repr(cap)))
        if cap < 0:
            raise InvalidArgumentError("{} must be non-negative, got {}".format(THREADS_ENV, cap))
        if cap > 0:
            workers = min(workers, cap)
    return workers


def read_config_file(path):
    """Flat key=value lines, '#' starts a comment. Returns an ordered list of (key, value)."""
    try:
        with open(path) as f:
            lines = f.readlines()
    except (IOError, OSError) as e:
        raise_with_traceback(UsageError("Failed to read config file {}: {}".format(path, repr(e))))

    settings = []
    for number, line in enumerate(lines, 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise UsageError("{}:{}: expected key=value, got {}".format(path, number, repr(line)))
        settings.append((key.strip(), value.strip()))
    return settings
