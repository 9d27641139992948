"""Seeded Monte Carlo harness: rate-vs-SNR curves, the required-bits search
and the bound-check suite.

Every trial is a pure function of (config, trial index). Trials run in
blocks on a process pool and are aggregated in trial-index order, so the
output does not depend on the worker count.
"""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import linregress
from traitlets import Integer
from traitlets.config import LoggingConfigurable
from traitlets.log import get_logger

from . import bounds
from .bounds import rate_gap_bound, required_bits
from .channel import calibrate_power, channel_matrix, draw_channel, make_correlation
from .codebook import (KIND_CODES, KIND_RVQ, KIND_STATISTICS, build_eigen_baseline, check_bits, quantize,
                       sample_rvq_outcome, sample_statistics_outcome, scan_quantize)
from .config import (SAMPLER_ORDER_STATISTIC, SCHEME_EIGEN, SCHEME_IDEAL, SCHEME_RVQ, SCHEME_STATISTICS,
                     ExperimentConfig, resolve_workers)
from .errors import InvalidArgumentError, NumericError, ResourceLimitError, SingularChannelError
from .precoding import SOURCE_IDEAL, evaluate_rates, lemma1_witness, zf_precoder
from .streams import (ROLE_CHANNEL, ROLE_CODEBOOK, ROLE_CORRELATION, ROLE_ORDER_STATISTIC, ROLE_SUITE,
                      derive_seed, make_stream)


__version__ = '1.0.0'


class TrialResult:

    def __init__(self, trial_index, snr_db, rates, quant_errors, bits):
        self.trial_index = trial_index
        self.snr_db = snr_db
        # scheme -> mean per-user rate, None when the trial was discarded
        self.rates = rates
        self.quant_errors = quant_errors
        self.bits = bits

    @property
    def discarded(self):
        return sorted(scheme for scheme, rate in self.rates.items() if rate is None)

    def __repr__(self):
        return "<TrialResult: {}>".format(repr((self.trial_index, self.snr_db, self.rates, self.bits)))


class TrialJournal:

    def __init__(self, log):
        self.log = log
        self.history = []

    def add(self, result):
        self.history.append(result)
        for scheme in result.discarded:
            self.log.warning("Discarded trial {} at {} dB for {}: singular channel matrix".format(
                result.trial_index, result.snr_db, scheme))
        return result

    def valid(self, scheme):
        return list(filter(lambda r: r.rates.get(scheme) is not None, self.history))

    def count_discarded(self, scheme):
        return len(self.history) - len(self.valid(scheme))


class TrialDraw:

    def __init__(self, trial_index, models, samples, codebook_seeds):
        self.trial_index = trial_index
        self.models = models
        self.samples = samples
        self.codebook_seeds = codebook_seeds


def shared_model(cfg):
    return make_correlation(cfg.num_antennas, cfg.rank, cfg.profile,
                            derive_seed(make_stream(cfg.master_seed, ROLE_CORRELATION)), cfg.trace_target)


def draw_trial(cfg, trial_index, model=None):
    """Correlation models, channels and codebook seeds of one trial; none of them depend on the SNR."""
    seed, K = cfg.master_seed, cfg.num_users
    if cfg.shared_correlation:
        models = [model or shared_model(cfg)] * K
    else:
        models = [
            make_correlation(cfg.num_antennas, cfg.rank, cfg.profile,
                             derive_seed(make_stream(seed, trial_index, ROLE_CORRELATION, k)), cfg.trace_target)
            for k in range(K)
        ]
    samples = [draw_channel(models[k], make_stream(seed, trial_index, ROLE_CHANNEL, k)) for k in range(K)]
    if cfg.fixed_codebook:
        codebook_seeds = [derive_seed(make_stream(seed, ROLE_CODEBOOK, k)) for k in range(K)]
    else:
        codebook_seeds = [derive_seed(make_stream(seed, trial_index, ROLE_CODEBOOK, k)) for k in range(K)]
    return TrialDraw(trial_index, models, samples, codebook_seeds)


def _feedback(cfg, draw, scheme, bits, k):
    sample, model = draw.samples[k], draw.models[k]
    if scheme == SCHEME_EIGEN:
        return quantize(sample, build_eigen_baseline(model))

    check_bits(bits, cfg.max_bits)
    if cfg.sampler_for(scheme) == SAMPLER_ORDER_STATISTIC:
        rng = make_stream(cfg.master_seed, draw.trial_index, ROLE_ORDER_STATISTIC, k, KIND_CODES[scheme], bits)
        if scheme == SCHEME_RVQ:
            return sample_rvq_outcome(sample, bits, rng)
        return sample_statistics_outcome(sample, model, bits, rng)

    if scheme == SCHEME_RVQ:
        return scan_quantize(sample, KIND_RVQ, bits, draw.codebook_seeds[k], max_bits=cfg.max_bits)
    return scan_quantize(sample, KIND_STATISTICS, bits, draw.codebook_seeds[k], model,
                         form=cfg.codebook_form, max_bits=cfg.max_bits)


def evaluate_trial(cfg, draw, snr_db):
    calibration = calibrate_power(snr_db, cfg.num_users, cfg.mean_channel_gain)
    H = channel_matrix(draw.samples)
    rates, quant_errors, used_bits = {}, {SCHEME_IDEAL: 0.0}, {SCHEME_IDEAL: 0}

    # the ideal rate is always needed for the gap
    try:
        rates[SCHEME_IDEAL] = evaluate_rates(H, zf_precoder(H, SOURCE_IDEAL), calibration).mean_rate
    except SingularChannelError:
        rates[SCHEME_IDEAL] = None

    for scheme in cfg.schemes:
        if scheme == SCHEME_IDEAL:
            continue
        bits, _ = cfg.bits_for(snr_db, scheme)
        outcomes = [_feedback(cfg, draw, scheme, bits, k) for k in range(cfg.num_users)]
        quant_errors[scheme] = float(np.mean([o.quantization_error for o in outcomes]))
        used_bits[scheme] = bits
        try:
            precoder = zf_precoder(np.column_stack([o.feedback_vector for o in outcomes]))
        except SingularChannelError:
            rates[scheme] = None
            continue
        if cfg.assert_lemma1:
            for k in range(cfg.num_users):
                lemma1_witness(draw.samples[k], outcomes[k], precoder, k)
        rates[scheme] = evaluate_rates(H, precoder, calibration).mean_rate

    return TrialResult(draw.trial_index, snr_db, rates, quant_errors, used_bits)


def run_trial(cfg, snr_db, trial_index):
    """Per-scheme mean per-user rates of one trial at one SNR point."""
    return evaluate_trial(cfg, draw_trial(cfg, trial_index), snr_db)


def _run_trial_block(task):
    snapshot, trial_indices, snr_points = task
    cfg = ExperimentConfig.from_snapshot(snapshot)
    model = shared_model(cfg) if cfg.shared_correlation else None
    results = []
    for trial_index in trial_indices:
        draw = draw_trial(cfg, trial_index, model)
        results.append([evaluate_trial(cfg, draw, snr_db) for snr_db in snr_points])
    return results


def provenance(cfg):
    snapshot = cfg.snapshot()
    snapshot.pop('workers')
    return {
        'config_hash': cfg.config_hash(),
        'seed': cfg.master_seed,
        'version': __version__,
        'config': snapshot,
    }


class SweepRecord:
    COLUMNS = ['snr_db', 'scheme', 'bits', 'mean_rate', 'rate_stderr', 'mean_quant_error',
               'gap_vs_ideal', 'gap_bound', 'discarded']

    def __init__(self, snr_db, scheme, bits, mean_rate, rate_stderr, mean_quant_error, gap_vs_ideal, gap_bound,
                 discarded, trials=None, quant_error_stderr=None):
        self.snr_db = float(snr_db)
        self.scheme = scheme
        self.bits = int(bits)
        self.mean_rate = float(mean_rate)
        self.rate_stderr = float(rate_stderr)
        self.mean_quant_error = float(mean_quant_error)
        self.gap_vs_ideal = float(gap_vs_ideal)
        self.gap_bound = float(gap_bound)
        self.discarded = int(discarded)
        self.trials = trials
        # not a CSV column
        self.quant_error_stderr = quant_error_stderr

    @property
    def valid(self):
        return None if self.trials is None else self.trials - self.discarded

    def row(self):
        return [getattr(self, name) for name in self.COLUMNS]

    @classmethod
    def from_row(cls, row):
        return cls(float(row['snr_db']), row['scheme'], int(row['bits']), float(row['mean_rate']),
                   float(row['rate_stderr']), float(row['mean_quant_error']), float(row['gap_vs_ideal']),
                   float(row['gap_bound']), int(row['discarded']))

    def to_dict(self):
        return dict(zip(self.COLUMNS, self.row()))

    def __repr__(self):
        return "<SweepRecord: {}>".format(repr(self.row()))


class SweepResult:
    COLUMNS = SweepRecord.COLUMNS
    record_class = SweepRecord

    def __init__(self, records, provenance):
        self.records = sorted(records, key=lambda r: (r.snr_db, r.scheme))
        self.provenance = provenance

    def find(self, snr_db, scheme):
        for record in self.records:
            if abs(record.snr_db - snr_db) < 1e-9 and record.scheme == scheme:
                return record
        return None

    def rows(self):
        return [record.row() for record in self.records]

    def trailer(self):
        return []

    def to_dict(self):
        return {'provenance': self.provenance, 'records': [r.to_dict() for r in self.records]}


class RequiredBitsRecord:
    COLUMNS = ['rank', 'bits', 'measured_gap', 'gap_target', 'formula_bits', 'reachable', 'note']

    def __init__(self, rank, bits, measured_gap, gap_target, formula_bits, reachable, note=''):
        self.rank = rank
        self.bits = bits
        self.measured_gap = measured_gap
        self.gap_target = gap_target
        self.formula_bits = formula_bits
        self.reachable = reachable
        self.note = note

    def row(self):
        return [getattr(self, name) for name in self.COLUMNS]

    def to_dict(self):
        return dict(zip(self.COLUMNS, self.row()))

    def __repr__(self):
        return "<RequiredBitsRecord: {}>".format(repr(self.row()))


class RequiredBitsResult:
    COLUMNS = RequiredBitsRecord.COLUMNS

    def __init__(self, records, fit, provenance):
        self.records = sorted(records, key=lambda r: r.rank)
        self.fit = fit
        self.provenance = provenance

    def rows(self):
        return [record.row() for record in self.records]

    def trailer(self):
        if self.fit is None:
            return []
        return ["fit slope={:.6g}, intercept={:.6g}, r_squared={:.6g}".format(
            self.fit['slope'], self.fit['intercept'], self.fit['r_squared'])]

    def to_dict(self):
        return {'provenance': self.provenance, 'records': [r.to_dict() for r in self.records], 'fit': self.fit}


class BoundSuiteResult:
    COLUMNS = ['name', 'inputs', 'bound', 'empirical', 'slack', 'satisfied']

    def __init__(self, reports, provenance):
        self.reports = reports
        self.provenance = provenance

    @property
    def satisfied(self):
        return all(report.satisfied for report in self.reports)

    def rows(self):
        return [[r.name, r.inputs, r.bound_value, r.empirical_value, r.slack, r.satisfied] for r in self.reports]

    def trailer(self):
        return ["{} of {} checks satisfied".format(sum(r.satisfied for r in self.reports), len(self.reports))]

    def to_dict(self):
        return {'provenance': self.provenance, 'reports': [r.to_dict() for r in self.reports],
                'satisfied': self.satisfied}


def log_numeric_failure(function):
    def wrapper(self, *args, **kwargs):
        try:
            return function(self, *args, **kwargs)
        except NumericError:
            self.log.exception("Numeric failure in {}".format(function.__name__))
            raise

    return wrapper


def effective_rank(cfg, scheme):
    if scheme == SCHEME_IDEAL:
        return 0
    if scheme == SCHEME_RVQ:
        # an RVQ codebook is the statistics codebook of R = I
        return cfg.num_antennas
    return cfg.rank


class ExperimentRunner(LoggingConfigurable):

    block_size = Integer(25, help="Trials per worker task").tag(config=True)

    def _collect(self, cfg, snr_points):
        """TrialResults indexed [trial][snr point], in trial order."""
        blocks = [list(range(start, min(start + self.block_size, cfg.trials)))
                  for start in range(0, cfg.trials, self.block_size)]
        snapshot = cfg.snapshot()
        tasks = [(snapshot, block, list(snr_points)) for block in blocks]
        workers = min(resolve_workers(cfg.workers), len(tasks))
        self.log.debug("Running {} trials in {} blocks on {} worker(s)".format(cfg.trials, len(tasks), workers))

        if workers <= 1:
            results = [_run_trial_block(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(_run_trial_block, tasks))
        return [trial for block in results for trial in block]

    def _aggregate(self, cfg, journal, snr_db, scheme):
        calibration = calibrate_power(snr_db, cfg.num_users, cfg.mean_channel_gain)
        bits, _ = cfg.bits_for(snr_db, scheme)
        valid = journal.valid(scheme)
        rates = np.array([r.rates[scheme] for r in valid])
        n = len(rates)
        if n == 0:
            self.log.warning("Every trial at {} dB was discarded for {}".format(snr_db, scheme))

        mean_rate = float(np.mean(rates)) if n else float('nan')
        stderr = float(np.std(rates, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        quant_errors = np.array([r.quant_errors[scheme] for r in valid])
        mean_quant_error = float(np.mean(quant_errors)) if n else float('nan')
        quant_error_stderr = float(np.std(quant_errors, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        paired = [r for r in valid if r.rates[SCHEME_IDEAL] is not None]
        if scheme == SCHEME_IDEAL:
            gap = 0.0
        elif paired:
            gap = float(np.mean(np.array([r.rates[SCHEME_IDEAL] - r.rates[scheme] for r in paired])))
        else:
            gap = float('nan')
        rank = effective_rank(cfg, scheme)
        gap_bound = rate_gap_bound(calibration, bits, rank) if rank else 0.0
        return SweepRecord(snr_db, scheme, bits, mean_rate, stderr, mean_quant_error, gap, gap_bound,
                           journal.count_discarded(scheme), trials=len(journal.history),
                           quant_error_stderr=quant_error_stderr)

    @log_numeric_failure
    def run_rate_curve(self, cfg):
        cfg.check()
        for snr_db in cfg.snr_grid_db:
            for scheme in cfg.schemes:
                bits, raw = cfg.bits_for(snr_db, scheme)
                if raw != bits:
                    self.log.info("SNR {} dB, {}: using B={} for the unrounded {:.4g}".format(snr_db, scheme, bits, raw))

        per_trial = self._collect(cfg, cfg.snr_grid_db)
        records = []
        for j, snr_db in enumerate(cfg.snr_grid_db):
            journal = TrialJournal(self.log)
            for row in per_trial:
                journal.add(row[j])
            point = [self._aggregate(cfg, journal, snr_db, scheme) for scheme in cfg.schemes]
            records += point
            self.log.info("SNR {} dB: {}".format(snr_db, ", ".join(
                "{} B={} rate={:.4g} gap={:.4g}".format(r.scheme, r.bits, r.mean_rate, r.gap_vs_ideal) for r in point)))
        return SweepResult(records, provenance(cfg))

    @log_numeric_failure
    def find_required_bits(self, cfg, r_values):
        if cfg.gap_target_bps is None:
            raise InvalidArgumentError("The required-bits search needs a gap target")
        if len(cfg.snr_grid_db) != 1:
            raise InvalidArgumentError("The required-bits search runs at one SNR point, got {}".format(cfg.snr_grid_db))
        snr_db, target = cfg.snr_grid_db[0], cfg.gap_target_bps

        records = []
        for r in r_values:
            if not 1 <= r <= cfg.num_antennas:
                raise InvalidArgumentError("Rank must be within [1, {}], got {}".format(cfg.num_antennas, r))
            if r == 1:
                self.log.info("Rank 1: the channel direction is fed back exactly, B=0")
                records.append(RequiredBitsRecord(1, 0, 0.0, target, 0.0, True, 'rank-one channel, exact feedback'))
                continue
            formula = required_bits(snr_db, cfg.num_users, r, 2.0 ** target)
            records.append(self._search_bits(cfg, r, snr_db, target, formula))

        fit = None
        reachable = [record for record in records if record.reachable]
        if len(set(record.rank for record in reachable)) >= 2:
            regression = linregress([record.rank for record in reachable], [record.bits for record in reachable])
            fit = {'slope': float(regression.slope), 'intercept': float(regression.intercept),
                   'r_squared': float(regression.rvalue ** 2)}
            self.log.info("Required bits fit: {}".format(repr(fit)))
        return RequiredBitsResult(records, fit, provenance(cfg))

    def _search_bits(self, cfg, r, snr_db, target, formula):
        gap = None
        for bits in range(1, cfg.max_bits + 1):
            point_cfg = cfg.derive(rank=r, bit_rule='fixed:{}'.format(bits), rvq_bit_rule=None,
                                   schemes=[SCHEME_IDEAL, SCHEME_STATISTICS])
            try:
                record = self.run_rate_curve(point_cfg).find(snr_db, SCHEME_STATISTICS)
            except ResourceLimitError:
                self.log.warning("Rank {}: B={} is over the codebook guard".format(r, bits))
                break
            gap = record.gap_vs_ideal
            self.log.debug("Rank {}, B={}: measured gap {:.4g}".format(r, bits, gap))
            if gap <= target:
                self.log.info("Rank {}: B={} reaches gap {:.4g} <= {} (formula {:.4g})".format(r, bits, gap, target, formula))
                return RequiredBitsRecord(r, bits, gap, target, formula, True)

        self.log.info("Rank {}: gap {} not reachable with B <= {}".format(r, target, cfg.max_bits))
        return RequiredBitsRecord(r, None, gap, target, formula, False,
                                  'not reachable <= B_max={}'.format(cfg.max_bits))


SUITE_CODES = {
    'sphere_cdf': 1,
    'max_z_cdf': 2,
    'quantization_error': 3,
    'order_statistic': 4,
    'dominance': 5,
    'extreme_ellipse': 6,
    'beta_chain': 7,
    'monotonicity': 8,
}

DOMINANCE_RANKS = (2, 3, 4, 6)

DEFAULT_LATTICE = {
    'sphere_cdf': [{'r': 4, 'n': 100000}],
    'quantization_error': [{'r': r, 'bits': b, 'n': 10000} for r in (2, 3, 4) for b in (2, 4, 6, 8, 10)],
    'max_z_cdf': [{'r': r, 'bits': b, 'n': 4000} for r in (2, 4) for b in (2, 6)],
    'order_statistic': [{'r': r, 'bits': b, 'n': 20000} for r in (2, 4) for b in (1, 3)],
    'dominance': [{'draw': i, 'n': 100000} for i in range(20)],
    'extreme_ellipse': [{'r': r, 'n': 100000} for r in (3, 4, 6)],
    'beta_chain': [{'bits': b, 'r': r} for b in range(21) for r in range(2, 9)],
    'monotonicity': [{}],
}

QUICK_LATTICE = {
    'sphere_cdf': [{'r': 4, 'n': 20000, 'threshold': 0.02}],
    'quantization_error': [{'r': r, 'bits': b, 'n': 500} for r in (2, 4) for b in (2, 6)],
    'max_z_cdf': [{'r': 3, 'bits': 3, 'n': 500}],
    'order_statistic': [{'r': 3, 'bits': 2, 'n': 5000}],
    'dominance': [{'draw': i, 'n': 20000} for i in range(4)],
    'extreme_ellipse': [{'r': 4, 'n': 20000, 'threshold': 0.02}],
    'beta_chain': [{'bits': b, 'r': r} for b in (0, 5, 20) for r in (2, 8)],
    'monotonicity': [{}],
}


def random_stretch(rng, draw):
    """Diagonal of a random Gamma: log-uniform entries in [0.1, 1], rank cycling through DOMINANCE_RANKS."""
    r = DOMINANCE_RANKS[draw % len(DOMINANCE_RANKS)]
    return np.exp(rng.uniform(math.log(0.1), 0.0, r))


class BoundSuite(LoggingConfigurable):

    num_antennas = Integer(64, help="Antennas for the full-pipeline checks").tag(config=True)

    def _run_check(self, name, params, seed):
        if name == 'sphere_cdf':
            return bounds.check_sphere_cdf(params['r'], params['n'], seed, params.get('threshold'))
        if name == 'quantization_error':
            return bounds.check_quantization_error(params['r'], params['bits'], params['n'], seed, self.num_antennas)
        if name == 'max_z_cdf':
            return bounds.check_max_z_cdf(params['r'], params['bits'], params['n'], seed, self.num_antennas)
        if name == 'order_statistic':
            return bounds.check_order_statistic(params['r'], params['bits'], params['n'], seed)
        if name == 'dominance':
            gamma = random_stretch(make_stream(seed, ROLE_SUITE), params['draw'])
            return bounds.check_dominance(gamma, params['n'], seed)
        if name == 'extreme_ellipse':
            return bounds.check_extreme_ellipse(params['r'], params['n'], seed, threshold=params.get('threshold'))
        if name == 'beta_chain':
            return bounds.beta_chain_check(params['bits'], params['r'])
        return bounds.check_monotonicity()

    @log_numeric_failure
    def run_bound_suite(self, seed, lattice=None):
        lattice = DEFAULT_LATTICE if lattice is None else lattice
        reports = []
        for name in sorted(lattice, key=lambda n: SUITE_CODES.get(n, 0)):
            if name not in SUITE_CODES:
                raise InvalidArgumentError("Unknown bound check: {}".format(repr(name)))
            for i, params in enumerate(lattice[name]):
                report = self._run_check(name, params, derive_seed(make_stream(seed, ROLE_SUITE, SUITE_CODES[name], i)))
                if not report.satisfied:
                    self.log.warning("Bound check failed: {}".format(report.to_json()))
                reports.append(report)
            self.log.info("Bound checks {}: {} run".format(name, len(lattice[name])))
        self.log.info("{} of {} bound checks satisfied".format(sum(r.satisfied for r in reports), len(reports)))
        return reports


def run_bound_suite(seed, lattice=None):
    return BoundSuite().run_bound_suite(seed, lattice)


def bound_suite_result(seed, reports):
    return BoundSuiteResult(reports, {'seed': seed, 'version': __version__})


def quantize_demo(cfg):
    """One channel draw quantized with a statistics and an RVQ codebook; JSON ready dict."""
    cfg.check()
    model = shared_model(cfg)
    sample = draw_channel(model, make_stream(cfg.master_seed, 0, ROLE_CHANNEL, 0))
    seed = derive_seed(make_stream(cfg.master_seed, 0, ROLE_CODEBOOK, 0))
    document = {'model': model.to_dict(), 'channel_norm_sq': sample.norm_sq, 'seed': cfg.master_seed}
    for scheme in (SCHEME_STATISTICS, SCHEME_RVQ):
        bits, _ = cfg.bits_for(cfg.snr_grid_db[0], scheme)
        draw = TrialDraw(0, [model], [sample], [seed])
        outcome = _feedback(cfg, draw, scheme, bits, 0)
        rank = effective_rank(cfg, scheme)
        document[scheme] = {
            'bits': bits,
            'sampler': cfg.sampler_for(scheme),
            'index': outcome.index,
            'squared_cosine': outcome.squared_cosine,
            'quantization_error': outcome.quantization_error,
            'error_bound': bounds.quant_error_bound(bits, rank),
        }
    get_logger().debug("Quantize demo: {}".format(repr(document)))
    return document
