import argparse
import logging
import math
import sys

from traitlets import TraitError
from traitlets.log import get_logger

from .config import ExperimentConfig, canonical_scheme, read_config_file
from .errors import FeedbackSimError, InvalidArgumentError, UsageError
from .experiments import (DEFAULT_LATTICE, QUICK_LATTICE, BoundSuite, ExperimentRunner, bound_suite_result,
                          quantize_demo)
from .renderer import FORMAT_CSV, FORMATS, STDOUT_PATH, Renderer


SUBCOMMAND_RATE_CURVE = 'rate-curve'
SUBCOMMAND_REQUIRED_BITS = 'required-bits'
SUBCOMMAND_BOUND_SUITE = 'bound-suite'
SUBCOMMAND_QUANTIZE_DEMO = 'quantize-demo'

LATTICES = {'default': DEFAULT_LATTICE, 'quick': QUICK_LATTICE}

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError("{}: {}".format(self.prog, message))


def _positive_int(text):
    value = _integer(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer, got {}".format(repr(text)))
    return value


def _non_negative_int(text):
    value = _integer(text)
    if value < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer, got {}".format(repr(text)))
    return value


def _integer(text):
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, got {}".format(repr(text)))


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number, got {}".format(repr(text)))
    if not value > 0:
        raise argparse.ArgumentTypeError("expected a positive number, got {}".format(repr(text)))
    return value


def _boolean(text):
    lowered = str(text).strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise argparse.ArgumentTypeError("expected true or false, got {}".format(repr(text)))


def parse_snr_grid(text):
    """'start:stop:step' (stop included when reached exactly) or a comma list."""
    try:
        if ':' in text:
            start, stop, step = [float(v) for v in text.split(':')]
            if not step > 0 or stop < start:
                raise ValueError(text)
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        return [float(v) for v in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:stop:step or a comma list, got {}".format(repr(text)))


def parse_bit_rule(text):
    """A bit rule, or a bare B / comma list as shorthand for fixed:B / list:..."""
    text = text.strip()
    if ',' in text and ':' not in text:
        return "list:{}".format(text)
    if text.isdigit():
        return "fixed:{}".format(text)
    return text


def parse_schemes(text):
    try:
        return [canonical_scheme(name) for name in text.split(',') if name.strip()]
    except InvalidArgumentError as e:
        raise argparse.ArgumentTypeError(str(e))


def _choice(*values):
    def parse(text):
        if text not in values:
            raise argparse.ArgumentTypeError("expected one of {}, got {}".format(", ".join(values), repr(text)))
        return text
    return parse


def parse_ranks(text):
    try:
        ranks = [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma list of ranks, got {}".format(repr(text)))
    if any(r < 1 for r in ranks):
        raise argparse.ArgumentTypeError("ranks must be positive, got {}".format(repr(text)))
    return ranks


# flag / config file key -> (ExperimentConfig trait, value parser)
SETTINGS = [
    ('antennas', 'num_antennas', _positive_int),
    ('users', 'num_users', _positive_int),
    ('rank', 'rank', _positive_int),
    ('profile', 'profile', str),
    ('trace-target', 'trace_target', _positive_float),
    ('snr', 'snr_grid_db', parse_snr_grid),
    ('bits', 'bit_rule', parse_bit_rule),
    ('rvq-bits', 'rvq_bit_rule', parse_bit_rule),
    ('schemes', 'schemes', parse_schemes),
    ('trials', 'trials', _positive_int),
    ('seed', 'master_seed', _non_negative_int),
    ('workers', 'workers', _non_negative_int),
    ('gap-target', 'gap_target_bps', _positive_float),
    ('max-bits', 'max_bits', _non_negative_int),
    ('codebook-form', 'codebook_form', _choice('reduced', 'full')),
    ('rvq-sampler', 'rvq_sampler', _choice('order-statistic', 'scan')),
    ('statistics-sampler', 'statistics_sampler', _choice('auto', 'order-statistic', 'scan')),
    ('shared-correlation', 'shared_correlation', _boolean),
    ('fixed-codebook', 'fixed_codebook', _boolean),
    ('assert-lemma1', 'assert_lemma1', _boolean),
]
SWITCHES = ('shared-correlation', 'fixed-codebook', 'assert-lemma1')

# run at one SNR point against a relaxed gap unless told otherwise
SUBCOMMAND_DEFAULTS = {
    SUBCOMMAND_REQUIRED_BITS: [('snr', '6'), ('gap-target', '0.5')],
}


def _default_text(trait):
    value = trait.default_value
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def _add_setting_arguments(parser):
    traits = ExperimentConfig.class_traits()
    for flag, trait_name, _ in SETTINGS:
        trait = traits[trait_name]
        help_text = "{} (default: {})".format(trait.help, _default_text(trait))
        if flag in SWITCHES:
            parser.add_argument('--' + flag, dest=flag, action='store_const', const='true', default=None, help=help_text)
        else:
            parser.add_argument('--' + flag, dest=flag, default=None, metavar='VALUE', help=help_text)


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help="key=value file with flag names as keys; flags override it")
    common.add_argument('--out', default=STDOUT_PATH, help="Output path, '-' for stdout (default: -)")
    common.add_argument('--format', default=FORMAT_CSV, choices=FORMATS, help="Output format (default: csv)")
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help="Log level (default: INFO)")
    _add_setting_arguments(common)

    ap = ArgumentParser(prog='mimo_feedback', description="Limited-feedback multiuser MIMO simulator and bounds")
    subparsers = ap.add_subparsers(dest='subcommand', metavar='SUBCOMMAND')
    subparsers.required = True
    subparsers.add_parser(SUBCOMMAND_RATE_CURVE, parents=[common], help="Per-user rate against SNR")
    required = subparsers.add_parser(SUBCOMMAND_REQUIRED_BITS, parents=[common],
                                     help="Smallest B meeting a gap target, per rank (defaults: --snr 6 --gap-target 0.5)")
    required.add_argument('--ranks', default='1,2,3,4', help="Comma list of ranks (default: 1,2,3,4)")
    suite = subparsers.add_parser(SUBCOMMAND_BOUND_SUITE, parents=[common], help="Check every bound empirically")
    suite.add_argument('--lattice', default='default', choices=sorted(LATTICES), help="Check lattice (default: default)")
    subparsers.add_parser(SUBCOMMAND_QUANTIZE_DEMO, parents=[common], help="Quantize one channel draw, print JSON")
    return ap


class CliInvocation:

    def __init__(self, subcommand, config_path, overrides, output_path, fmt, config, log_level, ranks=None, lattice=None):
        self.subcommand = subcommand
        self.config_path = config_path
        self.overrides = overrides
        self.output_path = output_path
        self.format = fmt
        self.config = config
        self.log_level = log_level
        self.ranks = ranks
        self.lattice = lattice

    def __repr__(self):
        return "<CliInvocation: {}>".format(repr((self.subcommand, self.config_path, self.overrides, self.output_path, self.format)))


def build_config(settings):
    """ExperimentConfig from (flag name, text) pairs, later pairs winning."""
    parsers = dict((flag, (trait_name, parse)) for flag, trait_name, parse in SETTINGS)
    values = {}
    for key, text in settings:
        if key not in parsers:
            raise UsageError("Unknown setting: {}".format(repr(key)))
        trait_name, parse = parsers[key]
        try:
            values[trait_name] = parse(text)
        except argparse.ArgumentTypeError as e:
            raise UsageError("--{}: {}".format(key, e))
    try:
        return ExperimentConfig(**values).check()
    except (InvalidArgumentError, TraitError) as e:
        raise UsageError(str(e))


def parse_cli(argv):
    args = build_parser().parse_args(argv)
    overrides = dict((flag, getattr(args, flag)) for flag, _, _ in SETTINGS if getattr(args, flag) is not None)

    settings = list(SUBCOMMAND_DEFAULTS.get(args.subcommand, []))
    if args.config:
        settings += read_config_file(args.config)
    settings += sorted(overrides.items())
    config = build_config(settings)

    ranks = None
    if args.subcommand == SUBCOMMAND_REQUIRED_BITS:
        try:
            ranks = parse_ranks(args.ranks)
        except argparse.ArgumentTypeError as e:
            raise UsageError("--ranks: {}".format(e))
    return CliInvocation(args.subcommand, args.config, overrides, args.out, args.format, config, args.log_level,
                         ranks=ranks, lattice=getattr(args, 'lattice', None))


def run(invocation):
    cfg = invocation.config
    renderer = Renderer()
    if invocation.subcommand == SUBCOMMAND_RATE_CURVE:
        result = ExperimentRunner().run_rate_curve(cfg)
    elif invocation.subcommand == SUBCOMMAND_REQUIRED_BITS:
        result = ExperimentRunner().find_required_bits(cfg, invocation.ranks)
    elif invocation.subcommand == SUBCOMMAND_BOUND_SUITE:
        reports = BoundSuite(num_antennas=cfg.num_antennas).run_bound_suite(cfg.master_seed, LATTICES[invocation.lattice])
        result = bound_suite_result(cfg.master_seed, reports)
    else:
        renderer.write(renderer.render_json(quantize_demo(cfg)), invocation.output_path)
        return
    renderer.write_sweep(result, invocation.format, invocation.output_path)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        invocation = parse_cli(argv)
    except SystemExit as e:
        # --help
        return e.code or 0
    except FeedbackSimError as e:
        sys.stderr.write("error: {}\n".format(e))
        return e.exit_code

    logging.basicConfig(level=invocation.log_level, format=LOG_FORMAT)
    log = get_logger()
    log.debug("Invocation: {}, config: {}".format(repr(invocation), repr(invocation.config)))
    try:
        run(invocation)
    except FeedbackSimError as e:
        log.error("{}: {}".format(type(e).__name__, e))
        return e.exit_code
    except Exception:
        log.exception("Unexpected failure")
        return 1
    return 0
