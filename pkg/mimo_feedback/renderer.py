from __future__ import unicode_literals

import csv
import io
import json
import sys

from future.utils import raise_with_traceback

from .errors import InvalidArgumentError, OutputError
from .experiments import SweepRecord, SweepResult


FORMAT_CSV = 'csv'
FORMAT_JSON = 'json'
FORMATS = (FORMAT_CSV, FORMAT_JSON)

STDOUT_PATH = '-'

PROVENANCE_TEMPLATE = "# config-hash={}, seed={}\n"
TRAILER_TEMPLATE = "# {}\n"


class Renderer:

    def format_value(self, value):
        if value is None:
            return ''
        if isinstance(value, bool):
            return 'true' if value else 'false'
        if isinstance(value, int):
            return str(value)
        if isinstance(value, float):
            return "{:.6g}".format(value)
        if isinstance(value, (dict, list, tuple)):
            return json.dumps(value, sort_keys=True, separators=(',', ':'))
        return str(value)

    def render_provenance(self, provenance):
        return PROVENANCE_TEMPLATE.format(provenance.get('config_hash', '-'), provenance.get('seed', '-'))

    def render_csv(self, result):
        out = io.StringIO()
        out.write(self.render_provenance(result.provenance))
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(result.COLUMNS)
        for row in result.rows():
            writer.writerow([self.format_value(value) for value in row])
        for line in result.trailer():
            out.write(TRAILER_TEMPLATE.format(line))
        return out.getvalue()

    def render_json(self, result):
        document = result if isinstance(result, dict) else result.to_dict()
        return json.dumps(document, sort_keys=True, indent=2) + "\n"

    def render(self, result, fmt):
        if fmt == FORMAT_CSV:
            return self.render_csv(result)
        if fmt == FORMAT_JSON:
            return self.render_json(result)
        raise InvalidArgumentError("Unknown output format: {}".format(repr(fmt)))

    def write(self, text, path):
        if path in (None, STDOUT_PATH):
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        try:
            with io.open(path, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except (IOError, OSError) as e:
            raise_with_traceback(OutputError("Failed to write results: {}".format(repr(e)), path))

    def write_sweep(self, result, fmt, path):
        self.write(self.render(result, fmt), path)

    def parse_sweep_csv(self, text):
        lines = text.splitlines()
        provenance = {}
        if lines and lines[0].startswith('#'):
            for item in lines[0].lstrip('#').split(','):
                key, _, value = item.strip().partition('=')
                provenance[key.replace('-', '_')] = value
            if provenance.get('seed', '').isdigit():
                provenance['seed'] = int(provenance['seed'])

        body = [line for line in lines if not line.startswith('#')]
        if not body:
            raise InvalidArgumentError("Sweep CSV has no header row")
        reader = csv.DictReader(body)
        if reader.fieldnames != SweepRecord.COLUMNS:
            raise InvalidArgumentError("Unexpected sweep CSV header: {}".format(repr(reader.fieldnames)))
        return SweepResult([SweepRecord.from_row(row) for row in reader], provenance)

    def read_sweep_csv(self, path):
        try:
            with io.open(path, 'r', encoding='utf-8', newline='') as f:
                text = f.read()
        except (IOError, OSError) as e:
            raise_with_traceback(OutputError("Failed to read sweep: {}".format(repr(e)), path))
        return self.parse_sweep_csv(text)
