"""Quantization codebooks and the argmax quantizer.

Codewords are stored row-wise (one unit vector per row); `Codebook.codewords`
exposes the (M x 2^B) column view. Codebooks built from the same seed are
nested: the 2^B book is the prefix of the 2^(B+1) book.
"""

import struct

import numpy as np
from future.utils import raise_with_traceback
from traitlets.log import get_logger

from .errors import (DegenerateDecompositionError, DegenerateDrawError, InvalidArgumentError,
                     InvariantViolation, OutputError, ResourceLimitError)
from .streams import ROLE_CODEBOOK, ROLE_REDRAW, complex_gaussian, make_stream


KIND_RVQ = 'rvq'
KIND_STATISTICS = 'statistics'
KIND_EIGEN = 'eigen-baseline'
KIND_CODES = {KIND_RVQ: 0, KIND_STATISTICS: 1, KIND_EIGEN: 2}

FORM_FULL = 'full'
FORM_REDUCED = 'reduced'

DEFAULT_MAX_BITS = 26
CHUNK_BITS = 14
DEGENERATE_NORM = 1e-14
MAX_REDRAWS = 100
DECOMPOSITION_FLOOR = 1e-12
RECONSTRUCTION_TOLERANCE = 1e-10

DUMP_HEADER = struct.Struct('<4sIII')
DUMP_MAGIC = b'CBK1'


def check_bits(bits, max_bits=DEFAULT_MAX_BITS):
    if bits < 0 or int(bits) != bits:
        raise InvalidArgumentError("Number of feedback bits must be a non-negative integer, got {}".format(repr(bits)))
    if bits > max_bits:
        raise ResourceLimitError(
            "B={} exceeds the codebook guard B <= {} (2^{} codewords)".format(bits, max_bits, bits))


class Codebook:

    def __init__(self, kind, bits, rows=None, source_seed=None, correlation=None, form=FORM_FULL, coefficients=None):
        self.kind = kind
        self.bits = bits
        self.source_seed = source_seed
        self.correlation = correlation
        self.form = form
        self._rows = rows
        self.coefficients = coefficients

    @property
    def size(self):
        return len(self.coefficients if self.form == FORM_REDUCED else self._rows)

    @property
    def num_antennas(self):
        if self.form == FORM_REDUCED:
            return self.correlation.num_antennas
        return self._rows.shape[1]

    @property
    def rows(self):
        if self._rows is None:
            self._rows = self.coefficients @ self.correlation.active_basis.T
        return self._rows

    @property
    def codewords(self):
        return self.rows.T

    def codeword(self, index):
        if self.form == FORM_REDUCED:
            return self.correlation.active_basis @ self.coefficients[index]
        return self._rows[index].copy()

    def scores(self, direction):
        """|direction^H c_i|^2 for every codeword."""
        if self.form == FORM_REDUCED:
            return np.abs(self.coefficients.conj() @ self.correlation.coefficients(direction)) ** 2
        return np.abs(self._rows.conj() @ direction) ** 2

    def __repr__(self):
        return "<Codebook: kind={}, B={}, form={}, M={}, seed={}>".format(
            self.kind, self.bits, self.form, self.num_antennas, self.source_seed)


def _unit_rows(rows):
    return rows / np.linalg.norm(rows, axis=1)[:, None]


def _renormalized(rows, redraw):
    """Normalize rows, replacing rows that collapse below DEGENERATE_NORM by redraw(i, attempt)."""
    norms = np.linalg.norm(rows, axis=1)
    for i in np.flatnonzero(norms < DEGENERATE_NORM):
        for attempt in range(MAX_REDRAWS):
            candidate = redraw(i, attempt)
            norm = np.linalg.norm(candidate)
            if norm >= DEGENERATE_NORM:
                get_logger().warning("Redrew degenerate codeword {} after {} attempt(s)".format(i, attempt + 1))
                rows[i], norms[i] = candidate, norm
                break
        else:
            raise DegenerateDrawError(
                "Codeword {} stayed degenerate after {} redraws".format(i, MAX_REDRAWS))
    return rows / norms[:, None]


def _statistics_chunk(model, raw, seed, offset, form):
    if form == FORM_FULL:
        def redraw(i, attempt):
            w = complex_gaussian(make_stream(seed, ROLE_REDRAW, offset + i, attempt), (1, model.num_antennas))
            return model.apply_sqrt(_unit_rows(w))[0]
        return _renormalized(model.apply_sqrt(_unit_rows(raw)), redraw)

    def redraw(i, attempt):
        return model.singular_values * complex_gaussian(make_stream(seed, ROLE_REDRAW, offset + i, attempt), model.rank)
    return _renormalized(raw * model.singular_values, redraw)


def codeword_chunks(kind, num_antennas, bits, seed, model=None, form=FORM_FULL):
    """Yield (offset, rows) covering the 2^B codewords in order.

    Rows are unit codewords, except for reduced statistics books where they
    are unit coefficient vectors in the model's active eigenbasis.
    """
    if kind == KIND_STATISTICS and model is None:
        raise InvalidArgumentError("Statistics codebooks need a correlation model")
    rng = make_stream(seed, ROLE_CODEBOOK)
    total = 1 << bits
    for offset in range(0, total, 1 << CHUNK_BITS):
        count = min(1 << CHUNK_BITS, total - offset)
        if kind == KIND_RVQ:
            yield offset, _unit_rows(complex_gaussian(rng, (count, num_antennas)))
        elif form == FORM_FULL:
            yield offset, _statistics_chunk(model, complex_gaussian(rng, (count, num_antennas)), seed, offset, form)
        else:
            yield offset, _statistics_chunk(model, complex_gaussian(rng, (count, model.rank)), seed, offset, form)


def build_rvq(num_antennas, bits, seed, max_bits=DEFAULT_MAX_BITS):
    check_bits(bits, max_bits)
    rows = np.concatenate([rows for _, rows in codeword_chunks(KIND_RVQ, num_antennas, bits, seed)])
    return Codebook(KIND_RVQ, bits, rows=rows, source_seed=seed)


def build_statistics(model, bits, seed, form=FORM_FULL, max_bits=DEFAULT_MAX_BITS):
    check_bits(bits, max_bits)
    if form not in (FORM_FULL, FORM_REDUCED):
        raise InvalidArgumentError("Unknown codebook form: {}".format(repr(form)))
    rows = np.concatenate([
        rows for _, rows in codeword_chunks(KIND_STATISTICS, model.num_antennas, bits, seed, model, form)
    ])
    if form == FORM_REDUCED:
        return Codebook(KIND_STATISTICS, bits, source_seed=seed, correlation=model, form=form, coefficients=rows)
    return Codebook(KIND_STATISTICS, bits, rows=rows, source_seed=seed, correlation=model)


def build_eigen_baseline(model):
    # singular values are stored in non-increasing order
    principal = model.eigenbasis[:, 0]
    rows = (principal / np.linalg.norm(principal))[None, :]
    return Codebook(KIND_EIGEN, 0, rows=rows, source_seed=model.seed, correlation=model)


class QuantizationOutcome:

    def __init__(self, index, squared_cosine, codeword, channel_norm):
        self.index = index
        self.squared_cosine = min(max(float(squared_cosine), 0.0), 1.0)
        self.codeword = codeword
        self.feedback_vector = channel_norm * codeword

    @property
    def quantization_error(self):
        return 1.0 - self.squared_cosine

    def __repr__(self):
        return "<QuantizationOutcome: F={}, Z={:.6g}, X={:.6g}>".format(
            self.index, self.squared_cosine, self.quantization_error)


def _check_sample(sample, num_antennas):
    if sample.num_antennas != num_antennas:
        raise InvalidArgumentError("Channel has {} antennas, codebook has {}".format(sample.num_antennas, num_antennas))
    if not sample.norm_sq > 0:
        raise InvalidArgumentError("Cannot quantize the direction of a zero channel")


def quantize(sample, codebook):
    _check_sample(sample, codebook.num_antennas)
    scores = codebook.scores(sample.direction)
    # argmax keeps the lowest index on ties
    index = int(np.argmax(scores))
    return QuantizationOutcome(index, scores[index], codebook.codeword(index), sample.norm)


def scan_quantize(sample, kind, bits, seed, model=None, form=FORM_FULL, max_bits=DEFAULT_MAX_BITS):
    """Same outcome as quantize(sample, build_*(..., seed)) without materialising the book."""
    check_bits(bits, max_bits)
    _check_sample(sample, sample.num_antennas if model is None else model.num_antennas)
    reduced = kind == KIND_STATISTICS and form == FORM_REDUCED
    target = model.coefficients(sample.direction) if reduced else sample.direction

    best_index, best_score, best_row = -1, -1.0, None
    for offset, rows in codeword_chunks(kind, sample.num_antennas, bits, seed, model, form):
        scores = np.abs(rows.conj() @ target) ** 2
        local = int(np.argmax(scores))
        if scores[local] > best_score:
            best_index, best_score, best_row = offset + local, scores[local], rows[local].copy()

    codeword = model.active_basis @ best_row if reduced else best_row
    return QuantizationOutcome(best_index, best_score, codeword, sample.norm)


def _best_of(target, bits, rng):
    """Winner of 2^B isotropic unit vectors scored against the unit vector `target`.

    Each |target^H w_i|^2 is Beta(1, n-1) in n dimensions, so the best of 2^B
    has CDF (1 - (1-z)^(n-1))^(2^B); the winner is sqrt(Z) target + sqrt(1-Z) s
    up to a phase, with s isotropic in the orthogonal complement of target.
    """
    n = len(target)
    u = rng.random()
    if n == 1:
        squared_cosine = 1.0
    else:
        tail = -np.expm1(np.log(u) / 2.0 ** bits) if u > 0 else 1.0
        squared_cosine = 1.0 - tail ** (1.0 / (n - 1))

    spread = complex_gaussian(rng, n)
    spread = spread - np.vdot(target, spread) * target
    spread_norm = np.linalg.norm(spread)
    spread = spread / spread_norm if spread_norm > 0 else spread

    winner = np.sqrt(squared_cosine) * target + np.sqrt(1.0 - squared_cosine) * spread
    winner = np.exp(2j * np.pi * rng.random()) * winner / np.linalg.norm(winner)
    index = int(rng.integers(0, 1 << bits))
    return index, squared_cosine, winner


def sample_rvq_outcome(sample, bits, rng):
    """Draw the winning RVQ codeword from its order-statistic law instead of scanning 2^B codewords."""
    _check_sample(sample, sample.num_antennas)
    index, squared_cosine, codeword = _best_of(sample.direction, bits, rng)
    return QuantizationOutcome(index, squared_cosine, codeword, sample.norm)


def sample_statistics_outcome(sample, model, bits, rng):
    """Order-statistic draw for a statistics codebook of an equal-profile model.

    With equal singular values the codewords are isotropic in the active
    subspace, so the RVQ law applies there with n = r.
    """
    _check_sample(sample, model.num_antennas)
    if np.any(model.singular_values != model.singular_values[0]):
        raise InvalidArgumentError("Order-statistic sampling needs an equal singular value profile, got {}".format(
            model.profile.describe()))
    target = model.coefficients(sample.direction)
    target = target / np.linalg.norm(target)
    index, squared_cosine, coefficients = _best_of(target, bits, rng)
    return QuantizationOutcome(index, squared_cosine, model.active_basis @ coefficients, sample.norm)


class DirectionDecomposition:

    def __init__(self, aligned_component, residual_direction, error, phase):
        self.aligned_component = aligned_component
        self.residual_direction = residual_direction
        self.error = error
        self.phase = phase

    def reconstruct(self):
        return np.sqrt(1.0 - self.error) * self.aligned_component + np.sqrt(self.error) * self.residual_direction

    def reconstruction_error(self, direction):
        return np.linalg.norm(direction - self.reconstruct())

    def orthogonality(self):
        return abs(np.vdot(self.aligned_component, self.residual_direction))

    def __repr__(self):
        return "<DirectionDecomposition: X={:.6g}, phase={:.6g}>".format(self.error, self.phase)


def decompose(sample, outcome):
    error = outcome.quantization_error
    if error < DECOMPOSITION_FLOOR:
        raise DegenerateDecompositionError("Quantization error {:.3e} is too small to define s".format(error))

    codeword = outcome.codeword
    inner = np.vdot(codeword, sample.direction)
    residual = sample.direction - inner * codeword
    residual_norm = np.linalg.norm(residual)
    if residual_norm == 0:
        raise DegenerateDecompositionError("Channel direction lies on its codeword")

    # rotate c_F by the phase of c_F^H h~ so both coefficients are real and non-negative
    phase = float(np.angle(inner))
    decomposition = DirectionDecomposition(codeword * np.exp(1j * phase), residual / residual_norm, error, phase)

    mismatch = decomposition.reconstruction_error(sample.direction)
    if mismatch > RECONSTRUCTION_TOLERANCE:
        raise InvariantViolation("Two-term reconstruction is off by {:.3e}".format(mismatch))
    return decomposition


def dump_codebook(codebook, path):
    header = DUMP_HEADER.pack(DUMP_MAGIC, codebook.num_antennas, codebook.bits, KIND_CODES[codebook.kind])
    body = np.ascontiguousarray(codebook.rows, dtype='<c16').view('<f8').tobytes()
    try:
        with open(path, 'wb') as f:
            f.write(header)
            f.write(body)
    except (IOError, OSError) as e:
        raise_with_traceback(OutputError("Failed to write codebook: {}".format(repr(e)), path))


def load_codebook(path):
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except (IOError, OSError) as e:
        raise_with_traceback(OutputError("Failed to read codebook: {}".format(repr(e)), path))

    if len(data) < DUMP_HEADER.size:
        raise InvalidArgumentError("Codebook file is truncated: {}".format(path))
    magic, num_antennas, bits, code = DUMP_HEADER.unpack(data[:DUMP_HEADER.size])
    if magic != DUMP_MAGIC:
        raise InvalidArgumentError("Not a codebook file (magic {}): {}".format(repr(magic), path))
    kinds = dict((v, k) for k, v in KIND_CODES.items())
    if code not in kinds:
        raise InvalidArgumentError("Unknown codebook kind code {}: {}".format(code, path))

    values = np.frombuffer(data[DUMP_HEADER.size:], dtype='<f8')
    size = 1 << bits
    if len(values) != 2 * size * num_antennas:
        raise InvalidArgumentError("Codebook body has {} floats, expected {}".format(len(values), 2 * size * num_antennas))
    rows = values.view('<c16').reshape(size, num_antennas).astype(complex)
    return Codebook(kinds[code], bits, rows=rows)
