"""Zero-forcing precoding and per-user rates from the SINR formula."""

import numpy as np
import scipy.linalg
from future.utils import raise_with_traceback

from .codebook import decompose
from .errors import DegenerateDecompositionError, InvalidArgumentError, InvariantViolation, SingularChannelError


SOURCE_IDEAL = 'ideal'
SOURCE_FEEDBACK = 'feedback'

CONDITION_LIMIT = 1e12
WITNESS_TOLERANCE = 1e-9


class PrecodingMatrix:

    def __init__(self, V, source, channel, condition):
        self.V = V
        self.source = source
        self.channel = channel
        self.condition = condition

    @property
    def num_users(self):
        return self.V.shape[1]

    def leakage(self):
        """max over i != k of |g_k^H v_i| / ||g_k||, for the channel the precoder was built on."""
        cross = np.abs(self.channel.conj().T @ self.V)
        np.fill_diagonal(cross, 0.0)
        return float(np.max(cross / np.linalg.norm(self.channel, axis=0)[:, None]))

    def __repr__(self):
        return "<PrecodingMatrix: source={}, K={}, cond={:.3e}>".format(self.source, self.num_users, self.condition)


def zf_precoder(G, source=SOURCE_FEEDBACK):
    G = np.asarray(G)
    M, K = G.shape
    if K > M:
        raise InvalidArgumentError("Zero-forcing needs K <= M, got K={} M={}".format(K, M))

    gram = G.conj().T @ G
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularChannelError(
            "Channel matrix is rank deficient (cond(G^H G) = {:.3e})".format(condition), condition)

    # U = G (G^H G)^{-1}, so U^H = (G^H G)^{-1} G^H
    try:
        U = scipy.linalg.solve(gram, G.conj().T).conj().T
    except (np.linalg.LinAlgError, ValueError) as e:
        raise_with_traceback(SingularChannelError("Linear solve failed: {}".format(repr(e)), condition))

    V = U / np.linalg.norm(U, axis=0)
    return PrecodingMatrix(V, source, G, condition)


class RateReport:

    def __init__(self, per_user_sinr, interference):
        self.per_user_sinr = per_user_sinr
        self.interference = interference
        self.per_user_rate = np.log2(1.0 + per_user_sinr)
        self.mean_rate = float(np.mean(self.per_user_rate))

    def __repr__(self):
        return "<RateReport: mean_rate={:.6g}>".format(self.mean_rate)


def evaluate_rates(H_true, precoder, calibration):
    H_true = np.asarray(H_true)
    if H_true.shape != precoder.V.shape:
        raise InvalidArgumentError("Channel shape {} does not match precoder shape {}".format(H_true.shape, precoder.V.shape))

    power = calibration.per_user_power
    gains = np.abs(H_true.conj().T @ precoder.V) ** 2
    signal = power * np.diag(gains)
    interference = power * (np.sum(gains, axis=1) - np.diag(gains))
    return RateReport(signal / (1.0 + interference), interference)


class InterfererWitness:

    def __init__(self, interferer, cross_gain, bound, residual_overlap):
        self.interferer = interferer
        self.cross_gain = cross_gain
        self.bound = bound
        self.residual_overlap = residual_overlap

    def as_tuple(self):
        return (self.cross_gain, self.bound, self.residual_overlap)

    def __repr__(self):
        return "<InterfererWitness: i={}, cross={:.6g}, bound={:.6g}, overlap={:.6g}>".format(
            self.interferer, self.cross_gain, self.bound, self.residual_overlap)


def lemma1_witness(sample, outcome, precoder, k, tolerance=WITNESS_TOLERANCE):
    """Per-interferer check of |h_k^H v_i|^2 = ||h_k||^2 X |s^H v_i|^2 <= ||h_k||^2 X.

    Needs precoder built on a feedback matrix whose k-th column is outcome.feedback_vector.
    """
    others = [i for i in range(precoder.num_users) if i != k]
    try:
        decomposition = decompose(sample, outcome)
    except DegenerateDecompositionError:
        return [InterfererWitness(i, 0.0, 0.0, 0.0) for i in others]

    scale = max(1.0, sample.norm_sq)
    bound = sample.norm_sq * decomposition.error
    witnesses = []
    for i in others:
        v = precoder.V[:, i]
        cross_gain = abs(np.vdot(sample.h, v)) ** 2
        overlap = abs(np.vdot(decomposition.residual_direction, v)) ** 2
        if abs(cross_gain - bound * overlap) > tolerance * scale:
            raise InvariantViolation(
                "Interference factorization fails for k={} i={}: {} vs {}".format(k, i, cross_gain, bound * overlap))
        if overlap > 1.0 + 1e-12 or cross_gain > bound + tolerance * scale:
            raise InvariantViolation(
                "Interference bound fails for k={} i={}: {} > {}".format(k, i, cross_gain, bound))
        witnesses.append(InterfererWitness(i, cross_gain, bound, overlap))
    return witnesses
