import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import beta, kstest

from mimo_feedback.channel import (CorrelationModel, SingularValueProfile, calibrate_power, channel_matrix,
                                   draw_channel, make_correlation)
from mimo_feedback.errors import InvalidArgumentError
from mimo_feedback.streams import make_stream


class CorrelationModelTests(unittest.TestCase):

    def test_make_correlation____equal_profile____splits_trace_evenly(self):
        model = make_correlation(64, 4, 'equal', seed=7)

        np.testing.assert_allclose(model.singular_values, [4.0] * 4, rtol=1e-12)
        self.assertAlmostEqual(model.mean_channel_gain, 64.0, delta=64.0 * 1e-9)

    def test_make_correlation____full_rank_equal_profile____square_root_is_identity(self):
        model = make_correlation(4, 4, 'equal', seed=11)

        self.assertTrue(model.is_scaled_identity)
        self.assertTrue(np.array_equal(model.sqrt_matrix(), np.eye(4)))

    def test_make_correlation____explicit_profile____rescales_to_trace_target(self):
        model = make_correlation(64, 4, 'explicit:2,1,0.5,0.25', seed=3)

        expected = np.array([2, 1, 0.5, 0.25]) * np.sqrt(64 / 5.3125)
        np.testing.assert_allclose(model.singular_values, expected, rtol=1e-12)
        self.assertAlmostEqual(np.sum(model.singular_values ** 2), 64.0, places=9)

    def test_make_correlation____unsorted_explicit_profile____stores_non_increasing_values(self):
        model = make_correlation(8, 3, [0.5, 2.0, 1.0], seed=1)

        self.assertTrue(np.all(np.diff(model.singular_values) <= 0))

    def test_make_correlation____exponential_profile____decays_by_rho(self):
        model = make_correlation(16, 4, 'exponential:0.5', seed=2)

        ratios = model.singular_values[1:] ** 2 / model.singular_values[:-1] ** 2
        np.testing.assert_allclose(ratios, [0.5] * 3, rtol=1e-12)

    def test_make_correlation____rank_above_antennas____raises_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            make_correlation(4, 5)

    def test_make_correlation____non_positive_profile_entry____raises_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            make_correlation(8, 2, 'explicit:1,0')
        with self.assertRaises(InvalidArgumentError):
            make_correlation(8, 2, 'explicit:1,-2')

    def test_make_correlation____explicit_profile_of_wrong_length____raises_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            make_correlation(8, 3, 'explicit:1,2')

    def test_make_correlation____unparseable_profile____raises_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            SingularValueProfile.parse('triangular')
        with self.assertRaises(InvalidArgumentError):
            SingularValueProfile.parse('exponential:0')

    def test_make_correlation____any_seed____eigenbasis_is_unitary(self):
        for seed in range(5):
            U = make_correlation(32, 4, seed=seed).eigenbasis
            self.assertLess(np.linalg.norm(U.conj().T @ U - np.eye(32)), 1e-10)

    def test_make_correlation____same_seed____replays_identical_model(self):
        first = make_correlation(16, 3, 'exponential:0.7', seed=99)
        second = make_correlation(16, 3, 'exponential:0.7', seed=99)

        self.assertTrue(np.array_equal(first.eigenbasis, second.eigenbasis))
        self.assertTrue(np.array_equal(first.singular_values, second.singular_values))

    def test_make_correlation____many_seeds____eigenbasis_entries_follow_haar_law(self):
        # |U_11|^2 of a Haar unitary of size M is Beta(1, M-1)
        values = [abs(make_correlation(4, 2, seed=seed).eigenbasis[0, 0]) ** 2 for seed in range(2000)]

        self.assertGreater(kstest(values, beta(1, 3).cdf).pvalue, 1e-3)

    def test_correlation_model____json_round_trip____replays_same_model(self):
        model = make_correlation(8, 3, 'explicit:3,2,1', seed=5, trace_target=10.0)
        replayed = CorrelationModel.from_json(model.to_json())

        self.assertTrue(np.array_equal(model.eigenbasis, replayed.eigenbasis))
        np.testing.assert_allclose(model.singular_values, replayed.singular_values, rtol=1e-12)

    def test_correlation_model____profile_describe____parses_back(self):
        for text in ['equal', 'exponential:0.25', 'explicit:3.0,1.5']:
            profile = SingularValueProfile.parse(text)
            self.assertEqual(SingularValueProfile.parse(profile.describe()).describe(), profile.describe())

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.data(), st.integers(0, 2 ** 32))
    def test_make_correlation____random_sizes____keeps_trace_and_ordering(self, M, data, seed):
        r = data.draw(st.integers(1, M))
        decay = data.draw(st.floats(0.05, 1.0))
        model = make_correlation(M, r, SingularValueProfile('exponential', decay=decay), seed)

        self.assertEqual(model.rank, r)
        self.assertTrue(np.all(model.singular_values > 0))
        self.assertTrue(np.all(np.diff(model.singular_values) <= 1e-15))
        self.assertLess(abs(model.mean_channel_gain - M), 1e-9 * M)


class ChannelSampleTests(unittest.TestCase):

    def test_draw_channel____identity_model____returns_inner_vector(self):
        model = make_correlation(4, 4, 'equal', seed=0)
        sample = draw_channel(model, make_stream(1))

        self.assertTrue(np.array_equal(sample.h, sample.h_w))

    def test_draw_channel____low_rank_model____channel_lies_in_active_subspace(self):
        model = make_correlation(64, 4, 'exponential:0.5', seed=4)
        for i in range(20):
            sample = draw_channel(model, make_stream(4, i))
            self.assertLess(model.subspace_residual(sample.h), 1e-9 * sample.norm)
            self.assertAlmostEqual(np.linalg.norm(sample.direction), 1.0, delta=1e-12)
            np.testing.assert_allclose(sample.h, model.sqrt_matrix() @ sample.h_w, atol=1e-12)

    def test_draw_channel____same_stream_key____bit_identical(self):
        model = make_correlation(16, 2, seed=8)

        first = draw_channel(model, make_stream(3, 1, 2))
        second = draw_channel(model, make_stream(3, 1, 2))

        self.assertTrue(np.array_equal(first.h, second.h))

    def test_draw_channel____many_draws____unit_variance_entries_and_mean_gain(self):
        model = make_correlation(64, 4, seed=12)
        rng = make_stream(12, 0)
        samples = [draw_channel(model, rng) for _ in range(5000)]

        h_w_power = np.mean([np.mean(np.abs(s.h_w) ** 2) for s in samples])
        gain = np.mean([s.norm_sq for s in samples])
        self.assertAlmostEqual(h_w_power, 1.0, delta=0.03)
        self.assertAlmostEqual(gain, 64.0, delta=2.0)

    def test_channel_matrix____k_samples____stacks_columns(self):
        model = make_correlation(8, 2, seed=0)
        samples = [draw_channel(model, make_stream(0, k)) for k in range(3)]

        H = channel_matrix(samples)

        self.assertEqual(H.shape, (8, 3))
        self.assertTrue(np.array_equal(H[:, 1], samples[1].h))


class PowerCalibrationTests(unittest.TestCase):

    def test_calibrate_power____snr_grid____recomputes_snr(self):
        model = make_correlation(64, 4, seed=1)
        for snr_db in [-5.0, 0.0, 6.0, 18.0]:
            calibration = calibrate_power(snr_db, 10, model)
            self.assertAlmostEqual(calibration.recomputed_snr_db(), snr_db, delta=1e-9)
            self.assertAlmostEqual(calibration.transmit_power, 10 * 10 ** (snr_db / 10) / 64.0, places=12)

    def test_calibrate_power____non_positive_inputs____raise_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            calibrate_power(0.0, 0, 64.0)
        with self.assertRaises(InvalidArgumentError):
            calibrate_power(0.0, 2, 0.0)


if __name__ == '__main__':
    unittest.main()
