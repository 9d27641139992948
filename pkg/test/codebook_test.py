import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, ks_2samp

from mimo_feedback.channel import ChannelSample, draw_channel, make_correlation
from mimo_feedback.codebook import (FORM_FULL, FORM_REDUCED, KIND_EIGEN, KIND_RVQ, KIND_STATISTICS,
                                    QuantizationOutcome, build_eigen_baseline, build_rvq, build_statistics, check_bits,
                                    decompose, dump_codebook, load_codebook, quantize, sample_rvq_outcome,
                                    sample_statistics_outcome, scan_quantize)
from mimo_feedback.errors import (DegenerateDecompositionError, InvalidArgumentError, OutputError,
                                  ResourceLimitError)
from mimo_feedback.streams import make_stream


def _best_of_cdf(z, n, bits):
    return (1.0 - (1.0 - np.asarray(z)) ** (n - 1)) ** (2 ** bits)


class CodebookConstructionTests(unittest.TestCase):

    def test_build_rvq____any_bits____unit_codewords(self):
        codebook = build_rvq(8, 5, seed=1)

        self.assertEqual(codebook.size, 32)
        self.assertEqual(codebook.codewords.shape, (8, 32))
        np.testing.assert_allclose(np.linalg.norm(codebook.rows, axis=1), 1.0, atol=1e-12)

    def test_build_rvq____same_seed____bit_identical(self):
        self.assertTrue(np.array_equal(build_rvq(4, 3, seed=9).rows, build_rvq(4, 3, seed=9).rows))

    def test_build_rvq____one_more_bit____earlier_book_is_prefix(self):
        small = build_rvq(6, 4, seed=21)
        large = build_rvq(6, 5, seed=21)

        self.assertTrue(np.array_equal(large.rows[:16], small.rows))

    def test_build_statistics____full_form____codewords_in_active_subspace(self):
        model = make_correlation(32, 3, 'exponential:0.6', seed=2)
        codebook = build_statistics(model, 6, seed=4, form=FORM_FULL)

        np.testing.assert_allclose(np.linalg.norm(codebook.rows, axis=1), 1.0, atol=1e-12)
        residuals = [model.subspace_residual(codebook.codeword(i)) for i in range(codebook.size)]
        self.assertLess(max(residuals), 1e-10)

    def test_build_statistics____reduced_form____materialises_unit_codewords_in_subspace(self):
        model = make_correlation(32, 3, seed=2)
        codebook = build_statistics(model, 6, seed=4, form=FORM_REDUCED)

        self.assertEqual(codebook.rows.shape, (64, 32))
        np.testing.assert_allclose(np.linalg.norm(codebook.rows, axis=1), 1.0, atol=1e-12)
        self.assertLess(max(model.subspace_residual(row) for row in codebook.rows), 1e-10)

    def test_build_statistics____zero_bits____single_codeword(self):
        model = make_correlation(16, 4, seed=3)

        codebook = build_statistics(model, 0, seed=1)

        self.assertEqual(codebook.size, 1)
        self.assertEqual(codebook.kind, KIND_STATISTICS)

    def test_build_statistics____unknown_form____raises_invalid_argument(self):
        with self.assertRaises(InvalidArgumentError):
            build_statistics(make_correlation(4, 2), 2, seed=0, form='sparse')

    def test_check_bits____over_guard____raises_resource_limit(self):
        with self.assertRaises(ResourceLimitError):
            check_bits(27)
        with self.assertRaises(ResourceLimitError):
            build_rvq(4, 5, seed=0, max_bits=4)
        with self.assertRaises(InvalidArgumentError):
            check_bits(-1)

    def test_build_eigen_baseline____any_model____principal_eigenvector(self):
        model = make_correlation(16, 4, 'exponential:0.5', seed=6)

        codebook = build_eigen_baseline(model)

        self.assertEqual(codebook.kind, KIND_EIGEN)
        self.assertEqual(codebook.bits, 0)
        np.testing.assert_allclose(codebook.codeword(0), model.eigenbasis[:, 0], atol=1e-12)

    def test_build_statistics____identity_correlation____same_book_as_rvq(self):
        model = make_correlation(6, 6, seed=3)

        statistics = build_statistics(model, 5, seed=11)

        np.testing.assert_allclose(statistics.rows, build_rvq(6, 5, seed=11).rows, atol=1e-12)

    def test_build_statistics____rank_one____all_codewords_collinear(self):
        codebook = build_statistics(make_correlation(8, 1, seed=2), 4, seed=5)

        cross = np.abs(codebook.rows.conj() @ codebook.rows.T)
        np.testing.assert_allclose(cross, 1.0, atol=1e-12)

    def test_build_rvq____two_antennas____first_coordinate_power_uniform(self):
        codebook = build_rvq(2, 12, seed=7)

        power = np.abs(codebook.rows[:, 0]) ** 2

        self.assertGreater(kstest(power, 'uniform').pvalue, 1e-3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 6), st.integers(0, 2 ** 40))
    def test_build_rvq____random_sizes____nested_and_unit_norm(self, M, bits, seed):
        small = build_rvq(M, bits, seed)
        large = build_rvq(M, bits + 1, seed)

        self.assertTrue(np.array_equal(large.rows[:small.size], small.rows))
        np.testing.assert_allclose(np.linalg.norm(large.rows, axis=1), 1.0, atol=1e-12)


class QuantizationTests(unittest.TestCase):

    def test_quantize____rvq_book____picks_largest_squared_cosine(self):
        codebook = build_rvq(8, 6, seed=5)
        sample = draw_channel(make_correlation(8, 8, seed=1), make_stream(1, 0))

        outcome = quantize(sample, codebook)

        scores = np.abs(codebook.codewords.conj().T @ sample.direction) ** 2
        self.assertEqual(outcome.index, int(np.argmax(scores)))
        self.assertAlmostEqual(outcome.squared_cosine, scores.max(), delta=1e-12)
        self.assertAlmostEqual(outcome.quantization_error, 1.0 - scores.max(), delta=1e-12)
        np.testing.assert_allclose(outcome.feedback_vector, sample.norm * codebook.codeword(outcome.index))

    def test_quantize____eigen_baseline____squared_cosine_against_principal_direction(self):
        model = make_correlation(16, 4, seed=3)
        sample = draw_channel(model, make_stream(3, 1))

        outcome = quantize(sample, build_eigen_baseline(model))

        self.assertEqual(outcome.index, 0)
        self.assertAlmostEqual(outcome.squared_cosine, abs(np.vdot(model.eigenbasis[:, 0], sample.direction)) ** 2,
                               delta=1e-12)

    def test_quantize____channel_along_codeword____zero_error(self):
        codebook = build_rvq(8, 6, seed=2)
        h = 2.5 * np.exp(0.7j) * codebook.codeword(17)

        outcome = quantize(ChannelSample(h, h), codebook)

        self.assertEqual(outcome.index, 17)
        self.assertAlmostEqual(outcome.quantization_error, 0.0, delta=1e-12)

    def test_quantize____zero_bits____only_index_zero(self):
        model = make_correlation(8, 3, seed=1)
        for t in range(5):
            sample = draw_channel(model, make_stream(1, 2, t))
            self.assertEqual(quantize(sample, build_rvq(8, 0, seed=t)).index, 0)
            self.assertEqual(quantize(sample, build_statistics(model, 0, seed=t)).index, 0)

    def test_quantize____nested_books____error_non_increasing_in_bits(self):
        model = make_correlation(6, 3, 'exponential:0.7', seed=9)
        for t in range(20):
            sample = draw_channel(model, make_stream(9, 1, t))
            for build in (lambda b: build_rvq(6, b, seed=t), lambda b: build_statistics(model, b, seed=t)):
                errors = [quantize(sample, build(bits)).quantization_error for bits in range(9)]
                self.assertTrue(all(later <= earlier + 1e-12 for earlier, later in zip(errors, errors[1:])))

    def test_quantize____mismatched_antennas____raises_invalid_argument(self):
        sample = draw_channel(make_correlation(8, 2, seed=0), make_stream(0))
        with self.assertRaises(InvalidArgumentError):
            quantize(sample, build_rvq(4, 2, seed=0))

    def test_scan_quantize____rvq_across_chunks____matches_materialised_book(self):
        sample = draw_channel(make_correlation(4, 4, seed=1), make_stream(1, 7))

        scanned = scan_quantize(sample, KIND_RVQ, 15, seed=13)
        built = quantize(sample, build_rvq(4, 15, seed=13))

        self.assertEqual(scanned.index, built.index)
        self.assertAlmostEqual(scanned.squared_cosine, built.squared_cosine, delta=1e-14)
        np.testing.assert_allclose(scanned.codeword, built.codeword, atol=1e-14)

    def test_scan_quantize____statistics_both_forms____matches_materialised_book(self):
        model = make_correlation(16, 3, 'exponential:0.5', seed=2)
        sample = draw_channel(model, make_stream(2, 3))
        for form in (FORM_FULL, FORM_REDUCED):
            scanned = scan_quantize(sample, KIND_STATISTICS, 8, 31, model, form=form)
            built = quantize(sample, build_statistics(model, 8, 31, form=form))

            self.assertEqual(scanned.index, built.index)
            self.assertAlmostEqual(scanned.squared_cosine, built.squared_cosine, delta=1e-12)
            np.testing.assert_allclose(scanned.codeword, built.codeword, atol=1e-12)

    def test_build_statistics____full_and_reduced_forms____same_squared_cosine_law(self):
        model = make_correlation(8, 3, seed=4)
        full, reduced = [], []
        for t in range(1500):
            sample = draw_channel(model, make_stream(4, t))
            full.append(quantize(sample, build_statistics(model, 3, 2 * t, form=FORM_FULL)).squared_cosine)
            reduced.append(quantize(sample, build_statistics(model, 3, 2 * t + 1, form=FORM_REDUCED)).squared_cosine)

        self.assertGreater(ks_2samp(full, reduced).pvalue, 1e-3)

    def test_sample_rvq_outcome____many_draws____follows_best_of_law(self):
        model = make_correlation(8, 8, seed=0)
        rng = make_stream(17, 1)
        values = [sample_rvq_outcome(draw_channel(model, rng), 4, rng).squared_cosine for _ in range(4000)]

        self.assertGreater(kstest(values, lambda z: _best_of_cdf(z, 8, 4)).pvalue, 1e-3)

    def test_sample_rvq_outcome____against_codebook_scan____same_law(self):
        model = make_correlation(4, 4, seed=0)
        sampled, scanned = [], []
        rng = make_stream(5, 2)
        for t in range(1500):
            sample = draw_channel(model, make_stream(5, 1, t))
            sampled.append(sample_rvq_outcome(sample, 4, rng).squared_cosine)
            scanned.append(scan_quantize(sample, KIND_RVQ, 4, seed=t).squared_cosine)

        self.assertGreater(ks_2samp(sampled, scanned).pvalue, 1e-3)

    def test_sample_rvq_outcome____any_draw____codeword_matches_reported_cosine(self):
        model = make_correlation(16, 16, seed=1)
        rng = make_stream(3)
        for _ in range(50):
            sample = draw_channel(model, rng)
            outcome = sample_rvq_outcome(sample, 10, rng)
            self.assertAlmostEqual(np.linalg.norm(outcome.codeword), 1.0, delta=1e-12)
            self.assertAlmostEqual(abs(np.vdot(outcome.codeword, sample.direction)) ** 2, outcome.squared_cosine,
                                   delta=1e-12)
            self.assertTrue(0 <= outcome.index < 2 ** 10)

    def test_sample_statistics_outcome____equal_profile____codeword_in_subspace_with_reported_cosine(self):
        model = make_correlation(32, 4, seed=6)
        rng = make_stream(6, 1)
        for _ in range(50):
            sample = draw_channel(model, rng)
            outcome = sample_statistics_outcome(sample, model, 12, rng)
            self.assertLess(model.subspace_residual(outcome.codeword), 1e-10)
            self.assertAlmostEqual(abs(np.vdot(outcome.codeword, sample.direction)) ** 2, outcome.squared_cosine,
                                   delta=1e-10)

    def test_sample_statistics_outcome____against_codebook_scan____same_law(self):
        model = make_correlation(16, 3, seed=8)
        sampled, scanned = [], []
        rng = make_stream(8, 2)
        for t in range(1500):
            sample = draw_channel(model, make_stream(8, 1, t))
            sampled.append(sample_statistics_outcome(sample, model, 3, rng).squared_cosine)
            scanned.append(scan_quantize(sample, KIND_STATISTICS, 3, t, model, form=FORM_REDUCED).squared_cosine)

        self.assertGreater(ks_2samp(sampled, scanned).pvalue, 1e-3)

    def test_sample_statistics_outcome____unequal_profile____raises_invalid_argument(self):
        model = make_correlation(8, 3, 'exponential:0.5', seed=1)
        sample = draw_channel(model, make_stream(1))
        with self.assertRaises(InvalidArgumentError):
            sample_statistics_outcome(sample, model, 3, make_stream(2))


class DecompositionTests(unittest.TestCase):

    def test_decompose____statistics_outcome____reconstructs_direction(self):
        model = make_correlation(32, 4, 'exponential:0.8', seed=3)
        for t in range(20):
            sample = draw_channel(model, make_stream(3, 1, t))
            outcome = quantize(sample, build_statistics(model, 4, t))

            decomposition = decompose(sample, outcome)

            self.assertLess(decomposition.reconstruction_error(sample.direction), 1e-10)
            self.assertLess(decomposition.orthogonality(), 1e-10)
            self.assertAlmostEqual(np.linalg.norm(decomposition.residual_direction), 1.0, delta=1e-12)

    def test_decompose____codeword_orthogonal_to_channel____full_error(self):
        h = np.array([1.0, 1.0j, 0.0, 0.0])
        codeword = np.array([0.0, 0.0, 1.0, 0.0], dtype=complex)
        outcome = QuantizationOutcome(0, 0.0, codeword, np.linalg.norm(h))

        decomposition = decompose(ChannelSample(h, h), outcome)

        self.assertEqual(decomposition.error, 1.0)
        np.testing.assert_allclose(decomposition.residual_direction, h / np.linalg.norm(h), atol=1e-12)

    def test_decompose____rank_one_channel____raises_degenerate_decomposition(self):
        model = make_correlation(8, 1, seed=4)
        sample = draw_channel(model, make_stream(4))
        outcome = quantize(sample, build_statistics(model, 2, 0))

        self.assertLess(outcome.quantization_error, 1e-12)
        with self.assertRaises(DegenerateDecompositionError):
            decompose(sample, outcome)


class CodebookDumpTests(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_dump_codebook____then_load____same_codewords(self):
        codebook = build_statistics(make_correlation(8, 2, seed=1), 4, seed=3, form=FORM_REDUCED)
        path = os.path.join(self.directory, 'book.cbk')

        dump_codebook(codebook, path)
        loaded = load_codebook(path)

        self.assertEqual((loaded.kind, loaded.bits, loaded.num_antennas), (KIND_STATISTICS, 4, 8))
        self.assertTrue(np.array_equal(loaded.rows, codebook.rows))

    def test_load_codebook____wrong_magic____raises_invalid_argument(self):
        path = os.path.join(self.directory, 'bad.cbk')
        with open(path, 'wb') as f:
            f.write(b'JUNK' + b'\0' * 32)

        with self.assertRaises(InvalidArgumentError):
            load_codebook(path)

    def test_dump_codebook____missing_directory____raises_output_error_with_path(self):
        path = os.path.join(self.directory, 'missing', 'book.cbk')

        with self.assertRaises(OutputError) as context:
            dump_codebook(build_rvq(4, 2, seed=0), path)

        self.assertEqual(context.exception.path, path)


if __name__ == '__main__':
    unittest.main()
