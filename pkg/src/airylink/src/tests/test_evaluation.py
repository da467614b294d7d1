import io
import itertools
import math
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from airylink import design, evaluation
from airylink.errors import ConfigurationError, DegenerateChannelError
from airylink.evaluation import ChannelMatrix, EvalSettings, GridSpec, LinkBudget, SweepFamily
from airylink.phase_synthesis import AiryParams, focusing_params
from airylink.scenario import BlockageSpec, PropagationSettings, element_positions
from tests.scenarios import WAVELENGTH, aligned_error, desk_ula_blocked, slow, ula_link, upa_link


def random_channel(rows: int, cols: int, seed: int) -> ChannelMatrix:
    rng = np.random.default_rng(seed)
    entries = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    return ChannelMatrix(entries=entries, state=evaluation.LOS)


class TestChannel(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.scenario = desk_ula_blocked()
        cls.blocked = evaluation.build_channel(cls.scenario)
        cls.unblocked = evaluation.build_channel(cls.scenario, blocked=False)

    def setUp(self):
        self.workspace_root = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.workspace_root)

    def test_states_and_shape(self):
        self.assertEqual(self.blocked.state, evaluation.QUASI_LOS)
        self.assertEqual(self.unblocked.state, evaluation.LOS)
        self.assertEqual(self.blocked.shape, (64, 64))

    def test_free_space_channel_matches_the_line_source(self):
        s = ula_link(propagation=PropagationSettings(padding=16))
        h = evaluation.build_channel(s, blocked=False)
        x = element_positions(s.tx)[:, 0]
        r = np.hypot(s.link_distance, x[:, np.newaxis] - x[np.newaxis, :])
        reference = np.exp(2j * math.pi / WAVELENGTH * r) / np.sqrt(r)
        self.assertLess(aligned_error(h.entries.ravel(), reference.ravel()), 0.03)

    def test_free_space_channel_is_reciprocal(self):
        entries = self.unblocked.entries
        np.testing.assert_allclose(entries, entries.T, atol=1e-9 * np.max(np.abs(entries)))

    def test_screen_removes_power(self):
        self.assertLess(
            np.linalg.norm(self.blocked.entries), np.linalg.norm(self.unblocked.entries)
        )

    def test_partial_screen_scales_the_channel(self):
        s = ula_link(blockages=[BlockageSpec.rectangle(1.5, attenuation=0.5)])
        h = evaluation.build_channel(s)
        np.testing.assert_allclose(
            h.entries, 0.5 * self.unblocked.entries, atol=1e-12 * np.max(np.abs(h.entries))
        )

    def test_normalization(self):
        blocked, unblocked = evaluation.normalize_channels(self.blocked, self.unblocked)
        self.assertAlmostEqual(unblocked.largest_singular_value(), 1.0, places=12)
        self.assertLess(blocked.largest_singular_value(), 1.0)
        self.assertEqual(blocked.scale, unblocked.scale)
        zero = ChannelMatrix(entries=np.zeros((2, 2)), state=evaluation.LOS)
        with self.assertRaises(DegenerateChannelError):
            evaluation.normalize_channels(zero, zero)

    def test_threads_do_not_change_the_channel(self):
        threaded = evaluation.build_channel(self.scenario, jobs=4)
        np.testing.assert_array_equal(threaded.entries, self.blocked.entries)

    def test_cached_channel_is_reused(self):
        first = evaluation.build_channel(self.scenario, cache_dir=self.workspace_root)
        self.assertEqual(len(os.listdir(self.workspace_root)), 1)
        with patch.object(
            evaluation, "_channel_column", spec=evaluation._channel_column, name="column"
        ) as column:
            second = evaluation.build_channel(self.scenario, cache_dir=self.workspace_root)
            column.assert_not_called()
        np.testing.assert_array_equal(second.entries, first.entries)
        self.assertEqual(second.state, evaluation.QUASI_LOS)


class TestBeamformers(unittest.TestCase):
    def test_rank_one_channel(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=8) + 1j * rng.normal(size=8)
        b = rng.normal(size=6) + 1j * rng.normal(size=6)
        h = ChannelMatrix(entries=np.outer(a, b.conj()), state=evaluation.LOS)
        w_t, w_r = evaluation.mrt_mrc(h)
        self.assertAlmostEqual(abs(np.vdot(b, w_t)), np.linalg.norm(b))
        self.assertAlmostEqual(abs(np.vdot(a, w_r)), np.linalg.norm(a))
        gain = abs(np.vdot(w_r, h.entries @ w_t))
        self.assertAlmostEqual(gain, np.linalg.norm(a) * np.linalg.norm(b))

    def test_gain_matches_power_iteration(self):
        h = random_channel(8, 8, seed=9)
        v = np.ones(8, dtype=complex)
        gram = h.entries.conj().T @ h.entries
        for _ in range(2000):
            v = gram @ v
            v /= np.linalg.norm(v)
        sigma = np.linalg.norm(h.entries @ v)
        w_t, w_r = evaluation.mrt_mrc(h)
        gain = abs(np.vdot(w_r, h.entries @ w_t))
        self.assertAlmostEqual(gain / sigma, 1.0, places=8)

    def test_weights_are_phase_normalized(self):
        w_t, w_r = evaluation.mrt_mrc(random_channel(4, 6, seed=1))
        for w in (w_t, w_r):
            self.assertAlmostEqual(np.linalg.norm(w), 1.0)
            self.assertGreater(w[0].real, 0.0)
            self.assertAlmostEqual(w[0].imag, 0.0)

    def test_zero_channel(self):
        zero = ChannelMatrix(entries=np.zeros((4, 4)), state=evaluation.QUASI_LOS)
        with self.assertRaises(DegenerateChannelError):
            evaluation.mrt_mrc(zero)
        with self.assertRaises(DegenerateChannelError):
            evaluation.mrc(zero, np.ones(4) / 2)
        w = np.ones(4) / 2
        self.assertEqual(evaluation.spectral_efficiency(zero, w, w), 0.0)

    def test_doubling_rho_adds_at_most_one_bit(self):
        h = random_channel(6, 6, seed=3)
        w_t, w_r = evaluation.mrt_mrc(h)
        for rho in (1.0, 1e2, 1e4):
            low = evaluation.spectral_efficiency(h, w_t, w_r, LinkBudget(rho))
            high = evaluation.spectral_efficiency(h, w_t, w_r, LinkBudget(2 * rho))
            self.assertGreater(high, low)
            self.assertLessEqual(high - low, 1.0)
        with self.assertRaises(ConfigurationError):
            LinkBudget(0.0).validate()

    def test_analog_weights(self):
        s = ula_link()
        focusing = evaluation.focusing_weights(s)
        np.testing.assert_allclose(np.abs(focusing) * 8.0, 1.0)
        np.testing.assert_allclose(focusing, focusing[::-1], atol=1e-12)
        np.testing.assert_allclose(evaluation.steering_weights(s), 1.0 / 8.0, atol=1e-12)
        upa = evaluation.steering_weights(upa_link())
        np.testing.assert_allclose(upa, 1.0 / 8.0, atol=1e-12)


class TestSchemes(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.scenario = desk_ula_blocked()
        cls.h_blocked, cls.h_unblocked = evaluation.normalize_channels(
            evaluation.build_channel(cls.scenario),
            evaluation.build_channel(cls.scenario, blocked=False),
        )

    def test_digital_beamformers_bound_the_analog_schemes(self):
        results = evaluation.evaluate_schemes(
            self.scenario, evaluation.ULA_SCHEMES, self.h_blocked, self.h_unblocked
        )
        se = {scheme: result.se for scheme, result, err in results if err is None}
        self.assertEqual(set(se), set(evaluation.ULA_SCHEMES))
        best = se[evaluation.QUASILOS_DIGITAL]
        for scheme, value in se.items():
            self.assertLessEqual(value, best + 1e-9, msg=scheme)
            self.assertGreaterEqual(value, 0.0)

    def test_los_digital_is_best_without_the_screen(self):
        s = self.scenario.unblocked()
        schemes = (evaluation.STEERING, evaluation.FOCUSING, evaluation.AIRY_CLOSED_FORM)
        results = evaluation.evaluate_schemes(
            s, (evaluation.LOS_DIGITAL,) + schemes, self.h_unblocked, self.h_unblocked
        )
        los = results[0][1].se
        for scheme, result, err in results[1:]:
            self.assertIsNone(err)
            self.assertLessEqual(result.se, los + 1e-9, msg=scheme)

    def test_exhaustive_search_dominates_the_closed_form(self):
        closed = design.design_scenario(self.scenario).px
        w_t = evaluation.airy_weights(self.scenario, closed)
        w_r = evaluation.mrc(self.h_blocked, w_t)
        closed_se = evaluation.spectral_efficiency(self.h_blocked, w_t, w_r)
        found = evaluation.exhaustive_airy_search(
            self.scenario,
            self.h_blocked,
            [closed.B - 0.5, closed.B, closed.B + 0.5],
            [closed.F, 1.1 * closed.F],
            [closed.theta, closed.theta + 0.01],
        )
        self.assertGreaterEqual(found.se, closed_se - 1e-9)

    def test_single_point_search(self):
        found = evaluation.exhaustive_airy_search(
            self.scenario, self.h_blocked, [4.0], [1.5], [-0.02]
        )
        self.assertEqual(found.params, AiryParams(4.0, 1.5, -0.02))
        w_t = evaluation.airy_weights(self.scenario, found.params)
        w_r = evaluation.mrc(self.h_blocked, w_t)
        expected = evaluation.spectral_efficiency(self.h_blocked, w_t, w_r)
        self.assertAlmostEqual(found.se, expected, places=9)

    def test_ties_go_to_the_smallest_triple(self):
        zero = ChannelMatrix(entries=np.zeros((64, 64)), state=evaluation.QUASI_LOS)
        found = evaluation.exhaustive_airy_search(
            self.scenario, zero, [3.0, -2.0], [2.0, 1.0], [0.01, -0.01]
        )
        self.assertEqual(found.params, AiryParams(-2.0, 1.0, -0.01))
        self.assertEqual(found.se, 0.0)

    def test_search_checks(self):
        with self.assertRaises(ConfigurationError):
            evaluation.exhaustive_airy_search(self.scenario, self.h_blocked, [], [1.0], [0.0])

    def test_failures_are_reported_per_scheme(self):
        results = evaluation.evaluate_schemes(
            self.scenario,
            (evaluation.STEERING, evaluation.UPA_MODE1, "bogus"),
            self.h_blocked,
            self.h_unblocked,
        )
        self.assertIsNone(results[0][2])
        self.assertIsInstance(results[1][2], ConfigurationError)
        self.assertIsInstance(results[2][2], ConfigurationError)


class TestUpaSearch(unittest.TestCase):
    GRIDS = ([-1.0, 1.0], [1.0, 2.0], [-0.01, 0.0, 0.01])

    def setUp(self):
        self.scenario = upa_link(count=4)
        self.h = random_channel(16, 16, seed=11)

    def se_of(self, px, py):
        w_t = evaluation.airy_weights(self.scenario, px, py)
        return evaluation.spectral_efficiency(self.h, w_t, evaluation.mrc(self.h, w_t))

    def test_reported_se_matches_the_weights(self):
        found = evaluation.exhaustive_airy_search(self.scenario, self.h, *self.GRIDS)
        self.assertIsNotNone(found.py)
        self.assertAlmostEqual(found.se, self.se_of(found.params, found.py), places=9)

    def test_search_beats_every_candidate_of_either_pass(self):
        found = evaluation.exhaustive_airy_search(self.scenario, self.h, *self.GRIDS)
        focused = focusing_params(0.0, 3.0)
        for triple in itertools.product(*self.GRIDS):
            candidate = AiryParams(*triple)
            self.assertLessEqual(self.se_of(candidate, focused), found.se + 1e-9, msg=triple)
            self.assertLessEqual(self.se_of(found.params, candidate), found.se + 1e-9, msg=triple)

    def test_scheme_reports_both_dimensions(self):
        settings = EvalSettings(
            b_grid=GridSpec(-1.0, 1.0, 1.0),
            f_grid=GridSpec(1.0, 2.0, 1.0),
            theta_grid=GridSpec(-0.01, 0.01, 0.01),
        )
        w_t, _, px, py = evaluation.scheme_weights(
            self.scenario, evaluation.AIRY_EXHAUSTIVE, self.h, self.h, settings=settings
        )
        self.assertIsNotNone(px)
        self.assertIsNotNone(py)
        np.testing.assert_allclose(w_t, evaluation.airy_weights(self.scenario, px, py))
        self.assertIn(evaluation.AIRY_EXHAUSTIVE, evaluation.UPA_SCHEMES)


class TestSettings(unittest.TestCase):
    def test_grid_values_are_inclusive(self):
        np.testing.assert_allclose(GridSpec(-1.0, 1.0, 0.5).values(), [-1, -0.5, 0, 0.5, 1])
        self.assertEqual(GridSpec(0.3, 3.0, 0.1).values().size, 28)
        self.assertEqual(GridSpec(1.0, 0.0, 0.1).values().size, 0)
        with self.assertRaises(ConfigurationError):
            GridSpec(0.0, 1.0, 0.0).values()

    def test_search_grids_skip_small_curving(self):
        b_values, f_values, theta_values = EvalSettings().search_grids()
        self.assertEqual(b_values.size, 60)
        self.assertTrue(np.all(np.abs(b_values) >= 0.5))
        self.assertEqual((f_values.size, theta_values.size), (28, 41))

    def test_schemes(self):
        self.assertEqual(EvalSettings().schemes_for("ULA"), evaluation.ULA_SCHEMES)
        self.assertEqual(EvalSettings().schemes_for("UPA"), evaluation.UPA_SCHEMES)
        with self.assertRaises(ConfigurationError):
            EvalSettings(schemes=("bogus",)).schemes_for("ULA")


class TestSweep(unittest.TestCase):
    def setUp(self):
        self.workspace_root = tempfile.mkdtemp()
        self.settings = EvalSettings(schemes=(evaluation.STEERING, evaluation.AIRY_CLOSED_FORM))

    def tearDown(self):
        shutil.rmtree(self.workspace_root)

    def test_empty_family(self):
        self.assertEqual(evaluation.sweep(ula_link(), SweepFamily(z_b=())), [])
        out = io.StringIO()
        evaluation.write_sweep_csv(out, [])
        self.assertEqual(out.getvalue(), ",".join(evaluation.SWEEP_HEADER) + "\n")

    def test_family_needs_edges_or_ratios(self):
        with self.assertRaises(ConfigurationError):
            SweepFamily(z_b=(1.5,), edges=(0.01,), ratios=(0.5,)).validate()

    def test_single_point(self):
        family = SweepFamily(z_b=(1.5,), ratios=(0.6,))
        rows = evaluation.sweep(ula_link(), family, settings=self.settings)
        self.assertEqual([row.scheme for row in rows], list(self.settings.schemes))
        for row in rows:
            self.assertEqual(row.status, "ok")
            self.assertAlmostEqual(row.R_bl, 0.6, places=6)
            self.assertGreaterEqual(row.SE_bits, 0.0)
            self.assertEqual(len(row.to_csv_row()), len(evaluation.SWEEP_HEADER))
        self.assertIsNotNone(rows[1].px)
        self.assertEqual(rows[1].to_csv_row()[8:11], ["", "", ""])

    def test_failed_point_keeps_its_rows(self):
        family = SweepFamily(z_b=(1.5,), edges=(0.9,))
        rows = evaluation.sweep(ula_link(), family, settings=self.settings)
        self.assertEqual(len(rows), 2)
        self.assertTrue(rows[0].status.startswith("error: DegenerateChannelError"))
        self.assertTrue(rows[1].status.startswith("error: InfeasibleDesignError"))
        self.assertIsNone(rows[1].SE_bits)

    def test_threads_keep_family_order(self):
        family = SweepFamily(z_b=(1.0, 1.5), edges=(0.005, 0.01))
        serial = evaluation.sweep(ula_link(), family, settings=self.settings)
        threaded = evaluation.sweep(ula_link(), family, settings=self.settings, jobs=3)
        self.assertEqual(len(serial), 8)
        self.assertEqual([r.to_csv_row() for r in threaded], [r.to_csv_row() for r in serial])

    def test_sweep_fills_the_channel_cache(self):
        settings = self.settings._replace(cache_dir=self.workspace_root)
        family = SweepFamily(z_b=(1.5,), edges=(0.01,))
        evaluation.sweep(ula_link(), family, settings=settings)
        self.assertEqual(len(os.listdir(self.workspace_root)), 2)

    @slow
    def test_closed_form_beats_the_conventional_beams(self):
        # 256 elements: the main lobe sits within a millimetre of the designed path here.
        family = SweepFamily(z_b=(1.5,), ratios=(0.5, 0.6, 0.7, 0.8, 0.9))
        settings = EvalSettings(
            schemes=(
                evaluation.STEERING,
                evaluation.FOCUSING,
                evaluation.AIRY_CLOSED_FORM,
                evaluation.AIRY_EXHAUSTIVE,
            ),
            cache_dir=self.workspace_root,
        )
        rows = evaluation.sweep(ula_link(count=256), family, settings=settings, jobs=4)
        self.assertTrue(all(row.status == "ok" for row in rows))
        for start in range(0, len(rows), 4):
            steering, focusing, closed, searched = (row.SE_bits for row in rows[start : start + 4])
            msg = f"R_bl={rows[start].R_bl}"
            self.assertGreater(closed, focusing, msg=msg)
            self.assertGreater(closed, steering, msg=msg)
            self.assertLessEqual(searched - closed, 0.5, msg=msg)

    @slow
    def test_upa_modes_agree_on_the_desk_family(self):
        family = SweepFamily(z_b=(1.5,), edges=(0.0, 0.01, 0.02), y_edge=0.02)
        settings = EvalSettings(
            schemes=(evaluation.UPA_MODE1, evaluation.UPA_MODE2), cache_dir=self.workspace_root
        )
        rows = evaluation.sweep(upa_link(), family, settings=settings, jobs=4)
        self.assertEqual(len(rows), 6)
        self.assertTrue(all(row.status == "ok" for row in rows), msg=[r.status for r in rows])
        for start in range(0, len(rows), 2):
            mode1, mode2 = (row.SE_bits for row in rows[start : start + 2])
            self.assertLessEqual(abs(mode1 - mode2), 0.3, msg=f"edge={rows[start].edge}")
