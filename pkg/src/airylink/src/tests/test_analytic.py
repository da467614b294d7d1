import math
import unittest

import numpy as np

from airylink import analytic
from airylink.analytic import AnalyticContext, InitialField
from airylink.errors import DegenerateParameterError, DomainError
from airylink.phase_synthesis import AiryParams
from tests.scenarios import HALF, WAVELENGTH, slow

# 256 half-wavelength elements, Gaussian waist half the aperture span.
LARGE = AnalyticContext(wavelength=WAVELENGTH, w0=255 * HALF / 2)
CURVED = AiryParams(B=5.0, F=0.5, theta=-0.03)


def near_trajectory_points(count: int):
    z = np.linspace(0.4, 1.2, count)
    x = analytic.trajectory_ula(z, CURVED, LARGE) + np.resize([-2e-3, 0.0, 2e-3], count)
    return x, z


class TestClosedForm(unittest.TestCase):
    def test_coefficients(self):
        coeffs = analytic.field_coefficients(0.1, 0.8, CURVED, LARGE)
        self.assertAlmostEqual(coeffs.A, (10 * math.pi) ** 3)
        self.assertAlmostEqual(complex(coeffs.C2).imag, math.pi / WAVELENGTH * LARGE.s_i)

    def test_degenerate_inputs(self):
        with self.assertRaises(DegenerateParameterError):
            analytic.closed_form_field_ula(0.0, 1.0, CURVED._replace(B=0.0), LARGE)
        with self.assertRaises(DomainError):
            analytic.closed_form_field_ula(0.0, -1.0, CURVED, LARGE)
        with self.assertRaises(DegenerateParameterError):
            flat = AiryParams(0.0, math.inf, 0.0)
            analytic.closed_form_field_upa(0.0, 0.0, 1.0, flat, flat, LARGE)

    def test_gaussian_kernel_matches_the_gaussian_beam(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.02)
        x = np.linspace(-0.05, 0.05, 11)
        z = 0.7
        flat = AiryParams(0.0, math.inf, 0.0)
        prefactor = np.exp(1j * ctx.k * z) / (1j * WAVELENGTH * z)
        np.testing.assert_allclose(
            prefactor * analytic.kernel(x, z, flat, ctx),
            analytic.gaussian_beam_field_1d(x, z, 0.02, WAVELENGTH),
            rtol=1e-12,
        )

    def test_upa_field_is_separable(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.05, w0_y=0.03)
        px, py = CURVED, AiryParams(-3.0, 1.0, 0.02)
        z = 0.9
        field = analytic.closed_form_field_upa(0.02, -0.01, z, px, py, ctx)
        along_x = analytic.closed_form_field_ula(0.02, z, px, ctx.along("x"))
        along_y = analytic.closed_form_field_ula(-0.01, z, py, ctx.along("y"))
        prefactor = np.exp(1j * ctx.k * z) / (1j * WAVELENGTH * z)
        expected = along_x * along_y / prefactor
        self.assertLess(abs(field - expected), 1e-9 * abs(field))

    def test_matches_the_oracle_near_the_trajectory(self):
        initial = InitialField.airy(CURVED, LARGE)
        for x, z in zip(*near_trajectory_points(12)):
            closed = analytic.closed_form_field_ula(x, z, CURVED, LARGE)
            oracle = analytic.fresnel_oracle(x, z, initial, LARGE)
            self.assertLess(abs(closed - oracle) / abs(oracle), 0.02, msg=f"x={x}, z={z}")

    @slow
    def test_matches_the_oracle_at_many_points(self):
        initial = InitialField.airy(CURVED, LARGE)
        errors = []
        for x, z in zip(*near_trajectory_points(100)):
            closed = analytic.closed_form_field_ula(x, z, CURVED, LARGE)
            oracle = analytic.fresnel_oracle(x, z, initial, LARGE)
            errors.append(abs(closed - oracle) / abs(oracle))
        self.assertLess(max(errors), 0.02)

    def test_gaussian_oracle(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.02)
        initial = InitialField.gaussian(ctx)
        for x in (-0.03, 0.0, 0.01):
            oracle = analytic.fresnel_oracle(x, 0.5, initial, ctx)
            expected = analytic.gaussian_beam_field_1d(x, 0.5, 0.02, WAVELENGTH)
            self.assertLess(abs(oracle - expected) / abs(expected), 1e-5)

    def test_scaled_initial_field(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.02)
        initial = InitialField.gaussian(ctx)
        base = analytic.fresnel_integral(0.01, 0.5, initial, WAVELENGTH)
        scaled = analytic.fresnel_integral(0.01, 0.5, initial.scaled(2j), WAVELENGTH)
        self.assertAlmostEqual(abs(scaled - 2j * base), 0.0, delta=1e-7)


class TestTrajectory(unittest.TestCase):
    def test_straight_ray_without_curving(self):
        z = np.array([0.5, 1.0, 2.0])
        x = analytic.trajectory_ula(z, AiryParams(0.0, 1.0, 0.1), LARGE)
        np.testing.assert_allclose(x, -math.sin(0.1) * z)

    def test_mirror_symmetry(self):
        z = np.linspace(0.2, 1.5, 7)
        np.testing.assert_allclose(
            analytic.trajectory_ula(z, CURVED.mirrored(), LARGE),
            -analytic.trajectory_ula(z, CURVED, LARGE),
        )

    def test_side_lobes_trail_the_main_lobe(self):
        z = np.linspace(0.3, 1.2, 5)
        lobes = [analytic.trajectory_ula(z, CURVED, LARGE, lobe) for lobe in range(3)]
        self.assertTrue(np.all(lobes[0] < lobes[1]))
        self.assertTrue(np.all(lobes[1] < lobes[2]))

    def test_validity_interval(self):
        lo, hi = analytic.validity_interval(1.5, 3.0)
        self.assertAlmostEqual(lo, 0.15)
        self.assertAlmostEqual(hi, 3.75)
        with self.assertRaises(DomainError):
            analytic.trajectory_ula(4.0, CURVED, LARGE, validity=(0.15, 3.75))
        with self.assertRaises(DomainError):
            analytic.trajectory_ula(1.0, CURVED, LARGE, lobe=3)

    def test_sampling(self):
        sampled = analytic.sample_trajectory([0.5, 1.0], CURVED, LARGE, lobe=1)
        self.assertEqual(sampled.lobe, 1)
        self.assertIsNone(sampled.y)
        with self.assertRaises(DomainError):
            analytic.sample_trajectory([1.0, 0.5], CURVED, LARGE)
        empty = analytic.sample_trajectory([], CURVED, LARGE)
        self.assertEqual(empty.x.size, 0)

    def test_lobe_offset(self):
        z = np.array([0.5, 1.0, 2.0])
        offset = analytic.lobe_offset(5.0, LARGE, z)
        expected = WAVELENGTH * z / (1.01879 * 4 * math.pi ** 2 * 5.0 * LARGE.w0 ** 2)
        np.testing.assert_allclose(offset, expected, rtol=1e-4)
        np.testing.assert_allclose(analytic.lobe_offset(-5.0, LARGE, z), offset)
        self.assertEqual(analytic.lobe_offset(0.0, LARGE, 1.0), 0.0)
        # A narrower window tilts the main lobe harder.
        narrow = AnalyticContext(wavelength=WAVELENGTH, w0=LARGE.w0 / 4)
        self.assertAlmostEqual(analytic.lobe_offset(5.0, narrow, 1.0) / offset[1], 16.0)

    def test_upa_trajectory(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.05, w0_y=0.03)
        py = AiryParams(-3.0, 1.0, 0.02)
        sampled = analytic.sample_trajectory([0.5, 1.0], CURVED, ctx, py=py)
        np.testing.assert_allclose(
            sampled.y, analytic.trajectory_ula([0.5, 1.0], py, AnalyticContext(WAVELENGTH, 0.03))
        )


class TestMagnitude(unittest.TestCase):
    def test_matches_the_closed_form_on_the_trajectory(self):
        z = np.linspace(0.3, 1.2, 10)
        x = analytic.trajectory_ula(z, CURVED, LARGE)
        closed = np.abs(analytic.closed_form_field_ula(x, z, CURVED, LARGE))
        predicted = analytic.magnitude_on_trajectory(CURVED.B, CURVED.F, LARGE, z)
        np.testing.assert_allclose(predicted / closed, 1.0, atol=0.05)

    def test_dropping_the_quadratic_term_raises_the_estimate(self):
        full = analytic.magnitude_on_trajectory(5.0, 0.5, LARGE, 1.0)
        reduced = analytic.magnitude_on_trajectory(5.0, 0.5, LARGE, 1.0, include_b2_term=False)
        self.assertGreater(reduced, full)
        with self.assertRaises(DegenerateParameterError):
            analytic.magnitude_on_trajectory(0.0, 0.5, LARGE, 1.0)

    def test_best_curving_grows_with_distance(self):
        # F = 0.5 m: B = 4 wins from ~0.62 m, B = 5 from ~0.86 m and B = 6 beyond ~1.8 m.
        z = np.linspace(0.5, 3.0, 2501)
        candidates = np.array([3.0, 4.0, 5.0, 6.0])
        magnitudes = np.array(
            [analytic.magnitude_on_trajectory(B, 0.5, LARGE, z) for B in candidates]
        )
        best = candidates[np.argmax(magnitudes, axis=0)]
        switches = np.flatnonzero(np.diff(best))
        np.testing.assert_array_equal(best[np.r_[0, switches + 1]], candidates)
        for index, expected in zip(switches, (0.62, 0.86, 1.8)):
            self.assertLess(abs(z[index + 1] - expected), 0.15 * expected, msg=expected)

    def test_upa_magnitude_is_a_product(self):
        ctx = AnalyticContext(wavelength=WAVELENGTH, w0=0.05, w0_y=0.03)
        px, py = CURVED, AiryParams(-3.0, 1.0, 0.02)
        z = 0.8
        ux = analytic.magnitude_on_trajectory(px.B, px.F, ctx.along("x"), z)
        uy = analytic.magnitude_on_trajectory(py.B, py.F, ctx.along("y"), z)
        product = float(analytic.magnitude_upa(px, py, ctx, z))
        self.assertAlmostEqual(product / float(ux * uy * WAVELENGTH * z), 1.0, places=12)
