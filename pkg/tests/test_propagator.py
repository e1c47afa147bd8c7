"""Tests for the propagator coefficient cascade."""

import math
import unittest
from dataclasses import replace

import numpy as np

from cat_decoherence.errors import CausticError
from cat_decoherence.model import ModelParams, normal_basis
from cat_decoherence.oracle import delta_expanded_extended, real_coeffs_extended
from cat_decoherence.propagator import (
    PropagatorCascade,
    c_linear,
    c_linear_explicit,
    cascade_report,
    complex_coeffs,
    delta_direct,
    delta_expanded,
    lambda_mu_direct,
    lambda_mu_expanded,
    mode_factors,
    phi_contracted,
    phi_expanded,
    phi_long,
    quadratic_d,
    quadratic_d_expanded,
    real_coeffs,
    relative_gap,
    theta,
)

CHECK_TIME = 3.005


class TestModeFactors(unittest.TestCase):
    """Test cases for mode_factors and caustic detection."""

    @classmethod
    def setUpClass(cls):
        cls.basis = normal_basis(ModelParams())

    def test_free_mode(self):
        """Test that the free mode contributes m3/t to g and h."""
        g, h = mode_factors(self.basis, 2.0)
        self.assertAlmostEqual(g[2], 1.5)
        self.assertAlmostEqual(h[2], 1.5)

    def test_oscillating_modes(self):
        """Test g = m w cot(w t) and h = m w / sin(w t)."""
        g, h = mode_factors(self.basis, 1.3)
        w = self.basis.Omega1
        self.assertAlmostEqual(g[0], self.basis.m1 * w / math.tan(w * 1.3), places=14)
        self.assertAlmostEqual(h[0], self.basis.m1 * w / math.sin(w * 1.3), places=14)

    def test_zero_time_is_caustic(self):
        """Test that t = 0 raises CausticError for the free mode."""
        with self.assertRaises(CausticError) as ctx:
            mode_factors(self.basis, 0.0)
        self.assertEqual(ctx.exception.mode, 3)

    def test_half_period_is_caustic(self):
        """Test that sin(Omega1 t) = 0 raises CausticError naming the caustic time."""
        t = math.pi / self.basis.Omega1
        with self.assertRaises(CausticError) as ctx:
            mode_factors(self.basis, t)
        self.assertEqual(ctx.exception.mode, 1)
        self.assertAlmostEqual(ctx.exception.nearest_time, t, places=9)


class TestRealCoefficients(unittest.TestCase):
    """Test cases for A, B, alpha, C and D."""

    @classmethod
    def setUpClass(cls):
        cls.params = ModelParams()
        cls.basis = normal_basis(cls.params)
        cls.real = real_coeffs(cls.basis, CHECK_TIME)
        cls.points = np.random.default_rng(3).normal(scale=4.0, size=(20, 3))

    def test_symmetry(self):
        """Test that B and alpha are symmetric and B has a zero diagonal."""
        np.testing.assert_array_equal(self.real.B, self.real.B.T)
        np.testing.assert_array_equal(np.diag(self.real.B), np.zeros(3))
        np.testing.assert_allclose(self.real.alpha, self.real.alpha.T, rtol=1e-14)

    def test_quadratic_form_identity(self):
        """Test the mode form of D(X) against its A/B expansion."""
        gap = relative_gap(
            quadratic_d(self.real, self.points), quadratic_d_expanded(self.real, self.points)
        )
        self.assertLess(gap, 1e-9)

    def test_quadratic_form_identity_random_times(self):
        """Test D(X) against its A/B expansion pointwise over random positions and times."""
        rng = np.random.default_rng(17)
        worst = 0.0
        for X, dt in zip(rng.normal(scale=5.0, size=(1000, 3)), rng.uniform(0.05, 6.5, 1000)):
            real = real_coeffs(self.basis, float(dt))
            direct = quadratic_d(real, X)
            expanded = quadratic_d_expanded(real, X)
            # the form is indefinite, so D(X) is measured against its term magnitudes
            scale = 0.5 * np.sum(np.abs(real.g) * (real.rows @ X) ** 2)
            worst = max(worst, abs(direct - expanded) / max(abs(direct), scale))
        self.assertLess(worst, 1e-9)

    def test_linear_forms_agree(self):
        """Test C_i(X) from alpha against the mode-by-mode form."""
        gap = relative_gap(
            c_linear(self.real, self.points), c_linear_explicit(self.real, self.points)
        )
        self.assertLess(gap, 1e-12)

    def test_extended_precision(self):
        """Test A, B and alpha against their extended-precision evaluation."""
        A, B, alpha = real_coeffs_extended(self.params, CHECK_TIME)
        self.assertLess(relative_gap(self.real.A, A.astype(float)), 1e-9)
        self.assertLess(relative_gap(self.real.B, B.astype(float)), 1e-9)
        self.assertLess(relative_gap(self.real.alpha, alpha.astype(float)), 1e-9)


class TestComplexCoefficients(unittest.TestCase):
    """Test cases for the complex cascade and the packet exponent."""

    @classmethod
    def setUpClass(cls):
        cls.params = ModelParams()
        cls.basis = normal_basis(cls.params)
        cls.real = real_coeffs(cls.basis, CHECK_TIME)
        cls.cc = complex_coeffs(cls.real, cls.params.cats, cls.params.hbar)
        cls.points = np.random.default_rng(11).normal(scale=4.0, size=(10, 3))

    def test_abrev_real_part(self):
        """Test Re Abrev = 1 / (4 sigma^2)."""
        np.testing.assert_allclose(self.cc.Abrev.real, 0.25)
        np.testing.assert_allclose(self.cc.Abrev.imag, -self.real.A)

    def test_delta_dual_path(self):
        """Test Delta(t) from Abrev/Bbrev against the printed expansion."""
        expanded = delta_expanded(self.real, self.cc.sigmas, self.cc.hbar)
        self.assertLess(relative_gap(delta_direct(self.cc.Abrev, self.cc.Bbrev), expanded), 1e-9)

    def test_delta_extended_precision(self):
        """Test Delta(t) against its extended-precision expansion."""
        re, im = delta_expanded_extended(self.params, CHECK_TIME)
        self.assertLess(relative_gap(self.cc.Delta, complex(float(re), float(im))), 1e-9)

    def test_lambda_mu_dual_path(self):
        """Test lambda and mu against their printed expansions."""
        lam, mu = lambda_mu_direct(self.cc.Abrev, self.cc.Bbrev)
        lam_x, mu_x = lambda_mu_expanded(self.real, self.cc.sigmas, self.cc.hbar)
        self.assertLess(relative_gap(lam, lam_x), 1e-9)
        self.assertLess(relative_gap(mu, mu_x), 1e-9)

    def test_unequal_widths_dual_path(self):
        """Test the dual paths with three different packet widths."""
        params = ModelParams(
            cats=({"d": -5.0, "sigma": 0.5}, {"d": 6.0, "sigma": 1.0}, {"d": 7.5, "sigma": 1.5})
        )
        basis = normal_basis(params)
        real = real_coeffs(basis, 1.7)
        cc = complex_coeffs(real, params.cats, params.hbar)
        expanded = delta_expanded(real, cc.sigmas, cc.hbar)
        self.assertLess(relative_gap(cc.Delta, expanded), 1e-9)
        lam_x, mu_x = lambda_mu_expanded(real, cc.sigmas, cc.hbar)
        self.assertLess(relative_gap(cc.lam, lam_x), 1e-9)
        self.assertLess(relative_gap(cc.mu, mu_x), 1e-9)

    def test_phi_three_routes(self):
        """Test the contracted, long and La/Mu routes to Phi."""
        for X in self.points[:4]:
            for k in range(8):
                reference = phi_contracted(self.cc, X, k)
                self.assertLess(relative_gap(reference, phi_long(self.cc, X, k)), 1e-9)
                self.assertLess(relative_gap(reference, phi_expanded(self.cc, X, k)), 1e-9)

    def test_theta_matches_exponent_form(self):
        """Test the Phi/Delta exponent against the quadratic exponent form."""
        form = self.cc.exponent_form
        values = form.evaluate(self.points)
        self.assertEqual(values.shape, (10, 8))
        for X, row in zip(self.points, values):
            for k in range(8):
                exponent = theta(self.cc, X, k)
                scale = max(1.0, abs(row[k]))
                self.assertLess(abs(exponent.reTheta - row[k].real) / scale, 1e-9)
                self.assertLess(abs(exponent.imTheta - row[k].imag) / scale, 1e-9)
                self.assertEqual(exponent.phi_half, 0.5 * self.cc.phi)

    def test_phi_branch_independence(self):
        """Test that shifting phi by pi or 2 pi changes no density value."""

        def amplitudes(cc, X):
            values = []
            for k in range(8):
                exponent = theta(cc, X, k)
                phase = exponent.imTheta + exponent.phi_half
                values.append(math.exp(exponent.reTheta) * np.exp(1j * phase))
            return np.array(values)

        for shift in (math.pi, 2.0 * math.pi, -2.0 * math.pi):
            shifted = replace(self.cc, phi=self.cc.phi + shift)
            for X in self.points[:4]:
                with self.subTest(shift=shift):
                    base = amplitudes(self.cc, X)
                    moved = amplitudes(shifted, X)
                    pairs = np.outer(base, base.conj())
                    self.assertLess(
                        relative_gap(np.outer(moved, moved.conj()).real, pairs.real), 1e-12
                    )
                    self.assertLess(
                        relative_gap(abs(moved.sum()) ** 2, abs(base.sum()) ** 2), 1e-12
                    )

    def test_theta_rejects_bad_packet(self):
        """Test that packet indices outside 0..7 raise ValueError."""
        with self.assertRaises(ValueError):
            theta(self.cc, np.zeros(3), 8)

    def test_density_decays(self):
        """Test that the real part of the quadratic form is negative definite."""
        eigs = np.linalg.eigvalsh(self.cc.exponent_form.Q.real)
        self.assertTrue(np.all(eigs < 0.0))

    def test_peak_real_is_maximum(self):
        """Test that peak_real bounds Re Theta and is attained."""
        form = self.cc.exponent_form
        peaks = form.peak_real()
        values = form.evaluate(self.points).real
        self.assertTrue(np.all(values <= peaks + 1e-9))
        R = form.Q.real
        for k in range(8):
            argmax = -0.5 * np.linalg.solve(R, form.L[k].real)
            self.assertAlmostEqual(form.evaluate(argmax)[k].real, peaks[k], places=9)

    def test_cascade_report(self):
        """Test the keyed text dump of the cascade."""
        text = cascade_report(self.cc)
        self.assertTrue(text.startswith(f"t = {CHECK_TIME:.17g}\n"))
        self.assertIn("ReDelta = ", text)
        self.assertIn("mu12 = ", text)
        self.assertIn("La0^(7) = ", text)
        for line in text.splitlines():
            self.assertIn(" = ", line)


class TestPropagatorCascade(unittest.TestCase):
    """Test cases for the per-time coefficient cache."""

    def test_cache_returns_same_object(self):
        """Test that repeated lookups reuse the cached coefficients."""
        params = ModelParams()
        cascade = PropagatorCascade(normal_basis(params), params.cats)
        first = cascade.coeffs(1.0)
        self.assertIs(cascade.coeffs(1.0), first)
        cascade.coeffs(2.0)
        self.assertEqual(len(cascade), 2)


class TestRelativeGap(unittest.TestCase):
    """Test cases for relative_gap."""

    def test_identical_and_zero(self):
        """Test zero gap for identical inputs and for all-zero inputs."""
        self.assertEqual(relative_gap([1.0, 2.0], [1.0, 2.0]), 0.0)
        self.assertEqual(relative_gap(0.0, 0.0), 0.0)

    def test_relative_scale(self):
        """Test that the gap is scaled by the larger magnitude."""
        self.assertAlmostEqual(relative_gap(1.0, 1.1), 0.1 / 1.1)


if __name__ == "__main__":
    unittest.main()
