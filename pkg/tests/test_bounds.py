import math

import numpy as np
import pytest

from consensuslab.bounds import (
    BidirCertificate,
    GrcCertificate,
    bidir_bound_smooth,
    bidir_certificate,
    bidir_girc_bound,
    convergence_time,
    convergence_time_bound,
    default_tolerance,
    girc_bound,
    grc_bound,
    grc_bound_smooth,
    grc_certificate,
    metrics,
    verify_bidir_girc,
    verify_dini_envelopes,
    verify_girc,
    verify_grc,
)
from consensuslab.dynamics import DisturbanceSpec, WeightSpec, integrate
from consensuslab.errors import DomainError, PreconditionError
from consensuslab.graph import Digraph, JcPartition, SwitchingSignal

UNIT = WeightSpec(kind="constant", scale=1.0, a_low=1.0, a_high=1.0)


def two_node_traj(horizon=10.0, step=1e-2):
    sig = SwitchingSignal.constant(Digraph.from_arcs(2, [(1, 2)]), horizon=horizon)
    return integrate(sig, UNIT, DisturbanceSpec.zero(2), 0.0, [1.0, 0.0], step=step)


def reference_contraction(n, d0, window, tau_d, a_low, a_high):
    """Independent re-evaluation with a different algebraic composition:
    a single exponential of the summed exponents."""
    block = ((d0 - 1) * n + 1) * (window + 2 * tau_d)
    count = math.ceil(block / tau_d - 1e-12)
    exponent = -count * a_high * (d0 + 1) * (n - 1) - (n - 2) * d0 * a_high
    return math.exp(exponent + d0 * math.log(1 - math.exp(-a_low))) / 2


class TestGrcCertificate:
    def test_reference_example(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        assert cert.extended_window == 3.0
        assert cert.block_length == 3.0
        assert cert.dwell_count == 3
        expected = reference_contraction(2, 1, 1.0, 1.0, 1.0, 1.0)
        assert cert.contraction == pytest.approx(expected, rel=1e-10)
        assert cert.decay_rate == pytest.approx(
            math.log(1 / (1 - expected)) / 3.0, rel=1e-10
        )

    def test_contraction_decreases_in_weight_high(self):
        vals = [grc_certificate(3, 2, 1.0, 0.5, 0.5, a).contraction for a in (0.5, 1.0, 2.0)]
        assert vals[0] > vals[1] > vals[2]

    def test_pure_function(self):
        a = grc_certificate(4, 2, 2.0, 0.5, 0.7, 1.3)
        b = grc_certificate(4, 2, 2.0, 0.5, 0.7, 1.3)
        assert a == b

    def test_contraction_in_unit_interval_on_grid(self):
        # checked in log space: extreme corners sit below the float range,
        # where 0 < xi < 1 means exactly log(xi) finite and negative
        for n in range(2, 9):
            for a in (0.5, 1.0, 2.0):
                cert = grc_certificate(n, max(1, n - 2), 1.0, 1.0, a, a)
                assert math.isfinite(cert.contraction_log) and cert.contraction_log < 0
                assert math.isfinite(cert.usc_contraction_log) and cert.usc_contraction_log < 0
                assert cert.contraction < 1 and cert.usc_contraction < 1
                assert cert.decay_rate >= 0
                assert cert.sup_gain > 0

    def test_usc_block_matches_forced_diameter(self):
        cert = grc_certificate(4, 3, 1.0, 1.0, 1.0, 1.0)
        assert cert.usc_block_length == 3 * cert.extended_window

    def test_invalid_params(self):
        for args in ((1, 1, 1.0, 1.0, 1.0, 1.0), (2, 0, 1.0, 1.0, 1.0, 1.0),
                     (2, 1, -1.0, 1.0, 1.0, 1.0), (2, 1, 1.0, 1.0, 2.0, 1.0)):
            with pytest.raises(DomainError):
                grc_certificate(*args)


class TestGrcBound:
    cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)

    def test_at_time_zero(self):
        assert grc_bound(self.cert, 5.0, 0.0, 0.0) == 5.0

    def test_zero_initial_spread(self):
        w_inf = 0.25
        assert grc_bound(self.cert, 0.0, 7.0, w_inf) == pytest.approx(
            self.cert.sup_gain * w_inf
        )

    def test_three_blocks(self):
        got = grc_bound(self.cert, 1.0, 3 * self.cert.block_length, 0.0)
        assert got == pytest.approx((1 - self.cert.contraction) ** 3, rel=1e-12)

    def test_smooth_form_dominates_block_form(self):
        for t in np.linspace(0, 40, 41):
            assert grc_bound_smooth(self.cert, 1.0, float(t)) >= grc_bound(
                self.cert, 1.0, float(t), 0.0
            ) - 1e-12


class TestGircBound:
    cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)

    def test_zero_noise_reduces_to_decay(self):
        w = DisturbanceSpec.zero(2)
        assert girc_bound(self.cert, 2.0, 7.0, w) == pytest.approx(
            (1 - self.cert.contraction) ** 2 * 2.0
        )

    def test_constant_noise_linear_growth(self):
        w = DisturbanceSpec.constant([0.3, -0.3])
        t = 5.0
        expected = (1 - self.cert.contraction) ** 1 * 1.0 + 5 * 0.3 * t
        assert girc_bound(self.cert, 1.0, t, w) == pytest.approx(expected, rel=1e-8)

    def test_sharpened_below_plain(self):
        w = DisturbanceSpec.sinusoid([0.4, 0.2], 3.0)
        for t in (0.5, 3.0, 7.5, 12.0):
            sharp = girc_bound(self.cert, 1.0, t, w, sharpened=True)
            plain = girc_bound(self.cert, 1.0, t, w, sharpened=False)
            assert sharp <= plain + 1e-12


class TestBidirCertificate:
    def test_reference_window_gain(self):
        cert = bidir_certificate(2, 1, 1.0, 1.0, _unit_partition())
        expected = math.exp(-2.0) * (1 - math.exp(-2.0))
        assert cert.window_gain == pytest.approx(expected, abs=1e-12)
        assert cert.hold_factor == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_window_gain_below_transfer_times_hold(self):
        # proof-step relaxation: the per-window gain never exceeds the
        # product of the transfer and hold factors
        for n in range(2, 9):
            for a in (0.5, 1.0, 2.0):
                cert = bidir_certificate(n, 1, a, a, _unit_partition())
                zeta = math.exp(-(n - 2) * a) * (1 - math.exp(-a))
                m0 = math.exp(-(n - 1) * a)
                assert cert.window_gain <= zeta * m0 + 1e-15

    def test_block_contraction_below_one(self):
        for d0 in (1, 2, 5):
            cert = bidir_certificate(4, d0, 0.5, 1.5, _unit_partition())
            assert 0 < cert.block_contraction < 1


def _unit_partition(k=6, horizon=10.0):
    return JcPartition(boundaries=tuple(float(i) for i in range(1, k + 1)),
                       complete=True, horizon=horizon, tau_d=1.0)


class TestBidirBound:
    def test_no_windows_closed(self):
        cert = bidir_certificate(3, 2, 1.0, 1.0, _unit_partition())
        w = DisturbanceSpec.zero(3)
        assert bidir_girc_bound(cert, 4.0, 0.5, w) == 4.0

    def test_block_exponent_arithmetic(self):
        d0 = 2
        cert = bidir_certificate(3, d0, 1.0, 1.0, _unit_partition(k=6))
        w = DisturbanceSpec.zero(3)
        for n_blocks in (1, 2, 3):
            t = n_blocks * d0 + 0.5  # strictly above the (n*d0)-th boundary
            got = bidir_girc_bound(cert, 1.0, t, w)
            assert got == pytest.approx((1 - cert.block_contraction) ** n_blocks)

    def test_nonincreasing_in_window_count(self):
        cert = bidir_certificate(3, 1, 1.0, 1.0, _unit_partition(k=8))
        w = DisturbanceSpec.zero(3)
        vals = [bidir_girc_bound(cert, 1.0, t, w) for t in np.linspace(0, 8.4, 43)]
        assert all(b <= a + 1e-15 for a, b in zip(vals[:-1], vals[1:]))

    def test_beyond_partition_coverage(self):
        cert = bidir_certificate(3, 1, 1.0, 1.0, _unit_partition(k=3, horizon=5.0))
        with pytest.raises(DomainError):
            bidir_girc_bound(cert, 1.0, 6.0, DisturbanceSpec.zero(3))

    def test_smooth_form_dominates(self):
        cert = bidir_certificate(3, 1, 1.0, 1.0, _unit_partition(k=8))
        w = DisturbanceSpec.zero(3)
        for t in np.linspace(0.1, 8.4, 20):
            assert bidir_bound_smooth(cert, 1.0, float(t)) >= bidir_girc_bound(
                cert, 1.0, float(t), w
            ) - 1e-12


class TestMetrics:
    def test_consensus_state(self):
        sig = SwitchingSignal.constant(Digraph.empty(3), horizon=2.0)
        traj = integrate(sig, UNIT, DisturbanceSpec.zero(3), 0.0, [1.0, 1.0, 1.0], step=0.5)
        assert np.allclose(metrics(traj).spread, 0.0)

    def test_two_node_spread(self):
        traj = two_node_traj(horizon=3.0)
        m = metrics(traj)
        assert np.max(np.abs(m.spread - np.exp(-m.times))) < 1e-6

    def test_permutation_invariance(self):
        sig = SwitchingSignal.constant(Digraph.empty(3), horizon=1.0)
        a = integrate(sig, UNIT, DisturbanceSpec.zero(3), 0.0, [3.0, 1.0, 2.0], step=0.5)
        b = integrate(sig, UNIT, DisturbanceSpec.zero(3), 0.0, [1.0, 2.0, 3.0], step=0.5)
        assert np.allclose(metrics(a).spread, metrics(b).spread)


class TestConvergenceTime:
    def test_two_node_at_e_inverse(self):
        traj = two_node_traj()
        t = convergence_time(traj, math.exp(-1.0))
        assert t == pytest.approx(1.0, abs=2e-2)

    def test_eps_out_of_range(self):
        traj = two_node_traj(horizon=1.0)
        with pytest.raises(DomainError):
            convergence_time(traj, 1.0)

    def test_zero_initial_spread_rejected(self):
        sig = SwitchingSignal.constant(Digraph.empty(2), horizon=1.0)
        traj = integrate(sig, UNIT, DisturbanceSpec.zero(2), 0.0, [1.0, 1.0], step=0.5)
        with pytest.raises(PreconditionError):
            convergence_time(traj, 0.5)

    def test_never_converging(self):
        sig = SwitchingSignal.constant(Digraph.empty(2), horizon=2.0)
        traj = integrate(sig, UNIT, DisturbanceSpec.zero(2), 0.0, [1.0, 0.0], step=0.5)
        assert convergence_time(traj, 0.5) is None

    def test_bound_reference_value(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        assert convergence_time_bound(cert, 0.5) == pytest.approx(2656.2215, rel=1e-6)

    def test_bound_monotone_in_eps(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        vals = [convergence_time_bound(cert, e) for e in (0.5, 0.1, 0.01, 0.001)]
        assert vals == sorted(vals)

    def test_usc_mode_uses_starred_pair(self):
        cert = grc_certificate(3, 2, 1.0, 1.0, 1.0, 1.0)
        uqsc = convergence_time_bound(cert, 0.1, mode="uqsc")
        usc = convergence_time_bound(cert, 0.1, mode="usc")
        assert uqsc != usc
        with pytest.raises(DomainError):
            convergence_time_bound(cert, 0.1, mode="nope")


class TestVerification:
    def test_grc_on_closed_form(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        traj = two_node_traj()
        rep = verify_grc(traj, cert, DisturbanceSpec.zero(2))
        assert rep.ok and rep.n_samples == len(traj.times)

    def test_girc_both_forms_on_closed_form(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        traj = two_node_traj()
        for sharpened in (False, True):
            assert verify_girc(traj, cert, DisturbanceSpec.zero(2), sharpened=sharpened).ok

    def test_report_serializes(self):
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        rep = verify_grc(two_node_traj(horizon=2.0), cert, DisturbanceSpec.zero(2))
        doc = rep.to_dict()
        assert doc["ok"] and doc["violations"] == [] and doc["kind"] == "grc"

    def test_violation_detected_with_fake_tight_bound(self):
        # shrink the certificate gain artificially; the check must flag it
        cert = grc_certificate(2, 1, 1.0, 1.0, 1.0, 1.0)
        import dataclasses

        fake = dataclasses.replace(cert, sup_gain=0.0)
        w = DisturbanceSpec.constant([0.0, 2.0])
        sig = SwitchingSignal.constant(Digraph.empty(2), horizon=2.0)
        traj = integrate(sig, UNIT, w, 0.0, [0.0, 0.0], step=0.1)
        rep = verify_grc(traj, fake, w)
        assert not rep.ok
        assert rep.violations[0].lhs > rep.violations[0].rhs

    def test_envelopes_zero_noise_monotone(self):
        rep = verify_dini_envelopes(two_node_traj(), DisturbanceSpec.zero(2))
        assert rep.ok and rep.n_pairs > 0

    def test_envelopes_with_split_noise(self):
        sig = SwitchingSignal.constant(Digraph.from_arcs(2, [(1, 2)]), horizon=6.0)
        w = DisturbanceSpec.split(2, [1], 1.0, 1.0, 3.0)
        traj = integrate(sig, UNIT, w, 0.0, [1.0, 0.0], step=1e-2)
        assert verify_dini_envelopes(traj, w, tol=1e-4).ok

    def test_bidir_verify_on_linked_pair(self):
        g = Digraph.from_arcs(2, [(1, 2), (2, 1)], bidirectional=True)
        sig = SwitchingSignal.constant(g, horizon=8.0, tau_d=1.0)
        from consensuslab.graph import jc_partition

        part = jc_partition(sig)
        cert = bidir_certificate(2, 1, 1.0, 1.0, part)
        w = DisturbanceSpec.exp_vanishing([0.2, 0.1], 1.0)
        traj = integrate(sig, UNIT, w, 0.0, [1.0, 0.0], step=1e-2)
        assert verify_bidir_girc(traj, cert, w).ok

    def test_default_tolerance_scales_with_step(self):
        a = default_tolerance(two_node_traj(horizon=1.0, step=1e-2))
        b = default_tolerance(two_node_traj(horizon=1.0, step=1e-1))
        assert b > a


class TestVanishingNoisePropositions:
    def test_sup_vanishing_noise_reaches_consensus_under_uqsc(self):
        # exp-vanishing noise: the spread falls below eps*H0 well before the
        # certificate-predicted horizon (the prediction is conservative)
        from consensuslab.scenarios import random_uqsc

        sc = random_uqsc(3, 1.5, 0.5, 80.0, seed=12)
        w = DisturbanceSpec.exp_vanishing([0.1] * 3, decay=0.5)
        traj = integrate(sc.signal, sc.weights, w, 0.0, sc.x0)
        h = traj.spread()
        eps = 0.05
        hits = np.nonzero(h / h[0] <= eps)[0]
        assert hits.size, "spread never reached the target"
        measured = float(traj.times[hits[0]])

        from consensuslab.graph import generalized_diameter, union_over

        d0 = generalized_diameter(union_over(sc.signal, 0.0, sc.horizon))
        cert = grc_certificate(3, d0, 1.5, 0.5, 0.5, 0.5)
        # time for the sup-gain term to fall below eps*H0/2, plus the
        # certified decay time for the remaining spread
        t_noise = math.log(cert.sup_gain * 0.1 * 2 / (eps * h[0])) / 0.5
        predicted = t_noise + convergence_time_bound(cert, eps / 2)
        assert measured <= predicted

    def test_integrable_noise_reaches_consensus_under_ijc(self):
        from consensuslab.scenarios import sparse_ijc

        sc = sparse_ijc(3, 1.3, 0.5, 100.0, seed=11)
        w = DisturbanceSpec.exp_vanishing([0.1] * 3, decay=0.5)
        traj = integrate(sc.signal, sc.weights, w, 0.0, sc.x0)
        h = traj.spread()
        assert h[-1] / h[0] <= 0.05


class TestBlockBoundaryArithmetic:
    def test_floor_exact_at_block_multiples(self):
        # block length is not a dyadic float; the rational floor must not
        # flip at exact multiples of it
        cert = grc_certificate(2, 1, 0.1, 0.1, 1.0, 1.0)
        one = grc_bound(cert, 1.0, cert.block_length, 0.0)
        below = grc_bound(cert, 1.0, cert.block_length * (1 - 1e-15), 0.0)
        assert one == pytest.approx(1 - cert.contraction, rel=1e-12)
        assert below == 1.0

    def test_three_exact_blocks(self):
        cert = grc_certificate(3, 2, 0.7, 0.3, 0.5, 1.1)
        t = 3 * cert.block_length
        got = grc_bound(cert, 1.0, t, 0.0)
        assert got == pytest.approx((1 - cert.contraction) ** 3, rel=1e-12)
