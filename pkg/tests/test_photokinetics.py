import numpy as np
import pytest
from scipy import stats

from nanosim.photokinetics import (
    BlinkTrace,
    KineticsParams,
    duty_cycle,
    sample_dwells,
    simulate_trace,
)


class TestDutyCycle:
    def test_paper_endpoints(self):
        assert duty_cycle(KineticsParams(5.0, 1.0)) == pytest.approx(5.0 / 6.0)
        assert duty_cycle(KineticsParams(1.0, 20.0)) == pytest.approx(1.0 / 21.0)

    @pytest.mark.parametrize("t", [0.5, 1.0, 3.7, 20.0])
    def test_symmetry(self, t):
        assert duty_cycle(KineticsParams(t, t)) == pytest.approx(0.5)

    def test_param_validation(self):
        for bad in [(-1, 1, 1), (1, 0, 1), (1, 1, -0.1)]:
            with pytest.raises(ValueError):
                KineticsParams(*bad)


class TestBlinkTrace:
    def test_shape_properties(self):
        t = BlinkTrace(np.ones((3, 7)))
        assert t.n_emitters == 3
        assert t.n_frames == 7

    def test_nonnegativity_enforced(self):
        with pytest.raises(ValueError):
            BlinkTrace(np.array([[0.5, -0.1]]))


class TestSampleDwells:
    def test_exponential_distribution_ks(self):
        params = KineticsParams(tau_on=3.0, tau_off=7.0)
        rng = np.random.default_rng(0)
        for state_on, tau in ((True, 3.0), (False, 7.0)):
            dwells = sample_dwells(10_000, state_on, params, rng)
            result = stats.kstest(dwells, "expon", args=(0.0, tau))
            assert result.pvalue > 0.01

    def test_mean(self):
        params = KineticsParams(tau_on=2.0, tau_off=5.0)
        d = sample_dwells(50_000, True, params, np.random.default_rng(1))
        assert d.mean() == pytest.approx(2.0, rel=0.02)

    def test_validation(self):
        with pytest.raises(ValueError):
            sample_dwells(0, True, KineticsParams(1.0, 1.0))


class TestSimulateTrace:
    def test_long_run_on_fraction(self):
        params = KineticsParams(tau_on=1.0, tau_off=20.0)
        trace = simulate_trace(20, 20_000, params, np.random.default_rng(0))
        assert trace.photons.mean() == pytest.approx(1.0 / 21.0, rel=0.02)

    def test_dense_regime_on_fraction(self):
        params = KineticsParams(tau_on=5.0, tau_off=1.0)
        trace = simulate_trace(20, 20_000, params, np.random.default_rng(0))
        assert trace.photons.mean() == pytest.approx(5.0 / 6.0, rel=0.02)

    def test_photons_bounded_by_rate(self):
        params = KineticsParams(tau_on=1.0, tau_off=2.0, photon_rate=3.5)
        trace = simulate_trace(10, 500, params, np.random.default_rng(2))
        assert trace.photons.min() >= 0.0
        assert trace.photons.max() <= 3.5 + 1e-12

    def test_never_off_limit(self):
        # tau_off -> infinity: emitters starting off stay dark
        params = KineticsParams(tau_on=1.0, tau_off=1e9)
        trace = simulate_trace(200, 100, params, np.random.default_rng(3))
        assert trace.photons.mean() < 1e-3

    def test_determinism(self):
        params = KineticsParams(tau_on=2.0, tau_off=3.0)
        a = simulate_trace(5, 100, params, np.random.default_rng(4))
        b = simulate_trace(5, 100, params, np.random.default_rng(4))
        assert np.array_equal(a.photons, b.photons)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            simulate_trace(0, 10, KineticsParams(1.0, 1.0))
        with pytest.raises(ValueError):
            simulate_trace(1, 0, KineticsParams(1.0, 1.0))

    def test_fractional_occupancy(self):
        # sub-frame dwells produce strictly fractional per-frame photon counts
        params = KineticsParams(tau_on=0.3, tau_off=0.3)
        trace = simulate_trace(5, 200, params, np.random.default_rng(5))
        fractional = (trace.photons > 1e-9) & (trace.photons < 1.0 - 1e-9)
        assert fractional.any()
