import numpy as np
import pytest

from previewtrack.loop import ControllerModel, TrialRecord, simulate_loop
from previewtrack.lti import simulate
from previewtrack.refgen import generate, sample
from previewtrack.spectra import BIN_OMEGAS, closed_loop_response, dft_bins
from previewtrack.ssid import FeedbackCandidate, closed_loop_tf_at_bins, spectral_radius

TS = 0.02
N = 3000


def make_trial(r, y, **kw):
    base = dict(
        subject_id="s",
        group=1,
        preview_s=0.0,
        trial_index=1,
        ts=TS,
        r=r,
        u=np.zeros(len(r)),
        y=y,
        divergent=False,
        reference_seed=0,
    )
    base.update(kw)
    return TrialRecord(**base)


class TestDftBins:
    def test_single_component_concentrates_in_its_bin(self):
        k = np.arange(N)
        x = np.cos(BIN_OMEGAS[4] * k * TS)
        bins = np.abs(dft_bins(x, TS))
        others = np.delete(bins, 4)
        assert np.max(others) < 1e-9 * bins[4]
        assert bins[4] == pytest.approx(N / 2, rel=1e-12)

    def test_zero_signal(self):
        assert np.array_equal(dft_bins(np.zeros(N), TS), np.zeros(30))

    def test_reference_bins_have_uniform_magnitude(self):
        r = sample(generate(77), TS, N)
        mags = np.abs(dft_bins(r, TS))
        assert mags == pytest.approx(np.full(30, (N / 2) * 0.3), rel=1e-9)

    def test_window_length_enforced(self):
        with pytest.raises(ValueError):
            dft_bins(np.zeros(2999), TS)

    def test_conjugate_symmetry_of_underlying_dft(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(N)
        full = np.fft.fft(x)
        assert np.allclose(full[1:31], np.conj(full[-1:-31:-1]), rtol=1e-12)


class TestClosedLoopResponse:
    def test_identity_when_y_equals_r(self):
        r = sample(generate(8), TS, N)
        frd = closed_loop_response(make_trial(r, r.copy()))
        assert frd.H == pytest.approx(np.ones(30), abs=1e-12)
        assert frd.valid.all()

    def test_open_loop_matches_plant_response(self, plant_d):
        # u = r through the plant; settle one extra period so the transient
        # has decayed, then window both signals identically
        cmd = generate(9)
        settle = 3000
        t = np.arange(settle + N) * TS
        r_long = cmd.value(t % 60.0)
        y_long = simulate(plant_d, r_long)
        frd = closed_loop_response(make_trial(r_long[settle:], y_long[settle:]))
        from previewtrack.lti import freq_response

        want = freq_response(plant_d, BIN_OMEGAS)
        assert np.max(np.abs(frd.H - want)) < 1e-3

    def test_synthetic_closed_loop_matches_model(self, plant_d, pools):
        cand = pools.feedback[100]
        ctrl = ControllerModel.from_coeffs(
            [0.5, -0.2, 0.1], 3, cand.beta, cand.alpha, cand.tau_fb, TS
        )
        rho = spectral_radius(plant_d, FeedbackCandidate(cand.beta, cand.alpha, cand.tau_fb))
        settle = int(np.ceil(np.log(1e-10) / np.log(rho)))
        cmd = generate(10)
        t = np.arange(settle + N) * TS
        r_long = cmd.value(t % 60.0)
        _, y_long = simulate_loop(plant_d, ctrl, r_long)
        frd = closed_loop_response(make_trial(r_long[settle:], y_long[settle:]))
        want = closed_loop_tf_at_bins(plant_d, ctrl)
        assert np.max(np.abs(frd.H - want)) < 1e-3

    def test_normalization_invariance(self):
        r = sample(generate(11), TS, N)
        y = 0.7 * r
        frd = closed_loop_response(make_trial(r, y))
        # a common DFT scale cancels in the ratio
        scaled = dft_bins(3.7 * y, TS) / dft_bins(3.7 * r, TS)
        assert np.allclose(frd.H, scaled, rtol=1e-12)

    def test_unexcited_bins_marked_invalid(self):
        k = np.arange(N)
        r = np.cos(BIN_OMEGAS[0] * k * TS)
        with pytest.warns(UserWarning):
            frd = closed_loop_response(make_trial(r, r.copy()))
        assert frd.valid[0]
        assert not frd.valid[1:].any()
        assert np.isnan(frd.H[1].real)

    def test_all_invalid_rejected(self):
        with pytest.raises(ValueError):
            closed_loop_response(make_trial(np.zeros(N), np.zeros(N)))

    def test_csv_serialization(self):
        r = sample(generate(12), TS, N)
        frd = closed_loop_response(make_trial(r, 0.5 * r))
        text = frd.to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "i,omega,re_r_dft,im_r_dft,re_y_dft,im_y_dft,re_H,im_H"
        assert len(lines) == 31
        first = lines[1].split(",")
        assert int(first[0]) == 1
        assert float(first[1]) == pytest.approx(BIN_OMEGAS[0])
        assert float(first[6]) == pytest.approx(0.5)
