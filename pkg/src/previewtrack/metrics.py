"""Scalar performance and model-quality metrics.

All frequency-averaged model metrics integrate over omega in [0, pi] rad/s
(the 0-to-0.5 Hz band; 0.5 Hz = pi rad/s) with the transfer functions
evaluated at z = exp(j*omega*ts). The integration variable is rad/s, not
rad/sample: the arc of the unit circle actually swept is tiny
(omega*ts <= pi*ts). A shared composite-trapezoid rule on 2048 uniform
panels is used everywhere so grid-convergence checks apply uniformly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lti import DiscreteTF, freq_response
from .loop import ControllerModel

QUAD_PANELS = 2048


def quadrature_grid(n_panels: int = QUAD_PANELS) -> np.ndarray:
    """Uniform omega nodes on [0, pi] rad/s for the shared trapezoid rule."""
    return np.linspace(0.0, np.pi, n_panels + 1)


def _trapezoid_mean(values: np.ndarray, omega: np.ndarray) -> float:
    """(1/pi) * integral over [0, pi] by the composite trapezoid rule."""
    return float(np.trapezoid(values, omega) / np.pi)


@dataclass(frozen=True)
class PerformanceSummary:
    """Per-trial tracking scores."""

    e_bar: float
    Em: float
    Ep: float
    vaf: float | None = None


@dataclass(frozen=True)
class ModelQuality:
    """Per-model feedforward/feedback quality scores; delays in milliseconds."""

    ff_gap: float
    fb_norm: float
    Me: float
    Pe: float
    T_ff: float
    T_fb: float


def time_avg_error(trial) -> float:
    """(1/n) * sum |r_k - y_k|."""
    e = trial.e
    if len(e) == 0:
        raise ValueError("empty trial")
    return float(np.mean(np.abs(e)))


def freq_errors(frd) -> tuple[float, float]:
    """Frequency-averaged magnitude and phase errors (Em, Ep) of y against r.

    Em averages ||y_dft| - |r_dft||. Ep averages |r_dft| times the chord
    between the unit phasors of y_dft and r_dft; the equivalent difference
    form (|r_dft| e^{j ang y} - |r_dft| e^{j ang r}) is computed as well and
    asserted equal, guarding the reduction identity. Bins with an undefined
    phase (zero magnitude) are skipped with a warning.
    """
    valid = np.asarray(frd.valid, dtype=bool).copy()
    defined = (np.abs(frd.y_dft) > 0.0) & (np.abs(frd.r_dft) > 0.0)
    if np.any(valid & ~defined):
        warnings.warn("skipping bins with undefined phase (zero magnitude)")
        valid &= defined
    if not valid.any():
        raise ValueError("no valid bins")
    r = frd.r_dft[valid]
    y = frd.y_dft[valid]
    n = np.count_nonzero(valid)
    em = float(np.sum(np.abs(np.abs(y) - np.abs(r)))) / n
    phasor_y = np.exp(1j * np.angle(y))
    phasor_r = np.exp(1j * np.angle(r))
    ep = float(np.sum(np.abs(r) * np.abs(phasor_y - phasor_r))) / n
    ep_diff = float(np.sum(np.abs(np.abs(r) * phasor_y - np.abs(r) * phasor_r))) / n
    assert abs(ep - ep_diff) <= 1e-12 * max(1.0, ep), "phase-error forms diverged"
    return em, ep


def _band_eval(tf: DiscreteTF, omega: np.ndarray, delay: int = 0) -> np.ndarray:
    return freq_response(tf, omega, delay=delay)


def _inverse_plant(plant_d: DiscreteTF, omega: np.ndarray) -> np.ndarray:
    g = _band_eval(plant_d, omega)
    small = np.abs(g) < 1e-9
    if np.any(small):
        raise ArithmeticError("plant magnitude near zero on the band, inverse ill-conditioned")
    return 1.0 / g


def ff_gap(ctrl: ControllerModel, plant_d: DiscreteTF, n_panels: int = QUAD_PANELS) -> float:
    """Frequency-averaged distance between the delayed feedforward and the
    inverse plant: (1/pi) * int |e^{-j w ts tau_ff} Gff - G^{-1}| dw."""
    omega = quadrature_grid(n_panels)
    ff = _band_eval(ctrl.gff, omega, delay=ctrl.tau_ff)
    return _trapezoid_mean(np.abs(ff - _inverse_plant(plant_d, omega)), omega)


def fb_norm(ctrl: ControllerModel, plant_d: DiscreteTF, n_panels: int = QUAD_PANELS) -> float:
    """Frequency-averaged feedback magnitude: (1/pi) * int |e^{-j w ts tau_fb} Gfb| dw.

    The delay has unit magnitude, so it cannot change the value; it is kept
    in the integrand to mirror the definition.
    """
    omega = quadrature_grid(n_panels)
    fb = _band_eval(ctrl.gfb, omega, delay=ctrl.tau_fb)
    return _trapezoid_mean(np.abs(fb), omega)


def ff_mag_phase_errors(
    ctrl: ControllerModel, plant_d: DiscreteTF, n_panels: int = QUAD_PANELS
) -> tuple[float, float]:
    """(Me, Pe): loop-gain magnitude and phase error of the delayed
    feedforward cascaded with the plant, relative to unity.

    Me averages ||e^{-j w ts tau_ff} Gff G| - 1|; Pe averages
    |e^{j ang(e^{-j w ts tau_ff} Gff G)} - 1|.
    """
    omega = quadrature_grid(n_panels)
    loop = _band_eval(ctrl.gff, omega, delay=ctrl.tau_ff) * _band_eval(plant_d, omega)
    me = _trapezoid_mean(np.abs(np.abs(loop) - 1.0), omega)
    pe = _trapezoid_mean(np.abs(np.exp(1j * np.angle(loop)) - 1.0), omega)
    return me, pe


def vaf(y, y_v, n1: int = 26) -> float:
    """Variance accounted for over samples k = n1..n (1-based).

    The default n1 = 26 discards the first half second of a 50 Hz record,
    limiting the influence of nonzero initial conditions in measured data.
    """
    y = np.asarray(y, dtype=float)
    y_v = np.asarray(y_v, dtype=float)
    if len(y) != len(y_v):
        raise ValueError("sequences must have equal length")
    if len(y) < n1:
        raise ValueError(f"need at least {n1} samples")
    yw = y[n1 - 1:]
    rw = yw - y_v[n1 - 1:]
    denom = float(np.sum(yw * yw))
    if denom == 0.0:
        raise ZeroDivisionError("zero-energy validation window")
    return 1.0 - float(np.sum(rw * rw)) / denom


def model_quality(ctrl: ControllerModel, plant_d: DiscreteTF) -> ModelQuality:
    me, pe = ff_mag_phase_errors(ctrl, plant_d)
    return ModelQuality(
        ff_gap=ff_gap(ctrl, plant_d),
        fb_norm=fb_norm(ctrl, plant_d),
        Me=me,
        Pe=pe,
        T_ff=1e3 * ctrl.tau_ff * plant_d.ts,
        T_fb=1e3 * ctrl.tau_fb * plant_d.ts,
    )


def performance_summary(trial, frd=None, vaf_value: float | None = None) -> PerformanceSummary:
    from .spectra import closed_loop_response

    frd = frd if frd is not None else closed_loop_response(trial)
    em, ep = freq_errors(frd)
    return PerformanceSummary(e_bar=time_avg_error(trial), Em=em, Ep=ep, vaf=vaf_value)
