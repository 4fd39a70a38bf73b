"""DFT on the 30-bin excitation grid and closed-loop frequency-response data.

The excited frequencies omega_i = 2*pi*i/60 rad/s (i = 1..30) coincide with
FFT bins 1..30 of any uniformly sampled 60-s window, so the bin values are
read straight off an FFT. The unnormalized DFT convention
X(omega_i) = sum_k x_k exp(-j omega_i (k-1) ts) is used throughout; any
common normalization cancels in the ratio H = y_dft / r_dft.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

N_BINS = 30
WINDOW_S = 60.0
BIN_OMEGAS = 2.0 * np.pi * np.arange(1, N_BINS + 1) / WINDOW_S

INVALID_BIN_REL_THRESHOLD = 1e-9


@dataclass(frozen=True)
class FreqResponseData:
    """Per-bin DFT values of r and y and their ratio H."""

    omegas: np.ndarray
    r_dft: np.ndarray
    y_dft: np.ndarray
    H: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        n = len(self.omegas)
        for name in ("r_dft", "y_dft", "H"):
            if len(getattr(self, name)) != n:
                raise ValueError("field lengths must match the frequency grid")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,omega,re_r_dft,im_r_dft,re_y_dft,im_y_dft,re_H,im_H\n")
        for i in range(len(self.omegas)):
            row = (
                i + 1,
                self.omegas[i],
                self.r_dft[i].real,
                self.r_dft[i].imag,
                self.y_dft[i].real,
                self.y_dft[i].imag,
                self.H[i].real,
                self.H[i].imag,
            )
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        return buf.getvalue()


def dft_bins(x, ts: float, n_bins: int = N_BINS) -> np.ndarray:
    """DFT of x at the excitation bins omega_i = 2*pi*i/60.

    Requires the samples to span a 60-s window (n * ts = 60) so that the
    excitation frequencies land exactly on FFT bins 1..n_bins.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n <= 2 * n_bins:
        raise ValueError(f"need more than {2 * n_bins} samples, got {n}")
    if abs(n * ts - WINDOW_S) > 1e-6:
        raise ValueError(f"samples must span {WINDOW_S} s, got {n * ts:.6g} s")
    return np.fft.fft(x)[1 : n_bins + 1]


def closed_loop_response(trial) -> FreqResponseData:
    """Frequency-response data H(omega_i) = y_dft/r_dft for one trial.

    Bins where |r_dft| falls below 1e-9 of the largest bin are marked
    invalid instead of being divided; a fully invalid set is rejected.
    """
    r_dft = dft_bins(trial.r, trial.ts)
    y_dft = dft_bins(trial.y, trial.ts)
    peak = np.max(np.abs(r_dft))
    if peak == 0.0:
        raise ValueError("no bin carries reference excitation")
    valid = np.abs(r_dft) >= INVALID_BIN_REL_THRESHOLD * peak
    if not valid.any():
        raise ValueError("no bin carries reference excitation")
    if not valid.all():
        warnings.warn(f"{np.count_nonzero(~valid)} bins lack excitation, marked invalid")
    H = np.full(len(r_dft), np.nan + 0j)
    H[valid] = y_dft[valid] / r_dft[valid]
    return FreqResponseData(
        omegas=BIN_OMEGAS.copy(), r_dft=r_dft, y_dft=y_dft, H=H, valid=valid
    )
