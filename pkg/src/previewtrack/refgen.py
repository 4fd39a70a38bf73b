"""Unpredictable sum-of-sinusoids reference commands.

A command is 30 cosines of amplitude 0.3 hm at frequencies pi*j/30 rad/s
(j = 1..30, i.e. 1/60 Hz steps up to 0.5 Hz) over a 60-s trial, with phases
drawn so the command starts at zero and its peak magnitude stays below
2.6 hm. Component frequencies coincide exactly with the DFT bins of a 60-s
window, so the sampled command has no spectral leakage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

N_COMPONENTS = 30
AMPLITUDE = 0.3          # hm per component
DURATION = 60.0          # s
BASE_SPACING = np.pi / 30.0   # rad/s between components
PEAK_LIMIT = 2.6         # hm
PEAK_MARGIN = 1e-6       # hm, enforcement margin on the scan grid
SCAN_RESOLUTION = 1e-3   # s, peak-scan grid (the top component is 0.5 Hz)


class GenerationError(RuntimeError):
    """Constraint satisfaction failed within the allowed number of rounds."""


@dataclass(frozen=True)
class ReferenceCommand:
    """One trial's reference trajectory, held as its 30 component phases."""

    phases: np.ndarray
    seed: int
    amplitude: float = AMPLITUDE
    duration: float = DURATION
    spacing: float = BASE_SPACING
    _omegas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float)
        if ph.shape != (N_COMPONENTS,):
            raise ValueError(f"expected {N_COMPONENTS} phases, got shape {ph.shape}")
        object.__setattr__(self, "phases", ph)
        object.__setattr__(
            self, "_omegas", self.spacing * np.arange(1, N_COMPONENTS + 1)
        )

    def value(self, t):
        """c(t), vectorized over t (seconds)."""
        t = np.asarray(t, dtype=float)
        c = self.amplitude * np.cos(
            np.multiply.outer(t, self._omegas) + self.phases
        ).sum(axis=-1)
        return c if c.ndim else float(c)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": int(self.seed),
                "phases": [float(p) for p in self.phases],
                "amplitude": self.amplitude,
                "duration": self.duration,
                "spacing": self.spacing,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ReferenceCommand":
        d = json.loads(text)
        return cls(
            phases=np.asarray(d["phases"], dtype=float),
            seed=int(d["seed"]),
            amplitude=float(d["amplitude"]),
            duration=float(d["duration"]),
            spacing=float(d["spacing"]),
        )


@dataclass(frozen=True)
class PreviewSlice:
    """Reference values over [t, t + horizon], possibly truncated at 60 s."""

    offsets: np.ndarray   # seconds ahead of t
    values: np.ndarray    # hm
    truncated: bool


def _grid_values(phases: np.ndarray, n_grid: int) -> np.ndarray:
    # Component j sits exactly on FFT bin j of an n_grid-point grid spanning
    # one 60-s period, so the dense evaluation is a single inverse real FFT.
    spectrum = np.zeros(n_grid // 2 + 1, dtype=complex)
    spectrum[1 : N_COMPONENTS + 1] = (n_grid / 2.0) * AMPLITUDE * np.exp(1j * phases)
    return np.fft.irfft(spectrum, n_grid)


def generate(seed: int, max_rounds: int = 500_000) -> ReferenceCommand:
    """Draw a reference command satisfying the start and peak constraints.

    Twenty-nine phases are sampled uniformly on [0, 2*pi); the last is solved
    from sum(cos(phi)) = 0 (rejecting infeasible draws), with its two
    solutions chosen with equal probability so the remaining phase is not
    biased into [0, pi]. Candidates whose peak reaches 2.6 hm on the scan
    grid are rejected and redrawn. Deterministic for a fixed seed; raises
    GenerationError rather than relaxing a constraint if max_rounds draws
    are exhausted.
    """
    rng = np.random.default_rng(seed)
    n_fine = round(DURATION / SCAN_RESOLUTION)
    n_coarse = 3000
    threshold = PEAK_LIMIT - PEAK_MARGIN
    for _ in range(max_rounds):
        ph = rng.uniform(0.0, 2.0 * np.pi, size=N_COMPONENTS - 1)
        partial = np.cos(ph).sum()
        flip = bool(rng.integers(2))   # drawn before feasibility so the
        if abs(partial) > 1.0:         # stream stays aligned across rejects
            continue
        last = float(np.arccos(-partial))
        if flip:
            last = 2.0 * np.pi - last
        phases = np.append(ph, last)
        # Coarse screen first: a coarse-grid peak at or above the threshold
        # guarantees the fine grid is too (the fine grid is a superset).
        if np.max(np.abs(_grid_values(phases, n_coarse))) >= threshold:
            continue
        if np.max(np.abs(_grid_values(phases, n_fine))) >= threshold:
            continue
        return ReferenceCommand(phases=phases, seed=int(seed))
    raise GenerationError(
        f"no feasible phase vector within {max_rounds} rounds for seed {seed}"
    )


def sample(cmd: ReferenceCommand, ts: float, n: int) -> np.ndarray:
    """Sampled trajectory r_k = c((k-1)*ts) for k = 1..n."""
    if not ts > 0.0:
        raise ValueError("sample time must be positive")
    if n * ts > cmd.duration + 1e-9:
        raise ValueError(f"horizon {n * ts:.6g} s exceeds duration {cmd.duration} s")
    return cmd.value(np.arange(n) * ts)


def preview_window(
    cmd: ReferenceCommand, t: float, horizon: float, resolution: float = 0.02
) -> PreviewSlice:
    """Reference values over [t, t + horizon] at the given resolution.

    A window that extends past the end of the command is truncated and
    flagged rather than rejected.
    """
    if horizon < 0.0 or resolution <= 0.0 or t < 0.0:
        raise ValueError("t, horizon must be nonnegative and resolution positive")
    offsets = np.arange(0.0, horizon + resolution / 2.0, resolution)
    truncated = bool(t + horizon > cmd.duration + 1e-12)
    offsets = offsets[t + offsets <= cmd.duration + 1e-12]
    return PreviewSlice(
        offsets=offsets, values=cmd.value(t + offsets), truncated=truncated
    )
