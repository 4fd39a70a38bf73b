"""Synthetic operators and closed-loop trial simulation at 50 Hz.

The operator model is a delayed feedback path driven by the tracking error
plus a delayed feedforward path driven by the reference:

    u_k = [Gfb e]_{k - tau_fb} + [Gff r]_{k - tau_ff}

with Gff a 3-tap FIR (b0 + b1/z + b2/z^2) and Gfb second order, strictly
proper. The plant is the ZOH-discretized third-order lag; it is strictly
proper, so each sample resolves causally: read r_k, form e_k from the plant
output (which does not depend on u_k), produce u_k, then advance the plant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lti import ContinuousTF, DiscreteTF, default_plant, freq_response

DIVERGENCE_BOUND = 4.4   # hm, display half-range
EXCITED_OMEGAS = 2.0 * np.pi * np.arange(1, 31) / 60.0   # rad/s, reference band
PREVIEW_BY_GROUP = {1: 0.0, 2: 0.5, 3: 1.0, 4: 1.5}      # s


@dataclass(frozen=True)
class ControllerModel:
    """Quadruple (Gff, tau_ff, Gfb, tau_fb) describing one operator."""

    gff: DiscreteTF
    tau_ff: int
    gfb: DiscreteTF
    tau_fb: int

    def __post_init__(self):
        if self.tau_ff < 0 or self.tau_fb < 0:
            raise ValueError("delays must be nonnegative")
        if not np.array_equal(self.gff.den, [1.0, 0.0, 0.0]):
            raise ValueError("feedforward must be FIR with denominator z^2")
        if not self.gfb.strictly_proper or len(self.gfb.den) != 3:
            raise ValueError("feedback must be second order and strictly proper")

    @property
    def fir_coeffs(self) -> np.ndarray:
        """(b0, b1, b2) of the feedforward FIR, zero-padded at the front."""
        b = np.zeros(3)
        b[3 - len(self.gff.num):] = self.gff.num
        return b

    @property
    def fb_coeffs(self) -> np.ndarray:
        """(beta1, beta2) of the feedback numerator, zero-padded at the front."""
        b = np.zeros(2)
        b[2 - len(self.gfb.num):] = self.gfb.num
        return b

    @classmethod
    def from_coeffs(cls, b, tau_ff: int, beta, alpha, tau_fb: int, ts: float):
        """Build from FIR taps b = (b0, b1, b2), feedback numerator
        beta = (beta1, beta2) and denominator tail alpha = (alpha1, alpha2)."""
        b = np.asarray(b, dtype=float)
        beta = np.asarray(beta, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        return cls(
            gff=DiscreteTF(num=b, den=[1.0, 0.0, 0.0], ts=ts),
            tau_ff=int(tau_ff),
            gfb=DiscreteTF(num=beta, den=[1.0, alpha[0], alpha[1]], ts=ts),
            tau_fb=int(tau_fb),
        )

    @classmethod
    def zero(cls, ts: float) -> "ControllerModel":
        """The no-control operator: u identically zero."""
        return cls.from_coeffs([0.0, 0.0, 0.0], 0, [0.0, 0.0], [0.0, 0.0], 0, ts)


@dataclass(frozen=True)
class TrialRecord:
    """Sampled (r, u, y) for one trial plus its metadata."""

    subject_id: str
    group: int
    preview_s: float
    trial_index: int
    ts: float
    r: np.ndarray
    u: np.ndarray
    y: np.ndarray
    divergent: bool
    reference_seed: int
    gaps: int = 0

    def __post_init__(self):
        for name in ("r", "u", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.r) == len(self.u) == len(self.y)):
            raise ValueError("r, u, y must have equal lengths")

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def e(self) -> np.ndarray:
        """Tracking error r - y (derived, never stored)."""
        return self.r - self.y


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol constants for a batch of trials."""

    plant: ContinuousTF = field(default_factory=default_plant)
    ts: float = 0.02
    n: int = 3000
    preview_by_group: dict = field(default_factory=lambda: dict(PREVIEW_BY_GROUP))
    divergence_bound: float = DIVERGENCE_BOUND
    trials_per_subject: int = 40
    input_gain: float = 1.0
    preview_resolution_s: float = 0.02   # display frame budget for preview slices

    def __post_init__(self):
        if self.ts <= 0 or self.n <= 0 or self.divergence_bound <= 0:
            raise ValueError("ts, n and divergence bound must be positive")
        if self.preview_resolution_s <= 0:
            raise ValueError("preview resolution must be positive")


def detect_divergence(y, bound: float = DIVERGENCE_BOUND) -> bool:
    """True iff any sample strictly exceeds the display limits."""
    return bool(np.any(np.abs(np.asarray(y)) > bound))


def simulate_loop(plant_d: DiscreteTF, ctrl: ControllerModel, r: np.ndarray):
    """Close the loop over a given reference array; returns (u, y).

    Zero initial conditions everywhere. Rejects configurations with an
    algebraic loop (a plant with direct feedthrough combined with an
    undelayed, exactly proper feedback path).

    The feedforward path depends only on r, so it is filtered in one
    vectorized pass; lfilter implements the same transposed direct form II
    as the sample-wise stepping, so the result is bit-identical to stepping
    everything (asserted in the test suite). Only the plant and feedback
    recursions run per sample, with the same state-update expressions as
    StepFilter so that live-service records replay bitwise.
    """
    if not plant_d.strictly_proper:
        if ctrl.tau_fb == 0 and len(ctrl.gfb.num) == len(ctrl.gfb.den):
            raise ValueError("algebraic loop: feedthrough plant with undelayed exactly proper feedback")
        raise ValueError("plant must be strictly proper for sample-wise loop closure")
    from .lti import simulate

    r = np.asarray(r, dtype=float)
    n = len(r)
    u_ff = simulate(ctrl.gff, r, delay=ctrl.tau_ff, warn_unstable=False)
    if not np.any(ctrl.gfb.num):
        u = u_ff
        return u, simulate(plant_d, u, warn_unstable=False)

    p_ord = len(plant_d.den) - 1
    pb = [0.0] * (p_ord + 1)
    pb[p_ord + 1 - len(plant_d.num):] = [float(v) for v in plant_d.num]
    pa = [float(v) for v in plant_d.den]
    pz = [0.0] * p_ord
    # feedback is second order strictly proper: y = w1, then update (w1, w2)
    beta = ctrl.fb_coeffs
    b1, b2 = float(beta[0]), float(beta[1])
    a1, a2 = float(ctrl.gfb.den[1]), float(ctrl.gfb.den[2])
    w1 = w2 = 0.0
    tau_fb = ctrl.tau_fb
    r_list = r.tolist()
    u_ff_list = u_ff.tolist()
    u = np.empty(n)
    y = np.empty(n)
    e_hist = [0.0] * n
    for k in range(n):
        yk = pz[0]
        ek = r_list[k] - yk
        e_hist[k] = ek
        x = e_hist[k - tau_fb] if k >= tau_fb else 0.0
        u_fb = w1
        w1 = b1 * x + w2 - a1 * u_fb
        w2 = b2 * x - a2 * u_fb
        uk = u_fb + u_ff_list[k]
        for i in range(p_ord - 1):
            pz[i] = pb[i + 1] * uk + pz[i + 1] - pa[i + 1] * yk
        pz[p_ord - 1] = pb[p_ord] * uk - pa[p_ord] * yk
        u[k] = uk
        y[k] = yk
    return u, y


def run_trial(
    plant_d: DiscreteTF,
    ctrl: ControllerModel,
    cmd,
    cfg: ExperimentConfig,
    subject_id: str = "sim",
    group: int = 1,
    trial_index: int = 1,
) -> TrialRecord:
    """Simulate one 60-s trial and flag divergence.

    Divergent trials run to completion; the samples are kept for inspection
    and the record is only excluded later, at aggregation.
    """
    from .refgen import sample as sample_cmd

    r = sample_cmd(cmd, cfg.ts, cfg.n)
    u, y = simulate_loop(plant_d, ctrl, r)
    return TrialRecord(
        subject_id=subject_id,
        group=group,
        preview_s=cfg.preview_by_group.get(group, 0.0),
        trial_index=trial_index,
        ts=cfg.ts,
        r=r,
        u=u,
        y=y,
        divergent=detect_divergence(y, cfg.divergence_bound),
        reference_seed=int(cmd.seed),
    )


def fit_inverse_fir(plant_d: DiscreteTF, tau_ff: int = 0) -> np.ndarray:
    """Least-squares 3-tap FIR fit of the inverse plant over the excited band.

    Minimizes sum_i |exp(-j th_i tau_ff) (b0 + b1 exp(-j th_i) + b2 exp(-2j th_i))
    - 1/G(exp(j th_i))|^2 over the 30 excitation bins, th_i = omega_i * ts.
    """
    theta = EXCITED_OMEGAS * plant_d.ts
    ginv = 1.0 / freq_response(plant_d, EXCITED_OMEGAS)
    basis = np.exp(-1j * np.outer(theta, np.arange(3)))
    design = np.exp(-1j * theta * tau_ff)[:, None] * basis
    a = np.vstack([design.real, design.imag])
    rhs = np.concatenate([ginv.real, ginv.imag])
    b, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return b


# Default operator feedback: kappa*(z - 0.9)/(z - 0.7)^2 with the gain taken
# from the identification pool's log grid (0.1..3 in 12 steps, 8th point), so
# synthetic operators are exactly representable during identification.
_DEFAULT_FB_GAIN = float(np.geomspace(0.1, 3.0, 12)[7])
_DEFAULT_FB = {
    "beta": (_DEFAULT_FB_GAIN, -0.9 * _DEFAULT_FB_GAIN),
    "alpha": (-1.4, 0.49),
}


def synthetic_subject(
    preview_s: float,
    sensory_delay_s: float,
    inversion_quality: float,
    plant_d: DiscreteTF | None = None,
    fb_gain_scale: float = 1.0,
) -> ControllerModel:
    """Operator model generator for cohort studies.

    Preview eats into the effective feedforward delay:
    tau_ff = max(0, round((sensory_delay - preview)/ts)). The feedforward
    interpolates linearly between a DC-matching static gain (quality 0) and
    the band-limited FIR fit of the inverse plant (quality 1). Feedback is a
    fixed stabilizing second-order lag behind the full sensory delay,
    optionally rescaled (values far above 1 destabilize the loop, which is
    how divergent trials are produced on purpose).
    """
    if not 0.0 <= inversion_quality <= 1.0:
        raise ValueError("inversion_quality must lie in [0, 1]")
    if preview_s < 0.0 or sensory_delay_s < 0.0:
        raise ValueError("preview and sensory delay must be nonnegative")
    plant_d = plant_d if plant_d is not None else zoh_default_plant()
    ts = plant_d.ts
    tau_ff = max(0, round((sensory_delay_s - preview_s) / ts))
    tau_fb = max(0, round(sensory_delay_s / ts))
    b_static = np.array([1.0 / plant_d.dc_gain(), 0.0, 0.0])
    b_fit = fit_inverse_fir(plant_d)
    b = (1.0 - inversion_quality) * b_static + inversion_quality * b_fit
    beta = fb_gain_scale * np.asarray(_DEFAULT_FB["beta"])
    return ControllerModel.from_coeffs(
        b, tau_ff, beta, _DEFAULT_FB["alpha"], tau_fb, ts
    )


def zoh_default_plant(ts: float = 0.02) -> DiscreteTF:
    from .lti import zoh_discretize

    return zoh_discretize(default_plant(), ts)
