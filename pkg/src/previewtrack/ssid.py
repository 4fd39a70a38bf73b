"""Subsystem identification from closed-loop frequency-response data.

Given per-bin data H(omega_i) = y_dft/r_dft, the identification splits a
trial's control behavior into a delayed feedback law and a delayed
feedforward law. A finite candidate pool supplies the feedback transfer
function and both delays; for each candidate cell the cost

    J = sum_i |Gyr_model(e^{j omega_i ts}) - H(omega_i)|^2

is convex (in fact linear-least-squares) in the three feedforward FIR taps,
so the global search is an exhaustive scan with one small least-squares
solve per cell. Every pool candidate is pre-filtered so the modeled closed
loop is asymptotically stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lti import DiscreteTF, freq_response, is_stable
from .loop import ControllerModel, simulate_loop
from .metrics import vaf as vaf_metric
from .spectra import BIN_OMEGAS

#: Audited relative slack between the scan's shared-Gram cost evaluation and
#: the per-cell orthogonal-factorization path.
COST_AUDIT_RTOL = 1e-6


@dataclass(frozen=True)
class FeedbackCandidate:
    """Second-order strictly proper feedback law with its sample delay."""

    beta: np.ndarray    # numerator (beta1, beta2), i.e. beta1*z + beta2
    alpha: np.ndarray   # denominator tail (alpha1, alpha2) of z^2 + a1 z + a2
    tau_fb: int

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        if self.beta.shape != (2,) or self.alpha.shape != (2,):
            raise ValueError("beta and alpha must each have two coefficients")
        if self.tau_fb < 0:
            raise ValueError("feedback delay must be nonnegative")

    def tf(self, ts: float) -> DiscreteTF:
        return DiscreteTF(num=self.beta, den=[1.0, self.alpha[0], self.alpha[1]], ts=ts)


@dataclass(frozen=True)
class CandidatePools:
    """Feedback candidates plus the scanned feedforward delays."""

    feedback: tuple
    tau_ffs: tuple

    def __post_init__(self):
        if not self.feedback or not len(self.tau_ffs):
            raise ValueError("pools must be non-empty")
        object.__setattr__(self, "feedback", tuple(self.feedback))
        object.__setattr__(self, "tau_ffs", tuple(int(t) for t in self.tau_ffs))


@dataclass(frozen=True)
class IdentifiedModel:
    """Search result: the best-fit controller, its cost and validation score."""

    ctrl: ControllerModel
    cost: float
    vaf: float | None = None
    weighted: bool = False
    rank_deficient: bool = False

    def to_json(self) -> str:
        b = self.ctrl.fir_coeffs
        return json.dumps(
            {
                "b": [float(v) for v in b],
                "tau_ff": self.ctrl.tau_ff,
                "gfb": {
                    "beta": [float(v) for v in np.r_[np.zeros(2 - len(self.ctrl.gfb.num)), self.ctrl.gfb.num]],
                    "alpha": [float(v) for v in self.ctrl.gfb.den[1:]],
                },
                "tau_fb": self.ctrl.tau_fb,
                "J": self.cost,
                "vaf": self.vaf,
                "weighted": self.weighted,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str, ts: float) -> "IdentifiedModel":
        d = json.loads(text)
        ctrl = ControllerModel.from_coeffs(
            d["b"], d["tau_ff"], d["gfb"]["beta"], d["gfb"]["alpha"], d["tau_fb"], ts
        )
        return cls(ctrl=ctrl, cost=float(d["J"]), vaf=d.get("vaf"), weighted=bool(d.get("weighted", False)))


def closed_loop_char_poly(plant_d: DiscreteTF, cand: FeedbackCandidate) -> np.ndarray:
    """Characteristic polynomial z^tau_fb * den_fb * den_G + num_fb * num_G."""
    den_fb = np.array([1.0, cand.alpha[0], cand.alpha[1]])
    open_den = np.polymul(den_fb, plant_d.den)
    open_num = np.polymul(cand.beta, plant_d.num)
    cp = np.concatenate([open_den, np.zeros(cand.tau_fb)])
    cp[len(cp) - len(open_num):] += open_num
    return cp


def stability_filter(plant_d: DiscreteTF, cand: FeedbackCandidate) -> bool:
    """True iff the candidate's closed loop with the plant is asymptotically stable."""
    return is_stable(closed_loop_char_poly(plant_d, cand))


def spectral_radius(plant_d: DiscreteTF, cand: FeedbackCandidate) -> float:
    """Largest closed-loop pole magnitude; < 1 for pool members."""
    return float(np.max(np.abs(np.roots(closed_loop_char_poly(plant_d, cand)))))


@dataclass(frozen=True)
class PoolGrid:
    """Grid parameters from which the candidate pools are built.

    Defaults: gains log-spaced over [0.1, 3], zeros and pole pairs spanning
    lag, lead and near-integrating behavior at the trial bandwidth, feedback
    delays 100-500 ms and feedforward delays 0-500 ms at 50 Hz.
    """

    gain_min: float = 0.1
    gain_max: float = 3.0
    gain_count: int = 12
    fir_zeros: tuple = (0.80, 0.90, 0.95, 0.99)
    pole_pairs: tuple = (
        (0.5, 0.5),
        (0.7, 0.7),
        (0.85, 0.85),
        (0.95, 0.6),
        (0.9 + 0.2j, 0.9 - 0.2j),
        (0.8 + 0.3j, 0.8 - 0.3j),
        (0.6 + 0.5j, 0.6 - 0.5j),
        (0.3, 0.9),
    )
    tau_fb_range: tuple = (5, 25)
    tau_ff_range: tuple = (0, 25)

    def __post_init__(self):
        if self.gain_min <= 0 or self.gain_max < self.gain_min or self.gain_count < 1:
            raise ValueError("gain grid must be positive and ascending")
        for pair in self.pole_pairs:
            if len(pair) != 2:
                raise ValueError("pole pairs must have two entries")
            if any(abs(p) >= 1.0 for p in pair):
                raise ValueError("candidate poles must lie inside the unit circle")
            if (np.conj(pair[0]) != pair[1]) and any(np.imag(p) != 0 for p in pair):
                raise ValueError("complex candidate poles must come in conjugate pairs")
        for lo, hi in (self.tau_fb_range, self.tau_ff_range):
            if lo < 0 or hi < lo:
                raise ValueError("delay ranges must be nonnegative and ascending")


def default_pools(plant_d: DiscreteTF, grid: PoolGrid | None = None) -> CandidatePools:
    """Stability-filtered candidate pools built from a parameter grid."""
    grid = grid if grid is not None else PoolGrid()
    kappas = np.geomspace(grid.gain_min, grid.gain_max, grid.gain_count)
    feedback = []
    for kappa in kappas:
        for z0 in grid.fir_zeros:
            beta = kappa * np.array([1.0, -z0])
            for p1, p2 in grid.pole_pairs:
                alpha = np.real(np.polymul([1.0, -p1], [1.0, -p2]))[1:]
                for tau_fb in range(grid.tau_fb_range[0], grid.tau_fb_range[1] + 1):
                    cand = FeedbackCandidate(beta=beta, alpha=alpha, tau_fb=tau_fb)
                    if stability_filter(plant_d, cand):
                        feedback.append(cand)
    return CandidatePools(
        feedback=tuple(feedback),
        tau_ffs=tuple(range(grid.tau_ff_range[0], grid.tau_ff_range[1] + 1)),
    )


def _bin_geometry(plant_d: DiscreteTF, omegas: np.ndarray):
    theta = omegas * plant_d.ts
    g = freq_response(plant_d, omegas)
    fir_basis = np.exp(-1j * np.outer(theta, np.arange(3)))   # n_bins x 3
    return theta, g, fir_basis


def _candidate_loop_gains(pools: CandidatePools, plant_d: DiscreteTF, omegas: np.ndarray):
    """Open-loop gains exp(-j th tau_fb) Gfb G at the bins for every pool
    candidate; independent of the data, so cached on the pool object."""
    key = (
        plant_d.num.tobytes(), plant_d.den.tobytes(), plant_d.ts, omegas.tobytes(),
    )
    cache = getattr(pools, "_loop_gain_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(pools, "_loop_gain_cache", cache)
    if key not in cache:
        g = freq_response(plant_d, omegas)
        cache[key] = np.stack(
            [
                freq_response(c.tf(plant_d.ts), omegas, delay=c.tau_fb) * g
                for c in pools.feedback
            ]
        )
    return cache[key]


def closed_loop_tf_at_bins(
    plant_d: DiscreteTF, ctrl: ControllerModel, omegas: np.ndarray = BIN_OMEGAS
) -> np.ndarray:
    """Model closed-loop response G*(dff + dfb) / (1 + dfb*G) at the bins."""
    g = freq_response(plant_d, omegas)
    dff = freq_response(ctrl.gff, omegas, delay=ctrl.tau_ff)
    dfb = freq_response(ctrl.gfb, omegas, delay=ctrl.tau_fb)
    den = 1.0 + dfb * g
    if np.any(np.abs(den) < 1e-12):
        raise ZeroDivisionError("closed-loop denominator singular at a bin")
    return g * (dff + dfb) / den


def fit_feedforward(
    H: np.ndarray,
    plant_d: DiscreteTF,
    cand: FeedbackCandidate,
    tau_ff: int,
    weighting: str = "none",
    valid: np.ndarray | None = None,
    omegas: np.ndarray = BIN_OMEGAS,
):
    """Least-squares FIR taps for one candidate cell.

    The model response is affine in (b0, b1, b2), so stacking real and
    imaginary parts gives a real least-squares problem, solved by SVD
    (minimum-norm on rank deficiency, flagged). Returns (b, cost, rank_ok).
    With weighting="inverse-magnitude" each squared bin term is scaled by
    1/|H| before minimization.
    """
    H = np.asarray(H, dtype=complex)
    if valid is None:
        valid = np.isfinite(H)
    theta, g, fir_basis = _bin_geometry(plant_d, omegas)
    l_term = freq_response(cand.tf(plant_d.ts), omegas, delay=cand.tau_fb) * g
    d_term = 1.0 + l_term
    y = H - l_term / d_term
    w = g * np.exp(-1j * theta * tau_ff) / d_term
    design = w[:, None] * fir_basis
    design = design[valid]
    y = y[valid]
    if len(y) == 0:
        raise ValueError("no valid bins to fit")
    if weighting == "inverse-magnitude":
        sw = 1.0 / np.sqrt(np.abs(H[valid]))
        design = design * sw[:, None]
        y = y * sw
    elif weighting != "none":
        raise ValueError(f"unknown weighting {weighting!r}")
    a = np.vstack([design.real, design.imag])
    rhs = np.concatenate([y.real, y.imag])
    b, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
    resid = a @ b - rhs
    cost = float(resid @ resid)
    return b, cost, rank == 3


def _scan_block(l_block, theta, g, fir_basis, tau_ffs, H, valid, weighting):
    """Minimum costs for a block of feedback candidates across all delays.

    For a fixed feedback candidate the fit's Gram matrix is shared by every
    feedforward delay (delay phases have unit magnitude), so each candidate
    needs one 3x3 Gram, one batched solve over the delay axis, and the cost
    identity J = |y|^2 - t.b. Returns, per candidate, the best delay index
    and its cost (first minimum, i.e. lowest delay on ties).
    """
    n_t = len(tau_ffs)
    d_term = 1.0 + l_block[:, valid]
    y = (H[valid][None, :] - l_block[:, valid] / d_term)
    w = g[valid][None, :] / d_term
    if weighting == "inverse-magnitude":
        sw = 1.0 / np.sqrt(np.abs(H[valid]))
        y = y * sw[None, :]
        w = w * sw[None, :]
    vb = fir_basis[valid]
    vv = (vb.conj()[:, :, None] * vb[:, None, :]).real     # bins x 3 x 3
    gram = ((w.conj() * w).real @ vv.reshape(len(vb), 9)).reshape(-1, 3, 3)
    phases = np.exp(-1j * np.outer(tau_ffs, theta[valid]))  # delays x bins
    # contraction over bins as one complex matmul: D[i, (t,k)] = P*[t,i] V*[i,k]
    d_mat = (phases.conj().T[:, :, None] * vb.conj()[:, None, :]).reshape(len(vb), n_t * 3)
    q = w.conj() * y                                       # cands x bins
    t = (q @ d_mat).real.reshape(-1, n_t, 3)
    taps = np.linalg.solve(gram, t.transpose(0, 2, 1)).transpose(0, 2, 1)
    energy = (y.conj() * y).real.sum(axis=1)
    costs = np.maximum(energy[:, None] - (t * taps).sum(axis=2), 0.0)
    best_t = np.argmin(costs, axis=1)
    rows = np.arange(len(l_block))
    return best_t, costs[rows, best_t]


def ssid_search(
    H: np.ndarray,
    plant_d: DiscreteTF,
    pools: CandidatePools,
    weighting: str = "none",
    valid: np.ndarray | None = None,
    omegas: np.ndarray = BIN_OMEGAS,
) -> IdentifiedModel:
    """Exhaustive scan of the candidate pools for the cost-minimizing model.

    Ties break deterministically toward the lowest feedforward delay, then
    the lowest feedback delay, then pool order, independent of evaluation
    order. The winning cell's taps and cost are re-solved with the per-cell
    orthogonal-factorization path so the reported numbers do not depend on
    the scan's faster shared-Gram evaluation.
    """
    H = np.asarray(H, dtype=complex)
    if valid is None:
        valid = np.isfinite(H)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise ValueError("no valid bins")
    if weighting not in ("none", "inverse-magnitude"):
        raise ValueError(f"unknown weighting {weighting!r}")
    theta, g, fir_basis = _bin_geometry(plant_d, omegas)
    loop_gains = _candidate_loop_gains(pools, plant_d, omegas)
    tau_ffs = np.asarray(pools.tau_ffs, dtype=int)
    best_key = None
    best = None
    block_size = 1024
    for start in range(0, len(pools.feedback), block_size):
        block = pools.feedback[start : start + block_size]
        best_t, costs = _scan_block(
            loop_gains[start : start + len(block)],
            theta, g, fir_basis, tau_ffs, H, valid, weighting,
        )
        for off in range(len(block)):
            cand = block[off]
            key = (
                costs[off],
                int(tau_ffs[best_t[off]]),
                cand.tau_fb,
                start + off,
            )
            if best_key is None or key < best_key:
                best_key = key
                best = (cand, int(tau_ffs[best_t[off]]))
    cand, tau_ff = best
    b, cost, rank_ok = fit_feedforward(
        H, plant_d, cand, tau_ff, weighting=weighting, valid=valid, omegas=omegas
    )
    ctrl = ControllerModel.from_coeffs(
        b, tau_ff, cand.beta, cand.alpha, cand.tau_fb, plant_d.ts
    )
    return IdentifiedModel(
        ctrl=ctrl, cost=cost, weighted=(weighting == "inverse-magnitude"),
        rank_deficient=not rank_ok,
    )


def validate(trial, identified: IdentifiedModel, plant_d: DiscreteTF) -> float:
    """VAF of the identified closed loop resimulated over the trial's reference.

    Zero initial conditions, same difference equations as trial simulation;
    scored on the window that skips the first half second.
    """
    if not is_stable(closed_loop_char_poly(plant_d, FeedbackCandidate(
        beta=np.r_[np.zeros(2 - len(identified.ctrl.gfb.num)), identified.ctrl.gfb.num],
        alpha=identified.ctrl.gfb.den[1:],
        tau_fb=identified.ctrl.tau_fb,
    ))):
        raise ValueError("identified closed loop is unstable")
    _, y_v = simulate_loop(plant_d, identified.ctrl, trial.r)
    return vaf_metric(trial.y, y_v)
