"""Rational transfer functions: ZOH discretization, frequency response, simulation.

Transfer functions are stored as coefficient arrays in descending powers of
s (continuous) or z (discrete). Denominators are normalized to be monic so
that equal systems have equal representations.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import signal


class UnstableFilterWarning(UserWarning):
    """Raised when a simulation is run through an unstable transfer function."""


def _as_poly(c) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficients must be a non-empty 1-D sequence")
    return arr


def _strip_leading_zeros(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return c[-1:]
    return c[nz[0]:]


@dataclass(frozen=True)
class ContinuousTF:
    """Proper rational transfer function in s; coefficients in descending powers."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _strip_leading_zeros(_as_poly(self.num))
        den = _strip_leading_zeros(_as_poly(self.den))
        if den[0] == 0.0:
            raise ValueError("denominator leading coefficient must be nonzero")
        if len(num) > len(den):
            raise ValueError("transfer function must be proper (deg num <= deg den)")
        num = num / den[0]
        den = den / den[0]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def dc_gain(self) -> float:
        d = np.polyval(self.den, 0.0)
        if d == 0.0:
            raise ZeroDivisionError("pole at s = 0, DC gain undefined")
        return float(np.polyval(self.num, 0.0) / d)


@dataclass(frozen=True)
class DiscreteTF:
    """Proper rational transfer function in z with sample time ts (seconds)."""

    num: np.ndarray
    den: np.ndarray
    ts: float

    def __post_init__(self):
        num = _strip_leading_zeros(_as_poly(self.num))
        den = _strip_leading_zeros(_as_poly(self.den))
        if den[0] == 0.0:
            raise ValueError("denominator leading coefficient must be nonzero")
        if len(num) > len(den):
            raise ValueError("transfer function must be proper (deg num <= deg den)")
        if not self.ts > 0.0:
            raise ValueError("sample time must be positive")
        num = num / den[0]
        den = den / den[0]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def strictly_proper(self) -> bool:
        return len(self.num) < len(self.den)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def dc_gain(self) -> float:
        d = np.polyval(self.den, 1.0)
        if d == 0.0:
            raise ZeroDivisionError("pole at z = 1, DC gain undefined")
        return float(np.polyval(self.num, 1.0) / d)

    def is_stable(self) -> bool:
        return is_stable(self.den)


@dataclass(frozen=True)
class DelayedTF:
    """A discrete transfer function composed with an integer sample delay."""

    tf: DiscreteTF
    delay: int = 0

    def __post_init__(self):
        if int(self.delay) != self.delay or self.delay < 0:
            raise ValueError("delay must be a nonnegative integer number of samples")
        object.__setattr__(self, "delay", int(self.delay))

    def freq_response(self, omega):
        return freq_response(self.tf, omega, delay=self.delay)

    def simulate(self, x, warn_unstable: bool = True) -> np.ndarray:
        return simulate(self.tf, x, delay=self.delay, warn_unstable=warn_unstable)


def default_plant() -> ContinuousTF:
    """The third-order tracking plant used throughout the experiments.

    3.2(s + 2.2) / ((s + 1.6)(s^2 + 3.6 s + 4)), DC gain 1.1.
    """
    return ContinuousTF(num=[3.2, 7.04], den=[1.0, 5.2, 9.76, 6.4])


def zoh_discretize(g: ContinuousTF, ts: float) -> DiscreteTF:
    """Exact zero-order-hold discrete equivalent of a proper continuous system.

    Uses a state-space realization and the matrix exponential, so continuous
    poles p map to discrete poles exp(p*ts). When g has no pole at s = 0 the
    numerator is rescaled by a scalar so the DC gain is preserved to machine
    precision (a scalar rescale moves no poles or zeros; the exact map
    preserves DC gain, the floating-point SS->TF conversion would not).
    """
    if not ts > 0.0:
        raise ValueError("sample time must be positive")
    a, b, c, d = signal.tf2ss(g.num, g.den)
    ad, bd, cd, dd, _ = signal.cont2discrete((a, b, c, d), ts, method="zoh")
    num, den = signal.ss2tf(ad, bd, cd, dd)
    num = np.atleast_1d(np.squeeze(num))
    den = np.atleast_1d(np.squeeze(den))
    if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
        raise ArithmeticError("ZOH discretization produced non-finite coefficients")
    if np.polyval(g.den, 0.0) != 0.0:
        dc_c = g.dc_gain()
        dc_d = np.polyval(num, 1.0) / np.polyval(den, 1.0)
        num = num * (dc_c / dc_d)
    return DiscreteTF(num=num, den=den, ts=ts)


def freq_response(tf: DiscreteTF, omega, delay: int = 0):
    """Evaluate exp(-j*omega*ts*delay) * tf(exp(j*omega*ts)).

    omega is in rad/s and may be scalar or an array; omega*ts must lie in
    [0, pi] (up to Nyquist). Raises if the evaluation point sits on a pole.
    """
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    w = np.asarray(omega, dtype=float)
    theta = w * tf.ts
    if np.any(theta < -1e-12) or np.any(theta > np.pi + 1e-12):
        raise ValueError("omega*ts must lie in [0, pi]")
    z = np.exp(1j * theta)
    den = np.polyval(tf.den, z)
    scale = np.max(np.abs(tf.den))
    if np.any(np.abs(den) < 1e-300 * scale) or np.any(den == 0):
        raise ZeroDivisionError("evaluation at a pole on the unit circle")
    resp = np.exp(-1j * theta * delay) * np.polyval(tf.num, z) / den
    if np.isscalar(omega) or w.ndim == 0:
        return complex(resp)
    return resp


def simulate(tf: DiscreteTF, x, delay: int = 0, warn_unstable: bool = True) -> np.ndarray:
    """Zero-initial-condition response of tf (shifted by delay samples) to x.

    Unstable systems are simulated anyway (divergence studies need them) but
    raise UnstableFilterWarning.
    """
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    x = np.asarray(x, dtype=float)
    if warn_unstable and not is_stable(tf.den):
        warnings.warn("simulating an unstable transfer function", UnstableFilterWarning)
    n = len(tf.den)
    b = np.zeros(n)
    b[n - len(tf.num):] = tf.num
    y = signal.lfilter(b, tf.den, x)
    if delay:
        y = np.concatenate([np.zeros(delay), y[: max(len(x) - delay, 0)]])
    return y


def is_stable(den) -> bool:
    """True iff every root of the polynomial has magnitude strictly below 1."""
    d = _strip_leading_zeros(_as_poly(den))
    if np.all(d == 0.0):
        raise ValueError("polynomial must be nonzero")
    if len(d) == 1:
        return True
    roots = np.roots(d)
    return bool(np.all(np.abs(roots) < 1.0))


@dataclass
class StepFilter:
    """Single-sample stepping of a discrete transfer function plus integer delay.

    Direct form II transposed with a monic denominator. peek() returns the
    output that the next step() call will produce before the input is applied;
    it is exact only when the filter has no direct feedthrough (strictly
    proper, or any nonzero delay), which is what closed-loop well-posedness
    requires.
    """

    tf: DiscreteTF
    delay: int = 0
    _b: np.ndarray = field(init=False, repr=False)
    _a: np.ndarray = field(init=False, repr=False)
    _z: np.ndarray = field(init=False, repr=False)
    _dq: deque = field(init=False, repr=False)

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        n = len(self.tf.den) - 1
        b = np.zeros(n + 1)
        b[n + 1 - len(self.tf.num):] = self.tf.num
        self._b = b
        self._a = np.asarray(self.tf.den, dtype=float)
        self._z = np.zeros(n)
        self._dq = deque([0.0] * self.delay)

    @property
    def has_feedthrough(self) -> bool:
        return self._b[0] != 0.0 and self.delay == 0

    def peek(self) -> float:
        if self.has_feedthrough:
            raise ValueError("peek() undefined for a filter with direct feedthrough")
        return float(self._z[0]) if self._z.size else 0.0

    def step(self, x: float) -> float:
        if self.delay:
            self._dq.append(x)
            x = self._dq.popleft()
        b, a, z = self._b, self._a, self._z
        y = b[0] * x + (z[0] if z.size else 0.0)
        for i in range(z.size - 1):
            z[i] = b[i + 1] * x + z[i + 1] - a[i + 1] * y
        if z.size:
            z[-1] = b[-1] * x - a[-1] * y
        return float(y)

    def reset(self) -> None:
        self._z[:] = 0.0
        self._dq = deque([0.0] * self.delay)
