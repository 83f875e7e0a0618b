"""1-bit error-feedback pulse-density modulator.

The modulator ticks once per half switching cycle. Each tick it filters the
stored quantization errors through H = 1 - NTF, subtracts the result from
the commanded density d, and quantizes:

    w[n] = H applied to past errors        (strictly proper: no e[n] term)
    v[n] = d[n] - w[n]
    y[n] = 1 if v[n] >= 1 else 0
    e[n] = y[n] - v[n]

which realizes Y(z) = D(z) + E(z) NTF(z). With this quantizer convention
(threshold 1, output levels {0, 1}) a stable modulator keeps e inside
[-1, 0]; the first-order loop provably never leaves that band, high-order
loops are probed empirically with `stability_probe`.

The quantizer output gates a free-running +/-1 carrier that alternates every
half cycle: `gate_split` turns a y sequence into leading-leg / lagging-leg
drive signals and the signed modulated-wave samples s = y * carrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ntf import RationalTransferFunction, to_error_filter

# Tolerance on the stability band e in [-1, 0]: excursions beyond this are
# counted as violations.
STABILITY_TOL = 1e-9


@dataclass(frozen=True)
class QuantizerConvention:
    """1-bit quantizer: y = 1 iff the shaped input reaches the threshold."""

    threshold: float = 1.0
    levels: tuple[int, int] = (0, 1)


@dataclass
class ModulatorState:
    """Error-feedback filter memory plus tick counter.

    ``e_history``/``w_history`` hold the last ``order`` error and filter
    output samples, newest first, zero-initialized.
    """

    error_filter: RationalTransferFunction
    e_history: list[float] = field(default_factory=list)
    w_history: list[float] = field(default_factory=list)
    tick: int = 0

    def __post_init__(self):
        n = self.error_filter.order
        if not self.e_history:
            self.e_history = [0.0] * n
        if not self.w_history:
            self.w_history = [0.0] * n


class PulseDensityModulator:
    """Stateful modulator for one bridge; tick once per half cycle."""

    def __init__(self, ntf: RationalTransferFunction,
                 quantizer: QuantizerConvention = QuantizerConvention()):
        h = to_error_filter(ntf)
        self.ntf = ntf
        self.quantizer = quantizer
        # Direct-form coefficients, zero-padded so w[n] uses exactly `order`
        # past e and w samples: w[n] = sum b_i e[n-i] - sum a_i w[n-i].
        order = h.order
        self._b = (0.0,) * (order - len(h.num)) + h.num if order else ()
        self._a = tuple(h.den[1:])
        self.state = ModulatorState(error_filter=h)

    def reset(self):
        n = self.state.error_filter.order
        self.state.e_history = [0.0] * n
        self.state.w_history = [0.0] * n
        self.state.tick = 0

    def step(self, d: float) -> int:
        """Advance one half cycle with commanded density ``d``; return y."""
        if not math.isfinite(d):
            raise ValueError(f"pulse density must be finite, got {d}")
        st = self.state
        w = 0.0
        for b_i, e_i in zip(self._b, st.e_history):
            w += b_i * e_i
        for a_i, w_i in zip(self._a, st.w_history):
            w -= a_i * w_i
        v = d - w
        y = 1 if v >= self.quantizer.threshold else 0
        e = y - v
        if st.e_history:
            st.e_history = [e] + st.e_history[:-1]
            st.w_history = [w] + st.w_history[:-1]
        st.tick += 1
        return y

    def run(self, densities: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch `step` over a density waveform; returns (y, e) arrays."""
        d_arr = np.asarray(densities, dtype=float)
        _check_densities(d_arr)
        n = d_arr.shape[0]
        y_out = np.empty(n, dtype=np.int8)
        e_out = np.empty(n)
        # Local-variable unroll of step(); identical arithmetic, much faster.
        b = self._b
        a = self._a
        eh = list(self.state.e_history)
        wh = list(self.state.w_history)
        threshold = self.quantizer.threshold
        for i in range(n):
            w = 0.0
            for j in range(len(b)):
                w += b[j] * eh[j]
            for j in range(len(a)):
                w -= a[j] * wh[j]
            v = d_arr[i] - w
            y = 1 if v >= threshold else 0
            e = y - v
            if eh:
                eh = [e] + eh[:-1]
                wh = [w] + wh[:-1]
            y_out[i] = y
            e_out[i] = e
        self.state.e_history = eh
        self.state.w_history = wh
        self.state.tick += n
        return y_out, e_out


def _check_densities(d: np.ndarray):
    if not np.all(np.isfinite(d)):
        raise ValueError("density waveform contains non-finite values")
    if d.size and (d.min() < 0.0 or d.max() > 1.0):
        raise ValueError("density waveform must lie in [0, 1]")


def run(ntf: RationalTransferFunction, d_waveform, n_ticks: int | None = None
        ) -> tuple[np.ndarray, np.ndarray]:
    """Run a fresh modulator over a waveform.

    ``d_waveform`` is a sequence of densities, or a scalar replicated over
    ``n_ticks``. Returns the (y, e) sequences; deterministic given inputs.
    """
    if np.isscalar(d_waveform):
        if n_ticks is None:
            raise ValueError("n_ticks required for a scalar density")
        d_arr = np.full(n_ticks, float(d_waveform))
    else:
        d_arr = np.asarray(d_waveform, dtype=float)
        if n_ticks is not None:
            d_arr = d_arr[:n_ticks]
    return PulseDensityModulator(ntf).run(d_arr)


def run_const_grid(ntf: RationalTransferFunction, d_values,
                   n_ticks: int) -> tuple[np.ndarray, np.ndarray]:
    """Run many constant-density modulators in lockstep (vectorized).

    Returns (y, e) arrays of shape (n_ticks, len(d_values)). Bit-identical
    to running `run` per density; used for the long stability and
    reconstruction sweeps where per-tick Python costs dominate.
    """
    d_arr = np.asarray(d_values, dtype=float)
    _check_densities(d_arr)
    h = to_error_filter(ntf)
    order = h.order
    b = np.zeros(order)
    if order and len(h.num) <= order:
        b[order - len(h.num):] = h.num
    a = np.array(h.den[1:])
    m = d_arr.shape[0]
    eh = np.zeros((order, m))
    wh = np.zeros((order, m))
    y_out = np.empty((n_ticks, m), dtype=np.int8)
    e_out = np.empty((n_ticks, m))
    threshold = QuantizerConvention().threshold
    for i in range(n_ticks):
        # Same summation order as the scalar path so results stay
        # bit-identical: all b terms first, then all a terms.
        w = np.zeros(m)
        for j in range(order):
            w += b[j] * eh[j]
        for j in range(order):
            w -= a[j] * wh[j]
        v = d_arr - w
        y = v >= threshold
        e = y - v
        if order:
            eh[1:] = eh[:-1]
            eh[0] = e
            wh[1:] = wh[:-1]
            wh[0] = w
        y_out[i] = y
        e_out[i] = e
    return y_out, e_out


@dataclass(frozen=True)
class GateSequence:
    """Per-half-cycle gate records derived from a y sequence.

    ``a``/``b`` drive the leading and lagging legs; ``s = a - b`` is the
    polarity-resolved modulated-wave sample in {-1, 0, +1}.
    """

    tick: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray


def gate_split(y, carrier_phase0: int = 1) -> GateSequence:
    """AND the quantizer output with a free-running alternating carrier.

    The carrier toggles every half cycle regardless of y: skipped pulses
    mask it without stopping it, so the polarity pattern of delivered
    pulses stays locked to the half-cycle grid.
    """
    if carrier_phase0 not in (1, -1):
        raise ValueError("carrier_phase0 must be +1 or -1")
    y_arr = np.asarray(y, dtype=np.int8)
    n = y_arr.shape[0]
    carrier = np.where(np.arange(n) % 2 == 0, carrier_phase0, -carrier_phase0)
    s = (y_arr * carrier).astype(np.int8)
    a = ((y_arr == 1) & (carrier > 0)).astype(np.int8)
    b = ((y_arr == 1) & (carrier < 0)).astype(np.int8)
    return GateSequence(tick=np.arange(n), y=y_arr, a=a, b=b, s=s)


@dataclass(frozen=True)
class StabilityReport:
    """Extremes of the quantization error over a probe run."""

    e_min: float
    e_max: float
    violation_count: int
    mean_density_error: float

    @property
    def stable(self) -> bool:
        return self.violation_count == 0


def count_violations(e: np.ndarray) -> int:
    """Excursions of e outside [-1, 0] beyond the boundary tolerance."""
    return int(np.count_nonzero((e < -1.0 - STABILITY_TOL) | (e > STABILITY_TOL)))


def stability_probe(ntf: RationalTransferFunction, d_waveform,
                    n_ticks: int | None = None) -> StabilityReport:
    """Run the modulator and report the quantization-error extremes.

    The modulator is considered stable when e never leaves [-1, 0]
    (tolerance ``STABILITY_TOL`` on the boundaries).
    """
    y, e = run(ntf, d_waveform, n_ticks)
    d_arr = (np.full(len(y), float(d_waveform)) if np.isscalar(d_waveform)
             else np.asarray(d_waveform, dtype=float)[:len(y)])
    return StabilityReport(
        e_min=float(e.min()),
        e_max=float(e.max()),
        violation_count=count_violations(e),
        mean_density_error=float(abs(y.mean() - d_arr.mean())),
    )


def constant_density(value: float, n_ticks: int) -> np.ndarray:
    return np.full(n_ticks, float(value))


def sinusoid_density(n_ticks: int, offset: float = 0.5, amplitude: float = 0.5,
                     period_ticks: int = 2048) -> np.ndarray:
    """Sinusoidal probe waveform, clipped only by construction to [0, 1]."""
    n = np.arange(n_ticks)
    d = offset + amplitude * np.sin(2.0 * np.pi * n / period_ticks)
    return np.clip(d, 0.0, 1.0)


def ramp_density(n_ticks: int, start: float = 0.0, stop: float = 1.0) -> np.ndarray:
    return np.linspace(start, stop, n_ticks)
