"""Pulse schedules for two-ion geometric-phase gates.

A gate drive is described by an amplitude envelope Omega(t), a detuning
delta(t) of the drive from the motional mode, and a drive-phase sign that
implements Walsh modulation.  Two families are supported:

* smooth gates: Omega is ramped up at large detuning, the detuning is then
  ramped down towards the gate value and back while the spin-dependent force
  follows adiabatically, and Omega is ramped off again at large detuning;
* Walsh gates: constant Omega and delta, with the drive phase flipped by pi
  at loop-closure times according to a Walsh sequence.

All frequencies are angular (rad/s) and all times are in seconds.  Schedules
are immutable piecewise collections of closed-form segments; integrators
sample them on demand, there is no fixed global grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ParameterError

TWO_PI = 2.0 * math.pi

# Relative slack allowed when evaluating at a domain boundary, so that
# t = duration produced by floating-point accumulation does not raise.
_EDGE_TOL = 1e-9


def _as_array(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


@dataclass(frozen=True)
class SmoothGateParams:
    """Parameters of the five-step smooth gate.

    Attributes
    ----------
    delta_max, delta_min : float
        Signed angular detunings (rad/s) at the start and bottom of the
        detuning ramp.  Both must carry the same sign and satisfy
        ``|delta_min| < |delta_max|``.
    omega_g : float
        Angular Rabi frequency of the gate drive (rad/s), > 0.
    tau_g : float
        Duration of each sin^2 amplitude ramp (s).
    tau_d : float
        Duration of each detuning ramp (s).
    t_c : float
        Constant hold time at ``delta_min`` (s), >= 0.
    j : int
        Positive exponent of the detuning ramp shape; larger values
        concentrate dwell time near ``delta_min``.
    """

    delta_max: float
    delta_min: float
    omega_g: float
    tau_g: float
    tau_d: float
    t_c: float = 0.0
    j: int = 3

    def __post_init__(self):
        if not (self.tau_g > 0 and self.tau_d > 0):
            raise ParameterError("tau_g and tau_d must be positive")
        if self.t_c < 0:
            raise ParameterError("t_c must be >= 0")
        if self.omega_g <= 0:
            raise ParameterError("omega_g must be positive")
        if self.j < 1 or int(self.j) != self.j:
            raise ParameterError("j must be a positive integer")
        if self.delta_max == 0 or self.delta_min == 0:
            raise ParameterError("detunings must be nonzero")
        if math.copysign(1.0, self.delta_max) != math.copysign(1.0, self.delta_min):
            raise ParameterError("delta_max and delta_min must share a sign")
        if not abs(self.delta_min) < abs(self.delta_max):
            raise ParameterError("|delta_min| must be smaller than |delta_max|")

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.delta_max)

    @property
    def duration(self) -> float:
        return 2 * self.tau_g + 2 * self.tau_d + self.t_c

    def with_delta_min(self, delta_min: float) -> "SmoothGateParams":
        return replace(self, delta_min=delta_min)

    def with_omega(self, omega_g: float) -> "SmoothGateParams":
        return replace(self, omega_g=omega_g)


@dataclass(frozen=True)
class WalshGateParams:
    """Parameters of a Walsh-modulated constant-detuning gate.

    ``loops`` is the number K of phase-space loops (a power of two); the
    drive sign on loop m is the Walsh function of order K-1 evaluated at m.
    """

    loops: int
    delta_g: float
    omega_g: float

    def __post_init__(self):
        k = self.loops
        if k < 1 or (k & (k - 1)) != 0:
            raise ParameterError("loops must be a power of two")
        if self.delta_g == 0:
            raise ParameterError("delta_g must be nonzero")
        if self.omega_g <= 0:
            raise ParameterError("omega_g must be positive")

    @property
    def loop_time(self) -> float:
        """Duration 2*pi/|delta_g| of a single closed loop."""
        return TWO_PI / abs(self.delta_g)

    @property
    def duration(self) -> float:
        return self.loops * self.loop_time

    @property
    def walsh_order(self) -> int:
        return self.loops - 1

    @property
    def signs(self) -> tuple[int, ...]:
        return tuple(walsh_function(self.walsh_order, m) for m in range(self.loops))

    @classmethod
    def calibrated(cls, loops: int, omega_g: float, sign: float = -1.0) -> "WalshGateParams":
        """Gate calibrated to |theta_g| = pi/2: |delta_g| = 2*omega_g*sqrt(K).

        With theta_g = 2*pi*K*omega_g^2/delta_g^2 per closed loop sequence,
        the maximally entangling condition fixes |delta_g| and hence
        t_g = pi*sqrt(K)/omega_g.
        """
        if sign not in (1.0, -1.0, 1, -1):
            raise ParameterError("sign must be +1 or -1")
        return cls(loops=loops, delta_g=sign * 2.0 * omega_g * math.sqrt(loops), omega_g=omega_g)


def walsh_function(order: int, m: int) -> int:
    """Walsh function of the given order at loop index m, in {+1, -1}.

    Orders used for K-loop gates are K-1 with K a power of two; the sign
    pattern is +1 for even and -1 for odd parity of ``order & m``:
    order 0 -> [+1], order 1 -> [+1, -1], order 3 -> [+1, -1, -1, +1].
    """
    k = order + 1
    if order < 0 or (k & (k - 1)) != 0:
        raise ParameterError("order must be K-1 with K a power of two")
    if not 0 <= m < k:
        raise IndexError(f"loop index {m} outside [0, {k})")
    return -1 if bin(order & m).count("1") % 2 else 1


def walsh_sequence(loops: int) -> np.ndarray:
    """Sign sequence of the order-(K-1) Walsh function over K loops."""
    return np.array([walsh_function(loops - 1, m) for m in range(loops)], dtype=float)


def _ramp_magnitude(tau_d: float, abs_max: float, abs_min: float, j: int, t: np.ndarray) -> np.ndarray:
    b = abs_max ** (-j)
    c = (2.0 / tau_d) * (abs_min ** (-j) - abs_max ** (-j))
    g = t / 2.0 - (tau_d / (2.0 * TWO_PI)) * np.sin(TWO_PI * t / tau_d)
    return (b + c * g) ** (-1.0 / j)


def eval_detuning_ramp(p: SmoothGateParams, t) -> np.ndarray | float:
    """Detuning on the down ramp, delta_max at t=0 to delta_min at t=tau_d.

    The magnitude follows (b + c*g(t))^(-1/j) with
    g(t) = t/2 - (tau_d/4pi)*sin(2*pi*t/tau_d), b = |delta_max|^(-j) and
    c = (2/tau_d)*(|delta_min|^(-j) - |delta_max|^(-j)), which makes both
    delta and its first derivative continuous at the ramp boundaries.  The
    shared sign of the detunings is applied afterwards.
    """
    arr, scalar = _as_array(t)
    tol = _EDGE_TOL * p.tau_d
    if np.any(arr < -tol) or np.any(arr > p.tau_d + tol):
        raise DomainError("ramp time outside [0, tau_d]")
    arr = np.clip(arr, 0.0, p.tau_d)
    out = p.sign * _ramp_magnitude(p.tau_d, abs(p.delta_max), abs(p.delta_min), p.j, arr)
    return float(out) if scalar else out


def eval_amplitude_ramp(tau_g: float, omega_g: float, t, direction: str = "up") -> np.ndarray | float:
    """sin^2 amplitude ramp between 0 and omega_g over [0, tau_g]."""
    if direction not in ("up", "down"):
        raise ParameterError("direction must be 'up' or 'down'")
    if tau_g <= 0:
        raise ParameterError("tau_g must be positive")
    arr, scalar = _as_array(t)
    tol = _EDGE_TOL * tau_g
    if np.any(arr < -tol) or np.any(arr > tau_g + tol):
        raise DomainError("ramp time outside [0, tau_g]")
    arr = np.clip(arr, 0.0, tau_g)
    if direction == "down":
        arr = tau_g - arr
    out = omega_g * np.sin(np.pi * arr / (2.0 * tau_g)) ** 2
    return float(out) if scalar else out


@dataclass(frozen=True)
class Segment:
    """One closed-form piece of a schedule, evaluated in local time.

    ``omega`` and ``delta`` map local time u in [0, duration] to rad/s;
    ``sign`` is the Walsh drive sign (+1 or -1, a drive-phase offset of 0 or
    pi).  ``const_omega``/``const_delta`` are set when the corresponding
    function is constant, which lets propagators take exact steps.
    """

    duration: float
    omega: Callable[[np.ndarray], np.ndarray]
    delta: Callable[[np.ndarray], np.ndarray]
    sign: float = 1.0
    const_omega: float | None = None
    const_delta: float | None = None
    label: str = ""

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ParameterError("segment duration must be positive and finite")
        if self.sign not in (1.0, -1.0, 1, -1):
            raise ParameterError("segment sign must be +1 or -1")

    @property
    def is_constant(self) -> bool:
        return self.const_omega is not None and self.const_delta is not None

    def max_abs_delta(self) -> float:
        if self.const_delta is not None:
            return abs(self.const_delta)
        u = np.linspace(0.0, self.duration, 65)
        return float(np.max(np.abs(self.delta(u))))

    def shifted(self, offset: float) -> "Segment":
        """Copy with a constant added to the detuning."""
        if self.const_delta is not None:
            new_delta = self.const_delta + offset
            return replace(self, delta=lambda u, v=new_delta: np.full_like(np.asarray(u, dtype=float), v),
                           const_delta=new_delta)
        old = self.delta
        return replace(self, delta=lambda u, f=old, d=offset: f(u) + d, const_delta=None)


def _const_fn(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda u, v=value: np.full_like(np.asarray(u, dtype=float), v)


@dataclass(frozen=True)
class CarrierDrive:
    """Co-propagating carrier tone with trapezoidal envelope.

    The carrier Rabi rate ramps linearly over ``ramp`` starting at
    ``start``, holds at ``rabi``, and ramps off to reach zero at ``stop``.
    If ``invert_at`` is set the carrier phase flips sign there, which
    cancels the accumulated carrier rotation over a symmetric window.
    ``phase`` is the carrier spin-phase relative to the gate drive basis.
    """

    rabi: float
    start: float
    stop: float
    ramp: float = 0.5e-6
    phase: float = 0.0
    invert_at: float | None = None

    def __post_init__(self):
        if self.rabi < 0:
            raise ParameterError("carrier rabi must be >= 0")
        if self.ramp < 0 or self.stop - self.start < 2 * self.ramp:
            raise ParameterError("carrier window shorter than its ramps")

    def amplitude(self, t) -> np.ndarray:
        arr, scalar = _as_array(t)
        out = np.zeros_like(arr)
        if self.rabi > 0:
            inside = (arr >= self.start) & (arr <= self.stop)
            if self.ramp > 0:
                up = np.clip((arr - self.start) / self.ramp, 0.0, 1.0)
                down = np.clip((self.stop - arr) / self.ramp, 0.0, 1.0)
                out = np.where(inside, self.rabi * np.minimum(up, down), 0.0)
            else:
                out = np.where(inside, self.rabi, 0.0)
        return float(out) if scalar else out

    def drive_sign(self, t) -> np.ndarray:
        arr, scalar = _as_array(t)
        if self.invert_at is None:
            out = np.ones_like(arr)
        else:
            out = np.where(arr < self.invert_at, 1.0, -1.0)
        return float(out) if scalar else out


class PulseSchedule:
    """Immutable ordered collection of :class:`Segment` pieces.

    Omega and delta must be continuous across segment joins; smooth-gate
    schedules additionally begin and end with Omega = 0.  Evaluation is
    pure and safe to share across threads.
    """

    def __init__(self, segments: Sequence[Segment], carrier: CarrierDrive | None = None,
                 label: str = ""):
        if not segments:
            raise ParameterError("schedule needs at least one segment")
        self.segments = tuple(segments)
        self.carrier = carrier
        self.label = label
        bounds = np.concatenate(([0.0], np.cumsum([s.duration for s in self.segments])))
        self.boundaries = bounds
        self.duration = float(bounds[-1])
        self._check_continuity()
        if carrier is not None and (carrier.start < -_EDGE_TOL * self.duration
                                    or carrier.stop > self.duration * (1 + _EDGE_TOL)):
            raise ParameterError("carrier window extends outside the schedule")

    def _check_continuity(self):
        scale_o = max(abs(s.omega(np.array([0.0]))[0]) for s in self.segments) + 1.0
        for left, right in zip(self.segments[:-1], self.segments[1:]):
            o_l = float(left.omega(np.array([left.duration]))[0])
            o_r = float(right.omega(np.array([0.0]))[0])
            d_l = float(left.delta(np.array([left.duration]))[0])
            d_r = float(right.delta(np.array([0.0]))[0])
            if abs(o_l - o_r) > 1e-9 * scale_o:
                raise ParameterError(f"Omega discontinuous at segment join ({o_l} vs {o_r})")
            if abs(d_l - d_r) > 1e-9 * (abs(d_l) + abs(d_r) + 1.0):
                raise ParameterError(f"delta discontinuous at segment join ({d_l} vs {d_r})")

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tol = _EDGE_TOL * self.duration
        if np.any(t < -tol) or np.any(t > self.duration + tol):
            raise DomainError("time outside schedule")
        tc = np.clip(t, 0.0, self.duration)
        idx = np.searchsorted(self.boundaries[1:-1], tc, side="right")
        return idx, tc - self.boundaries[idx]

    def _eval(self, t, attr: str):
        arr, scalar = _as_array(t)
        idx, local = self._locate(np.atleast_1d(arr))
        out = np.empty_like(np.atleast_1d(arr))
        for i, seg in enumerate(self.segments):
            m = idx == i
            if np.any(m):
                out[m] = getattr(seg, attr)(local[m])
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def omega(self, t):
        """Drive amplitude magnitude Omega(t) in rad/s."""
        return self._eval(t, "omega")

    def delta(self, t):
        """Drive detuning delta(t) in rad/s."""
        return self._eval(t, "delta")

    def drive_sign(self, t):
        """Walsh drive sign (+1/-1) as a function of time."""
        arr, scalar = _as_array(t)
        idx, _ = self._locate(np.atleast_1d(arr))
        signs = np.array([s.sign for s in self.segments])
        out = signs[idx]
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def phase(self, t):
        """Drive phase offset in rad: 0 where the sign is +1, pi where -1."""
        s = self.drive_sign(t)
        return np.where(np.asarray(s) < 0, np.pi, 0.0) if np.ndim(s) else (np.pi if s < 0 else 0.0)

    def max_abs_delta(self) -> float:
        return max(s.max_abs_delta() for s in self.segments)

    def with_detuning_offset(self, offset: float) -> "PulseSchedule":
        """New schedule with a constant mode-frequency error added to delta(t)."""
        segs = [s.shifted(offset) for s in self.segments]
        return PulseSchedule(segs, carrier=self.carrier,
                             label=f"{self.label}+offset" if self.label else "offset")

    def sample(self, n: int = 2001) -> dict[str, np.ndarray]:
        """Uniform sampling for export: t_s, omega_rad_s, delta_rad_s, phase_rad."""
        if n < 2:
            raise ParameterError("need at least two samples")
        t = np.linspace(0.0, self.duration, n)
        return {
            "t_s": t,
            "omega_rad_s": np.atleast_1d(self.omega(t)),
            "delta_rad_s": np.atleast_1d(self.delta(t)),
            "phase_rad": np.atleast_1d(self.phase(t)),
        }


def build_smooth_schedule(p: SmoothGateParams, merge_ramps: bool = False,
                          carrier_rabi: float = 0.0, carrier_ramp: float = 0.5e-6,
                          carrier_phase: float = 0.0, carrier_invert: bool = True) -> PulseSchedule:
    """Assemble the five-step smooth-gate schedule.

    Steps: ramp Omega up at delta_max, ramp delta down to delta_min, hold
    for t_c, ramp delta back up, ramp Omega down.  With ``merge_ramps`` the
    amplitude ramps run concurrently with the start/end of the detuning
    ramps (requires tau_g <= tau_d), shortening the gate to 2*tau_d + t_c.
    A zero-length hold is omitted rather than kept as a degenerate segment.

    A nonzero ``carrier_rabi`` attaches a carrier tone that ramps linearly
    over ``carrier_ramp`` inside the full-amplitude window of the gate
    drive, with a phase inversion at the schedule midpoint by default.
    """
    abs_ramp = lambda u: _ramp_magnitude(p.tau_d, abs(p.delta_max), abs(p.delta_min), p.j, np.asarray(u, dtype=float))
    down = lambda u: p.sign * abs_ramp(u)
    up = lambda u: p.sign * abs_ramp(p.tau_d - np.asarray(u, dtype=float))
    amp_up = lambda u: eval_amplitude_ramp(p.tau_g, p.omega_g, np.asarray(u, dtype=float), "up")
    amp_down = lambda u: eval_amplitude_ramp(p.tau_g, p.omega_g, np.asarray(u, dtype=float), "down")

    segs: list[Segment] = []
    if merge_ramps:
        if p.tau_g > p.tau_d:
            raise ParameterError("merged ramps require tau_g <= tau_d")

        def omega_in(u):
            u = np.asarray(u, dtype=float)
            return np.where(u < p.tau_g, eval_amplitude_ramp(p.tau_g, p.omega_g, np.minimum(u, p.tau_g), "up"),
                            p.omega_g)

        def omega_out(u):
            u = np.asarray(u, dtype=float)
            t0 = p.tau_d - p.tau_g
            return np.where(u > t0, eval_amplitude_ramp(p.tau_g, p.omega_g, np.maximum(u - t0, 0.0), "down"),
                            p.omega_g)

        segs.append(Segment(p.tau_d, omega_in, down, label="ramp-in"))
        if p.t_c > 0:
            segs.append(Segment(p.t_c, _const_fn(p.omega_g), _const_fn(p.delta_min),
                                const_omega=p.omega_g, const_delta=p.delta_min, label="hold"))
        segs.append(Segment(p.tau_d, omega_out, up, label="ramp-out"))
        amp_window = (0.0, 2 * p.tau_d + p.t_c)
    else:
        segs.append(Segment(p.tau_g, amp_up, _const_fn(p.delta_max), const_delta=p.delta_max, label="amp-up"))
        segs.append(Segment(p.tau_d, _const_fn(p.omega_g), down, const_omega=p.omega_g, label="det-down"))
        if p.t_c > 0:
            segs.append(Segment(p.t_c, _const_fn(p.omega_g), _const_fn(p.delta_min),
                                const_omega=p.omega_g, const_delta=p.delta_min, label="hold"))
        segs.append(Segment(p.tau_d, _const_fn(p.omega_g), up, const_omega=p.omega_g, label="det-up"))
        segs.append(Segment(p.tau_g, amp_down, _const_fn(p.delta_max), const_delta=p.delta_max, label="amp-down"))
        amp_window = (p.tau_g, p.duration - p.tau_g)

    carrier = None
    if carrier_rabi > 0:
        total = sum(s.duration for s in segs)
        carrier = CarrierDrive(rabi=carrier_rabi, start=amp_window[0], stop=amp_window[1],
                               ramp=carrier_ramp, phase=carrier_phase,
                               invert_at=total / 2.0 if carrier_invert else None)
    return PulseSchedule(segs, carrier=carrier, label="smooth")


def build_walsh_schedule(p: WalshGateParams) -> PulseSchedule:
    """Constant Omega_g and delta_g with Walsh drive-sign flips at loop closures."""
    segs = [
        Segment(p.loop_time, _const_fn(p.omega_g), _const_fn(p.delta_g), sign=float(w),
                const_omega=p.omega_g, const_delta=p.delta_g, label=f"loop{m}")
        for m, w in enumerate(p.signs)
    ]
    return PulseSchedule(segs, label=f"walsh{p.walsh_order}")


@dataclass(frozen=True)
class AdiabaticityProfile:
    """Sampled adiabatic-following metric d(beta)/dt / delta along a schedule."""

    t: np.ndarray = field(repr=False)
    metric: np.ndarray = field(repr=False)
    peak: float = 0.0


def adiabaticity_profile(schedule: PulseSchedule, samples_per_segment: int = 4001) -> AdiabaticityProfile:
    """Evaluate the dimensionless adiabaticity metric along a schedule.

    The displaced-frame expansion parameter is alpha = -Omega/delta and
    beta = (d alpha/dt)/delta; following is adiabatic when |d beta/dt| is
    small against |delta|.  Derivatives are taken by finite differences on
    each closed-form segment separately, so the piecewise joins do not
    pollute the estimate.  For pure amplitude ramps the metric reduces to
    the -(d^2 Omega/dt^2)/delta^3 scaling, for pure detuning ramps to
    Omega*(delta'' * delta - 3*delta'^2)/delta^5.
    """
    ts, ms = [], []
    for i, seg in enumerate(schedule.segments):
        u = np.linspace(0.0, seg.duration, samples_per_segment)
        if seg.is_constant:
            metric = np.zeros_like(u)
        else:
            om = np.atleast_1d(seg.omega(u)).astype(float)
            de = np.atleast_1d(seg.delta(u)).astype(float)
            alpha = -om / de
            beta = np.gradient(alpha, u) / de
            metric = np.gradient(beta, u) / de
        ts.append(u + schedule.boundaries[i])
        ms.append(metric)
    t = np.concatenate(ts)
    m = np.concatenate(ms)
    return AdiabaticityProfile(t=t, metric=m, peak=float(np.max(np.abs(m))))
