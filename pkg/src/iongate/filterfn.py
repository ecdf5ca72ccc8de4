"""Mode-frequency-noise filter functions and noise-PSD integrals.

A small mode-frequency error eps(t) = eps0*cos(omega*t + phi_f) perturbs a
gate through two first-order channels: a residual spin-dependent
displacement alpha_t = int eps*gamma dt and a gate-angle error
delta_theta = 2*int eps*|gamma|^2 dt, with gamma the per-unit-eigenvalue
branch displacement.  Averaging the resulting infidelity over the noise
phases phi_f in {0, -pi/2} gives the filter function

    S(omega) = (2*nbar+1)*lam2_S *(|A_c|^2 + |A_s|^2)/2
             +            lam2_S2*(T_c^2   + T_s^2  )/2,

with A_{c,s} = int cos/sin(omega*t)*gamma dt and T_{c,s} = int cos/sin
(omega*t)*|gamma|^2 dt, so that the infidelity under noise of power
spectral density P is int P(omega)*S(omega) domega.  The one-half phase
average is applied to the displacement and angle components alike; by the
cos^2+sin^2 completeness this equals the average over any full phase
cycle.

The Walsh closed form evaluates the same integrals loop by loop.  Writing
every loop integral as int_a^b exp(i*q*t) dt = (b-a)*exp(i*q*(a+b)/2)*
sinc(q*(b-a)/2) keeps the expressions finite at the nominal resonances
omega = |delta| and omega -> 0, so no singular special-casing is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridError, ParameterError
from .schedule import TWO_PI, PulseSchedule, WalshGateParams, build_walsh_schedule
from .semiclassical import SpinStateVariances, propagate_displacement

# Variances of the bright-state input |up,up> in the gate basis, the
# worst-case input relevant to the benchmarking protocol.
DEFAULT_VARIANCES = SpinStateVariances(mean_s=0.0, mean_s2=2.0, var_s=2.0, var_s2=4.0)

# Minimum samples per period of the highest requested noise frequency.
OVERSAMPLE = 12


@dataclass(frozen=True)
class FilterFunction:
    """Sampled noise filter function S(omega) and its two components.

    ``displacement`` carries the (2*nbar+1) thermal enhancement;
    ``angle`` is temperature independent.  Units are 1/(rad/s)^2 per unit
    eps^2, so that int P(omega)*S(omega) domega is dimensionless.
    """

    omega: np.ndarray = field(repr=False)
    total: np.ndarray = field(repr=False)
    displacement: np.ndarray = field(repr=False)
    angle: np.ndarray = field(repr=False)
    nbar: float = 0.0
    variances: SpinStateVariances = DEFAULT_VARIANCES
    label: str = ""

    def __post_init__(self):
        if np.any(self.displacement < 0) or np.any(self.angle < 0):
            raise ParameterError("filter function components must be >= 0")
        if not np.allclose(self.total, self.displacement + self.angle, rtol=1e-12, atol=0):
            raise ParameterError("total must equal displacement + angle")

    def to_table(self) -> dict[str, np.ndarray]:
        return {
            "omega_rad_s": self.omega,
            "S_total": self.total,
            "S_disp": self.displacement,
            "S_angle": self.angle,
        }


def cosine_mode_error(amplitude: float, omega: float, phase: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form eps(t) = amplitude*cos(omega*t + phase) for injection tests."""
    return lambda t: amplitude * np.cos(omega * np.asarray(t, dtype=float) + phase)


def default_omega_grid(schedule: PulseSchedule | None = None, n: int = 400,
                       lo: float = 1e2, hi: float = 1e7) -> np.ndarray:
    """Logarithmic noise-frequency grid densified near the schedule features.

    Extra points cluster around the smallest |delta| and the largest Omega
    of the schedule, where the filter-function structure concentrates.
    """
    if not (0 < lo < hi) or n < 16:
        raise ParameterError("need 0 < lo < hi and n >= 16")
    features = []
    if schedule is not None:
        dmin = min(seg.max_abs_delta() if seg.is_constant else
                   float(np.min(np.abs(seg.delta(np.linspace(0, seg.duration, 65)))))
                   for seg in schedule.segments)
        omax = max(float(np.max(np.abs(seg.omega(np.linspace(0, seg.duration, 65)))))
                   for seg in schedule.segments)
        features = [f for f in (dmin, omax) if lo < f < hi]
    n_dense = min(48, n // 8)
    base = np.geomspace(lo, hi, n - n_dense * len(features))
    parts = [base]
    for f in features:
        parts.append(np.geomspace(max(lo, f / 3), min(hi, f * 3), n_dense))
    grid = np.unique(np.concatenate(parts))
    return grid


def _trapz_weights(t: np.ndarray) -> np.ndarray:
    w = np.empty_like(t)
    w[0] = (t[1] - t[0]) / 2
    w[-1] = (t[-1] - t[-2]) / 2
    w[1:-1] = (t[2:] - t[:-2]) / 2
    return w


def _assemble(omega, a_c, a_s, t_c, t_s, nbar, variances, label) -> FilterFunction:
    disp = 0.5 * (2 * nbar + 1) * variances.var_s * (np.abs(a_c) ** 2 + np.abs(a_s) ** 2)
    ang = 0.5 * variances.var_s2 * (t_c ** 2 + t_s ** 2)
    return FilterFunction(omega=omega, total=disp + ang, displacement=disp, angle=ang,
                          nbar=nbar, variances=variances, label=label)


def filter_function_numeric(schedule: PulseSchedule, nbar: float = 0.0,
                            variances: SpinStateVariances = DEFAULT_VARIANCES,
                            omega: np.ndarray | None = None,
                            **solver_kwargs) -> FilterFunction:
    """Filter function of an arbitrary schedule from the exact trajectory.

    The per-unit-eigenvalue gamma(t) is integrated on a grid fine enough
    to resolve both the schedule detunings and the highest requested
    noise frequency (``OVERSAMPLE`` samples per period); the Fourier
    integrals are then plain trapezoid sums evaluated in omega blocks.
    """
    if nbar < 0:
        raise ParameterError("nbar must be >= 0")
    om = default_omega_grid(schedule) if omega is None else np.asarray(omega, dtype=float)
    if om.ndim != 1 or om.size == 0 or np.any(om <= 0) or np.any(np.diff(om) <= 0):
        raise GridError("omega grid must be positive and strictly increasing")
    w_max = float(om[-1])

    parts = []
    for i, seg in enumerate(schedule.segments):
        spacing = min(TWO_PI / (OVERSAMPLE * w_max), TWO_PI / (24.0 * max(seg.max_abs_delta(), 1.0)))
        pts = max(9, int(math.ceil(seg.duration / spacing)) + 1)
        parts.append(np.linspace(0.0, seg.duration, pts) + schedule.boundaries[i])
    t = np.unique(np.concatenate(parts))
    traj = propagate_displacement(schedule, branch_eigenvalue=1.0, t_eval=t, **solver_kwargs)
    t = traj.t

    w = _trapz_weights(t)
    g = w * traj.gamma
    g2 = w * np.abs(traj.gamma) ** 2
    a_c = np.empty(om.size, dtype=complex)
    a_s = np.empty(om.size, dtype=complex)
    t_c = np.empty(om.size)
    t_s = np.empty(om.size)
    for start in range(0, om.size, 128):
        blk = slice(start, min(start + 128, om.size))
        phase = om[blk, None] * t[None, :]
        c, s = np.cos(phase), np.sin(phase)
        a_c[blk] = c @ g
        a_s[blk] = s @ g
        t_c[blk] = c @ g2
        t_s[blk] = s @ g2
    return _assemble(om, a_c, a_s, t_c, t_s, nbar, variances,
                     label=schedule.label or "numeric")


def _exp_integral(q: np.ndarray, a: float, b: float) -> np.ndarray:
    """int_a^b exp(i*q*t) dt in sinc form, regular at q = 0."""
    half = (b - a) / 2.0
    return (b - a) * np.exp(1j * q * (a + b) / 2.0) * np.sinc(q * half / np.pi)


def filter_function_walsh_analytic(p: WalshGateParams, nbar: float = 0.0,
                                   variances: SpinStateVariances = DEFAULT_VARIANCES,
                                   omega: np.ndarray | None = None) -> FilterFunction:
    """Closed-form filter function of a Walsh-modulated constant-drive gate.

    On loop m the displacement is gamma = -(W_m*Omega/2/delta)*
    (exp(i*delta*t)-1), so every Fourier integral reduces to exponential
    integrals over the loop windows, evaluated in sinc form (finite at
    omega = |delta| and omega -> 0).  The modulus |gamma|^2 =
    (Omega^2/2/delta^2)*(1-cos(delta*t)) is Walsh independent, so the
    angle component never benefits from the modulation.
    """
    if nbar < 0:
        raise ParameterError("nbar must be >= 0")
    if omega is None:
        omega = default_omega_grid(build_walsh_schedule(p))
    om = np.asarray(omega, dtype=float)
    if om.ndim != 1 or om.size == 0 or np.any(om <= 0) or np.any(np.diff(om) <= 0):
        raise GridError("omega grid must be positive and strictly increasing")

    de = p.delta_g
    og = p.omega_g
    t_k = p.loop_time
    t_g = p.duration

    a_c = np.zeros(om.size, dtype=complex)
    a_s = np.zeros(om.size, dtype=complex)
    for m, w_m in enumerate(p.signs):
        a, b = m * t_k, (m + 1) * t_k
        e_pp = _exp_integral(de + om, a, b)
        e_pm = _exp_integral(de - om, a, b)
        e_p = _exp_integral(om, a, b)
        # cos(w t)*(e^{i d t}-1) and sin(w t)*(e^{i d t}-1), loop m
        a_c += w_m * ((e_pp + e_pm) / 2.0 - e_p.real)
        a_s += w_m * ((e_pp - e_pm) / (2.0j) - e_p.imag)
    pref = -og / (2.0 * de)
    a_c *= pref
    a_s *= pref

    e_w = _exp_integral(om, 0.0, t_g)
    e_wp = _exp_integral(om + de, 0.0, t_g)
    e_wm = _exp_integral(om - de, 0.0, t_g)
    t_c = (og ** 2 / (2 * de ** 2)) * (e_w.real - (e_wp.real + e_wm.real) / 2.0)
    t_s = (og ** 2 / (2 * de ** 2)) * (e_w.imag - (e_wp.imag + e_wm.imag) / 2.0)
    return _assemble(om, a_c, a_s, t_c, t_s, nbar, variances, label=f"walsh{p.walsh_order}")


# ---------------------------------------------------------------------------
# noise spectra


@dataclass(frozen=True)
class PowerLawPsd:
    """P(omega) = amplitude * omega^(-exponent) on [omega_min, omega_max].

    ``amplitude`` carries units (rad/s)^2 * (rad/s)^(exponent-1) so that
    int P domega is the mode-frequency variance captured in the band.
    """

    amplitude: float
    exponent: float
    omega_min: float
    omega_max: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ParameterError("amplitude must be >= 0")
        if not 0 <= self.omega_min < self.omega_max:
            raise ParameterError("need 0 <= omega_min < omega_max")
        if self.exponent > 0 and self.omega_min <= 0:
            raise ParameterError("decaying power law needs a positive low cutoff")
        if self.exponent >= 1 and self.omega_min == 0:
            raise ParameterError("power law not integrable without low cutoff")

    @property
    def band(self) -> tuple[float, float]:
        return (self.omega_min, self.omega_max)

    def __call__(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        inside = (w >= self.omega_min) & (w <= self.omega_max)
        with np.errstate(divide="ignore"):
            vals = self.amplitude * np.where(inside, w, 1.0) ** (-self.exponent)
        return np.where(inside, vals, 0.0)


@dataclass(frozen=True)
class SampledPsd:
    """Piecewise-linear PSD from samples; zero outside the sampled band."""

    omega: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != v.shape or w.size < 2:
            raise ParameterError("need matching 1-D omega and value arrays")
        if np.any(np.diff(w) <= 0) or np.any(w <= 0):
            raise ParameterError("omega samples must be positive and increasing")
        if np.any(v < 0):
            raise ParameterError("PSD values must be >= 0")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)

    @property
    def band(self) -> tuple[float, float]:
        return (float(self.omega[0]), float(self.omega[-1]))

    def __call__(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        out = np.interp(w, self.omega, self.values, left=0.0, right=0.0)
        return out


@dataclass(frozen=True)
class NoiseInfidelity:
    """Quadrature result int P*S domega with a Richardson error estimate."""

    value: float
    quad_error: float


def noise_infidelity_integral(ff: FilterFunction, psd) -> NoiseInfidelity:
    """Integrate the filter function against a noise PSD over their overlap.

    The integrand is evaluated on the union of the filter-function grid
    and any PSD sample points inside the overlapping band; the error
    estimate compares the trapezoid result against the half-resolution
    one.
    """
    lo = max(float(ff.omega[0]), psd.band[0])
    hi = min(float(ff.omega[-1]), psd.band[1])
    if not lo < hi:
        raise ParameterError("filter function and PSD do not overlap in omega")
    pts = [ff.omega[(ff.omega >= lo) & (ff.omega <= hi)], np.array([lo, hi])]
    if isinstance(psd, SampledPsd):
        pts.append(psd.omega[(psd.omega >= lo) & (psd.omega <= hi)])
    grid = np.unique(np.concatenate(pts))
    s = np.interp(grid, ff.omega, ff.total)
    integrand = psd(grid) * s
    full = float(np.trapezoid(integrand, grid))
    half = float(np.trapezoid(integrand[::2], grid[::2]))
    return NoiseInfidelity(value=full, quad_error=abs(full - half) / 3.0)
