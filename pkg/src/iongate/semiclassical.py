"""Per-branch forced-oscillator dynamics and perturbative gate errors.

In the eigenbasis of the collective spin operator S_alpha the gate drive
reduces, per eigenvalue s in {+2, 0, 0, -2}, to a classically forced
oscillator.  In the frame co-rotating with the accumulated detuning phase
eta(t) = int_0^t delta dt' the displacement obeys

    d(gamma)/dt = -i*(s/2)*W(t)*Omega(t)*exp(i*eta(t)),

with W(t) the Walsh drive sign.  This sign and frame convention is the
canonical one used throughout the package; the closed form for constant
drive, gamma = -(s*Omega/2/delta)*(exp(i*delta*t)-1), vanishes at full
loops and is validated against the propagators in the tests.  The
geometric phase accumulates as area increments

    d(theta)/dt = Im(conj(gamma) * d(gamma)/dt),

which for constant drive integrates to (s*Omega/2)^2 * (t - sin(delta*t)/
delta)/delta.  The gate angle (relative phase between forced and null
branches) is theta of the |s| = 2 branch and is proportional to Omega^2
for a fixed schedule shape, which the calibration helpers exploit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import brentq

from .errors import ConvergenceError, GridError, ParameterError
from .schedule import PulseSchedule, Segment, SmoothGateParams, TWO_PI, build_smooth_schedule

# Output grids must resolve the fastest detuning period by at least this
# many points.
GRID_POINTS_PER_PERIOD = 20


@dataclass(frozen=True)
class BranchTrajectory:
    """Sampled c-number trajectory of one spin branch.

    ``gamma`` is the dimensionless displacement in the stated ``frame``
    ("rotating" excludes the free evolution exp(-i*eta*n); "interaction"
    includes it).  ``theta`` is the accumulated geometric phase of this
    branch; null branches carry gamma = theta = 0 identically.
    """

    t: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    branch_eigenvalue: float = 1.0
    frame: str = "rotating"

    @property
    def gamma_end(self) -> complex:
        return complex(self.gamma[-1])

    @property
    def theta_end(self) -> float:
        return float(self.theta[-1])

    @property
    def eta_end(self) -> float:
        return float(self.eta[-1])

    def to_table(self) -> dict[str, np.ndarray]:
        """Column layout used for trajectory CSV export."""
        return {
            "t_s": self.t,
            "re_gamma": self.gamma.real,
            "im_gamma": self.gamma.imag,
            "eta_rad": self.eta,
            "theta_rad": self.theta,
        }


def to_interaction_frame(traj: BranchTrajectory) -> BranchTrajectory:
    """Undo the detuning-phase rotation: gamma -> gamma * exp(-i*eta).

    In the interaction frame an adiabatically followed displacement hugs
    the slowly moving equilibrium point; no-op if already there.
    """
    if traj.frame == "interaction":
        return traj
    return replace(traj, gamma=traj.gamma * np.exp(-1j * traj.eta), frame="interaction")


def to_rotating_frame(traj: BranchTrajectory) -> BranchTrajectory:
    """Apply the detuning-phase rotation: gamma -> gamma * exp(+i*eta).

    A constant interaction-frame displacement maps onto a circle of the
    same modulus (spiral for a slowly varying one); no-op if already in
    the rotating frame.  Rotations preserve |gamma| pointwise.
    """
    if traj.frame == "rotating":
        return traj
    return replace(traj, gamma=traj.gamma * np.exp(1j * traj.eta), frame="rotating")


def _segment_grid(seg: Segment, min_points: int = 33) -> np.ndarray:
    per = TWO_PI / max(seg.max_abs_delta(), 1.0 / seg.duration)
    n = max(min_points, int(math.ceil(GRID_POINTS_PER_PERIOD * seg.duration / per)) + 1)
    return np.linspace(0.0, seg.duration, n)


def _check_grid(seg: Segment, u: np.ndarray):
    if u.size < 2:
        return
    per = TWO_PI / max(seg.max_abs_delta(), 1e-300)
    allowed = per / GRID_POINTS_PER_PERIOD
    if np.max(np.diff(u)) > allowed * (1 + 1e-9):
        raise GridError(
            f"grid spacing {np.max(np.diff(u)):.3e} s too coarse for detuning period "
            f"{per:.3e} s (need >= {GRID_POINTS_PER_PERIOD} points per period)")


def _const_segment_update(seg: Segment, scale: float, y0: np.ndarray, u: np.ndarray):
    """Exact trajectory on a constant-drive segment.

    With A = -i*scale*W*Omega*exp(i*eta0) and E(u) = (exp(i*delta*u)-1)/(i*delta):
    gamma(u) = gamma0 + A*E(u), theta(u) = theta0 + Im(A*conj(gamma0)*E(u))
    + |A|^2*(delta*u - sin(delta*u))/delta^2.
    """
    om = seg.const_omega * seg.sign
    de = seg.const_delta
    g0 = y0[0] + 1j * y0[1]
    a = -1j * scale * om * np.exp(1j * y0[2])
    if de == 0.0:
        e = u.astype(complex)
        area = np.zeros_like(u)
    else:
        e = (np.exp(1j * de * u) - 1.0) / (1j * de)
        area = (de * u - np.sin(de * u)) / de ** 2
    gamma = g0 + a * e
    eta = y0[2] + de * u
    theta = y0[3] + np.imag(a * np.conj(g0) * e) + np.abs(a) ** 2 * area
    return gamma, eta, theta


def _rhs(seg: Segment, scale: float):
    sign = seg.sign

    def fun(u, y):
        om = float(seg.omega(np.array([u]))[0]) * sign
        de = float(seg.delta(np.array([u]))[0])
        c, s_ = math.cos(y[2]), math.sin(y[2])
        # d(gamma)/dt = -i*scale*om*exp(i*eta)
        dre = scale * om * s_
        dim = -scale * om * c
        dth = dim * y[0] - dre * y[1]
        return (dre, dim, de, dth)

    return fun


def _rk4_segment(fun, y0: np.ndarray, duration: float, steps: int, u_out: np.ndarray):
    h = duration / steps
    y = y0.copy()
    out = np.empty((u_out.size, 4))
    idx = 0
    grid = np.linspace(0.0, duration, steps + 1)
    # outputs are snapped to the nearest fixed step; callers use grids that
    # subdivide the step grid
    take = np.searchsorted(grid, u_out - h / 2, side="left")
    for k in range(steps + 1):
        while idx < u_out.size and take[idx] == k:
            out[idx] = y
            idx += 1
        if k == steps:
            break
        u = grid[k]
        k1 = np.array(fun(u, y))
        k2 = np.array(fun(u + h / 2, y + h / 2 * k1))
        k3 = np.array(fun(u + h / 2, y + h / 2 * k2))
        k4 = np.array(fun(u + h, y + h * k3))
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    while idx < u_out.size:
        out[idx] = y
        idx += 1
    return out, y


def propagate_displacement(schedule: PulseSchedule, branch_eigenvalue: float = 1.0,
                           t_eval: np.ndarray | None = None, rtol: float = 1e-11,
                           atol: float = 1e-13, method: str = "adaptive",
                           rk4_points_per_period: int = 200) -> BranchTrajectory:
    """Integrate gamma, eta, theta for one spin branch along a schedule.

    Constant-drive segments are advanced with the exact closed form; ramp
    segments use an adaptive RK45 pair (``method="adaptive"``) or a
    fixed-step classical RK4 fallback (``method="rk4"``).  The returned
    grid is dense enough to resolve the fastest detuning period by
    ``GRID_POINTS_PER_PERIOD`` points; a user-supplied ``t_eval`` must be
    at least as fine and is checked per segment.
    """
    if method not in ("adaptive", "rk4"):
        raise ParameterError("method must be 'adaptive' or 'rk4'")
    s = float(branch_eigenvalue)
    scale = s / 2.0

    bounds = schedule.boundaries
    if t_eval is None:
        locals_per_seg = [_segment_grid(seg) for seg in schedule.segments]
    else:
        t = np.asarray(t_eval, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) < 0):
            raise GridError("t_eval must be a sorted 1-D array")
        if t[0] < -1e-12 or t[-1] > schedule.duration * (1 + 1e-9):
            raise GridError("t_eval extends outside the schedule")
        idx = np.searchsorted(bounds[1:-1], t, side="right")
        locals_per_seg = []
        for i, seg in enumerate(schedule.segments):
            u = t[idx == i] - bounds[i]
            _check_grid(seg, u)
            locals_per_seg.append(u)

    y = np.zeros(4)
    ts, gs, es, hs = [], [], [], []
    for i, seg in enumerate(schedule.segments):
        u = locals_per_seg[i]
        if seg.is_constant:
            if u.size:
                gamma, eta, theta = _const_segment_update(seg, scale, y, u)
                ts.append(u + bounds[i])
                gs.append(gamma)
                es.append(eta)
                hs.append(theta)
            ge, ee, he = _const_segment_update(seg, scale, y, np.array([seg.duration]))
            y = np.array([ge[0].real, ge[0].imag, ee[0], he[0]])
            continue
        fun = _rhs(seg, scale)
        if method == "adaptive":
            max_step = min(seg.duration / 16.0, TWO_PI / (8.0 * max(seg.max_abs_delta(), 1.0)))
            sol = solve_ivp(fun, (0.0, seg.duration), y, method="RK45", rtol=rtol, atol=atol,
                            dense_output=True, max_step=max_step)
            if not sol.success:
                raise ConvergenceError(f"adaptive integration failed on segment {i}: {sol.message}")
            if u.size:
                vals = sol.sol(u)
                ts.append(u + bounds[i])
                gs.append(vals[0] + 1j * vals[1])
                es.append(vals[2])
                hs.append(vals[3])
            y = sol.y[:, -1].copy()
        else:
            per = TWO_PI / max(seg.max_abs_delta(), 1.0 / seg.duration)
            steps = max(64, int(math.ceil(rk4_points_per_period * seg.duration / per)))
            vals, y = _rk4_segment(fun, y, seg.duration, steps, u)
            if u.size:
                ts.append(u + bounds[i])
                gs.append(vals[:, 0] + 1j * vals[:, 1])
                es.append(vals[:, 2])
                hs.append(vals[:, 3])

    t_all = np.concatenate(ts)
    gamma = np.concatenate(gs)
    eta = np.concatenate(es)
    theta = np.concatenate(hs)
    # merge duplicated join points from per-segment grids
    keep = np.concatenate(([True], np.diff(t_all) > 0))
    if s == 0.0:
        gamma = np.zeros_like(gamma)
        theta = np.zeros_like(theta)
    return BranchTrajectory(t=t_all[keep], gamma=gamma[keep], eta=eta[keep],
                            theta=theta[keep], branch_eigenvalue=s)


def gate_angle_exact(schedule: PulseSchedule, **solver_kwargs) -> float:
    """Gate angle theta_g: geometric phase of the |s|=2 branch at t_g."""
    return propagate_displacement(schedule, branch_eigenvalue=2.0, **solver_kwargs).theta_end


@dataclass(frozen=True)
class AdiabaticGateAngle:
    """Gate angle estimate int (Omega^2 + alpha_dot^2)/delta dt and its leading term."""

    total: float
    leading: float


def gate_angle_adiabatic(schedule: PulseSchedule, samples_per_segment: int = 20001,
                         adiabaticity_warn: float = 0.3) -> AdiabaticGateAngle:
    """Adiabatic-following estimate of the gate angle for the |s|=2 branch.

    Valid for smooth schedules; a warning is emitted when the peak
    adiabaticity metric exceeds ``adiabaticity_warn`` since the estimate
    is then untrusted.  Both the full integrand (Omega^2 + alpha_dot^2)/
    delta and the leading Omega^2/delta term are reported, with the sign
    of delta preserved.
    """
    from .schedule import adiabaticity_profile

    total = 0.0
    leading = 0.0
    for seg in schedule.segments:
        if seg.is_constant:
            contrib = seg.const_omega ** 2 / seg.const_delta * seg.duration
            total += contrib
            leading += contrib
            continue
        u = np.linspace(0.0, seg.duration, samples_per_segment)
        om = np.atleast_1d(seg.omega(u)).astype(float)
        de = np.atleast_1d(seg.delta(u)).astype(float)
        alpha = -om / de
        alphadot = np.gradient(alpha, u)
        leading += float(simpson(om ** 2 / de, x=u))
        total += float(simpson((om ** 2 + alphadot ** 2) / de, x=u))
    peak = adiabaticity_profile(schedule).peak
    if peak > adiabaticity_warn:
        warnings.warn(f"adiabaticity metric peak {peak:.3g} exceeds {adiabaticity_warn}; "
                      "adiabatic gate-angle estimate untrusted", stacklevel=2)
    return AdiabaticGateAngle(total=total, leading=leading)


def calibrate_omega(p: SmoothGateParams, target_angle: float = math.pi / 2,
                    use: str = "adiabatic", merge_ramps: bool = False,
                    **solver_kwargs) -> SmoothGateParams:
    """Solve for Omega_g so the smooth gate accumulates |theta_g| = target.

    Both the exact and adiabatic gate angles scale as Omega_g^2 for a
    fixed schedule shape (eta does not involve Omega), so a single
    unit-amplitude evaluation suffices.
    """
    if target_angle <= 0:
        raise ParameterError("target_angle must be positive")
    probe = replace(p, omega_g=1.0)
    sched = build_smooth_schedule(probe, merge_ramps=merge_ramps)
    if use == "adiabatic":
        coeff = abs(gate_angle_adiabatic(sched).total)
    elif use == "exact":
        coeff = abs(gate_angle_exact(sched, **solver_kwargs))
    else:
        raise ParameterError("use must be 'adiabatic' or 'exact'")
    if coeff <= 0:
        raise ConvergenceError("gate angle coefficient vanished")
    return replace(p, omega_g=math.sqrt(target_angle / coeff))


def calibrate_delta_min(p: SmoothGateParams, target_angle: float = math.pi / 2,
                        bracket: tuple[float, float] | None = None,
                        use: str = "exact", merge_ramps: bool = False,
                        **solver_kwargs) -> SmoothGateParams:
    """Solve for |delta_min| at fixed Omega_g so that |theta_g| = target.

    The angle grows monotonically as |delta_min| shrinks; brentq brackets
    on |delta_min| (default: 2*pi*1 kHz up to 0.9*|delta_max|).
    """
    if bracket is None:
        bracket = (TWO_PI * 1e3, 0.9 * abs(p.delta_max))
    lo, hi = bracket
    if not 0 < lo < hi < abs(p.delta_max):
        raise ParameterError("bracket must satisfy 0 < lo < hi < |delta_max|")

    def angle_of(absdm: float) -> float:
        q = replace(p, delta_min=p.sign * absdm)
        sched = build_smooth_schedule(q, merge_ramps=merge_ramps)
        if use == "adiabatic":
            # trial points far from the root routinely violate the
            # adiabaticity threshold; only the solution is judged below
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return abs(gate_angle_adiabatic(sched).total)
        return abs(gate_angle_exact(sched, **solver_kwargs))

    f = lambda x: angle_of(x) - target_angle
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ConvergenceError(
            f"target angle {target_angle:.4g} not bracketed: theta({lo:.4g})-target={flo:.3g}, "
            f"theta({hi:.4g})-target={fhi:.3g}")
    root = brentq(f, lo, hi, rtol=1e-12)
    solved = replace(p, delta_min=p.sign * root)
    if use == "adiabatic":
        gate_angle_adiabatic(build_smooth_schedule(solved, merge_ramps=merge_ramps))
    return solved


# ---------------------------------------------------------------------------
# spin algebra of the two-qubit collective operator

_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


def collective_spin_operator(phi: float = 0.0) -> np.ndarray:
    """S_phi = sigma_phi(1) + sigma_phi(2) on the basis (uu, ud, du, dd)."""
    sp = math.cos(phi) * _SIGMA_X + math.sin(phi) * _SIGMA_Y
    return np.kron(sp, _ID2) + np.kron(_ID2, sp)


@dataclass(frozen=True)
class SpinStateVariances:
    """Moments of S_alpha in the initial spin state entering the error formulas."""

    mean_s: float
    mean_s2: float
    var_s: float
    var_s2: float

    def __post_init__(self):
        if self.var_s < -1e-12 or self.var_s2 < -1e-12:
            raise ParameterError("variances must be non-negative")


def spin_variances(psi0: Sequence[complex], phi: float = 0.0) -> SpinStateVariances:
    """Variances of S_phi and S_phi^2 in a normalized two-qubit state."""
    psi = np.asarray(psi0, dtype=complex).reshape(4)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-9:
        raise ParameterError(f"spin state norm {norm} is not 1")
    s_op = collective_spin_operator(phi)
    s1 = psi.conj() @ (s_op @ psi)
    s2_vec = s_op @ (s_op @ psi)
    s2 = psi.conj() @ s2_vec
    s4 = s2_vec.conj() @ s2_vec
    mean_s, mean_s2, mean_s4 = float(s1.real), float(s2.real), float(s4.real)
    return SpinStateVariances(mean_s=mean_s, mean_s2=mean_s2,
                              var_s=max(mean_s2 - mean_s ** 2, 0.0),
                              var_s2=max(mean_s4 - mean_s2 ** 2, 0.0))


# ---------------------------------------------------------------------------
# perturbative infidelity from a mode-frequency error epsilon(t)


@dataclass(frozen=True)
class PerturbativeInfidelity:
    """First-order error response to a mode-frequency trajectory epsilon(t).

    ``residual_displacement`` is alpha_t = int eps*gamma dt (per unit
    branch eigenvalue), ``gate_angle_error`` is delta_theta = 2*int
    eps*|gamma|^2 dt; the total infidelity combines them with the spin
    moments of the initial state.
    """

    residual_displacement: complex
    gate_angle_error: float
    nbar: float
    displacement: float
    angle: float
    total: float


def perturbative_infidelity(traj: BranchTrajectory,
                            eps: float | np.ndarray | Callable[[np.ndarray], np.ndarray],
                            variances: SpinStateVariances,
                            nbar: float = 0.0) -> PerturbativeInfidelity:
    """Evaluate the leading-order infidelity integrals along a trajectory.

    ``eps`` may be a constant, an array on the trajectory grid, or a
    callable of time.  The trajectory is normalized to unit branch
    eigenvalue internally; a null branch returns zero error.
    """
    if nbar < 0:
        raise ParameterError("nbar must be >= 0")
    s = traj.branch_eigenvalue
    if s == 0.0:
        return PerturbativeInfidelity(0.0 + 0.0j, 0.0, nbar, 0.0, 0.0, 0.0)
    if callable(eps):
        e = np.asarray(eps(traj.t), dtype=float)
    else:
        e = np.asarray(eps, dtype=float)
        if e.ndim == 0:
            e = np.full_like(traj.t, float(e))
    if e.shape != traj.t.shape:
        raise GridError("eps samples must match the trajectory grid")
    gamma1 = traj.gamma / s
    alpha_t = complex(np.trapezoid(e * gamma1, traj.t))
    dtheta = 2.0 * float(np.trapezoid(e * np.abs(gamma1) ** 2, traj.t))
    disp = (2.0 * nbar + 1.0) * abs(alpha_t) ** 2 * variances.var_s
    ang = dtheta ** 2 / 4.0 * variances.var_s2
    return PerturbativeInfidelity(residual_displacement=alpha_t, gate_angle_error=dtheta,
                                  nbar=nbar, displacement=disp, angle=ang, total=disp + ang)
