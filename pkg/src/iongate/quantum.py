"""Full quantum propagation of two qubits coupled to one motional mode.

The drive Hamiltonian is block diagonal in the eigenbasis of the collective
spin operator S_alpha = sigma_alpha,1 + sigma_alpha,2, so a pulse schedule
acts as four independent driven oscillators (branch eigenvalues +2, 0, 0,
-2).  This module propagates the truncated Fock representation exactly that
way and is the ground-truth check for the closed-form trajectory results in
``semiclassical``.

States are stored spin-major in the measurement (z) basis with spin order
(uu, ud, du, dd): amplitude index = spin_index * (n_max + 1) + n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

from .errors import ConvergenceError, GridError, ParameterError, TruncationError
from .schedule import PulseSchedule, SmoothGateParams, build_smooth_schedule
from .semiclassical import propagate_displacement

SPIN_LABELS = ("uu", "ud", "du", "dd")
BRANCH_EIGENVALUES = (2.0, 0.0, 0.0, -2.0)
STEPS_PER_PERIOD = 50
TRUNCATION_GUARD = 1e-8
TAIL_MASS_LIMIT = 1e-6
NORM_TOL = 1e-9


@dataclass(frozen=True)
class FockConfig:
    """Motional-mode truncation settings."""

    n_max: int
    convergence_margin: float = 0.01

    def __post_init__(self):
        if self.n_max < 1:
            raise ParameterError("n_max must be >= 1")
        if self.convergence_margin <= 0:
            raise ParameterError("convergence_margin must be > 0")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @classmethod
    def auto(cls, nbar: float = 0.0, max_displacement: float = 0.0,
             convergence_margin: float = 0.01) -> "FockConfig":
        """Truncation covering the thermal tail plus displacement excursions.

        The thermal part must hold every initial Fock state that carries
        non-negligible weight (tail mass below ``TAIL_MASS_LIMIT``), which
        for hot ensembles is stricter than the mean-plus-spread heuristic.
        """
        if nbar < 0:
            raise ParameterError("nbar must be >= 0")
        spread = nbar + 10.0 * math.sqrt(nbar + 1.0)
        tail = 0.0
        if nbar > 0:
            r = nbar / (nbar + 1.0)
            tail = math.log(TAIL_MASS_LIMIT) / math.log(r) - 1.0
        base = max(spread, tail)
        # a displacement by gamma on top of Fock state n spreads the number
        # distribution by O(|gamma| sqrt(n)), so the margin must grow with
        # the thermal base, not just the displacement
        margin = (3.0 * math.sqrt(base + 1.0) + 4.0) * max_displacement + 8.0
        return cls(n_max=max(8, math.ceil(base + margin)),
                   convergence_margin=convergence_margin)


@dataclass(frozen=True)
class CompositeState:
    """Two qubits plus truncated mode, spin-major in the z basis."""

    amplitudes: np.ndarray
    n_max: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (4 * (self.n_max + 1),):
            raise ParameterError("amplitude vector must have length 4*(n_max+1)")
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise ParameterError("state norm must be 1 within 1e-9")

    @classmethod
    def from_spin_fock(cls, spin_amplitudes, n: int, n_max: int) -> "CompositeState":
        spin = np.asarray(spin_amplitudes, dtype=complex)
        if spin.shape != (4,):
            raise ParameterError("need 4 spin amplitudes (uu, ud, du, dd)")
        if not 0 <= n <= n_max:
            raise ParameterError("Fock index outside truncation")
        amps = np.zeros((4, n_max + 1), dtype=complex)
        amps[:, n] = spin / np.linalg.norm(spin)
        return cls(amplitudes=amps.ravel(), n_max=n_max)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def block(self) -> np.ndarray:
        """View as a (4, n_max+1) array, spin index first."""
        return self.amplitudes.reshape(4, self.n_max + 1)

    def spin_populations(self) -> dict[str, float]:
        probs = np.sum(np.abs(self.block()) ** 2, axis=1)
        return dict(zip(SPIN_LABELS, probs.tolist()))

    def fock_populations(self) -> np.ndarray:
        return np.sum(np.abs(self.block()) ** 2, axis=0)

    def reduced_spin_density(self) -> np.ndarray:
        b = self.block()
        return b @ b.conj().T


@dataclass(frozen=True)
class ThermalEnsemble:
    """Truncated, renormalized thermal distribution over initial Fock states."""

    nbar: float
    weights: np.ndarray
    tail_mass: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if self.nbar < 0:
            raise ParameterError("nbar must be >= 0")
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise ParameterError("weights must be a non-negative 1-D array")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must sum to 1")
        if self.tail_mass >= TAIL_MASS_LIMIT:
            raise ParameterError("thermal tail mass exceeds 1e-6 at this truncation")

    @classmethod
    def build(cls, nbar: float, tail_limit: float = TAIL_MASS_LIMIT) -> "ThermalEnsemble":
        if nbar < 0:
            raise ParameterError("nbar must be >= 0")
        if nbar == 0:
            return cls(nbar=0.0, weights=np.array([1.0]), tail_mass=0.0)
        r = nbar / (nbar + 1.0)
        # smallest N with residual mass r^(N+1) below the limit
        n_top = math.ceil(math.log(tail_limit) / math.log(r)) - 1
        while r ** (n_top + 1) >= tail_limit:
            n_top += 1
        n = np.arange(n_top + 1)
        w = r ** n / (nbar + 1.0)
        tail = r ** (n_top + 1)
        return cls(nbar=float(nbar), weights=w / w.sum(), tail_mass=float(tail))

    @property
    def n_states(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class GateOutcome:
    """Spin-resolved result of one gate (or thermal average of gates)."""

    p_uu: float
    p_dd: float
    p_odd: float
    fidelity: float
    spin_purity: float
    gate_angle: float
    nbar: float = 0.0

    def __post_init__(self):
        total = self.p_uu + self.p_dd + self.p_odd
        if abs(total - 1.0) > 1e-9:
            raise ParameterError("spin populations must sum to 1 within 1e-9")
        if not -1e-9 <= self.fidelity <= 1.0 + 1e-9:
            raise ParameterError("fidelity must lie in [0, 1]")

    def to_table(self) -> dict[str, float]:
        return {
            "p_uu": self.p_uu,
            "p_dd": self.p_dd,
            "p_odd": self.p_odd,
            "fidelity": self.fidelity,
            "spin_purity": self.spin_purity,
            "gate_angle_rad": self.gate_angle,
            "nbar": self.nbar,
        }


def gate_eigenbasis(basis_phase: float = 0.0) -> np.ndarray:
    """Rows are the S_alpha eigenvectors (++, +-, -+, --) in the z basis.

    The single-qubit operator is sigma_phi = cos(phi) sigma_x + sin(phi)
    sigma_y; its +1/-1 eigenvectors are (|u> +- e^{i phi}|d>)/sqrt(2).
    """
    ph = np.exp(-1j * basis_phase)
    u = np.array([[1.0, ph], [1.0, -ph]], dtype=complex) / np.sqrt(2.0)
    return np.kron(u, u)


def _branch_hamiltonian(delta: float, coupling: float, dim: int):
    diag = delta * np.arange(dim, dtype=float)
    off = coupling * np.sqrt(np.arange(1, dim, dtype=float))
    return diag, off


def _step_unitary(delta: float, coupling: float, dt: float, dim: int) -> np.ndarray:
    diag, off = _branch_hamiltonian(delta, coupling, dim)
    if not np.any(off):
        return np.diag(np.exp(-1j * diag * dt))
    vals, vecs = eigh_tridiagonal(diag, off)
    return (vecs * np.exp(-1j * vals * dt)) @ vecs.T


def _segment_steps(seg, steps_per_period: int):
    """Midpoint sample times and durations covering one segment.

    Constant segments take a single exact exponential.  Ramped segments are
    cut at equal increments of the accumulated fast-phase budget
    int max(|delta|, |Omega|) dt, which keeps every step below
    2 pi / steps_per_period of local oscillation.
    """
    if seg.is_constant:
        return np.array([seg.duration / 2.0]), np.array([seg.duration])
    t = np.linspace(0.0, seg.duration, 2049)
    rate = np.maximum(np.abs(seg.delta(t)), np.abs(seg.omega(t)))
    budget = np.concatenate(([0.0], np.cumsum((rate[1:] + rate[:-1]) / 2.0 * np.diff(t))))
    if budget[-1] == 0.0:
        return np.array([seg.duration / 2.0]), np.array([seg.duration])
    n_steps = max(2, int(np.ceil(budget[-1] * steps_per_period / (2.0 * np.pi))))
    edges = np.interp(np.linspace(0.0, budget[-1], n_steps + 1), budget, t)
    return (edges[1:] + edges[:-1]) / 2.0, np.diff(edges)


def _carrier_net_phase(schedule: PulseSchedule) -> float:
    """Time integral of the signed carrier Rabi frequency Omega_c(t).

    The envelope is piecewise linear and the drive sign is piecewise
    constant, so the trapezoid rule between envelope breakpoints is exact.
    """
    car = schedule.carrier
    if car is None:
        return 0.0
    points = {car.start, car.start + car.ramp, car.stop - car.ramp, car.stop}
    if car.invert_at is not None:
        points.add(car.invert_at)
    edges = sorted(points)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        amps = car.amplitude(np.array([a, b]))
        sign = car.drive_sign(np.array([(a + b) / 2.0]))[0]
        total += sign * (amps[0] + amps[1]) / 2.0 * (b - a)
    return float(total)


def _carrier_aligned(schedule: PulseSchedule, basis_phase: float) -> bool:
    car = schedule.carrier
    if car is None:
        return True
    return math.isclose(math.cos(car.phase - basis_phase) ** 2, 1.0, abs_tol=1e-12)


@dataclass(frozen=True)
class BranchPropagators:
    """Gate propagator split into S_alpha eigenbranches.

    ``blocks[k]`` evolves the oscillator conditioned on eigenbranch k in
    the (++, +-, -+, --) ordering; any aligned carrier contributes only the
    per-branch c-number phase already folded in.
    """

    blocks: np.ndarray
    basis_phase: float

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    def overlap_kernel(self) -> np.ndarray:
        """kernel[i, j, n] = <n| U_i U_j^dag |n>, the per-Fock spin kernel."""
        dim = self.dim
        out = np.empty((4, 4, dim), dtype=complex)
        for i in range(4):
            for j in range(4):
                out[i, j] = np.einsum("mn,mn->n", self.blocks[i],
                                      self.blocks[j].conj())
        return out


def gate_propagator(schedule: PulseSchedule, fock: FockConfig,
                    basis_phase: float = 0.0,
                    steps_per_period: int = STEPS_PER_PERIOD) -> BranchPropagators:
    """Exact branch-resolved propagator matrices for one schedule.

    Constant segments are exponentiated in one shot; ramps use midpoint
    (second-order Magnus) steps.  The -2 branch reuses the +2 branch via
    the parity similarity P U P with P = diag((-1)^n).
    """
    if steps_per_period < 8:
        raise ParameterError("steps_per_period must be >= 8")
    if not _carrier_aligned(schedule, basis_phase):
        raise ParameterError("carrier drive is not aligned with the gate basis; "
                             "use propagate() which handles the split-step case")
    dim = fock.dim
    u_plus = np.eye(dim, dtype=complex)
    eta = 0.0
    for seg in schedule.segments:
        mids, dts = _segment_steps(seg, steps_per_period)
        deltas = seg.delta(mids) if not seg.is_constant else np.array([seg.const_delta])
        omegas = seg.omega(mids) if not seg.is_constant else np.array([seg.const_omega])
        for k in range(mids.size):
            coupling = seg.sign * omegas[k]  # branch +2: (s/2)*W*Omega = W*Omega
            u_plus = _step_unitary(deltas[k], coupling, dts[k], dim) @ u_plus
        if seg.is_constant:
            eta += seg.const_delta * seg.duration
        else:
            tg = np.linspace(0.0, seg.duration, 4097)
            eta += float(np.trapezoid(seg.delta(tg), tg))
    parity = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    u_minus = parity[:, None] * u_plus * parity[None, :]
    u_null = np.diag(np.exp(-1j * eta * np.arange(dim)))
    # aligned carrier: sigma_phi,1 + sigma_phi,2 is diagonal in the gate
    # eigenbasis with eigenvalues (2, 0, 0, -2) (times -1 if anti-aligned),
    # so it only multiplies each branch by exp(-i s/2 * integral Omega_c)
    car_int = _carrier_net_phase(schedule)
    if car_int != 0.0:
        align = math.cos(schedule.carrier.phase - basis_phase)
        u_plus = u_plus * np.exp(-1j * align * car_int)
        u_minus = u_minus * np.exp(+1j * align * car_int)
    blocks = np.stack([u_plus, u_null, u_null.copy(), u_minus])
    return BranchPropagators(blocks=blocks, basis_phase=basis_phase)


def propagate(schedule: PulseSchedule, psi0: CompositeState,
              fock: FockConfig | None = None, basis_phase: float = 0.0,
              steps_per_period: int = STEPS_PER_PERIOD) -> CompositeState:
    """Evolve a composite state through a schedule (carrier optional).

    With no carrier, or a carrier aligned with the gate basis, the branch
    propagators are applied directly.  A misaligned carrier breaks the
    commutation with S_alpha and is handled by Strang splitting between the
    branch step and the spin-only carrier rotation.
    """
    if fock is None:
        fock = FockConfig(n_max=psi0.n_max)
    if fock.n_max != psi0.n_max:
        raise ParameterError("FockConfig truncation differs from the state")
    basis = gate_eigenbasis(basis_phase)
    psi = basis @ psi0.block()
    if _carrier_aligned(schedule, basis_phase):
        props = gate_propagator(schedule, fock, basis_phase, steps_per_period)
        out = np.stack([props.blocks[k] @ psi[k] for k in range(4)])
    else:
        out = _propagate_split_step(schedule, psi, fock, basis_phase, steps_per_period)
    amps = (basis.conj().T @ out).ravel()
    if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
        raise ConvergenceError("norm drift exceeded 1e-9 during propagation")
    top = float(np.sum(np.abs(out[:, -1]) ** 2))
    if top > TRUNCATION_GUARD:
        raise TruncationError("population at the Fock cutoff exceeds 1e-8; "
                              "increase n_max")
    return CompositeState(amplitudes=amps, n_max=fock.n_max)


def _propagate_split_step(schedule: PulseSchedule, psi_eig: np.ndarray,
                          fock: FockConfig, basis_phase: float,
                          steps_per_period: int) -> np.ndarray:
    """Strang split between the branch step and the spin-only carrier.

    Used only when the carrier basis is misaligned with the gate basis and
    the Hamiltonian terms stop commuting.  Every segment is stepped fine
    enough to resolve the carrier Rabi rate as well as the gate drive.
    """
    car = schedule.carrier
    basis = gate_eigenbasis(basis_phase)
    sigma = np.array([[0.0, np.exp(-1j * car.phase)],
                      [np.exp(1j * car.phase), 0.0]], dtype=complex)
    carrier_op = basis @ (np.kron(sigma, np.eye(2)) + np.kron(np.eye(2), sigma)) @ basis.conj().T
    dim = fock.dim
    modes = np.arange(dim)
    parity = np.where(modes % 2 == 0, 1.0, -1.0)
    psi = psi_eig.copy()
    offset = 0.0
    for seg in schedule.segments:
        probe = np.linspace(0.0, seg.duration, 257)
        r_max = max(float(np.max(np.abs(seg.delta(probe)))),
                    float(np.max(np.abs(seg.omega(probe)))), car.rabi)
        n_steps = max(2, int(np.ceil(seg.duration * r_max * steps_per_period / (2.0 * np.pi))))
        edges = np.linspace(0.0, seg.duration, n_steps + 1)
        mids = (edges[1:] + edges[:-1]) / 2.0
        dt = seg.duration / n_steps
        deltas = seg.delta(mids)
        omegas = seg.omega(mids)
        for k in range(n_steps):
            t_mid = offset + mids[k]
            amp = float(car.amplitude(np.array([t_mid]))[0] *
                        car.drive_sign(np.array([t_mid]))[0])
            half = expm(-0.25j * amp * carrier_op * dt)
            psi = half @ psi
            u2 = _step_unitary(float(deltas[k]), seg.sign * float(omegas[k]), dt, dim)
            free = np.exp(-1j * float(deltas[k]) * dt * modes)
            psi[0] = u2 @ psi[0]
            psi[1] = free * psi[1]
            psi[2] = free * psi[2]
            psi[3] = parity * (u2 @ (parity * psi[3]))
            psi = half @ psi
        offset += seg.duration
    return psi


def branch_factorized_propagate(schedule: PulseSchedule, branch_eigenvalue: float,
                                n0: int, fock: FockConfig,
                                rtol: float = 1e-11) -> tuple[np.ndarray, float]:
    """Oscillator evolution on one S_alpha branch from the trajectory integrals.

    Returns the final oscillator amplitudes for initial state |n0> together
    with the accumulated branch phase.  The propagator factorizes as
    exp(-i eta n) D(gamma_s) exp(i Phi_s), which is an independent check on
    the stepped exponentials in :func:`gate_propagator`.
    """
    if schedule.carrier is not None:
        raise ParameterError("branch factorization requires a carrier-free schedule")
    if not 0 <= n0 <= fock.n_max:
        raise ParameterError("Fock index outside truncation")
    dim = fock.dim
    if branch_eigenvalue == 0.0:
        eta = _total_eta(schedule)
        out = np.zeros(dim, dtype=complex)
        out[n0] = np.exp(-1j * eta * n0)
        return out, 0.0
    traj = propagate_displacement(schedule, branch_eigenvalue=branch_eigenvalue,
                                  rtol=rtol)
    gamma, phase, eta = traj.gamma_end, traj.theta_end, traj.eta_end
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    disp = expm(gamma * a.conj().T - np.conj(gamma) * a)
    vec = np.exp(1j * phase) * disp[:, n0]
    vec *= np.exp(-1j * eta * np.arange(dim))
    return vec, phase


def branch_factorized_blocks(schedule: PulseSchedule, fock: FockConfig,
                             rtol: float = 1e-11) -> BranchPropagators:
    """All four branch propagators assembled from the factorized form."""
    if schedule.carrier is not None:
        raise ParameterError("branch factorization requires a carrier-free schedule")
    dim = fock.dim
    eta = _total_eta(schedule)
    null = np.diag(np.exp(-1j * eta * np.arange(dim)))
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    blocks = np.empty((4, dim, dim), dtype=complex)
    blocks[1] = null
    blocks[2] = null
    for idx, s in ((0, 2.0), (3, -2.0)):
        traj = propagate_displacement(schedule, branch_eigenvalue=s, rtol=rtol)
        disp = expm(traj.gamma_end * a.conj().T - np.conj(traj.gamma_end) * a)
        blocks[idx] = np.exp(1j * traj.theta_end) * (null @ disp)
    return BranchPropagators(blocks=blocks, basis_phase=0.0)


def _total_eta(schedule: PulseSchedule) -> float:
    eta = 0.0
    for seg in schedule.segments:
        if seg.is_constant:
            eta += seg.const_delta * seg.duration
        else:
            t = np.linspace(0.0, seg.duration, 4097)
            eta += float(np.trapezoid(seg.delta(t), t))
    return eta


def _target_spin(psi0_spin: np.ndarray, target_angle: float,
                 basis_phase: float) -> np.ndarray:
    basis = gate_eigenbasis(basis_phase)
    phases = np.exp(1j * target_angle * (np.asarray(BRANCH_EIGENVALUES) / 2.0) ** 2)
    return basis.conj().T @ (phases * (basis @ psi0_spin))


def _outcome_from_density(rho_z: np.ndarray, target: np.ndarray,
                          basis_phase: float, nbar: float) -> GateOutcome:
    pops = np.real(np.diag(rho_z))
    fid = float(np.real(target.conj() @ rho_z @ target))
    purity = float(np.real(np.trace(rho_z @ rho_z)))
    basis = gate_eigenbasis(basis_phase)
    rho_e = basis @ rho_z @ basis.conj().T
    coherence = rho_e[0, 1] + rho_e[0, 2] + rho_e[3, 1] + rho_e[3, 2]
    angle = float(np.angle(coherence)) if abs(coherence) > 1e-12 else float("nan")
    return GateOutcome(p_uu=float(pops[0]), p_dd=float(pops[3]),
                       p_odd=float(pops[1] + pops[2]),
                       fidelity=min(max(fid, 0.0), 1.0),
                       spin_purity=purity, gate_angle=angle, nbar=nbar)


def outcome_from_state(state: CompositeState, psi0_spin,
                       target_angle: float | None = None,
                       basis_phase: float = 0.0,
                       nbar: float = 0.0) -> GateOutcome:
    """Populations, fidelity and angle of a propagated composite state.

    The fidelity is the spin overlap with the ideal gate applied to
    ``psi0_spin``, traced over the motion.  ``target_angle`` defaults to
    the pi/2 entangling phase with the sign left to the caller via its
    explicit value.
    """
    spin = np.asarray(psi0_spin, dtype=complex)
    spin = spin / np.linalg.norm(spin)
    if target_angle is None:
        target_angle = -np.pi / 2.0
    target = _target_spin(spin, target_angle, basis_phase)
    return _outcome_from_density(state.reduced_spin_density(), target,
                                 basis_phase, nbar)


def thermal_average(schedule: PulseSchedule, ensemble: ThermalEnsemble,
                    psi0_spin=(1.0, 0.0, 0.0, 0.0),
                    fock: FockConfig | None = None,
                    target_angle: float | None = None,
                    basis_phase: float = 0.0,
                    steps_per_period: int = STEPS_PER_PERIOD,
                    props: BranchPropagators | None = None) -> GateOutcome:
    """Thermally averaged gate outcome over initial Fock states.

    The propagator is built once; the weighted spin density matrix follows
    from the branch-overlap kernel, so the cost is independent of how many
    Fock states carry weight.
    """
    spin = np.asarray(psi0_spin, dtype=complex)
    spin = spin / np.linalg.norm(spin)
    if fock is None:
        fock = FockConfig.auto(nbar=ensemble.nbar,
                               max_displacement=_max_branch_displacement(schedule))
    if ensemble.n_states > fock.dim:
        raise TruncationError("ensemble needs more Fock states than the truncation")
    if props is None:
        props = gate_propagator(schedule, fock, basis_phase, steps_per_period)
    basis = gate_eigenbasis(basis_phase)
    spin_eig = basis @ spin
    if target_angle is None:
        target_angle = -np.pi / 2.0
    target = _target_spin(spin, target_angle, basis_phase)

    kernel = props.overlap_kernel()
    w = np.zeros(fock.dim)
    w[:ensemble.n_states] = ensemble.weights
    rho_eig = (spin_eig[:, None] * spin_eig.conj()[None, :]) * (kernel @ w)
    # guard: thermally weighted population at the cutoff row
    top = sum(float(np.abs(spin_eig[k]) ** 2 *
                    (np.abs(props.blocks[k][-1, :]) ** 2 @ w)) for k in range(4))
    if top > TRUNCATION_GUARD:
        raise TruncationError("thermal population at the Fock cutoff exceeds 1e-8")
    rho_z = basis.conj().T @ rho_eig @ basis
    return _outcome_from_density(rho_z, target, basis_phase, ensemble.nbar)


def _max_branch_displacement(schedule: PulseSchedule) -> float:
    traj = propagate_displacement(schedule, branch_eigenvalue=2.0, rtol=1e-8)
    return float(np.max(np.abs(traj.gamma)))


@dataclass(frozen=True)
class CalibrationScan:
    """Populations against the minimum gate detuning at fixed drive."""

    delta_min: np.ndarray
    p_uu: np.ndarray
    p_dd: np.ndarray
    p_odd: np.ndarray
    fidelity: np.ndarray
    crossing: float
    nbar: float

    def to_table(self) -> dict[str, np.ndarray]:
        return {
            "delta_min_rad_s": self.delta_min,
            "p_uu": self.p_uu,
            "p_dd": self.p_dd,
            "p_odd": self.p_odd,
            "fidelity": self.fidelity,
        }


def calibration_scan(base: SmoothGateParams, delta_min_grid,
                     ensemble: ThermalEnsemble,
                     psi0_spin=(1.0, 0.0, 0.0, 0.0),
                     fock: FockConfig | None = None,
                     target_angle: float | None = None,
                     merge_ramps: bool = False,
                     steps_per_period: int = STEPS_PER_PERIOD) -> CalibrationScan:
    """Sweep delta_min at fixed Omega_g and locate the equal-population point.

    The balanced point P(uu) = P(dd) marks the half-pi entangling angle; it
    is found by linear interpolation of P(uu) - P(dd) between grid points.
    """
    grid = np.asarray(delta_min_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridError("need at least two delta_min values")
    if np.any(np.sign(grid) != np.sign(base.delta_max)):
        raise ParameterError("delta_min grid must share the sign of delta_max")
    outcomes = []
    if fock is None:
        deepest = grid[np.argmin(np.abs(grid))]
        probe = build_smooth_schedule(base.with_delta_min(deepest), merge_ramps=merge_ramps)
        fock = FockConfig.auto(nbar=ensemble.nbar,
                               max_displacement=_max_branch_displacement(probe))
    for dm in grid:
        sched = build_smooth_schedule(base.with_delta_min(dm), merge_ramps=merge_ramps)
        outcomes.append(thermal_average(sched, ensemble, psi0_spin, fock,
                                        target_angle, steps_per_period=steps_per_period))
    p_uu = np.array([o.p_uu for o in outcomes])
    p_dd = np.array([o.p_dd for o in outcomes])
    diff = p_uu - p_dd
    signs = np.sign(diff)
    flips = np.nonzero(signs[1:] * signs[:-1] < 0)[0]
    if flips.size == 0:
        raise ConvergenceError("delta_min grid does not bracket the balanced point")
    k = flips[0]
    crossing = grid[k] - diff[k] * (grid[k + 1] - grid[k]) / (diff[k + 1] - diff[k])
    return CalibrationScan(
        delta_min=grid,
        p_uu=p_uu,
        p_dd=p_dd,
        p_odd=np.array([o.p_odd for o in outcomes]),
        fidelity=np.array([o.fidelity for o in outcomes]),
        crossing=float(crossing),
        nbar=ensemble.nbar,
    )


@dataclass(frozen=True)
class OffsetScan:
    """Gate outcomes under static detuning offsets."""

    offsets: np.ndarray
    p_uu: np.ndarray
    p_dd: np.ndarray
    p_odd: np.ndarray
    fidelity: np.ndarray
    nbar: float

    def to_table(self) -> dict[str, np.ndarray]:
        return {
            "offset_rad_s": self.offsets,
            "p_uu": self.p_uu,
            "p_dd": self.p_dd,
            "p_odd": self.p_odd,
            "fidelity": self.fidelity,
        }


def offset_scan(schedule: PulseSchedule, offsets, ensemble: ThermalEnsemble,
                psi0_spin=(1.0, 0.0, 0.0, 0.0),
                fock: FockConfig | None = None,
                target_angle: float | None = None,
                steps_per_period: int = STEPS_PER_PERIOD) -> OffsetScan:
    """Outcomes of one schedule under constant mode-frequency offsets."""
    offs = np.asarray(offsets, dtype=float)
    if offs.ndim != 1 or offs.size == 0:
        raise GridError("need a 1-D array of offsets")
    if fock is None:
        fock = FockConfig.auto(nbar=ensemble.nbar,
                               max_displacement=_max_branch_displacement(schedule) + 0.5)
    outcomes = []
    for off in offs:
        shifted = schedule.with_detuning_offset(float(off))
        outcomes.append(thermal_average(shifted, ensemble, psi0_spin, fock,
                                        target_angle, steps_per_period=steps_per_period))
    return OffsetScan(
        offsets=offs,
        p_uu=np.array([o.p_uu for o in outcomes]),
        p_dd=np.array([o.p_dd for o in outcomes]),
        p_odd=np.array([o.p_odd for o in outcomes]),
        fidelity=np.array([o.fidelity for o in outcomes]),
        nbar=ensemble.nbar,
    )
