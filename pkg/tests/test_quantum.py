"""Tests for full quantum propagation of spin-dependent-force gates."""

import math

import numpy as np
import pytest

from iongate.errors import ConvergenceError, GridError, ParameterError, TruncationError
from iongate.quantum import (
    BRANCH_EIGENVALUES,
    CompositeState,
    FockConfig,
    GateOutcome,
    ThermalEnsemble,
    branch_factorized_blocks,
    branch_factorized_propagate,
    calibration_scan,
    gate_eigenbasis,
    gate_propagator,
    offset_scan,
    outcome_from_state,
    propagate,
    thermal_average,
)
from iongate.schedule import (
    CarrierDrive,
    PulseSchedule,
    Segment,
    SmoothGateParams,
    WalshGateParams,
    build_smooth_schedule,
    build_walsh_schedule,
)
TWO_PI = 2.0 * math.pi


def flat_segment(duration, omega, delta, sign=1.0, label="seg"):
    return Segment(
        duration,
        lambda t, v=omega: np.full_like(np.asarray(t, dtype=float), v),
        lambda t, v=delta: np.full_like(np.asarray(t, dtype=float), v),
        sign=sign,
        const_omega=omega,
        const_delta=delta,
        label=label,
    )


def sign_flip_schedule(rng, n_segments=4):
    # Drive sign is the only quantity allowed to jump across segment joins,
    # so random piecewise-constant schedules randomize signs and durations.
    omega = TWO_PI * rng.uniform(1e3, 6e3)
    delta = TWO_PI * rng.uniform(8e3, 40e3) * rng.choice([-1.0, 1.0])
    segs = [
        flat_segment(rng.uniform(5e-6, 60e-6), omega, delta,
                     sign=float(rng.choice([-1.0, 1.0])), label=f"s{k}")
        for k in range(n_segments)
    ]
    return PulseSchedule(segs, label="random")


def reassemble_from_branches(schedule, spin, n0, fock, basis_phase=0.0, rtol=1e-11):
    # rows of gate_eigenbasis are eigen-bras: components = basis @ psi
    basis = gate_eigenbasis(basis_phase)
    coeff = basis @ np.asarray(spin, dtype=complex)
    out = np.zeros((4, fock.dim), dtype=complex)
    for k, s in enumerate(BRANCH_EIGENVALUES):
        vec, _ = branch_factorized_propagate(schedule, s, n0, fock, rtol=rtol)
        out += coeff[k] * np.outer(basis[k].conj(), vec)
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# types


def test_fock_config_basics():
    cfg = FockConfig(n_max=12)
    assert cfg.dim == 13
    with pytest.raises(ParameterError):
        FockConfig(n_max=0)
    auto = FockConfig.auto(nbar=0.0, max_displacement=0.5)
    assert auto.n_max >= 8
    hotter = FockConfig.auto(nbar=5.0, max_displacement=0.5)
    wider = FockConfig.auto(nbar=0.0, max_displacement=2.0)
    assert hotter.n_max > auto.n_max
    assert wider.n_max > auto.n_max


def test_auto_fock_covers_thermal_ensemble():
    ens = ThermalEnsemble.build(3.5)
    cfg = FockConfig.auto(nbar=3.5, max_displacement=0.8)
    # every retained thermal state must fit below the cutoff with room to move
    assert cfg.dim > ens.n_states + 8


def test_composite_state_shapes_and_populations():
    psi = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=2, n_max=5)
    pops = psi.spin_populations()
    assert list(pops) == ["uu", "ud", "du", "dd"]
    assert list(pops.values()) == pytest.approx([1.0, 0.0, 0.0, 0.0], abs=1e-12)
    fock = psi.fock_populations()
    assert fock[2] == pytest.approx(1.0, abs=1e-12)
    rho = psi.reduced_spin_density()
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        CompositeState(np.zeros(24, dtype=complex), n_max=5)


def test_thermal_ensemble_weights():
    cold = ThermalEnsemble.build(0.0)
    assert cold.n_states == 1
    assert cold.weights[0] == pytest.approx(1.0)
    ens = ThermalEnsemble.build(3.5)
    # ground-state weight of a geometric distribution is 1/(nbar+1)
    assert ens.weights[0] == pytest.approx(1.0 / 4.5, rel=1e-5)
    assert ens.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert ens.tail_mass < 1e-6
    with pytest.raises(ParameterError):
        ThermalEnsemble.build(-0.5)


def test_gate_outcome_validation():
    good = GateOutcome(p_uu=0.5, p_dd=0.5, p_odd=0.0, fidelity=1.0,
                       spin_purity=1.0, gate_angle=-math.pi / 2)
    table = good.to_table()
    assert set(table) >= {"p_uu", "p_dd", "p_odd", "fidelity"}
    with pytest.raises(ParameterError):
        GateOutcome(p_uu=0.7, p_dd=0.5, p_odd=0.0, fidelity=1.0,
                    spin_purity=1.0, gate_angle=0.0)
    with pytest.raises(ParameterError):
        GateOutcome(p_uu=0.5, p_dd=0.5, p_odd=0.0, fidelity=1.2,
                    spin_purity=1.0, gate_angle=0.0)


def test_gate_eigenbasis_diagonalizes_collective_drive():
    for phi in (0.0, 0.7, -1.3):
        basis = gate_eigenbasis(phi)
        assert np.allclose(basis.conj().T @ basis, np.eye(4), atol=1e-14)
        sigma = np.array([[0.0, np.exp(-1j * phi)], [np.exp(1j * phi), 0.0]])
        coll = np.kron(sigma, np.eye(2)) + np.kron(np.eye(2), sigma)
        diag = basis @ coll @ basis.conj().T
        assert np.allclose(diag, np.diag(BRANCH_EIGENVALUES), atol=1e-14)


# ---------------------------------------------------------------------------
# propagation


def test_zero_coupling_leaves_spin_untouched():
    sched = PulseSchedule([flat_segment(40e-6, 0.0, TWO_PI * 25e3)])
    rng = np.random.default_rng(3)
    for _ in range(4):
        spin = rng.normal(size=4) + 1j * rng.normal(size=4)
        spin /= np.linalg.norm(spin)
        psi0 = CompositeState.from_spin_fock(spin, n=1, n_max=12)
        out = propagate(sched, psi0)
        assert list(out.spin_populations().values()) == pytest.approx(
            np.abs(spin) ** 2, abs=1e-12)
        # motional phase exp(-i eta n) on |n=1> is global here, populations only
        assert out.fock_populations()[1] == pytest.approx(1.0, abs=1e-12)


def test_ideal_walsh_gate_makes_bell_state():
    p = WalshGateParams.calibrated(1, TWO_PI * 5e3)
    sched = build_walsh_schedule(p)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=24)
    out = outcome_from_state(propagate(sched, psi0), (1.0, 0.0, 0.0, 0.0))
    assert out.p_uu == pytest.approx(0.5, abs=1e-9)
    assert out.p_dd == pytest.approx(0.5, abs=1e-9)
    assert out.p_odd < 1e-8
    assert out.fidelity == pytest.approx(1.0, abs=1e-9)
    assert out.gate_angle == pytest.approx(-math.pi / 2, abs=1e-9)


def test_gate_angle_tracks_drive_strength():
    # closed loop at constant drive: angle = Omega^2 t / delta, sign of delta
    delta = TWO_PI * 30e3
    t = 3 * TWO_PI / delta
    for omega, sgn in ((TWO_PI * 3e3, 1.0), (TWO_PI * 4.5e3, -1.0)):
        sched = PulseSchedule([flat_segment(t, omega, sgn * delta)])
        expected = sgn * omega**2 * t / delta
        psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
        out = outcome_from_state(propagate(sched, psi0), (1.0, 0.0, 0.0, 0.0))
        assert out.gate_angle == pytest.approx(expected, abs=1e-8)
        assert out.p_uu == pytest.approx(math.cos(expected / 2) ** 2, abs=1e-9)


def test_forced_branch_is_displaced_vacuum():
    # open loop: the forced-branch column over |0> must be a coherent state
    omega, delta = TWO_PI * 4e3, TWO_PI * 20e3
    t = 0.3 * TWO_PI / delta
    sched = PulseSchedule([flat_segment(t, omega, delta)])
    gamma = -(omega / delta) * (np.exp(1j * delta * t) - 1.0)
    fock = FockConfig(n_max=30)
    vec, phase = branch_factorized_propagate(sched, 2.0, 0, fock)
    expected_angle = omega**2 * (t - math.sin(delta * t) / delta) / delta
    assert phase == pytest.approx(expected_angle, abs=1e-9)
    n = np.arange(8)
    coherent = np.exp(-0.5 * abs(gamma) ** 2) * abs(gamma) ** n / np.sqrt(
        [math.factorial(int(k)) for k in n])
    assert np.abs(vec[:8]) == pytest.approx(coherent, abs=1e-9)


def test_null_branch_only_rotates_fock_phases():
    sched = sign_flip_schedule(np.random.default_rng(11))
    fock = FockConfig(n_max=20)
    vec, phase = branch_factorized_propagate(sched, 0.0, 3, fock)
    assert phase == 0.0
    assert np.abs(vec[3]) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(np.delete(vec, 3)) < 1e-12


def test_branch_factorization_matches_full_propagation():
    # independent routes: stepped unitaries vs semiclassical displacement
    rng = np.random.default_rng(17)
    for _ in range(5):
        sched = sign_flip_schedule(rng, n_segments=int(rng.integers(2, 6)))
        fock = FockConfig(n_max=60)
        spin = rng.normal(size=4) + 1j * rng.normal(size=4)
        spin /= np.linalg.norm(spin)
        for n0 in (0, 3):
            psi0 = CompositeState.from_spin_fock(spin, n=n0, n_max=fock.n_max)
            full = propagate(sched, psi0).amplitudes
            fact = reassemble_from_branches(sched, spin, n0, fock)
            assert np.linalg.norm(full - fact) < 1e-9


def test_branch_factorization_matches_full_on_ramped_schedule():
    p = SmoothGateParams(delta_max=-TWO_PI * 300e3, delta_min=-TWO_PI * 30e3,
                         omega_g=TWO_PI * 5e3, tau_g=2e-6, tau_d=20e-6,
                         t_c=0.0, j=3)
    sched = build_smooth_schedule(p)
    fock = FockConfig(n_max=40)
    spin = np.array([0.5, 0.5, 0.5, 0.5], dtype=complex)
    psi0 = CompositeState.from_spin_fock(spin, n=0, n_max=fock.n_max)
    # midpoint stepping is second order: 1.1e-5 at 100 steps/period, /4 per doubling
    full = propagate(sched, psi0, steps_per_period=400).amplitudes
    fact = reassemble_from_branches(sched, spin, 0, fock)
    assert np.linalg.norm(full - fact) < 1e-6


def test_factorized_blocks_agree_with_stepped_blocks():
    sched = sign_flip_schedule(np.random.default_rng(29), n_segments=3)
    fock = FockConfig(n_max=50)
    stepped = gate_propagator(sched, fock)
    fact = branch_factorized_blocks(sched, fock)
    # compare low columns only; both routes disagree near the cutoff edge
    for k in range(4):
        diff = stepped.blocks[k][:, :10] - fact.blocks[k][:, :10]
        assert np.abs(diff).max() < 1e-9


def test_propagation_preserves_norm():
    sched = sign_flip_schedule(np.random.default_rng(5))
    psi0 = CompositeState.from_spin_fock((0.0, 1.0, 0.0, 0.0), n=2, n_max=50)
    out = propagate(sched, psi0)
    assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-12)


def test_truncation_error_when_cutoff_too_low():
    omega, delta = TWO_PI * 8e3, TWO_PI * 10e3
    sched = PulseSchedule([flat_segment(0.5 * TWO_PI / delta, omega, delta)])
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=6)
    with pytest.raises(TruncationError):
        propagate(sched, psi0, fock=FockConfig(n_max=6))


def test_propagate_parameter_errors():
    sched = sign_flip_schedule(np.random.default_rng(1))
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=20)
    with pytest.raises(ParameterError):
        propagate(sched, psi0, fock=FockConfig(n_max=30))
    with pytest.raises(ParameterError):
        propagate(sched, psi0, steps_per_period=4)
    with pytest.raises(ParameterError):
        branch_factorized_propagate(sched, 2.0, 40, FockConfig(n_max=20))


# ---------------------------------------------------------------------------
# carrier handling


def carrier_test_schedule(rabi, phase, invert):
    p = WalshGateParams.calibrated(2, TWO_PI * 5e3)
    sched = build_walsh_schedule(p)
    invert_at = 0.5 * sched.duration if invert else None
    carrier = CarrierDrive(rabi=rabi, start=0.0, stop=sched.duration,
                           ramp=0.5e-6, phase=phase, invert_at=invert_at)
    return PulseSchedule(sched.segments, carrier=carrier, label="walsh1+carrier")


def test_aligned_carrier_with_inversion_is_transparent():
    base = build_walsh_schedule(WalshGateParams.calibrated(2, TWO_PI * 5e3))
    with_c = carrier_test_schedule(TWO_PI * 80e3, 0.0, invert=True)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
    ref = outcome_from_state(propagate(base, psi0), (1.0, 0.0, 0.0, 0.0))
    out = outcome_from_state(propagate(with_c, psi0), (1.0, 0.0, 0.0, 0.0))
    assert abs(out.fidelity - ref.fidelity) < 1e-5
    assert abs(out.p_uu - ref.p_uu) < 1e-9


def test_aligned_carrier_without_inversion_shifts_branch_phases():
    base = build_walsh_schedule(WalshGateParams.calibrated(2, TWO_PI * 5e3))
    with_c = carrier_test_schedule(TWO_PI * 1e3, 0.0, invert=False)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
    ref = outcome_from_state(propagate(base, psi0), (1.0, 0.0, 0.0, 0.0))
    out = outcome_from_state(propagate(with_c, psi0), (1.0, 0.0, 0.0, 0.0))
    assert abs(out.p_uu - ref.p_uu) > 1e-3


def test_misaligned_carrier_needs_split_stepping():
    with_c = carrier_test_schedule(TWO_PI * 2e3, math.pi / 2, invert=False)
    fock = FockConfig(n_max=30)
    with pytest.raises(ParameterError):
        gate_propagator(with_c, fock)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
    out = propagate(with_c, psi0)
    assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-9)


def test_weak_misaligned_carrier_approaches_carrier_free_result():
    base = build_walsh_schedule(WalshGateParams.calibrated(2, TWO_PI * 5e3))
    weak = carrier_test_schedule(TWO_PI * 1.0, math.pi / 2, invert=False)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
    ref = list(propagate(base, psi0).spin_populations().values())
    out = list(propagate(weak, psi0).spin_populations().values())
    assert out == pytest.approx(ref, abs=1e-5)


# ---------------------------------------------------------------------------
# thermal averaging


def test_thermal_average_matches_explicit_fock_sum():
    sched = sign_flip_schedule(np.random.default_rng(23), n_segments=3)
    ens = ThermalEnsemble.build(1.2)
    fock = FockConfig.auto(1.2, 1.5)
    spin = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    avg = thermal_average(sched, ens, psi0_spin=spin, fock=fock)
    rho = np.zeros((4, 4), dtype=complex)
    for n, w in enumerate(ens.weights):
        psi0 = CompositeState.from_spin_fock(spin, n=n, n_max=fock.n_max)
        rho += w * propagate(sched, psi0).reduced_spin_density()
    basis = gate_eigenbasis(0.0)
    phases = np.exp(-1j * (math.pi / 2) * (np.array(BRANCH_EIGENVALUES) / 2) ** 2)
    target = basis.conj().T @ (phases * (basis @ spin))
    assert avg.p_uu == pytest.approx(rho[0, 0].real, abs=1e-12)
    assert avg.p_odd == pytest.approx((rho[1, 1] + rho[2, 2]).real, abs=1e-12)
    assert avg.fidelity == pytest.approx(
        float((target.conj() @ rho @ target).real), abs=1e-12)


def test_thermal_average_at_zero_temperature_matches_pure_state():
    sched = build_walsh_schedule(WalshGateParams.calibrated(2, TWO_PI * 5e3))
    ens = ThermalEnsemble.build(0.0)
    avg = thermal_average(sched, ens)
    psi0 = CompositeState.from_spin_fock((1.0, 0.0, 0.0, 0.0), n=0, n_max=30)
    pure = outcome_from_state(propagate(sched, psi0), (1.0, 0.0, 0.0, 0.0))
    assert avg.fidelity == pytest.approx(pure.fidelity, abs=1e-10)
    assert avg.p_uu == pytest.approx(pure.p_uu, abs=1e-10)


def test_offset_infidelity_is_affine_in_thermal_occupation():
    # static detuning error: infidelity grows linearly with 2*nbar + 1
    p = WalshGateParams.calibrated(2, TWO_PI * 5e3)
    sched = build_walsh_schedule(p).with_detuning_offset(TWO_PI * 300.0)
    nbars = np.array([0.0, 2.0, 4.0, 8.0])
    infid = np.array([
        1.0 - thermal_average(sched, ThermalEnsemble.build(nb)).fidelity
        for nb in nbars
    ])
    x = 2.0 * nbars + 1.0
    slope, intercept = np.polyfit(x, infid, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((infid - fit) ** 2))
    ss_tot = float(np.sum((infid - infid.mean()) ** 2))
    assert 1.0 - ss_res / ss_tot > 0.99
    assert slope > 0


def test_truncation_convergence_under_cutoff_doubling():
    p = WalshGateParams.calibrated(2, TWO_PI * 5e3)
    sched = build_walsh_schedule(p).with_detuning_offset(TWO_PI * 400.0)
    ens = ThermalEnsemble.build(2.0)
    base = FockConfig.auto(2.0, 1.0)
    lo = 1.0 - thermal_average(sched, ens, fock=base).fidelity
    hi = 1.0 - thermal_average(
        sched, ens, fock=FockConfig(n_max=2 * base.n_max)).fidelity
    assert abs(hi - lo) < 0.01 * abs(lo)


def test_thermal_average_rejects_undersized_cutoff():
    sched = build_walsh_schedule(WalshGateParams.calibrated(2, TWO_PI * 5e3))
    ens = ThermalEnsemble.build(3.5)
    with pytest.raises(TruncationError):
        thermal_average(sched, ens, fock=FockConfig(n_max=ens.n_states - 5))


# ---------------------------------------------------------------------------
# scans


def smooth_scan_params():
    return SmoothGateParams(delta_max=-TWO_PI * 400e3, delta_min=-TWO_PI * 21.7e3,
                            omega_g=TWO_PI * 5925.625855570961, tau_g=5e-6,
                            tau_d=100e-6, t_c=15.8e-6, j=3)


def test_calibration_scan_finds_balanced_point():
    base = smooth_scan_params()
    grid = -TWO_PI * np.array([25e3, 23e3, 21e3, 19e3])
    scan = calibration_scan(base, grid, ThermalEnsemble.build(0.0))
    assert scan.crossing is not None
    assert abs(scan.crossing - (-TWO_PI * 21.7e3)) < 0.05 * TWO_PI * 21.7e3
    # balance flips the population ordering across the crossing
    assert (scan.p_uu[0] - scan.p_dd[0]) * (scan.p_uu[-1] - scan.p_dd[-1]) < 0
    table = scan.to_table()
    assert set(table) >= {"delta_min_rad_s", "p_uu", "p_dd", "p_odd", "fidelity"}


def test_calibration_scan_errors():
    base = smooth_scan_params()
    with pytest.raises(GridError):
        calibration_scan(base, np.array([-TWO_PI * 20e3]), ThermalEnsemble.build(0.0))
    with pytest.raises(ParameterError):
        calibration_scan(base, TWO_PI * np.array([19e3, 21e3]),
                         ThermalEnsemble.build(0.0))
    with pytest.raises(ConvergenceError):
        grid = -TWO_PI * np.array([30e3, 28e3])
        calibration_scan(base, grid, ThermalEnsemble.build(0.0))


def test_offset_scan_baseline_and_symmetry():
    p = WalshGateParams.calibrated(2, TWO_PI * 5e3)
    sched = build_walsh_schedule(p)
    offsets = TWO_PI * np.array([-1e3, -0.25e3, 0.0, 0.25e3, 1e3])
    scan = offset_scan(sched, offsets, ThermalEnsemble.build(0.2))
    assert scan.p_odd[2] < 1e-6
    # leakage is even in the offset to leading order, odd correction ~ offset
    assert scan.p_odd[1] == pytest.approx(scan.p_odd[-2], rel=0.1)
    asym_small = abs(scan.p_odd[1] - scan.p_odd[-2]) / scan.p_odd[-2]
    asym_large = abs(scan.p_odd[0] - scan.p_odd[-1]) / scan.p_odd[-1]
    assert asym_small < asym_large
    # sign-flip echo cancels the quadratic residual, leaving a quartic
    assert scan.p_odd[-1] > 100 * scan.p_odd[-2]
    assert np.all(scan.fidelity <= 1.0)
    with pytest.raises(GridError):
        offset_scan(sched, np.zeros((2, 2)), ThermalEnsemble.build(0.0))
