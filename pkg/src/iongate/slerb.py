"""Randomized benchmarking of entangling gates on the even-parity subspace.

The two states |uu> and |dd> form an effective qubit.  A fully entangling
gate with drive-basis phase phi acts on that qubit as a pi/2 rotation about
an equatorial axis at angle 2*phi, so products of entangling gates in
rotated bases reach the whole 24-element single-qubit Clifford group without
any one-qubit pulses.  Sequences of random Cliffords plus an inverting
Clifford decay towards the subspace-depolarized steady state; leakage to
|ud>, |du> and the in-subspace contrast decay at separate rates which a
two-stage weighted fit extracts.

Decay model, chosen for its exact match to the error channels below and
documented here because no external reference form is assumed:

    in-subspace probability   L(N) = (1 + (1 - 2*eps_leak)^N) / 2
    polarization              c(N) = ((1 - eps_leak) * (1 - 2*eps_rb))^N
    P_survival = (L + c) / 2,  P_flip = (L - c) / 2,  P_leak = 1 - L

with no vertical offset (state preparation and measurement errors are
assumed negligible).  For small rates P_leak ~ N * eps_leak and
P_flip ~ N * eps_rb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, GridError, ParameterError
from .quantum import CompositeState, FockConfig, propagate
from .schedule import PulseSchedule

GATE_ANGLE = -math.pi / 2
GENERATOR_PHASES = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)

# per-gate error -> per-Clifford error conversion constant used by the
# standard reporting convention (13/6 entangling gates per Clifford)
GATES_PER_CLIFFORD_REPORTING = 13.0 / 6.0

_KEY_DECIMALS = 9


def logical_gate_unitary(angle: float, basis_phase: float) -> np.ndarray:
    """Action of the entangling gate on the {|uu>, |dd>} qubit.

    Equals exp(i*(angle/2) * (cos(2 phi) sigma_x + sin(2 phi) sigma_y)) up
    to the global phase exp(i*angle/2) inherited from the two-qubit gate.
    """
    half = 0.5 * angle
    off = 1j * math.sin(half)
    u = np.array([
        [math.cos(half), off * np.exp(-2j * basis_phase)],
        [off * np.exp(2j * basis_phase), math.cos(half)],
    ])
    return np.exp(1j * half) * u


def _canonical_key(u: np.ndarray) -> tuple:
    flat = u.ravel()
    mags = np.abs(flat)
    # first entry within tolerance of the max, so roundoff cannot move the pivot
    pivot = flat[int(np.argmax(mags > mags.max() - 1e-6))]
    fixed = flat * (abs(pivot) / pivot)
    fixed = np.where(np.abs(fixed.real) < 10.0**-_KEY_DECIMALS, 1j * fixed.imag, fixed)
    fixed = np.where(np.abs(fixed.imag) < 10.0**-_KEY_DECIMALS, fixed.real + 0j, fixed)
    return tuple(np.round(fixed, _KEY_DECIMALS).tolist())


@dataclass(frozen=True)
class SubspaceClifford:
    """One element of the effective-qubit Clifford group.

    ``gates`` is the shortest product of entangling gates realizing the
    element: (angle, basis_phase) pairs applied left to right.
    """

    index: int
    matrix: np.ndarray = field(repr=False)
    gates: tuple[tuple[float, float], ...] = ()

    def compiled_unitary(self) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for angle, phase in self.gates:
            u = logical_gate_unitary(angle, phase) @ u
        return u


@lru_cache(maxsize=1)
def clifford_table() -> tuple[SubspaceClifford, ...]:
    """All 24 subspace Cliffords, breadth-first from the four generators.

    Index 0 is the identity; indices are assigned in discovery order so the
    table is deterministic.  Every element stores a shortest compilation.
    """
    gens = [(GATE_ANGLE, phi) for phi in GENERATOR_PHASES]
    table = [SubspaceClifford(0, np.eye(2, dtype=complex), ())]
    seen = {_canonical_key(np.eye(2, dtype=complex)): 0}
    frontier = [table[0]]
    while frontier:
        nxt = []
        for elem in frontier:
            for angle, phase in gens:
                u = logical_gate_unitary(angle, phase) @ elem.matrix
                key = _canonical_key(u)
                if key in seen:
                    continue
                item = SubspaceClifford(len(table), u, elem.gates + ((angle, phase),))
                seen[key] = item.index
                table.append(item)
                nxt.append(item)
        frontier = nxt
    if len(table) != 24:
        raise ConvergenceError(f"Clifford closure found {len(table)} elements, expected 24")
    return tuple(table)


@lru_cache(maxsize=1)
def _clifford_lookup() -> dict:
    return {_canonical_key(c.matrix): c.index for c in clifford_table()}


def find_clifford(u: np.ndarray) -> int:
    """Index of the Clifford equal to ``u`` up to global phase."""
    key = _canonical_key(np.asarray(u, dtype=complex))
    try:
        return _clifford_lookup()[key]
    except KeyError:
        raise ParameterError("matrix is not a subspace Clifford") from None


def mean_gates_per_clifford() -> float:
    """Average compiled gate count over the 24-element table."""
    table = clifford_table()
    return sum(len(c.gates) for c in table) / len(table)


# ---------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class SlerbSequence:
    """A benchmarking sequence: random Cliffords plus the computed inverse."""

    n: int
    seed: int
    cliffords: tuple[int, ...]
    inverter: int
    expected_state: str
    pauli_randomized: bool

    @property
    def total_gates(self) -> int:
        table = clifford_table()
        count = sum(len(table[c].gates) for c in self.cliffords)
        return count + len(table[self.inverter].gates)


def _rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def generate_sequence(n: int, seed: int, pauli_randomize: bool = True) -> SlerbSequence:
    """Draw ``n`` uniform Cliffords and append the inverting element.

    With ``pauli_randomize`` the inverter absorbs a logical X half the time,
    so the expected outcome is |dd> instead of |uu>.
    """
    if n < 1:
        raise ParameterError("sequence length must be >= 1")
    table = clifford_table()
    rng = _rng(seed)
    draws = tuple(int(k) for k in rng.integers(0, len(table), size=n))
    product = np.eye(2, dtype=complex)
    for c in draws:
        product = table[c].matrix @ product
    inverse = product.conj().T
    expected = "uu"
    if pauli_randomize and rng.integers(0, 2):
        inverse = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex) @ inverse
        expected = "dd"
    return SlerbSequence(n=n, seed=seed, cliffords=draws,
                         inverter=find_clifford(inverse),
                         expected_state=expected,
                         pauli_randomized=pauli_randomize)


# ---------------------------------------------------------------------------
# error models


@dataclass(frozen=True)
class IdealModel:
    """Noise-free gates; every sequence returns its expected state."""


@dataclass(frozen=True)
class ParametricModel:
    """Per-gate depolarizing and leak channels on the effective qubit.

    ``eps_rb`` and ``eps_leak`` are per-Clifford rates.  Each compiled gate
    carries the per-gate share: contrast factor (1-2r) = (1-2 eps_rb)^(1/g)
    and symmetric subspace<->leak exchange q with (1-2q) = (1-2 eps_leak)^(1/g),
    where g is the table-average gate count per Clifford.  Both channels
    commute with the ideal unitaries, so a Clifford compiled into m gates
    applies them m times.  The inverter is error-free, matching the
    offset-free decay model.
    """

    eps_rb: float
    eps_leak: float

    def __post_init__(self):
        if not 0.0 <= self.eps_rb < 0.5:
            raise ParameterError("eps_rb must lie in [0, 0.5)")
        if not 0.0 <= self.eps_leak < 0.5:
            raise ParameterError("eps_leak must lie in [0, 0.5)")

    def per_gate_rates(self) -> tuple[float, float]:
        g = mean_gates_per_clifford()
        r = 0.5 * (1.0 - (1.0 - 2.0 * self.eps_rb) ** (1.0 / g))
        q = 0.5 * (1.0 - (1.0 - 2.0 * self.eps_leak) ** (1.0 / g))
        return r, q


@dataclass(frozen=True)
class FullScheduleModel:
    """Drive every compiled gate through the full quantum propagator.

    The schedule must be calibrated to the -pi/2 gate angle; the compiled
    basis phase of each gate is applied at propagation time.  The motional
    mode starts in |0>.
    """

    schedule: PulseSchedule
    fock: FockConfig | None = None
    steps_per_period: int = 50


ErrorModel = IdealModel | ParametricModel | FullScheduleModel


def _sequence_probabilities(seq: SlerbSequence, model: ErrorModel) -> np.ndarray:
    """(P_survival, P_flip, P_leak) for one sequence under the model."""
    table = clifford_table()
    expected_idx = 0 if seq.expected_state == "uu" else 1

    if isinstance(model, (IdealModel, ParametricModel)):
        prod = np.eye(2, dtype=complex)
        for c in seq.cliffords:
            prod = table[c].matrix @ prod
        prod = table[seq.inverter].matrix @ prod
        if abs(abs(prod[expected_idx, 0]) - 1.0) > 1e-9:
            raise ConvergenceError("inverter does not return the expected state")
        # Both channels commute with the ideal unitaries (depolarizing is
        # unitarily covariant, leak exchange touches only the trace), so the
        # whole sequence collapses: polarization along the ideal trajectory
        # shrinks by ((1-2r)(1-q))^M over the M compiled gates, and the
        # in/out-of-subspace populations follow a two-state exchange chain.
        total_gates = sum(len(table[c].gates) for c in seq.cliffords)
        if isinstance(model, ParametricModel):
            r, q = model.per_gate_rates()
        else:
            r, q = 0.0, 0.0
        trace_in = 0.5 * (1.0 + (1.0 - 2.0 * q) ** total_gates)
        polarization = ((1.0 - 2.0 * r) * (1.0 - q)) ** total_gates
        p_exp = 0.5 * trace_in + 0.5 * polarization
        p_flip = 0.5 * trace_in - 0.5 * polarization
        probs = np.array([p_exp, p_flip, 1.0 - trace_in])
    elif isinstance(model, FullScheduleModel):
        fock = model.fock or FockConfig.auto(0.0, _max_gate_displacement(model.schedule))
        spin = np.zeros(4, dtype=complex)
        spin[0] = 1.0
        state = CompositeState.from_spin_fock(spin, n=0, n_max=fock.n_max)
        for c in list(seq.cliffords) + [seq.inverter]:
            for _, phase in table[c].gates:
                state = propagate(model.schedule, state, fock=fock, basis_phase=phase,
                                  steps_per_period=model.steps_per_period)
        pops = state.spin_populations()
        expected = "uu" if seq.expected_state == "uu" else "dd"
        flipped = "dd" if expected == "uu" else "uu"
        probs = np.array([pops[expected], pops[flipped], pops["ud"] + pops["du"]])
    else:
        raise ParameterError(f"unknown error model {model!r}")

    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if not 0.99 < total < 1.01:
        raise ConvergenceError("sequence probabilities do not sum to one")
    return probs / total


def _max_gate_displacement(schedule: PulseSchedule) -> float:
    from .semiclassical import propagate_displacement

    traj = propagate_displacement(schedule, branch_eigenvalue=2.0, rtol=1e-8)
    return float(np.max(np.abs(traj.gamma)))


def simulate_sequence(seq: SlerbSequence, model: ErrorModel, shots: int,
                      seed: int) -> tuple[int, int, int]:
    """Multinomial shot counts (n_survival, n_flip, n_leak)."""
    if shots < 1:
        raise ParameterError("shots must be >= 1")
    probs = _sequence_probabilities(seq, model)
    counts = _rng(seed).multinomial(shots, probs)
    return int(counts[0]), int(counts[1]), int(counts[2])


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class SlerbDataset:
    """Per-sequence shot counts, one row per (length, sequence) pair."""

    n: np.ndarray
    sequence_id: np.ndarray
    shots: np.ndarray
    n_survival: np.ndarray
    n_flip: np.ndarray
    n_leak: np.ndarray

    def __post_init__(self):
        cols = (self.n, self.sequence_id, self.shots,
                self.n_survival, self.n_flip, self.n_leak)
        sizes = {c.shape for c in cols}
        if len(sizes) != 1 or self.n.ndim != 1 or self.n.size == 0:
            raise ParameterError("dataset columns must be matching 1-D arrays")
        total = self.n_survival + self.n_flip + self.n_leak
        if np.any(total != self.shots):
            raise ParameterError("shot counts must sum to shots in every row")
        if min(self.n_survival.min(), self.n_flip.min(), self.n_leak.min()) < 0:
            raise ParameterError("negative shot count")

    @property
    def lengths(self) -> np.ndarray:
        return np.unique(self.n)

    def truncated(self, max_n: int | None) -> "SlerbDataset":
        if max_n is None:
            return self
        keep = self.n <= max_n
        if not np.any(keep):
            raise GridError("truncation removes every row")
        return SlerbDataset(*(np.asarray(c)[keep] for c in (
            self.n, self.sequence_id, self.shots,
            self.n_survival, self.n_flip, self.n_leak)))

    def fractions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Aggregate over sequences: lengths, f_survival, f_flip, total shots."""
        lengths = self.lengths
        f_surv = np.empty_like(lengths, dtype=float)
        f_flip = np.empty_like(lengths, dtype=float)
        tot = np.empty_like(lengths, dtype=float)
        for i, length in enumerate(lengths):
            rows = self.n == length
            tot[i] = self.shots[rows].sum()
            f_surv[i] = self.n_survival[rows].sum() / tot[i]
            f_flip[i] = self.n_flip[rows].sum() / tot[i]
        return lengths, f_surv, f_flip, tot

    def to_table(self) -> dict[str, np.ndarray]:
        return {
            "N": self.n,
            "sequence_id": self.sequence_id,
            "shots": self.shots,
            "n_survival": self.n_survival,
            "n_flip": self.n_flip,
            "n_leak": self.n_leak,
        }

    @classmethod
    def from_columns(cls, n, sequence_id, shots, n_survival, n_flip, n_leak):
        return cls(*(np.asarray(c, dtype=int) for c in (
            n, sequence_id, shots, n_survival, n_flip, n_leak)))


def collect_dataset(lengths: Sequence[int], n_sequences: int, shots: int,
                    model: ErrorModel, seed: int,
                    pauli_randomize: bool = True) -> SlerbDataset:
    """Run the benchmark: fresh random sequences per length, fixed shots each."""
    if n_sequences < 1:
        raise ParameterError("need at least one sequence per length")
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(lengths) * n_sequences)
    rows_n, rows_id, rows = [], [], []
    k = 0
    for length in lengths:
        for sid in range(n_sequences):
            gen_seed, shot_seed = children[k].spawn(2)
            k += 1
            seq = generate_sequence(int(length), gen_seed, pauli_randomize)
            rows_n.append(int(length))
            rows_id.append(sid)
            rows.append(simulate_sequence(seq, model, shots, shot_seed))
    counts = np.array(rows, dtype=int)
    return SlerbDataset.from_columns(
        rows_n, rows_id, np.full(len(rows_n), shots),
        counts[:, 0], counts[:, 1], counts[:, 2])


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """Fitted decay rates and the derived per-gate error."""

    eps_rb: float
    eps_leak: float
    eps_flip: float
    eps_2q: float
    max_n: int | None = None
    ci: dict[str, tuple[float, float]] | None = None

    def __post_init__(self):
        for name in ("eps_rb", "eps_leak", "eps_flip"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        expected = _eps_2q(self.eps_rb, self.eps_leak)
        if abs(self.eps_2q - expected) > 1e-9 * max(expected, 1e-12):
            raise ParameterError("eps_2q inconsistent with fitted rates")

    def with_ci(self, ci: dict) -> "DecayFit":
        return replace(self, ci=ci)


def _eps_2q(eps_rb: float, eps_leak: float) -> float:
    return (1.2 * eps_rb + 0.8 * eps_leak) / GATES_PER_CLIFFORD_REPORTING


def error_per_gate(fit: DecayFit) -> float:
    """Average per-gate error from the fitted per-Clifford rates."""
    return _eps_2q(fit.eps_rb, fit.eps_leak)


def _gauss_newton_power(lengths, y, variance_fn, forward, jacobian, x0, lo, hi):
    """Fit y ~ forward(x, N) for a scalar decay parameter, batched over rows.

    Weights are recomputed from the model at the current parameter
    (iteratively reweighted least squares); observed-fraction weights would
    correlate with the noise and bias the rates low.  ``y`` and ``x0`` carry
    a leading batch axis; ``lengths`` is shared.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    for _ in range(80):
        f = forward(x[:, None], lengths[None, :])
        jac = jacobian(x[:, None], lengths[None, :])
        w = 1.0 / variance_fn(f)
        num = np.sum(w * jac * (y - f), axis=1)
        den = np.sum(w * jac * jac, axis=1)
        step = np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)
        x = np.clip(x + step, lo, hi)
        if np.all(np.abs(step) < 1e-14):
            break
    else:
        if np.any(np.abs(step) > 1e-8):
            raise ConvergenceError("decay fit did not converge")
    return x


def _fit_rates_batch(lengths: np.ndarray, f_surv: np.ndarray, f_flip: np.ndarray,
                     tot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized two-stage fit; all fraction inputs are (batch, n_lengths)."""
    n_shots = tot[None, :]
    var_floor = 1.0 / (2.0 * n_shots)
    f_leak = 1.0 - f_surv - f_flip

    # stage 1: leak fraction vs 1 - L(N), parametrized by b = 1 - 2 eps_leak
    slope = np.clip(f_leak[:, -1] / lengths[-1], 1e-12, 0.49)
    b0 = 1.0 - 2.0 * slope
    b = _gauss_newton_power(
        lengths, f_leak,
        lambda f: np.maximum(f * (1.0 - f), var_floor) / n_shots,
        lambda x, n: 0.5 * (1.0 - x**n),
        lambda x, n: -0.5 * n * x ** (n - 1.0),
        b0, 0.0, 1.0)
    eps_leak = 0.5 * (1.0 - b)

    # stage 2: polarization vs a^N with a = (1 - eps_leak)(1 - 2 eps_rb);
    # the in-subspace probability L from stage 1 sets the contrast variance
    z = f_surv - f_flip
    big_l = 0.5 * (1.0 + b[:, None] ** lengths[None, :])
    a0 = np.clip(np.abs(z[:, -1]), 1e-12, 1.0) ** (1.0 / lengths[-1])
    a = _gauss_newton_power(
        lengths, z,
        lambda f: np.maximum(big_l - f**2, var_floor) / n_shots,
        lambda x, n: x**n,
        lambda x, n: n * x ** (n - 1.0),
        a0, 0.0, 1.0)
    eps_rb = np.clip(0.5 * (1.0 - a / np.maximum(1.0 - eps_leak, 1e-12)), 0.0, None)
    return eps_rb, eps_leak


def fit_decays(data: SlerbDataset, max_n: int | None = None) -> DecayFit:
    """Weighted least-squares rates from aggregated per-length fractions."""
    used = data.truncated(max_n)
    lengths, f_surv, f_flip, tot = used.fractions()
    if lengths.size < 3:
        raise GridError("need at least three distinct sequence lengths")
    lengths = lengths.astype(float)
    eps_rb, eps_leak = _fit_rates_batch(
        lengths, f_surv[None, :], f_flip[None, :], tot)
    eps_rb, eps_leak = float(eps_rb[0]), float(eps_leak[0])
    # initial slope of the fitted flip curve, ~ eps_rb at small rates
    b = 1.0 - 2.0 * eps_leak
    a = (1.0 - eps_leak) * (1.0 - 2.0 * eps_rb)
    eps_flip = max(0.0, 0.5 * (0.5 * math.log(max(b, 1e-300))
                               - math.log(max(a, 1e-300))))
    return DecayFit(eps_rb=eps_rb, eps_leak=eps_leak, eps_flip=eps_flip,
                    eps_2q=_eps_2q(eps_rb, eps_leak), max_n=max_n)


def bootstrap_ci(data: SlerbDataset, fit_fn: Callable | None = None,
                 resamples: int = 10000, seed: int = 0,
                 max_n: int | None = None) -> dict[str, tuple[float, float]]:
    """68% percentile intervals from sequence-level resampling.

    Rows are resampled with replacement within each length.  The default
    fast path refits all resamples in one vectorized pass; passing a custom
    ``fit_fn(dataset) -> DecayFit`` switches to a per-resample loop.
    """
    if resamples < 100:
        raise ParameterError("resamples must be >= 100")
    used = data.truncated(max_n)
    lengths = used.lengths
    if lengths.size < 3:
        raise GridError("need at least three distinct sequence lengths")
    row_sets = [np.flatnonzero(used.n == length) for length in lengths]
    if min(rows.size for rows in row_sets) < 2:
        raise DomainError("bootstrap needs at least two sequences per length")
    rng = _rng(seed)

    if fit_fn is not None:
        rates = np.empty((resamples, 3))
        for i in range(resamples):
            pick = np.concatenate([rng.choice(rows, size=rows.size) for rows in row_sets])
            sample = SlerbDataset(*(np.asarray(c)[pick] for c in (
                used.n, used.sequence_id, used.shots,
                used.n_survival, used.n_flip, used.n_leak)))
            fit = fit_fn(sample)
            rates[i] = (fit.eps_rb, fit.eps_leak, fit.eps_2q)
        eps_rb, eps_leak, eps_2q = rates.T
    else:
        n_len = lengths.size
        f_surv = np.empty((resamples, n_len))
        f_flip = np.empty((resamples, n_len))
        tot = np.empty(n_len)
        for j, rows in enumerate(row_sets):
            pick = rng.choice(rows, size=(resamples, rows.size))
            shots = used.shots[pick].sum(axis=1)
            f_surv[:, j] = used.n_survival[pick].sum(axis=1) / shots
            f_flip[:, j] = used.n_flip[pick].sum(axis=1) / shots
            tot[j] = used.shots[rows].sum()
        eps_rb, eps_leak = _fit_rates_batch(lengths.astype(float), f_surv, f_flip, tot)
        eps_2q = _eps_2q(eps_rb, eps_leak)

    def interval(values):
        lo, hi = np.percentile(values, [16.0, 84.0])
        return float(lo), float(hi)

    return {
        "eps_rb": interval(eps_rb),
        "eps_leak": interval(eps_leak),
        "eps_2q": interval(eps_2q),
    }
