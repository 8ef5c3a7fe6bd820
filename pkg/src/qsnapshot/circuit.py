"""Gate-level circuits and exact statevector execution.

Qubit 0 is the least-significant bit of the basis index throughout. The
SWAP-test layout puts the ancilla at circuit position 0.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Rng, StateVector

SINGLE_QUBIT_KINDS = frozenset({"X", "SX", "RZ", "H", "RY", "MEASURE", "RESET", "ID", "DELAY"})
BASIS_KINDS = frozenset({"CX", "DELAY", "ID", "MEASURE", "RESET", "RZ", "SX", "X"})
PARAM_KINDS = frozenset({"RZ", "RY"})

_SQ = 1.0 / math.sqrt(2.0)
H_MATRIX = np.array([[_SQ, _SQ], [_SQ, -_SQ]], dtype=np.complex128)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SX_MATRIX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=np.complex128)


def rz_matrix(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=np.complex128
    )


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


@dataclass(frozen=True)
class Gate:
    """One circuit instruction.

    ``qubits`` ordering: CX is (control, target); CSWAP is (control, a, b).
    ``param`` holds the rotation angle in radians (RZ, RY) or the delay
    duration in nanoseconds (DELAY).
    """

    kind: str
    qubits: tuple
    param: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = {"CX": 2, "CSWAP": 3}.get(self.kind, 1)
        if self.kind not in SINGLE_QUBIT_KINDS and self.kind not in ("CX", "CSWAP"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} expects {arity} qubits, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} qubits must be distinct, got {self.qubits}")
        if self.kind in PARAM_KINDS or self.kind == "DELAY":
            if self.param is None:
                raise ValueError(f"{self.kind} requires a parameter")
        elif self.param is not None:
            raise ValueError(f"{self.kind} takes no parameter")


@dataclass
class QuantumCircuit:
    """Ordered gate list over a fixed qubit count."""

    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        measured_done: set = set()
        for g in self.gates:
            self._check_gate(g, measured_done)

    def _check_gate(self, gate: Gate, measured_done: set):
        for q in gate.qubits:
            if q < 0 or q >= self.n_qubits:
                raise ValueError(f"qubit {q} outside circuit width {self.n_qubits}")
        if gate.kind == "RESET":
            measured_done.difference_update(gate.qubits)
            return
        for q in gate.qubits:
            if q in measured_done:
                raise ValueError(f"gate {gate.kind} follows MEASURE on qubit {q}")
        if gate.kind == "MEASURE":
            measured_done.update(gate.qubits)

    @property
    def measured(self) -> tuple:
        return tuple(sorted({g.qubits[0] for g in self.gates if g.kind == "MEASURE"}))

    def add(self, kind: str, *qubits, param: float | None = None) -> "QuantumCircuit":
        gate = Gate(kind, qubits, param)
        done = {g.qubits[0] for g in self.gates if g.kind == "MEASURE"}
        for g in self.gates:
            if g.kind == "RESET":
                done.difference_update(g.qubits)
        self._check_gate(gate, done)
        self.gates.append(gate)
        return self

    def without_measurements(self) -> "QuantumCircuit":
        return QuantumCircuit(
            self.n_qubits, [g for g in self.gates if g.kind != "MEASURE"]
        )

    def remapped(self, mapping: dict, n_qubits: int) -> "QuantumCircuit":
        """Copy of the circuit with qubit indices rewired into a wider register."""
        gates = [
            Gate(g.kind, tuple(mapping[q] for q in g.qubits), g.param)
            for g in self.gates
        ]
        return QuantumCircuit(n_qubits, gates)

    def dump(self) -> str:
        """Deterministic plain-text listing, one gate per line (golden-test format)."""
        lines = []
        for g in self.gates:
            line = f"{g.kind} " + ",".join(f"q{q}" for q in g.qubits)
            if g.param is not None:
                line += f" (theta={g.param:.17g})"
            lines.append(line)
        return "\n".join(lines)


@dataclass(frozen=True)
class ShotResult:
    """Measured-bitstring histogram; bitstring order is q0 leftmost."""

    counts: dict
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to the shot total")

    def probability(self, bitstring: str) -> float:
        return self.counts.get(bitstring, 0) / self.shots


# ---------------------------------------------------------------------------
# Statevector execution


@functools.lru_cache(maxsize=None)
def _bit_partition(n_qubits: int, qubit: int):
    idx = np.arange(2**n_qubits)
    idx0 = idx[(idx >> qubit) & 1 == 0]
    return idx0, idx0 | (1 << qubit)


def apply_matrix(amps: np.ndarray, mat: np.ndarray, qubits: tuple, n_qubits: int) -> np.ndarray:
    """Apply a k-qubit matrix to amplitudes (flat, or batched with a leading axis).

    ``qubits[0]`` is the most significant bit of the matrix's local basis
    index; the matrix is 2^k x 2^k.
    """
    k = len(qubits)
    if k == 1:
        idx0, idx1 = _bit_partition(n_qubits, qubits[0])
        a0 = amps[..., idx0]
        a1 = amps[..., idx1]
        out = np.empty_like(amps)
        out[..., idx0] = mat[0, 0] * a0 + mat[0, 1] * a1
        out[..., idx1] = mat[1, 0] * a0 + mat[1, 1] * a1
        return out
    batched = amps.ndim == 2
    batch = amps.shape[0] if batched else 1
    tensor = amps.reshape((batch,) + (2,) * n_qubits)
    # axis 1 + j of the tensor is qubit n-1-j
    axes = [1 + (n_qubits - 1 - q) for q in qubits]
    tensor = np.moveaxis(tensor, axes, range(1, 1 + k))
    moved_shape = tensor.shape
    tensor = tensor.reshape(batch, 2**k, -1)
    tensor = np.einsum("ij,bjk->bik", mat, tensor)
    tensor = tensor.reshape(moved_shape)
    tensor = np.moveaxis(tensor, range(1, 1 + k), axes)
    out = tensor.reshape(batch, 2**n_qubits)
    return out if batched else out[0]


def _cx_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    return np.where((idx >> control) & 1 == 1, idx ^ (1 << target), idx)


def _cswap_permutation(n_qubits: int, control: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    bit_a = (idx >> a) & 1
    bit_b = (idx >> b) & 1
    swapped = idx ^ (((bit_a ^ bit_b) << a) | ((bit_a ^ bit_b) << b))
    return np.where((idx >> control) & 1 == 1, swapped, idx)


def _single_qubit_matrix(gate: Gate) -> np.ndarray | None:
    if gate.kind == "X":
        return X_MATRIX
    if gate.kind == "SX":
        return SX_MATRIX
    if gate.kind == "H":
        return H_MATRIX
    if gate.kind == "RZ":
        return rz_matrix(gate.param)
    if gate.kind == "RY":
        return ry_matrix(gate.param)
    return None


def apply_gate(amps: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    """Apply one non-measurement gate to flat or batched amplitudes."""
    mat = _single_qubit_matrix(gate)
    if mat is not None:
        return apply_matrix(amps, mat, gate.qubits, n_qubits)
    if gate.kind == "CX":
        perm = _cx_permutation(n_qubits, *gate.qubits)
        return amps[..., perm]
    if gate.kind == "CSWAP":
        perm = _cswap_permutation(n_qubits, *gate.qubits)
        return amps[..., perm]
    if gate.kind in ("ID", "DELAY"):
        return amps
    if gate.kind == "RESET":
        return _apply_reset(amps, gate.qubits[0], n_qubits)
    raise ValueError(f"cannot apply gate kind {gate.kind!r}")


def _apply_reset(amps: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    one_mask = (idx >> qubit) & 1 == 1
    batched = amps.ndim == 2
    out = np.array(amps, copy=True)
    flat = out if batched else out[None, :]
    p0 = np.sum(np.abs(flat[:, ~one_mask]) ** 2, axis=1)
    for i in range(flat.shape[0]):
        if p0[i] > 1e-24:
            flat[i, one_mask] = 0.0
            flat[i] /= math.sqrt(p0[i])
        else:
            # all weight on |1>: relocate it to |0> (projective reset)
            flat[i, idx[~one_mask]] = flat[i, idx[~one_mask] | (1 << qubit)]
            flat[i, one_mask] = 0.0
    return out if batched else flat[0]


def execute_statevector(circuit: QuantumCircuit, initial: StateVector) -> StateVector:
    """Exact noiseless execution; rejects circuits containing MEASURE."""
    if initial.n_qubits != circuit.n_qubits:
        raise ValueError(
            f"initial state has {initial.n_qubits} qubits, circuit {circuit.n_qubits}"
        )
    if any(g.kind == "MEASURE" for g in circuit.gates):
        raise ValueError("circuit contains MEASURE; use sample_shots or ancilla_expectation")
    amps = np.array(initial.amplitudes, copy=True)
    for gate in circuit.gates:
        amps = apply_gate(amps, gate, circuit.n_qubits)
    return StateVector.normalized(amps)


def final_probabilities(circuit: QuantumCircuit, initial: StateVector | None = None):
    """Final state of the unitary part and its basis probabilities."""
    if initial is None:
        initial = StateVector.computational_basis(circuit.n_qubits)
    state = execute_statevector(circuit.without_measurements(), initial)
    return state, np.abs(state.amplitudes) ** 2


def ancilla_expectation(circuit: QuantumCircuit) -> float:
    """Exact <Z> on qubit 0 for a circuit measuring exactly that qubit."""
    if circuit.measured != (0,):
        raise ValueError(f"circuit must measure exactly qubit 0, measures {circuit.measured}")
    _, probs = final_probabilities(circuit)
    idx = np.arange(probs.size)
    p1 = float(np.sum(probs[(idx & 1) == 1]))
    return 1.0 - 2.0 * p1


def sample_shots(circuit: QuantumCircuit, shots: int, rng: Rng) -> ShotResult:
    """Sample measured-qubit bitstrings from the exact final distribution."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    measured = circuit.measured
    if not measured:
        raise ValueError("circuit has no measured qubits")
    _, probs = final_probabilities(circuit)
    outcomes = rng._gen.choice(probs.size, size=shots, p=probs / probs.sum())
    counts: dict = {}
    for outcome in outcomes:
        bits = "".join(str((int(outcome) >> q) & 1) for q in measured)
        counts[bits] = counts.get(bits, 0) + 1
    return ShotResult(dict(sorted(counts.items())), shots)


# ---------------------------------------------------------------------------
# Mottonen state preparation (uniformly controlled rotations, Gray-code CX)


def _gray_permutation_sign(row: int, col: int) -> int:
    ones = bin(row & (col ^ (col >> 1))).count("1")
    return -1 if ones & 1 else 1


def _multiplexor_thetas(alphas: np.ndarray) -> np.ndarray:
    k = alphas.size
    m = np.array(
        [[_gray_permutation_sign(j, i) for j in range(k)] for i in range(k)],
        dtype=np.float64,
    )
    return (m @ alphas) / k


def _uniform_rotation(kind: str, alphas: np.ndarray, controls: list, target: int) -> list:
    """Multiplexed rotation over all control patterns, as rotations + a CX ladder."""
    gates = []
    thetas = _multiplexor_thetas(np.asarray(alphas, dtype=np.float64))
    if not controls:
        if abs(thetas[0]) > 1e-15:
            gates.append(Gate(kind, (target,), float(thetas[0])))
        return gates
    size = len(thetas)
    gray = [i ^ (i >> 1) for i in range(size)]
    for i in range(size):
        if abs(thetas[i]) > 1e-15:
            gates.append(Gate(kind, (target,), float(thetas[i])))
        flip = gray[i] ^ gray[(i + 1) % size]
        control = controls[flip.bit_length() - 1]
        gates.append(Gate("CX", (control, target)))
    return gates


def _ry_angles(magnitudes: np.ndarray, n: int, level: int) -> np.ndarray:
    half = 2 ** (level - 1)
    blocks = magnitudes.reshape(2 ** (n - level), 2 * half)
    upper = np.sum(blocks[:, half:] ** 2, axis=1)
    total = np.sum(blocks**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(total > 0, upper / np.where(total > 0, total, 1.0), 0.0)
    return 2.0 * np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0)))


def _rz_angles(phases: np.ndarray, n: int, level: int) -> np.ndarray:
    half = 2 ** (level - 1)
    blocks = phases.reshape(2 ** (n - level), 2 * half)
    return np.sum(blocks[:, half:] - blocks[:, :half], axis=1) / half


def mottonen_prepare(target: StateVector) -> QuantumCircuit:
    """Circuit preparing ``target`` from |0...0> up to a global phase.

    Uniformly controlled RY cascade for magnitudes, then a uniformly
    controlled RZ cascade for phases; multiplexors reduce to rotations
    interleaved with Gray-code CX ladders. Emits only RY, RZ, CX.
    """
    n = target.n_qubits
    amps = target.amplitudes
    magnitudes = np.abs(amps)
    phases = np.angle(amps)
    circuit = QuantumCircuit(n)
    for level in range(n, 0, -1):
        alphas = _ry_angles(magnitudes, n, level)
        controls = list(range(level, n))
        circuit.gates.extend(_uniform_rotation("RY", alphas, controls, level - 1))
    if np.max(np.abs(phases)) > 1e-15:
        for level in range(n, 0, -1):
            alphas = _rz_angles(phases, n, level)
            controls = list(range(level, n))
            circuit.gates.extend(_uniform_rotation("RZ", alphas, controls, level - 1))
    return circuit


# ---------------------------------------------------------------------------
# Lowering to the native basis set {CX, DELAY, ID, MEASURE, RESET, RZ, SX, X}

_HALF_PI = math.pi / 2
_QUARTER_PI = math.pi / 4


def _lower_h(q: int) -> list:
    return [
        Gate("RZ", (q,), _HALF_PI),
        Gate("SX", (q,)),
        Gate("RZ", (q,), _HALF_PI),
    ]


def _lower_ry(q: int, theta: float) -> list:
    # RY(t) = RZ(-pi/2) . RX(t) . RZ(pi/2) with RX(t) = RZ(-pi/2) SX RZ(pi-t) SX RZ(-pi/2)
    # collapsed: SX . RZ(t + pi) . SX . RZ(pi)  (up to global phase)
    return [
        Gate("SX", (q,)),
        Gate("RZ", (q,), theta + math.pi),
        Gate("SX", (q,)),
        Gate("RZ", (q,), math.pi),
    ]


def _toffoli(c1: int, c2: int, t: int) -> list:
    """Standard 6-CX Toffoli; T rotations expressed as RZ, H expanded later."""
    t_angle = _QUARTER_PI
    gates = []
    gates.extend(_lower_h(t))
    gates.append(Gate("CX", (c2, t)))
    gates.append(Gate("RZ", (t,), -t_angle))
    gates.append(Gate("CX", (c1, t)))
    gates.append(Gate("RZ", (t,), t_angle))
    gates.append(Gate("CX", (c2, t)))
    gates.append(Gate("RZ", (t,), -t_angle))
    gates.append(Gate("CX", (c1, t)))
    gates.append(Gate("RZ", (c2,), t_angle))
    gates.append(Gate("RZ", (t,), t_angle))
    gates.extend(_lower_h(t))
    gates.append(Gate("CX", (c1, c2)))
    gates.append(Gate("RZ", (c1,), t_angle))
    gates.append(Gate("RZ", (c2,), -t_angle))
    gates.append(Gate("CX", (c1, c2)))
    return gates


def lower_gate(gate: Gate) -> list:
    if gate.kind in BASIS_KINDS:
        return [gate]
    if gate.kind == "H":
        return _lower_h(gate.qubits[0])
    if gate.kind == "RY":
        return _lower_ry(gate.qubits[0], gate.param)
    if gate.kind == "CSWAP":
        c, a, b = gate.qubits
        return [Gate("CX", (b, a))] + _toffoli(c, a, b) + [Gate("CX", (b, a))]
    raise ValueError(f"cannot lower gate kind {gate.kind!r}")


def lower_to_basis(circuit: QuantumCircuit) -> QuantumCircuit:
    """Rewrite onto the native basis set; action agrees up to global phase."""
    gates: list = []
    for gate in circuit.gates:
        gates.extend(lower_gate(gate))
    return QuantumCircuit(circuit.n_qubits, gates)


# ---------------------------------------------------------------------------
# SWAP test


def build_swap_test(
    n_qubits: int, prep_a: QuantumCircuit, prep_b: QuantumCircuit
) -> QuantumCircuit:
    """SWAP-test circuit on 2n+1 qubits.

    Qubit 0 is the ancilla; ``prep_a`` loads qubits 1..n, ``prep_b`` loads
    qubits n+1..2n; controlled swaps pair qubit i with qubit n+i; the ancilla
    is measured.
    """
    if prep_a.n_qubits != n_qubits or prep_b.n_qubits != n_qubits:
        raise ValueError(
            f"preparation widths ({prep_a.n_qubits}, {prep_b.n_qubits}) "
            f"do not match n_qubits={n_qubits}"
        )
    width = 2 * n_qubits + 1
    circ = QuantumCircuit(width)
    circ.add("H", 0)
    map_a = {q: q + 1 for q in range(n_qubits)}
    map_b = {q: q + 1 + n_qubits for q in range(n_qubits)}
    circ.gates.extend(prep_a.remapped(map_a, width).gates)
    circ.gates.extend(prep_b.remapped(map_b, width).gates)
    for i in range(1, n_qubits + 1):
        circ.add("CSWAP", 0, i, i + n_qubits)
    circ.add("H", 0)
    circ.add("MEASURE", 0)
    return circ
