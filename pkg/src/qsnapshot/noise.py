"""Calibrated gate-level noise: Kraus channels applied as Monte Carlo trajectories.

Channels are synthesized from scalar calibration parameters (bit-flip
probability, depolarizing rates, T1/T2 relaxation over gate durations) and
attached per gate kind. Trajectory execution is vectorized across
trajectories; averaging reproduces the density-matrix evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .circuit import BASIS_KINDS, QuantumCircuit, apply_gate, apply_matrix
from .core import Rng, StateVector

COMPLETENESS_TOL = 1e-9

_I2 = np.eye(2, dtype=np.complex128)
_PAULIS = {
    "I": _I2,
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class UnsupportedRegimeError(ValueError):
    """Raised for noise parameter regimes outside the supported range."""


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    operators: tuple
    arity: int

    def __post_init__(self):
        d = 2**self.arity
        ops = tuple(np.asarray(k, dtype=np.complex128) for k in self.operators)
        if self.arity not in (1, 2):
            raise ValueError(f"arity must be 1 or 2, got {self.arity}")
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (d, d):
                raise ValueError(f"Kraus operator shape {k.shape} != ({d}, {d})")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(d))) > COMPLETENESS_TOL:
            raise ValueError("Kraus operators violate completeness")
        object.__setattr__(self, "operators", ops)
        self._classify()

    def _classify(self):
        """Precompute fast-path metadata for trajectory sampling.

        A channel whose operators are all proportional to unitaries has
        state-independent selection probabilities; a channel whose POVM
        effects are all diagonal needs only basis populations.
        """
        d = self.operators[0].shape[0]
        effects = tuple(k.conj().T @ k for k in self.operators)
        weights = []
        unitaries = []
        unitary_mix = True
        for k, eff in zip(self.operators, effects):
            w = float(np.trace(eff).real) / d
            if np.max(np.abs(eff - w * np.eye(d))) > 1e-12:
                unitary_mix = False
                break
            weights.append(w)
            unitaries.append(None if w < 1e-30 else k / math.sqrt(w))
        if unitary_mix:
            w_arr = np.array(weights)
            object.__setattr__(self, "_mix_weights", w_arr / w_arr.sum())
            is_id = [
                u is not None
                and np.max(np.abs(u / u.flat[np.argmax(np.abs(u))] - np.eye(d))) < 1e-12
                for u in unitaries
            ]
            object.__setattr__(self, "_mix_unitaries", tuple(unitaries))
            object.__setattr__(self, "_mix_is_identity", tuple(is_id))
        else:
            object.__setattr__(self, "_mix_weights", None)
        diag = all(np.max(np.abs(eff - np.diag(np.diag(eff)))) < 1e-14 for eff in effects)
        object.__setattr__(
            self,
            "_effect_diagonals",
            np.array([np.diag(eff).real for eff in effects]) if diag else None,
        )

    @property
    def is_identity(self) -> bool:
        if len(self.operators) != 1:
            return False
        k = self.operators[0]
        return bool(np.max(np.abs(k - np.eye(k.shape[0]))) < 1e-12)

    def effects(self) -> tuple:
        """The POVM effects K_i^dagger K_i (selection probabilities)."""
        return tuple(k.conj().T @ k for k in self.operators)


def identity_channel(arity: int = 1) -> KrausChannel:
    return KrausChannel((np.eye(2**arity, dtype=np.complex128),), arity)


def bit_flip_channel(p: float) -> KrausChannel:
    """Pauli-X flip with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    if p == 0.0:
        return identity_channel(1)
    if p == 1.0:
        return KrausChannel((_PAULIS["X"],), 1)
    return KrausChannel(
        (math.sqrt(1.0 - p) * _I2, math.sqrt(p) * _PAULIS["X"]), 1
    )


def depolarizing_channel(p: float, arity: int = 1) -> KrausChannel:
    """Standard Pauli-basis depolarizing channel on 1 or 2 qubits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must be in [0, 1], got {p}")
    if arity not in (1, 2):
        raise ValueError(f"arity must be 1 or 2, got {arity}")
    if p == 0.0:
        return identity_channel(arity)
    labels = ["I", "X", "Y", "Z"]
    if arity == 1:
        paulis = [_PAULIS[a] for a in labels]
    else:
        paulis = [np.kron(_PAULIS[a], _PAULIS[b]) for a in labels for b in labels]
    n_err = len(paulis) - 1
    ops = [math.sqrt(1.0 - p) * paulis[0]]
    ops.extend(math.sqrt(p / n_err) * pp for pp in paulis[1:])
    return KrausChannel(tuple(ops), arity)


def thermal_relaxation_channel(t1: float, t2: float, duration: float) -> KrausChannel:
    """Amplitude damping composed with pure dephasing over ``duration``.

    ``t1``/``t2`` in microseconds, ``duration`` in nanoseconds. Only the
    t2 <= t1 regime is supported.
    """
    if t1 <= 0 or t2 <= 0:
        raise ValueError("relaxation times must be positive")
    if t2 > t1:
        raise UnsupportedRegimeError(f"t2={t2} > t1={t1} is not supported")
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0:
        return identity_channel(1)
    t1_ns = t1 * 1000.0
    t2_ns = t2 * 1000.0
    e1 = math.exp(-duration / t1_ns)
    e2 = math.exp(-duration / t2_ns)
    gamma = 1.0 - e1
    # residual dephasing after the coherence decay already caused by damping
    lam = 1.0 if e1 == 0.0 else 1.0 - (e2 * e2) / e1
    lam = min(max(lam, 0.0), 1.0)
    damp_0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=np.complex128)
    damp_1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=np.complex128)
    deph_0 = np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=np.complex128)
    deph_1 = np.array([[0, 0], [0, math.sqrt(lam)]], dtype=np.complex128)
    ops = []
    for d in (deph_0, deph_1):
        for a in (damp_0, damp_1):
            k = d @ a
            if np.max(np.abs(k)) > 1e-15:
                ops.append(k)
    return KrausChannel(tuple(ops), 1)


@dataclass(frozen=True)
class NoiseParams:
    """Scalar calibration record for the synthesized noise model.

    Times: t1/t2 in microseconds, lengths in nanoseconds. The gate lengths
    are typical-magnitude stand-ins, not calibrated values.
    """

    bit_flip_p: float = 2.003e-04
    depol_1q: float = 1.701e-02
    depol_2q: float = 0.02
    t1: float = 272.21
    t2: float = 188.1
    readout_len: float = 1216.0
    gate_len_1q: float = 60.0
    gate_len_2q: float = 660.0

    def __post_init__(self):
        for name in ("bit_flip_p", "depol_1q", "depol_2q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.t2 > 2 * self.t1:
            raise ValueError(f"t2={self.t2} exceeds 2*t1={2 * self.t1}")
        for name in ("readout_len", "gate_len_1q", "gate_len_2q"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_file(cls, path) -> "NoiseParams":
        """Load key=value text config; unknown keys are an error."""
        known = {f.name for f in fields(cls)}
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = float(value.strip())
        return cls(**values)


@dataclass(frozen=True)
class ChannelApplication:
    """One channel attached to a gate kind.

    ``scope`` is "operands" (1-qubit channel applied to every operand in
    turn) or "pair" (2-qubit channel applied to the gate's qubit pair).
    """

    channel: KrausChannel
    scope: str = "operands"

    def __post_init__(self):
        if self.scope not in ("operands", "pair"):
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.scope == "pair" and self.channel.arity != 2:
            raise ValueError("pair scope requires a 2-qubit channel")
        if self.scope == "operands" and self.channel.arity != 1:
            raise ValueError("operands scope requires a 1-qubit channel")


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate-kind channel assignments plus relaxation parameters for delays."""

    assignments: dict = field(default_factory=dict)
    t1: float | None = None
    t2: float | None = None

    def __post_init__(self):
        for kind, apps in self.assignments.items():
            if kind not in BASIS_KINDS:
                raise ValueError(f"channel assigned to non-basis gate kind {kind!r}")
            for app in apps:
                if not isinstance(app, ChannelApplication):
                    raise ValueError("assignments must hold ChannelApplication entries")

    def channels_for(self, gate) -> list:
        apps = list(self.assignments.get(gate.kind, ()))
        if gate.kind == "DELAY" and self.t1 is not None:
            apps.append(
                ChannelApplication(
                    thermal_relaxation_channel(self.t1, self.t2, gate.param)
                )
            )
        return apps


def identity_noise_model() -> NoiseModel:
    return NoiseModel({})


def calibrated_noise_model(params: NoiseParams | None = None) -> NoiseModel:
    """The calibrated model: depolarizing + bit flip on 1q gates, depolarizing
    + per-operand thermal relaxation on CX, relaxation over the readout window
    before measurement, relaxation over idle durations for ID/DELAY."""
    if params is None:
        params = NoiseParams()
    depol1 = ChannelApplication(depolarizing_channel(params.depol_1q, 1))
    flip = ChannelApplication(bit_flip_channel(params.bit_flip_p))
    single = [depol1, flip]
    cx = [
        ChannelApplication(depolarizing_channel(params.depol_2q, 2), scope="pair"),
        ChannelApplication(
            thermal_relaxation_channel(params.t1, params.t2, params.gate_len_2q)
        ),
    ]
    measure = [
        ChannelApplication(
            thermal_relaxation_channel(params.t1, params.t2, params.readout_len)
        )
    ]
    idle = [
        ChannelApplication(
            thermal_relaxation_channel(params.t1, params.t2, params.gate_len_1q)
        )
    ]
    assignments = {
        "RZ": single,
        "SX": single,
        "X": single,
        "CX": cx,
        "MEASURE": measure,
        "ID": idle,
    }
    return NoiseModel(assignments, t1=params.t1, t2=params.t2)


# ---------------------------------------------------------------------------
# Trajectory execution (vectorized across trajectories)


def _apply_channel_batch(
    amps: np.ndarray, channel: KrausChannel, qubits: tuple, n_qubits: int, rng: Rng
) -> np.ndarray:
    """Stochastically apply one Kraus channel to a (trajectories, dim) batch."""
    if channel.is_identity:
        return amps
    k_local = 2 ** len(qubits)
    batch = amps.shape[0]
    u = rng.uniform(batch)

    if channel._mix_weights is not None:
        # operators proportional to unitaries: static probabilities, no renorm
        choice = (u[None, :] > np.cumsum(channel._mix_weights)[:, None]).sum(axis=0)
        choice = np.minimum(choice, len(channel.operators) - 1)
        out = amps
        for i, unitary in enumerate(channel._mix_unitaries):
            if unitary is None or channel._mix_is_identity[i]:
                continue
            mask = choice == i
            if not np.any(mask):
                continue
            if out is amps:
                out = amps.copy()
            out[mask] = apply_matrix(out[mask], unitary, qubits, n_qubits)
        return out

    if channel._effect_diagonals is not None:
        # diagonal effects: probabilities from local basis populations
        idx = np.arange(amps.shape[1])
        local = np.zeros(amps.shape[1], dtype=np.int64)
        for j, q in enumerate(qubits):  # qubits[0] = most significant local bit
            local |= ((idx >> q) & 1) << (len(qubits) - 1 - j)
        populations = np.zeros((batch, k_local))
        mags = np.abs(amps) ** 2
        for b in range(k_local):
            populations[:, b] = mags[:, local == b].sum(axis=1)
        probs = channel._effect_diagonals @ populations.T
    else:
        # general channel: local reduced Gram matrix per trajectory
        tensor = amps.reshape((batch,) + (2,) * n_qubits)
        axes = [1 + (n_qubits - 1 - q) for q in qubits]
        tensor = np.moveaxis(tensor, axes, range(1, 1 + len(qubits)))
        m = tensor.reshape(batch, k_local, -1)
        gram = np.einsum("bir,bjr->bij", m, m.conj())
        effects = channel.effects()
        probs = np.empty((len(effects), batch))
        for i, eff in enumerate(effects):
            probs[i] = np.einsum("ij,bji->b", eff, gram).real

    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=0, keepdims=True)
    choice = (u[None, :] > np.cumsum(probs, axis=0)).sum(axis=0)
    choice = np.minimum(choice, len(channel.operators) - 1)
    out = amps
    for i, op in enumerate(channel.operators):
        mask = choice == i
        if not np.any(mask):
            continue
        sub = apply_matrix(out[mask], op, qubits, n_qubits)
        norms = np.linalg.norm(sub, axis=1, keepdims=True)
        if out is amps:
            out = amps.copy()
        out[mask] = sub / norms
    return out


def execute_trajectories(
    circuit: QuantumCircuit, model: NoiseModel, trajectories: int, rng: Rng
) -> float:
    """Mean ancilla <Z> over stochastic Kraus trajectories of a lowered circuit.

    After every gate the assigned channels are applied with operator i chosen
    with probability ||K_i psi||^2 and the state renormalized. MEASURE
    channels fire before the measurement; the ancilla expectation itself is
    computed exactly from each trajectory's final state.
    """
    if trajectories < 1:
        raise ValueError(f"trajectories must be >= 1, got {trajectories}")
    for g in circuit.gates:
        if g.kind not in BASIS_KINDS:
            raise ValueError(f"circuit is not lowered: contains {g.kind}")
    if circuit.measured != (0,):
        raise ValueError(f"circuit must measure exactly qubit 0, measures {circuit.measured}")
    n = circuit.n_qubits
    amps = np.zeros((trajectories, 2**n), dtype=np.complex128)
    amps[:, 0] = 1.0
    for gate in circuit.gates:
        apps = model.channels_for(gate)
        if gate.kind == "MEASURE":
            for app in apps:
                amps = _apply_channel_batch(amps, app.channel, gate.qubits, n, rng)
            continue
        amps = apply_gate(amps, gate, n)
        for app in apps:
            if app.scope == "pair":
                amps = _apply_channel_batch(amps, app.channel, gate.qubits, n, rng)
            else:
                for q in gate.qubits:
                    amps = _apply_channel_batch(amps, app.channel, (q,), n, rng)
    idx = np.arange(2**n)
    p1 = np.sum(np.abs(amps[:, (idx & 1) == 1]) ** 2, axis=1)
    z_per_traj = 1.0 - 2.0 * p1
    return float(np.mean(z_per_traj))
