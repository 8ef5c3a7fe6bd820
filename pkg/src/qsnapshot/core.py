"""Complex linear-algebra foundation: states, density matrices, fidelities, entropy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
UNITARY_TOL = 1e-10


class Rng:
    """Counter-based pseudo-random generator (Philox) with explicit seeding.

    Identical seed plus identical call sequence yields identical output.
    Independent streams are derived with :meth:`child`, never by sharing one
    generator across workers.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice_index(self, probabilities: np.ndarray) -> int:
        """Sample an index from a discrete distribution."""
        return int(self._gen.choice(len(probabilities), p=probabilities))

    def child(self, index: int) -> "Rng":
        """Derive an independent generator; deterministic in (seed, index)."""
        derived = np.random.SeedSequence([self.seed, int(index)])
        return Rng(int(derived.generate_state(1, np.uint64)[0]))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


@dataclass(frozen=True)
class StateVector:
    """Pure state of ``n_qubits`` qubits: 2^n complex amplitudes, unit norm.

    Qubit 0 is the least-significant bit of the basis index.
    """

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2 ** self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector norm {norm} deviates from 1 beyond {NORM_TOL}")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        """Build from an already-normalized amplitude sequence."""
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(np.round(np.log2(amps.size)))
        if 2**n != amps.size:
            raise ValueError(f"amplitude count {amps.size} is not a power of two")
        return cls(n, amps)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        """Build from an arbitrary nonzero amplitude sequence, normalizing it."""
        amps = np.asarray(amplitudes, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm < 1e-300:
            raise ValueError("cannot normalize a zero vector")
        return cls.from_amplitudes(amps / norm)

    @classmethod
    def computational_basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator over ``n_qubits``."""

    n_qubits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        d = 2**self.n_qubits
        mat = np.asarray(self.entries, dtype=np.complex128)
        if mat.shape != (d, d):
            raise ValueError(f"expected shape ({d}, {d}), got {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
            raise ValueError("matrix is not Hermitian within tolerance")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {NORM_TOL}")
        min_eig = float(np.linalg.eigvalsh(mat)[0])
        if min_eig < -PSD_TOL:
            raise ValueError(f"matrix has eigenvalue {min_eig} below -{PSD_TOL}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "entries", mat)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(state.n_qubits, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(n_qubits, np.eye(d, dtype=np.complex128) / d)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


@dataclass(frozen=True)
class UnitaryMatrix:
    """Unitary operator over ``n_qubits``; U†U = I within tolerance."""

    n_qubits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        d = 2**self.n_qubits
        mat = np.asarray(self.entries, dtype=np.complex128)
        if mat.shape != (d, d):
            raise ValueError(f"expected shape ({d}, {d}), got {mat.shape}")
        if np.max(np.abs(mat.conj().T @ mat - np.eye(d))) > UNITARY_TOL:
            raise ValueError("matrix is not unitary within tolerance")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "entries", mat)

    def apply_to_zero(self) -> StateVector:
        """The state this unitary prepares from |0...0>."""
        return StateVector(self.n_qubits, self.entries[:, 0])


def random_pure_state(n_qubits: int, rng: Rng) -> StateVector:
    """Sample a Haar-uniform pure state on ``n_qubits`` qubits.

    Real and imaginary parts of every amplitude are drawn i.i.d. from N(0, 1)
    and the vector is normalized; the Gaussian construction makes the result
    uniform on the complex unit sphere.
    """
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
    d = 2**n_qubits
    re = rng.normal(d)
    im = rng.normal(d)
    return StateVector.normalized(re + 1j * im)


def overlap_fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2; invariant under a global phase on either argument."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def hilbert_schmidt_overlap(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Tr(rho sigma); what a SWAP test actually measures on mixed inputs."""
    if rho.n_qubits != sigma.n_qubits:
        raise ValueError(f"qubit count mismatch: {rho.n_qubits} vs {sigma.n_qubits}")
    return float(np.trace(rho.entries @ sigma.entries).real)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def uhlmann_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, via Hermitian eigendecomposition."""
    if rho.n_qubits != sigma.n_qubits:
        raise ValueError(f"qubit count mismatch: {rho.n_qubits} vs {sigma.n_qubits}")
    sqrt_rho = _psd_sqrt(rho.entries)
    inner = sqrt_rho @ sigma.entries @ sqrt_rho
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    vals[vals < 1e-14] = 0.0  # sqrt would amplify eigenvalue dust to ~1e-7
    f = float(np.sum(np.sqrt(vals)) ** 2)
    return min(f, 1.0) if f <= 1.0 + 1e-8 else f


def partial_trace(state: StateVector, keep) -> DensityMatrix:
    """Reduced density matrix over the ``keep`` qubits of a pure state.

    ``keep`` must be a nonempty strict subset of {0..n-1}; the kept qubits
    retain their relative order (lowest kept index becomes qubit 0).
    """
    keep = sorted(set(keep))
    n = state.n_qubits
    if not keep:
        raise ValueError("keep set must be nonempty")
    if any(q < 0 or q >= n for q in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} qubits")
    if len(keep) == n:
        raise ValueError("keep set must be a strict subset of the qubits")
    # Tensor axes: axis j of the reshaped vector is qubit n-1-j.
    psi = state.amplitudes.reshape((2,) * n)
    keep_axes = [n - 1 - q for q in reversed(keep)]
    trace_axes = [ax for ax in range(n) if ax not in keep_axes]
    psi = np.moveaxis(psi, keep_axes + trace_axes, range(n))
    k = len(keep)
    mat = psi.reshape(2**k, 2 ** (n - k))
    rho = mat @ mat.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(k, rho)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) = -Tr(rho log2 rho) with 0 log 0 := 0; entropy in bits."""
    vals = np.linalg.eigvalsh(rho.entries)
    vals = vals[vals > 1e-15]
    return float(max(0.0, -np.sum(vals * np.log2(vals))))


def half_chain_keep(n_qubits: int) -> tuple:
    """The bipartition used for entropy analysis: first ceil(n/2) qubits."""
    if n_qubits < 2:
        raise ValueError("entropy bipartition needs at least 2 qubits")
    k = (n_qubits + 1) // 2
    return tuple(range(k))


def half_chain_entropy(state: StateVector) -> float:
    """Base-2 entanglement entropy across the half-chain bipartition."""
    return von_neumann_entropy(partial_trace(state, half_chain_keep(state.n_qubits)))
