"""Reconstruction engines driven solely by a fidelity signal.

Two engines: a gradient-trained neural generator (finite differences across
the non-differentiable fidelity boundary, analytic backpropagation inside the
network, Adam updates) and QESwap, a population evolutionary strategy. Each
runs against one of three representation adapters: state vector, unitary via
QR, or density matrix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .circuit import (
    QuantumCircuit,
    ancilla_expectation,
    build_swap_test,
    lower_to_basis,
    mottonen_prepare,
    sample_shots,
)
from .core import (
    DensityMatrix,
    Rng,
    StateVector,
    UnitaryMatrix,
    hilbert_schmidt_overlap,
    uhlmann_fidelity,
)
from .noise import NoiseModel, execute_trajectories

LATENT_DIM = 256
HIDDEN_SIZES = (512, 1024, 1024, 512, 256)


class RankDeficientError(ValueError):
    """Decoded matrix is numerically rank-deficient; caller should perturb."""


# ---------------------------------------------------------------------------
# Fidelity oracles


class FidelityOracle:
    """SWAP-test fidelity signal against an opaque target preparation.

    Estimators never see the target's amplitudes; the only access path is
    :meth:`evaluate`. Modes: "analytic" (exact ancilla <Z>), "shots"
    (finite-sample estimate), "noisy" (trajectory average under a noise
    model on the lowered circuit).
    """

    def __init__(
        self,
        target_prep: QuantumCircuit,
        mode: str = "analytic",
        shots: int | None = None,
        noise_model: NoiseModel | None = None,
        trajectories: int = 2000,
        rng: Rng | None = None,
    ):
        if mode not in ("analytic", "shots", "noisy"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        if mode == "shots" and (shots is None or shots < 1):
            raise ValueError("shots mode requires a positive shot count")
        if mode == "noisy" and noise_model is None:
            raise ValueError("noisy mode requires a noise model")
        if mode in ("shots", "noisy") and rng is None:
            raise ValueError(f"{mode} mode requires an rng")
        self._target_prep = target_prep
        self.n_qubits = target_prep.n_qubits
        self.mode = mode
        self._shots = shots
        self._model = noise_model
        self._trajectories = trajectories
        self._rng = rng
        self.evaluations = 0

    def evaluate(self, candidate: StateVector) -> float:
        """One SWAP test of the candidate against a re-prepared target."""
        self.evaluations += 1
        test = build_swap_test(
            self.n_qubits, self._target_prep, mottonen_prepare(candidate)
        )
        if self.mode == "analytic":
            return float(ancilla_expectation(test))
        if self.mode == "shots":
            result = sample_shots(test, self._shots, self._rng)
            return 2.0 * result.probability("0") - 1.0
        lowered = lower_to_basis(test)
        return execute_trajectories(lowered, self._model, self._trajectories, self._rng)


class HilbertSchmidtOracle:
    """Tr(rho sigma) signal against a fixed target density matrix.

    This is what a SWAP test actually measures on mixed inputs; it drives the
    density-representation reconstruction and exhibits the mixed-state
    plateau.
    """

    def __init__(self, target: DensityMatrix):
        self._target = target
        self.n_qubits = target.n_qubits
        self.evaluations = 0

    def evaluate(self, candidate: DensityMatrix) -> float:
        self.evaluations += 1
        return hilbert_schmidt_overlap(self._target, candidate)


class UhlmannOracle:
    """True mixed-state fidelity signal; needs target access, so it is a
    validation/diagnostic oracle only, never a hardware-realizable signal."""

    def __init__(self, target: DensityMatrix):
        self._target = target
        self.n_qubits = target.n_qubits
        self.evaluations = 0

    def evaluate(self, candidate: DensityMatrix) -> float:
        self.evaluations += 1
        return uhlmann_fidelity(self._target, candidate)


# ---------------------------------------------------------------------------
# Representation adapters


def decode_candidate_state(raw: np.ndarray) -> StateVector:
    """Pair consecutive entries as (re, im) and normalize to a unit vector."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size % 2 != 0:
        raise ValueError(f"raw vector must have even length, got shape {raw.shape}")
    d = raw.size // 2
    n = int(np.round(np.log2(d)))
    if 2**n != d:
        raise ValueError(f"decoded dimension {d} is not a power of two")
    return StateVector.normalized(raw[0::2] + 1j * raw[1::2])


def _decode_matrix(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size % 2 != 0:
        raise ValueError(f"raw vector must have even length, got shape {raw.shape}")
    half = raw.size // 2
    d = int(np.round(math.sqrt(half)))
    if d * d != half or 2 ** int(np.round(np.log2(d))) != d:
        raise ValueError(f"raw length {raw.size} does not encode a 2^n x 2^n matrix")
    return (raw[0::2] + 1j * raw[1::2]).reshape(d, d)


def decode_candidate_unitary(raw: np.ndarray) -> UnitaryMatrix:
    """QR-orthogonalize the decoded matrix; R's diagonal made real-positive."""
    m = _decode_matrix(raw)
    d = m.shape[0]
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    if np.min(np.abs(diag)) < 1e-12 * max(1.0, float(np.max(np.abs(m)))):
        raise RankDeficientError("decoded matrix is numerically rank-deficient")
    q = q * (diag / np.abs(diag))
    return UnitaryMatrix(int(np.round(np.log2(d))), q)


def decode_candidate_density(raw: np.ndarray) -> DensityMatrix:
    """rho = M M^dagger / Tr(M M^dagger) for the unconstrained decoded M."""
    m = _decode_matrix(raw)
    gram = m @ m.conj().T
    tr = np.trace(gram).real
    if tr < 1e-300:
        raise ValueError("cannot normalize a zero matrix")
    rho = gram / tr
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(int(np.round(np.log2(m.shape[0]))), rho)


# ---------------------------------------------------------------------------
# Generator network and Adam


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


class GeneratorNetwork:
    """Fully connected 256 -> 512 -> 1024 -> 1024 -> 512 -> 256 -> out stack.

    GELU after every layer except the last. Weights initialized uniformly in
    +-sqrt(6 / (fan_in + fan_out)); biases zero.
    """

    def __init__(self, out_dim: int, rng: Rng):
        sizes = (LATENT_DIM,) + HIDDEN_SIZES + (out_dim,)
        self.out_dim = out_dim
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            w = (2.0 * rng.uniform((fan_in, fan_out)) - 1.0) * bound
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def forward(self, z: np.ndarray):
        """Returns (raw output, cache for backward)."""
        pre_acts = []
        a = np.asarray(z, dtype=np.float64)
        activations = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = a @ w + b
            pre_acts.append(pre)
            a = pre if i == last else _gelu(pre)
            activations.append(a)
        return a, (pre_acts, activations)

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss w.r.t. all weights and biases."""
        pre_acts, activations = cache
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * _gelu_grad(pre_acts[i])
            grads_w[i] = np.outer(activations[i], delta)
            grads_b[i] = delta.copy()
            if i > 0:
                delta = delta @ self.weights[i].T
        return grads_w, grads_b


class Adam:
    """Adam with canonical beta/epsilon constants; lr is the tunable."""

    def __init__(self, shapes, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Reports and configs


@dataclass
class ReconstructionReport:
    """Outcome of one reconstruction run.

    ``fidelity_trace`` holds the oracle-reported fidelity per epoch (gradient)
    or the population-best per iteration (QESwap); ``validation_trace`` is
    optional instrumentation recorded by a harness-supplied probe and is not
    part of the serialized schema.
    """

    method: str
    representation: str
    n_qubits: int
    best_fidelity: float
    epochs: int
    oracle_evals: int
    fidelity_trace: list
    wall_time_s: float
    mixed_state_flag: bool
    seed: int
    final_candidate: object = None
    validation_trace: list = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        if self.fidelity_trace and abs(self.best_fidelity - max(self.fidelity_trace)) > 1e-12:
            raise ValueError("best_fidelity must equal the trace maximum")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "representation": self.representation,
            "n_qubits": self.n_qubits,
            "best_fidelity": self.best_fidelity,
            "epochs": self.epochs,
            "oracle_evals": self.oracle_evals,
            "fidelity_trace": self.fidelity_trace,
            "wall_time_s": self.wall_time_s,
            "mixed_state_flag": self.mixed_state_flag,
            "seed": self.seed,
        }


@dataclass
class GradientConfig:
    epochs: int = 200
    lr: float = 1e-4
    fd_epsilon: float = 1e-3
    scaling_factor: float = 100.0
    seed: int = 0
    stop_threshold: float = 0.999
    probe: object = None  # optional callable(candidate) -> float, instrumentation
    stop_on_probe: bool = False  # early-stop on the probe value (simulation-side)


@dataclass
class EsConfig:
    population: int = 50
    sigma: float = 0.1
    alpha: float = 0.05
    max_iter: int = 100
    seed: int = 0
    stop_threshold: float = 0.999
    probe: object = None
    stop_on_probe: bool = False

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.sigma <= 0 or self.alpha <= 0:
            raise ValueError("sigma and alpha must be positive")


def _decode_with_retry(decoder, raw: np.ndarray, rng: Rng):
    for attempt in range(5):
        try:
            return decoder(raw)
        except RankDeficientError:
            raw = raw + 1e-6 * rng.normal(raw.size)
    return decoder(raw)


# ---------------------------------------------------------------------------
# Engines


def _run_gradient(oracle, raw_dim: int, decoder, config: GradientConfig,
                  method: str, representation: str, n_qubits: int,
                  mixed_flag: bool) -> ReconstructionReport:
    start = time.perf_counter()
    rng = Rng(config.seed)
    net = GeneratorNetwork(raw_dim, rng)
    shapes = [w.shape for w in net.weights] + [b.shape for b in net.biases]
    adam = Adam(shapes, lr=config.lr)
    evals = 0

    def evaluate(raw):
        nonlocal evals
        evals += 1
        return oracle.evaluate(_decode_with_retry(decoder, raw, rng))

    trace = []
    validation = []
    best_f = -math.inf
    best_candidate = None
    epochs_used = 0
    for epoch in range(config.epochs):
        epochs_used = epoch + 1
        z = rng.uniform(LATENT_DIM)
        raw, cache = net.forward(z)
        candidate = _decode_with_retry(decoder, raw, rng)
        evals += 1
        f = oracle.evaluate(candidate)
        trace.append(f)
        if f > best_f:
            best_f = f
            best_candidate = candidate
        stop_value = f
        if config.probe is not None:
            validation.append(config.probe(candidate))
            if config.stop_on_probe:
                stop_value = validation[-1]
        if stop_value >= config.stop_threshold:
            break
        # central differences across the oracle boundary only
        grad_raw = np.empty(raw_dim)
        for j in range(raw_dim):
            bump = np.zeros(raw_dim)
            bump[j] = config.fd_epsilon
            f_plus = evaluate(raw + bump)
            f_minus = evaluate(raw - bump)
            grad_raw[j] = -(f_plus - f_minus) / (2.0 * config.fd_epsilon)
        grads_w, grads_b = net.backward(cache, grad_raw * config.scaling_factor)
        adam.step(net.weights + net.biases, grads_w + grads_b)
    return ReconstructionReport(
        method=method,
        representation=representation,
        n_qubits=n_qubits,
        best_fidelity=best_f,
        epochs=epochs_used,
        oracle_evals=evals,
        fidelity_trace=trace,
        wall_time_s=time.perf_counter() - start,
        mixed_state_flag=mixed_flag,
        seed=config.seed,
        final_candidate=best_candidate,
        validation_trace=validation,
    )


def _run_qeswap(oracle, raw_dim: int, decoder, config: EsConfig,
                method: str, representation: str, n_qubits: int,
                mixed_flag: bool) -> ReconstructionReport:
    start = time.perf_counter()
    rng = Rng(config.seed)
    w = rng.normal(raw_dim)
    evals = 0
    trace = []
    validation = []
    best_f = -math.inf
    best_candidate = None
    iters_used = 0
    for iteration in range(config.max_iter):
        iters_used = iteration + 1
        noise = rng.normal((config.population, raw_dim))
        rewards = np.empty(config.population)
        iter_best_f = -math.inf
        iter_best_candidate = None
        for i in range(config.population):
            candidate = _decode_with_retry(decoder, w + config.sigma * noise[i], rng)
            evals += 1
            rewards[i] = oracle.evaluate(candidate)
            if rewards[i] > iter_best_f:
                iter_best_f = rewards[i]
                iter_best_candidate = candidate
        trace.append(float(iter_best_f))
        if iter_best_f > best_f:
            best_f = float(iter_best_f)
            best_candidate = iter_best_candidate
        stop_value = iter_best_f
        if config.probe is not None:
            validation.append(config.probe(iter_best_candidate))
            if config.stop_on_probe:
                stop_value = validation[-1]
        if stop_value >= config.stop_threshold:
            break
        spread = float(np.std(rewards))
        if spread < 1e-12:
            continue  # degenerate population: no update this iteration
        advantages = (rewards - rewards.mean()) / spread
        w = w + (config.alpha / (config.population * config.sigma)) * (
            advantages @ noise
        )
    return ReconstructionReport(
        method=method,
        representation=representation,
        n_qubits=n_qubits,
        best_fidelity=best_f,
        epochs=iters_used,
        oracle_evals=evals,
        fidelity_trace=trace,
        wall_time_s=time.perf_counter() - start,
        mixed_state_flag=mixed_flag,
        seed=config.seed,
        final_candidate=best_candidate,
        validation_trace=validation,
    )


def train_gradient(oracle, n_qubits: int, config: GradientConfig | None = None
                   ) -> ReconstructionReport:
    """Gradient-based state-vector reconstruction (loss 1 - F, Adam)."""
    if config is None:
        config = GradientConfig()
    return _run_gradient(
        oracle, 2 * 2**n_qubits, decode_candidate_state, config,
        "gradient", "statevector", n_qubits, False,
    )


def train_qeswap(oracle, n_qubits: int, config: EsConfig | None = None
                 ) -> ReconstructionReport:
    """QESwap state-vector reconstruction (standardized-advantage ES)."""
    if config is None:
        config = EsConfig()
    return _run_qeswap(
        oracle, 2 * 2**n_qubits, decode_candidate_state, config,
        "qeswap", "statevector", n_qubits, False,
    )


def reconstruct(method: str, representation: str, oracle, config=None,
                n_qubits: int | None = None) -> ReconstructionReport:
    """Dispatch one of the 3 x 2 (representation, engine) strategies.

    For the unitary representation the oracle candidate is Q|0...0>; for the
    density representation the oracle signal is the Hilbert-Schmidt overlap
    and the report carries the mixed-state caveat flag.
    """
    if method not in ("gradient", "qeswap"):
        raise ValueError(f"unknown method {method!r}")
    if representation not in ("statevector", "unitary", "density"):
        raise ValueError(f"unknown representation {representation!r}")
    if n_qubits is None:
        n_qubits = oracle.n_qubits
    d = 2**n_qubits
    if representation == "statevector":
        raw_dim, decoder, mixed = 2 * d, decode_candidate_state, False
    elif representation == "unitary":
        raw_dim, mixed = 2 * d * d, False

        def decoder(raw):
            return decode_candidate_unitary(raw).apply_to_zero()

    else:
        raw_dim, decoder, mixed = 2 * d * d, decode_candidate_density, True
    if method == "gradient":
        cfg = config if config is not None else GradientConfig()
        return _run_gradient(oracle, raw_dim, decoder, cfg, method,
                             representation, n_qubits, mixed)
    cfg = config if config is not None else EsConfig()
    return _run_qeswap(oracle, raw_dim, decoder, cfg, method,
                       representation, n_qubits, mixed)
