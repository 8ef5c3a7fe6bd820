"""Tests for decoders, the generator network, and both reconstruction engines."""

import math

import numpy as np
import pytest

from qsnapshot.circuit import QuantumCircuit, mottonen_prepare
from qsnapshot.core import (
    DensityMatrix,
    Rng,
    StateVector,
    overlap_fidelity,
    random_pure_state,
)
from qsnapshot.estimators import (
    Adam,
    EsConfig,
    FidelityOracle,
    GeneratorNetwork,
    GradientConfig,
    HilbertSchmidtOracle,
    RankDeficientError,
    ReconstructionReport,
    UhlmannOracle,
    decode_candidate_density,
    decode_candidate_state,
    decode_candidate_unitary,
    reconstruct,
    train_gradient,
    train_qeswap,
)

SQ2 = 1.0 / math.sqrt(2.0)


class TestDecodeState:
    def test_basis(self):
        s = decode_candidate_state(np.array([1.0, 0, 0, 0]))
        assert np.allclose(s.amplitudes, [1, 0])

    def test_phase_irrelevant(self):
        s = decode_candidate_state(np.array([0.0, 0, 0, 1]))
        assert overlap_fidelity(s, StateVector.computational_basis(1, 1)) == pytest.approx(1.0)

    def test_normalization(self):
        s = decode_candidate_state(np.array([3.0, 0, 4, 0]))
        assert np.allclose(s.amplitudes, [0.6, 0.8])

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            decode_candidate_state(np.zeros(4))

    def test_bad_length(self):
        with pytest.raises(ValueError):
            decode_candidate_state(np.ones(6))

    def test_unit_norm_always(self):
        rng = Rng(0)
        for _ in range(50):
            s = decode_candidate_state(rng.normal(8))
            assert abs(np.linalg.norm(s.amplitudes) - 1.0) < 1e-12


class TestDecodeUnitary:
    @staticmethod
    def encode(m):
        raw = np.empty(2 * m.size)
        raw[0::2] = m.real.ravel()
        raw[1::2] = m.imag.ravel()
        return raw

    def test_identity(self):
        q = decode_candidate_unitary(self.encode(np.eye(2, dtype=complex)))
        assert np.allclose(q.entries, np.eye(2), atol=1e-12)

    def test_scaling_absorbed(self):
        q = decode_candidate_unitary(self.encode(2.0 * np.eye(2, dtype=complex)))
        assert np.allclose(q.entries, np.eye(2), atol=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            decode_candidate_unitary(self.encode(np.zeros((2, 2), dtype=complex)))

    def test_unitarity_random(self):
        rng = Rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 4))
            q = decode_candidate_unitary(rng.normal(2 * 4**n))
            d = 2**n
            assert np.max(np.abs(q.entries.conj().T @ q.entries - np.eye(d))) < 1e-10


class TestDecodeDensity:
    @staticmethod
    def encode(m):
        raw = np.empty(2 * m.size)
        raw[0::2] = m.real.ravel()
        raw[1::2] = m.imag.ravel()
        return raw

    def test_pure_projector(self):
        rho = decode_candidate_density(self.encode(np.diag([1.0, 0.0]).astype(complex)))
        assert np.allclose(rho.entries, np.diag([1.0, 0.0]), atol=1e-12)

    def test_maximally_mixed(self):
        rho = decode_candidate_density(self.encode(np.eye(2, dtype=complex)))
        assert np.allclose(rho.entries, np.eye(2) / 2, atol=1e-12)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            decode_candidate_density(np.zeros(8))

    def test_invariants_random(self):
        rng = Rng(2)
        for _ in range(50):
            rho = decode_candidate_density(rng.normal(8))
            vals = np.linalg.eigvalsh(rho.entries)
            assert abs(np.trace(rho.entries).real - 1.0) < 1e-10
            assert vals[0] > -1e-9


class TestOracles:
    def test_counter_increments(self):
        target = mottonen_prepare(random_pure_state(1, Rng(3)))
        oracle = FidelityOracle(target)
        oracle.evaluate(StateVector.computational_basis(1))
        oracle.evaluate(StateVector.computational_basis(1))
        assert oracle.evaluations == 2

    def test_analytic_matches_direct_overlap(self):
        t = random_pure_state(2, Rng(4))
        oracle = FidelityOracle(mottonen_prepare(t))
        c = random_pure_state(2, Rng(5))
        assert oracle.evaluate(c) == pytest.approx(overlap_fidelity(t, c), abs=1e-9)

    def test_shots_mode_needs_count_and_rng(self):
        prep = QuantumCircuit(1)
        with pytest.raises(ValueError):
            FidelityOracle(prep, mode="shots")
        with pytest.raises(ValueError):
            FidelityOracle(prep, mode="shots", shots=100)  # missing rng

    def test_noisy_mode_needs_model(self):
        with pytest.raises(ValueError):
            FidelityOracle(QuantumCircuit(1), mode="noisy", rng=Rng(0))

    def test_hilbert_schmidt_oracle(self):
        rho = DensityMatrix.maximally_mixed(1)
        assert HilbertSchmidtOracle(rho).evaluate(rho) == pytest.approx(0.5)

    def test_uhlmann_oracle(self):
        rho = DensityMatrix.maximally_mixed(1)
        assert UhlmannOracle(rho).evaluate(rho) == pytest.approx(1.0, abs=1e-8)

    def test_oracle_opacity(self):
        """Estimators touch nothing on the oracle but evaluate/n_qubits/evaluations."""

        class SpyOracle:
            n_qubits = 1

            def __init__(self):
                self.target = mottonen_prepare(random_pure_state(1, Rng(6)))
                self.inner = FidelityOracle(self.target)
                self.accessed = set()

            def __getattr__(self, name):
                raise AssertionError(f"estimator accessed oracle attribute {name!r}")

            def evaluate(self, candidate):
                return self.inner.evaluate(candidate)

            @property
            def evaluations(self):
                return self.inner.evaluations

        spy = SpyOracle()
        report = train_qeswap(spy, 1, EsConfig(max_iter=3, seed=0, stop_threshold=2.0))
        assert report.epochs == 3


class TestGeneratorNetwork:
    def test_shapes(self):
        net = GeneratorNetwork(4, Rng(7))
        dims = [w.shape for w in net.weights]
        assert dims == [(256, 512), (512, 1024), (1024, 1024), (1024, 512),
                        (512, 256), (256, 4)]

    def test_backward_matches_numeric_gradient(self):
        net = GeneratorNetwork(4, Rng(8))
        z = Rng(9).uniform(256)
        direction = Rng(10).normal(4)

        def scalar(ws):
            saved = net.weights[0]
            net.weights[0] = ws
            out, _ = net.forward(z)
            net.weights[0] = saved
            return float(out @ direction)

        out, cache = net.forward(z)
        grads_w, _ = net.backward(cache, direction)
        w0 = net.weights[0]
        eps = 1e-6
        rng = Rng(11)
        for _ in range(5):
            i = int(rng.integers(0, w0.shape[0]))
            j = int(rng.integers(0, w0.shape[1]))
            bumped = w0.copy()
            bumped[i, j] += eps
            plus = scalar(bumped)
            bumped[i, j] -= 2 * eps
            minus = scalar(bumped)
            numeric = (plus - minus) / (2 * eps)
            assert grads_w[0][i, j] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


class TestAdam:
    def test_minimizes_quadratic(self):
        p = np.array([5.0])
        adam = Adam([p.shape], lr=0.1)
        for _ in range(500):
            adam.step([p], [2 * p])
        assert abs(p[0]) < 1e-3


class TestReport:
    def test_best_must_match_trace(self):
        with pytest.raises(ValueError):
            ReconstructionReport("qeswap", "statevector", 1, 0.5, 2, 100,
                                 [0.4, 0.9], 0.1, False, 0)

    def test_json_schema_keys(self):
        r = ReconstructionReport("qeswap", "statevector", 1, 0.9, 2, 100,
                                 [0.4, 0.9], 0.1, False, 0)
        assert set(r.to_json_dict().keys()) == {
            "method", "representation", "n_qubits", "best_fidelity", "epochs",
            "oracle_evals", "fidelity_trace", "wall_time_s", "mixed_state_flag",
            "seed",
        }


class TestQESwap:
    def test_converges_on_zero_target(self):
        oracle = FidelityOracle(QuantumCircuit(1))
        report = train_qeswap(oracle, 1, EsConfig(max_iter=20, seed=0,
                                                  stop_threshold=0.99))
        assert report.best_fidelity >= 0.99
        assert report.epochs <= 20

    def test_evaluation_accounting_exact(self):
        oracle = FidelityOracle(mottonen_prepare(random_pure_state(1, Rng(12))))
        config = EsConfig(population=50, max_iter=7, seed=1, stop_threshold=2.0)
        report = train_qeswap(oracle, 1, config)
        assert report.oracle_evals == 7 * 50
        assert oracle.evaluations == report.oracle_evals

    def test_zero_spread_skips_update(self):
        class ConstantOracle:
            n_qubits = 1
            evaluations = 0

            def evaluate(self, candidate):
                self.evaluations += 1
                return 0.5

        report = train_qeswap(ConstantOracle(), 1,
                              EsConfig(max_iter=3, seed=2, stop_threshold=2.0))
        assert report.best_fidelity == 0.5

    def test_advantage_translation_invariance(self):
        # adding a constant to every reward leaves the trajectory identical
        base = FidelityOracle(mottonen_prepare(random_pure_state(1, Rng(13))))

        class ShiftedOracle:
            n_qubits = 1

            def __init__(self, shift):
                self.inner = FidelityOracle(
                    mottonen_prepare(random_pure_state(1, Rng(13))))
                self.shift = shift
                self.evaluations = 0

            def evaluate(self, candidate):
                self.evaluations += 1
                return self.inner.evaluate(candidate) + self.shift

        cfg = dict(max_iter=4, seed=3, stop_threshold=2.0)
        r0 = train_qeswap(ShiftedOracle(0.0), 1, EsConfig(**cfg))
        r1 = train_qeswap(ShiftedOracle(0.17), 1, EsConfig(**cfg))
        assert np.allclose(np.array(r1.fidelity_trace) - 0.17,
                           r0.fidelity_trace, atol=1e-12)

    def test_best_is_max_of_trace(self):
        oracle = FidelityOracle(mottonen_prepare(random_pure_state(2, Rng(14))))
        report = train_qeswap(oracle, 2, EsConfig(max_iter=10, seed=4,
                                                  stop_threshold=2.0))
        assert report.best_fidelity == max(report.fidelity_trace)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            EsConfig(population=1)
        with pytest.raises(ValueError):
            EsConfig(sigma=0.0)


class TestGradient:
    def test_early_stop_on_degenerate_oracle(self):
        class AlwaysOne:
            n_qubits = 1
            evaluations = 0

            def evaluate(self, candidate):
                self.evaluations += 1
                return 1.0

        report = train_gradient(AlwaysOne(), 1, GradientConfig(epochs=50, seed=0))
        assert report.epochs == 1
        assert report.best_fidelity == 1.0

    def test_evaluation_accounting_exact(self):
        # full-budget run: evals == epochs * (1 + 4d), d = 2^n
        oracle = FidelityOracle(mottonen_prepare(random_pure_state(1, Rng(15))))
        report = train_gradient(oracle, 1,
                                GradientConfig(epochs=3, seed=1, stop_threshold=2.0))
        assert report.oracle_evals == 3 * (1 + 4 * 2)
        assert oracle.evaluations == report.oracle_evals

    def test_finite_difference_gradient_consistency(self):
        # the engine's central difference at eps agrees with an independent
        # central difference at eps/10 on the same decoded-fidelity map
        target = random_pure_state(1, Rng(16))
        oracle = FidelityOracle(mottonen_prepare(target))
        net = GeneratorNetwork(4, Rng(17))
        z = Rng(18).uniform(256)
        raw, _ = net.forward(z)
        raw = raw / np.linalg.norm(raw)  # unit scale keeps curvature moderate

        def loss(r):
            return 1.0 - oracle.evaluate(decode_candidate_state(r))

        for eps in (1e-3,):
            for j in range(4):
                bump = np.zeros(4)
                bump[j] = eps
                g_eng = (loss(raw + bump) - loss(raw - bump)) / (2 * eps)
                bump[j] = eps / 10
                g_ref = (loss(raw + bump) - loss(raw - bump)) / (2 * eps / 10)
                assert g_eng == pytest.approx(g_ref, rel=1e-3, abs=1e-9)

    def test_converges_on_one_qubit(self):
        oracle = FidelityOracle(QuantumCircuit(1))
        report = train_gradient(oracle, 1, GradientConfig(epochs=200, seed=2,
                                                          stop_threshold=0.99))
        assert report.best_fidelity >= 0.99


class TestReconstructDispatch:
    def test_invalid_combinations(self):
        oracle = FidelityOracle(QuantumCircuit(1))
        with pytest.raises(ValueError):
            reconstruct("newton", "statevector", oracle)
        with pytest.raises(ValueError):
            reconstruct("qeswap", "mps", oracle)

    def test_unitary_representation_converges(self):
        target = random_pure_state(1, Rng(19))
        oracle = FidelityOracle(mottonen_prepare(target))
        report = reconstruct("qeswap", "unitary", oracle,
                             EsConfig(max_iter=40, seed=5, stop_threshold=0.99))
        assert report.best_fidelity >= 0.99
        assert report.epochs <= 40
        assert not report.mixed_state_flag

    def test_density_representation_sets_flag(self):
        target = DensityMatrix.maximally_mixed(1)
        report = reconstruct("qeswap", "density", HilbertSchmidtOracle(target),
                             EsConfig(max_iter=5, seed=6, stop_threshold=2.0),
                             n_qubits=1)
        assert report.mixed_state_flag

    def test_plus_target_statevector(self):
        target = StateVector.from_amplitudes([SQ2, SQ2])
        oracle = FidelityOracle(mottonen_prepare(target))
        report = reconstruct("qeswap", "statevector", oracle,
                             EsConfig(max_iter=30, seed=7, stop_threshold=0.99))
        assert report.best_fidelity >= 0.99
