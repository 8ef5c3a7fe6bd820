"""Experiment runner reproducing the desk-scale studies.

Cohorts over random targets, standard-state benchmarks, entropy matching,
mid-circuit snapshots, the mixed-state limitation diagnostic, and plot-ready
CSV/JSON emission. Every entry point is deterministic in (spec, seed); wall
times and timestamps never enter the emitted data (an optional created_at
metadata field is the single exception, off by default).
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .circuit import QuantumCircuit, execute_statevector, mottonen_prepare
from .core import (
    DensityMatrix,
    Rng,
    StateVector,
    half_chain_entropy,
    overlap_fidelity,
    random_pure_state,
    uhlmann_fidelity,
)
from .estimators import (
    EsConfig,
    FidelityOracle,
    GradientConfig,
    HilbertSchmidtOracle,
    ReconstructionReport,
    UhlmannOracle,
    reconstruct,
)
from .noise import NoiseParams, calibrated_noise_model

SQ2 = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Standard-state catalog


@dataclass(frozen=True)
class StandardState:
    name: str
    vector: StateVector

    @property
    def n_qubits(self) -> int:
        return self.vector.n_qubits


def _sv(amps) -> StateVector:
    return StateVector.from_amplitudes(np.asarray(amps, dtype=np.complex128))


def standard_states(n_qubits: int | None = None) -> list:
    """The benchmark catalog: 1-qubit basics, 2-qubit basis + Bell, 8 GHZ states.

    GHZ_k^(+/-) = (|0 b(k)> +/- |1 bbar(k)>)/sqrt(2) with b(k) the 2-bit
    pattern of k (written most-significant qubit first) and bbar its
    complement.
    """
    catalog = [
        StandardState("zero", _sv([1, 0])),
        StandardState("one", _sv([0, 1])),
        StandardState("plus", _sv([SQ2, SQ2])),
        StandardState("minus", _sv([SQ2, -SQ2])),
    ]
    for k in range(4):
        amps = np.zeros(4)
        amps[k] = 1.0
        catalog.append(StandardState(f"basis_{k:02b}", _sv(amps)))
    bell = {
        "bell_phi_plus": ([0, 3], +1),
        "bell_phi_minus": ([0, 3], -1),
        "bell_psi_plus": ([1, 2], +1),
        "bell_psi_minus": ([1, 2], -1),
    }
    for name, (idx, sign) in bell.items():
        amps = np.zeros(4)
        amps[idx[0]] = SQ2
        amps[idx[1]] = sign * SQ2
        catalog.append(StandardState(name, _sv(amps)))
    for k in range(4):
        for sign, tag in ((+1, "plus"), (-1, "minus")):
            amps = np.zeros(8)
            amps[k] = SQ2                 # |0 b(k)>
            amps[4 + (3 - k)] = sign * SQ2  # |1 bbar(k)>
            catalog.append(StandardState(f"ghz_{k:02b}_{tag}", _sv(amps)))
    if n_qubits is not None:
        catalog = [s for s in catalog if s.n_qubits == n_qubits]
    return catalog


# ---------------------------------------------------------------------------
# Experiment specification


@dataclass
class ExperimentSpec:
    """One cohort configuration; deterministic in (spec, seed)."""

    method: str = "qeswap"
    representation: str = "statevector"
    n_qubits: int = 1
    n_trials: int = 20
    noise: NoiseParams | None = None
    trajectories: int = 2000
    shots: int | None = None  # None = analytic expectation
    thresholds: tuple = (0.95, 0.99)
    seed: int = 0
    max_epochs: int | None = None
    stop_threshold: float | None = None
    population: int = 50
    sigma: float = 0.1
    alpha: float = 0.05

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not all(0.0 < t <= 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1]")
        self.thresholds = tuple(sorted(self.thresholds))

    def resolved_stop(self) -> float:
        if self.stop_threshold is not None:
            return self.stop_threshold
        return 0.99 if self.noise is not None else 0.999

    def estimator_config(self, seed: int, probe=None):
        # Under noise the raw SWAP signal is attenuated well below 1, so the
        # stopping rule watches the classical validation probe instead.
        on_probe = self.noise is not None and probe is not None
        if self.method == "gradient":
            return GradientConfig(
                epochs=self.max_epochs or 200,
                seed=seed,
                stop_threshold=self.resolved_stop(),
                probe=probe,
                stop_on_probe=on_probe,
            )
        return EsConfig(
            population=self.population,
            sigma=self.sigma,
            alpha=self.alpha,
            max_iter=self.max_epochs or 100,
            seed=seed,
            stop_threshold=self.resolved_stop(),
            probe=probe,
            stop_on_probe=on_probe,
        )

    def to_json_dict(self) -> dict:
        data = asdict(self)
        data["noise"] = None if self.noise is None else asdict(self.noise)
        data["thresholds"] = list(self.thresholds)
        return data


def _make_oracle(spec: ExperimentSpec, target_prep: QuantumCircuit, rng: Rng):
    if spec.noise is not None:
        return FidelityOracle(
            target_prep,
            mode="noisy",
            noise_model=calibrated_noise_model(spec.noise),
            trajectories=spec.trajectories,
            rng=rng,
        )
    if spec.shots is not None:
        return FidelityOracle(target_prep, mode="shots", shots=spec.shots, rng=rng)
    return FidelityOracle(target_prep)


def _epochs_to(trace, threshold):
    for i, f in enumerate(trace):
        if f >= threshold:
            return i + 1
    return None


# ---------------------------------------------------------------------------
# Cohorts


@dataclass
class TrialResult:
    trial: int
    seed: int
    best_fidelity: float          # best oracle-reported value
    validation_fidelity: float    # best true overlap vs the known target
    epochs: int
    oracle_evals: int
    epochs_to_threshold: dict     # threshold -> first epoch reaching it, or None
    entropy_target: float | None
    entropy_recon: float | None
    validation_trace: list
    error: str | None = None


@dataclass
class CohortSummary:
    spec: ExperimentSpec
    trials: list
    mean_fidelity: float
    min_fidelity: float
    mean_epochs_to_threshold: dict
    pass_rate: dict

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "trials": [asdict(t) for t in self.trials],
            "aggregate": {
                "mean_fidelity": self.mean_fidelity,
                "min_fidelity": self.min_fidelity,
                "mean_epochs_to_threshold": {
                    str(k): v for k, v in self.mean_epochs_to_threshold.items()
                },
                "pass_rate": {str(k): v for k, v in self.pass_rate.items()},
            },
        }


def _aggregate(spec: ExperimentSpec, trials: list) -> CohortSummary:
    good = [t for t in trials if t.error is None]
    fids = [t.validation_fidelity for t in good]
    mean_epochs = {}
    pass_rate = {}
    for thr in spec.thresholds:
        reached = [t.epochs_to_threshold[thr] for t in good
                   if t.epochs_to_threshold[thr] is not None]
        mean_epochs[thr] = (sum(reached) / len(reached)) if reached else None
        pass_rate[thr] = len(reached) / len(trials) if trials else 0.0
    return CohortSummary(
        spec=spec,
        trials=trials,
        mean_fidelity=float(np.mean(fids)) if fids else 0.0,
        min_fidelity=float(min(fids)) if fids else 0.0,
        mean_epochs_to_threshold=mean_epochs,
        pass_rate=pass_rate,
    )


def run_trial(spec: ExperimentSpec, target: StateVector, trial_index: int,
              trial_rng: Rng) -> TrialResult:
    """One reconstruction of a known target, with classical validation probing."""
    target_prep = mottonen_prepare(target)

    def probe(candidate) -> float:
        return overlap_fidelity(candidate, target)

    oracle = _make_oracle(spec, target_prep, trial_rng.child(1))
    est_seed = trial_rng.child(2).seed
    config = spec.estimator_config(est_seed, probe=probe)
    report = reconstruct(spec.method, spec.representation, oracle,
                         config, spec.n_qubits)
    validation = report.validation_trace
    entropy_t = entropy_r = None
    if spec.n_qubits >= 2 and report.final_candidate is not None:
        entropy_t = half_chain_entropy(target)
        entropy_r = half_chain_entropy(report.final_candidate)
    return TrialResult(
        trial=trial_index,
        seed=est_seed,
        best_fidelity=report.best_fidelity,
        validation_fidelity=max(validation) if validation else 0.0,
        epochs=report.epochs,
        oracle_evals=report.oracle_evals,
        epochs_to_threshold={t: _epochs_to(validation, t) for t in spec.thresholds},
        entropy_target=entropy_t,
        entropy_recon=entropy_r,
        validation_trace=[float(v) for v in validation],
    )


def run_cohort(spec: ExperimentSpec) -> CohortSummary:
    """n_trials independent random targets reconstructed per the spec.

    Per-trial failures are recorded, not fatal. Threshold statistics use the
    classical validation fidelity trace (identical to the oracle trace in
    noiseless state-vector runs; the honest measure under noise).
    """
    root = Rng(spec.seed)
    trials = []
    for t in range(spec.n_trials):
        trial_rng = root.child(t)
        target = random_pure_state(spec.n_qubits, trial_rng.child(0))
        try:
            trials.append(run_trial(spec, target, t, trial_rng))
        except Exception as exc:  # noqa: BLE001 - cohort continues past bad trials
            trials.append(TrialResult(
                trial=t, seed=trial_rng.seed, best_fidelity=0.0,
                validation_fidelity=0.0, epochs=0, oracle_evals=0,
                epochs_to_threshold={thr: None for thr in spec.thresholds},
                entropy_target=None, entropy_recon=None,
                validation_trace=[], error=f"{type(exc).__name__}: {exc}",
            ))
    return _aggregate(spec, trials)


# ---------------------------------------------------------------------------
# Standard states


def run_standard_states(spec: ExperimentSpec) -> list:
    """Benchmark the catalog states of spec.n_qubits; returns table rows.

    Rows: {state, n_qubits, epochs_to_099, best_fidelity, epochs, error}.
    Failures become NA rows rather than aborting the sweep.
    """
    root = Rng(spec.seed)
    rows = []
    for i, std in enumerate(standard_states(spec.n_qubits)):
        try:
            result = run_trial(spec, std.vector, i, root.child(i))
            rows.append({
                "state": std.name,
                "n_qubits": std.n_qubits,
                "epochs_to_099": result.epochs_to_threshold.get(0.99),
                "best_fidelity": result.validation_fidelity,
                "epochs": result.epochs,
                "error": None,
            })
        except Exception as exc:  # noqa: BLE001 - NA row mirrors the table's NA cells
            rows.append({
                "state": std.name,
                "n_qubits": std.n_qubits,
                "epochs_to_099": None,
                "best_fidelity": None,
                "epochs": None,
                "error": f"{type(exc).__name__}: {exc}",
            })
    return rows


# ---------------------------------------------------------------------------
# Entropy analysis


def run_entropy_analysis(cohort: CohortSummary) -> dict:
    """Half-chain entropy comparison between targets and reconstructions.

    Returns {"pairs": sorted rows, "summary": distribution statistics}.
    """
    if cohort.spec.representation != "statevector":
        raise ValueError("entropy analysis requires state-vector reconstructions")
    pairs = []
    for t in cohort.trials:
        if t.error is not None or t.entropy_target is None:
            continue
        pairs.append({
            "trial": t.trial,
            "entropy_target": t.entropy_target,
            "entropy_recon": t.entropy_recon,
            "abs_difference": abs(t.entropy_target - t.entropy_recon),
            "fidelity": t.validation_fidelity,
        })
    pairs.sort(key=lambda row: row["entropy_target"])
    diffs = [p["abs_difference"] for p in pairs]
    summary = {
        "n_pairs": len(pairs),
        "mean_abs_difference": float(np.mean(diffs)) if diffs else None,
        "max_abs_difference": float(max(diffs)) if diffs else None,
        "mean_entropy_target": float(np.mean([p["entropy_target"] for p in pairs]))
        if pairs else None,
        "mean_entropy_recon": float(np.mean([p["entropy_recon"] for p in pairs]))
        if pairs else None,
    }
    return {"pairs": pairs, "summary": summary}


# ---------------------------------------------------------------------------
# Mid-circuit snapshots


def run_midcircuit_snapshot(target_circuit: QuantumCircuit, cut_index: int,
                            spec: ExperimentSpec) -> ReconstructionReport:
    """Reconstruct the state at a prefix cut of a target circuit.

    The oracle's target preparation is the first ``cut_index`` gates; the
    report's label records the cut position.
    """
    if cut_index < 0 or cut_index > len(target_circuit.gates):
        raise ValueError(
            f"cut_index {cut_index} outside [0, {len(target_circuit.gates)}]"
        )
    prefix = QuantumCircuit(target_circuit.n_qubits,
                            list(target_circuit.gates[:cut_index]))
    target = execute_statevector(
        prefix, StateVector.computational_basis(prefix.n_qubits)
    )

    def probe(candidate) -> float:
        return overlap_fidelity(candidate, target)

    rng = Rng(spec.seed)
    oracle = _make_oracle(spec, prefix, rng.child(1))
    config = spec.estimator_config(rng.child(2).seed, probe=probe)
    report = reconstruct(spec.method, spec.representation, oracle,
                         config, prefix.n_qubits)
    report.label = f"cut@{cut_index}"
    return report


# ---------------------------------------------------------------------------
# Mixed-state limitation diagnostic


def _random_rank2_density(n_qubits: int, rng: Rng) -> DensityMatrix:
    """Rank-2 mixed state leaning toward maximally mixed on its support."""
    d = 2**n_qubits
    lam = 0.55 + 0.25 * float(rng.uniform())
    m = rng.normal((d, 2)) + 1j * rng.normal((d, 2))
    q, _ = np.linalg.qr(m)
    rho = lam * np.outer(q[:, 0], q[:, 0].conj()) \
        + (1 - lam) * np.outer(q[:, 1], q[:, 1].conj())
    return DensityMatrix(n_qubits, 0.5 * (rho + rho.conj().T))


def run_mixed_state_diagnostic(n_qubits: int = 2, n_targets: int = 10,
                               seed: int = 0, max_iter: int = 300,
                               population: int = 50) -> dict:
    """Optimize density candidates against (a) the Hilbert-Schmidt signal and
    (b) the Uhlmann oracle on the same rank-2 mixed targets.

    The Hilbert-Schmidt signal is what a SWAP test delivers on mixed states
    and overstates similarity; (b) requires target access and is
    diagnostic-only. Returns per-target rows and summary counts.
    """
    root = Rng(seed)
    rows = []
    for i in range(n_targets):
        rng = root.child(i)
        target = _random_rank2_density(n_qubits, rng)
        results = {}
        for tag, oracle in (("hilbert_schmidt", HilbertSchmidtOracle(target)),
                            ("uhlmann", UhlmannOracle(target))):
            config = EsConfig(
                population=population, max_iter=max_iter,
                seed=rng.child(1 if tag == "hilbert_schmidt" else 2).seed,
                stop_threshold=0.995,
            )
            report = reconstruct("qeswap", "density", oracle, config, n_qubits)
            results[tag] = {
                "signal_best": report.best_fidelity,
                "uhlmann_final": uhlmann_fidelity(target, report.final_candidate),
                "epochs": report.epochs,
            }
        rows.append({
            "target": i,
            "purity": float(np.trace(target.entries @ target.entries).real),
            **{f"{tag}_{k}": v for tag, res in results.items()
               for k, v in res.items()},
        })
    hs_below_095 = sum(1 for r in rows if r["hilbert_schmidt_uhlmann_final"] <= 0.95)
    uh_above_099 = sum(1 for r in rows if r["uhlmann_uhlmann_final"] >= 0.99)
    return {
        "rows": rows,
        "summary": {
            "n_targets": n_targets,
            "hs_driven_uhlmann_leq_095": hs_below_095,
            "uhlmann_driven_geq_099": uh_above_099,
        },
    }


# ---------------------------------------------------------------------------
# Emission


def _json_bytes(payload: dict) -> bytes:
    return json.dumps(payload, indent=2, sort_keys=True).encode() + b"\n"


def emit_report(cohort: CohortSummary, out_dir, include_timestamp: bool = False):
    """Write summary.json, trials.csv, and long-format trace.csv.

    All files are byte-deterministic in (spec, seed); the optional
    created_at timestamp is isolated to one metadata field of summary.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = cohort.to_json_dict()
    if include_timestamp:
        payload["meta"] = {
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat()
        }
    (out / "summary.json").write_bytes(_json_bytes(payload))

    trial_fields = ["trial", "seed", "best_fidelity", "validation_fidelity",
                    "epochs", "oracle_evals", "entropy_target", "entropy_recon",
                    "error"]
    for thr in cohort.spec.thresholds:
        trial_fields.append(f"epochs_to_{thr}")
    with open(out / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=trial_fields)
        writer.writeheader()
        for t in cohort.trials:
            row = {k: getattr(t, k) for k in trial_fields if hasattr(t, k)}
            for thr in cohort.spec.thresholds:
                row[f"epochs_to_{thr}"] = t.epochs_to_threshold[thr]
            writer.writerow(row)

    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "epoch", "fidelity"])
        for t in cohort.trials:
            for epoch, fid in enumerate(t.validation_trace, 1):
                writer.writerow([t.trial, epoch, fid])
    return [out / "summary.json", out / "trials.csv", out / "trace.csv"]


def load_trials_csv(path) -> list:
    """Round-trip loader for trials.csv (strings preserved as written)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def load_trace_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {"trial": int(r["trial"]), "epoch": int(r["epoch"]),
             "fidelity": float(r["fidelity"])}
            for r in csv.DictReader(fh)
        ]


def write_standard_rows(rows: list, out_path):
    fields = ["state", "n_qubits", "epochs_to_099", "best_fidelity", "epochs", "error"]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def write_entropy_rows(analysis: dict, out_path):
    fields = ["trial", "entropy_target", "entropy_recon", "abs_difference", "fidelity"]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(analysis["pairs"])
