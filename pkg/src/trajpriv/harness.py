"""Case-driven orchestration: run configurations, collect results, emit tables.

A *case* names a generator, a threat model, and the privacy knobs to spend.
Running a case walks (fold, repetition) combinations deterministically,
synthesizes data, privatizes conditional embeddings when configured,
evaluates the eleven metrics, and records exactly which budgets were spent
on which side (training vs generation).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .conditional import CondEmbedConfig, ConditionalEmbedder
from .dp import PrivacyBudget
from .geo import BoundingBox, TrajectoryDataset, kfold_split, split_dataset
from .io import load_dataset
from .markov import MarkovSynthesizer, SynthConfig
from .metrics import REPORT_COLUMNS, EvalConfig, MetricReport, evaluate_pair
from .validation import as_generator

__all__ = [
    "THREAT_MODELS",
    "CaseConfig",
    "RunResult",
    "run_case",
    "subsample_dataset",
    "save_results",
    "load_results",
    "write_report",
    "emit_density_grid",
]

THREAT_MODELS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class CaseConfig:
    """One named experiment configuration.

    ``eps_s`` is the training-side budget of an externally trained model; it
    is recorded in the results but not enforced here. The markov generator
    carries its own training-side budget. Threat models B/D therefore need
    either the markov generator or a positive ``eps_s``; C/D need a
    conditional mechanism or an unconditional generator (markov qualifies).
    """

    case_id: str
    threat_model: str = "D"
    generator: str = "markov"
    synth: SynthConfig = field(default_factory=SynthConfig)
    cond: CondEmbedConfig | None = None
    cond_embed_dim: int = 512
    eps_s: float | None = None
    seed: int = 0
    repetitions: int = 1
    folds: int = 1
    k_folds: int = 5
    n_synthetic: int = 3000
    n_eval: int = 3000
    external_path: str | None = None

    def __post_init__(self):
        if self.threat_model not in THREAT_MODELS:
            raise ValueError(f"threat_model must be one of {THREAT_MODELS}")
        if self.generator not in ("markov", "external-file"):
            raise ValueError("generator must be 'markov' or 'external-file'")
        if self.generator == "external-file" and not self.external_path:
            raise ValueError("external-file generator needs external_path")
        if self.threat_model in ("B", "D") and self.generator != "markov":
            if self.eps_s is None or self.eps_s <= 0:
                raise ValueError(
                    f"threat model {self.threat_model} needs a training-side "
                    "budget: use the markov generator or set eps_s > 0"
                )
        if self.threat_model in ("C", "D"):
            if self.cond is None and self.generator != "markov":
                raise ValueError(
                    f"threat model {self.threat_model} needs a conditional "
                    "mechanism or an unconditional generator"
                )
        if self.repetitions < 1 or self.folds < 1:
            raise ValueError("repetitions and folds must be >= 1")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.folds > self.k_folds:
            raise ValueError("folds cannot exceed k_folds")

    def to_dict(self) -> dict:
        d = {
            "case_id": self.case_id,
            "threat_model": self.threat_model,
            "generator": self.generator,
            "synth": {
                "eps_total": self.synth.eps_total,
                "budget_split": list(self.synth.budget_split),
                "g1": self.synth.g1,
                "g2": self.synth.g2,
                "threshold": self.synth.threshold,
                "max_walk_length": self.synth.max_walk_length,
                "max_states": self.synth.max_states,
            },
            "cond": None,
            "cond_embed_dim": self.cond_embed_dim,
            "eps_s": self.eps_s,
            "seed": self.seed,
            "repetitions": self.repetitions,
            "folds": self.folds,
            "k_folds": self.k_folds,
            "n_synthetic": self.n_synthetic,
            "n_eval": self.n_eval,
            "external_path": self.external_path,
        }
        if self.cond is not None:
            d["cond"] = {
                "mechanism": self.cond.mechanism,
                "epsilon": self.cond.epsilon,
                "delta": self.cond.delta,
                "clip_bound": self.cond.clip_bound,
                "d_out": self.cond.d_out,
                "m": self.cond.m,
                "worst_case_m_equals_n": self.cond.worst_case_m_equals_n,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseConfig":
        synth_d = dict(d.get("synth") or {})
        if "eps_total" in synth_d and synth_d["eps_total"] in ("inf", None):
            synth_d["eps_total"] = math.inf
        if "budget_split" in synth_d:
            synth_d["budget_split"] = tuple(synth_d["budget_split"])
        cond_d = d.get("cond")
        cond = CondEmbedConfig(**cond_d) if cond_d else None
        return cls(
            case_id=d["case_id"],
            threat_model=d.get("threat_model", "D"),
            generator=d.get("generator", "markov"),
            synth=SynthConfig(**synth_d),
            cond=cond,
            cond_embed_dim=d.get("cond_embed_dim", 512),
            eps_s=d.get("eps_s"),
            seed=d.get("seed", 0),
            repetitions=d.get("repetitions", 1),
            folds=d.get("folds", 1),
            k_folds=d.get("k_folds", 5),
            n_synthetic=d.get("n_synthetic", 3000),
            n_eval=d.get("n_eval", 3000),
            external_path=d.get("external_path"),
        )

    @classmethod
    def load(cls, path) -> "CaseConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class RunResult:
    """Outcome of one (fold, repetition) execution of a case."""

    case_id: str
    fold: int
    seed: int
    report: MetricReport
    budgets: dict
    wall_clock: float

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "fold": self.fold,
            "seed": self.seed,
            "metrics": self.report.to_dict(),
            "warnings": list(self.report.warnings),
            "budgets": self.budgets,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        report = MetricReport(**d["metrics"], warnings=tuple(d.get("warnings", ())))
        return cls(
            case_id=d["case_id"], fold=int(d["fold"]), seed=int(d["seed"]),
            report=report, budgets=d.get("budgets", {}),
            wall_clock=float(d.get("wall_clock", 0.0)),
        )


def _run_seed(base: int, fold: int, rep: int) -> int:
    # Folds and repetitions get independent deterministic streams.
    return base * 1_000_003 + fold * 1_009 + rep


def _budget_entries(config: CaseConfig, train: TrajectoryDataset,
                    train_budget: PrivacyBudget | None,
                    gen_budget: PrivacyBudget | None) -> dict:
    tm = config.threat_model
    entries: dict = {"train": None, "generation": None}
    if tm in ("B", "D"):
        if config.generator == "markov":
            entries["train"] = train_budget.to_dict()
        else:
            delta_s = 1.0 / len(train) ** 1.1
            entries["train"] = PrivacyBudget(
                config.eps_s, delta_s, adjacency="add-or-remove"
            ).to_dict()
    if tm in ("C", "D"):
        if gen_budget is not None:
            entries["generation"] = gen_budget.to_dict()
        else:
            # Unconditional generation never touches the test records.
            entries["generation"] = PrivacyBudget(0.0, 0.0).to_dict()
    return entries


def subsample_dataset(d: TrajectoryDataset, n: int,
                      rng: np.random.Generator) -> TrajectoryDataset:
    """Uniformly subsample n trajectories, keeping dataset order."""
    if n >= len(d):
        return d
    idx = np.sort(rng.choice(len(d), size=n, replace=False))
    return TrajectoryDataset([d[int(i)] for i in idx],
                             fixed_length=d.fixed_length, bbox=d.bbox)


def run_case(config: CaseConfig, dataset: TrajectoryDataset) -> list[RunResult]:
    """Execute a case on a preprocessed dataset, one result per (fold, rep).

    Fully deterministic: each run derives its generator from
    (case seed, fold, repetition) alone.
    """
    if dataset.bbox is None or dataset.fixed_length is None:
        raise ValueError("run_case needs a preprocessed dataset (bbox and fixed length)")
    splits = kfold_split(dataset, config.k_folds, config.seed)
    results = []
    for fold_idx in range(config.folds):
        train, test = split_dataset(dataset, splits[fold_idx])
        for rep in range(config.repetitions):
            seed = _run_seed(config.seed, fold_idx, rep)
            rng = as_generator(seed)
            t0 = time.perf_counter()

            train_budget = None
            if config.generator == "markov":
                synth = MarkovSynthesizer(
                    eps_total=config.synth.eps_total,
                    budget_split=config.synth.budget_split,
                    g1=config.synth.g1, g2=config.synth.g2,
                    threshold=config.synth.threshold,
                    max_walk_length=config.synth.max_walk_length,
                    max_states=config.synth.max_states,
                    random_state=rng,
                ).fit(train)
                syn = synth.sample(config.n_synthetic)
                train_budget = synth.budget_
            else:
                syn = load_dataset(config.external_path)
                if syn.fixed_length != dataset.fixed_length:
                    raise ValueError(
                        "external synthetic data must share the dataset's fixed length"
                    )
                syn = subsample_dataset(syn, config.n_synthetic, rng)

            gen_budget = None
            if config.cond is not None:
                embedder = ConditionalEmbedder(
                    mechanism=config.cond.mechanism,
                    epsilon=config.cond.epsilon,
                    delta="auto" if config.cond.delta is None else config.cond.delta,
                    clip_bound=config.cond.clip_bound,
                    d_out=config.cond.d_out,
                    m=config.cond.m,
                    worst_case_m_equals_n=config.cond.worst_case_m_equals_n,
                    embed_dim=config.cond_embed_dim,
                    random_state=rng,
                ).fit(test)
                privatized = embedder.privatize_dataset(test)
                gen_budget = privatized.embedding.budget

            n_eval = min(config.n_eval, len(test), len(syn))
            test_sample = subsample_dataset(test, n_eval, rng)
            syn_sample = subsample_dataset(syn, n_eval, rng)
            report = evaluate_pair(
                test_sample, syn_sample,
                EvalConfig(bbox=dataset.bbox, seed=seed),
            )

            results.append(RunResult(
                case_id=config.case_id,
                fold=fold_idx,
                seed=seed,
                report=report,
                budgets=_budget_entries(config, train, train_budget, gen_budget),
                wall_clock=time.perf_counter() - t0,
            ))
    return results


def save_results(results, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict()) + "\n")


def load_results(path) -> list[RunResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RunResult.from_dict(json.loads(line)))
    return out


def write_report(results, path) -> None:
    """Aggregate results per case into a CSV of means and 95% t-intervals.

    With a single run the interval is undefined and left empty.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    by_case: dict[str, list[RunResult]] = {}
    for r in results:
        by_case.setdefault(r.case_id, []).append(r)

    header = ["case_id", "n_runs"]
    for col in REPORT_COLUMNS:
        header += [f"{col}_mean", f"{col}_ci95"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for case_id, runs in by_case.items():
            row = [case_id, len(runs)]
            for col in REPORT_COLUMNS:
                vals = np.array([getattr(r.report, col) for r in runs], dtype=float)
                mean = vals.mean()
                if len(vals) < 2:
                    ci = ""
                else:
                    half = float(
                        _stats.t.ppf(0.975, len(vals) - 1)
                        * vals.std(ddof=1) / math.sqrt(len(vals))
                    )
                    ci = repr(half)
                row += [repr(float(mean)), ci]
            writer.writerow(row)


def emit_density_grid(d: TrajectoryDataset, g: int, path,
                      bbox: BoundingBox | None = None) -> np.ndarray:
    """Write a g x g point-count grid as CSV, rows = latitude bins ascending."""
    bbox = bbox if bbox is not None else d.bbox
    if bbox is None:
        raise ValueError("emit_density_grid needs a bounding box")
    pts = d.all_points()
    if len(pts):
        counts, _, _ = np.histogram2d(
            pts[:, 0], pts[:, 1], bins=g,
            range=[[bbox.lat_min, bbox.lat_max], [bbox.lon_min, bbox.lon_max]],
        )
    else:
        counts = np.zeros((g, g))
    counts = counts.astype(int)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in counts:
            writer.writerow(row.tolist())
    return counts
