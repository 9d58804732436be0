"""Experiment orchestration: declarative configs, early stopping on dev MAP,
test-set evaluation, and reproducible run records.

Fine-tuning itself stays behind the ``Trainer`` interface; the in-repo mocks
(constant and scripted trainers) make the loop logic fully testable. Running
the same config twice produces identical records modulo timestamps.
"""

from __future__ import annotations

import datetime
import json
import os
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from mlas2.algebra import materialize, parse_composition
from mlas2.dataset import Dataset, filter_answerable, fingerprint_dataset, load_dataset
from mlas2.metrics import (
    DeltaReport,
    MetricsReport,
    delta_report,
    evaluate,
    judge,
)
from mlas2.reranking import (
    LexicalScorer,
    RemoteScorer,
    Scorer,
    StaticScorer,
    rank,
)
from mlas2.translation import (
    CachingTranslator,
    HttpTranslator,
    MockTranslator,
    TranslationCache,
    Translator,
)

TRANSLATOR_ENDPOINT_ENV = "MLAS2_TRANSLATOR_ENDPOINT"


class ExperimentError(RuntimeError):
    """An experiment configuration or run could not be completed."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hyperparameters:
    learning_rate: float = 2e-5
    max_seq_len: int = 128
    max_iterations: int = 3
    batch_size: int = 32
    seed: int = 42

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class ScorerSpec:
    kind: str  # "lexical" | "remote" | "static"
    endpoint: str | None = None
    scores_path: str | None = None
    batch_size: int = 128

    def __post_init__(self) -> None:
        if self.kind not in ("lexical", "remote", "static"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote scorer needs an endpoint")
        if self.kind == "static" and not self.scores_path:
            raise ValueError("static scorer needs a scores_path")


@dataclass(frozen=True)
class TranslatorSpec:
    kind: str = "mock"  # "mock" | "http"
    endpoint: str | None = None
    cache_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown translator kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    run_name: str
    pretrained_label: str
    source_train: str
    source_dev: str
    source_test: str
    ft_expr: str
    dev_expr: str
    test_exprs: tuple[str, ...]
    scorer: ScorerSpec
    translator: TranslatorSpec = TranslatorSpec()
    hyperparameters: Hyperparameters = Hyperparameters()
    baseline_run: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "test_exprs", tuple(self.test_exprs))
        if not self.test_exprs:
            raise ValueError("need at least one test expression")
        # expressions must parse up front; raises CompositionParseError
        parse_composition(self.ft_expr)
        parse_composition(self.dev_expr)
        for expr in self.test_exprs:
            parse_composition(expr)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        """Load a config file; relative paths resolve against its directory."""
        p = Path(path)
        with p.open("r", encoding="utf-8") as fh:
            raw = json.load(fh)

        def resolve(value: str | None) -> str | None:
            if value is None:
                return None
            q = Path(value)
            return str(q if q.is_absolute() else (p.parent / q))

        source = raw.get("source", {})
        scorer_raw = dict(raw.get("scorer", {}))
        scorer_raw["scores_path"] = resolve(scorer_raw.get("scores_path"))
        translator_raw = dict(raw.get("translator", {"kind": "mock"}))
        translator_raw["cache_path"] = resolve(translator_raw.get("cache_path"))
        try:
            return cls(
                run_name=str(raw["run_name"]),
                pretrained_label=str(raw.get("pretrained_label", "")),
                source_train=resolve(str(source["train"])),
                source_dev=resolve(str(source["dev"])),
                source_test=resolve(str(source["test"])),
                ft_expr=str(raw["ft_expr"]),
                dev_expr=str(raw["dev_expr"]),
                test_exprs=tuple(str(e) for e in raw["test_exprs"]),
                scorer=ScorerSpec(**scorer_raw),
                translator=TranslatorSpec(**translator_raw),
                hyperparameters=Hyperparameters(**raw.get("hyperparameters", {})),
                baseline_run=raw.get("baseline_run"),
            )
        except KeyError as exc:
            raise ExperimentError(f"{p}: missing config field {exc}") from exc
        except TypeError as exc:
            raise ExperimentError(f"{p}: bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# trainer interface and mocks
# ---------------------------------------------------------------------------

class Trainer(ABC):
    """One fine-tuning iteration at a time, yielding a scorer snapshot."""

    @abstractmethod
    def train_one_iteration(self) -> Scorer:
        ...


class ConstantScorerTrainer(Trainer):
    """Trainer whose snapshots are always the same scorer (nothing to learn)."""

    def __init__(self, scorer: Scorer) -> None:
        self.scorer = scorer
        self.iterations_run = 0

    def train_one_iteration(self) -> Scorer:
        self.iterations_run += 1
        return self.scorer


class _ScriptedScorer(Scorer):
    def __init__(self, dev_map: float) -> None:
        self.dev_map = dev_map

    def score_candidates(self, question, candidates):
        raise NotImplementedError("scripted snapshots cannot score; they only carry dev MAP")


class ScriptedTrainer(Trainer):
    """In-repo mock trainer: each iteration yields a snapshot carrying the next
    value of a scripted dev-MAP sequence (use with ``scripted_dev_map``)."""

    def __init__(self, dev_maps: Sequence[float]) -> None:
        self._maps = list(dev_maps)
        self.iterations_run = 0

    def train_one_iteration(self) -> Scorer:
        if self.iterations_run >= len(self._maps):
            raise ExperimentError("scripted trainer exhausted its dev-MAP sequence")
        snapshot = _ScriptedScorer(self._maps[self.iterations_run])
        self.iterations_run += 1
        return snapshot


def scripted_dev_map(scorer: Scorer) -> float:
    """Dev evaluator matching ScriptedTrainer snapshots."""
    return scorer.dev_map  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------

@dataclass
class EarlyStopResult:
    best_iteration: int
    best_dev_map: float
    dev_maps: list[float]
    best_scorer: Scorer = field(repr=False)


def early_stop_loop(
    trainer: Trainer,
    evaluate_dev: Callable[[Scorer], float],
    max_iterations: int,
) -> EarlyStopResult:
    """Train up to ``max_iterations``, evaluating dev MAP after every
    iteration (the first included). The loop stops as soon as dev MAP fails to
    strictly improve on the best seen — ties stop — and returns the earliest
    best iteration (1-based)."""
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be >= 1, got {max_iterations}")
    dev_maps: list[float] = []
    best_iteration = 0
    best_map = float("-inf")
    best_scorer: Scorer | None = None
    for iteration in range(1, max_iterations + 1):
        scorer = trainer.train_one_iteration()
        dev_map = evaluate_dev(scorer)
        dev_maps.append(dev_map)
        if dev_map > best_map:
            best_iteration, best_map, best_scorer = iteration, dev_map, scorer
        else:
            break
    assert best_scorer is not None
    return EarlyStopResult(best_iteration, best_map, dev_maps, best_scorer)


# ---------------------------------------------------------------------------
# evaluation pipeline
# ---------------------------------------------------------------------------

def evaluate_dataset(dataset: Dataset, scorer: Scorer, *, test_set: str | None = None) -> MetricsReport:
    """Drop unanswerable questions, rank every remaining group, and aggregate
    P@1 / MAP / MRR. The number of excluded questions is recorded on the report."""
    answerable = filter_answerable(dataset)
    excluded = len(dataset.groups) - len(answerable.groups)
    rankings = [
        judge(group, rank(group.question, group.candidates, scorer))
        for group in answerable.groups
    ]
    return evaluate(
        rankings,
        test_set=test_set if test_set is not None else dataset.name,
        num_excluded=excluded,
    )


def build_translator(spec: TranslatorSpec) -> Translator:
    if spec.kind == "mock":
        backend: Translator = MockTranslator()
    else:
        endpoint = spec.endpoint or os.environ.get(TRANSLATOR_ENDPOINT_ENV)
        if not endpoint:
            raise ExperimentError(
                f"http translator needs an endpoint (or ${TRANSLATOR_ENDPOINT_ENV})"
            )
        backend = HttpTranslator(endpoint)
    if spec.cache_path:
        return CachingTranslator(backend, TranslationCache(spec.cache_path))
    return backend


def build_scorer(
    spec: ScorerSpec, dataset: Dataset | None = None, *, max_seq_len: int = 128
) -> Scorer:
    """Construct the scorer a spec describes. The lexical scorer is bound to
    the dataset it will score (its idf table comes from that dataset's
    candidates)."""
    if spec.kind == "lexical":
        if dataset is None:
            raise ValueError("lexical scorer needs a dataset to build its idf table")
        return LexicalScorer.from_dataset(dataset)
    if spec.kind == "remote":
        return RemoteScorer(
            spec.endpoint, max_seq_len=max_seq_len, batch_size=spec.batch_size
        )
    return StaticScorer.from_jsonl(spec.scores_path)


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    run_name: str
    config: dict
    started: str
    finished: str
    fingerprints: dict[str, str]
    dev_maps: list[float]
    best_iteration: int
    reports: list[MetricsReport]
    deltas: list[DeltaReport]

    def to_dict(self) -> dict:
        return {
            "run_name": self.run_name,
            "config": self.config,
            "started": self.started,
            "finished": self.finished,
            "fingerprints": self.fingerprints,
            "dev_maps": self.dev_maps,
            "best_iteration": self.best_iteration,
            "reports": [
                {**r.to_json_dict(), "n_excluded": r.num_excluded} for r in self.reports
            ],
            "deltas": [d.to_json_dict() for d in self.deltas],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunRecord":
        reports = [
            MetricsReport(
                test_set=r["test"],
                num_questions=r["n"],
                p_at_1=r["p_at_1"],
                map=r["map"],
                mrr=r["mrr"],
                num_excluded=r.get("n_excluded", 0),
            )
            for r in raw["reports"]
        ]
        deltas = [DeltaReport(**d) for d in raw.get("deltas", [])]
        return cls(
            run_name=raw["run_name"],
            config=raw["config"],
            started=raw["started"],
            finished=raw["finished"],
            fingerprints=raw["fingerprints"],
            dev_maps=raw["dev_maps"],
            best_iteration=raw["best_iteration"],
            reports=reports,
            deltas=deltas,
        )

    def save(self, path: str | Path) -> None:
        """Write atomically (temp file + rename)."""
        p = Path(path)
        tmp = p.with_suffix(p.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=2)
            fh.write("\n")
        os.replace(tmp, p)

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------

def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def run_experiment(
    config: ExperimentConfig,
    *,
    trainer: Trainer | None = None,
    results_dir: str | Path | None = None,
) -> RunRecord:
    """Materialize the configured compositions, run the early-stopping loop,
    evaluate the best scorer on every test composition, compute deltas against
    the named baseline run, and persist the run record.

    Without an explicit trainer, a constant trainer wraps the configured
    scorer backend (real fine-tuning lives behind the Trainer interface).
    """
    started = _now()
    hp = config.hyperparameters
    translator = build_translator(config.translator)

    ft_plan = parse_composition(config.ft_expr)
    dev_plan = parse_composition(config.dev_expr)
    test_plans = [(expr, parse_composition(expr)) for expr in config.test_exprs]

    ft_data = materialize(ft_plan, load_dataset(config.source_train, "train"), translator)
    dev_data = materialize(dev_plan, load_dataset(config.source_dev, "dev"), translator)
    source_test = load_dataset(config.source_test, "test")
    test_data = [(expr, materialize(plan, source_test, translator)) for expr, plan in test_plans]

    fingerprints = {"ft": fingerprint_dataset(ft_data), "dev": fingerprint_dataset(dev_data)}
    for expr, data in test_data:
        fingerprints[f"test:{expr}"] = fingerprint_dataset(data)

    rebind_per_test = False
    if trainer is None:
        dev_scorer = build_scorer(config.scorer, dev_data, max_seq_len=hp.max_seq_len)
        trainer = ConstantScorerTrainer(dev_scorer)
        # the lexical baseline's idf table always comes from the dataset it scores
        rebind_per_test = config.scorer.kind == "lexical"

    stop = early_stop_loop(
        trainer,
        lambda scorer: evaluate_dataset(dev_data, scorer).map,
        hp.max_iterations,
    )

    reports = []
    for expr, data in test_data:
        scorer = (
            build_scorer(config.scorer, data, max_seq_len=hp.max_seq_len)
            if rebind_per_test
            else stop.best_scorer
        )
        reports.append(evaluate_dataset(data, scorer, test_set=expr))

    deltas: list[DeltaReport] = []
    if config.baseline_run:
        if config.baseline_run == config.run_name:
            base_reports = {r.test_set: r for r in reports}
        else:
            if results_dir is None:
                raise ExperimentError("baseline_run given but no results_dir to load it from")
            base_path = Path(results_dir) / f"{config.baseline_run}.json"
            if not base_path.exists():
                raise ExperimentError(f"baseline run not found: {base_path}")
            base_reports = {r.test_set: r for r in RunRecord.load(base_path).reports}
        for report in reports:
            if report.test_set not in base_reports:
                raise ExperimentError(
                    f"baseline run {config.baseline_run!r} has no report "
                    f"for test {report.test_set!r}"
                )
            deltas.append(
                delta_report(
                    base_reports[report.test_set],
                    report,
                    name=report.test_set,
                    baseline_name=config.baseline_run,
                )
            )

    record = RunRecord(
        run_name=config.run_name,
        # normalize the snapshot to JSON types so saved and in-memory records agree
        config=json.loads(json.dumps(asdict(config))),
        started=started,
        finished=_now(),
        fingerprints=fingerprints,
        dev_maps=stop.dev_maps,
        best_iteration=stop.best_iteration,
        reports=reports,
        deltas=deltas,
    )
    if results_dir is not None:
        out_dir = Path(results_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        record.save(out_dir / f"{config.run_name}.json")
    return record
