"""The configuration search outer loop.

Iterate: propose a pipeline configuration, run the inner loop, score its
best policy on held-out seeds, and keep the configuration only when the
score strictly exceeds the running best plus a threshold. Discarded
proposals leave no trace in the working configuration: the next proposal
is always built on the running best. Every iteration is appended to an
on-disk history so a run can be audited and its keep decisions replayed.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .errors import (ConfigError, InnerLoopFailedError, InvalidArgumentError,
                     ProposerError)
from .games import GameSpec
from .inner_loop import (EvalReport, HELPER_FAMILIES, PipelineConfig,
                         config_from_record, config_to_record,
                         evaluate_policy, policy_record, run_inner_loop)
from .maps import MapConfig
from .metrics import MetricsVector, OBJECTIVES
from .policies import (ParamSpec, PolicyRef, REGISTRY, default_ref,
                       family_names, validate_ref)
from .rng import Rng

SEED_COUNT_CHOICES = (5, 8, 12)
INNER_ITERATION_CHOICES = (1, 2, 3, 4, 5)
DEFAULT_HELD_OUT_SEEDS = tuple(range(1001, 1013))


@dataclass(frozen=True)
class HistoryEntry:
    """One outer iteration: what was tried, how it scored, what happened."""

    index: int
    config: PipelineConfig
    score: Optional[float]
    metrics: Optional[MetricsVector]
    diff: str
    kept: bool
    note: str = ""

    def record(self) -> dict:
        return {
            "index": self.index,
            "config": config_to_record(self.config),
            "score": self.score,
            "metrics": self.metrics.record() if self.metrics else None,
            "diff": self.diff,
            "kept": self.kept,
            "note": self.note,
        }

    @classmethod
    def from_record(cls, record: dict) -> "HistoryEntry":
        metrics = record.get("metrics")
        return cls(
            index=int(record["index"]),
            config=config_from_record(record["config"]),
            score=record.get("score"),
            metrics=MetricsVector.from_record(metrics) if metrics else None,
            diff=str(record.get("diff", "")),
            kept=bool(record["kept"]),
            note=str(record.get("note", "")),
        )


@dataclass
class RunState:
    """Running best and bookkeeping for one outer-loop run."""

    best_config: PipelineConfig
    best_score: float
    tau: float
    held_out_seeds: Tuple[int, ...]
    max_iterations: int
    history: List[HistoryEntry] = field(default_factory=list)
    run_dir: Optional[Path] = None


@dataclass
class OuterLoopResult:
    best_config: PipelineConfig
    best_policy: PolicyRef
    best_score: float
    best_report: EvalReport
    history: List[HistoryEntry]
    run_dir: Optional[Path]


def keep_decision(score: float, best_score: float, tau: float) -> bool:
    """Strict improvement test: keep only when score > best + tau."""
    return score > best_score + tau


def validate_config(config: PipelineConfig,
                    held_out_seeds: Sequence[int] = ()) -> None:
    """Raise ConfigError naming every violated field constraint."""
    problems: List[str] = []
    it = config.iteration
    if it.inner_iterations < 1:
        problems.append(f"inner_iterations must be >= 1, got {it.inner_iterations}")
    if it.retry_budget < 0:
        problems.append(f"retry_budget must be >= 0, got {it.retry_budget}")
    if it.thinking_budget < 0:
        problems.append(f"thinking_budget must be >= 0, got {it.thinking_budget}")
    if not it.eval_seeds:
        problems.append("eval_seeds must be non-empty")
    overlap = sorted(set(it.eval_seeds) & set(held_out_seeds))
    if overlap:
        problems.append(f"eval_seeds overlap held-out seeds: {overlap}")
    if config.feedback.fairness_warning_ratio < 0:
        problems.append("fairness_warning_ratio must be >= 0")
    unknown = sorted(set(config.helpers) - set(HELPER_FAMILIES))
    if unknown:
        problems.append(f"unknown helper families: {unknown}")
    if not isinstance(config.prompt, str):
        problems.append("prompt must be text")
    try:
        validate_ref(config.policy)
    except ConfigError as exc:
        problems.append(str(exc))
    if problems:
        raise ConfigError("; ".join(problems))


def config_diff(old: PipelineConfig, new: PipelineConfig) -> str:
    """Field-level summary of what changed; empty for identical configs."""
    changes: List[str] = []
    if old.prompt != new.prompt:
        changes.append(f"prompt: {len(old.prompt)} chars -> {len(new.prompt)} chars")
    if old.policy.name != new.policy.name:
        changes.append(f"policy: {old.policy.name} -> {new.policy.name}")
    else:
        keys = sorted(set(old.policy.params) | set(new.policy.params))
        for key in keys:
            a, b = old.policy.params.get(key), new.policy.params.get(key)
            if a != b:
                changes.append(f"policy.{key}: {a} -> {b}")
    for attr in ("regress_guard_efficiency", "fairness_alert_below",
                 "fairness_warning_ratio"):
        a, b = getattr(old.feedback, attr), getattr(new.feedback, attr)
        if a != b:
            changes.append(f"feedback.{attr}: {a} -> {b}")
    if old.helpers != new.helpers:
        changes.append(f"helpers: {list(old.helpers)} -> {list(new.helpers)}")
    if old.iteration.inner_iterations != new.iteration.inner_iterations:
        changes.append(
            f"iteration.inner_iterations: {old.iteration.inner_iterations} "
            f"-> {new.iteration.inner_iterations}")
    if old.iteration.eval_seeds != new.iteration.eval_seeds:
        changes.append(
            f"iteration.eval_seeds: {len(old.iteration.eval_seeds)} seeds "
            f"-> {len(new.iteration.eval_seeds)} seeds")
    if old.iteration.retry_budget != new.iteration.retry_budget:
        changes.append(
            f"iteration.retry_budget: {old.iteration.retry_budget} "
            f"-> {new.iteration.retry_budget}")
    if old.iteration.thinking_budget != new.iteration.thinking_budget:
        changes.append(
            f"iteration.thinking_budget: {old.iteration.thinking_budget} "
            f"-> {new.iteration.thinking_budget}")
    return "; ".join(changes)


# ---------------------------------------------------------------------------
# Scripted proposer
# ---------------------------------------------------------------------------

def _clamp(value: float, spec: ParamSpec) -> float:
    moved = min(max(value, spec.low), spec.high)
    return int(moved) if spec.integer else round(moved, 6)


def _mutate_once(rng: Rng, config: PipelineConfig) -> PipelineConfig:
    """One hill-climb move on a single configuration field."""
    family = REGISTRY[config.policy.name]
    kinds = ["inner_iterations", "seed_count", "family_switch"]
    mutable = [n for n, spec in family.params.items() if spec.low < spec.high]
    if mutable:
        kinds.append("policy_param")
        kinds.append("policy_param")  # parameter tweaks are the common move
    for _ in range(8):
        kind = kinds[rng.randrange(len(kinds))]
        if kind == "policy_param":
            name = mutable[rng.randrange(len(mutable))]
            spec = family.params[name]
            delta = spec.step if rng.randrange(2) == 0 else -spec.step
            value = _clamp(config.policy.params[name] + delta, spec)
            if value == config.policy.params[name]:
                value = _clamp(config.policy.params[name] - delta, spec)
            params = dict(config.policy.params)
            params[name] = value
            candidate = PolicyRef(config.policy.name, params)
            try:
                validate_ref(candidate)
            except ConfigError:
                continue
            return PipelineConfig(config.prompt, candidate, config.feedback,
                                  config.helpers, config.iteration)
        if kind == "family_switch":
            options = [n for n in family_names(family.game)
                       if n != config.policy.name]
            if not options:
                continue
            candidate = default_ref(options[rng.randrange(len(options))])
            return PipelineConfig(config.prompt, candidate, config.feedback,
                                  config.helpers, config.iteration)
        if kind == "inner_iterations":
            options = [k for k in INNER_ITERATION_CHOICES
                       if k != config.iteration.inner_iterations]
            k = options[rng.randrange(len(options))]
            iteration = type(config.iteration)(
                inner_iterations=k,
                eval_seeds=config.iteration.eval_seeds,
                retry_budget=config.iteration.retry_budget,
                thinking_budget=config.iteration.thinking_budget,
            )
            return PipelineConfig(config.prompt, config.policy, config.feedback,
                                  config.helpers, iteration)
        if kind == "seed_count":
            options = [n for n in SEED_COUNT_CHOICES
                       if n != len(config.iteration.eval_seeds)]
            n = options[rng.randrange(len(options))]
            iteration = type(config.iteration)(
                inner_iterations=config.iteration.inner_iterations,
                eval_seeds=tuple(range(1, n + 1)),
                retry_budget=config.iteration.retry_budget,
                thinking_budget=config.iteration.thinking_budget,
            )
            return PipelineConfig(config.prompt, config.policy, config.feedback,
                                  config.helpers, iteration)
    return config


def _fingerprint(config: PipelineConfig) -> str:
    return json.dumps(config_to_record(config), sort_keys=True)


def propose_mutation(rng: Rng, best: PipelineConfig,
                     history: Sequence[HistoryEntry]) -> PipelineConfig:
    """Hill-climb proposal: mutate one field of the running best, avoiding
    exact repeats of configurations already in the history (falling back to
    a double mutation when single mutations are exhausted)."""
    seen = {_fingerprint(entry.config) for entry in history}
    seen.add(_fingerprint(best))
    candidate = best
    for attempt in range(64):
        candidate = _mutate_once(rng, best)
        if attempt >= 32:
            candidate = _mutate_once(rng, candidate)
        if _fingerprint(candidate) not in seen:
            return candidate
    return candidate


class MutationProposer:
    """Seeded scripted researcher: one mutation per outer iteration."""

    def __init__(self, seed: int = 0):
        self._rng = Rng(seed, "proposer")

    def propose(self, best: PipelineConfig,
                history: Sequence[HistoryEntry]) -> PipelineConfig:
        return propose_mutation(self._rng, best, history)


class SweepProposer:
    """Proposes a fixed list of configurations in order.

    With ``max_iterations == len(configs)`` the outer loop becomes an
    exhaustive sweep whose final best is the grid argmax; useful as an
    oracle for search runs.
    """

    def __init__(self, configs: Sequence[PipelineConfig]):
        self._configs = list(configs)
        self._next = 0

    def propose(self, best: PipelineConfig,
                history: Sequence[HistoryEntry]) -> PipelineConfig:
        if self._next >= len(self._configs):
            raise ProposerError("sweep grid exhausted")
        config = self._configs[self._next]
        self._next += 1
        return config


def propose_external(command: Sequence[str], workspace: str | Path,
                     best: PipelineConfig, history: Sequence[HistoryEntry],
                     timeout: float = 300.0) -> PipelineConfig:
    """Delegate one proposal to an external command.

    ``workspace/request.json`` receives the running best and the full
    history; the command must write ``workspace/response.json`` holding a
    pipeline config record. Timeouts, nonzero exits and unparseable
    responses raise ProposerError.
    """
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    request = {
        "best_config": config_to_record(best),
        "history": [entry.record() for entry in history],
    }
    (workspace / "request.json").write_text(
        json.dumps(request, indent=2, sort_keys=True), encoding="utf-8")
    response_path = workspace / "response.json"
    if response_path.exists():
        response_path.unlink()
    try:
        proc = subprocess.run(list(command), cwd=workspace, timeout=timeout,
                              capture_output=True, text=True)
    except subprocess.TimeoutExpired as exc:
        raise ProposerError(f"proposer command timed out after {timeout}s") from exc
    except OSError as exc:
        raise ProposerError(f"could not run proposer: {exc}") from exc
    if proc.returncode != 0:
        raise ProposerError(
            f"proposer exited {proc.returncode}: {proc.stderr.strip()[:500]}")
    if not response_path.exists():
        raise ProposerError("proposer wrote no response.json")
    try:
        record = json.loads(response_path.read_text(encoding="utf-8"))
        return config_from_record(record)
    except (json.JSONDecodeError, ConfigError) as exc:
        raise ProposerError(f"unparseable proposer response: {exc}") from exc


class ExternalProposer:
    """Proposer interface around :func:`propose_external`."""

    def __init__(self, command: Sequence[str], workspace: str | Path,
                 timeout: float = 300.0):
        self._command = list(command)
        self._workspace = Path(workspace)
        self._timeout = timeout

    def propose(self, best: PipelineConfig,
                history: Sequence[HistoryEntry]) -> PipelineConfig:
        return propose_external(self._command, self._workspace, best, history,
                                self._timeout)


# ---------------------------------------------------------------------------
# The loop itself
# ---------------------------------------------------------------------------

def _persist_config(run_dir: Optional[Path], index: int, kept: bool,
                    config: PipelineConfig) -> None:
    if run_dir is None:
        return
    status = "kept" if kept else "discarded"
    path = run_dir / f"config_{index:03d}_{status}.json"
    path.write_text(json.dumps(config_to_record(config), indent=2,
                               sort_keys=True), encoding="utf-8")


def _persist_history(run_dir: Optional[Path], entry: HistoryEntry) -> None:
    if run_dir is None:
        return
    with open(run_dir / "history.jsonl", "a", encoding="utf-8") as handle:
        handle.write(json.dumps(entry.record(), sort_keys=True) + "\n")


def run_outer_loop(proposer, synthesizer, game: GameSpec, objective: str,
                   initial_config: PipelineConfig, max_iterations: int,
                   tau: float = 0.0,
                   held_out_seeds: Sequence[int] = DEFAULT_HELD_OUT_SEEDS,
                   map_cfg: Optional[MapConfig] = None,
                   run_dir: Optional[str | Path] = None) -> OuterLoopResult:
    """Baseline, then ``max_iterations`` of propose / evaluate / keep-or-discard.

    A proposal failing validation is retried up to the retry budget of the
    running best; persistent failure is recorded as a discarded history
    entry (score None) and the loop continues. On discard the working
    configuration reverts to the running best, so every proposal is built
    on the best configuration found so far.
    """
    if objective not in OBJECTIVES:
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    if not held_out_seeds:
        raise InvalidArgumentError("held_out_seeds must be non-empty")
    if max_iterations < 0:
        raise InvalidArgumentError("max_iterations must be >= 0")
    out_dir = Path(run_dir) if run_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    validate_config(initial_config, held_out_seeds)
    baseline = run_inner_loop(synthesizer, game, initial_config, objective,
                              map_cfg)
    baseline_report = evaluate_policy(baseline.best_policy, game,
                                      held_out_seeds, map_cfg)
    best_score = baseline_report.objective_score(objective)
    state = RunState(best_config=initial_config, best_score=best_score,
                     tau=tau, held_out_seeds=tuple(held_out_seeds),
                     max_iterations=max_iterations, run_dir=out_dir)
    best_policy = baseline.best_policy
    best_report = baseline_report
    entry = HistoryEntry(index=0, config=initial_config, score=best_score,
                         metrics=baseline_report.metrics, diff="", kept=True,
                         note="baseline")
    state.history.append(entry)
    _persist_config(out_dir, 0, True, initial_config)
    _persist_history(out_dir, entry)

    retry_budget = initial_config.iteration.retry_budget
    for j in range(1, max_iterations + 1):
        proposal = None
        failure = ""
        for _ in range(retry_budget + 1):
            try:
                candidate = proposer.propose(state.best_config, state.history)
            except ProposerError as exc:
                failure = str(exc)
                continue
            try:
                validate_config(candidate, held_out_seeds)
            except ConfigError as exc:
                failure = str(exc)
                proposal = None
                continue
            proposal = candidate
            break
        if proposal is None:
            entry = HistoryEntry(index=j, config=state.best_config, score=None,
                                 metrics=None, diff="", kept=False,
                                 note=f"proposer failed: {failure}")
            state.history.append(entry)
            _persist_history(out_dir, entry)
            continue

        diff = config_diff(state.best_config, proposal)
        try:
            inner = run_inner_loop(synthesizer, game, proposal, objective,
                                   map_cfg)
        except InnerLoopFailedError as exc:
            entry = HistoryEntry(index=j, config=proposal, score=None,
                                 metrics=None, diff=diff, kept=False,
                                 note=f"inner loop failed: {exc}")
            state.history.append(entry)
            _persist_config(out_dir, j, False, proposal)
            _persist_history(out_dir, entry)
            continue
        report = evaluate_policy(inner.best_policy, game, held_out_seeds,
                                 map_cfg)
        score = report.objective_score(objective)
        kept = keep_decision(score, state.best_score, tau)
        if kept:
            state.best_config = proposal
            state.best_score = score
            best_policy = inner.best_policy
            best_report = report
        entry = HistoryEntry(index=j, config=proposal, score=score,
                             metrics=report.metrics, diff=diff, kept=kept)
        state.history.append(entry)
        _persist_config(out_dir, j, kept, proposal)
        _persist_history(out_dir, entry)

    if out_dir is not None:
        summary = {
            "game": game.name,
            "objective": objective,
            "tau": tau,
            "held_out_seeds": list(state.held_out_seeds),
            "best_score": state.best_score,
            "best_policy": policy_record(best_policy),
            "best_config": config_to_record(state.best_config),
            "metrics": best_report.metrics.record(),
            "iterations": len(state.history) - 1,
        }
        (out_dir / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")

    return OuterLoopResult(best_config=state.best_config,
                           best_policy=best_policy,
                           best_score=state.best_score,
                           best_report=best_report,
                           history=state.history,
                           run_dir=out_dir)


def replay_kept_flags(history: Sequence[HistoryEntry],
                      tau: float) -> List[bool]:
    """Recompute every keep decision from a persisted history.

    Entries with no score (failed proposals) are discards by definition.
    The first entry is the baseline and is always kept.
    """
    flags: List[bool] = []
    best = None
    for entry in history:
        if entry.index == 0:
            best = entry.score
            flags.append(True)
            continue
        if entry.score is None:
            flags.append(False)
            continue
        kept = keep_decision(entry.score, best, tau)
        flags.append(kept)
        if kept:
            best = entry.score
    return flags
