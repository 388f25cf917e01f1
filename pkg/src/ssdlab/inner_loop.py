"""The policy-synthesis inner loop: synthesize, validate, evaluate, feed back.

A pipeline configuration bundles everything a synthesizer-facing run needs:
an opaque system prompt, the feedback diagnostic thresholds, the enabled
helper families, the iteration settings, and the base policy reference the
scripted synthesizer searches around. The loop runs K iterations of
synthesize -> validate -> evaluate -> feedback and returns the iterate that
maximizes the chosen welfare objective on the evaluation seeds.

Synthesizers are pluggable. The in-process scripted mutator keeps the whole
system runnable offline; the external-command adapter speaks a one-line
JSON protocol over stdin/stdout so an LLM-backed synthesizer can be swapped
in without code changes here.
"""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from .errors import (ConfigError, InnerLoopFailedError, InvalidArgumentError,
                     PolicyValidationError, SynthesizerError)
from .games import GameSpec
from .maps import MapConfig
from .metrics import (MetricsVector, OBJECTIVES, mean_metrics,
                      metrics_from_episode, welfare)
from .policies import (PolicyFn, PolicyRef, build_policy, default_ref,
                       validate_ref, REGISTRY)
from .rng import Rng
from .rollout import run_episode

HELPER_FAMILIES = ("pathfinding", "territory", "banding", "waste", "rotation")

METRIC_DEFINITIONS = (
    "U (efficiency): total return across agents divided by the horizon. "
    "E (equality): one minus the Gini coefficient of per-agent returns. "
    "S (sustainability): mean step at which positive rewards are collected; "
    "higher means resources are consumed later. "
    "P (peace): mean number of untagged agents per step. "
    "maximin: the minimum per-agent return."
)

DEFAULT_SOURCE_DENYLIST = (
    "eval(", "exec(", "__import__", "open(", "subprocess", "socket", "os.system",
)

SMOKE_STEPS = 50
SMOKE_SEED = 0
DEFAULT_STEP_BUDGET = 0.25  # seconds of wall clock per smoke step


@dataclass(frozen=True)
class FeedbackSettings:
    """Thresholds for the adaptive diagnostics injected into feedback."""

    regress_guard_efficiency: float = 2.5
    fairness_alert_below: float = 0.0
    fairness_warning_ratio: float = 0.5


@dataclass(frozen=True)
class IterationSettings:
    inner_iterations: int = 3          # K
    eval_seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    retry_budget: int = 3              # R
    thinking_budget: int = 16000       # opaque; forwarded to external synthesizers


@dataclass(frozen=True)
class PipelineConfig:
    """The full inner-loop setup the outer search mutates."""

    prompt: str
    policy: PolicyRef
    feedback: FeedbackSettings = FeedbackSettings()
    helpers: Tuple[str, ...] = HELPER_FAMILIES
    iteration: IterationSettings = IterationSettings()


@dataclass(frozen=True)
class FeedbackBundle:
    """Everything the next synthesis call gets to see about the last one."""

    policy_description: str
    mean_reward: float
    metrics: MetricsVector
    metric_definitions: str
    diagnostics: Tuple[str, ...]

    def record(self) -> dict:
        return {
            "policy_description": self.policy_description,
            "mean_reward": self.mean_reward,
            "metrics": self.metrics.record(),
            "metric_definitions": self.metric_definitions,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class EvalReport:
    """Multi-seed self-play evaluation.

    ``metrics`` averages the per-seed metric vectors, except that its
    maximin field is the minimum of the seed-averaged per-agent returns
    (the welfare functional the search objectives score).
    """

    seeds: Tuple[int, ...]
    per_seed_returns: Tuple[Tuple[float, ...], ...]
    per_seed_metrics: Tuple[MetricsVector, ...]
    mean_returns: Tuple[float, ...]
    metrics: MetricsVector
    horizon: int

    @property
    def mean_reward(self) -> float:
        return sum(self.mean_returns) / len(self.mean_returns)

    def objective_score(self, objective: str) -> float:
        return welfare(self.mean_returns, self.horizon, objective)

    def record(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "per_seed_returns": [list(r) for r in self.per_seed_returns],
            "mean_returns": list(self.mean_returns),
            "metrics": self.metrics.record(),
            "horizon": self.horizon,
        }


PolicyLike = Union[PolicyRef, PolicyFn]


def _policy_builder(policy: PolicyLike, game: GameSpec):
    """Per-episode builder for either a registry reference or a raw callable.

    Raw callables are assumed stateless (tests and adapters); registry
    references build a fresh instance per episode.
    """
    if isinstance(policy, PolicyRef):
        return lambda: build_policy(policy, game.name)
    return lambda: policy


def validate_policy(policy: PolicyLike, game: GameSpec,
                    budget: float = DEFAULT_STEP_BUDGET,
                    map_cfg: Optional[MapConfig] = None,
                    denylist: Sequence[str] = DEFAULT_SOURCE_DENYLIST) -> None:
    """Smoke-test a candidate policy; raises PolicyValidationError.

    Checks, in order: a source denylist scan (only for foreign-source
    policies exposing a ``source`` attribute; registered references skip
    it), action range on a 50-step episode, per-step wall clock against
    ``budget``, and determinism across two identical runs.
    """
    source = getattr(policy, "source", None)
    if source:
        for token in denylist:
            if token in source:
                raise PolicyValidationError(
                    "unsafe-source", f"denylisted token {token!r} in policy source"
                )
    if isinstance(policy, PolicyRef):
        try:
            validate_ref(policy, game.name)
        except ConfigError as exc:
            raise PolicyValidationError("invalid-policy", str(exc)) from exc
    cfg = map_cfg if map_cfg is not None else game.default_map()
    builder = _policy_builder(policy, game)

    def smoke_run():
        fn = builder()
        state = game.reset(SMOKE_SEED, cfg)
        trace = []
        for _ in range(min(SMOKE_STEPS, cfg.horizon)):
            started = time.perf_counter()
            try:
                actions = [fn(state, i) for i in range(cfg.n_agents)]
            except Exception as exc:
                raise PolicyValidationError(
                    "crash", f"policy raised {type(exc).__name__}: {exc}"
                ) from exc
            elapsed = time.perf_counter() - started
            if elapsed > budget:
                raise PolicyValidationError(
                    "over-budget",
                    f"policy spent {elapsed:.3f}s on one step (budget {budget:.3f}s)",
                )
            for i, action in enumerate(actions):
                try:
                    value = int(action)
                except (TypeError, ValueError):
                    value = None
                if value is None or not 0 <= value < game.n_actions:
                    raise PolicyValidationError(
                        "invalid-action",
                        f"agent {i} emitted action {action!r}, outside "
                        f"[0, {game.n_actions})",
                    )
            state, outcome = game.step(state, actions)
            trace.append(([int(a) for a in actions], list(outcome.rewards)))
        return trace

    if smoke_run() != smoke_run():
        raise PolicyValidationError(
            "nondeterministic",
            "two smoke runs on the same seed produced different trajectories",
        )


def evaluate_policy(policy: PolicyLike, game: GameSpec,
                    seeds: Sequence[int],
                    map_cfg: Optional[MapConfig] = None) -> EvalReport:
    """One full self-play episode per seed.

    Seeds are treated as a set: episodes run and aggregate in sorted seed
    order, so the report is independent of the order the seeds were given
    in (and of any scheduling, were the episodes parallelized).
    """
    if not seeds:
        raise InvalidArgumentError("evaluate_policy needs at least one seed")
    cfg = map_cfg if map_cfg is not None else game.default_map()
    builder = _policy_builder(policy, game)

    per_seed_returns = []
    per_seed_metrics = []
    ordered = sorted(int(s) for s in seeds)
    for seed in ordered:
        result = run_episode(game, cfg, builder(), seed)
        per_seed_returns.append(result.record.returns)
        per_seed_metrics.append(metrics_from_episode(result.record))
    n = cfg.n_agents
    mean_returns = tuple(
        sum(r[i] for r in per_seed_returns) / len(per_seed_returns)
        for i in range(n)
    )
    metrics = mean_metrics(per_seed_metrics, maximin=min(mean_returns))
    return EvalReport(
        seeds=tuple(ordered),
        per_seed_returns=tuple(per_seed_returns),
        per_seed_metrics=tuple(per_seed_metrics),
        mean_returns=mean_returns,
        metrics=metrics,
        horizon=cfg.horizon,
    )


def build_feedback(history: Sequence[EvalReport], objective: str,
                   settings: FeedbackSettings,
                   policy_description: str = "") -> FeedbackBundle:
    """Feedback for the next synthesis call from the evaluation history.

    The diagnostics are a pure function of (history, settings): a
    do-not-regress guard once efficiency is at or above the cutoff, a
    fairness alert when maximin is negative, and a fairness warning when
    maximin is non-negative but under the warning ratio times the mean
    per-agent reward.
    """
    if not history:
        raise InvalidArgumentError("build_feedback needs a non-empty history")
    if objective not in OBJECTIVES:
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    latest = history[-1]
    mean_reward = latest.mean_reward
    maximin = latest.metrics.maximin
    diagnostics: List[str] = []
    if latest.metrics.u >= settings.regress_guard_efficiency:
        diagnostics.append(
            "CRITICAL -- DO NOT REGRESS: the current policy achieves high "
            f"efficiency (>={settings.regress_guard_efficiency:g}). Keep the "
            "next policy nearly identical to the current one and make at most "
            "one small targeted change; if unsure, return it unchanged."
        )
    if maximin < settings.fairness_alert_below:
        diagnostics.append(
            f"FAIRNESS ALERT: maximin={maximin:.1f} is NEGATIVE. The worst-off "
            f"agent lost reward overall while the average was {mean_reward:.1f}. "
            "Costly duties are not shared equitably: rotate them over time "
            "across all agents instead of assigning permanent roles."
        )
    elif maximin < mean_reward * settings.fairness_warning_ratio:
        diagnostics.append(
            f"FAIRNESS WARNING: maximin={maximin:.1f} is much lower than the "
            f"average={mean_reward:.1f}. The gap suggests an unequal duty "
            "burden; make sure every agent takes a turn."
        )
    return FeedbackBundle(
        policy_description=policy_description,
        mean_reward=mean_reward,
        metrics=latest.metrics,
        metric_definitions=METRIC_DEFINITIONS,
        diagnostics=tuple(diagnostics),
    )


def _describe_policy(policy: PolicyLike) -> str:
    if isinstance(policy, PolicyRef):
        return json.dumps(policy.record(), sort_keys=True)
    return getattr(policy, "source", None) or getattr(
        policy, "__name__", None) or repr(policy)


def policy_record(policy: Optional[PolicyLike]):
    if policy is None:
        return None
    if isinstance(policy, PolicyRef):
        return policy.record()
    return {"callable": _describe_policy(policy)}


def _feedback_with_error(feedback: Optional[FeedbackBundle], error: str,
                         previous: PolicyLike) -> FeedbackBundle:
    """Retry feedback: the validation error appended to the diagnostics."""
    line = f"VALIDATION ERROR (fix and retry): {error}"
    if feedback is None:
        return FeedbackBundle(
            policy_description=_describe_policy(previous),
            mean_reward=0.0,
            metrics=MetricsVector(0.0, 1.0, 0.0, 0.0, 0.0),
            metric_definitions=METRIC_DEFINITIONS,
            diagnostics=(line,),
        )
    return replace(feedback, diagnostics=feedback.diagnostics + (line,))


@dataclass
class InnerIterationEntry:
    index: int
    policy: Optional[PolicyLike]
    score: Optional[float]
    report: Optional[EvalReport]
    failures: Tuple[str, ...]
    skipped: bool

    def record(self) -> dict:
        return {
            "index": self.index,
            "policy": policy_record(self.policy),
            "score": self.score,
            "report": self.report.record() if self.report else None,
            "failures": list(self.failures),
            "skipped": self.skipped,
        }


@dataclass
class InnerLoopResult:
    best_policy: PolicyLike
    best_report: EvalReport
    best_index: int
    log: List[InnerIterationEntry]


def run_inner_loop(synthesizer, game: GameSpec, config: PipelineConfig,
                   objective: str, map_cfg: Optional[MapConfig] = None,
                   log_path: Optional[str] = None) -> InnerLoopResult:
    """K iterations of synthesize/validate/evaluate/feedback.

    A candidate failing validation triggers re-synthesis with the error
    appended to the feedback, up to the retry budget; an iteration whose
    budget is exhausted is skipped. The returned policy is the logged
    iterate with the highest objective score on the evaluation seeds
    (earliest iteration wins ties). Raises InnerLoopFailedError when every
    iteration was skipped.
    """
    if objective not in OBJECTIVES:
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    if hasattr(synthesizer, "reset"):
        synthesizer.reset(config)

    previous = config.policy
    feedback: Optional[FeedbackBundle] = None
    history: List[EvalReport] = []
    entries: List[InnerIterationEntry] = []

    for k in range(1, config.iteration.inner_iterations + 1):
        failures: List[str] = []
        candidate = None
        attempt_feedback = feedback
        for _ in range(config.iteration.retry_budget + 1):
            try:
                proposal = synthesizer.synthesize(config.prompt, attempt_feedback,
                                                  previous)
            except SynthesizerError as exc:
                failures.append(str(exc))
                attempt_feedback = _feedback_with_error(feedback, str(exc), previous)
                continue
            try:
                validate_policy(proposal, game, map_cfg=map_cfg)
            except PolicyValidationError as exc:
                failures.append(f"{exc.kind}: {exc}")
                attempt_feedback = _feedback_with_error(feedback, str(exc), previous)
                continue
            candidate = proposal
            break
        if candidate is None:
            entries.append(InnerIterationEntry(k, None, None, None,
                                               tuple(failures), skipped=True))
            continue
        report = evaluate_policy(candidate, game, config.iteration.eval_seeds,
                                 map_cfg)
        history.append(report)
        score = report.objective_score(objective)
        entries.append(InnerIterationEntry(k, candidate, score, report,
                                           tuple(failures), skipped=False))
        feedback = build_feedback(
            history, objective, config.feedback,
            policy_description=_describe_policy(candidate),
        )
        previous = candidate

    best: Optional[InnerIterationEntry] = None
    for entry in entries:
        if entry.skipped:
            continue
        if best is None or entry.score > best.score:
            best = entry
    if best is None:
        raise InnerLoopFailedError(
            f"all {config.iteration.inner_iterations} iterations exhausted "
            f"their {config.iteration.retry_budget} retries"
        )
    if log_path is not None:
        with open(log_path, "a", encoding="utf-8") as handle:
            for entry in entries:
                handle.write(json.dumps(entry.record(), sort_keys=True) + "\n")
    return InnerLoopResult(best_policy=best.policy, best_report=best.report,
                           best_index=best.index, log=entries)


# ---------------------------------------------------------------------------
# Synthesizer adapters
# ---------------------------------------------------------------------------

class FixedSynthesizer:
    """Always returns the same policy; the degenerate baseline synthesizer."""

    def __init__(self, policy: PolicyRef):
        self._policy = policy

    def synthesize(self, prompt, feedback, previous) -> PolicyRef:
        return self._policy


class ScriptedSynthesizer:
    """Offline stand-in for an LLM synthesizer.

    Proposes one-parameter tweaks of the previous policy within its family,
    deterministically from the seed; the first call of a run re-emits the
    base policy so the loop always scores the starting point.
    """

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._rng = Rng(seed, "synthesizer")
        self._fresh = True

    def reset(self, config: PipelineConfig) -> None:
        self._rng = Rng(self._seed, "synthesizer")
        self._fresh = True

    def synthesize(self, prompt, feedback, previous: PolicyRef) -> PolicyRef:
        if self._fresh:
            self._fresh = False
            return previous
        family = REGISTRY.get(previous.name)
        if family is None:
            raise SynthesizerError(f"unknown family {previous.name!r}")
        names = [n for n, spec in family.params.items() if spec.low < spec.high]
        if not names:
            return previous
        name = names[self._rng.randrange(len(names))]
        spec = family.params[name]
        value = previous.params[name]
        delta = spec.step if self._rng.randrange(2) == 0 else -spec.step
        moved = min(max(value + delta, spec.low), spec.high)
        if moved == value:
            moved = min(max(value - delta, spec.low), spec.high)
        params = dict(previous.params)
        params[name] = int(moved) if spec.integer else round(moved, 6)
        candidate = PolicyRef(previous.name, params)
        try:
            validate_ref(candidate)
        except ConfigError:
            return previous  # cross-parameter constraint hit; stay put
        return candidate


class ExternalCommandSynthesizer:
    """Adapter for a synthesizer living in another process.

    Request: one JSON line on the child's stdin with the prompt, the
    feedback bundle (or null), the previous policy and the budgets.
    Response: one JSON line on stdout naming a registered policy family
    and its parameters. Timeouts and unparseable replies raise
    SynthesizerError so the inner loop's retry budget applies.
    """

    def __init__(self, command: Sequence[str], timeout: float = 60.0):
        if not command:
            raise InvalidArgumentError("empty synthesizer command")
        self._command = list(command)
        self._timeout = timeout
        self._config: Optional[PipelineConfig] = None

    def reset(self, config: PipelineConfig) -> None:
        self._config = config

    def synthesize(self, prompt, feedback, previous: PolicyRef) -> PolicyRef:
        request = {
            "prompt": prompt,
            "feedback": feedback.record() if feedback is not None else None,
            "previous": previous.record(),
            "thinking_budget": (self._config.iteration.thinking_budget
                                if self._config else None),
            "helpers": list(self._config.helpers) if self._config else [],
            "timeout": self._timeout,
        }
        try:
            proc = subprocess.run(
                self._command,
                input=json.dumps(request, sort_keys=True) + "\n",
                capture_output=True, text=True, timeout=self._timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise SynthesizerError(
                f"synthesizer command timed out after {self._timeout}s"
            ) from exc
        except OSError as exc:
            raise SynthesizerError(f"could not run synthesizer: {exc}") from exc
        if proc.returncode != 0:
            raise SynthesizerError(
                f"synthesizer exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        line = proc.stdout.strip().splitlines()
        if not line:
            raise SynthesizerError("synthesizer produced no output")
        try:
            record = json.loads(line[0])
            return PolicyRef.from_record(record)
        except (json.JSONDecodeError, ConfigError) as exc:
            raise SynthesizerError(f"unparseable synthesizer reply: {exc}") from exc


def default_config(game_name: str, prompt: str = "") -> PipelineConfig:
    """Baseline pipeline configuration for a game."""
    base = {"cleanup": "cleanup-static-threshold",
            "gathering": "gathering-voronoi"}.get(game_name)
    if base is None:
        raise ConfigError(f"unknown game {game_name!r}")
    text = prompt or (
        f"Write one policy function controlling every agent in {game_name} "
        "self-play; it receives the full environment state and its agent id."
    )
    return PipelineConfig(prompt=text, policy=default_ref(base))


def config_to_record(config: PipelineConfig) -> dict:
    return {
        "prompt": config.prompt,
        "policy": config.policy.record(),
        "feedback": {
            "regress_guard_efficiency": config.feedback.regress_guard_efficiency,
            "fairness_alert_below": config.feedback.fairness_alert_below,
            "fairness_warning_ratio": config.feedback.fairness_warning_ratio,
        },
        "helpers": list(config.helpers),
        "iteration": {
            "inner_iterations": config.iteration.inner_iterations,
            "eval_seeds": list(config.iteration.eval_seeds),
            "retry_budget": config.iteration.retry_budget,
            "thinking_budget": config.iteration.thinking_budget,
        },
    }


def config_from_record(record: dict) -> PipelineConfig:
    try:
        feedback = record.get("feedback", {})
        iteration = record.get("iteration", {})
        return PipelineConfig(
            prompt=str(record["prompt"]),
            policy=PolicyRef.from_record(record["policy"]),
            feedback=FeedbackSettings(
                regress_guard_efficiency=float(
                    feedback.get("regress_guard_efficiency", 2.5)),
                fairness_alert_below=float(
                    feedback.get("fairness_alert_below", 0.0)),
                fairness_warning_ratio=float(
                    feedback.get("fairness_warning_ratio", 0.5)),
            ),
            helpers=tuple(record.get("helpers", HELPER_FAMILIES)),
            iteration=IterationSettings(
                inner_iterations=int(iteration.get("inner_iterations", 3)),
                eval_seeds=tuple(int(s) for s in iteration.get("eval_seeds",
                                                               (1, 2, 3, 4, 5))),
                retry_budget=int(iteration.get("retry_budget", 3)),
                thinking_budget=int(iteration.get("thinking_budget", 16000)),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed pipeline config record: {exc}") from exc
