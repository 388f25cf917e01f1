import itertools
import json
import sys
import time

import pytest

from ssdlab.errors import (InnerLoopFailedError, InvalidArgumentError,
                           PolicyValidationError, SynthesizerError)
from ssdlab.grid import Action
from ssdlab.inner_loop import (EvalReport, ExternalCommandSynthesizer,
                               FeedbackSettings, FixedSynthesizer,
                               IterationSettings, PipelineConfig,
                               ScriptedSynthesizer, build_feedback,
                               config_from_record, config_to_record,
                               default_config, evaluate_policy, run_inner_loop,
                               validate_policy)
from ssdlab.metrics import MetricsVector
from ssdlab.policies import PolicyRef, default_ref
from support import game_for, tiny_cleanup_map, tiny_gathering_map

STAND = int(Action.STAND)


@pytest.fixture(scope="module")
def gathering_setup():
    cfg = tiny_gathering_map(
        width=8, height=6, n_agents=3, horizon=80,
        apples=[(2, 2), (2, 5), (4, 3)],
        spawns=[(0, 0), (0, 7), (5, 0)])
    return game_for(cfg), cfg


@pytest.fixture(scope="module")
def cleanup_setup():
    cfg = tiny_cleanup_map(
        width=12, height=6, n_agents=4, horizon=80,
        river=[(r, c) for r in range(6) for c in range(2)],
        apples=[(r, c) for r in range(1, 5) for c in (6, 8, 10)],
        spawns=[(r, c) for r in range(6) for c in (3, 4)],
        waste_spawn_prob=0.2)
    return game_for(cfg), cfg


class TestValidatePolicy:
    def test_registered_policy_passes(self, gathering_setup):
        game, cfg = gathering_setup
        validate_policy(default_ref("gathering-voronoi"), game, map_cfg=cfg)

    def test_invalid_action_policy(self, gathering_setup):
        game, cfg = gathering_setup
        with pytest.raises(PolicyValidationError) as err:
            validate_policy(lambda s, i: 42, game, map_cfg=cfg)
        assert err.value.kind == "invalid-action"
        assert "42" in str(err.value)

    def test_over_budget_policy(self, gathering_setup):
        game, cfg = gathering_setup

        def sleepy(state, agent):
            time.sleep(0.02)
            return STAND

        with pytest.raises(PolicyValidationError) as err:
            validate_policy(sleepy, game, budget=0.01, map_cfg=cfg)
        assert err.value.kind == "over-budget"

    def test_nondeterministic_policy(self, gathering_setup):
        game, cfg = gathering_setup
        counter = itertools.count()

        def flaky(state, agent):
            return STAND if next(counter) % 97 else int(Action.MOVE_EAST)

        with pytest.raises(PolicyValidationError) as err:
            validate_policy(flaky, game, map_cfg=cfg)
        assert err.value.kind == "nondeterministic"

    def test_crashing_policy(self, gathering_setup):
        game, cfg = gathering_setup

        def broken(state, agent):
            raise RuntimeError("boom")

        with pytest.raises(PolicyValidationError) as err:
            validate_policy(broken, game, map_cfg=cfg)
        assert err.value.kind == "crash"

    def test_denylist_applies_to_foreign_source_only(self, gathering_setup):
        game, cfg = gathering_setup

        def foreign(state, agent):
            return STAND

        foreign.source = "import subprocess; subprocess.run(...)"
        with pytest.raises(PolicyValidationError) as err:
            validate_policy(foreign, game, map_cfg=cfg)
        assert err.value.kind == "unsafe-source"

        def clean(state, agent):
            return STAND

        clean.source = "def policy(state, agent): return 7"
        validate_policy(clean, game, map_cfg=cfg)


class TestEvaluatePolicy:
    def test_identical_calls_identical_reports(self, gathering_setup):
        game, cfg = gathering_setup
        ref = default_ref("gathering-voronoi")
        a = evaluate_policy(ref, game, (1, 2, 3), cfg)
        b = evaluate_policy(ref, game, (1, 2, 3), cfg)
        assert a == b

    def test_stand_only_gathering(self, gathering_setup):
        game, cfg = gathering_setup
        report = evaluate_policy(lambda s, i: STAND, game, (1, 2), cfg)
        assert report.metrics.u == 0.0
        assert report.metrics.p == cfg.n_agents

    def test_seed_order_independence(self, gathering_setup):
        game, cfg = gathering_setup
        ref = default_ref("gathering-voronoi")
        fwd = evaluate_policy(ref, game, (1, 2, 3, 4), cfg)
        rev = evaluate_policy(ref, game, (4, 3, 2, 1), cfg)
        assert fwd == rev

    def test_empty_seeds_rejected(self, gathering_setup):
        game, cfg = gathering_setup
        with pytest.raises(InvalidArgumentError):
            evaluate_policy(default_ref("gathering-voronoi"), game, (), cfg)

    def test_maximin_uses_seed_mean_returns(self, gathering_setup):
        game, cfg = gathering_setup
        report = evaluate_policy(default_ref("gathering-voronoi"), game,
                                 (1, 2, 3), cfg)
        assert report.metrics.maximin == min(report.mean_returns)
        assert report.objective_score("maximin") == min(report.mean_returns)
        assert report.objective_score("utilitarian") == pytest.approx(
            sum(report.mean_returns) / cfg.horizon)


def synthetic_report(u=1.0, maximin=10.0, mean=20.0, n=4):
    returns = tuple([mean] * (n - 1) + [maximin])
    # keep the mean consistent with the constructed returns
    mean_actual = sum(returns) / n
    return EvalReport(
        seeds=(1,),
        per_seed_returns=(returns,),
        per_seed_metrics=(MetricsVector(u, 0.5, 100.0, float(n), maximin),),
        mean_returns=returns,
        metrics=MetricsVector(u, 0.5, 100.0, float(n), maximin),
        horizon=1000,
    ), mean_actual


class TestBuildFeedback:
    settings = FeedbackSettings()

    def test_fairness_alert_on_negative_maximin(self):
        report, mean = synthetic_report(u=1.0, maximin=-50.0, mean=100.0)
        bundle = build_feedback([report], "maximin", self.settings)
        assert any(d.startswith("FAIRNESS ALERT") for d in bundle.diagnostics)
        assert not any("WARNING" in d for d in bundle.diagnostics)

    def test_fairness_warning_between_zero_and_half_mean(self):
        report, mean = synthetic_report(u=1.0, maximin=40.0, mean=120.0)
        assert 0 <= 40.0 < mean * 0.5
        bundle = build_feedback([report], "maximin", self.settings)
        assert any(d.startswith("FAIRNESS WARNING") for d in bundle.diagnostics)
        assert not any("ALERT" in d for d in bundle.diagnostics)

    def test_regress_guard_at_high_efficiency(self):
        report, _ = synthetic_report(u=2.6, maximin=300.0, mean=300.0)
        bundle = build_feedback([report], "utilitarian", self.settings)
        assert any("DO NOT REGRESS" in d for d in bundle.diagnostics)

    def test_thresholds_are_settings(self):
        report, _ = synthetic_report(u=2.0, maximin=300.0, mean=300.0)
        loose = FeedbackSettings(regress_guard_efficiency=1.5)
        bundle = build_feedback([report], "utilitarian", loose)
        assert any("DO NOT REGRESS" in d for d in bundle.diagnostics)

    def test_pure_function_of_history_and_settings(self):
        report, _ = synthetic_report(u=2.6, maximin=-5.0, mean=50.0)
        a = build_feedback([report], "utilitarian", self.settings, "desc")
        b = build_feedback([report], "utilitarian", self.settings, "desc")
        assert a == b

    def test_bundle_carries_definitions_and_metrics(self):
        report, _ = synthetic_report()
        bundle = build_feedback([report], "maximin", self.settings, "policy-x")
        assert bundle.policy_description == "policy-x"
        assert bundle.metrics == report.metrics
        assert "Gini" in bundle.metric_definitions
        assert bundle.mean_reward == report.mean_reward

    def test_empty_history_rejected(self):
        with pytest.raises(InvalidArgumentError):
            build_feedback([], "maximin", self.settings)


def make_config(policy_ref, k=1, seeds=(1,), retries=2):
    return PipelineConfig(
        prompt="test prompt",
        policy=policy_ref,
        iteration=IterationSettings(inner_iterations=k, eval_seeds=seeds,
                                    retry_budget=retries),
    )


class TestRunInnerLoop:
    def test_k1_fixed_synthesizer(self, gathering_setup):
        game, cfg = gathering_setup
        ref = default_ref("gathering-voronoi")
        result = run_inner_loop(FixedSynthesizer(ref), game,
                                make_config(ref, k=1), "utilitarian", cfg)
        assert result.best_policy == ref
        assert len(result.log) == 1
        assert not result.log[0].skipped

    def test_best_of_k_selection(self, cleanup_setup):
        game, cfg = cleanup_setup
        ref = default_ref("cleanup-rotation-interleaved")
        result = run_inner_loop(ScriptedSynthesizer(seed=3), game,
                                make_config(ref, k=3, seeds=(1, 2)),
                                "maximin", cfg)
        scores = [e.score for e in result.log if not e.skipped]
        assert result.best_report.objective_score("maximin") == max(scores)
        # earliest iteration wins ties
        best_indices = [e.index for e in result.log
                        if not e.skipped and e.score == max(scores)]
        assert result.best_index == best_indices[0]

    def test_retry_exhaustion_raises(self, gathering_setup):
        game, cfg = gathering_setup

        class Hopeless:
            def synthesize(self, prompt, feedback, previous):
                return lambda s, i: 42

        with pytest.raises(InnerLoopFailedError):
            run_inner_loop(Hopeless(), game,
                           make_config(default_ref("gathering-voronoi"),
                                       k=2, retries=1),
                           "utilitarian", cfg)

    def test_validation_error_lands_in_retry_feedback(self, gathering_setup):
        game, cfg = gathering_setup
        seen = []

        class FailsOnce:
            def __init__(self):
                self.calls = 0

            def synthesize(self, prompt, feedback, previous):
                self.calls += 1
                seen.append(feedback)
                if self.calls == 1:
                    return lambda s, i: 42
                return previous

        ref = default_ref("gathering-voronoi")
        result = run_inner_loop(FailsOnce(), game, make_config(ref, k=1),
                                "utilitarian", cfg)
        assert result.best_policy == ref
        assert seen[0] is None
        assert any("VALIDATION ERROR" in d for d in seen[1].diagnostics)
        assert result.log[0].failures

    def test_synthesizer_error_counts_as_retry(self, gathering_setup):
        game, cfg = gathering_setup

        class Flaky:
            def __init__(self):
                self.calls = 0

            def synthesize(self, prompt, feedback, previous):
                self.calls += 1
                if self.calls == 1:
                    raise SynthesizerError("transient")
                return previous

        ref = default_ref("gathering-voronoi")
        result = run_inner_loop(Flaky(), game, make_config(ref, k=1),
                                "utilitarian", cfg)
        assert result.best_policy == ref

    def test_log_written(self, gathering_setup, tmp_path):
        game, cfg = gathering_setup
        ref = default_ref("gathering-voronoi")
        log_path = tmp_path / "inner.jsonl"
        run_inner_loop(FixedSynthesizer(ref), game, make_config(ref, k=2),
                       "utilitarian", cfg, log_path=str(log_path))
        lines = log_path.read_text().splitlines()
        assert len(lines) == 2
        entry = json.loads(lines[0])
        assert entry["policy"]["name"] == "gathering-voronoi"
        assert not entry["skipped"]


class TestScriptedSynthesizer:
    def test_first_call_reemits_base(self):
        synth = ScriptedSynthesizer(seed=0)
        ref = default_ref("cleanup-rotation-interleaved")
        synth.reset(make_config(ref))
        assert synth.synthesize("p", None, ref) == ref

    def test_deterministic_after_reset(self):
        ref = default_ref("cleanup-rotation-interleaved")
        synth = ScriptedSynthesizer(seed=5)
        synth.reset(make_config(ref))
        seq_a = [synth.synthesize("p", None, ref) for _ in range(5)]
        synth.reset(make_config(ref))
        seq_b = [synth.synthesize("p", None, ref) for _ in range(5)]
        assert seq_a == seq_b

    def test_mutations_stay_in_bounds(self):
        ref = default_ref("cleanup-two-cleaner-rotation")
        synth = ScriptedSynthesizer(seed=1)
        synth.reset(make_config(ref))
        current = ref
        for _ in range(200):
            current = synth.synthesize("p", None, current)
            from ssdlab.policies import validate_ref
            validate_ref(current)


class TestExternalSynthesizer:
    def echo_script(self, tmp_path, body):
        script = tmp_path / "synth.py"
        script.write_text(body)
        return [sys.executable, str(script)]

    def test_round_trip(self, tmp_path, gathering_setup):
        game, cfg = gathering_setup
        command = self.echo_script(tmp_path, (
            "import json, sys\n"
            "request = json.loads(sys.stdin.readline())\n"
            "assert request['prompt'] == 'test prompt'\n"
            "assert request['thinking_budget'] == 16000\n"
            "print(json.dumps(request['previous']))\n"
        ))
        synth = ExternalCommandSynthesizer(command, timeout=30)
        ref = default_ref("gathering-voronoi")
        result = run_inner_loop(synth, game, make_config(ref, k=1),
                                "utilitarian", cfg)
        assert result.best_policy == ref

    def test_malformed_output(self, tmp_path):
        command = self.echo_script(tmp_path, "print('not json')\n")
        synth = ExternalCommandSynthesizer(command, timeout=30)
        with pytest.raises(SynthesizerError, match="unparseable"):
            synth.synthesize("p", None, default_ref("gathering-voronoi"))

    def test_timeout(self, tmp_path):
        command = self.echo_script(tmp_path,
                                   "import time\ntime.sleep(5)\n")
        synth = ExternalCommandSynthesizer(command, timeout=0.5)
        with pytest.raises(SynthesizerError, match="timed out"):
            synth.synthesize("p", None, default_ref("gathering-voronoi"))

    def test_nonzero_exit(self, tmp_path):
        command = self.echo_script(tmp_path, "import sys\nsys.exit(3)\n")
        synth = ExternalCommandSynthesizer(command, timeout=30)
        with pytest.raises(SynthesizerError, match="exited 3"):
            synth.synthesize("p", None, default_ref("gathering-voronoi"))


def test_config_record_round_trip():
    config = default_config("cleanup")
    assert config_from_record(config_to_record(config)) == config
