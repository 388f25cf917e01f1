"""Sequential social dilemma laboratory.

Two gridworld games (cleanup, gathering), social welfare metrics, a library
of scripted coordination policies, and a two-level search loop: an inner
policy-synthesis loop and an outer propose/score/keep-or-discard search
over pipeline configurations.
"""

from .cleanup import CleanupState, cleanup_reset, cleanup_step, cleanup_waste_fraction
from .errors import (ConfigError, InnerLoopFailedError, InvalidArgumentError,
                     MapConfigError, PolicyValidationError, ProposerError,
                     SsdlabError, SynthesizerError)
from .games import GAMES, GameSpec, get_game
from .gathering import GatheringState, gathering_reset, gathering_step
from .grid import Action, Grid, Orientation, bfs, direction_to_action
from .inner_loop import (EvalReport, ExternalCommandSynthesizer, FeedbackBundle,
                         FeedbackSettings, FixedSynthesizer, IterationSettings,
                         PipelineConfig, ScriptedSynthesizer, build_feedback,
                         default_config, evaluate_policy, run_inner_loop,
                         validate_policy)
from .maps import (CleanupMapConfig, GatheringMapConfig, build_cleanup_map,
                   build_gathering_map, default_cleanup_map,
                   default_gathering_map, load_map, save_map, validate_map)
from .metrics import (EpisodeRecord, MetricsVector, efficiency, equality,
                      metrics_from_episode, peace, sustainability, welfare)
from .outer_loop import (ExternalProposer, HistoryEntry, MutationProposer,
                         OuterLoopResult, RunState, SweepProposer, config_diff,
                         keep_decision, propose_external, propose_mutation,
                         replay_kept_flags, run_outer_loop, validate_config)
from .policies import (PolicyRef, REGISTRY, build_policy, clean_yield,
                       default_ref, family_names, get_my_apples,
                       nearest_respawning_apple, rotation_role, voronoi_zones)
from .rng import Rng
from .rollout import run_episode
from .trajectory import replay_lines, trajectory_lines, write_trajectory

__version__ = "0.1.0"
