"""Defense toolkit against node-level graph backdoor attacks.

Pipeline: poison an attributed graph with trigger subgraphs, score every
candidate node by internal correlation and external influence, localize
victim/trigger groups through propagated deviation scores with a
bimodality-gated valley cutoff, retrain robustly with unlearning, and verify
the underlying influence decomposition by brute force.
"""

from .attacks import (AttackSpec, apply_asymmetric_weakening, apply_noise_disruption,
                      feature_stats, generate_sba_trigger, poison_graph,
                      poison_test_graph, select_victims)
from .defense import (DefenseOutcome, filter_graph, joint_defense_loss,
                      removal_only_train, robust_train)
from .graph import (AttributedGraph, GraphFormatError, PoisonRecord,
                    PropagationOperator, TriggerSubgraph, attach_trigger,
                    build_propagation_operator,k_hop_neighborhood, load_graph,
                    load_poison_record, mask_nodes, remove_nodes, save_graph,
                    save_poison_record)
from .interactions import (DividendMap, EdgeAtom, NodeAtom, Perturbation,
                           dichotomy_check, harsanyi_decomposition,
                           influence_delta, perturbation_from_trigger)
from .localize import (DetectionResult, LocalizationParams, bimodality_gate,
                       form_victim_groups, fuse_scores, identify,
                       propagate_scores, recover_triggers, valley_cutoff)
from .models import (Classifier, MaskedAutoencoder, ModelConfig, TrainingError,
                     default_autoencoder_config, default_classifier_config,
                     load_checkpoint, save_checkpoint, train_classifier,
                     train_masked_autoencoder)
from .pipeline import (ConfigError, ExperimentConfig, PipelineResult, StageError,
                       compute_asr, compute_ca, detection_metrics, run_pipeline,
                       run_repeats, split_graph)
from .scoring import ScoreTable, external_score, internal_score, kl_js, score_all
from .synth import make_benchmark_graph, make_small_graph

__version__ = "0.1.0"
