from .schedules import PolyDecay, StepDecay, lr_poly_decay, lr_step_decay, schedule_from_config
from .stages import (EXECUTION_ORDER, STAGE_LABELS, TABLE_ORDER, Objective, Stage, StageConfig,
                     StageReport)
from .trainer import (EncoderConfig, Trainer, TrainingHistory, TrainingSet, domain_impacts,
                      finetune_on_domain, multi_task_view, resume_with_dgd, single_task_view,
                      stage_rng, train_individual, train_jstl, train_multitask)
from .config_validator import (ExperimentConfig, ExperimentValidator, canonical_json, derive_seed,
                               load_experiment_config, parse_experiment_config)
from .run_manager import RunManager
from .pipeline_runner import PipelineRunner, run_full_pipeline, top1_table
