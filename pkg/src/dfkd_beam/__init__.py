"""Data-free knowledge distillation for LiDAR-aided mmWave beam tracking, on numpy."""

from .autodiff import Tensor, backward, gradcheck
from .checkpoint import Checkpoint, TeacherCheckpoint, load_checkpoint, save_checkpoint
from .errors import (ConfigMismatchError, ContractError, DfkdError, DimensionError, FormatError, ManifestError,
                     MetadataMissingError, ParameterError, ShapeMismatchError, VersionError)
from .evaluation import EvalReport, evaluate, evaluate_checkpoint, predict_beams, run_experiment, topk_accuracy
from .losses import (GeneratorLossWeights, KDConfig, activation_loss, cross_entropy_loss, entropy_loss,
                     generator_loss, kd_loss, kd_mse_loss, kl_loss, metadata_loss, mse_logit_loss)
from .mmwave import (ArrayConfig, Path, PathSet, beam_gains, channel_realize, dft_codebook, optimal_beam,
                     received_snr, steering_vector)
from .models import (Adam, Generator, GeneratorConfig, SeqModel, SeqModelConfig, generator_forward,
                     init_generator_params, init_seq_params, seq_forward, student_config, teacher_config)
from .pipelines import (RunLog, TrainConfig, train_generator, train_student_df, train_student_kd,
                        train_student_scratch, train_teacher)
from .scenario import Dataset, ScenarioConfig, load_dataset, make_dataset, merge_datasets, save_dataset

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "gradcheck", "Checkpoint", "TeacherCheckpoint", "load_checkpoint",
    "save_checkpoint", "ConfigMismatchError", "ContractError", "DfkdError", "DimensionError", "FormatError",
    "ManifestError", "MetadataMissingError", "ParameterError", "ShapeMismatchError", "VersionError",
    "EvalReport", "evaluate", "evaluate_checkpoint", "predict_beams", "run_experiment", "topk_accuracy",
    "GeneratorLossWeights", "KDConfig", "activation_loss", "cross_entropy_loss", "entropy_loss",
    "generator_loss", "kd_loss", "kd_mse_loss", "kl_loss", "metadata_loss", "mse_logit_loss", "ArrayConfig",
    "Path", "PathSet", "beam_gains", "channel_realize", "dft_codebook", "optimal_beam", "received_snr",
    "steering_vector", "Adam", "Generator", "GeneratorConfig", "SeqModel", "SeqModelConfig",
    "generator_forward", "init_generator_params", "init_seq_params", "seq_forward", "student_config",
    "teacher_config", "RunLog", "TrainConfig", "train_generator", "train_student_df", "train_student_kd",
    "train_student_scratch", "train_teacher", "Dataset", "ScenarioConfig", "load_dataset", "make_dataset",
    "merge_datasets", "save_dataset",
]
