"""Merge architecturally identical networks with a genetic algorithm."""

__version__ = "0.1.0"

from .data import Dataset, gen_synthetic, load_csv, split
from .errors import (
    BadMagicError,
    CheckpointError,
    ConfigError,
    DataError,
    IncompatibleGenomesError,
    LengthMismatchError,
    MegaError,
    NumericError,
    ShapeMismatchError,
    VersionMismatchError,
)
from .fitness import AccuracyFitness, genome_accuracy
from .ga import (
    GaConfig,
    GenerationRecord,
    Individual,
    crossover,
    evaluate,
    init_population,
    mutate,
    run_mega,
    step_generation,
    tournament_select,
)
from .genome import Genome, ShapeManifest, compatible, flatten, load_checkpoint, save_checkpoint, unflatten
from .merge import MergePlan, MergeReport, build_merge_plan, execute_merge_plan, weight_average
from .nn import ModelSpec, TrainConfig, accuracy, forward, loss_and_gradient, train
