"""Genome-level accuracy: the GA's fitness function."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeMismatchError
from .genome import Genome, unflatten
from .nn import ModelSpec, accuracy


def spec_for(genome: Genome) -> ModelSpec:
    return ModelSpec.from_layer_shapes(genome.manifest.layer_shapes)


def genome_accuracy(genome: Genome, X, y) -> float:
    return accuracy(unflatten(genome), spec_for(genome), X, y)


class AccuracyFitness:
    """``F(genome) = accuracy`` on a fixed labelled set (normally validation).

    With ``checkpoint_precision`` the genome is first rounded to float32, so
    the score matches what a saved checkpoint of it would get.
    """

    def __init__(self, X, y, checkpoint_precision=False):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y)
        self.checkpoint_precision = checkpoint_precision
        if len(self.y) == 0:
            raise DataError("fitness needs a non-empty validation partition")

    def __call__(self, genome: Genome) -> float:
        spec = spec_for(genome)
        if spec.n_inputs != self.X.shape[1]:
            raise ShapeMismatchError(
                f"model expects {spec.n_inputs} features, data has {self.X.shape[1]}"
            )
        if self.checkpoint_precision:
            genome = genome.with_values(genome.values.astype(np.float32))
        return accuracy(unflatten(genome), spec, self.X, self.y)
