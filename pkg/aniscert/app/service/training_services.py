""" Joint training of a base classifier and a noise parameter generator

Catalog
1. JointTrainingService
    - Adam on -variance(sigma) + CE(f(x + eps * sigma + mu), y)
    - periodic checkpoints, final machine-readable SUMMARY line
"""
import logging
import sys
from typing import Callable, Dict, TextIO, Tuple

import numpy as np
from tqdm import tqdm

from .base_services import BaseTrainingService
from .campaign_assembly import (
    CLASSIFIER_CHECKPOINT, NPG_CHECKPOINT,
    load_dataset, split_dataset, new_classifier_model, new_npg, output_path
)
from ..core.exceptions import ConfigError
from ..core.nn_kernel import AdamState, Module, Tensor, adam_step, no_grad, save_model
from ..core.npg import NpgModel, npg_loss, save_npg
from ..enums import ClassifierKind
from ..models.data_models import Dataset, TrainingSummary
from ..models.request_models import CampaignConfig
from ..utils import make_rng, derive_seed, timeit, TRAINING_STREAM

logger = logging.getLogger(__name__)

SUMMARY_PREFIX = "SUMMARY"


def sigma_extremes(npg: NpgModel, inputs: np.ndarray) -> Tuple[float, float]:
    """ (mean sigma, min sigma) over the generator's output for the given inputs """
    with no_grad():
        sigma, _ = npg.generate_tensors(inputs if npg.needs_input else None)
    return float(sigma.data.mean()), float(sigma.data.min())


def clean_accuracy(model: Module, dataset: Dataset) -> float:
    if len(dataset) == 0:
        return 0.0
    predictions = np.argmax(model.predict(dataset.inputs), axis=1)
    return float(np.mean(predictions == dataset.labels))


class JointTrainingService(BaseTrainingService):

    def __init__(self,
                 progress: bool = True,
                 summary_stream: TextIO = None,
                 optimizer_step: Callable = adam_step,
                 **kwargs) -> None:
        self._progress = progress
        self._summary_stream = summary_stream
        self._optimizer_step = optimizer_step

    def _checkpoint(self, config: CampaignConfig, model: Module, npg: NpgModel,
                    dataset: Dataset, epoch: int) -> None:
        save_model(model, output_path(config, CLASSIFIER_CHECKPOINT),
                   meta={"epoch": epoch, "d": dataset.d, "num_classes": dataset.num_classes})
        save_npg(npg, output_path(config, NPG_CHECKPOINT))
        logger.info("checkpoint after epoch %d written to %s", epoch, config.output)

    @timeit
    def train(self, config: CampaignConfig, **kwargs) -> TrainingSummary:
        """ Trains classifier and generator together

        Generators without parameters (isotropic, pattern) leave only the
        classifier to train, i.e. plain noisy training.
        """
        if config.classifier != ClassifierKind.NN:
            raise ConfigError("only the nn classifier can be trained", key="classifier")
        dataset = load_dataset(config)
        train_set, holdout_set = split_dataset(dataset, config.holdout, config.seed)
        if len(train_set) == 0:
            raise ConfigError("no training examples left after the holdout split", key="holdout")
        evaluation_set = holdout_set if len(holdout_set) else train_set

        model = new_classifier_model(config, dataset)
        npg = new_npg(config, dataset)
        spec = config.noise_spec()
        initial_mean, initial_min = sigma_extremes(npg, evaluation_set.inputs)

        params: Dict[str, Tensor] = {f"classifier/{name}": tensor
                                     for name, tensor in model.parameters().items()}
        params.update({f"npg/{name}": tensor for name, tensor in npg.parameters().items()})
        state = AdamState()
        steps = 0
        loss = float("nan")
        for epoch in tqdm(range(config.epochs), desc="train", disable=not self._progress):
            order = make_rng(config.seed, TRAINING_STREAM, epoch).permutation(len(train_set))
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                result = npg_loss(npg, model, train_set.inputs[batch], train_set.labels[batch],
                                  spec, config.variant,
                                  seed=derive_seed(config.seed, TRAINING_STREAM, epoch, start),
                                  smoothing_weight=config.smoothing_weight)
                self._optimizer_step(params, result.grads, lr=config.lr, state=state)
                loss = result.loss
                steps += 1
            logger.debug("epoch %d: loss %.5f", epoch + 1, loss)
            if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
                self._checkpoint(config, model, npg, dataset, epoch + 1)

        mean_sigma, min_sigma = sigma_extremes(npg, evaluation_set.inputs)
        summary = TrainingSummary(epochs=config.epochs, steps=steps,
                                  clean_accuracy=clean_accuracy(model, evaluation_set),
                                  mean_sigma=mean_sigma, min_sigma=min_sigma,
                                  initial_mean_sigma=initial_mean, initial_min_sigma=initial_min,
                                  final_loss=loss)
        stream = self._summary_stream or sys.stdout
        print(f"{SUMMARY_PREFIX} {summary.json()}", file=stream)
        return summary
