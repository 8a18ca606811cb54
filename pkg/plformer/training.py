"""Minibatch training of the surrogate with best-validation checkpointing, MIT License"""


import dataclasses
import json
import logging

import numpy as np
import tensorflow as tf

from plformer import ops
from plformer.errors import DivergenceError
from plformer.errors import ValidationError
from plformer.extract import batch_extract
from plformer.transformer import predict
from plformer.transformer import stack_extracts


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 32
    num_steps: int = 20000
    clip_norm: float = 1.0
    eval_every: int = 500
    log_every: int = 100
    seed: int = 0
    pad_patches: int = 1

    def validate(self):
        if self.learning_rate < 0.0:
            raise ValidationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.num_steps < 0:
            raise ValidationError("batch_size must be >= 1 and num_steps >= 0")
        if self.eval_every < 1 or self.log_every < 1:
            raise ValidationError("eval_every and log_every must be >= 1")
        if self.clip_norm <= 0.0:
            raise ValidationError("clip_norm must be positive")
        if self.pad_patches < 0:
            raise ValidationError("pad_patches must be >= 0")


@dataclasses.dataclass
class TrainResult:
    model: object
    history: list
    best_step: int
    best_val_rmse_db: float


def cosine_learning_rate(config, step):
    """The learning rate of a 0-based step, decayed to zero at num_steps."""
    if config.num_steps == 0:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / config.num_steps))


def height_batches(extracts, batch_size, rng):
    """Yield batches of indices forever; every batch shares one height.

    Each pass shuffles the members of every height group, cuts them into
    batches and shuffles the batch order.
    """
    groups = {}
    for index, extract in enumerate(extracts):
        groups.setdefault(extract.patch_rows, []).append(index)
    while True:
        batches = []
        for rows in sorted(groups):
            members = np.asarray(groups[rows])[rng.permutation(len(groups[rows]))]
            batches += [members[i:i + batch_size] for i in range(0, len(members), batch_size)]
        for i in rng.permutation(len(batches)):
            yield batches[i]


def rmse_db(predictions, targets):
    return float(np.sqrt(np.mean(np.square(np.asarray(predictions) - np.asarray(targets)))))


def train(model, train_records, val_records, scenes, config=None, history_path=None,
          threads=1):
    """Fit the surrogate with MSE on standardized targets.

    Args:
    - model: a SurrogateModel, updated in place.
    - train_records, val_records: non-empty lists of LinkRecord.
    - scenes: a dict mapping scene id to Scene.
    - config: a TrainConfig.
    - history_path: when given, the history is written there as JSON-lines.
    - threads: worker threads for map extraction.

    Returns:
    - result: a TrainResult; the model holds the weights with the best
        validation RMSE seen at an evaluation step.
    """
    config = config or TrainConfig()
    config.validate()
    if not train_records or not val_records:
        raise ValidationError("training needs non-empty train and validation splits")
    P = model.model_config.patch_size
    train_extracts = batch_extract(scenes, train_records, P, config.pad_patches, threads)
    val_extracts = batch_extract(scenes, val_records, P, config.pad_patches, threads)
    train_targets = np.array([record.pathloss_db for record in train_records])
    val_targets = np.array([record.pathloss_db for record in val_records])

    model.pad_patches = config.pad_patches
    std = float(np.std(train_targets))
    model.set_target_stats(float(np.mean(train_targets)), std if std > 0.0 else 1.0)
    standardized = (train_targets - model.target_offset) / model.target_scale
    dtype = model.model_config.dtype

    params = model.parameters()
    state = ops.AdamState.zeros(params)
    rng = np.random.default_rng(config.seed)
    batches = height_batches(train_extracts, config.batch_size, rng)

    best_val = rmse_db(predict(model, val_extracts), val_targets)
    best_step = 0
    best_weights = [variable.numpy() for variable in params]
    history = [{"step": 0, "train_loss": None, "val_rmse_db": best_val}]
    tf.print("Step:", 0, "Val RMSE:", best_val)

    running = []
    for step in range(1, config.num_steps + 1):
        indices = next(batches)
        images, distances = stack_extracts(model, [train_extracts[i] for i in indices])
        targets = tf.constant(standardized[indices], dtype=dtype)

        with tf.GradientTape() as tape:
            loss = ops.mse_loss(model(images, distances), targets)
        loss_value = float(loss)
        if not np.isfinite(loss_value):
            raise DivergenceError(step, loss_value)

        grads = tape.gradient(loss, params)
        grads, _ = ops.clip_by_global_norm(grads, config.clip_norm)
        state = ops.adam_step(params, grads, state, cosine_learning_rate(config, step - 1))
        running.append(loss_value)

        evaluate_now = step % config.eval_every == 0 or step == config.num_steps
        if step % config.log_every != 0 and not evaluate_now:
            continue
        entry = {"step": step, "train_loss": float(np.mean(running)), "val_rmse_db": None}
        running = []
        if evaluate_now:
            val = rmse_db(predict(model, val_extracts), val_targets)
            entry["val_rmse_db"] = val
            if val < best_val:
                best_val, best_step = val, step
                best_weights = [variable.numpy() for variable in params]
        history.append(entry)
        tf.print("Step:", step, "Loss:", entry["train_loss"],
                 "Val RMSE:", entry["val_rmse_db"] if evaluate_now else "-")

    for variable, value in zip(params, best_weights):
        variable.assign(value)
    logger.info("best validation RMSE %.4f dB at step %d", best_val, best_step)
    if history_path is not None:
        write_history(history, history_path)
    return TrainResult(model=model, history=history, best_step=best_step,
                       best_val_rmse_db=best_val)


def write_history(history, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entry in history:
            f.write(json.dumps(entry, sort_keys=True))
            f.write("\n")


def read_history(path):
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
