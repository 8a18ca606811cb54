"""Variable-height transformer surrogate for link-level path loss, MIT License"""


import dataclasses
import json
import logging

import numpy as np
import tensorflow as tf
from tensorflow.keras import layers
from tensorflow.keras import models

from plformer import ops
from plformer.errors import NonFiniteError
from plformer.errors import ShapeError
from plformer.errors import ValidationError
from plformer.transformer_layer import TransformerLayer


logger = logging.getLogger(__name__)


CHECKPOINT_FORMAT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    patch_size: int = 9
    hidden_size: int = 64
    num_layers: int = 3
    num_heads: int = 4
    mlp_dim: int = 128
    patch_cols: int = 3
    channels: int = 2
    dropout_rate: float = 0.0
    distance_scale: float = 500.0
    dtype: str = "float32"
    seed: int = 0

    def validate(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValidationError("patch_size must be odd and positive, got {}".format(
                self.patch_size))
        if self.hidden_size % 2 != 0:
            raise ValidationError("hidden_size must be even, got {}".format(self.hidden_size))
        if self.num_heads < 1 or self.hidden_size % self.num_heads != 0:
            raise ValidationError("hidden_size {} is not divisible by {} heads".format(
                self.hidden_size, self.num_heads))
        if self.num_layers < 1 or self.mlp_dim < 1:
            raise ValidationError("num_layers and mlp_dim must be positive")
        if self.patch_cols != 3:
            raise ValidationError("patch_cols is fixed at 3, got {}".format(self.patch_cols))
        if self.channels != 2:
            raise ValidationError("channels is fixed at 2, got {}".format(self.channels))
        if self.dropout_rate != 0.0:
            raise ValidationError("dropout is not supported, got rate {}".format(
                self.dropout_rate))
        if not self.distance_scale > 0.0:
            raise ValidationError("distance_scale must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError("dtype must be float32 or float64, got {}".format(self.dtype))


def parameter_count(config):
    """The number of trainable scalars, independent of the extract height."""
    D, M = config.hidden_size, config.mlp_dim
    embedding = (config.patch_size ** 2 * config.channels + 1) * D + 2 * D \
        + config.patch_cols * D
    layer = 4 * D + 4 * (D * D + D) + (D * M + M) + (M * D + D)
    return embedding + config.num_layers * layer + D + 1


def vertical_embedding(r, D):
    """Sinusoidal embedding of a patch row index.

    Args:
    - r: a non-negative row index.
    - D: the even embedding width.

    Returns:
    - v: a float64 vector of length D holding (sin, cos) pairs of
        r / 10000^(d / D) for d = 0, 2, ..., D - 2.
    """
    if D % 2 != 0:
        raise ValidationError("embedding width must be even, got {}".format(D))
    if r < 0:
        raise ValidationError("row index must be >= 0, got {}".format(r))
    d = np.arange(0, D, 2, dtype=np.float64)
    angle = r / np.power(10000.0, d / D)
    v = np.empty(D, dtype=np.float64)
    v[0::2] = np.sin(angle)
    v[1::2] = np.cos(angle)
    return v


def vertical_embeddings(num_rows, D):
    return np.stack([vertical_embedding(r, D) for r in range(num_rows)])


class PatchEmbedding(layers.Layer):

    def __init__(self, config, **kwargs):
        super(PatchEmbedding, self).__init__(**kwargs)
        self.config_ = config
        D = config.hidden_size
        shapes = [
            ("patch_kernel", (config.patch_size ** 2 * config.channels, D)),
            ("patch_bias", (D,)),
            ("distance_kernel", (1, D)),
            ("distance_bias", (D,)),
            ("horizontal", (config.patch_cols, D))]
        self._param_names = [name for name, _ in shapes]
        for name, shape in shapes:
            setattr(self, name, self.add_weight(
                name=name, shape=shape, initializer="zeros",
                dtype=self.dtype, trainable=True))

    def build(self, input_shape=None):
        self.built = True

    def named_weights(self, prefix):
        return [(prefix + "/" + name, getattr(self, name)) for name in self._param_names]

    def initialize(self, rng, stddev=0.02):
        for name in self._param_names:
            variable = getattr(self, name)
            shape = tuple(int(d) for d in variable.shape)
            value = rng.normal(0.0, stddev, size=shape) if name.endswith("_kernel") \
                else np.zeros(shape)
            variable.assign(value.astype(np.dtype(self.dtype)))

    def call(self, images, distances, positional=True):
        """Embed the patches and the distance token.

        Args:
        - images: a 4-Tensor with shape [batch_dim, R * P, C * P, channels]
        - distances: a 1-Tensor with shape [batch_dim] holding the
            normalized 3-D link distances
        - positional: add the vertical and horizontal embeddings.

        Returns:
        - tokens: a 3-Tensor with shape [batch_dim, 1 + R * C, D], the
            distance token first, then patches in row-major order
        """
        P, C = self.config_.patch_size, self.config_.patch_cols
        D, channels = self.config_.hidden_size, self.config_.channels
        batch, height = int(images.shape[0]), int(images.shape[1])
        R = height // P

        #################################################
        # Flatten every patch row, column, then channel #
        #################################################

        patches = tf.reshape(images, [batch, R, P, C, P, channels])
        patches = tf.transpose(patches, [0, 1, 3, 2, 4, 5])
        patches = tf.reshape(patches, [batch, R * C, P * P * channels])
        tokens = ops.linear(patches, self.patch_kernel, self.patch_bias)

        if positional:
            # the bottom (transmitter side) patch row has r = 0
            v = tf.constant(vertical_embeddings(R, D)[::-1], dtype=self.dtype)
            position = tf.expand_dims(v, 1) + tf.expand_dims(self.horizontal, 0)
            tokens = ops.add(tokens, tf.reshape(position, [R * C, D]))

        distance_token = ops.linear(
            tf.reshape(distances, [batch, 1, 1]), self.distance_kernel, self.distance_bias)
        return ops.concat([distance_token, tokens], axis=1)


class SurrogateModel(models.Model):

    def __init__(self, config=None, **kwargs):
        """Build the surrogate from a ModelConfig.

        Args:
        - config: a ModelConfig; the defaults give the desk-scale model.

        Weights are drawn from config.seed, so equal configs start equal.
        """
        config = config or ModelConfig()
        config.validate()
        super(SurrogateModel, self).__init__(dtype=config.dtype, **kwargs)
        self.model_config = config
        self.embedding = PatchEmbedding(config, dtype=config.dtype, name="embedding")
        self.transformer_layers = [
            TransformerLayer(
                config.hidden_size, config.num_heads, config.mlp_dim,
                dtype=config.dtype, name="layer_{}".format(i))
            for i in range(config.num_layers)]
        self.head_kernel = self.add_weight(
            name="head_kernel", shape=(config.hidden_size, 1), initializer="zeros",
            dtype=config.dtype, trainable=True)
        self.head_bias = self.add_weight(
            name="head_bias", shape=(1,), initializer="zeros",
            dtype=config.dtype, trainable=True)
        self.target_offset = 0.0
        self.target_scale = 1.0
        self.pad_patches = 1
        self.initialize(config.seed)

    def build(self, input_shape=None):
        self.built = True

    def initialize(self, seed):
        rng = np.random.default_rng(seed)
        self.embedding.initialize(rng)
        for layer in self.transformer_layers:
            layer.initialize(rng)
        self.head_kernel.assign(
            rng.normal(0.0, 0.02, size=(self.model_config.hidden_size, 1)).astype(
                self.model_config.dtype))
        self.head_bias.assign(np.zeros(1, dtype=self.model_config.dtype))

    def set_target_stats(self, offset, scale):
        if not scale > 0.0 or not np.isfinite(offset):
            raise ValidationError("target scale must be positive and offset finite")
        self.target_offset = float(offset)
        self.target_scale = float(scale)

    def named_parameters(self):
        """Every trainable variable under its checkpoint name, in a fixed order."""
        named = self.embedding.named_weights("embedding")
        for i, layer in enumerate(self.transformer_layers):
            named += layer.named_weights("layer_{}".format(i))
        return named + [("head/kernel", self.head_kernel), ("head/bias", self.head_bias)]

    def parameters(self):
        return [variable for _, variable in self.named_parameters()]

    def count_params(self):
        return int(sum(np.prod(variable.shape) for variable in self.parameters()))

    def call(self, images, distances, positional=True, return_attention=False):
        """Predict standardized path loss from the distance token.

        Returns:
        - predictions: a 1-Tensor with shape [batch_dim]
        - attention: with return_attention, a list with one 4-Tensor of
            shape [batch_dim, heads, length, length] per layer
        """
        x = self.embedding(images, distances, positional=positional)
        attention = []
        for layer in self.transformer_layers:
            x, probs = layer(x, return_attention=True)
            attention.append(probs)
        h0 = x[:, 0, :]
        predictions = tf.reshape(ops.linear(h0, self.head_kernel, self.head_bias), [-1])
        if return_attention:
            return predictions, attention
        return predictions

    def attention_maps(self, extract):
        """Per-layer attention probabilities [heads, length, length] of one extract."""
        images, distances = stack_extracts(self, [extract])
        _, attention = self(images, distances, return_attention=True)
        return [probs[0].numpy() for probs in attention]

    def distance_attention(self, extract, layer=-1):
        """Attention of the distance token over the extract, one value per pixel.

        Averages the heads of one layer, takes the distance token's row
        without its self-attention and spreads each patch weight over its
        P x P pixels.

        Returns:
        - weights: an array with the extract's [rows, cols] pixel shape.
        """
        probs = self.attention_maps(extract)[layer]
        patches = probs.mean(axis=0)[0, 1:].reshape(extract.patch_rows, extract.patch_cols)
        P = extract.patch_size
        return np.kron(patches, np.ones((P, P)))


def _check_extract(model, extract):
    config = model.model_config
    expected = (extract.patch_rows * config.patch_size,
                config.patch_cols * config.patch_size, config.channels)
    if extract.patch_size != config.patch_size or extract.patch_cols != config.patch_cols \
            or tuple(extract.pixels.shape) != expected:
        raise ShapeError("embed", tuple(extract.pixels.shape), expected,
                         "extract does not match the model patch grid")


def stack_extracts(model, extracts):
    """Batch extracts of one height into model inputs.

    Returns:
    - images: a 4-Tensor with shape [batch_dim, R * P, C * P, channels]
    - distances: a 1-Tensor of 3-D distances over distance_scale
    """
    if not extracts:
        raise ValidationError("cannot batch an empty list of extracts")
    heights = sorted({extract.patch_rows for extract in extracts})
    if len(heights) > 1:
        raise ValidationError("mixed-R group: patch rows {}".format(heights))
    for extract in extracts:
        _check_extract(model, extract)
    dtype = model.model_config.dtype
    images = tf.constant(np.stack([extract.pixels for extract in extracts]), dtype=dtype)
    distances = tf.constant(
        [extract.distance_m / model.model_config.distance_scale for extract in extracts],
        dtype=dtype)
    return images, distances


def embed(extract, model, positional=True):
    """The token sequence of one extract, shape [1 + R * C, D]."""
    images, distances = stack_extracts(model, [extract])
    return model.embedding(images, distances, positional=positional)[0]


def batch_forward(model, extracts, positional=True):
    """Predict path loss in dB for extracts that share one height.

    Returns:
    - predictions: a float64 array with one value per extract.
    """
    images, distances = stack_extracts(model, extracts)
    normalized = model(images, distances, positional=positional)
    predictions = normalized.numpy().astype(np.float64) * model.target_scale \
        + model.target_offset
    if not np.all(np.isfinite(predictions)):
        raise NonFiniteError("surrogate produced a non-finite prediction")
    return predictions


def forward(model, extract):
    return float(batch_forward(model, [extract])[0])


def predict(model, extracts, batch_size=64):
    """Predict arbitrary extracts, grouped by height, in input order."""
    predictions = np.zeros(len(extracts), dtype=np.float64)
    groups = {}
    for index, extract in enumerate(extracts):
        groups.setdefault(extract.patch_rows, []).append(index)
    for rows in sorted(groups):
        indices = groups[rows]
        for start in range(0, len(indices), batch_size):
            chunk = indices[start:start + batch_size]
            predictions[chunk] = batch_forward(model, [extracts[i] for i in chunk])
    return predictions


def sidecar_path(path):
    return str(path) + ".json"


def save_model(model, path):
    """Write the PLWTS weight file and its JSON config sidecar."""
    ops.save_weights(path, [
        (name, variable.numpy()) for name, variable in model.named_parameters()])
    with open(sidecar_path(path), "w", encoding="utf-8", newline="\n") as f:
        json.dump({
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": dataclasses.asdict(model.model_config),
            "pad_patches": model.pad_patches,
            "target_offset": model.target_offset,
            "target_scale": model.target_scale}, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("saved %d parameters to %s", model.count_params(), path)


def load_model(path):
    """Rebuild a SurrogateModel from a checkpoint written by save_model."""
    with open(sidecar_path(path), "r", encoding="utf-8") as f:
        sidecar = json.load(f)
    if sidecar.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError("{}: unsupported checkpoint format {}".format(
            path, sidecar.get("format_version")))
    model = SurrogateModel(ModelConfig(**sidecar["config"]))
    model.set_target_stats(sidecar["target_offset"], sidecar["target_scale"])
    model.pad_patches = int(sidecar.get("pad_patches", 1))
    named = model.named_parameters()
    records = ops.load_weights(path)
    if [name for name, _ in records] != [name for name, _ in named]:
        raise ValidationError("{}: parameter names do not match the model config".format(path))
    for (name, variable), (_, value) in zip(named, records):
        shape = tuple(int(d) for d in variable.shape)
        if value.shape != shape:
            raise ShapeError("load " + name, shape, value.shape)
        variable.assign(value.astype(model.model_config.dtype))
    return model
