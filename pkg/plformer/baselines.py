"""3GPP UMi street-canyon and distance-only MLP baselines, MIT License"""


import dataclasses
import json
import logging

import numpy as np
import tensorflow as tf
from tensorflow.keras import layers

from plformer import ops
from plformer.errors import ValidationError
from plformer.scene import distance_2d


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class GppConfig:
    fc_ghz: float = 28.0
    h_bs_m: float = 9.0
    h_ut_m: float = 1.5
    c: float = 3.0e8

    def validate(self):
        if not 0.5 <= self.fc_ghz <= 100.0:
            raise ValidationError("fc_ghz must lie in [0.5, 100], got {}".format(self.fc_ghz))
        if self.h_bs_m <= 0.0 or self.h_ut_m <= 0.0 or self.c <= 0.0:
            raise ValidationError("heights and c must be positive")

    @property
    def breakpoint_m(self):
        """d'BP with the 1 m effective environment height."""
        return 4.0 * (self.h_bs_m - 1.0) * (self.h_ut_m - 1.0) * self.fc_ghz * 1e9 / self.c


def gpp_umi_pathloss(d2d_m, d3d_m, cfg, los):
    """UMi street-canyon mean path loss without shadow fading.

    Args:
    - d2d_m: the ground distance in meters, scalar or array.
    - d3d_m: the 3-D distance in meters, at least 1 and at least d2d_m.
    - cfg: a GppConfig.
    - los: the LOS flag, scalar or boolean array broadcastable with d3d_m.

    Returns:
    - loss: path loss in dB, a float for scalar inputs.
    """
    cfg.validate()
    d2d = np.asarray(d2d_m, dtype=np.float64)
    d3d = np.asarray(d3d_m, dtype=np.float64)
    los = np.asarray(los, dtype=bool)
    if np.any(d3d < 1.0) or np.any(d2d > d3d + 1e-9) or np.any(d2d < 0.0):
        raise ValidationError("need 0 <= d2d <= d3d and d3d >= 1 m")

    log_fc = np.log10(cfg.fc_ghz)
    d_bp = cfg.breakpoint_m
    pl1 = 32.4 + 21.0 * np.log10(d3d) + 20.0 * log_fc
    pl2 = 32.4 + 40.0 * np.log10(d3d) + 20.0 * log_fc \
        - 9.5 * np.log10(d_bp ** 2 + (cfg.h_bs_m - cfg.h_ut_m) ** 2)
    pl_los = np.where(d2d <= d_bp, pl1, pl2)
    pl_nlos = 35.3 * np.log10(d3d) + 22.4 + 21.3 * log_fc - 0.3 * (cfg.h_ut_m - 1.5)
    loss = np.where(los, pl_los, np.maximum(pl_los, pl_nlos))
    return float(loss) if loss.ndim == 0 else loss


def predict_gpp(records, cfg):
    """3GPP predictions with the LOS flag of each record as the oracle."""
    d2d = np.array([distance_2d(record.tx, record.rx) for record in records])
    d3d, los = record_arrays(records)
    return np.atleast_1d(gpp_umi_pathloss(d2d, np.maximum(d3d, 1.0), cfg, los))


@dataclasses.dataclass(frozen=True)
class MlpConfig:
    hidden_size: int = 64
    num_layers: int = 3
    learning_rate: float = 1e-2
    num_steps: int = 3000
    seed: int = 0
    dtype: str = "float64"

    def validate(self):
        if self.hidden_size < 1 or self.num_layers < 2:
            raise ValidationError("MLP needs hidden_size >= 1 and num_layers >= 2")
        if self.learning_rate < 0.0 or self.num_steps < 0:
            raise ValidationError("learning_rate and num_steps must be >= 0")


def record_arrays(records):
    """The 3-D distances and LOS flags of records as two arrays."""
    d3d = np.array([record.distance_3d_m for record in records], dtype=np.float64)
    los = np.array([record.los for record in records], dtype=bool)
    return d3d, los


def distance_features(d3d_m, los):
    """Features (log10 d3D, los), shape [n, 2]."""
    d3d = np.maximum(np.asarray(d3d_m, dtype=np.float64).reshape(-1), 1.0)
    flags = np.asarray(los, dtype=np.float64).reshape(-1)
    return np.stack([np.log10(d3d), flags], axis=1)


def _safe_std(values):
    std = float(np.std(values))
    return std if std > 0.0 else 1.0


class DistanceMLP(layers.Layer):

    def __init__(self, config=None, **kwargs):
        """Build a ReLU MLP from (log10 d3D, los) to path loss.

        Args:
        - config: an MlpConfig; num_layers counts the linear layers.
        """
        config = config or MlpConfig()
        config.validate()
        super(DistanceMLP, self).__init__(dtype=config.dtype, **kwargs)
        self.mlp_config = config
        sizes = [2] + [config.hidden_size] * (config.num_layers - 1) + [1]
        self.kernels, self.biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.kernels.append(self.add_weight(
                name="dense_{}_kernel".format(i), shape=(fan_in, fan_out),
                initializer="zeros", dtype=config.dtype, trainable=True))
            self.biases.append(self.add_weight(
                name="dense_{}_bias".format(i), shape=(fan_out,),
                initializer="zeros", dtype=config.dtype, trainable=True))
        rng = np.random.default_rng(config.seed)
        for kernel, (fan_in, fan_out) in zip(self.kernels, zip(sizes[:-1], sizes[1:])):
            kernel.assign(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)).astype(
                config.dtype))
        self.feature_mean = np.zeros(2)
        self.feature_scale = np.ones(2)
        self.target_offset = 0.0
        self.target_scale = 1.0

    def build(self, input_shape=None):
        self.built = True

    def named_parameters(self):
        named = []
        for i, (kernel, bias) in enumerate(zip(self.kernels, self.biases)):
            named += [("dense_{}/kernel".format(i), kernel), ("dense_{}/bias".format(i), bias)]
        return named

    def call(self, x):
        for i, (kernel, bias) in enumerate(zip(self.kernels, self.biases)):
            x = ops.linear(x, kernel, bias)
            if i < len(self.kernels) - 1:
                x = ops.relu(x)
        return tf.reshape(x, [-1])

    def _inputs(self, d3d_m, los):
        features = (distance_features(d3d_m, los) - self.feature_mean) / self.feature_scale
        return tf.constant(features, dtype=self.mlp_config.dtype)

    def fit(self, records):
        """Full-batch Adam on standardized targets.

        Returns:
        - losses: the training loss of every step.
        """
        if not records:
            raise ValidationError("cannot fit the distance MLP on an empty split")
        d3d, los = record_arrays(records)
        features = distance_features(d3d, los)
        # the los column stays binary
        self.feature_mean = np.array([features[:, 0].mean(), 0.0])
        self.feature_scale = np.array([_safe_std(features[:, 0]), 1.0])
        targets = np.array([record.pathloss_db for record in records])
        self.target_offset = float(targets.mean())
        self.target_scale = _safe_std(targets)

        x = self._inputs(d3d, los)
        y = tf.constant((targets - self.target_offset) / self.target_scale,
                        dtype=self.mlp_config.dtype)
        params = [variable for _, variable in self.named_parameters()]
        state = ops.AdamState.zeros(params)
        losses = []
        for step in range(self.mlp_config.num_steps):
            with tf.GradientTape() as tape:
                loss = ops.mse_loss(self(x), y)
            grads = tape.gradient(loss, params)
            state = ops.adam_step(params, grads, state, self.mlp_config.learning_rate)
            losses.append(float(loss))
        if losses:
            logger.info("distance MLP: %d steps, final loss %.6f", len(losses), losses[-1])
        return losses

    def predict(self, records):
        return self.predict_links(*record_arrays(records))

    def predict_links(self, d3d_m, los):
        """Predict path loss in dB from distance and LOS arrays."""
        if len(np.atleast_1d(d3d_m)) == 0:
            return np.zeros(0)
        normalized = self(self._inputs(d3d_m, los)).numpy().astype(np.float64)
        return normalized * self.target_scale + self.target_offset

    def save(self, path):
        ops.save_weights(path, [
            (name, variable.numpy()) for name, variable in self.named_parameters()])
        with open(str(path) + ".json", "w", encoding="utf-8", newline="\n") as f:
            json.dump({
                "config": dataclasses.asdict(self.mlp_config),
                "feature_mean": self.feature_mean.tolist(),
                "feature_scale": self.feature_scale.tolist(),
                "target_offset": self.target_offset,
                "target_scale": self.target_scale}, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(str(path) + ".json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        mlp = cls(MlpConfig(**sidecar["config"]))
        mlp.feature_mean = np.array(sidecar["feature_mean"])
        mlp.feature_scale = np.array(sidecar["feature_scale"])
        mlp.target_offset = float(sidecar["target_offset"])
        mlp.target_scale = float(sidecar["target_scale"])
        named = mlp.named_parameters()
        records = ops.load_weights(path)
        if [name for name, _ in records] != [name for name, _ in named]:
            raise ValidationError("{}: parameter names do not match the MLP config".format(path))
        for (_, variable), (_, value) in zip(named, records):
            variable.assign(value.astype(mlp.mlp_config.dtype))
        return mlp
