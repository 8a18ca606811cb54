"""Pre-norm transformer layer built from plformer.ops, MIT License"""


import numpy as np
import tensorflow as tf
from tensorflow.keras import layers

from plformer import ops
from plformer.errors import ShapeError
from plformer.errors import ValidationError


class TransformerLayer(layers.Layer):

    def __init__(self, hidden_size, num_heads, mlp_dim, **kwargs):
        """Build a single pre-norm transformer layer.

        Args:
        - hidden_size: the width D of every token.
        - num_heads: the number of attention heads, must divide D.
        - mlp_dim: the width of the hidden MLP layer.
        """
        super(TransformerLayer, self).__init__(**kwargs)
        if hidden_size % num_heads != 0:
            raise ValidationError("hidden size {} is not divisible by {} heads".format(
                hidden_size, num_heads))
        self.hidden_size = hidden_size
        self.num_heads = num_heads
        self.mlp_dim = mlp_dim

        D = hidden_size
        shapes = [
            ("ln1_gain", (D,)), ("ln1_bias", (D,)),
            ("query_kernel", (D, D)), ("query_bias", (D,)),
            ("key_kernel", (D, D)), ("key_bias", (D,)),
            ("value_kernel", (D, D)), ("value_bias", (D,)),
            ("out_kernel", (D, D)), ("out_bias", (D,)),
            ("ln2_gain", (D,)), ("ln2_bias", (D,)),
            ("fc1_kernel", (D, mlp_dim)), ("fc1_bias", (mlp_dim,)),
            ("fc2_kernel", (mlp_dim, D)), ("fc2_bias", (D,))]
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
        """Normal kernels, zero biases and unit layer-norm gains."""
        for name in self._param_names:
            variable = getattr(self, name)
            shape = tuple(int(d) for d in variable.shape)
            if name.endswith("_kernel"):
                value = rng.normal(0.0, stddev, size=shape)
            elif name.endswith("_gain"):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            variable.assign(value.astype(np.dtype(self.dtype)))

    def _split_heads(self, x, batch, length):
        depth = self.hidden_size // self.num_heads
        x = tf.reshape(x, [batch, length, self.num_heads, depth])
        return tf.transpose(x, [0, 2, 1, 3])

    def attention(self, x):
        """Multi-head scaled dot-product self-attention.

        Args:
        - x: a 3-Tensor with shape [batch_dim, length, hidden_size]

        Returns:
        - out: a 3-Tensor with shape [batch_dim, length, hidden_size]
        - probs: a 4-Tensor with shape [batch_dim, heads, length, length]
            whose rows sum to one
        """
        batch, length = int(x.shape[0]), int(x.shape[1])
        q = self._split_heads(ops.linear(x, self.query_kernel, self.query_bias), batch, length)
        k = self._split_heads(ops.linear(x, self.key_kernel, self.key_bias), batch, length)
        v = self._split_heads(ops.linear(x, self.value_kernel, self.value_bias), batch, length)
        depth = self.hidden_size // self.num_heads
        scores = ops.scale(
            ops.matmul(q, tf.transpose(k, [0, 1, 3, 2])), 1.0 / np.sqrt(depth))
        probs = ops.softmax(scores)
        context = tf.transpose(ops.matmul(probs, v), [0, 2, 1, 3])
        context = tf.reshape(context, [batch, length, self.hidden_size])
        return ops.linear(context, self.out_kernel, self.out_bias), probs

    def call(self, x, return_attention=False):
        """Apply a = x + MHSA(LN(x)) then x' = a + MLP(LN(a)).

        Args:
        - x: a 3-Tensor with shape [batch_dim, length, hidden_size]
        - return_attention: also return the attention probabilities.

        Returns:
        - out_x: a 3-Tensor with shape [batch_dim, length, hidden_size]
        """
        if len(x.shape) != 3 or int(x.shape[-1]) != self.hidden_size:
            raise ShapeError("transformer layer", tuple(x.shape), (None, None, self.hidden_size))

        c, probs = self.attention(ops.layer_norm(x, self.ln1_gain, self.ln1_bias))
        a = ops.add(x, c)

        c = ops.layer_norm(a, self.ln2_gain, self.ln2_bias)
        c = ops.gelu(ops.linear(c, self.fc1_kernel, self.fc1_bias))
        c = ops.linear(c, self.fc2_kernel, self.fc2_bias)
        out = ops.add(a, c)
        if return_attention:
            return out, probs
        return out
