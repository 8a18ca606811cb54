"""Differentiable tensor ops, gradient checks, Adam and weight files, MIT License"""


import dataclasses

import numpy as np
import tensorflow as tf

from plformer.errors import NonFiniteError
from plformer.errors import ShapeError
from plformer.errors import ValidationError


WEIGHTS_MAGIC = b"PLWTS 1\n"

_DEBUG = False


def set_debug(flag):
    """Toggle a finite check on the output of every op."""
    global _DEBUG
    _DEBUG = bool(flag)


def _shape(x):
    return tuple(int(d) for d in x.shape)


def _checked(y, op):
    if _DEBUG and not bool(tf.reduce_all(tf.math.is_finite(y))):
        raise NonFiniteError("{} produced a non-finite value".format(op))
    return y


def matmul(a, b):
    """Matrix product over the last two axes.

    Args:
    - a: a Tensor with shape [..., n, k]
    - b: a Tensor with shape [k, m] or [..., k, m] with the same leading
        axes as a

    Returns:
    - y: a Tensor with shape [..., n, m]
    """
    sa, sb = _shape(a), _shape(b)
    if len(sa) < 2 or len(sb) < 2 or sa[-1] != sb[-2]:
        raise ShapeError("matmul", sa, sb, "inner dimensions differ")
    if len(sb) == 2:
        return _checked(tf.tensordot(a, b, axes=[[len(sa) - 1], [0]]), "matmul")
    if sa[:-2] != sb[:-2]:
        raise ShapeError("matmul", sa, sb, "leading axes differ")
    return _checked(tf.linalg.matmul(a, b), "matmul")


def add(a, b):
    """Add b to a, broadcasting b over the leading axes of a.

    Args:
    - a: a Tensor with shape [..., *s]
    - b: a Tensor with shape s

    Returns:
    - y: a Tensor the same shape as a
    """
    sa, sb = _shape(a), _shape(b)
    if len(sb) > len(sa) or sa[len(sa) - len(sb):] != sb:
        raise ShapeError("add", sa, sb, "second operand must match trailing axes")
    return _checked(a + b, "add")


def scale(x, s):
    return _checked(x * s, "scale")


def softmax(x):
    """Softmax over the last axis."""
    return _checked(tf.nn.softmax(x, axis=-1), "softmax")


def layer_norm(x, gain, bias, epsilon=1e-5):
    """Layer normalization over the last axis.

    Args:
    - x: a Tensor with shape [..., d]
    - gain: a Tensor with shape [d]
    - bias: a Tensor with shape [d]
    - epsilon: added to the variance for stability

    Returns:
    - y: a Tensor the same shape as x
    """
    sx = _shape(x)
    for name, param in (("gain", gain), ("bias", bias)):
        if _shape(param) != sx[-1:]:
            raise ShapeError("layer_norm " + name, sx, _shape(param))
    mean_x = tf.reduce_mean(x, axis=-1, keepdims=True)
    centered = x - mean_x
    variance = tf.reduce_mean(tf.square(centered), axis=-1, keepdims=True)
    normalized = centered * tf.math.rsqrt(variance + epsilon)
    return _checked(normalized * gain + bias, "layer_norm")


def gelu(x):
    return _checked(tf.nn.gelu(x, approximate=False), "gelu")


def relu(x):
    return _checked(tf.nn.relu(x), "relu")


def linear(x, kernel, bias=None):
    """Affine projection of the last axis.

    Args:
    - x: a Tensor with shape [..., d_in]
    - kernel: a Tensor with shape [d_in, d_out]
    - bias: an optional Tensor with shape [d_out]

    Returns:
    - y: a Tensor with shape [..., d_out]
    """
    y = matmul(x, kernel)
    return y if bias is None else add(y, bias)


def concat(tensors, axis):
    shapes = [_shape(t) for t in tensors]
    rank = len(shapes[0])
    axis = axis % rank
    for s in shapes[1:]:
        if len(s) != rank or s[:axis] + s[axis + 1:] != shapes[0][:axis] + shapes[0][axis + 1:]:
            raise ShapeError("concat", shapes[0], s, "axes other than {} differ".format(axis))
    return _checked(tf.concat(tensors, axis=axis), "concat")


def tensor_slice(x, begin, size):
    """Slice a block of x starting at begin; size -1 takes the rest."""
    sx = _shape(x)
    if len(begin) != len(sx) or len(size) != len(sx):
        raise ShapeError("slice", sx, (len(begin), len(size)), "rank of begin/size")
    for dim, b, s in zip(sx, begin, size):
        end = dim if s == -1 else b + s
        if b < 0 or end > dim or end < b:
            raise ShapeError("slice", sx, tuple(size), "block outside tensor")
    return tf.slice(x, begin, size)


def mean(x, axis=None):
    return _checked(tf.reduce_mean(x, axis=axis), "mean")


def mse_loss(prediction, target):
    """Mean squared error between two tensors of identical shape."""
    sp, st = _shape(prediction), _shape(target)
    if sp != st:
        raise ShapeError("mse_loss", sp, st)
    return _checked(tf.reduce_mean(tf.square(prediction - target)), "mse_loss")


@dataclasses.dataclass(frozen=True)
class GradCheckFailure:
    input_index: int
    element: int
    analytic: float
    numeric: float
    rel_error: float


@dataclasses.dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    failures: tuple

    @property
    def passed(self):
        return self.max_rel_error < self.tol


def grad_check(f, inputs, h=1e-5, tol=1e-4, max_elements=None, seed=0, floor=1e-3):
    """Compare tape gradients of a scalar function with central differences.

    Args:
    - f: a function of the inputs returning a scalar Tensor.
    - inputs: arrays or variables; arrays are wrapped in float64 variables,
        variables are perturbed in place and restored.
    - h: the finite-difference step.
    - tol: the pass threshold on the maximum relative error.
    - max_elements: check a seeded random subset of at most this many
        elements per input; all elements when None.
    - floor: the smallest denominator of the relative error, so gradients
        near zero are compared absolutely.

    Returns:
    - report: a GradCheckReport listing every element at or above tol.
    """
    variables = [
        v if hasattr(v, "assign") else tf.Variable(np.asarray(v, dtype=np.float64))
        for v in inputs]
    with tf.GradientTape() as tape:
        y = f(*variables)
    if _shape(y) not in ((), (1,)):
        raise ValidationError("grad_check needs a scalar function, got shape {}".format(
            _shape(y)))
    grads = tape.gradient(y, variables)

    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    failures = []
    for index, (variable, grad) in enumerate(zip(variables, grads)):
        base = np.array(variable.numpy())
        analytic = np.zeros(base.shape) if grad is None else np.asarray(grad, dtype=np.float64)
        elements = np.arange(base.size)
        if max_elements is not None and base.size > max_elements:
            elements = np.sort(rng.choice(base.size, size=max_elements, replace=False))
        perturbed = base.copy()
        for element in elements:
            perturbed.flat[element] = base.flat[element] + h
            variable.assign(perturbed)
            f_plus = float(tf.reshape(f(*variables), []))
            perturbed.flat[element] = base.flat[element] - h
            variable.assign(perturbed)
            f_minus = float(tf.reshape(f(*variables), []))
            perturbed.flat[element] = base.flat[element]
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic.flat[element])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
            checked += 1
            if rel >= tol:
                failures.append(GradCheckFailure(index, int(element), a, numeric, rel))
        variable.assign(base)
    return GradCheckReport(max_rel_error=worst, tol=tol, checked=checked,
                           failures=tuple(failures))


class AdamState:
    """Adam moments of a parameter list, held as the slot variables of a
    Keras Adam optimizer that is created on the first step."""

    def __init__(self, num_params):
        self.num_params = num_params
        self.optimizer = None
        self.hyperparameters = None

    @classmethod
    def zeros(cls, params):
        return cls(len(params))

    @property
    def step(self):
        if self.optimizer is None:
            return 0
        return int(self.optimizer.iterations.numpy())


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """Apply one bias-corrected Adam update in place.

    Args:
    - params: the variables to update, in the same order on every step.
    - grads: one gradient per parameter, None counts as zero.
    - state: the AdamState of params.
    - lr: the learning rate of this step.

    Returns:
    - state: the AdamState after the step.
    """
    if len(params) != len(grads) or len(params) != state.num_params:
        raise ValidationError("adam_step got {} params, {} grads and state for {}".format(
            len(params), len(grads), state.num_params))
    hyperparameters = (float(beta1), float(beta2), float(epsilon))
    if state.optimizer is None:
        state.optimizer = tf.keras.optimizers.Adam(
            learning_rate=float(lr), beta_1=beta1, beta_2=beta2, epsilon=epsilon)
        state.hyperparameters = hyperparameters
    elif state.hyperparameters != hyperparameters:
        raise ValidationError("Adam hyperparameters changed from {} to {}".format(
            state.hyperparameters, hyperparameters))
    dense = []
    for param, grad in zip(params, grads):
        if grad is None:
            grad = tf.zeros_like(param)
        grad = tf.cast(grad, param.dtype)
        if _shape(grad) != _shape(param):
            raise ShapeError("adam_step", _shape(param), _shape(grad))
        dense.append(grad)
    state.optimizer.learning_rate = float(lr)
    state.optimizer.apply_gradients(zip(dense, params))
    return state


def clip_by_global_norm(grads, clip_norm):
    """Clip gradients jointly; None entries stay None."""
    present = [g for g in grads if g is not None]
    if not present or clip_norm is None:
        return list(grads), None
    clipped, norm = tf.clip_by_global_norm(present, clip_norm)
    clipped = iter(clipped)
    return [None if g is None else next(clipped) for g in grads], float(norm)


def save_weights(path, named_arrays):
    """Write named arrays as a PLWTS file of little-endian 32-bit floats.

    Args:
    - path: the output file.
    - named_arrays: a list of (name, array) pairs in a fixed order; names
        must not contain whitespace.
    """
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write("{}\n".format(len(named_arrays)).encode("ascii"))
        for name, array in named_arrays:
            if not name or any(c.isspace() for c in name):
                raise ValidationError("invalid weight name {!r}".format(name))
            data = np.ascontiguousarray(np.asarray(array), dtype="<f4")
            header = " ".join([name, str(data.ndim)] + [str(d) for d in data.shape])
            f.write((header + "\n").encode("utf-8"))
            f.write(data.tobytes(order="C"))


def load_weights(path):
    """Read a PLWTS file into a list of (name, float32 array) pairs."""
    with open(path, "rb") as f:
        if f.readline() != WEIGHTS_MAGIC:
            raise ValidationError("{}: not a PLWTS 1 weight file".format(path))
        try:
            count = int(f.readline().decode("ascii"))
            records = []
            for _ in range(count):
                fields = f.readline().decode("utf-8").split()
                name, ndim = fields[0], int(fields[1])
                shape = tuple(int(d) for d in fields[2:2 + ndim])
                if len(shape) != ndim:
                    raise ValueError("truncated shape for {}".format(name))
                size = int(np.prod(shape, dtype=np.int64))
                raw = f.read(4 * size)
                if len(raw) != 4 * size:
                    raise ValueError("truncated data for {}".format(name))
                records.append((name, np.frombuffer(raw, dtype="<f4").reshape(shape).copy()))
        except (ValueError, IndexError, UnicodeDecodeError) as e:
            raise ValidationError("{}: malformed weight file ({})".format(path, e))
        if f.read(1):
            raise ValidationError("{}: trailing bytes after {} records".format(path, count))
    return records
