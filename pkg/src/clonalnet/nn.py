"""Five-layer network stack: convolution, 2x2 max-pool, a first fully
connected layer producing the feature vector that the clonal layer operates
on, and a softmax output layer. Trained with plain stochastic gradient
descent on cross-entropy loss.

The clonal layer itself lives in :mod:`clonalnet.clonal`; ``train_epoch``
accepts it as an optional hook that expands each batch's feature vectors.
Clone error is routed back through the parent sample's cached trace, with
the mutation offset treated as an additive constant (identity Jacobian), so
clone gradients reach the convolution kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CorruptionError, DimensionError
from .tensor import conv2d_valid, dense, dense_backward, maxpool2, maxpool2_backward

TANH_SCALE = 1.7159
TANH_SLOPE = 2.0 / 3.0


def scaled_tanh(x):
    """1.7159 * tanh(2x/3), the classic symmetric sigmoid."""
    return TANH_SCALE * np.tanh(TANH_SLOPE * np.asarray(x, dtype=np.float64))


def scaled_tanh_prime(x):
    t = np.tanh(TANH_SLOPE * np.asarray(x, dtype=np.float64))
    return TANH_SCALE * TANH_SLOPE * (1.0 - t * t)


@dataclass(frozen=True)
class ArchConfig:
    """Dimensions of the stack. Defaults give 28x28 -> conv5x5 (8 maps)
    -> 24x24 -> pool -> 12x12 -> feature width 64 -> class scores."""

    image_size: int = 28
    num_maps: int = 8
    kernel_size: int = 5
    feature_width: int = 64
    num_classes: int = 10

    @property
    def conv_out(self) -> int:
        return self.image_size - self.kernel_size + 1

    @property
    def pool_out(self) -> int:
        return self.conv_out // 2

    @property
    def flat_size(self) -> int:
        return self.num_maps * self.pool_out * self.pool_out

    def validate(self) -> None:
        if min(self.image_size, self.num_maps, self.kernel_size,
               self.feature_width, self.num_classes) < 1:
            raise ConfigurationError(f"non-positive dimension in {self}")
        if self.kernel_size > self.image_size:
            raise ConfigurationError(
                f"kernel {self.kernel_size} exceeds image {self.image_size}"
            )
        if self.conv_out % 2:
            raise ConfigurationError(
                f"conv output extent {self.conv_out} must be even for 2x2 pooling"
            )


@dataclass
class LayerStack:
    conv_kernels: np.ndarray   # (f, k, k)
    conv_bias: np.ndarray      # (f,)
    fc1_weights: np.ndarray    # (d, p)
    fc1_bias: np.ndarray       # (d,)
    out_weights: np.ndarray    # (c, d)
    out_bias: np.ndarray       # (c,)
    # input/output map wiring; one input image, so shape (f, 1), all True
    connection_table: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.connection_table is None:
            self.connection_table = np.ones(
                (self.conv_kernels.shape[0], 1), dtype=bool
            )

    @property
    def num_maps(self) -> int:
        return self.conv_kernels.shape[0]

    @property
    def feature_width(self) -> int:
        return self.fc1_weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.out_weights.shape[0]


@dataclass
class Gradients:
    conv_kernels: np.ndarray
    conv_bias: np.ndarray
    fc1_weights: np.ndarray
    fc1_bias: np.ndarray
    out_weights: np.ndarray
    out_bias: np.ndarray

    ARRAYS = ("conv_kernels", "conv_bias", "fc1_weights", "fc1_bias",
              "out_weights", "out_bias")

    @classmethod
    def zeros_like(cls, params: LayerStack) -> "Gradients":
        return cls(*(np.zeros_like(getattr(params, name)) for name in cls.ARRAYS))

    def add_(self, other: "Gradients") -> "Gradients":
        for name in self.ARRAYS:
            getattr(self, name).__iadd__(getattr(other, name))
        return self

    def scale_(self, factor: float) -> "Gradients":
        for name in self.ARRAYS:
            getattr(self, name).__imul__(factor)
        return self


@dataclass
class ForwardTrace:
    """Per-sample cache: everything backprop needs to replay the stack."""

    image: np.ndarray        # (H, W)
    conv_pre: np.ndarray     # (f, oh, ow), pre-activation
    argmax: np.ndarray       # (f, oh/2, ow/2), flat winners per map
    pooled_flat: np.ndarray  # (p,)
    fc1_pre: np.ndarray      # (d,)
    feature: np.ndarray      # (d,)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            # zero is a legal no-op rate (useful for pure-evaluation passes)
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")


def init_params(seed: int, dims: ArchConfig) -> LayerStack:
    """Uniform +/- sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    dims.validate()
    rng = np.random.default_rng(seed)
    k, f = dims.kernel_size, dims.num_maps

    def uniform(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    return LayerStack(
        conv_kernels=uniform(k * k, f * k * k, (f, k, k)),
        conv_bias=np.zeros(f),
        fc1_weights=uniform(dims.flat_size, dims.feature_width,
                            (dims.feature_width, dims.flat_size)),
        fc1_bias=np.zeros(dims.feature_width),
        out_weights=uniform(dims.feature_width, dims.num_classes,
                            (dims.num_classes, dims.feature_width)),
        out_bias=np.zeros(dims.num_classes),
    )


def forward_features(params: LayerStack, image: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Run the stack up to the feature vector; cache the full trace."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"image must be 2-D, got shape {img.shape}")
    f = params.num_maps
    conv_pre = []
    for m in range(f):
        acc = np.full((img.shape[0] - params.conv_kernels.shape[1] + 1,
                       img.shape[1] - params.conv_kernels.shape[2] + 1),
                      params.conv_bias[m])
        if params.connection_table[m, 0]:
            acc = acc + conv2d_valid(img, params.conv_kernels[m])
        conv_pre.append(acc)
    conv_pre = np.stack(conv_pre)
    conv_act = scaled_tanh(conv_pre)
    pooled, argmax = zip(*(maxpool2(conv_act[m]) for m in range(f)))
    pooled_flat = np.stack(pooled).ravel()
    if pooled_flat.shape[0] != params.fc1_weights.shape[1]:
        raise DimensionError(
            f"flattened pool size {pooled_flat.shape[0]} does not match "
            f"fc1 input width {params.fc1_weights.shape[1]}"
        )
    fc1_pre = dense(params.fc1_weights, params.fc1_bias, pooled_flat)
    feature = scaled_tanh(fc1_pre)
    trace = ForwardTrace(
        image=img,
        conv_pre=conv_pre,
        argmax=np.stack(argmax),
        pooled_flat=pooled_flat,
        fc1_pre=fc1_pre,
        feature=feature,
    )
    return feature, trace


def forward_output(params: LayerStack, feature: np.ndarray) -> np.ndarray:
    """Class probabilities: softmax over the output layer's scores."""
    feat = np.asarray(feature, dtype=np.float64)
    if feat.shape != (params.feature_width,):
        raise DimensionError(
            f"feature shape {feat.shape} does not match width {params.feature_width}"
        )
    logits = dense(params.out_weights, params.out_bias, feat)
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def cross_entropy(probabilities: np.ndarray, true_label: int) -> float:
    return float(-np.log(probabilities[true_label]))


def _feature_error(params: LayerStack, feature: np.ndarray,
                   probabilities: np.ndarray, true_label: int):
    """Output-layer gradients plus the error signal at the feature layer."""
    delta = probabilities.astype(np.float64).copy()
    delta[true_label] -= 1.0
    grad_out_w, grad_out_b, dfeature = dense_backward(
        params.out_weights, feature, delta
    )
    return grad_out_w, grad_out_b, dfeature


def _lower_grads(params: LayerStack, trace: ForwardTrace, dfeature: np.ndarray):
    """Backprop a feature-layer error signal through fc1, pooling, conv.

    Linear in ``dfeature`` for a fixed trace, which is what lets clone
    error signals be summed per parent before a single pass.
    """
    dz1 = dfeature * scaled_tanh_prime(trace.fc1_pre)
    grad_fc1_w, grad_fc1_b, dpool_flat = dense_backward(
        params.fc1_weights, trace.pooled_flat, dz1
    )
    f = params.num_maps
    ph, pw = trace.argmax.shape[1:]
    dpool = dpool_flat.reshape(f, ph, pw)
    grad_conv_k = np.zeros_like(params.conv_kernels)
    grad_conv_b = np.zeros_like(params.conv_bias)
    for m in range(f):
        dconv_act = maxpool2_backward(trace.argmax[m], dpool[m])
        dconv_pre = dconv_act * scaled_tanh_prime(trace.conv_pre[m])
        grad_conv_b[m] = dconv_pre.sum()
        if params.connection_table[m, 0]:
            grad_conv_k[m] = conv2d_valid(trace.image, dconv_pre)
    return grad_conv_k, grad_conv_b, grad_fc1_w, grad_fc1_b


def backward(params: LayerStack, trace: ForwardTrace,
             probabilities: np.ndarray, true_label: int) -> Gradients:
    """Cross-entropy gradients for one sample from its own forward pass."""
    if probabilities.shape != (params.num_classes,):
        raise CorruptionError(
            f"probabilities shape {probabilities.shape} does not match "
            f"{params.num_classes} classes"
        )
    if trace.feature.shape != (params.feature_width,):
        raise CorruptionError(
            f"trace feature width {trace.feature.shape} does not match params"
        )
    grad_out_w, grad_out_b, dfeature = _feature_error(
        params, trace.feature, probabilities, true_label
    )
    grad_conv_k, grad_conv_b, grad_fc1_w, grad_fc1_b = _lower_grads(
        params, trace, dfeature
    )
    return Gradients(grad_conv_k, grad_conv_b, grad_fc1_w, grad_fc1_b,
                     grad_out_w, grad_out_b)


def backward_from_feature(params: LayerStack, trace: ForwardTrace,
                          clone_feature: np.ndarray, true_label: int) -> Gradients:
    """Gradients for a clone of ``trace``'s sample.

    The clone feature is fed to the output layer; the resulting error signal
    at the feature layer flows through the parent's trace (the offset between
    clone and parent feature is treated as an additive constant), so all
    layers including the convolution kernels receive gradient.
    """
    clone = np.asarray(clone_feature, dtype=np.float64)
    if clone.shape != (params.feature_width,):
        raise DimensionError(
            f"clone feature shape {clone.shape} does not match width "
            f"{params.feature_width}"
        )
    probabilities = forward_output(params, clone)
    grad_out_w, grad_out_b, dfeature = _feature_error(
        params, clone, probabilities, true_label
    )
    grad_conv_k, grad_conv_b, grad_fc1_w, grad_fc1_b = _lower_grads(
        params, trace, dfeature
    )
    return Gradients(grad_conv_k, grad_conv_b, grad_fc1_w, grad_fc1_b,
                     grad_out_w, grad_out_b)


def sgd_step(params: LayerStack, gradients: Gradients, learning_rate: float) -> LayerStack:
    """theta <- theta - lr * g, returning a fresh parameter set."""
    updated = {
        name: getattr(params, name) - learning_rate * getattr(gradients, name)
        for name in Gradients.ARRAYS
    }
    return LayerStack(connection_table=params.connection_table.copy(), **updated)


def predict(params: LayerStack, image: np.ndarray) -> int:
    feature, _ = forward_features(params, image)
    return int(np.argmax(forward_output(params, feature)))


def evaluate(params: LayerStack, images: np.ndarray, labels: np.ndarray) -> float:
    """Misclassification rate over a sample set."""
    wrong = sum(predict(params, img) != int(lab) for img, lab in zip(images, labels))
    return wrong / len(labels)


def train_epoch(params: LayerStack, batches, config: TrainConfig,
                clonal_hook=None) -> tuple[LayerStack, float]:
    """One pass over ``batches``: list of (images, labels) pairs.

    Per batch: forward every sample; when a clonal hook is present, it maps
    (features, labels) to a list of (clone_feature, label, parent_index)
    tuples. Original and clone gradients are averaged together before a
    single SGD step. Returns the updated parameters and the misclassification
    rate over the originals.
    """
    batches = list(batches)
    if not batches:
        raise ConfigurationError("train_epoch requires at least one batch")
    mistakes = 0
    total = 0
    for images, labels in batches:
        n = len(labels)
        if n == 0:
            raise ConfigurationError("empty batch")
        features, traces, probs = [], [], []
        for img in images:
            feat, trace = forward_features(params, img)
            features.append(feat)
            traces.append(trace)
            probs.append(forward_output(params, feat))

        grads = Gradients.zeros_like(params)
        feat_err = [np.zeros(params.feature_width) for _ in range(n)]
        contributors = n
        for i in range(n):
            label = int(labels[i])
            if np.argmax(probs[i]) != label:
                mistakes += 1
            gw, gb, df = _feature_error(params, features[i], probs[i], label)
            grads.out_weights += gw
            grads.out_bias += gb
            feat_err[i] += df

        if clonal_hook is not None:
            for clone_feat, label, parent in clonal_hook(features, labels):
                gw, gb, df = _feature_error(
                    params, clone_feat, forward_output(params, clone_feat),
                    int(label),
                )
                grads.out_weights += gw
                grads.out_bias += gb
                feat_err[parent] += df
                contributors += 1

        for i in range(n):
            gck, gcb, gfw, gfb = _lower_grads(params, traces[i], feat_err[i])
            grads.conv_kernels += gck
            grads.conv_bias += gcb
            grads.fc1_weights += gfw
            grads.fc1_bias += gfb

        grads.scale_(1.0 / contributors)
        params = sgd_step(params, grads, config.learning_rate)
        total += n
    return params, mistakes / total
