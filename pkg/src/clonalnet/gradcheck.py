"""Finite-difference verification of the analytic gradients.

Central differences with step 1e-5 at 64-bit precision, compared against
:func:`clonalnet.nn.backward` and :func:`clonalnet.nn.backward_from_feature`
on randomly seeded parameter/input instances. Coordinates are sampled per
parameter array; relative error uses a small denominator floor so exact-zero
gradients compare cleanly against finite-difference noise.

The loss is smooth everywhere except where a pooling winner changes. A
coordinate whose probe interval straddles such a change has no defined
derivative there, so the difference quotient says nothing about the analytic
gradient; those coordinates are detected (the argmax maps at +step and -step
differ) and replaced by a fresh draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import CorruptionError

DEFAULT_STEP = 1e-5
REL_FLOOR = 1e-6


def numerical_gradient(f, x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite differences of scalar ``f`` at every coordinate of x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        grad[idx] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(REL_FLOOR, abs(analytic), abs(numeric))
    return abs(analytic - numeric) / denom


def _sample_probe(params: nn.LayerStack, image: np.ndarray,
                  label: int) -> tuple[float, np.ndarray]:
    feature, trace = nn.forward_features(params, image)
    loss = nn.cross_entropy(nn.forward_output(params, feature), label)
    return loss, trace.argmax


def _clone_probe(params: nn.LayerStack, image: np.ndarray, label: int,
                 offset: np.ndarray) -> tuple[float, np.ndarray]:
    feature, trace = nn.forward_features(params, image)
    loss = nn.cross_entropy(nn.forward_output(params, feature + offset), label)
    return loss, trace.argmax


def sample_loss(params: nn.LayerStack, image: np.ndarray, label: int) -> float:
    return _sample_probe(params, image, label)[0]


def clone_loss(params: nn.LayerStack, image: np.ndarray, label: int,
               offset: np.ndarray) -> float:
    """Loss of a clone under the additive-offset model: the offset between
    clone and parent feature is held constant while parameters vary."""
    return _clone_probe(params, image, label, offset)[0]


@dataclass
class CheckResult:
    seed: int
    max_rel_error_plain: float
    max_rel_error_clone: float

    @property
    def max_rel_error(self) -> float:
        return max(self.max_rel_error_plain, self.max_rel_error_clone)


def _max_error_over_coords(params, analytic: nn.Gradients, probe_fn, rng,
                           coords_per_array: int, step: float) -> float:
    worst = 0.0
    for name in nn.Gradients.ARRAYS:
        array = getattr(params, name)
        grad = getattr(analytic, name)
        flat = array.ravel()
        want = min(coords_per_array, flat.size)
        checked = 0
        for k in rng.permutation(flat.size):
            if checked == want:
                break
            original = flat[k]
            flat[k] = original + step
            up, up_state = probe_fn(params)
            flat[k] = original - step
            down, down_state = probe_fn(params)
            flat[k] = original
            if not np.array_equal(up_state, down_state):
                continue
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(grad.ravel()[k], numeric))
            checked += 1
        if checked == 0:
            raise CorruptionError(
                f"no differentiable coordinate found in {name}"
            )
    return worst


def check_instance(seed: int, arch: nn.ArchConfig | None = None,
                   coords_per_array: int = 6,
                   step: float = DEFAULT_STEP) -> CheckResult:
    """Full-stack gradient check on one seeded random instance.

    Checks both the plain sample path and the clone path (additive-offset
    model) against central finite differences on sampled coordinates of
    every parameter array.
    """
    arch = arch or nn.ArchConfig()
    rng = np.random.default_rng(seed)
    params = nn.init_params(int(rng.integers(2**31)), arch)
    image = rng.normal(scale=0.5, size=(arch.image_size, arch.image_size))
    label = int(rng.integers(arch.num_classes))
    offset = rng.normal(scale=0.1, size=arch.feature_width)

    feature, trace = nn.forward_features(params, image)
    probs = nn.forward_output(params, feature)
    plain = nn.backward(params, trace, probs, label)
    clone = nn.backward_from_feature(params, trace, feature + offset, label)

    err_plain = _max_error_over_coords(
        params, plain, lambda p: _sample_probe(p, image, label),
        rng, coords_per_array, step,
    )
    err_clone = _max_error_over_coords(
        params, clone, lambda p: _clone_probe(p, image, label, offset),
        rng, coords_per_array, step,
    )
    return CheckResult(seed, err_plain, err_clone)


def run_gradient_audit(num_instances: int = 20, arch: nn.ArchConfig | None = None,
                       coords_per_array: int = 6) -> list[CheckResult]:
    return [check_instance(seed, arch, coords_per_array)
            for seed in range(num_instances)]
