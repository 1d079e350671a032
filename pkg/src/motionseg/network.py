"""Dilated acausal temporal fully-convolutional network.

Layout for a width-``w`` config with ``C`` hidden channels::

    input (3J, T)
      -> conv w, dilation 1          -> ReLU      (layer 1, kernel spans all joints)
      -> conv w, dilation w          -> ReLU
      -> conv w, dilation w**2       -> ReLU
      -> conv w, dilation w**3       -> ReLU
      -> conv w, dilation w**4       -> normalized ReLU
      -> 1x1 conv to K classes       -> logits (K, T)

Every convolution is zero same-padded on both sides, so the output at frame
``t`` sees ``w**5`` frames centred on ``t``. Parameters live in a plain dict
keyed ``w1..w5``, ``b1..b5``, ``wh``, ``bh``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .motion_image import MotionImage

EPS_NR = 1e-5


@dataclass(frozen=True)
class NetworkConfig:
    w: int = 3
    J: int = 19
    K: int = 10
    C: int = 64
    L_dilated: int = 4
    epsilon_nr: float = EPS_NR

    def __post_init__(self):
        if self.w < 1 or self.w % 2 == 0:
            raise ValueError(f"convolution width must be a positive odd integer, got {self.w}")
        if self.J < 1:
            raise ValueError(f"joint count must be >= 1, got {self.J}")
        if self.K < 2:
            raise ValueError(f"class count must be >= 2, got {self.K}")
        if self.C < 1:
            raise ValueError(f"channel count must be >= 1, got {self.C}")
        if self.L_dilated < 0:
            raise ValueError("L_dilated must be >= 0")
        if not self.epsilon_nr > 0:
            raise ValueError("epsilon_nr must be > 0")

    @property
    def n_conv(self) -> int:
        return 1 + self.L_dilated

    def dilation(self, layer: int) -> int:
        """Dilation of conv layer ``layer`` (1-based): ``w**(layer-1)``."""
        return self.w ** (layer - 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def param_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    C, w = config.C, config.w
    shapes = {"w1": (C, 3 * config.J, w), "b1": (C,)}
    for l in range(2, config.n_conv + 1):
        shapes[f"w{l}"] = (C, C, w)
        shapes[f"b{l}"] = (C,)
    shapes["wh"] = (config.K, C, 1)
    shapes["bh"] = (config.K,)
    return shapes


def init_params(config: NetworkConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
            continue
        fan_out, fan_in = shape[0], shape[1] * shape[2]
        if name == "wh":
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        else:
            bound = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(config: NetworkConfig) -> dict[str, np.ndarray]:
    return {k: np.zeros(s) for k, s in param_shapes(config).items()}


def count_params(config: NetworkConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


def receptive_field(w: int, layers: int = 5) -> int:
    if w < 1 or layers < 1:
        raise ValueError("w and layers must be >= 1")
    return 1 + (w - 1) * sum(w**k for k in range(layers))


# -- primitives --------------------------------------------------------------


def _pad(x, pad):
    xp = np.zeros((x.shape[0], x.shape[1] + 2 * pad))
    xp[:, pad : pad + x.shape[1]] = x
    return xp


def conv_temporal(x, kernel, bias, dilation: int = 1) -> np.ndarray:
    """Same-padded acausal dilated cross-correlation.

    ``out[o, t] = bias[o] + sum_{c,k} x[c, t + (k - (w-1)/2) * d] * kernel[o, c, k]``
    with out-of-range frames read as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    c_out, c_in, w = kernel.shape
    if x.ndim != 2 or x.shape[0] != c_in:
        raise ValueError(f"input has shape {x.shape}, kernel expects {c_in} channels")
    if w % 2 == 0:
        raise ValueError("kernel width must be odd")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if np.shape(bias) != (c_out,):
        raise ValueError(f"bias shape {np.shape(bias)} does not match {c_out} output channels")
    T = x.shape[1]
    pad = (w - 1) // 2 * dilation
    xp = _pad(x, pad)
    taps = np.ascontiguousarray(kernel.transpose(2, 0, 1))  # strided slices miss BLAS
    out = np.repeat(np.asarray(bias, dtype=np.float64)[:, None], T, axis=1)
    for k in range(w):
        out += taps[k] @ xp[:, k * dilation : k * dilation + T]
    return out


def _conv_backward(grad_out, x, kernel, dilation):
    """Gradients of :func:`conv_temporal` w.r.t. input, kernel and bias."""
    _, _, w = kernel.shape
    T = x.shape[1]
    pad = (w - 1) // 2 * dilation
    xp = _pad(x, pad)
    taps = np.ascontiguousarray(kernel.transpose(2, 0, 1))
    dxp = np.zeros_like(xp)
    dk = np.empty_like(taps)
    for k in range(w):
        sl = slice(k * dilation, k * dilation + T)
        dk[k] = grad_out @ xp[:, sl].T
        dxp[:, sl] += taps[k].T @ grad_out
    return dxp[:, pad : pad + T], dk.transpose(1, 2, 0).copy(), grad_out.sum(axis=1)


def relu(x):
    return np.maximum(x, 0.0)


def normalized_relu(x, epsilon_nr: float = EPS_NR) -> np.ndarray:
    r = np.maximum(x, 0.0)
    return r / (r.max(axis=0, keepdims=True) + epsilon_nr)


def _normalized_relu_backward(grad_out, x, epsilon_nr):
    r = np.maximum(x, 0.0)
    top = r.argmax(axis=0)
    cols = np.arange(x.shape[1])
    denom = r[top, cols] + epsilon_nr
    dr = grad_out / denom
    # derivative through the per-frame max in the denominator
    dr[top, cols] -= (grad_out * r).sum(axis=0) / denom**2
    return dr * (x > 0)


def softmax_per_frame(logits) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=0, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=0, keepdims=True))


# -- network -----------------------------------------------------------------


def _input_matrix(img, config: NetworkConfig) -> np.ndarray:
    if isinstance(img, MotionImage):
        x = img.flat()
    else:
        x = np.asarray(img, dtype=np.float64)
        if x.ndim == 3:
            x = x.transpose(1, 0, 2).reshape(-1, x.shape[2])
    if x.shape[0] != 3 * config.J:
        raise ValueError(
            f"input has {x.shape[0] // 3} joints but the network expects J={config.J}"
        )
    return x


def layer1_forward(img, params, config: NetworkConfig) -> np.ndarray:
    x = _input_matrix(img, config)
    return relu(conv_temporal(x, params["w1"], params["b1"], 1))


def forward(params, img, config: NetworkConfig):
    """Return ``(logits, cache)``; ``img`` is a MotionImage, (3, J, T) or (3J, T) array."""
    x = _input_matrix(img, config)
    acts = [x]
    pre = []
    a = x
    n = config.n_conv
    for l in range(1, n + 1):
        z = conv_temporal(a, params[f"w{l}"], params[f"b{l}"], config.dilation(l))
        pre.append(z)
        a = normalized_relu(z, config.epsilon_nr) if l == n else relu(z)
        acts.append(a)
    logits = np.ascontiguousarray(params["wh"][:, :, 0]) @ a + params["bh"][:, None]
    return logits, {"acts": acts, "pre": pre}


def _check_labels(labels, config, T):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (T,):
        raise ValueError(f"{labels.size} labels for {T} frames")
    if labels.size and (labels.min() < 0 or labels.max() >= config.K):
        raise ValueError(f"label ids must lie in [0, {config.K})")
    return labels


def loss(params, img, labels, config: NetworkConfig) -> float:
    logits, _ = forward(params, img, config)
    labels = _check_labels(labels, config, logits.shape[1])
    logp = _log_softmax(logits)
    return float(-logp[labels, np.arange(labels.size)].mean())


def loss_and_gradients(params, img, labels, config: NetworkConfig):
    """Mean per-frame cross-entropy and its exact gradient w.r.t. every parameter."""
    logits, cache = forward(params, img, config)
    T = logits.shape[1]
    labels = _check_labels(labels, config, T)
    cols = np.arange(T)
    logp = _log_softmax(logits)
    value = float(-logp[labels, cols].mean())

    g = np.exp(logp)
    g[labels, cols] -= 1.0
    g /= T

    grads = {}
    acts, pre = cache["acts"], cache["pre"]
    n = config.n_conv
    grads["wh"] = (g @ acts[n].T)[:, :, None]
    grads["bh"] = g.sum(axis=1)
    ga = params["wh"][:, :, 0].T @ g
    for l in range(n, 0, -1):
        z = pre[l - 1]
        if l == n:
            gz = _normalized_relu_backward(ga, z, config.epsilon_nr)
        else:
            gz = ga * (z > 0)
        ga, grads[f"w{l}"], grads[f"b{l}"] = _conv_backward(
            gz, acts[l - 1], params[f"w{l}"], config.dilation(l)
        )
    return value, grads


def predict(params, img, config: NetworkConfig) -> np.ndarray:
    logits, _ = forward(params, img, config)
    return logits.argmax(axis=0)  # first maximum wins ties
