"""Deterministic CPU CNN engine with analytic gradients.

Implements the two benchmark architectures (Conv-3 and Conv-5) with
ReLU, max pooling, inverted dropout, softmax cross-entropy, L2 weight
decay and Adam.  All computation is float64 numpy; runs are bit
reproducible given a seed.
"""

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ModelConfig:
    architecture: str = "conv3"        # conv3 | conv5
    filter_shape: str = "square3x3"    # square3x3 | freq_spanning
    n_classes: int = 50
    dropout: float = 0.5
    l2: float = 1e-3
    # Layer widths: conv3 has a single wide conv layer and aggressive
    # pooling; conv5 stacks three thinner conv layers.
    conv3_channels: int = 64
    conv3_pool: tuple = (4, 4)
    conv3_dense: int = 512
    conv5_channels: tuple = (32, 64, 64)
    conv5_pools: tuple = ((2, 2), (2, 1), (2, 1))
    conv5_dense: int = 256

    def __post_init__(self):
        if self.architecture not in ("conv3", "conv5"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.filter_shape not in ("square3x3", "freq_spanning"):
            raise ValueError(f"unknown filter shape {self.filter_shape!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")

    def to_dict(self):
        return {
            "architecture": self.architecture,
            "filter_shape": self.filter_shape,
            "n_classes": self.n_classes,
            "dropout": self.dropout,
            "l2": self.l2,
            "conv3_channels": self.conv3_channels,
            "conv3_pool": list(self.conv3_pool),
            "conv3_dense": self.conv3_dense,
            "conv5_channels": list(self.conv5_channels),
            "conv5_pools": [list(p) for p in self.conv5_pools],
            "conv5_dense": self.conv5_dense,
        }

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


@dataclass
class TrainConfig:
    batch_size: int = 100
    epochs: int = 1
    learning_rate: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    seed: int = 0
    init_std: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def truncated_normal(rng, shape, std):
    """Normal(0, std) samples re-drawn until they fall within 2 std."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2.0 * std
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2.0 * std
    return out


# ---------------------------------------------------------------------------
# primitive ops

def _im2col(x, kh, kw):
    n, c, h, w = x.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win.transpose(0, 2, 3, 1, 4, 5)  # (N, oh, ow, C, kh, kw)
    return np.ascontiguousarray(win).reshape(
        n, h - kh + 1, w - kw + 1, c * kh * kw)


def conv2d_forward(x, kernels):
    """Valid cross-correlation.

    x: (N, C, H, W); kernels: (F, C, kh, kw) -> (N, F, H-kh+1, W-kw+1).
    """
    n, c, h, w = x.shape
    f, ck, kh, kw = kernels.shape
    if ck != c:
        raise ValueError("channel mismatch")
    if kh > h or kw > w:
        raise ValueError("kernel larger than input")
    col = _im2col(x, kh, kw)
    out = col @ kernels.reshape(f, -1).T
    return out.transpose(0, 3, 1, 2)


def conv2d_backward(x, kernels, dout):
    """Gradients of valid cross-correlation wrt input and kernels."""
    n, c, h, w = x.shape
    f, _, kh, kw = kernels.shape
    oh, ow = h - kh + 1, w - kw + 1
    col = _im2col(x, kh, kw).reshape(n * oh * ow, c * kh * kw)
    dout_r = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    dkernels = (dout_r.T @ col).reshape(f, c, kh, kw)
    # scatter the column gradients back onto the input grid
    dcol = (dout_r @ kernels.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dcol = dcol.transpose(0, 3, 4, 5, 1, 2)  # (N, C, kh, kw, oh, ow)
    dx = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + oh, j:j + ow] += dcol[:, :, i, j]
    return dx, dkernels


def maxpool_forward(x, pool_h, pool_w):
    """Per-window max with stride equal to the pool dims.

    Ragged edges are padded with -inf, so output dims are
    ceil(H/pool_h) x ceil(W/pool_w).  Returns (out, argmax) where argmax
    holds flat indices into the padded windows for the backward pass.
    """
    n, c, h, w = x.shape
    oh = -(-h // pool_h)
    ow = -(-w // pool_w)
    xp = np.full((n, c, oh * pool_h, ow * pool_w), -np.inf)
    xp[:, :, :h, :w] = x
    windows = xp.reshape(n, c, oh, pool_h, ow, pool_w)
    windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, oh, ow, pool_h * pool_w)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool_backward(dout, argmax, x_shape, pool_h, pool_w):
    n, c, h, w = x_shape
    oh = -(-h // pool_h)
    ow = -(-w // pool_w)
    grid = np.zeros((n, c, oh, ow, pool_h * pool_w))
    np.put_along_axis(grid, argmax[..., None], dout[..., None], axis=-1)
    grid = grid.reshape(n, c, oh, ow, pool_h, pool_w)
    grid = grid.transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, oh * pool_h, ow * pool_w)
    return grid[:, :, :h, :w]


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# layers

class ConvLayer:
    def __init__(self, name, in_channels, out_channels, kh, kw):
        self.name = name
        self.kshape = (out_channels, in_channels, kh, kw)

    def param_shapes(self):
        f = self.kshape[0]
        return {f"{self.name}.W": self.kshape, f"{self.name}.b": (f,)}

    def forward(self, x, params, train, rng):
        self.x = x
        w = params[f"{self.name}.W"]
        b = params[f"{self.name}.b"]
        return conv2d_forward(x, w) + b[None, :, None, None]

    def backward(self, dout, params, grads):
        w = params[f"{self.name}.W"]
        dx, dw = conv2d_backward(self.x, w, dout)
        grads[f"{self.name}.W"] += dw
        grads[f"{self.name}.b"] += dout.sum(axis=(0, 2, 3))
        return dx

    def weight_names(self):
        return [f"{self.name}.W"]


class DenseLayer:
    def __init__(self, name, in_dim, out_dim):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim

    def param_shapes(self):
        return {f"{self.name}.W": (self.in_dim, self.out_dim),
                f"{self.name}.b": (self.out_dim,)}

    def forward(self, x, params, train, rng):
        self.x = x
        return x @ params[f"{self.name}.W"] + params[f"{self.name}.b"]

    def backward(self, dout, params, grads):
        grads[f"{self.name}.W"] += self.x.T @ dout
        grads[f"{self.name}.b"] += dout.sum(axis=0)
        return dout @ params[f"{self.name}.W"].T

    def weight_names(self):
        return [f"{self.name}.W"]


class ReluLayer:
    def __init__(self):
        pass

    def param_shapes(self):
        return {}

    def forward(self, x, params, train, rng):
        self.mask = x > 0
        return x * self.mask

    def backward(self, dout, params, grads):
        return dout * self.mask

    def weight_names(self):
        return []


class DropoutLayer:
    """Inverted dropout: active only in train mode, scaled by 1/(1-p)."""

    def __init__(self, rate):
        self.rate = rate

    def param_shapes(self):
        return {}

    def forward(self, x, params, train, rng):
        if not train or self.rate == 0.0:
            self.mask = None
            return x
        keep = 1.0 - self.rate
        self.mask = (rng.random(x.shape) < keep) / keep
        return x * self.mask

    def backward(self, dout, params, grads):
        if self.mask is None:
            return dout
        return dout * self.mask

    def weight_names(self):
        return []


class MaxPoolLayer:
    def __init__(self, pool_h, pool_w):
        self.pool_h = pool_h
        self.pool_w = pool_w

    def param_shapes(self):
        return {}

    def forward(self, x, params, train, rng):
        self.x_shape = x.shape
        out, self.argmax = maxpool_forward(x, self.pool_h, self.pool_w)
        return out

    def backward(self, dout, params, grads):
        return maxpool_backward(dout, self.argmax, self.x_shape,
                                self.pool_h, self.pool_w)

    def weight_names(self):
        return []


class FlattenLayer:
    def param_shapes(self):
        return {}

    def forward(self, x, params, train, rng):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, params, grads):
        return dout.reshape(self.shape)

    def weight_names(self):
        return []


# ---------------------------------------------------------------------------
# model assembly

def _conv_dims(filter_shape, in_h, in_w, first):
    if filter_shape == "square3x3":
        return 3, 3
    # freq_spanning: the first conv spans all frequency rows, collapsing
    # the output to height 1 and forcing 1-D convolution over time; any
    # later conv layers continue with 1x3 kernels.
    return (in_h, 3) if first else (1, 3)


def build_layers(cfg, input_shape):
    """Instantiate the layer stack for an input of (rows, cols)."""
    h, w = input_shape
    layers = []
    c = 1
    if cfg.architecture == "conv3":
        kh, kw = _conv_dims(cfg.filter_shape, h, w, first=True)
        layers.append(ConvLayer("conv1", c, cfg.conv3_channels, kh, kw))
        h, w, c = h - kh + 1, w - kw + 1, cfg.conv3_channels
        layers.append(ReluLayer())
        layers.append(DropoutLayer(cfg.dropout))
        ph, pw = cfg.conv3_pool
        layers.append(MaxPoolLayer(ph, pw))
        h, w = -(-h // ph), -(-w // pw)
        layers.append(FlattenLayer())
        layers.append(DenseLayer("fc1", c * h * w, cfg.conv3_dense))
        layers.append(ReluLayer())
        layers.append(DropoutLayer(cfg.dropout))
        layers.append(DenseLayer("fc2", cfg.conv3_dense, cfg.n_classes))
    else:
        for i, (channels, pool) in enumerate(
                zip(cfg.conv5_channels, cfg.conv5_pools)):
            kh, kw = _conv_dims(cfg.filter_shape, h, w, first=(i == 0))
            if kh > h or kw > w:
                raise ValueError(
                    f"conv{i + 1} kernel {kh}x{kw} does not fit {h}x{w}")
            layers.append(ConvLayer(f"conv{i + 1}", c, channels, kh, kw))
            h, w, c = h - kh + 1, w - kw + 1, channels
            layers.append(ReluLayer())
            if i == 0:
                layers.append(DropoutLayer(cfg.dropout))
            ph, pw = pool
            layers.append(MaxPoolLayer(ph, pw))
            h, w = -(-h // ph), -(-w // pw)
        layers.append(FlattenLayer())
        layers.append(DenseLayer("fc1", c * h * w, cfg.conv5_dense))
        layers.append(ReluLayer())
        layers.append(DropoutLayer(cfg.dropout))
        layers.append(DenseLayer("fc2", cfg.conv5_dense, cfg.n_classes))
    return layers


class Network:
    """A configured CNN with its parameters and forward/backward pass."""

    def __init__(self, cfg, input_shape, seed=0, init_std=0.05):
        self.cfg = cfg
        self.input_shape = tuple(input_shape)
        self.layers = build_layers(cfg, input_shape)
        self.params = init_params_for_layers(self.layers, seed, init_std)

    def forward(self, batch, train=False, rng=None):
        """Logits for a batch of images (N, rows, cols)."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 3:
            x = x[:, None, :, :]
        for layer in self.layers:
            x = layer.forward(x, self.params, train, rng)
        return x

    def loss_and_grads(self, batch, labels, rng=None, train=True):
        """Mean softmax cross-entropy plus L2, with analytic gradients."""
        labels = np.asarray(labels)
        logits = self.forward(batch, train=train, rng=rng)
        n = len(labels)
        probs = softmax(logits)
        ce = -np.mean(np.log(probs[np.arange(n), labels] + 1e-300))
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d, self.params, grads)
        l2 = 0.0
        for layer in self.layers:
            for name in layer.weight_names():
                w = self.params[name]
                l2 += np.sum(w * w)
                grads[name] += 2.0 * self.cfg.l2 * w
        return ce + self.cfg.l2 * l2, grads

    def predict(self, batch, chunk=500):
        """Class predictions in inference mode."""
        out = []
        batch = np.asarray(batch)
        for i in range(0, len(batch), chunk):
            logits = self.forward(batch[i:i + chunk], train=False)
            out.append(logits.argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)


def init_params_for_layers(layers, seed, init_std=0.05):
    """Truncated-normal weights, zero biases; bit reproducible per seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for layer in layers:
        for name, shape in layer.param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            else:
                params[name] = truncated_normal(rng, shape, init_std)
    return params


def init_params(cfg, input_shape, seed, init_std=0.05):
    return init_params_for_layers(build_layers(cfg, input_shape), seed,
                                  init_std)


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
                 eps=ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# checkpoints

_CKPT_MAGIC = b"NNCK"


def save_checkpoint(path, cfg, params):
    """Binary checkpoint: magic, config digest, named float32 blobs."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(cfg.digest())
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name]
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.astype("<f4").tobytes())


def load_checkpoint(path, cfg=None):
    """Read a checkpoint; verifies the config digest when cfg is given."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    digest = data[4:36]
    if cfg is not None and digest != cfg.digest():
        raise ValueError(f"{path}: checkpoint was written for a different "
                         "model configuration")
    pos = 36
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos)
        pos += 4 * size
        params[name] = arr.astype(np.float64).reshape(shape)
    return params, digest
