"""Small numpy classifiers over MFCC matrices, with hand-written backprop.

Two architectures, both consuming ``(batch, n_coeffs, n_frames)`` inputs:

* ``small_cnn``: conv3x3x16-ReLU, maxpool2, conv3x3x32-ReLU, maxpool2,
  dense 64-ReLU, dense n_classes. Convolutions use zero "same" padding and
  pooling drops an odd trailing row/column.
* ``mlp``: flatten, dense 128-ReLU, dense n_classes.

Parameters are plain ``dict[str, ndarray]`` in declaration order.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .audio import spec_rng
from .metrics import f1_macro

ARCHITECTURES = ("small_cnn", "mlp")
_ARCH_IDS = {name: i for i, name in enumerate(ARCHITECTURES)}
_SHUFFLE_SALT = 0x9E3779B97F4A7C15


class TrainingDiverged(RuntimeError):
    pass


def param_shapes(arch: str, n_coeffs: int, frames: int, n_classes: int) -> dict:
    if arch == "small_cnn":
        h, w = n_coeffs // 2 // 2, frames // 2 // 2
        if h < 1 or w < 1:
            raise ValueError(f"input {n_coeffs}x{frames} too small for two 2x2 poolings")
        return {
            "conv1.W": (3, 3, 1, 16), "conv1.b": (16,),
            "conv2.W": (3, 3, 16, 32), "conv2.b": (32,),
            "fc1.W": (h * w * 32, 64), "fc1.b": (64,),
            "fc2.W": (64, n_classes), "fc2.b": (n_classes,),
        }
    if arch == "mlp":
        return {
            "fc1.W": (n_coeffs * frames, 128), "fc1.b": (128,),
            "fc2.W": (128, n_classes), "fc2.b": (n_classes,),
        }
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def arch_of(params: dict) -> str:
    return "small_cnn" if "conv1.W" in params else "mlp"


def init_model(arch: str, input_frames: int, n_classes: int, seed: int,
               n_coeffs: int = 40, dtype=np.float32) -> dict:
    """He-uniform weights for ReLU layers, Glorot-uniform for the output layer, zero biases."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = spec_rng(seed)
    params = {}
    shapes = param_shapes(arch, n_coeffs, input_frames, n_classes)
    for name, shape in shapes.items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[:-1]))
        if name == "fc2.W":
            limit = np.sqrt(6.0 / (fan_in + shape[-1]))
        else:
            limit = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


# --------------------------------------------------------------------------- layers


@njit(cache=True)
def _im2col(x):
    # (B, H, W, C) -> (B*H*W, 9*C), zero "same" padding, columns ordered (di, dj, c)
    B, H, Wd, C = x.shape
    cols = np.zeros((B * H * Wd, 9 * C), dtype=x.dtype)
    for b in range(B):
        for i in range(H):
            for j in range(Wd):
                row = (b * H + i) * Wd + j
                for di in range(3):
                    ii = i + di - 1
                    if ii < 0 or ii >= H:
                        continue
                    for dj in range(3):
                        jj = j + dj - 1
                        if jj < 0 or jj >= Wd:
                            continue
                        base = (di * 3 + dj) * C
                        for c in range(C):
                            cols[row, base + c] = x[b, ii, jj, c]
    return cols


@njit(cache=True)
def _col2im(dcols, B, H, Wd, C):
    dx = np.zeros((B, H, Wd, C), dtype=dcols.dtype)
    for b in range(B):
        for i in range(H):
            for j in range(Wd):
                row = (b * H + i) * Wd + j
                for di in range(3):
                    ii = i + di - 1
                    if ii < 0 or ii >= H:
                        continue
                    for dj in range(3):
                        jj = j + dj - 1
                        if jj < 0 or jj >= Wd:
                            continue
                        base = (di * 3 + dj) * C
                        for c in range(C):
                            dx[b, ii, jj, c] += dcols[row, base + c]
    return dx


def _conv_forward(x, W, b):
    B, H, Wd, C = x.shape
    cols = _im2col(np.ascontiguousarray(x))
    out = (cols @ W.reshape(9 * C, -1) + b).reshape(B, H, Wd, -1)
    return out, cols


def _conv_backward(dout, cols, W, x_shape, need_dx=True):
    B, H, Wd, C = x_shape
    cout = W.shape[-1]
    d2 = dout.reshape(-1, cout)
    dW = (cols.T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = d2 @ W.reshape(9 * C, cout).T
    return _col2im(dcols, B, H, Wd, C), dW, db


@njit(cache=True)
def _relu_pool(z):
    # ReLU then 2x2 max pool; arg holds the flat offset (0..3) of the first maximum
    B, H, W, C = z.shape
    h, w = H // 2, W // 2
    out = np.empty((B, h, w, C), dtype=z.dtype)
    arg = np.empty((B, h, w, C), dtype=np.uint8)
    for b in range(B):
        for i in range(h):
            for j in range(w):
                for c in range(C):
                    best = max(z[b, 2 * i, 2 * j, c], 0.0)
                    k = 0
                    for q in range(1, 4):
                        v = max(z[b, 2 * i + q // 2, 2 * j + q % 2, c], 0.0)
                        if v > best:
                            best = v
                            k = q
                    out[b, i, j, c] = best
                    arg[b, i, j, c] = k
    return out, arg


@njit(cache=True)
def _relu_pool_backward(dout, arg, z):
    # route each pooled gradient to its argmax, gated by the ReLU of the pre-activation
    dz = np.zeros(z.shape, dtype=dout.dtype)
    B, h, w, C = dout.shape
    for b in range(B):
        for i in range(h):
            for j in range(w):
                for c in range(C):
                    q = arg[b, i, j, c]
                    ii, jj = 2 * i + q // 2, 2 * j + q % 2
                    if z[b, ii, jj, c] > 0:
                        dz[b, ii, jj, c] = dout[b, i, j, c]
    return dz


def _forward(params, x, keep=False):
    x = np.asarray(x, dtype=params["fc1.W"].dtype)
    cache = {}
    if "conv1.W" in params:
        a0 = x[..., None]
        z1, cols1 = _conv_forward(a0, params["conv1.W"], params["conv1.b"])
        p1, arg1 = _relu_pool(z1)
        z2, cols2 = _conv_forward(p1, params["conv2.W"], params["conv2.b"])
        p2, arg2 = _relu_pool(z2)
        flat = p2.reshape(p2.shape[0], -1)
        if keep:
            cache.update(a0_shape=a0.shape, cols1=cols1, z1=z1, arg1=arg1, p1_shape=p1.shape,
                         cols2=cols2, z2=z2, arg2=arg2, p2_shape=p2.shape)
    else:
        flat = x.reshape(x.shape[0], -1)
    z3 = flat @ params["fc1.W"] + params["fc1.b"]
    a3 = np.maximum(z3, 0)
    logits = a3 @ params["fc2.W"] + params["fc2.b"]
    if keep:
        cache.update(flat=flat, z3=z3, a3=a3)
    return logits, cache


def forward(params: dict, batch) -> np.ndarray:
    """Logits of shape ``(batch, n_classes)`` for inputs ``(batch, n_coeffs, n_frames)``."""
    batch = np.asarray(batch)
    expected = _input_shape(params)
    if batch.ndim != 3 or (expected is not None and batch.shape[1] * batch.shape[2] != expected):
        raise ValueError(f"batch shape {batch.shape} does not fit the model")
    return _forward(params, batch)[0]


def _input_shape(params):
    if "conv1.W" in params:
        return None
    return params["fc1.W"].shape[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grad(params: dict, batch, labels) -> tuple[float, dict]:
    """Mean softmax cross-entropy and its gradient w.r.t. every parameter."""
    labels = np.asarray(labels, dtype=int)
    logits, c = _forward(params, batch, keep=True)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must be one valid class id per batch row")
    loss = cross_entropy(logits, labels)

    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = {}
    grads["fc2.W"] = c["a3"].T @ dlogits
    grads["fc2.b"] = dlogits.sum(axis=0)
    dz3 = (dlogits @ params["fc2.W"].T) * (c["z3"] > 0)
    grads["fc1.W"] = c["flat"].T @ dz3
    grads["fc1.b"] = dz3.sum(axis=0)
    if "conv1.W" in params:
        dflat = dz3 @ params["fc1.W"].T
        dp2 = dflat.reshape(c["p2_shape"])
        dz2 = _relu_pool_backward(np.ascontiguousarray(dp2), c["arg2"], c["z2"])
        dp1, grads["conv2.W"], grads["conv2.b"] = _conv_backward(
            dz2, c["cols2"], params["conv2.W"], c["p1_shape"])
        dz1 = _relu_pool_backward(dp1, c["arg1"], c["z1"])
        _, grads["conv1.W"], grads["conv1.b"] = _conv_backward(
            dz1, c["cols1"], params["conv1.W"], c["a0_shape"], need_dx=False)
    return loss, {name: grads[name].astype(params[name].dtype, copy=False) for name in params}


def logits_of(params: dict, features, batch_size: int = 256) -> np.ndarray:
    features = np.asarray(features)
    out = [forward(params, features[i : i + batch_size]) for i in range(0, len(features), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, params["fc2.b"].shape[0]))


def predict(params: dict, features, batch_size: int = 256) -> np.ndarray:
    """Argmax class ids; ties go to the lowest id."""
    return logits_of(params, features, batch_size).argmax(axis=1)


def evaluate_loss(params: dict, features, labels, batch_size: int = 256) -> float:
    return cross_entropy(logits_of(params, features, batch_size), np.asarray(labels, dtype=int))


# ------------------------------------------------------------------------ training


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    patience: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * g * g
            params[k] -= (self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(
                params[k].dtype, copy=False)


class SGDMomentum:
    def __init__(self, params, lr, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for k, g in grads.items():
            self.velocity[k] *= self.momentum
            self.velocity[k] -= self.lr * g
            params[k] += self.velocity[k]


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class History:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def append(self, epoch, train_loss, val_loss, val_f1):
        self.epochs.append((epoch, train_loss, val_loss, val_f1))

    def __len__(self):
        return len(self.epochs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_f1"])
        for e, tl, vl, vf in self.epochs:
            w.writerow([e, f"{tl:.8f}", f"{vl:.8f}", f"{vf:.6f}"])
        return buf.getvalue()


def train(arch: str, train_x, train_y, val_x, val_y, config: TrainConfig = TrainConfig(),
          n_classes: int | None = None, log=None) -> tuple[dict, History]:
    """Mini-batch training with early stopping on validation loss.

    Returns the parameters of the best-validation-loss epoch and the
    per-epoch history.
    """
    train_x = np.asarray(train_x, dtype=np.float32)
    val_x = np.asarray(val_x, dtype=np.float32)
    train_y = np.asarray(train_y, dtype=int)
    val_y = np.asarray(val_y, dtype=int)
    if len(train_y) == 0 or len(val_y) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if n_classes is None:
        n_classes = int(max(train_y.max(), val_y.max())) + 1
    n_coeffs, frames = train_x.shape[1:]
    params = init_model(arch, frames, n_classes, config.seed, n_coeffs=n_coeffs)
    if config.optimizer == "adam":
        opt = Adam(params, config.learning_rate)
    else:
        opt = SGDMomentum(params, config.learning_rate, config.momentum)
    rng = spec_rng((config.seed + _SHUFFLE_SALT) % 2**64)
    stopper = EarlyStopping(config.patience)
    best = {k: v.copy() for k, v in params.items()}
    history = History()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_y))
        total = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grad(params, train_x[idx], train_y[idx])
            if not np.isfinite(loss):
                worst = max(float(np.max(np.abs(v))) for v in params.values())
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}: loss={loss}, "
                    f"max |param|={worst:.3g}, lr={config.learning_rate}"
                )
            opt.step(params, grads)
            total += loss * len(idx)
        train_loss = total / len(train_y)
        val_logits = logits_of(params, val_x)
        val_loss = cross_entropy(val_logits, val_y)
        val_f1 = f1_macro(val_logits.argmax(axis=1), val_y)
        history.append(epoch, train_loss, val_loss, val_f1)
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f} f1 {val_f1:.4f}")
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best = {k: v.copy() for k, v in params.items()}
        if stop:
            break
    history.best_epoch = stopper.best_epoch
    return best, history


# ---------------------------------------------------------------------- checkpoints

_MAGIC = b"SBCK"


def save_checkpoint(path, params: dict) -> None:
    """``SBCK``, u32 version, u32 arch id, u32 tensor count, per-tensor u32 ndim + dims,
    then every tensor as little-endian float32 in declaration order."""
    arch = arch_of(params)
    tensors = list(params.values())
    header = [_MAGIC, struct.pack("<III", 1, _ARCH_IDS[arch], len(tensors))]
    for t in tensors:
        header.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
    body = [np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors]
    Path(path).write_bytes(b"".join(header + body))


def load_checkpoint(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, arch_id, count = struct.unpack_from("<III", data, 4)
    if version != 1 or arch_id >= len(ARCHITECTURES):
        raise ValueError(f"{path}: unsupported checkpoint (version {version}, arch {arch_id})")
    arch = ARCHITECTURES[arch_id]
    pos = 16
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, pos)
        shapes.append(struct.unpack_from(f"<{ndim}I", data, pos + 4))
        pos += 4 + 4 * ndim
    if arch == "small_cnn":
        names = ["conv1.W", "conv1.b", "conv2.W", "conv2.b", "fc1.W", "fc1.b", "fc2.W", "fc2.b"]
    else:
        names = ["fc1.W", "fc1.b", "fc2.W", "fc2.b"]
    if len(names) != count:
        raise ValueError(f"{path}: {arch} expects {len(names)} tensors, found {count}")
    params = {}
    for name, shape in zip(names, shapes):
        n = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * n
    return params
