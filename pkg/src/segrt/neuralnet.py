"""Minimal dense-tensor neural engine: 2-D convolution, max pooling,
bidirectional LSTM, dense layers, ReLU, inverted dropout, masked MSE, Adam,
and central-finite-difference gradient verification.

Tensors are numpy arrays in row-major layout with a leading batch axis;
the single-example forms in the layer contracts are accepted and promoted.
Training runs in float32; verification uses float64 explicitly.  Setting
``SEGRT_NN_DEBUG=1`` turns on finiteness assertions after every layer.
"""

from __future__ import annotations

import math
import os
from typing import Callable, Optional, Sequence

import numpy as np

DEBUG_CHECKS = os.environ.get("SEGRT_NN_DEBUG", "") not in ("", "0")

_blas_limiter = None


def limit_blas_threads(count: Optional[int] = None) -> None:
    """Cap BLAS thread pools (default 1, override SEGRT_BLAS_THREADS).

    This engine works on small matrices where BLAS thread-pool handoffs
    cost more than they save and add tens of milliseconds of latency
    jitter; entry points call this once.
    """
    global _blas_limiter
    if count is None:
        count = int(os.environ.get("SEGRT_BLAS_THREADS", "1"))
    try:
        import threadpoolctl

        _blas_limiter = threadpoolctl.threadpool_limits(count, "blas")
    except ImportError:
        pass


class ShapeError(ValueError):
    """An input's shape violates a layer's contract."""


def _check_finite(name: str, x: np.ndarray) -> None:
    if DEBUG_CHECKS and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values after {name}")


class Parameter:
    """A learnable tensor with its gradient and Adam state."""

    __slots__ = ("value", "grad", "m", "v", "step", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.step = 0
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0


def _uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Dense:
    """Affine map y = xW + b over the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32, name: str = "dense"):
        self.d_in, self.d_out = d_in, d_out
        self.weight = Parameter(_uniform_init(rng, (d_in, d_out), d_in, dtype), f"{name}.W")
        self.bias = Parameter(np.zeros(d_out, dtype=dtype), f"{name}.b")

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"dense expects (*, {self.d_in}), got {x.shape}")
        self._x = x
        self._squeeze = squeeze
        out = x @ self.weight.value + self.bias.value
        _check_finite(self.weight.name, out)
        return out[0] if squeeze else out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._squeeze:
            dout = dout[None, :]
        self.weight.grad += self._x.T @ dout
        self.bias.grad += dout.sum(axis=0)
        dx = dout @ self.weight.value.T
        return dx[0] if self._squeeze else dx

    def params(self) -> list[Parameter]:
        return [self.weight, self.bias]


class ReLU:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._mask


class Dropout:
    """Inverted dropout: kept units are scaled by 1/(1-rate) in train mode,
    inference is the identity."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate
        self.rng = rng
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout if self._mask is None else dout * self._mask


def _as_batched(x: np.ndarray, ndim: int, what: str) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim - 1:
        return x[None, ...], True
    if x.ndim != ndim:
        raise ShapeError(f"{what} expects {ndim - 1}- or {ndim}-d input, got {x.shape}")
    return x, False


class Conv2D:
    """Valid (unpadded) stride-1 cross-correlation over (N, H, W, C_in)."""

    def __init__(self, kh: int, kw: int, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float32, name: str = "conv"):
        self.kh, self.kw, self.c_in, self.c_out = kh, kw, c_in, c_out
        fan_in = kh * kw * c_in
        self.weight = Parameter(_uniform_init(rng, (kh, kw, c_in, c_out), fan_in, dtype), f"{name}.W")
        self.bias = Parameter(np.zeros(c_out, dtype=dtype), f"{name}.b")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, squeeze = _as_batched(x, 4, "conv2d")
        n, h, w, c = x.shape
        if c != self.c_in:
            raise ShapeError(f"conv2d expects {self.c_in} input channels, got {c}")
        if self.kh > h or self.kw > w:
            raise ShapeError(f"kernel ({self.kh},{self.kw}) larger than input ({h},{w})")
        oh, ow = h - self.kh + 1, w - self.kw + 1
        windows = np.lib.stride_tricks.sliding_window_view(x, (self.kh, self.kw), axis=(1, 2))
        # (N, OH, OW, C, kh, kw) -> (N*OH*OW, kh*kw*C) matching the
        # (kh, kw, C, F) weight layout.
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, -1)
        self._cols = cols
        self._x_shape = x.shape
        self._squeeze = squeeze
        w_mat = self.weight.value.reshape(-1, self.c_out)
        out = (cols @ w_mat + self.bias.value).reshape(n, oh, ow, self.c_out)
        _check_finite(self.weight.name, out)
        return out[0] if squeeze else out

    def backward(self, dout: np.ndarray, need_dx: bool = True) -> Optional[np.ndarray]:
        if self._squeeze:
            dout = dout[None, ...]
        n, oh, ow, _ = dout.shape
        dflat = dout.reshape(-1, self.c_out)
        self.weight.grad += (self._cols.T @ dflat).reshape(self.weight.value.shape)
        self.bias.grad += dflat.sum(axis=0)
        if not need_dx:
            return None
        w_mat = self.weight.value.reshape(-1, self.c_out)
        dcols = (dflat @ w_mat.T).reshape(n, oh, ow, self.kh, self.kw, self.c_in)
        dx = np.zeros(self._x_shape, dtype=dout.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, i : i + oh, j : j + ow, :] += dcols[:, :, :, i, j, :]
        return dx[0] if self._squeeze else dx

    def params(self) -> list[Parameter]:
        return [self.weight, self.bias]


class MaxPool2D:
    """Non-overlapping max pooling; stride equals the window and trailing
    remainder rows/columns are dropped."""

    def __init__(self, ph: int, pw: int):
        self.ph, self.pw = ph, pw
        self.last_argmax: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, squeeze = _as_batched(x, 4, "maxpool2d")
        n, h, w, c = x.shape
        if self.ph > h or self.pw > w:
            raise ShapeError(f"pool window ({self.ph},{self.pw}) larger than input ({h},{w})")
        oh, ow = h // self.ph, w // self.pw
        cropped = x[:, : oh * self.ph, : ow * self.pw, :]
        tiles = (
            cropped.reshape(n, oh, self.ph, ow, self.pw, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, oh, ow, c, self.ph * self.pw)
        )
        self.last_argmax = tiles.argmax(axis=-1)
        out = np.take_along_axis(tiles, self.last_argmax[..., None], axis=-1)[..., 0]
        self._x_shape = x.shape
        self._squeeze = squeeze
        return out[0] if squeeze else out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._squeeze:
            dout = dout[None, ...]
        n, h, w, c = self._x_shape
        oh, ow = h // self.ph, w // self.pw
        dtiles = np.zeros((n, oh, ow, c, self.ph * self.pw), dtype=dout.dtype)
        np.put_along_axis(dtiles, self.last_argmax[..., None], dout[..., None], axis=-1)
        dcropped = (
            dtiles.reshape(n, oh, ow, c, self.ph, self.pw)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, oh * self.ph, ow * self.pw, c)
        )
        dx = np.zeros(self._x_shape, dtype=dout.dtype)
        dx[:, : oh * self.ph, : ow * self.pw, :] = dcropped
        return dx[0] if self._squeeze else dx

    def params(self) -> list[Parameter]:
        return []


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: one ufunc call, no overflow for any finite input.
    return 0.5 * np.tanh(0.5 * x) + 0.5


class _LstmDirection:
    """One direction of an LSTM; gate layout along the 4H axis is
    [input, forget, output, candidate] (sigmoid gates contiguous) and the
    forget bias starts at 1."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator, dtype, name: str):
        self.d_in, self.hidden = d_in, hidden
        self.wx = Parameter(_uniform_init(rng, (d_in, 4 * hidden), d_in, dtype), f"{name}.Wx")
        self.wh = Parameter(_uniform_init(rng, (hidden, 4 * hidden), hidden, dtype), f"{name}.Wh")
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0
        self.bias = Parameter(bias, f"{name}.b")

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, t, _ = x.shape
        hsize = self.hidden
        x_proj = x.reshape(n * t, self.d_in) @ self.wx.value
        x_proj = x_proj.reshape(n, t, 4 * hsize) + self.bias.value
        h = np.zeros((n, hsize), dtype=x.dtype)
        c = np.zeros((n, hsize), dtype=x.dtype)
        self._x = x
        self._gates = np.empty((t, n, 4 * hsize), dtype=x.dtype)
        self._cells = np.empty((t, n, hsize), dtype=x.dtype)
        self._tanh_c = np.empty((t, n, hsize), dtype=x.dtype)
        self._h_prev = np.empty((t, n, hsize), dtype=x.dtype)
        outputs = np.empty((n, t, hsize), dtype=x.dtype)
        for step in range(t):
            self._h_prev[step] = h
            z = x_proj[:, step, :] + h @ self.wh.value
            gates = self._gates[step]
            gates[:, : 3 * hsize] = _sigmoid(z[:, : 3 * hsize])
            gates[:, 3 * hsize :] = np.tanh(z[:, 3 * hsize :])
            i = gates[:, :hsize]
            f = gates[:, hsize : 2 * hsize]
            o = gates[:, 2 * hsize : 3 * hsize]
            g = gates[:, 3 * hsize :]
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            self._cells[step] = c
            self._tanh_c[step] = tc
            outputs[:, step, :] = h
        return outputs

    def backward(self, dout: np.ndarray, need_dx: bool) -> Optional[np.ndarray]:
        n, t, _ = dout.shape
        hsize = self.hidden
        dz_all = np.empty((n, t, 4 * hsize), dtype=dout.dtype)
        dh_next = np.zeros((n, hsize), dtype=dout.dtype)
        dc_next = np.zeros((n, hsize), dtype=dout.dtype)
        for step in range(t - 1, -1, -1):
            gates = self._gates[step]
            i = gates[:, :hsize]
            f = gates[:, hsize : 2 * hsize]
            o = gates[:, 2 * hsize : 3 * hsize]
            g = gates[:, 3 * hsize :]
            tc = self._tanh_c[step]
            c_prev = self._cells[step - 1] if step > 0 else np.zeros_like(tc)
            dh = dout[:, step, :] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = dz_all[:, step, :]
            dz[:, :hsize] = di * i * (1.0 - i)
            dz[:, hsize : 2 * hsize] = df * f * (1.0 - f)
            dz[:, 2 * hsize : 3 * hsize] = do * o * (1.0 - o)
            dz[:, 3 * hsize :] = dg * (1.0 - g * g)
            dh_next = dz[:, :] @ self.wh.value.T
        dz_flat = dz_all.reshape(n * t, 4 * hsize)
        x_flat = self._x.reshape(n * t, self.d_in)
        hp_flat = self._h_prev.transpose(1, 0, 2).reshape(n * t, hsize)
        self.wx.grad += x_flat.T @ dz_flat
        self.wh.grad += hp_flat.T @ dz_flat
        self.bias.grad += dz_flat.sum(axis=0)
        if not need_dx:
            return None
        return (dz_flat @ self.wx.value.T).reshape(n, t, self.d_in)

    def params(self) -> list[Parameter]:
        return [self.wx, self.wh, self.bias]


class BiLSTM:
    """Bidirectional LSTM over (N, T, D) returning per-step [forward;
    backward] concatenations of width 2*hidden, zero initial states."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator, dtype=np.float32, name: str = "bilstm"):
        self.d_in, self.hidden = d_in, hidden
        self.fw = _LstmDirection(d_in, hidden, rng, dtype, f"{name}.fw")
        self.bw = _LstmDirection(d_in, hidden, rng, dtype, f"{name}.bw")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, squeeze = _as_batched(x, 3, "bilstm")
        if x.shape[2] != self.d_in:
            raise ShapeError(f"bilstm expects feature width {self.d_in}, got {x.shape[2]}")
        if x.shape[1] < 1:
            raise ShapeError("bilstm needs at least one timestep")
        self._squeeze = squeeze
        out_fw = self.fw.forward(x)
        out_bw = self.bw.forward(x[:, ::-1, :])[:, ::-1, :]
        out = np.concatenate([out_fw, out_bw], axis=2)
        _check_finite("bilstm", out)
        return out[0] if squeeze else out

    def backward(self, dout: np.ndarray, need_dx: bool = True) -> Optional[np.ndarray]:
        if self._squeeze:
            dout = dout[None, ...]
        hsize = self.hidden
        dx_fw = self.fw.backward(dout[:, :, :hsize], need_dx)
        dx_bw = self.bw.backward(dout[:, ::-1, hsize:], need_dx)
        if not need_dx:
            return None
        dx = dx_fw + dx_bw[:, ::-1, :]
        return dx[0] if self._squeeze else dx

    def params(self) -> list[Parameter]:
        return self.fw.params() + self.bw.params()


def masked_mse_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over active positions only.

    loss = sum(mask * (pred - target)^2) / sum(mask); the returned gradient
    with respect to ``pred`` is exactly zero wherever ``mask`` is zero.
    """
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ShapeError(
            f"loss shapes differ: pred {pred.shape}, target {target.shape}, mask {mask.shape}"
        )
    total = float(mask.sum())
    if total == 0:
        raise ValueError("masked MSE needs at least one active position")
    diff = (pred - target) * mask
    loss = float((diff * diff).sum() / total)
    grad = (2.0 / total) * diff
    return loss, grad


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    for p in params:
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * p.grad
        p.v = beta2 * p.v + (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype, copy=False)
        p.zero_grad()


def gradient_check(
    loss_fn: Callable[[bool], float],
    params: Sequence[Parameter],
    h: float = 1e-5,
    samples_per_param: int = 8,
    rng: Optional[np.random.Generator] = None,
    tie_state: Optional[Callable[[], list[np.ndarray]]] = None,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(grad)`` must run a deterministic forward pass and, when
    ``grad`` is true, accumulate gradients into ``params``.  ``tie_state``,
    when given, returns the pooling argmax arrays of the last forward pass;
    coordinates whose tie state changes under the +/-h probes are excluded.
    Returns max over sampled coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss_fn(True)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    max_err = 0.0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        size = flat.shape[0]
        if size <= samples_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_param, replace=False)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + h
            loss_plus = loss_fn(False)
            ties_plus = [a.copy() for a in tie_state()] if tie_state else None
            flat[idx] = original - h
            loss_minus = loss_fn(False)
            ties_minus = [a.copy() for a in tie_state()] if tie_state else None
            flat[idx] = original
            if ties_plus is not None and any(
                not np.array_equal(a, b) for a, b in zip(ties_plus, ties_minus)
            ):
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            a = float(grad.reshape(-1)[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            max_err = max(max_err, abs(a - numeric) / denom)
    return max_err


def dense_relu_fragment(seed: int):
    """dense -> relu -> dense -> masked MSE in float64, for verification.

    Returns (loss_fn, params, tie_state=None).
    """
    rng = np.random.default_rng(seed)
    fc1 = Dense(12, 8, rng, dtype=np.float64)
    relu = ReLU()
    fc2 = Dense(8, 5, rng, dtype=np.float64)
    x = rng.normal(size=(3, 12))
    target = rng.normal(size=(3, 5))
    mask = np.ones_like(target)
    mask[0, :2] = 0.0

    def loss_fn(grad: bool) -> float:
        out = fc2.forward(relu.forward(fc1.forward(x)))
        loss, dout = masked_mse_loss(out, target, mask)
        if grad:
            fc1.backward(relu.backward(fc2.backward(dout)))
        return loss

    return loss_fn, fc1.params() + fc2.params(), None


def conv_pool_fragment(seed: int):
    """conv2d -> maxpool2d -> masked MSE in float64; tie_state exposes the
    pooling argmax so tie coordinates can be excluded."""
    rng = np.random.default_rng(seed)
    conv = Conv2D(3, 4, 2, 3, rng, dtype=np.float64)
    pool = MaxPool2D(2, 1)
    x = rng.normal(size=(2, 8, 6, 2))
    target = rng.normal(size=(2, 3, 3, 3))
    mask = np.ones_like(target)

    def loss_fn(grad: bool) -> float:
        out = pool.forward(conv.forward(x))
        loss, dout = masked_mse_loss(out, target, mask)
        if grad:
            conv.backward(pool.backward(dout))
        return loss

    return loss_fn, conv.params(), lambda: [pool.last_argmax]


def bilstm_fragment(seed: int, timesteps: int = 4):
    """bilstm -> masked MSE in float64."""
    rng = np.random.default_rng(seed)
    net = BiLSTM(6, 5, rng, dtype=np.float64)
    x = rng.normal(size=(2, timesteps, 6))
    target = rng.normal(size=(2, timesteps, 10))
    mask = np.ones_like(target)

    def loss_fn(grad: bool) -> float:
        out = net.forward(x)
        loss, dout = masked_mse_loss(out, target, mask)
        if grad:
            net.backward(dout)
        return loss

    return loss_fn, net.params(), None
