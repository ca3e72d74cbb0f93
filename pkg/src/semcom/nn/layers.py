"""Layers with explicit forward/backward passes on NHWC numpy tensors.

Every layer caches what its backward pass needs during forward; gradients
accumulate into Param.grad and are consumed by the optimizer.
"""

import numpy as np

from ..errors import ParameterError, ShapeError
from . import backend


class Param:
    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = data
        self.grad = np.zeros_like(data)


class Layer:
    def params(self):
        """Mapping of local parameter name -> Param."""
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def _uniform_fan_in(rng, shape, fan_in, dtype):
    limit = np.sqrt(1.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _pad_amounts(m, stride):
    """Total SAME-style padding so stride-1 preserves and stride-2 halves."""
    total = m - 1 if stride == 1 else m - stride
    lo = total // 2
    return lo, total - lo


class Dense(Layer):
    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        self.weight = Param(_uniform_fan_in(rng, (in_features, out_features), in_features, dtype))
        self.bias = Param(np.zeros(out_features, dtype=dtype))

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.data.shape[0]:
            raise ShapeError(f"Dense expected (b, {self.weight.data.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, grad):
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.data.T


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = tuple(shape)  # per-sample shape, batch preserved

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._in_shape)


class Conv2D(Layer):
    """SAME-padded convolution, stride 1 or 2, odd kernel."""

    def __init__(self, in_ch, out_ch, kernel, stride, rng, dtype=np.float32):
        if kernel % 2 == 0 or kernel < 3:
            raise ParameterError(f"kernel must be odd >= 3, got {kernel}")
        self.in_ch, self.out_ch, self.m, self.stride = in_ch, out_ch, kernel, stride
        self.kernel = Param(
            _uniform_fan_in(rng, (kernel, kernel, in_ch, out_ch), kernel * kernel * in_ch, dtype)
        )
        self.bias = Param(np.zeros(out_ch, dtype=dtype))

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def forward(self, x):
        b, h, w, c = x.shape
        if c != self.in_ch:
            raise ShapeError(f"Conv2D expected {self.in_ch} channels, got {c}")
        if self.stride == 2 and (h % 2 or w % 2):
            raise ShapeError(f"stride-2 conv needs even spatial dims, got {h}x{w}")
        lo, hi = _pad_amounts(self.m, self.stride)
        oh, ow = h // self.stride, w // self.stride
        xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
        col = backend.im2col(xp, self.m, self.stride, oh, ow)
        colmat = col.reshape(b * oh * ow, self.m * self.m * c)
        y = colmat @ self.kernel.data.reshape(-1, self.out_ch) + self.bias.data
        self._cache = (colmat, x.shape, xp.shape, lo)
        return y.reshape(b, oh, ow, self.out_ch)

    def backward(self, grad):
        colmat, x_shape, xp_shape, lo = self._cache
        b, h, w, c = x_shape
        oh, ow = grad.shape[1], grad.shape[2]
        gm = grad.reshape(-1, self.out_ch)
        self.kernel.grad += (colmat.T @ gm).reshape(self.kernel.data.shape)
        self.bias.grad += gm.sum(axis=0)
        dcol = (gm @ self.kernel.data.reshape(-1, self.out_ch).T).reshape(
            b, oh, ow, self.m, self.m, c
        )
        dxp = backend.col2im(dcol, xp_shape[1], xp_shape[2], self.stride)
        return dxp[:, lo : lo + h, lo : lo + w, :]


class ConvTranspose2D(Layer):
    """Adjoint of Conv2D: stride 1 preserves, stride 2 doubles spatial size.

    The weight is stored in the orientation of the adjoint convolution,
    shape (m, m, out_ch, in_ch).
    """

    def __init__(self, in_ch, out_ch, kernel, stride, rng, dtype=np.float32):
        if kernel % 2 == 0 or kernel < 3:
            raise ParameterError(f"kernel must be odd >= 3, got {kernel}")
        self.in_ch, self.out_ch, self.m, self.stride = in_ch, out_ch, kernel, stride
        self.kernel = Param(
            _uniform_fan_in(rng, (kernel, kernel, out_ch, in_ch), kernel * kernel * in_ch, dtype)
        )
        self.bias = Param(np.zeros(out_ch, dtype=dtype))

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def forward(self, x):
        b, h, w, c = x.shape
        if c != self.in_ch:
            raise ShapeError(f"ConvTranspose2D expected {self.in_ch} channels, got {c}")
        oh, ow = h * self.stride, w * self.stride
        lo, hi = _pad_amounts(self.m, self.stride)
        wmat = self.kernel.data.reshape(-1, self.in_ch)  # (m*m*out, in)
        dcol = (x.reshape(-1, c) @ wmat.T).reshape(b, h, w, self.m, self.m, self.out_ch)
        yp = backend.col2im(dcol, oh + lo + hi, ow + lo + hi, self.stride)
        y = yp[:, lo : lo + oh, lo : lo + ow, :] + self.bias.data
        self._x = x
        return y

    def backward(self, grad):
        b, oh, ow, _ = grad.shape
        h, w = self._x.shape[1], self._x.shape[2]
        lo, hi = _pad_amounts(self.m, self.stride)
        gp = np.pad(grad, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
        col = backend.im2col(gp, self.m, self.stride, h, w)
        colmat = col.reshape(b * h * w, -1)  # (b*h*w, m*m*out)
        wmat = self.kernel.data.reshape(-1, self.in_ch)
        dx = (colmat @ wmat).reshape(self._x.shape)
        self.kernel.grad += (colmat.T @ self._x.reshape(-1, self.in_ch)).reshape(
            self.kernel.data.shape
        )
        self.bias.grad += grad.sum(axis=(0, 1, 2))
        return dx


def gdn(x, beta, gamma):
    """y_i = x_i / sqrt(beta_i + sum_j gamma[i, j] * x_j^2), per pixel."""
    _check_gdn_params(x, beta, gamma)
    norm = np.tensordot(x * x, gamma, axes=([-1], [1])) + beta
    return x / np.sqrt(norm)


def igdn(x, beta, gamma):
    """Exact inverse of gdn: returns u with gdn(u, beta, gamma) == x.

    u_i = x_i * sqrt(beta_i + sum_j gamma[i, j] * u_j^2) is implicit in u,
    but the squared magnitudes z = u^2 satisfy the linear system
    (I - diag(x^2) gamma) z = x^2 * beta per pixel, which is solved directly.
    """
    _check_gdn_params(x, beta, gamma)
    c = x.shape[-1]
    x2 = (x * x).reshape(-1, c)
    lhs = np.eye(c) - x2[:, :, None] * gamma[None, :, :]
    z = np.linalg.solve(lhs, (x2 * beta)[..., None])[..., 0]
    norm = z @ gamma.T + beta
    return (x.reshape(-1, c) * np.sqrt(norm)).reshape(x.shape)


def igdn_onestep(x, beta, gamma):
    """Single-pass approximate inverse (the trainable decoder layer's form):
    y_i = x_i * sqrt(beta_i + sum_j gamma[i, j] * x_j^2)."""
    _check_gdn_params(x, beta, gamma)
    norm = np.tensordot(x * x, gamma, axes=([-1], [1])) + beta
    return x * np.sqrt(norm)


def _check_gdn_params(x, beta, gamma):
    c = x.shape[-1]
    if beta.shape != (c,) or gamma.shape != (c, c):
        raise ShapeError(f"GDN params for {c} channels, got beta {beta.shape} gamma {gamma.shape}")
    if np.any(beta <= 0):
        raise ParameterError("GDN beta must be strictly positive")
    if np.any(gamma < 0):
        raise ParameterError("GDN gamma must be nonnegative")


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    # inverse of log(1 + e^x); y > 0
    return np.log(np.expm1(y))


class GDN(Layer):
    """Trainable (I)GDN with softplus-reparameterized nonnegative parameters."""

    BETA_MIN = 1e-6

    def __init__(self, channels, inverse=False, gamma_init=0.1, dtype=np.float32):
        self.channels = channels
        self.inverse = inverse
        self.beta_raw = Param(np.full(channels, softplus_inv(1.0), dtype=dtype))
        graw = np.full((channels, channels), -12.0, dtype=dtype)
        np.fill_diagonal(graw, softplus_inv(gamma_init))
        self.gamma_raw = Param(graw)

    def params(self):
        return {"beta_raw": self.beta_raw, "gamma_raw": self.gamma_raw}

    def effective_params(self):
        beta = softplus(self.beta_raw.data) + self.BETA_MIN
        gamma = softplus(self.gamma_raw.data)
        return beta, gamma

    def forward(self, x):
        beta, gamma = self.effective_params()
        norm = np.tensordot(x * x, gamma, axes=([-1], [1])) + beta
        s = np.sqrt(norm)
        self._cache = (x, s, gamma)
        return x * s if self.inverse else x / s

    def backward(self, grad):
        x, s, gamma = self._cache
        # d norm_i / dx_k = 2 gamma[i, k] x_k; t_i = dL/dnorm_i
        if self.inverse:
            t = grad * x / (2.0 * s)
            dx = grad * s + 2.0 * x * np.tensordot(t, gamma, axes=([-1], [0]))
        else:
            t = -grad * x / (2.0 * s**3)
            dx = grad / s + 2.0 * x * np.tensordot(t, gamma, axes=([-1], [0]))
        axes = tuple(range(x.ndim - 1))
        dbeta_eff = t.sum(axis=axes)
        x2 = (x * x).reshape(-1, self.channels)
        dgamma_eff = t.reshape(-1, self.channels).T @ x2
        # chain through the softplus reparameterization
        self.beta_raw.grad += dbeta_eff * _sigmoid(self.beta_raw.data)
        self.gamma_raw.grad += dgamma_eff * _sigmoid(self.gamma_raw.data)
        return dx


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class PReLU(Layer):
    def __init__(self, channels, init=0.25, dtype=np.float32):
        self.alpha = Param(np.full(channels, init, dtype=dtype))

    def params(self):
        return {"alpha": self.alpha}

    def forward(self, x):
        self._x = x
        return np.where(x > 0, x, x * self.alpha.data)

    def backward(self, grad):
        x = self._x
        neg = x <= 0
        axes = tuple(range(x.ndim - 1))
        self.alpha.grad += (grad * x * neg).sum(axis=axes)
        return grad * np.where(neg, self.alpha.data, np.asarray(1.0, dtype=x.dtype))


class Sigmoid(Layer):
    def forward(self, x):
        y = _sigmoid(x)
        self._y = y
        return y

    def backward(self, grad):
        return grad * self._y * (1.0 - self._y)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = {}
        for j, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                out[f"layer{j}.{name}"] = p
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
