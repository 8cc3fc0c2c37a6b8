"""Minimal reverse-mode autodiff over float64 numpy arrays.

The engine implements exactly the operation vocabulary the model topology
needs (fixed-shape elementwise ops, dilated circular conv1d with weight
normalization, affine layers, channel bias broadcast, per-row time-mean
subtraction, the circular shoelace sum, and scalar reductions). There is no
general broadcasting; every op states its shape contract.

Gradients accumulate into ``Tensor.grad`` during :meth:`Tensor.backward`,
which must be called on a scalar (size-1) output.
"""

from __future__ import annotations

import numpy as np

from . import kernels


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim > 3:
        raise ValueError(f"tensors are limited to 3 dimensions, got {arr.ndim}")
    return arr


class Tensor:
    """Array node in the backward graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        live = tuple(p for p in parents if p.requires_grad)
        if live:
            out.requires_grad = True
            out._parents = live
            out._backward = backward
        return out

    def _accumulate(self, grad) -> None:
        # First contribution adopts the incoming array by reference. It may
        # be shared with a sibling node's grad, so grads are never mutated
        # in place; later contributions rebuild out of place.
        if self.grad is None:
            grad = np.asarray(grad)
            if grad.shape != self.data.shape:
                grad = np.broadcast_to(grad, self.data.shape)
            self.grad = grad
        else:
            self.grad = self.grad + grad

    # -- properties ------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic (same shape or python scalar) ------------------

    @staticmethod
    def _lift(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _check_same_shape(self, other: "Tensor", op: str) -> None:
        if self.data.shape != other.data.shape:
            raise ValueError(
                f"{op}: shape mismatch {self.data.shape} vs {other.data.shape}"
            )

    def __add__(self, other):
        other = self._lift(other)
        if other.data.shape != ():
            self._check_same_shape(other, "add")
        out_data = self.data + other.data

        def backward(dout):
            if self.requires_grad:
                self._accumulate(dout)
            if other.requires_grad:
                other._accumulate(
                    dout if other.data.shape == self.data.shape else dout.sum()
                )

        return self._result(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(dout):
            self._accumulate(-dout)

        return self._result(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        if other.data.shape != ():
            self._check_same_shape(other, "mul")

        def backward(dout):
            if self.requires_grad:
                g = dout * other.data
                self._accumulate(g if g.shape == self.data.shape else g.sum())
            if other.requires_grad:
                g = dout * self.data
                other._accumulate(g if g.shape == other.data.shape else g.sum())

        return self._result(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")

        def backward(dout):
            self._accumulate(dout * exponent * self.data ** (exponent - 1))

        return self._result(self.data ** exponent, (self,), backward)

    # -- elementwise functions --------------------------------------------------

    def tanh(self) -> "Tensor":
        out_data = kernels.tanh_forward(self.data)

        def backward(dout):
            self._accumulate(kernels.tanh_backward(dout, out_data))

        return self._result(out_data, (self,), backward)

    def log(self) -> "Tensor":
        if np.any(self.data <= 0):
            raise ValueError("log requires strictly positive values")

        def backward(dout):
            self._accumulate(dout / self.data)

        return self._result(np.log(self.data), (self,), backward)

    def clamp_min(self, floor: float) -> "Tensor":
        # Zero gradient where the floor is active.
        mask = self.data > floor

        def backward(dout):
            self._accumulate(dout * mask)

        return self._result(np.maximum(self.data, floor), (self,), backward)

    # -- reductions / shape ------------------------------------------------------

    def sum(self) -> "Tensor":
        def backward(dout):
            self._accumulate(np.broadcast_to(dout, self.data.shape))

        return self._result(self.data.sum(), (self,), backward)

    def mean(self) -> "Tensor":
        n = self.data.size

        def backward(dout):
            self._accumulate(np.full(self.data.shape, float(dout) / n))

        return self._result(self.data.mean(), (self,), backward)

    def reshape(self, *shape) -> "Tensor":
        out_data = self.data.reshape(*shape)

        def backward(dout):
            self._accumulate(dout.reshape(self.data.shape))

        return self._result(out_data, (self,), backward)

    def squeeze_axis(self, axis: int) -> "Tensor":
        if self.data.shape[axis] != 1:
            raise ValueError(
                f"cannot squeeze axis {axis} of shape {self.data.shape}"
            )
        return self.reshape(
            *(s for a, s in enumerate(self.data.shape) if a != axis)
        )

    # -- backward pass -------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-traverse from a scalar output, populating .grad fields."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar output, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


# ---------------------------------------------------------------------------
# weight-normalized kernels
# ---------------------------------------------------------------------------

class WeightNormedKernel:
    """Conv kernel stored as direction v, per-channel gain g, and bias.

    The effective weight is W = g * v / ||v|| with the Euclidean norm taken
    per output channel over its (in_channels x kernel_size) slice.
    """

    def __init__(self, v: Tensor, g: Tensor, bias: Tensor):
        if v.data.ndim != 3:
            raise ValueError("v must be (out_channels, in_channels, kernel_size)")
        n_out = v.data.shape[0]
        if g.data.shape != (n_out,) or bias.data.shape != (n_out,):
            raise ValueError("g and bias must be (out_channels,)")
        self.v = v
        self.g = g
        self.bias = bias

    @property
    def kernel_size(self) -> int:
        return self.v.data.shape[2]

    @property
    def out_channels(self) -> int:
        return self.v.data.shape[0]

    @property
    def in_channels(self) -> int:
        return self.v.data.shape[1]


def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """Effective weight W = g * v / ||v|| (norm per output channel)."""
    vd = v.data
    norms = np.sqrt((vd * vd).sum(axis=(1, 2)))
    if np.any(norms == 0.0):
        raise ValueError("weight norm undefined: zero-norm direction channel")
    scale = (g.data / norms)[:, None, None]
    out_data = vd * scale

    def backward(dout):
        dot = (dout * vd).sum(axis=(1, 2))
        if g.requires_grad:
            g._accumulate(dot / norms)
        if v.requires_grad:
            v._accumulate(
                scale * dout
                - (g.data * dot / norms**3)[:, None, None] * vd
            )

    return Tensor._result(out_data, (v, g), backward)


def conv1d_circular(x: Tensor, kernel: WeightNormedKernel, dilation: int) -> Tensor:
    """Dilated circular 1D convolution with weight normalization.

    x is (batch, in_channels, m); output is (batch, out_channels, m). Kernel
    size must be odd and the dilated reach (kernel_size-1)*dilation must stay
    below m.
    """
    if x.data.ndim != 3:
        raise ValueError(f"conv input must be 3-d, got shape {x.data.shape}")
    k_size = kernel.kernel_size
    if k_size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k_size}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    m = x.data.shape[2]
    if (k_size - 1) * dilation >= m:
        raise ValueError(
            f"dilated reach (k-1)*d = {(k_size - 1) * dilation} must be < m = {m}"
        )
    if x.data.shape[1] != kernel.in_channels:
        raise ValueError(
            f"input has {x.data.shape[1]} channels, kernel expects "
            f"{kernel.in_channels}"
        )

    w = weight_norm(kernel.v, kernel.g)
    bias = kernel.bias
    xpad = kernels.wrap_pad(x.data, kernels.half_reach(k_size, dilation))
    out_data = kernels.conv1d_forward(xpad, w.data, bias.data, dilation, m)

    def backward(dout):
        dout = np.ascontiguousarray(dout)
        if x.requires_grad:
            x._accumulate(kernels.conv1d_backward_x(dout, w.data, dilation))
        if w.requires_grad:
            w._accumulate(
                kernels.conv1d_backward_w(dout, xpad, k_size, dilation)
            )
        if bias.requires_grad:
            bias._accumulate(dout.sum(axis=(0, 2)))

    return Tensor._result(out_data, (x, w, bias), backward)


# ---------------------------------------------------------------------------
# dense / structural ops
# ---------------------------------------------------------------------------

def linear(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map (batch, f_in) @ weights.T + bias, weights (f_out, f_in)."""
    if x.data.ndim != 2 or weights.data.ndim != 2:
        raise ValueError("linear expects 2-d input and weights")
    if x.data.shape[1] != weights.data.shape[1]:
        raise ValueError(
            f"linear: input width {x.data.shape[1]} != weight fan-in "
            f"{weights.data.shape[1]}"
        )
    if bias.data.shape != (weights.data.shape[0],):
        raise ValueError("linear: bias width must equal weight fan-out")
    out_data = x.data @ weights.data.T + bias.data

    def backward(dout):
        if x.requires_grad:
            x._accumulate(dout @ weights.data)
        if weights.requires_grad:
            weights._accumulate(dout.T @ x.data)
        if bias.requires_grad:
            bias._accumulate(dout.sum(axis=0))

    return Tensor._result(out_data, (x, weights, bias), backward)


def broadcast_add_channels(series: Tensor, bias_vec: Tensor) -> Tensor:
    """Add bias_vec[b, c] to every time step of series[b, c, :] for c < C'.

    Channels at and beyond bias_vec's width pass through unchanged.
    """
    if series.data.ndim != 3 or bias_vec.data.ndim != 2:
        raise ValueError("broadcast_add_channels expects 3-d series, 2-d bias")
    n_biased = bias_vec.data.shape[1]
    if n_biased > series.data.shape[1]:
        raise ValueError(
            f"bias has {n_biased} channels, series only {series.data.shape[1]}"
        )
    if bias_vec.data.shape[0] != series.data.shape[0]:
        raise ValueError("batch size mismatch between series and bias")
    out_data = series.data.copy()
    out_data[:, :n_biased, :] += bias_vec.data[:, :, None]

    def backward(dout):
        if series.requires_grad:
            series._accumulate(dout)
        if bias_vec.requires_grad:
            bias_vec._accumulate(dout[:, :n_biased, :].sum(axis=2))

    return Tensor._result(out_data, (series, bias_vec), backward)


def subtract_time_mean(series: Tensor) -> Tensor:
    """Remove each row's mean along the last (time) axis."""
    mean = series.data.mean(axis=-1, keepdims=True)

    def backward(dout):
        series._accumulate(dout - dout.mean(axis=-1, keepdims=True))

    return Tensor._result(series.data - mean, (series,), backward)


def mul_rows(x: Tensor, scale: np.ndarray) -> Tensor:
    """Multiply by a constant per-row factor (non-differentiated operand).

    scale must broadcast against x's shape from the left, e.g. (B,) against
    (B,) or (B, 1) against (B, M).
    """
    scale = np.asarray(scale, dtype=np.float64)
    out_data = x.data * scale
    if out_data.shape != x.data.shape:
        raise ValueError(
            f"mul_rows: scale shape {scale.shape} does not preserve "
            f"x shape {x.data.shape}"
        )

    def backward(dout):
        x._accumulate(dout * scale)

    return Tensor._result(out_data, (x,), backward)


def shoelace_sum(b: np.ndarray, h: Tensor) -> Tensor:
    """Circular trapezoid sum S[n] = sum_i b[n,i] * (h[n,i-1] - h[n,i+1]).

    b is a constant (batch, m) array of flux-density samples; h is the
    differentiated (batch, m) field-strength estimate. Twice the signed loop
    area per record. Both operands are centered row-wise before the product
    (value-neutral by translation invariance, but it keeps the cancellation
    error proportional to the signal, not to any offsets).
    """
    b = np.asarray(b, dtype=np.float64)
    if h.data.ndim != 2 or b.shape != h.data.shape:
        raise ValueError(
            f"shoelace_sum: b {b.shape} and h {h.data.shape} must match as (batch, m)"
        )
    bc = b - b.mean(axis=1, keepdims=True)
    hc = h.data - h.data.mean(axis=1, keepdims=True)
    out_data = (bc * (np.roll(hc, 1, axis=1) - np.roll(hc, -1, axis=1))).sum(axis=1)
    # dS/dh[m] = b[m+1] - b[m-1] (circular); the centering terms cancel
    coeff = np.roll(bc, -1, axis=1) - np.roll(bc, 1, axis=1)

    def backward(dout):
        h._accumulate(dout[:, None] * coeff)

    return Tensor._result(out_data, (h,), backward)
