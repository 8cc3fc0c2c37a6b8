"""HARDCORE topology assembly, parameter counting, and serialization.

Two branches share the engineered inputs. The h-predictor runs the five
time-series channels through weight-normalized circular dilated conv layers;
the scalar features enter through a tanh MLP whose output is broadcast-added
as a per-channel bias to the leading channels of the first conv layer
(pre-activation). The final single-channel conv output receives the b_n
residual and has its time mean removed, giving the normalized estimate
h_hat_n. The p-predictor maps the scalars through a second MLP to an area
scaling factor s in (-1, 1) and evaluates

    p_hat = f * (0.5 + 0.1 * s) * sum_i b[i] * (h_hat[i-1] - h_hat[i+1])

on the denormalized h_hat and physical-unit b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .features import (
    B_N_CHANNEL,
    SCALAR_FEATURES,
    SERIES_CHANNELS,
    DatasetNorms,
    FeatureBatch,
)

MODEL_FORMAT = "hardcore-model"
MODEL_FORMAT_VERSION = 1
MODEL_SUFFIX = ".hardcore.json"

AREA_BASE = 0.5
AREA_SPAN = 0.1


class ModelError(ValueError):
    """Raised for invalid configurations or model files."""


@dataclass(frozen=True)
class HardcoreConfig:
    """Topology hyperparameters.

    The defaults reproduce the delivered 1755-parameter network: conv
    channels 12 (tanh) -> 8 (tanh) -> 1 (linear) with kernel size 9 and
    dilation 4, an 11-unit tanh scalar MLP biasing the first 11 conv
    channels, and an 8 -> 1 tanh p-predictor MLP.
    """

    cnn_channels: tuple[int, ...] = (12, 8, 1)
    kernel_size: int = 9
    dilation: int = 4
    scalar_mlp_width: int | None = 11
    p_mlp_hidden: int | None = 8
    series_channels: int = SERIES_CHANNELS
    scalar_features: int = SCALAR_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "cnn_channels", tuple(self.cnn_channels))
        if not self.cnn_channels:
            raise ModelError("at least one conv layer is required")
        if self.cnn_channels[-1] != 1:
            raise ModelError(
                f"last conv layer must have exactly 1 channel, got "
                f"{self.cnn_channels[-1]}"
            )
        if any(c < 1 for c in self.cnn_channels):
            raise ModelError("conv channel counts must be positive")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ModelError(f"kernel size must be odd, got {self.kernel_size}")
        if self.dilation < 1:
            raise ModelError(f"dilation must be >= 1, got {self.dilation}")
        if self.scalar_mlp_width is not None:
            if not 1 <= self.scalar_mlp_width <= self.cnn_channels[0]:
                raise ModelError(
                    "scalar MLP width (bias-merge channel count) must lie in "
                    f"[1, {self.cnn_channels[0]}], got {self.scalar_mlp_width}"
                )

    def to_dict(self) -> dict:
        return {
            "cnn_channels": list(self.cnn_channels),
            "kernel_size": self.kernel_size,
            "dilation": self.dilation,
            "scalar_mlp_width": self.scalar_mlp_width,
            "p_mlp_hidden": self.p_mlp_hidden,
            "series_channels": self.series_channels,
            "scalar_features": self.scalar_features,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HardcoreConfig":
        return cls(
            cnn_channels=tuple(data["cnn_channels"]),
            kernel_size=int(data["kernel_size"]),
            dilation=int(data["dilation"]),
            scalar_mlp_width=data["scalar_mlp_width"],
            p_mlp_hidden=data["p_mlp_hidden"],
            series_channels=int(data["series_channels"]),
            scalar_features=int(data["scalar_features"]),
        )


def parameter_count(config: HardcoreConfig) -> int:
    """Trainable scalars: conv (v + g + bias) and linear (w + bias) layers."""
    total = 0
    c_in = config.series_channels
    for c_out in config.cnn_channels:
        total += c_out * c_in * config.kernel_size + 2 * c_out
        c_in = c_out
    if config.scalar_mlp_width is not None:
        total += config.scalar_features * config.scalar_mlp_width
        total += config.scalar_mlp_width
    if config.p_mlp_hidden is not None:
        total += config.scalar_features * config.p_mlp_hidden + config.p_mlp_hidden
        total += config.p_mlp_hidden * 1 + 1
    return total


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class HardcoreModel:
    """Parameter store plus the forward pass.

    Parameters are float64 tensors. ``parameters()`` yields (name, tensor)
    pairs in the fixed serialization order: conv layers first (v, g, bias
    per layer), then the scalar MLP (w, bias), then the p-MLP layers.
    """

    def __init__(
        self,
        config: HardcoreConfig,
        norms: DatasetNorms,
        material_id: str,
        seed: int | None = 0,
    ):
        self.config = config
        self.norms = norms
        self.material_id = material_id
        self.conv_kernels: list[T.WeightNormedKernel] = []
        rng = np.random.default_rng(seed)

        c_in = config.series_channels
        for c_out in config.cnn_channels:
            v = _uniform(rng, (c_out, c_in, config.kernel_size),
                         c_in * config.kernel_size)
            # g starts at ||v|| so the effective weight is exactly v
            g = np.sqrt((v * v).sum(axis=(1, 2)))
            self.conv_kernels.append(
                T.WeightNormedKernel(
                    T.Tensor(v, requires_grad=True),
                    T.Tensor(g, requires_grad=True),
                    T.Tensor(np.zeros(c_out), requires_grad=True),
                )
            )
            c_in = c_out

        self.scalar_w = self.scalar_b = None
        if config.scalar_mlp_width is not None:
            self.scalar_w = T.Tensor(
                _uniform(rng, (config.scalar_mlp_width, config.scalar_features),
                         config.scalar_features),
                requires_grad=True,
            )
            self.scalar_b = T.Tensor(
                np.zeros(config.scalar_mlp_width), requires_grad=True
            )

        self.p_mlp: list[tuple[T.Tensor, T.Tensor]] = []
        if config.p_mlp_hidden is not None:
            widths = [config.scalar_features, config.p_mlp_hidden, 1]
            for f_in, f_out in zip(widths[:-1], widths[1:]):
                self.p_mlp.append((
                    T.Tensor(_uniform(rng, (f_out, f_in), f_in),
                             requires_grad=True),
                    T.Tensor(np.zeros(f_out), requires_grad=True),
                ))

    # -- parameter access -----------------------------------------------------

    def parameters(self):
        for layer, kernel in enumerate(self.conv_kernels):
            yield f"conv{layer}.v", kernel.v
            yield f"conv{layer}.g", kernel.g
            yield f"conv{layer}.bias", kernel.bias
        if self.scalar_w is not None:
            yield "scalar_mlp.w", self.scalar_w
            yield "scalar_mlp.bias", self.scalar_b
        for layer, (w, b) in enumerate(self.p_mlp):
            yield f"p_mlp{layer}.w", w
            yield f"p_mlp{layer}.bias", b

    def parameter_tensors(self) -> list[T.Tensor]:
        return [t for _, t in self.parameters()]

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.parameter_tensors())

    def zero_grad(self) -> None:
        for t in self.parameter_tensors():
            t.zero_grad()

    # -- forward --------------------------------------------------------------

    def forward(self, batch: FeatureBatch) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
        """Run the full topology on a feature batch.

        Returns (h_hat_n, h_hat, p_hat) tensors of shapes (B, M), (B, M),
        and (B,). The batch must have been built with this model's norms.
        """
        cfg = self.config
        if batch.series.shape[1] != cfg.series_channels:
            raise ModelError(
                f"batch has {batch.series.shape[1]} series channels, model "
                f"expects {cfg.series_channels}"
            )
        if batch.scalars.shape[1] != cfg.scalar_features:
            raise ModelError(
                f"batch has {batch.scalars.shape[1]} scalar features, model "
                f"expects {cfg.scalar_features}"
            )

        series = T.Tensor(batch.series)
        scalars = T.Tensor(batch.scalars)
        b_n = batch.series[:, B_N_CHANNEL, :]

        x = T.conv1d_circular(series, self.conv_kernels[0], cfg.dilation)
        if self.scalar_w is not None:
            bias_vec = T.linear(scalars, self.scalar_w, self.scalar_b).tanh()
            x = T.broadcast_add_channels(x, bias_vec)
        if len(self.conv_kernels) > 1:
            x = x.tanh()
        for kernel in self.conv_kernels[1:-1]:
            x = T.conv1d_circular(x, kernel, cfg.dilation).tanh()
        if len(self.conv_kernels) > 1:
            x = T.conv1d_circular(x, self.conv_kernels[-1], cfg.dilation)

        x = x + T.Tensor(b_n[:, None, :])
        h_hat_n = T.subtract_time_mean(x).squeeze_axis(1)

        denorm = (
            self.norms.h_lim * batch.profile_scale / self.norms.b_lim
        )[:, None]
        h_hat = T.mul_rows(h_hat_n, denorm)

        if self.p_mlp:
            s = scalars
            for w, b in self.p_mlp:
                s = T.linear(s, w, b).tanh()
            s = s.squeeze_axis(1)
        else:
            s = T.Tensor(np.zeros(len(batch)))
        factor = s * AREA_SPAN + AREA_BASE

        b_physical = batch.series[:, B_N_CHANNEL, :] * batch.profile_scale[:, None]
        trapezoid = T.shoelace_sum(b_physical, h_hat)
        p_hat = T.mul_rows(factor * trapezoid, batch.f)
        return h_hat_n, h_hat, p_hat

    def predict(self, batch: FeatureBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inference convenience: numpy (h_hat_n, h_hat, p_hat)."""
        h_hat_n, h_hat, p_hat = self.forward(batch)
        return h_hat_n.data, h_hat.data, p_hat.data


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_model(model: HardcoreModel, path: str | Path) -> None:
    """Write the versioned JSON envelope (lossless float64 round trip)."""
    payload = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "material_id": model.material_id,
        "config": model.config.to_dict(),
        "norms": model.norms.to_dict(),
        "parameters": {
            name: t.data.ravel().tolist() for name, t in model.parameters()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path: str | Path) -> HardcoreModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelError(f"{path}: missing {MODEL_FORMAT!r} format marker")
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelError(
            f"{path}: unsupported format version "
            f"{payload.get('format_version')!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    config = HardcoreConfig.from_dict(payload["config"])
    norms = DatasetNorms.from_dict(payload["norms"])
    model = HardcoreModel(config, norms, payload["material_id"], seed=0)
    stored = payload["parameters"]
    for name, t in model.parameters():
        if name not in stored:
            raise ModelError(f"{path}: missing parameter block {name!r}")
        values = np.asarray(stored[name], dtype=np.float64)
        if values.size != t.data.size:
            raise ModelError(
                f"{path}: parameter {name!r} has {values.size} values, "
                f"expected {t.data.size}"
            )
        t.data = values.reshape(t.data.shape)
    return model
