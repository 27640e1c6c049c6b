"""Network architectures: nested-UNet despeckler, DnCNN reverse generator, critic.

Three roles share the nested-UNet topology (the despeckling network at both
training rounds and the forward pair generator); the reverse generator is a
residual DnCNN; the critic is an unbounded-score convolutional stack suited to
weight clipping. Initialization is Kaiming-style fan-in scaling with zero
biases, driven by an explicit seed so equal seeds give bit-identical models.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import torch
from torch import nn

ROLES = ("g1", "g2", "discriminator", "despeckler")


@dataclass
class NestedUNetConfig:
    """Nested-UNet (dense-skip grid) despeckler/generator settings.

    depth is the number of 2x down-sampling levels; channel width doubles per
    level from base_channels. Batch normalization is off in the faithful
    configuration (the despeckler drops it entirely). Desk-scale runs use
    depth 2 / base 16; full runs depth 4 / base 32.
    """

    depth: int = 4
    base_channels: int = 32
    kernel: int = 3
    upsample: str = "transposed"
    use_batch_norm: bool = False

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.upsample != "transposed":
            raise ValueError(f"unsupported upsample method {self.upsample!r}")


@dataclass
class DnCNNConfig:
    """Residual DnCNN settings for the reverse generator.

    depth counts all convolutional layers (8 at desk scale, 17 for the
    original-size network). Middle layers keep batch normalization, faithful
    to the original DnCNN. residual=True adds the predicted correction to the
    input.
    """

    depth: int = 8
    channels: int = 64
    residual: bool = True

    def validate(self) -> None:
        if self.depth < 3:
            raise ValueError(f"depth must be >= 3, got {self.depth}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")


@dataclass
class DiscriminatorConfig:
    """Critic settings: stride-2 conv stages, doubling width, scalar head.

    No normalization layers; the Lipschitz constraint comes from weight
    clipping in the training loop. Output is one unbounded real per image.
    """

    conv_stages: int = 4
    base_channels: int = 64
    leaky_slope: float = 0.2

    def validate(self) -> None:
        if self.conv_stages < 1:
            raise ValueError(f"conv_stages must be >= 1, got {self.conv_stages}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")


ModelConfig = Union[NestedUNetConfig, DnCNNConfig, DiscriminatorConfig]

CONFIG_TYPES: dict[str, type] = {
    "g1": NestedUNetConfig,
    "despeckler": NestedUNetConfig,
    "g2": DnCNNConfig,
    "discriminator": DiscriminatorConfig,
}


class _ConvBlock(nn.Module):
    """Two kxk convolutions, each followed by (optional BN and) a ReLU."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, batch_norm: bool):
        super().__init__()
        pad = kernel // 2
        layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, kernel, padding=pad)]
        if batch_norm:
            layers.append(nn.BatchNorm2d(out_ch))
        layers.append(nn.ReLU(inplace=True))
        layers.append(nn.Conv2d(out_ch, out_ch, kernel, padding=pad))
        if batch_norm:
            layers.append(nn.BatchNorm2d(out_ch))
        layers.append(nn.ReLU(inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class NestedUNet(nn.Module):
    """Dense-skip encoder/decoder grid with a single linear output head.

    Node (i, j) sits at level i (spatial scale 1/2^i) and dense-skip column j;
    its input concatenates all previous nodes of the same level with the
    2x-upsampled node (i+1, j-1). No deep supervision; the final 1x1
    convolution maps back to one channel with linear output (clamping to
    [0, 1] is an inference-time concern).
    """

    def __init__(self, config: NestedUNetConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.depth
        ch = [config.base_channels * (2**i) for i in range(d + 1)]
        self.pool = nn.MaxPool2d(2)
        self.nodes = nn.ModuleDict()
        self.ups = nn.ModuleDict()
        for i in range(d + 1):
            in_ch = 1 if i == 0 else ch[i - 1]
            self.nodes[f"x{i}_0"] = _ConvBlock(in_ch, ch[i], config.kernel, config.use_batch_norm)
        for i in range(d):
            for j in range(1, d - i + 1):
                self.ups[f"up{i}_{j}"] = nn.ConvTranspose2d(ch[i + 1], ch[i], 2, stride=2)
                self.nodes[f"x{i}_{j}"] = _ConvBlock(
                    (j + 1) * ch[i], ch[i], config.kernel, config.use_batch_norm
                )
        self.head = nn.Conv2d(ch[0], 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_divisible(x, 2**self.config.depth)
        d = self.config.depth
        grid: dict[tuple[int, int], torch.Tensor] = {}
        grid[(0, 0)] = self.nodes["x0_0"](x)
        for i in range(1, d + 1):
            grid[(i, 0)] = self.nodes[f"x{i}_0"](self.pool(grid[(i - 1, 0)]))
        for j in range(1, d + 1):
            for i in range(0, d - j + 1):
                up = self.ups[f"up{i}_{j}"](grid[(i + 1, j - 1)])
                feats = [grid[(i, k)] for k in range(j)] + [up]
                grid[(i, j)] = self.nodes[f"x{i}_{j}"](torch.cat(feats, dim=1))
        return self.head(grid[(0, d)])


class DnCNN(nn.Module):
    """Plain convolutional stack predicting a correction added to the input."""

    def __init__(self, config: DnCNNConfig):
        super().__init__()
        config.validate()
        self.config = config
        ch = config.channels
        layers: list[nn.Module] = [nn.Conv2d(1, ch, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(config.depth - 2):
            layers += [
                nn.Conv2d(ch, ch, 3, padding=1),
                nn.BatchNorm2d(ch),
                nn.ReLU(inplace=True),
            ]
        layers.append(nn.Conv2d(ch, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.body(x)
        return x + out if self.config.residual else out


class Discriminator(nn.Module):
    """Stride-2 conv stack ending in global average pooling and an affine scalar."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        config.validate()
        self.config = config
        layers: list[nn.Module] = []
        in_ch = 1
        ch = config.base_channels
        for _ in range(config.conv_stages):
            layers += [
                nn.Conv2d(in_ch, ch, 3, stride=2, padding=1),
                nn.LeakyReLU(config.leaky_slope, inplace=True),
            ]
            in_ch, ch = ch, ch * 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(in_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.features(x)
        pooled = feats.mean(dim=(-2, -1))
        return self.head(pooled).squeeze(-1)


@dataclass
class ModelHandle:
    """A role-tagged network with its config and trainable parameters."""

    role: str
    config: ModelConfig
    module: nn.Module

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())


def _check_divisible(x: torch.Tensor, factor: int) -> None:
    h, w = x.shape[-2], x.shape[-1]
    if h % factor:
        raise ValueError(f"height {h} (axis -2) not divisible by {factor}")
    if w % factor:
        raise ValueError(f"width {w} (axis -1) not divisible by {factor}")


def _fan_in(weight: torch.Tensor, module: nn.Module) -> int:
    if isinstance(module, nn.Linear):
        return weight.shape[1]
    # conv and transposed conv: input channels x kernel area
    in_ch = weight.shape[0] if isinstance(module, nn.ConvTranspose2d) else weight.shape[1]
    return int(in_ch * weight.shape[-2] * weight.shape[-1])


def _init_parameters(module: nn.Module, seed: int) -> None:
    """Kaiming-style fan-in normal init for all weights, zero biases, fixed seed."""
    gen = torch.Generator().manual_seed(int(seed))
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            std = (2.0 / _fan_in(m.weight, m)) ** 0.5
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)


def build_model(role: str, config: ModelConfig, seed: int = 0) -> ModelHandle:
    """Construct and deterministically initialize a network for ``role``.

    The config type must match the role (nested-UNet for g1/despeckler, DnCNN
    for g2, critic config for the discriminator); same seed twice gives
    bit-identical initial parameters.
    """
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}, expected one of {ROLES}")
    expected = CONFIG_TYPES[role]
    if not isinstance(config, expected):
        raise ValueError(
            f"role {role!r} needs a {expected.__name__}, got {type(config).__name__}"
        )
    if isinstance(config, NestedUNetConfig):
        module: nn.Module = NestedUNet(config)
    elif isinstance(config, DnCNNConfig):
        module = DnCNN(config)
    else:
        module = Discriminator(config)
    _init_parameters(module, seed)
    return ModelHandle(role=role, config=config, module=module)


def has_batch_norm(module: nn.Module) -> bool:
    """Graph inspection: does any submodule normalize over the batch?"""
    return any(isinstance(m, nn.modules.batchnorm._BatchNorm) for m in module.modules())


def to_batch_tensor(images: np.ndarray) -> torch.Tensor:
    """[H,W] or [N,H,W] numpy image(s) -> [N,1,H,W] float32 tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected [H,W] or [N,H,W] images, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr)).unsqueeze(1)


def forward(handle: ModelHandle, images: np.ndarray) -> np.ndarray:
    """Inference pass: image models return same-shape images, the critic scalars.

    Runs in eval mode without gradients; outputs are a pure function of the
    parameters and the input.
    """
    x = to_batch_tensor(images)
    single = np.asarray(images).ndim == 2
    module = handle.module
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            out = module(x)
    finally:
        module.train(was_training)
    result = out.numpy()
    if handle.role == "discriminator":
        return result if not single else result[0]
    result = result[:, 0]
    return result[0] if single else result
