"""Noise2Noise despeckler training on speckled pairs, plus the iterative round.

A despeckler trained to map one speckled view of a scene onto another, under
MSE, converges to the conditional mean of the target -- and unit-mean
multiplicative speckle makes that mean the shared clean content. No clean
reference ever enters the loop.

The iterative round swaps the pair-base producer: instead of the adversarial
forward generator, the already-trained despeckler generates the bases, and a
new despeckler is trained on the regenerated pairs.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .adversarial import generate_s2s_dataset, scheduled_lr
from .losses import mse_loss
from .networks import ModelHandle, NestedUNetConfig, build_model, to_batch_tensor
from .seeds import derive_seed, philox
from .speckle import S2SPair, validate_image
from .trainlog import TrainLog

PAIR_REGEN_MODES = ("online", "fixed")


@dataclass
class N2NConfig:
    """Despeckler training hyperparameters.

    Adam at 1e-4 halved every 8 epochs, 16 epochs of batches of 16 by default;
    look counts for regenerated pairs are drawn from looks_choices. In
    "online" mode the pairs are re-speckled from their stored bases every
    epoch (fresh noise enlarges the expectation the MSE minimizer averages
    over); "fixed" keeps the pairs exactly as generated.
    """

    epochs: int = 16
    batch_size: int = 16
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    lr_halve_every: int = 8
    looks_choices: tuple[float, ...] = (1, 2, 4, 8, 16)
    pair_regen: str = "online"
    unet: NestedUNetConfig = field(default_factory=NestedUNetConfig)

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.pair_regen not in PAIR_REGEN_MODES:
            raise ValueError(f"pair_regen must be one of {PAIR_REGEN_MODES}, got {self.pair_regen!r}")
        if not self.looks_choices or any(v <= 0 for v in self.looks_choices):
            raise ValueError("looks_choices must be non-empty positive look counts")
        if self.lr_halve_every < 1:
            raise ValueError(f"lr_halve_every must be >= 1, got {self.lr_halve_every}")


def _materialize(pairs: list[S2SPair], mode: str, choices, rng) -> tuple[torch.Tensor, torch.Tensor]:
    if mode == "fixed":
        first = np.stack([p.first for p in pairs])
        second = np.stack([p.second for p in pairs])
    else:
        first = np.empty((len(pairs),) + pairs[0].base.shape, dtype=np.float32)
        second = np.empty_like(first)
        opts = sorted(float(v) for v in choices)
        for i, pair in enumerate(pairs):
            looks = float(rng.choice(opts))
            shape = pair.base.shape
            first[i] = pair.base * rng.gamma(looks, 1.0 / looks, shape).astype(np.float32)
            second[i] = pair.base * rng.gamma(looks, 1.0 / looks, shape).astype(np.float32)
    return to_batch_tensor(first), to_batch_tensor(second)


def train_despeckler(
    pairs: list[S2SPair],
    config: N2NConfig,
    seed: int,
    initial: ModelHandle | None = None,
    log: TrainLog | None = None,
    start_step: int = 0,
) -> tuple[ModelHandle, TrainLog]:
    """Minimize mse(second, model(first)) over the pair set.

    Deterministic given (pairs, config, seed). Returns the trained handle and
    a per-step log with per-epoch mean losses folded in.
    """
    config.validate()
    if not pairs:
        raise ValueError("pair set is empty")
    shapes = {p.base.shape for p in pairs}
    if len(shapes) != 1:
        raise ValueError(f"pairs must share one shape, got {sorted(shapes)}")
    model = initial or build_model("despeckler", config.unet, seed=derive_seed(seed, "init", "despeckler"))
    factor = 2 ** model.config.depth
    h, w = next(iter(shapes))
    if h % factor or w % factor:
        raise ValueError(f"pair size {h}x{w} incompatible with depth {model.config.depth}")

    opt = torch.optim.Adam(model.module.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    shuffle_gen = torch.Generator().manual_seed(derive_seed(seed, "shuffle"))
    regen_rng = philox(derive_seed(seed, "regen"))

    log = log if log is not None else TrainLog()
    step = start_step
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        lr = scheduled_lr(config.lr, epoch, config.lr_halve_every)
        for group in opt.param_groups:
            group["lr"] = lr
        first, second = _materialize(pairs, config.pair_regen, config.looks_choices, regen_rng)
        order = torch.randperm(first.shape[0], generator=shuffle_gen)
        epoch_losses = []
        for batch_idx in order.split(config.batch_size):
            pred = model.module(first[batch_idx])
            loss = mse_loss(second[batch_idx], pred)
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            value = float(loss.detach())
            epoch_losses.append(value)
            log.append(
                step=step, epoch=epoch, phase="n2n", mse=value, lr=lr,
                epoch_mean=float(np.mean(epoch_losses)),
                wall_time=time.perf_counter() - t0,
            )
    return model, log


def despeckle(model: ModelHandle, image: np.ndarray) -> np.ndarray:
    """Run the despeckler on one image of any size; output clamped to [0, 1].

    Sizes not divisible by 2^depth are reflect-padded, processed, and cropped
    back, so the output always matches the input shape exactly.
    """
    if model.role not in ("despeckler", "g1"):
        raise ValueError(f"despeckle needs a despeckler handle, got {model.role!r}")
    arr = validate_image(image).astype(np.float32)
    h, w = arr.shape
    factor = 2 ** model.config.depth
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    x = torch.from_numpy(arr)[None, None]
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    module = model.module
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            out = module(x)
    finally:
        module.train(was_training)
    result = out[0, 0, :h, :w].clamp(0.0, 1.0).numpy()
    if not np.all(np.isfinite(result)):
        raise RuntimeError("despeckler produced non-finite values")
    return result


@dataclass
class PsdiResult:
    """Outcome of one iterative round: new model, its log, and the pairs used."""

    despeckler: ModelHandle
    log: TrainLog
    pairs: list[S2SPair]


def psdi_round(
    despeckler: ModelHandle,
    images: np.ndarray,
    config: N2NConfig,
    seed: int,
    fine_tune: bool = False,
) -> PsdiResult:
    """Regenerate pairs with the trained despeckler as base producer, retrain.

    By default the new model trains from scratch; ``fine_tune`` starts from
    the previous round's parameters instead.
    """
    if despeckler.role != "despeckler":
        raise ValueError(f"psdi_round needs a despeckler handle, got {despeckler.role!r}")
    pairs = generate_s2s_dataset(
        despeckler, images, config.looks_choices, seed=derive_seed(seed, "psdi-pairs")
    )
    initial = None
    if fine_tune:
        import copy

        initial = ModelHandle(
            role="despeckler", config=despeckler.config, module=copy.deepcopy(despeckler.module)
        )
    model, log = train_despeckler(
        pairs, config, seed=derive_seed(seed, "psdi-train"), initial=initial
    )
    return PsdiResult(despeckler=model, log=log, pairs=pairs)
