"""Alternating min-max training that turns single speckled images into pairs.

The forward generator g1 proposes despeckled content, the critic scores real
speckled images against re-speckled generator output, and the reverse
generator g2 pulls g1's output back to the input (cycle consistency). The
critic ascends the Wasserstein gap under weight clipping for a fixed number of
iterations per generator update; the generators descend the combined objective
(wgan + cycle + alpha * tv). Once trained, g1 (or later, the despeckler)
produces the shared base of each speckled-to-speckled pair.

Fresh speckle is resampled for every step: the losses are expectations over
the noise, not over a cached realization.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .losses import LossValue, cycle_loss, generator_objective, tv_loss, wgan_loss
from .networks import (
    DiscriminatorConfig,
    DnCNNConfig,
    ModelHandle,
    NestedUNetConfig,
    build_model,
    to_batch_tensor,
)
from .seeds import derive_seed, distinct_seed_pair, philox
from .speckle import S2SPair, make_s2s_pair
from .trainlog import TrainLog


@dataclass
class AdversarialConfig:
    """Hyperparameters of the alternating optimization.

    Defaults follow the reference schedule: 5 critic iterations per generator
    update, clip bound 0.02, TV weight 0.1, 16 epochs of batches of 16, Adam
    (1e-4, halved every 8 epochs) for the generators and RMSProp (5e-5,
    constant) for the critic, and 1-look speckle on generated images so the
    fake noise level matches 1-look inputs.
    """

    critic_iterations: int = 5
    clip_value: float = 0.02
    alpha: float = 0.1
    epochs: int = 16
    batch_size: int = 16
    gen_lr: float = 1e-4
    gen_betas: tuple[float, float] = (0.9, 0.999)
    gen_eps: float = 1e-8
    lr_halve_every: int = 8
    critic_lr: float = 5e-5
    pair_looks: float = 1.0

    def validate(self) -> None:
        if self.critic_iterations < 1:
            raise ValueError(f"critic_iterations must be >= 1, got {self.critic_iterations}")
        if self.clip_value <= 0:
            raise ValueError(f"clip_value must be > 0, got {self.clip_value}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.pair_looks <= 0:
            raise ValueError(f"pair_looks must be > 0, got {self.pair_looks}")
        if self.lr_halve_every < 1:
            raise ValueError(f"lr_halve_every must be >= 1, got {self.lr_halve_every}")


def sample_speckle_batch(shape, looks: float, rng: np.random.Generator) -> torch.Tensor:
    """Fresh unit-mean gamma speckle for a [B,1,H,W] batch, as float32 tensor."""
    vals = rng.gamma(shape=float(looks), scale=1.0 / float(looks), size=tuple(shape))
    return torch.from_numpy(vals.astype(np.float32))


def _require_role(handle: ModelHandle, role: str) -> None:
    if handle.role != role:
        raise ValueError(f"expected a {role!r} handle, got {handle.role!r}")


def scheduled_lr(base_lr: float, epoch: int, halve_every: int) -> float:
    """Learning rate in effect for a 1-based epoch: halved every ``halve_every``."""
    return base_lr * 0.5 ** ((epoch - 1) // halve_every)


def _critic_step(f, g1, batch, looks, config, critic_opt, rng):
    _require_role(f, "discriminator")
    _require_role(g1, "g1")
    with torch.no_grad():
        base = g1.module(batch).clamp_(min=0)
        # the critic compares observed images; real inputs arrive through the
        # [0, 1] export clamp, so fakes must pass the same observation map
        fake = (base * sample_speckle_batch(base.shape, looks, rng)).clamp_(0.0, 1.0)
    critic_opt.zero_grad()
    gap = wgan_loss(f.module(batch), f.module(fake))
    (-gap).backward()  # ascend the Wasserstein gap
    critic_opt.step()
    with torch.no_grad():
        max_abs = 0.0
        for p in f.module.parameters():
            p.clamp_(-config.clip_value, config.clip_value)
            max_abs = max(max_abs, float(p.abs().max()))
    return float(gap.detach()), {"max_abs_param": max_abs}


def critic_step(f: ModelHandle, g1: ModelHandle, batch: torch.Tensor, looks: float,
                config: AdversarialConfig, critic_opt, rng: np.random.Generator) -> float:
    """One ascent step of the critic on the Wasserstein gap, then weight clipping.

    Returns the pre-update gap mean(f(real)) - mean(f(fake)) for the batch.
    After the step every critic parameter lies in [-clip_value, +clip_value].
    """
    value, _ = _critic_step(f, g1, batch, looks, config, critic_opt, rng)
    return value


def _generator_step(g1, g2, f, batch, looks, config, gen_opt, rng):
    _require_role(g1, "g1")
    _require_role(g2, "g2")
    _require_role(f, "discriminator")
    for p in f.module.parameters():
        p.requires_grad_(False)
    try:
        g1_out = g1.module(batch)
        clamp_fraction = float((g1_out.detach() < 0).float().mean())
        fake = (g1_out.clamp(min=0) * sample_speckle_batch(g1_out.shape, looks, rng)).clamp(0.0, 1.0)
        wgan_term = -f.module(fake).mean()  # the theta1-dependent part of the gap
        cyc = cycle_loss(batch, g2.module(g1_out))
        # the cycle term is a per-pixel mean, so the TV term enters the
        # objective per interior pixel as well; otherwise alpha would scale
        # with patch area and the summed TV gradient would flatten g1 outright
        interior = (g1_out.shape[-2] - 1) * (g1_out.shape[-1] - 1)
        if config.alpha > 0:
            tv = tv_loss(g1_out) / interior
        else:
            with torch.no_grad():
                tv = tv_loss(g1_out) / interior
        loss = generator_objective(wgan_term, cyc, tv, config.alpha)
        gen_opt.zero_grad()
        loss.total.backward()
        gen_opt.step()
    finally:
        for p in f.module.parameters():
            p.requires_grad_(True)
    return loss, {"clamp_fraction": clamp_fraction}


def generator_step(g1: ModelHandle, g2: ModelHandle, f: ModelHandle, batch: torch.Tensor,
                   looks: float, config: AdversarialConfig, gen_opt,
                   rng: np.random.Generator) -> LossValue:
    """One descent step of both generators on wgan + cycle + alpha * tv.

    The critic is frozen for the step; its parameters are bit-identical before
    and after. TV applies to g1's output and enters per interior pixel (the
    reported tv component is that per-pixel value); with alpha 0 the TV
    component is still reported but contributes nothing to the gradient.
    """
    loss, _ = _generator_step(g1, g2, f, batch, looks, config, gen_opt, rng)
    return loss


class _BatchStream:
    """Endless shuffled full-batch iterator over a tensor of images."""

    def __init__(self, data: torch.Tensor, batch_size: int, gen: torch.Generator):
        self.data = data
        self.batch_size = min(batch_size, data.shape[0])
        self.gen = gen
        self._queue: list[torch.Tensor] = []

    def next(self) -> torch.Tensor:
        if not self._queue:
            order = torch.randperm(self.data.shape[0], generator=self.gen)
            full = (len(order) // self.batch_size) * self.batch_size
            self._queue = list(order[:full].split(self.batch_size)) or [order]
            self._queue.reverse()
        return self.data[self._queue.pop()]


def train_adversarial(
    images: np.ndarray,
    config: AdversarialConfig,
    seed: int,
    unet: NestedUNetConfig | None = None,
    dncnn: DnCNNConfig | None = None,
    critic: DiscriminatorConfig | None = None,
    initial: tuple[ModelHandle, ModelHandle, ModelHandle] | None = None,
    start_step: int = 0,
    start_epoch: int = 0,
    log: TrainLog | None = None,
) -> tuple[ModelHandle, ModelHandle, ModelHandle, TrainLog]:
    """Run the alternating schedule over a stack of speckled images [N,H,W].

    Per generator update exactly ``critic_iterations`` critic steps run first;
    the generator Adam rate halves every ``lr_halve_every`` epochs. The whole
    run is a pure function of (images, config, seed); pass ``initial`` plus
    start_step/start_epoch to resume with continuing step indices.
    """
    config.validate()
    data = to_batch_tensor(images)
    if data.shape[0] == 0:
        raise ValueError("training dataset is empty")

    if initial is not None:
        g1, g2, f = initial
        _require_role(g1, "g1")
        _require_role(g2, "g2")
        _require_role(f, "discriminator")
    else:
        g1 = build_model("g1", unet or NestedUNetConfig(), seed=derive_seed(seed, "init", "g1"))
        g2 = build_model("g2", dncnn or DnCNNConfig(), seed=derive_seed(seed, "init", "g2"))
        f = build_model(
            "discriminator", critic or DiscriminatorConfig(), seed=derive_seed(seed, "init", "critic")
        )
    factor = 2 ** g1.config.depth
    if data.shape[-2] % factor or data.shape[-1] % factor:
        raise ValueError(
            f"patch size {data.shape[-2]}x{data.shape[-1]} incompatible with depth "
            f"{g1.config.depth} (must be divisible by {factor})"
        )

    gen_opt = torch.optim.Adam(
        list(g1.module.parameters()) + list(g2.module.parameters()),
        lr=config.gen_lr, betas=config.gen_betas, eps=config.gen_eps,
    )
    critic_opt = torch.optim.RMSprop(f.module.parameters(), lr=config.critic_lr)

    shuffle_gen = torch.Generator().manual_seed(derive_seed(seed, "shuffle"))
    speckle_rng = philox(derive_seed(seed, "train-speckle"))
    stream = _BatchStream(data, config.batch_size, shuffle_gen)
    rounds_per_epoch = max(1, data.shape[0] // config.batch_size)

    log = log if log is not None else TrainLog()
    step = start_step
    t0 = time.perf_counter()
    for epoch_off in range(1, config.epochs + 1):
        epoch = start_epoch + epoch_off
        lr_gen = scheduled_lr(config.gen_lr, epoch, config.lr_halve_every)
        for group in gen_opt.param_groups:
            group["lr"] = lr_gen
        for _ in range(rounds_per_epoch):
            for _ in range(config.critic_iterations):
                value, stats = _critic_step(
                    f, g1, stream.next(), config.pair_looks, config, critic_opt, speckle_rng
                )
                step += 1
                log.append(
                    step=step, epoch=epoch, phase="critic", critic_loss=value,
                    lr_critic=config.critic_lr, max_abs_critic_param=stats["max_abs_param"],
                    wall_time=time.perf_counter() - t0,
                )
            loss, stats = _generator_step(
                g1, g2, f, stream.next(), config.pair_looks, config, gen_opt, speckle_rng
            )
            step += 1
            log.append(
                step=step, epoch=epoch, phase="generator", wgan=loss.wgan, cycle=loss.cycle,
                tv=loss.tv, total=loss.value, lr_gen=lr_gen,
                clamp_fraction=stats["clamp_fraction"], wall_time=time.perf_counter() - t0,
            )
    return g1, g2, f, log


def compute_pair_bases(g: ModelHandle, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Run the base producer over [N,H,W] images: clamp-to-non-negative outputs.

    This is the exact computation pair generation uses, exposed so provenance
    checks can recompute and compare bases bit for bit.
    """
    if g.role not in ("g1", "despeckler"):
        raise ValueError(f"pair generation needs a g1 or despeckler handle, got {g.role!r}")
    data = to_batch_tensor(images)
    outputs = []
    module = g.module
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            for chunk in data.split(batch_size):
                outputs.append(module(chunk)[:, 0].numpy())
    finally:
        module.train(was_training)
    raw = np.concatenate(outputs, axis=0)
    negative_fraction = float((raw < 0).mean())
    if negative_fraction > 0:
        import logging

        logging.getLogger(__name__).info(
            "pair generation clamps %.3f%% negative base pixels", 100 * negative_fraction
        )
    return np.maximum(raw, 0.0, dtype=np.float32)


def generate_s2s_dataset(
    g: ModelHandle,
    images: np.ndarray,
    looks_choices,
    seed: int,
    batch_size: int = 16,
) -> list[S2SPair]:
    """Emit one speckled pair per input image, base produced by ``g``.

    Accepts a forward-generator handle (first round) or a trained despeckler
    (iterative round) -- nothing else changes between the two. Per image the
    look count is drawn uniformly from ``looks_choices`` and the two fields
    come from freshly drawn distinct stream seeds; everything is recorded on
    the pair.
    """
    choices = sorted(float(v) for v in looks_choices)
    if not choices:
        raise ValueError("looks_choices must be non-empty")
    if any(v <= 0 for v in choices):
        raise ValueError("look counts must be > 0")
    bases = compute_pair_bases(g, images, batch_size)
    rng = philox(seed)
    pairs = []
    for base in bases:
        looks = float(rng.choice(choices))
        seed1, seed2 = distinct_seed_pair(rng)
        pairs.append(make_s2s_pair(base, looks, seed1, seed2))
    return pairs
