"""Flat run configuration shared by every CLI command.

All tunables from every module live here under stable names; a run resolves
its configuration as built-in defaults < config file < command-line flags and
writes the result next to its outputs, so any run can be reproduced from that
file alone. Config files are plain ``key = value`` lines; unknown keys are
rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .adversarial import AdversarialConfig
from .n2n import N2NConfig
from .networks import DiscriminatorConfig, DnCNNConfig, NestedUNetConfig


class UsageError(Exception):
    """Bad flags, config keys, or values; maps to exit code 2."""


@dataclass
class RunConfig:
    # run identity
    seed: int = 0
    # synthesis
    recipe: str = "shapes"
    count: int = 64
    size: int = 96
    speckle_looks: float = 0.0  # 0 disables speckled copies
    # patching
    patch_size: int = 96
    patch_stride: int = 0  # 0 means equal to patch_size
    # architectures
    unet_depth: int = 4
    unet_base: int = 32
    unet_batch_norm: bool = False
    dncnn_depth: int = 8
    dncnn_channels: int = 64
    critic_stages: int = 4
    critic_base: int = 64
    # adversarial schedule
    adv_epochs: int = 16
    adv_batch: int = 16
    critic_iterations: int = 5
    clip_value: float = 0.02
    alpha: float = 0.1
    gen_lr: float = 1e-4
    critic_lr: float = 5e-5
    lr_halve_every: int = 8
    pair_looks: float = 1.0
    # pair generation / despeckler training
    looks_choices: str = "1,2,4,8,16"
    n2n_epochs: int = 16
    n2n_batch: int = 16
    n2n_lr: float = 1e-4
    pair_regen: str = "online"
    psdi_fine_tune: bool = False
    # evaluation / export
    peak: float = 1.0
    export_depth: str = "float"

    def update(self, overrides: dict) -> None:
        valid = {f.name: f.type for f in fields(self)}
        for key, value in overrides.items():
            if key not in valid:
                raise UsageError(f"unknown config key {key!r}")
            if value is not None:
                setattr(self, key, _coerce(key, value, type(getattr(self, key))))

    def update_from_file(self, path) -> None:
        text = Path(path).read_text()
        overrides = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            overrides[key.strip()] = value.strip()
        self.update(overrides)

    def resolved_text(self) -> str:
        lines = [
            "# conventions: cycle/MSE losses averaged over pixels and batch;",
            "# TV is the literal interior sum, entering the objective per interior pixel",
        ]
        lines += [f"{f.name} = {getattr(self, f.name)}" for f in sorted(fields(self), key=lambda f: f.name)]
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.txt").write_text(self.resolved_text())

    # typed views consumed by the library modules
    def looks_tuple(self) -> tuple[float, ...]:
        try:
            values = tuple(float(v) for v in str(self.looks_choices).split(",") if v.strip())
        except ValueError as exc:
            raise UsageError(f"bad looks_choices {self.looks_choices!r}: {exc}") from exc
        if not values:
            raise UsageError("looks_choices must name at least one look count")
        return values

    def unet_config(self, depth: int | None = None, base: int | None = None) -> NestedUNetConfig:
        return NestedUNetConfig(
            depth=depth if depth is not None else self.unet_depth,
            base_channels=base if base is not None else self.unet_base,
            use_batch_norm=self.unet_batch_norm,
        )

    def dncnn_config(self) -> DnCNNConfig:
        return DnCNNConfig(depth=self.dncnn_depth, channels=self.dncnn_channels)

    def critic_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(conv_stages=self.critic_stages, base_channels=self.critic_base)

    def adversarial_config(self) -> AdversarialConfig:
        return AdversarialConfig(
            critic_iterations=self.critic_iterations,
            clip_value=self.clip_value,
            alpha=self.alpha,
            epochs=self.adv_epochs,
            batch_size=self.adv_batch,
            gen_lr=self.gen_lr,
            critic_lr=self.critic_lr,
            lr_halve_every=self.lr_halve_every,
            pair_looks=self.pair_looks,
        )

    def n2n_config(self) -> N2NConfig:
        return N2NConfig(
            epochs=self.n2n_epochs,
            batch_size=self.n2n_batch,
            lr=self.n2n_lr,
            lr_halve_every=self.lr_halve_every,
            looks_choices=self.looks_tuple(),
            pair_regen=self.pair_regen,
            unet=self.unet_config(),
        )


def _coerce(key: str, value, target_type: type):
    if isinstance(value, target_type) and not (target_type is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if target_type is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        return target_type(text)
    except ValueError as exc:
        raise UsageError(f"bad value for {key!r}: {exc}") from exc
