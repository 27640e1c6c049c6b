"""Command-line pipeline driver.

Subcommands cover the whole workflow at desk scale:

    synth        build a synthetic clean corpus (+ optional speckled copies)
    train-s2s    adversarially train the pair generator on speckled images
    gen-pairs    emit speckled-to-speckled pairs from a generator checkpoint
    train-n2n    train the despeckler on a pair dataset
    psdi         iterative round: regenerate pairs with the despeckler, retrain
    despeckle    run a despeckler checkpoint over images
    eval         full-reference and/or region metrics, JSON report

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every command
writes its fully resolved configuration next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .adversarial import generate_s2s_dataset, train_adversarial
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, UsageError
from .dataio import RECIPES, Dataset, crop_patches, export_image, load_dataset, load_image, save_dataset
from .metrics import evaluate_reference, evaluate_regions, read_regions, report_to_text
from .n2n import despeckle, psdi_round, train_despeckler
from .seeds import derive_seed
from .speckle import S2SPair, apply_speckle, sample_speckle_field
from .trainlog import TrainLog

CONFIG_FLAGS = [f for f in RunConfig.__dataclass_fields__]


def _add_config_flags(sub: argparse.ArgumentParser, names: list[str]) -> None:
    for name in names:
        flag = "--" + name.replace("_", "-")
        sub.add_argument(flag, dest=name, default=None, metavar="V")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2sdespeckle", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, flags, **extra_args):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--out", required=extra_args.pop("out_required", True), help="output directory")
        for arg_name, kw in extra_args.items():
            p.add_argument("--" + arg_name.replace("_", "-"), **kw)
        _add_config_flags(p, flags)
        p.set_defaults(func=func)
        return p

    add(
        "synth", cmd_synth, "synthesize a clean corpus and region file",
        ["seed", "recipe", "count", "size", "speckle_looks"],
    )
    add(
        "train-s2s", cmd_train_s2s, "adversarial training of the pair generator",
        ["seed", "patch_size", "patch_stride", "unet_depth", "unet_base", "unet_batch_norm",
         "dncnn_depth", "dncnn_channels", "critic_stages", "critic_base", "adv_epochs",
         "adv_batch", "critic_iterations", "clip_value", "alpha", "gen_lr", "critic_lr",
         "lr_halve_every", "pair_looks"],
        data={"required": True, "help": "directory of speckled input images"},
        resume={"default": None, "help": "previous train-s2s output directory to continue from"},
    )
    add(
        "gen-pairs", cmd_gen_pairs, "generate speckled-to-speckled pairs",
        ["seed", "looks_choices"],
        model={"required": True, "help": "g1 or despeckler checkpoint"},
        data={"required": True, "help": "directory of speckled input images"},
    )
    add(
        "train-n2n", cmd_train_n2n, "train the despeckler on pairs",
        ["seed", "unet_depth", "unet_base", "unet_batch_norm", "n2n_epochs", "n2n_batch",
         "n2n_lr", "lr_halve_every", "looks_choices", "pair_regen"],
        pairs={"required": True, "help": "pair dataset directory from gen-pairs"},
    )
    add(
        "psdi", cmd_psdi, "iterative round: new pairs from the despeckler, retrain",
        ["seed", "unet_depth", "unet_base", "unet_batch_norm", "n2n_epochs", "n2n_batch",
         "n2n_lr", "lr_halve_every", "looks_choices", "pair_regen", "psdi_fine_tune"],
        model={"required": True, "help": "trained despeckler checkpoint"},
        data={"required": True, "help": "directory of speckled input images"},
    )
    add(
        "despeckle", cmd_despeckle, "apply a despeckler to images",
        ["export_depth"],
        model={"required": True, "help": "despeckler checkpoint"},
        input={"required": True, "help": "image file or dataset directory"},
    )
    add(
        "eval", cmd_eval, "compute metrics and emit a JSON report",
        ["peak"],
        out_required=False,
        despeckled={"required": True, "help": "despeckled image file or directory"},
        clean={"default": None, "help": "clean reference (enables PSNR/SSIM)"},
        speckled={"default": None, "help": "speckled input (adds baseline PSNR/SSIM)"},
        original={"default": None, "help": "original image for region metrics"},
        regions={"default": None, "help": "region file (enables ENL/EPD-ROA/TCR/MoR)"},
        report={"default": None, "help": "write the JSON report here as well"},
    )
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update_from_file(args.config)
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS if getattr(args, name, None) is not None}
    cfg.update(overrides)
    return cfg


def cmd_synth(cfg: RunConfig, args) -> int:
    if cfg.recipe not in RECIPES:
        raise UsageError(f"unknown recipe {cfg.recipe!r}, expected one of {RECIPES}")
    from .dataio import synthesize_corpus

    try:
        dataset, regions = synthesize_corpus(cfg.recipe, cfg.count, cfg.size, cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    save_dataset(dataset, out / "clean", regions)
    from .metrics import write_regions

    write_regions(regions, out / "regions.txt")
    if cfg.speckle_looks > 0:
        speckled = []
        seeds = {}
        for image_id, image in zip(dataset.ids, dataset.images):
            field_seed = derive_seed(cfg.seed, "speckle", image_id)
            field = sample_speckle_field(image.shape[1], image.shape[0], cfg.speckle_looks, field_seed)
            speckled.append(apply_speckle(image, field))
            seeds[image_id] = field_seed
        meta = dict(dataset.meta, speckle_looks=cfg.speckle_looks, speckle_seeds=seeds)
        save_dataset(Dataset(ids=list(dataset.ids), images=speckled, meta=meta), out / "speckled")
    cfg.write_resolved(out)
    print(f"synth: wrote {len(dataset)} {cfg.recipe} images to {out}")
    return 0


def _load_patch_stack(data_dir, cfg: RunConfig) -> np.ndarray:
    dataset = load_dataset(data_dir)
    stride = cfg.patch_stride if cfg.patch_stride > 0 else None
    patches = []
    for image in dataset.images:
        patches.extend(crop_patches(image, cfg.patch_size, stride))
    if not patches:
        raise UsageError(f"no {cfg.patch_size}x{cfg.patch_size} patches in {data_dir}")
    return np.stack(patches)


def cmd_train_s2s(cfg: RunConfig, args) -> int:
    patches = _load_patch_stack(args.data, cfg)
    initial = None
    start_step = 0
    start_epoch = 0
    log = TrainLog()
    if args.resume:
        prev = Path(args.resume)
        initial = (
            load_checkpoint(prev / "g1.ckpt", expect_role="g1"),
            load_checkpoint(prev / "g2.ckpt", expect_role="g2"),
            load_checkpoint(prev / "critic.ckpt", expect_role="discriminator"),
        )
        log = TrainLog.from_jsonl(prev / "trainlog.jsonl")
        start_step = log.last_step
        start_epoch = log.last_epoch
    g1, g2, f, log = train_adversarial(
        patches, cfg.adversarial_config(), cfg.seed,
        unet=cfg.unet_config(), dncnn=cfg.dncnn_config(), critic=cfg.critic_config(),
        initial=initial, start_step=start_step, start_epoch=start_epoch, log=log,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(g1, out / "g1.ckpt")
    save_checkpoint(g2, out / "g2.ckpt")
    save_checkpoint(f, out / "critic.ckpt")
    log.to_jsonl(out / "trainlog.jsonl")
    cfg.write_resolved(out)
    print(f"train-s2s: {len(log)} steps over {patches.shape[0]} patches -> {out}")
    return 0


def _save_pairs(pairs: list[S2SPair], source_ids: list[str], model_role: str, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "first.npy", np.stack([p.first for p in pairs]))
    np.save(out / "second.npy", np.stack([p.second for p in pairs]))
    np.save(out / "base.npy", np.stack([p.base for p in pairs]))
    manifest = {
        "model_role": model_role,
        "pairs": [
            {
                "id": source_ids[i] if i < len(source_ids) else f"pair_{i:05d}",
                "looks": p.looks,
                "seed1": p.seeds[0],
                "seed2": p.seeds[1],
                "base_sha256": hashlib.sha256(p.base.tobytes()).hexdigest(),
            }
            for i, p in enumerate(pairs)
        ],
    }
    (out / "pairs_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _load_pairs(pairs_dir) -> list[S2SPair]:
    path = Path(pairs_dir)
    first = np.load(path / "first.npy")
    second = np.load(path / "second.npy")
    base = np.load(path / "base.npy")
    manifest = json.loads((path / "pairs_manifest.json").read_text())
    pairs = []
    for i, entry in enumerate(manifest["pairs"]):
        pairs.append(
            S2SPair(
                first=first[i], second=second[i], base=base[i],
                looks=float(entry["looks"]), seeds=(entry["seed1"], entry["seed2"]),
            )
        )
    return pairs


def cmd_gen_pairs(cfg: RunConfig, args) -> int:
    handle = load_checkpoint(args.model)
    if handle.role not in ("g1", "despeckler"):
        raise UsageError(f"--model must be a g1 or despeckler checkpoint, got role {handle.role!r}")
    dataset = load_dataset(args.data)
    pairs = generate_s2s_dataset(handle, np.stack(dataset.images), cfg.looks_tuple(), cfg.seed)
    out = Path(args.out)
    _save_pairs(pairs, dataset.ids, handle.role, out)
    cfg.write_resolved(out)
    print(f"gen-pairs: {len(pairs)} pairs from role {handle.role} -> {out}")
    return 0


def cmd_train_n2n(cfg: RunConfig, args) -> int:
    pairs = _load_pairs(args.pairs)
    model, log = train_despeckler(pairs, cfg.n2n_config(), cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "despeckler.ckpt")
    log.to_jsonl(out / "trainlog.jsonl")
    cfg.write_resolved(out)
    print(f"train-n2n: {len(log)} steps over {len(pairs)} pairs -> {out}")
    return 0


def cmd_psdi(cfg: RunConfig, args) -> int:
    handle = load_checkpoint(args.model, expect_role="despeckler")
    dataset = load_dataset(args.data)
    result = psdi_round(
        handle, np.stack(dataset.images), cfg.n2n_config(), cfg.seed, fine_tune=cfg.psdi_fine_tune
    )
    out = Path(args.out)
    _save_pairs(result.pairs, dataset.ids, "despeckler", out / "pairs")
    save_checkpoint(result.despeckler, out / "despeckler_i.ckpt")
    result.log.to_jsonl(out / "trainlog.jsonl")
    cfg.write_resolved(out)
    print(f"psdi: retrained on {len(result.pairs)} despeckler-based pairs -> {out}")
    return 0


def cmd_despeckle(cfg: RunConfig, args) -> int:
    handle = load_checkpoint(args.model)
    if handle.role not in ("despeckler", "g1"):
        raise UsageError(f"--model must be a despeckler checkpoint, got role {handle.role!r}")
    in_path = Path(args.input)
    if in_path.is_dir():
        dataset = load_dataset(in_path)
        items = list(zip(dataset.ids, dataset.images))
    else:
        items = [(in_path.stem, load_image(in_path))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".png" if str(cfg.export_depth) in ("8", "16") else ".tif"
    for image_id, image in items:
        export_image(despeckle(handle, image), out / f"{image_id}{suffix}", cfg.export_depth)
    cfg.write_resolved(out)
    print(f"despeckle: wrote {len(items)} image(s) -> {out}")
    return 0


def _load_image_map(path_str: str) -> dict[str, np.ndarray]:
    path = Path(path_str)
    if path.is_dir():
        dataset = load_dataset(path)
        return dict(zip(dataset.ids, dataset.images))
    return {path.stem: load_image(path)}


def cmd_eval(cfg: RunConfig, args) -> int:
    despeckled = _load_image_map(args.despeckled)
    report: dict = {"ids": sorted(despeckled)}
    if args.clean is None and args.original is None:
        raise UsageError("eval needs --clean (reference metrics) and/or --original --regions")

    def matched(other: dict[str, np.ndarray], what: str) -> dict[str, np.ndarray]:
        missing = sorted(set(despeckled) - set(other))
        if missing:
            raise UsageError(f"{what} is missing images: {missing}")
        return other

    if args.clean is not None:
        clean = matched(_load_image_map(args.clean), "--clean")
        block = {i: evaluate_reference(clean[i], despeckled[i], cfg.peak) for i in report["ids"]}
        report["reference"] = block
        report["aggregate"] = _aggregate_reference(block)
        if args.speckled is not None:
            speckled = matched(_load_image_map(args.speckled), "--speckled")
            sblock = {i: evaluate_reference(clean[i], speckled[i], cfg.peak) for i in report["ids"]}
            report["speckled_reference"] = sblock
            report["aggregate_speckled"] = _aggregate_reference(sblock)
    if args.original is not None or args.regions is not None:
        if args.original is None or args.regions is None:
            raise UsageError("region metrics need both --original and --regions")
        original = matched(_load_image_map(args.original), "--original")
        regions = read_regions(args.regions)
        report["regions"] = {
            i: evaluate_regions(original[i], despeckled[i], regions) for i in report["ids"]
        }
    text = report_to_text(report)
    sys.stdout.write(text)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text)
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        cfg.write_resolved(out)
    return 0


def _aggregate_reference(block: dict[str, list[dict]]) -> dict[str, float]:
    psnrs = [e["value"] for entries in block.values() for e in entries if e["metric"] == "psnr_db"]
    ssims = [e["value"] for entries in block.values() for e in entries if e["metric"] == "ssim"]
    return {
        "psnr_db_mean": float(np.mean(psnrs)),
        "ssim_mean": float(np.mean(ssims)),
        "count": len(psnrs),
    }


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(_resolve_config(args), args) or 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
