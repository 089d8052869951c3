"""Run configuration: strict JSON parsing and checkpoint metadata.

Unknown keys are rejected with the offending JSON path; silent
hyperparameter typos are the costliest failure mode.  Model-defining
fields are mirrored into numeric `meta/` checkpoint entries so inference
can rebuild the network from a checkpoint alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blocks import LRNetConfig
from .errors import ConfigError
from .guided import DagfConfig, GuidedFilterConfig
from .optim import OptimHyper

_TRANSFORMS = ("atrous_block", "conv1x1", "conv3x3", "identity")
_ATTN_ORDERS = ("channel_first", "pixel_first")


@dataclass
class RunConfig:
    model: DagfConfig
    optim: OptimHyper
    epochs: int = 960
    batch_size: int = 4
    seed: int = 0
    data_root: str = ""
    loss: str = "l1"
    pretrain_checkpoint: str | None = None
    val_root: str | None = None
    patch_size: tuple[int, int] | None = None
    augment: bool = True

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.loss != "l1":
            raise ConfigError(f"loss must be 'l1', got {self.loss!r}")
        self.model.validate()
        self.optim.validate()
        return self


def _build(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown configuration key")
    kwargs = {}
    for key, value in raw.items():
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_run_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    known_top = {
        "model", "optim", "epochs", "batch_size", "seed", "data_root",
        "loss", "pretrain_checkpoint", "val_root", "patch_size", "augment",
    }
    unknown = sorted(set(raw) - known_top)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key")

    model_raw = dict(raw.get("model", {}))
    if not isinstance(model_raw, dict):
        raise ConfigError("model: expected an object")
    unknown = sorted(set(model_raw) - {"lrnet", "gf", "downsample_factor", "ensemble"})
    if unknown:
        raise ConfigError(f"model.{unknown[0]}: unknown configuration key")
    lrnet = _build(LRNetConfig, model_raw.get("lrnet", {}), "model.lrnet")
    gf_raw = dict(model_raw.get("gf", {}))
    if "transform_dilations" in gf_raw:
        gf_raw["transform_dilations"] = tuple(gf_raw["transform_dilations"])
    gf = _build(GuidedFilterConfig, gf_raw, "model.gf")
    model = DagfConfig(
        lrnet=lrnet,
        gf=gf,
        downsample_factor=int(model_raw.get("downsample_factor", 4)),
        ensemble=bool(model_raw.get("ensemble", False)),
    )

    optim_raw = raw.get("optim", {})
    optim = _build(OptimHyper, optim_raw, "optim")

    cfg = RunConfig(
        model=model,
        optim=optim,
        epochs=int(raw.get("epochs", 960)),
        batch_size=int(raw.get("batch_size", 4)),
        seed=int(raw.get("seed", 0)),
        data_root=str(raw.get("data_root", "")),
        loss=str(raw.get("loss", "l1")),
        pretrain_checkpoint=raw.get("pretrain_checkpoint"),
        val_root=raw.get("val_root"),
        patch_size=tuple(raw["patch_size"]) if raw.get("patch_size") else None,
        augment=bool(raw.get("augment", True)),
    )
    try:
        return cfg.validate()
    except ConfigError:
        raise
    except Exception as exc:  # field-level validation from nested configs
        raise ConfigError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_run_config(raw)


# -- checkpoint metadata --------------------------------------------------------


def _scalar(value) -> np.ndarray:
    return np.asarray([float(value)], dtype=np.float32)


def config_to_meta(cfg: DagfConfig) -> dict[str, np.ndarray]:
    lr = cfg.lrnet
    gf = cfg.gf
    return {
        "meta/format": _scalar(1),
        "meta/lrnet/num_groups": _scalar(lr.num_groups),
        "meta/lrnet/blocks_per_group": _scalar(lr.blocks_per_group),
        "meta/lrnet/channels": _scalar(lr.channels),
        "meta/lrnet/shuffle_factor": _scalar(lr.shuffle_factor),
        "meta/lrnet/in_channels": _scalar(lr.in_channels),
        "meta/lrnet/out_channels": _scalar(lr.out_channels),
        "meta/lrnet/attention_order": _scalar(_ATTN_ORDERS.index(lr.attention_order)),
        "meta/lrnet/mask_channels": _scalar(lr.mask_channels),
        "meta/gf/transform": _scalar(_TRANSFORMS.index(gf.transform)),
        "meta/gf/dilations": np.asarray(gf.transform_dilations, dtype=np.float32),
        "meta/gf/local_channels": _scalar(gf.local_channels),
        "meta/gf/separate_y_mu": _scalar(1 if gf.separate_y_mu else 0),
        "meta/downsample_factor": _scalar(cfg.downsample_factor),
    }


def _meta_int(meta, key) -> int:
    if key not in meta:
        raise ConfigError(f"checkpoint missing {key}; cannot rebuild the model")
    return int(round(float(np.asarray(meta[key]).reshape(-1)[0])))


def config_from_meta(meta: dict[str, np.ndarray]) -> DagfConfig:
    lrnet = LRNetConfig(
        num_groups=_meta_int(meta, "meta/lrnet/num_groups"),
        blocks_per_group=_meta_int(meta, "meta/lrnet/blocks_per_group"),
        channels=_meta_int(meta, "meta/lrnet/channels"),
        shuffle_factor=_meta_int(meta, "meta/lrnet/shuffle_factor"),
        in_channels=_meta_int(meta, "meta/lrnet/in_channels"),
        out_channels=_meta_int(meta, "meta/lrnet/out_channels"),
        attention_order=_ATTN_ORDERS[_meta_int(meta, "meta/lrnet/attention_order")],
        mask_channels=_meta_int(meta, "meta/lrnet/mask_channels"),
    )
    gf = GuidedFilterConfig(
        transform=_TRANSFORMS[_meta_int(meta, "meta/gf/transform")],
        transform_dilations=tuple(
            int(round(float(v))) for v in np.asarray(meta["meta/gf/dilations"]).reshape(-1)
        ),
        local_channels=_meta_int(meta, "meta/gf/local_channels"),
        separate_y_mu=bool(_meta_int(meta, "meta/gf/separate_y_mu")),
    )
    return DagfConfig(
        lrnet=lrnet,
        gf=gf,
        downsample_factor=_meta_int(meta, "meta/downsample_factor"),
    )
