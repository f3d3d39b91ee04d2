"""File formats and atomic output.

Datasets travel as three CSV files (edges, behavior, covariates) plus a
JSON config; model and estimation settings are JSON. All writers go
through a temp-file-plus-rename so readers never observe partial output,
and everything written is a pure function of the inputs (no timestamps),
keeping runs byte-reproducible.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .effects import EffectSpec
from .panel import CovariateTable, DataError, LoadConfig, PanelDataset, load_dataset
from .simulate import ParameterVector

__all__ = [
    "atomic_write_text",
    "write_json",
    "read_json",
    "write_edges_csv",
    "write_behavior_csv",
    "write_covariates_csv",
    "write_dataset",
    "read_dataset",
    "read_effect_spec",
    "read_model",
]


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def write_edges_csv(path, networks) -> None:
    """Cumulative per-wave edge lists, one `wave,src,dst` row per tie with
    src < dst, waves numbered from 1."""
    nets = np.asarray(networks, dtype=np.uint8)
    lines = ["wave,src,dst"]
    for w in range(nets.shape[0]):
        src, dst = np.nonzero(np.triu(nets[w], k=1))
        for i, j in zip(src, dst):
            lines.append(f"{w + 1},{int(i)},{int(j)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_behavior_csv(path, values) -> None:
    vals = np.asarray(values)
    lines = ["wave,actor,value"]
    for w in range(vals.shape[0]):
        for i in range(vals.shape[1]):
            lines.append(f"{w + 1},{i},{int(vals[w, i])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_covariates_csv(path, covariates: CovariateTable) -> None:
    lines = ["actor,gender,age,tenure_days"]
    for i in range(covariates.n_actors):
        lines.append(
            f"{i},{int(covariates.gender[i])},{covariates.age[i]:g},{covariates.tenure[i]:g}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_dataset(out_dir, dataset: PanelDataset, config: LoadConfig) -> dict:
    """Write the standard file set into a directory; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, "edges.csv"),
        "behavior": os.path.join(out_dir, "behavior.csv"),
        "covariates": os.path.join(out_dir, "covariates.csv"),
        "config": os.path.join(out_dir, "dataset.json"),
    }
    write_edges_csv(paths["edges"], dataset.networks)
    values = dataset.raw_counts if config.behavior_value == "count" else dataset.behaviors
    write_behavior_csv(paths["behavior"], values)
    write_covariates_csv(paths["covariates"], dataset.covariates)
    write_json(
        paths["config"],
        {
            "n_levels": config.n_levels,
            "behavior_value": config.behavior_value,
            "binning": config.binning,
            "cutoff_low": config.cutoff_low,
            "cutoff_high": config.cutoff_high,
        },
    )
    return paths


def read_dataset(edges, behavior, covariates, config) -> tuple[PanelDataset, LoadConfig]:
    cfg = LoadConfig.from_mapping(read_json(config))
    return load_dataset(edges, behavior, covariates, cfg), cfg


def read_effect_spec(model_cfg: dict) -> EffectSpec:
    if "effects" not in model_cfg:
        raise DataError("model config is missing the 'effects' section")
    try:
        return EffectSpec.from_config(model_cfg["effects"])
    except ValueError as exc:
        raise DataError(f"bad effect list: {exc}") from exc


def read_model(path) -> tuple[EffectSpec, ParameterVector | None, dict]:
    """Read a model JSON: effect catalog, optional parameter values, and
    the raw mapping (for extra sections such as estimation settings)."""
    cfg = read_json(path)
    spec = read_effect_spec(cfg)
    params = None
    if "params" in cfg:
        try:
            params = ParameterVector.from_config(cfg["params"])
        except KeyError as exc:
            raise DataError(f"model params are missing {exc}") from exc
    return spec, params, cfg
