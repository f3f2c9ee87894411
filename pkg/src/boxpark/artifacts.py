"""Run artifacts: metrics CSV (diffable, versioned schema), run manifests,
checkpoints, and trajectory dumps.

Metrics rows never contain wall-clock timestamps; those go to a sidecar file so
that fixed-seed runs produce byte-identical CSVs.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .nets import PolicyNet, ValueNet

METRICS_SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


class MetricsWriter:
    """CSV with a fixed column set; first column is the iteration index."""

    def __init__(self, path: str | Path, columns: list[str]):
        assert columns[0] == "iteration"
        self.path = Path(path)
        self.columns = list(columns)
        self.side = self.path.with_suffix(".timestamps.txt")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w") as f:
            f.write(f"# schema=v{METRICS_SCHEMA_VERSION}\n")
            f.write(",".join(self.columns) + "\n")
        with open(self.side, "w") as f:
            f.write("iteration,unix_time\n")

    def write_row(self, row: dict) -> None:
        with open(self.path, "a") as f:
            f.write(",".join(_fmt(row.get(c, 0)) for c in self.columns) + "\n")
        with open(self.side, "a") as f:
            f.write(f"{row.get('iteration', 0)},{time.time():.3f}\n")


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(out_dir: str | Path, cfg_dict: dict, seed: int,
                   extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "config_hash": config_hash(cfg_dict),
        "seed": int(seed),
        "build": f"boxpark-{__version__}",
        "metrics_schema": METRICS_SCHEMA_VERSION,
        "checkpoint_version": CHECKPOINT_VERSION,
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
    return path


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, actor: PolicyNet, critic: ValueNet,
                    meta: dict) -> Path:
    """Versioned .npz parameter dump plus a JSON meta blob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"log_std": actor.log_std}
    for k, v in actor.params.items():
        arrays[f"actor_{k}"] = v
    for k, v in critic.params.items():
        arrays[f"critic_{k}"] = v
    meta = dict(meta)
    meta["version"] = CHECKPOINT_VERSION
    arrays["meta_json"] = np.bytes_(json.dumps(meta, sort_keys=True).encode())
    np.savez(path, **arrays)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_checkpoint(path: str | Path) -> tuple[PolicyNet, ValueNet, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    data = np.load(path, allow_pickle=False)
    meta = json.loads(bytes(data["meta_json"]).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version: {meta.get('version')}")
    actor_params = {k[len("actor_"):]: data[k] for k in data.files if k.startswith("actor_")}
    critic_params = {k[len("critic_"):]: data[k] for k in data.files if k.startswith("critic_")}
    actor = PolicyNet(params=actor_params, log_std=data["log_std"].copy())
    critic = ValueNet(params=critic_params)
    return actor, critic, meta


def check_checkpoint_dims(actor: PolicyNet, obs_dim: int, act_dim: int) -> None:
    got_in = actor.params["W0"].shape[0]
    n_layers = sum(1 for k in actor.params if k.startswith("W"))
    got_out = actor.params[f"W{n_layers - 1}"].shape[1]
    if got_in != obs_dim:
        raise CheckpointError(
            f"checkpoint observation width {got_in} != environment {obs_dim}")
    if got_out != act_dim:
        raise CheckpointError(
            f"checkpoint action width {got_out} != environment {act_dim}")


class TrajectoryDumper:
    """Per-step CSV dump with a fixed column set decided at creation."""

    def __init__(self, path: str | Path, columns: list[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "w")
        self._f.write(",".join(self.columns) + "\n")

    def write(self, row: dict) -> None:
        self._f.write(",".join(_fmt(row.get(c, 0)) for c in self.columns) + "\n")

    def close(self) -> None:
        self._f.close()
