"""Run configuration: one merged, serializable view of every stage's knobs.

Defaults live here; a JSON config file overrides them key by key. Every
command echoes its effective configuration into the output directory so runs
can be reproduced exactly.
"""

from __future__ import annotations

import json
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_SEED = 0  # used whenever --seed is absent; never wall-clock entropy

_DEFAULTS: dict = {
    "seed": DEFAULT_SEED,
    "thresholds": None,  # None -> library defaults; or {detector: value}
    "train": {},  # TrainConfig overrides
    "autoencoder": {},  # AutoencoderTrainConfig overrides
    "augment": None,  # None -> default 9-spec pipeline; or a list of spec dicts
    "localizer": {
        "rule": "percentile",  # or "sigma"
        "percentile": 90.0,
        "sigma_k": 2.0,
        "smoothing_sigma": 0.0,
    },
    "taxonomy": {
        "scorer": "prior",  # or "remote"
        "remote_endpoint": None,
        "remote_timeout_s": 10.0,
        "remote_retries": 1,
    },
    "explain": {
        "vlm_endpoint": None,  # None -> offline template engine
        "vlm_model": "local-vlm",
        "vlm_timeout_s": 30.0,
    },
    "analyze": {
        "resize": "auto",  # or "error"
        "workers": 0,  # 0 -> logical core count
        "jpeg_quality": 50,
        "resize_factor": 0.5,
        "dump_errmap": False,  # also write <stem>.errmap.json for fakes
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = deepcopy(value)
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: deepcopy(_DEFAULTS))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "RunConfig":
        merged = deepcopy(_DEFAULTS)
        if path is not None:
            merged = _merge(merged, json.loads(Path(path).read_text()))
        if overrides:
            merged = _merge(merged, overrides)
        return cls(values=merged)

    def __getitem__(self, key: str):
        return self.values[key]

    def to_dict(self) -> dict:
        return deepcopy(self.values)

    def echo(self, out_dir: str | Path, command: str, extra: dict | None = None) -> Path:
        """Write the effective config (plus command context) into the run dir."""
        from . import __version__

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": command,
            "version": __version__,
            "config": self.to_dict(),
        }
        if extra:
            payload.update(extra)
        path = out_dir / "run_config.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path
