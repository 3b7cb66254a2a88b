"""Fitted-model files.

A model is stored as JSON together with the training inputs it expands over.
Floats are written with Python's shortest round-trip repr, so a loaded model
reproduces in-memory predictions bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import KernelSpec, cross_gram

SCHEMA_VERSION = 1


@dataclass
class KplsModel:
    spec: KernelSpec
    X_train: np.ndarray
    coeffs: np.ndarray
    y_mean: float
    y_scale: float
    chosen_m: int
    rule: dict = field(default_factory=dict)
    trace_summary: dict = field(default_factory=dict)

    def predict(self, X_new) -> np.ndarray:
        # same arithmetic as kpls.cg.predict
        values = cross_gram(self.spec, X_new, self.X_train) @ self.coeffs
        return self.y_mean + self.y_scale * values

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.X_train).tobytes()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kernel": self.spec.to_dict(),
            "X_digest": self.digest(),
            "X_train": self.X_train.tolist(),
            "coefficients": self.coeffs.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "chosen_m": self.chosen_m,
            "rule": self.rule,
            "trace_summary": self.trace_summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> KplsModel:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported model schema version {d.get('schema_version')!r}")
        try:
            model = cls(
                spec=KernelSpec.from_dict(d["kernel"]),
                X_train=np.asarray(d["X_train"], dtype=float).reshape(len(d["X_train"]), -1),
                coeffs=np.asarray(d["coefficients"], dtype=float),
                y_mean=float(d["y_mean"]),
                y_scale=float(d["y_scale"]),
                chosen_m=int(d["chosen_m"]),
                rule=d.get("rule", {}),
                trace_summary=d.get("trace_summary", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model file: {exc}") from exc
        if model.digest() != d.get("X_digest", model.digest()):
            raise ConfigError("training-input digest does not match stored inputs")
        return model


def save_model(model: KplsModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path: str | Path) -> KplsModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return KplsModel.from_dict(d)
