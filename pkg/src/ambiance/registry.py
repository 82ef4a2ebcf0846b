"""The versioned feature manifest: 64 per-picture features and frozen constants."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ManifestMismatch

N_FEATURES = 64
PROFILE_LENGTH = 2 * N_FEATURES + 1


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    family: str
    module: str
    low: float
    high: float
    face_dependent: bool
    label: str

    def in_range(self, value: float) -> bool:
        return self.low - 1e-9 <= value <= self.high + 1e-9


@dataclass(frozen=True)
class FeatureRegistry:
    """Ordered list of exactly 64 feature descriptors plus manifest constants."""

    version: str
    features: tuple[FeatureDescriptor, ...]
    constants: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(names) != N_FEATURES:
            raise ManifestMismatch(f"registry must list {N_FEATURES} features, found {len(names)}")
        if len(set(names)) != len(names):
            raise ManifestMismatch("registry feature names must be unique")

    def __len__(self):
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def _index(self) -> dict[str, int]:
        # frozen dataclass: build lazily and stash on the instance dict
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {f.name: i for i, f in enumerate(self.features)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def __getitem__(self, name: str) -> FeatureDescriptor:
        return self.features[self.index(name)]

    @property
    def face_dependent_mask(self):
        import numpy as np

        return np.array([f.face_dependent for f in self.features])

    @property
    def visual_names(self) -> list[str]:
        """Face-independent image features used for uniqueness."""
        return [f.name for f in self.features if f.module == "visual"]

    def profile_labels(self) -> list[str]:
        return [f"mean:{n}" for n in self.names] + [f"std:{n}" for n in self.names] + ["face_count"]

    def check(self, version: str, what: str = "input") -> None:
        if version != self.version:
            raise ManifestMismatch(f"{what} uses manifest {version!r}, registry is {self.version!r}")


def _parse(data: dict) -> FeatureRegistry:
    feats = []
    for entry in data["features"]:
        lo, hi = entry["range"]
        feats.append(
            FeatureDescriptor(
                name=entry["name"],
                family=entry["family"],
                module=entry["module"],
                low=float(lo),
                high=float(hi) if not (isinstance(hi, float) and math.isinf(hi)) else math.inf,
                face_dependent=bool(entry["face_dependent"]),
                label=entry.get("label", entry["name"]),
            )
        )
    return FeatureRegistry(str(data["version"]), tuple(feats), dict(data.get("constants", {})))


def load_registry(path: str | Path | None = None) -> FeatureRegistry:
    if path is None:
        return default_registry()
    with open(path, "rb") as fh:
        return _parse(tomllib.load(fh))


@lru_cache(maxsize=1)
def default_registry() -> FeatureRegistry:
    with resources.files("ambiance").joinpath("data/manifest.toml").open("rb") as fh:
        return _parse(tomllib.load(fh))


def constants() -> dict:
    return default_registry().constants
