"""The fixed artifact catalog, category scoring, and top-k shortlisting.

Eight semantic groups of visual-anomaly names, shipped read-only. Category
scoring goes through a pluggable scorer interface: the default feature-prior
scorer maps measured detector evidence onto groups through a fixed linear
prior and needs no external weights; the remote scorer posts the image to a
configurable embedding endpoint instead.
"""

from __future__ import annotations

import base64
import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .core.io import png_bytes
from .core.types import ImageTensor
from .localizer import ErrorMap

GROUP_GEOMETRIC = "Geometric and Structural Anomalies"
GROUP_TEXTURE = "Texture and Surface Issues"
GROUP_LIGHTING = "Lighting and Reflection Problems"
GROUP_ANATOMICAL = "Anatomical and Biological Anomalies"
GROUP_PERSPECTIVE = "Perspective and Spatial Distortions"
GROUP_QUALITY = "Image Quality Issues"
GROUP_SYNTHETIC = "Visual Artifacts from Synthetic Image Generation"
GROUP_OCCLUSION = "Occlusion and Object Cut-off Issues"

# Names appear exactly as catalogued, including the duplicates that occur in
# more than one group.
_CATALOG: tuple[tuple[str, tuple[str, ...]], ...] = (
    (GROUP_GEOMETRIC, (
        "Inconsistent object boundaries",
        "Discontinuous surfaces",
        "Non-manifold geometries in rigid structures",
        "Floating or disconnected components",
        "Asymmetric features in naturally symmetric objects",
        "Misaligned bilateral elements in animal faces",
        "Irregular proportions in mechanical components",
        "Impossible mechanical connections",
        "Inconsistent scale of mechanical parts",
        "Physically impossible structural elements",
        "Incorrect wheel geometry",
        "Implausible aerodynamic structures",
        "Misaligned body panels",
        "Impossible mechanical joints",
        "Anatomically impossible joint configurations",
        "Unnatural pose artifacts",
        "Biological asymmetry errors",
        "Excessive sharpness in certain image regions",
        "Unnaturally glossy surfaces",
    )),
    (GROUP_TEXTURE, (
        "Texture bleeding between adjacent regions",
        "Texture repetition patterns",
        "Over-smoothing of natural textures",
        "Artificial noise patterns in uniform surfaces",
        "Metallic surface artifacts",
        "Artificial enhancement artifacts",
        "Regular grid-like artifacts in textures",
        "Repeated element patterns",
        "Synthetic material appearance",
        "Artificial smoothness",
    )),
    (GROUP_LIGHTING, (
        "Unrealistic specular highlights",
        "Inconsistent material properties",
        "Multiple light source conflicts",
        "Missing ambient occlusion",
        "Incorrect reflection mapping",
        "Inconsistent shadow directions",
        "Glow or light bleed around object boundaries",
        "Incorrect Skin Tones",
        "Unnatural Lighting Gradients",
        "Dramatic lighting that defies natural physics",
        "Multiple inconsistent shadow sources",
    )),
    (GROUP_ANATOMICAL, (
        "Dental anomalies in mammals",
        "Anatomically incorrect paw structures",
        "Improper fur direction flows",
        "Unrealistic eye reflections",
        "Misshapen ears or appendages",
        "Anatomically impossible joint configurations",
        "Impossible foreshortening in animal bodies",
        "Exaggerated characteristic features",
    )),
    (GROUP_PERSPECTIVE, (
        "Incorrect perspective rendering",
        "Scale inconsistencies within single objects",
        "Spatial relationship errors",
        "Depth perception anomalies",
        "Fake depth of field",
        "Resolution inconsistencies within regions",
        "Artificial depth of field in object presentation",
        "Impossible mechanical joints",
    )),
    (GROUP_QUALITY, (
        "Over-sharpening artifacts",
        "Aliasing along high-contrast edges",
        "Blurred boundaries in fine details",
        "Jagged edges in curved structures",
        "Random noise patterns in detailed areas",
        "Loss of fine detail in complex structures",
        "Systematic color distribution anomalies",
        "Color coherence breaks",
        "Unnatural color transitions",
        "Frequency domain signatures",
    )),
    (GROUP_SYNTHETIC, (
        "Ghosting effects: Semi-transparent duplicates of elements",
        "Cinematization Effects",
        "Movie-poster like composition of ordinary scenes",
        "Unnatural pose artifacts",
    )),
    (GROUP_OCCLUSION, (
        "Abruptly cut off objects",
        "Inconsistent object boundaries",
    )),
)

GROUP_NAMES = tuple(name for name, _ in _CATALOG)


@dataclass(frozen=True)
class ArtifactCatalog:
    groups: tuple[tuple[str, tuple[str, ...]], ...]

    def group_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.groups)

    def artifacts(self, group: str) -> tuple[str, ...]:
        for name, items in self.groups:
            if name == group:
                return items
        raise KeyError(f"unknown group {group!r}")

    def all_artifact_names(self) -> set[str]:
        return {a for _, items in self.groups for a in items}

    def to_dict(self) -> dict:
        return {name: list(items) for name, items in self.groups}


def catalog() -> ArtifactCatalog:
    """The embedded read-only catalog (8 groups, duplicates preserved)."""
    return ArtifactCatalog(groups=_CATALOG)


@dataclass
class CategoryScores:
    scores: dict[str, float]
    scorer_id: str

    def __post_init__(self):
        missing = set(GROUP_NAMES) - set(self.scores)
        if missing:
            raise ValueError(f"scores missing groups: {sorted(missing)}")
        for g, v in self.scores.items():
            if not np.isfinite(v):
                raise ValueError(f"non-finite score for {g!r}")


class EmbeddingScorer(Protocol):
    scorer_id: str

    def score(self, img: ImageTensor, errmap: ErrorMap | None = None) -> CategoryScores: ...


def _squash(x: float, scale: float) -> float:
    """Map a nonnegative score to [0, 1) with soft saturation at `scale`."""
    return x / (x + scale)


class FeaturePriorScorer:
    """Deterministic offline scorer: detector evidence -> group affinities.

    Each group's score is a base level plus a weighted sum of squashed
    detector features (and, when available, the masked fraction of the error
    map). The weights are fixed shipped data, not learned.
    """

    scorer_id = "feature-prior-v1"

    # feature name -> (squash scale, {group: weight})
    WEIGHTS: dict[str, tuple[float, dict[str, float]]] = {
        "pattern_injection": (0.25, {GROUP_QUALITY: 0.9, GROUP_TEXTURE: 0.5}),
        "noise": (0.002, {GROUP_QUALITY: 0.6, GROUP_TEXTURE: 0.4}),
        "blur": (0.05, {GROUP_GEOMETRIC: 0.35, GROUP_QUALITY: 0.3}),
        "edge_intensity": (0.2, {GROUP_QUALITY: 0.45, GROUP_GEOMETRIC: 0.3}),
        "color_shift": (0.25, {GROUP_LIGHTING: 0.6, GROUP_QUALITY: 0.2}),
        "saturation_variance": (0.05, {GROUP_LIGHTING: 0.55, GROUP_SYNTHETIC: 0.2}),
        "compression": (0.005, {GROUP_QUALITY: 0.35, GROUP_PERSPECTIVE: 0.3}),
        "jpeg": (0.002, {GROUP_TEXTURE: 0.4, GROUP_QUALITY: 0.25}),
        "resize": (0.005, {GROUP_PERSPECTIVE: 0.45, GROUP_QUALITY: 0.2}),
        "edge_smoothing": (0.004, {GROUP_TEXTURE: 0.5, GROUP_ANATOMICAL: 0.25}),
        "motion_blur": (0.006, {GROUP_SYNTHETIC: 0.5, GROUP_PERSPECTIVE: 0.25}),
        "pixel_shuffle": (0.1, {GROUP_TEXTURE: 0.3, GROUP_ANATOMICAL: 0.25}),
        "brightness_deviation": (0.3, {GROUP_LIGHTING: 0.5, GROUP_SYNTHETIC: 0.25}),
        "errmap_fraction": (0.15, {GROUP_OCCLUSION: 0.6, GROUP_GEOMETRIC: 0.35, GROUP_ANATOMICAL: 0.2}),
    }
    BASE = 0.1

    def __init__(self, detector_scores: dict[str, float] | None = None):
        # Precomputed detector scores may be passed to avoid recomputation.
        self._detector_scores = detector_scores

    def score(self, img: ImageTensor, errmap: ErrorMap | None = None) -> CategoryScores:
        from . import metrics
        from .core.types import RngStream

        raw = self._detector_scores or metrics.compute_scores(img, RngStream(0))
        features = dict(raw)
        features["brightness_deviation"] = abs(raw["brightness"] - 0.5)
        features.pop("brightness", None)
        if errmap is not None and errmap.stats["max"] > 0:
            high = errmap.values > 0.5 * errmap.stats["max"]
            features["errmap_fraction"] = float(high.mean())
        totals = {g: self.BASE for g in GROUP_NAMES}
        for fname, (scale, group_weights) in self.WEIGHTS.items():
            if fname not in features:
                continue
            evidence = _squash(max(features[fname], 0.0), scale)
            for group, weight in group_weights.items():
                totals[group] += weight * evidence
        return CategoryScores(scores=totals, scorer_id=self.scorer_id)


def feature_prior_scorer(detector_scores: dict[str, float] | None = None) -> FeaturePriorScorer:
    return FeaturePriorScorer(detector_scores=detector_scores)


class RemoteScorerError(RuntimeError):
    pass


class RemoteScorer:
    """POSTs {"image_png_base64", "groups"} and expects {"scores": {group: real}}."""

    def __init__(self, endpoint: str, timeout_s: float = 10.0, retries: int = 1):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.retries = retries
        self.scorer_id = f"remote:{endpoint}"

    def score(self, img: ImageTensor, errmap: ErrorMap | None = None) -> CategoryScores:
        payload = json.dumps({
            "image_png_base64": base64.b64encode(png_bytes(img)).decode("ascii"),
            "groups": list(GROUP_NAMES),
        }).encode("utf-8")
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(
                self.endpoint, data=payload, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    body = json.loads(resp.read().decode("utf-8"))
                return CategoryScores(scores={g: float(body["scores"][g]) for g in GROUP_NAMES},
                                      scorer_id=self.scorer_id)
            except (urllib.error.URLError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
                last_error = exc
        raise RemoteScorerError(f"remote scorer {self.endpoint} failed: {last_error}") from last_error


def score_categories(img: ImageTensor, errmap: ErrorMap | None, scorer: EmbeddingScorer) -> CategoryScores:
    """Delegate to the scorer; failures carry the scorer id."""
    try:
        return scorer.score(img, errmap)
    except Exception as exc:
        raise RuntimeError(f"scorer {getattr(scorer, 'scorer_id', scorer)!r} failed: {exc}") from exc


def top_k(scores: CategoryScores, k: int = 3) -> list[tuple[str, float]]:
    """Highest-scoring groups, descending; ties break by catalog order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(GROUP_NAMES):
        raise ValueError(f"k must be <= {len(GROUP_NAMES)}, got {k}")
    order = {name: i for i, name in enumerate(GROUP_NAMES)}
    ranked = sorted(scores.scores.items(), key=lambda kv: (-kv[1], order[kv[0]]))
    return ranked[:k]
