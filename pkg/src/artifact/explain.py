"""Human-readable explanations and final report assembly.

Two explanation sources: an external vision-language chat endpoint (OpenAI
style JSON over HTTP) when configured, and a deterministic template engine
that needs nothing but the measured evidence. Every artifact name that can
appear in a report comes verbatim from the catalog.
"""

from __future__ import annotations

import base64
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import NamedTuple

from .core.io import png_bytes
from .core.types import ImageTensor
from .metrics import DETECTORS, PerturbationReport
from .taxonomy import catalog

VLM_API_KEY_ENV = "VLM_API_KEY"
DEFAULT_VLM_TIMEOUT_S = 30.0

# One catalog artifact per detector, chosen by semantic match, plus a short
# sentence skeleton instantiated with the measured score.
DETECTOR_ARTIFACTS: dict[str, tuple[str, str]] = {
    "noise": ("Random noise patterns in detailed areas",
              "Residual noise energy of {score:.5f} survives denoising, consistent with synthetic grain."),
    "compression": ("Loss of fine detail in complex structures",
                    "A resampling round trip changes the image by {score:.5f}, indicating fragile fine detail."),
    "blur": ("Over-sharpening artifacts",
             "Laplacian variance of {score:.5f} is unusually high, suggesting exaggerated edges."),
    "edge_intensity": ("Aliasing along high-contrast edges",
                       "{score:.4f} of pixels sit on detected edges, an unusually dense edge field."),
    "color_shift": ("Unnatural color transitions",
                    "Inter-channel differences average {score:.5f}, beyond the clean-image range."),
    "saturation_variance": ("Systematic color distribution anomalies",
                            "Saturation variance of {score:.5f} points to uneven, synthetic color placement."),
    "pixel_shuffle": ("Artificial noise patterns in uniform surfaces",
                      "Pixel permutation distortion of {score:.5f} reveals atypical spatial structure."),
    "jpeg": ("Regular grid-like artifacts in textures",
             "Block-transform recompression moves the image by {score:.5f}, exposing grid-aligned texture."),
    "resize": ("Resolution inconsistencies within regions",
               "A scale round trip changes the image by {score:.5f}, hinting at mixed effective resolution."),
    "edge_smoothing": ("Artificial smoothness",
                       "Gaussian smoothing changes the image by {score:.5f}, more than natural texture allows."),
    "motion_blur": ("Ghosting effects: Semi-transparent duplicates of elements",
                    "Directional blurring changes the image by {score:.5f}, consistent with smeared duplicates."),
    "pattern_injection": ("Frequency domain signatures",
                          "Dominant spectral peaks hold {score:.4f} of the energy, a periodic injection signature."),
    "brightness": ("Unnatural Lighting Gradients",
                   "Mean intensity of {score:.4f} falls outside the calibrated brightness band."),
}

FALLBACK_TEXT = (
    "Reconstruction of this region deviates from the real-image manifold "
    "(anomaly score {score:.5f}) even though no single detector crossed its threshold."
)


@dataclass
class ExplanationRequest:
    image: ImageTensor
    heatmap: ImageTensor | None
    top_groups: list[tuple[str, float]]
    perturbations: PerturbationReport
    anomaly: float = 0.0

    def __post_init__(self):
        if not (1 <= len(self.top_groups) <= 3):
            raise ValueError(f"expected 1..3 groups, got {len(self.top_groups)}")

    @property
    def candidates(self) -> list[str]:
        """Union of the shortlisted groups' artifact names, first occurrence wins."""
        cat = catalog()
        seen: list[str] = []
        for group, _ in self.top_groups:
            for name in cat.artifacts(group):
                if name not in seen:
                    seen.append(name)
        return seen


@dataclass
class VlmConfig:
    endpoint: str
    model: str = "local-vlm"
    timeout_s: float = DEFAULT_VLM_TIMEOUT_S
    api_key_env: str = VLM_API_KEY_ENV


class VlmError(RuntimeError):
    """Base for endpoint failures; all of them allow template fallback."""


class VlmTimeoutError(VlmError):
    pass


class VlmHttpError(VlmError):
    pass


class VlmBadResponseError(VlmError):
    pass


class ParsedBullets(NamedTuple):
    entries: list[tuple[str, str]]
    dropped: int


def build_prompt(req: ExplanationRequest) -> str:
    """Deterministic prompt: framing, the shortlisted groups, the candidate
    artifact names verbatim, and the required bullet format."""
    lines = [
        "You are an image forensics assistant. The attached 32x32 image was "
        "classified as AI-generated; a red-tinted heatmap marks regions with "
        "high reconstruction error.",
        "",
        "Most likely artifact categories:",
    ]
    for i, (group, score) in enumerate(req.top_groups, 1):
        lines.append(f"{i}. {group} (confidence {score:.4f})")
    lines.append("")
    lines.append("Look specifically for these artifacts:")
    for name in req.candidates:
        lines.append(f"- {name}")
    lines.append("")
    lines.append(
        "For every artifact you can actually observe, answer with one bullet "
        "per artifact in the exact form 'artifact name: one-paragraph explanation'. "
        "Use only artifact names from the list above."
    )
    return "\n".join(lines)


def _image_part(img: ImageTensor) -> dict:
    b64 = base64.b64encode(png_bytes(img)).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}


def query_vlm(prompt: str, images: list[ImageTensor], cfg: VlmConfig) -> str:
    """One chat-completion round trip; returns the raw text content."""
    content: list[dict] = [{"type": "text", "text": prompt}]
    content.extend(_image_part(img) for img in images)
    body = json.dumps({
        "model": cfg.model,
        "messages": [{"role": "user", "content": content}],
    }).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    req = urllib.request.Request(cfg.endpoint, data=body, headers=headers)
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout_s) as resp:
            raw = resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        raise VlmHttpError(f"endpoint returned {exc.code}") from exc
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise VlmTimeoutError(f"endpoint unreachable or timed out: {exc}") from exc
    try:
        parsed = json.loads(raw)
        return parsed["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise VlmBadResponseError(f"malformed chat-completion body: {exc}") from exc


def parse_vlm_bullets(text: str, candidates: list[str]) -> ParsedBullets:
    """Split 'name: explanation' bullets; unknown artifact names are dropped
    and counted. Markdown bullets and bold markers are tolerated."""
    known = set(candidates)
    entries: list[tuple[str, str]] = []
    dropped = 0
    for line in text.splitlines():
        line = line.strip().lstrip("-*").strip()
        if not line or ":" not in line:
            continue
        name, _, rest = line.partition(":")
        name = name.strip().strip("*").strip()
        rest = rest.strip().strip("*").strip()
        if not name:
            continue
        if name in known:
            entries.append((name, rest))
        else:
            dropped += 1
    return ParsedBullets(entries=entries, dropped=dropped)


def template_explanation(req: ExplanationRequest) -> list[tuple[str, str]]:
    """One bullet per flagged detector, in fixed detector order, restricted to
    artifact names present in the candidate list. No flags means no bullets."""
    candidates = set(req.candidates)
    out: list[tuple[str, str]] = []
    for det in DETECTORS:
        if not req.perturbations.flags.get(det, False):
            continue
        artifact, skeleton = DETECTOR_ARTIFACTS[det]
        if artifact not in candidates:
            continue
        out.append((artifact, skeleton.format(score=req.perturbations.scores[det])))
    return out


def fallback_bullet(req: ExplanationRequest) -> tuple[str, str]:
    """Guaranteed explanation for fake verdicts when no detector fired: the
    top-ranked group's first artifact with reconstruction-anomaly evidence."""
    top_group = req.top_groups[0][0]
    artifact = catalog().artifacts(top_group)[0]
    return (artifact, FALLBACK_TEXT.format(score=req.anomaly))


@dataclass
class AnalysisReport:
    verdict: str  # "real" | "fake"
    confidence: float
    perturbations: PerturbationReport
    anomaly_score: float | None = None
    categories: list[dict] = field(default_factory=list)
    explanation: list[dict] = field(default_factory=list)
    heatmap_path: str | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "confidence": self.confidence,
            "perturbations": self.perturbations.to_dict(),
            "anomaly_score": self.anomaly_score,
            "categories": self.categories,
            "explanation": self.explanation,
            "heatmap": self.heatmap_path,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        return cls(
            verdict=d["verdict"],
            confidence=d["confidence"],
            perturbations=PerturbationReport.from_dict(d["perturbations"]),
            anomaly_score=d.get("anomaly_score"),
            categories=list(d.get("categories", [])),
            explanation=list(d.get("explanation", [])),
            heatmap_path=d.get("heatmap"),
            provenance=dict(d.get("provenance", {})),
        )


def assemble_report(verdict: str, confidence: float, preport: PerturbationReport,
                    anomaly: float | None = None,
                    categories: list[tuple[str, float]] | None = None,
                    explanation: list[tuple[str, str]] | None = None,
                    heatmap_path: str | None = None,
                    provenance: dict | None = None) -> AnalysisReport:
    """Schema-complete report; fake verdicts demand categories, real forbids them."""
    if verdict not in ("real", "fake"):
        raise ValueError(f"verdict must be 'real' or 'fake', got {verdict!r}")
    if verdict == "fake" and not categories:
        raise ValueError("fake verdicts must supply artifact categories")
    if verdict == "real" and (categories or explanation or heatmap_path):
        raise ValueError("real verdicts must not carry categories, explanations, or heatmaps")
    valid_names = catalog().all_artifact_names()
    for name, _ in explanation or []:
        if name not in valid_names:
            raise ValueError(f"explanation artifact {name!r} is not in the catalog")
    return AnalysisReport(
        verdict=verdict,
        confidence=confidence,
        perturbations=preport,
        anomaly_score=anomaly,
        categories=[{"group": g, "score": s} for g, s in (categories or [])],
        explanation=[{"artifact": a, "text": t} for a, t in (explanation or [])],
        heatmap_path=heatmap_path,
        provenance=dict(provenance or {}),
    )
