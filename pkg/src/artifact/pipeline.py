"""End-to-end analysis of single images: classify, then (for fakes) localize,
categorize, and explain; plus the determinism hash over stable report content.

Wall-clock timings land in ``provenance.timings_ms`` and nowhere else, so the
determinism hash can cover everything except that one subtree.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import classifier as clf
from . import explain as ex
from . import localizer as loc
from . import metrics, taxonomy
from .config import RunConfig
from .core.io import load_png, save_png
from .core.ops import ResizeMode, resize
from .core.types import ImageTensor, Label, RngStream
from .nn.network import Model


@dataclass
class AnalyzeOutcome:
    source: str
    ok: bool
    verdict: str | None = None
    confidence: float = 0.0
    report_path: str | None = None
    heatmap_path: str | None = None
    error: str | None = None
    classify_ms: float = 0.0
    metrics_ms: float = 0.0


def _unique_stem(path: Path, used: set[str]) -> str:
    stem = path.stem
    candidate = stem
    i = 2
    while candidate in used:
        candidate = f"{stem}-{i}"
        i += 1
    used.add(candidate)
    return candidate


def _highlight_rule(cfg: RunConfig, autoencoder: Model):
    lcfg = cfg["localizer"]
    if lcfg["rule"] == "percentile":
        return loc.ImagePercentile(p=lcfg["percentile"])
    if lcfg["rule"] == "sigma":
        return loc.global_sigma_rule(autoencoder, k=lcfg["sigma_k"])
    raise ValueError(f"unknown highlight rule {lcfg['rule']!r}")


def _make_scorer(cfg: RunConfig, detector_scores: dict[str, float]):
    tcfg = cfg["taxonomy"]
    if tcfg["scorer"] == "prior":
        return taxonomy.feature_prior_scorer(detector_scores=detector_scores)
    if tcfg["scorer"] == "remote":
        if not tcfg["remote_endpoint"]:
            raise ValueError("remote scorer selected but no endpoint configured")
        return taxonomy.RemoteScorer(tcfg["remote_endpoint"], tcfg["remote_timeout_s"],
                                     tcfg["remote_retries"])
    raise ValueError(f"unknown scorer {tcfg['scorer']!r}")


def analyze_image(path: str | Path, classifier: Model, autoencoder: Model,
                  thresholds: metrics.ThresholdConfig, cfg: RunConfig,
                  seed: int, index: int, out_dir: Path, stem: str,
                  warn=lambda msg: None) -> AnalyzeOutcome:
    """Analyze one image file and write its report (and heatmap when fake)."""
    path = Path(path)
    t_start = time.perf_counter()
    try:
        img = load_png(path)
    except Exception as exc:
        return AnalyzeOutcome(source=str(path), ok=False, error=str(exc))

    if img.channels == 1:
        img = ImageTensor(np.repeat(img.data, 3, axis=0))
    if (img.height, img.width) != (32, 32):
        if cfg["analyze"]["resize"] == "error":
            return AnalyzeOutcome(source=str(path), ok=False,
                                  error=f"input is {img.height}x{img.width}, not 32x32")
        warn(f"{path}: resizing {img.height}x{img.width} -> 32x32 (bilinear); "
             "detection quality degrades away from native 32x32")
        img = resize(img, 32, 32, ResizeMode.BILINEAR)

    rng = RngStream(seed).derive(index)
    t0 = time.perf_counter()
    preport = metrics.perturbation_report(
        img, thresholds, rng,
        jpeg_quality=cfg["analyze"]["jpeg_quality"],
        resize_factor=cfg["analyze"]["resize_factor"],
    )
    metrics_ms = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    label, confidence = clf.predict(classifier, img)
    classify_ms = (time.perf_counter() - t0) * 1000.0

    timings = {"metrics": metrics_ms, "classify": classify_ms,
               "localize": 0.0, "explain": 0.0}
    provenance = {
        "classifier_id": classifier.model_id(),
        "autoencoder_id": autoencoder.model_id(),
        "seed": seed,
        "explanation_source": None,
        "scorer_id": None,
    }

    heatmap_name = None
    anomaly = None
    categories = None
    explanation = None

    if label is Label.FAKE:
        t0 = time.perf_counter()
        errmap = loc.error_map(autoencoder, img)
        lcfg = cfg["localizer"]
        if lcfg["smoothing_sigma"] > 0:
            errmap = loc.smoothed(errmap, lcfg["smoothing_sigma"])
        mask = loc.highlight(errmap, _highlight_rule(cfg, autoencoder))
        overlay = loc.heatmap_overlay(img, errmap, mask)
        anomaly = loc.anomaly_score(errmap)
        heatmap_name = f"{stem}.heatmap.png"
        save_png(overlay, out_dir / heatmap_name)
        if cfg["analyze"]["dump_errmap"]:
            (out_dir / f"{stem}.errmap.json").write_text(
                json.dumps({"values": errmap.to_grid(), "stats": errmap.stats}) + "\n")
        timings["localize"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        scorer = _make_scorer(cfg, preport.scores)
        cat_scores = taxonomy.score_categories(img, errmap, scorer)
        provenance["scorer_id"] = cat_scores.scorer_id
        categories = taxonomy.top_k(cat_scores, k=3)

        request = ex.ExplanationRequest(
            image=img, heatmap=overlay, top_groups=categories,
            perturbations=preport, anomaly=anomaly,
        )
        explanation, source = _explain(request, cfg)
        provenance["explanation_source"] = source
        timings["explain"] = (time.perf_counter() - t0) * 1000.0

    timings["total"] = (time.perf_counter() - t_start) * 1000.0
    provenance["timings_ms"] = timings

    report = ex.assemble_report(
        verdict=label.value, confidence=confidence, preport=preport,
        anomaly=anomaly, categories=categories, explanation=explanation,
        heatmap_path=heatmap_name, provenance=provenance,
    )
    report_dict = report.to_dict()
    report_dict["source"] = str(path)
    report_path = out_dir / f"{stem}.report.json"
    report_path.write_text(json.dumps(report_dict, indent=2, sort_keys=True) + "\n")

    return AnalyzeOutcome(
        source=str(path), ok=True, verdict=label.value, confidence=confidence,
        report_path=str(report_path),
        heatmap_path=str(out_dir / heatmap_name) if heatmap_name else None,
        classify_ms=classify_ms, metrics_ms=metrics_ms,
    )


def _explain(request: ex.ExplanationRequest, cfg: RunConfig) -> tuple[list[tuple[str, str]], str]:
    """VLM when configured (falling back on any failure), template otherwise.

    Fake verdicts always get at least one bullet: if neither the endpoint nor
    the flag-driven templates produced anything, the anomaly-evidence fallback
    bullet fills in.
    """
    ecfg = cfg["explain"]
    if ecfg["vlm_endpoint"]:
        vlm_cfg = ex.VlmConfig(endpoint=ecfg["vlm_endpoint"], model=ecfg["vlm_model"],
                               timeout_s=ecfg["vlm_timeout_s"])
        prompt = ex.build_prompt(request)
        images = [request.image] + ([request.heatmap] if request.heatmap else [])
        try:
            text = ex.query_vlm(prompt, images, vlm_cfg)
            parsed = ex.parse_vlm_bullets(text, request.candidates)
            if parsed.entries:
                return parsed.entries, "vlm"
        except ex.VlmError:
            pass
    bullets = ex.template_explanation(request)
    if not bullets:
        bullets = [ex.fallback_bullet(request)]
    return bullets, "template"


def run_analyze(paths: list[str | Path], classifier: Model, autoencoder: Model,
                thresholds: metrics.ThresholdConfig, cfg: RunConfig, seed: int,
                out_dir: str | Path, workers: int = 0,
                warn=lambda msg: None) -> list[AnalyzeOutcome]:
    """Fan analysis out across worker threads; results keep input order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    used: set[str] = set()
    stems = [_unique_stem(Path(p), used) for p in paths]
    if workers <= 0:
        import os

        workers = os.cpu_count() or 1
    if workers == 1 or len(paths) <= 1:
        return [
            analyze_image(p, classifier, autoencoder, thresholds, cfg, seed, i, out_dir,
                          stems[i], warn)
            for i, p in enumerate(paths)
        ]

    # Forward caches live inside Model layers, so each thread gets replicas
    # that alias the same (read-only) parameter arrays.
    local = threading.local()

    def worker(i: int, p: str | Path) -> AnalyzeOutcome:
        if not hasattr(local, "models"):
            local.models = (classifier.share_copy(), autoencoder.share_copy())
        c, a = local.models
        return analyze_image(p, c, a, thresholds, cfg, seed, i, out_dir, stems[i], warn)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, i, p) for i, p in enumerate(paths)]
        return [f.result() for f in futures]


def stable_report_view(report_dict: dict) -> dict:
    """Report content with the wall-clock subtree removed."""
    out = json.loads(json.dumps(report_dict))
    out.get("provenance", {}).pop("timings_ms", None)
    return out


def determinism_hash(report_dicts: list[dict], heatmap_blobs: Iterable[bytes] = ()) -> str:
    """Digest over the stable portion of run outputs, input order preserved."""
    h = hashlib.sha256()
    for rep in report_dicts:
        h.update(json.dumps(stable_report_view(rep), sort_keys=True).encode("utf-8"))
    for blob in heatmap_blobs:
        h.update(blob)
    return h.hexdigest()
