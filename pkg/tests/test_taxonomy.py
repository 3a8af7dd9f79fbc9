"""Artifact catalog, category scorers, and top-k shortlisting."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import metrics
from artifact.core.types import ImageTensor, RngStream
from artifact.localizer import ErrorMap
from artifact.taxonomy import (
    GROUP_NAMES,
    GROUP_QUALITY,
    CategoryScores,
    RemoteScorer,
    RemoteScorerError,
    catalog,
    feature_prior_scorer,
    score_categories,
    top_k,
)

FIXTURE = Path(__file__).parent / "fixtures" / "catalog.json"


class TestCatalog:
    def test_eight_groups(self):
        assert len(catalog().groups) == 8

    def test_group_names_order(self):
        assert catalog().group_names() == GROUP_NAMES

    def test_texture_bleeding_membership(self):
        assert "Texture bleeding between adjacent regions" in catalog().artifacts(
            "Texture and Surface Issues")

    def test_duplicate_across_groups_preserved(self):
        cat = catalog()
        assert "Inconsistent object boundaries" in cat.artifacts("Geometric and Structural Anomalies")
        assert "Inconsistent object boundaries" in cat.artifacts("Occlusion and Object Cut-off Issues")

    def test_matches_checked_in_fixture(self):
        assert catalog().to_dict() == json.loads(FIXTURE.read_text())

    def test_names_nonempty(self):
        for _, items in catalog().groups:
            assert all(items)

    def test_unknown_group_raises(self):
        with pytest.raises(KeyError):
            catalog().artifacts("No Such Group")


class TestFeaturePriorScorer:
    def test_constant_gray_near_uniform(self):
        img = ImageTensor.full(3, 32, 32, 0.5)
        scores = feature_prior_scorer().score(img)
        values = list(scores.scores.values())
        assert max(values) - min(values) < 0.1

    def test_grating_ranks_image_quality_first(self, grating):
        scores = feature_prior_scorer().score(grating)
        ranked = top_k(scores, k=8)
        assert ranked[0][0] == GROUP_QUALITY
        assert ranked[0][1] > ranked[1][1]  # strictly top

    def test_deterministic(self, random_image):
        a = feature_prior_scorer().score(random_image)
        b = feature_prior_scorer().score(random_image)
        assert a.scores == b.scores

    def test_accepts_precomputed_scores(self, random_image):
        detector_scores = metrics.compute_scores(random_image, RngStream(0))
        a = feature_prior_scorer(detector_scores).score(random_image)
        b = feature_prior_scorer().score(random_image)
        assert a.scores == pytest.approx(b.scores)

    def test_errmap_boosts_occlusion(self, random_image):
        values = np.zeros((32, 32))
        values[4:20, 4:20] = 1.0
        em = ErrorMap(values=values)
        with_map = feature_prior_scorer().score(random_image, em)
        without = feature_prior_scorer().score(random_image)
        occ = "Occlusion and Object Cut-off Issues"
        assert with_map.scores[occ] > without.scores[occ]

    def test_all_groups_scored(self, random_image):
        scores = score_categories(random_image, None, feature_prior_scorer())
        assert set(scores.scores) == set(GROUP_NAMES)


class _CannedScorerHandler(BaseHTTPRequestHandler):
    canned: dict = {}
    fail = False

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        assert "image_png_base64" in body and body["groups"] == list(GROUP_NAMES)
        if self.fail:
            self.send_response(500)
            self.end_headers()
            return
        payload = json.dumps({"scores": self.canned}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def canned_server():
    _CannedScorerHandler.canned = {g: float(i) / 10 for i, g in enumerate(GROUP_NAMES)}
    _CannedScorerHandler.fail = False
    server = HTTPServer(("127.0.0.1", 0), _CannedScorerHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestRemoteScorer:
    def test_canned_scores_pass_through(self, canned_server, random_image):
        scorer = RemoteScorer(canned_server, timeout_s=5.0)
        scores = score_categories(random_image, None, scorer)
        assert scores.scores == _CannedScorerHandler.canned
        assert scores.scorer_id.startswith("remote:")

    def test_server_error_surfaces_scorer_id(self, canned_server, random_image):
        _CannedScorerHandler.fail = True
        scorer = RemoteScorer(canned_server, timeout_s=5.0, retries=0)
        with pytest.raises(RuntimeError, match="remote:"):
            score_categories(random_image, None, scorer)

    def test_unreachable_endpoint(self, random_image):
        scorer = RemoteScorer("http://127.0.0.1:9/score", timeout_s=0.3, retries=0)
        with pytest.raises(RemoteScorerError):
            scorer.score(random_image)


class TestTopK:
    def make_scores(self, values):
        return CategoryScores(scores=dict(zip(GROUP_NAMES, values)), scorer_id="test")

    def test_distinct_scores_ordering(self):
        values = [0.9, 0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01]
        ranked = top_k(self.make_scores(values), k=3)
        assert [g for g, _ in ranked] == list(GROUP_NAMES[:3])

    def test_full_tie_catalog_order(self):
        ranked = top_k(self.make_scores([0.5] * 8), k=3)
        assert [g for g, _ in ranked] == list(GROUP_NAMES[:3])

    def test_no_duplicates_and_length(self):
        gen = np.random.default_rng(0)
        for _ in range(50):
            ranked = top_k(self.make_scores(gen.random(8).tolist()), k=3)
            names = [g for g, _ in ranked]
            assert len(names) == 3 and len(set(names)) == 3

    def test_k_bounds(self):
        scores = self.make_scores([0.1] * 8)
        with pytest.raises(ValueError):
            top_k(scores, k=0)
        with pytest.raises(ValueError):
            top_k(scores, k=9)

    def test_brute_force_sort_equivalence(self):
        gen = np.random.default_rng(42)
        order = {name: i for i, name in enumerate(GROUP_NAMES)}
        for _ in range(200):
            values = gen.random(8).tolist()
            scores = self.make_scores(values)
            ranked = top_k(scores, k=8)
            brute = sorted(scores.scores.items(), key=lambda kv: (-kv[1], order[kv[0]]))
            assert ranked == brute

    @given(st.lists(st.integers(min_value=0, max_value=10**6), min_size=8, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_monotone_transform_invariance(self, grid_values):
        # a 1e-6 grid keeps score distinctions intact through the affine map,
        # so the mathematical argsort invariance is observable in float64
        values = [v * 1e-6 for v in grid_values]
        base = top_k(self.make_scores(values), k=3)
        transformed = top_k(self.make_scores([3.0 * v + 1.0 for v in values]), k=3)
        assert [g for g, _ in base] == [g for g, _ in transformed]


class TestCategoryScores:
    def test_requires_all_groups(self):
        with pytest.raises(ValueError, match="missing groups"):
            CategoryScores(scores={"Image Quality Issues": 1.0}, scorer_id="x")

    def test_rejects_nonfinite(self):
        scores = {g: 0.5 for g in GROUP_NAMES}
        scores[GROUP_NAMES[0]] = float("nan")
        with pytest.raises(ValueError, match="non-finite"):
            CategoryScores(scores=scores, scorer_id="x")
