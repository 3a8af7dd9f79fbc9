"""Classifier architecture, training loop semantics, prediction, evaluation."""

import numpy as np
import pytest

from artifact import augment
from artifact.classifier import (
    TrainConfig,
    augment_image,
    build_default_classifier,
    evaluate,
    history_to_csv,
    load_dataset,
    predict,
    stratified_split,
    train_classifier,
)
from artifact.core.io import save_png
from artifact.core.types import DatasetManifest, ImageTensor, Label, RngStream


def quiet_config(**overrides) -> TrainConfig:
    """Augmentation-free config for deterministic toy experiments."""
    base = dict(epochs=2, batch_size=8, flip_h_p=0.0, flip_v_p=0.0, erase_p=0.0,
                grayscale_p=0.0, perspective_p=0.0, rotation_max_deg=0.0,
                lr=0.05, momentum=0.9, seed=0, early_stop_patience=100)
    base.update(overrides)
    return TrainConfig(**base)


class TestArchitecture:
    def test_batch_output_shape(self):
        model = build_default_classifier(0)
        x = np.random.default_rng(0).random((128, 3, 32, 32)).astype(np.float32)
        assert model.forward(x).shape == (128, 1)

    def test_fresh_model_outputs_in_open_interval(self):
        model = build_default_classifier(1)
        x = np.random.default_rng(1).random((4, 3, 32, 32)).astype(np.float32)
        out = model.forward(x)
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_parameter_count_closed_form(self):
        model = build_default_classifier(0)
        conv1 = 32 * 3 * 9 + 32
        conv2 = 64 * 32 * 9 + 64
        conv3 = 128 * 64 * 9 + 128
        dense1 = 256 * 2048 + 256
        dense2 = 1 * 256 + 1
        assert model.param_count() == conv1 + conv2 + conv3 + dense1 + dense2
        assert model.param_count() <= 2_000_000


class TestTraining:
    def test_memorizes_two_image_manifest(self, tmp_path):
        real = ImageTensor(np.clip(np.random.default_rng(0).random((3, 32, 32)) * 0.3, 0, 1))
        fake = ImageTensor(np.clip(0.7 + np.random.default_rng(1).random((3, 32, 32)) * 0.3, 0, 1))
        save_png(real, tmp_path / "r.png")
        save_png(fake, tmp_path / "f.png")
        manifest = DatasetManifest(entries=[(str(tmp_path / "r.png"), Label.REAL),
                                            (str(tmp_path / "f.png"), Label.FAKE)])
        cfg = quiet_config(epochs=50, batch_size=2, lr=0.05)
        model, history = train_classifier(manifest, cfg)
        assert history[-1]["train_acc"] == 1.0

    def test_fixed_seed_bit_identical(self, tiny_corpus):
        manifest = tiny_corpus(4, 4)
        cfg = quiet_config(epochs=2)
        m1, h1 = train_classifier(manifest, cfg)
        m2, h2 = train_classifier(manifest, cfg)
        assert h1 == h2
        for name, arr in m1.named_params():
            assert np.array_equal(arr, m2.params[name])

    def test_empty_pipeline_equals_zero_probability(self, tiny_corpus):
        manifest = tiny_corpus(4, 4)
        cfg = quiet_config(epochs=2)
        specs = [s for s in augment.default_pipeline(probability=0.0)
                 if s.kind is not augment.PerturbationKind.ADVERSARIAL_NOISE]
        m1, _ = train_classifier(manifest, cfg, perturb=[])
        m2, _ = train_classifier(manifest, cfg, perturb=specs)
        for name, arr in m1.named_params():
            assert np.array_equal(arr, m2.params[name])

    def test_single_class_manifest_rejected(self, tmp_path):
        save_png(ImageTensor.full(3, 32, 32, 0.3), tmp_path / "x.png")
        manifest = DatasetManifest(entries=[(str(tmp_path / "x.png"), Label.REAL)])
        with pytest.raises(ValueError, match="both classes"):
            train_classifier(manifest, quiet_config())

    def test_early_stop_restores_best_epoch(self, tiny_corpus):
        manifest = tiny_corpus(10, 10)
        cfg = quiet_config(epochs=12, batch_size=4, lr=0.08, early_stop_patience=2)
        model, history = train_classifier(manifest, cfg)
        val_losses = [row["val_loss"] for row in history]
        best_epoch = int(np.argmin(val_losses)) + 1
        assert model.metadata["epochs_trained"] == best_epoch

    def test_flip_p1_on_symmetric_images_matches_p0(self, tmp_path):
        gen = np.random.default_rng(7)
        entries = []
        for i in range(4):
            half = gen.random((3, 32, 16))
            data = np.concatenate([half, half[:, :, ::-1]], axis=2)  # h-symmetric
            p = tmp_path / f"s{i}.png"
            save_png(ImageTensor(data), p)
            entries.append((str(p), Label.REAL if i % 2 else Label.FAKE))
        manifest = DatasetManifest(entries=entries)
        h0 = train_classifier(manifest, quiet_config(epochs=1, batch_size=4, flip_h_p=0.0))[1]
        h1 = train_classifier(manifest, quiet_config(epochs=1, batch_size=4, flip_h_p=1.0))[1]
        # PNG quantization keeps the mirror exact, so the first-epoch loss agrees
        assert h0[0]["train_loss"] == pytest.approx(h1[0]["train_loss"], abs=1e-6)

    def test_history_csv(self, tiny_corpus, tmp_path):
        manifest = tiny_corpus(4, 4)
        _, history = train_classifier(manifest, quiet_config(epochs=2))
        history_to_csv(history, tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,train_acc,val_acc"
        assert len(lines) == len(history) + 1


class TestAugmentImage:
    def test_all_off_identity(self, random_image):
        cfg = quiet_config()
        out = augment_image(random_image.data, cfg, RngStream(5))
        assert np.array_equal(out, random_image.data)

    def test_grayscale_equalizes_channels(self, random_image):
        cfg = quiet_config(grayscale_p=1.0)
        out = augment_image(random_image.data, cfg, RngStream(5))
        assert np.allclose(out[0], out[1]) and np.allclose(out[1], out[2])

    def test_output_in_range(self, random_image):
        cfg = TrainConfig(epochs=1, seed=0)  # default-probability transforms
        for i in range(5):
            out = augment_image(random_image.data, cfg, RngStream(i))
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestPredict:
    def test_tie_is_real(self):
        model = build_default_classifier(0)
        # zero the head: sigmoid(0) = 0.5 exactly, which must resolve to Real
        last_dense = model.layers[-2]
        last_dense.params["W"][...] = 0
        last_dense.params["b"][...] = 0
        label, conf = predict(model, ImageTensor.full(3, 32, 32, 0.5))
        assert label is Label.REAL
        assert conf == 0.5

    def test_shape_mismatch(self):
        model = build_default_classifier(0)
        with pytest.raises(ValueError):
            predict(model, ImageTensor.zeros(3, 16, 16))

    def test_invariant_to_batch_context(self, rng):
        model = build_default_classifier(2)
        imgs = rng.random((4, 3, 32, 32)).astype(np.float32)
        batch_out = model.forward(imgs)
        for i in range(4):
            single = model.forward(imgs[i : i + 1])[0, 0]
            assert single == pytest.approx(batch_out[i, 0], abs=1e-6)

    def test_matches_training_labels_on_memorized_set(self, tiny_corpus):
        manifest = tiny_corpus(3, 3)
        cfg = quiet_config(epochs=40, batch_size=6, lr=0.05)
        model, history = train_classifier(manifest, cfg)
        assert history[-1]["train_acc"] == 1.0
        from artifact.core.io import load_png

        # val split is empty at this size, so every entry was memorized
        for path, label in manifest.entries:
            pred, _ = predict(model, load_png(path))
            assert pred is label


class TestEvaluate:
    def test_always_real_model_on_real_set(self, tiny_corpus):
        manifest = tiny_corpus(5, 0)
        model = build_default_classifier(0)
        model.layers[-2].params["W"][...] = 0
        model.layers[-2].params["b"][...] = 0
        result = evaluate(model, manifest)
        assert result.accuracy == 1.0

    def test_confusion_recount(self, tiny_corpus):
        manifest = tiny_corpus(4, 4)
        model = build_default_classifier(0)
        result = evaluate(model, manifest)
        recount = {"real": {"real": 0, "fake": 0}, "fake": {"real": 0, "fake": 0}}
        for row in result.predictions:
            recount[row["label"]][row["predicted"]] += 1
        assert recount == result.confusion
        total = sum(sum(r.values()) for r in result.confusion.values())
        correct = result.confusion["real"]["real"] + result.confusion["fake"]["fake"]
        assert result.accuracy == correct / total

    def test_unreadable_counted_not_fatal(self, tiny_corpus, tmp_path):
        manifest = tiny_corpus(3, 3)
        bogus = tmp_path / "missing.png"
        entries = manifest.entries + [(str(bogus), Label.REAL)]
        model = build_default_classifier(0)
        result = evaluate(model, DatasetManifest(entries=entries))
        assert result.unreadable == [str(bogus)]
        assert len(result.predictions) == 6

    def test_timing_positive_and_stable(self, tiny_corpus):
        manifest = tiny_corpus(10, 10)
        model = build_default_classifier(0)
        r1 = evaluate(model, manifest)
        r2 = evaluate(model, manifest)
        assert r1.median_infer_ms > 0
        ratio = max(r1.median_infer_ms, r2.median_infer_ms) / min(r1.median_infer_ms, r2.median_infer_ms)
        assert ratio < 3.0


class TestAdversarialEffectiveness:
    def test_attack_degrades_memorized_model(self, tiny_corpus):
        manifest = tiny_corpus(8, 8)
        cfg = quiet_config(epochs=30, batch_size=16, lr=0.05)
        model, _ = train_classifier(manifest, cfg)
        x, y, _ = load_dataset(manifest)
        preds_clean = model.forward(x)
        loss_clean = float(np.mean(np.abs(preds_clean - y)))
        attacked = augment.adversarial_noise_batch(x, model, 0.05)
        preds_attacked = model.forward(attacked)
        loss_attacked = float(np.mean(np.abs(preds_attacked - y)))
        acc_clean = float(np.mean((preds_clean > 0.5) == (y > 0.5)))
        acc_attacked = float(np.mean((preds_attacked > 0.5) == (y > 0.5)))
        assert acc_attacked <= acc_clean
        assert loss_attacked > loss_clean


class TestSplit:
    def test_stratified_deterministic(self):
        labels = np.array([[0.0]] * 30 + [[1.0]] * 30)
        t1, v1 = stratified_split(labels, seed=4)
        t2, v2 = stratified_split(labels, seed=4)
        assert np.array_equal(t1, t2) and np.array_equal(v1, v2)

    def test_proportions(self):
        labels = np.array([[0.0]] * 40 + [[1.0]] * 40)
        train, val = stratified_split(labels, seed=0)
        assert len(val) == 8  # 10% of each class
        assert len(train) == 72
        val_labels = labels[val, 0]
        assert (val_labels == 0).sum() == 4 and (val_labels == 1).sum() == 4

    def test_tiny_class_keeps_training_sample(self):
        labels = np.array([[0.0], [1.0]])
        train, val = stratified_split(labels, seed=0)
        assert len(train) == 2 and len(val) == 0


class TestLoadDataset:
    def test_rejects_wrong_size(self, tmp_path):
        save_png(ImageTensor.full(3, 16, 16, 0.5), tmp_path / "small.png")
        manifest = DatasetManifest(entries=[(str(tmp_path / "small.png"), Label.REAL)])
        with pytest.raises(ValueError, match="3x32x32"):
            load_dataset(manifest)
