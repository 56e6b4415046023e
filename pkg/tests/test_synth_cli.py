import json
import os

import numpy as np
import pytest

from foodid.cli import main
from foodid.images import load_manifest, read_image
from foodid.synth import apply_label_noise, generate_texture_image, write_texture_corpus


class TestSynthCorpus:
    def test_writes_images_and_valid_manifest(self, tmp_path):
        out = tmp_path / "corpus"
        manifest = write_texture_corpus(str(out), n_classes=4, per_class=5, size=16, seed=0)
        assert len(manifest) == 20
        pngs = [f for f in os.listdir(out) if f.endswith(".png")]
        assert len(pngs) == 20
        img = read_image(str(out / manifest.samples[0].path))
        assert (img.width, img.height) == (16, 16)

    def test_deterministic(self, tmp_path):
        rng1 = np.random.Generator(np.random.PCG64(3))
        rng2 = np.random.Generator(np.random.PCG64(3))
        a = generate_texture_image(2, 10, 24, rng1)
        b = generate_texture_image(2, 10, 24, rng2)
        assert a.same_pixels(b)

    def test_classes_visually_distinct(self):
        rng = np.random.Generator(np.random.PCG64(4))
        means = []
        for cls in range(10):
            img = generate_texture_image(cls, 10, 24, rng)
            means.append(img.pixels.reshape(-1, 3).mean(axis=0))
        means = np.asarray(means)
        dists = np.sqrt(((means[:, None] - means[None, :]) ** 2).sum(-1))
        np.fill_diagonal(dists, np.inf)
        assert dists.min() > 10.0  # every pair of class color means well separated

    def test_label_noise_changes_only_labels(self, tmp_path):
        manifest = write_texture_corpus(str(tmp_path / "c"), 5, 20, 12, seed=1)
        noisy = apply_label_noise(manifest, 0.25, seed=2)
        assert [s.path for s in noisy.samples] == [s.path for s in manifest.samples]
        changed = sum(
            a.label != b.label for a, b in zip(manifest.samples, noisy.samples)
        )
        # 25 candidates relabeled uniformly over 5 classes -> ~20 actual changes
        assert 10 <= changed <= 25


class TestCli:
    @pytest.fixture(scope="class")
    @staticmethod
    def workspace(tmp_path_factory):
        """Full CLI round: corpus -> bundle -> augment -> features."""
        root = tmp_path_factory.mktemp("cli")
        steps = [
            ["synth-corpus", "--out", str(root / "corpus"), "--classes", "3",
             "--per-class", "6", "--size", "20", "--seed", "5",
             "--label-noise", "0.2"],
            ["make-bundle", "--preset", "tiny", "--seed", "1",
             "--out", str(root / "tiny.fwb")],
            ["augment", "--manifest", str(root / "corpus" / "manifest.json"),
             "--out", str(root / "aug"), "--seed", "3"],
            ["ingest", "--manifest", str(root / "corpus" / "manifest.json"),
             "--weights", str(root / "tiny.fwb"), "--out", str(root / "orig.fmx")],
            ["ingest", "--manifest", str(root / "aug" / "manifest.json"),
             "--weights", str(root / "tiny.fwb"), "--out", str(root / "aug.fmx")],
        ]
        for argv in steps:
            assert main(argv) == 0, argv
        return root

    def test_synth_outputs(self, workspace):
        manifest = load_manifest(str(workspace / "corpus" / "manifest.json"))
        assert len(manifest) == 18
        assert os.path.exists(workspace / "corpus" / "manifest_noisy.json")

    def test_cluster_sweep(self, workspace):
        rc = main([
            "cluster-sweep", "--features", str(workspace / "orig.fmx"),
            "--kmin", "2", "--kmax", "4", "--seed", "0",
            "--out", str(workspace / "sweep.json"),
        ])
        assert rc == 0
        doc = json.loads((workspace / "sweep.json").read_text())
        assert set(doc) == {"per_k", "best_k"}
        assert set(doc["per_k"]) == {"2", "3", "4"}

    def test_augment_outputs(self, workspace):
        aug_manifest = load_manifest(str(workspace / "aug" / "manifest.json"))
        assert len(aug_manifest) == 18 * 32
        files = [f for f in os.listdir(workspace / "aug") if f.endswith("_a00.png")]
        assert len(files) == 18

    def test_train_and_evaluate(self, workspace):
        rc = main([
            "train", "--features", str(workspace / "orig.fmx"), "--model", "gbdt",
            "--rounds", "5", "--out", str(workspace / "model.fmd"),
        ])
        assert rc == 0
        rc = main([
            "evaluate", "--features", str(workspace / "orig.fmx"),
            "--model", str(workspace / "model.fmd"), "--split", "0.34",
        ])
        assert rc == 0

    def test_experiment_command(self, workspace):
        config = {
            "seed": 1,
            "test_fraction": 0.25,
            "datasets": {
                "original": {"features": "orig.fmx"},
                "augmented": {"features": "aug.fmx"},
            },
            "classifiers": {
                "mlp": {"hidden": [16, 8], "epochs": 10, "dropout": [0, 0]},
                "gbdt": {"rounds": 4},
                "svm": {"C": 10.0},
            },
        }
        (workspace / "exp.json").write_text(json.dumps(config))
        rc = main([
            "experiment", "--config", str(workspace / "exp.json"),
            "--out", str(workspace / "report.json"),
        ])
        assert rc == 0
        report = json.loads((workspace / "report.json").read_text())
        assert list(report["grid"]) == ["original", "augmented", "mixed"]
        meta = report["metadata"]["datasets"]
        assert meta["mixed"]["rows"] == meta["original"]["rows"] + meta["augmented"]["rows"]

    def test_experiment_from_manifests(self, workspace):
        config = {
            "seed": 2,
            "test_fraction": 0.25,
            "datasets": {
                "original": {"manifest": "corpus/manifest.json", "weights": "tiny.fwb"},
                "augmented": {"manifest": "aug/manifest.json", "weights": "tiny.fwb"},
            },
            "classifiers": {
                "mlp": {"hidden": [16, 8], "epochs": 5, "dropout": [0, 0]},
                "gbdt": {"rounds": 3},
                "svm": {"C": 1.0},
            },
        }
        (workspace / "exp2.json").write_text(json.dumps(config))
        rc = main([
            "experiment", "--config", str(workspace / "exp2.json"),
            "--out", str(workspace / "report2.json"),
        ])
        assert rc == 0
        report = json.loads((workspace / "report2.json").read_text())
        assert report["metadata"]["normalization"]["original"]["mode"] == "unit"

    def test_exit_code_2_on_parse_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        rc = main(["augment", "--manifest", str(bad), "--out", str(tmp_path / "x"),
                   "--seed", "0"])
        assert rc == 2

    def test_exit_code_3_on_validation_error(self, tmp_path):
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps({
            "classes": ["a"],
            "samples": [{"path": "x.png", "label": 5}],
        }))
        rc = main(["augment", "--manifest", str(manifest), "--out", str(tmp_path / "y"),
                   "--seed", "0"])
        assert rc == 3
