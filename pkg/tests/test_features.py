import numpy as np
import pytest

from foodid.convnet import forward, tiny_bundle
from foodid.errors import FeatureFileParse, MalformedImage, ValidationError
from foodid.features import (
    FeatureMatrix,
    concat_features,
    extract_features,
    load_features,
    save_features,
)
from foodid.images import (
    DatasetManifest,
    NormalizationSpec,
    Sample,
    image_to_tensor,
    resize_bilinear,
    write_png,
)
from conftest import make_random_image


def small_corpus(tmp_path, n=4):
    samples = []
    for j in range(n):
        img = make_random_image(20, 24, seed=50 + j)
        path = tmp_path / f"img{j}.png"
        write_png(img, str(path))
        samples.append(Sample(path=str(path), label=j % 2))
    return DatasetManifest(classes=["a", "b"], samples=samples)


class TestExtract:
    def test_rows_match_single_forwards(self, tmp_path):
        manifest = small_corpus(tmp_path)
        bundle = tiny_bundle(seed=0)
        fm = extract_features(manifest, bundle)
        assert (fm.n, fm.d) == (4, 128)
        from foodid.images import read_image

        for i, sample in enumerate(manifest.samples):
            img = read_image(sample.path)
            t = image_to_tensor(resize_bilinear(img, 16, 16), bundle.normalization)
            assert np.array_equal(fm.values[i], forward(bundle, t))
        assert fm.labels.tolist() == [0, 1, 0, 1]

    def test_empty_manifest(self):
        bundle = tiny_bundle()
        fm = extract_features(DatasetManifest(classes=["a"], samples=[]), bundle)
        assert (fm.n, fm.d) == (0, 128)

    def test_error_annotated_with_path(self, tmp_path):
        manifest = DatasetManifest(
            classes=["a"], samples=[Sample(str(tmp_path / "missing.png"), 0)]
        )
        with pytest.raises(MalformedImage, match="missing.png"):
            extract_features(manifest, tiny_bundle())

    def test_norm_override(self, tmp_path):
        manifest = small_corpus(tmp_path, n=1)
        bundle = tiny_bundle(seed=0)
        unit = extract_features(manifest, bundle)
        shifted = extract_features(
            manifest,
            bundle,
            norm=NormalizationSpec(mode="mean_subtract", channel_means=(0.5, 0.5, 0.5)),
        )
        assert not np.array_equal(unit.values, shifted.values)


class TestFeatureMatrix:
    def test_rejects_nan(self):
        vals = np.zeros((2, 3), dtype=np.float32)
        vals[0, 0] = np.nan
        with pytest.raises(Exception):
            FeatureMatrix(values=vals, labels=np.zeros(2, dtype=np.int64))

    def test_rejects_label_shape(self):
        with pytest.raises(ValidationError):
            FeatureMatrix(
                values=np.zeros((2, 3), np.float32), labels=np.zeros(3, dtype=np.int64)
            )

    def test_concat_counts(self):
        a = FeatureMatrix(np.ones((3, 4), np.float32), np.zeros(3, np.int64))
        b = FeatureMatrix(np.zeros((2, 4), np.float32), np.ones(2, np.int64))
        c = concat_features(a, b)
        assert c.n == 5
        assert c.labels.tolist() == [0, 0, 0, 1, 1]

    def test_concat_rejects_dim_mismatch(self):
        a = FeatureMatrix(np.ones((3, 4), np.float32), np.zeros(3, np.int64))
        b = FeatureMatrix(np.zeros((2, 5), np.float32), np.ones(2, np.int64))
        with pytest.raises(ValidationError):
            concat_features(a, b)


class TestFmx1:
    def make(self, n=7, d=5, seed=0):
        rng = np.random.Generator(np.random.PCG64(seed))
        return FeatureMatrix(
            values=rng.standard_normal((n, d)).astype(np.float32),
            labels=rng.integers(0, 3, size=n),
            classes=("x", "y", "z"),
            source="unit-test",
            seed=17,
        )

    def test_roundtrip(self, tmp_path):
        fm = self.make()
        path = str(tmp_path / "f.fmx")
        save_features(fm, path)
        back = load_features(path)
        assert np.array_equal(back.values, fm.values)
        assert np.array_equal(back.labels, fm.labels)
        assert back.classes == fm.classes
        assert back.source == "unit-test"
        assert back.seed == 17

    def test_zero_rows(self, tmp_path):
        fm = FeatureMatrix(np.zeros((0, 9), np.float32), np.zeros(0, np.int64))
        path = str(tmp_path / "empty.fmx")
        save_features(fm, path)
        back = load_features(path)
        assert (back.n, back.d) == (0, 9)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmx"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(FeatureFileParse):
            load_features(str(path))

    def test_truncated(self, tmp_path):
        fm = self.make()
        path = tmp_path / "f.fmx"
        save_features(fm, str(path))
        data = path.read_bytes()
        path.write_bytes(data[:20])
        with pytest.raises(FeatureFileParse):
            load_features(str(path))
