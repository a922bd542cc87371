import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal import data as D
from xmodal.errors import DataError
from xmodal.text_encoding import EncodingSpec, encode_text, tokenize


class TestLoadCaptions:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "caps.tsv"
        path.write_text("1000092795.jpg#0\tTwo young guys with shaggy hair\n")
        records = D.load_captions(path)
        assert records == [
            D.CaptionRecord(image_id="1000092795.jpg", caption_index=0,
                            text="Two young guys with shaggy hair")
        ]

    def test_missing_tab(self, tmp_path):
        path = tmp_path / "caps.tsv"
        path.write_text("img.jpg#0 no tab here\n")
        with pytest.raises(DataError, match="line 1: missing tab"):
            D.load_captions(path)

    def test_non_integer_index(self, tmp_path):
        path = tmp_path / "caps.tsv"
        path.write_text("img.jpg#x\tcaption\n")
        with pytest.raises(DataError, match="non-integer caption index"):
            D.load_captions(path)

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "caps.tsv"
        path.write_text("img.jpg#0\tfirst\nimg.jpg#0\tsecond\n")
        with pytest.raises(DataError, match="line 2: duplicate"):
            D.load_captions(path)

    def test_round_trip(self, tmp_path):
        records = [
            D.CaptionRecord("a.jpg", k, f"caption number {k}") for k in range(5)
        ] + [D.CaptionRecord("b.jpg", 0, "another one")]
        path = tmp_path / "caps.tsv"
        D.write_captions(path, records)
        assert D.load_captions(path) == records


class TestSplit:
    def _records(self, n):
        return [D.CaptionRecord(f"im{i:03d}.jpg", 0, "x") for i in range(n)]

    def test_counts_and_disjoint(self):
        s = D.split(self._records(10), test_count=3, seed=0)
        assert len(s.train) == 7 and len(s.test) == 3
        assert not set(s.train) & set(s.test)
        assert sorted(s.train + s.test) == [f"im{i:03d}.jpg" for i in range(10)]

    def test_deterministic(self):
        a = D.split(self._records(20), 5, seed=9)
        b = D.split(self._records(20), 5, seed=9)
        assert a == b
        c = D.split(self._records(20), 5, seed=10)
        assert c != a

    def test_zero_test_count(self):
        s = D.split(self._records(4), 0, seed=1)
        assert len(s.train) == 4 and s.test == ()

    def test_insufficient_images(self):
        with pytest.raises(DataError, match="only 3 distinct"):
            D.split(self._records(3), 3, seed=0)

    @given(n=st.integers(2, 30), t=st.integers(0, 15), seed=st.integers(0, 999))
    @settings(max_examples=30)
    def test_partition_property(self, n, t, seed):
        if t >= n:
            return
        s = D.split(self._records(n), t, seed)
        assert len(s.test) == t
        assert set(s.train) | set(s.test) == {f"im{i:03d}.jpg" for i in range(n)}
        assert not set(s.train) & set(s.test)


class TestResizeBilinear:
    def test_identity(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8)
        np.testing.assert_array_equal(D.resize_bilinear(img, 9), img)

    def test_constant_image(self):
        img = np.full((5, 5, 3), 77, dtype=np.uint8)
        for target in (1, 3, 8, 17):
            out = D.resize_bilinear(img, target)
            assert out.shape == (target, target, 3)
            assert np.all(out == 77)

    def test_checkerboard_corners(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0, 0] = img[1, 1] = 255
        out = D.resize_bilinear(img, 4)
        np.testing.assert_array_equal(out[0, 0], img[0, 0])
        np.testing.assert_array_equal(out[0, 3], img[0, 1])
        np.testing.assert_array_equal(out[3, 0], img[1, 0])
        np.testing.assert_array_equal(out[3, 3], img[1, 1])

    def test_against_pointwise_oracle(self):
        # independent scalar re-evaluation of corner-aligned bilinear weights
        rng = np.random.default_rng(4)
        img = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)
        target = 4
        out = D.resize_bilinear(img, target)
        h, w = img.shape[:2]
        for oy in range(target):
            for ox in range(target):
                sy = oy * (h - 1) / (target - 1)
                sx = ox * (w - 1) / (target - 1)
                y0, x0 = int(np.floor(sy)), int(np.floor(sx))
                y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
                fy, fx = sy - y0, sx - x0
                for ch in range(3):
                    val = (
                        img[y0, x0, ch] * (1 - fy) * (1 - fx)
                        + img[y0, x1, ch] * (1 - fy) * fx
                        + img[y1, x0, ch] * fy * (1 - fx)
                        + img[y1, x1, ch] * fy * fx
                    )
                    assert out[oy, ox, ch] == int(np.floor(val + 0.5))

    @given(seed=st.integers(0, 999), target=st.integers(1, 16))
    @settings(max_examples=30)
    def test_bounds_preserved(self, seed, target):
        rng = np.random.default_rng(seed)
        img = rng.integers(40, 200, size=(6, 6, 3), dtype=np.uint8)
        out = D.resize_bilinear(img, target)
        assert out.min() >= img.min() and out.max() <= img.max()


class TestHflip:
    def test_involution(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(4, 7, 3), dtype=np.uint8)
        np.testing.assert_array_equal(D.hflip(D.hflip(img)), img)

    def test_symmetric_unchanged(self):
        img = np.zeros((3, 4, 3), dtype=np.uint8)
        img[:, 0] = img[:, 3] = 200
        img[:, 1] = img[:, 2] = 50
        np.testing.assert_array_equal(D.hflip(img), img)

    def test_two_pixel_row(self):
        img = np.zeros((1, 2, 3), dtype=np.uint8)
        img[0, 0] = [1, 2, 3]
        img[0, 1] = [4, 5, 6]
        out = D.hflip(img)
        np.testing.assert_array_equal(out[0, 0], [4, 5, 6])
        np.testing.assert_array_equal(out[0, 1], [1, 2, 3])


def _encoded_set(seed=0, canvas=32):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(canvas, canvas, 3), dtype=np.uint8) for _ in range(5)]


class TestAugment:
    def test_standard_counts(self):
        image = np.full((40, 40, 3), 120, dtype=np.uint8)
        cfg = D.AugmentationConfig(mode="standard", crop_side=28, input_side=32)
        instances = D.augment(image, _encoded_set(), cfg, group_id=7)
        assert len(instances) == 6
        tags = [i.modality for i in instances]
        assert tags.count("image") == 1 and tags.count("text") == 5
        assert all(i.class_id == 7 for i in instances)
        assert all(i.pixels.shape == (32, 32, 3) for i in instances)

    def test_config2_counts(self):
        image = np.full((40, 40, 3), 120, dtype=np.uint8)
        cfg = D.AugmentationConfig(mode="config2", crop_side=28, input_side=32)
        instances = D.augment(image, _encoded_set(), cfg, group_id=3)
        assert len(instances) == 12
        tags = [i.modality for i in instances]
        assert tags.count("image") == 2 and tags.count("text") == 10
        assert all(i.class_id == 3 for i in instances)

    def test_config2_crop_positions(self):
        from xmodal.text_encoding import crop_encoded

        image = np.full((32, 32, 3), 9, dtype=np.uint8)
        encoded = _encoded_set(seed=11)
        cs = 20
        cfg = D.AugmentationConfig(mode="config2", crop_side=cs, input_side=32)
        instances = D.augment(image, encoded, cfg, group_id=0)
        crops = instances[7:]
        w = h = 32
        offsets = [(0, 0), (w - cs, 0), (0, h - cs), (w - cs, h - cs),
                   ((w - cs) // 2, (h - cs) // 2)]
        for k, inst in enumerate(crops):
            ox, oy = offsets[k]
            expected = D.resize_bilinear(crop_encoded(encoded[k], cs, cs, ox, oy), 32)
            np.testing.assert_array_equal(inst.pixels, expected)

    def test_wrong_caption_count(self):
        image = np.full((8, 8, 3), 1, dtype=np.uint8)
        cfg = D.AugmentationConfig()
        with pytest.raises(DataError, match="expected 5"):
            D.augment(image, _encoded_set()[:4], cfg, 0)

    def test_crop_exceeds_canvas(self):
        image = np.full((8, 8, 3), 1, dtype=np.uint8)
        cfg = D.AugmentationConfig(mode="config2", crop_side=64, input_side=8)
        with pytest.raises(DataError, match="crop_side"):
            D.augment(image, _encoded_set(canvas=32), cfg, 0)


class TestSynthDataset:
    def test_group_count_and_captions(self):
        corpus = D.synth_dataset(n_groups=8, seed=1)
        assert len(corpus.images) == 8
        assert len(corpus.captions) == 40
        assert len({rec.text for rec in corpus.captions if rec.caption_index == 0}) == 8

    def test_all_64_combinations_unique(self):
        corpus = D.synth_dataset(n_groups=64, seed=0)
        first_caption = [rec.text for rec in corpus.captions if rec.caption_index == 0]
        assert len(set(first_caption)) == 64

    def test_too_many_groups(self):
        with pytest.raises(DataError, match="exceeds the 64"):
            D.synth_dataset(n_groups=100, seed=0)
        with pytest.raises(DataError, match=">= 2"):
            D.synth_dataset(n_groups=1, seed=0)

    def test_deterministic(self):
        a = D.synth_dataset(n_groups=5, seed=77)
        b = D.synth_dataset(n_groups=5, seed=77)
        assert all(
            x.pixels.tobytes() == y.pixels.tobytes() for x, y in zip(a.images, b.images)
        )
        assert a.captions == b.captions
        np.testing.assert_array_equal(a.table.vectors, b.table.vectors)

    def test_captions_name_the_color(self):
        corpus = D.synth_dataset(n_groups=16, seed=3)
        color_words = {name for name, _ in D.COLORS}
        by_image = {}
        for rec in corpus.captions:
            by_image.setdefault(rec.image_id, []).append(rec.text)
        for image_id, texts in by_image.items():
            colors_present = [
                {w for w in tokenize(t)} & color_words for t in texts
            ]
            shared = set.intersection(*colors_present)
            assert len(shared) == 1  # exactly one color word, in all five captions

    def test_vocabulary_covers_captions(self):
        corpus = D.synth_dataset(n_groups=32, seed=42)
        for rec in corpus.captions:
            for token in tokenize(rec.text):
                assert token in corpus.table.vocab

    def test_images_per_group(self):
        corpus = D.synth_dataset(n_groups=3, images_per_group=2, seed=0)
        assert len(corpus.images) == 6
        assert len(corpus.captions) == 30
        groups = [img.group for img in corpus.images]
        assert groups == [0, 0, 1, 1, 2, 2]


class TestCorpusIO:
    def test_write_load_round_trip(self, tmp_path):
        corpus = D.synth_dataset(n_groups=4, seed=5)
        D.write_corpus(corpus, tmp_path / "c")
        loaded = D.load_corpus(tmp_path / "c")
        assert loaded.captions == corpus.captions
        assert loaded.groups == corpus.groups
        np.testing.assert_array_equal(loaded.table.vectors, corpus.table.vectors)
        for img in corpus.images:
            np.testing.assert_array_equal(loaded.images[img.image_id], img.pixels)

    def test_missing_pieces_rejected(self, tmp_path):
        corpus = D.synth_dataset(n_groups=3, seed=5)
        D.write_corpus(corpus, tmp_path / "c")
        (tmp_path / "c" / "vocab.vec").unlink()
        with pytest.raises(DataError, match="missing vocab.vec"):
            D.load_corpus(tmp_path / "c")


def test_synth_corpus_encodes_without_oov(tmp_path):
    corpus = D.synth_dataset(n_groups=6, seed=9)
    spec = EncodingSpec()
    for rec in corpus.captions[:10]:
        result = encode_text(tokenize(rec.text), corpus.table, spec)
        assert result.oov_skipped == 0
        assert result.image.any()
