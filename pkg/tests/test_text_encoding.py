import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal.errors import DataError
from xmodal.text_encoding import (
    EncodingSpec,
    WordEmbeddingTable,
    crop_encoded,
    encode_text,
    encode_word,
    load_embedding_table,
    quantize_component,
    tokenize,
    word_block_side,
    write_embedding_table,
)

UNIT_SPEC = EncodingSpec(
    canvas_width=8, canvas_height=8, superpixel_scale=1, value_min=-1.0, value_max=1.0
)


class TestLoadEmbeddingTable:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("2 3\na 1 0 0\nb 0 1 0\n")
        table = load_embedding_table(path)
        assert len(table) == 2 and table.dim == 3
        assert table.vocab == {"a": 0, "b": 1}
        np.testing.assert_array_equal(table.vectors[0], [1, 0, 0])

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("2 3\na 1 0 0\nb 0 1\n")
        with pytest.raises(DataError, match="expected 3 components"):
            load_embedding_table(path)

    def test_duplicate_token(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("1 3\na 1 0 0\na 0 1 0\n")
        with pytest.raises(DataError, match="duplicate token"):
            load_embedding_table(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_embedding_table(path)

    def test_non_finite_value(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("1 2\na nan 0\n")
        with pytest.raises(DataError, match="non-finite"):
            load_embedding_table(path)

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "t.vec"
        path.write_text("3 2\na 1 0\nb 0 1\n")
        with pytest.raises(DataError, match="declares 3"):
            load_embedding_table(path)

    def test_round_trip(self, tmp_path, tiny_table):
        path = tmp_path / "t.vec"
        write_embedding_table(path, tiny_table)
        back = load_embedding_table(path)
        assert back.vocab == tiny_table.vocab
        np.testing.assert_array_equal(back.vectors, tiny_table.vectors)


class TestTokenize:
    def test_sentence(self):
        assert tokenize("A man on a speed motorcycle") == [
            "a", "man", "on", "a", "speed", "motorcycle",
        ]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_splits(self):
        assert tokenize("beach-volleyball!") == ["beach", "volleyball"]

    def test_digits_kept(self):
        assert tokenize("3 ladies, 2 dogs") == ["3", "ladies", "2", "dogs"]


class TestQuantize:
    def test_bounds_exact(self, unit_spec):
        assert quantize_component(unit_spec.value_min, unit_spec) == 0
        assert quantize_component(unit_spec.value_max, unit_spec) == 255

    def test_midpoint_rounds_up(self, unit_spec):
        # 255 * 0.5 = 127.5, half away from zero -> 128
        assert quantize_component(0.0, unit_spec) == 128

    def test_clamping(self, unit_spec):
        assert quantize_component(-17.0, unit_spec) == 0
        assert quantize_component(42.0, unit_spec) == 255

    @given(
        c1=st.floats(-1, 1, allow_nan=False),
        c2=st.floats(-1, 1, allow_nan=False),
    )
    def test_monotonic(self, c1, c2):
        lo, hi = sorted((c1, c2))
        assert quantize_component(lo, UNIT_SPEC) <= quantize_component(hi, UNIT_SPEC)

    @given(c=st.floats(-50, 50, allow_nan=False))
    def test_output_is_byte(self, c):
        assert 0 <= quantize_component(c, UNIT_SPEC) <= 255


class TestEncodeWord:
    def test_d3_single_pixel(self, unit_spec):
        block = encode_word(np.array([-1.0, 0.0, 1.0]), unit_spec)
        assert block.shape == (1, 1, 3)
        np.testing.assert_array_equal(block[0, 0], [0, 128, 255])

    def test_d6_layout(self, unit_spec):
        block = encode_word(np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0]), unit_spec)
        assert block.shape == (2, 2, 3)
        np.testing.assert_array_equal(block[0, 0], [255, 255, 255])
        np.testing.assert_array_equal(block[0, 1], [0, 0, 0])  # quantized value_min
        np.testing.assert_array_equal(block[1, 0], [0, 0, 0])  # unfilled cell
        np.testing.assert_array_equal(block[1, 1], [0, 0, 0])  # unfilled cell

    def test_d128_geometry(self, unit_spec):
        # arithmetic oracle: ceil(128/3) = 43 pixels, side ceil(sqrt(43)) = 7
        d = 128
        pixels = math.ceil(d / 3)
        side = math.ceil(math.sqrt(pixels))
        assert (pixels, side) == (43, 7)
        block = encode_word(np.full(d, 1.0), unit_spec)
        assert block.shape == (side, side, 3)
        flat = block.reshape(-1, 3)
        # first 42 pixels fully saturated; pixel 43 has B from zero padding
        assert np.all(flat[:42] == 255)
        np.testing.assert_array_equal(flat[42], [255, 255, 128])
        assert np.all(flat[43:] == 0)
        assert side * side - pixels == 6

    @given(d=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40)
    def test_padding_invariant(self, d, seed):
        rng = np.random.default_rng(seed)
        vec = rng.uniform(-1, 1, size=d)
        block = encode_word(vec, UNIT_SPEC)
        pixels = math.ceil(d / 3)
        side = word_block_side(d)
        assert block.shape == (side, side, 3)
        flat = block.reshape(-1, 3)
        assert np.all(flat[pixels:] == 0)
        # each data pixel recomputed componentwise through the scalar quantizer
        padded = np.zeros(pixels * 3)
        padded[:d] = vec
        for p in range(pixels):
            expected = [quantize_component(padded[3 * p + ch], UNIT_SPEC) for ch in range(3)]
            np.testing.assert_array_equal(flat[p], expected)


class TestEncodeText:
    def test_empty_tokens_black_canvas(self, tiny_table, unit_spec):
        result = encode_text([], tiny_table, unit_spec)
        assert result.image.shape == (8, 8, 3)
        assert not result.image.any()
        assert result.dropped_words == 0

    def test_deterministic(self, tiny_table, unit_spec):
        a = encode_text(["alpha", "beta", "gamma"], tiny_table, unit_spec)
        b = encode_text(["alpha", "beta", "gamma"], tiny_table, unit_spec)
        assert a.image.tobytes() == b.image.tobytes()

    def test_single_word_pixel_values(self, tiny_table, unit_spec):
        result = encode_text(["alpha"], tiny_table, unit_spec)
        np.testing.assert_array_equal(result.image[0, 0], [0, 128, 255])
        mask = np.ones((8, 8), dtype=bool)
        mask[0, 0] = False
        assert not result.image[mask].any()

    def test_superpixel_scale(self, tiny_table):
        spec = EncodingSpec(canvas_width=8, canvas_height=8, superpixel_scale=2)
        result = encode_text(["alpha"], tiny_table, spec)
        assert np.all(result.image[:2, :2] == [0, 128, 255])
        assert not result.image[2:, :].any() and not result.image[:, 2:].any()

    def test_layout_gap_and_wrap(self, tiny_table, unit_spec):
        # side-1 blocks at logical width 8: positions x = 0, 2, 4, 6, then wrap to y = 2
        result = encode_text(["gamma"] * 5, tiny_table, unit_spec)
        filled = {(y, x) for y, x in zip(*np.nonzero(result.image.any(axis=2)))}
        assert filled == {(0, 0), (0, 2), (0, 4), (0, 6), (2, 0)}

    def test_vertical_truncation_counted(self, tiny_table):
        # logical 2x2 with side-1 blocks holds exactly one word (gap + wrap)
        spec = EncodingSpec(canvas_width=2, canvas_height=2, superpixel_scale=1)
        result = encode_text(["alpha"] * 5, tiny_table, spec)
        assert result.dropped_words == 4
        np.testing.assert_array_equal(result.image[0, 0], [0, 128, 255])

    def test_canvas_too_small(self):
        table = WordEmbeddingTable(vocab={"w": 0}, vectors=np.ones((1, 27)))
        spec = EncodingSpec(canvas_width=2, canvas_height=2, superpixel_scale=1)
        with pytest.raises(DataError, match="cannot fit"):
            encode_text(["w"], table, spec)

    def test_oov_skip_matches_filtered_encoding(self, tiny_table, unit_spec):
        with_oov = encode_text(["alpha", "unknown", "beta"], tiny_table, unit_spec)
        without = encode_text(["alpha", "beta"], tiny_table, unit_spec)
        assert with_oov.image.tobytes() == without.image.tobytes()
        assert with_oov.oov_skipped == 1

    def test_oov_hashed_fallback_deterministic(self, tiny_table):
        spec = EncodingSpec(
            canvas_width=8, canvas_height=8, superpixel_scale=1, oov_policy="hashed_fallback"
        )
        a = encode_text(["mystery"], tiny_table, spec)
        b = encode_text(["mystery"], tiny_table, spec)
        assert a.image.tobytes() == b.image.tobytes()
        assert a.image.any()  # pseudo-vector renders, never silently blank
        other = encode_text(["different"], tiny_table, spec)
        assert other.image.tobytes() != a.image.tobytes()

    def test_locality_of_token_change(self, tiny_table, unit_spec):
        base = encode_text(["alpha", "beta", "gamma"], tiny_table, unit_spec).image
        changed = encode_text(["alpha", "gamma", "gamma"], tiny_table, unit_spec).image
        diff = np.nonzero((base != changed).any(axis=2))
        # second word's block footprint: logical x = 2, y = 0, side 1
        assert set(zip(*diff)) <= {(0, 2)}


class TestCropEncoded:
    def test_full_crop_identity(self, tiny_table, unit_spec):
        img = encode_text(["alpha", "beta"], tiny_table, unit_spec).image
        crop = crop_encoded(img, 8, 8, 0, 0)
        assert crop.tobytes() == img.tobytes()

    def test_single_black_pixel(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        crop = crop_encoded(img, 1, 1, 0, 0)
        assert crop.shape == (1, 1, 3) and not crop.any()

    def test_known_pattern(self):
        # 4x4 test pattern with value = 16*y + 4*x + channel
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        for y in range(4):
            for x in range(4):
                for ch in range(3):
                    img[y, x, ch] = 16 * y + 4 * x + ch
        crop = crop_encoded(img, 2, 2, 1, 2)
        expected = np.zeros((2, 2, 3), dtype=np.uint8)
        for y in range(2):
            for x in range(2):
                for ch in range(3):
                    expected[y, x, ch] = 16 * (y + 2) + 4 * (x + 1) + ch
        np.testing.assert_array_equal(crop, expected)

    def test_out_of_bounds(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        with pytest.raises(DataError, match="exceeds"):
            crop_encoded(img, 3, 3, 2, 2)


class TestSpecValidation:
    def test_canvas_not_multiple_of_scale(self):
        with pytest.raises(DataError, match="multiple"):
            EncodingSpec(canvas_width=10, canvas_height=8, superpixel_scale=4)

    def test_bad_range(self):
        with pytest.raises(DataError, match="value_min"):
            EncodingSpec(value_min=1.0, value_max=1.0)

    def test_bad_policy(self):
        with pytest.raises(DataError, match="oov_policy"):
            EncodingSpec(oov_policy="explode")
