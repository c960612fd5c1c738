"""Tensor construction, seeded randomness, and .rtf1 round trips."""

import io

import numpy as np
import pytest

from sepsenet import tensor
from sepsenet.errors import (
    BadDistributionParams,
    BadMagic,
    LengthMismatch,
    RankOutOfRange,
    TruncatedPayload,
)


class TestNewTensor:
    def test_row_major_value_list(self):
        t = tensor.new_tensor((1, 2, 2, 1), [1, 2, 3, 4])
        assert t[0, 1, 0, 0] == 3

    def test_scalar_fill(self):
        t = tensor.new_tensor((3,), 0)
        assert t.tolist() == [0, 0, 0]
        assert t.dtype == np.float32

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            tensor.new_tensor((2, 2), [1, 2, 3])

    def test_flat_offset_formula(self, rng):
        n, h, w, c = 2, 3, 4, 5
        t = tensor.new_tensor((n, h, w, c), list(range(n * h * w * c)))
        for _ in range(50):
            ni, hi, wi, ci = (int(rng.integers(0, d)) for d in (n, h, w, c))
            assert t[ni, hi, wi, ci] == ((ni * h + hi) * w + wi) * c + ci

    def test_rank_limits(self):
        with pytest.raises(RankOutOfRange):
            tensor.new_tensor((2, 2, 2, 2, 2), 0)
        with pytest.raises(RankOutOfRange):
            tensor.new_tensor((), 0)


class TestRandom:
    def test_uniform_deterministic(self):
        a = tensor.random_uniform((4,), 0, 1, tensor.make_rng(42))
        b = tensor.random_uniform((4,), 0, 1, tensor.make_rng(42))
        assert np.array_equal(a, b)

    def test_uniform_support(self):
        t = tensor.random_uniform((1000,), -2, 3, tensor.make_rng(0))
        assert t.min() >= -2 and t.max() < 3

    def test_glorot_bound(self):
        # limit = sqrt(6/(3+3)) = 1
        t = tensor.glorot_uniform((3, 3), 3, 3, tensor.make_rng(7))
        assert np.all(np.abs(t) <= 1.0)

    def test_bad_params(self):
        with pytest.raises(BadDistributionParams):
            tensor.random_uniform((2,), 1, 0, tensor.make_rng(0))
        with pytest.raises(BadDistributionParams):
            tensor.glorot_uniform((2,), 0, 3, tensor.make_rng(0))

    def test_sub_rng_streams_differ_and_repeat(self):
        a1 = tensor.sub_rng(9, "init").random(4)
        a2 = tensor.sub_rng(9, "init").random(4)
        b = tensor.sub_rng(9, "shuffle").random(4)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_sub_rng_unknown_purpose(self):
        with pytest.raises(ValueError):
            tensor.sub_rng(0, "lottery")


class TestFileFormat:
    def test_round_trip_all_ranks(self, rng):
        for rank in range(1, 5):
            shape = tuple(int(rng.integers(1, 6)) for _ in range(rank))
            t = rng.standard_normal(shape).astype(np.float32)
            buf = io.BytesIO()
            tensor.write_tensor(t, buf)
            buf.seek(0)
            back = tensor.read_tensor(buf)
            assert back.shape == t.shape
            assert np.array_equal(back.view(np.uint32), t.view(np.uint32))  # bit-identical

    def test_round_trip_via_path(self, tmp_path, rng):
        t = rng.random((1, 150, 150, 3)).astype(np.float32)
        p = tmp_path / "t.rtf1"
        tensor.write_tensor(t, p)
        assert np.array_equal(tensor.read_tensor(p), t)

    def test_bad_magic(self, tmp_path, rng):
        p = tmp_path / "t.rtf1"
        tensor.write_tensor(rng.random(3).astype(np.float32), p)
        raw = bytearray(p.read_bytes())
        raw[0] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(BadMagic):
            tensor.read_tensor(p)

    def test_truncated_payload(self, tmp_path, rng):
        p = tmp_path / "t.rtf1"
        tensor.write_tensor(rng.random(8).astype(np.float32), p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(TruncatedPayload):
            tensor.read_tensor(p)

    def test_rank_out_of_range_in_file(self):
        blob = b"RTF1" + bytes([9]) + b"\x01\x00\x00\x00" * 9
        with pytest.raises(RankOutOfRange):
            tensor.read_tensor(io.BytesIO(blob))

    def test_float64_rejected(self):
        with pytest.raises(TypeError):
            tensor.write_tensor(np.zeros(3), io.BytesIO())
