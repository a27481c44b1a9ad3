"""Architecture tests: packing, shape contracts, skip-path identities,
frame equivariance, recurrence probes and weight-store consistency."""

import numpy as np
import pytest

from vsrkit import models
from vsrkit.kernels import ConvParams, ShapeError, conv2d, depth_to_space, resize_bilinear

from helpers import random_nhwc

PER_FRAME_ARCHES = ("tinyvsrnet", "evsrnet", "imdn_s", "bicubic_baseline")


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def random_clip_tensor(rng, h=16, w=16, count=4):
    return rng.uniform(0, 1, (1, h, w, 3 * count)).astype(np.float32)


# ---------------------------------------------------------------------------
# Packing
# ---------------------------------------------------------------------------

class TestPacking:
    def test_unpack_interleaved_frames(self):
        # Two 2x2 frames packed as channels 0..2 / 3..5.
        a = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        b = a + 100
        packed = np.concatenate([a, b], axis=2)[None]
        frames = models.unpack_frames(packed)
        assert frames.shape == (2, 2, 2, 3)
        np.testing.assert_array_equal(frames[0], a)
        np.testing.assert_array_equal(frames[1], b)

    def test_pack_unpack_round_trip_bitwise(self, rng):
        packed = random_clip_tensor(rng, 5, 7, 6)
        np.testing.assert_array_equal(models.pack_frames(models.unpack_frames(packed)),
                                      packed)

    def test_single_frame_is_value_identity(self, rng):
        packed = random_clip_tensor(rng, 4, 4, 1)
        frames = models.unpack_frames(packed)
        np.testing.assert_array_equal(frames[0], packed[0])

    def test_unpack_validates(self, rng):
        with pytest.raises(ShapeError):
            models.unpack_frames(rng.uniform(0, 1, (1, 4, 4, 7)).astype(np.float32))
        with pytest.raises(ShapeError):
            models.unpack_frames(rng.uniform(0, 1, (2, 4, 4, 6)).astype(np.float32))


# ---------------------------------------------------------------------------
# Shape contract
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("arch", models.ARCH_NAMES)
@pytest.mark.parametrize("h,w,count", [(16, 16, 1), (16, 16, 10),
                                       (16, 320, 1), (180, 16, 1)])
def test_shape_contract(rng, arch, h, w, count):
    # Full-contract resolution at count=10 runs in the acceptance suite.
    model = models.load_model(arch, seed=7)
    out = model.forward(random_clip_tensor(rng, h, w, count))
    assert out.shape == (1, 4 * h, 4 * w, 3 * count)


@pytest.mark.parametrize("arch", models.ARCH_NAMES)
def test_forwards_are_nan_free(rng, arch):
    model = models.load_model(arch, seed=13)
    out = model.forward(random_clip_tensor(rng, 16, 16, 3))
    assert np.isfinite(out).all()


# ---------------------------------------------------------------------------
# Skip-path identities
# ---------------------------------------------------------------------------

def zero_weights(arch):
    spec = models.get_spec(arch)
    return {name: np.zeros_like(v) for name, v in models.init_weights(spec, 0).items()}


def test_tinyvsrnet_zero_weights_is_bilinear(rng):
    clip = random_clip_tensor(rng, 12, 18, 4)
    model = models.Model(models.get_spec("tinyvsrnet"), zero_weights("tinyvsrnet"))
    out = model.forward(clip)
    frames = models.unpack_frames(clip)
    expected = models.pack_frames(resize_bilinear(frames, 48, 72))
    np.testing.assert_array_equal(out, expected)


def test_evsrnet_zero_weights_is_zero(rng):
    clip = random_clip_tensor(rng, 12, 12, 2)
    model = models.Model(models.get_spec("evsrnet"), zero_weights("evsrnet"))
    assert not model.forward(clip).any()


def test_imdn_zero_blocks_isolates_global_skip(rng):
    # Zero every block conv; the tail then sees head features twice (block
    # chain passes through by local skips, plus the global feature skip).
    spec = models.get_spec("imdn_s")
    weights = models.init_weights(spec, seed=21)
    for name in list(weights):
        if name.startswith("block"):
            weights[name] = np.zeros_like(weights[name])
    clip = random_clip_tensor(rng, 14, 14, 2)
    out = models.Model(spec, weights).forward(clip)

    frames = models.unpack_frames(clip)
    head = conv2d(frames, ConvParams(weights["head.kernel"], weights["head.bias"]))
    tail = conv2d(head + head, ConvParams(weights["tail.kernel"], weights["tail.bias"]))
    expected = models.pack_frames(depth_to_space(tail, 4))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-6)


def test_bicubic_baseline_constant_clip(rng):
    clip = np.full((1, 16, 16, 6), 0.4, np.float32)
    out = models.load_model("bicubic_baseline").forward(clip)
    assert (out == np.float32(0.4)).all()


# ---------------------------------------------------------------------------
# Frame-permutation equivariance
# ---------------------------------------------------------------------------

def permute_clip(packed, perm):
    frames = models.unpack_frames(packed)
    return models.pack_frames(np.ascontiguousarray(frames[perm]))


@pytest.mark.parametrize("arch", PER_FRAME_ARCHES)
def test_per_frame_models_are_permutation_equivariant(rng, arch):
    model = models.load_model(arch, seed=3)
    clip = random_clip_tensor(rng, 16, 16, 5)
    perm = np.array([3, 0, 4, 1, 2])
    out_direct = permute_clip(model.forward(clip), perm)
    out_permuted = model.forward(permute_clip(clip, perm))
    np.testing.assert_array_equal(out_direct, out_permuted)


def test_birnn_is_not_permutation_equivariant(rng):
    model = models.load_model("birnn", seed=3)
    clip = random_clip_tensor(rng, 16, 16, 5)
    perm = np.array([4, 3, 2, 1, 0])
    out_direct = permute_clip(model.forward(clip), perm)
    out_permuted = model.forward(permute_clip(clip, perm))
    assert np.abs(out_direct - out_permuted).max() > 1e-4


# ---------------------------------------------------------------------------
# Recurrence probes
# ---------------------------------------------------------------------------

def test_birnn_temporal_context_propagates(rng):
    model = models.load_model("birnn", seed=17)
    clip = random_clip_tensor(rng, 16, 16, 10)
    perturbed = clip.copy()
    perturbed[..., 0:3] += 0.25  # frame 0 lives in channels 0..2
    base = model.forward(clip)
    moved = model.forward(perturbed)
    last_frame = slice(27, 30)
    assert np.abs(base[..., last_frame] - moved[..., last_frame]).max() > 1e-6


def _swap_halves_in(kernel):
    out = kernel.copy()
    out[:, :, :16], out[:, :, 16:] = kernel[:, :, 16:], kernel[:, :, :16]
    return out


def symmetric_birnn_weights(seed):
    """Weights whose fusion stage treats the two direction halves alike.

    The gating and distillation stages carry the forward/backward halves
    through identity paths (the gate multiplies its own input; the block
    has a local skip), so graph-level time-reversal symmetry additionally
    needs fusion weights that are invariant under swapping the halves:
    the gate conv must commute with the swap, and the convs consuming
    direction-tagged channels must have half-duplicated input weights.
    """
    rng = np.random.default_rng(seed)
    weights = models.init_weights(models.get_spec("birnn"), seed)
    for name in weights:
        if name.endswith(".bias"):
            weights[name] = rng.uniform(-0.05, 0.05, weights[name].shape).astype(np.float32)

    gate = weights["sel.gate.kernel"]
    a = gate[:, :, :16, :16].copy()
    b = gate[:, :, :16, 16:].copy()
    gate[:, :, 16:, 16:] = a
    gate[:, :, 16:, :16] = b
    gate_bias = weights["sel.gate.bias"]
    gate_bias[16:] = gate_bias[:16]

    for name in ("imdb.conv1.kernel", "up1.kernel"):
        weights[name][:, :, 16:, :] = weights[name][:, :, :16, :]
    return weights


def swap_direction_groups(weights):
    swapped = dict(weights)
    for a, b in (("feb_f", "feb_b"), ("merge_f", "merge_b")):
        for conv in ("conv1", "conv2"):
            for part in ("kernel", "bias"):
                swapped[f"{a}.{conv}.{part}"] = weights[f"{b}.{conv}.{part}"]
                swapped[f"{b}.{conv}.{part}"] = weights[f"{a}.{conv}.{part}"]
    return swapped


def reverse_clip(packed):
    frames = models.unpack_frames(packed)
    return models.pack_frames(np.ascontiguousarray(frames[::-1]))


def test_birnn_time_reversal_symmetry(rng):
    spec = models.get_spec("birnn")
    weights = symmetric_birnn_weights(seed=23)
    clip = random_clip_tensor(rng, 16, 16, 6)

    forward_run = models.Model(spec, weights).forward(clip)
    mirrored = models.Model(spec, swap_direction_groups(weights)).forward(reverse_clip(clip))
    assert np.abs(reverse_clip(mirrored) - forward_run).max() <= 1e-5


# ---------------------------------------------------------------------------
# IMDB channel trace
# ---------------------------------------------------------------------------

def test_imdn_channel_trace(rng, monkeypatch):
    trace = []
    real = models.conv2d

    def spy(x, params, mode="optimized", threads=1):
        trace.append((x.shape[3], params.cout))
        return real(x, params, mode, threads)

    monkeypatch.setattr(models, "conv2d", spy)
    model = models.load_model("imdn_s", seed=2)
    model.forward(random_clip_tensor(rng, 16, 16, 1))
    block = trace[1:5]  # head conv first, then block1
    assert block == [(12, 12), (9, 9), (6, 3), (9, 12)]


# ---------------------------------------------------------------------------
# Weight stores
# ---------------------------------------------------------------------------

class TestInitWeights:
    def test_deterministic_per_seed(self):
        spec = models.get_spec("evsrnet")
        w1 = models.init_weights(spec, 5)
        w2 = models.init_weights(spec, 5)
        w3 = models.init_weights(spec, 6)
        assert list(w1) == list(w2)
        for name in w1:
            np.testing.assert_array_equal(w1[name], w2[name])
        assert any(np.abs(w1[n] - w3[n]).max() > 0 for n in w1 if n.endswith(".kernel"))

    @pytest.mark.parametrize("arch", ["tinyvsrnet", "evsrnet", "imdn_s", "birnn"])
    def test_name_set_matches_spec_exactly(self, arch):
        spec = models.get_spec(arch)
        weights = models.init_weights(spec, 1)
        assert sorted(weights) == sorted(spec.param_names())

    def test_biases_zero_kernels_scaled(self):
        spec = models.get_spec("tinyvsrnet")
        weights = models.init_weights(spec, 1)
        assert not weights["head.bias"].any()
        limit = np.sqrt(6.0 / (3 * 3 * 3))
        head = weights["head.kernel"]
        assert np.abs(head).max() <= limit
        assert np.abs(head).max() > 0.5 * limit

    def test_evsrnet_parameter_count(self):
        # 5 blocks x 2 convs x (3*3*8*8 + 8) plus head and tail convs.
        expected = 5 * 2 * (576 + 8) + (3 * 3 * 3 * 8 + 8) + (3 * 3 * 8 * 48 + 48)
        weights = models.init_weights(models.get_spec("evsrnet"), 0)
        assert sum(v.size for v in weights.values()) == expected

    def test_store_size_ordering(self):
        sizes = {arch: sum(v.nbytes for v in
                           models.init_weights(models.get_spec(arch), 0).values())
                 for arch in ("tinyvsrnet", "evsrnet", "imdn_s", "birnn")}
        # The recurrent model is by far the largest, and the five-block
        # eight-channel net undercuts the distillation net. (The published
        # size table also puts the three-block sixteen-channel net below
        # both, but its stated structure pins more float32 parameters than
        # the eight-channel net, so only the satisfiable pairs are checked.)
        assert sizes["evsrnet"] < sizes["imdn_s"] < sizes["birnn"]
        assert sizes["tinyvsrnet"] < sizes["birnn"]


class TestWeightValidation:
    def test_missing_tensor_rejected(self):
        spec = models.get_spec("evsrnet")
        weights = models.init_weights(spec, 1)
        del weights["block3.conv1.bias"]
        with pytest.raises(models.WeightError, match="block3.conv1"):
            models.Model(spec, weights)

    def test_extra_tensor_rejected(self):
        spec = models.get_spec("evsrnet")
        weights = models.init_weights(spec, 1)
        weights["mystery.kernel"] = np.zeros((3, 3, 8, 8), np.float32)
        with pytest.raises(models.WeightError, match="mystery"):
            models.Model(spec, weights)

    def test_unknown_arch_rejected(self):
        with pytest.raises(ValueError, match="unknown architecture"):
            models.get_spec("srcnn")
