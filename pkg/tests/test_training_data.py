import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from aerodepth.errors import ConfigError, DatasetLoadError
from aerodepth.geometry.camera import relative_transform
from aerodepth.geometry.warping import warp_map
from aerodepth.models import AugmentConfig, CameraIntrinsics, DepthMap
from aerodepth.services.dataset_service import read_trajectory
from aerodepth.services.training_service import SequenceDataset, collate_sequences, sequence_from_frames
from aerodepth.utils.augment import augment, flip_sequence, jitter_colors, rotate90_sequence, rotate_sequence
from aerodepth.utils.sampling import DATASET_A, DATASET_B, MixSampler, interleave_pattern

from conftest import TOY_FRAMES, build_toy_dataset


@pytest.fixture(scope='module')
def rendered_sequence(tmp_path_factory):
    root = tmp_path_factory.mktemp('augment') / 'data'
    build_toy_dataset(root, seed=6, frames=3, size=48)
    return sequence_from_frames(read_trajectory(str(root), 0))


def _warped_previous_seg(sample):
    return warp_map(sample.seg[0], DepthMap(sample.depth[1], sample.max_depth), sample.motions[0],
                    sample.intrinsics, 'nearest')


# ============================================================================
# AUGMENTATION
# ============================================================================

def test_disabled_augmentation_is_identity(rendered_sequence):
    assert augment(rendered_sequence, AugmentConfig.disabled(), np.random.default_rng(0)) is rendered_sequence


def test_double_flip_restores_the_sequence(rendered_sequence):
    twice = flip_sequence(flip_sequence(rendered_sequence))
    for original, restored in zip(rendered_sequence.rgb, twice.rgb):
        assert np.array_equal(original, restored)
    assert np.array_equal(rendered_sequence.depth[1], twice.depth[1])
    assert twice.intrinsics == rendered_sequence.intrinsics
    assert twice.motions[0].allclose(rendered_sequence.motions[0], atol=1e-12)


def test_flip_keeps_reprojection_consistent(rendered_sequence):
    warped, mask = _warped_previous_seg(rendered_sequence)
    flipped = flip_sequence(rendered_sequence)
    warped_flipped, mask_flipped = _warped_previous_seg(flipped)
    both = mask[:, ::-1] & mask_flipped
    assert both.sum() >= 0.9 * mask.sum()
    agreement = (warped[:, ::-1] == warped_flipped)[both].mean()
    assert agreement >= 0.9


def test_quarter_turn_keeps_reprojection_consistent(rendered_sequence):
    warped, mask = _warped_previous_seg(rendered_sequence)
    turned = rotate90_sequence(rendered_sequence, 1)
    warped_turned, mask_turned = _warped_previous_seg(turned)
    both = np.rot90(mask) & mask_turned
    assert both.sum() >= 0.9 * mask.sum()
    assert (np.rot90(warped) == warped_turned)[both].mean() >= 0.9


def test_quarter_turn_intrinsics(rendered_sequence):
    intr = CameraIntrinsics(10.0, 10.0, 3.0, 5.0, 8, 12)
    sample = rendered_sequence
    rgb = [np.zeros((12, 8, 3), dtype=np.uint8)] * len(sample)
    maps = [np.ones((12, 8))] * len(sample)
    seg = [np.zeros((12, 8), dtype=np.uint8)] * len(sample)
    small = type(sample)(rgb=rgb, depth=maps, seg=seg, motions=sample.motions, intrinsics=intr)
    turned = rotate90_sequence(small, 1)
    assert turned.intrinsics == CameraIntrinsics(10.0, 10.0, 5.0, 4.0, 12, 8)
    assert turned.rgb[0].shape == (8, 12, 3)
    assert rotate90_sequence(small, 4) is small


def test_zero_rotation_keeps_content(rendered_sequence):
    rotated = rotate_sequence(rendered_sequence, 0.0)
    assert np.array_equal(rotated.seg[-1], rendered_sequence.seg[-1])
    assert np.array_equal(rotated.depth[-1], rendered_sequence.depth[-1])
    assert np.abs(rotated.rgb[-1].astype(int) - rendered_sequence.rgb[-1].astype(int)).max() <= 1


def test_neutral_color_jitter():
    rgb = np.random.default_rng(0).integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    assert np.abs(jitter_colors(rgb, 1.0, 1.0, 1.0, 0.0).astype(int) - rgb.astype(int)).max() <= 1


def test_augmentation_is_seeded(rendered_sequence):
    config = AugmentConfig()
    first = augment(rendered_sequence, config, np.random.default_rng(3))
    second = augment(rendered_sequence, config, np.random.default_rng(3))
    for a, b in zip(first.rgb, second.rgb):
        assert np.array_equal(a, b)
    assert first.intrinsics == second.intrinsics


# ============================================================================
# SAMPLING
# ============================================================================

def test_single_dataset_ratio():
    sampler = MixSampler(7, 0, '1:0', seed=1)
    picks = list(sampler)
    assert len(picks) == 7
    assert {source for source, _ in picks} == {DATASET_A}
    assert sorted(index for _, index in picks) == list(range(7))


def test_even_ratio_over_a_hundred_draws():
    picks = list(MixSampler(40, 60, '1:1', seed=2, epoch_size=100))
    count_a = sum(source == DATASET_A for source, _ in picks)
    assert abs(count_a - 50) <= 1


def test_every_prefix_tracks_the_ratio():
    pattern = interleave_pattern(2, 1, 300)
    count_a = np.cumsum([source == DATASET_A for source in pattern])
    expected = np.arange(1, 301) * 2 / 3
    assert np.all(np.abs(count_a - expected) <= 1)


def test_each_dataset_is_covered_evenly():
    picks = list(MixSampler(10, 5, '1:1', seed=3, epoch_size=400))
    counts = np.bincount([index for source, index in picks if source == DATASET_B], minlength=5)
    assert counts.sum() == 200
    assert chisquare(counts).pvalue > 0.05


def test_sampling_is_deterministic_per_epoch():
    sampler = MixSampler(20, 20, '1:1', seed=4)
    first = list(sampler)
    assert list(sampler) == first
    sampler.set_epoch(1)
    assert list(sampler) != first


def test_default_epoch_size():
    assert len(MixSampler(8, 30, '1:1')) == 16
    assert len(MixSampler(8, 30, '0:1')) == 30


def test_empty_dataset_with_a_share_fails():
    with pytest.raises(ConfigError):
        MixSampler(0, 10, '1:1')
    with pytest.raises(ConfigError):
        MixSampler(10, 10, '0:0')


# ============================================================================
# SEQUENCE WINDOWS
# ============================================================================

def test_windows_end_at_every_frame_after_the_first_full_sequence(toy_dataset):
    dataset = SequenceDataset.from_root(toy_dataset, 3)
    assert len(dataset) == TOY_FRAMES - 2
    assert [f.frame_index for f in dataset.frames(0)] == [0, 1, 2]
    sample = dataset.sample(len(dataset) - 1)
    assert sample.frame_index == TOY_FRAMES - 1
    frames = dataset.frames(len(dataset) - 1)
    assert sample.motions[1].allclose(relative_transform(frames[1].pose, frames[2].pose), atol=1e-12)


def test_sequences_longer_than_the_dataset_fail(toy_dataset):
    with pytest.raises(DatasetLoadError):
        SequenceDataset.from_root(toy_dataset, TOY_FRAMES + 1)


def test_collate_stacks_last_frame_targets(toy_dataset):
    dataset = SequenceDataset.from_root(toy_dataset, 2)
    batch = collate_sequences([dataset.sample(0), dataset.sample(1)])
    assert batch.frames.shape == (2, 2, 3, 32, 32)
    assert batch.rotations.shape == (2, 1, 3, 3)
    assert batch.translations.shape == (2, 1, 3)
    assert batch.depth.shape == (2, 1, 32, 32)
    assert batch.seg.dtype == torch.int64
    assert torch.equal(batch.seg[1], torch.as_tensor(dataset.sample(1).seg[-1].astype(np.int64)))
