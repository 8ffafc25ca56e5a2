"""Synthetic scenes: determinism, ground-truth consistency, and the
pixel-count oracle for dominant-color labels."""

import numpy as np
import pytest

from semtok.data import (
    PALETTE,
    QUERY_CLASSIFY_REGION,
    QUERY_COUNT_REGIONS,
    QUERY_DOMINANT_COLOR,
    SceneSpec,
    dominant_class_from_pixels,
    generate_dataset,
    generate_scene,
    load_dataset,
)


def spec(**kwargs):
    return SceneSpec(**kwargs)


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(height=60, grid=8)
    with pytest.raises(ValueError):
        SceneSpec(min_regions=3, max_regions=2)
    with pytest.raises(ValueError):
        SceneSpec(num_classes=3, max_regions=4, distinct_classes=True)


def test_single_region_map_is_constant_zero():
    s = spec(min_regions=1, max_regions=1)
    scene = generate_scene(s, np.random.default_rng(0))
    np.testing.assert_array_equal(scene.region_map, np.zeros((64, 64), dtype=np.int32))
    assert scene.num_regions == 1


def test_region_map_covers_image_with_contiguous_rects():
    s = spec(small_region_rate=0.0)
    for seed in range(20):
        scene = generate_scene(s, np.random.default_rng(seed))
        k = scene.num_regions
        assert sorted(np.unique(scene.region_map)) == list(range(k))
        # without insets every region is a solid axis-aligned rectangle
        for rid in range(k):
            rows, cols = np.where(scene.region_map == rid)
            h = rows.max() - rows.min() + 1
            w = cols.max() - cols.min() + 1
            assert h * w == rows.size
            assert rows.min() % s.grid == 0 and cols.min() % s.grid == 0


def test_inset_regions_are_small_and_carved_from_host():
    s = spec(small_region_rate=1.0, min_regions=2, max_regions=4)
    saw_inset = 0
    for seed in range(30):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert sorted(np.unique(scene.region_map)) == list(range(scene.num_regions))
        sizes = np.bincount(scene.region_map.reshape(-1), minlength=scene.num_regions)
        max_inset_px = (s.small_region_max * s.grid) ** 2
        if sizes.min() <= max_inset_px:
            saw_inset += 1
        # region map still covers every pixel exactly once by construction
        assert sizes.sum() == s.height * s.width
    assert saw_inset >= 20  # carve rate 1.0 should nearly always produce one


def test_regions_ordered_by_class_id():
    # region r is the r-th lowest class id present in the scene
    s = spec()
    for seed in range(10):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert scene.labels == sorted(scene.labels)


def test_pixels_match_region_labels():
    s = spec(pixel_noise=0.01)
    scene = generate_scene(s, np.random.default_rng(3))
    for rid, label in enumerate(scene.labels):
        mask = scene.region_map == rid
        mean_color = scene.image[mask].mean(axis=0)
        assert np.abs(mean_color - PALETTE[label]).max() < 0.05


def test_dominant_color_label_matches_pixel_count_oracle():
    s = spec(query_mix=(0.0, 0.0, 1.0))
    for seed in range(25):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert scene.query_kind == QUERY_DOMINANT_COLOR
        assert scene.target == dominant_class_from_pixels(scene.image, s.num_classes)


def test_count_query_targets_region_count():
    s = spec(query_mix=(0.0, 1.0, 0.0))
    for seed in range(10):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert scene.query_kind == QUERY_COUNT_REGIONS
        assert scene.target == scene.num_regions


def test_classify_query_targets_region_label():
    s = spec(query_mix=(1.0, 0.0, 0.0))
    for seed in range(10):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert scene.query_kind == QUERY_CLASSIFY_REGION
        assert scene.target == scene.labels[scene.query_arg]
        assert scene.query_id == scene.query_arg


def test_query_ids_distinct_across_kinds():
    s = spec()
    ids = {s.query_id(QUERY_CLASSIFY_REGION, r) for r in range(s.max_regions)}
    ids.add(s.query_id(QUERY_COUNT_REGIONS))
    ids.add(s.query_id(QUERY_DOMINANT_COLOR))
    assert len(ids) == s.query_vocab == s.max_regions + 2


def test_distinct_classes_when_requested():
    s = spec(distinct_classes=True)
    for seed in range(10):
        scene = generate_scene(s, np.random.default_rng(seed))
        assert len(set(scene.labels)) == len(scene.labels)


def test_dataset_regeneration_is_byte_identical(tmp_path):
    s = spec()
    generate_dataset(s, 12, seed=42, out_dir=tmp_path / "a")
    generate_dataset(s, 12, seed=42, out_dir=tmp_path / "b")
    for name in ("images.tgt", "region_maps.tgt", "scenes.csv", "spec.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dataset_roundtrip(tmp_path):
    s = spec(max_regions=3)
    ds = generate_dataset(s, 8, seed=1, out_dir=tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert len(back) == 8
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.region_maps, ds.region_maps)
    np.testing.assert_array_equal(back.targets, ds.targets)
    np.testing.assert_array_equal(back.query_ids, ds.query_ids)
    assert back.spec == s


def test_class_presence_bags(tmp_path):
    ds = generate_dataset(spec(), 6, seed=2, out_dir=tmp_path / "d")
    bags = ds.class_presence()
    for i in range(6):
        want = np.zeros(8)
        want[ds.labels[i]] = 1.0
        np.testing.assert_array_equal(bags[i], want)


def test_token_regions_unanimous_for_grid_aligned_scenes(tmp_path):
    ds = generate_dataset(spec(), 5, seed=3, out_dir=tmp_path / "d")
    tok = ds.token_regions(patch_size=8)
    assert tok.shape == (5, 64)
    # each patch lies in exactly one region, so the majority is unanimous
    for i in range(5):
        grid = ds.region_maps[i].reshape(8, 8, 8, 8)
        for pr in range(8):
            for pc in range(8):
                block = grid[pr, :, pc, :]
                assert (block == tok[i, pr * 8 + pc]).all()
