"""Synthetic scene generation and parameter-space perturbation."""

import numpy as np
import pytest

from layout3d import PlacementFailure, SynthConfig, generate_scene, perturb, wall_geometry
from layout3d.geometry import Wall


def fixed_room(room_type="rectangular", objects=(0, 0), **kw):
    base = dict(
        seed=1,
        room_type=room_type,
        width_range=(4.0, 4.0),
        depth_range=(3.0, 3.0),
        height_range=(2.5, 2.5),
        object_count_range=objects,
        point_density=60.0,
    )
    base.update(kw)
    return SynthConfig(**base)


class TestGenerateScene:
    def test_empty_rectangular_room_has_four_perimeter_walls(self):
        scene = generate_scene(fixed_room())
        assert len(scene.walls) == 4
        assert len(scene.objects) == 0
        segments = set()
        for wall in scene.walls:
            a = tuple(np.round(wall.corners[0, :2], 9))
            b = tuple(np.round(wall.corners[1, :2], 9))
            segments.add(frozenset((a, b)))
            assert wall.corners[0, 2] == 0.0 and wall.corners[1, 2] == 0.0
            assert wall_geometry(wall).height == pytest.approx(2.5)
        expected = {
            frozenset(((0.0, 0.0), (4.0, 0.0))),
            frozenset(((4.0, 0.0), (4.0, 3.0))),
            frozenset(((0.0, 3.0), (4.0, 3.0))),
            frozenset(((0.0, 0.0), (0.0, 3.0))),
        }
        assert segments == expected

    def test_lshaped_room_has_six_walls(self):
        scene = generate_scene(fixed_room(room_type="lshaped"))
        assert len(scene.walls) == 6

    def test_same_seed_is_bitwise_identical(self):
        cfg = fixed_room(objects=(2, 4), noise_sigma=0.01)
        a = generate_scene(cfg)
        b = generate_scene(cfg)
        np.testing.assert_array_equal(a.cloud.data, b.cloud.data)
        for wa, wb in zip(a.walls, b.walls):
            np.testing.assert_array_equal(wa.corners, wb.corners)
        for oa, ob in zip(a.objects, b.objects):
            np.testing.assert_array_equal(oa.box.center, ob.box.center)
            assert oa.category == ob.category

    def test_different_seeds_differ(self):
        a = generate_scene(fixed_room(objects=(2, 4)))
        b = generate_scene(fixed_room(objects=(2, 4)).with_seed(2))
        assert not np.array_equal(a.cloud.data, b.cloud.data)

    def test_noiseless_points_lie_on_surfaces(self):
        scene = generate_scene(fixed_room(objects=(2, 3), noise_sigma=0.0))
        xyz = scene.cloud.xyz
        dist = np.full(len(xyz), np.inf)

        def update(d):
            np.minimum(dist, d, out=dist)

        update(np.abs(xyz[:, 2]))  # floor
        for wall in scene.walls:
            geo = wall_geometry(wall)
            in_plane = np.abs((xyz - wall.corners[0]) @ geo.normal)
            update(in_plane)
        for obj in scene.objects:
            lo, hi = obj.box.lo, obj.box.hi
            inside = np.maximum(lo - xyz, xyz - hi).max(axis=1)
            update(np.abs(inside))
        assert dist.max() < 1e-9

    def test_points_respect_room_bounding_box(self):
        scene = generate_scene(fixed_room(objects=(2, 3)))
        xyz = scene.cloud.xyz
        assert (xyz[:, 0] >= -1e-9).all() and (xyz[:, 0] <= 4.0 + 1e-9).all()
        assert (xyz[:, 1] >= -1e-9).all() and (xyz[:, 1] <= 3.0 + 1e-9).all()
        assert (xyz[:, 2] >= -1e-9).all() and (xyz[:, 2] <= 2.5 + 1e-9).all()

    def test_objects_stay_clear_of_walls_and_each_other(self):
        scene = generate_scene(fixed_room(objects=(4, 6), seed=9))
        for obj in scene.objects:
            assert (obj.box.lo[:2] >= 0).all()
            assert (obj.box.hi[:2] <= [4.0, 3.0]).all()
        for i, a in enumerate(scene.objects):
            for b in scene.objects[i + 1 :]:
                gap = np.abs(a.box.center - b.box.center) - (a.box.size + b.box.size) / 2
                assert (gap >= 0).any()

    def test_impossible_placement_fails(self):
        cfg = fixed_room(
            objects=(1, 1),
            width_range=(1.0, 1.0),
            depth_range=(1.0, 1.0),
            object_size_range=(2.0, 2.0),
        )
        with pytest.raises(PlacementFailure):
            generate_scene(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(room_type="hexagonal")
        with pytest.raises(ValueError):
            SynthConfig(width_range=(3.0, 2.0))
        with pytest.raises(ValueError):
            SynthConfig(point_density=0.0)
        with pytest.raises(ValueError):
            SynthConfig(room_type="lshaped", width_range=(1.5, 2.0))


class TestPerturb:
    def test_zero_sigma_is_identity(self):
        scene = generate_scene(fixed_room(objects=(2, 3)))
        assert perturb(scene, 0.0, 0.0, seed=5) is scene

    def test_walls_remain_valid_for_any_sigma(self):
        scene = generate_scene(fixed_room(objects=(2, 3)))
        for sigma in (0.05, 0.3, 1.0, 3.0):
            noisy = perturb(scene, sigma, sigma, seed=11)
            assert len(noisy.walls) == len(scene.walls)
            for wall in noisy.walls:
                assert isinstance(wall, Wall)  # constructor re-validates invariants

    def test_same_seed_same_jitter(self):
        scene = generate_scene(fixed_room(objects=(2, 3)))
        a = perturb(scene, 0.2, 0.2, seed=3)
        b = perturb(scene, 0.2, 0.2, seed=3)
        for wa, wb in zip(a.walls, b.walls):
            np.testing.assert_array_equal(wa.corners, wb.corners)

    def test_object_sizes_and_categories_preserved(self):
        scene = generate_scene(fixed_room(objects=(2, 3)))
        noisy = perturb(scene, 0.5, 0.0, seed=2)
        for o, n in zip(scene.objects, noisy.objects):
            np.testing.assert_array_equal(o.box.size, n.box.size)
            assert o.category == n.category
            assert not np.array_equal(o.box.center, n.box.center)

    def test_lower_corners_stay_on_floor(self):
        scene = generate_scene(fixed_room(objects=(0, 0)))
        noisy = perturb(scene, 0.0, 0.4, seed=8)
        for wall in noisy.walls:
            assert wall.corners[0, 2] == 0.0 and wall.corners[1, 2] == 0.0
