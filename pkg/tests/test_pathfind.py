"""Distance/region kernels against independent oracles."""
import itertools

import numpy as np
import pytest

from levelgen.pathfind import (
    UNREACHABLE,
    approx_diameter,
    bfs_distance,
    count_regions,
    endpoint_field,
    flood_distance,
    path_length,
)

from oracles import (
    all_pairs_diameter,
    corridor_map,
    dict_bfs,
    dist_dict_to_grid,
    endpoint_distance,
    union_find_regions,
)


def all_3x3_maps():
    for bits in itertools.product([False, True], repeat=9):
        yield np.array(bits, dtype=bool).reshape(3, 3)


def test_flood_equals_bfs_exhaustive_3x3():
    maps = list(all_3x3_maps())
    stack = np.stack(maps)
    # single-source from every passable cell of every map
    for src_flat in range(9):
        seeds = np.zeros_like(stack)
        seeds.reshape(512, 9)[:, src_flat] = True
        ok = stack.reshape(512, 9)[:, src_flat]
        dist = flood_distance(stack[ok], seeds[ok])
        for i, m in enumerate(np.flatnonzero(ok)):
            ref = bfs_distance(maps[m], [divmod(src_flat, 3)])
            assert np.array_equal(dist[i], ref)


def test_count_regions_exhaustive_3x3():
    stack = np.stack(list(all_3x3_maps()))
    counts = count_regions(stack)
    for i in range(512):
        assert counts[i] == union_find_regions(stack[i]), f"map {i}"


def test_flood_and_regions_random_16x16():
    rng = np.random.default_rng(42)
    maps = rng.random((300, 16, 16)) < rng.uniform(0.2, 0.8, size=(300, 1, 1))
    counts = count_regions(maps)
    for i in range(300):
        assert counts[i] == union_find_regions(maps[i])
    # multi-source floods vs the dict BFS oracle
    for i in range(0, 300, 10):
        m = maps[i]
        srcs = [tuple(x) for x in np.argwhere(m)[:3]]
        if not srcs:
            continue
        got = flood_distance(m, _seed_mask(m.shape, srcs))
        ref = dist_dict_to_grid(m, dict_bfs(m, srcs))
        assert np.array_equal(got, ref)


def _seed_mask(shape, cells):
    s = np.zeros(shape, dtype=bool)
    for r, c in cells:
        s[r, c] = True
    return s


def test_flood_impassable_sources_seed_neighbors():
    m = np.array([[1, 1, 0], [0, 1, 0], [0, 1, 1]], dtype=bool)
    seeds = _seed_mask(m.shape, [(0, 2)])  # impassable cell
    d = flood_distance(m, seeds)
    assert d[0, 2] == 0
    assert d[0, 1] == 1 and d[0, 0] == 2
    assert d[1, 0] == UNREACHABLE
    with pytest.raises(ValueError):
        flood_distance(m, seeds, strict=True)


def test_bfs_distance_source_validation():
    m = np.zeros((3, 3), dtype=bool)
    with pytest.raises(ValueError):
        bfs_distance(m, [(0, 0)])
    with pytest.raises(ValueError):
        bfs_distance(m, [(5, 5)], strict=False)


def test_endpoint_field_reads_entities():
    # source S at (1,0), wall row isolates nothing; endpoint at (1,2) is
    # impassable but adjacent to a reached cell
    m = np.array([[1, 1, 1], [1, 1, 0], [1, 1, 1]], dtype=bool)
    d = flood_distance(m, _seed_mask(m.shape, [(1, 0)]))
    f = endpoint_field(d)
    assert f[1, 2] == 2  # step off (1,1)
    assert f[1, 1] == d[1, 1] == 1
    ref = endpoint_distance(m, [(1, 0)], (1, 2))
    assert f[1, 2] == ref


def test_path_length_examples():
    m = np.ones((3, 3), dtype=bool)
    assert path_length(m, (0, 0), (0, 1)) == 1
    assert path_length(m, (0, 0), (0, 0)) == 0
    assert path_length(m, (0, 0), (2, 2)) == 4
    blocked = np.array([[1, 0, 1], [0, 0, 1], [1, 1, 1]], dtype=bool)
    assert path_length(blocked, (0, 0), (2, 2)) == UNREACHABLE


def test_approx_diameter_lower_bounds_and_corridor_equality():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = rng.random((8, 8)) < 0.6
        if not m.any():
            continue
        est, (a, b) = approx_diameter(rng, m)
        exact = all_pairs_diameter(m)
        assert est <= exact
        # reported endpoints actually realize the reported length
        d = bfs_distance(m, [a])
        assert d[b] == est
    for _ in range(50):
        m = corridor_map(rng, 8, 8)
        est, _ = approx_diameter(rng, m)
        assert est == all_pairs_diameter(m)


def test_approx_diameter_trivial_cases():
    rng = np.random.default_rng(0)
    full = np.ones((3, 3), dtype=bool)
    est, (a, b) = approx_diameter(rng, full)
    assert est == 4
    assert {a, b} in ({(0, 0), (2, 2)}, {(0, 2), (2, 0)})
    single = np.zeros((3, 3), dtype=bool)
    single[1, 1] = True
    assert approx_diameter(rng, single)[0] == 0
    with pytest.raises(ValueError):
        approx_diameter(rng, np.zeros((3, 3), dtype=bool))


def test_count_regions_batch_matches_rows():
    rng = np.random.default_rng(1)
    maps = rng.random((40, 5, 7)) < 0.5
    batch = count_regions(maps)
    each = np.array([count_regions(m) for m in maps])
    assert np.array_equal(batch, each)
