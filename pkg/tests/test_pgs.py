"""Sampler tests, anchored by independent brute-force oracles."""

import math

import numpy as np
import pytest

from vadkit import (DescriptorSet, FeatureMap, GridPoint, avg_pool, build_geometry,
                    chebyshev, granularity_at, sample_descriptors)
from vadkit.errors import InvalidArgumentError


def oracle_windows(lam, a0, a1, anchor, height, width):
    """Plain-python enumeration of the keep rule, independent of the library."""
    out = []
    for p in range(a0, a1 + 1):
        g = 2 ** p
        if g > max(height, width):
            break
        for i in range(math.ceil(height / g)):
            y0, y1 = i * g, min(i * g + g, height)
            for j in range(math.ceil(width / g)):
                x0, x1 = j * g, min(j * g + g, width)
                cy = (y0 + y1 - 1) / 2
                cx = (x0 + x1 - 1) / 2
                d = max(abs(cx - anchor[0]), abs(cy - anchor[1]))
                if 2 ** min(a0 + math.floor(d / lam), a1) == g:
                    out.append((p, i, j, (y0, x0, y1, x1)))
    return out


def oracle_means(data, windows):
    rows = []
    for _, _, _, (y0, x0, y1, x1) in windows:
        cells = [data[y][x] for y in range(y0, y1) for x in range(x0, x1)]
        rows.append([sum(col) / len(cells) for col in zip(*[list(c) for c in cells])])
    return rows


class TestChebyshev:
    @pytest.mark.parametrize("p,q,d", [
        ((0, 0), (0, 0), 0),
        ((3, 4), (0, 0), 4),
        ((17, 17), (12, 22), 5),
        ((1.5, 0), (0, 0), 1.5),
    ])
    def test_values(self, p, q, d):
        assert chebyshev(GridPoint(*p), GridPoint(*q)) == d


class TestGranularity:
    @pytest.mark.parametrize("d,g", [(0, 1), (5.9, 1), (6, 2), (11.9, 2), (12, 4), (30, 4)])
    def test_first_checkpoint_triplet(self, d, g):
        anchor = GridPoint(0, 0)
        assert granularity_at(6, 0, 2, anchor, GridPoint(d, 0)) == g

    @pytest.mark.parametrize("d,g", [(0, 2), (3, 4), (6, 8)])
    def test_fourth_checkpoint_triplet(self, d, g):
        assert granularity_at(3, 1, 3, GridPoint(0, 0), GridPoint(d, 0)) == g

    @pytest.mark.parametrize("d", [0, 2, 7, 30])
    def test_constant_when_a0_equals_a1(self, d):
        assert granularity_at(5, 2, 2, GridPoint(0, 0), GridPoint(d, 0)) == 4

    def test_bad_lambda(self):
        with pytest.raises(InvalidArgumentError):
            granularity_at(0, 0, 1, GridPoint(0, 0), GridPoint(0, 0))


class TestBuildGeometry:
    def test_uniform_finest_keeps_every_cell(self):
        geo = build_geometry(6, 0, 0, GridPoint(17, 17), 35, 35)
        assert geo.n_windows == 35 * 35
        assert all(w.g == 1 for w in geo.windows)

    def test_fine_block_is_11x11(self):
        geo = build_geometry(6, 0, 2, GridPoint(17, 17), 35, 35)
        fine = [w for w in geo.windows if w.level == 0]
        assert len(fine) == 121
        for w in fine:
            assert chebyshev(w.center, geo.anchor) <= 5

    def test_matches_oracle_8x8(self):
        geo = build_geometry(2, 0, 1, GridPoint(3, 3), 8, 8)
        expected = oracle_windows(2, 0, 1, (3, 3), 8, 8)
        got = [(w.level, w.index[0], w.index[1], w.extent) for w in geo.windows]
        assert got == expected

    def test_deterministic(self):
        a = build_geometry(3, 1, 3, GridPoint(10.0, 12.0), 20, 24)
        b = build_geometry(3, 1, 3, GridPoint(10.0, 12.0), 20, 24)
        assert a == b and a.digest() == b.digest()

    def test_canonical_order(self):
        geo = build_geometry(2, 0, 2, GridPoint(5, 5), 12, 12)
        keys = [(w.level, w.index) for w in geo.windows]
        assert keys == sorted(keys)

    def test_anchor_outside_grid(self):
        with pytest.raises(InvalidArgumentError):
            build_geometry(2, 0, 1, GridPoint(9, 2), 8, 8)

    def test_keep_rule_self_consistent(self, rng):
        # every kept window's own center maps back to its own level
        for _ in range(20):
            h, w = rng.integers(4, 17, 2)
            a1 = int(rng.integers(0, 4))
            a0 = int(rng.integers(0, a1 + 1))
            lam = float(rng.uniform(0.5, 6.0))
            anchor = GridPoint(float(rng.integers(0, w)), float(rng.integers(0, h)))
            geo = build_geometry(lam, a0, a1, anchor, int(h), int(w))
            for win in geo.windows:
                assert granularity_at(lam, a0, a1, anchor, win.center) == win.g

    def test_fine_ring_exactness(self):
        lam, a0, a1 = 3.0, 0, 2
        anchor = GridPoint(7, 6)
        geo = build_geometry(lam, a0, a1, anchor, 15, 15)
        fine_cells = {
            (int(w.center.y), int(w.center.x)) for w in geo.windows if w.level == 0
        }
        for y in range(15):
            for x in range(15):
                inside = chebyshev(GridPoint(x, y), anchor) < lam
                assert ((y, x) in fine_cells) == inside
        # no coarser kept window degenerates to that same single cell
        for w in geo.windows:
            if w.level > 0:
                y0, x0, y1, x1 = w.extent
                if (y1 - y0, x1 - x0) == (1, 1):
                    assert chebyshev(w.center, anchor) >= lam

    def test_flip_invariant_anchor_same_geometry(self):
        # centered anchor is fixed by flips, so the geometry is reproduced
        anchor = GridPoint(17, 17)
        geo = build_geometry(6, 0, 2, anchor, 35, 35)
        flipped = GridPoint(34 - anchor.x, 34 - anchor.y)
        assert build_geometry(6, 0, 2, flipped, 35, 35) == geo


class TestSampleDescriptors:
    def test_constant_map(self):
        geo = build_geometry(2, 0, 1, GridPoint(3, 3), 8, 8)
        m = FeatureMap(np.full((8, 8, 3), 1.25, dtype=np.float32))
        ds = sample_descriptors(m, geo)
        assert ds.descriptors.shape == (geo.n_windows, 3)
        assert np.all(ds.descriptors == np.float32(1.25))

    def test_identity_at_finest(self, rng):
        geo = build_geometry(9, 0, 0, GridPoint(2, 2), 5, 4)
        data = rng.standard_normal((5, 4, 2)).astype(np.float32)
        ds = sample_descriptors(FeatureMap(data), geo)
        assert np.array_equal(ds.descriptors, data.reshape(-1, 2))

    def test_matches_window_mean_oracle(self, rng):
        geo = build_geometry(2, 0, 1, GridPoint(3, 3), 8, 8)
        data = rng.standard_normal((8, 8, 3)).astype(np.float32)
        ds = sample_descriptors(FeatureMap(data), geo)
        expected = oracle_means(
            data.tolist(), [(w.level, *w.index, w.extent) for w in geo.windows]
        )
        assert np.allclose(ds.descriptors, np.array(expected), atol=1e-6)

    def test_uniform_degeneration_equals_avg_pool(self, rng):
        data = rng.standard_normal((13, 9, 4)).astype(np.float32)
        m = FeatureMap(data)
        for a in (0, 1, 2):
            geo = build_geometry(5, a, a, GridPoint(4, 6), 13, 9)
            ds = sample_descriptors(m, geo)
            pooled = avg_pool(m, 2 ** a).data.reshape(-1, 4)
            assert np.array_equal(ds.descriptors, pooled)

    def test_dim_mismatch(self, rng):
        geo = build_geometry(2, 0, 1, GridPoint(3, 3), 8, 8)
        with pytest.raises(InvalidArgumentError):
            sample_descriptors(FeatureMap(rng.standard_normal((7, 8, 3)).astype(np.float32)), geo)

    def test_descriptor_set_is_frozen(self, rng):
        ds = DescriptorSet(rng.standard_normal((3, 2)), "x")
        with pytest.raises(ValueError):
            ds.descriptors[0, 0] = 1.0
