import numpy as np
import pytest

from gaborface import (
    FeatureLocationSet,
    FilterParams,
    build_filter_bank,
    extract_features,
    filter_magnitudes,
    read_feature_store,
    select_locations,
    window_origins,
    write_feature_store,
)
from gaborface.errors import FormatError, InvalidParameterError, ShapeError


def small_bank(n=16, lambda0=4.0, n_scales=1, n_orients=1):
    return build_filter_bank(FilterParams(lambda0=lambda0, n_scales=n_scales,
                                          n_orients=n_orients, width=n, height=n))


def conv_oracle(img, g):
    """Direct circular convolution with the filter's impulse response."""
    n = img.shape[0]
    kern = np.fft.ifft2(g)
    qy = np.arange(n)[:, None]
    qx = np.arange(n)[None, :]
    out = np.zeros((n, n), dtype=complex)
    for py in range(n):
        for px in range(n):
            out[py, px] = (img * kern[(py - qy) % n, (px - qx) % n]).sum()
    return np.abs(out)


def select_oracle(mag, mask, ww, wh, step):
    """Window scan with first-in-raster tie-break and dedupe."""
    h, w = mag.shape
    picked, seen = [], set()
    for y0 in range(0, h, step):
        for x0 in range(0, w, step):
            best = None
            for y in range(y0, min(y0 + wh, h)):
                for x in range(x0, min(x0 + ww, w)):
                    if mask[y, x] and (best is None or mag[y, x] > best[0]):
                        best = (mag[y, x], x, y)
            if best is not None and best[1:] not in seen:
                seen.add(best[1:])
                picked.append(best[1:])
    return np.array(picked, dtype=np.int64).reshape(-1, 2)


class TestFilterMagnitudes:
    def test_zero_image(self):
        bank = small_bank()
        mask = np.ones((16, 16), dtype=bool)
        out = filter_magnitudes(np.zeros((16, 16)), bank, mask)
        assert out.shape == (1, 1, 16, 16)
        assert np.all(out == 0.0)

    def test_matches_direct_convolution(self):
        bank = small_bank(n_scales=2, n_orients=2)
        mask = np.ones((16, 16), dtype=bool)
        rng = np.random.default_rng(21)
        for _ in range(3):
            img = rng.uniform(0, 255, size=(16, 16))
            got = filter_magnitudes(img, bank, mask)
            for o in range(2):
                for s in range(2):
                    want = conv_oracle(img, bank.filters[o, s])
                    assert np.max(np.abs(got[o, s] - want)) < 1e-6

    def test_impulse_response(self):
        bank = small_bank()
        mask = np.ones((16, 16), dtype=bool)
        img = np.zeros((16, 16))
        img[5, 3] = 1.0
        got = filter_magnitudes(img, bank, mask)[0, 0]
        want = np.abs(np.roll(np.fft.ifft2(bank.filters[0, 0]),
                              shift=(5, 3), axis=(0, 1)))
        assert np.max(np.abs(got - want)) < 1e-10

    def test_masked_pixels_zero(self):
        bank = small_bank()
        rng = np.random.default_rng(2)
        mask = rng.random((16, 16)) < 0.5
        out = filter_magnitudes(rng.uniform(0, 255, (16, 16)), bank, mask)
        assert np.all(out[:, :, ~mask] == 0.0)
        assert np.any(out[:, :, mask] > 0.0)

    def test_parseval_scaling(self):
        # unnormalized forward / 1-over-N inverse pair: the magnitude
        # raster's energy equals the spectrum energy over N*M
        bank = small_bank()
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 255, (16, 16))
        mags = filter_magnitudes(img, bank, np.ones((16, 16), dtype=bool))
        spec = bank.filters[0, 0] * np.fft.fft2(img)
        want = (np.abs(spec) ** 2).sum() / img.size
        got = (mags[0, 0] ** 2).sum()
        assert got == pytest.approx(want, rel=1e-6)

    def test_shape_mismatch_rejected(self):
        bank = small_bank()
        with pytest.raises(ShapeError):
            filter_magnitudes(np.zeros((8, 8)), bank, np.ones((8, 8), dtype=bool))


class TestWindowOrigins:
    def test_full_mask_grid(self):
        org = window_origins(np.ones((128, 128), dtype=bool), 4, 4, 4)
        assert len(org) == 1024
        assert tuple(org[0]) == (0, 0)
        assert tuple(org[1]) == (4, 0)   # raster order: x fastest
        assert tuple(org[-1]) == (124, 124)

    def test_masked_windows_dropped(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[0, 0] = True
        mask[6, 5] = True
        org = window_origins(mask, 4, 4, 4)
        assert org.tolist() == [[0, 0], [4, 4]]

    def test_window_larger_than_raster(self):
        with pytest.raises(InvalidParameterError):
            window_origins(np.ones((8, 8), dtype=bool), 9, 4, 4)


class TestSelectLocations:
    def stack_of(self, mag):
        return mag[np.newaxis, np.newaxis, :, :]

    def test_matches_oracle_tiled(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            mag = rng.uniform(0, 1, size=(12, 12))
            mask = rng.random((12, 12)) < 0.6
            got = select_locations(self.stack_of(mag), mask, 4, 4, 4)
            assert np.array_equal(got.coords[0], select_oracle(mag, mask, 4, 4, 4))

    def test_matches_oracle_overlapping(self):
        rng = np.random.default_rng(32)
        for _ in range(5):
            mag = rng.uniform(0, 1, size=(12, 12))
            mask = rng.random((12, 12)) < 0.6
            got = select_locations(self.stack_of(mag), mask, 4, 4, 2)
            assert np.array_equal(got.coords[0], select_oracle(mag, mask, 4, 4, 2))

    def test_matches_oracle_partial_windows(self):
        rng = np.random.default_rng(33)
        for _ in range(5):
            mag = rng.uniform(0, 1, size=(10, 14))
            mask = rng.random((10, 14)) < 0.7
            got = select_locations(self.stack_of(mag), mask, 4, 3, 4)
            assert np.array_equal(got.coords[0], select_oracle(mag, mask, 4, 3, 4))

    def test_constant_raster_takes_window_origins(self):
        mag = np.ones((16, 16))
        mask = np.ones((16, 16), dtype=bool)
        got = select_locations(self.stack_of(mag), mask, 4, 4, 4)
        assert np.array_equal(got.coords[0], window_origins(mask, 4, 4, 4))

    def test_fully_masked_raster(self):
        got = select_locations(self.stack_of(np.ones((8, 8))),
                               np.zeros((8, 8), dtype=bool), 4, 4, 4)
        assert got.counts == [0]
        assert got.total == 0

    def test_per_orientation_masks(self):
        rng = np.random.default_rng(34)
        stack = rng.uniform(0, 1, size=(2, 1, 8, 8))
        masks = np.stack([np.ones((8, 8), dtype=bool),
                          np.zeros((8, 8), dtype=bool)])
        masks[1, 2, 2] = True
        got = select_locations(stack, masks, 4, 4, 4)
        assert got.counts[0] == 4
        assert got.coords[1].tolist() == [[2, 2]]

    def test_mask_shrink_never_grows_counts(self):
        rng = np.random.default_rng(35)
        mag = rng.uniform(0, 1, size=(16, 16))
        mask = rng.random((16, 16)) < 0.8
        sub = mask & (rng.random((16, 16)) < 0.7)
        full = select_locations(self.stack_of(mag), mask, 4, 4, 4)
        small = select_locations(self.stack_of(mag), sub, 4, 4, 4)
        assert small.counts[0] <= full.counts[0]

    def test_bad_mask_shape(self):
        with pytest.raises(ShapeError):
            select_locations(np.zeros((2, 1, 8, 8)),
                             np.ones((3, 8, 8), dtype=bool), 4, 4, 4)


class TestSelectOnCanonicalMask:
    def test_ellipse_window_and_feature_counts(self):
        from gaborface import elliptical_mask

        mask = elliptical_mask()
        rng = np.random.default_rng(36)
        stack = rng.uniform(0, 1, size=(6, 4, 128, 128))
        stack[:, :, ~mask] = 0.0
        locs = select_locations(stack, mask, 4, 4, 4)
        assert locs.counts == [821] * 6
        feats = extract_features(stack, locs)
        assert feats.shape == (19704,)


class TestExtractFeatures:
    def test_layout_orientation_location_scale(self):
        stack = np.zeros((2, 3, 8, 8))
        for o in range(2):
            for s in range(3):
                for y in range(8):
                    for x in range(8):
                        stack[o, s, y, x] = 1000 * o + 100 * s + 10 * y + x
        locs = FeatureLocationSet(
            coords=(np.array([[1, 2], [3, 0]]), np.array([[7, 7]])),
            window_w=4, window_h=4, step=4)
        got = extract_features(stack, locs)
        want = []
        for o, coord in enumerate(locs.coords):
            for x, y in coord:
                for s in range(3):
                    want.append(1000 * o + 100 * s + 10 * y + x)
        assert got.tolist() == want

    def test_gather_matches_loop(self):
        rng = np.random.default_rng(41)
        stack = rng.uniform(0, 1, size=(3, 4, 16, 16))
        coords = tuple(
            rng.integers(0, 16, size=(rng.integers(1, 9), 2))
            for _ in range(3))
        locs = FeatureLocationSet(coords=coords, window_w=4, window_h=4, step=4)
        got = extract_features(stack, locs)
        want = np.concatenate([
            np.stack([stack[o, :, y, x] for x, y in coords[o]]).ravel()
            for o in range(3)])
        assert np.array_equal(got, want)
        assert got.shape == (4 * locs.total,)

    def test_orientation_count_mismatch(self):
        locs = FeatureLocationSet(coords=(np.zeros((1, 2), dtype=int),),
                                  window_w=4, window_h=4, step=4)
        with pytest.raises(ShapeError):
            extract_features(np.zeros((2, 4, 8, 8)), locs)


class TestFeatureStore:
    def roundtrip(self, tmp_path, **kw):
        rng = np.random.default_rng(51)
        vectors = rng.normal(size=(3, 10))
        ids = ("s1_p001_e1", "s1_p001_e2", "s1_p002_e1")
        args = dict(kind="loggabor", provenance=bytes(range(32)),
                    bank_digest=bytes(32), mask_digest=bytes(reversed(range(32))),
                    window=(4, 4, 4),
                    origins=(np.array([[0, 0], [4, 4]]), np.array([[8, 0]])))
        args.update(kw)
        path = tmp_path / "store.bin"
        write_feature_store(path, ids, vectors, **args)
        return path, ids, vectors, args

    def test_roundtrip(self, tmp_path):
        path, ids, vectors, args = self.roundtrip(tmp_path)
        store = read_feature_store(path)
        assert store.kind == args["kind"]
        assert store.provenance == args["provenance"]
        assert store.bank_digest == args["bank_digest"]
        assert store.mask_digest == args["mask_digest"]
        assert store.window == (4, 4, 4)
        assert len(store.origins) == 2
        assert np.array_equal(store.origins[0], args["origins"][0])
        assert store.ids == ids
        assert np.array_equal(store.vectors, vectors)
        assert store.index_of("s1_p002_e1") == 2

    def test_write_deterministic(self, tmp_path):
        p1, *_ = self.roundtrip(tmp_path)
        data1 = p1.read_bytes()
        p1.unlink()
        p2, *_ = self.roundtrip(tmp_path)
        assert p2.read_bytes() == data1

    def test_greys_variant(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path, kind="greys", window=(0, 0, 0),
                                  origins=())
        store = read_feature_store(path)
        assert store.kind == "greys"
        assert store.origins == ()

    def test_truncated_rejected(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            read_feature_store(path)

    def test_bad_magic_rejected(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path)
        data = path.read_bytes()
        path.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            read_feature_store(path)
