import numpy as np
import pytest

from gaborface import Gallery, distance, identify, verify
from gaborface.errors import InvalidInputError, ShapeError
from gaborface.matcher import read_results_csv, write_results_csv


class TestDistance:
    def test_anchor_values(self):
        v = np.array([1.0, 2.0, 3.0])
        assert distance(v, v) == pytest.approx(-1.0, abs=1e-12)
        assert distance(v, -v) == pytest.approx(1.0, abs=1e-12)
        assert distance([1, 0], [0, 1]) == 0.0

    def test_range(self):
        rng = np.random.default_rng(71)
        for _ in range(100):
            d = distance(rng.normal(size=8), rng.normal(size=8))
            assert -1.0 - 1e-12 <= d <= 1.0 + 1e-12

    def test_scale_invariance(self):
        rng = np.random.default_rng(72)
        a, b = rng.normal(size=12), rng.normal(size=12)
        base = distance(a, b)
        assert distance(3.0 * a, b) == pytest.approx(base, abs=1e-12)
        assert distance(a, 0.01 * b) == pytest.approx(base, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(73)
        a, b = rng.normal(size=12), rng.normal(size=12)
        assert distance(a, b) == distance(b, a)

    def test_zero_norm_rejected(self):
        with pytest.raises(InvalidInputError):
            distance([0, 0, 0], [1, 2, 3])
        with pytest.raises(InvalidInputError):
            distance([1, 2, 3], [0, 0, 0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            distance([1, 2], [1, 2, 3])


class TestGallery:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            Gallery(entries=())
        with pytest.raises(InvalidInputError):
            Gallery(entries=(("a", np.zeros(3)),))
        with pytest.raises(ShapeError):
            Gallery(entries=(("a", np.ones(3)), ("b", np.ones(4))))

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(74)
        entries = tuple((f"s{i}", rng.normal(size=6)) for i in range(5))
        g = Gallery(entries=entries, model_hash=bytes(range(32)))
        path = tmp_path / "gallery.bin"
        g.save(path)
        again = Gallery.load(path)
        assert again.model_hash == g.model_hash
        assert again.subject_ids == g.subject_ids
        for (_, a), (_, b) in zip(again.entries, g.entries):
            assert np.array_equal(a, b)
        g.save(tmp_path / "g2.bin")
        assert (tmp_path / "gallery.bin").read_bytes() \
            == (tmp_path / "g2.bin").read_bytes()


class TestIdentify:
    def test_orthogonal_triple(self):
        g = Gallery(entries=(("a", [1, 0, 0]), ("b", [0, 1, 0]),
                             ("c", [0, 0, 1])))
        ranked = identify(g, [0.1, 0.9, 0.0])
        assert [sid for sid, _ in ranked] == ["b", "a", "c"]
        assert ranked[0][1] == pytest.approx(-0.9 / np.hypot(0.1, 0.9))

    def test_self_retrieval_rank_one(self):
        rng = np.random.default_rng(75)
        entries = tuple((f"s{i}", rng.normal(size=10)) for i in range(20))
        g = Gallery(entries=entries)
        for sid, t in entries:
            ranked = identify(g, t)
            assert ranked[0][0] == sid
            assert ranked[0][1] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_brute_force_sort(self):
        rng = np.random.default_rng(76)
        entries = tuple((f"s{i}", rng.normal(size=6)) for i in range(10))
        g = Gallery(entries=entries)
        probe = rng.normal(size=6)
        ranked = identify(g, probe)
        want = sorted(((distance(t, probe), i) for i, (_, t) in
                       enumerate(entries)), key=lambda p: p[0])
        assert [sid for sid, _ in ranked] == [entries[i][0] for _, i in want]
        for (_, got_d), (want_d, _) in zip(ranked, want):
            assert got_d == pytest.approx(want_d, abs=1e-12)

    def test_ties_keep_enrollment_order(self):
        # parallel templates tie exactly after norm cancellation
        g = Gallery(entries=(("later", [2.0, 0.0]), ("first", [1.0, 0.0]),
                             ("also", [4.0, 0.0])))
        ranked = identify(g, [1.0, 0.0])
        assert [sid for sid, _ in ranked] == ["later", "first", "also"]

    def test_zero_probe_rejected(self):
        g = Gallery(entries=(("a", [1.0, 0.0]),))
        with pytest.raises(InvalidInputError):
            identify(g, [0.0, 0.0])

    def test_probe_length_mismatch(self):
        g = Gallery(entries=(("a", [1.0, 0.0]),))
        with pytest.raises(ShapeError):
            identify(g, [1.0, 0.0, 0.0])


class TestVerify:
    def test_boundary_inclusive(self):
        t = np.array([1.0, 1.0])
        p = np.array([1.0, 0.0])
        d = distance(t, p)
        assert verify(t, p, d) == (True, d)
        assert verify(t, p, d - 1e-9)[0] is False
        assert verify(t, p, d + 1e-9)[0] is True

    def test_accept_counts_match_linear_scan(self):
        rng = np.random.default_rng(77)
        t = rng.normal(size=8)
        probes = rng.normal(size=(50, 8))
        dists = np.array([distance(t, p) for p in probes])
        for thr in (-0.9, -0.5, 0.0, 0.4):
            accepted = sum(verify(t, p, thr)[0] for p in probes)
            assert accepted == int((dists <= thr).sum())


class TestResultsCsv:
    def test_roundtrip(self, tmp_path):
        rows = [("p1", 1, "s3", -0.912345678901234), ("p1", 2, "s1", -0.5),
                ("p2", 1, "s1", -1.0)]
        path = tmp_path / "results.csv"
        write_results_csv(path, rows, "ab" * 32)
        got, prov = read_results_csv(path)
        assert prov == "ab" * 32
        assert len(got) == 3
        for (pid, rank, gid, d), (wpid, wrank, wgid, wd) in zip(got, rows):
            assert (pid, rank, gid) == (wpid, wrank, wgid)
            assert d == wd   # repr round-trips doubles exactly

    def test_header_line(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results_csv(path, [], "00" * 32)
        lines = path.read_text().splitlines()
        assert lines[0] == "# provenance=" + "00" * 32
        assert lines[1] == "probe_id,rank,gallery_id,distance"
