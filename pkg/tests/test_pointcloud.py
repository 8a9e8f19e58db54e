import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimest.errors import InputError
from dimest.pointcloud import BoundingBox, PointCloud, load_csv, save_csv


# --- brute-force oracles -----------------------------------------------------

def naive_count_within(pts, x, r, strict=False):
    total = 0
    for p in pts:
        dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, x)))
        total += dist < r if strict else dist <= r
    return total


def naive_pairs(pts, r):
    total = 0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])))
            total += dist < r
    return total


def naive_boxes(pts, r):
    lo = [min(p[k] for p in pts) for k in range(len(pts[0]))]
    return len({tuple(math.floor((p[k] - lo[k]) / r) for k in range(len(p))) for p in pts})


def naive_greedy(pts, r):
    accepted = []
    for i, p in enumerate(pts):
        if all(math.dist(p, pts[j]) >= r for j in accepted):
            accepted.append(i)
    return accepted


def brute_max_separated(pts, r):
    n = len(pts)
    for size in range(n, 0, -1):
        for subset in itertools.combinations(range(n), size):
            if all(math.dist(pts[a], pts[b]) >= r for a, b in itertools.combinations(subset, 2)):
                return size
    return 0


# --- construction ------------------------------------------------------------

def test_flat_list_is_points_on_the_line():
    cloud = PointCloud([0.0, 1.0, 2.0])
    assert cloud.n == 3 and cloud.ambient_dim == 1


def test_read_only():
    cloud = PointCloud([[0.0, 1.0]])
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 5.0


def test_input_is_copied():
    raw = np.zeros((3, 2))
    cloud = PointCloud(raw)
    raw[0, 0] = 9.0
    assert cloud.points[0, 0] == 0.0


@pytest.mark.parametrize("bad", [[], [[np.nan, 0.0]], [[np.inf]], np.zeros((2, 2, 2))])
def test_rejects_bad_input(bad):
    with pytest.raises(InputError):
        PointCloud(bad)


def test_bounding_box_validates():
    with pytest.raises(InputError):
        BoundingBox(np.array([1.0]), np.array([0.0]))


# --- count_within ----------------------------------------------------------------

def test_count_within_closed_and_strict():
    cloud = PointCloud([0.0, 1.0, 2.0])
    assert cloud.count_within([1.0], 1.0) == 3
    assert cloud.count_within([1.0], 1.0, strict=True) == 1


def test_count_within_matches_scan_at_centroid():
    pts = np.random.default_rng(1).random((100, 2))
    cloud = PointCloud(pts)
    x = pts.mean(axis=0)
    assert cloud.count_within(x, 0.2) == naive_count_within(pts.tolist(), x.tolist(), 0.2)


def test_count_within_dimension_mismatch():
    with pytest.raises(InputError):
        PointCloud(np.zeros((3, 2))).count_within([0.0, 0.0, 0.0], 1.0)


@pytest.mark.parametrize("r", [0.0, -1.0, math.inf, math.nan])
def test_radius_validation(r):
    with pytest.raises(InputError):
        PointCloud([0.0, 1.0]).count_within([0.0], r)


# --- pairs -----------------------------------------------------------------------

def test_pairs_examples():
    assert PointCloud([0.0, 1.0, 2.0]).count_pairs_within(1.5) == 2
    assert PointCloud([0.0, 0.1, 0.2]).count_pairs_within(0.1) == 0


def test_pairs_above_diameter_is_all_pairs():
    cloud = PointCloud(np.random.default_rng(2).random((40, 3)))
    assert cloud.count_pairs_within(cloud.diameter() * 1.01) == 40 * 39 // 2


def test_pairs_need_two_points():
    with pytest.raises(InputError):
        PointCloud([[0.0]]).count_pairs_within(1.0)


def test_blockwise_pairs_agree_with_cached(monkeypatch):
    import dimest.pointcloud as pc
    pts = np.random.default_rng(3).random((120, 3))
    radii = [0.05, 0.1, 0.3]
    cached = PointCloud(pts).pair_counts(radii)
    monkeypatch.setattr(pc, "_MAX_CACHED_PAIRS", 0)
    monkeypatch.setattr(pc, "_BLOCK_ELEMENTS", 500)
    blockwise = PointCloud(pts).pair_counts(radii)
    np.testing.assert_array_equal(cached, blockwise)
    assert list(cached) == [naive_pairs(pts.tolist(), r) for r in radii]


def test_neighbor_counts_include_centre():
    pts = np.random.default_rng(4).random((50, 2))
    counts = PointCloud(pts).neighbor_counts([0.1, 1e-6])
    assert counts.shape == (50, 2)
    assert np.all(counts[:, 1] == 1)
    for i in range(50):
        assert counts[i, 0] == naive_count_within(pts.tolist(), pts[i].tolist(), 0.1)


# --- greedy separated ----------------------------------------------------------

def test_greedy_example_and_exhaustive():
    pts = [[0.0], [0.4], [1.0]]
    assert PointCloud(pts).greedy_separated(0.5) == [0, 2]
    assert brute_max_separated(pts, 0.5) == 2


def test_greedy_small_and_large_radius():
    pts = np.random.default_rng(5).random((30, 2))
    cloud = PointCloud(pts)
    dmin = min(math.dist(a, b) for a, b in itertools.combinations(pts.tolist(), 2))
    assert cloud.greedy_separated(dmin) == list(range(30))
    assert cloud.greedy_separated(cloud.diameter() * 1.01) == [0]


# --- box counting ------------------------------------------------------------------

def test_box_count_examples():
    assert PointCloud([0.1, 0.6]).box_count(0.5) == 2
    cloud = PointCloud(np.random.default_rng(6).random((20, 3)))
    assert cloud.box_count(1.5) == 1


def test_box_count_hash_oracle():
    pts = np.random.default_rng(7).random((1000, 2))
    assert PointCloud(pts).box_count(0.1) == naive_boxes(pts.tolist(), 0.1)


def test_box_count_upper_face_goes_up():
    # 0.5 - 0 = 0.5 sits exactly on the face of cell 0 and cell 1
    assert PointCloud([0.0, 0.5]).box_count(0.5) == 2


def test_box_count_translation_invariant():
    pts = np.random.default_rng(8).random((200, 2))
    a = PointCloud(pts).box_count(0.125)
    b = PointCloud(pts + np.array([3.0, -7.0])).box_count(0.125)
    assert a == b


# --- bounding box, misc ------------------------------------------------------------

def test_bounding_box_examples():
    box = PointCloud([0.0, 1.0]).bounding_box()
    assert box.lower.tolist() == [0.0] and box.upper.tolist() == [1.0]
    box = PointCloud([0.0, 1.0]).bounding_box(0.3)
    assert box.lower.tolist() == [-0.3] and box.upper.tolist() == [1.3]
    box = PointCloud([[1.0, 2.0]]).bounding_box(0.25)
    np.testing.assert_allclose(box.widths, [0.5, 0.5])
    np.testing.assert_allclose((box.lower + box.upper) / 2, [1.0, 2.0])
    assert box.volume == pytest.approx(0.25)


def test_nearest_distance():
    cloud = PointCloud([0.0, 1.0])
    np.testing.assert_allclose(cloud.nearest_distance([[0.25], [2.0]]), [0.25, 1.0])


def test_csv_round_trip(tmp_path):
    pts = np.random.default_rng(9).standard_normal((25, 4))
    cloud = PointCloud(pts)
    save_csv(cloud, tmp_path / "a.csv")
    save_csv(cloud, tmp_path / "b.csv", header=True)
    np.testing.assert_array_equal(load_csv(tmp_path / "a.csv").points, pts)
    np.testing.assert_array_equal(load_csv(tmp_path / "b.csv").points, pts)


def test_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="no such input"):
        load_csv(tmp_path / "missing.csv")
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    with pytest.raises(InputError):
        load_csv(tmp_path / "ragged.csv")
    (tmp_path / "junk.csv").write_text("1,2\n3,x\n")
    with pytest.raises(InputError):
        load_csv(tmp_path / "junk.csv")


def test_concurrent_queries_agree():
    from concurrent.futures import ThreadPoolExecutor
    pts = np.random.default_rng(10).random((300, 3))
    cloud = PointCloud(pts)
    radii = np.linspace(0.05, 0.5, 16)
    serial = [cloud.count_within(pts[0], r) for r in radii]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda r: cloud.count_within(pts[0], r), radii))
    assert serial == threaded


# --- properties -----------------------------------------------------------------

@st.composite
def clouds(draw, max_n=40, max_d=4):
    n = draw(st.integers(2, max_n))
    d = draw(st.integers(1, max_d))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    pts = rng.random((n, d))
    # coarse lattice values create exact ties
    if draw(st.booleans()):
        pts = np.round(pts * 4) / 4
    return pts


radius = st.floats(0.01, 1.5)


@settings(max_examples=60, deadline=None)
@given(clouds(), radius, radius)
def test_counts_monotone_in_radius(pts, r1, r2):
    r, rr = sorted((r1, r2))
    cloud = PointCloud(pts)
    x = pts[0]
    assert cloud.count_within(x, r) <= cloud.count_within(x, rr)
    assert cloud.count_pairs_within(r) <= cloud.count_pairs_within(rr)
    assert len(cloud.greedy_separated(r)) >= len(cloud.greedy_separated(rr))


@settings(max_examples=60, deadline=None)
@given(clouds(), st.integers(0, 6), st.integers(1, 4))
def test_box_count_monotone_for_integer_ratios(pts, e, k):
    r = 2.0 ** -e
    cloud = PointCloud(pts)
    assert cloud.box_count(r) >= cloud.box_count(k * r)


@settings(max_examples=60, deadline=None)
@given(clouds(), radius)
def test_greedy_is_separated_and_maximal(pts, r):
    cloud = PointCloud(pts)
    acc = cloud.greedy_separated(r)
    assert acc == naive_greedy(pts.tolist(), r)
    for a, b in itertools.combinations(acc, 2):
        assert np.linalg.norm(pts[a] - pts[b]) >= r
    for i in set(range(len(pts))) - set(acc):
        assert min(np.linalg.norm(pts[i] - pts[j]) for j in acc) < r


@settings(max_examples=40, deadline=None)
@given(clouds(max_n=25), radius, st.booleans())
def test_queries_equal_scans(pts, r, strict):
    cloud = PointCloud(pts)
    lst = pts.tolist()
    assert cloud.count_within(pts[-1], r, strict) == naive_count_within(lst, lst[-1], r, strict)
    assert cloud.count_pairs_within(r) == naive_pairs(lst, r)
    assert cloud.box_count(r) == naive_boxes(lst, r)
