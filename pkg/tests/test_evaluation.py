import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trfvq import evaluation as ev
from trfvq.vq import SymbolSequence


class TestBitrate:
    def test_zero_entropy(self):
        r = ev.bitrate([[5] * 100], [1.0])
        assert r.bitrate == 0.0 and r.entropy_bits == 0.0

    def test_one_bit(self):
        r = ev.bitrate([[0, 1] * 50], [1.0])
        assert abs(r.bitrate - 100.0) <= 1e-9

    def test_two_bits_across_utterances(self):
        r = ev.bitrate([[0, 1, 2, 3] * 10, [3, 2, 1, 0] * 15], [0.25, 0.25])
        assert r.total_symbols == 100 and r.total_duration_s == 0.5
        assert abs(r.bitrate - 400.0) <= 1e-9

    def test_symbol_sequences_accepted(self):
        r = ev.bitrate([SymbolSequence([0, 1] * 25)], [0.5])
        assert abs(r.bitrate - 100.0) <= 1e-9

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=60), st.permutations(range(10)))
    @settings(max_examples=60, deadline=None)
    def test_relabeling_invariance(self, seq, perm):
        a = ev.bitrate([seq], [1.3]).bitrate
        b = ev.bitrate([[perm[s] for s in seq]], [1.3]).bitrate
        assert a == pytest.approx(b, abs=1e-9)

    def test_duplication_invariance(self):
        seq = list(np.random.default_rng(0).integers(0, 7, 80))
        once = ev.bitrate([seq], [0.8]).bitrate
        twice = ev.bitrate([seq, seq], [0.8, 0.8]).bitrate
        assert once == pytest.approx(twice, rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            ev.bitrate([], [])
        with pytest.raises(ValueError):
            ev.bitrate([[1]], [0.0])
        with pytest.raises(ValueError):
            ev.bitrate([[1], [2]], [1.0])


def brute_force_dtw(cost):
    """Enumerate every monotone path from (0,0) to (n-1,m-1)."""
    n, m = cost.shape
    best = (np.inf, np.inf)

    def walk(i, j, total, length):
        nonlocal best
        total += cost[i, j]
        length += 1
        if (i, j) == (n - 1, m - 1):
            best = min(best, (total, length))
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, total, length)

    walk(0, 0, 0.0, 0)
    return best[0] / best[1]


def abs_dist(a, b):
    return np.abs(a[:, None, 0] - b[None, :, 0])


class TestDtw:
    def test_self_distance(self):
        a = np.random.default_rng(0).standard_normal((6, 3))
        assert ev.dtw_distance(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((5, 3)), rng.standard_normal((8, 3))
        assert ev.dtw_distance(a, b) == pytest.approx(ev.dtw_distance(b, a), rel=1e-12)

    def test_hand_case(self):
        a, b = np.array([[1.0], [0.0]]), np.array([[1.0], [1.0]])
        # paths (0,0)(1,1) cost 1 len 2; (0,0)(0,1)(1,1) cost 1 len 3 -> shortest wins
        assert ev.dtw_distance(a, b, abs_dist) == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_path_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 3, (int(rng.integers(1, 5)), 1)).astype(float)
        b = rng.integers(0, 3, (int(rng.integers(1, 5)), 1)).astype(float)
        assert ev.dtw_distance(a, b, abs_dist) == pytest.approx(
            brute_force_dtw(abs_dist(a, b)), rel=1e-12)

    def test_zero_norm_frames(self):
        z = np.zeros((3, 2))
        assert ev.dtw_distance(z, np.ones((2, 2))) == pytest.approx(1.0)
        d = ev.cosine_distance_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 1.0]]))
        np.testing.assert_allclose(d, [[1.0], [1.0]])

    def test_errors(self):
        with pytest.raises(ValueError):
            ev.dtw_distance(np.zeros((0, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            ev.dtw_distance(np.ones((2, 3)), np.ones((2, 2)))


def category_items(rng, n_per=10, T=4):
    protos = {"p": np.array([1.0, 0.0, 0.0]), "q": np.array([0.0, 1.0, 0.0]),
              "r": np.array([0.0, 0.0, 1.0])}
    items, labels = [], []
    for lab, v in protos.items():
        for _ in range(n_per):
            items.append(np.tile(v, (T, 1)) + 0.05 * rng.random((T, 3)))
            labels.append(lab)
    return items, labels


class TestAbx:
    def test_separable_is_zero(self):
        rng = np.random.default_rng(0)
        items, labels = category_items(rng)
        trip = ev.make_triplets(labels, rng, 200)
        assert ev.abx_error_rate(trip, embed=lambda i: items[i]) == 0.0

    def test_swapping_roles_complements(self):
        rng = np.random.default_rng(1)
        items = [rng.standard_normal((3, 2)) for _ in range(12)]
        trip = [tuple(rng.choice(12, 3, replace=False)) for _ in range(50)]
        a = ev.abx_error_rate(trip, embed=lambda i: items[i])
        b = ev.abx_error_rate([(y, x, z) for x, y, z in trip], embed=lambda i: items[i])
        assert a + b == pytest.approx(100.0)

    def test_ties_count_half(self):
        one = np.ones((2, 2))
        assert ev.abx_error_rate([(one, one, one)]) == 50.0

    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(2)
        items, labels = category_items(rng, n_per=40)
        shuffled = rng.permutation(labels)
        trip = ev.make_triplets(shuffled, rng, 1000)
        err = ev.abx_error_rate(trip, embed=lambda i: items[i])
        assert abs(err - 50.0) <= 3.0

    def test_triplet_sampler_contract(self):
        labels = ["a", "a", "b", "b", "c"]
        for a, b, x in ev.make_triplets(labels, 0, 100):
            assert labels[a] == labels[x] != labels[b] and a != x

    def test_empty(self):
        with pytest.raises(ValueError):
            ev.abx_error_rate([])


class TestUsage:
    def test_uniform(self):
        r = ev.codebook_usage([list(range(128)) * 3], 128)
        assert r.perplexity == pytest.approx(128.0) and r.dead_codes == 0

    def test_single_code(self):
        r = ev.codebook_usage([[7] * 20], 128)
        assert r.perplexity == pytest.approx(1.0) and r.dead_codes == 127

    def test_two_codes(self):
        r = ev.codebook_usage([[0] * 50 + [1] * 50], 4)
        assert r.perplexity == pytest.approx(2.0) and r.dead_codes == 2
        np.testing.assert_array_equal(r.counts, [50, 50, 0, 0])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ev.codebook_usage([[4]], 4)

    def test_perplexity_bounds(self):
        rng = np.random.default_rng(3)
        for K in (2, 16, 64):
            r = ev.codebook_usage([rng.integers(0, K, 200)], K)
            assert 1.0 <= r.perplexity <= K - r.dead_codes + 1e-9

