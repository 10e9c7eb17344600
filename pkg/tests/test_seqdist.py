import numpy as np
import pytest

from crashseq.seqdist import CostScheme, DissimMatrix, align_cost, condensed_index, distance_matrix


def oracle_cost(a, b, d=1.0, s=1.0):
    """Memo-free recursion over all edit scripts; independent of the DP."""

    def rec(i, j):
        if i == len(a):
            return (len(b) - j) * d
        if j == len(b):
            return (len(a) - i) * d
        best = rec(i + 1, j + 1) + (0.0 if a[i] == b[j] else s)
        ins = rec(i, j + 1) + d
        if ins < best:
            best = ins
        dele = rec(i + 1, j) + d
        if dele < best:
            best = dele
        return best

    return rec(0, 0)


class TestAlignCost:
    def test_alignment_table_anchor(self):
        assert align_cost("ABCD", "ACB", CostScheme(1, 1)) == 2.0

    def test_indel_route_wins_when_substitution_expensive(self):
        assert align_cost("ABCD", "ACB", CostScheme(1, 3)) == 3.0

    def test_identical(self):
        assert align_cost("ABAB", "ABAB") == 0.0

    def test_one_empty(self):
        assert align_cost("", "ABC", CostScheme(2, 1)) == 6.0
        assert align_cost("ABC", "", CostScheme(2, 1)) == 6.0
        assert align_cost("", "") == 0.0

    def test_token_lists(self):
        a = ["1ST", "1OIS", "1N"]
        b = ["1ST", "1OIS", "1NA"]
        assert align_cost(a, b) == 1.0

    def test_recursive_oracle_agreement(self):
        rng = np.random.default_rng(2024)
        alphabet = "ABCDE"
        for _ in range(500):
            a = "".join(rng.choice(list(alphabet), size=rng.integers(0, 9)))
            b = "".join(rng.choice(list(alphabet), size=rng.integers(0, 9)))
            assert align_cost(a, b) == oracle_cost(a, b)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        costs = CostScheme(1.5, 2.0)
        for _ in range(100):
            a = "".join(rng.choice(list("ABC"), size=rng.integers(0, 7)))
            b = "".join(rng.choice(list("ABC"), size=rng.integers(0, 7)))
            assert align_cost(a, b, costs) == align_cost(b, a, costs)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = "".join(rng.choice(list("ABCD"), size=rng.integers(0, 8)))
            b = "".join(rng.choice(list("ABCD"), size=rng.integers(0, 8)))
            assert align_cost(a, b, CostScheme(2, 2)) == pytest.approx(
                2 * align_cost(a, b, CostScheme(1, 1))
            )

    def test_unit_cost_bounds(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            a = "".join(rng.choice(list("AB"), size=rng.integers(0, 9)))
            b = "".join(rng.choice(list("AB"), size=rng.integers(0, 9)))
            dist = align_cost(a, b)
            assert abs(len(a) - len(b)) <= dist <= max(len(a), len(b), 0)


class TestCostScheme:
    def test_positive_costs_required(self):
        with pytest.raises(ValueError):
            CostScheme(0, 1)
        with pytest.raises(ValueError):
            CostScheme(1, -2)

    def test_metric_warning(self):
        assert not CostScheme(1, 2).metric_warning
        assert CostScheme(1, 2.5).metric_warning


def random_sequences(rng, count, maxlen=9, alphabet="ABCDE"):
    return [
        "".join(rng.choice(list(alphabet), size=rng.integers(1, maxlen)))
        for _ in range(count)
    ]


class TestDistanceMatrix:
    def test_single_sequence(self):
        m = distance_matrix(["ABC"])
        assert m.n == 1 and m.values.size == 0 and m.get(0, 0) == 0.0

    def test_duplicates_zero(self):
        m = distance_matrix(["ABC", "ABC"])
        assert m.get(0, 1) == 0.0

    def test_matches_pairwise_align_cost(self):
        rng = np.random.default_rng(3)
        seqs = random_sequences(rng, 12)
        costs = CostScheme(1, 2)
        m = distance_matrix(seqs, costs)
        for i in range(len(seqs)):
            for j in range(i + 1, len(seqs)):
                assert m.get(i, j) == align_cost(seqs[i], seqs[j], costs)

    def test_parallel_equals_serial(self):
        rng = np.random.default_rng(5)
        seqs = random_sequences(rng, 30)
        serial = distance_matrix(seqs, threads=1)
        parallel = distance_matrix(seqs, threads=4)
        assert np.array_equal(serial.values, parallel.values)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            distance_matrix([])

    def test_condensed_index_layout(self):
        n = 6
        seen = set()
        for i in range(n):
            for j in range(i + 1, n):
                seen.add(condensed_index(n, i, j))
        assert seen == set(range(n * (n - 1) // 2))
        assert condensed_index(n, 4, 2) == condensed_index(n, 2, 4)


class TestPersistence:
    def _matrix(self):
        rng = np.random.default_rng(17)
        return distance_matrix(random_sequences(rng, 9), ids=[f"c{i}" for i in range(9)])

    def test_binary_round_trip(self, tmp_path):
        m = self._matrix()
        path = tmp_path / "m.bin"
        m.save(path, fmt="binary")
        back = DissimMatrix.load(path)
        assert back.ids == m.ids
        assert np.array_equal(back.values, m.values)

    def test_csv_round_trip(self, tmp_path):
        m = self._matrix()
        path = tmp_path / "m.csv"
        m.save(path, fmt="csv")
        back = DissimMatrix.load(path)
        assert back.ids == m.ids
        assert np.allclose(back.values, m.values, atol=0)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            self._matrix().save(tmp_path / "m.x", fmt="parquet")
