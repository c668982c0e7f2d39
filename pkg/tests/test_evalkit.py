import numpy as np
import pytest

from segrt.evalkit import (
    BoundaryMetrics,
    RankSurvey,
    SurveyError,
    boundary_metrics,
    compare_systems,
    corpus_metrics,
    load_survey,
    ranks_from_ordering,
    system_rank,
    validate_competition_ranks,
)


class TestBoundaryMetrics:
    def test_perfect(self):
        m = boundary_metrics([1, 0, 1], [1, 0, 1])
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
        assert m.exact_match == 1.0
        assert m.word_accuracy == 1.0

    def test_all_zero_prediction(self):
        m = boundary_metrics([0, 0, 0], [1, 0, 1])
        assert m.recall == 0.0
        assert m.precision == 0.0
        assert m.f1 == 0.0

    def test_disjoint(self):
        m = boundary_metrics([1, 0, 0], [0, 0, 1])
        assert m.tp == 0
        assert (m.precision, m.recall) == (0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            boundary_metrics([1], [1, 0])

    def test_word_accuracy_split_word_not_counted(self):
        # gold "abc|de", pred "a|bc|de": the word bc..? gold words are
        # (0,3) and (3,5); pred reproduces (3,5) only.
        m = boundary_metrics([1, 0, 1, 0], [0, 0, 1, 0])
        assert m.word_accuracy == 0.5

    def test_tp_symmetric_under_swap(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = rng.integers(0, 2, size=12).tolist()
            b = rng.integers(0, 2, size=12).tolist()
            assert boundary_metrics(a, b).tp == boundary_metrics(b, a).tp

    def test_corpus_micro_aggregation(self):
        m = corpus_metrics([([1, 0], [1, 0]), ([0, 0, 1], [1, 0, 1])])
        assert m.tp == 2 and m.fn == 1 and m.fp == 0
        assert m.exact_match == 0.5

    def test_f1_bounds_on_random_vectors(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(1, 20))
            pred = rng.integers(0, 2, size=n).tolist()
            gold = rng.integers(0, 2, size=n).tolist()
            m = boundary_metrics(pred, gold)
            assert 0.0 <= m.f1 <= 1.0
            if m.precision > 0 and m.recall > 0:
                low, high = sorted((m.precision, m.recall))
                # Harmonic mean sits between min and max, and within 2x of min.
                assert low - 1e-12 <= m.f1 <= high + 1e-12
                assert m.f1 <= 2 * low + 1e-12
            else:
                assert m.f1 == 0.0


class TestRanksFromOrdering:
    def test_two_firsts_one_third(self):
        ranks = ranks_from_ordering([{"A", "B"}, {"C"}])
        assert ranks["A"] == 1 and ranks["B"] == 1 and ranks["C"] == 3

    def test_one_first_two_seconds(self):
        ranks = ranks_from_ordering([{"A"}, {"B", "C"}])
        assert ranks["A"] == 1 and ranks["B"] == 2 and ranks["C"] == 2

    def test_strict_ordering(self):
        ranks = ranks_from_ordering([{"A"}, {"B"}, {"C"}])
        assert [ranks[s] for s in "ABC"] == [1, 2, 3]

    def test_empty_partition(self):
        with pytest.raises(ValueError):
            ranks_from_ordering([])

    def test_output_always_valid_competition_ranking(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            names = [f"s{i}" for i in range(n)]
            rng.shuffle(names)
            groups = []
            i = 0
            while i < n:
                size = int(rng.integers(1, n - i + 1))
                groups.append(names[i : i + size])
                i += size
            ranks = ranks_from_ordering(groups)
            validate_competition_ranks(list(ranks.values()))


def survey_from_rows(rows):
    systems = tuple(sorted({s for _, s, _ in rows}))
    items = tuple(sorted({i for i, _, _ in rows}))
    ranks = np.empty((len(items), len(systems)), dtype=int)
    for item, system, rank in rows:
        ranks[items.index(item), systems.index(system)] = rank
    return RankSurvey(systems=systems, items=items, ranks=ranks)


class TestSystemRank:
    def test_all_first_place(self):
        rows = [(f"i{k}", s, 1 if s == "A" else 2) for k in range(5) for s in "ABC"]
        survey = survey_from_rows(rows)
        assert system_rank(survey, "A") == 1.0

    def test_all_last_place(self):
        rows = []
        for k in range(5):
            rows += [(f"i{k}", "A", 3), (f"i{k}", "B", 1), (f"i{k}", "C", 1)]
        survey = survey_from_rows(rows)
        assert system_rank(survey, "A") == pytest.approx(1.0 / 3.0)

    def test_affine_in_mean_rank_and_bounded(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            m, n = int(rng.integers(1, 8)), int(rng.integers(1, 5))
            ranks = np.empty((m, n), dtype=int)
            for row in range(m):
                perm = rng.permutation(n) + 1
                ranks[row] = perm
            survey = RankSurvey(
                systems=tuple(f"s{j}" for j in range(n)),
                items=tuple(f"i{k}" for k in range(m)),
                ranks=ranks,
            )
            for j, system in enumerate(survey.systems):
                s = system_rank(survey, system)
                mean_rank = ranks[:, j].mean()
                assert s == pytest.approx((n + 1 - mean_rank) / n)
                assert 1.0 / n - 1e-12 <= s <= 1.0 + 1e-12

    def test_tied_systems_equal_s(self):
        rows = []
        for k in range(4):
            rows += [(f"i{k}", "A", 1), (f"i{k}", "B", 1), (f"i{k}", "C", 3)]
        survey = survey_from_rows(rows)
        assert system_rank(survey, "A") == system_rank(survey, "B")

    def test_single_item_single_system(self):
        survey = RankSurvey(systems=("only",), items=("i0",), ranks=np.array([[1]]))
        assert system_rank(survey, "only") == 1.0

    def test_no_items_rejected(self):
        survey = RankSurvey(
            systems=("a", "b"), items=(), ranks=np.empty((0, 2), dtype=int)
        )
        with pytest.raises(ValueError):
            system_rank(survey, "a")


def reference_triple_survey():
    """10,000 items whose mean ranks are exactly 1.9573 / 1.8574 / 1.7668.

    Uses only valid competition-rank triples: 1395 x (1,1,1),
    3803 x (1,2,3), 31 x (2,1,3), 4771 x (3,2,1) for (A,B,C).
    """
    triples = (
        [(1, 1, 1)] * 1395 + [(1, 2, 3)] * 3803 + [(2, 1, 3)] * 31 + [(3, 2, 1)] * 4771
    )
    assert len(triples) == 10_000
    ranks = np.array(triples, dtype=int)
    return RankSurvey(
        systems=("A", "B", "C"),
        items=tuple(f"i{k}" for k in range(len(triples))),
        ranks=ranks,
    )


class TestReportedScores:
    def test_constructed_survey_reproduces_reported_s(self):
        survey = reference_triple_survey()
        assert np.isclose(survey.ranks[:, 0].mean(), 1.9573)
        assert np.isclose(survey.ranks[:, 1].mean(), 1.8574)
        assert np.isclose(survey.ranks[:, 2].mean(), 1.7668)
        assert abs(system_rank(survey, "A") - 0.6809) < 5e-5
        assert abs(system_rank(survey, "B") - 0.7142) < 5e-5
        assert abs(system_rank(survey, "C") - 0.7444) < 5e-5

    def test_compare_sorted_descending(self):
        report = compare_systems(reference_triple_survey())
        assert [r["system"] for r in report] == ["C", "B", "A"]
        assert report[0]["s"] >= report[1]["s"] >= report[2]["s"]


class TestSurveyIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text(
            "item,system,rank\n"
            "p1,naver,1\np1,kospacing,2\np1,proposed,2\n"
            "p2,naver,3,\n".replace(",\n", "\n"),
            encoding="utf-8",
        )
        # incomplete: p2 lacks two systems
        with pytest.raises(SurveyError, match="missing rank"):
            load_survey(str(path))

    def test_parse_and_rank(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text(
            "item,system,rank\n"
            "p1,a,1\np1,b,2\np1,c,3\n"
            "p2,a,1\np2,b,1\np2,c,3\n",
            encoding="utf-8",
        )
        survey = load_survey(str(path))
        assert survey.systems == ("a", "b", "c")
        assert system_rank(survey, "a") == 1.0

    def test_malformed_row_numbered(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text("item,system,rank\np1,a,first\n", encoding="utf-8")
        with pytest.raises(SurveyError, match=":2"):
            load_survey(str(path))

    def test_invalid_ranking_rejected(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text(
            "item,system,rank\np1,a,1\np1,b,2\np1,c,2\n"
            "p2,a,2\np2,b,2\np2,c,3\n",  # no rank 1: invalid
            encoding="utf-8",
        )
        with pytest.raises(SurveyError, match="competition"):
            load_survey(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "survey.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SurveyError):
            load_survey(str(path))
