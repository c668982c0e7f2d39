import numpy as np
import pytest

from segrt.embedding import (
    EmbeddingIOError,
    EmbeddingTable,
    SkipGramConfig,
    char_keys,
    load_vectors,
    save_vectors,
    train_skipgram,
)
from segrt.textcore import build_vocabulary


def enumerate_ngrams(symbols, n_min, n_max):
    """Independent enumeration oracle over an explicit symbol list."""
    out = []
    for n in range(n_min, n_max + 1):
        for i in range(len(symbols) - n + 1):
            out.append("|".join(symbols[i : i + n]))
    return out


class TestCharKeys:
    def test_hangul_with_trail(self):
        # 값 = lead ㄱ(0) + vowel ㅏ(0) + trail ㅄ(18); padded symbols are
        # <, L0, V0, T18, > and the (2,3)-grams of that 5-symbol sequence
        # enumerate to 7 keys.
        expected = enumerate_ngrams(["<", "L0", "V0", "T18", ">"], 2, 3)
        assert len(expected) == 7
        assert list(char_keys("값", 2, 3)) == expected

    def test_hangul_without_trail(self):
        expected = enumerate_ngrams(["<", "L0", "V0", ">"], 2, 3)
        assert len(expected) == 5
        assert list(char_keys("가", 2, 3)) == expected

    def test_non_hangul_passthrough(self):
        assert char_keys("a") == ("a",)
        assert char_keys("漢") == ("漢",)

    def test_bucket_determinism(self):
        table_a = make_table(["가", "a"], seed=11)
        table_b = make_table(["가", "a"], seed=11)
        for ch in ("값", "a", "힣", "@"):
            assert table_a.bucket_ids(ch) == table_b.bucket_ids(ch)

    def test_lead_trail_keys_distinct(self):
        # 곡 = ㄱ + ㅗ + trail ㄱ; the lead and trail consonant are the same
        # Jamo but must produce different symbols.
        keys = char_keys("곡", 2, 2)
        assert "<|L0" in keys and "T1|>" in keys


def make_table(chars, dim=8, buckets=64, seed=0):
    rng = np.random.default_rng(seed)
    char_rows = {ch: i for i, ch in enumerate(chars)}
    return EmbeddingTable(
        dim=dim,
        char_rows=char_rows,
        char_vecs=rng.normal(size=(len(chars), dim)).astype(np.float32),
        bucket_vecs=rng.normal(size=(buckets, dim)).astype(np.float32),
        ngram_min=2,
        ngram_max=3,
        hash_seed=seed,
    )


class TestLookup:
    def test_in_vocab_mean(self):
        table = make_table(["a"])
        (bucket,) = table.bucket_ids("a")
        expected = (
            table.char_vecs[0].astype(np.float64)
            + table.bucket_vecs[bucket].astype(np.float64)
        ) / 2
        np.testing.assert_allclose(table.lookup("a"), expected, rtol=1e-6)

    def test_in_vocab_hangul_mean(self):
        table = make_table(["값"])
        buckets = table.bucket_ids("값")
        assert len(buckets) == 7
        rows = [table.char_vecs[0]] + [table.bucket_vecs[b] for b in buckets]
        expected = np.mean(np.array(rows, dtype=np.float64), axis=0)
        np.testing.assert_allclose(table.lookup("값"), expected, rtol=1e-5)

    def test_oov_hangul_uses_buckets_only(self):
        table = make_table(["a"])
        buckets = table.bucket_ids("힣")
        expected = np.mean(table.bucket_vecs[list(buckets)].astype(np.float64), axis=0)
        np.testing.assert_allclose(table.lookup("힣"), expected, rtol=1e-5)
        assert np.linalg.norm(table.lookup("힣")) > 0

    def test_oov_non_hangul_single_bucket(self):
        table = make_table(["a"])
        (bucket,) = table.bucket_ids("@")
        np.testing.assert_array_equal(table.lookup("@"), table.bucket_vecs[bucket])

    def test_total_over_unicode(self):
        table = make_table(["a"])
        for cp in (0x20AC, 0x1F600, 0xAC01, 0x10FFFF):
            vec = table.lookup(chr(cp))
            assert vec.shape == (table.dim,)
            assert np.all(np.isfinite(vec))


def xy_z_corpus():
    """x/y always adjacent and sharing filler contexts; z disjoint."""
    fillers_xy = "abcde"
    fillers_z = "fghij"
    lines = []
    for i in range(150):
        lines.append(fillers_xy[i % 5] + "xy" + fillers_xy[(i + 2) % 5])
        lines.append(fillers_z[i % 5] + "z" + fillers_z[(i + 3) % 5])
    return lines


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))


class TestTrainSkipGram:
    def test_adjacency_beats_disjoint_contexts(self):
        lines = xy_z_corpus()
        vocab = build_vocabulary(lines)
        cfg = SkipGramConfig(
            window=2, negatives=5, epochs=3, subsample=0, dim=30, buckets=1000
        )
        wins = 0
        for seed in range(20):
            table = train_skipgram(lines, cfg, vocab, seed=seed)
            x, y, z = table.lookup("x"), table.lookup("y"), table.lookup("z")
            wins += cosine(x, y) > cosine(x, z)
        assert wins >= 18

    def test_loss_trace_two_steps(self):
        # Frozen from the recorded trace at seed 0; at two steps the margin
        # is tiny, so the multi-epoch test below carries the real weight.
        sink = []
        cfg = SkipGramConfig(
            window=1, negatives=5, epochs=1, subsample=0, dim=20, buckets=100
        )
        train_skipgram(["ab"], cfg, build_vocabulary(["ab"]), seed=0, step_loss_sink=sink)
        assert len(sink) == 2
        assert sink[-1] < sink[0]

    def test_epoch_loss_decreases(self):
        cfg = SkipGramConfig(
            window=1, negatives=5, epochs=40, subsample=0, dim=20, buckets=100
        )
        for seed in range(3):
            table = train_skipgram(["ab"], cfg, build_vocabulary(["ab"]), seed=seed)
            assert table.train_losses[-1] < table.train_losses[0]

    def test_zero_epochs_forbidden(self):
        with pytest.raises(ValueError):
            SkipGramConfig(epochs=0)

    def test_empty_corpus(self):
        vocab = build_vocabulary(["ab"])
        with pytest.raises(ValueError, match="empty corpus"):
            train_skipgram([], SkipGramConfig(), vocab)

    def test_all_oov_corpus(self):
        vocab = build_vocabulary(["ab"])
        with pytest.raises(ValueError, match="empty corpus"):
            train_skipgram(["zzz"], SkipGramConfig(subsample=0), vocab)

    def test_fixed_seed_bit_identical(self):
        lines = ["가나다", "나다가", "다가나"]
        vocab = build_vocabulary(lines)
        cfg = SkipGramConfig(window=2, negatives=3, epochs=2, subsample=0, dim=10, buckets=200)
        a = train_skipgram(lines, cfg, vocab, seed=5)
        b = train_skipgram(lines, cfg, vocab, seed=5)
        np.testing.assert_array_equal(a.char_vecs, b.char_vecs)
        np.testing.assert_array_equal(a.bucket_vecs, b.bucket_vecs)

    def test_vectors_finite(self):
        lines = xy_z_corpus()[:40]
        vocab = build_vocabulary(lines)
        cfg = SkipGramConfig(window=2, negatives=2, epochs=2, subsample=0, dim=12, buckets=100)
        table = train_skipgram(lines, cfg, vocab, seed=1)
        assert np.all(np.isfinite(table.char_vecs))
        assert np.all(np.isfinite(table.bucket_vecs))


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        lines = ["가나다 라", "가나 다라", "마바 가"]
        vocab = build_vocabulary(lines)
        cfg = SkipGramConfig(window=2, negatives=3, epochs=1, subsample=0, dim=10, buckets=128)
        table = train_skipgram(lines, cfg, vocab, seed=3)
        path = str(tmp_path / "vectors.txt")
        save_vectors(table, path)
        loaded = load_vectors(path)
        probe = sorted(vocab.char_to_id) + ["힣", "@", "x"]
        for ch in probe:
            np.testing.assert_array_equal(loaded.lookup(ch), table.lookup(ch))

    def test_row_width_error_names_row(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("2 4\na 0.0 1.0 2.0 3.0\nb 0.0 1.0 2.0\n", encoding="utf-8")
        (tmp_path / "vectors.txt.sub").write_bytes(b"")
        with pytest.raises(EmbeddingIOError, match=":3"):
            load_vectors(str(path))

    def test_empty_table(self, tmp_path):
        table = EmbeddingTable(
            dim=100,
            char_rows={},
            char_vecs=np.zeros((0, 100), dtype=np.float32),
            bucket_vecs=np.zeros((4, 100), dtype=np.float32),
            ngram_min=2,
            ngram_max=3,
            hash_seed=0,
        )
        path = str(tmp_path / "vectors.txt")
        save_vectors(table, path)
        with open(path, encoding="utf-8") as fh:
            assert fh.readline().strip() == "0 100"
        loaded = load_vectors(path)
        assert loaded.char_rows == {}

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "vectors.txt")
        table = make_table(["a"])
        save_vectors(table, path)
        with open(path + ".sub", "r+b") as fh:
            fh.write(b"XXXXXX")
        with pytest.raises(EmbeddingIOError, match="magic"):
            load_vectors(path)

    def test_missing_companion(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("0 100\n", encoding="utf-8")
        with pytest.raises(EmbeddingIOError, match="companion"):
            load_vectors(str(path))
