import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parapair.corpus import (PAD, START, STOP, UNK, PhraseExample, QuestionPair, Vocabulary,
                             build_vocab, encode_batch, frame, ingest_pairs, ingest_phrases,
                             split, tokenize, write_pairs, write_phrases)
from parapair.errors import ContractError, FormatError, SizeError

words = st.lists(st.sampled_from(["a", "b", "c", "dog", "cat", "zebra"]), min_size=0, max_size=12)


class TestIngest:
    def test_sample_file_keeps_duplicates(self, data_dir):
        pairs = ingest_pairs(data_dir / "qqp_sample.tsv", keep_only_duplicates=True)
        assert [p.id for p in pairs] == [592, 705, 726, 755]
        assert pairs.skipped == 0
        assert all(p.is_duplicate == 1 for p in pairs)

    def test_all_rows(self, data_dir):
        pairs = ingest_pairs(data_dir / "qqp_sample.tsv")
        assert len(pairs) == 8 and pairs[0].id == 578

    def test_malformed_rows_are_counted(self, tmp_path):
        f = tmp_path / "bad.tsv"
        f.write_text("id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate\n"
                     "1\t2\t3\tok?\tfine?\t1\n"
                     "x\t2\t3\tok?\tfine?\t1\n"
                     "2\t4\t5\tonly five\tcols\n"
                     "3\t6\t7\t \tfine?\t1\n"
                     "4\t8\t9\ta\tb\t7\n")
        pairs = ingest_pairs(f)
        assert len(pairs) == 1 and pairs.skipped == 4

    def test_header_mismatch(self, tmp_path):
        f = tmp_path / "h.tsv"
        f.write_text("a\tb\n1\t2\n")
        with pytest.raises(FormatError):
            ingest_pairs(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest_pairs(tmp_path / "nope.tsv")

    def test_pairs_roundtrip(self, tmp_path):
        pairs = [QuestionPair(1, 2, 3, "is it ok?", "is it fine?", 1),
                 QuestionPair(4, 5, 6, "why?", "how?", 0)]
        write_pairs(pairs, tmp_path / "p.tsv")
        assert list(ingest_pairs(tmp_path / "p.tsv")) == pairs

    def test_phrases_roundtrip_and_headerless(self, tmp_path):
        ex = [PhraseExample(1, "a fine film", 3), PhraseExample(2, "dull", 0)]
        write_phrases(ex, tmp_path / "s.tsv")
        assert list(ingest_phrases(tmp_path / "s.tsv")) == ex
        (tmp_path / "n.tsv").write_text("7\tgreat\t4\n8\tbad\t9\n")
        got = ingest_phrases(tmp_path / "n.tsv")
        assert list(got) == [PhraseExample(7, "great", 4)] and got.skipped == 1


class TestSplit:
    def test_sizes_and_disjointness(self):
        items = list(range(50))
        tr, va, te = split(items, (30, 10, 5), seed=1)
        assert (len(tr), len(va), len(te)) == (30, 10, 5)
        assert len(set(tr) | set(va) | set(te)) == 45

    def test_seeded(self):
        assert split(list(range(20)), {"train": 5, "val": 5, "test": 5}, seed=3) == \
            split(list(range(20)), (5, 5, 5), seed=3)

    def test_too_small(self):
        with pytest.raises(SizeError, match="short by 2"):
            split(list(range(10)), (8, 2, 2))


class TestTokenize:
    def test_punctuation(self):
        assert tokenize('How do I "win"? Yes, now!') == \
            ["how", "do", "i", '"', "win", '"', "?", "yes", ",", "now", "!"]

    def test_apostrophe(self):
        assert tokenize("What's up.") == ["what", "'", "s", "up", "."]

    @given(st.text(max_size=40))
    def test_no_empty_or_spaced_tokens(self, text):
        for tok in tokenize(text):
            assert tok and tok == tok.strip() and not any(c.isspace() for c in tok)

    @given(st.text(max_size=40))
    def test_idempotent_on_joined_tokens(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks


class TestVocabulary:
    def test_ordering(self):
        v = build_vocab([["b", "a", "c"], ["c", "b"], ["c"]])
        assert v.id_to_token == ["<pad>", "<start>", "<stop>", "<unk>", "c", "b", "a"]

    def test_min_freq_and_max_size(self):
        v = build_vocab([["x", "x", "y", "z", "z", "z"]], min_freq=2, max_size=5)
        assert v.id_to_token[4:] == ["z"]
        with pytest.raises(ContractError):
            build_vocab([], min_freq=0)

    def test_encode_decode(self):
        v = build_vocab([["hello", "world"]])
        ids = v.encode(["hello", "mars", "world"])
        assert ids[1] == UNK
        assert v.decode([START] + ids + [STOP, 5]) == ["hello", "<unk>", "world"]

    def test_save_load(self, tmp_path):
        v = build_vocab([["one", "two", "two"]])
        v.save(tmp_path / "v.txt")
        assert Vocabulary.load(tmp_path / "v.txt") == v

    def test_load_rejects_bad_specials(self, tmp_path):
        (tmp_path / "v.txt").write_text("a\nb\n")
        with pytest.raises(FormatError):
            Vocabulary.load(tmp_path / "v.txt")

    @given(st.lists(words, max_size=6))
    def test_ids_are_dense_and_unique(self, docs):
        v = build_vocab(docs)
        assert sorted(v.token_to_id.values()) == list(range(len(v)))
        for doc in docs:
            assert v.decode(v.encode(doc)) == doc


class TestFraming:
    def test_frame(self):
        v = build_vocab([["a", "b"]])
        seq = frame(["a", "b", "zz"], v, 7)
        assert seq.ids.tolist() == [START, v.token_to_id["a"], v.token_to_id["b"], UNK, STOP, PAD, PAD]
        assert seq.length == 5

    def test_truncation(self):
        v = build_vocab([["a"]])
        seq = frame(["a"] * 10, v, 5)
        assert seq.length == 5 and seq.ids[-1] == STOP

    def test_batch(self):
        v = build_vocab([tokenize("a b c")])
        b = encode_batch([("a b", "c"), ("a b c", "a")], v, 6)
        assert b.sources.shape == (2, 6)
        assert b.source_lengths.tolist() == [4, 5] and b.target_lengths.tolist() == [3, 3]
        assert b.target_mask().tolist() == [[1, 1, 0, 0, 0], [1, 1, 0, 0, 0]]
        sub = b.rows([1])
        assert sub.sources.shape == (1, 5) and sub.targets.shape == (1, 3)

    @given(st.lists(st.tuples(words, words), min_size=1, max_size=5), st.integers(2, 10))
    def test_batch_invariants(self, pairs, max_len):
        v = build_vocab([s + t for s, t in pairs])
        b = encode_batch(pairs, v, max_len)
        for ids, n in zip(b.sources, b.source_lengths):
            assert ids[0] == START and ids[n - 1] == STOP
            assert np.all(ids[n:] == PAD) and np.all(ids[1:n - 1] >= 4)
