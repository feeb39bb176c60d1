import math

import numpy as np
import pytest

from cloneopt import (
    Alphabet,
    CloneStream,
    ConfigError,
    ConjugateModel,
    MalformedInputError,
    MarkovModel,
    decode_stream,
    fit_markov,
    gen_synthetic_families,
    hamming_distance,
    load_model,
    next_token_logprobs,
    perplexity,
    read_corpus,
    read_sequences,
    sample_clone,
    save_model,
    sequence_logprob,
    write_corpus,
    write_sequences,
)


def test_alphabet_validation():
    with pytest.raises(ConfigError):
        Alphabet(1)
    with pytest.raises(ConfigError):
        Alphabet(3, "AB")
    with pytest.raises(ConfigError):
        Alphabet(3, "AAB")
    ab = Alphabet(3)
    assert ab.separator == 3
    with pytest.raises(MalformedInputError):
        ab.validate_sequence((0, 3))
    with pytest.raises(MalformedInputError):
        ab.validate_sequence(())


def test_sequence_text_roundtrip():
    ab_int = Alphabet(5)
    ab_chr = Alphabet(4, "ACGT")
    for seq in [(0,), (0, 4, 3), (2, 2, 2)]:
        assert ab_int.parse_sequence(ab_int.format_sequence(seq)) == seq
    for seq in [(0,), (1, 2, 3), (3, 3, 0)]:
        assert ab_chr.parse_sequence(ab_chr.format_sequence(seq)) == seq
    with pytest.raises(MalformedInputError) as e:
        ab_chr.parse_sequence("ACX", where="f: line 3")
    assert "line 3" in str(e.value) and "column 3" in str(e.value)


def test_stream_encode_decode_roundtrip():
    ab = Alphabet(4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        seed = tuple(rng.integers(0, 4, size=rng.integers(1, 6)))
        members = tuple(
            tuple(rng.integers(0, 4, size=rng.integers(1, 6)))
            for _ in range(rng.integers(0, 4))
        )
        stream = CloneStream(seed, members)
        assert decode_stream(ab, stream.flat_tokens(ab)) == stream


def test_decode_rejects_malformed():
    ab = Alphabet(3)
    with pytest.raises(MalformedInputError):
        decode_stream(ab, (0, 1))  # missing trailing separator
    with pytest.raises(MalformedInputError):
        decode_stream(ab, (3,))  # empty sequence
    with pytest.raises(MalformedInputError):
        decode_stream(ab, (0, 5, 3))


# ---------------------------------------------------------------------------
# Conjugate model
# ---------------------------------------------------------------------------


def test_conjugate_prior_predictive_uniform():
    model = ConjugateModel(Alphabet(3), 3, 1.0)
    probs = np.exp(next_token_logprobs(model, ()))
    assert np.allclose(probs[:3], 1.0 / 3.0)
    assert probs[3] == 0.0


def test_conjugate_counted_predictive():
    # two complete sequences with letter 0 at position 0 -> p(0) = (2+1)/(2+3)
    ab = Alphabet(3)
    model = ConjugateModel(ab, 3, 1.0)
    ctx = (0, 1, 2, ab.separator, 0, 0, 1, ab.separator)
    probs = np.exp(next_token_logprobs(model, ctx))
    assert probs[0] == pytest.approx(0.6, abs=1e-12)


def test_conjugate_normalization_and_separator():
    ab = Alphabet(4)
    model = ConjugateModel(ab, 2, 0.5)
    state = model.start_context()
    for tok in (1, 3, ab.separator, 0):
        lp = model.next_logprobs(state)
        assert abs(np.logaddexp.reduce(lp)) < 1e-10
        model.extend(state, tok)
    # at position L the separator is forced
    model.extend(state, 2)
    lp = model.next_logprobs(state)
    assert lp[ab.separator] == 0.0
    assert np.all(np.isneginf(lp[:4]))


def test_conjugate_rejects_malformed_context():
    ab = Alphabet(3)
    model = ConjugateModel(ab, 3, 1.0)
    with pytest.raises(MalformedInputError):
        next_token_logprobs(model, (0, ab.separator))  # early separator
    with pytest.raises(MalformedInputError):
        next_token_logprobs(model, (0, 1, 2, 0))  # overlong sequence
    with pytest.raises(MalformedInputError):
        next_token_logprobs(model, (7,))


def test_conjugate_per_position_alpha():
    ab = Alphabet(3)
    alpha = np.array([[5.0, 1.0, 1.0], [1.0, 5.0, 1.0]])
    model = ConjugateModel(ab, 2, alpha)
    p0 = np.exp(next_token_logprobs(model, ()))
    assert p0[0] == pytest.approx(5.0 / 7.0)
    p1 = np.exp(next_token_logprobs(model, (0,)))
    assert p1[1] == pytest.approx(5.0 / 7.0)
    with pytest.raises(ConfigError):
        ConjugateModel(ab, 2, np.zeros(3))


# ---------------------------------------------------------------------------
# sequence_logprob
# ---------------------------------------------------------------------------


def test_sequence_logprob_uniform_prior():
    ab = Alphabet(3)
    model = ConjugateModel(ab, 2, 1.0)
    # empty context: every letter is uniform, so log p(any X) = 2 log(1/3)
    state = model.start_context()
    lp_empty = 0.0
    for tok in (2, 2):
        lp_empty += float(model.next_logprobs(state)[tok])
        model.extend(state, tok)
    assert lp_empty == pytest.approx(2 * math.log(1.0 / 3.0), abs=1e-12)
    # seed-only context: counts shift the predictive to (1+0)/(3+1) per position
    lp = sequence_logprob(model, CloneStream((0, 1)), (2, 2))
    assert lp == pytest.approx(2 * math.log(1.0 / 4.0), abs=1e-12)


def test_sequence_logprob_matches_chain_rule():
    ab = Alphabet(3)
    rng = np.random.default_rng(2)
    conj = ConjugateModel(ab, 4, 0.5)
    fams, _ = gen_synthetic_families(ab, 4, 0.5, 30, 4, rng)
    markov = fit_markov(fams, 1, 1e-2, ab)
    for model, length in ((conj, 4), (markov, 4)):
        for _ in range(10):
            ctx = CloneStream(
                tuple(rng.integers(0, 3, size=length)),
                (tuple(rng.integers(0, 3, size=length)),),
            )
            x = tuple(rng.integers(0, 3, size=length))
            manual = 0.0
            state = model.start_context(ctx.flat_tokens(ab))
            for t in x:
                manual += float(model.next_logprobs(state)[t])
                model.extend(state, t)
            manual += float(model.next_logprobs(state)[ab.separator])
            assert sequence_logprob(model, ctx, x) == manual


def test_exchangeability_of_conjugate_context():
    ab = Alphabet(3)
    model = ConjugateModel(ab, 3, 0.5)
    members = ((1, 1, 1), (2, 0, 1), (0, 0, 2))
    x = (0, 1, 1)
    base = sequence_logprob(model, CloneStream((0, 1, 2), members), x)
    perm = sequence_logprob(model, CloneStream((0, 1, 2), members[::-1]), x)
    assert base == perm


def test_sequence_logprob_rejects_wrong_length():
    model = ConjugateModel(Alphabet(3), 3, 1.0)
    with pytest.raises(MalformedInputError):
        sequence_logprob(model, CloneStream((0, 1, 2)), (0, 1))


# ---------------------------------------------------------------------------
# sample_clone
# ---------------------------------------------------------------------------


def test_sample_clone_zero_members():
    model = ConjugateModel(Alphabet(3), 3, 1.0)
    clone = sample_clone(model, (0, 1, 2), 0, np.random.default_rng(0))
    assert clone == CloneStream((0, 1, 2), ())


def test_sample_clone_deterministic():
    ab = Alphabet(3)
    model = ConjugateModel(ab, 3, 0.5)
    a = sample_clone(model, (0, 1, 2), 4, np.random.default_rng(42))
    b = sample_clone(model, (0, 1, 2), 4, np.random.default_rng(42))
    assert a == b


def test_sample_clone_concentrated_alpha_gives_consensus():
    ab = Alphabet(3)
    consensus = (2, 0, 1)
    alpha = np.full((3, 3), 1e-3)
    for l, t in enumerate(consensus):
        alpha[l, t] = 1e6
    model = ConjugateModel(ab, 3, alpha)
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(200):
        clone = sample_clone(model, consensus, 1, rng)
        hits += clone.members[0] == consensus
    assert hits / 200 > 0.95


def test_sample_clone_letter_frequencies_match_predictive():
    ab = Alphabet(3)
    model = ConjugateModel(ab, 2, 0.5)
    x0 = (0, 1)
    state = model.start_context(CloneStream(x0).flat_tokens(ab))
    pred = model.predictive_matrix(state)
    rng = np.random.default_rng(4)
    n = 10000
    counts = np.zeros((2, 3))
    for _ in range(n):
        clone = sample_clone(model, x0, 1, rng)
        for l, t in enumerate(clone.members[0]):
            counts[l, t] += 1
    freq = counts / n
    se = np.sqrt(pred * (1 - pred) / n)
    assert np.all(np.abs(freq - pred) <= 3 * se + 1e-9)


def test_sample_clone_markov_truncation_logged():
    ab = Alphabet(2)
    # a model that never emits the separator without smoothing help
    model = MarkovModel(ab, 0, 1e-9, {(): np.array([5000.0, 5000.0, 0.0])})
    log = []
    clone = sample_clone(model, (0, 1), 2, np.random.default_rng(0), max_len=5, truncation_log=log)
    assert all(len(m) == 5 for m in clone.members)
    assert len(log) == 2


# ---------------------------------------------------------------------------
# Markov model and fitting
# ---------------------------------------------------------------------------


def test_fit_markov_alternating_corpus():
    ab = Alphabet(3)
    seq = tuple([0, 1] * 40)
    stream = CloneStream(seq, (seq, seq))
    model = fit_markov([stream], 1, 1e-9, ab)
    p = np.exp(model.next_logprobs(model.start_context((0, 1, 0))))
    assert p[1] > 0.999


def test_markov_trained_transition_probability():
    # token 2 always follows token 1; >= 1000 observations, lambda = 1e-3
    ab = Alphabet(3)
    rng = np.random.default_rng(5)
    streams = []
    for _ in range(300):
        toks = []
        while len(toks) < 19:
            if rng.random() < 0.5:
                toks.extend([1, 2])
            else:
                toks.append(int(rng.integers(0, 3) // 2 * 2))  # 0 or 2
        streams.append(CloneStream(tuple(toks)))
    model = fit_markov(streams, 1, 1e-3, ab)
    assert model.counts[(1,)].sum() >= 1000
    p = np.exp(model.next_logprobs(model.start_context((0, 1))))
    assert p[2] > 0.99


def test_markov_logprobs_normalized():
    ab = Alphabet(3)
    fams, _ = gen_synthetic_families(ab, 4, 0.5, 20, 4, np.random.default_rng(12))
    model = fit_markov(fams, 2, 1e-2, ab)
    state = model.start_context()
    for tok in fams[0].flat_tokens(ab):
        lp = model.next_logprobs(state)
        assert abs(np.logaddexp.reduce(lp)) < 1e-10
        model.extend(state, tok)


def test_markov_large_smoothing_is_uniform():
    ab = Alphabet(3)
    stream = CloneStream((0, 0, 0, 0))
    model = fit_markov([stream], 1, 1e9, ab)
    p = np.exp(model.next_logprobs(model.start_context((0,))))
    assert np.all(np.abs(p - 0.25) < 1e-3)


def test_fit_markov_validation():
    ab = Alphabet(3)
    with pytest.raises(ConfigError):
        fit_markov([], 1, 1e-3, ab)
    with pytest.raises(ConfigError):
        fit_markov([CloneStream((0,))], 99, 1e-3, ab)
    with pytest.raises(ConfigError):
        MarkovModel(ab, 1, 0.0)


def test_markov_order_one_beats_order_zero_on_structured_data():
    ab = Alphabet(3)
    rng = np.random.default_rng(6)
    # strongly sequential generator: next letter = (prev + 1) mod 3 with noise
    streams = []
    for _ in range(60):
        toks = [int(rng.integers(0, 3))]
        for _ in range(14):
            toks.append((toks[-1] + 1) % 3 if rng.random() < 0.9 else int(rng.integers(0, 3)))
        streams.append(CloneStream(tuple(toks)))
    train, test = streams[:40], streams[40:]
    pp0 = perplexity(fit_markov(train, 0, 1e-2, ab), test)
    pp1 = perplexity(fit_markov(train, 1, 1e-2, ab), test)
    assert np.isfinite(pp0) and np.isfinite(pp1)
    assert pp1 < pp0


def test_markov_corpus_sequences_beat_shuffles():
    ab = Alphabet(3)
    rng = np.random.default_rng(7)
    fams, _ = gen_synthetic_families(ab, 5, 0.3, 60, 5, rng)
    model = fit_markov(fams[:40], 1, 1e-2, ab)
    diffs = []
    for fam in fams[40:]:
        for member in fam.members[:2]:
            lp = sequence_logprob(model, CloneStream(fam.seed), member)
            shuffled = tuple(rng.permutation(list(member)))
            lp_s = sequence_logprob(model, CloneStream(fam.seed), shuffled)
            diffs.append(lp - lp_s)
    assert len(diffs) >= 40
    assert np.mean(diffs) > 0


# ---------------------------------------------------------------------------
# Synthetic family generation
# ---------------------------------------------------------------------------


def test_gen_families_degenerate_latent():
    ab = Alphabet(3)
    alpha = np.full((4, 3), 1e-3)
    alpha[:, 1] = 1e6
    fams, latents = gen_synthetic_families(ab, 4, alpha, 5, 4, np.random.default_rng(8))
    for fam, theta in zip(fams, latents):
        assert fam.seed == (1, 1, 1, 1)
        assert all(m == (1, 1, 1, 1) for m in fam.members)
        assert theta.shape == (4, 3)


def test_gen_families_uniform_limit_varies():
    ab = Alphabet(3)
    fams, _ = gen_synthetic_families(ab, 6, 1e6, 10, 6, np.random.default_rng(9))
    distinct = {m for fam in fams for m in fam.members}
    assert len(distinct) > 10


def test_gen_families_within_family_closer_than_between():
    ab = Alphabet(4)
    fams, _ = gen_synthetic_families(ab, 8, 0.5, 20, 5, np.random.default_rng(10))
    within, between = [], []
    for fam in fams:
        seqs = [fam.seed, *fam.members]
        for i in range(len(seqs)):
            for j in range(i + 1, len(seqs)):
                within.append(hamming_distance(seqs[i], seqs[j]))
    for i in range(len(fams)):
        for j in range(i + 1, len(fams)):
            between.append(hamming_distance(fams[i].seed, fams[j].seed))
    assert np.mean(within) < np.mean(between)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def test_model_json_roundtrip(tmp_path):
    ab = Alphabet(3)
    conj = ConjugateModel(ab, 3, np.array([0.3, 0.5, 0.9]))
    path = str(tmp_path / "conj.json")
    save_model(conj, path)
    loaded = load_model(path)
    assert isinstance(loaded, ConjugateModel)
    assert np.array_equal(loaded.alpha, conj.alpha)

    fams, _ = gen_synthetic_families(ab, 3, 0.5, 10, 3, np.random.default_rng(11))
    mk = fit_markov(fams, 2, 1e-2, ab)
    path2 = str(tmp_path / "markov.json")
    save_model(mk, path2)
    loaded2 = load_model(path2)
    ctx = fams[0].flat_tokens(ab)[:5]
    assert np.array_equal(
        next_token_logprobs(mk, ctx), next_token_logprobs(loaded2, ctx)
    )


def test_model_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(MalformedInputError) as e:
        load_model(str(bad))
    assert "line" in str(e.value)
    notmodel = tmp_path / "x.json"
    notmodel.write_text('{"format": "other"}', encoding="utf-8")
    with pytest.raises(MalformedInputError):
        load_model(str(notmodel))


def test_sequence_and_corpus_files_roundtrip(tmp_path):
    ab = Alphabet(4, "ACGT")
    seqs = [(0, 1, 2), (3, 3, 3), (2,)]
    spath = str(tmp_path / "seqs.txt")
    write_sequences(spath, ab, seqs)
    assert read_sequences(spath, ab) == seqs

    streams = [
        CloneStream((0, 1), ((2, 3), (1, 1))),
        CloneStream((3, 2, 1), ()),
    ]
    cpath = str(tmp_path / "corpus.txt")
    write_corpus(cpath, ab, streams)
    assert read_corpus(cpath, ab) == streams
