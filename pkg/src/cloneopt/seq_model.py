"""Sequence/clone data model and autoregressive clone models.

A clone stream is a seed sequence followed by family members, flat-encoded
as ``seed sep X1 sep ... XM sep`` over an integer alphabet whose separator
token id equals the alphabet size.  Two concrete models implement the
next-token interface: an exactly solvable per-position Dirichlet-categorical
model (fixed sequence length, closed-form predictives, exchangeable) and a
trainable order-k Markov model over flat encodings (variable length).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence as SequenceABC

import numpy as np

from .errors import ConfigError, DegenerateContextError, MalformedInputError

Sequence = tuple[int, ...]

MODEL_FORMAT = "cloneopt-model"
MODEL_VERSION = 1
MAX_MARKOV_ORDER = 8


@dataclass(frozen=True)
class Alphabet:
    """Letter ids 0..size-1 plus a separator token with id == size."""

    size: int
    chars: str | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ConfigError(f"alphabet size must be >= 2, got {self.size}")
        if self.chars is not None:
            if len(self.chars) != self.size:
                raise ConfigError(
                    f"alphabet char map has {len(self.chars)} chars, expected {self.size}"
                )
            if len(set(self.chars)) != self.size or any(c.isspace() for c in self.chars):
                raise ConfigError("alphabet char map must be unique non-whitespace chars")

    @property
    def separator(self) -> int:
        return self.size

    @property
    def n_tokens(self) -> int:
        return self.size + 1

    def validate_sequence(self, seq: SequenceABC[int]) -> Sequence:
        seq = tuple(int(t) for t in seq)
        if len(seq) < 1:
            raise MalformedInputError("sequence must have at least one letter")
        for i, t in enumerate(seq):
            if not 0 <= t < self.size:
                raise MalformedInputError(f"token {t} at position {i} outside alphabet of size {self.size}")
        return seq

    def format_sequence(self, seq: Sequence) -> str:
        if self.chars is not None:
            return "".join(self.chars[t] for t in seq)
        return " ".join(str(t) for t in seq)

    def parse_sequence(self, text: str, where: str = "") -> Sequence:
        prefix = f"{where}: " if where else ""
        text = text.strip()
        if not text:
            raise MalformedInputError(prefix + "empty sequence")
        if self.chars is not None:
            toks = []
            for col, c in enumerate(text):
                idx = self.chars.find(c)
                if idx < 0:
                    raise MalformedInputError(prefix + f"column {col + 1}: unknown letter {c!r}")
                toks.append(idx)
        else:
            toks = []
            for col, part in enumerate(text.split()):
                try:
                    toks.append(int(part))
                except ValueError:
                    raise MalformedInputError(prefix + f"field {col + 1}: not an integer: {part!r}") from None
        try:
            return self.validate_sequence(toks)
        except MalformedInputError as e:
            raise MalformedInputError(prefix + str(e)) from None


AMINO_ACIDS = Alphabet(20, "ACDEFGHIKLMNPQRSTVWY")


@dataclass(frozen=True)
class CloneStream:
    """A seed sequence with an ordered family of member sequences."""

    seed: Sequence
    members: tuple[Sequence, ...] = ()

    @property
    def n_members(self) -> int:
        return len(self.members)

    def flat_tokens(self, alphabet: Alphabet) -> tuple[int, ...]:
        sep = (alphabet.separator,)
        out: tuple[int, ...] = tuple(self.seed) + sep
        for m in self.members:
            out += tuple(m) + sep
        return out

    def with_member(self, member: Sequence) -> "CloneStream":
        return CloneStream(self.seed, self.members + (tuple(member),))


def decode_stream(alphabet: Alphabet, tokens: SequenceABC[int]) -> CloneStream:
    """Decode a complete flat encoding back into a CloneStream (round-trip inverse)."""
    seqs: list[Sequence] = []
    cur: list[int] = []
    for i, t in enumerate(tokens):
        t = int(t)
        if t == alphabet.separator:
            if not cur:
                raise MalformedInputError(f"empty sequence before separator at token {i}")
            seqs.append(tuple(cur))
            cur = []
        elif 0 <= t < alphabet.size:
            cur.append(t)
        else:
            raise MalformedInputError(f"token {t} at index {i} outside alphabet")
    if cur:
        raise MalformedInputError("flat stream does not end with a separator")
    if not seqs:
        raise MalformedInputError("flat stream contains no sequences")
    return CloneStream(seqs[0], tuple(seqs[1:]))


def hamming_distance(a: Sequence, b: Sequence) -> int:
    if len(a) != len(b):
        raise MalformedInputError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(1 for x, y in zip(a, b) if x != y)


# ---------------------------------------------------------------------------
# Clone models
# ---------------------------------------------------------------------------


class CloneModel:
    """Autoregressive model over flat clone streams.

    Subclasses provide ``start_context`` / ``next_logprobs`` /
    ``twist_logprobs`` and may override the batch helpers with vectorized
    paths.  Evaluation is deterministic and read-only after construction.
    """

    kind: str = ""
    alphabet: Alphabet
    fixed_length: int | None = None

    def start_context(self, tokens: SequenceABC[int] = ()):
        raise NotImplementedError

    def extend(self, state, token: int) -> None:
        raise NotImplementedError

    def next_logprobs(self, state) -> np.ndarray:
        raise NotImplementedError

    def twist_logprobs(self, state, measured: Sequence) -> np.ndarray:
        """Next-token log-probs with ``measured`` inserted as an extra complete
        member just before the in-progress sequence."""
        raise NotImplementedError

    def batch_logprobs(self, states: list) -> np.ndarray:
        return np.stack([self.next_logprobs(s) for s in states])

    def batch_twist_contributions(self, states: list, measured_seqs: list[Sequence]) -> np.ndarray:
        """(D, N, A+1) matrix of twist-minus-base log-prob gaps per candidate token.

        Entries where the base probability is zero are set to 0 so that
        impossible tokens carry no contribution.
        """
        d = len(states)
        n = len(measured_seqs)
        out = np.zeros((d, n, self.alphabet.n_tokens))
        for i, state in enumerate(states):
            base = self.next_logprobs(state)
            ok = np.isfinite(base)
            for j, meas in enumerate(measured_seqs):
                tw = self.twist_logprobs(state, meas)
                out[i, j, ok] = tw[ok] - base[ok]
        return out

    def batch_member_logprobs(self, states: list, measured_seqs: list[Sequence]) -> np.ndarray:
        """(D, N) log-probability of each measured sequence as the next member."""
        out = np.empty((len(states), len(measured_seqs)))
        sep = self.alphabet.separator
        for i, state in enumerate(states):
            for j, meas in enumerate(measured_seqs):
                s = state.copy()
                lp = 0.0
                for t in meas:
                    lp += self.next_logprobs(s)[t]
                    self.extend(s, t)
                lp += self.next_logprobs(s)[sep]
                out[i, j] = lp
        return out

    def params_json(self) -> dict:
        raise NotImplementedError


class _ConjugateContext:
    """Per-position letter counts of completed sequences plus the current
    within-sequence position."""

    __slots__ = ("counts", "n_complete", "pos")

    def __init__(self, counts: np.ndarray, n_complete: int, pos: int):
        self.counts = counts
        self.n_complete = n_complete
        self.pos = pos

    def copy(self) -> "_ConjugateContext":
        return _ConjugateContext(self.counts.copy(), self.n_complete, self.pos)


class ConjugateModel(CloneModel):
    """Per-position Dirichlet-categorical model with fixed sequence length.

    Members are iid given a latent per-position categorical; the predictive
    for the next letter at position l is (alpha[l] + counts[l]) normalized.
    The separator is emitted with probability 1 at position L and 0 before,
    so every member has exactly ``length`` letters.  The model is
    exchangeable in its members, which makes posterior enumeration and the
    letter-contribution telescoping identity exact.
    """

    kind = "conjugate"

    def __init__(self, alphabet: Alphabet, length: int, alpha):
        if length < 1:
            raise ConfigError(f"length must be >= 1, got {length}")
        self.alphabet = alphabet
        self.length = int(length)
        self.fixed_length = self.length
        mat = np.asarray(alpha, dtype=float)
        if mat.ndim == 0:
            mat = np.full((self.length, alphabet.size), float(mat))
        elif mat.ndim == 1:
            if mat.shape[0] != alphabet.size:
                raise ConfigError(f"alpha vector must have length {alphabet.size}")
            mat = np.tile(mat, (self.length, 1))
        elif mat.shape != (self.length, alphabet.size):
            raise ConfigError(f"alpha matrix must be ({self.length}, {alphabet.size})")
        if not np.all(mat > 0):
            raise ConfigError("all alpha entries must be > 0")
        self.alpha = mat
        self._alpha0 = mat.sum(axis=1)

    def start_context(self, tokens: SequenceABC[int] = ()) -> _ConjugateContext:
        state = _ConjugateContext(np.zeros((self.length, self.alphabet.size)), 0, 0)
        for t in tokens:
            self.extend(state, int(t))
        return state

    def extend(self, state: _ConjugateContext, token: int) -> None:
        if token == self.alphabet.separator:
            if state.pos != self.length:
                raise MalformedInputError(
                    f"separator at position {state.pos}, expected length {self.length}"
                )
            state.n_complete += 1
            state.pos = 0
        elif 0 <= token < self.alphabet.size:
            if state.pos >= self.length:
                raise MalformedInputError(f"sequence longer than fixed length {self.length}")
            state.counts[state.pos, token] += 1.0
            state.pos += 1
        else:
            raise MalformedInputError(f"token {token} outside alphabet")

    def next_logprobs(self, state: _ConjugateContext) -> np.ndarray:
        out = np.full(self.alphabet.n_tokens, -np.inf)
        if state.pos == self.length:
            out[self.alphabet.separator] = 0.0
            return out
        l = state.pos
        num = self.alpha[l] + state.counts[l]
        out[: self.alphabet.size] = np.log(num) - math.log(self._alpha0[l] + state.n_complete)
        return out

    def twist_logprobs(self, state: _ConjugateContext, measured: Sequence) -> np.ndarray:
        self._check_member(measured)
        out = np.full(self.alphabet.n_tokens, -np.inf)
        if state.pos == self.length:
            out[self.alphabet.separator] = 0.0
            return out
        l = state.pos
        num = self.alpha[l] + state.counts[l]
        num = num.copy()
        num[measured[l]] += 1.0
        out[: self.alphabet.size] = np.log(num) - math.log(self._alpha0[l] + state.n_complete + 1)
        return out

    # Vectorized paths used by the SMC inner loop; all states must sit at the
    # same within-sequence position (lockstep generation guarantees this).
    def batch_logprobs(self, states: list[_ConjugateContext]) -> np.ndarray:
        pos = states[0].pos
        if any(s.pos != pos for s in states):
            return super().batch_logprobs(states)
        d = len(states)
        out = np.full((d, self.alphabet.n_tokens), -np.inf)
        if pos == self.length:
            out[:, self.alphabet.separator] = 0.0
            return out
        counts = np.stack([s.counts[pos] for s in states])
        n_comp = np.array([s.n_complete for s in states], dtype=float)
        out[:, : self.alphabet.size] = np.log(self.alpha[pos] + counts) - np.log(
            self._alpha0[pos] + n_comp
        )[:, None]
        return out

    def batch_twist_contributions(
        self, states: list[_ConjugateContext], measured_seqs: list[Sequence]
    ) -> np.ndarray:
        pos = states[0].pos
        if any(s.pos != pos for s in states):
            return super().batch_twist_contributions(states, measured_seqs)
        d, n = len(states), len(measured_seqs)
        a = self.alphabet.size
        out = np.zeros((d, n, a + 1))
        if pos == self.length or n == 0:
            return out
        counts = np.stack([s.counts[pos] for s in states])          # (D, A)
        n_comp = np.array([s.n_complete for s in states], dtype=float)
        num = self.alpha[pos] + counts                              # (D, A)
        meas_letters = np.array([m[pos] for m in measured_seqs])    # (N,)
        bump = (meas_letters[None, :, None] == np.arange(a)[None, None, :]).astype(float)
        gap = np.log(num[:, None, :] + bump) - np.log(num[:, None, :])
        gap += (np.log(self._alpha0[pos] + n_comp) - np.log(self._alpha0[pos] + n_comp + 1.0))[
            :, None, None
        ]
        out[:, :, :a] = gap
        return out

    def batch_member_logprobs(
        self, states: list[_ConjugateContext], measured_seqs: list[Sequence]
    ) -> np.ndarray:
        for s in states:
            if s.pos != 0:
                raise MalformedInputError("member logprob requires a context at a member boundary")
        for m in measured_seqs:
            self._check_member(m)
        counts = np.stack([s.counts for s in states])               # (D, L, A)
        n_comp = np.array([s.n_complete for s in states], dtype=float)
        meas = np.array(measured_seqs)                              # (N, L)
        num = np.log(self.alpha[None] + counts)                     # (D, L, A)
        pos = np.arange(self.length)
        gathered = num[:, pos[None, :], meas]                       # (D, N, L)
        denom = np.log(self._alpha0[None] + n_comp[:, None]).sum(axis=1)  # (D,)
        return gathered.sum(axis=2) - denom[:, None]

    def predictive_matrix(self, state: _ConjugateContext) -> np.ndarray:
        """(L, A) next-member letter predictive at every position."""
        num = self.alpha + state.counts
        return num / (self._alpha0 + state.n_complete)[:, None]

    def _check_member(self, seq: Sequence) -> None:
        if len(seq) != self.length:
            raise MalformedInputError(
                f"sequence length {len(seq)} does not match model length {self.length}"
            )

    def params_json(self) -> dict:
        return {"length": self.length, "alpha": self.alpha.tolist()}


class _MarkovContext:
    """Sliding window of the last k stream tokens plus the current partial
    member length (capped at k; only the comparison against k matters)."""

    __slots__ = ("window", "partial_len")

    def __init__(self, window: tuple[int, ...], partial_len: int):
        self.window = window
        self.partial_len = partial_len

    def copy(self) -> "_MarkovContext":
        return _MarkovContext(self.window, self.partial_len)


class MarkovModel(CloneModel):
    """Order-k Markov model over flat encodings with additive smoothing.

    Streams are treated as if preceded by separator tokens, so contexts at
    the start of a stream are well defined.  The separator is an ordinary
    token, which gives variable-length members.
    """

    kind = "markov"

    def __init__(self, alphabet: Alphabet, order: int, smoothing: float,
                 counts: dict[tuple[int, ...], np.ndarray] | None = None):
        if order < 0:
            raise ConfigError(f"order must be >= 0, got {order}")
        if order > MAX_MARKOV_ORDER:
            raise ConfigError(f"order {order} exceeds bound {MAX_MARKOV_ORDER}")
        if smoothing <= 0:
            raise ConfigError(f"smoothing must be > 0, got {smoothing}")
        self.alphabet = alphabet
        self.order = int(order)
        self.smoothing = float(smoothing)
        self.counts = counts if counts is not None else {}
        self._zero = np.zeros(alphabet.n_tokens)

    def start_context(self, tokens: SequenceABC[int] = ()) -> _MarkovContext:
        state = _MarkovContext((self.alphabet.separator,) * self.order, 0)
        for t in tokens:
            self.extend(state, int(t))
        return state

    def extend(self, state: _MarkovContext, token: int) -> None:
        if not 0 <= token <= self.alphabet.separator:
            raise MalformedInputError(f"token {token} outside alphabet")
        if self.order > 0:
            state.window = (state.window + (token,))[-self.order:]
        if token == self.alphabet.separator:
            state.partial_len = 0
        else:
            state.partial_len = min(state.partial_len + 1, self.order + 1)

    def _logprobs_for_window(self, window: tuple[int, ...]) -> np.ndarray:
        c = self.counts.get(window, self._zero)
        tot = c.sum() + self.smoothing * self.alphabet.n_tokens
        return np.log(c + self.smoothing) - math.log(tot)

    def next_logprobs(self, state: _MarkovContext) -> np.ndarray:
        return self._logprobs_for_window(state.window)

    def twist_logprobs(self, state: _MarkovContext, measured: Sequence) -> np.ndarray:
        k = self.order
        if k == 0 or state.partial_len >= k:
            # The inserted member has scrolled out of the context window.
            return self._logprobs_for_window(state.window)
        part = state.window[k - state.partial_len:] if state.partial_len else ()
        pre = state.window[: k - state.partial_len]
        window = (pre + tuple(measured) + (self.alphabet.separator,) + part)[-k:]
        return self._logprobs_for_window(window)

    def params_json(self) -> dict:
        return {
            "order": self.order,
            "smoothing": self.smoothing,
            "counts": {
                " ".join(str(t) for t in ctx): c.tolist() for ctx, c in sorted(self.counts.items())
            },
        }


# ---------------------------------------------------------------------------
# Model-level operations
# ---------------------------------------------------------------------------


def next_token_logprobs(model: CloneModel, context_tokens: SequenceABC[int]) -> np.ndarray:
    """Log-probability vector over letters + separator after a flat prefix."""
    return model.next_logprobs(model.start_context(context_tokens))


def sequence_logprob(model: CloneModel, context: CloneStream, x: Sequence) -> float:
    """Chain-rule log-probability of x as the next member after the context.

    Includes the terminating separator term, which is exactly 0 for
    fixed-length models.
    """
    if model.fixed_length is not None and len(x) != model.fixed_length:
        raise MalformedInputError(
            f"sequence length {len(x)} does not match model length {model.fixed_length}"
        )
    state = model.start_context(context.flat_tokens(model.alphabet))
    lp = 0.0
    for t in x:
        lp += float(model.next_logprobs(state)[t])
        model.extend(state, t)
    lp += float(model.next_logprobs(state)[model.alphabet.separator])
    return lp


def _sample_token(logprobs: np.ndarray, rng: np.random.Generator) -> int:
    probs = np.exp(logprobs)
    total = probs.sum()
    if total <= 0:
        raise DegenerateContextError("no candidate token has positive probability")
    return int(rng.choice(len(probs), p=probs / total))


def sample_clone(
    model: CloneModel,
    x0: Sequence,
    m: int,
    rng: np.random.Generator,
    max_len: int | None = None,
    truncation_log: list | None = None,
) -> CloneStream:
    """Ancestrally sample a clone of m members seeded at x0.

    Variable-length members that reach ``max_len`` (default 2 * len(x0))
    without a separator are force-terminated; each such event is appended to
    ``truncation_log`` when given.
    """
    x0 = model.alphabet.validate_sequence(x0)
    if m < 0:
        raise ConfigError(f"member count must be >= 0, got {m}")
    if max_len is None:
        max_len = 2 * len(x0)
    sep = model.alphabet.separator
    state = model.start_context(CloneStream(x0).flat_tokens(model.alphabet))
    members: list[Sequence] = []
    for idx in range(m):
        cur: list[int] = []
        while True:
            logprobs = model.next_logprobs(state)
            if not cur and model.fixed_length is None:
                # Members must be non-empty: no separator as the first token.
                logprobs = logprobs.copy()
                logprobs[sep] = -np.inf
            tok = _sample_token(logprobs, rng)
            if tok == sep:
                model.extend(state, tok)
                break
            cur.append(tok)
            model.extend(state, tok)
            if model.fixed_length is None and len(cur) >= max_len:
                model.extend(state, sep)
                if truncation_log is not None:
                    truncation_log.append({"member": idx, "length": len(cur)})
                break
        members.append(tuple(cur))
    return CloneStream(x0, tuple(members))


def fit_markov(
    corpus: list[CloneStream], k: int, smoothing: float, alphabet: Alphabet
) -> MarkovModel:
    """Count-table training of an order-k Markov model on flat encodings."""
    if not corpus:
        raise ConfigError("corpus must be non-empty")
    model = MarkovModel(alphabet, k, smoothing)
    sep = alphabet.separator
    for stream in corpus:
        tokens = stream.flat_tokens(alphabet)
        padded = (sep,) * k + tokens
        for i, nxt in enumerate(tokens):
            ctx = padded[i: i + k]
            row = model.counts.get(ctx)
            if row is None:
                row = np.zeros(alphabet.n_tokens)
                model.counts[ctx] = row
            row[nxt] += 1.0
    return model


def perplexity(model: CloneModel, streams: Iterable[CloneStream]) -> float:
    """Per-token perplexity of flat encodings (letters and separators)."""
    nll = 0.0
    n_tok = 0
    for stream in streams:
        state = model.start_context()
        for t in stream.flat_tokens(model.alphabet):
            nll -= float(model.next_logprobs(state)[t])
            model.extend(state, t)
            n_tok += 1
    if n_tok == 0:
        raise ConfigError("no tokens to evaluate")
    return math.exp(nll / n_tok)


def gen_synthetic_families(
    alphabet: Alphabet,
    length: int,
    alpha,
    n_families: int,
    members_per_family: int,
    rng: np.random.Generator,
) -> tuple[list[CloneStream], list[np.ndarray]]:
    """Draw families from the latent-categorical generative process.

    Each family draws a per-position categorical theta ~ Dirichlet(alpha),
    then a seed plus ``members_per_family`` members iid from theta.  Returns
    the streams and the hidden thetas for oracle use.
    """
    proto = ConjugateModel(alphabet, length, alpha)  # reuses alpha validation
    families: list[CloneStream] = []
    latents: list[np.ndarray] = []
    for _ in range(n_families):
        theta = np.stack([rng.dirichlet(proto.alpha[l]) for l in range(length)])
        n_seqs = members_per_family + 1
        draws = np.stack(
            [rng.choice(alphabet.size, size=n_seqs, p=theta[l]) for l in range(length)],
            axis=1,
        )
        seqs = [tuple(int(t) for t in row) for row in draws]
        families.append(CloneStream(seqs[0], tuple(seqs[1:])))
        latents.append(theta)
    return families, latents


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_model(model: CloneModel, path: str) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "alphabet": {"size": model.alphabet.size, "chars": model.alphabet.chars},
        "params": model.params_json(),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    os.replace(tmp, path)


def load_model(path: str) -> CloneModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedInputError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise MalformedInputError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise MalformedInputError(f"{path}: unsupported version {doc.get('version')}")
    alphabet = Alphabet(doc["alphabet"]["size"], doc["alphabet"].get("chars"))
    params = doc["params"]
    if doc["kind"] == "conjugate":
        return ConjugateModel(alphabet, params["length"], np.asarray(params["alpha"]))
    if doc["kind"] == "markov":
        counts = {
            tuple(int(t) for t in ctx.split()) if ctx else (): np.asarray(row, dtype=float)
            for ctx, row in params["counts"].items()
        }
        return MarkovModel(alphabet, params["order"], params["smoothing"], counts)
    raise MalformedInputError(f"{path}: unknown model kind {doc['kind']!r}")


def write_sequences(path: str, alphabet: Alphabet, seqs: Iterable[Sequence]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for s in seqs:
            f.write(alphabet.format_sequence(s) + "\n")
    os.replace(tmp, path)


def read_sequences(path: str, alphabet: Alphabet) -> list[Sequence]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                out.append(alphabet.parse_sequence(line, where=f"{path}: line {lineno}"))
    return out


def write_corpus(path: str, alphabet: Alphabet, streams: Iterable[CloneStream]) -> None:
    """Families separated by blank lines; the first line of a block is the seed."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        first = True
        for stream in streams:
            if not first:
                f.write("\n")
            first = False
            f.write(alphabet.format_sequence(stream.seed) + "\n")
            for m in stream.members:
                f.write(alphabet.format_sequence(m) + "\n")
    os.replace(tmp, path)


def read_corpus(path: str, alphabet: Alphabet) -> list[CloneStream]:
    streams: list[CloneStream] = []
    block: list[Sequence] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                if block:
                    streams.append(CloneStream(block[0], tuple(block[1:])))
                    block = []
                continue
            block.append(alphabet.parse_sequence(line, where=f"{path}: line {lineno}"))
    if block:
        streams.append(CloneStream(block[0], tuple(block[1:])))
    return streams
