"""Thompson-sampling optimization loop over substitution neighborhoods.

Each step draws a fitness function from the clone posterior conditioned on
the most informative measurements, hill-climbs it from the top-scoring pool
entries one substitution at a time, and proposes the best unmeasured
candidate.  Naive greedy-mutation and genetic baselines share the pool and
trajectory plumbing, as does a synthetic oracle built from a hidden
per-position categorical.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ExhaustedSearchError, MalformedInputError
from .likelihood import LikelihoodParams
from .posterior import FitnessSample, sample_fitness_posterior
from .seq_model import Alphabet, CloneModel, CloneStream, Sequence
from .twisted_smc import ConditioningSet, SmcConfig


@dataclass(frozen=True)
class BoConfig:
    alphabet: Alphabet
    top_k: int = 4
    max_substitutions: int = 3
    n_cond_max: int = 75
    budget: int = 1
    smc: SmcConfig = field(default_factory=SmcConfig)
    likelihood: LikelihoodParams = field(default_factory=LikelihoodParams)
    mask: frozenset[int] | None = None
    greedy_retry_cap: int = 1000
    genetic_mutation_prob: float = 0.5

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.max_substitutions < 0:
            raise ConfigError(f"max_substitutions must be >= 0, got {self.max_substitutions}")
        if self.n_cond_max < 1:
            raise ConfigError(f"n_cond_max must be >= 1, got {self.n_cond_max}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")

    def positions(self, length: int) -> list[int]:
        if self.mask is None:
            return list(range(length))
        bad = [p for p in self.mask if not 0 <= p < length]
        if bad:
            raise ConfigError(f"mask positions {bad} outside sequence length {length}")
        return sorted(self.mask)


@dataclass
class PoolEntry:
    sequence: Sequence
    y: float
    y_norm: float


class MeasurementPool:
    """Measured sequences with a normalization frozen at initialization.

    Normalized values use the population mean/std of the initial entries
    (std 0 falls back to 1); later additions reuse the frozen transform.
    Entries are deduplicated by sequence.
    """

    def __init__(self, start_mean: float, start_std: float):
        self.start_mean = start_mean
        self.start_std = start_std
        self.entries: list[PoolEntry] = []
        self._index: dict[Sequence, int] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, seq) -> bool:
        return tuple(seq) in self._index

    def add(self, seq: Sequence, y: float) -> PoolEntry:
        seq = tuple(int(t) for t in seq)
        if seq in self._index:
            raise ConfigError("sequence already measured")
        entry = PoolEntry(seq, float(y), (float(y) - self.start_mean) / self.start_std)
        self._index[seq] = len(self.entries)
        self.entries.append(entry)
        return entry

    def top_entries(self, k: int) -> list[PoolEntry]:
        """Top-k by normalized value; ties keep insertion order."""
        order = sorted(
            range(len(self.entries)), key=lambda i: (-self.entries[i].y_norm, i)
        )
        return [self.entries[i] for i in order[:k]]

    def best_y(self) -> float:
        return max(e.y for e in self.entries)


def normalize_pool(raw_pairs) -> MeasurementPool:
    """Build a pool from (sequence, y) pairs, freezing the normalization."""
    pairs = [(tuple(int(t) for t in s), float(y)) for s, y in raw_pairs]
    seen = set()
    deduped = []
    for s, y in pairs:
        if s not in seen:
            seen.add(s)
            deduped.append((s, y))
    if not deduped:
        raise ConfigError("pool must have at least one entry")
    ys = np.array([y for _, y in deduped])
    mean = float(ys.mean())
    std = float(ys.std())
    pool = MeasurementPool(mean, std if std > 0 else 1.0)
    for s, y in deduped:
        pool.add(s, y)
    return pool


def select_conditioning_subset(
    model: CloneModel, x0: Sequence, pool: MeasurementPool, n_cond_max: int
) -> ConditioningSet:
    """Keep the measurements most likely to share a clone with x0.

    Scores each measured sequence by its next-member log-probability given a
    family holding only x0; ties break by insertion order.  The measured copy
    of x0, when present, is always kept.
    """
    x0 = tuple(int(t) for t in x0)
    seqs = [e.sequence for e in pool.entries]
    state = model.start_context(CloneStream(x0).flat_tokens(model.alphabet))
    scores = model.batch_member_logprobs([state], seqs)[0]
    order = sorted(range(len(seqs)), key=lambda i: (-scores[i], i))
    chosen = order[:n_cond_max]
    if x0 in pool:
        x0_idx = pool._index[x0]
        if x0_idx not in chosen:
            chosen = [x0_idx] + chosen[: n_cond_max - 1]
    return ConditioningSet(
        [pool.entries[i].sequence for i in chosen],
        [pool.entries[i].y_norm for i in chosen],
    )


@dataclass
class Proposal:
    sequence: Sequence
    seed: Sequence | None
    fitness: float | None = None


def _substitutions(seq: Sequence, positions, alphabet_size: int):
    """All single substitutions at the given positions, in canonical order."""
    for pos in positions:
        for letter in range(alphabet_size):
            if letter != seq[pos]:
                yield seq[:pos] + (letter,) + seq[pos + 1:]


def _hill_climb(fitness: FitnessSample, seed: Sequence, positions, config: BoConfig):
    """Greedy best-substitution ascent; strict improvements only.

    Returns every evaluated candidate (including the seed) with its fitness,
    in evaluation order.
    """
    evaluated: dict[Sequence, float] = {}
    current = seed
    f_current = fitness.evaluate(seed)
    evaluated[seed] = f_current
    # Rounds may revisit positions, so every candidate stays within
    # max_substitutions of the seed by construction.
    for _ in range(config.max_substitutions):
        neighbors = list(_substitutions(current, positions, config.alphabet.size))
        if not neighbors:
            break
        values = fitness.evaluate_many(neighbors)
        for s, v in zip(neighbors, values):
            if s not in evaluated:
                evaluated[s] = float(v)
        best_idx = int(np.argmax(values))
        if values[best_idx] > f_current:
            current = neighbors[best_idx]
            f_current = float(values[best_idx])
        else:
            break
    return evaluated


def propose_thompson(
    model: CloneModel,
    pool: MeasurementPool,
    config: BoConfig,
    rng: np.random.Generator,
) -> Proposal:
    """One Thompson-sampling proposal.

    Draws a posterior fitness function conditioned around a random top-k
    entry, hill-climbs it from every top-k seed, and returns the best
    unmeasured candidate seen.  Falls back to the best unmeasured single
    substitution of the top seed, then to a canonical scan of the remaining
    reachable set.
    """
    if len(pool) < 1:
        raise ConfigError("pool must have at least one entry")
    seeds = pool.top_entries(config.top_k)
    x0 = seeds[int(rng.integers(len(seeds)))].sequence
    cond = select_conditioning_subset(model, x0, pool, config.n_cond_max)
    fitness = sample_fitness_posterior(
        model, x0, cond, config.smc, config.likelihood, rng
    )
    positions = config.positions(len(x0))

    evaluated: dict[Sequence, float] = {}
    origin: dict[Sequence, Sequence] = {}
    for entry in seeds:
        for cand, f in _hill_climb(fitness, entry.sequence, positions, config).items():
            if cand not in evaluated:
                evaluated[cand] = f
                origin[cand] = entry.sequence

    best: Sequence | None = None
    best_f = -np.inf
    for cand, f in evaluated.items():
        if cand not in pool and f > best_f:
            best, best_f = cand, f
    if best is not None:
        return Proposal(best, origin[best], best_f)

    # Every evaluated candidate is measured: best unmeasured single
    # substitution of the top seed.
    top_seed = seeds[0].sequence
    neighbors = [s for s in _substitutions(top_seed, positions, config.alphabet.size)
                 if s not in pool]
    if neighbors:
        values = fitness.evaluate_many(neighbors)
        idx = int(np.argmax(values))
        return Proposal(neighbors[idx], top_seed, float(values[idx]))

    # Canonical scan of the rest of the reachable set (distance 2..L around
    # each seed); first unmeasured candidate wins.
    for dist in range(2, config.max_substitutions + 1):
        for entry in seeds:
            seq = entry.sequence
            for pos_combo in itertools.combinations(positions, dist):
                letter_choices = [
                    [a for a in range(config.alphabet.size) if a != seq[p]]
                    for p in pos_combo
                ]
                for letters in itertools.product(*letter_choices):
                    cand = list(seq)
                    for p, a in zip(pos_combo, letters):
                        cand[p] = a
                    cand = tuple(cand)
                    if cand not in pool:
                        return Proposal(cand, seq, fitness.evaluate(cand))
    raise ExhaustedSearchError("all reachable candidates are already measured")


def propose_greedy(
    pool: MeasurementPool, config: BoConfig, rng: np.random.Generator
) -> Proposal:
    """Random single substitution of a random top-k entry."""
    if len(pool) < 1:
        raise ConfigError("pool must have at least one entry")
    seeds = pool.top_entries(config.top_k)
    for _ in range(config.greedy_retry_cap):
        seed = seeds[int(rng.integers(len(seeds)))].sequence
        positions = config.positions(len(seed))
        pos = positions[int(rng.integers(len(positions)))]
        letters = [a for a in range(config.alphabet.size) if a != seed[pos]]
        letter = letters[int(rng.integers(len(letters)))]
        cand = seed[:pos] + (letter,) + seed[pos + 1:]
        if cand not in pool:
            return Proposal(cand, seed)
    raise ExhaustedSearchError(
        f"no unmeasured single substitution found in {config.greedy_retry_cap} tries"
    )


def uniform_crossover(a: Sequence, b: Sequence, rng: np.random.Generator) -> Sequence:
    if len(a) != len(b):
        raise MalformedInputError(f"parent length mismatch: {len(a)} vs {len(b)}")
    picks = rng.integers(2, size=len(a))
    return tuple(a[i] if picks[i] == 0 else b[i] for i in range(len(a)))


def propose_genetic(
    pool: MeasurementPool, config: BoConfig, rng: np.random.Generator
) -> Proposal:
    """Tournament selection (size 2), uniform crossover, optional mutation."""
    if len(pool) < 2:
        raise ConfigError("genetic proposal needs a pool of at least 2")

    def tournament() -> PoolEntry:
        i, j = rng.integers(len(pool), size=2)
        a, b = pool.entries[int(i)], pool.entries[int(j)]
        return a if a.y_norm >= b.y_norm else b

    p1 = tournament()
    p2 = tournament()
    positions = config.positions(len(p1.sequence))
    for _ in range(config.greedy_retry_cap):
        child = uniform_crossover(p1.sequence, p2.sequence, rng)
        if rng.random() < config.genetic_mutation_prob:
            pos = positions[int(rng.integers(len(positions)))]
            letters = [a for a in range(config.alphabet.size) if a != child[pos]]
            letter = letters[int(rng.integers(len(letters)))]
            child = child[:pos] + (letter,) + child[pos + 1:]
        if child not in pool:
            seed = p1 if p1.y_norm >= p2.y_norm else p2
            return Proposal(child, seed.sequence)
    raise ExhaustedSearchError(
        f"no unmeasured child found in {config.greedy_retry_cap} tries"
    )


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def synthetic_oracle(theta: np.ndarray, x: Sequence) -> float:
    """Exact log-likelihood of x under a hidden per-position categorical."""
    theta = np.asarray(theta, dtype=float)
    if len(x) != theta.shape[0]:
        raise MalformedInputError(
            f"sequence length {len(x)} does not match latent length {theta.shape[0]}"
        )
    return float(sum(np.log(theta[l, t]) for l, t in enumerate(x)))


class LatentCloneOracle:
    """Synthetic clone-fitness objective: f(X) = log p(X | hidden latent)."""

    kind = "latent-clone-fitness"

    def __init__(self, theta: np.ndarray):
        self.theta = np.asarray(theta, dtype=float)
        if self.theta.ndim != 2 or not np.all(self.theta > 0):
            raise ConfigError("latent must be a positive (length, alphabet) matrix")
        self.theta = self.theta / self.theta.sum(axis=1, keepdims=True)

    def evaluate(self, x: Sequence) -> float:
        return synthetic_oracle(self.theta, x)

    def argmax_sequence(self) -> Sequence:
        return tuple(int(t) for t in self.theta.argmax(axis=1))

    def sample_sequence(self, rng: np.random.Generator) -> Sequence:
        return tuple(
            int(rng.choice(self.theta.shape[1], p=self.theta[l]))
            for l in range(self.theta.shape[0])
        )


class TableOracle:
    """Deterministic lookup oracle from a (sequence -> y) table."""

    kind = "user-supplied table"

    def __init__(self, table: dict[Sequence, float]):
        if not table:
            raise ConfigError("oracle table must be non-empty")
        self.table = {tuple(int(t) for t in s): float(y) for s, y in table.items()}

    def evaluate(self, x: Sequence) -> float:
        key = tuple(int(t) for t in x)
        if key not in self.table:
            raise ExhaustedSearchError(f"sequence not in oracle table: {key}")
        return self.table[key]


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------

METHODS = ("clonebo", "greedy", "genetic")


@dataclass
class TrajectoryRecord:
    step: int
    method: str
    replicate: int
    proposed: Sequence
    y: float
    best_so_far: float
    elapsed_ms: float
    seed_sequence: Sequence | None = None


@dataclass
class Trajectory:
    method: str
    replicate: int
    records: list[TrajectoryRecord] = field(default_factory=list)
    stop_reason: str | None = None

    def best_so_far(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])


def run_bo(
    oracle,
    initial_pool,
    method: str,
    config: BoConfig,
    rng: np.random.Generator,
    model: CloneModel | None = None,
    replicate: int = 0,
) -> Trajectory:
    """Propose/measure/append for ``config.budget`` steps.

    ``initial_pool`` is a list of (sequence, y) pairs.  The genetic method
    mutates greedily until the pool has two entries.  An exhausted search
    truncates the trajectory with a reason.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "clonebo" and model is None:
        raise ConfigError("clonebo needs a clone model")
    pool = normalize_pool(initial_pool)
    traj = Trajectory(method=method, replicate=replicate)
    best = pool.best_y()
    for step in range(1, config.budget + 1):
        t0 = time.perf_counter()
        try:
            if method == "clonebo":
                prop = propose_thompson(model, pool, config, rng)
            elif method == "greedy":
                prop = propose_greedy(pool, config, rng)
            else:
                if len(pool) < 2:
                    prop = propose_greedy(pool, config, rng)
                else:
                    prop = propose_genetic(pool, config, rng)
        except ExhaustedSearchError as e:
            traj.stop_reason = str(e)
            break
        y = float(oracle.evaluate(prop.sequence))
        pool.add(prop.sequence, y)
        best = max(best, y)
        traj.records.append(
            TrajectoryRecord(
                step=step,
                method=method,
                replicate=replicate,
                proposed=prop.sequence,
                y=y,
                best_so_far=best,
                elapsed_ms=(time.perf_counter() - t0) * 1000.0,
                seed_sequence=prop.seed,
            )
        )
    return traj
