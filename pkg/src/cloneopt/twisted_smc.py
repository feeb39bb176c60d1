"""Posterior clone sampling by letter-twisted sequential Monte Carlo.

Particles extend a clone one letter at a time.  Each step biases the base
next-token distribution by how much appending a measured sequence to the
family would change the token's probability, aggregated through the
measurement likelihood.  Importance weights correct the bias; particles are
resampled when the effective sample size drops below sqrt(D), and at each
member boundary the telescoped fitness estimates are swapped for exact
next-member log-probabilities with a matching weight correction.

Brute-force references live alongside: exhaustive enumeration of the
approximate posterior on tiny instances, a latent-integrated true posterior
computed by quasi-Monte Carlo over the conjugate model's latent, and plain
importance sampling from the prior.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import beta as beta_dist
from scipy.stats import qmc

from .errors import (
    ConfigError,
    DegenerateContextError,
    DegenerateWeightsError,
    StateSpaceTooLargeError,
)
from .likelihood import LikelihoodParams, log_marginal_likelihood
from .seq_model import CloneModel, CloneStream, ConjugateModel, Sequence, sample_clone

# Fewer than two conditioning measurements carry no likelihood signal: the
# variance floor makes log p(Y|F) constant in F, so twisting is disabled and
# weight increments are exactly zero.
MIN_TWIST_N = 2


@dataclass(frozen=True)
class SmcConfig:
    n_particles: int = 4
    n_members: int = 6
    resampling: str = "multinomial"
    max_len: int | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.n_members < 1:
            raise ConfigError(f"n_members must be >= 1, got {self.n_members}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")


class ConditioningSet:
    """Measured sequences with normalized values.

    Entries are stored in a canonical order (sorted by tokens, then value) so
    that permuting the input leaves every downstream reduction bit-identical.
    """

    def __init__(self, sequences, values):
        values = np.asarray(values, dtype=float)
        sequences = [tuple(int(t) for t in s) for s in sequences]
        if len(sequences) != len(values):
            raise ConfigError("sequences and values must have equal length")
        order = sorted(range(len(sequences)), key=lambda i: (sequences[i], values[i]))
        self.sequences: tuple[Sequence, ...] = tuple(sequences[i] for i in order)
        self.values: np.ndarray = values[order].copy()
        self.values.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.sequences)

    @classmethod
    def empty(cls) -> "ConditioningSet":
        return cls((), ())


class Particle:
    """One in-progress clone sample with its weight and fitness caches."""

    __slots__ = (
        "ctx", "members", "partial", "log_weight", "f_base", "f_partial",
        "log_lik", "m_done", "member_done", "last_correction", "last_telescope_gap",
    )

    def __init__(self, ctx, f_base: np.ndarray, log_weight: float, log_lik: float):
        self.ctx = ctx
        self.members: list[Sequence] = []
        self.partial: list[int] = []
        self.log_weight = log_weight
        self.f_base = f_base
        self.f_partial = f_base.copy()
        self.log_lik = log_lik
        self.m_done = 0
        self.member_done = False
        self.last_correction = 0.0
        self.last_telescope_gap = 0.0

    def copy(self) -> "Particle":
        p = Particle(self.ctx.copy(), self.f_base.copy(), self.log_weight, self.log_lik)
        p.members = list(self.members)
        p.partial = list(self.partial)
        p.f_partial = self.f_partial.copy()
        p.m_done = self.m_done
        p.member_done = self.member_done
        p.last_correction = self.last_correction
        p.last_telescope_gap = self.last_telescope_gap
        return p


@dataclass
class SmcStepRecord:
    member: int
    letter: int
    ess: float
    resampled: bool
    log_weights: tuple[float, ...]
    log_liks: tuple[float, ...]


@dataclass
class SmcDiagnostics:
    records: list[SmcStepRecord] = field(default_factory=list)
    n_resample_events: int = 0
    truncations: int = 0
    final_log_weights: np.ndarray | None = None
    final_clones: list[CloneStream] | None = None
    final_log_liks: np.ndarray | None = None
    chosen_index: int = -1

    @property
    def final_log_lik(self) -> float:
        return float(self.final_log_liks[self.chosen_index])


def init_particles(
    model: CloneModel,
    x0: Sequence,
    cond: ConditioningSet,
    n_particles: int,
    params: LikelihoodParams | None = None,
) -> list[Particle]:
    """Build the initial ensemble: seed-only context, uniform weights."""
    x0 = model.alphabet.validate_sequence(x0)
    ctx = model.start_context(CloneStream(x0).flat_tokens(model.alphabet))
    if cond.n > 0:
        f0 = model.batch_member_logprobs([ctx], list(cond.sequences))[0]
    else:
        f0 = np.zeros(0)
    if cond.n >= MIN_TWIST_N:
        ll0 = float(_log_lik(f0, cond, params or LikelihoodParams()))
    else:
        ll0 = 0.0
    return [
        Particle(ctx.copy(), f0.copy(), -math.log(n_particles), ll0)
        for _ in range(n_particles)
    ]


def _log_lik(f: np.ndarray, cond: ConditioningSet, params: LikelihoodParams):
    return log_marginal_likelihood(f, cond.values, params)


def letter_twist_contributions(
    model: CloneModel, particle: Particle, cond: ConditioningSet
) -> np.ndarray:
    """(N, A+1) matrix of per-candidate fitness contributions.

    Entry (n, x) is the gap in the next-token log-probability of x when the
    measured sequence n is inserted as an extra complete member before the
    in-progress one.  Tokens impossible under the base model, and positions
    past the end of a fixed-length sequence, contribute 0.
    """
    return model.batch_twist_contributions([particle.ctx], list(cond.sequences))[0]


def _twisted_logits(particles, model, cond, params):
    """Per-particle unnormalized twisted log-masses and supporting pieces.

    Returns (logits, base, contrib, cand_ll) where logits = base + candidate
    log-likelihood when twisting is on, else logits = base and the last two
    entries are None.
    """
    states = [p.ctx for p in particles]
    base = model.batch_logprobs(states)
    if cond.n < MIN_TWIST_N:
        return base, base, None, None
    contrib = model.batch_twist_contributions(states, list(cond.sequences))
    f_part = np.stack([p.f_partial for p in particles])
    cand = f_part[:, :, None] + contrib                 # (D, N, A+1)
    cand_ll = log_marginal_likelihood(
        np.swapaxes(cand, 1, 2), cond.values, params
    )                                                   # (D, A+1)
    return base + cand_ll, base, contrib, cand_ll


def twisted_next_letter_distribution(
    model: CloneModel,
    particle: Particle,
    cond: ConditioningSet,
    params: LikelihoodParams,
) -> np.ndarray:
    """Normalized next-token proposal: base model times likelihood bias."""
    logits, _, _, _ = _twisted_logits([particle], model, cond, params)
    row = logits[0]
    log_z = logsumexp(row)
    if not np.isfinite(log_z):
        raise DegenerateContextError("all candidate tokens have zero probability")
    return np.exp(row - log_z)


def _advance_letter(particles, model, cond, params, slot_rngs, max_len, diag):
    """Sample one token for every particle not yet done with its member.

    Weight increment per particle is the (possibly masked) twisted
    normalizer minus the previous running log-likelihood: algebraically
    equal to log p_base(x) - log q(x) + log p(Y|F + delta_x) - log p(Y|F).
    When twisting is off and no length mask applies, the weight is left
    untouched, so increments are exactly zero.  Returns the indices of
    particles that completed their member this step.
    """
    sep = model.alphabet.separator
    active = [i for i, p in enumerate(particles) if not p.member_done]
    if not active:
        return []
    subset = [particles[i] for i in active]
    twisting = cond.n >= MIN_TWIST_N
    logits, base, contrib, cand_ll = _twisted_logits(subset, model, cond, params)
    logits = np.array(logits, copy=True)

    forced_rows = np.zeros(len(active), dtype=bool)
    if model.fixed_length is None:
        for row, i in enumerate(active):
            p = particles[i]
            if max_len is not None and len(p.partial) >= max_len:
                forced_rows[row] = True
                keep = logits[row, sep]
                logits[row, :] = -np.inf
                logits[row, sep] = keep
                diag.truncations += 1
            elif not p.partial:
                # Members must be non-empty: no separator as the first token.
                logits[row, sep] = -np.inf

    peak = logits.max(axis=1)
    if not np.all(np.isfinite(peak)):
        raise DegenerateContextError("all candidate tokens have zero probability")
    log_z = peak + np.log(np.exp(logits - peak[:, None]).sum(axis=1))
    probs = np.exp(logits - log_z[:, None])
    cum = np.cumsum(probs, axis=1)
    u = np.array([slot_rngs[i].random() for i in active]) * cum[:, -1]
    toks = (cum < u[:, None]).sum(axis=1)
    if twisting:
        rows = np.arange(len(active))
        chosen_contrib = contrib[rows, :, toks]
        chosen_ll = cand_ll[rows, toks]

    finished = []
    for row, i in enumerate(active):
        p = particles[i]
        tok = int(toks[row])
        if twisting:
            p.log_weight += float(log_z[row]) - p.log_lik
            p.f_partial = p.f_partial + chosen_contrib[row]
            p.log_lik = float(chosen_ll[row])
        elif forced_rows[row]:
            p.log_weight += float(base[row, tok])
        model.extend(p.ctx, tok)
        if tok == sep:
            p.members.append(tuple(p.partial))
            p.partial = []
            p.m_done += 1
            p.member_done = True
            finished.append(i)
        else:
            p.partial.append(tok)
    return finished


def smc_step(particles, model, cond, params, rng) -> list[Particle]:
    """One lockstep letter extension for every particle.

    All particles must sit at the same member and letter index.  Accepts a
    single generator or one per particle slot.
    """
    depths = {(p.m_done, len(p.partial), p.member_done) for p in particles}
    if len(depths) != 1:
        raise ConfigError("particles are not at the same letter index")
    rngs = rng if isinstance(rng, (list, tuple)) else [rng] * len(particles)
    _advance_letter(particles, model, cond, params, rngs, None, SmcDiagnostics())
    return particles


def effective_sample_size(weights: np.ndarray) -> float:
    """ESS = 1 / sum of squared normalized weights; lies in [1, D]."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise DegenerateWeightsError("all weights are zero")
    if abs(total - 1.0) > 1e-8:
        raise ConfigError("weights must be normalized")
    return float(1.0 / np.sum(weights * weights))


def _normalized_weights(particles) -> np.ndarray:
    logw = np.array([p.log_weight for p in particles])
    if not np.any(np.isfinite(logw)):
        raise DegenerateWeightsError("all particle weights are zero")
    w = np.exp(logw - logsumexp(logw))
    return w / w.sum()


def maybe_resample(particles, rng, scheme: str = "multinomial"):
    """Resample when ESS < sqrt(D): draw D slots by normalized weight, clone,
    and reset all log-weights to -log D.  No-op otherwise.

    Returns (particles, resampled, ess) with the triggering ESS.
    """
    d = len(particles)
    w = _normalized_weights(particles)
    ess = effective_sample_size(w)
    if ess >= math.sqrt(d):
        return particles, False, ess
    if scheme == "systematic":
        points = (rng.random() + np.arange(d)) / d
        idx = np.searchsorted(np.cumsum(w), points)
    else:
        idx = rng.choice(d, size=d, p=w)
    out = [particles[i].copy() for i in idx]
    for p in out:
        p.log_weight = -math.log(d)
    return out, True, ess


def _apply_corrections(particles, indices, model, cond, params) -> None:
    """Batched member-boundary corrections for the given particle indices."""
    if not indices:
        return
    if cond.n == 0:
        for i in indices:
            particles[i].last_correction = 0.0
            particles[i].last_telescope_gap = 0.0
        return
    subset = [particles[i] for i in indices]
    f_exact = model.batch_member_logprobs(
        [p.ctx for p in subset], list(cond.sequences)
    )                                                   # (K, N)
    gaps = np.max(np.abs(f_exact - np.stack([p.f_partial for p in subset])), axis=1)
    if cond.n >= MIN_TWIST_N:
        ll_exact = np.atleast_1d(_log_lik(f_exact, cond, params))
    else:
        ll_exact = None
    for row, i in enumerate(indices):
        p = particles[i]
        p.last_telescope_gap = float(gaps[row])
        if ll_exact is not None:
            correction = float(ll_exact[row]) - p.log_lik
            p.log_weight += correction
            p.last_correction = correction
            p.log_lik = float(ll_exact[row])
        else:
            p.last_correction = 0.0
        p.f_base = f_exact[row]
        p.f_partial = f_exact[row].copy()


def end_of_member_correction(particle, model, cond, params) -> Particle:
    """Swap telescoped fitness sums for exact next-member log-probs.

    Multiplies the weight by p(Y|F_exact)/p(Y|F_telescoped), then replaces
    the running base values.  For an exchangeable model the telescoping is
    exact and the multiplier is 1 up to float roundoff.
    """
    _apply_corrections([particle], [0], model, cond, params)
    return particle


def sample_posterior_clone(
    model: CloneModel,
    x0: Sequence,
    cond: ConditioningSet,
    config: SmcConfig,
    params: LikelihoodParams,
    rng: np.random.Generator,
) -> tuple[CloneStream, SmcDiagnostics]:
    """Generate a clone of ``config.n_members`` members from the twisted
    posterior and draw one by the final weights.

    Per-slot RNG streams make the run deterministic under a fixed seed
    regardless of evaluation order.  Diagnostics carry the ESS trace,
    resample events, and the full final ensemble.
    """
    x0 = model.alphabet.validate_sequence(x0)
    if cond.n > params.n_cond_max:
        raise ConfigError(f"conditioning set has {cond.n} > n_cond_max={params.n_cond_max}")
    d = config.n_particles
    streams = rng.spawn(d + 2)
    slot_rngs, resample_rng, choice_rng = streams[:d], streams[d], streams[d + 1]
    max_len = config.max_len if config.max_len is not None else 2 * len(x0)
    particles = init_particles(model, x0, cond, d, params)
    diag = SmcDiagnostics()
    for member in range(1, config.n_members + 1):
        letter = 0
        while any(not p.member_done for p in particles):
            finished = _advance_letter(
                particles, model, cond, params, slot_rngs, max_len, diag
            )
            _apply_corrections(particles, finished, model, cond, params)
            particles, resampled, ess = maybe_resample(
                particles, resample_rng, config.resampling
            )
            if resampled:
                diag.n_resample_events += 1
            diag.records.append(
                SmcStepRecord(
                    member=member,
                    letter=letter,
                    ess=ess,
                    resampled=resampled,
                    log_weights=tuple(p.log_weight for p in particles),
                    log_liks=tuple(p.log_lik for p in particles),
                )
            )
            letter += 1
        for p in particles:
            p.member_done = False
    weights = _normalized_weights(particles)
    chosen = int(choice_rng.choice(d, p=weights))
    diag.final_log_weights = weights
    diag.final_clones = [CloneStream(x0, tuple(p.members)) for p in particles]
    diag.final_log_liks = np.array([p.log_lik for p in particles])
    diag.chosen_index = chosen
    return diag.final_clones[chosen], diag


def sample_prior_importance(
    model: CloneModel,
    x0: Sequence,
    cond: ConditioningSet,
    n_particles: int,
    n_members: int,
    params: LikelihoodParams,
    rng: np.random.Generator,
    max_len: int | None = None,
) -> tuple[CloneStream, SmcDiagnostics]:
    """Importance-sample the posterior with prior clones as proposals.

    The untwisted baseline: draw clones from the base model, weight each by
    p(Y | F^M), and pick one.  Shares the diagnostics container with the SMC
    sampler for matched comparisons.
    """
    x0 = model.alphabet.validate_sequence(x0)
    diag = SmcDiagnostics()
    clones = []
    log_liks = np.zeros(n_particles)
    for i in range(n_particles):
        clone = sample_clone(model, x0, n_members, rng, max_len=max_len)
        clones.append(clone)
        if cond.n >= MIN_TWIST_N:
            ctx = model.start_context(clone.flat_tokens(model.alphabet))
            f = model.batch_member_logprobs([ctx], list(cond.sequences))[0]
            log_liks[i] = float(_log_lik(f, cond, params))
    if cond.n >= MIN_TWIST_N:
        w = np.exp(log_liks - logsumexp(log_liks))
        w = w / w.sum()
    else:
        w = np.full(n_particles, 1.0 / n_particles)
    chosen = int(rng.choice(n_particles, p=w))
    diag.final_log_weights = w
    diag.final_clones = clones
    diag.final_log_liks = log_liks
    diag.chosen_index = chosen
    return clones[chosen], diag


# ---------------------------------------------------------------------------
# Brute-force references
# ---------------------------------------------------------------------------

ENUMERATION_LIMIT = 10**6


def enumerate_posterior_exact(
    model: CloneModel,
    x0: Sequence,
    cond: ConditioningSet,
    n_members: int,
    params: LikelihoodParams,
) -> dict[tuple[Sequence, ...], float]:
    """Exact normalized table of the approximate posterior over member tuples.

    Brute-force: weight p(X_{1:M} | X0) by p(Y | F^M) for every clone in the
    product space.  Fixed-length models only; refuses state spaces above
    ``ENUMERATION_LIMIT``.
    """
    length = model.fixed_length
    if length is None:
        raise StateSpaceTooLargeError("enumeration requires a fixed-length model")
    a = model.alphabet.size
    total = a ** (length * n_members)
    if total > ENUMERATION_LIMIT:
        raise StateSpaceTooLargeError(f"state space {total} exceeds {ENUMERATION_LIMIT}")
    x0 = model.alphabet.validate_sequence(x0)
    all_seqs = [tuple(s) for s in itertools.product(range(a), repeat=length)]
    cond_seqs = list(cond.sequences)
    table: dict[tuple[Sequence, ...], float] = {}

    def recurse(state, chosen: tuple, log_prior: float):
        if len(chosen) == n_members:
            if cond.n >= MIN_TWIST_N:
                f = model.batch_member_logprobs([state], cond_seqs)[0]
                ll = float(_log_lik(f, cond, params))
            else:
                ll = 0.0
            table[chosen] = log_prior + ll
            return
        member_lps = model.batch_member_logprobs([state], all_seqs)[0]
        for seq, lp in zip(all_seqs, member_lps):
            nxt = state.copy()
            for t in seq:
                model.extend(nxt, t)
            model.extend(nxt, model.alphabet.separator)
            recurse(nxt, chosen + (seq,), log_prior + float(lp))

    start = model.start_context(CloneStream(x0).flat_tokens(model.alphabet))
    recurse(start, (), 0.0)
    keys = list(table.keys())
    logps = np.array([table[k] for k in keys])
    probs = np.exp(logps - logsumexp(logps))
    probs /= probs.sum()
    return {k: float(p) for k, p in zip(keys, probs)}


def latent_true_posterior(
    model: ConjugateModel,
    x0: Sequence,
    cond: ConditioningSet,
    n_members: int,
    params: LikelihoodParams,
    n_points: int = 2**14,
    seed: int = 0,
) -> dict[tuple[Sequence, ...], float]:
    """Latent-integrated posterior over member tuples for the conjugate model.

    Integrates over the per-position categorical latent: weight each latent
    draw by the measurement likelihood of its exact fitness values, then
    accumulate iid member probabilities.  The integral uses scrambled Sobol
    points pushed through stick-breaking Beta quantiles of the seed-updated
    Dirichlet, which is deterministic for a fixed seed and handles the
    Dirichlet boundary exactly.
    """
    if not isinstance(model, ConjugateModel):
        raise ConfigError("latent integration requires the conjugate model")
    if n_members > 3:
        raise StateSpaceTooLargeError("latent-true posterior supports n_members <= 3")
    x0 = model.alphabet.validate_sequence(x0)
    a = model.alphabet.size
    length = model.length
    post_alpha = model.alpha.copy()
    for l, t in enumerate(x0):
        post_alpha[l, t] += 1.0

    sampler = qmc.Sobol(d=length * (a - 1), scramble=True, seed=seed)
    u = sampler.random(n_points)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    theta = np.empty((n_points, length, a))
    for l in range(length):
        remaining = np.ones(n_points)
        tail = post_alpha[l].sum()
        for j in range(a - 1):
            tail -= post_alpha[l, j]
            v = beta_dist.ppf(u[:, l * (a - 1) + j], post_alpha[l, j], tail)
            theta[:, l, j] = remaining * v
            remaining = remaining * (1.0 - v)
        theta[:, l, a - 1] = remaining
    log_theta = np.log(np.maximum(theta, 1e-300))

    if cond.n >= MIN_TWIST_N:
        meas = np.array([list(s) for s in cond.sequences])       # (N, L)
        pos = np.arange(length)
        f = log_theta[:, pos[None, :], meas].sum(axis=2)          # (S, N)
        log_u = log_marginal_likelihood(f, cond.values, params)   # (S,)
    else:
        log_u = np.zeros(n_points)
    u_w = np.exp(log_u - log_u.max())

    all_seqs = [tuple(s) for s in itertools.product(range(a), repeat=length)]
    seq_arr = np.array(all_seqs)                                  # (K, L)
    pos = np.arange(length)
    log_p_seq = log_theta[:, pos[None, :], seq_arr].sum(axis=2)   # (S, K)
    p_seq = np.exp(log_p_seq)

    if n_members == 1:
        raw = u_w @ p_seq
        tuples = [(s,) for s in all_seqs]
        flat = raw
    elif n_members == 2:
        raw = p_seq.T @ (u_w[:, None] * p_seq)
        tuples = [(s, t) for s in all_seqs for t in all_seqs]
        flat = raw.reshape(-1)
    else:
        raw = np.einsum("s,si,sj,sk->ijk", u_w, p_seq, p_seq, p_seq, optimize=True)
        tuples = [(s, t, v) for s in all_seqs for t in all_seqs for v in all_seqs]
        flat = raw.reshape(-1)
    flat = flat / flat.sum()
    return {k: float(p) for k, p in zip(tuples, flat)}


def total_variation(dist_a: dict, dist_b: dict) -> float:
    keys = set(dist_a) | set(dist_b)
    return 0.5 * sum(abs(dist_a.get(k, 0.0) - dist_b.get(k, 0.0)) for k in keys)


def pooled_empirical(diagnostics: list[SmcDiagnostics]) -> dict[tuple[Sequence, ...], float]:
    """Self-normalized weighted empirical distribution over completed clones,
    pooled across runs with equal run weights."""
    table: dict[tuple[Sequence, ...], float] = {}
    n_runs = len(diagnostics)
    for diag in diagnostics:
        for clone, w in zip(diag.final_clones, diag.final_log_weights):
            key = tuple(clone.members)
            table[key] = table.get(key, 0.0) + float(w) / n_runs
    return table


def write_diagnostics_csv(diag: SmcDiagnostics, path: str) -> None:
    """Long-format ESS/weight trace: one row per (member, letter, particle)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["member", "letter", "ess", "resampled", "particle", "log_weight", "log_lik"]
        )
        for rec in diag.records:
            for i, (lw, ll) in enumerate(zip(rec.log_weights, rec.log_liks)):
                writer.writerow(
                    [rec.member, rec.letter, repr(rec.ess), int(rec.resampled), i, repr(lw), repr(ll)]
                )
    os.replace(tmp, path)
