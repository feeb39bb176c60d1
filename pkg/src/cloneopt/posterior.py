"""Fitness functions extracted from sampled clones.

A sampled clone defines a fitness function F(X) = log p(X | clone context):
the model's next-member log-probability after conditioning on the family.
Prior fitness samples wrap unconditional clones; posterior samples wrap
clones from the twisted SMC sampler.  Convergence diagnostics quantify how
the predictive pins down the latent as the family grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .likelihood import LikelihoodParams
from .seq_model import (
    CloneModel,
    CloneStream,
    ConjugateModel,
    Sequence,
    sample_clone,
    sequence_logprob,
)
from .twisted_smc import ConditioningSet, SmcConfig, SmcDiagnostics, sample_posterior_clone


class FitnessSample:
    """A queryable fitness function backed by one sampled clone.

    Evaluations are memoized; cached and fresh values agree bit-exactly
    because both go through the same batched code path.  Queries are
    read-only and safe for concurrent use once constructed.
    """

    def __init__(self, model: CloneModel, context: CloneStream,
                 diagnostics: SmcDiagnostics | None = None):
        self.model = model
        self.context = context
        self.diagnostics = diagnostics
        self._cache: dict[Sequence, float] = {}
        self._state = model.start_context(context.flat_tokens(model.alphabet))

    def evaluate(self, x: Sequence) -> float:
        return float(self.evaluate_many([x])[0])

    def evaluate_many(self, xs) -> np.ndarray:
        xs = [tuple(int(t) for t in x) for x in xs]
        missing = [x for x in xs if x not in self._cache]
        if missing:
            values = self.model.batch_member_logprobs([self._state], missing)[0]
            for x, v in zip(missing, values):
                self._cache[x] = float(v)
        return np.array([self._cache[x] for x in xs])


def fitness_eval(sample: FitnessSample, x: Sequence) -> float:
    """F(X) = log p(X | clone context); memoized."""
    return sample.evaluate(x)


def sample_fitness_prior(
    model: CloneModel, x0: Sequence, n_members: int, rng: np.random.Generator,
    max_len: int | None = None,
) -> FitnessSample:
    """Draw a clone from the prior (seeded at x0) and wrap it."""
    clone = sample_clone(model, x0, n_members, rng, max_len=max_len)
    return FitnessSample(model, clone)


def sample_fitness_posterior(
    model: CloneModel,
    x0: Sequence,
    cond: ConditioningSet,
    config: SmcConfig,
    params: LikelihoodParams,
    rng: np.random.Generator,
) -> FitnessSample:
    """Draw a clone from the twisted SMC posterior and wrap it."""
    clone, diag = sample_posterior_clone(model, x0, cond, config, params, rng)
    return FitnessSample(model, clone, diagnostics=diag)


def predictive_kl(
    model: CloneModel,
    context_small: CloneStream,
    context_large: CloneStream,
    n_eval_positions: int | None = None,
    probe: Sequence | None = None,
) -> float:
    """Mean per-position KL between next-token predictives under two contexts.

    Both contexts are advanced through the same probe prefix (the shared seed
    by default); for the conjugate model the prefix is irrelevant and the KL
    per position is exact.
    """
    if context_small.seed != context_large.seed:
        raise ConfigError("contexts must share the seed")
    probe = tuple(probe) if probe is not None else context_small.seed
    limit = len(probe)
    if model.fixed_length is not None:
        limit = min(limit, model.fixed_length)
    n_pos = limit if n_eval_positions is None else min(n_eval_positions, limit)
    if n_pos < 1:
        raise ConfigError("need at least one evaluation position")
    sa = model.start_context(context_small.flat_tokens(model.alphabet))
    sb = model.start_context(context_large.flat_tokens(model.alphabet))
    total = 0.0
    for l in range(n_pos):
        la = model.next_logprobs(sa)
        lb = model.next_logprobs(sb)
        pa = np.exp(la)
        support = pa > 0
        total += float(np.sum(pa[support] * (la[support] - lb[support])))
        model.extend(sa, probe[l])
        model.extend(sb, probe[l])
    return total / n_pos


def latent_predictive_kl(model: ConjugateModel, context: CloneStream, theta) -> float:
    """Mean per-position KL from the true latent categorical to the predictive."""
    theta = np.asarray(theta, dtype=float)
    state = model.start_context(context.flat_tokens(model.alphabet))
    pred = model.predictive_matrix(state)
    mask = theta > 0
    terms = np.zeros_like(theta)
    terms[mask] = theta[mask] * (np.log(theta[mask]) - np.log(pred[mask]))
    return float(terms.sum(axis=1).mean())


def heldout_nll(model: CloneModel, context: CloneStream, heldout) -> float:
    """Per-token negative log-likelihood of held-out members given the context."""
    total = 0.0
    n_tok = 0
    for x in heldout:
        total -= sequence_logprob(model, context, tuple(x))
        n_tok += len(x) + 1
    return total / n_tok


@dataclass
class ConvergenceCurve:
    m_grid: list[int]
    kl_mean: np.ndarray
    kl_stderr: np.ndarray
    nll_mean: np.ndarray
    nll_stderr: np.ndarray


def martingale_diagnostics(
    model: ConjugateModel,
    m_grid: list[int],
    n_draws: int,
    rng: np.random.Generator,
) -> ConvergenceCurve:
    """Convergence of the predictive as the conditioning family grows.

    For each latent draw, sample a seed, members, and one held-out member
    from the true per-position categorical, then record the KL to the truth
    and the held-out NLL at each family size.
    """
    m_max = max(m_grid)
    kl = np.zeros((n_draws, len(m_grid)))
    nll = np.zeros((n_draws, len(m_grid)))
    a = model.alphabet.size
    for d in range(n_draws):
        theta = np.stack([rng.dirichlet(model.alpha[l]) for l in range(model.length)])
        draws = np.stack(
            [rng.choice(a, size=m_max + 2, p=theta[l]) for l in range(model.length)],
            axis=1,
        )
        seqs = [tuple(int(t) for t in row) for row in draws]
        seed, members, held = seqs[0], seqs[1:-1], seqs[-1]
        for j, m in enumerate(m_grid):
            ctx = CloneStream(seed, tuple(members[:m]))
            kl[d, j] = latent_predictive_kl(model, ctx, theta)
            nll[d, j] = heldout_nll(model, ctx, [held])
    scale = math.sqrt(n_draws)
    return ConvergenceCurve(
        m_grid=list(m_grid),
        kl_mean=kl.mean(axis=0),
        kl_stderr=kl.std(axis=0, ddof=1) / scale,
        nll_mean=nll.mean(axis=0),
        nll_stderr=nll.std(axis=0, ddof=1) / scale,
    )
