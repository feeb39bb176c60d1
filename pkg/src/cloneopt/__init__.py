"""Clone-informed Bayesian optimization of discrete sequences."""

from .errors import (
    CloneOptError,
    ConfigError,
    DegenerateContextError,
    DegenerateWeightsError,
    ExhaustedSearchError,
    InsufficientDataError,
    MalformedInputError,
    StateSpaceTooLargeError,
)
from .likelihood import (
    LikelihoodParams,
    correlation_score,
    half_r2_log_phi,
    log_marginal_likelihood,
    numeric_integration_oracle,
)
from .optimizer import (
    BoConfig,
    LatentCloneOracle,
    MeasurementPool,
    Proposal,
    TableOracle,
    Trajectory,
    TrajectoryRecord,
    normalize_pool,
    propose_genetic,
    propose_greedy,
    propose_thompson,
    run_bo,
    select_conditioning_subset,
    synthetic_oracle,
)
from .posterior import (
    FitnessSample,
    fitness_eval,
    heldout_nll,
    latent_predictive_kl,
    martingale_diagnostics,
    predictive_kl,
    sample_fitness_posterior,
    sample_fitness_prior,
)
from .seq_model import (
    AMINO_ACIDS,
    Alphabet,
    CloneModel,
    CloneStream,
    ConjugateModel,
    MarkovModel,
    Sequence,
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
from .twisted_smc import (
    ConditioningSet,
    Particle,
    SmcConfig,
    SmcDiagnostics,
    effective_sample_size,
    end_of_member_correction,
    enumerate_posterior_exact,
    latent_true_posterior,
    letter_twist_contributions,
    maybe_resample,
    pooled_empirical,
    sample_posterior_clone,
    sample_prior_importance,
    smc_step,
    total_variation,
    twisted_next_letter_distribution,
    write_diagnostics_csv,
)
from .harness import (
    BenchmarkSummary,
    RunConfig,
    aggregate,
    load_run_config,
    main,
    parse_run_config,
    read_pool_csv,
    run_benchmark,
    run_single,
    write_pool_csv,
    write_trajectory_csv,
)

__version__ = "0.1.0"
