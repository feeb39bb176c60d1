"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  The tiny conjugate instance (3 letters, length 3,
3 measurements) is shared by the sampler-exactness, prior-recovery, and
posterior-convergence criteria; its likelihood uses an effective noise of
3.0 and a variance floor of 1e-2 (tiny symmetric instances admit exact
fitness ties, where a 1e-12 floor turns the likelihood into a floor
artifact).
"""

import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from cloneopt import (
    Alphabet,
    ConditioningSet,
    ConjugateModel,
    LikelihoodParams,
    SmcConfig,
    enumerate_posterior_exact,
    half_r2_log_phi,
    hamming_distance,
    latent_true_posterior,
    log_marginal_likelihood,
    martingale_diagnostics,
    normalize_pool,
    numeric_integration_oracle,
    pooled_empirical,
    sample_posterior_clone,
    sample_prior_importance,
    total_variation,
)
from cloneopt.harness import parse_run_config, run_benchmark, run_single

mpmath.mp.dps = 50


def report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


# Shared tiny instance: exact-conjugate, A=3, L=3, N=3 synthetic measurements.
TINY_AB = Alphabet(3)
TINY_X0 = (0, 1, 2)
TINY_POOL = [(1, 0, 1), (2, 2, 0), (1, 2, 0)]
TINY_VALUES = [0.8, 0.1, -0.7]


def tiny_model():
    return ConjugateModel(TINY_AB, 3, 0.7)


def tiny_cond():
    return ConditioningSet(TINY_POOL, TINY_VALUES)


def tiny_params():
    return LikelihoodParams(sigma_base=3.0 * math.sqrt(3), n_cond_max=3, var_floor=1e-2)


def benchmark_doc(budget, replicates, methods, seed, out_dir):
    return {
        "alphabet": {"size": 4},
        "model": {"kind": "conjugate", "length": 10, "alpha": 0.5},
        "oracle": {"kind": "latent_clone", "length": 10, "alpha": 0.5},
        "start": {"kind": "draw", "n": 1},
        "methods": methods,
        "bo": {"top_k": 4, "max_substitutions": 3, "budget": budget},
        "smc": {"n_particles": 4, "n_members": 6},
        "likelihood": {"sigma_base": 0.25, "n_cond_max": 75},
        "replicates": replicates,
        "seed": seed,
        "output_dir": out_dir,
    }


@pytest.fixture(scope="module")
def benchmark_trajectories(tmp_path_factory):
    base = tmp_path_factory.mktemp("bench")
    doc = benchmark_doc(50, 10, ["clonebo", "greedy", "genetic"], 2024, "out")
    cfg = parse_run_config(doc, str(base))
    trajectories, _ = run_benchmark(cfg, workers=1)
    return cfg, trajectories


def test_c01_likelihood_oracle_equivalence():
    rng = np.random.default_rng(101)
    worst = 0.0
    for case in range(50):
        n = (3, 5, 8)[case % 3]
        sigma = float(rng.uniform(0.3, 1.5))
        y = rng.normal(size=n)
        fa = rng.normal(size=n)
        fb = rng.normal(size=n)
        params = LikelihoodParams(sigma_base=sigma, n_cond_max=1)
        closed = log_marginal_likelihood(fa, y, params) - log_marginal_likelihood(fb, y, params)
        qa = numeric_integration_oracle(fa, y, sigma, tau=1e3)
        qb = numeric_integration_oracle(fb, y, sigma, tau=1e3)
        worst = max(worst, abs(closed - (qa.log_value - qb.log_value)))
    report(1, "likelihood oracle equivalence", worst < 1e-4,
           f"max |closed-quadrature| diff = {worst:.2e} over 50 triplets")


def test_c02_likelihood_affine_laws():
    rng = np.random.default_rng(102)
    params = LikelihoodParams()
    worst_affine = 0.0
    worst_shift = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 10))
        f = rng.normal(size=n)
        y = rng.normal(size=n)
        a = float(rng.uniform(0.05, 20.0))
        b = float(rng.normal(scale=3.0))
        c = float(rng.normal(scale=5.0))
        gap = log_marginal_likelihood(a * f + b, y, params) - log_marginal_likelihood(f, y, params)
        worst_affine = max(worst_affine, abs(gap + math.log(a)))
        shift = log_marginal_likelihood(f, y + c, params) - log_marginal_likelihood(f, y, params)
        worst_shift = max(worst_shift, abs(shift))
    report(2, "likelihood affine laws", worst_affine < 1e-10 and worst_shift < 1e-10,
           f"affine err = {worst_affine:.2e}, shift err = {worst_shift:.2e}")


def test_c03_stable_kernel():
    def ref(r):
        r = mpmath.mpf(r)
        return float(0.5 * r * r + mpmath.log(mpmath.erfc(-r / mpmath.sqrt(2)) / 2))

    rs = np.linspace(-50.0, 50.0, 1000)
    vals = half_r2_log_phi(rs)
    rel = max(abs(v - ref(r)) / abs(ref(r)) for r, v in zip(rs, vals))
    wide = half_r2_log_phi(np.linspace(-1e3, 1e3, 1000))
    finite = bool(np.all(np.isfinite(wide)))
    monotone = bool(np.all(np.diff(wide) > 0))
    report(3, "stable kernel", rel < 1e-9 and finite and monotone,
           f"max rel err = {rel:.2e}, finite = {finite}, monotone = {monotone}")


def test_c04_smc_exactness():
    model = tiny_model()
    cond = tiny_cond()
    params = tiny_params()
    exact = enumerate_posterior_exact(model, TINY_X0, cond, 2, params)

    def pooled_tv(d, runs, seed0):
        diags = []
        for i in range(runs):
            _, dg = sample_posterior_clone(
                model, TINY_X0, cond, SmcConfig(n_particles=d, n_members=2), params,
                np.random.default_rng(seed0 + i),
            )
            diags.append(dg)
        return total_variation(pooled_empirical(diags), exact)

    tvs = [
        pooled_tv(4, 2000, 400_000),
        pooled_tv(32, 1000, 410_000),
        pooled_tv(256, 600, 420_000),
        pooled_tv(512, 2000, 430_000),
    ]
    monotone = tvs[0] > tvs[1] > tvs[2] > tvs[3]
    report(4, "SMC exactness", monotone and tvs[-1] < 0.05,
           "TV over D in {4,32,256,512} = " + ", ".join(f"{t:.4f}" for t in tvs))


def test_c05_prior_recovery():
    model = tiny_model()
    cond = ConditioningSet.empty()
    params = tiny_params()
    prior = enumerate_posterior_exact(model, TINY_X0, cond, 2, params)
    counts: dict = {}
    increments_zero = True
    n_draws = 10000
    for i in range(n_draws):
        clone, diag = sample_posterior_clone(
            model, TINY_X0, cond, SmcConfig(n_particles=1, n_members=2), params,
            np.random.default_rng(500_000 + i),
        )
        counts[tuple(clone.members)] = counts.get(tuple(clone.members), 0) + 1
        for rec in diag.records:
            if any(w != 0.0 for w in rec.log_weights):
                increments_zero = False
    keys = sorted(prior, key=lambda k: -prior[k])
    expected = np.array([prior[k] * n_draws for k in keys])
    observed = np.array([counts.get(k, 0) for k in keys])
    cut = int(np.searchsorted(-expected, -5.0))
    expected_m = np.concatenate([expected[:cut], [expected[cut:].sum()]])
    observed_m = np.concatenate([observed[:cut], [observed[cut:].sum()]])
    chi2 = float(((observed_m - expected_m) ** 2 / expected_m).sum())
    p = float(stats.chi2.sf(chi2, len(expected_m) - 1))
    report(5, "prior recovery", increments_zero and p > 0.01,
           f"increments exactly zero = {increments_zero}, chi-square p = {p:.4f}")


def test_c06_twisting_beats_importance_sampling():
    ab = Alphabet(4)
    length = 8
    model = ConjugateModel(ab, length, 0.5)
    params = LikelihoodParams()

    def make_pool(rng):
        theta = np.stack([rng.dirichlet(np.full(4, 0.5)) for _ in range(length)])

        def draw():
            return tuple(int(rng.choice(4, p=theta[l])) for l in range(length))

        x0 = draw()
        xs, ys = [], []
        for n in range(20):
            s = draw() if n % 2 == 0 else tuple(int(v) for v in rng.integers(0, 4, size=length))
            xs.append(s)
            ys.append(sum(math.log(theta[l, s[l]]) for l in range(length)) + rng.normal(0, 0.5))
        ys = np.array(ys)
        return x0, ConditioningSet(xs, (ys - ys.mean()) / ys.std())

    m_grid = (1, 2, 4, 6, 8)
    twisted = {m: [] for m in m_grid}
    importance = []
    for rep in range(10):
        rng = np.random.default_rng(600_000 + rep)
        x0, cond = make_pool(rng)
        for m in m_grid:
            _, dg = sample_posterior_clone(
                model, x0, cond, SmcConfig(n_particles=4, n_members=m), params, rng
            )
            twisted[m].append(dg.final_log_lik)
        _, dgi = sample_prior_importance(model, x0, cond, 300, 6, params, rng)
        importance.append(dgi.final_log_lik)
    med = {m: float(np.median(v)) for m, v in twisted.items()}
    med_is = float(np.median(importance))
    beats = med[6] > med_is
    plateau = abs(med[8] - med[6]) < abs(med[2] - med[1])
    report(6, "twisting beats importance sampling", beats and plateau,
           f"twisted median(M=6) = {med[6]:.1f} vs IS = {med_is:.1f}; "
           f"|med(8)-med(6)| = {abs(med[8]-med[6]):.1f} < |med(2)-med(1)| = {abs(med[2]-med[1]):.1f}")


def test_c07_martingale_convergence():
    model = ConjugateModel(Alphabet(4), 6, 0.5)
    curve = martingale_diagnostics(model, [1, 2, 4, 8, 16], 50, np.random.default_rng(700))
    kl_dec = bool(np.all(np.diff(curve.kl_mean) < 0))
    nll_dec = bool(np.all(np.diff(curve.nll_mean) < 0))
    report(7, "martingale convergence", kl_dec and nll_dec,
           "KL means = " + ", ".join(f"{v:.4f}" for v in curve.kl_mean)
           + "; NLL means = " + ", ".join(f"{v:.4f}" for v in curve.nll_mean))


def test_c08_posterior_convergence():
    model = tiny_model()
    cond = tiny_cond()
    params = tiny_params()
    tvs = []
    for m in (1, 2, 3):
        approx = enumerate_posterior_exact(model, TINY_X0, cond, m, params)
        true = latent_true_posterior(model, TINY_X0, cond, m, params, n_points=2**15, seed=0)
        tvs.append(total_variation(approx, true))
    monotone = tvs[0] > tvs[1] > tvs[2]
    report(8, "approximate-posterior convergence", monotone,
           "TV over M in {1,2,3} = " + ", ".join(f"{t:.4f}" for t in tvs))


def test_c09_optimization_benchmark(benchmark_trajectories):
    _, trajectories = benchmark_trajectories
    finals = {}
    for traj in trajectories:
        finals.setdefault(traj.method, []).append(traj.records[-1].best_so_far)
    mean_clone = float(np.mean(finals["clonebo"]))
    mean_greedy = float(np.mean(finals["greedy"]))
    mean_genetic = float(np.mean(finals["genetic"]))
    p_greedy = float(
        stats.mannwhitneyu(finals["clonebo"], finals["greedy"], alternative="greater").pvalue
    )
    p_genetic = float(
        stats.mannwhitneyu(finals["clonebo"], finals["genetic"], alternative="greater").pvalue
    )
    ok = (
        mean_clone > mean_greedy
        and mean_clone > mean_genetic
        and p_greedy < 0.05
        and p_genetic < 0.05
    )
    report(9, "optimization benchmark", ok,
           f"means: clonebo = {mean_clone:.2f}, greedy = {mean_greedy:.2f}, "
           f"genetic = {mean_genetic:.2f}; p(>greedy) = {p_greedy:.4f}, "
           f"p(>genetic) = {p_genetic:.4f}")


def test_c10_loop_invariants(benchmark_trajectories):
    cfg, trajectories = benchmark_trajectories
    from cloneopt.harness import replicate_setup

    ok = True
    notes = []
    for traj in trajectories:
        best = traj.best_so_far()
        if not np.all(np.diff(best) >= 0):
            ok = False
            notes.append(f"best-so-far decreased in {traj.method} rep {traj.replicate}")
        proposed = [r.proposed for r in traj.records]
        if len(set(proposed)) != len(proposed):
            ok = False
            notes.append(f"duplicate proposal in {traj.method} rep {traj.replicate}")
        if traj.method in ("clonebo", "greedy"):
            _, pairs = replicate_setup(cfg, traj.replicate)
            pool = normalize_pool(pairs)
            for rec in traj.records:
                top = {e.sequence for e in pool.top_entries(cfg.bo.top_k)}
                if rec.seed_sequence not in top:
                    ok = False
                    notes.append(f"seed outside top-k at {traj.method} step {rec.step}")
                if hamming_distance(rec.proposed, rec.seed_sequence) > cfg.bo.max_substitutions:
                    ok = False
                    notes.append(f"distance law broken at {traj.method} step {rec.step}")
                pool.add(rec.proposed, rec.y)

    # mask law, exercised on a dedicated masked run
    mask = frozenset({0, 3, 5, 7})
    masked_cfg = parse_run_config(
        {**benchmark_doc(8, 1, ["clonebo", "greedy"], 77, "m_out"),
         "bo": {"top_k": 4, "max_substitutions": 3, "budget": 8, "mask": sorted(mask)}},
        cfg.base_dir,
    )
    for method in ("clonebo", "greedy"):
        traj = run_single(masked_cfg, method, 0)
        for rec in traj.records:
            diff = {
                i for i, (a, b) in enumerate(zip(rec.proposed, rec.seed_sequence)) if a != b
            }
            if not diff <= mask:
                ok = False
                notes.append(f"mask violated by {method} at step {rec.step}")
    report(10, "loop invariants", ok, "; ".join(notes) if notes else
           f"{len(trajectories)} trajectories + masked runs clean")


def test_c11_reproducibility(tmp_path):
    doc_a = benchmark_doc(6, 3, ["clonebo", "greedy"], 314, "rep_a")
    doc_b = benchmark_doc(6, 3, ["clonebo", "greedy"], 314, "rep_b")
    cfg_a = parse_run_config(doc_a, str(tmp_path))
    cfg_b = parse_run_config(doc_b, str(tmp_path))
    run_benchmark(cfg_a, workers=1)
    run_benchmark(cfg_b, workers=2)  # concurrent replicate execution
    identical = True
    compared = 0
    for method in ("clonebo", "greedy"):
        for rep in range(3):
            name = f"trajectory_{method}_rep{rep:03d}.csv"
            a = open(tmp_path / "rep_a" / name, "rb").read()
            b = open(tmp_path / "rep_b" / name, "rb").read()
            compared += 1
            if a != b:
                identical = False
    report(11, "reproducibility", identical,
           f"{compared} trajectory files byte-identical across serial and 2-worker runs")
