"""CLI, configuration, file IO, and benchmark orchestration.

A run is fully determined by its JSON config plus master seed: replicate r
of method m derives its generator from SeedSequence(seed, spawn_key=...),
so replicates can execute concurrently (process pool) and still produce
byte-identical outputs.  Trajectory CSVs are written atomically; the
elapsed_ms column is fixed at 0 to keep outputs byte-reproducible, with
wall-clock totals reported in the summary JSON instead.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CloneOptError, ConfigError, MalformedInputError
from .likelihood import (
    LikelihoodParams,
    log_marginal_likelihood,
    numeric_integration_oracle,
)
from .optimizer import (
    BoConfig,
    LatentCloneOracle,
    METHODS,
    TableOracle,
    Trajectory,
    normalize_pool,
    run_bo,
    select_conditioning_subset,
)
from .seq_model import (
    Alphabet,
    CloneModel,
    ConjugateModel,
    Sequence,
    fit_markov,
    gen_synthetic_families,
    load_model,
    read_corpus,
    sample_clone,
    save_model,
    write_corpus,
)
from .twisted_smc import SmcConfig, sample_posterior_clone, write_diagnostics_csv

TRAJECTORY_HEADER = ["step", "method", "replicate", "proposed", "y", "best_so_far", "elapsed_ms"]
POOL_HEADER = ["sequence", "y"]

# Stable per-method seed offsets so trajectory randomness does not depend on
# the order methods are listed in the config.
_METHOD_SEED_INDEX = {"clonebo": 1, "greedy": 2, "genetic": 3}


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    doc: dict
    base_dir: str
    alphabet: Alphabet
    model_spec: dict | None
    oracle_spec: dict
    start_spec: dict
    methods: list[str]
    bo: BoConfig
    replicates: int
    seed: int
    output_dir: str


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"missing config key '{where}{key}'")
    return doc[key]


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{where}{key}'")


def parse_run_config(doc: dict, base_dir: str = ".") -> RunConfig:
    _check_keys(
        doc,
        {"alphabet", "model", "oracle", "start", "methods", "bo", "smc",
         "likelihood", "replicates", "seed", "output_dir"},
        "",
    )
    alpha_doc = _require(doc, "alphabet", "")
    _check_keys(alpha_doc, {"size", "chars"}, "alphabet.")
    alphabet = Alphabet(int(_require(alpha_doc, "size", "alphabet.")), alpha_doc.get("chars"))

    oracle_spec = dict(_require(doc, "oracle", ""))
    kind = _require(oracle_spec, "kind", "oracle.")
    if kind == "latent_clone":
        _check_keys(oracle_spec, {"kind", "length", "alpha"}, "oracle.")
        _require(oracle_spec, "length", "oracle.")
        _require(oracle_spec, "alpha", "oracle.")
    elif kind == "table":
        _check_keys(oracle_spec, {"kind", "path"}, "oracle.")
        _require(oracle_spec, "path", "oracle.")
    else:
        raise ConfigError(f"unknown config key value 'oracle.kind': {kind!r}")

    start_spec = dict(doc.get("start", {"kind": "draw", "n": 1}))
    skind = start_spec.get("kind")
    if skind == "draw":
        _check_keys(start_spec, {"kind", "n"}, "start.")
        if int(start_spec.get("n", 1)) < 1:
            raise ConfigError("config key 'start.n' must be >= 1")
    elif skind == "pool":
        _check_keys(start_spec, {"kind", "path"}, "start.")
        _require(start_spec, "path", "start.")
    else:
        raise ConfigError(f"unknown config key value 'start.kind': {skind!r}")

    methods = list(_require(doc, "methods", ""))
    if not methods:
        raise ConfigError("config key 'methods' must be a non-empty list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} in config key 'methods'")

    model_spec = doc.get("model")
    if model_spec is not None:
        model_spec = dict(model_spec)
        if "path" in model_spec:
            _check_keys(model_spec, {"path"}, "model.")
        else:
            mkind = _require(model_spec, "kind", "model.")
            if mkind != "conjugate":
                raise ConfigError(f"inline model must be conjugate, got {mkind!r}")
            _check_keys(model_spec, {"kind", "length", "alpha"}, "model.")
            _require(model_spec, "length", "model.")
            _require(model_spec, "alpha", "model.")
    if "clonebo" in methods and model_spec is None:
        raise ConfigError("missing config key 'model' (required by method clonebo)")

    smc_doc = dict(doc.get("smc", {}))
    _check_keys(smc_doc, {"n_particles", "n_members", "resampling", "max_len"}, "smc.")
    smc = SmcConfig(
        n_particles=int(smc_doc.get("n_particles", 4)),
        n_members=int(smc_doc.get("n_members", 6)),
        resampling=smc_doc.get("resampling", "multinomial"),
        max_len=smc_doc.get("max_len"),
    )

    lik_doc = dict(doc.get("likelihood", {}))
    _check_keys(lik_doc, {"sigma_base", "n_cond_max", "var_floor"}, "likelihood.")
    likelihood = LikelihoodParams(
        sigma_base=float(lik_doc.get("sigma_base", 0.25)),
        n_cond_max=int(lik_doc.get("n_cond_max", 75)),
        var_floor=float(lik_doc.get("var_floor", 1e-12)),
    )

    bo_doc = dict(doc.get("bo", {}))
    _check_keys(
        bo_doc,
        {"top_k", "max_substitutions", "n_cond_max", "budget", "mask"},
        "bo.",
    )
    mask = bo_doc.get("mask")
    bo = BoConfig(
        alphabet=alphabet,
        top_k=int(bo_doc.get("top_k", 4)),
        max_substitutions=int(bo_doc.get("max_substitutions", 3)),
        n_cond_max=int(bo_doc.get("n_cond_max", likelihood.n_cond_max)),
        budget=int(bo_doc.get("budget", 1)),
        smc=smc,
        likelihood=likelihood,
        mask=frozenset(int(p) for p in mask) if mask is not None else None,
    )

    replicates = int(doc.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("config key 'replicates' must be >= 1")
    seed = int(_require(doc, "seed", ""))
    output_dir = str(doc.get("output_dir", "out"))
    return RunConfig(
        doc=doc,
        base_dir=base_dir,
        alphabet=alphabet,
        model_spec=model_spec,
        oracle_spec=oracle_spec,
        start_spec=start_spec,
        methods=methods,
        bo=bo,
        replicates=replicates,
        seed=seed,
        output_dir=output_dir,
    )


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_run_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def _resolve(cfg_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(cfg_dir, path)


def build_model(cfg: RunConfig) -> CloneModel | None:
    if cfg.model_spec is None:
        return None
    if "path" in cfg.model_spec:
        return load_model(_resolve(cfg.base_dir, cfg.model_spec["path"]))
    return ConjugateModel(cfg.alphabet, int(cfg.model_spec["length"]), cfg.model_spec["alpha"])


def replicate_setup(cfg: RunConfig, replicate: int):
    """Oracle plus initial (sequence, y) pairs for one replicate.

    All methods at the same replicate share the oracle and starting pool.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(replicate, 0)))
    if cfg.oracle_spec["kind"] == "latent_clone":
        length = int(cfg.oracle_spec["length"])
        proto = ConjugateModel(cfg.alphabet, length, cfg.oracle_spec["alpha"])
        theta = np.stack([rng.dirichlet(proto.alpha[l]) for l in range(length)])
        oracle = LatentCloneOracle(theta)
        if cfg.start_spec["kind"] != "draw":
            pairs = read_pool_csv(_resolve(cfg.base_dir, cfg.start_spec["path"]), cfg.alphabet)
        else:
            pairs = []
            for _ in range(int(cfg.start_spec.get("n", 1))):
                seq = oracle.sample_sequence(rng)
                pairs.append((seq, oracle.evaluate(seq)))
    else:
        rows = read_pool_csv(_resolve(cfg.base_dir, cfg.oracle_spec["path"]), cfg.alphabet)
        oracle = TableOracle(dict(rows))
        if cfg.start_spec["kind"] == "pool":
            pairs = read_pool_csv(_resolve(cfg.base_dir, cfg.start_spec["path"]), cfg.alphabet)
        else:
            pairs = rows[: int(cfg.start_spec.get("n", 1))]
    return oracle, pairs


def run_single(cfg: RunConfig, method: str, replicate: int) -> Trajectory:
    oracle, pairs = replicate_setup(cfg, replicate)
    model = build_model(cfg) if method == "clonebo" else None
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(replicate, _METHOD_SEED_INDEX[method]))
    )
    return run_bo(oracle, pairs, method, cfg.bo, rng, model=model, replicate=replicate)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkSummary:
    steps: list[int]
    methods: dict[str, dict]

    def to_json(self) -> dict:
        return {"steps": self.steps, "methods": self.methods}


def aggregate(trajectories: list[Trajectory]) -> BenchmarkSummary:
    """Per-step mean/std (population) of best-so-far across replicates.

    Shorter trajectories are right-padded with their last best-so-far value;
    trajectories with no records contribute NaN rows and are skipped by the
    nan-aware moments.
    """
    if not trajectories:
        raise ConfigError("no trajectories to aggregate")
    n_steps = max(len(t.records) for t in trajectories)
    if n_steps == 0:
        raise ConfigError("all trajectories are empty")
    by_method: dict[str, list[np.ndarray]] = {}
    runtime: dict[str, float] = {}
    for traj in trajectories:
        curve = traj.best_so_far()
        if len(curve) == 0:
            padded = np.full(n_steps, np.nan)
        else:
            padded = np.concatenate([curve, np.full(n_steps - len(curve), curve[-1])])
        by_method.setdefault(traj.method, []).append(padded)
        runtime[traj.method] = runtime.get(traj.method, 0.0) + sum(
            r.elapsed_ms for r in traj.records
        ) / 1000.0
    methods = {}
    for method, rows in sorted(by_method.items()):
        mat = np.stack(rows)
        methods[method] = {
            "n_replicates": len(rows),
            "mean": [float(v) for v in np.nanmean(mat, axis=0)],
            "std": [float(v) for v in np.nanstd(mat, axis=0)],
            "final_best": [float(r[-1]) for r in rows],
            "runtime_sec": runtime[method],
        }
    return BenchmarkSummary(steps=list(range(1, n_steps + 1)), methods=methods)


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------


def read_pool_csv(path: str, alphabet: Alphabet) -> list[tuple[Sequence, float]]:
    rows: list[tuple[Sequence, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POOL_HEADER:
            raise MalformedInputError(f"{path}: line 1: expected header 'sequence,y'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MalformedInputError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            seq = alphabet.parse_sequence(row[0], where=f"{path}: line {lineno}: column sequence")
            try:
                y = float(row[1])
            except ValueError:
                raise MalformedInputError(
                    f"{path}: line {lineno}: column y: not a number: {row[1]!r}"
                ) from None
            rows.append((seq, y))
    return rows


def write_pool_csv(path: str, alphabet: Alphabet, pairs) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(POOL_HEADER)
        for seq, y in pairs:
            writer.writerow([alphabet.format_sequence(seq), repr(float(y))])
    os.replace(tmp, path)


def write_trajectory_csv(traj: Trajectory, path: str, alphabet: Alphabet) -> None:
    """Byte-reproducible trajectory table; elapsed_ms is written as 0 (see
    module docstring)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for r in traj.records:
            writer.writerow(
                [r.step, r.method, r.replicate, alphabet.format_sequence(r.proposed),
                 repr(r.y), repr(r.best_so_far), 0]
            )
    os.replace(tmp, path)


def write_plot_data_csv(summary: BenchmarkSummary, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "method", "mean", "std"])
        for method in sorted(summary.methods):
            stats = summary.methods[method]
            for i, step in enumerate(summary.steps):
                writer.writerow([step, method, repr(stats["mean"][i]), repr(stats["std"][i])])
    os.replace(tmp, path)


def write_summary_json(summary: BenchmarkSummary, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary.to_json(), f, indent=1, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _trajectory_path(out_dir: str, method: str, replicate: int) -> str:
    return os.path.join(out_dir, f"trajectory_{method}_rep{replicate:03d}.csv")


def _benchmark_task(doc_json: str, base_dir: str, method: str, replicate: int) -> Trajectory:
    cfg = parse_run_config(json.loads(doc_json), base_dir)
    traj = run_single(cfg, method, replicate)
    out_dir = _resolve(cfg.base_dir, cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_csv(traj, _trajectory_path(out_dir, method, replicate), cfg.alphabet)
    return traj


def run_benchmark(cfg: RunConfig, workers: int = 1) -> tuple[list[Trajectory], BenchmarkSummary]:
    tasks = [(m, r) for m in cfg.methods for r in range(cfg.replicates)]
    doc_json = json.dumps(cfg.doc)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(
                pool.map(
                    _benchmark_task,
                    [doc_json] * len(tasks),
                    [cfg.base_dir] * len(tasks),
                    [m for m, _ in tasks],
                    [r for _, r in tasks],
                )
            )
    else:
        trajectories = [_benchmark_task(doc_json, cfg.base_dir, m, r) for m, r in tasks]
    summary = aggregate(trajectories)
    out_dir = _resolve(cfg.base_dir, cfg.output_dir)
    write_summary_json(summary, os.path.join(out_dir, "summary.json"))
    write_plot_data_csv(summary, os.path.join(out_dir, "plot_data.csv"))
    return trajectories, summary


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _check_overwrite(path: str, force: bool) -> None:
    if os.path.exists(path) and not force:
        raise ConfigError(f"refusing to overwrite {path} (use --force)")


def _alphabet_from_args(args) -> Alphabet:
    return Alphabet(args.alphabet_size, args.alphabet_chars)


def _cmd_gen_data(args) -> int:
    alphabet = _alphabet_from_args(args)
    _check_overwrite(args.out_corpus, args.force)
    _check_overwrite(args.out_latents, args.force)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    families, latents = gen_synthetic_families(
        alphabet, args.length, args.alpha, args.n_families, args.members, rng
    )
    write_corpus(args.out_corpus, alphabet, families)
    doc = {
        "alphabet": {"size": alphabet.size, "chars": alphabet.chars},
        "length": args.length,
        "alpha": args.alpha,
        "seed": args.seed,
        "latents": [theta.tolist() for theta in latents],
    }
    tmp = f"{args.out_latents}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    os.replace(tmp, args.out_latents)
    print(f"wrote {args.n_families} families to {args.out_corpus}")
    return 0


def _cmd_fit_model(args) -> int:
    alphabet = _alphabet_from_args(args)
    _check_overwrite(args.out, args.force)
    corpus = read_corpus(args.corpus, alphabet)
    model = fit_markov(corpus, args.order, args.smoothing, alphabet)
    save_model(model, args.out)
    print(f"fit order-{args.order} model on {len(corpus)} families -> {args.out}")
    return 0


def _cmd_sample_clone(args) -> int:
    model = load_model(args.model)
    _check_overwrite(args.out, args.force)
    x0 = model.alphabet.parse_sequence(args.x0, where="--x0")
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    clone = sample_clone(model, x0, args.members, rng, max_len=args.max_len)
    write_corpus(args.out, model.alphabet, [clone])
    print(f"sampled clone with {clone.n_members} members -> {args.out}")
    return 0


def _cmd_posterior_sample(args) -> int:
    model = load_model(args.model)
    _check_overwrite(args.out_clone, args.force)
    _check_overwrite(args.out_diagnostics, args.force)
    pairs = read_pool_csv(args.pool, model.alphabet)
    if not pairs:
        raise ConfigError(f"{args.pool}: pool is empty")
    pool = normalize_pool(pairs)
    if args.x0:
        x0 = model.alphabet.parse_sequence(args.x0, where="--x0")
    else:
        x0 = pool.top_entries(1)[0].sequence
    params = LikelihoodParams(
        sigma_base=args.sigma_base, n_cond_max=args.n_cond_max, var_floor=args.var_floor
    )
    cond = select_conditioning_subset(model, x0, pool, params.n_cond_max)
    config = SmcConfig(
        n_particles=args.particles, n_members=args.members, max_len=args.max_len
    )
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    clone, diag = sample_posterior_clone(model, x0, cond, config, params, rng)
    write_corpus(args.out_clone, model.alphabet, [clone])
    write_diagnostics_csv(diag, args.out_diagnostics)
    print(
        f"posterior clone with {clone.n_members} members (final log p(Y|F) = "
        f"{diag.final_log_lik:.4f}) -> {args.out_clone}"
    )
    return 0


def _cmd_optimize(args) -> int:
    cfg = load_run_config(args.config)
    method = args.method or cfg.methods[0]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    traj = run_single(cfg, method, args.replicate)
    out_dir = _resolve(cfg.base_dir, cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    path = _trajectory_path(out_dir, method, args.replicate)
    write_trajectory_csv(traj, path, cfg.alphabet)
    best = traj.records[-1].best_so_far if traj.records else float("nan")
    print(f"{method} rep {args.replicate}: {len(traj.records)} steps, best {best} -> {path}")
    if traj.stop_reason:
        print(f"stopped early: {traj.stop_reason}")
    return 0


def _cmd_benchmark(args) -> int:
    cfg = load_run_config(args.config)
    trajectories, summary = run_benchmark(cfg, workers=args.workers)
    out_dir = _resolve(cfg.base_dir, cfg.output_dir)
    for method in sorted(summary.methods):
        stats = summary.methods[method]
        print(
            f"{method}: {stats['n_replicates']} replicates, "
            f"final best mean {stats['mean'][-1]:.4f} (std {stats['std'][-1]:.4f})"
        )
    print(f"summary -> {os.path.join(out_dir, 'summary.json')}")
    return 0


def _cmd_check_likelihood(args) -> int:
    cases: dict[str, dict] = {}
    with open(args.cases, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["case", "sigma", "f", "y"]:
            raise MalformedInputError(f"{args.cases}: line 1: expected header 'case,sigma,f,y'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedInputError(
                    f"{args.cases}: line {lineno}: expected 4 columns, got {len(row)}"
                )
            name = row[0].strip()
            try:
                sigma, fv, yv = float(row[1]), float(row[2]), float(row[3])
            except ValueError as e:
                raise MalformedInputError(f"{args.cases}: line {lineno}: {e}") from None
            case = cases.setdefault(name, {"sigma": sigma, "f": [], "y": []})
            if case["sigma"] != sigma:
                raise MalformedInputError(
                    f"{args.cases}: line {lineno}: column sigma: inconsistent within case {name!r}"
                )
            case["f"].append(fv)
            case["y"].append(yv)
    names = sorted(cases)
    report_rows = []
    max_err = 0.0
    all_converged = True
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ca, cb = cases[a], cases[b]
            if ca["sigma"] != cb["sigma"] or len(ca["y"]) != len(cb["y"]):
                continue
            if not np.allclose(ca["y"], cb["y"], atol=1e-12):
                continue
            sigma = ca["sigma"]
            params = LikelihoodParams(sigma_base=sigma, n_cond_max=1)  # sigma used as-is
            y = np.asarray(ca["y"])
            closed = log_marginal_likelihood(np.asarray(ca["f"]), y, params) - \
                log_marginal_likelihood(np.asarray(cb["f"]), y, params)
            qa = numeric_integration_oracle(np.asarray(ca["f"]), y, sigma, tau=args.tau)
            qb = numeric_integration_oracle(np.asarray(cb["f"]), y, sigma, tau=args.tau)
            oracle_diff = qa.log_value - qb.log_value
            err = abs(closed - oracle_diff)
            converged = qa.converged and qb.converged
            all_converged = all_converged and converged
            max_err = max(max_err, err)
            report_rows.append([a, b, repr(closed), repr(oracle_diff), repr(err), int(converged)])
    if args.out:
        tmp = f"{args.out}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["case_a", "case_b", "closed_diff", "oracle_diff", "abs_error", "converged"])
            writer.writerows(report_rows)
        os.replace(tmp, args.out)
    print(f"pairs={len(report_rows)} max_abs_error={max_err:.3e} all_converged={all_converged}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloneopt",
        description="Clone-informed Bayesian optimization of discrete sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic clonal families")
    p.add_argument("--n-families", type=int, required=True)
    p.add_argument("--members", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--alphabet-size", type=int, default=4)
    p.add_argument("--alphabet-chars", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-latents", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("fit-model", help="fit an order-k Markov model to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--smoothing", type=float, default=1e-3)
    p.add_argument("--alphabet-size", type=int, default=4)
    p.add_argument("--alphabet-chars", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_fit_model)

    p = sub.add_parser("sample-clone", help="sample a clone from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--members", type=int, default=6)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_sample_clone)

    p = sub.add_parser("posterior-sample", help="twisted SMC posterior clone sample")
    p.add_argument("--model", required=True)
    p.add_argument("--pool", required=True, help="CSV with header sequence,y")
    p.add_argument("--x0", default=None, help="seed sequence (default: best pool entry)")
    p.add_argument("--members", type=int, default=6)
    p.add_argument("--particles", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--sigma-base", type=float, default=0.25)
    p.add_argument("--n-cond-max", type=int, default=75)
    p.add_argument("--var-floor", type=float, default=1e-12)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-clone", required=True)
    p.add_argument("--out-diagnostics", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_posterior_sample)

    p = sub.add_parser("optimize", help="run one optimization trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--method", default=None, choices=METHODS)
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("benchmark", help="run methods x replicates and aggregate")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser(
        "check-likelihood",
        help="compare closed-form likelihood differences against the quadrature oracle",
    )
    p.add_argument("--cases", required=True, help="CSV with header case,sigma,f,y")
    p.add_argument("--tau", type=float, default=1e3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_check_likelihood)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MalformedInputError) as e:
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except CloneOptError as e:
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except Exception as e:  # runtime failures still emit machine-readable errors
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
