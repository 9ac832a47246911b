"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or convergence
error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from biasnet import io as bio
from biasnet.chain import amplification_curve
from biasnet.errors import BiasnetError, ConfigError, TraceParseError
from biasnet.inference.fit import fit_posterior
from biasnet.inference.model import VARIANTS, InferenceDataset, ModelSpec
from biasnet.resample import (
    JudgmentRecord,
    JudgmentSet,
    expected_green_count,
    normalize_weights,
    presented_signal,
    resample_indices,
)
from biasnet.sim.engine import run_experiment, stage_seeds, stream
from biasnet.sim.plan import build_experiment
from biasnet.sim.power import DEFAULT_HYPOTHESES, DIRECTIONAL_HYPOTHESES, run_power_analysis
from biasnet.stats import condition_summaries, condition_tests

log = logging.getLogger("biasnet")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

CONDITION_PAIRS = (
    ("asocial_motivated", "social_motivated"),
    ("asocial_control", "social_control"),
    ("asocial_control", "asocial_motivated"),
    ("social_control", "social_motivated"),
    ("social_resampling", "social_motivated"),
    ("asocial_motivated", "social_resampling"),
)


class _Run:
    """Output directory plus manifest bookkeeping for one command."""

    def __init__(self, args, command, config: bio.RunConfig):
        self.root = Path(args.out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = bio.RunManifest(command, config.seed, config.digest, config.document)

    def path(self, name) -> Path:
        return self.root / name

    def table(self, df, name):
        bio.write_table(df, self.path(name))
        self.manifest.add_output(self.path(name), self.root)

    def json(self, doc, name):
        self.path(name).write_text(bio.canonical_json(doc))
        self.manifest.add_output(self.path(name), self.root)

    def added(self, name):
        self.manifest.add_output(self.path(name), self.root)

    def close(self):
        self.manifest.write(self.root)


def _config(args) -> bio.RunConfig:
    return bio.load_config(args.config, seed=args.seed)


def cmd_stationary(args) -> int:
    cfg = _config(args)
    st = cfg.stationary
    curve, dists = amplification_curve(st.alphas, st.beta_grid(), st.gamma, st.n, with_distributions=True)
    run = _Run(args, "stationary", cfg)
    run.table(curve, "curve.csv")
    run.table(dists, "distributions.csv")
    bio.emit_plot_data(curve, "fig2_stationary", run.path("fig2_stationary.csv"))
    run.added("fig2_stationary.csv")
    run.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    plan = build_experiment(cfg.experiment)
    trace = run_experiment(plan, simulation_id=args.simulation_id)
    run = _Run(args, "simulate", cfg)
    run.manifest.sub_seeds = stage_seeds(cfg.experiment, args.simulation_id)
    bio.persist_trace(trace, run.path("trace.csv"))
    run.added("trace.csv")
    bio.persist_weights(trace, run.path("weights.csv"))
    run.added("weights.csv")
    run.table(trace.agents, "agents.csv")
    run.json(trace.meta, "trace_meta.json")
    run.close()
    return EXIT_OK


def trace_dataset(rows: pd.DataFrame, variant: str, group_size: int = 8) -> InferenceDataset:
    """Psychometric-model data from trace rows; stimuli keyed by green-dot count."""
    social = ModelSpec.for_variant(variant).include_social
    return InferenceDataset.from_rows(
        rows["agent_id"].tolist(), rows["stimulus_level"].tolist(), rows["chose_green"].tolist(),
        rows["motivated_color"].tolist(),
        social_k=[int(k) for k in rows["observed_k"]] if social else None, group_size=group_size)


DATASET_COLUMNS = ("participant_id", "stimulus_level", "chose_green", "motivated_color")


def _truthy(values):
    return [str(v).strip().lower() in ("1", "true") for v in values]


def read_dataset(path, variant: str, group_size: int = 8) -> InferenceDataset:
    """Dataset CSV with ``participant_id, stimulus_level, chose_green, motivated_color[, social_k]``."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in DATASET_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"missing columns {missing}", str(path))
    social = ModelSpec.for_variant(variant).include_social
    if social and "social_k" not in df.columns:
        raise ConfigError("the social variant needs a social_k column", str(path))
    return InferenceDataset.from_rows(
        df["participant_id"].tolist(), df["stimulus_level"].tolist(), _truthy(df["chose_green"]),
        df["motivated_color"].tolist(), social_k=[int(k) for k in df["social_k"]] if social else None,
        group_size=group_size)


def cmd_fit(args) -> int:
    """Fit to a simulated trace (filtered by condition and wave) or to a plain dataset CSV."""
    cfg = _config(args)
    with open(args.data) as fh:
        is_trace = fh.readline().strip() == ",".join(bio.TRACE_COLUMNS)
    spec = ModelSpec.for_variant(args.variant)
    if is_trace:
        rows = bio.load_trace(args.data).rows
        if args.condition:
            rows = rows[rows["condition"].isin(args.condition)]
        if args.wave:
            rows = rows[rows["wave"].isin(args.wave)]
        if rows.empty:
            raise ConfigError("no trace rows match the selected conditions and waves", "--condition/--wave")
        data = trace_dataset(rows, args.variant, cfg.experiment.agents_per_wave)
    else:
        data = read_dataset(args.data, args.variant, cfg.experiment.agents_per_wave)
    draws = fit_posterior(spec, data, cfg.fit, workers=args.threads)
    summary = draws.summary()
    run = _Run(args, "fit", cfg)
    run.manifest.sub_seeds = {"chains": [int(s.generate_state(1, np.uint32)[0])
                                         for s in np.random.SeedSequence(cfg.fit.seed).spawn(cfg.fit.chains)]}
    run.table(summary, "posterior_summary.csv")
    run.json({
        "variant": args.variant, "rows": len(data), "participants": data.n_participants,
        "stimuli": data.n_stimuli, "warnings": list(draws.warnings), "degenerate": list(draws.degenerate),
        "parameters": summary.to_dict(orient="records"),
    }, "posterior.json")
    run.close()
    return EXIT_OK


def cmd_resample(args) -> int:
    """Weight and resample judgment sets read from CSV.

    Input columns: set_id, participant_id, chose_green, bias, gamma, with
    ``bias`` and ``gamma`` on the green log-odds axis.
    """
    cfg = _config(args)
    df = pd.read_csv(args.judgments)
    missing = {"set_id", "participant_id", "chose_green", "bias", "gamma"} - set(df.columns)
    if missing:
        raise ConfigError(f"missing columns {sorted(missing)}", str(args.judgments))
    floor = cfg.experiment.weight_floor
    weight_rows, draw_rows = [], []
    for set_idx, (set_id, g) in enumerate(df.groupby("set_id", sort=True)):
        records = [JudgmentRecord.from_fit(str(r.participant_id), str(set_id), bool(r.chose_green), r.bias,
                                           r.gamma, args.target_bias) for r in g.itertuples()]
        js = JudgmentSet(records, len(records))
        w = normalize_weights(js, floor)
        flags = np.array(js.chose_green, dtype=bool)
        for i, rec in enumerate(records):
            weight_rows.append((set_id, rec.participant_id, rec.chose_green, rec.q_green, rec.p_green,
                                float(w.unnormalized[i]), float(w.normalized[i]), bool(w.floored[i]),
                                w.uniform_fallback))
        expected = expected_green_count(js, w)
        for rcp in range(args.recipients):
            rng = stream(cfg.seed, set_idx, rcp)
            idx = resample_indices(w.normalized, len(records), rng)
            color, count = presented_signal(flags[idx], "green", rng)
            draw_rows.append((set_id, rcp, ";".join(map(str, idx)), int(flags[idx].sum()), expected,
                              color, count))
    run = _Run(args, "resample", cfg)
    run.table(pd.DataFrame(weight_rows, columns=["set_id", "participant_id", "chose_green", "q_green", "p_green",
                                                 "weight", "normalized", "floored", "uniform_fallback"]),
              "weights.csv")
    run.table(pd.DataFrame(draw_rows, columns=["set_id", "recipient", "indices", "green_count",
                                               "expected_green_count", "presented_color", "presented_count"]),
              "resamples.csv")
    run.close()
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    trace = bio.load_trace(args.trace, cfg.experiment.total_dots)
    run = _Run(args, "analyze", cfg)
    run.manifest.config["trace_sha256"] = bio.file_sha256(args.trace)
    summaries = condition_summaries(trace, args.partition, by_wave=True, group_size=cfg.experiment.agents_per_wave)
    run.table(summaries, "summaries.csv")
    tests = condition_tests(trace, CONDITION_PAIRS, partition=args.partition,
                            replication_effects=args.replication_effects)
    run.table(tests, "tests.csv")
    present = set(trace.rows["condition"])
    for kind in ("fig3_bars", "fig4_bars", "figS4_waves"):
        if kind in bio._BAR_CONDITIONS and not present <= bio._BAR_CONDITIONS[kind]:
            continue
        run.table(bio.plot_data(summaries, kind), f"{kind}.csv")
    run.close()
    return EXIT_OK


def cmd_power(args) -> int:
    cfg = _config(args)
    n_sims = cfg.power.n_sims if args.n_sims is None else args.n_sims
    suite = DIRECTIONAL_HYPOTHESES if cfg.power.hypotheses == "directional" else DEFAULT_HYPOTHESES
    result = run_power_analysis(cfg.experiment, n_sims, suite, workers=args.threads)
    run = _Run(args, "power", cfg)
    run.table(result.table, "power.csv")
    rates = result.confirmation_rates()
    run.json({
        "n_sims": n_sims, "failures": result.failures.to_dict(orient="records"),
        "confirmation_rates": {k: float(v) for k, v in rates.items()},
        "fraction_all_confirmed": result.fraction_all_confirmed if len(result.table) else None,
    }, "power_summary.json")
    run.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def flags(suppress):
        parser = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config file)")
        parser.add_argument("--out-dir", default=d("."), help="directory for outputs and manifest.json")
        parser.add_argument("--threads", type=int, default=d(1), help="worker processes; results do not depend on it")
        parser.add_argument("--config", default=d(None), help="JSON run configuration")
        parser.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return parser

    # global flags may appear before or after the subcommand
    top, common = flags(False), flags(True)

    p = argparse.ArgumentParser(prog="biasnet", description=__doc__.splitlines()[0], parents=[top])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stationary", parents=[common], help="stationary distributions over the alpha/beta grid")
    s.set_defaults(func=cmd_stationary)

    s = sub.add_parser("simulate", parents=[common], help="simulate one experiment and write its trace")
    s.add_argument("--simulation-id", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[common], help="fit a psychometric model to trace rows")
    s.add_argument("data", help="trace CSV or dataset CSV")
    s.add_argument("--variant", choices=VARIANTS, default="exp1_asocial")
    s.add_argument("--condition", action="append", help="keep rows of this condition (repeatable)")
    s.add_argument("--wave", action="append", type=int, help="keep rows of this wave (repeatable)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("resample", parents=[common], help="importance weights and resamples for judgment sets")
    s.add_argument("judgments")
    s.add_argument("--target-bias", type=float, default=0.0)
    s.add_argument("--recipients", type=int, default=8)
    s.set_defaults(func=cmd_resample)

    s = sub.add_parser("analyze", parents=[common], help="condition summaries and likelihood-ratio tests")
    s.add_argument("trace")
    s.add_argument("--partition", default="all",
                   choices=("all", "matched_only", "nonmatched_only", "tie_trials_only"))
    s.add_argument("--replication-effects", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("power", parents=[common], help="simulation-based power analysis")
    s.add_argument("--n-sims", type=int, default=None)
    s.set_defaults(func=cmd_power)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BiasnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
