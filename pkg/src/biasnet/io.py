"""Configuration loading, trace persistence, plot data and run manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io as _io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import jsonschema
import numpy as np
import pandas as pd

from biasnet import __version__
from biasnet.chain import DEFAULT_ALPHAS
from biasnet.errors import ConfigError, ContractError, TraceParseError
from biasnet.inference.fit import McmcConfig
from biasnet.sim.config import (
    COMPOSITIONS,
    CONDITIONS,
    DEFAULT_ORACLES,
    DEFAULT_YOKING,
    RESAMPLING_TARGETS,
    SOCIAL,
    ExperimentConfig,
    OracleParams,
)
from biasnet.sim.engine import TRACE_COLUMNS, WEIGHT_COLUMNS, ExperimentTrace, trace_frame
from biasnet.stats import condition_summaries

_POS_INT = {"type": "integer", "minimum": 1}
_MCMC = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "chains": {"type": "integer", "minimum": 2},
        "iterations": _POS_INT,
        "warmup": {"type": "integer", "minimum": 0},
        "target_accept": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_tree_depth": _POS_INT,
    },
}
_ORACLE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mu_b", "sigma_b", "gamma_levels"],
    "properties": {
        "mu_b": {"type": "number"},
        "sigma_b": {"type": "number", "exclusiveMinimum": 0},
        "gamma_levels": {
            "type": "object",
            "propertyNames": {"pattern": "^[0-9]+$"},
            "additionalProperties": {"type": "number"},
        },
        "constant_c": {"type": "number"},
        "vote_weight": {"type": "number"},
    },
}

#: JSON schema of run configuration files. Every section and field is optional.
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["exp1", "exp2"]},
                "networks": _POS_INT,
                "conditions": {
                    "type": "object",
                    "propertyNames": {"enum": list(CONDITIONS)},
                    "additionalProperties": _POS_INT,
                    "minProperties": 1,
                },
                "waves": _POS_INT,
                "agents_per_wave": _POS_INT,
                "trials": _POS_INT,
                "stimulus_levels": {"type": "array", "items": _POS_INT, "minItems": 1},
                "total_dots": _POS_INT,
                "composition": {"enum": list(COMPOSITIONS)},
                "yoking": {
                    "type": "object",
                    "propertyNames": {"enum": sorted(SOCIAL)},
                    "additionalProperties": {"enum": list(CONDITIONS)},
                },
                "oracles": {
                    "type": "object",
                    "propertyNames": {"enum": list(CONDITIONS)},
                    "additionalProperties": _ORACLE,
                },
                "resampling_target": {"enum": list(RESAMPLING_TARGETS)},
                "weight_floor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "fit_pool": {"type": "array", "items": {"enum": sorted(SOCIAL)}},
                "inference": _MCMC,
                "swap_colors": {"type": "boolean"},
            },
        },
        "fit": _MCMC,
        "stationary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "beta_min": {"type": "number"},
                "beta_max": {"type": "number"},
                "beta_step": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number"},
                "n": _POS_INT,
            },
        },
        "power": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_sims": {"type": "integer", "minimum": 0},
                "hypotheses": {"enum": ["default", "directional"]},
            },
        },
    },
}

_PRESETS = {
    "exp2": dict(conditions=("asocial_motivated", "social_motivated", "social_resampling"), networks=14,
                 trials=16, composition="homogeneous"),
    "exp1": dict(conditions=("asocial_motivated", "asocial_control", "social_motivated", "social_control"),
                 networks=10, trials=8, composition="mixed"),
}
_LOOP_MCMC = McmcConfig(chains=4, iterations=600, warmup=300)


@dataclass(frozen=True)
class StationaryConfig:
    alphas: tuple = DEFAULT_ALPHAS
    beta_min: float = -3.0
    beta_max: float = 3.0
    beta_step: float = 0.1
    gamma: float = 0.0
    n: int = 8

    def beta_grid(self) -> np.ndarray:
        count = int(round((self.beta_max - self.beta_min) / self.beta_step)) + 1
        return np.round(self.beta_min + self.beta_step * np.arange(count), 12)


@dataclass(frozen=True)
class PowerConfig:
    n_sims: int = 100
    hypotheses: str = "default"


@dataclass
class RunConfig:
    """Resolved configuration. ``document`` is the canonical JSON form."""

    seed: int
    experiment: ExperimentConfig
    fit: McmcConfig
    stationary: StationaryConfig
    power: PowerConfig
    document: dict

    @property
    def digest(self) -> str:
        return config_digest(self.document)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def config_digest(doc) -> str:
    raw = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()
    return hashlib.sha256(raw).hexdigest()


def _mcmc(section: dict, default: McmcConfig, seed: int, path: str) -> McmcConfig:
    values = {k: section.get(k, getattr(default, k))
              for k in ("chains", "iterations", "warmup", "target_accept", "max_tree_depth")}
    try:
        return McmcConfig(seed=seed, **values)
    except ContractError as exc:
        raise ConfigError(str(exc), path) from exc


def _oracle(doc: dict, path: str) -> OracleParams:
    try:
        return OracleParams(doc["mu_b"], doc["sigma_b"], {int(k): v for k, v in doc["gamma_levels"].items()},
                            doc.get("constant_c", 0.0), doc.get("vote_weight"))
    except ConfigError as exc:
        raise ConfigError(exc.detail, f"{path}.{exc.path}" if exc.path else path) from exc


def resolve_config(raw: dict) -> RunConfig:
    """Validate ``raw`` against the schema and fill in every default."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(err.message, path)

    seed = raw.get("seed", 0)
    ex = dict(raw.get("experiment", {}))
    preset = ex.get("preset", "exp2")
    pre = _PRESETS[preset]
    networks = ex.get("networks", pre["networks"])
    conditions = ex.get("conditions", {c: networks for c in pre["conditions"]})
    oracle_docs = {c: o.to_dict() for c, o in DEFAULT_ORACLES.items() if c in conditions}
    oracle_docs.update(ex.get("oracles", {}))
    oracles = {c: _oracle(d, f"experiment.oracles.{c}") for c, d in oracle_docs.items()}
    loop = _mcmc(ex.get("inference", {}), _LOOP_MCMC, seed, "experiment.inference")
    kwargs = dict(
        conditions=conditions,
        waves=ex.get("waves", 8),
        agents_per_wave=ex.get("agents_per_wave", 8),
        trials=ex.get("trials", pre["trials"]),
        stimulus_levels=tuple(ex.get("stimulus_levels", (48, 49, 51, 52))),
        total_dots=ex.get("total_dots", 100),
        composition=ex.get("composition", pre["composition"]),
        yoking={c: s for c, s in ex.get("yoking", DEFAULT_YOKING).items() if c in conditions},
        seed=seed,
        oracles=oracles,
        inference=loop,
        resampling_target=ex.get("resampling_target", "zero"),
        weight_floor=ex.get("weight_floor", 1e-9),
        fit_pool=tuple(ex.get("fit_pool", ("social_motivated", "social_resampling"))),
        swap_colors=ex.get("swap_colors", False),
    )
    try:
        experiment = ExperimentConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(exc.detail, f"experiment.{exc.path}" if exc.path else "experiment") from exc

    fit = _mcmc(raw.get("fit", {}), McmcConfig(), seed, "fit")
    st = raw.get("stationary", {})
    stationary = StationaryConfig(**{**StationaryConfig().__dict__, **st, "alphas": tuple(st.get("alphas", DEFAULT_ALPHAS))})
    if stationary.beta_max < stationary.beta_min:
        raise ConfigError("must not be below beta_min", "stationary.beta_max")
    power = PowerConfig(**raw.get("power", {}))

    mcmc_doc = lambda m: {k: v for k, v in m.to_dict().items() if k != "seed"}  # noqa: E731
    document = {
        "seed": seed,
        "experiment": {
            "preset": preset,
            "networks": networks,
            "conditions": dict(experiment.conditions),
            "waves": experiment.waves,
            "agents_per_wave": experiment.agents_per_wave,
            "trials": experiment.trials,
            "stimulus_levels": list(experiment.stimulus_levels),
            "total_dots": experiment.total_dots,
            "composition": experiment.composition,
            "yoking": dict(experiment.yoking),
            "oracles": {c: o.to_dict() for c, o in experiment.oracles.items()},
            "resampling_target": experiment.resampling_target,
            "weight_floor": experiment.weight_floor,
            "fit_pool": list(experiment.fit_pool),
            "inference": mcmc_doc(loop),
            "swap_colors": experiment.swap_colors,
        },
        "fit": mcmc_doc(fit),
        "stationary": {**stationary.__dict__, "alphas": list(stationary.alphas)},
        "power": dict(power.__dict__),
    }
    return RunConfig(seed, experiment, fit, stationary, power, document)


def load_config(path: Union[str, Path, None] = None, seed: Optional[int] = None) -> RunConfig:
    """Read a JSON config file (or defaults when ``path`` is None).

    ``seed`` overrides the file's master seed.
    """
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "<root>") from exc
    if seed is not None and isinstance(raw, dict):
        raw = {**raw, "seed": seed}
    return resolve_config(raw)


def serialize_config(config: RunConfig) -> str:
    return canonical_json(config.document)


# -- traces -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None or v is pd.NA or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def persist_trace(trace: ExperimentTrace, path) -> None:
    """Write the trace rows as CSV with the fixed header ``TRACE_COLUMNS``.

    Booleans are ``true``/``false``; absent social fields are empty cells.
    """
    rows = trace.rows[TRACE_COLUMNS]
    _write_csv(path, TRACE_COLUMNS, rows.itertuples(index=False, name=None))


def persist_weights(trace: ExperimentTrace, path) -> None:
    _write_csv(path, WEIGHT_COLUMNS, trace.weights[WEIGHT_COLUMNS].itertuples(index=False, name=None))


def _parse_int(s, optional=False):
    if s == "" and optional:
        return None
    return int(s)


def _parse_bool(s):
    if s == "true":
        return True
    if s == "false":
        return False
    raise ValueError(f"expected true or false, got {s!r}")


_PARSERS = {
    "simulation_id": _parse_int, "condition": str, "network": _parse_int, "wave": _parse_int,
    "trial": _parse_int, "stimulus_level": _parse_int, "agent_id": str, "motivated_color": str,
    "observed_k": lambda s: _parse_int(s, True), "presented_color": lambda s: s or None,
    "presented_count": lambda s: _parse_int(s, True), "chose_green": _parse_bool,
    "chose_motivated": _parse_bool, "chose_correct": _parse_bool, "resampled": str,
}


def load_trace(path, total_dots: int = 100) -> ExperimentTrace:
    """Read a CSV written by :func:`persist_trace`.

    Raises
    ------
    TraceParseError
        On a wrong header or a malformed row; the message carries the line number.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_COLUMNS:
            raise TraceParseError(f"header must be {','.join(TRACE_COLUMNS)}", 1)
        parsers = [_PARSERS[c] for c in TRACE_COLUMNS]
        for row in reader:
            line = reader.line_num
            if len(row) != len(TRACE_COLUMNS):
                raise TraceParseError(f"expected {len(TRACE_COLUMNS)} fields, found {len(row)}", line)
            try:
                records.append(tuple(p(v) for p, v in zip(parsers, row)))
            except ValueError as exc:
                raise TraceParseError(str(exc), line) from exc
    return ExperimentTrace(trace_frame(records, total_dots))


# -- plot data --------------------------------------------------------------

PLOT_KINDS = ("fig2_stationary", "fig3_bars", "fig4_bars", "figS4_waves")
PLOT_COLUMNS = {
    "fig2_stationary": ["alpha", "beta", "mean_green", "individual_green"],
    "fig3_bars": ["condition", "metric", "n", "value", "se"],
    "fig4_bars": ["condition", "metric", "n", "value", "se"],
    "figS4_waves": ["condition", "wave", "metric", "n", "value", "se"],
}
_BAR_CONDITIONS = {
    "fig3_bars": {"asocial_motivated", "asocial_control", "social_motivated", "social_control"},
    "fig4_bars": {"asocial_motivated", "social_motivated", "social_resampling"},
}


def plot_data(source, kind: str) -> pd.DataFrame:
    """Long-form table for one figure kind.

    ``fig2_stationary`` takes an amplification curve table. The bar and
    wave kinds take a trace (or its rows) or a condition-summary table.
    """
    if kind not in PLOT_KINDS:
        raise ContractError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    if kind == "fig2_stationary":
        if not isinstance(source, pd.DataFrame) or not {"alpha", "beta", "mean_green"} <= set(source.columns):
            raise ContractError("fig2_stationary needs an amplification curve table")
        return source[PLOT_COLUMNS[kind]].reset_index(drop=True)
    frame = source.rows if isinstance(source, ExperimentTrace) else source
    if not isinstance(frame, pd.DataFrame):
        raise ContractError(f"{kind} needs a trace or summary table")
    if "chose_motivated" in frame.columns:
        summaries = condition_summaries(frame, by_wave=True)
    elif {"condition", "wave", "metric", "value", "se"} <= set(frame.columns):
        summaries = frame
    else:
        raise ContractError(f"{kind} needs a trace or summary table, got columns {list(frame.columns)}")
    if kind in _BAR_CONDITIONS:
        extra = set(summaries["condition"]) - _BAR_CONDITIONS[kind]
        if extra:
            raise ContractError(f"{kind} does not show conditions {sorted(extra)}")
        out = summaries[summaries["wave"] == "all"]
    else:
        out = summaries[summaries["wave"] != "all"]
        if out.empty and len(summaries):
            raise ContractError("figS4_waves needs per-wave summaries")
    return out[PLOT_COLUMNS[kind]].reset_index(drop=True)


def write_table(df: pd.DataFrame, path) -> None:
    """Deterministic CSV: fixed column order, repr floats, no index."""
    _write_csv(path, list(df.columns), df.itertuples(index=False, name=None))


def emit_plot_data(source, kind: str, path) -> Path:
    write_table(plot_data(source, kind), path)
    return Path(path)


# -- manifest ---------------------------------------------------------------

def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
              else _dt.datetime.now(_dt.timezone.utc))
    return moment.replace(microsecond=0).isoformat()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Provenance for one run directory.

    Timestamps honour ``SOURCE_DATE_EPOCH`` so that reruns can be
    byte-identical.
    """

    command: str
    seed: int
    config_digest: str
    config: dict
    sub_seeds: Dict[str, Any] = field(default_factory=dict)
    outputs: List[dict] = field(default_factory=list)
    version: str = __version__
    started: str = field(default_factory=_timestamp)
    finished: Optional[str] = None

    def add_output(self, path, root) -> None:
        path = Path(path)
        self.outputs.append({"path": path.relative_to(root).as_posix(), "sha256": file_sha256(path),
                             "bytes": path.stat().st_size})

    def to_dict(self) -> dict:
        return {
            "version": self.version, "command": self.command, "seed": self.seed,
            "config_digest": self.config_digest, "config": self.config, "sub_seeds": self.sub_seeds,
            "timestamps": {"started": self.started, "finished": self.finished},
            "outputs": sorted(self.outputs, key=lambda o: o["path"]),
        }

    def write(self, out_dir) -> Path:
        self.finished = _timestamp()
        path = Path(out_dir) / "manifest.json"
        path.write_text(canonical_json(self.to_dict()))
        return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
