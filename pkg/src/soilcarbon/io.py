"""File formats, experiment loading, synthetic data, and result export.

All tabular data is CSV with fixed headers:

* plots:        ``id,treatment,area,x,y``
* forcing:      ``plot_id,month,P,M,rate_mod``  (month = 1..T per plot)
* observations: ``plot_id,month,type,value``    (month = 0..T, type TOC/POC/ROC)

The experiment configuration is a JSON document referencing those files.
Floats are written with ``repr``, so every writer/reader pair round-trips
byte-exactly for canonicalized inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import sample
from .inference.data import FRACTION_NAMES, Observation, PlotData
from .inference.sampling import ChainDraws, SamplerConfig
from .pools import POOL_NAMES, Forcing, NoiseParams, PoolState
from .priortable import (
    SIGMA2_MEAS_NAMES,
    SIGMA2_PROCESS_NAMES,
    PriorTable,
    apply_scenario,
    default_priors,
    init_name,
    prior_from_dict,
)
from .simulate import params_from_values, simulate_trajectory

__all__ = [
    "ValidationError",
    "PlotRecord",
    "ExperimentConfig",
    "SyntheticTruth",
    "load_config",
    "load_experiment",
    "build_priors",
    "write_plots",
    "write_forcing",
    "write_observations",
    "generate_synthetic",
    "write_truth",
    "export_draws",
    "read_draws",
    "export_report",
    "write_manifest",
    "config_hash",
]

PLOTS_HEADER = ("id", "treatment", "area", "x", "y")
FORCING_HEADER = ("plot_id", "month", "P", "M", "rate_mod")
OBS_HEADER = ("plot_id", "month", "type", "value")

SCENARIOS = ("N", "A", "B")


class ValidationError(ValueError):
    """Input rejected, with file and line context where available."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class PlotRecord:
    """One row of the plot table."""

    id: str
    treatment: str
    area: float
    x: float
    y: float


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one fit."""

    plots_file: str
    forcing_file: str
    observations_file: str
    scenario: str = "N"
    seed: int = 0
    prior_overrides: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    plot_table: tuple = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(
                f"scenario must be one of {SCENARIOS}, got {self.scenario!r}"
            )

    def sampler_config(self, **overrides) -> SamplerConfig:
        """SamplerConfig from the config's sampler block plus overrides."""
        known = {
            "chains": "n_chains",
            "warmup": "n_warmup",
            "iters": "n_iter",
            "thin": "thin",
            "max_depth": "max_depth",
            "target_accept": "target_accept",
            "workers": "n_workers",
        }
        kwargs = {"seed": self.seed}
        for key, value in self.sampler.items():
            if key not in known:
                raise ValidationError(f"unknown sampler setting {key!r}")
            kwargs[known[key]] = value
        for key, value in overrides.items():
            if value is not None:
                kwargs[key] = value
        return SamplerConfig(**kwargs)

    def to_json_dict(self) -> dict:
        return {
            "plots": self.plots_file,
            "forcing": self.forcing_file,
            "observations": self.observations_file,
            "scenario": self.scenario,
            "seed": self.seed,
            "prior_overrides": self.prior_overrides,
            "sampler": self.sampler,
        }


def load_config(path) -> ExperimentConfig:
    """Parse and validate the JSON experiment configuration."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError("config file not found", path=path)
    except json.JSONDecodeError as err:
        raise ValidationError(f"invalid JSON: {err}", path=path, line=err.lineno)
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object", path=path)
    required = ("plots", "forcing", "observations")
    for key in required:
        if key not in raw:
            raise ValidationError(f"missing required key {key!r}", path=path)
    allowed = set(required) | {"scenario", "seed", "prior_overrides", "sampler"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(
            f"unknown config keys: {sorted(unknown)}", path=path
        )
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        return ExperimentConfig(
            plots_file=resolve(raw["plots"]),
            forcing_file=resolve(raw["forcing"]),
            observations_file=resolve(raw["observations"]),
            scenario=raw.get("scenario", "N"),
            seed=int(raw.get("seed", 0)),
            prior_overrides=dict(raw.get("prior_overrides", {})),
            sampler=dict(raw.get("sampler", {})),
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ValidationError):
            raise
        raise ValidationError(str(err), path=path)


def _read_rows(path, header):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ValidationError("file not found", path=path)
    with fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValidationError("empty file", path=path, line=1)
        if tuple(first) != header:
            raise ValidationError(
                f"expected header {','.join(header)!r}, got {','.join(first)!r}",
                path=path,
                line=1,
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"expected {len(header)} columns, got {len(row)}",
                    path=path,
                    line=lineno,
                )
            rows.append((lineno, row))
    return rows


def _parse_float(text, what, path, line):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{what} is not a number: {text!r}", path, line)
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {text!r}", path, line)
    return value


def _parse_int(text, what, path, line):
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{what} is not an integer: {text!r}", path, line)


def load_experiment(config_path):
    """Load and cross-validate a full experiment.

    Returns ``(config, plots)`` where the config carries the plot table
    (with spatial coordinates) and ``plots`` is a list of PlotData in
    plot-table order.
    """
    config = load_config(config_path)

    records = []
    seen = set()
    for lineno, row in _read_rows(config.plots_file, PLOTS_HEADER):
        pid, treatment, area, x, y = row
        if not pid:
            raise ValidationError("empty plot id", config.plots_file, lineno)
        if pid in seen:
            raise ValidationError(
                f"duplicate plot id {pid!r}", config.plots_file, lineno
            )
        seen.add(pid)
        if not treatment:
            raise ValidationError(
                f"empty treatment for plot {pid!r}", config.plots_file, lineno
            )
        area_v = _parse_float(area, "area", config.plots_file, lineno)
        if area_v <= 0.0:
            raise ValidationError(
                f"area must be > 0 for plot {pid!r}, got {area}",
                config.plots_file,
                lineno,
            )
        records.append(
            PlotRecord(
                pid,
                treatment,
                area_v,
                _parse_float(x, "x", config.plots_file, lineno),
                _parse_float(y, "y", config.plots_file, lineno),
            )
        )
    if not records:
        raise ValidationError("plot table has no rows", config.plots_file)
    by_id = {r.id: r for r in records}

    forcing_rows: dict = {r.id: {} for r in records}
    for lineno, row in _read_rows(config.forcing_file, FORCING_HEADER):
        pid, month, p, m, rate_mod = row
        if pid not in by_id:
            raise ValidationError(
                f"forcing references unknown plot id {pid!r}",
                config.forcing_file,
                lineno,
            )
        month_v = _parse_int(month, "month", config.forcing_file, lineno)
        if month_v < 1:
            raise ValidationError(
                f"forcing months start at 1, got {month_v}",
                config.forcing_file,
                lineno,
            )
        if month_v in forcing_rows[pid]:
            raise ValidationError(
                f"duplicate forcing row for plot {pid!r} month {month_v}",
                config.forcing_file,
                lineno,
            )
        try:
            forcing_rows[pid][month_v] = Forcing(
                p=_parse_float(p, "P", config.forcing_file, lineno),
                m=_parse_float(m, "M", config.forcing_file, lineno),
                rate_mod=_parse_float(
                    rate_mod, "rate_mod", config.forcing_file, lineno
                ),
            )
        except ValueError as err:
            raise ValidationError(str(err), config.forcing_file, lineno)
    for pid, rows in forcing_rows.items():
        if not rows:
            raise ValidationError(
                f"plot {pid!r} has no forcing rows", config.forcing_file
            )
        months = sorted(rows)
        if months != list(range(1, len(months) + 1)):
            raise ValidationError(
                f"plot {pid!r} forcing months must be contiguous 1..T, "
                f"got {months}",
                config.forcing_file,
            )

    observations: dict = {r.id: [] for r in records}
    for lineno, row in _read_rows(config.observations_file, OBS_HEADER):
        pid, month, kind, value = row
        if pid not in by_id:
            raise ValidationError(
                f"observation references unknown plot id {pid!r}",
                config.observations_file,
                lineno,
            )
        month_v = _parse_int(month, "month", config.observations_file, lineno)
        horizon = len(forcing_rows[pid])
        if not 0 <= month_v <= horizon:
            raise ValidationError(
                f"observation month {month_v} outside 0..{horizon} "
                f"for plot {pid!r}",
                config.observations_file,
                lineno,
            )
        if kind not in FRACTION_NAMES:
            raise ValidationError(
                f"observation type must be one of {FRACTION_NAMES}, "
                f"got {kind!r}",
                config.observations_file,
                lineno,
            )
        value_v = _parse_float(value, "value", config.observations_file, lineno)
        if value_v <= 0.0:
            raise ValidationError(
                f"observation value must be > 0, got {value}",
                config.observations_file,
                lineno,
            )
        observations[pid].append(Observation(month_v, kind, value_v))

    plots = [
        PlotData(
            plot_id=r.id,
            treatment=r.treatment,
            area=r.area,
            forcing=tuple(
                forcing_rows[r.id][t]
                for t in range(1, len(forcing_rows[r.id]) + 1)
            ),
            observations=tuple(observations[r.id]),
        )
        for r in records
    ]
    config = replace(config, plot_table=tuple(records))
    return config, plots


def build_priors(config: ExperimentConfig) -> PriorTable:
    """Prior table for an experiment: defaults, overrides, then scenario."""
    if not config.plot_table:
        raise ValidationError("config carries no plot table; load it first")
    treatments = tuple(dict.fromkeys(r.treatment for r in config.plot_table))
    table = default_priors(n_plots=len(config.plot_table), treatments=treatments)
    if config.prior_overrides:
        try:
            overrides = {
                name: prior_from_dict(spec)
                for name, spec in config.prior_overrides.items()
            }
            table = table.replace(overrides)
        except (KeyError, ValueError) as err:
            raise ValidationError(f"bad prior override: {err}")
    return apply_scenario(table, config.scenario)


# ----------------------------------------------------------------------
# writers


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value))


def write_plots(path, plot_table):
    _write_csv(
        path,
        PLOTS_HEADER,
        [
            (r.id, r.treatment, _fmt(r.area), _fmt(r.x), _fmt(r.y))
            for r in plot_table
        ],
    )


def write_forcing(path, plots):
    rows = []
    for plot in plots:
        for t, f in enumerate(plot.forcing, start=1):
            rows.append(
                (plot.plot_id, t, _fmt(f.p), _fmt(f.m), _fmt(f.rate_mod))
            )
    _write_csv(path, FORCING_HEADER, rows)


def write_observations(path, plots):
    rows = []
    for plot in plots:
        for o in plot.observations:
            rows.append((plot.plot_id, o.month, o.kind, _fmt(o.value)))
    _write_csv(path, OBS_HEADER, rows)


# ----------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticTruth:
    """The generating values behind a synthetic dataset."""

    seed: int
    values: dict  # prior-table name -> generating value
    trajectories: dict  # plot id -> (T+1, 6) array of pool states

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "values": self.values,
            "trajectories": {
                pid: traj.tolist() for pid, traj in self.trajectories.items()
            },
        }


def generate_synthetic(
    plots,
    priors: PriorTable,
    seed: int,
    obs_months,
    kinds=FRACTION_NAMES,
    theta: dict | None = None,
    max_retries: int = 100,
):
    """Simulate a synthetic dataset under the model.

    Parameter values come from ``theta`` where given and are drawn from
    ``priors`` otherwise; trajectories are stochastic forward simulations
    (retried on degenerate states); observations follow the lognormal
    measurement model at the requested months, for each type in ``kinds``.
    Plot positions in ``plots`` index the initial-condition priors.

    All-zero process variances switch the trajectories to the
    deterministic mean path; a zero measurement variance makes that type's
    observations equal the fraction sums exactly.

    Returns ``(plots_with_observations, SyntheticTruth)``; the same seed
    reproduces identical output.
    """
    plots = list(plots)
    if isinstance(obs_months, dict):
        months_for = lambda pid: obs_months[pid]
    else:
        months_for = lambda pid: obs_months
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))

    theta = dict(theta or {})
    values = {}
    for name in priors.names():
        if name in theta:
            values[name] = float(theta[name])
        else:
            values[name] = float(sample(priors[name], rng))
    unknown = set(theta) - set(values)
    if unknown:
        raise ValidationError(f"theta has unknown entries: {sorted(unknown)}")

    proc_zero = [values[n] == 0.0 for n in SIGMA2_PROCESS_NAMES]
    if any(proc_zero) and not all(proc_zero):
        raise ValidationError(
            "process variances must be all zero or all positive"
        )
    noise_free_process = all(proc_zero)
    meas_sigma2 = {
        kind: values[name]
        for kind, name in zip(FRACTION_NAMES, SIGMA2_MEAS_NAMES)
    }
    safe = dict(values)
    for name in SIGMA2_PROCESS_NAMES + SIGMA2_MEAS_NAMES:
        if safe[name] == 0.0:
            safe[name] = 1.0  # placeholder; the zero branch never uses it
    treatments = tuple(dict.fromkeys(p.treatment for p in plots))
    params = params_from_values(safe, treatments)

    out_plots = []
    trajectories = {}
    for p_idx, plot in enumerate(plots):
        init = PoolState(
            *(max(values[init_name(p_idx, pool)], 1e-6) for pool in POOL_NAMES)
        )
        traj, _ = simulate_trajectory(
            params,
            init,
            plot.treatment,
            plot.forcing,
            rng=rng,
            stochastic=not noise_free_process,
            max_retries=max_retries,
        )
        trajectories[plot.plot_id] = traj.as_matrix()
        obs = []
        for month in sorted(months_for(plot.plot_id)):
            if not 0 <= month <= plot.n_months:
                raise ValidationError(
                    f"synthetic observation month {month} outside 0.."
                    f"{plot.n_months} for plot {plot.plot_id!r}"
                )
            fractions = dict(
                zip(
                    FRACTION_NAMES,
                    (
                        traj[month].total(),
                        traj[month].d + traj[month].r + traj[month].f,
                        traj[month].i,
                    ),
                )
            )
            for kind in kinds:
                s2 = meas_sigma2[kind]
                if s2 == 0.0:
                    z = fractions[kind]
                else:
                    z = math.exp(
                        rng.normal(
                            math.log(fractions[kind]) - 0.5 * s2, math.sqrt(s2)
                        )
                    )
                obs.append(Observation(month, kind, z))
        out_plots.append(
            PlotData(
                plot.plot_id, plot.treatment, plot.area,
                plot.forcing, tuple(obs),
            )
        )
    truth = SyntheticTruth(seed=seed, values=values, trajectories=trajectories)
    return out_plots, truth


def write_truth(path, truth: SyntheticTruth):
    _write_json(path, truth.to_json_dict())


# ----------------------------------------------------------------------
# results


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_draws(chains, outdir) -> list:
    """One CSV per chain (header: coordinate names). Returns the paths."""
    if not chains:
        raise ValueError("no chains to export")
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for chain in chains:
        path = os.path.join(outdir, f"draws_chain{chain.chain_id}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(chain.names)
            for row in chain.draws:
                writer.writerow([_fmt(v) for v in row])
        paths.append(path)
    return paths


def read_draws(path, chain_id: int | None = None) -> ChainDraws:
    """Re-import a draws CSV written by export_draws."""
    if chain_id is None:
        stem = os.path.basename(path)
        if stem.startswith("draws_chain") and stem.endswith(".csv"):
            chain_id = int(stem[len("draws_chain"):-len(".csv")])
        else:
            raise ValueError("cannot infer chain id from filename; pass it")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        draws = np.array([[float(v) for v in row] for row in reader])
    return ChainDraws(chain_id=chain_id, names=names, draws=draws)


def export_report(path, summaries, rhats: dict):
    """Run report: every summary row and every R-hat with its flag."""
    from .diagnostics import RHAT_THRESHOLD

    doc = {
        "rhat_threshold": RHAT_THRESHOLD,
        "summaries": [row.as_dict() for row in summaries],
        "rhat": {
            name: {"value": value, "converged": bool(value < RHAT_THRESHOLD)}
            for name, value in rhats.items()
        },
    }
    _write_json(path, doc)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_json_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(outdir, config: ExperimentConfig, artifacts):
    """Record every artifact of a run with its seed and config hash."""
    path = os.path.join(outdir, "manifest.json")
    _write_json(
        path,
        {
            "seed": config.seed,
            "config_sha256": config_hash(config),
            "artifacts": sorted(os.path.basename(a) for a in artifacts),
        },
    )
    return path
