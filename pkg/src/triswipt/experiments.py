"""Monte Carlo experiment harness: convergence traces and parameter sweeps.

Three studies over randomly drawn scenarios, all emitting deterministic CSV:

* convergence — one outer-loop trajectory per element count and trial;
* power sweep — mean sum-rate versus the per-element power cap (dBm);
* distance sweep — mean sum-rate versus the maximum ID-user distance (m).

Determinism rules: trial ``t`` of every sweep point uses seed
``base_seed + t``, so sweep points share channel draws (paired sampling —
the power cap does not enter the draw, and widening a distance range maps
the same underlying uniforms monotonically).  Float CSV fields are rendered
with ``repr``, which round-trips exactly; rerunning a configuration
reproduces the output byte for byte.

Every reported sum-rate is recomputed from the recovered beamformer pair via
the vector-form metrics, never read off lifted matrices.  Infeasible or
numerically failed trials are logged, recorded with their status, and
excluded from the means.
"""

from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import dataclass, replace

import numpy as np

from .channel import ScenarioParams, dbm_to_watt, draw_channels
from .optimizer import (
    NumericalFailureError,
    PenaltySchedule,
    RunResult,
    max_total_harvest,
    run,
)
from .system import ChannelSet, SystemConfig

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("none", "power", "distance", "elements")

DEFAULT_POWER_DBM = (0.0, 5.0, 10.0, 15.0)
DEFAULT_DISTANCE_M = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0)
DEFAULT_ELEMENTS = (4, 8)

CONVERGENCE_HEADER = (
    "n_elements,trial,seed,iteration,sum_rate_bits,penalty_residual_I,"
    "penalty_residual_E,rho,surrogate_objective,status"
)
TRIAL_HEADER = (
    "sweep_value,trial,seed,status,outer_iters,sum_rate_bits,harvest_watts,"
    "harvest_floor_watts"
)
SUMMARY_HEADER = "sweep_value,n_trials,n_reported,mean_sum_rate_bits,mean_harvest_watts"


def desk_system(n_elements: int = 8) -> SystemConfig:
    """Default experiment system: K=2 ID and G=2 EH users, 10 dBm caps."""
    return SystemConfig(
        n_elements=n_elements,
        n_id=2,
        n_eh=2,
        p_elem_max=dbm_to_watt(10.0),
        q_harvest_min=0.0,
        eh_efficiency=0.5,
        noise_pow=np.full(2, 1e-9),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a scenario family, a sweep, and output destination.

    ``sweep_values`` are dBm for a power sweep, metres (maximum ID distance)
    for a distance sweep, element counts for an elements sweep, and empty for
    ``sweep_kind="none"``.  ``schedule=None`` calibrates the penalty weight
    per trial from the initial point.  ``harvest_floor_frac`` sets each
    trial's harvest floor to that fraction of the trial's achievable-harvest
    ceiling (computed once per trial, at the smallest swept power for a power
    sweep so the floor stays fixed across the sweep); zero keeps the floor
    from ``system`` untouched.
    """

    scenario: ScenarioParams
    system: SystemConfig
    sweep_kind: str
    sweep_values: tuple
    trials: int
    schedule: PenaltySchedule | None
    output_path: str
    base_seed: int = 0
    harvest_floor_frac: float = 0.1
    max_outer_iters: int = 50

    def __post_init__(self) -> None:
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(
                f"sweep_kind must be one of {SWEEP_KINDS}, got {self.sweep_kind!r}"
            )
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        values = tuple(self.sweep_values)
        object.__setattr__(self, "sweep_values", values)
        if self.sweep_kind != "none":
            if not values:
                raise ValueError("a sweep needs at least one value")
            if list(values) != sorted(values):
                raise ValueError("sweep values must be sorted ascending")
        if not 0.0 <= self.harvest_floor_frac < 1.0:
            raise ValueError("harvest_floor_frac must lie in [0, 1)")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")


def config_from_json(doc: dict) -> ExperimentConfig:
    """Build a config from a JSON-compatible dict (the config-file schema).

    Keys (all optional unless noted): ``scenario`` (ScenarioParams fields;
    two-element lists for ranges), ``system`` (SystemConfig fields;
    ``noise_pow`` scalar or list), ``sweep`` ({"kind": ..., "values": [...]}),
    ``trials``, ``schedule`` (PenaltySchedule fields, or the string
    "calibrated"), ``output`` (path), ``seed``, ``harvest_floor_frac``,
    ``max_outer_iters``.
    """
    scen_doc = dict(doc.get("scenario", {}))
    for key in ("tris_position", "id_distance_range", "eh_distance_range"):
        if key in scen_doc:
            scen_doc[key] = tuple(scen_doc[key])
    scenario = ScenarioParams(**scen_doc)

    sys_doc = dict(doc.get("system", {}))
    defaults = desk_system()
    n_elements = int(sys_doc.get("n_elements", defaults.n_elements))
    n_id = int(sys_doc.get("n_id", defaults.n_id))
    n_eh = int(sys_doc.get("n_eh", defaults.n_eh))
    noise = sys_doc.get("noise_pow", 1e-9)
    noise_arr = (
        np.full(n_id, float(noise))
        if np.isscalar(noise)
        else np.asarray(noise, dtype=float)
    )
    system = SystemConfig(
        n_elements=n_elements,
        n_id=n_id,
        n_eh=n_eh,
        p_elem_max=float(sys_doc.get("p_elem_max", defaults.p_elem_max)),
        q_harvest_min=float(sys_doc.get("q_harvest_min", 0.0)),
        eh_efficiency=float(sys_doc.get("eh_efficiency", defaults.eh_efficiency)),
        noise_pow=noise_arr,
    )

    sweep_doc = doc.get("sweep", {"kind": "none", "values": []})
    kind = sweep_doc.get("kind", "none")
    values = tuple(sweep_doc.get("values", ()))
    if kind == "elements":
        values = tuple(int(v) for v in values)
    else:
        values = tuple(float(v) for v in values)

    sched_doc = doc.get("schedule", "calibrated")
    if sched_doc == "calibrated" or sched_doc is None:
        schedule = None
    else:
        schedule = PenaltySchedule(**sched_doc)

    return ExperimentConfig(
        scenario=scenario,
        system=system,
        sweep_kind=kind,
        sweep_values=values,
        trials=int(doc.get("trials", 1)),
        schedule=schedule,
        output_path=str(doc.get("output", "results.csv")),
        base_seed=int(doc.get("seed", 0)),
        harvest_floor_frac=float(doc.get("harvest_floor_frac", 0.1)),
        max_outer_iters=int(doc.get("max_outer_iters", 50)),
    )


def config_to_json(config: ExperimentConfig) -> dict:
    """Config echo for the run manifest (inverse of config_from_json)."""
    scen = config.scenario
    sys_ = config.system
    return {
        "scenario": {
            "tris_position": list(scen.tris_position),
            "user_height": scen.user_height,
            "id_distance_range": list(scen.id_distance_range),
            "eh_distance_range": list(scen.eh_distance_range),
            "sector_halfwidth_deg": scen.sector_halfwidth_deg,
            "alpha_id": scen.alpha_id,
            "alpha_eh": scen.alpha_eh,
            "pl0_db": scen.pl0_db,
        },
        "system": {
            "n_elements": sys_.n_elements,
            "n_id": sys_.n_id,
            "n_eh": sys_.n_eh,
            "p_elem_max": sys_.p_elem_max,
            "q_harvest_min": sys_.q_harvest_min,
            "eh_efficiency": sys_.eh_efficiency,
            "noise_pow": [float(v) for v in np.asarray(sys_.noise_pow)],
        },
        "sweep": {"kind": config.sweep_kind, "values": list(config.sweep_values)},
        "trials": config.trials,
        "schedule": (
            "calibrated"
            if config.schedule is None
            else {
                "rho_init": config.schedule.rho_init,
                "decay": config.schedule.decay,
                "floor": config.schedule.floor,
                "residual_target_rel": config.schedule.residual_target_rel,
            }
        ),
        "output": config.output_path,
        "seed": config.base_seed,
        "harvest_floor_frac": config.harvest_floor_frac,
        "max_outer_iters": config.max_outer_iters,
    }


# --------------------------------------------------------------------------
# Single trials.


@dataclass(frozen=True)
class TrialRecord:
    """Aggregated outcome of one optimization run inside an experiment."""

    sweep_value: float | int
    trial: int
    seed: int
    status: str  # converged | max-iters | infeasible | error
    outer_iters: int
    sum_rate_bits: float
    harvest_watts: float
    harvest_floor_watts: float


def _with_fields(system: SystemConfig, **overrides) -> SystemConfig:
    fields = {
        "n_elements": system.n_elements,
        "n_id": system.n_id,
        "n_eh": system.n_eh,
        "p_elem_max": system.p_elem_max,
        "q_harvest_min": system.q_harvest_min,
        "eh_efficiency": system.eh_efficiency,
        "noise_pow": system.noise_pow,
    }
    fields.update(overrides)
    return SystemConfig(**fields)


def draw_trial_channels(
    system: SystemConfig, scenario: ScenarioParams, seed: int
) -> ChannelSet:
    """Deterministic channel draw for one trial (independent of power caps)."""
    rng = np.random.default_rng(seed)
    ch, _ = draw_channels(_with_fields(system, q_harvest_min=0.0), scenario, rng)
    return ch


def trial_floor(
    system: SystemConfig,
    ch: ChannelSet,
    frac: float,
    reference_p_watt: float | None = None,
) -> float:
    """Harvest floor for one trial: ``frac`` of the achievable ceiling.

    The ceiling is evaluated at ``reference_p_watt`` (default: the system's
    own cap); a power sweep passes its smallest swept power so the floor is
    simultaneously feasible at every sweep point and identical across them.
    """
    if frac == 0.0:
        return system.q_harvest_min
    ref = _with_fields(
        system,
        q_harvest_min=0.0,
        p_elem_max=reference_p_watt or system.p_elem_max,
    )
    return float(frac * max_total_harvest(ref, ch))


def run_trial(
    system: SystemConfig,
    ch: ChannelSet,
    floor_watts: float,
    schedule: PenaltySchedule | None,
    max_outer_iters: int,
    sweep_value: float | int,
    trial: int,
    seed: int,
) -> tuple[TrialRecord, RunResult | None]:
    """Run the optimizer on one drawn instance and summarise the outcome."""
    cfg = _with_fields(system, q_harvest_min=floor_watts)
    try:
        result = run(
            cfg, ch, schedule=schedule, max_outer_iters=max_outer_iters
        )
    except NumericalFailureError as exc:
        logger.warning(
            "trial %d (seed %d, sweep %r) failed numerically: %s",
            trial,
            seed,
            sweep_value,
            exc,
        )
        record = TrialRecord(
            sweep_value=sweep_value,
            trial=trial,
            seed=seed,
            status="error",
            outer_iters=0,
            sum_rate_bits=float("nan"),
            harvest_watts=float("nan"),
            harvest_floor_watts=floor_watts,
        )
        return record, None
    if result.status == "infeasible":
        logger.warning(
            "trial %d (seed %d, sweep %r) infeasible: floor %r W unreachable",
            trial,
            seed,
            sweep_value,
            floor_watts,
        )
    record = TrialRecord(
        sweep_value=sweep_value,
        trial=trial,
        seed=seed,
        status=result.status,
        outer_iters=max(len(result.trajectory) - 1, 0),
        sum_rate_bits=float(result.achieved_sum_rate),
        harvest_watts=float(result.achieved_harvest),
        harvest_floor_watts=floor_watts,
    )
    return record, result


# --------------------------------------------------------------------------
# Studies.


@dataclass(frozen=True)
class ConvergenceResult:
    """Per-iteration traces for every (element count, trial) pair."""

    csv_text: str
    records: tuple[TrialRecord, ...]


def run_convergence(config: ExperimentConfig) -> ConvergenceResult:
    """Outer-loop trajectory per element count; one CSV row per iteration."""
    counts = (
        config.sweep_values
        if config.sweep_kind == "elements"
        else (config.system.n_elements,)
    )
    lines = [CONVERGENCE_HEADER]
    records: list[TrialRecord] = []
    for n in counts:
        system = _with_fields(config.system, n_elements=int(n))
        for trial in range(config.trials):
            seed = config.base_seed + trial
            ch = draw_trial_channels(system, config.scenario, seed)
            floor = trial_floor(system, ch, config.harvest_floor_frac)
            record, result = run_trial(
                system,
                ch,
                floor,
                config.schedule,
                config.max_outer_iters,
                sweep_value=int(n),
                trial=trial,
                seed=seed,
            )
            records.append(record)
            if result is None:
                continue
            for state in result.trajectory:
                lines.append(
                    f"{int(n)},{trial},{seed},{state.iteration},"
                    f"{state.sum_rate!r},{state.penalty_residual_id!r},"
                    f"{state.penalty_residual_eh!r},{state.rho!r},"
                    f"{state.surrogate_objective!r},{result.status}"
                )
    return ConvergenceResult(
        csv_text="\n".join(lines) + "\n", records=tuple(records)
    )


@dataclass(frozen=True)
class SweepResult:
    """Per-trial records plus per-point means for one parameter sweep."""

    summary_csv: str
    trials_csv: str
    records: tuple[TrialRecord, ...]
    means: tuple[tuple[float, float], ...]  # (sweep_value, mean sum-rate)


def _sweep_csvs(records: list[TrialRecord], values) -> SweepResult:
    trial_lines = [TRIAL_HEADER]
    for rec in records:
        trial_lines.append(
            f"{rec.sweep_value!r},{rec.trial},{rec.seed},{rec.status},"
            f"{rec.outer_iters},{rec.sum_rate_bits!r},{rec.harvest_watts!r},"
            f"{rec.harvest_floor_watts!r}"
        )
    summary_lines = [SUMMARY_HEADER]
    means = []
    for value in values:
        at_point = [r for r in records if r.sweep_value == value]
        reported = [
            r for r in at_point if r.status in ("converged", "max-iters")
        ]
        rates = [r.sum_rate_bits for r in reported]
        harvests = [r.harvest_watts for r in reported]
        mean_rate = float(np.mean(rates)) if rates else float("nan")
        mean_harv = float(np.mean(harvests)) if harvests else float("nan")
        means.append((value, mean_rate))
        summary_lines.append(
            f"{value!r},{len(at_point)},{len(reported)},{mean_rate!r},{mean_harv!r}"
        )
    return SweepResult(
        summary_csv="\n".join(summary_lines) + "\n",
        trials_csv="\n".join(trial_lines) + "\n",
        records=tuple(records),
        means=tuple(means),
    )


def run_power_sweep(config: ExperimentConfig) -> SweepResult:
    """Mean sum-rate versus per-element power cap (sweep values in dBm).

    Sweep points share channel draws trial-for-trial, and each trial's
    harvest floor is fixed at the fraction of the ceiling achievable at the
    smallest swept power, so the only thing changing along the sweep is the
    cap itself.
    """
    values = config.sweep_values or DEFAULT_POWER_DBM
    p_min_watt = dbm_to_watt(min(values))
    per_value: dict = {value: [] for value in values}
    for trial in range(config.trials):
        seed = config.base_seed + trial
        ch = draw_trial_channels(config.system, config.scenario, seed)
        floor = trial_floor(
            config.system, ch, config.harvest_floor_frac,
            reference_p_watt=p_min_watt,
        )
        for value in values:
            system = _with_fields(config.system, p_elem_max=dbm_to_watt(value))
            record, _ = run_trial(
                system,
                ch,
                floor,
                config.schedule,
                config.max_outer_iters,
                sweep_value=value,
                trial=trial,
                seed=seed,
            )
            per_value[value].append(record)
    records = [rec for value in values for rec in per_value[value]]
    return _sweep_csvs(records, values)


def run_distance_sweep(config: ExperimentConfig) -> SweepResult:
    """Mean sum-rate versus maximum ID-user distance (sweep values in m).

    Each sweep point redraws ID placements uniformly over
    [min(values), point] metres; the shared seed maps the same underlying
    uniforms across points, and EH placements and fading are untouched, so
    curves are paired across the sweep.
    """
    values = config.sweep_values or DEFAULT_DISTANCE_M
    d_min = min(values)
    per_value: dict = {value: [] for value in values}
    for trial in range(config.trials):
        seed = config.base_seed + trial
        floor: float | None = None
        for value in values:
            scenario = replace(
                config.scenario, id_distance_range=(d_min, float(value))
            )
            ch = draw_trial_channels(config.system, scenario, seed)
            if floor is None:
                # The harvest ceiling depends only on the EH channels, which
                # the ID-distance change leaves untouched; one solve per trial.
                floor = trial_floor(
                    config.system, ch, config.harvest_floor_frac
                )
            record, _ = run_trial(
                config.system,
                ch,
                floor,
                config.schedule,
                config.max_outer_iters,
                sweep_value=value,
                trial=trial,
                seed=seed,
            )
            per_value[value].append(record)
    records = [rec for value in values for rec in per_value[value]]
    return _sweep_csvs(records, values)


# --------------------------------------------------------------------------
# Output files.


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def trials_path(output_path: str) -> str:
    stem, dot, ext = output_path.rpartition(".")
    return f"{stem}_trials.{ext}" if dot else f"{output_path}_trials"


def manifest_path(output_path: str) -> str:
    stem, dot, _ = output_path.rpartition(".")
    return f"{stem}_manifest.json" if dot else f"{output_path}_manifest.json"


def write_manifest(
    path: str,
    config: ExperimentConfig,
    subcommand: str,
    wall_time_s: float,
    outputs: list[str],
) -> None:
    """JSON run manifest: config echo, tool versions, wall time, file list."""
    import scipy

    from . import __version__
    from .kernels import get_backend

    doc = {
        "subcommand": subcommand,
        "config": config_to_json(config),
        "outputs": outputs,
        "wall_time_s": wall_time_s,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "package": __version__,
            "kernel_backend": get_backend(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def execute(config: ExperimentConfig, subcommand: str) -> list[str]:
    """Run one study end to end and write its CSV outputs plus manifest.

    Returns the list of written file paths (manifest last).
    """
    start = time.perf_counter()
    outputs: list[str] = []
    if subcommand == "converge":
        conv = run_convergence(config)
        write_text(config.output_path, conv.csv_text)
        outputs.append(config.output_path)
    elif subcommand == "sweep-power":
        sweep = run_power_sweep(config)
        write_text(config.output_path, sweep.summary_csv)
        write_text(trials_path(config.output_path), sweep.trials_csv)
        outputs.extend([config.output_path, trials_path(config.output_path)])
    elif subcommand == "sweep-distance":
        sweep = run_distance_sweep(config)
        write_text(config.output_path, sweep.summary_csv)
        write_text(trials_path(config.output_path), sweep.trials_csv)
        outputs.extend([config.output_path, trials_path(config.output_path)])
    else:
        raise ValueError(f"unknown experiment subcommand {subcommand!r}")
    wall = time.perf_counter() - start
    mpath = manifest_path(config.output_path)
    write_manifest(mpath, config, subcommand, wall, outputs)
    outputs.append(mpath)
    return outputs
