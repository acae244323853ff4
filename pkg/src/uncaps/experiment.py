"""Experiment runner: config ingestion, seeded multi-trial execution of the
search variants and the DR baseline, and trace/summary export.

The config is a flat key/value text file with dotted sections; every key has
a default, any key can be overridden by an ``UNCAPS_``-prefixed environment
variable (dots spelled as double underscores, e.g. ``UNCAPS_RUN__SEEDS``),
and a run emits a machine-readable manifest that can be fed back in place of
the config to reproduce the outputs byte for byte.  Wall times are written to
a separate timings file because they are the one non-deterministic output.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DRConfig, dr_policy
from .env import PlantSpec, RealWorldSpec, jumpstart_eval, mass_spring_damper
from .gp import GPHyperparams
from .policy import LQRPolicyProvider
from .search import SearchConfig, final_policy, parse_variant, policy_search

ENV_PREFIX = "UNCAPS_"
DR_NAME = "DR"

_WORLD_TAG = 101
_JUMP_TAG = 202
_DR_TAG = 303


class ConfigError(ValueError):
    """A config file or override could not be parsed or validated."""


def _csv_floats(text: str) -> tuple[float, ...]:
    text = str(text).strip()
    if not text:
        return ()
    return tuple(float(part) for part in text.split(","))


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in str(text).split(","))


def _csv_strs(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description; field names mirror the config keys."""

    dimension: int = 3
    dt: float = 0.05
    noise_std: float = 0.1
    q_position: float = 1.0
    q_velocity: float = 0.1
    action_cost: float = 0.05
    fixed_init: tuple[float, ...] = (1.0, 0.0)
    init_halfwidth: tuple[float, ...] = (1.0, 1.0)
    param_low: tuple[float, ...] = ()
    param_high: tuple[float, ...] = ()

    iterations: int = 25
    n_init: int = 3
    noise_variance: float = 0.01
    ut_k: float = 2.0
    opt_samples: int = 250
    n_features: int = 2000
    gp_mode: str = "fixed"
    gp_lengthscale: float = 0.2
    gp_signal_variance: float = 1.0
    gp_noise_variance: float = 1e-4
    acq_restarts: int = 50
    rff_restarts: int = 20
    search_horizon: int = 100

    jumpstart_episodes: int = 100
    jumpstart_horizon: int = 100

    dr_samples: int = 256

    variants: tuple[str, ...] = ("UncAPS", "UncAPS-EP", "UncAPS+GA",
                                 "StandardBO", "DR")
    seeds: tuple[int, ...] = (50, 100, 150, 500, 1000)
    output: str = "results"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("run.seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("run.seeds must be duplicate-free")
        if not self.variants:
            pass  # an empty variant list is allowed and yields an empty table
        for name in self.variants:
            if name != DR_NAME:
                try:
                    parse_variant(name)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None

    def build_plant(self) -> PlantSpec:
        return mass_spring_damper(
            dimension=self.dimension, dt=self.dt, q_position=self.q_position,
            q_velocity=self.q_velocity, action_cost=self.action_cost,
            fixed_init=self.fixed_init, init_halfwidth=self.init_halfwidth,
            param_low=self.param_low or None, param_high=self.param_high or None)

    def search_config(self, variant: str, seed: int) -> SearchConfig:
        return SearchConfig(
            iterations=self.iterations, n_init=self.n_init,
            variant=parse_variant(variant),
            noise_variance=self.noise_variance, ut_k=self.ut_k,
            opt_samples=self.opt_samples, n_features=self.n_features,
            gp_mode=self.gp_mode,
            gp_hyperparams=GPHyperparams(self.gp_lengthscale,
                                         self.gp_signal_variance,
                                         self.gp_noise_variance),
            acq_restarts=self.acq_restarts, rff_restarts=self.rff_restarts,
            horizon=self.search_horizon, seed=seed)


_KEY_MAP = {
    "plant.dimension": ("dimension", int),
    "plant.dt": ("dt", float),
    "plant.noise_std": ("noise_std", float),
    "plant.q_position": ("q_position", float),
    "plant.q_velocity": ("q_velocity", float),
    "plant.action_cost": ("action_cost", float),
    "plant.fixed_init": ("fixed_init", _csv_floats),
    "plant.init_halfwidth": ("init_halfwidth", _csv_floats),
    "plant.param_low": ("param_low", _csv_floats),
    "plant.param_high": ("param_high", _csv_floats),
    "search.iterations": ("iterations", int),
    "search.n_init": ("n_init", int),
    "search.noise_variance": ("noise_variance", float),
    "search.ut_k": ("ut_k", float),
    "search.opt_samples": ("opt_samples", int),
    "search.n_features": ("n_features", int),
    "search.gp_mode": ("gp_mode", str),
    "search.gp_lengthscale": ("gp_lengthscale", float),
    "search.gp_signal_variance": ("gp_signal_variance", float),
    "search.gp_noise_variance": ("gp_noise_variance", float),
    "search.acq_restarts": ("acq_restarts", int),
    "search.rff_restarts": ("rff_restarts", int),
    "search.horizon": ("search_horizon", int),
    "jumpstart.episodes": ("jumpstart_episodes", int),
    "jumpstart.horizon": ("jumpstart_horizon", int),
    "dr.samples": ("dr_samples", int),
    "run.variants": ("variants", _csv_strs),
    "run.seeds": ("seeds", _csv_ints),
    "run.output": ("output", str),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEY_MAP.items()}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse `key = value` lines into a flat dict; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_MAP:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def env_overrides(environ=None) -> dict[str, str]:
    """Collect UNCAPS_-prefixed config overrides from the environment."""
    environ = os.environ if environ is None else environ
    out: dict[str, str] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or name == "UNCAPS_NUMBA":
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if key not in _KEY_MAP:
            raise ConfigError(f"environment override {name} does not map to a "
                              f"config key (got {key!r})")
        out[key] = value
    return out


def build_config(flat: dict[str, str]) -> ExperimentConfig:
    kwargs = {}
    for key, value in flat.items():
        if key not in _KEY_MAP:
            raise ConfigError(f"unknown config key {key!r}")
        attr, convert = _KEY_MAP[key]
        try:
            kwargs[attr] = convert(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key}: cannot parse {value!r}") from None
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, environ=None) -> ExperimentConfig:
    """Load a config file (or a run manifest) and apply environment overrides."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    flat: dict[str, str] = {}
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            manifest = json.loads(text)
            flat.update({str(k): str(v) for k, v in manifest["config"].items()})
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path} looks like a manifest but cannot be "
                              f"parsed: {exc}") from None
    else:
        flat.update(parse_config_text(text, source=str(path)))
    flat.update(env_overrides(environ))
    return build_config(flat)


def config_as_flat(cfg: ExperimentConfig) -> dict[str, str]:
    """Serialize the resolved config back into flat key/value strings."""
    out = {}
    for f in fields(cfg):
        key = _ATTR_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            out[key] = ",".join(str(v) for v in value)
        else:
            out[key] = str(value)
    return out


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    variant: str
    seed: int
    jumpstart_mean: float
    jumpstart_stderr: float
    best_y: float | None
    wall_time: float


@dataclass(frozen=True)
class TraceData:
    variant: str
    seed: int
    thetas: np.ndarray
    rewards: np.ndarray
    best_rewards: np.ndarray


@dataclass
class ResultTable:
    rows: list[CellResult] = field(default_factory=list)

    def aggregates(self) -> list[tuple[str, float, float]]:
        """Per-variant (mean of per-seed means, stderr across seeds)."""
        out = []
        seen: list[str] = []
        for row in self.rows:
            if row.variant not in seen:
                seen.append(row.variant)
        for variant in seen:
            means = np.array([r.jumpstart_mean for r in self.rows
                              if r.variant == variant])
            stderr = float(means.std(ddof=1) / np.sqrt(means.size)) \
                if means.size > 1 else 0.0
            out.append((variant, float(means.mean()), stderr))
        return out


class CellFailure(RuntimeError):
    def __init__(self, variant: str, seed: int, stage: str, cause: BaseException):
        super().__init__(f"variant={variant} seed={seed} stage={stage}: {cause}")
        self.variant = variant
        self.seed = seed
        self.stage = stage


def ground_truth_theta(seed: int, dimension: int) -> np.ndarray:
    """Hidden real-world parameter drawn uniformly from the trial seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _WORLD_TAG]))
    return rng.uniform(size=dimension)


def run_cell(cfg: ExperimentConfig, variant: str,
             seed: int) -> tuple[CellResult, TraceData | None]:
    """Run one (variant, seed) cell: search (unless DR), final policy, jumpstart."""
    started = time.perf_counter()
    plant = cfg.build_plant()
    world = RealWorldSpec(plant, ground_truth_theta(seed, plant.dimension),
                          cfg.noise_std)
    provider = LQRPolicyProvider(plant)
    trace_data = None
    best_y = None
    if variant == DR_NAME:
        stage = "dr-policy"
        try:
            dr_seed = int(np.random.default_rng(
                np.random.SeedSequence([seed, _DR_TAG])).integers(0, 2**63 - 1))
            rule = dr_policy(DRConfig(samples=cfg.dr_samples, seed=dr_seed),
                             provider)
        except Exception as exc:
            raise CellFailure(variant, seed, stage, exc) from exc
    else:
        stage = "search"
        try:
            scfg = cfg.search_config(variant, seed)
            trace = policy_search(scfg, provider, world)
            stage = "final-policy"
            rule = final_policy(trace, provider, scfg)
        except Exception as exc:
            raise CellFailure(variant, seed, stage, exc) from exc
        best_y = trace.best_y
        trace_data = TraceData(variant=variant, seed=seed, thetas=trace.thetas,
                               rewards=trace.rewards,
                               best_rewards=np.array([r.best_y
                                                      for r in trace.records]))
    stage = "jumpstart"
    try:
        jump_rng = np.random.default_rng(np.random.SeedSequence([seed, _JUMP_TAG]))
        mean, stderr = jumpstart_eval(world, rule, cfg.jumpstart_episodes,
                                      cfg.jumpstart_horizon, jump_rng)
    except Exception as exc:
        raise CellFailure(variant, seed, stage, exc) from exc
    wall = time.perf_counter() - started
    return CellResult(variant=variant, seed=seed, jumpstart_mean=mean,
                      jumpstart_stderr=stderr, best_y=best_y,
                      wall_time=wall), trace_data


def run_experiment(cfg: ExperimentConfig, jobs: int = 1
                   ) -> tuple[ResultTable, list[TraceData]]:
    """Run every requested (variant, seed) cell, in order, optionally in
    parallel processes; the assembled table order is execution-independent."""
    cells = [(variant, seed) for variant in cfg.variants for seed in cfg.seeds]
    results: dict[tuple[str, int], tuple[CellResult, TraceData | None]] = {}
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {cell: pool.submit(run_cell, cfg, *cell) for cell in cells}
            for cell, future in futures.items():
                results[cell] = future.result()
    else:
        for cell in cells:
            results[cell] = run_cell(cfg, *cell)
    table = ResultTable()
    traces: list[TraceData] = []
    for cell in cells:
        row, trace_data = results[cell]
        table.rows.append(row)
        if trace_data is not None:
            traces.append(trace_data)
    return table, traces


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _fmt_full(x: float) -> str:
    return repr(float(x))


def _fmt_sig(x: float) -> str:
    return f"{float(x):.6g}"


def trace_filename(variant: str, seed: int) -> str:
    return f"trace_{variant}_{seed}.csv"


def export_results(table: ResultTable, traces: list[TraceData],
                   out_dir: str | Path, cfg: ExperimentConfig | None = None
                   ) -> list[Path]:
    """Write trace files, the summary table, the run manifest, and timings.

    Everything except timings.csv is byte-deterministic for a given config.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    for trace in traces:
        d = trace.thetas.shape[1]
        path = out_dir / trace_filename(trace.variant, trace.seed)
        header = "iter," + ",".join(f"theta_{i + 1}" for i in range(d)) + ",y,best_y"
        lines = [header]
        for i in range(trace.thetas.shape[0]):
            parts = [str(i)]
            parts.extend(_fmt_full(v) for v in trace.thetas[i])
            parts.append(_fmt_full(trace.rewards[i]))
            parts.append(_fmt_full(trace.best_rewards[i]))
            lines.append(",".join(parts))
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    summary = out_dir / "summary.csv"
    lines = ["variant,seed,jumpstart_mean,jumpstart_stderr,best_y"]
    for row in table.rows:
        best = "" if row.best_y is None else _fmt_sig(row.best_y)
        lines.append(f"{row.variant},{row.seed},{_fmt_sig(row.jumpstart_mean)},"
                     f"{_fmt_sig(row.jumpstart_stderr)},{best}")
    for variant, mean, stderr in table.aggregates():
        lines.append(f"{variant},aggregate,{_fmt_sig(mean)},{_fmt_sig(stderr)},")
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)

    if cfg is not None:
        manifest = out_dir / "manifest.json"
        payload = {
            "config": config_as_flat(cfg),
            "seeds": list(cfg.seeds),
            "versions": {"uncaps": __version__, "numpy": np.__version__},
        }
        manifest.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(manifest)

    timings = out_dir / "timings.csv"
    lines = ["variant,seed,wall_time_s"]
    for row in table.rows:
        lines.append(f"{row.variant},{row.seed},{row.wall_time:.3f}")
    timings.write_text("\n".join(lines) + "\n")
    written.append(timings)
    return written


def read_summary(path: str | Path) -> list[dict]:
    """Parse a summary file back into row dicts (strings kept verbatim)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def read_trace(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a trace file back into arrays keyed by column name."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}
