"""
Experiment harness: config-driven sweeps over synthetic networks.

Each task (sweep value, graph, simulation) draws its data from seeds derived
from the experiment seed, fits every configured estimator and evaluates the
graph metrics (and the held-out log-likelihood when a split is set). Rows are
sorted before they are written, so output order never depends on scheduling.
"""

import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from marshmallow import Schema, fields as mfields, validate
from tqdm import tqdm

from hawkes_em.config import Config
from hawkes_em.events import EventSequence
from hawkes_em.job_manager import update_run_status
from hawkes_em.kernels import ExponentialKernel, GaussianBasisKernel, KernelSpec
from hawkes_em.likelihood import ModelParams
from hawkes_em.metrics import EdgeEstimate, evaluate_metrics, metric_keys, parse_metric_list, predictive_loglik
from hawkes_em.mle import MleOptions, adm4_like, fit_mle, sglp_like
from hawkes_em.priors import PriorSpec
from hawkes_em.simulator import GRAPH_KEY, SIM_KEY, GroundTruth, SyntheticConfig, sample_graph, simulate
from hawkes_em.storage import load_events, write_results_csv
from hawkes_em.utils import ConfigError, EmptySplit, derive_seed, format_duration, get_error_info, make_rng
from hawkes_em.variational import EmConfig, fit_vi, posterior_mode

logger = logging.getLogger(__name__)

# Seed key for estimator randomness, next to GRAPH_KEY and SIM_KEY.
FIT_KEY = 2
SWEEP_AXES = ("n_events", "M", "D")
# Per-fit timings written to the plot tables next to the metrics.
TIMING_COLUMNS = ("wall_time", "time_per_iteration")
STATUS_OK = "ok"


class ExperimentSchema(Schema):
    """Schema for experiment YAML files; every key is optional."""
    seed = mfields.Int()
    D = mfields.Int(validate=validate.Range(min=1))
    edge_prob = mfields.Float(allow_none=True, validate=validate.Range(min=0, min_inclusive=False, max=1))
    mu_range = mfields.List(mfields.Float(), validate=validate.Length(equal=2))
    weight_range = mfields.List(mfields.Float(), validate=validate.Length(equal=2))
    true_kernel = mfields.Str()
    dataset = mfields.Str(allow_none=True)
    estimators = mfields.List(mfields.Str(), validate=validate.Length(min=1))
    sweep_axis = mfields.Str(validate=validate.OneOf(SWEEP_AXES))
    sweep_values = mfields.List(mfields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=1))
    graphs = mfields.Int(validate=validate.Range(min=1))
    sims = mfields.Int(validate=validate.Range(min=1))
    n_events = mfields.Int(validate=validate.Range(min=1))
    split_fraction = mfields.Float(allow_none=True, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                           max_inclusive=False))
    metrics = mfields.Str()
    include_self_loops = mfields.Bool()
    workers = mfields.Int(allow_none=True, validate=validate.Range(min=1))
    prior = mfields.Str()
    zeta = mfields.Float(validate=validate.Range(min=0, min_inclusive=False))
    M = mfields.Int(validate=validate.Range(min=1))
    cutoff = mfields.Float(validate=validate.Range(min=0, min_inclusive=False))
    adm4_strength = mfields.Float(validate=validate.Range(min=0))
    sglp_strength = mfields.Float(validate=validate.Range(min=0))
    sglp_ratio = mfields.Float(validate=validate.Range(min=0, max=1))
    vi = mfields.Dict(keys=mfields.Str())
    mle = mfields.Dict(keys=mfields.Str())


@dataclass
class ExperimentConfig:
    """Sweep definition with desk-scale defaults (D=20, 5 graphs x 3 simulations)."""
    seed: int = 0
    D: int = 20
    edge_prob: Optional[float] = None
    mu_range: Tuple[float, float] = (0.005, 0.02)
    weight_range: Tuple[float, float] = (0.1, 0.2)
    true_kernel: str = "exp:zeta=1"
    dataset: Optional[str] = None
    estimators: List[str] = field(default_factory=lambda: ["vi-exp", "mle-adm4"])
    sweep_axis: str = "n_events"
    sweep_values: List[int] = field(default_factory=lambda: [300, 1000, 4000])
    graphs: int = 5
    sims: int = 3
    n_events: int = 2000
    split_fraction: Optional[float] = None
    metrics: str = "f1:eta=0.04,prec@20,relerr,fprfnr:eta=0.04"
    include_self_loops: bool = True
    workers: Optional[int] = None
    prior: str = "w=laplace,mu=gaussian"
    zeta: float = 1.0
    M: int = 10
    cutoff: float = 5.0
    adm4_strength: float = 0.05
    sglp_strength: float = 0.1
    sglp_ratio: float = 0.75
    vi: Dict[str, Any] = field(default_factory=dict)
    mle: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.mu_range = tuple(self.mu_range)
        self.weight_range = tuple(self.weight_range)
        unknown = [name for name in self.estimators if resolve_estimator(name) is None]
        if unknown:
            raise ConfigError(f"Unknown estimators {unknown}, expected one of {sorted(ESTIMATORS)}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got '{self.sweep_axis}'")
        _check_keys(self.vi, EmConfig, "vi")
        _check_keys(self.mle, MleOptions, "mle")
        if self.dataset is not None and self.sweep_axis == "D":
            raise ConfigError("a dataset run has a fixed dimension and cannot sweep D")
        if self.dataset is not None and self.split_fraction is None:
            raise ConfigError("a dataset run needs split_fraction for held-out evaluation")
        parse_metric_list(self.metrics)
        PriorSpec.parse(self.prior)
        KernelSpec.parse(self.true_kernel)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        errors = ExperimentSchema().validate(data)
        if errors:
            raise ConfigError(f"Invalid experiment config: {errors}")
        return cls(**ExperimentSchema().load(data))

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mu_range"] = list(self.mu_range)
        data["weight_range"] = list(self.weight_range)
        return data


def _check_keys(overrides: Dict[str, Any], target, section: str) -> None:
    allowed = {f.name for f in fields(target)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(f"Unknown {section} settings {unknown}")


@dataclass(frozen=True)
class ResultRow:
    estimator: str
    sweep_value: int
    graph: int
    sim: int
    metric: str
    value: float
    wall_time: float
    status: str = STATUS_OK
    time_per_iteration: float = float("nan")

    def sort_key(self) -> Tuple:
        return (self.estimator, self.sweep_value, self.graph, self.sim, self.metric)


@dataclass
class FitOutcome:
    params: ModelParams
    estimate: EdgeEstimate
    kernel: KernelSpec
    wall_time: float
    iterations: int

    @property
    def time_per_iteration(self) -> float:
        return self.wall_time / max(self.iterations, 1)


@dataclass(frozen=True)
class Estimator:
    """A named estimator: how it builds its kernel and how it fits."""
    name: str
    family: str
    basis: str

    def kernel(self, cfg: ExperimentConfig, M: int) -> KernelSpec:
        if self.basis == "exp":
            return ExponentialKernel(cfg.zeta)
        return GaussianBasisKernel.from_cutoff(M, cfg.cutoff)

    def fit(self, seq: EventSequence, cfg: ExperimentConfig, M: int, seed: int) -> FitOutcome:
        kernel = self.kernel(cfg, M)
        started = time.time()
        if self.family == "vi":
            em_cfg = EmConfig(**{**cfg.vi, "seed": seed})
            result = fit_vi(seq, kernel, PriorSpec.parse(cfg.prior), em_cfg)
            params = posterior_mode(result.state)
            estimate = EdgeEstimate.from_state(result.state)
            iterations = len(result.elbo_history)
        else:
            if self.basis == "exp":
                kernel, pen = adm4_like(cfg.zeta, cfg.adm4_strength)
            else:
                kernel, pen = sglp_like(M, cfg.cutoff, cfg.sglp_strength, cfg.sglp_ratio)
            report = fit_mle(seq, kernel, pen, MleOptions(**cfg.mle))
            params = report.params
            estimate = EdgeEstimate.from_params(params)
            iterations = report.iterations
        return FitOutcome(params, estimate, kernel, time.time() - started, iterations)


ESTIMATORS: Dict[str, Estimator] = {
    "vi-exp": Estimator("vi-exp", "vi", "exp"),
    "vi-sg": Estimator("vi-sg", "vi", "sg"),
    "mle-adm4": Estimator("mle-adm4", "mle", "exp"),
    "mle-sglp": Estimator("mle-sglp", "mle", "sg"),
}


def resolve_estimator(name: str) -> Optional[Estimator]:
    """Look up an estimator; a trailing `-like` is accepted."""
    key = name.lower()
    if key.endswith("-like"):
        key = key[:-len("-like")]
    return ESTIMATORS.get(key)


def split_train_test(seq: EventSequence, fraction: float) -> Tuple[EventSequence, EventSequence]:
    """
    First ceil(fraction * N) events for training, the rest for testing.

    The split time is the midpoint between the last training event and the
    first test event; training covers [start, split) and testing [split, T).

    Raises:
        EmptySplit: either side would have no events.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n_train = math.ceil(fraction * seq.n_events - 1e-9)
    if n_train == 0 or n_train >= seq.n_events:
        raise EmptySplit(f"fraction {fraction} of {seq.n_events} events leaves an empty side")
    split = 0.5 * (seq.times[n_train - 1] + seq.times[n_train])
    train = EventSequence(seq.times[:n_train], seq.dims[:n_train], split, seq.D, seq.start)
    test = EventSequence(seq.times[n_train:], seq.dims[n_train:], seq.horizon, seq.D, split)
    return train, test


def metric_names(cfg: ExperimentConfig) -> List[str]:
    """Names of the values each fit reports, in emission order."""
    if cfg.dataset is not None:
        return ["pred_loglik"]
    names: List[str] = []
    for name, opts in parse_metric_list(cfg.metrics):
        names.extend(key for key in metric_keys(name, opts) if key not in names)
    if cfg.split_fraction is not None:
        names.append("pred_loglik")
    return names


def sample_truths(cfg: ExperimentConfig) -> Dict[Tuple[int, int], GroundTruth]:
    """
    Ground truths keyed by (sweep value index, graph).

    Graphs are shared across sweep values unless the sweep is over D, where
    each value draws its own graphs.
    """
    truths: Dict[Tuple[int, int], GroundTruth] = {}
    for g in range(cfg.graphs):
        if cfg.sweep_axis != "D":
            truth = sample_graph(_synthetic(cfg, cfg.D), make_rng(cfg.seed, GRAPH_KEY, g))
            truths.update({(value_idx, g): truth for value_idx in range(len(cfg.sweep_values))})
            continue
        for value_idx, D in enumerate(cfg.sweep_values):
            truths[value_idx, g] = sample_graph(_synthetic(cfg, D), make_rng(cfg.seed, GRAPH_KEY, g, value_idx))
    return truths


def _synthetic(cfg: ExperimentConfig, D: int) -> SyntheticConfig:
    return SyntheticConfig(D=D, edge_prob=cfg.edge_prob, mu_range=cfg.mu_range, weight_range=cfg.weight_range,
                           kernel=KernelSpec.parse(cfg.true_kernel), n_events=cfg.n_events, seed=cfg.seed)


def _task_data(cfg: ExperimentConfig, value_idx: int, value: int, g: int, s: int,
               truths: Dict[Tuple[int, int], GroundTruth]) -> Tuple[Optional[GroundTruth], EventSequence]:
    if cfg.dataset is not None:
        return None, load_events(cfg.dataset)
    truth = truths[value_idx, g]
    n_events = value if cfg.sweep_axis == "n_events" else cfg.n_events
    seq = simulate(truth, KernelSpec.parse(cfg.true_kernel), make_rng(cfg.seed, SIM_KEY, g, s, value_idx),
                   n_events=n_events)
    return truth, seq


def _fit_seed(cfg: ExperimentConfig, *keys: int) -> int:
    return int(derive_seed(cfg.seed, FIT_KEY, *keys).generate_state(1)[0])


def _error_rows(estimators: List[str], value: int, g: int, s: int, names: List[str],
                error: Exception) -> List[ResultRow]:
    status = f"error:{get_error_info(error)['error_type']}"
    return [ResultRow(est, value, g, s, metric, float("nan"), 0.0, status) for est in estimators for metric in names]


def run_task(cfg: ExperimentConfig, value_idx: int, value: int, g: int, s: int,
             truths: Dict[Tuple[int, int], GroundTruth]) -> List[ResultRow]:
    """
    Fit every estimator on one (sweep value, graph, simulation) and score it.

    Any exception is turned into error rows for the affected estimators.
    """
    names = metric_names(cfg)
    metrics = parse_metric_list(cfg.metrics)
    M = value if cfg.sweep_axis == "M" else cfg.M
    rows: List[ResultRow] = []
    try:
        truth, seq = _task_data(cfg, value_idx, value, g, s, truths)
        train, test = (seq, None) if cfg.split_fraction is None else split_train_test(seq, cfg.split_fraction)
    except Exception as e:
        info = get_error_info(e)
        logger.warning(f"Task (value={value}, graph={g}, sim={s}) failed: "
                       f"{info['error_type']} ({info['error_code']}): {info['message']}")
        return _error_rows(cfg.estimators, value, g, s, names, e)

    for est_idx, name in enumerate(cfg.estimators):
        estimator = resolve_estimator(name)
        try:
            outcome = estimator.fit(train, cfg, M, _fit_seed(cfg, value_idx, g, s, est_idx))
            values: Dict[str, Optional[float]] = {}
            if truth is not None:
                values.update(evaluate_metrics(outcome.estimate, truth, metrics, cfg.include_self_loops))
            if test is not None:
                values["pred_loglik"] = predictive_loglik(outcome.params, outcome.kernel, train, test)
        except Exception as e:
            info = get_error_info(e)
            logger.warning(f"{name} failed on (value={value}, graph={g}, sim={s}): "
                           f"{info['error_type']} ({info['error_code']}): {info['message']}")
            rows.extend(_error_rows([name], value, g, s, names, e))
            continue
        logger.debug(f"{name} on (value={value}, graph={g}, sim={s}) took {format_duration(outcome.wall_time)}")
        for metric in names:
            result = values.get(metric)
            rows.append(ResultRow(name, value, g, s, metric, float("nan") if result is None else float(result),
                                  outcome.wall_time, time_per_iteration=outcome.time_per_iteration))
    return rows


def run_sweep(cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
              progress: bool = True) -> List[ResultRow]:
    """
    Run every (sweep value, graph, simulation) task and return sorted rows.

    With `out_dir`, also writes results.csv, summary.csv, one plot CSV per
    metric and per timing column, and status.json.
    """
    workers = cfg.workers or Config().THREADS
    if cfg.dataset is not None:
        graphs, sims = 1, 1
        truths: Dict[Tuple[int, int], GroundTruth] = {}
    else:
        graphs, sims = cfg.graphs, cfg.sims
        truths = sample_truths(cfg)

    tasks = [(vi, value, g, s) for vi, value in enumerate(cfg.sweep_values)
             for g in range(graphs) for s in range(sims)]
    logger.info(f"Sweep over {cfg.sweep_axis}={cfg.sweep_values}: {len(tasks)} tasks, "
                f"estimators={cfg.estimators}, workers={workers}")
    if out_dir is not None:
        update_run_status(out_dir, "running", summary={"tasks": len(tasks)})

    started = time.time()
    rows: List[ResultRow] = []
    try:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run_task, cfg, vi, value, g, s, truths) for vi, value, g, s in tasks]
            for future in tqdm(as_completed(futures), total=len(futures), desc="sweep", disable=not progress):
                rows.extend(future.result())
    except Exception as e:
        if out_dir is not None:
            info = get_error_info(e)
            update_run_status(out_dir, "error", error=f"{info['error_type']} ({info['error_code']}): "
                                                      f"{info['message']}")
        raise
    rows.sort(key=ResultRow.sort_key)
    elapsed = time.time() - started

    failed = sum(1 for row in rows if row.status != STATUS_OK)
    if failed:
        logger.warning(f"{failed} of {len(rows)} result rows come from failed fits")
    logger.info(f"Sweep finished in {format_duration(elapsed)}")
    if out_dir is not None:
        write_sweep_outputs(rows, out_dir)
        update_run_status(out_dir, "completed", summary={"tasks": len(tasks), "rows": len(rows),
                                                         "failed_rows": failed,
                                                         "elapsed": format_duration(elapsed)})
    return rows


def rows_to_frame(rows: List[ResultRow]) -> pd.DataFrame:
    columns = [f.name for f in fields(ResultRow)]
    return pd.DataFrame([asdict(row) for row in rows], columns=columns)


def _aggregate(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    grouped = frame.groupby(["metric", "sweep_value", "estimator"], sort=True)[column]
    summary = grouped.agg(mean="mean", std=lambda v: float(np.std(v.to_numpy(), ddof=0)), n="count")
    return summary.reset_index()


def summarize(rows: List[ResultRow]) -> pd.DataFrame:
    """Mean, population std and count per (metric, sweep value, estimator) over successful rows."""
    frame = rows_to_frame(rows)
    frame = frame[(frame["status"] == STATUS_OK) & frame["value"].notna()]
    return _aggregate(frame, "value")


def summarize_timings(rows: List[ResultRow]) -> pd.DataFrame:
    """
    Per-fit timings aggregated like `summarize`, with the timing column as the metric.

    Every fit emits one row per metric with the same timings; only the first
    is counted.
    """
    frame = rows_to_frame(rows)
    frame = frame[frame["status"] == STATUS_OK]
    frame = frame.drop_duplicates(subset=["estimator", "sweep_value", "graph", "sim"])
    tables = []
    for column in TIMING_COLUMNS:
        timed = frame[frame[column].notna()].assign(metric=column)
        if len(timed):
            tables.append(_aggregate(timed, column))
    if not tables:
        return pd.DataFrame(columns=["metric", "sweep_value", "estimator", "mean", "std", "n"])
    return pd.concat(tables, ignore_index=True)


def plot_file_name(metric: str) -> str:
    """plot_<metric>.csv with option characters such as @ and = replaced."""
    return f"plot_{re.sub(r'[^A-Za-z0-9_.]+', '_', metric)}.csv"


def emit_plot_data(rows: List[ResultRow], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write one plot CSV per metric and per timing column, with columns
    sweep_value, estimator, mean, std, n.
    """
    if not rows:
        raise ConfigError("no result rows to plot")
    out_dir = Path(out_dir)
    paths = []
    for summary in (summarize(rows), summarize_timings(rows)):
        for metric, table in summary.groupby("metric", sort=True):
            path = out_dir / plot_file_name(metric)
            write_results_csv(table[["sweep_value", "estimator", "mean", "std", "n"]], path)
            paths.append(path)
    return paths


def write_sweep_outputs(rows: List[ResultRow], out_dir: Union[str, Path]) -> None:
    out_dir = Path(out_dir)
    write_results_csv(rows_to_frame(rows), out_dir / "results.csv")
    if rows:
        write_results_csv(summarize(rows), out_dir / "summary.csv")
        emit_plot_data(rows, out_dir)
    logger.info(f"Wrote sweep results to {out_dir}")
