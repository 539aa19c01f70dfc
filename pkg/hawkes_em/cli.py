"""Command-line entry points: simulate, fit-mle, fit-vi, evaluate, predict and sweep."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from hawkes_em import __version__
from hawkes_em.config import Config
from hawkes_em.harness import ExperimentConfig, run_sweep
from hawkes_em.job_manager import get_run_status
from hawkes_em.kernels import KernelSpec
from hawkes_em.likelihood import ModelParams
from hawkes_em.logger import configure_logger
from hawkes_em.metrics import EdgeEstimate, evaluate_metrics, parse_metric_list, predictive_loglik
from hawkes_em.mle import MleOptions, adm4_like, fit_mle, sglp_like
from hawkes_em.penalties import PenaltySpec
from hawkes_em.priors import PriorSpec
from hawkes_em.simulator import GRAPH_KEY, SIM_KEY, GroundTruth, SyntheticConfig, sample_graph, simulate
from hawkes_em.storage import load_events, load_model, save_events, save_model
from hawkes_em.utils import ConfigError, handle_errors, make_rng
from hawkes_em.variational import EmConfig, VariationalState, fit_vi, posterior_mode

logger = logging.getLogger(__name__)

DEFAULT_KERNEL = "exp:zeta=1"


def _write_json(data: Dict[str, Any], out: Optional[str]) -> None:
    text = json.dumps(data, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote {out}")
    else:
        print(text)


def _point_estimate(model: Dict[str, Any]) -> ModelParams:
    if model["kind"] == "posterior":
        return posterior_mode(VariationalState.from_dict(model["state"]))
    return model["params"]


@handle_errors
def cmd_simulate(args: argparse.Namespace) -> int:
    kernel = KernelSpec.parse(args.kernel)
    cfg = SyntheticConfig(D=args.dims, edge_prob=args.edge_prob, mu_range=tuple(args.mu_range),
                          weight_range=tuple(args.weight_range), kernel=kernel,
                          n_events=args.n_events, horizon=args.horizon, seed=args.seed)
    truth = sample_graph(cfg, make_rng(cfg.seed, GRAPH_KEY, args.graph))
    seq = simulate(truth, kernel, make_rng(cfg.seed, SIM_KEY, args.graph, args.sim),
                   n_events=cfg.n_events, horizon=cfg.horizon)
    save_events(seq, args.out)
    if args.truth:
        save_model(args.truth, "truth", kernel, **truth.to_dict())
    print(f"Simulated {seq.n_events} events on {truth.D} dimensions ({truth.n_edges} edges)")
    return 0


@handle_errors
def cmd_fit_mle(args: argparse.Namespace) -> int:
    seq = load_events(args.events)
    if args.preset == "adm4":
        kernel, pen = adm4_like()
    elif args.preset == "sglp":
        kernel, pen = sglp_like()
    else:
        kernel, pen = KernelSpec.parse(args.kernel or DEFAULT_KERNEL), PenaltySpec.none()
    if args.kernel and args.preset:
        kernel = KernelSpec.parse(args.kernel)
    if args.penalty:
        pen = PenaltySpec.parse(args.penalty)
    opts = MleOptions(learning_rate=args.lr, max_iter=args.max_iter, tol=args.tol)
    report = fit_mle(seq, kernel, pen, opts)
    save_model(args.out, "mle", kernel, **report.params.to_dict(), penalty=pen.to_dict(),
               report={"iterations": report.iterations, "converged": report.converged,
                       "rejected_steps": report.rejected_steps, "wall_time": report.wall_time,
                       "objective": report.objective_trace[-1]})
    print(f"MLE fit: {report.iterations} iterations, converged={report.converged}")
    return 0


@handle_errors
def cmd_fit_vi(args: argparse.Namespace) -> int:
    seq = load_events(args.events)
    kernel = KernelSpec.parse(args.kernel)
    prior = PriorSpec.parse(args.prior)
    cfg = EmConfig(L=args.L, beta=args.beta, eta=args.eta, T_E=args.te, T_EM=args.tem, seed=args.seed)
    fit = fit_vi(seq, kernel, prior, cfg)
    save_model(args.out, "posterior", kernel, state=fit.state.to_dict(), alpha=fit.alpha.to_dict(),
               prior={"w_prior": prior.w_prior, "mu_prior": prior.mu_prior}, config=cfg.to_dict(),
               elbo_trace=fit.elbo_trace)
    final = f"{fit.elbo_trace[-1]:.6g}" if fit.elbo_trace else "n/a"
    print(f"VI fit: {cfg.T_EM} rounds, final smoothed ELBO {final}")
    return 0


@handle_errors
def cmd_evaluate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    truth_file = load_model(args.truth)
    if truth_file["kind"] != "truth":
        raise ConfigError(f"{args.truth} is not a truth file")
    truth = GroundTruth.from_dict(truth_file)
    if model["kind"] == "posterior":
        est = EdgeEstimate.from_state(VariationalState.from_dict(model["state"]))
    else:
        est = EdgeEstimate.from_params(model["params"])
    results = evaluate_metrics(est, truth, parse_metric_list(args.metrics), not args.exclude_self_loops)
    _write_json(results, args.out)
    return 0


@handle_errors
def cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    train = load_events(args.train)
    # a test file without a recorded start continues the training window
    test = load_events(args.test, default_start=train.horizon)
    value = predictive_loglik(_point_estimate(model), model["kernel"], train, test,
                              conditioned=not args.truncated)
    _write_json({"pred_loglik": value, "n_test": test.n_events}, args.out)
    return 0


@handle_errors
def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    out = args.out or Config().RESULTS_DIR
    rows = run_sweep(cfg, out, progress=not args.no_progress)
    status = get_run_status(out)
    summary = status.get("summary", {})
    print(f"Sweep {status['status']}: {len(rows)} rows written to {out} "
          f"({summary.get('failed_rows', 0)} failed, elapsed {summary.get('elapsed', 'n/a')})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkes-em",
                                     description="Multivariate Hawkes processes: simulation and inference")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Override HAWKES_EM_LOG_LEVEL")
    parser.add_argument("--log-file", action="store_true", help="Also log to a rotating file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Simulate a random network")
    p.add_argument("--dims", "--D", dest="dims", type=int, default=20, help="Number of dimensions")
    p.add_argument("--edge-prob", type=float, default=None, help="Default: log(D)/D")
    p.add_argument("--mu-range", type=float, nargs=2, default=[0.005, 0.02])
    p.add_argument("--weight-range", type=float, nargs=2, default=[0.1, 0.2])
    p.add_argument("--kernel", default=DEFAULT_KERNEL)
    stop = p.add_mutually_exclusive_group(required=True)
    stop.add_argument("--n-events", type=int)
    stop.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--graph", type=int, default=0, help="Graph index for seed derivation")
    p.add_argument("--sim", type=int, default=0, help="Simulation index for seed derivation")
    p.add_argument("--out", required=True, help="Event CSV path")
    p.add_argument("--truth", help="Ground-truth JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-mle", help="Penalized maximum likelihood")
    p.add_argument("--events", required=True)
    p.add_argument("--preset", choices=["adm4", "sglp"])
    p.add_argument("--kernel", default=None,
                   help=f"Kernel, e.g. exp:zeta=1 or sg:M=10,Tc=5 (default {DEFAULT_KERNEL})")
    p.add_argument("--penalty", help="e.g. l1:c=0.05 or sgl:c=0.1,ratio=0.75")
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_mle)

    p = sub.add_parser("fit-vi", help="Variational EM")
    p.add_argument("--events", required=True)
    p.add_argument("--kernel", default=DEFAULT_KERNEL)
    p.add_argument("--prior", default="w=laplace,mu=gaussian")
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.02)
    p.add_argument("--te", type=int, default=100)
    p.add_argument("--tem", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_vi)

    p = sub.add_parser("evaluate", help="Graph-recovery metrics against a ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metrics", default="f1:eta=0.04,prec@20,relerr,fprfnr:eta=0.04")
    p.add_argument("--exclude-self-loops", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="Held-out log-likelihood per test event")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--truncated", action="store_true", help="Ignore training history")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="Run an experiment sweep from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="Output directory (default: HAWKES_EM_RESULTS_DIR)")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


@handle_errors
def _configure(args: argparse.Namespace) -> int:
    settings = Config()
    configure_logger(args.log_level or settings.LOG_LEVEL, settings.LOG_DIR,
                     args.log_file or settings.LOG_TO_FILE)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    status = _configure(args)
    if status:
        return status
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
