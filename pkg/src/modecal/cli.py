"""Command-line entry point: ``modecal <command> ...``."""
import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig
from .coordinator import ProtocolError, WallClock
from .journal import JournalCorruption
from .mle import EstimationError, estimate_beta, read_choices_csv
from .report import report
from .runner import calibrate, open_run, resume_config
from .sim import l1_objective, load_intercepts, load_scenario, run_simulation, write_share_csv

EXIT_OK, EXIT_CONFIG, EXIT_JOURNAL, EXIT_PROTOCOL = 0, 1, 2, 3

logger = logging.getLogger("modecal")


def _cmd_calibrate(args):
    if args.resume:
        run_dir = Path(args.resume)
        config, seed = resume_config(run_dir)
        if args.config:
            config = RunConfig.load(args.config)
        if args.seed is not None and args.seed != seed:
            raise ConfigError(f"run was started with seed {seed}, not {args.seed}")
    else:
        if not args.config:
            raise ConfigError("--config is required unless --resume is given")
        config = RunConfig.load(args.config)
        seed = 0 if args.seed is None else args.seed
        run_dir = Path(args.out or f"runs/{time.strftime('%Y%m%d-%H%M%S')}-s{seed}")
    if args.listen:
        from .net import Master, parse_address
        host, port = parse_address(args.listen)
        coord, scenario = open_run(config, run_dir, seed, resume=bool(args.resume), clock=WallClock())
        master = Master(coord, scenario, host, port, config.heartbeat_interval)
        print(f"listening on {master.address}; journal in {run_dir}", file=sys.stderr)
        master.serve()
        coord.journal.close()
    else:
        calibrate(config, run_dir, seed, args.workers, resume=bool(args.resume))
    summary = report(run_dir)
    print(json.dumps({"run_dir": str(run_dir), **summary}, indent=2))
    return EXIT_OK


def _cmd_worker(args):
    from .net import RemoteWorker
    try:
        n = RemoteWorker(args.master).run(args.max_trials)
    except (OSError, ConnectionError) as exc:
        raise ProtocolError(f"cannot talk to master {args.master}: {exc}") from None
    logger.info("worker finished after %d trials", n)
    return EXIT_OK


def _cmd_simulate(args):
    try:
        scenario = load_scenario(args.scenario)
        config = load_intercepts(args.intercepts)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if args.budget < 1:
        raise ConfigError("--budget must be >= 1")
    result = run_simulation(scenario, config, args.budget, args.seed)
    if args.out:
        write_share_csv(result, args.out)
    else:
        write_share_csv(result, "/dev/stdout")
    loss = l1_objective(result.final_share, scenario.benchmark)
    print(f"final L1 {loss:.4f}", file=sys.stderr)
    return EXIT_OK


def _cmd_report(args):
    summary = report(args.run_dir, args.out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_estimate(args):
    try:
        data = read_choices_csv(args.choices)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    ref = data.alternatives.index(args.reference) if args.reference else 0
    res = estimate_beta(data, reference=ref)
    print(json.dumps({"coefficients": res.as_dict(), "loglik": res.loglik,
                      "loglik_zero": res.loglik_zero, "iterations": res.iterations}, indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="modecal", description="Mode-choice intercept calibration")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="run a calibration")
    c.add_argument("--config")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--seed", type=int)
    c.add_argument("--resume", metavar="DIR", help="continue the run journaled in DIR")
    c.add_argument("--out", metavar="DIR", help="run directory for a new run")
    c.add_argument("--listen", metavar="HOST:PORT", help="serve remote workers instead of running in-process")
    c.set_defaults(func=_cmd_calibrate)

    w = sub.add_parser("worker", help="serve a remote coordinator")
    w.add_argument("--master", required=True, metavar="HOST:PORT")
    w.add_argument("--max-trials", type=int)
    w.set_defaults(func=_cmd_worker)

    s = sub.add_parser("simulate", help="run the simulator once")
    s.add_argument("--scenario", default=None)
    s.add_argument("--intercepts", required=True)
    s.add_argument("--budget", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="share CSV path (default stdout)")
    s.set_defaults(func=_cmd_simulate)

    r = sub.add_parser("report", help="summarise a run directory")
    r.add_argument("run_dir")
    r.add_argument("--out")
    r.set_defaults(func=_cmd_report)

    e = sub.add_parser("estimate", help="fit logit coefficients by maximum likelihood")
    e.add_argument("--choices", required=True)
    e.add_argument("--reference", help="alternative whose constant is fixed at zero")
    e.set_defaults(func=_cmd_estimate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EstimationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JournalCorruption as exc:
        print(f"journal corruption: {exc}", file=sys.stderr)
        return EXIT_JOURNAL
    except ProtocolError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
