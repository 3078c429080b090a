"""``saver`` command-line tool.

Subcommands::

    saver train     --config exp.ini [--safe] [--checkpoint out.npz] [--full-res]
    saver evaluate  [--controller {noop,linear,rl,safe_rl}] [--checkpoint ck.npz]
                    [--config exp.ini] [--data demand.csv] [--out dir] [--full-res]
    saver powerflow --feeder feeder.ini --injections inj.csv
    saver project   --problem problem.json
    saver report    --records dir [--out dir]

Exit status is 0 on success, 1 on a solver failure and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .feeder import FeederError, dumps_feeder, load_feeder, loads_feeder
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.experiment import CONTROLLERS, evaluate, make_controller
from .harness.metrics import load_records, report, save_records, summarize
from .harness.profiles import ProfileError, ingest_profiles
from .linearization import build_sensitivity
from .powerflow import Injections, PowerFlowError, solve_distflow
from .rl.ddpg import DDPG
from .rl.training import train
from .safety import ProjectionProblem, project


def _bus_names(f):
    return [b.name or str(b.id) for b in f.buses]


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.full_res:
        cfg.experiment.full_res = True
    return cfg


def _cmd_train(args) -> int:
    cfg = _load(args)
    f = cfg.build_feeder()
    ds = cfg.build_dataset(f)
    tc = cfg.train_config(safe=args.safe)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)

    def progress(e):
        print(f"episode {e.episode:4d}  day {e.day:3d}  return {e.ret:10.4f}  "
              f"violations {e.violations:5d}  relaxed {e.relaxed:4d}", flush=True)

    agent, log = train(f, ds, tc, progress=None if args.quiet else progress)
    tag = "safe_rl" if args.safe else "rl"
    ck = Path(args.checkpoint) if args.checkpoint else out / f"{tag}.npz"
    agent.save(ck, {"feeder": dumps_feeder(f), "fingerprint": f.fingerprint(), "eta": tc.eta,
                    "safe": args.safe, "safety": cfg.safety_kwargs(),
                    "step_minutes": cfg.step_minutes})
    log.to_csv(out / f"{tag}_training.csv")
    print(f"checkpoint written to {ck}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load(args)
    controller = args.controller or cfg.experiment.controller
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}; choose from {', '.join(CONTROLLERS)}")
    agent = meta = None
    if args.checkpoint:
        agent, meta = DDPG.load(args.checkpoint)
    if controller in ("rl", "safe_rl") and agent is None:
        raise ConfigError(f"controller {controller} needs --checkpoint")
    if meta is not None:
        f = loads_feeder(meta["feeder"])
        if f.fingerprint() != meta["fingerprint"]:
            raise ConfigError("checkpoint feeder does not match its fingerprint")
        eta = meta["eta"]
        safety = meta.get("safety", cfg.safety_kwargs())
    else:
        f = cfg.build_feeder()
        eta = cfg.rl.eta
        safety = cfg.safety_kwargs()
    if args.data:
        ds = ingest_profiles(args.data, f, step_minutes=cfg.step_minutes,
                             peak_mw=cfg.experiment.peak_mw, power_factor=cfg.experiment.power_factor,
                             test_days=cfg.experiment.test_days)
    else:
        ds = cfg.build_dataset(f)
    model = build_sensitivity(f)
    ctrl = make_controller(controller, f, agent=agent, model=model, safety_kwargs=safety)
    records = evaluate(f, ctrl, ds, eta=eta, model=model)
    out = Path(args.out) if args.out else cfg.output_dir() / f"eval_{controller}"
    save_records(records, out)
    summary = summarize(records, f.base_mva)
    report(summary, records, out, _bus_names(f))
    print((out / "summary.txt").read_text(), end="")
    return 0


def _read_injections(path, n):
    p = np.zeros(n)
    q = np.zeros(n)
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"bus", "p", "q"} <= set(reader.fieldnames):
            raise ProfileError(f"{path}: expected header with columns bus,p,q")
        for line, row in enumerate(reader, start=2):
            try:
                b, pv, qv = int(row["bus"]), float(row["p"]), float(row["q"])
            except (TypeError, ValueError):
                raise ProfileError(f"{path}:{line}: malformed row {row}") from None
            if not 1 <= b <= n or b in seen:
                raise ProfileError(f"{path}:{line}: bus {b} is out of range or repeated")
            seen.add(b)
            p[b - 1], q[b - 1] = pv, qv
    return Injections(p, q)


def _cmd_powerflow(args) -> int:
    f = load_feeder(args.feeder)
    inj = _read_injections(args.injections, f.n)
    sol = solve_distflow(f, inj)
    w = csv.writer(sys.stdout)
    w.writerow(["bus", "v_squared", "v_magnitude"])
    for j, (v, m) in enumerate(zip(sol.v, sol.v_magnitude)):
        w.writerow([j, repr(float(v)), repr(float(m))])
    print(f"# iterations={sol.iterations} residual={sol.residual:.3e}", file=sys.stderr)
    return 0


def _cmd_project(args) -> int:
    doc = json.loads(Path(args.problem).read_text())
    try:
        f = load_feeder(doc.get("feeder", "builtin:ieee13"))
        if "q_limit" in doc:
            f = f.with_q_limits(-doc["q_limit"], doc["q_limit"])
        prob = ProjectionProblem.from_feeder(
            f, np.asarray(doc["q_proposed"], float), np.asarray(doc["p"], float),
            None if doc.get("q_background") is None else np.asarray(doc["q_background"], float),
            margin=float(doc.get("margin", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"{args.problem}: missing key {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{args.problem}: {exc}") from None
    res = project(prob)
    print(json.dumps({"status": res.status.value, "q_safe": res.q_safe.tolist(),
                      "active_set": [int(k) for k in res.active_set],
                      "kkt_residual": res.kkt_residual, "slack_used": res.slack_used,
                      "iterations": res.iterations}, indent=1))
    return 0


def _cmd_report(args) -> int:
    records = load_records(args.records)
    base_mva = args.base_mva
    summary = summarize(records, base_mva)
    out = Path(args.out) if args.out else Path(args.records)
    report(summary, records, out)
    print((out / "summary.txt").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saver", description="Volt-var control with a projection safety layer.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDPG agent")
    p.add_argument("--config", required=True)
    p.add_argument("--safe", action="store_true", help="project every action during training")
    p.add_argument("--checkpoint", help="output path (default: <output>/<rl|safe_rl>.npz)")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--full-res", action="store_true", help="6 s steps instead of the configured step")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="run a controller over the test days")
    p.add_argument("--controller", choices=CONTROLLERS, help="default: [experiment] controller")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--data", help="demand CSV; default is the config's dataset")
    p.add_argument("--out")
    p.add_argument("--full-res", action="store_true", help="6 s steps instead of the configured step")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("powerflow", help="solve one snapshot")
    p.add_argument("--feeder", required=True, help="feeder file or builtin:ieee13")
    p.add_argument("--injections", required=True, help="CSV with columns bus,p,q in per-unit")
    p.set_defaults(func=_cmd_powerflow)

    p = sub.add_parser("project", help="solve one safety projection")
    p.add_argument("--problem", required=True, help="JSON problem file")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("report", help="summarise saved evaluation records")
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.add_argument("--base-mva", type=float, default=1.0)
    p.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FeederError, ProfileError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"saver: error: {exc}", file=sys.stderr)
        return 2
    except PowerFlowError as exc:
        print(f"saver: power flow failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
