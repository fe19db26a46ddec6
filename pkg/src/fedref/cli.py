"""Command line entry point.

    fedref run CONFIG [--output-dir DIR] [--workers N]
    fedref udp SCENARIOS [--output-dir DIR]
    fedref sweep CONFIG --param rho --values 1,3,5,7 [--output-dir DIR]

``FEDREF_OUTPUT_DIR`` overrides the config's ``output_dir``; ``--output-dir``
overrides both.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import config_from_dict, config_to_dict, parse_config, parse_scenarios
from .errors import FedRefError
from .outputs import emit_outputs, line_chart_svg
from .runner import EVAL_METRICS, run_experiment
from .udp import DriftScenario, verify_ordering

ENV_OUTPUT_DIR = "FEDREF_OUTPUT_DIR"
PARAM_ALIASES = {"rho": "fedref.rho", "lambda_g": "fedref.lambda_g", "mu": "local.proximal_mu",
                 "alpha": "partition.alpha"}

log = logging.getLogger("fedref")


def _output_dir(arg: str | None, configured: str) -> Path:
    return Path(arg or os.environ.get(ENV_OUTPUT_DIR) or configured)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FedRefError(f"cannot read {path}: {exc}") from exc


def cmd_run(args) -> int:
    cfg = parse_config(_read(args.config))
    out = _output_dir(args.output_dir, cfg.output_dir)
    summary = run_experiment(cfg, workers=args.workers)
    emit_outputs(summary, out)
    last = summary.rounds[-1]
    print(f"{cfg.strategy}: {cfg.rounds} rounds, final "
          + ", ".join(f"{k}={v:.4f}" for k, v in last.eval.items())
          + f", zeta[{cfg.forgetting_metric}]={summary.zeta[cfg.forgetting_metric]['signed']:.4f}"
          + f" -> {out}")
    return 0


def cmd_udp(args) -> int:
    scenarios = parse_scenarios(_read(args.scenarios))
    reports = [verify_ordering(DriftScenario(**s.model_dump())) for s in scenarios]
    for i, rep in enumerate(reports):
        p = rep.closed_form
        print(f"[{i}] regime={'ok' if rep.in_regime else 'out (' + rep.reason + ')'} "
              f"P avg={p['fedavg']:.4g} ref={p['fedref']:.4g} opt={p['fedopt']:.4g} "
              f"prox={p['fedprox']:.4g} ordering={rep.closed_form_ordering} "
              f"empirical={rep.empirical_ordering} ref<avg={rep.ref_below_avg}")
    if args.output_dir or os.environ.get(ENV_OUTPUT_DIR):
        out = _output_dir(args.output_dir, ".")
        out.mkdir(parents=True, exist_ok=True)
        (out / "udp.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    return 0


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def cmd_sweep(args) -> int:
    base = config_to_dict(parse_config(_read(args.config)))
    path = PARAM_ALIASES.get(args.param, args.param)
    out = _output_dir(args.output_dir, base["output_dir"])
    values = [yaml.safe_load(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise FedRefError("--values is empty")

    rows, curves = [], {m: {} for m in EVAL_METRICS}
    for value in values:
        raw = json.loads(json.dumps(base))
        _set_path(raw, path, value)
        cfg = config_from_dict(raw)
        summary = run_experiment(cfg, workers=args.workers)
        label = f"{args.param}={value}"
        emit_outputs(summary, out / label, label=label)
        row = {args.param: value, **summary.final_metrics}
        for m in EVAL_METRICS:
            row[f"zeta_signed_{m}"] = summary.zeta[m]["signed"]
            curves[m][label] = summary.series(m).values
        for t in summary.rounds_to_target:
            row[f"rounds_to_{t['metric']}_{t['target']}"] = t["round"]
        rows.append(row)
        print(", ".join(f"{k}={v}" for k, v in row.items()))

    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for m, series in curves.items():
        (out / f"sweep_{m}.svg").write_text(line_chart_svg(f"{m} vs round", series))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedref", description="Federated learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("udp", help="compare drift probabilities for scenarios")
    p.add_argument("scenarios")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_udp)

    p = sub.add_parser("sweep", help="run one experiment per value of a parameter")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma separated, e.g. 1,3,5,7")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FedRefError, OSError) as exc:
        print(f"fedref {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
