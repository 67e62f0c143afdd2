"""Command line entry points.

Subcommands: ``simulate`` (one full-order run), ``train`` (offline campaign
to an artifact directory), ``predict`` (monitoring signals to trajectory
envelopes), ``evaluate`` (tiered accuracy report on fresh samples) and
``report`` (summarize an evaluation directory, optionally with a figure).

Exit codes: 0 success, 2 configuration problems, 3 numeric failures,
64 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, kernel_backend
from .config import CampaignConfig
from .errors import (ConfigurationError, GeometryError, IntegrationError,
                     PredictionError, StaleWeightsError)
from .fom import ParameterVector, integrate_newmark
from .matio import load_array, save_array
from .pipeline import (REPORT_COLUMNS, evaluate, load_artifact,
                       predict_online, save_artifact, train_offline)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> CampaignConfig:
    if path is None:
        return CampaignConfig().validate()
    return CampaignConfig.from_json(path)


def _parse_params(spec: str | None, space) -> ParameterVector:
    """'name=value,name=value' overrides on top of the nominal point."""
    values = dict(zip(space.names, space.nominal().values))
    if spec:
        for chunk in spec.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if "=" not in chunk:
                raise ConfigurationError(
                    f"parameter override {chunk!r} is not name=value")
            name, _, raw = chunk.partition("=")
            name = name.strip()
            if name not in values:
                raise ConfigurationError(
                    f"unknown parameter {name!r}; choices: "
                    + ", ".join(space.names))
            try:
                values[name] = float(raw)
            except ValueError as exc:
                raise ConfigurationError(
                    f"cannot parse value for {name!r}: {raw!r}") from exc
    return ParameterVector(space.names,
                           np.array([values[n] for n in space.names]))


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    system = cfg.build_system()
    space = cfg.build_space()
    p = _parse_params(args.params, space)
    hist = integrate_newmark(system, p, cfg.time.dt, cfg.time.n_steps)
    save_array(args.out, hist.displacement)
    print(f"simulated {system.n_dof} dofs x {hist.n_steps} steps "
          f"(dt {cfg.time.dt})")
    print("parameters: " + ", ".join(
        f"{n}={v:.6g}" for n, v in p.as_dict().items()))
    print(f"peak |displacement| {np.max(np.abs(hist.displacement)):.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    progress = None if args.quiet else print
    artifact, summary = train_offline(cfg, progress=progress)
    save_artifact(artifact, args.out_dir)
    t = summary["timings"]
    print(f"artifact written to {args.out_dir}")
    print(f"basis orders r={artifact.r} r_tilde={artifact.r_tilde}; "
          f"kernel backend {kernel_backend}")
    print(f"offline time {t['total']:.2f}s "
          f"(fom {t['fom_campaign']:.2f}s, generative {t['generative']:.2f}s, "
          f"inference {t['inference']:.2f}s)")
    return EXIT_OK


def cmd_predict(args) -> int:
    artifact = load_artifact(args.artifact)
    signals = load_array(args.signals)
    result = predict_online(artifact, signals, seed=args.seed,
                            n_basis_draws=args.basis_draws,
                            n_param_draws=args.param_draws)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, arr in (("mean", result.mean), ("band", result.band),
                      ("lower", result.lower), ("upper", result.upper)):
        save_array(os.path.join(args.out_dir, f"{name}.grm"), arr)
    params = {
        "names": list(artifact.space.names),
        "mean": result.params_mean.tolist(),
        "std": result.params_std.tolist(),
        "n_members": result.n_members,
        "n_failed": result.n_failed,
    }
    with open(os.path.join(args.out_dir, "params.json"), "w") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("inferred parameters (mean +/- std):")
    for n, m, s in zip(params["names"], params["mean"], params["std"]):
        print(f"  {n:>16s} = {m:.6g} +/- {s:.3g}")
    print(f"ensemble: {result.n_members} members, {result.n_failed} failed")
    print(f"wrote trajectory envelopes to {args.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    artifact = load_artifact(args.artifact)
    progress = None if args.quiet else print
    report = evaluate(artifact, args.out_dir, progress=progress,
                      n_basis_draws=args.basis_draws,
                      n_param_draws=args.param_draws,
                      with_envelopes=not args.no_envelopes)
    _print_rows(report["rows"])
    cov = report["metrics"]["parameters"]["coverage_rate"]
    print(f"parameter band coverage: {100 * cov:.1f}%")
    env = report["metrics"]["envelopes"]
    if env is not None:
        ok = [c for c in env["coverage"] if c is not None]
        if ok:
            print(f"envelope coverage: mean {100 * float(np.mean(ok)):.1f}% "
                  f"over {len(ok)} samples")
    print(f"wrote report files to {args.out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    csv_path = os.path.join(args.results, "report.csv")
    metrics_path = os.path.join(args.results, "report_metrics.json")
    try:
        with open(csv_path) as fh:
            lines = fh.read().strip().splitlines()
        with open(metrics_path) as fh:
            metrics = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read results: {exc}") from exc
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    _print_rows(rows)
    print(f"test samples: {metrics['n_test']}; basis orders "
          f"r={metrics['basis_orders']['r']} "
          f"r_tilde={metrics['basis_orders']['r_tilde']}")
    cov = metrics["parameters"]["coverage_rate"]
    print(f"parameter band coverage: {100 * cov:.1f}%")
    if args.plot:
        _plot_report(rows, metrics, args.plot)
        print(f"wrote {args.plot}")
    return EXIT_OK


def _print_rows(rows) -> None:
    widths = {c: max(len(c), *(len(_cell(r.get(c))) for r in rows))
              for c in REPORT_COLUMNS}
    print("  ".join(c.rjust(widths[c]) for c in REPORT_COLUMNS))
    for r in rows:
        print("  ".join(_cell(r.get(c)).rjust(widths[c])
                        for c in REPORT_COLUMNS))


def _cell(value) -> str:
    if value is None or value == "":
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _plot_report(rows, metrics, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tiers = [r for r in rows if r["model"] != "fom"]
    names = [r["model"] for r in tiers]
    means = [float(r["mean_error_pct"] or "nan") for r in tiers]
    maxes = [float(r["max_error_pct"] or "nan") for r in tiers]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(x - 0.18, means, width=0.36, label="mean")
    ax.bar(x + 0.18, maxes, width=0.36, label="max")
    ax.set_xticks(x, names)
    ax.set_yscale("log")
    ax.set_ylabel("trajectory error [%]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_parser() -> _Parser:
    parser = _Parser(prog="genrom",
                     description="generative reduced-order modeling of a "
                                 "nonlinear chain")
    parser.add_argument("--version", action="version",
                        version=f"genrom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the full-order model once")
    p.add_argument("--config", help="campaign config JSON (default settings "
                                    "when omitted)")
    p.add_argument("--params", help="comma separated name=value overrides")
    p.add_argument("--out", required=True, help="output array file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="run the offline campaign")
    p.add_argument("--config", help="campaign config JSON")
    p.add_argument("--out-dir", required=True, help="artifact directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="trajectory envelopes from signals")
    p.add_argument("--artifact", required=True, help="artifact directory")
    p.add_argument("--signals", required=True,
                   help="sensor signal array file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--basis-draws", type=int, default=None)
    p.add_argument("--param-draws", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="tiered accuracy report")
    p.add_argument("--artifact", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--basis-draws", type=int, default=None)
    p.add_argument("--param-draws", type=int, default=None)
    p.add_argument("--no-envelopes", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize an evaluation directory")
    p.add_argument("--results", required=True,
                   help="directory written by evaluate")
    p.add_argument("--plot", help="write a PNG figure to this path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, GeometryError, PredictionError,
            StaleWeightsError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
