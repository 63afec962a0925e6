"""Command-line front end: simulate | identify | validate | compare | gen-signal.

Exit codes: 0 success, 1 validation thresholds unmet, 2 configuration error,
3 data error, 4 simulation/optimization error, 5 identification stop
criterion unmet after the restart budget (partial results are still written).
Verbosity via the GOVID_LOG environment variable (DEBUG/INFO/WARNING).
Every command is deterministic given (config, seed, inputs); no partial
files are written on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import estimate, figures, plants, validate
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ConstantChannel,
    CutoffAboveNyquist,
    DegeneratePeriod,
    EmptyFile,
    GovidError,
    InvalidParams,
    MalformedCsv,
    MissingBase,
    MissingChannel,
    NonPositiveBase,
    NonUniformSampling,
    RateMismatch,
    WrongModelKind,
)
from .optim import hybrid_identify
from .params import ParamSet
from .signals import TimeSeries, add_noise, butterworth_lowpass, constant, load_csv, \
    per_unitize, square_pulse, write_csv

log = logging.getLogger("govid")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SIMULATION = 4
EXIT_UNCONVERGED = 5

_DATA_ERRORS = (MalformedCsv, NonUniformSampling, EmptyFile, MissingChannel,
                RateMismatch, MissingBase, NonPositiveBase, CutoffAboveNyquist,
                ConstantChannel, DegeneratePeriod, FileNotFoundError)
_CONFIG_ERRORS = (ConfigError, InvalidParams, WrongModelKind)


def _setup_logging():
    level = os.environ.get("GOVID_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_inputs(path, cfg: RunConfig) -> TimeSeries:
    ts = load_csv(path)
    if cfg.preprocessing.bases:
        ts = per_unitize(ts, cfg.preprocessing.bases)
    if cfg.preprocessing.filter:
        ts = butterworth_lowpass(ts, cfg.preprocessing.cutoff_hz, cfg.preprocessing.order)
    return ts


def _build_model(cfg: RunConfig, params: ParamSet | None = None):
    params = params if params is not None else cfg.build_params()
    return plants.build_model(cfg.model.kind, params, cfg.model.dt,
                              p_e0=cfg.model.p_e0, e_fd0=cfg.model.e_fd0,
                              fsrt_margin=cfg.model.fsrt_margin,
                              limiter_enabled=cfg.model.limiter_enabled)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model = _build_model(cfg)
    inputs = _load_inputs(args.input, cfg)
    out = model.simulate(inputs)
    out_dir = _out_dir(args)
    target = out_dir / (args.output or "taps.csv")
    write_csv(out, target)
    log.info("wrote %s (%d samples, %d taps)", target, out.n_samples, len(out.channels))
    return EXIT_OK


def cmd_gen_signal(args) -> int:
    cfg = load_config(args.config)
    sig = cfg.signal
    if not sig.channels:
        raise ConfigError("signal.channels is empty; nothing to generate")
    ts = None
    for chan in sig.channels:
        if chan.kind == "constant":
            piece = constant(sig.dt, sig.duration, chan.value, channel=chan.name)
        else:
            piece = square_pulse(sig.dt, sig.duration, chan.period, chan.duty,
                                 chan.low, chan.high, channel=chan.name)
        ts = piece if ts is None else ts.with_channels({chan.name: piece.channel(chan.name)})
    if not math.isinf(sig.snr_db):
        ts = add_noise(ts, sig.snr_db, sig.noise_seed,
                       channels=sig.noise_channels or None)
    out_dir = _out_dir(args)
    target = out_dir / (args.output or "excitation.csv")
    write_csv(ts, target)
    log.info("wrote %s", target)
    return EXIT_OK


def _identify_subsystems(cfg: RunConfig, args):
    if args.subsystem:
        return [int(s) for s in args.subsystem]
    return [int(s) for s in plants.subsystem_ids(cfg.model.kind)]


def cmd_identify(args) -> int:
    cfg = load_config(args.config)
    subsystems = _identify_subsystems(cfg, args)
    for sid in subsystems:
        plants.subsystem_view(cfg.model.kind, sid)   # validates kind/id pairing
    data = _load_inputs(args.input, cfg)
    template = cfg.build_params()
    optimizer = args.optimizer or cfg.optimizer.name
    seed = cfg.optimizer.seed if args.seed is None else args.seed
    use_ls = cfg.optimizer.use_ls_seed and not args.no_ls_seed

    out_dir = _out_dir(args)
    fitted_values: dict[str, float] = {}
    fit_info = {}
    all_converged = True
    for sid in subsystems:
        opt_cfg = cfg.optimizer.build(name=optimizer, seed=seed)
        fitted, report = hybrid_identify(
            cfg.model.kind, sid, data, template, opt_cfg=opt_cfg,
            optimizer=optimizer, use_ls_seed=use_ls,
            restarts=cfg.optimizer.restarts, workers=cfg.optimizer.workers,
            polish=cfg.optimizer.polish)
        view = plants.subsystem_view(cfg.model.kind, sid)
        for name in view.free_params:
            fitted_values[name] = fitted.value(name)
        fit_info[str(sid)] = {
            "optimizer": optimizer,
            "best_mse": report.best_fitness,
            "best_index_percent": 100.0 * report.best_fitness,
            "generations": report.generations_total,
            "rounds": report.rounds,
            "ls_seed_used": report.ls_seed_used,
            "polished": report.polished,
            "converged": report.converged,
            "seed": seed,
        }
        all_converged = all_converged and report.converged
        hist_path = out_dir / f"history_sub{sid}.csv"
        with open(hist_path, "w", encoding="utf-8") as fh:
            fh.write("generation,best_mse\n")
            gen = 0
            for hist in report.histories:
                for value in hist:
                    fh.write(f"{gen},{value:.17g}\n")
                    gen += 1
        if cfg.figures:
            fig_dir = out_dir / "figures"
            fig_dir.mkdir(exist_ok=True)
            figures.convergence_plot(report.histories,
                                     fig_dir / f"convergence_sub{sid}.png",
                                     title=f"subsystem ({sid}) fit convergence")
        log.info("subsystem %d: best index %.3e%%, converged=%s",
                 sid, 100 * report.best_fitness, report.converged)

    payload = {
        "model": cfg.model.kind,
        "dt": cfg.model.dt,
        "subsystems": subsystems,
        "parameters": fitted_values,
        "fit_info": fit_info,
        "config_digest": cfg.digest,
    }
    _write_json(out_dir / (args.output or "fitted_params.json"), payload)
    return EXIT_OK if all_converged else EXIT_UNCONVERGED


def _load_fitted(path, cfg: RunConfig) -> tuple[ParamSet, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read fitted parameter file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if payload.get("model") != cfg.model.kind:
        raise ConfigError(f"fitted file is for {payload.get('model')}, config for "
                          f"{cfg.model.kind}")
    params = cfg.build_params().updated(payload.get("parameters", {}))
    return params, payload


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    params, payload = _load_fitted(args.params, cfg)
    data = _load_inputs(args.input, cfg)
    out_dir = _out_dir(args)
    vcfg = cfg.validation

    runs = []
    labels = {1: "valve position", 2: "electrical power", 3: "speed controller",
              4: "temperature controller", 5: "exciter"}
    fig_dir = out_dir / "figures"
    if cfg.figures:
        fig_dir.mkdir(parents=True, exist_ok=True)
    for sid in payload.get("subsystems", [int(s) for s in plants.subsystem_ids(cfg.model.kind)]):
        view = plants.subsystem_view(cfg.model.kind, sid)
        y = data.channel(view.output)
        y_hat = plants.simulate_subsystem(cfg.model.kind, sid, params, data)
        index = estimate.error_index_percent(y, y_hat)
        resid = (y - y_hat)[::vcfg.decimate]
        wres = validate.whiteness_test(resid, max_lag=vcfg.lags, alpha=vcfg.alpha,
                                       remove_mean=vcfg.remove_mean,
                                       use_chi2=vcfg.use_chi2,
                                       signal_scale=float(np.std(y)))
        runs.append(validate.SubsystemRun(
            sub_id=int(sid), label=labels.get(int(sid), view.output),
            dataset="validation", error_index=index, whiteness=wres,
            parameters={n: params.value(n) for n in view.free_params}))
        lag_path = out_dir / f"autocorr_sub{sid}.csv"
        with open(lag_path, "w", encoding="utf-8") as fh:
            fh.write("lag,autocorrelation,band\n")
            for tau, value in enumerate(wres.autocorr):
                fh.write(f"{tau},{value:.17g},{wres.band:.17g}\n")
        if cfg.figures:
            figures.autocorr_plot(wres, fig_dir / f"autocorr_sub{sid}.png",
                                  title=f"({sid}) {labels.get(int(sid), '')} residual autocorrelation")
            figures.fit_overlay(data.time(), y, y_hat,
                                fig_dir / f"fit_sub{sid}.png", label=view.output,
                                title=f"({sid}) {labels.get(int(sid), '')} validation fit")

    report = validate.build_report(runs, metadata={
        "model": cfg.model.kind,
        "config_digest": cfg.digest,
        "data_file": str(args.input),
        "fitted_file": str(args.params),
        "whiteness_alpha": vcfg.alpha,
        "whiteness_lags": vcfg.lags,
        "whiteness_threshold": "chi2" if vcfg.use_chi2 else "density-beta",
        "residual_decimation": vcfg.decimate,
        "max_error_index_percent": vcfg.max_error_index_percent,
    })
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    with open(out_dir / "error_indices.csv", "w", encoding="utf-8") as fh:
        fh.write("subsystem,dataset,error_index_percent,whiteness_statistic,"
                 "whiteness_threshold,whiteness_pass\n")
        for run in runs:
            w = run.whiteness
            fh.write(f"{run.sub_id},{run.dataset},{run.error_index:.17g},"
                     f"{w.statistic:.17g},{w.threshold:.17g},{int(w.passed)}\n")
    passed = report.all_passed(vcfg.max_error_index_percent)
    print(report.to_text())
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [0]
    train = _load_inputs(args.train, cfg)
    valid = _load_inputs(args.validation, cfg)
    jobs = [(cfg, train, valid)]
    if args.train2:
        if cfg.second_model is None:
            raise ConfigError("--train2 given but configuration has no second_model")
        if not args.validation2:
            raise ConfigError("--train2 requires --validation2")
        jobs.append((cfg.second_model, _load_inputs(args.train2, cfg),
                     _load_inputs(args.validation2, cfg)))

    optimizers = ("cs", "ga", "pso")
    rows = {}           # param name -> {optimizer: median fitted value}
    indices = {}        # optimizer -> {sub_id: median validation index}
    for run_cfg, trn, vld in jobs:
        template = run_cfg.build_params()
        kind = run_cfg.model.kind
        for sid in plants.subsystem_ids(kind):
            view = plants.subsystem_view(kind, sid)
            for opt in optimizers:
                fitted_per_seed, idx_per_seed = [], []
                for seed in seeds:
                    opt_cfg = cfg.optimizer.build(name=opt, seed=seed)
                    fitted, _rep = hybrid_identify(
                        kind, sid, trn, template, opt_cfg=opt_cfg, optimizer=opt,
                        use_ls_seed=cfg.optimizer.use_ls_seed and not args.no_ls_seed,
                        restarts=cfg.optimizer.restarts, workers=cfg.optimizer.workers,
                        polish=cfg.optimizer.polish)
                    y_hat = plants.simulate_subsystem(kind, sid, fitted, vld)
                    idx_per_seed.append(
                        estimate.error_index_percent(vld.channel(view.output), y_hat))
                    fitted_per_seed.append([fitted.value(n) for n in view.free_params])
                med = np.median(np.asarray(fitted_per_seed), axis=0)
                for name, value in zip(view.free_params, med):
                    rows.setdefault(name, {})[opt] = float(value)
                indices.setdefault(opt, {})[int(sid)] = float(np.median(idx_per_seed))

    out_dir = _out_dir(args)
    with open(out_dir / "comparison.csv", "w", encoding="utf-8") as fh:
        fh.write("parameter," + ",".join(optimizers) + "\n")
        for name, table in rows.items():
            fh.write(name + "," + ",".join(f"{table.get(o, float('nan')):.17g}"
                                           for o in optimizers) + "\n")
    with open(out_dir / "comparison_indices.csv", "w", encoding="utf-8") as fh:
        fh.write("subsystem," + ",".join(optimizers) + "\n")
        for sid in sorted({s for t in indices.values() for s in t}):
            fh.write(str(sid) + "," + ",".join(f"{indices[o].get(sid, float('nan')):.17g}"
                                               for o in optimizers) + "\n")
    if cfg.figures:
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        figures.comparison_plot(indices, fig_dir / "comparison.png",
                                title="validation error index per optimizer")
    log.info("wrote comparison over %d seeds, %d parameter rows", len(seeds), len(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="govid",
        description="Turbine-governor and exciter model simulation and "
                    "parameter identification toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run the block-engine model over an input record")
    common(p)
    p.add_argument("--input", required=True, help="input channel CSV")
    p.add_argument("--output", help="output CSV name (default taps.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-signal", help="synthesize an excitation record")
    common(p)
    p.add_argument("--output", help="output CSV name (default excitation.csv)")
    p.set_defaults(func=cmd_gen_signal)

    p = sub.add_parser("identify", help="fit subsystem parameters from a training record")
    common(p)
    p.add_argument("--input", required=True, help="training CSV")
    p.add_argument("--subsystem", action="append",
                   help="subsystem id to fit (repeatable; default: all)")
    p.add_argument("--optimizer", choices=("cs", "ga", "pso"))
    p.add_argument("--seed", type=int)
    p.add_argument("--no-ls-seed", action="store_true",
                   help="skip least-squares pre-identification")
    p.add_argument("--output", help="fitted parameter JSON name")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("validate", help="error indices and whiteness on held-out data")
    common(p)
    p.add_argument("--params", required=True, help="fitted parameter JSON")
    p.add_argument("--input", required=True, help="validation CSV")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="CS/GA/PSO comparison over a seed list")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--train2", help="second-model training CSV")
    p.add_argument("--validation2", help="second-model validation CSV")
    p.add_argument("--seeds", help="comma-separated seed list (default: 0)")
    p.add_argument("--no-ls-seed", action="store_true")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GovidError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
