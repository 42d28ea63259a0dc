"""Command-line front end: experiment config, execution, CSV/JSON emission.

Every subcommand reads an optional flat-key JSON config, lets explicit flags
override it, validates the merged result, and writes into the output
directory a `manifest.json` (schema_version, normalized config, the raw
config file echoed verbatim, package version) plus the data CSVs. Nothing in
the outputs depends on wall-clock time, so identical invocations produce
byte-identical files.

Exit codes: 0 all configured assertions pass, 1 an assertion failed
(data files are still written), 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .activations import (
    ERF,
    IDENTITY,
    RELU,
    SIGMOID,
    SOFTPLUS,
    TANH,
    Activation,
    leaky_relu,
    moments,
)
from .datagen import CovarianceSpec, DataSpec, concentration_report, identity_covariance
from .harness import (
    CoupledRunConfig,
    LabelSpec,
    cnn_deviation_experiment,
    coupled_run,
    discrepancy_vs_dimension,
    norm_feature_ablation_experiment,
    residual_subspace_decomposition,
    spectral_decay_experiment,
)

log = logging.getLogger("earlylin")

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"

_ACTIVATIONS = {
    "erf": ERF,
    "tanh": TANH,
    "sigmoid": SIGMOID,
    "softplus": SOFTPLUS,
    "relu": RELU,
    "identity": IDENTITY,
}

SUBCOMMANDS = ("moments", "spectral-decay", "agreement", "discrepancy-sweep",
               "cnn-ntk", "concentration", "norm-ablation", "decompose")

# Flat config keys per subcommand, with defaults. None means "no value unless
# given"; assertion thresholds are only checked when set.
DEFAULTS = {
    "moments": {
        "act": "erf", "order": None, "slope": 0.01,
    },
    "spectral-decay": {
        "d_list": [16, 32, 64, 128], "n": 2000, "m": 4000, "act": "erf",
        "slope": 0.01, "seeds": 3, "seed": 0,
        "max_spectral_slope": None, "min_frobenius_slope": None, "min_r2": None,
    },
    "agreement": {
        "mode": "both", "d": 50, "n": 5000, "m": 256, "act": "erf",
        "slope": 0.01, "labels": "teacher-sign", "teacher_width": 5,
        "a_norm": 0.5, "eta": None, "T": None, "horizon_c": 0.25,
        "n_test": 2000, "record_stride": 1, "seeds": 1, "seed": 1,
        "max_train_gap": None, "max_test_gap": None, "radius_check": False,
    },
    # eta/T are fixed across dimensions by default: the sweep compares the
    # per-d gap over one shared step window, so per-d schedules would make
    # the maxima incomparable (small d would simply be measured over a
    # shorter run).
    "discrepancy-sweep": {
        "d_list": [10, 30, 50], "n": 2000, "m": 256, "act": "erf",
        "slope": 0.01, "mode": "both", "labels": "teacher-sign",
        "teacher_width": 5, "a_norm": 0.5, "eta": 0.5, "T": 40,
        "horizon_c": 0.25, "n_test": 0, "record_stride": 1,
        "seeds": 5, "seed": 1, "require_decreasing": False,
    },
    "cnn-ntk": {
        "d": 64, "q": 16, "n": 512, "act": "erf", "slope": 0.01,
        "seed": 0, "growth": 1.1, "order": None,
        "max_ratio": None, "require_decreasing": False,
    },
    "concentration": {
        "d": 200, "n": 2000, "base": "gaussian", "seed": 0,
        "bound_factor": None, "gram_lo": None, "gram_hi": None,
    },
    "norm-ablation": {
        "d": 50, "n": 2000, "m": 256, "act": "relu", "slope": 0.01,
        "mode": "both", "a_norm": 0.5, "a_seed": 0, "eta": None, "T": None,
        "horizon_c": 0.25, "record_stride": 1, "seed": 1,
        "min_fraction": None,
    },
    "decompose": {
        "residual_csv": None, "xtest_csv": None,
    },
}

_INT_KEYS = {"n", "d", "m", "q", "seeds", "seed", "T", "record_stride",
             "order", "teacher_width", "n_test", "a_seed"}
_FLOAT_KEYS = {"eta", "horizon_c", "a_norm", "slope", "growth",
               "max_spectral_slope", "min_frobenius_slope", "min_r2",
               "max_train_gap", "max_test_gap", "max_ratio", "min_fraction",
               "bound_factor", "gram_lo", "gram_hi"}
_BOOL_KEYS = {"require_decreasing", "radius_check"}
_LIST_KEYS = {"d_list"}
_CHOICE_KEYS = {
    "act": tuple(_ACTIVATIONS) + ("leaky-relu",),
    "mode": ("first", "second", "both"),
    "labels": ("teacher-sign", "norm", "zero"),
    "base": ("gaussian", "rademacher", "uniform-scaled"),
}
_NULLABLE = {"order", "eta", "T", "max_spectral_slope", "min_frobenius_slope",
             "min_r2", "max_train_gap", "max_test_gap", "max_ratio",
             "min_fraction", "bound_factor", "gram_lo", "gram_hi",
             "residual_csv", "xtest_csv"}


class ConfigError(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _coerce(key: str, value):
    """Check/convert one config value; raise ValueError with the reason."""
    if value is None:
        if key in _NULLABLE:
            return None
        raise ValueError("null not allowed")
    if key in _LIST_KEYS:
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        if not isinstance(value, (list, tuple)) or not value:
            raise ValueError(f"expected a non-empty list, got {value!r}")
        return [int(v) for v in value]
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        raise ValueError(f"expected true/false, got {value!r}")
    if key in _INT_KEYS:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    if key in _CHOICE_KEYS:
        value = str(value)
        if value not in _CHOICE_KEYS[key]:
            raise ValueError(f"must be one of {', '.join(_CHOICE_KEYS[key])}; got {value!r}")
        return value
    return str(value)


def validate_config(subcommand: str, raw: dict) -> tuple[dict, list[str]]:
    """Merge onto defaults, type-check, and emit regime warnings.

    Returns (normalized config, warnings); raises ConfigError with a list of
    `/key: reason` entries on any validation error.
    """
    defaults = DEFAULTS[subcommand]
    cfg = dict(defaults)
    errors = []
    for key, value in raw.items():
        if key not in defaults:
            errors.append(f"/{key}: unknown key for {subcommand!r}")
            continue
        try:
            cfg[key] = _coerce(key, value)
        except ValueError as exc:
            errors.append(f"/{key}: {exc}")
    if not errors:
        errors.extend(f"/{key}: {reason}"
                      for key, reason in _semantic_errors(subcommand, cfg))
    if errors:
        raise ConfigError(errors)
    return cfg, _regime_warnings(cfg)


def _semantic_errors(subcommand: str, cfg: dict):
    for key in ("n", "d", "m", "q", "seeds", "record_stride", "teacher_width"):
        if key in cfg and cfg[key] is not None and cfg[key] < 1:
            yield key, f"must be >= 1, got {cfg[key]}"
    if cfg.get("m") is not None and cfg["m"] % 2 != 0:
        yield "m", "width must be even (symmetric initialization)"
    if cfg.get("T") is not None and cfg["T"] < 0:
        yield "T", f"must be >= 0, got {cfg['T']}"
    if cfg.get("eta") is not None and cfg["eta"] <= 0:
        yield "eta", f"must be > 0, got {cfg['eta']}"
    if "horizon_c" in cfg and cfg["horizon_c"] <= 0:
        yield "horizon_c", f"must be > 0, got {cfg['horizon_c']}"
    if "order" in cfg and cfg["order"] is not None and not 1 <= cfg["order"] <= 256:
        yield "order", f"must be in [1, 256], got {cfg['order']}"
    if subcommand == "cnn-ntk" and cfg["q"] > cfg["d"]:
        yield "q", f"filter size q={cfg['q']} exceeds d={cfg['d']}"
    if subcommand == "decompose":
        for key in ("residual_csv", "xtest_csv"):
            if cfg[key] is None:
                yield key, "required (path to a CSV file)"
    if "d_list" in cfg:
        if any(d < 1 for d in cfg["d_list"]):
            yield "d_list", f"dimensions must be >= 1, got {cfg['d_list']}"


def _regime_warnings(cfg: dict) -> list[str]:
    warnings = []
    if cfg.get("n") is not None:
        dims = cfg.get("d_list") or ([cfg["d"]] if cfg.get("d") else [])
        for d in dims:
            threshold = d ** 1.1
            if cfg["n"] < threshold:
                warnings.append(
                    f"n={cfg['n']} is below d^1.1 = {threshold:.0f} for d={d}; the "
                    "guarantees target the regime n >~ d^(1+a) for some a > 0, so "
                    "expect noisy agreement at this size")
                break
    return warnings


def _activation(cfg: dict) -> Activation:
    if cfg["act"] == "leaky-relu":
        return leaky_relu(cfg["slope"])
    return _ACTIVATIONS[cfg["act"]]


def _write_manifest(out_dir: str, subcommand: str, cfg: dict, raw: dict | None,
                    warnings: list[str]) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "subcommand": subcommand,
        "config": cfg,
        "config_file": raw,
        "warnings": warnings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT % v if isinstance(v, float) else v
                             for v in row])


class Assertion:
    """A named post-run check; failures flip the exit code to 1."""

    def __init__(self, name: str, ok: bool, detail: str):
        self.name, self.ok, self.detail = name, ok, detail

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def _coupled_config(cfg: dict, seed_shift: int = 0) -> CoupledRunConfig:
    d = cfg["d"]
    labels = LabelSpec(
        kind=cfg.get("labels", "norm"),
        teacher_width=cfg.get("teacher_width", 5),
        teacher_seed=cfg["seed"] + seed_shift,
        a_norm=cfg.get("a_norm", 0.5),
        a_seed=cfg.get("a_seed", cfg["seed"]) + seed_shift,
    )
    return CoupledRunConfig(
        mode=cfg["mode"],
        data=DataSpec(identity_covariance(d), "gaussian", cfg["n"],
                      cfg["seed"] + seed_shift),
        m=cfg["m"],
        act=_activation(cfg),
        labels=labels,
        net_seed=cfg["seed"] + seed_shift,
        eta=cfg["eta"],
        T=cfg["T"],
        horizon_c=cfg["horizon_c"],
        n_test=cfg.get("n_test", 2000),
        record_stride=cfg["record_stride"],
    )


# ---------------------------------------------------------------- subcommands

def _run_moments(cfg, out_dir):
    mom = moments(_activation(cfg), cfg["order"])
    payload = {
        "act": cfg["act"],
        "order": mom.quad_order,
        "zeta": mom.zeta,
        "theta0": mom.theta0,
        "theta1": mom.theta1,
        "theta2": mom.theta2,
        "gamma": mom.gamma,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    with open(os.path.join(out_dir, "moments.json"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return []


def _run_spectral_decay(cfg, out_dir):
    seeds = [cfg["seed"] + k for k in range(cfg["seeds"])]
    result = spectral_decay_experiment(cfg["d_list"], cfg["n"], cfg["m"],
                                       _activation(cfg), seeds)
    _write_csv(os.path.join(out_dir, "norms.csv"),
               ["d", "seed", "spectral", "frobenius"],
               [(d, s, float(result.spectral[i, k]), float(result.frobenius[i, k]))
                for i, d in enumerate(result.d_list)
                for k, s in enumerate(seeds)])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["d", "mean_spectral", "mean_frobenius"],
               [(d, float(result.mean_spectral[i]), float(result.mean_frobenius[i]))
                for i, d in enumerate(result.d_list)])
    fits = {
        "spectral": {"slope": result.spectral_fit.slope,
                     "intercept": result.spectral_fit.intercept,
                     "r_squared": result.spectral_fit.r_squared},
        "frobenius": {"slope": result.frobenius_fit.slope,
                      "intercept": result.frobenius_fit.intercept,
                      "r_squared": result.frobenius_fit.r_squared},
    }
    with open(os.path.join(out_dir, "fits.json"), "w", encoding="utf-8") as fh:
        json.dump(fits, fh, indent=2, sort_keys=True)
        fh.write("\n")

    checks = []
    sf, ff = result.spectral_fit, result.frobenius_fit
    if cfg["max_spectral_slope"] is not None:
        checks.append(Assertion(
            "spectral-slope", sf.slope <= cfg["max_spectral_slope"],
            f"slope {sf.slope:.4f} vs max {cfg['max_spectral_slope']}"))
    if cfg["min_frobenius_slope"] is not None:
        checks.append(Assertion(
            "frobenius-slope", ff.slope >= cfg["min_frobenius_slope"],
            f"slope {ff.slope:.4f} vs min {cfg['min_frobenius_slope']}"))
    if cfg["min_r2"] is not None:
        worst = min(sf.r_squared, ff.r_squared)
        checks.append(Assertion(
            "fit-r2", worst >= cfg["min_r2"],
            f"min r^2 {worst:.4f} vs required {cfg['min_r2']}"))
    return checks


def _run_agreement(cfg, out_dir):
    checks = []
    summary_rows = []
    for k in range(cfg["seeds"]):
        run_cfg = _coupled_config(cfg, seed_shift=k)
        result = coupled_run(run_cfg)
        seed = cfg["seed"] + k
        log.info("agreement seed %d: eta=%g T=%d records=%d",
                 seed, result.eta, result.T, len(result.records))
        _write_csv(
            os.path.join(out_dir, f"agreement_seed{seed}.csv"),
            ["step", "train_mse_net", "train_mse_lin", "train_gap",
             "test_gap_clipped", "w_move_fro", "v_move_l2", "beta_norm"],
            [(r.step, r.train_mse_net, r.train_mse_lin, r.train_gap,
              r.test_gap_clipped, r.w_move_fro, r.v_move_l2, r.beta_norm)
             for r in result.records])
        max_train = max(r.train_gap for r in result.records)
        max_test = max(r.test_gap_clipped for r in result.records)
        max_w = max(r.w_move_fro for r in result.records)
        max_beta = max(r.beta_norm for r in result.records)
        summary_rows.append((seed, result.eta, result.T, max_train, max_test,
                             max_w, max_beta))
        if cfg["max_train_gap"] is not None:
            checks.append(Assertion(
                f"train-gap-seed{seed}", max_train <= cfg["max_train_gap"],
                f"max train_gap {max_train:.3e} vs {cfg['max_train_gap']}"))
        if cfg["max_test_gap"] is not None:
            checks.append(Assertion(
                f"test-gap-seed{seed}", max_test <= cfg["max_test_gap"],
                f"max test_gap {max_test:.3e} vs {cfg['max_test_gap']}"))
        if cfg["radius_check"]:
            bound = math.sqrt(cfg["d"] * math.log(cfg["d"]))
            checks.append(Assertion(
                f"radius-seed{seed}", max_w <= bound and max_beta <= bound,
                f"max ||W-W0||_F {max_w:.3f}, max ||beta|| {max_beta:.3f}, "
                f"bound {bound:.3f}"))
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["seed", "eta", "T", "max_train_gap", "max_test_gap",
                "max_w_move_fro", "max_beta_norm"],
               summary_rows)
    return checks


def _run_discrepancy_sweep(cfg, out_dir):
    base = _coupled_config(cfg | {"d": cfg["d_list"][0]})
    sweep = discrepancy_vs_dimension(cfg["d_list"], base, n_seeds=cfg["seeds"])
    _write_csv(os.path.join(out_dir, "gaps.csv"),
               ["d", "seed_index", "max_train_gap"],
               [(d, k, float(sweep.max_gaps[i, k]))
                for i, d in enumerate(sweep.d_list)
                for k in range(cfg["seeds"])])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["d", "median_max_gap"],
               [(d, float(sweep.median_max_gap[i]))
                for i, d in enumerate(sweep.d_list)])
    checks = []
    if cfg["require_decreasing"]:
        meds = ", ".join(f"{v:.3e}" for v in sweep.median_max_gap)
        checks.append(Assertion("gap-decreasing", sweep.strictly_decreasing,
                                f"median max gaps by d: {meds}"))
    return checks


def _run_cnn_ntk(cfg, out_dir):
    result = cnn_deviation_experiment(cfg["d"], cfg["q"], cfg["n"],
                                      _activation(cfg), cfg["seed"],
                                      growth=cfg["growth"])
    _write_csv(os.path.join(out_dir, "deviation.csv"),
               ["d", "n", "q", "deviation", "base_norm", "ratio"],
               [(p.d, p.n, p.q, p.deviation, p.base_norm, p.ratio)
                for p in result.points])
    checks = []
    if cfg["max_ratio"] is not None:
        r0 = result.points[0].ratio
        checks.append(Assertion("cnn-ratio", r0 <= cfg["max_ratio"],
                                f"ratio {r0:.4f} vs max {cfg['max_ratio']}"))
    if cfg["require_decreasing"]:
        r0, r1 = result.points[0].ratio, result.points[1].ratio
        checks.append(Assertion("cnn-ratio-decreasing", result.decreasing,
                                f"ratio {r0:.4f} -> {r1:.4f} as d doubles"))
    return checks


def _run_concentration(cfg, out_dir):
    from .datagen import generate_inputs

    spec = DataSpec(identity_covariance(cfg["d"]), cfg["base"], cfg["n"],
                    cfg["seed"])
    report = concentration_report(generate_inputs(spec))
    _write_csv(os.path.join(out_dir, "report.csv"),
               ["max_norm_dev", "max_offdiag", "gram_spectral_over_n"],
               [(report.max_norm_dev, report.max_offdiag,
                 report.gram_spectral_over_n)])
    checks = []
    if cfg["bound_factor"] is not None:
        bound = cfg["bound_factor"] * math.sqrt(math.log(cfg["n"]) / cfg["d"])
        checks.append(Assertion(
            "norm-concentration", report.max_norm_dev <= bound,
            f"max norm dev {report.max_norm_dev:.4f} vs bound {bound:.4f}"))
        checks.append(Assertion(
            "offdiag-concentration", report.max_offdiag <= bound,
            f"max offdiag {report.max_offdiag:.4f} vs bound {bound:.4f}"))
    if cfg["gram_lo"] is not None or cfg["gram_hi"] is not None:
        lo = cfg["gram_lo"] if cfg["gram_lo"] is not None else 0.0
        hi = cfg["gram_hi"] if cfg["gram_hi"] is not None else math.inf
        checks.append(Assertion(
            "gram-scale", lo <= report.gram_spectral_over_n <= hi,
            f"||XX^T||/n = {report.gram_spectral_over_n:.4f} vs [{lo}, {hi}]"))
    return checks


def _run_norm_ablation(cfg, out_dir):
    run_cfg = _coupled_config(cfg | {"labels": "norm", "seeds": 1, "n_test": 0})
    result = norm_feature_ablation_experiment(run_cfg)
    _write_csv(os.path.join(out_dir, "ablation.csv"),
               ["step", "disc_full", "disc_naive"],
               [(r.step, r.disc_full, r.disc_naive) for r in result.records])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["eta", "T", "fraction_full_below"],
               [(result.eta, result.T, result.fraction_full_below)])
    checks = []
    if cfg["min_fraction"] is not None:
        checks.append(Assertion(
            "full-below-naive",
            result.fraction_full_below >= cfg["min_fraction"],
            f"full model closer at {result.fraction_full_below:.0%} of steps "
            f"vs required {cfg['min_fraction']:.0%}"))
    return checks


def _load_matrix(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _run_decompose(cfg, out_dir):
    for key in ("residual_csv", "xtest_csv"):
        if not os.path.exists(cfg[key]):
            raise ConfigError([f"/{key}: file not found: {cfg[key]}"])
    residual = _load_matrix(cfg["residual_csv"]).ravel()
    X_test = _load_matrix(cfg["xtest_csv"])
    energy_in, energy_out = residual_subspace_decomposition(residual, X_test)
    total = energy_in + energy_out
    _write_csv(os.path.join(out_dir, "decomposition.csv"),
               ["energy_in_span", "energy_in_complement", "total",
                "fraction_in_span"],
               [(energy_in, energy_out, total,
                 energy_in / total if total > 0 else 0.0)])
    return []


_RUNNERS = {
    "moments": _run_moments,
    "spectral-decay": _run_spectral_decay,
    "agreement": _run_agreement,
    "discrepancy-sweep": _run_discrepancy_sweep,
    "cnn-ntk": _run_cnn_ntk,
    "concentration": _run_concentration,
    "norm-ablation": _run_norm_ablation,
    "decompose": _run_decompose,
}


# -------------------------------------------------------------------- parsing

def _add_flag(parser: argparse.ArgumentParser, key: str) -> None:
    flag = "--" + key.replace("_", "-")
    if key in _BOOL_KEYS:
        parser.add_argument(flag, action="store_const", const=True,
                            default=None, dest=key)
    else:
        # Everything arrives as a string; _coerce applies the real type so
        # flag values and JSON values take the same path.
        parser.add_argument(flag, default=None, dest=key, metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlylin",
        description="Two-layer network vs. early-time linear model experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", default=None, metavar="PATH",
                         help="JSON config file with flat keys; flags override")
        sub.add_argument("--out", default=None, metavar="DIR",
                         help="output directory (default runs/<subcommand>)")
        sub.add_argument("-v", "--verbose", action="store_true")
        for key in DEFAULTS[name]:
            _add_flag(sub, key)
    return parser


def _merged_raw_config(args: argparse.Namespace) -> tuple[dict, dict | None]:
    """Config-file values overlaid with explicitly given flags."""
    raw_file = None
    merged = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw_file = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config file {args.config}: {exc}"])
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {args.config} is not valid JSON: {exc}"])
        if not isinstance(raw_file, dict):
            raise ConfigError([f"config file {args.config} must hold a JSON object"])
        merged.update(raw_file)
    for key in DEFAULTS[args.subcommand]:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    return merged, raw_file


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        raw, raw_file = _merged_raw_config(args)
        cfg, warnings = validate_config(args.subcommand, raw)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2

    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)

    out_dir = args.out if args.out is not None else os.path.join(
        "runs", args.subcommand)
    os.makedirs(out_dir, exist_ok=True)
    _write_manifest(out_dir, args.subcommand, cfg, raw_file, warnings)

    try:
        checks = _RUNNERS[args.subcommand](cfg, out_dir)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2

    failed = [c for c in checks if not c.ok]
    for check in checks:
        print(check.line())
    return 1 if failed else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
