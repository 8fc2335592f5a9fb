"""Command line front end.

    inattention gamma    --lambda-tilde 1 --rho 1 --sigma-pi2 1
    inattention estimate --simulate panel.ini --estimator gmm --window 40 --out results
    inattention irf      --gamma 0.3 --shock natural-rate --size-sd 3 --sign - --out results
    inattention ramsey   --gamma-list 0.05,0.1,0.2,0.3 --elb on --out results
    inattention report   --in results

Rates are quarterly percent inside the library and annualized (x4) only
when written, in columns carrying an ``_annualized`` suffix.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import CSV_SCHEMA_VERSION, __version__
from .attention import BeliefParams, optimal_attention, optimal_attention_grid
from .estimators import ESTIMATES_COLUMNS, EstimationError, estimates_rows, rolling_attention
from .nkmodel import (BASELINE_RULE, IRF_COLUMNS, SIMPLE_RULE, ConvergenceError, Expectations,
                      ModelParams, Shock, TaylorRule, elb_spell_stats, irf_rows,
                      perfect_foresight_irf)
from .panelsim import PanelConfig, PanelFormatError, load_panel_csv, simulate_panel
from .ramsey import (CARRY_EULER, CARRY_PHILLIPS, ERGODIC_COLUMNS, RAMSEY_PATH_COLUMNS, GridSpec,
                     RamseyError, ergodic_stats, ramsey_irf, ramsey_path_rows, solve_policy)

log = logging.getLogger("inattention")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

SUMMARY_COLUMNS = ("gamma", "elb_on", "converged", "iterations", "final_change",
                   "node_residual_max", "grid_expansions", "coverage_clip_fraction")


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

# section -> (target, allowed keys); targets are filled from dataclass defaults
_SECTIONS = {
    "model": ("model", ("beta", "kappa", "phi", "chi", "rho_r", "sigma_r", "rho_u", "sigma_u",
                        "ibar", "inertia")),
    "taylor": ("taylor", ("rho_i", "phi_pi", "phi_y")),
    "beliefs": ("beliefs", ("rho_belief", "belief_mean", "gamma_firms", "gamma_households")),
    "shocks": ("model", ("rho_r", "sigma_r", "rho_u", "sigma_u")),
    "grid": ("grid", ("n_knots", "n_quad", "shock_sds", "belief_sds", "zeta_power", "bc",
                      "extrapolation", "tol", "carry")),
    "estimation": ("estimation", ("estimator", "window", "step")),
    "panel": ("panel", ("true_gamma", "rho", "c", "sigma_nu", "c_sd", "noise_scale_sd",
                        "report_sd", "noise_mode", "common_shock_sd", "N", "T", "seed",
                        "drop_initial")),
}


@dataclass
class RunConfig:
    """Everything one command needs: parsed sections plus command-line flags."""
    command: str
    config_path: Path | None = None
    seed: int = 0
    out: Path = Path(".")
    model: dict = field(default_factory=dict)
    taylor: dict = field(default_factory=dict)
    beliefs: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    estimation: dict = field(default_factory=dict)
    panel: dict = field(default_factory=dict)

    def model_params(self) -> ModelParams:
        p = ModelParams(**{k: _coerce(ModelParams, k, v) for k, v in self.model.items()})
        if self.taylor:
            rule = TaylorRule(**{k: float(v) for k, v in self.taylor.items()})
            p = replace(p, taylor=rule)
        for k in ("rho_belief", "belief_mean"):
            if k in self.beliefs:
                p = replace(p, **{k: float(self.beliefs[k])})
        return p

    def grid_spec(self) -> GridSpec:
        kw = {k: _coerce(GridSpec, k, v) for k, v in self.grid.items() if k not in ("tol", "carry")}
        return GridSpec(**kw)

    def panel_config(self) -> PanelConfig:
        return PanelConfig(**{k: _coerce(PanelConfig, k, v) for k, v in self.panel.items()})


def _coerce(cls, key, value):
    """Convert an INI string to the type of the dataclass field default."""
    if not isinstance(value, str):
        return value
    default = {f.name: f.default for f in fields(cls)}[key]
    try:
        if isinstance(default, bool):
            return value.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple) or default is None:
            parts = [float(x) for x in value.replace(",", " ").split()]
            return tuple(parts) if len(parts) > 1 else parts[0]
        if key == "n_knots":
            parts = [int(x) for x in value.replace(",", " ").split()]
            return tuple(parts) if len(parts) > 1 else parts[0]
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return value


def load_config(path) -> dict:
    """Read an INI file into ``{target: {key: str}}``, rejecting unknown
    sections and keys by name."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    out: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        target, allowed = _SECTIONS[section]
        for key, value in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            out.setdefault(target, {})[key] = value
    return out


def build_run_config(args) -> RunConfig:
    cfg = RunConfig(command=args.command, seed=args.seed, out=Path(args.out))
    if args.config is not None:
        cfg.config_path = Path(args.config)
        for target, values in load_config(args.config).items():
            getattr(cfg, target).update(values)
    # validate eagerly so that a bad value is a configuration error
    try:
        cfg.model_params()
        cfg.grid_spec()
        cfg.panel_config()
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None
    return cfg


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _parse_gamma_list(text: str) -> list:
    try:
        gammas = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --gamma-list {text!r}") from None
    if not gammas or any(not 0.0 <= g <= 1.0 for g in gammas):
        raise ConfigError("--gamma-list needs attention values in [0, 1]")
    return gammas


def _positive(kind):
    def check(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return check


def _non_negative(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gamma(args, cfg: RunConfig) -> int:
    params = BeliefParams(rho=args.rho, lambda_tilde=args.lambda_tilde)
    g = optimal_attention(params, args.sigma_pi2)
    check = optimal_attention_grid(params, args.sigma_pi2)
    print(f"{g:.12g}")
    print(f"grid-search argmax {check:.3f} (|difference| {abs(g - check):.1e})", file=sys.stderr)
    return EXIT_OK


_ESTIMATORS = {"ols": "pooled_ols", "gmm": "system_gmm", "consensus": "consensus_ols",
               "timefe": "time_fe"}


def cmd_estimate(args, cfg: RunConfig) -> int:
    if args.simulate is not None:
        for target, values in load_config(args.simulate).items():
            getattr(cfg, target).update(values)
        pcfg = cfg.panel_config()
        if "seed" not in cfg.panel:
            pcfg = replace(pcfg, seed=cfg.seed)
        panel = simulate_panel(pcfg)
    else:
        panel = load_panel_csv(args.panel)
    name = args.estimator or cfg.estimation.get("estimator", "ols")
    if name not in _ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}")
    window = args.window if args.window is not None else int(cfg.estimation.get("window", 0))
    step = int(cfg.estimation.get("step", 1))
    periods = np.unique(panel.t)
    length = window if window > 0 else len(periods)
    path = rolling_attention(panel, length, step=step, estimator=_ESTIMATORS[name])
    rows = estimates_rows(path)
    out = write_csv(cfg.out / "estimates.csv", ESTIMATES_COLUMNS, rows)
    print(f"{len(rows)} window(s) -> {out}")
    if len(rows) == 1:
        w = path.windows[0]
        print(f"gamma_hat {w.gamma_hat:.4f} (se {w.se_gamma:.4f}), rho_hat {w.result.rho_hat:.4f}")
    return EXIT_OK


def cmd_irf(args, cfg: RunConfig) -> int:
    p = cfg.model_params()
    if args.taylor == "simple":
        p = replace(p, taylor=SIMPLE_RULE)
    elif args.taylor == "baseline" and not cfg.taylor:
        p = replace(p, taylor=BASELINE_RULE)
    if args.rho_belief is not None:
        p = replace(p, rho_belief=args.rho_belief)
    if args.fire:
        expectations = Expectations.fire()
        label = "fire"
    elif args.split_expectations is not None:
        gf, gh = args.split_expectations
        expectations = Expectations(gf, gh)
        label = f"firms{gf:g}_households{gh:g}"
    else:
        g = args.gamma if args.gamma is not None else float(cfg.beliefs.get("gamma_firms", 0.3))
        expectations = Expectations.limited(g)
        label = f"gamma{g:g}"
    shock = Shock(kind=args.shock.replace("-", "_"), size_sd=args.size_sd,
                  sign=-1 if args.sign == "-" else 1)
    path = perfect_foresight_irf(p, expectations, shock, horizon=args.horizon)
    name = args.name or f"irf_{label}_{args.shock}"
    if not name.endswith(".csv"):
        name += ".csv"
    out = write_csv(cfg.out / name, IRF_COLUMNS, irf_rows(path))
    spells = elb_spell_stats(path)
    first = spells["spells"][0] if spells["spells"] else 0
    print(f"{label}: ELB spell {first} quarter(s), inflation trough "
          f"{4 * path.pi.min():.3f} (annualized) -> {out}")
    return EXIT_OK


def cmd_ramsey(args, cfg: RunConfig) -> int:
    p = cfg.model_params()
    gammas = _parse_gamma_list(args.gamma_list)
    spec = cfg.grid_spec()
    if args.grid is not None:
        spec = replace(spec, n_knots=args.grid)
    if args.quad is not None:
        spec = replace(spec, n_quad=args.quad)
    tol = args.tol if args.tol is not None else float(cfg.grid.get("tol", 1e-7))
    if not tol > 0:
        raise ConfigError("--tol must be positive")
    carry = args.carry or cfg.grid.get("carry", CARRY_EULER)
    if carry not in (CARRY_EULER, CARRY_PHILLIPS):
        raise ConfigError(f"unknown carry rule {carry!r}")
    elb_on = args.elb == "on"
    ergodic, summary = [], []
    failed = False
    warm = None
    # neighbouring attention levels have similar fields, so each solve
    # starts from the previous one
    for g in sorted(gammas, reverse=True):
        t0 = time.perf_counter()
        sol = solve_policy(p, g, spec, tol=tol, elb_on=elb_on, carry=carry, warm_start=warm)
        stats = ergodic_stats(sol, T=args.sim_T, seed=args.seed)
        elapsed = time.perf_counter() - t0
        summary.append((g, int(elb_on), int(sol.converged), len(sol.history), sol.change,
                        sol.policy["node_residual_max"], sol.expansions,
                        sol.policy.get("coverage_clip_fraction", float("nan"))))
        ergodic.append(stats.row())
        path = ramsey_irf(sol, "natural_rate", 3.0, -1, horizon=args.horizon)
        write_csv(cfg.out / f"ramsey_path_gamma{g:g}_elb{args.elb}.csv", RAMSEY_PATH_COLUMNS,
                  ramsey_path_rows(path))
        print(f"gamma {g:g}: converged {sol.converged} in {len(sol.history)} steps, "
              f"mean pi {stats.mean_pi:.3f}, std pi {stats.std_pi:.3f}, "
              f"ELB frequency {stats.elb_frequency:.3f}, loss/period {-stats.welfare:.5f} "
              f"({elapsed:.0f} s)")
        failed |= not sol.converged
        warm = sol if sol.grid_spec == spec else None
    order = np.argsort([row[0] for row in ergodic], kind="stable")
    write_csv(cfg.out / "ergodic.csv", ERGODIC_COLUMNS, [ergodic[k] for k in order])
    write_csv(cfg.out / "ramsey_summary.csv", SUMMARY_COLUMNS, [summary[k] for k in order])
    if failed:
        print("at least one solve did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# schema name -> (header, key column)
SCHEMAS = {
    "ergodic": (ERGODIC_COLUMNS, "gamma"),
    "irf": (IRF_COLUMNS, "t"),
    "ramsey_path": (RAMSEY_PATH_COLUMNS, "t"),
    "estimates": (ESTIMATES_COLUMNS, "window_start"),
    "ramsey_summary": (SUMMARY_COLUMNS, "gamma"),
}
LONG_COLUMNS = ("source", "row", "key", "variable", "value")


def _identify(path: Path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        rows = [r for r in reader if r]
    for name, (cols, _) in SCHEMAS.items():
        if header == cols:
            return name, rows
    raise SchemaError(f"{path}: header matches no known schema: {','.join(header)}")


def cmd_report(args, cfg: RunConfig) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise ConfigError(f"--in must be a directory: {src}")
    out = Path(args.out) if args.out != "." else src
    files = sorted(f for f in src.glob("*.csv") if not f.name.startswith("report_"))
    if not files:
        print(f"warning: no CSV files in {src}", file=sys.stderr)
        return EXIT_OK
    tables: dict = {}
    for f in files:
        name, rows = _identify(f)
        tables.setdefault(name, []).append((f.stem, rows))
    for name, items in sorted(tables.items()):
        cols, key = SCHEMAS[name]
        k = cols.index(key)
        long = []
        for stem, rows in items:
            for n, row in enumerate(rows):
                for c, col in enumerate(cols):
                    if c != k:
                        long.append((stem, n, row[k], col, row[c]))
        target = write_csv(out / f"report_{name}.csv", LONG_COLUMNS, long)
        print(f"{name}: {len(items)} file(s) -> {target}")
    if not args.no_figures:
        for f in render_figures(tables, out):
            print(f"figure -> {f}")
    return EXIT_OK


def render_figures(tables: dict, out: Path) -> list:
    """Line charts for every table kind found; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    def col(rows, cols, name):
        return np.array([float(r[cols.index(name)]) for r in rows])

    for name in ("irf", "ramsey_path"):
        if name not in tables:
            continue
        cols = SCHEMAS[name][0]
        panels = ("i_annualized", "pi_annualized", "pi_e_annualized", "ygap")
        fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
        for stem, rows in tables[name]:
            t = col(rows, cols, "t")
            for ax, var in zip(axes.ravel(), panels):
                ax.plot(t, col(rows, cols, var), label=stem)
        for ax, var in zip(axes.ravel(), panels):
            ax.set_title(var)
            ax.axhline(0.0, color="0.6", lw=0.6)
        axes[1, 0].set_xlabel("quarter")
        axes[1, 1].set_xlabel("quarter")
        axes[0, 0].legend(fontsize=7)
        fig.tight_layout()
        target = out / f"report_{name}.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    if "ergodic" in tables:
        cols = SCHEMAS["ergodic"][0]
        rows = [r for _, rs in tables["ergodic"] for r in rs]
        panels = ("mean_pi_annualized", "std_pi_annualized", "elb_frequency", "welfare_per_period")
        fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
        elb = col(rows, cols, "elb_on")
        g = col(rows, cols, "gamma")
        for flag, style in ((1, "o-"), (0, "s--")):
            sel = elb == flag
            if not sel.any():
                continue
            order = np.argsort(g[sel])
            for ax, var in zip(axes.ravel(), panels):
                ax.plot(g[sel][order], col(rows, cols, var)[sel][order], style,
                        label="with bound" if flag else "without bound")
        for ax, var in zip(axes.ravel(), panels):
            ax.set_title(var)
        axes[1, 0].set_xlabel("attention")
        axes[1, 1].set_xlabel("attention")
        axes[0, 0].legend(fontsize=7)
        fig.tight_layout()
        target = out / "report_ergodic.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)

    if "estimates" in tables:
        cols = SCHEMAS["estimates"][0]
        fig, ax = plt.subplots(figsize=(7, 4))
        for stem, rows in tables["estimates"]:
            ax.plot(col(rows, cols, "window_start"), col(rows, cols, "gamma_hat"), label=stem)
        ax.set_xlabel("window start")
        ax.set_ylabel("estimated attention")
        ax.legend(fontsize=7)
        fig.tight_layout()
        target = out / "report_estimates.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def _pair(text):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected FIRMS,HOUSEHOLDS") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inattention",
                                     description="Limited attention to inflation and monetary policy.")
    parser.add_argument("--version", action="version",
                        version=f"inattention {__version__} (csv schema {CSV_SCHEMA_VERSION})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gamma", parents=[common], help="optimal attention")
    g.add_argument("--lambda-tilde", type=_non_negative, required=True)
    g.add_argument("--rho", type=float, required=True)
    g.add_argument("--sigma-pi2", type=_non_negative, required=True)

    e = sub.add_parser("estimate", parents=[common], help="estimate attention from a panel")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--panel", help="panel CSV (forecaster_id,t,expectation,realized)")
    src.add_argument("--simulate", help="INI file with a [panel] section describing the DGP")
    e.add_argument("--estimator", choices=("ols", "gmm", "consensus", "timefe"))
    e.add_argument("--window", type=_positive(int), help="rolling window length in periods")

    i = sub.add_parser("irf", parents=[common], help="perfect-foresight impulse response")
    who = i.add_mutually_exclusive_group()
    who.add_argument("--gamma", type=float)
    who.add_argument("--fire", action="store_true", help="full-information rational expectations")
    who.add_argument("--split-expectations", type=_pair, metavar="FIRMS,HOUSEHOLDS")
    i.add_argument("--shock", choices=("natural-rate", "cost-push"), default="natural-rate")
    i.add_argument("--size-sd", type=_non_negative, default=3.0)
    i.add_argument("--sign", choices=("+", "-"), default="-")
    i.add_argument("--horizon", type=_positive(int), default=40)
    i.add_argument("--taylor", choices=("baseline", "simple"), default="baseline")
    i.add_argument("--rho-belief", type=float)
    i.add_argument("--name", help="output file name (default derived from the run)")

    r = sub.add_parser("ramsey", parents=[common], help="optimal commitment policy")
    r.add_argument("--gamma-list", default="0.05,0.1,0.2,0.3")
    r.add_argument("--elb", choices=("on", "off"), default="on")
    r.add_argument("--grid", type=_positive(int), help="knots per dimension")
    r.add_argument("--quad", type=_positive(int), help="quadrature nodes per shock")
    r.add_argument("--tol", type=float)
    r.add_argument("--sim-T", type=_positive(int), default=500000, dest="sim_T")
    r.add_argument("--horizon", type=_positive(int), default=40)
    r.add_argument("--carry", choices=(CARRY_EULER, CARRY_PHILLIPS))

    rep = sub.add_parser("report", parents=[common], help="tidy CSVs and figures from a directory")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--no-figures", action="store_true", help="skip the matplotlib figures")
    return parser


COMMANDS = {"gamma": cmd_gamma, "estimate": cmd_estimate, "irf": cmd_irf,
            "ramsey": cmd_ramsey, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_run_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, SchemaError, PanelFormatError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, RamseyError, EstimationError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
