"""Command-line front end: single points, closed-form sweeps, oracle and DME runs.

Every option can come from a JSON config (``--config``) using snake_case
keys; command-line flags use the same names in kebab-case and win over the
file. Exit status is 0 on success, 2 for configuration errors and 3 when a
numerical check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .closedform import SystemParams, evolved_state, fidelity_max, gram_matrix, ortho_coefficients
from .measures import MeasureError, measure_all
from .oracle import CUTOFF_CEILING, TruncationConfig, TruncationError, oracle_state

log = logging.getLogger("squeezent")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3
THREADS_ENV = "SQUEEZENT_THREADS"

SWEEP_COLUMNS = [
    "phi_xi", "r", "g", "lambda", "Omega", "beta", "tau_sq", "chi_sq", "C_qc",
    "N_qc", "N_qv", "N_cv", "Ca_qc", "F_qcv", "rank",
]
FIG6_COLUMNS = ["panel", "kappa", "gamma", "C_qc_final", "tau_sq_final", "ladder_convention", "N_f", "steps"]
DME_COLUMNS = ["t", "C_qc", "tau_sq", "trace", "min_eig"]
AXES = ("phi_xi", "r", "g", "lambda", "omega")

G_DEFAULT = 1 / math.sqrt(2)
LAM_DEFAULT = 1 / math.sqrt(72)
GAMMA_D_DEFAULT = 1e-2


class ConfigError(ValueError):
    pass


# option name -> (type, default, help); one table per command on top of the shared ones
_POINT = {
    "g": (float, G_DEFAULT, "cavity-resonator coupling"),
    "lambda": (float, LAM_DEFAULT, "qubit-resonator coupling"),
    "omega": (float, 3 * math.pi, "evolution phase (resonator frequency x time)"),
    "r": (float, 0.0, "squeezing amplitude"),
    "phi_xi": (float, 0.0, "squeezing phase"),
    "beta": (float, 0.0, "coherent amplitude (real)"),
}
_DISS = {
    "kappa": (float, 0.2, "cavity decay rate"),
    "gamma": (float, 1e-2, "resonator decay rate"),
    "Gamma": (float, 1e-3, "qubit relaxation rate"),
    "gamma_d": (float, None, "dressed qubit dephasing rate (default 0.01 unless Gamma_d is set)"),
    "Gamma_d": (float, None, "bare qubit dephasing (replaces gamma_d)"),
    "n_v": (float, 50.0, "bath phonon occupancy"),
    "n_f": (int, 96, "resonator Fock cutoff"),
    "dressed": (bool, True, "use dressed dissipators (false gives the standard master equation)"),
    "steps": (int, None, "initial RK4 step count (default from the generator norm)"),
    "leak_tol": (float, None, "bound on initial-state truncation loss"),
    "tail_tol": (float, None, "bound on final population of the top 8 Fock levels"),
    "n_samples": (int, 8, "number of recorded sample intervals"),
}
COMMANDS = {
    "measure": {**_POINT},
    "sweep": {
        **_POINT,
        "axes": (dict, None, "sweep axes"),
        "qutrit_lock": (bool, False, "tie g = 2 lambda at every grid point"),
        "output": (str, None, "CSV path (default stdout)"),
    },
    "oracle-check": {
        **_POINT,
        "seed": (int, 20240611, "sampling seed"),
        "n_points": (int, 50, "number of random points"),
        "sample": (str, "random", "'random' or 'params' (check only the given point)"),
        "r_max": (float, 2.0, "largest sampled r (at most 3)"),
        "beta_max": (float, 2.0, "largest sampled |beta|"),
        "omega_max": (float, 6 * math.pi, "largest sampled Omega"),
        "coupling_max": (float, 1.0, "largest sampled g and lambda"),
        "n_f": (int, 64, "starting Fock cutoff"),
        "auto_grow": (bool, True, "grow the cutoff when it leaks"),
        "leak_tol": (float, 1e-10, "truncation leakage bound"),
        "overlap_tol": (float, 1e-7, "max overlap deviation"),
        "measure_tol": (float, 5e-6, "max measure deviation"),
    },
    "dme": {
        **_POINT,
        **_DISS,
        "ladder_convention": (str, "conventional", "'conventional' or 'paper' qubit ladder normalisation"),
        "output": (str, None, "CSV path (default stdout)"),
    },
    "fig6": {
        **_POINT,
        **_DISS,
        "r": (float, 2.0, "squeezing amplitude"),
        "kappas": (list, [round(0.02 * k, 12) for k in range(1, 11)], "cavity decay grid"),
        "gammas": (list, [1e-5, 1e-4, 1e-3, 1e-2], "resonator decay grid"),
        "panels": (list, ["qc", "qcv"], "panels to emit"),
        "ladder_conventions": (list, ["conventional", "paper"], "qubit ladder normalisations to run"),
        "output": (str, None, "CSV path (default stdout)"),
    },
}


def _kebab(name: str) -> str:
    return "--" + name.replace("_", "-")


def _parse_number(text) -> float:
    """Float from a number or a string such as ``'3pi'``, ``'-0.5pi'`` or ``'pi'``."""
    if isinstance(text, bool):
        raise ConfigError(f"expected a number, got {text!r}")
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip()
    m = re.fullmatch(r"([-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+)?)\s*\*?\s*pi", s)
    if m:
        k = m.group(1)
        coef = 1.0 if k in ("", "+") else -1.0 if k == "-" else float(k)
        return coef * math.pi
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as a number") from None


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot read {text!r} as a boolean")


def _parse_list(text) -> list:
    if isinstance(text, list):
        return text
    return [t for t in str(text).split(",") if t.strip()]


def parse_axis(spec) -> list[float]:
    """Axis values from a list, ``{"start", "stop", "num"}`` or ``'a:b:n'`` / ``'v1,v2'``."""
    if isinstance(spec, dict):
        missing = {"start", "stop", "num"} - set(spec)
        if missing:
            raise ConfigError(f"axis range needs keys start, stop, num (missing {sorted(missing)})")
        start, stop, num = _parse_number(spec["start"]), _parse_number(spec["stop"]), int(spec["num"])
        values = np.linspace(start, stop, num).tolist() if num > 1 else [start]
    elif isinstance(spec, str) and ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"axis range must be start:stop:num, got {spec!r}")
        return parse_axis({"start": parts[0], "stop": parts[1], "num": parts[2]})
    elif isinstance(spec, (int, float)):
        values = [float(spec)]
    else:
        values = [_parse_number(v) for v in _parse_list(spec)]
    if not values:
        raise ConfigError("axis must not be empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"axis values must be strictly increasing, got {values}")
    return values


def _coerce(name: str, kind, value):
    if value is None:
        return None
    try:
        if kind is float:
            return _parse_number(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
            return int(value)
        if kind is bool:
            return _parse_bool(value)
        if kind is list:
            return _parse_list(value)
        if kind is dict:
            if not isinstance(value, dict):
                raise ConfigError(f"{name}: expected an object, got {value!r}")
            return value
        return str(value)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: invalid value {value!r}") from None


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def resolve(command: str, file_cfg: dict, flags: dict) -> dict:
    """Merge defaults, file values and flags (in that order of precedence)."""
    table = COMMANDS[command]
    unknown = sorted(set(file_cfg) - set(table) - {"command"})
    if unknown:
        raise ConfigError(f"unknown config field(s) for {command}: {', '.join(unknown)}")
    if "command" in file_cfg and file_cfg["command"] != command:
        raise ConfigError(f"config is for command {file_cfg['command']!r}, not {command!r}")
    cfg = {}
    for name, (kind, default, _) in table.items():
        value = default
        if name in file_cfg:
            value = file_cfg[name]
        if flags.get(name) is not None:
            value = flags[name]
        cfg[name] = _coerce(name, kind, value)
    return cfg


def _params(cfg: dict, **over) -> SystemParams:
    vals = {k: cfg[k] for k in ("g", "lambda", "omega", "r", "phi_xi", "beta")}
    vals.update(over)
    try:
        return SystemParams(g=vals["g"], lam=vals["lambda"], omega=vals["omega"],
                            r=vals["r"], phi=vals["phi_xi"], beta=vals["beta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def _pool_map(fn, items: list):
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(rows: list[dict], columns: list[str], path: str | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


# -- measure / sweep ---------------------------------------------------------

def point_report(p: SystemParams) -> dict:
    co = ortho_coefficients(p)
    m = measure_all(evolved_state(p, co))
    out = {"phi_xi": p.phi, "r": p.r, "g": p.g, "lambda": p.lam, "Omega": p.omega, "beta": p.beta}
    out.update(m.as_dict())
    out["F_qcv"] = fidelity_max(p, co)
    out["rank"] = co.rank
    return out


def cmd_measure(cfg: dict) -> int:
    rep = point_report(_params(cfg))
    json.dump(rep, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def sweep_grid(cfg: dict) -> list[SystemParams]:
    axes_in = cfg["axes"]
    if axes_in is None:
        axes_in = {"phi_xi": {"start": 0.0, "stop": "4pi", "num": 401}, "r": [0.0, 0.5, 1.1, 2.2]}
    bad = sorted(set(axes_in) - set(AXES))
    if bad:
        raise ConfigError(f"unknown sweep axis {', '.join(bad)}; choose from {', '.join(AXES)}")
    if cfg["qutrit_lock"] and "g" in axes_in:
        raise ConfigError("a g axis conflicts with qutrit_lock (g is set to 2 lambda)")
    names = [a for a in AXES if a in axes_in]
    values = [parse_axis(axes_in[a]) for a in names]
    grid = []
    for combo in itertools.product(*values):
        over = dict(zip(names, combo))
        if cfg["qutrit_lock"]:
            over["g"] = 2 * over.get("lambda", cfg["lambda"])
        grid.append(_params(cfg, **over))
    return grid


def cmd_sweep(cfg: dict) -> int:
    rows = _pool_map(point_report, sweep_grid(cfg))
    write_csv(rows, SWEEP_COLUMNS, cfg["output"])
    return EXIT_OK


# -- oracle-check ------------------------------------------------------------

def oracle_points(cfg: dict) -> list[SystemParams]:
    if cfg["r_max"] > 3:
        raise ConfigError(f"r_max must be at most 3, got {cfg['r_max']}")
    if cfg["sample"] == "params":
        p = _params(cfg)
        if p.r > 3:
            raise ConfigError(f"r must be at most 3 for the oracle check, got {p.r}")
        return [p]
    if cfg["sample"] != "random":
        raise ConfigError(f"sample must be 'random' or 'params', got {cfg['sample']!r}")
    rng = np.random.default_rng(cfg["seed"])
    pts = []
    for _ in range(cfg["n_points"]):
        g, lam = rng.uniform(0, cfg["coupling_max"], 2)
        pts.append(SystemParams(
            g=float(g), lam=float(lam),
            omega=float(rng.uniform(0, cfg["omega_max"])),
            r=float(rng.uniform(0, cfg["r_max"])),
            phi=float(rng.uniform(0, 2 * math.pi)),
            beta=float(rng.uniform(-cfg["beta_max"], cfg["beta_max"])),
        ))
    return pts


def oracle_deviation(p: SystemParams, tcfg: TruncationConfig) -> dict:
    """Overlap and measure deviations between the Fock oracle and the closed forms."""
    res = oracle_state(p, tcfg)
    gram = gram_matrix(p)
    iu = np.triu_indices(4)
    ov = float(np.max(np.abs(res.gram()[iu] - gram[iu])))
    closed = measure_all(evolved_state(p)).as_dict()
    fock = res.measures().as_dict()
    md = max(abs(closed[k] - fock[k]) for k in closed)
    return {"overlap_dev": ov, "measure_dev": float(md), "cutoff": res.cutoff, "leakage": res.leakage}


def cmd_oracle_check(cfg: dict) -> int:
    pts = oracle_points(cfg)
    try:
        tcfg = TruncationConfig(N_f=cfg["n_f"], leak_tol=cfg["leak_tol"], auto_grow=cfg["auto_grow"],
                                ceiling=CUTOFF_CEILING)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    results, failures = [], []
    for i, p in enumerate(pts):
        try:
            d = oracle_deviation(p, tcfg)
        except TruncationError as exc:
            failures.append({"point": i, "error": str(exc), "leakage": exc.leakage, "cutoff": exc.cutoff})
            continue
        results.append(d)
        if d["overlap_dev"] > cfg["overlap_tol"] or d["measure_dev"] > cfg["measure_tol"]:
            failures.append({"point": i, **d})
    report = {
        "status": "FAIL" if failures else "PASS",
        "n_points": len(pts),
        "max_overlap_dev": max((d["overlap_dev"] for d in results), default=None),
        "max_measure_dev": max((d["measure_dev"] for d in results), default=None),
        "cutoffs": sorted({d["cutoff"] for d in results}),
        "max_leakage": max((d["leakage"] for d in results), default=None),
        "thresholds": {"overlap": cfg["overlap_tol"], "measure": cfg["measure_tol"]},
        "failures": failures,
    }
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_CHECK if failures else EXIT_OK


# -- dme / fig6 --------------------------------------------------------------

def _dissipation(cfg: dict, **over):
    from .dme import DissipationParams

    vals = {k: cfg[k] for k in ("kappa", "gamma", "Gamma", "gamma_d", "Gamma_d", "n_v")}
    vals.update(over)
    if vals["Gamma_d"] is None and vals["gamma_d"] is None:
        vals["gamma_d"] = GAMMA_D_DEFAULT
    try:
        return DissipationParams(**vals)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _simulate(p, d, cfg, convention):
    from .dme import simulate

    return simulate(
        p, d, N_f=cfg["n_f"], ladder_convention=convention, dressed=cfg["dressed"], steps=cfg["steps"],
        leak_tol=cfg["leak_tol"], tail_tol=cfg["tail_tol"], n_samples=cfg["n_samples"],
    )


def cmd_dme(cfg: dict) -> int:
    from .dme import LADDER_CONVENTIONS

    if cfg["ladder_convention"] not in LADDER_CONVENTIONS:
        raise ConfigError(f"ladder_convention must be one of {LADDER_CONVENTIONS}")
    s = _simulate(_params(cfg), _dissipation(cfg), cfg, cfg["ladder_convention"])
    rows = [
        {"t": t, "C_qc": c, "tau_sq": tq, "trace": tr, "min_eig": me}
        for t, c, tq, tr, me in zip(s.times, s.C_qc, s.tau_sq, s.trace, s.min_eig)
    ]
    write_csv(rows, DME_COLUMNS, cfg["output"])
    log.info("N_f=%d steps=%d final %s", s.N_f, s.steps, s.final)
    return EXIT_OK


FIG6_PHI = {"qc": math.pi, "qcv": 2 * math.pi}


def _fig6_task(task):
    cfg, panel, convention, kappa, gamma = task
    p = _params(cfg, phi_xi=FIG6_PHI[panel])
    s = _simulate(p, _dissipation(cfg, kappa=kappa, gamma=gamma), cfg, convention)
    return {
        "panel": panel, "kappa": kappa, "gamma": gamma,
        "C_qc_final": s.final["C_qc"], "tau_sq_final": s.final["tau_sq"],
        "ladder_convention": convention, "N_f": s.N_f, "steps": s.steps,
    }


def fig6_tasks(cfg: dict) -> list[tuple]:
    from .dme import LADDER_CONVENTIONS

    kappas = parse_axis(cfg["kappas"])
    gammas = parse_axis(cfg["gammas"])
    panels = cfg["panels"]
    for pn in panels:
        if pn not in FIG6_PHI:
            raise ConfigError(f"panel must be 'qc' or 'qcv', got {pn!r}")
    for lc in cfg["ladder_conventions"]:
        if lc not in LADDER_CONVENTIONS:
            raise ConfigError(f"ladder convention must be one of {LADDER_CONVENTIONS}, got {lc!r}")
    _params(cfg)
    _dissipation(cfg, kappa=kappas[0], gamma=gammas[0])
    return [
        (cfg, pn, lc, k, gm)
        for pn in panels for lc in cfg["ladder_conventions"] for gm in gammas for k in kappas
    ]


def cmd_fig6(cfg: dict) -> int:
    rows = _pool_map(_fig6_task, fig6_tasks(cfg))
    order = {pn: i for i, pn in enumerate(FIG6_PHI)}
    rows.sort(key=lambda r: (order[r["panel"]], r["ladder_convention"], r["gamma"], r["kappa"]))
    write_csv(rows, FIG6_COLUMNS, cfg["output"])
    return EXIT_OK


HANDLERS = {
    "measure": cmd_measure,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
    "dme": cmd_dme,
    "fig6": cmd_fig6,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="squeezent", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, table in COMMANDS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="JSON config file")
        for name, (kind, default, help_) in table.items():
            if name == "axes":
                sp.add_argument("--axis", action="append", metavar="NAME=SPEC",
                                help="sweep axis, SPEC is start:stop:num or v1,v2,... (repeatable)")
                continue
            shown = "" if default is None else f" (default {default})"
            sp.add_argument(_kebab(name), dest=name, default=None, metavar=kind.__name__.upper(),
                            help=help_ + shown)
    return ap


def _flag_values(ns: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose", "axis")}
    if getattr(ns, "axis", None):
        axes = {}
        for item in ns.axis:
            name, sep, spec = item.partition("=")
            if not sep:
                raise ConfigError(f"--axis expects NAME=SPEC, got {item!r}")
            axes[name.strip()] = spec.strip()
        flags["axes"] = axes
    return flags


def main(argv=None) -> int:
    from .dme import ConvergenceError

    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_cfg = load_config_file(ns.config) if ns.config else {}
        cfg = resolve(ns.command, file_cfg, _flag_values(ns))
        return HANDLERS[ns.command](cfg)
    except ConfigError as exc:
        print(f"squeezent: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, TruncationError, MeasureError) as exc:
        print(f"squeezent: numerical check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
