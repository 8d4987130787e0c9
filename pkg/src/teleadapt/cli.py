"""Command-line interface: config parsing, scenario execution, CSV emission,
stability and metrics reports.

Subcommands
    simulate        run a scenario, write trajectory.csv + manifest.json
                    (optionally rendering figures next to them)
    stability       print the certificate constants and witness
    metrics-report  print the per-joint tracking indices for a trajectory

Exit codes: 0 success, 2 config error, 3 numerical divergence,
4 infeasible stability certificate.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .channel import AssumptionViolation, DelayProfile
from .controller import GainConfig, InvariantBreach
from .dynamics import ManipulatorParams
from .metrics import MetricAccumulator, accumulate
from .sim import (
    COLUMNS,
    ForceProfile,
    NumericalDivergence,
    ScenarioConfig,
    TrajectoryLog,
    Wall,
    default_config,
    run_scenario,
)
from .stability import MODE_FORCED, MODE_FREE, lmi_feasible, stability_constants, verify_witness

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INFEASIBLE = 4


class ParseError(Exception):
    """Malformed config file (syntax, unknown key, bad literal)."""


class ValidationError(Exception):
    """Config parsed but violates an invariant of the model."""


# config schema: section -> {key: parser}
def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _sinusoids(s):
    out = []
    s = s.strip()
    if not s:
        return tuple(out)
    for part in s.split(","):
        amp, _, freq = part.partition(":")
        out.append((float(amp), float(freq)))
    return tuple(out)


_SCHEMA = {
    "scenario": {
        "name": str,
        "mode": str,
        "prediction": str,
        "dt": float,
        "horizon": float,
        "metrics_eps": float,
    },
    "force": {"amplitude": float, "start": float, "stop": float, "scale": float},
    "wall": {"y": float, "stiffness": float},
    "master": {"m1": float, "m2": float, "l1": float, "l2": float, "g": float, "theta0": _floats},
    "slave": {"m1": float, "m2": float, "l1": float, "l2": float, "g": float, "theta0": _floats},
    "delays.master": {"base": float, "sinusoids": _sinusoids},
    "delays.slave": {"base": float, "sinusoids": _sinusoids},
    "gains.master": {},
    "gains.slave": {},
}
def _scalar_or_diag(s):
    vals = _floats(s)
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 5:
        return vals
    raise ValueError("gamma takes 1 value or 5 diagonal entries")


_GAIN_KEYS = {
    "k": float,
    "lam": float,
    "gamma": _scalar_or_diag,
    "delta": float,
    "alpha_gain": float,
    "kappa0": float,
    "mu0": float,
    "alpha_filter": float,
    "p0": float,
}
_SCHEMA["gains.master"] = _GAIN_KEYS
_SCHEMA["gains.slave"] = _GAIN_KEYS


def _parse_file(path) -> dict:
    """Read an INI-style config into {section: {key: parsed value}}.

    Unknown sections/keys and unparseable values raise ParseError.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"config syntax error: {exc}") from exc
    out = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ParseError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ParseError(f"unknown key {key!r} in section [{section}]")
            try:
                out[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ParseError(
                    f"bad value for {key!r} in section [{section}]: {raw!r} ({exc})"
                ) from exc
    return out


def _build_config(values: dict) -> ScenarioConfig:
    """Resolve parsed values over the scenario defaults."""
    scen = values.get("scenario", {})
    scenario = scen.get("name", "A")
    if scenario not in ("A", "B"):
        raise ValidationError(f"scenario name must be A or B, got {scenario!r}")
    cfg = default_config(scenario, scen.get("mode", "composite"))
    cfg.prediction = scen.get("prediction", cfg.prediction)
    cfg.dt = scen.get("dt", cfg.dt)
    cfg.horizon = scen.get("horizon", cfg.horizon)
    cfg.metrics_eps = scen.get("metrics_eps", cfg.metrics_eps)

    f = values.get("force", {})
    cfg.force = ForceProfile(
        amplitude=f.get("amplitude", cfg.force.amplitude),
        start=f.get("start", cfg.force.start),
        stop=f.get("stop", cfg.force.stop),
    )
    cfg.force_scale = f.get("scale", cfg.force_scale)
    w = values.get("wall", {})
    cfg.wall = Wall(y=w.get("y", cfg.wall.y), stiffness=w.get("stiffness", cfg.wall.stiffness))

    for side in ("master", "slave"):
        sec = values.get(side, {})
        base = getattr(cfg, side)
        params = ManipulatorParams(
            m1=sec.get("m1", base.m1),
            m2=sec.get("m2", base.m2),
            l1=sec.get("l1", base.l1),
            l2=sec.get("l2", base.l2),
            g=sec.get("g", base.g),
        )
        setattr(cfg, side, params)
        if "theta0" in sec:
            th0 = np.array(sec["theta0"], dtype=float)
            if th0.shape != (5,):
                raise ValidationError(f"[{side}] theta0 must have 5 components")
            if side == "master":
                cfg.theta0_m = th0
            else:
                cfg.theta0_s = th0

        dsec = values.get(f"delays.{side}", {})
        dbase = cfg.delay_m if side == "master" else cfg.delay_s
        prof = DelayProfile(
            base=dsec.get("base", dbase.base),
            sinusoids=dsec.get("sinusoids", dbase.sinusoids),
        )
        if side == "master":
            cfg.delay_m = prof
        else:
            cfg.delay_s = prof

        gsec = values.get(f"gains.{side}", {})
        gbase = cfg.gains_m if side == "master" else cfg.gains_s
        gains = GainConfig.from_scalars(
            k=gsec.get("k", float(gbase.K[0, 0])),
            lam=gsec.get("lam", gbase.lam),
            gamma=gsec.get("gamma", tuple(np.diag(gbase.Gamma))),
            delta=gsec.get("delta", gbase.delta),
            alpha_gain=gsec.get("alpha_gain", gbase.alpha_gain),
            kappa0=gsec.get("kappa0", gbase.kappa0),
            mu0=gsec.get("mu0", gbase.mu0),
            alpha_filter=gsec.get("alpha_filter", gbase.alpha_filter),
            p0=gsec.get("p0", gbase.p0),
        )
        if side == "master":
            cfg.gains_m = gains
        else:
            cfg.gains_s = gains
    return cfg


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    """Parse a config file (missing keys take the documented defaults) and
    validate the result.

    `overrides` maps dotted keys (e.g. "scenario.mode") onto raw values and
    is applied before default resolution (CLI flags use this).
    """
    values = _parse_file(path)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        values.setdefault(section, {})[key] = value
    cfg = _build_config(values)
    try:
        cfg.validate()
    except (AssumptionViolation, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    return cfg


def normalize_config(cfg: ScenarioConfig) -> str:
    """Canonical INI text for a resolved config; parsing it back yields an
    identical configuration."""
    lines = []

    def sec(name, items):
        lines.append(f"[{name}]")
        for k, v in items:
            lines.append(f"{k} = {v}")
        lines.append("")

    fl = lambda x: format(float(x), ".12g")
    sec(
        "scenario",
        [
            ("name", cfg.scenario),
            ("mode", cfg.mode),
            ("prediction", cfg.prediction),
            ("dt", fl(cfg.dt)),
            ("horizon", fl(cfg.horizon)),
            ("metrics_eps", fl(cfg.metrics_eps)),
        ],
    )
    sec(
        "force",
        [
            ("amplitude", fl(cfg.force.amplitude)),
            ("start", fl(cfg.force.start)),
            ("stop", fl(cfg.force.stop)),
            ("scale", fl(cfg.force_scale)),
        ],
    )
    sec("wall", [("y", fl(cfg.wall.y)), ("stiffness", fl(cfg.wall.stiffness))])
    for side in ("master", "slave"):
        p = getattr(cfg, side)
        th0 = cfg.theta0_m if side == "master" else cfg.theta0_s
        sec(
            side,
            [
                ("m1", fl(p.m1)),
                ("m2", fl(p.m2)),
                ("l1", fl(p.l1)),
                ("l2", fl(p.l2)),
                ("g", fl(p.g)),
                ("theta0", ", ".join(fl(v) for v in th0)),
            ],
        )
        prof = cfg.delay_m if side == "master" else cfg.delay_s
        sec(
            f"delays.{side}",
            [
                ("base", fl(prof.base)),
                ("sinusoids", ", ".join(f"{fl(a)}:{fl(w)}" for a, w in prof.sinusoids)),
            ],
        )
        g = cfg.gains_m if side == "master" else cfg.gains_s
        gdiag = np.diag(g.Gamma)
        gamma_txt = fl(gdiag[0]) if np.all(gdiag == gdiag[0]) else ", ".join(fl(v) for v in gdiag)
        sec(
            f"gains.{side}",
            [
                ("k", fl(g.K[0, 0])),
                ("lam", fl(g.lam)),
                ("gamma", gamma_txt),
                ("delta", fl(g.delta)),
                ("alpha_gain", fl(g.alpha_gain)),
                ("kappa0", fl(g.kappa0)),
                ("mu0", fl(g.mu0)),
                ("alpha_filter", fl(g.alpha_filter)),
                ("p0", fl(g.p0)),
            ],
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    """Decimal with 9 significant digits (the CSV number contract)."""
    return format(x, ".9g")


def write_trajectory_csv(path, log: TrajectoryLog):
    """One row per log record, comma separated, LF endings, UTF-8."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in log.data:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def read_trajectory_csv(path):
    """(column names, data matrix) from an emitted trajectory.csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size and data.shape[1] != len(header):
        raise ValueError("column count does not match header")
    return header, data


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config_path, out_dir, cfg: ScenarioConfig, artifacts):
    manifest = {
        "config_path": str(config_path),
        "out_dir": str(out_dir),
        "scenario": cfg.scenario,
        "mode": cfg.mode,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "config_echo": normalize_config(cfg),
        "sha256": {Path(a).name: _sha256(a) for a in artifacts},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    overrides = {}
    if args.mode:
        overrides["scenario.mode"] = args.mode
    if args.scenario:
        overrides["scenario.name"] = args.scenario
    if args.force_scale is not None:
        overrides["force.scale"] = args.force_scale
    if args.dt is not None:
        overrides["scenario.dt"] = args.dt
    if args.horizon is not None:
        overrides["scenario.horizon"] = args.horizon
    cfg = load_config(args.config, overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = run_scenario(cfg)
    traj = out_dir / "trajectory.csv"
    write_trajectory_csv(traj, log)
    artifacts = [traj]
    if args.plots:
        from . import plots

        artifacts += plots.render_run_figures(log, out_dir)
    write_manifest(out_dir / "manifest.json", args.config, out_dir, cfg, artifacts)
    idx = log.dp_index
    print(f"wrote {traj} ({log.data.shape[0]} rows)")
    print(
        f"position indices per joint: {format_float(idx[0])}, {format_float(idx[1])}; "
        f"force indices: {format_float(log.df_index[0])}, {format_float(log.df_index[1])}"
    )
    return EXIT_OK


def _cmd_stability(args) -> int:
    cfg = load_config(args.config)
    mode = MODE_FREE if args.mode == "theorem" else MODE_FORCED
    consts = stability_constants(
        cfg.master, cfg.slave, cfg.gains_m, cfg.gains_s, cfg.delay_m, cfg.delay_s
    )
    rows = [
        ("inertia bound master (rho_m^M)", consts.rho_m_M),
        ("inertia bound slave  (rho_s^M)", consts.rho_s_M),
        ("delay bound master h_m [s]", consts.h_m),
        ("delay bound slave  h_s [s]", consts.h_s),
        ("delay rate master  d_m", consts.d_m),
        ("delay rate slave   d_s", consts.d_s),
        ("gain floor master  k_m", consts.k_m),
        ("gain floor slave   k_s", consts.k_s),
        ("lambda master", consts.lam_m),
        ("lambda slave", consts.lam_s),
        ("coupling nu_m", consts.nu_m),
        ("coupling nu_s", consts.nu_s),
        ("Coriolis bound c_m (diagnostic)", consts.c_m),
        ("Coriolis bound c_s (diagnostic)", consts.c_s),
    ]
    width = max(len(r[0]) for r in rows)
    print("stability constants")
    for name, val in rows:
        print(f"  {name:<{width}}  {format_float(val)}")
    witness = lmi_feasible(consts, mode)
    print(f"certificate mode: {args.mode}")
    if witness is None:
        print("result: INFEASIBLE (no scalar witness in [1e-4, 1e4]^2)")
        return EXIT_INFEASIBLE
    print("result: feasible")
    print(f"  r_m = {format_float(witness.r_m)}")
    print(f"  r_s = {format_float(witness.r_s)}")
    print(f"  margin (largest eigenvalue) = {format_float(witness.margin)}")
    unit = verify_witness(consts, 1.0, 1.0, mode)
    print(f"  unit witness r_m = r_s = 1 margin = {format_float(unit)}")
    return EXIT_OK


def _cmd_metrics_report(args) -> int:
    header, data = read_trajectory_csv(args.trajectory)
    col = {name: i for i, name in enumerate(header)}
    needed = ("t", "dp_1", "dp_2", "df_1", "df_2")
    for name in needed:
        if name not in col:
            raise ParseError(f"trajectory file is missing column {name!r}")
    acc = MetricAccumulator()
    for row in data:
        accumulate(
            acc,
            ((row[col["dp_1"]], row[col["dp_2"]]), (row[col["df_1"]], row[col["df_2"]])),
            row[col["t"]],
        )
    horizon = data[-1, col["t"]] if data.size else 0.0
    print(f"tracking indices over horizon {format_float(horizon)} s")
    print(f"  {'index':<12} {'joint 1':>12} {'joint 2':>12}")
    print(
        f"  {'position':<12} {format_float(acc.dp_integral[0]):>12} "
        f"{format_float(acc.dp_integral[1]):>12}"
    )
    print(
        f"  {'force':<12} {format_float(acc.df_integral[0]):>12} "
        f"{format_float(acc.df_integral[1]):>12}"
    )
    if args.plots_dir:
        from . import plots

        out = Path(args.plots_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = plots.render_metrics_figures(header, data, acc, out)
        for p in written:
            print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="teleadapt",
        description="Adaptive bilateral teleoperation simulator and stability checker",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write trajectory.csv")
    sim.add_argument("--config", required=True, help="path to the INI config")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--mode", choices=["composite", "classical"])
    sim.add_argument("--scenario", choices=["A", "B"])
    sim.add_argument("--force-scale", type=float, dest="force_scale")
    sim.add_argument("--dt", type=float)
    sim.add_argument("--horizon", type=float)
    sim.add_argument(
        "--plots", action="store_true", help="render figures next to the CSV output"
    )
    sim.set_defaults(func=_cmd_simulate)

    st = sub.add_parser("stability", help="evaluate the stability certificate")
    st.add_argument("--config", required=True)
    st.add_argument("--mode", choices=["theorem", "proposition"], default="theorem")
    st.set_defaults(func=_cmd_stability)

    mr = sub.add_parser("metrics-report", help="per-joint tracking indices from a CSV")
    mr.add_argument("--trajectory", required=True, help="path to trajectory.csv")
    mr.add_argument("--plots-dir", dest="plots_dir", help="also render metric figures here")
    mr.set_defaults(func=_cmd_metrics_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, AssumptionViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDivergence, InvariantBreach) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
