"""Experiment harness: deterministic data files for the heralded gate.

Subcommands sweep the gate's parameters (tradeoff curves, target/gain/
ancilla sweeps, phase scans), run the Monte-Carlo cross-check, drive the
photon-number-basis engine, and self-test the analytic/MC agreement.

Every command writes CSV (floats with 17 significant digits) plus a JSON
summary embedding the fully resolved configuration, tool version and
seed — no timestamps, so identical (config, seed, shards) reruns are
byte-identical.  All results for a command are computed before anything
is written: a failing grid point aborts the run with context and nothing
is emitted.

Configuration is a flat key=value file with sections [gate], [sweep],
[mc], [fock]; unknown keys are rejected.  Squeezing is specified in dB
everywhere (variance 10^(-s/10), parameter r = s ln10/20).  Exit codes:
0 success, 2 configuration error, 3 numerical error (the originating
error class is printed).  HERALD_THREADS caps worker parallelism.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .exceptions import (
    AcceptanceStarvationError,
    ConfigError,
    FilterBreakdownError,
    HeraldSqueezeError,
    OperationalRegimeError,
    PhysicalityError,
    QuadratureError,
    TruncationError,
    UnityGainError,
)
from .gaussian import (
    AncillaSpec,
    GaussianState,
    apply,
    coherent,
    db_to_r,
    db_to_variance,
    squeezer,
    vacuum,
)
from . import fock, gate, montecarlo
from ._backend import backend_name

NUMERICAL_ERRORS = (
    FilterBreakdownError,
    UnityGainError,
    OperationalRegimeError,
    AcceptanceStarvationError,
    QuadratureError,
    TruncationError,
    PhysicalityError,
)

# Fixed phase-scan scenario: five input magnitudes, each paired with its
# own squeezing target (dB).
PHASE_SCAN_STATES = (
    ("A", 0.70, 2.30),
    ("B", 1.005, 4.81),
    ("C", 1.31, 5.84),
    ("D", 1.615, 8.85),
    ("E", 1.92, 10.16),
)

_DEFAULTS: dict[str, dict[str, str]] = {
    "gate": {
        "target_db": "2.0",
        "ancilla_db": "6.0",
        "ancilla_antisqueeze_db": "",
        "ancilla_angle": "0.0",
        "g_f": "1.5",
        "cutoff": "coverage:0.98",
        "t_m": "1.0",
        "eta_inloop": "1.0",
        "eta_verify": "1.0",
        "regime_min_coverage": "0.98",
        "gain_x": "",
        "gain_y": "",
        "input_alpha": "0,0",
    },
    "sweep": {
        "grid": "",
        "targets_db": "2,4,6",
        "gamma_max": "6.0",
        "points": "25",
    },
    "mc": {
        "n_trajectories": "100000",
        "count_mode": "accepted",
        "seed": "2024",
        "shards": "1",
        "budget": "1000000000",
        "block_target": "256",
    },
    "fock": {
        "dim": "40",
        "gh_nodes": "64",
        "quad_rule": "gauss-hermite",
        "input": "coherent:0.25,0.15",
    },
}


# ---------------------------------------------------------------------------
# configuration parsing

@dataclass
class ExperimentConfig:
    """Resolved flat configuration: section -> key -> string value.

    ``explicit`` records the (section, key) pairs the user actually set,
    so commands can distinguish a default from a deliberate choice.
    """

    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    @classmethod
    def load(cls, path: str | None) -> "ExperimentConfig":
        sections = {name: dict(values) for name, values in _DEFAULTS.items()}
        explicit: set = set()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            read = parser.read(path)
            if not read:
                raise ConfigError(f"config file not found: {path}")
            for section in parser.sections():
                if section not in sections:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, value in parser.items(section):
                    if key not in sections[section]:
                        raise ConfigError(
                            f"unknown key '{key}' in section [{section}]")
                    sections[section][key] = value.strip()
                    explicit.add((section, key))
        return cls(sections, explicit)

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def getfloat(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from exc

    def getint(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}") from exc

    def set(self, section: str, key: str, value: str) -> None:
        self.sections[section][key] = value


def parse_grid(text: str) -> np.ndarray:
    """Parse 'start:stop:steps' into an inclusive, strictly monotone grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be 'start:stop:steps', got {text!r}")
    try:
        start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"malformed grid {text!r}") from exc
    if steps < 1:
        raise ConfigError("grid needs at least one point")
    grid = np.linspace(start, stop, steps)
    if steps > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ConfigError(f"grid is not strictly monotone: {text!r}")
    return grid


def parse_cutoff(text: str) -> gate.CutoffRule:
    """Parse 'coverage:F' | 'fixed:X' | 'embrace:B' | 'embrace:auto' | bare number."""
    if ":" not in text:
        try:
            return gate.CutoffRule("fixed", float(text))
        except ValueError as exc:
            raise ConfigError(f"malformed cutoff {text!r}") from exc
    kind, _, value = text.partition(":")
    kind = kind.strip().lower()
    if kind not in ("coverage", "fixed", "embrace"):
        raise ConfigError(f"unknown cutoff rule {kind!r}")
    value = value.strip().lower()
    if kind == "embrace" and value == "auto":
        return gate.CutoffRule("embrace", float("nan"))
    try:
        return gate.CutoffRule(kind, float(value))
    except ValueError as exc:
        raise ConfigError(f"malformed cutoff {text!r}") from exc


def _parse_alpha(text: str) -> complex:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"input_alpha must be 're,im', got {text!r}")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"malformed input_alpha {text!r}") from exc


def _ancilla(cfg: ExperimentConfig, db_override: float | None = None) -> AncillaSpec:
    sq_db = db_override if db_override is not None else cfg.getfloat("gate", "ancilla_db")
    v_sq = db_to_variance(sq_db)
    anti = cfg.get("gate", "ancilla_antisqueeze_db")
    v_asq = db_to_variance(-float(anti)) if anti else 1.0 / v_sq
    return AncillaSpec(v_sq=v_sq, v_asq=v_asq,
                       angle=cfg.getfloat("gate", "ancilla_angle"))


def _gains(cfg: ExperimentConfig) -> tuple[float, float] | None:
    gx, gy = cfg.get("gate", "gain_x"), cfg.get("gate", "gain_y")
    if not gx and not gy:
        return None
    if not gx or not gy:
        raise ConfigError("gain_x and gain_y must be given together")
    return (float(gx), float(gy))


def _gate_config(cfg: ExperimentConfig, *, target_db: float | None = None,
                 g_f: float | None = None, ancilla_db: float | None = None,
                 input_state: GaussianState | None = None) -> gate.GateConfig:
    r_t = db_to_r(target_db if target_db is not None
                  else cfg.getfloat("gate", "target_db"))
    return gate.solved_config(
        r_t,
        _ancilla(cfg, ancilla_db),
        g_f if g_f is not None else cfg.getfloat("gate", "g_f"),
        parse_cutoff(cfg.get("gate", "cutoff")),
        t_m=cfg.getfloat("gate", "t_m"),
        eta_inloop=cfg.getfloat("gate", "eta_inloop"),
        eta_verify=cfg.getfloat("gate", "eta_verify"),
        regime_min_coverage=cfg.getfloat("gate", "regime_min_coverage"),
        input_state=input_state,
        gains=_gains(cfg),
    )


# ---------------------------------------------------------------------------
# emission

def _fmt(value) -> str:
    if isinstance(value, str):
        if "," in value or '"' in value:
            return '"' + value.replace('"', '""') + '"'
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def emit_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    if not rows:
        raise ConfigError("refusing to emit an empty table")
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match header")
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(command: str, cfg: ExperimentConfig, args, files: list[str],
             extra: dict | None = None) -> dict:
    payload = {
        "command": command,
        "version": __version__,
        "seed": args.seed if args.seed is not None else cfg.getint("mc", "seed"),
        "engine": getattr(args, "engine", None),
        "config": cfg.sections,
        "files": sorted(files),
    }
    if extra:
        payload.update(extra)
    return payload


def _write_all(out_dir: str, command: str, cfg: ExperimentConfig, args,
               tables: dict[str, tuple[list[str], list[tuple]]],
               extra: dict | None = None) -> None:
    """Emit every table plus the JSON summary (compute-all-then-emit)."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for name, (header, rows) in tables.items():
        path = os.path.join(out_dir, name)
        emit_csv(path, header, rows)
        files.append(name)
    emit_json(os.path.join(out_dir, f"{command.replace('-', '_')}.json"),
              _summary(command, cfg, args, files, extra))
    for name in sorted(files):
        print(f"wrote {os.path.join(out_dir, name)}")


# ---------------------------------------------------------------------------
# engines shared by the sweep commands

def _run_config(cfg: ExperimentConfig, gcfg: gate.GateConfig,
                input_state: GaussianState, args,
                point_index: int = 0) -> montecarlo.RunConfig:
    shards = args.shards if args.shards is not None else cfg.getint("mc", "shards")
    seed = args.seed if args.seed is not None else cfg.getint("mc", "seed")
    return montecarlo.RunConfig(
        gate=gcfg,
        input=input_state,
        n_trajectories=cfg.getint("mc", "n_trajectories"),
        seed=seed,
        shards=shards,
        count_mode=cfg.get("mc", "count_mode"),
        budget=cfg.getint("mc", "budget"),
        block_target=cfg.getint("mc", "block_target"),
        shard_key_offset=point_index * shards,
    )


def _require_mc_compatible(cfg: ExperimentConfig) -> None:
    if cfg.getfloat("gate", "eta_verify") != 1.0:
        raise ConfigError(
            "eta_verify must be 1.0 for Monte-Carlo engines "
            "(verification loss is an analytic reporting knob)")


def _mc_point(cfg: ExperimentConfig, gcfg: gate.GateConfig,
              input_state: GaussianState, args, point_index: int
              ) -> tuple[float, float, float]:
    """(fidelity, fidelity_stderr, empirical success rate) for one point."""
    run = _run_config(cfg, gcfg, input_state, args, point_index)
    stats = montecarlo.simulate(run)
    target = apply(input_state, squeezer(gcfg.r_t))
    fid, err = montecarlo.estimate_fidelity(stats, target)
    rate, _ = montecarlo.acceptance_rate(stats)
    return fid, err, rate


def _engines(args) -> list[str]:
    if args.engine == "both":
        return ["analytic", "mc"]
    return [args.engine]


TRADEOFF_HEADER = ["g_f", "alpha_c", "success_probability", "fidelity",
                   "fidelity_stderr"]


# ---------------------------------------------------------------------------
# subcommands

def cmd_tradeoff(cfg: ExperimentConfig, args) -> int:
    """Fidelity vs success probability curves, one file per target."""
    targets = [float(v) for v in cfg.get("sweep", "targets_db").split(",") if v]
    if not targets:
        raise ConfigError("targets_db is empty")
    if args.grid:
        gammas = parse_grid(args.grid)
    elif cfg.get("sweep", "grid"):
        gammas = parse_grid(cfg.get("sweep", "grid"))
    else:
        gammas = np.geomspace(1.0, cfg.getfloat("sweep", "gamma_max"),
                              cfg.getint("sweep", "points"))
    if np.any(gammas < 1.0):
        raise ConfigError("tradeoff grid is in gamma >= 1")
    input_state = coherent(_parse_alpha(cfg.get("gate", "input_alpha")))
    t_m = cfg.getfloat("gate", "t_m")
    ancilla = _ancilla(cfg)
    cutoff_rule = parse_cutoff(cfg.get("gate", "cutoff"))
    if "mc" in _engines(args):
        _require_mc_compatible(cfg)

    tables: dict[str, tuple[list[str], list[tuple]]] = {}
    for target_db in targets:
        r_t = db_to_r(target_db)
        t_s = math.exp(-2.0 * r_t)
        # Map the gamma grid to filter strengths through the measured
        # quadrature's variance (the amplification leg).
        _, d_mat = gate.outcome_moments(t_s, t_m, ancilla,
                                        cfg.getfloat("gate", "eta_inloop"),
                                        input_state)
        v_leg = float(d_mat[-1, -1]) / 4.0
        g_f_grid = []
        for gamma in gammas:
            lam = (1.0 - 1.0 / float(gamma)) / (2.0 * v_leg)
            if lam >= 1.0:
                raise ConfigError(
                    f"gamma {gamma:g} unreachable at target {target_db:g} dB "
                    f"(needs filter exponent {lam:.3f} >= 1)")
            g_f_grid.append(1.0 / (1.0 - lam))
        for engine in _engines(args):
            rows = []
            for i, g_f in enumerate(g_f_grid):
                gcfg = gate.solved_config(
                    r_t, ancilla, g_f, cutoff_rule, t_m=t_m,
                    eta_inloop=cfg.getfloat("gate", "eta_inloop"),
                    eta_verify=cfg.getfloat("gate", "eta_verify"),
                    regime_min_coverage=cfg.getfloat("gate", "regime_min_coverage"),
                    input_state=input_state, gains=_gains(cfg))
                if engine == "analytic":
                    res = gate.heralded_output(gcfg, input_state)
                    rows.append((g_f, gcfg.filter.alpha_c,
                                 res.success_probability, res.fidelity, 0.0))
                else:
                    fid, err, rate = _mc_point(cfg, gcfg, input_state, args, i)
                    rows.append((g_f, gcfg.filter.alpha_c, rate, fid, err))
            suffix = f"_{engine}" if args.engine == "both" else ""
            name = f"tradeoff_target{target_db:g}dB{suffix}.csv"
            tables[name] = (TRADEOFF_HEADER, rows)
    _write_all(args.out, "tradeoff", cfg, args, tables)
    return 0


def cmd_sweep_target(cfg: ExperimentConfig, args) -> int:
    """Deterministic vs heralded fidelity across target squeezing."""
    grid = parse_grid(args.grid or cfg.get("sweep", "grid") or "0.5:8:16")
    input_state = coherent(_parse_alpha(cfg.get("gate", "input_alpha")))
    ancilla = _ancilla(cfg)
    t_m = cfg.getfloat("gate", "t_m")
    if "mc" in _engines(args):
        _require_mc_compatible(cfg)
    tables = {}
    for engine in _engines(args):
        rows = []
        for i, target_db in enumerate(grid):
            gcfg = _gate_config(cfg, target_db=float(target_db),
                                input_state=input_state)
            f_det = gate.deterministic_limit(ancilla, db_to_r(float(target_db)), t_m)
            if engine == "analytic":
                res = gate.heralded_output(gcfg, input_state)
                rows.append((target_db, gcfg.t_s, f_det, res.fidelity,
                             res.success_probability, 0.0))
            else:
                fid, err, rate = _mc_point(cfg, gcfg, input_state, args, i)
                rows.append((target_db, gcfg.t_s, f_det, fid, rate, err))
        suffix = f"_{engine}" if args.engine == "both" else ""
        tables[f"sweep_target{suffix}.csv"] = (
            ["target_db", "t_s", "fidelity_deterministic", "fidelity",
             "success_probability", "fidelity_stderr"], rows)
    _write_all(args.out, "sweep-target", cfg, args, tables)
    return 0


def cmd_sweep_gain(cfg: ExperimentConfig, args) -> int:
    """Fidelity across filter strength at a fixed target."""
    grid = parse_grid(args.grid or cfg.get("sweep", "grid") or "1:3:21")
    if np.any(grid < 1.0):
        raise ConfigError("filter strength grid must satisfy g_f >= 1")
    input_state = coherent(_parse_alpha(cfg.get("gate", "input_alpha")))
    if "mc" in _engines(args):
        _require_mc_compatible(cfg)
    tables = {}
    for engine in _engines(args):
        rows = []
        for i, g_f in enumerate(grid):
            gcfg = _gate_config(cfg, g_f=float(g_f), input_state=input_state)
            if engine == "analytic":
                res = gate.heralded_output(gcfg, input_state)
                rows.append((g_f, gcfg.filter.alpha_c, res.fidelity,
                             res.success_probability, 0.0))
            else:
                fid, err, rate = _mc_point(cfg, gcfg, input_state, args, i)
                rows.append((g_f, gcfg.filter.alpha_c, fid, rate, err))
        suffix = f"_{engine}" if args.engine == "both" else ""
        tables[f"sweep_gain{suffix}.csv"] = (
            ["g_f", "alpha_c", "fidelity", "success_probability",
             "fidelity_stderr"], rows)
    _write_all(args.out, "sweep-gain", cfg, args, tables)
    return 0


def cmd_sweep_ancilla(cfg: ExperimentConfig, args) -> int:
    """Fidelity across (pure) ancilla squeezing at a fixed target."""
    grid = parse_grid(args.grid or cfg.get("sweep", "grid") or "3:9:13")
    if cfg.get("gate", "ancilla_antisqueeze_db"):
        raise ConfigError("sweep-ancilla sweeps pure ancillas; "
                          "remove ancilla_antisqueeze_db")
    input_state = coherent(_parse_alpha(cfg.get("gate", "input_alpha")))
    t_m = cfg.getfloat("gate", "t_m")
    r_t = db_to_r(cfg.getfloat("gate", "target_db"))
    if "mc" in _engines(args):
        _require_mc_compatible(cfg)
    tables = {}
    for engine in _engines(args):
        rows = []
        for i, anc_db in enumerate(grid):
            gcfg = _gate_config(cfg, ancilla_db=float(anc_db),
                                input_state=input_state)
            f_det = gate.deterministic_limit(_ancilla(cfg, float(anc_db)), r_t, t_m)
            if engine == "analytic":
                res = gate.heralded_output(gcfg, input_state)
                rows.append((anc_db, f_det, res.fidelity,
                             res.success_probability, 0.0))
            else:
                fid, err, rate = _mc_point(cfg, gcfg, input_state, args, i)
                rows.append((anc_db, f_det, fid, rate, err))
        suffix = f"_{engine}" if args.engine == "both" else ""
        tables[f"sweep_ancilla{suffix}.csv"] = (
            ["ancilla_db", "fidelity_deterministic", "fidelity",
             "success_probability", "fidelity_stderr"], rows)
    _write_all(args.out, "sweep-ancilla", cfg, args, tables)
    return 0


def cmd_phase_scan(cfg: ExperimentConfig, args) -> int:
    """Five fixed input magnitudes, each swept over input phase."""
    if args.grid:
        phases = parse_grid(args.grid)
    else:
        phases = np.linspace(0.0, 2.0 * math.pi, 13)[:-1]
    if "mc" in _engines(args):
        _require_mc_compatible(cfg)
    tables = {}
    for engine in _engines(args):
        rows = []
        idx = 0
        for label, magnitude, target_db in PHASE_SCAN_STATES:
            for phase in phases:
                alpha = magnitude * complex(math.cos(float(phase)),
                                            math.sin(float(phase)))
                input_state = coherent(alpha)
                gcfg = _gate_config(cfg, target_db=target_db,
                                    input_state=input_state)
                if engine == "analytic":
                    res = gate.heralded_output(gcfg, input_state)
                    rows.append((label, target_db, magnitude, phase,
                                 res.fidelity, res.success_probability, 0.0))
                else:
                    fid, err, rate = _mc_point(cfg, gcfg, input_state, args, idx)
                    rows.append((label, target_db, magnitude, phase,
                                 fid, rate, err))
                idx += 1
        suffix = f"_{engine}" if args.engine == "both" else ""
        tables[f"phase_scan{suffix}.csv"] = (
            ["state", "target_db", "magnitude", "phase", "fidelity",
             "success_probability", "fidelity_stderr"], rows)
    _write_all(args.out, "phase-scan", cfg, args, tables)
    return 0


def cmd_run_mc(cfg: ExperimentConfig, args) -> int:
    """One Monte-Carlo run of the configured gate."""
    _require_mc_compatible(cfg)
    input_state = coherent(_parse_alpha(cfg.get("gate", "input_alpha")))
    gcfg = _gate_config(cfg, input_state=input_state)
    run = _run_config(cfg, gcfg, input_state, args)
    if args.dump:
        parent = os.path.dirname(os.path.abspath(args.dump))
        os.makedirs(parent, exist_ok=True)
    stats = montecarlo.simulate(run, dump_path=args.dump)
    target = apply(input_state, squeezer(gcfg.r_t))
    fid, err = montecarlo.estimate_fidelity(stats, target)
    rate, rate_se = montecarlo.acceptance_rate(stats)
    try:
        analytic = gate.heralded_output(gcfg, input_state)
        f_analytic, p_analytic = analytic.fidelity, analytic.success_probability
    except NUMERICAL_ERRORS:
        f_analytic, p_analytic = float("nan"), float("nan")
    rows = [(fid, err, rate, rate_se, stats.accepted, stats.total,
             f_analytic, p_analytic)]
    tables = {"run_mc.csv": (
        ["fidelity", "fidelity_stderr", "acceptance_rate", "acceptance_stderr",
         "accepted", "total", "fidelity_analytic",
         "success_probability_analytic"], rows)}
    extra = {
        "backend": backend_name(),
        "outcome_mean": stats.outcome_mean.tolist(),
        "outcome_cov": stats.outcome_cov.tolist(),
        "quad_mean": stats.quad_mean.tolist(),
        "quad_cov": stats.quad_cov.tolist(),
    }
    if args.dump:
        extra["dump"] = args.dump
    _write_all(args.out, "run-mc", cfg, args, tables, extra)
    return 0


def cmd_fock_demo(cfg: ExperimentConfig, args) -> int:
    """Photon-number-basis gate run, with a Gaussian-engine reference for
    coherent inputs."""
    if args.engine not in (None, "fock"):
        raise ConfigError("fock-demo runs on the fock engine only")
    t_m = cfg.getfloat("gate", "t_m")
    if t_m != 0.5:
        raise ConfigError("fock-demo requires t_m = 0.5 (dual-homodyne)")
    dim = cfg.getint("fock", "dim")
    spec = cfg.get("fock", "input")
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    alpha = None
    if kind == "coherent":
        alpha = _parse_alpha(rest)
        input_fock = fock.fock_coherent(alpha, dim)
        gauss_ref = coherent(alpha)
    elif kind == "single-photon":
        input_fock = fock.fock_single_photon(dim)
        gauss_ref = None
    elif kind == "cat":
        parts = rest.split(",")
        if len(parts) != 2 or parts[1].strip() not in ("even", "odd"):
            raise ConfigError("cat input is 'cat:alpha,even|odd'")
        input_fock = fock.fock_cat(float(parts[0]), parts[1].strip(), dim)
        gauss_ref = None
    else:
        raise ConfigError(f"unknown fock input {spec!r}")
    gcfg = _gate_config(cfg, input_state=gauss_ref)
    res = fock.heralded_gate_fock(
        gcfg, input_fock,
        gh_nodes=cfg.getint("fock", "gh_nodes"),
        quad_rule=cfg.get("fock", "quad_rule"))
    if gauss_ref is not None:
        f_ref = gate.heralded_output(gcfg, gauss_ref).fidelity
    else:
        f_ref = float("nan")
    rows = [(spec, dim, cfg.get("fock", "quad_rule"),
             cfg.getint("fock", "gh_nodes"), res.fidelity,
             res.success_probability, f_ref)]
    tables = {"fock_demo.csv": (
        ["input", "dim", "quad_rule", "gh_nodes", "fidelity",
         "success_probability", "fidelity_gaussian_ref"], rows)}
    _write_all(args.out, "fock-demo", cfg, args, tables)
    return 0


def cmd_selftest(cfg: ExperimentConfig, args) -> int:
    """Pinned-seed agreement suite: analytic vs Monte Carlo vs Fock."""
    checks: list[tuple[str, bool, str]] = []
    anc = AncillaSpec(v_sq=db_to_variance(6.0), v_asq=1.0 / db_to_variance(6.0))
    r_t = db_to_r(2.0)

    gcfg = gate.solved_config(r_t, anc, 1.5,
                              gate.CutoffRule("coverage", 0.999), t_m=1.0)
    input_state = coherent(0.2 + 0.1j)
    run = montecarlo.RunConfig(gate=gcfg, input=input_state,
                               n_trajectories=200_000, seed=20240917)
    stats = montecarlo.simulate(run)

    res = gate.heralded_output(gcfg, input_state)
    from .filters import filtered_moments
    mu_m, d_mat = gate.outcome_moments(gcfg.t_s, gcfg.t_m, anc, 1.0, input_state)
    mean_f, cov_f, _, _, _ = filtered_moments(gcfg.filter, mu_m / 2.0,
                                              d_mat / 4.0)
    dev = np.abs(stats.outcome_mean - mean_f) / stats.outcome_mean_se
    ok = bool(np.all(dev < 3.0))
    checks.append(("filtered-outcome-moments-3se", ok,
                   f"max deviation {float(np.max(dev)):.2f} se"))

    rate, _ = montecarlo.acceptance_rate(stats)
    lo, hi = montecarlo.wilson_interval(stats.accepted, stats.total, z=3.0)
    ok = lo <= res.success_probability <= hi
    checks.append(("success-probability-wilson", ok,
                   f"analytic {res.success_probability:.5f} in "
                   f"[{lo:.5f}, {hi:.5f}] (empirical {rate:.5f})"))

    target = apply(input_state, squeezer(r_t))
    fid, err = montecarlo.estimate_fidelity(stats, target)
    ok = abs(fid - res.fidelity) < 3.0 * err
    checks.append(("fidelity-mc-vs-analytic-3se", ok,
                   f"mc {fid:.6f} +- {err:.6f} vs analytic {res.fidelity:.6f}"))

    a0 = 0.25 + 0.15j
    fcfg = gate.solved_config(r_t, anc, 1.15,
                              gate.CutoffRule("coverage", 0.99999),
                              t_m=0.5, input_state=coherent(a0))
    f_gauss = gate.heralded_output(fcfg, coherent(a0)).fidelity
    f_fock = fock.heralded_gate_fock(fcfg, fock.fock_coherent(a0, 40)).fidelity
    ok = abs(f_gauss - f_fock) < 1e-3
    checks.append(("fock-vs-gaussian-1e-3", ok,
                   f"|dF| = {abs(f_gauss - f_fock):.2e}"))

    rows = [(name, "PASS" if ok else "FAIL", detail)
            for name, ok, detail in checks]
    for name, status, detail in rows:
        print(f"selftest {name}: {status} ({detail})")
    tables = {"selftest.csv": (["check", "status", "detail"], rows)}
    _write_all(args.out, "selftest", cfg, args, tables,
               {"backend": backend_name()})
    return 0 if all(ok for _, ok, _ in checks) else 3


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsqueeze",
        description="Heralded-squeezing-gate experiment harness "
                    "(deterministic CSV/JSON data files).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="flat key=value config file")
    common.add_argument("--out", metavar="DIR", default="herald-results",
                        help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="Monte-Carlo seed (overrides config)")
    common.add_argument("--shards", type=int, metavar="N",
                        help="Monte-Carlo shard count (overrides config)")
    common.add_argument("--grid", metavar="START:STOP:STEPS",
                        help="sweep grid override")

    engine_cmds = {
        "tradeoff": (cmd_tradeoff,
                     "fidelity/success tradeoff curves per target"),
        "sweep-target": (cmd_sweep_target,
                         "fidelity across target squeezing"),
        "sweep-gain": (cmd_sweep_gain, "fidelity across filter strength"),
        "sweep-ancilla": (cmd_sweep_ancilla,
                          "fidelity across ancilla squeezing"),
        "phase-scan": (cmd_phase_scan,
                       "input-phase invariance scan at five magnitudes"),
    }
    for name, (func, help_text) in engine_cmds.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--engine", choices=["analytic", "mc", "both"],
                       default="analytic")
        p.set_defaults(func=func)

    p = sub.add_parser("run-mc", parents=[common],
                       help="one Monte-Carlo run of the configured gate")
    p.add_argument("--dump", metavar="FILE",
                   help="write per-trajectory records to FILE")
    p.set_defaults(func=cmd_run_mc, engine="mc")

    p = sub.add_parser("fock-demo", parents=[common],
                       help="photon-number-basis gate demo")
    p.add_argument("--engine", choices=["fock"], default="fock")
    p.set_defaults(func=cmd_fock_demo)

    p = sub.add_parser("selftest", parents=[common],
                       help="pinned-seed analytic/MC/Fock agreement suite")
    p.set_defaults(func=cmd_selftest, engine=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}")
        return 3
    except ValueError as exc:
        print(f"config error: {exc}")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
