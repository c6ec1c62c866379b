"""Command-line experiment driver.

Subcommands ``run``, ``compare-schedules``, ``l2-sweep`` and ``metrics``. A run
is described by a YAML mapping, optionally layered over a named preset (see
``configs/example.yaml`` in the repository). Every file written carries the
config hash and seed; outputs are staged in a temporary directory and moved
into place only when the whole command succeeds.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import __version__, kernels, presets
from . import distributions as D
from . import metrics as M
from . import schedules as S
from .core import RNG_INFO, Coupling, NumericalFailure, seeded_rng
from .ode import SolverSpec, integrate
from .pipeline import MAX_REFLOW, ExactBackend, KnnBackend, MlpBackend, reflow
from .velocity import ExactVelocity, KernelVelocity, TrainConfig, train_velocity

log = logging.getLogger("rectflow")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

KNOWN_KEYS = {
    "preset", "seed", "source", "target", "schedule", "backend", "solver", "reflow_k",
    "n_train", "n_eval", "metrics", "trajectory_particles", "compare", "sweep",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    source: object
    target: object
    schedule: S.Schedule
    backend: object
    solver: SolverSpec
    reflow_k: int
    n_train: int
    n_eval: int
    metrics: tuple
    trajectory_particles: int
    compare_schedules: tuple
    compare_steps: tuple
    sweep_lambdas: tuple
    raw: dict = field(repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _positive_int(raw, key, default, upper=None):
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{key} must be a positive integer, got {value!r}")
    if upper is not None and value > upper:
        raise ConfigError(f"{key} must be <= {upper}, got {value}")
    return value


def _backend(spec, n_train, source, target):
    spec = {"name": spec} if isinstance(spec, str) else dict(spec)
    name = spec.pop("name", None)
    if name == "exact":
        if spec:
            raise ConfigError(f"exact backend takes no parameters, got {sorted(spec)}")
        if not isinstance(source, D.DiagonalGaussian):
            raise ConfigError("exact backend needs a gaussian source")
        if not isinstance(target, (D.DiagonalGaussian, D.GaussianMixture, D.Empirical)):
            raise ConfigError("exact backend needs a gaussian, mixture or empirical target")
        return ExactBackend(source, target)
    if name == "knn":
        h = float(spec.pop("h", 1.0))
        m = spec.pop("m", 100)
        if spec:
            raise ConfigError(f"unknown knn parameters {sorted(spec)}")
        if not h > 0:
            raise ConfigError(f"knn bandwidth h must be > 0, got {h}")
        if isinstance(m, bool) or not isinstance(m, int) or not 1 <= m:
            raise ConfigError(f"knn m must be a positive integer, got {m!r}")
        return KnnBackend(h, min(m, n_train))
    if name == "mlp":
        if "hidden" in spec:
            spec["hidden"] = tuple(spec["hidden"])
        for key in ("betas", "time_weight"):
            if key in spec:
                raise ConfigError(f"mlp parameter {key!r} is not configurable from a file")
        try:
            return MlpBackend(TrainConfig(**spec))
        except TypeError as exc:
            raise ConfigError(f"bad mlp parameters: {exc}") from None
    raise ConfigError(f"backend must be exact, knn or mlp, got {name!r}")


def parse_config(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Validate a config mapping; raises :class:`ConfigError` on any problem."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    merged = {}
    if "preset" in raw:
        merged.update(presets.get(raw["preset"]))
    merged.update({k: v for k, v in raw.items() if k != "preset"})
    unknown = set(merged) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if seed_override is not None:
        merged["seed"] = seed_override
    merged.setdefault("seed", 0)
    seed = merged["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    for key in ("source", "target"):
        if key not in merged:
            raise ConfigError(f"config needs a {key!r} distribution")
    try:
        source = D.from_config(merged["source"])
        target = D.from_config(merged["target"])
        schedule = S.from_config(merged.get("schedule", "linear"))
        solver = SolverSpec(**merged.get("solver", {}))
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if source.dim != target.dim:
        raise ConfigError(f"source dimension {source.dim} differs from target dimension {target.dim}")
    n_train = _positive_int(merged, "n_train", 1000)
    n_eval = _positive_int(merged, "n_eval", 500)
    reflow_k = _positive_int(merged, "reflow_k", 1, MAX_REFLOW)
    backend = _backend(merged.get("backend", "knn"), n_train, source, target)
    if isinstance(backend, ExactBackend) and reflow_k > 1:
        raise ConfigError("exact backend supports reflow_k = 1 only")
    wanted = tuple(merged.get("metrics", M.MetricsReport.KEYS))
    bad = set(wanted) - set(M.MetricsReport.KEYS)
    if bad:
        raise ConfigError(f"unknown metrics {sorted(bad)}")
    compare = merged.get("compare", {})
    sched_names = tuple(compare.get("schedules", ["linear", "vp"]))
    try:
        for name in sched_names:
            S.from_config(name)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    steps = tuple(compare.get("steps", [1, 2, 5, 100]))
    if not steps or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in steps):
        raise ConfigError("compare.steps must be positive integers")
    lambdas = tuple(float(x) for x in merged.get("sweep", {}).get("lambdas", [0.0]))
    if any(not lam >= 0 for lam in lambdas):
        raise ConfigError("sweep lambdas must be >= 0")
    traj_n = _positive_int(merged, "trajectory_particles", 200)
    return ExperimentConfig(seed, source, target, schedule, backend, solver, reflow_k, n_train, n_eval,
                            wanted, traj_n, sched_names, steps, lambdas, merged)


def load_config(path: str | None, preset: str | None, seed_override: int | None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
    if preset is not None:
        raw = {"preset": preset, **{k: v for k, v in raw.items() if k != "preset"}}
    if not raw:
        raise ConfigError("give --config or --preset")
    return parse_config(raw, seed_override)


# ---------------------------------------------------------------- output helpers

def _clean(value):
    if isinstance(value, float):
        return value if np.isfinite(value) else None
    if isinstance(value, (np.floating, np.integer)):
        return _clean(value.item())
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


class Outputs:
    """Collects files in memory; :meth:`commit` writes them all or none."""

    def __init__(self, cfg_hash: str, seed: int):
        self.cfg_hash = cfg_hash
        self.seed = seed
        self.files: dict[str, str] = {}

    @property
    def stamp(self) -> str:
        return f"config_hash={self.cfg_hash} seed={self.seed}"

    def json(self, name, payload):
        body = {"config_hash": self.cfg_hash, "seed": self.seed, **payload}
        self.files[name] = json.dumps(_clean(body), indent=2) + "\n"

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# {self.stamp}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self.files[name] = buf.getvalue()

    def commit(self, out_dir: str):
        out_dir = os.path.abspath(out_dir)
        parent = os.path.dirname(out_dir)
        os.makedirs(parent, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".rectflow-", dir=parent)
        try:
            for name, text in self.files.items():
                with open(os.path.join(stage, name), "w", newline="") as fh:
                    fh.write(text)
            os.makedirs(out_dir, exist_ok=True)
            for name in self.files:
                os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
        finally:
            shutil.rmtree(stage, ignore_errors=True)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    if v is None:
        return ""
    return v


def _config_echo(out: Outputs, cfg: ExperimentConfig, command: str):
    out.json("config.json", {
        "command": command,
        "config": cfg.raw,
        "rng": RNG_INFO,
        "build": {"rectflow": __version__, "kernel_backend": kernels.BACKEND},
    })


# ---------------------------------------------------------------- commands

def _draw_pairs(cfg, rng, n):
    return Coupling(D.sample(cfg.source, n, rng), D.sample(cfg.target, n, rng))


def _normalized(rounds, key, base_round):
    base = rounds[base_round].get(key) if len(rounds) > base_round else None
    if not base:
        return [None] * len(rounds)
    return [None if r.get(key) is None else r[key] / base for r in rounds]


def cmd_run(cfg: ExperimentConfig, out: Outputs):
    rng = seeded_rng(cfg.seed)
    pairs = _draw_pairs(cfg, rng, cfg.n_train)
    holdout = _draw_pairs(cfg, rng, cfg.n_eval)
    curves = []

    def curve_cb(k):
        return lambda it, loss: curves.append((k + 1, it, loss))

    callbacks = [curve_cb(k) for k in range(cfg.reflow_k)]
    results = reflow(pairs, cfg.reflow_k, cfg.backend, cfg.schedule, cfg.solver, rng, source=cfg.source,
                     holdout=holdout, callbacks=callbacks)
    rounds = [M.coupling_report(holdout).as_dict()]
    rounds += [r.metrics.as_dict() for r in results]
    rounds = [{k: r[k] for k in cfg.metrics} for r in rounds]
    norm = {
        "straightness": _normalized(rounds, "straightness", 1) if "straightness" in cfg.metrics else None,
        "relative_l2_cost": (_normalized(rounds, "relative_l2_cost", 0)
                             if "relative_l2_cost" in cfg.metrics else None),
    }
    out.json("metrics.json", {
        "rounds": [{"round": k, **r} for k, r in enumerate(rounds)],
        "normalized": {k: v for k, v in norm.items() if v is not None},
    })
    last = results[-1]
    held = last.trajectories.states[:, last.coupling.n - last.holdout_size:][:, :cfg.trajectory_particles]
    d = held.shape[2]
    out.csv("trajectories.csv", ["particle_id", "step_index", "t"] + [f"x_{c}" for c in range(d)],
            ([i, j, t, *held[j, i]] for i in range(held.shape[1])
             for j, t in enumerate(last.trajectories.times)))
    couplings = [holdout] + [r.holdout_pairs for r in results]
    out.csv("couplings.csv", ["round", "pair_id"] + [f"z0_{c}" for c in range(d)] + [f"z1_{c}" for c in range(d)],
            ([k, i, *c.left[i], *c.right[i]] for k, c in enumerate(couplings) for i in range(c.n)))
    if isinstance(cfg.backend, MlpBackend):
        out.csv("training_curve.csv", ["round", "iteration", "loss"], curves)
    return rounds


def _schedule_field(cfg, schedule, pairs, rng):
    if isinstance(cfg.backend, ExactBackend):
        return ExactVelocity.from_distributions(cfg.source, cfg.target, schedule)
    if isinstance(cfg.backend, KnnBackend):
        return KernelVelocity(pairs, cfg.backend.h, cfg.backend.m, schedule)
    return train_velocity(pairs, schedule, cfg.backend.cfg, rng)


def cmd_compare(cfg: ExperimentConfig, out: Outputs):
    """Endpoint quality of each schedule across Euler step counts."""
    rng = seeded_rng(cfg.seed)
    pairs = _draw_pairs(cfg, rng, cfg.n_train)
    x1 = D.sample(cfg.target, cfg.n_eval, rng)
    x0 = D.sample(cfg.source, cfg.n_eval, rng)
    ref = D.sample(cfg.target, cfg.n_eval, rng)
    children = rng.spawn(len(cfg.compare_schedules))
    rows = []
    for name, child in zip(cfg.compare_schedules, children):
        schedule = S.from_config(name)
        v = _schedule_field(cfg, schedule, pairs, child)
        start, _ = S.interpolate(schedule, x1, x0, 0.0)
        for n_steps in cfg.compare_steps:
            traj = integrate(v, start, SolverSpec("euler", n_steps))
            test = M.energy_test(traj.last, ref, child)
            rel = (M.relative_l2_cost(Coupling(traj.first, traj.last))
                   if traj.n <= M.RELATIVE_COST_CAP else None)
            rows.append([schedule.name, n_steps, test.statistic, test.threshold, test.p_value,
                         int(test.rejects()), M.straightness(traj), rel])
    out.csv("compare_schedules.csv",
            ["schedule", "steps", "energy_distance", "null_threshold", "p_value", "rejects", "straightness",
             "relative_l2_cost"], rows)
    return rows


def cmd_sweep(cfg: ExperimentConfig, out: Outputs):
    """One network per L2 penalty; straightness and cost of the induced coupling."""
    if not isinstance(cfg.backend, MlpBackend):
        raise ConfigError("l2-sweep needs the mlp backend")
    rng = seeded_rng(cfg.seed)
    pairs = _draw_pairs(cfg, rng, cfg.n_train)
    start = D.sample(cfg.source, cfg.n_eval, rng)
    ref = D.sample(cfg.target, cfg.n_eval, rng)
    rows, curves = [], []
    for lam, child in zip(cfg.sweep_lambdas, rng.spawn(len(cfg.sweep_lambdas))):
        train_cfg = replace(cfg.backend.cfg, l2_penalty=lam)
        net = train_velocity(pairs, cfg.schedule, train_cfg, child,
                             callback=lambda it, loss, lam=lam: curves.append((lam, it, loss)))
        traj = integrate(net, start, cfg.solver)
        induced = Coupling(traj.first, traj.last)
        rows.append([lam, M.straightness(traj), M.transport_cost(induced, M.L2_SQ),
                     M.marginal_distance(traj.last, ref)])
    out.csv("l2_sweep.csv", ["lambda", "straightness", "cost_l2sq", "endpoint_energy_distance"], rows)
    out.csv("training_curve.csv", ["lambda", "iteration", "loss"], curves)
    return rows


def read_couplings(path):
    """Parse a ``couplings.csv``; returns ``(stamp, {round: Coupling})``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        stamp = {}
        if first.startswith("#"):
            for part in first[1:].split():
                key, _, value = part.partition("=")
                stamp[key] = value
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["round", "pair_id"] or (len(header) - 2) % 2 or len(header) < 4:
            raise ConfigError(f"{path} is not a couplings file")
        d = (len(header) - 2) // 2
        rows = np.array([[float(x) for x in row] for row in reader if row])
    if rows.size == 0:
        raise ConfigError(f"{path} holds no pairs")
    out = {}
    for k in np.unique(rows[:, 0]).astype(int):
        block = rows[rows[:, 0] == k]
        out[int(k)] = Coupling(block[:, 2:2 + d], block[:, 2 + d:])
    return stamp, out


def cmd_metrics(path: str, out_dir: str):
    try:
        stamp, rounds = read_couplings(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    seed = stamp.get("seed")
    out = Outputs(stamp.get("config_hash", "unknown"), int(seed) if seed and seed.isdigit() else None)
    reports = [{"round": k, **M.coupling_report(c).as_dict()} for k, c in sorted(rounds.items())]
    out.json("metrics.json", {"source": os.path.basename(path), "rounds": reports})
    out.commit(out_dir)
    return reports


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rectflow", description="Rectified flow experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("run", "rectify/reflow and write metrics, trajectories and couplings"),
                       ("compare-schedules", "Euler step sweep over interpolation schedules"),
                       ("l2-sweep", "train one network per L2 penalty")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--preset", choices=presets.names(), help="start from a named preset")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
    p = sub.add_parser("metrics", help="recompute coupling metrics from a couplings.csv")
    p.add_argument("--couplings", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "metrics":
            cmd_metrics(args.couplings, args.out)
            return EXIT_OK
        cfg = load_config(args.config, args.preset, args.seed)
        out = Outputs(cfg.config_hash, cfg.seed)
        _config_echo(out, cfg, args.command)
        {"run": cmd_run, "compare-schedules": cmd_compare, "l2-sweep": cmd_sweep}[args.command](cfg, out)
        out.commit(args.out)
    except ConfigError as exc:
        print(f"rectflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"rectflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
