"""Experiment protocols behind the CLI.

Every experiment is a function ``trial(cfg, shared, t) -> TrialResult`` plus an
aggregation step.  Trials draw all randomness from ``substream(seed, name, t)``
so results do not depend on how trials are scheduled over threads.
"""

from __future__ import annotations

import logging
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .ansatz import build_hea, build_qcnn, build_xy_target
from .curriculum import (
    curriculum_weight,
    fit_ratio,
    greedy_order_from_weights,
    random_order,
    run_qcurl_game,
    weight_matrix,
)
from .dataloss import SuperLossConfig
from .physics import (
    HamiltonianSpec,
    cluster_hamiltonian,
    corrupt_labels,
    ground_state,
    make_phase_dataset,
    make_unitary_tasks,
    string_order,
)
from .sim import expval_z, haar_states, substream
from .training import ClassifierObjective, UnitaryObjective, hs_distance, train

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "write_csv",
]

log = logging.getLogger("qcurl")

EXPERIMENTS = ("weights", "game", "phase", "heatmap", "easy_hard")
MODES = ("plain", "easy", "hard")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    Q: int = 4
    N: int = 20
    test_N: int = 20
    trials: int = 20
    epochs: int = 500
    epochs_per_task: int = 20
    lr: float = 0.001
    lam: float = 0.1
    gamma: float = 1.0
    noise_p: float = 0.3
    noise_grid: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    modes: tuple = ("plain", "easy")
    L_E: int = 20
    L_M: int = 20
    L_F: int = 20
    seed: int = 42
    output_dir: str = ""
    input_mode: str = "full"
    shared_inputs: bool = True
    boundary: str = "open"
    variant: str = "main"
    mu: float = 1.0
    label_map: str = "identity"
    label_threshold: str = "critical"
    eval_every: int = 10
    threads: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("Q", "N", "test_N", "trials", "epochs", "epochs_per_task", "L_E",
                     "L_M", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.L_F < 0 or self.threads < 0:
            raise ConfigError("L_F and threads must be >= 0")
        if not 0.0 <= self.noise_p <= 1.0 or not all(0.0 <= p <= 1.0 for p in self.noise_grid):
            raise ConfigError("noise probabilities must lie in [0, 1]")
        if not self.noise_grid:
            raise ConfigError("noise_grid is empty")
        if self.lr <= 0 or self.lam <= 0 or self.gamma <= 0 or self.mu <= 0:
            raise ConfigError("lr, lambda, gamma and mu must be positive")
        bad = set(self.modes) - set(MODES)
        if bad or not self.modes:
            raise ConfigError(f"modes must be drawn from {MODES}")
        choices = {
            "input_mode": ("full", "product"),
            "boundary": ("open", "periodic"),
            "variant": ("main", "heatmap"),
            "label_map": ("identity", "half_shift"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        if self.label_threshold != "critical":
            try:
                float(self.label_threshold)
            except ValueError:
                raise ConfigError("label_threshold must be 'critical' or a number") from None
        if self.experiment in ("weights", "game") and self.Q > 6:
            raise ConfigError("unitary experiments are limited to Q <= 6")
        if self.experiment in ("phase", "heatmap", "easy_hard") and not 4 <= self.Q <= 10:
            raise ConfigError("phase experiments need 4 <= Q <= 10")
        if self.variant == "main" and self.experiment in ("phase", "heatmap", "easy_hard"):
            if self.Q & (self.Q - 1):
                raise ConfigError("the main QCNN needs Q a power of two")
        return self


# Defaults that differ between experiments; everything else comes from the dataclass.
EXPERIMENT_DEFAULTS = {
    "weights": {"Q": 4},
    "game": {"Q": 4, "lr": 0.01},
    "phase": {"Q": 8},
    "heatmap": {"Q": 8, "variant": "heatmap", "boundary": "periodic", "mu": 5.0,
                "label_map": "half_shift"},
    "easy_hard": {"Q": 8, "trials": 10, "variant": "heatmap", "boundary": "periodic",
                  "mu": 5.0, "label_map": "half_shift", "noise_grid": (0.0, 0.3),
                  "modes": ("plain", "easy", "hard")},
}

KEY_ALIASES = {"lambda": "lam"}


def _convert(name: str, raw: str):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "tuple":
            items = [s.strip() for s in text.split(",") if s.strip()]
            return tuple(float(s) for s in items) if name == "noise_grid" else tuple(items)
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None
    return text


def _read_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def parse_config(experiment: str, config_file=None, overrides: dict | None = None) -> ExperimentConfig:
    """Built-in defaults, then the key = value file, then ``overrides``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    merged: dict[str, str] = {}
    if config_file is not None:
        merged.update(_read_file(config_file))
    merged.update(overrides or {})
    if not merged:
        log.warning("no config file or flags given; using built-in defaults")
    cfg = ExperimentConfig(experiment, **EXPERIMENT_DEFAULTS[experiment])
    known = {f.name for f in fields(ExperimentConfig)} - {"experiment"}
    for key, raw in merged.items():
        name = KEY_ALIASES.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, name, _convert(name, str(raw)))
    if not cfg.output_dir:
        cfg.output_dir = os.path.join("results", experiment)
    return cfg.validate()


def config_lines(cfg: ExperimentConfig) -> list[str]:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        name = "lambda" if f.name == "lam" else f.name
        out.append(f"{name} = {v}")
    return out


# ---------------------------------------------------------------- CSV

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    s = str(v)
    if any(c in s for c in ',"\n\r'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV with floats at 17 significant digits.

    All rows are checked against the header width before the file is opened.
    """
    header = list(header)
    rows = [list(r) for r in rows]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ValueError(f"row {i} has {len(r)} cells, header has {len(header)}")
    text = "".join(",".join(_cell(c) for c in line) + "\r\n" for line in [header] + rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------- helpers

@dataclass
class TrialResult:
    rows: list
    extra: dict = field(default_factory=dict)


def _stats(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def _seed_words(rng: np.random.Generator, n: int) -> list[int]:
    return [int(v) for v in rng.integers(0, 2**31 - 1, size=n)]


# ---------------------------------------------------------------- weights / game

def _unitary_trial_setup(cfg, t, name):
    rng = substream(cfg.seed, name, t)
    beta_seed, fixed_seed = _seed_words(rng, 2)
    L_list = list(range(1, cfg.L_M + 1))
    tasks = make_unitary_tasks(
        cfg.Q, L_list, cfg.N, beta_seed, fixed_seed, cfg.input_mode, rng,
        L_F=cfg.L_F, shared_inputs=cfg.shared_inputs,
    )
    return rng, beta_seed, fixed_seed, tasks


def weights_trial(cfg, shared, t) -> TrialResult:
    _, beta_seed, fixed_seed, tasks = _unitary_trial_setup(cfg, t, "weights")
    main = tasks[-1]
    V_M = build_xy_target(cfg.Q, cfg.L_M, cfg.L_F, beta_seed, fixed_seed).unitary()
    rows, hs, cs = [], [], []
    for aux in tasks[:-1]:
        V_m = build_xy_target(cfg.Q, aux.layer_count, cfg.L_F, beta_seed, fixed_seed).unitary()
        d = hs_distance(V_m, V_M)
        c = curriculum_weight(fit_ratio(main, aux, cfg.lam), aux)
        rows.append((t, aux.layer_count, d, c))
        hs.append(d)
        cs.append(c)
    rho = float(spearmanr(cs, hs)[0]) if len(cs) > 1 else float("nan")
    return TrialResult(rows, {"spearman": rho})


def weights_aggregate(cfg, results):
    raw = [r for res in results for r in res.rows]
    agg = []
    for L in sorted({r[1] for r in raw}):
        sel = [r for r in raw if r[1] == L]
        agg.append((L, *_stats([r[2] for r in sel]), *_stats([r[3] for r in sel])))
    rhos = [res.extra["spearman"] for res in results]
    summary = [f"mean_spearman = {format(float(np.mean(rhos)), '.17g')}"]
    return (
        ("trial", "L_m", "hs_distance", "curriculum_weight"), raw,
        ("L_m", "hs_mean", "hs_std", "weight_mean", "weight_std"), agg, summary,
    )


def game_trial(cfg, shared, t) -> TrialResult:
    rng, beta_seed, fixed_seed, tasks = _unitary_trial_setup(cfg, t, "game")
    main_id = tasks[-1].task_id
    target = build_xy_target(cfg.Q, cfg.L_M, cfg.L_F, beta_seed, fixed_seed)
    xt = haar_states(cfg.test_N, cfg.Q, rng, cfg.input_mode)
    test = UnitaryObjective(xt, target.apply(xt))
    weights = weight_matrix(tasks, cfg.lam)
    ids = [task.task_id for task in tasks]
    orders = {
        "qcurl": greedy_order_from_weights(ids, main_id, weights),
        "random": random_order(ids, main_id, rng),
    }
    circuit = build_hea(cfg.Q, cfg.L_E)
    init = rng.uniform(0.0, 2 * np.pi, circuit.param_count)
    rows, finals = [], {}
    for kind, order in orders.items():
        recs = run_qcurl_game(tasks, order, circuit, init, cfg.epochs_per_task, lr=cfg.lr, test=test)
        main_rec = recs[-1]
        for e in range(main_rec.epochs):
            rows.append((t, kind, e + 1, main_rec.train_loss[e], main_rec.test_loss[e]))
        finals[kind] = main_rec.test_loss[-1]
    return TrialResult(rows, {"final": finals, "orders": orders})


def game_aggregate(cfg, results):
    raw = [r for res in results for r in res.rows]
    agg = []
    for kind in ("qcurl", "random"):
        for e in range(1, cfg.epochs_per_task + 1):
            sel = [r for r in raw if r[1] == kind and r[2] == e]
            agg.append((kind, e, *_stats([r[3] for r in sel]), *_stats([r[4] for r in sel])))
    diff = [res.extra["final"]["qcurl"] - res.extra["final"]["random"] for res in results]
    m, s = _stats(diff)
    summary = [
        "epoch_semantics = epochs_per_task (each task, including the main task, "
        f"trains for {cfg.epochs_per_task} epochs)",
        f"final_test_loss_diff_mean = {format(m, '.17g')}",
        f"final_test_loss_diff_se = {format(s / math.sqrt(len(diff)), '.17g')}",
    ]
    return (
        ("trial", "order_type", "epoch", "train_loss", "test_loss"), raw,
        ("order_type", "epoch", "train_mean", "train_std", "test_mean", "test_std"), agg, summary,
    )


# ---------------------------------------------------------------- phase family

def _superloss(mode: str, gamma: float) -> SuperLossConfig | None:
    if mode == "plain":
        return None
    return SuperLossConfig(gamma if mode == "easy" else -gamma)


def _threshold(cfg) -> float:
    if cfg.label_threshold != "critical":
        return float(cfg.label_threshold)
    # string order at the exactly known transition h1 = 1, h2 = 0 for this chain
    gs = ground_state(cluster_hamiltonian(HamiltonianSpec(cfg.Q, 1.0, 0.0, cfg.boundary)))
    return abs(string_order(gs.state))


def phase_shared(cfg):
    train_set = make_phase_dataset("train", cfg.Q, cfg.boundary)
    circuit = build_qcnn(cfg.Q, cfg.variant)
    shared = {"train": train_set, "circuit": circuit}
    if cfg.experiment == "heatmap":
        grid = make_phase_dataset("heatmap_grid", cfg.Q, cfg.boundary, threshold=_threshold(cfg))
        shared["grid"] = grid
        shared["grid_states"] = np.stack([d.state for d in grid])
    else:
        test_set = make_phase_dataset("test", cfg.Q, cfg.boundary, threshold=_threshold(cfg))
        shared["test"] = ClassifierObjective(
            np.stack([d.state for d in test_set]), np.array([d.label for d in test_set]),
            circuit.readout, cfg.mu, cfg.label_map,
        )
    return shared


def _fit_modes(cfg, shared, rng, p):
    """Train every mode from the same initial point on the same corrupted labels."""
    circuit = shared["circuit"]
    data = corrupt_labels(shared["train"], p, rng)
    init = rng.normal(0.0, 0.1, circuit.param_count)
    obj = ClassifierObjective(
        np.stack([d.state for d in data]), np.array([d.label for d in data]),
        circuit.readout, cfg.mu, cfg.label_map,
    )
    for mode in cfg.modes:
        yield mode, train(
            circuit, init, obj, cfg.epochs, lr=cfg.lr, superloss=_superloss(mode, cfg.gamma),
            test=shared.get("test"), eval_every=cfg.eval_every,
        )


def phase_trial(cfg, shared, t) -> TrialResult:
    rows = []
    for k, p in enumerate(cfg.noise_grid):
        rng = substream(cfg.seed, "phase", t, k)
        for mode, rec in _fit_modes(cfg, shared, rng, p):
            rows.append((p, mode, t, rec.test_loss[-1], rec.test_accuracy[-1]))
    return TrialResult(rows)


def phase_aggregate(cfg, results):
    raw = [r for res in results for r in res.rows]
    raw.sort(key=lambda r: (r[0], cfg.modes.index(r[1]), r[2]))
    agg = []
    for p in cfg.noise_grid:
        for mode in cfg.modes:
            sel = [r for r in raw if r[0] == p and r[1] == mode]
            loss = [r[3] for r in sel]
            acc = [r[4] for r in sel]
            agg.append((p, mode, *_stats(loss), *_stats(acc), min(loss), max(acc)))
    return (
        ("p", "mode", "trial", "test_loss", "test_accuracy"), raw,
        ("p", "mode", "loss_mean", "loss_std", "accuracy_mean", "accuracy_std",
         "loss_best", "accuracy_best"), agg, [],
    )


def heatmap_trial(cfg, shared, t) -> TrialResult:
    rng = substream(cfg.seed, "heatmap", t)
    rows = []
    grid = shared["grid"]
    circuit = shared["circuit"]
    for mode, rec in _fit_modes(cfg, shared, rng, cfg.noise_p):
        out = circuit.run(shared["grid_states"], rec.params)
        q = expval_z(out, circuit.readout)
        yhat = 1.0 / (1.0 + np.exp(-cfg.mu * q))
        for d, v in zip(grid, yhat):
            rows.append((t, mode, d.params[0], d.params[1], v))
    return TrialResult(rows)


def heatmap_aggregate(cfg, results):
    raw = [r for res in results for r in res.rows]
    acc: dict = {}
    for r in raw:
        acc.setdefault((r[1], r[2], r[3]), []).append(r[4])
    agg = []
    for mode in cfg.modes:
        for (m, h1, h2), vals in acc.items():
            if m == mode:
                agg.append((mode, h1, h2, *_stats(vals)))
    return (
        ("trial", "mode", "h1", "h2", "output"), raw,
        ("mode", "h1", "h2", "output_mean", "output_std"), agg, [],
    )


def easy_hard_trial(cfg, shared, t) -> TrialResult:
    rows = []
    for k, p in enumerate(cfg.noise_grid):
        rng = substream(cfg.seed, "easy_hard", t, k)
        for mode, rec in _fit_modes(cfg, shared, rng, p):
            for e in range(rec.epochs):
                if not np.isnan(rec.test_loss[e]):
                    rows.append((p, mode, t, e + 1, rec.train_loss[e], rec.test_loss[e],
                                 rec.test_accuracy[e]))
    return TrialResult(rows)


def easy_hard_aggregate(cfg, results):
    raw = [r for res in results for r in res.rows]
    raw.sort(key=lambda r: (r[0], cfg.modes.index(r[1]), r[2], r[3]))
    groups: dict = {}
    for r in raw:
        groups.setdefault((r[0], r[1], r[3]), []).append(r)
    agg = []
    for p in cfg.noise_grid:
        for mode in cfg.modes:
            for (gp, gm, e), sel in groups.items():
                if gp == p and gm == mode:
                    agg.append((p, mode, e, *_stats([r[4] for r in sel]),
                                *_stats([r[5] for r in sel]), *_stats([r[6] for r in sel])))
    return (
        ("p", "mode", "trial", "epoch", "train_loss", "test_loss", "test_accuracy"), raw,
        ("p", "mode", "epoch", "train_mean", "train_std", "test_mean", "test_std",
         "accuracy_mean", "accuracy_std"), agg, [],
    )


@dataclass(frozen=True)
class Protocol:
    trial: Callable
    aggregate: Callable
    shared: Callable = lambda cfg: None


PROTOCOLS = {
    "weights": Protocol(weights_trial, weights_aggregate),
    "game": Protocol(game_trial, game_aggregate),
    "phase": Protocol(phase_trial, phase_aggregate, phase_shared),
    "heatmap": Protocol(heatmap_trial, heatmap_aggregate, phase_shared),
    "easy_hard": Protocol(easy_hard_trial, easy_hard_aggregate, phase_shared),
}


# ---------------------------------------------------------------- driver

def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        sha = rev.stdout.strip() if rev.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"qcurl {__version__}" + (f"+g{sha}" if sha else "")


def resolve_threads(cfg: ExperimentConfig) -> int:
    if cfg.threads:
        return cfg.threads
    env = os.environ.get("QCURL_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"QCURL_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("QCURL_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def run_trials(cfg: ExperimentConfig, threads: int | None = None) -> list[TrialResult]:
    proto = PROTOCOLS[cfg.experiment]
    shared = proto.shared(cfg)
    n = threads or resolve_threads(cfg)
    if n == 1:
        return [proto.trial(cfg, shared, t) for t in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        # map keeps trial order regardless of completion order
        return list(pool.map(lambda t: proto.trial(cfg, shared, t), range(cfg.trials)))


OUTPUT_FILES = ("raw.csv", "aggregate.csv", "manifest.txt")


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> Path:
    """Run all trials and write raw.csv, aggregate.csv and manifest.txt.

    On failure every output file written so far is removed and the error re-raised.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in OUTPUT_FILES]
    try:
        results = run_trials(cfg, threads)
        raw_head, raw, agg_head, agg, summary = PROTOCOLS[cfg.experiment].aggregate(cfg, results)
        write_csv(paths[0], raw_head, raw)
        write_csv(paths[1], agg_head, agg)
        lines = [f"version = {version_string()}", *config_lines(cfg), *summary]
        paths[2].write_text("\n".join(lines) + "\n")
    except BaseException:
        for p in paths:
            p.unlink(missing_ok=True)
        raise
    return out
