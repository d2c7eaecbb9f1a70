"""Config-driven experiments: simulate, estimate, track Phi, bound, report."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .errors import ConfigError, SGLabError
from .estimator import EstimatorState, condition_a_diagnostic, estimation_error, run_regression, sg_update
from .excitation import ExcitationSpec, adversarial_regressors, design_regressors, measure_kappa_profile
from .model import ArmaxSystem, NoiseModel, SimulationTrace, check_spr, generate_noise, simulate_step
from .schedule import factorial_schedule, write_schedule_csv
from .spectral import spectral_norm
from .transition import TransitionTracker, write_norm_series

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- config


@dataclass
class ExcitationConfig:
    dim: int = 2
    alpha: float = 0.5
    step_energy: float = 1.0
    beta: float = 0.5
    mode: str = "direct-regressor"


@dataclass
class SystemConfig:
    d: int = 1
    l: int = 1
    A: list = field(default_factory=list)
    B: list = field(default_factory=list)
    C: list = field(default_factory=list)


@dataclass
class InputConfig:
    kind: str = "gaussian"  # gaussian | rademacher
    scale: float = 1.0


@dataclass
class NoiseConfig:
    kind: str = "gaussian"
    c0: float = 0.01
    epsilon: float = 0.0


@dataclass
class EmitConfig:
    trace: bool = False
    estimator: bool = True
    kappa: bool = True
    phi_norm: bool = True
    schedule: bool = True
    criterion: bool = True
    ledger: bool = True
    block_bounds: bool = True
    plots: bool = True


@dataclass
class ExperimentConfig:
    name: str = "run"
    mode: str = "direct-regressor"  # direct-regressor | armax
    seed: int = 0
    horizon: int = 100_000
    stride: int = 100
    theta: list | None = None
    theta0: list | None = None
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    system: SystemConfig | None = None
    input: InputConfig = field(default_factory=InputConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    schedule_mode: str = "factorial"
    spr_policy: str = "warn"  # warn | gate | ignore
    emit: EmitConfig = field(default_factory=EmitConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {
    "excitation": ExcitationConfig,
    "system": SystemConfig,
    "input": InputConfig,
    "noise": NoiseConfig,
    "emit": EmitConfig,
}


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path or "<root>")
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", f"{path}.{unknown[0]}" if path else unknown[0])
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        default = names[key].default
        if cls is ExperimentConfig and key in _NESTED and value is not None:
            kwargs[key] = _build(_NESTED[key], value, sub)
        else:
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError("expected a boolean", sub)
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError("expected a number", sub)
                if isinstance(default, int) and not isinstance(value, int):
                    raise ConfigError("expected an integer", sub)
            if isinstance(default, str) and not isinstance(value, str):
                raise ConfigError("expected a string", sub)
            kwargs[key] = value
    return cls(**kwargs)


def parse_config(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}", str(path)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from None
    return parse_config(data)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.mode not in ("direct-regressor", "armax"):
        raise ConfigError(f"unknown mode {cfg.mode!r}", "mode")
    if cfg.horizon < 100:
        raise ConfigError("horizon must be >= 100", "horizon")
    if cfg.stride < 1:
        raise ConfigError("stride must be >= 1", "stride")
    if cfg.schedule_mode != "factorial":
        raise ConfigError("only the factorial schedule is supported", "schedule_mode")
    if cfg.spr_policy not in ("warn", "gate", "ignore"):
        raise ConfigError(f"unknown policy {cfg.spr_policy!r}", "spr_policy")
    if cfg.input.kind not in ("gaussian", "rademacher"):
        raise ConfigError(f"unknown input kind {cfg.input.kind!r}", "input.kind")
    if cfg.mode == "armax" and cfg.system is None:
        raise ConfigError("armax mode needs a system block", "system")
    try:
        ExcitationSpec(dim=cfg.excitation.dim, alpha=cfg.excitation.alpha, horizon=cfg.horizon,
                       step_energy=cfg.excitation.step_energy, beta=cfg.excitation.beta,
                       mode=cfg.excitation.mode)
        NoiseModel(c0=cfg.noise.c0, epsilon=cfg.noise.epsilon, kind=cfg.noise.kind)
        if cfg.system is not None:
            _system(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "system") from None


def _system(cfg: ExperimentConfig) -> ArmaxSystem:
    s = cfg.system
    return ArmaxSystem(d=s.d, l=s.l, A=tuple(s.A), B=tuple(s.B), C=tuple(s.C))


# ---------------------------------------------------------------- running


@dataclass
class RunSummary:
    name: str
    mode: str
    alpha: float
    seed: int
    horizon: int
    final_theta_err: float
    final_phi_norm: float
    kappa_ratio_min: float
    kappa_ratio_max: float
    kappa_envelope_M: float
    schedule_blocks: int
    criterion_final: float
    criterion_last_increment: float
    criterion_dk_final: float
    ledger_pass: int
    ledger_fail: int
    block_bound_violations: int
    spr_ok: bool
    condition_a_delta: float
    wall_time_s: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


@dataclass
class RunData:
    """Everything the bound stages need from the simulation stage."""

    phis: np.ndarray  # phi_0..phi_N
    rs: np.ndarray  # r_0..r_N
    eps: np.ndarray  # eps_0..eps_N
    theta_true: np.ndarray
    record_n: np.ndarray
    theta_err: np.ndarray
    residual_norm: np.ndarray
    final_theta_err: float
    spr_ok: bool = True
    trace: SimulationTrace | None = None


def _rngs(seed: int):
    design, noise, inputs = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(design), np.random.default_rng(noise), np.random.default_rng(inputs)


def _noise_model(cfg) -> NoiseModel:
    return NoiseModel(c0=cfg.noise.c0, epsilon=cfg.noise.epsilon, kind=cfg.noise.kind, seed=cfg.seed)


def design_for(cfg: ExperimentConfig, rng=None) -> np.ndarray:
    ex = cfg.excitation
    spec = ExcitationSpec(dim=ex.dim, alpha=ex.alpha, horizon=cfg.horizon, step_energy=ex.step_energy,
                          beta=ex.beta, mode=ex.mode)
    rng = _rngs(cfg.seed)[0] if rng is None else rng
    if spec.alpha > 1:
        return adversarial_regressors(spec, rng)
    return design_regressors(spec, rng)


def _noise_batch(nm: NoiseModel, r_prev, rng, d):
    r_prev = np.asarray(r_prev, dtype=float)
    if nm.kind == "zero":
        return np.zeros((len(r_prev), d))
    sd = np.sqrt(nm.c0 * r_prev**nm.epsilon / d)[:, None]
    if nm.kind == "gaussian":
        return rng.standard_normal((len(r_prev), d)) * sd
    return rng.uniform(-1.0, 1.0, (len(r_prev), d)) * math.sqrt(3.0) * sd


def simulate_direct(cfg: ExperimentConfig) -> RunData:
    """Linear regression y_{n+1} = theta^T phi_n + w_{n+1} over designed regressors."""
    rng_design, rng_noise, _ = _rngs(cfg.seed)
    phis = design_for(cfg, rng_design)
    m = phis.shape[1]
    theta = (np.ones((m, 1)) / math.sqrt(m) if cfg.theta is None
             else np.array(cfg.theta, dtype=float).reshape(m, -1))
    d = theta.shape[1]
    rs = 1.0 + np.concatenate([[0.0], np.cumsum(np.sum(phis[1:] ** 2, axis=1))])
    w = np.zeros((len(phis), d))
    w[1:] = _noise_batch(_noise_model(cfg), rs[:-1], rng_noise, d)
    ys = phis[:-1] @ theta + w[1:]
    run = run_regression(phis, ys, theta, theta0=cfg.theta0, stride=cfg.stride)
    return RunData(phis, run.rs, w, theta, run.record_n, run.theta_err, run.residual_norm,
                   estimation_error(run.theta, theta))


def simulate_armax(cfg: ExperimentConfig) -> RunData:
    """Closed ARMAX simulation with the SG estimator in the loop."""
    sys = _system(cfg)
    spr = check_spr(sys)
    if not spr.is_spr:
        msg = f"C(z) - I/2 is not SPR (min eigenvalue {spr.min_real_eig:.4g} at w={spr.argmin_freq:.4g})"
        if cfg.spr_policy == "gate":
            raise ConfigError(msg, "system.C")
        if cfg.spr_policy == "warn":
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    _, rng_noise, rng_input = _rngs(cfg.seed)
    nm = _noise_model(cfg)

    def draw_u():
        if cfg.input.kind == "rademacher":
            return cfg.input.scale * rng_input.choice((-1.0, 1.0), size=sys.l)
        return cfg.input.scale * rng_input.standard_normal(sys.l)

    theta_true = sys.theta()
    state = EstimatorState.for_system(sys, theta0=cfg.theta0)
    trace = SimulationTrace.start(sys)
    n_steps = cfg.horizon
    phis = np.zeros((n_steps + 1, sys.regressor_dim))
    rs = np.zeros(n_steps + 1)
    rec_n, errs, res = [], [], []
    u = draw_u()
    for n in range(n_steps):
        phis[n] = state.phi
        rs[n] = state.r
        w = generate_noise(nm, state.r, rng_noise, sys.d)
        y = simulate_step(sys, trace, u, w)
        u = draw_u()
        err_before = estimation_error(state, theta_true) if n % cfg.stride == 0 else None
        sg_update(state, y, u)
        if err_before is not None:
            rec_n.append(n)
            errs.append(err_before)
            res.append(float(np.linalg.norm(state.last_residual)))
    phis[n_steps] = state.phi
    rs[n_steps] = state.r
    return RunData(phis, rs, np.asarray(trace.eps), theta_true, np.array(rec_n), np.array(errs),
                   np.array(res), estimation_error(state, theta_true), spr.is_spr, trace)


def track_transition(phis, rs, stride: int, block_starts=()):
    """Norm series of Phi(n, 0) at the stride, plus Phi(t_k, t_{k-1}) for each block."""
    tracker = TransitionTracker.start(phis.shape[1], anchors=(0,))
    starts = sorted(set(block_starts))
    for t in starts:
        if t > 0:
            tracker.add_anchor(t)
        elif t == 0 and 0 not in tracker.products:
            tracker.add_anchor(0)
    # block k runs from starts[i] to starts[i + 1]
    block_end = {starts[i + 1]: starts[i] for i in range(len(starts) - 1)}
    series = [(0, 0, 1.0)]
    block_norm_sq = {}
    n_total = len(phis) - 1
    for n in range(n_total):
        tracker.step(phis[n], rs[n])
        cur = tracker.n
        if cur in block_end:
            a = block_end[cur]
            prod = tracker.products[a] if a == 0 else tracker.drop_anchor(a)
            block_norm_sq[(a, cur)] = spectral_norm(prod) ** 2
        if cur % stride == 0 or cur == n_total:
            series.append((cur, 0, tracker.exact_norm(0)))
    return series, block_norm_sq


def _write_estimator_csv(path, data: RunData) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n", "r_n", "theta_err", "residual_norm"])
        for n, e, rn in zip(data.record_n, data.theta_err, data.residual_norm):
            out.writerow([int(n), repr(float(data.rs[n])), repr(float(e)), repr(float(rn))])
        out.writerow([len(data.rs) - 1, repr(float(data.rs[-1])), repr(float(data.final_theta_err)), ""])


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunSummary:
    """Run the full pipeline; write CSVs, ledger and summary.json into ``out_dir``.

    A numeric failure mid-run leaves the outputs produced so far plus an
    ``error.json`` record, then re-raises.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    stage = "simulate"
    try:
        data = simulate_direct(cfg) if cfg.mode == "direct-regressor" else simulate_armax(cfg)
        if out is not None and cfg.emit.estimator:
            _write_estimator_csv(out / "estimator.csv", data)
        if out is not None and cfg.emit.trace:
            _write_trace(out / "trace.csv", cfg, data)

        stage = "schedule"
        alpha = cfg.excitation.alpha
        sched = factorial_schedule(data.rs)
        if out is not None and cfg.emit.schedule:
            write_schedule_csv(out / "schedule.csv", sched, data.rs)

        stage = "transition"
        series, block_norm_sq = track_transition(data.phis, data.rs, cfg.stride,
                                                 block_starts=sched.t)
        if out is not None and cfg.emit.phi_norm:
            write_norm_series(out / "phi_norm.csv", series)

        stage = "kappa"
        profile = measure_kappa_profile(data.phis[1:], stride=cfg.stride, alpha=alpha)
        if out is not None and cfg.emit.kappa:
            profile.to_csv(out / "kappa.csv")
        late = profile.n >= cfg.horizon // 10
        ratios = profile.ratio[late & np.isfinite(profile.ratio)]

        stage = "bounds"
        general = bnd.criterion_partial_sums(data.phis, data.rs, sched, "general-mu")
        dk = bnd.criterion_partial_sums(data.phis, data.rs, sched, "dk")
        if out is not None and cfg.emit.criterion:
            bnd.write_criterion_csv(out / "criterion.csv", general, dk)
        M = bnd.envelope_constant(data.phis, data.rs, alpha, sched, profile)
        ledger = bnd.main_theorem_ledger(data.phis, data.rs, sched, alpha, M) if math.isfinite(M) else []
        if out is not None and cfg.emit.ledger:
            bnd.write_ledger(ledger, out / "ledger.csv", out / "ledger.json")
        normalized = bnd.normalize(data.phis, data.rs)
        weights = bnd.WeightScheme.r_weighted(data.rs)
        reports = [bnd.theorem_bound(normalized, weights, a, b, exact_norm_sq=block_norm_sq[(a, b)])
                   for (a, b) in sorted(block_norm_sq) if b > a]
        if out is not None and cfg.emit.block_bounds:
            bnd.write_block_reports(out / "block_bounds.csv", reports)

        stage = "condition-a"
        try:
            delta = condition_a_diagnostic(data.phis, data.rs, data.eps, stride=cfg.stride).delta_fit
        except SGLabError:
            delta = math.nan

        summary = RunSummary(
            name=cfg.name, mode=cfg.mode, alpha=alpha, seed=cfg.seed, horizon=cfg.horizon,
            final_theta_err=float(data.final_theta_err),
            final_phi_norm=float(series[-1][2]),
            kappa_ratio_min=float(ratios.min()) if len(ratios) else math.nan,
            kappa_ratio_max=float(ratios.max()) if len(ratios) else math.nan,
            kappa_envelope_M=float(M),
            schedule_blocks=len(general),
            criterion_final=general[-1].partial_sum if general else 0.0,
            criterion_last_increment=general[-1].term if general else math.nan,
            criterion_dk_final=dk[-1].partial_sum if dk else 0.0,
            ledger_pass=sum(r.passed for r in ledger),
            ledger_fail=sum(not r.passed for r in ledger),
            block_bound_violations=sum(not r.holds for r in reports),
            spr_ok=bool(data.spr_ok),
            condition_a_delta=float(delta),
            wall_time_s=round(time.perf_counter() - t0, 3),
        )
    except (SGLabError, ArithmeticError, FloatingPointError) as exc:
        if out is not None and not isinstance(exc, ConfigError):
            with open(out / "error.json", "w") as fh:
                json.dump({"stage": stage, "type": type(exc).__name__, "message": str(exc)}, fh, indent=1)
        raise
    if out is not None:
        with open(out / "summary.json", "w") as fh:
            json.dump(summary.to_dict(), fh, indent=1)
        if cfg.emit.plots:
            emit_plots(out, alpha=alpha)
    return summary


def _write_trace(path, cfg, data: RunData) -> None:
    if data.trace is not None:
        data.trace.to_csv(path)
        return
    # direct mode: the input is the regressor itself
    tr = SimulationTrace(d=data.theta_true.shape[1], l=data.phis.shape[1])
    ys = np.zeros((len(data.phis), tr.d))
    ys[1:] = data.phis[:-1] @ data.theta_true + data.eps[1:]
    tr.y, tr.u, tr.w = list(ys), list(data.phis[:-1]), list(data.eps)
    tr.to_csv(path)


# ---------------------------------------------------------------- plots


_PLOTS = {
    "theta_err.gp": ("estimator.csv", "theta_err", """\
set datafile separator ','
set logscale xy
set xlabel 'n'
set ylabel '||theta_n - theta||'
set key off
plot 'estimator.csv' every ::1 using ($1 > 0 ? $1 : NaN):3 with lines
"""),
    "phi_norm.gp": ("phi_norm.csv", "phi_norm", """\
set datafile separator ','
set logscale x
set xlabel 'n'
set ylabel '||Phi(n,0)||'
set key off
plot 'phi_norm.csv' every ::1 using ($1 > 0 ? $1 : NaN):3 with lines
"""),
    "kappa.gp": ("kappa.csv", "kappa", """\
set datafile separator ','
set xlabel '(log r_n)^alpha'
set ylabel 'kappa(S_n)'
set key off
plot 'kappa.csv' every ::1 using 4:3 with lines
"""),
    "criterion.gp": ("criterion.csv", "criterion", """\
set datafile separator ','
set xlabel 'K'
set ylabel 'partial sum'
set key left top
plot 'criterion.csv' every ::1 using 1:6 with linespoints title 'general', \\
     'criterion.csv' every ::1 using 1:8 with linespoints title 'D_k'
"""),
}


def emit_plots(run_dir, alpha: float | None = None) -> list:
    """Write gnuplot scripts next to the CSVs they read; missing CSVs are skipped."""
    run_dir = Path(run_dir)
    written = []
    for script, (source, stem, body) in _PLOTS.items():
        if not (run_dir / source).exists():
            warnings.warn(f"{source} missing in {run_dir}; skipping {script}", RuntimeWarning, stacklevel=2)
            continue
        header = f"# run from inside the run directory: gnuplot {script}\n"
        header += "set terminal pngcairo size 800,600\n"
        header += f"set output '{stem}.png'\n"
        if alpha is not None and script == "kappa.gp":
            header += f"set title 'alpha = {alpha:g}'\n"
        (run_dir / script).write_text(header + body)
        written.append(run_dir / script)
    return written


# ---------------------------------------------------------------- comparison


def _without_alpha(cfg: ExperimentConfig) -> dict:
    d = copy.deepcopy(cfg.to_dict())
    d.pop("name")
    d["excitation"].pop("alpha")
    return d


def _run_one(args):
    cfg, out = args
    return run_experiment(cfg, out).to_dict()


def compare_regimes(cfgs, out_dir=None, workers: int | None = None) -> list:
    """Run configs that differ only in alpha; one row per config, in input order."""
    cfgs = list(cfgs)
    if len(cfgs) < 2:
        raise ConfigError("comparison needs at least two configs", "configs")
    base = _without_alpha(cfgs[0])
    for i, c in enumerate(cfgs[1:], start=1):
        if _without_alpha(c) != base:
            raise ConfigError("configs may differ only in excitation.alpha", f"configs[{i}]")
    out = Path(out_dir) if out_dir is not None else None
    jobs = [(c, None if out is None else out / f"{i:02d}_alpha_{c.excitation.alpha:g}") for i, c in enumerate(cfgs)]
    if workers is None:
        workers = int(os.environ.get("SG_LAB_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    table = [{
        "alpha": r["alpha"],
        "final_phi_norm": r["final_phi_norm"],
        "final_theta_err": r["final_theta_err"],
        "criterion_final": r["criterion_final"],
        "criterion_last_increment": r["criterion_last_increment"],
        "criterion_dk_final": r["criterion_dk_final"],
    } for r in results]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(table[0]))
            w.writeheader()
            for row in table:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return table
