"""Experiment runners behind the CLI: trajectories, optimization and figures as files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    LadderReport,
    TrajectoryRecord,
    commensurate_ladder_state,
    compute_trajectory,
    ensemble_curves,
    ladder_report,
)
from .config import ConfigError, RunConfig
from .formulas import error_kernel
from .linalg import NumericalError, basis_state, eigendecompose_hermitian
from .models import build_model, neel_state
from .variational import (
    SpectralLoss,
    VariationalParameters,
    haar_ensemble,
    haar_random_product_state,
    optimize,
    prepare_product_state,
)

TRAJECTORY_SCHEMA = "trotterscar.trajectory/1"
BASELINE_SCHEMA = "trotterscar.baseline/1"
HISTORY_SCHEMA = "trotterscar.history/1"
FIGURE_SCHEMA = "trotterscar.figure/1"
MANIFEST_SCHEMA = "trotterscar.manifest/1"
KERNEL_ORDERS = (1, 2, 4)
FIGURES = ("echo", "error", "overlaps", "bloch")
BASELINE_CHUNK = 16


# -- file helpers ----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if not math.isfinite(x) else repr(x)


def csv_text(schema: str, columns, rows) -> str:
    """CSV with a ``# schema: ...`` first line; non-finite values become empty fields."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[str, list[str], np.ndarray]:
    """Schema tag, header and float matrix (empty fields become NaN)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema:"):
        raise ValueError(f"{path} lacks a schema header")
    schema = lines[0].split(":", 1)[1].strip()
    reader = csv.reader(lines[1:])
    header = next(reader)
    data = [[float(v) if v else math.nan for v in row] for row in reader]
    return schema, header, np.array(data, dtype=float).reshape(-1, len(header))


class RunWriter:
    """Collects artifacts in memory and writes them atomically, in name order."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def add_json(self, name: str, obj) -> None:
        self.add(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def hashes(self) -> dict[str, str]:
        return {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())}

    def commit(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            for name in sorted(self.files):
                _atomic_write(self.out / name, self.files[name].encode())
        except OSError as exc:
            raise ConfigError(f"cannot write to {self.out}: {exc}") from exc


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def manifest(command: str, cfg: RunConfig, writer: RunWriter, derived: dict, wall: float, jobs: int) -> dict:
    """Run manifest; ``manifest_hash`` covers everything except timing and runtime knobs."""
    body = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "derived": derived,
        "artifacts": writer.hashes(),
    }
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    return {**body, "manifest_hash": digest, "wall_time_s": wall, "runtime": {"jobs": jobs}}


# -- states and records ------------------------------------------------------------


def initial_state(cfg: RunConfig, ham, spec, kernel) -> np.ndarray:
    kind = cfg.state.kind
    if kind == "haar":
        return haar_random_product_state(cfg.L, np.random.SeedSequence([cfg.seed, 2]))
    if kind == "neel":
        return neel_state(cfg.L)
    if kind == "zero":
        return basis_state("0" * cfg.L)
    if kind == "product":
        return prepare_product_state(VariationalParameters(cfg.state.theta, cfg.state.phi))
    if kind == "params":
        try:
            data = json.loads(Path(cfg.state.path).read_text())
            params = VariationalParameters(data["theta"], data["phi"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"[state] path: cannot load parameters: {exc}") from exc
        if params.L != cfg.L:
            raise ConfigError(f"[state] path: parameters are for L={params.L}, config has L={cfg.L}")
        return prepare_product_state(params)
    omega = ham.model_spec.omega
    if not omega or kernel is None:
        raise ConfigError("[state] kind: 'ladder' needs a model ladder frequency and order 1, 2 or 4")
    try:
        psi, _ = commensurate_ladder_state(spec, kernel, omega, cfg.dt)
    except ValueError as exc:
        raise ConfigError(f"[state] kind: {exc}") from exc
    return psi


def trajectory_csv(record: TrajectoryRecord) -> str:
    return csv_text(TRAJECTORY_SCHEMA, record.columns(), record.rows())


def baseline_csv(times, errors, echoes) -> str:
    rows = zip(times, errors.mean(0), errors.std(0), echoes.mean(0), echoes.std(0))
    cols = ["time", "error_mean", "error_std", "loschmidt_trotter_mean", "loschmidt_trotter_std"]
    return csv_text(BASELINE_SCHEMA, cols, rows)


def _baseline(cfg, ham, spec, steps, jobs):
    states = haar_ensemble(cfg.L, cfg.baseline, np.random.SeedSequence([cfg.seed, 1]))
    # fixed chunks keep the floating-point work identical for any job count
    chunks = [np.arange(i, min(i + BASELINE_CHUNK, len(states))) for i in range(0, len(states), BASELINE_CHUNK)]

    def run(idx):
        return ensemble_curves(ham, cfg.order, cfg.dt, steps, [states[i] for i in idx], spec)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def _setup(cfg: RunConfig):
    ham = build_model(cfg.model, cfg.L, **cfg.params)
    spec = eigendecompose_hermitian(ham.dense)
    kernel = error_kernel(ham, cfg.order) if cfg.order in KERNEL_ORDERS else None
    return ham, spec, kernel


def _trajectory(cfg, ham, spec, kernel, psi0):
    return compute_trajectory(
        ham, psi0, cfg.order, cfg.dt, cfg.n_steps, cfg.stride, cfg.tracked_sites, spec, kernel
    )


def _check_finite(record: TrajectoryRecord) -> None:
    for name in ("loschmidt_exact", "loschmidt_trotter", "trotter_error"):
        if not np.all(np.isfinite(getattr(record, name))):
            raise NumericalError(f"non-finite values in {name}")


def _model_derived(ham) -> dict:
    spec = ham.model_spec
    return {"omega_model": spec.omega, "strobe_times_model": spec.strobe_times(5), "validity": spec.validity}


# -- commands -------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, jobs: int = 1) -> dict:
    start = time.perf_counter()
    ham, spec, kernel = _setup(cfg)
    psi0 = initial_state(cfg, ham, spec, kernel)
    record = _trajectory(cfg, ham, spec, kernel, psi0)
    _check_finite(record)
    report = ladder_report(spec, psi0)
    writer = RunWriter(Path(cfg.out))
    writer.add("trajectory.csv", trajectory_csv(record))
    writer.add_json("ladder.json", report.to_dict())
    derived = {**_model_derived(ham), "omega_estimated": report.omega, "strobe_times": report.strobe_times}
    if cfg.baseline:
        steps = list(range(0, cfg.n_steps + 1, cfg.stride))
        errors, echoes = _baseline(cfg, ham, spec, steps, jobs)
        writer.add("baseline.csv", baseline_csv(record.times, errors, echoes))
        derived["baseline_final_error_mean"] = float(errors[:, -1].mean())
    derived["final_error"] = float(record.trotter_error[-1])
    man = manifest("simulate", cfg, writer, derived, time.perf_counter() - start, jobs)
    writer.add_json("manifest.json", man)
    writer.commit()
    return man


def history_csv(history) -> str:
    L2 = len(history.params[0]) if history.params else 0
    L = L2 // 2
    cols = ["iteration", "loss", "error_term", "echo_term", "learning_rate"]
    cols += [f"theta_{j}" for j in range(1, L + 1)] + [f"phi_{j}" for j in range(1, L + 1)]
    rows = (
        [i, history.loss[i], history.error_term[i], history.echo_term[i], history.learning_rate[i], *history.params[i]]
        for i in range(len(history))
    )
    return csv_text(HISTORY_SCHEMA, cols, rows)


def cmd_optimize(cfg: RunConfig, jobs: int = 1) -> dict:
    start = time.perf_counter()
    ham, spec, kernel = _setup(cfg)
    loss_cfg = cfg.loss_config()
    params, history = optimize(ham, loss_cfg, cfg.optimizer_config(), jobs=jobs)
    psi_opt = prepare_product_state(params)
    total, err, echo = SpectralLoss(ham, loss_cfg)(params)
    report = ladder_report(spec, psi_opt)
    writer = RunWriter(Path(cfg.out))
    writer.add_json(
        "params.json",
        {**params.to_dict(), "loss": total, "error_term": err, "echo_term": echo, "restart": history.restart},
    )
    writer.add("history.csv", history_csv(history))
    writer.add_json("ladder.json", report.to_dict())
    optimized = _trajectory(cfg, ham, spec, kernel, psi_opt)
    reference = _trajectory(cfg, ham, spec, kernel, neel_state(cfg.L))
    _check_finite(optimized)
    writer.add("trajectory_optimized.csv", trajectory_csv(optimized))
    writer.add("trajectory_reference.csv", trajectory_csv(reference))
    derived = {
        **_model_derived(ham),
        "omega_estimated": report.omega,
        "strobe_times": report.strobe_times,
        "loss": total,
        "error_term": err,
        "echo_term": echo,
        "diagnostics": history.diagnostics,
    }
    if cfg.baseline:
        steps = list(range(0, cfg.n_steps + 1, cfg.stride))
        errors, echoes = _baseline(cfg, ham, spec, steps, jobs)
        writer.add("baseline.csv", baseline_csv(optimized.times, errors, echoes))
        mean = errors.mean(0)
        late = optimized.times > 0
        if late.any():
            derived["optimized_over_baseline"] = float(np.max(optimized.trotter_error[late] / mean[late]))
            derived["reference_over_baseline"] = float(np.mean(reference.trotter_error[late] / mean[late]))
    man = manifest("optimize", cfg, writer, derived, time.perf_counter() - start, jobs)
    writer.add_json("manifest.json", man)
    writer.commit()
    return man


def _trajectory_file(run: Path) -> Path:
    for name in ("trajectory_optimized.csv", "trajectory.csv"):
        if (run / name).is_file():
            return run / name
    raise ConfigError(f"no trajectory artifacts in {run}; run simulate or optimize first")


def figure_data(run: Path, which: str) -> tuple[list[str], np.ndarray, dict]:
    """Columns and rows exactly as plotted, plus plot labels."""
    if which == "overlaps":
        path = run / "ladder.json"
        if not path.is_file():
            raise ConfigError(f"no ladder.json in {run}; run simulate or optimize first")
        report = json.loads(path.read_text())
        rows = np.array(report["top_overlaps"], dtype=float).reshape(-1, 2)
        return ["energy", "weight"], rows, {"omega": report.get("omega")}
    _, header, data = read_csv(_trajectory_file(run))
    col = {name: i for i, name in enumerate(header)}
    t = data[:, col["time"]]
    if which == "echo":
        cols = ["time", "loschmidt_exact", "loschmidt_trotter"]
        out = [t, data[:, col["loschmidt_exact"]], data[:, col["loschmidt_trotter"]]]
        if (run / "baseline.csv").is_file():
            _, bh, bd = read_csv(run / "baseline.csv")
            cols.append("baseline_loschmidt_trotter_mean")
            out.append(bd[:, bh.index("loschmidt_trotter_mean")])
        return cols, np.column_stack(out), {}
    if which == "error":
        cols = ["time", "trotter_error", "predicted_error"]
        out = [t, data[:, col["trotter_error"]], data[:, col["predicted_error"]]]
        if (run / "baseline.csv").is_file():
            _, bh, bd = read_csv(run / "baseline.csv")
            cols.append("baseline_error_mean")
            out.append(bd[:, bh.index("error_mean")])
        if (run / "trajectory_reference.csv").is_file():
            _, rh, rd = read_csv(run / "trajectory_reference.csv")
            cols.append("reference_error")
            out.append(rd[:, rh.index("trotter_error")])
        return cols, np.column_stack(out), {}
    sites = [h.rsplit("_", 1)[1] for h in header if h.startswith("bloch_x_")]
    if not sites:
        raise ConfigError("trajectory has no tracked Bloch sites")
    s = sites[0]
    cols = ["time", f"bloch_x_{s}", f"bloch_y_{s}", f"bloch_z_{s}"]
    return cols, data[:, [col[c] for c in cols]], {"site": int(s)}


def cmd_figure(run_dir, which: str) -> tuple[Path, Path]:
    """Write ``figure_<which>.svg`` and ``figure_<which>.csv`` into the run directory."""
    from .plotting import render_figure

    if which not in FIGURES:
        raise ConfigError(f"unknown figure {which!r}; choose from {list(FIGURES)}")
    run = Path(run_dir)
    if not run.is_dir():
        raise ConfigError(f"run directory {run} does not exist")
    cols, rows, meta = figure_data(run, which)
    svg = render_figure(which, cols, rows, meta)
    writer = RunWriter(run)
    writer.add(f"figure_{which}.csv", csv_text(FIGURE_SCHEMA, cols, rows))
    writer.add(f"figure_{which}.svg", svg)
    writer.commit()
    return run / f"figure_{which}.svg", run / f"figure_{which}.csv"


def ladder_from_json(path) -> LadderReport:
    data = json.loads(Path(path).read_text())
    data["top_overlaps"] = [tuple(p) for p in data["top_overlaps"]]
    return LadderReport(**data)
