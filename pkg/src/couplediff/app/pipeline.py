"""The four batch commands.  Each returns a result object; the CLI does the printing.

All file writes happen in the calling process, after any worker processes
have returned, so output order and content are deterministic.
"""
from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..grid import ScalarField
from ..model import DiffusivityParams, LambdaField, ModelConfig
from ..operators import gradient_magnitude
from ..solver import SolverConfig, run
from ..scenarios import SCENARIOS
from ..analysis import (
    GronwallData,
    check_dissipative,
    convergence_study,
    default_gamma_grid,
    eigenmode_pair,
    epsilon_limit_study,
    fit_minimal_gamma,
    gronwall_check,
    ladyzhenskaya_check,
    sobolev_constant_estimate,
    trajectory_pair,
    zero_pair,
)
from ..analysis.inequalities import ladyzhenskaya_ok
from .config import ConfigError, RunConfig
from .images import (
    ImageBuffer,
    add_gaussian_noise,
    field_to_image,
    image_spec,
    image_to_field,
    load_image,
    psnr,
    save_image,
    synthetic_shapes,
)
from .manifest import RunManifest, digest_outputs, sha256_file


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def format_summary(summary: dict) -> str:
    """key=value lines, in insertion order."""
    return "".join(f"{k}={_cell(v)}\n" for k, v in summary.items())


def write_summary(path, summary: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_summary(summary))


# ---------------------------------------------------------------------------
# restore

def load_source(cfg: RunConfig) -> tuple[ImageBuffer, str | None]:
    """The clean image and the path it came from (None for synthetic)."""
    src = cfg["image"]["source"]
    if src is None:
        raise ConfigError("missing required key image.source")
    if src.startswith("synthetic:"):
        kind = src.split(":", 1)[1]
        if kind != "shapes":
            raise ConfigError(f"bad value for image.source: unknown synthetic image {kind!r}")
        return synthetic_shapes(cfg["image"]["size"]), None
    return load_image(src), src


def _resample_nearest(buf: ImageBuffer, nx: int, ny: int) -> ImageBuffer:
    rows = np.minimum((np.arange(ny) + 0.5) * buf.height / ny, buf.height - 1).astype(int)
    cols = np.minimum((np.arange(nx) + 0.5) * buf.width / nx, buf.width - 1).astype(int)
    return ImageBuffer.from_array(buf.pixels[np.ix_(rows, cols)], buf.maxval)


def fit_to_grid(buf: ImageBuffer, cfg: RunConfig) -> ImageBuffer:
    img = cfg["image"]
    nx = img["nx"] or buf.width
    ny = img["ny"] or buf.height
    if (nx, ny) == (buf.width, buf.height):
        return buf
    if img["resample"] != "nearest":
        raise ConfigError(f"grid size {nx}x{ny} differs from image size {buf.width}x{buf.height}; "
                          "set image.resample = nearest or drop image.nx/image.ny")
    return _resample_nearest(buf, nx, ny)


def build_model(cfg: RunConfig, spec) -> ModelConfig:
    m = cfg["model"]
    g = DiffusivityParams(m["a"], m["b"], m["c"], m["d"])
    if m["lambda"] == "constant":
        lam = LambdaField.constant(spec, m["lambda_min"])
    elif m["lambda"] == "ramp":
        lam = LambdaField.radial_ramp(spec, m["lambda_min"], m["lambda_max"])
    else:
        if not m["lambda_image"]:
            raise ConfigError("missing required key model.lambda_image (needed for model.lambda = image)")
        mask = load_image(m["lambda_image"])
        if (mask.height, mask.width) != spec.shape:
            raise ConfigError(f"bad value for model.lambda_image: mask is {mask.width}x{mask.height}, "
                              f"grid is {spec.nx}x{spec.ny}")
        lam = LambdaField.from_mask(spec, mask.pixels, m["lambda_min"])
    return ModelConfig(g, lam, m["epsilon"], m["delta"])


def build_solver(cfg: RunConfig, snapshot_stride: int = 0) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(dt=s["dt"], scheme=s["scheme"], picard_tol=s["picard_tol"], picard_max=s["picard_max"],
                        linsolve_tol=s["linsolve_tol"], linsolve_max=s["linsolve_max"],
                        snapshot_stride=snapshot_stride, face_mean=s["face_mean"])


@dataclass
class RestoreOutcome:
    clean: ImageBuffer
    noisy: ImageBuffer
    restored: ImageBuffer
    trajectory: object
    summary: dict
    source_path: str | None = None


def restore_core(cfg: RunConfig, seed: int) -> RestoreOutcome:
    """Everything ``restore`` computes, without touching the file system."""
    clean, src = load_source(cfg)
    clean = fit_to_grid(clean, cfg)
    noisy = add_gaussian_noise(clean, cfg["image"]["noise_sigma"], seed)
    spec = image_spec(noisy, cfg["image"]["spacing"])
    u0, lift = image_to_field(noisy, spec, cfg["image"]["mode"])
    v0 = gradient_magnitude(u0) if cfg["model"]["v0"] == "grad" else ScalarField.zeros(spec)
    model = build_model(cfg, spec)
    traj = run(u0, v0, cfg["solver"]["T"], model, build_solver(cfg))
    restored = field_to_image(ScalarField(spec, traj.u_snaps[-1]), lift)
    lower, integral, upper = traj.phi_bounds()
    scale = max(traj.u0_sq, 1e-300)
    p_noisy, p_restored = psnr(clean, noisy), psnr(clean, restored)
    summary = {
        "psnr_noisy": p_noisy,
        "psnr_restored": p_restored,
        "psnr_gain": p_restored - p_noisy,
        "final_time": float(traj.times[-1]),
        "steps": len(traj.times) - 1,
        "max_picard_iters": int(traj.picard_iters.max()),
        "energy_decay": float(traj.u_norm[-1] / traj.u_norm[0]) if traj.u_norm[0] > 0 else 0.0,
        "energy_ok": bool(np.all(traj.energy_lhs <= traj.energy_bound + 1e-10 * scale)),
        "phi_ok": bool(np.all(lower <= integral + 1e-8) and np.all(integral <= upper + 1e-8)),
    }
    return RestoreOutcome(clean, noisy, restored, traj, summary, src)


@dataclass
class CommandResult:
    command: str
    summary: dict
    files: list = field(default_factory=list)
    manifest: RunManifest | None = None
    ok: bool = True


def _ext(cfg: RunConfig) -> str:
    return ".png" if cfg["image"]["output_format"] == "png" else ".pgm"


def _finish(command, cfg, seed, out_dir, files, summary, inputs, t0, ok=True) -> CommandResult:
    manifest = RunManifest(command=command, config=cfg.snapshot(), seed=seed, inputs=inputs,
                           outputs=digest_outputs(out_dir, files), wall_clock_s=time.perf_counter() - t0,
                           summary=summary, version=__version__)
    manifest.write(out_dir)
    return CommandResult(command, summary, files, manifest, ok)


def cmd_restore(cfg: RunConfig, out_dir: str, seed: int | None = None) -> CommandResult:
    t0 = time.perf_counter()
    cfg.require("restore")
    seed = cfg["run"]["seed"] if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    res = restore_core(cfg, seed)
    ext = _ext(cfg)
    files = []
    for name, buf in (("clean", res.clean), ("noisy", res.noisy), ("restored", res.restored)):
        save_image(buf, os.path.join(out_dir, name + ext))
        files.append(name + ext)
    cols, rows = res.trajectory.diagnostics_rows()
    write_csv(os.path.join(out_dir, "diagnostics.csv"), cols, rows)
    files.append("diagnostics.csv")
    summary = dict(res.summary, energy_curve="diagnostics.csv")
    write_summary(os.path.join(out_dir, "summary.txt"), summary)
    files.append("summary.txt")
    src = res.source_path
    inputs = {"source": sha256_file(src)} if src else {"source": cfg["image"]["source"]}
    if cfg["model"]["lambda"] == "image":
        inputs["lambda_image"] = sha256_file(cfg["model"]["lambda_image"])
    ok = summary["energy_ok"] and summary["phi_ok"]
    return _finish("restore", cfg, seed, out_dir, files, summary, inputs, t0, ok)


# ---------------------------------------------------------------------------
# verify

def cmd_verify(cfg: RunConfig, out_dir: str, seed: int | None = None) -> CommandResult:
    t0 = time.perf_counter()
    cfg.require("verify")
    seed = cfg["run"]["seed"] if seed is None else seed
    vc = cfg["verify"]
    if vc["scenario"] not in SCENARIOS:
        raise ConfigError(f"bad value for verify.scenario: unknown scenario {vc['scenario']!r} "
                          f"(known: {', '.join(SCENARIOS)})")
    os.makedirs(out_dir, exist_ok=True)
    scenario = SCENARIOS[vc["scenario"]]
    s = scenario.setup(vc["n"])
    traj = run(s.u0, s.v0, s.T, s.model, s.solver)
    times = traj.snap_times
    amp = vc["eigen_amplitude"]
    pairs = [zero_pair(s.spec, times), eigenmode_pair(s.spec, times, amp, amp), trajectory_pair(traj)]
    if vc["inadmissible_bound"] > 0:
        p = eigenmode_pair(s.spec, times, amp, amp)
        p.bound = vc["inadmissible_bound"]
        p.source = "eigenmode(1,1)-tight-bound"
        pairs.append(p)
    grid = default_gamma_grid(vc["gamma_points"], vc["gamma_min"], vc["gamma_max"])

    files, summary, all_ok = [], {"scenario": scenario.name}, True
    warnings = []
    for idx, pair in enumerate(pairs):
        report = check_dissipative(traj, pair, vc["gamma"], s.model)
        fit = fit_minimal_gamma(traj, pair, s.model, grid)
        name = f"dissipative_{idx}.csv"
        report.to_csv(os.path.join(out_dir, name))
        files.append(name)
        key = f"pair{idx}"
        summary[f"{key}.source"] = pair.source
        summary[f"{key}.passed"] = report.ok
        summary[f"{key}.min_slack"] = report.min_slack
        summary[f"{key}.gamma_star"] = "none" if fit.gamma is None else fit.gamma
        for w in report.warnings:
            warnings.append(f"{pair.source}: {w}")
        all_ok &= report.ok and fit.gamma is not None

    # energy as a Gronwall instance: f = |u|^2, L = M = 0, chi = half the dissipation rate.
    # The full rate makes the hypothesis an equality that finite differences cannot resolve.
    gdata = GronwallData(traj.times, traj.u_norm**2, traj.dissipation, 0.0, 0.0)
    gres = gronwall_check(gdata)
    summary["gronwall_energy.status"] = gres.status
    summary["gronwall_energy.min_gap"] = float(gres.gap.min())
    all_ok &= gres.status != "fail"

    final = traj.final
    lady = [ladyzhenskaya_check(final.u), ladyzhenskaya_check(final.v)]
    summary["ladyzhenskaya.u_ratio"] = lady[0]
    summary["ladyzhenskaya.v_ratio"] = lady[1]
    summary["ladyzhenskaya.ok"] = all(ladyzhenskaya_ok(r) for r in lady)
    samples = [ScalarField(s.spec, u) for u in traj.u_snaps]
    try:
        summary["sobolev.estimate"] = sobolev_constant_estimate(samples)
    except ValueError:
        summary["sobolev.estimate"] = "none"
    summary["warnings"] = len(warnings)
    summary["all_passed"] = bool(all_ok)

    write_summary(os.path.join(out_dir, "summary.txt"), summary)
    files.append("summary.txt")
    with open(os.path.join(out_dir, "warnings.txt"), "w", encoding="utf-8") as fh:
        fh.write("".join(w + "\n" for w in warnings))
    files.append("warnings.txt")
    return _finish("verify", cfg, seed, out_dir, files, summary, {"scenario": scenario.name}, t0, all_ok)


# ---------------------------------------------------------------------------
# sweep

SWEEP_AXES = (("a", "model"), ("b", "model"), ("c", "model"), ("d", "model"),
              ("lambda_min", "model"), ("dt", "solver"), ("T", "solver"))
SWEEP_COLUMNS = ("cell",) + tuple(a for a, _ in SWEEP_AXES) + (
    "psnr_noisy", "psnr_restored", "energy_decay", "energy_ok", "phi_ok", "max_picard_iters", "status")


def sweep_cells(cfg: RunConfig) -> list[dict]:
    axes = []
    for key, sec in SWEEP_AXES:
        vals = cfg["sweep"][key] or (cfg[sec][key],)
        axes.append(vals)
    return [dict(zip((k for k, _ in SWEEP_AXES), combo)) for combo in itertools.product(*axes)]


def _sweep_job(job):
    cfg, cell, seed = job
    for key, sec in SWEEP_AXES:
        cfg = cfg.with_override(sec, key, cell[key])
    try:
        out = restore_core(cfg, seed)
    except Exception as exc:  # one bad cell must not sink the sweep; the row records it
        return {"status": f"error: {type(exc).__name__}: {exc}"}
    return dict(out.summary, status="ok")


def run_sweep(cfg: RunConfig, seed: int, workers: int) -> list[tuple]:
    cells = sweep_cells(cfg)
    jobs = [(cfg, c, seed) for c in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    for i, (cell, r) in enumerate(zip(cells, results)):
        rows.append((i, *(cell[k] for k, _ in SWEEP_AXES),
                     *(r.get(k, float("nan")) for k in SWEEP_COLUMNS[8:-1]), r["status"]))
    return rows


def cmd_sweep(cfg: RunConfig, out_dir: str, seed: int | None = None) -> CommandResult:
    t0 = time.perf_counter()
    cfg.require("sweep")
    seed = cfg["run"]["seed"] if seed is None else seed
    workers = cfg["run"]["workers"]
    os.makedirs(out_dir, exist_ok=True)
    rows = run_sweep(cfg, seed, workers)
    write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    files = ["sweep.csv"]
    summary = {"cells": len(rows), "failed_cells": sum(r[-1] != "ok" for r in rows), "workers": workers}
    if cfg["sweep"]["check_sequential"]:
        seq = run_sweep(cfg, seed, 1)
        summary["sequential_identical"] = _rows_equal(rows, seq)
    write_summary(os.path.join(out_dir, "summary.txt"), summary)
    files.append("summary.txt")
    ok = summary["failed_cells"] == 0 and summary.get("sequential_identical", True)
    return _finish("sweep", cfg, seed, out_dir, files, summary, {"source": cfg["image"]["source"]}, t0, ok)


def _rows_equal(a, b) -> bool:
    return [[_cell(x) for x in r] for r in a] == [[_cell(x) for x in r] for r in b]


# ---------------------------------------------------------------------------
# converge

def cmd_converge(cfg: RunConfig, out_dir: str, seed: int | None = None) -> CommandResult:
    t0 = time.perf_counter()
    cfg.require("converge")
    seed = cfg["run"]["seed"] if seed is None else seed
    cc = cfg["converge"]
    workers = cfg["run"]["workers"]
    for key in ("scenario", "eps_scenario"):
        if cc[key] not in SCENARIOS:
            raise ConfigError(f"bad value for converge.{key}: unknown scenario {cc[key]!r}")
    os.makedirs(out_dir, exist_ok=True)
    conv = convergence_study(SCENARIOS[cc["scenario"]], cc["levels"], cc["base"], cc["dt_refine"], workers)
    eps = epsilon_limit_study(SCENARIOS[cc["eps_scenario"]], cc["eps"], cc["eps_n"], workers)

    err_h = conv.h if conv.mode == "exact" else conv.h[:-1]
    rows = [(i, err_h[i], conv.dt[i], conv.errors[i], conv.orders[i - 1] if i else float("nan"))
            for i in range(len(conv.errors))]
    write_csv(os.path.join(out_dir, "convergence.csv"), ("level", "h", "dt", "error", "order"), rows)
    eps_rows = [(i, eps.eps[i], eps.u_diff[i], eps.v_diff[i]) for i in range(len(eps.u_diff))]
    write_csv(os.path.join(out_dir, "epsilon_limit.csv"), ("index", "eps", "u_diff", "v_diff"), eps_rows)
    summary = {"scenario": cc["scenario"], "mode": conv.mode}
    summary.update({f"order[{i}]": o for i, o in enumerate(conv.orders)})
    summary["eps_scenario"] = cc["eps_scenario"]
    summary["eps_strictly_decreasing"] = eps.strictly_decreasing
    write_summary(os.path.join(out_dir, "summary.txt"), summary)
    files = ["convergence.csv", "epsilon_limit.csv", "summary.txt"]
    return _finish("converge", cfg, seed, out_dir, files, summary, {"scenario": cc["scenario"]}, t0,
                   eps.strictly_decreasing)


COMMANDS = {"restore": cmd_restore, "verify": cmd_verify, "sweep": cmd_sweep, "converge": cmd_converge}


def replay(manifest_path, out_dir) -> tuple[bool, dict]:
    """Re-run a manifest's command with its config and seed; compare output digests.

    Returns (identical, {file: (recorded, replayed)} for every mismatch).
    """
    manifest = RunManifest.read(manifest_path)
    cfg = manifest.run_config()
    result = COMMANDS[manifest.command](cfg, out_dir, manifest.seed)
    new = result.manifest.outputs
    diff = {k: (manifest.outputs.get(k), new.get(k)) for k in set(manifest.outputs) | set(new)
            if manifest.outputs.get(k) != new.get(k)}
    return not diff, diff
