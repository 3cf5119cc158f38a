"""End-to-end runs: configuration, estimation, sweeps and the two
spectral validation experiments."""
from __future__ import annotations

import copy
import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.distance import cdist

from . import dataset as ds
from . import downstream as dn
from . import graph as gr
from . import metrics as mt
from . import spectral as sp
from . import tangent as tg
from .errors import InvalidArgumentError, LegoError, StageError

log = logging.getLogger(__name__)

DENSE_SWEEP_LIMIT = 3000


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used by the validation experiments."""

    tube_horizontal_count: int = 10
    tube_max_vertical_low: float = 0.1
    tube_vertical_threshold: float = 0.5
    tube_min_correlation: float = 0.95
    tube_ambiguity: float = 0.9
    stability_max_slope: float = -0.3
    stability_max_adjacency_exponent: float = 0.7


TOLERANCES = Tolerances()


# ---------------------------------------------------------------------------
# configuration


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["wave_on_circle", "swiss_roll", "truncated_torus", "rectangle_strip"] = "wave_on_circle"
    params: dict = Field(default_factory=dict)


class NoiseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal[ds.NOISE_KINDS] | None = "heteroskedastic_normal_interval"  # type: ignore[valid-type]
    level: float = Field(0.0, ge=0)
    level_fn: str | None = "cos2u"
    scale: float = Field(1.0, ge=0)

    @field_validator("level_fn")
    @classmethod
    def _known_level_fn(cls, v):
        if v is not None and v not in ds.LEVEL_FUNCTIONS:
            raise ValueError(f"unknown level_fn {v!r}; expected one of {sorted(ds.LEVEL_FUNCTIONS)}")
        return v


class RunConfig(BaseModel):
    """Everything needed to reproduce one estimation run."""

    model_config = ConfigDict(extra="forbid")

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    k_nn: int = Field(14, ge=1)
    kernel_k_nn: int | None = Field(None, ge=1, description="neighbors for the kernel graph (default k_nn)")
    bandwidth: float | None = Field(None, gt=0, description="explicit kernel bandwidth; heuristic when absent")
    bandwidth_scale: float = Field(1.0, gt=0, description="multiplier applied to the heuristic bandwidth")
    affinity_mode: Literal["knn_truncated", "dense"] = "knn_truncated"
    m: int = Field(20, ge=1)
    m0: int = Field(100, ge=1)
    d: int | None = Field(None, ge=1)
    f_var: float | None = Field(None, gt=0, lt=1)
    methods: list[Literal["lego", "lpca"]] = Field(default_factory=lambda: ["lego", "lpca"])
    solver: Literal["projected", "exact"] = "projected"
    eigensolver: Literal["auto", "dense", "lanczos"] = "auto"
    rcond: float = Field(1e-8, gt=0, lt=1)
    boundary_percentile: float = Field(90.0, gt=0, lt=100)
    align_iters: int = Field(10, ge=0)
    seed: int = 0
    out: str | None = None

    @field_validator("methods", mode="before")
    @classmethod
    def _split_methods(cls, v):
        if isinstance(v, str):
            v = [s.strip() for s in v.split(",") if s.strip()]
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.m > self.m0:
            raise ValueError(f"m = {self.m} exceeds m0 = {self.m0}")
        if self.d is not None and self.f_var is not None:
            raise ValueError("give at most one of d and f_var")
        if not self.methods:
            raise ValueError("methods must not be empty")
        n = self.dataset.params.get("n")
        if n is not None and self.k_nn >= n:
            raise ValueError(f"k_nn = {self.k_nn} must be < n = {n}")
        return self

    def dim_policy(self, default_d: int) -> tg.DimPolicy:
        if self.f_var is not None:
            return tg.DimPolicy(f_var=self.f_var)
        return tg.DimPolicy(d=self.d if self.d is not None else default_d)

    def noise_spec(self) -> ds.NoiseSpec | None:
        if self.noise.kind is None or self.noise.scale == 0:
            return None
        return ds.NoiseSpec(kind=self.noise.kind, level=self.noise.level, level_fn=self.noise.level_fn,
                            seed=derived_seed(self.seed, 1), scale=self.noise.scale)


PRESETS: dict[str, dict] = {
    "wave_on_circle": {
        "dataset": {"name": "wave_on_circle", "params": {"n": 1000}},
        "noise": {"kind": "heteroskedastic_normal_interval", "level_fn": "cos2u", "scale": 3.0},
        "k_nn": 14, "affinity_mode": "dense", "bandwidth_scale": 3.0, "m0": 100, "m": 20, "d": 1,
    },
    "swiss_roll": {
        "dataset": {"name": "swiss_roll", "params": {"n": 10700}},
        "noise": {"kind": "uniform_normal_interval", "level": 0.0175, "level_fn": None},
        "k_nn": 9, "m0": 100, "m": 40, "d": 2,
    },
    "truncated_torus": {
        "dataset": {"name": "truncated_torus", "params": {"n": 3617}},
        "noise": {"kind": "heteroskedastic_normal_interval", "level_fn": "cos2u"},
        "k_nn": 14, "m0": 100, "m": 20, "d": 2,
    },
}


def preset(name: str, **overrides) -> RunConfig:
    """A named configuration; ``overrides`` are merged into it (nested dicts merge too)."""
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return RunConfig.model_validate(merge(copy.deepcopy(PRESETS[name]), overrides))


def merge(base: dict, upd: dict) -> dict:
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            merge(base[k], v)
        else:
            base[k] = v
    return base


def derived_seed(seed: int, stream: int) -> int:
    """Independent integer seed for sub-stream ``stream`` of a run seed."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# estimation


@dataclass
class RunResult:
    reports: dict
    timings: dict
    config: dict
    artifacts: dict = field(default_factory=dict)
    cloud: ds.PointCloud | None = field(default=None, repr=False)
    graph: gr.NeighborhoodGraph | None = field(default=None, repr=False)
    affinity: gr.Affinity | None = field(default=None, repr=False)
    basis: sp.SpectralBasis | None = field(default=None, repr=False)
    frames: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {"reports": {k: r.summary() for k, r in self.reports.items()},
                "timings": self.timings, "artifacts": {k: str(v) for k, v in self.artifacts.items()}}


@contextmanager
def stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def make_cloud(config: RunConfig) -> ds.PointCloud:
    params = dict(config.dataset.params)
    if config.dataset.name != "rectangle_strip":
        params.setdefault("seed", derived_seed(config.seed, 0))
    cloud = ds.generate(config.dataset.name, **params)
    spec = config.noise_spec()
    return ds.apply_noise(cloud, spec) if spec is not None else cloud


def kernel_bandwidth(config: RunConfig, graph: gr.NeighborhoodGraph) -> float:
    if config.bandwidth is not None:
        return config.bandwidth
    return gr.bandwidth_heuristic(graph) * config.bandwidth_scale


def build_affinity(config: RunConfig, cloud: ds.PointCloud, graph: gr.NeighborhoodGraph) -> gr.Affinity:
    s = kernel_bandwidth(config, graph)
    if config.affinity_mode == "dense":
        return gr.gaussian_affinity(cloud, None, s, mode="dense")
    kk = config.kernel_k_nn or config.k_nn
    kgraph = graph if kk == config.k_nn else gr.knn_graph(cloud, min(kk, cloud.n - 1))
    return gr.gaussian_affinity(cloud, kgraph, s, mode="knn_truncated")


def run_estimation(config: RunConfig, cloud: ds.PointCloud | None = None, persist: bool = True) -> RunResult:
    """Graph, Laplacian, eigenbasis and tangent frames for every configured method.

    Discrepancy reports are computed when the cloud has ground truth.
    Artifacts are written under ``config.out`` when it is set and ``persist``
    is true.  Failures are re-raised as :class:`StageError` tagged with the
    stage name.
    """
    timings: dict[str, float] = {}
    if cloud is None:
        with stage("generate", timings):
            cloud = make_cloud(config)
    if config.k_nn >= cloud.n:
        raise StageError("graph", InvalidArgumentError(f"k_nn = {config.k_nn} must be < n = {cloud.n}"))
    default_d = cloud.clean.d if cloud.clean is not None else 1
    policy = config.dim_policy(default_d)
    with stage("graph", timings):
        graph = gr.knn_graph(cloud, config.k_nn)
    frames: dict[str, tg.TangentFrameSet] = {}
    aff = basis = None
    if "lego" in config.methods:
        with stage("affinity", timings):
            aff = build_affinity(config, cloud, graph)
        with stage("laplacian", timings):
            lap = gr.random_walk_laplacian(aff)
        with stage("eigensolve", timings):
            basis = sp.smallest_eigenpairs(lap, config.m0, method=config.eigensolver)
        with stage("lego", timings):
            frames["lego"] = tg.lego_frames(cloud, graph, basis, config.m, policy, config.rcond, config.solver)
    if "lpca" in config.methods:
        with stage("lpca", timings):
            frames["lpca"] = tg.lpca_frames(cloud, graph, policy)
    reports = {}
    if cloud.clean is not None:
        with stage("evaluate", timings):
            for name, f in frames.items():
                reports[name] = mt.discrepancy(f, cloud.clean.tangent)
    result = RunResult(reports, timings, config.model_dump(mode="json"), {}, cloud, graph, aff, basis, frames)
    if config.out and persist:
        with stage("persist", timings):
            persist_run(result, Path(config.out))
    return result


def persist_run(result: RunResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    art = result.artifacts
    for k, p in ds.write_cloud(result.cloud, out / "cloud").items():
        art[f"cloud_{k}"] = p
    if result.basis is not None:
        for k, p in sp.write_spectrum(result.basis, out, "spectrum").items():
            art[f"spectrum_{k}"] = p
    for name, f in result.frames.items():
        for k, p in tg.write_frames(f, out, name).items():
            art[f"{name}_{k}"] = p
    for name, rep in result.reports.items():
        for k, p in rep.write(out, name).items():
            art[f"{name}_report_{k}"] = p
    art["run"] = out / "run.json"
    art["run"].write_text(json.dumps({"config": result.config, **result.summary()}, indent=2))
    missing = [str(p) for p in art.values() if not Path(p).exists()]
    if missing:
        raise InvalidArgumentError(f"artifacts missing after write: {missing}")
    return art


def evaluate_artifacts(directory) -> dict[str, mt.DiscrepancyReport]:
    """Recompute discrepancy reports from a persisted run directory."""
    directory = Path(directory)
    if not (directory / "cloud.csv").exists() or not (directory / "cloud.json").exists():
        raise InvalidArgumentError(f"{directory} does not contain a persisted run (cloud.csv/cloud.json)")
    cloud = ds.read_cloud(directory / "cloud")
    if cloud.clean is None:
        raise InvalidArgumentError(f"{directory} has no ground-truth frames to evaluate against")
    reports = {}
    for method in ("lego", "lpca"):
        if (directory / f"{method}_profile.json").exists():
            frames = tg.read_frames(directory, method)
            reports[method] = mt.discrepancy(frames, cloud.clean.tangent)
            reports[method].write(directory, method)
    if not reports:
        raise InvalidArgumentError(f"no frame files found in {directory}")
    return reports


def run_embedding(config: RunConfig, method: str = "lego") -> tuple[RunResult, dn.RigidAlignment, np.ndarray]:
    cfg = config.model_copy(update={"methods": [method]})
    result = run_estimation(cfg)
    with stage("align", result.timings):
        views = dn.build_local_views(result.cloud, result.graph, result.frames[method])
        alignment, Z = dn.align_views(views, config.align_iters)
    if config.out:
        result.artifacts["embedding"] = dn.write_embedding(Z, Path(config.out) / f"{method}_embedding.csv")
    return result, alignment, Z


def run_boundary(config: RunConfig) -> tuple[RunResult, dict]:
    """Boundary labels from each method's frames (and from the true frames when known)."""
    cfg = config.model_copy(update={"methods": list(dict.fromkeys(["lego", *config.methods]))})
    result = run_estimation(cfg)
    with stage("boundary", result.timings):
        K = gr.sinkhorn_doubly_stochastic(result.affinity)
        reports = {name: dn.detect_boundary(result.cloud, f, K, config.boundary_percentile)
                   for name, f in result.frames.items()}
        if result.cloud.clean is not None:
            reports["true"] = dn.detect_boundary(result.cloud, result.cloud.clean.tangent, K,
                                                 config.boundary_percentile)
    summary = {"fraction": {k: float(np.mean(r.labels)) for k, r in reports.items()}}
    if "true" in reports:
        summary["jaccard_vs_true"] = {k: dn.jaccard(r.labels, reports["true"].labels)
                                      for k, r in reports.items() if k != "true"}
    if config.out:
        for k, r in reports.items():
            result.artifacts[f"boundary_{k}"] = dn.write_boundary(r, Path(config.out) / f"{k}_boundary.csv")
    return result, {"reports": reports, **summary}


# ---------------------------------------------------------------------------
# sweeps


def write_table(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    return path


def noise_ablation(config: RunConfig, sigma_grid) -> list[dict]:
    """Discrepancy per method as the configured noise is scaled by ``sigma``.

    ``sigma = 1`` is the configured noise and ``sigma = 0`` the clean
    cloud; the same random draw is reused across the grid.
    """
    sig = np.asarray(list(sigma_grid), dtype=float)
    if sig.size == 0 or np.any(np.diff(sig) < 0) or np.any(sig < 0):
        raise InvalidArgumentError("sigma grid must be non-empty, non-negative and ascending")
    rows = []
    base = config.noise.scale
    for s in sig:
        cfg = config.model_copy(update={"noise": config.noise.model_copy(update={"scale": base * float(s)}),
                                        "out": None})
        res = run_estimation(cfg)
        for method, rep in res.reports.items():
            rows.append({"sigma": float(s), "method": method, "mean": rep.mean, "median": rep.median, "p90": rep.p90})
    if config.out:
        write_table(rows, Path(config.out) / "noise_ablation.csv")
    return rows


def hyperparam_sweep(config: RunConfig, m_grid, m0_grid) -> list[dict]:
    """LEGO discrepancy over the grid of ``(m, m0)`` cells.

    Cells with ``m > m0`` are rejected individually.  The eigenbasis is
    computed once for the largest ``m0`` and truncated for smaller ones.
    """
    m_grid, m0_grid = [int(v) for v in m_grid], [int(v) for v in m0_grid]
    cells = [(m, m0) for m0 in m0_grid for m in m_grid]
    valid = [c for c in cells if 1 <= c[0] <= c[1]]
    rows = []
    if valid:
        top = max(m0 for _, m0 in valid)
        cfg = config.model_copy(update={"m0": top, "m": 1, "methods": ["lego"], "out": None})
        res = run_estimation(cfg)
        policy = cfg.dim_policy(res.cloud.clean.d if res.cloud.clean is not None else 1)
        full = res.basis
    for m, m0 in cells:
        row = {"m": m, "m0": m0}
        if not 1 <= m <= m0:
            rows.append({**row, "status": "rejected", "reason": f"m = {m} exceeds m0 = {m0}" if m > m0 else "m < 1"})
            continue
        basis = sp.SpectralBasis.from_vectors(full.eigenvectors[:, :m0], full.eigenvalues[:m0])
        frames = tg.lego_frames(res.cloud, res.graph, basis, m, policy, config.rcond, config.solver)
        rep = mt.discrepancy(frames, res.cloud.clean.tangent)
        rows.append({**row, "status": "ok", "reason": "", "mean": rep.mean, "median": rep.median, "p90": rep.p90})
    if config.out:
        write_table(rows, Path(config.out) / "hyperparam_sweep.csv")
    return rows


def relative_spread(values) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / v.mean())


# ---------------------------------------------------------------------------
# validation experiments


def _vertical_fractions(grads: np.ndarray, rel_floor: float = 1e-8) -> np.ndarray:
    """Share of squared lattice-gradient mass along ``y`` for each column; 0 for (near) constant vectors."""
    total = np.einsum("npm,npm->m", grads, grads)
    vert = np.einsum("nm,nm->m", grads[:, 1], grads[:, 1])
    out = np.zeros_like(total)
    big = total > rel_floor * np.max(total)
    out[big] = vert[big] / total[big]
    return out


def tube_spectrum_validation(grid_x: int = 400, grid_y: int = 9, length: float = 1.0, halfwidth: float = 0.04,
                             k_nn: int = 48, s: float | None = None, m0: int = 20,
                             tol: Tolerances = TOLERANCES) -> dict:
    """Low Laplacian eigenvectors on a thin rectangle against its Neumann modes.

    Each eigenvector is matched to the analytic mode ``(i, j)`` of highest
    absolute correlation; its vertical fraction is the share of its squared
    finite-difference gradient in the short direction.  Indices in the
    report are 1-based (index 1 is the constant vector).
    """
    if halfwidth / length > 0.1:
        raise InvalidArgumentError(f"aspect halfwidth/length = {halfwidth / length:.3g} exceeds 0.1")
    if m0 <= tol.tube_horizontal_count:
        raise InvalidArgumentError(f"m0 must exceed {tol.tube_horizontal_count}")
    t0 = time.perf_counter()
    cloud = ds.gen_rectangle_strip(grid_x, grid_y, length, halfwidth)
    graph = gr.knn_graph(cloud, k_nn)
    bw = s if s is not None else gr.bandwidth_heuristic(graph)
    aff = gr.gaussian_affinity(cloud, graph, bw)
    basis = sp.smallest_eigenpairs(gr.random_walk_laplacian(aff), m0)
    Phi = basis.eigenvectors
    vfrac = _vertical_fractions(mt.lattice_gradients(Phi, grid_x, grid_y, length, halfwidth))

    # candidate analytic modes covering the computed eigenvalue range
    i_max = int(np.ceil(2 * length * np.sqrt(m0))) + 2
    j_max = 3
    modes = [(i, j) for i in range(i_max + 1) for j in range(j_max + 1)]
    M = np.column_stack([mt.rectangle_mode_oracle(length, halfwidth, i, j, cloud.points).values for i, j in modes])
    Mc = M - M.mean(axis=0)
    Pc = Phi - Phi.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.abs((Pc.T @ Mc) / np.outer(np.linalg.norm(Pc, axis=0), np.linalg.norm(Mc, axis=0)))
    corr = np.nan_to_num(corr)
    scale = 4.0 / bw ** 2  # L ~ (s^2 / 4) Laplacian for the kernel exp(-|z|^2 / s^2)
    rows, ambiguous = [], []
    for k in range(m0):
        best = int(np.argmax(corr[k]))
        i, j = modes[best]
        if k == 0:
            i, j, c = 0, 0, 1.0
        else:
            c = float(corr[k, best])
            if np.sum(corr[k] > tol.tube_ambiguity) > 1:
                ambiguous.append(k + 1)
        lam_true = mt.rectangle_mode_oracle(length, halfwidth, i, j).eigenvalue
        lam_est = float(basis.eigenvalues[k] * scale)
        rel = abs(lam_est - lam_true) / lam_true if lam_true > 0 else abs(lam_est)
        rows.append({"index": k + 1, "eigenvalue": float(basis.eigenvalues[k]), "mode_i": i, "mode_j": j,
                     "correlation": c, "vertical_fraction": float(vfrac[k]), "eigenvalue_rel_error": rel})

    low = vfrac[: tol.tube_horizontal_count]
    first_vertical = next((k + 1 for k in range(m0) if vfrac[k] >= tol.tube_vertical_threshold), None)
    cos1 = np.cos(np.pi * cloud.points[:, 0] / length)
    corr2 = abs(float(np.corrcoef(Phi[:, 1], cos1)[0, 1]))
    checks = {
        "low_modes_horizontal": bool(np.all(low <= tol.tube_max_vertical_low)),
        "first_vertical_deep": first_vertical is not None and first_vertical > tol.tube_horizontal_count,
        "second_matches_cos": corr2 >= tol.tube_min_correlation,
    }
    return {"rows": rows, "max_vertical_low": float(low.max()), "first_vertical_index": first_vertical,
            "second_correlation": corr2, "ambiguous": ambiguous, "bandwidth": bw, "checks": checks,
            "passed": all(checks.values()), "runtime": time.perf_counter() - t0}


def _loglog_slope(n, y) -> float:
    return float(np.polyfit(np.log(n), np.log(y), 1)[0])


def laplacian_stability_sweep(n_grid=(250, 500, 1000, 2000), c: float = 0.01, s: float = 0.1, seed: int = 0,
                              n_seeds: int = 5, tol: Tolerances = TOLERANCES) -> dict:
    """Deviation of noisy kernel matrices from their clean counterparts as ``n`` grows.

    For each ``n`` a clean wave-on-circle sample receives isotropic Gaussian
    noise with standard deviation ``sqrt(c / (n log n))``; dense affinities
    with the same bandwidth ``s`` are built on both clouds.
    """
    n_grid = [int(v) for v in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidArgumentError("n grid must be strictly ascending")
    if max(n_grid) > DENSE_SWEEP_LIMIT:
        raise InvalidArgumentError(f"dense sweep limited to n <= {DENSE_SWEEP_LIMIT}")
    if c < 0 or s <= 0:
        raise InvalidArgumentError("need c >= 0 and s > 0")
    t0 = time.perf_counter()
    rows = []
    for rep in range(n_seeds):
        for n in n_grid:
            clean = ds.gen_wave_on_circle(n, seed=derived_seed(seed, 1000 * rep + n))
            sigma = float(np.sqrt(c / (n * np.log(n))))
            noisy = ds.apply_noise(clean, ds.NoiseSpec("isotropic_gaussian", level=sigma,
                                                       seed=derived_seed(seed + 1, 1000 * rep + n)))
            A0 = gr.gaussian_affinity(clean, None, s, mode="dense")
            A1 = gr.gaussian_affinity(noisy, None, s, mode="dense")
            L0, L1 = gr.random_walk_laplacian(A0), gr.random_walk_laplacian(A1)
            rows.append({"seed": rep, "n": n, "sigma": sigma,
                         "adjacency": float(np.linalg.norm(A1.weights - A0.weights)),
                         "kernel": float(np.linalg.norm(L1.kernel - L0.kernel)),
                         "laplacian": float(np.linalg.norm(L1.matrix - L0.matrix))})
    slopes = {}
    for key in ("adjacency", "kernel", "laplacian"):
        per_seed = []
        for rep in range(n_seeds):
            ys = [r[key] for r in rows if r["seed"] == rep]
            per_seed.append(_loglog_slope(n_grid, ys) if min(ys) > 0 else float("nan"))
        slopes[key] = float(np.median(per_seed))
    zero = c == 0
    checks = {
        "laplacian_decays": zero or slopes["laplacian"] <= tol.stability_max_slope,
        "adjacency_growth": zero or slopes["adjacency"] <= tol.stability_max_adjacency_exponent,
    }
    if zero:
        checks["exact_zero"] = all(r[k] == 0.0 for r in rows for k in ("adjacency", "kernel", "laplacian"))
    return {"rows": rows, "slopes": slopes, "checks": checks, "passed": all(checks.values()),
            "runtime": time.perf_counter() - t0}


def clean_chart_stress(Z: np.ndarray, chart: np.ndarray, sample: int = 500, seed: int = 0) -> float:
    """Relative pairwise-distance stress between an embedding and a reference chart."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(Z.shape[0], size=min(sample, Z.shape[0]), replace=False)
    D1 = cdist(Z[idx], Z[idx])
    D2 = cdist(chart[idx], chart[idx])
    return float(np.sqrt(np.sum((D1 - D2) ** 2) / np.sum(D2 ** 2)))


__all__ = [
    "RunConfig", "DatasetConfig", "NoiseConfig", "RunResult", "Tolerances", "TOLERANCES", "PRESETS", "preset",
    "run_estimation", "evaluate_artifacts", "run_embedding", "run_boundary", "noise_ablation", "hyperparam_sweep",
    "tube_spectrum_validation", "laplacian_stability_sweep", "relative_spread", "clean_chart_stress",
    "LegoError", "StageError",
]
