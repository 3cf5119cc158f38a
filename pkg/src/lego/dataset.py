"""Synthetic manifolds with analytic tangent/normal frames, and noise models.

Point arrays are stored row-wise: ``points[j]`` is the j-th point, so a
cloud of ``n`` points in ``R^p`` is an ``(n, p)`` array.  Ground-truth data
(clean positions, frames, intrinsic parameters) is held as stacked arrays in
:class:`CleanSamples`; indexing it yields a per-point :class:`CleanSample`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError

NOISE_KINDS = (
    "uniform_normal_interval",
    "heteroskedastic_normal_interval",
    "uniform_ball_normal",
    "isotropic_gaussian",
)


@dataclass(frozen=True)
class CleanSample:
    point: np.ndarray
    tangent_frame: np.ndarray
    normal_frame: np.ndarray
    params: np.ndarray


@dataclass(frozen=True)
class CleanSamples:
    """Ground truth for every point of a cloud.

    Attributes
    ----------
    points : (n, p) clean positions.
    tangent : (n, p, d) orthonormal tangent bases.
    normal : (n, p, p - d) orthonormal normal bases.
    params : (n, q) intrinsic coordinates.
    """

    points: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    params: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, j) -> CleanSample:
        return CleanSample(self.points[j], self.tangent[j], self.normal[j], self.params[j])

    @property
    def d(self) -> int:
        return self.tangent.shape[2]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    clean: CleanSamples | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidArgumentError(f"points must be a non-empty (n, p) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points contain non-finite coordinates")
        if self.clean is not None and len(self.clean) != pts.shape[0]:
            raise InvalidArgumentError("clean samples and points differ in length")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def transformed(self, rotation=None, translation=None) -> "PointCloud":
        """Apply ``x -> R x + t`` to points and (if present) clean frames."""
        R = np.eye(self.p) if rotation is None else np.asarray(rotation, dtype=float)
        t = np.zeros(self.p) if translation is None else np.asarray(translation, dtype=float)
        pts = self.points @ R.T + t
        clean = None
        if self.clean is not None:
            c = self.clean
            clean = CleanSamples(
                c.points @ R.T + t,
                np.einsum("ab,nbd->nad", R, c.tangent),
                np.einsum("ab,nbd->nad", R, c.normal),
                c.params,
            )
        return PointCloud(pts, clean, self.seed, dict(self.meta))


# ---------------------------------------------------------------------------
# noise level functions (named so that configs can refer to them)


def torus_level(params):
    """Heteroskedastic bound 1e-2 + 2.5e-3 (1 + cos 2u) in the first intrinsic coordinate."""
    u = np.asarray(params)[..., 0]
    return 1e-2 + 2.5e-3 * (1.0 + np.cos(2.0 * u))


LEVEL_FUNCTIONS: dict[str, Callable] = {
    "cos2u": torus_level,
}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model.

    ``scale`` multiplies every bound (``level`` or ``level_fn``); the noise
    ablation uses it to sweep a fixed noise draw from 0 to its full size.
    """

    kind: str = "uniform_normal_interval"
    level: float = 0.0
    level_fn: Callable | str | None = None
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.level < 0 or self.scale < 0:
            raise InvalidArgumentError("noise level and scale must be >= 0")
        if self.kind == "heteroskedastic_normal_interval" and self.level_fn is None:
            raise InvalidArgumentError("heteroskedastic noise requires level_fn")
        if isinstance(self.level_fn, str) and self.level_fn not in LEVEL_FUNCTIONS:
            raise InvalidArgumentError(f"unknown level_fn {self.level_fn!r}")

    def bounds(self, params) -> np.ndarray:
        """Per-point noise bound (or standard deviation for the Gaussian kind)."""
        n = np.asarray(params).shape[0]
        if self.level_fn is None:
            return np.full(n, self.scale * self.level)
        fn = LEVEL_FUNCTIONS[self.level_fn] if isinstance(self.level_fn, str) else self.level_fn
        return self.scale * np.broadcast_to(np.asarray(fn(params), dtype=float), (n,)).copy()


def apply_noise(cloud: PointCloud, spec: NoiseSpec) -> PointCloud:
    """Perturb ``cloud`` according to ``spec``; the clean samples are shared.

    Normal-direction kinds displace ``x_j = y_j + eta_j nu_j`` inside the
    normal span of the clean point.  With a multi-dimensional normal space
    the interval kinds draw ``nu_j`` uniformly on the unit normal sphere.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "isotropic_gaussian":
        params = cloud.clean.params if cloud.clean is not None else np.zeros((cloud.n, 1))
        sd = spec.bounds(params)
        pts = cloud.points + sd[:, None] * rng.standard_normal(cloud.points.shape)
        return replace(cloud, points=pts, meta={**cloud.meta, "noise": _noise_meta(spec)})

    if cloud.clean is None:
        raise InvalidStateError(f"{spec.kind} noise needs clean frames")
    c = cloud.clean
    n, k = c.normal.shape[0], c.normal.shape[2]
    if k == 0:
        raise InvalidStateError("manifold has no normal directions")
    bound = spec.bounds(c.params)

    if k == 1:
        dirs = np.ones((n, 1))
    else:
        dirs = rng.standard_normal((n, k))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if spec.kind == "uniform_ball_normal":
        if k == 1:
            coef = rng.uniform(-1.0, 1.0, n)
        else:
            coef = rng.uniform(0.0, 1.0, n) ** (1.0 / k)
    else:
        coef = rng.uniform(-1.0, 1.0, n)
    eta = coef * bound
    disp = np.einsum("npk,nk->np", c.normal, dirs * eta[:, None])
    pts = c.points + disp
    return replace(cloud, points=pts, meta={**cloud.meta, "noise": _noise_meta(spec)})


def _noise_meta(spec: NoiseSpec) -> dict:
    fn = spec.level_fn if isinstance(spec.level_fn, str) or spec.level_fn is None else getattr(spec.level_fn, "__name__", "callable")
    return {"kind": spec.kind, "level": spec.level, "level_fn": fn, "seed": spec.seed, "scale": spec.scale}


# ---------------------------------------------------------------------------
# generators


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def wave_on_circle_point(t, wave_amp, wave_freq):
    r = 1.0 + wave_amp * np.cos(wave_freq * t)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


def wave_on_circle_tangent(t, wave_amp, wave_freq):
    r = 1.0 + wave_amp * np.cos(wave_freq * t)
    dr = -wave_amp * wave_freq * np.sin(wave_freq * t)
    return _unit(np.stack([dr * np.cos(t) - r * np.sin(t), dr * np.sin(t) + r * np.cos(t)], axis=-1))


def gen_wave_on_circle(n: int = 1000, wave_amp: float = 0.1, wave_freq: int = 8, seed: int = 0,
                       sampling: str = "density") -> PointCloud:
    """Closed curve ``r(t) = 1 + a cos(k t)`` in the plane.

    ``sampling="density"`` draws ``t`` with density proportional to
    ``1 + 0.5 sin t``; ``sampling="even"`` uses ``t = 2 pi j / n``.
    """
    if n < 8:
        raise InvalidArgumentError(f"wave-on-circle needs n >= 8, got {n}")
    if sampling == "even":
        t = 2 * np.pi * np.arange(n) / n
    elif sampling == "density":
        rng = np.random.default_rng(seed)
        t = _rejection(rng, n, lambda x: (1 + 0.5 * np.sin(x)) / 1.5, 0.0, 2 * np.pi)
    else:
        raise InvalidArgumentError(f"unknown sampling {sampling!r}")
    pts = wave_on_circle_point(t, wave_amp, wave_freq)
    tan = wave_on_circle_tangent(t, wave_amp, wave_freq)
    nor = np.stack([tan[:, 1], -tan[:, 0]], axis=-1)  # outward for a counter-clockwise curve
    clean = CleanSamples(pts, tan[:, :, None], nor[:, :, None], t[:, None])
    meta = {"dataset": "wave_on_circle", "n": n, "wave_amp": wave_amp, "wave_freq": wave_freq,
            "sampling": sampling, "stand_in_constants": True}
    return PointCloud(pts.copy(), clean, seed, meta)


def _rejection(rng, n, accept_prob, lo, hi):
    out = np.empty(0)
    while out.size < n:
        x = rng.uniform(lo, hi, 2 * (n - out.size) + 16)
        keep = rng.uniform(0, 1, x.size) < accept_prob(x)
        out = np.concatenate([out, x[keep]])
    return out[:n]


SWISS_C = 1.0 / (4 * np.pi)
SWISS_THETA = (np.pi, 5 * np.pi)


def _swiss_arclength(theta):
    return 0.5 * SWISS_C * (theta * np.sqrt(theta ** 2 + 1) + np.arcsinh(theta))


def swiss_roll_length() -> float:
    return float(_swiss_arclength(SWISS_THETA[1]) - _swiss_arclength(SWISS_THETA[0]))


def swiss_roll_theta(s):
    """Invert the arclength ``s`` (measured from theta = pi) by Newton's method."""
    target = np.asarray(s, dtype=float) + _swiss_arclength(SWISS_THETA[0])
    theta = np.sqrt(2 * target / SWISS_C)
    for _ in range(50):
        step = (_swiss_arclength(theta) - target) / (SWISS_C * np.sqrt(theta ** 2 + 1))
        theta = theta - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return theta


def swiss_roll_point(theta, z):
    r = SWISS_C * theta
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.asarray(z, dtype=float) + 0 * theta], axis=-1)


def gen_swiss_roll(n: int = 10700, aspect: float = 0.06, seed: int = 0) -> PointCloud:
    """Spiral ``r = theta / 4 pi``, ``theta in [pi, 5 pi]``, extruded to height ``aspect * arclength``.

    Sampling is uniform in (arclength, height), hence uniform in area.
    ``params`` holds the isometric chart (arclength, height).
    """
    if n < 16:
        raise InvalidArgumentError(f"swiss roll needs n >= 16, got {n}")
    if aspect <= 0:
        raise InvalidArgumentError("aspect must be positive")
    rng = np.random.default_rng(seed)
    length = swiss_roll_length()
    height = aspect * length
    s = rng.uniform(0, length, n)
    z = rng.uniform(0, height, n)
    theta = swiss_roll_theta(s)
    pts = swiss_roll_point(theta, z)
    r, dr = SWISS_C * theta, SWISS_C
    t1 = _unit(np.stack([dr * np.cos(theta) - r * np.sin(theta),
                         dr * np.sin(theta) + r * np.cos(theta), np.zeros(n)], axis=-1))
    t2 = np.tile([0.0, 0.0, 1.0], (n, 1))
    nor = np.cross(t1, t2)
    tangent = np.stack([t1, t2], axis=-1)
    clean = CleanSamples(pts, tangent, nor[:, :, None], np.stack([s, z], axis=-1))
    meta = {"dataset": "swiss_roll", "n": n, "aspect": aspect, "length": length, "height": height,
            "stand_in_constants": True}
    return PointCloud(pts.copy(), clean, seed, meta)


def torus_point(u, v, R=0.35, r_minor=0.14):
    rho = R + r_minor * np.cos(v)
    return np.stack([rho * np.cos(u), rho * np.sin(u), r_minor * np.sin(v)], axis=-1)


def gen_truncated_torus(n: int = 3617, R: float = 0.35, r_minor: float = 0.14,
                        u_range=(0.0, 1.5 * np.pi), seed: int = 0) -> PointCloud:
    """Area-uniform sample of the torus patch ``u in u_range``, ``v in [0, 2 pi)``."""
    if not 0 < r_minor < R:
        raise InvalidArgumentError(f"need 0 < r_minor < R, got r_minor={r_minor}, R={R}")
    u0, u1 = float(u_range[0]), float(u_range[1])
    if not u1 > u0:
        raise InvalidArgumentError("u_range must be increasing")
    rng = np.random.default_rng(seed)
    u = rng.uniform(u0, u1, n)
    v = _rejection(rng, n, lambda x: (R + r_minor * np.cos(x)) / (R + r_minor), 0.0, 2 * np.pi)
    pts = torus_point(u, v, R, r_minor)
    tu = np.stack([-np.sin(u), np.cos(u), np.zeros(n)], axis=-1)
    tv = np.stack([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)], axis=-1)
    nor = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=-1)
    clean = CleanSamples(pts, np.stack([tu, tv], axis=-1), nor[:, :, None], np.stack([u, v], axis=-1))
    meta = {"dataset": "truncated_torus", "n": n, "R": R, "r_minor": r_minor, "u_range": [u0, u1],
            "stand_in_constants": True}
    return PointCloud(pts.copy(), clean, seed, meta)


def gen_rectangle_strip(grid_x: int = 400, grid_y: int = 9, length: float = 1.0,
                        halfwidth: float = 0.04) -> PointCloud:
    """Regular lattice on ``[0, length] x [-halfwidth, halfwidth]``.

    Point ``iy * grid_x + ix`` sits at column ``ix`` and row ``iy``.
    """
    if grid_x < 4 or grid_y < 2:
        raise InvalidArgumentError("strip needs grid_x >= 4 and grid_y >= 2")
    if length <= 0 or halfwidth <= 0:
        raise InvalidArgumentError("length and halfwidth must be positive")
    xs = np.linspace(0.0, length, grid_x)
    ys = np.linspace(-halfwidth, halfwidth, grid_y)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    n = pts.shape[0]
    clean = CleanSamples(pts, np.tile([[1.0], [0.0]], (n, 1, 1)), np.tile([[0.0], [1.0]], (n, 1, 1)), pts.copy())
    meta = {"dataset": "rectangle_strip", "grid_x": grid_x, "grid_y": grid_y, "length": length,
            "halfwidth": halfwidth}
    return PointCloud(pts.copy(), clean, 0, meta)


GENERATORS = {
    "wave_on_circle": gen_wave_on_circle,
    "swiss_roll": gen_swiss_roll,
    "truncated_torus": gen_truncated_torus,
    "rectangle_strip": gen_rectangle_strip,
}


def generate(name: str, **kwargs) -> PointCloud:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown dataset {name!r}; expected one of {sorted(GENERATORS)}") from None
    return gen(**kwargs)


# ---------------------------------------------------------------------------
# serialization


def write_cloud(cloud: PointCloud, prefix) -> dict[str, Path]:
    """Write ``<prefix>.csv``, ``<prefix>.json`` and, with ground truth, frame files."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {"points": prefix.with_suffix(".csv"), "meta": prefix.with_suffix(".json")}
    header = ",".join(f"x{i}" for i in range(cloud.p))
    np.savetxt(paths["points"], cloud.points, delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = {"seed": cloud.seed, "meta": cloud.meta, "n": cloud.n, "p": cloud.p}
    if cloud.clean is not None:
        c = cloud.clean
        paths["clean"] = prefix.parent / (prefix.name + "_clean.csv")
        paths["tangent"] = prefix.parent / (prefix.name + "_tangent.csv")
        paths["normal"] = prefix.parent / (prefix.name + "_normal.csv")
        paths["params"] = prefix.parent / (prefix.name + "_params.csv")
        np.savetxt(paths["clean"], c.points, delimiter=",", fmt="%.17g")
        np.savetxt(paths["tangent"], c.tangent.reshape(cloud.n, -1), delimiter=",", fmt="%.17g")
        np.savetxt(paths["normal"], c.normal.reshape(cloud.n, -1), delimiter=",", fmt="%.17g")
        np.savetxt(paths["params"], c.params, delimiter=",", fmt="%.17g")
        sidecar["d"] = c.d
    paths["meta"].write_text(json.dumps(sidecar, indent=2, default=_json_default))
    return paths


def read_cloud(prefix) -> PointCloud:
    prefix = Path(prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text())
    pts = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    clean = None
    if "d" in sidecar:
        n, p, d = pts.shape[0], pts.shape[1], sidecar["d"]
        load = lambda suffix: np.loadtxt(prefix.parent / (prefix.name + suffix), delimiter=",", ndmin=2)
        clean = CleanSamples(load("_clean.csv"), load("_tangent.csv").reshape(n, p, d),
                             load("_normal.csv").reshape(n, p, p - d), load("_params.csv"))
    return PointCloud(pts, clean, sidecar.get("seed", 0), sidecar.get("meta", {}))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")
