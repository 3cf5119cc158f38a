import json

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import spearmanr

from lego import pipeline as pl
from lego import tangent as tg
from lego.errors import InvalidArgumentError, StageError


@pytest.fixture(scope="module")
def swiss():
    return pl.run_estimation(pl.preset("swiss_roll"), persist=False)


@pytest.fixture(scope="module")
def torus():
    return pl.run_estimation(pl.preset("truncated_torus"), persist=False)


@pytest.mark.slow
def test_swiss_roll_ordering(swiss):
    assert swiss.reports["lego"].median < swiss.reports["lpca"].median


@pytest.mark.slow
def test_torus_ordering(torus):
    assert torus.reports["lego"].median < torus.reports["lpca"].median


@pytest.mark.xfail(strict=True, reason="clean-sample curvature bias pulls LEGO gradients off the surface")
def test_zero_noise_both_accurate():
    res = pl.run_estimation(pl.preset("swiss_roll", noise={"scale": 0.0}), persist=False)
    assert res.reports["lpca"].median <= 0.05
    assert res.reports["lego"].median <= 0.05


def test_config_validation():
    with pytest.raises(ValidationError):
        pl.preset("wave_on_circle", m=200)
    with pytest.raises(ValidationError):
        pl.preset("wave_on_circle", f_var=0.9)  # preset already fixes d
    with pytest.raises(ValidationError):
        pl.preset("wave_on_circle", k_nn=1000)
    with pytest.raises(ValidationError):
        pl.RunConfig.model_validate({"bogus": 1})
    with pytest.raises(InvalidArgumentError):
        pl.preset("klein")
    assert pl.RunConfig(methods="lego, lpca").methods == ["lego", "lpca"]


def test_stage_error_tag():
    cfg = pl.RunConfig(dataset={"name": "swiss_roll", "params": {"n": 10}}, k_nn=3)
    with pytest.raises(StageError) as info:
        pl.run_estimation(cfg)
    assert info.value.stage == "generate"
    assert isinstance(info.value.cause, InvalidArgumentError)


def _small_torus(**kw):
    return pl.preset("truncated_torus", dataset={"params": {"n": 600}}, m0=30, **kw)


def test_determinism():
    a = pl.run_estimation(_small_torus(), persist=False)
    b = pl.run_estimation(_small_torus(), persist=False)
    assert np.array_equal(a.cloud.points, b.cloud.points)
    for m in ("lego", "lpca"):
        assert np.array_equal(a.frames[m].projectors(), b.frames[m].projectors())
        assert np.array_equal(a.reports[m].per_point, b.reports[m].per_point)
    c = pl.run_estimation(_small_torus(seed=1), persist=False)
    assert not np.array_equal(a.cloud.points, c.cloud.points)


def test_artifact_round_trip(tmp_path):
    res = pl.run_estimation(_small_torus(out=str(tmp_path)))
    assert all(p.exists() for p in res.artifacts.values())
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["config"]["m0"] == 30
    back = pl.evaluate_artifacts(tmp_path)
    for m in ("lego", "lpca"):
        assert np.array_equal(back[m].per_point, res.reports[m].per_point)
        frames = tg.read_frames(tmp_path, m)
        assert np.array_equal(frames.projectors(), res.frames[m].projectors())


def test_evaluate_missing_dir(tmp_path):
    with pytest.raises(InvalidArgumentError):
        pl.evaluate_artifacts(tmp_path)


@pytest.fixture(scope="module")
def wave_ablation():
    return pl.noise_ablation(pl.preset("wave_on_circle"), [0.0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.slow
def test_noise_ablation_zero_row_matches_clean(wave_ablation):
    clean = pl.run_estimation(pl.preset("wave_on_circle", noise={"scale": 0.0}), persist=False)
    for row in wave_ablation:
        if row["sigma"] == 0.0:
            assert row["mean"] == clean.reports[row["method"]].mean


@pytest.mark.slow
def test_noise_ablation_trends(wave_ablation):
    lpca = [r for r in wave_ablation if r["method"] == "lpca"]
    rho = spearmanr([r["sigma"] for r in lpca], [r["mean"] for r in lpca]).statistic
    assert rho >= 0.8
    top = {r["method"]: r["mean"] for r in wave_ablation if r["sigma"] == 1.0}
    assert top["lego"] < top["lpca"]


def test_noise_ablation_grid_validation():
    with pytest.raises(InvalidArgumentError):
        pl.noise_ablation(pl.preset("wave_on_circle"), [1.0, 0.5])


def test_hyperparam_sweep_cells(tmp_path):
    rows = pl.hyperparam_sweep(_small_torus(out=str(tmp_path)), [10, 10, 40], [20, 30])
    rejected = [r for r in rows if r["status"] == "rejected"]
    assert {(r["m"], r["m0"]) for r in rejected} == {(40, 20), (40, 30)}
    assert all("exceeds" in r["reason"] for r in rejected)
    dup = [r for r in rows if r["m"] == 10 and r["m0"] == 20]
    assert len(dup) == 2 and dup[0]["median"] == dup[1]["median"]
    assert (tmp_path / "hyperparam_sweep.csv").exists()


@pytest.mark.slow
def test_swiss_roll_small_m_flag():
    # small m leaves the second tangent direction underrepresented; reported, not a hard bound
    rows = pl.hyperparam_sweep(pl.preset("swiss_roll"), [10, 20, 40], [100])
    med = {r["m"]: r["median"] for r in rows}
    elevated = {m: med[m] > med[40] for m in (10, 20)}
    print(f"swiss roll medians by m: {med}; elevated vs m=40: {elevated}")
    assert all(np.isfinite(v) for v in med.values())


def test_relative_spread():
    assert pl.relative_spread([1.0, 2.0, 3.0]) == pytest.approx(1.0)


def test_tube_validation_report():
    r = pl.tube_spectrum_validation()
    assert r["passed"], r["checks"]
    assert r["rows"][1]["mode_i"] == 1 and r["rows"][1]["mode_j"] == 0
    assert r["second_correlation"] >= 0.95
    with pytest.raises(InvalidArgumentError):
        pl.tube_spectrum_validation(halfwidth=0.2)


def test_stability_sweep_zero_noise():
    r = pl.laplacian_stability_sweep(n_grid=(100, 200), c=0.0, n_seeds=2)
    assert r["checks"]["exact_zero"]
    assert all(row["laplacian"] == 0.0 for row in r["rows"])


def test_stability_sweep_grid_validation():
    with pytest.raises(InvalidArgumentError):
        pl.laplacian_stability_sweep(n_grid=(500, 250))
    with pytest.raises(InvalidArgumentError):
        pl.laplacian_stability_sweep(n_grid=(1000, 4000))


def test_embedding_and_boundary_runs(tmp_path):
    cfg = _small_torus(out=str(tmp_path))
    res, al, Z = pl.run_embedding(cfg, "lego")
    assert Z.shape == (600, 2) and (tmp_path / "lego_embedding.csv").exists()
    assert np.all(np.diff(al.history) <= 1e-9 * al.history[0])
    _, out = pl.run_boundary(cfg)
    assert set(out["jaccard_vs_true"]) == {"lego", "lpca"}
    assert out["fraction"]["true"] == pytest.approx(0.1, abs=0.01)
    assert (tmp_path / "true_boundary.csv").exists()
