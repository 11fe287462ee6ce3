import numpy as np
import pytest

from fuselens.autodiff import ShapeError, Tensor
from fuselens.checkpoint import load_checkpoint
from fuselens.data import SyntheticSpec, synth_pairs
from fuselens.losses import LossConfig, LossReport
from fuselens.models import build_model
from fuselens.optim import Adam
from fuselens.training import (
    LOSS_CSV_HEADER,
    SweepRow,
    TrainingDivergedError,
    TrainRunConfig,
    _ensure_finite,
    best_balance,
    loss_csv,
    sweep,
    sweep_csv,
    train,
)

import oracles


def _dataset(n=2, res=32, seed=0):
    pairs = synth_pairs(SyntheticSpec(resolution=res, rng_seed=seed), n)
    return [(p.x1, p.x2) for p in pairs]


# ------------------------------------------------------------------- Adam

def test_adam_zero_gradient_is_identity():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p])
    opt.step({p: np.zeros(2)})
    opt.step({})  # missing gradient counts as zero
    assert p.data.tolist() == [1.0, -2.0]
    assert np.all(opt.m[0] == 0.0) and np.all(opt.v[0] == 0.0)


def test_adam_first_step_magnitude():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.002)
    opt.step({p: np.array([1.0])})
    # bias correction makes the first step -lr * 1/(1 + eps)
    assert abs(p.data[0] - (-0.002 / (1.0 + 1e-8))) < 1e-18


def test_adam_first_step_opposes_gradient_sign():
    rng = np.random.default_rng(0)
    g = rng.normal(0, 1, 16)
    g[np.abs(g) < 1e-3] = 1.0
    p = Tensor(np.zeros(16), requires_grad=True)
    opt = Adam([p])
    opt.step({p: g})
    assert np.all(np.sign(p.data) == -np.sign(g))


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(1)
    p0 = rng.normal(0, 1, (3, 4))
    p = Tensor(p0.copy(), requires_grad=True)
    opt = Adam([p], lr=0.01)
    want, m, v = p0.copy(), np.zeros((3, 4)), np.zeros((3, 4))
    for t in range(1, 8):
        g = rng.normal(0, 1, (3, 4))
        opt.step({p: g})
        want, m, v = oracles.adam_step_ref(want, g, m, v, t, lr=0.01)
        assert np.allclose(p.data, want, atol=1e-15)


def test_adam_shape_mismatch():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p])
    with pytest.raises(ShapeError):
        opt.step({p: np.zeros(4)})
    with pytest.raises(ValueError):
        Adam([p], lr=0.0)


# ------------------------------------------------------------------ train

def test_train_rejects_parameterless_model():
    with pytest.raises(ValueError):
        train(build_model("WeightedAveraging"), _dataset(),
              TrainRunConfig(epochs=1), LossConfig())


def test_train_run_config_validation():
    with pytest.raises(ValueError):
        TrainRunConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainRunConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainRunConfig(learning_rate=0.0)


def test_train_one_epoch_smoke():
    model = build_model("DeepFuse", seed=1)
    result = train(model, _dataset(2), TrainRunConfig(epochs=1, rng_seed=5), LossConfig())
    assert len(result.history) == 1
    assert result.history[0].is_finite()


def test_train_requires_data_and_uniform_shapes():
    model = build_model("DeepFuse", seed=1)
    with pytest.raises(ValueError):
        train(model, [], TrainRunConfig(epochs=1), LossConfig())
    mixed = [(np.zeros((32, 32)), np.zeros((32, 32))),
             (np.zeros((33, 33)), np.zeros((33, 33)))]
    with pytest.raises(ValueError):
        train(model, mixed, TrainRunConfig(epochs=1), LossConfig())


def test_train_determinism_bit_exact(tmp_path):
    histories = []
    blobs = []
    for run in range(2):
        model = build_model("DeepFuse", seed=3)
        path = tmp_path / f"run{run}.ckpt"
        res = train(model, _dataset(2, seed=2),
                    TrainRunConfig(epochs=3, rng_seed=9), LossConfig(0.9, 0.5, 0.5),
                    checkpoint_path=path)
        histories.append(res.history)
        blobs.append(path.read_bytes())
    for ra, rb in zip(histories[0], histories[1]):
        assert ra == rb
    assert blobs[0] == blobs[1]
    text = loss_csv(histories[0])
    assert "np.float64" not in text  # rows must be plain decimal literals


def test_train_loss_decreases_quickly():
    model = build_model("DeepFuse", seed=4)
    res = train(model, _dataset(2, seed=1),
                TrainRunConfig(epochs=8, rng_seed=0), LossConfig(0.99, 0.5, 0.5))
    assert res.history[-1].l_total < res.history[0].l_total


def test_train_writes_checkpoint_with_metadata(tmp_path):
    model = build_model("DeepFuse", seed=6)
    path = tmp_path / "m.ckpt"
    run_cfg = TrainRunConfig(epochs=2, rng_seed=7)
    train(model, _dataset(2), run_cfg, LossConfig(0.8, 0.4, 0.6), checkpoint_path=path)
    loaded, meta = load_checkpoint(path)
    assert loaded.name == "DeepFuse"
    assert meta["epochs"] == "2"
    assert meta["seed"] == "7"
    assert meta["lambda"] == "0.8"
    assert meta["loss_history"].count(";") == 1  # 2 epochs -> 2 rows
    assert np.array_equal(loaded.fuse(_tensor_pair()[0], _tensor_pair()[1]).data,
                          model.fuse(_tensor_pair()[0], _tensor_pair()[1]).data)


def _tensor_pair():
    rng = np.random.default_rng(42)
    return (Tensor(rng.uniform(0, 1, (1, 1, 32, 32))),
            Tensor(rng.uniform(0, 1, (1, 1, 32, 32))))


def test_ensure_finite_names_epoch():
    bad = LossReport(0.1, 0.1, 0.1, 0.1, 0.1, 0.1, float("nan"))
    with pytest.raises(TrainingDivergedError) as e:
        _ensure_finite(bad, 17)
    assert e.value.epoch == 17
    assert "17" in str(e.value)


def test_epoch_reports_satisfy_exact_composition():
    model = build_model("DeepFuse", seed=8)
    cfg = LossConfig(0.75, 0.3, 0.8)
    res = train(model, _dataset(3), TrainRunConfig(epochs=2, batch_size=2), cfg)
    for r in res.history:
        l_ssim = cfg.gamma_ssim * r.l_ssim_mri + (1 - cfg.gamma_ssim) * r.l_ssim_pet
        l_l2 = cfg.gamma_l2 * r.l_l2_mri + (1 - cfg.gamma_l2) * r.l_l2_pet
        assert abs(r.l_total - (cfg.lambda_weight * l_ssim
                                + (1 - cfg.lambda_weight) * l_l2)) <= 1e-15


def test_loss_csv_format():
    history = [LossReport(0.5, 0.4, 0.03, 0.02, 0.45, 0.025, 0.44),
               LossReport(0.4, 0.3, 0.02, 0.01, 0.35, 0.015, 0.34)]
    text = loss_csv(history)
    lines = text.strip().split("\n")
    assert lines[0] == LOSS_CSV_HEADER
    assert lines[0] == "epoch,l_ssim_mri,l_ssim_pet,l_l2_mri,l_l2_pet,l_total"
    assert len(lines) == 3
    assert lines[1].startswith("1,0.5,0.4,0.03,0.02,")
    assert lines[2].split(",")[0] == "2"


# ------------------------------------------------------------------ sweep

def test_sweep_single_cell_matches_direct_train():
    ds = _dataset(2, seed=3)
    cfg = LossConfig(0.9, 0.4, 0.5)
    run = TrainRunConfig(epochs=2, rng_seed=11)
    rows = sweep("DeepFuse", [cfg], ds, run)
    assert len(rows) == 1
    direct = train(build_model("DeepFuse", seed=11), ds, run, cfg)
    assert rows[0].report == direct.history[-1]
    assert rows[0].loss_cfg == cfg


def test_sweep_grid_and_balance_selection():
    ds = _dataset(2, seed=4)
    run = TrainRunConfig(epochs=1, rng_seed=0)
    grid = [LossConfig(0.9, g, 0.5) for g in (0.1, 0.5, 0.9)]
    rows = sweep("DeepFuse", grid, ds, run)
    assert [r.index for r in rows] == [0, 1, 2]
    best = best_balance(rows)
    assert best.balance == min(r.balance for r in rows)
    text = sweep_csv(rows)
    lines = text.strip().split("\n")
    assert len(lines) == 4
    assert lines[0].startswith("index,lambda,gamma_ssim,gamma_l2,")
    with pytest.raises(ValueError):
        sweep("DeepFuse", [], ds, run)


def test_sweep_balance_is_selection_metric():
    a = SweepRow(0, LossConfig(), LossReport(0.5, 0.2, 0, 0, 0, 0, 0))
    b = SweepRow(1, LossConfig(), LossReport(0.4, 0.39, 0, 0, 0, 0, 0))
    assert best_balance([a, b]) is b
    assert abs(a.balance - 0.3) < 1e-15
