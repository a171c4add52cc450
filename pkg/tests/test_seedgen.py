import numpy as np
import pytest

from sclab.constraints import ConstraintSet
from sclab.geometry.types import OrientedPointCloud
from sclab.losses import nn_assign
from sclab.seedgen import (SeedGenConfig, SeedGenParams, attend_constraints, complete, encode_partial,
                           generate_seeds, predict_normals, upsample)
from sclab.seedgen.data import make_batch, toy_dataset
from sclab.seedgen.model import forward
from sclab.seedgen.train import TrainingDiverged, loss_and_grad, read_trace, train_toy, write_trace

SMALL = SeedGenConfig(m_l=8, c=16, c_seed=16, heads=2)


@pytest.fixture(scope="module")
def toy():
    return toy_dataset(3, SeedGenConfig(), seed=11)


@pytest.fixture(scope="module")
def params():
    return SeedGenParams.init(SeedGenConfig(), 0)


def test_config_schedule():
    cfg = SeedGenConfig()
    assert cfg.m_seed == 2 * cfg.m_l and cfg.m_dense == 8 * cfg.m_seed
    assert cfg.level_sizes == [64, 128, 256, 512]
    with pytest.raises(ValueError):
        SeedGenConfig(c=30, heads=4)


def test_params_deterministic_and_bounded(tmp_path):
    a, b = SeedGenParams.init(SMALL, 3), SeedGenParams.init(SMALL, 3)
    for n in a.names():
        assert np.array_equal(a[n].data, b[n].data)
    w = a["enc.mlp1.W"].data
    assert np.abs(w).max() <= 1 / np.sqrt(9)
    path, meta = a.save(tmp_path / "p.bin")
    assert path.stat().st_size == 8 * a.n_values()
    c = SeedGenParams.load(path)
    assert c.names() == a.names()
    for n in a.names():
        assert np.array_equal(a[n].data, c[n].data)


def test_cardinalities(toy, params):
    cfg = SeedGenConfig()
    out = complete(toy[0].scan, toy[0].constraints, params, cfg)
    assert len(out.seeds) == 2 * cfg.m_l
    assert [len(c) for c in out.levels] == cfg.level_sizes
    assert len(out.levels[-1]) == 8 * len(out.seeds)
    assert np.allclose(np.linalg.norm(out.normals, axis=1), 1.0)


def test_stagewise_api_matches_complete(toy, params):
    cfg = SeedGenConfig()
    ex = toy[1]
    enc = encode_partial(ex.scan, cfg, params, ex.constraints)
    assert enc.points.shape == (cfg.m_l, 3) and enc.features.shape == (cfg.m_l, cfg.c)
    seeds = generate_seeds(enc, params, cfg)
    coords, feats = seeds.S, seeds.F_seed
    for j in (1, 2, 3):
        coords, feats = upsample(coords, feats, seeds.O, params, j, cfg)
    normals = predict_normals(coords, feats, seeds.O, params)
    full = complete(ex.scan, ex.constraints, params, cfg)
    assert np.array_equal(coords, full.levels[-1])
    assert np.array_equal(normals, full.normals)


def test_translation_equivariance(toy, params):
    cfg = SeedGenConfig()
    rng = np.random.default_rng(5)
    for ex in toy:
        t = rng.uniform(-3, 3, 3)
        a = complete(ex.scan, ex.constraints, params, cfg)
        b = complete(ex.scan.translated(t), ex.constraints.translated(t), params, cfg)
        assert np.abs(b.center - a.center - t).max() <= 1e-9
        assert np.abs(b.seeds.S - a.seeds.S - t).max() <= 1e-9
        for la, lb in zip(a.levels, b.levels):
            assert np.abs(lb - la - t).max() <= 1e-9
        assert np.abs(b.normals - a.normals).max() <= 1e-9


def test_encoder_exact_on_dyadic_shift(toy, params):
    cfg = SeedGenConfig()
    ex = toy[0]
    # snap to a dyadic grid so every relative coordinate is exact
    pts = np.round(ex.scan.points * 1024) / 1024
    scan = OrientedPointCloud(pts, ex.scan.normals)
    a = encode_partial(scan, cfg, params)
    b = encode_partial(scan.translated([0.5, -2.0, 0.25]), cfg, params)
    assert np.array_equal(b.points - a.points, np.tile([0.5, -2.0, 0.25], (cfg.m_l, 1)))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.global_feature, b.global_feature)


def test_empty_constraints_identity(toy, params):
    cfg = SeedGenConfig()
    ex = toy[2]
    a = complete(ex.scan, None, params, cfg)
    b = complete(ex.scan, ConstraintSet.empty(), params, cfg)
    assert np.array_equal(a.center, b.center)
    for la, lb in zip(a.levels, b.levels):
        assert np.array_equal(la, lb)
    tokens = np.random.default_rng(0).normal(size=(cfg.m_l + 1, cfg.c))
    F, o = attend_constraints(tokens, ConstraintSet.empty(), params, cfg)
    assert not F.any() and not o.any()


def test_constraint_attention_symmetries(params):
    cfg = SeedGenConfig()
    rng = np.random.default_rng(7)
    tokens = rng.normal(size=(cfg.m_l + 1, cfg.c))
    cons = ConstraintSet(rng.normal(size=(12, 3)), rng.normal(size=(9, 3)))
    F, o = attend_constraints(tokens, cons, params, cfg)
    assert np.abs(F).max() > 0
    perm = ConstraintSet(cons.free_points[rng.permutation(12)], cons.occ_points[rng.permutation(9)])
    F2, o2 = attend_constraints(tokens, perm, params, cfg)
    assert np.abs(F2 - F).max() <= 1e-9 and np.abs(o2 - o).max() <= 1e-9
    dup = ConstraintSet(np.repeat(cons.free_points, 2, axis=0), np.repeat(cons.occ_points, 2, axis=0))
    F3, o3 = attend_constraints(tokens, dup, params, cfg)
    assert np.abs(F3 - F).max() <= 1e-6 and np.abs(o3 - o).max() <= 1e-6


def test_upsample_layer_index_checked(params):
    with pytest.raises(ValueError):
        upsample(np.zeros((4, 3)), np.zeros((4, 64)), np.zeros(3), params, 4, SeedGenConfig())


def test_too_small_scan_rejected(params):
    scan = OrientedPointCloud(np.zeros((3, 3)), np.tile([0.0, 0.0, 1.0], (3, 1)))
    with pytest.raises(ValueError):
        complete(scan, None, params, SeedGenConfig())


# -- gradients -----------------------------------------------------------------------

def _frozen_value(p, batch, cfg, sel, fix):
    """Loss with every nearest-neighbour assignment held at its recorded value."""
    pred = forward(batch.inputs, p, cfg, sel)
    total = 0.0
    for b, ex in enumerate(batch.examples):
        v = 0.0
        for j, (lv, g) in enumerate(zip(pred.levels, ex.gt_levels)):
            P = lv.data[b]
            if (b, j) not in fix:
                fix[b, j] = (nn_assign(P, g)[0], nn_assign(g, P)[0], nn_assign(ex.scan.points, P)[0])
            ip, iq, io = fix[b, j]
            v += ((P - g[ip]) ** 2).sum(1).mean() + ((g - P[iq]) ** 2).sum(1).mean()
            v += ((ex.scan.points - P[io]) ** 2).sum(1).mean()
        v += np.mean((pred.seeds.O.data[b] - ex.center) ** 2)
        ng = ex.gt_normals[sel[f"normals{b}"]]
        v += 1e-2 * np.mean(1 - (pred.normals.data[b] * ng).sum(1))
        total += v
    return total / len(batch.examples)


@pytest.mark.parametrize("seed", range(5))
def test_parameter_gradients_fd(seed):
    cfg = SMALL
    p = SeedGenParams.init(cfg, seed)
    batch = make_batch(toy_dataset(2, cfg, seed), cfg)
    sel, fix = {}, {}
    loss_and_grad(p, batch, cfg, selections=sel)
    _frozen_value(p, batch, cfg, sel, fix)
    rng = np.random.default_rng(seed)
    eps = 1e-4
    for name in p.names():
        t = p[name]
        g = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        base = t.data.copy()
        d = rng.normal(size=base.shape)
        d *= np.sqrt(np.mean(base ** 2)) / np.sqrt(np.mean(d ** 2))
        t.data = base + eps * d
        fp = _frozen_value(p, batch, cfg, sel, fix)
        t.data = base - eps * d
        fm = _frozen_value(p, batch, cfg, sel, fix)
        t.data = base
        fd, an = (fp - fm) / (2 * eps), float((g * d).sum())
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an)) + 1e-9, (name, fd, an)


# -- training ---------------------------------------------------------------------------

def test_short_training_decreases_and_is_deterministic(tmp_path):
    data = toy_dataset(4, SMALL, 1)
    p1, tr1 = train_toy(data, SMALL, steps=5, seed=2)
    p2, tr2 = train_toy(data, SMALL, steps=5, seed=2)
    assert tr1 == tr2 and len(tr1) == 6
    assert tr1[-1] < tr1[0]
    write_trace(tmp_path / "loss.csv", tr1)
    assert read_trace(tmp_path / "loss.csv") == tr1


def test_divergence_is_reported():
    data = toy_dataset(2, SMALL, 1)
    with pytest.raises(TrainingDiverged):
        train_toy(data, SMALL, steps=5, learning_rate=1e8)
