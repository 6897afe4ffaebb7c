"""Acceptance checks A1-A10.

Each test prints one ``A<n> PASS|FAIL`` line (collected again in the
terminal summary) and then asserts on the same condition.
"""

import contextlib
import io
import math
import time

import numpy as np
import pytest

from witloc import dataset as D
from witloc import numcore as nc
from witloc.baseline import BaseDNN, BaseDNNConfig
from witloc.channel import (
    ArrayGeometry,
    PathSet,
    PhysicsConfig,
    channel_matrix,
    rms_azimuth_spread,
    rms_delay_spread,
    steering_vector,
)
from witloc.cli import build_model, main
from witloc.config import load_config
from witloc.model import WiT, WiTConfig, attention
from witloc.numcore import Tensor
from witloc.training import AdamW, FitConfig, errors_m, evaluate, fit, mae, percentile95, predict


def fit_cfg(cfg, kind="wit"):
    patience = cfg.base_patience if kind == "base" else cfg.wit_patience
    return FitConfig(cfg.epochs, cfg.batch, cfg.lr, cfg.weight_decay, patience, cfg.seed)


def test_a1_gradient_integrity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    h = rng.normal(size=(3, 4, 6))  # N_c' = 4 subcarriers, N_r = 2 antennas
    y = rng.uniform(size=(3, 2))
    models = {
        "wit-avg": WiT(WiTConfig(4, 2, 8, "avg", dropout=0.0), seed=1),
        "wit-lid": WiT(WiTConfig(4, 2, 8, "lid", dropout=0.0), seed=2),
        "base": BaseDNN(BaseDNNConfig(4, 2, 8, dropout=0.0), seed=3),
    }
    worst = {}
    for name, m in models.items():
        # nonzero biases and positional table so every term carries gradient
        for k, t in m.params.items():
            if t.requires_grad and (k.endswith(("b", "b1", "b2", "bout")) or k in ("G", "e0")):
                t.data[...] = rng.normal(0, 0.3, t.shape)

        def loss(m=m):
            d = m.forward(h) - y
            return nc.mean(d * d)

        worst[name] = nc.grad_check(loss, m.parameters(), step=1e-5)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 30
    detail = " ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f" ({elapsed:.1f}s)"
    assert verdict("A1", ok, detail)


def test_a2_attention_invariants(verdict):
    sums = sym = single = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, d = rng.integers(2, 9), rng.integers(2, 9)
        e = Tensor(rng.normal(size=(n, d)))
        W = Tensor(rng.normal(size=(d, d)))
        _, w, s = attention(e, W, details=True)
        sums = max(sums, np.abs(w.data.sum(-1) - 1).max())
        sym = max(sym, np.abs(s.data - s.data.T).max())
        e0 = rng.normal(size=(1, d))
        o = attention(Tensor(e0), W).data
        e_bar = (e0 - e0.mean()) / np.sqrt(e0.var() + nc.LAYER_NORM_EPS)
        single = max(single, np.abs(o - e_bar @ W.data).max())
    ok = sums < 1e-9 and sym < 1e-10 and single < 1e-12
    assert verdict("A2", ok, f"row-sum {sums:.1e} symmetry {sym:.1e} single-token {single:.1e}")


def test_a3_permutation_property(verdict):
    rng = np.random.default_rng(3)
    h = rng.normal(size=(6, 4, 6))
    perms = [rng.permutation(4) for _ in range(10)]

    m = WiT(WiTConfig(4, 2, 8, "avg", dropout=0.0), seed=0)
    m.params["G"].data[...] = 0.0
    ref = m.forward(h).data
    inv_gap = max(np.abs(m.forward(h[:, p]).data - ref).max() for p in perms)

    # G after a short training run on a small generated dataset
    cfg = load_config(preset="tiny", overrides=["R=20", "T=4", "Nc=64", "epochs=5", "batch=8", "dropout=0"])
    ds = D.prepare(cfg)
    t = build_model("wit", "avg", cfg, ds)
    fit(t, ds, fit_cfg(cfg))
    x = ds.features[:6].astype(float)
    ref = t.forward(x).data
    perms = [rng.permutation(ds.n_active) for _ in range(10)]
    var_gap = max(np.abs(t.forward(x[:, p]).data - ref).max() for p in perms)
    ok = inv_gap < 1e-9 and var_gap > 1e-6
    assert verdict("A3", ok, f"G=0 gap {inv_gap:.1e}, trained G gap {var_gap:.1e}")


def test_a4_channel_correctness(verdict):
    rng = np.random.default_rng(4)
    geom = ArrayGeometry(3, 4, 0.1)
    kd = 2 * np.pi * geom.spacing / geom.wavelength
    az, el = rng.uniform(-np.pi, np.pi, 50), rng.uniform(0, np.pi, 50)
    a = steering_vector(az, el, geom)
    unit = np.abs(np.abs(a) - 1).max()
    kron = 0.0
    for i in range(50):
        ax = np.exp(1j * kd * np.arange(3) * np.sin(el[i]) * np.sin(az[i]))
        azv = np.exp(1j * kd * np.arange(4) * np.cos(el[i]))
        kron = max(kron, np.abs(a[i] - np.kron(azv, ax)).max())

    phys = PhysicsConfig(n_subcarriers=64, subcarrier_stride=4)

    def paths(k):
        return PathSet.from_lists(
            rng.normal(size=k) + 1j * rng.normal(size=k),
            rng.uniform(0, 1e-6, k),
            rng.uniform(-1, 1, k),
            rng.uniform(0.5, 2.5, k),
        )

    p1, p2 = paths(3), paths(2)
    c = 0.7 - 0.2j
    both = PathSet.concat(p1, PathSet(c * p2.gain, p2.delay, p2.az, p2.el, p2.rrh, p2.is_los))
    H = channel_matrix(both, geom, phys).entries
    lin = np.abs(H - channel_matrix(p1, geom, phys).entries - c * channel_matrix(p2, geom, phys).entries).max()

    df = load_config(preset="s-static").physics().subcarrier_spacing

    sp = paths(5)
    w = np.abs(sp.gain) ** 2 / np.sum(np.abs(sp.gain) ** 2)
    tau = sp.delay - sp.delay[np.argmax(w)]
    tau_oracle = math.sqrt(np.sum(w * tau**2) - np.sum(w * tau) ** 2)
    phi_oracle = math.sqrt(np.sum(w * sp.az**2) - np.sum(w * sp.az) ** 2)
    spread = max(abs(rms_delay_spread(sp) - tau_oracle) / 1e-9, abs(rms_azimuth_spread(sp) - phi_oracle))

    ok = unit < 1e-12 and kron < 1e-12 and lin < 1e-12 and df == 39062.5 and spread < 1e-12
    detail = f"unit {unit:.1e} kron {kron:.1e} linearity {lin:.1e} df {df} Hz spread {spread:.1e}"
    assert verdict("A4", ok, detail)


def test_a5_method_ordering(verdict):
    t0 = time.perf_counter()
    runs = []
    for seed in range(3):
        cfg = load_config(preset="tiny", overrides=[f"seed={seed}"])
        ds = D.prepare(cfg)
        row = {}
        for name, kind, pooling in (("avg", "wit", "avg"), ("lid", "wit", "lid"), ("base", "base", "avg")):
            m = build_model(kind, pooling, cfg, ds)
            fit(m, ds, fit_cfg(cfg, kind))
            row[name] = mae(evaluate(m, ds, ds.holdout_test_idx))
        runs.append(row)
        print(f"  seed {seed}: " + " ".join(f"{k} {v:.2f} m" for k, v in row.items()))
    elapsed = time.perf_counter() - t0
    held = sum(r["avg"] < r["lid"] < r["base"] and r["avg"] <= 0.8 * r["base"] for r in runs)
    mean = {k: np.mean([r[k] for r in runs]) for k in runs[0]}
    ok = held >= 2 and elapsed < 15 * 60
    detail = (
        f"ordering held in {held}/3 runs; mean MAE avg {mean['avg']:.2f} lid {mean['lid']:.2f} "
        f"base {mean['base']:.2f} m ({elapsed:.0f}s)"
    )
    assert verdict("A5", ok, detail)


def test_a6_optimizer_oracle(verdict):
    p = Tensor(np.array([0.3, -2.0, 5.0]), requires_grad=True)
    start = p.data.copy()
    p.grad = np.ones(3)
    AdamW(lr=1e-3, eps=1e-16, weight_decay=0.0).step([p])
    first = np.abs((p.data - start) - (-1e-3)).max()

    q = Tensor(np.array([0.3, -2.0, 5.0]), requires_grad=True)
    q.grad = np.array([0.4, -1.0, 3.0])
    AdamW(lr=0.0, weight_decay=0.1).step([q])
    ident = np.abs(q.data - start).max()
    ok = first < 1e-9 and ident == 0.0
    assert verdict("A6", ok, f"first-step gap {first:.1e}, lr=0 change {ident:.1e}")


def test_a7_metrics_oracle(verdict):
    rng = np.random.default_rng(7)
    gap = 0.0
    for _ in range(1000):
        e = rng.exponential(3.0, size=rng.integers(1, 200))
        s = sorted(e.tolist())
        m_ref = math.fsum(s) / len(s)
        p_ref = s[math.ceil(0.95 * len(s)) - 1]
        gap = max(gap, abs(mae(e) - m_ref), abs(percentile95(e) - p_ref))
    bounds = np.array([[0.0, 10.0], [0.0, 10.0]])
    single = mae(errors_m([[0.3, 0.4]], [[0.0, 0.0]], bounds))
    ok = gap < 1e-12 and abs(single - 5.0) < 1e-12
    assert verdict("A7", ok, f"max gap {gap:.1e}, 3-4-5 MAE {single}")


def _pipeline(workdir):
    out = io.StringIO()
    common = ["--preset", "tiny", "--seed", "11", "--set", "epochs=4"]
    codes = []
    with contextlib.redirect_stdout(out):
        codes.append(main(["gen", *common, "--out", str(workdir / "d.wds")]))
        for kind, pool in (("wit", "avg"), ("wit", "lid"), ("base", "avg")):
            ck = workdir / f"{kind}-{pool}.ck"
            codes.append(
                main(["train", *common, "--dataset", str(workdir / "d.wds"), "--model", kind, "--pooling", pool, "--out", str(ck)])
            )
        cks = [str(workdir / n) for n in ("wit-avg.ck", "wit-lid.ck", "base-avg.ck")]
        eval_args = ["eval", "--dataset", str(workdir / "d.wds"), "--out", str(workdir / "ecdf")]
        codes.append(main(eval_args + [a for c in cks for a in ("--checkpoint", c)]))
    files = {p.relative_to(workdir).as_posix(): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}
    return codes, out.getvalue(), files


def test_a8_pipeline_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    ca, sa, fa = _pipeline(tmp_path / "a")
    cb, sb, fb = _pipeline(tmp_path / "b")
    same_files = fa.keys() == fb.keys() and all(fa[k] == fb[k] for k in fa)
    stdout_a = sa.replace(str(tmp_path / "a"), "")
    stdout_b = sb.replace(str(tmp_path / "b"), "")
    ok = ca == cb == [0] * 5 and same_files and stdout_a == stdout_b and len(fa) >= 8
    assert verdict("A8", ok, f"{len(fa)} output files, identical={same_files}, exit codes {ca}")


def test_a9_overfit_sanity(verdict):
    # regularisation off: the point is that the optimiser can drive the loss down
    cfg = load_config(preset="tiny", overrides=["dropout=0", "base_dropout=0", "weight_decay=0"])
    ds = D.prepare(cfg)
    idx = ds.train_idx[:10]
    x = ds.features[idx].astype(float)
    res = {}
    for name, kind, pooling in (("avg", "wit", "avg"), ("lid", "wit", "lid"), ("base", "base", "avg")):
        m = build_model(kind, pooling, cfg, ds)
        fit(m, ds, FitConfig(500, 10, cfg.lr, 0.0, 0, 0), train_idx=idx, val_idx=idx)
        res[name] = float(np.linalg.norm(predict(m, x) - ds.labels[idx], axis=1).mean())
    ok = all(v < 0.01 for v in res.values())
    assert verdict("A9", ok, "train MAE (scaled) " + " ".join(f"{k} {v:.1e}" for k, v in res.items()))


def test_a10_residual_ablation(verdict):
    val = {}
    for residual in (True, False):
        cfg = load_config(preset="tiny", overrides=[f"residual={residual}"])
        ds = D.prepare(cfg)
        m = build_model("wit", "avg", cfg, ds)
        val[residual] = fit(m, ds, fit_cfg(cfg)).best_val_mae
    rel = val[False] / val[True] - 1
    ok = rel >= 0.10
    detail = f"val MAE with residual {val[True]:.3f} m, without {val[False]:.3f} m, change {rel:+.1%} (need >= +10%)"
    assert verdict("A10", ok, detail)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
