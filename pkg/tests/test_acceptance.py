"""End-to-end acceptance suite.

These tests re-run the headline experiments at desk scale: convergence
rates on kinked and smooth oracles, mode and estimator comparisons,
statistics against direct oracle sampling, structural property sweeps,
and the bundled pipe-network study. Everything is deterministic given the
pinned seeds. The full module takes about fifteen minutes on one core;
the unit suites in the other test files cover the same components at
second-scale.
"""
import math
import time

import numpy as np
import pytest
import scipy.stats

from simplexuq import (
    BuildConfig,
    build,
    fit_slope,
    ladder,
    make_test_oracle,
    run_convergence,
)
from simplexuq.geometry import Triangulation, barycentric_coordinates, sample_in_simplex
from simplexuq.stats import QuadratureSpec, moments
from simplexuq.testbed import GasOracle, toy_network

CLIPPED = {d: make_test_oracle("clipped-sine", d, 0.7) for d in (2, 3)}
SMOOTH = {d: make_test_oracle("smooth-sine", d, 0.7) for d in (2, 3)}
FAKE2 = make_test_oracle("smooth-sine-fake-kink", 2, 0.7)


def converge(oracle, p, mode, budget, m_ref, estimator, lec, seed=0,
             n_mc_local=200, nmc=150_000, factor=1.4, error_seed=1):
    config = BuildConfig(p_max=p, mode=mode, lec=lec, estimator=estimator,
                         m_ref=m_ref, budget=budget, seed=seed,
                         n_mc_local=n_mc_local)
    return run_convergence(oracle, config, ladder(25, budget, factor),
                           n_mc_error=nmc, error_seed=error_seed)


def slope_of(points, decade=10.0):
    return fit_slope([c.n for c in points], [c.error for c in points], decade=decade)


def test_kinked_oracle_convergence_rates():
    t0 = time.perf_counter()
    for d, p in [(2, 1), (2, 2), (2, 3), (3, 2), (3, 3)]:
        points, _ = converge(CLIPPED[d], p, "improved", 1500, 0.3, "mc-l1", "off")
        slope = slope_of(points)
        assert slope <= -(p + 1) / d + 0.35, (d, p, slope)
    assert time.perf_counter() - t0 < 600.0


def test_original_mode_stagnates_and_improved_mode_escapes():
    points3, _ = converge(CLIPPED[2], 3, "original", 640, 0.3, "last-point", "strict")
    points5, _ = converge(CLIPPED[2], 5, "original", 640, 0.3, "last-point", "strict")
    slope3, slope5 = slope_of(points3), slope_of(points5)
    assert abs(slope3 - slope5) < 0.3, (slope3, slope5)
    assert slope3 > -2.2 and slope5 > -2.2, (slope3, slope5)

    improved5, _ = converge(CLIPPED[2], 5, "improved", 640, 0.3, "mc-l1", "off",
                            n_mc_local=400)
    gap = points5[-1].error / improved5[-1].error
    assert gap >= 100.0, gap


def test_smooth_oracle_rates_match_theory():
    for d, budget in ((2, 800), (3, 1500)):
        for p in (1, 2, 3):
            points, _ = converge(SMOOTH[d], p, "improved", budget, 0.3,
                                 "vol-order", "off")
            slope = slope_of(points, decade=20.0)
            assert abs(slope + (p + 1) / d) <= 0.35, (d, p, slope)


def test_pretend_kink_does_not_hurt_convergence():
    fake, _ = converge(FAKE2, 2, "improved", 800, 0.3, "vol-order", "off")
    slope = slope_of(fake, decade=20.0)
    assert abs(slope + 1.5) <= 0.35, slope

    smooth, _ = converge(SMOOTH[2], 2, "improved", 800, 0.3, "vol-order", "off")
    assert fake[-1].n == smooth[-1].n
    assert fake[-1].error <= 3.0 * smooth[-1].error


def test_batch_size_does_not_change_convergence():
    pooled = []
    for m_ref in (1.0, 0.3, 0.9):
        runs = [converge(SMOOTH[2], 3, "improved", 800, m_ref, "mc-l1",
                         "off", seed=seed)[0] for seed in (0, 1, 2)]
        ns = [c.n for c in runs[0]]
        assert all([c.n for c in r] == ns for r in runs)
        log_mean = np.mean([np.log([c.error for c in r]) for r in runs], axis=0)
        pooled.append(fit_slope(ns, list(np.exp(log_mean)), decade=20.0))
    assert max(pooled) - min(pooled) <= 0.25, pooled


def test_error_estimators_track_true_error():
    cases = [
        (2, "last-point", 2, 1500),
        (2, "mc-l1", 3, 1500),
        (3, "last-point", 1, 1200),
        (3, "mc-l1", 2, 1200),
    ]
    for d, estimator, p, budget in cases:
        points, _ = converge(CLIPPED[d], p, "improved", budget, 0.3,
                             estimator, "off", nmc=100_000)
        rho = scipy.stats.spearmanr(
            [c.aggregate for c in points], [c.error for c in points]
        ).statistic
        assert rho >= 0.9, (d, estimator, rho)


def test_vol_order_refines_uniformly():
    config = BuildConfig(p_max=5, mode="improved", lec="off",
                         estimator="vol-order", m_ref=0.3, budget=640, seed=0)
    model = build(CLIPPED[2], config)
    volumes = [s.volume for s in model.tri.simplices.values()]
    assert max(volumes) / min(volumes) <= 50.0


def test_model_statistics_match_direct_oracle_sampling():
    oracle = CLIPPED[2]
    config = BuildConfig(p_max=3, mode="improved", lec="off", estimator="mc-l1",
                         m_ref=0.3, budget=640, seed=0)
    model = build(oracle, config)

    mean_s, var_s = moments(model, QuadratureSpec(kind="mc", n=1_000_000, seed=11))
    reference = oracle.evaluate_batch(
        np.random.default_rng(12).random((10_000_000, 2))
    )[0]
    mean_o, var_o = float(reference.mean()), float(reference.var())

    surr = model.evaluate_batch(np.random.default_rng(14).random((1_000_000, 2)))
    se_mean = math.hypot(surr.std() / 1e3, reference.std() / math.sqrt(1e7))
    assert abs(mean_s - mean_o) <= 3.0 * se_mean
    q_s = (surr - surr.mean()) ** 2
    q_o = (reference - reference.mean()) ** 2
    se_var = math.hypot(q_s.std() / 1e3, q_o.std() / math.sqrt(1e7))
    assert abs(var_s - var_o) <= 3.0 * se_var

    X = np.random.default_rng(13).random((100_000, 2))
    vals_s = model.evaluate_batch(X)
    vals_o = oracle.evaluate_batch(X)[0]

    def curve(values, n_nodes=64):
        nodes = np.linspace(values.min(), values.max(), n_nodes)
        probs = np.array([(values <= y).mean() for y in nodes])
        return nodes, probs

    nodes_s, probs_s = curve(vals_s)
    nodes_o, probs_o = curve(vals_o)
    grid = np.linspace(max(nodes_s[0], nodes_o[0]), min(nodes_s[-1], nodes_o[-1]), 2001)
    deviation = np.abs(
        np.interp(grid, nodes_s, probs_s) - np.interp(grid, nodes_o, probs_o)
    ).max()
    assert deviation <= 0.01, deviation


def circumsphere(vertices):
    v0 = vertices[0]
    A = 2.0 * (vertices[1:] - v0)
    b = (vertices[1:] ** 2).sum(axis=1) - (v0 ** 2).sum()
    center = np.linalg.lstsq(A, b, rcond=None)[0]
    return center, float(np.linalg.norm(vertices[0] - center))


def test_delaunay_property_brute_force():
    for d in (2, 3, 4):
        tri = Triangulation.from_box_corners(d)
        rng = np.random.default_rng(7)
        for _ in range(200):
            tri.insert(rng.random(d))
        coords = tri.coords
        for simplex in tri.simplices.values():
            center, radius = circumsphere(coords[list(simplex.vertex_ids)])
            dist = np.linalg.norm(coords - center, axis=1)
            inside = dist < radius * (1.0 - 1e-9)
            inside[list(simplex.vertex_ids)] = False
            assert not inside.any(), (d, simplex.vertex_ids)


def test_partition_of_unity_throughout_a_build():
    probes = np.random.default_rng(3).random((100, 2))
    worst = [0.0]

    def on_step(model):
        sids = model.tri.locate_batch(probes)
        for x, sid in zip(probes, sids):
            verts = model.tri.coords[list(model.tri.simplices[int(sid)].vertex_ids)]
            lam = barycentric_coordinates(verts, x)
            worst[0] = max(worst[0], abs(lam.sum() - 1.0))

    config = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                         m_ref=0.3, budget=200, seed=0)
    build(CLIPPED[2], config, on_step=on_step)
    assert worst[0] <= 1e-9


def test_fits_interpolate_their_stencils_in_a_real_build():
    config = BuildConfig(p_max=3, mode="improved", lec="off", estimator="mc-l1",
                         m_ref=0.3, budget=300, seed=0)
    model = build(CLIPPED[2], config)
    checked = 0
    for surrogate in model.surrogates.values():
        if surrogate.pending_refinement:
            continue
        for side, stencil in zip(surrogate.sides, surrogate.stencils):
            ids = list(stencil.point_ids)
            values = model.samples.values[ids]
            fitted = side(model.samples.coords[ids])
            scale = 1.0 + np.abs(values).max()
            assert np.abs(fitted - values).max() <= 1e-8 * scale
            checked += 1
    assert checked > 100


class QuadraticOracle:
    """Global random degree-2 polynomial with a single region label."""

    def __init__(self, d, seed=42):
        self.d = d
        rng = np.random.default_rng(seed)
        exps = []
        for total in range(3):
            for e in _integer_compositions(total, d):
                exps.append(e)
        self.exponents = np.array(exps)
        self.coeffs = rng.standard_normal(len(exps))

    def f(self, X):
        return (X[:, None, :] ** self.exponents[None, :, :]).prod(axis=2) @ self.coeffs

    def __call__(self, x):
        value, label = self.evaluate_batch(np.asarray(x)[None])
        return float(value[0]), int(label[0])

    def evaluate_batch(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        return self.f(X), np.zeros(len(X), dtype=np.int64)


def _integer_compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _integer_compositions(total - first, parts - 1):
            yield (first,) + rest


def test_quadratics_are_reproduced():
    oracle = QuadraticOracle(2)
    config = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                         m_ref=0.3, budget=120, seed=0)
    model = build(oracle, config)
    X = np.random.default_rng(1).random((2000, 2))
    scale = np.abs(oracle.f(X)).max()
    assert np.abs(model.evaluate_batch(X) - oracle.f(X)).max() <= 1e-7 * scale

    oracle3 = QuadraticOracle(3)
    config3 = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                          m_ref=0.3, budget=200, seed=0)
    model3 = build(oracle3, config3)
    full, fallback_volume = 0, 0.0
    X3 = np.random.default_rng(1).random((4000, 3))
    f3 = oracle3.f(X3)
    scale3 = np.abs(f3).max()
    for sid, surrogate in model3.surrogates.items():
        if surrogate.degree == 2:
            full += 1
            stencil = surrogate.stencils[0]
            ids = list(stencil.point_ids)
            fitted = surrogate.sides[0](model3.samples.coords[ids])
            assert np.abs(fitted - model3.samples.values[ids]).max() <= 1e-7 * scale3
        else:
            fallback_volume += model3.tri.simplices[sid].volume
    assert full >= 0.95 * len(model3.surrogates)
    assert fallback_volume <= 0.02
    sids = model3.tri.locate_batch(X3)
    full_degree = np.array([model3.surrogates[int(s)].degree == 2 for s in sids])
    err3 = np.abs(model3.evaluate_batch(X3) - f3)
    assert err3[full_degree].max() <= 1e-7 * scale3


def test_simplex_sampler_moments():
    rng = np.random.default_rng(5)
    verts2 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    draws = np.array([sample_in_simplex(verts2, rng) for _ in range(200_000)])
    assert abs(draws[:, 0].mean() - 1.0 / 3.0) < 4.0 * draws[:, 0].std() / math.sqrt(len(draws))

    verts3 = np.vstack([np.zeros(3), np.eye(3)])
    draws3 = np.array([sample_in_simplex(verts3, rng) for _ in range(200_000)])
    inner = draws3.sum(axis=1) <= 0.5
    p = inner.mean()
    assert abs(p - 0.125) < 4.0 * math.sqrt(0.125 * 0.875 / len(draws3))


def test_same_seed_reproduces_the_build_log():
    config = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                         m_ref=0.3, budget=120, seed=9)
    model_a = build(CLIPPED[2], config)
    model_b = build(CLIPPED[2], config)
    log_a = [(r.step, r.n_samples, r.n_simplices, r.aggregate) for r in model_a.build_log]
    log_b = [(r.step, r.n_samples, r.n_simplices, r.aggregate) for r in model_b.build_log]
    assert log_a == log_b
    X = np.random.default_rng(0).random((1000, 2))
    assert np.array_equal(model_a.evaluate_batch(X), model_b.evaluate_batch(X))

    other = build(CLIPPED[2], BuildConfig(p_max=2, mode="improved", lec="off",
                                          estimator="mc-l1", m_ref=0.3,
                                          budget=120, seed=10))
    log_c = [(r.step, r.n_samples, r.n_simplices, r.aggregate) for r in other.build_log]
    assert log_a != log_c


def test_network_sweep_rises_then_saturates():
    oracle = GasOracle(toy_network(1))
    xs = np.linspace(0.0, 1.0, 201)[:, None]
    values, labels = oracle.evaluate_batch(xs)
    dy = np.diff(values)
    flat = dy <= 1e-12
    assert flat.any() and not flat.all()
    first_flat = int(np.argmax(flat))
    assert np.all(dy[:first_flat] > 1e-7)
    assert np.all(np.abs(dy[first_flat:]) <= 1e-9)
    assert len(set(labels.tolist())) >= 2


def test_network_surrogate_beats_plain_mc_at_matched_budget():
    oracle = GasOracle(toy_network(2))
    reference = float(
        oracle.evaluate_batch(np.random.default_rng(100).random((2_000_000, 2)))[0].mean()
    )
    wins = 0
    for seed in range(5):
        config = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                             m_ref=0.3, budget=200, seed=seed)
        model = build(oracle, config)
        mean_ssc, _ = moments(model, QuadratureSpec(kind="mc", n=200_000, seed=seed + 50))
        draws = np.random.default_rng([seed, 60]).random((200, 2))
        mean_mc = float(oracle.evaluate_batch(draws)[0].mean())
        wins += abs(mean_ssc - reference) < abs(mean_mc - reference)
    assert wins >= 3, wins


def test_kinked_surrogate_beats_plain_mc_at_matched_budget():
    oracle = CLIPPED[2]
    reference = float(
        oracle.evaluate_batch(np.random.default_rng(101).random((10_000_000, 2)))[0].mean()
    )
    wins = 0
    for seed in range(1, 6):
        config = BuildConfig(p_max=2, mode="improved", lec="off", estimator="mc-l1",
                             m_ref=0.3, budget=500, seed=seed)
        model = build(oracle, config)
        mean_ssc, _ = moments(model, QuadratureSpec(kind="mc", n=200_000, seed=seed + 70))
        draws = np.random.default_rng([seed, 61]).random((500, 2))
        mean_mc = float(oracle.evaluate_batch(draws)[0].mean())
        wins += abs(mean_ssc - reference) < abs(mean_mc - reference)
    assert wins >= 3, wins
