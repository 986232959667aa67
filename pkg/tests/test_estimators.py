import numpy as np
import pytest

from conftest import D7
from spectral_weights.eig import sym_eig
from spectral_weights.estimators import (
    FiedlerConfig, StallError, _reseed, dist_matvec, fiedler_config, fiedler_eigpair,
    interleaved_power, largest_eigpair, leak_cap, unit_extremes,
)
from spectral_weights.graph import (
    complete_graph, laplacian, path_graph, random_connected_graph, weighted_operator,
)
from spectral_weights.optimizer import outer_solve
from spectral_weights.protocols import estimate_diameter

TOL_VALUE = 1e-4
TOL_ALIGN = 0.999


def _oracle(g, w, kind="node"):
    return sym_eig(weighted_operator(g, w, kind))


def _check(est, value, vector):
    assert abs(est.value - value) <= TOL_VALUE * max(1.0, abs(value))
    assert abs(est.vector @ vector) >= TOL_ALIGN
    assert abs(np.linalg.norm(est.vector) - 1.0) <= 1e-2
    top = np.argmax(np.abs(est.vector))
    assert est.vector[top] > 0
    assert len(set(est.values.tolist())) == 1


@pytest.fixture(scope="module")
def unit7():
    from spectral_weights.graph import paper7
    g = paper7()
    d = estimate_diameter(g).value
    return g, d, unit_extremes(g, d)


def test_unit_extremes_fixture(unit7):
    _, _, (lam2, lamN) = unit7
    assert abs(lam2 - 1.4892) <= 1e-3
    assert abs(lamN - 6.3574) <= 1e-3


def test_dist_matvec(g7):
    rng = np.random.default_rng(0)
    w = rng.uniform(0.1, 2, 7)
    x = rng.standard_normal(7)
    assert np.abs(dist_matvec(g7, w, x) - weighted_operator(g7, w, "node") @ x).max() <= 1e-12


def test_largest_fixture(unit7):
    g, d, unit = unit7
    spec = _oracle(g, np.ones(7))
    est = largest_eigpair(g, np.ones(7), _reseed(7, 1, 0), d, unit=unit)
    _check(est, spec.values[-1], spec.vectors[:, -1])


def test_fiedler_fixture(unit7):
    g, d, unit = unit7
    spec = _oracle(g, np.ones(7))
    cfg = fiedler_config(g, np.ones(7), unit[1], d)
    assert cfg.alpha > 0.5 * (spec.values[1] + spec.values[-1])
    est = fiedler_eigpair(g, np.ones(7), cfg, _reseed(7, 1, 0), d, unit=unit)
    _check(est, spec.values[1], spec.vectors[:, 1])


def test_fiedler_config_rules(g7):
    cfg = fiedler_config(g7, None, None, 6)
    # without an estimate the shift is the Gershgorin bound 2 * max degree
    assert cfg.alpha == 10.0
    assert cfg.p == int(np.ceil(10.0 * 7 / 24)) + 50
    later = fiedler_config(g7, None, 6.0, 6, kappa_hat=2.6, first=False)
    assert later.p == 53
    with pytest.raises(ValueError):
        FiedlerConfig(1.0, 0)


def test_leak_cap():
    assert leak_cap(1.0) == 1
    assert leak_cap(1.0, 0.05) == 1 + int(np.log(1e13) / np.log(21.0))
    assert leak_cap(4.0) > leak_cap(2.0)
    # across the fixture's range of condition numbers the cap never binds
    assert leak_cap(2.5, 0.05) > 53


def test_fiedler_range_leakage_after_deflation(unit7):
    g, d, unit = unit7
    rng = np.random.default_rng(4)
    w = rng.uniform(0.2, 2.0, 7)
    cfg = fiedler_config(g, w, float(_oracle(g, w).values[-1]), d)
    est = fiedler_eigpair(g, w, cfg, _reseed(7, 3, 0), d, tol=1e-15, unit=unit, record=True,
                          max_cycles=3 * cfg.p + 1)
    null = 1.0 / np.sqrt(w)
    checked = 0
    for states in est.trace.snapshots[1:]:
        s0 = states[0]
        # end of a power step whose product was the unshifted multiply
        if s0["phase"] == 0 and s0["macro"] >= 1 and (s0["macro"] - 1) % cfg.p == 0:
            y = np.array([s["x"] for s in states])
            assert abs(y @ null) / np.linalg.norm(y) <= 1e-6
            checked += 1
    assert checked >= 3


def test_convergence_ratio(unit7):
    g, d, unit = unit7
    w = np.ones(7)
    spec = _oracle(g, w)
    ratio = spec.values[-2] / spec.values[-1]
    v = spec.vectors[:, -1]
    est = largest_eigpair(g, w, _reseed(7, 2, 0), d, tol=1e-12, unit=unit, record=True)
    errs = []
    for states in est.trace.snapshots[1:]:
        if states[0]["phase"] == 0:
            x = np.array([s["x"] for s in states])
            x = x / np.linalg.norm(x)
            errs.append(np.linalg.norm(x - np.sign(x @ v) * v))
    errs = np.array(errs)
    keep = np.flatnonzero(errs > 1e-10)
    keep = keep[len(keep) // 3:]
    rate = np.exp(np.polyfit(keep, np.log(errs[keep]), 1)[0])
    assert rate <= ratio + 0.05


def _simple_instances(count, seed, gap=0.01):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        g = random_connected_graph(int(rng.integers(3, 10)), 0.4, rng)
        w = rng.uniform(0.2, 2.0, g.n)
        vals = _oracle(g, w).values
        rel = np.diff(vals) / vals[-1]
        if rel[0] > gap and rel[1] > gap and rel[-1] > gap:
            out.append((g, w))
    return out


def test_random_simple_instances():
    for k, (g, w) in enumerate(_simple_instances(30, 17)):
        spec = _oracle(g, w)
        d = estimate_diameter(g).value
        unit = unit_extremes(g, d)
        x0 = _reseed(g.n, k, 0)
        top = largest_eigpair(g, w, x0, d, unit=unit)
        _check(top, spec.values[-1], spec.vectors[:, -1])
        cfg = fiedler_config(g, w, top.value, d)
        low = fiedler_eigpair(g, w, cfg, x0, d, unit=unit)
        _check(low, spec.values[1], spec.vectors[:, 1])


def test_edge_weights(g7, unit7):
    _, d, unit = unit7
    rng = np.random.default_rng(8)
    w = rng.uniform(0.2, 2.0, 12)
    spec = _oracle(g7, w, "edge")
    top = largest_eigpair(g7, w, _reseed(7, 0, 0), d, kind="edge", unit=unit)
    _check(top, spec.values[-1], spec.vectors[:, -1])
    cfg = fiedler_config(g7, w, top.value, d, kind="edge")
    low = fiedler_eigpair(g7, w, cfg, _reseed(7, 0, 0), d, kind="edge", unit=unit)
    _check(low, spec.values[1], spec.vectors[:, 1])


def test_constant_start_reseeds(unit7):
    g, d, unit = unit7
    spec = _oracle(g, np.ones(7))
    est = largest_eigpair(g, np.ones(7), np.ones(7), d, unit=unit)
    assert est.reseeds == 1
    _check(est, spec.values[-1], spec.vectors[:, -1])


def test_persistent_stall_raises():
    # a single agent has the zero operator, so every reseed is annihilated
    from spectral_weights.graph import Graph
    g = Graph(1, ())
    with pytest.raises(StallError):
        largest_eigpair(g, np.ones(1), [1.0], 0, unit=(1.0, 1.0))


def test_complete_graph_degenerate():
    g = complete_graph(4)
    d = estimate_diameter(g).value
    lam2, lamN = unit_extremes(g, d)
    assert abs(lam2 - 4.0) <= 1e-6 and abs(lamN - 4.0) <= 1e-6


def test_path_extremes():
    g = path_graph(3)
    d = estimate_diameter(g).value
    lam2, lamN = unit_extremes(g, d)
    assert abs(lam2 - 1.0) <= 1e-4 and abs(lamN - 3.0) <= 1e-4


def test_interleaved_matches_exact(unit7):
    g, d, unit = unit7
    rng = np.random.default_rng(6)
    w = rng.uniform(0.3, 2.0, 7)
    spec = _oracle(g, w)
    x0 = _reseed(7, 5, 0)
    fast = interleaved_power(g, w, x0, d, unit=unit)
    exact = largest_eigpair(g, w, x0, d, unit=unit)
    _check(fast, spec.values[-1], spec.vectors[:, -1])
    assert abs(fast.value - exact.value) <= TOL_VALUE
    assert fast.rounds < exact.rounds


def test_warm_start_saves_rounds(unit7):
    g, d, unit = unit7
    path = outer_solve(g).w[:41]
    warm_top, warm_low = _reseed(7, 0, 0), _reseed(7, 0, 0)
    kappa = None
    wins = total = 0
    for t in range(1, len(path)):
        w = path[t]
        cold_x = _reseed(7, 100 + t, 0)
        top = largest_eigpair(g, w, warm_top, d, unit=unit)
        top_cold = largest_eigpair(g, w, cold_x, d, unit=unit)
        cfg = fiedler_config(g, w, top.value, d, kappa_hat=kappa, first=kappa is None)
        low = fiedler_eigpair(g, w, cfg, warm_low, d, unit=unit)
        low_cold = fiedler_eigpair(g, w, cfg, cold_x, d, unit=unit)
        if t > 1:
            total += 1
            wins += (top.rounds + low.rounds) <= (top_cold.rounds + low_cold.rounds)
        warm_top, warm_low = top.vector, low.vector
        kappa = top.value / low.value
    assert wins >= 0.9 * total


def test_reseed_is_deterministic():
    assert _reseed(5, 3, 1) == _reseed(5, 3, 1)
    assert _reseed(5, 3, 1) != _reseed(5, 3, 2)
    assert laplacian(path_graph(2)).shape == (2, 2)
