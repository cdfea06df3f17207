import math

import numpy as np
import pytest

from bidesp.core import ContractViolation, InputError
from bidesp.distance import DistanceTable
from bidesp.models import ALPHA, DistancePredictor, ModelConfig, Models, unit_hash
from bidesp.network import NetworkGenConfig, generate
from helpers import build_network


def test_config_validation():
    for kw in (dict(hide_prob=1.0), dict(hide_prob=-0.1), dict(noise_sigma=-1), dict(d_max=0)):
        with pytest.raises(InputError):
            ModelConfig(**kw)
    with pytest.raises(InputError):
        Models(build_network([("R", ["b"], "p", 0.5)], {"b"}), heuristic="oracle")


def test_unit_hash_stable_and_uniform():
    assert unit_hash(1, "a") == unit_hash(1, "a")
    xs = np.array([unit_hash(0, "x", i) for i in range(4000)])
    assert xs.min() >= 0 and xs.max() < 1
    assert abs(xs.mean() - 0.5) < 0.02


def test_clipping_semantics(small_net):
    tab = DistanceTable(small_net)
    pred = DistancePredictor(tab, ModelConfig(noise_sigma=2.0, d_max=3, seed=4))
    d = tab.matrix
    p = pred.matrix
    assert ((p >= 0) & (p <= 4)).all()
    assert np.array_equal(p == 4.0, d > 3)
    exact = DistancePredictor(tab, ModelConfig(d_max=3))
    ok = d <= 3
    assert np.array_equal(exact.matrix[ok], d[ok])


def test_noise_statistics():
    tab = DistanceTable(generate(NetworkGenConfig(layers=8, molecules_per_layer=20, seed=2)))
    sigma = 0.5
    pred = DistancePredictor(tab, ModelConfig(noise_sigma=sigma, d_max=50, seed=9))
    d = tab.matrix
    # pairs far from the clip bounds see the raw noise
    mask = np.isfinite(d) & (d >= 3)
    resid = pred.matrix[mask] - d[mask]
    assert mask.sum() > 1000
    assert abs(resid.mean()) < 4 * sigma / math.sqrt(mask.sum())
    assert abs(resid.std() - sigma) < 0.1
    again = DistancePredictor(tab, ModelConfig(noise_sigma=sigma, d_max=50, seed=9))
    assert np.array_equal(again.matrix, pred.matrix)


def test_visibility_rate_monte_carlo():
    net = generate(NetworkGenConfig(layers=8, molecules_per_layer=30, seed=2,
                                    max_producers_per_molecule=5))
    n = len(net.reactions)
    for hp in (0.0, 0.2, 0.5):
        vis = Models(net, ModelConfig(hide_prob=hp, seed=1)).visible
        hidden = sum(not v for v in vis.values()) / n
        # binomial sd is at most 0.5 / sqrt(n)
        assert abs(hidden - hp) <= 4 * 0.5 / math.sqrt(n), (hp, hidden)


def test_retro_model_hides_and_orders(small_net):
    m = Models(small_net, ModelConfig(hide_prob=0.3, seed=2))
    for x in small_net.ids:
        out = m.retro_model(x, 50)
        assert [r for r, _ in out] == [r for r in small_net.producers_of(x) if m.visible[r.id]]
        assert all(s == r.plausibility for r, s in out)
    x = max(small_net.ids, key=lambda x: len(small_net.producers_of(x)))
    assert len(Models(small_net).retro_model(x, 1)) == 1
    with pytest.raises(InputError):
        m.retro_model(x, 0)


def test_value_heuristics(small_net):
    exact = Models(small_net, heuristic="exact")
    zero = Models(small_net, heuristic="zero")
    noisy = Models(small_net, ModelConfig(noise_sigma=0.5, seed=3), heuristic="noisy")
    for x in small_net.ids:
        assert zero.value(x) == 0.0
        assert exact.value(x) == exact.vm[x]
        assert noisy.value(x) >= 0.0
        if x in small_net.buyables:
            assert noisy.value(x) == 0.0
    assert any(noisy.value(x) != exact.value(x) for x in small_net.ids)


def _forward_net():
    # from a: T1 -> p1 (0.9), T1 -> p2 (0.4), T2 -> q (0.5, bimolecular with b1/b2)
    rows = [("R1", ["a"], "p1", 0.9, "T1"), ("R2", ["a"], "p2", 0.4, "T1"),
            ("R3", ["a", "b1"], "q", 0.5, "T2"), ("R4", ["a", "b2"], "q2", 0.6, "T2"),
            ("R5", ["p2"], "g", 0.5, "T1"), ("R6", ["z"], "a", 0.5, "T1")]
    fps = {"a": 0b1100, "b1": 0b0011, "b2": 0b1000, "z": 0b0001}
    return build_network(rows, {"b1", "b2", "z"}, fps=fps, nbits=4)


def test_forward_template_score():
    net = _forward_net()
    m = Models(net)
    pred = m.predict_distance
    got = m.forward_template_model("a", "g", 5)
    want = {}
    for r in net.consumers_of("a"):
        s = r.plausibility * math.exp(-ALPHA * pred(r.product, "g"))
        want[r.template] = max(want.get(r.template, 0), s)
    assert [t.id for t in got] == sorted(want, key=lambda t: (-want[t], t))
    # p2 is one step from g: T1 scores max(0.9 * 2^-10, 0.4 * 2^-1)
    assert want["T1"] == 0.4 * 0.5
    plain = m.forward_template_model("a", "g", 5, use_distance=False)
    assert [t.id for t in plain] == ["T1", "T2"]
    assert len(m.forward_template_model("a", "g", 1)) == 1


def test_building_block_model():
    net = _forward_net()
    m = Models(net)
    assert m.compatible_partners("a", "T2") == {"b1": "q", "b2": "q2"}
    got = m.building_block_model("a", "g", "T2", 2)
    assert sorted(got) == ["b1", "b2"]
    assert len(m.building_block_model("a", "g", "T2", 1)) == 1
    with pytest.raises(ContractViolation):
        m.building_block_model("a", "g", "T1", 1)
    with pytest.raises(InputError):
        m.building_block_model("a", "g", "nope", 1)
    assert m.building_block_model("p1", "g", "T2", 2) == []


def test_building_block_fallback_when_retrieval_misses():
    from bidesp import knn
    net = _forward_net()
    m = Models(net)
    # index holding only z: retrieval never returns a compatible partner
    idx = knn.build([("z", net.molecules["z"].fingerprint)], dim=4)
    got = m.building_block_model("a", "g", "T2", 1, knn_index=idx)
    assert got == ["b1"]  # neither partner indexed: ties broken by id


def test_forward_reaction():
    net = _forward_net()
    m = Models(net)
    assert m.forward_reaction("T1", "a").id == "R1"  # most plausible first
    assert m.forward_reaction("T2", "a", "b1").product == "q"
    assert m.apply_forward_template("T2", "a", "z") is None
    with pytest.raises(ContractViolation):
        m.forward_reaction("T2", "a")
    with pytest.raises(ContractViolation):
        m.forward_reaction("T1", "a", "b1")
    with pytest.raises(InputError):
        m.forward_reaction("T1", "nope")


def test_cost_modes(small_net):
    r = next(iter(small_net.reactions.values()))
    assert Models(small_net, cost_mode="unit").cost(r) == 1.0
    assert Models(small_net).cost(r) == -math.log(r.plausibility) + 0.0
