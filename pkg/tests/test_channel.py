import itertools
import json

import numpy as np
import pytest

from cqstein.channel import (
    CapacityError,
    ChannelFormatError,
    CQChannel,
    channel_from_dict,
    channel_power,
    choi,
    diamond_distance,
    family_members_grid,
    hull_distance,
    hull_family,
    load_channel,
    make_channel,
    mix_channels,
    pure,
    random_channel,
    random_density,
    replacer,
    replacer_family,
    tensor_channels,
    trace_distance,
)
from cqstein.hermit import op_leq

KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)
PLUS = pure([1, 1])


def orth():
    return make_channel([KET0, KET1])


def test_trace_distance_examples():
    rho = random_density(3, np.random.default_rng(0))
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-14)
    assert trace_distance(KET0, KET1) == pytest.approx(1)
    # Oracle: pure-state trace distance sqrt(1 - |<0|+>|^2).
    assert trace_distance(KET0, PLUS) == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_trace_distance_dim_mismatch():
    with pytest.raises(ValueError):
        trace_distance(KET0, np.eye(3) / 3)


def test_diamond_examples():
    phi = orth()
    assert diamond_distance(phi, phi) == 0
    assert diamond_distance(phi, replacer(KET0, phi.labels)) == pytest.approx(1)


@pytest.mark.parametrize("seed", range(5))
def test_diamond_is_max_over_inputs(seed):
    rng = np.random.default_rng(seed)
    a, b = random_channel(3, 2, rng), random_channel(3, 2, rng)
    per = [0.5 * np.sum(np.abs(np.linalg.eigvalsh(x - y))) for x, y in zip(a.outputs, b.outputs)]
    assert diamond_distance(a, b) == pytest.approx(max(per), abs=1e-12)


def test_diamond_alphabet_mismatch():
    with pytest.raises(ValueError):
        diamond_distance(orth(), make_channel([KET0, KET1, KET0]))


@pytest.mark.parametrize("seed", range(10))
def test_diamond_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_channel(2, 2, rng) for _ in range(3))
    assert diamond_distance(a, b) == pytest.approx(diamond_distance(b, a), abs=1e-12)
    assert diamond_distance(a, c) <= diamond_distance(a, b) + diamond_distance(b, c) + 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_diamond_convexity(seed):
    rng = np.random.default_rng(seed)
    a1, a1p, a2, a2p = (random_channel(2, 2, rng) for _ in range(4))
    p = rng.uniform()
    lhs = diamond_distance(mix_channels([p, 1 - p], [a1, a1p]), mix_channels([p, 1 - p], [a2, a2p]))
    assert lhs <= p * diamond_distance(a1, a2) + (1 - p) * diamond_distance(a1p, a2p) + 1e-10


def test_choi_examples():
    rho = random_density(2, np.random.default_rng(1))
    J = choi(replacer(rho, ["a", "b"]))
    assert np.allclose(J, np.kron(np.eye(2), rho))
    assert np.trace(J).real == pytest.approx(2)
    assert np.allclose(choi(orth()), np.diag([1, 0, 0, 1]))


def test_choi_linear():
    rng = np.random.default_rng(2)
    a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
    assert np.allclose(choi(mix_channels([0.3, 0.7], [a, b])), 0.3 * choi(a) + 0.7 * choi(b))


def test_choi_of_power_is_permuted_tensor():
    rng = np.random.default_rng(3)
    phi = random_channel(2, 2, rng)
    J2 = choi(channel_power(phi, 2))
    J = choi(phi)
    # choi(phi)^{(x)2} lives on X1 D1 X2 D2; reorder to X1 X2 D1 D2.
    T = np.kron(J, J).reshape([2, 2, 2, 2] * 2).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    assert np.allclose(J2, T)


def test_power_entrywise():
    rng = np.random.default_rng(4)
    phi = random_channel(2, 2, rng)
    p2 = channel_power(phi, 2)
    for a, b in itertools.product(phi.labels, repeat=2):
        assert np.allclose(p2(f"{a}|{b}"), np.kron(phi(a), phi(b)))
    assert channel_power(phi, 1) is phi


def test_power_with_trivial_single_input():
    phi = random_channel(2, 2, np.random.default_rng(5))
    triv = make_channel([np.eye(1)], labels=["e"])
    t = tensor_channels(phi, triv)
    assert [np.allclose(o, p) for o, p in zip(t.outputs, phi.outputs)] == [True, True]


def test_power_split():
    phi = random_channel(2, 2, np.random.default_rng(6))
    lhs = channel_power(phi, 3)
    rhs = tensor_channels(channel_power(phi, 2), phi)
    for o, p in zip(lhs.outputs, rhs.outputs):
        assert np.allclose(o, p)


def test_power_size_guard():
    with pytest.raises(CapacityError):
        channel_power(orth(), 6)


@pytest.mark.parametrize("family", ["replacer", "hull"])
def test_full_rank_witness(family):
    rng = np.random.default_rng(7)
    if family == "replacer":
        F = replacer_family(["0", "1"], 2)
    else:
        F = hull_family([random_channel(2, 2, rng) for _ in range(3)])
    assert F.lambda_min > 0
    for o in F.full_rank_witness.outputs:
        assert op_leq(F.lambda_min * np.eye(2), o, tol=1e-12)


def test_hull_without_full_rank_rejected():
    with pytest.raises(ValueError):
        hull_family([orth()])


def test_replacer_grid_contains_maximally_mixed():
    F = replacer_family(["0", "1"], 2)
    members = family_members_grid(F, 0.5)
    assert any(np.allclose(m.outputs[0], np.eye(2) / 2) for m in members)
    for m in members:
        assert F.contains(m)


def test_hull_grid_weights():
    rng = np.random.default_rng(8)
    g = [random_channel(2, 2, rng) for _ in range(2)]
    F = hull_family(g)
    members = family_members_grid(F, 0.5)
    assert len(members) == 3
    for m, w in zip(members, ([0, 1], [0.5, 0.5], [1, 0])):
        assert np.allclose(choi(m), w[0] * choi(g[0]) + w[1] * choi(g[1]))


@pytest.mark.parametrize("resolution", [0.5, 0.3, 0.2])
def test_hull_grid_mesh(resolution):
    rng = np.random.default_rng(9)
    F = hull_family([random_channel(2, 2, rng) for _ in range(3)])
    m = int(np.ceil(1 / resolution))
    pts = [np.array(c + (m - sum(c),)) / m for c in itertools.product(range(m + 1), repeat=2) if sum(c) <= m]
    for _ in range(200):
        w = rng.dirichlet(np.ones(3))
        assert min(np.max(np.abs(w - p)) for p in pts) <= resolution
    assert len(family_members_grid(F, resolution)) == len(pts)


def test_replacer_grid_mesh_bloch():
    F = replacer_family(["0"], 2)
    members = family_members_grid(F, 0.25)
    rng = np.random.default_rng(10)
    for _ in range(100):
        rho = random_density(2, rng)
        best = min(trace_distance(rho, m.outputs[0]) for m in members)
        assert best <= 0.25


def test_replacer_grid_unsupported_dim():
    with pytest.raises(NotImplementedError):
        family_members_grid(replacer_family(["0"], 3), 0.5)


def test_hull_contains():
    rng = np.random.default_rng(11)
    g = [random_channel(2, 2, rng) for _ in range(3)]
    F = hull_family(g)
    assert F.contains(mix_channels([0.2, 0.5, 0.3], g))
    assert hull_distance(F, orth())[0] > 1e-3


def test_json_roundtrip(tmp_path):
    phi = random_channel(3, 2, np.random.default_rng(12))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(phi.to_dict()))
    back = load_channel(path)
    assert back.labels == phi.labels
    for a, b in zip(back.outputs, phi.outputs):
        assert np.allclose(a, b)


@pytest.mark.parametrize(
    "payload, fragment",
    [
        ({"inputs": ["0"], "dim": 2}, "outputs"),
        ({"inputs": ["0"], "dim": 2, "outputs": {"0": [[1, 0], [0, 0.5]]}}, "outputs['0']"),
        ({"inputs": ["0"], "dim": 2, "outputs": {"0": [[0.5, 1], [0, 0.5]]}}, "outputs['0']"),
        ({"inputs": ["0"], "dim": 2, "outputs": {"0": [[1, 0]]}}, "rows"),
        ({"inputs": ["0", "1"], "dim": 1, "outputs": {"0": [[1]]}}, "'1'"),
    ],
)
def test_json_rejects(payload, fragment):
    with pytest.raises(ChannelFormatError) as err:
        channel_from_dict(payload, source="f.json")
    assert "f.json" in str(err.value) and fragment in str(err.value)


def test_load_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    with pytest.raises(ChannelFormatError, match="line 1"):
        load_channel(path)


def test_channel_rejects_bad_outputs():
    with pytest.raises(ChannelFormatError):
        CQChannel(["0", "0"], [KET0, KET1])
    with pytest.raises(ChannelFormatError):
        CQChannel(["0", "1"], [KET0, np.eye(3) / 3])
