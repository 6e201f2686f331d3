import math

import numpy as np
import pytest

import oracles
from conftest import random_pd
from cqstein.channel import (
    channel_power,
    hull_family,
    make_channel,
    mix_channels,
    pure,
    random_channel,
    random_classical_channel,
    random_density,
    replacer,
    replacer_family,
)
from cqstein.conversion import identity_superchannel, random_superchannel, discard_prepare
from cqstein.divergence import divergence_to_family
from cqstein.hypothesis import (
    TestPlan,
    beta_channel,
    beta_family,
    beta_monotone_check,
    beta_state,
    epsilon_0,
    info_spectrum_errors,
    np_curve,
    renyi_converse_bound,
    scan_csv,
    scan_json,
    stein_scan,
    update_mix,
    update_split,
)

KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)
PLUS = pure([1, 1])
MIX = np.eye(2) / 2


def orth():
    return make_channel([KET0, KET1])


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5, 0.9])
def test_beta_state_same(eps):
    rho = random_pd(3, np.random.default_rng(0))
    assert beta_state(rho, rho, eps) == pytest.approx(1 - eps, abs=1e-9)


@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_beta_state_orthogonal(eps):
    assert beta_state(pure([1, 0]), pure([0, 1]), eps) == pytest.approx(0, abs=1e-12)


def test_beta_state_eps0_plus():
    assert beta_state(PLUS, MIX, 0.0) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("eps", [0.05, 0.2, 0.6])
@pytest.mark.parametrize("seed", range(3))
def test_beta_state_matches_sdp(eps, seed):
    rng = np.random.default_rng(seed)
    a, b = random_density(2, rng), random_density(2, rng)
    assert beta_state(a, b, eps) == pytest.approx(oracles.beta_state_sdp(a, b, eps), abs=1e-6)


def test_np_curve_shape():
    rng = np.random.default_rng(1)
    curve = np_curve(random_density(3, rng), random_density(3, rng))
    pts = curve.sample(np.linspace(0, 1, 41))
    betas = [b for _, b in pts]
    assert betas[-1] == 0 and betas[0] <= 1 + 1e-12
    assert all(y <= x + 1e-12 for x, y in zip(betas, betas[1:]))
    second = np.diff(betas, 2)
    assert np.all(second >= -1e-9)


def test_np_curve_commuting_breakpoints():
    curve = np_curve(np.diag([0.6, 0.3, 0.1]), np.diag([0.1, 0.3, 0.6]))
    assert len(curve.breakpoints()) <= 3 + 2


def test_beta_channel_examples():
    rng = np.random.default_rng(2)
    phi = random_channel(2, 2, rng)
    assert beta_channel(phi, phi, 0.2).value == pytest.approx(0.8, abs=1e-9)
    a = make_channel([KET0, MIX])
    b = make_channel([KET1, MIX])
    r = beta_channel(a, b, 0.1)
    assert r.value == pytest.approx(0, abs=1e-12)
    assert r.plan.p[0] == pytest.approx(1)


@pytest.mark.parametrize("eps", [0.05, 0.3])
@pytest.mark.parametrize("seed", range(4))
def test_beta_channel_matches_lp(eps, seed):
    rng = np.random.default_rng(seed)
    a, b = random_classical_channel(2, 3, rng), random_classical_channel(2, 3, rng)
    assert beta_channel(a, b, eps).value == pytest.approx(oracles.beta_lp(a.outputs, b.outputs, eps), abs=1e-4)


@pytest.mark.parametrize("eps", [0.05, 0.3])
@pytest.mark.parametrize("seed", range(4))
def test_beta_channel_matches_sdp(eps, seed):
    rng = np.random.default_rng(seed)
    a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
    r = beta_channel(a, b, eps)
    ref = oracles.beta_channel_sdp(a.outputs, b.outputs, eps)
    assert r.value == pytest.approx(ref, abs=1e-6)
    assert r.lower <= r.value + 1e-12
    assert r.plan.validate()
    e = r.plan.errors(a, b)
    assert e.type1 <= eps + 1e-9
    assert e.type2 == pytest.approx(r.value, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_beta_channel_mixing_helps(seed):
    rng = np.random.default_rng(seed)
    a, b = random_channel(3, 2, rng), random_channel(3, 2, rng)
    eps = 0.2
    per = min(beta_state(x, y, eps) for x, y in zip(a.outputs, b.outputs))
    assert beta_channel(a, b, eps).value <= per + 1e-9


def test_beta_single_input_equals_state():
    rng = np.random.default_rng(6)
    x, y = random_density(2, rng), random_density(2, rng)
    a, b = make_channel([x]), make_channel([y])
    assert beta_channel(a, b, 0.1).value == pytest.approx(beta_state(x, y, 0.1), abs=1e-12)


def test_beta_nonincreasing_in_eps():
    rng = np.random.default_rng(7)
    a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
    vals = [beta_channel(a, b, e).value for e in np.linspace(0, 0.95, 20)]
    assert all(y <= x + 1e-9 for x, y in zip(vals, vals[1:]))


def test_beta_eps_domain():
    with pytest.raises(ValueError):
        beta_channel(orth(), orth(), 1.0)


def test_family_member_gives_one_minus_eps():
    rng = np.random.default_rng(8)
    F = replacer_family(["0", "1"], 2)
    rep = replacer(random_density(2, rng), F.labels)
    assert beta_family(rep, F, 0.2).value == pytest.approx(0.8, abs=1e-6)


def test_family_orth_replacer():
    fb = beta_family(orth(), replacer_family(["0", "1"], 2), 0.1)
    assert fb.value == pytest.approx(0.45, abs=1e-6)
    assert fb.certificate.gap <= 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_family_minimax_hull(seed):
    rng = np.random.default_rng(seed)
    phi = random_channel(2, 2, rng)
    F = hull_family([random_channel(2, 2, rng) for _ in range(2 + seed % 2)])
    fb = beta_family(phi, F, 0.2, use_dual_hint=False)
    c = fb.certificate
    assert c.gap <= 1e-4 and not c.flagged
    assert c.lower <= c.upper + 1e-9
    # The adversary's value is attained: beta against it equals the lower side.
    assert beta_channel(phi, c.adversary, 0.2).value == pytest.approx(c.lower, abs=1e-8)
    assert c.plan.type1(phi) <= 0.2 + 1e-9


def test_family_grid_saddle_oracle():
    phi = random_channel(2, 2, np.random.default_rng(9))
    F = replacer_family(phi.labels, 2)
    fb = beta_family(phi, F, 0.1)
    from cqstein.channel import family_members_grid

    grid_best = max(beta_channel(phi, m, 0.1).value for m in family_members_grid(F, 0.1))
    assert grid_best <= fb.value + 1e-9
    assert fb.value - grid_best <= 0.05


def test_monotone_identity_and_replacer():
    rng = np.random.default_rng(10)
    a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
    holds, before, after = beta_monotone_check(a, b, identity_superchannel(a.labels, 2), 0.1)
    assert holds and after == pytest.approx(before, abs=1e-8)
    theta = discard_prepare(a.labels, 2, replacer(MIX, ["0", "1"]))
    holds, _, after = beta_monotone_check(a, b, theta, 0.1)
    assert holds and after == pytest.approx(0.9, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_monotone_random_superchannel(seed):
    rng = np.random.default_rng(seed)
    a, b = random_channel(2, 2, rng), random_channel(2, 2, rng)
    theta = random_superchannel(a.labels, 2, ["0", "1", "2"], 2, rng)
    assert beta_monotone_check(a, b, theta, 0.15)[0]


def test_renyi_bound_member():
    F = replacer_family(["0", "1"], 2)
    rep = replacer(random_density(2, np.random.default_rng(11)), F.labels)
    assert renyi_converse_bound(rep, F, 0.1) >= -math.log(0.9) - 1e-9


def test_renyi_bound_eps_zero():
    F = replacer_family(["0", "1"], 2)
    phi = random_channel(2, 2, np.random.default_rng(12))
    assert renyi_converse_bound(phi, F, 0.0, (2.0,)) == pytest.approx(divergence_to_family(phi, F, 2.0).value)


def test_renyi_bound_orth_dominates_measured():
    F = replacer_family(["0", "1"], 2)
    b = renyi_converse_bound(orth(), F, 0.1)
    assert math.isfinite(b)
    assert -math.log(beta_family(orth(), F, 0.1).value) <= b + 1e-6


def test_renyi_bound_domain():
    with pytest.raises(ValueError):
        renyi_converse_bound(orth(), replacer_family(["0", "1"], 2), 0.1, (1.0, 2.0))


def test_info_spectrum_extremes():
    rng = np.random.default_rng(13)
    a = make_channel([random_pd(2, rng), random_pd(2, rng)])
    b = make_channel([random_pd(2, rng), random_pd(2, rng)])
    e, _ = info_spectrum_errors(a, b, [0.5, 0.5], 50.0)
    assert e.type1 == pytest.approx(1) and e.type2 == pytest.approx(0)
    e, _ = info_spectrum_errors(a, b, [0.5, 0.5], -50.0)
    assert e.type1 == pytest.approx(0, abs=1e-12) and e.type2 == pytest.approx(1)


@pytest.mark.parametrize("R", [-0.5, 0.0, 0.2, 0.5, 1.0])
@pytest.mark.parametrize("n", [1, 2])
def test_info_spectrum_type2_bound(R, n):
    rng = np.random.default_rng(14)
    a, b = random_channel(2, 2, rng), make_channel([random_pd(2, rng) for _ in range(2)])
    an, bn = channel_power(a, n), channel_power(b, n)
    p = np.full(an.n_inputs, 1 / an.n_inputs)
    e, plan = info_spectrum_errors(an, bn, p, R, n)
    for T, o in zip(plan.T, bn.outputs):
        assert np.real(np.trace(T @ o)) <= math.exp(-R * n) + 1e-12
    assert e.type2 <= math.exp(-R * n) + 1e-12


def test_stein_scan_member_zero():
    F = replacer_family(["0", "1"], 2)
    rep = replacer(random_density(2, np.random.default_rng(15)), F.labels)
    rows = stein_scan(rep, F, 0.1, 2, alpha_grid=(1.5, 2.0))
    for r in rows:
        assert abs(r.reference) <= 1e-8
        assert r.lower_exponent <= 1e-6 + (-math.log(0.9)) / r.n


def test_stein_scan_orth():
    rows = stein_scan(orth(), replacer_family(["0", "1"], 2), 0.1, 2, alpha_grid=(1.5, 2.0))
    for r in rows:
        assert r.reference == pytest.approx(math.log(2), abs=1e-7)
        assert r.lower_exponent <= r.upper_exponent + 1e-6
    text = scan_csv(rows)
    assert text.splitlines()[0].startswith("n,lower,upper,reference")
    assert len(text.splitlines()) == 3
    assert '"n": 2' in scan_json(rows)


def test_stein_scan_guard():
    with pytest.raises(ValueError):
        stein_scan(orth(), replacer_family(["0", "1"], 2), 0.1, 5)


def test_update_mix_replacers():
    F = replacer_family(["0", "1"], 2)
    rng = np.random.default_rng(16)
    r = [replacer(random_density(2, rng), F.labels) for _ in range(3)]
    out = update_mix(*r, F=F)
    assert F.contains(out)


def test_update_mix_rejects_nonmember():
    F = replacer_family(["0", "1"], 2)
    with pytest.raises(ValueError):
        update_mix(orth(), orth(), orth(), F=F)


def test_epsilon_0():
    assert epsilon_0(0.2, 0.1, 0.1, 0.5) == pytest.approx(0.1 / 0.8 * 0.4)
    with pytest.raises(ValueError):
        epsilon_0(0.1, 0.2, 0.0, 1.0)


def test_update_split_identical():
    rng = np.random.default_rng(17)
    phi = make_channel([np.diag(rng.dirichlet([1, 1])) for _ in range(2)])
    s = update_split(phi, phi, 0.3, 0.8, 5.0)
    for P1 in s.Pi1:
        assert np.allclose(P1, np.eye(2))
    assert np.allclose(s.bound, 0.3 + 1e-3)
    assert s.holds


@pytest.mark.parametrize("seed", range(6))
def test_update_split_diagonal(seed):
    rng = np.random.default_rng(seed)
    a = make_channel([np.diag(rng.dirichlet([1, 1, 1])) for _ in range(2)])
    b = make_channel([np.diag(rng.dirichlet([2, 2, 2])) for _ in range(2)])
    R1, R2 = 0.1, 0.6
    Cp = -math.log(min(np.min(np.diag(o).real) for o in b.outputs)) + 0.01
    s = update_split(a, b, R1, R2, Cp)
    eps0 = epsilon_0(0.1, 0.05, R1, R2)
    for x in range(2):
        p, q = np.diag(a.outputs[x]).real, np.diag(b.outputs[x]).real
        # Scalar likelihood-ratio bins.
        bin1 = p < math.exp(R1 + 1e-3) * q
        bin3 = p >= math.exp(R2 + eps0 + 1e-3) * q
        assert np.allclose(np.diag(s.Pi1[x]).real, bin1)
        assert np.allclose(np.diag(s.Pi3[x]).real, bin3)
        assert np.allclose(s.Pi1[x] + s.Pi2[x] + s.Pi3[x], np.eye(3))
    assert s.applicable and s.holds


def test_update_split_noncommuting_rejected():
    with pytest.raises(ValueError):
        update_split(make_channel([PLUS]), make_channel([np.diag([0.3, 0.7])]), 0.1, 0.5, 3.0)


def test_plan_validate():
    bad = TestPlan(("0",), np.array([1.0]), (2 * np.eye(2),))
    assert not bad.validate()
    good = TestPlan(("0",), np.array([1.0]), (0.5 * np.eye(2),))
    assert good.validate()


def test_mixture_member_hull_beta():
    rng = np.random.default_rng(18)
    gens = [random_channel(2, 2, rng) for _ in range(2)]
    F = hull_family(gens)
    member = mix_channels([0.4, 0.6], gens)
    assert beta_family(member, F, 0.3).value == pytest.approx(0.7, abs=1e-5)
