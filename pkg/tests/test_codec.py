import io
import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from durateless.codec import (
    CheckNode,
    CodeEnsemble,
    DecoderGraph,
    DegreeExceedsBlock,
    EnsembleError,
    empirical_ber,
    encode_symbol,
    generate_received,
    peel_decode,
    relay_batch,
    relay_step,
    round_half_up,
)
from durateless.degree import convolve, new_distribution

from conftest import random_ensemble
from oracles import brute_force_peel, chi_square_pvalue

ONE = new_distribution({1: 1.0})


def _ensemble(p1, p2, omega=ONE, phi=ONE, k=20, rho=1.0, gamma=1.0):
    return CodeEnsemble(rho=rho, omega=omega, phi=phi, p1=p1, p2=p2, gamma=gamma, k=k)


def _check(s1=(), s2=(), value=0):
    return CheckNode(frozenset(s1), frozenset(s2), value)


# -- ensemble --------------------------------------------------------------

def test_ensemble_block_lengths():
    e = _ensemble(0.5, 0.5, k=101, rho=0.5)
    assert (e.n1, e.n2) == (51, 101)  # 50.5 rounds up
    assert e.p3 == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(rho=0.0),
        dict(rho=1.5),
        dict(p1=0.7, p2=0.7),
        dict(p1=-0.1, p2=0.5),
        dict(gamma=float("nan")),
        dict(gamma=-1.0),
        dict(k=0),
    ],
)
def test_ensemble_rejects_invalid(kwargs):
    base = dict(rho=1.0, omega=ONE, phi=ONE, p1=0.3, p2=0.3, gamma=1.0, k=10)
    base.update(kwargs)
    with pytest.raises(EnsembleError):
        CodeEnsemble(**base)


def test_ensemble_degree_exceeds_block():
    with pytest.raises(DegreeExceedsBlock):
        _ensemble(0.5, 0.5, omega=new_distribution({6: 1.0}), k=10, rho=0.5)


def test_n_received_needs_k():
    with pytest.raises(EnsembleError):
        replace(_ensemble(0.5, 0.5), k=None).n_received


# -- encoder ---------------------------------------------------------------

def test_encode_forced_singleton():
    assert encode_symbol(1, ONE, np.random.default_rng(0)).tolist() == [0]


def test_encode_forced_full_block():
    assert encode_symbol(5, new_distribution({5: 1.0}), np.random.default_rng(0)).tolist() == [0, 1, 2, 3, 4]


def test_encode_degree_exceeds_block():
    with pytest.raises(DegreeExceedsBlock):
        encode_symbol(3, new_distribution({4: 1.0}), np.random.default_rng(0))


def test_encode_pairs_uniform():
    rng = np.random.default_rng(12)
    dist = new_distribution({2: 1.0})
    n = 100_000
    pairs = [0] * 45
    index = {p: i for i, p in enumerate(itertools.combinations(range(10), 2))}
    for _ in range(n):
        a, b = encode_symbol(10, dist, rng).tolist()
        pairs[index[(a, b)]] += 1
    sigma = math.sqrt(n * (1 / 45) * (44 / 45))
    assert all(abs(c - n / 45) <= 3 * sigma for c in pairs)


def test_encode_subset_sorted_distinct():
    rng = np.random.default_rng(1)
    dist = new_distribution({3: 1.0, 7: 1.0})
    for _ in range(200):
        s = encode_symbol(8, dist, rng)
        assert len(set(s.tolist())) == len(s)
        assert np.all(np.diff(s) > 0)


# -- relay -----------------------------------------------------------------

def test_relay_p1_only_forwards_source1():
    e = _ensemble(1.0, 0.0)
    rng = np.random.default_rng(0)
    assert {relay_step(e, rng).kind for _ in range(500)} == {"forwarded-1"}


def test_relay_step_xors_payloads():
    e = _ensemble(0.0, 0.0, omega=new_distribution({2: 1.0}), phi=new_distribution({3: 1.0}))
    rng = np.random.default_rng(4)
    p1 = rng.integers(0, 2, 20, dtype=np.uint8)
    p2 = rng.integers(0, 2, 20, dtype=np.uint8)
    for _ in range(50):
        c = relay_step(e, rng, p1, p2)
        assert c.kind == "combined" and c.degree == 5
        expected = 0
        for i in c.source1:
            expected ^= int(p1[i])
        for i in c.source2:
            expected ^= int(p2[i])
        assert c.value == expected


def test_relay_kind_frequencies():
    e = _ensemble(1 / 3, 1 / 3)
    n = 1_000_000
    ptr1, _, ptr2, _ = relay_batch(e, n, np.random.default_rng(8))
    has1, has2 = np.diff(ptr1) > 0, np.diff(ptr2) > 0
    counts = [np.count_nonzero(has1 & ~has2), np.count_nonzero(~has1 & has2), np.count_nonzero(has1 & has2)]
    sigma = math.sqrt(n * (1 / 3) * (2 / 3))
    assert sum(counts) == n
    assert all(abs(c - n / 3) <= 3 * sigma for c in counts)


def test_relay_step_and_batch_share_the_mixture_law():
    # 20k scalar draws against the same law: frequencies within 3 sigma
    e = _ensemble(0.2, 0.5)
    rng = np.random.default_rng(3)
    n = 20_000
    kinds = [relay_step(e, rng).kind for _ in range(n)]
    for name, p in [("forwarded-1", 0.2), ("forwarded-2", 0.5), ("combined", 0.3)]:
        assert abs(kinds.count(name) - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_forwarded1_degree_histogram_matches_omega():
    omega = new_distribution({1: 0.1, 2: 0.5, 3: 0.2, 8: 0.2})
    e = _ensemble(1.0, 0.0, omega=omega, k=50)
    ptr1, _, _, _ = relay_batch(e, 1_000_000, np.random.default_rng(21))
    hist = np.bincount(np.diff(ptr1) - 1, minlength=omega.max_degree)
    assert chi_square_pvalue(hist, omega.probs) > 0.01


def test_combined_degree_histogram_matches_convolution():
    omega = new_distribution({1: 0.3, 2: 0.4, 5: 0.3})
    phi = new_distribution({1: 0.2, 3: 0.8})
    e = _ensemble(0.0, 0.0, omega=omega, phi=phi, k=50)
    ptr1, _, ptr2, _ = relay_batch(e, 1_000_000, np.random.default_rng(22))
    degrees = np.diff(ptr1) + np.diff(ptr2)
    target = convolve(omega, phi)
    hist = np.bincount(degrees - 1, minlength=target.max_degree)
    assert chi_square_pvalue(hist, target.probs) > 0.01


# -- received graph --------------------------------------------------------

@pytest.mark.parametrize("rho, gamma, k, expected", [(1.0, 1.05, 1000, 2100), (0.5, 1.0, 100, 150)])
def test_received_check_count(rho, gamma, k, expected):
    e = _ensemble(0.3, 0.3, k=k, rho=rho, gamma=gamma)
    rng = np.random.default_rng(0)
    g = generate_received(e, np.zeros(e.n1, np.uint8), np.zeros(e.n2, np.uint8), rng)
    assert len(g) == expected == e.n_received


def test_zero_payloads_give_zero_values(published):
    e = replace(published, k=500)
    g = generate_received(e, np.zeros(e.n1, np.uint8), np.zeros(e.n2, np.uint8), np.random.default_rng(5))
    assert set(g.values) == {0}


def test_received_payload_length_mismatch():
    e = _ensemble(0.3, 0.3, k=10)
    with pytest.raises(EnsembleError):
        generate_received(e, np.zeros(9, np.uint8), np.zeros(10, np.uint8), np.random.default_rng(0))


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]


# -- peeling ---------------------------------------------------------------

def test_peel_single_degree_one_check():
    g = DecoderGraph.from_checks([_check([0], value=1)], 1, 1)
    rec1, rec2 = peel_decode(g)
    assert rec1.tolist() == [True] and rec2.tolist() == [False]
    assert g.decoded1 == [1]


def test_peel_lone_combined_check_stalls():
    g = DecoderGraph.from_checks([_check([0], [0])], 1, 1)
    rec1, rec2 = peel_decode(g)
    assert not rec1.any() and not rec2.any()


def test_peel_chain_through_combined_check():
    checks = [_check([0], value=1), _check([0], [1], value=0), _check([], [0, 1], value=1)]
    g = DecoderGraph.from_checks(checks, 1, 2)
    peel_decode(g)
    assert g.recovered1.all() and g.recovered2.all()
    assert g.decoded1 == [1] and g.decoded2 == [0, 1]


def _all_checks(k1, k2):
    subsets1 = [s for r in range(k1 + 1) for s in itertools.combinations(range(k1), r)]
    subsets2 = [s for r in range(k2 + 1) for s in itertools.combinations(range(k2), r)]
    return [(a, b) for a in subsets1 for b in subsets2 if a or b]


def test_peel_exhaustive_against_brute_force():
    pool = _all_checks(2, 2)
    assert len(pool) == 15
    graphs = 0
    for size in range(4):
        for combo in itertools.product(pool, repeat=size):
            g = DecoderGraph.from_checks([_check(a, b) for a, b in combo], 2, 2)
            rec1, rec2 = peel_decode(g)
            ref1, ref2 = brute_force_peel(combo, 2, 2)
            assert rec1.tolist() == ref1 and rec2.tolist() == ref2, combo
            graphs += 1
    assert graphs == 1 + 15 + 15**2 + 15**3


def _random_graph(seed, k=50):
    rng = np.random.default_rng(seed)
    e = replace(random_ensemble(rng, max_degree=10, rho=rng.uniform(0.5, 1.0)), k=int(rng.integers(20, k + 1)))
    p1 = rng.integers(0, 256, e.n1, dtype=np.uint8)
    p2 = rng.integers(0, 256, e.n2, dtype=np.uint8)
    return generate_received(e, p1, p2, rng), p1, p2


def _fresh(g):
    return DecoderGraph(g.n1, g.n2, g.ptr1, g.idx1, g.ptr2, g.idx2, list(g.values))


@pytest.mark.parametrize("seed", range(10))
def test_peel_confluence_over_shuffled_orders(seed):
    g, _, _ = _random_graph(seed)
    base1, base2 = peel_decode(_fresh(g))
    for order_seed in range(20):
        rec1, rec2 = peel_decode(_fresh(g), order_rng=np.random.default_rng(order_seed))
        np.testing.assert_array_equal(rec1, base1)
        np.testing.assert_array_equal(rec2, base2)


@pytest.mark.parametrize("seed", range(10))
def test_peel_recovered_payloads_are_correct(seed):
    g, p1, p2 = _random_graph(100 + seed)
    peel_decode(g)
    for flags, decoded, truth in [(g.recovered1, g.decoded1, p1), (g.recovered2, g.decoded2, p2)]:
        for i in np.flatnonzero(flags):
            assert decoded[i] == truth[i]


def test_peel_multibyte_payloads(eep):
    e = replace(eep, k=300)
    rng = np.random.default_rng(9)
    p1 = rng.integers(0, 256, (e.n1, 4), dtype=np.uint8)
    p2 = rng.integers(0, 256, (e.n2, 4), dtype=np.uint8)
    g = generate_received(e, p1, p2, rng)
    peel_decode(g)
    assert g.recovered1.any()
    for i in np.flatnonzero(g.recovered1):
        assert g.decoded1[i] == int.from_bytes(p1[i].tobytes(), "little")


check_strategy = st.tuples(
    st.frozensets(st.integers(0, 5), max_size=3), st.frozensets(st.integers(0, 5), max_size=3)
).filter(lambda c: c[0] or c[1])


@given(st.lists(check_strategy, max_size=12), check_strategy)
@settings(max_examples=200)
def test_adding_a_check_never_shrinks_recovery(checks, extra):
    before = DecoderGraph.from_checks([_check(a, b) for a, b in checks], 6, 6)
    after = DecoderGraph.from_checks([_check(a, b) for a, b in checks + [extra]], 6, 6)
    b1, b2 = peel_decode(before)
    a1, a2 = peel_decode(after)
    assert np.all(a1 >= b1) and np.all(a2 >= b2)


def test_peel_trace_rows():
    checks = [_check([0], value=1), _check([0], [1], value=0)]
    g = DecoderGraph.from_checks(checks, 1, 2)
    buf = io.StringIO()
    peel_decode(g, trace=buf)
    assert buf.getvalue().splitlines() == ["step,check,symbol,block", "0,0,0,1", "1,1,1,2"]


def test_graph_json_round_trip():
    g, _, _ = _random_graph(7, k=20)
    again = DecoderGraph.from_json(g.to_json())
    assert again.checks == g.checks
    np.testing.assert_array_equal(again.kinds(), g.kinds())
    np.testing.assert_array_equal(again.degrees(), g.degrees())


def test_graph_rejects_out_of_range_index():
    with pytest.raises(ValueError):
        DecoderGraph.from_checks([_check([3])], 2, 2)


# -- empirical BER ---------------------------------------------------------

def test_empirical_ber_counts():
    g = DecoderGraph.from_checks([], 4, 3)
    assert empirical_ber(g) == (1.0, 1.0)
    g.recovered1[:] = True
    g.recovered2[:] = True
    assert empirical_ber(g) == (0.0, 0.0)
    g.recovered1[2] = False
    assert empirical_ber(g) == (0.25, 0.0)
