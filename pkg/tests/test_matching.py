import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idp_darkpool.commitment import Opening
from idp_darkpool.matching import (
    Flag,
    Matcher,
    Order,
    Popularity,
    ProtocolStateError,
    ProtocolViolation,
    Reveal,
    Side,
    baseline_fills,
    baseline_match,
    build_graph,
    extreme_price,
    run_matching,
    select_polar_pair,
)
from idp_darkpool.protocol import BidPlan
from helpers import SecretsOracle, build_nodes, random_plans, real_prices
from oracles import brute_force_matching, max_unit_matching


def graph_of(*plans, seed=0):
    nodes, secrets = build_nodes(plans, seed)
    return build_graph(nodes, seed), secrets


def buy(owner, price, real=1, fake=0):
    return BidPlan(owner, Side.BUY, price, real, fake)


def sell(owner, price, real=1, fake=0):
    return BidPlan(owner, Side.SELL, price, real, fake)


# -- build_graph ---------------------------------------------------------

def test_compatible_pair_kept():
    g, _ = graph_of(buy("a", 100), sell("b", 99))
    assert g.size(Side.BUY) == 1 and g.size(Side.SELL) == 1
    assert g.has_edges()


def test_incompatible_pair_pruned():
    g, _ = graph_of(buy("a", 98), sell("b", 99))
    assert g.is_empty()


def test_isolated_buy_pruned():
    g, _ = graph_of(buy("a", 101), buy("b", 99), sell("c", 100), sell("d", 100))
    assert [n.price for n in g.nodes(Side.BUY)] == [101]
    assert [n.price for n in g.nodes(Side.SELL)] == [100, 100]
    assert not g.has_isolated()


def test_owner_nodes_keep_list_order_within_level():
    g, _ = graph_of(buy("a", 100, 2, 2), buy("b", 100, 1, 1), sell("c", 90))
    nodes = g.nodes(Side.BUY)
    for owner in ("a", "b"):
        idx = [n.list_index for n in nodes if n.owner_handle == owner]
        assert idx == sorted(idx)
    owners = [n.owner_handle for n in nodes]
    # each owner's nodes are contiguous inside the level
    assert owners == sorted(owners, key=owners.index)


def test_owner_order_in_level_depends_on_seed_only():
    plans = [buy(f"o{i}", 100) for i in range(12)] + [sell("s", 90)]
    firsts = {build_graph(build_nodes(plans)[0], seed).nodes(Side.BUY)[0].owner_handle for seed in range(20)}
    assert len(firsts) > 1
    a = [n.owner_handle for n in build_graph(build_nodes(plans)[0], 5).nodes(Side.BUY)]
    b = [n.owner_handle for n in build_graph(build_nodes(plans, seed=1)[0], 5).nodes(Side.BUY)]
    assert a == b


def test_build_rejects_owner_with_two_prices():
    nodes, _ = build_nodes([buy("a", 100), buy("b", 101)])
    nodes[1].owner_handle = "a"
    nodes[1].list_index = 1
    with pytest.raises(ValueError):
        build_graph(nodes, 0)


# -- extreme_price / select_polar_pair -------------------------------------

def test_extreme_prices():
    g, _ = graph_of(buy("a", 101), buy("b", 99), sell("c", 90), sell("d", 92))
    assert extreme_price(g, Side.BUY, Popularity.MOST) == 101
    assert extreme_price(g, Side.BUY, Popularity.LEAST) == 99
    g2, _ = graph_of(buy("a", 110), sell("c", 100), sell("d", 102))
    assert extreme_price(g2, Side.SELL, Popularity.MOST) == 100
    assert extreme_price(g2, Side.SELL, Popularity.LEAST) == 102


def test_extreme_price_of_empty_side():
    g, _ = graph_of(buy("a", 98), sell("b", 99))
    assert extreme_price(g, Side.BUY, Popularity.MOST) is None
    assert extreme_price(g, Side.SELL, Popularity.LEAST) is None


def test_polar_pair_takes_highest_ask():
    g, _ = graph_of(buy("a", 101), sell("b", 100), sell("c", 99))
    u, v = select_polar_pair(g)
    assert (u.owner_handle, v.owner_handle) == ("a", "b")


def test_polar_pair_takes_highest_bid():
    g, _ = graph_of(buy("a", 101), buy("b", 100), sell("c", 99))
    u, v = select_polar_pair(g)
    assert (u.owner_handle, v.owner_handle) == ("a", "c")


def test_polar_pair_on_empty_graph():
    g, _ = graph_of(buy("a", 90), sell("b", 99))
    assert select_polar_pair(g) is None


def test_polar_pair_for_carried_sell_is_top_buy():
    g, _ = graph_of(buy("a", 101), buy("b", 100), sell("c", 99))
    carry = g.nodes(Side.SELL)[0]
    u, v = select_polar_pair(g, carry)
    assert u is carry and v.owner_handle == "a"


def test_polar_pair_requires_no_isolated_nodes():
    g, _ = graph_of(buy("a", 101), sell("b", 100))
    g.remove_node(g.nodes(Side.SELL)[0])
    with pytest.raises(ProtocolStateError):
        select_polar_pair(g)


# -- run_matching ------------------------------------------------------------

def test_single_real_pair_matches():
    g, secrets = graph_of(buy("a", 100), sell("b", 99))
    m = run_matching(g, SecretsOracle(secrets))
    assert len(m) == 1
    assert (m[0].buy.owner_handle, m[0].sell.owner_handle, m[0].price) == ("a", "b", 99)


def test_fake_buy_leaves_sell_isolated():
    g, secrets = graph_of(buy("a", 100, real=0, fake=1), sell("b", 99))
    assert run_matching(g, SecretsOracle(secrets)) == []
    assert g.is_empty()


def test_fake_cascade_removes_owner_and_carries_partner():
    g, secrets = graph_of(buy("a", 101, 1, 3), buy("b", 100, 2, 0), sell("c", 99, 3, 1))
    oracle = SecretsOracle(secrets)
    m = run_matching(g, oracle)
    assert len(m) == 3
    # a's three fakes are opened once, through a single cascade
    assert sum(1 for k in oracle.asked if k[0] == "a") == 2


def test_bad_opening_is_a_protocol_violation():
    g, secrets = graph_of(buy("a", 100), sell("b", 99))

    def liar(node):
        r = SecretsOracle(secrets)(node)
        return Reveal(Opening(r.opening.payload, bytes(16)), r.cascade)

    with pytest.raises(ProtocolViolation):
        run_matching(g, liar)


def test_fake_claim_with_real_successor_is_a_violation():
    g, secrets = graph_of(buy("a", 100, 2, 0), sell("b", 99))
    s = secrets["a"]
    # swap openings so node 0 claims fake while node 1 still opens real
    forged = Reveal(s.flag_openings[0], ((1, s.flag_openings[1]),))
    m = Matcher(g)
    u, v = m.next_attempt()
    with pytest.raises(ProtocolViolation):
        m.resolve(u, Reveal(s.flag_openings[1], ((1, s.flag_openings[1]),)))
    assert forged  # real opening for node 0 is still consistent
    assert m.resolve(u, forged) == []


def test_revealed_flag_is_monotone():
    g, _ = graph_of(buy("a", 100), sell("b", 99))
    node = g.nodes(Side.BUY)[0]
    node.reveal(Flag.REAL)
    node.reveal(Flag.REAL)
    with pytest.raises(ProtocolViolation):
        node.reveal(Flag.FAKE)


@pytest.mark.parametrize("seed", range(60))
def test_matches_oracle_small(seed):
    rng = np.random.default_rng(seed)
    plans = random_plans(rng, max_real=6, max_fake=6, prices=(95, 100))
    buys, sells = real_prices(plans)
    g = build_graph(build_nodes(plans, seed)[0], seed)
    nodes, secrets = build_nodes(plans, seed)
    m = run_matching(build_graph(nodes, seed), SecretsOracle(secrets))
    assert len(m) == max_unit_matching(buys, sells)
    if len(buys) <= 5 and len(sells) <= 5:
        assert len(m) == brute_force_matching(buys, sells)


@pytest.mark.parametrize("seed", range(100, 140))
def test_matches_oracle_large(seed):
    rng = np.random.default_rng(seed)
    plans = random_plans(rng)
    nodes, secrets = build_nodes(plans, seed)
    oracle = SecretsOracle(secrets)
    m = run_matching(build_graph(nodes, seed), oracle)
    assert len(m) == max_unit_matching(*real_prices(plans))
    assert all(p.buy.price >= p.sell.price for p in m)
    assert all(p.buy.revealed_flag is Flag.REAL and p.sell.revealed_flag is Flag.REAL for p in m)
    used = [p.buy.key for p in m] + [p.sell.key for p in m]
    assert len(used) == len(set(used))
    assert len(oracle.asked) == len(set(oracle.asked))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_fake_insensitivity(instance_seed, fake_seed):
    rng = np.random.default_rng(instance_seed)
    plans = random_plans(rng, max_real=30, max_fake=0, prices=(95, 105))
    frng = np.random.default_rng(fake_seed)
    padded = [BidPlan(p.owner, p.side, p.price, p.real, int(frng.integers(0, 5))) for p in plans]
    sizes = []
    for variant, graph_seed in ((plans, 0), (padded, 0), (padded, fake_seed)):
        nodes, secrets = build_nodes(variant)
        sizes.append(len(run_matching(build_graph(nodes, graph_seed), SecretsOracle(secrets))))
    assert sizes[0] == sizes[1] == sizes[2]


def test_prefix_reveal_order():
    rng = np.random.default_rng(77)
    plans = random_plans(rng, max_real=40, max_fake=40, prices=(98, 102))
    nodes, secrets = build_nodes(plans)
    g = build_graph(nodes, 3)
    matcher = Matcher(g)
    by_owner = {}
    for n in nodes:
        by_owner.setdefault(n.owner_handle, []).append(n)
    oracle = SecretsOracle(secrets)
    while (pair := matcher.next_attempt()) is not None:
        for node in pair:
            if node.revealed_flag is Flag.UNKNOWN:
                matcher.resolve(node, oracle(node))
        matcher.settle(*pair)
        for owned in by_owner.values():
            flags = [n.revealed_flag for n in owned]
            reals = [i for i, f in enumerate(flags) if f is Flag.REAL]
            assert reals == list(range(len(reals)))
            fakes = [i for i, f in enumerate(flags) if f is Flag.FAKE]
            assert not fakes or fakes == list(range(fakes[0], len(owned)))
    assert len(matcher.cascades) == len({h for h, _ in matcher.cascades})


def test_determinism():
    plans = random_plans(np.random.default_rng(4), 50, 50)
    runs = []
    for _ in range(2):
        nodes, secrets = build_nodes(plans, 9)
        oracle = SecretsOracle(secrets)
        m = run_matching(build_graph(nodes, 9), oracle)
        runs.append(([(p.buy.key, p.sell.key, p.price) for p in m], oracle.asked))
    assert runs[0] == runs[1]


# -- baseline -------------------------------------------------------------------

def test_baseline_examples():
    assert baseline_match([Order(Side.BUY, 100, 5, "a"), Order(Side.SELL, 99, 3, "b")]) == 3
    assert baseline_match([Order(Side.BUY, 98, 5, "a"), Order(Side.SELL, 99, 3, "b")]) == 0
    assert baseline_match([]) == 0


def test_baseline_fill_prices_and_quantities():
    orders = [Order("buy", 101, 2, "a"), Order("buy", 99, 4, "b"), Order("sell", 100, 3, "c"), Order("sell", 98, 3, "d")]
    fills = baseline_fills(orders)
    assert sum(f.quantity for f in fills) == 5
    assert all(f.buy.price >= f.sell.price for f in fills)
    assert all(f.price == (f.buy.price + f.sell.price) // 2 for f in fills)


@pytest.mark.parametrize("seed", range(50))
def test_baseline_matches_oracle_and_protocol(seed):
    plans = random_plans(np.random.default_rng(seed), 60, 0, (90, 110))
    orders = [Order(p.side, p.price, p.real, p.owner) for p in plans if p.real]
    expected = max_unit_matching(*real_prices(plans))
    assert baseline_match(orders) == expected
    nodes, secrets = build_nodes(plans)
    assert len(run_matching(build_graph(nodes, seed), SecretsOracle(secrets))) == expected


def test_order_validation():
    with pytest.raises(ValueError):
        Order(Side.BUY, 100, 0, "a")
    with pytest.raises(ValueError):
        Order(Side.BUY, 0, 1, "a")
    with pytest.raises(ValueError):
        Order("hold", 100, 1, "a")
