"""Independent reference computations used to freeze expected values.

Nothing here imports the matching or noise code under test.
"""

from __future__ import annotations

import itertools
import math
from collections import deque


def hopcroft_karp(adj: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size; ``adj[u]`` lists right neighbours."""
    INF = math.inf
    match_l = [-1] * len(adj)
    match_r = [-1] * n_right
    dist = [0.0] * len(adj)

    def bfs() -> bool:
        q = deque()
        for u in range(len(adj)):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    size = 0
    while bfs():
        for u in range(len(adj)):
            if match_l[u] == -1 and dfs(u):
                size += 1
    return size


def max_unit_matching(buy_prices: list[int], sell_prices: list[int]) -> int:
    """Maximum number of (buy, sell) unit pairs with buy price >= sell price."""
    adj = [[j for j, s in enumerate(sell_prices) if b >= s] for b in buy_prices]
    return hopcroft_karp(adj, len(sell_prices))


def brute_force_matching(buy_prices: list[int], sell_prices: list[int]) -> int:
    """Exhaustive maximum matching for tiny instances."""
    best = 0
    n = min(len(buy_prices), len(sell_prices))
    for k in range(n, 0, -1):
        for buys in itertools.combinations(range(len(buy_prices)), k):
            for sells in itertools.permutations(range(len(sell_prices)), k):
                if all(buy_prices[b] >= sell_prices[s] for b, s in zip(buys, sells)):
                    return k
    return best


def min_even_bound(epsilon: float, delta: float) -> int:
    """Step through even integers until the bound is met."""
    bound = 2.0 / epsilon * math.log(1.0 / delta)
    z = 0
    while z < bound:
        z += 2
    return z


def geometric_pmf_direct(alpha: float, Z: int) -> list[float]:
    """Normalise alpha**-|Z/2 - x| by summing the weights directly."""
    weights = [alpha ** -abs(Z / 2 - x) for x in range(Z + 1)]
    total = math.fsum(weights)
    return [w / total for w in weights]


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def hockey_stick_subsets(p: dict, q: dict, gamma: float) -> float:
    """sup over every event E of Q(E) - gamma P(E), both directions, by
    enumerating subsets of the joint support. Small supports only."""
    points = sorted(set(p) | set(q))
    best = 0.0
    for r in range(len(points) + 1):
        for event in itertools.combinations(points, r):
            qe = sum(q.get(w, 0.0) for w in event)
            pe = sum(p.get(w, 0.0) for w in event)
            best = max(best, qe - gamma * pe, pe - gamma * qe)
    return best


def shift_divergence_direct(alpha: float, Z: int, gamma: float) -> float:
    """HS between N and 1 + N from the directly normalised pmf."""
    pmf = geometric_pmf_direct(alpha, Z)
    p = {x: m for x, m in enumerate(pmf)}
    q = {x + 1: m for x, m in enumerate(pmf)}
    fwd = sum(max(0.0, q.get(w, 0.0) - gamma * p.get(w, 0.0)) for w in range(Z + 2))
    bwd = sum(max(0.0, p.get(w, 0.0) - gamma * q.get(w, 0.0)) for w in range(Z + 2))
    return max(fwd, bwd)
