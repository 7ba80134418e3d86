from __future__ import annotations

import numpy as np

from idp_darkpool.matching import Reveal, Side
from idp_darkpool.protocol import BidPlan, prepare_submission


def random_plans(rng: np.random.Generator, max_real: int = 200, max_fake: int = 200,
                 prices: tuple[int, int] = (90, 110)) -> list[BidPlan]:
    """Owners on both sides with at most ``max_real`` real and ``max_fake``
    fake nodes per side."""
    plans = []
    for side in (Side.BUY, Side.SELL):
        real_left = int(rng.integers(0, max_real + 1))
        fake_left = int(rng.integers(0, max_fake + 1))
        k = 0
        while real_left or fake_left:
            real = int(rng.integers(0, min(real_left, 12) + 1))
            fake = int(rng.integers(0, min(fake_left, 6) + 1))
            if real + fake == 0:
                if real_left:
                    real = 1
                else:
                    fake = 1
            real_left -= real
            fake_left -= fake
            price = int(rng.integers(prices[0], prices[1] + 1))
            plans.append(BidPlan(f"{side.value[0]}{k:04d}", side, price, real, fake))
            k += 1
    return plans


def build_nodes(plans, seed: int = 0):
    """Committed nodes for every plan, with the plan owner as handle."""
    nodes, secrets = [], {}
    for j, plan in enumerate(plans):
        ns, s = prepare_submission(plan, np.random.default_rng([seed, j]))
        nodes.extend(ns)
        secrets[plan.owner] = s
    return nodes, secrets


class SecretsOracle:
    """Answers opening requests from client secrets and logs each request."""

    def __init__(self, secrets):
        self.secrets = secrets
        self.asked = []

    def __call__(self, node) -> Reveal:
        self.asked.append(node.key)
        s = self.secrets[node.owner_handle]
        cascade = ()
        if not s.is_real(node.list_index):
            cascade = tuple((i, s.flag_openings[i]) for i in range(node.list_index + 1, s.count))
        return Reveal(s.flag_openings[node.list_index], cascade)


def real_prices(plans):
    buys = [p.price for p in plans if p.side is Side.BUY for _ in range(p.real)]
    sells = [p.price for p in plans if p.side is Side.SELL for _ in range(p.real)]
    return buys, sells
