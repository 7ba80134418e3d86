"""Server-side matching graph and the polar-opposite matching loop.

Buy and sell nodes are kept on price ladders. Edges are implicit: a buy node
and a sell node are adjacent iff ``buy.price >= sell.price``. With isolated
nodes pruned after every step, any node at the highest buy price is adjacent
to any node at the highest sell price, so matching those polar opposites one
pair at a time yields a maximum matching over the real nodes.
"""

from __future__ import annotations

import bisect
import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from idp_darkpool.commitment import Commitment, Opening, parse_flag, verify


class Side(str, enum.Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def other(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class Flag(str, enum.Enum):
    UNKNOWN = "unknown"
    REAL = "real"
    FAKE = "fake"


class Popularity(str, enum.Enum):
    MOST = "most"
    LEAST = "least"


class ProtocolViolation(RuntimeError):
    """A client answer failed commitment verification or contradicted its list."""


class ProtocolStateError(RuntimeError):
    """The matching graph is not in the state an operation requires."""


@dataclass(frozen=True)
class Order:
    side: Side
    price: int
    quantity: int
    owner: str

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if int(self.price) != self.price or self.price < 1:
            raise ValueError(f"price must be a positive integer tick, got {self.price!r}")
        if int(self.quantity) != self.quantity or self.quantity < 1:
            raise ValueError(f"quantity must be a positive integer, got {self.quantity!r}")


@dataclass(eq=False)
class BidNode:
    side: Side
    price: int
    owner_handle: str
    list_index: int
    flag_commitment: Commitment
    identity_commitment: Commitment
    revealed_flag: Flag = Flag.UNKNOWN

    @property
    def key(self) -> tuple[str, int]:
        return (self.owner_handle, self.list_index)

    def reveal(self, flag: Flag) -> None:
        if flag is Flag.UNKNOWN:
            raise ValueError("cannot reveal a node as unknown")
        if self.revealed_flag is not Flag.UNKNOWN and self.revealed_flag is not flag:
            raise ProtocolViolation(
                f"node {self.key} already revealed {self.revealed_flag.value}, now {flag.value}"
            )
        self.revealed_flag = flag

    def __repr__(self) -> str:
        return f"BidNode({self.side.value}@{self.price} {self.owner_handle}[{self.list_index}] {self.revealed_flag.value})"


@dataclass(frozen=True)
class MatchedPair:
    buy: BidNode
    sell: BidNode
    price: int


def execution_price(buy_price: int, sell_price: int) -> int:
    return (buy_price + sell_price) // 2


class _Ladder:
    """Price levels of one side; each level holds owners in rank order."""

    def __init__(self) -> None:
        self.prices: list[int] = []
        self.levels: dict[int, dict[str, deque[BidNode]]] = {}

    def __len__(self) -> int:
        return len(self.prices)

    def add_owner(self, price: int, handle: str, nodes: Iterable[BidNode]) -> None:
        level = self.levels.get(price)
        if level is None:
            level = self.levels[price] = {}
            bisect.insort(self.prices, price)
        level[handle] = deque(nodes)

    def head_at(self, price: int) -> BidNode:
        level = self.levels[price]
        return next(iter(level.values()))[0]

    def drop_owner(self, price: int, handle: str) -> list[BidNode]:
        level = self.levels[price]
        nodes = list(level.pop(handle))
        if not level:
            self._drop_price(price)
        return nodes

    def drop_node(self, node: BidNode) -> None:
        level = self.levels[node.price]
        queue = level[node.owner_handle]
        if queue[0] is node:
            queue.popleft()
        else:
            queue.remove(node)
        if not queue:
            del level[node.owner_handle]
            if not level:
                self._drop_price(node.price)

    def drop_level(self, price: int) -> list[BidNode]:
        level = self.levels[price]
        self._drop_price(price)
        return [n for q in level.values() for n in q]

    def _drop_price(self, price: int) -> None:
        del self.levels[price]
        del self.prices[bisect.bisect_left(self.prices, price)]

    def nodes(self) -> Iterable[BidNode]:
        for price in self.prices:
            for queue in self.levels[price].values():
                yield from queue

    def count(self) -> int:
        return sum(len(q) for level in self.levels.values() for q in level.values())


class MatchingGraph:
    """Buy and sell ladders plus the matching found so far.

    Buy popularity falls with price and sell popularity rises with it, so the
    most popular buy and the least popular sell are both the highest-priced
    levels. Owners inside a level follow a seeded permutation fixed at build
    time; an owner's nodes follow ``list_index``.
    """

    def __init__(self) -> None:
        self._ladders = {Side.BUY: _Ladder(), Side.SELL: _Ladder()}
        self._owners: dict[str, tuple[Side, int]] = {}
        self.matched: list[MatchedPair] = []

    # -- structure -----------------------------------------------------
    def ladder(self, side: Side) -> _Ladder:
        return self._ladders[side]

    def nodes(self, side: Side) -> list[BidNode]:
        """Nodes of ``side`` in popularity order (most popular first)."""
        ladder = self._ladders[side]
        prices = reversed(ladder.prices) if side is Side.BUY else ladder.prices
        return [n for p in prices for q in ladder.levels[p].values() for n in q]

    def size(self, side: Side) -> int:
        return self._ladders[side].count()

    def owner_nodes(self, handle: str) -> list[BidNode]:
        if handle not in self._owners:
            return []
        side, price = self._owners[handle]
        queue = self._ladders[side].levels.get(price, {}).get(handle)
        return list(queue) if queue else []

    def contains(self, node: BidNode) -> bool:
        loc = self._owners.get(node.owner_handle)
        if loc is None:
            return False
        queue = self._ladders[loc[0]].levels.get(loc[1], {}).get(node.owner_handle)
        return queue is not None and node in queue

    def is_empty(self) -> bool:
        return not self._ladders[Side.BUY] and not self._ladders[Side.SELL]

    def has_edges(self) -> bool:
        buys, sells = self._ladders[Side.BUY], self._ladders[Side.SELL]
        return bool(buys) and bool(sells) and buys.prices[-1] >= sells.prices[0]

    def has_isolated(self) -> bool:
        buys, sells = self._ladders[Side.BUY], self._ladders[Side.SELL]
        if not buys or not sells:
            return bool(buys) or bool(sells)
        return buys.prices[0] < sells.prices[0] or sells.prices[-1] > buys.prices[-1]

    # -- mutation --------------------------------------------------------
    def _add_owner(self, handle: str, nodes: list[BidNode]) -> None:
        side, price = nodes[0].side, nodes[0].price
        self._ladders[side].add_owner(price, handle, nodes)
        self._owners[handle] = (side, price)

    def remove_owner(self, handle: str) -> list[BidNode]:
        loc = self._owners.pop(handle, None)
        if loc is None:
            return []
        side, price = loc
        if handle not in self._ladders[side].levels.get(price, {}):
            return []
        return self._ladders[side].drop_owner(price, handle)

    def remove_node(self, node: BidNode) -> None:
        self._ladders[node.side].drop_node(node)
        if not self.owner_nodes(node.owner_handle):
            self._owners.pop(node.owner_handle, None)

    def prune(self) -> list[BidNode]:
        """Remove every isolated node; returns what was removed."""
        removed: list[BidNode] = []
        buys, sells = self._ladders[Side.BUY], self._ladders[Side.SELL]
        while True:
            if not buys or not sells:
                for ladder in (buys, sells):
                    while ladder:
                        removed.extend(ladder.drop_level(ladder.prices[0]))
                break
            if buys.prices[0] < sells.prices[0]:
                removed.extend(buys.drop_level(buys.prices[0]))
            elif sells.prices[-1] > buys.prices[-1]:
                removed.extend(sells.drop_level(sells.prices[-1]))
            else:
                break
        for node in removed:
            self._owners.pop(node.owner_handle, None)
        return removed


def build_graph(nodes: Sequence[BidNode], seed: int) -> MatchingGraph:
    """Arrange submitted nodes on price ladders and prune isolated ones.

    Each owner handle must carry a single (side, price) and contiguous list
    indices starting at 0.
    """
    by_owner: dict[str, list[BidNode]] = {}
    for node in nodes:
        by_owner.setdefault(node.owner_handle, []).append(node)
    for handle, owned in by_owner.items():
        owned.sort(key=lambda n: n.list_index)
        if {(n.side, n.price) for n in owned} != {(owned[0].side, owned[0].price)}:
            raise ValueError(f"owner {handle} mixes sides or prices")
        if [n.list_index for n in owned] != list(range(len(owned))):
            raise ValueError(f"owner {handle} list indices are not 0..{len(owned) - 1}")

    handles = sorted(by_owner)
    order = np.random.default_rng(seed).permutation(len(handles))
    g = MatchingGraph()
    for i in order:
        g._add_owner(handles[i], by_owner[handles[i]])
    g.prune()
    return g


def extreme_price(g: MatchingGraph, side: Side, which: Popularity) -> int | None:
    prices = g.ladder(Side(side)).prices
    if not prices:
        return None
    highest = Popularity(which) is Popularity.MOST
    if Side(side) is Side.SELL:
        highest = not highest
    return prices[-1] if highest else prices[0]


def select_polar_pair(
    g: MatchingGraph, carry: BidNode | None = None
) -> tuple[BidNode, BidNode] | None:
    """Pick ``(u, v)``: ``u`` is the carried node or the head of the top buy
    level, ``v`` is the head of the opposite extreme level."""
    if g.has_isolated():
        raise ProtocolStateError("matching graph has isolated nodes")
    if not g.has_edges():
        return None
    if carry is None:
        u = g.ladder(Side.BUY).head_at(extreme_price(g, Side.BUY, Popularity.MOST))
        v = g.ladder(Side.SELL).head_at(extreme_price(g, Side.SELL, Popularity.LEAST))
    else:
        if not g.contains(carry):
            raise ProtocolStateError(f"carried node {carry!r} is not in the graph")
        u = carry
        if carry.side is Side.BUY:
            v = g.ladder(Side.SELL).head_at(extreme_price(g, Side.SELL, Popularity.LEAST))
        else:
            v = g.ladder(Side.BUY).head_at(extreme_price(g, Side.BUY, Popularity.MOST))
    buy, sell = (u, v) if u.side is Side.BUY else (v, u)
    if buy.price < sell.price:
        raise ProtocolStateError(f"{u!r} and {v!r} are not adjacent")
    return u, v


@dataclass(frozen=True)
class Reveal:
    """A client's answer for one node.

    ``cascade`` carries openings for every other remaining node of the owner,
    required when the node itself opens as fake.
    """

    opening: Opening
    cascade: tuple[tuple[int, Opening], ...] = ()


RevealOracle = Callable[[BidNode], Reveal]


@dataclass
class Matcher:
    """Step-wise state of the matching loop, shared by the synchronous
    :func:`run_matching` and the message-driven auction server."""

    graph: MatchingGraph
    carry: BidNode | None = None
    attempts: int = 0
    cascades: list[tuple[str, list[BidNode]]] = field(default_factory=list)

    def next_attempt(self) -> tuple[BidNode, BidNode] | None:
        pair = select_polar_pair(self.graph, self.carry)
        if pair is not None:
            self.attempts += 1
        return pair

    def resolve(self, node: BidNode, reveal: Reveal) -> list[BidNode]:
        """Check an opening and apply it; returns the cascaded fake nodes
        (including ``node``) when it opens fake, else an empty list."""
        if not verify(node.flag_commitment, reveal.opening):
            raise ProtocolViolation(f"flag opening for {node!r} does not verify")
        real = parse_flag(reveal.opening.payload)
        if real is None:
            raise ProtocolViolation(f"flag payload for {node!r} is malformed")
        if node.revealed_flag is not Flag.UNKNOWN:
            if (node.revealed_flag is Flag.REAL) != real:
                raise ProtocolViolation(f"{node!r} re-opened with a different flag")
            return []
        remaining = self.graph.owner_nodes(node.owner_handle)
        if not remaining or remaining[0] is not node:
            raise ProtocolStateError(f"{node!r} is not the head of its owner's list")
        if real:
            node.reveal(Flag.REAL)
            return []
        openings = dict(reveal.cascade)
        for other in remaining[1:]:
            opening = openings.get(other.list_index)
            if opening is None or not verify(other.flag_commitment, opening):
                raise ProtocolViolation(f"fake cascade for {other!r} does not verify")
            if parse_flag(opening.payload) is not False:
                raise ProtocolViolation(f"{other!r} follows a fake node but is not fake")
        for other in remaining:
            other.reveal(Flag.FAKE)
        self.graph.remove_owner(node.owner_handle)
        self.cascades.append((node.owner_handle, remaining))
        return remaining

    def drop_owner(self, handle: str) -> list[BidNode]:
        """Remove an owner without an opening, as if all its nodes were fake."""
        removed = self.graph.remove_owner(handle)
        if self.carry is not None and self.carry.owner_handle == handle:
            self.carry = None
        return removed

    def settle(self, u: BidNode, v: BidNode) -> MatchedPair | None:
        """Finish an attempt whose flags are all resolved."""
        pair = None
        both_real = u.revealed_flag is Flag.REAL and v.revealed_flag is Flag.REAL
        if both_real and self.graph.contains(u) and self.graph.contains(v):
            buy, sell = (u, v) if u.side is Side.BUY else (v, u)
            pair = MatchedPair(buy, sell, execution_price(buy.price, sell.price))
            self.graph.remove_node(u)
            self.graph.remove_node(v)
            self.graph.matched.append(pair)
        self.graph.prune()
        left = [n for n in (u, v) if n.revealed_flag is Flag.REAL and self.graph.contains(n)]
        self.carry = left[0] if len(left) == 1 else None
        return pair


def run_matching(g: MatchingGraph, oracle: RevealOracle) -> list[MatchedPair]:
    """Run the matching loop to completion against a synchronous oracle."""
    matcher = Matcher(g)
    while (pair := matcher.next_attempt()) is not None:
        u, v = pair
        for node in (u, v):
            if node.revealed_flag is Flag.UNKNOWN:
                matcher.resolve(node, oracle(node))
        matcher.settle(u, v)
    return list(g.matched)


# -- non-private baseline ------------------------------------------------

@dataclass(frozen=True)
class Fill:
    buy: Order
    sell: Order
    quantity: int
    price: int


def baseline_fills(orders: Sequence[Order]) -> list[Fill]:
    """Maximum unit matching over plain orders with two price-sorted deques.

    Both deques are ascending in price; isolated orders fall off the cheap end
    of the buys and the expensive end of the sells, and fills are taken from
    the expensive ends of both.
    """
    buys = deque(sorted(([o, o.quantity] for o in orders if o.side is Side.BUY), key=lambda e: e[0].price))
    sells = deque(sorted(([o, o.quantity] for o in orders if o.side is Side.SELL), key=lambda e: e[0].price))
    fills: list[Fill] = []
    while buys and sells:
        if buys[0][0].price < sells[0][0].price:
            buys.popleft()
            continue
        if sells[-1][0].price > buys[-1][0].price:
            sells.pop()
            continue
        b, s = buys[-1], sells[-1]
        q = min(b[1], s[1])
        fills.append(Fill(b[0], s[0], q, execution_price(b[0].price, s[0].price)))
        b[1] -= q
        s[1] -= q
        if not b[1]:
            buys.pop()
        if not s[1]:
            sells.pop()
    return fills


def baseline_match(orders: Sequence[Order]) -> int:
    return sum(f.quantity for f in baseline_fills(orders))
