"""Discrete-event simulation of clients and the auction server.

Every message is delayed by a per-pair base delay, drawn once per pair from
the setting's range, plus heavy-tailed jitter. The jitter is a Lomax
(shifted Pareto) draw scaled so that ``jitter_quantile`` of the messages
arrive within ``(1 + jitter_window) * base``.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from idp_darkpool.matching import Order, Side, baseline_fills
from idp_darkpool.noise import NoiseParams, sample_geom
from idp_darkpool.protocol import (
    SERVER,
    AuctionServer,
    BidPlan,
    Client,
    client_rng,
    prepare_submission,
    server_seed,
)
from idp_darkpool.transcript import Transcript, canonical_json

log = logging.getLogger(__name__)

NS_PER_MS = 1_000_000


class Setting(str, enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"
    WORLD = "world"


BASE_DELAY_MS = {
    Setting.LOCAL: (0.021, 0.1),
    Setting.GLOBAL: (21.0, 53.0),
    Setting.WORLD: (10.0, 100.0),
}


class Mode(str, enum.Enum):
    IDP = "idp"
    NONPRIVATE = "nonprivate"


@dataclass(frozen=True)
class NetworkConfig:
    setting: Setting = Setting.LOCAL
    base_delay_range: tuple[float, float] | None = None
    jitter_shape: float = 3.0
    jitter_quantile: float = 0.8
    jitter_window: float = 0.5
    jitter_scale: float | None = None
    timeout_ms: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        if self.base_delay_range is None:
            object.__setattr__(self, "base_delay_range", BASE_DELAY_MS[self.setting])
        lo, hi = self.base_delay_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad base delay range {self.base_delay_range}")
        if self.jitter_shape <= 0 or not 0 < self.jitter_quantile < 1 or self.jitter_window <= 0:
            raise ValueError("jitter parameters out of range")
        if self.jitter_scale is None:
            tail = (1.0 - self.jitter_quantile) ** (-1.0 / self.jitter_shape) - 1.0
            object.__setattr__(self, "jitter_scale", self.jitter_window / tail)
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be non-negative")


class Network:
    """Latency source for one simulation run.

    Base delays and jitter come from separate streams, so the base table does
    not depend on how many messages were sent before a pair first talks.
    """

    def __init__(self, cfg: NetworkConfig, seed: int):
        self.cfg = cfg
        self._base_seed = seed
        self._jitter_rng = np.random.default_rng([seed, 7])
        self._base: dict[tuple[str, str], float] = {}

    def base_delay_ms(self, src: str, dst: str) -> float:
        pair = (src, dst) if src <= dst else (dst, src)
        base = self._base.get(pair)
        if base is None:
            lo, hi = self.cfg.base_delay_range
            rng = np.random.default_rng([self._base_seed, 8, zlib.crc32(pair[0].encode()), zlib.crc32(pair[1].encode())])
            base = self._base[pair] = float(rng.uniform(lo, hi))
        return base

    def sample_latency(self, src: str, dst: str) -> int:
        """Latency in simulated nanoseconds; never below the pair's base."""
        base = self.base_delay_ms(src, dst)
        jitter = 0.0
        if self.cfg.jitter_scale > 0:
            jitter = base * self.cfg.jitter_scale * float(self._jitter_rng.pareto(self.cfg.jitter_shape))
        return math.ceil((base + jitter) * NS_PER_MS)


def sample_latency(network: Network, src: str, dst: str) -> int:
    return network.sample_latency(src, dst)


@dataclass(order=True)
class SimEvent:
    timestamp: int
    seq: int
    source: str = field(compare=False)
    destination: str = field(compare=False)
    payload: object = field(compare=False)
    sent_at: int = field(compare=False, default=0)


class EventQueue:
    """Min-heap on (timestamp, insertion sequence)."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()

    def push(self, timestamp: int, source: str, destination: str, payload, sent_at: int = 0) -> SimEvent:
        ev = SimEvent(timestamp, next(self._seq), source, destination, payload, sent_at)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class SimStats:
    mode: str
    setting: str
    clients: int
    total_orders: int
    wall_seconds: float
    sim_seconds: float
    matched_units: int
    match_rate: float
    messages: int
    bytes: int
    rounds: int = 0

    @property
    def throughput(self) -> float:
        return self.total_orders / self.wall_seconds if self.wall_seconds > 0 else math.inf


# -- non-private messages and roles ---------------------------------------------

@dataclass(frozen=True)
class SubmitOrder:
    owner: str
    seq: int
    side: str
    price: int
    quantity: int

    def to_wire(self) -> dict:
        return {"type": "submit_order", "owner": self.owner, "seq": self.seq, "side": self.side,
                "price": self.price, "quantity": self.quantity}


@dataclass(frozen=True)
class FillNotice:
    owner: str
    seq: int
    quantity: int
    price: int
    counterparty: str

    def to_wire(self) -> dict:
        return {"type": "fill", "owner": self.owner, "seq": self.seq, "quantity": self.quantity,
                "price": self.price, "counterparty": self.counterparty}


@dataclass(frozen=True)
class FillAck:
    owner: str
    seq: int

    def to_wire(self) -> dict:
        return {"type": "fill_ack", "owner": self.owner, "seq": self.seq}


class PlainClient:
    """Client of the non-private venue: one unit order per real unit."""

    def __init__(self, owner: str, plans: Sequence[BidPlan]):
        self.owner = owner
        self.orders = [
            Order(p.side, p.price, 1, owner) for p in plans for _ in range(p.real)
        ]
        self.filled = 0

    def submit(self):
        return [(SERVER, SubmitOrder(self.owner, seq, o.side.value, o.price, o.quantity))
                for seq, o in enumerate(self.orders)]

    def handle(self, msg):
        self.filled += msg.quantity
        return [(SERVER, FillAck(self.owner, msg.seq))]


class PlainServer:
    """Non-private venue: sees every order in the clear and matches them with
    the price-sorted deques, then notifies both sides of each fill."""

    def __init__(self, expected: int):
        self.expected = expected
        self.orders: list[tuple[Order, int]] = []
        self.fills = []
        self.pending_acks = 0
        self.started = False
        self.done = expected == 0

    @property
    def matched_units(self) -> int:
        return sum(f.quantity for f in self.fills)

    def receive(self, src, msg):
        if isinstance(msg, SubmitOrder):
            self.orders.append((Order(Side(msg.side), msg.price, msg.quantity, msg.owner), msg.seq))
            if len(self.orders) == self.expected:
                return self._match()
            return []
        if isinstance(msg, FillAck):
            self.pending_acks -= 1
            self.done = self.pending_acks == 0
            return []
        raise TypeError(f"server cannot handle {type(msg).__name__}")

    def _match(self):
        self.started = True
        self.orders.sort(key=lambda e: (e[0].owner, e[1]))
        seq_of = {id(o): s for o, s in self.orders}
        self.fills = baseline_fills([o for o, _ in self.orders])
        out = []
        for f in self.fills:
            out.append((f.buy.owner, FillNotice(f.buy.owner, seq_of[id(f.buy)], f.quantity, f.price, f.sell.owner)))
            out.append((f.sell.owner, FillNotice(f.sell.owner, seq_of[id(f.sell)], f.quantity, f.price, f.buy.owner)))
        self.pending_acks = len(out)
        self.done = not out
        return out


# -- driver -------------------------------------------------------------------

class Simulation:
    def __init__(self, network: Network, server, clients: dict):
        self.network = network
        self.server = server
        self.clients = clients
        self.queue = EventQueue()
        self.now = 0
        self.messages = 0
        self.bytes = 0

    def send(self, src: str, outbox) -> None:
        for dst, msg in outbox:
            self.messages += 1
            self.bytes += len(canonical_json(msg.to_wire()))
            self.queue.push(self.now + self.network.sample_latency(src, dst), src, dst, msg, self.now)

    def _advance_server(self) -> None:
        server = self.server
        while isinstance(server, AuctionServer) and server.idle:
            out = server.begin_round()
            if server.round is not None and self.network.cfg.timeout_ms is not None:
                deadline = self.now + math.ceil(self.network.cfg.timeout_ms * NS_PER_MS)
                self.queue.push(deadline, SERVER, SERVER, ("timeout", server.round.number), self.now)
            self.send(SERVER, out)
            if out:
                break

    def run(self) -> int:
        for owner in sorted(self.clients):
            self.send(owner, self.clients[owner].submit())
        while self.queue:
            ev = self.queue.pop()
            if ev.timestamp < ev.sent_at:
                raise AssertionError("message delivered before it was sent")
            self.now = ev.timestamp
            if ev.destination == SERVER:
                if isinstance(ev.payload, tuple):
                    out = self.server.on_timeout(ev.payload[1])
                else:
                    out = self.server.receive(ev.source, ev.payload)
                self.send(SERVER, out)
                self._advance_server()
            else:
                self.send(ev.destination, self.clients[ev.destination].handle(ev.payload))
        if not self.server.done:
            raise RuntimeError("simulation stalled before the auction finished")
        return self.now


def _total_orders(workload: Sequence[Sequence[BidPlan]]) -> int:
    return sum(p.count for plans in workload for p in plans)


@dataclass
class SimulationRun:
    stats: SimStats
    transcript: Transcript | None
    matching: list


def simulate(
    workload: Sequence[Sequence[BidPlan]],
    cfg: NetworkConfig,
    mode: Mode | str,
    seed: int,
    unresponsive: Sequence[str] = (),
) -> SimulationRun:
    """Run one auction session over the simulated network.

    ``workload`` holds the bid plans of each client; every plan of a client
    must use that client's owner name.
    """
    mode = Mode(mode)
    started = time.perf_counter()
    network = Network(cfg, seed)
    if mode is Mode.IDP:
        clients = {}
        for c, plans in enumerate(workload):
            if not plans:
                continue
            rng = client_rng(seed, c)
            owner = plans[0].owner
            subs = [prepare_submission(p, rng) for p in plans]
            clients[owner] = Client(owner, subs, responsive=owner not in unresponsive)
        server = AuctionServer(sum(len(c.submissions) for c in clients.values()), server_seed(seed))
    else:
        clients = {plans[0].owner: PlainClient(plans[0].owner, plans) for plans in workload if plans}
        server = PlainServer(sum(len(c.orders) for c in clients.values()))
    sim = Simulation(network, server, clients)
    finished_ns = sim.run()
    wall = time.perf_counter() - started
    total = _total_orders(workload)
    if mode is Mode.IDP:
        matched, rounds, transcript, matching = len(server.matching), server.rounds, server.transcript, server.matching
    else:
        matched, rounds, transcript, matching = server.matched_units, 0, None, server.fills
    stats = SimStats(
        mode.value, cfg.setting.value, len(clients), total, wall, finished_ns / 1e9, matched,
        2 * matched / total if total else 0.0, sim.messages, sim.bytes, rounds,
    )
    return SimulationRun(stats, transcript, matching)


def run_simulation(
    workload: Sequence[Sequence[BidPlan]],
    cfg: NetworkConfig,
    mode: Mode | str,
    seed: int,
) -> SimStats:
    return simulate(workload, cfg, mode, seed).stats


def workload_from_orders(orders: Sequence[Order], params: NoiseParams, seed: int) -> list[list[BidPlan]]:
    """Group plain orders by owner, padding each with geometric noise drawn
    from the owner's stream."""
    owners: dict[str, list[BidPlan]] = {}
    for j, order in enumerate(orders):
        rng = np.random.default_rng([seed, 3, j])
        fake = sample_geom(params, rng)
        owners.setdefault(order.owner, []).append(BidPlan(order.owner, order.side, order.price, order.quantity, fake))
    return [owners[o] for o in sorted(owners)]
