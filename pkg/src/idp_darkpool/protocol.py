"""Client and server roles of the private dark-pool auction.

A client turns an order with ``x`` real units into ``x + N`` unit nodes of the
same (side, price), real nodes first, each carrying a commitment to its
real/fake flag and one to the owner identity. The server only sees node
counts until it asks owners to open nodes it is trying to match.

Both roles are message driven. :func:`run_auction` delivers messages
in-process; the network simulator delivers the same messages with latency.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from idp_darkpool import transcript as tr
from idp_darkpool.commitment import (
    Commitment,
    Opening,
    commit,
    flag_payload,
    identity_payload,
    parse_identity,
    verify,
)
from idp_darkpool.matching import (
    BidNode,
    Flag,
    MatchedPair,
    Matcher,
    Order,
    ProtocolViolation,
    Reveal,
    Side,
    build_graph,
    run_matching,
)
from idp_darkpool.noise import NoiseParams, sample_geom

log = logging.getLogger(__name__)

SERVER = "server"


class ProtocolTimeout(RuntimeError):
    """Raised by a synchronous driver that is told not to tolerate silence."""


# -- client side -------------------------------------------------------------

@dataclass(frozen=True)
class BidPlan:
    """One submission: ``real`` true units padded with ``fake`` noise units."""

    owner: str
    side: Side
    price: int
    real: int
    fake: int

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if self.real < 0 or self.fake < 0 or self.real + self.fake < 1:
            raise ValueError(f"bad node counts real={self.real} fake={self.fake}")

    @property
    def count(self) -> int:
        return self.real + self.fake


@dataclass
class ClientSecrets:
    owner: str
    side: Side
    price: int
    real: int
    noise: int
    flag_openings: list[Opening]
    identity_openings: list[Opening]

    @property
    def count(self) -> int:
        return self.real + self.noise

    def is_real(self, index: int) -> bool:
        return index < self.real


def prepare_submission(
    plan: BidPlan, rng: np.random.Generator, handle: str | None = None
) -> tuple[list[BidNode], ClientSecrets]:
    """Commit to every node of ``plan``; draws a flag nonce then an identity
    nonce from ``rng`` for each node in list order."""
    handle = plan.owner if handle is None else handle
    ident = identity_payload(plan.owner)
    nodes, flags, idents = [], [], []
    for index in range(plan.count):
        fc, fo = commit(flag_payload(index < plan.real), rng)
        ic, io = commit(ident, rng)
        nodes.append(BidNode(plan.side, plan.price, handle, index, fc, ic))
        flags.append(fo)
        idents.append(io)
    secrets = ClientSecrets(plan.owner, plan.side, plan.price, plan.real, plan.fake, flags, idents)
    return nodes, secrets


def submit_bid(
    order: Order, params: NoiseParams, rng: np.random.Generator, handle: str | None = None
) -> tuple[list[BidNode], ClientSecrets]:
    """Sample the fake-node count and build the committed node list."""
    if not isinstance(params, NoiseParams):
        raise TypeError("params must be NoiseParams")
    noise = sample_geom(params, rng)
    plan = BidPlan(order.owner, order.side, order.price, order.quantity, noise)
    return prepare_submission(plan, rng, handle)


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class SubmitNodes:
    owner: str
    seq: int
    side: str
    price: int
    flag_digests: tuple[str, ...]
    identity_digests: tuple[str, ...]

    def to_wire(self) -> dict:
        return {
            "type": "submit_nodes", "owner": self.owner, "seq": self.seq, "side": self.side,
            "price": self.price, "flag_digests": list(self.flag_digests),
            "identity_digests": list(self.identity_digests),
        }


@dataclass(frozen=True)
class OpenFlag:
    round: int
    owner: str
    seq: int
    index: int

    def to_wire(self) -> dict:
        return {"type": "open_flag", "round": self.round, "owner": self.owner, "seq": self.seq, "index": self.index}


@dataclass(frozen=True)
class FlagReply:
    round: int
    owner: str
    seq: int
    index: int
    opening: Opening
    cascade: tuple[tuple[int, Opening], ...] = ()

    def to_wire(self) -> dict:
        return {
            "type": "flag_reply", "round": self.round, "owner": self.owner, "seq": self.seq,
            "index": self.index, "opening": self.opening.to_wire(),
            "cascade": [[i, o.to_wire()] for i, o in self.cascade],
        }


@dataclass(frozen=True)
class OpenIdentity:
    round: int
    owner: str
    seq: int
    index: int

    def to_wire(self) -> dict:
        return {"type": "open_identity", "round": self.round, "owner": self.owner, "seq": self.seq, "index": self.index}


@dataclass(frozen=True)
class IdentityReply:
    round: int
    owner: str
    seq: int
    index: int
    opening: Opening

    def to_wire(self) -> dict:
        return {
            "type": "identity_reply", "round": self.round, "owner": self.owner, "seq": self.seq,
            "index": self.index, "opening": self.opening.to_wire(),
        }


@dataclass(frozen=True)
class ExecutionNotice:
    owner: str
    seq: int
    index: int
    price: int

    def to_wire(self) -> dict:
        return {"type": "execution", "owner": self.owner, "seq": self.seq, "index": self.index, "price": self.price}


Outbox = list  # of (destination, message)


class Client:
    """Holds a client's secrets and answers the server's opening requests."""

    def __init__(self, owner: str, submissions: Sequence[tuple[list[BidNode], ClientSecrets]], responsive: bool = True):
        self.owner = owner
        self.submissions = list(submissions)
        self.responsive = responsive
        self.executions: list[ExecutionNotice] = []

    def submit(self) -> Outbox:
        out = []
        for seq, (nodes, secrets) in enumerate(self.submissions):
            out.append((SERVER, SubmitNodes(
                self.owner, seq, secrets.side.value, secrets.price,
                tuple(n.flag_commitment.hex() for n in nodes),
                tuple(n.identity_commitment.hex() for n in nodes),
            )))
        return out

    def handle(self, msg) -> Outbox:
        if isinstance(msg, ExecutionNotice):
            self.executions.append(msg)
            return []
        if not self.responsive:
            return []
        secrets = self.submissions[msg.seq][1]
        if isinstance(msg, OpenFlag):
            cascade = ()
            if not secrets.is_real(msg.index):
                cascade = tuple(
                    (i, secrets.flag_openings[i]) for i in range(msg.index + 1, secrets.count)
                )
            reply = FlagReply(msg.round, self.owner, msg.seq, msg.index, secrets.flag_openings[msg.index], cascade)
            return [(SERVER, reply)]
        if isinstance(msg, OpenIdentity):
            reply = IdentityReply(msg.round, self.owner, msg.seq, msg.index, secrets.identity_openings[msg.index])
            return [(SERVER, reply)]
        raise TypeError(f"client cannot handle {type(msg).__name__}")


# -- server side ------------------------------------------------------------

def handle_name(rank: int) -> str:
    return f"h{rank:06d}"


def submission_handles(configuration: Sequence[Order]) -> list[str]:
    """Handles the server will assign to each order of ``configuration``.

    Submissions are ranked by (owner, per-owner sequence number), so handles
    do not depend on message arrival order.
    """
    seen: dict[str, int] = {}
    keys = []
    for order in configuration:
        seq = seen.get(order.owner, 0)
        seen[order.owner] = seq + 1
        keys.append((order.owner, seq))
    rank = {key: r for r, key in enumerate(sorted(keys))}
    return [handle_name(rank[k]) for k in keys]


def _ref(node: BidNode) -> tr.NodeRef:
    return (node.owner_handle, node.list_index)


@dataclass
class _Round:
    number: int
    u: BidNode
    v: BidNode
    phase: str  # "flags" or "identity"
    waiting: dict[tuple[str, int], BidNode] = field(default_factory=dict)
    flag_replies: dict[tuple[str, int], FlagReply] = field(default_factory=dict)
    identity_replies: dict[tuple[str, int], IdentityReply] = field(default_factory=dict)


class AuctionServer:
    """Semi-honest auction server: collects submissions, then runs the
    matching loop one attempt per round, recording everything it observes.

    Drive it with :meth:`receive` for every incoming message and
    :meth:`begin_round` whenever :attr:`idle` is true and :attr:`done` is not.
    """

    def __init__(self, expected_submissions: int, seed: int):
        self.expected = expected_submissions
        self.seed = int(seed)
        self.transcript = tr.Transcript([tr.SessionStarted(self.seed)])
        self.submissions: dict[tuple[str, int], SubmitNodes] = {}
        self.handles: dict[tuple[str, int], str] = {}
        self.owner_of: dict[str, tuple[str, int]] = {}
        self.matcher: Matcher | None = None
        self.round: _Round | None = None
        self.rounds = 0
        self.done = False

    @property
    def started(self) -> bool:
        return self.matcher is not None

    @property
    def idle(self) -> bool:
        return self.started and self.round is None and not self.done

    @property
    def matching(self) -> list[MatchedPair]:
        return list(self.matcher.graph.matched) if self.matcher else []

    def receive(self, src: str, msg) -> Outbox:
        if isinstance(msg, SubmitNodes):
            return self._on_submit(msg)
        if isinstance(msg, FlagReply):
            return self._on_flag(msg)
        if isinstance(msg, IdentityReply):
            return self._on_identity(msg)
        raise TypeError(f"server cannot handle {type(msg).__name__}")

    # submission phase
    def _on_submit(self, msg: SubmitNodes) -> Outbox:
        if self.started:
            raise ProtocolViolation("submission after matching started")
        key = (msg.owner, msg.seq)
        if key in self.submissions:
            raise ProtocolViolation(f"duplicate submission {key}")
        if len(msg.flag_digests) != len(msg.identity_digests) or not msg.flag_digests:
            raise ProtocolViolation(f"submission {key} has inconsistent node counts")
        self.submissions[key] = msg
        if len(self.submissions) == self.expected:
            self._start()
        return []

    def _start(self) -> None:
        nodes: list[BidNode] = []
        for rank, key in enumerate(sorted(self.submissions)):
            msg = self.submissions[key]
            handle = handle_name(rank)
            self.handles[key] = handle
            self.owner_of[handle] = key
            side = Side(msg.side)
            self.transcript.append(tr.NodeCounts(handle, side.value, msg.price, len(msg.flag_digests)))
            for index, (fd, idd) in enumerate(zip(msg.flag_digests, msg.identity_digests)):
                nodes.append(BidNode(side, msg.price, handle, index, Commitment.fromhex(fd), Commitment.fromhex(idd)))
        self.matcher = Matcher(build_graph(nodes, self.seed))

    # matching rounds
    def begin_round(self) -> Outbox:
        if not self.idle:
            raise RuntimeError("server is not ready for a new round")
        pair = self.matcher.next_attempt()
        if pair is None:
            self.done = True
            return []
        self.rounds += 1
        u, v = pair
        buy, sell = (u, v) if u.side is Side.BUY else (v, u)
        self.transcript.append(tr.AttemptMatch(_ref(buy), _ref(sell)))
        rnd = _Round(self.rounds, u, v, "flags")
        out = []
        for node in (buy, sell):
            if node.revealed_flag is Flag.UNKNOWN:
                rnd.waiting[node.key] = node
                owner, seq = self.owner_of[node.owner_handle]
                out.append((owner, OpenFlag(rnd.number, owner, seq, node.list_index)))
        self.round = rnd
        if not rnd.waiting:
            return self._flags_settled()
        return out

    def _node_key(self, msg) -> tuple[str, int]:
        return (self.handles[(msg.owner, msg.seq)], msg.index)

    def _on_flag(self, msg: FlagReply) -> Outbox:
        rnd = self.round
        if rnd is None or rnd.number != msg.round or rnd.phase != "flags":
            log.debug("stale flag reply %s", msg)
            return []
        key = self._node_key(msg)
        if key not in rnd.waiting or key in rnd.flag_replies:
            raise ProtocolViolation(f"unrequested flag reply for {key}")
        rnd.flag_replies[key] = msg
        if len(rnd.flag_replies) == len(rnd.waiting):
            return self._flags_settled()
        return []

    def _flags_settled(self) -> Outbox:
        rnd = self.round
        buy, sell = (rnd.u, rnd.v) if rnd.u.side is Side.BUY else (rnd.v, rnd.u)
        for node in (buy, sell):
            reply = rnd.flag_replies.get(node.key)
            if reply is None:
                continue
            cascade = self.matcher.resolve(node, Reveal(reply.opening, reply.cascade))
            self.transcript.append(tr.FlagOpened(
                _ref(node), node.revealed_flag.value, node.flag_commitment.hex(), reply.opening.nonce.hex()
            ))
            if cascade:
                openings = dict(reply.cascade)
                self.transcript.append(tr.FakeCascade(node.owner_handle, tuple(
                    (n.list_index, n.flag_commitment.hex(), openings[n.list_index].nonce.hex())
                    for n in cascade[1:]
                )))
        if buy.revealed_flag is Flag.REAL and sell.revealed_flag is Flag.REAL:
            rnd.phase = "identity"
            rnd.waiting = {buy.key: buy, sell.key: sell}
            out = []
            for node in (buy, sell):
                owner, seq = self.owner_of[node.owner_handle]
                out.append((owner, OpenIdentity(rnd.number, owner, seq, node.list_index)))
            return out
        self.matcher.settle(rnd.u, rnd.v)
        self.round = None
        return []

    def _on_identity(self, msg: IdentityReply) -> Outbox:
        rnd = self.round
        if rnd is None or rnd.number != msg.round or rnd.phase != "identity":
            log.debug("stale identity reply %s", msg)
            return []
        key = self._node_key(msg)
        if key not in rnd.waiting or key in rnd.identity_replies:
            raise ProtocolViolation(f"unrequested identity reply for {key}")
        node = rnd.waiting[key]
        if not verify(node.identity_commitment, msg.opening):
            raise ProtocolViolation(f"identity opening for {node!r} does not verify")
        rnd.identity_replies[key] = msg
        if len(rnd.identity_replies) < 2:
            return []
        buy, sell = (rnd.u, rnd.v) if rnd.u.side is Side.BUY else (rnd.v, rnd.u)
        for n in (buy, sell):
            opening = rnd.identity_replies[n.key].opening
            self.transcript.append(tr.IdentityOpened(
                _ref(n), parse_identity(opening.payload), n.identity_commitment.hex(), opening.nonce.hex()
            ))
        pair = self.matcher.settle(rnd.u, rnd.v)
        self.transcript.append(tr.Executed(_ref(pair.buy), _ref(pair.sell), pair.price))
        self.round = None
        out = []
        for n in (pair.buy, pair.sell):
            owner, seq = self.owner_of[n.owner_handle]
            out.append((owner, ExecutionNotice(owner, seq, n.list_index, pair.price)))
        return out

    def on_timeout(self, round_number: int) -> Outbox:
        """Drop owners that have not answered the current round, as if fake."""
        rnd = self.round
        if rnd is None or rnd.number != round_number:
            return []
        answered = rnd.flag_replies if rnd.phase == "flags" else rnd.identity_replies
        silent = sorted({n.owner_handle for k, n in rnd.waiting.items() if k not in answered})
        for handle in silent:
            self.matcher.drop_owner(handle)
            self.transcript.append(tr.TimedOut(handle))
        if rnd.phase == "flags":
            return self._flags_settled()
        self.matcher.settle(rnd.u, rnd.v)
        self.round = None
        return []


# -- in-process driver ---------------------------------------------------------

def deliver(server: AuctionServer, clients: Mapping[str, Client], outbox: Outbox) -> None:
    """Deliver messages FIFO until the queue drains."""
    queue = deque(outbox)
    while queue:
        dst, msg = queue.popleft()
        if dst == SERVER:
            queue.extend(server.receive(getattr(msg, "owner", ""), msg))
        else:
            queue.extend(clients[dst].handle(msg))


def server_round(server: AuctionServer, clients: Mapping[str, Client]) -> list[tr.Event]:
    """Run one matching attempt with in-process delivery; returns the events it
    appended. Owners that stay silent are timed out."""
    before = len(server.transcript)
    deliver(server, clients, server.begin_round())
    while server.round is not None:
        deliver(server, clients, server.on_timeout(server.round.number))
    return server.transcript[before:]


@dataclass
class AuctionResult:
    matching: list[MatchedPair]
    transcript: tr.Transcript
    handles: dict[tuple[str, int], str]
    secrets: dict[str, ClientSecrets]
    rounds: int

    @property
    def matched_units(self) -> int:
        return len(self.matching)

    def handle_of(self, owner: str, seq: int = 0) -> str:
        return self.handles[(owner, seq)]


def client_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, index])


def server_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 0]).generate_state(1)[0])


def plans_for(
    configuration: Sequence[Order],
    params: NoiseParams,
    seed: int,
    noise: Mapping[int, int] | None = None,
) -> list[tuple[BidPlan, np.random.Generator]]:
    """Per-order plans with their client random streams.

    Order ``j`` draws from its own stream, so its noise and nonces do not
    depend on any other order. ``noise`` pins the fake count of chosen orders
    without consuming a draw.
    """
    noise = noise or {}
    out = []
    for j, order in enumerate(configuration):
        rng = client_rng(seed, j)
        fake = noise[j] if j in noise else sample_geom(params, rng)
        out.append((BidPlan(order.owner, order.side, order.price, order.quantity, fake), rng))
    return out


def build_clients(plans: Sequence[tuple[BidPlan, np.random.Generator]], unresponsive: frozenset[str] = frozenset()) -> dict[str, Client]:
    grouped: dict[str, list] = {}
    for plan, rng in plans:
        grouped.setdefault(plan.owner, []).append(prepare_submission(plan, rng))
    return {owner: Client(owner, subs, responsive=owner not in unresponsive) for owner, subs in grouped.items()}


def run_clients(clients: Mapping[str, Client], seed: int) -> AuctionResult:
    expected = sum(len(c.submissions) for c in clients.values())
    server = AuctionServer(expected, server_seed(seed))
    for owner in sorted(clients):
        deliver(server, clients, clients[owner].submit())
    while not server.done:
        server_round(server, clients)
    secrets = {
        server.handles[(owner, seq)]: s
        for owner, c in clients.items()
        for seq, (_, s) in enumerate(c.submissions)
    }
    return AuctionResult(server.matching, server.transcript, dict(server.handles), secrets, server.rounds)


def run_auction(
    configuration: Sequence[Order],
    params: NoiseParams,
    seed: int,
    *,
    noise: Mapping[int, int] | None = None,
    unresponsive: Sequence[str] = (),
) -> AuctionResult:
    """Full protocol run with in-process message delivery."""
    plans = plans_for(configuration, params, seed, noise)
    return run_clients(build_clients(plans, frozenset(unresponsive)), seed)


def replay_matching(transcript: tr.Transcript) -> list[tuple[tr.NodeRef, tr.NodeRef, int]]:
    """Rebuild the server's state from a transcript alone and rerun the
    matching loop, answering opening requests from the recorded openings."""
    seed = None
    nodes: list[BidNode] = []
    flag_open: dict[tr.NodeRef, tuple[str, str, str]] = {}
    for ev in transcript:
        if isinstance(ev, tr.SessionStarted):
            seed = ev.server_seed
        elif isinstance(ev, tr.FlagOpened):
            flag_open[tuple(ev.node)] = (ev.flag, ev.digest, ev.nonce)
        elif isinstance(ev, tr.FakeCascade):
            for index, digest, nonce in ev.nodes:
                flag_open[(ev.owner_handle, index)] = ("fake", digest, nonce)
    if seed is None:
        raise ValueError("transcript has no session header")
    timed_out = {ev.owner_handle for ev in transcript if isinstance(ev, tr.TimedOut)}
    if timed_out:
        raise ValueError("replay of transcripts with timeouts is not supported")
    blank = Commitment(bytes(32))
    for ev in transcript:
        if isinstance(ev, tr.NodeCounts):
            for index in range(ev.count):
                known = flag_open.get((ev.owner_handle, index))
                fc = Commitment.fromhex(known[1]) if known else blank
                nodes.append(BidNode(Side(ev.side), ev.price, ev.owner_handle, index, fc, blank))

    def oracle(node: BidNode) -> Reveal:
        flag, _, nonce = flag_open[node.key]
        opening = Opening(flag_payload(flag == "real"), bytes.fromhex(nonce))
        cascade = ()
        if flag == "fake":
            cascade = tuple(
                (k[1], Opening(flag_payload(False), bytes.fromhex(v[2])))
                for k, v in flag_open.items() if k[0] == node.owner_handle and k[1] > node.list_index
            )
        return Reveal(opening, cascade)

    pairs = run_matching(build_graph(nodes, seed), oracle)
    return [(_ref(p.buy), _ref(p.sell), p.price) for p in pairs]
