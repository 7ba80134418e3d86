"""Adversary-observable protocol events and their JSON-lines encoding.

Node references are ``[owner_handle, list_index]`` pairs. Digests, nonces and
payloads travel as lowercase hex. Digests of nodes that are never opened do
not appear: an unopened commitment is opaque to the server.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import ClassVar, Iterable, Iterator, Union

from idp_darkpool.commitment import (
    Commitment,
    Opening,
    flag_payload,
    identity_payload,
    verify,
)

NodeRef = tuple[str, int]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class SessionStarted:
    kind: ClassVar[str] = "session_started"
    server_seed: int


@dataclass(frozen=True)
class NodeCounts:
    kind: ClassVar[str] = "node_counts"
    owner_handle: str
    side: str
    price: int
    count: int


@dataclass(frozen=True)
class AttemptMatch:
    kind: ClassVar[str] = "attempt_match"
    buy: NodeRef
    sell: NodeRef


@dataclass(frozen=True)
class FlagOpened:
    kind: ClassVar[str] = "flag_opened"
    node: NodeRef
    flag: str
    digest: str
    nonce: str

    def verifies(self) -> bool:
        opening = Opening(flag_payload(self.flag == "real"), bytes.fromhex(self.nonce))
        return self.flag in ("real", "fake") and verify(Commitment.fromhex(self.digest), opening)


@dataclass(frozen=True)
class FakeCascade:
    """Openings of the owner's other remaining nodes, all fake."""

    kind: ClassVar[str] = "fake_cascade"
    owner_handle: str
    nodes: tuple[tuple[int, str, str], ...]

    def verifies(self) -> bool:
        fake = flag_payload(False)
        return all(
            verify(Commitment.fromhex(d), Opening(fake, bytes.fromhex(n))) for _, d, n in self.nodes
        )


@dataclass(frozen=True)
class IdentityOpened:
    kind: ClassVar[str] = "identity_opened"
    node: NodeRef
    identity: str
    digest: str
    nonce: str

    def verifies(self) -> bool:
        opening = Opening(identity_payload(self.identity), bytes.fromhex(self.nonce))
        return verify(Commitment.fromhex(self.digest), opening)


@dataclass(frozen=True)
class Executed:
    kind: ClassVar[str] = "executed"
    buy: NodeRef
    sell: NodeRef
    price: int


@dataclass(frozen=True)
class TimedOut:
    kind: ClassVar[str] = "timed_out"
    owner_handle: str


Event = Union[
    SessionStarted, NodeCounts, AttemptMatch, FlagOpened, FakeCascade, IdentityOpened, Executed, TimedOut
]

EVENT_TYPES: dict[str, type] = {
    cls.kind: cls
    for cls in (
        SessionStarted,
        NodeCounts,
        AttemptMatch,
        FlagOpened,
        FakeCascade,
        IdentityOpened,
        Executed,
        TimedOut,
    )
}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def event_to_dict(event: Event) -> dict:
    out = {"type": event.kind}
    for f in fields(event):
        out[f.name] = _plain(getattr(event, f.name))
    return out


def event_from_dict(data: dict) -> Event:
    try:
        cls = EVENT_TYPES[data["type"]]
    except KeyError as exc:
        raise ValueError(f"unknown or missing event type in {data!r}") from exc
    names = {f.name for f in fields(cls)}
    extra = set(data) - names - {"type"}
    if extra:
        raise ValueError(f"unexpected fields {sorted(extra)} for {cls.kind}")
    try:
        return cls(**{k: _tupled(v) for k, v in data.items() if k != "type"})
    except TypeError as exc:
        raise ValueError(f"malformed {cls.kind} event: {exc}") from exc


class Transcript(list):
    """Ordered list of events; compares equal element-wise."""

    def involving(self, handle: str) -> Iterator[Event]:
        for ev in self:
            if handle in _handles_of(ev):
                yield ev

    def dumps(self) -> str:
        return "".join(canonical_json(event_to_dict(ev)) + "\n" for ev in self)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        return cls(event_from_dict(json.loads(line)) for line in text.splitlines() if line.strip())

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _handles_of(ev: Event) -> set[str]:
    if isinstance(ev, (AttemptMatch, Executed)):
        return {ev.buy[0], ev.sell[0]}
    if isinstance(ev, (FlagOpened, IdentityOpened)):
        return {ev.node[0]}
    if isinstance(ev, (NodeCounts, FakeCascade, TimedOut)):
        return {ev.owner_handle}
    return set()


def executed_pairs(events: Iterable[Event]) -> list[tuple[NodeRef, NodeRef, int]]:
    return [(ev.buy, ev.sell, ev.price) for ev in events if isinstance(ev, Executed)]


def openings_verify(events: Iterable[Event]) -> bool:
    """True iff every opening carried by the events verifies."""
    return all(ev.verifies() for ev in events if hasattr(ev, "verifies"))
