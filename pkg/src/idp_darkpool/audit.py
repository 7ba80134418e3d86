"""Privacy audit: exact hockey-stick divergences on finite distributions and
coupled neighbouring runs of the auction.

Two neighbouring configurations differ only in the target user's quantity
(``n0`` versus ``n0 + 1``). The coupled runs give the target the same total
node count in both and replay every other random choice bit for bit, so the
only possible difference is the flag of the target's ``(n0 + 1)``-st node.
The audit checks that the transcripts are either identical or split only
after all ``n0`` real units of the target have executed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from idp_darkpool import transcript as tr
from idp_darkpool.matching import Order, Side
from idp_darkpool.noise import NoiseParams, geom_pmf, min_even_Z, sample_geom
from idp_darkpool.protocol import AuctionResult, run_auction, submission_handles

MASS_TOLERANCE = 1e-12


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class FiniteDistribution:
    mass: Mapping[Hashable, float]

    def __post_init__(self):
        if any(m < 0 or not math.isfinite(m) for m in self.mass.values()):
            raise ValueError("masses must be finite and non-negative")
        total = math.fsum(self.mass.values())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"masses sum to {total!r}, not 1")

    @property
    def support(self) -> list:
        return [w for w, m in self.mass.items() if m > 0]

    def __getitem__(self, point) -> float:
        return self.mass.get(point, 0.0)

    @classmethod
    def point(cls, at) -> "FiniteDistribution":
        return cls({at: 1.0})


def _excess(a: float, b: float, gamma: float) -> float:
    """``max(0, a - gamma * b)`` without overflow for huge ``gamma``."""
    if a <= 0.0:
        return 0.0
    if b <= 0.0 or gamma == 0.0:
        return a
    log_ratio = math.log(gamma) + math.log(b) - math.log(a)
    if log_ratio >= 0.0:
        return 0.0
    return a * -math.expm1(log_ratio)


def hockey_stick(P: FiniteDistribution, Q: FiniteDistribution, gamma: float) -> float:
    """Symmetric hockey-stick divergence ``HS_gamma(P || Q)``.

    The supremum over events is reached by the set of points where the
    pointwise difference is positive, so each direction is a plain sum.
    """
    if gamma < 0 or math.isnan(gamma):
        raise ValueError(f"gamma must be >= 0, got {gamma!r}")
    points = set(P.mass) | set(Q.mass)
    forward = math.fsum(_excess(Q[w], P[w], gamma) for w in points)
    backward = math.fsum(_excess(P[w], Q[w], gamma) for w in points)
    return max(forward, backward)


def total_variation(P: FiniteDistribution, Q: FiniteDistribution) -> float:
    points = set(P.mass) | set(Q.mass)
    return 0.5 * math.fsum(abs(P[w] - Q[w]) for w in points)


def shifted_geometric(params: NoiseParams, shift: int) -> FiniteDistribution:
    """Distribution of ``shift + N`` for ``N ~ Geom^Z(e^epsilon)``."""
    return FiniteDistribution({shift + x: geom_pmf(params, x) for x in range(params.Z + 1)})


@dataclass(frozen=True)
class GeomShiftCheck:
    epsilon: float
    delta: float
    Z: int
    divergence: float
    per_shift: dict[int, float]
    passed: bool


def verify_geom_shift_dp(epsilon: float, delta: float, shifts: Sequence[int] = (0, 1, 7)) -> GeomShiftCheck:
    """Exact ``HS_{e^eps}(n + N || n + 1 + N)`` with ``Z = min_even_Z``.

    Passes when every shift stays within ``delta`` (plus 1e-12 of float slack)
    and the value does not depend on the shift.
    """
    params = NoiseParams(epsilon, delta, min_even_Z(epsilon, delta))
    values = {
        n: hockey_stick(shifted_geometric(params, n), shifted_geometric(params, n + 1), params.alpha)
        for n in shifts
    }
    worst = max(values.values())
    invariant = max(values.values()) - min(values.values()) <= MASS_TOLERANCE
    return GeomShiftCheck(epsilon, delta, params.Z, worst, values, worst <= delta + MASS_TOLERANCE and invariant)


# -- coupled runs ------------------------------------------------------------

@dataclass(frozen=True)
class CoupledRunConfig:
    """Base configuration plus the target order whose quantity is ``n0`` in
    one run and ``n0 + 1`` in the other."""

    configuration: tuple[Order, ...]
    target: int
    n0: int
    params: NoiseParams
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "configuration", tuple(self.configuration))
        if not 0 <= self.target < len(self.configuration):
            raise ValueError(f"target {self.target} is not in the configuration")
        if self.n0 < 1:
            raise ValueError("n0 must be at least 1")

    def neighbours(self) -> tuple[list[Order], list[Order]]:
        base = list(self.configuration)
        c0, c1 = list(base), list(base)
        c0[self.target] = replace(base[self.target], quantity=self.n0)
        c1[self.target] = replace(base[self.target], quantity=self.n0 + 1)
        return c0, c1

    @property
    def target_handle(self) -> str:
        return submission_handles(self.configuration)[self.target]


@dataclass
class CoupledViews:
    t0: tr.Transcript
    t1: tr.Transcript
    total_nodes: int
    resamples: int
    uncouplable_mass: float
    runs: tuple[AuctionResult, AuctionResult] = field(repr=False, default=None)


def coupled_views(cfg: CoupledRunConfig) -> CoupledViews:
    """Run both neighbours with the target submitting the same node count.

    The target's noise is drawn on its own stream and redrawn while it is 0,
    since ``n0 + 0`` nodes cannot hold ``n0 + 1`` real ones. That redraw is
    where the coupling gives up ``Pr[N = 0]``, reported as uncouplable mass.
    """
    params = cfg.params
    if params.Z == 0:
        raise CouplingError("zero-noise parameters leave no room to couple n0 and n0 + 1")
    rng = np.random.default_rng([cfg.seed, 2, cfg.target])
    noise, resamples = sample_geom(params, rng), 0
    while noise == 0:
        noise, resamples = sample_geom(params, rng), resamples + 1
    c0, c1 = cfg.neighbours()
    r0 = run_auction(c0, params, cfg.seed, noise={cfg.target: noise})
    r1 = run_auction(c1, params, cfg.seed, noise={cfg.target: noise - 1})
    return CoupledViews(r0.transcript, r1.transcript, cfg.n0 + noise, resamples, geom_pmf(params, 0), (r0, r1))


@dataclass(frozen=True)
class IndifferenceVerdict:
    IDENTICAL = "identical_views"
    DIVERGED = "diverged_after_full_execution"
    VIOLATION = "violation"

    kind: str
    prefix_length: int | None = None
    executed_in_prefix: int = 0
    first_difference: tuple = ()

    @property
    def is_violation(self) -> bool:
        return self.kind == self.VIOLATION


def _check_events(t: Sequence) -> None:
    if not t or not isinstance(t[0], tr.SessionStarted):
        raise ValueError("transcript must start with a session header")
    for ev in t:
        if type(ev) not in tr.EVENT_TYPES.values():
            raise ValueError(f"not a transcript event: {ev!r}")


def check_indifference(t0: Sequence, t1: Sequence, cfg: CoupledRunConfig) -> IndifferenceVerdict:
    """Classify a pair of coupled transcripts.

    Identical transcripts are indifferent. Otherwise the maximal common prefix
    must already show ``n0`` executions of the target's nodes, i.e. the
    target's order is fully executed in the smaller configuration.
    """
    _check_events(t0)
    _check_events(t1)
    if list(t0) == list(t1):
        return IndifferenceVerdict(IndifferenceVerdict.IDENTICAL)
    k = 0
    for a, b in zip(t0, t1):
        if a != b:
            break
        k += 1
    handle = cfg.target_handle
    executed = sum(
        1 for ev in t0[:k] if isinstance(ev, tr.Executed) and handle in (ev.buy[0], ev.sell[0])
    )
    diff = (t0[k] if k < len(t0) else None, t1[k] if k < len(t1) else None)
    kind = IndifferenceVerdict.DIVERGED if executed >= cfg.n0 else IndifferenceVerdict.VIOLATION
    return IndifferenceVerdict(kind, k, executed, diff)


def divergence_is_target_flag(verdict: IndifferenceVerdict, cfg: CoupledRunConfig) -> bool:
    """True when the first differing events open the target's ``(n0+1)``-st
    node as fake in one run and real in the other."""
    a, b = verdict.first_difference or (None, None)
    node = (cfg.target_handle, cfg.n0)
    return (
        isinstance(a, tr.FlagOpened) and isinstance(b, tr.FlagOpened)
        and tuple(a.node) == node and tuple(b.node) == node
        and a.flag == "fake" and b.flag == "real"
    )


# -- batch audit -------------------------------------------------------------

AUDIT_BUDGETS = ((0.5, 0.2), (1.0, 0.1), (math.log(2), 0.05), (2.0, 0.01))


def random_coupled_config(seed: int, max_users: int = 8, max_quantity: int = 4) -> CoupledRunConfig:
    """A small random neighbouring pair; prices straddle one another so the
    target's order is often, but not always, fully executed."""
    rng = np.random.default_rng([seed, 99])
    users = int(rng.integers(2, max_users + 1))
    orders = []
    for u in range(users):
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        price = int(rng.integers(98, 103)) if side is Side.BUY else int(rng.integers(97, 102))
        orders.append(Order(side, price, int(rng.integers(1, max_quantity + 1)), f"u{u:03d}"))
    target = int(rng.integers(users))
    eps, delta = AUDIT_BUDGETS[int(rng.integers(len(AUDIT_BUDGETS)))]
    return CoupledRunConfig(tuple(orders), target, orders[target].quantity, NoiseParams(eps, delta), seed)


@dataclass
class AuditRecord:
    seed: int
    users: int
    target: int
    n0: int
    epsilon: float
    delta: float
    Z: int
    total_nodes: int
    resamples: int
    uncouplable_mass: float
    verdict: str
    prefix_length: int | None
    executed_in_prefix: int
    target_flag_split: bool


def audit_coupled(cfg: CoupledRunConfig) -> AuditRecord:
    views = coupled_views(cfg)
    verdict = check_indifference(views.t0, views.t1, cfg)
    split = verdict.kind == IndifferenceVerdict.DIVERGED and divergence_is_target_flag(verdict, cfg)
    return AuditRecord(
        cfg.seed, len(cfg.configuration), cfg.target, cfg.n0, cfg.params.epsilon, cfg.params.delta,
        cfg.params.Z, views.total_nodes, views.resamples, views.uncouplable_mass, verdict.kind,
        verdict.prefix_length, verdict.executed_in_prefix, split,
    )


def audit_many(runs: int, seed: int = 0) -> list[AuditRecord]:
    return [audit_coupled(random_coupled_config(seed * 1_000_003 + r)) for r in range(runs)]


def summarize(records: Iterable[AuditRecord]) -> dict[str, float]:
    records = list(records)
    kinds = [r.verdict for r in records]
    return {
        "runs": len(records),
        "identical": kinds.count(IndifferenceVerdict.IDENTICAL),
        "diverged_after_full_execution": kinds.count(IndifferenceVerdict.DIVERGED),
        "violations": kinds.count(IndifferenceVerdict.VIOLATION),
        "max_uncouplable_mass": max((r.uncouplable_mass for r in records), default=0.0),
        "resamples": sum(r.resamples for r in records),
    }


AUDIT_FIELDS = list(AuditRecord.__dataclass_fields__)


def write_audit_csv(path: str | Path, records: Iterable[AuditRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=AUDIT_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.__dict__)


CALIBRATION_FIELDS = ["epsilon", "delta", "Z", "shift", "divergence", "passed"]


def write_calibration_csv(path: str | Path, checks: Iterable[GeomShiftCheck]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CALIBRATION_FIELDS)
        for c in checks:
            for shift, value in c.per_shift.items():
                writer.writerow([c.epsilon, c.delta, c.Z, shift, repr(value), int(c.passed)])
