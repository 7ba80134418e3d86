"""Workload generation and experiment sweeps producing CSV rows."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from idp_darkpool.matching import Side
from idp_darkpool.netsim import Mode, NetworkConfig, Setting, simulate
from idp_darkpool.noise import NoiseParams, sample_geom
from idp_darkpool.protocol import BidPlan

log = logging.getLogger(__name__)

BUY_PRICES = (99, 101)
SELL_PRICES = (98, 100)

CSV_FIELDS = [
    "preset", "clients", "orders_per_client", "total_orders", "epsilon", "delta", "network",
    "mode", "workload", "seed", "wall_seconds", "sim_seconds", "matched_units", "match_rate",
    "throughput", "messages", "bytes",
]
"""Column order of every experiment CSV. ``match_rate`` is twice the matched
units over all submitted nodes (real and fake); ``throughput`` is submitted
nodes per wall-clock second."""


@dataclass(frozen=True)
class ExperimentConfig:
    clients: int = 4
    orders_per_client: int = 8
    epsilon: float = 1.0
    delta: float = 1e-3
    network: str = "local"
    mode: str = "idp"
    workload: str = "paper"
    seed: int = 0
    out: str | None = None
    mix_sides: bool = False
    Z: int | None = None

    def __post_init__(self):
        if self.clients < 1 or self.orders_per_client < 1:
            raise ValueError("clients and orders_per_client must be at least 1")
        Setting(self.network)
        Mode(self.mode)
        if self.workload not in ("paper", "geometric"):
            raise ValueError(f"unknown workload {self.workload!r}")
        if self.workload == "geometric" or self.mode == "idp":
            self.noise

    @property
    def noise(self) -> NoiseParams:
        if self.Z is None:
            return NoiseParams(self.epsilon, self.delta)
        return NoiseParams(self.epsilon, self.delta, self.Z)


def fake_range(orders_per_client: int) -> tuple[int, int]:
    """Fake nodes per client in the ``paper`` workload: 1..3 out of 8, scaled to
    other list sizes while keeping at least one real node."""
    k = orders_per_client
    if k == 1:
        return 0, 0
    lo = max(1, k // 8)
    hi = max(lo, 3 * k // 8)
    return min(lo, k - 1), min(hi, k - 1)


def _price(rng: np.random.Generator, side: Side) -> int:
    lo, hi = BUY_PRICES if side is Side.BUY else SELL_PRICES
    return int(rng.integers(lo, hi + 1))


def _side(rng: np.random.Generator) -> Side:
    return Side.BUY if rng.random() < 0.5 else Side.SELL


def generate_workload(cfg: ExperimentConfig, rng: np.random.Generator) -> list[list[BidPlan]]:
    """Bid plans for every client.

    ``paper``: each client lists ``orders_per_client`` nodes, of which a
    uniform 1..3 (per 8) are fake. ``geometric``: each client has
    ``orders_per_client`` real units and a fake count drawn from the noise
    mechanism.
    """
    workload = []
    for c in range(cfg.clients):
        owner = f"c{c:05d}"
        if cfg.workload == "geometric":
            side = _side(rng)
            fake = sample_geom(cfg.noise, rng)
            workload.append([BidPlan(owner, side, _price(rng, side), cfg.orders_per_client, fake)])
            continue
        lo, hi = fake_range(cfg.orders_per_client)
        fake = int(rng.integers(lo, hi + 1))
        real = cfg.orders_per_client - fake
        if not cfg.mix_sides:
            side = _side(rng)
            workload.append([BidPlan(owner, side, _price(rng, side), real, fake)])
            continue
        real_slots = rng.permutation([True] * real + [False] * fake)
        sides = [_side(rng) for _ in real_slots]
        plans = []
        for side in (Side.BUY, Side.SELL):
            r = sum(1 for s, is_real in zip(sides, real_slots) if s is side and is_real)
            f = sum(1 for s, is_real in zip(sides, real_slots) if s is side and not is_real)
            if r + f:
                plans.append(BidPlan(owner, side, _price(rng, side), r, f))
        workload.append(plans)
    return workload


def run_point(cfg: ExperimentConfig, preset: str = ""):
    rng = np.random.default_rng([cfg.seed, 5])
    workload = generate_workload(cfg, rng)
    run = simulate(workload, NetworkConfig(Setting(cfg.network)), Mode(cfg.mode), cfg.seed)
    st = run.stats
    log.info("%s %s clients=%d orders=%d wall=%.3fs", preset or "run", cfg.mode, cfg.clients, st.total_orders, st.wall_seconds)
    row = {
        "preset": preset, "clients": cfg.clients, "orders_per_client": cfg.orders_per_client,
        "total_orders": st.total_orders, "epsilon": cfg.epsilon, "delta": cfg.delta,
        "network": cfg.network, "mode": cfg.mode, "workload": cfg.workload, "seed": cfg.seed,
        "wall_seconds": st.wall_seconds, "sim_seconds": st.sim_seconds,
        "matched_units": st.matched_units, "match_rate": st.match_rate,
        "throughput": st.throughput, "messages": st.messages, "bytes": st.bytes,
    }
    return row, run


def _doublings(start: int, stop: int) -> list[int]:
    out, n = [], start
    while n <= stop:
        out.append(n)
        n *= 2
    return out


SWEEPS = ("table2", "fig3-local", "fig3-global", "fig3-world", "fig4-clients", "fig4-orders")


def sweep_points(preset: str, base: ExperimentConfig, max_orders: int = 2**15) -> list[ExperimentConfig]:
    """Configurations of a named sweep; ``base`` supplies seed, budget and
    workload, the preset overrides the sizes, network and mode."""
    both = ("nonprivate", "idp")
    if preset == "table2":
        return [replace(base, clients=c, orders_per_client=8, mode=m) for c in (5, 1024) for m in both]
    if preset.startswith("fig3-"):
        net = preset.split("-", 1)[1]
        return [
            replace(base, clients=c, orders_per_client=8, network=net, mode=m)
            for c in _doublings(4, 1024) for m in both
        ]
    if preset == "fig4-clients":
        return [replace(base, clients=c, orders_per_client=8, mode="idp") for c in _doublings(1024, max_orders // 8)]
    if preset == "fig4-orders":
        return [replace(base, clients=1024, orders_per_client=k, mode="idp") for k in _doublings(8, max_orders // 1024)]
    raise ValueError(f"unknown sweep preset {preset!r}; choose from {', '.join(SWEEPS)}")


def write_rows(path: str | Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def run_experiment(
    cfg: ExperimentConfig,
    sweep: str | None = None,
    max_orders: int = 2**15,
    dump_transcript: str | None = None,
) -> list[dict]:
    """Run one point or a sweep and write the rows to ``cfg.out`` if set."""
    points = sweep_points(sweep, cfg, max_orders) if sweep else [cfg]
    if cfg.out:
        parent = Path(cfg.out).parent
        if not parent.is_dir():
            raise OSError(f"cannot write {cfg.out}: {parent} is not a directory")
    rows = []
    for point in points:
        row, run = run_point(point, sweep or "")
        rows.append(row)
        if dump_transcript and run.transcript is not None:
            run.transcript.dump(dump_transcript)
    if cfg.out:
        write_rows(cfg.out, rows)
    return rows


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
