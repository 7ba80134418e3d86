"""Dark-pool double auction with indifferentially private order quantities.

Clients pad each order with truncated-geometric fake units hidden behind
commitments; the server matches polar-opposite nodes until no compatible
pair remains, which yields a maximum matching over the real units.
"""

from idp_darkpool.commitment import Commitment, Opening, commit, verify
from idp_darkpool.matching import (
    BidNode,
    Flag,
    MatchingGraph,
    Order,
    ProtocolViolation,
    Side,
    baseline_match,
    build_graph,
    run_matching,
)
from idp_darkpool.noise import NoiseParams, geom_pmf, min_even_Z, sample_geom
from idp_darkpool.protocol import AuctionResult, run_auction, submit_bid

__all__ = [
    "AuctionResult",
    "BidNode",
    "Commitment",
    "Flag",
    "MatchingGraph",
    "NoiseParams",
    "Opening",
    "Order",
    "ProtocolViolation",
    "Side",
    "baseline_match",
    "build_graph",
    "commit",
    "geom_pmf",
    "min_even_Z",
    "run_auction",
    "run_matching",
    "sample_geom",
    "submit_bid",
    "verify",
]

__version__ = "0.1.0"
