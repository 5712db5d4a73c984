"""The two-round auction state machine.

Round 1 runs q+1 simultaneous sealed first-price auctions (one per package
plus one for the whole portfolio) and qualifies the lowest bidder of each.
In the interim the seller publishes exactly the winning bids. Round 2 is a
single sealed contest between the qualified locals (jointly) and the
qualified global, settled by a core-selecting payment rule; every round-2
bid is capped by the bidder's own round-1 bid.

All randomness (tie-breaking only) comes from a seeded counter-based
generator, so a transcript is a pure function of (inputs, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from . import pricing
from .model import ConfigurationError

RULES = ("vcg", "nvcg", "dnvcg")


# Distinct per-purpose substreams derived from one seed, so tie-break coins
# never alias the valuation draws made elsewhere from the same seed.
STREAM_VALUES = 0
STREAM_ROUND1 = 1
STREAM_ROUND2 = 2


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _pick(candidates, rng: np.random.Generator):
    """Uniform choice among tied bidders, canonicalized by id."""
    pool = sorted(candidates)
    if len(pool) == 1:
        return pool[0]
    return pool[rng.integers(len(pool))]


@dataclass(frozen=True)
class BidLedger:
    """Recorded bids per broker id. Round-2 entries may cover a subset of
    round-1 entries (only qualified brokers bid again)."""

    round1: Mapping
    round2: Mapping

    def __post_init__(self):
        object.__setattr__(self, "round1", dict(self.round1))
        object.__setattr__(self, "round2", dict(self.round2))
        for name, bids in (("round1", self.round1), ("round2", self.round2)):
            for broker, fee in bids.items():
                if fee < 0:
                    raise ConfigurationError(f"{name} bid of {broker!r} is negative")
        for broker, fee in self.round2.items():
            if broker not in self.round1:
                raise ConfigurationError(f"{broker!r} has a round-2 bid but no round-1 bid")
            if fee > self.round1[broker]:
                raise ConfigurationError(
                    f"{broker!r} bids {fee} in round 2, above the round-1 cap "
                    f"{self.round1[broker]}"
                )


@dataclass(frozen=True)
class Round2Check:
    accepted: bool
    violated_bound: Optional[str] = None


def validate_round2_bid(broker, ledger: BidLedger) -> Round2Check:
    """Accept iff 0 <= phi2 <= phi1 for the broker."""
    if broker not in ledger.round1:
        raise ConfigurationError(f"{broker!r} has no recorded round-1 bid")
    if broker not in ledger.round2:
        raise ConfigurationError(f"{broker!r} has no recorded round-2 bid")
    bid = ledger.round2[broker]
    cap = ledger.round1[broker]
    if bid < 0:
        return Round2Check(False, f"bid {bid} below zero")
    if bid > cap:
        return Round2Check(False, f"bid {bid} above the round-1 cap {cap}")
    return Round2Check(True)


@dataclass(frozen=True)
class QualificationResult:
    """Round-1 outcome: one local per package plus one global."""

    qualified_locals: tuple  # broker id per package index
    local_bids: tuple        # winning round-1 bid per package index
    qualified_global: str
    global_bid: object       # the global winner's round-1 bid


@dataclass(frozen=True)
class InfoUpdate:
    """The interim public-information update: winning round-1 bids only.

    Never carries anything about losing bids or losing bidders.
    """

    revealed_bids: tuple  # ((broker_id, bid), ...) for the q+1 winners


def run_round1(package_bids: Sequence[Mapping], global_bids: Mapping, seed) -> QualificationResult:
    """Qualify the lowest bidder of each sealed auction (ties: uniform)."""
    rng = _rng(seed, STREAM_ROUND1)
    winners = []
    winning_bids = []
    for j, bids in enumerate(package_bids):
        if not bids:
            raise ConfigurationError(f"package {j} has no bidders")
        low = min(bids.values())
        winner = _pick([b for b, fee in bids.items() if fee == low], rng)
        winners.append(winner)
        winning_bids.append(bids[winner])
    if not global_bids:
        raise ConfigurationError("the whole-portfolio auction has no bidders")
    low = min(global_bids.values())
    g_winner = _pick([b for b, fee in global_bids.items() if fee == low], rng)
    return QualificationResult(
        qualified_locals=tuple(winners),
        local_bids=tuple(winning_bids),
        qualified_global=g_winner,
        global_bid=global_bids[g_winner],
    )


def publish_update(qualification: QualificationResult) -> InfoUpdate:
    """Reveal exactly the q+1 winning round-1 bids (including the global's)."""
    revealed = list(zip(qualification.qualified_locals, qualification.local_bids))
    revealed.append((qualification.qualified_global, qualification.global_bid))
    return InfoUpdate(revealed_bids=tuple(revealed))


def global_round2_bid(round1_bid, valuation):
    """The global's dominant round-2 strategy: min{round-1 bid, valuation}."""
    return min(round1_bid, valuation)


@dataclass(frozen=True)
class FeeOutcome:
    """Settlement of round 2. Exactly one side carries nonzero payments."""

    winner: str               # "coalition" | "global"
    fees: tuple               # per package index; zeros on a global win
    global_payment: object    # weighted coalition total on a global win, else 0
    vcg_fees: tuple
    delta: object
    epsilons: tuple           # unweighted round-1 deviations (D-NVCG), zeros otherwise
    diagnostics: dict

    def __post_init__(self):
        if self.winner == "coalition":
            assert self.global_payment == 0
        else:
            assert all(f == 0 for f in self.fees)


@dataclass(frozen=True)
class AuctionTranscript:
    qualification: QualificationResult
    update: InfoUpdate
    ledger: BidLedger
    outcome: FeeOutcome
    rule: str
    rng_seed: object


def run_round2(
    qualification: QualificationResult,
    ledger: BidLedger,
    weights,
    rule: str,
    seed,
    tie_break: str = "random",
) -> FeeOutcome:
    """Settle the second round under the selected pricing rule.

    tie_break resolves an exact allocation tie: "random" flips a fair
    seeded coin, "coalition"/"global" force the side (for golden tests).
    """
    if rule not in RULES:
        raise ConfigurationError(f"unknown pricing rule {rule!r}")
    locals_ = qualification.qualified_locals
    q = len(locals_)
    w = pricing._weights(weights)
    if len(w) != q:
        raise ConfigurationError(f"{q} qualified locals for {len(w)} weights")

    for broker in (*locals_, qualification.qualified_global):
        check = validate_round2_bid(broker, ledger)
        if not check.accepted:
            raise ConfigurationError(f"round-2 bid of {broker!r} rejected: {check.violated_bound}")

    bids2 = tuple(ledger.round2[b] for b in locals_)
    bids1 = tuple(ledger.round1[b] for b in locals_)
    g2 = ledger.round2[qualification.qualified_global]
    total = pricing.weighted_total(bids2, w)

    tie = total == g2
    if tie:
        if tie_break == "random":
            side = "coalition" if _rng(seed, STREAM_ROUND2).random() < 0.5 else "global"
        elif tie_break in ("coalition", "global"):
            side = tie_break
        else:
            raise ConfigurationError(f"unknown tie_break {tie_break!r}")
    else:
        side = "coalition" if total < g2 else "global"

    zeros = tuple(0 * b for b in bids2)
    diagnostics = {"tie": tie, "dnvcg_fallback_empty_qdown": False, "core_violations": ()}

    if side == "global":
        return FeeOutcome(
            winner="global",
            fees=zeros,
            global_payment=total,
            vcg_fees=zeros,
            delta=0,
            epsilons=zeros,
            diagnostics=diagnostics,
        )

    if tie:
        # At an exact tie every rule degenerates to paying the bids.
        fees = bids2
        cv = bids2
        delta = 0
        epsilons = zeros
    else:
        cv = pricing.vcg_fees(bids2, w, g2)
        delta = sum(wi * ci for wi, ci in zip(w, cv)) - g2
        if rule == "vcg":
            fees = cv
            epsilons = zeros
        elif rule == "nvcg":
            fees = pricing.nvcg_fees(bids2, w, g2)
            epsilons = zeros
        else:
            out = pricing.dnvcg_fees(bids1, bids2, w, g2)
            fees = out.fees
            epsilons = out.deviations
            diagnostics["dnvcg_fallback_empty_qdown"] = out.fell_back

    report = pricing.validate_core_point(fees, bids2, w, g2)
    diagnostics["core_violations"] = report.violations()
    return FeeOutcome(
        winner="coalition",
        fees=fees,
        global_payment=0,
        vcg_fees=cv,
        delta=delta,
        epsilons=epsilons,
        diagnostics=diagnostics,
    )


def run_auction(scenario, strategies=None, seed=None, rule=None) -> AuctionTranscript:
    """Run both rounds of one auction instance from a scenario.

    strategies/seed/rule default to the scenario's own. Round-2 bids are
    clamped into [0, round-1 bid]; any clamping is flagged in the outcome
    diagnostics rather than silently accepted.
    """
    from .sim import resolve_bids  # local import: sim builds on this module

    profile = strategies if strategies is not None else scenario.strategies
    if profile is None:
        raise ConfigurationError("no strategy profile supplied")
    rng_seed = scenario.seed if seed is None else seed
    rule = rule or scenario.rule

    bids = resolve_bids(scenario, profile, rng_seed)
    qualification = run_round1(bids.package_bids, bids.global_bids, rng_seed)
    update = publish_update(qualification)
    round2, clamped = bids.round2(qualification, update)
    ledger = BidLedger(round1=bids.round1_map(), round2=round2)
    outcome = run_round2(qualification, ledger, scenario.weights, rule, rng_seed)
    if clamped:
        diagnostics = dict(outcome.diagnostics)
        diagnostics["clamped_round2_bids"] = tuple(sorted(clamped))
        outcome = FeeOutcome(
            winner=outcome.winner,
            fees=outcome.fees,
            global_payment=outcome.global_payment,
            vcg_fees=outcome.vcg_fees,
            delta=outcome.delta,
            epsilons=outcome.epsilons,
            diagnostics=diagnostics,
        )
    return AuctionTranscript(
        qualification=qualification,
        update=update,
        ledger=ledger,
        outcome=outcome,
        rule=rule,
        rng_seed=rng_seed,
    )


def _jsonable(x):
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def transcript_dict(t: AuctionTranscript) -> dict:
    return _jsonable(
        {
            "rule": t.rule,
            "rng_seed": t.rng_seed,
            "qualification": {
                "qualified_locals": list(t.qualification.qualified_locals),
                "local_bids": list(t.qualification.local_bids),
                "qualified_global": t.qualification.qualified_global,
                "global_bid": t.qualification.global_bid,
            },
            "update": {"revealed_bids": [list(p) for p in t.update.revealed_bids]},
            "ledger": {"round1": t.ledger.round1, "round2": t.ledger.round2},
            "outcome": {
                "winner": t.outcome.winner,
                "fees": list(t.outcome.fees),
                "global_payment": t.outcome.global_payment,
                "vcg_fees": list(t.outcome.vcg_fees),
                "delta": t.outcome.delta,
                "epsilons": list(t.outcome.epsilons),
                "diagnostics": t.outcome.diagnostics,
            },
        }
    )


def serialize_transcript(t: AuctionTranscript) -> str:
    """Stable-key-order text form of a transcript, for golden-file tests."""
    return json.dumps(transcript_dict(t), sort_keys=True, indent=2) + "\n"
