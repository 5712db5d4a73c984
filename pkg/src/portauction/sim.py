"""Monte Carlo harness: strategies, replicated auctions, dominance checks.

Replication k draws its randomness from row k of a counter-based Philox
stream keyed by the seed, so results do not depend on the replication
count (beyond k) or on how work would be partitioned across workers, and
two profiles simulated with the same seed share their random inputs
(common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import mechanism, pricing
from .equilibrium import equilibrium_bid
from .model import ConfigurationError

ROUND1_KINDS = ("constant", "truthful", "offset", "equilibrium")
ROUND2_KINDS = ROUND1_KINDS + ("capped-value",)


@dataclass(frozen=True)
class Strategy:
    """One broker's bid rule for one round.

    constant      bid = value
    truthful      bid = valuation (floored at zero)
    offset        bid = valuation + offset (floored at zero)
    equilibrium   closed-form shaded bid (sigma, membership flags supplied)
    capped-value  bid = min(round-1 bid, valuation); round 2 only
    """

    kind: str
    value: object = None
    offset: object = 0
    sigma: object = 0.0
    in_qdown: bool = False
    ell: int = 0
    sum_w_qdown: object = None

    def __post_init__(self):
        if self.kind not in ROUND2_KINDS:
            raise ConfigurationError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "constant" and self.value is None:
            raise ConfigurationError("constant strategy needs a value")


@dataclass(frozen=True)
class BrokerStrategy:
    round1: Strategy
    round2: Strategy

    def __post_init__(self):
        if self.round1.kind == "capped-value":
            raise ConfigurationError("capped-value is a round-2 strategy")


@dataclass(frozen=True)
class StrategyProfile:
    """Per-broker strategies, keyed by broker id."""

    brokers: Mapping

    def __post_init__(self):
        object.__setattr__(self, "brokers", dict(self.brokers))

    def __getitem__(self, broker_id) -> BrokerStrategy:
        return self.brokers[broker_id]

    def with_strategy(self, broker_id, round1=None, round2=None) -> "StrategyProfile":
        """Copy of the profile with one broker's strategy replaced."""
        current = self.brokers[broker_id]
        updated = BrokerStrategy(
            round1=round1 if round1 is not None else current.round1,
            round2=round2 if round2 is not None else current.round2,
        )
        out = dict(self.brokers)
        out[broker_id] = updated
        return StrategyProfile(out)


def _strategy_from_config(cfg: Mapping, bps) -> Strategy:
    known = {"kind", "value_bps", "offset_bps", "sigma", "in_qdown", "ell", "sum_w_qdown"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigurationError(f"unknown strategy keys {sorted(unknown)}")
    return Strategy(
        kind=cfg.get("kind", "constant"),
        value=cfg["value_bps"] * bps if "value_bps" in cfg else None,
        offset=cfg.get("offset_bps", 0) * bps,
        sigma=cfg.get("sigma", 0.0),
        in_qdown=bool(cfg.get("in_qdown", False)),
        ell=int(cfg.get("ell", 0)),
        sum_w_qdown=cfg.get("sum_w_qdown"),
    )


def profile_from_config(cfg: Mapping, bps) -> StrategyProfile:
    out = {}
    for broker_id, rounds in cfg.items():
        unknown = set(rounds) - {"round1", "round2"}
        if unknown:
            raise ConfigurationError(
                f"strategy for {broker_id!r} has unknown keys {sorted(unknown)}"
            )
        out[broker_id] = BrokerStrategy(
            round1=_strategy_from_config(rounds["round1"], bps),
            round2=_strategy_from_config(rounds["round2"], bps),
        )
    return StrategyProfile(out)


def _bid_round1(strategy: Strategy, valuation, ctx) -> object:
    if strategy.kind == "constant":
        return strategy.value
    if strategy.kind == "truthful":
        raw = valuation
    elif strategy.kind == "offset":
        raw = valuation + strategy.offset
    elif strategy.kind == "equilibrium":
        raw = equilibrium_bid(
            ctx["rule"] if ctx["rule"] != "vcg" else "nvcg",
            valuation, strategy.sigma, ctx["weight"], ctx["q"],
            in_qdown=strategy.in_qdown, ell=strategy.ell,
            sum_w_qdown=strategy.sum_w_qdown,
        )
    else:
        raise ConfigurationError(f"{strategy.kind!r} not valid in round 1")
    return raw if raw > 0 else 0 * raw


def _bid_round2(strategy: Strategy, valuation, round1_bid, ctx) -> object:
    if strategy.kind == "capped-value":
        return mechanism.global_round2_bid(round1_bid, valuation)
    return _bid_round1(strategy, valuation, ctx)


class BidPlan:
    """Resolved valuations and round-1 bids for one auction instance."""

    def __init__(self, scenario, profile, valuations):
        self.scenario = scenario
        self.profile = profile
        self.valuations = valuations
        q = scenario.portfolio.q
        ctx = {"rule": scenario.rule, "q": q}
        self.package_bids = [dict() for _ in range(q)]
        self.global_bids = {}
        self._round1 = {}
        for broker in scenario.brokers:
            val = valuations[broker.id]
            weight = (
                scenario.weights[broker.package_index]
                if broker.role == "local"
                else None
            )
            bid = _bid_round1(profile[broker.id].round1, val, {**ctx, "weight": weight})
            self._round1[broker.id] = bid
            if broker.role == "local":
                self.package_bids[broker.package_index][broker.id] = bid
            else:
                self.global_bids[broker.id] = bid

    def round1_map(self):
        return dict(self._round1)

    def round2(self, qualification, update):
        q = self.scenario.portfolio.q
        ctx = {"rule": self.scenario.rule, "q": q}
        bids = {}
        clamped = []
        participants = list(qualification.qualified_locals)
        weights = {b: self.scenario.weights[j] for j, b in enumerate(participants)}
        participants.append(qualification.qualified_global)
        weights[qualification.qualified_global] = None
        for broker_id in participants:
            cap = self._round1[broker_id]
            raw = _bid_round2(
                self.profile[broker_id].round2,
                self.valuations[broker_id],
                cap,
                {**ctx, "weight": weights[broker_id]},
            )
            bid = raw
            if bid < 0:
                bid = 0 * bid
            if bid > cap:
                bid = cap
            if bid != raw:
                clamped.append(broker_id)
            bids[broker_id] = bid
        return bids, clamped


def _draw_valuations(scenario, u_locals, u_globals):
    """Map uniform draws to valuations; fixed profile values when no
    distribution is configured for the role."""
    vals = {}
    dist_l = scenario.distributions.get("local")
    dist_g = scenario.distributions.get("global")
    li = gi = 0
    shared = None
    for broker in scenario.brokers:
        if broker.role == "local":
            if dist_l is None:
                vals[broker.id] = broker.valuation
            elif scenario.correlated_locals:
                if shared is None:
                    shared = dist_l.quantile(u_locals[0])
                vals[broker.id] = shared
            else:
                vals[broker.id] = dist_l.quantile(u_locals[li])
            li += 1
        else:
            if dist_g is None:
                vals[broker.id] = broker.valuation
            else:
                vals[broker.id] = dist_g.quantile(u_globals[gi])
            gi += 1
    return vals


def resolve_bids(scenario, profile, seed) -> BidPlan:
    """Draw valuations (stream 0 of the seed) and fix round-1 bids."""
    rng = mechanism._rng(seed, mechanism.STREAM_VALUES)
    n_loc = sum(1 for b in scenario.brokers if b.role == "local")
    n_glob = len(scenario.brokers) - n_loc
    u = rng.random(n_loc + n_glob)
    vals = _draw_valuations(scenario, u[:n_loc], u[n_loc:])
    return BidPlan(scenario, profile, vals)


@dataclass(frozen=True)
class SimMetrics:
    replications: int
    coalition_win_rate: float
    mean_seller_cost: float
    mean_broker_payoff: dict
    core_violation_count: int
    frontier_gap_max: float
    clamped_round2_count: int
    seed: object


@dataclass
class SimDetails:
    """Per-replication records, kept only when simulate(collect=True)."""

    won: list
    seller_cost: list
    fees: list          # per-rep tuple of local fees (package order)
    payoffs: dict       # broker id -> list
    global_bid2: list
    local_values: list  # realized shared/first local valuation


class _Runner:
    """Precompiled per-scenario state for the replication loop."""

    def __init__(self, scenario, profile):
        self.scenario = scenario
        self.rule = scenario.rule
        self.w = tuple(float(x) for x in scenario.weights)
        self.q = len(self.w)
        pf = scenario.portfolio
        self.pkg_values = tuple(float(pf.package_value(j)) for j in range(pf.q))
        self.total_value = float(pf.total_value)

        self.local_ids = []
        self.local_pkg = []
        self.global_ids = []
        for b in scenario.brokers:
            if b.role == "local":
                self.local_ids.append(b.id)
                self.local_pkg.append(b.package_index)
            else:
                self.global_ids.append(b.id)
        self.ids = self.local_ids + self.global_ids
        self.fixed_vals = {b.id: float(b.valuation) for b in scenario.brokers}
        self.dist_l = scenario.distributions.get("local")
        self.dist_g = scenario.distributions.get("global")
        self.correlated = scenario.correlated_locals

        self.pkg_members = [[] for _ in range(self.q)]
        for idx, j in enumerate(self.local_pkg):
            self.pkg_members[j].append(idx)
        for j, members in enumerate(self.pkg_members):
            if not members:
                raise ConfigurationError(f"package {j} has no local bidder")
            members.sort(key=lambda k: self.ids[k])
        self.single_global = len(self.global_ids) == 1

        def compile_round(strategy, weight):
            kind = strategy.kind
            if kind == "constant":
                v = float(strategy.value)
                return lambda val, cap: v
            if kind == "truthful":
                return lambda val, cap: val if val > 0 else 0.0
            if kind == "offset":
                off = float(strategy.offset)
                return lambda val, cap: max(val + off, 0.0)
            if kind == "capped-value":
                return lambda val, cap: min(cap, val)
            if kind == "equilibrium":
                rule = self.rule if self.rule != "vcg" else "nvcg"
                return lambda val, cap: max(
                    equilibrium_bid(
                        rule, val, strategy.sigma, weight, self.q,
                        in_qdown=strategy.in_qdown, ell=strategy.ell,
                        sum_w_qdown=strategy.sum_w_qdown,
                    ),
                    0.0,
                )
            raise ConfigurationError(f"unknown strategy kind {kind!r}")

        self._compile_round = compile_round
        self.bind(profile)

    def bind(self, profile):
        compile_round = self._compile_round
        self.f1 = []
        self.f2 = []
        for k, bid in enumerate(self.ids):
            weight = self.w[self.local_pkg[k]] if k < len(self.local_ids) else None
            st = profile[bid]
            self.f1.append(compile_round(st.round1, weight))
            self.f2.append(compile_round(st.round2, weight))

    # Draw-matrix layout per replication row:
    #   [0:L)            local value uniforms (first one reused when correlated)
    #   [L:L+G)          global value uniforms
    #   [L+G:L+G+q+1)    tie coins, one per sealed auction
    #   [L+G+q+1]        allocation tie coin
    def row_width(self):
        return len(self.local_ids) + len(self.global_ids) + self.q + 2

    def run_rep(self, row, track=None):
        L = len(self.local_ids)
        G = len(self.global_ids)
        q = self.q
        w = self.w

        vals = [0.0] * (L + G)
        if self.dist_l is None:
            for k in range(L):
                vals[k] = self.fixed_vals[self.ids[k]]
        elif self.correlated:
            shared = self.dist_l.quantile(row[0])
            for k in range(L):
                vals[k] = shared
        else:
            for k in range(L):
                vals[k] = self.dist_l.quantile(row[k])
        if self.dist_g is None:
            for k in range(G):
                vals[L + k] = self.fixed_vals[self.ids[L + k]]
        else:
            for k in range(G):
                vals[L + k] = self.dist_g.quantile(row[L + k])

        bids1 = [self.f1[k](vals[k], None) for k in range(L + G)]

        coin = L + G
        winners = [0] * q
        for j in range(q):
            members = self.pkg_members[j]
            if len(members) == 1:
                winners[j] = members[0]
            else:
                low = min(bids1[k] for k in members)
                pool = [k for k in members if bids1[k] == low]
                winners[j] = pool[0] if len(pool) == 1 else pool[int(row[coin + j] * len(pool))]
        if self.single_global:
            g_idx = L
        else:
            low = min(bids1[L + k] for k in range(G))
            pool = [L + k for k in range(G) if bids1[L + k] == low]
            g_idx = pool[0] if len(pool) == 1 else pool[int(row[coin + q] * len(pool))]

        bids2 = []
        clamped = 0
        for j in range(q):
            k = winners[j]
            raw = self.f2[k](vals[k], bids1[k])
            b = min(max(raw, 0.0), bids1[k])
            clamped += b != raw
            bids2.append(b)
        raw = self.f2[g_idx](vals[g_idx], bids1[g_idx])
        g2 = min(max(raw, 0.0), bids1[g_idx])
        clamped += g2 != raw

        total = sum(w[j] * bids2[j] for j in range(q))
        if total == g2:
            coalition = row[coin + q + 1] < 0.5
        else:
            coalition = total < g2

        fees = (0.0,) * q
        seller_cost = 0.0
        gap = 0.0
        violations = 0
        if coalition:
            if total == g2:
                fees = tuple(bids2)
            elif self.rule == "vcg":
                fees = pricing.vcg_fees(bids2, w, g2)
            elif self.rule == "nvcg":
                fees = pricing.nvcg_fees(bids2, w, g2)
            else:
                fees = pricing.dnvcg_fees(
                    tuple(bids1[winners[j]] for j in range(q)), bids2, w, g2
                ).fees
            seller_cost = sum(w[j] * fees[j] for j in range(q))
            gap = seller_cost - g2
            report = pricing.validate_core_point(fees, bids2, w, g2)
            violations = 0 if report.in_core else 1
        else:
            seller_cost = total

        payoffs = {}
        targets = range(L + G) if track is None else (track,)
        for k in targets:
            bid_id = self.ids[k]
            if k < L:
                j = self.local_pkg[k]
                if coalition and winners[j] == k:
                    payoffs[bid_id] = self.pkg_values[j] * (fees[j] - vals[k])
                else:
                    payoffs[bid_id] = 0.0
            else:
                if not coalition and k == g_idx:
                    payoffs[bid_id] = self.total_value * (seller_cost - vals[k])
                else:
                    payoffs[bid_id] = 0.0

        return {
            "won": coalition,
            "seller_cost": seller_cost,
            "fees": fees,
            "gap": gap,
            "violations": violations,
            "clamped": clamped,
            "payoffs": payoffs,
            "g2": g2,
            "local_value": vals[0] if L else 0.0,
        }


def _draw_matrix(seed, n, width):
    """Replication-major uniform draws: row k is replication k's budget,
    independent of n. Returned as plain Python floats for the loop."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    return gen.random((n, width)).tolist()


def simulate(scenario, profile=None, n=None, seed=None, collect=False):
    """Run n independent auctions and aggregate the outcomes.

    Deterministic for fixed (scenario, profile, n, seed); means use
    compensated summation so aggregation order cannot change results.
    """
    profile = profile if profile is not None else scenario.strategies
    if profile is None:
        raise ConfigurationError("no strategy profile supplied")
    n = n if n is not None else scenario.replications
    if n is None or n < 1:
        raise ConfigurationError("replication count must be at least 1")
    seed = seed if seed is not None else scenario.seed

    runner = _Runner(scenario, profile)
    rows = _draw_matrix(seed, n, runner.row_width())

    wins = 0
    costs = []
    gaps_max = 0.0
    violations = 0
    clamped = 0
    payoff_lists = {bid: [] for bid in runner.ids}
    details = SimDetails([], [], [], {bid: [] for bid in runner.ids}, [], []) if collect else None

    for k in range(n):
        rep = runner.run_rep(rows[k])
        wins += rep["won"]
        costs.append(rep["seller_cost"])
        if rep["won"]:
            gaps_max = max(gaps_max, abs(rep["gap"]))
        violations += rep["violations"]
        clamped += rep["clamped"]
        for bid, p in rep["payoffs"].items():
            payoff_lists[bid].append(p)
        if collect:
            details.won.append(rep["won"])
            details.seller_cost.append(rep["seller_cost"])
            details.fees.append(rep["fees"])
            details.global_bid2.append(rep["g2"])
            details.local_values.append(rep["local_value"])
            for bid, p in rep["payoffs"].items():
                details.payoffs[bid].append(p)

    metrics = SimMetrics(
        replications=n,
        coalition_win_rate=wins / n,
        mean_seller_cost=math.fsum(costs) / n,
        mean_broker_payoff={bid: math.fsum(v) / n for bid, v in payoff_lists.items()},
        core_violation_count=violations,
        frontier_gap_max=gaps_max,
        clamped_round2_count=clamped,
        seed=seed,
    )
    return (metrics, details) if collect else metrics


@dataclass(frozen=True)
class DominanceReport:
    """Paired comparison of one broker's payoff under two profiles."""

    broker_id: str
    replications: int
    mean_baseline: float
    mean_deviation: float
    mean_difference: float  # deviation minus baseline
    paired_se: float

    @property
    def improves_significantly(self) -> bool:
        return self.mean_difference > 3 * self.paired_se


def _differing_broker(baseline: StrategyProfile, deviation: StrategyProfile) -> str:
    if set(baseline.brokers) != set(deviation.brokers):
        raise ConfigurationError("profiles must cover the same brokers")
    diff = [b for b in baseline.brokers if baseline[b] != deviation[b]]
    if len(diff) > 1:
        raise ConfigurationError(
            f"profiles must differ for at most one broker, found {len(diff)}"
        )
    # identical profiles are allowed: the paired difference is exactly zero
    return diff[0] if diff else sorted(baseline.brokers)[0]


def compare_strategies(scenario, baseline, deviation, n, seed) -> DominanceReport:
    """Common-random-numbers payoff comparison for a unilateral deviation."""
    broker = _differing_broker(baseline, deviation)
    runner = _Runner(scenario, baseline)
    rows = _draw_matrix(seed, n, runner.row_width())
    track = runner.ids.index(broker)

    base_pay = []
    for k in range(n):
        base_pay.append(runner.run_rep(rows[k], track=track)["payoffs"][broker])
    dev_pay = []
    runner.bind(deviation)
    for k in range(n):
        dev_pay.append(runner.run_rep(rows[k], track=track)["payoffs"][broker])

    diffs = [d - b for d, b in zip(dev_pay, base_pay)]
    mean_diff = math.fsum(diffs) / n
    var = math.fsum((d - mean_diff) ** 2 for d in diffs) / (n - 1) if n > 1 else 0.0
    return DominanceReport(
        broker_id=broker,
        replications=n,
        mean_baseline=math.fsum(base_pay) / n,
        mean_deviation=math.fsum(dev_pay) / n,
        mean_difference=mean_diff,
        paired_se=math.sqrt(var / n) if n > 1 else 0.0,
    )
