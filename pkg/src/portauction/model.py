"""Portfolio, package, and broker primitives shared by the auction engine.

A portfolio is a nonnegative quantity vector over m securities, partitioned
exactly into packages. Agreed prices are the execution prices contracted
with the seller; anticipated prices are the brokers' conditional price
expectations at delivery. Everything downstream (weights, valuations,
payoffs) is derived from these vectors.

All types are immutable after construction and every operation is a pure
function, so they are safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

Value = Union[int, float, Fraction]


class ConfigurationError(ValueError):
    """An auction input violates a structural invariant."""


class ModelWarning(UserWarning):
    """Lint-level validation finding that does not block construction."""


def _dot(a: Sequence, b: Sequence):
    return sum(x * y for x, y in zip(a, b))


def _div(num, den):
    """Division that stays exact when both operands are int/Fraction."""
    if isinstance(num, (int, Fraction)) and isinstance(den, (int, Fraction)):
        return Fraction(num) / Fraction(den)
    return num / den


@dataclass(frozen=True)
class PortfolioSpec:
    """A divisible portfolio and its exact partition into packages.

    quantities, agreed_prices, anticipated_prices all have length m;
    packages is a list of quantity vectors of length m whose component-wise
    sum equals quantities exactly. Prefer Fraction entries when inputs are
    rational: derived values then stay exact.
    """

    securities: tuple
    quantities: tuple
    agreed_prices: tuple
    anticipated_prices: tuple
    packages: tuple

    def __post_init__(self):
        object.__setattr__(self, "securities", tuple(self.securities))
        object.__setattr__(self, "quantities", tuple(self.quantities))
        object.__setattr__(self, "agreed_prices", tuple(self.agreed_prices))
        object.__setattr__(self, "anticipated_prices", tuple(self.anticipated_prices))
        object.__setattr__(self, "packages", tuple(tuple(p) for p in self.packages))

        m = len(self.securities)
        if m < 1:
            raise ConfigurationError("portfolio needs at least one security")
        for name, vec in (
            ("quantities", self.quantities),
            ("agreed_prices", self.agreed_prices),
            ("anticipated_prices", self.anticipated_prices),
        ):
            if len(vec) != m:
                raise ConfigurationError(f"{name} has length {len(vec)}, expected {m}")
        if m < 3:
            warnings.warn(
                f"portfolio has only {m} securities; the model is stated for 3 or more",
                ModelWarning,
                stacklevel=2,
            )
        if any(q < 0 for q in self.quantities):
            raise ConfigurationError("quantities must be nonnegative")
        if any(p <= 0 for p in self.agreed_prices):
            raise ConfigurationError("agreed prices must be strictly positive")
        if any(p <= 0 for p in self.anticipated_prices):
            raise ConfigurationError("anticipated prices must be strictly positive")

        if not self.packages:
            raise ConfigurationError("at least one package is required")
        for j, pkg in enumerate(self.packages):
            if len(pkg) != m:
                raise ConfigurationError(f"package {j} has length {len(pkg)}, expected {m}")
            if any(q < 0 for q in pkg):
                raise ConfigurationError(f"package {j} has a negative quantity")

        # The partition must be exact, component by component.
        for k in range(m):
            total = sum(pkg[k] for pkg in self.packages)
            if total != self.quantities[k]:
                raise ConfigurationError(
                    f"packages do not partition the portfolio: security "
                    f"{self.securities[k]!r} sums to {total}, expected {self.quantities[k]}"
                )

        for j, pkg in enumerate(self.packages):
            if _dot(self.agreed_prices, pkg) <= 0:
                raise ConfigurationError(f"package {j} has nonpositive agreed value")

    @property
    def m(self) -> int:
        return len(self.securities)

    @property
    def q(self) -> int:
        return len(self.packages)

    @property
    def total_value(self):
        """Agreed value of the whole portfolio."""
        return _dot(self.agreed_prices, self.quantities)

    def package_value(self, j: int):
        """Agreed value of package j."""
        return _dot(self.agreed_prices, self.packages[j])

    def price_deltas(self) -> tuple:
        """Per-security agreed-minus-anticipated price differences."""
        return tuple(a - e for a, e in zip(self.agreed_prices, self.anticipated_prices))


@dataclass(frozen=True)
class WeightVector:
    """Package weights: agreed package value over agreed portfolio value."""

    weights: tuple

    _SUM_TOL = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        if not self.weights:
            raise ConfigurationError("weight vector is empty")
        if any(not (0 < w <= 1) for w in self.weights):
            raise ConfigurationError("each weight must lie in (0, 1]")
        total = sum(self.weights)
        if abs(total - 1) > self._SUM_TOL:
            raise ConfigurationError(f"weights sum to {total}, expected 1")

    @property
    def q(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    def warn_if_above_broker_bound(self, n_brokers: int) -> None:
        """Warn when some weight exceeds 1/(n-1) for n participating brokers.

        The bound is a modeling guideline, not a hard constraint; results
        hold either way, so this is a lint warning only.
        """
        if n_brokers < 2:
            return
        bound = Fraction(1, n_brokers - 1)
        for j, w in enumerate(self.weights):
            if w > bound:
                warnings.warn(
                    f"weight {j} = {float(w):.4f} exceeds 1/(n-1) = {float(bound):.4f} "
                    f"for n = {n_brokers} brokers",
                    ModelWarning,
                    stacklevel=2,
                )


@dataclass(frozen=True)
class PriceChange:
    """Per-security relative price change, (agreed - anticipated) / agreed.

    A positive entry means the security is anticipated to trade below the
    agreed price, i.e. the executing broker anticipates a loss on it.
    """

    pct_change: tuple

    def __post_init__(self):
        object.__setattr__(self, "pct_change", tuple(self.pct_change))


@dataclass(frozen=True)
class BrokerProfile:
    """A participating broker.

    Locals bid on exactly one package (package_index); globals bid on the
    whole portfolio and carry no package_index. valuation is the broker's
    private break-even fee fraction. signal_params optionally holds a
    ValueDistribution describing how the valuation is drawn in simulations.
    """

    id: str
    role: str  # "local" | "global"
    valuation: Value = 0
    package_index: Optional[int] = None
    signal_params: object = None

    def __post_init__(self):
        if self.role not in ("local", "global"):
            raise ConfigurationError(f"broker {self.id!r}: unknown role {self.role!r}")
        if self.role == "local":
            if self.package_index is None or self.package_index < 0:
                raise ConfigurationError(
                    f"local broker {self.id!r} must reference exactly one package"
                )
        elif self.package_index is not None:
            raise ConfigurationError(
                f"global broker {self.id!r} must not reference a package"
            )


def derive_weights(spec: PortfolioSpec) -> WeightVector:
    """Compute package weights from agreed values."""
    total = spec.total_value
    if total <= 0:
        raise ConfigurationError("portfolio has zero agreed value")
    return WeightVector(
        tuple(_div(_dot(spec.agreed_prices, pkg), total) for pkg in spec.packages)
    )


def expected_price_change(spec: PortfolioSpec) -> PriceChange:
    """Relative per-security price changes under the loss-positive sign convention."""
    return PriceChange(
        tuple(_div(a - e, a) for a, e in zip(spec.agreed_prices, spec.anticipated_prices))
    )


def package_valuation(package: Sequence, spec: PortfolioSpec):
    """Break-even fee fraction of a package: (theta . dp) / (theta . p*).

    Passing the whole portfolio quantity vector yields the global broker's
    valuation of the aggregate.
    """
    value = _dot(spec.agreed_prices, package)
    if value <= 0:
        raise ConfigurationError("package has nonpositive agreed value")
    return _div(_dot(package, spec.price_deltas()), value)


def local_payoff(package: Sequence, spec: PortfolioSpec, fee, coalition_won: bool):
    """Realized payoff of executing a package at the given fee fraction.

    Commission income on the package's agreed value minus the anticipated
    price-variation loss; zero when the coalition did not win.
    """
    if fee < 0:
        raise ValueError("fee must be nonnegative")
    if not coalition_won:
        return 0
    return _dot(spec.agreed_prices, package) * fee - _dot(package, spec.price_deltas())
