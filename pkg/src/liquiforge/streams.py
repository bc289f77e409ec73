"""Contractual cash-flow streams, stopping-time gating and the product library.

Products are represented as pathwise flow generators rather than closed-form
prices, so the same stream objects feed pricing, funding sensitivities and
the settlement-lag adjustments.  Each flow records its payment time, its
fixing time (the grid time at which the amount becomes known) and, where the
amount is a pointwise function of the fixing-time model state, a `fixer`
callable used by the hedging engine to evaluate the payoff at shifted states.

Conventions (single-curve): the underlying rate for a period [Ta, Tb] is the
simple forward rate of the funding curve, fixed at the period start and paid
at the period end.  Payoffs pay the plain rate difference; an accrual-factor
multiplier is available as an option but defaults to off.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyScheduleError,
    GridMismatchError,
    InvalidSpecError,
    NonAdaptedTriggerError,
    NotOnGridError,
)
from .grids import TimeGrid
from .models import BlackSinglePeriod, ScenarioSet


def _bcast(col: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Broadcast a per-path column against node-shaped state arrays."""
    extra = like.ndim - col.ndim
    return col.reshape(col.shape + (1,) * extra) if extra > 0 else col


@dataclass(frozen=True)
class Flow:
    """One contractual payment: amount known at fix time, paid at pay time."""

    pay_idx: int
    fix_idx: int
    amounts: np.ndarray
    fixer: object | None = None
    label: str = ""
    funding_independent: bool = False
    gate_idx: int | None = None
    gate_values: np.ndarray | None = None
    tau_values: np.ndarray | None = None  # stopping-time indices for aliveness
    analytic: tuple | None = None  # closed-form conditional-value tag
    analytic_scale: float = 1.0

    def __post_init__(self):
        if self.fix_idx > self.pay_idx:
            raise InvalidSpecError("flow cannot fix after it pays")
        self.amounts.flags.writeable = False

    @property
    def predictable(self) -> bool:
        """True when the amount is known strictly before the payment time."""
        return self.fix_idx < self.pay_idx

    def cond_columns(self, i: int) -> list[np.ndarray]:
        """Conditioning indicators measurable at t_i, for regression bases."""
        cols = []
        if self.gate_idx is not None and self.gate_idx <= i:
            cols.append(self.gate_values.astype(float))
        if self.tau_values is not None:
            cols.append((self.tau_values > i).astype(float))
        return cols


@dataclass(frozen=True)
class CashFlowStream:
    """A contract as a tuple of flows on a shared grid."""

    grid: TimeGrid
    flows: tuple[Flow, ...]
    n_paths: int
    lambda_dependent: bool = False
    label: str = ""

    def __post_init__(self):
        n = len(self.grid.times)
        for f in self.flows:
            if not (0 <= f.pay_idx < n):
                raise GridMismatchError("flow payment index outside grid")
            if len(f.amounts) != self.n_paths:
                raise GridMismatchError("flow amounts have wrong path count")

    def matrix(self) -> np.ndarray:
        """Dense per-path per-time amounts X_i; zero off the payment times."""
        out = np.zeros((self.n_paths, len(self.grid.times)))
        for f in self.flows:
            out[:, f.pay_idx] += f.amounts
        return out

    def predictable_at(self, i: int) -> bool:
        flows = [f for f in self.flows if f.pay_idx == i]
        return bool(flows) and all(f.predictable for f in flows)

    def scaled(self, factor: float) -> "CashFlowStream":
        flows = tuple(
            replace(
                f,
                amounts=f.amounts * factor,
                analytic_scale=f.analytic_scale * factor,
                fixer=(lambda g: (lambda x: factor * np.asarray(g(x), float)))(f.fixer)
                if f.fixer is not None
                else None,
            )
            for f in self.flows
        )
        return replace(self, flows=flows)

    @staticmethod
    def combined(streams: list["CashFlowStream"], label: str = "portfolio") -> "CashFlowStream":
        if not streams:
            raise EmptyScheduleError("cannot combine an empty list of streams")
        first = streams[0]
        for s in streams[1:]:
            if s.grid.times != first.grid.times or s.n_paths != first.n_paths:
                raise GridMismatchError("streams must share grid and path count")
        flows = tuple(f for s in streams for f in s.flows)
        return CashFlowStream(
            grid=first.grid,
            flows=flows,
            n_paths=first.n_paths,
            lambda_dependent=any(s.lambda_dependent for s in streams),
            label=label,
        )


# --------------------------------------------------------------------------
# stopping times
# --------------------------------------------------------------------------


class AdaptedStateView:
    """State access truncated at a decision time; later reads raise."""

    def __init__(self, scen: ScenarioSet, i: int):
        self._scen = scen
        self._i = i

    @property
    def time_index(self) -> int:
        return self._i

    def state(self, j: int | None = None) -> np.ndarray:
        j = self._i if j is None else j
        if j > self._i:
            raise NonAdaptedTriggerError(
                f"trigger at t_{self._i} tried to read state at t_{j}"
            )
        return self._scen.state[:, j]

    def uniform(self, j: int | None = None) -> np.ndarray:
        j = self._i if j is None else j
        if j > self._i:
            raise NonAdaptedTriggerError(
                f"trigger at t_{self._i} tried to read uniforms at t_{j}"
            )
        return self._scen.uniforms[:, j]


@dataclass(frozen=True)
class StoppingTimeSpec:
    """Grid-valued stopping time: per-path first index where a trigger fired.

    values[p] is the grid index of tau on path p, always in {1, ..., n}
    (the horizon acts as the fallback so the indicator partition sums to one).
    decision_lag = 1 marks times announced one step ahead (predictable flows).
    """

    values: np.ndarray
    n_times: int
    decision_lag: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "iu":
            raise InvalidSpecError("stopping time indices must be integers")
        if np.any(v < 1) or np.any(v > self.n_times - 1):
            raise InvalidSpecError("stopping time must take values in t_1..t_n")
        self.values.flags.writeable = False

    @classmethod
    def deterministic(cls, scen: ScenarioSet, t: float) -> "StoppingTimeSpec":
        k = scen.grid.index_of(t)
        if k < 1:
            raise InvalidSpecError("stopping time cannot be t_0")
        return cls(np.full(scen.n_paths, k, dtype=np.int64), scen.n_times)

    @classmethod
    def from_coin(cls, scen: ScenarioSet, p_stop: float, announce: bool = True) -> "StoppingTimeSpec":
        """First t_i whose (independent) coin fires; decided at t_{i-1} when announced."""
        n = scen.n_times
        tau = np.full(scen.n_paths, n - 1, dtype=np.int64)
        for i in range(n - 2, 0, -1):
            u = scen.uniforms[:, i - 1] if announce else scen.uniforms[:, i]
            tau = np.where(u < p_stop, i, tau)
        return cls(tau, n, decision_lag=1 if announce else 0)

    @classmethod
    def from_trigger(cls, scen: ScenarioSet, trigger) -> "StoppingTimeSpec":
        """First grid time at which trigger(view) fires; view blocks lookahead."""
        n = scen.n_times
        tau = np.full(scen.n_paths, n - 1, dtype=np.int64)
        fired = np.zeros(scen.n_paths, dtype=bool)
        for i in range(1, n - 1):
            hit = np.asarray(trigger(AdaptedStateView(scen, i)), dtype=bool)
            newly = hit & ~fired
            tau[newly] = i
            fired |= newly
        return cls(tau, n)

    def indicator(self, i: int) -> np.ndarray:
        return (self.values == i).astype(float)


# --------------------------------------------------------------------------
# product constructors
# --------------------------------------------------------------------------


def _require_on_grid(grid: TimeGrid, *times: float) -> list[int]:
    return [grid.index_of(t) for t in times]


def _rate_fixer(scen: ScenarioSet, fix_idx: int, t_start: float, t_end: float):
    """Pointwise forward rate L(t_start, t_end) as a function of the fix state."""
    if isinstance(scen.model, BlackSinglePeriod):
        return lambda x: np.asarray(x, dtype=float)
    a_s, b_s = scen.bond_coeffs(fix_idx, t_start)
    a_e, b_e = scen.bond_coeffs(fix_idx, t_end)
    acc = t_end - t_start

    def rate(x):
        x = np.asarray(x, dtype=float)
        return ((a_s / a_e) * np.exp((b_e - b_s) * x) - 1.0) / acc

    return rate


def fra_stream(
    scen: ScenarioSet, t1: float, t2: float, strike: float, accrual: bool = False
) -> CashFlowStream:
    """Forward rate agreement: pays L(T1,T2;T1) - K at T2 (textbook convention).

    With accrual=True the payment is multiplied by the period length.
    """
    i1, i2 = _require_on_grid(scen.grid, t1, t2)
    if i1 >= i2:
        raise InvalidSpecError("need T1 < T2")
    rate = _rate_fixer(scen, i1, t1, t2)
    factor = (t2 - t1) if accrual else 1.0
    lib = scen.forward_libor(i1, t1, t2)
    flow = Flow(
        pay_idx=i2,
        fix_idx=i1,
        amounts=factor * (lib - strike),
        fixer=lambda x: factor * (rate(x) - strike),
        label=f"fra[{t1},{t2}]@{strike}",
    )
    return CashFlowStream(scen.grid, (flow,), scen.n_paths, label=flow.label)


def caplet_stream(
    scen: ScenarioSet, t1: float, t2: float, strike: float, accrual: bool = False
) -> CashFlowStream:
    """Caplet: pays max(L(T1,T2;T1) - K, 0) at T2."""
    i1, i2 = _require_on_grid(scen.grid, t1, t2)
    if i1 >= i2:
        raise InvalidSpecError("need T1 < T2")
    rate = _rate_fixer(scen, i1, t1, t2)
    factor = (t2 - t1) if accrual else 1.0
    lib = scen.forward_libor(i1, t1, t2)
    flow = Flow(
        pay_idx=i2,
        fix_idx=i1,
        amounts=factor * np.maximum(lib - strike, 0.0),
        fixer=lambda x: factor * np.maximum(rate(x) - strike, 0.0),
        label=f"caplet[{t1},{t2}]@{strike}",
    )
    return CashFlowStream(scen.grid, (flow,), scen.n_paths, label=flow.label)


def unit_bond_stream(scen: ScenarioSet, t: float) -> CashFlowStream:
    """Deterministic unit flow at t: the linear reference stream."""
    k = scen.grid.index_of(t)
    flow = Flow(
        pay_idx=k,
        fix_idx=0,
        amounts=np.ones(scen.n_paths),
        fixer=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        label=f"bond[{t}]",
        funding_independent=True,
    )
    return CashFlowStream(scen.grid, (flow,), scen.n_paths, label=flow.label)


def deterministic_stream(scen: ScenarioSet, payments: dict[float, float]) -> CashFlowStream:
    """Fixed-amount flows {time: amount}; every flow is predictable."""
    flows = []
    for t, amount in sorted(payments.items()):
        k = scen.grid.index_of(t)
        amt = float(amount)
        flows.append(
            Flow(
                pay_idx=k,
                fix_idx=0,
                amounts=np.full(scen.n_paths, amt),
                fixer=(lambda a: (lambda x: np.full_like(np.asarray(x, dtype=float), a)))(amt),
                label=f"fixed[{t}]",
                funding_independent=True,
            )
        )
    return CashFlowStream(scen.grid, tuple(flows), scen.n_paths, label="deterministic")


def _swap_periods(scen: ScenarioSet, schedule) -> list[tuple[int, int, float, float]]:
    if len(schedule) < 2:
        raise EmptyScheduleError("swap schedule needs at least two dates")
    idx = _require_on_grid(scen.grid, *schedule)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidSpecError("schedule must be strictly increasing")
    return [
        (idx[k], idx[k + 1], schedule[k], schedule[k + 1])
        for k in range(len(schedule) - 1)
    ]


def swap_stream(scen: ScenarioSet, schedule, strike: float) -> CashFlowStream:
    """Payer swap: pays L(T_k, T_{k+1}; T_k) - K at each T_{k+1}."""
    flows = []
    for i_fix, i_pay, t_a, t_b in _swap_periods(scen, schedule):
        rate = _rate_fixer(scen, i_fix, t_a, t_b)
        lib = scen.forward_libor(i_fix, t_a, t_b)
        flows.append(
            Flow(
                pay_idx=i_pay,
                fix_idx=i_fix,
                amounts=lib - strike,
                fixer=(lambda r: (lambda x: r(x) - strike))(rate),
                label=f"swaplet[{t_a},{t_b}]",
            )
        )
    return CashFlowStream(scen.grid, tuple(flows), scen.n_paths, label=f"swap@{strike}")


def _cash_settled_value_fn(scen: ScenarioSet, i_e: int, periods, strike: float):
    """Swap value at exercise as a function of the exercise-time state."""
    coeffs = []
    for i_fix, i_pay, t_a, t_b in periods:
        a_a, b_a = scen.bond_coeffs(i_e, t_a)
        a_b, b_b = scen.bond_coeffs(i_e, t_b)
        acc = t_b - t_a
        coeffs.append((a_a, b_a, a_b, b_b, acc))

    def value(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for a_a, b_a, a_b, b_b, acc in coeffs:
            p_a = a_a * np.exp(-b_a * x)
            p_b = a_b * np.exp(-b_b * x)
            lib = (p_a / p_b - 1.0) / acc
            total = total + (lib - strike) * p_b
        return total

    return value


def swaption_physical_stream(
    scen: ScenarioSet, t_exercise: float, schedule, strike: float
) -> CashFlowStream:
    """Physically settled payer swaption: swap flows gated by exercise at T_e."""
    periods = _swap_periods(scen, schedule)
    i_e = scen.grid.index_of(t_exercise)
    if i_e > periods[0][0]:
        raise InvalidSpecError("exercise must not be after the first fixing")
    value_fn = _cash_settled_value_fn(scen, i_e, periods, strike)
    exercise_value = value_fn(scen.state[:, i_e])
    gate = (exercise_value > 0.0).astype(float)

    flows = []
    for i_fix, i_pay, t_a, t_b in periods:
        rate = _rate_fixer(scen, i_fix, t_a, t_b)
        lib = scen.forward_libor(i_fix, t_a, t_b)

        def make_fixer(r, g, own_gate):
            if own_gate:
                # gate and rate fix simultaneously: both from the node state
                return lambda x: (value_fn(x) > 0.0) * (r(x) - strike)
            return lambda x: _bcast(g, np.asarray(x, dtype=float)) * (r(x) - strike)

        flows.append(
            Flow(
                pay_idx=i_pay,
                fix_idx=i_fix,
                amounts=gate * (lib - strike),
                fixer=make_fixer(rate, gate, i_fix == i_e),
                label=f"swaption_leg[{t_a},{t_b}]",
                gate_idx=i_e,
                gate_values=gate,
            )
        )
    return CashFlowStream(
        scen.grid, tuple(flows), scen.n_paths, label=f"swaption_phys@{strike}"
    )


def swaption_cash_stream(
    scen: ScenarioSet, t_exercise: float, schedule, strike: float
) -> CashFlowStream:
    """Cash settled payer swaption: exercise value paid at T_e when positive."""
    periods = _swap_periods(scen, schedule)
    i_e = scen.grid.index_of(t_exercise)
    if i_e > periods[0][0]:
        raise InvalidSpecError("exercise must not be after the first fixing")
    value_fn = _cash_settled_value_fn(scen, i_e, periods, strike)
    exercise_value = value_fn(scen.state[:, i_e])
    amounts = np.maximum(exercise_value, 0.0)
    flow = Flow(
        pay_idx=i_e,
        fix_idx=i_e,
        amounts=amounts,
        fixer=lambda x: np.maximum(value_fn(x), 0.0),
        label=f"swaption_cash@{strike}",
    )
    return CashFlowStream(scen.grid, (flow,), scen.n_paths, label=flow.label)


def unit_at_tau_stream(scen: ScenarioSet, tau: StoppingTimeSpec) -> CashFlowStream:
    """Unit notional paid at the stopping time: X_i = 1{tau = t_i}."""
    if tau.n_times != scen.n_times or len(tau.values) != scen.n_paths:
        raise GridMismatchError("stopping time does not match the scenario set")
    flows = []
    for i in range(1, scen.n_times):
        fix = max(i - tau.decision_lag, 0)
        flows.append(
            Flow(
                pay_idx=i,
                fix_idx=fix,
                amounts=tau.indicator(i),
                label=f"unit_at_tau[{i}]",
                funding_independent=tau.decision_lag > 0,
                tau_values=tau.values,
            )
        )
    return CashFlowStream(scen.grid, tuple(flows), scen.n_paths, label="unit_at_tau")


def digital_pair_stream(
    scen: ScenarioSet, t1: float, t2: float, strike: float
) -> CashFlowStream:
    """Digital caplet in arrears at T1 paired with its complement at T2.

    X_1 = 1{L(T1,T2;T1) > K} paid at T1, X_2 = 1 - X_1 paid at T2; the pair
    sums to one on every path while its bond-measure expected flows do not.
    """
    i1, i2 = _require_on_grid(scen.grid, t1, t2)
    if i1 >= i2:
        raise InvalidSpecError("need T1 < T2")
    lib = scen.forward_libor(i1, t1, t2)
    rate = _rate_fixer(scen, i1, t1, t2)
    x1 = (lib > strike).astype(float)
    flows = (
        Flow(
            pay_idx=i1,
            fix_idx=i1,
            amounts=x1,
            fixer=lambda x: (rate(x) > strike).astype(float),
            label="digital_t1",
        ),
        Flow(
            pay_idx=i2,
            fix_idx=i1,
            amounts=1.0 - x1,
            fixer=lambda x: (rate(x) <= strike).astype(float),
            label="digital_t2",
        ),
    )
    return CashFlowStream(scen.grid, flows, scen.n_paths, label=f"digital_pair@{strike}")


# --------------------------------------------------------------------------
# ProductSpec JSON
# --------------------------------------------------------------------------

_PRODUCT_KINDS = {
    "FRA",
    "CAPLET",
    "SWAP",
    "SWAPTION_PHYSICAL",
    "SWAPTION_CASH",
    "UNIT_AT_TAU",
    "DIGITAL_PAIR",
    "UNIT_BOND",
}


@dataclass(frozen=True)
class ProductSpec:
    """Declarative product description, JSON shape:
    {"kind": ..., "strike": ..., "schedule": [...], "exercise": ...}."""

    kind: str
    strike: float | None = None
    schedule: tuple[float, ...] = field(default=())
    exercise: float | None = None
    notional: float = 1.0
    tau_stop_probability: float | None = None

    def __post_init__(self):
        if self.kind not in _PRODUCT_KINDS:
            raise InvalidSpecError(f"unknown product kind {self.kind!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "ProductSpec":
        known = {"kind", "strike", "schedule", "exercise", "notional", "tau_stop_probability"}
        extra = set(obj) - known
        if extra:
            raise InvalidSpecError(f"unknown product keys {sorted(extra)}")
        return cls(
            kind=obj["kind"],
            strike=obj.get("strike"),
            schedule=tuple(obj.get("schedule", ())),
            exercise=obj.get("exercise"),
            notional=obj.get("notional", 1.0),
            tau_stop_probability=obj.get("tau_stop_probability"),
        )

    def build(self, scen: ScenarioSet) -> CashFlowStream:
        kind = self.kind
        if kind == "FRA":
            stream = fra_stream(scen, self.schedule[0], self.schedule[1], self.strike)
        elif kind == "CAPLET":
            stream = caplet_stream(scen, self.schedule[0], self.schedule[1], self.strike)
        elif kind == "SWAP":
            stream = swap_stream(scen, list(self.schedule), self.strike)
        elif kind == "SWAPTION_PHYSICAL":
            stream = swaption_physical_stream(scen, self.exercise, list(self.schedule), self.strike)
        elif kind == "SWAPTION_CASH":
            stream = swaption_cash_stream(scen, self.exercise, list(self.schedule), self.strike)
        elif kind == "UNIT_BOND":
            stream = unit_bond_stream(scen, self.schedule[0])
        elif kind == "DIGITAL_PAIR":
            stream = digital_pair_stream(scen, self.schedule[0], self.schedule[1], self.strike)
        elif kind == "UNIT_AT_TAU":
            p = self.tau_stop_probability if self.tau_stop_probability is not None else 0.3
            stream = unit_at_tau_stream(scen, StoppingTimeSpec.from_coin(scen, p))
        else:  # pragma: no cover
            raise InvalidSpecError(kind)
        if self.notional != 1.0:
            stream = stream.scaled(self.notional)
        return stream
