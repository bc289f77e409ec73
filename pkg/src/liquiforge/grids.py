"""Re-hedging time grid and discount/funding term structures."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CurveSupportError,
    DegenerateError,
    InvalidSpecError,
    NegativeTimeOrderError,
    NotOnGridError,
)

_TIME_TOL = 1e-12


class CurveKind(enum.Enum):
    OIS = "OIS"
    FUNDING = "FUNDING"


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing year-fraction grid t_0 = 0 < t_1 < ... < t_n.

    All contractual payment times of any stream must be grid members.  The
    mesh is the largest step and drives the hedging-residual order studies.
    """

    times: tuple[float, ...]

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", ts)
        if len(ts) < 2:
            raise InvalidSpecError("grid needs at least two times")
        if abs(ts[0]) > _TIME_TOL:
            raise InvalidSpecError(f"grid must start at 0, got {ts[0]}")
        diffs = np.diff(ts)
        if np.any(diffs <= 0):
            raise InvalidSpecError("grid times must be strictly increasing")

    @classmethod
    def regular(cls, horizon: float, steps: int) -> "TimeGrid":
        if steps < 1 or horizon <= 0:
            raise InvalidSpecError("horizon and steps must be positive")
        return cls(tuple(np.linspace(0.0, horizon, steps + 1)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return self.times[-1]

    def mesh(self) -> float:
        return float(np.max(np.diff(self.array)))

    def index_of(self, t: float) -> int:
        for i, ti in enumerate(self.times):
            if abs(ti - t) <= _TIME_TOL * max(1.0, abs(t)) + _TIME_TOL:
                return i
        raise NotOnGridError(f"time {t} is not a grid point")

    def contains(self, t: float) -> bool:
        try:
            self.index_of(t)
            return True
        except NotOnGridError:
            return False

    def step_sizes(self) -> np.ndarray:
        return np.diff(self.array)


@dataclass(frozen=True)
class DiscountCurve:
    """Discount term structure P(T;0) on nodes, with an optional funding spread.

    A FUNDING curve carries piecewise-constant spread rates lambda_j per node
    interval; its discount factors satisfy
    P^f(T;0) = P(T;0) * exp(-Lambda(0,T)) with Lambda the integrated spread.
    Interpolation between nodes is log-linear in the discount factor; queries
    beyond the last node raise (extend the curve, never extrapolate).
    """

    kind: CurveKind
    times: tuple[float, ...]
    dfs: tuple[float, ...]
    spread_times: tuple[float, ...] = field(default=())
    spread_values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        ds = tuple(float(d) for d in self.dfs)
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "dfs", ds)
        object.__setattr__(self, "spread_times", tuple(float(t) for t in self.spread_times))
        object.__setattr__(self, "spread_values", tuple(float(v) for v in self.spread_values))
        if len(ts) != len(ds) or len(ts) < 2:
            raise InvalidSpecError("curve needs matching times/dfs with >= 2 nodes")
        if abs(ts[0]) > _TIME_TOL or abs(ds[0] - 1.0) > 1e-14:
            raise InvalidSpecError("curve must start with P(0;0) = 1")
        if np.any(np.diff(ts) <= 0):
            raise InvalidSpecError("curve node times must be strictly increasing")
        if any(d <= 0 for d in ds):
            raise InvalidSpecError("discount factors must be strictly positive")
        if self.kind is CurveKind.OIS and self.spread_values:
            raise InvalidSpecError("spread nodes only allowed on FUNDING curves")
        if self.kind is CurveKind.FUNDING:
            if len(self.spread_times) != len(self.spread_values):
                raise InvalidSpecError("spread times/values length mismatch")
            if self.spread_times and np.any(np.diff(self.spread_times) <= 0):
                raise InvalidSpecError("spread node times must be strictly increasing")

    # ------------------------------------------------------------------ OIS
    @classmethod
    def flat(
        cls,
        rate: float,
        horizon: float,
        kind: CurveKind = CurveKind.OIS,
        nodes: int = 64,
        spread: float = 0.0,
    ) -> "DiscountCurve":
        """Continuously compounded flat curve with dense nodes up to horizon."""
        ts = np.linspace(0.0, horizon, nodes + 1)
        ds = np.exp(-rate * ts)
        sp_t: tuple = ()
        sp_v: tuple = ()
        if kind is CurveKind.FUNDING:
            sp_t = (0.0,)
            sp_v = (spread,)
        return cls(kind, tuple(ts), tuple(ds), sp_t, sp_v)

    @property
    def horizon(self) -> float:
        return self.times[-1]

    def df(self, T) -> np.ndarray | float:
        """Base (OIS-leg) discount factor at any T within the node support."""
        T_arr = np.asarray(T, dtype=float)
        if np.any(T_arr < -_TIME_TOL) or np.any(T_arr > self.horizon + _TIME_TOL):
            raise CurveSupportError(
                f"time outside curve support [0, {self.horizon}]"
            )
        log_df = np.interp(T_arr, self.times, np.log(self.dfs))
        out = np.exp(log_df)
        return out if T_arr.ndim else float(out)

    def node_index(self, T: float) -> int:
        for i, ti in enumerate(self.times):
            if abs(ti - T) <= _TIME_TOL * max(1.0, abs(T)) + _TIME_TOL:
                return i
        raise NotOnGridError(f"time {T} is not a curve node")

    # -------------------------------------------------------------- spreads
    def spread_rate(self, t) -> np.ndarray | float:
        """Instantaneous funding spread lambda(t), piecewise constant."""
        if self.kind is not CurveKind.FUNDING or not self.spread_times:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        idx = np.searchsorted(self.spread_times, np.asarray(t, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.spread_values) - 1)
        vals = np.asarray(self.spread_values)[idx]
        return vals if np.ndim(t) else float(vals)

    def cumulative_spread(self, t, T) -> np.ndarray | float:
        """Lambda(t,T) = integral of the piecewise-constant spread over [t,T]."""
        t_arr = np.asarray(t, dtype=float)
        T_arr = np.asarray(T, dtype=float)
        if np.any(T_arr < t_arr - _TIME_TOL):
            raise NegativeTimeOrderError("need t <= T for cumulative spread")
        if self.kind is not CurveKind.FUNDING or not self.spread_times:
            out = np.zeros(np.broadcast(t_arr, T_arr).shape)
            return out if out.ndim else 0.0
        knots = np.asarray(self.spread_times, dtype=float)
        vals = np.asarray(self.spread_values, dtype=float)

        def _cum(x):
            # integral of lambda from 0 to x
            x = np.asarray(x, dtype=float)
            seg_end = np.append(knots[1:], np.inf)
            lo = np.minimum(np.maximum(x[..., None], knots), seg_end)
            return np.sum(vals * np.maximum(lo - knots, 0.0), axis=-1)

        out = _cum(T_arr) - _cum(t_arr)
        return out if out.ndim else float(out)

    def funding_df(self, T) -> np.ndarray | float:
        """P^f(T;0) = P(T;0)*exp(-Lambda(0,T)); equals df() on OIS curves."""
        base = self.df(T)
        if self.kind is not CurveKind.FUNDING:
            return base
        return base * np.exp(-self.cumulative_spread(0.0, T))

    # ----------------------------------------------------------------- JSON
    @classmethod
    def from_json(cls, payload: str | dict, kind: CurveKind = CurveKind.FUNDING) -> "DiscountCurve":
        """Parse {"ois": [[T, df], ...], "spread": [[t, lambda], ...]}."""
        obj = json.loads(payload) if isinstance(payload, str) else payload
        ois = obj.get("ois")
        if not ois:
            raise InvalidSpecError("curve JSON needs an 'ois' node list")
        ts, ds = zip(*ois)
        spread = obj.get("spread", [])
        if spread:
            sp_t, sp_v = zip(*spread)
        else:
            sp_t, sp_v = (), ()
        if kind is CurveKind.OIS:
            return cls(CurveKind.OIS, tuple(ts), tuple(ds))
        return cls(CurveKind.FUNDING, tuple(ts), tuple(ds), tuple(sp_t), tuple(sp_v))

    def to_json(self) -> dict:
        out = {"ois": [[t, d] for t, d in zip(self.times, self.dfs)]}
        if self.kind is CurveKind.FUNDING:
            out["spread"] = [[t, v] for t, v in zip(self.spread_times, self.spread_values)]
        return out


def forward_rate(curve: DiscountCurve, t1: float, t2: float) -> float:
    """Simple forward rate (P(T1) - P(T2)) / ((T2 - T1) * P(T2)) off curve nodes."""
    if t1 >= t2:
        raise DegenerateError(f"need T1 < T2, got {t1} >= {t2}")
    curve.node_index(t1)
    curve.node_index(t2)
    p1 = curve.df(t1)
    p2 = curve.df(t2)
    return float((p1 - p2) / ((t2 - t1) * p2))


def funding_bond(
    curve: DiscountCurve,
    T: float,
    t: float = 0.0,
    base_df: float | np.ndarray | None = None,
) -> float | np.ndarray:
    """Funding bond P^f(T;t) = P(T;t) * exp(-Lambda(t,T)).

    When base_df is given it supplies the model-state base discount factor
    P(T;t); otherwise the curve's time-0 forward factor df(T)/df(t) is used.
    """
    if curve.kind is not CurveKind.FUNDING:
        raise InvalidSpecError("funding_bond requires a FUNDING curve")
    if T < t:
        raise NegativeTimeOrderError(f"need t <= T, got t={t}, T={T}")
    curve.node_index(T)
    curve.node_index(t)
    if base_df is None:
        base_df = curve.df(T) / curve.df(t)
    lam = curve.cumulative_spread(t, T)
    return base_df * np.exp(-lam)
