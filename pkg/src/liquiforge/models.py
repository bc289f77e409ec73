"""Rate models, deterministic path generation, numeraires and measure changes.

Two stochastic models are provided:

* A one-factor Gaussian short-rate model (mean reversion ``a``, volatility
  ``sigma_r``) fitted to an initial discount curve.  Zero bonds are analytic
  in the single state factor, and transitions are sampled exactly (no Euler
  bias), either under the per-interval rolled-account spot measure or under
  a terminal-bond forward measure.

* A single-period lognormal forward-rate model for one accrual period
  [T1, T2].  The forward rate is a martingale under the T2-forward measure;
  simulation under the T1-forward measure uses exact two-component mixture
  sampling of the size-biased density.

Path generation is deterministic in (seed, n_paths, grid, model): normals are
drawn from counter-based Philox streams keyed on (seed, block index) with a
fixed intra-block order, so values do not depend on scheduling or worker
count.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidSpecError,
    MissingNumeraireError,
    NotOnGridError,
)
from .grids import CurveKind, DiscountCurve, TimeGrid
from .numerics import norm_cdf

_RNG_BLOCK = 1 << 16


# --------------------------------------------------------------------------
# model parameter containers
# --------------------------------------------------------------------------


class ModelKind(enum.Enum):
    DETERMINISTIC = "DETERMINISTIC"
    BLACK_SINGLE_PERIOD = "BLACK_SINGLE_PERIOD"
    GAUSSIAN_SHORT_RATE = "GAUSSIAN_SHORT_RATE"


class NumeraireKind(enum.Enum):
    TERMINAL_BOND = "TERMINAL_BOND"
    FUNDING_ACCOUNT = "FUNDING_ACCOUNT"


@dataclass(frozen=True)
class MeasureSpec:
    """Pricing measure: deflating numeraire plus the curve it lives on."""

    numeraire: NumeraireKind
    maturity: float | None = None
    curve_kind: CurveKind = CurveKind.FUNDING

    def __post_init__(self):
        if self.numeraire is NumeraireKind.TERMINAL_BOND and self.maturity is None:
            raise InvalidSpecError("TERMINAL_BOND measure needs a maturity")
        if self.numeraire is NumeraireKind.FUNDING_ACCOUNT and self.maturity is not None:
            raise InvalidSpecError("FUNDING_ACCOUNT measure takes no maturity")


@dataclass(frozen=True)
class DeterministicModel:
    """Zero-volatility model: every path carries the initial curve forward."""

    curve: DiscountCurve
    numeraire_choice: MeasureSpec = field(
        default=MeasureSpec(NumeraireKind.FUNDING_ACCOUNT)
    )

    kind = ModelKind.DETERMINISTIC


@dataclass(frozen=True)
class BlackSinglePeriod:
    """Lognormal forward rate L(T1,T2) over one period, flat before T1.

    l0 is the time-0 forward, sigma_l the lognormal volatility (1/sqrt(year)).
    p_t1 scales the short end: P(T1;0) = p_t1, P(T2;0) = p_t1/(1+l0*(T2-T1)).
    """

    l0: float
    sigma_l: float
    t1: float
    t2: float
    p_t1: float = 1.0
    numeraire_choice: MeasureSpec | None = None

    kind = ModelKind.BLACK_SINGLE_PERIOD

    def __post_init__(self):
        if self.sigma_l < 0:
            raise InvalidSpecError("sigma_l must be >= 0")
        if self.t1 >= self.t2:
            raise InvalidSpecError("need T1 < T2")
        if self.l0 <= -1.0 / (self.t2 - self.t1):
            raise InvalidSpecError("1 + l0*(T2-T1) must be positive")
        if self.p_t1 <= 0:
            raise InvalidSpecError("p_t1 must be positive")
        if self.numeraire_choice is None:
            object.__setattr__(
                self,
                "numeraire_choice",
                MeasureSpec(NumeraireKind.TERMINAL_BOND, self.t2, CurveKind.OIS),
            )
        m = self.numeraire_choice
        if m.numeraire is not NumeraireKind.TERMINAL_BOND or m.maturity not in (
            self.t1,
            self.t2,
        ):
            raise InvalidSpecError(
                "single-period model simulates under a T1- or T2-bond measure"
            )

    @property
    def accrual(self) -> float:
        return self.t2 - self.t1

    @property
    def p_t2(self) -> float:
        return self.p_t1 / (1.0 + self.l0 * self.accrual)


@dataclass(frozen=True)
class GaussianShortRate:
    """One-factor Gaussian short-rate model with analytic zero bonds.

    The state x(t) is the short-rate deviation from the initial forward
    curve; bonds reconstitute the initial curve exactly at x = 0:

        P(T;t) = [P(T;0)/P(t;0)] * exp(-B(t,T) x(t) - 0.5 B(t,T)^2 Vx(t))

    with B(t,T) = (1 - exp(-a (T-t)))/a and Vx the state variance.
    """

    mean_reversion: float
    sigma_r: float
    curve: DiscountCurve
    numeraire_choice: MeasureSpec = field(
        default=MeasureSpec(NumeraireKind.FUNDING_ACCOUNT)
    )

    kind = ModelKind.GAUSSIAN_SHORT_RATE

    def __post_init__(self):
        if self.mean_reversion < 0:
            raise InvalidSpecError("mean reversion must be >= 0")
        if self.sigma_r < 0:
            raise InvalidSpecError("sigma_r must be >= 0")


ModelSpec = DeterministicModel | BlackSinglePeriod | GaussianShortRate


# --------------------------------------------------------------------------
# Gaussian model analytics
# --------------------------------------------------------------------------


def _bcoef(a: float, dt):
    dt = np.asarray(dt, dtype=float)
    if a < 1e-12:
        out = dt
    else:
        out = (1.0 - np.exp(-a * dt)) / a
    return out if out.ndim else float(out)


def _state_var(a: float, sigma: float, t):
    t = np.asarray(t, dtype=float)
    if a < 1e-12:
        out = sigma * sigma * t
    else:
        out = sigma * sigma * (1.0 - np.exp(-2.0 * a * t)) / (2.0 * a)
    return out if out.ndim else float(out)


def _step_var(a: float, sigma: float, s: float, t: float) -> float:
    return float(_state_var(a, sigma, t - s))


def _drift_m(a: float, sigma: float, s: float, t: float) -> float:
    # risk-neutral mean shift of x over (s, t]
    if a < 1e-12:
        return 0.5 * sigma * sigma * (t * t - s * s)
    return (
        sigma
        * sigma
        / (2.0 * a * a)
        * (1.0 - np.exp(-a * (t - s)) - np.exp(-a * (t + s)) + np.exp(-2.0 * a * t))
    )


def _drift_c_forward(a: float, sigma: float, s: float, t: float, T: float) -> float:
    # Girsanov correction turning the risk-neutral step into the T-forward one
    if a < 1e-12:
        return sigma * sigma * (T * (t - s) - 0.5 * (t * t - s * s))
    first = sigma * sigma / (a * a) * (1.0 - np.exp(-a * (t - s)))
    second = (
        sigma
        * sigma
        / (2.0 * a * a)
        * (np.exp(-a * (T - t)) - np.exp(-a * (T + t - 2.0 * s)))
    )
    return first - second


# --------------------------------------------------------------------------
# deterministic RNG
# --------------------------------------------------------------------------


def _block_draws(seed: int, stream: int, n_rows: int, n_cols: int, uniform: bool,
                 n_threads: int = 1) -> np.ndarray:
    """Draws keyed on (seed, stream, block) with fixed intra-block order."""
    out = np.empty((n_rows, n_cols), dtype=float)
    blocks = [(b, lo, min(lo + _RNG_BLOCK, n_rows))
              for b, lo in enumerate(range(0, n_rows, _RNG_BLOCK))]

    def fill(args):
        b, lo, hi = args
        key = np.array([np.uint64(seed), np.uint64((stream << 32) | b)], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        if uniform:
            out[lo:hi] = gen.random((hi - lo, n_cols))
        else:
            out[lo:hi] = gen.standard_normal((hi - lo, n_cols))

    if n_threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(fill, blocks))
    else:
        for args in blocks:
            fill(args)
    return out


# --------------------------------------------------------------------------
# scenario container
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSet:
    """Simulated paths: model state, numeraire and analytic bond access.

    state[p, i] is the model state at grid time t_i on path p.  numeraire is
    the simulation numeraire N(t_i) (funding rolled account or a funding
    terminal bond).  uniforms is an independent iid U(0,1) panel used for
    rate-independent triggers.
    """

    grid: TimeGrid
    n_paths: int
    seed: int
    model: ModelSpec
    sim_measure: MeasureSpec
    state: np.ndarray
    numeraire: np.ndarray
    uniforms: np.ndarray

    def __post_init__(self):
        for arr in (self.state, self.numeraire, self.uniforms):
            arr.flags.writeable = False
        if np.any(self.numeraire <= 0):
            raise InvalidSpecError("numeraire values must be strictly positive")
        n0 = self.numeraire[:, 0]
        if np.any(n0 != n0[0]):
            raise InvalidSpecError("N(t_0) must be identical across paths")

    # ----------------------------------------------------------------- misc
    @property
    def n_times(self) -> int:
        return len(self.grid.times)

    @property
    def curve(self) -> DiscountCurve | None:
        return getattr(self.model, "curve", None)

    def numeraire_t0(self) -> float:
        return float(self.numeraire[0, 0])

    # ---------------------------------------------------------------- bonds
    def bond_coeffs(self, i: int, T: float, funding: bool = True) -> tuple[float, float]:
        """(A, B) with P(T; t_i, x) = A * exp(-B x) for the Gaussian family."""
        model = self.model
        if isinstance(model, BlackSinglePeriod):
            raise InvalidSpecError("single-period model bonds are not exponential-affine")
        t = self.grid.times[i]
        if T < t - 1e-12:
            raise MissingNumeraireError(f"bond maturity {T} before observation time {t}")
        curve = model.curve
        a = getattr(model, "mean_reversion", 0.0)
        sigma = getattr(model, "sigma_r", 0.0)
        b = _bcoef(a, T - t)
        amp = (curve.df(T) / curve.df(t)) * np.exp(-0.5 * b * b * _state_var(a, sigma, t))
        if funding:
            amp = amp * np.exp(-curve.cumulative_spread(t, T))
        return float(amp), float(b)

    def bond(self, i: int, T: float, funding: bool = True) -> np.ndarray:
        """Pathwise bond price P(T; t_i) (funding or base curve)."""
        model = self.model
        if isinstance(model, BlackSinglePeriod):
            return self._black_bond(i, T)
        amp, b = self.bond_coeffs(i, T, funding=funding)
        return amp * np.exp(-b * self.state[:, i])

    def _black_bond(self, i: int, T: float) -> np.ndarray:
        m: BlackSinglePeriod = self.model
        t = self.grid.times[i]
        ones = np.ones(self.n_paths)
        if abs(T - t) < 1e-12:
            return ones
        if T < t - 1e-12:
            raise MissingNumeraireError(f"bond {T} undefined at time {t}")
        if abs(t) < 1e-12:
            if abs(T - m.t1) < 1e-12:
                return m.p_t1 * ones
            if abs(T - m.t2) < 1e-12:
                return m.p_t2 * ones
        if abs(t - m.t1) < 1e-12 and abs(T - m.t2) < 1e-12:
            lib = self.state[:, i]
            return 1.0 / (1.0 + m.accrual * lib)
        raise NotOnGridError(f"single-period model defines bonds only on (T1, T2), got T={T}")

    def forward_libor(self, i: int, t_start: float, t_end: float) -> np.ndarray:
        """Simple forward rate for [t_start, t_end] seen at t_i (funding curve)."""
        if isinstance(self.model, BlackSinglePeriod):
            m = self.model
            if abs(t_start - m.t1) < 1e-12 and abs(t_end - m.t2) < 1e-12:
                return self.state[:, i].copy()
            raise NotOnGridError("single-period model only carries L(T1,T2)")
        p1 = self.bond(i, t_start)
        p2 = self.bond(i, t_end)
        return (p1 / p2 - 1.0) / (t_end - t_start)

    # ------------------------------------------------------------ validation
    def validate(self) -> None:
        """Assert positivity invariants and P(t_i; t_i) = 1 on every path."""
        assert np.all(self.numeraire > 0)
        for i in range(self.n_times):
            p_self = self.bond(i, self.grid.times[i])
            assert np.allclose(p_self, 1.0, atol=1e-12)
            p_end = self.bond(i, self.grid.horizon)
            assert np.all(p_end > 0)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


def simulate(
    model: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    n_threads: int = 1,
) -> ScenarioSet:
    """Generate a deterministic ScenarioSet for the given model and grid."""
    if n_paths < 1:
        raise InvalidSpecError("n_paths must be >= 1")
    if isinstance(model, BlackSinglePeriod):
        return _simulate_black(model, grid, n_paths, seed, n_threads)
    if isinstance(model, (GaussianShortRate, DeterministicModel)):
        return _simulate_gaussian(model, grid, n_paths, seed, n_threads)
    raise InvalidSpecError(f"unknown model spec {model!r}")


def _simulate_gaussian(
    model: GaussianShortRate | DeterministicModel,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    n_threads: int,
) -> ScenarioSet:
    if isinstance(model, DeterministicModel):
        a, sigma = 0.0, 0.0
        curve = model.curve
        measure = model.numeraire_choice
    else:
        a, sigma = model.mean_reversion, model.sigma_r
        curve = model.curve
        measure = model.numeraire_choice
    if grid.horizon > curve.horizon + 1e-12:
        raise InvalidSpecError("grid extends beyond the curve support")
    if measure.numeraire is NumeraireKind.TERMINAL_BOND:
        t_num = measure.maturity
        if not grid.contains(t_num):
            raise InvalidSpecError("terminal numeraire maturity must be a grid time")
    else:
        t_num = None

    times = grid.array
    n_steps = grid.n_steps
    if sigma > 0:
        z = _block_draws(seed, 0, n_paths, n_steps, uniform=False, n_threads=n_threads)
    else:
        z = np.zeros((n_paths, n_steps))
    uniforms = _block_draws(seed, 1, n_paths, len(times), uniform=True, n_threads=n_threads)

    state = np.zeros((n_paths, len(times)))
    for i in range(n_steps):
        s, t = times[i], times[i + 1]
        decay = np.exp(-a * (t - s)) if a > 0 else 1.0
        horizon_t = t if t_num is None else t_num
        drift = _drift_m(a, sigma, s, t) - _drift_c_forward(a, sigma, s, t, horizon_t)
        vol = np.sqrt(_step_var(a, sigma, s, t))
        state[:, i + 1] = state[:, i] * decay + drift + vol * z[:, i]

    scen = ScenarioSet(
        grid=grid,
        n_paths=n_paths,
        seed=seed,
        model=model,
        sim_measure=measure,
        state=state,
        numeraire=np.ones((n_paths, len(times))),
        uniforms=uniforms,
    )
    # numeraire columns need the bond accessor, so fill after construction
    numeraire = np.empty((n_paths, len(times)))
    if t_num is None:
        numeraire[:, 0] = 1.0
        for i in range(n_steps):
            step_df = scen.bond(i, times[i + 1], funding=True)
            numeraire[:, i + 1] = numeraire[:, i] / step_df
    else:
        for i in range(len(times)):
            numeraire[:, i] = scen.bond(i, t_num, funding=True)
    object.__setattr__(scen, "numeraire", numeraire)
    numeraire.flags.writeable = False
    return scen


def _simulate_black(
    model: BlackSinglePeriod,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    n_threads: int,
) -> ScenarioSet:
    expected = (0.0, model.t1, model.t2)
    if len(grid.times) != 3 or any(
        abs(g - e) > 1e-12 for g, e in zip(grid.times, expected)
    ):
        raise InvalidSpecError("single-period model requires the grid (0, T1, T2)")

    z = _block_draws(seed, 0, n_paths, 1, uniform=False, n_threads=n_threads)[:, 0]
    uniforms = _block_draws(seed, 1, n_paths, 3, uniform=True, n_threads=n_threads)
    vol = model.sigma_l * np.sqrt(model.t1)
    under_t1 = model.numeraire_choice.maturity == model.t1

    if not under_t1:
        lib = model.l0 * np.exp(-0.5 * vol * vol + vol * z)
    else:
        # T1-forward measure: density is proportional to (1 + accrual*L) times
        # the T2-forward lognormal, an exact two-component mixture where the
        # second component is the size-biased (drift-shifted) lognormal
        w_base = 1.0 / (1.0 + model.l0 * model.accrual)
        pick_base = uniforms[:, 0] < w_base
        lib = np.where(
            pick_base,
            model.l0 * np.exp(-0.5 * vol * vol + vol * z),
            model.l0 * np.exp(+0.5 * vol * vol + vol * z),
        )

    state = np.column_stack([np.full(n_paths, model.l0), lib, lib])

    if under_t1:
        # P(T1;t) column: undefined past T1, flag with NaN and guard in ops
        numeraire = np.column_stack(
            [np.full(n_paths, model.p_t1), np.ones(n_paths), np.full(n_paths, np.nan)]
        )
    else:
        p2_t1 = 1.0 / (1.0 + model.accrual * lib)
        numeraire = np.column_stack(
            [np.full(n_paths, model.p_t2), p2_t1, np.ones(n_paths)]
        )

    if under_t1:
        # the container rejects non-positive numeraires; patch the dead column
        numeraire[:, 2] = 1.0
    scen = ScenarioSet(
        grid=grid,
        n_paths=n_paths,
        seed=seed,
        model=model,
        sim_measure=model.numeraire_choice,
        state=state,
        numeraire=numeraire,
        uniforms=uniforms,
    )
    if under_t1:
        object.__setattr__(scen, "_numeraire_dead_from", 2)
    return scen


# --------------------------------------------------------------------------
# numeraire values and measure changes
# --------------------------------------------------------------------------


def numeraire_values(scen: ScenarioSet, measure: MeasureSpec, i: int) -> np.ndarray:
    """Pathwise numeraire value N(t_i) for the requested measure."""
    if measure == scen.sim_measure:
        dead = getattr(scen, "_numeraire_dead_from", None)
        if dead is not None and i >= dead:
            raise MissingNumeraireError("simulation numeraire undefined at this time")
        return scen.numeraire[:, i]
    if measure.numeraire is NumeraireKind.TERMINAL_BOND:
        t = scen.grid.times[i]
        if measure.maturity < t - 1e-12:
            raise MissingNumeraireError(
                f"terminal bond {measure.maturity} matured before t={t}"
            )
        funding = measure.curve_kind is CurveKind.FUNDING
        if isinstance(scen.model, BlackSinglePeriod):
            return scen.bond(i, measure.maturity)
        return scen.bond(i, measure.maturity, funding=funding)
    # funding account requested while simulating under a terminal measure
    if isinstance(scen.model, BlackSinglePeriod):
        raise MissingNumeraireError("single-period model has no rolled account")
    times = scen.grid.times
    n = np.ones(scen.n_paths)
    for k in range(i):
        n = n / scen.bond(k, times[k + 1], funding=measure.curve_kind is CurveKind.FUNDING)
    return n


def numeraire_change_weight(
    scen: ScenarioSet,
    frm: MeasureSpec,
    to: MeasureSpec,
    t: float,
) -> np.ndarray:
    """Radon-Nikodym weight turning from-measure means into to-measure means.

    For an F_t-measurable payoff Y:  E^to(Y) = E^frm(Y * w) with
    w = (N_to(t)/N_frm(t)) * (N_frm(0)/N_to(0)).  Weights average to one
    under the from-measure within Monte Carlo error.
    """
    i = scen.grid.index_of(t)
    if frm == to:
        return np.ones(scen.n_paths)
    n_frm = numeraire_values(scen, frm, i)
    n_to = numeraire_values(scen, to, i)
    n_frm0 = numeraire_values(scen, frm, 0)
    n_to0 = numeraire_values(scen, to, 0)
    return (n_to / n_frm) * (n_frm0[0] / n_to0[0])


# --------------------------------------------------------------------------
# closed forms for the Gaussian model (test oracles and AMC value oracles)
# --------------------------------------------------------------------------


def gaussian_zcb_put(
    model: GaussianShortRate,
    expiry: float,
    maturity: float,
    strike: float,
    t: float = 0.0,
    x=0.0,
    funding: bool = True,
) -> np.ndarray | float:
    """European put on P(maturity; expiry), conditional on state x at t."""
    a, sigma = model.mean_reversion, model.sigma_r
    curve = model.curve
    b_exp = _bcoef(a, expiry - t)
    b_mat = _bcoef(a, maturity - t)
    x = np.asarray(x, dtype=float)
    vx = _state_var(a, sigma, t)
    spread_exp = curve.cumulative_spread(t, expiry) if funding else 0.0
    spread_mat = curve.cumulative_spread(t, maturity) if funding else 0.0
    p_exp = (curve.df(expiry) / curve.df(t)) * np.exp(
        -0.5 * b_exp**2 * vx - b_exp * x - spread_exp
    )
    p_mat = (curve.df(maturity) / curve.df(t)) * np.exp(
        -0.5 * b_mat**2 * vx - b_mat * x - spread_mat
    )
    sig_p = (
        sigma
        * _bcoef(a, maturity - expiry)
        * np.sqrt(_state_var(a, 1.0, expiry - t))
    )
    if sig_p < 1e-14:
        out = np.maximum(strike * p_exp - p_mat, 0.0)
        return out if out.ndim else float(out)
    h = np.log(p_mat / (p_exp * strike)) / sig_p + 0.5 * sig_p
    out = strike * p_exp * norm_cdf(-h + sig_p) - p_mat * norm_cdf(-h)
    return out if out.ndim else float(out)


def gaussian_caplet_value(
    model: GaussianShortRate,
    t1: float,
    t2: float,
    strike: float,
    t: float = 0.0,
    x=0.0,
) -> np.ndarray | float:
    """Value at (t, x) of the caplet paying (L(T1,T2;T1) - K)^+ at T2.

    The payoff is the plain rate difference (no accrual factor); it equals
    (1+K*acc)/acc puts on the T2 bond struck at 1/(1+K*acc).
    """
    acc = t2 - t1
    scale = (1.0 + strike * acc) / acc
    k_bond = 1.0 / (1.0 + strike * acc)
    return scale * gaussian_zcb_put(model, t1, t2, k_bond, t=t, x=x)


def gaussian_caplet_price(model: GaussianShortRate, t1, t2, strike) -> float:
    return float(gaussian_caplet_value(model, t1, t2, strike, t=0.0, x=0.0))
