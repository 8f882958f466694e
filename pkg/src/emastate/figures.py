"""Plot-data generators for the illustrative figure suite.

Each generator returns named columns (delimited text downstream, never
images): sampling-rate thinning, linear-vs-weekend time trends, a sigmoid
time-varying autoregression, declared-breakpoint regime switching, and the
stationary-versus-random-walk shock contrast.
"""

from __future__ import annotations

import numpy as np

from .errors import EmaError
from .model import ModelSpec
from .simulate import (DisturbanceEvent, PingSchedule, Regime, RegimeSchedule,
                       TrendSpec, TvpSchedule, simulate_dataset)


def _single_series(spec, sched, seed, **kwargs) -> tuple[np.ndarray, np.ndarray]:
    data = simulate_dataset(spec, sched, rng_seed=seed, **kwargs)
    p = data.participants[0]
    return p.timestamps, p.Y[:, 0]


def fig1a_series(seed: int) -> dict[str, np.ndarray]:
    """A densely sampled stable series plus the same series thinned to every
    5th and every 10th point (linearly interpolated back onto the full grid)."""
    spec = ModelSpec(A=[[0.9]], Sigma=[[1.0]], Theta=[[0.0]])
    sched = PingSchedule(kind="fixed", horizon=200.0, interval=1.0)
    t, y = _single_series(spec, sched, seed)
    cols = {"t": t, "full": y}
    for factor in (5, 10):
        keep = np.arange(0, t.size, factor)
        cols[f"thin{factor}"] = np.interp(t, t[keep], y[keep])
    return cols


def thinning_rmse(cols: dict[str, np.ndarray]) -> dict[int, float]:
    """Root-mean-square deviation of each thinned series from the full one."""
    out = {1: 0.0}
    for factor in (5, 10):
        d = cols[f"thin{factor}"] - cols["full"]
        out[factor] = float(np.sqrt(np.mean(d * d)))
    return out


def fig1b_series(seed: int) -> dict[str, np.ndarray]:
    """Two series sharing every parameter except the time trend: a linear
    increase versus a weekend effect (weekend coefficient 1.5 per ping)."""
    spec = ModelSpec(A=[[0.5]], Sigma=[[0.3]], G=[[1.0]], Theta=[[0.0]])
    sched = PingSchedule(kind="fixed", horizon=28 * 24.0, interval=24.0)
    linear = TrendSpec(kind="linear", coefficients=(0.03,))
    weekend = TrendSpec(kind="weekend", coefficients=(1.5,))
    t, y_lin = _single_series(spec, sched, seed, trends=[linear])
    _, y_wkd = _single_series(spec, sched, seed, trends=[weekend])
    return {"t": t, "linear_trend": y_lin, "weekend_trend": y_wkd}


def fig3a_series(seed: int) -> dict[str, np.ndarray]:
    """Autoregressive series whose coefficient rises sigmoidally from 0 at
    t=0 to 1 at t=100."""
    spec = ModelSpec(A=[[0.0]], Sigma=[[1.0]], Theta=[[0.0]])
    sched = PingSchedule(kind="fixed", horizon=101.0, interval=1.0)
    tvp = TvpSchedule(target=(0, 0), start_value=0.0, end_value=1.0,
                      midpoint=50.0, steepness=0.15)
    t, y = _single_series(spec, sched, seed, tvp=tvp)
    ar = np.array([tvp.value(v) for v in t])
    return {"t": t, "value": y, "ar_coefficient": ar}


def fig3b_series(seed: int) -> dict[str, np.ndarray]:
    """Regime switching: the series mean moves 0 -> 3 at t=33 and 3 -> -3 at
    t=66 over 100 pings."""
    spec = ModelSpec(A=[[0.5]], Sigma=[[1.0]], Theta=[[0.0]])
    sched = PingSchedule(kind="fixed", horizon=100.0, interval=1.0)
    regimes = RegimeSchedule(breakpoints=(33.0, 66.0),
                             regimes=(Regime(mean_offset=np.array([3.0])),
                                      Regime(mean_offset=np.array([-3.0]))))
    t, y = _single_series(spec, sched, seed, regimes=regimes)
    return {"t": t, "value": y}


FIG3C_SHOCK = 30.0


def fig3c_series(seed: int) -> dict[str, np.ndarray]:
    """Stationary versus random-walk series, equal innovation variance, both
    hit by one pulse disturbance at the midpoint: the stationary series
    returns to fluctuating around zero, the random walk keeps the shift."""
    sched = PingSchedule(kind="fixed", horizon=100.0, interval=1.0)
    shock = [DisturbanceEvent(onset=50.0, coding="pulse", magnitude=FIG3C_SHOCK)]
    stat = ModelSpec(A=[[0.5]], Sigma=[[1.0]], G=[[1.0]], Theta=[[0.0]])
    walk = ModelSpec(A=[[1.0]], Sigma=[[1.0]], G=[[1.0]], Theta=[[0.0]],
                     initial_cov=[[0.0]], random_walk_states=frozenset({0}))
    t, y_stat = _single_series(stat, sched, seed, events=shock)
    _, y_walk = _single_series(walk, sched, seed, events=shock)
    return {"t": t, "stationary": y_stat, "random_walk": y_walk}


FIGURES = {
    "fig1a": fig1a_series,
    "fig1b": fig1b_series,
    "fig3a": fig3a_series,
    "fig3b": fig3b_series,
    "fig3c": fig3c_series,
}


def figure_series(figure: str, seed: int) -> dict[str, np.ndarray]:
    try:
        gen = FIGURES[figure]
    except KeyError:
        raise EmaError("UNKNOWN_FIGURE",
                       f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    return gen(seed)


def columns_to_delimited(cols: dict[str, np.ndarray], sep: str = ",") -> str:
    names = list(cols)
    T = len(cols[names[0]])
    lines = [sep.join(names)]
    for i in range(T):
        lines.append(sep.join(f"{cols[nm][i]:.12g}" for nm in names))
    return "\n".join(lines) + "\n"
