"""Performance evaluation: investment returns, Sharpe ratios, baselines.

Cash installments are external contributions, not investment performance, so
per-period returns are time-weighted: wealth change net of the same-period
contribution divided by beginning-of-period wealth plus the contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedSharpeError
from .glearner import Trajectory
from .market import ReturnPaths
from .rewards import BenchmarkPath, RewardParams, target_portfolio


@dataclass(frozen=True)
class PerformanceSummary:
    """Path-averaged per-period returns, annualized Sharpe, terminal-wealth
    statistics, and (when reward parameters are supplied) the path-averaged
    rectified shortfall against the wealth target."""

    mean_returns: np.ndarray
    sharpe: float
    terminal_wealth_stats: dict
    shortfall: np.ndarray | None = None


def investment_returns(traj: Trajectory) -> np.ndarray:
    """Per-period portfolio returns net of external cashflows."""
    wealth = traj.x.sum(axis=1)
    base = wealth[:-1] + traj.cash
    return (wealth[1:] - base) / base


def mean_wealth(trajs: list[Trajectory]) -> np.ndarray:
    """Path-averaged total wealth, length horizon + 1."""
    return np.stack([traj.x.sum(axis=1) for traj in trajs]).mean(axis=0)


def equal_weight_baseline(
    paths: ReturnPaths, x0: np.ndarray, r_f: float, dt: float
) -> list[Trajectory]:
    """Buy-and-hold benchmark: initial positions evolve at realized returns
    (bond at r_f * dt per period) with no trades and no cashflows."""
    x0 = np.asarray(x0, dtype=float)
    n = paths.n_risky + 1
    if x0.shape != (n,):
        raise ShapeError(f"x0 must cover the bond plus {paths.n_risky} risky assets")
    t_len = paths.horizon
    out = []
    bond = 1.0 + r_f * dt
    for p in range(paths.n_paths):
        x = np.empty((t_len + 1, n))
        x[0] = x0
        for t in range(t_len):
            gross = np.empty(n)
            gross[0] = bond
            gross[1:] = 1.0 + paths.realized[p, t]
            x[t + 1] = gross * x[t]
        out.append(Trajectory(x=x, u=np.zeros((t_len, n)), cash=np.zeros(t_len)))
    return out


def sharpe(trajs: list[Trajectory], r_f: float, dt: float) -> float:
    """Annualized Sharpe ratio of per-period investment returns pooled over
    paths and periods: mean excess over r_f * dt divided by the standard
    deviation, scaled by sqrt(1 / dt)."""
    if not trajs or trajs[0].horizon < 2:
        raise UndefinedSharpeError("need at least two periods for a Sharpe ratio")
    rets = np.concatenate([investment_returns(traj) for traj in trajs])
    excess = rets - r_f * dt
    std = float(excess.std(ddof=1))
    mean = float(excess.mean())
    if std == 0.0 or std < 1e-12 * abs(mean):
        raise UndefinedSharpeError("return variance is zero; Sharpe ratio undefined")
    return mean / std * float(np.sqrt(1.0 / dt))


def performance_summary(
    trajs: list[Trajectory],
    r_f: float,
    dt: float,
    params: RewardParams | None = None,
    benchmark: BenchmarkPath | None = None,
) -> PerformanceSummary:
    """Summarize a strategy's trajectories.

    The shortfall diagnostic (positive part of target minus next-period
    wealth, path-averaged per period) requires the reward parameters and the
    benchmark path and is omitted when they are not given.
    """
    rets = np.stack([investment_returns(traj) for traj in trajs])
    terminal = np.array([traj.x[-1].sum() for traj in trajs])
    stats = {
        "mean": float(terminal.mean()),
        "std": float(terminal.std(ddof=1)) if terminal.size > 1 else 0.0,
        "q05": float(np.quantile(terminal, 0.05)),
        "q25": float(np.quantile(terminal, 0.25)),
        "q50": float(np.quantile(terminal, 0.50)),
        "q75": float(np.quantile(terminal, 0.75)),
        "q95": float(np.quantile(terminal, 0.95)),
    }
    shortfall = None
    if params is not None and benchmark is not None:
        t_len = trajs[0].horizon
        if benchmark.horizon != t_len:
            raise ShapeError("benchmark horizon does not match trajectories")
        gaps = np.zeros((len(trajs), t_len))
        for i, traj in enumerate(trajs):
            wealth = traj.x.sum(axis=1)
            for t in range(t_len):
                target = target_portfolio(params, float(benchmark.b[t]), traj.x[t])
                gaps[i, t] = max(target - wealth[t + 1], 0.0)
        shortfall = gaps.mean(axis=0)
    return PerformanceSummary(
        mean_returns=rets.mean(axis=0),
        sharpe=sharpe(trajs, r_f, dt),
        terminal_wealth_stats=stats,
        shortfall=shortfall,
    )
