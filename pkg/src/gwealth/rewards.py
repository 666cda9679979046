"""One-step reward of the goal-based plan as an explicit quadratic form.

The investor is penalized for the expected squared shortfall of next-period
portfolio value against a target, pays quadratic transaction costs, and books
the period's cash installment (which the budget constraint ties to the sum of
trades).  Expanding the expectation over returns turns the reward into a
quadratic form in positions x and trades u whose coefficient matrices are
assembled here.

Conventions: asset 0 is the risk-free bond, assets 1..N-1 are risky.  The
cross-coefficient ``r_ux`` is stored so that the reward term reads
u^T r_ux x.  All one-argument quadratic matrices are symmetrized on
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .market import ReturnCovariance


@dataclass(frozen=True)
class RewardParams:
    """Economic parameters of the one-step reward.

    lam    -- weight of the squared target shortfall (> 0)
    eta    -- desired gross growth rate of current wealth per period (> 0)
    rho    -- mixture weight in [0, 1] between wealth growth and benchmark
    omega  -- transaction-cost matrix (N x N symmetric PSD), or a scalar
              meaning omega * I
    """

    lam: float
    eta: float
    rho: float
    omega: np.ndarray | float

    def validate(self, n_assets: int | None = None) -> None:
        if not self.lam > 0.0:
            raise ParameterError(f"lam must be > 0, got {self.lam}")
        if not self.eta > 0.0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        om = self.omega
        if np.ndim(om) == 0:
            if not float(om) >= 0.0:
                raise ParameterError("scalar omega must be >= 0")
        else:
            om = np.asarray(om, dtype=float)
            if om.ndim != 2 or om.shape[0] != om.shape[1]:
                raise ShapeError(f"omega matrix must be square, got {om.shape}")
            if n_assets is not None and om.shape[0] != n_assets:
                raise ShapeError(f"omega is {om.shape} but there are {n_assets} assets")
            if not np.allclose(om, om.T, atol=1e-12, rtol=0.0):
                raise ParameterError("omega must be symmetric")
            if np.linalg.eigvalsh(om)[0] < -1e-12:
                raise ParameterError("omega must be positive semidefinite")

    def omega_matrix(self, n_assets: int) -> np.ndarray:
        """Transaction-cost matrix as a dense N x N array."""
        if np.ndim(self.omega) == 0:
            return float(self.omega) * np.eye(n_assets)
        om = np.asarray(self.omega, dtype=float)
        if om.shape != (n_assets, n_assets):
            raise ShapeError(f"omega is {om.shape}, expected ({n_assets}, {n_assets})")
        return om


@dataclass(frozen=True)
class BenchmarkPath:
    """Portfolio-independent benchmark values B_t, t = 0..T-1, in dollars."""

    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1:
            raise ShapeError("benchmark path must be a 1-D array")
        if not (b > 0.0).all():
            raise ParameterError("benchmark values must be positive")
        object.__setattr__(self, "b", b)

    @property
    def horizon(self) -> int:
        return self.b.shape[0]


def exponential_benchmark(initial: float, rate: float, horizon: int, dt: float) -> BenchmarkPath:
    """Benchmark compounded continuously: B_t = initial * exp(rate * t * dt)."""
    t = np.arange(horizon)
    return BenchmarkPath(b=initial * np.exp(rate * t * dt))


@dataclass(frozen=True)
class RewardCoeffs:
    """Coefficients of the quadratic one-step reward at a single period.

    The reward value is
        x^T r_xx x + u^T r_ux x + u^T r_uu u + x^T r_x + u^T r_u + r_0.
    ``sigma_hat`` is the second-moment matrix of gross returns and
    ``sigma_r_padded`` the return covariance padded with a zero row/column
    for the bond.
    """

    r_xx: np.ndarray
    r_ux: np.ndarray
    r_uu: np.ndarray
    r_x: np.ndarray
    r_u: np.ndarray
    r_0: float
    sigma_hat: np.ndarray
    sigma_r_padded: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.r_xx.shape[0]


def target_portfolio(params: RewardParams, b_t: float, x_t: np.ndarray) -> float:
    """Next-period wealth target: (1 - rho) * B_t + rho * eta * sum(x_t)."""
    return (1.0 - params.rho) * b_t + params.rho * params.eta * float(np.sum(x_t))


def pad_covariance(sigma_r: np.ndarray) -> np.ndarray:
    """Insert the bond's zero row/column in front of the risky covariance."""
    n = sigma_r.shape[0] + 1
    out = np.zeros((n, n))
    out[1:, 1:] = sigma_r
    return out


def build_coeffs(
    params: RewardParams,
    rbar_t: np.ndarray,
    sigma_r: ReturnCovariance,
    b_t: float,
) -> RewardCoeffs:
    """Assemble the quadratic reward coefficients for one period.

    ``rbar_t`` is the N-vector of expected per-period returns whose entry 0
    is the per-period risk-free rate.  The assembled quadratic form equals
    the closed-form expectation of the squared-shortfall reward over the
    return distribution N(rbar_t, padded sigma_r).
    """
    rbar_t = np.asarray(rbar_t, dtype=float)
    if rbar_t.ndim != 1:
        raise ShapeError("rbar_t must be a 1-D vector over assets")
    n = rbar_t.shape[0]
    if sigma_r.n_risky != n - 1:
        raise ShapeError(
            f"sigma_r covers {sigma_r.n_risky} risky assets but rbar_t has {n} entries "
            "(bond plus risky)"
        )
    params.validate(n)

    lam, eta, rho = params.lam, params.eta, params.rho
    omega = params.omega_matrix(n)
    ones = np.ones(n)
    g = 1.0 + rbar_t  # expected gross returns

    sig_pad = pad_covariance(sigma_r.sigma_r)
    sigma_hat = sig_pad + np.outer(g, g)
    sigma_hat = 0.5 * (sigma_hat + sigma_hat.T)

    cross = np.outer(g, ones)  # (1 + rbar) 1^T
    r_xx = -lam * eta**2 * rho**2 * np.outer(ones, ones) + lam * eta * rho * (cross + cross.T) \
        - lam * sigma_hat
    r_ux = 2.0 * lam * eta * rho * cross - 2.0 * lam * sigma_hat
    r_uu = -lam * sigma_hat - omega
    r_uu = 0.5 * (r_uu + r_uu.T)
    r_x = -2.0 * lam * eta * rho * (1.0 - rho) * b_t * ones + 2.0 * lam * (1.0 - rho) * b_t * g
    r_u = -ones + 2.0 * lam * (1.0 - rho) * b_t * g
    r_0 = -((1.0 - rho) ** 2) * lam * b_t**2

    return RewardCoeffs(
        r_xx=0.5 * (r_xx + r_xx.T), r_ux=r_ux, r_uu=r_uu,
        r_x=r_x, r_u=r_u, r_0=float(r_0),
        sigma_hat=sigma_hat, sigma_r_padded=sig_pad,
    )


def reward_value(coeffs: RewardCoeffs, x: np.ndarray, u: np.ndarray) -> float:
    """Evaluate the quadratic one-step reward at positions x and trades u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = coeffs.n_assets
    if x.shape != (n,) or u.shape != (n,):
        raise ShapeError(f"x and u must have shape ({n},), got {x.shape} and {u.shape}")
    return float(
        x @ coeffs.r_xx @ x
        + u @ coeffs.r_ux @ x
        + u @ coeffs.r_uu @ u
        + x @ coeffs.r_x
        + u @ coeffs.r_u
        + coeffs.r_0
    )
