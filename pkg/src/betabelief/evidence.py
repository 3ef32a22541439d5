"""Evidence/belief algebra and the evidential loss.

A network emits non-negative per-class evidence (e_pos, e_neg). Adding one
pseudo-count per class gives Beta parameters alpha = e_pos + 1 and
beta = e_neg + 1 with total E = alpha + beta. Derived quantities:

    p_pos = alpha / E          predicted positive-class probability
    p_neg = beta / E
    b_pos = e_pos / E          belief masses; b_pos + b_neg + u = 1
    u     = 2 / E              uncertainty mass, also written u_hat

The per-sample loss is the expected squared classification error under the
Beta prior (which has a closed form: squared residuals plus a variance term)
plus a lambda-weighted KL divergence that pulls a label-adjusted Beta toward
the all-uncertain Beta(1, 1). ``lambda`` follows a piecewise-constant decay
schedule over epochs.

All loss functions are vectorized over (y, alpha, beta) arrays and are pure;
``bayes_risk_mc`` is a seeded Monte Carlo estimator of the integral form of
the data term, kept as an independent cross-check of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .specfun import digamma, log_gamma

__all__ = [
    "EvidencePair",
    "BetaParams",
    "LambdaSchedule",
    "beta_from_evidence",
    "data_term",
    "kl_term",
    "total_loss",
    "loss_grad",
    "lambda_at",
    "bayes_risk_mc",
    "McEstimate",
    "trigamma",
]


@dataclass(frozen=True)
class EvidencePair:
    """Non-negative per-class evidence emitted by a model for one sample."""

    e_pos: float
    e_neg: float

    def __post_init__(self):
        for name, v in (("e_pos", self.e_pos), ("e_neg", self.e_neg)):
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            if v < 0.0:
                raise ValueError(f"{name} must be non-negative, got {v}")


@dataclass(frozen=True)
class BetaParams:
    """Beta distribution parameters (alpha, beta), both >= 1."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            if v < 1.0:
                raise ValueError(f"{name} must be >= 1, got {v}")

    @property
    def total(self) -> float:
        return self.alpha + self.beta

    @property
    def p_pos(self) -> float:
        return self.alpha / self.total

    @property
    def p_neg(self) -> float:
        return self.beta / self.total

    @property
    def uncertainty(self) -> float:
        """u_hat = 2 / (alpha + beta), in (0, 1]."""
        return 2.0 / self.total

    @property
    def belief_pos(self) -> float:
        return (self.alpha - 1.0) / self.total

    @property
    def belief_neg(self) -> float:
        return (self.beta - 1.0) / self.total

    @property
    def uncertainty_mass(self) -> float:
        """u = 1 - b_pos - b_neg; identical to ``uncertainty``."""
        return 1.0 - self.belief_pos - self.belief_neg


def beta_from_evidence(evidence: EvidencePair) -> BetaParams:
    """Map evidence to Beta parameters: alpha = e_pos + 1, beta = e_neg + 1."""
    return BetaParams(evidence.e_pos + 1.0, evidence.e_neg + 1.0)


def data_term(y, alpha, beta):
    """Closed-form expected squared error under the Beta prior.

    (y - p_pos)^2 + ((1-y) - p_neg)^2
        + [p_pos(1-p_pos) + p_neg(1-p_neg)] / (E + 1)
    """
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    total = alpha + beta
    p_pos = alpha / total
    p_neg = beta / total
    fit = (y - p_pos) ** 2 + ((1.0 - y) - p_neg) ** 2
    var = (p_pos * (1.0 - p_pos) + p_neg * (1.0 - p_neg)) / (total + 1.0)
    out = fit + var
    return float(out) if out.ndim == 0 else out


def _adjusted_params(y, alpha, beta):
    # Label rule: keep the labeled class's parameter, reset the other to 1.
    y = np.asarray(y, dtype=float)
    a_adj = np.where(y == 1.0, alpha, 1.0)
    b_adj = np.where(y == 1.0, 1.0, beta)
    return a_adj, b_adj


def kl_term(y, alpha, beta):
    """KL divergence of the label-adjusted Beta from the uniform Beta(1, 1).

    With (a, b) = (alpha, 1) for y = 1 and (1, beta) for y = 0:

        ln[G(a+b) / (G(a) G(b))]
            + (a-1)(psi(a) - psi(a+b)) + (b-1)(psi(b) - psi(a+b))

    Non-negative; zero exactly when the adjusted parameters are (1, 1).
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a_adj, b_adj = _adjusted_params(y, alpha, beta)
    s = a_adj + b_adj
    psi_s = digamma(s)
    out = (
        log_gamma(s)
        - log_gamma(a_adj)
        - log_gamma(b_adj)
        + (a_adj - 1.0) * (digamma(a_adj) - psi_s)
        + (b_adj - 1.0) * (digamma(b_adj) - psi_s)
    )
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def total_loss(y, alpha, beta, lam):
    """data_term + lam * kl_term, with lam in [0, 1]."""
    _check_lambda(lam)
    out = np.asarray(data_term(y, alpha, beta)) + lam * np.asarray(
        kl_term(y, alpha, beta)
    )
    return float(out) if out.ndim == 0 else out


def trigamma(x):
    """Trigamma function psi'(x) for x > 0 (derivative of the digamma series).

    Recurrence psi'(x) = psi'(x+1) + 1/x^2 shifts the argument above 6,
    then the asymptotic series is applied.
    """
    scalar = np.isscalar(x)
    xa = np.asarray(x, dtype=float).copy()
    if not np.all(np.isfinite(xa)):
        raise ValueError("x must be finite")
    if np.any(xa <= 0.0):
        raise ValueError("x must be strictly positive")
    acc = np.zeros_like(xa)
    while np.any(xa < 6.0):
        mask = xa < 6.0
        acc = acc + np.where(mask, 1.0 / (xa * xa), 0.0)
        xa = np.where(mask, xa + 1.0, xa)
    inv = 1.0 / xa
    inv2 = inv * inv
    # 1/x + 1/(2x^2) + sum B_{2k} / x^{2k+1}
    series = inv + 0.5 * inv2
    coeffs = (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0,
              -691.0 / 2730.0)
    power = inv2 * inv
    for c in coeffs:
        series = series + c * power
        power = power * inv2
    out = acc + series
    return float(out) if scalar else out


def loss_grad(y, alpha, beta, lam):
    """Partial derivatives of ``total_loss`` with respect to alpha and beta."""
    _check_lambda(lam)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    total = alpha + beta
    t_sq = total * total
    p_pos = alpha / total
    p_neg = beta / total
    resid = y - p_pos  # (1-y) - p_neg equals -resid
    var_sum = p_pos * (1.0 - p_pos) + p_neg * (1.0 - p_neg)

    d_data_da = (
        -4.0 * resid * beta / t_sq
        + 2.0 * beta * (p_neg - p_pos) / (t_sq * (total + 1.0))
        - var_sum / (total + 1.0) ** 2
    )
    d_data_db = (
        4.0 * resid * alpha / t_sq
        + 2.0 * alpha * (p_pos - p_neg) / (t_sq * (total + 1.0))
        - var_sum / (total + 1.0) ** 2
    )

    if lam != 0.0:
        a_adj, b_adj = _adjusted_params(y, alpha, beta)
        s = a_adj + b_adj
        # d/da KL(Beta(a,b) || Beta(1,1)) = (a-1) psi'(a) - (a+b-2) psi'(a+b);
        # only the kept parameter varies with the underlying alpha or beta.
        d_kl_kept = (np.where(y == 1.0, a_adj, b_adj) - 1.0) * trigamma(
            np.where(y == 1.0, a_adj, b_adj)
        ) - (s - 2.0) * trigamma(s)
        d_kl_da = np.where(y == 1.0, d_kl_kept, 0.0)
        d_kl_db = np.where(y == 1.0, 0.0, d_kl_kept)
        d_data_da = d_data_da + lam * d_kl_da
        d_data_db = d_data_db + lam * d_kl_db

    d_data_da = np.asarray(d_data_da)
    d_data_db = np.asarray(d_data_db)
    if d_data_da.ndim == 0:
        return float(d_data_da), float(d_data_db)
    return d_data_da, d_data_db


@dataclass(frozen=True)
class LambdaSchedule:
    """Piecewise-constant, non-increasing weight for the KL term.

    ``decay_points`` are fractions of the total epoch count; once the epoch
    index reaches a point, the corresponding decayed value applies.
    """

    initial: float = 1.0
    decay_points: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
    decayed_values: tuple[float, float] = (0.1, 0.001)

    def __post_init__(self):
        if not 0.0 <= self.initial <= 1.0:
            raise ConfigError(f"initial lambda must be in [0, 1], got {self.initial}")
        p0, p1 = self.decay_points
        if not 0.0 < p0 < p1 < 1.0:
            raise ConfigError(f"decay points must be increasing fractions, got {self.decay_points}")
        v0, v1 = self.decayed_values
        if not (0.0 <= v1 <= v0 <= self.initial):
            raise ConfigError("schedule values must be non-increasing and within [0, initial]")


def lambda_at(schedule: LambdaSchedule, epoch: int, total_epochs: int) -> float:
    """Schedule value for a 0-based epoch index."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})")
    # Small slack absorbs float fuzz in fraction * total products.
    if epoch >= schedule.decay_points[1] * total_epochs - 1e-9:
        return schedule.decayed_values[1]
    if epoch >= schedule.decay_points[0] * total_epochs - 1e-9:
        return schedule.decayed_values[0]
    return schedule.initial


class McEstimate(NamedTuple):
    value: float
    stderr: float


def bayes_risk_mc(y, alpha, beta, n_samples: int, seed: int) -> McEstimate:
    """Monte Carlo estimate of the integral form of the data term.

    Draws p ~ Beta(alpha, beta) and averages the squared two-class residual
    ||(y, 1-y) - (p, 1-p)||^2. Deterministic for a fixed seed; used as a
    test oracle for ``data_term``, never in training.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    p = rng.beta(alpha, beta, size=n_samples)
    vals = (y - p) ** 2 + ((1.0 - y) - (1.0 - p)) ** 2
    stderr = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return McEstimate(float(vals.mean()), stderr)


def _check_lambda(lam) -> None:
    if not np.isfinite(lam) or not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
