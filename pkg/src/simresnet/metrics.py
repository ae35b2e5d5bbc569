"""Error sums, their corpus statistics, histograms and lognormal fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ContractError, DomainError, SimResNetError


class DegenerateFitError(SimResNetError, ValueError):
    """All samples coincide, so the log-space spread is zero."""


@dataclass(frozen=True)
class ErrorReport:
    per_picture: tuple  # (picture_id, eta_j) pairs
    eta_bar: float
    theta: float

    @property
    def P(self) -> int:
        return len(self.per_picture)

    @property
    def etas(self) -> np.ndarray:
        return np.array([eta for _, eta in self.per_picture])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def rows(self):
        """(bin_left, bin_right, count) triples."""
        return [
            (float(lo), float(hi), int(c))
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)
        ]


@dataclass(frozen=True)
class LognormalFit:
    mu: float
    s: float

    @property
    def median(self) -> float:
        return float(np.exp(self.mu))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - self.mu) / self.s
            out = np.exp(-0.5 * z**2) / (x * self.s * np.sqrt(2 * np.pi))
        return np.where(x > 0, out, 0.0)


def picture_error(outputs, target: float) -> float:
    """eta_j: sum over measurements of the 1-norm distance of x_i(T) to the target.

    ``outputs`` is an (M, N) array (or a list of output vectors); the scalar
    target is compared against every component.
    """
    out = np.asarray(outputs, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.size == 0:
        raise ContractError("picture_error needs at least one output")
    return float(np.sum(np.abs(out - float(target))))


def aggregate_errors(etas: Sequence[float]) -> tuple[float, float]:
    """Sample mean and population (1/P) variance of the per-picture errors."""
    e = np.asarray(etas, dtype=float)
    if e.size == 0:
        raise ContractError("aggregate_errors needs at least one picture")
    eta_bar = float(e.mean())
    theta = float(np.mean((e - eta_bar) ** 2))
    return eta_bar, theta


def error_report(pairs) -> ErrorReport:
    """Build an ErrorReport from (picture_id, eta_j) pairs."""
    pairs = tuple((str(pid), float(eta)) for pid, eta in pairs)
    eta_bar, theta = aggregate_errors([eta for _, eta in pairs])
    return ErrorReport(pairs, eta_bar, theta)


def histogram(values, bin_count: int) -> Histogram:
    """Equal-width bins over [min, max]; the last bin is closed on the right.

    A constant sample yields a single bin of width 2*eps around the value.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ContractError("histogram needs at least one value")
    if bin_count < 1:
        raise ContractError("bin_count must be >= 1")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        eps = 1e-9 * max(abs(lo), 1.0)
        return Histogram(np.array([lo - eps, hi + eps]), np.array([v.size]))
    counts, edges = np.histogram(v, bins=bin_count, range=(lo, hi))
    return Histogram(edges, counts)


def fit_lognormal(values) -> LognormalFit:
    """Log-moment fit: mu = mean(log x), s = population std of log x."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ContractError("a lognormal fit needs at least two samples")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DomainError("lognormal fit requires strictly positive finite samples")
    logs = np.log(v)
    mu = float(logs.mean())
    s = float(np.sqrt(np.mean((logs - mu) ** 2)))
    if s <= 1e-12 * max(1.0, abs(mu)):
        raise DegenerateFitError("samples are constant; log-space spread is zero")
    return LognormalFit(mu, s)
