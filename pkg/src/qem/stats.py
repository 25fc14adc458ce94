"""Estimator bookkeeping and Monte Carlo sampling of signed combinations.

Variances reported here are per shot. The variance of a mean over ``n``
shots is ``variance / n``, and every overhead is a ratio of per-shot
variances unless a report says otherwise.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core.rng import block_streams, derive_seed
from .core.states import as_array, fidelity, is_pure

CSV_FIELDS = ("method", "n_shots", "mean", "variance", "bias", "mse", "overhead", "seed")


@dataclass(frozen=True)
class EstimatorReport:
    """Summary of one estimator run.

    ``n_shots = 0`` marks an exact (shot-free) evaluation: the variance is
    NaN and the MSE reduces to the squared bias.
    """

    mean: float
    variance: float
    n_shots: int
    reference: float | None = None
    method: str = "raw"
    overhead: float = 1.0
    overhead_kind: str = "variance_ratio"
    seed: int | None = None
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("mean", "variance", "overhead"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "n_shots", int(self.n_shots))
        if self.n_shots < 0:
            raise ValueError("n_shots must be nonnegative")
        if self.reference is not None:
            object.__setattr__(self, "reference", float(self.reference))
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed))

    @property
    def bias(self) -> float | None:
        return None if self.reference is None else self.mean - self.reference

    @property
    def mse(self) -> float | None:
        if self.reference is None:
            return None
        sampling = 0.0 if self.n_shots == 0 else self.variance / self.n_shots
        return self.bias**2 + sampling

    @property
    def std_error(self) -> float:
        return 0.0 if self.n_shots == 0 else math.sqrt(self.variance / self.n_shots)

    def with_reference(self, reference: float) -> "EstimatorReport":
        return _replace(self, reference=reference)

    def with_method(self, method: str) -> "EstimatorReport":
        return _replace(self, method=method)

    def csv_row(self) -> dict:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return repr(x) if math.isfinite(x) else "nan"
            return str(x)

        row = {
            "method": self.method,
            "n_shots": self.n_shots,
            "mean": self.mean,
            "variance": self.variance,
            "bias": self.bias,
            "mse": self.mse,
            "overhead": self.overhead,
            "seed": self.seed,
        }
        return {k: fmt(v) for k, v in row.items()}


def _replace(report: EstimatorReport, **changes) -> EstimatorReport:
    d = asdict(report)
    d.update(changes)
    return EstimatorReport(**d)


def write_reports_csv(reports: Iterable[EstimatorReport], stream=None) -> str:
    """RFC 4180 CSV with the standard column set; returns the text."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\r\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def summarize(samples: Sequence[float], reference: float | None = None, **kwargs) -> EstimatorReport:
    """Sample mean and unbiased per-shot variance."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    mean = float(np.mean(x))
    var = float(np.sum((x - mean) ** 2) / (x.size - 1))
    return EstimatorReport(mean=mean, variance=var, n_shots=int(x.size), reference=reference, **kwargs)


def exact_report(value: float, reference: float | None = None, **kwargs) -> EstimatorReport:
    return EstimatorReport(mean=float(value), variance=float("nan"), n_shots=0, reference=reference, **kwargs)


def sampling_overhead(var_em: float, var_raw: float) -> float:
    """Ratio of per-shot variances."""
    if var_raw <= 0:
        raise ValueError("raw variance must be positive")
    return var_em / var_raw


def range_overhead(range_em: float, range_raw: float) -> float:
    """Ratio of squared estimator ranges, the Hoeffding-count version of the overhead."""
    if range_raw <= 0:
        raise ValueError("raw range must be positive")
    return (range_em / range_raw) ** 2


def hoeffding_samples(value_range: float, epsilon: float, delta: float) -> int:
    """Shots so that ``|mean - E| <= epsilon`` with probability at least ``1 - delta``."""
    if value_range < 0 or epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need range >= 0, epsilon > 0 and 0 < delta < 1")
    return math.ceil(math.log(2 / delta) * value_range**2 / (2 * epsilon**2))


def postselection_overhead(fault_rate: float) -> float:
    """Cost ``e^lambda`` of keeping only fault-free runs."""
    return math.exp(fault_rate)


class AliasTable:
    """Vose alias table for O(1) draws from a discrete distribution."""

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be a nonempty nonnegative vector with positive sum")
        n = w.size
        scaled = w * n / w.sum()
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1]
        large = [i for i in range(n) if scaled[i] >= 1]
        while small and large:
            s, g = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1 - scaled[s]
            (small if scaled[g] < 1 else large).append(g)
        self.prob = prob
        self.alias = alias

    def __len__(self) -> int:
        return self.prob.size

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.prob.size, size=size)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])


class Variant:
    """A circuit variant: draws single-shot values. Subclasses may vectorize."""

    def __init__(self, draw: Callable[[np.random.Generator], float]):
        self._draw = draw

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.array([self._draw(rng) for _ in range(size)], dtype=float)

    def __call__(self, rng: np.random.Generator) -> float:
        return float(self.sample(1, rng)[0])


class ConstantVariant(Variant):
    def __init__(self, value: float):
        self.value = float(value)

    def sample(self, size, rng):
        return np.full(size, self.value)


class PauliVariant(Variant):
    """``+-1`` outcome with ``P(+1) = (1 + expectation)/2``."""

    def __init__(self, expectation: float):
        if abs(expectation) > 1 + 1e-12:
            raise ValueError("Pauli expectation outside [-1, 1]")
        self.expectation = float(np.clip(expectation, -1, 1))

    def sample(self, size, rng):
        return np.where(rng.random(size) < (1 + self.expectation) / 2, 1.0, -1.0)


def _as_variant(v) -> Variant:
    if isinstance(v, Variant):
        return v
    if callable(v):
        return Variant(v)
    return ConstantVariant(v)


@dataclass(frozen=True)
class QuasiMix:
    """Signed combination ``sum_n alpha_n <variant_n>``."""

    terms: tuple[tuple[float, Variant], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("empty quasiprobability mix")
        terms = tuple((float(a), _as_variant(v)) for a, v in self.terms)
        if all(a == 0 for a, _ in terms):
            raise ValueError("mix has only zero coefficients")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def of(cls, *pairs) -> "QuasiMix":
        return cls(tuple(pairs))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms])

    @property
    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.alphas)))


def overhead_of_mix(mix: QuasiMix) -> float:
    """Monte Carlo overhead ``A^2`` with ``A = sum |alpha_n|``."""
    return mix.one_norm**2


def naive_overhead(mix: QuasiMix) -> float:
    """Cost ``K sum alpha_n^2`` of estimating each of the ``K`` terms separately."""
    return float(len(mix.terms) * np.sum(mix.alphas**2))


def mc_sample_mix(mix: QuasiMix, shots: int, rng, key: tuple[int, ...] = ()) -> np.ndarray:
    """Samples ``A sign(alpha_n) X_n`` with ``n`` drawn from ``|alpha_n|/A``."""
    if shots < 1:
        raise ValueError("need at least one shot")
    alphas = mix.alphas
    big_a = mix.one_norm
    table = AliasTable(np.abs(alphas))
    signs = np.sign(alphas)
    seed = derive_seed(rng)
    out = np.empty(shots)
    for start, size, g in block_streams(seed, key, shots):
        idx = table.sample(size, g)
        vals = np.empty(size)
        for n in np.unique(idx):
            where = idx == n
            vals[where] = mix.terms[n][1].sample(int(where.sum()), g)
        out[start : start + size] = big_a * signs[idx] * vals
    return out


def fidelity_boost(rho_em, rho, rho0) -> float:
    """``Tr[rho0 rho_em] / Tr[rho0 rho]`` for pure ``rho0``."""
    if not is_pure(rho0):
        raise ValueError("reference state must be pure")
    den = fidelity(rho0, rho)
    if den <= 0:
        raise ValueError("noisy state has zero overlap with the reference")
    return fidelity(rho0, rho_em) / den


def extraction_rate(boost: float, overhead: float, mode: str = "postprocess") -> float:
    """Fidelity boost per unit of sampling cost."""
    if overhead < 1:
        raise ValueError("overhead must be at least 1")
    if mode == "postprocess":
        return boost / math.sqrt(overhead)
    if mode == "postselect":
        return boost / overhead
    raise ValueError(f"unknown extraction mode {mode!r}")


def bias_fidelity_bound(obs_norm: float, rho0, rho_em) -> float:
    """Upper bound ``2 ||O|| sqrt(1 - F(rho0, rho_em))`` on the mitigated bias."""
    f = min(1.0, fidelity(as_array(rho0), as_array(rho_em)))
    return 2 * obs_norm * math.sqrt(max(0.0, 1 - f))


def propagate_linear_variance(weights: Sequence[float], variances: Sequence[float], shots: Sequence[int]) -> float:
    """Variance of ``sum_m w_m mean_m`` for independent means."""
    return float(sum(w * w * v / s for w, v, s in zip(weights, variances, shots)))
