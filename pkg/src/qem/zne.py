"""Zero-noise extrapolation.

Each node runs the circuit with every fault probability multiplied by a
scale factor, then a model fitted through the node values is evaluated at
zero noise.

With linear boosting, a circuit of ``M`` global-depolarizing faults keeps
the ideal signal with weight ``prod_f (1 - s p_f)``. That is exponential in
the Poisson rate ``x(s) = -ln prod_f (1 - s p_f)``, not in ``s`` itself,
so the exponential model regresses against ``x(s)`` by default. Polynomial
models use the scale factor directly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core.circuit import NoisyCircuit, poisson_fault_rate, run_circuit
from .core.paulis import observable
from .core.rng import derive_seed
from .core.sampling import sample_shots
from .core.states import expectation
from .stats import EstimatorReport

MODELS = ("richardson", "polynomial", "exponential")


def richardson_coefficients(nodes: Sequence[float], allow_single: bool = False) -> np.ndarray:
    """``gamma_m = prod_{k != m} lambda_k / (lambda_k - lambda_m)``."""
    lam = np.asarray(nodes, dtype=float)
    if lam.size == 1:
        if not allow_single:
            raise ValueError("a single node only extrapolates in diagnostic mode")
        return np.ones(1)
    if lam.size == 0:
        raise ValueError("no nodes")
    if len(np.unique(lam)) != lam.size:
        raise ValueError("duplicate nodes")
    if np.any(lam == 0):
        raise ValueError("nodes must be nonzero")
    out = np.empty(lam.size)
    for m in range(lam.size):
        others = np.delete(lam, m)
        out[m] = np.prod(others / (others - lam[m]))
    return out


def richardson_overhead(nodes: Sequence[float]) -> float:
    """``(sum_m |gamma_m|)^2``."""
    return float(np.sum(np.abs(richardson_coefficients(nodes))) ** 2)


def richardson_extrapolate(nodes: Sequence[float], values: Sequence[float]) -> float:
    return float(np.dot(richardson_coefficients(nodes), values))


def polynomial_weights(xs: Sequence[float], degree: int) -> np.ndarray:
    """Linear weights giving the least-squares polynomial fit's value at zero."""
    x = np.asarray(xs, dtype=float)
    if degree < 0 or degree >= x.size:
        raise ValueError(f"degree {degree} needs more than {x.size} nodes")
    vander = np.vander(x, degree + 1, increasing=True)
    # first row of the pseudo-inverse maps data to the intercept
    return np.linalg.pinv(vander)[0]


def fit_exponential(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Fit ``value = a exp(-b x)`` by least squares on ``ln|value|``.

    Returns ``(a, b)`` with the common sign of the data carried by ``a``.
    """
    if len(points) < 2:
        raise ValueError("exponential fit needs at least two points")
    x = np.array([p[0] for p in points], dtype=float)
    v = np.array([p[1] for p in points], dtype=float)
    if np.any(v == 0) or not (np.all(v > 0) or np.all(v < 0)):
        raise ValueError("exponential fit needs nonzero values of one sign")
    if len(np.unique(x)) < 2:
        raise ValueError("exponential fit needs two distinct abscissae")
    slope, intercept = np.polyfit(x, np.log(np.abs(v)), 1)
    return float(np.sign(v[0]) * math.exp(intercept)), float(-slope)


def _exponential_gradient(xs: np.ndarray, values: np.ndarray, a: float) -> np.ndarray:
    """``d a / d v_m`` for the log-linear fit."""
    w = polynomial_weights(xs, 1)
    return a * w / values


@dataclass(frozen=True)
class ZneConfig:
    """Extrapolation settings.

    ``shots_per_node = 0`` selects exact mode (expectations read from the
    density matrix). ``abscissa`` is ``"scale"``, ``"fault_rate"`` or
    ``"auto"`` (fault rate for the exponential model, scale otherwise).
    """

    nodes: tuple[float, ...] = (1.0, 2.0)
    model: str = "richardson"
    degree: int | None = None
    shots_per_node: int = 0
    abscissa: str = "auto"
    diagnostic: bool = False

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if len(nodes) < 2 and not (self.diagnostic and self.model == "richardson"):
            raise ValueError("extrapolation needs at least two nodes")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < 1:
            raise ValueError("nodes are boost factors and must be at least 1")
        if self.model == "polynomial" and (self.degree is None or self.degree >= len(nodes)):
            raise ValueError("polynomial model needs a degree below the node count")
        if self.abscissa not in ("auto", "scale", "fault_rate"):
            raise ValueError(f"unknown abscissa {self.abscissa!r}")
        if self.shots_per_node < 0:
            raise ValueError("shots_per_node must be nonnegative")

    @property
    def exact(self) -> bool:
        return self.shots_per_node == 0

    def uses_fault_rate(self) -> bool:
        if self.abscissa == "auto":
            return self.model == "exponential"
        return self.abscissa == "fault_rate"


def extrapolate(xs: Sequence[float], values: Sequence[float], cfg: ZneConfig) -> tuple[float, np.ndarray]:
    """Zero-noise value and its gradient with respect to the node values."""
    x = np.asarray(xs, dtype=float)
    v = np.asarray(values, dtype=float)
    if cfg.model == "richardson":
        w = richardson_coefficients(x, allow_single=cfg.diagnostic)
        return float(w @ v), w
    if cfg.model == "polynomial":
        w = polynomial_weights(x, cfg.degree)
        return float(w @ v), w
    a, _ = fit_exponential(list(zip(x, v)))
    return a, _exponential_gradient(x, v, a)


def zne_mitigate(
    circuit: NoisyCircuit, obs, cfg: ZneConfig, rng=None, initial=None, workers: int = 1
) -> EstimatorReport:
    """Run every node, fit, and report the zero-noise estimate.

    The report's per-shot variance is normalized to the total shot budget so
    that ``variance / n_shots`` is the variance of the estimate. ``extras``
    holds the per-node sweep and the abscissae used.
    """
    obs = observable(obs)
    if cfg.nodes[-1] * circuit.max_p() >= 1:
        raise ValueError("largest node pushes a fault probability to 1 or beyond")
    reference = expectation(run_circuit(circuit, 0.0, initial), obs)
    seed = None if cfg.exact else derive_seed(rng)

    # a noiseless circuit has fault rate 0 at every node; its sweep is flat on either axis
    use_rate = cfg.uses_fault_rate() and circuit.max_p() > 0

    def node(m: int, s: float) -> tuple[float, float, float]:
        rho = run_circuit(circuit, s, initial)
        x = poisson_fault_rate(circuit, s) if use_rate else s
        if cfg.exact:
            return x, expectation(rho, obs), float("nan")
        shots = sample_shots(rho, obs, cfg.shots_per_node, seed, key=(m,))
        return x, float(np.mean(shots)), float(np.var(shots, ddof=1))

    # every node has its own RNG stream, so the thread count does not change results
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(node, range(len(cfg.nodes)), cfg.nodes))
    else:
        rows = [node(m, s) for m, s in enumerate(cfg.nodes)]
    xs, means, variances = (list(col) for col in zip(*rows))
    estimate, grad = extrapolate(xs, means, cfg)
    predicted = float(np.sum(np.abs(grad)) ** 2)
    sweep = [
        {"scale": s, "abscissa": x, "mean": mu, "variance": var}
        for s, x, mu, var in zip(cfg.nodes, xs, means, variances)
    ]
    extras = {"sweep": sweep, "weights": grad.tolist(), "predicted_overhead": predicted}
    if cfg.exact:
        return EstimatorReport(
            mean=estimate,
            variance=float("nan"),
            n_shots=0,
            reference=reference,
            method=f"zne-{cfg.model}",
            overhead=predicted,
            overhead_kind="predicted",
            extras=extras,
        )
    total = cfg.shots_per_node * len(cfg.nodes)
    est_var = float(np.sum(grad**2 * np.array(variances)) / cfg.shots_per_node)
    raw_var = variances[0]
    measured = est_var * total / raw_var if raw_var > 0 else float("nan")
    extras["measured_overhead"] = measured
    return EstimatorReport(
        mean=estimate,
        variance=est_var * total,
        n_shots=total,
        reference=reference,
        method=f"zne-{cfg.model}",
        overhead=predicted,
        overhead_kind="predicted",
        seed=seed,
        extras=extras,
    )


def equal_gap_nodes(m: int, start: float = 1.0, gap: float = 1.0) -> list[float]:
    return [start + k * gap for k in range(m)]


__all__ = [
    "ZneConfig",
    "equal_gap_nodes",
    "extrapolate",
    "fit_exponential",
    "polynomial_weights",
    "richardson_coefficients",
    "richardson_extrapolate",
    "richardson_overhead",
    "zne_mitigate",
]
