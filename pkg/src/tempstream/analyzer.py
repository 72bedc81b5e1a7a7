"""Pourbaix parameter estimation from (pH, redox potential) measurements.

The mean potential is piecewise linear in pH with breakpoints at the two
pKa values: slope ``-2k`` below pKa1, ``-k`` between the breakpoints and a
plateau at ``E_inf`` above pKa2.  Measurements scatter around it with Gaussian
noise of standard deviation ``sigma_eV``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp
from scipy.stats import chi2

SIGMA_FLOOR = 1e-6
PARAM_NAMES = ("pKa1", "pKa2", "k", "E_inf", "sigma_eV")
SAMPLE_BLOCK = 10_000
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class AnalyzerError(Exception):
    pass


@dataclass(frozen=True)
class PourbaixParams:
    pKa1: float
    pKa2: float
    k: float
    E_inf: float
    sigma_eV: float

    def __post_init__(self):
        if not self.pKa1 <= self.pKa2:
            raise AnalyzerError(f"pKa1 ({self.pKa1}) must not exceed pKa2 ({self.pKa2})")
        if not self.sigma_eV >= SIGMA_FLOOR:
            raise AnalyzerError(f"sigma_eV ({self.sigma_eV}) is below the floor {SIGMA_FLOOR}")

    @property
    def region1_slope(self) -> float:
        return 2 * self.k

    def as_array(self) -> np.ndarray:
        return np.array([self.pKa1, self.pKa2, self.k, self.E_inf, self.sigma_eV])

    @classmethod
    def from_array(cls, x) -> "PourbaixParams":
        return cls(*(float(v) for v in x))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Dataset:
    pH: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eV: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pH = np.asarray(self.pH, dtype=float).reshape(-1)
        eV = np.asarray(self.eV, dtype=float).reshape(-1)
        if pH.shape != eV.shape:
            raise AnalyzerError("pH and eV columns differ in length")
        if not np.all(np.isfinite(pH)):
            raise AnalyzerError("pH values must be finite")
        object.__setattr__(self, "pH", pH)
        object.__setattr__(self, "eV", eV)

    def __len__(self):
        return len(self.pH)

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]]) -> "Dataset":
        if not points:
            return cls()
        pH, eV = zip(*points)
        return cls(np.array(pH), np.array(eV))

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        text = Path(path).read_text(encoding="utf-8")
        rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
        if not rows:
            return cls()
        header = [c.strip() for c in rows[0]]
        if header != ["pH", "eV"]:
            raise AnalyzerError(f"{path}: expected header 'pH,eV', got {','.join(header)!r}")
        points = []
        for n, row in enumerate(rows[1:], start=2):
            try:
                points.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise AnalyzerError(f"{path}:{n}: expected two numbers, got {','.join(row)!r}") from None
        return cls.from_points(points)

    def to_csv(self) -> str:
        lines = ["pH,eV"] + [f"{p!r},{e!r}" for p, e in zip(self.pH.tolist(), self.eV.tolist())]
        return "\n".join(lines) + "\n"

    def shifted(self, c: float) -> "Dataset":
        return Dataset(self.pH, self.eV + c)


@dataclass(frozen=True)
class PriorRanges:
    pKa1: tuple[float, float] = (2.0, 12.0)
    pKa2: tuple[float, float] = (2.0, 12.0)
    k: tuple[float, float] = (-100.0, 0.0)
    E_inf: tuple[float, float] = (-1000.0, 1000.0)
    sigma_eV: tuple[float, float] = (SIGMA_FLOOR, 50.0)

    def __post_init__(self):
        for name in PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise AnalyzerError(f"prior range for {name} must satisfy low < high, got [{lo}, {hi}]")
        if self.sigma_eV[0] < SIGMA_FLOOR:
            raise AnalyzerError(f"prior range for sigma_eV must start at or above {SIGMA_FLOOR}")
        if self.pKa1[0] > self.pKa2[1]:
            raise AnalyzerError("prior ranges leave no room for pKa1 <= pKa2")

    @classmethod
    def default_for(cls, d: Dataset) -> "PriorRanges":
        """Broad default box; the E_inf range is widened around the observed potentials."""
        if len(d):
            e_range = (float(d.eV.min()) - 200.0, float(d.eV.max()) + 200.0)
        else:
            e_range = (-1000.0, 1000.0)
        return cls(E_inf=e_range)

    def bounds(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def to_json(self) -> dict:
        return {n: list(getattr(self, n)) for n in PARAM_NAMES}


# ---------------------------------------------------------------------------
# model and likelihood


def _design(pKa1, pKa2, pH):
    """Coefficient of k in the mean: mu = E_inf + k * g(pH)."""
    pH = np.asarray(pH, dtype=float)
    return np.where(pH < pKa1, 2 * pH - pKa1 - pKa2, np.where(pH < pKa2, pH - pKa2, 0.0))


def mu_ev(p: PourbaixParams, pH):
    """Mean redox potential (mV) at ``pH``; accepts scalars or arrays."""
    out = p.E_inf + p.k * _design(p.pKa1, p.pKa2, pH)
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(p: PourbaixParams, d: Dataset) -> float:
    if p.sigma_eV < SIGMA_FLOOR:
        raise AnalyzerError(f"sigma_eV ({p.sigma_eV}) is below the floor {SIGMA_FLOOR}")
    if not len(d):
        return 0.0
    z = (d.eV - mu_ev(p, d.pH)) / p.sigma_eV
    return float(-len(d) * (math.log(p.sigma_eV) + _LOG_SQRT_2PI) - 0.5 * np.dot(z, z))


def _loglik_batch(theta: np.ndarray, d: Dataset) -> np.ndarray:
    """Log-likelihood for each row of an (n, 5) parameter array."""
    pKa1, pKa2, k, e_inf, sigma = (theta[:, i:i + 1] for i in range(5))
    pH = d.pH[None, :]
    g = np.where(pH < pKa1, 2 * pH - pKa1 - pKa2, np.where(pH < pKa2, pH - pKa2, 0.0))
    resid = d.eV[None, :] - (e_inf + k * g)
    n = len(d)
    s = sigma[:, 0]
    return -n * (np.log(s) + _LOG_SQRT_2PI) - 0.5 * np.einsum("ij,ij->i", resid, resid) / s**2


# ---------------------------------------------------------------------------
# maximum likelihood


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 8
    sigma_floor: float = SIGMA_FLOOR
    xatol: float = 1e-8
    fatol: float = 1e-10
    max_iter: int = 20_000


@dataclass(frozen=True)
class FitResult:
    params: PourbaixParams
    log_likelihood: float
    diagnostics: tuple[str, ...] = ()
    n_points: int = 0

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "region1_slope": self.params.region1_slope,
            "log_likelihood": self.log_likelihood,
            "n_points": self.n_points,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_json(cls, d) -> "FitResult":
        return cls(PourbaixParams(**d["params"]), float(d["log_likelihood"]),
                   tuple(d.get("diagnostics", ())), int(d.get("n_points", 0)))


def _profile(pKa1: float, pKa2: float, d: Dataset, floor: float):
    """Best (k, E_inf, sigma) for fixed breakpoints, in closed form."""
    g = _design(pKa1, pKa2, d.pH)
    A = np.column_stack([g, np.ones_like(g)])
    coef, *_ = np.linalg.lstsq(A, d.eV, rcond=None)
    k, e_inf = float(coef[0]), float(coef[1])
    resid = d.eV - A @ coef
    sigma = max(math.sqrt(float(np.dot(resid, resid)) / len(d)), floor)
    return k, e_inf, sigma


def _starts(d: Dataset, n: int) -> list[tuple[float, float]]:
    lo, hi = float(d.pH.min()), float(d.pH.max())
    qs = np.linspace(0.1, 0.9, max(n // 2, 1))
    starts = []
    for q in qs:
        a = lo + q * (hi - lo)
        starts.append((a, a + 0.25 * (hi - a) + 0.5))
        starts.append((a, hi + 0.5))
    return starts[:n]


def _data_driven_start(d: Dataset, pKa1: float, pKa2: float) -> np.ndarray:
    """E_inf from the three highest-pH points, k from a line through the three lowest."""
    order = np.argsort(d.pH, kind="stable")
    e0 = float(d.eV[order[-3:]].mean())
    low = order[:3]
    if np.ptp(d.pH[low]) > 0:
        slope = float(np.polyfit(d.pH[low], d.eV[low], 1)[0])
    else:
        slope = 0.0
    sigma0 = max(float(np.std(d.eV)) / 4, 1.0)
    return np.array([pKa1, pKa2, slope / 2, e0, sigma0])


def fit_mle(d: Dataset, init: PourbaixParams | None = None, cfg: FitConfig | None = None) -> FitResult:
    """Multi-start simplex maximization of the log-likelihood."""
    cfg = cfg or FitConfig()
    if len(np.unique(d.pH)) < 2:
        raise AnalyzerError("need at least 2 distinct pH values")
    lo, hi = float(d.pH.min()) - 1.0, float(d.pH.max()) + 1.0
    floor = cfg.sigma_floor

    def clip_pair(x):
        a, b = sorted((min(max(float(x[0]), lo), hi), min(max(float(x[1]), lo), hi)))
        return a, b

    def neg_profile(x):
        a, b = clip_pair(x)
        k, e_inf, sigma = _profile(a, b, d, floor)
        return -log_likelihood(PourbaixParams(a, b, k, e_inf, sigma), d)

    nm = {"xatol": cfg.xatol, "fatol": cfg.fatol, "maxiter": cfg.max_iter, "maxfev": cfg.max_iter}
    candidates = []
    starts = _starts(d, cfg.restarts)
    if init is not None:
        starts.insert(0, (init.pKa1, init.pKa2))
    for s in starts:
        res = minimize(neg_profile, np.array(s), method="Nelder-Mead",
                       options={**nm, "initial_simplex": _simplex2(s)})
        a, b = clip_pair(res.x)
        candidates.append((float(res.fun), a, b))
    candidates.sort()
    _, a, b = candidates[0]
    k, e_inf, sigma = _profile(a, b, d, floor)
    best = np.array([a, b, k, e_inf, sigma])

    # polish all five coordinates jointly; also try the data-driven start
    def neg_full(x):
        a, b = clip_pair(x[:2])
        s = max(abs(x[4]), floor)
        return -log_likelihood(PourbaixParams(a, b, x[2], x[3], s), d)

    for x0 in (best, _data_driven_start(d, a, b)):
        res = minimize(neg_full, x0, method="Nelder-Mead", options=nm)
        if res.fun < neg_full(best):
            best = res.x
    a, b = clip_pair(best[:2])
    params = PourbaixParams(a, b, float(best[2]), float(best[3]), max(abs(float(best[4])), floor))
    ll = log_likelihood(params, d)
    return FitResult(params, ll, tuple(_diagnostics(params, d, floor)), len(d))


def _simplex2(s) -> np.ndarray:
    a, b = s
    return np.array([[a, b], [a + 0.5, b], [a, b + 0.5]])


def _diagnostics(p: PourbaixParams, d: Dataset, floor: float) -> list[str]:
    notes = []
    lo, hi = float(d.pH.min()), float(d.pH.max())
    ll = log_likelihood(p, d)
    flat_sigma = max(float(np.std(d.eV)), floor)
    ll_flat = log_likelihood(PourbaixParams(lo, lo, 0.0, float(d.eV.mean()), flat_sigma), d)
    # three extra free parameters (pKa1, pKa2, k) over a flat line
    lr = 2 * (ll - ll_flat)
    threshold = float(chi2.ppf(0.95, df=3))
    if lr < threshold:
        notes.append(f"pKa unidentifiable: a flat line fits as well "
                     f"(likelihood-ratio statistic {lr:.3g} < {threshold:.3g})")
    else:
        outside = [n for n, v in (("pKa1", p.pKa1), ("pKa2", p.pKa2)) if not lo <= v <= hi]
        if outside:
            notes.append(f"pKa unidentifiable: {' and '.join(outside)} outside the measured pH range "
                         f"[{lo:g}, {hi:g}]")
    if p.sigma_eV <= floor * (1 + 1e-9):
        notes.append("sigma_eV at floor: the model interpolates the data")
    return notes


# ---------------------------------------------------------------------------
# posterior by importance sampling


def laplace_sd(d: Dataset, p: PourbaixParams, rel_step: float = 1e-4) -> np.ndarray:
    """Standard deviations of the Gaussian approximation at ``p`` (central-difference Hessian)."""
    x0 = p.as_array()
    h = np.maximum(np.abs(x0) * rel_step, 1e-3)

    def f(x):
        a, b = sorted(x[:2])
        return log_likelihood(PourbaixParams(a, b, x[2], x[3], max(x[4], SIGMA_FLOOR)), d)

    H = np.zeros((5, 5))
    eye = np.eye(5)
    for i in range(5):
        for j in range(i, 5):
            ei, ej = eye[i] * h[i], eye[j] * h[j]
            H[i, j] = H[j, i] = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (
                4 * h[i] * h[j])
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        raise AnalyzerError("likelihood curvature is singular at the fit; use the default prior") from None
    var = np.diag(cov)
    if not np.all(var > 0):
        raise AnalyzerError("likelihood is not locally concave at the fit; use the default prior")
    return np.sqrt(var)


def laplace_prior(d: Dataset, fit: PourbaixParams, n_sd: float = 3.0) -> PriorRanges:
    """Uniform box of ``n_sd`` approximate posterior standard deviations around the fit.

    Useful when the default box is so much wider than the posterior that
    importance weights collapse onto a handful of samples.
    """
    sd = laplace_sd(d, fit)
    default = PriorRanges.default_for(d)
    ranges = {}
    for i, name in enumerate(PARAM_NAMES):
        c = fit.as_array()[i]
        lo, hi = getattr(default, name)
        ranges[name] = (max(c - n_sd * sd[i], lo), min(c + n_sd * sd[i], hi))
    return PriorRanges(**ranges)



@dataclass(frozen=True)
class WeightedSamples:
    samples: np.ndarray  # (N, 5) in PARAM_NAMES order
    weights: np.ndarray  # normalized, sums to 1
    log_weights: np.ndarray  # unnormalized log-likelihoods
    prior: PriorRanges
    seed: int

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def joint_mode(self) -> PourbaixParams:
        """The highest-weight sample (posterior mode under the uniform prior)."""
        return PourbaixParams.from_array(self.samples[int(np.argmax(self.log_weights))])

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples


def _draw_block(prior: PriorRanges, seed: int, block: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    b = prior.bounds()
    out = np.empty((0, 5))
    while len(out) < size:
        draw = rng.uniform(b[:, 0], b[:, 1], size=(size, 5))
        draw = draw[draw[:, 0] <= draw[:, 1]]  # pKa1 <= pKa2 by rejection
        out = np.vstack([out, draw])
    return out[:size]


def sample_posterior(d: Dataset, prior: PriorRanges | None = None, N: int = 100_000, seed: int = 0) -> WeightedSamples:
    """Uniform-prior samples weighted by the likelihood (normalized in log space).

    Samples are drawn in fixed blocks of ``SAMPLE_BLOCK`` with one sub-seed per
    block, so any N-sample run is a prefix of every larger run with the same seed.
    """
    if N < 1:
        raise AnalyzerError("N must be at least 1")
    prior = prior or PriorRanges.default_for(d)
    blocks = []
    for b in range(math.ceil(N / SAMPLE_BLOCK)):
        size = min(SAMPLE_BLOCK, N - b * SAMPLE_BLOCK)
        blocks.append(_draw_block(prior, seed, b, SAMPLE_BLOCK)[:size])
    theta = np.vstack(blocks)
    if len(d):
        logw = np.concatenate([_loglik_batch(theta[i:i + SAMPLE_BLOCK], d) for i in range(0, N, SAMPLE_BLOCK)])
    else:
        logw = np.zeros(N)
    weights = np.exp(logw - logsumexp(logw))
    weights /= weights.sum()
    return WeightedSamples(theta, weights, logw, prior, seed)


@dataclass(frozen=True)
class Histogram:
    param: str
    edges: np.ndarray
    masses: np.ndarray

    def to_json(self) -> dict:
        return {"param": self.param, "edges": self.edges.tolist(), "masses": self.masses.tolist()}

    @property
    def mode(self) -> float:
        i = int(np.argmax(self.masses))
        return float(0.5 * (self.edges[i] + self.edges[i + 1]))


def marginal_histogram(ws: WeightedSamples, param: str, bins: int = 20) -> Histogram:
    if param not in PARAM_NAMES:
        raise AnalyzerError(f"unknown parameter {param!r}; expected one of {', '.join(PARAM_NAMES)}")
    if bins < 2:
        raise AnalyzerError("bins must be at least 2")
    lo, hi = getattr(ws.prior, param)
    edges = np.linspace(lo, hi, bins + 1)
    values = ws.samples[:, PARAM_NAMES.index(param)]
    masses, _ = np.histogram(values, bins=edges, weights=ws.weights)
    total = masses.sum()
    masses = masses / total if total > 0 else masses
    return Histogram(param, edges, masses)


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    i = int(np.searchsorted(cum, q, side="left"))
    return float(values[order][min(i, len(values) - 1)])


@dataclass(frozen=True)
class ModelBand:
    pH: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_json(self) -> dict:
        return {"pH": self.pH.tolist(), "mean": self.mean.tolist(),
                "q05": self.lower.tolist(), "q95": self.upper.tolist()}


def model_line_band(ws: WeightedSamples, pH_grid, lower_q: float = 0.05, upper_q: float = 0.95) -> ModelBand:
    """Weighted mean and quantile band of the model line at each grid pH."""
    grid = np.asarray(pH_grid, dtype=float).reshape(-1)
    if not len(grid):
        raise AnalyzerError("pH grid must not be empty")
    if ws.N == 0:
        raise AnalyzerError("no samples")
    keep = ws.weights > 0
    theta, w = ws.samples[keep], ws.weights[keep]
    means, lows, highs = [], [], []
    for x in grid:
        g = np.where(x < theta[:, 0], 2 * x - theta[:, 0] - theta[:, 1], np.where(x < theta[:, 1], x - theta[:, 1], 0.0))
        mu = theta[:, 3] + theta[:, 2] * g
        means.append(float(w @ mu))
        lows.append(weighted_quantile(mu, w, lower_q))
        highs.append(weighted_quantile(mu, w, upper_q))
    return ModelBand(grid, np.array(means), np.array(lows), np.array(highs))


def _param_summary(ws: WeightedSamples, param: str, bins: int) -> dict:
    values = ws.samples[:, PARAM_NAMES.index(param)]
    return {
        "mean": float(ws.weights @ values),
        "low": weighted_quantile(values, ws.weights, 0.05),
        "high": weighted_quantile(values, ws.weights, 0.95),
        "marginal_peak": marginal_histogram(ws, param, bins).mode,
    }


def posterior_summary(ws: WeightedSamples, bins: int = 20, pH_grid=None) -> dict:
    if pH_grid is None:
        pH_grid = np.linspace(ws.prior.pKa1[0], ws.prior.pKa2[1], 41)
    mode = ws.joint_mode()
    return {
        "N": ws.N,
        "seed": ws.seed,
        "effective_sample_size": ws.effective_sample_size,
        "prior": ws.prior.to_json(),
        "joint_mode": mode.to_json(),
        "summary": {n: _param_summary(ws, n, bins) for n in PARAM_NAMES},
        "marginals": {n: marginal_histogram(ws, n, bins).to_json() for n in PARAM_NAMES},
        "model_line_band": model_line_band(ws, pH_grid).to_json(),
    }


def synthetic_dataset(theta: PourbaixParams, n: int = 30, pH_range=(3.0, 12.0), seed: int = 0,
                      noise: bool = True) -> Dataset:
    """Points with pH uniform in ``pH_range`` and Gaussian noise of ``theta.sigma_eV``."""
    rng = np.random.default_rng(seed)
    pH = rng.uniform(*pH_range, size=n)
    eV = mu_ev(theta, pH)
    if noise:
        eV = eV + rng.normal(0.0, theta.sigma_eV, size=n)
    return Dataset(pH, eV)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"
