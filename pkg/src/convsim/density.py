"""Density machinery for pause modeling.

One-dimensional Gaussian KDE (density/CDF/sampling), the Nadaraya-Watson
conditional KDE used for duration-conditioned residuals, the Yeo-Johnson
power transform, bandwidth heuristics, and the assembled timing model that
the simulator samples from.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .annotations import ConversationAnnotation
from .errors import ValidationError
from .stats import (
    TransitionType,
    extract_corpus_gaps,
    overlap_ratio,
    residuals,
    speaker_means,
    turn_sequences,
)
from .turns import TransitionMatrix, estimate_transitions

log = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Fixed residual bandwidth for the unconditional model, in seconds.
DEFAULT_ALPHA = 0.1
# Bandwidth floors, in seconds.
DEFAULT_EPS_MU = 0.01
DEFAULT_EPS_R = 0.01
DEFAULT_EPS_D = 0.05

_EVAL_BLOCK = 8192


class ModelKind(Enum):
    SASC = "sasc"
    CSASC = "csasc"


# ---------------------------------------------------------------------------
# Bandwidth rules

def silverman_bandwidth(samples, floor: float = DEFAULT_EPS_MU) -> float:
    """Silverman's rule of thumb: 0.9 * min(sigma, IQR/1.34) * n^(-1/5).

    Uses the n-1 standard deviation and linear-interpolation quartiles.
    Degenerate data (formula value 0) falls back to the floor.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValidationError(f"Silverman bandwidth needs >= 2 samples, got {x.size}")
    sigma = float(np.std(x, ddof=1))
    q1, q3 = np.percentile(x, [25.0, 75.0])
    spread = min(sigma, (q3 - q1) / 1.34)
    h = 0.9 * spread * x.size ** (-0.2)
    if h <= 0.0:
        return floor
    return h


def scott_bandwidths(
    residual_values,
    duration_values,
    eps_r: float = DEFAULT_EPS_R,
    eps_d: float = DEFAULT_EPS_D,
) -> tuple[float, float]:
    """Scott's rule per dimension, h = sigma * n^(-1/6), with lower bounds."""
    r = np.asarray(residual_values, dtype=np.float64)
    d = np.asarray(duration_values, dtype=np.float64)
    if r.size != d.size:
        raise ValidationError("residual and duration sample counts differ")
    if r.size < 2:
        raise ValidationError(f"Scott bandwidths need >= 2 pairs, got {r.size}")
    factor = r.size ** (-1.0 / 6.0)
    h_r = max(float(np.std(r, ddof=1)) * factor, eps_r)
    h_d = max(float(np.std(d, ddof=1)) * factor, eps_d)
    return h_r, h_d


# ---------------------------------------------------------------------------
# Yeo-Johnson transform

def yj_range(lam: float) -> tuple[float, float]:
    """Open interval of values the forward transform can produce."""
    lo = -1.0 / (lam - 2.0) if lam > 2.0 else -math.inf
    hi = -1.0 / lam if lam < 0.0 else math.inf
    return lo, hi


def yj_forward(x, lam: float):
    """Yeo-Johnson power transform (standard four-branch definition)."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    if lam != 0.0:
        out[pos] = np.expm1(lam * np.log1p(arr[pos])) / lam
    else:
        out[pos] = np.log1p(arr[pos])
    neg = ~pos
    if lam != 2.0:
        out[neg] = -np.expm1((2.0 - lam) * np.log1p(-arr[neg])) / (2.0 - lam)
    else:
        out[neg] = -np.log1p(-arr[neg])
    return float(out[0]) if np.ndim(x) == 0 else out


def yj_inverse(y, lam: float):
    """Exact branch-wise inverse of yj_forward.

    Values outside the transform's range for this lambda are a domain error.
    """
    arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    lo, hi = yj_range(lam)
    if np.any(arr <= lo) or np.any(arr >= hi):
        raise ValidationError(
            f"value outside Yeo-Johnson range ({lo:g}, {hi:g}) for lambda={lam:g}"
        )
    out = np.empty_like(arr)
    pos = arr >= 0
    if lam != 0.0:
        out[pos] = np.expm1(np.log1p(lam * arr[pos]) / lam)
    else:
        out[pos] = np.expm1(arr[pos])
    neg = ~pos
    if lam != 2.0:
        out[neg] = -np.expm1(np.log1p(-(2.0 - lam) * arr[neg]) / (2.0 - lam))
    else:
        out[neg] = -np.expm1(-arr[neg])
    return float(out[0]) if np.ndim(y) == 0 else out


def yj_derivative(x, lam: float):
    """d/dx of the forward transform: (x+1)^(lam-1) for x >= 0, else (1-x)^(1-lam)."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = np.exp((lam - 1.0) * np.log1p(arr[pos]))
    out[~pos] = np.exp((1.0 - lam) * np.log1p(-arr[~pos]))
    return float(out[0]) if np.ndim(x) == 0 else out


def _yj_loglik(x: np.ndarray, lam: float) -> float:
    # Gaussian profile log-likelihood of the transformed sample; the Jacobian
    # term is (lam - 1) * sum(sign(x) * log1p(|x|)).
    y = yj_forward(x, lam)
    var = float(np.var(y))
    if var <= 0.0:
        return -math.inf
    jacobian = float(np.sum(np.sign(x) * np.log1p(np.abs(x))))
    return -0.5 * x.size * math.log(var) + (lam - 1.0) * jacobian


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def yj_fit_lambda(
    samples, grid_lo: float = -5.0, grid_hi: float = 5.0, grid_step: float = 0.01
) -> float:
    """Maximum-likelihood lambda: grid search plus golden-section refinement.

    Deterministic: a fixed grid on [-5, 5] locates the best cell, then a
    golden-section pass narrows it below 1e-8.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 3:
        raise ValidationError(f"lambda fit needs >= 3 samples, got {x.size}")
    if np.all(x == x[0]):
        raise ValidationError("lambda fit needs non-constant samples")
    grid = np.arange(grid_lo, grid_hi + grid_step / 2, grid_step)
    scores = [_yj_loglik(x, float(lam)) for lam in grid]
    best = int(np.argmax(scores))
    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, grid.size - 1)])
    # Golden-section maximization on [a, b].
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _yj_loglik(x, c)
    fd = _yj_loglik(x, d)
    while b - a > 1e-8:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _yj_loglik(x, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _yj_loglik(x, d)
    return (a + b) / 2.0


@dataclass(frozen=True)
class YeoJohnson:
    """A fitted Yeo-Johnson transform (just the exponent)."""

    lam: float

    def forward(self, x):
        return yj_forward(x, self.lam)

    def inverse(self, y):
        return yj_inverse(y, self.lam)


# ---------------------------------------------------------------------------
# One-dimensional KDE

class Kde1D:
    """Gaussian kernel density estimate with a fixed absolute bandwidth."""

    def __init__(self, samples, bandwidth: float):
        x = np.asarray(samples, dtype=np.float64)
        if x.size == 0:
            raise ValidationError("KDE needs at least one sample")
        if bandwidth <= 0:
            raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
        self.samples = x
        self.bandwidth = float(bandwidth)

    def density(self, x):
        """Mixture density (1/(n h)) * sum(phi((x - x_i)/h))."""
        return self._evaluate(x, cumulative=False)

    def cdf(self, x):
        """Mixture CDF (1/n) * sum(Phi((x - x_i)/h)); monotone in x."""
        return self._evaluate(x, cumulative=True)

    def _evaluate(self, x, cumulative: bool):
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.empty_like(arr)
        n = self.samples.size
        h = self.bandwidth
        for start in range(0, arr.size, _EVAL_BLOCK):
            block = arr[start : start + _EVAL_BLOCK]
            z = (block[:, None] - self.samples[None, :]) / h
            if cumulative:
                out[start : start + _EVAL_BLOCK] = ndtr(z).sum(axis=1) / n
            else:
                out[start : start + _EVAL_BLOCK] = (
                    np.exp(-0.5 * z * z).sum(axis=1) / (n * h * SQRT_2PI)
                )
        return float(out[0]) if np.ndim(x) == 0 else out

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw from the mixture: random data point plus scaled normal noise."""
        k = 1 if size is None else size
        idx = rng.integers(0, self.samples.size, size=k)
        values = self.samples[idx] + self.bandwidth * rng.standard_normal(k)
        return float(values[0]) if size is None else values

    def mean(self) -> float:
        """Exact mixture mean (equals the sample mean for Gaussian kernels)."""
        return float(np.mean(self.samples))


# ---------------------------------------------------------------------------
# Nadaraya-Watson conditional KDE

class ConditionalKde:
    """Conditional density over residuals, weighted by duration proximity.

    Training pairs (r_i, d_i) are combined as
        p(r | d*) = sum_i K_r((r - r_i)/h_r) K_d((d* - d_i)/h_d)
                    / (h_r * sum_i K_d((d* - d_i)/h_d))
    with Gaussian kernels, so for every d* the density integrates to one.
    """

    def __init__(self, residual_values, duration_values, h_r: float, h_d: float):
        r = np.asarray(residual_values, dtype=np.float64)
        d = np.asarray(duration_values, dtype=np.float64)
        if r.size == 0 or r.size != d.size:
            raise ValidationError("conditional KDE needs matching non-empty samples")
        if h_r <= 0 or h_d <= 0:
            raise ValidationError("conditional KDE bandwidths must be positive")
        self.residuals = r
        self.durations = d
        self.h_r = float(h_r)
        self.h_d = float(h_d)

    @classmethod
    def fit(
        cls,
        residual_values,
        duration_values,
        eps_r: float = DEFAULT_EPS_R,
        eps_d: float = DEFAULT_EPS_D,
    ) -> "ConditionalKde":
        """Fit with Scott's rule per dimension; floors applied at construction."""
        h_r, h_d = scott_bandwidths(residual_values, duration_values, eps_r, eps_d)
        return cls(residual_values, duration_values, h_r, h_d)

    def weights(self, d_star: float) -> np.ndarray:
        """Normalized duration weights at d*; uniform fallback on underflow."""
        z = (d_star - self.durations) / self.h_d
        w = np.exp(-0.5 * z * z)
        total = w.sum()
        if total <= 0.0 or not np.isfinite(total):
            log.warning(
                "duration weights underflowed at d*=%g; falling back to "
                "unweighted residual KDE", d_star,
            )
            return np.full(self.residuals.size, 1.0 / self.residuals.size)
        return w / total

    def density(self, r, d_star: float):
        """Conditional density of the residual at the given duration."""
        w = self.weights(d_star)
        arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
        out = np.empty_like(arr)
        for start in range(0, arr.size, _EVAL_BLOCK):
            block = arr[start : start + _EVAL_BLOCK]
            z = (block[:, None] - self.residuals[None, :]) / self.h_r
            out[start : start + _EVAL_BLOCK] = (
                (np.exp(-0.5 * z * z) * w[None, :]).sum(axis=1) / (self.h_r * SQRT_2PI)
            )
        return float(out[0]) if np.ndim(r) == 0 else out

    def cdf(self, r, d_star: float):
        """Conditional CDF: duration-weighted mixture of Gaussian CDFs."""
        w = self.weights(d_star)
        arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
        z = (arr[:, None] - self.residuals[None, :]) / self.h_r
        out = (ndtr(z) * w[None, :]).sum(axis=1)
        return float(out[0]) if np.ndim(r) == 0 else out

    def sample_index(self, d_star: float, rng: np.random.Generator, size: int = 1):
        """Component indices drawn with probability proportional to the weights."""
        w = self.weights(d_star)
        cumulative = np.cumsum(w)
        cumulative[-1] = 1.0
        return np.searchsorted(cumulative, rng.random(size), side="right")

    def sample(self, d_star: float, rng: np.random.Generator, size: int | None = None):
        """Draw residuals whose distribution matches density(., d_star)."""
        k = 1 if size is None else size
        idx = self.sample_index(d_star, rng, k)
        values = self.residuals[idx] + self.h_r * rng.standard_normal(k)
        return float(values[0]) if size is None else values


# ---------------------------------------------------------------------------
# Conditional residual model (transform + conditional KDE)

# Attempts at re-drawing kernel noise before falling back to the component
# atom when a draw escapes the transform's range (possible only for fitted
# lambda outside [0, 2]).
_MAX_RANGE_RETRIES = 32


@dataclass(frozen=True, eq=False)
class ConditionalResidualModel:
    """Duration-conditioned residuals fitted in Yeo-Johnson space.

    The conditional KDE lives in transformed space; sampling draws there and
    maps back through the inverse transform.
    """

    transform: YeoJohnson
    kde: ConditionalKde

    def sample(self, d_star: float, rng: np.random.Generator) -> float:
        lo, hi = yj_range(self.transform.lam)
        idx = int(self.kde.sample_index(d_star, rng, 1)[0])
        atom = float(self.kde.residuals[idx])
        value = atom
        for _ in range(_MAX_RANGE_RETRIES):
            candidate = atom + self.kde.h_r * rng.standard_normal()
            if lo < candidate < hi:
                value = candidate
                break
        else:
            log.warning(
                "kernel noise left the transform range %d times; using the "
                "component atom", _MAX_RANGE_RETRIES,
            )
        return float(self.transform.inverse(value))

    def cdf(self, value: float, d_star: float) -> float:
        """P(residual < value | d*) evaluated via the transformed-space CDF."""
        return self.kde.cdf(self.transform.forward(value), d_star)

    def density(self, value, d_star: float):
        """Raw-space conditional density via change of variables."""
        transformed = self.transform.forward(value)
        jacobian = yj_derivative(value, self.transform.lam)
        return self.kde.density(transformed, d_star) * jacobian


# ---------------------------------------------------------------------------
# The assembled timing model

@dataclass(frozen=True)
class FitParams:
    """Knobs for fit_stats_model; defaults match the documented conventions."""

    alpha: float = DEFAULT_ALPHA
    min_obs: int = 3
    eps_mu: float = DEFAULT_EPS_MU
    eps_r: float = DEFAULT_EPS_R
    eps_d: float = DEFAULT_EPS_D
    source: str = ""


@dataclass(eq=False)
class StatsModel:
    """Fitted conversational timing model.

    mean_same / mean_diff are KDEs over per-speaker mean pauses; the
    residual components are plain KDEs in the unconditional mode and
    ConditionalResidualModel in the duration-conditioned mode.
    """

    mode: ModelKind
    mean_same: Kde1D
    mean_diff: Kde1D
    residual_same: Kde1D | ConditionalResidualModel
    residual_diff: Kde1D | ConditionalResidualModel
    transition: TransitionMatrix
    meta: dict = field(default_factory=dict)

    def mean_kde(self, transition: TransitionType) -> Kde1D:
        return self.mean_same if transition is TransitionType.SAME else self.mean_diff

    def residual_model(self, transition: TransitionType):
        return (
            self.residual_same
            if transition is TransitionType.SAME
            else self.residual_diff
        )

    def sample_mean(self, transition: TransitionType, rng: np.random.Generator) -> float:
        """Draw a speaker's base pause for the given transition type."""
        return self.mean_kde(transition).sample(rng)

    def sample_residual(
        self,
        transition: TransitionType,
        rng: np.random.Generator,
        d_star: float | None = None,
    ) -> float:
        """Draw a residual; the conditioned mode requires the next duration."""
        model = self.residual_model(transition)
        if self.mode is ModelKind.SASC:
            return model.sample(rng)
        if d_star is None:
            raise ValidationError("duration-conditioned residuals require d_star")
        return model.sample(d_star, rng)

    def p_overlap(
        self,
        transition: TransitionType,
        speaker_mu: float,
        d_star: float | None = None,
    ) -> float:
        """Probability that mu + residual is negative (speech overlap)."""
        model = self.residual_model(transition)
        if self.mode is ModelKind.SASC:
            return model.cdf(-speaker_mu)
        if d_star is None:
            raise ValidationError("duration-conditioned overlap requires d_star")
        return model.cdf(-speaker_mu, d_star)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        def kde_payload(kde: Kde1D) -> dict:
            return {"samples": kde.samples.tolist(), "bandwidth": kde.bandwidth}

        def residual_payload(model) -> dict:
            if isinstance(model, Kde1D):
                return kde_payload(model)
            return {
                # Pairs are stored in transformed space, exactly as fitted.
                "pairs": np.column_stack(
                    [model.kde.residuals, model.kde.durations]
                ).tolist(),
                "h_r": model.kde.h_r,
                "h_d": model.kde.h_d,
                "lambda": model.transform.lam,
            }

        payload = {
            "version": "1",
            "mode": self.mode.value,
            "mean_same": kde_payload(self.mean_same),
            "mean_diff": kde_payload(self.mean_diff),
            "residual_same": residual_payload(self.residual_same),
            "residual_diff": residual_payload(self.residual_diff),
            "transition": self.transition.to_dict(),
            "meta": self.meta,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StatsModel":
        payload = json.loads(text)
        version = payload.get("version")
        if version != "1":
            raise ValidationError(f"unsupported stats model version {version!r}")
        mode = ModelKind(payload["mode"])

        def load_kde(data: dict) -> Kde1D:
            return Kde1D(data["samples"], data["bandwidth"])

        def load_residual(data: dict):
            if mode is ModelKind.SASC:
                return load_kde(data)
            pairs = np.asarray(data["pairs"], dtype=np.float64).reshape(-1, 2)
            return ConditionalResidualModel(
                transform=YeoJohnson(data["lambda"]),
                kde=ConditionalKde(pairs[:, 0], pairs[:, 1], data["h_r"], data["h_d"]),
            )

        return cls(
            mode=mode,
            mean_same=load_kde(payload["mean_same"]),
            mean_diff=load_kde(payload["mean_diff"]),
            residual_same=load_residual(payload["residual_same"]),
            residual_diff=load_residual(payload["residual_diff"]),
            transition=TransitionMatrix.from_dict(payload["transition"]),
            meta=payload.get("meta", {}),
        )


def fit_stats_model(
    annotations: list[ConversationAnnotation],
    mode: ModelKind,
    params: FitParams = FitParams(),
) -> StatsModel:
    """Fit the full timing model from annotated two-speaker conversations.

    Mean-pause KDEs use Silverman bandwidths over per-speaker means. The
    unconditional mode gives residuals a fixed bandwidth (alpha); the
    conditioned mode fits a Yeo-Johnson transform per transition type and a
    conditional KDE on (transformed residual, following duration) with
    Scott bandwidths and floors.
    """
    observations = extract_corpus_gaps(annotations)
    summaries = speaker_means(observations, params.min_obs)
    residual_samples = residuals(observations, summaries)

    mean_values = {
        TransitionType.SAME: [s.mean_same for s in summaries if s.mean_same is not None],
        TransitionType.DIFF: [s.mean_diff for s in summaries if s.mean_diff is not None],
    }
    for transition, values in mean_values.items():
        if len(values) < 2:
            raise ValidationError(
                f"need >= 2 speakers with qualifying {transition.value}-transition "
                f"means (min_obs={params.min_obs}), got {len(values)}"
            )

    mean_kdes = {
        transition: Kde1D(values, silverman_bandwidth(values, params.eps_mu))
        for transition, values in mean_values.items()
    }

    residual_models = {}
    for transition in TransitionType:
        values = np.array(
            [s.residual for s in residual_samples if s.transition is transition]
        )
        durations = np.array(
            [s.duration for s in residual_samples if s.transition is transition]
        )
        if values.size < 2:
            raise ValidationError(
                f"need >= 2 residual samples for the {transition.value} transition, "
                f"got {values.size}"
            )
        if mode is ModelKind.SASC:
            residual_models[transition] = Kde1D(values, params.alpha)
        else:
            # Constant residuals carry no skew to correct; keep the identity
            # transform instead of fitting lambda on degenerate data.
            lam = 1.0 if np.all(values == values[0]) else yj_fit_lambda(values)
            transformed = yj_forward(values, lam)
            residual_models[transition] = ConditionalResidualModel(
                transform=YeoJohnson(lam),
                kde=ConditionalKde.fit(transformed, durations, params.eps_r, params.eps_d),
            )

    sequences = [
        turn_sequences(a)
        for a in sorted(annotations, key=lambda a: a.conversation_id)
    ]
    transition_matrix = estimate_transitions(sequences)

    meta = {
        "source": params.source,
        "counts": {
            "conversations": len(annotations),
            "observations": len(observations),
            "speakers": len(summaries),
            "qualifying_same": len(mean_values[TransitionType.SAME]),
            "qualifying_diff": len(mean_values[TransitionType.DIFF]),
            "residuals_same": int(
                sum(1 for s in residual_samples if s.transition is TransitionType.SAME)
            ),
            "residuals_diff": int(
                sum(1 for s in residual_samples if s.transition is TransitionType.DIFF)
            ),
        },
        "alpha": params.alpha,
        "min_obs": params.min_obs,
        "floors": {"eps_mu": params.eps_mu, "eps_r": params.eps_r, "eps_d": params.eps_d},
        "overlap_ratio": overlap_ratio(observations),
    }
    return StatsModel(
        mode=mode,
        mean_same=mean_kdes[TransitionType.SAME],
        mean_diff=mean_kdes[TransitionType.DIFF],
        residual_same=residual_models[TransitionType.SAME],
        residual_diff=residual_models[TransitionType.DIFF],
        transition=transition_matrix,
        meta=meta,
    )
