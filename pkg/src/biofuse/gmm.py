"""Diagonal-covariance Gaussian mixture models fitted with EM.

The mixture density is p(x) = sum_m w_m N(x; mu_m, diag(var_m)). Fitting
alternates an E-step (posterior responsibilities) with an M-step
(responsibility-weighted parameter updates); the data log-likelihood is
nondecreasing across iterations. Per-image match scores are average
log-likelihood ratios against a pooled background model.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatch, EmptyObservationSet, ModelFormatError,
                     NumericalCollapse, TooFewObservations)

MODEL_FORMAT_VERSION = 1

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    """weights (M,), means (M, d), variances (M, d); weights on the simplex,
    variances strictly positive."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        if w.ndim != 1 or mu.ndim != 2 or var.shape != mu.shape \
                or w.shape[0] != mu.shape[0]:
            raise ValueError("inconsistent parameter shapes")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(var <= 0):
            raise ValueError("variances must be strictly positive")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class EmConfig:
    n_components: int = 8
    max_iters: int = 200
    tol: float = 1e-6          # relative log-likelihood improvement
    cov_floor: float = 1e-4    # per-dimension variance floor
    seed: int = 0
    restarts: int = 3

    def validate(self) -> None:
        if self.n_components < 1 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("n_components, max_iters, restarts must be >= 1")
        if self.tol <= 0 or self.cov_floor <= 0:
            raise ValueError("tol and cov_floor must be positive")


def _as_data(obs) -> np.ndarray:
    x = np.asarray(getattr(obs, "observations", obs), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected an (n, dim) observation matrix")
    return x


def _log_components(data: np.ndarray, model: GmmModel) -> np.ndarray:
    """(n, M) matrix of log N(x_n; mu_m, diag var_m)."""
    diff = data[:, None, :] - model.means[None, :, :]
    quad = np.sum(diff * diff / model.variances[None, :, :], axis=2)
    logdet = np.sum(np.log(model.variances), axis=1)
    return -0.5 * (quad + logdet + data.shape[1] * _LOG_2PI)


def _log_joint(data: np.ndarray, model: GmmModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return _log_components(data, model) + logw[None, :]


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp)), safe against underflow and -inf rows."""
    amax = np.max(a, axis=1)
    shift = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        return shift + np.log(np.sum(np.exp(a - shift[:, None]), axis=1))


def log_likelihood_many(model: GmmModel, data) -> np.ndarray:
    """log p(x) for each row of data, computed with log-sum-exp so no
    finite input underflows to -inf."""
    x = _as_data(data)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(
            f"observation dim {x.shape[1]} != model dim {model.dim}")
    return _logsumexp_rows(_log_joint(x, model))


def log_likelihood(model: GmmModel, x) -> float:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != model.dim:
        raise DimensionMismatch(
            f"expected a vector of dim {model.dim}, got shape {v.shape}")
    return float(log_likelihood_many(model, v[None, :])[0])


def responsibilities(model: GmmModel, data) -> np.ndarray:
    """(n, M) posterior component probabilities; rows sum to 1."""
    x = _as_data(data)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(
            f"observation dim {x.shape[1]} != model dim {model.dim}")
    lj = _log_joint(x, model)
    return np.exp(lj - _logsumexp_rows(lj)[:, None])


def _kmeans_pp(data: np.ndarray, k: int, rng) -> np.ndarray:
    chosen = [int(rng.integers(data.shape[0]))]
    d2 = np.sum((data - data[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            nxt = int(rng.choice(data.shape[0], p=d2 / total))
        else:
            nxt = int(rng.integers(data.shape[0]))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((data - data[nxt]) ** 2, axis=1))
    return data[np.array(chosen)].copy()


def kmeans_init(data, n_components: int, seed: int,
                cov_floor: float = 1e-4) -> GmmModel:
    """k-means++ seeding plus Lloyd iterations; the resulting clustering
    becomes the initial mixture. Deterministic given seed."""
    x = _as_data(data)
    n = x.shape[0]
    if n < n_components:
        raise TooFewObservations(
            f"{n} observations cannot seed {n_components} components")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, n_components, rng)

    assign = None
    for _ in range(50):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for m in range(n_components):
            members = x[assign == m]
            if members.shape[0] > 0:
                centers[m] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-covered point
                centers[m] = x[int(np.argmax(np.min(d2, axis=1)))]

    weights = np.empty(n_components)
    variances = np.empty_like(centers)
    for m in range(n_components):
        members = x[assign == m]
        weights[m] = members.shape[0] / n
        if members.shape[0] > 0:
            variances[m] = np.maximum(members.var(axis=0), cov_floor)
        else:
            variances[m] = cov_floor
    return GmmModel(weights=weights, means=centers, variances=variances)


def _em_run(data: np.ndarray, config: EmConfig, init: GmmModel):
    n = data.shape[0]
    model = init
    trace = []
    reseeded = False
    for _ in range(config.max_iters):
        lj = _log_joint(data, model)
        lse = _logsumexp_rows(lj)
        loglik = float(np.sum(lse))
        trace.append(loglik)
        if len(trace) > 1:
            prev = trace[-2]
            if loglik - prev < config.tol * max(1.0, abs(prev)):
                break
        resp = np.exp(lj - lse[:, None])

        nk = resp.sum(axis=0)
        safe_nk = np.where(nk > 0.0, nk, 1.0)
        means = (resp.T @ data) / safe_nk[:, None]
        variances = np.empty_like(means)
        for m in range(model.n_components):
            diff = data - means[m]
            variances[m] = (resp[:, m] @ (diff * diff)) / safe_nk[m]

        # a component whose responsibility mass underflowed to zero has no
        # statistics left; re-seed it once at the worst-explained point.
        # (variances merely estimated under the floor are clamped by the
        # floor itself -- the constrained M-step keeps EM monotone.)
        collapsed = [m for m in range(model.n_components) if nk[m] == 0.0]
        if collapsed:
            if reseeded:
                raise NumericalCollapse(
                    f"components {collapsed} lost all responsibility mass "
                    f"after a re-seed")
            reseeded = True
            worst = np.argsort(lse)
            spread = np.maximum(data.var(axis=0), config.cov_floor)
            for j, m in enumerate(collapsed):
                means[m] = data[int(worst[j % n])]
                variances[m] = spread
                nk[m] = 1.0

        variances = np.maximum(variances, config.cov_floor)
        weights = nk / nk.sum()
        model = GmmModel(weights=weights, means=means, variances=variances)
    return model, trace


def em_fit(data, config: EmConfig, init: GmmModel | None = None):
    """Fit a mixture by EM; returns (model, log-likelihood trace).

    Runs config.restarts independent k-means++ initializations (or a single
    run from `init` when given) and keeps the best final log-likelihood.
    The returned trace is nondecreasing up to 1e-9 slack per step.
    """
    config.validate()
    x = _as_data(data)
    if x.shape[0] < config.n_components:
        raise TooFewObservations(
            f"{x.shape[0]} observations cannot fit "
            f"{config.n_components} components")

    if init is not None:
        if init.dim != x.shape[1]:
            raise DimensionMismatch("init model dim != data dim")
        return _em_run(x, config, init)

    best = None
    failure = None
    for ss in np.random.SeedSequence(config.seed).spawn(config.restarts):
        seed = int(ss.generate_state(1)[0])
        try:
            start = kmeans_init(x, config.n_components, seed,
                                cov_floor=config.cov_floor)
            model, trace = _em_run(x, config, start)
        except NumericalCollapse as exc:
            failure = exc
            continue
        if best is None or trace[-1] > best[1][-1]:
            best = (model, trace)
    if best is None:
        raise NumericalCollapse(str(failure))
    return best


def match_score(client: GmmModel, background: GmmModel | None, obs) -> float:
    """Average log-likelihood under the client model, minus the same under
    the background model when one is supplied. Higher means more genuine."""
    x = _as_data(obs)
    if x.shape[0] == 0:
        raise EmptyObservationSet("no observations to score")
    score = float(np.mean(log_likelihood_many(client, x)))
    if background is not None:
        score -= float(np.mean(log_likelihood_many(background, x)))
    return score


def model_to_dict(model: GmmModel, modality: str, subject_id: str) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "modality": modality,
        "subject_id": subject_id,
        "M": model.n_components,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }


def model_from_dict(doc: dict):
    """Rebuild (model, modality, subject_id); validates every invariant."""
    try:
        if int(doc["format_version"]) != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported format_version {doc['format_version']!r}")
        modality = doc["modality"]
        subject_id = doc["subject_id"]
        m = int(doc["M"])
        weights = np.asarray(doc["weights"], dtype=np.float64)
        means = np.asarray(doc["means"], dtype=np.float64)
        variances = np.asarray(doc["variances"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad model document: {exc}") from exc
    if weights.shape != (m,) or means.ndim != 2 or means.shape[0] != m:
        raise ModelFormatError("component count disagrees with M")
    try:
        model = GmmModel(weights=weights, means=means, variances=variances)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    return model, modality, subject_id


def save_model(model: GmmModel, path, modality: str, subject_id: str) -> None:
    payload = json.dumps(model_to_dict(model, modality, subject_id),
                         sort_keys=True, indent=2) + "\n"
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON") from exc
    return model_from_dict(doc)
