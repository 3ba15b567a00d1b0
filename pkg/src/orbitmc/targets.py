"""Benchmark target distributions.

Four posterior families are provided, matching the benchmark suite this
package ships samplers for:

- ``make_banana``: 2-D curved Gaussian ("banana").
- ``make_ill_conditioned_gaussian``: diagonal Gaussian with variances spaced
  geometrically from 1e-2 to 1e2.
- ``make_logistic_regression``: Bayesian logistic regression posterior with a
  standard-normal prior (German-credit shaped; CSV ingestion or a seeded
  synthetic generator).
- ``generate_item_response``: 501-dim item-response-theory posterior on data
  generated from the prior.

Every target is an immutable :class:`TargetModel` holding an (unnormalized)
log-density and its analytic gradient, both vectorized over a leading batch
axis.  Built-in targets also carry a :class:`~orbitmc._descriptors.CoreSpec`
so the compiled trajectory core can evaluate them without Python callbacks.
"""

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from ._descriptors import (
    KIND_BANANA,
    KIND_DIAG_GAUSS,
    KIND_ITEM_RESPONSE,
    KIND_LOGISTIC,
    CoreSpec,
)
from .errors import MalformedInputError

LOG_2PI = float(np.log(2.0 * np.pi))

# Banana constants: x1 ~ N(0, s1sq), x2 | x1 ~ N(curv*(x1^2 - off), s2sq).
# The second parameter of N(., .) is a variance throughout this package.
BANANA_S1SQ = 10.0
BANANA_CURV = 0.03
BANANA_OFF = 100.0
BANANA_S2SQ = 1.0


@dataclass(frozen=True)
class TargetModel:
    """Differentiable unnormalized log-density on R^dim plus metadata.

    ``log_density`` and ``grad_log_density`` accept arrays of shape
    ``(dim,)`` or ``(batch, dim)`` and return scalars / ``(batch,)`` /
    matching-shape gradients.  Instances are immutable and safe to share
    across concurrently running chains.
    """

    name: str
    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    grad_log_density: Callable[[np.ndarray], np.ndarray]
    reference_mean: Optional[np.ndarray] = None
    reference_variance: Optional[np.ndarray] = None
    sample_exact: Optional[Callable] = None  # (rng, n) -> (n, dim) draws
    core_spec: Optional[CoreSpec] = None
    vectorized: bool = True

    def logp_batch(self, x: np.ndarray) -> np.ndarray:
        """log p over a (batch, dim) array, looping if not vectorized."""
        x = np.asarray(x, dtype=np.float64)
        if self.vectorized:
            return np.asarray(self.log_density(x), dtype=np.float64)
        return np.array([self.log_density(row) for row in x], dtype=np.float64)

    def grad_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.vectorized:
            return np.asarray(self.grad_log_density(x), dtype=np.float64)
        return np.stack([self.grad_log_density(row) for row in x])


@dataclass(frozen=True)
class LogisticDataset:
    """Design matrix (rows = data points) and binary labels."""

    covariates: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.covariates, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("covariates must be a non-empty 2-D matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must match the number of rows")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be binary (0/1)")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_rows(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class ItemResponseDataset:
    """Observed (student, question, response) triples."""

    student_ids: np.ndarray
    question_ids: np.ndarray
    responses: np.ndarray
    n_students: int
    n_questions: int

    def __post_init__(self):
        j = np.ascontiguousarray(self.student_ids, dtype=np.int64)
        k = np.ascontiguousarray(self.question_ids, dtype=np.int64)
        y = np.ascontiguousarray(self.responses, dtype=np.float64)
        if not (j.shape == k.shape == y.shape) or j.ndim != 1:
            raise ValueError("ids and responses must be equal-length vectors")
        if j.min(initial=0) < 0 or j.max(initial=0) >= self.n_students:
            raise ValueError("student id out of range")
        if k.min(initial=0) < 0 or k.max(initial=0) >= self.n_questions:
            raise ValueError("question id out of range")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("responses must be binary")
        object.__setattr__(self, "student_ids", j)
        object.__setattr__(self, "question_ids", k)
        object.__setattr__(self, "responses", y)

    @property
    def n_responses(self) -> int:
        return self.responses.shape[0]


def _log_softplus_neg(z):
    # log(1 + exp(z)) evaluated stably for large |z|
    return np.logaddexp(0.0, z)


def make_banana() -> TargetModel:
    """2-D banana: x1 ~ N(0, 10), x2 | x1 ~ N(0.03*(x1^2 - 100), 1).

    Second Gaussian parameters are variances.  Exact moments:
    E[x] = (0, 0.03*(10 - 100)) = (0, -2.7),
    Var[x] = (10, 1 + 2*0.03^2*10^2) = (10, 1.18).
    """
    c0 = -0.5 * np.log(2.0 * np.pi * BANANA_S1SQ)
    c1 = -0.5 * np.log(2.0 * np.pi * BANANA_S2SQ)

    def log_density(x):
        x = np.asarray(x, dtype=np.float64)
        x1, x2 = x[..., 0], x[..., 1]
        m = BANANA_CURV * (x1 * x1 - BANANA_OFF)
        return (
            c0
            - 0.5 * x1 * x1 / BANANA_S1SQ
            + c1
            - 0.5 * (x2 - m) ** 2 / BANANA_S2SQ
        )

    def grad_log_density(x):
        x = np.asarray(x, dtype=np.float64)
        x1, x2 = x[..., 0], x[..., 1]
        m = BANANA_CURV * (x1 * x1 - BANANA_OFF)
        r = (x2 - m) / BANANA_S2SQ
        g = np.empty_like(x)
        g[..., 0] = -x1 / BANANA_S1SQ + r * (2.0 * BANANA_CURV * x1)
        g[..., 1] = -r
        return g

    def sample_exact(rng, n):
        x1 = rng.normal(0.0, np.sqrt(BANANA_S1SQ), size=n)
        m = BANANA_CURV * (x1 * x1 - BANANA_OFF)
        x2 = rng.normal(m, np.sqrt(BANANA_S2SQ))
        return np.column_stack([x1, x2])

    mean2 = BANANA_CURV * (BANANA_S1SQ - BANANA_OFF)
    var2 = BANANA_S2SQ + 2.0 * BANANA_CURV**2 * BANANA_S1SQ**2
    return TargetModel(
        name="banana",
        dim=2,
        log_density=log_density,
        grad_log_density=grad_log_density,
        reference_mean=np.array([0.0, mean2]),
        reference_variance=np.array([BANANA_S1SQ, var2]),
        sample_exact=sample_exact,
        core_spec=CoreSpec(
            kind=KIND_BANANA,
            f0=np.array([BANANA_S1SQ, BANANA_CURV, BANANA_OFF, BANANA_S2SQ]),
        ),
    )


def make_ill_conditioned_gaussian(dim: int) -> TargetModel:
    """Zero-mean diagonal Gaussian with variances 10^-2 .. 10^2.

    Variances are geometrically spaced (equal log10 increments):
    sigma_i^2 = 10^(-2 + 4*(i-1)/(dim-1)), i = 1..dim.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    variances = 10.0 ** np.linspace(-2.0, 2.0, dim)
    return diag_gaussian(variances, name=f"ill_gaussian_{dim}d")


def diag_gaussian(variances: np.ndarray, name: str = "diag_gaussian") -> TargetModel:
    """Diagonal zero-mean Gaussian with the given per-dimension variances."""
    variances = np.ascontiguousarray(variances, dtype=np.float64)
    if variances.ndim != 1 or variances.size < 1 or np.any(variances <= 0):
        raise ValueError("variances must be a positive vector")
    dim = variances.size
    log_norm = -0.5 * float(np.sum(np.log(2.0 * np.pi * variances)))
    inv_var = 1.0 / variances
    stds = np.sqrt(variances)

    def log_density(x):
        x = np.asarray(x, dtype=np.float64)
        return log_norm - 0.5 * np.sum(x * x * inv_var, axis=-1)

    def grad_log_density(x):
        x = np.asarray(x, dtype=np.float64)
        return -x * inv_var

    def sample_exact(rng, n):
        return rng.standard_normal((n, dim)) * stds

    return TargetModel(
        name=name,
        dim=dim,
        log_density=log_density,
        grad_log_density=grad_log_density,
        reference_mean=np.zeros(dim),
        reference_variance=variances.copy(),
        sample_exact=sample_exact,
        core_spec=CoreSpec(kind=KIND_DIAG_GAUSS, f0=variances),
    )


def make_logistic_regression(data: LogisticDataset) -> TargetModel:
    """Bayesian logistic regression posterior.

    Parameters are theta = (weights, bias) with dim = n_features + 1.
    Likelihood uses the link p(y=1 | x, theta) = sigmoid(x^T w - b); the
    prior is standard normal on all parameters.  Densities include their
    normalizing constants.
    """
    X, y = data.covariates, data.labels
    n, d = X.shape
    dim = d + 1
    prior_norm = -0.5 * dim * LOG_2PI

    def _split(theta):
        return theta[..., :d], np.asarray(theta[..., d])

    def log_density(theta):
        theta = np.asarray(theta, dtype=np.float64)
        w, b = _split(theta)
        # logits: (n,) or (batch, n)
        logits = np.inner(w, X) - b[..., None]
        loglik = np.sum(y * logits - _log_softplus_neg(logits), axis=-1)
        logprior = prior_norm - 0.5 * np.sum(theta * theta, axis=-1)
        return loglik + logprior

    def grad_log_density(theta):
        theta = np.asarray(theta, dtype=np.float64)
        w, b = _split(theta)
        logits = np.inner(w, X) - b[..., None]
        resid = y - expit(logits)
        g = np.empty_like(theta)
        g[..., :d] = np.inner(resid, X.T) - w
        g[..., d] = -np.sum(resid, axis=-1) - b
        return g

    return TargetModel(
        name="logistic_regression",
        dim=dim,
        log_density=log_density,
        grad_log_density=grad_log_density,
        core_spec=CoreSpec(
            kind=KIND_LOGISTIC,
            f0=X.reshape(-1),
            f1=y,
            meta=np.array([n, d], dtype=np.int64),
        ),
    )


IRT_DELTA_PRIOR_MEAN = 0.75


def make_item_response_model(data: ItemResponseDataset) -> TargetModel:
    """Item-response posterior over (ability, difficulty, offset).

    Parameter layout: theta = [alpha (students), beta (questions), delta];
    the response logit is alpha[j_n] - beta[k_n] + delta.  Priors: N(0, 1)
    on alpha and beta, N(0.75, 1) on delta.
    """
    j, k, y = data.student_ids, data.question_ids, data.responses
    ns, nq = data.n_students, data.n_questions
    dim = ns + nq + 1
    prior_norm = -0.5 * dim * LOG_2PI

    def log_density(theta):
        theta = np.asarray(theta, dtype=np.float64)
        alpha = theta[..., :ns]
        beta = theta[..., ns : ns + nq]
        delta = np.asarray(theta[..., ns + nq])
        logits = alpha[..., j] - beta[..., k] + delta[..., None]
        loglik = np.sum(y * logits - _log_softplus_neg(logits), axis=-1)
        dd = delta - IRT_DELTA_PRIOR_MEAN
        logprior = (
            prior_norm
            - 0.5 * np.sum(alpha * alpha, axis=-1)
            - 0.5 * np.sum(beta * beta, axis=-1)
            - 0.5 * dd * dd
        )
        return loglik + logprior

    def grad_log_density(theta):
        theta = np.asarray(theta, dtype=np.float64)
        alpha = theta[..., :ns]
        beta = theta[..., ns : ns + nq]
        delta = np.asarray(theta[..., ns + nq])
        logits = alpha[..., j] - beta[..., k] + delta[..., None]
        resid = y - expit(logits)
        g = np.empty_like(theta)
        if theta.ndim == 1:
            g[:ns] = np.bincount(j, weights=resid, minlength=ns) - alpha
            g[ns : ns + nq] = -np.bincount(k, weights=resid, minlength=nq) - beta
        else:
            # one flattened bincount per id family covers the whole batch
            B = theta.shape[0]
            offs = np.arange(B)[:, None]
            ga = np.bincount(
                (offs * ns + j).ravel(), weights=resid.ravel(), minlength=B * ns
            ).reshape(B, ns)
            gb = np.bincount(
                (offs * nq + k).ravel(), weights=resid.ravel(), minlength=B * nq
            ).reshape(B, nq)
            g[..., :ns] = ga - alpha
            g[..., ns : ns + nq] = -gb - beta
        g[..., ns + nq] = np.sum(resid, axis=-1) - (delta - IRT_DELTA_PRIOR_MEAN)
        return g

    return TargetModel(
        name="item_response",
        dim=dim,
        log_density=log_density,
        grad_log_density=grad_log_density,
        core_spec=CoreSpec(
            kind=KIND_ITEM_RESPONSE,
            f0=np.array([IRT_DELTA_PRIOR_MEAN]),
            f1=y,
            i0=j,
            i1=k,
            meta=np.array([data.n_responses, ns, nq], dtype=np.int64),
        ),
    )


def generate_item_response(
    seed: int,
    n_students: int = 100,
    n_questions: int = 400,
    n_responses: int = 30105,
):
    """Generate an item-response dataset from the prior and its posterior.

    Draws alpha ~ N(0,1) per student, beta ~ N(0,1) per question,
    delta ~ N(0.75, 1), picks ``n_responses`` distinct (student, question)
    pairs uniformly, and samples binary responses through the logistic link.
    Pure function of the seed.

    Returns (dataset, posterior TargetModel).
    """
    rng = np.random.default_rng(seed)
    alpha = rng.standard_normal(n_students)
    beta = rng.standard_normal(n_questions)
    delta = IRT_DELTA_PRIOR_MEAN + rng.standard_normal()
    pairs = rng.choice(n_students * n_questions, size=n_responses, replace=False)
    j = pairs // n_questions
    k = pairs % n_questions
    probs = expit(alpha[j] - beta[k] + delta)
    y = (rng.random(n_responses) < probs).astype(np.float64)
    data = ItemResponseDataset(
        student_ids=j,
        question_ids=k,
        responses=y,
        n_students=n_students,
        n_questions=n_questions,
    )
    return data, make_item_response_model(data)


def standardize_columns(X: np.ndarray) -> np.ndarray:
    """Zero-mean / unit-variance per column; constant columns become zeros."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def load_logistic_csv(path, has_header: bool = False) -> LogisticDataset:
    """Load a numeric CSV whose last column is a 0/1 label.

    Covariates are standardized per column.  Parse failures raise
    :class:`MalformedInputError` with the offending row/column.
    """
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for r, record in enumerate(reader):
            if r == 0 and has_header:
                continue
            if not record or all(cell.strip() == "" for cell in record):
                continue
            parsed = []
            for c, cell in enumerate(record):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise MalformedInputError(
                        f"{path}: non-numeric value {cell!r} at row {r + 1}, column {c + 1}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise MalformedInputError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise MalformedInputError(f"{path}: inconsistent column counts {sorted(widths)}")
    if widths.pop() < 2:
        raise MalformedInputError(f"{path}: need at least one feature column plus a label")
    arr = np.asarray(rows, dtype=np.float64)
    labels = arr[:, -1]
    bad = np.nonzero((labels != 0.0) & (labels != 1.0))[0]
    if bad.size:
        raise MalformedInputError(
            f"{path}: non-binary label {labels[bad[0]]!r} at row {int(bad[0]) + 1 + int(has_header)}"
        )
    return LogisticDataset(covariates=standardize_columns(arr[:, :-1]), labels=labels)


def make_synthetic_logistic(
    seed: int, n_rows: int = 1000, n_features: int = 24
) -> LogisticDataset:
    """Seeded synthetic dataset with the German-credit shape (1000 x 24).

    Stand-in for the real CSV so benchmarks and tests never require
    external data.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    theta_w = rng.standard_normal(n_features)
    theta_b = rng.standard_normal()
    probs = expit(X @ theta_w - theta_b)
    y = (rng.random(n_rows) < probs).astype(np.float64)
    return LogisticDataset(covariates=standardize_columns(X), labels=y)


def make_target(name: str, **params) -> TargetModel:
    """Build a benchmark target by name (used by the CLI and chain workers)."""
    if name == "banana":
        return make_banana()
    if name in ("ill_gaussian", "ill_conditioned_gaussian"):
        return make_ill_conditioned_gaussian(int(params.get("dim", 50)))
    if name == "std_gaussian":
        return diag_gaussian(np.ones(int(params.get("dim", 1))), name="std_gaussian")
    if name == "logistic":
        path = params.get("csv")
        if path:
            data = load_logistic_csv(path, has_header=bool(params.get("has_header", False)))
        else:
            data = make_synthetic_logistic(int(params.get("data_seed", 0)))
        return make_logistic_regression(data)
    if name == "item_response":
        _, model = generate_item_response(int(params.get("data_seed", 0)))
        return model
    raise ValueError(f"unknown target {name!r}")
