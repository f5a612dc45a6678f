"""Assignment-fidelity, crosstalk and confusion-matrix metrics.

Conditional probabilities such as ``P(0_i | pi_i)`` are averaged with equal
weight over the prepared configurations that satisfy the condition, so an
unbalanced test set does not bias them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dsp import achievable_fidelity


class MetricsError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Row ``c`` holds the assignment distribution for prepared configuration ``c``."""

    counts: np.ndarray
    num_qubits: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        d = 2**self.num_qubits
        if counts.shape != (d, d):
            raise MetricsError(f"counts must be {d}x{d}")
        object.__setattr__(self, "counts", counts)

    @property
    def shot_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def entries(self) -> np.ndarray:
        rows = self.shot_counts
        if np.any(rows == 0):
            missing = np.flatnonzero(rows == 0).tolist()
            raise MetricsError(f"prepared configurations {missing} were never observed")
        return self.counts / rows[:, None]


def confusion_matrix(predictions, labels, num_qubits: int) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape:
        raise MetricsError("predictions and labels differ in length")
    d = 2**num_qubits
    counts = np.zeros((d, d), dtype=np.int64)
    np.add.at(counts, (lab, pred), 1)
    cm = ConfusionMatrix(counts, num_qubits)
    cm.entries  # every prepared row must be observed
    return cm


def _bit(values: np.ndarray, i: int) -> np.ndarray:
    return (values >> i) & 1


def _assigned_bit_prob(entries: np.ndarray, i: int) -> np.ndarray:
    """P(assigned bit i = 1 | prepared configuration), one value per row."""
    cols = np.arange(entries.shape[1])
    return entries[:, _bit(cols, i) == 1].sum(axis=1)


def _rows(cm) -> tuple[np.ndarray, int]:
    if isinstance(cm, ConfusionMatrix):
        return cm.entries, cm.num_qubits
    entries = np.asarray(cm, dtype=np.float64)
    n = int(round(math.log2(entries.shape[0])))
    if entries.shape != (2**n, 2**n):
        raise MetricsError("confusion matrix must be 2^N x 2^N")
    sums = entries.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        raise MetricsError("confusion matrix has empty rows")
    return entries / sums, n


def assignment_fidelity(cm: ConfusionMatrix | np.ndarray, qubit: int) -> float:
    """``1 - [P(0_i|pi_i) + P(1_i|0_i)] / 2`` marginalised over spectators."""
    entries, n = _rows(cm)
    if not 0 <= qubit < n:
        raise MetricsError(f"qubit {qubit} out of range")
    p1 = _assigned_bit_prob(entries, qubit)
    prepared = _bit(np.arange(entries.shape[0]), qubit)
    p1_given_ground = p1[prepared == 0].mean()
    p0_given_excited = 1.0 - p1[prepared == 1].mean()
    return float(1.0 - 0.5 * (p0_given_excited + p1_given_ground))


def assignment_fidelity_from_shots(predictions, labels, qubit: int, num_qubits: int) -> float:
    """Same quantity as :func:`assignment_fidelity`, computed straight from shot lists."""
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    wrong_ground, wrong_excited = [], []
    for config in range(2**num_qubits):
        sel = lab == config
        if not np.any(sel):
            raise MetricsError(f"configuration {config} never prepared")
        assigned = _bit(pred[sel], qubit)
        if _bit(config, qubit):
            wrong_excited.append(np.mean(assigned == 0))
        else:
            wrong_ground.append(np.mean(assigned == 1))
    return float(1.0 - 0.5 * (np.mean(wrong_excited) + np.mean(wrong_ground)))


def per_qubit_fidelities(cm: ConfusionMatrix | np.ndarray) -> np.ndarray:
    _, n = _rows(cm)
    return np.array([assignment_fidelity(cm, i) for i in range(n)])


def geometric_mean_fidelity(per_qubit: Sequence[float]) -> float:
    f = np.asarray(per_qubit, dtype=np.float64)
    if f.size == 0 or np.any(f <= 0):
        raise MetricsError("fidelities must be positive")
    return float(np.exp(np.mean(np.log(f))))


def cross_fidelity(cm: ConfusionMatrix | np.ndarray, diagonal: str = "literal") -> np.ndarray:
    """``F_ij = 1 - [P(1_i|0_j) + P(0_i|pi_j)]`` with only qubit ``j``'s preparation fixed.

    ``diagonal="literal"`` leaves the diagonal at ``2 F_i - 1`` (the formula
    evaluated at i = j); ``"fidelity"`` replaces it by ``F_i``.
    """
    entries, n = _rows(cm)
    prepared = np.arange(entries.shape[0])
    out = np.empty((n, n))
    for i in range(n):
        p1 = _assigned_bit_prob(entries, i)
        for j in range(n):
            pj = _bit(prepared, j)
            out[i, j] = 1.0 - (p1[pj == 0].mean() + (1.0 - p1[pj == 1].mean()))
    if diagonal == "fidelity":
        out[np.diag_indices(n)] = 0.5 * (np.diag(out) + 1.0)
    elif diagonal != "literal":
        raise ValueError("diagonal must be 'literal' or 'fidelity'")
    return out


def mean_abs_cf_by_offset(cf: np.ndarray) -> list[float]:
    """Mean ``|F_ij|`` over ordered pairs with ``|i - j| = 1 .. N-1``."""
    cf = np.asarray(cf, dtype=np.float64)
    if cf.ndim != 2 or cf.shape[0] != cf.shape[1]:
        raise MetricsError("cross-fidelity matrix must be square")
    n = cf.shape[0]
    i, j = np.indices(cf.shape)
    return [float(np.abs(cf[np.abs(i - j) == k]).mean()) for k in range(1, n)]


def frobenius_fidelity(cm: ConfusionMatrix | np.ndarray) -> float:
    """``1 - ||C - I||_F / sqrt(2^(N+1))``."""
    c = cm.entries if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise MetricsError("confusion matrix must be square")
    d = c.shape[0]
    return float(1.0 - np.linalg.norm(c - np.eye(d)) / math.sqrt(2 * d))


def hamming_error_distribution(predictions, labels, num_qubits: int) -> dict[int, float] | None:
    """Fraction of erroneous shots with exactly ``k`` misassigned qubits.

    Returns ``None`` when there are no errors (the distribution is undefined).
    """
    diff = np.asarray(predictions, dtype=np.int64) ^ np.asarray(labels, dtype=np.int64)
    weights = np.zeros(diff.shape, dtype=np.int64)
    for i in range(num_qubits):
        weights += _bit(diff, i)
    errors = weights[weights > 0]
    if errors.size == 0:
        return None
    counts = np.bincount(errors, minlength=num_qubits + 1)
    return {k: float(counts[k] / errors.size) for k in range(1, num_qubits + 1)}


# ---------------------------------------------------------------------------
# Preparation statistics from filtered-signal histograms


@dataclass(frozen=True)
class PrepStats:
    p1_given_0: float
    p0_given_pi: float
    p2_given_0: float
    p2_given_pi: float
    f_pi: float
    f_label: float
    f_prep: float
    f_ach: float | None = None
    f_mf_bound: float | None = None
    fisher_R: float | None = None


def label_fidelity(p1_given_0: float, p0_given_pi: float, p2_given_0: float = 0.0) -> float:
    # a leaked ground preparation is as mislabelled as a thermally excited one
    return 1.0 - (p1_given_0 + p2_given_0 + p0_given_pi) / 2.0


def preparation_fidelity(p1_given_0: float, f_pi: float) -> float:
    return (1.0 + (1.0 - 2.0 * p1_given_0) * f_pi) / 2.0


def prep_stats(
    p1_given_0: float,
    p0_given_pi: float,
    f_pi: float,
    p2_given_0: float = 0.0,
    p2_given_pi: float = 0.0,
    f_ach: float | None = None,
    fisher_R: float | None = None,
) -> PrepStats:
    f_label = label_fidelity(p1_given_0, p0_given_pi, p2_given_0)
    return PrepStats(
        p1_given_0=p1_given_0,
        p0_given_pi=p0_given_pi,
        p2_given_0=p2_given_0,
        p2_given_pi=p2_given_pi,
        f_pi=f_pi,
        f_label=f_label,
        f_prep=preparation_fidelity(p1_given_0, f_pi),
        f_ach=f_ach,
        f_mf_bound=None if f_ach is None else f_label * f_ach,
        fisher_R=fisher_R,
    )


@dataclass
class MixtureFit:
    """Gaussian components with shared means and a single shared variance.

    ``weights[h]`` are the mixing weights of histogram ``h``.
    """

    means: np.ndarray
    variance: float
    weights: list[np.ndarray]
    log_likelihood: float
    iterations: int


def _kmeanspp(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [values[rng.integers(values.size)]]
    for _ in range(1, k):
        d2 = np.min((values[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(values[rng.integers(values.size)])
        else:
            centers.append(values[rng.choice(values.size, p=d2 / total)])
    return np.sort(np.asarray(centers, dtype=np.float64))


HIST_BINS = 512
# components lighter than this in every histogram are dropped
PRUNE_WEIGHT = 1e-6
# components closer than this many standard deviations are merged
MERGE_DISTANCE = 0.5


def _binned(hists: list[np.ndarray], bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    pooled = np.concatenate(hists)
    lo, hi = float(pooled.min()), float(pooled.max())
    if not hi > lo:
        raise FitError("values have no spread")
    edges = np.linspace(lo, hi, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, [np.histogram(h, edges)[0].astype(np.float64) for h in hists]


def _em(
    centers: np.ndarray, counts: list[np.ndarray], means: np.ndarray, max_iter: int, tol: float
) -> MixtureFit:
    k = means.size
    means = means.astype(np.float64).copy()
    total = sum(c.sum() for c in counts)
    pooled_mean = sum(c @ centers for c in counts) / total
    variance = float(sum(c @ (centers - pooled_mean) ** 2 for c in counts) / total) / k + 1e-12
    weights = [np.full(k, 1.0 / k) for _ in counts]
    active = np.ones(k, dtype=bool)
    prev = -np.inf
    for it in range(1, max_iter + 1):
        ll = 0.0
        resp_sum = np.zeros(k)
        resp_x = np.zeros(k)
        resp_x2 = np.zeros(k)
        new_weights = []
        for c, w in zip(counts, weights):
            with np.errstate(divide="ignore"):
                logp = (
                    np.log(np.where(active, w, 0.0))[None, :]
                    - 0.5 * (centers[:, None] - means[None, :]) ** 2 / variance
                    - 0.5 * math.log(2 * math.pi * variance)
                )
            mx = logp.max(axis=1, keepdims=True)
            norm = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
            ll += c @ norm
            r = np.exp(logp - norm[:, None]) * c[:, None]
            new_weights.append(r.sum(axis=0) / c.sum())
            resp_sum += r.sum(axis=0)
            resp_x += r.T @ centers
            resp_x2 += r.T @ (centers * centers)
        weights = new_weights
        means = np.where(resp_sum > 0, resp_x / np.maximum(resp_sum, 1e-300), means)
        variance = float(max((resp_x2 - resp_sum * means**2).sum() / total, 1e-12))
        active &= np.max(weights, axis=0) > PRUNE_WEIGHT
        _merge_close(means, weights, active, math.sqrt(variance))
        for w in weights:
            w[~active] = 0.0
        if abs(ll - prev) <= tol * (1.0 + abs(ll)):
            return MixtureFit(means, variance, weights, float(ll), it)
        prev = ll
    raise FitError(f"EM did not converge in {max_iter} iterations")


def _merge_close(means, weights, active, sigma) -> None:
    idx = np.flatnonzero(active)
    for a, b in zip(idx[:-1], idx[1:]):
        if active[a] and abs(means[b] - means[a]) < MERGE_DISTANCE * sigma:
            wa = sum(w[a] for w in weights)
            wb = sum(w[b] for w in weights)
            means[a] = (wa * means[a] + wb * means[b]) / max(wa + wb, 1e-300)
            for w in weights:
                w[a] += w[b]
            active[b] = False


def fit_shared_mixture(
    hists: Sequence[np.ndarray],
    n_components: int,
    restarts: int = 20,
    max_iter: int = 500,
    tol: float = 1e-9,
    seed: int = 0,
) -> MixtureFit:
    """Equal-variance 1-D Gaussian mixture fitted jointly to several histograms.

    Component means and the variance are shared; each histogram has its
    own mixing weights. The values are binned into ``HIST_BINS`` bins and
    EM runs on the bin counts. k-means++ seeding, best log-likelihood of
    ``restarts`` runs. Components that empty out or coincide with a
    neighbour are retired with weight zero.
    """
    hists = [np.asarray(h, dtype=np.float64) for h in hists]
    pooled = np.concatenate(hists)
    centers, counts = _binned(hists, HIST_BINS)
    rng = np.random.default_rng(seed)
    best = None
    failures = 0
    for _ in range(restarts):
        try:
            fit = _em(centers, counts, _kmeanspp(pooled, n_components, rng), max_iter, tol)
        except FitError:
            failures += 1
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    if best is None:
        raise FitError(f"all {failures} EM restarts failed to converge")
    return best


def prep_stats_from_histograms(
    ground_values,
    excited_values,
    f_pi: float | None = None,
    f_ach: float | None = None,
    seed: int = 0,
    max_components: int = 3,
) -> PrepStats:
    """Preparation statistics from matched-filtered ground / excited histograms.

    Ground- and excited-state histograms share component positions: the
    ground histogram's dominant component is ``|0>``, the excited one's
    dominant remaining component is ``|1>``, and a third component (kept
    only if it lowers the BIC) is ``|2>``. Without an externally known pi
    fidelity, ``1 - P(0|pi)`` is used as a lower bound. Without an external
    ``f_ach`` the bound is computed from the fitted ``|0>``/``|1>`` means
    and the shared variance.
    """
    g = np.asarray(ground_values, dtype=np.float64)
    e = np.asarray(excited_values, dtype=np.float64)
    n = g.size + e.size
    fits = {}
    for k in range(2, max_components + 1):
        fit = fit_shared_mixture([g, e], k, seed=seed)
        used = int(np.sum(np.max(fit.weights, axis=0) > 0))
        params = used + 1 + 2 * (used - 1)
        fits[k] = (-2 * fit.log_likelihood + params * math.log(n), fit)
    fit = min(fits.values(), key=lambda t: t[0])[1]
    wg, we = fit.weights
    zero = int(np.argmax(wg))
    rest = [c for c in range(fit.means.size) if c != zero]
    one = max(rest, key=lambda c: we[c])
    two = [c for c in rest if c != one]
    p1_given_0 = float(wg[one])
    p0_given_pi = float(we[zero])
    p2_given_0 = float(sum(wg[c] for c in two))
    p2_given_pi = float(sum(we[c] for c in two))
    fisher_R = float((fit.means[zero] - fit.means[one]) ** 2 / fit.variance)
    if f_ach is None:
        f_ach = achievable_fidelity(fisher_R)
    return prep_stats(
        p1_given_0,
        p0_given_pi,
        f_pi if f_pi is not None else 1.0 - p0_given_pi,
        p2_given_0=p2_given_0,
        p2_given_pi=p2_given_pi,
        f_ach=f_ach,
        fisher_R=fisher_R,
    )


# ---------------------------------------------------------------------------
# Reports


@dataclass
class FidelityReport:
    discriminator: str
    num_qubits: int
    per_qubit: list[float]
    geometric_mean: float
    cross_fidelity: list[list[float]]
    frobenius_fidelity: float
    hamming_distribution: dict[int, float] | None
    mean_abs_cf_by_offset: list[float]
    confusion_counts: list[list[int]] = field(repr=False, default_factory=list)

    @classmethod
    def from_predictions(cls, discriminator: str, predictions, labels, num_qubits: int):
        cm = confusion_matrix(predictions, labels, num_qubits)
        per_qubit = per_qubit_fidelities(cm)
        cf = cross_fidelity(cm)
        return cls(
            discriminator=discriminator,
            num_qubits=num_qubits,
            per_qubit=per_qubit.tolist(),
            geometric_mean=geometric_mean_fidelity(per_qubit),
            cross_fidelity=cf.tolist(),
            frobenius_fidelity=frobenius_fidelity(cm),
            hamming_distribution=hamming_error_distribution(predictions, labels, num_qubits),
            mean_abs_cf_by_offset=mean_abs_cf_by_offset(cf),
            confusion_counts=cm.counts.tolist(),
        )

    @property
    def confusion(self) -> ConfusionMatrix:
        return ConfusionMatrix(np.asarray(self.confusion_counts), self.num_qubits)

    def to_json(self) -> str:
        d = asdict(self)
        if d["hamming_distribution"] is not None:
            d["hamming_distribution"] = {str(k): v for k, v in d["hamming_distribution"].items()}
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> FidelityReport:
        d = json.loads(text)
        if d["hamming_distribution"] is not None:
            d["hamming_distribution"] = {int(k): v for k, v in d["hamming_distribution"].items()}
        return cls(**d)


def fmt(x: float) -> str:
    """Six significant digits, the precision of every emitted table."""
    return f"{x:.6g}"


def table_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cross_fidelity_table(reports: Sequence[FidelityReport]) -> str:
    n = max(r.num_qubits for r in reports)
    header = ["discriminator"] + [f"mean_abs_cf_offset_{k}" for k in range(1, n)]
    rows = [[r.discriminator] + list(r.mean_abs_cf_by_offset) for r in reports]
    return table_csv(header, rows)
