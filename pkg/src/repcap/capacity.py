"""Representation-capacity pipeline: four metrics per embedding, cross-method
max-normalization, per-method weight search and the tabular report."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import embeddings, metrics, neighborhood, tpe, tsne
from .dataset import LabeledDataset
from .embeddings import EmbeddingMatrix, Method

AS_WRITTEN = "as-written"
ADDITIVE = "additive"
MODES = (AS_WRITTEN, ADDITIVE)
METRIC_NAMES = ("acc_class", "score_clust", "agree_neighbor", "trust_neighbor")
STAGES = ("embed", "classify", "cluster", "tsne", "neighborhood", "optimize")


class CapacityError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline failure tagged with the method and stage that raised it."""

    def __init__(self, method: str, stage: str, cause: BaseException):
        self.method = method
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{method}/{stage}] {type(cause).__name__}: {cause}")


def derive_seed(master: int, stage: str) -> int:
    """Per-stage seed: first 4 bytes of sha256("<master>:<stage>")."""
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class MetricBundle:
    acc_class: float
    score_clust: float
    agree_neighbor: float
    trust_neighbor: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in METRIC_NAMES], dtype=np.float64)

    def as_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in METRIC_NAMES}

    def range_violations(self) -> list[str]:
        bounds = {
            "acc_class": (0.0, 1.0),
            "score_clust": (-1.0, 1.0),
            "agree_neighbor": (0.0, 1.0),
            "trust_neighbor": (0.0, 1.0),
        }
        bad = []
        for name, (lo, hi) in bounds.items():
            v = getattr(self, name)
            if not (math.isfinite(v) and lo <= v <= hi):
                bad.append(f"{name}={v!r} outside [{lo}, {hi}]")
        return bad


@dataclass(frozen=True)
class NormalizedBundle:
    acc_class: float
    score_clust: float
    agree_neighbor: float
    trust_neighbor: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in METRIC_NAMES], dtype=np.float64)

    def as_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in METRIC_NAMES}


def normalize(bundles: dict[str, MetricBundle]) -> tuple[dict[str, NormalizedBundle], dict]:
    """Divide each metric by its maximum across methods.

    A metric whose maximum is not positive is first shifted by ``1 + |min|``
    for every method; the applied shifts are returned alongside.
    """
    if not bundles:
        raise CapacityError("nothing to normalize")
    names = list(bundles)
    raw = np.vstack([bundles[m].as_array() for m in names])
    shifts = {}
    for j, metric in enumerate(METRIC_NAMES):
        if raw[:, j].max() <= 0:
            shift = 1.0 + abs(float(raw[:, j].min()))
            raw[:, j] = raw[:, j] + shift
            shifts[metric] = shift
    scaled = raw / raw.max(axis=0)
    out = {m: NormalizedBundle(*map(float, scaled[i])) for i, m in enumerate(names)}
    return out, shifts


def rc_score(weights: tpe.WeightVector, normalized, mode: str = AS_WRITTEN) -> float:
    """Weighted aggregate; ``as-written`` subtracts the neighborhood block."""
    w = weights.as_array() if isinstance(weights, tpe.WeightVector) else np.asarray(weights)
    v = normalized.as_array() if hasattr(normalized, "as_array") else np.asarray(normalized)
    if mode == AS_WRITTEN:
        return float((w[0] * v[0] + w[1] * v[1]) - (w[2] * v[2] + w[3] * v[3]))
    if mode == ADDITIVE:
        return float(w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3])
    raise CapacityError(f"unknown aggregation mode {mode!r}; valid: {', '.join(MODES)}")


@dataclass(frozen=True)
class PipelineConfig:
    methods: tuple[str, ...] = tuple(m.value for m in embeddings.CORE_METHODS)
    method_params: dict = field(default_factory=dict)
    train_fraction: float = 0.7
    logreg_l2: float = 1e-4
    logreg_epochs: int = 500
    logreg_lr: float = 0.1
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    tsne: tsne.TsneConfig = tsne.TsneConfig()
    sweep_k_max: int = 100
    trust_formula: str = "standard"
    tpe: tpe.TpeConfig = tpe.TpeConfig()
    aggregation: str = AS_WRITTEN
    seed: int = 0

    def __post_init__(self):
        if self.aggregation not in MODES:
            raise CapacityError(
                f"unknown aggregation mode {self.aggregation!r}; valid: {', '.join(MODES)}"
            )
        if not self.methods:
            raise CapacityError("need at least one method")
        for m in self.methods:
            Method.parse(m)

    def seeds(self) -> dict[str, int]:
        return {stage: derive_seed(self.seed, stage) for stage in STAGES}

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["methods"] = list(self.methods)
        out["tsne"] = asdict(self.tsne)
        out["tpe"] = asdict(self.tpe)
        return out


@dataclass
class BundleDetail:
    bundle: MetricBundle
    perplexity: float
    agreement_series: np.ndarray
    trust_series: np.ndarray
    kmeans_wcss: float
    tsne_kl: float
    tsne_points: np.ndarray


def effective_perplexity(requested: float, n: int) -> float:
    """Requested perplexity capped at (n - 1) / 3 so small inputs stay solvable."""
    return float(min(requested, (n - 1) / 3.0))


def _stage(method: str, stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise StageError(method, stage, exc) from exc


def compute_bundle(
    dataset: LabeledDataset, embedding: EmbeddingMatrix, config: PipelineConfig = PipelineConfig()
) -> BundleDetail:
    """Classification, clustering, t-SNE and both neighborhood sweeps for one embedding."""
    name = embedding.method.value
    if embedding.row_ids != dataset.ids:
        raise StageError(name, "embed", CapacityError("embedding rows do not match dataset ids"))
    seeds = config.seeds()
    X = embedding.values
    y = dataset.label_indices

    split = metrics.SplitSpec(config.train_fraction, True, seeds["classify"])
    cls = _stage(
        name,
        "classify",
        metrics.classification_accuracy,
        X,
        y,
        split,
        config.logreg_l2,
        config.logreg_epochs,
        config.logreg_lr,
    )

    def cluster():
        fit = metrics.kmeans(
            X, len(dataset.classes), config.kmeans_restarts, config.kmeans_max_iter,
            seed=seeds["cluster"],
        )
        if np.unique(fit.assignments).shape[0] < 2:
            return fit, 0.0
        return fit, metrics.silhouette(X, fit.assignments)[0]

    fit, sil = _stage(name, "cluster", cluster)

    perp = effective_perplexity(config.tsne.perplexity, X.shape[0])
    tcfg = replace(config.tsne, perplexity=perp, seed=seeds["tsne"])
    low = _stage(name, "tsne", tsne.run_tsne, X, tcfg)

    def neighbors():
        ix = neighborhood.build_index(X)
        iy = neighborhood.build_index(low.points)
        agree = neighborhood.sweep(neighborhood.AGREEMENT, ix, iy, config.sweep_k_max)
        trust = neighborhood.sweep(
            neighborhood.TRUSTWORTHINESS, ix, iy, config.sweep_k_max, config.trust_formula
        )
        return agree, trust

    agree, trust = _stage(name, "neighborhood", neighbors)
    bundle = MetricBundle(float(cls.accuracy), float(sil), agree.scalar, trust.scalar)
    problems = bundle.range_violations()
    if config.trust_formula != "standard":
        problems = [p for p in problems if not p.startswith("trust_neighbor")]
    if problems:
        raise StageError(name, "neighborhood", CapacityError("; ".join(problems)))
    return BundleDetail(
        bundle, perp, agree.values, trust.values, fit.wcss, low.final_kl, low.points
    )


@dataclass
class MethodResult:
    method: str
    weights: tpe.WeightVector
    raw: MetricBundle
    normalized: NormalizedBundle
    rc: float
    best_trial: int
    perplexity: float
    embedding_params: dict

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rc": self.rc,
            "weights": self.weights.as_dict(),
            "raw": self.raw.as_dict(),
            "normalized": self.normalized.as_dict(),
            "best_trial": self.best_trial,
            "perplexity": self.perplexity,
            "embedding_params": self.embedding_params,
        }


@dataclass
class CapacityReport:
    rows: list[MethodResult]
    aggregation: str
    seeds: dict
    config: dict
    shifts: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def row(self, method: str) -> MethodResult:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def recompute_rc(self) -> dict[str, float]:
        return {r.method: rc_score(r.weights, r.normalized, self.aggregation) for r in self.rows}

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "note": (
                "as-written subtracts the neighborhood/trustworthiness block; "
                "additive sums all four weighted metrics"
            ),
            "seeds": self.seeds,
            "normalization_shifts": self.shifts,
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "rc"] + list(tpe.WEIGHT_NAMES))
        for r in self.rows:
            cells = [
                f"{w:.4f} ({v:.4f})" for w, v in zip(r.weights.as_array(), r.raw.as_array())
            ]
            writer.writerow([r.method, f"{r.rc:.4f}"] + cells)
        return buf.getvalue()

    def console_table(self) -> str:
        head = ["Method", "RC"] + [f"{n} (value)" for n in tpe.WEIGHT_NAMES]
        body = [
            [r.method, f"{r.rc:.4f}"]
            + [f"{w:.4f} ({v:.4f})" for w, v in zip(r.weights.as_array(), r.raw.as_array())]
            for r in self.rows
        ]
        widths = [max(len(str(c)) for c in col) for col in zip(head, *body)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)) for line in [head] + body]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + f"\naggregation: {self.aggregation}\n"

    @classmethod
    def from_dict(cls, data: dict) -> CapacityReport:
        rows = [
            MethodResult(
                r["method"],
                tpe.WeightVector(**r["weights"]),
                MetricBundle(**r["raw"]),
                NormalizedBundle(**r["normalized"]),
                r["rc"],
                r["best_trial"],
                r["perplexity"],
                r["embedding_params"],
            )
            for r in data["rows"]
        ]
        return cls(rows, data["aggregation"], data["seeds"], data["config"],
                   data.get("normalization_shifts", {}))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _embedding_params(config: PipelineConfig, method: Method, seeds: dict) -> dict:
    params = dict(config.method_params.get(method.value, {}))
    if method is Method.AUTOENCODER and "seed" not in params:
        params["seed"] = seeds["embed"]
    return params


def optimize_weights(
    normalized: NormalizedBundle, mode: str, config: tpe.TpeConfig
) -> tpe.OptimizationResult:
    values = normalized.as_array()
    return tpe.optimize(lambda w: rc_score(w, values, mode), config)


def evaluate_all(
    dataset: LabeledDataset,
    config: PipelineConfig = PipelineConfig(),
    precomputed: dict[str, EmbeddingMatrix] | None = None,
) -> CapacityReport:
    """Embed, score, normalize across methods, then search weights per method.

    Rows come back sorted by method name.
    """
    seeds = config.seeds()
    methods = sorted({Method.parse(m) for m in config.methods}, key=lambda m: m.value)
    details: dict[str, BundleDetail] = {}
    params_used: dict[str, dict] = {}
    for method in methods:
        name = method.value
        if precomputed and name in precomputed:
            emb = precomputed[name]
        else:
            emb = _stage(
                name, "embed", embeddings.embed_dataset, dataset, method,
                _embedding_params(config, method, seeds),
            )
        params_used[name] = emb.params
        details[name] = compute_bundle(dataset, emb, config)

    normalized, shifts = normalize({m: d.bundle for m, d in details.items()})
    tcfg = replace(config.tpe, seed=seeds["optimize"])
    rows, histories = [], {}
    for name in details:
        result = _stage(name, "optimize", optimize_weights, normalized[name], config.aggregation, tcfg)
        rc = rc_score(result.best_weights, normalized[name], config.aggregation)
        rows.append(
            MethodResult(
                name, result.best_weights, details[name].bundle, normalized[name], rc,
                result.best_index, details[name].perplexity, params_used[name],
            )
        )
        histories[name] = result
    series = {
        name: {
            "agreement": d.agreement_series,
            "trustworthiness": d.trust_series,
            "tsne": d.tsne_points,
        }
        for name, d in details.items()
    }
    return CapacityReport(rows, config.aggregation, seeds, config.to_dict(), shifts, histories, series)


# -- audit of published table rows -----------------------------------------

AUDIT_COLUMNS = (
    "table", "method", "rc",
    "w_class", "v_class", "w_clust", "v_clust", "w_neighb", "v_neighb", "w_trust", "v_trust",
)


@dataclass(frozen=True)
class TableRow:
    table: str
    method: str
    printed_rc: float
    weights: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class AuditResult:
    row: TableRow
    literal_raw: float
    additive_raw: float
    literal_normalized: float
    additive_normalized: float
    weight_sum: float

    def deltas(self) -> dict[str, float]:
        return {
            "literal_raw": self.literal_raw - self.row.printed_rc,
            "additive_raw": self.additive_raw - self.row.printed_rc,
            "literal_normalized": self.literal_normalized - self.row.printed_rc,
            "additive_normalized": self.additive_normalized - self.row.printed_rc,
        }


def parse_table_csv(text: str) -> list[TableRow]:
    """Rows with columns ``table,method,rc`` then weight/value pairs per metric."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CapacityError("audit CSV is empty")
    missing = [c for c in AUDIT_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise CapacityError(f"audit CSV lacks columns: {', '.join(missing)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            w = np.array([float(rec[f"w_{m}"]) for m in ("class", "clust", "neighb", "trust")])
            v = np.array([float(rec[f"v_{m}"]) for m in ("class", "clust", "neighb", "trust")])
            rows.append(TableRow(rec["table"], rec["method"], float(rec["rc"]), w, v))
        except (TypeError, ValueError) as exc:
            raise CapacityError(f"line {lineno}: malformed row ({exc})") from None
    if not rows:
        raise CapacityError("audit CSV has no data rows")
    return rows


def audit_rows(rows: list[TableRow], weight_tol: float = 0.01) -> list[AuditResult]:
    """Recompute each row's RC in both modes, on raw and on max-normalized values.

    Max-normalization is taken within each table.
    """
    maxima = {}
    for r in rows:
        maxima[r.table] = np.maximum(maxima.get(r.table, r.values), r.values)
    out = []
    for r in rows:
        total = float(r.weights.sum())
        if abs(total - 1.0) > weight_tol:
            warnings.warn(
                f"{r.table}/{r.method}: weights sum to {total:.4f}, not 1", UserWarning, stacklevel=2
            )
        norm = r.values / maxima[r.table]
        out.append(
            AuditResult(
                r,
                rc_score(r.weights, r.values, AS_WRITTEN),
                rc_score(r.weights, r.values, ADDITIVE),
                rc_score(r.weights, norm, AS_WRITTEN),
                rc_score(r.weights, norm, ADDITIVE),
                total,
            )
        )
    return out


def format_audit(results: list[AuditResult]) -> str:
    head = [
        "table", "method", "printed", "literal", "d_literal", "additive", "d_additive",
        "literal_norm", "d_literal_norm", "additive_norm", "d_additive_norm",
    ]
    body = []
    for a in results:
        d = a.deltas()
        body.append(
            [a.row.table, a.row.method, f"{a.row.printed_rc:.4f}"]
            + [
                f"{x:+.4f}" if i % 2 else f"{x:.4f}"
                for i, x in enumerate(
                    [
                        a.literal_raw, d["literal_raw"], a.additive_raw, d["additive_raw"],
                        a.literal_normalized, d["literal_normalized"],
                        a.additive_normalized, d["additive_normalized"],
                    ]
                )
            ]
        )
    widths = [max(len(c) for c in col) for col in zip(head, *body)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in [head] + body]
    return "\n".join(lines) + "\n"
