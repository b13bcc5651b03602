"""Command-line entry point: ``repcap <subcommand> [options]``.

Every tunable lives in a sectioned INI file (``--config``); command-line
flags override file values, which override built-in defaults. Flags are
named ``--<section>-<key>`` with underscores turned into hyphens.

Output layout of ``capacity --out DIR``::

    DIR/report.json                 full report with seeds and configuration
    DIR/report.csv                  one row per method, "weight (value)" cells
    DIR/embeddings/<method>.csv     embedding matrices
    DIR/tsne/<method>.csv           2-D coordinates
    DIR/curves/<method>_agreement.csv, <method>_trustworthiness.csv
    DIR/history/<method>.csv        every weight-search trial
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import warnings
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import BACKEND, __version__, capacity, dataset, embeddings, metrics, neighborhood, tpe, tsne
from .embeddings import Method

EXIT_OK = 0
EXIT_INPUT = 1
STAGE_EXIT = {
    "embed": 3,
    "classify": 4,
    "cluster": 5,
    "tsne": 6,
    "neighborhood": 7,
    "optimize": 8,
}

AUTO = "auto"


@dataclass(frozen=True)
class Field:
    section: str
    key: str
    kind: type
    default: object
    help: str
    auto: bool = False  # accepts "auto" meaning "derive from the data"

    @property
    def flag(self) -> str:
        return f"--{self.section}-{self.key}".replace("_", "-")

    @property
    def dest(self) -> str:
        return f"{self.section}__{self.key}"

    def parse(self, text):
        if text is None:
            return None
        if isinstance(text, str):
            text = text.strip()
            if self.auto and text.lower() == AUTO:
                return None
            if self.kind is bool:
                low = text.lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(f"{self.section}.{self.key}: expected a boolean, got {text!r}")
            if self.kind is tuple:
                return tuple(p.strip() for p in text.split(",") if p.strip())
        return self.kind(text)

    def show_default(self) -> str:
        if self.default is None:
            return AUTO if self.auto else "required"
        if isinstance(self.default, tuple):
            return ",".join(self.default)
        return str(self.default).lower() if isinstance(self.default, bool) else str(self.default)


_TS = tsne.TsneConfig()
_TP = tpe.TpeConfig()
_AE = embeddings.DEFAULT_PARAMS[Method.AUTOENCODER]

FIELDS = (
    Field("run", "seed", int, 0, "master seed; per-stage seeds derive from it"),
    Field("run", "aggregation", str, capacity.AS_WRITTEN, "as-written or additive"),
    Field("run", "methods", tuple, tuple(m.value for m in embeddings.CORE_METHODS),
          "comma-separated embedding methods"),
    Field("run", "out", str, "repcap_out", "output directory"),
    Field("data", "fasta", str, None, "FASTA file"),
    Field("data", "labels", str, None, "labels CSV with header id,label"),
    Field("data", "alphabet", str, "protein", "protein, dna, or an explicit symbol string"),
    Field("data", "drop_invalid", bool, False, "drop records with characters outside the alphabet"),
    Field("synth", "classes", int, 3, "number of classes"),
    Field("synth", "per_class", int, 100, "sequences per class"),
    Field("synth", "length", int, 60, "sequence length"),
    Field("synth", "mutation_rate", float, 0.1, "per-position mutation probability"),
    Field("synth", "alphabet", str, "dna", "alphabet of generated sequences"),
    Field("spike2vec", "k", int, 3, "k-mer length"),
    Field("spaced_kmers", "k", int, 4, "k-mer length kept from each window"),
    Field("spaced_kmers", "g", int, 9, "window length"),
    Field("pwm2vec", "k", int, 9, "k-mer length"),
    Field("pwm2vec", "pseudocount", float, 0.1, "PWM pseudocount"),
    Field("pwm2vec", "target_len", int, None, "output length (auto: median length - k + 1)", True),
    Field("autoencoder", "z", int, _AE["z"], "bottleneck width"),
    Field("autoencoder", "hidden", int, None, "hidden width (auto: max(2z, 32))", True),
    Field("autoencoder", "epochs", int, _AE["epochs"], "training epochs"),
    Field("autoencoder", "batch_size", int, _AE["batch_size"], "mini-batch size"),
    Field("autoencoder", "lr", float, _AE["lr"], "Adam learning rate"),
    Field("autoencoder", "activation", str, _AE["activation"], "tanh, relu or identity"),
    Field("autoencoder", "target_len", int, None, "one-hot length (auto: longest record)", True),
    Field("classify", "train_fraction", float, 0.7, "stratified train share"),
    Field("classify", "l2", float, 1e-4, "L2 penalty on non-bias weights"),
    Field("classify", "epochs", int, 500, "full-batch gradient steps"),
    Field("classify", "lr", float, 0.1, "initial learning rate"),
    Field("cluster", "restarts", int, 10, "k-means++ restarts"),
    Field("cluster", "max_iter", int, 300, "Lloyd iterations per restart"),
    Field("tsne", "perplexity", float, _TS.perplexity, "target perplexity (capped at (n-1)/3)"),
    Field("tsne", "iterations", int, _TS.iterations, "gradient steps"),
    Field("tsne", "learning_rate", float, _TS.learning_rate, "step size"),
    Field("tsne", "momentum_initial", float, _TS.momentum_initial, "momentum before the switch"),
    Field("tsne", "momentum_final", float, _TS.momentum_final, "momentum after the switch"),
    Field("tsne", "momentum_switch", int, _TS.momentum_switch, "iteration of the momentum switch"),
    Field("tsne", "exaggeration", float, _TS.exaggeration, "early exaggeration factor"),
    Field("tsne", "exaggeration_iters", int, _TS.exaggeration_iters, "iterations with exaggeration"),
    Field("tsne", "gradient", str, _TS.gradient, "standard or literal"),
    Field("tsne", "init_scale", float, _TS.init_scale, "std of the random initial layout"),
    Field("neighborhood", "k_max", int, 100, "largest K in the sweeps"),
    Field("neighborhood", "trust_formula", str, "standard", "standard or literal"),
    Field("tpe", "n_trials", int, _TP.n_trials, "objective evaluations per method"),
    Field("tpe", "n_startup", int, _TP.n_startup, "uniform random trials before modelling"),
    Field("tpe", "gamma", float, _TP.gamma, "good-set quantile"),
    Field("tpe", "max_good", int, _TP.max_good, "cap on the good-set size"),
    Field("tpe", "n_candidates", int, _TP.n_candidates, "candidates drawn per dimension"),
    Field("tpe", "min_bandwidth", float, _TP.min_bandwidth, "kernel bandwidth floor"),
    Field("tpe", "bandwidth", str, _TP.bandwidth, "nearest or widest-gap"),
)

METHOD_SECTIONS = {m.value for m in Method} & {f.section for f in FIELDS}

COMMAND_SECTIONS = {
    "synth": ("run", "synth"),
    "validate": ("data",),
    "embed": ("run", "data") + tuple(sorted(METHOD_SECTIONS)),
    "tsne": ("run", "tsne"),
    "metrics": ("run", "data", "classify", "cluster", "tsne", "neighborhood"),
    "capacity": ("run", "data", "synth") + tuple(sorted(METHOD_SECTIONS))
    + ("classify", "cluster", "tsne", "neighborhood", "tpe"),
}


class InputError(Exception):
    pass


class Settings:
    """Resolved configuration: flag, else config file, else default."""

    def __init__(self, args: argparse.Namespace, sections: tuple[str, ...]):
        parser = configparser.ConfigParser()
        path = getattr(args, "config", None)
        if path:
            if not os.path.exists(path):
                raise InputError(f"config file not found: {path}")
            parser.read(path, encoding="utf-8")
        known = {(f.section, f.key) for f in FIELDS}
        for sect in parser.sections():
            for key in parser[sect]:
                if (sect, key) not in known:
                    raise InputError(f"unknown config key [{sect}] {key}")
        self.values = {}
        for f in FIELDS:
            if f.section not in sections:
                continue
            flag_value = getattr(args, f.dest, None)
            try:
                if flag_value is not None:
                    value = f.parse(flag_value)
                elif parser.has_option(f.section, f.key):
                    value = f.parse(parser.get(f.section, f.key))
                else:
                    value = f.default
            except ValueError as exc:
                raise InputError(f"bad value for {f.section}.{f.key}: {exc}") from None
            self.values[(f.section, f.key)] = value

    def __getitem__(self, item: str):
        section, key = item.split(".")
        return self.values[(section, key)]

    def section(self, name: str) -> dict:
        return {k: v for (s, k), v in self.values.items() if s == name}


# -- builders ---------------------------------------------------------------


def _alphabet(name: str) -> dataset.Alphabet:
    try:
        return dataset.Alphabet.from_name(name)
    except (KeyError, ValueError):
        return dataset.Alphabet.custom(name)


def _load(cfg: Settings) -> dataset.LabeledDataset:
    fasta, labels = cfg["data.fasta"], cfg["data.labels"]
    if not fasta or not labels:
        raise InputError("both --data-fasta and --data-labels are required")
    for path in (fasta, labels):
        if not os.path.exists(path):
            raise InputError(f"file not found: {path}")
    return dataset.load_dataset(fasta, labels, _alphabet(cfg["data.alphabet"]), cfg["data.drop_invalid"])


def _synthesize(cfg: Settings, seed: int) -> dataset.LabeledDataset:
    return dataset.synthesize_dataset(
        cfg["synth.classes"], cfg["synth.per_class"], cfg["synth.length"],
        _alphabet(cfg["synth.alphabet"]), cfg["synth.mutation_rate"], seed,
    )


def _method_params(cfg: Settings, method: Method) -> dict:
    if method.value not in METHOD_SECTIONS:
        return {}
    return cfg.section(method.value)


def _tsne_config(cfg: Settings, seed: int) -> tsne.TsneConfig:
    return tsne.TsneConfig(**cfg.section("tsne"), seed=seed)


def _tpe_config(cfg: Settings) -> tpe.TpeConfig:
    return tpe.TpeConfig(**cfg.section("tpe"))


def _pipeline(cfg: Settings) -> capacity.PipelineConfig:
    methods = tuple(Method.parse(m).value for m in cfg["run.methods"])
    return capacity.PipelineConfig(
        methods=methods,
        method_params={m: _method_params(cfg, Method(m)) for m in methods},
        train_fraction=cfg["classify.train_fraction"],
        logreg_l2=cfg["classify.l2"],
        logreg_epochs=cfg["classify.epochs"],
        logreg_lr=cfg["classify.lr"],
        kmeans_restarts=cfg["cluster.restarts"],
        kmeans_max_iter=cfg["cluster.max_iter"],
        tsne=_tsne_config(cfg, 0),
        sweep_k_max=cfg["neighborhood.k_max"],
        trust_formula=cfg["neighborhood.trust_formula"],
        tpe=_tpe_config(cfg),
        aggregation=cfg["run.aggregation"],
        seed=cfg["run.seed"],
    )


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _series_csv(values: np.ndarray) -> str:
    lines = ["K,value"] + [f"{k},{float(v)!r}" for k, v in enumerate(values, start=1)]
    return "\n".join(lines) + "\n"


# -- subcommands ------------------------------------------------------------


def cmd_synth(args, cfg: Settings) -> int:
    ds = _synthesize(cfg, cfg["run.seed"])
    out = cfg["run.out"]
    fasta, labels = os.path.join(out, "sequences.fasta"), os.path.join(out, "labels.csv")
    os.makedirs(out, exist_ok=True)
    dataset.save_dataset(ds, fasta, labels)
    print(f"wrote {len(ds)} sequences in {len(ds.classes)} classes to {fasta} and {labels}")
    return EXIT_OK


def cmd_validate(args, cfg: Settings) -> int:
    ds = _load(cfg)
    lengths = ds.lengths
    counts = {c: int(n) for c, n in zip(ds.classes, np.bincount(ds.label_indices))}
    print(f"records: {len(ds)}")
    print(f"alphabet: {ds.alphabet.name} ({len(ds.alphabet)} symbols)")
    print(f"lengths: min {lengths.min()}, median {int(np.median(lengths))}, max {lengths.max()}")
    print("classes: " + ", ".join(f"{c}={n}" for c, n in counts.items()))
    return EXIT_OK


def cmd_embed(args, cfg: Settings) -> int:
    method = Method.parse(args.method)
    ds = _load(cfg)
    params = _method_params(cfg, method)
    for key in ("k", "g"):
        value = getattr(args, key)
        if value is not None:
            if key not in embeddings.DEFAULT_PARAMS[method]:
                raise InputError(f"--{key} does not apply to {method.value}")
            params[key] = value
    if method is Method.AUTOENCODER:
        params["seed"] = capacity.derive_seed(cfg["run.seed"], "embed")
    try:
        emb = embeddings.embed_dataset(ds, method, params)
    except Exception as exc:
        raise capacity.StageError(method.value, "embed", exc) from exc
    out = cfg["run.out"]
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, method.value)
    emb.save(stem + ".csv", stem + ".bin")
    _write(stem + ".json", json.dumps(emb.params, indent=2, sort_keys=True) + "\n")
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embedding to {stem}.csv")
    return EXIT_OK


def cmd_tsne(args, cfg: Settings) -> int:
    emb = embeddings.read_embedding_csv(args.embedding)
    config = _tsne_config(cfg, capacity.derive_seed(cfg["run.seed"], "tsne"))
    config = replace(config, perplexity=capacity.effective_perplexity(config.perplexity, emb.shape[0]))
    try:
        low = tsne.run_tsne(emb.values, config)
    except Exception as exc:
        raise capacity.StageError(emb.method.value, "tsne", exc) from exc
    out = cfg["run.out"]
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, f"{emb.method.value}_tsne")
    low.save(stem + ".csv", stem + ".json", emb.row_ids)
    print(f"wrote {stem}.csv (KL {low.final_kl:.4f})")
    return EXIT_OK


def cmd_metrics(args, cfg: Settings) -> int:
    ds = _load(cfg)
    emb = embeddings.read_embedding_csv(args.embedding)
    if emb.row_ids != ds.ids:
        raise InputError("embedding row ids do not match the dataset order")
    config = capacity.PipelineConfig(
        methods=(emb.method.value,),
        train_fraction=cfg["classify.train_fraction"],
        logreg_l2=cfg["classify.l2"],
        logreg_epochs=cfg["classify.epochs"],
        logreg_lr=cfg["classify.lr"],
        kmeans_restarts=cfg["cluster.restarts"],
        kmeans_max_iter=cfg["cluster.max_iter"],
        tsne=_tsne_config(cfg, 0),
        sweep_k_max=cfg["neighborhood.k_max"],
        trust_formula=cfg["neighborhood.trust_formula"],
        seed=cfg["run.seed"],
    )
    detail = capacity.compute_bundle(ds, emb, config)
    out = cfg["run.out"]
    name = emb.method.value
    _write(
        os.path.join(out, f"{name}_metrics.json"),
        json.dumps(
            {"metrics": detail.bundle.as_dict(), "perplexity": detail.perplexity,
             "seeds": config.seeds()},
            indent=2, sort_keys=True,
        ) + "\n",
    )
    _write(os.path.join(out, f"{name}_agreement.csv"), _series_csv(detail.agreement_series))
    _write(os.path.join(out, f"{name}_trustworthiness.csv"), _series_csv(detail.trust_series))
    for key, value in detail.bundle.as_dict().items():
        print(f"{key}: {value:.6f}")
    return EXIT_OK


def cmd_capacity(args, cfg: Settings) -> int:
    config = _pipeline(cfg)
    seeds = config.seeds()
    if cfg["data.fasta"] or cfg["data.labels"]:
        ds = _load(cfg)
        source = {"fasta": cfg["data.fasta"], "labels": cfg["data.labels"]}
    elif args.synthetic:
        synth_seed = capacity.derive_seed(cfg["run.seed"], "synth")
        ds = _synthesize(cfg, synth_seed)
        source = {"synthetic": cfg.section("synth"), "seed": synth_seed}
    else:
        raise InputError("give --data-fasta/--data-labels or --synthetic")

    out = cfg["run.out"]
    pre = {}
    for m in config.methods:
        method = Method(m)
        params = _method_params(cfg, method)
        if method is Method.AUTOENCODER:
            params["seed"] = seeds["embed"]
        try:
            pre[m] = embeddings.embed_dataset(ds, method, params)
        except Exception as exc:
            raise capacity.StageError(m, "embed", exc) from exc
    report = capacity.evaluate_all(ds, config, precomputed=pre)
    data = report.to_dict()
    data["dataset"] = {"records": len(ds), "classes": list(ds.classes), **source}
    _write(os.path.join(out, "report.json"), json.dumps(data, indent=2, sort_keys=True) + "\n")
    _write(os.path.join(out, "report.csv"), report.to_csv())
    for name, emb in pre.items():
        _write(os.path.join(out, "embeddings", f"{name}.csv"), emb.to_csv())
    for name, series in report.series.items():
        _write(os.path.join(out, "curves", f"{name}_agreement.csv"), _series_csv(series["agreement"]))
        _write(
            os.path.join(out, "curves", f"{name}_trustworthiness.csv"),
            _series_csv(series["trustworthiness"]),
        )
    for name, hist in report.histories.items():
        _write(os.path.join(out, "history", f"{name}.csv"), hist.history_csv())
    for name, series in report.series.items():
        low = tsne.LowDimEmbedding(series["tsne"], None, float("nan"), float("nan"))
        _write(os.path.join(out, "tsne", f"{name}.csv"), low.to_csv(ds.ids))
    print(report.console_table(), end="")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_audit_tables(args, cfg: Settings) -> int:
    if args.csv:
        if not os.path.exists(args.csv):
            raise InputError(f"file not found: {args.csv}")
        with open(args.csv, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = resources.files("repcap").joinpath("data/reported_tables.csv").read_text("utf-8")
    rows = capacity.parse_table_csv(text)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = capacity.audit_rows(rows)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(capacity.format_audit(results), end="")
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic labeled dataset"),
    "validate": (cmd_validate, "check a FASTA + labels pair and summarize it"),
    "embed": (cmd_embed, "compute one embedding matrix"),
    "tsne": (cmd_tsne, "embed an embedding CSV in 2-D"),
    "metrics": (cmd_metrics, "compute the four quality metrics for one embedding"),
    "capacity": (cmd_capacity, "full pipeline: metrics, normalization, weight search, report"),
    "audit-tables": (cmd_audit_tables, "recompute published table rows under each aggregation"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repcap", description="Representation-capacity scoring for sequence embeddings."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        sections = COMMAND_SECTIONS.get(name, ())
        if sections:
            p.add_argument("--config", help="INI file with [section] key = value entries")
        for section in sections:
            group = p.add_argument_group(f"[{section}]")
            for f in FIELDS:
                if f.section == section:
                    group.add_argument(
                        f.flag, dest=f.dest, default=None, metavar=f.kind.__name__.upper(),
                        help=f"{f.help} (default: {f.show_default()})",
                    )
        if name == "audit-tables":
            p.add_argument("--csv", default=None,
                           help="table rows CSV (default: the bundled published rows)")
        else:
            _shortcuts(p, name)
    return parser


def _shortcuts(p: argparse.ArgumentParser, name: str) -> None:
    """Short aliases for the most common fields."""
    short = p.add_argument_group("shortcuts")
    if name != "validate":
        short.add_argument("--seed", dest="run__seed", default=argparse.SUPPRESS,
                           help="alias of --run-seed")
        short.add_argument("--out", dest="run__out", default=argparse.SUPPRESS,
                           help="alias of --run-out")
    if name in ("validate", "embed", "metrics", "capacity"):
        short.add_argument("--fasta", dest="data__fasta", default=argparse.SUPPRESS,
                           help="alias of --data-fasta")
        short.add_argument("--labels", dest="data__labels", default=argparse.SUPPRESS,
                           help="alias of --data-labels")
        short.add_argument("--alphabet", dest="data__alphabet", default=argparse.SUPPRESS,
                           help="alias of --data-alphabet")
        short.add_argument("--drop-invalid", dest="data__drop_invalid", action="store_const",
                           const="true", default=argparse.SUPPRESS,
                           help="alias of --data-drop-invalid true")
    if name == "capacity":
        short.add_argument("--aggregation", dest="run__aggregation", default=argparse.SUPPRESS,
                           choices=capacity.MODES, help="alias of --run-aggregation")
        short.add_argument("--methods", dest="run__methods", default=argparse.SUPPRESS,
                           help="alias of --run-methods")
        short.add_argument("--synthetic", action="store_true",
                           help="synthesize the dataset from the [synth] section")
    if name == "embed":
        p.add_argument("--method", required=True, help="embedding method")
        p.add_argument("--k", type=int, default=None, help="k-mer length override")
        p.add_argument("--g", type=int, default=None, help="window length override")
    if name in ("tsne", "metrics"):
        p.add_argument("--embedding", required=True, help="embedding CSV written by `embed`")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = Settings(args, COMMAND_SECTIONS.get(args.command, ()))
        return fn(args, cfg)
    except capacity.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STAGE_EXIT.get(exc.stage, EXIT_INPUT)
    except (InputError, dataset.DatasetError, embeddings.EmbeddingError, capacity.CapacityError,
            metrics.MetricError, neighborhood.NeighborhoodError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
