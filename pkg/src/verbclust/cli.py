"""Command-line pipeline driver.

Five subcommands run the pipeline stage by stage — ``type``, ``train``,
``cluster``, ``featurize``, ``evaluate`` — all reading one JSON config.
Flags override config keys; a single master seed fans out to per-stage
seeds by stable hashing of the stage name, so any stage can be rerun in
isolation and reproduce its outputs byte for byte. All intermediates are
flat text files under the configured output directory.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import cluster as clustering
from . import corpus, embedding, evaluate
from .errors import DataError, NumericError
from .featurize import (
    SvoBaselineFeaturizer,
    featurize as featurize_kernels,
    load_features,
    load_kernels,
    oov_feature_id,
    save_features,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flags or a malformed/inconsistent config file."""


_PATH_KEYS = frozenset({
    "triples", "category_map", "sense_inventory", "thesaurus", "kernels",
    "labels", "word_vectors", "output_dir",
    # optional overrides for stage intermediates
    "typed_triples", "associations", "embeddings", "clusters", "features",
})

_SECTION_DEFAULTS = {
    "typing": {"tau": 0.0, "min_signature_count": 2, "min_count": 1},
    "train": {"dimension": 300, "epochs": 100, "margin": 1.0,
              "learning_rate": 0.01, "batch_size": 512, "workers": 1},
    "cluster": {"global_k": 10, "beta": 1.0, "sigma": "median",
                "default_senses": 2},
    "featurize": {"mode": "clusters", "baseline_k": 10},
    "evaluate": {"folds": 10, "lambda": 1.0, "binary": True},
}

_MODES = ("clusters", "svo_baseline")


def _check_value(section, key, value, default):
    """Type-check one config entry against its default's type."""
    where = f"config key {section}.{key}"
    if key == "sigma":
        if value == "median":
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise UsageError(f"{where} must be 'median' or a number, got {value!r}")
    if key == "mode":
        if value not in _MODES:
            raise UsageError(f"{where} must be one of {_MODES}, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"{where} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise UsageError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise UsageError(f"{where} must be a number, got {value!r}")
        return float(value)
    return value


@dataclass
class PipelineConfig:
    """The effective pipeline configuration (file merged with defaults)."""

    seed: int = 0
    paths: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        known = {"seed", "paths"} | set(_SECTION_DEFAULTS)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise UsageError(f"config key seed must be an integer, got {seed!r}")
        paths = raw.get("paths", {})
        if not isinstance(paths, dict):
            raise UsageError("config key paths must be an object")
        bad = sorted(set(paths) - _PATH_KEYS)
        if bad:
            raise UsageError(f"unknown path key(s): {', '.join(bad)}")
        for key, value in paths.items():
            if not isinstance(value, str) or not value:
                raise UsageError(f"path {key} must be a nonempty string")
        sections = {}
        for name, defaults in _SECTION_DEFAULTS.items():
            given = raw.get(name, {})
            if not isinstance(given, dict):
                raise UsageError(f"config key {name} must be an object")
            extra = sorted(set(given) - set(defaults))
            if extra:
                raise UsageError(f"unknown {name} key(s): {', '.join(extra)}")
            merged = dict(defaults)
            for key, value in given.items():
                merged[key] = _check_value(name, key, value, defaults[key])
            sections[name] = merged
        return cls(seed=seed, paths=dict(paths), sections=sections)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "paths": dict(self.paths),
                **{name: dict(values) for name, values in self.sections.items()}}

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)

    def output_dir(self) -> Path:
        if "output_dir" not in self.paths:
            raise UsageError("config must set paths.output_dir")
        out = Path(self.paths["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        return out

    def input_path(self, key: str) -> Path:
        """A required input path; it must be configured and exist."""
        if key not in self.paths:
            raise DataError(f"config sets no paths.{key}")
        path = Path(self.paths[key])
        if not path.is_file():
            raise DataError(f"missing input path: {path} (paths.{key})")
        return path

    def optional_path(self, key: str) -> Path | None:
        """An optional input; when configured it must exist."""
        if key not in self.paths:
            return None
        path = Path(self.paths[key])
        if not path.is_file():
            raise DataError(f"missing input path: {path} (paths.{key})")
        return path

    def intermediate(self, key: str, default_name: str, must_exist: bool) -> Path:
        """A stage artifact: explicit path override, else output_dir/name."""
        if key in self.paths:
            path = Path(self.paths[key])
        else:
            path = self.output_dir() / default_name
        if must_exist and not path.is_file():
            raise DataError(f"missing input path: {path} (paths.{key})")
        return path

    def write_echo(self) -> None:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        (self.output_dir() / "config_echo.json").write_text(text, encoding="utf-8")


def _write_parse_errors(errors, path) -> None:
    lines = ["# line\tmessage"]
    lines += [f"{err.line}\t{err.message}" for err in errors]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_type(config: PipelineConfig) -> None:
    """Type the raw triples: associations, typed triples, signature counts."""
    triples_path = config.input_path("triples")
    cmap_path = config.input_path("category_map")
    out = config.output_dir()
    config.write_echo()
    opts = config.sections["typing"]
    triples, errors = corpus.load_triples(triples_path, min_count=opts["min_count"])
    _write_parse_errors(errors, out / "parse_errors.tsv")
    if errors:
        logger.warning("skipped %d malformed triple line(s)", len(errors))
    if not triples:
        logger.warning("no triples survived loading; writing empty outputs")
        corpus.save_typed_triples([], out / "typed_triples.tsv")
        corpus.save_signature_counts({}, out / "signatures.tsv")
        corpus.AssociationTable().save(out / "associations.tsv")
        return
    category_map = corpus.load_category_map(cmap_path)
    assoc = corpus.resnik_associations(triples, category_map)
    typed = corpus.build_typed_triples(triples, category_map, assoc,
                                       tau=opts["tau"],
                                       min_sig_count=opts["min_signature_count"])
    assoc.save(out / "associations.tsv")
    corpus.save_typed_triples(typed, out / "typed_triples.tsv")
    corpus.save_signature_counts(corpus.signature_counts(typed),
                                 out / "signatures.tsv")


def cmd_train(config: PipelineConfig) -> None:
    """Learn translation embeddings from the typed triples."""
    typed_path = config.intermediate("typed_triples", "typed_triples.tsv",
                                     must_exist=True)
    out = config.output_dir()
    config.write_echo()
    opts = config.sections["train"]
    typed = corpus.load_typed_triples(typed_path)
    transitive, intransitive = corpus.split_for_training(typed)
    train_config = embedding.TrainConfig(
        dimension=opts["dimension"], epochs=opts["epochs"],
        margin=opts["margin"], learning_rate=opts["learning_rate"],
        batch_size=opts["batch_size"], seed=config.stage_seed("train"))
    table, trace = embedding.train_embeddings(transitive, intransitive,
                                              train_config,
                                              workers=opts["workers"])
    table.save(out / "embeddings.txt")
    lines = ["# epoch\tmean_loss"]
    lines += [f"{epoch}\t{loss!r}" for epoch, loss in enumerate(trace)]
    (out / "loss_trace.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_cluster(config: PipelineConfig) -> None:
    """Build per-verb argument clusters, then global predicate clusters."""
    table_path = config.intermediate("embeddings", "embeddings.txt",
                                     must_exist=True)
    inventory_path = config.optional_path("sense_inventory")
    thesaurus_path = config.optional_path("thesaurus")
    out = config.output_dir()
    config.write_echo()
    opts = config.sections["cluster"]
    table = embedding.EmbeddingTable.load(table_path)
    if inventory_path is not None:
        inventory = clustering.SenseInventory.load(
            inventory_path, default_k=opts["default_senses"])
    else:
        inventory = clustering.SenseInventory(default_k=opts["default_senses"])
    thesaurus = (clustering.Thesaurus.load(thesaurus_path)
                 if thesaurus_path is not None else clustering.Thesaurus())
    seed = config.stage_seed("cluster")
    maps = clustering.verb_argument_clusters(table, inventory, seed=seed)
    maps = clustering.predicate_clusters(maps, thesaurus, k=opts["global_k"],
                                         beta=opts["beta"],
                                         sigma=opts["sigma"], seed=seed)
    clustering.save_cluster_maps(maps, out / "clusters.tsv",
                                 centroid_path=out / "centroids.tsv")


def cmd_featurize(config: PipelineConfig) -> None:
    """Turn message kernels into feature vectors."""
    kernels_path = config.input_path("kernels")
    out = config.output_dir()
    config.write_echo()
    opts = config.sections["featurize"]
    kernels, errors = load_kernels(kernels_path)
    _write_parse_errors(errors, out / "kernel_errors.tsv")
    if errors:
        logger.warning("skipped %d malformed kernel line(s)", len(errors))
    labels_path = config.optional_path("labels")
    message_ids = (list(evaluate.load_labels(labels_path))
                   if labels_path is not None else None)
    if opts["mode"] == "clusters":
        category_map = corpus.load_category_map(config.input_path("category_map"))
        assoc = corpus.AssociationTable.load(
            config.intermediate("associations", "associations.tsv",
                                must_exist=True))
        maps = clustering.load_cluster_maps(
            config.intermediate("clusters", "clusters.tsv", must_exist=True))
        vectors = featurize_kernels(kernels, category_map, assoc, maps,
                                    message_ids=message_ids)
        n_features = oov_feature_id(maps) + 1
    else:
        table = embedding.EmbeddingTable.load(config.input_path("word_vectors"))
        model = SvoBaselineFeaturizer(
            table, k=opts["baseline_k"],
            seed=config.stage_seed("featurize")).fit(kernels)
        vectors = model.transform(kernels, message_ids=message_ids)
        n_features = model.n_features
    save_features(vectors, n_features, out / "features.tsv")


def cmd_evaluate(config: PipelineConfig) -> None:
    """Cross-validate the classifier on the featurized messages."""
    features_path = config.intermediate("features", "features.tsv",
                                        must_exist=True)
    labels_path = config.input_path("labels")
    out = config.output_dir()
    config.write_echo()
    opts = config.sections["evaluate"]
    vectors, n_features = load_features(features_path)
    labels = evaluate.load_labels(labels_path)
    instances = evaluate.build_instances(vectors, labels)
    report = evaluate.cross_validate(instances, n_folds=opts["folds"],
                                     lam=opts["lambda"],
                                     seed=config.stage_seed("evaluate"),
                                     binary=opts["binary"],
                                     n_features=n_features)
    evaluate.save_report(report, out / "report.tsv")
    evaluate.save_report_json(report, out / "report.json",
                              config_echo=config.to_dict())
    print(f"mean F1 over {opts['folds']} folds: {report.mean_f1:.4f}")


_COMMANDS = {
    "type": cmd_type,
    "train": cmd_train,
    "cluster": cmd_cluster,
    "featurize": cmd_featurize,
    "evaluate": cmd_evaluate,
}

# flag destination -> (config section, key); None section means a path
_OVERRIDES = {
    "triples": (None, "triples"),
    "category_map": (None, "category_map"),
    "kernels": (None, "kernels"),
    "labels": (None, "labels"),
    "output_dir": (None, "output_dir"),
    "tau": ("typing", "tau"),
    "min_signature_count": ("typing", "min_signature_count"),
    "dimension": ("train", "dimension"),
    "epochs": ("train", "epochs"),
    "workers": ("train", "workers"),
    "global_k": ("cluster", "global_k"),
    "beta": ("cluster", "beta"),
    "mode": ("featurize", "mode"),
    "baseline_k": ("featurize", "baseline_k"),
    "folds": ("evaluate", "folds"),
    "lam": ("evaluate", "lambda"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True,
                        help="JSON pipeline configuration")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--output-dir", dest="output_dir",
                        help="override paths.output_dir")
    common.add_argument("--deterministic", action="store_true",
                        help="force single-worker training")
    parser = _Parser(prog="verbclust",
                     description="Typed-verb predicate clustering pipeline")
    commands = parser.add_subparsers(dest="command", required=True,
                                     metavar="command")
    spec = {
        "type": ("type raw triples and fit associations", [
            ("--triples", dict(dest="triples")),
            ("--category-map", dict(dest="category_map")),
            ("--tau", dict(dest="tau", type=float)),
            ("--min-signature-count", dict(dest="min_signature_count", type=int)),
        ]),
        "train": ("learn translation embeddings", [
            ("--dimension", dict(dest="dimension", type=int)),
            ("--epochs", dict(dest="epochs", type=int)),
            ("--workers", dict(dest="workers", type=int)),
        ]),
        "cluster": ("cluster typed verbs into predicates", [
            ("--global-k", dict(dest="global_k", type=int)),
            ("--beta", dict(dest="beta", type=float)),
        ]),
        "featurize": ("map message kernels to features", [
            ("--kernels", dict(dest="kernels")),
            ("--mode", dict(dest="mode", choices=_MODES)),
            ("--baseline-k", dict(dest="baseline_k", type=int)),
        ]),
        "evaluate": ("cross-validate the classifier", [
            ("--labels", dict(dest="labels")),
            ("--folds", dict(dest="folds", type=int)),
            ("--lambda", dict(dest="lam", type=float)),
        ]),
    }
    for name, (help_text, flags) in spec.items():
        sub = commands.add_parser(name, parents=[common], help=help_text)
        for flag, kwargs in flags:
            sub.add_argument(flag, **kwargs)
    return parser


def load_config(args) -> PipelineConfig:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    for dest, (section, key) in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            raw.setdefault("paths", {})[key] = value
        else:
            target = raw.setdefault(section, {})
            if not isinstance(target, dict):
                raise UsageError(f"config key {section} must be an object")
            target[key] = value
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "deterministic", False):
        target = raw.setdefault("train", {})
        if not isinstance(target, dict):
            raise UsageError("config key train must be an object")
        target["workers"] = 1
    return PipelineConfig.from_dict(raw)


def run(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args)
        _COMMANDS[args.command](config)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
