"""Command-line driver: screening, grid search, SHAP explanation, reduction.

Every stage writes its artifacts into ``--out``. JSON reports are written
with sorted keys and carry the run configuration, so two runs with the same
config produce byte-identical reports. Wall-clock times go to a separate
``timings.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import explain as xai
from . import modelsel, stats
from .dataset import (
    CATEGORICAL,
    CATEGORICAL_FACTORS,
    CONTINUOUS,
    DEFAULT_LABEL,
    FeatureSchema,
    SplitSpec,
    TrainTestSplit,
    infer_schema,
    load_csv,
    make_surrogate,
    stratified_split,
)
from .errors import ConfigError, LandslideError, WrongModelKind
from .gbt import GbtModel
from .metrics import evaluate, learning_curve, write_roc_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _default_grids():
    return {k: {p: list(v) for p, v in g.items()} for k, g in modelsel.DEFAULT_GRIDS.items()}


@dataclass
class PipelineConfig:
    """Run settings. ``data = None`` runs on the built-in synthetic surrogate."""

    data: str | None = None
    label: str = DEFAULT_LABEL
    features: tuple | None = None
    categorical: tuple | None = None
    test_fraction: float = 0.33
    split_seed: int = 15
    seed: int = 15
    folds: int = 10
    drop_count: int = 6
    bins: int = 10
    n_jobs: int = 1
    models: tuple = modelsel.KINDS
    grids: dict = field(default_factory=_default_grids)
    learning_curve: tuple = (0.1, 0.325, 0.55, 0.775, 1.0)
    surrogate_seed: int = 15
    out: str = "landslide_out"

    def validate(self) -> "PipelineConfig":
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.drop_count < 0:
            raise ConfigError(f"drop_count must be >= 0, got {self.drop_count}")
        if self.bins < 2:
            raise ConfigError(f"bins must be >= 2, got {self.bins}")
        if not self.models:
            raise ConfigError("models must not be empty")
        for kind in self.models:
            modelsel.params_class(kind)
        for kind, grid in self.grids.items():
            try:
                modelsel.ParamGrid(kind, grid)
            except ValueError as exc:
                raise ConfigError(f"grids.{kind}: {exc}") from exc
        missing = [k for k in self.models if k not in self.grids]
        if missing:
            raise ConfigError(f"no grid for model(s) {missing}")
        if "gbt" not in self.grids:
            raise ConfigError("a gbt grid is required for the explain and reduce stages")
        if self.features is not None and self.categorical is not None:
            extra = set(self.categorical) - set(self.features)
            if extra:
                raise ConfigError(f"categorical names not in features: {sorted(extra)}")
        return self

    def grid(self, kind: str) -> modelsel.ParamGrid:
        return modelsel.ParamGrid(kind, self.grids[kind])

    def to_dict(self) -> dict:
        """Provenance record; the output directory is left out on purpose."""
        d = asdict(self)
        d.pop("out")
        for k in ("features", "categorical", "models", "learning_curve"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_mapping(cls, raw: dict, base_dir=None) -> "PipelineConfig":
        raw = dict(raw)
        split = raw.pop("split", {})
        if not isinstance(split, dict):
            raise ConfigError("[split] must be a table")
        unknown_split = set(split) - {"test_fraction", "seed"}
        if unknown_split:
            raise ConfigError(f"unknown [split] key(s) {sorted(unknown_split)}")
        if "test_fraction" in split:
            raw["test_fraction"] = split["test_fraction"]
        if "seed" in split:
            raw["split_seed"] = split["seed"]
        grids = _default_grids()
        for kind, g in raw.pop("grids", {}).items():
            if not isinstance(g, dict):
                raise ConfigError(f"grids.{kind} must be a table")
            grids[kind] = {p: (list(v) if isinstance(v, list) else [v]) for p, v in g.items()}
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        for k in ("features", "categorical", "models", "learning_curve"):
            if k in raw and raw[k] is not None:
                raw[k] = tuple(raw[k])
        if raw.get("data") and base_dir is not None and not Path(raw["data"]).is_absolute():
            raw["data"] = str(Path(base_dir) / raw["data"])
        try:
            cfg = cls(grids=grids, **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_mapping(raw, base_dir=path.parent)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


class Pipeline:
    """Stages sharing one config, one output directory and one data split."""

    def __init__(self, config: PipelineConfig):
        self.config = config.validate()
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = {}
        self._table = None
        self._split = None

    # data ---------------------------------------------------------------
    def _schema(self):
        cfg = self.config
        if cfg.features is not None:
            cat = set(cfg.categorical if cfg.categorical is not None else CATEGORICAL_FACTORS)
            kinds = tuple(CATEGORICAL if n in cat else CONTINUOUS for n in cfg.features)
            return FeatureSchema(cfg.features, cfg.label, kinds)
        schema = infer_schema(cfg.data, cfg.label)
        if cfg.categorical is not None:
            cat = set(cfg.categorical)
            kinds = tuple(CATEGORICAL if n in cat else CONTINUOUS for n in schema.names)
            schema = FeatureSchema(schema.names, schema.label_name, kinds)
        return schema

    @property
    def table(self):
        if self._table is None:
            if self.config.data is None:
                self._table = make_surrogate(self.config.surrogate_seed)
            else:
                self._table = load_csv(self.config.data, self._schema())
        return self._table

    @property
    def split(self) -> TrainTestSplit:
        if self._split is None:
            path = self.out / "split.json"
            spec = SplitSpec(self.config.test_fraction, self.config.split_seed)
            self._split = stratified_split(self.table, spec)
            path.write_text(_dump(self._split.to_dict()), encoding="utf-8")
        return self._split

    def _write(self, name: str, payload: dict):
        payload = dict(payload)
        payload["config"] = self.config.to_dict()
        (self.out / name).write_text(_dump(payload), encoding="utf-8")
        return payload

    def _timed(self, stage, fn, *args):
        t0 = time.perf_counter()
        result = fn(*args)
        self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0
        (self.out / "timings.json").write_text(_dump(self.timings), encoding="utf-8")
        return result

    # stages -------------------------------------------------------------
    def stats(self) -> dict:
        return self._timed("stats", self._stats)

    def _stats(self):
        screen = stats.screen_features(self.table, self.config.bins)
        text = "\n\n".join([
            stats.render_two_column(screen["normality"], "w_statistic",
                                    "Shapiro-Wilk W statistic per feature"),
            stats.render_two_column(screen["chi_square"], "p_value",
                                    "Chi-square p-value per feature", fmt="{:.4g}"),
        ])
        (self.out / "stats.txt").write_text(text + "\n", encoding="utf-8")
        return self._write("stats.json", screen)

    def search(self, kind: str, suffix: str = "", features=None) -> dict:
        return self._timed(f"search_{kind}{suffix}", self._search, kind, suffix, features)

    def _search(self, kind, suffix, features):
        cfg = self.config
        train, test = self.split.train, self.split.test
        if features is not None:
            train, test = train.select(features), test.select(features)
        tag = f"{kind}{suffix}"
        result = modelsel.grid_search(train, cfg.grid(kind), cfg.folds, cfg.seed,
                                      n_jobs=cfg.n_jobs, log_path=self.out / f"search_{tag}.jsonl")
        best = modelsel.make_params(kind, result.best_params)
        model = modelsel.fit_model(train, best)
        (self.out / f"model_{tag}.json").write_text(
            json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
        ev = evaluate(test.y, model.predict_label(test), model.predict_score(test))
        write_roc_csv(self.out / f"roc_{tag}.csv", ev.roc)
        folds = modelsel.stratified_kfold(train, cfg.folds, cfg.seed)
        (self.out / f"folds_{tag}.json").write_text(_dump(folds.to_dict()), encoding="utf-8")
        return self._write(f"eval_{tag}.json", {
            "kind": kind,
            "features": list(train.feature_names),
            "search": result.to_dict(),
            "cv": result.best_result.to_dict(),
            "test": ev.to_dict(),
            "model_path": f"model_{tag}.json",
        })

    def explain(self, model_path=None) -> dict:
        return self._timed("explain", self._explain, model_path)

    def _explain(self, model_path):
        if model_path is None:
            model_path = self.out / "model_gbt.json"
            if not model_path.exists():
                self.search("gbt")
        model = modelsel.load_model(model_path)
        if not isinstance(model, GbtModel):
            raise WrongModelKind(f"explain needs a gbt model, got {model.kind!r}")
        train = self.split.train.select(model.feature_names)
        shap = xai.tree_shap(model, train)
        importance = xai.rank_features(shap)
        points = xai.summary_points(shap, train, importance)
        xai.write_shap_csv(self.out / "shap_values.csv", points)
        xai.write_importance_json(self.out / "shap_importance.json", importance, shap)
        return self._write("explain.json", {
            "model_path": Path(model_path).name,
            "n_rows": shap.values.shape[0],
            "n_features": shap.values.shape[1],
            "expected_value": shap.expected_value,
            "importance": importance.to_dict(),
        })

    def reduce(self) -> dict:
        return self._timed("reduce", self._reduce)

    def _reduce(self):
        cfg = self.config
        imp_path = self.out / "shap_importance.json"
        if not imp_path.exists():
            self.explain()
        before_path = self.out / "eval_gbt.json"
        if not before_path.exists():
            self.search("gbt")
        before = json.loads(before_path.read_text(encoding="utf-8"))
        importance = xai.FeatureImportance.from_dict(
            json.loads(imp_path.read_text(encoding="utf-8")))
        plan = xai.select_features(importance, cfg.drop_count,
                                   schema_order=self.split.train.feature_names)
        after = self.search("gbt", "_reduced", plan.retained)
        best = modelsel.make_params("gbt", after["search"]["best_params"])
        train = self.split.train.select(plan.retained)
        try:
            lc = learning_curve(train, best, cfg.learning_curve, cfg.folds, cfg.seed).to_dict()
        except LandslideError as exc:
            lc = {"error": type(exc).__name__, "message": str(exc)}
        (self.out / "learning_curve.json").write_text(_dump(lc), encoding="utf-8")
        cv_before = before["cv"]["mean"]
        cv_after = after["cv"]["mean"]
        return self._write("reduce.json", {
            "plan": plan.to_dict(),
            "cv_before": cv_before,
            "cv_after": cv_after,
            "cv_change": None if cv_before is None or cv_after is None else cv_after - cv_before,
            "test_before": before["test"]["class_report"],
            "test_after": after["test"]["class_report"],
            "auc_before": before["test"]["auc"],
            "auc_after": after["test"]["auc"],
            "best_params_after": after["search"]["best_params"],
            "learning_curve": lc,
            "final_model_path": after["model_path"],
        })

    def run_all(self) -> dict:
        report = {"stats": self.stats(), "search": {}}
        for kind in self.config.models:
            report["search"][kind] = self.search(kind)
        if "gbt" not in self.config.models:
            self.search("gbt")
        report["explain"] = self.explain()
        report["reduce"] = self.reduce()
        for section in (report["stats"], report["explain"], report["reduce"],
                        *report["search"].values()):
            section.pop("config", None)
        report["split"] = self.split.to_dict()
        return self._write("run_report.json", report)


def _build_parser():
    ap = argparse.ArgumentParser(prog="landslide-xai", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--data", help="CSV file (default: built-in synthetic surrogate)")
    common.add_argument("--seed", type=int, help="seed for the split and the folds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--folds", type=int, help="number of CV folds")
    common.add_argument("--drop", type=int, help="features removed in the reduce stage")
    common.add_argument("--jobs", type=int, help="worker processes for the grid search")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("stats", parents=[common], help="normality and chi-square screening")
    s = sub.add_parser("search", parents=[common], help="grid search, refit, test evaluation")
    s.add_argument("--model", required=True, choices=modelsel.KINDS)
    e = sub.add_parser("explain", parents=[common], help="TreeSHAP on the tuned gbt model")
    e.add_argument("--model-path", help="model JSON (default: OUT/model_gbt.json)")
    sub.add_parser("reduce", parents=[common], help="drop low-SHAP features and retrain")
    sub.add_parser("pipeline", parents=[common], help="all stages")
    return ap


def config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.data is not None:
        overrides["data"] = args.data
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["split_seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.folds is not None:
        overrides["folds"] = args.folds
    if args.drop is not None:
        overrides["drop_count"] = args.drop
    if args.jobs is not None:
        overrides["n_jobs"] = args.jobs
    return replace(cfg, **overrides).validate()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        pipe = Pipeline(config_from_args(args))
        if args.command == "stats":
            pipe.stats()
            print((pipe.out / "stats.txt").read_text(encoding="utf-8"), end="")
        elif args.command == "search":
            rep = pipe.search(args.model)
            print(json.dumps({"kind": args.model, "best_params": rep["search"]["best_params"],
                              "cv_mean": rep["cv"]["mean"], "test_auc": rep["test"]["auc"]}))
        elif args.command == "explain":
            rep = pipe.explain(args.model_path)
            print(json.dumps({"ranking": [e["feature"] for e in rep["importance"]["ranking"]]}))
        elif args.command == "reduce":
            rep = pipe.reduce()
            print(json.dumps({k: rep[k] for k in ("cv_before", "cv_after", "plan")}))
        else:
            rep = pipe.run_all()
            print(json.dumps({"cv_before": rep["reduce"]["cv_before"],
                              "cv_after": rep["reduce"]["cv_after"],
                              "dropped": rep["reduce"]["plan"]["dropped"]}))
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
