"""``spatialcrime`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 64 usage or configuration error, 2 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .config import PipelineConfig, check_category_name, load_config, require_inputs
from .dataset import (CATEGORY_ORDER, CrimeCategory, class_balance, generate_synthetic,
                      load_label_rules, parse_ucr_csv, write_ground_truth, write_ucr_csv)
from .errors import ConfigError, SpatialCrimeError
from .evaluation import EvalReport, ExperimentConfig, render_reports, run_experiment
from .features import build_engineered, build_raw, fit_plan
from .geocoding import (GeocodeCache, OfflineGeocoder, RemoteGeocoder, load_pois, load_taxonomy,
                        write_pois_csv)
from .hotspots import (cluster_category, extract_hotpoints, hotpoints_geojson, hotspots_geojson, load_hotpoints,
                       period_label, save_hotpoints)
from .models import fit_all, save_model

EXIT_OK = 0
EXIT_PIPELINE = 2
EXIT_USAGE = 64

log = logging.getLogger("spatialcrime")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- helpers -------------------------------------------------------------------

def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _categories(cfg: PipelineConfig, args) -> list[CrimeCategory]:
    name = args.category or cfg.category
    if name is None:
        raise ConfigError("choose a category with --category NAME (or 'all')")
    check_category_name(name)
    if str(name).lower() == "all":
        return list(CATEGORY_ORDER)
    return [CrimeCategory.parse(name)]


def _records(path: Path):
    table = parse_ucr_csv(path)
    if table.rejects:
        log.warning("%s: %d row(s) rejected (run 'ingest' for details)", path, len(table.rejects))
    return table.records


def _taxonomy(cfg: PipelineConfig):
    if cfg.paths.taxonomy is not None:
        require_inputs(cfg.paths.taxonomy)
    return load_taxonomy(cfg.paths.taxonomy)


def _rules(cfg: PipelineConfig):
    if cfg.paths.label_rules is not None:
        require_inputs(cfg.paths.label_rules)
    return load_label_rules(cfg.paths.label_rules)


def _geocoder(cfg: PipelineConfig, taxonomy):
    if cfg.geocoder_mode == "offline":
        require_inputs(cfg.paths.pois)
        return OfflineGeocoder(*load_pois(cfg.paths.pois, taxonomy))
    cache = GeocodeCache(cfg.paths.geocode_cache) if cfg.geocoder_mode == "cached-remote" else None
    return RemoteGeocoder(cfg.remote, taxonomy, cache)


def _hotpoints_path(cfg: PipelineConfig, cat: CrimeCategory) -> Path:
    return cfg.output_dir / f"hotpoints_{cat.value}.npz"


def _load_hotpoints(cfg: PipelineConfig, cat: CrimeCategory):
    path = _hotpoints_path(cfg, cat)
    if not path.is_file():
        raise FileNotFoundError(f"hotpoint artifact {path} not found; run 'hotspots' first")
    return load_hotpoints(path)


# --- commands --------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig, args) -> int:
    scfg = cfg.synth_config()
    ds = generate_synthetic(scfg)
    p = cfg.paths
    for path in (p.train_csv, p.eval_csv, p.pois, p.ground_truth):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_ucr_csv(ds.records_a, p.train_csv)
    write_ucr_csv(ds.records_b, p.eval_csv)
    write_pois_csv(ds.pois, p.pois)
    write_ground_truth(ds.ground_truth, p.ground_truth)
    print(f"wrote {len(ds.records_a)} records ({scfg.years[0]}) to {p.train_csv}")
    print(f"wrote {len(ds.records_b)} records ({scfg.years[1]}) to {p.eval_csv}")
    print(f"wrote {len(ds.pois)} POIs to {p.pois}")
    print(f"wrote ground truth to {p.ground_truth}")
    return EXIT_OK


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.train_csv, cfg.paths.eval_csv)
    rules = _rules(cfg)
    for name, path in (("train", cfg.paths.train_csv), ("eval", cfg.paths.eval_csv)):
        table = parse_ucr_csv(path)
        years = sorted({r.year for r in table.records})
        print(f"{name}: {path} (years {', '.join(map(str, years)) or 'none'})")
        print("  " + table.reject_report().replace("\n", "\n  "))
        if table.records:
            for cat in CATEGORY_ORDER:
                print(f"  {cat.display_name}: {100.0 * class_balance(table.records, cat, rules)[0]:.1f}% positive")
    return EXIT_OK


def cmd_pois(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.pois)
    taxonomy = _taxonomy(cfg)
    pois, index = load_pois(cfg.paths.pois, taxonomy)
    counts = Counter(p.osm_category for p in pois)
    print(f"{len(pois)} POIs in {len(index.buckets)} grid cells of {index.cell_size_deg} deg")
    for cat in sorted(counts):
        print(f"  {cat}: {counts[cat]}")
    n_types = len({p.osm_type for p in pois})
    print(f"{n_types} distinct types; {counts.get('unknown', 0)} POIs with types outside the taxonomy")
    return EXIT_OK


def cmd_hotspots(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.train_csv)
    records = _records(cfg.paths.train_csv)
    rules = _rules(cfg)
    years = {r.year for r in records}
    for cat in _categories(cfg, args):
        run = cluster_category(records, cat, cfg.hdbscan_for(cat), rules)
        spots = run.hotspots
        hps = extract_hotpoints(spots, cat, period_label(years), years)
        out = cfg.output_dir
        _write_json(hotspots_geojson(spots), out / f"hotspots_{cat.value}.geojson")
        _write_json(hotpoints_geojson(hps), out / f"hotpoints_{cat.value}.geojson")
        save_hotpoints(hps, _hotpoints_path(cfg, cat))
        if not run.n_positives:
            print(f"warning: no {cat.display_name} records in {cfg.paths.train_csv}; wrote empty hotspot files",
                  file=sys.stderr)
        print(f"{cat.display_name}: {len(spots)} clusters, noise fraction {run.noise_fraction:.3f} "
              f"({run.n_positives} positives, period {hps.training_period or 'n/a'})")
    return EXIT_OK


def cmd_featurize(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.eval_csv)
    records = _records(cfg.paths.eval_csv)
    taxonomy = _taxonomy(cfg)
    rules = _rules(cfg)
    geocoder = _geocoder(cfg, taxonomy)
    for cat in _categories(cfg, args):
        hps = _load_hotpoints(cfg, cat)
        plan = fit_plan(records, cat, hps, geocoder, taxonomy, args.allow_period_overlap)
        raw = build_raw(records, cat, rules)
        eng = build_engineered(records, plan, rules)
        raw_path = cfg.output_dir / f"features_{cat.value}_raw.csv"
        eng_path = cfg.output_dir / f"features_{cat.value}_engineered.csv"
        raw.to_csv(raw_path)
        eng.to_csv(eng_path)
        _write_json({"checksum": plan.checksum(), "parameters": plan.parameters()},
                    cfg.output_dir / f"feature_plan_{cat.value}.json")
        print(f"{cat.display_name}: raw {raw.shape} -> {raw_path}; engineered {eng.shape} -> {eng_path}")
    return EXIT_OK


def cmd_train(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.eval_csv)
    records = _records(cfg.paths.eval_csv)
    taxonomy = _taxonomy(cfg)
    rules = _rules(cfg)
    geocoder = _geocoder(cfg, taxonomy)
    for cat in _categories(cfg, args):
        hps = _load_hotpoints(cfg, cat)
        plan = fit_plan(records, cat, hps, geocoder, taxonomy, args.allow_period_overlap)
        for fm in (build_raw(records, cat, rules), build_engineered(records, plan, rules)):
            model = fit_all(fm.rows, fm.labels, cfg.lr, cfg.svm, cfg.rf)
            path = cfg.output_dir / f"model_{cat.value}_{fm.feature_set}.json"
            meta = {"category": cat.value, "feature_set": fm.feature_set, "columns": list(fm.column_names)}
            if fm.feature_set == "engineered":
                meta["feature_plan"] = {"checksum": plan.checksum(), "parameters": plan.parameters()}
            save_model(model, path, meta)
            print(f"{cat.display_name}: {fm.feature_set} ensemble ({fm.shape[1]} features) -> {path}")
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig, args) -> int:
    require_inputs(cfg.paths.train_csv, cfg.paths.eval_csv)
    train = _records(cfg.paths.train_csv)
    evaluation = _records(cfg.paths.eval_csv)
    taxonomy = _taxonomy(cfg)
    rules = _rules(cfg)
    geocoder = _geocoder(cfg, taxonomy)
    for cat in _categories(cfg, args):
        hps = _load_hotpoints(cfg, cat)
        ecfg = ExperimentConfig(k=cfg.k, seed=cfg.require_seed(), alpha=cfg.alpha, hdbscan=cfg.hdbscan_for(cat),
                                lr=cfg.lr, svm=cfg.svm, rf=cfg.rf, allow_overlap=args.allow_period_overlap)
        report = run_experiment(train, evaluation, cat, ecfg, geocoder, taxonomy, rules, hotpoints=hps)
        json_path = cfg.output_dir / f"report_{cat.value}.json"
        txt_path = cfg.output_dir / f"report_{cat.value}.txt"
        json_path.write_text(report.to_json(), encoding="utf-8")
        txt_path.write_text(render_reports([report]), encoding="utf-8")
        print(render_reports([report]), end="")
        print(f"wrote {json_path} and {txt_path}")
    return EXIT_OK


def cmd_report(cfg: PipelineConfig | None, args) -> int:
    reports = []
    for p in args.reports:
        path = Path(p)
        if not path.is_file():
            raise ConfigError(f"report not found: {path}")
        try:
            reports.append(EvalReport.from_json(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from None
    text = render_reports(reports)
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic two-period dataset and POI snapshot"),
    "ingest": (cmd_ingest, "validate both UCR files and print the reject report"),
    "pois": (cmd_pois, "load the POI snapshot and print an index sanity report"),
    "hotspots": (cmd_hotspots, "cluster the training period into hotspots and hotpoints"),
    "featurize": (cmd_featurize, "write raw and engineered feature matrices for the evaluation period"),
    "train": (cmd_train, "fit LR, SVM and RF on the evaluation period and save them as JSON"),
    "eval": (cmd_eval, "cross-validate raw vs engineered features and write the reports"),
    "report": (cmd_report, "merge per-category JSON reports into accuracy and AUC tables"),
}


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="TOML pipeline config")
    p.add_argument("--seed", metavar="N", type=int, default=d, help="override the config seed")
    p.add_argument("--category", metavar="NAME", default=d,
                   help="crime category (AlcoholRelated, Assault, PropertyDamage, MotorVehicle) or 'all'")
    p.add_argument("--allow-period-overlap", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="featurize records from the hotspot training period anyway (leaks labels)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatialcrime", description=__doc__.splitlines()[0])
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        # repeated here so flags also work after the subcommand
        _add_common(sp, suppress=True)
        if name == "report":
            sp.add_argument("reports", nargs="+", metavar="REPORT_JSON", help="reports written by 'eval'")
            sp.add_argument("-o", "--output", metavar="PATH", help="also write the tables to this file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = None
        if args.command != "report" or args.config is not None:
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            if args.category is not None:
                check_category_name(args.category)
            if args.command not in ("ingest", "pois", "report"):
                cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpatialCrimeError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
