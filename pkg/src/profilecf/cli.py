"""Command-line entry point.

Every run writes its artifacts to ``<out-dir>/<manifest digest>/`` next to a
``manifest.json`` recording the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import sys
from pathlib import Path

from profilecf import __version__
from profilecf import analysis
from profilecf.evaluate import (
    CAP_SCOPES,
    CAP_TARGETS,
    RANDOM_SPLIT,
    EvaluationReport,
    ExperimentConfig,
    build_similarity,
    cap_user_records,
    check_disjoint,
    prepare_split,
    run_experiment,
    run_table3,
)
from profilecf.ingest import SPLIT_NAMES, IngestError, load_dataset, load_split_files
from profilecf.predict import PredictorConfig, TrainingIndex, predictions_to_csv, recommend_top_n
from profilecf.profile import build_all_profiles, profiles_to_csv
from profilecf.similarity import MCF_DOMAINS

REPORT_FIELDS = ["algorithm", "cap", "split", "seed", "rmse", "mae", "coverage", "wall_time_s"]
DATASET_FILES = ("u.data", "u.item", "u.user", "u.genre")

DEFAULTS = {
    "data_dir": "data/ml-100k",
    "out_dir": "out",
    "seed": 42,
    "split": "u1",
    "test_fraction": 0.2,
    "format": "csv",
    "threads": 1,
    "algo": "mcf",
    "cap": None,
    "cap_scope": "all",
    "cap_target": "similarity",
    "novel_fraction": 0.2,
    "mcf_domain": "common",
    "centering": "mean",
    "k_neighbors": "all",
    "use_negative": False,
    "timing": False,
    "table3_cap": 5,
    "user": None,
    "top_n": 10,
    "bin_width": 1,
    "min_users": 10,
}
# keys that never change results, so they stay out of the manifest digest
_UNDIGESTED = {"threads", "out_dir", "timing", "format"}


class CliError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {text!r}")


def _coerce(key: str, value):
    if value is None:
        return None
    if key in ("seed", "threads", "table3_cap", "user", "top_n", "bin_width", "min_users"):
        return int(value)
    if key == "cap":
        return None if str(value).lower() in ("", "none") else int(value)
    if key in ("test_fraction", "novel_fraction"):
        return float(value)
    if key in ("use_negative", "timing"):
        return value if isinstance(value, bool) else _parse_bool(value)
    return str(value)


def read_config_file(path: str | Path) -> dict:
    """``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    settings = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{line_no}: unknown setting {key!r}")
        settings[key] = value
    return settings


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return {k: _coerce(k, v) for k, v in settings.items()}


def experiment_config(settings: dict, algo: str | None = None, cap="unset") -> ExperimentConfig:
    k = settings["k_neighbors"]
    predictor = PredictorConfig(
        centering=settings["centering"],
        k_neighbors=None if k in (None, "all") else int(k),
        use_negative=settings["use_negative"],
    )
    return ExperimentConfig(
        algorithm=(algo or settings["algo"]).upper(),
        record_cap=settings["cap"] if cap == "unset" else cap,
        split=settings["split"],
        rng_seed=settings["seed"],
        test_fraction=settings["test_fraction"],
        predictor=predictor,
        mcf_domain=settings["mcf_domain"],
        cap_scope=settings["cap_scope"],
        novel_fraction=settings["novel_fraction"],
        cap_target=settings["cap_target"],
    )


def dataset_digest(data_dir: Path, split: str | None) -> str:
    names = list(DATASET_FILES)
    if split in SPLIT_NAMES:
        names += [f"{split}.base", f"{split}.test"]
    h = hashlib.sha256()
    for name in names:
        path = data_dir / name
        if path.is_file():
            h.update(name.encode())
            h.update(hashlib.sha256(path.read_bytes()).digest())
    return h.hexdigest()


class Run:
    """Resolved settings plus the output directory they map to."""

    def __init__(self, command: str, settings: dict):
        self.command = command
        self.settings = settings
        self.data_dir = Path(settings["data_dir"])
        digested = {k: v for k, v in settings.items() if k not in _UNDIGESTED}
        self.manifest = {
            "command": command,
            "config": digested,
            "data_dir": str(self.data_dir),
            "dataset_digest": dataset_digest(self.data_dir, settings["split"]),
            "tool_version": __version__,
        }
        blob = json.dumps(self.manifest, sort_keys=True).encode()
        self.digest = hashlib.sha256(blob).hexdigest()[:16]
        self.out = Path(settings["out_dir"]) / self.digest

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        return path

    def write_manifest(self) -> None:
        manifest = dict(self.manifest, digest=self.digest, threads=self.settings["threads"])
        manifest["timestamp"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        self.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _report_rows(reports: list[EvaluationReport], timing: bool) -> list[dict]:
    rows = []
    for r in reports:
        row = r.row()
        row["wall_time_s"] = round(r.wall_time, 3) if timing else ""
        rows.append(row)
    return rows


def _emit_rows(rows: list[dict], fmt: str, fields=REPORT_FIELDS) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _print_table(reports: list[EvaluationReport]) -> None:
    print(f"{'algorithm':<10} {'cap':>4} {'split':>6} {'seed':>5} {'rmse':>8} {'mae':>8} {'coverage':>9}")
    for r in reports:
        c = r.config
        cap = "-" if c.record_cap is None else str(c.record_cap)
        print(
            f"{c.algorithm:<10} {cap:>4} {c.split:>6} {c.rng_seed:>5} "
            f"{r.rmse:>8.4f} {r.mae:>8.4f} {r.coverage:>9.4f}"
        )


def cmd_validate(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    for fold in SPLIT_NAMES:
        if (run.data_dir / f"{fold}.base").is_file():
            train, test = load_split_files(run.data_dir, fold)
            check_disjoint(train, test)
            ds.with_ratings(train)
            ds.with_ratings(test)
    print(
        f"{len(ds.users)} users, {len(ds.movies)} movies, {len(ds.ratings)} ratings, "
        f"{len(ds.genre_names)} genres, OK"
    )
    return 0


def _training(run: Run, ds):
    config = experiment_config(run.settings)
    train, test = prepare_split(config, ds, run.data_dir)
    if config.record_cap is not None:
        train = cap_user_records(
            train, config.record_cap, config.rng_seed, config.cap_scope, config.novel_fraction
        )
    return config, train, test


def cmd_profiles(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    _, train, _ = _training(run, ds)
    profiles = build_all_profiles(train, ds.movie_index(), ds.user_ids, len(ds.genre_names))
    if run.settings["format"] == "json":
        payload = [
            {"user_id": p.user_id, "scores": list(p.scores), "encounters": list(p.encounters)}
            for p in profiles.values()
        ]
        path = run.write("profiles.json", json.dumps(payload, indent=1) + "\n")
    else:
        path = run.write("profiles.csv", profiles_to_csv(profiles, ds.genre_names))
    run.write_manifest()
    print(f"{len(profiles)} profiles -> {path}")
    return 0


def cmd_similarity(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    config, train, _ = _training(run, ds)
    sims = build_similarity(config, ds, train, run.settings["threads"])
    path = run.write(f"similarity_{sims.kind.lower()}.csv", sims.to_csv())
    run.write_manifest()
    print(f"{sims.kind} similarity over {len(sims.user_ids)} users -> {path}")
    return 0


def cmd_predict(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    config = experiment_config(run.settings)
    if run.settings["user"] is not None:
        full_train, _ = prepare_split(config, ds, run.data_dir)
        _, sim_train, _ = _training(run, ds)
        train = sim_train if config.cap_target == "train" else full_train
        sims = build_similarity(config, ds, sim_train, run.settings["threads"])
        index = TrainingIndex(train, ds.item_ids)
        top = recommend_top_n(run.settings["user"], run.settings["top_n"], sims, index, config.predictor)
        rows = [{"rank": k, "item_id": i, "predicted": p} for k, (i, p) in enumerate(top, start=1)]
        path = run.write("recommendations." + run.settings["format"],
                         _emit_rows(rows, run.settings["format"], ["rank", "item_id", "predicted"]))
    else:
        report, predictions, test = run_experiment(
            config, ds, run.data_dir, threads=run.settings["threads"], keep_predictions=True
        )
        path = run.write("predictions.csv", predictions_to_csv(predictions, [r.rating for r in test]))
    run.write_manifest()
    print(f"predictions -> {path}")
    return 0


def cmd_evaluate(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    report = run_experiment(experiment_config(run.settings), ds, run.data_dir, threads=run.settings["threads"])
    fmt = run.settings["format"]
    path = run.write(f"report.{fmt}", _emit_rows(_report_rows([report], run.settings["timing"]), fmt))
    run.write_manifest()
    _print_table([report])
    print(f"report -> {path}")
    return 0


def cmd_table3(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    base = experiment_config(run.settings, cap=None)
    table = run_table3(ds, base, run.data_dir, cap=run.settings["table3_cap"], threads=run.settings["threads"])
    reports = list(table.reports)
    fmt = run.settings["format"]
    path = run.write(f"table3.{fmt}", _emit_rows(_report_rows(reports, run.settings["timing"]), fmt))
    summary = {
        "overall_improvement": table.overall_improvement,
        "cold_start_improvement": table.cold_start_improvement,
    }
    run.write("improvement.json", json.dumps(summary, indent=2) + "\n")
    run.write_manifest()
    _print_table(reports)
    cap = run.settings["table3_cap"]
    print(f"overall improvement (BCF -> MCF): {100 * table.overall_improvement:.2f}%")
    print(f"cold-start improvement (BCF@{cap} -> MCF@{cap}): {100 * table.cold_start_improvement:.2f}%")
    print(f"report -> {path}")
    return 0


def cmd_analyze(run: Run) -> int:
    ds = load_dataset(run.data_dir)
    hist = analysis.age_histogram(ds, run.settings["bin_width"])
    occ = analysis.occupation_counts(ds)
    matrix = analysis.occupation_genre_encounters(ds)
    cosines = analysis.occupation_cosines(ds, matrix, run.settings["min_users"])
    run.write("age_histogram.csv", analysis.age_histogram_csv(hist))
    run.write("occupation_counts.csv", analysis.occupation_counts_csv(occ))
    run.write("occupation_genre_encounters.csv", analysis.encounters_csv(matrix))
    run.write_manifest()
    modal_age = max(hist, key=lambda k: (hist[k], -k))
    print(f"modal age bin: {modal_age} ({hist[modal_age]} users)")
    print(f"most frequent occupation: {max(occ, key=occ.get)} ({max(occ.values())} users)")
    if cosines:
        pair = min(cosines, key=cosines.get)
        print(f"min occupation genre cosine: {cosines[pair]:.6f} {pair[0]}/{pair[1]}")
    print(f"tables -> {run.out}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "profiles": cmd_profiles,
    "similarity": cmd_similarity,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "table3": cmd_table3,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so config-file values survive unless a flag is given
    common.add_argument("--config", help="key=value settings file, overridden by flags")
    common.add_argument("--data-dir", dest="data_dir", help=f"dataset directory (default {DEFAULTS['data_dir']})")
    common.add_argument("--out-dir", dest="out_dir", help="artifact root (default out)")
    common.add_argument("--seed", type=int, help="RNG seed for random splits and record caps (default 42)")
    common.add_argument("--split", choices=SPLIT_NAMES + (RANDOM_SPLIT,), help="default u1")
    common.add_argument("--test-fraction", dest="test_fraction", type=float, help="random split only")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--algo", choices=("bcf", "mcf"))
    common.add_argument("--cap", help="max training records per user (default: none)")
    common.add_argument("--cap-scope", dest="cap_scope", choices=CAP_SCOPES)
    common.add_argument("--cap-target", dest="cap_target", choices=CAP_TARGETS)
    common.add_argument("--novel-fraction", dest="novel_fraction", type=float)
    common.add_argument("--mcf-domain", dest="mcf_domain", choices=MCF_DOMAINS)
    common.add_argument("--centering", choices=("mean", "raw"))
    common.add_argument("--k-neighbors", dest="k_neighbors", help="integer or 'all'")
    common.add_argument("--use-negative", dest="use_negative", action="store_const", const=True)
    common.add_argument("--timing", action="store_const", const=True, help="fill wall_time_s in reports")

    parser = argparse.ArgumentParser(prog="profilecf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "table3":
            p.add_argument("--table3-cap", dest="table3_cap", type=int, help="cap for the capped rows (default 5)")
        if name == "predict":
            p.add_argument("--user", type=int, help="emit top-N recommendations for this user")
            p.add_argument("--top-n", dest="top_n", type=int)
        if name == "analyze":
            p.add_argument("--bin-width", dest="bin_width", type=int)
            p.add_argument("--min-users", dest="min_users", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args)
        if settings["algo"] not in ("bcf", "mcf"):
            raise CliError(f"--algo must be bcf or mcf, got {settings['algo']!r}")
        return COMMANDS[args.command](Run(args.command, settings))
    except (IngestError, FileNotFoundError, CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
