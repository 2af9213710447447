"""Command-line pipeline: synth, ingest, build-graph, build-labels, liw, train,
evaluate and profile-report.

Every artifact starts with a ``# usergeo stage=... config_hash=...`` line (or
carries ``config_hash`` in JSON). A stage whose inputs are missing runs the
producing stage first, unless ``--strict`` is given, in which case it stops
and names the subcommand to run. Inputs built under a different config are
refused unless ``--force`` is given, which rebuilds them.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .autograd import save_parameters
from .config import ConfigError, PipelineConfig, from_dict, load_config, set_override, stage_hashes, to_dict
from .eval import format_table, reports_to_json
from .geo import GeoPoint
from .graph import build_multiplex, load_multiplex, save_multiplex
from .ingest import GroundTruth, ground_truths, load_gazetteer, profile_distance_report
from .labels import LabelSpace, build_label_space
from .models import TrainingDivergence
from .pipeline import Dataset, cross_validate_pipeline, node_labels, read_users, run_fold, write_predictions
from .synth import generate
from .textfeat import chi2_liw, user_tokens

logger = logging.getLogger("usergeo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

# primary artifact of each stage (relative to the workdir); its header is checked
PRIMARY = {
    "ingest": "features/truth.csv",
    "build-graph": "graphs/edges.tsv",
    "build-labels": "labels/labels.csv",
    "liw": "features/liw.csv",
    "train": "models/manifest.json",
    "evaluate": "reports/eval.json",
    "profile-report": "reports/profile_report.json",
}
UPSTREAM = {
    "ingest": [],
    "build-graph": ["ingest"],
    "build-labels": ["ingest"],
    "liw": ["build-labels"],
    "train": ["build-graph", "build-labels"],
    "evaluate": ["build-graph", "build-labels"],
    "profile-report": ["ingest"],
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def header(stage: str, digest: str) -> str:
    return f"usergeo stage={stage} config_hash={digest}"


def read_hash(path: Path) -> str | None:
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text(encoding="utf-8")).get("config_hash")
        except (json.JSONDecodeError, AttributeError):
            return None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    for part in first.split():
        if part.startswith("config_hash="):
            return part.split("=", 1)[1]
    return None


class Runner:
    def __init__(self, cfg: PipelineConfig, strict: bool = False, force: bool = False):
        self.cfg = cfg
        self.strict = strict
        self.force = force
        self.wd = cfg.workdir
        self.hashes = stage_hashes(cfg)
        self.done: set[str] = set()

    def path(self, rel: str) -> Path:
        p = self.wd / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def refresh_hashes(self):
        self.hashes = stage_hashes(self.cfg)

    def ensure(self, stage: str) -> None:
        """Make sure ``stage``'s artifacts exist and match the current config."""
        for up in UPSTREAM[stage]:
            self.ensure(up)
        if stage in self.done:
            return
        primary = self.wd / PRIMARY[stage]
        if not primary.exists():
            if self.strict:
                raise DataError(f"missing artifact {primary}; run `usergeo {stage}` first")
            logger.info("%s missing; running %s", primary, stage)
            self.run(stage)
            return
        found, want = read_hash(primary), self.hashes[stage]
        if found != want:
            if not self.force:
                raise DataError(f"{primary} was built with config hash {found}, current config "
                                f"gives {want}; rerun `usergeo {stage}` or pass --force")
            logger.info("%s is stale; rebuilding %s", primary, stage)
            self.run(stage)
            return
        self.done.add(stage)

    def run(self, stage: str) -> None:
        for up in UPSTREAM[stage]:
            self.ensure(up)
        getattr(self, "stage_" + stage.replace("-", "_"))()
        self.done.add(stage)

    # loaders
    def _check_inputs(self):
        for name in ("records", "gazetteer"):
            p = self.cfg.data_path(name)
            if not p.exists():
                raise DataError(f"{name} file {p} not found; run `usergeo synth` or set paths.{name}")

    def load_truths(self) -> dict[str, GroundTruth]:
        truths = {}
        with open(self.wd / "features/truth.csv", encoding="utf-8") as fh:
            for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                truths[row["user_id"]] = GroundTruth(
                    row["user_id"], int(row["city"]),
                    GeoPoint(float(row["lat"]), float(row["lon"])),
                    GeoPoint(float(row["home_lat"]), float(row["home_lon"])))
        return truths

    def load_docs(self) -> dict[str, list[str]]:
        docs = {}
        with open(self.wd / "features/tokens.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    continue
                obj = json.loads(line)
                docs[obj["user_id"]] = obj["tokens"]
        return docs

    def load_dataset(self) -> Dataset:
        ids, graph = load_multiplex(self.wd / "graphs/edges.tsv", self.wd / "graphs/nodes.tsv")
        docs = self.load_docs()
        missing = [u for u in ids if u not in docs]
        if missing:
            raise DataError(f"{len(missing)} graph nodes have no token entry; rerun `usergeo ingest`")
        return Dataset(ids, graph, [docs[u] for u in ids], self.load_truths())

    def load_labels(self) -> LabelSpace:
        return LabelSpace.from_csv(self.wd / "labels/labels.csv", self.wd / "labels/assignment.csv")

    # stages
    def stage_ingest(self):
        self._check_inputs()
        users = read_users(self.cfg)
        g = load_gazetteer(self.cfg.data_path("gazetteer"))
        truths = ground_truths(users, g, self.cfg.ingest.match_radius_km)
        h = header("ingest", self.hashes["ingest"])
        with open(self.path("features/truth.csv"), "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {h}\n")
            w = csv.writer(fh)
            w.writerow(["user_id", "city", "lat", "lon", "home_lat", "home_lon"])
            for uid in sorted(truths):
                t = truths[uid]
                w.writerow([uid, t.city, repr(t.point.lat), repr(t.point.lon),
                            repr(t.home.lat), repr(t.home.lon)])
        with open(self.path("features/tokens.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(f"# {h}\n")
            for u in sorted(users, key=lambda u: u.user_id):
                toks = user_tokens(u, self.cfg.text.max_len)
                fh.write(json.dumps({"user_id": u.user_id, "tokens": toks}, ensure_ascii=False) + "\n")
        summary = {"config_hash": self.hashes["ingest"], "n_users": len(users),
                   "n_tweets": sum(len(u.tweets) for u in users), "n_ground_truth": len(truths),
                   "n_geotagged_tweets": sum(1 for u in users for t in u.tweets
                                              if t.coords is not None or t.bbox is not None)}
        self.path("reports/ingest.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"ingest: {len(users)} users, {len(truths)} with ground truth")

    def stage_build_graph(self):
        self._check_inputs()
        users = read_users(self.cfg)
        index, graph = build_multiplex(users, celebrity_threshold=self.cfg.graph.celebrity_threshold,
                                       use_follower_layer=self.cfg.graph.use_follower_layer)
        save_multiplex(graph, index.internal_ids, self.path("graphs/edges.tsv"),
                       self.path("graphs/nodes.tsv"), header("build-graph", self.hashes["build-graph"]))
        sizes = ", ".join(f"{k}={a.nnz}" for k, a in graph.layers.items())
        print(f"build-graph: {graph.n} nodes, {index.n_external} external ids, nonzeros {sizes}")

    def stage_build_labels(self):
        lc = self.cfg.labels
        space = build_label_space(self.load_truths(), lc.mode, lc.min_users, lc.min_bucket)
        h = header("build-labels", self.hashes["build-labels"])
        space.to_csv(self.path("labels/labels.csv"), h)
        space.assignment_to_csv(self.path("labels/assignment.csv"), h)
        print(f"build-labels: {space.n_classes} {lc.mode} labels, {len(space.assignment)} users "
              f"({space.n_excluded} excluded)")

    def stage_liw(self):
        space = self.load_labels()
        docs = self.load_docs()
        uids = sorted(u for u in space.assignment if u in docs)
        table = chi2_liw([docs[u] for u in uids], [space.assignment[u] for u in uids],
                         self.cfg.text.liw_top_k, space.n_classes, self.cfg.text.liw_min_freq)
        table.to_csv(self.path("features/liw.csv"), header("liw", self.hashes["liw"]))
        print(f"liw: {len(table.tokens)} location indicative words")

    def stage_train(self):
        ds = self.load_dataset()
        space = self.load_labels()
        y = node_labels(ds, space)
        train = np.flatnonzero(y >= 0)
        out, fitted = run_fold(ds, y, train, np.arange(ds.n), space.n_classes, self.cfg,
                               self.cfg.seed)
        h = header("train", self.hashes["train"])
        files = []
        for model, probs in out.items():
            p = self.path(f"models/predictions_{model}.csv")
            write_predictions(p, dict(zip(ds.ids, probs)), h)
            files.append(p.name)
        for name, est in fitted.items():
            if hasattr(est, "params_"):
                p = self.path(f"models/{name}.npz")
                save_parameters(est.params_, p)
                files.append(p.name)
        manifest = {"config_hash": self.hashes["train"], "files": sorted(files),
                    "n_train": int(len(train)), "n_labels": space.n_classes}
        self.path("models/manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        print(f"train: fitted {', '.join(out)} on {len(train)} labelled users")

    def stage_evaluate(self):
        ds = self.load_dataset()
        space = self.load_labels()
        res = cross_validate_pipeline(ds, space, self.cfg)
        h = self.hashes["evaluate"]
        title = (f"{self.cfg.eval.k}-fold stratified cross-validation, {self.cfg.labels.mode} labels "
                 f"({space.n_classes} classes), seed {self.cfg.eval.seed}")
        meta = {"config_hash": h, "protocol": f"k={self.cfg.eval.k} stratified",
                "label_mode": self.cfg.labels.mode, "n_labels": space.n_classes,
                "seed": self.cfg.eval.seed}
        self.path("reports/eval.json").write_text(reports_to_json(res.reports, meta) + "\n")
        table = format_table(res.reports, title)
        self.path("reports/eval.txt").write_text(f"# {header('evaluate', h)}\n" + table)
        for model, rep in res.reports.items():
            rep.error_cdf_csv(self.path(f"reports/error_cdf_{model}.csv"))
            write_predictions(self.path(f"reports/cv_predictions_{model}.csv"),
                              res.probabilities[model], header("evaluate", h))
        print(table, end="")

    def stage_profile_report(self):
        self._check_inputs()
        users = read_users(self.cfg)
        g = load_gazetteer(self.cfg.data_path("gazetteer"))
        cdf = profile_distance_report(users, g, self.load_truths())
        cdf.to_csv(self.path("reports/profile_cdf.csv"))
        summary = cdf.summary()
        summary["config_hash"] = self.hashes["profile-report"]
        self.path("reports/profile_report.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
        if cdf.empty:
            print("profile-report: no eligible users (empty report)")
        else:
            print(f"profile-report: {cdf.n} users, {cdf.frac_below_10km:.3f} within 10 km, "
                  f"{cdf.frac_below_161km:.3f} within 161 km")

    def stage_synth(self, out: Path | None = None):
        out = out or self.wd / "data"
        _, paths = generate(self.cfg.synth, out)
        (out / "synth_config.json").write_text(
            json.dumps(to_dict(self.cfg.synth), indent=2, sort_keys=True) + "\n")
        print(f"synth: {self.cfg.synth.n_users} users in {self.cfg.synth.n_cities} cities -> {out}")
        self.refresh_hashes()


def _common_flags(subcommand: bool) -> argparse.ArgumentParser:
    # on subcommands the defaults are suppressed so that flags given before the
    # subcommand name are not overwritten
    d = (lambda value: argparse.SUPPRESS) if subcommand else (lambda value: value)
    common = _Parser(add_help=False)
    common.add_argument("--config", default=d(None), help="JSON pipeline config")
    common.add_argument("--workdir", default=d(None), help="overrides paths.workdir")
    common.add_argument("--seed", type=int, default=d(None), help="overrides every seed in the config")
    common.add_argument("--threads", type=int, default=d(1), help="BLAS/OpenMP threads (default 1)")
    common.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE",
                        help="override a config entry, e.g. labels.min_users=50")
    common.add_argument("--strict", action="store_true", default=d(False),
                        help="fail instead of running missing upstream stages")
    common.add_argument("--force", action="store_true", default=d(False),
                        help="rebuild upstream artifacts made under a different config")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common, sub_common = _common_flags(False), _common_flags(True)
    p = _Parser(prog="usergeo", description="User geolocation from text and interaction graphs.",
                parents=[common])
    p.add_argument("--version", action="version", version=f"usergeo {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic dataset into <workdir>/data",
        "ingest": "parse records, resolve geotags, write ground truth and tokens",
        "build-graph": "build the extended mention/follower multiplex",
        "build-labels": "build city or k-d tree label classes",
        "liw": "select location indicative words",
        "train": "fit the selected models on all labelled users",
        "evaluate": "cross-validate the selected models",
        "profile-report": "profile-location vs ground-truth distance report",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, parents=[sub_common])
        if name == "synth":
            sp.add_argument("--out", help="output directory (default <workdir>/data)")
    return p


def make_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else from_dict({})
    if args.workdir:
        cfg.paths.workdir = args.workdir
    if args.seed is not None:
        cfg.seed = cfg.eval.seed = cfg.synth.seed = args.seed
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        set_override(cfg, key.strip(), value)
    # rebuild so nested types are validated the same way as a config file
    return from_dict(to_dict(cfg))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = make_config(args)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        runner = Runner(cfg, strict=args.strict, force=args.force)
        with threadpool_limits(limits=args.threads):
            if args.command == "synth":
                runner.stage_synth(Path(args.out) if args.out else None)
            else:
                runner.run(args.command)
        return EXIT_OK
    except (UsageError, ConfigError) as exc:
        print(f"usergeo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"usergeo: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError, ValueError, KeyError) as exc:
        print(f"usergeo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
