"""Command-line front end: ``wearload <command> [options]``.

Data goes to files or stdout, progress to stderr. Exit status is 0 on
success, 1 when input fails validation, 2 on an internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import typing
from dataclasses import MISSING, fields
from pathlib import Path

from . import clean as clean_mod
from . import evaluate, ingest, synth
from .config import CLASSIFIERS, PipelineConfig, load_config
from .features import write_feature_csv

log = logging.getLogger("wearload")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


VALIDATION_ERRORS = (ingest.IngestError, clean_mod.CleanError, evaluate.TooFewSessions,
                     evaluate.TooFewPerClass, ValueError, FileNotFoundError, json.JSONDecodeError)


@contextlib.contextmanager
def stage(module, op):
    """Tag any failure with the module and operation it came from."""
    try:
        yield
    except CliError:
        raise
    except VALIDATION_ERRORS as exc:
        raise CliError(1, f"{module}.{op}: {type(exc).__name__}: {exc}") from exc
    except Exception as exc:
        raise CliError(2, f"{module}.{op}: {type(exc).__name__}: {exc}") from exc


# ---------------------------------------------------------------- config flags

def _flag_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    return args[0] if args else tp


def add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline configuration (flags override --config)")
    g.add_argument("--config", help="JSON file of PipelineConfig fields; overrides the defaults")
    hints = typing.get_type_hints(PipelineConfig)
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not MISSING else None
        if f.name == "jobs":
            default = os.cpu_count() or 1
        help_ = f"{f.metadata.get('help', '')} (default: {default})".replace("%", "%%")
        tp = _flag_type(hints[f.name])
        names = [flag]
        if f.name == "windows_per_session":
            names.append("--max-windows-per-session")
        if tp is bool:
            g.add_argument(*names, dest=f.name, action=argparse.BooleanOptionalAction,
                           default=None, help=help_)
        elif f.name == "classifier":
            g.add_argument(*names, dest=f.name, choices=CLASSIFIERS + ("all",), default=None,
                           help=help_)
        else:
            g.add_argument(*names, dest=f.name, type=tp, default=None, metavar=tp.__name__.upper(),
                           help=help_)


def resolve_config(args) -> PipelineConfig:
    with stage("config", "load_config"):
        cfg = load_config(args.config) if args.config else PipelineConfig()
        overrides = {f.name: getattr(args, f.name) for f in fields(PipelineConfig)}
        if overrides["jobs"] is None and not args.config:
            overrides["jobs"] = os.cpu_count() or 1
        return cfg.updated(**overrides).validate()


# ---------------------------------------------------------------- helpers

def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _load_sessions(manifest, cfg):
    with stage("ingest", "read_manifest"):
        entries = ingest.read_manifest(manifest)
    sessions = []
    for e in entries:
        with stage("ingest", f"load_session({e.get('id', '?')})"):
            sessions.append(ingest.load_session(e))
    log.info("loaded %d sessions from %s", len(sessions), manifest)
    return sessions


def _corpus(args, cfg):
    sessions = _load_sessions(args.manifest, cfg)
    with stage("evaluate", "prepare_corpus"):
        records = evaluate.prepare_corpus(sessions, cfg)
    with stage("evaluate", "label_corpus"):
        corpus = evaluate.label_corpus(records)
    for r in corpus.excluded:
        log.info("session %s excluded: %s", r.id, r.admission)
    return corpus


# ---------------------------------------------------------------- commands

def cmd_synthesize(args):
    with stage("synth", "GeneratorConfig"):
        base = synth.GeneratorConfig()
        if args.gen_config:
            base = synth.GeneratorConfig.from_dict(json.loads(Path(args.gen_config).read_text()))
        kw = {k: getattr(args, k) for k in ("n_sessions", "session_minutes",
                                             "low_quality_sessions", "low_quality_rate")
              if getattr(args, k) is not None}
        if args.seed is not None:
            kw["seed"] = args.seed
        gcfg = synth.GeneratorConfig.from_dict({**base.to_dict(), **kw})
    with stage("synth", "gen_corpus"):
        manifest = synth.gen_corpus(gcfg, args.out)
    print(manifest)
    return 0


def cmd_ingest(args):
    cfg = resolve_config(args)
    with stage("ingest", "read_manifest"):
        entries = ingest.read_manifest(args.manifest)
    rows, failed = [], False
    for e in entries:
        sid = e.get("id", "?")
        try:
            with stage("ingest", f"load_session({sid})"):
                s = ingest.load_session(e)
        except CliError as exc:
            failed = True
            print(f"{sid}\tInvalid\t{exc}", file=sys.stderr)
            rows.append({"id": sid, "status": "Invalid", "error": str(exc)})
            continue
        try:
            mask = clean_mod.detect_artifacts(s.rr, cfg.artifact_window_pts, cfg.artifact_threshold)
            _, q = clean_mod.repair(s.rr, mask)
        except clean_mod.TooFewValidSamples:
            n = len(s.rr)
            q = ingest.QualityReport(0.0, n, n)
        adm = ingest.session_admissible(s, q)
        print(f"{s.id}\t{adm}\tquality={q.valid_fraction:.4f}")
        rows.append({"id": s.id, "status": str(adm), "quality": q.__dict__})
    report = {"config_hash": cfg.hash, "seed": cfg.seed, "sessions": rows}
    if args.report:
        _write_text(args.report, _dumps(report))
    return 1 if failed else 0


def cmd_features(args):
    cfg = resolve_config(args)
    sessions = _load_sessions(args.manifest, cfg)
    with stage("evaluate", "prepare_corpus"):
        records = evaluate.prepare_corpus(sessions, cfg)
    with stage("evaluate", "label_corpus"):
        corpus = evaluate.label_corpus(records)
    if args.dump_clean:
        out = Path(args.dump_clean)
        out.mkdir(parents=True, exist_ok=True)
        with stage("clean", "dump_clean"):
            for s in sessions:
                mask = clean_mod.detect_artifacts(s.rr, cfg.artifact_window_pts,
                                                  cfg.artifact_threshold)
                try:
                    repaired, _ = clean_mod.repair(s.rr, mask)
                    ws = clean_mod.make_windows(s, repaired, mask, cfg.tachogram_hz,
                                                cfg.window_s * 1000, cfg.stride_s * 1000)
                except (clean_mod.TooFewValidSamples, clean_mod.SessionTooShort):
                    ws = []
                d = dict(clean_mod.dump_clean(s, mask, ws), config_hash=cfg.hash, seed=cfg.seed)
                (out / f"{s.id}_clean.json").write_text(_dumps(d), encoding="utf-8")

    def rows():
        for r in corpus.sessions:
            label = "High" if r.label else "Low"
            for idx, v in zip(r.window_index, r.vectors):
                yield r.id, int(idx), label, v

    with stage("features", "write_feature_csv"):
        write_feature_csv(args.out, rows(), comment=f"config_hash={cfg.hash} seed={cfg.seed}")
    log.info("wrote %s (%d sessions, %d excluded)", args.out, len(corpus.sessions),
             len(corpus.excluded))
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    if cfg.classifier == "all":
        raise CliError(1, "cli.train: choose a single classifier")
    corpus = _corpus(args, cfg)
    with stage("evaluate", "fit_pipeline"):
        pipe = evaluate.fit_pipeline(cfg.classifier, corpus.sessions, cfg, cfg.seed)
    d = pipe.to_dict()
    d["config"] = json.loads(cfg.to_json())
    _write_text(args.model, json.dumps(d, sort_keys=True) + "\n")
    return 0


def cmd_evaluate(args):
    cfg = resolve_config(args)
    corpus = _corpus(args, cfg)
    names = CLASSIFIERS if cfg.classifier == "all" else (cfg.classifier,)
    reports = []
    for name in names:
        with stage("evaluate", f"run_cv({name})"):
            reports.append(evaluate.run_cv(corpus, name, cfg))
    doc = {"config_hash": cfg.hash, "seed": cfg.seed,
           "n_sessions": len(corpus.sessions), "high_threshold": corpus.threshold,
           "excluded": [{"id": r.id, "reason": str(r.admission)} for r in corpus.excluded],
           "reports": [r.to_dict() for r in reports]}
    _write_text(args.report, _dumps(doc))
    print(evaluate.render_report(reports), file=sys.stderr if args.report in (None, "-") else sys.stdout)
    return 0


def _list(conv):
    def parse(text):
        try:
            return [conv(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def cmd_grid(args):
    cfg = resolve_config(args)
    corpus = _corpus(args, cfg)
    with stage("evaluate", "grid_report"):
        g = evaluate.grid_report(corpus, args.blocks, args.dropout, cfg)
    table = g.render()
    doc = dict(g.to_dict(), table=table.splitlines())
    if args.report:
        _write_text(args.report, _dumps(doc))
    print(table)
    return 0


# ---------------------------------------------------------------- entry

def build_parser():
    p = argparse.ArgumentParser(prog="wearload",
                                description="Perceived-workload prediction from wrist RR and acceleration data.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                        help="more progress on stderr")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="errors only on stderr")
    p.set_defaults(verbose=0, quiet=False)
    for a in common._actions:
        p._add_action(a)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common],
                       help="write a synthetic corpus with ground truth")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--gen-config", help="JSON of generator settings")
    s.add_argument("--n-sessions", type=int)
    s.add_argument("--session-minutes", type=float)
    s.add_argument("--low-quality-sessions", type=int,
                   help="sessions given a heavy artifact rate")
    s.add_argument("--low-quality-rate", type=float)
    s.add_argument("--seed", type=int, help="corpus seed (default: 0)")
    s.set_defaults(func=cmd_synthesize)

    specs = [
        ("ingest", cmd_ingest, "validate sessions and report Admit/Exclude"),
        ("features", cmd_features, "write the window feature matrix as CSV"),
        ("train", cmd_train, "fit a classifier on every admitted session"),
        ("evaluate", cmd_evaluate, "stratified cross-validation report"),
        ("grid", cmd_grid, "LSTM blocks x dropout accuracy table"),
    ]
    for name, func, help_ in specs:
        c = sub.add_parser(name, parents=[common], help=help_)
        c.add_argument("--manifest", required=True, help="manifest.jsonl listing the sessions")
        if name in ("ingest", "evaluate", "grid"):
            c.add_argument("--report", help="JSON report path ('-' for stdout)",
                           default="-" if name == "evaluate" else None)
        if name == "features":
            c.add_argument("--out", required=True, help="feature CSV path")
            c.add_argument("--dump-clean", metavar="DIR",
                           help="also write per-session artifact flags and windows")
        if name == "train":
            c.add_argument("--model", required=True, help="output model JSON")
        if name == "grid":
            c.add_argument("--blocks", type=_list(int), default=[50, 100, 150, 200, 250],
                           help="comma-separated LSTM sizes (default: 50,100,150,200,250)")
            c.add_argument("--dropout", type=_list(float), default=[0.0, 0.2, 0.4, 0.6],
                           help="comma-separated dropout rates (default: 0.0,0.2,0.4,0.6)")
        add_config_flags(c)
        c.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"wearload {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
