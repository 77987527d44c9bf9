"""Command-line entry point: ``qbekws <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import audio, harness, pipeline, speaker
from .errors import QbeError
from .profile import Thresholds, load_profile, save_profile
from .qbef import read_embeddings, read_features, write_features

log = logging.getLogger("qbekws")


def _load_input(path):
    p = Path(path)
    if p.suffix.lower() == ".wav":
        return audio.load_wav(p)
    return read_features(p)


def _grid(text):
    """``lo:hi:n`` for an evenly spaced grid, or a comma-separated list."""
    if text is None:
        return None
    if ":" in text:
        lo, hi, n = text.split(":")
        return tuple(np.linspace(float(lo), float(hi), int(n)))
    return tuple(float(x) for x in text.split(","))


def _thresholds(args, base: Thresholds) -> Thresholds:
    return Thresholds(
        base.t1 if args.t1 is None else args.t1,
        base.t2 if args.t2 is None else args.t2,
        base.t3 if args.t3 is None else args.t3,
    )


def _write_report(rows, path):
    lines = [json.dumps(rec.to_json(uid, label)) for uid, label, rec in rows]
    if path:
        Path(path).write_text("\n".join(lines) + "\n")
    return lines


def cmd_features(args):
    cfg = audio.FramingConfig()
    out = Path(args.out)
    if len(args.inputs) > 1 or out.is_dir():
        out.mkdir(parents=True, exist_ok=True)
    for src in args.inputs:
        feats = audio.extract(audio.load_wav(src), args.kind, cfg)
        dest = out / (Path(src).stem + ".qbef") if out.is_dir() else out
        write_features(feats, dest)
        print(f"{src}: {feats.frames} x {feats.dims} {feats.kind} -> {dest}")


def cmd_enroll(args):
    config = pipeline.PipelineConfig(stage1_kind=args.stage1_kind)
    if args.keyword_feats:
        utts = [read_features(p) for p in args.keyword_feats]
        if args.awe_feats:
            awe = [read_features(p) for p in args.awe_feats]
            if len(awe) != len(utts):
                raise QbeError("--awe-feats must pair one-to-one with --keyword-feats")
            utts = [pipeline.UtteranceFeatures(k, a) for k, a in zip(utts, awe)]
    elif args.keyword_wavs:
        utts = [audio.load_wav(p) for p in args.keyword_wavs]
    else:
        raise QbeError("give --keyword-wavs or --keyword-feats")
    sv_utts = [_load_input(p) for p in args.sv_utts] if args.sv_utts else None
    sv_embs = list(read_embeddings(args.sv_embeddings)) if args.sv_embeddings else None
    awe_embs = list(read_embeddings(args.awe_embeddings)) if args.awe_embeddings else None
    th = Thresholds(args.t1 if args.t1 is not None else float("inf"),
                    args.t2 if args.t2 is not None else 2.0,
                    args.t3 if args.t3 is not None else -1.0)
    profile = pipeline.enroll(args.speaker, utts, sv_utts, config, th,
                              awe_embeddings=awe_embs, sv_embeddings=sv_embs)
    path = save_profile(profile, args.out)
    t = profile.keyword_template
    print(f"enrolled {args.speaker}: {len(utts)} utterances, template {t.frames} x {t.dims} "
          f"{t.kind} -> {path}")


def cmd_detect(args):
    profile = load_profile(args.profile)
    th = _thresholds(args, profile.thresholds)
    rows = []
    for src in args.inputs:
        rec = pipeline.detect(profile, _load_input(src), thresholds=th)
        rows.append((Path(src).stem, None, rec))
    for line in _write_report(rows, args.report):
        print(line)
    n = sum(r[2].final for r in rows)
    print(f"{n}/{len(rows)} utterances positive", file=sys.stderr)


def cmd_gen_dev(args):
    pos = [_load_input(p) for p in args.pos]
    neg = [_load_input(p) for p in args.neg]
    dev = harness.build_dev_set(pos, neg, args.n, args.gap, args.seed)
    path = harness.save_dev_set(dev, args.out)
    print(f"{len(dev)} utterances ({args.n} positive) -> {path}")


def cmd_synth(args):
    from .synth import make_corpus

    corpus = make_corpus(args.seed, args.n_enroll, args.n_keywords, args.n_fillers)
    out = Path(args.out)
    for group in ("enrollment", "keywords", "fillers"):
        (out / group).mkdir(parents=True, exist_ok=True)
        for k, buf in enumerate(getattr(corpus, group)):
            audio.write_wav(buf, out / group / f"{group[:3]}{k:03d}.wav")
    print(f"synthetic corpus (seed {args.seed}) -> {out}")


def cmd_tune(args):
    profile = load_profile(args.profile)
    dev = harness.load_dev_set(args.devset)
    grid = harness.GridSpec(_grid(args.t1_grid), _grid(args.t2_grid), _grid(args.t3_grid))
    th, m = harness.tune_thresholds(profile, dev, grid, args.alpha)
    out = args.out or args.profile
    save_profile(profile.with_thresholds(th), out)
    print("mode: cached stage statistics (all gates open during caching)")
    print(f"t1={th.t1:.6g} t2={th.t2:.6g} t3={th.t3:.6g}")
    print(f"MR={m.mr:.4f} FAR={m.far:.4f} alpha={m.alpha:g} score={m.score:.4f} -> {out}")


def cmd_evaluate(args):
    profile = load_profile(args.profile)
    dev = harness.load_dev_set(args.devset)
    th = _thresholds(args, profile.thresholds)
    rows = harness.run_devset(profile, dev, th)
    _write_report(rows, args.report)
    m = harness.metrics_from_decisions([r[1] for r in rows], [r[2].final for r in rows], args.alpha)
    print(json.dumps(m.as_dict()))
    print(f"MR={m.mr:.4f} FAR={m.far:.4f} score={m.score:.4f}", file=sys.stderr)


def cmd_sv_calibrate(args):
    if args.trials:
        trials = speaker.read_trials(args.trials)
    elif args.embeddings:
        by_spk = {}
        for item in args.embeddings:
            name, _, path = item.rpartition("=")
            by_spk[name or Path(path).stem] = list(read_embeddings(path))
        trials = harness.generate_sv_trials(by_spk, args.seed, args.n_nontarget)
        if args.trials_out:
            speaker.write_trials(trials, args.trials_out)
    else:
        raise QbeError("give --trials or --embeddings")
    result = speaker.calibrate(trials, args.p_target, args.c_miss, args.c_fa)
    doc = {**result.as_dict(), "n_trials": len(trials),
           "p_target": args.p_target, "c_miss": args.c_miss, "c_fa": args.c_fa}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    print(json.dumps(doc))
    if result.degenerate:
        print("warning: all trial scores identical; EER/minDCF are degenerate", file=sys.stderr)


def _add_threshold_flags(p):
    p.add_argument("--t1", type=float, help="stage-1 SDTW cost ceiling")
    p.add_argument("--t2", type=float, help="stage-2 AWE cost ceiling")
    p.add_argument("--t3", type=float, help="speaker cosine floor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbekws", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract fbank/mfcc features from WAV files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--kind", choices=("fbank", "mfcc"), default="fbank")
    p.add_argument("--out", required=True, help="QBEF file, or directory for several inputs")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("enroll", help="build and save an enrollment profile")
    p.add_argument("--speaker", required=True)
    p.add_argument("--keyword-wavs", nargs="+")
    p.add_argument("--keyword-feats", nargs="+", help="external stage-1 features (QBEF)")
    p.add_argument("--awe-feats", nargs="+", help="stage-2 features paired with --keyword-feats")
    p.add_argument("--awe-embeddings", help="QBEF embedding file, one row per keyword utterance")
    p.add_argument("--sv-utts", nargs="+", help="utterances for the speaker template")
    p.add_argument("--sv-embeddings", help="QBEF embedding file of precomputed speaker vectors")
    p.add_argument("--stage1-kind", choices=("mfcc", "fbank"), default="mfcc")
    _add_threshold_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("detect", help="run the cascade on test utterances")
    p.add_argument("--profile", required=True)
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--report", help="write JSON-lines decision records here")
    _add_threshold_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("gen-dev", help="splice a labelled development set")
    p.add_argument("--pos", nargs="+", required=True)
    p.add_argument("--neg", nargs="+", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--gap", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dev)

    p = sub.add_parser("synth", help="write a seeded synthetic keyword corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-enroll", type=int, default=5)
    p.add_argument("--n-keywords", type=int, default=20)
    p.add_argument("--n-fillers", type=int, default=20)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tune", help="grid-search thresholds on a dev set")
    p.add_argument("--profile", required=True)
    p.add_argument("--devset", required=True)
    p.add_argument("--alpha", type=float, default=harness.ALPHA)
    p.add_argument("--t1-grid", help="lo:hi:n or comma list (default: 40 points over observed costs)")
    p.add_argument("--t2-grid", help="default 0:2 step 0.05")
    p.add_argument("--t3-grid", help="default -1:1 step 0.05")
    p.add_argument("--out", help="where to save the tuned profile (default: overwrite)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="MR / FAR / score at fixed thresholds")
    p.add_argument("--profile", required=True)
    p.add_argument("--devset", required=True)
    p.add_argument("--alpha", type=float, default=harness.ALPHA)
    p.add_argument("--report")
    _add_threshold_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sv-calibrate", help="EER / minDCF threshold calibration")
    p.add_argument("--trials", help="existing 'score<TAB>label' file")
    p.add_argument("--embeddings", nargs="+", help="per-speaker QBEF embedding files, [name=]path")
    p.add_argument("--n-nontarget", type=int)
    p.add_argument("--trials-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-target", type=float, default=0.01)
    p.add_argument("--c-miss", type=float, default=1.0)
    p.add_argument("--c-fa", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sv_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (QbeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
