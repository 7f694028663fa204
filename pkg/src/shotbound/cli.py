"""Command-line entry point: ``shotbound <subcommand> ...``.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
import time
from typing import Optional, Sequence

from . import classify, dataprep, evaluate, metrics, synthkit, train
from .errors import ShotboundError
from .frameio import open_y4m

log = logging.getLogger("shotbound")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _metric_flags() -> argparse.ArgumentParser:
    d = metrics.DEFAULT_CONFIG
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("feature options")
    g.add_argument("--color-bins", type=int, default=d.color_bins)
    g.add_argument("--edge-bins", type=int, default=d.edge_bins)
    g.add_argument("--luma-bins", type=int, default=d.luma_bins)
    g.add_argument("--stats-grid", type=int, default=d.stats_grid)
    g.add_argument("--cum-grid", type=int, default=d.cum_grid)
    g.add_argument("--edge-grid", type=int, default=d.edge_grid)
    g.add_argument("--edge-thresh", type=float, default=d.edge_thresh)
    g.add_argument("--block-thresh", type=float, default=d.block_thresh)
    g.add_argument("--radius", type=int, default=d.radius, help="context window radius in frames")
    return p


def _detect_flags() -> argparse.ArgumentParser:
    d = train.DetectParams()
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("detection options")
    g.add_argument("--p-cut", type=float, default=d.p_cut)
    g.add_argument("--p-grad", type=float, default=d.p_grad)
    g.add_argument("--min-gap", type=int, default=d.min_gap)
    g.add_argument("--flash-window", type=int, default=d.flash_window)
    g.add_argument("--flash-sim", type=float, default=d.flash_sim)
    g.add_argument("--tol", type=int, default=d.tol, help="matching tolerance in frames")
    return p


def _train_flags() -> argparse.ArgumentParser:
    d = train.TrainParams()
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("training options")
    g.add_argument("--n-trees", type=int, default=d.n_trees)
    g.add_argument("--max-depth", type=int, default=d.max_depth)
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--min-samples-leaf", type=int, default=d.min_samples_leaf)
    g.add_argument("--l2-lambda", type=float, default=d.l2_lambda)
    g.add_argument("--negative-ratio", type=float, default=d.negative_ratio)
    g.add_argument("--seed", type=int, default=d.seed)
    return p


def metric_config(args) -> metrics.MetricConfig:
    return metrics.MetricConfig(
        color_bins=args.color_bins, edge_bins=args.edge_bins, luma_bins=args.luma_bins,
        stats_grid=args.stats_grid, cum_grid=args.cum_grid, edge_grid=args.edge_grid,
        edge_thresh=args.edge_thresh, block_thresh=args.block_thresh, radius=args.radius,
    )


def detect_params(args) -> train.DetectParams:
    return train.DetectParams(args.p_cut, args.p_grad, args.min_gap, args.flash_window,
                              args.flash_sim, args.tol)


def train_params(args) -> train.TrainParams:
    return train.TrainParams(args.n_trees, args.max_depth, args.learning_rate, args.min_samples_leaf,
                             args.l2_lambda, args.negative_ratio, args.seed)


def load_track(path, config: metrics.MetricConfig) -> metrics.FeatureTrack:
    with open_y4m(path) as reader:
        return metrics.extract_features(reader, config)


def _open_out(path):
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", encoding="utf-8")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def resolve_metric(schema: Sequence[str], name: str) -> int:
    if name in schema:
        return schema.index(name)
    central = f"{name}[t-1,t]"
    if central in schema:
        return schema.index(central)
    raise ShotboundError(f"unknown metric {name!r}; choose one of {', '.join(metrics.SCALAR_NAMES)}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_detect(args) -> int:
    modes = [bool(args.cut_model or args.grad_model), args.threshold is not None, args.adaptive]
    if sum(modes) != 1:
        raise _UsageError("select exactly one of --cut-model/--grad-model, --threshold, --adaptive")
    if modes[0] and not (args.cut_model and args.grad_model):
        raise _UsageError("model mode needs both --cut-model and --grad-model")
    config = metric_config(args)
    dp = detect_params(args)
    start = time.perf_counter()
    track = load_track(args.input, config)
    if modes[0]:
        cut_model = classify.GbdtModel.load(args.cut_model)
        grad_model = classify.GbdtModel.load(args.grad_model)
        events = classify.classify_stream(track, cut_model, grad_model, dp.p_cut, dp.p_grad)
    else:
        column = track.values[:, resolve_metric(track.schema, args.metric)] if len(track) else []
        if args.threshold is not None:
            events = classify.threshold_classify(column, args.threshold)
        else:
            events = classify.adaptive_threshold_classify(column, args.window, args.k, args.floor)
    events = classify.postfilter(events, track, dp.min_gap, dp.flash_window, dp.flash_sim)
    elapsed = time.perf_counter() - start
    with _open_out(args.output) as out:
        classify.write_events(events, out)
    fps = evaluate.throughput(len(track), elapsed) if elapsed > 0 else 0.0
    print(f"processed {len(track)} frames in {elapsed:.3f} s ({fps:.1f} fps); {len(events)} events",
          file=sys.stderr)
    return EXIT_OK


def _collect_pairs(args) -> list[tuple[str, str]]:
    pairs = [tuple(p) for p in (args.pair or [])]
    for d in args.dir or []:
        for video in sorted(glob.glob(os.path.join(d, "*.y4m"))):
            ann = os.path.splitext(video)[0] + ".ann"
            if os.path.exists(ann):
                pairs.append((video, ann))
    if not pairs:
        raise _UsageError("no training data: use --pair VIDEO ANN or --dir DIR")
    return pairs


def load_videos(pairs, config) -> list[train.LabeledVideo]:
    videos = []
    for video, ann in pairs:
        videos.append(train.LabeledVideo(os.path.basename(video), load_track(video, config),
                                         classify.read_events(ann)))
    return videos


def cmd_train(args) -> int:
    config = metric_config(args)
    params = train_params(args)
    videos = load_videos(_collect_pairs(args), config)
    if args.dump_dataset:
        data = train.assemble_dataset(videos, params)
        with open(args.dump_dataset, "w", encoding="utf-8") as fh:
            track = metrics.FeatureTrack(data.schema, data.X)
            metrics.write_features_csv(track, fh, labels=list(data.labels), indices=list(data.frames))
    if args.cv:
        result = train.cross_validate(videos, params, args.cv, detect_params(args))
        for i, (ids, f1) in enumerate(zip(result.folds, result.f1)):
            print(f"fold {i}: F1={f1:.4f}  held out: {', '.join(ids)}")
        print(f"mean F1 over {args.cv} folds: {result.mean_f1:.4f}")
    cut_model, grad_model = train.train_models(videos, params)
    cut_model.save(args.cut_out)
    grad_model.save(args.grad_out)
    for model in (cut_model, grad_model):
        top = train.feature_importance(model)[: args.top]
        print(f"{model.class_tag} model: {len(model.trees)} trees; top features by gain:")
        for name, gain in top:
            print(f"  {name:28s} {gain:12.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.gt) != len(args.pred):
        raise _UsageError("--gt and --pred must be given the same number of times")
    report = evaluate.EvalReport(method=args.method)
    for gt_path, pred_path in zip(args.gt, args.pred):
        gt = classify.read_events(gt_path)
        pred = classify.read_events(pred_path)
        report = report + evaluate.evaluate(gt, pred, args.tol)
    report.method = args.method
    if args.frames and args.elapsed:
        report.frames, report.elapsed = args.frames, args.elapsed
    print(evaluate.format_table([report]))
    print(f"kind mismatches: {report.kind_mismatches}; "
          f"cut F1={report.cut.f1:.4f}; gradual F1={report.gradual.f1:.4f}")
    if args.json:
        with _open_out(args.json) as out:
            out.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_candidates(args) -> int:
    outputs = {os.path.basename(p): dataprep.read_detector_output(p) for p in args.detector_outputs}
    segments = dataprep.merge_candidates(outputs, args.video_length, args.min_separation, args.video_id)
    with _open_out(args.output) as out:
        dataprep.write_manifest(segments, out)
    print(f"{len(segments)} candidate segments", file=sys.stderr)
    return EXIT_OK


def cmd_votes(args) -> int:
    with open(args.votes, encoding="utf-8") as fh:
        records = dataprep.tally(dataprep.read_votes(fh), args.min_votes, args.margin)
    for seg_id in sorted(records):
        rec = records[seg_id]
        yes = sum(rec.votes)
        print(f"{seg_id}\t{rec.status}\tyes={yes} no={len(rec.votes) - yes}")
    if args.output:
        if args.manifest:
            with open(args.manifest, encoding="utf-8") as fh:
                segments = dataprep.read_manifest(fh)
        else:
            segments = [
                dataprep.CandidateSegment(sid.rsplit(":", 1)[0], int(sid.rsplit(":", 1)[1]), 0, 0)
                for sid in records if ":" in sid
            ]
        accepted = [s for s in segments if records.get(s.segment_id) and
                    records[s.segment_id].status == dataprep.ACCEPTED]
        with _open_out(args.output) as out:
            dataprep.finalize_annotations(accepted, out)
    return EXIT_OK


def _geometry(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"geometry must look like 64x64, got {text!r}") from None


def cmd_synth(args) -> int:
    if bool(args.manifest) == bool(args.random):
        raise _UsageError("give exactly one of --manifest or --random N")
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = synthkit.Manifest.from_json(fh.read())
        if args.geometry:
            manifest.geometry = args.geometry
    else:
        manifest = synthkit.Manifest(synthkit.random_corpus(args.random, args.seed),
                                     geometry=args.geometry or (64, 64), seed=args.seed)
    written = synthkit.materialize(manifest, args.outdir)
    if args.save_manifest:
        with open(args.save_manifest, "w", encoding="utf-8") as fh:
            fh.write(manifest.to_json())
    for video, ann in written:
        print(f"{video}\t{ann}")
    return EXIT_OK


def cmd_features(args) -> int:
    track = load_track(args.input, metric_config(args))
    with _open_out(args.output) as out:
        metrics.write_features_csv(track, out)
    return EXIT_OK


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    mf, df, tf = _metric_flags(), _detect_flags(), _train_flags()
    parser = _Parser(prog="shotbound", description="Shot boundary detection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", parents=[mf, df], help="detect shot boundaries in a Y4M stream")
    p.add_argument("input", help="Y4M file, or - for standard input")
    p.add_argument("-o", "--output", help="detection file (default: stdout)")
    p.add_argument("--cut-model")
    p.add_argument("--grad-model")
    p.add_argument("--threshold", type=float, help="fixed-threshold baseline on --metric")
    p.add_argument("--adaptive", action="store_true", help="adaptive-threshold baseline on --metric")
    p.add_argument("--metric", default="blockmean")
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--k", type=float, default=3.0)
    p.add_argument("--floor", type=float, default=0.05)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("train", parents=[mf, df, tf], help="train cut and gradual models")
    p.add_argument("--pair", nargs=2, action="append", metavar=("VIDEO", "ANN"))
    p.add_argument("--dir", action="append", help="directory of NAME.y4m + NAME.ann pairs")
    p.add_argument("--cut-out", default="cut_model.json")
    p.add_argument("--grad-out", default="grad_model.json")
    p.add_argument("--cv", type=int, default=0, help="run grouped k-fold cross-validation first")
    p.add_argument("--dump-dataset", help="write the labeled training samples as CSV")
    p.add_argument("--top", type=int, default=10, help="features to list by importance")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--tol", type=int, default=2)
    p.add_argument("--method", default="proposed")
    p.add_argument("--frames", type=int, default=0, help="frames processed, for the speed column")
    p.add_argument("--elapsed", type=float, default=0.0, help="seconds spent, for the speed column")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("candidates", help="merge detector outputs into candidate segments")
    p.add_argument("detector_outputs", nargs="+")
    p.add_argument("--video-length", type=int, required=True)
    p.add_argument("--video-id", default="video")
    p.add_argument("--min-separation", type=int, default=dataprep.SEGMENT_LENGTH)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("votes", help="aggregate observer votes")
    p.add_argument("votes", help="CSV of segment_id,judgment")
    p.add_argument("--manifest", help="candidate manifest CSV")
    p.add_argument("--min-votes", type=int, default=5)
    p.add_argument("--margin", type=int, default=2)
    p.add_argument("-o", "--output", help="annotation file for accepted segments")
    p.set_defaults(func=cmd_votes)

    p = sub.add_parser("synth", help="generate synthetic Y4M clips with ground truth")
    p.add_argument("--manifest", help="JSON list of sequence specs")
    p.add_argument("--random", type=int, default=0, help="generate N random sequences instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--geometry", type=_geometry)
    p.add_argument("--outdir", default=".")
    p.add_argument("--save-manifest", help="write the (possibly random) manifest used")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[mf], help="dump per-frame feature tracks as CSV")
    p.add_argument("input", help="Y4M file, or - for standard input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_features)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"shotbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShotboundError, OSError, ValueError) as exc:
        print(f"shotbound: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
