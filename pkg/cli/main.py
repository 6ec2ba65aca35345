"""
iotnot command line.

    python -m cli.main extract --pcap a.pcap b.pcap --manifest devices.csv --width 600 --out slots.csv
    python -m cli.main train-traffic --features slots.csv --manifest devices.csv --width 600 --select --out m600.json
    python -m cli.main train-dhcp --events events.jsonl --manifest devices.csv --out dhcp.json
    python -m cli.main predict --model m300.json,m600.json,m1200.json,dhcp.json --unified --events events.jsonl --out verdicts.jsonl
    python -m cli.main evaluate --verdicts verdicts.jsonl --manifest devices.csv --out report.json --cdf-csv cdf.csv
    python -m cli.main screen --features slots.csv --manifest devices.csv --width 600 --out separation.json

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

from capture.loader import load_event_traces, load_pcap_traces
from capture.manifest import load_manifest
from capture.records import DeviceManifest, DeviceTrace
from classifier.dhcp_tree import DhcpSignatureModel, classify_devices, train_dhcp_model
from classifier.errors import WidthMismatch
from classifier.linear import LabeledSlot, LinearModel, label_slots, predict, train_linear_model
from classifier.persistence import load_model, save_model
from classifier.selection import SelectionConfig, feature_separation, greedy_select
from classifier.unified import UnifiedConfig, check_models, unified_predict_trace
from config.settings import Settings, configure_logging, get_settings
from evaluation.report import EvaluationReport, attach_truth, build_report, read_verdicts, write_cdf_csv, write_report
from features.dump import read_feature_dump, write_feature_dump
from features.extractor import ALL_FEATURES, FeatureId, extract_trace_features
from features.slots import SlotConfig
from utils.errors import DataError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


def _fmt(value: Optional[float]) -> str:
    return 'n/a' if value is None else f'{value:.4f}'


def format_report_output(report: EvaluationReport):
    """Print the evaluation summary."""
    print("\n" + "=" * 60)
    print("EVALUATION")
    print("=" * 60)
    print(f"{'':<16} {'Recall':<10} {'Precision':<10} {'F1':<10}")
    print("-" * 60)
    for name, metrics in (('pooled', report.metrics), ('device-averaged', report.device_metrics)):
        print(f"{name:<16} {_fmt(metrics.recall):<10} {_fmt(metrics.precision):<10} {_fmt(metrics.f1):<10}")
    print("-" * 60)
    c = report.confusion
    print(f"TP {c.tp}  FP {c.fp}  TN {c.tn}  FN {c.fn}  Abstain {report.abstained}")
    print(f"Devices: {len(report.per_device)}")
    print("=" * 60)


def format_selection_output(result):
    """Print the greedy chain, best set per step."""
    print("\n" + "=" * 60)
    print(f"FEATURE SELECTION - {result.slot_width:g}s slots")
    print("=" * 60)
    print(f"Screened features: {len(result.screened)} (top 10)")
    for feature, score in sorted(result.screened.items(), key=lambda item: -item[1])[:10]:
        print(f"  {feature.value:<22} {score:.4f}")
    print("-" * 60)
    print(f"Selected: {', '.join(f.value for f in result.selected)}")
    print("=" * 60)


def _load_traces(args, manifest: DeviceManifest, settings: Settings, progress: bool) -> List[DeviceTrace]:
    if args.pcap:
        return load_pcap_traces(args.pcap, manifest, max_workers=settings.max_workers, progress=progress)
    return load_event_traces(args.events, manifest)


def _labeled_slots(args, manifest: DeviceManifest) -> List[LabeledSlot]:
    vectors = read_feature_dump(args.features)
    mismatched = {vector.width for vector in vectors if vector.width != args.width}
    if mismatched:
        raise WidthMismatch(f'{args.features} holds {", ".join(f"{w:g}s" for w in sorted(mismatched))} slots, '
                            f'expected {args.width:g}s')
    return label_slots(vectors, manifest)


def cmd_extract(args, settings: Settings, progress: bool) -> int:
    manifest = load_manifest(args.manifest).restricted(args.split)
    traces = _load_traces(args, manifest, settings, progress)
    cfg = SlotConfig(width=args.width)
    vectors = [vector for trace in traces for vector in extract_trace_features(trace, cfg)]
    rows = write_feature_dump(vectors, args.out)
    logger.info('wrote %d slots of %d devices to %s', rows, len(traces), args.out)
    return EXIT_OK


def cmd_train_traffic(args, settings: Settings, progress: bool) -> int:
    manifest = load_manifest(args.manifest).restricted(args.split)
    slots = _labeled_slots(args, manifest)

    if args.select:
        try:
            cfg = SelectionConfig(
                k=args.k, alpha=args.alpha, screen_threshold=args.screen_threshold, seed=args.seed,
                slot_width=args.width, lam=settings.logreg_lambda, max_iter=settings.logreg_max_iter,
                tol=settings.logreg_tol, samples_per_device=settings.samples_per_device,
                max_workers=settings.max_workers,
            )
        except ValueError as e:
            raise UsageError(str(e))
        result = greedy_select(ALL_FEATURES, slots, cfg, progress=progress)
        features = result.selected
        report_path = args.report or f'{args.out}.selection.json'
        with open(report_path, 'w', encoding='utf-8') as f:
            json.dump(result.to_dict(), f, indent=2)
            f.write('\n')
        if not args.quiet:
            format_selection_output(result)
    else:
        features = tuple(FeatureId.parse(name) for name in args.feature_set.split(',') if name.strip())
        if not features:
            raise UsageError('--feature-set names no feature')

    model = train_linear_model(
        slots, features, args.width, lam=settings.logreg_lambda, max_iter=settings.logreg_max_iter,
        tol=settings.logreg_tol, samples_per_device=settings.samples_per_device, seed=args.seed,
    )
    save_model(model, args.out)
    logger.info('saved %gs model to %s', args.width, args.out)
    return EXIT_OK


def cmd_train_dhcp(args, settings: Settings, progress: bool) -> int:
    manifest = load_manifest(args.manifest).restricted(args.split)
    traces = _load_traces(args, manifest, settings, progress)
    max_depth = args.max_depth if args.max_depth is not None else settings.tree_max_depth
    model = train_dhcp_model(traces, max_depth=max_depth, delimiters=settings.dhcp_delimiters)
    save_model(model, args.out)
    logger.info('saved DHCP tree (depth %d) to %s', model.depth, args.out)
    return EXIT_OK


def _write_lines(objs, out):
    for obj in objs:
        out.write(json.dumps(obj, separators=(',', ':')) + '\n')


def cmd_predict(args, settings: Settings, progress: bool) -> int:
    models = [load_model(path.strip()) for path in args.model.split(',') if path.strip()]
    linear = [model for model in models if isinstance(model, LinearModel)]
    trees = [model for model in models if isinstance(model, DhcpSignatureModel)]
    if len(trees) > 1:
        raise UsageError('at most one DHCP model may be given')
    if args.width is not None:
        for model in linear:
            if model.slot_width != args.width:
                raise WidthMismatch(f'model width {model.slot_width:g}s does not match --width {args.width:g}s')

    if args.unified:
        cfg = UnifiedConfig()
        by_width = {model.slot_width: model for model in linear}
        check_models(by_width, cfg)
    elif len(models) != 1:
        raise UsageError('without --unified exactly one model must be given')

    manifest = load_manifest(args.manifest).restricted(args.split)
    traces = _load_traces(args, manifest, settings, progress)

    lines = []
    if args.unified:
        dhcp_model = trees[0] if trees else None
        for trace in traces:
            lines.extend(record.to_dict() for record in unified_predict_trace(trace, by_width, dhcp_model, cfg))
    elif linear:
        model = linear[0]
        cfg = SlotConfig(width=model.slot_width)
        for trace in traces:
            for vector in extract_trace_features(trace, cfg):
                prediction = predict(model, vector)
                lines.append({'device': vector.device_key, 'window_start': vector.slot_start, 'width': vector.width,
                              'score': prediction.score, 'verdict': prediction.verdict.value})
    else:
        verdicts = classify_devices(trees[0], traces)
        lines.extend({'device': device, 'window_start': None, 'verdict': verdict.value}
                     for device, verdict in verdicts.items())

    with open(args.out, 'w', encoding='utf-8') as out:
        _write_lines(lines, out)
    logger.info('wrote %d verdicts to %s', len(lines), args.out)
    return EXIT_OK


def cmd_evaluate(args, settings: Settings, progress: bool) -> int:
    manifest = load_manifest(args.manifest).restricted(args.split)
    with open(args.verdicts, 'r', encoding='utf-8') as f:
        pairs = read_verdicts(f)
    report = build_report(attach_truth(pairs, manifest))
    with open(args.out, 'w', encoding='utf-8') as out:
        write_report(report, out)
    if args.cdf_csv:
        write_cdf_csv(report, args.cdf_csv)
    if not args.quiet:
        format_report_output(report)
    return EXIT_OK


def cmd_screen(args, settings: Settings, progress: bool) -> int:
    manifest = load_manifest(args.manifest).restricted(args.split)
    slots = _labeled_slots(args, manifest)
    separation = feature_separation(slots)
    with open(args.out, 'w', encoding='utf-8') as out:
        json.dump({feature.value: entry.to_dict() for feature, entry in separation.items()}, out, indent=2)
        out.write('\n')
    return EXIT_OK


def _add_input_args(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--pcap', nargs='+', metavar='FILE', help='Classic pcap capture files (Ethernet)')
    source.add_argument('--events', metavar='FILE', help='Event log (JSON lines)')


def _add_manifest_args(parser: argparse.ArgumentParser):
    parser.add_argument('--manifest', required=True, help='Device manifest CSV (mac,name,label[,split])')
    parser.add_argument('--split', choices=('seen', 'unseen', 'all'), default='all',
                        help='Restrict to one manifest split (default: all)')


def _width(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f'width must be > 0, got {text}')
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='iotnot', description='Tell IoT devices from general-purpose devices')
    parser.add_argument('--log-level', default=None, help='Logging level (default: IOTNOT_LOG_LEVEL or INFO)')
    parser.add_argument('--quiet', action='store_true', help='No progress bars or summaries')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    extract = commands.add_parser('extract', help='Per-slot traffic features to CSV')
    _add_input_args(extract)
    _add_manifest_args(extract)
    extract.add_argument('--width', type=_width, required=True, help='Slot width in seconds')
    extract.add_argument('--out', required=True, help='Feature CSV to write')
    extract.set_defaults(handler=cmd_extract)

    train_traffic = commands.add_parser('train-traffic', help='Train a traffic-feature model')
    train_traffic.add_argument('--features', required=True, help='Feature CSV from extract')
    _add_manifest_args(train_traffic)
    train_traffic.add_argument('--width', type=_width, required=True, help='Slot width in seconds')
    chooser = train_traffic.add_mutually_exclusive_group(required=True)
    chooser.add_argument('--select', action='store_true', help='Choose the feature set by greedy selection')
    chooser.add_argument('--feature-set', help='Comma-separated feature names')
    train_traffic.add_argument('--alpha', type=float, default=0.01, help='Relative-gain threshold (default: 0.01)')
    train_traffic.add_argument('--k', type=int, default=5, help='Cross-validation folds (default: 5)')
    train_traffic.add_argument('--screen-threshold', type=float, default=0.5,
                               help='Single-feature F1 needed to enter the pool (default: 0.5)')
    train_traffic.add_argument('--seed', type=int, default=0, help='Fold-split seed (default: 0)')
    train_traffic.add_argument('--out', required=True, help='Model JSON to write')
    train_traffic.add_argument('--report', help='Selection report JSON (default: <out>.selection.json)')
    train_traffic.set_defaults(handler=cmd_train_traffic)

    train_dhcp = commands.add_parser('train-dhcp', help='Train the DHCP signature tree')
    _add_input_args(train_dhcp)
    _add_manifest_args(train_dhcp)
    train_dhcp.add_argument('--max-depth', type=int, default=None,
                            help='Tree depth limit (default: IOTNOT_TREE_MAX_DEPTH or 5)')
    train_dhcp.add_argument('--out', required=True, help='Model JSON to write')
    train_dhcp.set_defaults(handler=cmd_train_dhcp)

    predict_cmd = commands.add_parser('predict', help='Classify devices')
    predict_cmd.add_argument('--model', required=True, help='Model JSON file(s), comma-separated')
    predict_cmd.add_argument('--unified', action='store_true',
                             help='Vote over 20-minute windows with 5/10/20-minute models and an optional DHCP model')
    predict_cmd.add_argument('--width', type=_width, default=None, help='Expected slot width of the traffic model')
    _add_input_args(predict_cmd)
    _add_manifest_args(predict_cmd)
    predict_cmd.add_argument('--out', required=True, help='Verdict JSON lines to write')
    predict_cmd.set_defaults(handler=cmd_predict)

    evaluate = commands.add_parser('evaluate', help='Score verdicts against the manifest')
    evaluate.add_argument('--verdicts', required=True, help='Verdict JSON lines from predict')
    _add_manifest_args(evaluate)
    evaluate.add_argument('--out', required=True, help='Report JSON to write')
    evaluate.add_argument('--cdf-csv', help='Also write the per-device success CDF as CSV')
    evaluate.set_defaults(handler=cmd_evaluate)

    screen = commands.add_parser('screen', help='Per-feature IoT/NoT separation statistics')
    screen.add_argument('--features', required=True, help='Feature CSV from extract')
    _add_manifest_args(screen)
    screen.add_argument('--width', type=_width, required=True, help='Slot width in seconds')
    screen.add_argument('--out', required=True, help='Separation JSON to write')
    screen.set_defaults(handler=cmd_screen)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level)
        settings = get_settings()
        progress = not args.quiet and sys.stderr.isatty()
        return args.handler(args, settings, progress)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("\n\nInterrupted by user", file=sys.stderr)
        return 130


if __name__ == '__main__':
    sys.exit(main())
