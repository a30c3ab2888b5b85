"""
vidprobe - 動画アクティブ計測ツールキット - メインエントリポイント

サブコマンド:
  ingest    MP4/CSV → 正規化フレームログCSV
  stats     トレース指標（平均ビットレート・バースト性・カットオフ比較）
  fit       対数正規フィット + ECDF/KS
  scale     解像度スケーリングのシミュレーションとMAPE
  synth     合成コーパスの生成
  simulate  リンクモデル下の再生シミュレーション
  cycle     計測サイクルの実行
  serve     トラフィック生成サーバ

終了コード: 0 成功 / 1 使用法エラー / 2 データ・入出力エラー
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from analysis.distfit import (
    describe_sample,
    ecdf,
    fit_lognormal,
    ks_statistic,
    lognormal_cdf,
    lognormal_quantile,
    tail_probability,
)
from analysis.scale_sim import evaluate_pairs, simulate_resolution
from config.config import config
from framelog.framelog_io import load_framelog_csv, save_framelog_csv
from framelog.mp4_parser import parse_mp4_file
from measurement.controller import Controller
from measurement.cycle_config import CycleConfig, load_cycle_config
from playout.playout_sim import LinkModel, PlayerConfig, simulate_download
from playout.verdict import verdict
from server.catalog import Catalog
from server.traffic_server import serve
from synth.corpus_synth import PopulationProfile, synth_corpus
from traces.itag import lookup_itag
from traces.trace_core import average_bitrate, bin_frames, cutoff_comparison, trace_stats, truncate
from utils.errors import ParseError, VideoMeasureError
from utils.file_manager import file_manager
from utils.logger import get_logger, set_console_level
from utils.report_writer import ReportRecord, write_report, write_table_csv

# ロガーの設定
logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

MP4_SUFFIXES = {".mp4", ".m4v", ".m4s", ".mov"}
FIT_QUANTITIES = ("duration", "mp4-size", "webm-size")


class CliParser(argparse.ArgumentParser):
    """使用法エラーを終了コード1にする ArgumentParser"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- 共通処理 ---

def _seed(args) -> int:
    return config.default_seed if args.seed is None else args.seed


def _cutoff(args) -> float:
    return config.cutoff_seconds if args.cutoff is None else args.cutoff


def _interval(args) -> float:
    return config.trace_interval if args.interval is None else args.interval


def _config_echo(args) -> dict:
    """レポートに残す設定（解決済みの seed / cutoff / interval を含む）"""
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler", "parser"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        echo[key] = value
    echo.update(seed=_seed(args), cutoff=_cutoff(args), interval=_interval(args))
    return echo


def load_framelog(path: Path, video_id: Optional[str] = None, itag: Optional[int] = None):
    """拡張子でMP4とCSVを判別してフレームログを読み込む"""
    path = Path(path)
    descriptor = lookup_itag(itag) if itag is not None else None
    if path.suffix.lower() in MP4_SUFFIXES:
        return parse_mp4_file(path, video_id=video_id, itag=descriptor)
    return load_framelog_csv(path, video_id=video_id, itag=descriptor)


def load_trace(path: Path, interval: float):
    return bin_frames(load_framelog(path), interval)


def read_samples(path: Path) -> list[float]:
    """
    1行1値（CSVなら先頭列）の標本ファイルを読み込む

    先頭行が数値でなければヘッダとして読み飛ばす。

    Raises:
        ParseError: 数値でない行
    """
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            cell = line.split(",")[0].strip()
            if not cell or cell.startswith("#"):
                continue
            try:
                samples.append(float(cell))
            except ValueError as e:
                if line_no == 1:
                    continue
                raise ParseError(line_no, f"数値ではありません: {cell!r}") from e
    return samples


# --- サブコマンド ---

def cmd_ingest(args) -> int:
    """MP4/CSV を正規化フレームログCSVに変換"""
    log = load_framelog(args.input, video_id=args.video_id, itag=args.itag)
    path = save_framelog_csv(log, args.output)
    logger.info(f"フレームログを書き出しました: {path} ({len(log.frames)}フレーム, {log.total_bytes}バイト)")
    print(path)
    return EXIT_OK


def cmd_stats(args) -> int:
    """トレース指標をレポートに書き出す"""
    interval, cutoff = _interval(args), _cutoff(args)
    records = []
    rows = []
    for path in args.inputs:
        log = load_framelog(path)
        trace = bin_frames(log, interval)
        stats = trace_stats(trace)
        source = log.video_id or Path(path).stem
        records += [
            ReportRecord("frames", len(log.frames), "count", source),
            ReportRecord("total_bytes", log.total_bytes, "bytes", source),
            ReportRecord("duration", trace.source_duration, "s", source),
            ReportRecord("average_bitrate", average_bitrate(log), "kbps", source),
            ReportRecord("mean_kbps", stats.mean_kbps, "kbps", source),
            ReportRecord("stddev_kbps", stats.stddev_kbps, "kbps", source),
        ]
        if stats.burstiness is not None:
            records.append(ReportRecord("burstiness", stats.burstiness, "ratio", source))
            comparison = cutoff_comparison(trace, cutoff)
            records += [
                ReportRecord("head_mean_kbps", comparison.head.mean_kbps, "kbps", source),
                ReportRecord("head_mean_relative_diff", comparison.mean_relative_diff, "ratio", source),
            ]
            if comparison.burstiness_diff is not None:
                records.append(ReportRecord("head_burstiness_diff", comparison.burstiness_diff, "ratio", source))
        else:
            logger.warning(f"平均0のためバースト性を計算できません: {source}")
        rows += [(source, i * interval, value) for i, value in enumerate(trace.values)]

    write_table_csv(("video_id", "t_seconds", "kbps"), rows, args.output_dir / "traces.csv")
    write_report(records, args.output_dir, _config_echo(args))
    return EXIT_OK


def _fit_samples(args) -> tuple[list[float], str, str]:
    """(標本, 単位, 出所)"""
    if args.samples is not None:
        return read_samples(args.samples), args.unit, Path(args.samples).name

    videos = synth_corpus(args.synth, seed=_seed(args), with_traces=False, show_progress=args.progress)
    provenance = f"synth:n={args.synth}:seed={_seed(args)}"
    if args.quantity == "duration":
        return [video.duration for video in videos], "s", provenance
    attribute = "mp4_size_mb" if args.quantity == "mp4-size" else "webm_size_mb"
    samples = [
        getattr(video.renditions[args.resolution], attribute)
        for video in videos
        if args.resolution in video.renditions and video.renditions[args.resolution].available
    ]
    return samples, "MB", f"{provenance}:{args.resolution}"


def cmd_fit(args) -> int:
    """対数正規フィット・要約・ECDF/KS をレポートに書き出す"""
    samples, unit, source = _fit_samples(args)
    summary = describe_sample(samples)
    fit = summary.fit
    values = np.asarray(samples, dtype=float)
    records = [
        ReportRecord("samples", summary.n, "count", source),
        ReportRecord("meanlog", fit.meanlog, f"log({unit})", source),
        ReportRecord("sdlog", fit.sdlog, f"log({unit})", source),
        ReportRecord("median", summary.median, unit, source),
        ReportRecord("mean", summary.mean, unit, source),
        ReportRecord("max", summary.maximum, unit, source),
        ReportRecord("stddev", summary.stddev, unit, source),
        ReportRecord("ks_statistic", ks_statistic(samples, fit), "ratio", source),
        ReportRecord("model_median", lognormal_quantile(0.5, fit), unit, "model"),
        ReportRecord("model_q25", lognormal_quantile(0.25, fit), unit, "model"),
        ReportRecord("model_q75", lognormal_quantile(0.75, fit), unit, "model"),
        ReportRecord("tail_fraction", float(np.mean(values > args.tail)), "ratio", source),
        ReportRecord("model_tail_probability", tail_probability(args.tail, fit), "ratio", "model"),
    ]
    table = ecdf(samples)
    model = np.atleast_1d(lognormal_cdf(np.asarray(table.values), fit))
    write_table_csv(("value", "ecdf", "model_cdf"),
                    ((v, p, float(m)) for (v, p), m in zip(table, model)),
                    args.output_dir / "ecdf.csv")
    write_report(records, args.output_dir, _config_echo(args))
    logger.info(f"フィット: meanlog={fit.meanlog:.4f} sdlog={fit.sdlog:.4f} n={fit.n}")
    return EXIT_OK


def _scale_corpus(args, output_dir: Path) -> int:
    """コーパス内の全ペアで上方/下方スケーリングのMAPEを集計"""
    interval, cutoff = _interval(args), _cutoff(args)
    videos = file_manager.load_corpus(args.corpus, interval)
    low, high = args.from_resolution, args.to_resolution
    pairs, ids = [], []
    for video in videos:
        a, b = video.renditions.get(low), video.renditions.get(high)
        if a is None or b is None or a.trace is None or b.trace is None:
            continue
        pairs.append((a.trace, b.trace))
        ids.append(video.video_id)
    if not pairs:
        raise VideoMeasureError(f"{low} と {high} の両方のトレースを持つ動画がありません")

    up_reports, up = evaluate_pairs(pairs, cutoff=cutoff, label=f"{low}->{high}")
    down_reports, down = evaluate_pairs([(b, a) for a, b in pairs], cutoff=cutoff, label=f"{high}->{low}")
    records = []
    for summary in (up, down):
        records += [
            ReportRecord("mape_mean", summary.mean, "percent", summary.label),
            ReportRecord("mape_p95", summary.p95, "percent", summary.label),
            ReportRecord("pairs", summary.n, "count", summary.label),
        ]
    if len(up_reports) == len(ids) and len(down_reports) == len(ids):
        write_table_csv(("video_id", "mape_up", "mape_down", "pearson"),
                        ((vid, u.mape, d.mape, u.pearson) for vid, u, d in zip(ids, up_reports, down_reports)),
                        output_dir / "mape.csv")
    write_report(records, output_dir, _config_echo(args))
    return EXIT_OK


def cmd_scale(args) -> int:
    """解像度スケーリングのシミュレーションとCDF比較データ"""
    if args.corpus is not None:
        if len(args.paths) != 1:
            args.parser.error("--corpus を使う場合は出力ディレクトリだけを指定してください")
        return _scale_corpus(args, Path(args.paths[0]))
    if len(args.paths) != 3:
        args.parser.error("ORIG REFERENCE OUTPUT_DIR を指定してください")
    orig_path, reference_path, output_dir = (Path(p) for p in args.paths)

    interval, cutoff = _interval(args), _cutoff(args)
    orig = load_trace(orig_path, interval)
    reference = load_trace(reference_path, interval)
    report = simulate_resolution(orig, reference, cutoff=cutoff)
    source = f"{orig_path.name}->{reference_path.name}"
    scaled_stats = trace_stats(report.scaled)
    records = [
        ReportRecord("mape", report.mape, "percent", source),
        ReportRecord("samples", report.n, "count", source),
        ReportRecord("reference_mean_kbps", trace_stats(truncate(reference, cutoff)).mean_kbps, "kbps", source),
        ReportRecord("scaled_mean_kbps", scaled_stats.mean_kbps, "kbps", source),
    ]
    if report.pearson is not None:
        records.append(ReportRecord("pearson", report.pearson, "ratio", source))
    if scaled_stats.burstiness is not None:
        records.append(ReportRecord("scaled_burstiness", scaled_stats.burstiness, "ratio", source))

    reference_values = truncate(reference, cutoff).values
    orig_values = truncate(orig, cutoff).values
    write_table_csv(
        ("t_seconds", "orig_kbps", "reference_kbps", "simulated_kbps"),
        ((i * interval, orig_values[i], reference_values[i], value) for i, value in enumerate(report.scaled.values)),
        output_dir / "cdf_comparison.csv",
    )
    write_report(records, output_dir, _config_echo(args))
    return EXIT_OK


def cmd_synth(args) -> int:
    """合成コーパスを生成して保存"""
    seed = _seed(args)
    profile = PopulationProfile(interval=_interval(args))
    videos = synth_corpus(args.n, profile=profile, seed=seed, with_traces=not args.no_traces,
                          show_progress=args.progress)
    file_manager.save_corpus(videos, args.output_dir)

    source = f"synth:seed={seed}"
    durations = [video.duration for video in videos]
    fit = fit_lognormal(durations)
    records = [
        ReportRecord("videos", len(videos), "count", source),
        ReportRecord("duration_meanlog", fit.meanlog, "log(s)", source),
        ReportRecord("duration_sdlog", fit.sdlog, "log(s)", source),
        ReportRecord("duration_over_600s", float(np.mean(np.asarray(durations) > 600.0)), "ratio", source),
    ]
    for resolution in profile.resolutions:
        available = [v for v in videos if v.renditions[resolution].available]
        records.append(ReportRecord(f"available_{resolution}", len(available) / len(videos), "ratio", source))
        if len(available) >= 2:
            size_fit = fit_lognormal([v.renditions[resolution].mp4_size_mb for v in available])
            records += [
                ReportRecord(f"mp4_size_meanlog_{resolution}", size_fit.meanlog, "log(MB)", source),
                ReportRecord(f"mp4_size_sdlog_{resolution}", size_fit.sdlog, "log(MB)", source),
            ]
    write_report(records, Path(args.output_dir) / "reports", _config_echo(args))
    return EXIT_OK


def cmd_simulate(args) -> int:
    """リンクモデル下の再生シミュレーション"""
    if (args.link_kbps is None) == (args.link_trace is None):
        args.parser.error("--link-kbps と --link-trace のどちらか一方を指定してください")
    interval, cutoff = _interval(args), _cutoff(args)
    media = load_trace(args.input, interval)
    if args.link_kbps is not None:
        link = LinkModel.constant(args.link_kbps, start_latency=args.latency)
    else:
        link = LinkModel(capacity_trace=load_trace(args.link_trace, interval), start_latency=args.latency)
    player = PlayerConfig(initial_buffer=args.initial_buffer, rebuffer_target=args.rebuffer_target,
                          cutoff=cutoff, timeout=args.timeout)
    result = simulate_download(media, link, player)

    source = Path(args.input).stem
    records = [
        ReportRecord("stall_count", result.stall_count, "count", source),
        ReportRecord("total_stall", result.total_stall, "s", source),
        ReportRecord("completed", result.completed, "bool", source),
        ReportRecord("all_frames_on_time", result.all_frames_on_time, "bool", source),
        ReportRecord("timed_out", result.timed_out, "bool", source),
        ReportRecord("downloaded_bytes", result.downloaded_bytes, "bytes", source),
        ReportRecord("wall_time", result.wall_time, "s", source),
        ReportRecord("media_duration", result.media_duration, "s", source),
    ]
    if result.startup_delay is not None:
        records.insert(0, ReportRecord("startup_delay", result.startup_delay, "s", source))
    stats = trace_stats(truncate(media, cutoff))
    if stats.burstiness is not None:
        record = verdict(result, stats, video_id=source, video_duration=trace_stats(media).duration,
                         link_kbps=args.link_kbps)
        records += [
            ReportRecord("mean_kbps", record.mean_kbps, "kbps", source),
            ReportRecord("burstiness", record.burstiness, "ratio", source),
            ReportRecord("stall_flag", record.stall_flag, "label", source),
        ]
    write_table_csv(("start_media_seconds", "duration_seconds"),
                    ((event.start, event.duration) for event in result.stall_events),
                    args.output_dir / "stalls.csv")
    write_report(records, args.output_dir, _config_echo(args))
    return EXIT_OK


def cmd_cycle(args) -> int:
    """計測サイクルを実行してリポジトリとレポートを書き出す"""
    overrides = {
        "seed": args.seed,
        "cutoff": args.cutoff,
        "num_agents": args.agents,
        "cycles": args.cycles,
        "workers": args.workers,
        "chart_size": args.chart_size,
    }
    if args.config is not None:
        cfg = load_cycle_config(args.config, **overrides)
    else:
        overrides["seed"] = _seed(args)
        cfg = CycleConfig().with_overrides(**overrides)

    if args.corpus is not None:
        videos = file_manager.load_corpus(args.corpus, _interval(args))
    else:
        videos = synth_corpus(args.synth, seed=cfg.seed, show_progress=args.progress)

    repository = Controller(cfg, videos).run(show_progress=args.progress)
    output_dir = Path(args.output_dir)
    repository.export_jsonl(output_dir / "repository.jsonl")
    write_table_csv(("duration_class", "bitrate_class", "burstiness_class", "stall_flag", "count"),
                    (bucket + (count,) for bucket, count in repository.bucket_counts().items()),
                    output_dir / "buckets.csv")
    write_table_csv(("cycle", "candidate", "applied", "min_length"),
                    ((u.cycle, u.candidate, u.applied, u.value) for u in repository.min_length_history),
                    output_dir / "minlength.csv")
    write_table_csv(("video_id", "tests", "stalled_tests", "mean_total_stall", "mean_startup_delay",
                     "video_duration"),
                    ((a.video_id, a.tests, a.stalled_tests, a.mean_total_stall, a.mean_startup_delay,
                      a.video_duration) for a in repository.aggregates().values()),
                    output_dir / "videos.csv")

    records = repository.records
    source = f"cycle:seed={cfg.seed}"
    report = [
        ReportRecord("records", len(records), "count", source),
        ReportRecord("distinct_videos", len({r.video_id for r in records}), "count", source),
        ReportRecord("min_length", repository.min_length, "s", source),
        ReportRecord("chart_size", cfg.chart_size, "count", source),
    ]
    if records:
        report += [
            ReportRecord("stalled_fraction", float(np.mean([r.stall_count > 0 for r in records])), "ratio", source),
            ReportRecord("mean_total_stall", float(np.mean([r.total_stall for r in records])), "s", source),
        ]
    echo = _config_echo(args)
    echo["cycle_config"] = cfg.as_dict()
    write_report(report, output_dir, echo)
    return EXIT_OK


def cmd_serve(args) -> int:
    """トラフィック生成サーバを起動（Ctrl+C で停止）"""
    catalog = Catalog.from_directory(args.catalog)
    serve(catalog, args.listen or config.listen_address, interval=_interval(args), background=False)
    return EXIT_OK


# --- パーサ ---

def build_parser() -> CliParser:
    """CLIパーサを構築"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="乱数シード（既定: DEFAULT_SEED）")
    common.add_argument("--cutoff", type=float, default=None, help="カットオフ秒（既定: 180）")
    common.add_argument("--interval", type=float, default=None, help="集計区間秒（既定: 1.0）")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="DEBUGログも表示")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="WARNING以上だけ表示")

    parser = CliParser(prog="vidprobe", description="動画アクティブ計測ツールキット")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = subparsers.add_parser("ingest", parents=[common], help="MP4/CSV → 正規化フレームログCSV")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--video-id", default=None)
    p.add_argument("--itag", type=int, default=None)
    p.set_defaults(handler=cmd_ingest)

    p = subparsers.add_parser("stats", parents=[common], help="トレース指標")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("output_dir", type=Path)
    p.set_defaults(handler=cmd_stats)

    p = subparsers.add_parser("fit", parents=[common], help="対数正規フィットとECDF/KS")
    p.add_argument("output_dir", type=Path)
    p.add_argument("samples", type=Path, nargs="?", default=None, help="1行1値の標本ファイル（省略時は合成）")
    p.add_argument("--synth", type=int, default=10000, help="合成する動画数")
    p.add_argument("--quantity", choices=FIT_QUANTITIES, default="duration")
    p.add_argument("--resolution", default="360p")
    p.add_argument("--unit", default="value", help="標本ファイルの単位")
    p.add_argument("--tail", type=float, default=600.0, help="裾の確率を求める閾値")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=cmd_fit)

    p = subparsers.add_parser("scale", parents=[common], help="解像度スケーリングとMAPE")
    p.add_argument("paths", nargs="+", metavar="PATH", help="ORIG REFERENCE OUTPUT_DIR（--corpus 時は OUTPUT_DIR）")
    p.add_argument("--corpus", type=Path, default=None, help="コーパス全体で上方/下方のMAPEを集計")
    p.add_argument("--from", dest="from_resolution", default="360p")
    p.add_argument("--to", dest="to_resolution", default="720p")
    p.set_defaults(handler=cmd_scale, parser=p)

    p = subparsers.add_parser("synth", parents=[common], help="合成コーパスの生成")
    p.add_argument("n", type=int)
    p.add_argument("output_dir", type=Path)
    p.add_argument("--no-traces", action="store_true", help="メタデータだけ生成")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=cmd_synth)

    p = subparsers.add_parser("simulate", parents=[common], help="再生シミュレーション")
    p.add_argument("input", type=Path)
    p.add_argument("output_dir", type=Path)
    p.add_argument("--link-kbps", type=float, default=None)
    p.add_argument("--link-trace", type=Path, default=None, help="帯域トレース（フレームログ形式）")
    p.add_argument("--latency", type=float, default=0.0)
    p.add_argument("--initial-buffer", type=float, default=2.0)
    p.add_argument("--rebuffer-target", type=float, default=None,
                   help="再開に必要なバッファ秒（0 でダウンロード追従、既定は initial-buffer）")
    p.add_argument("--timeout", type=float, default=3600.0)
    p.set_defaults(handler=cmd_simulate, parser=p)

    p = subparsers.add_parser("cycle", parents=[common], help="計測サイクルの実行")
    p.add_argument("output_dir", type=Path)
    p.add_argument("--config", type=Path, default=None, help="KEY=VALUE 形式のサイクル設定")
    p.add_argument("--corpus", type=Path, default=None, help="コーパスディレクトリ（省略時は合成）")
    p.add_argument("--synth", type=int, default=200, help="合成する動画数")
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--chart-size", type=int, default=None)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=cmd_cycle)

    p = subparsers.add_parser("serve", parents=[common], help="トラフィック生成サーバ")
    p.add_argument("catalog", type=Path, help="コーパスディレクトリ")
    p.add_argument("--listen", default=None, help="host:port（既定: LISTEN_ADDRESS）")
    p.set_defaults(handler=cmd_serve)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    CLIを実行

    Args:
        argv: 引数（Noneの場合は sys.argv[1:]）

    Returns:
        int: 終了コード
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or EXIT_OK)

    if args.verbose:
        set_console_level("DEBUG")
    elif args.quiet:
        set_console_level("WARNING")

    try:
        return args.handler(args)
    except SystemExit as e:
        return int(e.code or EXIT_OK)
    except VideoMeasureError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"{args.command}: 入出力エラー: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(run())
