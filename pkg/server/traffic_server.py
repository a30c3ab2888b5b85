"""
トラフィック生成サーバ
カタログのフレームログに沿って（必要ならスケーリングして）ダミーのバイト列をHTTPで配信する

エンドポイント:
  GET /videos                                  カタログのメタデータ（JSON）
  GET /stream/{id}?mean_kbps=X | ?resolution=R 送出スケジュールに従ったチャンク転送
  GET /framelog/{id}                           保存済みフレームログ（CSV）
"""
import json
import threading
import time
import zlib
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, unquote, urlparse

import numpy as np

from config.constants import TRACE_INTERVAL
from framelog.framelog_io import write_framelog_csv
from server.catalog import Catalog, CatalogEntry, ChunkSchedule, shape_schedule
from utils.errors import BadRequest, InvalidParameterError, NotFound, VideoMeasureError
from utils.logger import get_logger

logger = get_logger(__name__)

TOTAL_LENGTH_HEADER = "X-Content-Total-Length"
CHECKSUM_HEADER = "X-Schedule-Checksum"
TARGET_HEADER = "X-Target-Mean-Kbps"

# 1回の write で送る最大バイト数
WRITE_BLOCK = 64 * 1024


def parse_listen_address(address: str) -> tuple[str, int]:
    """'host:port' を分解"""
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise InvalidParameterError(f"待ち受けアドレスの形式が不正です（host:port）: {address}")
    return host or "127.0.0.1", int(port)


def payload_generator(video_id: str) -> np.random.Generator:
    """圧縮できない疑似乱数ペイロード（動画IDごとに固定）"""
    return np.random.default_rng(zlib.crc32(video_id.encode("utf-8")))


def resolve_target(entry: CatalogEntry, query: dict, interval: float = TRACE_INTERVAL) -> float:
    """
    クエリから目標平均ビットレートを決める（指定なしは保存トレースの平均）

    Raises:
        BadRequest: 数値でない、両方指定、未知の解像度
    """
    mean_values = query.get("mean_kbps")
    resolutions = query.get("resolution")
    if mean_values and resolutions:
        raise BadRequest("mean_kbps と resolution は同時に指定できません")
    if mean_values:
        try:
            return float(mean_values[0])
        except ValueError as e:
            raise BadRequest(f"mean_kbps が数値ではありません: {mean_values[0]!r}", parameter="mean_kbps") from e
    if resolutions:
        resolution = resolutions[0]
        if resolution not in entry.advertised:
            raise BadRequest(f"広告されていない解像度です: {resolution}", parameter="resolution")
        return float(entry.advertised[resolution])
    return entry.trace(interval).mean_kbps


class TrafficRequestHandler(BaseHTTPRequestHandler):
    """トラフィック生成サーバのリクエストハンドラ"""
    protocol_version = "HTTP/1.1"
    server: "TrafficHTTPServer"

    def log_message(self, format, *args):
        logger.debug(f"{self.address_string()} - {format % args}")

    def do_GET(self):
        parsed = urlparse(self.path)
        parts = [unquote(p) for p in parsed.path.split("/") if p]
        try:
            query = parse_qs(parsed.query, keep_blank_values=True, strict_parsing=bool(parsed.query))
        except ValueError:
            self._send_error(400, "クエリの形式が不正です")
            return

        try:
            if parts == ["videos"]:
                self._send_json(200, [entry.describe(self.server.interval) for entry in self.server.catalog.entries()])
            elif len(parts) == 2 and parts[0] == "stream":
                entry = self.server.catalog.get(parts[1])
                schedule = shape_schedule(entry, resolve_target(entry, query, self.server.interval),
                                          self.server.interval)
                self._stream(schedule)
            elif len(parts) == 2 and parts[0] == "framelog":
                entry = self.server.catalog.get(parts[1])
                self._send_bytes(200, write_framelog_csv(entry.log), "text/csv; charset=utf-8")
            else:
                self._send_error(404, f"未知のパスです: {parsed.path}")
        except NotFound as e:
            self._send_error(404, str(e))
        except BadRequest as e:
            self._send_error(400, str(e))
        except VideoMeasureError as e:
            logger.error(f"リクエストの処理に失敗しました: {e}")
            self._send_error(400, str(e))

    def _send_bytes(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, data):
        body = json.dumps(data, ensure_ascii=False, sort_keys=True).encode("utf-8")
        self._send_bytes(status, body, "application/json; charset=utf-8")

    def _send_error(self, status: int, message: str):
        self._send_json(status, {"error": message, "status": status})

    def _write_chunk(self, data: bytes):
        self.wfile.write(f"{len(data):X}\r\n".encode("ascii"))
        self.wfile.write(data)
        self.wfile.write(b"\r\n")

    def _stream(self, schedule: ChunkSchedule):
        """スケジュールに従ってチャンク転送（send_at より前には送らない）"""
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Transfer-Encoding", "chunked")
        self.send_header(TOTAL_LENGTH_HEADER, str(schedule.total_bytes))
        self.send_header(CHECKSUM_HEADER, schedule.checksum)
        self.send_header(TARGET_HEADER, f"{schedule.target_mean:.6f}")
        self.end_headers()

        rng = payload_generator(schedule.video_id)
        start = time.monotonic()
        sent = 0
        try:
            for send_at, size in schedule.chunks:
                delay = start + send_at - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                remaining = size
                while remaining > 0:
                    block = min(remaining, WRITE_BLOCK)
                    self._write_chunk(rng.bytes(block))
                    remaining -= block
                sent += size
            self.wfile.write(b"0\r\n\r\n")
            self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            logger.info(f"クライアントが切断しました: {schedule.video_id} ({sent}/{schedule.total_bytes}バイト)")
            self.close_connection = True
            return
        logger.info(f"配信完了: {schedule.video_id} {sent}バイト target={schedule.target_mean:.1f}kbps")


class TrafficHTTPServer(ThreadingHTTPServer):
    """カタログを持つスレッドHTTPサーバ（応答ごとに独立したスケジュール時計）"""
    daemon_threads = True

    def __init__(self, address: tuple[str, int], catalog: Catalog, interval: float = TRACE_INTERVAL):
        self.catalog = catalog
        self.interval = interval
        super().__init__(address, TrafficRequestHandler)


class TrafficServer:
    """バックグラウンドで動くトラフィック生成サーバ"""

    def __init__(self, catalog: Catalog, address: str = "127.0.0.1:0", interval: float = TRACE_INTERVAL):
        host, port = parse_listen_address(address)
        self.httpd = TrafficHTTPServer((host, port), catalog, interval)
        self._thread: Optional[threading.Thread] = None

    @property
    def host(self) -> str:
        return self.httpd.server_address[0]

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "TrafficServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="traffic-server", daemon=True)
        self._thread.start()
        logger.info(f"トラフィック生成サーバを起動しました: {self.url} ({len(self.httpd.catalog)}本)")
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        logger.info("トラフィック生成サーバを停止しました")

    def __enter__(self) -> "TrafficServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(catalog: Catalog, address: str, interval: float = TRACE_INTERVAL, background: bool = True) -> TrafficServer:
    """
    トラフィック生成サーバを起動

    Args:
        catalog: カタログ
        address: 'host:port'（port 0 で空きポート）
        background: Falseの場合は停止されるまでブロックする

    Returns:
        TrafficServer: 起動済みのサーバ
    """
    server = TrafficServer(catalog, address, interval)
    if background:
        return server.start()
    logger.info(f"トラフィック生成サーバを起動しました: {server.url}")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        logger.info("停止要求を受け付けました")
    finally:
        server.httpd.server_close()
    return server
