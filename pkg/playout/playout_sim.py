"""
再生シミュレーションモジュール
帯域制約のあるリンクでのダウンロードと再生バッファを流体モデルで再現し、停止（stall）を検出する

時間は2種類:
  - 壁時計時間 t（ダウンロード開始からの秒）
  - メディア時間 τ（再生位置、秒）
停止イベントは開始をメディア時間、長さを壁時計時間で記録する。
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from config.constants import CUTOFF_SECONDS, INITIAL_BUFFER_SECONDS, SIMULATION_TIMEOUT_SECONDS
from traces.trace_core import BitrateTrace, truncate
from utils.errors import InvalidParameterError
from utils.logger import get_logger

logger = get_logger(__name__)

# メディア時間の比較許容（秒）
EPS = 1e-9
MAX_EVENTS_PER_INTERVAL = 64
# これより短いイベント間隔は丸め誤差とみなす
MIN_STEP = 1e-12


@dataclass(frozen=True)
class LinkModel:
    """
    リンクモデル

    定数帯域（capacity_kbps）か、区間ごとの帯域トレース（capacity_trace）のどちらかを指定する。
    帯域トレースは start_latency 秒後から適用し、末尾を過ぎたら最後の値を保持する。
    """
    capacity_kbps: Optional[float] = None
    capacity_trace: Optional[BitrateTrace] = None
    start_latency: float = 0.0

    def __post_init__(self):
        if (self.capacity_kbps is None) == (self.capacity_trace is None):
            raise InvalidParameterError("capacity_kbps と capacity_trace はどちらか一方を指定してください")
        if self.capacity_kbps is not None and (self.capacity_kbps < 0 or not math.isfinite(self.capacity_kbps)):
            raise InvalidParameterError(f"帯域は0以上の有限値である必要があります: {self.capacity_kbps}")
        if self.capacity_trace is not None and not self.capacity_trace.values:
            raise InvalidParameterError("帯域トレースが空です")
        if self.start_latency < 0:
            raise InvalidParameterError(f"start_latency は0以上である必要があります: {self.start_latency}")

    @classmethod
    def constant(cls, kbps: float, start_latency: float = 0.0) -> "LinkModel":
        return cls(capacity_kbps=float(kbps), start_latency=start_latency)

    def capacity_at(self, t: float) -> tuple[float, float]:
        """
        時刻 t の帯域と、次に帯域が変わる時刻

        Returns:
            (kbps, 次の変化時刻（変化しなければ inf）)
        """
        if t < self.start_latency - EPS:
            return 0.0, self.start_latency
        if self.capacity_trace is None:
            return float(self.capacity_kbps), math.inf
        trace = self.capacity_trace
        offset = max(t - self.start_latency, 0.0)
        index = int(math.floor(offset / trace.interval + EPS))
        if index >= len(trace.values) - 1:
            return trace.values[-1], math.inf
        return trace.values[index], self.start_latency + (index + 1) * trace.interval


@dataclass(frozen=True)
class PlayerConfig:
    """プレーヤー設定（rebuffer_target 省略時は initial_buffer と同じ）"""
    initial_buffer: float = INITIAL_BUFFER_SECONDS
    rebuffer_target: Optional[float] = None
    cutoff: float = CUTOFF_SECONDS
    timeout: float = SIMULATION_TIMEOUT_SECONDS

    def __post_init__(self):
        if self.initial_buffer < 0:
            raise InvalidParameterError(f"initial_buffer は0以上である必要があります: {self.initial_buffer}")
        if self.rebuffer_target is not None and self.rebuffer_target < 0:
            raise InvalidParameterError(f"rebuffer_target は0以上である必要があります: {self.rebuffer_target}")
        if self.cutoff <= 0:
            raise InvalidParameterError(f"cutoff は正の値である必要があります: {self.cutoff}")
        if self.timeout <= 0:
            raise InvalidParameterError(f"timeout は正の値である必要があります: {self.timeout}")

    @property
    def resume_target(self) -> float:
        return self.initial_buffer if self.rebuffer_target is None else self.rebuffer_target


@dataclass(frozen=True)
class StallEvent:
    """停止イベント（start: メディア時間, duration: 壁時計時間）"""
    start: float
    duration: float


@dataclass(frozen=True)
class PlayoutResult:
    """再生シミュレーションの結果"""
    startup_delay: Optional[float]
    stall_events: tuple[StallEvent, ...]
    total_stall: float
    downloaded_bytes: int
    completed: bool
    all_frames_on_time: bool
    timed_out: bool = False
    wall_time: float = 0.0
    media_duration: float = 0.0
    cutoff: float = CUTOFF_SECONDS

    @property
    def stall_count(self) -> int:
        return len(self.stall_events)


class _Phase(Enum):
    STARTUP = "startup"
    PLAYING = "playing"
    STALLED = "stalled"      # 再開閾値まで待機
    TRACKING = "tracking"    # ダウンロードに追従して低速再生（rebuffer_target = 0）


class _Media:
    """メディアトレースの累積ビット（kbit）とメディア時間の相互変換"""

    def __init__(self, trace: BitrateTrace):
        self.interval = trace.interval
        self.rates = trace.as_array()
        self.cumulative = np.concatenate(([0.0], np.cumsum(self.rates * self.interval)))
        self.total = float(self.cumulative[-1])
        self.duration = len(self.rates) * self.interval

    def bits_until(self, tau: float) -> float:
        """メディア時間 tau までの累積ビット C(tau)"""
        if tau >= self.duration:
            return self.total
        k = min(int(math.floor(tau / self.interval)), len(self.rates) - 1)
        return float(self.cumulative[k] + self.rates[k] * (tau - k * self.interval))

    def frontier(self, downloaded: float) -> tuple[float, float, float]:
        """
        ダウンロード済みビットで再生できる最大のメディア時間

        Returns:
            (τ_d, τ_d 位置のビットレート, 次の区間境界の累積ビット)
            ビットレート0の区間はダウンロード不要として飛ばす。
        """
        if downloaded >= self.total:
            return self.duration, 0.0, math.inf
        k = int(np.searchsorted(self.cumulative, downloaded, side="right")) - 1
        k = min(max(k, 0), len(self.rates) - 1)
        rate = float(self.rates[k])
        tau = k * self.interval + (downloaded - float(self.cumulative[k])) / rate
        return tau, rate, float(self.cumulative[k + 1])


def simulate_download(media: BitrateTrace, link: LinkModel, cfg: Optional[PlayerConfig] = None) -> PlayoutResult:
    """
    リンク越しのダウンロードと再生をシミュレーション

    ダウンロード済みビット D(t) は帯域（残り需要で頭打ち）で増える。バッファ内のメディアが
    initial_buffer に達したら再生を始め、再生位置がダウンロード位置に追いついて追い越しそうに
    なったら停止する。停止後は rebuffer_target 分（残り全量で頭打ち）溜まったら再開する。
    rebuffer_target = 0 の場合はダウンロードに追従して再生し、壁時計時間とメディア時間の差を停止時間とする。

    Args:
        media: メディアのビットレートトレース（cfg.cutoff で切り詰める）
        link: リンクモデル
        cfg: プレーヤー設定

    Returns:
        PlayoutResult: シミュレーション結果（帯域0などで終わらない場合は timed_out=True）
    """
    cfg = cfg or PlayerConfig()
    if not media.values:
        raise InvalidParameterError("メディアトレースが空です")
    if link.capacity_trace is not None and not math.isclose(link.capacity_trace.interval, media.interval):
        raise InvalidParameterError(
            f"帯域トレースとメディアトレースの区間が一致しません: {link.capacity_trace.interval} != {media.interval}"
        )

    trace = truncate(media, cfg.cutoff)
    m = _Media(trace)
    target = cfg.resume_target
    link_steps = len(link.capacity_trace.values) if link.capacity_trace is not None else 1
    max_events = MAX_EVENTS_PER_INTERVAL * (len(trace.values) + link_steps) + 1000

    t = 0.0
    downloaded = 0.0
    tau = 0.0
    phase = _Phase.STARTUP
    startup_delay = None
    stalls: list[StallEvent] = []
    stall_start_wall = 0.0
    stall_start_tau = 0.0
    completed = False
    timed_out = False

    def end_stall(now: float, position: float):
        if phase is _Phase.TRACKING:
            duration = (now - stall_start_wall) - (position - stall_start_tau)
        else:
            duration = now - stall_start_wall
        if duration > EPS:
            stalls.append(StallEvent(start=stall_start_tau, duration=duration))

    for _ in range(max_events):
        capacity, next_change = link.capacity_at(t)
        frontier, frontier_rate, next_boundary = m.frontier(downloaded)
        remaining = m.total - downloaded
        rate = capacity if remaining > 0 else 0.0
        # ダウンロード位置がメディア時間で進む速さ
        media_speed = math.inf if remaining <= 0 else (capacity / frontier_rate if frontier_rate > 0 else math.inf)

        # --- 瞬時の状態遷移 ---
        if phase is _Phase.STARTUP and frontier >= min(cfg.initial_buffer, m.duration) - EPS:
            startup_delay = t
            phase = _Phase.PLAYING
        if phase is _Phase.STALLED and frontier >= min(tau + target, m.duration) - EPS:
            end_stall(t, tau)
            phase = _Phase.PLAYING
        if phase is _Phase.TRACKING and (media_speed >= 1.0 or frontier >= m.duration - EPS):
            end_stall(t, tau)
            phase = _Phase.PLAYING
        if phase is _Phase.PLAYING:
            if tau >= m.duration - EPS:
                completed = True
                break
            if frontier - tau <= EPS and media_speed < 1.0:
                stall_start_wall, stall_start_tau = t, tau
                phase = _Phase.STALLED if target > 0 else _Phase.TRACKING

        if t >= cfg.timeout - EPS:
            timed_out = True
            break

        # --- 次のイベントまでの時間 ---
        candidates = [next_change - t, cfg.timeout - t]
        if rate > 0 and math.isfinite(next_boundary):
            candidates.append((next_boundary - downloaded) / rate)
        if phase is _Phase.STARTUP and rate > 0:
            candidates.append((m.bits_until(min(cfg.initial_buffer, m.duration)) - downloaded) / rate)
        elif phase is _Phase.STALLED and rate > 0:
            candidates.append((m.bits_until(min(tau + target, m.duration)) - downloaded) / rate)
        elif phase is _Phase.PLAYING:
            candidates.append(m.duration - tau)
            gap = frontier - tau
            if media_speed < 1.0:
                candidates.append(gap / (1.0 - media_speed))
        elif phase is _Phase.TRACKING and rate > 0:
            candidates.append(remaining / rate)

        positive = [c for c in candidates if c > MIN_STEP]
        dt = min(positive) if positive else MIN_STEP

        downloaded = min(m.total, downloaded + rate * dt)
        if phase is _Phase.PLAYING:
            tau = min(tau + dt, m.frontier(downloaded)[0], m.duration)
        elif phase is _Phase.TRACKING:
            tau = m.frontier(downloaded)[0]
        t += dt
    else:
        logger.warning(f"イベント数の上限に達しました: t={t:.3f} tau={tau:.3f}")
        timed_out = True

    if phase in (_Phase.STALLED, _Phase.TRACKING) and not completed:
        end_stall(t, tau)

    total_stall = float(sum(event.duration for event in stalls))
    result = PlayoutResult(
        startup_delay=startup_delay,
        stall_events=tuple(stalls),
        total_stall=total_stall,
        downloaded_bytes=int(round(downloaded * 1000.0 / 8.0)),
        completed=completed,
        all_frames_on_time=completed and not stalls,
        timed_out=timed_out,
        wall_time=t,
        media_duration=m.duration,
        cutoff=cfg.cutoff,
    )
    if timed_out:
        logger.warning(f"再生シミュレーションがタイムアウトしました: {cfg.timeout}s")
    logger.debug(
        f"simulate_download: startup={startup_delay} stalls={len(stalls)} total_stall={total_stall:.3f} "
        f"completed={completed} wall={t:.3f}"
    )
    return result
