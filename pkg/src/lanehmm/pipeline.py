"""End-to-end composition: detector log -> evidence -> filter -> results.

Also holds the precomputed evidence representation used by the tuner: the
geometry and LRI passes do not depend on the HMM parameters (except for
the bonus value, which enters linearly), so they run once per sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import FrameRecord, ResultRecord, SequenceHeader
from .errors import ConfigError
from .filtering import LaneFilter
from .inverse_sensor import (
    LriTracker,
    compute_wor,
    normalize_tentative,
    tentative_parts,
)
from .model_core import HmmParams, RuntimeConfig


@dataclass(frozen=True)
class EvidenceStream:
    """Per-frame soft-evidence ingredients for one sequence.

    `base + bv * bonus` reproduces the tentative vector of every frame for
    any bonus value; gt_lane is -1 where the frame is unannotated.
    """

    n: int
    frame_ids: np.ndarray  # (T,)
    base: np.ndarray       # (T, n)
    bonus: np.ndarray      # (T, n)
    wor_frac: np.ndarray   # (T,)
    gt_lane: np.ndarray    # (T,)
    crossing: np.ndarray   # (T,)

    def __len__(self) -> int:
        return len(self.frame_ids)


def _tracked_lines(header: SequenceHeader, frames: list[FrameRecord], cfg: RuntimeConfig):
    """Yield (frame, tracked-lines) with LRI recomputed or taken from the log."""
    if header.lri_source == "log":
        for frame in frames:
            yield frame, [entry.to_tracked() for entry in frame.lines]
    else:
        tracker = LriTracker(cfg)
        for frame in frames:
            observations = [entry.to_observation() for entry in frame.lines]
            yield frame, tracker.update(observations)


def build_evidence(
    header: SequenceHeader, frames: list[FrameRecord], cfg: RuntimeConfig
) -> EvidenceStream:
    """Run the inverse sensor model over a whole sequence."""
    n = header.n_lanes
    T = len(frames)
    frame_ids = np.empty(T, dtype=int)
    base = np.empty((T, n))
    bonus = np.empty((T, n))
    wor_frac = np.empty(T)
    gt = np.full(T, -1, dtype=int)
    crossing = np.zeros(T, dtype=bool)
    for t, (frame, tracked) in enumerate(_tracked_lines(header, frames, cfg)):
        frame_ids[t] = frame.frame_id
        base[t], bonus[t] = tentative_parts(tracked, n, cfg)
        wor_frac[t] = compute_wor(tracked, n, cfg).ok
        if frame.gt_lane is not None:
            gt[t] = frame.gt_lane
        crossing[t] = frame.crossing
    return EvidenceStream(
        n=n, frame_ids=frame_ids, base=base, bonus=bonus,
        wor_frac=wor_frac, gt_lane=gt, crossing=crossing,
    )


def run_sequence(
    header: SequenceHeader,
    frames: list[FrameRecord],
    params: HmmParams,
    cfg: RuntimeConfig | None = None,
    prior: np.ndarray | None = None,
) -> list[ResultRecord]:
    """Filter a sequence frame by frame and collect per-frame estimates."""
    if cfg is None:
        cfg = RuntimeConfig(lane_width=header.lane_width_m)
    if params.n != header.n_lanes:
        raise ConfigError(
            f"parameter lane count {params.n} conflicts with sequence lane count "
            f"{header.n_lanes}"
        )
    lane_filter = LaneFilter(params, prior=prior)
    n = params.n
    results = []
    for frame, tracked in _tracked_lines(header, frames, cfg):
        base, bonus_counts = tentative_parts(tracked, n, cfg)
        tentative = base + params.bv * bonus_counts
        wor = compute_wor(tracked, n, cfg)
        estimate = lane_filter.step(normalize_tentative(tentative, n), wor)
        results.append(
            ResultRecord(
                frame_id=frame.frame_id,
                map_lane=estimate.map_lane,
                lane_marginal=tuple(float(x) for x in estimate.lane_marginal),
                sensor_ok_prob=estimate.sensor_ok_prob,
                tentative=tuple(float(x) for x in tentative),
                wor_frac=wor.ok,
            )
        )
    return results


def tentative_matrix(evidence: EvidenceStream, bv: float) -> np.ndarray:
    """All tentative vectors of a sequence for one bonus value, shape (T, n)."""
    return evidence.base + bv * evidence.bonus
