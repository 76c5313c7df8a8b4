"""Stereo MSCKF driver: IMU buffering, cloning, updates and window pruning."""

from __future__ import annotations

import logging

from .augmentation import augment
from .options import FilterConfig
from .propagation import ImuSample, interpolate_sample, propagate
from .state import FilterState
from .update.marginalization import select_marginalize
from .update.measurement import FeatureTrack, StereoObservation
from .update.pipeline import run_update_step

logger = logging.getLogger(__name__)


class Msckf:
    """Sequential estimator fed with IMU samples and stereo feature frames.

    >>> f = Msckf(initial_state(imu))            # doctest: +SKIP
    >>> for s in imu_samples: f.add_imu(s)       # doctest: +SKIP
    >>> f.process_frame(t, {fid: z, ...})        # doctest: +SKIP
    """

    def __init__(self, state: FilterState, config: FilterConfig | None = None):
        self.state = state
        self.config = config or FilterConfig()
        self.features: dict[int, FeatureTrack] = {}
        self.diagnostics: list = []
        self.frame_count = 0
        self._imu_buffer: list[ImuSample] = []
        self._last_sample: ImuSample | None = None

    def add_imu(self, sample: ImuSample) -> None:
        last = self._imu_buffer[-1] if self._imu_buffer else self._last_sample
        if last is not None and sample.timestamp <= last.timestamp:
            raise ValueError(f"IMU timestamps must increase ({sample.timestamp} <= {last.timestamp})")
        self._imu_buffer.append(sample)

    def propagate_to(self, t: float) -> None:
        """Consume buffered IMU data up to ``t``, splitting the straddling sample."""
        t0 = self.state.imu.timestamp
        if t < t0:
            raise ValueError(f"cannot propagate backwards from {t0} to {t}")
        buf = self._imu_buffer
        if self._last_sample is None:
            if not buf:
                return
            first = buf[0]
            self._last_sample = ImuSample(t0, first.omega_m, first.accel_m)
            if first.timestamp <= t0:
                buf.pop(0)
        oc = self.config.observability_constraint
        while buf and buf[0].timestamp <= t:
            s = buf.pop(0)
            if s.timestamp > self._last_sample.timestamp:
                self.state = propagate(self.state, self._last_sample, s, oc)
            self._last_sample = s
        if t > self._last_sample.timestamp:
            if buf:
                s = interpolate_sample(self._last_sample, buf[0], t)
            else:
                s = ImuSample(t, self._last_sample.omega_m, self._last_sample.accel_m)
            self.state = propagate(self.state, self._last_sample, s, oc)
            self._last_sample = s

    def process_frame(self, t: float, observations: dict) -> FilterState:
        """Handle one stereo frame: ``observations`` maps feature id to a 4-vector."""
        self.propagate_to(t)
        self.state = augment(self.state, t, self.config.max_cams)
        cam_id = self.state.cams[-1].id
        self.frame_count += 1

        for fid in sorted(observations):
            track = self.features.get(fid)
            if track is None:
                track = self.features[fid] = FeatureTrack(fid)
            track.add(StereoObservation(cam_id, observations[fid]))

        lost = [tr for fid, tr in self.features.items() if fid not in observations]
        for tr in lost:
            del self.features[tr.feature_id]
        lost = [tr for tr in lost if len(tr) >= self.config.min_track_length]
        if lost:
            self.state, diag = run_update_step(self.state, lost, self.config)
            self.diagnostics.append(diag)

        if len(self.state.cams) >= self.config.max_cams:
            self._prune()
        return self.state

    def _prune(self) -> None:
        cfg = self.config
        rm = select_marginalize(self.state.cams, cfg.rotation_threshold, cfg.translation_threshold)
        rm_set = set(rm)
        involved = []
        for fid in sorted(self.features):
            track = self.features[fid]
            n = sum(1 for o in track.observations if o.cam_id in rm_set)
            if n >= cfg.min_track_length:
                involved.append(track)
        self.state, diag = run_update_step(self.state, involved, cfg, prune_ids=rm)
        self.diagnostics.append(diag)
        for fid in list(self.features):
            track = self.features[fid]
            track.observations = [o for o in track.observations if o.cam_id not in rm_set]
            if not track.observations:
                del self.features[fid]
