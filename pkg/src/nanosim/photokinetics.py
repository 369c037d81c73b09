"""Two-state (on/off) emitter photokinetics.

Dwell times in each state are exponential with means tau_on and tau_off
(in frame units). The emission rate while on is constant, so the photon
count of a frame is the rate times the fraction of the frame spent on.
The renewal process is simulated in continuous time; fractional frame
occupancy avoids discretization aliasing even at tau_on = 1 frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KineticsParams", "BlinkTrace", "duty_cycle", "sample_dwells", "simulate_trace"]


@dataclass(frozen=True)
class KineticsParams:
    tau_on: float  # mean on-dwell, frames
    tau_off: float  # mean off-dwell, frames
    photon_rate: float = 1.0  # photons per frame while on

    def __post_init__(self):
        if self.tau_on <= 0 or self.tau_off <= 0 or self.photon_rate <= 0:
            raise ValueError("tau_on, tau_off, and photon_rate must be positive")


@dataclass
class BlinkTrace:
    """Per-emitter, per-frame emitted photon counts (emitters x frames)."""

    photons: np.ndarray
    params: KineticsParams | None = None

    def __post_init__(self):
        self.photons = np.atleast_2d(np.asarray(self.photons, dtype=float))
        if (self.photons < 0).any():
            raise ValueError("photon counts must be nonnegative")

    @property
    def n_emitters(self) -> int:
        return self.photons.shape[0]

    @property
    def n_frames(self) -> int:
        return self.photons.shape[1]


def duty_cycle(params: KineticsParams) -> float:
    """Long-run fraction of time spent in the on state."""
    return params.tau_on / (params.tau_on + params.tau_off)


def sample_dwells(
    n: int,
    state_on: bool,
    params: KineticsParams,
    rng=None,
) -> np.ndarray:
    """n consecutive dwell durations (frames) for one state of one emitter."""
    if n < 1:
        raise ValueError("need at least one dwell")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.exponential(params.tau_on if state_on else params.tau_off, n)


def simulate_trace(
    n_emitters: int,
    n_frames: int,
    params: KineticsParams,
    rng=None,
) -> BlinkTrace:
    """Simulate independent identical emitters over n_frames.

    The initial state is drawn from the stationary distribution (on with
    probability duty_cycle) so the statistics are stationary from frame 1;
    the first dwell needs no residual-time correction because exponential
    dwells are memoryless.
    """
    if n_emitters < 1 or n_frames < 1:
        raise ValueError("need at least one emitter and one frame")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    dc = duty_cycle(params)
    frame_edges = np.arange(n_frames + 1, dtype=float)
    photons = np.empty((n_emitters, n_frames))
    for e in range(n_emitters):
        occupancy = _on_occupancy(n_frames, params, dc, rng, frame_edges)
        photons[e] = params.photon_rate * occupancy
    return BlinkTrace(photons=photons, params=params)


def _on_occupancy(
    n_frames: int,
    params: KineticsParams,
    dc: float,
    rng: np.random.Generator,
    frame_edges: np.ndarray,
) -> np.ndarray:
    """Fraction of each frame spent on, for one emitter."""
    start_on = rng.random() < dc
    cycle = params.tau_on + params.tau_off
    bounds = [np.zeros(1)]
    total = 0.0
    first = start_on
    while total < n_frames:
        # Draw dwell pairs in blocks; alternate on/off starting from `first`.
        n_pairs = max(int(np.ceil((n_frames - total) / cycle * 1.5)) + 4, 8)
        a = sample_dwells(n_pairs, first, params, rng)
        b = sample_dwells(n_pairs, not first, params, rng)
        block = np.empty(2 * n_pairs)
        block[0::2] = a
        block[1::2] = b
        bounds.append(total + np.cumsum(block))
        total = bounds[-1][-1]
    t = np.concatenate(bounds)
    # Cumulative on-time is piecewise linear in t: slope 1 during on dwells.
    durations = np.diff(t)
    on_mask = np.zeros(len(durations))
    on_mask[0::2] = 1.0 if start_on else 0.0
    on_mask[1::2] = 0.0 if start_on else 1.0
    cum_on = np.concatenate([[0.0], np.cumsum(durations * on_mask)])
    return np.diff(np.interp(frame_edges, t, cum_on))
