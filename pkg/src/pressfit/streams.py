"""Conditioning for multi-rate sensor streams.

The recording rig produces pose tracking at 60 Hz, tactile frames at 15 Hz
and a continuous microphone signal; everything is aligned to one control
rate before actions are extracted.  The repair/lowpass steps remove tracking
glitches, and hand_eye_calibrate registers the tracker frame to the robot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pressfit.geometry import (
    Pose6D,
    matrix_to_quat,
    quat_to_matrix,
)


class CalibrationError(ValueError):
    """Raised when the calibration problem is rank deficient."""


@dataclass(frozen=True)
class TimedStream:
    """Uniformly sampled stream: timestamps (n,), values (n, ...), rate in Hz."""

    timestamps: np.ndarray
    values: np.ndarray
    rate: float

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.asarray(self.values)
        if ts.ndim != 1 or len(ts) == 0:
            raise ValueError("timestamps must be a nonempty 1-D array")
        if len(vals) != len(ts):
            raise ValueError("values and timestamps length mismatch")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])


def resample(stream: TimedStream, target_rate: float, method: str = "nearest") -> TimedStream:
    """Resample onto the uniform grid t0 + k/target_rate.

    `nearest` picks the closest input sample (used for poses and for
    decimating audio); `linear` interpolates and is only valid for float
    values.  Downsampling 60 Hz -> 15 Hz keeps every 4th sample exactly.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if method not in ("nearest", "linear"):
        raise ValueError(f"unknown resample method {method!r}")
    ts = stream.timestamps
    t0 = ts[0]
    # small epsilon so a grid point coinciding with the last sample survives
    n_out = int(np.floor((ts[-1] - t0) * target_rate + 1e-9)) + 1
    grid = t0 + np.arange(n_out) / target_rate
    if method == "nearest":
        idx = np.searchsorted(ts, grid)
        idx = np.clip(idx, 1, len(ts) - 1)
        left, right = ts[idx - 1], ts[idx]
        idx = np.where(grid - left <= right - grid, idx - 1, idx)
        vals = stream.values[idx]
    else:
        flat = np.asarray(stream.values, dtype=np.float64)
        shape = flat.shape[1:]
        flat = flat.reshape(len(ts), -1)
        cols = [np.interp(grid, ts, flat[:, j]) for j in range(flat.shape[1])]
        vals = np.stack(cols, axis=1).reshape((n_out,) + shape)
    return TimedStream(grid, vals, target_rate)


@dataclass(frozen=True)
class AudioSegment:
    start_time: float
    samples: np.ndarray


def segment_audio(
    stream: TimedStream, window_s: float = 0.5, hop_s: float = 1.0 / 15.0
) -> list[AudioSegment]:
    """Slice an audio stream into overlapping fixed-width windows.

    Consecutive segments start hop_s apart, so they share window_s - hop_s
    of signal.  Only full windows are produced; a signal shorter than one
    window is an error.
    """
    if window_s <= 0 or hop_s <= 0:
        raise ValueError("window_s and hop_s must be positive")
    win_n = int(round(window_s * stream.rate))
    hop_exact = hop_s * stream.rate
    n = len(stream.values)
    if win_n > n:
        raise ValueError(f"signal of {n} samples shorter than window of {win_n}")
    out: list[AudioSegment] = []
    i = 0
    while True:
        start = int(round(i * hop_exact))
        if start + win_n > n:
            break
        out.append(
            AudioSegment(
                start_time=float(stream.timestamps[start]),
                samples=np.asarray(stream.values[start : start + win_n]),
            )
        )
        i += 1
    return out


def iqr_repair(seq: np.ndarray, multiplier: float = 1.5, window: int = 3) -> np.ndarray:
    """Replace interquartile-range outliers with a local median.

    Samples strictly outside [Q1 - m*IQR, Q3 + m*IQR] are replaced by the
    median of the `window` samples centered on them; edge windows shrink to
    the available neighbors.  Repairs shift the quartiles, which can expose
    borderline samples, so passes repeat until nothing is flagged; the
    output is therefore a fixed point of the operation.  An all-identical
    sequence has IQR == 0 and passes through unchanged.
    """
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("iqr_repair expects a 1-D sequence")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if len(x) == 0:
        return x.copy()
    out = x.copy()
    half = window // 2
    for _ in range(32):
        q1, q3 = np.percentile(out, [25.0, 75.0])
        iqr = q3 - q1
        lo, hi = q1 - multiplier * iqr, q3 + multiplier * iqr
        bad = np.flatnonzero((out < lo) | (out > hi))
        if len(bad) == 0:
            return out
        prev = out.copy()
        for i in bad:
            a, b = max(0, i - half), min(len(out), i + half + 1)
            out[i] = np.median(prev[a:b])
        if np.array_equal(out, prev):  # repairs stopped making progress
            return out
    return out


def lowpass(seq: np.ndarray, fs: float, fc: float) -> np.ndarray:
    """Zero-phase low-pass with magnitude response 1 / (1 + (f/fc)^2).

    Applied per frequency bin, which realizes a squared first-order
    magnitude with no phase shift: a sinusoid at fc keeps exactly half its
    amplitude, at 2*fc a fifth.  Works on 1-D sequences or (n, d) columns.
    """
    if fc <= 0:
        raise ValueError("cutoff must be positive")
    if fc >= fs / 2:
        raise ValueError(f"cutoff {fc} Hz must lie below the Nyquist rate {fs / 2} Hz")
    x = np.asarray(seq, dtype=np.float64)
    one_d = x.ndim == 1
    cols = x.reshape(len(x), -1)
    freqs = np.fft.rfftfreq(len(x), d=1.0 / fs)
    gain = 1.0 / (1.0 + (freqs / fc) ** 2)
    spec = np.fft.rfft(cols, axis=0) * gain[:, None]
    out = np.fft.irfft(spec, n=len(x), axis=0)
    return out[:, 0] if one_d else out.reshape(x.shape)


# ---------------------------------------------------------------------------
# Hand-eye registration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    transform: Pose6D
    rotation_residual: float
    translation_residual: float
    condition: float


def _rotvec(m: np.ndarray) -> np.ndarray:
    q = matrix_to_quat(m)
    s = float(np.linalg.norm(q[1:]))
    angle = 2.0 * np.arctan2(s, q[0])
    if s < 1e-12:
        return 2.0 * q[1:]  # small-angle limit
    return angle * q[1:] / s


def hand_eye_calibrate(pose_pairs: list[tuple[Pose6D, Pose6D]]) -> CalibrationResult:
    """Solve hand_i = X * eye_i for the fixed frame change X.

    Works on the AX = XB system over all pose-pair differences: rotation
    first from relative rotation axes (Kabsch on the axis-angle vectors),
    then translation by linear least squares.  Raises CalibrationError when
    the relative rotation axes are rank deficient (parallel or coplanar
    with too little spread), reporting the axis matrix condition number.
    """
    if len(pose_pairs) < 3:
        raise CalibrationError("need at least three pose pairs")
    hands = [p[0].matrix() for p in pose_pairs]
    eyes = [p[1].matrix() for p in pose_pairs]

    rel_a: list[np.ndarray] = []
    rel_b: list[np.ndarray] = []
    for i in range(len(pose_pairs)):
        for j in range(i + 1, len(pose_pairs)):
            rel_a.append(hands[i] @ np.linalg.inv(hands[j]))
            rel_b.append(eyes[i] @ np.linalg.inv(eyes[j]))

    a_vecs = np.array([_rotvec(m[:3, :3]) for m in rel_a])
    b_vecs = np.array([_rotvec(m[:3, :3]) for m in rel_b])

    m = a_vecs.T @ b_vecs
    u, sing, vt = np.linalg.svd(m)
    if sing[0] <= 0 or sing[1] / sing[0] < 1e-9:
        with np.errstate(over="ignore", divide="ignore"):
            cond = float(np.divide(sing[0], sing[1]))
        raise CalibrationError(
            f"rotation axes are rank deficient (condition number {cond:.3e}); "
            "vary the calibration orientations"
        )
    cond = float(sing[0] / sing[1])
    d = np.sign(np.linalg.det(u @ vt))
    r_x = u @ np.diag([1.0, 1.0, d]) @ vt

    rot_res = float(np.sqrt(np.mean(np.sum((a_vecs - b_vecs @ r_x.T) ** 2, axis=1))))

    # (R_A - I) t_X = R_X t_B - t_A, stacked over every pair
    lhs = np.vstack([m[:3, :3] - np.eye(3) for m in rel_a])
    rhs = np.concatenate([r_x @ mb[:3, 3] - ma[:3, 3] for ma, mb in zip(rel_a, rel_b)])
    t_x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    trans_res = float(np.sqrt(np.mean((lhs @ t_x - rhs) ** 2)))

    transform = Pose6D(t_x, matrix_to_quat(r_x))
    return CalibrationResult(transform, rot_res, trans_res, cond)


def apply_frame_change(x: Pose6D, eye_pose: Pose6D) -> Pose6D:
    """Map an eye-frame pose into the hand frame with the calibrated X."""
    m = x.matrix() @ eye_pose.matrix()
    return Pose6D(m[:3, 3], matrix_to_quat(m[:3, :3]))
