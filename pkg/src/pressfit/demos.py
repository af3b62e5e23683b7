"""Scripted demonstrations and the recording path that degrades them.

The demonstrator reads privileged simulator state and walks five phases
on fixed step budgets (reach, descend, slide, insert, settle), so a
frame's index roughly encodes task progress across every demonstration.
Slides stay under the slip limit and keep a light downward press so the
rim direction stays visible in the tactile image; that blob is the only
signal that disambiguates otherwise identical poses on opposite sides
of the hole.

What gets stored is not the executed motion: the true 15 Hz poses are
lifted to a synthetic 60 Hz tracker stream, corrupted with jitter and
occasional glitch spikes, then repaired, lowpass filtered and decimated
back.  Actions are pose deltas of that recorded stream, which leaves a
small systematic gap between what a demo says and what it did.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import median_filter

from pressfit.env import PegInHoleEnv
from pressfit.geometry import (
    Pose6D,
    compose,
    delta_between,
    euler_xyz_from_quat,
    quat_conjugate,
    quat_from_euler_xyz,
    quat_multiply,
)
from pressfit.streams import TimedStream, iqr_repair, lowpass, resample
from pressfit.trajectory import Trajectory

QUALITIES = ("success", "failure", "suboptimal")


@dataclass(frozen=True)
class DemoConfig:
    quality: str = "success"
    reach_steps: int = 12
    descend_steps: int = 10
    slide_steps: int = 14
    insert_steps: int = 28
    settle_steps: int = 6
    reach_step: float = 0.0015
    slide_step: float = 0.0013
    press: float = 0.00025
    standoff: float = 0.005
    control_noise: float = 0.00012
    control_rot_noise: float = 0.0005
    track_rate: float = 60.0
    track_pos_noise: float = 0.0003
    track_rot_noise: float = np.deg2rad(0.25)
    outlier_prob: float = 0.02
    outlier_mag: float = 0.025
    lowpass_fc: float = 3.0
    # staging ring for demonstration starts: a consistent distance and
    # height keep every demonstration's phase timing aligned, so the
    # within-trajectory index means the same thing in every recording
    stage_distance: float = 0.0085
    stage_height: float = 0.006

    @property
    def total_steps(self) -> int:
        return (
            self.reach_steps
            + self.descend_steps
            + self.slide_steps
            + self.insert_steps
            + self.settle_steps
        )

    @property
    def noise_free(self) -> bool:
        return (
            self.track_pos_noise == 0.0
            and self.track_rot_noise == 0.0
            and self.outlier_prob == 0.0
        )

    def without_tracking_noise(self) -> "DemoConfig":
        return replace(
            self, track_pos_noise=0.0, track_rot_noise=0.0, outlier_prob=0.0
        )


PHASE_ORDER = ("reach", "descend", "slide", "insert", "settle")


class ScriptedDemonstrator:
    """Event-driven controller over privileged hole-frame state.

    Phases advance when their goal condition is met (or a step budget runs
    out), never on a fixed schedule, so every recorded frame shows motion.
    A controller that waits in place would salt the demonstrations with
    interchangeable frames that all look alike to a retrieval policy.
    """

    def __init__(self, env: PegInHoleEnv, cfg: DemoConfig, rng: np.random.Generator):
        if cfg.quality not in QUALITIES:
            raise ValueError(f"unknown quality {cfg.quality!r}")
        self.env = env
        self.cfg = cfg
        self.rng = rng
        self.phase = "reach"
        self.spent = 0
        self.finished = False
        self.bias = np.zeros(2)
        self.stop_depth = np.inf
        self.detour = np.zeros(2)
        if cfg.quality == "failure":
            if rng.uniform() < 0.5:
                angle = rng.uniform(0.0, 2.0 * np.pi)
                self.bias = rng.uniform(0.004, 0.006) * np.array([np.cos(angle), np.sin(angle)])
            else:
                self.stop_depth = rng.uniform(0.25, 0.45) * env.cfg.hole_depth
        elif cfg.quality == "suboptimal":
            angle = rng.uniform(0.0, 2.0 * np.pi)
            self.detour = rng.uniform(0.004, 0.007) * np.array([np.cos(angle), np.sin(angle)])

    def _budget(self, phase: str) -> int:
        cfg = self.cfg
        return {
            "reach": cfg.reach_steps,
            "descend": cfg.descend_steps,
            "slide": cfg.slide_steps,
            "insert": cfg.insert_steps,
            "settle": cfg.settle_steps,
        }[phase]

    def _goal(self) -> np.ndarray:
        goal = self.bias.copy()
        if self.cfg.quality == "suboptimal" and self.phase == "reach":
            if self.spent < self.cfg.reach_steps // 2:
                goal = goal + self.detour
        return goal

    def _goal_depth(self) -> float:
        env_cfg = self.env.cfg
        return env_cfg.success_depth_frac * env_cfg.hole_depth + 0.002

    def _inside_bore(self) -> bool:
        # on flared holes the funnel does not count: the tip is only
        # committed once it passes the ledge into the straight bore
        return self.env.tip_hole()[2] < -(self.env.cfg.flare_depth + 0.0005)

    def _transition(self) -> None:
        env = self.env
        while not self.finished:
            if self.spent >= self._budget(self.phase):
                if self.phase == "settle":
                    self.finished = True
                    break
                self.phase = PHASE_ORDER[PHASE_ORDER.index(self.phase) + 1]
                self.spent = 0
                continue
            if self.phase == "descend":
                if env._support is not None or self._inside_bore():
                    self.phase = "slide"
                    self.spent = 0
                    continue
            elif self.phase == "slide":
                if self._inside_bore():
                    self.phase = "insert"
                    self.spent = 0
                    continue
            elif self.phase == "insert":
                if env.depth() >= min(self.stop_depth, self._goal_depth()):
                    self.phase = "settle"
                    self.spent = 0
                    continue
            break

    def _straighten(self) -> np.ndarray:
        """Body-frame rotation nudge toward the bore axis, capped per step."""
        err = quat_multiply(quat_conjugate(self.env.pose.quaternion), self.env.goal_quat())
        if err[0] < 0.0:
            err = -err
        vec = 2.0 * err[1:]  # small-angle rotation vector
        # the peg is a lever: 0.004 rad swings the tip ~0.3 mm, which keeps
        # rotation plus lateral centering under the slip limit on a surface
        return np.clip(vec, -0.004, 0.004)

    def action(self) -> np.ndarray:
        cfg = self.cfg
        env = self.env
        self._transition()
        tip = env.tip_hole()
        lateral = tip[:2]
        rho = float(np.linalg.norm(lateral))
        inside = self._inside_bore()
        admission = env.bore_radius(0.0) - env.cfg.peg_radius

        d_lat = np.zeros(2)
        dz = 0.0
        d_rot = np.zeros(3)

        if self.phase == "reach":
            err = self._goal() - lateral
            dist = float(np.linalg.norm(err))
            if dist > cfg.standoff:
                # spread the approach over the whole budget: the phase ends
                # at the same within-trajectory index in every recording,
                # stopping short of the target so the descent lands on the
                # plate and the approach finishes as a sliding search
                steps_left = max(self._budget("reach") - self.spent, 1)
                d_lat = err / dist * min(cfg.reach_step, (dist - cfg.standoff) / steps_left)
            if env._support is None and not inside:
                # height runs on the step clock, not on lateral progress:
                # every recording then hands the descent the same altitude
                # no matter when its sideways search converged, keeping the
                # later phase boundaries at matching frame indices
                frac = (self.spent + 1) / self._budget("reach")
                z_target = max(cfg.stage_height * (1.0 - frac), 0.0005)
                dz = float(np.clip(z_target - tip[2], -0.0012, 0.0))
        elif self.phase == "descend":
            dz = -0.0012
        elif self.phase == "slide":
            err = self.bias - lateral
            dist = float(np.linalg.norm(err))
            if dist > 0.4 * admission:
                # radial cap: a per-axis clip would let diagonal slides
                # reach sqrt(2) times the step and trip the slip limit
                d_lat = err / dist * min(cfg.slide_step, dist)
                dz = -cfg.press
            else:
                dz = -0.0010  # lined up: drop through the mouth
                if tip[2] < -0.0005:
                    # part-way down a funnel or resting on a ledge: keep
                    # nudging toward the axis until the bore accepts the tip
                    d_lat = np.clip(-lateral, -0.0006, 0.0006)
        elif self.phase == "insert":
            if not inside:
                dz = -cfg.press  # failed to line up; keep pressing
            else:
                # constant feed: depth then maps to the same within-phase
                # index in every demonstration
                dz = -0.0012
                d_lat = np.clip(-lateral, -0.0006, 0.0006)
                d_rot = self._straighten()
                if self.cfg.quality == "suboptimal":
                    # overcorrect toward the far wall: the recording picks
                    # up wall taps and the recovery pushes that a clean
                    # pass never shows.  Driven by position, not by step
                    # parity, so one state never teaches two opposite moves
                    d_lat = d_lat + np.array([-np.sign(lateral[0]) * 0.0005, 0.0])
        else:
            dz = -cfg.press
            d_lat = np.clip(-lateral, -0.0002, 0.0002)
        self.spent += 1

        # steep flares guide the tip sideways while it descends; cap the fall
        # whenever the funnel wall is reachable or the guided slide outruns
        # the slip limit
        if (
            env.cfg.flare_depth > 0.0
            and tip[2] > -env.cfg.flare_depth
            and rho > env.cfg.hole_radius - env.cfg.peg_radius
        ):
            dz = max(dz, -0.0006)

        move_hole = np.array([d_lat[0], d_lat[1], dz])
        move_world = env._tilt_mat @ move_hole
        noise = self.rng.normal(0.0, cfg.control_noise, size=3)
        rot_noise = self.rng.normal(0.0, cfg.control_rot_noise, size=3)
        return np.concatenate([move_world + noise, d_rot + rot_noise])


def run_scripted_episode(
    env: PegInHoleEnv,
    seed: int,
    cfg: DemoConfig,
    start: tuple[float, float, float] | None = None,
):
    """Returns (frames, events, success); length varies with the start state."""
    obs = env.reset(seed, start=start)
    demon = ScriptedDemonstrator(env, cfg, np.random.default_rng([seed, 0]))
    frames = [obs]
    events = [{"blocked": False, "slipped": False, "contact": False}]
    while len(frames) <= cfg.total_steps and not env.done and not demon.finished:
        obs, ev, _ = env.step(demon.action())
        frames.append(obs)
        events.append(ev)
    return frames, events, env.is_success()


def simulate_tracking(
    poses: list[Pose6D], timestamps: np.ndarray, cfg: DemoConfig, rng: np.random.Generator
) -> np.ndarray:
    """True poses -> noisy 60 Hz tracker -> repaired, filtered 15 Hz records.

    Returns (n, 6) rows of translation + intrinsic-xyz euler angles.
    """
    translations = np.stack([p.translation for p in poses])
    eulers = np.stack([euler_xyz_from_quat(p.quaternion) for p in poses])
    signal = np.concatenate([translations, eulers], axis=1)

    low = TimedStream(timestamps, signal, rate=15.0)
    high = resample(low, cfg.track_rate, method="linear")
    tracked = np.array(high.values, dtype=np.float64)

    tracked[:, :3] += rng.normal(0.0, cfg.track_pos_noise, size=tracked[:, :3].shape)
    tracked[:, 3:] += rng.normal(0.0, cfg.track_rot_noise, size=tracked[:, 3:].shape)
    glitch = rng.uniform(size=len(tracked)) < cfg.outlier_prob
    for i in np.flatnonzero(glitch):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        tracked[i, :3] += rng.uniform(0.8, 1.2) * cfg.outlier_mag * direction

    # Quartile fences on raw positions are useless for trending columns (the
    # vertical sweep spans tens of mm, so a glitch sits inside the global
    # bounds).  Detrend with a running median first: it ignores isolated
    # spikes and passes linear ramps through exactly, leaving a stationary
    # residual where the fences catch glitches reliably.
    # "reflect" padding keeps a glitched edge sample a minority of its own
    # window; "nearest" would fill half the window with copies of it and the
    # trend would swallow the spike.  Repair window 7 so a run of up to three
    # adjacent glitches still sees a clean majority; with window 3 two
    # neighboring spikes feed each other their own median and survive.
    for j in range(6):
        col = tracked[:, j]
        trend = median_filter(col, size=31, mode="reflect")
        tracked[:, j] = trend + iqr_repair(col - trend, window=7)

    # The spectral filter sees a periodic signal, so the jump between the
    # last and first samples would bleed into both ends of the track.
    # Remove an endpoint ramp first; median anchors resist residual noise.
    frac = (np.arange(len(tracked)) / (len(tracked) - 1))[:, None]
    head = np.median(tracked[:5], axis=0)
    tail = np.median(tracked[-5:], axis=0)
    ramp = head + (tail - head) * frac
    smooth = ramp + lowpass(tracked - ramp, fs=cfg.track_rate, fc=cfg.lowpass_fc)
    recorded = resample(TimedStream(high.timestamps, smooth, cfg.track_rate), 15.0)
    return np.asarray(recorded.values, dtype=np.float64)


def record_demo(
    env: PegInHoleEnv,
    seed: int,
    cfg: DemoConfig,
    start: tuple[float, float, float] | None = None,
) -> Trajectory:
    frames, events, success = run_scripted_episode(env, seed, cfg, start=start)
    timestamps = np.array([f.timestamp for f in frames])
    if cfg.noise_free:
        recorded = np.stack([f.pose.features() for f in frames])
    else:
        recorded = simulate_tracking(
            [f.pose for f in frames], timestamps, cfg, np.random.default_rng([seed, 1])
        )

    poses7 = np.zeros((len(frames), 7))
    rec_poses = []
    for i, row in enumerate(recorded):
        quat = quat_from_euler_xyz(row[3:])
        rec_poses.append(Pose6D(translation=row[:3], quaternion=quat))
        poses7[i, :3] = row[:3]
        poses7[i, 3:] = quat
    actions = np.stack(
        [delta_between(rec_poses[i], rec_poses[i + 1]).as_vector() for i in range(len(frames) - 1)]
    )

    return Trajectory(
        poses=poses7,
        actions=actions,
        tactile=np.stack([f.tactile for f in frames]),
        audio=np.stack([f.audio for f in frames]),
        timestamps=timestamps,
        blocked=np.array([e["blocked"] for e in events], dtype=np.uint8),
        slipped=np.array([e["slipped"] for e in events], dtype=np.uint8),
        contact=np.array([e["contact"] for e in events], dtype=np.uint8),
        meta={
            "success": bool(success),
            "quality": cfg.quality,
            "seed": int(seed),
            "start_offset": [float(v) for v in env.start_offset],
        },
    )


def generate_demo_set(
    env: PegInHoleEnv,
    count: int,
    base_seed: int,
    mix: tuple[float, float, float] = (0.7, 0.15, 0.15),
    noise_free: bool = False,
) -> list[Trajectory]:
    """Demos with a mixed quality profile; seeds are base_seed + index."""
    if abs(sum(mix) - 1.0) > 1e-9:
        raise ValueError("quality mix must sum to 1")
    # fixed counts rather than random draws: every set gets its share of
    # imperfect demonstrations, which cover the recovery states a clean
    # success never visits
    n_fail = int(round(count * mix[1]))
    n_sub = int(round(count * mix[2]))
    n_succ = count - n_fail - n_sub
    qualities = ["success"] * n_succ + ["failure"] * n_fail + ["suboptimal"] * n_sub
    demos = []
    for i, quality in enumerate(qualities):
        cfg = DemoConfig(quality=quality)
        if noise_free:
            cfg = cfg.without_tracking_noise()
        # starts fan out around the staging ring so the set covers every
        # approach direction
        angle = 2.0 * np.pi * i / count
        start = (
            cfg.stage_distance * np.cos(angle),
            cfg.stage_distance * np.sin(angle),
            cfg.stage_height,
        )
        demos.append(record_demo(env, base_seed + i, cfg, start=start))
    return demos
