"""Quasi-static peg-in-hole simulator with tactile and audio sensing.

A rigid cylindrical peg hangs from a position-controlled flange; each
step commands a 6-D pose delta and the contact solver resolves it
against a plate with a bored hole.  Motion resolves laterally first,
then vertically, against three constraint families:

* radial clamp: inside the bore the tip disk stays within the wall;
* support rest: plate surface, two-stage ledge, and bore floor clamp
  downward motion;
* wedge rule: a tilted peg jams once its tilt exceeds the geometric
  limit atan2(2 * (hole_r - peg_r), depth).

Sensors are rendered from the resolved contacts: a (24, 32) pressure
image with one Gaussian blob per contact point, and a trailing 0.5 s
microphone window where contact onsets and blocked hits ring as damped
tones over a noise floor.  All randomness flows from the reset seed, so
a seeded episode replays bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from pressfit.geometry import (
    DeltaAction,
    Pose6D,
    compose,
    quat_from_axis_angle,
    quat_from_euler_xyz,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
)
from pressfit.trajectory import TACTILE_SHAPE, MultimodalFrame


@dataclass(frozen=True)
class EnvConfig:
    peg_radius: float = 0.0175
    peg_length: float = 0.080
    hole_radius: float = 0.020
    hole_depth: float = 0.040
    tilt_deg: float = 0.0
    shift_mag: float = 0.0
    flare_radius: float = 0.0
    flare_inner_radius: float = 0.0
    flare_depth: float = 0.0
    success_depth_frac: float = 0.75
    success_lateral: float = 0.0025
    horizon: int = 100
    start_height: tuple[float, float] = (0.004, 0.008)
    start_lateral: float = 0.010
    start_tilt_deg: float = 1.5
    start_yaw_deg: float = 3.0
    frame_rate: float = 15.0
    audio_rate: int = 16000
    audio_window_s: float = 0.5
    audio_noise: float = 0.012
    tactile_blob_sigma: float = 1.8
    full_pressure_pen: float = 0.0015
    rest_pen: float = 0.0003
    slip_limit: float = 0.002
    blocked_frac: float = 0.25
    blocked_abs: float = 0.00035


VARIANTS = ("base", "shift", "tilt10", "tilt20", "two_stage", "tolerance")

# a tip resting at z == 0 picks up sub-picometer sign noise from the
# world <-> hole frame round trip; treat that band as surface level or the
# wall clamp yanks a plate-resting peg into the bore
SURFACE_EPS = 1e-9


def make_variant(name: str, **overrides) -> EnvConfig:
    base = EnvConfig()
    if name == "base":
        cfg = base
    elif name == "shift":
        cfg = replace(base, shift_mag=0.008)
    elif name == "tilt10":
        cfg = replace(base, tilt_deg=10.0)
    elif name == "tilt20":
        cfg = replace(base, tilt_deg=20.0)
    elif name == "two_stage":
        cfg = replace(
            base,
            hole_depth=0.050,
            flare_radius=0.030,
            flare_inner_radius=0.022,
            flare_depth=0.00373,
        )
    elif name == "tolerance":
        cfg = replace(
            base,
            peg_radius=0.0085,
            hole_radius=0.010,
            hole_depth=0.020,
            success_lateral=0.0015,
        )
    else:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return replace(cfg, **overrides) if overrides else cfg


def synth_impact_burst(
    rng: np.random.Generator, magnitude: float, n: int, rate: int
) -> np.ndarray:
    """Damped tone for one impact; energy scales with magnitude squared."""
    t = np.arange(n) / rate
    freq = 1200.0 * (1.0 + 0.1 * rng.uniform(-1.0, 1.0))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return magnitude * np.exp(-t / 0.03) * np.sin(2.0 * np.pi * freq * t + phase)


class PegInHoleEnv:
    """See module docstring; all positions are meters, world frame."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self._tilt_quat = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.deg2rad(cfg.tilt_deg))
        self._tilt_mat = quat_to_matrix(self._tilt_quat)
        self._window_n = int(round(cfg.audio_rate * cfg.audio_window_s))
        self._rng: np.random.Generator | None = None

    # ---- frames ----

    def _to_hole(self, p_world: np.ndarray) -> np.ndarray:
        return self._tilt_mat.T @ (p_world - self._hole_center)

    def _from_hole(self, p_hole: np.ndarray) -> np.ndarray:
        return self._hole_center + self._tilt_mat @ p_hole

    def bore_radius(self, z: float) -> float:
        """Bore radius at hole-frame height z <= 0."""
        cfg = self.cfg
        if cfg.flare_depth > 0.0 and z >= -cfg.flare_depth - SURFACE_EPS:
            # the ledge plane itself belongs to the flare: a tip resting
            # there is above the narrow bore, not inside it.  The epsilon
            # absorbs frame round-trip noise on a ledge-resting tip.
            frac = min(-z / cfg.flare_depth, 1.0)
            return cfg.flare_radius + (cfg.flare_inner_radius - cfg.flare_radius) * frac
        return cfg.hole_radius

    def _tip_world(self, pose: Pose6D) -> np.ndarray:
        return pose.translation + quat_rotate(pose.quaternion, np.array([0.0, 0.0, -self.cfg.peg_length]))

    def tip_hole(self) -> np.ndarray:
        return self._to_hole(self._tip_world(self.pose))

    def peg_tilt(self) -> float:
        """Angle between the peg axis and the bore axis, radians."""
        axis_world = quat_rotate(self.pose.quaternion, np.array([0.0, 0.0, -1.0]))
        axis_hole = self._tilt_mat.T @ axis_world
        c = float(np.clip(-axis_hole[2], -1.0, 1.0))
        return float(np.arccos(c))

    def wedge_limit(self, depth: float) -> float:
        gap = 2.0 * (self.cfg.hole_radius - self.cfg.peg_radius)
        return float(np.arctan2(gap, max(depth, 0.001)))

    # ---- episode control ----

    def reset(self, seed: int, start: tuple[float, float, float] | None = None) -> MultimodalFrame:
        """Seeded episode start; `start` pins the tip offset (hole frame).

        The randomized draws stay on the generator even when `start`
        overrides them, so the rest of the episode's noise stream does not
        depend on whether a start was prescribed.
        """
        cfg = self.cfg
        self._rng = np.random.default_rng(seed)
        rng = self._rng

        self._hole_center = np.zeros(3)
        if cfg.shift_mag > 0.0:
            axis = rng.integers(0, 2)
            sign = 1.0 if rng.integers(0, 2) == 1 else -1.0
            self._hole_center = np.zeros(3)
            self._hole_center[axis] = sign * cfg.shift_mag

        ox = rng.uniform(-cfg.start_lateral, cfg.start_lateral)
        oy = rng.uniform(-cfg.start_lateral, cfg.start_lateral)
        oz = rng.uniform(*cfg.start_height)
        if start is not None:
            ox, oy, oz = (float(v) for v in start)
        self.start_offset = np.array([ox, oy])

        jitter = quat_from_euler_xyz(
            np.array(
                [
                    rng.uniform(-1.0, 1.0) * np.deg2rad(cfg.start_tilt_deg),
                    rng.uniform(-1.0, 1.0) * np.deg2rad(cfg.start_tilt_deg),
                    rng.uniform(-1.0, 1.0) * np.deg2rad(cfg.start_yaw_deg),
                ]
            )
        )
        quat = quat_multiply(self._tilt_quat, jitter)
        tip_world = self._from_hole(np.array([ox, oy, oz]))
        ee = tip_world - quat_rotate(quat, np.array([0.0, 0.0, -cfg.peg_length]))
        self.pose = Pose6D(translation=ee, quaternion=quat)

        self.steps = 0
        self.slipped = False
        self.done = False
        self._support = None  # "plate" | "ledge" | "floor" while resting
        self._wall = False
        self._contact_normals: list[np.ndarray] = []
        self._audio_buf = rng.normal(0.0, cfg.audio_noise, size=self._window_n)
        self._audio_carry = 0.0
        self._tactile = np.zeros(TACTILE_SHAPE)
        self._events = {"blocked": False, "slipped": False, "contact": False}
        return self.observe()

    def observe(self) -> MultimodalFrame:
        audio = np.clip(0.5 + self._audio_buf, 0.0, 1.0)
        return MultimodalFrame(
            tactile=self._tactile.copy(),
            audio=audio,
            pose=self.pose,
            timestamp=self.steps / self.cfg.frame_rate,
        )

    # ---- metrics used by rewards and benchmarks ----

    def depth(self) -> float:
        return max(0.0, -float(self.tip_hole()[2]))

    def lateral_error(self) -> float:
        t = self.tip_hole()
        return float(np.hypot(t[0], t[1]))

    def goal_offset(self) -> np.ndarray:
        goal = np.array([0.0, 0.0, -self.cfg.success_depth_frac * self.cfg.hole_depth])
        return self.tip_hole() - goal

    def goal_quat(self) -> np.ndarray:
        return self._tilt_quat.copy()

    def is_success(self) -> bool:
        return (
            not self.slipped
            and self.depth() >= self.cfg.success_depth_frac * self.cfg.hole_depth
            and self.lateral_error() <= self.cfg.success_lateral
        )

    # ---- dynamics ----

    def step(self, delta: np.ndarray):
        if self.done:
            raise RuntimeError("episode is over; call reset")
        cfg = self.cfg
        action = DeltaAction.from_vector(np.asarray(delta, dtype=np.float64))
        target = compose(self.pose, action)

        tip0 = self.tip_hole()
        tip1 = self._to_hole(self._tip_world(target))
        contacts: list[tuple[np.ndarray, np.ndarray, float]] = []  # point, normal, pen
        impacts: list[tuple[str, float]] = []
        blocked = False

        # lateral pass at the current height
        x, y = tip1[0], tip1[1]
        z = tip0[2]
        wall = False
        if z < -SURFACE_EPS:
            allow = self.bore_radius(z) - cfg.peg_radius
            rho = float(np.hypot(x, y))
            if rho > allow:
                pen = rho - allow
                direction = np.array([x, y, 0.0]) / rho
                x, y = allow * direction[0], allow * direction[1]
                wall = True
                contacts.append((np.array([x, y, z]) + cfg.peg_radius * direction, -direction, pen))
                if not self._wall:
                    impacts.append(("wall", pen))

        # vertical pass at the resolved lateral position
        dz = tip1[2] - tip0[2]
        z_target = z + dz
        support = None
        if dz < 0.0:
            rho = float(np.hypot(x, y))
            depth0 = -z
            if z >= -SURFACE_EPS:
                mouth = self.bore_radius(0.0) - cfg.peg_radius
                if z_target < 0.0 and rho > mouth:
                    # plate or rim rest
                    z_target = 0.0
                    support = "plate"
            if z_target < 0.0:
                # wedge check uses the depth where the descent starts
                if self.peg_tilt() > self.wedge_limit(max(depth0, 0.0)) and depth0 > 0.0:
                    z_target = z
                    blocked = True
                    impacts.append(("wedge", cfg.rest_pen))
                else:
                    if cfg.flare_depth > 0.0 and z_target > -cfg.hole_depth:
                        # funnel guides the tip inward while it descends
                        ledge_allow = cfg.flare_inner_radius - cfg.peg_radius
                        if z_target <= -cfg.flare_depth and z >= -cfg.flare_depth - SURFACE_EPS:
                            if rho > ledge_allow:
                                scale = ledge_allow / rho
                                x, y = x * scale, y * scale
                                rho = ledge_allow
                                wall = True
                            if rho > cfg.hole_radius - cfg.peg_radius:
                                z_target = -cfg.flare_depth
                                support = "ledge"
                        elif z_target > -cfg.flare_depth:
                            allow = self.bore_radius(z_target) - cfg.peg_radius
                            if rho > allow:
                                scale = allow / rho
                                x, y = x * scale, y * scale
                                rho = allow
                                wall = True
                    floor = -cfg.hole_depth
                    if z_target < floor:
                        z_target = floor
                        support = "floor"
            z = z_target
        else:
            z = z_target

        # support contact bookkeeping
        if support is not None:
            # resting contact stays loaded even under a zero command
            pen = max(abs((tip0[2] + dz) - z), cfg.rest_pen)
            rho = float(np.hypot(x, y))
            if support == "plate" and rho < self.bore_radius(0.0) + cfg.peg_radius:
                # straddling the rim: pressure concentrates on the edge line
                direction = np.array([x, y, 0.0]) / max(rho, 1e-12)
                point = np.array([direction[0], direction[1], 0.0]) * self.bore_radius(0.0)
            elif support == "ledge":
                direction = np.array([x, y, 0.0]) / max(rho, 1e-12)
                point = np.array([direction[0], direction[1], 0.0]) * cfg.hole_radius
                point[2] = z
            else:
                point = np.array([x, y, z])
            contacts.append((point, np.array([0.0, 0.0, 1.0]), pen))
            if self._support != support:
                impacts.append(("support", abs((tip0[2] + dz) - z)))

        achieved = np.array([x, y, z]) - tip0
        commanded = tip1 - tip0
        shortfall = float(np.linalg.norm(commanded) - np.linalg.norm(achieved))
        if (
            np.linalg.norm(commanded) > 0.0
            and shortfall > cfg.blocked_frac * float(np.linalg.norm(commanded))
            and shortfall > cfg.blocked_abs
        ):
            blocked = True

        # slip: tangential glide against contacts held from the previous step
        slipped_now = False
        if self._contact_normals and not self.slipped:
            tangential = achieved.copy()
            for n_vec in self._contact_normals:
                tangential = tangential - np.dot(tangential, n_vec) * n_vec
            if float(np.linalg.norm(tangential)) > cfg.slip_limit:
                slipped_now = True
        if slipped_now:
            self.slipped = True
            impacts.append(("slip", cfg.full_pressure_pen))

        # commit pose: tip moved to the resolved point, orientation free
        tip_world = self._from_hole(np.array([x, y, z]))
        ee = tip_world - quat_rotate(target.quaternion, np.array([0.0, 0.0, -cfg.peg_length]))
        self.pose = Pose6D(translation=ee, quaternion=target.quaternion)

        self._support = support
        self._wall = wall
        # normals stay in the hole frame, matching the achieved vector
        self._contact_normals = [c[1] for c in contacts]

        self._render_tactile(contacts)
        self._advance_audio(impacts)

        self.steps += 1
        self._events = {
            "blocked": blocked,
            "slipped": self.slipped,
            "contact": len(contacts) > 0,
        }
        self.done = self.slipped or self.is_success() or self.steps >= cfg.horizon
        return self.observe(), dict(self._events), self.done

    # ---- sensor rendering ----

    def _render_tactile(self, contacts) -> None:
        cfg = self.cfg
        img = np.zeros(TACTILE_SHAPE)
        if contacts:
            tip_world = self._tip_world(self.pose)
            rot = quat_to_matrix(self.pose.quaternion)
            rows, cols = np.mgrid[0 : TACTILE_SHAPE[0], 0 : TACTILE_SHAPE[1]]
            for point_hole, _, pen in contacts:
                v_world = self._from_hole(point_hole) - tip_world
                v_body = rot.T @ v_world
                u = float(np.clip(v_body[0] / cfg.peg_radius, -1.0, 1.0))
                w = float(np.clip(v_body[1] / cfg.peg_radius, -1.0, 1.0))
                r0 = (TACTILE_SHAPE[0] - 1) / 2.0 + w * 10.0
                c0 = (TACTILE_SHAPE[1] - 1) / 2.0 + u * 14.0
                amp = 255.0 * min(1.0, pen / cfg.full_pressure_pen)
                img += amp * np.exp(
                    -((rows - r0) ** 2 + (cols - c0) ** 2) / (2.0 * cfg.tactile_blob_sigma**2)
                )
        self._tactile = np.clip(img, 0.0, 255.0)

    def _advance_audio(self, impacts) -> None:
        cfg = self.cfg
        step_exact = cfg.audio_rate / cfg.frame_rate + self._audio_carry
        n = int(step_exact)
        self._audio_carry = step_exact - n
        chunk = self._rng.normal(0.0, cfg.audio_noise, size=n)
        for kind, pen in impacts:
            mag = 0.3 * min(1.0, pen / cfg.full_pressure_pen)
            if kind in ("wedge", "slip"):
                mag += 0.15
            burst_n = min(n, int(0.12 * cfg.audio_rate))
            start = int(self._rng.uniform(0.0, max(1, n - burst_n)))
            chunk[start : start + burst_n] += synth_impact_burst(
                self._rng, mag, burst_n, cfg.audio_rate
            )
        self._audio_buf = np.concatenate([self._audio_buf, chunk])[-self._window_n :]
