#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Среда кооперативной вставки штыря: Delta держит штырь, 3-RRS наклоняет
купол с шестью отверстиями.

Позы обоих механизмов хранятся целочисленными индексами решётки
приращений, поэтому повторные шаги не накапливают ошибку округления.
Один экземпляр среды однопоточный и владеет своим состоянием.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from kinematics import (
    TILT_LIMIT,
    RrsConfig,
    delta_inverse_kinematics,
    delta_pin_tip,
    delta_workspace_contains,
    rotation_matrix,
    rrs_config_valid,
    rrs_joint_angles,
)

logger = logging.getLogger(__name__)

NUM_ACTIONS = 12
STATE_DIM = 12

# (степень свободы, знак); индекс в списке - ActionId
ACTIONS = (
    ('x', +1), ('x', -1), ('y', +1), ('y', -1), ('z', +1), ('z', -1),
    ('roll', +1), ('roll', -1), ('pitch', +1), ('pitch', -1), ('z_r', +1), ('z_r', -1),
)
ACTION_NAMES = tuple(f"{dof}{'+' if sign > 0 else '-'}" for dof, sign in ACTIONS)

PIN_AXIS = np.array([0.0, 0.0, -1.0])

# (коширота, азимут) отверстий в градусах: вершина, верхнее, четыре боковых
HOLE_LAYOUT = ((0.0, 0.0), (15.0, 45.0), (35.0, 0.0), (35.0, 90.0), (35.0, 180.0), (35.0, 270.0))
PERIPHERAL_HOLES = (2, 3, 4, 5)
APEX_HOLES = (0, 1)

STAGES = ('C0', 'C1')
RESET_TRIES = 100
CONSISTENCY_TOL = 1e-12


class ContractViolation(RuntimeError):
    """Нарушение контракта среды: несогласованное состояние или неудачный сброс"""


# ============================================
# ЧИСТЫЕ ФУНКЦИИ ЗАДАЧИ
# ============================================

def hole_layout(dome_radius: float):
    """Позиции и внешние нормали отверстий в системе платформы, (6, 3) каждая"""
    normals = []
    for colatitude, azimuth in HOLE_LAYOUT:
        c, a = math.radians(colatitude), math.radians(azimuth)
        normals.append((math.sin(c) * math.cos(a), math.sin(c) * math.sin(a), math.cos(c)))
    normals = np.array(normals)
    return dome_radius * normals, normals


def active_holes(stage: str, c0_holes: int = 4, layout: str = 'peripheral'):
    """Активные отверстия стадии; C0 - первые c0_holes отверстий раскладки"""
    if stage == 'C1':
        return tuple(range(len(HOLE_LAYOUT)))
    holes = APEX_HOLES if layout == 'apex' else PERIPHERAL_HOLES
    return holes[:c0_holes]


def insertion_check(p_pin, h_target, n_target, pin_axis=PIN_AXIS,
                    pos_tol: float = 0.005, angle_tol_deg: float = 2.0) -> bool:
    """Вставка засчитывается при ‖p_pin − h‖ ≤ pos_tol и угле между осью и −n ≤ angle_tol"""
    offset = np.linalg.norm(np.asarray(p_pin, dtype=float) - np.asarray(h_target, dtype=float))
    if offset > pos_tol:
        return False
    return alignment_error_deg(pin_axis, n_target) <= angle_tol_deg


def alignment_error_deg(pin_axis, n_target) -> float:
    axis = np.asarray(pin_axis, dtype=float)
    normal = -np.asarray(n_target, dtype=float)
    cos_angle = axis @ normal / (np.linalg.norm(axis) * np.linalg.norm(normal))
    return math.degrees(math.acos(max(-1.0, min(1.0, float(cos_angle)))))


def compute_reward(violation: bool, inserted: bool, duplicate: bool, holes_filled: int,
                   t: float, distance: float, distance_change: float, task_time: float = 60.0) -> float:
    """
    r = −3·v + z·(150 + 25·N + 80·(1 − t/T_task)) − u
        + (1 − v − z − u)·(−0.01 − d + 50·Δd + 200·[0.03 − d]₊)
    """
    if violation + inserted + duplicate > 1:
        raise ContractViolation("одновременно несколько событий шага")
    if violation:
        return -3.0
    if inserted:
        return 150.0 + 25.0 * holes_filled + 80.0 * (1.0 - t / task_time)
    if duplicate:
        return -1.0
    return -0.01 - distance + 50.0 * distance_change + 200.0 * max(0.0, 0.03 - distance)


def curriculum_update(history, stage: str, window: int = 20, threshold: float = 0.75) -> str:
    """C0 → C1, когда доля успехов за последние window эпизодов строго больше threshold"""
    if stage == 'C1' or len(history) < window:
        return stage
    recent = list(history)[-window:]
    if sum(bool(s) for s in recent) / window > threshold:
        return 'C1'
    return stage


# ============================================
# ТРАЕКТОРИЯ И МЕТРИКИ
# ============================================

@dataclass
class TrajectoryPoint:
    t: float
    pin_tip: np.ndarray
    joints: np.ndarray      # 3 угла Delta + 3 угла 3-RRS
    penetrating: bool = False


@dataclass
class Trajectory:
    points: List[TrajectoryPoint] = field(default_factory=list)
    reference_start: Optional[np.ndarray] = None
    reference_goal: Optional[np.ndarray] = None


def collision_count(trajectory: Trajectory) -> int:
    """Число входов в проникновение (серия подряд идущих точек считается один раз)"""
    count = 0
    previous = False
    for point in trajectory.points:
        if point.penetrating and not previous:
            count += 1
        previous = point.penetrating
    return count


def energy_proxy(trajectory: Trajectory) -> float:
    """Σ ‖Δφ/Δt‖²·Δt по активным шарнирам обоих механизмов"""
    total = 0.0
    for a, b in zip(trajectory.points, trajectory.points[1:]):
        dt = b.t - a.t
        if dt <= 0:
            continue
        rate = (b.joints - a.joints) / dt
        total += float(rate @ rate) * dt
    return total


def _segment_distance(point, start, goal):
    direction = goal - start
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return float(np.linalg.norm(point - start))
    s = min(1.0, max(0.0, float((point - start) @ direction) / length_sq))
    return float(np.linalg.norm(point - (start + s * direction)))


def rms_path_error(trajectory: Trajectory) -> float:
    """СКО отклонения кончика штыря от отрезка «старт → первое целевое отверстие»"""
    if not trajectory.points or trajectory.reference_start is None:
        return 0.0
    distances = [_segment_distance(p.pin_tip, trajectory.reference_start, trajectory.reference_goal)
                 for p in trajectory.points]
    return float(np.sqrt(np.mean(np.square(distances))))


# ============================================
# СРЕДА
# ============================================

@dataclass
class StepOutcome:
    reward: float
    state: np.ndarray
    done: bool
    violation: bool = False
    inserted: bool = False
    duplicate: bool = False
    dead_end: bool = False
    hole: Optional[int] = None

    @property
    def events(self) -> dict:
        return {
            'violation': int(self.violation),
            'insertion': int(self.inserted),
            'duplicate': int(self.duplicate),
            'dead_end': int(self.dead_end),
            'hole': self.hole,
        }


class PegInHoleEnv:
    """MDP вставки штыря с маскированием действий по кинематике"""

    def __init__(self, cfg, stage: str = 'C0', seed: Optional[int] = None, record_trace: bool = False):
        if stage not in STAGES:
            raise ValueError(f"неизвестная стадия: {stage}")
        self.delta = cfg.delta
        self.rrs = cfg.rrs
        self.task = cfg.task
        self.stage = stage
        self.record_trace = record_trace
        self.rng = np.random.default_rng(seed)

        self.hole_positions, self.hole_normals = hole_layout(self.task.dome_radius)
        self.z_home = self.rrs.z_home
        # вершина купола в исходной позе на mount_clearance ниже нижней позы Delta
        self.base_z = self.delta.z_min - self.task.mount_clearance - self.task.dome_radius - self.z_home
        self.anchor = np.array([0.0, 0.0, self.delta.z_min - self.task.mount_clearance + self.delta.pin_length])

        self.delta_k = np.zeros(3, dtype=np.int64)
        self.rrs_k = np.zeros(3, dtype=np.int64)
        self.filled = np.zeros(len(HOLE_LAYOUT), dtype=bool)
        self.target = None
        self.steps = 0
        self.done = True
        self.prev_distance = 0.0
        self.violations = 0
        self.dead_end = False
        self.trace = []
        self.trajectory = Trajectory()
        self.insertions = []
        self.last_mask = np.zeros(NUM_ACTIONS, dtype=bool)
        self._bounds = self._compute_bounds()

    # --- геометрия ---

    @property
    def active(self):
        return active_holes(self.stage, self.task.c0_holes, self.task.c0_layout)

    def set_stage(self, stage: str):
        if stage not in STAGES:
            raise ValueError(f"неизвестная стадия: {stage}")
        self.stage = stage

    def delta_pose(self, delta_k=None) -> np.ndarray:
        k = self.delta_k if delta_k is None else delta_k
        return self.anchor + self.task.delta_step * np.asarray(k, dtype=float)

    def rrs_config(self, rrs_k=None) -> RrsConfig:
        k = self.rrs_k if rrs_k is None else rrs_k
        return RrsConfig(
            roll=self.task.rot_step * float(k[0]),
            pitch=self.task.rot_step * float(k[1]),
            z=self.z_home + self.task.delta_step * float(k[2]),
        )

    def platform_center(self, c: RrsConfig) -> np.ndarray:
        return np.array([0.0, 0.0, self.base_z + c.z])

    def holes_world(self, c: Optional[RrsConfig] = None):
        """Мировые позиции и нормали всех отверстий при конфигурации c"""
        c = self.rrs_config() if c is None else c
        rot = rotation_matrix(c.roll, c.pitch)
        return self.platform_center(c) + self.hole_positions @ rot.T, self.hole_normals @ rot.T

    def pin_tip(self) -> np.ndarray:
        return delta_pin_tip(self.delta_pose(), self.delta)

    def penetrating(self, tip, c: RrsConfig) -> bool:
        """Кончик штыря внутри купола вне дисков отверстий"""
        rot = rotation_matrix(c.roll, c.pitch)
        local = rot.T @ (np.asarray(tip) - self.platform_center(c))
        radius = float(np.linalg.norm(local))
        if radius >= self.task.dome_radius or local[2] < 0:
            return False
        if radius == 0.0:
            return True
        surface = self.task.dome_radius * local / radius
        gaps = np.linalg.norm(self.hole_positions - surface, axis=1)
        return not bool(np.any(gaps <= self.task.hole_radius))

    def _delta_ok(self, delta_k) -> bool:
        pose = self.delta_pose(delta_k)
        return delta_workspace_contains(pose, self.delta) and delta_inverse_kinematics(pose, self.delta) is not None

    def _rrs_ok(self, rrs_k) -> bool:
        return rrs_config_valid(self.rrs_config(rrs_k), self.rrs)

    def _candidate(self, action: int):
        dof, sign = ACTIONS[action]
        delta_k, rrs_k = self.delta_k.copy(), self.rrs_k.copy()
        axis = 'xyz'.find(dof) if dof in ('x', 'y', 'z') else -1
        if axis >= 0:
            delta_k[axis] += sign
        else:
            rrs_k[('roll', 'pitch', 'z_r').index(dof)] += sign
        return delta_k, rrs_k

    def action_mask(self) -> np.ndarray:
        mask = np.zeros(NUM_ACTIONS, dtype=bool)
        for action in range(NUM_ACTIONS):
            delta_k, rrs_k = self._candidate(action)
            if action < 6:
                mask[action] = self._delta_ok(delta_k)
            else:
                mask[action] = self._rrs_ok(rrs_k)
        return mask

    def valid_actions(self):
        return [int(a) for a in np.flatnonzero(self.action_mask())]

    def joint_angles(self) -> np.ndarray:
        delta_angles = delta_inverse_kinematics(self.delta_pose(), self.delta)
        rrs_angles = rrs_joint_angles(self.rrs_config(), self.rrs)
        if delta_angles is None or rrs_angles is None:
            raise ContractViolation("текущая конфигурация вне допустимого множества")
        return np.concatenate([delta_angles, rrs_angles])

    # --- состояние ---

    def _nearest_target(self, tip) -> Optional[int]:
        positions, _ = self.holes_world()
        candidates = [h for h in self.active if not self.filled[h]]
        if not candidates:
            return None
        return min(candidates, key=lambda h: float(np.linalg.norm(positions[h] - tip)))

    def distance(self) -> float:
        positions, _ = self.holes_world()
        return float(np.linalg.norm(positions[self.target] - self.pin_tip()))

    def state(self) -> np.ndarray:
        c = self.rrs_config()
        positions, normals = self.holes_world(c)
        tip = self.pin_tip()
        return np.concatenate([
            self.delta_pose(),
            [c.roll, c.pitch, c.z],
            positions[self.target] - tip,
            normals[self.target],
        ])

    def check_consistency(self, state):
        positions, normals = self.holes_world()
        expected = positions[self.target] - self.pin_tip()
        if np.max(np.abs(state[6:9] - expected)) > CONSISTENCY_TOL:
            raise ContractViolation("e_rel не совпадает с h_target − p_pin")
        if abs(np.linalg.norm(state[9:12]) - 1.0) > 1e-9:
            raise ContractViolation("нормаль цели не единичная")

    def _compute_bounds(self):
        d, task = self.delta, self.task
        r = d.r_max
        hole_z_lo = self.base_z + self.rrs.h_min - task.dome_radius
        hole_z_hi = self.base_z + self.rrs.h_max + task.dome_radius
        pin_z_lo, pin_z_hi = d.z_min - d.pin_length, d.z_max - d.pin_length
        reach = task.dome_radius + r
        lo = np.array([-r, -r, d.z_min, -TILT_LIMIT, -TILT_LIMIT, self.rrs.h_min,
                       -reach, -reach, hole_z_lo - pin_z_hi, -1.0, -1.0, -1.0])
        hi = np.array([r, r, d.z_max, TILT_LIMIT, TILT_LIMIT, self.rrs.h_max,
                       reach, reach, hole_z_hi - pin_z_lo, 1.0, 1.0, 1.0])
        return lo, hi

    def state_bounds(self):
        return self._bounds

    def normalize_state(self, state) -> np.ndarray:
        """Min-max масштабирование каждого компонента в [0, 1] по границам рабочих зон"""
        lo, hi = self._bounds
        return (np.asarray(state, dtype=float) - lo) / (hi - lo)

    # --- эпизод ---

    def _lattice_range(self):
        step = self.task.delta_step
        kr = int(math.floor(self.delta.r_max / step + 1e-9))
        kz_lo = int(math.ceil((self.delta.z_min - self.anchor[2]) / step - 1e-9))
        kz_hi = int(math.floor((self.delta.z_max - self.anchor[2]) / step + 1e-9))
        return kr, kz_lo, kz_hi

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Случайная допустимая поза Delta на решётке, 3-RRS в исходной позе"""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.filled[:] = False
        self.rrs_k = np.zeros(3, dtype=np.int64)
        self.steps = 0
        self.violations = 0
        self.dead_end = False
        self.trace = []
        self.insertions = []

        kr, kz_lo, kz_hi = self._lattice_range()
        c = self.rrs_config()
        positions, normals = self.holes_world(c)
        for _ in range(RESET_TRIES):
            k = np.array([
                self.rng.integers(-kr, kr + 1),
                self.rng.integers(-kr, kr + 1),
                self.rng.integers(kz_lo, kz_hi + 1),
            ], dtype=np.int64)
            if not self._delta_ok(k):
                continue
            tip = delta_pin_tip(self.delta_pose(k), self.delta)
            if self.penetrating(tip, c):
                continue
            if any(insertion_check(tip, positions[h], normals[h], PIN_AXIS,
                                   self.task.pos_tol, self.task.angle_tol_deg) for h in self.active):
                continue
            self.delta_k = k
            break
        else:
            raise ContractViolation(f"не найдена допустимая начальная поза за {RESET_TRIES} попыток")

        tip = self.pin_tip()
        self.target = self._nearest_target(tip)
        self.prev_distance = self.distance()
        self.done = False
        self.last_mask = self.action_mask()
        self.trajectory = Trajectory(
            points=[TrajectoryPoint(0.0, tip, self.joint_angles(), False)],
            reference_start=tip.copy(),
            reference_goal=positions[self.target].copy(),
        )
        state = self.state()
        self.check_consistency(state)
        return state

    def _insertion_event(self):
        """Индекс активного отверстия, в которое сейчас вставлен штырь"""
        positions, normals = self.holes_world()
        tip = self.pin_tip()
        for h in self.active:
            if insertion_check(tip, positions[h], normals[h], PIN_AXIS,
                               self.task.pos_tol, self.task.angle_tol_deg):
                return h
        return None

    def step(self, action: int) -> StepOutcome:
        if self.done:
            raise ContractViolation("step() после завершения эпизода")
        if not 0 <= action < NUM_ACTIONS:
            raise ContractViolation(f"недопустимый ActionId: {action}")
        t = self.steps * self.task.dt

        delta_k, rrs_k = self._candidate(action)
        ok = self._delta_ok(delta_k) if action < 6 else self._rrs_ok(rrs_k)
        violation = not ok
        inserted = duplicate = False
        hole = None
        if ok:
            self.delta_k, self.rrs_k = delta_k, rrs_k
            hole = self._insertion_event()
            if hole is not None:
                if self.filled[hole]:
                    duplicate = True
                else:
                    inserted = True
                    self.filled[hole] = True
                    self.insertions.append((t, hole, self.alignment_error(hole)))
        else:
            self.violations += 1
            logger.debug("Нарушение на шаге %d: действие %s", self.steps, ACTION_NAMES[action])
        self.steps += 1

        holes_filled = int(sum(self.filled[h] for h in self.active))
        distance = self.distance()
        distance_change = self.prev_distance - distance
        reward = compute_reward(violation, inserted, duplicate, holes_filled, t, distance,
                                distance_change, self.task.task_time)
        self.prev_distance = distance

        completed = holes_filled == len(self.active)
        if inserted and not completed:
            self.target = self._nearest_target(self.pin_tip())
            self.prev_distance = self.distance()

        dead_end = False
        mask = self.action_mask()
        if not mask.any() and not completed and not inserted:
            dead_end = True
            if not violation:
                self.violations += 1
            violation, duplicate = True, False
            reward = -3.0
            logger.warning("⚠️ Тупик: нет допустимых действий, эпизод завершён на шаге %d", self.steps)
        self.dead_end = dead_end
        self.last_mask = mask
        self.done = completed or dead_end or not mask.any() or self.steps >= self.task.max_steps

        state = self.state()
        self.check_consistency(state)
        c = self.rrs_config()
        tip = self.pin_tip()
        self.trajectory.points.append(
            TrajectoryPoint(self.steps * self.task.dt, tip, self.joint_angles(), self.penetrating(tip, c))
        )
        outcome = StepOutcome(reward, state, self.done, violation, inserted, duplicate, dead_end, hole)
        if self.record_trace:
            self.trace.append({
                't': t,
                'state': state.tolist(),
                'action': int(action),
                'reward': reward,
                'events': outcome.events,
            })
        return outcome

    def alignment_error(self, hole: int) -> float:
        _, normals = self.holes_world()
        return alignment_error_deg(PIN_AXIS, normals[hole])

    @property
    def holes_filled(self) -> int:
        return int(sum(self.filled[h] for h in self.active))
