#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Аналитическая кинематика Delta-робота и платформы 3-RRS.

Все функции чистые: никакого общего изменяемого состояния, их можно
вызывать из любого числа процессов. Отсутствие решения обратной задачи
возвращается как None, а не исключением: это нормальный ответ для
маскирования действий.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Азимуты плеч (Delta) и ног (3-RRS), рад
LIMB_AZIMUTHS = np.radians([0.0, 120.0, 240.0])

# Предел наклона платформы 3-RRS по каждой оси
TILT_LIMIT = math.pi / 4

# Шаг центральных разностей для якобиана
JACOBIAN_STEP = 1e-6

# Допуск на границах множеств (учитывает округление 0.3 + 0.6 и т.п.)
BOUNDARY_TOL = 1e-12


class InvalidConfiguration(ValueError):
    """Конфигурация (или её возмущение) вне допустимого множества"""


@dataclass(frozen=True)
class DeltaParams:
    """Геометрия Delta-робота, метры"""

    active_rod_len: float = 0.3
    passive_rod_len: float = 0.6
    base_radius: float = 0.15
    platform_radius: float = 0.05
    pin_length: float = 0.1

    def __post_init__(self):
        for name in ('active_rod_len', 'passive_rod_len', 'base_radius', 'platform_radius'):
            if not getattr(self, name) > 0:
                raise ValueError(f"delta.{name} должен быть > 0")
        if self.pin_length < 0:
            raise ValueError("delta.pin_length не может быть отрицательным")
        if not self.passive_rod_len > self.base_radius - self.platform_radius:
            raise ValueError("delta.passive_rod_len слишком короткий: поза строго вниз недостижима")

    @property
    def r_max(self) -> float:
        return 0.8 * min(self.active_rod_len, self.passive_rod_len)

    @property
    def z_min(self) -> float:
        return -(self.active_rod_len + self.passive_rod_len)

    @property
    def z_max(self) -> float:
        return -(self.active_rod_len - self.passive_rod_len)


@dataclass(frozen=True)
class RrsGeometry:
    """Геометрия 3-RRS, метры. Азимуты ног фиксированы: 0°, 120°, 240°."""

    base_radius: float = 0.20
    platform_radius: float = 0.12
    proximal_len: float = 0.16
    distal_len: float = 0.22
    h_min: float = 0.10
    h_max: float = 0.30

    def __post_init__(self):
        if not self.platform_radius > 0:
            raise ValueError("rrs.platform_radius должен быть > 0")
        if not self.base_radius > self.platform_radius:
            raise ValueError("rrs.base_radius должен быть больше rrs.platform_radius")
        if not (self.proximal_len > 0 and self.distal_len > 0):
            raise ValueError("длины звеньев 3-RRS должны быть > 0")
        if not self.h_min < self.h_max:
            raise ValueError("rrs.h_min должен быть меньше rrs.h_max")

    @property
    def z_home(self) -> float:
        return 0.5 * (self.h_min + self.h_max)


@dataclass(frozen=True)
class RrsConfig:
    roll: float
    pitch: float
    z: float


def rrs_home(g: RrsGeometry) -> RrsConfig:
    """Исходная поза: без наклона, на средней высоте"""
    return RrsConfig(0.0, 0.0, g.z_home)


def _radial(azimuth):
    return np.array([math.cos(azimuth), math.sin(azimuth), 0.0])


def _tangential(azimuth):
    return np.array([-math.sin(azimuth), math.cos(azimuth), 0.0])


# ============================================
# DELTA
# ============================================

def delta_workspace_contains(p, g: DeltaParams) -> bool:
    """Принадлежность позы консервативному рабочему пространству Delta"""
    x, y, z = (float(v) for v in p)
    if not (g.z_min - BOUNDARY_TOL <= z <= g.z_max + BOUNDARY_TOL):
        return False
    return math.hypot(x, y) <= g.r_max + BOUNDARY_TOL


def delta_inverse_kinematics(p, g: DeltaParams) -> Optional[np.ndarray]:
    """
    Обратная задача Delta: углы трёх активных рычагов (elbow-out).

    Для каждого плеча пассивная тяга проецируется в вертикальную плоскость
    рычага, после чего ищется пересечение двух окружностей. None, если
    дискриминант отрицателен хотя бы для одного плеча или угол выходит
    за диапазон [0, π].
    """
    p = np.asarray(p, dtype=float)
    la, lp = g.active_rod_len, g.passive_rod_len
    angles = np.empty(3)
    for i, azimuth in enumerate(LIMB_AZIMUTHS):
        u = _radial(azimuth)
        rel = p + g.platform_radius * u - g.base_radius * u
        rho = float(rel @ u)
        tau = float(rel @ _tangential(azimuth))
        h = float(rel[2])
        in_plane_sq = lp * lp - tau * tau
        if in_plane_sq < 0:
            return None
        m = math.hypot(rho, h)
        if m == 0.0:
            return None
        k = (la * la + rho * rho + h * h - in_plane_sq) / (2.0 * la)
        if abs(k) > m:
            return None
        psi = math.atan2(h, rho)
        spread = math.acos(k / m)
        # колено наружу: корень с большим cos(φ)
        phi = max(-psi + spread, -psi - spread, key=math.cos)
        phi = math.atan2(math.sin(phi), math.cos(phi))
        if not (-BOUNDARY_TOL <= phi <= math.pi + BOUNDARY_TOL):
            return None
        angles[i] = phi
    return angles


def delta_elbows(phi, g: DeltaParams) -> np.ndarray:
    """Точки локтей A_i(φ), форма (3, 3)"""
    elbows = np.empty((3, 3))
    for i, azimuth in enumerate(LIMB_AZIMUTHS):
        u = _radial(azimuth)
        elbows[i] = g.base_radius * u + g.active_rod_len * (
            math.cos(phi[i]) * u - math.sin(phi[i]) * np.array([0.0, 0.0, 1.0])
        )
    return elbows


def delta_attachments(p, g: DeltaParams) -> np.ndarray:
    """Точки крепления тяг на подвижной платформе P_i(p)"""
    p = np.asarray(p, dtype=float)
    return np.array([p + g.platform_radius * _radial(az) for az in LIMB_AZIMUTHS])


def delta_closure_residuals(phi, p, g: DeltaParams) -> np.ndarray:
    """‖A_i(φ) − P_i(p)‖ − l_p для каждого плеча"""
    gaps = delta_elbows(phi, g) - delta_attachments(p, g)
    return np.linalg.norm(gaps, axis=1) - g.passive_rod_len


def delta_forward_kinematics(phi, g: DeltaParams) -> Optional[np.ndarray]:
    """Прямая задача: пересечение трёх сфер, нижняя ветвь"""
    centers = delta_elbows(phi, g) - np.array([g.platform_radius * _radial(az) for az in LIMB_AZIMUTHS])
    c1, c2, c3 = centers
    r = g.passive_rod_len

    d = np.linalg.norm(c2 - c1)
    if d == 0.0:
        return None
    ex = (c2 - c1) / d
    i = ex @ (c3 - c1)
    ey = c3 - c1 - i * ex
    ey_norm = np.linalg.norm(ey)
    if ey_norm == 0.0:
        return None
    ey /= ey_norm
    ez = np.cross(ex, ey)
    j = ey @ (c3 - c1)

    x = d / 2.0
    y = (i * i + j * j - 2.0 * i * x) / (2.0 * j)
    z_sq = r * r - x * x - y * y
    if z_sq < 0:
        return None
    base = c1 + x * ex + y * ey
    first = base + math.sqrt(z_sq) * ez
    second = base - math.sqrt(z_sq) * ez
    return first if first[2] < second[2] else second


def delta_pin_tip(p, g: DeltaParams) -> np.ndarray:
    return np.asarray(p, dtype=float) + np.array([0.0, 0.0, -g.pin_length])


# ============================================
# 3-RRS
# ============================================

def rotation_matrix(roll: float, pitch: float) -> np.ndarray:
    """R_x(roll) · R_y(pitch)"""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    return rx @ ry


def rrs_base_joints(g: RrsGeometry) -> np.ndarray:
    return np.array([g.base_radius * _radial(az) for az in LIMB_AZIMUTHS])


def _platform_points_grid(roll, pitch, z, g: RrsGeometry) -> np.ndarray:
    """B_i для массивов (roll, pitch, z); результат формы S + (3, 3)"""
    roll, pitch, z = np.broadcast_arrays(
        np.asarray(roll, dtype=float), np.asarray(pitch, dtype=float), np.asarray(z, dtype=float)
    )
    cb = np.cos(LIMB_AZIMUTHS)
    sb = np.sin(LIMB_AZIMUTHS)
    cr, sr = np.cos(roll)[..., None], np.sin(roll)[..., None]
    cp, sp = np.cos(pitch)[..., None], np.sin(pitch)[..., None]
    rp = g.platform_radius
    bx = rp * cb * cp
    by = rp * (sb * cr + cb * sp * sr)
    bz = z[..., None] + rp * (sb * sr - cb * sp * cr)
    return np.stack([bx, by, bz], axis=-1)


def rrs_platform_points(c: RrsConfig, g: RrsGeometry) -> np.ndarray:
    return _platform_points_grid(c.roll, c.pitch, c.z, g)


def _limb_distances(roll, pitch, z, g: RrsGeometry):
    rel = _platform_points_grid(roll, pitch, z, g) - rrs_base_joints(g)
    return rel, np.linalg.norm(rel, axis=-1)


def _limbs_close(dist, g: RrsGeometry):
    low = abs(g.proximal_len - g.distal_len) - BOUNDARY_TOL
    high = g.proximal_len + g.distal_len + BOUNDARY_TOL
    return (dist >= low) & (dist <= high)


def _in_box(roll, pitch, z, g: RrsGeometry):
    roll, pitch, z = np.asarray(roll), np.asarray(pitch), np.asarray(z)
    return (
        (np.abs(roll) <= TILT_LIMIT + BOUNDARY_TOL)
        & (np.abs(pitch) <= TILT_LIMIT + BOUNDARY_TOL)
        & (z >= g.h_min - BOUNDARY_TOL)
        & (z <= g.h_max + BOUNDARY_TOL)
    )


def rrs_valid_grid(roll, pitch, z, g: RrsGeometry) -> np.ndarray:
    """Векторная проверка допустимости: границы W_RRS и замыкание всех ног"""
    _, dist = _limb_distances(roll, pitch, z, g)
    return _in_box(roll, pitch, z, g) & np.all(_limbs_close(dist, g), axis=-1)


def rrs_config_valid(c: RrsConfig, g: RrsGeometry) -> bool:
    return bool(rrs_valid_grid(c.roll, c.pitch, c.z, g))


def rrs_joint_angles_grid(roll, pitch, z, g: RrsGeometry) -> np.ndarray:
    """
    Углы активных шарниров для массивов конфигураций, форма S + (3,).

    Угол отсчитывается от внешней горизонтали вверх. Треугольник
    (J_i, локоть, B_i) решается в вертикальной плоскости через J_i и B_i,
    колено наружу. NaN там, где треугольник не замыкается.
    """
    rel, dist = _limb_distances(roll, pitch, z, g)
    l1, l2 = g.proximal_len, g.distal_len
    horizontal = np.hypot(rel[..., 0], rel[..., 1])
    gamma = np.arctan2(rel[..., 2], horizontal)
    with np.errstate(divide='ignore', invalid='ignore'):
        cos_alpha = (l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist)
    alpha = np.arccos(np.clip(cos_alpha, -1.0, 1.0))
    angles = math.pi - (gamma + alpha)
    return np.where(_limbs_close(dist, g) & (dist > 0), angles, np.nan)


def rrs_limb_joint_angle(i: int, c: RrsConfig, g: RrsGeometry) -> Optional[float]:
    angle = float(rrs_joint_angles_grid(c.roll, c.pitch, c.z, g)[i])
    return None if math.isnan(angle) else angle


def rrs_joint_angles(c: RrsConfig, g: RrsGeometry) -> Optional[np.ndarray]:
    angles = rrs_joint_angles_grid(c.roll, c.pitch, c.z, g)
    return None if np.isnan(angles).any() else angles


def rrs_elbow(i: int, theta: float, c: RrsConfig, g: RrsGeometry) -> np.ndarray:
    """Точка локтя ноги i при угле theta (для проверки замыкания)"""
    joint = rrs_base_joints(g)[i]
    rel = rrs_platform_points(c, g)[i] - joint
    horizontal = rel.copy()
    horizontal[2] = 0.0
    norm = np.linalg.norm(horizontal)
    outward = -horizontal / norm if norm > 0 else _radial(LIMB_AZIMUTHS[i])
    return joint + g.proximal_len * (math.cos(theta) * outward + math.sin(theta) * np.array([0.0, 0.0, 1.0]))


def rrs_jacobian_grid(roll, pitch, z, g: RrsGeometry, h: float = JACOBIAN_STEP):
    """
    Якобиан центральными разностями для массивов конфигураций.

    Возвращает (J, ok): J формы S + (3, 3) (строки - ноги, столбцы -
    roll, pitch, z), ok - маска ячеек, где сама конфигурация и все шесть
    возмущений допустимы. В остальных ячейках J заполнен NaN.
    """
    roll, pitch, z = np.broadcast_arrays(
        np.asarray(roll, dtype=float), np.asarray(pitch, dtype=float), np.asarray(z, dtype=float)
    )
    ok = rrs_valid_grid(roll, pitch, z, g)
    columns = []
    for axis in range(3):
        shift = [np.zeros_like(roll), np.zeros_like(roll), np.zeros_like(roll)]
        shift[axis] = np.full_like(roll, h)
        plus = (roll + shift[0], pitch + shift[1], z + shift[2])
        minus = (roll - shift[0], pitch - shift[1], z - shift[2])
        ok &= rrs_valid_grid(*plus, g) & rrs_valid_grid(*minus, g)
        columns.append((rrs_joint_angles_grid(*plus, g) - rrs_joint_angles_grid(*minus, g)) / (2.0 * h))
    jac = np.stack(columns, axis=-1)
    jac[~ok] = np.nan
    return jac, ok


def rrs_jacobian(c: RrsConfig, g: RrsGeometry, h: float = JACOBIAN_STEP) -> np.ndarray:
    jac, ok = rrs_jacobian_grid(c.roll, c.pitch, c.z, g, h)
    if not bool(ok):
        raise InvalidConfiguration(
            f"якобиан не определён в ({c.roll:.4f}, {c.pitch:.4f}, {c.z:.4f}): граница допустимого множества"
        )
    return jac


def joint_trajectory(configs: Sequence[RrsConfig], g: RrsGeometry) -> np.ndarray:
    """Углы активных шарниров вдоль последовательности конфигураций (N, 3)"""
    roll = np.array([c.roll for c in configs])
    pitch = np.array([c.pitch for c in configs])
    z = np.array([c.z for c in configs])
    return rrs_joint_angles_grid(roll, pitch, z, g)


# ============================================
# СИНГУЛЯРНЫЕ ЧИСЛА
# ============================================

def singular_values(m) -> np.ndarray:
    """
    Сингулярные числа 3×3 (или стека) через собственные значения mᵀm,
    по убыванию.
    """
    m = np.asarray(m, dtype=float)
    gram = np.swapaxes(m, -1, -2) @ m
    eigen = np.linalg.eigvalsh(gram)
    return np.sqrt(np.clip(eigen, 0.0, None))[..., ::-1]


def min_singular_value(m) -> float:
    return float(singular_values(m)[..., -1])


def condition_number(m) -> float:
    sigma = singular_values(m)
    if sigma[-1] == 0.0:
        return math.inf
    return float(sigma[0] / sigma[-1])
