#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Карты особенностей 3-RRS, статистика манипулируемости, безразмерный
атлас параметров и максимизация площади рабочей зоны без особенностей
симплекс-методом Нелдера–Мида.
"""

import math
import logging
import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from kinematics import (
    RrsConfig,
    RrsGeometry,
    joint_trajectory,
    rrs_jacobian_grid,
    rrs_joint_angles_grid,
    singular_values,
)

logger = logging.getLogger(__name__)

SINGULAR_SIGMA = 1e-6
LAMBDA_SUM = 4.0


class InfeasibleDesign(ValueError):
    """Безразмерные параметры нарушают ограничения конструкции"""


# ============================================
# БЕЗРАЗМЕРНЫЕ ПАРАМЕТРЫ
# ============================================

@dataclass(frozen=True)
class DimensionlessDesign:
    l1: float
    l2: float
    l3: float
    eta: float

    @property
    def lambdas(self):
        return (self.l1, self.l2, self.l3)


def is_feasible(l1: float, l2: float, l3: float) -> bool:
    """λ₁+λ₂+λ₃ = 4, λ₃ > 0, λ₃ < λ₁, λ₁ < 2, λ₂ > 0"""
    return (abs(l1 + l2 + l3 - LAMBDA_SUM) <= 1e-12
            and l3 > 0 and l3 < l1 and l1 < 2 and l2 > 0)


def to_dimensionless(g: RrsGeometry) -> DimensionlessDesign:
    eta = (g.base_radius + 2 * g.proximal_len + g.platform_radius) / 4
    return DimensionlessDesign(g.base_radius / eta, 2 * g.proximal_len / eta, g.platform_radius / eta, eta)


def from_dimensionless(d: DimensionlessDesign, distal_ratio: float, h_min: float, h_max: float) -> RrsGeometry:
    """Обратное преобразование; L₂ = distal_ratio·η, высоты без изменений"""
    if not is_feasible(d.l1, d.l2, d.l3):
        raise InfeasibleDesign(
            f"λ = ({d.l1:.4f}, {d.l2:.4f}, {d.l3:.4f}) нарушает ограничения конструкции"
        )
    if not d.eta > 0:
        raise InfeasibleDesign("масштаб η должен быть > 0")
    return RrsGeometry(
        base_radius=d.l1 * d.eta,
        platform_radius=d.l3 * d.eta,
        proximal_len=d.l2 * d.eta / 2,
        distal_len=distal_ratio * d.eta,
        h_min=h_min,
        h_max=h_max,
    )


# ============================================
# СЕТКА И АТЛАС
# ============================================

@dataclass(frozen=True)
class OrientationGrid:
    """Сетка (roll, pitch), симметричная относительно нуля; seed=None - без дрожания"""

    range_rad: float
    step_rad: float
    z: float
    seed: Optional[int] = 0

    def __post_init__(self):
        if not self.step_rad > 0:
            raise ValueError("шаг сетки должен быть > 0")
        if not self.range_rad >= 0:
            raise ValueError("диапазон сетки не может быть отрицательным")

    @property
    def axis(self) -> np.ndarray:
        half = self.step_rad * np.arange(int(math.floor(self.range_rad / self.step_rad + 1e-9)) + 1)
        return np.concatenate([-half[:0:-1], half])

    def samples(self):
        """Узлы (roll, pitch) формы (n, n); при заданном seed - с дрожанием ±step/2"""
        roll, pitch = np.meshgrid(self.axis, self.axis, indexing='ij')
        if self.seed is not None:
            rng = np.random.default_rng(self.seed)
            jitter = rng.uniform(-self.step_rad / 2, self.step_rad / 2, size=(2,) + roll.shape)
            roll = roll + jitter[0]
            pitch = pitch + jitter[1]
        return roll, pitch


def grid_from_config(eval_cfg, g: RrsGeometry, seed: Optional[int] = 0) -> OrientationGrid:
    return OrientationGrid(math.radians(eval_cfg.atlas_range_deg), math.radians(eval_cfg.atlas_step_deg),
                           g.z_home, seed)


@dataclass
class AtlasResult:
    area: float
    min_sigma: Optional[float]
    max_roll_deg: Optional[float]
    max_pitch_deg: Optional[float]
    kappa_variation_pct: Optional[float]
    joint_min_deg: Optional[float]
    joint_max_deg: Optional[float]
    cells_in_omega: int
    total_cells: int
    roll: np.ndarray = field(repr=False)
    pitch: np.ndarray = field(repr=False)
    sigma_min: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False)
    in_omega: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            'area_rad2': self.area,
            'min_sigma': self.min_sigma,
            'max_roll_deg': self.max_roll_deg,
            'max_pitch_deg': self.max_pitch_deg,
            'kappa_variation_pct': self.kappa_variation_pct,
            'joint_min_deg': self.joint_min_deg,
            'joint_max_deg': self.joint_max_deg,
            'cells_in_omega': self.cells_in_omega,
            'total_cells': self.total_cells,
        }

    def cell_rows(self):
        """Строки CSV: θ_x, θ_y, σ_min, κ, in_Ω"""
        for i in np.ndindex(self.roll.shape):
            yield (float(self.roll[i]), float(self.pitch[i]),
                   None if np.isnan(self.sigma_min[i]) else float(self.sigma_min[i]),
                   None if np.isnan(self.kappa[i]) else float(self.kappa[i]),
                   int(self.in_omega[i]))


def _cell_metrics(g: RrsGeometry, roll, pitch, z):
    """σ_min и κ по ячейкам; NaN там, где якобиан не определён"""
    jac, ok = rrs_jacobian_grid(roll, pitch, np.full_like(roll, z), g)
    sigma_min = np.full(roll.shape, np.nan)
    kappa = np.full(roll.shape, np.nan)
    if ok.any():
        sv = singular_values(jac[ok])
        sigma_min[ok] = sv[:, -1]
        with np.errstate(divide='ignore'):
            kappa[ok] = np.where(sv[:, -1] > 0, sv[:, 0] / sv[:, -1], np.inf)
    return sigma_min, kappa, ok


def compute_atlas(g: RrsGeometry, grid: OrientationGrid, sigma_threshold: float) -> AtlasResult:
    """
    Площадь Ω = {допустимо и σ_min ≥ порога} на дрожащей сетке,
    A_w = |Ω|·step². Пустое Ω допустимо (A_w = 0).
    """
    if not sigma_threshold > 0:
        raise ValueError("порог σ_min должен быть > 0")
    roll, pitch = grid.samples()
    sigma_min, kappa, ok = _cell_metrics(g, roll, pitch, grid.z)
    omega = ok & (np.nan_to_num(sigma_min, nan=-1.0) >= sigma_threshold)
    count = int(omega.sum())

    stats = dict(min_sigma=None, max_roll_deg=None, max_pitch_deg=None, kappa_variation_pct=None,
                 joint_min_deg=None, joint_max_deg=None)
    if count:
        k = kappa[omega]
        joints = rrs_joint_angles_grid(roll[omega], pitch[omega], np.full(count, grid.z), g)
        stats = dict(
            min_sigma=float(sigma_min[omega].min()),
            max_roll_deg=float(np.degrees(np.abs(roll[omega]).max())),
            max_pitch_deg=float(np.degrees(np.abs(pitch[omega]).max())),
            kappa_variation_pct=float(100.0 * k.std() / k.mean()),
            joint_min_deg=float(np.degrees(np.nanmin(joints))),
            joint_max_deg=float(np.degrees(np.nanmax(joints))),
        )
    return AtlasResult(
        area=count * grid.step_rad ** 2,
        cells_in_omega=count,
        total_cells=int(roll.size),
        roll=roll, pitch=pitch, sigma_min=sigma_min, kappa=kappa, in_omega=omega,
        **stats,
    )


def singularity_loci(g: RrsGeometry, grid: OrientationGrid) -> np.ndarray:
    """Ячейки с σ_min < 10⁻⁶ или недопустимой конфигурацией"""
    roll, pitch = grid.samples()
    sigma_min, _, ok = _cell_metrics(g, roll, pitch, grid.z)
    return ~ok | (np.nan_to_num(sigma_min, nan=0.0) < SINGULAR_SIGMA)


STAT_FIELDS = ('area', 'min_sigma', 'max_roll_deg', 'max_pitch_deg', 'kappa_variation_pct', 'joint_range_deg')


def atlas_statistics(g: RrsGeometry, grid: OrientationGrid, sigma_threshold: float, seeds) -> dict:
    """Среднее и СКО показателей атласа по независимым сидам дрожания"""
    samples = {name: [] for name in STAT_FIELDS}
    for seed in seeds:
        result = compute_atlas(g, dataclasses.replace(grid, seed=int(seed)), sigma_threshold)
        values = result.summary()
        joint_range = None
        if result.joint_min_deg is not None:
            joint_range = result.joint_max_deg - result.joint_min_deg
        row = {'area': result.area, 'joint_range_deg': joint_range}
        for name in ('min_sigma', 'max_roll_deg', 'max_pitch_deg', 'kappa_variation_pct'):
            row[name] = values[name]
        for name in STAT_FIELDS:
            if row[name] is not None:
                samples[name].append(row[name])
    stats = {}
    for name, values in samples.items():
        stats[name] = {
            'mean': float(np.mean(values)) if values else None,
            'std': float(np.std(values)) if values else None,
        }
    return stats


def comparison_table(before: dict, after: dict) -> List[dict]:
    """Строки «до/после» оптимизации"""
    rows = []
    for name in STAT_FIELDS:
        rows.append({
            'metric': name,
            'initial_mean': before[name]['mean'],
            'initial_std': before[name]['std'],
            'optimized_mean': after[name]['mean'],
            'optimized_std': after[name]['std'],
        })
    return rows


# ============================================
# ОПТИМИЗАЦИЯ
# ============================================

@dataclass
class OptimizationResult:
    design: DimensionlessDesign
    geometry: RrsGeometry
    atlas: AtlasResult
    initial_atlas: AtlasResult
    evaluations: int
    iterations: int
    history: List[dict] = field(default_factory=list)


def optimize_design(initial: DimensionlessDesign, grid: OrientationGrid, sigma_threshold: float,
                    distal_ratio: float, h_min: float, h_max: float,
                    simplex_edge: float = 0.1, xatol: float = 1e-3, maxiter: int = 200,
                    limit_kappa: bool = True) -> OptimizationResult:
    """
    Нелдер–Мид по (λ₁, λ₂), λ₃ = 4 − λ₁ − λ₂. Недопустимые точки получают
    A_w = −1. При limit_kappa точка, где вариация κ по Ω больше, чем у
    начального дизайна, тоже недопустима: штраф −1 минус превышение, чтобы
    симплекс возвращался к границе. Сид дрожания фиксирован на весь прогон,
    поэтому целевая функция детерминирована. Возвращается лучшая из
    допустимых просмотренных точек.
    """
    if not is_feasible(*initial.lambdas):
        raise InfeasibleDesign(f"начальный дизайн недопустим: λ = {initial.lambdas}")

    initial_geometry = from_dimensionless(initial, distal_ratio, h_min, h_max)
    initial_atlas = compute_atlas(initial_geometry, grid, sigma_threshold)
    kappa_limit = math.inf
    if limit_kappa and initial_atlas.kappa_variation_pct is not None:
        kappa_limit = initial_atlas.kappa_variation_pct

    best = {'area': -math.inf, 'x': None}
    history = []

    def score(x):
        l1, l2 = float(x[0]), float(x[1])
        l3 = LAMBDA_SUM - l1 - l2
        if not is_feasible(l1, l2, l3):
            return -1.0, None, False
        g = from_dimensionless(DimensionlessDesign(l1, l2, l3, initial.eta), distal_ratio, h_min, h_max)
        atlas = compute_atlas(g, grid, sigma_threshold)
        kappa = atlas.kappa_variation_pct
        if kappa is not None and kappa > kappa_limit:
            return -1.0 - (kappa - kappa_limit) / 100.0, kappa, False
        return atlas.area, kappa, True

    def objective(x):
        value, kappa, admissible = score(x)
        history.append({'l1': float(x[0]), 'l2': float(x[1]), 'area': value if admissible else -1.0,
                        'kappa_variation_pct': kappa, 'admissible': admissible})
        if admissible and value > best['area']:
            best['area'], best['x'] = value, np.array(x, dtype=float)
            logger.debug("Нелдер–Мид: λ₁=%.4f λ₂=%.4f, A_w=%.4f", x[0], x[1], value)
        return -value

    x0 = np.array([initial.l1, initial.l2])
    simplex = np.array([x0, x0 + [simplex_edge, 0.0], x0 + [0.0, simplex_edge]])
    # первая вершина - начальный дизайн, поэтому лучший результат не хуже исходного
    objective(x0)
    result = minimize(objective, x0, method='Nelder-Mead',
                      options=dict(initial_simplex=simplex, xatol=xatol, fatol=np.inf, maxiter=maxiter))

    l1, l2 = best['x']
    design = DimensionlessDesign(l1, l2, LAMBDA_SUM - l1 - l2, initial.eta)
    geometry = from_dimensionless(design, distal_ratio, h_min, h_max)
    atlas = compute_atlas(geometry, grid, sigma_threshold)
    logger.info(
        f"✅ Оптимизация завершена: λ = ({design.l1:.4f}, {design.l2:.4f}, {design.l3:.4f}), "
        f"A_w {initial_atlas.area:.4f} → {atlas.area:.4f} рад², вариация κ "
        f"{initial_atlas.kappa_variation_pct} → {atlas.kappa_variation_pct}, вычислений {len(history)}"
    )
    return OptimizationResult(design, geometry, atlas, initial_atlas, len(history), int(result.nit), history)


def initial_design_from_config(cfg) -> tuple:
    """(начальный дизайн, distal_ratio) для масштаба η геометрии из конфига"""
    reference = to_dimensionless(cfg.rrs)
    l1, l2, l3 = cfg.eval.initial_design
    return DimensionlessDesign(l1, l2, l3, reference.eta), cfg.rrs.distal_len / reference.eta


def parameter_atlas(l1_values, l2_values, eta: float, distal_ratio: float, h_min: float, h_max: float,
                    grid: OrientationGrid, sigma_threshold: float) -> np.ndarray:
    """A_w на сетке (λ₁, λ₂); недопустимые точки отмечены −1"""
    areas = np.full((len(l1_values), len(l2_values)), -1.0)
    for i, l1 in enumerate(l1_values):
        for j, l2 in enumerate(l2_values):
            l3 = LAMBDA_SUM - l1 - l2
            if not is_feasible(l1, l2, l3):
                continue
            g = from_dimensionless(DimensionlessDesign(l1, l2, l3, eta), distal_ratio, h_min, h_max)
            areas[i, j] = compute_atlas(g, grid, sigma_threshold).area
    return areas


def manipulability_volume(g: RrsGeometry, grid: OrientationGrid, z_levels):
    """Строки (z, roll, pitch, σ_min, κ, valid) по нескольким высотам"""
    rows = []
    roll, pitch = grid.samples()
    for z in z_levels:
        sigma_min, kappa, ok = _cell_metrics(g, roll, pitch, float(z))
        for i in np.ndindex(roll.shape):
            rows.append((float(z), float(roll[i]), float(pitch[i]),
                         None if np.isnan(sigma_min[i]) else float(sigma_min[i]),
                         None if np.isnan(kappa[i]) else float(kappa[i]),
                         int(ok[i])))
    return rows


def representative_path(g: RrsGeometry, amplitude: float = 0.3, points: int = 73) -> List[RrsConfig]:
    """Круговой обход по (roll, pitch) на средней высоте"""
    angles = np.linspace(0.0, 2 * math.pi, points)
    return [RrsConfig(amplitude * math.cos(a), amplitude * math.sin(a), g.z_home) for a in angles]


def joint_path_rows(g: RrsGeometry, path: List[RrsConfig]):
    angles = np.degrees(joint_trajectory(path, g))
    for i, (c, theta) in enumerate(zip(path, angles)):
        yield (i, c.roll, c.pitch, c.z, *[None if np.isnan(v) else float(v) for v in theta])
