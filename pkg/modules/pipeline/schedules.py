"""
Políticas de tasa de aprendizaje
Decaimiento escalonado del entrenamiento desde cero y decaimiento polinómico
de las etapas reanudadas
"""
from dataclasses import dataclass

from ..errores import ArgumentError


def lr_step_decay(epoch: int, init: float = 0.1, factor: float = 0.96,
                  every_epochs: int = 4, floor: float = 0.0005) -> float:
    """lr = max(floor, init · factor^⌊epoch/every_epochs⌋)"""
    if epoch < 0:
        raise ArgumentError(f"epoch debe ser >= 0, recibió {epoch}")
    return max(floor, init * factor ** (epoch // every_epochs))


def lr_poly_decay(iteration: int, max_iter: int, base: float = 0.01, power: float = 0.5) -> float:
    """lr = base · (1 − iter/max_iter)^power"""
    if max_iter <= 0:
        raise ArgumentError(f"max_iter debe ser > 0, recibió {max_iter}")
    if not 0 <= iteration <= max_iter:
        raise ArgumentError(f"iter debe estar en [0, {max_iter}], recibió {iteration}")
    return base * (1.0 - iteration / max_iter) ** power


@dataclass
class StepDecay:
    init: float = 0.1
    factor: float = 0.96
    every_epochs: int = 4
    floor: float = 0.0005
    kind: str = 'step'

    def lr(self, epoch: int, iteration: int, total_iterations: int) -> float:
        return lr_step_decay(epoch, self.init, self.factor, self.every_epochs, self.floor)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'init': self.init, 'factor': self.factor,
                'every_epochs': self.every_epochs, 'floor': self.floor}


@dataclass
class PolyDecay:
    base: float = 0.01
    power: float = 0.5
    epochs: int = 10
    kind: str = 'poly'

    def lr(self, epoch: int, iteration: int, total_iterations: int) -> float:
        return lr_poly_decay(iteration, total_iterations, self.base, self.power)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'base': self.base, 'power': self.power, 'epochs': self.epochs}


def schedule_from_config(cfg: dict):
    """Construye StepDecay o PolyDecay desde {"kind": "step"|"poly", ...}"""
    cfg = dict(cfg or {})
    kind = cfg.pop('kind', 'step')
    if kind == 'step':
        return StepDecay(**cfg)
    if kind == 'poly':
        return PolyDecay(**cfg)
    raise ArgumentError(f"Política de tasa de aprendizaje desconocida: {kind}")
