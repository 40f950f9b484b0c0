"""
Descenso por gradiente estocástico con momento
v ← μ·v − lr·(grad + λ·param);  param ← param + v
"""
import logging
from typing import Dict, Optional

import numpy as np

from ..errores import ArgumentError, DimensionError
from .tensor import Tensor, check_finite, check_shape

logger = logging.getLogger(__name__)


def sgd_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], learning_rate: float,
             momentum: float, velocities: Optional[Dict[str, Tensor]] = None,
             weight_decay: float = 0.0) -> Dict[str, Tensor]:
    """
    Aplica un paso de SGD con momento en el lugar

    Args:
        params: Parámetros por nombre (se modifican en el lugar)
        grads: Gradientes por nombre; los nombres ausentes no se actualizan
        learning_rate: Tasa de aprendizaje (> 0)
        momentum: Momento en [0, 1)
        velocities: Estado de velocidades (se modifica en el lugar)
        weight_decay: Penalización L2 opcional

    Returns:
        Los parámetros actualizados (el mismo diccionario)
    """
    if not learning_rate > 0.0:
        raise ArgumentError(f"learning_rate debe ser > 0, recibió {learning_rate}")
    if not 0.0 <= momentum < 1.0:
        raise ArgumentError(f"momentum debe estar en [0, 1), recibió {momentum}")
    velocities = {} if velocities is None else velocities

    # Validar todo antes de tocar ningún parámetro
    for nombre, grad in grads.items():
        if nombre not in params:
            raise DimensionError(f"Gradiente sin parámetro: {nombre}")
        check_shape(grad, params[nombre].shape, nombre)
        check_finite(grad, nombre)

    for nombre, grad in grads.items():
        param = params[nombre]
        if weight_decay:
            grad = grad + weight_decay * param
        v = velocities.get(nombre)
        if v is None:
            v = np.zeros_like(param)
        v = momentum * v - learning_rate * grad
        velocities[nombre] = v
        param += v
    return params


class SGDMomentum:
    """Optimizador con estado de velocidades por parámetro"""

    def __init__(self, params: Dict[str, Tensor], momentum: float = 0.9, weight_decay: float = 0.0):
        """
        Inicializa el optimizador

        Args:
            params: Parámetros a optimizar (referencias a los arreglos del modelo)
            momentum: Momento
            weight_decay: Penalización L2
        """
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: Dict[str, Tensor] = {}

    def step(self, grads: Dict[str, Tensor], learning_rate: float) -> None:
        sgd_step(self.params, grads, learning_rate, self.momentum, self.velocities, self.weight_decay)
