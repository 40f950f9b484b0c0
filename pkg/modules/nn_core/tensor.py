"""
Utilidades de tensores
El tensor del laboratorio es un numpy.ndarray float64 row-major
"""
from typing import Optional, Sequence

import numpy as np

from ..errores import DimensionError, TrainingError

Tensor = np.ndarray


def as_tensor(valores, shape: Optional[Sequence[int]] = None, nombre: str = "tensor") -> Tensor:
    """
    Convierte valores a un tensor float64 y valida su forma

    Args:
        valores: Datos convertibles a arreglo
        shape: Forma esperada (opcional)
        nombre: Nombre para los mensajes de error

    Returns:
        Arreglo float64
    """
    arr = np.asarray(valores, dtype=np.float64)
    if shape is not None:
        check_shape(arr, shape, nombre)
    return arr


def check_shape(arr: Tensor, shape: Sequence[int], nombre: str = "tensor") -> None:
    """Lanza DimensionError si la forma no coincide"""
    if tuple(arr.shape) != tuple(shape):
        raise DimensionError(f"{nombre}: forma {tuple(arr.shape)}, se esperaba {tuple(shape)}")


def check_finite(arr: Tensor, nombre: str = "tensor") -> None:
    """Lanza TrainingError si el tensor contiene NaN o Inf"""
    if not np.all(np.isfinite(arr)):
        malos = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise TrainingError(f"Valores no finitos en '{nombre}' ({malos} entradas)", tensor=nombre)
