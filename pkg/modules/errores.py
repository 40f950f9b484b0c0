"""
Excepciones del laboratorio DGD
Cada error de dominio hereda de DGDLabError para que la CLI pueda
traducirlo a un código de salida estable
"""
from typing import Iterable, List, Optional


class DGDLabError(Exception):
    """Raíz de todos los errores del laboratorio"""


class DimensionError(DGDLabError, ValueError):
    """Formas de tensores incompatibles"""


class ArgumentError(DGDLabError, ValueError):
    """Argumento fuera del rango permitido"""


class ConfigurationError(DGDLabError, ValueError):
    """Configuración inválida; conserva la lista de problemas por campo"""

    def __init__(self, mensaje: str, errores: Optional[Iterable[str]] = None):
        self.errores: List[str] = list(errores or [])
        if self.errores:
            mensaje = mensaje + "\n  - " + "\n  - ".join(self.errores)
        super().__init__(mensaje)


class ProtocolError(DGDLabError, ValueError):
    """Violación del protocolo probe/gallery"""

    def __init__(self, mensaje: str, identidad=None):
        self.identidad = identidad
        super().__init__(mensaje)


class TrainingError(DGDLabError, RuntimeError):
    """Divergencia o gradiente no finito durante el entrenamiento"""

    def __init__(self, mensaje: str, tensor: Optional[str] = None, diagnostico: Optional[dict] = None):
        self.tensor = tensor
        self.diagnostico = diagnostico or {}
        super().__init__(mensaje)
