"""
Módulo de gestión del directorio de un run
Responsable de la estructura de carpetas y de escribir informes, curvas y
checkpoints de forma determinista
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ..errores import ConfigurationError
from ..impact import write_rows_csv
from ..nn_core import ClassifierHead, EncoderModel, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


class RunManager:
    """Gestor de archivos y carpetas de un run"""

    CARACTERES_INVALIDOS = ['<', '>', ':', '"', '/', '\\', '|', '?', '*', '\n', '\r', '\t', ' ']

    def __init__(self, base_path, config: Dict[str, Any] = None):
        """
        Inicializa el gestor del run

        Args:
            base_path: Carpeta del run
            config: Configuración adicional
        """
        self.base_path = Path(base_path)
        self.config = config or {}

        self.folders = {
            'checkpoints': self.base_path / 'checkpoints',
            'reports': self.base_path / 'reports',
            'curves': self.base_path / 'curves',
            'impact': self.base_path / 'impact',
        }
        self._inicializar_estructura()

    def _inicializar_estructura(self):
        """Crea la estructura de carpetas necesaria"""
        for nombre, ruta in self.folders.items():
            ruta.mkdir(parents=True, exist_ok=True)
            logger.debug(f"Carpeta '{nombre}' creada/verificada en: {ruta}")

    def limpiar_nombre_archivo(self, nombre: str, reemplazo: str = '_') -> str:
        """Nombre de archivo seguro (sin separadores ni espacios)"""
        if not nombre:
            return "sin_nombre"
        for char in self.CARACTERES_INVALIDOS:
            nombre = nombre.replace(char, reemplazo)
        return nombre.strip(reemplazo) or "sin_nombre"

    def ruta(self, carpeta: Optional[str], nombre: str) -> Path:
        """Ruta absoluta de un archivo; carpeta None = raíz del run"""
        if carpeta is not None and carpeta not in self.folders:
            raise ConfigurationError(f"Carpeta de run desconocida: {carpeta}")
        base = self.base_path if carpeta is None else self.folders[carpeta]
        return base / self.limpiar_nombre_archivo(nombre)

    def relativa(self, ruta) -> str:
        """Ruta relativa a la raíz del run, con separador '/'"""
        return Path(ruta).relative_to(self.base_path).as_posix()

    def guardar_json(self, carpeta: Optional[str], nombre: str, datos: Any) -> str:
        """
        Escribe un JSON con claves ordenadas

        Returns:
            Ruta relativa al run
        """
        ruta = self.ruta(carpeta, nombre)
        with open(ruta, 'w', encoding='utf-8') as f:
            json.dump(datos, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        logger.debug(f"JSON guardado: {ruta}")
        return self.relativa(ruta)

    def guardar_csv(self, carpeta: Optional[str], nombre: str, filas: List[dict], columnas: List[str]) -> str:
        return self.relativa(write_rows_csv(self.ruta(carpeta, nombre), filas, columnas))

    def guardar_checkpoint(self, nombre: str, model: EncoderModel, heads: Dict[str, ClassifierHead],
                           metadata: Dict[str, Any]) -> str:
        ruta = self.ruta('checkpoints', f"{nombre}.json")
        save_checkpoint(ruta, model, heads, metadata)
        return self.relativa(ruta)

    def existe_checkpoint(self, nombre: str) -> bool:
        return self.ruta('checkpoints', f"{nombre}.json").exists()

    def cargar_checkpoint(self, nombre: str) -> Tuple[EncoderModel, Dict[str, ClassifierHead], Dict[str, Any]]:
        return load_checkpoint(self.ruta('checkpoints', f"{nombre}.json"))

    @staticmethod
    def calcular_hash(ruta, algoritmo: str = 'sha256') -> str:
        """Hash de un archivo por bloques"""
        funcion = hashlib.new(algoritmo)
        with open(ruta, 'rb') as f:
            for bloque in iter(lambda: f.read(4096), b""):
                funcion.update(bloque)
        return funcion.hexdigest()

