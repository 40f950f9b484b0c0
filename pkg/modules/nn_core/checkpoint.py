"""
Checkpoints del modelo
Documento JSON autodescriptivo con formas y arreglos planos, versión "dgd-lab.v1"
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errores import ConfigurationError
from .model import ClassifierHead, DenseLayer, EncoderModel

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "dgd-lab.v1"


def _plano(arr: np.ndarray) -> list:
    return [float(v) for v in np.ravel(arr)]


def checkpoint_to_dict(model: EncoderModel, heads: Dict[str, ClassifierHead],
                       metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Serializa codificador y cabezas a un diccionario JSON-compatible"""
    return {
        'version': CHECKPOINT_VERSION,
        'metadata': metadata or {},
        'encoder': {
            'feature_dim': model.feature_dim,
            'layers': [
                {
                    'shape': list(layer.weights.shape),
                    'activation': layer.activation,
                    'weights': _plano(layer.weights),
                    'bias': _plano(layer.bias),
                }
                for layer in model.layers
            ],
        },
        'heads': {
            str(nombre): {
                'shape': list(head.weights.shape),
                'weights': _plano(head.weights),
                'bias': _plano(head.bias),
            }
            for nombre, head in heads.items()
        },
    }


def checkpoint_from_dict(doc: Dict[str, Any]) -> Tuple[EncoderModel, Dict[str, ClassifierHead], Dict[str, Any]]:
    """Reconstruye codificador y cabezas; valida la versión y las formas"""
    if doc.get('version') != CHECKPOINT_VERSION:
        raise ConfigurationError(f"Versión de checkpoint no soportada: {doc.get('version')!r}")
    try:
        layers = []
        for capa in doc['encoder']['layers']:
            forma = tuple(capa['shape'])
            layers.append(DenseLayer(np.array(capa['weights'], dtype=np.float64).reshape(forma),
                                     np.array(capa['bias'], dtype=np.float64),
                                     capa['activation']))
        heads = {}
        for nombre, cabeza in doc.get('heads', {}).items():
            forma = tuple(cabeza['shape'])
            heads[nombre] = ClassifierHead(np.array(cabeza['weights'], dtype=np.float64).reshape(forma),
                                           np.array(cabeza['bias'], dtype=np.float64))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigurationError(f"Checkpoint malformado: {e}") from e
    return EncoderModel(layers), heads, doc.get('metadata', {})


def save_checkpoint(path, model: EncoderModel, heads: Dict[str, ClassifierHead],
                    metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Guarda un checkpoint; la salida es estable byte a byte

    Args:
        path: Ruta del archivo JSON
        model: Codificador
        heads: Cabezas por nombre
        metadata: Información adicional (etapa, semilla, ...)

    Returns:
        Ruta escrita
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(checkpoint_to_dict(model, heads, metadata), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.debug(f"Checkpoint guardado: {path}")
    return str(path)


def load_checkpoint(path) -> Tuple[EncoderModel, Dict[str, ClassifierHead], Dict[str, Any]]:
    """Carga un checkpoint guardado con save_checkpoint"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"El checkpoint no existe: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Checkpoint con JSON inválido (línea {e.lineno}, columna {e.colno})") from e
    return checkpoint_from_dict(doc)
