"""
Evaluación de recuperación
Extracción de características con la política de prueba, ranking euclídeo de la
galería y curva CMC single-shot
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..dgd import DropoutPolicy, StandardDropout, apply_test_scaling
from ..domain_data import Sample
from ..errores import ArgumentError, ConfigurationError, DimensionError, ProtocolError
from ..nn_core import EncoderModel, forward_batch

logger = logging.getLogger(__name__)

# Bloques de probes para acotar la memoria de la matriz de diferencias
BLOQUE_PROBES = 256


@dataclass
class FeatureMatrix:
    """Características por fila con su identidad"""
    data: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        self.ids = np.asarray(self.ids)
        if self.data.shape[0] != self.ids.shape[0]:
            raise DimensionError(f"{self.data.shape[0]} filas y {self.ids.shape[0]} identidades")
        if not np.all(np.isfinite(self.data)):
            raise ArgumentError("La matriz de características contiene valores no finitos")

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


@dataclass
class CMCCurve:
    """Exactitud acumulada por rango 1..K"""
    accuracies: np.ndarray
    num_probes: int

    def top(self, k: int) -> float:
        return float(self.accuracies[k - 1])

    def to_rows(self) -> List[dict]:
        return [{'rank': k + 1, 'accuracy': repr(float(a))} for k, a in enumerate(self.accuracies)]


def extract_features(model: EncoderModel, policy: Optional[DropoutPolicy], samples: Sequence[Sample],
                     normalize: bool = False) -> FeatureMatrix:
    """
    g(x) de cada muestra con la semántica de prueba de la política

    Args:
        model: Codificador
        policy: Política de dropout (None = estándar, identidad en prueba)
        samples: Muestras
        normalize: Normalizar cada fila a norma L2 unitaria

    Returns:
        FeatureMatrix con las etiquetas locales como identidades
    """
    policy = policy or StandardDropout()
    if not samples:
        return FeatureMatrix(np.zeros((0, model.feature_dim)), np.zeros(0, dtype=np.int64))
    X = np.vstack([s.features for s in samples])
    G, _ = forward_batch(model, X)
    try:
        G = apply_test_scaling(policy, G)
    except ConfigurationError as e:
        raise ConfigurationError(f"La política no corresponde al modelo: {e}") from e
    if normalize:
        normas = np.linalg.norm(G, axis=1, keepdims=True)
        G = G / np.where(normas > 0, normas, 1.0)
    return FeatureMatrix(G, np.array([s.local_label for s in samples]))


def _distancias(probes: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Distancias euclídeas por diferencias directas [P×G]"""
    salida = np.empty((probes.shape[0], gallery.shape[0]))
    for i in range(0, probes.shape[0], BLOQUE_PROBES):
        bloque = probes[i:i + BLOQUE_PROBES]
        diferencias = bloque[:, None, :] - gallery[None, :, :]
        salida[i:i + BLOQUE_PROBES] = np.sqrt(np.sum(diferencias ** 2, axis=2))
    return salida


def rank_gallery(probe: np.ndarray, gallery: FeatureMatrix) -> np.ndarray:
    """
    Índices de la galería por distancia euclídea ascendente al probe

    Los empates se resuelven por índice de galería ascendente.
    """
    if gallery.rows == 0:
        raise ArgumentError("La galería está vacía")
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (gallery.dim,):
        raise DimensionError(f"Probe con forma {probe.shape}, galería con d={gallery.dim}")
    return np.argsort(_distancias(probe[None, :], gallery.data)[0], kind='stable')


def cmc(probes: FeatureMatrix, gallery: FeatureMatrix, max_rank: int) -> CMCCurve:
    """
    Curva CMC: fracción de probes cuya identidad correcta aparece en los k primeros

    Args:
        probes: Características de los probes
        gallery: Galería single-shot (cada identidad una vez)
        max_rank: K

    Returns:
        CMCCurve con exactitudes para los rangos 1..K
    """
    if max_rank < 1:
        raise ArgumentError(f"max_rank debe ser >= 1, recibió {max_rank}")
    if gallery.rows == 0:
        raise ArgumentError("La galería está vacía")
    if probes.rows and probes.dim != gallery.dim:
        raise DimensionError(f"Probes con d={probes.dim} y galería con d={gallery.dim}")
    posicion_id = {}
    for j, identidad in enumerate(gallery.ids.tolist()):
        if identidad in posicion_id:
            raise ProtocolError(f"La identidad {identidad} aparece más de una vez en la galería", identidad)
        posicion_id[identidad] = j
    for identidad in probes.ids.tolist():
        if identidad not in posicion_id:
            raise ProtocolError(f"La identidad de probe {identidad} no está en la galería", identidad)

    if probes.rows == 0:
        return CMCCurve(np.zeros(max_rank), 0)
    distancias = _distancias(probes.data, gallery.data)
    orden = np.argsort(distancias, axis=1, kind='stable')
    correcta = np.array([posicion_id[i] for i in probes.ids.tolist()])
    rangos = np.argmax(orden == correcta[:, None], axis=1)
    aciertos = np.array([np.mean(rangos < k) for k in range(1, max_rank + 1)])
    return CMCCurve(aciertos, probes.rows)
