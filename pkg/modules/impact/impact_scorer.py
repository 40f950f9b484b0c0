"""
Puntuaciones de impacto de las neuronas de la capa de características
s_i = L(g(x) sin la neurona i) − L(g(x)), exacta o por Taylor de segundo orden
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

from ..errores import ArgumentError, DimensionError
from ..nn_core import ClassifierHead, EncoderModel, encode, forward_batch, softmax_rows
from ..nn_core.backprop import diag_hessian_rows

logger = logging.getLogger(__name__)

METHODS = ('exact', 'taylor')

# Tamaño de bloque fijo: la suma por bloques no depende del número de hilos
TAMANO_BLOQUE = 64


@dataclass
class ImpactScores:
    """Impacto medio s̄ de cada neurona sobre un dominio"""
    domain_id: int
    scores: np.ndarray
    method: str = 'taylor'
    num_samples: int = 0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.method not in METHODS:
            raise ArgumentError(f"Método de impacto desconocido: {self.method}")
        if self.scores.ndim != 1 or not np.all(np.isfinite(self.scores)):
            raise DimensionError("Las puntuaciones deben ser un vector finito")

    @property
    def d(self) -> int:
        return int(self.scores.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'domain_id': int(self.domain_id),
            'method': self.method,
            'd': self.d,
            'scores': [float(v) for v in self.scores],
            'num_samples': int(self.num_samples),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'ImpactScores':
        scores = np.array(doc['scores'], dtype=np.float64)
        if int(doc.get('d', scores.shape[0])) != scores.shape[0]:
            raise DimensionError(f"Reporte de impacto inconsistente: d={doc.get('d')} con {scores.shape[0]} puntuaciones")
        return cls(int(doc['domain_id']), scores, doc.get('method', 'taylor'), int(doc.get('num_samples', 0)))


def _comprobar(model: EncoderModel, head: ClassifierHead):
    if head.feature_dim != model.feature_dim:
        raise DimensionError(f"Cabeza con d={head.feature_dim} y codificador con d={model.feature_dim}")


def impact_exact_batch(head: ClassifierHead, G: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Impacto exacto para un lote de características ya calculadas

    Args:
        head: Cabeza softmax
        G: Características sin máscara [B×d]
        labels: Índices de clase [B]

    Returns:
        Matriz de impactos [B×d]
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits = G @ head.weights.T + head.bias                     # [B×M]
    # Fila 0: logits originales; filas 1..d: logits con g_i = 0
    variantes = logits[:, None, :] - G[:, :, None] * head.weights.T[None, :, :]
    todas = np.concatenate([logits[:, None, :], variantes], axis=1)   # [B×(d+1)×M]
    correctos = np.take_along_axis(todas, labels[:, None, None], axis=2)[..., 0]
    perdidas = logsumexp(todas, axis=2) - correctos
    return perdidas[:, 1:] - perdidas[:, :1]


def impact_taylor_batch(head: ClassifierHead, G: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Aproximación de Taylor de segundo orden para un lote

    s_i ≈ −(∂L/∂g_i)·g_i + ½·(∂²L/∂g_i²)·g_i²
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = softmax_rows(G @ head.weights.T + head.bias)
    delta = probs.copy()
    delta[np.arange(G.shape[0]), labels] -= 1.0
    grad = delta @ head.weights
    hess = diag_hessian_rows(head, probs)
    return -grad * G + 0.5 * hess * G ** 2


def impact_exact(model: EncoderModel, head: ClassifierHead, x: np.ndarray, label: int) -> np.ndarray:
    """
    Impacto exacto de cada neurona sobre una muestra

    Args:
        model: Codificador
        head: Cabeza softmax
        x: Entrada [input_dim]
        label: Índice de clase

    Returns:
        Vector s [d]
    """
    _comprobar(model, head)
    if not 0 <= int(label) < head.num_classes:
        raise ArgumentError(f"Etiqueta {label} fuera de rango [0, {head.num_classes})")
    g = encode(model, x)
    return impact_exact_batch(head, g[None, :], np.array([int(label)]))[0]


def impact_taylor(model: EncoderModel, head: ClassifierHead, x: np.ndarray, label: int) -> np.ndarray:
    """
    Impacto aproximado por Taylor con un forward y un backward

    Args:
        model: Codificador
        head: Cabeza softmax
        x: Entrada [input_dim]
        label: Índice de clase

    Returns:
        Vector s [d]
    """
    _comprobar(model, head)
    if not 0 <= int(label) < head.num_classes:
        raise ArgumentError(f"Etiqueta {label} fuera de rango [0, {head.num_classes})")
    g = encode(model, x)
    return impact_taylor_batch(head, g[None, :], np.array([int(label)]))[0]


def score_samples(model: EncoderModel, head: ClassifierHead, X: np.ndarray, labels: np.ndarray,
                  method: str = 'taylor') -> np.ndarray:
    """Matriz de impactos por muestra [N×d], sin máscara de dropout"""
    if method not in METHODS:
        raise ArgumentError(f"Método de impacto desconocido: {method}")
    _comprobar(model, head)
    G, _ = forward_batch(model, X)
    funcion = impact_exact_batch if method == 'exact' else impact_taylor_batch
    return funcion(head, G, labels)


def average_impact(model: EncoderModel, head: ClassifierHead, X: np.ndarray, labels: np.ndarray,
                   domain_id: int, method: str = 'taylor', jobs: int = 1) -> ImpactScores:
    """
    Media de las puntuaciones de impacto sobre las muestras de un dominio

    Args:
        model: Codificador
        head: Cabeza softmax
        X: Entradas del dominio [N×input_dim]
        labels: Índices de clase [N] (base 0, en el espacio de la cabeza)
        domain_id: Dominio de las muestras
        method: 'exact' o 'taylor'
        jobs: Hilos para los bloques

    Returns:
        ImpactScores del dominio
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0] if X.ndim == 2 else 0
    if n == 0:
        raise ArgumentError(f"Dominio {domain_id}: no hay muestras para calcular el impacto")
    if labels.shape != (n,):
        raise DimensionError(f"labels con forma {labels.shape}, se esperaba ({n},)")

    bloques = [slice(i, min(i + TAMANO_BLOQUE, n)) for i in range(0, n, TAMANO_BLOQUE)]
    parcial = lambda b: score_samples(model, head, X[b], labels[b], method).sum(axis=0)
    if jobs > 1 and len(bloques) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sumas = list(pool.map(parcial, bloques))
    else:
        sumas = [parcial(b) for b in bloques]

    total = np.zeros(model.feature_dim)
    for s in sumas:
        total = total + s
    logger.debug(f"Impacto ({method}) del dominio {domain_id} sobre {n} muestras")
    return ImpactScores(domain_id, total / n, method, n)


def count_nonpositive(scores) -> int:
    """Número de neuronas con impacto medio ≤ 0"""
    valores = scores.scores if isinstance(scores, ImpactScores) else np.asarray(scores)
    return int(np.sum(valores <= 0.0))
