"""
Diagnósticos de correlación entre vectores de impacto
"""
import logging
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import stats

from ..errores import DimensionError
from .impact_scorer import ImpactScores

logger = logging.getLogger(__name__)

# Marcador para correlaciones no definidas (varianza cero)
UNDEFINED = None


def _vector(s) -> np.ndarray:
    return s.scores if isinstance(s, ImpactScores) else np.asarray(s, dtype=np.float64)


def _correlaciones(a: np.ndarray, b: np.ndarray) -> Dict[str, Optional[float]]:
    if a.shape != b.shape:
        raise DimensionError(f"Vectores de impacto de distinta longitud: {a.shape} vs {b.shape}")
    if a.size < 2 or np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return {'pearson': UNDEFINED, 'spearman': UNDEFINED}
    pearson = float(stats.pearsonr(a, b)[0])
    spearman = float(stats.spearmanr(a, b)[0])
    return {
        'pearson': pearson if np.isfinite(pearson) else UNDEFINED,
        'spearman': spearman if np.isfinite(spearman) else UNDEFINED,
    }


def sorted_curve(scores_a, scores_b) -> List[Dict[str, float]]:
    """Neuronas ordenadas por impacto en A, con su impacto en B"""
    a, b = _vector(scores_a), _vector(scores_b)
    orden = np.argsort(a, kind='stable')
    return [{'rank': k, 'neuron': int(i), 'score_a': float(a[i]), 'score_b': float(b[i])}
            for k, i in enumerate(orden)]


def cross_domain_correlation(scores_a: ImpactScores, scores_b: ImpactScores) -> Dict[str, Any]:
    """
    Correlación entre los impactos de dos dominios

    Args:
        scores_a: Impactos del dominio A
        scores_b: Impactos del dominio B (mismo modelo)

    Returns:
        Diccionario con 'pearson', 'spearman' (None si no está definida) y
        'curve' (neuronas ordenadas por A)
    """
    a, b = _vector(scores_a), _vector(scores_b)
    resultado = _correlaciones(a, b)
    if resultado['pearson'] is None:
        logger.warning("Correlación no definida: un vector de impacto tiene varianza cero")
    resultado['curve'] = sorted_curve(a, b)
    return resultado


def compare_methods(exact, taylor) -> Dict[str, Any]:
    """
    Calidad de la aproximación de Taylor frente al impacto exacto

    Returns:
        Diccionario con 'mae', 'max_abs_error', 'pearson', 'spearman'
    """
    a, b = _vector(exact), _vector(taylor)
    resultado = _correlaciones(a, b)
    resultado['mae'] = float(np.mean(np.abs(a - b)))
    resultado['max_abs_error'] = float(np.max(np.abs(a - b)))
    return resultado
