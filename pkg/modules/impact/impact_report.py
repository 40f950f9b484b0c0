"""
Archivos de reporte de impacto
JSON {domain_id, method, d, scores[], num_samples} y curvas ordenadas en CSV
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, List

from ..errores import ConfigurationError
from .impact_scorer import ImpactScores

logger = logging.getLogger(__name__)


def save_impact_report(path, scores: ImpactScores) -> str:
    """Guarda un reporte de impacto como JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scores.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    return str(path)


def load_impact_report(path) -> ImpactScores:
    """Lee un reporte de impacto; admite un objeto o una lista con un objeto por dominio"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"No existe el reporte de impacto: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: JSON inválido (línea {e.lineno}, columna {e.colno})") from e
    return ImpactScores.from_dict(doc)


def load_impact_reports(paths) -> Dict[int, ImpactScores]:
    """Varios reportes indexados por domain_id"""
    salida = {}
    for p in paths:
        s = load_impact_report(p)
        salida[s.domain_id] = s
    return salida


def write_sorted_scores_csv(path, scores: ImpactScores) -> str:
    """Curva de impactos ordenados de mayor a menor: (rank, neuron, score)"""
    orden = sorted(range(scores.d), key=lambda i: (-scores.scores[i], i))
    filas = [{'rank': k, 'neuron': i, 'score': repr(float(scores.scores[i]))} for k, i in enumerate(orden)]
    return write_rows_csv(path, filas, ['rank', 'neuron', 'score'])


def write_rows_csv(path, filas: List[dict], columnas: List[str]) -> str:
    """Escribe filas de diccionarios como CSV con columnas fijas"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=columnas, extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for fila in filas:
            writer.writerow(fila)
    logger.debug(f"CSV escrito: {path} ({len(filas)} filas)")
    return str(path)
