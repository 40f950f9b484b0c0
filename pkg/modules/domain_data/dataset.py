"""
Conjunto fusionado de varios dominios y particiones
Fusión de etiquetas para el objetivo de tarea única, train/val estratificado
y protocolo probe/gallery single-shot
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errores import ArgumentError
from .generator import Sample

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MergedDataset:
    """
    Muestras de D dominios con etiquetas locales y fusionadas (1-based)

    Las muestras se guardan como arreglos paralelos; `samples` las expone como
    lista de Sample.
    """
    features: np.ndarray
    domain_ids: np.ndarray
    local_labels: np.ndarray
    merged_labels: np.ndarray
    total_classes: int
    domain_classes: Dict[int, int] = field(default_factory=dict)
    domain_offsets: Dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def domains(self) -> List[int]:
        return list(self.domain_classes.keys())

    @property
    def domain_index(self) -> Dict[int, np.ndarray]:
        """domain_id → índices de sus muestras"""
        return {d: np.flatnonzero(self.domain_ids == d) for d in self.domain_classes}

    @property
    def samples(self) -> List[Sample]:
        return [Sample(int(self.domain_ids[i]), int(self.local_labels[i]), self.features[i],
                       int(self.merged_labels[i])) for i in range(len(self))]

    def subset(self, indices: Sequence[int]) -> 'MergedDataset':
        """Subconjunto que conserva el espacio de etiquetas fusionado"""
        idx = np.asarray(indices, dtype=np.int64)
        return MergedDataset(self.features[idx], self.domain_ids[idx], self.local_labels[idx],
                             self.merged_labels[idx], self.total_classes,
                             dict(self.domain_classes), dict(self.domain_offsets))

    def domain_subset(self, domain_id: int) -> 'MergedDataset':
        if domain_id not in self.domain_classes:
            raise ArgumentError(f"Dominio desconocido: {domain_id}")
        return self.subset(np.flatnonzero(self.domain_ids == domain_id))

    def local_view(self, domain_id: int) -> 'MergedDataset':
        """Un dominio como conjunto propio: etiquetas fusionadas = locales, M = Mᵢ"""
        sub = self.domain_subset(domain_id)
        return MergedDataset(sub.features, sub.domain_ids, sub.local_labels, sub.local_labels.copy(),
                             self.domain_classes[domain_id], {domain_id: self.domain_classes[domain_id]},
                             {domain_id: 0})


def merge_single_task(domains: List[List[Sample]]) -> MergedDataset:
    """
    Fusiona dominios en un único espacio de M = Σ Mᵢ identidades

    Args:
        domains: Lista de listas de muestras, una por dominio

    Returns:
        MergedDataset con merged_label = local_label + Σ_{k<i} Mₖ
    """
    if not domains:
        raise ArgumentError("La lista de dominios está vacía")

    clases: Dict[int, int] = OrderedDict()
    offsets: Dict[int, int] = OrderedDict()
    acumulado = 0
    for muestras in domains:
        if not muestras:
            raise ArgumentError("Un dominio no tiene muestras")
        ids = {s.domain_id for s in muestras}
        if len(ids) != 1:
            raise ArgumentError(f"Una lista de dominio mezcla dominios: {sorted(ids)}")
        domain_id = ids.pop()
        if domain_id in clases:
            raise ArgumentError(f"domain_id duplicado: {domain_id}")
        etiquetas = {s.local_label for s in muestras}
        m_i = max(etiquetas)
        if etiquetas != set(range(1, m_i + 1)):
            raise ArgumentError(f"Dominio {domain_id}: las etiquetas locales deben cubrir 1..{m_i}")
        clases[domain_id] = m_i
        offsets[domain_id] = acumulado
        acumulado += m_i

    todas = [s for muestras in domains for s in muestras]
    domain_ids = np.array([s.domain_id for s in todas], dtype=np.int64)
    local = np.array([s.local_label for s in todas], dtype=np.int64)
    merged = local + np.array([offsets[d] for d in domain_ids], dtype=np.int64)
    features = np.vstack([np.asarray(s.features, dtype=np.float64) for s in todas])
    logger.info(f"Fusionados {len(clases)} dominios: M = {acumulado} identidades, {len(todas)} muestras")
    return MergedDataset(features, domain_ids, local, merged, acumulado, dict(clases), dict(offsets))


def _redondear(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_train_val(dataset: MergedDataset, val_fraction: float,
                    seed: int) -> Tuple[MergedDataset, MergedDataset]:
    """
    Partición estratificada por identidad

    Args:
        dataset: Conjunto fusionado
        val_fraction: Fracción de validación en (0, 1)
        seed: Semilla

    Returns:
        Tupla (train, val); cada identidad conserva al menos una muestra en train
    """
    if not 0.0 < val_fraction < 1.0:
        raise ArgumentError(f"val_fraction debe estar en (0, 1), recibió {val_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for etiqueta in np.unique(dataset.merged_labels):
        indices = np.flatnonzero(dataset.merged_labels == etiqueta)
        n = len(indices)
        n_val = _redondear(n * val_fraction)
        if n_val >= n:
            logger.warning(f"Identidad {int(etiqueta)} con {n} muestra(s): se conserva en entrenamiento")
            n_val = n - 1
        perm = rng.permutation(indices)
        val_idx.extend(perm[:n_val])
        train_idx.extend(perm[n_val:])
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(np.array(val_idx, dtype=np.int64)))


def split_probe_gallery(samples: List[Sample], seed: int,
                        distractors: Optional[List[Sample]] = None) -> Tuple[List[Sample], List[Sample]]:
    """
    Protocolo single-shot: una muestra de galería por identidad, el resto son probes

    Args:
        samples: Muestras de identidades retenidas de un dominio
        seed: Semilla
        distractors: Muestras de identidades que sólo van a la galería

    Returns:
        Tupla (probes, gallery)
    """
    rng = np.random.default_rng(seed)
    por_identidad: Dict[int, List[Sample]] = OrderedDict()
    for s in samples:
        por_identidad.setdefault(s.local_label, []).append(s)

    probes, gallery = [], []
    for identidad in sorted(por_identidad):
        grupo = por_identidad[identidad]
        if len(grupo) < 2:
            logger.warning(f"Identidad {identidad} con {len(grupo)} muestra(s): excluida del protocolo")
            continue
        elegida = int(rng.integers(len(grupo)))
        gallery.append(grupo[elegida])
        probes.extend(s for j, s in enumerate(grupo) if j != elegida)

    vistos = {s.local_label for s in gallery}
    for s in distractors or []:
        if s.local_label in vistos or s.local_label in por_identidad:
            continue
        vistos.add(s.local_label)
        gallery.append(s)
    return probes, gallery
