"""
Datos completos de un experimento
Generación de todos los dominios, fusión, split train/val, protocolos
probe/gallery, volcado JSONL y tabla resumen
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..errores import ConfigurationError
from .dataset import MergedDataset, merge_single_task, split_probe_gallery, split_train_val
from .generator import DomainSpec, Sample, generate_domain, generate_heldout

logger = logging.getLogger(__name__)


@dataclass
class DomainProtocol:
    """Probes y galería retenidos de un dominio"""
    domain_id: int
    name: str
    probes: List[Sample] = field(default_factory=list)
    gallery: List[Sample] = field(default_factory=list)

    @property
    def probe_ids(self) -> int:
        return len({s.local_label for s in self.probes})

    @property
    def gallery_ids(self) -> int:
        return len({s.local_label for s in self.gallery})


@dataclass
class ExperimentData:
    """Conjunto de entrenamiento/validación fusionado más protocolos por dominio"""
    train: MergedDataset
    val: MergedDataset
    protocols: Dict[int, DomainProtocol]
    names: Dict[int, str]

    @property
    def domains(self) -> List[int]:
        return self.train.domains

    def smallest_domain(self) -> int:
        """Dominio con menos identidades de entrenamiento entre los evaluables"""
        evaluables = [d for d in self.domains if self.protocols.get(d) and self.protocols[d].probes]
        return min(evaluables or self.domains, key=lambda d: (self.train.domain_classes[d], d))


def build_experiment_data(specs: List[DomainSpec], val_fraction: float, seed: int) -> ExperimentData:
    """
    Genera y particiona todos los dominios de un experimento

    Args:
        specs: Especificaciones de dominio
        val_fraction: Fracción de validación
        seed: Semilla de las particiones

    Returns:
        ExperimentData listo para el pipeline
    """
    if not specs:
        raise ConfigurationError("El experimento necesita al menos un dominio")
    dims = {s.input_dim for s in specs}
    if len(dims) != 1:
        raise ConfigurationError("Todos los dominios deben compartir input_dim", [f"recibidos: {sorted(dims)}"])

    fusionado = merge_single_task([generate_domain(s) for s in specs])
    train, val = split_train_val(fusionado, val_fraction, seed)

    protocolos = {}
    for spec in specs:
        prueba, distractores = generate_heldout(spec)
        probes, gallery = split_probe_gallery(prueba, seed + spec.domain_id, distractores)
        protocolos[spec.domain_id] = DomainProtocol(spec.domain_id, spec.name, probes, gallery)
    return ExperimentData(train, val, protocolos, {s.domain_id: s.name for s in specs})


def summarize_domains(data: ExperimentData) -> List[Dict[str, Any]]:
    """Filas (dominio, Mᵢ, Nᵢ, #val, #probe ID, #gallery ID) por dominio"""
    filas = []
    for d in data.domains:
        protocolo = data.protocols.get(d)
        filas.append({
            'domain_id': d,
            'name': data.names.get(d, str(d)),
            'identities': data.train.domain_classes[d],
            'train_samples': int(np.sum(data.train.domain_ids == d)),
            'val_samples': int(np.sum(data.val.domain_ids == d)),
            'probe_ids': protocolo.probe_ids if protocolo else 0,
            'gallery_ids': protocolo.gallery_ids if protocolo else 0,
            'probes': len(protocolo.probes) if protocolo else 0,
        })
    return filas


def _registro(s: Sample, split: str) -> str:
    return json.dumps({
        'domain_id': int(s.domain_id),
        'local_label': int(s.local_label),
        'merged_label': None if s.merged_label is None else int(s.merged_label),
        'split': split,
        'features': [float(v) for v in s.features],
    }, sort_keys=True)


def dump_dataset(data: ExperimentData, out_dir) -> List[str]:
    """
    Escribe un JSONL por dominio y el índice fusionado

    Args:
        data: Datos del experimento
        out_dir: Carpeta destino

    Returns:
        Rutas escritas (archivos de dominio y luego el índice)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rutas = []
    for d in data.domains:
        ruta = out_dir / f"domain_{d}.jsonl"
        with open(ruta, 'w', encoding='utf-8') as f:
            for split, conjunto in (('train', data.train), ('val', data.val)):
                for s in conjunto.domain_subset(d).samples:
                    f.write(_registro(s, split) + '\n')
            protocolo = data.protocols.get(d)
            if protocolo:
                for s in protocolo.probes:
                    f.write(_registro(s, 'probe') + '\n')
                for s in protocolo.gallery:
                    f.write(_registro(s, 'gallery') + '\n')
        rutas.append(str(ruta))

    indice = {
        'total_classes': data.train.total_classes,
        'input_dim': data.train.input_dim,
        'domains': [
            {
                'domain_id': d,
                'name': data.names.get(d, str(d)),
                'identities': data.train.domain_classes[d],
                'offset': data.train.domain_offsets[d],
                'file': f"domain_{d}.jsonl",
            }
            for d in data.domains
        ],
    }
    ruta_indice = out_dir / 'merged_index.json'
    with open(ruta_indice, 'w', encoding='utf-8') as f:
        json.dump(indice, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    rutas.append(str(ruta_indice))
    logger.info(f"Dataset escrito en {out_dir} ({len(rutas) - 1} dominios)")
    return rutas


def load_dataset(in_dir) -> ExperimentData:
    """Lee un dataset escrito por dump_dataset"""
    in_dir = Path(in_dir)
    ruta_indice = in_dir / 'merged_index.json'
    if not ruta_indice.exists():
        raise ConfigurationError(f"No existe el índice fusionado: {ruta_indice}")
    with open(ruta_indice, 'r', encoding='utf-8') as f:
        indice = json.load(f)

    arreglos = {'train': [], 'val': []}
    protocolos, nombres, clases, offsets = {}, {}, {}, {}
    for dominio in indice['domains']:
        d = int(dominio['domain_id'])
        nombres[d] = dominio['name']
        clases[d] = int(dominio['identities'])
        offsets[d] = int(dominio['offset'])
        protocolo = DomainProtocol(d, dominio['name'])
        with open(in_dir / dominio['file'], 'r', encoding='utf-8') as f:
            for numero, linea in enumerate(f, start=1):
                try:
                    r = json.loads(linea)
                except json.JSONDecodeError as e:
                    raise ConfigurationError(f"{dominio['file']}:{numero}: registro inválido ({e.msg})") from e
                s = Sample(int(r['domain_id']), int(r['local_label']),
                           np.array(r['features'], dtype=np.float64), r.get('merged_label'))
                if r['split'] in arreglos:
                    arreglos[r['split']].append(s)
                elif r['split'] == 'probe':
                    protocolo.probes.append(s)
                else:
                    protocolo.gallery.append(s)
        protocolos[d] = protocolo

    def _armar(muestras: List[Sample]) -> MergedDataset:
        dim = int(indice['input_dim'])
        return MergedDataset(
            np.vstack([s.features for s in muestras]) if muestras else np.zeros((0, dim)),
            np.array([s.domain_id for s in muestras], dtype=np.int64),
            np.array([s.local_label for s in muestras], dtype=np.int64),
            np.array([s.merged_label for s in muestras], dtype=np.int64),
            int(indice['total_classes']), dict(clases), dict(offsets))

    return ExperimentData(_armar(arreglos['train']), _armar(arreglos['val']), protocolos, nombres)
