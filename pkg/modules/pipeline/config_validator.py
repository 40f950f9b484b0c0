"""
Módulo de validación de la configuración de experimentos
Responsable de validar el documento JSON del experimento y convertirlo en
ExperimentConfig
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..domain_data import PROTOCOL_PROFILES, DomainSpec, spec_from_profile
from ..errores import ConfigurationError
from ..impact import METHODS
from .run_manager import RunManager
from .schedules import StepDecay
from .stages import EXECUTION_ORDER, Stage, StageConfig
from .trainer import EncoderConfig

logger = logging.getLogger(__name__)

DROPOUT_KINDS = ('none', 'standard', 'deterministic_dgd', 'stochastic_dgd')

TRAINING_DEFAULTS = {
    'batch_size': 64,
    'epochs': 100,
    'momentum': 0.9,
    'weight_decay': 0.0,
    'early_stop_patience': 0,
}


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def derive_seed(base: int, seed: int) -> int:
    """Semilla de datos de un dominio para una semilla de ejecución"""
    return int(np.random.SeedSequence([int(base), int(seed)]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    """Documento de experimento ya validado"""
    name: str
    domains: List[Dict[str, Any]]
    encoder: EncoderConfig
    stages: List[Stage]
    seeds: List[int]
    training: Dict[str, Any] = field(default_factory=lambda: dict(TRAINING_DEFAULTS))
    stage_overrides: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    impact: Dict[str, Any] = field(default_factory=lambda: {'method': 'taylor', 'compare': True})
    evaluation: Dict[str, Any] = field(default_factory=lambda: {'max_rank': 20, 'normalize': False})
    val_fraction: float = 0.2
    input_dim: int = 32
    latent_dim: Optional[int] = None
    world_seed: int = 0
    nuisance_dim: int = 0
    attribute_dim: int = 0
    finetune_domains: Optional[List[int]] = None
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode('utf-8')).hexdigest()

    def domain_specs(self, seed: int) -> List[DomainSpec]:
        """DomainSpec de cada dominio con semillas derivadas de la semilla de ejecución"""
        mundo = derive_seed(self.world_seed, seed)
        specs = []
        for dominio in self.domains:
            valores = dict(dominio)
            valores.setdefault('input_dim', self.input_dim)
            valores.setdefault('latent_dim', self.latent_dim)
            valores.setdefault('nuisance_dim', self.nuisance_dim)
            valores.setdefault('attribute_dim', self.attribute_dim)
            valores['world_seed'] = mundo
            valores['seed'] = derive_seed(valores.get('seed', valores['domain_id']), seed)
            perfil = valores.pop('profile', None)
            if perfil:
                escala = valores.pop('scale', 1.0)
                domain_id = valores.pop('domain_id')
                input_dim = valores.pop('input_dim')
                semilla = valores.pop('seed')
                specs.append(spec_from_profile(perfil, domain_id, input_dim, semilla, escala, **valores))
            else:
                specs.append(DomainSpec(**valores))
        return specs

    def stage_config(self, stage, seed: int, target_domain: Optional[int] = None) -> StageConfig:
        """StageConfig de una etapa: valores por defecto, bloque training y sobreescrituras"""
        stage = Stage(stage)
        overrides = dict(self.stage_overrides.get(stage.value, {}))
        base = {k: self.training[k] for k in ('batch_size', 'momentum', 'weight_decay', 'early_stop_patience')}
        cfg = StageConfig.default_for(stage, overrides, seed=seed, target_domain=target_domain,
                                      impact_method=self.impact.get('method', 'taylor'), **base)
        if isinstance(cfg.schedule, StepDecay) and 'epochs' not in overrides:
            cfg.epochs = int(self.training['epochs'])
        return cfg


class ExperimentValidator:
    """Validador de documentos de experimento"""

    def __init__(self, config: Dict[str, Any] = None):
        """
        Inicializa el validador

        Args:
            config: Configuración de validación
        """
        self.config = config or {}
        self.max_file_size = self.config.get('max_file_size', 10 * 1024 * 1024)

    def validar_archivo(self, filepath) -> Dict[str, Any]:
        """
        Lee y valida un archivo de experimento

        Args:
            filepath: Ruta al JSON

        Returns:
            Diccionario con resultados de validación y el documento leído
        """
        resultado = {
            'archivo': str(filepath),
            'es_valido': True,
            'errores': [],
            'advertencias': [],
            'documento': None,
            'detalles': {},
        }
        filepath = Path(filepath)

        if not filepath.exists():
            resultado['es_valido'] = False
            resultado['errores'].append(f"El archivo no existe: {filepath}")
            return resultado

        tamaño = filepath.stat().st_size
        resultado['detalles']['tamaño'] = tamaño
        if tamaño > self.max_file_size:
            resultado['es_valido'] = False
            resultado['errores'].append(f"Archivo muy grande ({tamaño} bytes)")
            return resultado

        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                documento = json.load(f)
        except json.JSONDecodeError as e:
            resultado['es_valido'] = False
            resultado['errores'].append(f"JSON inválido en línea {e.lineno}, columna {e.colno}: {e.msg}")
            return resultado

        resultado['detalles']['hash_sha256'] = RunManager.calcular_hash(filepath)
        contenido = self.validar_experimento(documento)
        resultado['errores'].extend(contenido['errores'])
        resultado['advertencias'].extend(contenido['advertencias'])
        resultado['es_valido'] = contenido['es_valido']
        resultado['documento'] = documento
        return resultado

    def validar_experimento(self, doc: Any) -> Dict[str, Any]:
        """
        Valida el contenido de un documento de experimento

        Args:
            doc: Documento JSON ya leído

        Returns:
            {'es_valido', 'errores', 'advertencias'} con errores "campo: mensaje"
        """
        resultado = {'es_valido': True, 'errores': [], 'advertencias': []}
        errores, advertencias = resultado['errores'], resultado['advertencias']

        if not isinstance(doc, dict):
            errores.append("documento: debe ser un objeto JSON")
            resultado['es_valido'] = False
            return resultado

        # Dominios
        dominios = doc.get('domains')
        ids = []
        if not isinstance(dominios, list) or not dominios:
            errores.append("domains: debe ser una lista no vacía")
        else:
            for i, dominio in enumerate(dominios):
                errores.extend(self._validar_dominio(i, dominio, doc))
                if isinstance(dominio, dict) and isinstance(dominio.get('domain_id'), int):
                    ids.append(dominio['domain_id'])
            repetidos = sorted({d for d in ids if ids.count(d) > 1})
            if repetidos:
                errores.append(f"domains: domain_id repetido {repetidos}")
            if all(isinstance(d, dict) and not d.get('profile') and not d.get('test_identities')
                   for d in dominios):
                advertencias.append("domains: ningún dominio tiene identidades de prueba; no habrá CMC")

        # Codificador
        encoder = doc.get('encoder', {})
        if not isinstance(encoder, dict):
            errores.append("encoder: debe ser un objeto")
        else:
            ocultas = encoder.get('hidden_dims', [64])
            if not isinstance(ocultas, list) or not all(isinstance(h, int) and h >= 1 for h in ocultas):
                errores.append("encoder.hidden_dims: debe ser una lista de enteros >= 1")
            if not isinstance(encoder.get('feature_dim', 64), int) or encoder.get('feature_dim', 64) < 1:
                errores.append("encoder.feature_dim: debe ser un entero >= 1")
            if encoder.get('feature_activation', 'relu') not in ('relu', 'identity'):
                errores.append("encoder.feature_activation: debe ser 'relu' o 'identity'")

        # Etapas
        etapas = doc.get('stages', [s.value for s in EXECUTION_ORDER if s != Stage.MULTITASK])
        validas = {s.value for s in Stage}
        if not isinstance(etapas, list) or not etapas:
            errores.append("stages: debe ser una lista no vacía")
        else:
            for s in etapas:
                if s not in validas:
                    errores.append(f"stages: etapa desconocida '{s}' (válidas: {', '.join(sorted(validas))})")
            if any(s in etapas for s in ('jstl_dgd', 'ft_jstl')) and 'jstl' not in etapas:
                advertencias.append("stages: sin 'jstl' se cargará su checkpoint del directorio del run")

        # Semillas
        semillas = doc.get('seeds', [0])
        if isinstance(semillas, int):
            if semillas < 1:
                errores.append("seeds: el número de semillas debe ser >= 1")
        elif not isinstance(semillas, list) or not semillas or not all(isinstance(s, int) and s >= 0 for s in semillas):
            errores.append("seeds: debe ser un entero >= 1 o una lista de enteros >= 0")

        # Entrenamiento
        entrenamiento = doc.get('training', {})
        if not isinstance(entrenamiento, dict):
            errores.append("training: debe ser un objeto")
        else:
            for clave in entrenamiento:
                if clave not in TRAINING_DEFAULTS:
                    advertencias.append(f"training.{clave}: campo desconocido, se ignora")
            for clave in ('batch_size', 'epochs'):
                valor = entrenamiento.get(clave, TRAINING_DEFAULTS[clave])
                if not isinstance(valor, int) or valor < 1:
                    errores.append(f"training.{clave}: debe ser un entero >= 1")
            momento = entrenamiento.get('momentum', 0.9)
            if not isinstance(momento, (int, float)) or not 0 <= momento < 1:
                errores.append("training.momentum: debe estar en [0, 1)")

        # Sobreescrituras por etapa
        overrides = doc.get('stage_overrides', {})
        if not isinstance(overrides, dict):
            errores.append("stage_overrides: debe ser un objeto")
        else:
            for etapa, valores in overrides.items():
                if etapa not in validas:
                    errores.append(f"stage_overrides.{etapa}: etapa desconocida")
                    continue
                kind = (valores.get('dropout') or {}).get('kind') if isinstance(valores, dict) else None
                if kind is not None and kind not in DROPOUT_KINDS:
                    errores.append(f"stage_overrides.{etapa}.dropout.kind: '{kind}' no es válido")
                schedule = valores.get('schedule') if isinstance(valores, dict) else None
                if schedule is not None and schedule.get('kind', 'step') not in ('step', 'poly'):
                    errores.append(f"stage_overrides.{etapa}.schedule.kind: debe ser 'step' o 'poly'")

        # Impacto y evaluación
        impacto = doc.get('impact', {})
        if impacto.get('method', 'taylor') not in METHODS:
            errores.append(f"impact.method: debe ser uno de {', '.join(METHODS)}")
        evaluacion = doc.get('evaluation', {})
        max_rank = evaluacion.get('max_rank', 20)
        if not isinstance(max_rank, int) or max_rank < 1:
            errores.append("evaluation.max_rank: debe ser un entero >= 1")

        fraccion = doc.get('val_fraction', 0.2)
        if not isinstance(fraccion, (int, float)) or not 0 < fraccion < 1:
            errores.append("val_fraction: debe estar en (0, 1)")

        ft = doc.get('finetune_domains')
        if ft is not None and (not isinstance(ft, list) or any(d not in ids for d in ft)):
            errores.append(f"finetune_domains: debe ser una lista de domain_id existentes {sorted(ids)}")

        resultado['es_valido'] = not errores
        return resultado

    def _validar_dominio(self, i: int, dominio: Any, doc: Dict[str, Any]) -> List[str]:
        prefijo = f"domains[{i}]"
        if not isinstance(dominio, dict):
            return [f"{prefijo}: debe ser un objeto"]
        if not isinstance(dominio.get('domain_id'), int):
            return [f"{prefijo}.domain_id: entero requerido"]
        valores = dict(dominio)
        valores.setdefault('input_dim', doc.get('input_dim', 32))
        valores.setdefault('latent_dim', doc.get('latent_dim'))
        valores.setdefault('nuisance_dim', doc.get('nuisance_dim', 0))
        valores.setdefault('attribute_dim', doc.get('attribute_dim', 0))
        perfil = valores.pop('profile', None)
        if perfil is not None:
            if perfil not in PROTOCOL_PROFILES:
                return [f"{prefijo}.profile: perfil desconocido '{perfil}'"]
            return []
        try:
            DomainSpec(**valores)
        except ConfigurationError as e:
            return [f"{prefijo}.{problema}" for problema in e.errores] or [f"{prefijo}: {e}"]
        except TypeError as e:
            return [f"{prefijo}: {e}"]
        return []


def parse_experiment_config(doc: Dict[str, Any]) -> ExperimentConfig:
    """Valida un documento y construye ExperimentConfig"""
    validacion = ExperimentValidator().validar_experimento(doc)
    if not validacion['es_valido']:
        raise ConfigurationError("Configuración de experimento inválida", validacion['errores'])
    for advertencia in validacion['advertencias']:
        logger.warning(advertencia)

    semillas = doc.get('seeds', [0])
    if isinstance(semillas, int):
        semillas = list(range(semillas))
    encoder = doc.get('encoder', {})
    etapas = doc.get('stages', [s.value for s in EXECUTION_ORDER if s != Stage.MULTITASK])
    return ExperimentConfig(
        name=doc.get('name', 'experimento'),
        domains=[dict(d) for d in doc['domains']],
        encoder=EncoderConfig(list(encoder.get('hidden_dims', [64])), encoder.get('feature_dim', 64),
                              encoder.get('feature_activation', 'relu')),
        stages=[s for s in EXECUTION_ORDER if s.value in etapas],
        seeds=list(semillas),
        training={**TRAINING_DEFAULTS, **{k: v for k, v in doc.get('training', {}).items() if k in TRAINING_DEFAULTS}},
        stage_overrides=dict(doc.get('stage_overrides', {})),
        impact={'method': 'taylor', 'compare': True, **doc.get('impact', {})},
        evaluation={'max_rank': 20, 'normalize': False, **doc.get('evaluation', {})},
        val_fraction=float(doc.get('val_fraction', 0.2)),
        input_dim=int(doc.get('input_dim', 32)),
        latent_dim=doc.get('latent_dim'),
        world_seed=int(doc.get('world_seed', 0)),
        nuisance_dim=int(doc.get('nuisance_dim', 0)),
        attribute_dim=int(doc.get('attribute_dim', 0)),
        finetune_domains=doc.get('finetune_domains'),
        raw=doc,
    )


def load_experiment_config(path) -> ExperimentConfig:
    """
    Lee y valida un archivo de experimento

    Raises:
        ConfigurationError: archivo ausente, JSON inválido (línea/columna) o
            campos inválidos
    """
    validacion = ExperimentValidator().validar_archivo(path)
    if validacion['documento'] is None or not validacion['es_valido']:
        raise ConfigurationError(f"Configuración inválida: {path}", validacion['errores'])
    return parse_experiment_config(validacion['documento'])
