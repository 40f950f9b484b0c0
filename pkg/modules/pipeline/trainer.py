"""
Entrenamiento de las etapas
SGD con momento sobre lotes mezclados sin balanceo por dominio; cada muestra
recibe la compuerta de dropout de su dominio y su pérdida va a la cabeza que
le corresponde
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..dgd import DeterministicDGD, DomainGuidedDropout, policy_from_config
from ..domain_data import MergedDataset
from ..errores import ConfigurationError, DimensionError, TrainingError
from ..impact import ImpactScores, average_impact
from ..nn_core import (ClassifierHead, EncoderModel, SGDMomentum, backward_encoder,
                       forward_batch, head_backward, head_forward)
from .stages import STAGE_CODES, Objective, Stage, StageConfig

logger = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    """Arquitectura del codificador"""
    hidden_dims: List[int] = field(default_factory=lambda: [64])
    feature_dim: int = 64
    feature_activation: str = 'relu'

    def build(self, input_dim: int, rng: np.random.Generator) -> EncoderModel:
        return EncoderModel.initialize(input_dim, self.hidden_dims, self.feature_dim, rng,
                                       self.feature_activation)


def stage_rng(seed: int, stage, domain_id: Optional[int] = None) -> np.random.Generator:
    """Generador de una etapa, derivado de (seed, etapa, dominio)"""
    entropia = [int(seed), STAGE_CODES[Stage(stage)], 0 if domain_id is None else int(domain_id) + 1]
    return np.random.default_rng(np.random.SeedSequence(entropia))


@dataclass
class TrainingSet:
    """Arreglos de entrenamiento ya enrutados: clase base 0 y cabeza de cada muestra"""
    X: np.ndarray
    labels: np.ndarray
    routes: np.ndarray
    domains: np.ndarray

    def __len__(self) -> int:
        return int(self.X.shape[0])


def single_task_view(dataset: MergedDataset) -> TrainingSet:
    """Una sola cabeza sobre el espacio fusionado"""
    return TrainingSet(dataset.features, dataset.merged_labels - 1,
                       np.zeros(len(dataset), dtype=np.int64), dataset.domain_ids)


def multi_task_view(dataset: MergedDataset, orden: List[int]) -> TrainingSet:
    """Una cabeza por dominio (en el orden dado) sobre las etiquetas locales"""
    posicion = {d: i for i, d in enumerate(orden)}
    rutas = np.array([posicion[int(d)] for d in dataset.domain_ids], dtype=np.int64)
    return TrainingSet(dataset.features, dataset.local_labels - 1, rutas, dataset.domain_ids)


@dataclass
class TrainingHistory:
    """Curvas por época y registro de máscaras de una etapa"""
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    initial_val_loss: Optional[float] = None
    dropped_neurons: Dict[int, List[int]] = field(default_factory=dict)
    recomputed_epochs: List[int] = field(default_factory=list)
    stopped_early: bool = False
    dropout: Optional[DomainGuidedDropout] = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> Dict:
        return {
            'train_loss': [float(v) for v in self.train_loss],
            'val_loss': [float(v) for v in self.val_loss],
            'learning_rates': [float(v) for v in self.learning_rates],
            'initial_val_loss': self.initial_val_loss,
            'dropped_neurons': {str(d): v for d, v in sorted(self.dropped_neurons.items())},
            'recomputed_epochs': list(self.recomputed_epochs),
            'stopped_early': self.stopped_early,
        }


class Trainer:
    """Bucle de SGD con momento compartido por todas las etapas"""

    def __init__(self, cfg: StageConfig, mostrar_progreso: bool = False):
        """
        Args:
            cfg: Configuración de la etapa (épocas, lote, momento, schedule)
            mostrar_progreso: Barra tqdm por época
        """
        self.cfg = cfg
        self.mostrar_progreso = mostrar_progreso
        self.estadisticas = {'iteraciones': 0, 'epocas': 0, 'muestras_vistas': 0}

    def _paso(self, model: EncoderModel, heads: List[ClassifierHead], datos: TrainingSet,
              idx: np.ndarray, dropout: DomainGuidedDropout, rng: np.random.Generator):
        """Pérdida media del lote, gradientes por nombre y compuerta usada"""
        B = len(idx)
        gate = dropout.train_gate(datos.domains[idx], model.feature_dim, rng)
        H, cache = forward_batch(model, datos.X[idx], gate)
        rutas = datos.routes[idx]
        etiquetas = datos.labels[idx]

        dH = np.zeros_like(H)
        grads = {}
        total = 0.0
        for r, head in enumerate(heads):
            filas = np.flatnonzero(rutas == r)
            if len(filas) == 0:
                grads[f"head.{r}.weights"] = np.zeros_like(head.weights)
                grads[f"head.{r}.bias"] = np.zeros_like(head.bias)
                continue
            salida = head_backward(head, H[filas], etiquetas[filas], 1.0 / B)
            dH[filas] = salida['dH']
            grads[f"head.{r}.weights"] = salida['dW']
            grads[f"head.{r}.bias"] = salida['db']
            total += float(salida['losses'].sum())
        grads.update(backward_encoder(model, cache, dH))
        return total / B, grads, gate

    def evaluate_loss(self, model: EncoderModel, heads: List[ClassifierHead], datos: TrainingSet,
                      dropout: DomainGuidedDropout) -> float:
        """Entropía cruzada media con la semántica de prueba de cada dominio"""
        G, _ = forward_batch(model, datos.X)
        for dominio in np.unique(datos.domains):
            filas = datos.domains == dominio
            G[filas] = G[filas] * dropout.test_gate(int(dominio), model.feature_dim)
        total = 0.0
        for r, head in enumerate(heads):
            filas = np.flatnonzero(datos.routes == r)
            if len(filas):
                perdidas, _ = head_forward(head, G[filas], datos.labels[filas])
                total += float(perdidas.sum())
        return total / len(datos)

    def fit(self, model: EncoderModel, heads: List[ClassifierHead], train: TrainingSet,
            dropout: DomainGuidedDropout, rng: np.random.Generator, val: Optional[TrainingSet] = None,
            on_epoch_end: Optional[Callable[[int], Optional[DomainGuidedDropout]]] = None) -> TrainingHistory:
        """
        Entrena en el lugar el codificador y las cabezas

        Args:
            model: Codificador (se modifica)
            heads: Cabezas; la muestra con ruta r usa heads[r]
            train: Datos de entrenamiento enrutados
            dropout: Política por dominio
            rng: Generador de la etapa (barajado y máscaras)
            val: Datos de validación (opcional)
            on_epoch_end: Callback por época; si devuelve una política, la reemplaza

        Returns:
            TrainingHistory de la etapa
        """
        cfg = self.cfg
        n = len(train)
        if n == 0:
            raise ConfigurationError(f"{cfg.stage.value}: el conjunto de entrenamiento está vacío")
        for head in heads:
            if head.feature_dim != model.feature_dim:
                raise DimensionError(f"Cabeza con d={head.feature_dim} y codificador con d={model.feature_dim}")

        params = dict(model.parameters())
        for r, head in enumerate(heads):
            params.update(head.parameters(f"head.{r}"))
        optimizador = SGDMomentum(params, cfg.momentum, cfg.weight_decay)

        lotes_por_epoca = -(-n // cfg.batch_size)
        total_iteraciones = cfg.epochs * lotes_por_epoca
        hay_val = val is not None and len(val) > 0
        d = model.feature_dim

        historial = TrainingHistory()
        if hay_val:
            historial.initial_val_loss = self.evaluate_loss(model, heads, val, dropout)
        descartadas: Dict[int, np.ndarray] = {}
        mejor, sin_mejora = np.inf, 0
        iteracion = 0

        epocas = tqdm(range(cfg.epochs), desc=f"Etapa {cfg.stage.value}", disable=not self.mostrar_progreso)
        for epoch in epocas:
            orden = rng.permutation(n)
            suma = 0.0
            lr = 0.0
            for inicio in range(0, n, cfg.batch_size):
                idx = orden[inicio:inicio + cfg.batch_size]
                lr = cfg.schedule.lr(epoch, iteracion, total_iteraciones)
                perdida, grads, gate = self._paso(model, heads, train, idx, dropout, rng)
                if not np.isfinite(perdida):
                    raise TrainingError(
                        f"Pérdida no finita en la época {epoch}, iteración {iteracion} (lr={lr})",
                        tensor='loss', diagnostico={'epoch': epoch, 'iteration': iteracion, 'learning_rate': lr})
                optimizador.step(grads, lr)

                for dominio in np.unique(train.domains[idx]):
                    filas = train.domains[idx] == dominio
                    caidas = np.any(gate[filas] == 0.0, axis=0)
                    previo = descartadas.get(int(dominio), np.zeros(d, dtype=bool))
                    descartadas[int(dominio)] = previo | caidas
                suma += perdida * len(idx)
                iteracion += 1

            historial.train_loss.append(suma / n)
            historial.learning_rates.append(lr)
            self.estadisticas['epocas'] += 1
            self.estadisticas['muestras_vistas'] += n
            if hay_val:
                historial.val_loss.append(self.evaluate_loss(model, heads, val, dropout))
                if self.mostrar_progreso:
                    epocas.set_postfix(train=f"{historial.train_loss[-1]:.4f}", val=f"{historial.val_loss[-1]:.4f}")
            logger.debug(f"{cfg.stage.value} época {epoch}: train={historial.train_loss[-1]:.6f}"
                         + (f" val={historial.val_loss[-1]:.6f}" if hay_val else ""))

            if on_epoch_end is not None:
                nuevo = on_epoch_end(epoch)
                if nuevo is not None:
                    dropout = nuevo
                    historial.recomputed_epochs.append(epoch)

            if cfg.early_stop_patience and hay_val:
                if historial.val_loss[-1] < mejor:
                    mejor, sin_mejora = historial.val_loss[-1], 0
                else:
                    sin_mejora += 1
                    if sin_mejora >= cfg.early_stop_patience:
                        logger.info(f"{cfg.stage.value}: parada temprana en la época {epoch}")
                        historial.stopped_early = True
                        break

        self.estadisticas['iteraciones'] += iteracion
        historial.dropped_neurons = {dom: np.flatnonzero(m).tolist() for dom, m in sorted(descartadas.items())}
        historial.dropout = dropout
        return historial


def domain_impacts(model: EncoderModel, head: ClassifierHead, dataset: MergedDataset,
                   method: str = 'taylor', jobs: int = 1) -> Dict[int, ImpactScores]:
    """Impacto medio por dominio con las etiquetas del espacio de la cabeza"""
    etiquetas = dataset.merged_labels - 1
    return {d: average_impact(model, head, dataset.features[idx], etiquetas[idx], d, method, jobs)
            for d, idx in dataset.domain_index.items() if len(idx)}


def _comprobar_estandar(cfg: StageConfig):
    if cfg.dropout.get('kind', 'standard') not in ('standard', 'none'):
        raise ConfigurationError(f"{cfg.stage.value}: el entrenamiento desde cero usa dropout estándar",
                                 [f"dropout.kind: {cfg.dropout.get('kind')}"])


def _entrenar_tarea_unica(dataset: MergedDataset, cfg: StageConfig, encoder: Optional[EncoderConfig],
                          val: Optional[MergedDataset], rng: Optional[np.random.Generator],
                          mostrar_progreso: bool) -> Tuple[EncoderModel, ClassifierHead, TrainingHistory]:
    if cfg.objective != Objective.SINGLE_TASK:
        raise ConfigurationError(f"{cfg.stage.value}: se esperaba el objetivo de tarea única")
    _comprobar_estandar(cfg)
    rng = rng if rng is not None else stage_rng(cfg.seed, cfg.stage, cfg.target_domain)
    model = (encoder or EncoderConfig()).build(dataset.input_dim, rng)
    head = ClassifierHead.initialize(dataset.total_classes, model.feature_dim, rng)
    dropout = DomainGuidedDropout.uniform(policy_from_config(cfg.dropout))
    historial = Trainer(cfg, mostrar_progreso).fit(
        model, [head], single_task_view(dataset), dropout, rng,
        single_task_view(val) if val is not None and len(val) else None)
    return model, head, historial


def train_jstl(dataset: MergedDataset, cfg: StageConfig, encoder: Optional[EncoderConfig] = None,
               val: Optional[MergedDataset] = None, rng: Optional[np.random.Generator] = None,
               mostrar_progreso: bool = False) -> Tuple[EncoderModel, ClassifierHead, TrainingHistory]:
    """
    Entrena desde cero un codificador con una sola softmax sobre todas las identidades

    Args:
        dataset: Conjunto fusionado (M = total_classes)
        cfg: Etapa con objetivo de tarea única y dropout estándar
        encoder: Arquitectura
        val: Validación en el mismo espacio de etiquetas
        rng: Generador (defecto: derivado de cfg.seed y la etapa)
        mostrar_progreso: Barra de progreso

    Returns:
        Tupla (codificador, cabeza de M clases, historial)
    """
    model, head, historial = _entrenar_tarea_unica(dataset, cfg, encoder, val, rng, mostrar_progreso)
    logger.info(f"JSTL: {len(dataset)} muestras, M={dataset.total_classes}, "
                f"pérdida final {historial.train_loss[-1]:.4f}")
    return model, head, historial


def train_individual(dataset: MergedDataset, cfg: StageConfig, encoder: Optional[EncoderConfig] = None,
                     val: Optional[MergedDataset] = None, rng: Optional[np.random.Generator] = None,
                     mostrar_progreso: bool = False) -> Tuple[EncoderModel, ClassifierHead, TrainingHistory]:
    """Entrena desde cero sobre un único dominio (vista local)"""
    if len(dataset.domains) != 1:
        raise ConfigurationError(f"El entrenamiento individual usa un dominio, recibió {dataset.domains}")
    return _entrenar_tarea_unica(dataset, cfg, encoder, val, rng, mostrar_progreso)


def train_multitask(dataset: MergedDataset, cfg: StageConfig, encoder: Optional[EncoderConfig] = None,
                    val: Optional[MergedDataset] = None, rng: Optional[np.random.Generator] = None,
                    mostrar_progreso: bool = False) -> Tuple[EncoderModel, Dict[int, ClassifierHead], TrainingHistory]:
    """
    Codificador compartido con una softmax por dominio

    Cada muestra aporta su pérdida sólo a la cabeza de su dominio. Con un único
    dominio el problema coincide con train_jstl.

    Returns:
        Tupla (codificador, domain_id → cabeza de Mᵢ clases, historial)
    """
    if cfg.objective != Objective.MULTI_TASK:
        raise ConfigurationError(f"{cfg.stage.value}: se esperaba el objetivo multitarea")
    _comprobar_estandar(cfg)
    rng = rng if rng is not None else stage_rng(cfg.seed, cfg.stage, cfg.target_domain)
    model = (encoder or EncoderConfig()).build(dataset.input_dim, rng)
    orden = list(dataset.domains)
    heads = [ClassifierHead.initialize(dataset.domain_classes[d], model.feature_dim, rng) for d in orden]
    dropout = DomainGuidedDropout.uniform(policy_from_config(cfg.dropout))
    historial = Trainer(cfg, mostrar_progreso).fit(
        model, heads, multi_task_view(dataset, orden), dropout, rng,
        multi_task_view(val, orden) if val is not None and len(val) else None)
    logger.info(f"Multitarea: {len(orden)} cabezas, pérdida final {historial.train_loss[-1]:.4f}")
    return model, dict(zip(orden, heads)), historial


def resume_with_dgd(model: EncoderModel, head: ClassifierHead, dataset: MergedDataset,
                    impact: Dict[int, ImpactScores], cfg: StageConfig, val: Optional[MergedDataset] = None,
                    rng: Optional[np.random.Generator] = None, jobs: int = 1,
                    mostrar_progreso: bool = False) -> Tuple[EncoderModel, ClassifierHead, TrainingHistory]:
    """
    Continúa el entrenamiento conjunto con Domain Guided Dropout

    Args:
        model: Codificador JSTL (no se modifica; se entrena una copia)
        head: Cabeza fusionada
        dataset: Conjunto fusionado de entrenamiento
        impact: domain_id → ImpactScores de cada dominio presente
        cfg: Etapa (defecto: DGD determinista, schedule polinómico, 10 épocas)
        val: Validación
        rng: Generador
        jobs: Hilos para recalcular impactos
        mostrar_progreso: Barra de progreso

    Returns:
        Tupla (codificador, cabeza, historial con las neuronas descartadas por dominio)
    """
    faltantes = [d for d in dataset.domains if d not in impact]
    if faltantes:
        raise ConfigurationError("Faltan puntuaciones de impacto para dominios presentes en los datos",
                                 [f"dominio {d}" for d in faltantes])
    rng = rng if rng is not None else stage_rng(cfg.seed, cfg.stage, cfg.target_domain)
    model, head = model.copy(), head.copy()

    def _politicas(puntuaciones: Dict[int, ImpactScores]) -> DomainGuidedDropout:
        return DomainGuidedDropout({d: policy_from_config(cfg.dropout, puntuaciones[d]) for d in dataset.domains})

    callback = None
    if cfg.recompute_every:
        def callback(epoch: int) -> Optional[DomainGuidedDropout]:
            if (epoch + 1) % cfg.recompute_every:
                return None
            logger.debug(f"Recalculando impactos tras la época {epoch}")
            return _politicas(domain_impacts(model, head, dataset, cfg.impact_method, jobs))

    historial = Trainer(cfg, mostrar_progreso).fit(
        model, [head], single_task_view(dataset), _politicas(impact), rng,
        single_task_view(val) if val is not None and len(val) else None, callback)
    logger.info(f"JSTL+DGD: {historial.epochs_run} épocas, pérdida final {historial.train_loss[-1]:.4f}")
    return model, head, historial


def finetune_on_domain(model: EncoderModel, head: ClassifierHead, dataset: MergedDataset,
                       impact: Optional[ImpactScores], cfg: StageConfig, val: Optional[MergedDataset] = None,
                       rng: Optional[np.random.Generator] = None,
                       mostrar_progreso: bool = False) -> Tuple[EncoderModel, ClassifierHead, TrainingHistory]:
    """
    Ajusta el codificador a un dominio con una cabeza nueva de Mᵢ clases

    Args:
        model: Codificador de partida (se copia)
        head: Cabeza previa; sólo se comprueba su compatibilidad
        dataset: Conjunto que contiene el dominio objetivo
        impact: ImpactScores del dominio objetivo (requerido por las variantes DGD)
        cfg: Etapa con target_domain
        val: Validación
        rng: Generador
        mostrar_progreso: Barra de progreso

    Returns:
        Tupla (codificador ajustado, cabeza nueva, historial con la política final)
    """
    destino = cfg.target_domain
    if destino not in dataset.domain_classes:
        raise ConfigurationError(f"Dominio objetivo desconocido: {destino}",
                                 [f"dominios disponibles: {dataset.domains}"])
    if head.feature_dim != model.feature_dim:
        raise DimensionError(f"Cabeza con d={head.feature_dim} y codificador con d={model.feature_dim}")
    rng = rng if rng is not None else stage_rng(cfg.seed, cfg.stage, destino)

    local = dataset.local_view(destino)
    local_val = None
    if val is not None and destino in val.domain_classes and np.any(val.domain_ids == destino):
        local_val = val.local_view(destino)

    politica_cfg = dict(cfg.dropout)
    kind = politica_cfg.get('kind', 'standard')
    if kind in ('deterministic_dgd', 'stochastic_dgd') and impact is None:
        raise ConfigurationError(f"{cfg.stage.value}: el dropout '{kind}' necesita el impacto del dominio {destino}")
    if (kind == 'stochastic_dgd' and politica_cfg.get('temperature', 'auto') == 'auto'
            and float(np.max(impact.scores)) <= 0.0):
        logger.warning(f"Dominio {destino}: ninguna neurona con impacto positivo; se usa DGD determinista")
        politica = DeterministicDGD(impact)
    else:
        politica = policy_from_config(politica_cfg, impact)

    model = model.copy()
    nueva = ClassifierHead.initialize(local.total_classes, model.feature_dim, rng)
    historial = Trainer(cfg, mostrar_progreso).fit(
        model, [nueva], single_task_view(local), DomainGuidedDropout({destino: politica}), rng,
        single_task_view(local_val) if local_val is not None else None)
    logger.info(f"Fine-tuning dominio {destino} ({politica.kind}): M={local.total_classes}, "
                f"pérdida final {historial.train_loss[-1]:.4f}")
    return model, nueva, historial
