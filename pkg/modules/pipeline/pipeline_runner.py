"""
Módulo principal del pipeline
Integra todos los componentes: datos, entrenamiento por etapas, impacto,
evaluación CMC y diagnósticos, y persiste todo tras cada etapa
"""
import logging
import time
from datetime import datetime
from itertools import combinations
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ..dgd import (DomainGuidedDropout, StandardDropout, StochasticDGD,
                   cumulative_keep_histogram)
from ..domain_data import ExperimentData, build_experiment_data, summarize_domains
from ..errores import ConfigurationError
from ..impact import (ImpactScores, average_impact, compare_methods, count_nonpositive,
                      cross_domain_correlation, save_impact_report, write_sorted_scores_csv)
from ..nn_core import ClassifierHead, EncoderModel
from ..reid_eval import cmc, extract_features
from .config_validator import ExperimentConfig
from .run_manager import RunManager
from .stages import EXECUTION_ORDER, STAGE_LABELS, TABLE_ORDER, Stage, StageReport
from .trainer import (domain_impacts, finetune_on_domain, resume_with_dgd, train_individual,
                      train_jstl, train_multitask)

logger = logging.getLogger(__name__)

DOMAIN_COLUMNS = ['domain_id', 'name', 'identities', 'train_samples', 'val_samples',
                  'probe_ids', 'gallery_ids', 'probes']


def _r(valor) -> Optional[str]:
    return None if valor is None else repr(float(valor))


def top1_table(reports: List[StageReport], domains: List[int]) -> List[Dict[str, Any]]:
    """Filas método × dominio con el top-1 de cada etapa, en el orden de la tabla"""
    por_etapa = {Stage(r.stage): r for r in reports}
    filas = []
    for stage in TABLE_ORDER:
        if stage not in por_etapa:
            continue
        fila = {'method': STAGE_LABELS[stage]}
        for d in domains:
            fila[f"domain_{d}"] = _r(por_etapa[stage].top1(d))
        filas.append(fila)
    return filas


class PipelineRunner:
    """
    Ejecutor de las etapas de un experimento para una semilla
    Orquesta datos, entrenamiento, impacto, evaluación y persistencia
    """

    def __init__(self, config: ExperimentConfig, run_dir, seed: int, stages=None, jobs: int = 1,
                 mostrar_progreso: bool = False,
                 on_stage: Optional[Callable[[StageReport, str], None]] = None):
        """
        Inicializa el ejecutor

        Args:
            config: Experimento validado
            run_dir: Carpeta del run de esta semilla
            seed: Semilla de ejecución
            stages: Etapas a ejecutar (defecto: las del experimento)
            jobs: Hilos para el cálculo de impacto
            mostrar_progreso: Barras tqdm
            on_stage: Callback tras persistir cada etapa (informe, ruta relativa)
        """
        self.config = config
        self.seed = int(seed)
        pedidas = {Stage(s) for s in (stages if stages is not None else config.stages)}
        self.stages = [s for s in EXECUTION_ORDER if s in pedidas]
        self.jobs = max(1, int(jobs))
        self.mostrar_progreso = mostrar_progreso
        self.on_stage = on_stage
        self.run = RunManager(run_dir)

        self.data: Optional[ExperimentData] = None
        self.reports: List[StageReport] = []
        self.timings: Dict[str, float] = {}
        self._modelos: Dict[Stage, Tuple[EncoderModel, ClassifierHead]] = {}
        self._impactos: Dict[Stage, Dict[int, ImpactScores]] = {}
        self._cmc_jstl: Optional[Dict[int, List[float]]] = None

        self.estadisticas = {
            'etapas_completadas': 0,
            'checkpoints': 0,
            'tiempo_inicio': None,
            'tiempo_fin': None,
            'errores': [],
        }
        self.max_rank = int(config.evaluation.get('max_rank', 20))
        self.normalize = bool(config.evaluation.get('normalize', False))

    # ------------------------------------------------------------------ datos

    def preparar_datos(self) -> ExperimentData:
        if self.data is None:
            self.data = build_experiment_data(self.config.domain_specs(self.seed),
                                              self.config.val_fraction, self.seed)
            resumen = summarize_domains(self.data)
            self.run.guardar_json('reports', 'domains.json', resumen)
            self.run.guardar_csv('reports', 'domains.csv', resumen, DOMAIN_COLUMNS)
        return self.data

    def _evaluables(self) -> List[int]:
        return [d for d in self.data.domains if self.data.protocols.get(d) and self.data.protocols[d].probes]

    def _ft_domains(self) -> List[int]:
        if self.config.finetune_domains is None:
            return self._evaluables()
        return [d for d in self.config.finetune_domains if d in self._evaluables()]

    def _val_local(self, d: int):
        val = self.data.val
        if d in val.domain_classes and np.any(val.domain_ids == d):
            return val.local_view(d)
        return None

    def _metadata(self, stage: Stage, **extra) -> Dict[str, Any]:
        return {'stage': stage.value, 'seed': self.seed, 'config_hash': self.config.config_hash, **extra}

    # ------------------------------------------------------------ evaluación

    def evaluar(self, model: EncoderModel, dropout: DomainGuidedDropout, domains: List[int]) -> Dict[int, List[float]]:
        """CMC por dominio con la semántica de prueba de la política de cada dominio"""
        resultado = {}
        for d in domains:
            protocolo = self.data.protocols[d]
            politica = dropout.policy_for(d)
            probes = extract_features(model, politica, protocolo.probes, self.normalize)
            gallery = extract_features(model, politica, protocolo.gallery, self.normalize)
            curva = cmc(probes, gallery, min(self.max_rank, gallery.rows))
            resultado[d] = [float(a) for a in curva.accuracies]
        return resultado

    # ------------------------------------------------------------ impacto

    def _modelo(self, stage: Stage) -> Tuple[EncoderModel, ClassifierHead]:
        """Modelo de una etapa previa: en memoria o desde su checkpoint"""
        if stage not in self._modelos:
            if not self.run.existe_checkpoint(stage.value):
                raise ConfigurationError(
                    f"Se necesita el checkpoint de la etapa '{stage.value}'; ejecútela primero",
                    [f"falta {self.run.ruta('checkpoints', stage.value + '.json')}"])
            model, heads, _ = self.run.cargar_checkpoint(stage.value)
            self._modelos[stage] = (model, heads['merged'])
            logger.info(f"Modelo '{stage.value}' cargado desde su checkpoint")
        return self._modelos[stage]

    def _impacto_jstl(self) -> Tuple[Dict[int, ImpactScores], List[str]]:
        """Impacto por dominio sobre el modelo JSTL, con diagnósticos"""
        model, head = self._modelo(Stage.JSTL)
        metodo = self.config.impact.get('method', 'taylor')
        rutas: List[str] = []
        if Stage.JSTL not in self._impactos:
            self._impactos[Stage.JSTL] = domain_impacts(model, head, self.data.train, metodo, self.jobs)
        impactos = self._impactos[Stage.JSTL]

        for d, scores in impactos.items():
            rutas.append(self.run.relativa(save_impact_report(
                self.run.ruta('impact', f"jstl_domain_{d}_{metodo}.json"), scores)))
            rutas.append(self.run.relativa(write_sorted_scores_csv(
                self.run.ruta('curves', f"impact_sorted_jstl_domain_{d}.csv"), scores)))

        # Correlación entre pares de dominios
        filas_pares = []
        for a, b in combinations(sorted(impactos), 2):
            corr = cross_domain_correlation(impactos[a], impactos[b])
            filas_pares.append({'domain_a': a, 'domain_b': b, 'pearson': _r(corr['pearson']),
                                'spearman': _r(corr['spearman'])})
            rutas.append(self.run.guardar_csv(
                'curves', f"impact_pair_{a}_{b}.csv",
                [{**f, 'score_a': repr(f['score_a']), 'score_b': repr(f['score_b'])} for f in corr['curve']],
                ['rank', 'neuron', 'score_a', 'score_b']))
        if filas_pares:
            rutas.append(self.run.guardar_csv('curves', 'impact_correlation.csv', filas_pares,
                                              ['domain_a', 'domain_b', 'pearson', 'spearman']))

        # Exacto frente a Taylor
        if self.config.impact.get('compare', True):
            otro = 'exact' if metodo == 'taylor' else 'taylor'
            filas = []
            for d, idx in self.data.train.domain_index.items():
                if not len(idx):
                    continue
                alterno = average_impact(model, head, self.data.train.features[idx],
                                         self.data.train.merged_labels[idx] - 1, d, otro, self.jobs)
                exacto, taylor = (impactos[d], alterno) if metodo == 'exact' else (alterno, impactos[d])
                comparacion = compare_methods(exacto, taylor)
                filas.append({'domain_id': d, **{k: _r(v) for k, v in comparacion.items()}})
            rutas.append(self.run.guardar_csv('curves', 'impact_exact_vs_taylor.csv', filas,
                                              ['domain_id', 'pearson', 'spearman', 'mae', 'max_abs_error']))
        return impactos, rutas

    # ------------------------------------------------------------ etapas

    def _etapa_individual(self) -> StageReport:
        report = StageReport(Stage.INDIVIDUAL)
        for d in self._evaluables():
            cfg = self.config.stage_config(Stage.INDIVIDUAL, self.seed, target_domain=d)
            model, head, hist = train_individual(self.data.train.local_view(d), cfg, self.config.encoder,
                                                 self._val_local(d), mostrar_progreso=self.mostrar_progreso)
            report.cmc.update(self.evaluar(model, hist.dropout, [d]))
            report.per_domain_loss[d] = {'train': hist.train_loss, 'val': hist.val_loss}
            report.checkpoints.append(self.run.guardar_checkpoint(
                f"individual_domain_{d}", model, {'domain': head}, self._metadata(Stage.INDIVIDUAL, target_domain=d)))
        return report

    def _etapa_jstl(self) -> StageReport:
        cfg = self.config.stage_config(Stage.JSTL, self.seed)
        model, head, hist = train_jstl(self.data.train, cfg, self.config.encoder, self.data.val,
                                       mostrar_progreso=self.mostrar_progreso)
        self._modelos[Stage.JSTL] = (model, head)
        self._impactos.pop(Stage.JSTL, None)
        report = StageReport(Stage.JSTL, hist.train_loss, hist.val_loss)
        report.checkpoints.append(self.run.guardar_checkpoint('jstl', model, {'merged': head},
                                                              self._metadata(Stage.JSTL)))
        report.cmc = self.evaluar(model, hist.dropout, self._evaluables())
        self._cmc_jstl = report.cmc
        _, report.impact_reference = self._impacto_jstl()
        return report

    def _etapa_multitask(self) -> StageReport:
        cfg = self.config.stage_config(Stage.MULTITASK, self.seed)
        model, heads, hist = train_multitask(self.data.train, cfg, self.config.encoder, self.data.val,
                                             mostrar_progreso=self.mostrar_progreso)
        report = StageReport(Stage.MULTITASK, hist.train_loss, hist.val_loss)
        report.checkpoints.append(self.run.guardar_checkpoint(
            'multitask', model, {f"domain_{d}": h for d, h in heads.items()}, self._metadata(Stage.MULTITASK)))
        report.cmc = self.evaluar(model, hist.dropout, self._evaluables())
        return report

    def _etapa_jstl_dgd(self) -> StageReport:
        model, head = self._modelo(Stage.JSTL)
        impactos, rutas = self._impacto_jstl()
        cfg = self.config.stage_config(Stage.JSTL_DGD, self.seed)
        nuevo, nueva, hist = resume_with_dgd(model, head, self.data.train, impactos, cfg, self.data.val,
                                             jobs=self.jobs, mostrar_progreso=self.mostrar_progreso)
        self._modelos[Stage.JSTL_DGD] = (nuevo, nueva)

        report = StageReport(Stage.JSTL_DGD, hist.train_loss, hist.val_loss, impact_reference=rutas)
        report.checkpoints.append(self.run.guardar_checkpoint('jstl_dgd', nuevo, {'merged': nueva},
                                                              self._metadata(Stage.JSTL_DGD)))
        report.cmc = self.evaluar(nuevo, hist.dropout, self._evaluables())

        no_positivas = {d: count_nonpositive(s) for d, s in impactos.items()}
        mascaras_ok = all(set(hist.dropped_neurons.get(d, [])) <= set(np.flatnonzero(s.scores <= 0.0).tolist())
                          for d, s in impactos.items())
        report.diagnostics = {
            'initial_val_loss': hist.initial_val_loss,
            'nonpositive_neurons': {str(d): n for d, n in sorted(no_positivas.items())},
            'dropped_neurons': {str(d): v for d, v in sorted(hist.dropped_neurons.items())},
            'dropped_subset_of_nonpositive': mascaras_ok if not cfg.recompute_every else None,
            'recomputed_epochs': hist.recomputed_epochs,
        }

        # Ganancia JSTL → JSTL+DGD frente a neuronas descartadas
        if self._cmc_jstl is None:
            self._cmc_jstl = self.evaluar(model, DomainGuidedDropout.uniform(StandardDropout()), self._evaluables())
        filas = []
        for d in self._evaluables():
            antes, despues = self._cmc_jstl[d][0], report.cmc[d][0]
            filas.append({'domain_id': d, 'name': self.data.names.get(d), 'identities': self.data.train.domain_classes[d],
                          'nonpositive_neurons': no_positivas.get(d, 0), 'top1_jstl': _r(antes),
                          'top1_jstl_dgd': _r(despues), 'gain': _r(despues - antes)})
        report.impact_reference.append(self.run.guardar_csv(
            'curves', 'gain_vs_dropped.csv', filas,
            ['domain_id', 'name', 'identities', 'nonpositive_neurons', 'top1_jstl', 'top1_jstl_dgd', 'gain']))
        return report

    def _etapa_ft(self, stage: Stage) -> StageReport:
        origen = Stage.JSTL if stage == Stage.FT_JSTL else Stage.JSTL_DGD
        model, head = self._modelo(origen)
        report = StageReport(stage)
        temperaturas = {}
        for d in self._ft_domains():
            cfg = self.config.stage_config(stage, self.seed, target_domain=d)
            impacto = None
            if cfg.dropout.get('kind') in ('deterministic_dgd', 'stochastic_dgd'):
                # Impacto del dominio objetivo recalculado sobre el modelo de partida
                idx = self.data.train.domain_index[d]
                impacto = average_impact(model, head, self.data.train.features[idx],
                                         self.data.train.merged_labels[idx] - 1, d,
                                         cfg.impact_method, self.jobs)
                report.impact_reference.append(self.run.relativa(save_impact_report(
                    self.run.ruta('impact', f"{origen.value}_domain_{d}_{cfg.impact_method}.json"), impacto)))

            nuevo, nueva, hist = finetune_on_domain(model, head, self.data.train, impacto, cfg, self.data.val,
                                                    mostrar_progreso=self.mostrar_progreso)
            report.cmc.update(self.evaluar(nuevo, hist.dropout, [d]))
            report.per_domain_loss[d] = {'train': hist.train_loss, 'val': hist.val_loss}
            report.checkpoints.append(self.run.guardar_checkpoint(
                f"{stage.value}_domain_{d}", nuevo, {'domain': nueva}, self._metadata(stage, target_domain=d)))

            politica = hist.dropout.policy_for(d)
            temperaturas[str(d)] = {'kind': politica.kind,
                                    'temperature': getattr(politica, 'temperature', None)}
            if isinstance(politica, StochasticDGD):
                curva = cumulative_keep_histogram(politica.scores, politica.temperature)
                report.impact_reference.append(self.run.guardar_csv(
                    'curves', f"keep_histogram_domain_{d}.csv",
                    [{'threshold': repr(u), 'count': c} for u, c in curva], ['threshold', 'count']))
        report.diagnostics = {'policies': temperaturas}
        return report

    # ------------------------------------------------------------ ejecución

    def _persistir(self, report: StageReport) -> str:
        stage = Stage(report.stage)
        ruta = self.run.guardar_json('reports', f"{stage.value}.json", report.to_dict())
        for d, curva in sorted(report.cmc.items()):
            self.run.guardar_csv('curves', f"cmc_{stage.value}_domain_{d}.csv",
                                 [{'rank': k + 1, 'accuracy': repr(a)} for k, a in enumerate(curva)],
                                 ['rank', 'accuracy'])
        self.reports.append(report)
        self.timings[stage.value] = report.wall_clock
        self.estadisticas['etapas_completadas'] += 1
        self.estadisticas['checkpoints'] += len(report.checkpoints)
        self.run.guardar_csv('reports', 'summary_top1.csv', top1_table(self.reports, self._evaluables()),
                             ['method'] + [f"domain_{d}" for d in self._evaluables()])
        if self.on_stage is not None:
            self.on_stage(report, ruta)
        return ruta

    def ejecutar(self) -> List[StageReport]:
        """
        Ejecuta las etapas en orden y persiste cada una al terminar

        Returns:
            Lista de StageReport en orden de ejecución

        Raises:
            La excepción de la etapa que falle; los informes previos quedan en disco
        """
        self.estadisticas['tiempo_inicio'] = datetime.now()
        self.preparar_datos()
        pasos = {
            Stage.INDIVIDUAL: self._etapa_individual,
            Stage.JSTL: self._etapa_jstl,
            Stage.MULTITASK: self._etapa_multitask,
            Stage.JSTL_DGD: self._etapa_jstl_dgd,
            Stage.FT_JSTL: lambda: self._etapa_ft(Stage.FT_JSTL),
            Stage.FT_JSTL_DGD: lambda: self._etapa_ft(Stage.FT_JSTL_DGD),
        }
        logger.info(f"Semilla {self.seed}: etapas {', '.join(STAGE_LABELS[s] for s in self.stages)}")
        try:
            for stage in self.stages:
                inicio = time.perf_counter()
                logger.info(f"Etapa {STAGE_LABELS[stage]} (semilla {self.seed})")
                report = pasos[stage]()
                report.wall_clock = time.perf_counter() - inicio
                self._persistir(report)
                logger.info(f"Etapa {STAGE_LABELS[stage]} completada en {report.wall_clock:.1f} s")
        except Exception as e:
            self.estadisticas['errores'].append(str(e))
            logger.error(f"Falló la semilla {self.seed}; se conservan {len(self.reports)} informes: {e}")
            raise
        finally:
            self.estadisticas['tiempo_fin'] = datetime.now()
            self.run.guardar_json(None, 'timings.json', self.timings)
            huellas = {c: self.run.calcular_hash(self.run.base_path / c) for r in self.reports for c in r.checkpoints}
            self.run.guardar_json(None, 'checksums.json', huellas)
        return self.reports


def run_full_pipeline(config: ExperimentConfig, run_dir, seed: int, stages=None, jobs: int = 1,
                      mostrar_progreso: bool = False,
                      on_stage: Optional[Callable[[StageReport, str], None]] = None) -> List[StageReport]:
    """Ejecuta el pipeline completo de una semilla; ver PipelineRunner"""
    runner = PipelineRunner(config, run_dir, seed, stages, jobs, mostrar_progreso, on_stage)
    return runner.ejecutar()
