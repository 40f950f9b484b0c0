"""
Comandos de la línea de órdenes
Cada comando recibe rutas y opciones ya interpretadas, escribe sus archivos y
devuelve un resultado; los errores se propagan como excepciones del laboratorio
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..dgd import policy_from_config
from ..domain_data import build_experiment_data, dump_dataset, load_dataset, summarize_domains
from ..errores import ConfigurationError
from ..impact import (METHODS, compare_methods, cross_domain_correlation, load_impact_reports,
                      save_impact_report, write_rows_csv, write_sorted_scores_csv)
from ..nn_core import load_checkpoint
from ..pipeline import (STAGE_LABELS, TABLE_ORDER, Stage, StageReport, domain_impacts,
                        load_experiment_config, run_full_pipeline)
from ..pipeline.pipeline_runner import DOMAIN_COLUMNS
from ..reid_eval import CMCCurve, cmc, extract_features
from .manifest import RunManifest, make_run_id

logger = logging.getLogger(__name__)

# Mayoría de semillas exigida por los veredictos
MAYORIA = 0.8


def format_table(filas: List[Dict[str, Any]], columnas: List[str]) -> str:
    """Tabla de texto alineada para la consola"""
    anchos = {c: max([len(c)] + [len(str(f.get(c, ''))) for f in filas]) for c in columnas}
    lineas = ["  ".join(c.ljust(anchos[c]) for c in columnas),
              "  ".join("-" * anchos[c] for c in columnas)]
    for f in filas:
        lineas.append("  ".join(str(f.get(c, '')).ljust(anchos[c]) for c in columnas))
    return "\n".join(lineas)


def cmd_generate(config_path, out_dir, seed: Optional[int] = None) -> List[str]:
    """
    Genera los dominios de un experimento y los escribe como JSONL

    Args:
        config_path: Documento de experimento
        out_dir: Carpeta destino
        seed: Semilla (defecto: la primera del experimento)

    Returns:
        Rutas escritas: un archivo por dominio, el índice fusionado y el resumen
    """
    config = load_experiment_config(config_path)
    seed = config.seeds[0] if seed is None else int(seed)
    data = build_experiment_data(config.domain_specs(seed), config.val_fraction, seed)
    rutas = dump_dataset(data, out_dir)
    resumen = summarize_domains(data)
    rutas.append(write_rows_csv(Path(out_dir) / 'summary.csv', resumen, DOMAIN_COLUMNS))
    print(format_table(resumen, DOMAIN_COLUMNS))
    return rutas


# ---------------------------------------------------------------- resúmenes

def _top1_por_semilla(por_semilla: Dict[int, List[StageReport]]) -> List[Dict[str, Any]]:
    filas = []
    for seed in sorted(por_semilla):
        for report in por_semilla[seed]:
            for d in sorted(report.cmc):
                filas.append({'seed': seed, 'stage': Stage(report.stage).value, 'method': report.label,
                              'domain_id': d, 'top1': repr(float(report.cmc[d][0]))})
    return filas


def _media_desviacion(filas: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Media y desviación (poblacional) del top-1 por método y dominio, en el orden de la tabla"""
    grupos: Dict[tuple, List[float]] = {}
    for f in filas:
        grupos.setdefault((f['stage'], f['domain_id']), []).append(float(f['top1']))
    orden = {s.value: i for i, s in enumerate(TABLE_ORDER + [Stage.MULTITASK])}
    salida = []
    for (stage, d), valores in sorted(grupos.items(), key=lambda kv: (orden[kv[0][0]], kv[0][1])):
        salida.append({'method': STAGE_LABELS[Stage(stage)], 'domain_id': d, 'n': len(valores),
                       'mean': repr(float(np.mean(valores))), 'std': repr(float(np.std(valores))),
                       'mean_std': f"{np.mean(valores):.4f} ± {np.std(valores):.4f}"})
    return salida


def _tabla_metodos(media: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Pivot método × dominio con 'media ± desviación'"""
    filas: Dict[str, Dict[str, Any]] = {}
    for m in media:
        filas.setdefault(m['method'], {'method': m['method']})[f"domain_{m['domain_id']}"] = m['mean_std']
    return list(filas.values())


def write_seed_summaries(out_dir, por_semilla: Dict[int, List[StageReport]]) -> Dict[str, Any]:
    """Escribe el top-1 por semilla y la tabla media ± desviación"""
    out_dir = Path(out_dir)
    filas = _top1_por_semilla(por_semilla)
    media = _media_desviacion(filas)
    tabla = _tabla_metodos(media)
    dominios = sorted({f['domain_id'] for f in filas})
    write_rows_csv(out_dir / 'summary_per_seed.csv', filas, ['seed', 'stage', 'method', 'domain_id', 'top1'])
    write_rows_csv(out_dir / 'summary_mean_std.csv', media, ['method', 'domain_id', 'n', 'mean', 'std'])
    columnas = ['method'] + [f"domain_{d}" for d in dominios]
    write_rows_csv(out_dir / 'summary_table.csv', tabla, columnas)
    return {'per_seed': filas, 'mean_std': media, 'table': tabla, 'columns': columnas}


def _parse_stages(stages) -> Optional[List[Stage]]:
    if stages is None:
        return None
    validas = {s.value for s in Stage}
    desconocidas = [s for s in stages if s not in validas]
    if desconocidas:
        raise ConfigurationError("Etapas desconocidas", [f"--stages: '{s}'" for s in desconocidas])
    return [Stage(s) for s in stages]


def cmd_pipeline(config_path, out_dir, seeds: Optional[Sequence[int]] = None, stages=None, jobs: int = 1,
                 mostrar_progreso: bool = False) -> RunManifest:
    """
    Ejecuta el pipeline para cada semilla y escribe los resúmenes

    Args:
        config_path: Documento de experimento
        out_dir: Carpeta de salida; cada semilla en seed_<s>/
        seeds: Semillas (defecto: las del experimento)
        stages: Etapas a ejecutar (defecto: las del experimento)
        jobs: Hilos para el cálculo de impacto
        mostrar_progreso: Barras de progreso

    Returns:
        RunManifest final
    """
    config = load_experiment_config(config_path)
    etapas = _parse_stages(stages)
    semillas = list(config.seeds if seeds is None else seeds)
    out_dir = Path(out_dir)
    manifest = RunManifest(make_run_id(config.name, config.config_hash, semillas), config.config_hash,
                           semillas, status='running')
    manifest.save(out_dir)
    logger.info(f"Run {manifest.run_id}: {len(semillas)} semilla(s) en {out_dir}")

    por_semilla: Dict[int, List[StageReport]] = {}
    try:
        for seed in semillas:
            prefijo = f"seed_{seed}"

            def registrar(report: StageReport, ruta: str, prefijo=prefijo):
                manifest.register_stage(Stage(report.stage).value, f"{prefijo}/{ruta}",
                                        [f"{prefijo}/{c}" for c in report.checkpoints])
                manifest.save(out_dir)

            por_semilla[seed] = run_full_pipeline(config, out_dir / prefijo, seed, etapas, jobs,
                                                  mostrar_progreso, registrar)
    except Exception as e:
        manifest.status = 'failed'
        manifest.error = str(e)
        manifest.save(out_dir)
        raise

    resumen = write_seed_summaries(out_dir, por_semilla)
    manifest.status = 'completed'
    manifest.save(out_dir)
    print(format_table(resumen['table'], resumen['columns']))
    return manifest


# ---------------------------------------------------------------- impacto

def _cabeza_y_datos(heads, metadata, train):
    """Cabeza del checkpoint y conjunto en su espacio de etiquetas"""
    if 'merged' in heads and heads['merged'].num_classes == train.total_classes:
        return heads['merged'], train
    if len(heads) == 1:
        head = next(iter(heads.values()))
        destino = metadata.get('target_domain')
        if destino in train.domain_classes and train.domain_classes[destino] == head.num_classes:
            return head, train.local_view(destino)
    raise ConfigurationError("El checkpoint no corresponde al dataset",
                             [f"cabezas: {{{', '.join(f'{k}: {h.num_classes}' for k, h in heads.items())}}}",
                              f"dataset: M={train.total_classes}, dominios {train.domain_classes}"])


def _cargar(checkpoint, dataset_dir):
    model, heads, metadata = load_checkpoint(checkpoint)
    data = load_dataset(dataset_dir)
    if model.input_dim != data.train.input_dim:
        raise ConfigurationError("El checkpoint no corresponde al dataset",
                                 [f"input_dim: checkpoint {model.input_dim}, dataset {data.train.input_dim}"])
    return model, heads, metadata, data


def cmd_impact(checkpoint, dataset_dir, method: str, out_dir, jobs: int = 1) -> List[str]:
    """
    Puntuaciones de impacto por dominio de un checkpoint

    Args:
        checkpoint: Archivo de checkpoint
        dataset_dir: Carpeta escrita por generate
        method: 'exact', 'taylor' o 'both'
        out_dir: Carpeta destino
        jobs: Hilos

    Returns:
        Rutas escritas
    """
    if method not in METHODS + ('both',):
        raise ConfigurationError(f"Método de impacto desconocido: {method}", ["válidos: exact, taylor, both"])
    model, heads, metadata, data = _cargar(checkpoint, dataset_dir)
    head, conjunto = _cabeza_y_datos(heads, metadata, data.train)
    out_dir = Path(out_dir)
    metodos = METHODS if method == 'both' else (method,)

    rutas = []
    resultados = {}
    for m in metodos:
        resultados[m] = domain_impacts(model, head, conjunto, m, jobs)
        for d, scores in resultados[m].items():
            rutas.append(save_impact_report(out_dir / f"impact_domain_{d}_{m}.json", scores))
            rutas.append(write_sorted_scores_csv(out_dir / f"impact_sorted_domain_{d}_{m}.csv", scores))

    if method == 'both':
        estadisticas = []
        for d in sorted(resultados['exact']):
            exacto, taylor = resultados['exact'][d], resultados['taylor'][d]
            filas = [{'neuron': i, 'exact': repr(float(exacto.scores[i])), 'taylor': repr(float(taylor.scores[i]))}
                     for i in range(exacto.d)]
            rutas.append(write_rows_csv(out_dir / f"impact_comparison_domain_{d}.csv", filas,
                                        ['neuron', 'exact', 'taylor']))
            comparacion = compare_methods(exacto, taylor)
            estadisticas.append({'domain_id': d, **{k: None if v is None else repr(float(v))
                                                    for k, v in comparacion.items()}})
        rutas.append(write_rows_csv(out_dir / 'impact_comparison.csv', estadisticas,
                                    ['domain_id', 'pearson', 'spearman', 'mae', 'max_abs_error']))

    principal = resultados[metodos[-1]]
    dominios = sorted(principal)
    pares = []
    for i, a in enumerate(dominios):
        for b in dominios[i + 1:]:
            corr = cross_domain_correlation(principal[a], principal[b])
            pares.append({'domain_a': a, 'domain_b': b,
                          'pearson': None if corr['pearson'] is None else repr(corr['pearson']),
                          'spearman': None if corr['spearman'] is None else repr(corr['spearman'])})
    if pares:
        rutas.append(write_rows_csv(out_dir / 'impact_correlation.csv', pares,
                                    ['domain_a', 'domain_b', 'pearson', 'spearman']))
    logger.info(f"Impacto ({method}) escrito en {out_dir}: {len(rutas)} archivos")
    return rutas


# ---------------------------------------------------------------- evaluación

def cmd_eval(checkpoint, dataset_dir, policy: str, out_dir, impact_paths: Optional[Sequence[str]] = None,
             temperature='auto', max_rank: int = 20, normalize: bool = False) -> Dict[int, CMCCurve]:
    """
    CMC de un checkpoint sobre los protocolos probe/gallery del dataset

    Args:
        checkpoint: Archivo de checkpoint
        dataset_dir: Carpeta escrita por generate
        policy: Tipo de dropout de prueba (none, standard, deterministic_dgd, stochastic_dgd)
        out_dir: Carpeta destino de las curvas
        impact_paths: Reportes de impacto por dominio (variantes DGD)
        temperature: 'auto' o valor para stochastic_dgd
        max_rank: K
        normalize: Normalización L2 de las características

    Returns:
        domain_id → CMCCurve
    """
    model, _, _, data = _cargar(checkpoint, dataset_dir)
    impactos = load_impact_reports(impact_paths or [])
    out_dir = Path(out_dir)
    curvas = {}
    filas = []
    for d in sorted(data.protocols):
        protocolo = data.protocols[d]
        if not protocolo.probes:
            continue
        politica = policy_from_config({'kind': policy, 'temperature': temperature}, impactos.get(d))
        probes = extract_features(model, politica, protocolo.probes, normalize)
        gallery = extract_features(model, politica, protocolo.gallery, normalize)
        curva = cmc(probes, gallery, min(max_rank, gallery.rows))
        write_rows_csv(out_dir / f"cmc_domain_{d}.csv", curva.to_rows(), ['rank', 'accuracy'])
        curvas[d] = curva
        filas.append({'domain_id': d, 'name': protocolo.name, 'probes': curva.num_probes,
                      'top1': f"{curva.top(1):.4f}"})
    write_rows_csv(out_dir / 'eval_summary.csv', filas, ['domain_id', 'name', 'probes', 'top1'])
    print(format_table(filas, ['domain_id', 'name', 'probes', 'top1']))
    return curvas


# ---------------------------------------------------------------- informe

def _leer_semillas(out_dir: Path):
    por_semilla, dominios = {}, {}
    for carpeta in sorted(out_dir.glob('seed_*'), key=lambda p: int(p.name.split('_', 1)[1])):
        seed = int(carpeta.name.split('_', 1)[1])
        reports = []
        for stage in TABLE_ORDER + [Stage.MULTITASK]:
            ruta = carpeta / 'reports' / f"{stage.value}.json"
            if ruta.exists():
                with open(ruta, 'r', encoding='utf-8') as f:
                    reports.append(StageReport.from_dict(json.load(f)))
        ruta_dominios = carpeta / 'reports' / 'domains.json'
        if ruta_dominios.exists():
            with open(ruta_dominios, 'r', encoding='utf-8') as f:
                dominios[seed] = json.load(f)
        por_semilla[seed] = reports
    return por_semilla, dominios


def _veredicto(resultados: List[Optional[bool]]) -> Dict[str, Any]:
    validos = [r for r in resultados if r is not None]
    if not validos:
        return {'seeds_passing': 0, 'seeds_total': 0, 'passed': None}
    aprobadas = sum(validos)
    return {'seeds_passing': aprobadas, 'seeds_total': len(validos),
            'passed': aprobadas >= math.ceil(MAYORIA * len(validos))}


def acceptance_verdicts(por_semilla: Dict[int, List[StageReport]],
                        dominios: Dict[int, List[Dict[str, Any]]]) -> Dict[str, Any]:
    """
    Veredictos por mayoría de semillas sobre el dominio evaluable más pequeño

    - jstl_beats_individual: JSTL > Individually
    - jstl_dgd_not_worse: JSTL+DGD ≥ JSTL
    - ft_dgd_not_worse: FT-JSTL+DGD ≥ FT-JSTL
    - smaller_domains_more_nonpositive: el dominio más pequeño tiene más neuronas
      con impacto ≤ 0 que el más grande
    """
    comparaciones = {
        'jstl_beats_individual': (Stage.JSTL, Stage.INDIVIDUAL, lambda a, b: a > b),
        'jstl_dgd_not_worse': (Stage.JSTL_DGD, Stage.JSTL, lambda a, b: a >= b),
        'ft_dgd_not_worse': (Stage.FT_JSTL_DGD, Stage.FT_JSTL, lambda a, b: a >= b),
    }
    resultados: Dict[str, List[Optional[bool]]] = {k: [] for k in comparaciones}
    resultados['smaller_domains_more_nonpositive'] = []
    for seed, reports in sorted(por_semilla.items()):
        filas = dominios.get(seed, [])
        evaluables = [f for f in filas if f['probes'] > 0]
        if not evaluables:
            continue
        pequeño = min(evaluables, key=lambda f: (f['identities'], f['domain_id']))['domain_id']
        por_etapa = {Stage(r.stage): r for r in reports}
        for clave, (a, b, comparar) in comparaciones.items():
            ra, rb = por_etapa.get(a), por_etapa.get(b)
            if ra is None or rb is None or ra.top1(pequeño) is None or rb.top1(pequeño) is None:
                resultados[clave].append(None)
            else:
                resultados[clave].append(bool(comparar(ra.top1(pequeño), rb.top1(pequeño))))
        dgd = por_etapa.get(Stage.JSTL_DGD)
        conteos = (dgd.diagnostics.get('nonpositive_neurons') if dgd else None) or {}
        if len(filas) >= 2 and conteos:
            menor = min(filas, key=lambda f: (f['identities'], f['domain_id']))['domain_id']
            mayor = max(filas, key=lambda f: (f['identities'], -f['domain_id']))['domain_id']
            resultados['smaller_domains_more_nonpositive'].append(
                conteos.get(str(menor), 0) > conteos.get(str(mayor), 0))
        else:
            resultados['smaller_domains_more_nonpositive'].append(None)
    return {clave: _veredicto(v) for clave, v in resultados.items()}


def cmd_report(out_dir) -> Dict[str, Any]:
    """
    Recalcula desde los archivos por semilla la tabla media ± desviación y
    los veredictos de aceptación

    Returns:
        {'table', 'verdicts'}
    """
    out_dir = Path(out_dir)
    por_semilla, dominios = _leer_semillas(out_dir)
    if not por_semilla:
        raise ConfigurationError(f"No hay resultados por semilla en {out_dir}",
                                 ["se esperaban carpetas seed_<s>/reports"])
    resumen = write_seed_summaries(out_dir, por_semilla)
    veredictos = acceptance_verdicts(por_semilla, dominios)
    with open(out_dir / 'acceptance.json', 'w', encoding='utf-8') as f:
        json.dump(veredictos, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    print(format_table(resumen['table'], resumen['columns']))
    for clave, v in veredictos.items():
        estado = {True: 'OK', False: 'FALLA', None: 'sin datos'}[v['passed']]
        print(f"{clave}: {v['seeds_passing']}/{v['seeds_total']} semillas ({estado})")
    return {'table': resumen['table'], 'verdicts': veredictos}
