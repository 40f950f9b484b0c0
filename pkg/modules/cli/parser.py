"""
Línea de órdenes del laboratorio: generate, pipeline, impact, eval, report
"""
import argparse
import logging
from typing import List, Optional, Sequence

from ..errores import ConfigurationError, ProtocolError
from .commands import cmd_eval, cmd_generate, cmd_impact, cmd_pipeline, cmd_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3


def parse_seeds(valor: str) -> List[int]:
    """'10' → semillas 0..9; '0,3,5' → esa lista"""
    try:
        if ',' in valor:
            semillas = [int(s) for s in valor.split(',') if s.strip()]
        else:
            semillas = list(range(int(valor)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"semillas inválidas: '{valor}'")
    if not semillas:
        raise argparse.ArgumentTypeError("se necesita al menos una semilla")
    return semillas


def parse_stages(valor: str) -> List[str]:
    return [s.strip() for s in valor.split(',') if s.strip()]


def build_parser(default_out: str = 'resultados') -> argparse.ArgumentParser:
    comunes = argparse.ArgumentParser(add_help=False)
    comunes.add_argument('--config', help='Documento JSON del experimento')
    comunes.add_argument('--out', default=default_out, help='Carpeta de salida')
    comunes.add_argument('--seed', type=int, default=None, help='Semilla única')
    comunes.add_argument('--seeds', type=parse_seeds, default=None,
                         help="Número de semillas (0..N-1) o lista separada por comas")
    comunes.add_argument('--jobs', type=int, default=1, help='Hilos para el cálculo de impacto')
    comunes.add_argument('--stages', type=parse_stages, default=None,
                         help='Etapas separadas por comas (individual, jstl, multitask, jstl_dgd, ...)')
    comunes.add_argument('--progress', action='store_true', help='Barras de progreso')

    parser = argparse.ArgumentParser(prog='dgd-lab', description='Domain Guided Dropout a escala de escritorio',
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('generate', parents=[comunes], help='Genera los dominios sintéticos',
                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_parser('pipeline', parents=[comunes], help='Ejecuta las etapas de entrenamiento y evaluación',
                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    impacto = sub.add_parser('impact', parents=[comunes], help='Impacto de neuronas de un checkpoint',
                             formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    impacto.add_argument('--checkpoint', required=True)
    impacto.add_argument('--dataset', required=True, help='Carpeta escrita por generate')
    impacto.add_argument('--method', choices=['exact', 'taylor', 'both'], default='taylor')

    evaluacion = sub.add_parser('eval', parents=[comunes], help='CMC de un checkpoint',
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    evaluacion.add_argument('--checkpoint', required=True)
    evaluacion.add_argument('--dataset', required=True, help='Carpeta escrita por generate')
    evaluacion.add_argument('--policy', default='none',
                            choices=['none', 'standard', 'deterministic_dgd', 'stochastic_dgd'])
    evaluacion.add_argument('--impact', nargs='+', default=None, help='Reportes de impacto por dominio')
    evaluacion.add_argument('--temperature', default='auto')
    evaluacion.add_argument('--max-rank', type=int, default=20)
    evaluacion.add_argument('--normalize', action='store_true', help='Normalización L2 de las características')

    sub.add_parser('report', parents=[comunes], help='Tabla media ± desviación y veredictos',
                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    return parser


def _requerir_config(args):
    if not args.config:
        raise ConfigurationError(f"'{args.command}' necesita --config", ["--config: falta"])


def _ejecutar(args):
    if args.command == 'generate':
        _requerir_config(args)
        cmd_generate(args.config, args.out, args.seed)
    elif args.command == 'pipeline':
        _requerir_config(args)
        semillas = args.seeds if args.seeds is not None else ([args.seed] if args.seed is not None else None)
        cmd_pipeline(args.config, args.out, semillas, args.stages, args.jobs, args.progress)
    elif args.command == 'impact':
        cmd_impact(args.checkpoint, args.dataset, args.method, args.out, args.jobs)
    elif args.command == 'eval':
        cmd_eval(args.checkpoint, args.dataset, args.policy, args.out, args.impact, args.temperature,
                 args.max_rank, args.normalize)
    elif args.command == 'report':
        cmd_report(args.out)


def main(argv: Optional[Sequence[str]] = None, default_out: str = 'resultados') -> int:
    """
    Interpreta los argumentos, ejecuta el comando y devuelve el código de salida

    Returns:
        0 éxito, 1 error de ejecución, 2 configuración inválida, 3 violación de protocolo
    """
    args = build_parser(default_out).parse_args(argv)
    try:
        _ejecutar(args)
        return EXIT_OK
    except ProtocolError as e:
        logger.error(f"Violación de protocolo: {e}")
        return EXIT_PROTOCOL
    except ConfigurationError as e:
        logger.error(f"Configuración inválida: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Ocurrió un error fatal durante la ejecución: {e}", exc_info=True)
        return EXIT_RUNTIME
