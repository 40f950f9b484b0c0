"""
Configuración e informes de las etapas del pipeline
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Union

from ..errores import ConfigurationError
from .schedules import PolyDecay, StepDecay, schedule_from_config


class Stage(str, Enum):
    INDIVIDUAL = 'individual'
    JSTL = 'jstl'
    MULTITASK = 'multitask'
    JSTL_DGD = 'jstl_dgd'
    FT_JSTL = 'ft_jstl'
    FT_JSTL_DGD = 'ft_jstl_dgd'


class Objective(str, Enum):
    SINGLE_TASK = 'single_task'
    MULTI_TASK = 'multi_task'


# Filas de la tabla de resultados, en orden
TABLE_ORDER = [Stage.INDIVIDUAL, Stage.JSTL, Stage.JSTL_DGD, Stage.FT_JSTL, Stage.FT_JSTL_DGD]
EXECUTION_ORDER = [Stage.INDIVIDUAL, Stage.JSTL, Stage.MULTITASK, Stage.JSTL_DGD, Stage.FT_JSTL, Stage.FT_JSTL_DGD]

STAGE_LABELS = {
    Stage.INDIVIDUAL: 'Individually',
    Stage.JSTL: 'JSTL',
    Stage.MULTITASK: 'MTL',
    Stage.JSTL_DGD: 'JSTL+DGD',
    Stage.FT_JSTL: 'FT-JSTL',
    Stage.FT_JSTL_DGD: 'FT-JSTL+DGD',
}

# Semillas de etapa: (seed, código, dominio) → SeedSequence
STAGE_CODES = {stage: i + 1 for i, stage in enumerate(EXECUTION_ORDER)}

_DEFAULT_DROPOUT = {
    Stage.INDIVIDUAL: {'kind': 'standard', 'rate': 0.5},
    Stage.JSTL: {'kind': 'standard', 'rate': 0.5},
    Stage.MULTITASK: {'kind': 'standard', 'rate': 0.5},
    Stage.JSTL_DGD: {'kind': 'deterministic_dgd'},
    Stage.FT_JSTL: {'kind': 'standard', 'rate': 0.5},
    Stage.FT_JSTL_DGD: {'kind': 'stochastic_dgd', 'temperature': 'auto', 'target_max_keep': 0.9},
}

_RESUMED = (Stage.JSTL_DGD, Stage.FT_JSTL, Stage.FT_JSTL_DGD)
_FINETUNE = (Stage.FT_JSTL, Stage.FT_JSTL_DGD)


@dataclass
class StageConfig:
    """Parámetros de entrenamiento de una etapa"""
    stage: Stage
    objective: Objective = Objective.SINGLE_TASK
    schedule: Union[StepDecay, PolyDecay] = field(default_factory=StepDecay)
    dropout: Dict[str, Any] = field(default_factory=lambda: {'kind': 'standard', 'rate': 0.5})
    target_domain: Optional[int] = None
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0
    early_stop_patience: int = 0
    recompute_every: int = 0
    impact_method: str = 'taylor'

    def __post_init__(self):
        self.stage = Stage(self.stage)
        self.objective = Objective(self.objective)
        errores = []
        if self.stage in _FINETUNE and self.target_domain is None:
            errores.append(f"{self.stage.value}: las etapas de fine-tuning requieren target_domain")
        if self.stage in (Stage.JSTL, Stage.JSTL_DGD, Stage.MULTITASK) and self.target_domain is not None:
            errores.append(f"{self.stage.value}: las etapas conjuntas no admiten target_domain")
        if self.epochs < 1:
            errores.append("epochs: debe ser >= 1")
        if self.batch_size < 1:
            errores.append("batch_size: debe ser >= 1")
        if not 0.0 <= self.momentum < 1.0:
            errores.append("momentum: debe estar en [0, 1)")
        if errores:
            raise ConfigurationError("StageConfig inválido", errores)

    @classmethod
    def default_for(cls, stage, overrides: Optional[Dict[str, Any]] = None, **kwargs) -> 'StageConfig':
        """
        Configuración por defecto de una etapa, con sobreescrituras

        Las etapas reanudadas usan el decaimiento polinómico desde 0.01 durante
        10 épocas; las demás el escalonado desde 0.1.
        """
        stage = Stage(stage)
        valores: Dict[str, Any] = {
            'stage': stage,
            'dropout': dict(_DEFAULT_DROPOUT[stage]),
            'objective': Objective.MULTI_TASK if stage == Stage.MULTITASK else Objective.SINGLE_TASK,
            'schedule': PolyDecay() if stage in _RESUMED else StepDecay(),
        }
        valores.update(kwargs)
        overrides = overrides or {}
        for clave, valor in overrides.items():
            if clave == 'schedule':
                valores['schedule'] = schedule_from_config(valor)
            elif clave == 'dropout':
                # Mismo tipo: se completan los parámetros por defecto
                previo = valores['dropout']
                mismo = valor.get('kind', previo['kind']) == previo['kind']
                valores['dropout'] = {**previo, **valor} if mismo else dict(valor)
            else:
                valores[clave] = valor
        if isinstance(valores['schedule'], PolyDecay) and 'epochs' not in overrides and 'epochs' not in kwargs:
            valores['epochs'] = valores['schedule'].epochs
        return cls(**valores)


@dataclass
class StageReport:
    """Resultado de una etapa"""
    stage: Stage
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    cmc: Dict[int, List[float]] = field(default_factory=dict)
    impact_reference: List[str] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    per_domain_loss: Dict[int, Dict[str, List[float]]] = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def label(self) -> str:
        return STAGE_LABELS[Stage(self.stage)]

    def top1(self, domain_id: int) -> Optional[float]:
        curva = self.cmc.get(domain_id)
        return float(curva[0]) if curva else None

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        """Diccionario serializable; sin tiempos salvo que se pidan (reproducible)"""
        doc = {
            'stage': Stage(self.stage).value,
            'label': self.label,
            'train_loss': [float(v) for v in self.train_loss],
            'val_loss': [float(v) for v in self.val_loss],
            'cmc': {str(d): [float(v) for v in curva] for d, curva in sorted(self.cmc.items())},
            'impact_reference': list(self.impact_reference),
            'checkpoints': list(self.checkpoints),
            'diagnostics': self.diagnostics,
            'per_domain_loss': {str(d): v for d, v in sorted(self.per_domain_loss.items())},
        }
        if include_timing:
            doc['wall_clock'] = self.wall_clock
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'StageReport':
        return cls(
            stage=Stage(doc['stage']),
            train_loss=list(doc.get('train_loss', [])),
            val_loss=list(doc.get('val_loss', [])),
            cmc={int(d): list(v) for d, v in doc.get('cmc', {}).items()},
            impact_reference=list(doc.get('impact_reference', [])),
            checkpoints=list(doc.get('checkpoints', [])),
            diagnostics=doc.get('diagnostics', {}),
            per_domain_loss={int(d): v for d, v in doc.get('per_domain_loss', {}).items()},
            wall_clock=float(doc.get('wall_clock', 0.0)),
        )
