"""
Dropout estándar y Domain Guided Dropout
Máscaras deterministas (s_i > 0) y estocásticas (Bernoulli con sigmoid(s_i/T)),
con su semántica de entrenamiento y de prueba
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit, logit

from ..errores import ArgumentError, ConfigurationError
from ..impact import ImpactScores

logger = logging.getLogger(__name__)

Mask = np.ndarray


def _vector(scores) -> np.ndarray:
    valores = scores.scores if isinstance(scores, ImpactScores) else np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(valores)):
        raise ArgumentError("Las puntuaciones de impacto deben ser finitas")
    return valores


def deterministic_mask(scores) -> Mask:
    """m_i = 1 si s_i > 0, si no 0"""
    return (_vector(scores) > 0.0).astype(np.float64)


def keep_probability(s, T: float):
    """
    Probabilidad de conservar una neurona: 1 / (1 + e^(−s/T))

    Args:
        s: Puntuación o vector de puntuaciones
        T: Temperatura (> 0)

    Returns:
        Probabilidad (mismo tipo/forma que s)
    """
    if not T > 0:
        raise ArgumentError(f"La temperatura debe ser > 0, recibió {T}")
    p = expit(np.asarray(s, dtype=np.float64) / T)
    return float(p) if np.ndim(p) == 0 else p


def stochastic_mask(scores, T: float, rng: np.random.Generator, n: Optional[int] = None) -> Mask:
    """
    Máscara binaria con m_i ~ Bernoulli(keep_probability(s_i, T))

    Args:
        scores: Puntuaciones [d]
        T: Temperatura
        rng: Generador con semilla
        n: Número de máscaras independientes (None = una sola, forma [d])

    Returns:
        Máscara [d] o [n×d]
    """
    p = keep_probability(_vector(scores), T)
    forma = p.shape if n is None else (n,) + p.shape
    return (rng.random(forma) < p).astype(np.float64)


def select_temperature(scores, target_max_keep: float = 0.9) -> float:
    """
    Temperatura que da a la neurona más efectiva probabilidad target_max_keep

    T = max(s) / ln(target / (1 − target))
    """
    if not 0.5 < target_max_keep < 1.0:
        raise ArgumentError(f"target_max_keep debe estar en (0.5, 1), recibió {target_max_keep}")
    maximo = float(np.max(_vector(scores)))
    if maximo <= 0.0:
        raise ConfigurationError(
            "Ninguna neurona tiene impacto positivo: no hay temperatura válida; "
            "use DGD determinista o dropout estándar")
    return maximo / float(logit(target_max_keep))


def cumulative_keep_histogram(scores, T: float, thresholds: Optional[np.ndarray] = None) -> List[Tuple[float, int]]:
    """
    Curva acumulada: número de neuronas con probabilidad de conservación ≤ umbral

    Args:
        scores: Puntuaciones [d]
        T: Temperatura
        thresholds: Umbrales en [0, 1] (defecto: 101 puntos equiespaciados)

    Returns:
        Lista de (umbral, conteo), no decreciente
    """
    p = np.sort(np.atleast_1d(keep_probability(_vector(scores), T)))
    umbrales = np.linspace(0.0, 1.0, 101) if thresholds is None else np.sort(np.asarray(thresholds, dtype=np.float64))
    conteos = np.searchsorted(p, umbrales, side='right')
    return [(float(u), int(c)) for u, c in zip(umbrales, conteos)]


@dataclass
class NoDropout:
    """Sin regularización: máscara de unos en entrenamiento y prueba"""
    kind: str = 'none'

    def train_mask(self, n: int, d: int, rng: np.random.Generator) -> Tuple[Mask, float]:
        return np.ones((n, d)), 1.0

    def test_gate(self, d: int) -> np.ndarray:
        return np.ones(d)


@dataclass
class StandardDropout:
    """Dropout clásico invertido: escala 1/(1−rate) al entrenar, identidad al probar"""
    rate: float = 0.5
    kind: str = 'standard'

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise ArgumentError(f"rate debe estar en (0, 1), recibió {self.rate}")

    def train_mask(self, n: int, d: int, rng: np.random.Generator) -> Tuple[Mask, float]:
        return (rng.random((n, d)) >= self.rate).astype(np.float64), 1.0 / (1.0 - self.rate)

    def test_gate(self, d: int) -> np.ndarray:
        return np.ones(d)


@dataclass
class DeterministicDGD:
    """Descarta siempre las neuronas con impacto ≤ 0 del dominio"""
    scores: ImpactScores
    kind: str = 'deterministic_dgd'

    def train_mask(self, n: int, d: int, rng: np.random.Generator) -> Tuple[Mask, float]:
        _comprobar_d(self.scores, d)
        return np.tile(deterministic_mask(self.scores), (n, 1)), 1.0

    def test_gate(self, d: int) -> np.ndarray:
        _comprobar_d(self.scores, d)
        return deterministic_mask(self.scores)


@dataclass
class StochasticDGD:
    """Bernoulli con sigmoid(s/T) al entrenar; escala por la probabilidad al probar"""
    scores: ImpactScores
    temperature: float
    kind: str = 'stochastic_dgd'

    def __post_init__(self):
        if not self.temperature > 0:
            raise ArgumentError(f"La temperatura debe ser > 0, recibió {self.temperature}")

    def train_mask(self, n: int, d: int, rng: np.random.Generator) -> Tuple[Mask, float]:
        _comprobar_d(self.scores, d)
        return stochastic_mask(self.scores, self.temperature, rng, n), 1.0

    def test_gate(self, d: int) -> np.ndarray:
        _comprobar_d(self.scores, d)
        return keep_probability(self.scores.scores, self.temperature)


DropoutPolicy = Union[NoDropout, StandardDropout, DeterministicDGD, StochasticDGD]


def _comprobar_d(scores: ImpactScores, d: int):
    if scores.d != d:
        raise ConfigurationError(f"Puntuaciones de impacto con d={scores.d} para una capa con d={d}")


def apply_test_scaling(policy: DropoutPolicy, features: np.ndarray) -> np.ndarray:
    """
    Semántica de prueba de la política sobre g(x) ([d] o [N×d])

    Standard → identidad; DeterministicDGD → cero donde s_i ≤ 0;
    StochasticDGD → g_i · sigmoid(s_i/T)
    """
    features = np.asarray(features, dtype=np.float64)
    return features * policy.test_gate(features.shape[-1])


class DomainGuidedDropout:
    """Política por dominio: cada muestra recibe la máscara de su propio dominio"""

    def __init__(self, policies: Dict[int, DropoutPolicy], default: Optional[DropoutPolicy] = None):
        """
        Args:
            policies: domain_id → política
            default: Política para dominios sin entrada (None = error)
        """
        self.policies = dict(policies)
        self.default = default

    @classmethod
    def uniform(cls, policy: DropoutPolicy) -> 'DomainGuidedDropout':
        return cls({}, default=policy)

    def policy_for(self, domain_id: int) -> DropoutPolicy:
        if domain_id in self.policies:
            return self.policies[domain_id]
        if self.default is None:
            raise ConfigurationError(f"No hay política de dropout para el dominio {domain_id}")
        return self.default

    def train_gate(self, domain_ids: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
        """
        Compuerta de entrenamiento (máscara × escala), una máscara por muestra

        Args:
            domain_ids: Dominio de cada muestra del lote [B]
            d: Ancho de la capa de características
            rng: Generador de la etapa

        Returns:
            Compuerta [B×d]
        """
        domain_ids = np.asarray(domain_ids)
        gate = np.ones((domain_ids.shape[0], d))
        for dominio in np.unique(domain_ids):
            idx = np.flatnonzero(domain_ids == dominio)
            mascara, escala = self.policy_for(int(dominio)).train_mask(len(idx), d, rng)
            gate[idx] = mascara * escala
        return gate

    def test_gate(self, domain_id: int, d: int) -> np.ndarray:
        return self.policy_for(domain_id).test_gate(d)


def policy_from_config(cfg: Optional[Dict[str, Any]], scores: Optional[ImpactScores] = None) -> DropoutPolicy:
    """
    Construye una política desde la configuración del experimento

    Args:
        cfg: {"kind": "none|standard|deterministic_dgd|stochastic_dgd", "rate",
              "temperature": "auto"|<real>, "target_max_keep"}
        scores: Impactos del dominio (requeridos por las variantes DGD)

    Returns:
        Política de dropout
    """
    cfg = cfg or {}
    kind = cfg.get('kind', 'standard')
    if kind == 'none':
        return NoDropout()
    if kind == 'standard':
        return StandardDropout(float(cfg.get('rate', 0.5)))
    if kind not in ('deterministic_dgd', 'stochastic_dgd'):
        raise ConfigurationError(f"Tipo de dropout desconocido: {kind}")
    if scores is None:
        raise ConfigurationError(f"El dropout '{kind}' necesita puntuaciones de impacto")
    if kind == 'deterministic_dgd':
        return DeterministicDGD(scores)
    temperatura = cfg.get('temperature', 'auto')
    if temperatura == 'auto':
        temperatura = select_temperature(scores, float(cfg.get('target_max_keep', 0.9)))
    return StochasticDGD(scores, float(temperatura))
