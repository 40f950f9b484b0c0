"""
Modelo del extractor de características g(·) y cabeza softmax f
Capas densas afines con ReLU o identidad
"""
import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ..errores import ArgumentError, DimensionError
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

ACTIVACIONES = ('relu', 'identity')


@dataclass
class DenseLayer:
    """Capa afín: weights [out×in], bias [out]"""
    weights: Tensor
    bias: Tensor
    activation: str = 'relu'

    def __post_init__(self):
        self.weights = as_tensor(self.weights, nombre="weights")
        self.bias = as_tensor(self.bias, nombre="bias")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"Capa inconsistente: weights {self.weights.shape}, bias {self.bias.shape}")
        if self.activation not in ACTIVACIONES:
            raise ArgumentError(f"Activación desconocida: {self.activation}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class EncoderModel:
    """Pila de capas densas; la salida de la última capa es g(x) ∈ R^d"""
    layers: List[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ArgumentError("El codificador necesita al menos una capa")
        for k in range(len(self.layers) - 1):
            if self.layers[k].out_dim != self.layers[k + 1].in_dim:
                raise DimensionError(
                    f"Capas {k} y {k + 1} no encadenan: {self.layers[k].out_dim} != {self.layers[k + 1].in_dim}")

    @classmethod
    def initialize(cls, input_dim: int, hidden_dims: Sequence[int], feature_dim: int,
                   rng: np.random.Generator, feature_activation: str = 'relu') -> 'EncoderModel':
        """
        Crea un codificador con inicialización He

        Args:
            input_dim: Dimensión de la entrada x
            hidden_dims: Anchos de las capas ocultas (ReLU)
            feature_dim: d, ancho de la capa de características
            rng: Generador con semilla
            feature_activation: Activación de la capa de características

        Returns:
            EncoderModel inicializado
        """
        dims = [input_dim] + list(hidden_dims) + [feature_dim]
        layers = []
        for k in range(len(dims) - 1):
            fan_in, fan_out = dims[k], dims[k + 1]
            activation = 'relu' if k < len(dims) - 2 else feature_activation
            weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            layers.append(DenseLayer(weights, np.zeros(fan_out), activation))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> Dict[str, Tensor]:
        """Parámetros con nombres estables (encoder.<k>.weights / .bias)"""
        params = {}
        for k, layer in enumerate(self.layers):
            params[f"encoder.{k}.weights"] = layer.weights
            params[f"encoder.{k}.bias"] = layer.bias
        return params

    def copy(self) -> 'EncoderModel':
        return copy.deepcopy(self)


@dataclass
class ClassifierHead:
    """Clasificador lineal-softmax: weights [M×d], bias [M]"""
    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        self.weights = as_tensor(self.weights, nombre="head.weights")
        self.bias = as_tensor(self.bias, nombre="head.bias")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"Cabeza inconsistente: weights {self.weights.shape}, bias {self.bias.shape}")
        if self.num_classes < 2:
            raise ArgumentError(f"La cabeza necesita M >= 2 clases, recibió {self.num_classes}")

    @classmethod
    def initialize(cls, num_classes: int, feature_dim: int, rng: np.random.Generator) -> 'ClassifierHead':
        """Cabeza con pesos Xavier y sesgo cero"""
        escala = np.sqrt(1.0 / feature_dim)
        return cls(rng.normal(0.0, escala, size=(num_classes, feature_dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def parameters(self, prefijo: str = "head") -> Dict[str, Tensor]:
        return {f"{prefijo}.weights": self.weights, f"{prefijo}.bias": self.bias}

    def copy(self) -> 'ClassifierHead':
        return copy.deepcopy(self)


def _activar(z: Tensor, activation: str) -> Tensor:
    return np.maximum(z, 0.0) if activation == 'relu' else z


def forward_batch(model: EncoderModel, X: Tensor, gate: Optional[Tensor] = None):
    """
    Propagación hacia adelante de un lote por el codificador

    Args:
        model: Codificador
        X: Entradas [B×input_dim]
        gate: Compuerta multiplicativa sobre g (máscara × escala), [B×d] o [d]

    Returns:
        Tupla (features enmascaradas [B×d], cache para backward_encoder)
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionError(f"Entrada con forma {X.shape}, se esperaba [B×{model.input_dim}]")
    activaciones = [X]
    preactivaciones = []
    a = X
    for layer in model.layers:
        z = a @ layer.weights.T + layer.bias
        a = _activar(z, layer.activation)
        preactivaciones.append(z)
        activaciones.append(a)
    g = a
    if gate is not None:
        gate = np.asarray(gate, dtype=np.float64)
        if gate.shape[-1] != model.feature_dim:
            raise DimensionError(f"Máscara de longitud {gate.shape[-1]}, se esperaba d={model.feature_dim}")
        g = g * gate
    cache = {'activaciones': activaciones, 'preactivaciones': preactivaciones, 'gate': gate}
    return g, cache


def encode(model: EncoderModel, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
    """
    Calcula g(x), multiplicado elemento a elemento por la máscara si se da

    Args:
        model: Codificador
        x: Entrada [input_dim]
        mask: Máscara [d] con entradas en [0, 1] (opcional)

    Returns:
        Vector de características [d]
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DimensionError(f"Entrada con forma {x.shape}, se esperaba ({model.input_dim},)")
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (model.feature_dim,):
            raise DimensionError(f"Máscara con forma {mask.shape}, se esperaba ({model.feature_dim},)")
        if np.any(mask < 0.0) or np.any(mask > 1.0):
            raise ArgumentError("Las entradas de la máscara deben estar en [0, 1]")
    g, _ = forward_batch(model, x[None, :], mask)
    return g[0]


def softmax_rows(logits: Tensor) -> Tensor:
    """Softmax por filas con resta del máximo"""
    desplazados = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(desplazados)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def cross_entropy_rows(logits: Tensor, labels: Tensor) -> Tensor:
    """Entropía cruzada por fila: logsumexp(z) - z[label]"""
    filas = np.arange(logits.shape[0])
    return logsumexp(logits, axis=-1) - logits[filas, labels]


def loss_and_probs(head: ClassifierHead, g: Tensor, label: int):
    """
    Pérdida softmax (entropía cruzada) y probabilidades para una muestra

    Args:
        head: Cabeza lineal-softmax
        g: Características [d]
        label: Índice de clase en [0, M)

    Returns:
        Tupla (loss, probs [M])
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (head.feature_dim,):
        raise DimensionError(f"Características con forma {g.shape}, se esperaba ({head.feature_dim},)")
    if not 0 <= int(label) < head.num_classes:
        raise ArgumentError(f"Etiqueta {label} fuera de rango [0, {head.num_classes})")
    logits = (head.weights @ g + head.bias)[None, :]
    loss = float(cross_entropy_rows(logits, np.array([int(label)]))[0])
    return loss, softmax_rows(logits)[0]
