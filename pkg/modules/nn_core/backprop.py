"""
Gradientes en modo reverso del codificador y la cabeza softmax
Incluye la segunda derivada exacta de la pérdida respecto a cada g_i
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errores import ArgumentError, DimensionError
from .model import (ClassifierHead, EncoderModel, cross_entropy_rows,
                    forward_batch, softmax_rows)
from .tensor import Tensor


@dataclass
class GradientSet:
    """Gradientes por parámetro más ∂L/∂g y ∂²L/∂g² de la capa de características"""
    params: Dict[str, Tensor] = field(default_factory=dict)
    grad_features: Optional[Tensor] = None
    diag_hessian_features: Optional[Tensor] = None
    loss: float = 0.0

    def __getitem__(self, nombre: str) -> Tensor:
        return self.params[nombre]


def head_forward(head: ClassifierHead, H: Tensor, labels: Tensor):
    """
    Pérdidas y probabilidades por fila de la cabeza

    Returns:
        Tupla (pérdidas [B], probs [B×M])
    """
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= head.num_classes):
        raise ArgumentError(f"Etiquetas fuera de rango [0, {head.num_classes})")
    logits = H @ head.weights.T + head.bias
    return cross_entropy_rows(logits, labels), softmax_rows(logits)


def head_backward(head: ClassifierHead, H: Tensor, labels: Tensor, escala: float):
    """
    Gradientes de la cabeza para escala·Σ CE(fila)

    Args:
        head: Cabeza
        H: Características que entran a la cabeza [B×d]
        labels: Índices de clase [B]
        escala: Factor de la suma (1/B para la media del lote)

    Returns:
        Diccionario con 'losses', 'probs', 'dW', 'db', 'dH' (gradiente por fila, ya escalado)
    """
    losses, probs = head_forward(head, H, labels)
    delta = probs.copy()
    delta[np.arange(H.shape[0]), labels] -= 1.0
    delta *= escala
    return {
        'losses': losses,
        'probs': probs,
        'dW': delta.T @ H,
        'db': delta.sum(axis=0),
        'dH': delta @ head.weights,
    }


def diag_hessian_rows(head: ClassifierHead, probs: Tensor) -> Tensor:
    """∂²L/∂g_i² = Σ_k W_ki² p_k − (Σ_k W_ki p_k)², por fila"""
    media = probs @ head.weights
    return np.maximum(probs @ (head.weights ** 2) - media ** 2, 0.0)


def backward_encoder(model: EncoderModel, cache: dict, dG: Tensor) -> Dict[str, Tensor]:
    """
    Retropropaga ∂L/∂(g enmascarada) por el codificador

    Args:
        model: Codificador usado en forward_batch
        cache: Cache devuelto por forward_batch
        dG: Gradiente respecto a las características enmascaradas [B×d]

    Returns:
        Gradientes por nombre de parámetro
    """
    gate = cache['gate']
    da = dG * gate if gate is not None else dG
    grads = {}
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        z = cache['preactivaciones'][k]
        dz = da * (z > 0.0) if layer.activation == 'relu' else da
        grads[f"encoder.{k}.weights"] = dz.T @ cache['activaciones'][k]
        grads[f"encoder.{k}.bias"] = dz.sum(axis=0)
        if k > 0:
            da = dz @ layer.weights
    return grads


def backward(model: EncoderModel, head: ClassifierHead, x: Tensor, label: int,
             mask: Optional[Tensor] = None) -> GradientSet:
    """
    Gradientes exactos de la pérdida de una muestra

    Args:
        model: Codificador
        head: Cabeza softmax
        x: Entrada [input_dim]
        label: Índice de clase
        mask: Máscara [d] que compuerta el paso hacia adelante y el gradiente

    Returns:
        GradientSet con gradientes de todos los parámetros, grad_features y
        diag_hessian_features
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DimensionError(f"Entrada con forma {x.shape}, se esperaba ({model.input_dim},)")
    if head.feature_dim != model.feature_dim:
        raise DimensionError(f"Cabeza con d={head.feature_dim} y codificador con d={model.feature_dim}")
    H, cache = forward_batch(model, x[None, :], mask)
    salida = head_backward(head, H, np.array([int(label)]), 1.0)

    gate = cache['gate']
    grad_features = salida['dH'][0] * gate if gate is not None else salida['dH'][0]
    hess = diag_hessian_rows(head, salida['probs'])[0]
    if gate is not None:
        hess = hess * gate ** 2

    params = backward_encoder(model, cache, salida['dH'])
    params["head.weights"] = salida['dW']
    params["head.bias"] = salida['db']
    return GradientSet(params=params, grad_features=grad_features,
                       diag_hessian_features=hess, loss=float(salida['losses'][0]))
