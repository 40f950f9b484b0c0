"""
Generador de dominios sintéticos
Cada dominio tiene sus identidades, un sesgo propio (desplazamiento + distorsión
lineal) y ruido; todos comparten el subespacio latente de identidad del "mundo",
las direcciones de perturbación por muestra y un banco de atributos del que cada
dominio usa sólo algunos para distinguir identidades
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errores import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)

# Estadísticas de protocolo de los conjuntos de referencia:
# identidades totales, imágenes de entrenamiento/validación, IDs de probe y de galería.
PROTOCOL_PROFILES: Dict[str, Dict[str, int]] = {
    'CUHK03': {'identities': 1467, 'train_images': 21012, 'val_images': 5252, 'probe_ids': 100, 'gallery_ids': 100},
    'CUHK01': {'identities': 971, 'train_images': 1552, 'val_images': 388, 'probe_ids': 485, 'gallery_ids': 485},
    'PRID': {'identities': 385, 'train_images': 2997, 'val_images': 749, 'probe_ids': 100, 'gallery_ids': 649},
    'VIPeR': {'identities': 632, 'train_images': 506, 'val_images': 126, 'probe_ids': 316, 'gallery_ids': 316},
    '3DPeS': {'identities': 193, 'train_images': 420, 'val_images': 104, 'probe_ids': 96, 'gallery_ids': 96},
    'i-LIDS': {'identities': 119, 'train_images': 194, 'val_images': 48, 'probe_ids': 60, 'gallery_ids': 60},
    'Shinpuhkan': {'identities': 24, 'train_images': 18004, 'val_images': 4500, 'probe_ids': 0, 'gallery_ids': 0},
}


@dataclass
class DomainSpec:
    """Parámetros de un dominio sintético"""
    domain_id: int
    num_identities: int
    samples_per_identity: int
    input_dim: int
    bias_strength: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    name: Optional[str] = None
    test_identities: int = 0
    test_samples_per_identity: int = 2
    gallery_distractors: int = 0
    latent_dim: Optional[int] = None
    world_seed: int = 0
    nuisance_dim: int = 0
    nuisance_sigma: float = 0.0
    attribute_dim: int = 0
    private_attributes: int = 0
    attribute_sigma: float = 0.0

    def __post_init__(self):
        errores = self.validar()
        if errores:
            raise ConfigurationError(f"DomainSpec inválido (dominio {self.domain_id})", errores)
        if self.name is None:
            self.name = f"domain_{self.domain_id}"

    def validar(self) -> List[str]:
        """Devuelve la lista de problemas del spec (vacía si es válido)"""
        errores = []
        if self.num_identities < 2:
            errores.append(f"num_identities: debe ser >= 2 (recibió {self.num_identities})")
        if self.samples_per_identity < 2:
            errores.append(f"samples_per_identity: debe ser >= 2 (recibió {self.samples_per_identity})")
        if self.input_dim < 1:
            errores.append(f"input_dim: debe ser >= 1 (recibió {self.input_dim})")
        if self.bias_strength < 0:
            errores.append("bias_strength: debe ser >= 0")
        if self.noise_sigma < 0:
            errores.append("noise_sigma: debe ser >= 0")
        if self.test_identities < 0 or self.gallery_distractors < 0:
            errores.append("test_identities/gallery_distractors: deben ser >= 0")
        if self.test_identities > 0 and self.test_samples_per_identity < 2:
            errores.append("test_samples_per_identity: debe ser >= 2 (una galería + un probe)")
        if self.latent_dim is not None and not 1 <= self.latent_dim <= self.input_dim:
            errores.append(f"latent_dim: debe estar en [1, input_dim] (recibió {self.latent_dim})")
        if min(self.nuisance_dim, self.attribute_dim, self.private_attributes) < 0:
            errores.append("nuisance_dim/attribute_dim/private_attributes: deben ser >= 0")
        elif self.effective_latent_dim + self.nuisance_dim + self.attribute_dim > self.input_dim:
            errores.append("latent_dim + nuisance_dim + attribute_dim: no pueden superar input_dim")
        if self.private_attributes > max(self.attribute_dim, 0):
            errores.append(f"private_attributes: debe ser <= attribute_dim (recibió {self.private_attributes})")
        if self.nuisance_sigma < 0 or self.attribute_sigma < 0:
            errores.append("nuisance_sigma/attribute_sigma: deben ser >= 0")
        return errores

    @property
    def effective_latent_dim(self) -> int:
        return self.latent_dim or self.input_dim


@dataclass(eq=False)
class Sample:
    """Una muestra: entrada cruda x con etiquetas local y fusionada (1-based)"""
    domain_id: int
    local_label: int
    features: np.ndarray
    merged_label: Optional[int] = None


def _flujos(spec: DomainSpec) -> Dict[str, np.random.Generator]:
    """Generadores independientes por propósito, derivados de la semilla del dominio"""
    hijos = np.random.SeedSequence(spec.seed).spawn(4)
    return {
        'prototipos': np.random.default_rng(hijos[0]),
        'sesgo': np.random.default_rng(hijos[1]),
        'ruido': np.random.default_rng(hijos[2]),
        'prueba': np.random.default_rng(hijos[3]),
    }


@dataclass
class WorldBases:
    """Subespacios ortogonales del mundo: identidad, perturbación y atributos"""
    identity: np.ndarray
    nuisance: np.ndarray
    attributes: np.ndarray


def world_bases(input_dim: int, latent_dim: int, world_seed: int,
                nuisance_dim: int = 0, attribute_dim: int = 0) -> WorldBases:
    """
    Bases ortonormales compartidas por todos los dominios

    Las columnas de identidad no dependen de nuisance_dim ni de attribute_dim.

    Args:
        input_dim: Dimensión de entrada
        latent_dim: Dimensión del subespacio de identidad
        world_seed: Semilla del mundo
        nuisance_dim: Direcciones de perturbación por muestra (pose, iluminación)
        attribute_dim: Direcciones del banco de atributos

    Returns:
        WorldBases con matrices [input_dim × dim] mutuamente ortogonales
    """
    rng = np.random.default_rng(world_seed)
    bloque = rng.normal(size=(input_dim, latent_dim))
    extra = nuisance_dim + attribute_dim
    if extra:
        bloque = np.hstack([bloque, rng.normal(size=(input_dim, extra))])
    q, r = np.linalg.qr(bloque)
    # Fijar signos para que la base sea única
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    corte = latent_dim + nuisance_dim
    return WorldBases(q[:, :latent_dim], q[:, latent_dim:corte], q[:, corte:corte + attribute_dim])


def world_basis(input_dim: int, latent_dim: int, world_seed: int) -> np.ndarray:
    """Base ortonormal [input_dim × latent_dim] del subespacio de identidad compartido"""
    return world_bases(input_dim, latent_dim, world_seed).identity


def _bases(spec: DomainSpec) -> WorldBases:
    return world_bases(spec.input_dim, spec.effective_latent_dim, spec.world_seed,
                       spec.nuisance_dim, spec.attribute_dim)


def domain_attributes(spec: DomainSpec) -> np.ndarray:
    """
    Índices del banco de atributos que distinguen identidades en este dominio

    Dependen sólo del mundo y del domain_id; en el resto del banco el dominio
    sólo tiene ruido por muestra
    """
    if not spec.private_attributes:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng([int(spec.world_seed), int(spec.domain_id)])
    return np.sort(rng.choice(spec.attribute_dim, size=spec.private_attributes, replace=False))


def domain_transform(spec: DomainSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Transformación de sesgo del dominio

    Returns:
        Tupla (A [input_dim×input_dim], offset [input_dim]) con
        A = I + b·R/√D y offset = b·o
    """
    rng = _flujos(spec)['sesgo']
    d = spec.input_dim
    offset_base = rng.normal(size=d)
    distorsion = rng.normal(size=(d, d)) / np.sqrt(d)
    return np.eye(d) + spec.bias_strength * distorsion, spec.bias_strength * offset_base


def _prototipos(rng: np.random.Generator, n: int, spec: DomainSpec) -> np.ndarray:
    bases = _bases(spec)
    latentes = rng.normal(size=(n, spec.effective_latent_dim))
    prototipos = latentes @ bases.identity.T
    propios = domain_attributes(spec)
    if len(propios):
        prototipos = prototipos + rng.normal(size=(n, len(propios))) @ bases.attributes[:, propios].T
    return prototipos


def identity_prototypes(spec: DomainSpec) -> np.ndarray:
    """Prototipos de las identidades de entrenamiento, antes del sesgo [Mᵢ×input_dim]"""
    return _prototipos(_flujos(spec)['prototipos'], spec.num_identities, spec)


def _emitir(spec: DomainSpec, prototipos: np.ndarray, muestras: int,
            rng_ruido: np.random.Generator, etiqueta_inicial: int = 1) -> List[Sample]:
    A, offset = domain_transform(spec)
    sesgados = prototipos @ A.T + offset
    n = prototipos.shape[0]
    ruido = rng_ruido.normal(size=(n, muestras, spec.input_dim)) * spec.noise_sigma
    bases = _bases(spec)
    if spec.nuisance_dim and spec.nuisance_sigma:
        ruido = ruido + (rng_ruido.normal(size=(n, muestras, spec.nuisance_dim))
                         * spec.nuisance_sigma) @ bases.nuisance.T
    ajenos = np.setdiff1d(np.arange(spec.attribute_dim), domain_attributes(spec))
    if len(ajenos) and spec.attribute_sigma:
        # Los atributos que no distinguen identidades en este dominio varían por muestra
        ruido = ruido + (rng_ruido.normal(size=(n, muestras, len(ajenos)))
                         * spec.attribute_sigma) @ bases.attributes[:, ajenos].T
    salida = []
    for i in range(prototipos.shape[0]):
        for j in range(muestras):
            salida.append(Sample(spec.domain_id, etiqueta_inicial + i, sesgados[i] + ruido[i, j]))
    return salida


def generate_domain(spec: DomainSpec) -> List[Sample]:
    """
    Genera las muestras de entrenamiento de un dominio

    Args:
        spec: Especificación del dominio

    Returns:
        Lista de Sample ordenada por identidad (etiquetas locales 1..Mᵢ)
    """
    flujos = _flujos(spec)
    prototipos = _prototipos(flujos['prototipos'], spec.num_identities, spec)
    muestras = _emitir(spec, prototipos, spec.samples_per_identity, flujos['ruido'])
    logger.debug(f"Dominio {spec.domain_id} ({spec.name}): {spec.num_identities} identidades, "
                 f"{len(muestras)} muestras")
    return muestras


def generate_heldout(spec: DomainSpec) -> Tuple[List[Sample], List[Sample]]:
    """
    Genera identidades retenidas para probe/gallery, disjuntas de las de entrenamiento

    Args:
        spec: Especificación del dominio

    Returns:
        Tupla (muestras de identidades de prueba, muestras de distractores de galería);
        las etiquetas locales de los distractores siguen a las de prueba
    """
    if spec.test_identities == 0:
        return [], []
    rng = _flujos(spec)['prueba']
    prototipos = _prototipos(rng, spec.test_identities + spec.gallery_distractors, spec)
    prueba = _emitir(spec, prototipos[:spec.test_identities], spec.test_samples_per_identity, rng)
    distractores = []
    if spec.gallery_distractors:
        distractores = _emitir(spec, prototipos[spec.test_identities:], 1, rng,
                               etiqueta_inicial=spec.test_identities + 1)
    return prueba, distractores


def spec_from_profile(profile: str, domain_id: int, input_dim: int, seed: int,
                      scale: float = 1.0, **kwargs) -> DomainSpec:
    """
    Construye un DomainSpec con los conteos de un perfil de protocolo

    Args:
        profile: Nombre del conjunto de referencia (clave de PROTOCOL_PROFILES)
        domain_id: Identificador del dominio
        input_dim: Dimensión de entrada
        seed: Semilla
        scale: Factor de reducción de los conteos de identidades
        **kwargs: Otros campos de DomainSpec

    Returns:
        DomainSpec configurado
    """
    if profile not in PROTOCOL_PROFILES:
        raise ConfigurationError(f"Perfil de protocolo desconocido: {profile}",
                                 [f"perfiles disponibles: {', '.join(PROTOCOL_PROFILES)}"])
    perfil = PROTOCOL_PROFILES[profile]
    if not 0 < scale <= 1:
        raise ArgumentError(f"scale debe estar en (0, 1], recibió {scale}")
    escalar = lambda n: max(2, int(round(n * scale))) if n else 0
    probe_ids = escalar(perfil['probe_ids'])
    gallery_ids = max(probe_ids, escalar(perfil['gallery_ids'])) if probe_ids else 0
    return DomainSpec(
        domain_id=domain_id,
        name=kwargs.pop('name', profile),
        num_identities=max(2, escalar(perfil['identities'] - perfil['probe_ids'])),
        input_dim=input_dim,
        seed=seed,
        test_identities=probe_ids,
        gallery_distractors=gallery_ids - probe_ids,
        samples_per_identity=kwargs.pop('samples_per_identity', 4),
        **kwargs,
    )
