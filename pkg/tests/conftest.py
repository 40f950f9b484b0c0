import json
from pathlib import Path

import numpy as np
import pytest

from modules.domain_data import DomainSpec, build_experiment_data
from modules.nn_core import ClassifierHead, EncoderModel

RAIZ = Path(__file__).resolve().parent.parent


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def modelo_pequeno(rng):
    """Codificador 6 → 8 → 5 y cabeza de 4 clases"""
    model = EncoderModel.initialize(6, [8], 5, rng)
    head = ClassifierHead.initialize(4, 5, rng)
    return model, head


def specs_pequenos(input_dim=8, tamanos=(6, 4), test_ids=4, ruido=0.1, sesgo=0.5):
    return [DomainSpec(domain_id=d, num_identities=m, samples_per_identity=5, input_dim=input_dim,
                       bias_strength=sesgo, noise_sigma=ruido, seed=100 + d, latent_dim=4,
                       test_identities=test_ids, world_seed=7)
            for d, m in enumerate(tamanos)]


@pytest.fixture
def datos_pequenos():
    return build_experiment_data(specs_pequenos(), 0.2, seed=3)


SMOKE = {
    "name": "smoke",
    "input_dim": 8,
    "latent_dim": 4,
    "seeds": [0],
    "domains": [
        {"domain_id": 0, "num_identities": 12, "samples_per_identity": 4, "test_identities": 4,
         "bias_strength": 0.5, "noise_sigma": 0.3},
        {"domain_id": 1, "num_identities": 5, "samples_per_identity": 4, "test_identities": 4,
         "bias_strength": 0.5, "noise_sigma": 0.3},
    ],
    "encoder": {"hidden_dims": [16], "feature_dim": 12},
    "training": {"batch_size": 16, "epochs": 3},
    "stage_overrides": {
        "jstl_dgd": {"epochs": 2},
        "ft_jstl": {"epochs": 2},
        "ft_jstl_dgd": {"epochs": 2},
    },
}


@pytest.fixture
def smoke_doc():
    return json.loads(json.dumps(SMOKE))


@pytest.fixture
def smoke_config(tmp_path, smoke_doc):
    ruta = tmp_path / 'smoke.json'
    ruta.write_text(json.dumps(smoke_doc), encoding='utf-8')
    return ruta


@pytest.fixture(scope='session')
def corrida_referencia(tmp_path_factory):
    """Pipeline completo del experimento de referencia (10 semillas) seguido de report"""
    from modules.cli import EXIT_OK, main

    salida = tmp_path_factory.mktemp('referencia') / 'benchmark'
    assert main(['pipeline', '--config', str(RAIZ / 'configs' / 'benchmark.json'),
                 '--out', str(salida), '--seeds', '10']) == EXIT_OK
    assert main(['report', '--out', str(salida)]) == EXIT_OK
    return salida
