import numpy as np
import pytest
from scipy.stats import ortho_group

from modules.dgd import DeterministicDGD, StochasticDGD
from modules.domain_data import Sample
from modules.errores import ArgumentError, ProtocolError
from modules.impact import ImpactScores
from modules.nn_core import DenseLayer, EncoderModel
from modules.reid_eval import FeatureMatrix, cmc, extract_features, rank_gallery


def _cmc_fuerza_bruta(probes, gallery, K):
    """Rango de cada probe contando galerías más cercanas (empates: índice menor primero)"""
    rangos = []
    for x, identidad in zip(probes.data, probes.ids):
        distancias = [np.linalg.norm(x - y) for y in gallery.data]
        j = int(np.flatnonzero(gallery.ids == identidad)[0])
        delante = sum(1 for k, dk in enumerate(distancias) if dk < distancias[j] or (dk == distancias[j] and k < j))
        rangos.append(delante)
    rangos = np.array(rangos)
    return np.array([np.mean(rangos < k) for k in range(1, K + 1)])


def _instancia(rng, identidades=12, probes=30, d=5):
    gallery = FeatureMatrix(rng.normal(size=(identidades, d)), np.arange(1, identidades + 1))
    ids = rng.integers(1, identidades + 1, size=probes)
    datos = gallery.data[ids - 1] + rng.normal(scale=0.8, size=(probes, d))
    return FeatureMatrix(datos, ids), gallery


class TestCMC:

    def test_oraculo_a_mano(self):
        gallery = FeatureMatrix(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]), np.array([1, 2, 3]))
        probes = FeatureMatrix(np.array([[1.0, 0.0], [0.0, 9.0], [0.0, 9.5]]), np.array([1, 2, 3]))
        curva = cmc(probes, gallery, 3)
        np.testing.assert_allclose(curva.accuracies, [2 / 3, 2 / 3, 1.0])
        assert curva.num_probes == 3
        assert curva.top(1) == pytest.approx(2 / 3)

    def test_oraculo_fuerza_bruta(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ids = int(rng.integers(2, 51))
            probes, gallery = _instancia(rng, identidades=ids, probes=int(rng.integers(1, 51)))
            np.testing.assert_array_equal(cmc(probes, gallery, ids).accuracies, _cmc_fuerza_bruta(probes, gallery, ids))

    def test_monotona_y_completa(self, rng):
        probes, gallery = _instancia(rng)
        curva = cmc(probes, gallery, 12)
        assert np.all(np.diff(curva.accuracies) >= 0)
        assert curva.accuracies[-1] == 1.0
        assert np.all((curva.accuracies >= 0) & (curva.accuracies <= 1))

    def test_invariante_a_rotacion_y_traslacion(self, rng):
        probes, gallery = _instancia(rng)
        Q = ortho_group.rvs(5, random_state=7)
        t = rng.normal(size=5) * 3
        rotados = cmc(FeatureMatrix(probes.data @ Q.T + t, probes.ids),
                      FeatureMatrix(gallery.data @ Q.T + t, gallery.ids), 12)
        np.testing.assert_allclose(rotados.accuracies, cmc(probes, gallery, 12).accuracies)

    def test_empate_favorece_indice_menor(self):
        gallery = FeatureMatrix(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([7, 8]))
        np.testing.assert_array_equal(rank_gallery(np.zeros(2), gallery), [0, 1])
        curva = cmc(FeatureMatrix(np.zeros((1, 2)), np.array([8])), gallery, 2)
        np.testing.assert_array_equal(curva.accuracies, [0.0, 1.0])

    def test_galeria_con_identidad_repetida(self):
        gallery = FeatureMatrix(np.zeros((2, 2)), np.array([1, 1]))
        with pytest.raises(ProtocolError):
            cmc(FeatureMatrix(np.zeros((1, 2)), np.array([1])), gallery, 1)

    def test_probe_sin_pareja(self):
        gallery = FeatureMatrix(np.zeros((2, 2)), np.array([1, 2]))
        with pytest.raises(ProtocolError) as info:
            cmc(FeatureMatrix(np.zeros((1, 2)), np.array([5])), gallery, 1)
        assert info.value.identidad == 5

    def test_galeria_vacia(self):
        vacia = FeatureMatrix(np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(ArgumentError):
            rank_gallery(np.zeros(2), vacia)
        with pytest.raises(ArgumentError):
            cmc(FeatureMatrix(np.zeros((1, 2)), np.array([1])), vacia, 1)

    def test_rango_invalido(self, rng):
        probes, gallery = _instancia(rng)
        with pytest.raises(ArgumentError):
            cmc(probes, gallery, 0)

    def test_filas_csv(self):
        gallery = FeatureMatrix(np.eye(2), np.array([1, 2]))
        filas = cmc(FeatureMatrix(np.eye(2), np.array([1, 2])), gallery, 2).to_rows()
        assert [f['rank'] for f in filas] == [1, 2]
        assert float(filas[0]['accuracy']) == 1.0


class TestExtractFeatures:

    @pytest.fixture
    def identidad(self):
        return EncoderModel([DenseLayer(np.eye(3), np.zeros(3), 'identity')])

    @pytest.fixture
    def muestras(self):
        return [Sample(0, 1, np.array([3.0, 4.0, 1.0])), Sample(0, 2, np.array([0.0, 2.0, -2.0]))]

    def test_sin_politica_es_identidad(self, identidad, muestras):
        fm = extract_features(identidad, None, muestras)
        np.testing.assert_array_equal(fm.data, [[3.0, 4.0, 1.0], [0.0, 2.0, -2.0]])
        np.testing.assert_array_equal(fm.ids, [1, 2])

    def test_dgd_anula_columnas(self, identidad, muestras):
        politica = DeterministicDGD(ImpactScores(0, np.array([0.5, -0.1, 0.2])))
        fm = extract_features(identidad, politica, muestras)
        np.testing.assert_array_equal(fm.data[:, 1], 0.0)
        np.testing.assert_array_equal(fm.data[:, [0, 2]], [[3.0, 1.0], [0.0, -2.0]])

    def test_estocastica_escala(self, identidad, muestras):
        politica = StochasticDGD(ImpactScores(0, np.zeros(3)), 1.0)
        np.testing.assert_array_equal(extract_features(identidad, politica, muestras).data,
                                      [[1.5, 2.0, 0.5], [0.0, 1.0, -1.0]])

    def test_normalizacion(self, identidad, muestras):
        fm = extract_features(identidad, None, muestras, normalize=True)
        np.testing.assert_allclose(np.linalg.norm(fm.data, axis=1), 1.0)

    def test_sin_muestras(self, identidad):
        fm = extract_features(identidad, None, [])
        assert fm.rows == 0 and fm.dim == 3
