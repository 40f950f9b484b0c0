import numpy as np
import pytest
from scipy import stats

from modules.domain_data import build_experiment_data
from modules.errores import ArgumentError, ConfigurationError, DimensionError
from modules.impact import (ImpactScores, average_impact, compare_methods, count_nonpositive,
                            cross_domain_correlation, impact_exact, impact_taylor,
                            load_impact_report, save_impact_report, score_samples,
                            write_sorted_scores_csv)
from modules.nn_core import ClassifierHead, EncoderModel, backward, encode
from modules.pipeline import Stage, load_experiment_config, train_jstl

from conftest import RAIZ


def _fuerza_bruta(model, head, x, label):
    """Pérdida recalculada neurona por neurona con la fórmula directa"""
    g = encode(model, x)

    def perdida(v):
        z = head.weights @ v + head.bias
        m = np.max(z)
        return m + np.log(np.sum(np.exp(z - m))) - z[label]

    base = perdida(g)
    salida = np.zeros(g.shape[0])
    for i in range(g.shape[0]):
        sin_i = g.copy()
        sin_i[i] = 0.0
        salida[i] = perdida(sin_i) - base
    return salida


def _modelo(rng, d=8, M=4, entrada=5):
    return EncoderModel.initialize(entrada, [7], d, rng), ClassifierHead(rng.normal(size=(M, d)), rng.normal(size=M))


class TestImpactExact:

    def test_oraculo_fuerza_bruta(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = int(rng.integers(2, 9))
            model, head = _modelo(rng, d=d)
            x = rng.normal(size=5)
            label = int(rng.integers(4))
            np.testing.assert_allclose(impact_exact(model, head, x, label), _fuerza_bruta(model, head, x, label),
                                       rtol=0, atol=1e-10)

    def test_cabeza_cero(self, rng):
        model, _ = _modelo(rng)
        head = ClassifierHead(np.zeros((4, 8)), np.zeros(4))
        np.testing.assert_array_equal(impact_exact(model, head, rng.normal(size=5), 1), np.zeros(8))

    def test_etiqueta_fuera_de_rango(self, rng):
        model, head = _modelo(rng)
        with pytest.raises(ArgumentError):
            impact_exact(model, head, np.zeros(5), 4)

    def test_dimension_incompatible(self, rng):
        model, _ = _modelo(rng)
        with pytest.raises(DimensionError):
            impact_exact(model, ClassifierHead.initialize(3, 6, rng), np.zeros(5), 0)


class TestImpactTaylor:

    def test_formula_con_gradiente_y_hessiana(self, rng):
        model, head = _modelo(rng)
        x = rng.normal(size=5)
        grads = backward(model, head, x, 2)
        g = encode(model, x)
        esperado = -grads.grad_features * g + 0.5 * grads.diag_hessian_features * g ** 2
        np.testing.assert_allclose(impact_taylor(model, head, x, 2), esperado, rtol=1e-12, atol=1e-14)

    def test_neurona_apagada(self, rng):
        model, head = _modelo(rng)
        x = rng.normal(size=5)
        g = encode(model, x)
        apagadas = np.flatnonzero(g == 0.0)
        exacto, taylor = impact_exact(model, head, x, 0), impact_taylor(model, head, x, 0)
        np.testing.assert_array_equal(taylor[apagadas], 0.0)
        np.testing.assert_array_equal(exacto[apagadas], taylor[apagadas])

    def test_columna_cero(self, rng):
        model, head = _modelo(rng)
        head.weights[:, 3] = 0.0
        assert impact_taylor(model, head, rng.normal(size=5), 1)[3] == 0.0

    def test_aproxima_al_exacto_con_pesos_pequenos(self, rng):
        model, head = _modelo(rng)
        head.weights *= 0.01
        X = rng.normal(size=(30, 5))
        labels = rng.integers(4, size=30)
        exacto = score_samples(model, head, X, labels, 'exact')
        taylor = score_samples(model, head, X, labels, 'taylor')
        assert np.max(np.abs(exacto - taylor)) <= 0.05 * np.max(np.abs(exacto))

    def test_ordena_como_el_exacto_en_un_modelo_entrenado(self):
        config = load_experiment_config(RAIZ / 'configs' / 'benchmark.json')
        assert config.encoder.feature_dim == 64
        datos = build_experiment_data(config.domain_specs(0), config.val_fraction, 0)
        model, head, _ = train_jstl(datos.train, config.stage_config(Stage.JSTL, 0), config.encoder, datos.val)
        etiquetas = datos.train.merged_labels - 1
        for d, idx in datos.train.domain_index.items():
            exacto = average_impact(model, head, datos.train.features[idx], etiquetas[idx], d, 'exact')
            taylor = average_impact(model, head, datos.train.features[idx], etiquetas[idx], d, 'taylor')
            assert compare_methods(exacto, taylor)['spearman'] >= 0.9, d


class TestAverageImpact:

    def test_una_muestra(self, rng):
        model, head = _modelo(rng)
        x = rng.normal(size=5)
        media = average_impact(model, head, x[None, :], np.array([2]), 0, 'exact')
        np.testing.assert_allclose(media.scores, impact_exact(model, head, x, 2), atol=1e-12)
        assert media.num_samples == 1

    def test_duplicar_no_cambia_la_media(self, rng):
        model, head = _modelo(rng)
        X = rng.normal(size=(5, 5))
        labels = rng.integers(4, size=5)
        simple = average_impact(model, head, X, labels, 0)
        doble = average_impact(model, head, np.vstack([X, X]), np.concatenate([labels, labels]), 0)
        np.testing.assert_allclose(simple.scores, doble.scores, atol=1e-12)

    def test_dos_muestras(self, rng):
        model, head = _modelo(rng)
        X = rng.normal(size=(2, 5))
        media = average_impact(model, head, X, np.array([0, 3]), 0, 'exact')
        esperado = (impact_exact(model, head, X[0], 0) + impact_exact(model, head, X[1], 3)) / 2
        np.testing.assert_allclose(media.scores, esperado, atol=1e-12)

    def test_hilos_no_cambian_el_resultado(self, rng):
        model, head = _modelo(rng)
        X = rng.normal(size=(300, 5))
        labels = rng.integers(4, size=300)
        uno = average_impact(model, head, X, labels, 0, 'taylor', jobs=1)
        cuatro = average_impact(model, head, X, labels, 0, 'taylor', jobs=4)
        np.testing.assert_array_equal(uno.scores, cuatro.scores)

    def test_conjunto_vacio(self, rng):
        model, head = _modelo(rng)
        with pytest.raises(ArgumentError):
            average_impact(model, head, np.zeros((0, 5)), np.zeros(0, dtype=int), 0)

    def test_no_positivas(self):
        assert count_nonpositive(ImpactScores(0, np.array([0.2, -0.1, 0.0, 3.0]))) == 2


class TestCorrelacion:

    def test_identicos_y_opuestos(self, rng):
        a = rng.normal(size=32)
        iguales = cross_domain_correlation(ImpactScores(0, a), ImpactScores(1, a))
        assert iguales['pearson'] == pytest.approx(1.0)
        assert iguales['spearman'] == pytest.approx(1.0)
        opuestos = cross_domain_correlation(ImpactScores(0, a), ImpactScores(1, -a))
        assert opuestos['pearson'] == pytest.approx(-1.0)

    def test_formula_de_libro(self, rng):
        a, b = rng.normal(size=256), rng.normal(size=256)
        ca, cb = a - a.mean(), b - b.mean()
        esperado = np.sum(ca * cb) / np.sqrt(np.sum(ca ** 2) * np.sum(cb ** 2))
        resultado = cross_domain_correlation(ImpactScores(0, a), ImpactScores(1, b))
        assert resultado['pearson'] == pytest.approx(esperado, abs=1e-12)
        assert resultado['spearman'] == pytest.approx(stats.spearmanr(a, b)[0], abs=1e-12)

    def test_varianza_cero(self):
        resultado = cross_domain_correlation(ImpactScores(0, np.ones(5)), ImpactScores(1, np.arange(5.0)))
        assert resultado['pearson'] is None and resultado['spearman'] is None

    def test_curva_ordenada(self):
        curva = cross_domain_correlation(ImpactScores(0, np.array([0.3, -1.0, 2.0])),
                                         ImpactScores(1, np.array([1.0, 2.0, 3.0])))['curve']
        assert [f['neuron'] for f in curva] == [1, 0, 2]

    def test_comparacion_de_metodos(self):
        resultado = compare_methods(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.5, 2.0]))
        assert resultado['mae'] == pytest.approx(0.5)
        assert resultado['max_abs_error'] == pytest.approx(1.0)


class TestReportes:

    def test_ida_y_vuelta(self, tmp_path):
        scores = ImpactScores(3, np.array([0.5, -0.25, 1e-17]), 'exact', 40)
        cargado = load_impact_report(save_impact_report(tmp_path / 'r.json', scores))
        assert cargado.domain_id == 3 and cargado.method == 'exact' and cargado.num_samples == 40
        np.testing.assert_array_equal(cargado.scores, scores.scores)

    def test_d_inconsistente(self, tmp_path):
        ruta = tmp_path / 'r.json'
        ruta.write_text('{"domain_id": 0, "d": 4, "scores": [1.0, 2.0]}', encoding='utf-8')
        with pytest.raises(DimensionError):
            load_impact_report(ruta)

    def test_reporte_inexistente(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_impact_report(tmp_path / 'nada.json')

    def test_csv_ordenado(self, tmp_path):
        ruta = write_sorted_scores_csv(tmp_path / 's.csv', ImpactScores(0, np.array([0.1, 0.7, -0.2])))
        lineas = open(ruta, encoding='utf-8').read().splitlines()
        assert lineas[0] == 'rank,neuron,score'
        assert [l.split(',')[1] for l in lineas[1:]] == ['1', '0', '2']
