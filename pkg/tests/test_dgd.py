import numpy as np
import pytest

from modules.dgd import (DeterministicDGD, DomainGuidedDropout, NoDropout, StandardDropout,
                         StochasticDGD, apply_test_scaling, cumulative_keep_histogram,
                         deterministic_mask, keep_probability, policy_from_config,
                         select_temperature, stochastic_mask)
from modules.errores import ArgumentError, ConfigurationError
from modules.impact import ImpactScores


def _scores(valores, domain_id=0):
    return ImpactScores(domain_id, np.asarray(valores, dtype=float))


class TestMascaras:

    def test_determinista(self):
        np.testing.assert_array_equal(deterministic_mask(np.array([0.2, -0.1, 0.0])), [1.0, 0.0, 0.0])

    def test_todas_positivas(self):
        np.testing.assert_array_equal(deterministic_mask(np.array([0.1, 3.0, 1e-9])), np.ones(3))

    def test_simetricas_descartan_la_mitad(self, rng):
        s = rng.normal(size=10_000)
        assert abs(1.0 - deterministic_mask(s).mean() - 0.5) <= 0.02

    def test_probabilidad(self):
        assert keep_probability(0.0, 0.37) == 0.5
        assert keep_probability(np.log(9.0) * 2.5, 2.5) == pytest.approx(0.9, abs=1e-12)
        p = keep_probability(np.linspace(-5, 5, 11), 1e6)
        assert np.all((p >= 0.499) & (p <= 0.501))
        with pytest.raises(ArgumentError):
            keep_probability(1.0, 0.0)

    def test_temperatura_minima_es_determinista(self, rng):
        s = rng.normal(size=500)
        s = s[np.abs(s) >= 1e-6]
        mascaras = stochastic_mask(s, 1e-9, rng, n=20)
        np.testing.assert_array_equal(mascaras, np.tile(deterministic_mask(s), (20, 1)))

    def test_temperatura_enorme_es_dropout_estandar(self, rng):
        s = rng.normal(size=100)
        T = 1e6 * np.max(np.abs(s))
        assert abs(stochastic_mask(s, T, rng, n=100).mean() - 0.5) <= 0.02

    def test_tasa_empirica(self, rng):
        T = 0.5
        s = np.array([T * np.log(9.0)])
        assert abs(stochastic_mask(s, T, rng, n=10_000).mean() - 0.9) <= 0.01

    def test_misma_semilla(self):
        s = np.linspace(-1, 1, 50)
        a = stochastic_mask(s, 0.3, np.random.default_rng(5), n=4)
        b = stochastic_mask(s, 0.3, np.random.default_rng(5), n=4)
        np.testing.assert_array_equal(a, b)


class TestTemperatura:

    def test_maxima_conserva_noventa(self, rng):
        s = rng.normal(size=64)
        T = select_temperature(s, 0.9)
        assert keep_probability(np.max(s), T) == pytest.approx(0.9, abs=1e-12)

    def test_valor_analitico(self):
        assert select_temperature(np.array([0.05, -0.3, 0.01])) == pytest.approx(0.05 / np.log(9.0), abs=1e-14)
        assert select_temperature(np.array([0.05])) == pytest.approx(0.02276, abs=1e-5)

    def test_sin_positivas(self):
        with pytest.raises(ConfigurationError):
            select_temperature(np.array([-0.1, 0.0]))

    def test_objetivo_fuera_de_rango(self):
        with pytest.raises(ArgumentError):
            select_temperature(np.array([1.0]), 0.4)

    def test_histograma_iguales(self):
        curva = cumulative_keep_histogram(np.zeros(6), 1.0, thresholds=np.array([0.4, 0.5, 0.6]))
        assert curva == [(0.4, 0), (0.5, 6), (0.6, 6)]

    def test_histograma_contra_conteo(self, rng):
        s = rng.normal(size=40)
        curva = cumulative_keep_histogram(s, 0.7)
        p = keep_probability(s, 0.7)
        conteos = [c for _, c in curva]
        assert conteos == sorted(conteos)
        assert conteos[-1] == 40
        for u, c in curva:
            assert c == int(np.sum(p <= u))


class TestPoliticas:

    def test_escalado_de_prueba(self, rng):
        g = rng.random((3, 4)) + 0.1
        np.testing.assert_array_equal(apply_test_scaling(StandardDropout(0.5), g), g)
        np.testing.assert_array_equal(apply_test_scaling(DeterministicDGD(_scores([1, 2, 3, 4])), g), g)
        np.testing.assert_array_equal(apply_test_scaling(StochasticDGD(_scores(np.zeros(4)), 0.3), g), g * 0.5)
        cero = apply_test_scaling(DeterministicDGD(_scores([1, -2, 3, 4])), g)
        np.testing.assert_array_equal(cero[:, 1], 0.0)
        np.testing.assert_array_equal(cero[:, [0, 2, 3]], g[:, [0, 2, 3]])

    def test_estandar_invertido(self, rng):
        mascara, escala = StandardDropout(0.5).train_mask(2000, 10, rng)
        assert escala == 2.0
        assert abs(mascara.mean() - 0.5) <= 0.02
        assert set(np.unique(mascara).tolist()) <= {0.0, 1.0}

    def test_tasa_invalida(self):
        with pytest.raises(ArgumentError):
            StandardDropout(1.0)

    def test_dimension_incompatible(self):
        with pytest.raises(ConfigurationError):
            DeterministicDGD(_scores([1.0, 2.0])).test_gate(3)

    def test_sin_dropout(self, rng):
        mascara, escala = NoDropout().train_mask(3, 5, rng)
        np.testing.assert_array_equal(mascara, np.ones((3, 5)))
        assert escala == 1.0

    def test_desde_configuracion(self):
        scores = _scores([0.2, -0.1, 0.4])
        assert isinstance(policy_from_config({'kind': 'none'}), NoDropout)
        assert policy_from_config({'kind': 'standard', 'rate': 0.3}).rate == 0.3
        assert isinstance(policy_from_config({'kind': 'deterministic_dgd'}, scores), DeterministicDGD)
        estocastica = policy_from_config({'kind': 'stochastic_dgd'}, scores)
        assert estocastica.temperature == pytest.approx(0.4 / np.log(9.0))
        assert policy_from_config({'kind': 'stochastic_dgd', 'temperature': 2.0}, scores).temperature == 2.0
        with pytest.raises(ConfigurationError):
            policy_from_config({'kind': 'deterministic_dgd'})
        with pytest.raises(ConfigurationError):
            policy_from_config({'kind': 'otra'})


class TestDomainGuidedDropout:

    def test_cada_muestra_usa_su_dominio(self, rng):
        dgd = DomainGuidedDropout({0: DeterministicDGD(_scores([1, -1, 1], 0)),
                                   1: DeterministicDGD(_scores([-1, 1, -1], 1))})
        gate = dgd.train_gate(np.array([0, 1, 0, 1]), 3, rng)
        np.testing.assert_array_equal(gate[[0, 2]], [[1, 0, 1], [1, 0, 1]])
        np.testing.assert_array_equal(gate[[1, 3]], [[0, 1, 0], [0, 1, 0]])

    def test_dominio_sin_politica(self, rng):
        dgd = DomainGuidedDropout({0: NoDropout()})
        with pytest.raises(ConfigurationError):
            dgd.train_gate(np.array([0, 2]), 3, rng)

    def test_politica_por_defecto(self, rng):
        dgd = DomainGuidedDropout.uniform(NoDropout())
        np.testing.assert_array_equal(dgd.train_gate(np.array([5, 7]), 2, rng), np.ones((2, 2)))
        np.testing.assert_array_equal(dgd.test_gate(9, 2), np.ones(2))

    def test_escala_estandar_en_la_compuerta(self, rng):
        gate = DomainGuidedDropout.uniform(StandardDropout(0.5)).train_gate(np.zeros(50, dtype=int), 8, rng)
        assert set(np.unique(gate).tolist()) <= {0.0, 2.0}
