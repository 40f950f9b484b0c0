import numpy as np
import pytest

from modules.errores import ArgumentError, ConfigurationError, DimensionError, TrainingError
from modules.nn_core import (ClassifierHead, DenseLayer, EncoderModel, SGDMomentum, backward,
                             encode, forward_batch, load_checkpoint, loss_and_probs,
                             save_checkpoint, sgd_step)
from modules.nn_core.backprop import diag_hessian_rows


def _error_relativo(a, n):
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-4)


def _perdida(model, head, x, label, mask=None):
    return loss_and_probs(head, encode(model, x, mask), label)[0]


def _entrada_lejos_de_quiebres(model, rng, margen=1e-2):
    """Entrada cuyas preactivaciones ReLU quedan lejos de cero"""
    while True:
        x = rng.normal(size=model.input_dim)
        _, cache = forward_batch(model, x[None, :])
        if all(np.min(np.abs(z)) > margen for z in cache['preactivaciones']):
            return x


class TestEncode:

    def test_capa_identidad(self):
        model = EncoderModel([DenseLayer(np.eye(2), np.zeros(2), 'identity')])
        np.testing.assert_array_equal(encode(model, np.array([1.0, 2.0])), [1.0, 2.0])

    def test_mascara_de_ceros(self, modelo_pequeno, rng):
        model, _ = modelo_pequeno
        g = encode(model, rng.normal(size=6), np.zeros(5))
        np.testing.assert_array_equal(g, np.zeros(5))

    def test_coincide_con_aritmetica_manual(self, modelo_pequeno, rng):
        model, _ = modelo_pequeno
        x = rng.normal(size=6)
        oculta = np.maximum(model.layers[0].weights @ x + model.layers[0].bias, 0.0)
        esperado = np.maximum(model.layers[1].weights @ oculta + model.layers[1].bias, 0.0)
        np.testing.assert_allclose(encode(model, x), esperado, rtol=0, atol=1e-14)

    def test_errores_de_forma(self, modelo_pequeno):
        model, _ = modelo_pequeno
        with pytest.raises(DimensionError):
            encode(model, np.zeros(3))
        with pytest.raises(DimensionError):
            encode(model, np.zeros(6), np.ones(4))
        with pytest.raises(ArgumentError):
            encode(model, np.zeros(6), np.full(5, 1.5))

    def test_capas_que_no_encadenan(self):
        with pytest.raises(DimensionError):
            EncoderModel([DenseLayer(np.ones((3, 2)), np.zeros(3)), DenseLayer(np.ones((2, 4)), np.zeros(2))])


class TestLossAndProbs:

    def test_pesos_cero_dan_ln_m(self):
        head = ClassifierHead(np.zeros((5, 3)), np.zeros(5))
        loss, probs = loss_and_probs(head, np.array([1.0, -2.0, 0.5]), 2)
        assert loss == pytest.approx(np.log(5), abs=1e-12)
        np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-15)

    def test_clase_dominante(self):
        head = ClassifierHead(np.zeros((3, 1)), np.array([0.0, 1000.0, 0.0]))
        loss, _ = loss_and_probs(head, np.zeros(1), 1)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_formula_directa(self, rng):
        head = ClassifierHead(rng.normal(size=(7, 4)), rng.normal(size=7))
        g = rng.normal(size=4)
        logits = head.weights @ g + head.bias
        esperado = float(np.log(np.sum(np.exp(np.longdouble(logits)))) - logits[3])
        assert loss_and_probs(head, g, 3)[0] == pytest.approx(esperado, rel=1e-12)

    def test_etiqueta_fuera_de_rango(self, modelo_pequeno):
        _, head = modelo_pequeno
        with pytest.raises(ArgumentError):
            loss_and_probs(head, np.zeros(5), 4)


class TestBackward:

    @pytest.mark.parametrize("semilla", range(20))
    def test_diferencias_finitas(self, semilla):
        rng = np.random.default_rng(semilla)
        model = EncoderModel.initialize(4, [6], 5, rng)
        head = ClassifierHead.initialize(3, 5, rng)
        x = _entrada_lejos_de_quiebres(model, rng)
        label = int(rng.integers(3))
        mask = (rng.random(5) > 0.3).astype(float)
        grads = backward(model, head, x, label, mask)

        params = {**model.parameters(), **head.parameters("head")}
        paso = 1e-5
        for nombre, param in params.items():
            numerico = np.zeros_like(param)
            for i in np.ndindex(param.shape):
                original = param[i]
                param[i] = original + paso
                mas = _perdida(model, head, x, label, mask)
                param[i] = original - paso
                menos = _perdida(model, head, x, label, mask)
                param[i] = original
                numerico[i] = (mas - menos) / (2 * paso)
            assert np.max(_error_relativo(grads[nombre], numerico)) < 1e-5, nombre

    def test_hessiana_diagonal(self, rng):
        head = ClassifierHead(rng.normal(size=(4, 6)), rng.normal(size=4))
        g = rng.normal(size=6)
        paso = 1e-4
        _, probs = loss_and_probs(head, g, 1)
        analitica = diag_hessian_rows(head, probs[None, :])[0]
        for i in range(6):
            e = np.zeros(6)
            e[i] = paso
            mas = loss_and_probs(head, g + e, 1)[0]
            centro = loss_and_probs(head, g, 1)[0]
            menos = loss_and_probs(head, g - e, 1)[0]
            numerica = (mas - 2 * centro + menos) / paso ** 2
            assert _error_relativo(analitica[i], numerica) < 1e-4

    def test_mascara_anula_gradiente(self, modelo_pequeno, rng):
        model, head = modelo_pequeno
        mask = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
        grads = backward(model, head, rng.normal(size=6), 0, mask)
        np.testing.assert_array_equal(grads.grad_features[[1, 3]], 0.0)
        np.testing.assert_array_equal(grads["head.weights"][:, [1, 3]], 0.0)


class TestSGD:

    def test_sin_momento(self):
        params = {'p': np.zeros(2)}
        sgd_step(params, {'p': np.ones(2)}, 0.1, 0.0)
        np.testing.assert_allclose(params['p'], [-0.1, -0.1])

    def test_devuelve_los_parametros_actualizados(self):
        params = {'p': np.array([1.0]), 'q': np.array([3.0])}
        velocidades = {}
        salida = sgd_step(params, {'p': np.array([2.0])}, 0.5, 0.9, velocidades)
        assert salida is params
        assert salida['p'][0] == 0.0
        assert salida['q'][0] == 3.0
        np.testing.assert_array_equal(velocidades['p'], [-1.0])

    def test_gradiente_cero(self):
        params = {'p': np.array([0.3, -0.7])}
        SGDMomentum(params, momentum=0.9).step({'p': np.zeros(2)}, 0.1)
        np.testing.assert_array_equal(params['p'], [0.3, -0.7])

    def test_dos_pasos_con_momento(self):
        params = {'p': np.array([1.0])}
        opt = SGDMomentum(params, momentum=0.9)
        opt.step({'p': np.array([0.5])}, 0.1)
        opt.step({'p': np.array([0.5])}, 0.1)
        v1 = -0.1 * 0.5
        v2 = 0.9 * v1 - 0.1 * 0.5
        assert params['p'][0] == pytest.approx(1.0 + v1 + v2, abs=1e-15)

    def test_weight_decay(self):
        params = {'p': np.array([2.0])}
        sgd_step(params, {'p': np.array([0.0])}, 0.1, 0.0, weight_decay=0.5)
        assert params['p'][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_errores(self):
        params = {'p': np.zeros(2)}
        with pytest.raises(ArgumentError):
            sgd_step(params, {'p': np.ones(2)}, 0.0, 0.9)
        with pytest.raises(DimensionError):
            sgd_step(params, {'p': np.ones(3)}, 0.1, 0.9)
        with pytest.raises(TrainingError) as info:
            sgd_step(params, {'p': np.array([np.nan, 1.0])}, 0.1, 0.9)
        assert info.value.tensor == 'p'
        np.testing.assert_array_equal(params['p'], np.zeros(2))


class TestCheckpoint:

    def test_ida_y_vuelta_estable(self, tmp_path, modelo_pequeno, rng):
        model, head = modelo_pequeno
        primero = tmp_path / 'a.json'
        segundo = tmp_path / 'b.json'
        save_checkpoint(primero, model, {'merged': head}, {'stage': 'jstl', 'seed': 0})
        cargado, cabezas, meta = load_checkpoint(primero)
        save_checkpoint(segundo, cargado, cabezas, meta)
        assert primero.read_bytes() == segundo.read_bytes()
        x = rng.normal(size=6)
        np.testing.assert_array_equal(encode(model, x), encode(cargado, x))
        assert meta['stage'] == 'jstl'

    def test_version_desconocida(self, tmp_path):
        ruta = tmp_path / 'malo.json'
        ruta.write_text('{"version": "otra"}', encoding='utf-8')
        with pytest.raises(ConfigurationError):
            load_checkpoint(ruta)

    def test_archivo_inexistente(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / 'no_existe.json')
