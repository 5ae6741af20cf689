# tests/test_hmm.py: estacionária, gap espectral, simulação, verossimilhança e gradiente exato
from itertools import product

import numpy as np
import pytest

from csg_hmm.core.dados import EPSILON_RARO, parametros_verdadeiros
from csg_hmm.core.erros import DegenerateLikelihood, NonStochastic, ReducibleChain, ShapeMismatch, ZeroColumn
from csg_hmm.core.hmm import (
    HmmParams,
    PriorSpec,
    TipoPrior,
    emission_matrix,
    exact_grad_U,
    filtrar,
    log_marginal_likelihood,
    log_posterior,
    log_verossimilhanca_fixa,
    project_columns_to_simplex,
    simulate,
    spectral_gap,
    stationary_distribution,
)
from csg_hmm.emissoes.bernoulli import Bernoulli
from csg_hmm.emissoes.gaussiana import Gaussiana

#--------------------------------------------------------------------------------------------------
# DISTRIBUIÇÃO ESTACIONÁRIA E GAP
#--------------------------------------------------------------------------------------------------
def test_estacionaria_do_exemplo_raro():
    pi = stationary_distribution(parametros_verdadeiros("RARE2").A)
    esperado = np.array([1.0, 10 * EPSILON_RARO]) / (1 + 10 * EPSILON_RARO)
    np.testing.assert_allclose(pi, esperado, atol=1e-12)
    assert pi[1] == pytest.approx(0.001, rel=1e-2)


def test_estacionaria_bd_uniforme_e_id_desbalanceada():
    np.testing.assert_allclose(stationary_distribution(parametros_verdadeiros("BD").A), [0.25] * 4, atol=1e-12)
    pi_id = stationary_distribution(parametros_verdadeiros("ID").A)
    np.testing.assert_allclose(pi_id, [5 / 9, 1 / 9, 1 / 9, 1 / 9, 1 / 9], atol=1e-10)


def test_estacionaria_um_estado():
    np.testing.assert_array_equal(stationary_distribution(np.array([[1.0]])), [1.0])


def test_estacionaria_e_ponto_fixo(params_aleatorios):
    rng = np.random.default_rng(0)
    for _ in range(30):
        A = params_aleatorios(rng, int(rng.integers(1, 7))).A
        pi = stationary_distribution(A)
        assert np.max(np.abs(A @ pi - pi)) < 1e-10
        assert pi.sum() == pytest.approx(1.0)


def test_cadeia_redutivel_e_rejeitada():
    with pytest.raises(ReducibleChain):
        stationary_distribution(np.eye(2))


def test_matriz_nao_estocastica():
    with pytest.raises(NonStochastic):
        stationary_distribution(np.array([[0.5, 0.5], [0.6, 0.5]]))
    with pytest.raises(ShapeMismatch):
        stationary_distribution(np.ones((2, 3)) / 2)


def test_gap_espectral_dois_estados_e_um_estado():
    assert spectral_gap(np.array([[0.9, 0.1], [0.1, 0.9]])) == pytest.approx(0.2, abs=1e-12)
    assert spectral_gap(np.array([[1.0]])) == 1.0


def test_gap_bd_confere_com_raizes_do_polinomio_caracteristico():
    A = parametros_verdadeiros("BD").A
    raizes = np.roots(np.poly(A))
    modulos = np.sort(np.abs(raizes))[::-1]
    assert spectral_gap(A) == pytest.approx(1.0 - modulos[1], abs=1e-8)

#--------------------------------------------------------------------------------------------------
# SIMULAÇÃO
#--------------------------------------------------------------------------------------------------
def test_simulacao_um_estado():
    estados, y = simulate(HmmParams(np.array([[1.0]]), Gaussiana([0.0], [1.0])), 100, seed=1)
    assert estados.shape == (101,) and y.shape == (100,)
    assert np.all(estados == 0)


def test_simulacao_ciclo_deterministico():
    params = HmmParams(np.array([[0.0, 1.0], [1.0, 0.0]]), Gaussiana([0.0, 1.0], [1.0, 1.0]))
    estados, _ = simulate(params, 50, seed=3)
    assert np.all(np.diff(estados) != 0)


def test_simulacao_mesma_semente_mesma_serie(params_bd):
    e1, y1 = simulate(params_bd, 300, seed=5)
    e2, y2 = simulate(params_bd, 300, seed=5)
    np.testing.assert_array_equal(e1, e2)
    np.testing.assert_array_equal(y1, y2)


def test_frequencia_do_estado_raro():
    T = 200_000
    estados, _ = simulate(parametros_verdadeiros("RARE2"), T, seed=2024)
    taxa = 10 * EPSILON_RARO / (1 + 10 * EPSILON_RARO)
    # visitas ao estado raro vêm em blocos (permanência 0.9): variância inflada por (1+λ)/(1-λ)
    lam = 1.0 - EPSILON_RARO - 0.1
    erro_padrao = np.sqrt(T * taxa * (1 - taxa) * (1 + lam) / (1 - lam))
    assert abs(np.sum(estados[1:] == 1) - T * taxa) < 3 * erro_padrao

#--------------------------------------------------------------------------------------------------
# VEROSSIMILHANÇA
#--------------------------------------------------------------------------------------------------
def test_matriz_de_emissao():
    gauss = HmmParams(np.array([[0.5, 0.5], [0.5, 0.5]]), Gaussiana([0.0, 1.0], [1.0, 1.0]))
    np.testing.assert_allclose(np.diag(emission_matrix(gauss, 0.0)), [0.39894228, 0.24197072], atol=1e-8)
    bern = HmmParams(np.array([[0.5, 0.5], [0.5, 0.5]]), Bernoulli([0.9, 0.1]))
    np.testing.assert_allclose(emission_matrix(bern, 1.0), np.diag([0.9, 0.1]))
    np.testing.assert_allclose(emission_matrix(bern, 0.0), np.diag([0.1, 0.9]))


def test_log_verossimilhanca_um_ponto():
    params = HmmParams(np.array([[1.0]]), Gaussiana([0.0], [1.0]))
    assert log_marginal_likelihood(params, np.array([0.0])) == pytest.approx(np.log(0.3989422804014327))


def test_log_verossimilhanca_contra_produto_ingenuo(params_aleatorios):
    rng = np.random.default_rng(42)
    params = params_aleatorios(rng, 2)
    y = rng.normal(size=5)
    pi = stationary_distribution(params.A).astype(np.longdouble)
    A = params.A.astype(np.longdouble)
    v = pi
    for yt in y:
        v = np.diag(params.emissoes.densidade(np.array([yt]))[0].astype(np.longdouble)) @ A @ v
    esperado = float(np.log(np.sum(v)))
    assert log_marginal_likelihood(params, y) == pytest.approx(esperado, rel=1e-10)


def test_log_verossimilhanca_bernoulli_por_enumeracao():
    A = np.array([[0.9, 0.1], [0.1, 0.9]])
    p = np.array([0.9, 0.1])
    params = HmmParams(A, Bernoulli(p))
    pi = stationary_distribution(A)
    total = 0.0
    for x0, x1, x2 in product(range(2), repeat=3):
        total += pi[x0] * A[x1, x0] * p[x1] * A[x2, x1] * p[x2]
    assert log_marginal_likelihood(params, np.array([1.0, 1.0])) == pytest.approx(np.log(total), rel=1e-12)


def test_observacao_impossivel():
    params = HmmParams(np.array([[1.0]]), Gaussiana([0.0], [1.0]))
    with np.errstate(over="ignore"), pytest.raises(DegenerateLikelihood):
        log_marginal_likelihood(params, np.array([0.0, 1e200]))


def test_serie_longa_sem_underflow(params_bd):
    _, y = simulate(params_bd, 20_000, seed=9)
    valor = log_marginal_likelihood(params_bd, y)
    assert np.isfinite(valor) and valor < 0


def test_filtro_comeca_na_estacionaria(params_dois_estados, serie_curta):
    alfas = filtrar(params_dois_estados, serie_curta)
    assert alfas.shape == (51, 2)
    np.testing.assert_allclose(alfas[0], [0.5, 0.5])
    np.testing.assert_allclose(alfas.sum(axis=1), 1.0)


def test_log_posterior_com_priori_gaussiana(params_dois_estados, serie_curta):
    prior = PriorSpec(TipoPrior.GAUSSIANA, np.zeros(8), np.full(8, 10.0))
    theta = params_dois_estados.vetor_natural()
    esperado = log_marginal_likelihood(params_dois_estados, serie_curta) - 0.5 * np.sum((theta / 10.0) ** 2)
    assert log_posterior(params_dois_estados, serie_curta, prior) == pytest.approx(esperado)

#--------------------------------------------------------------------------------------------------
# GRADIENTE EXATO CONTRA DIFERENÇAS FINITAS
#--------------------------------------------------------------------------------------------------
H = 1e-6


def _U(A_bruto, emissoes, y, pi, prior=None):
    A = project_columns_to_simplex(A_bruto)
    valor = -log_verossimilhanca_fixa(A, emissoes, y, pi)
    if prior is not None:
        valor -= prior.log_prior(HmmParams(A, emissoes))
    return valor


def _diferencas_finitas(params, y, prior=None):
    """Centrais em Â (com π da matriz original fixa) e nos parâmetros naturais da emissão."""
    pi = stationary_distribution(params.A)
    A0 = params.A.copy()
    K = params.K
    g_A = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            mais, menos = A0.copy(), A0.copy()
            mais[i, j] += H
            menos[i, j] -= H
            g_A[i, j] = (_U(mais, params.emissoes, y, pi, prior) - _U(menos, params.emissoes, y, pi, prior)) / (2 * H)
    vetor = params.emissoes.parametros()
    g_em = np.zeros(vetor.size)
    for k in range(vetor.size):
        mais, menos = vetor.copy(), vetor.copy()
        mais[k] += H
        menos[k] -= H
        u_mais = _U(A0, params.emissoes.com_parametros(mais), y, pi, prior)
        u_menos = _U(A0, params.emissoes.com_parametros(menos), y, pi, prior)
        g_em[k] = (u_mais - u_menos) / (2 * H)
    return np.concatenate([g_A.ravel(), g_em])


@pytest.mark.parametrize("familia", ["GAUSSIANA", "BERNOULLI"])
@pytest.mark.parametrize("semente", range(12))
def test_gradiente_exato_contra_diferencas_finitas(params_aleatorios, familia, semente):
    rng = np.random.default_rng(1000 + semente)
    K = int(rng.integers(1, 6))
    T = int(rng.integers(20, 201))
    params = params_aleatorios(rng, K, familia)
    _, y = simulate(params, T, seed=semente)
    exato = exact_grad_U(params, y).vetor()
    fd = _diferencas_finitas(params, y)
    np.testing.assert_allclose(exato, fd, rtol=1e-5, atol=1e-5 * max(1.0, np.max(np.abs(fd))))


def test_gradiente_com_priori_gaussiana(params_aleatorios):
    rng = np.random.default_rng(77)
    params = params_aleatorios(rng, 3)
    _, y = simulate(params, 60, seed=1)
    n = params.vetor_natural().size
    prior = PriorSpec(TipoPrior.GAUSSIANA, np.full(n, 0.3), np.full(n, 0.7))
    exato = exact_grad_U(params, y, prior).vetor()
    fd = _diferencas_finitas(params, y, prior)
    np.testing.assert_allclose(exato, fd, rtol=1e-5, atol=1e-5 * max(1.0, np.max(np.abs(fd))))


def test_gradiente_um_estado_um_ponto():
    params = HmmParams(np.array([[1.0]]), Gaussiana([0.5], [2.0]))
    g = exact_grad_U(params, np.array([1.7]))
    assert g.emission_grad[0] == pytest.approx((0.5 - 1.7) / 2.0)
    np.testing.assert_array_equal(g.a_grad, [[0.0]])

#--------------------------------------------------------------------------------------------------
# PROJEÇÃO NO SIMPLEX
#--------------------------------------------------------------------------------------------------
def test_projecao_no_simplex():
    A = np.array([[0.9, 0.2], [0.1, 0.8]])
    np.testing.assert_allclose(project_columns_to_simplex(A), A)
    np.testing.assert_allclose(project_columns_to_simplex(np.array([[-1.0], [3.0]])), [[0.25], [0.75]])
    np.testing.assert_allclose(project_columns_to_simplex(np.array([[0.0], [5.0]])), [[0.0], [1.0]])


def test_projecao_coluna_nula():
    with pytest.raises(ZeroColumn):
        project_columns_to_simplex(np.array([[0.0, 1.0], [0.0, 1.0]]))
