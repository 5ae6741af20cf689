# tests/test_amostradores.py: passo SGLD, regra do buffer e os dois amostradores
import numpy as np
import pytest

from csg_hmm.core import amostradores
from csg_hmm.core.agrupamento import agrupar_particao
from csg_hmm.core.amostradores import (
    SgldConfig,
    buffer_from_spectral_gap,
    cabecalho_trace,
    run_csgmcmc,
    run_sgmcmc,
    sgld_step,
)
from csg_hmm.core.erros import ErroDeValidacao, NonFiniteGradient
from csg_hmm.core.eventos import TipoEvento
from csg_hmm.core.hmm import HmmParams, log_posterior, project_columns_to_simplex, simulate
from csg_hmm.core.subcadeias import MinibatchPlan, full_subseries_grad, partition
from csg_hmm.emissoes.gaussiana import Gaussiana

#--------------------------------------------------------------------------------------------------
# PASSO SGLD
#--------------------------------------------------------------------------------------------------
def test_gradiente_nulo_sem_ruido_nao_move():
    theta = np.array([1.0, -2.0, 3.0])
    novo = sgld_step(theta, np.zeros(3), 0.1, False, np.random.default_rng(0))
    np.testing.assert_array_equal(novo, theta)


def test_passo_deterministico():
    theta = np.array([1.0, 2.0])
    g = np.array([4.0, -2.0])
    novo = sgld_step(theta, g, 0.5, False, np.random.default_rng(0))
    np.testing.assert_allclose(novo, theta - 0.25 * g)


def test_ruido_calibrado():
    rng = np.random.default_rng(123)
    eps = 0.01
    amostras = np.array([sgld_step(np.zeros(3), np.zeros(3), eps, True, rng) for _ in range(10_000)])
    np.testing.assert_allclose(np.var(amostras, axis=0, ddof=1), eps, rtol=0.05)


def test_gradiente_nao_finito():
    with pytest.raises(NonFiniteGradient):
        sgld_step(np.zeros(2), np.array([np.nan, 0.0]), 0.1, False, np.random.default_rng(0))


def test_passo_decrescente():
    cfg = SgldConfig(a=1.0, b=1.0, gamma=0.5)
    assert cfg.passo(3) == pytest.approx(0.5)
    with pytest.raises(ErroDeValidacao):
        SgldConfig(a=0.0)

#--------------------------------------------------------------------------------------------------
# BUFFER
#--------------------------------------------------------------------------------------------------
def test_buffer_pelo_gap():
    assert buffer_from_spectral_gap(np.array([[0.9, 0.1], [0.1, 0.9]]), c=1.0) == 5
    assert buffer_from_spectral_gap(np.array([[1.0]]), c=1.0) == 1


def test_buffer_limitado():
    A = np.array([[0.999, 0.001], [0.001, 0.999]])  # gap 0.002 -> 500
    assert buffer_from_spectral_gap(A, c=1.0, T=1000) == 100
    assert buffer_from_spectral_gap(A, c=1.0, buffer_max=42) == 42
    periodica = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert buffer_from_spectral_gap(periodica, T=200) == 20

#--------------------------------------------------------------------------------------------------
# INSTÂNCIA PEQUENA
#--------------------------------------------------------------------------------------------------
@pytest.fixture
def instancia():
    params = HmmParams(np.array([[0.8, 0.3], [0.2, 0.7]]), Gaussiana([-1.0, 2.0], [1.0, 1.5]))
    _, y = simulate(params, 60, seed=3)
    return params, y


def _descida_completa(params, y, eps):
    """Um passo de gradiente completo conjunto em (Â, μ, log σ²)."""
    p = partition(y.size, 5, B=y.size)
    g = full_subseries_grad(params, y, p)
    A_bruto = params.A - 0.5 * eps * g.a_grad / np.abs(params.A).sum(axis=0)
    psi = params.emissoes.para_irrestrito() - 0.5 * eps * g.emission_grad * params.emissoes.jacobiano()
    return HmmParams(project_columns_to_simplex(A_bruto), params.emissoes.de_irrestrito(psi))

#--------------------------------------------------------------------------------------------------
# SG-MCMC
#--------------------------------------------------------------------------------------------------
def test_sgmcmc_um_passo_igual_a_descida_composta(instancia):
    params, y = instancia
    eps = 1e-3
    cfg = SgldConfig(a=eps, injetar_ruido=False, n_iter=1, n_passos=1, c_buffer=1e9, buffer_max=y.size)
    p = partition(y.size, 5)
    trace = run_sgmcmc(y, cfg, p, MinibatchPlan.uniforme(p.n_subcadeias), params)
    assert trace.registros[0].B == y.size

    # passo em A com φ fixo, depois φ com o A novo
    p_total = p.com_buffer(y.size)
    g = full_subseries_grad(params, y, p_total)
    A_novo = project_columns_to_simplex(params.A - 0.5 * eps * g.a_grad)
    g2 = full_subseries_grad(params.com(A=A_novo), y, p_total)
    psi = params.emissoes.para_irrestrito() - 0.5 * eps * g2.emission_grad * params.emissoes.jacobiano()
    final = trace.params_final
    np.testing.assert_allclose(final.A, A_novo, atol=1e-10)
    np.testing.assert_allclose(final.emissoes.parametros(), params.emissoes.de_irrestrito(psi).parametros(), atol=1e-10)


def test_sgmcmc_um_estado_mantem_A():
    params = HmmParams(np.array([[1.0]]), Gaussiana([0.0], [1.0]))
    y = np.random.default_rng(1).normal(size=100)
    cfg = SgldConfig(a=1e-3, n_iter=15, n_passos=2, seed=4)
    trace = run_sgmcmc(y, cfg, partition(100, 5), MinibatchPlan.uniforme(4), params)
    assert len(trace) == 15
    for r in trace.registros:
        np.testing.assert_array_equal(r.params.A, [[1.0]])


def test_sgmcmc_determinista(instancia):
    params, y = instancia
    cfg = SgldConfig(a=1e-3, n_iter=10, n_passos=3, seed=17)
    p = partition(y.size, 5)
    t1 = run_sgmcmc(y, cfg, p, MinibatchPlan.uniforme(3), params)
    t2 = run_sgmcmc(y, cfg, p, MinibatchPlan.uniforme(3), params)
    assert t1.linhas() == t2.linhas()


def test_sgmcmc_emite_iteracoes(instancia):
    params, y = instancia
    eventos = []
    cfg = SgldConfig(a=1e-3, n_iter=4, seed=1)
    run_sgmcmc(y, cfg, partition(y.size, 5), MinibatchPlan.uniforme(2), params, emissor=eventos.append)
    assert [e.payload["iteracao"] for e in eventos] == [1, 2, 3, 4]
    assert all(e.tipo is TipoEvento.ITERACAO_CONCLUIDA for e in eventos)
    assert eventos[0].payload["cabecalho"] == cabecalho_trace(params)


def test_sgmcmc_rejeita_plano_estratificado(instancia):
    params, y = instancia
    with pytest.raises(ErroDeValidacao):
        run_sgmcmc(y, SgldConfig(), partition(y.size, 5), MinibatchPlan.estratificado([1]), params)

#--------------------------------------------------------------------------------------------------
# CSG-MCMC
#--------------------------------------------------------------------------------------------------
def test_csgmcmc_censo_sem_ruido_e_descida_completa(instancia):
    params, y = instancia
    eps = 1e-3
    p = partition(y.size, 5, B=y.size)
    clusters = agrupar_particao(y, p, 3, seed=0)
    cotas = clusters.tamanhos.tolist()
    cfg = SgldConfig(a=eps, injetar_ruido=False, n_iter=3, seed=0)
    trace = run_csgmcmc(y, cfg, p, clusters, MinibatchPlan.estratificado(cotas), params)
    referencia = params
    for r in trace.registros:
        referencia = _descida_completa(referencia, y, eps)
        np.testing.assert_allclose(r.params.A, referencia.A, atol=1e-10)
        np.testing.assert_allclose(r.params.emissoes.parametros(), referencia.emissoes.parametros(), atol=1e-10)


def test_csgmcmc_mantem_restricoes(params_bd, serie_bd):
    p = partition(serie_bd.size, 5, B=buffer_from_spectral_gap(params_bd.A))
    clusters = agrupar_particao(serie_bd, p, 4, seed=2)
    inicial = HmmParams(np.full((4, 4), 0.25), Gaussiana([-5.0, -2.0, 1.0, 4.0], [3.0] * 4))
    cfg = SgldConfig(a=1e-6, n_iter=25, seed=8)
    trace = run_csgmcmc(serie_bd, cfg, p, clusters, MinibatchPlan.estratificado([4, 4, 4, 4]), inicial)
    assert not trace.abortado
    for r in trace.registros:
        np.testing.assert_allclose(r.params.A.sum(axis=0), 1.0, atol=1e-12)
        assert np.all(r.params.A >= 0)
        assert np.all(r.params.emissoes.variancias > 0)
        assert r.B == p.B and len(r.centros) == 16
    tempos = [r.tempo_decorrido for r in trace.registros]
    assert tempos == sorted(tempos)


def test_csgmcmc_determinista(instancia):
    params, y = instancia
    p = partition(y.size, 5, B=4)
    clusters = agrupar_particao(y, p, 2, seed=0)
    cfg = SgldConfig(a=1e-3, n_iter=8, seed=5)
    plano = MinibatchPlan.estratificado([1, 1])
    t1 = run_csgmcmc(y, cfg, p, clusters, plano, params)
    t2 = run_csgmcmc(y, cfg, p, clusters, plano, params)
    assert t1.linhas() == t2.linhas()


def test_divergencia_marca_trace_e_emite_evento(instancia):
    params, y = instancia
    p = partition(y.size, 5, B=4)
    clusters = agrupar_particao(y, p, 2, seed=0)
    eventos = []
    cfg = SgldConfig(a=1e300, injetar_ruido=False, n_iter=50, seed=0)
    trace = run_csgmcmc(y, cfg, p, clusters, MinibatchPlan.estratificado([1, 1]), params, emissor=eventos.append)
    assert trace.abortado
    assert trace.diagnostico["tipo"] in ("NonFiniteGradient", "ZeroColumn", "DegenerateLikelihood")
    assert len(trace) < 50
    assert eventos[-1].tipo is TipoEvento.DIVERGENCIA


def test_descida_em_censo_nao_aumenta_a_perda(params_dois_estados):
    _, y = simulate(params_dois_estados, 500, seed=13)
    p = partition(y.size, 5, B=y.size)
    clusters = agrupar_particao(y, p, 3, seed=0)
    inicial = HmmParams(np.full((2, 2), 0.5), Gaussiana([0.5, 2.0], [2.0, 2.0]))
    cfg = SgldConfig(a=1e-5, injetar_ruido=False, n_iter=20, seed=0)
    trace = run_csgmcmc(y, cfg, p, clusters, MinibatchPlan.estratificado(clusters.tamanhos.tolist()), inicial)
    perdas = [-log_posterior(inicial, y)] + [-log_posterior(r.params, y) for r in trace.registros]
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(perdas, perdas[1:]))
    assert perdas[-1] < perdas[0]


@pytest.mark.parametrize("algoritmo", ["sgmcmc", "csgmcmc"])
def test_cadeia_redutivel_apos_projecao_aborta(instancia, monkeypatch, algoritmo):
    params, y = instancia
    # toda projeção devolve a identidade; o SG-MCMC já usa o A novo no passo de φ da iteração 1
    monkeypatch.setattr(amostradores, "_projetar", lambda A_bruto: np.eye(A_bruto.shape[0]))
    eventos = []
    cfg = SgldConfig(a=1e-3, n_iter=5, seed=0, buffer_max=4)
    p = partition(y.size, 5, B=4)
    if algoritmo == "sgmcmc":
        trace = run_sgmcmc(y, cfg, p, MinibatchPlan.uniforme(2), params, emissor=eventos.append)
    else:
        clusters = agrupar_particao(y, p, 2, seed=0)
        trace = run_csgmcmc(y, cfg, p, clusters, MinibatchPlan.estratificado([1, 1]), params, emissor=eventos.append)
    assert trace.abortado
    assert trace.diagnostico["tipo"] == "ReducibleChain"
    esperada = 1 if algoritmo == "sgmcmc" else 2
    assert trace.diagnostico["iteracao"] == esperada
    assert len(trace) == esperada - 1
    assert eventos[-1].tipo is TipoEvento.DIVERGENCIA
