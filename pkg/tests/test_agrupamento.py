# tests/test_agrupamento.py: embedding das janelas, semeadura kmeans++ e Lloyd
import numpy as np
import pytest

from csg_hmm.core.agrupamento import (
    ClusterModel,
    Preprocessamento,
    agrupar_particao,
    embed,
    embed_particao,
    kmeans_fit,
    kmeanspp_seed,
)
from csg_hmm.core.erros import TooManyClusters
from csg_hmm.core.subcadeias import partition


def test_embed_ordenado_ignora_posicao_do_pico():
    np.testing.assert_array_equal(embed([1, 0, 0, 0, 0], Preprocessamento.ORDENAR), [0, 0, 0, 0, 1])
    np.testing.assert_array_equal(embed([1, 0, 2]), [1, 0, 2])
    np.testing.assert_array_equal(
        embed([1, 0, 0, 0, 0], Preprocessamento.ORDENAR), embed([0, 0, 1, 0, 0], Preprocessamento.ORDENAR)
    )


def test_embed_da_particao_descarta_sobra():
    y = np.arange(12, dtype=float)
    X = embed_particao(y, partition(12, 5))
    np.testing.assert_array_equal(X, [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]])


def test_semeadura_com_M_igual_ao_numero_de_pontos():
    X = np.array([[0.0], [1.0], [5.0]])
    C = kmeanspp_seed(X, 3, seed=0)
    assert sorted(C.ravel().tolist()) == [0.0, 1.0, 5.0]


def test_semeadura_separa_blobs_bem_separados():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.uniform(0, 1, size=(20, 2)), rng.uniform(100, 101, size=(20, 2))])
    for s in range(100):
        C = kmeanspp_seed(X, 2, seed=s)
        assert (C[:, 0] > 50).sum() == 1


def test_semeadura_um_cluster_escolhe_um_ponto():
    X = np.arange(10, dtype=float)[:, None]
    C = kmeanspp_seed(X, 1, seed=4)
    assert C.shape == (1, 1) and C[0, 0] in X.ravel()


def test_pontos_repetidos_contam_uma_vez():
    X = np.vstack([np.ones((4, 3)), np.zeros((1, 3)), np.full((1, 3), 5.0)])
    modelo = kmeans_fit(X, 3, seed=1)
    assert modelo.tamanhos.sum() == 6
    assert np.all(modelo.tamanhos >= 1)
    assert sorted(modelo.tamanhos.tolist()) == [1, 1, 4]


def test_mais_clusters_que_pontos():
    with pytest.raises(TooManyClusters):
        kmeans_fit(np.zeros((3, 2)), 4, seed=0)


def test_mais_clusters_que_vetores_distintos():
    with pytest.raises(TooManyClusters) as exc:
        kmeans_fit(np.ones((6, 3)), 3, seed=1)
    assert exc.value.detalhes["distintos"] == 1
    with pytest.raises(TooManyClusters):
        kmeanspp_seed(np.array([[0.0], [0.0], [2.0]]), 3, seed=0)
    assert kmeanspp_seed(np.array([[0.0], [0.0], [2.0]]), 2, seed=0).shape == (2, 1)


def test_wcss_nao_cresce_ao_longo_das_iteracoes():
    X = np.random.default_rng(3).normal(size=(300, 5))
    modelo = kmeans_fit(X, 6, seed=2)
    h = np.array(modelo.historico_wcss)
    assert np.all(np.diff(h) <= 1e-9 * h[0])


def test_cada_centro_tem_um_rotulo_e_serializacao():
    rng = np.random.default_rng(5)
    y = rng.normal(size=103)
    p = partition(103, 5)
    modelo = agrupar_particao(y, p, 4, seed=0)
    assert modelo.cobre(p)
    assert modelo.rotulos.shape == (p.n_subcadeias,)
    assert sum(modelo.membros(m).size for m in range(4)) == p.n_subcadeias
    copia = ClusterModel.de_dict(modelo.para_dict())
    np.testing.assert_array_equal(copia.rotulos, modelo.rotulos)
    np.testing.assert_allclose(copia.centroides, modelo.centroides)


def test_janelas_com_pico_raro_ficam_isoladas():
    """Janelas com um valor do estado raro (10σ acima) não se misturam às janelas comuns."""
    rng = np.random.default_rng(7)
    n, L = 400, 5
    X = rng.normal(0.0, 1.0, size=(n, L))
    raras = rng.choice(n, size=30, replace=False)
    for i in raras:
        X[i, rng.integers(L)] += 20.0
    e_rara = np.zeros(n, dtype=bool)
    e_rara[raras] = True
    X_ord = np.sort(X, axis=1)
    modelo = kmeans_fit(X_ord, 5, seed=0, preprocessamento=Preprocessamento.ORDENAR)
    puros = 0
    for m in range(5):
        membros = modelo.rotulos == m
        puros += max(np.sum(membros & e_rara), np.sum(membros & ~e_rara))
    assert puros / n >= 0.99


def test_reinicios_ficam_com_o_menor_wcss():
    X = np.random.default_rng(9).normal(size=(200, 3))
    varios = kmeans_fit(X, 5, seed=3, reinicios=8)
    individuais = [
        kmeans_fit(X, 5, seed=np.random.default_rng(s)).wcss for s in np.random.SeedSequence(3).spawn(8)
    ]
    assert varios.wcss == pytest.approx(min(individuais))


def test_variancia_intra_por_coordenada():
    X = np.array([[0.0, 2.0], [2.0, 0.0], [10.0, 10.0], [10.0, 10.0]])
    modelo = kmeans_fit(X, 2, seed=0, reinicios=5)
    # cluster {(0,2),(2,0)} com centróide (1,1): WCSS = 4 sobre 8 coordenadas
    assert modelo.wcss == pytest.approx(4.0)
    assert modelo.variancia_intra == pytest.approx(0.5)
