# csg_hmm/core/avaliacao.py: métricas (preditiva, intervalos, erro de A, variância do gradiente, oráculo conjugado)
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import permutations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from csg_hmm.core.agrupamento import ClusterModel
from csg_hmm.core.erros import DegenerateLikelihood, ErroDeValidacao, ShapeMismatch
from csg_hmm.core.hmm import PRIORI_PLANA, GradientEstimate, HmmParams, PriorSpec, TipoEstimativa, filtrar, validar_serie
from csg_hmm.core.subcadeias import (
    MinibatchPlan,
    SubchainPartition,
    full_subseries_grad,
    stratified_grad,
    termos_locais,
    uniform_minibatch_grad,
)
#--------------------------------------------------------------------------------------------------
# CONSULTAS
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PredictiveQuery:
    holdout: np.ndarray
    horizonte: int = 10
    nivel: float = 0.95

    def __post_init__(self) -> None:
        if self.horizonte < 1:
            raise ErroDeValidacao("Horizonte deve ser >= 1.", detalhes={"horizonte": self.horizonte})
        if not 0.0 < self.nivel < 1.0:
            raise ErroDeValidacao("Nível deve estar em (0, 1).", detalhes={"nivel": self.nivel})
        object.__setattr__(self, "holdout", validar_serie(self.holdout))

#--------------------------------------------------------------------------------------------------
# PREDITIVA k PASSOS À FRENTE
#--------------------------------------------------------------------------------------------------
def k_step_log_predictive(params: HmmParams, holdout: np.ndarray, k: int = 10) -> float:
    """Σ_t log[1ᵀ P(y'_{t+k}) Aᵏ α_t], t = 1..T'-k, com α_t o filtro sob `params`."""
    y = validar_serie(holdout)
    if k < 1 or y.size <= k:
        raise ErroDeValidacao("Precisa de k >= 1 e holdout maior que k.", detalhes={"k": k, "T": y.size})
    alfas = filtrar(params, y)[1 : y.size - k + 1]
    preditas = alfas @ np.linalg.matrix_power(params.A, k).T
    logp = params.emissoes.log_densidade(y[k:])
    termos = special.logsumexp(logp, b=preditas, axis=1)
    if not np.all(np.isfinite(termos)):
        raise DegenerateLikelihood("Densidade preditiva nula.", detalhes={"k": k})
    return float(np.sum(termos))


def consultar(params: HmmParams, consulta: PredictiveQuery) -> float:
    return k_step_log_predictive(params, consulta.holdout, consulta.horizonte)

#--------------------------------------------------------------------------------------------------
# INTERVALOS PREDITIVOS
#--------------------------------------------------------------------------------------------------
def _pesos_preditos(params: HmmParams, alfa: np.ndarray, k: int) -> np.ndarray:
    alfa = np.asarray(alfa, dtype=float)
    if alfa.shape != (params.K,) or np.any(alfa < 0) or not np.isclose(alfa.sum(), 1.0):
        raise ErroDeValidacao("α deve ser um vetor de probabilidade.", detalhes={"alfa": alfa.tolist()})
    if k < 0:
        raise ErroDeValidacao("k deve ser >= 0.", detalhes={"k": k})
    return np.linalg.matrix_power(params.A, k) @ alfa


def predictive_interval(params: HmmParams, alfa: np.ndarray, k: int, nivel: float = 0.95) -> Tuple[float, float]:
    """Intervalo de caudas iguais da mistura Σ_j (Aᵏα)_j p_j.

    Suporte discreto: menores valores cuja CDF atinge cada cauda.
    Contínuo: bissecção na CDF da mistura.
    """
    if not 0.0 < nivel < 1.0:
        raise ErroDeValidacao("Nível deve estar em (0, 1).", detalhes={"nivel": nivel})
    w = _pesos_preditos(params, alfa, k)
    emissoes = params.emissoes
    q_baixo, q_alto = (1.0 - nivel) / 2.0, (1.0 + nivel) / 2.0

    def cdf(v: float) -> float:
        return float(np.dot(w, emissoes.cdf(v)))

    suporte = emissoes.suporte_discreto()
    if suporte is not None:
        acumulada = np.array([cdf(s) for s in suporte])
        lo = suporte[int(np.argmax(acumulada >= q_baixo - 1e-15))]
        hi = suporte[int(np.argmax(acumulada >= q_alto - 1e-15))]
        return float(lo), float(hi)

    centros = emissoes.centros()
    return _quantil(cdf, q_baixo, centros), _quantil(cdf, q_alto, centros)


def _quantil(cdf, q: float, centros: np.ndarray) -> float:
    a, b = float(np.min(centros)) - 1.0, float(np.max(centros)) + 1.0
    largura = 1.0
    while cdf(a) > q:
        largura *= 2.0
        a -= largura
    largura = 1.0
    while cdf(b) < q:
        largura *= 2.0
        b += largura
    return float(optimize.bisect(lambda v: cdf(v) - q, a, b, xtol=1e-12, maxiter=500))


def intervalos_ao_fim(
    params: HmmParams,
    y_treino: np.ndarray,
    horizonte: int = 10,
    nivel: float = 0.95,
) -> List[Dict[str, float]]:
    """Intervalos para k = 1..horizonte a partir do filtro no fim da série de treino."""
    alfa = filtrar(params, y_treino)[-1]
    linhas = []
    for k in range(1, horizonte + 1):
        lo, hi = predictive_interval(params, alfa, k, nivel)
        linhas.append({"k": k, "nivel": nivel, "inferior": lo, "superior": hi})
    return linhas

#--------------------------------------------------------------------------------------------------
# ERRO NA MATRIZ DE TRANSIÇÃO
#--------------------------------------------------------------------------------------------------
MAX_K_PERMUTACOES = 8   # o mínimo enumera as K! reordenações


class NormaMatriz(Enum):
    FROBENIUS = "FROBENIUS"
    ESPECTRAL = "ESPECTRAL"


def _checar_k_permutacoes(K: int) -> None:
    if K > MAX_K_PERMUTACOES:
        raise ErroDeValidacao(
            f"Erro com permutações só é calculado até K = {MAX_K_PERMUTACOES}.",
            detalhes={"K": K, "max": MAX_K_PERMUTACOES},
        )


def transition_error(
    A: np.ndarray,
    A_ref: np.ndarray,
    norma: NormaMatriz = NormaMatriz.FROBENIUS,
    considerar_permutacoes: bool = False,
) -> float:
    """‖A - A_ref‖; com permutações, o mínimo sobre reordenações conjuntas de linhas e colunas de A."""
    A = np.asarray(A, dtype=float)
    A_ref = np.asarray(A_ref, dtype=float)
    if A.shape != A_ref.shape or A.ndim != 2:
        raise ShapeMismatch("Matrizes com formas diferentes.", detalhes={"A": A.shape, "A_ref": A_ref.shape})
    ordem = "fro" if norma is NormaMatriz.FROBENIUS else 2
    if not considerar_permutacoes:
        return float(np.linalg.norm(A - A_ref, ordem))
    _checar_k_permutacoes(A.shape[0])
    return float(min(
        np.linalg.norm(A[np.ix_(p, p)] - A_ref, ordem) for p in permutations(range(A.shape[0]))
    ))


def melhor_permutacao(A: np.ndarray, A_ref: np.ndarray) -> Tuple[int, ...]:
    """Permutação que realiza o mínimo de Frobenius (usada para alinhar rótulos nos relatórios)."""
    _checar_k_permutacoes(np.asarray(A).shape[0])
    return min(
        permutations(range(A.shape[0])),
        key=lambda p: float(np.linalg.norm(A[np.ix_(p, p)] - A_ref)),
    )

#--------------------------------------------------------------------------------------------------
# VARIÂNCIA DO GRADIENTE POR MONTE CARLO
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class EspecificacaoEstimador:
    """Qual estimador avaliar: FULL, UNIFORM (plano uniforme) ou STRATIFIED (plano + clusters)."""
    tipo: TipoEstimativa
    plano: Optional[MinibatchPlan] = None
    clusters: Optional[ClusterModel] = None

    def __post_init__(self) -> None:
        if self.tipo is not TipoEstimativa.FULL and self.plano is None:
            raise ErroDeValidacao("Estimador com subamostragem precisa de plano.")
        if self.tipo is TipoEstimativa.STRATIFIED and self.clusters is None:
            raise ErroDeValidacao("Estimador estratificado precisa de clusters.")

    def estimar(
        self,
        params: HmmParams,
        y: np.ndarray,
        particao: SubchainPartition,
        rng: np.random.Generator,
        prior: PriorSpec = PRIORI_PLANA,
    ) -> GradientEstimate:
        if self.tipo is TipoEstimativa.UNIFORM:
            return uniform_minibatch_grad(params, y, particao, self.plano, prior, rng=rng)
        if self.tipo is TipoEstimativa.STRATIFIED:
            return stratified_grad(params, y, particao, self.clusters, self.plano, prior, rng=rng)
        return full_subseries_grad(params, y, particao, prior)


@dataclass(frozen=True, eq=False)
class ResultadoVariancia:
    variancias: np.ndarray
    media: float


def gradient_variance_mc(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    estimador: EspecificacaoEstimador,
    reps: int,
    seed: Optional[int] = None,
    prior: PriorSpec = PRIORI_PLANA,
    workers: int = 1,
) -> ResultadoVariancia:
    """Variância amostral (ddof=1) por componente de `reps` estimativas independentes em θ fixo."""
    if reps < 2:
        raise ErroDeValidacao("reps deve ser >= 2.", detalhes={"reps": reps})
    y = validar_serie(y)
    sementes = np.random.SeedSequence(seed).spawn(reps)

    def rodar(semente: np.random.SeedSequence) -> np.ndarray:
        return estimador.estimar(params, y, particao, np.random.default_rng(semente), prior).vetor()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            amostras = list(pool.map(rodar, sementes))
    else:
        amostras = [rodar(s) for s in sementes]
    variancias = np.var(np.vstack(amostras), axis=0, ddof=1)
    return ResultadoVariancia(variancias, float(np.mean(variancias)))


def dispersoes_por_cluster(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    clusters: ClusterModel,
    n_piloto: int = 30,
    seed: Optional[int] = None,
    workers: int = 1,
) -> np.ndarray:
    """Piloto da alocação de cotas: para cada cluster, média entre componentes da variância
    (ddof=1) dos termos locais de até `n_piloto` membros sorteados. Cluster unitário fica com 0."""
    if n_piloto < 2:
        raise ErroDeValidacao("n_piloto deve ser >= 2.", detalhes={"n_piloto": n_piloto})
    y = validar_serie(y)
    rng = np.random.default_rng(seed)
    dispersoes = np.zeros(clusters.M)
    for m in range(clusters.M):
        membros = clusters.membros(m)
        if membros.size < 2:
            continue
        escolhidos = np.sort(rng.choice(membros, size=min(n_piloto, membros.size), replace=False))
        termos = termos_locais(params, y, particao, escolhidos, TipoEstimativa.STRATIFIED, workers)
        vetores = np.vstack([t.vetor() for t in termos])
        dispersoes[m] = float(np.mean(np.var(vetores, axis=0, ddof=1)))
    return dispersoes

#--------------------------------------------------------------------------------------------------
# ORÁCULO CONJUGADO (ESTADOS TRATADOS COMO CONHECIDOS)
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ConjugateOracleSpec:
    """Emissão Gaussiana de variância conhecida, priori Normal nas médias e Dirichlet por coluna de A.

    `medias_referencia` define a atribuição de estados pela média mais próxima
    (empates vão para o menor índice).
    """
    variancia: float
    medias_prior: np.ndarray
    variancias_prior: np.ndarray
    dirichlet: np.ndarray
    medias_referencia: np.ndarray

    def __post_init__(self) -> None:
        K = np.asarray(self.medias_referencia).size
        if not self.variancia > 0:
            raise ErroDeValidacao("σ² deve ser > 0.", detalhes={"variancia": self.variancia})
        medias = np.broadcast_to(np.asarray(self.medias_prior, dtype=float), (K,)).copy()
        variancias = np.broadcast_to(np.asarray(self.variancias_prior, dtype=float), (K,)).copy()
        dirichlet = np.broadcast_to(np.asarray(self.dirichlet, dtype=float), (K, K)).copy()
        if np.any(variancias <= 0) or np.any(dirichlet <= 0):
            raise ErroDeValidacao("Hiperparâmetros da priori devem ser positivos.")
        object.__setattr__(self, "medias_prior", medias)
        object.__setattr__(self, "variancias_prior", variancias)
        object.__setattr__(self, "dirichlet", dirichlet)
        object.__setattr__(self, "medias_referencia", np.asarray(self.medias_referencia, dtype=float).ravel())

    @property
    def K(self) -> int:
        return self.medias_referencia.size


@dataclass(frozen=True, eq=False)
class PosteriorConjugada:
    medias: np.ndarray
    variancias: np.ndarray
    dirichlet: np.ndarray
    contagens_estados: np.ndarray
    contagens_transicoes: np.ndarray


def atribuir_estados(y: np.ndarray, medias_referencia: np.ndarray) -> np.ndarray:
    """Média de referência mais próxima; argmin devolve o primeiro índice em empates."""
    return np.argmin(np.abs(np.asarray(y, dtype=float)[:, None] - medias_referencia[None, :]), axis=1)


def conjugate_oracle(
    y: np.ndarray,
    spec: ConjugateOracleSpec,
    particao: Optional[SubchainPartition] = None,
    centros: Optional[Sequence[int]] = None,
) -> PosteriorConjugada:
    """Posteriores conjugadas com estatísticas suficientes N_j, Σy_j e N_{ij}.

    Com `particao` e `centros`, as estatísticas vêm só dos núcleos dessas subcadeias
    (transições contadas dentro de cada núcleo).
    """
    y = np.asarray(y, dtype=float).ravel()
    K = spec.K
    if centros is not None and particao is not None:
        segmentos = [y[slice(*particao.nucleo(tau))] for tau in centros]
    else:
        segmentos = [y]
    N = np.zeros(K)
    somas = np.zeros(K)
    transicoes = np.zeros((K, K))
    for seg in segmentos:
        if seg.size == 0:
            continue
        x = atribuir_estados(seg, spec.medias_referencia)
        N += np.bincount(x, minlength=K)
        somas += np.bincount(x, weights=seg, minlength=K)
        # transicoes[i, j]: número de passos j -> i
        np.add.at(transicoes, (x[1:], x[:-1]), 1.0)

    s2, s02, m0 = spec.variancia, spec.variancias_prior, spec.medias_prior
    var_post = s2 * s02 / (s2 + N * s02)
    media_post = var_post * (m0 / s02 + somas / s2)
    sem_dados = N == 0
    var_post = np.where(sem_dados, s02, var_post)
    media_post = np.where(sem_dados, m0, media_post)
    return PosteriorConjugada(media_post, var_post, spec.dirichlet + transicoes, N, transicoes)
