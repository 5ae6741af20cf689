# csg_hmm/core/subcadeias.py: partição em subcadeias, mensagens com buffer e estimadores de gradiente
from __future__ import annotations
import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from csg_hmm.core.erros import (
    EmptyCluster,
    ErroDeValidacao,
    InfeasibleGap,
    InvalidLength,
    QuotaExceedsCluster,
    ShapeMismatch,
)
from csg_hmm.core.hmm import (
    PRIORI_PLANA,
    GradientEstimate,
    HmmParams,
    PriorSpec,
    TipoEstimativa,
    direcao_tangente,
    gradiente_segmento,
    propagar_adiante,
    propagar_atras,
    stationary_distribution,
    termo_prior,
    validar_serie,
    verossimilhancas_escaladas,
)

if TYPE_CHECKING:
    from csg_hmm.core.agrupamento import ClusterModel

MAX_TENTATIVAS_GAP = 1000

#--------------------------------------------------------------------------------------------------
# PARTIÇÃO
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class SubchainPartition:
    """Subcadeias consecutivas de comprimento ímpar L.

    Centros τ_k = ((2k-1)L+1)/2 contados a partir de 1, k = 1..⌊T/L⌋.
    A sobra final (< L observações) não pertence a nenhuma subcadeia.
    """
    T: int
    L: int
    B: int = 0
    nu: int = 0

    def __post_init__(self) -> None:
        if self.L < 1 or self.L % 2 == 0 or self.L > self.T:
            raise InvalidLength(
                "Comprimento de subcadeia deve ser ímpar e estar em [1, T].",
                detalhes={"T": self.T, "L": self.L},
            )
        if self.B < 0 or self.nu < 0:
            raise ErroDeValidacao("Buffer e espaçamento devem ser >= 0.", detalhes={"B": self.B, "nu": self.nu})

    @property
    def n_subcadeias(self) -> int:
        return self.T // self.L

    @property
    def centros(self) -> np.ndarray:
        k = np.arange(1, self.n_subcadeias + 1)
        return ((2 * k - 1) * self.L + 1) // 2

    @property
    def meia_largura(self) -> int:
        return (self.L - 1) // 2

    @property
    def espacamento_minimo(self) -> int:
        """τ_j - τ_i precisa exceder isso para dois centros sorteados juntos."""
        return (self.L - 1) + 2 * self.B + self.nu

    def nucleo(self, tau: int) -> Tuple[int, int]:
        """Fatia [inicio, fim) (base 0) das observações do núcleo centrado em τ."""
        inicio = int(tau) - self.meia_largura - 1
        return inicio, inicio + self.L

    def com_buffer(self, B: int) -> "SubchainPartition":
        return SubchainPartition(self.T, self.L, int(B), self.nu)


def partition(T: int, L: int, B: int = 0, nu: int = 0) -> SubchainPartition:
    return SubchainPartition(int(T), int(L), int(B), int(nu))

#--------------------------------------------------------------------------------------------------
# JANELAS COM BUFFER E MENSAGENS DE FRONTEIRA
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BufferedWindow:
    centro: int
    nucleo: np.ndarray
    buffer_esq: np.ndarray
    buffer_dir: np.ndarray
    B: int

    def __post_init__(self) -> None:
        if self.nucleo.size < 1 or self.nucleo.size % 2 == 0:
            raise InvalidLength("Núcleo da janela deve ter comprimento ímpar.", detalhes={"L": self.nucleo.size})
        if self.buffer_esq.size > self.B or self.buffer_dir.size > self.B:
            raise ShapeMismatch(
                "Buffer maior que B.",
                detalhes={"B": self.B, "esq": self.buffer_esq.size, "dir": self.buffer_dir.size},
            )


def janela(y: np.ndarray, particao: SubchainPartition, tau: int) -> BufferedWindow:
    """Recorta núcleo e buffers; nas pontas da série o buffer é truncado."""
    inicio, fim = particao.nucleo(tau)
    B = particao.B
    return BufferedWindow(
        centro=int(tau),
        nucleo=y[inicio:fim],
        buffer_esq=y[max(0, inicio - B) : inicio],
        buffer_dir=y[fim : min(y.size, fim + B)],
        B=B,
    )


def buffered_messages(
    params: HmmParams,
    window: BufferedWindow,
    pi: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(q̄, π̄) normalizadas em L1.

    π̄: mensagem adiante a partir da estacionária através do buffer esquerdo.
    q̄: mensagem para trás a partir de 1 através do buffer direito.
    """
    if pi is None:
        pi = stationary_distribution(params.A)
    K = params.K
    pi_barra = np.asarray(pi, dtype=float) / np.sum(pi)
    if window.buffer_esq.size:
        psi, _ = verossimilhancas_escaladas(params.emissoes, window.buffer_esq)
        pi_barra = propagar_adiante(params.A, psi, pi_barra)[0][-1]
    q_barra = np.full(K, 1.0 / K)
    if window.buffer_dir.size:
        psi, _ = verossimilhancas_escaladas(params.emissoes, window.buffer_dir)
        q_barra = propagar_atras(params.A, psi, q_barra)[0]
    return q_barra, pi_barra

#--------------------------------------------------------------------------------------------------
# TERMO LOCAL E SOMAS
#--------------------------------------------------------------------------------------------------
def local_grad_term(
    params: HmmParams,
    window: BufferedWindow,
    mensagens: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    pi: Optional[np.ndarray] = None,
    kind: TipoEstimativa = TipoEstimativa.FULL,
) -> GradientEstimate:
    """Contribuição de uma subcadeia para ∇U (sem priori).

    `mensagens` = (q̄, π̄) substitui as mensagens calculadas pelos buffers.
    """
    q_barra, pi_barra = buffered_messages(params, window, pi) if mensagens is None else mensagens
    g_A, g_em = gradiente_segmento(params.A, params.emissoes, window.nucleo, pi_barra, q_barra)
    return GradientEstimate(-direcao_tangente(g_A, params.A), -g_em, kind, (window.centro,))


def termos_locais(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    centros: Sequence[int],
    kind: TipoEstimativa,
    workers: int = 1,
) -> List[GradientEstimate]:
    """Termos locais na ordem dos centros recebidos (a ordem de saída não depende de workers)."""
    pi = stationary_distribution(params.A)

    def calcular(tau: int) -> GradientEstimate:
        return local_grad_term(params, janela(y, particao, tau), pi=pi, kind=kind)

    if workers > 1 and len(centros) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(calcular, centros))
    return [calcular(tau) for tau in centros]


def _somar(
    params: HmmParams,
    termos: Sequence[GradientEstimate],
    pesos: Sequence[float],
    kind: TipoEstimativa,
    centros: Sequence[int],
) -> GradientEstimate:
    a_grad = np.zeros((params.K, params.K))
    em_grad = np.zeros(params.emissoes.parametros().size)
    for termo, peso in zip(termos, pesos):
        a_grad = a_grad + peso * termo.a_grad
        em_grad = em_grad + peso * termo.emission_grad
    return GradientEstimate(a_grad, em_grad, kind, tuple(int(c) for c in centros))

#--------------------------------------------------------------------------------------------------
# PLANOS DE MINIBATCH
#--------------------------------------------------------------------------------------------------
class ModoPlano(Enum):
    UNIFORME = "UNIFORME"
    ESTRATIFICADO = "ESTRATIFICADO"


@dataclass(frozen=True)
class MinibatchPlan:
    """Uniforme: S subcadeias. Estratificado: cotas b_1..b_M (uma por cluster)."""
    modo: ModoPlano
    S: int = 0
    cotas: Tuple[int, ...] = field(default_factory=tuple)
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.modo is ModoPlano.UNIFORME and self.S < 1:
            raise ErroDeValidacao("Plano uniforme precisa de S >= 1.", detalhes={"S": self.S})
        if self.modo is ModoPlano.ESTRATIFICADO:
            if not self.cotas:
                raise ErroDeValidacao("Plano estratificado precisa de cotas.")
            if any(b < 1 for b in self.cotas):
                raise ErroDeValidacao("Cotas devem ser >= 1.", detalhes={"cotas": list(self.cotas)})

    @classmethod
    def uniforme(cls, S: int, seed: Optional[int] = None) -> "MinibatchPlan":
        return cls(ModoPlano.UNIFORME, S=int(S), seed=seed)

    @classmethod
    def estratificado(cls, cotas: Sequence[int], seed: Optional[int] = None) -> "MinibatchPlan":
        return cls(ModoPlano.ESTRATIFICADO, cotas=tuple(int(b) for b in cotas), seed=seed)

    @property
    def tamanho_total(self) -> int:
        return self.S if self.modo is ModoPlano.UNIFORME else sum(self.cotas)


def sortear_uniforme(particao: SubchainPartition, S: int, rng: np.random.Generator) -> np.ndarray:
    """S centros distintos, uniformes entre os subconjuntos que respeitam o espaçamento.

    Rejeição do subconjunto inteiro; S = ⌊T/L⌋ é o censo e dispensa o espaçamento.
    """
    n = particao.n_subcadeias
    if not 1 <= S <= n:
        raise ErroDeValidacao("S fora de [1, ⌊T/L⌋].", detalhes={"S": S, "n_subcadeias": n})
    centros = particao.centros
    if S == n:
        return centros
    minimo = particao.espacamento_minimo
    for _ in range(MAX_TENTATIVAS_GAP):
        escolhidos = centros[np.sort(rng.choice(n, size=S, replace=False))]
        if S == 1 or np.all(np.diff(escolhidos) > minimo):
            return escolhidos
    raise InfeasibleGap(
        "Nenhum subconjunto respeitou o espaçamento mínimo.",
        detalhes={"S": S, "n_subcadeias": n, "espacamento_minimo": minimo, "tentativas": MAX_TENTATIVAS_GAP},
    )


def validar_cotas(clusters: "ClusterModel", cotas: Sequence[int]) -> None:
    if len(cotas) != clusters.M:
        raise ShapeMismatch("Uma cota por cluster.", detalhes={"M": clusters.M, "cotas": len(cotas)})
    for m, (n_m, b_m) in enumerate(zip(clusters.tamanhos, cotas)):
        if n_m == 0:
            raise EmptyCluster("Cluster vazio.", detalhes={"cluster": m})
        if b_m > n_m:
            raise QuotaExceedsCluster(
                "Cota maior que o cluster.", detalhes={"cluster": m, "cota": int(b_m), "tamanho": int(n_m)}
            )
        if b_m < 1:
            raise ErroDeValidacao("Cotas devem ser >= 1.", detalhes={"cluster": m, "cota": int(b_m)})


def alocar_cotas(
    S: int,
    tamanhos: Sequence[int],
    dispersoes: Optional[Sequence[float]] = None,
) -> Optional[List[int]]:
    """Cotas inteiras 1 <= b_m <= n_m com Σ b_m = S que minimizam Σ n_m² σ_m² (1/b_m - 1/n_m).

    Sem `dispersoes` (ou com todas nulas) os σ_m são iguais e a divisão fica proporcional
    a n_m. Guloso pelo maior ganho marginal n_m² σ_m² / (b (b+1)); empate vai para o menor m.
    None quando S < M ou S > Σ n_m.
    """
    tamanhos = [int(n) for n in tamanhos]
    M = len(tamanhos)
    if M == 0 or S < M or S > sum(tamanhos):
        return None
    n = np.asarray(tamanhos, dtype=float)
    sigma2 = np.ones(M) if dispersoes is None else np.asarray(dispersoes, dtype=float).ravel()
    if sigma2.shape != (M,):
        raise ShapeMismatch("Uma dispersão por cluster.", detalhes={"M": M, "dispersoes": int(sigma2.size)})
    if not np.any(sigma2 > 0):
        sigma2 = np.ones(M)
    peso = n**2 * np.maximum(sigma2, 0.0)
    cotas = [1] * M
    fila = [(-peso[m] / 2.0, m) for m in range(M) if tamanhos[m] > 1]
    heapq.heapify(fila)
    for _ in range(S - M):
        _, m = heapq.heappop(fila)
        cotas[m] += 1
        b = cotas[m]
        if b < tamanhos[m]:
            heapq.heappush(fila, (-peso[m] / (b * (b + 1)), m))
    return cotas


def sortear_estratificado(
    clusters: "ClusterModel",
    cotas: Sequence[int],
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """(centros em ordem crescente, pesos n_m/b_m de cada centro). Sem restrição de espaçamento."""
    validar_cotas(clusters, cotas)
    centros, pesos = [], []
    for m, b_m in enumerate(cotas):
        membros = clusters.membros(m)
        escolhidos = rng.choice(membros, size=int(b_m), replace=False)
        centros.extend(int(c) for c in escolhidos)
        pesos.extend([membros.size / b_m] * int(b_m))
    ordem = np.argsort(centros, kind="stable")
    return np.asarray(centros, dtype=int)[ordem], np.asarray(pesos, dtype=float)[ordem]

#--------------------------------------------------------------------------------------------------
# ESTIMADORES
#--------------------------------------------------------------------------------------------------
def estimativa_em_centros(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    centros: Sequence[int],
    pesos: Sequence[float],
    kind: TipoEstimativa,
    prior: PriorSpec = PRIORI_PLANA,
    workers: int = 1,
) -> GradientEstimate:
    """Σ peso_k · termo local(τ_k) + termo da priori, para centros já sorteados.

    Usado pelo SG-MCMC, que reaproveita o mesmo sorteio em todos os passos internos.
    """
    termos = termos_locais(params, y, particao, centros, kind, workers)
    total = _somar(params, termos, pesos, kind, centros)
    return total + termo_prior(params, prior, kind)


def full_subseries_grad(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    prior: PriorSpec = PRIORI_PLANA,
    workers: int = 1,
) -> GradientEstimate:
    """Soma de todos os termos locais com mensagens de buffer, mais -∇log p(θ)."""
    y = validar_serie(y)
    centros = particao.centros
    return estimativa_em_centros(
        params, y, particao, centros, np.ones(centros.size), TipoEstimativa.FULL, prior, workers
    )


def uniform_minibatch_grad(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    plano: MinibatchPlan,
    prior: PriorSpec = PRIORI_PLANA,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
) -> GradientEstimate:
    """(⌊T/L⌋/S) Σ_{τ sorteado} termo local, mais -∇log p(θ)."""
    y = validar_serie(y)
    rng = np.random.default_rng(plano.seed) if rng is None else rng
    centros = sortear_uniforme(particao, plano.S, rng)
    escala = particao.n_subcadeias / plano.S
    return estimativa_em_centros(
        params, y, particao, centros, np.full(centros.size, escala), TipoEstimativa.UNIFORM, prior, workers
    )


def stratified_grad(
    params: HmmParams,
    y: np.ndarray,
    particao: SubchainPartition,
    clusters: "ClusterModel",
    plano: MinibatchPlan,
    prior: PriorSpec = PRIORI_PLANA,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
) -> GradientEstimate:
    """Σ_m (n_m/b_m) Σ_{τ ∈ B_m} termo local, mais -∇log p(θ)."""
    y = validar_serie(y)
    rng = np.random.default_rng(plano.seed) if rng is None else rng
    centros, pesos = sortear_estratificado(clusters, plano.cotas, rng)
    return estimativa_em_centros(
        params, y, particao, centros, pesos, TipoEstimativa.STRATIFIED, prior, workers
    )
