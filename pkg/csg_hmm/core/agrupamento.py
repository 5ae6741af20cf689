# csg_hmm/core/agrupamento.py: kmeans++ sobre as subcadeias (estratos do estimador estratificado)
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from csg_hmm.core.erros import ErroDeValidacao, ShapeMismatch, TooManyClusters
from csg_hmm.core.subcadeias import SubchainPartition
#--------------------------------------------------------------------------------------------------
# PRÉ-PROCESSAMENTO DAS JANELAS
#--------------------------------------------------------------------------------------------------
class Preprocessamento(Enum):
    NENHUM = "NENHUM"
    ORDENAR = "ORDENAR"   # ordena os L valores de cada janela (posição do pico deixa de importar)


def embed(nucleo: Sequence[float], preprocessamento: Preprocessamento = Preprocessamento.NENHUM) -> np.ndarray:
    v = np.asarray(nucleo, dtype=float).ravel()
    if preprocessamento is Preprocessamento.ORDENAR:
        return np.sort(v)
    return v.copy()


def embed_particao(
    y: np.ndarray,
    particao: SubchainPartition,
    preprocessamento: Preprocessamento = Preprocessamento.NENHUM,
) -> np.ndarray:
    """Matriz (⌊T/L⌋, L): uma linha por subcadeia, na ordem dos centros."""
    y = np.asarray(y, dtype=float)
    n, L = particao.n_subcadeias, particao.L
    vetores = y[: n * L].reshape(n, L)
    if preprocessamento is Preprocessamento.ORDENAR:
        vetores = np.sort(vetores, axis=1)
    return vetores

#--------------------------------------------------------------------------------------------------
# MODELO AJUSTADO
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Resultado do agrupamento: imutável depois de ajustado e compartilhável entre threads."""
    centroides: np.ndarray
    centros: np.ndarray
    rotulos: np.ndarray
    preprocessamento: Preprocessamento = Preprocessamento.NENHUM
    historico_wcss: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        centroides = np.atleast_2d(np.asarray(self.centroides, dtype=float))
        centros = np.asarray(self.centros, dtype=int).ravel()
        rotulos = np.asarray(self.rotulos, dtype=int).ravel()
        if centros.shape != rotulos.shape:
            raise ShapeMismatch(
                "Um rótulo por centro de subcadeia.",
                detalhes={"centros": centros.size, "rotulos": rotulos.size},
            )
        if rotulos.size and (rotulos.min() < 0 or rotulos.max() >= centroides.shape[0]):
            raise ErroDeValidacao("Rótulo fora de [0, M).", detalhes={"M": centroides.shape[0]})
        for arr in (centroides, centros, rotulos):
            arr.setflags(write=False)
        object.__setattr__(self, "centroides", centroides)
        object.__setattr__(self, "centros", centros)
        object.__setattr__(self, "rotulos", rotulos)

    @property
    def M(self) -> int:
        return self.centroides.shape[0]

    @property
    def tamanhos(self) -> np.ndarray:
        return np.bincount(self.rotulos, minlength=self.M)

    @property
    def wcss(self) -> float:
        return self.historico_wcss[-1] if self.historico_wcss else float("nan")

    @property
    def variancia_intra(self) -> float:
        """WCSS final por coordenada: variância intra-cluster agregada dos núcleos."""
        pontos = self.rotulos.size * self.centroides.shape[1]
        return self.wcss / pontos if pontos else float("nan")

    def membros(self, m: int) -> np.ndarray:
        """Centros τ atribuídos ao cluster m, em ordem crescente."""
        return self.centros[self.rotulos == m]

    def rotulo_de(self, tau: int) -> int:
        idx = np.flatnonzero(self.centros == int(tau))
        if idx.size == 0:
            raise ErroDeValidacao("Centro fora da partição agrupada.", detalhes={"tau": int(tau)})
        return int(self.rotulos[idx[0]])

    def cobre(self, particao: SubchainPartition) -> bool:
        return np.array_equal(self.centros, particao.centros)

    #----------------------------------------------------------------------------------------------
    # SERIALIZAÇÃO
    #----------------------------------------------------------------------------------------------
    def para_dict(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "preprocessamento": self.preprocessamento.value,
            "centroides": self.centroides.tolist(),
            "centros": self.centros.tolist(),
            "rotulos": self.rotulos.tolist(),
            "tamanhos": self.tamanhos.tolist(),
            "historico_wcss": list(self.historico_wcss),
        }

    @classmethod
    def de_dict(cls, d: Dict[str, Any]) -> "ClusterModel":
        return cls(
            centroides=np.asarray(d["centroides"], dtype=float),
            centros=np.asarray(d["centros"], dtype=int),
            rotulos=np.asarray(d["rotulos"], dtype=int),
            preprocessamento=Preprocessamento(d.get("preprocessamento", "NENHUM")),
            historico_wcss=tuple(float(w) for w in d.get("historico_wcss", [])),
        )

#--------------------------------------------------------------------------------------------------
# KMEANS++
#--------------------------------------------------------------------------------------------------
def _distancias2(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Distâncias Euclidianas ao quadrado (n, M)."""
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def _checar_vetores(vetores: np.ndarray, M: int) -> np.ndarray:
    X = np.asarray(vetores, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if M < 1:
        raise ErroDeValidacao("M deve ser >= 1.", detalhes={"M": M})
    distintos = np.unique(X, axis=0).shape[0]
    if M > distintos:
        raise TooManyClusters(
            "Mais clusters que vetores distintos.",
            detalhes={"M": M, "n": X.shape[0], "distintos": distintos},
        )
    return X


def kmeanspp_seed(vetores: np.ndarray, M: int, seed: Optional[int] | np.random.Generator = None) -> np.ndarray:
    """Semeadura D²: primeiro centróide uniforme; os seguintes com probabilidade ∝ distância²
    ao centróide escolhido mais próximo (M vetores distintos garantem massa positiva a cada sorteio)."""
    X = _checar_vetores(vetores, M)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = X.shape[0]
    escolhidos = [int(rng.integers(n))]
    d2 = _distancias2(X, X[escolhidos])[:, 0]
    while len(escolhidos) < M:
        idx = int(rng.choice(n, p=d2 / d2.sum()))
        escolhidos.append(idx)
        d2 = np.minimum(d2, _distancias2(X, X[idx : idx + 1])[:, 0])
    return X[escolhidos].copy()


def _reparar_vazios(X: np.ndarray, C: np.ndarray, rotulos: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """Cada cluster vazio recebe o ponto mais distante do próprio centróide (de um cluster com > 1 ponto)."""
    M = C.shape[0]
    rotulos = rotulos.copy()
    dist_proprio = d2[np.arange(X.shape[0]), rotulos]
    for m in range(M):
        tamanhos = np.bincount(rotulos, minlength=M)
        if tamanhos[m] > 0:
            continue
        candidatos = np.flatnonzero(tamanhos[rotulos] > 1)
        i = int(candidatos[np.argmax(dist_proprio[candidatos])])
        rotulos[i] = m
        C[m] = X[i]
        dist_proprio[i] = 0.0
    return rotulos


def _lloyd(X: np.ndarray, C: np.ndarray, max_iters: int, tol: float) -> Tuple[np.ndarray, np.ndarray, Tuple[float, ...]]:
    C = C.copy()
    M = C.shape[0]
    historico = []
    rotulos = np.zeros(X.shape[0], dtype=int)
    for _ in range(max_iters):
        d2 = _distancias2(X, C)
        rotulos = _reparar_vazios(X, C, np.argmin(d2, axis=1), d2)
        novo = np.vstack([X[rotulos == m].mean(axis=0) for m in range(M)])
        diff = X - novo[rotulos]
        historico.append(float(np.sum(diff * diff)))
        movimento = float(np.max(np.linalg.norm(novo - C, axis=1)))
        C = novo
        if movimento < tol:
            break
    return C, rotulos, tuple(historico)


def kmeans_fit(
    vetores: np.ndarray,
    M: int,
    seed: Optional[int] = None,
    max_iters: int = 100,
    tol: float = 1e-8,
    centros: Optional[Sequence[int]] = None,
    preprocessamento: Preprocessamento = Preprocessamento.NENHUM,
    reinicios: int = 1,
) -> ClusterModel:
    """Lloyd a partir de sementes kmeans++; com reinicios > 1 fica o ajuste de menor WCSS.

    `centros` associa cada linha de `vetores` a um τ (padrão: 0..n-1).
    """
    X = _checar_vetores(vetores, M)
    if reinicios < 1:
        raise ErroDeValidacao("reinicios deve ser >= 1.", detalhes={"reinicios": reinicios})
    centros = np.arange(X.shape[0]) if centros is None else np.asarray(centros, dtype=int)
    if reinicios == 1:
        sementes = [seed]
    else:
        sementes = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reinicios)]
    melhor: Optional[ClusterModel] = None
    for semente in sementes:
        C, rotulos, historico = _lloyd(X, kmeanspp_seed(X, M, semente), max_iters, tol)
        modelo = ClusterModel(C, centros, rotulos, preprocessamento, historico)
        if melhor is None or modelo.wcss < melhor.wcss:
            melhor = modelo
    return melhor


def agrupar_particao(
    y: np.ndarray,
    particao: SubchainPartition,
    M: int,
    seed: Optional[int] = None,
    preprocessamento: Preprocessamento = Preprocessamento.NENHUM,
    reinicios: int = 1,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> ClusterModel:
    """Agrupa todas as subcadeias da partição (atalho usado pelo experimento)."""
    vetores = embed_particao(y, particao, preprocessamento)
    return kmeans_fit(
        vetores, M, seed, max_iters=max_iters, tol=tol,
        centros=particao.centros, preprocessamento=preprocessamento, reinicios=reinicios,
    )
