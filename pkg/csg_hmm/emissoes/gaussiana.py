# csg_hmm/emissoes/gaussiana.py: emissões Gaussianas univariadas por estado
from __future__ import annotations
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy import stats

from csg_hmm.core.emissoes import EmissaoBase, TipoEmissao
from csg_hmm.core.erros import ErroDeValidacao
#--------------------------------------------------------------------------------------------------
# LIMITES NUMÉRICOS
#--------------------------------------------------------------------------------------------------
VARIANCIA_MINIMA = 1e-10  # piso aplicado ao voltar da log-variância

#--------------------------------------------------------------------------------------------------
# CLASSE GAUSSIANA
#--------------------------------------------------------------------------------------------------
class Gaussiana(EmissaoBase):
    """
    y | x = k ~ N(media_k, variancia_k)
    Parâmetros naturais: [medias (K) | variancias (K)]
    Coordenadas do amostrador: [medias | log(variancias)]
    """
    tipo = TipoEmissao.GAUSSIANA

    def __init__(self, medias: Sequence[float], variancias: Sequence[float]) -> None:
        self._medias = np.array(medias, dtype=float).ravel()
        self._variancias = np.array(variancias, dtype=float).ravel()
        if self._medias.size == 0:
            raise ErroDeValidacao("Gaussiana precisa de pelo menos um estado.")
        if self._medias.shape != self._variancias.shape:
            raise ErroDeValidacao(
                "Médias e variâncias com tamanhos diferentes.",
                detalhes={"medias": self._medias.size, "variancias": self._variancias.size},
            )
        if not (np.all(np.isfinite(self._medias)) and np.all(np.isfinite(self._variancias))):
            raise ErroDeValidacao("Parâmetros Gaussianos devem ser finitos.")
        if np.any(self._variancias <= 0):
            raise ErroDeValidacao(
                "Variâncias devem ser estritamente positivas.",
                detalhes={"variancias": self._variancias.tolist()},
            )
        self._medias.setflags(write=False)
        self._variancias.setflags(write=False)

    #----------------------------------------------------------------------------------------------
    # PROPRIEDADES
    #----------------------------------------------------------------------------------------------
    @property
    def K(self) -> int:
        return self._medias.size

    @property
    def medias(self) -> np.ndarray:
        return self._medias

    @property
    def variancias(self) -> np.ndarray:
        return self._variancias

    #----------------------------------------------------------------------------------------------
    # DENSIDADES E GRADIENTES
    #----------------------------------------------------------------------------------------------
    def log_densidade(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        r = y - self._medias
        return -0.5 * (np.log(2.0 * np.pi * self._variancias) + r * r / self._variancias)

    def blocos_grad(self, y: np.ndarray) -> List[np.ndarray]:
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        r = y - self._medias
        d_media = r / self._variancias
        d_var = -0.5 / self._variancias + 0.5 * r * r / self._variancias**2
        return [d_media, d_var]

    #----------------------------------------------------------------------------------------------
    # PARÂMETROS E TRANSFORMAÇÕES
    #----------------------------------------------------------------------------------------------
    def parametros(self) -> np.ndarray:
        return np.concatenate([self._medias, self._variancias])

    def com_parametros(self, vetor: np.ndarray) -> "Gaussiana":
        v = np.asarray(vetor, dtype=float)
        return Gaussiana(v[: self.K], v[self.K :])

    def para_irrestrito(self) -> np.ndarray:
        return np.concatenate([self._medias, np.log(self._variancias)])

    def de_irrestrito(self, vetor: np.ndarray) -> "Gaussiana":
        v = np.asarray(vetor, dtype=float)
        variancias = np.maximum(np.exp(v[self.K :]), VARIANCIA_MINIMA)
        return Gaussiana(v[: self.K], variancias)

    def jacobiano(self) -> np.ndarray:
        # d var / d log var = var
        return np.concatenate([np.ones(self.K), self._variancias])

    #----------------------------------------------------------------------------------------------
    # SIMULAÇÃO E DISTRIBUIÇÃO
    #----------------------------------------------------------------------------------------------
    def amostrar(self, estados: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        estados = np.asarray(estados, dtype=int)
        return rng.normal(self._medias[estados], np.sqrt(self._variancias[estados]))

    def cdf(self, y: float) -> np.ndarray:
        return stats.norm.cdf(y, loc=self._medias, scale=np.sqrt(self._variancias))

    def nomes_parametros(self) -> List[str]:
        return [f"media_{k}" for k in range(self.K)] + [f"variancia_{k}" for k in range(self.K)]

    def para_dict(self) -> Dict[str, Any]:
        return {
            "tipo": self.tipo.value,
            "medias": self._medias.tolist(),
            "variancias": self._variancias.tolist(),
        }

    #----------------------------------------------------------------------------------------------
    # INICIALIZAÇÃO
    #----------------------------------------------------------------------------------------------
    @classmethod
    def inicial(
        cls, K: int, y: np.ndarray, centroides: np.ndarray | None = None, variancia: float | None = None,
    ) -> "Gaussiana":
        """Médias pelos centróides dos clusters (um por estado quando M == K, quantis das médias
        dos centróides quando M > K) ou quantis dos dados; variâncias iguais a `variancia` quando
        informada, senão à variância global da série."""
        y = np.asarray(y, dtype=float)
        niveis = (np.arange(K) + 0.5) / K
        if centroides is not None and len(centroides) >= K:
            medias = np.sort(np.asarray(centroides, dtype=float).mean(axis=1))
            if medias.size > K:
                medias = np.quantile(medias, niveis)
        else:
            medias = np.quantile(y, niveis)
        if variancia is None or not np.isfinite(variancia):
            variancia = float(np.var(y)) if y.size > 1 else 1.0
        return cls(medias, np.full(K, max(float(variancia), VARIANCIA_MINIMA)))
