# csg_hmm/emissoes/bernoulli.py: emissões Bernoulli por estado
from __future__ import annotations
from typing import Any, Dict, List, Sequence

import numpy as np

from csg_hmm.core.emissoes import EmissaoBase, TipoEmissao
from csg_hmm.core.erros import ErroDeValidacao
#--------------------------------------------------------------------------------------------------
# LIMITES DO DOMÍNIO (CLAMP APÓS CADA ATUALIZAÇÃO)
#--------------------------------------------------------------------------------------------------
PROB_MINIMA = 1e-6
PROB_MAXIMA = 1.0 - 1e-6

#--------------------------------------------------------------------------------------------------
# CLASSE BERNOULLI
#--------------------------------------------------------------------------------------------------
class Bernoulli(EmissaoBase):
    """
    y | x = k ~ Ber(p_k), y em {0, 1}
    Parâmetros naturais e do amostrador: [p_0..p_{K-1}]
    """
    tipo = TipoEmissao.BERNOULLI

    def __init__(self, probabilidades: Sequence[float]) -> None:
        self._probs = np.array(probabilidades, dtype=float).ravel()
        if self._probs.size == 0:
            raise ErroDeValidacao("Bernoulli precisa de pelo menos um estado.")
        if not np.all((self._probs > 0.0) & (self._probs < 1.0)):
            raise ErroDeValidacao(
                "Probabilidades de sucesso devem estar em (0, 1).",
                detalhes={"probabilidades": self._probs.tolist()},
            )
        self._probs.setflags(write=False)

    @property
    def K(self) -> int:
        return self._probs.size

    @property
    def probabilidades(self) -> np.ndarray:
        return self._probs

    #----------------------------------------------------------------------------------------------
    # DENSIDADES E GRADIENTES
    #----------------------------------------------------------------------------------------------
    def log_densidade(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        return y * np.log(self._probs) + (1.0 - y) * np.log1p(-self._probs)

    def blocos_grad(self, y: np.ndarray) -> List[np.ndarray]:
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        return [y / self._probs - (1.0 - y) / (1.0 - self._probs)]

    #----------------------------------------------------------------------------------------------
    # PARÂMETROS E TRANSFORMAÇÕES
    #----------------------------------------------------------------------------------------------
    def parametros(self) -> np.ndarray:
        return self._probs.copy()

    def com_parametros(self, vetor: np.ndarray) -> "Bernoulli":
        return Bernoulli(vetor)

    def para_irrestrito(self) -> np.ndarray:
        return self._probs.copy()

    def de_irrestrito(self, vetor: np.ndarray) -> "Bernoulli":
        return Bernoulli(np.clip(np.asarray(vetor, dtype=float), PROB_MINIMA, PROB_MAXIMA))

    def jacobiano(self) -> np.ndarray:
        return np.ones(self.K)

    #----------------------------------------------------------------------------------------------
    # SIMULAÇÃO E DISTRIBUIÇÃO
    #----------------------------------------------------------------------------------------------
    def amostrar(self, estados: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        estados = np.asarray(estados, dtype=int)
        return (rng.random(estados.size) < self._probs[estados]).astype(float)

    def cdf(self, y: float) -> np.ndarray:
        if y < 0:
            return np.zeros(self.K)
        if y < 1:
            return 1.0 - self._probs
        return np.ones(self.K)

    def suporte_discreto(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    def nomes_parametros(self) -> List[str]:
        return [f"prob_{k}" for k in range(self.K)]

    def para_dict(self) -> Dict[str, Any]:
        return {"tipo": self.tipo.value, "probabilidades": self._probs.tolist()}

    #----------------------------------------------------------------------------------------------
    # INICIALIZAÇÃO
    #----------------------------------------------------------------------------------------------
    @classmethod
    def inicial(cls, K: int, y: np.ndarray, centroides: np.ndarray | None = None) -> "Bernoulli":
        """Médias dos centróides quando houver agrupamento (quantis delas se M > K); senão 0.5
        com espalhamento de ±0.1 entre estados (quebra a simetria de rótulos)."""
        if centroides is not None and len(centroides) >= K:
            probs = np.sort(np.asarray(centroides, dtype=float).mean(axis=1))
            if probs.size > K:
                probs = np.quantile(probs, (np.arange(K) + 0.5) / K)
            return cls(np.clip(probs, 0.05, 0.95))
        if K == 1:
            return cls([0.5])
        return cls(0.5 + 0.2 * (np.arange(K) / (K - 1) - 0.5))
