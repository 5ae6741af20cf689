# csg_hmm/core/emissoes.py: classe base de emissão, tipos de família (Enum)
from __future__ import annotations
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
#--------------------------------------------------------------------------------------------------
# TIPOS DE FAMÍLIA DE EMISSÃO
#--------------------------------------------------------------------------------------------------
class TipoEmissao(Enum):

    """Famílias suportadas (valores usados no JSON)."""

    GAUSSIANA = "GAUSSIANA"
    BERNOULLI = "BERNOULLI"

#--------------------------------------------------------------------------------------------------
# CLASSE BASE DE EMISSÃO
#--------------------------------------------------------------------------------------------------
class EmissaoBase(ABC):

    """Classe base abstrata para as famílias de emissão p(y | x = k, φ_k).

    Cada família guarda um vetor de parâmetros por estado, organizado em blocos
    (ex.: Gaussiana = [médias | variâncias]). O vetor "natural" concatena os blocos
    nessa ordem; o vetor "irrestrito" é o usado pelo SGLD (log-variância etc.).
    Instâncias são imutáveis: toda alteração devolve uma nova instância.
    """
    tipo: TipoEmissao

    #----------------------------------------------------------------------------------------------
    # MÉTODOS ABSTRATOS - FORÇAM IMPLEMENTAÇÃO NAS SUBCLASSES
    #----------------------------------------------------------------------------------------------
    @property
    @abstractmethod
    def K(self) -> int:
        """Número de estados."""

    @abstractmethod
    def log_densidade(self, y: np.ndarray) -> np.ndarray:
        """Matriz (T, K) com log p(y_t | x_t = k)."""

    @abstractmethod
    def blocos_grad(self, y: np.ndarray) -> List[np.ndarray]:
        """Lista de matrizes (T, K): derivada de log p(y_t | k) em cada bloco de parâmetros."""

    @abstractmethod
    def parametros(self) -> np.ndarray:
        """Vetor natural (blocos concatenados)."""

    @abstractmethod
    def com_parametros(self, vetor: np.ndarray) -> "EmissaoBase":
        """Nova instância a partir do vetor natural (validada)."""

    @abstractmethod
    def para_irrestrito(self) -> np.ndarray:
        """Vetor nas coordenadas do amostrador."""

    @abstractmethod
    def de_irrestrito(self, vetor: np.ndarray) -> "EmissaoBase":
        """Nova instância a partir das coordenadas do amostrador, já restrita ao domínio."""

    @abstractmethod
    def jacobiano(self) -> np.ndarray:
        """d(natural)/d(irrestrito), diagonal, como vetor."""

    @abstractmethod
    def amostrar(self, estados: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Uma observação por estado da sequência."""

    @abstractmethod
    def cdf(self, y: float) -> np.ndarray:
        """P(Y <= y | x = k) para cada estado."""

    @abstractmethod
    def nomes_parametros(self) -> List[str]:
        """Nomes das colunas dos parâmetros naturais (usados no trace.csv)."""

    @abstractmethod
    def para_dict(self) -> Dict[str, Any]:
        """Serializa para JSON."""

    #----------------------------------------------------------------------------------------------
    # MÉTODOS COMPORTAMENTAIS - PODEM SER SOBRESCRITOS NAS SUBCLASSES
    #----------------------------------------------------------------------------------------------
    def suporte_discreto(self) -> Optional[np.ndarray]:
        """Suporte finito da família (None para contínuas)."""
        return None

    def densidade(self, y: np.ndarray) -> np.ndarray:
        """Matriz (T, K) com p(y_t | x_t = k)."""
        return np.exp(self.log_densidade(y))

    def n_blocos(self) -> int:
        return self.parametros().size // self.K

    def permutar(self, perm: Sequence[int]) -> "EmissaoBase":
        """Reordena os estados: o novo estado k é o antigo perm[k]."""
        perm = np.asarray(perm, dtype=int)
        blocos = self.parametros().reshape(self.n_blocos(), self.K)
        return self.com_parametros(blocos[:, perm].ravel())

    def centros(self) -> np.ndarray:
        """Média de cada estado (usada em limiares e brackets)."""
        return self.parametros()[: self.K]

    def detalhes_str(self) -> str:
        """String curta para tabelas do CLI."""
        vals = ", ".join(f"{n}={v:.4g}" for n, v in zip(self.nomes_parametros(), self.parametros()))
        return f"{self.tipo.value} | {vals}"
