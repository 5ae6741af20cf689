# csg_hmm/core/erros.py: exceções customizadas da biblioteca
from __future__ import annotations
#--------------------------------------------------------------------------------------------------
# EXCEÇÃO BASE
#--------------------------------------------------------------------------------------------------
class CsgHmmError(Exception):
	"""Base para todas as exceções do csg_hmm.

	Aceita uma mensagem e um dict opcional de detalhes para diagnóstico.
	"""
	def __init__(self, mensagem: str, detalhes: dict | None = None) -> None:
		super().__init__(mensagem)
		self.detalhes = detalhes

	def para_dict(self) -> dict:
		"""Relatório estruturado (usado pelo CLI em erro.json)."""
		return {"tipo": type(self).__name__, "mensagem": str(self), "detalhes": self.detalhes or {}}

#--------------------------------------------------------------------------------------------------
# MODELO (MATRIZ DE TRANSIÇÃO, EMISSÕES, VEROSSIMILHANÇA)
#--------------------------------------------------------------------------------------------------
class ReducibleChain(CsgHmmError):
	"""Matriz de transição redutível (estacionária não é única)."""


class NonStochastic(CsgHmmError):
	"""Colunas não somam 1 ou há entradas fora de [0, 1]."""


class ZeroColumn(CsgHmmError):
	"""Coluna inteiramente nula na projeção para o simplex (divergência do amostrador)."""


class DegenerateLikelihood(CsgHmmError):
	"""Mensagem propagada se anulou: observação impossível sob todos os estados."""


class ErroDeValidacao(CsgHmmError):
	"""Valores de parâmetros inválidos (variância <= 0, probabilidade fora de (0,1), etc.)."""


class ShapeMismatch(CsgHmmError):
	"""Dimensões incompatíveis entre matrizes/vetores."""

#--------------------------------------------------------------------------------------------------
# SUBCADEIAS, AGRUPAMENTO E AMOSTRAGEM
#--------------------------------------------------------------------------------------------------
class InvalidLength(CsgHmmError):
	"""Comprimento de subcadeia par, nulo ou maior que a série."""


class InfeasibleGap(CsgHmmError):
	"""Não foi possível sortear S subcadeias respeitando o espaçamento mínimo."""


class EmptyCluster(CsgHmmError):
	"""Cluster sem nenhuma subcadeia."""


class QuotaExceedsCluster(CsgHmmError):
	"""Cota b_m fora de [1, n_m]."""


class TooManyClusters(CsgHmmError):
	"""Mais clusters pedidos do que pontos disponíveis."""


class NonFiniteGradient(CsgHmmError):
	"""Gradiente com componentes NaN/inf."""

#--------------------------------------------------------------------------------------------------
# DADOS, ARQUIVOS E CONFIGURAÇÃO
#--------------------------------------------------------------------------------------------------
class UnknownDataset(CsgHmmError):
	"""Nome de dataset embutido desconhecido."""


class IoError(CsgHmmError):
	"""Falha de leitura/escrita de arquivo."""


class ParseError(CsgHmmError):
	"""Linha não numérica em um CSV de observações."""
	def __init__(self, mensagem: str, detalhes: dict | None = None, linha: int | None = None) -> None:
		super().__init__(mensagem, detalhes)
		self.linha = linha


class EmptySeries(CsgHmmError):
	"""Série sem observações válidas."""


class ConfigInvalida(CsgHmmError):
	"""Erro de configuração (JSON inválido, campos inconsistentes)."""
