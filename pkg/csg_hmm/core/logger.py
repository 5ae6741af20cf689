# csg_hmm/core/logger.py: singleton para logging CSV
from __future__ import annotations
import csv
from pathlib import Path
from threading import Lock
from typing import Iterable, Mapping, Any

from csg_hmm.core.erros import IoError
#--------------------------------------------------------------------------------------------------
# LOGGER CSV (SINGLETON) PARA ESCRITA DE LINHAS EM CSV EVITANDO CONCORRÊNCIA
#--------------------------------------------------------------------------------------------------

class CsvLogger:
    """Único escritor dos CSVs de uma execução (trace, tempos, métricas, eventos)."""
    _instance: "CsvLogger | None" = None
    _lock = Lock()

    def __new__(cls) -> "CsvLogger":
        """Garante que só haja uma instância (singleton thread-safe)."""
        with cls._lock:
            if cls._instance is None:
                cls._instance = super().__new__(cls)
            return cls._instance

    def reiniciar(self, path: Path | str) -> None:
        """Apaga o arquivo (se existir) para que uma nova execução comece do zero."""
        p = Path(path)
        with self._lock:
            try:
                if p.exists():
                    p.unlink()
            except OSError as e:
                raise IoError(f"Não foi possível reiniciar {p}: {e}", detalhes={"caminho": str(p)}) from e

    def write_row(self, path: Path | str, headers: Iterable[str], row: Mapping[str, Any]) -> None:
        """Acrescenta uma linha (iteração do trace, tempo, métrica ou evento) ao CSV da execução.

        O cabeçalho vem de `headers` e só é escrito quando o arquivo ainda não existe ou está vazio;
        chaves fora do cabeçalho são descartadas. Falha de escrita vira IoError.
        """
        p = Path(path)
        headers = list(headers)
        with self._lock:
            try:
                p.parent.mkdir(parents=True, exist_ok=True)
                write_header = not p.exists() or p.stat().st_size == 0
                with p.open("a", newline="", encoding="utf-8") as f:
                    writer = csv.DictWriter(f, fieldnames=headers, extrasaction="ignore", lineterminator="\n")
                    if write_header:
                        writer.writeheader()
                    writer.writerow(row)
            except OSError as e:
                raise IoError(f"Falha ao gravar {p}: {e}", detalhes={"caminho": str(p)}) from e

    def write_rows(self, path: Path | str, headers: Iterable[str], rows: Iterable[Mapping[str, Any]]) -> None:
        """Grava em lote (ex.: `intervalos.csv`, `metricas_recalculadas.csv`) com o mesmo cabeçalho."""
        headers = list(headers)
        for r in rows:
            self.write_row(path, headers, r)
