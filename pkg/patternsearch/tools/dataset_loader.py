"""Lecture d'un CSV brut et dichotomisation des variables selon une configuration de seuils."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from patternsearch.core.patterns import BinaryDataset
from patternsearch.exceptions import IngestError
from patternsearch.settings import build_model, load_structured_file
from patternsearch.tools.file_manager import FileManager

logger = logging.getLogger(__name__)

CANONICAL_RESPONSE = "y"


class VariableRule(BaseModel):
    """Règle de codage d'une variable : 1 = côté « à risque »."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["passthrough", "threshold", "category"] = "passthrough"
    column: Optional[str] = None
    threshold: Optional[float] = None
    direction: Literal[">", "<"] = ">"
    risky: List[Union[str, int, float]] = Field(default_factory=list)
    group: Optional[str] = None
    note: str = ""

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "threshold" and self.threshold is None:
            raise ValueError("une règle 'threshold' exige un seuil")
        if self.kind == "category" and not self.risky:
            raise ValueError("une règle 'category' exige au moins une modalité à risque")
        return self

    def describe(self):
        if self.note:
            return self.note
        if self.kind == "threshold":
            return f"{self.direction} {self.threshold:g}"
        if self.kind == "category":
            return "∈ {" + ", ".join(str(v) for v in self.risky) + "}"
        return ""


class CutpointConfig(BaseModel):
    """Variables retenues (dans l'ordre) et colonne réponse."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    response: str
    response_rule: VariableRule = Field(default_factory=VariableRule)
    variables: Dict[str, VariableRule]

    @model_validator(mode="after")
    def _check_variables(self):
        if not self.variables:
            raise ValueError("au moins une variable est requise")
        return self

    def source_column(self, name):
        return self.variables[name].column or name


def load_cutpoints(path):
    """Lit et valide une configuration de seuils (YAML ou JSON)."""
    return build_model(CutpointConfig, load_structured_file(path), f"Configuration de seuils {path}")


def passthrough_config(var_names, response=CANONICAL_RESPONSE):
    """Configuration identité pour un CSV déjà binaire."""
    return CutpointConfig(response=response, variables={name: VariableRule() for name in var_names})


@dataclass(frozen=True, eq=False)
class IngestResult:
    dataset: BinaryDataset
    dropped_rows: int
    n_rows_read: int


def _numeric(series, label):
    values = pd.to_numeric(series, errors="coerce")
    bad = values.isna()
    if bad.any():
        row = bad.idxmax()
        raise IngestError(f"Cellule illisible dans la colonne {label!r}, ligne {row + 2} : {series[row]!r}.")
    return values.to_numpy(dtype=np.float64)


def _code(series, rule, label):
    if rule.kind == "category":
        risky = {str(v).strip() for v in rule.risky}
        return series.str.strip().isin(risky).to_numpy().astype(np.int8)
    values = _numeric(series, label)
    if rule.kind == "threshold":
        # Inégalité stricte : la valeur du seuil elle-même n'est pas à risque.
        coded = values > rule.threshold if rule.direction == ">" else values < rule.threshold
        return coded.astype(np.int8)
    if not np.isin(values, (0.0, 1.0)).all():
        row = int(np.flatnonzero(~np.isin(values, (0.0, 1.0)))[0])
        raise IngestError(f"La colonne {label!r} doit être binaire (0/1), ligne {row + 2} : {series.iloc[row]!r}.")
    return values.astype(np.int8)


def load_dataset(csv_path, config):
    """
    Lit un CSV (en-tête obligatoire) et construit le jeu binaire.
    Args:
        csv_path (str): Chemin du CSV.
        config (CutpointConfig): Règles de codage.
    Returns:
        IngestResult: Le jeu binaire et le nombre de lignes retirées pour valeurs manquantes.
    """
    try:
        frame = pd.read_csv(csv_path, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"Lecture impossible de {csv_path} : {e}") from e
    used = [config.response] + [config.source_column(name) for name in config.variables]
    missing = [column for column in dict.fromkeys(used) if column not in frame.columns]
    if missing:
        raise IngestError(f"Colonnes absentes du CSV : {', '.join(missing)}.")
    n_read = len(frame)
    frame = frame.dropna(subset=list(dict.fromkeys(used))).reset_index(drop=True)
    dropped = n_read - len(frame)
    if dropped:
        logger.warning("%d ligne(s) sur %d retirée(s) pour valeurs manquantes.", dropped, n_read)
    if frame.empty:
        raise IngestError(f"Aucune ligne complète dans {csv_path}.")

    columns = [
        _code(frame[config.source_column(name)], rule, name) for name, rule in config.variables.items()
    ]
    y = _code(frame[config.response], config.response_rule, config.response)
    names = tuple(config.variables)
    dataset = BinaryDataset(
        np.column_stack(columns),
        y,
        names,
        tuple(rule.describe() for rule in config.variables.values()),
        tuple(rule.group or config.source_column(name) for name, rule in config.variables.items()),
    )
    logger.info("Ingestion : n=%d, p=%d, incidence=%.3f", dataset.n_samples, dataset.n_variables, dataset.incidence)
    return IngestResult(dataset, dropped, n_read)


def write_canonical_csv(dataset, path, response=CANONICAL_RESPONSE):
    """Écrit le jeu binaire (variables puis réponse) ; relu avec passthrough_config, il est identique."""
    frame = pd.DataFrame(np.asarray(dataset.X), columns=list(dataset.var_names))
    frame[response] = np.asarray(dataset.y)
    return FileManager().write_csv(path, frame)


def load_canonical_csv(path, response=CANONICAL_RESPONSE):
    """Relit un CSV binaire canonique (toutes les colonnes sauf la réponse sont des variables)."""
    try:
        header = pd.read_csv(path, nrows=0).columns
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"Lecture impossible de {path} : {e}") from e
    return load_dataset(path, passthrough_config([c for c in header if c != response], response)).dataset
