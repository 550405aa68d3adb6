"""Chargement de la configuration (fichiers YAML/JSON et variables d'environnement)."""

import os

from dotenv import load_dotenv
from pydantic import ValidationError

from patternsearch.exceptions import ConfigError
from patternsearch.tools.file_manager import FileManager

DEFAULT_CONFIG_PATH = os.path.join("config", "lps.yaml")


def load_environment():
    """Charge un éventuel fichier .env sans écraser les variables déjà définies."""
    load_dotenv(override=False)


def default_seed():
    """
    Graine par défaut, lue dans LPS_SEED.
    Returns:
        int: La graine (0 si la variable est absente).
    """
    raw = os.getenv("LPS_SEED")
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"LPS_SEED doit être un entier, reçu {raw!r}.") from e


def default_threads():
    """
    Nombre de workers par défaut, lu dans LPS_THREADS.
    Returns:
        int: Le nombre de workers (1 si la variable est absente).
    """
    raw = os.getenv("LPS_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"LPS_THREADS doit être un entier, reçu {raw!r}.") from e


def load_structured_file(path):
    """
    Lit un fichier de configuration YAML ou JSON.
    Args:
        path (str): Chemin du fichier.
    Returns:
        dict: Le contenu du fichier.
    """
    if not os.path.exists(path):
        raise ConfigError(f"Fichier de configuration introuvable : {path}")
    return FileManager().read_structured(path)


def build_model(model_cls, payload, source="configuration"):
    """
    Valide un dictionnaire avec un modèle pydantic et convertit l'erreur en ConfigError.
    Args:
        model_cls (type): Classe pydantic cible.
        payload (dict): Données brutes.
        source (str): Nom affiché dans le message d'erreur.
    Returns:
        pydantic.BaseModel: Le modèle validé.
    """
    try:
        return model_cls.model_validate(payload or {})
    except ValidationError as e:
        raise ConfigError(f"{source} invalide : {e}") from e
