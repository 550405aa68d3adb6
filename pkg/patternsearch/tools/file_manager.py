import json
import os

import pandas as pd
import yaml

from patternsearch.exceptions import ConfigError


class FileManager:
    """Lecture et écriture des fichiers produits par le pipeline (texte, JSON, YAML, CSV)."""

    def read_file(self, file_path):
        """
        Lit le contenu d'un fichier texte.
        Args:
            file_path (str): Le chemin complet du fichier.
        Returns:
            str: Le contenu du fichier.
        """
        with open(file_path, "r", encoding="utf-8") as f:
            return f.read()

    def write_file(self, file_path, content):
        """
        Écrit du contenu dans un fichier texte. Crée le fichier et son répertoire s'ils n'existent pas.
        Args:
            file_path (str): Le chemin complet du fichier.
            content (str): Le contenu à écrire.
        Returns:
            str: Le chemin écrit.
        """
        self._ensure_parent(file_path)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(content)
        return file_path

    def append_to_file(self, file_path, content):
        """
        Ajoute du contenu à la fin d'un fichier texte. Crée le fichier s'il n'existe pas.
        Args:
            file_path (str): Le chemin complet du fichier.
            content (str): Le contenu à ajouter.
        Returns:
            str: Le chemin écrit.
        """
        self._ensure_parent(file_path)
        with open(file_path, "a", encoding="utf-8") as f:
            f.write(content)
        return file_path

    def read_structured(self, file_path):
        """
        Lit un fichier YAML ou JSON (yaml.safe_load accepte les deux).
        Args:
            file_path (str): Le chemin du fichier.
        Returns:
            dict: Le contenu décodé (dictionnaire vide si le fichier est vide).
        """
        try:
            with open(file_path, "r", encoding="utf-8") as file:
                content = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ConfigError(f"Fichier {file_path} illisible : {e}") from e
        if content is None:
            return {}
        if not isinstance(content, dict):
            raise ConfigError(f"Le fichier {file_path} doit contenir un dictionnaire à la racine.")
        return content

    def write_json(self, file_path, payload):
        """
        Écrit un dictionnaire en JSON indenté.
        Args:
            file_path (str): Le chemin du fichier.
            payload (dict): Les données sérialisables.
        Returns:
            str: Le chemin écrit.
        """
        return self.write_file(file_path, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")

    def write_csv(self, file_path, rows, columns=None):
        """
        Écrit des enregistrements en CSV (en-tête inclus).
        Args:
            file_path (str): Le chemin du fichier.
            rows (list | pandas.DataFrame): Liste de dictionnaires ou DataFrame.
            columns (list, optional): Ordre des colonnes.
        Returns:
            str: Le chemin écrit.
        """
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
        self._ensure_parent(file_path)
        frame.to_csv(file_path, index=False)
        return file_path

    def _ensure_parent(self, file_path):
        parent = os.path.dirname(file_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
