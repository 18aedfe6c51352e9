"""
Feature cache module for persisting spectra and descriptors between runs.
Each entry is a directory named by a content hash of the input file and the
run configuration, holding metadata.json plus binary array containers.
"""
import hashlib
import json
import logging
import shutil
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .array_io import read_container, write_container
from .errors import CacheCorrupted

logger = logging.getLogger(__name__)

ARRAYS_FILE = 'arrays.bin'
METADATA_FILE = 'metadata.json'


class FeatureCache:
    """Manages cached feature entries with file-based persistence."""

    def __init__(self, cache_path: Path):
        """
        Initialize feature cache.

        Args:
            cache_path: Base path for cache storage
        """
        self.cache_path = Path(cache_path)
        self.cache_path.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def make_key(file_path: str, fingerprint: str) -> str:
        """
        Cache key for an input file under a configuration.

        Args:
            file_path: Input shape file
            fingerprint: Stable string of the feature-relevant settings

        Returns:
            Hex SHA-256 digest
        """
        digest = hashlib.sha256()
        digest.update(Path(file_path).read_bytes())
        digest.update(b'\0')
        digest.update(fingerprint.encode('utf-8'))
        return digest.hexdigest()

    def contains(self, key: str) -> bool:
        entry_dir = self._get_entry_dir(key)
        return (entry_dir / METADATA_FILE).exists() and (entry_dir / ARRAYS_FILE).exists()

    def get(self, key: str) -> Optional[Tuple[Dict[str, Any], Dict[str, np.ndarray]]]:
        """
        Load a cache entry.

        A corrupted entry is logged, removed and reported as a miss.

        Args:
            key: Cache key

        Returns:
            Tuple of (metadata, arrays) or None on a miss
        """
        if not self.contains(key):
            return None

        entry_dir = self._get_entry_dir(key)
        try:
            with open(entry_dir / METADATA_FILE, 'r', encoding='utf-8') as f:
                metadata = json.load(f)
            arrays = read_container(entry_dir / ARRAYS_FILE)
        except (json.JSONDecodeError, IOError, CacheCorrupted) as e:
            logger.warning("Discarding corrupted cache entry %s: %s", key[:12], e)
            self.delete(key)
            return None

        logger.info("Cache hit %s", key[:12])
        return metadata, arrays

    def put(self, key: str, metadata: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> bool:
        """
        Store a cache entry unless it already exists.

        Args:
            key: Cache key
            metadata: JSON-serializable metadata
            arrays: Named arrays

        Returns:
            True if written, False if an entry was already present
        """
        if self.contains(key):
            return False

        entry_dir = self._get_entry_dir(key)
        entry_dir.mkdir(parents=True, exist_ok=True)
        record = dict(metadata)
        record['key'] = key
        record['created_at'] = datetime.now(timezone.utc).isoformat()
        record['arrays'] = sorted(arrays)

        write_container(entry_dir / ARRAYS_FILE, arrays)
        # metadata.json is written last; its presence marks a complete entry
        with open(entry_dir / METADATA_FILE, 'w', encoding='utf-8') as f:
            json.dump(record, f, indent=2)
        logger.info("Cached %s", key[:12])
        return True

    def delete(self, key: str) -> bool:
        """
        Delete a cache entry.

        Returns:
            True if successful, False otherwise
        """
        entry_dir = self._get_entry_dir(key)
        if not entry_dir.exists():
            return False
        try:
            shutil.rmtree(entry_dir)
            return True
        except OSError as e:
            logger.error("Error deleting cache entry %s: %s", key[:12], e)
            return False

    def list_entries(self) -> List[Dict[str, Any]]:
        """
        List metadata of all complete entries, most recent first.
        """
        entries = []
        for entry_dir in self.cache_path.iterdir():
            metadata_file = entry_dir / METADATA_FILE
            if entry_dir.is_dir() and metadata_file.exists():
                try:
                    with open(metadata_file, 'r', encoding='utf-8') as f:
                        entries.append(json.load(f))
                except (json.JSONDecodeError, IOError):
                    continue
        entries.sort(key=lambda x: x.get('created_at', ''), reverse=True)
        return entries

    def _get_entry_dir(self, key: str) -> Path:
        return self.cache_path / key
