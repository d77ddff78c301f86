import hashlib


def compute_sha256(file_path: str) -> str:
    """Compute SHA-256 checksum of a file."""
    sha256 = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b""):
            sha256.update(chunk)
    return sha256.hexdigest()


def compute_sha256_text(text: str) -> str:
    """Checksum of a config echo or any other UTF-8 text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
