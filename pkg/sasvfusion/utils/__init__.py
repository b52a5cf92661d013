from .io_utils import (
    ensure_directory_exists,
    read_tsv,
    write_csv,
    write_tsv,
    FLOAT_FORMAT,
)

__all__ = [
    "ensure_directory_exists",
    "read_tsv",
    "write_csv",
    "write_tsv",
    "FLOAT_FORMAT",
]
