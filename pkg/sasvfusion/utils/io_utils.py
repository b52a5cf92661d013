from pathlib import Path

import pandas as pd

from sasvfusion.exceptions import TableFormatError

# 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"


def ensure_directory_exists(directory_path):
    """
    Create directory if it doesn't exist.

    Args:
        directory_path (str or Path): Path of directory to create

    Returns:
        Path: Path object for created directory
    """
    path = Path(directory_path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_tsv(path, columns, dtype=None):
    """
    Read a headerless tab-separated file into a DataFrame.

    Args:
        path (str or Path): File to read. Missing files raise FileNotFoundError.
        columns (list): Column names, in file order.
        dtype (dict, optional): Per-column dtypes. Columns not listed are read as str.

    Returns:
        pd.DataFrame: One row per non-empty line.

    Raises:
        TableFormatError: A line has the wrong number of fields, a value has the
            wrong type, or the file is not UTF-8.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File '{path}' not found.")
    dtypes = {c: str for c in columns}
    dtypes.update(dtype or {})
    if path.stat().st_size == 0:
        return pd.DataFrame({c: pd.Series(dtype=object if dtypes[c] is str else dtypes[c]) for c in columns})
    try:
        df = pd.read_csv(
            path, sep="\t", header=None, dtype={i: dtypes[c] for i, c in enumerate(columns)},
            keep_default_na=False, na_filter=False, encoding="utf-8",
            comment=None, skip_blank_lines=True, float_precision="round_trip",
        )
    except ValueError as exc:
        # pandas.errors.ParserError and UnicodeDecodeError are both ValueErrors
        detail = " ".join(str(exc).split())
        raise TableFormatError(f"{path}: expected {len(columns)} tab-separated fields per line; {detail}") from None
    # the field count comes from the first line
    if df.shape[1] != len(columns):
        raise TableFormatError(f"{path}: expected {len(columns)} tab-separated fields per line, found {df.shape[1]}")
    df.columns = columns
    short = df.isna().any(axis=1).to_numpy().nonzero()[0]
    if len(short):
        raise TableFormatError(f"{path}: record {short[0] + 1} has fewer than {len(columns)} tab-separated fields")
    return df


def write_tsv(df, path, header=False):
    """
    Write a DataFrame as tab-separated UTF-8 text with exact float formatting.

    Args:
        df (pd.DataFrame): Rows to write.
        path (str or Path): Destination; parent directories are created.
        header (bool, optional): Whether to emit the column names. Defaults to False.

    Returns:
        Path: The written path.
    """
    path = Path(path)
    ensure_directory_exists(path.parent)
    df.to_csv(path, sep="\t", header=header, index=False, float_format=FLOAT_FORMAT,
              encoding="utf-8", lineterminator="\n")
    return path


def write_csv(df, path):
    """Write a DataFrame as comma-separated text with a header row."""
    path = Path(path)
    ensure_directory_exists(path.parent)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    return path
