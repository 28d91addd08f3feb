"""Small file helpers shared by the exporters."""
import csv
import io
import math
import os
import tempfile
from pathlib import Path

FLOAT_DIGITS = 12


def fmt(value, precise=False):
    """Render one cell. Floats get a fixed number of significant digits so
    that outputs are stable across platforms at the last-ulp level;
    ``precise`` keeps the shortest round-trip form instead."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if hasattr(value, "dtype"):
        return fmt(value.item(), precise)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value) if precise else f"{value:.{FLOAT_DIGITS}g}"
    return str(value)


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows, precise=False):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v, precise) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], []
        return [h.strip() for h in header], list(reader)
