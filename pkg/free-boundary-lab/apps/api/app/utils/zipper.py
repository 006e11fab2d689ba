from __future__ import annotations

import io
import zipfile
from pathlib import Path

# fixed timestamp so the same run directory always zips to the same bytes
_EPOCH = (1980, 1, 1, 0, 0, 0)


def zip_run_dir(root: Path) -> bytes:
    """Zip every file below a run directory, keyed by its posix path relative to root."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as z:
        for path in sorted(p for p in root.rglob("*") if p.is_file()):
            info = zipfile.ZipInfo(path.relative_to(root).as_posix(), date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            z.writestr(info, path.read_bytes())
    return buf.getvalue()
