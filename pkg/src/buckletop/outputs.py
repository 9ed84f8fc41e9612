"""File writers: PGM images, CSV matrices, history and diagnostics.

All writes are atomic (write to a temp file in the target directory, then
rename) so partially written artifacts never appear under the final name.
Density images are ASCII PGM (P2), 0-255, white = void and black = solid.
"""

import json
import os
import tempfile

import numpy as np


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_to_image(values, nelx, nely):
    """Reshape a flat element field to image rows (top row first)."""
    return np.asarray(values).reshape(nelx, nely).T[::-1]


def write_density_pgm(path, xbar, nelx, nely):
    img = field_to_image(xbar, nelx, nely)
    gray = np.clip(np.rint(255.0 * (1.0 - img)), 0, 255).astype(int)
    lines = [f"P2", f"{nelx} {nely}", "255"]
    lines += [" ".join(map(str, row)) for row in gray]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_scalar_pgm(path, values, nelx, nely, vmin, vmax):
    """Grayscale map of an arbitrary element field; vmax maps to black."""
    img = field_to_image(values, nelx, nely)
    span = vmax - vmin if vmax > vmin else 1.0
    gray = np.clip(np.rint(255.0 * (1.0 - (img - vmin) / span)), 0, 255).astype(int)
    lines = [f"P2", f"{nelx} {nely}", "255"]
    lines += [" ".join(map(str, row)) for row in gray]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_field_csv(path, values, nelx, nely):
    img = field_to_image(values, nelx, nely)
    lines = [",".join(f"{v:.17g}" for v in row) for row in img]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_field_csv(path, nelx, nely):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    img = np.array(rows)
    if img.shape != (nely, nelx):
        raise ValueError(
            f"density file is {img.shape[1]}x{img.shape[0]} elements, "
            f"mesh is {nelx}x{nely}")
    return img[::-1].T.ravel()


def history_header(n_lambda):
    cols = ["iter", "p", "rho", "J", "vol", "change"]
    cols += [f"lambda_{i+1}" for i in range(n_lambda)]
    cols.append("g_max")
    return ",".join(cols)


def history_row(rec, n_lambda):
    lam = list(rec.lam[:n_lambda]) + [float("nan")] * max(0, n_lambda - len(rec.lam))
    vals = [rec.iteration, f"{rec.p:.17g}", f"{rec.rho:.17g}", f"{rec.J:.17g}",
            f"{rec.volume:.17g}", f"{rec.change:.17g}"]
    vals += [f"{v:.17g}" for v in lam]
    vals.append(f"{rec.g_max:.17g}")
    return ",".join(map(str, vals))


def write_history(path, records, n_lambda):
    lines = [history_header(n_lambda)]
    lines += [history_row(r, n_lambda) for r in records]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path, data):
    _atomic_write(path, json.dumps(data, indent=2) + "\n")
