"""Runs flake8 over every Python notebook in fixtures/corpus and writes
fixtures/corpus/style_reference.json.

Code cells are joined into one module the way the analyzer does it: line
magics and shell escapes become blank lines, cells handed to a non-Python
cell magic are dropped, and each cell ends with a newline. Findings are
mapped back to (cell index, line in cell).

Run from crates/core: python3 fixtures/style_reference.py
"""
import glob
import json
import os
import subprocess
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
CORPUS = os.path.join(HERE, "corpus")
SELECT = "E225,E231,E262,E265,E401,E402,E701,E703,E741,F401,F403"
PY_CELL_MAGICS = {"time", "timeit", "capture", "prun"}


def source(cell):
    s = cell.get("source", "")
    return "".join(s) if isinstance(s, list) else s


def python_view(src):
    first = src.split("\n", 1)[0].lstrip()
    if first.startswith("%%"):
        name = first[2:].split()[0] if first[2:].split() else ""
        if name not in PY_CELL_MAGICS:
            return None
    out = []
    for line in src.splitlines(keepends=True):
        t = line.strip()
        if t.startswith(("%", "!")) or (t.endswith("?") and not t.startswith("#")):
            out.append("\n" if line.endswith("\n") else "")
        else:
            out.append(line)
    return "".join(out)


def assemble(cells):
    text, segments, row = "", [], 1
    for index, cell in enumerate(cells):
        if cell.get("cell_type") != "code":
            continue
        code = python_view(source(cell))
        if code is None:
            continue
        if code and not code.endswith("\n"):
            code += "\n"
        rows = code.count("\n")
        segments.append((index, row, rows))
        row += rows
        text += code
    return text, segments


def locate(segments, row):
    for index, first, n in segments:
        if first <= row < first + n:
            return index, row - first + 1
    return None


def flake8(text):
    with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False) as f:
        f.write(text)
        path = f.name
    try:
        proc = subprocess.run(
            [sys.executable, "-m", "flake8", "--isolated", "--select", SELECT,
             "--format", "%(row)d:%(col)d:%(code)s", path],
            capture_output=True, text=True)
    finally:
        os.unlink(path)
    for line in proc.stdout.splitlines():
        row, col, code = line.split(":", 2)
        yield int(row), int(col), code


def main():
    reference = {}
    pattern = os.path.join(CORPUS, "hosting", "*", "*", "tree", "**", "*.ipynb")
    for path in sorted(glob.glob(pattern, recursive=True)):
        rel = os.path.relpath(path, os.path.join(CORPUS, "hosting"))
        owner, repo, _, inner = rel.split(os.sep, 3)
        try:
            with open(path) as f:
                nb = json.load(f)
            cells = nb["cells"]
        except (ValueError, KeyError):
            continue
        lang = nb.get("metadata", {}).get("language_info", {}).get("name", "")
        if lang.lower() != "python":
            continue
        text, segments = assemble(cells)
        findings = []
        for row, col, code in flake8(text):
            hit = locate(segments, row)
            if hit:
                findings.append([hit[0], hit[1], col, code])
        findings.sort()
        reference[f"{owner}/{repo}/{inner.replace(os.sep, '/')}"] = findings
    with open(os.path.join(CORPUS, "style_reference.json"), "w") as f:
        json.dump(reference, f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
