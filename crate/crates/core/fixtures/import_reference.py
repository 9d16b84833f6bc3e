"""Writes fixtures/imports/cells.ipynb (50 code cells full of import
lookalikes) and fixtures/imports/reference.json, the imports Python's own
parser sees in each cell: [cell, line, module] with relative imports left out.

Line magics and shell escapes are blanked before parsing, as the analyzer does.

Run from crates/core: python3 fixtures/import_reference.py
"""
import ast
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "imports")

CELLS = [
    "import os",
    "# import sys\nx = 1",
    "s = 'import json'\nt = \"from re import sub\"",
    "doc = '''\nimport csv\nfrom math import pi\n'''\nimport math",
    'msg = """import a\n   still string\n"""  # import b\nfrom collections import OrderedDict',
    "x = 1; import time",
    "if True: import random",
    "def f():\n    import gzip\n    return gzip",
    "class K:\n    import zlib\n    def m(self):\n        from itertools import chain\n        return chain",
    "try:\n    import ujson as json\nexcept ImportError:\n    import json",
    "from . import sibling\nfrom .pkg import thing\nfrom .. import up",
    "import numpy.linalg as la\nimport scipy.sparse.linalg",
    "from os.path import (\n    join,\n    exists,\n)",
    "import os, \\\n    sys",
    "%matplotlib inline\nimport pandas as pd",
    "!pip install requests\nimport requests",
    "__import__('hidden')\nimportlib = None",
    "import importlib\nmod = importlib.import_module('dynamic')",
    "print(f\"import {1}\")\nimport string",
    "value = r'import \\'quoted\\''\nimport struct",
    "text = 'don\\'t import os'\nimport shutil",
    "x = (\n  1,  # import fake\n  2)\nimport bisect",
    "import a.b.c as d, e.f",
    "from __future__ import annotations\nimport typing",
    "lambda: __import__('nope')\nimport heapq",
    "with open('f') as fh:\n    import pickle",
    "for i in range(2):\n\timport copy",
    "while False:\n    from functools import reduce",
    "async def g():\n    import asyncio\n    await asyncio.sleep(0)",
    "b = b'import binascii'\nimport base64",
    "def h():\n    '''\n    import docstring_trap\n    '''\n    return 1",
    "x = [\n    'import listtrap',\n]\nfrom decimal import Decimal",
    "import_this = 3\nimports = import_this + 1",
    "from xml.etree import ElementTree as ET",
    "from\\\n  fractions import Fraction",
    "import sqlite3; import uuid; from hashlib import sha1",
    "# from fake import thing\n    # import indented_comment\ny = 2",
    "data = {'import': 'os'}\nimport statistics",
    "s = '''a\nb''' ; import secrets",
    "import http.client\nimport urllib.request as ur",
    "x = 1 if True else 0  # from ternary import trap\nimport enum",
    "if x:\n    pass\nelif y:\n    import queue\nelse:\n    from threading import Thread",
    "%time x = 1\nimport timeit",
    "%%time\nimport cProfile",
    "import matplotlib.pyplot as plt\nplt.show()",
    "from sklearn.model_selection import train_test_split, KFold",
    "t = \"\"\"\n\\\"\"\" still inside\nimport escaped_trap\n\"\"\"\nimport textwrap",
    "def k(\n    a='import defaulttrap',\n):\n    import glob\n    return a",
    "from torch import nn\nimport torch.nn.functional as F",
    "import seaborn as sns  # plotting\nsns = None",
]

assert len(CELLS) == 50, len(CELLS)


def blank_magics(src):
    first = src.split("\n", 1)[0]
    if first.startswith("%%"):
        src = src.split("\n", 1)[1] if "\n" in src else ""
        return "\n" + src
    out = []
    for line in src.split("\n"):
        t = line.strip()
        out.append("" if t.startswith(("%", "!")) else line)
    return "\n".join(out)


def imports(src):
    found = []
    for node in ast.walk(ast.parse(blank_magics(src))):
        if isinstance(node, ast.Import):
            found.extend((node.lineno, a.name) for a in node.names)
        elif isinstance(node, ast.ImportFrom) and node.level == 0:
            found.append((node.lineno, node.module))
    return sorted(found)


def lines(text):
    parts = text.split("\n")
    return [p + "\n" for p in parts[:-1]] + ([parts[-1]] if parts[-1] else [])


def main():
    os.makedirs(OUT, exist_ok=True)
    nb = {
        "cells": [{"cell_type": "code", "execution_count": None, "metadata": {}, "outputs": [],
                   "source": lines(src)} for src in CELLS],
        "metadata": {"language_info": {"name": "python", "version": "3.10.12"}},
        "nbformat": 4,
        "nbformat_minor": 5,
    }
    with open(os.path.join(OUT, "cells.ipynb"), "w") as f:
        json.dump(nb, f, indent=1)
        f.write("\n")
    ref = [[i, line, mod] for i, src in enumerate(CELLS) for line, mod in imports(src)]
    with open(os.path.join(OUT, "reference.json"), "w") as f:
        json.dump(ref, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
