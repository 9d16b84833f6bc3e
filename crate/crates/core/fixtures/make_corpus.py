"""Regenerates fixtures/corpus. Run from crates/core: python3 fixtures/make_corpus.py"""
import json
import os
import shutil

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "corpus")


def write(path, text):
    full = os.path.join(ROOT, path)
    os.makedirs(os.path.dirname(full), exist_ok=True)
    with open(full, "w") as f:
        f.write(text)


def lines(text):
    parts = text.split("\n")
    return [p + "\n" for p in parts[:-1]] + ([parts[-1]] if parts[-1] else [])


def out(text):
    return {"output_type": "stream", "name": "stdout", "text": lines(text)}


def result(text, n):
    return {"output_type": "execute_result", "execution_count": n,
            "data": {"text/plain": lines(text)}, "metadata": {}}


def md(text):
    return ("markdown", text, [])


def code(text, *outputs):
    return ("code", text, list(outputs))


def notebook(cells, language="python", version="3.8.10"):
    nb_cells = []
    n = 0
    for kind, src, outs in cells:
        if kind == "markdown":
            nb_cells.append({"cell_type": "markdown", "metadata": {}, "source": lines(src)})
            continue
        n += 1
        fixed = []
        for o in outs:
            o = dict(o)
            if o["output_type"] == "execute_result":
                o["execution_count"] = n
            fixed.append(o)
        nb_cells.append({"cell_type": "code", "execution_count": n, "metadata": {},
                         "outputs": fixed, "source": lines(src)})
    if language == "python":
        meta = {"kernelspec": {"display_name": "Python 3", "language": "python", "name": "python3"},
                "language_info": {"name": "python", "version": version}}
    else:
        meta = {"kernelspec": {"display_name": "R", "language": "R", "name": "ir"},
                "language_info": {"name": "R", "version": "4.0.3"}}
    return json.dumps({"cells": nb_cells, "metadata": meta, "nbformat": 4, "nbformat_minor": 4},
                      indent=1) + "\n"


def repo(owner, name, files, created, status=200, redirect=None, languages=None):
    meta = {"status": status, "repo": {"created_at": created, "stargazers_count": 3,
                                       "forks_count": 1, "license": {"spdx_id": "MIT"}},
            "languages": languages or {"Jupyter Notebook": 52000, "Python": 4000},
            "releases": 0, "commits": ["2020-06-01", "2021-02-10"]}
    if redirect:
        meta["redirect"] = redirect
    write(f"hosting/{owner}/{name}/meta.json", json.dumps(meta, indent=2) + "\n")
    for path, text in files.items():
        write(f"hosting/{owner}/{name}/tree/{path}", text)


ARTICLE = """<?xml version="1.0" encoding="UTF-8"?>
<pmc-articleset><article xmlns:xlink="http://www.w3.org/1999/xlink" article-type="research-article">
<front>
  <journal-meta>
    <journal-title-group><journal-title>{journal}</journal-title></journal-title-group>
    <issn pub-type="epub">{issn}</issn>
  </journal-meta>
  <article-meta>
    <article-id pub-id-type="pmc">{pmc}</article-id>
    <article-id pub-id-type="doi">10.5555/nbr.{pmc}</article-id>
    <article-categories><subj-group subj-group-type="heading"><subject>{subject}</subject></subj-group></article-categories>
    <title-group><article-title>{title}</article-title></title-group>
    <contrib-group>
      <contrib contrib-type="author"><name><surname>{author}</surname><given-names>A.</given-names></name></contrib>
    </contrib-group>
    <pub-date pub-type="epub"><day>{day}</day><month>{month}</month><year>{year}</year></pub-date>
    <kwd-group kwd-group-type="MESH"><kwd>{mesh}</kwd></kwd-group>
  </article-meta>
</front>
<body>
{body}
</body>
</article></pmc-articleset>
"""


def article(pmc, year, month, journal, issn, subject, mesh, title, author, body):
    write(f"articles/PMC{pmc}.xml", ARTICLE.format(
        pmc=pmc, year=year, month=month, day=14, journal=journal, issn=issn, subject=subject,
        mesh=mesh, title=title, author=author, body=body))


def build():
    if os.path.isdir(ROOT):
        for sub in ("articles", "hosting"):
            shutil.rmtree(os.path.join(ROOT, sub), ignore_errors=True)

    article(7000001, 2020, 3, "PLoS Computational Biology", "1553-7358", "Research Article",
            "Computational Biology", "Counting cells in tissue sections", "Kim",
            '<p>Code is at <ext-link xlink:href="https://github.com/kimlab/cellcount">GitHub</ext-link>.'
            " An earlier tool lives at https://github.com/kimlab/gone-tool and the lab page is"
            " https://github.com/kimlab.</p>")
    article(7000002, 2020, 7, "GigaScience", "2047-217X", "Technical Note",
            "Sequence Analysis", "Summary statistics for sequencing runs", "Ortiz",
            "<p>Notebooks: https://github.com/ortiz-group/seqstats and the archived"
            " https://github.com/ortiz-group/seqstats-old.git. Documentation at"
            " https://ortiz-group.github.io/docs.</p>")
    article(7000003, 2020, 11, "PLoS Computational Biology", "1553-7358", "Research Article",
            "Gene Expression Profiling", "Plotting RNA abundance", "Nguyen",
            "<p>We reuse https://github.com/kimlab/cellcount/tree/main/notebooks. Our code:"
            " https://github.com/nguyen/rnaplots, https://github.com/nguyen/empty-repo and"
            " http://www.github.com/nguyen/readme-only/.</p>")
    article(7100004, 2021, 2, "BMC Bioinformatics", "1471-2105", "Software",
            "Image Processing, Computer-Assisted", "Segmenting microscopy images", "Patel",
            "<p>https://github.com/patel-lab/imaging contains the Python notebooks and"
            " https://github.com/patel-lab/rscripts the R ones. Climate covariates follow"
            " https://nbviewer.org/github/lee/climate-nb/blob/main/covariates.ipynb.</p>")
    article(7100005, 2021, 9, "GigaScience", "2047-217X", "Data Note",
            "Climate", "A data note on station records", "Santos",
            "<p>Material: https://github.com/lee/broken-nbs, https://github.com/lee/withdrawn and"
            " <ext-link xlink:href=\"git@github.com:santos/pipeline.git\">the pipeline</ext-link>.</p>")

    # kimlab/cellcount: numpy, one drifting notebook, style findings.
    reqs = "numpy>=1.18\n"
    repo("kimlab", "cellcount", {
        "requirements.txt": reqs,
        "README.md": "# cellcount\n",
        "helpers.py": "def load(path):\n    return path\n",
        "tools.py": "SCALE = 2\n",
        "notebooks/01_load.ipynb": notebook([
            md("# Load\nRead the counts."),
            code("import numpy as np\ncounts = np.array([3, 5, 8])\nprint(counts.sum())", out("16\n")),
            code("counts.mean()", result("5.333333333333333", 0)),
        ]),
        "notebooks/02_count.ipynb": notebook([
            code("%matplotlib inline\nimport numpy as np", ),
            code("x = np.arange(4)\nx*2", result("array([0, 2, 4, 6])", 0)),
            md("Done."),
        ]),
        "notebooks/03_plot.ipynb": notebook([
            md("## Plot"),
            code("#mock: drift\nprint('threshold 0.5')", out("threshold 0.5\n")),
            code("print('ok')", out("ok\n")),
        ]),
        "notebooks/04_scratch.ipynb": notebook([
            code("import helpers, tools\nfrom helpers import *\nl = 1\nif l: print(l)", out("1\n")),
            code("y=2;\nz = {'a':1}  #keep\n#no space", ),
            code("import helpers\nw = y+z['a']"),
            code(""),
        ]),
    }, "2019-04-02T09:00:00Z")

    # kimlab/gone-tool has no hosting directory at all, so it answers 404.

    # ortiz-group/seqstats: pandas, two failing notebooks.
    repo("ortiz-group", "seqstats", {
        "requirements.txt": "pandas==1.1.5\n",
        "qc.ipynb": notebook([
            code("import pandas as pd\ndf = pd.DataFrame({'reads': [10, 20]})\ndf.reads.sum()",
                 result("30", 0)),
        ], version="3.7.6"),
        "stats.ipynb": notebook([
            code("print('start')", out("start\n")),
            code("#mock: raise FileNotFoundError: [Errno 2] No such file or directory: 'runs.csv'\n"
                 "rows = open('runs.csv').read()", out("12 rows\n")),
            code("print(rows)", out("ok\n")),
        ], version="3.7.6"),
        "summary.ipynb": notebook([
            md("Summary table."),
            code("total = 10 + 20\ntotal", result("30", 0)),
        ], version="3.7.6"),
        "figures.ipynb": notebook([
            code("#mock: raise ModuleNotFoundError: No module named 'seaborn'\nprint('palette')",
                 out("palette\n")),
            code("print('figure')", out("figure\n")),
        ], version="3.7.6"),
    }, "2018-10-20T12:00:00Z")

    # Moved repository; the working copy comes from the target.
    repo("ortiz-group", "seqstats-old", {}, "2016-05-05T00:00:00Z", status=301,
         redirect="ortiz-group/seqstats-v2")
    repo("ortiz-group", "seqstats-v2", {
        "setup.py": "from setuptools import setup\nsetup(name='seqstats', install_requires=['tqdm>=4'])\n",
        "a_intro.ipynb": notebook([
            code("print('intro')", out("intro\n")),
        ], version="3.9.1"),
        "b_slow.ipynb": notebook([
            code("#mock: sleep 5\nprint('long job')", out("long job\n")),
        ], version="3.9.1"),
        "c_tables.ipynb": notebook([
            md("Tables"),
            code("print('a | b')", out("a | b\n")),
            code("print('c | d')", out("c | d\n")),
        ], version="3.9.1"),
    }, "2020-01-15T00:00:00Z")

    # nguyen/rnaplots has no dependency declaration.
    repo("nguyen", "rnaplots", {
        "plot_a.ipynb": notebook([
            code("import numpy as np\nprint(np.pi)", out("3.141592653589793\n")),
        ], version="3.6.9"),
        "plot_b.ipynb": notebook([
            code("print('b')", out("b\n")),
        ], version="3.6.9"),
        "plot_c.ipynb": notebook([
            md("Nothing to run here yet."),
            code("c = 3"),
        ], version="3.6.9"),
    }, "2020-02-29T00:00:00Z")
    repo("nguyen", "empty-repo", {}, "2020-03-01T00:00:00Z")
    repo("nguyen", "readme-only", {"README.md": "# placeholder\nNotebooks coming soon.\n"},
         "2020-03-02T00:00:00Z")

    # patel-lab/imaging answers 429 once before 200.
    repo("patel-lab", "imaging", {
        "Pipfile": '[packages]\nscikit-image = "*"\n',
        "segment.ipynb": notebook([
            code("print('segment')", out("segment\n")),
            code("5 * 5", result("25", 0)),
        ]),
        "measure.ipynb": notebook([
            code("area = [4, 9]\nsum(area)", result("13", 0)),
        ]),
        "export.ipynb": notebook([
            md("Export the masks."),
            code("print('exported 2 masks')", out("exported 2 masks\n")),
        ]),
        "gpu.ipynb": notebook([
            code("#mock: crash\nprint('device')", out("device\n")),
        ]),
        "opencv.ipynb": notebook([
            code("#mock: raise ModuleNotFoundError: No module named 'cv2'\nprint('cv')", out("cv\n")),
            code("print('after')", out("after\n")),
        ]),
    }, "2021-01-05T00:00:00Z", status=[429, 200])

    repo("patel-lab", "rscripts", {
        "analysis.ipynb": notebook([code("x <- c(1, 2)\nsum(x)", result("[1] 3", 0))], language="R"),
        "figures.ipynb": notebook([code("plot(1:3)")], language="R"),
    }, "2021-01-06T00:00:00Z", languages={"Jupyter Notebook": 9000, "R": 800})

    repo("lee", "climate-nb", {
        "requirements.txt": "xarray\nmatplotlib==3.3.2  # plots\n",
        "covariates.ipynb": notebook([
            code("temps = [12.5, 13.0]\nprint(max(temps))", out("13.0\n")),
        ], version="3.8.5"),
        "stations.ipynb": notebook([
            code("print('42 stations')", out("42 stations\n")),
        ], version="3.8.5"),
        "trend.ipynb": notebook([
            code("#mock: stdout slope 0.021\nprint('slope', 0.02)", out("slope 0.02\n")),
        ], version="3.8.5"),
        "anomaly.ipynb": notebook([
            code("#mock: drift\nprint('anomaly')", out("anomaly\n")),
            code("print('done')", out("done\n")),
        ], version="3.8.5"),
    }, "2015-08-19T00:00:00Z")

    repo("lee", "broken-nbs", {
        "requirements.txt": "requests\n",
        "truncated.ipynb": notebook([code("print(1)", out("1\n"))])[:120],
        "no_cells.ipynb": json.dumps({"metadata": {}, "nbformat": 4, "nbformat_minor": 2}) + "\n",
        "fine.ipynb": notebook([code("print('fine')", out("fine\n"))]),
    }, "2019-12-31T00:00:00Z")
    repo("lee", "withdrawn", {}, "2019-01-01T00:00:00Z", status=410)

    repo("santos", "pipeline", {
        "requirements.txt": "pandas>=1.0\ndefinitely-not-a-package==0.1\n",
        "run.ipynb": notebook([
            code("import pandas\nprint(pandas.__name__)", out("pandas\n")),
        ]),
        "check.ipynb": notebook([
            code("print('check')", out("check\n")),
        ]),
    }, "2021-06-30T00:00:00Z")


if __name__ == "__main__":
    build()
