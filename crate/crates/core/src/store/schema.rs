pub const SCHEMA_VERSION: i64 = 1;

pub const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS journals (
    id INTEGER PRIMARY KEY,
    key TEXT NOT NULL UNIQUE,
    issn TEXT,
    title TEXT,
    nlm_abbrev TEXT,
    iso_abbrev TEXT
);

CREATE TABLE IF NOT EXISTS articles (
    id INTEGER PRIMARY KEY,
    pmcid TEXT NOT NULL UNIQUE,
    pmid TEXT,
    doi TEXT,
    title TEXT NOT NULL,
    journal_id INTEGER REFERENCES journals(id),
    received TEXT,
    accepted TEXT,
    published TEXT,
    license TEXT,
    copyright TEXT,
    keywords TEXT NOT NULL,
    subject_tags TEXT NOT NULL,
    mesh_terms TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS authors (
    id INTEGER PRIMARY KEY,
    article_id INTEGER NOT NULL REFERENCES articles(id),
    position INTEGER NOT NULL,
    given TEXT,
    family TEXT,
    orcid TEXT,
    email TEXT,
    UNIQUE (article_id, position)
);

CREATE TABLE IF NOT EXISTS repositories (
    id INTEGER PRIMARY KEY,
    canonical TEXT NOT NULL UNIQUE,
    owner TEXT NOT NULL,
    name TEXT NOT NULL,
    harvested INTEGER NOT NULL DEFAULT 0,
    accessibility TEXT,
    status_code INTEGER,
    moved_to TEXT,
    clone_path TEXT,
    harvest_error TEXT,
    default_branch TEXT,
    created_at TEXT,
    updated_at TEXT,
    pushed_at TEXT,
    languages TEXT,
    subscribers INTEGER,
    forks INTEGER,
    open_issues INTEGER,
    releases INTEGER,
    license TEXT,
    commits_after TEXT,
    metadata_incomplete INTEGER NOT NULL DEFAULT 0,
    inventoried INTEGER NOT NULL DEFAULT 0,
    deps_scanned INTEGER NOT NULL DEFAULT 0
);

-- Every GitHub link found, whatever its disposition. article_id is NULL
-- for links read from a repository list file.
CREATE TABLE IF NOT EXISTS links (
    id INTEGER PRIMARY KEY,
    article_id INTEGER REFERENCES articles(id),
    raw TEXT NOT NULL,
    disposition TEXT NOT NULL,
    repo_id INTEGER REFERENCES repositories(id),
    UNIQUE (article_id, raw)
);

CREATE TABLE IF NOT EXISTS article_repos (
    article_id INTEGER NOT NULL REFERENCES articles(id),
    repo_id INTEGER NOT NULL REFERENCES repositories(id),
    PRIMARY KEY (article_id, repo_id)
);

CREATE TABLE IF NOT EXISTS notebooks (
    id INTEGER PRIMARY KEY,
    repo_id INTEGER NOT NULL REFERENCES repositories(id),
    path TEXT NOT NULL,
    valid INTEGER NOT NULL,
    invalid_reason TEXT,
    nbformat TEXT,
    kernel_name TEXT,
    language TEXT,
    language_version TEXT,
    total_cells INTEGER,
    code_cells INTEGER,
    markdown_cells INTEGER,
    raw_cells INTEGER,
    empty_cells INTEGER,
    cells_with_output INTEGER,
    max_execution_count INTEGER,
    md_code_ratio REAL,
    name_flags TEXT,
    analyzed INTEGER NOT NULL DEFAULT 0,
    UNIQUE (repo_id, path)
);

CREATE TABLE IF NOT EXISTS cells (
    notebook_id INTEGER NOT NULL REFERENCES notebooks(id),
    idx INTEGER NOT NULL,
    kind TEXT NOT NULL,
    source TEXT NOT NULL,
    execution_count INTEGER,
    outputs TEXT NOT NULL,
    PRIMARY KEY (notebook_id, idx)
);

CREATE TABLE IF NOT EXISTS imports (
    id INTEGER PRIMARY KEY,
    notebook_id INTEGER NOT NULL REFERENCES notebooks(id),
    cell_index INTEGER NOT NULL,
    line INTEGER NOT NULL,
    module TEXT NOT NULL,
    top_level TEXT NOT NULL,
    form TEXT NOT NULL,
    locality TEXT NOT NULL,
    parse_mode TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS style_findings (
    id INTEGER PRIMARY KEY,
    notebook_id INTEGER NOT NULL REFERENCES notebooks(id),
    cell_index INTEGER NOT NULL,
    line INTEGER NOT NULL,
    col INTEGER NOT NULL,
    code TEXT NOT NULL,
    description TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS dependency_specs (
    id INTEGER PRIMARY KEY,
    repo_id INTEGER NOT NULL REFERENCES repositories(id),
    source_kind TEXT NOT NULL,
    path TEXT NOT NULL,
    entries TEXT NOT NULL,
    unparsed INTEGER NOT NULL,
    UNIQUE (repo_id, path)
);

CREATE TABLE IF NOT EXISTS plans (
    notebook_id INTEGER PRIMARY KEY REFERENCES notebooks(id),
    attempted INTEGER NOT NULL,
    policy TEXT NOT NULL,
    interpreter_version TEXT,
    interpreter_defaulted INTEGER,
    packages TEXT,
    fallback_kitchen_sink INTEGER,
    env_name TEXT,
    manager_command TEXT
);

CREATE TABLE IF NOT EXISTS provisions (
    env_name TEXT PRIMARY KEY,
    status TEXT NOT NULL,
    python TEXT,
    log_excerpt TEXT,
    wall_time REAL NOT NULL
);

CREATE TABLE IF NOT EXISTS executions (
    id INTEGER PRIMARY KEY,
    notebook_id INTEGER NOT NULL REFERENCES notebooks(id),
    attempt INTEGER NOT NULL,
    env_name TEXT NOT NULL REFERENCES provisions(env_name),
    status TEXT NOT NULL,
    exception_class TEXT,
    ename TEXT,
    evalue TEXT,
    traceback TEXT,
    exception_cell INTEGER,
    interpreter TEXT,
    detail TEXT,
    total_duration REAL NOT NULL,
    started_at TEXT NOT NULL,
    cell_results TEXT NOT NULL,
    UNIQUE (notebook_id, attempt)
);

CREATE TABLE IF NOT EXISTS diffs (
    notebook_id INTEGER NOT NULL REFERENCES notebooks(id),
    attempt INTEGER NOT NULL,
    verdict TEXT NOT NULL,
    diff_count INTEGER NOT NULL,
    diffs TEXT NOT NULL,
    PRIMARY KEY (notebook_id, attempt)
);

-- Recomputed from the tables above; never edited by hand.
CREATE TABLE IF NOT EXISTS outcomes (
    id INTEGER PRIMARY KEY,
    repo_id INTEGER NOT NULL REFERENCES repositories(id),
    notebook_id INTEGER REFERENCES notebooks(id),
    outcome TEXT NOT NULL,
    kind TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS stage_runs (
    stage TEXT PRIMARY KEY,
    completed_at TEXT NOT NULL
);

CREATE INDEX IF NOT EXISTS notebooks_repo ON notebooks(repo_id);
CREATE INDEX IF NOT EXISTS imports_notebook ON imports(notebook_id);
CREATE INDEX IF NOT EXISTS style_notebook ON style_findings(notebook_id);
"#;
