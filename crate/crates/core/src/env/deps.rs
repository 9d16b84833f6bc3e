//! Declared dependencies: requirements files, `setup.py`, `Pipfile`.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    RequirementsFile,
    SetupFile,
    Pipfile,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::RequirementsFile => "requirements_file",
            SourceKind::SetupFile => "setup_file",
            SourceKind::Pipfile => "pipfile",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "requirements_file" => SourceKind::RequirementsFile,
            "setup_file" => SourceKind::SetupFile,
            "pipfile" => SourceKind::Pipfile,
            _ => return None,
        })
    }

    /// Kind implied by a repository-relative path, if the file is one we read.
    pub fn for_path(rel: &str) -> Option<Self> {
        let name = rel.rsplit('/').next().unwrap_or(rel);
        let at_root = !rel.contains('/');
        if name.starts_with("requirements") && name.ends_with(".txt") {
            Some(SourceKind::RequirementsFile)
        } else if at_root && name == "setup.py" {
            Some(SourceKind::SetupFile)
        } else if at_root && name == "Pipfile" {
            Some(SourceKind::Pipfile)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PackageEntry {
    /// Normalized: lowercase, runs of `-`, `_`, `.` collapsed to `-`.
    pub name: String,
    pub constraint: Option<String>,
}

impl PackageEntry {
    pub fn new(name: &str, constraint: Option<&str>) -> Self {
        Self {
            name: normalize_name(name),
            constraint: constraint.map(str::trim).filter(|c| !c.is_empty()).map(str::to_string),
        }
    }

    /// `name` followed by the constraint, as passed to an installer.
    pub fn spec(&self) -> String {
        match &self.constraint {
            Some(c) => format!("{}{}", self.name, c),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySpec {
    pub source_kind: SourceKind,
    /// Repository-relative, `/`-separated.
    pub path: String,
    pub entries: Vec<PackageEntry>,
    pub unparsed: bool,
}

pub fn normalize_name(name: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[-_.]+").unwrap());
    re.replace_all(name.trim(), "-").to_ascii_lowercase()
}

fn requirement_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?)\s*(?:\[[^\]]*\])?\s*(\(?\s*(?:[<>=!~]=?|===)[^;]*?\)?)?\s*(?:;.*)?$")
            .unwrap()
    })
}

/// One requirement line (PEP 508 subset). Extras and environment markers
/// are dropped; a parenthesised constraint loses its parentheses.
pub fn parse_requirement(line: &str) -> Option<PackageEntry> {
    let caps = requirement_re().captures(line.trim())?;
    let constraint = caps.get(2).map(|m| {
        let c = m.as_str().trim();
        let c = c.strip_prefix('(').and_then(|c| c.strip_suffix(')')).unwrap_or(c);
        c.split_whitespace().collect::<String>()
    });
    Some(PackageEntry::new(&caps[1], constraint.as_deref()))
}

/// Parses requirements-file text. `None` when any line fails the grammar.
/// Option lines (`-r`, `--index-url`, ...) are skipped, as are editable or
/// URL installs, which name no registry package.
pub fn parse_requirements(text: &str) -> Option<Vec<PackageEntry>> {
    let mut out = Vec::new();
    let mut pending = String::new();
    for raw in text.lines() {
        let line = match raw.find(" #").or_else(|| raw.starts_with('#').then_some(0)) {
            Some(i) => &raw[..i],
            None => raw,
        };
        if let Some(head) = line.trim_end().strip_suffix('\\') {
            pending.push_str(head);
            continue;
        }
        pending.push_str(line);
        let logical = std::mem::take(&mut pending);
        let l = logical.trim();
        if l.is_empty() || l.starts_with('-') {
            continue;
        }
        // `name @ url` direct references keep the name, drop the URL.
        if let Some((name, _)) = l.split_once(" @ ") {
            out.push(PackageEntry::new(name, None));
            continue;
        }
        if l.contains("://") || l.starts_with("git+") || l.starts_with('.') || l.starts_with('/') {
            continue;
        }
        out.push(parse_requirement(l)?);
    }
    Some(out)
}

/// Pulls the string items out of an `install_requires=[...]` list literal.
/// Never executes anything. `Some(vec![])` when the call has no
/// `install_requires`; `None` when it exists but is not a list literal of
/// parseable strings.
pub fn parse_setup_py(text: &str) -> Option<Vec<PackageEntry>> {
    static KEY: OnceLock<Regex> = OnceLock::new();
    static LIST: OnceLock<Regex> = OnceLock::new();
    static ITEM: OnceLock<Regex> = OnceLock::new();
    let key = KEY.get_or_init(|| Regex::new(r"install_requires\s*=").unwrap());
    let list = LIST.get_or_init(|| Regex::new(r"(?s)\A\s*\[(.*?)\]").unwrap());
    let item = ITEM.get_or_init(|| Regex::new(r#"(?s)\A\s*(?:"([^"\\]*)"|'([^'\\]*)')\s*(?:,|\z)"#).unwrap());
    let Some(m) = key.find(text) else {
        return Some(Vec::new());
    };
    let body = &list.captures(&text[m.end()..])?[1];
    let body = strip_py_comments(body);
    let mut rest = body.trim();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let caps = item.captures(rest)?;
        let s = caps.get(1).or(caps.get(2)).map(|m| m.as_str()).unwrap_or("");
        out.push(parse_requirement(s)?);
        rest = rest[caps.get(0).unwrap().end()..].trim_start();
    }
    Some(out)
}

fn strip_py_comments(body: &str) -> String {
    body.lines()
        .map(|l| match l.find('#') {
            Some(i) if !l[..i].contains(['"', '\'']) || l[..i].matches(['"', '\'']).count() % 2 == 0 => &l[..i],
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads `[packages]` from a Pipfile. `"*"` means unconstrained.
pub fn parse_pipfile(text: &str) -> Option<Vec<PackageEntry>> {
    let doc: toml::Table = text.parse().ok()?;
    let Some(pkgs) = doc.get("packages") else {
        return Some(Vec::new());
    };
    let mut out = Vec::new();
    for (name, v) in pkgs.as_table()? {
        let c = match v {
            toml::Value::String(s) => Some(s.as_str()),
            toml::Value::Table(t) => t.get("version").and_then(toml::Value::as_str),
            _ => return None,
        };
        out.push(PackageEntry::new(name, c.filter(|c| *c != "*")));
    }
    Some(out)
}

fn parse_by_kind(kind: SourceKind, text: &str) -> Option<Vec<PackageEntry>> {
    match kind {
        SourceKind::RequirementsFile => parse_requirements(text),
        SourceKind::SetupFile => parse_setup_py(text),
        SourceKind::Pipfile => parse_pipfile(text),
    }
}

/// Every dependency declaration in a repository tree, ordered by path.
pub fn discover_dependency_files(repo_root: &Path) -> Result<Vec<DependencySpec>> {
    let mut out = Vec::new();
    let walker = walkdir::WalkDir::new(repo_root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !(e.file_type().is_dir() && e.file_name() == ".git"));
    for entry in walker {
        let entry = entry.map_err(|e| Error::Harvest(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(repo_root).expect("walk stays under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let Some(kind) = SourceKind::for_path(&rel) else {
            continue;
        };
        let parsed = std::fs::read(entry.path())
            .ok()
            .and_then(|b| String::from_utf8(b).ok())
            .and_then(|t| parse_by_kind(kind, &t));
        out.push(DependencySpec {
            source_kind: kind,
            path: rel,
            unparsed: parsed.is_none(),
            entries: parsed.unwrap_or_default(),
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(name: &str, c: Option<&str>) -> PackageEntry {
        PackageEntry::new(name, c)
    }

    #[test]
    fn requirements_lines() {
        let got = parse_requirements("numpy==1.19.5\npandas>=1.0").unwrap();
        assert_eq!(got, vec![e("numpy", Some("==1.19.5")), e("pandas", Some(">=1.0"))]);
        let got = parse_requirements(
            "# comment\n-r base.txt\nScikit_Learn[all] >= 0.24, <1.0 ; python_version>'3'\n\
             git+https://x/y.git\nrequests  # http\nfoo @ https://x/foo.whl\n",
        )
        .unwrap();
        assert_eq!(
            got,
            vec![
                e("scikit-learn", Some(">=0.24,<1.0")),
                e("requests", None),
                e("foo", None)
            ]
        );
        assert!(parse_requirements("numpy\n%%% what\n").is_none());
        assert_eq!(parse_requirements("").unwrap(), vec![]);
    }

    #[test]
    fn setup_py_pattern() {
        let got = parse_setup_py("setup(name='x', install_requires=[\"scipy\"])").unwrap();
        assert_eq!(got, vec![e("scipy", None)]);
        let multi = "setup(\n  install_requires=[\n    'numpy>=1.0',  # arrays\n    \"matplotlib\",\n  ],\n)";
        assert_eq!(
            parse_setup_py(multi).unwrap(),
            vec![e("numpy", Some(">=1.0")), e("matplotlib", None)]
        );
        assert_eq!(parse_setup_py("setup(name='x')").unwrap(), vec![]);
        assert!(parse_setup_py("setup(install_requires=REQS)").is_none());
        assert!(parse_setup_py("setup(install_requires=[x for x in y])").is_none());
    }

    #[test]
    fn pipfile_packages() {
        let text = "[packages]\nnumpy = \"*\"\nrequests = {version = \">=2.0\"}\n[dev-packages]\npytest = \"*\"\n";
        assert_eq!(
            parse_pipfile(text).unwrap(),
            vec![e("numpy", None), e("requests", Some(">=2.0"))]
        );
        assert!(parse_pipfile("[packages\n").is_none());
    }

    #[test]
    fn discovery_rules() {
        let d = tempfile::tempdir().unwrap();
        let files = [
            ("requirements.txt", "numpy==1.19.5\npandas>=1.0"),
            ("docs/requirements-docs.txt", "sphinx"),
            ("setup.py", "setup(install_requires=['scipy'])"),
            ("sub/setup.py", "setup(install_requires=['ignored'])"),
            ("sub/Pipfile", "[packages]\nignored = '*'"),
            ("Pipfile", "not [valid"),
            (".git/requirements.txt", "hidden"),
        ];
        for (p, body) in files {
            let f = d.path().join(p);
            std::fs::create_dir_all(f.parent().unwrap()).unwrap();
            std::fs::write(f, body).unwrap();
        }
        let specs = discover_dependency_files(d.path()).unwrap();
        let paths: Vec<&str> = specs.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(
            paths,
            vec!["Pipfile", "docs/requirements-docs.txt", "requirements.txt", "setup.py"]
        );
        assert!(specs[0].unparsed && specs[0].entries.is_empty());
        assert_eq!(specs[2].entries.len(), 2);
        assert_eq!(specs[3].source_kind, SourceKind::SetupFile);
        assert!(discover_dependency_files(tempfile::tempdir().unwrap().path())
            .unwrap()
            .is_empty());
    }
}
