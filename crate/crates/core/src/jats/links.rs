use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::xml::{Element, Node};

pub const GITHUB_HOST: &str = "github.com";

/// A repository reference in canonical `https://github.com/{owner}/{repo}` form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NormalizedRepoUrl {
    pub host: String,
    pub owner: String,
    pub repo: String,
}

impl NormalizedRepoUrl {
    pub fn new(owner: impl Into<String>, repo: impl Into<String>) -> Self {
        Self {
            host: GITHUB_HOST.to_string(),
            owner: owner.into(),
            repo: repo.into(),
        }
    }

    pub fn canonical(&self) -> String {
        format!("https://{}/{}/{}", self.host, self.owner, self.repo)
    }

    /// `owner/repo`, used for workspace paths and store keys.
    pub fn slug(&self) -> String {
        format!("{}/{}", self.owner, self.repo)
    }

    pub fn parse_canonical(s: &str) -> Option<Self> {
        match normalize_github_link(s).disposition {
            Disposition::Normalized(u) if u.canonical() == s => Some(u),
            _ => None,
        }
    }
}

impl fmt::Display for NormalizedRepoUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "url", rename_all = "snake_case")]
pub enum Disposition {
    Normalized(NormalizedRepoUrl),
    ExcludedUserOnly,
    ExcludedPages,
    Malformed,
}

impl Disposition {
    pub fn label(&self) -> &'static str {
        match self {
            Disposition::Normalized(_) => "normalized",
            Disposition::ExcludedUserOnly => "excluded_user_only",
            Disposition::ExcludedPages => "excluded_pages",
            Disposition::Malformed => "malformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkExtraction {
    pub raw: String,
    pub disposition: Disposition,
}

impl LinkExtraction {
    /// Entries sharing a key are the same link; normalized links merge on
    /// their canonical form, everything else on the raw text.
    fn merge_key(&self) -> String {
        match &self.disposition {
            Disposition::Normalized(u) => u.canonical(),
            _ => self.raw.clone(),
        }
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && s.chars().all(is_name_char)
}

// First path segments on github.com that name site areas rather than owners.
const USER_AREA_PREFIXES: &[&str] = &["orgs", "users"];

pub fn normalize_github_link(raw: &str) -> LinkExtraction {
    LinkExtraction {
        raw: raw.to_string(),
        disposition: classify(raw.trim()),
    }
}

fn classify(input: &str) -> Disposition {
    if input.is_empty() || input.chars().any(char::is_whitespace) {
        return Disposition::Malformed;
    }

    // scp-style remote: git@github.com:owner/repo.git
    let rest = if let Some(r) = strip_prefix_ci(input, "git@github.com:") {
        return from_owner_repo_path(r);
    } else if let Some(r) = strip_prefix_ci(input, "https://") {
        r
    } else if let Some(r) = strip_prefix_ci(input, "http://") {
        r
    } else if let Some(r) = strip_prefix_ci(input, "git://") {
        r
    } else {
        input
    };

    let rest = rest.split(['?', '#']).next().unwrap_or("");
    let (authority, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i + 1..]),
        None => (rest, ""),
    };
    let host = authority
        .rsplit('@')
        .next()
        .unwrap_or("")
        .split(':')
        .next()
        .unwrap_or("")
        .to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);

    if host == "github.io" || host.ends_with(".github.io") {
        return Disposition::ExcludedPages;
    }
    match host {
        "github.com" => {
            let first = path.split('/').find(|s| !s.is_empty());
            if first.is_some_and(|f| USER_AREA_PREFIXES.contains(&f)) {
                return Disposition::ExcludedUserOnly;
            }
            from_owner_repo_path(path)
        }
        "raw.githubusercontent.com" => from_owner_repo_path(path),
        "nbviewer.org" | "nbviewer.jupyter.org" | "nbviewer.ipython.org" => {
            let mut segs = path.split('/').filter(|s| !s.is_empty());
            match segs.next() {
                Some(s) if s.eq_ignore_ascii_case("github") => {
                    let tail: Vec<&str> = segs.collect();
                    from_owner_repo_path(&tail.join("/"))
                }
                _ => Disposition::Malformed,
            }
        }
        _ => Disposition::Malformed,
    }
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len() && s.is_char_boundary(prefix.len()) && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

/// `owner[/repo[/anything...]]` after the host has been removed.
fn from_owner_repo_path(path: &str) -> Disposition {
    let path = path.split(['?', '#']).next().unwrap_or("");
    let mut segs = path.split('/').filter(|s| !s.is_empty());
    let Some(owner) = segs.next() else {
        return Disposition::Malformed;
    };
    if !valid_segment(owner) {
        return Disposition::Malformed;
    }
    let Some(repo) = segs.next() else {
        return Disposition::ExcludedUserOnly;
    };
    let mut repo = repo;
    while let Some(stripped) = repo.strip_suffix(".git") {
        repo = stripped;
    }
    if !valid_segment(repo) {
        return Disposition::Malformed;
    }
    Disposition::Normalized(NormalizedRepoUrl::new(owner, repo))
}

fn candidate_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?i)\bgit@github\.com:[^\s<>"'\]\[)(}{|\\^`]+|\b(?:(?:https?|git)://)?(?:[a-z0-9-]+\.)*(?:github\.com|github\.io|githubusercontent\.com|nbviewer\.(?:jupyter\.|ipython\.)?org)(?::\d+)?(?:/[^\s<>"'\]\[)(}{|\\^`]*)?"#,
        )
        .expect("candidate regex")
    })
}

/// Finds candidate repository URLs in free text, in order of appearance.
pub fn scan_text(text: &str) -> Vec<String> {
    candidate_regex()
        .find_iter(text)
        .filter_map(|m| {
            let trimmed = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?', '\'', '"']);
            (!trimmed.is_empty()).then(|| trimmed.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Whether `<ref-list>` contents are scanned.
    pub include_references: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            include_references: true,
        }
    }
}

/// Scans every text node and attribute value of an article and returns one
/// entry per distinct link, first occurrence first.
pub fn extract_github_links(article: &Element, opts: ScanOptions) -> Vec<LinkExtraction> {
    let mut raws = Vec::new();
    collect_candidates(article, opts, &mut raws);
    dedup_extractions(raws.iter().map(|r| normalize_github_link(r)))
}

pub fn dedup_extractions(items: impl IntoIterator<Item = LinkExtraction>) -> Vec<LinkExtraction> {
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut out = Vec::new();
    for item in items {
        if seen.insert(item.merge_key(), ()).is_none() {
            out.push(item);
        }
    }
    out
}

fn collect_candidates(el: &Element, opts: ScanOptions, out: &mut Vec<String>) {
    if !opts.include_references && el.name == "ref-list" {
        return;
    }
    for (_, value) in &el.attrs {
        out.extend(scan_text(value));
    }
    // Adjacent text nodes are joined so entity boundaries do not split URLs.
    let mut pending = String::new();
    for child in &el.children {
        match child {
            Node::Text(t) => pending.push_str(t),
            Node::Element(e) => {
                out.extend(scan_text(&pending));
                pending.clear();
                collect_candidates(e, opts, out);
            }
        }
    }
    out.extend(scan_text(&pending));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jats::xml::parse_document;

    fn canon(raw: &str) -> Option<String> {
        match normalize_github_link(raw).disposition {
            Disposition::Normalized(u) => Some(u.canonical()),
            _ => None,
        }
    }

    #[test]
    fn strips_suffixes_and_extensions() {
        assert_eq!(
            canon("https://github.com/u/r/tree/main/notebooks").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            canon("https://github.com/u/r.git").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            canon("http://www.GitHub.com/u/r/").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            canon("github.com/u/r?tab=readme#x").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            canon("git@github.com:Org/Repo.git").as_deref(),
            Some("https://github.com/Org/Repo")
        );
        assert_eq!(
            canon("https://github.com/u/r/blob/abc123/a.ipynb").as_deref(),
            Some("https://github.com/u/r")
        );
    }

    #[test]
    fn preserves_owner_and_repo_case() {
        assert_eq!(
            canon("HTTPS://GITHUB.COM/MyOrg/MyRepo").as_deref(),
            Some("https://github.com/MyOrg/MyRepo")
        );
    }

    #[test]
    fn nbviewer_links_resolve_to_repo() {
        assert_eq!(
            canon("https://nbviewer.org/github/u/r/blob/main/x.ipynb").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            canon("http://nbviewer.jupyter.org/github/u/r/").as_deref(),
            Some("https://github.com/u/r")
        );
        assert_eq!(
            normalize_github_link("https://nbviewer.org/url/example.com/x.ipynb").disposition,
            Disposition::Malformed
        );
    }

    #[test]
    fn exclusions() {
        assert_eq!(
            normalize_github_link("https://github.com/only-a-user").disposition,
            Disposition::ExcludedUserOnly
        );
        assert_eq!(
            normalize_github_link("https://github.com/orgs/someorg/repositories").disposition,
            Disposition::ExcludedUserOnly
        );
        assert_eq!(
            normalize_github_link("https://github.io/u").disposition,
            Disposition::ExcludedPages
        );
        assert_eq!(
            normalize_github_link("https://lab.github.io/project/").disposition,
            Disposition::ExcludedPages
        );
    }

    #[test]
    fn malformed_inputs() {
        for raw in [
            "",
            "github.com",
            "https://github.com/",
            "https://github.com/u/r%20x",
            "https://github.com/u r/x",
            "https://gist.github.com/u/abc",
            "https://github.com/u/.git",
        ] {
            assert_eq!(
                normalize_github_link(raw).disposition,
                Disposition::Malformed,
                "{raw:?}"
            );
        }
    }

    #[test]
    fn scan_trims_trailing_punctuation() {
        let found = scan_text("Code is at https://github.com/u/r. See also (github.com/a/b), and mygithub.com/x/y.");
        assert_eq!(found, vec!["https://github.com/u/r", "github.com/a/b"]);
    }

    #[test]
    fn scan_keeps_scp_remotes_whole() {
        let found = scan_text("clone git@github.com:Org/Repo.git, then run it");
        assert_eq!(found, vec!["git@github.com:Org/Repo.git"]);
        assert_eq!(canon(&found[0]).as_deref(), Some("https://github.com/Org/Repo"));
    }

    #[test]
    fn duplicates_merge_after_normalization() {
        let doc = parse_document(
            r#"<article><body><p>See https://github.com/u/r and http://github.com/u/r/ again.</p>
            <p><ext-link xlink:href="https://github.com/u/r">repo</ext-link> https://github.com/only-a-user</p></body></article>"#,
        )
        .unwrap();
        let links = extract_github_links(&doc, ScanOptions::default());
        assert_eq!(links.len(), 2);
        assert_eq!(links[0].raw, "https://github.com/u/r");
        assert_eq!(links[1].disposition, Disposition::ExcludedUserOnly);
    }

    #[test]
    fn reference_list_scanning_is_configurable() {
        let doc = parse_document(
            "<article><body><p>https://github.com/a/b</p></body><back><ref-list><ref>https://github.com/c/d</ref></ref-list></back></article>",
        )
        .unwrap();
        assert_eq!(extract_github_links(&doc, ScanOptions::default()).len(), 2);
        let no_refs = ScanOptions {
            include_references: false,
        };
        assert_eq!(extract_github_links(&doc, no_refs).len(), 1);
    }
}
