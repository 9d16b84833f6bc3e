use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::net::{is_transient_status, with_retries, RateLimiter, RetryPolicy};

/// One page of search results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchPage {
    pub total: usize,
    pub ids: Vec<String>,
}

/// A literature search service: paged id search plus full-text fetch.
pub trait SearchClient: Send + Sync {
    fn search_page(&self, query: &str, start: usize, page_size: usize) -> Result<SearchPage>;
    fn fetch_xml(&self, ids: &[String]) -> Result<String>;
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub page_size: usize,
    pub retry: RetryPolicy,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            page_size: 500,
            retry: RetryPolicy::default(),
        }
    }
}

/// Pages through the search results and returns the de-duplicated ids in
/// service order.
pub fn fetch_article_ids(query: &str, client: &dyn SearchClient, opts: SearchOptions) -> Result<Vec<String>> {
    if query.trim().is_empty() {
        return Err(Error::Usage("search query must not be empty".into()));
    }
    let page_size = opts.page_size.max(1);
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    let mut start = 0;
    loop {
        let page = with_retries(opts.retry, || client.search_page(query, start, page_size))?;
        let n = page.ids.len();
        for id in page.ids {
            if seen.insert(id.clone()) {
                ids.push(id);
            }
        }
        start += n;
        if n == 0 || start >= page.total {
            break;
        }
    }
    Ok(ids)
}

/// NCBI E-utilities style client (`esearch.fcgi` / `efetch.fcgi`).
pub struct EutilsClient {
    base_url: String,
    api_key: Option<String>,
    database: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl EutilsClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, delay: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            database: "pmc".into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
            limiter: RateLimiter::new(delay),
        }
    }

    fn get(&self, endpoint: &str, params: &[(&str, String)]) -> Result<String> {
        self.limiter.wait();
        let mut req = self.agent.get(&format!("{}/{endpoint}", self.base_url));
        for (k, v) in params {
            req = req.query(k, v);
        }
        if let Some(key) = &self.api_key {
            req = req.query("api_key", key);
        }
        match req.call() {
            Ok(resp) => resp.into_string().map_err(Error::Io),
            Err(ureq::Error::Status(code, resp)) if is_transient_status(code) => {
                let _ = resp.into_string();
                Err(Error::Retryable {
                    attempts: 1,
                    message: format!("{endpoint}: HTTP {code}"),
                })
            }
            Err(ureq::Error::Status(code, resp)) => Err(Error::MalformedResponse {
                message: format!("{endpoint}: HTTP {code}"),
                raw: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(Error::Retryable {
                attempts: 1,
                message: format!("{endpoint}: {t}"),
            }),
        }
    }
}

pub fn parse_esearch_json(raw: &str) -> Result<SearchPage> {
    let malformed = |message: &str| Error::MalformedResponse {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    let v: Value = serde_json::from_str(raw).map_err(|e| malformed(&e.to_string()))?;
    let result = v
        .get("esearchresult")
        .ok_or_else(|| malformed("missing esearchresult"))?;
    let total = match result.get("count") {
        Some(Value::String(s)) => s.parse().map_err(|_| malformed("non-numeric count"))?,
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| malformed("bad count"))? as usize,
        _ => return Err(malformed("missing count")),
    };
    let ids = result
        .get("idlist")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing idlist"))?
        .iter()
        .map(|id| match id {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(malformed("non-scalar id")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchPage { total, ids })
}

impl SearchClient for EutilsClient {
    fn search_page(&self, query: &str, start: usize, page_size: usize) -> Result<SearchPage> {
        let raw = self.get(
            "esearch.fcgi",
            &[
                ("db", self.database.clone()),
                ("term", query.to_string()),
                ("retstart", start.to_string()),
                ("retmax", page_size.to_string()),
                ("retmode", "json".into()),
            ],
        )?;
        parse_esearch_json(&raw)
    }

    fn fetch_xml(&self, ids: &[String]) -> Result<String> {
        self.get(
            "efetch.fcgi",
            &[
                ("db", self.database.clone()),
                ("id", ids.join(",")),
                ("retmode", "xml".into()),
            ],
        )
    }
}

/// Offline stand-in: every `*.xml` file in a directory is one search hit,
/// identified by its file stem.
pub struct DirectorySearchClient {
    dir: PathBuf,
}

impl DirectorySearchClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn all_ids(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = xml_files(&self.dir)?
            .iter()
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// Sorted `*.xml` files directly inside `dir`.
pub fn xml_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    files.sort();
    Ok(files)
}

impl SearchClient for DirectorySearchClient {
    fn search_page(&self, _query: &str, start: usize, page_size: usize) -> Result<SearchPage> {
        let ids = self.all_ids()?;
        let total = ids.len();
        Ok(SearchPage {
            total,
            ids: ids.into_iter().skip(start).take(page_size).collect(),
        })
    }

    fn fetch_xml(&self, ids: &[String]) -> Result<String> {
        let mut out = String::from("<pmc-articleset>");
        for id in ids {
            let text = std::fs::read_to_string(self.dir.join(format!("{id}.xml")))?;
            let body = match text.find("<article") {
                Some(i) if text.starts_with("<?xml") => &text[i..],
                _ => text.as_str(),
            };
            out.push_str(body);
        }
        out.push_str("</pmc-articleset>");
        Ok(out)
    }
}
