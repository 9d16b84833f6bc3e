use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::links::{extract_github_links, Disposition, LinkExtraction, NormalizedRepoUrl, ScanOptions};
use super::xml::{parse_document, Element};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JournalRef {
    pub issn: Option<String>,
    pub title: Option<String>,
    pub nlm_abbrev: Option<String>,
    pub iso_abbrev: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuthorRef {
    pub given: Option<String>,
    pub family: Option<String>,
    pub orcid: Option<String>,
    pub email: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArticleDates {
    pub received: Option<NaiveDate>,
    pub accepted: Option<NaiveDate>,
    pub published: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub pmcid: String,
    pub pmid: Option<String>,
    pub doi: Option<String>,
    pub title: String,
    pub journal: JournalRef,
    pub dates: ArticleDates,
    pub license: Option<String>,
    pub copyright: Option<String>,
    pub keywords: Vec<String>,
    pub subject_tags: Vec<String>,
    /// Leaf MeSH terms as they appear in the record; see [`MeshEnricher`].
    pub mesh_top_terms: Vec<String>,
    pub authors: Vec<AuthorRef>,
    pub repo_links: Vec<NormalizedRepoUrl>,
}

/// Maps leaf MeSH terms to their top-level ancestors.
pub trait MeshEnricher {
    fn top_level_terms(&self, leaf_terms: &[String]) -> Vec<String>;
}

/// Leaves terms untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoMeshEnrichment;

impl MeshEnricher for NoMeshEnrichment {
    fn top_level_terms(&self, leaf_terms: &[String]) -> Vec<String> {
        leaf_terms.to_vec()
    }
}

/// A parsed article together with every link candidate found in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedArticle {
    pub record: ArticleRecord,
    pub links: Vec<LinkExtraction>,
}

fn non_empty(s: String) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn normalize_pmcid(raw: &str) -> Option<String> {
    let t = raw.trim();
    let digits = t.strip_prefix("PMC").or_else(|| t.strip_prefix("pmc")).unwrap_or(t);
    (!digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())).then(|| format!("PMC{digits}"))
}

fn parse_date(el: &Element) -> Option<NaiveDate> {
    let num = |name: &str| el.child(name).and_then(|e| e.text().trim().parse::<u32>().ok());
    let year = el.child("year").and_then(|e| e.text().trim().parse::<i32>().ok())?;
    let month = num("month").unwrap_or(1);
    let day = num("day").unwrap_or(1);
    NaiveDate::from_ymd_opt(year, month, day)
}

fn published_date(meta: &Element) -> Option<NaiveDate> {
    let dates: Vec<&Element> = meta.children_named("pub-date").collect();
    let kind = |e: &Element| {
        e.attr("pub-type")
            .or_else(|| e.attr("date-type"))
            .unwrap_or("")
            .to_string()
    };
    for preferred in ["epub", "pub", "ppub", "collection", "pmc-release"] {
        if let Some(d) = dates.iter().find(|e| kind(e) == preferred).and_then(|e| parse_date(e)) {
            return Some(d);
        }
    }
    dates.iter().find_map(|e| parse_date(e))
}

/// Locates the `<article>` element of a document, which may be wrapped in a
/// `<pmc-articleset>`.
pub fn article_elements(root: &Element) -> Vec<&Element> {
    if root.name == "article" {
        return vec![root];
    }
    root.children_named("article").collect()
}

pub fn parse_article(xml: &str) -> Result<ParsedArticle> {
    parse_article_with(xml, ScanOptions::default(), &NoMeshEnrichment)
}

pub fn parse_article_with(xml: &str, scan: ScanOptions, mesh: &dyn MeshEnricher) -> Result<ParsedArticle> {
    let root = parse_document(xml)?;
    let article = article_elements(&root)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Rejected("no <article> element".into()))?;
    article_from_element(article, scan, mesh)
}

/// Parses every article in a (possibly multi-article) document. Each entry
/// fails or succeeds independently.
pub fn parse_article_set(xml: &str, scan: ScanOptions, mesh: &dyn MeshEnricher) -> Result<Vec<Result<ParsedArticle>>> {
    let root = parse_document(xml)?;
    Ok(article_elements(&root)
        .into_iter()
        .map(|a| article_from_element(a, scan, mesh))
        .collect())
}

pub fn article_from_element(article: &Element, scan: ScanOptions, mesh: &dyn MeshEnricher) -> Result<ParsedArticle> {
    let empty = Element::default();
    let front = article.child("front").unwrap_or(&empty);
    let jmeta = front.child("journal-meta").unwrap_or(&empty);
    let meta = front.child("article-meta").unwrap_or(&empty);

    let article_id = |types: &[&str]| {
        meta.children_named("article-id")
            .find(|e| e.attr("pub-id-type").is_some_and(|t| types.contains(&t)))
            .and_then(|e| non_empty(e.text()))
    };
    let pmcid = article_id(&["pmc", "pmcid"])
        .and_then(|s| normalize_pmcid(&s))
        .ok_or_else(|| Error::Rejected("missing pmcid".into()))?;

    let journal_id = |kind: &str| {
        jmeta
            .children_named("journal-id")
            .find(|e| e.attr("journal-id-type") == Some(kind))
            .and_then(|e| non_empty(e.text()))
    };
    let journal = JournalRef {
        issn: jmeta
            .children_named("issn")
            .find(|e| matches!(e.attr("pub-type"), Some("epub")))
            .or_else(|| jmeta.child("issn"))
            .and_then(|e| non_empty(e.text())),
        title: jmeta.find("journal-title").and_then(|e| non_empty(e.text())),
        nlm_abbrev: journal_id("nlm-ta"),
        iso_abbrev: journal_id("iso-abbrev"),
    };

    let mut history = ArticleDates::default();
    if let Some(h) = meta.child("history") {
        for d in h.children_named("date") {
            match d.attr("date-type") {
                Some("received") => history.received = parse_date(d),
                Some("accepted") => history.accepted = parse_date(d),
                _ => {}
            }
        }
    }
    history.published = published_date(meta);
    if let (Some(r), Some(p)) = (history.received, history.published) {
        if p < r {
            return Err(Error::Rejected(format!("{pmcid}: published {p} precedes received {r}")));
        }
    }

    let permissions = meta.child("permissions");
    let license = permissions
        .and_then(|p| p.child("license"))
        .and_then(|l| non_empty(l.text()).or_else(|| l.attr("xlink:href").map(str::to_string).and_then(non_empty)));
    let copyright = permissions
        .and_then(|p| p.child("copyright-statement"))
        .and_then(|e| non_empty(e.text()));

    let mut keywords = Vec::new();
    let mut mesh_leaves = Vec::new();
    for group in meta.children_named("kwd-group") {
        let is_mesh = group
            .attr("kwd-group-type")
            .is_some_and(|t| t.eq_ignore_ascii_case("mesh"));
        for kwd in group.children_named("kwd") {
            if let Some(k) = non_empty(kwd.text()) {
                if is_mesh {
                    mesh_leaves.push(k);
                } else {
                    keywords.push(k);
                }
            }
        }
    }

    let mut subject_tags = Vec::new();
    if let Some(cats) = meta.child("article-categories") {
        let mut subjects = Vec::new();
        cats.find_all("subject", &mut subjects);
        subject_tags.extend(subjects.into_iter().filter_map(|s| non_empty(s.text())));
    }

    let mut authors = Vec::new();
    for group in meta.children_named("contrib-group") {
        for c in group.children_named("contrib") {
            if c.attr("contrib-type").is_some_and(|t| t != "author") {
                continue;
            }
            let name = c.child("name");
            authors.push(AuthorRef {
                given: name
                    .and_then(|n| n.child("given-names"))
                    .and_then(|e| non_empty(e.text())),
                family: name.and_then(|n| n.child("surname")).and_then(|e| non_empty(e.text())),
                orcid: c
                    .children_named("contrib-id")
                    .find(|e| e.attr("contrib-id-type") == Some("orcid"))
                    .and_then(|e| non_empty(e.text())),
                email: c.find("email").and_then(|e| non_empty(e.text())),
            });
        }
    }

    let links = extract_github_links(article, scan);
    let repo_links = links
        .iter()
        .filter_map(|l| match &l.disposition {
            Disposition::Normalized(u) => Some(u.clone()),
            _ => None,
        })
        .collect();

    let record = ArticleRecord {
        pmcid,
        pmid: article_id(&["pmid"]),
        doi: article_id(&["doi"]),
        title: meta.find("article-title").map(|e| e.text()).unwrap_or_default(),
        journal,
        dates: history,
        license,
        copyright,
        keywords,
        subject_tags,
        mesh_top_terms: mesh.top_level_terms(&mesh_leaves),
        authors,
        repo_links,
    };
    Ok(ParsedArticle { record, links })
}

fn esc(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

fn write_date(out: &mut String, tag: &str, attr: &str, kind: &str, d: NaiveDate) {
    use chrono::Datelike;
    out.push_str(&format!(
        "<{tag} {attr}=\"{kind}\"><day>{}</day><month>{}</month><year>{}</year></{tag}>",
        d.day(),
        d.month(),
        d.year()
    ));
}

impl ArticleRecord {
    /// Renders the record as a JATS document that [`parse_article`] maps
    /// back onto the same record.
    pub fn to_jats(&self) -> String {
        let mut x = String::from("<article article-type=\"research-article\"><front><journal-meta>");
        if let Some(v) = &self.journal.nlm_abbrev {
            x.push_str(&format!(
                "<journal-id journal-id-type=\"nlm-ta\">{}</journal-id>",
                esc(v)
            ));
        }
        if let Some(v) = &self.journal.iso_abbrev {
            x.push_str(&format!(
                "<journal-id journal-id-type=\"iso-abbrev\">{}</journal-id>",
                esc(v)
            ));
        }
        if let Some(v) = &self.journal.title {
            x.push_str(&format!(
                "<journal-title-group><journal-title>{}</journal-title></journal-title-group>",
                esc(v)
            ));
        }
        if let Some(v) = &self.journal.issn {
            x.push_str(&format!("<issn pub-type=\"epub\">{}</issn>", esc(v)));
        }
        x.push_str("</journal-meta><article-meta>");
        x.push_str(&format!(
            "<article-id pub-id-type=\"pmc\">{}</article-id>",
            esc(&self.pmcid)
        ));
        if let Some(v) = &self.pmid {
            x.push_str(&format!("<article-id pub-id-type=\"pmid\">{}</article-id>", esc(v)));
        }
        if let Some(v) = &self.doi {
            x.push_str(&format!("<article-id pub-id-type=\"doi\">{}</article-id>", esc(v)));
        }
        if !self.subject_tags.is_empty() {
            x.push_str("<article-categories><subj-group subj-group-type=\"heading\">");
            for s in &self.subject_tags {
                x.push_str(&format!("<subject>{}</subject>", esc(s)));
            }
            x.push_str("</subj-group></article-categories>");
        }
        x.push_str(&format!(
            "<title-group><article-title>{}</article-title></title-group>",
            esc(&self.title)
        ));
        if !self.authors.is_empty() {
            x.push_str("<contrib-group>");
            for a in &self.authors {
                x.push_str("<contrib contrib-type=\"author\">");
                if let Some(o) = &a.orcid {
                    x.push_str(&format!(
                        "<contrib-id contrib-id-type=\"orcid\">{}</contrib-id>",
                        esc(o)
                    ));
                }
                x.push_str("<name>");
                if let Some(f) = &a.family {
                    x.push_str(&format!("<surname>{}</surname>", esc(f)));
                }
                if let Some(g) = &a.given {
                    x.push_str(&format!("<given-names>{}</given-names>", esc(g)));
                }
                x.push_str("</name>");
                if let Some(e) = &a.email {
                    x.push_str(&format!("<email>{}</email>", esc(e)));
                }
                x.push_str("</contrib>");
            }
            x.push_str("</contrib-group>");
        }
        if let Some(p) = self.dates.published {
            write_date(&mut x, "pub-date", "pub-type", "epub", p);
        }
        if self.dates.received.is_some() || self.dates.accepted.is_some() {
            x.push_str("<history>");
            if let Some(d) = self.dates.received {
                write_date(&mut x, "date", "date-type", "received", d);
            }
            if let Some(d) = self.dates.accepted {
                write_date(&mut x, "date", "date-type", "accepted", d);
            }
            x.push_str("</history>");
        }
        if self.license.is_some() || self.copyright.is_some() {
            x.push_str("<permissions>");
            if let Some(c) = &self.copyright {
                x.push_str(&format!("<copyright-statement>{}</copyright-statement>", esc(c)));
            }
            if let Some(l) = &self.license {
                x.push_str(&format!("<license><license-p>{}</license-p></license>", esc(l)));
            }
            x.push_str("</permissions>");
        }
        if !self.keywords.is_empty() {
            x.push_str("<kwd-group>");
            for k in &self.keywords {
                x.push_str(&format!("<kwd>{}</kwd>", esc(k)));
            }
            x.push_str("</kwd-group>");
        }
        if !self.mesh_top_terms.is_empty() {
            x.push_str("<kwd-group kwd-group-type=\"MESH\">");
            for k in &self.mesh_top_terms {
                x.push_str(&format!("<kwd>{}</kwd>", esc(k)));
            }
            x.push_str("</kwd-group>");
        }
        x.push_str("</article-meta></front><body><sec><title>Code availability</title>");
        for link in &self.repo_links {
            let c = link.canonical();
            x.push_str(&format!(
                "<p><ext-link ext-link-type=\"uri\" xlink:href=\"{c}\">{c}</ext-link></p>"
            ));
        }
        x.push_str("</sec></body></article>");
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"<?xml version="1.0"?>
<pmc-articleset><article article-type="research-article">
<front>
  <journal-meta>
    <journal-id journal-id-type="nlm-ta">PLoS Comput Biol</journal-id>
    <journal-id journal-id-type="iso-abbrev">PLoS Comput. Biol.</journal-id>
    <journal-title-group><journal-title>PLoS Computational Biology</journal-title></journal-title-group>
    <issn pub-type="ppub">1553-734X</issn>
    <issn pub-type="epub">1553-7358</issn>
  </journal-meta>
  <article-meta>
    <article-id pub-id-type="pmid">33001234</article-id>
    <article-id pub-id-type="pmc">7654321</article-id>
    <article-id pub-id-type="doi">10.1371/journal.pcbi.1000001</article-id>
    <article-categories><subj-group subj-group-type="heading"><subject>Tools and Resources</subject></subj-group></article-categories>
    <title-group><article-title>A notebook <italic>study</italic></article-title></title-group>
    <contrib-group>
      <contrib contrib-type="author">
        <contrib-id contrib-id-type="orcid">https://orcid.org/0000-0002-1825-0097</contrib-id>
        <name><surname>Doe</surname><given-names>Jane</given-names></name>
        <email>jane@example.org</email>
      </contrib>
      <contrib contrib-type="author"><name><surname>Roe</surname><given-names>Rick</given-names></name></contrib>
      <contrib contrib-type="editor"><name><surname>Ed</surname></name></contrib>
    </contrib-group>
    <pub-date pub-type="epub"><day>05</day><month>03</month><year>2020</year></pub-date>
    <history>
      <date date-type="received"><day>1</day><month>10</month><year>2019</year></date>
      <date date-type="accepted"><day>2</day><month>2</month><year>2020</year></date>
    </history>
    <permissions>
      <copyright-statement>&#xa9; 2020 Doe et al</copyright-statement>
      <license xlink:href="http://creativecommons.org/licenses/by/4.0/"><license-p>CC BY 4.0</license-p></license>
    </permissions>
    <kwd-group><kwd>jupyter</kwd><kwd>reproducibility</kwd><kwd>python</kwd></kwd-group>
    <kwd-group kwd-group-type="MESH"><kwd>Computational Biology</kwd></kwd-group>
    <abstract><p>Code: https://github.com/jdoe/nbstudy.</p></abstract>
  </article-meta>
</front>
<body><p>Notebooks at <ext-link xlink:href="https://nbviewer.org/github/jdoe/nbstudy/blob/main/a.ipynb">nbviewer</ext-link>
and https://github.com/jdoe.</p></body>
</article></pmc-articleset>"#;

    #[test]
    fn full_front_matter() {
        let parsed = parse_article(FULL).unwrap();
        let r = &parsed.record;
        assert_eq!(r.pmcid, "PMC7654321");
        assert_eq!(r.pmid.as_deref(), Some("33001234"));
        assert_eq!(r.title, "A notebook study");
        assert_eq!(r.journal.issn.as_deref(), Some("1553-7358"));
        assert_eq!(r.journal.nlm_abbrev.as_deref(), Some("PLoS Comput Biol"));
        assert_eq!(r.authors.len(), 2);
        assert_eq!(r.authors.iter().filter(|a| a.orcid.is_some()).count(), 1);
        assert_eq!(r.keywords.len(), 3);
        assert_eq!(r.mesh_top_terms, vec!["Computational Biology"]);
        assert_eq!(r.subject_tags, vec!["Tools and Resources"]);
        assert_eq!(r.dates.published, NaiveDate::from_ymd_opt(2020, 3, 5));
        assert_eq!(r.dates.received, NaiveDate::from_ymd_opt(2019, 10, 1));
        assert_eq!(r.license.as_deref(), Some("CC BY 4.0"));
        assert_eq!(r.repo_links, vec![NormalizedRepoUrl::new("jdoe", "nbstudy")]);
        assert_eq!(parsed.links.len(), 2);
        assert_eq!(parsed.links[1].disposition, Disposition::ExcludedUserOnly);
    }

    #[test]
    fn missing_license_is_absent() {
        let xml = FULL.replace(
            "<license xlink:href=\"http://creativecommons.org/licenses/by/4.0/\"><license-p>CC BY 4.0</license-p></license>",
            "",
        );
        let r = parse_article(&xml).unwrap().record;
        assert_eq!(r.license, None);
        assert!(r.copyright.is_some());
    }

    #[test]
    fn missing_pmcid_is_rejected() {
        let xml = FULL.replace("<article-id pub-id-type=\"pmc\">7654321</article-id>", "");
        assert!(matches!(parse_article(&xml), Err(Error::Rejected(_))));
    }

    #[test]
    fn unclosed_tag_is_a_parse_error() {
        let err = parse_article("<article><front><article-meta></front></article>").unwrap_err();
        assert!(matches!(err, Error::Xml { .. }));
    }

    #[test]
    fn roundtrip_through_writer() {
        let r = parse_article(FULL).unwrap().record;
        let again = parse_article(&r.to_jats()).unwrap().record;
        assert_eq!(r, again);
    }
}
