//! Article mining: literature search, JATS parsing, repository link extraction.

pub mod article;
pub mod links;
pub mod query;
pub mod search;
pub mod xml;

pub use article::{parse_article, ArticleRecord, AuthorRef, JournalRef, MeshEnricher, NoMeshEnrichment, ParsedArticle};
pub use links::{extract_github_links, normalize_github_link, Disposition, LinkExtraction, NormalizedRepoUrl};
pub use query::{build_search_query, DEFAULT_QUERY};
pub use search::{fetch_article_ids, SearchClient, SearchOptions};
