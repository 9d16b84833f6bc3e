use crate::error::{Error, Result};

pub const DEFAULT_QUERY: &str = "(ipynb OR jupyter OR ipython) AND github";

/// Returns the literature search query, or the override when one is given.
pub fn build_search_query(override_query: Option<&str>) -> Result<String> {
    match override_query {
        None => Ok(DEFAULT_QUERY.to_string()),
        Some(q) if q.trim().is_empty() => Err(Error::Config("search query must not be empty".into())),
        Some(q) => Ok(q.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_query() {
        assert_eq!(
            build_search_query(None).unwrap(),
            "(ipynb OR jupyter OR ipython) AND github"
        );
    }

    #[test]
    fn override_passes_through() {
        assert_eq!(
            build_search_query(Some("jupyter AND gitlab")).unwrap(),
            "jupyter AND gitlab"
        );
    }

    #[test]
    fn empty_override_rejected() {
        assert!(matches!(build_search_query(Some("  ")), Err(Error::Config(_))));
    }
}
