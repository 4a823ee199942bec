use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::{CorpusRecord, DocstoreError, Document};
use crate::text::{cosine, words, DocFreq, SparseVec};

/// Search APIs return at most this many results per query.
pub const MAX_RESULTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteFilter {
    Restrict(String),
    Exclude(String),
}

/// The query string sent to an external engine: `site:` restricts,
/// `-site:` excludes.
pub fn query_with_site_filter(query: &str, filter: Option<&SiteFilter>) -> String {
    match filter {
        None => query.to_owned(),
        Some(SiteFilter::Restrict(d)) => format!("{query} site:{d}"),
        Some(SiteFilter::Exclude(d)) => format!("{query} -site:{d}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub doc: Document,
    /// Snippet the engine returned alongside the result, if any.
    pub snippet: Option<String>,
    pub score: f64,
}

pub trait SearchProvider: Send + Sync {
    /// Up to `k` results in rank order.
    fn search(&self, query: &str, k: usize, filter: Option<&SiteFilter>) -> Result<Vec<SearchHit>, DocstoreError>;
}

fn host(url: &str) -> &str {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let host = rest.split(['/', '?', '#']).next().unwrap_or("");
    host.rsplit_once('@').map_or(host, |(_, h)| h).split(':').next().unwrap_or("")
}

/// True when the URL's host is `domain` or one of its subdomains.
pub fn on_domain(url: &str, domain: &str) -> bool {
    let h = host(url).to_ascii_lowercase();
    let d = domain.to_ascii_lowercase();
    h == d || h.ends_with(&format!(".{d}"))
}

/// TF-IDF cosine retrieval over an in-memory corpus.
pub struct LocalSearchProvider {
    docs: Vec<Document>,
    snippets: Vec<Option<String>>,
    df: DocFreq,
    vectors: Vec<SparseVec>,
}

impl LocalSearchProvider {
    pub fn new(docs: Vec<Document>) -> Self {
        let n = docs.len();
        Self::with_snippets(docs, vec![None; n])
    }

    pub fn from_records(records: &[CorpusRecord]) -> Self {
        let docs = records.iter().map(Document::from).collect();
        let snippets = records
            .iter()
            .map(|r| r.snippet_span.map(|(s, e)| r.body[s..e].to_owned()).or_else(|| r.snippet.clone()))
            .collect();
        Self::with_snippets(docs, snippets)
    }

    fn with_snippets(docs: Vec<Document>, snippets: Vec<Option<String>>) -> Self {
        let tokenized: Vec<Vec<String>> = docs.iter().map(|d| words(d.body())).collect();
        let df = DocFreq::from_units(&tokenized);
        let vectors = tokenized.iter().map(|w| df.vector(w, DocFreq::smooth_idf)).collect();
        Self {
            docs,
            snippets,
            df,
            vectors,
        }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.id() == id)
    }
}

impl SearchProvider for LocalSearchProvider {
    fn search(&self, query: &str, k: usize, filter: Option<&SiteFilter>) -> Result<Vec<SearchHit>, DocstoreError> {
        if k == 0 {
            return Err(DocstoreError::InvalidK);
        }
        if self.docs.is_empty() {
            return Err(DocstoreError::EmptyCorpus);
        }
        let q = self.df.vector(&words(query), DocFreq::smooth_idf);
        let mut scored: Vec<(usize, f64)> = self
            .docs
            .iter()
            .enumerate()
            .filter(|(_, d)| match filter {
                None => true,
                Some(SiteFilter::Restrict(dom)) => on_domain(d.url(), dom),
                Some(SiteFilter::Exclude(dom)) => !on_domain(d.url(), dom),
            })
            .map(|(i, _)| (i, cosine(&q, &self.vectors[i])))
            .collect();
        // stable: equal scores keep corpus order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k.min(MAX_RESULTS))
            .map(|(i, score)| SearchHit {
                doc: self.docs[i].clone(),
                snippet: self.snippets[i].clone(),
                score,
            })
            .collect())
    }
}

/// One raw result from an external engine.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HttpHit {
    pub title: String,
    #[serde(alias = "link")]
    pub url: String,
    #[serde(default)]
    pub snippet: Option<String>,
    /// Page text, when the engine or a scraping proxy supplies it.
    #[serde(default)]
    pub body: Option<String>,
}

/// Sends a fully formed query string and returns raw hits.
pub trait SearchTransport: Send + Sync {
    fn fetch(&self, query: &str, k: usize) -> Result<Vec<HttpHit>, DocstoreError>;
}

#[derive(Deserialize)]
struct HttpResponse {
    #[serde(default)]
    items: Vec<HttpHit>,
}

/// GETs `{base_url}?q=...&num=k&key=...` and reads `{"items": [...]}`.
pub struct UreqTransport {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base_url: base_url.into(),
            api_key,
            agent,
        }
    }

    /// Reads `SQA_SEARCH_URL` and, optionally, `SQA_SEARCH_KEY`.
    pub fn from_env() -> Result<Self, DocstoreError> {
        let url = std::env::var("SQA_SEARCH_URL")
            .map_err(|_| DocstoreError::ProviderUnavailable("SQA_SEARCH_URL is not set".into()))?;
        Ok(Self::new(url, std::env::var("SQA_SEARCH_KEY").ok()))
    }
}

impl SearchTransport for UreqTransport {
    fn fetch(&self, query: &str, k: usize) -> Result<Vec<HttpHit>, DocstoreError> {
        let mut req = self
            .agent
            .get(&self.base_url)
            .query("q", query)
            .query("num", k.to_string());
        if let Some(key) = &self.api_key {
            req = req.query("key", key);
        }
        let mut resp = req
            .call()
            .map_err(|e| DocstoreError::ProviderUnavailable(e.to_string()))?;
        let body: HttpResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| DocstoreError::ProviderUnavailable(e.to_string()))?;
        Ok(body.items)
    }
}

/// External engine behind a transport. Requests are serialized and retried
/// a bounded number of times.
pub struct HttpSearchProvider {
    transport: Box<dyn SearchTransport>,
    lock: Mutex<()>,
    retries: usize,
}

impl HttpSearchProvider {
    pub fn new(transport: Box<dyn SearchTransport>) -> Self {
        Self {
            transport,
            lock: Mutex::new(()),
            retries: 2,
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }
}

impl SearchProvider for HttpSearchProvider {
    fn search(&self, query: &str, k: usize, filter: Option<&SiteFilter>) -> Result<Vec<SearchHit>, DocstoreError> {
        if k == 0 {
            return Err(DocstoreError::InvalidK);
        }
        let k = k.min(MAX_RESULTS);
        let full = query_with_site_filter(query, filter);
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut last_err = None;
        for _ in 0..=self.retries {
            match self.transport.fetch(&full, k) {
                Ok(hits) => {
                    return Ok(hits
                        .into_iter()
                        .take(k)
                        .enumerate()
                        .map(|(rank, h)| {
                            let body = h.body.clone().or_else(|| h.snippet.clone()).unwrap_or_default();
                            SearchHit {
                                doc: Document::new(h.url.clone(), h.title, h.url, body),
                                snippet: h.snippet,
                                score: -(rank as f64),
                            }
                        })
                        .collect())
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| DocstoreError::ProviderUnavailable("no attempts made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn corpus() -> LocalSearchProvider {
        LocalSearchProvider::new(vec![
            Document::new("1", "Cats", "https://en.wikipedia.org/wiki/Cat", "cats purr and sleep a lot"),
            Document::new("2", "Dogs", "https://www.reddit.com/r/dogs", "dogs bark at the mail carrier"),
            Document::new("3", "Fish", "http://fish.example.com/x", "fish swim in water all day"),
            Document::new("4", "Birds", "https://en.wikipedia.org/wiki/Bird", "birds fly and sing songs"),
        ])
    }

    #[test]
    fn self_retrieval_ranks_first() {
        let p = corpus();
        let hits = p.search("dogs bark at the mail carrier", 3, None).unwrap();
        assert_eq!(hits[0].doc.id(), "2");
        assert!(hits.len() == 3);
    }

    #[test]
    fn k_larger_than_corpus() {
        assert_eq!(corpus().search("x", 10, None).unwrap().len(), 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(corpus().search("x", 0, None), Err(DocstoreError::InvalidK)));
        let empty = LocalSearchProvider::new(vec![]);
        assert!(matches!(empty.search("x", 1, None), Err(DocstoreError::EmptyCorpus)));
    }

    #[test]
    fn local_site_filters() {
        let p = corpus();
        let only = p.search("birds", 10, Some(&SiteFilter::Restrict("wikipedia.org".into()))).unwrap();
        assert_eq!(only.iter().map(|h| h.doc.id()).collect::<Vec<_>>(), ["4", "1"]);
        let without = p.search("dogs", 10, Some(&SiteFilter::Exclude("reddit.com".into()))).unwrap();
        assert!(without.iter().all(|h| h.doc.id() != "2"));
    }

    #[test]
    fn query_strings() {
        assert_eq!(query_with_site_filter("x", Some(&SiteFilter::Exclude("reddit.com".into()))), "x -site:reddit.com");
        assert_eq!(
            query_with_site_filter("x", Some(&SiteFilter::Restrict("wikipedia.org".into()))),
            "x site:wikipedia.org"
        );
        assert_eq!(query_with_site_filter("x", None), "x");
    }

    struct Recording {
        queries: Arc<Mutex<Vec<String>>>,
        fail_first: Mutex<usize>,
    }

    impl SearchTransport for Recording {
        fn fetch(&self, query: &str, _k: usize) -> Result<Vec<HttpHit>, DocstoreError> {
            self.queries.lock().unwrap().push(query.to_owned());
            let mut f = self.fail_first.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return Err(DocstoreError::ProviderUnavailable("boom".into()));
            }
            Ok((0..12)
                .map(|i| HttpHit {
                    title: format!("t{i}"),
                    url: format!("http://site/{i}"),
                    snippet: Some("snip".into()),
                    body: None,
                })
                .collect())
        }
    }

    #[test]
    fn external_provider_sends_filtered_query_and_retries() {
        let queries = Arc::new(Mutex::new(Vec::new()));
        let provider = HttpSearchProvider::new(Box::new(Recording {
            queries: queries.clone(),
            fail_first: Mutex::new(1),
        }));
        let hits = provider
            .search("x", 20, Some(&SiteFilter::Exclude("reddit.com".into())))
            .unwrap();
        assert_eq!(hits.len(), MAX_RESULTS);
        assert_eq!(hits[0].doc.title(), "t0");
        assert_eq!(*queries.lock().unwrap(), ["x -site:reddit.com", "x -site:reddit.com"]);
    }

    #[test]
    fn external_provider_gives_up() {
        let provider = HttpSearchProvider::new(Box::new(Recording {
            queries: Arc::default(),
            fail_first: Mutex::new(10),
        }))
        .with_retries(1);
        assert!(matches!(provider.search("x", 1, None), Err(DocstoreError::ProviderUnavailable(_))));
    }

    #[test]
    fn hosts() {
        assert_eq!(host("https://user@en.wikipedia.org:443/wiki/X?q=1"), "en.wikipedia.org");
        assert!(on_domain("https://en.wikipedia.org/x", "wikipedia.org"));
        assert!(!on_domain("https://notwikipedia.org/x", "wikipedia.org"));
    }
}
