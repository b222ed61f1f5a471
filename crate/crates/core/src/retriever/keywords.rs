use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::ModelBackend;
use crate::kg::extract::{parse_records, split_keywords};

/// Fixed English stopword list (50 words) for the fallback keyword rule.
pub const STOPWORDS: [&str; 50] = [
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by", "can",
    "did", "do", "does", "for", "from", "had", "has", "have", "how", "i", "if", "in", "into",
    "is", "it", "its", "of", "on", "or", "so", "than", "that", "the", "their", "there", "these",
    "this", "to", "was", "were", "what", "when", "where", "which", "who", "with",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keywords {
    pub low_level: Vec<String>,
    pub high_level: Vec<String>,
}

fn push_distinct(list: &mut Vec<String>, kw: String) {
    if !kw.is_empty() && !list.contains(&kw) {
        list.push(kw);
    }
}

/// Lowercased distinct non-stopword tokens, in query order. Both keyword
/// levels receive the same list.
pub fn fallback_keywords(query: &str) -> Keywords {
    let mut low = Vec::new();
    for raw in query.split_whitespace() {
        let tok = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if !is_stopword(&tok) {
            push_distinct(&mut low, tok);
        }
    }
    Keywords {
        high_level: low.clone(),
        low_level: low,
    }
}

pub fn keyword_prompt(query: &str) -> String {
    format!(
        "-Goal-
Extract keywords from the query below. High-level keywords name overarching concepts or themes. Low-level keywords name specific entities, details or concrete terms.

-Format-
Output exactly two records, fields separated by <|>, records separated by ##, then the completion delimiter <|COMPLETE|>:
(\"high_level_keywords\"<|><keyword><|><keyword>...)##(\"low_level_keywords\"<|><keyword><|><keyword>...)##

-Query-
{query}
-Output-
"
    )
}

/// Parse `high_level_keywords` / `low_level_keywords` records. `None` when
/// the reply holds neither.
pub fn parse_keyword_reply(raw: &str) -> Option<Keywords> {
    let (records, _) = parse_records(raw);
    let mut out = Keywords::default();
    let mut found = false;
    for rec in records {
        let target = match rec.kind().to_ascii_lowercase().as_str() {
            "high_level_keywords" => &mut out.high_level,
            "low_level_keywords" => &mut out.low_level,
            _ => continue,
        };
        found = true;
        for field in &rec.fields[1..] {
            for kw in split_keywords(field) {
                push_distinct(target, kw.to_lowercase());
            }
        }
    }
    (found && !(out.low_level.is_empty() && out.high_level.is_empty())).then_some(out)
}

/// Keywords for a query: asked of the extractor when there is one, the
/// stopword rule otherwise or when the extractor fails.
pub fn extract_keywords(
    query: &str,
    extractor: Option<&dyn ModelBackend>,
) -> Result<(Keywords, Vec<String>)> {
    if query.trim().is_empty() {
        return Err(Error::invalid("query is empty"));
    }
    let Some(extractor) = extractor else {
        return Ok((fallback_keywords(query), Vec::new()));
    };
    match extractor.complete(&keyword_prompt(query)) {
        Ok(reply) => match parse_keyword_reply(&reply) {
            Some(kw) => Ok((kw, Vec::new())),
            None => Ok((
                fallback_keywords(query),
                vec!["keyword reply had no keyword records; used stopword fallback".into()],
            )),
        },
        Err(e) => Ok((
            fallback_keywords(query),
            vec![format!("keyword extraction failed ({e}); used stopword fallback")],
        )),
    }
}
