//! Book ingestion: text normalization, mention location and window extraction.

use std::collections::HashSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

pub const DEFAULT_WINDOW_WORDS: usize = 200;

static START_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?mi)^[ \t]*\*{3}[ \t]*START OF[ \t]+(?:THE|THIS)[ \t]+PROJECT GUTENBERG.*$").unwrap()
});
static END_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?mi)^[ \t]*(?:\*{3}[ \t]*END OF[ \t]+(?:THE|THIS)[ \t]+PROJECT GUTENBERG|END OF (?:THE |THIS )?PROJECT GUTENBERG).*$",
    )
    .unwrap()
});

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("book `{book_id}` is empty after normalization")]
    EmptyBook { book_id: String },
    #[error("invalid character identity `{character_id}`: {reason}")]
    InvalidIdentity { character_id: String, reason: String },
}

/// A whitespace-tokenized book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookText {
    pub book_id: String,
    pub title: String,
    pub words: Vec<String>,
    /// Character count of the raw input.
    pub raw_length: usize,
}

impl BookText {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn slice_text(&self, start: usize, end: usize) -> String {
        self.words[start..end].join(" ")
    }
}

/// Result of [`normalize_text`]: the book plus whether boilerplate markers
/// were found.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub book: BookText,
    pub boilerplate_stripped: bool,
}

/// Tokenizes raw text on whitespace, optionally removing the Gutenberg
/// header and footer around the START/END marker lines.
pub fn normalize_text(
    book_id: &str,
    title: &str,
    raw: &str,
    strip_boilerplate: bool,
) -> Result<Normalized, CorpusError> {
    let mut body = raw;
    let mut stripped = false;
    if strip_boilerplate {
        match strip_gutenberg(raw) {
            Some(inner) => {
                body = inner;
                stripped = true;
            }
            None => tracing::warn!(book_id, "no Gutenberg START/END markers found, keeping full text"),
        }
    }
    let words: Vec<String> = body.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyBook { book_id: book_id.to_string() });
    }
    Ok(Normalized {
        book: BookText {
            book_id: book_id.to_string(),
            title: title.to_string(),
            words,
            raw_length: raw.chars().count(),
        },
        boilerplate_stripped: stripped,
    })
}

/// Returns the text between the START marker line and the END marker line.
/// Either marker may be missing; `None` when neither is present.
fn strip_gutenberg(raw: &str) -> Option<&str> {
    let start = START_MARKER.find(raw).map(|m| m.end());
    let search_from = start.unwrap_or(0);
    let end = END_MARKER.find(&raw[search_from..]).map(|m| search_from + m.start());
    if start.is_none() && end.is_none() {
        return None;
    }
    Some(&raw[start.unwrap_or(0)..end.unwrap_or(raw.len())])
}

/// A character to look for in a book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterIdentity {
    pub character_id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl CharacterIdentity {
    /// Builds an identity, trimming names and dropping empty, duplicate or
    /// name-equal aliases.
    pub fn new(
        character_id: impl Into<String>,
        name: impl Into<String>,
        aliases: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, CorpusError> {
        let character_id = character_id.into();
        let name = name.into().trim().to_string();
        if name.is_empty() {
            return Err(CorpusError::InvalidIdentity {
                character_id,
                reason: "name is empty".into(),
            });
        }
        let mut seen = HashSet::new();
        seen.insert(name.clone());
        let aliases = aliases
            .into_iter()
            .map(|a| a.into().trim().to_string())
            .filter(|a| !a.is_empty() && seen.insert(a.clone()))
            .collect();
        Ok(Self { character_id, name, aliases })
    }

    fn needles(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub word_index: usize,
    pub surface: String,
}

fn is_boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Finds every case-sensitive, word-bounded occurrence of the character's
/// name or aliases. A boundary is a non-alphanumeric character or the text
/// edge, so `Anna` matches inside `Anna-Maria` but `Jo` does not match
/// `Josephine`.
pub fn locate_mentions(book: &BookText, identity: &CharacterIdentity) -> Vec<Mention> {
    let joined = book.words.join(" ");
    // Byte offset of each token start in the joined text.
    let mut starts = Vec::with_capacity(book.words.len());
    let mut offset = 0;
    for w in &book.words {
        starts.push(offset);
        offset += w.len() + 1;
    }

    // (byte offset, byte length, surface) of every boundary-delimited match.
    let mut hits: Vec<(usize, usize, String)> = Vec::new();
    for needle in identity.needles() {
        let needle = needle.split_whitespace().collect::<Vec<_>>().join(" ");
        if needle.is_empty() {
            continue;
        }
        for (pos, _) in joined.match_indices(needle.as_str()) {
            let before = joined[..pos].chars().next_back();
            let after = joined[pos + needle.len()..].chars().next();
            if is_boundary(before) && is_boundary(after) {
                hits.push((pos, needle.len(), needle.clone()));
            }
        }
    }
    // Longest surface wins at a position, and matches inside an accepted
    // longer one ("Oduya" within "Captain Oduya") are not separate mentions.
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut found: Vec<Mention> = Vec::new();
    let mut covered_to = 0;
    for (pos, len, surface) in hits {
        if pos < covered_to {
            continue;
        }
        covered_to = pos + len;
        let word_index = match starts.binary_search(&pos) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if found.last().is_some_and(|m| m.word_index == word_index) {
            continue;
        }
        found.push(Mention { word_index, surface });
    }
    found
}

/// A fixed-width token window around one mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub book_id: String,
    pub character_id: String,
    pub start_word: usize,
    pub end_word: usize,
    pub text: String,
}

/// Extracts one window per mention: `window_words / 2` tokens before the
/// mention and the remainder from the mention onwards, clipped to the book.
/// Exact duplicate spans are kept once, in mention order.
pub fn extract_windows(
    book: &BookText,
    character_id: &str,
    mentions: &[Mention],
    window_words: usize,
) -> Vec<Passage> {
    assert!(window_words >= 1, "window_words must be at least 1");
    let before = window_words / 2;
    let after = window_words - before;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for m in mentions {
        let start = m.word_index.saturating_sub(before);
        let end = (m.word_index + after).min(book.len());
        if !seen.insert((start, end)) {
            continue;
        }
        out.push(Passage {
            passage_id: format!("{}/{}/{}-{}", book.book_id, character_id, start, end),
            book_id: book.book_id.clone(),
            character_id: character_id.to_string(),
            start_word: start,
            end_word: end,
            text: book.slice_text(start, end),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn book(text: &str) -> BookText {
        normalize_text("b1", "T", text, false).unwrap().book
    }

    fn ident(name: &str, aliases: &[&str]) -> CharacterIdentity {
        CharacterIdentity::new("c1", name, aliases.iter().copied()).unwrap()
    }

    #[test]
    fn whitespace_collapse() {
        assert_eq!(book("a  b\n c").words, ["a", "b", "c"]);
    }

    #[test]
    fn empty_after_normalization_names_book() {
        let err = normalize_text("moby", "M", " \n\t ", false).unwrap_err();
        assert!(err.to_string().contains("moby"));
    }

    #[test]
    fn gutenberg_markers_strip_header_and_footer() {
        let raw = "The Project Gutenberg eBook of Test\nLicense stuff here\n\
                   *** START OF THE PROJECT GUTENBERG EBOOK TEST ***\n\
                   Chapter one begins.\n\
                   *** END OF THE PROJECT GUTENBERG EBOOK TEST ***\nMore license";
        let n = normalize_text("b", "T", raw, true).unwrap();
        assert!(n.boilerplate_stripped);
        assert_eq!(n.book.words, ["Chapter", "one", "begins."]);
        // older "THIS" form and lower case
        let raw = "header\n*** start of this project gutenberg ebook x ***\nbody\nEnd of Project Gutenberg's X\n";
        assert_eq!(normalize_text("b", "T", raw, true).unwrap().book.words, ["body"]);
    }

    #[test]
    fn missing_markers_keep_full_text() {
        let n = normalize_text("b", "T", "just a story", true).unwrap();
        assert!(!n.boilerplate_stripped);
        assert_eq!(n.book.words.len(), 3);
    }

    #[test]
    fn word_boundary_blocks_substring() {
        assert!(locate_mentions(&book("Josephine sat."), &ident("Jo", &[])).is_empty());
    }

    #[test]
    fn hyphen_is_a_boundary() {
        let m = locate_mentions(&book("Anna met Anna-Maria."), &ident("Anna", &[]));
        assert_eq!(m.iter().map(|m| m.word_index).collect::<Vec<_>>(), [0, 2]);
    }

    #[test]
    fn multi_word_alias() {
        let b = book("Later that day Mr. Darcy smiled at her.");
        let m = locate_mentions(&b, &ident("Fitzwilliam Darcy", &["Mr. Darcy"]));
        assert_eq!(m, [Mention { word_index: 3, surface: "Mr. Darcy".into() }]);
    }

    #[test]
    fn alias_inside_full_name_is_one_mention() {
        let b = book("Captain Oduya waved. Later Oduya slept.");
        let m = locate_mentions(&b, &ident("Captain Oduya", &["Oduya"]));
        assert_eq!(
            m,
            [
                Mention { word_index: 0, surface: "Captain Oduya".into() },
                Mention { word_index: 4, surface: "Oduya".into() }
            ]
        );
    }

    #[test]
    fn punctuation_adjacent_mentions() {
        let b = book("\"Elizabeth!\" cried Jane. Elizabeth's sister laughed.");
        let m = locate_mentions(&b, &ident("Elizabeth", &[]));
        assert_eq!(m.iter().map(|m| m.word_index).collect::<Vec<_>>(), [0, 3]);
    }

    #[test]
    fn identity_validation() {
        assert!(CharacterIdentity::new("x", "  ", Vec::<String>::new()).is_err());
        let id = CharacterIdentity::new("x", "Jo", ["Jo", "Joey", "Joey", " "]).unwrap();
        assert_eq!(id.aliases, ["Joey"]);
    }

    fn numbered(n: usize) -> BookText {
        book(&(0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))
    }

    #[test]
    fn window_centered() {
        let b = numbered(1000);
        let p = extract_windows(&b, "c", &[Mention { word_index: 500, surface: "w500".into() }], 200);
        assert_eq!((p[0].start_word, p[0].end_word), (400, 600));
    }

    #[test]
    fn window_clipped() {
        let b = numbered(50);
        let p = extract_windows(&b, "c", &[Mention { word_index: 3, surface: "w3".into() }], 200);
        assert_eq!((p[0].start_word, p[0].end_word), (0, 50));
    }

    #[test]
    fn overlapping_windows_kept_duplicates_collapsed() {
        let b = numbered(1000);
        let ms = [
            Mention { word_index: 500, surface: "x".into() },
            Mention { word_index: 502, surface: "x".into() },
            Mention { word_index: 500, surface: "x".into() },
        ];
        let p = extract_windows(&b, "c", &ms, 200);
        let spans: Vec<_> = p.iter().map(|p| (p.start_word, p.end_word)).collect();
        assert_eq!(spans, [(400, 600), (402, 602)]);
    }

    proptest! {
        #[test]
        fn passages_round_trip(n in 1usize..400, idx in proptest::collection::vec(0usize..400, 1..10), w in 1usize..300) {
            let b = numbered(n);
            let ms: Vec<_> = idx.into_iter().map(|i| Mention { word_index: i % n, surface: String::new() }).collect();
            for p in extract_windows(&b, "c", &ms, w) {
                prop_assert!(p.end_word - p.start_word <= w);
                prop_assert!(p.end_word <= n);
                let retok: Vec<_> = p.text.split_whitespace().map(str::to_string).collect();
                prop_assert_eq!(&retok[..], &b.words[p.start_word..p.end_word]);
            }
            for m in &ms {
                let p = extract_windows(&b, "c", std::slice::from_ref(m), w);
                prop_assert!(p[0].start_word <= m.word_index && m.word_index < p[0].end_word);
            }
        }

        #[test]
        fn normalization_idempotent(s in "[a-z \\n\\t]{1,60}") {
            if let Ok(n) = normalize_text("b", "t", &s, false) {
                let again = normalize_text("b", "t", &n.book.words.join(" "), false).unwrap();
                prop_assert_eq!(again.book.words, n.book.words);
            }
        }

        #[test]
        fn mentions_match_naive_scan(words in proptest::collection::vec(prop_oneof!["Ann", "Anna", "Anna-Lee", "xAnna", "Anna,", "bob"], 1..30)) {
            let b = book(&words.join(" "));
            let got: Vec<_> = locate_mentions(&b, &ident("Anna", &[])).into_iter().map(|m| m.word_index).collect();
            // naive: character scan over each token with the boundary predicate
            let mut want = Vec::new();
            for (i, w) in b.words.iter().enumerate() {
                let chars: Vec<char> = w.chars().collect();
                let hit = (0..chars.len()).any(|s| {
                    s + 4 <= chars.len()
                        && chars[s..s + 4].iter().collect::<String>() == "Anna"
                        && (s == 0 || !chars[s - 1].is_alphanumeric())
                        && (s + 4 == chars.len() || !chars[s + 4].is_alphanumeric())
                });
                if hit { want.push(i); }
            }
            prop_assert_eq!(got, want);
        }
    }
}
