//! Dictionary-driven lexical profiling.
//!
//! Text is NFC-normalized, segmented by forward maximum matching against the
//! dictionary vocabulary, and each token is matched against the entries of the
//! eight categories. A category's frequency is its hit count divided by the
//! token count; one token may hit several categories.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const DEMO_DICTIONARY: &str = include_str!("../data/demo_dictionary.txt");

/// Section name for extra segmentation words that belong to no category.
pub const VOCABULARY_SECTION: &str = "vocabulary";

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: unknown category `{name}`")]
    UnknownCategory { line: usize, name: String },
    #[error("line {line}: wildcard `*` is only allowed at the end of an entry: `{entry}`")]
    MisplacedWildcard { line: usize, entry: String },
    #[error("line {line}: entry appears before any `[category]` header")]
    EntryOutsideSection { line: usize },
    #[error("line {line}: empty entry")]
    EmptyEntry { line: usize },
    #[error("text has no tokens after segmentation")]
    NoTokens,
    #[error("reading dictionary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The eight lexical categories, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    I,
    Negemo,
    Certain,
    Discrep,
    Social,
    Focuspast,
    Death,
    Negate,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::I,
        Category::Negemo,
        Category::Certain,
        Category::Discrep,
        Category::Social,
        Category::Focuspast,
        Category::Death,
        Category::Negate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::I => "i",
            Category::Negemo => "negemo",
            Category::Certain => "certain",
            Category::Discrep => "discrep",
            Category::Social => "social",
            Category::Focuspast => "focuspast",
            Category::Death => "death",
            Category::Negate => "negate",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or(())
    }
}

/// A dictionary entry: a literal word or a prefix pattern (`伤*`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entry {
    pub text: String,
    pub wildcard: bool,
}

impl Entry {
    pub fn matches(&self, token: &str) -> bool {
        if self.wildcard {
            token.starts_with(&self.text)
        } else {
            token == self.text
        }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.wildcard {
            write!(f, "{}*", self.text)
        } else {
            f.write_str(&self.text)
        }
    }
}

#[derive(Debug, Default, Clone)]
struct CategoryMatcher {
    literals: HashSet<String>,
    prefixes: HashSet<String>,
}

impl CategoryMatcher {
    fn matches(&self, token: &str) -> bool {
        if self.literals.contains(token) {
            return true;
        }
        if self.prefixes.is_empty() {
            return false;
        }
        token
            .char_indices()
            .map(|(i, c)| &token[..i + c.len_utf8()])
            .any(|prefix| self.prefixes.contains(prefix))
    }
}

/// Character trie over the segmentation vocabulary.
#[derive(Debug, Clone, Default)]
struct Trie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<char, usize>,
    terminal: bool,
}

impl Trie {
    fn new() -> Self {
        Trie {
            nodes: vec![TrieNode::default()],
        }
    }

    fn insert(&mut self, word: &str) {
        let mut node = 0;
        for c in word.chars() {
            node = match self.nodes[node].children.get(&c) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(c, next);
                    next
                }
            };
        }
        self.nodes[node].terminal = true;
    }

    /// Length in chars of the longest vocabulary word that prefixes `chars`.
    fn longest_match(&self, chars: &[char]) -> usize {
        let mut node = 0;
        let mut best = 0;
        for (i, c) in chars.iter().enumerate() {
            match self.nodes[node].children.get(c) {
                Some(&next) => {
                    node = next;
                    if self.nodes[node].terminal {
                        best = i + 1;
                    }
                }
                None => break,
            }
        }
        best
    }
}

/// Category word lists plus the segmentation vocabulary derived from them.
#[derive(Debug, Clone)]
pub struct LexiconDictionary {
    categories: BTreeMap<Category, Vec<Entry>>,
    matchers: Vec<CategoryMatcher>,
    extra_vocabulary: Vec<String>,
    trie: Trie,
    warnings: Vec<String>,
}

impl LexiconDictionary {
    /// The small bundled dictionary used by tests, demos and synthetic corpora.
    pub fn demo() -> Self {
        Self::parse(DEMO_DICTIONARY).expect("bundled dictionary is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        enum Section {
            None,
            Category(Category),
            Vocabulary,
        }

        let mut categories: BTreeMap<Category, Vec<Entry>> =
            Category::ALL.iter().map(|&c| (c, Vec::new())).collect();
        let mut extra_vocabulary = Vec::new();
        let mut warnings = Vec::new();
        let mut section = Section::None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line: String = line.trim().nfc().collect();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = if name == VOCABULARY_SECTION {
                    Section::Vocabulary
                } else {
                    match name.parse::<Category>() {
                        Ok(c) => Section::Category(c),
                        Err(()) => {
                            return Err(LexiconError::UnknownCategory {
                                line: line_no,
                                name: name.to_string(),
                            })
                        }
                    }
                };
                continue;
            }

            // The legacy inline form `category: a, b*` is accepted too.
            let (target, items): (Option<Category>, Vec<&str>) =
                match line.split_once(':').or_else(|| line.split_once('：')) {
                    Some((name, rest)) if !name.trim().is_empty() && !rest.trim().is_empty() => {
                        let cat = name.trim().parse::<Category>().map_err(|()| {
                            LexiconError::UnknownCategory {
                                line: line_no,
                                name: name.trim().to_string(),
                            }
                        })?;
                        (
                            Some(cat),
                            rest.split([',', '，']).map(str::trim).collect(),
                        )
                    }
                    _ => (None, vec![line.as_str()]),
                };

            for item in items {
                let entry = parse_entry(item, line_no)?;
                let slot = match (target, &section) {
                    (Some(cat), _) => Some(cat),
                    (None, Section::Category(cat)) => Some(*cat),
                    _ => None,
                };
                match (slot, &section) {
                    (Some(cat), _) => {
                        let list = categories.get_mut(&cat).expect("all categories present");
                        if list.contains(&entry) {
                            let msg = format!("line {line_no}: duplicate entry `{entry}` in {cat}");
                            log::warn!("{msg}");
                            warnings.push(msg);
                        } else {
                            list.push(entry);
                        }
                    }
                    (None, Section::Vocabulary) => {
                        if entry.wildcard {
                            return Err(LexiconError::MisplacedWildcard {
                                line: line_no,
                                entry: item.to_string(),
                            });
                        }
                        extra_vocabulary.push(entry.text);
                    }
                    (None, _) => {
                        return Err(LexiconError::EntryOutsideSection { line: line_no })
                    }
                }
            }
        }

        Ok(Self::build(categories, extra_vocabulary, warnings))
    }

    fn build(
        categories: BTreeMap<Category, Vec<Entry>>,
        extra_vocabulary: Vec<String>,
        warnings: Vec<String>,
    ) -> Self {
        let mut trie = Trie::new();
        let mut matchers = vec![CategoryMatcher::default(); Category::ALL.len()];
        for (cat, entries) in &categories {
            let m = &mut matchers[cat.index()];
            for e in entries {
                trie.insert(&e.text);
                if e.wildcard {
                    m.prefixes.insert(e.text.clone());
                } else {
                    m.literals.insert(e.text.clone());
                }
            }
        }
        for w in &extra_vocabulary {
            trie.insert(w);
        }
        LexiconDictionary {
            categories,
            matchers,
            extra_vocabulary,
            trie,
            warnings,
        }
    }

    pub fn entries(&self, category: Category) -> &[Entry] {
        self.categories
            .get(&category)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Words that only extend the segmentation vocabulary.
    pub fn extra_vocabulary(&self) -> &[String] {
        &self.extra_vocabulary
    }

    /// Non-fatal issues found while loading (duplicates).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn token_matches(&self, token: &str, category: Category) -> bool {
        self.matchers[category.index()].matches(token)
    }
}

fn parse_entry(item: &str, line: usize) -> Result<Entry, LexiconError> {
    let item = item.trim();
    if item.is_empty() || item == "*" {
        return Err(LexiconError::EmptyEntry { line });
    }
    let (text, wildcard) = match item.strip_suffix('*') {
        Some(stem) => (stem, true),
        None => (item, false),
    };
    if text.contains('*') {
        return Err(LexiconError::MisplacedWildcard {
            line,
            entry: item.to_string(),
        });
    }
    Ok(Entry {
        text: text.to_string(),
        wildcard,
    })
}

/// Whitespace and punctuation never become tokens.
pub fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(c,
            '\u{2000}'..='\u{206F}'   // general punctuation
            | '\u{3000}'..='\u{303F}' // CJK symbols and punctuation
            | '\u{FE10}'..='\u{FE1F}'
            | '\u{FE30}'..='\u{FE4F}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}'
            | '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
        )
}

fn is_latin_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || (c.is_alphabetic() && (c as u32) < 0x0250)
}

/// A token with its byte span in the NFC-normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits text into tokens.
pub trait Segmenter {
    fn segment(&self, text: &str) -> Vec<Token>;
}

/// Forward maximum matching over the dictionary vocabulary. Unmatched CJK
/// characters become single-character tokens; a run of Latin letters or digits
/// is always one token.
#[derive(Debug, Clone, Copy)]
pub struct MaxMatchSegmenter<'a> {
    dict: &'a LexiconDictionary,
}

impl<'a> MaxMatchSegmenter<'a> {
    pub fn new(dict: &'a LexiconDictionary) -> Self {
        MaxMatchSegmenter { dict }
    }
}

impl Segmenter for MaxMatchSegmenter<'_> {
    fn segment(&self, text: &str) -> Vec<Token> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
        let plain: Vec<char> = chars.iter().map(|&(_, c)| c).collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < plain.len() {
            let c = plain[i];
            if is_separator(c) {
                i += 1;
                continue;
            }
            let len = if is_latin_word_char(c) {
                plain[i..]
                    .iter()
                    .take_while(|&&c| is_latin_word_char(c))
                    .count()
            } else {
                // Vocabulary words never span separators.
                let limit = plain[i..]
                    .iter()
                    .take_while(|&&c| !is_separator(c))
                    .count();
                self.dict.trie.longest_match(&plain[i..i + limit]).max(1)
            };
            let (start, end) = (byte_at(i), byte_at(i + len));
            tokens.push(Token {
                text: text[start..end].to_string(),
                start,
                end,
            });
            i += len;
        }
        tokens
    }
}

pub fn normalize_text(text: &str) -> String {
    text.nfc().collect()
}

/// Segments `text` (after NFC normalization) into token strings.
pub fn segment(text: &str, dict: &LexiconDictionary) -> Vec<String> {
    let normalized = normalize_text(text);
    MaxMatchSegmenter::new(dict)
        .segment(&normalized)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

/// Relative category frequencies for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalProfile {
    pub token_count: usize,
    /// Indexed by [`Category::index`].
    pub frequencies: [f64; 8],
}

impl LexicalProfile {
    pub fn get(&self, category: Category) -> f64 {
        self.frequencies[category.index()]
    }

    pub fn column_names() -> Vec<&'static str> {
        Category::ALL.iter().map(|c| c.name()).collect()
    }
}

pub fn profile_tokens<S: AsRef<str>>(
    tokens: &[S],
    dict: &LexiconDictionary,
) -> Result<LexicalProfile, LexiconError> {
    if tokens.is_empty() {
        return Err(LexiconError::NoTokens);
    }
    let mut hits = [0usize; 8];
    for token in tokens {
        for cat in Category::ALL {
            if dict.token_matches(token.as_ref(), cat) {
                hits[cat.index()] += 1;
            }
        }
    }
    let n = tokens.len() as f64;
    Ok(LexicalProfile {
        token_count: tokens.len(),
        frequencies: hits.map(|h| h as f64 / n),
    })
}

pub fn profile(text: &str, dict: &LexiconDictionary) -> Result<LexicalProfile, LexiconError> {
    profile_tokens(&segment(text, dict), dict)
}
