//! Rule-based repair of malformed JSON replies.
//!
//! Text-level rules strip reasoning traces and fences and cut out the final
//! brace block. The remaining rules work on a lossless token stream (string
//! literals are recognized, so braces inside strings are never touched) and
//! are iterated until none of them changes the text. Untouched regions are
//! reproduced byte for byte, so valid JSON passes through unchanged.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::attribute::AttributeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairRule {
    RemoveReasoning,
    StripFences,
    SelectFinalBlock,
    NormalizeLiterals,
    QuoteItems,
    BalanceSeparators,
    InsertCommas,
    FlattenNestedLists,
    DropNullItems,
    FlattenOriginMaps,
}

impl RepairRule {
    /// Pipeline order.
    pub const ALL: [RepairRule; 10] = [
        RepairRule::RemoveReasoning,
        RepairRule::StripFences,
        RepairRule::SelectFinalBlock,
        RepairRule::NormalizeLiterals,
        RepairRule::QuoteItems,
        RepairRule::BalanceSeparators,
        RepairRule::InsertCommas,
        RepairRule::FlattenNestedLists,
        RepairRule::DropNullItems,
        RepairRule::FlattenOriginMaps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepairRule::RemoveReasoning => "remove_reasoning",
            RepairRule::StripFences => "strip_fences",
            RepairRule::SelectFinalBlock => "select_final_block",
            RepairRule::NormalizeLiterals => "normalize_literals",
            RepairRule::QuoteItems => "quote_items",
            RepairRule::BalanceSeparators => "balance_separators",
            RepairRule::InsertCommas => "insert_commas",
            RepairRule::FlattenNestedLists => "flatten_nested_lists",
            RepairRule::DropNullItems => "drop_null_items",
            RepairRule::FlattenOriginMaps => "flatten_origin_maps",
        }
    }
}

impl fmt::Display for RepairRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which rules fired, in pipeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairLog {
    pub entries: Vec<(RepairRule, bool)>,
}

impl Default for RepairLog {
    fn default() -> Self {
        Self { entries: RepairRule::ALL.iter().map(|&r| (r, false)).collect() }
    }
}

impl RepairLog {
    fn mark(&mut self, rule: RepairRule) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == rule) {
            e.1 = true;
        }
    }

    pub fn applied(&self, rule: RepairRule) -> bool {
        self.entries.iter().any(|&(r, a)| r == rule && a)
    }

    pub fn fired(&self) -> Vec<RepairRule> {
        self.entries.iter().filter(|e| e.1).map(|e| e.0).collect()
    }

    pub fn any(&self) -> bool {
        self.entries.iter().any(|e| e.1)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RepairError {
    #[error("no JSON object found in model output")]
    NoJsonBlock { log: RepairLog },
    #[error("output still unparseable after repair: {message}")]
    Unparseable { log: RepairLog, message: String, text: String },
}

impl RepairError {
    pub fn log(&self) -> &RepairLog {
        match self {
            RepairError::NoJsonBlock { log } | RepairError::Unparseable { log, .. } => log,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub text: String,
    pub log: RepairLog,
}

const MAX_ROUNDS: usize = 16;

pub fn repair_json(raw: &str) -> Result<Repaired, RepairError> {
    let mut log = RepairLog::default();
    let mut text = raw.to_string();

    for (rule, f) in [
        (RepairRule::RemoveReasoning, remove_reasoning as fn(&str) -> Option<String>),
        (RepairRule::StripFences, strip_fences),
    ] {
        if let Some(t) = f(&text) {
            text = t;
            log.mark(rule);
        }
    }
    match select_final_block(&text) {
        Block::None => return Err(RepairError::NoJsonBlock { log }),
        Block::Whole => {}
        Block::Cut(t) => {
            text = t;
            log.mark(RepairRule::SelectFinalBlock);
        }
    }

    let rules: [(RepairRule, fn(&[Token]) -> Option<String>); 7] = [
        (RepairRule::NormalizeLiterals, normalize_literals),
        (RepairRule::QuoteItems, quote_items),
        (RepairRule::BalanceSeparators, balance_separators),
        (RepairRule::InsertCommas, insert_commas),
        (RepairRule::FlattenNestedLists, flatten_nested_lists),
        (RepairRule::DropNullItems, drop_null_items),
        (RepairRule::FlattenOriginMaps, flatten_origin_maps),
    ];
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for (rule, f) in rules {
            if let Some(t) = f(&tokenize(&text)) {
                if t != text {
                    text = t;
                    log.mark(rule);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(_) => Ok(Repaired { text, log }),
        Err(e) => Err(RepairError::Unparseable { log, message: e.to_string(), text }),
    }
}

// ---------------------------------------------------------------------------
// text-level rules

static THINK_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<think(?:ing)?>.*?</think(?:ing)?>").expect("valid regex"));
static THINK_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</?think(?:ing)?>").expect("valid regex"));
static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"```[A-Za-z0-9_+-]*[ \t]*(?:\r?\n)?").expect("valid regex"));

fn remove_reasoning(text: &str) -> Option<String> {
    let mut out = THINK_BLOCK.replace_all(text, "").into_owned();
    // A closing tag with no opener: the trace started before the reply.
    if let Some(m) = THINK_TAG.find_iter(&out).find(|m| m.as_str().starts_with("</")) {
        out = out[m.end()..].to_string();
    }
    // An opener that is never closed: drop the tag and let block selection
    // find the answer.
    out = THINK_TAG.replace_all(&out, "").into_owned();
    (out != text).then_some(out)
}

fn strip_fences(text: &str) -> Option<String> {
    FENCE.is_match(text).then(|| FENCE.replace_all(text, "").into_owned())
}

enum Block {
    None,
    Whole,
    Cut(String),
}

/// The last top-level `{...}` region, running to the end of the text when
/// it is never closed.
fn select_final_block(text: &str) -> Block {
    let tokens = tokenize(text);
    let mut depth = 0usize;
    let mut last: Option<(usize, Option<usize>)> = None;
    let mut offset = 0usize;
    let mut blocks = 0usize;
    for t in &tokens {
        match t.kind {
            Kind::LBrace => {
                if depth == 0 {
                    last = Some((offset, None));
                    blocks += 1;
                }
                depth += 1;
            }
            Kind::RBrace if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    if let Some((s, _)) = last {
                        last = Some((s, Some(offset + 1)));
                    }
                }
            }
            _ => {}
        }
        offset += t.text.len();
    }
    let Some((start, end)) = last else { return Block::None };
    let end = end.unwrap_or(text.len());
    let outside_blank = text[..start].trim().is_empty() && text[end..].trim().is_empty();
    if blocks == 1 && outside_blank {
        Block::Whole
    } else {
        Block::Cut(text[start..end].to_string())
    }
}

// ---------------------------------------------------------------------------
// tokens

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    /// Double-quoted string; `closed` is false when it ran into a newline or
    /// the end of input.
    Str { closed: bool },
    /// String in single or typographic quotes.
    AltStr,
    Bare,
    Ws,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    kind: Kind,
    text: String,
}

impl Token {
    fn new(kind: Kind, text: impl Into<String>) -> Self {
        Self { kind, text: text.into() }
    }

    fn is_structural(&self) -> bool {
        matches!(self.kind, Kind::LBrace | Kind::RBrace | Kind::LBracket | Kind::RBracket | Kind::Colon | Kind::Comma)
    }

    /// String content without its delimiters (escapes left as written).
    fn inner(&self) -> &str {
        match self.kind {
            Kind::Str { closed } => {
                let s = &self.text[1..];
                if closed {
                    &s[..s.len() - 1]
                } else {
                    s
                }
            }
            Kind::AltStr => {
                let first = self.text.chars().next().map_or(0, char::len_utf8);
                let last = self.text.chars().last().map_or(0, char::len_utf8);
                &self.text[first..self.text.len() - last]
            }
            _ => &self.text,
        }
    }

    /// Decoded string content, or the raw text for bare words.
    fn content(&self) -> String {
        match self.kind {
            Kind::Str { closed: true } => serde_json::from_str::<String>(&self.text).unwrap_or_else(|_| self.inner().to_string()),
            _ => self.inner().to_string(),
        }
    }

    fn is_json_literal(&self) -> bool {
        self.kind == Kind::Bare
            && matches!(
                serde_json::from_str::<serde_json::Value>(&self.text),
                Ok(serde_json::Value::Number(_) | serde_json::Value::Bool(_) | serde_json::Value::Null)
            )
    }
}

fn is_alt_quote(c: char) -> bool {
    matches!(c, '\'' | '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}')
}

fn is_structural_char(c: char) -> bool {
    matches!(c, '{' | '}' | '[' | ']' | ':' | ',')
}

fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        let c = rest.chars().next().expect("non-empty");
        let len = match c {
            '{' | '}' | '[' | ']' | ':' | ',' => {
                let kind = match c {
                    '{' => Kind::LBrace,
                    '}' => Kind::RBrace,
                    '[' => Kind::LBracket,
                    ']' => Kind::RBracket,
                    ':' => Kind::Colon,
                    _ => Kind::Comma,
                };
                out.push(Token::new(kind, &rest[..1]));
                1
            }
            c if c.is_whitespace() => {
                let n = rest.find(|ch: char| !ch.is_whitespace()).unwrap_or(rest.len());
                out.push(Token::new(Kind::Ws, &rest[..n]));
                n
            }
            '"' => {
                let (n, closed) = scan_double(rest);
                out.push(Token::new(Kind::Str { closed }, &rest[..n]));
                n
            }
            c if is_alt_quote(c) && alt_string_len(rest).is_some() => {
                let n = alt_string_len(rest).expect("checked");
                out.push(Token::new(Kind::AltStr, &rest[..n]));
                n
            }
            _ => {
                let n = rest
                    .char_indices()
                    .skip(1)
                    .find(|&(_, ch)| ch.is_whitespace() || is_structural_char(ch) || ch == '"')
                    .map_or(rest.len(), |(k, _)| k);
                out.push(Token::new(Kind::Bare, &rest[..n]));
                n
            }
        };
        i += len;
    }
    out
}

fn scan_double(rest: &str) -> (usize, bool) {
    let mut escaped = false;
    for (k, ch) in rest.char_indices().skip(1) {
        if escaped {
            escaped = false;
            continue;
        }
        match ch {
            '\\' => escaped = true,
            '"' => return (k + 1, true),
            '\n' | '\r' => return (k, false),
            _ => {}
        }
    }
    (rest.len(), false)
}

/// Length of an alternative-quoted string starting at `rest`, provided the
/// closing quote is followed by a separator, a newline or the end of input.
fn alt_string_len(rest: &str) -> Option<usize> {
    let open = rest.chars().next()?.len_utf8();
    for (k, ch) in rest[open..].char_indices() {
        if ch == '\n' {
            return None;
        }
        if is_alt_quote(ch) {
            let end = open + k + ch.len_utf8();
            let after = rest[end..].trim_start_matches([' ', '\t']);
            if after.is_empty() || after.starts_with(|c: char| is_structural_char(c) || c == '\n' || c == '\r') {
                return Some(end);
            }
        }
    }
    None
}

fn render(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

fn next_sig(tokens: &[Token], from: usize) -> Option<usize> {
    (from..tokens.len()).find(|&i| tokens[i].kind != Kind::Ws)
}

fn prev_sig(tokens: &[Token], before: usize) -> Option<usize> {
    (0..before).rev().find(|&i| tokens[i].kind != Kind::Ws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Top,
    ArrayItem,
    ObjectKey,
    ObjectValue,
}

/// A maximal run of non-separator tokens, trimmed of surrounding whitespace.
#[derive(Debug, Clone, Copy)]
struct Group {
    start: usize,
    end: usize,
    ctx: Ctx,
}

impl Group {
    fn sig<'a>(&self, tokens: &'a [Token]) -> impl Iterator<Item = &'a Token> {
        tokens[self.start..self.end].iter().filter(|t| t.kind != Kind::Ws)
    }

    fn single<'a>(&self, tokens: &'a [Token]) -> Option<&'a Token> {
        (self.end - self.start == 1).then(|| &tokens[self.start])
    }
}

fn groups(tokens: &[Token]) -> Vec<Group> {
    #[derive(Clone, Copy, PartialEq)]
    enum Frame {
        Arr,
        Obj { value: bool },
    }
    let mut stack: Vec<Frame> = Vec::new();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        match t.kind {
            Kind::LBrace => stack.push(Frame::Obj { value: false }),
            Kind::LBracket => stack.push(Frame::Arr),
            Kind::RBrace => {
                if matches!(stack.last(), Some(Frame::Obj { .. })) {
                    stack.pop();
                }
            }
            Kind::RBracket => {
                if matches!(stack.last(), Some(Frame::Arr)) {
                    stack.pop();
                }
            }
            Kind::Colon => {
                if let Some(Frame::Obj { value }) = stack.last_mut() {
                    *value = true;
                }
            }
            Kind::Comma => {
                if let Some(Frame::Obj { value }) = stack.last_mut() {
                    *value = false;
                }
            }
            Kind::Ws => {}
            _ => {
                let start = i;
                let mut end = i + 1;
                while end < tokens.len() && !tokens[end].is_structural() {
                    end += 1;
                }
                while tokens[end - 1].kind == Kind::Ws {
                    end -= 1;
                }
                let ctx = match stack.last() {
                    None => Ctx::Top,
                    Some(Frame::Arr) => Ctx::ArrayItem,
                    Some(Frame::Obj { value: false }) => Ctx::ObjectKey,
                    Some(Frame::Obj { value: true }) => Ctx::ObjectValue,
                };
                out.push(Group { start, end, ctx });
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Applies non-overlapping `(start, end, replacement)` edits.
fn splice(tokens: &[Token], mut edits: Vec<(usize, usize, Vec<Token>)>) -> Option<String> {
    if edits.is_empty() {
        return None;
    }
    edits.sort_by_key(|e| e.0);
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    for (start, end, repl) in edits {
        if start < i {
            continue;
        }
        out.extend_from_slice(&tokens[i..start]);
        out.extend(repl);
        i = end;
    }
    out.extend_from_slice(&tokens[i..]);
    Some(render(&out))
}

/// Edit removing an array item together with one neighbouring comma.
fn remove_item(tokens: &[Token], g: &Group) -> (usize, usize, Vec<Token>) {
    if let Some(n) = next_sig(tokens, g.end).filter(|&n| tokens[n].kind == Kind::Comma) {
        let end = next_sig(tokens, n + 1).unwrap_or(n + 1);
        return (g.start, end, Vec::new());
    }
    if let Some(p) = prev_sig(tokens, g.start).filter(|&p| tokens[p].kind == Kind::Comma) {
        return (p, g.end, Vec::new());
    }
    (g.start, g.end, Vec::new())
}

fn string_token(content: &str) -> Token {
    Token::new(Kind::Str { closed: true }, serde_json::to_string(content).expect("string serializes"))
}

// ---------------------------------------------------------------------------
// token-level rules

fn normalize_literals(tokens: &[Token]) -> Option<String> {
    let edits = groups(tokens)
        .into_iter()
        .filter(|g| matches!(g.ctx, Ctx::ArrayItem | Ctx::ObjectValue))
        .filter_map(|g| {
            let t = g.single(tokens)?;
            if t.kind != Kind::Bare {
                return None;
            }
            let lit = match t.text.as_str() {
                "None" | "NULL" | "Null" | "NaN" | "undefined" => "null",
                "True" | "TRUE" => "true",
                "False" | "FALSE" => "false",
                _ => return None,
            };
            Some((g.start, g.end, vec![Token::new(Kind::Bare, lit)]))
        })
        .collect();
    splice(tokens, edits)
}

fn quote_items(tokens: &[Token]) -> Option<String> {
    let edits = groups(tokens)
        .into_iter()
        .filter(|g| g.ctx != Ctx::Top)
        .filter_map(|g| {
            let span = &tokens[g.start..g.end];
            if let Some(t) = g.single(tokens) {
                if t.kind == Kind::AltStr {
                    return Some((g.start, g.end, vec![string_token(t.inner())]));
                }
                if t.kind == Kind::Bare && t.is_json_literal() {
                    return None;
                }
            }
            if span.iter().all(|t| matches!(t.kind, Kind::Bare | Kind::Ws)) {
                return Some((g.start, g.end, vec![string_token(&render(span))]));
            }
            None
        })
        .collect();
    splice(tokens, edits)
}

fn balance_separators(tokens: &[Token]) -> Option<String> {
    let mut out: Vec<Token> = Vec::with_capacity(tokens.len());
    let mut stack: Vec<Kind> = Vec::new();
    let closer = |k: Kind| if k == Kind::LBrace { Token::new(Kind::RBrace, "}") } else { Token::new(Kind::RBracket, "]") };
    for t in tokens {
        match t.kind {
            Kind::Str { closed: false } => {
                let mut fixed = t.clone();
                fixed.text.push('"');
                fixed.kind = Kind::Str { closed: true };
                out.push(fixed);
            }
            Kind::LBrace | Kind::LBracket => {
                stack.push(t.kind);
                out.push(t.clone());
            }
            Kind::RBrace | Kind::RBracket => {
                let opener = if t.kind == Kind::RBrace { Kind::LBrace } else { Kind::LBracket };
                // A stray closer (no matching opener) is dropped.
                if let Some(pos) = stack.iter().rposition(|&k| k == opener) {
                    // Close anything left open inside this container first.
                    while stack.len() > pos + 1 {
                        let k = stack.pop().expect("non-empty");
                        out.push(closer(k));
                    }
                    stack.pop();
                    out.push(t.clone());
                }
            }
            _ => out.push(t.clone()),
        }
    }
    while let Some(k) = stack.pop() {
        out.push(closer(k));
    }

    // Leading, doubled and trailing commas.
    let mut cleaned: Vec<Token> = Vec::with_capacity(out.len());
    for (i, t) in out.iter().enumerate() {
        if t.kind == Kind::Comma {
            let prev = cleaned.iter().rev().find(|t| t.kind != Kind::Ws).map(|t| t.kind);
            let next = next_sig(&out, i + 1).map(|n| out[n].kind);
            let after_opener = matches!(prev, None | Some(Kind::LBrace | Kind::LBracket | Kind::Comma));
            let before_closer = matches!(next, None | Some(Kind::RBrace | Kind::RBracket));
            if after_opener || before_closer {
                continue;
            }
        }
        cleaned.push(t.clone());
    }
    let text = render(&cleaned);
    (text != render(tokens)).then_some(text)
}

fn insert_commas(tokens: &[Token]) -> Option<String> {
    let mut edits = Vec::new();
    let mut depth = 0i64;
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            Kind::LBrace | Kind::LBracket => depth += 1,
            Kind::RBrace | Kind::RBracket => depth -= 1,
            _ => {}
        }
        let ends_value = matches!(t.kind, Kind::Str { closed: true } | Kind::RBrace | Kind::RBracket) || t.is_json_literal();
        if !ends_value || depth <= 0 {
            continue;
        }
        let Some(n) = next_sig(tokens, i + 1) else { continue };
        let next = &tokens[n];
        let starts_value = matches!(next.kind, Kind::Str { .. } | Kind::LBrace | Kind::LBracket | Kind::Bare);
        // Unspaced string/word runs such as `"["Paris""` are left to list
        // flattening.
        let spaced = n > i + 1;
        let container = matches!(t.kind, Kind::RBrace | Kind::RBracket) || matches!(next.kind, Kind::LBrace | Kind::LBracket);
        if starts_value && (spaced || container) {
            edits.push((i + 1, i + 1, vec![Token::new(Kind::Comma, ",")]));
        }
    }
    splice(tokens, edits)
}

fn is_junk_item(s: &str) -> bool {
    let t = s.trim();
    !t.is_empty() && t.contains(['[', ']']) && t.chars().all(|c| matches!(c, '[' | ']' | '"' | '\'') || c.is_whitespace())
}

fn flatten_nested_lists(tokens: &[Token]) -> Option<String> {
    let mut edits = Vec::new();
    for g in groups(tokens).into_iter().filter(|g| g.ctx == Ctx::ArrayItem) {
        let sig: Vec<&Token> = g.sig(tokens).collect();
        if sig.len() >= 2 && sig.iter().any(|t| matches!(t.kind, Kind::Str { .. } | Kind::AltStr)) {
            let joined: String = tokens[g.start..g.end]
                .iter()
                .map(|t| if t.kind == Kind::Ws { " ".to_string() } else { t.content() })
                .collect();
            let cleaned = joined
                .replace(['[', ']', '"'], " ")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            if cleaned.is_empty() {
                edits.push(remove_item(tokens, &g));
            } else {
                edits.push((g.start, g.end, vec![string_token(&cleaned)]));
            }
        } else if let Some(t) = g.single(tokens) {
            if matches!(t.kind, Kind::Str { closed: true }) && is_junk_item(&t.content()) {
                edits.push(remove_item(tokens, &g));
            }
        }
    }
    splice(tokens, edits)
}

fn drop_null_items(tokens: &[Token]) -> Option<String> {
    let edits = groups(tokens)
        .into_iter()
        .filter(|g| g.ctx == Ctx::ArrayItem)
        .filter(|g| {
            g.single(tokens).is_some_and(|t| match t.kind {
                Kind::Str { closed: true } => matches!(t.content().trim().to_lowercase().as_str(), "null" | "none"),
                Kind::Bare => t.text == "null",
                _ => false,
            })
        })
        .map(|g| remove_item(tokens, &g))
        .collect();
    splice(tokens, edits)
}

fn is_origin_key(t: &Token) -> bool {
    matches!(t.kind, Kind::Str { closed: true })
        && matches!(t.content().trim().to_lowercase().as_str(), "origin" | "residence")
}

/// `"origin": "country": "France", "city": "Paris"` → `"origin": ["France", "Paris"]`.
fn flatten_origin_maps(tokens: &[Token]) -> Option<String> {
    let sig: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].kind != Kind::Ws).collect();
    let kind = |k: usize| sig.get(k).map(|&i| &tokens[i]);
    let is_value = |t: &Token| matches!(t.kind, Kind::Str { closed: true }) || t.is_json_literal();
    let mut edits = Vec::new();
    let mut k = 0;
    while k + 4 < sig.len() {
        let hit = kind(k).is_some_and(is_origin_key)
            && kind(k + 1).is_some_and(|t| t.kind == Kind::Colon)
            && kind(k + 2).is_some_and(|t| matches!(t.kind, Kind::Str { closed: true }))
            && kind(k + 3).is_some_and(|t| t.kind == Kind::Colon)
            && kind(k + 4).is_some_and(is_value);
        if !hit {
            k += 1;
            continue;
        }
        let mut values = vec![sig[k + 4]];
        let mut j = k + 5;
        // Further `, "key": value` members that are not attribute keys.
        while let (Some(c), Some(key), Some(colon), Some(v)) = (kind(j), kind(j + 1), kind(j + 2), kind(j + 3)) {
            let continues = c.kind == Kind::Comma
                && matches!(key.kind, Kind::Str { closed: true })
                && key.content().parse::<AttributeKind>().is_err()
                && colon.kind == Kind::Colon
                && is_value(v);
            if !continues {
                break;
            }
            values.push(sig[j + 3]);
            j += 4;
        }
        let items: Vec<&str> = values.iter().map(|&i| tokens[i].text.as_str()).collect();
        let list = format!("[{}]", items.join(", "));
        edits.push((sig[k + 2], sig[j - 1] + 1, vec![Token::new(Kind::Bare, list)]));
        k = j;
    }
    splice(tokens, edits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    fn fixed(raw: &str) -> (Value, Vec<RepairRule>) {
        let r = repair_json(raw).unwrap_or_else(|e| panic!("{raw:?}: {e}"));
        (serde_json::from_str(&r.text).unwrap(), r.log.fired())
    }

    #[test]
    fn tokenizer_is_lossless() {
        for s in [
            r#"{"a": ["x", y, 'z'], "b": None}"#,
            "{\"open\": \"unterminated\n}",
            "'lonely apostrophe's {",
            "“curly” ‘quotes’",
        ] {
            assert_eq!(render(&tokenize(s)), s);
        }
    }

    #[test]
    fn valid_json_untouched() {
        let raw = "{\n  \"age\": \"adult\",\n  \"origin\": [\"France\", \"Paris\"],\n  \"gender\": null\n}";
        let r = repair_json(raw).unwrap();
        assert_eq!(r.text, raw);
        assert!(!r.log.any());
    }

    #[test]
    fn worked_example() {
        let raw = "<think> (...) </think>\n{\n  \"origin\": [\"Europe\", Germany, \"Parchim\"],\n  \"residence\": [\"Germany\", \"Hamburg\",],\n  \"spoken_languages\": [\n        \"German\", English, 'null']\n}";
        let (v, _) = fixed(raw);
        assert_eq!(
            v,
            json!({
                "origin": ["Europe", "Germany", "Parchim"],
                "residence": ["Germany", "Hamburg"],
                "spoken_languages": ["German", "English"]
            })
        );
    }

    #[test]
    fn single_rule_fixtures() {
        use RepairRule::*;
        let cases: [(&str, Value, RepairRule); 10] = [
            ("<think>hmm, {maybe}</think>\n{\"age\": \"adult\"}", json!({"age": "adult"}), RemoveReasoning),
            ("```json\n{\"age\": \"adult\"}\n```", json!({"age": "adult"}), StripFences),
            ("{\"age\": \"child\"}\nOn reflection:\n{\"age\": \"adult\"}", json!({"age": "adult"}), SelectFinalBlock),
            ("{\"gender\": None}", json!({"gender": null}), NormalizeLiterals),
            ("{\"origin\": [Paris, London]}", json!({"origin": ["Paris", "London"]}), QuoteItems),
            ("{\"origin\": [\"Paris\"]],}", json!({"origin": ["Paris"]}), BalanceSeparators),
            ("{\"a\": [{\"x\": \"1\"} {\"x\": \"2\"}]}", json!({"a": [{"x": "1"}, {"x": "2"}]}), InsertCommas),
            ("{\"origin\": [\"[\"Paris\"\"]}", json!({"origin": ["Paris"]}), FlattenNestedLists),
            ("{\"spoken_languages\": [\"English\", \"null\"]}", json!({"spoken_languages": ["English"]}), DropNullItems),
            (
                "{\"origin\": \"country\": \"France\", \"city\": \"Paris\"}",
                json!({"origin": ["France", "Paris"]}),
                FlattenOriginMaps,
            ),
        ];
        for (raw, want, rule) in cases {
            let (v, fired) = fixed(raw);
            assert_eq!(v, want, "{raw}");
            assert_eq!(fired, vec![rule], "{raw}");
        }
    }

    #[test]
    fn value_level_unquoted_list() {
        let (v, _) = fixed("{\"residence\": [Paris, London]}");
        assert_eq!(v["residence"], json!(["Paris", "London"]));
    }

    #[test]
    fn braces_inside_strings_are_inert() {
        let raw = r#"{"physical_health": "fine {mostly} [really]"}"#;
        let r = repair_json(raw).unwrap();
        assert_eq!(r.text, raw);
    }

    #[test]
    fn missing_closers_and_unterminated_strings() {
        let (v, fired) = fixed("{\"origin\": [\"Paris\", \"Lyon");
        assert_eq!(v, json!({"origin": ["Paris", "Lyon"]}));
        assert_eq!(fired, vec![RepairRule::BalanceSeparators]);
    }

    #[test]
    fn brace_less_map_stops_at_attribute_key() {
        let (v, _) = fixed("{\"origin\": \"country\": \"France\", \"city\": \"Paris\", \"age\": \"adult\"}");
        assert_eq!(v, json!({"origin": ["France", "Paris"], "age": "adult"}));
    }

    #[test]
    fn prose_around_block() {
        let (v, fired) = fixed("Sure! Here is the answer:\n{\"gender\": \"female\"}\nHope this helps.");
        assert_eq!(v, json!({"gender": "female"}));
        assert_eq!(fired, vec![RepairRule::SelectFinalBlock]);
    }

    #[test]
    fn irrecoverable_inputs() {
        assert!(matches!(repair_json("no json here"), Err(RepairError::NoJsonBlock { .. })));
        assert!(matches!(repair_json(""), Err(RepairError::NoJsonBlock { .. })));
        let err = repair_json("{\"a\" \"b\" : : }").unwrap_err();
        assert!(matches!(err, RepairError::Unparseable { .. }));
        assert_eq!(err.log().entries.len(), 10);
    }

    #[test]
    fn idempotent_on_examples() {
        for raw in [
            "<think>x</think>{\"origin\": [Paris, 'null', London,]}",
            "```\n{\"a\": [\"[\"x\"\"], \"b\": True}\n```",
            "{\"origin\": \"country\": \"France\"",
            "{\"occupation\": [\"sailor\" \"captain\"]}",
        ] {
            let once = repair_json(raw).unwrap().text;
            let twice = repair_json(&once).unwrap();
            assert_eq!(twice.text, once);
            assert!(!twice.log.any(), "{once}");
        }
    }

    #[test]
    fn log_order_is_pipeline_order() {
        let log = RepairLog::default();
        let rules: Vec<_> = log.entries.iter().map(|e| e.0).collect();
        assert_eq!(rules, RepairRule::ALL);
    }
}
