//! Transcript text normalization.
//!
//! Raw transcript text is rewritten into a closed alphabet: uppercase word
//! tokens (`[A-Z][A-Z']*`) and four special punctuation words that survive
//! normalization as first-class tokens. Numbers, ordinals, years, times and
//! dates are expanded to spoken form; dotted abbreviations are split into
//! letters; every other symbol is dropped. The mapping is idempotent: running
//! the normalizer over its own rendered output changes nothing.
//!
//! The full rule table lives in `docs/normalization.md`.

pub mod numbers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COMMA: &str = "<COMMA>";
pub const PERIOD: &str = "<PERIOD>";
pub const QUESTIONMARK: &str = "<QUESTIONMARK>";
pub const EXCLAMATIONMARK: &str = "<EXCLAMATIONMARK>";
pub const SIL: &str = "<SIL>";

/// The four punctuation words emitted by the normalizer.
pub const PUNCT_WORDS: [&str; 4] = [COMMA, PERIOD, QUESTIONMARK, EXCLAMATIONMARK];

const MONTHS: [&str; 12] = [
    "JANUARY", "FEBRUARY", "MARCH", "APRIL", "MAY", "JUNE", "JULY", "AUGUST", "SEPTEMBER",
    "OCTOBER", "NOVEMBER", "DECEMBER",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Word,
    Punct,
    Silence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

impl Token {
    pub fn word(text: impl Into<String>) -> Self {
        Token { kind: TokenKind::Word, text: text.into() }
    }

    pub fn punct(text: impl Into<String>) -> Self {
        Token { kind: TokenKind::Punct, text: text.into() }
    }

    pub fn silence() -> Self {
        Token { kind: TokenKind::Silence, text: SIL.to_string() }
    }

    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }
}

/// A normalized token sequence plus, for each token, the byte span of the
/// raw text it came from. Tokens expanded from one lexeme share its span;
/// spans are monotonically non-decreasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub raw_spans: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word()).count()
    }

    /// Indices of WORD tokens, in order.
    pub fn word_indices(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_word())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn push(&mut self, token: Token, span: (usize, usize)) {
        self.tokens.push(token);
        self.raw_spans.push(span);
    }

    /// Clones the token range [start, end) with its spans.
    pub fn slice(&self, start: usize, end: usize) -> TokenSeq {
        TokenSeq {
            tokens: self.tokens[start..end].to_vec(),
            raw_spans: self.raw_spans[start..end].to_vec(),
        }
    }

    /// Raw-text byte span covered by the token range [start, end).
    pub fn raw_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        if start >= end || end > self.raw_spans.len() {
            return None;
        }
        Some((self.raw_spans[start].0, self.raw_spans[end - 1].1))
    }

    /// Space-joined token texts; re-normalizing the result is a no-op.
    pub fn render(&self) -> String {
        let texts: Vec<&str> = self.tokens.iter().map(|t| t.text.as_str()).collect();
        texts.join(" ")
    }
}

#[derive(Debug, Error)]
pub enum NormError {
    #[error("input is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
}

/// Maps a sentence punctuation character to its special word.
pub fn map_punctuation(c: char) -> Option<&'static str> {
    match c {
        ',' => Some(COMMA),
        '.' => Some(PERIOD),
        '?' => Some(QUESTIONMARK),
        '!' => Some(EXCLAMATIONMARK),
        _ => None,
    }
}

/// Byte-level entry point; rejects non-UTF-8 input.
pub fn normalize_bytes(raw: &[u8]) -> Result<TokenSeq, NormError> {
    let text = std::str::from_utf8(raw)?;
    Ok(normalize_text(text))
}

/// Normalizes raw transcript text into WORD and PUNCT tokens.
pub fn normalize_text(raw: &str) -> TokenSeq {
    Lexer::new(raw).run()
}

struct Lexer<'a> {
    raw: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    out: TokenSeq,
    last_word: Option<String>,
}

impl<'a> Lexer<'a> {
    fn new(raw: &'a str) -> Self {
        Lexer {
            raw,
            chars: raw.char_indices().collect(),
            pos: 0,
            out: TokenSeq::default(),
            last_word: None,
        }
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).map(|&(_, c)| c)
    }

    fn byte_at(&self, i: usize) -> usize {
        self.chars.get(i).map(|&(b, _)| b).unwrap_or(self.raw.len())
    }

    fn emit_word(&mut self, text: String, span: (usize, usize)) {
        self.last_word = Some(text.clone());
        self.out.push(Token::word(text), span);
    }

    fn emit_punct(&mut self, text: &str, span: (usize, usize)) {
        self.last_word = None;
        self.out.push(Token::punct(text), span);
    }

    fn run(mut self) -> TokenSeq {
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos].1;
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '<' && self.try_special() {
                // consumed by try_special
            } else if c.is_alphabetic() {
                self.scan_word();
            } else if c.is_ascii_digit() {
                self.scan_number();
            } else if let Some(p) = map_punctuation(c) {
                let b = self.byte_at(self.pos);
                let end = self.byte_at(self.pos + 1);
                self.emit_punct(p, (b, end));
                self.pos += 1;
            } else {
                // Any other symbol is dropped.
                self.pos += 1;
            }
        }
        self.out
    }

    /// Recognizes the special words verbatim so rendered output re-normalizes
    /// to itself. `<SIL>` is consumed but not re-emitted.
    fn try_special(&mut self) -> bool {
        let start = self.byte_at(self.pos);
        let rest = &self.raw[start..];
        for special in PUNCT_WORDS {
            if rest.starts_with(special) {
                self.emit_punct(special, (start, start + special.len()));
                self.pos += special.chars().count();
                return true;
            }
        }
        if rest.starts_with(SIL) {
            self.pos += SIL.chars().count();
            return true;
        }
        false
    }

    fn scan_word(&mut self) {
        let start_byte = self.byte_at(self.pos);
        let mut lexeme = String::new();
        let mut has_dot = false;
        while let Some(c) = self.peek(0) {
            if c.is_alphabetic() {
                lexeme.push(c);
                self.pos += 1;
            } else if c == '\'' || c == '\u{2019}' {
                lexeme.push('\'');
                self.pos += 1;
            } else if c == '.' {
                if self.peek(1).map_or(false, |n| n.is_alphabetic()) {
                    // Internal abbreviation dot: "p.m", "U.S".
                    lexeme.push('.');
                    has_dot = true;
                    self.pos += 1;
                } else if has_dot {
                    // Trailing dot of an abbreviation belongs to it, not to
                    // the sentence: "3 p.m., fine" has no period.
                    self.pos += 1;
                    break;
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        let end_byte = self.byte_at(self.pos);
        let span = (start_byte, end_byte);
        if has_dot {
            for part in lexeme.split('.') {
                if let Some(w) = clean_word(part) {
                    self.emit_word(w, span);
                }
            }
        } else if let Some(w) = clean_word(&lexeme) {
            self.emit_word(w, span);
        }
    }

    fn date_field(&self, i: &mut usize, max_len: usize) -> Option<(u64, usize)> {
        let mut digits = String::new();
        while digits.len() < max_len {
            match self.chars.get(*i).map(|&(_, c)| c) {
                Some(c) if c.is_ascii_digit() => {
                    digits.push(c);
                    *i += 1;
                }
                _ => break,
            }
        }
        if digits.is_empty() {
            return None;
        }
        Some((digits.parse().ok()?, digits.len()))
    }

    /// Tries to read `M/D/YYYY` starting at the current position. Returns the
    /// spoken words and the number of chars consumed, or None.
    fn try_date(&self) -> Option<(Vec<String>, usize)> {
        let mut i = self.pos;
        let (month, _) = self.date_field(&mut i, 2)?;
        if self.chars.get(i).map(|&(_, c)| c) != Some('/') {
            return None;
        }
        i += 1;
        let (day, _) = self.date_field(&mut i, 2)?;
        if self.chars.get(i).map(|&(_, c)| c) != Some('/') {
            return None;
        }
        i += 1;
        let (y, ylen) = self.date_field(&mut i, 4)?;
        if ylen != 4 || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return None;
        }
        if self.chars.get(i).map_or(false, |&(_, c)| c.is_alphanumeric()) {
            return None;
        }
        let mut words = vec![MONTHS[(month - 1) as usize].to_string()];
        words.extend(numbers::ordinal(day));
        words.extend(numbers::year(y));
        Some((words, i - self.pos))
    }

    fn scan_number(&mut self) {
        if let Some((words, consumed)) = self.try_date() {
            let span = (self.byte_at(self.pos), self.byte_at(self.pos + consumed));
            self.pos += consumed;
            for w in words {
                self.emit_word(w, span);
            }
            return;
        }
        let start_byte = self.byte_at(self.pos);
        let mut digits = String::new();
        let mut has_comma = false;
        let mut has_colon = false;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() {
                digits.push(c);
                self.pos += 1;
            } else if c == ','
                && self.peek(1).map_or(false, |n| n.is_ascii_digit())
                && self.peek(2).map_or(false, |n| n.is_ascii_digit())
                && self.peek(3).map_or(false, |n| n.is_ascii_digit())
            {
                has_comma = true;
                self.pos += 1;
            } else if (c == '.' || c == ':') && self.peek(1).map_or(false, |n| n.is_ascii_digit()) {
                has_colon |= c == ':';
                digits.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        // Letters glued to digits: ordinal suffixes ("1st") or plain tails
        // ("1980s" -> NINETEEN EIGHTY S).
        let mut suffix = String::new();
        while let Some(c) = self.peek(0) {
            if c.is_alphabetic() {
                suffix.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        let end_byte = self.byte_at(self.pos);
        let span = (start_byte, end_byte);
        for w in self.number_words(&digits, &suffix, has_comma, has_colon) {
            self.emit_word(w, span);
        }
    }

    fn number_words(
        &self,
        digits: &str,
        suffix: &str,
        has_comma: bool,
        has_colon: bool,
    ) -> Vec<String> {
        if has_colon {
            return clock_words(digits);
        }
        let mut out;
        if !suffix.is_empty() {
            let compound = format!("{digits}{}", suffix.to_ascii_lowercase());
            if let Ok(words) = numbers::expand_number(&compound) {
                return words;
            }
            out = self.plain_number_words(digits, has_comma);
            if let Some(w) = clean_word(suffix) {
                out.push(w);
            }
        } else {
            out = self.plain_number_words(digits, has_comma);
        }
        out
    }

    fn plain_number_words(&self, digits: &str, has_comma: bool) -> Vec<String> {
        if has_comma {
            // Grouped numbers are counts, never years: "2,500" reads as a
            // cardinal even though bare "2500" would read as a year.
            if let Ok(n) = digits.parse::<u64>() {
                return numbers::cardinal(n);
            }
            if let Some((int_part, frac)) = digits.split_once('.') {
                if let Ok(n) = int_part.parse::<u64>() {
                    let mut out = numbers::cardinal(n);
                    out.push("POINT".to_string());
                    out.extend(numbers::digits(frac));
                    return out;
                }
            }
            return numbers::digits(digits);
        }
        // A 1-2 digit integer right after a month name reads as an ordinal:
        // "January 5, 1984" -> JANUARY FIFTH <COMMA> NINETEEN EIGHTY FOUR.
        if digits.len() <= 2 && !digits.starts_with('0') {
            if let (Some(last), Ok(n)) = (&self.last_word, digits.parse::<u64>()) {
                if MONTHS.contains(&last.as_str()) && (1..=31).contains(&n) {
                    return numbers::ordinal(n);
                }
            }
        }
        numbers::expand_number(digits).unwrap_or_else(|_| numbers::digits(digits))
    }
}

/// Spoken form of "H:MM" clock times.
fn clock_words(digits: &str) -> Vec<String> {
    let parts: Vec<&str> = digits.split(':').collect();
    if parts.len() == 2 && parts[1].len() == 2 {
        if let (Ok(h), Ok(m)) = (parts[0].parse::<u64>(), parts[1].parse::<u64>()) {
            let mut out = numbers::cardinal(h);
            match m {
                0 => out.push("O'CLOCK".to_string()),
                1..=9 => {
                    out.push("OH".to_string());
                    out.extend(numbers::cardinal(m));
                }
                _ => out.extend(numbers::cardinal(m)),
            }
            return out;
        }
    }
    numbers::digits(digits)
}

/// Uppercases and restricts a word lexeme to [A-Z'], dropping anything else.
/// Returns None when nothing word-like is left.
fn clean_word(lexeme: &str) -> Option<String> {
    let mut w: String = lexeme
        .chars()
        .filter_map(|c| {
            if c.is_ascii_alphabetic() {
                Some(c.to_ascii_uppercase())
            } else if c == '\'' {
                Some('\'')
            } else {
                None
            }
        })
        .collect();
    while w.starts_with('\'') {
        w.remove(0);
    }
    if w.is_empty() || !w.starts_with(|c: char| c.is_ascii_uppercase()) {
        return None;
    }
    Some(w)
}
