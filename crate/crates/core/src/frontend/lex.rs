//! Token-level scanning for definition files, model files, and defaults files.
//!
//! Lexing happens in two layers. A raw [`Scanner`] walks characters, skipping
//! whitespace and `//` line comments. On top of it, [`Lexer`] produces
//! [`BTok`] values ("body tokens"): the token stream used inside cell bodies,
//! side conditions, model text, and defaults right-hand sides.
//!
//! Body lexing is vocabulary-driven. The set of string literals declared in
//! the grammar is matched longest-first, competing with the built-in lexical
//! classes (integers, strings, `#`-prefixed idents, words). A declared
//! literal such as `log` beats the word rule on a tie, while a longer word
//! (`logger`) wins over a shorter literal prefix, which gives the usual
//! word-boundary behaviour without a special case.

use std::collections::BTreeSet;
use std::fmt;

/// Lexemes that can never be declared as grammar literals because the
/// surrounding structure claims them. Longer literals merely containing a
/// bracket (like `-[` or `]>`) are fine; the lexer matches them first.
pub const RESERVED_LEXEMES: &[&str] = &[
    "=>", "|->", "<-", "[", "]", ",", "</", "//", ".K", ".List", ".Map", "==K", "<Int", "<=Int",
    "+Int",
];

/// Pattern words split by case: `Xs` is a variable, `x` an identifier
/// token. The convention keeps printed identifier tokens reparseable inside
/// rule text (defaults substitute them there) without any quoting.
pub fn word_is_variable(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase)
}

/// Words that can never be used as variable or sort names.
pub const RESERVED_WORDS: &[&str] = &[
    "syntax",
    "configuration",
    "rule",
    "requires",
    "orBool",
    "andBool",
    "notBool",
    "orDefault",
];

/// A body token together with the 1-based line it started on.
#[derive(Debug, Clone, PartialEq)]
pub struct PTok {
    pub tok: BTok,
    pub line: usize,
}

/// Tokens produced inside cell bodies, conditions, models, and defaults.
#[derive(Debug, Clone, PartialEq)]
pub enum BTok {
    /// Bare identifier: a variable in pattern position, an `Id` token in
    /// ground models.
    Word(String),
    /// `Name:Sort` written without spaces.
    Annot(String, String),
    /// `_` – an anonymous variable.
    Anon,
    /// `_:Sort`.
    AnonAnnot(String),
    /// `$PGM` with optional `:Sort` annotation.
    Pgm(Option<String>),
    /// Integer literal (canonical text, possibly negative).
    Int(String),
    /// String literal, unescaped.
    Str(String),
    /// `#`-prefixed identifier, e.g. `#red`.
    Hash(String),
    /// A literal declared by some production in the grammar.
    Lit(String),
    /// `?N?` placeholder.
    Placeholder(u32),
    /// `=>`
    Arrow,
    /// `|->`
    MapsTo,
    /// `<-`
    Insert,
    LBrack,
    RBrack,
    Comma,
    /// `(` / `)` when not claimed by the vocabulary.
    LParen,
    RParen,
    DotK,
    DotList,
    DotMap,
    /// Builtin comparison / arithmetic operator: `==K`, `<Int`, `<=Int`, `+Int`.
    Op(&'static str),
    /// `</name>` – never produced from inside a body span, but used when a
    /// lexer runs over a span that still contains cell markup.
    CellClose(String),
}

impl fmt::Display for BTok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BTok::Word(w) => write!(f, "{w}"),
            BTok::Annot(w, s) => write!(f, "{w}:{s}"),
            BTok::Anon => write!(f, "_"),
            BTok::AnonAnnot(s) => write!(f, "_:{s}"),
            BTok::Pgm(None) => write!(f, "$PGM"),
            BTok::Pgm(Some(s)) => write!(f, "$PGM:{s}"),
            BTok::Int(t) => write!(f, "{t}"),
            BTok::Str(t) => write!(f, "{t:?}"),
            BTok::Hash(t) => write!(f, "{t}"),
            BTok::Lit(t) => write!(f, "{t}"),
            BTok::Placeholder(n) => write!(f, "?{n}?"),
            BTok::Arrow => write!(f, "=>"),
            BTok::MapsTo => write!(f, "|->"),
            BTok::Insert => write!(f, "<-"),
            BTok::LBrack => write!(f, "["),
            BTok::RBrack => write!(f, "]"),
            BTok::Comma => write!(f, ","),
            BTok::LParen => write!(f, "("),
            BTok::RParen => write!(f, ")"),
            BTok::DotK => write!(f, ".K"),
            BTok::DotList => write!(f, ".List"),
            BTok::DotMap => write!(f, ".Map"),
            BTok::Op(op) => write!(f, "{op}"),
            BTok::CellClose(n) => write!(f, "</{n}>"),
        }
    }
}

/// Character-level scanner with line tracking.
pub struct Scanner {
    chars: Vec<char>,
    pub pos: usize,
    pub line: usize,
}

impl Scanner {
    pub fn new(src: &str) -> Self {
        Scanner::with_line(src, 1)
    }

    /// Scanner over an excerpt that starts on line `line` of the original
    /// file, so positions in errors stay file-relative.
    pub fn with_line(src: &str, line: usize) -> Self {
        Scanner {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    /// Text between two previously observed positions.
    pub fn slice(&self, from: usize, to: usize) -> String {
        self.chars[from..to].iter().collect()
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied();
        if let Some(c) = c {
            self.pos += 1;
            if c == '\n' {
                self.line += 1;
            }
        }
        c
    }

    /// True if the characters at the current position start with `s`.
    pub fn starts_with(&self, s: &str) -> bool {
        let mut i = self.pos;
        for ch in s.chars() {
            if self.chars.get(i) != Some(&ch) {
                return false;
            }
            i += 1;
        }
        true
    }

    pub fn advance(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    /// Skips whitespace and `//` line comments.
    pub fn skip_trivia(&mut self) {
        loop {
            while matches!(self.peek(), Some(c) if c.is_whitespace()) {
                self.bump();
            }
            if self.starts_with("//") {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                return;
            }
        }
    }

    /// Scans a quoted string literal (the opening quote must be current).
    /// Returns the unescaped contents.
    pub fn scan_string(&mut self) -> Result<String, (usize, String)> {
        let line = self.line;
        debug_assert_eq!(self.peek(), Some('"'));
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err((line, "unterminated string literal".into())),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    other => {
                        return Err((
                            line,
                            format!("bad escape in string literal: {:?}", other),
                        ))
                    }
                },
                Some('\n') => return Err((line, "unterminated string literal".into())),
                Some(c) => out.push(c),
            }
        }
    }

    /// Scans a word `[A-Za-z][A-Za-z0-9_]*` if one starts here.
    pub fn scan_word(&mut self) -> Option<String> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return None,
        }
        let mut w = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                w.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Some(w)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Vocabulary-aware body lexer over a span of source text.
pub struct Lexer<'v> {
    sc: Scanner,
    /// Grammar literals, longest first.
    vocab: Vec<&'v str>,
}

const OPS: &[&str] = &["==K", "<=Int", "<Int", "+Int"];

impl<'v> Lexer<'v> {
    pub fn new(src: &str, vocab: &'v BTreeSet<String>) -> Self {
        Lexer::with_line(src, 1, vocab)
    }

    pub fn with_line(src: &str, line: usize, vocab: &'v BTreeSet<String>) -> Self {
        let mut v: Vec<&'v str> = vocab.iter().map(|s| s.as_str()).collect();
        v.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        Lexer {
            sc: Scanner::with_line(src, line),
            vocab: v,
        }
    }

    /// Longest vocabulary literal matching at the current position, if any.
    fn vocab_match(&self) -> Option<&'v str> {
        for lit in &self.vocab {
            if self.sc.starts_with(lit) {
                // A word-shaped literal must end at a word boundary so that
                // `log` does not eat the front of `logger`.
                if lit.chars().all(is_word_char) {
                    if let Some(c) = self.sc.peek_at(lit.chars().count()) {
                        if is_word_char(c) {
                            continue;
                        }
                    }
                }
                return Some(lit);
            }
        }
        None
    }

    pub fn next(&mut self) -> Result<Option<PTok>, LexError> {
        self.scan_next()
    }

    /// Lexes the entire remaining input.
    pub fn all(mut self) -> Result<Vec<PTok>, LexError> {
        let mut out = Vec::new();
        while let Some(t) = self.next()? {
            out.push(t);
        }
        Ok(out)
    }

    fn scan_next(&mut self) -> Result<Option<PTok>, LexError> {
        self.sc.skip_trivia();
        if self.sc.at_end() {
            return Ok(None);
        }
        let line = self.sc.line;
        let tok = self.scan_tok(line)?;
        Ok(Some(PTok { tok, line }))
    }

    fn scan_tok(&mut self, line: usize) -> Result<BTok, LexError> {
        let c = self.sc.peek().unwrap();

        // Cell close marker: terminates body spans that still carry markup.
        if self.sc.starts_with("</") {
            self.sc.advance(2);
            let name = self.sc.scan_word().ok_or_else(|| LexError {
                line,
                message: "expected cell name after `</`".into(),
            })?;
            if self.sc.peek() != Some('>') {
                return Err(LexError {
                    line,
                    message: format!("expected `>` to close `</{name}`"),
                });
            }
            self.sc.bump();
            return Ok(BTok::CellClose(name));
        }

        if c == '"' {
            let s = self
                .sc
                .scan_string()
                .map_err(|(line, message)| LexError { line, message })?;
            return Ok(BTok::Str(s));
        }

        // Builtin operators, checked before the vocabulary so a grammar
        // cannot shadow them.
        for op in OPS {
            if self.sc.starts_with(op) {
                let after = self.sc.peek_at(op.chars().count());
                if !matches!(after, Some(a) if is_word_char(a)) {
                    self.sc.advance(op.chars().count());
                    return Ok(BTok::Op(op));
                }
            }
        }

        // `.K` / `.List` / `.Map` with a word boundary after.
        for (text, tok) in [
            (".List", BTok::DotList),
            (".Map", BTok::DotMap),
            (".K", BTok::DotK),
        ] {
            if self.sc.starts_with(text) {
                let after = self.sc.peek_at(text.len());
                if !matches!(after, Some(a) if is_word_char(a)) {
                    self.sc.advance(text.len());
                    return Ok(tok);
                }
            }
        }

        // Structural multi-char lexemes. `=>`, `|->`, `<-` are reserved and
        // never appear in vocabularies.
        if self.sc.starts_with("=>") {
            self.sc.advance(2);
            return Ok(BTok::Arrow);
        }
        if self.sc.starts_with("|->") {
            self.sc.advance(3);
            return Ok(BTok::MapsTo);
        }

        // Vocabulary literals compete with everything below by length.
        let vocab_hit = self.vocab_match();
        let vocab_len = vocab_hit.map(|l| l.chars().count()).unwrap_or(0);

        // `<-` loses only to a strictly longer vocabulary literal (e.g. `<-x`
        // is implausible, but a grammar could declare `<--`).
        if self.sc.starts_with("<-") && vocab_len <= 2 {
            self.sc.advance(2);
            return Ok(BTok::Insert);
        }

        // Placeholder `?N?` – only when `?` is immediately followed by
        // digits and a closing `?`, so a spaced-out literal `?` still lexes
        // as vocabulary.
        if c == '?' {
            let mut i = 1;
            let mut digits = String::new();
            while let Some(d) = self.sc.peek_at(i) {
                if d.is_ascii_digit() {
                    digits.push(d);
                    i += 1;
                } else {
                    break;
                }
            }
            if !digits.is_empty() && self.sc.peek_at(i) == Some('?') {
                self.sc.advance(i + 1);
                let n: u32 = digits.parse().map_err(|_| LexError {
                    line,
                    message: format!("placeholder index out of range: ?{digits}?"),
                })?;
                return Ok(BTok::Placeholder(n));
            }
        }

        // Integer literals (optionally negative). A longer vocabulary match
        // starting with the same characters wins.
        let int_len = {
            let mut i = 0;
            if c == '-' {
                i = 1;
            }
            let mut digits = 0;
            while let Some(d) = self.sc.peek_at(i) {
                if d.is_ascii_digit() {
                    digits += 1;
                    i += 1;
                } else {
                    break;
                }
            }
            if digits > 0 {
                i
            } else {
                0
            }
        };
        if int_len > 0 && int_len >= vocab_len {
            let mut text = String::new();
            for _ in 0..int_len {
                text.push(self.sc.bump().unwrap());
            }
            // Canonical decimal text: arithmetic works on 64-bit values, and
            // keeping tokens canonical makes textual equality and value
            // equality agree.
            let v: i64 = text.parse().map_err(|_| LexError {
                line,
                message: format!("integer literal out of range: {text}"),
            })?;
            return Ok(BTok::Int(v.to_string()));
        }

        // `#`-prefixed identifier.
        if c == '#' {
            let mut i = 1;
            let mut name = String::from("#");
            while let Some(d) = self.sc.peek_at(i) {
                if is_word_char(d) {
                    name.push(d);
                    i += 1;
                } else {
                    break;
                }
            }
            if name.len() > 1 && i >= vocab_len {
                self.sc.advance(i);
                return Ok(BTok::Hash(name));
            }
        }

        // `$PGM` with optional annotation.
        if self.sc.starts_with("$PGM") {
            self.sc.advance(4);
            if self.sc.peek() == Some(':') {
                self.sc.bump();
                let sort = self.sc.scan_word().ok_or_else(|| LexError {
                    line,
                    message: "expected sort name after `$PGM:`".into(),
                })?;
                return Ok(BTok::Pgm(Some(sort)));
            }
            return Ok(BTok::Pgm(None));
        }

        // Words: variables, `Id` tokens, reserved words. A vocabulary
        // literal of equal or greater length wins the tie, which is what
        // makes declared keyword-shaped literals (like `skip`) literals.
        if c.is_ascii_alphabetic() {
            let mut i = 0;
            let mut word = String::new();
            while let Some(d) = self.sc.peek_at(i) {
                if is_word_char(d) {
                    word.push(d);
                    i += 1;
                } else {
                    break;
                }
            }
            if vocab_len >= i {
                let lit = vocab_hit.unwrap();
                self.sc.advance(vocab_len);
                return Ok(BTok::Lit(lit.to_string()));
            }
            self.sc.advance(i);
            // Adjacent `:Sort` annotation.
            if self.sc.peek() == Some(':')
                && matches!(self.sc.peek_at(1), Some(a) if a.is_ascii_alphabetic())
            {
                self.sc.bump();
                let sort = self.sc.scan_word().unwrap();
                return Ok(BTok::Annot(word, sort));
            }
            return Ok(BTok::Word(word));
        }

        // Anonymous variable.
        if c == '_' && !matches!(self.sc.peek_at(1), Some(a) if is_word_char(a)) {
            self.sc.bump();
            if self.sc.peek() == Some(':')
                && matches!(self.sc.peek_at(1), Some(a) if a.is_ascii_alphabetic())
            {
                self.sc.bump();
                let sort = self.sc.scan_word().unwrap();
                return Ok(BTok::AnonAnnot(sort));
            }
            return Ok(BTok::Anon);
        }

        // Remaining single-char structure. A strictly longer vocabulary
        // literal starting here (like `-[` or `]>`) wins; `[`, `]`, `,`
        // themselves are reserved and cannot be declared as literals, while
        // `(`/`)` may be (then they arrive as `Lit`).
        let structural = match c {
            '[' => Some(BTok::LBrack),
            ']' => Some(BTok::RBrack),
            ',' => Some(BTok::Comma),
            '(' => Some(BTok::LParen),
            ')' => Some(BTok::RParen),
            _ => None,
        };
        if let Some(tok) = structural {
            if vocab_len <= 1 {
                if vocab_len == 1 && vocab_hit.map(|l| l.starts_with(c)) == Some(true) {
                    self.sc.bump();
                    return Ok(BTok::Lit(c.to_string()));
                }
                self.sc.bump();
                return Ok(tok);
            }
        }

        if let Some(lit) = vocab_hit {
            self.sc.advance(vocab_len);
            return Ok(BTok::Lit(lit.to_string()));
        }

        Err(LexError {
            line,
            message: format!("unexpected character {c:?}"),
        })
    }
}

/// A lexing failure with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}
