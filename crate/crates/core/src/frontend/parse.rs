//! Definition, model, and defaults parsing.
//!
//! A definition file is first split into items at the reserved keywords
//! `syntax` / `configuration` / `rule` (a scan that only has to respect
//! strings and comments). Syntax items build the grammar, which fixes the
//! literal vocabulary; cell bodies and conditions are then lexed against
//! that vocabulary and parsed structurally, falling back to the Earley
//! parser for maximal runs of user-syntax tokens.

use std::collections::BTreeSet;

use crate::grammar::{Grammar, ProdItem};
use crate::term::{builtin, ElemsAt, Sort, Term, VarKind};

use super::earley::{parse_sorts, UTok, UTokAt};
use super::lex::{word_is_variable, BTok, Lexer, PTok, Scanner, RESERVED_LEXEMES, RESERVED_WORDS};
use super::{
    CellDecl, Definition, FrontendError, RuleDecl, DEFAULT_PRIORITY, INPUT_MARKER, OUTPUT_ATTR,
};

fn syn(line: usize, message: impl Into<String>) -> FrontendError {
    FrontendError::Syntax {
        line,
        message: message.into(),
    }
}

/// All literal lexemes of a grammar: the vocabulary the body lexer matches
/// longest-first.
pub(crate) fn vocabulary(g: &Grammar) -> BTreeSet<String> {
    let mut v = BTreeSet::new();
    for p in &g.productions {
        for item in &p.items {
            if let ProdItem::Literal(l) = item {
                v.insert(l.clone());
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Item splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum ItemKind {
    Syntax,
    Configuration,
    Rule,
}

struct Chunk {
    kind: ItemKind,
    /// Line of the keyword.
    line: usize,
    /// Item text after the keyword.
    text: String,
    /// Line the text starts on (same as `line`).
    text_line: usize,
}

/// Splits a file into items at top-level keywords, skipping strings and
/// comments. Anything before the first keyword must be trivia.
fn split_items(src: &str) -> Result<Vec<Chunk>, FrontendError> {
    let mut sc = Scanner::new(src);
    let mut chunks: Vec<Chunk> = Vec::new();
    // (kind, line, start position of item text)
    let mut open: Option<(ItemKind, usize, usize)> = None;

    loop {
        sc.skip_trivia();
        if sc.at_end() {
            break;
        }
        let line = sc.line;
        let start = sc.pos;
        match sc.peek() {
            Some('"') => {
                if open.is_none() {
                    return Err(syn(
                        line,
                        "expected `syntax`, `configuration`, or `rule`".to_string(),
                    ));
                }
                sc.scan_string()
                    .map_err(|(line, message)| syn(line, message))?;
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let word = sc.scan_word().unwrap();
                let kind = match word.as_str() {
                    "syntax" => Some(ItemKind::Syntax),
                    "configuration" => Some(ItemKind::Configuration),
                    "rule" => Some(ItemKind::Rule),
                    _ => None,
                };
                match kind {
                    Some(kind) => {
                        if let Some((k, l, s)) = open.take() {
                            chunks.push(Chunk {
                                kind: k,
                                line: l,
                                text: sc.slice(s, start),
                                text_line: l,
                            });
                        }
                        open = Some((kind, line, sc.pos));
                    }
                    None if open.is_none() => {
                        return Err(syn(
                            line,
                            format!(
                                "expected `syntax`, `configuration`, or `rule`, found `{word}`"
                            ),
                        ));
                    }
                    None => {}
                }
            }
            Some(_) => {
                if open.is_none() {
                    return Err(syn(
                        line,
                        "expected `syntax`, `configuration`, or `rule`".to_string(),
                    ));
                }
                sc.bump();
            }
            None => break,
        }
    }
    if let Some((k, l, s)) = open.take() {
        let end = sc.pos;
        chunks.push(Chunk {
            kind: k,
            line: l,
            text: sc.slice(s, end),
            text_line: l,
        });
    }
    Ok(chunks)
}

// ---------------------------------------------------------------------------
// Syntax declarations
// ---------------------------------------------------------------------------

fn check_literal(lit: &str, line: usize) -> Result<(), FrontendError> {
    if lit.is_empty() {
        return Err(syn(line, "empty literal in production"));
    }
    if lit.chars().any(|c| c.is_whitespace()) {
        return Err(syn(line, format!("literal {lit:?} contains whitespace")));
    }
    for bad in ["//", "</", "=>", "|->", "\""] {
        if lit.contains(bad) {
            return Err(syn(line, format!("literal {lit:?} contains reserved `{bad}`")));
        }
    }
    if RESERVED_LEXEMES.contains(&lit) {
        return Err(syn(line, format!("literal {lit:?} is reserved")));
    }
    if RESERVED_WORDS.contains(&lit) {
        return Err(syn(line, format!("literal {lit:?} is a reserved word")));
    }
    if lit.starts_with('#') || lit.starts_with('$') {
        return Err(syn(
            line,
            format!("literal {lit:?} may not start with `#` or `$`"),
        ));
    }
    Ok(())
}

fn parse_syntax_chunk(chunk: &Chunk) -> Result<(Sort, Vec<Vec<ProdItem>>), FrontendError> {
    let mut sc = Scanner::with_line(&chunk.text, chunk.text_line);
    sc.skip_trivia();
    let line = sc.line;
    let sort_name = sc
        .scan_word()
        .ok_or_else(|| syn(line, "expected sort name after `syntax`"))?;
    if RESERVED_WORDS.contains(&sort_name.as_str()) {
        return Err(syn(line, format!("`{sort_name}` cannot be a sort name")));
    }
    let sort = Sort::new(&sort_name);
    sc.skip_trivia();
    if sc.at_end() {
        // Token sort: declared without productions.
        return Ok((sort, Vec::new()));
    }
    if !sc.starts_with("::=") {
        return Err(syn(sc.line, "expected `::=` or end of declaration"));
    }
    sc.advance(3);

    let mut alts: Vec<Vec<ProdItem>> = Vec::new();
    let mut cur: Vec<ProdItem> = Vec::new();
    loop {
        sc.skip_trivia();
        if sc.at_end() {
            break;
        }
        let line = sc.line;
        match sc.peek() {
            Some('"') => {
                let lit = sc
                    .scan_string()
                    .map_err(|(line, message)| syn(line, message))?;
                check_literal(&lit, line)?;
                cur.push(ProdItem::Literal(lit));
            }
            Some('|') => {
                sc.bump();
                if cur.is_empty() {
                    return Err(syn(line, "empty alternative in syntax declaration"));
                }
                alts.push(std::mem::take(&mut cur));
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let w = sc.scan_word().unwrap();
                cur.push(ProdItem::Nt(Sort::new(&w)));
            }
            Some(c) => {
                return Err(syn(line, format!("unexpected {c:?} in syntax declaration")));
            }
            None => break,
        }
    }
    if cur.is_empty() {
        return Err(syn(sc.line, "empty alternative in syntax declaration"));
    }
    alts.push(cur);
    Ok((sort, alts))
}

// ---------------------------------------------------------------------------
// Cell scanning
// ---------------------------------------------------------------------------

struct CellSpan {
    name: String,
    attrs: Vec<String>,
    body: String,
    body_line: usize,
    line: usize,
}

/// Scans `<name attrs> ... </name>` at the current position, if a cell
/// starts here. The body is returned raw; only strings and comments are
/// interpreted while looking for the close tag.
fn scan_cell(sc: &mut Scanner) -> Result<Option<CellSpan>, FrontendError> {
    sc.skip_trivia();
    if sc.peek() != Some('<') || sc.starts_with("</") {
        return Ok(None);
    }
    let line = sc.line;
    sc.bump();
    let name = sc
        .scan_word()
        .ok_or_else(|| syn(line, "expected cell name after `<`"))?;
    let mut attrs = Vec::new();
    loop {
        sc.skip_trivia();
        match sc.peek() {
            Some('>') => {
                sc.bump();
                break;
            }
            Some(c) if c.is_ascii_alphabetic() => {
                attrs.push(sc.scan_word().unwrap());
            }
            _ => return Err(syn(sc.line, format!("expected `>` to close `<{name}`"))),
        }
    }
    let body_start = sc.pos;
    let body_line = sc.line;
    loop {
        if sc.at_end() {
            return Err(syn(line, format!("cell <{name}> is never closed")));
        }
        if sc.starts_with("//") {
            while let Some(c) = sc.peek() {
                if c == '\n' {
                    break;
                }
                sc.bump();
            }
            continue;
        }
        if sc.peek() == Some('"') {
            sc.scan_string()
                .map_err(|(line, message)| syn(line, message))?;
            continue;
        }
        if sc.starts_with("</") {
            let body_end = sc.pos;
            let close_line = sc.line;
            sc.advance(2);
            let close = sc
                .scan_word()
                .ok_or_else(|| syn(close_line, "expected cell name after `</`"))?;
            if close != name {
                return Err(syn(
                    close_line,
                    format!("cell <{name}> closed by </{close}>"),
                ));
            }
            if sc.peek() != Some('>') {
                return Err(syn(close_line, format!("expected `>` after `</{close}`")));
            }
            sc.bump();
            return Ok(Some(CellSpan {
                name,
                attrs,
                body: sc.slice(body_start, body_end),
                body_line,
                line,
            }));
        }
        sc.bump();
    }
}

// ---------------------------------------------------------------------------
// Cell bodies
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct BodyCtx {
    allow_pgm: bool,
    allow_rewrite: bool,
}

struct BodyParser<'g> {
    g: &'g Grammar,
    ctx: BodyCtx,
    anon: usize,
}

#[derive(Debug)]
enum Atom {
    T(Term),
    /// Bracket group parsed into elements.
    Group(Vec<Term>),
    /// Bracket group with a top-level `<-`: a map update.
    Update(Term, Term),
    MapsToMark,
}

fn is_structural(t: &BTok) -> bool {
    matches!(
        t,
        BTok::Arrow
            | BTok::MapsTo
            | BTok::Insert
            | BTok::LBrack
            | BTok::RBrack
            | BTok::Comma
            | BTok::DotK
            | BTok::DotList
            | BTok::DotMap
            | BTok::Pgm(_)
            | BTok::Op(_)
            | BTok::CellClose(_)
    )
}

impl<'g> BodyParser<'g> {
    fn new(g: &'g Grammar, ctx: BodyCtx) -> Self {
        BodyParser { g, ctx, anon: 0 }
    }

    fn check_sort_declared(&self, s: &Sort, line: usize) -> Result<(), FrontendError> {
        if self.g.is_declared(s) {
            Ok(())
        } else {
            Err(FrontendError::UnknownSort {
                line,
                sort: s.0.clone(),
            })
        }
    }

    /// Entry point: a full cell body, with an optional top-level rewrite.
    fn parse_body(&mut self, toks: &[PTok], line: usize) -> Result<Term, FrontendError> {
        if toks.is_empty() {
            return Err(syn(line, "empty cell body"));
        }
        self.parse_rw(toks)
    }

    /// Splits on a top-level `=>` if present.
    fn parse_rw(&mut self, toks: &[PTok]) -> Result<Term, FrontendError> {
        let mut depth = 0usize;
        let mut arrow: Option<usize> = None;
        for (i, t) in toks.iter().enumerate() {
            match &t.tok {
                BTok::LBrack => depth += 1,
                BTok::RBrack => {
                    depth = depth
                        .checked_sub(1)
                        .ok_or_else(|| syn(t.line, "unmatched `]`"))?;
                }
                BTok::Arrow if depth == 0 => {
                    if arrow.is_some() {
                        return Err(syn(t.line, "more than one top-level `=>`"));
                    }
                    arrow = Some(i);
                }
                _ => {}
            }
        }
        match arrow {
            None => self.parse_ops(toks),
            Some(i) => {
                if !self.ctx.allow_rewrite {
                    return Err(syn(toks[i].line, "`=>` is not allowed here"));
                }
                if i == 0 || i == toks.len() - 1 {
                    return Err(syn(toks[i].line, "`=>` needs both sides"));
                }
                let lhs = self.parse_ops(&toks[..i])?;
                let rhs = self.parse_ops(&toks[i + 1..])?;
                Ok(Term::rewrite(lhs, rhs))
            }
        }
    }

    /// Splits on top-level builtin operators (left-associative), then falls
    /// through to plain sequences.
    fn parse_ops(&mut self, toks: &[PTok]) -> Result<Term, FrontendError> {
        let mut depth = 0usize;
        let mut last: Option<(usize, &'static str)> = None;
        for (i, t) in toks.iter().enumerate() {
            match &t.tok {
                BTok::LBrack => depth += 1,
                BTok::RBrack => depth = depth.saturating_sub(1),
                BTok::Op(op) if depth == 0 => last = Some((i, op)),
                _ => {}
            }
        }
        if let Some((i, op)) = last {
            if i == 0 || i == toks.len() - 1 {
                return Err(syn(toks[i].line, format!("`{op}` needs both operands")));
            }
            let lhs = self.parse_ops(&toks[..i])?;
            let rhs = self.parse_seq(&toks[i + 1..])?;
            let prod = match op {
                "==K" => builtin::EQ_K,
                "<Int" => builtin::LT_INT,
                "<=Int" => builtin::LE_INT,
                "+Int" => builtin::PLUS_INT,
                _ => unreachable!("lexer only emits known operators"),
            };
            return Ok(Term::apply(prod, vec![lhs, rhs]));
        }
        self.parse_seq(toks)
    }

    /// A juxtaposition of atoms: a single term, a list pattern, a map
    /// pattern, or a chain of map updates.
    fn parse_seq(&mut self, toks: &[PTok]) -> Result<Term, FrontendError> {
        let line = toks.first().map(|t| t.line).unwrap_or(1);
        let atoms = self.assemble(toks)?;
        if atoms.is_empty() {
            return Err(syn(line, "empty term"));
        }

        // Single atom.
        if atoms.len() == 1 {
            return Ok(match atoms.into_iter().next().unwrap() {
                Atom::T(t) => t,
                Atom::Group(elems) => Term::list(elems),
                Atom::Update(..) => return Err(syn(line, "map update needs a map to apply to")),
                Atom::MapsToMark => return Err(syn(line, "`|->` needs a key and a value")),
            });
        }

        // Map pattern: any top-level `|->`.
        if atoms.iter().any(|a| matches!(a, Atom::MapsToMark)) {
            return self.build_map(atoms, line);
        }

        // Update chain: `M[k <- v][k2 <- v2]`.
        if atoms.iter().skip(1).all(|a| matches!(a, Atom::Update(..))) {
            let mut it = atoms.into_iter();
            let mut acc = match it.next().unwrap() {
                Atom::T(t) => t,
                Atom::Group(elems) => Term::list(elems),
                _ => return Err(syn(line, "map update needs a map to apply to")),
            };
            for a in it {
                if let Atom::Update(k, v) = a {
                    acc = Term::apply(builtin::MAP_UPDATE, vec![acc, k, v]);
                }
            }
            return Ok(acc);
        }

        // List pattern: groups of elements with at most one rest variable.
        self.build_list(atoms, line)
    }

    fn build_map(&mut self, atoms: Vec<Atom>, line: usize) -> Result<Term, FrontendError> {
        let mut idx = 0usize;
        let mut rest: Option<Box<Term>> = None;
        if matches!(atoms.first(), Some(Atom::T(Term::Variable { .. })))
            && !matches!(atoms.get(1), Some(Atom::MapsToMark))
        {
            if let Atom::T(v) = &atoms[0] {
                rest = Some(Box::new(v.clone()));
            }
            idx = 1;
        }
        let mut binds: Vec<(Term, Term)> = Vec::new();
        while idx < atoms.len() {
            let key = match &atoms[idx] {
                Atom::T(t) => t.clone(),
                Atom::Group(elems) => Term::list(elems.clone()),
                _ => return Err(syn(line, "expected a key before `|->`")),
            };
            if !matches!(atoms.get(idx + 1), Some(Atom::MapsToMark)) {
                return Err(syn(line, "expected `|->` after map key"));
            }
            let value = match atoms.get(idx + 2) {
                Some(Atom::T(t)) => t.clone(),
                Some(Atom::Group(elems)) => Term::list(elems.clone()),
                _ => return Err(syn(line, "expected a value after `|->`")),
            };
            binds.push((key, value));
            idx += 3;
        }
        if binds.is_empty() {
            return Err(syn(line, "`|->` needs a key and a value"));
        }
        Ok(Term::Map { binds, rest })
    }

    fn build_list(&mut self, atoms: Vec<Atom>, line: usize) -> Result<Term, FrontendError> {
        let mut elems: Vec<Term> = Vec::new();
        let mut rest: Option<Term> = None;
        let mut at = ElemsAt::Front;
        let mut seen_group = false;
        for a in atoms {
            match a {
                Atom::Group(es) => {
                    if rest.is_some() && seen_group {
                        return Err(syn(line, "a list can spread around one variable only"));
                    }
                    seen_group = true;
                    elems.extend(es);
                }
                Atom::T(v @ Term::Variable { .. }) => {
                    if rest.is_some() {
                        return Err(syn(line, "more than one list rest variable"));
                    }
                    at = if seen_group {
                        ElemsAt::Front
                    } else {
                        ElemsAt::Back
                    };
                    rest = Some(v);
                }
                Atom::T(t) => {
                    return Err(syn(
                        line,
                        format!("cannot juxtapose `{t}` here; did you mean a list `[...]`?"),
                    ));
                }
                Atom::Update(..) => {
                    return Err(syn(line, "map update must directly follow its map"));
                }
                Atom::MapsToMark => unreachable!("maps handled before lists"),
            }
        }
        if !seen_group {
            return Err(syn(line, "expected list elements in `[...]`"));
        }
        match rest {
            None => Ok(Term::list(elems)),
            Some(r) => {
                if elems.is_empty() {
                    Ok(r)
                } else {
                    Ok(Term::List {
                        elems,
                        rest: Some(Box::new(r)),
                        at,
                    })
                }
            }
        }
    }

    /// Groups a token slice into atoms: bracket groups, structural markers,
    /// and Earley-parsed runs of user syntax.
    fn assemble(&mut self, toks: &[PTok]) -> Result<Vec<Atom>, FrontendError> {
        let mut atoms: Vec<Atom> = Vec::new();
        let mut i = 0usize;
        while i < toks.len() {
            let t = &toks[i];
            match &t.tok {
                BTok::LBrack => {
                    let close = matching_bracket(toks, i)?;
                    let inner = &toks[i + 1..close];
                    atoms.push(self.parse_group(inner, t.line)?);
                    i = close + 1;
                }
                BTok::RBrack => return Err(syn(t.line, "unmatched `]`")),
                BTok::Comma => return Err(syn(t.line, "`,` is only meaningful inside `[...]`")),
                BTok::MapsTo => {
                    atoms.push(Atom::MapsToMark);
                    i += 1;
                }
                BTok::Insert => return Err(syn(t.line, "`<-` is only meaningful inside `[...]`")),
                BTok::DotK => {
                    atoms.push(Atom::T(Term::empty_k()));
                    i += 1;
                }
                BTok::DotList => {
                    atoms.push(Atom::T(Term::empty_list()));
                    i += 1;
                }
                BTok::DotMap => {
                    atoms.push(Atom::T(Term::empty_map()));
                    i += 1;
                }
                BTok::Pgm(sort) => {
                    if !self.ctx.allow_pgm {
                        return Err(syn(t.line, "$PGM may only appear in the configuration"));
                    }
                    let sort = sort.clone().ok_or_else(|| {
                        syn(t.line, "the input marker needs a sort: $PGM:Sort")
                    })?;
                    let s = Sort::new(&sort);
                    self.check_sort_declared(&s, t.line)?;
                    atoms.push(Atom::T(Term::Variable {
                        name: INPUT_MARKER.into(),
                        sort: s,
                        kind: VarKind::Named,
                    }));
                    i += 1;
                }
                BTok::Arrow => return Err(syn(t.line, "unexpected `=>`")),
                BTok::Op(op) => return Err(syn(t.line, format!("unexpected `{op}`"))),
                BTok::CellClose(n) => return Err(syn(t.line, format!("unexpected `</{n}>`"))),
                _ => {
                    // A maximal run of user-syntax tokens.
                    let mut j = i;
                    while j < toks.len() && !is_structural(&toks[j].tok) {
                        j += 1;
                    }
                    atoms.push(Atom::T(self.parse_run(&toks[i..j])?));
                    i = j;
                }
            }
        }
        Ok(atoms)
    }

    /// Parses the inside of a bracket group: a map update (top-level `<-`)
    /// or comma-separated elements.
    fn parse_group(&mut self, inner: &[PTok], line: usize) -> Result<Atom, FrontendError> {
        let mut depth = 0usize;
        let mut insert_at: Option<usize> = None;
        for (i, t) in inner.iter().enumerate() {
            match &t.tok {
                BTok::LBrack => depth += 1,
                BTok::RBrack => depth = depth.saturating_sub(1),
                BTok::Insert if depth == 0 => {
                    if insert_at.is_some() {
                        return Err(syn(t.line, "more than one `<-` in an update"));
                    }
                    insert_at = Some(i);
                }
                _ => {}
            }
        }
        if let Some(i) = insert_at {
            if i == 0 || i == inner.len() - 1 {
                return Err(syn(line, "`<-` needs a key and a value"));
            }
            let key = self.parse_rw(&inner[..i])?;
            let value = self.parse_rw(&inner[i + 1..])?;
            return Ok(Atom::Update(key, value));
        }
        let mut elems = Vec::new();
        for part in split_commas(inner)? {
            if part.is_empty() {
                return Err(syn(line, "empty list element"));
            }
            elems.push(self.parse_rw(part)?);
        }
        Ok(Atom::Group(elems))
    }

    /// A run of user-syntax tokens: single leaves directly, anything longer
    /// through the grammar.
    fn parse_run(&mut self, run: &[PTok]) -> Result<Term, FrontendError> {
        debug_assert!(!run.is_empty());
        let line = run[0].line;
        if run.len() == 1 {
            match &run[0].tok {
                BTok::Word(w) => return self.leaf_word(w, line),
                BTok::Annot(w, s) => return self.leaf_annot(w, s, line),
                BTok::Anon => return Ok(self.fresh_anon(None)),
                BTok::AnonAnnot(s) => {
                    let sort = Sort::new(s);
                    self.check_sort_declared(&sort, line)?;
                    return Ok(self.fresh_anon(Some(sort)));
                }
                BTok::Placeholder(n) => {
                    return Ok(Term::Variable {
                        name: format!("?{n}?"),
                        sort: Sort::k(),
                        kind: VarKind::Placeholder(*n),
                    })
                }
                BTok::Int(t) => {
                    return Ok(Term::Token {
                        sort: Sort::int(),
                        text: t.clone(),
                    })
                }
                BTok::Str(t) => {
                    return Ok(Term::Token {
                        sort: Sort::string(),
                        text: t.clone(),
                    })
                }
                BTok::Hash(t) => return self.leaf_hash(t, line),
                BTok::Lit(_) => {} // needs grammar context, fall through
                other => return Err(syn(line, format!("unexpected `{other}`"))),
            }
        }
        let utoks = self.pattern_utoks(run)?;
        let starts: Vec<Sort> = self.g.declared.clone();
        parse_sorts(self.g, &utoks, &starts)
    }

    fn leaf_word(&mut self, w: &str, line: usize) -> Result<Term, FrontendError> {
        if RESERVED_WORDS.contains(&w) {
            return Err(syn(line, format!("`{w}` is reserved and cannot be a variable")));
        }
        if w == "true" || w == "false" {
            return Ok(Term::bool(w == "true"));
        }
        if word_is_variable(w) {
            Ok(Term::var(w, Sort::k()))
        } else {
            Ok(Term::Token {
                sort: Sort::id(),
                text: w.to_string(),
            })
        }
    }

    fn leaf_annot(&mut self, w: &str, s: &str, line: usize) -> Result<Term, FrontendError> {
        if RESERVED_WORDS.contains(&w) {
            return Err(syn(line, format!("`{w}` is reserved and cannot be a variable")));
        }
        if !word_is_variable(w) {
            return Err(syn(
                line,
                format!("`{w}:{s}` annotates a variable, but variables start with an uppercase letter"),
            ));
        }
        let sort = Sort::new(s);
        self.check_sort_declared(&sort, line)?;
        Ok(Term::var(w, sort))
    }

    fn leaf_hash(&mut self, t: &str, line: usize) -> Result<Term, FrontendError> {
        let mut it = self.g.token_sorts.iter();
        match (it.next(), it.next()) {
            (Some(s), None) => Ok(Term::Token {
                sort: s.clone(),
                text: t.to_string(),
            }),
            (None, _) => Err(FrontendError::UntypedTerm {
                line,
                message: format!("`{t}` needs a token sort, but none is declared"),
            }),
            (Some(_), Some(_)) => Err(FrontendError::UntypedTerm {
                line,
                message: format!(
                    "`{t}` is ambiguous here: several token sorts are declared, use it inside \
                     grammar context"
                ),
            }),
        }
    }

    fn fresh_anon(&mut self, sort: Option<Sort>) -> Term {
        let name = format!("_{}", self.anon);
        self.anon += 1;
        Term::Variable {
            name,
            sort: sort.unwrap_or_else(Sort::k),
            kind: VarKind::Anonymous,
        }
    }

    /// Converts a token run for the Earley parser, assigning hidden names to
    /// anonymous variables in source order.
    fn pattern_utoks(&mut self, run: &[PTok]) -> Result<Vec<UTokAt>, FrontendError> {
        let mut out = Vec::with_capacity(run.len());
        for t in run {
            let u = match &t.tok {
                BTok::Word(w) => {
                    if RESERVED_WORDS.contains(&w.as_str()) {
                        return Err(syn(
                            t.line,
                            format!("`{w}` is reserved and cannot be a variable"),
                        ));
                    }
                    if w == "true" || w == "false" {
                        UTok::Bool(w.clone())
                    } else if word_is_variable(w) {
                        UTok::Var {
                            name: w.clone(),
                            sort: None,
                            kind: VarKind::Named,
                        }
                    } else {
                        UTok::Id(w.clone())
                    }
                }
                BTok::Annot(w, s) => {
                    if RESERVED_WORDS.contains(&w.as_str()) {
                        return Err(syn(
                            t.line,
                            format!("`{w}` is reserved and cannot be a variable"),
                        ));
                    }
                    if !word_is_variable(w) {
                        return Err(syn(
                            t.line,
                            format!(
                                "`{w}:{s}` annotates a variable, but variables start with an \
                                 uppercase letter"
                            ),
                        ));
                    }
                    let sort = Sort::new(s);
                    self.check_sort_declared(&sort, t.line)?;
                    UTok::Var {
                        name: w.clone(),
                        sort: Some(sort),
                        kind: VarKind::Named,
                    }
                }
                BTok::Anon => {
                    let name = format!("_{}", self.anon);
                    self.anon += 1;
                    UTok::Var {
                        name,
                        sort: None,
                        kind: VarKind::Anonymous,
                    }
                }
                BTok::AnonAnnot(s) => {
                    let sort = Sort::new(s);
                    self.check_sort_declared(&sort, t.line)?;
                    let name = format!("_{}", self.anon);
                    self.anon += 1;
                    UTok::Var {
                        name,
                        sort: Some(sort),
                        kind: VarKind::Anonymous,
                    }
                }
                BTok::Placeholder(n) => UTok::Var {
                    name: format!("?{n}?"),
                    sort: None,
                    kind: VarKind::Placeholder(*n),
                },
                BTok::Int(x) => UTok::Int(x.clone()),
                BTok::Str(x) => UTok::Str(x.clone()),
                BTok::Hash(x) => UTok::Hash(x.clone()),
                BTok::Lit(x) => UTok::Lit(x.clone()),
                other => return Err(syn(t.line, format!("unexpected `{other}`"))),
            };
            out.push(UTokAt { tok: u, line: t.line });
        }
        Ok(out)
    }
}

fn matching_bracket(toks: &[PTok], open: usize) -> Result<usize, FrontendError> {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open) {
        match &t.tok {
            BTok::LBrack => depth += 1,
            BTok::RBrack => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
    }
    Err(syn(toks[open].line, "unmatched `[`"))
}

fn split_commas(toks: &[PTok]) -> Result<Vec<&[PTok]>, FrontendError> {
    if toks.is_empty() {
        return Ok(Vec::new());
    }
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, t) in toks.iter().enumerate() {
        match &t.tok {
            BTok::LBrack => depth += 1,
            BTok::RBrack => depth = depth.saturating_sub(1),
            BTok::Comma if depth == 0 => {
                parts.push(&toks[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&toks[start..]);
    Ok(parts)
}

// ---------------------------------------------------------------------------
// Side conditions
// ---------------------------------------------------------------------------

struct CondParser<'g, 'p> {
    bp: &'p mut BodyParser<'g>,
    toks: &'p [PTok],
    pos: usize,
}

impl<'g, 'p> CondParser<'g, 'p> {
    fn peek(&self) -> Option<&BTok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(1)
    }

    fn bump(&mut self) -> Option<&BTok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(BTok::Word(x)) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Term, FrontendError> {
        let mut lhs = self.and_level()?;
        while self.eat_word("orBool") {
            let rhs = self.and_level()?;
            lhs = Term::apply(builtin::OR_BOOL, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn and_level(&mut self) -> Result<Term, FrontendError> {
        let mut lhs = self.not_level()?;
        while self.eat_word("andBool") {
            let rhs = self.not_level()?;
            lhs = Term::apply(builtin::AND_BOOL, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn not_level(&mut self) -> Result<Term, FrontendError> {
        if self.eat_word("notBool") {
            let inner = self.not_level()?;
            return Ok(Term::apply(builtin::NOT_BOOL, vec![inner]));
        }
        self.cmp_level()
    }

    fn cmp_level(&mut self) -> Result<Term, FrontendError> {
        let lhs = self.sum_level()?;
        let op = match self.peek() {
            Some(BTok::Op(op @ ("==K" | "<Int" | "<=Int"))) => {
                let op = *op;
                self.pos += 1;
                op
            }
            _ => return Ok(lhs),
        };
        let rhs = self.sum_level()?;
        let prod = match op {
            "==K" => builtin::EQ_K,
            "<Int" => builtin::LT_INT,
            "<=Int" => builtin::LE_INT,
            _ => unreachable!(),
        };
        Ok(Term::apply(prod, vec![lhs, rhs]))
    }

    fn sum_level(&mut self) -> Result<Term, FrontendError> {
        let mut lhs = self.postfix()?;
        while matches!(self.peek(), Some(BTok::Op("+Int"))) {
            self.pos += 1;
            let rhs = self.postfix()?;
            lhs = Term::apply(builtin::PLUS_INT, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    /// A primary with optional map-lookup postfix: `M[KEY] orDefault D`,
    /// recognized only after a variable and only when the key itself is a
    /// bracket group (`M[[...]] orDefault D` as printed).
    fn postfix(&mut self) -> Result<Term, FrontendError> {
        let p = self.primary()?;
        let is_var = matches!(p, Term::Variable { .. });
        let mut acc = p;
        while is_var
            && matches!(self.peek(), Some(BTok::LBrack))
            && matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(BTok::LBrack))
        {
            self.pos += 1; // outer `[`
            let key = self.expr()?;
            match self.bump() {
                Some(BTok::RBrack) => {}
                _ => return Err(syn(self.line(), "expected `]` after lookup key")),
            }
            if !self.eat_word("orDefault") {
                return Err(syn(self.line(), "expected `orDefault` after lookup"));
            }
            let dflt = self.primary()?;
            acc = Term::apply(builtin::LOOKUP_OR_DEFAULT, vec![acc, key, dflt]);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> Result<Term, FrontendError> {
        let line = self.line();
        let tok = self
            .bump()
            .ok_or_else(|| syn(line, "condition ends unexpectedly"))?
            .clone();
        match tok {
            BTok::Word(w) => self.bp.leaf_word(&w, line),
            BTok::Annot(w, s) => self.bp.leaf_annot(&w, &s, line),
            BTok::Placeholder(n) => Ok(Term::Variable {
                name: format!("?{n}?"),
                sort: Sort::k(),
                kind: VarKind::Placeholder(n),
            }),
            BTok::Int(t) => Ok(Term::Token {
                sort: Sort::int(),
                text: t,
            }),
            BTok::Str(t) => Ok(Term::Token {
                sort: Sort::string(),
                text: t,
            }),
            BTok::Hash(t) => self.bp.leaf_hash(&t, line),
            BTok::DotK => Ok(Term::empty_k()),
            BTok::DotList => Ok(Term::empty_list()),
            BTok::DotMap => Ok(Term::empty_map()),
            BTok::LBrack => {
                let mut elems = Vec::new();
                if matches!(self.peek(), Some(BTok::RBrack)) {
                    self.pos += 1;
                    return Ok(Term::list(elems));
                }
                loop {
                    elems.push(self.expr()?);
                    match self.bump() {
                        Some(BTok::RBrack) => break,
                        Some(BTok::Comma) => continue,
                        _ => return Err(syn(self.line(), "expected `,` or `]` in list")),
                    }
                }
                Ok(Term::list(elems))
            }
            BTok::LParen => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(BTok::RParen) => Ok(inner),
                    Some(BTok::Lit(l)) if l == ")" => Ok(inner),
                    _ => Err(syn(self.line(), "expected `)`")),
                }
            }
            BTok::Lit(l) if l == "(" => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(BTok::RParen) => Ok(inner),
                    Some(BTok::Lit(l)) if l == ")" => Ok(inner),
                    _ => Err(syn(self.line(), "expected `)`")),
                }
            }
            other => Err(syn(line, format!("unexpected `{other}` in condition"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Rule attributes
// ---------------------------------------------------------------------------

fn is_lparen(t: &BTok) -> bool {
    matches!(t, BTok::LParen) || matches!(t, BTok::Lit(l) if l == "(")
}

fn is_rparen(t: &BTok) -> bool {
    matches!(t, BTok::RParen) || matches!(t, BTok::Lit(l) if l == ")")
}

/// Parses a trailing `[priority(N)]` attribute group; the tokens must end
/// with it.
fn parse_rule_attrs(toks: &[PTok], from: usize) -> Result<u32, FrontendError> {
    let rest = &toks[from..];
    if rest.is_empty() {
        return Ok(DEFAULT_PRIORITY);
    }
    let line = rest[0].line;
    let shape_err = || {
        syn(
            line,
            "expected a rule attribute of the form [priority(N)] at the end of the rule",
        )
    };
    if rest.len() != 6 {
        return Err(shape_err());
    }
    if !matches!(rest[0].tok, BTok::LBrack) {
        return Err(shape_err());
    }
    match &rest[1].tok {
        BTok::Word(w) if w == "priority" => {}
        BTok::Word(w) => {
            return Err(syn(line, format!("unknown rule attribute `{w}`")));
        }
        _ => return Err(shape_err()),
    }
    if !is_lparen(&rest[2].tok) {
        return Err(shape_err());
    }
    let n = match &rest[3].tok {
        BTok::Int(t) => t
            .parse::<u32>()
            .map_err(|_| syn(line, format!("priority out of range: {t}")))?,
        _ => return Err(shape_err()),
    };
    if !is_rparen(&rest[4].tok) {
        return Err(shape_err());
    }
    if !matches!(rest[5].tok, BTok::RBrack) {
        return Err(shape_err());
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Definitions
// ---------------------------------------------------------------------------

/// Parses and validates a complete definition.
pub fn parse_definition(src: &str) -> Result<Definition, FrontendError> {
    let chunks = split_items(src)?;

    // Items must come in order: syntax, one configuration, rules.
    let mut config_chunk: Option<&Chunk> = None;
    let mut syntax_chunks: Vec<&Chunk> = Vec::new();
    let mut rule_chunks: Vec<&Chunk> = Vec::new();
    for c in &chunks {
        match c.kind {
            ItemKind::Syntax => {
                if config_chunk.is_some() || !rule_chunks.is_empty() {
                    return Err(syn(
                        c.line,
                        "syntax declarations must precede the configuration",
                    ));
                }
                syntax_chunks.push(c);
            }
            ItemKind::Configuration => {
                if config_chunk.is_some() {
                    return Err(syn(c.line, "duplicate configuration"));
                }
                if !rule_chunks.is_empty() {
                    return Err(syn(c.line, "the configuration must precede all rules"));
                }
                config_chunk = Some(c);
            }
            ItemKind::Rule => {
                if config_chunk.is_none() {
                    return Err(syn(c.line, "rules must follow the configuration"));
                }
                rule_chunks.push(c);
            }
        }
    }
    let config_chunk = config_chunk.ok_or_else(|| syn(1, "missing configuration"))?;

    let mut decls = Vec::new();
    for c in &syntax_chunks {
        decls.push(parse_syntax_chunk(c)?);
    }
    let grammar = Grammar::build(&decls).map_err(|e| match e {
        crate::grammar::GrammarError::UnknownSort(_, sort) => FrontendError::UnknownSort {
            line: config_chunk.line,
            sort,
        },
        crate::grammar::GrammarError::BuiltinRedeclared(s) => syn(
            syntax_chunks.first().map(|c| c.line).unwrap_or(1),
            format!("sort {s} is built in and cannot be redeclared"),
        ),
    })?;
    let vocab = vocabulary(&grammar);

    // Configuration.
    let mut cells: Vec<CellDecl> = Vec::new();
    {
        let mut sc = Scanner::with_line(&config_chunk.text, config_chunk.text_line);
        while let Some(span) = scan_cell(&mut sc)? {
            if cells.iter().any(|c| c.name == span.name) {
                return Err(FrontendError::DuplicateCellName { name: span.name });
            }
            for a in &span.attrs {
                if a != OUTPUT_ATTR {
                    return Err(syn(span.line, format!("unknown cell attribute `{a}`")));
                }
            }
            let toks = Lexer::with_line(&span.body, span.body_line, &vocab).all()?;
            let mut bp = BodyParser::new(
                &grammar,
                BodyCtx {
                    allow_pgm: true,
                    allow_rewrite: false,
                },
            );
            let initial = bp.parse_body(&toks, span.line)?;
            if !super::is_input_marker(&initial) && !initial.is_ground() {
                return Err(syn(
                    span.line,
                    format!("cell <{}> initial contents must be ground", span.name),
                ));
            }
            cells.push(CellDecl {
                name: span.name,
                attrs: span.attrs,
                initial,
            });
        }
        sc.skip_trivia();
        if !sc.at_end() {
            return Err(syn(sc.line, "unexpected text in configuration"));
        }
    }
    if cells.is_empty() {
        return Err(syn(config_chunk.line, "configuration has no cells"));
    }

    // Input and output cells.
    let input_cells: Vec<&CellDecl> = cells
        .iter()
        .filter(|c| super::is_input_marker(&c.initial))
        .collect();
    let input_cell = match input_cells.len() {
        0 => return Err(FrontendError::NoInputCell),
        1 => input_cells[0].name.clone(),
        _ => {
            return Err(syn(
                config_chunk.line,
                "more than one cell contains the $PGM input marker",
            ))
        }
    };
    let flagged: Vec<&CellDecl> = cells
        .iter()
        .filter(|c| c.attrs.iter().any(|a| a == OUTPUT_ATTR))
        .collect();
    let output_cell = match flagged.len() {
        0 => cells
            .iter()
            .find(|c| c.name != input_cell)
            .map(|c| c.name.clone())
            .ok_or_else(|| syn(config_chunk.line, "definition needs an output cell"))?,
        1 => {
            if flagged[0].name == input_cell {
                return Err(syn(
                    config_chunk.line,
                    "the input cell cannot be the output cell",
                ));
            }
            flagged[0].name.clone()
        }
        _ => {
            return Err(syn(
                config_chunk.line,
                "more than one cell is marked `output`",
            ))
        }
    };

    // Rules.
    let mut rules: Vec<RuleDecl> = Vec::new();
    for (idx, chunk) in rule_chunks.iter().enumerate() {
        let id = idx + 1;
        let mut sc = Scanner::with_line(&chunk.text, chunk.text_line);
        let mut bp = BodyParser::new(
            &grammar,
            BodyCtx {
                allow_pgm: false,
                allow_rewrite: true,
            },
        );
        let mut rule_cells: Vec<(String, Term)> = Vec::new();
        while let Some(span) = scan_cell(&mut sc)? {
            if !span.attrs.is_empty() {
                return Err(syn(span.line, "rule cells take no attributes"));
            }
            if !cells.iter().any(|c| c.name == span.name) {
                return Err(syn(
                    span.line,
                    format!("rule mentions undeclared cell <{}>", span.name),
                ));
            }
            if rule_cells.iter().any(|(n, _)| *n == span.name) {
                return Err(syn(
                    span.line,
                    format!("rule mentions cell <{}> twice", span.name),
                ));
            }
            let toks = Lexer::with_line(&span.body, span.body_line, &vocab).all()?;
            let body = bp.parse_body(&toks, span.line)?;
            rule_cells.push((span.name, body));
        }
        if rule_cells.is_empty() {
            return Err(syn(chunk.line, "rule has no cells"));
        }

        // Optional condition and attributes.
        let rest_text = sc.slice(sc.pos, chunk.text.chars().count());
        let rest_line = sc.line;
        let toks = Lexer::with_line(&rest_text, rest_line, &vocab).all()?;
        let (requires, priority) = if toks.is_empty() {
            (None, DEFAULT_PRIORITY)
        } else if matches!(&toks[0].tok, BTok::Word(w) if w == "requires") {
            let mut cp = CondParser {
                bp: &mut bp,
                toks: &toks,
                pos: 1,
            };
            let cond = cp.expr()?;
            let after = cp.pos;
            (Some(cond), parse_rule_attrs(&toks, after)?)
        } else if matches!(toks[0].tok, BTok::LBrack) {
            (None, parse_rule_attrs(&toks, 0)?)
        } else {
            return Err(syn(
                toks[0].line,
                "expected `requires`, `[priority(N)]`, or the next item",
            ));
        };

        let rule = RuleDecl {
            id,
            cells: rule_cells,
            requires,
            priority,
        };

        // Side conditions may only use variables bound on the left.
        if let Some(cond) = &rule.requires {
            let bound = rule.lhs_var_names();
            let mut bad: Option<String> = None;
            cond.for_each(&mut |t| {
                if let Term::Variable {
                    name,
                    kind: VarKind::Named,
                    ..
                } = t
                {
                    if !bound.contains(name) && bad.is_none() {
                        bad = Some(name.clone());
                    }
                }
            });
            if let Some(name) = bad {
                return Err(syn(
                    chunk.line,
                    format!("condition uses variable {name} that is not bound on the left"),
                ));
            }
        }
        rules.push(rule);
    }

    Ok(Definition {
        grammar,
        cells,
        input_cell,
        output_cell,
        rules,
    })
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

fn ground_utoks(toks: Vec<PTok>) -> Result<Vec<UTokAt>, FrontendError> {
    let mut out = Vec::with_capacity(toks.len());
    for t in toks {
        let u = match t.tok {
            BTok::Word(w) => {
                if RESERVED_WORDS.contains(&w.as_str()) {
                    return Err(syn(t.line, format!("`{w}` is reserved")));
                }
                if w == "true" || w == "false" {
                    UTok::Bool(w)
                } else if word_is_variable(&w) {
                    return Err(syn(
                        t.line,
                        format!(
                            "`{w}` reads as a variable; identifiers in models start with a \
                             lowercase letter"
                        ),
                    ));
                } else {
                    UTok::Id(w)
                }
            }
            BTok::Int(x) => UTok::Int(x),
            BTok::Str(x) => UTok::Str(x),
            BTok::Hash(x) => UTok::Hash(x),
            BTok::Lit(x) => UTok::Lit(x),
            BTok::Annot(..) | BTok::Anon | BTok::AnonAnnot(_) | BTok::Placeholder(_) => {
                return Err(syn(t.line, "variables are not allowed in models"));
            }
            other => {
                return Err(syn(t.line, format!("unexpected `{other}` in model text")));
            }
        };
        out.push(UTokAt { tok: u, line: t.line });
    }
    Ok(out)
}

/// Parses ground model text at a given sort.
pub fn parse_model(def: &Definition, src: &str, sort: &Sort) -> Result<Term, FrontendError> {
    if !def.grammar.is_declared(sort) {
        return Err(FrontendError::UnknownSort {
            line: 1,
            sort: sort.0.clone(),
        });
    }
    let vocab = vocabulary(&def.grammar);
    let toks = Lexer::new(src, &vocab).all()?;
    let utoks = ground_utoks(toks)?;
    parse_sorts(&def.grammar, &utoks, std::slice::from_ref(sort))
}

/// Parses ground model text when the sort is not known, succeeding only if
/// exactly one tree covers the input across all declared sorts. Returns the
/// tree and its principal sort.
pub fn parse_model_any(def: &Definition, src: &str) -> Result<(Term, Sort), FrontendError> {
    let vocab = vocabulary(&def.grammar);
    let toks = Lexer::new(src, &vocab).all()?;
    let utoks = ground_utoks(toks)?;
    let starts: Vec<Sort> = def.grammar.declared.clone();
    let t = parse_sorts(&def.grammar, &utoks, &starts)?;
    let sort = def.grammar.sort_of(&t);
    Ok((t, sort))
}

// ---------------------------------------------------------------------------
// Defaults files
// ---------------------------------------------------------------------------

/// One line of a defaults file: the replacement text for placeholder
/// `?index?` of rule `rule_id`. The text is kept raw; it is parsed at the
/// placeholder's slot sort when applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultEntry {
    pub rule_id: usize,
    pub index: u32,
    pub text: String,
    pub line: usize,
}

/// Parses a defaults file: lines of `rule <id> ?<n>? := <model text>`,
/// blank lines, and comments.
pub fn parse_defaults(src: &str) -> Result<Vec<DefaultEntry>, FrontendError> {
    let mut out: Vec<DefaultEntry> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find("//") {
            // `//` inside a string stays; defaults lines with strings and
            // comments together are rare enough to split naively only when
            // the `//` is not inside quotes.
            Some(pos) if raw[..pos].matches('"').count() % 2 == 0 => &raw[..pos],
            _ => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut sc = Scanner::with_line(line, line_no);
        sc.skip_trivia();
        match sc.scan_word().as_deref() {
            Some("rule") => {}
            _ => {
                return Err(syn(
                    line_no,
                    "expected `rule <id> ?<n>? := <model text>`",
                ))
            }
        }
        sc.skip_trivia();
        let mut digits = String::new();
        while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            digits.push(sc.bump().unwrap());
        }
        let rule_id: usize = digits
            .parse()
            .map_err(|_| syn(line_no, "expected a rule id after `rule`"))?;
        sc.skip_trivia();
        if sc.peek() != Some('?') {
            return Err(syn(line_no, "expected `?<n>?` after the rule id"));
        }
        sc.bump();
        let mut idx_digits = String::new();
        while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            idx_digits.push(sc.bump().unwrap());
        }
        let index: u32 = idx_digits
            .parse()
            .map_err(|_| syn(line_no, "expected a placeholder index"))?;
        if sc.peek() != Some('?') {
            return Err(syn(line_no, "expected closing `?` of the placeholder"));
        }
        sc.bump();
        sc.skip_trivia();
        if !sc.starts_with(":=") {
            return Err(syn(line_no, "expected `:=` before the replacement text"));
        }
        sc.advance(2);
        sc.skip_trivia();
        let text = sc.slice(sc.pos, line.chars().count()).trim().to_string();
        if text.is_empty() {
            return Err(syn(line_no, "empty replacement text"));
        }
        if out
            .iter()
            .any(|e| e.rule_id == rule_id && e.index == index)
        {
            return Err(syn(
                line_no,
                format!("duplicate default for rule {rule_id} ?{index}?"),
            ));
        }
        out.push(DefaultEntry {
            rule_id,
            index,
            text,
            line: line_no,
        });
    }
    Ok(out)
}
