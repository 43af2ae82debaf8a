//! The shared term language.
//!
//! Every artifact in this crate — parsed models, rule patterns, machine
//! states, complement stores, certificate snapshots — is a [`Term`]. Ground
//! terms (no variables, no rewrite arrows) additionally have a canonical
//! text serialization used wherever byte-exact determinism matters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// A sort name. `K` is the top sort; `Int`, `String`, `Bool`, `Id`, `List`
/// and `Map` are built in; everything else comes from `syntax` declarations.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Sort(pub String);

impl Sort {
    pub fn new(name: impl Into<String>) -> Sort {
        Sort(name.into())
    }
    pub fn k() -> Sort {
        Sort::new("K")
    }
    pub fn int() -> Sort {
        Sort::new("Int")
    }
    pub fn string() -> Sort {
        Sort::new("String")
    }
    pub fn bool() -> Sort {
        Sort::new("Bool")
    }
    pub fn id() -> Sort {
        Sort::new("Id")
    }
    pub fn list() -> Sort {
        Sort::new("List")
    }
    pub fn map() -> Sort {
        Sort::new("Map")
    }
    pub fn is_k(&self) -> bool {
        self.0 == "K"
    }
    /// Sorts that exist without any `syntax` declaration.
    pub fn is_builtin(&self) -> bool {
        matches!(self.0.as_str(), "K" | "Int" | "String" | "Bool" | "Id" | "List" | "Map")
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifies one grammar production. The string is the production's
/// canonical signature (`Sort ::= item item ...`), suffixed with `#n` when a
/// definition repeats the same signature, so the id is reproducible from the
/// declaration itself.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ProdId(pub String);

impl From<&str> for ProdId {
    fn from(s: &str) -> Self {
        ProdId(s.to_string())
    }
}

impl From<String> for ProdId {
    fn from(s: String) -> Self {
        ProdId(s)
    }
}

impl ProdId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
    /// The sort this production produces (everything before ` ::=`).
    pub fn sort_name(&self) -> &str {
        self.0.split(" ::=").next().unwrap_or(&self.0)
    }
}

impl fmt::Display for ProdId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Built-in operators, represented as `Apply` nodes with reserved ids.
pub mod builtin {
    pub const MAP_UPDATE: &str = "#mapUpdate"; // M [K <- V]
    pub const LOOKUP_OR_DEFAULT: &str = "#lookupOrDefault"; // M [[ K ]] orDefault D
    pub const EQ_K: &str = "#eqK"; // ==K
    pub const OR_BOOL: &str = "#orBool";
    pub const AND_BOOL: &str = "#andBool";
    pub const NOT_BOOL: &str = "#notBool";
    pub const LT_INT: &str = "#ltInt";
    pub const LE_INT: &str = "#leInt";
    pub const PLUS_INT: &str = "#plusInt";
    pub const BIND: &str = "#bind"; // K |-> V as a singleton-map expression

    pub fn is_builtin(id: &str) -> bool {
        matches!(
            id,
            MAP_UPDATE
                | LOOKUP_OR_DEFAULT
                | EQ_K
                | OR_BOOL
                | AND_BOOL
                | NOT_BOOL
                | LT_INT
                | LE_INT
                | PLUS_INT
                | BIND
        )
    }
}

/// How a variable binds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VarKind {
    /// An ordinary named variable.
    Named,
    /// `_`: matches anything; never legal in a construction position.
    /// The parser assigns each occurrence a hidden unique name so traces can
    /// record what it matched.
    Anonymous,
    /// `?N?`: a hole awaiting a user-supplied default.
    Placeholder(u32),
}

/// Where the explicit elements of a list pattern sit relative to the rest
/// variable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ElemsAt {
    /// `[e1, e2] Rest` — elements match a prefix.
    Front,
    /// `Rest [e1, e2]` — elements match a suffix.
    Back,
}

/// The term language.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Term {
    Variable {
        name: String,
        sort: Sort,
        kind: VarKind,
    },
    Token {
        sort: Sort,
        /// Semantic text: the unescaped value for `String`, canonical
        /// decimal for `Int`, `true`/`false` for `Bool`, the identifier for
        /// `Id`, and the `#`-prefixed spelling for user token sorts.
        text: String,
    },
    Apply {
        prod: ProdId,
        args: Vec<Term>,
    },
    List {
        /// Never empty: the empty list is `Empty(List)`.
        elems: Vec<Term>,
        /// Optional rest variable (a `Variable` term) and which end the
        /// explicit elements occupy. Ground lists have no rest.
        rest: Option<Box<Term>>,
        at: ElemsAt,
    },
    Map {
        binds: Vec<(Term, Term)>,
        rest: Option<Box<Term>>,
    },
    Empty(Sort),
    /// `lhs => rhs`, only inside rule cell bodies.
    Rewrite {
        lhs: Box<Term>,
        rhs: Box<Term>,
    },
}

/// Which side of the rewrite arrows to keep when projecting a rule body.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RwSide {
    Lhs,
    Rhs,
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum TermError {
    #[error("variable {0} is not bound")]
    UnboundVariable(String),
    #[error("anonymous variable in a construction position")]
    AnonymousOnRight,
    #[error("placeholder ?{0}? has not been replaced by a default")]
    UnresolvedPlaceholder(u32),
    #[error("structural equality is only defined on ground terms")]
    NotGround,
    #[error("rest variable {name} is bound to a non-{expected} term")]
    BadSplice { name: String, expected: &'static str },
    #[error("map construction produced duplicate key {0}")]
    DuplicateMapKey(String),
    #[error("canonical term syntax error: {0}")]
    CanonSyntax(String),
}

impl Term {
    pub fn var(name: impl Into<String>, sort: Sort) -> Term {
        Term::Variable { name: name.into(), sort, kind: VarKind::Named }
    }
    pub fn token(sort: Sort, text: impl Into<String>) -> Term {
        Term::Token { sort, text: text.into() }
    }
    pub fn int(n: i64) -> Term {
        Term::token(Sort::int(), n.to_string())
    }
    pub fn string(s: impl Into<String>) -> Term {
        Term::token(Sort::string(), s)
    }
    pub fn id(s: impl Into<String>) -> Term {
        Term::token(Sort::id(), s)
    }
    pub fn bool(b: bool) -> Term {
        Term::token(Sort::bool(), if b { "true" } else { "false" })
    }
    pub fn apply(prod: impl Into<ProdId>, args: Vec<Term>) -> Term {
        Term::Apply {
            prod: prod.into(),
            args,
        }
    }
    pub fn empty_k() -> Term {
        Term::Empty(Sort::k())
    }
    pub fn empty_list() -> Term {
        Term::Empty(Sort::list())
    }
    pub fn empty_map() -> Term {
        Term::Empty(Sort::map())
    }

    /// A ground list, normalized: zero elements become `.List`.
    pub fn list(elems: Vec<Term>) -> Term {
        if elems.is_empty() {
            Term::empty_list()
        } else {
            Term::List { elems, rest: None, at: ElemsAt::Front }
        }
    }

    /// A ground map, normalized: bindings sorted by canonical key, zero
    /// bindings become `.Map`.
    pub fn map(mut binds: Vec<(Term, Term)>) -> Term {
        if binds.is_empty() {
            return Term::empty_map();
        }
        binds.sort_by(|a, b| canonical_cmp(&a.0, &b.0));
        Term::Map { binds, rest: None }
    }

    pub fn rewrite(lhs: Term, rhs: Term) -> Term {
        Term::Rewrite { lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Variable { .. } | Term::Rewrite { .. } => false,
            Term::Token { .. } | Term::Empty(_) => true,
            Term::Apply { args, .. } => args.iter().all(Term::is_ground),
            Term::List { elems, rest, .. } => rest.is_none() && elems.iter().all(Term::is_ground),
            Term::Map { binds, rest } => {
                rest.is_none() && binds.iter().all(|(k, v)| k.is_ground() && v.is_ground())
            }
        }
    }

    pub fn contains_rewrite(&self) -> bool {
        match self {
            Term::Rewrite { .. } => true,
            Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => false,
            Term::Apply { args, .. } => args.iter().any(Term::contains_rewrite),
            Term::List { elems, rest, .. } => {
                elems.iter().any(Term::contains_rewrite)
                    || rest.as_deref().map_or(false, Term::contains_rewrite)
            }
            Term::Map { binds, rest } => {
                binds.iter().any(|(k, v)| k.contains_rewrite() || v.contains_rewrite())
                    || rest.as_deref().map_or(false, Term::contains_rewrite)
            }
        }
    }

    /// Keep one side of every rewrite arrow.
    pub fn project(&self, side: RwSide) -> Term {
        match self {
            Term::Rewrite { lhs, rhs } => match side {
                RwSide::Lhs => lhs.project(side),
                RwSide::Rhs => rhs.project(side),
            },
            Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => self.clone(),
            Term::Apply { prod, args } => Term::Apply {
                prod: prod.clone(),
                args: args.iter().map(|a| a.project(side)).collect(),
            },
            Term::List { elems, rest, at } => Term::List {
                elems: elems.iter().map(|e| e.project(side)).collect(),
                rest: rest.as_ref().map(|r| Box::new(r.project(side))),
                at: *at,
            },
            Term::Map { binds, rest } => Term::Map {
                binds: binds.iter().map(|(k, v)| (k.project(side), v.project(side))).collect(),
                rest: rest.as_ref().map(|r| Box::new(r.project(side))),
            },
        }
    }

    /// Visit every subterm, outermost first.
    pub fn for_each(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => {}
            Term::Apply { args, .. } => args.iter().for_each(|a| a.for_each(f)),
            Term::List { elems, rest, .. } => {
                elems.iter().for_each(|e| e.for_each(f));
                if let Some(r) = rest {
                    r.for_each(f);
                }
            }
            Term::Map { binds, rest } => {
                for (k, v) in binds {
                    k.for_each(f);
                    v.for_each(f);
                }
                if let Some(r) = rest {
                    r.for_each(f);
                }
            }
            Term::Rewrite { lhs, rhs } => {
                lhs.for_each(f);
                rhs.for_each(f);
            }
        }
    }

    /// Names of every named or anonymous variable, in first-occurrence order.
    pub fn binding_var_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.for_each(&mut |t| {
            if let Term::Variable { name, kind, .. } = t {
                if !matches!(kind, VarKind::Placeholder(_)) && seen.insert(name.clone()) {
                    out.push(name.clone());
                }
            }
        });
        out
    }

    pub fn has_placeholders(&self) -> bool {
        let mut found = false;
        self.for_each(&mut |t| {
            if let Term::Variable { kind: VarKind::Placeholder(_), .. } = t {
                found = true;
            }
        });
        found
    }
}

/// A finite map from variable names to ground terms.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Substitution {
    map: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }
    pub fn bind(&mut self, name: impl Into<String>, value: Term) {
        self.map.insert(name.into(), value);
    }
    pub fn get(&self, name: &str) -> Option<&Term> {
        self.map.get(name)
    }
    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }
    pub fn remove(&mut self, name: &str) -> Option<Term> {
        self.map.remove(name)
    }
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
    pub fn len(&self) -> usize {
        self.map.len()
    }
    /// Bindings in ascending name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.map.iter()
    }
    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }
}

impl FromIterator<(String, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (String, Term)>>(iter: I) -> Substitution {
        Substitution { map: iter.into_iter().collect() }
    }
}

/// Replace every variable in `pattern` by its binding in `theta`.
///
/// Rest variables splice: a list rest bound to `[b, c]` inside `[a] Rest`
/// yields `[a, b, c]`; map rests merge bindings. The result is normalized
/// (empty collections collapse to `.List`/`.Map`, map bindings sorted).
pub fn substitute(pattern: &Term, theta: &Substitution) -> Result<Term, TermError> {
    match pattern {
        Term::Variable { name, kind, .. } => match kind {
            VarKind::Placeholder(n) => Err(TermError::UnresolvedPlaceholder(*n)),
            VarKind::Anonymous => {
                theta.get(name).cloned().ok_or(TermError::AnonymousOnRight)
            }
            VarKind::Named => {
                theta.get(name).cloned().ok_or_else(|| TermError::UnboundVariable(name.clone()))
            }
        },
        Term::Token { .. } | Term::Empty(_) => Ok(pattern.clone()),
        Term::Apply { prod, args } => Ok(Term::Apply {
            prod: prod.clone(),
            args: args.iter().map(|a| substitute(a, theta)).collect::<Result<_, _>>()?,
        }),
        Term::List { elems, rest, at } => {
            let own: Vec<Term> =
                elems.iter().map(|e| substitute(e, theta)).collect::<Result<_, _>>()?;
            let spliced = match rest {
                None => Vec::new(),
                Some(r) => {
                    let bound = substitute(r, theta)?;
                    splice_list(r, bound)?
                }
            };
            let all = match at {
                ElemsAt::Front => own.into_iter().chain(spliced).collect(),
                ElemsAt::Back => spliced.into_iter().chain(own).collect(),
            };
            Ok(Term::list(all))
        }
        Term::Map { binds, rest } => {
            let mut all: Vec<(Term, Term)> = Vec::new();
            if let Some(r) = rest {
                let bound = substitute(r, theta)?;
                all.extend(splice_map(r, bound)?);
            }
            for (k, v) in binds {
                all.push((substitute(k, theta)?, substitute(v, theta)?));
            }
            // Later bindings overwrite spliced ones with the same key; two
            // distinct explicit bindings to one key are an error.
            let mut out: Vec<(Term, Term)> = Vec::new();
            for (k, v) in all {
                if let Some(slot) = out.iter_mut().find(|(ek, _)| canonical_cmp(ek, &k).is_eq()) {
                    if binds.len() > 1 && explicit_key_count(binds, theta, &k)? > 1 {
                        return Err(TermError::DuplicateMapKey(canon_string(&k)));
                    }
                    slot.1 = v;
                } else {
                    out.push((k, v));
                }
            }
            Ok(Term::map(out))
        }
        Term::Rewrite { .. } => {
            // Rule application projects sides before substituting.
            Err(TermError::NotGround)
        }
    }
}

fn explicit_key_count(
    binds: &[(Term, Term)],
    theta: &Substitution,
    key: &Term,
) -> Result<usize, TermError> {
    let mut n = 0;
    for (k, _) in binds {
        if canonical_cmp(&substitute(k, theta)?, key).is_eq() {
            n += 1;
        }
    }
    Ok(n)
}

fn splice_list(rest: &Term, bound: Term) -> Result<Vec<Term>, TermError> {
    match bound {
        Term::Empty(ref s) if *s == Sort::list() => Ok(Vec::new()),
        Term::List { elems, rest: None, .. } => Ok(elems),
        _ => Err(TermError::BadSplice { name: rest_name(rest), expected: "List" }),
    }
}

fn splice_map(rest: &Term, bound: Term) -> Result<Vec<(Term, Term)>, TermError> {
    match bound {
        Term::Empty(ref s) if *s == Sort::map() => Ok(Vec::new()),
        Term::Map { binds, rest: None } => Ok(binds),
        _ => Err(TermError::BadSplice { name: rest_name(rest), expected: "Map" }),
    }
}

fn rest_name(rest: &Term) -> String {
    match rest {
        Term::Variable { name, .. } => name.clone(),
        other => canon_string(other),
    }
}

/// Structural equality on ground terms; open terms are an error.
pub fn structurally_equal(a: &Term, b: &Term) -> Result<bool, TermError> {
    if !a.is_ground() || !b.is_ground() {
        return Err(TermError::NotGround);
    }
    Ok(canonical_cmp(a, b).is_eq())
}

/// Total order on ground terms; also used to sort map bindings.
pub fn canonical_cmp(a: &Term, b: &Term) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    fn rank(t: &Term) -> u8 {
        match t {
            Term::Empty(_) => 0,
            Term::Token { .. } => 1,
            Term::Apply { .. } => 2,
            Term::List { .. } => 3,
            Term::Map { .. } => 4,
            Term::Variable { .. } => 5,
            Term::Rewrite { .. } => 6,
        }
    }
    match (a, b) {
        (Term::Empty(x), Term::Empty(y)) => x.cmp(y),
        (Term::Token { sort: sa, text: ta }, Term::Token { sort: sb, text: tb }) => {
            sa.cmp(sb).then_with(|| ta.cmp(tb))
        }
        (Term::Apply { prod: pa, args: aa }, Term::Apply { prod: pb, args: ab }) => {
            pa.cmp(pb).then_with(|| cmp_slices(aa, ab))
        }
        (Term::List { elems: ea, .. }, Term::List { elems: eb, .. }) => cmp_slices(ea, eb),
        (Term::Map { binds: ba, .. }, Term::Map { binds: bb, .. }) => {
            let mut sa: Vec<_> = ba.iter().collect();
            let mut sb: Vec<_> = bb.iter().collect();
            sa.sort_by(|x, y| canonical_cmp(&x.0, &y.0));
            sb.sort_by(|x, y| canonical_cmp(&x.0, &y.0));
            for ((ka, va), (kb, vb)) in sa.iter().zip(&sb) {
                let c = canonical_cmp(ka, kb).then_with(|| canonical_cmp(va, vb));
                if c != Ordering::Equal {
                    return c;
                }
            }
            sa.len().cmp(&sb.len())
        }
        (
            Term::Variable { name: na, sort: sa, kind: ka },
            Term::Variable { name: nb, sort: sb, kind: kb },
        ) => na.cmp(nb).then_with(|| sa.cmp(sb)).then_with(|| ka.cmp(kb)),
        (Term::Rewrite { lhs: la, rhs: ra }, Term::Rewrite { lhs: lb, rhs: rb }) => {
            canonical_cmp(la, lb).then_with(|| canonical_cmp(ra, rb))
        }
        _ => rank(a).cmp(&rank(b)),
    }
}

fn cmp_slices(a: &[Term], b: &[Term]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = canonical_cmp(x, y);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// First unused name of the form `base0`, `base1`, ... Counting always
/// starts at zero, so `fresh_variable("C", {})` is `C0`.
pub fn fresh_variable(base: &str, taken: &BTreeSet<String>) -> String {
    for i in 0u64.. {
        let cand = format!("{base}{i}");
        if !taken.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// Canonical text serialization of ground terms.
//
//   term  ::= (empty SORT) | (tok SORT "text") | (app "prod-id" term*)
//           | (list term*) | (map (term term)*)
//
// Strings are double-quoted with \" \\ \n \t \r escapes. Map bindings are
// emitted sorted by the canonical bytes of their keys, so equal maps have
// equal serializations.
// ---------------------------------------------------------------------------

/// Serialize a ground term. Panics in debug builds if the term is open;
/// callers guard with [`Term::is_ground`].
pub fn canon_string(t: &Term) -> String {
    let mut s = String::new();
    write_canon(t, &mut s);
    s
}

fn write_canon(t: &Term, out: &mut String) {
    match t {
        Term::Empty(s) => {
            out.push_str("(empty ");
            out.push_str(&s.0);
            out.push(')');
        }
        Term::Token { sort, text } => {
            out.push_str("(tok ");
            out.push_str(&sort.0);
            out.push(' ');
            write_quoted(text, out);
            out.push(')');
        }
        Term::Apply { prod, args } => {
            out.push_str("(app ");
            write_quoted(&prod.0, out);
            for a in args {
                out.push(' ');
                write_canon(a, out);
            }
            out.push(')');
        }
        Term::List { elems, .. } => {
            out.push_str("(list");
            for e in elems {
                out.push(' ');
                write_canon(e, out);
            }
            out.push(')');
        }
        Term::Map { binds, .. } => {
            let mut sorted: Vec<_> = binds.iter().collect();
            sorted.sort_by(|a, b| canonical_cmp(&a.0, &b.0));
            out.push_str("(map");
            for (k, v) in sorted {
                out.push_str(" (");
                write_canon(k, out);
                out.push(' ');
                write_canon(v, out);
                out.push(')');
            }
            out.push(')');
        }
        Term::Variable { .. } | Term::Rewrite { .. } => {
            debug_assert!(false, "canonical form is only defined on ground terms");
            out.push_str("(open)");
        }
    }
}

fn write_quoted(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out.push('"');
}

/// Parse the canonical serialization back into a term.
pub fn parse_canon(input: &str) -> Result<Term, TermError> {
    let mut p = CanonParser { bytes: input.as_bytes(), pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(TermError::CanonSyntax(format!("trailing input at byte {}", p.pos)));
    }
    Ok(t)
}

struct CanonParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> CanonParser<'a> {
    fn err(&self, msg: &str) -> TermError {
        TermError::CanonSyntax(format!("{msg} at byte {}", self.pos))
    }
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }
    fn expect(&mut self, b: u8) -> Result<(), TermError> {
        self.skip_ws();
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {:?}", b as char)))
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }
    fn word(&mut self) -> Result<String, TermError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected a word"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }
    fn quoted(&mut self) -> Result<String, TermError> {
        self.expect(b'"')?;
        let mut out = String::new();
        loop {
            if self.pos >= self.bytes.len() {
                return Err(self.err("unterminated string"));
            }
            let b = self.bytes[self.pos];
            self.pos += 1;
            match b {
                b'"' => return Ok(out),
                b'\\' => {
                    let esc = *self
                        .bytes
                        .get(self.pos)
                        .ok_or_else(|| self.err("unterminated escape"))?;
                    self.pos += 1;
                    out.push(match esc {
                        b'"' => '"',
                        b'\\' => '\\',
                        b'n' => '\n',
                        b't' => '\t',
                        b'r' => '\r',
                        _ => return Err(self.err("unknown escape")),
                    });
                }
                _ => {
                    // Continue a UTF-8 sequence byte-by-byte.
                    let len = utf8_len(b);
                    let end = self.pos - 1 + len;
                    if end > self.bytes.len() {
                        return Err(self.err("invalid utf-8"));
                    }
                    out.push_str(
                        std::str::from_utf8(&self.bytes[self.pos - 1..end])
                            .map_err(|_| self.err("invalid utf-8"))?,
                    );
                    self.pos = end;
                }
            }
        }
    }
    fn term(&mut self) -> Result<Term, TermError> {
        self.expect(b'(')?;
        let tag = self.word()?;
        let t = match tag.as_str() {
            "empty" => Term::Empty(Sort::new(self.word()?)),
            "tok" => {
                let sort = Sort::new(self.word()?);
                let text = self.quoted()?;
                Term::Token { sort, text }
            }
            "app" => {
                let prod = ProdId(self.quoted()?);
                let mut args = Vec::new();
                while self.peek() == Some(b'(') {
                    args.push(self.term()?);
                }
                Term::Apply { prod, args }
            }
            "list" => {
                let mut elems = Vec::new();
                while self.peek() == Some(b'(') {
                    elems.push(self.term()?);
                }
                Term::list(elems)
            }
            "map" => {
                let mut binds = Vec::new();
                while self.peek() == Some(b'(') {
                    self.expect(b'(')?;
                    let k = self.term()?;
                    let v = self.term()?;
                    self.expect(b')')?;
                    binds.push((k, v));
                }
                Term::map(binds)
            }
            other => return Err(self.err(&format!("unknown tag {other}"))),
        };
        self.expect(b')')?;
        Ok(t)
    }
}

fn utf8_len(first: u8) -> usize {
    if first < 0x80 {
        1
    } else if first >> 5 == 0b110 {
        2
    } else if first >> 4 == 0b1110 {
        3
    } else {
        4
    }
}

impl fmt::Display for Term {
    /// Compact grammar-independent rendering, used in diagnostics. Concrete
    /// model syntax is printed by the frontend, which knows the productions.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Variable { name, sort, kind } => match kind {
                VarKind::Anonymous => write!(f, "_"),
                VarKind::Placeholder(n) => write!(f, "?{n}?"),
                VarKind::Named if sort.is_k() => write!(f, "{name}"),
                VarKind::Named => write!(f, "{name}:{sort}"),
            },
            Term::Token { sort, text } => {
                if *sort == Sort::string() {
                    let mut s = String::new();
                    write_quoted(text, &mut s);
                    f.write_str(&s)
                } else {
                    f.write_str(text)
                }
            }
            Term::Apply { prod, args } => {
                write!(f, "{}(", prod.sort_name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::List { elems, rest, at } => {
                let inner = elems.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
                match (rest, at) {
                    (None, _) => write!(f, "[{inner}]"),
                    (Some(r), ElemsAt::Front) => write!(f, "[{inner}] {r}"),
                    (Some(r), ElemsAt::Back) => write!(f, "{r} [{inner}]"),
                }
            }
            Term::Map { binds, rest } => {
                let mut parts = Vec::new();
                if let Some(r) = rest {
                    parts.push(r.to_string());
                }
                for (k, v) in binds {
                    parts.push(format!("{k} |-> {v}"));
                }
                if parts.is_empty() {
                    write!(f, ".Map")
                } else {
                    f.write_str(&parts.join(" "))
                }
            }
            Term::Empty(s) => write!(f, ".{s}"),
            Term::Rewrite { lhs, rhs } => write!(f, "{lhs} => {rhs}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assign_prod() -> ProdId {
        ProdId("HCSPStat ::= Id \":=\" Expr".into())
    }

    #[test]
    fn substitute_fills_both_slots_of_an_assignment() {
        // L := R under {L ↦ status, R ↦ 1} becomes status := 1.
        let pat = Term::apply(
            assign_prod(),
            vec![Term::var("L", Sort::k()), Term::var("R", Sort::k())],
        );
        let theta: Substitution = [
            ("L".to_string(), Term::id("status")),
            ("R".to_string(), Term::int(1)),
        ]
        .into_iter()
        .collect();
        let got = substitute(&pat, &theta).unwrap();
        assert_eq!(got, Term::apply(assign_prod(), vec![Term::id("status"), Term::int(1)]));
    }

    #[test]
    fn substitute_on_ground_term_is_identity() {
        let t = Term::apply(assign_prod(), vec![Term::id("x"), Term::int(7)]);
        assert_eq!(substitute(&t, &Substitution::new()).unwrap(), t);
    }

    #[test]
    fn substitute_splices_list_rest() {
        // Oracle: plain vector concatenation, computed independently.
        let head = Term::id("a");
        let tail = vec![Term::id("b"), Term::id("c")];
        let mut expected_elems = vec![head.clone()];
        expected_elems.extend(tail.clone());
        let expected = Term::list(expected_elems);

        let pat = Term::List {
            elems: vec![Term::var("H", Sort::k())],
            rest: Some(Box::new(Term::var("Rest", Sort::list()))),
            at: ElemsAt::Front,
        };
        let theta: Substitution = [
            ("H".to_string(), head),
            ("Rest".to_string(), Term::list(tail)),
        ]
        .into_iter()
        .collect();
        assert_eq!(substitute(&pat, &theta).unwrap(), expected);
    }

    #[test]
    fn substitute_splices_suffix_rest_before_elements() {
        let pat = Term::List {
            elems: vec![Term::var("E", Sort::k())],
            rest: Some(Box::new(Term::var("Init", Sort::list()))),
            at: ElemsAt::Back,
        };
        let theta: Substitution = [
            ("E".to_string(), Term::int(3)),
            ("Init".to_string(), Term::list(vec![Term::int(1), Term::int(2)])),
        ]
        .into_iter()
        .collect();
        assert_eq!(
            substitute(&pat, &theta).unwrap(),
            Term::list(vec![Term::int(1), Term::int(2), Term::int(3)])
        );
    }

    #[test]
    fn substitute_empty_splice_collapses_to_empty_list() {
        let pat = Term::List {
            elems: vec![],
            rest: Some(Box::new(Term::var("Rest", Sort::list()))),
            at: ElemsAt::Front,
        };
        let theta: Substitution =
            [("Rest".to_string(), Term::empty_list())].into_iter().collect();
        assert_eq!(substitute(&pat, &theta).unwrap(), Term::empty_list());
    }

    #[test]
    fn substitute_reports_unbound_variable() {
        let pat = Term::var("X", Sort::k());
        assert_eq!(
            substitute(&pat, &Substitution::new()),
            Err(TermError::UnboundVariable("X".into()))
        );
    }

    #[test]
    fn substitute_rejects_anonymous_in_construction() {
        let pat = Term::Variable { name: "_0".into(), sort: Sort::k(), kind: VarKind::Anonymous };
        assert_eq!(substitute(&pat, &Substitution::new()), Err(TermError::AnonymousOnRight));
    }

    #[test]
    fn map_splice_merges_and_sorts() {
        let pat = Term::Map {
            binds: vec![(Term::int(2), Term::var("V", Sort::k()))],
            rest: Some(Box::new(Term::var("M", Sort::map()))),
        };
        let theta: Substitution = [
            ("V".to_string(), Term::id("two")),
            ("M".to_string(), Term::map(vec![(Term::int(9), Term::id("nine"))])),
        ]
        .into_iter()
        .collect();
        let got = substitute(&pat, &theta).unwrap();
        let expected = Term::map(vec![
            (Term::int(9), Term::id("nine")),
            (Term::int(2), Term::id("two")),
        ]);
        assert!(structurally_equal(&got, &expected).unwrap());
    }

    #[test]
    fn map_update_via_splice_overwrites_existing_key() {
        // A rest map already holding key 1 plus an explicit binding for 1:
        // the explicit binding wins, mirroring a map update.
        let pat = Term::Map {
            binds: vec![(Term::int(1), Term::var("V", Sort::k()))],
            rest: Some(Box::new(Term::var("M", Sort::map()))),
        };
        let theta: Substitution = [
            ("V".to_string(), Term::id("new")),
            ("M".to_string(), Term::map(vec![(Term::int(1), Term::id("old"))])),
        ]
        .into_iter()
        .collect();
        let got = substitute(&pat, &theta).unwrap();
        assert_eq!(got, Term::map(vec![(Term::int(1), Term::id("new"))]));
    }

    #[test]
    fn equality_ignores_map_binding_order() {
        let a = Term::Map {
            binds: vec![
                (Term::id("x"), Term::int(1)),
                (Term::id("y"), Term::int(2)),
            ],
            rest: None,
        };
        let b = Term::Map {
            binds: vec![
                (Term::id("y"), Term::int(2)),
                (Term::id("x"), Term::int(1)),
            ],
            rest: None,
        };
        assert!(structurally_equal(&a, &b).unwrap());
    }

    #[test]
    fn equality_distinguishes_tokens() {
        let a = Term::string("a");
        let b = Term::string("b");
        assert!(!structurally_equal(&a, &b).unwrap());
    }

    #[test]
    fn equality_on_open_terms_is_an_error() {
        let open = Term::var("X", Sort::k());
        assert_eq!(structurally_equal(&open, &Term::int(1)), Err(TermError::NotGround));
    }

    #[test]
    fn fresh_variable_counts_from_zero() {
        let taken = BTreeSet::new();
        assert_eq!(fresh_variable("C", &taken), "C0");
    }

    #[test]
    fn fresh_variable_skips_taken_names() {
        let taken: BTreeSet<String> = ["C0".to_string()].into_iter().collect();
        assert_eq!(fresh_variable("C", &taken), "C1");
        let taken: BTreeSet<String> =
            ["P".to_string(), "P0".to_string(), "P1".to_string()].into_iter().collect();
        assert_eq!(fresh_variable("P", &taken), "P2");
    }

    #[test]
    fn canon_fixed_vectors() {
        assert_eq!(canon_string(&Term::empty_list()), "(empty List)");
        assert_eq!(canon_string(&Term::int(42)), "(tok Int \"42\")");
        assert_eq!(
            canon_string(&Term::string("say \"hi\"")),
            "(tok String \"say \\\"hi\\\"\")"
        );
        let t = Term::apply(assign_prod(), vec![Term::id("x"), Term::int(1)]);
        assert_eq!(
            canon_string(&t),
            "(app \"HCSPStat ::= Id \\\":=\\\" Expr\" (tok Id \"x\") (tok Int \"1\"))"
        );
    }

    #[test]
    fn canon_map_is_sorted_by_key_bytes() {
        let m = Term::Map {
            binds: vec![
                (Term::id("z"), Term::int(1)),
                (Term::id("a"), Term::int(2)),
            ],
            rest: None,
        };
        let s = canon_string(&m);
        let a = s.find("\"a\"").unwrap();
        let z = s.find("\"z\"").unwrap();
        assert!(a < z, "bindings must be sorted: {s}");
    }

    fn ground_term_strategy() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(Term::int),
            "[a-zA-Z][a-zA-Z0-9]{0,6}".prop_map(Term::id),
            "[ -~]{0,12}".prop_map(Term::string),
            Just(Term::empty_k()),
            Just(Term::empty_list()),
            Just(Term::empty_map()),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Term::list),
                prop::collection::vec((inner.clone(), inner.clone()), 0..3).prop_map(|bs| {
                    // Deduplicate keys so construction is well defined.
                    let mut seen: Vec<Term> = Vec::new();
                    let mut out = Vec::new();
                    for (k, v) in bs {
                        if !seen.iter().any(|s| canonical_cmp(s, &k).is_eq()) {
                            seen.push(k.clone());
                            out.push((k, v));
                        }
                    }
                    Term::map(out)
                }),
                prop::collection::vec(inner, 0..3)
                    .prop_map(|args| Term::apply(ProdId("S ::= \"f\"".into()), args)),
            ]
        })
    }

    proptest! {
        #[test]
        fn canon_round_trips(t in ground_term_strategy()) {
            let s = canon_string(&t);
            let back = parse_canon(&s).unwrap();
            prop_assert!(structurally_equal(&t, &back).unwrap());
            prop_assert_eq!(canon_string(&back), s);
        }

        #[test]
        fn canonical_cmp_is_reflexive_and_antisymmetric(
            a in ground_term_strategy(),
            b in ground_term_strategy(),
        ) {
            prop_assert!(canonical_cmp(&a, &a).is_eq());
            let ab = canonical_cmp(&a, &b);
            let ba = canonical_cmp(&b, &a);
            prop_assert_eq!(ab, ba.reverse());
        }

        #[test]
        fn substitution_of_closed_patterns_is_ground(t in ground_term_strategy()) {
            let got = substitute(&t, &Substitution::new()).unwrap();
            prop_assert!(got.is_ground());
            prop_assert!(structurally_equal(&got, &t).unwrap());
        }
    }
}
