//! Printing definitions and terms back to surface syntax.
//!
//! Printing is the inverse of parsing: reparsing a printed definition yields
//! an equal definition. The printed form is also the basis of the
//! definition fingerprint used by trace certificates, so the layout here is
//! deliberately canonical — one syntax declaration per sort, cells one per
//! line, priorities always explicit.

use std::fmt::Write as _;

use crate::grammar::ProdItem;
use crate::term::{builtin, ElemsAt, Sort, Term, VarKind};

use super::{Definition, INPUT_MARKER};

/// Operator precedence for condition printing; higher binds tighter.
fn prec_of(t: &Term) -> u8 {
    match t {
        Term::Apply { prod, .. } => match prod.as_str() {
            builtin::OR_BOOL => 1,
            builtin::AND_BOOL => 2,
            builtin::NOT_BOOL => 3,
            builtin::EQ_K | builtin::LT_INT | builtin::LE_INT => 4,
            builtin::PLUS_INT => 5,
            _ => 7,
        },
        _ => 7,
    }
}

fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
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
    out
}

/// Prints a term in surface syntax.
pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, t, 0);
    s
}

fn write_term(out: &mut String, t: &Term, min_prec: u8) {
    let my_prec = prec_of(t);
    let parens = my_prec < min_prec;
    if parens {
        out.push('(');
    }
    match t {
        Term::Variable { name, sort, kind } => match kind {
            VarKind::Anonymous => {
                if sort.is_k() {
                    out.push('_');
                } else {
                    let _ = write!(out, "_:{sort}");
                }
            }
            VarKind::Placeholder(n) => {
                let _ = write!(out, "?{n}?");
            }
            VarKind::Named => {
                if name == INPUT_MARKER || !sort.is_k() {
                    let _ = write!(out, "{name}:{sort}");
                } else {
                    out.push_str(name);
                }
            }
        },
        Term::Token { sort, text } => {
            if *sort == Sort::string() {
                out.push_str(&escape_string(text));
            } else {
                out.push_str(text);
            }
        }
        Term::Empty(s) => {
            if *s == Sort::list() {
                out.push_str(".List");
            } else if *s == Sort::map() {
                out.push_str(".Map");
            } else {
                out.push_str(".K");
            }
        }
        Term::Rewrite { lhs, rhs } => {
            write_term(out, lhs, 0);
            out.push_str(" => ");
            write_term(out, rhs, 0);
        }
        Term::List { elems, rest, at } => match (rest, at) {
            (None, _) => write_elems(out, elems),
            (Some(r), ElemsAt::Front) => {
                write_elems(out, elems);
                out.push(' ');
                write_term(out, r, 0);
            }
            (Some(r), ElemsAt::Back) => {
                write_term(out, r, 0);
                out.push(' ');
                write_elems(out, elems);
            }
        },
        Term::Map { binds, rest } => {
            let mut first = true;
            if let Some(r) = rest {
                write_term(out, r, 0);
                first = false;
            }
            for (k, v) in binds {
                if !first {
                    out.push(' ');
                }
                first = false;
                write_term(out, k, 0);
                out.push_str(" |-> ");
                write_term(out, v, 0);
            }
        }
        Term::Apply { prod, args } => match prod.as_str() {
            builtin::OR_BOOL => write_infix(out, "orBool", args, 1),
            builtin::AND_BOOL => write_infix(out, "andBool", args, 2),
            builtin::NOT_BOOL => {
                out.push_str("notBool ");
                write_term(out, &args[0], 3);
            }
            builtin::EQ_K => write_cmp(out, "==K", args),
            builtin::LT_INT => write_cmp(out, "<Int", args),
            builtin::LE_INT => write_cmp(out, "<=Int", args),
            builtin::PLUS_INT => write_infix(out, "+Int", args, 5),
            builtin::LOOKUP_OR_DEFAULT => {
                write_term(out, &args[0], 7);
                out.push('[');
                write_term(out, &args[1], 0);
                out.push_str("] orDefault ");
                write_term(out, &args[2], 7);
            }
            builtin::MAP_UPDATE => {
                write_term(out, &args[0], 7);
                out.push('[');
                write_term(out, &args[1], 0);
                out.push_str(" <- ");
                write_term(out, &args[2], 0);
                out.push(']');
            }
            _ => {
                let user = user_production_text(prod.as_str(), args);
                out.push_str(&user);
            }
        },
    }
    if parens {
        out.push(')');
    }
}

fn write_elems(out: &mut String, elems: &[Term]) {
    out.push('[');
    for (i, e) in elems.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_term(out, e, 0);
    }
    out.push(']');
}

fn write_infix(out: &mut String, op: &str, args: &[Term], level: u8) {
    // Left-associative: the left child may sit at the same level, the right
    // child must bind tighter.
    write_term(out, &args[0], level);
    let _ = write!(out, " {op} ");
    write_term(out, &args[1], level + 1);
}

fn write_cmp(out: &mut String, op: &str, args: &[Term]) {
    // Non-associative: both operands must bind tighter.
    write_term(out, &args[0], 5);
    let _ = write!(out, " {op} ");
    write_term(out, &args[1], 5);
}

/// Reconstructs the surface form of a user production application from its
/// production id, which embeds the item sequence.
fn user_production_text(prod_id: &str, args: &[Term]) -> String {
    let items = parse_prod_id_items(prod_id);
    let mut parts: Vec<String> = Vec::new();
    let mut next_arg = 0usize;
    for item in items {
        match item {
            IdItem::Literal(l) => parts.push(l),
            IdItem::Nt => {
                let arg = args
                    .get(next_arg)
                    .expect("application arity matches its production");
                next_arg += 1;
                parts.push(print_term(arg));
            }
        }
    }
    parts.join(" ")
}

enum IdItem {
    Literal(String),
    Nt,
}

/// Production ids look like `Sort ::= "lit" Nt ...`; this recovers the item
/// sequence (a trailing ` #N` disambiguator is ignored).
fn parse_prod_id_items(prod_id: &str) -> Vec<IdItem> {
    let after = match prod_id.find(" ::= ") {
        Some(i) => &prod_id[i + 5..],
        None => return Vec::new(),
    };
    let mut items = Vec::new();
    let chars: Vec<char> = after.chars().collect();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut lit = String::new();
            i += 1;
            while i < chars.len() {
                match chars[i] {
                    '\\' => {
                        if let Some(&n) = chars.get(i + 1) {
                            lit.push(n);
                            i += 2;
                        } else {
                            i += 1;
                        }
                    }
                    '"' => {
                        i += 1;
                        break;
                    }
                    other => {
                        lit.push(other);
                        i += 1;
                    }
                }
            }
            items.push(IdItem::Literal(lit));
        } else if c == '#' {
            // ` #N` disambiguator at the end.
            break;
        } else {
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            items.push(IdItem::Nt);
        }
    }
    items
}

/// Prints a whole definition in canonical layout.
pub fn print_definition(def: &Definition) -> String {
    let mut out = String::new();

    for sort in &def.grammar.declared {
        if def.grammar.is_token_sort(sort) {
            let _ = writeln!(out, "syntax {sort}");
            continue;
        }
        let alts: Vec<String> = def
            .grammar
            .productions_of(sort)
            .iter()
            .map(|&i| {
                def.grammar.production_at(i)
                    .items
                    .iter()
                    .map(|item| match item {
                        ProdItem::Literal(l) => escape_string(l),
                        ProdItem::Nt(s) => s.0.clone(),
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let _ = writeln!(out, "syntax {sort} ::= {}", alts.join(" | "));
    }

    out.push_str("\nconfiguration\n");
    for c in &def.cells {
        let attrs = c
            .attrs
            .iter()
            .map(|a| format!(" {a}"))
            .collect::<String>();
        let _ = writeln!(
            out,
            "  <{}{attrs}> {} </{}>",
            c.name,
            print_term(&c.initial),
            c.name
        );
    }

    for r in &def.rules {
        out.push_str("\nrule\n");
        for (name, body) in &r.cells {
            let _ = writeln!(out, "  <{name}> {} </{name}>", print_term(body));
        }
        if let Some(cond) = &r.requires {
            let _ = writeln!(out, "  requires {}", print_term(cond));
        }
        let _ = writeln!(out, "  [priority({})]", r.priority);
    }

    out
}
