//! Printing formulas in the syntax accepted by [`crate::parse`].
//!
//! `¬◇ₐ¬` prints as `box`, `¬∃x¬` as `forall` and `¬⊤` as `false`; every
//! other node prints in primitive form. Output parses back to the same tree.

use crate::formula::{Formula, Term};

pub fn render(f: &Formula) -> String {
    let mut out = String::new();
    go(f, Ctx::Top, true, &mut out);
    out
}

pub fn render_term(t: &Term) -> String {
    let mut out = String::new();
    term(t, &mut out);
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Top,
    /// left operand of `and`
    AndLeft,
    /// operand of a prefix operator or right operand of `and`
    Unary,
}

fn go(f: &Formula, ctx: Ctx, rightmost: bool, out: &mut String) {
    let is_binder = matches!(f, Formula::Exists(..) | Formula::ExistsOther(..)) || as_forall(f).is_some();
    let needs_parens = match f {
        Formula::And(..) => ctx == Ctx::Unary,
        _ => is_binder && !rightmost,
    };
    if needs_parens {
        out.push('(');
        go(f, Ctx::Top, true, out);
        out.push(')');
        return;
    }
    if let Some((a, g)) = as_box(f) {
        out.push_str(&format!("box {a} "));
        go(g, Ctx::Unary, rightmost, out);
        return;
    }
    if let Some((x, g)) = as_forall(f) {
        out.push_str(&format!("forall {x}. "));
        go(g, Ctx::Top, true, out);
        return;
    }
    match f {
        Formula::True => out.push_str("true"),
        Formula::Not(g) if **g == Formula::True => out.push_str("false"),
        Formula::Atom(p, ts) => {
            out.push_str(p);
            if !ts.is_empty() {
                out.push('(');
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    term(t, out);
                }
                out.push(')');
            }
        }
        Formula::Eq(a, b) => {
            term(a, out);
            out.push_str(" = ");
            term(b, out);
        }
        Formula::Not(g) => {
            out.push_str("not ");
            go(g, Ctx::Unary, rightmost, out);
        }
        Formula::And(a, b) => {
            go(a, Ctx::AndLeft, false, out);
            out.push_str(" and ");
            go(b, Ctx::Unary, rightmost, out);
        }
        Formula::Exists(x, g) => {
            out.push_str(&format!("exists {x}. "));
            go(g, Ctx::Top, true, out);
        }
        Formula::ExistsOther(x, g) => {
            out.push_str(&format!("exists_ne {x}. "));
            go(g, Ctx::Top, true, out);
        }
        Formula::Dia(a, g) => {
            out.push_str(&format!("dia {a} "));
            go(g, Ctx::Unary, rightmost, out);
        }
    }
}

fn as_box(f: &Formula) -> Option<(u32, &Formula)> {
    if let Formula::Not(g) = f {
        if let Formula::Dia(a, h) = &**g {
            if let Formula::Not(k) = &**h {
                return Some((*a, k));
            }
        }
    }
    None
}

fn as_forall(f: &Formula) -> Option<(&str, &Formula)> {
    if let Formula::Not(g) = f {
        if let Formula::Exists(x, h) = &**g {
            if let Formula::Not(k) = &**h {
                return Some((x, k));
            }
        }
    }
    None
}

fn term(t: &Term, out: &mut String) {
    match t {
        Term::Var(x) | Term::Const(x) => out.push_str(x),
        Term::Iota(x, f) => {
            out.push_str(&format!("(iota {x}. "));
            go(f, Ctx::Top, true, out);
            out.push(')');
        }
    }
}
