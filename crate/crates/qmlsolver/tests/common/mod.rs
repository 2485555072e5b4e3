#![allow(dead_code)]

use qmlsolver::formula::*;
use qmlsolver::model::Interpretation;
use qmlsolver::oracle::Bounds;
use qmlsolver::parse::parse_formula;
use rand::Rng;

pub fn p(s: &str) -> Formula {
    parse_formula(s).unwrap()
}

/// Replaces every constant by a definite description picked from `bodies`.
pub fn constants_to_iota<R: Rng>(f: &Formula, rng: &mut R, bodies: &[Formula]) -> Formula {
    let body = bodies[rng.gen_range(0..bodies.len())].clone();
    map_terms(f, &|t| match t {
        Term::Const(_) => Some(Term::Iota(name("z"), Box::new(body.clone()))),
        _ => None,
    })
}

pub fn map_terms(f: &Formula, g: &dyn Fn(&Term) -> Option<Term>) -> Formula {
    let mt = |t: &Term| g(t).unwrap_or_else(|| t.clone());
    match f {
        Formula::True => Formula::True,
        Formula::Atom(p, ts) => Formula::Atom(p.clone(), ts.iter().map(mt).collect()),
        Formula::Eq(a, b) => Formula::Eq(mt(a), mt(b)),
        Formula::Not(a) => not(map_terms(a, g)),
        Formula::And(a, b) => and(map_terms(a, g), map_terms(b, g)),
        Formula::Exists(x, a) => Formula::Exists(x.clone(), Box::new(map_terms(a, g))),
        Formula::ExistsOther(x, a) => Formula::ExistsOther(x.clone(), Box::new(map_terms(a, g))),
        Formula::Dia(a, b) => dia(*a, map_terms(b, g)),
    }
}

/// Number of valuations of the unary atoms and constant equalities of `f`.
pub fn atom_types(f: &Formula) -> usize {
    1 << (f.predicates().values().filter(|&&n| n == 1).count() + f.constants().len())
}

/// Oracle bounds for the corpus: tree depth 2, branching 3, domain up to #types + 1.
pub fn corpus_bounds(f: &Formula) -> Bounds {
    Bounds { max_worlds: 4, max_depth: 2, max_branching: 3, max_domain: atom_types(f) + 1 }
}

/// Worlds reachable from `root`, root included.
pub fn reachable(m: &Interpretation, root: usize) -> Vec<usize> {
    m.reachable(root)
}

/// `c` designates one and the same element at every world reachable from the root.
pub fn rigid_from_root(m: &Interpretation, c: &str) -> bool {
    let vals: Vec<Option<u32>> = reachable(m, 0).iter().map(|&w| m.worlds[w].consts.get(c).copied()).collect();
    vals.iter().all(|v| v.is_some() && *v == vals[0])
}
