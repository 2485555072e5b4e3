//! Satisfiability-preserving translations between language variants and semantics.
//!
//! In [`Mode::Validity`] the auxiliary sentences a translation needs are
//! conjoined to the formula under `□^π` for every relevant path `π`; in
//! [`Mode::Global`] they are added to the theory instead.

use crate::closure::{is_one_variable_up_to_renaming, one_variable_form};
use crate::error::{Error, Result};
use crate::formula::*;
use crate::fresh::fresh;
use crate::parse::Logic;
use std::collections::{BTreeMap, BTreeSet};

pub type ModalityPath = Vec<Modality>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Validity,
    Global,
}

/// Calls `f(node, path)` on every formula node, descending into ι bodies.
fn walk(f: &Formula, path: &mut ModalityPath, cb: &mut dyn FnMut(&Formula, &ModalityPath)) {
    cb(f, path);
    let terms = |ts: &[&Term], path: &mut ModalityPath, cb: &mut dyn FnMut(&Formula, &ModalityPath)| {
        for t in ts {
            if let Term::Iota(_, body) = t {
                walk(body, path, cb);
            }
        }
    };
    match f {
        Formula::True => {}
        Formula::Atom(_, ts) => terms(&ts.iter().collect::<Vec<_>>(), path, cb),
        Formula::Eq(a, b) => terms(&[a, b], path, cb),
        Formula::Not(g) | Formula::Exists(_, g) | Formula::ExistsOther(_, g) => walk(g, path, cb),
        Formula::And(a, b) => {
            walk(a, path, cb);
            walk(b, path, cb);
        }
        Formula::Dia(a, g) => {
            path.push(*a);
            walk(g, path, cb);
            path.pop();
        }
    }
}

/// The modality sequences above each occurrence of `psi` in `phi`.
pub fn relevant_paths(phi: &Formula, psi: &Formula) -> Result<BTreeSet<ModalityPath>> {
    let mut out = BTreeSet::new();
    walk(phi, &mut vec![], &mut |g, p| {
        if g == psi {
            out.insert(p.clone());
        }
    });
    if out.is_empty() {
        return Err(Error::Invalid(format!("{psi} is not a subformula of {phi}")));
    }
    Ok(out)
}

/// Every path under which some subformula is evaluated.
pub fn all_paths(phi: &Formula) -> BTreeSet<ModalityPath> {
    let mut out = BTreeSet::new();
    walk(phi, &mut vec![], &mut |_, p| {
        out.insert(p.clone());
    });
    out
}

/// Paths of the atoms that mention constant `c`.
fn constant_paths(phi: &Formula, c: &str) -> BTreeSet<ModalityPath> {
    let mut out = BTreeSet::new();
    walk(phi, &mut vec![], &mut |g, p| {
        let mentions = |t: &Term| matches!(t, Term::Const(k) if &**k == c);
        let hit = match g {
            Formula::Atom(_, ts) => ts.iter().any(mentions),
            Formula::Eq(a, b) => mentions(a) || mentions(b),
            _ => false,
        };
        if hit {
            out.insert(p.clone());
        }
    });
    out
}

fn signature(fs: &[&Formula]) -> BTreeSet<Name> {
    let mut s = BTreeSet::new();
    for f in fs {
        s.extend(f.predicates().into_keys());
        s.extend(f.constants());
        s.extend(f.variables());
    }
    s
}

/// The single variable name used by `f`, or `x`.
fn var_name(f: &Formula, g: &[Formula]) -> Name {
    let mut vs = f.variables();
    for h in g {
        vs.extend(h.variables());
    }
    if vs.len() == 1 {
        vs.into_iter().next().unwrap()
    } else {
        name("x")
    }
}

/// Accumulates auxiliary sentences with the paths they must hold on.
#[derive(Default)]
struct Aux(BTreeMap<Formula, BTreeSet<ModalityPath>>);

impl Aux {
    fn add(&mut self, chi: Formula, paths: impl IntoIterator<Item = ModalityPath>) {
        self.0.entry(chi).or_default().extend(paths);
    }

    fn attach(self, phi: Formula, mut gamma: Vec<Formula>, mode: Mode) -> (Formula, Vec<Formula>) {
        match mode {
            Mode::Global => {
                for chi in self.0.into_keys() {
                    if !gamma.contains(&chi) {
                        gamma.push(chi);
                    }
                }
                (phi, gamma)
            }
            Mode::Validity => {
                let extra = self.0.into_iter().flat_map(|(chi, ps)| ps.into_iter().map(move |p| box_path(&p, chi.clone())));
                (conj(std::iter::once(phi).chain(extra)), gamma)
            }
        }
    }
}

fn map_terms_in_atoms(f: &Formula, g: &mut dyn FnMut(&Formula) -> Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::Atom(..) | Formula::Eq(..) => g(f),
        Formula::Not(h) => not(map_terms_in_atoms(h, g)),
        Formula::And(a, b) => and(map_terms_in_atoms(a, g), map_terms_in_atoms(b, g)),
        Formula::Exists(x, h) => Formula::Exists(x.clone(), Box::new(map_terms_in_atoms(h, g))),
        Formula::ExistsOther(x, h) => Formula::ExistsOther(x.clone(), Box::new(map_terms_in_atoms(h, g))),
        Formula::Dia(a, h) => dia(*a, map_terms_in_atoms(h, g)),
    }
}

/// Like [`map_terms_in_atoms`] but passing the current modality path.
fn map_atoms_with_path(f: &Formula, path: &mut ModalityPath, g: &mut dyn FnMut(&Formula, &ModalityPath) -> Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::Atom(..) | Formula::Eq(..) => g(f, path),
        Formula::Not(h) => not(map_atoms_with_path(h, path, g)),
        Formula::And(a, b) => {
            let l = map_atoms_with_path(a, path, g);
            and(l, map_atoms_with_path(b, path, g))
        }
        Formula::Exists(x, h) => Formula::Exists(x.clone(), Box::new(map_atoms_with_path(h, path, g))),
        Formula::ExistsOther(x, h) => Formula::ExistsOther(x.clone(), Box::new(map_atoms_with_path(h, path, g))),
        Formula::Dia(a, h) => {
            path.push(*a);
            let r = dia(*a, map_atoms_with_path(h, path, g));
            path.pop();
            r
        }
    }
}

fn atom_terms(f: &Formula) -> Vec<&Term> {
    match f {
        Formula::Atom(_, ts) => ts.iter().collect(),
        Formula::Eq(a, b) => vec![a, b],
        _ => vec![],
    }
}

fn rebuild_atom(f: &Formula, ts: Vec<Term>) -> Formula {
    match f {
        Formula::Atom(p, _) => Formula::Atom(p.clone(), ts),
        Formula::Eq(..) => {
            let mut it = ts.into_iter();
            Formula::Eq(it.next().unwrap(), it.next().unwrap())
        }
        _ => unreachable!(),
    }
}

/// Removes definite descriptions.
///
/// Each `ιx.ψ` becomes `ιx.P_ψ(x)` with `∀x(P_ψ(x) ↔ ψ)`; then every atom
/// `α(ιx.Q(x))` becomes `α(c) ∧ Q(c) ∧ ∀x(Q(x) → x = c)` for a fresh constant
/// `c`, together with the side condition `∃xQ(x) → Q(c)` on the atom's paths.
/// Without that side condition the fresh constant could be chosen outside `Q`,
/// which makes negated occurrences true when they should not be.
pub fn eliminate_dd(phi: &Formula, gamma: &[Formula], mode: Mode) -> Result<(Formula, Vec<Formula>)> {
    if !phi.has_iota() && !gamma.iter().any(Formula::has_iota) {
        return Ok((phi.clone(), gamma.to_vec()));
    }
    let mut err = None;
    let mut check = |f: &Formula| {
        f.visit(&mut |g| {
            if let Formula::Atom(p, ts) = g {
                if ts.len() > 1 && ts.iter().any(Term::has_iota) {
                    err = Some(format!("definite description inside the {}-ary predicate {p}", ts.len()));
                }
            }
        });
        f.visit_terms(&mut |t| {
            if let Term::Iota(x, body) = t {
                if body.free_vars().iter().any(|y| y != x) {
                    err = Some(format!("definite description with parameters: {t}"));
                }
            }
        });
    };
    check(phi);
    gamma.iter().for_each(&mut check);
    if let Some(e) = err {
        return Err(Error::Fragment(e));
    }

    let all: Vec<&Formula> = std::iter::once(phi).chain(gamma).collect();
    let mut taken = signature(&all);
    let mut preds: BTreeMap<Formula, Name> = BTreeMap::new();
    let mut consts: BTreeMap<Name, Name> = BTreeMap::new();

    // stage 1, innermost first: ιx.ψ ↦ ιx.P_ψ(x), recording norm_ψ with its paths
    fn norm_term(
        t: &Term,
        path: &ModalityPath,
        taken: &mut BTreeSet<Name>,
        preds: &mut BTreeMap<Formula, Name>,
        aux: &mut Aux,
    ) -> Term {
        match t {
            Term::Iota(x, body) => {
                let mut p2 = path.clone();
                let body = norm_formula(body, &mut p2, taken, preds, aux);
                let key = body.rename_all_vars(&name(TYPE_VAR));
                let p = preds
                    .entry(key.clone())
                    .or_insert_with(|| {
                        let n = fresh("P_dd", &key.to_string(), taken);
                        taken.insert(n.clone());
                        n
                    })
                    .clone();
                let px = Formula::Atom(p.clone(), vec![Term::Var(x.clone())]);
                let norm = not(exists(x, not(iff(px.clone(), body))));
                aux.add(norm, [path.clone()]);
                Term::Iota(x.clone(), Box::new(px))
            }
            _ => t.clone(),
        }
    }
    fn norm_formula(
        f: &Formula,
        path: &mut ModalityPath,
        taken: &mut BTreeSet<Name>,
        preds: &mut BTreeMap<Formula, Name>,
        aux: &mut Aux,
    ) -> Formula {
        map_atoms_with_path(f, path, &mut |a, p| {
            let ts = atom_terms(a).into_iter().map(|t| norm_term(t, p, taken, preds, aux)).collect();
            rebuild_atom(a, ts)
        })
    }

    let mut aux = Aux::default();
    let phi1 = norm_formula(phi, &mut vec![], &mut taken, &mut preds, &mut aux);
    let mut gaux = Aux::default();
    let gamma1: Vec<Formula> =
        gamma.iter().map(|g| norm_formula(g, &mut vec![], &mut taken, &mut preds, &mut gaux)).collect();

    // stage 2: α(ιx.Q(x)) ↦ α(c) ∧ Q(c) ∧ ∀x(Q(x) → x = c)
    let mut stage2 = |f: &Formula, aux: &mut Aux| -> Formula {
        map_atoms_with_path(f, &mut vec![], &mut |a, p| {
            let mut extra = Vec::new();
            let ts = atom_terms(a)
                .into_iter()
                .map(|t| match t {
                    Term::Iota(x, body) => {
                        let Formula::Atom(q, _) = &**body else { unreachable!() };
                        let c = consts
                            .entry(q.clone())
                            .or_insert_with(|| {
                                let n = fresh("c_dd", q, &taken);
                                taken.insert(n.clone());
                                n
                            })
                            .clone();
                        let qc = Formula::Atom(q.clone(), vec![Term::Const(c.clone())]);
                        let qx = Formula::Atom(q.clone(), vec![Term::Var(x.clone())]);
                        extra.push(qc.clone());
                        extra.push(forall(x, implies(qx.clone(), eq(Term::Var(x.clone()), Term::Const(c.clone())))));
                        aux.add(implies(exists(x, qx), qc), [p.clone()]);
                        Term::Const(c)
                    }
                    _ => t.clone(),
                })
                .collect();
            conj(std::iter::once(rebuild_atom(a, ts)).chain(extra))
        })
    };
    let phi2 = stage2(&phi1, &mut aux);
    let gamma2: Vec<Formula> = gamma1.iter().map(|g| stage2(g, &mut gaux)).collect();
    // auxiliary sentences are ι-free already
    let (phi3, gamma3) = aux.attach(phi2, gamma2, mode);
    // theory auxiliaries always hold globally
    let (_, gamma4) = gaux.attach(Formula::True, gamma3, Mode::Global);
    Ok((phi3, gamma4))
}

fn constant_guard(f: &Formula, pc: &BTreeMap<Name, Name>) -> Formula {
    let mut seen = BTreeSet::new();
    let mut guards = Vec::new();
    for t in atom_terms(f) {
        if let Term::Const(c) = t {
            if seen.insert(c.clone()) {
                guards.push(Formula::Atom(pc[c].clone(), vec![]));
            }
        }
    }
    guards.push(f.clone());
    conj(guards)
}

/// Fresh 0-ary `p_c` per constant: `p_c` stands for "c designates here".
/// Maps partial-interpretation satisfiability to total-interpretation satisfiability.
pub fn partial_to_total(phi: &Formula, gamma: &[Formula]) -> Result<(Formula, Vec<Formula>)> {
    partial_to_total_with_map(phi, gamma).map(|(f, g, _)| (f, g))
}

/// [`partial_to_total`] that also returns the definedness proposition of each constant.
pub fn partial_to_total_with_map(
    phi: &Formula,
    gamma: &[Formula],
) -> Result<(Formula, Vec<Formula>, BTreeMap<Name, Name>)> {
    if phi.has_iota() || gamma.iter().any(Formula::has_iota) {
        return Err(Error::Invalid("partial_to_total expects ι-free input".into()));
    }
    let all: Vec<&Formula> = std::iter::once(phi).chain(gamma).collect();
    let mut taken = signature(&all);
    let mut pc = BTreeMap::new();
    for f in &all {
        for c in f.constants() {
            if !pc.contains_key(&c) {
                let n = fresh("p_def", &c, &taken);
                taken.insert(n.clone());
                pc.insert(c, n);
            }
        }
    }
    let tr = |f: &Formula| map_terms_in_atoms(f, &mut |a| constant_guard(a, &pc));
    Ok((tr(phi), gamma.iter().map(tr).collect(), pc))
}

/// Forces every constant to designate wherever it is used: maps
/// total-interpretation satisfiability to partial-interpretation satisfiability.
pub fn total_to_partial(phi: &Formula, gamma: &[Formula], mode: Mode) -> Result<(Formula, Vec<Formula>)> {
    if phi.has_iota() || gamma.iter().any(Formula::has_iota) {
        return Err(Error::Invalid("total_to_partial expects ι-free input".into()));
    }
    let x = var_name(phi, gamma);
    let designates = |c: &Name| exists(&x, eq(Term::Var(x.clone()), Term::Const(c.clone())));
    let mut out_gamma = gamma.to_vec();
    let mut consts: BTreeSet<Name> = phi.constants();
    gamma.iter().for_each(|g| consts.extend(g.constants()));
    match mode {
        Mode::Global => {
            for c in &consts {
                let d = designates(c);
                if !out_gamma.contains(&d) {
                    out_gamma.push(d);
                }
            }
            Ok((phi.clone(), out_gamma))
        }
        Mode::Validity => {
            let mut aux = Aux::default();
            for c in phi.constants() {
                aux.add(designates(&c), constant_paths(phi, &c));
            }
            // constants used only in the theory must designate everywhere
            for c in consts.iter().filter(|c| !phi.constants().contains(*c)) {
                out_gamma.push(designates(c));
            }
            let (f, _) = aux.attach(phi.clone(), vec![], Mode::Validity);
            Ok((f, out_gamma))
        }
    }
}

/// Relativises quantifiers to a fresh existence predicate `E`, so that
/// expanding-domain satisfiability becomes constant-domain satisfiability.
pub fn expanding_to_constant(phi: &Formula) -> Result<Formula> {
    if phi.has_iota() {
        return Err(Error::Invalid("expanding_to_constant expects ι-free input".into()));
    }
    let taken = signature(&[phi]);
    let e = fresh("E_dom", &phi.to_string(), &taken);
    let x = var_name(phi, &[]);
    let ex = |v: &Name| Formula::Atom(e.clone(), vec![Term::Var(v.clone())]);
    fn rel(f: &Formula, ex: &dyn Fn(&Name) -> Formula) -> Formula {
        match f {
            Formula::True | Formula::Atom(..) | Formula::Eq(..) => f.clone(),
            Formula::Not(g) => not(rel(g, ex)),
            Formula::And(a, b) => and(rel(a, ex), rel(b, ex)),
            Formula::Exists(v, g) => Formula::Exists(v.clone(), Box::new(and(ex(v), rel(g, ex)))),
            Formula::ExistsOther(v, g) => Formula::ExistsOther(v.clone(), Box::new(and(ex(v), rel(g, ex)))),
            Formula::Dia(a, g) => dia(*a, rel(g, ex)),
        }
    }
    let body = rel(phi, &ex);
    let paths = all_paths(phi);
    let mut aux = Aux::default();
    aux.add(exists(&x, ex(&x)), paths.iter().cloned());
    for p in &paths {
        for a in phi.modalities() {
            let mut q = p.clone();
            q.push(a);
            if paths.contains(&q) {
                aux.add(forall(&x, implies(ex(&x), bx(a, ex(&x)))), [p.clone()]);
            }
        }
    }
    for c in phi.constants() {
        let ec = Formula::Atom(e.clone(), vec![Term::Const(c.clone())]);
        aux.add(ec, constant_paths(phi, &c));
    }
    // free variables of a formula range over the root domain
    for v in phi.free_vars() {
        aux.add(ex(&v), [vec![]]);
    }
    Ok(aux.attach(body, vec![], Mode::Validity).0)
}

/// Rewrites constants so they occur only in atoms `x = c`:
/// `P(c)` ↦ `∃x(P(x) ∧ x = c)`, `c = d` ↦ `∃x(x = c ∧ x = d)`, `c = x` ↦ `x = c`,
/// and `x = x` ↦ `⊤`.
pub fn normalize_constants(phi: &Formula, x: &Name) -> Formula {
    let xv = Term::Var(x.clone());
    map_terms_in_atoms(phi, &mut |a| match a {
        Formula::Eq(Term::Var(u), Term::Var(v)) if u == v => top(),
        Formula::Eq(Term::Const(c), Term::Var(v)) => eq(Term::Var(v.clone()), Term::Const(c.clone())),
        Formula::Eq(Term::Const(c), Term::Const(d)) => {
            exists(x, and(eq(xv.clone(), Term::Const(c.clone())), eq(xv.clone(), Term::Const(d.clone()))))
        }
        Formula::Atom(p, ts) if ts.len() == 1 => match &ts[0] {
            Term::Const(c) => exists(x, and(atom(p, vec![xv.clone()]), eq(xv.clone(), Term::Const(c.clone())))),
            _ => a.clone(),
        },
        _ => a.clone(),
    })
}

/// Replaces constants by the difference quantifier: each `x = c` becomes
/// `Q_c(x) ∧ ¬∃^≠x Q_c(x)`.
pub fn constants_to_difference(phi: &Formula, gamma: &[Formula]) -> Result<(Formula, Vec<Formula>)> {
    let all: Vec<&Formula> = std::iter::once(phi).chain(gamma).collect();
    if all.iter().any(|f| f.has_iota() || !is_one_variable_up_to_renaming(f) || f.variables().len() > 1) {
        return Err(Error::Fragment("constants_to_difference needs one-variable ι-free input".into()));
    }
    let x = var_name(phi, gamma);
    let mut taken = signature(&all);
    let mut qc: BTreeMap<Name, Name> = BTreeMap::new();
    for f in &all {
        for c in f.constants() {
            let n = fresh("Q_con", &c, &taken);
            taken.insert(n.clone());
            qc.insert(c, n);
        }
    }
    let tr = |f: &Formula| {
        let g = normalize_constants(f, &x);
        map_terms_in_atoms(&g, &mut |a| match a {
            Formula::Eq(Term::Var(v), Term::Const(c)) => {
                let q = atom(&qc[c], vec![Term::Var(v.clone())]);
                and(q.clone(), not(Formula::ExistsOther(v.clone(), Box::new(q))))
            }
            _ => a.clone(),
        })
    };
    Ok((tr(phi), gamma.iter().map(tr).collect()))
}

/// Removes the difference quantifier, innermost first:
/// `∃^≠xψ` ↦ `∃xP_ψ(x) ∧ (x = c_ψ → ∃x(¬(x = c_ψ) ∧ P_ψ(x)))` with
/// `singl_ψ = ∀x(ψ → P_ψ(x)) ∧ ∀x(P_ψ(x) → ψ ∧ ∃x(x = c_ψ ∧ ψ))`.
///
/// The last conjunct says that `c_ψ` denotes a `ψ`-element at the current
/// world; writing it as a substitution `ψ(c_ψ)` would evaluate the non-rigid
/// `c_ψ` at other worlds whenever `ψ` is modal.
pub fn difference_to_constants(phi: &Formula, gamma: &[Formula], mode: Mode) -> Result<(Formula, Vec<Formula>)> {
    if !phi.has_difference() && !gamma.iter().any(Formula::has_difference) {
        return Ok((phi.clone(), gamma.to_vec()));
    }
    let all: Vec<&Formula> = std::iter::once(phi).chain(gamma).collect();
    let mut taken = signature(&all);
    let mut made: BTreeMap<Formula, (Name, Name)> = BTreeMap::new();

    fn go(
        f: &Formula,
        path: &mut ModalityPath,
        taken: &mut BTreeSet<Name>,
        made: &mut BTreeMap<Formula, (Name, Name)>,
        aux: &mut Aux,
    ) -> Formula {
        match f {
            Formula::True | Formula::Atom(..) | Formula::Eq(..) => f.clone(),
            Formula::Not(g) => not(go(g, path, taken, made, aux)),
            Formula::And(a, b) => {
                let l = go(a, path, taken, made, aux);
                and(l, go(b, path, taken, made, aux))
            }
            Formula::Exists(x, g) => Formula::Exists(x.clone(), Box::new(go(g, path, taken, made, aux))),
            Formula::Dia(a, g) => {
                path.push(*a);
                let r = dia(*a, go(g, path, taken, made, aux));
                path.pop();
                r
            }
            Formula::ExistsOther(x, g) => {
                let psi = go(g, path, taken, made, aux);
                let key = psi.rename_all_vars(&name(TYPE_VAR));
                let (p, c) = made
                    .entry(key.clone())
                    .or_insert_with(|| {
                        let k = key.to_string();
                        let p = fresh("P_ne", &k, taken);
                        taken.insert(p.clone());
                        let c = fresh("c_ne", &k, taken);
                        taken.insert(c.clone());
                        (p, c)
                    })
                    .clone();
                let xv = Term::Var(x.clone());
                let px = atom(&p, vec![xv.clone()]);
                let xc = eq(xv.clone(), Term::Const(c.clone()));
                let singl = and(
                    forall(x, implies(psi.clone(), px.clone())),
                    forall(x, implies(px.clone(), and(psi.clone(), exists(x, and(xc.clone(), psi.clone()))))),
                );
                aux.add(singl, [path.clone()]);
                and(exists(x, px.clone()), implies(xc.clone(), exists(x, and(not(xc), px))))
            }
        }
    }
    let mut aux = Aux::default();
    let phi2 = go(phi, &mut vec![], &mut taken, &mut made, &mut aux);
    let mut gaux = Aux::default();
    let gamma2: Vec<Formula> = gamma.iter().map(|g| go(g, &mut vec![], &mut taken, &mut made, &mut gaux)).collect();
    let (phi3, gamma3) = aux.attach(phi2, gamma2, mode);
    let (_, gamma4) = gaux.attach(Formula::True, gamma3, Mode::Global);
    Ok((phi3, gamma4))
}

/// `□⋀Γ → φ`, for global consequence over S5.
pub fn s5_global_to_validity(gamma: &[Formula], phi: &Formula, logic: Logic) -> Result<Formula> {
    match logic {
        Logic::S5 | Logic::S5n(1) => Ok(implies(bx(1, conj(gamma.iter().cloned())), phi.clone())),
        Logic::Kn(n) => Err(Error::Undecidable(format!(
            "global consequence over K{n} with constant domains is undecidable in this language"
        ))),
        Logic::S5n(n) => Err(Error::Undecidable(format!(
            "global consequence over S5 with {n} modalities is undecidable in this language"
        ))),
    }
}

/// The form the decision procedures read: one variable named `_x`, no ι, no
/// `∃^≠`, total constants occurring only in `_x = c`.
pub fn decision_form(phi: &Formula, partial: bool) -> Result<Formula> {
    prepare(phi, partial).map(|p| p.formula)
}

/// A sentence in decision form, with what is needed to read witnesses back.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub formula: Formula,
    /// constant ↦ the proposition standing for "it designates here"
    pub definedness: BTreeMap<Name, Name>,
    /// formulas after each step, for reports
    pub trace: Vec<(&'static str, Formula)>,
}

pub fn prepare(phi: &Formula, partial: bool) -> Result<Prepared> {
    if !phi.is_sentence() {
        return Err(Error::Invalid(format!("not a sentence: {phi}")));
    }
    let mut trace = vec![];
    let mut f = one_variable_form(phi)?;
    trace.push(("one_variable_form", f.clone()));
    f = difference_to_constants(&f, &[], Mode::Validity)?.0;
    trace.push(("difference_to_constants", f.clone()));
    f = eliminate_dd(&f, &[], Mode::Validity)?.0;
    trace.push(("eliminate_dd", f.clone()));
    let mut definedness = BTreeMap::new();
    if partial {
        let (g, _, pc) = partial_to_total_with_map(&f, &[])?;
        f = g;
        definedness = pc;
        trace.push(("partial_to_total", f.clone()));
    }
    let x = name(TYPE_VAR);
    f = normalize_constants(&f, &x).rename_all_vars(&x);
    trace.push(("normalize_constants", f.clone()));
    Ok(Prepared { formula: f, definedness, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    fn p(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn paths_example() {
        let phi = p("dia 1 not P(c) and dia 2 dia 3 P(c)");
        let pc = p("P(c)");
        let expected: BTreeSet<ModalityPath> = [vec![1], vec![2, 3]].into_iter().collect();
        assert_eq!(relevant_paths(&phi, &pc).unwrap(), expected);
        let npc = p("not P(c)");
        assert_eq!(relevant_paths(&phi, &npc).unwrap(), [vec![1]].into_iter().collect());
        assert_eq!(relevant_paths(&pc, &pc).unwrap(), [vec![]].into_iter().collect());
        assert!(relevant_paths(&pc, &p("Q(c)")).is_err());
    }

    #[test]
    fn box_path_prefixes() {
        let chi = p("q");
        assert_eq!(box_path(&[1, 2], chi.clone()), bx(1, bx(2, chi)));
    }

    #[test]
    fn dd_free_is_identity() {
        let f = p("exists x. P(x)");
        assert_eq!(eliminate_dd(&f, &[], Mode::Validity).unwrap(), (f.clone(), vec![]));
    }

    #[test]
    fn dd_rejects_binary_context() {
        let f = p("exists x. x = iota x. P(x, iota y. Q(y))");
        assert!(eliminate_dd(&f, &[], Mode::Validity).is_err());
    }

    #[test]
    fn dd_output_is_iota_free() {
        let f = p("exists x. x = iota y. Q(y)");
        let (g, _) = eliminate_dd(&f, &[], Mode::Validity).unwrap();
        assert!(!g.has_iota());
        assert_eq!(g.constants().len(), 1);
    }

    #[test]
    fn partial_to_total_examples() {
        let (f, _) = partial_to_total(&p("P(c)"), &[]).unwrap();
        let pc = f.predicates().into_keys().find(|k| k.starts_with("p_def")).unwrap();
        assert_eq!(f, and(atom(&pc, vec![]), p("P(c)")));
        let (g, _) = partial_to_total(&p("c = d"), &[]).unwrap();
        assert_eq!(g.predicates().len(), 2);
        let (h, _) = partial_to_total(&p("exists x. x = x"), &[]).unwrap();
        assert_eq!(h, p("exists x. x = x"));
    }

    #[test]
    fn total_to_partial_examples() {
        let (f, _) = total_to_partial(&p("dia 1 P(c)"), &[], Mode::Validity).unwrap();
        assert_eq!(f, and(p("dia 1 P(c)"), p("box 1 exists x. x = c")));
        let g = p("exists x. P(x)");
        assert_eq!(total_to_partial(&g, &[], Mode::Validity).unwrap().0, g);
        let (_, gm) = total_to_partial(&p("true"), &[p("P(c)")], Mode::Global).unwrap();
        assert_eq!(gm, vec![p("P(c)"), p("exists x. x = c")]);
    }

    #[test]
    fn constants_to_difference_examples() {
        let (f, _) = constants_to_difference(&p("P(c)"), &[]).unwrap();
        assert!(f.constants().is_empty());
        assert!(f.has_difference());
        let g = p("exists x. P(x)");
        assert_eq!(constants_to_difference(&g, &[]).unwrap().0, g);
    }

    #[test]
    fn difference_to_constants_nested_under_box() {
        let f = p("dia 1 exists x. exists_ne x. P(x)");
        let (g, _) = difference_to_constants(&f, &[], Mode::Validity).unwrap();
        assert!(!g.has_difference());
        // the singl conjunct sits under □₁
        let Formula::And(_, singl) = &g else { panic!() };
        assert!(matches!(&**singl, Formula::Not(d) if matches!(&**d, Formula::Dia(1, _))));
    }

    #[test]
    fn s5_global_examples() {
        let phi = p("forall x. P(x)");
        let f = s5_global_to_validity(&[phi.clone()], &phi, Logic::S5).unwrap();
        assert_eq!(f, implies(bx(1, phi.clone()), phi.clone()));
        assert_eq!(s5_global_to_validity(&[], &phi, Logic::S5).unwrap(), implies(bx(1, top()), phi.clone()));
        assert!(matches!(s5_global_to_validity(&[], &phi, Logic::S5n(2)), Err(Error::Undecidable(_))));
        assert!(matches!(s5_global_to_validity(&[], &phi, Logic::Kn(1)), Err(Error::Undecidable(_))));
    }
}
