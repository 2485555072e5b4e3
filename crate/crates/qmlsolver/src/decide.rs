//! Satisfiability of a sentence over one logic: normal form, search,
//! saturation, model extraction and a model check of the result.

use crate::closure::Closure;
use crate::error::{Error, Result};
use crate::formula::{Formula, Name};
use crate::kn::{ConstantSearch, ExpandingSearch, Limits};
use crate::levels::{Frames, Levels};
use crate::model::{satisfies, Assignment, Interpretation};
use crate::quasimodel::{quasimodel_to_model, saturate, WeakQuasimodel};
use crate::quasistate::{type_cap, TypeSpace};
use crate::reductions::{prepare, Prepared};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Procedure {
    /// constant domains over K_n
    ConstantKn,
    /// expanding domains over K_n
    ExpandingKn,
    /// constant domains over S5_n
    S5n,
}

impl Procedure {
    pub fn frames(self) -> Frames {
        match self {
            Procedure::S5n => Frames::S5,
            _ => Frames::K,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub search_nodes: u64,
    /// expanding search: largest multiset and deepest recursion
    pub max_state: usize,
    pub max_depth: usize,
    pub weak_worlds: usize,
    pub weak_runs: usize,
    pub model_worlds: usize,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub sat: bool,
    /// a model of the input sentence at world 0, checked
    pub model: Option<Interpretation>,
    pub stats: Stats,
}

/// Settings for one call.
#[derive(Clone, Copy, Debug)]
pub struct Options {
    /// constants may fail to designate
    pub partial: bool,
    pub limits: Option<Limits>,
}

impl Default for Options {
    fn default() -> Self {
        Options { partial: true, limits: None }
    }
}

/// Drops the definedness propositions and everything the normal form added,
/// undefining a constant wherever its proposition is false.
pub fn read_back(m: &Interpretation, prep: &Prepared, original: &Formula) -> Interpretation {
    let mut out = m.clone();
    let consts = original.constants();
    let preds: BTreeSet<Name> = original.predicates().into_keys().collect();
    for w in &mut out.worlds {
        for (c, p) in &prep.definedness {
            if !w.preds.get(p).is_some_and(|e| e.contains(&vec![])) {
                w.consts.remove(c);
            }
        }
        w.consts.retain(|c, _| consts.contains(c));
        w.preds.retain(|p, _| preds.contains(p));
    }
    out
}

pub fn check_model(m: &Interpretation, phi: &Formula, proc: Procedure) -> Result<()> {
    m.well_formed().map_err(Error::SelfCheck)?;
    if proc != Procedure::ExpandingKn && !m.is_constant_domain() {
        return Err(Error::SelfCheck("witness domains are not constant".into()));
    }
    if proc == Procedure::S5n {
        let mods = m.edges.iter().map(|e| e.0).collect();
        let all: Vec<usize> = (0..m.worlds.len()).collect();
        if !m.is_s5_on(&all, &mods) {
            return Err(Error::SelfCheck("witness relations are not equivalences".into()));
        }
    }
    if !satisfies(m, 0, &Assignment::new(), phi) {
        return Err(Error::SelfCheck("witness does not satisfy the formula at its root".into()));
    }
    Ok(())
}

/// Runs the search for a sentence already in decision form.
pub fn search(lv: &Levels, proc: Procedure, limits: Limits) -> Result<(Option<WeakQuasimodel>, Stats)> {
    match proc {
        Procedure::ConstantKn | Procedure::S5n => {
            let mut s = ConstantSearch::new(lv, limits);
            let r = s.run()?;
            Ok((r, Stats { search_nodes: s.nodes, ..Stats::default() }))
        }
        Procedure::ExpandingKn => {
            let mut s = ExpandingSearch::new(lv, limits.max_nodes);
            let r = s.run()?;
            let stats = Stats { search_nodes: s.nodes, max_state: s.max_size, max_depth: s.max_depth, ..Stats::default() };
            Ok((r, stats))
        }
    }
}

/// Satisfiability of `phi`, with a checked model when satisfiable.
pub fn decide(phi: &Formula, proc: Procedure, opts: Options) -> Result<Decision> {
    decide_by(phi, proc, opts, |lv, limits| search(lv, proc, limits))
}

/// As [`decide`], with the search over the decision form supplied by the caller.
pub fn decide_by(
    phi: &Formula,
    proc: Procedure,
    opts: Options,
    run: impl FnOnce(&Levels, Limits) -> Result<(Option<WeakQuasimodel>, Stats)>,
) -> Result<Decision> {
    let prep = prepare(phi, opts.partial)?;
    let cl = Closure::new(&prep.formula)?;
    check_type_cap(&cl)?;
    let lv = Levels::new(&cl, proc.frames());
    let limits = opts.limits.unwrap_or_else(|| Limits::for_closure(&cl));
    let (wq, mut stats) = run(&lv, limits)?;
    let Some(wq) = wq else {
        return Ok(Decision { sat: false, model: None, stats });
    };
    stats.weak_worlds = wq.frame.len();
    stats.weak_runs = wq.runs.len();
    let qm = saturate(&lv, &wq)?;
    let m = quasimodel_to_model(&lv, &qm)?;
    stats.model_worlds = m.worlds.len();
    let m = read_back(&m, &prep, phi);
    check_model(&m, phi, proc)?;
    if !opts.partial {
        check_total(&m)?;
    }
    Ok(Decision { sat: true, model: Some(m), stats })
}

/// Types are enumerated per sentence valuation, so the cap applies to the
/// valuations of the members with a free variable.
fn check_type_cap(cl: &Closure) -> Result<()> {
    let bits = TypeSpace::full(cl).elem.count_ones();
    let cap = type_cap();
    if bits >= 63 || 1u64 << bits > cap {
        return Err(Error::Cap(format!("{bits} closure members with a free variable give more than {cap} types")));
    }
    Ok(())
}

/// Every constant of the model designates at every world.
pub fn check_total(m: &Interpretation) -> Result<()> {
    let all: BTreeSet<&Name> = m.worlds.iter().flat_map(|w| w.consts.keys()).collect();
    for (i, w) in m.worlds.iter().enumerate() {
        if let Some(c) = all.iter().find(|c| !w.consts.contains_key(**c)) {
            return Err(Error::SelfCheck(format!("constant {c} does not designate at world {i}")));
        }
    }
    Ok(())
}

pub fn decide_constant_kn(phi: &Formula) -> Result<Decision> {
    decide(phi, Procedure::ConstantKn, Options::default())
}

pub fn decide_expanding_kn(phi: &Formula) -> Result<Decision> {
    decide(phi, Procedure::ExpandingKn, Options::default())
}

pub fn decide_s5n(phi: &Formula) -> Result<Decision> {
    decide(phi, Procedure::S5n, Options::default())
}
