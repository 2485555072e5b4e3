//! Seeded random one-variable sentences for the test corpora.

use crate::formula::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub preds: Vec<String>,
    pub constants: Vec<String>,
    pub props: Vec<String>,
    pub modalities: u32,
    pub max_depth: usize,
    pub max_size: usize,
    /// allow `∃^≠`
    pub difference: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            preds: vec!["P".into(), "Q".into()],
            constants: vec!["c".into()],
            props: vec![],
            modalities: 2,
            max_depth: 2,
            max_size: 25,
            difference: false,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
}

impl<R: Rng> Gen<'_, R> {
    fn leaf(&mut self, scope: bool) -> Formula {
        let x = || Term::var("x");
        let mut options: Vec<u8> = vec![];
        if scope {
            options.extend([0, 0, 0]);
            if !self.cfg.constants.is_empty() {
                options.push(1);
            }
        }
        if !self.cfg.constants.is_empty() {
            options.push(2);
        }
        if !self.cfg.props.is_empty() {
            options.push(3);
        }
        if options.is_empty() {
            options.push(4);
        }
        let c = self.cfg.constants.choose(self.rng).cloned().unwrap_or_default();
        let p = self.cfg.preds.choose(self.rng).cloned().unwrap_or_else(|| "P".into());
        match *options.choose(self.rng).unwrap() {
            0 => atom(&p, vec![x()]),
            1 => eq(x(), Term::cst(&c)),
            2 => atom(&p, vec![Term::cst(&c)]),
            3 => atom(self.cfg.props.choose(self.rng).unwrap(), vec![]),
            _ => top(),
        }
    }

    fn gen(&mut self, budget: usize, depth: usize, scope: bool) -> Formula {
        if budget <= 2 {
            return self.leaf(scope);
        }
        let mut ops: Vec<u8> = vec![0, 1, 1, 2, 3, 6, 6, 7, 7];
        if depth > 0 {
            ops.extend([4, 4, 5, 5]);
        }
        if self.cfg.difference && scope {
            ops.push(8);
        }
        let a = self.rng.gen_range(1..=self.cfg.modalities.max(1));
        let op = *ops.choose(self.rng).unwrap();
        match op {
            0 => not(self.gen(budget - 1, depth, scope)),
            1..=3 => {
                let left = self.rng.gen_range(1..budget - 1);
                let l = self.gen(left, depth, scope);
                let r = self.gen(budget - 1 - left, depth, scope);
                match op {
                    1 => and(l, r),
                    2 => or(l, r),
                    _ => implies(l, r),
                }
            }
            4 => dia(a, self.gen(budget - 1, depth - 1, scope)),
            5 => bx(a, self.gen(budget - 1, depth - 1, scope)),
            6 => exists("x", self.gen(budget - 1, depth, true)),
            7 => forall("x", self.gen(budget - 1, depth, true)),
            _ => exists_other("x", self.gen(budget - 1, depth, true)),
        }
    }
}

/// A random one-variable sentence within the size and depth limits.
pub fn random_sentence<R: Rng>(rng: &mut R, cfg: &GenConfig) -> Formula {
    loop {
        let budget = rng.gen_range(3..=cfg.max_size.max(3) * 2 / 3);
        let mut g = Gen { rng, cfg };
        let mut f = g.gen(budget, cfg.max_depth, false);
        if !f.is_sentence() {
            f = if rng.gen_bool(0.5) { exists("x", f) } else { forall("x", f) };
        }
        if f.size() <= cfg.max_size && f.modal_depth() <= cfg.max_depth {
            return f;
        }
    }
}

/// The fixed corpus: `count` sentences from `seed`.
pub fn corpus(seed: u64, count: usize, cfg: &GenConfig) -> Vec<Formula> {
    let mut r = rng(seed);
    (0..count).map(|_| random_sentence(&mut r, cfg)).collect()
}
