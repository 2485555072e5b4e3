//! Deterministic fresh symbols derived from a hash of a canonical form.

use crate::formula::{name, Name};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;

/// `prefix_<8 hex digits>`; if that clashes with `taken`, a numeric suffix is appended.
pub fn fresh(prefix: &str, key: &str, taken: &BTreeSet<Name>) -> Name {
    let digest = Sha256::digest(key.as_bytes());
    let hex: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    let base = format!("{prefix}_{hex}");
    if !taken.contains(base.as_str()) {
        return name(&base);
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|s| !taken.contains(s.as_str()))
        .map(|s| name(&s))
        .unwrap()
}
