//! Factorial layouts and effect keys.

use std::fmt;

use crate::error::{Error, Result};

/// Level counts, response dimension, and level labels of a cross-classified design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    levels: Vec<usize>,
    responses: usize,
    factor_names: Vec<String>,
    labels: Vec<Vec<String>>,
}

impl Layout {
    /// A layout with default names (`A`, `B`, …) and numeric level labels.
    pub fn new(levels: &[usize], responses: usize) -> Result<Self> {
        let names = (0..levels.len()).map(default_factor_name).collect();
        let labels = levels
            .iter()
            .map(|&m| (1..=m).map(|l| l.to_string()).collect())
            .collect();
        Layout::with_labels(names, labels, responses)
    }

    pub fn with_labels(factor_names: Vec<String>, labels: Vec<Vec<String>>, responses: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one factor".into()));
        }
        if factor_names.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} factor names for {} factors",
                factor_names.len(),
                labels.len()
            )));
        }
        if responses == 0 {
            return Err(Error::InvalidParameter("layout needs at least one response".into()));
        }
        if labels.iter().any(|l| l.is_empty()) {
            return Err(Error::InvalidParameter("every factor needs at least one level".into()));
        }
        if labels.len() > 1 && labels.iter().any(|l| l.len() < 2) {
            return Err(Error::InvalidParameter(
                "factors that enter interactions need at least two levels".into(),
            ));
        }
        Ok(Layout {
            levels: labels.iter().map(|l| l.len()).collect(),
            responses,
            factor_names,
            labels,
        })
    }

    pub fn factors(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn responses(&self) -> usize {
        self.responses
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    /// Number of cells `∏ m_d`.
    pub fn cells(&self) -> usize {
        self.levels.iter().product()
    }

    /// Shape of a cell-indexed array with a trailing response mode.
    pub fn cell_dims(&self) -> Vec<usize> {
        let mut dims = self.levels.clone();
        dims.push(self.responses);
        dims
    }

    /// Every nonempty factor subset, ordered by size then lexicographically.
    pub fn all_keys(&self) -> Vec<EffectKey> {
        let k = self.factors();
        let mut keys: Vec<EffectKey> = (1u32..(1 << k))
            .map(|mask| EffectKey((0..k).filter(|d| mask & (1 << d) != 0).collect()))
            .collect();
        keys.sort();
        keys
    }

    pub fn main_keys(&self) -> Vec<EffectKey> {
        (0..self.factors()).map(|d| EffectKey(vec![d])).collect()
    }

    pub fn key_dims(&self, key: &EffectKey) -> Vec<usize> {
        key.0.iter().map(|&d| self.levels[d]).collect()
    }

    /// Number of entries of one response slice of the effect.
    pub fn key_len(&self, key: &EffectKey) -> usize {
        key.0.iter().map(|&d| self.levels[d]).product()
    }

    /// For every cell (column-major), the flat index of the effect entry it uses.
    pub fn projection(&self, key: &EffectKey) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cells());
        let mut idx = vec![0usize; self.factors()];
        for _ in 0..self.cells() {
            let mut at = 0;
            let mut step = 1;
            for &d in &key.0 {
                at += idx[d] * step;
                step *= self.levels[d];
            }
            out.push(at);
            crate::tensor::increment(&mut idx, &self.levels);
        }
        out
    }

    /// Multi-index of a cell from its flat position.
    pub fn cell_index(&self, mut flat: usize) -> Vec<usize> {
        self.levels
            .iter()
            .map(|&m| {
                let i = flat % m;
                flat /= m;
                i
            })
            .collect()
    }

    pub fn cell_label(&self, flat: usize) -> Vec<&str> {
        self.cell_index(flat)
            .iter()
            .zip(&self.labels)
            .map(|(&i, l)| l[i].as_str())
            .collect()
    }

    pub fn key_name(&self, key: &EffectKey) -> String {
        key.0
            .iter()
            .map(|&d| self.factor_names[d].as_str())
            .collect::<Vec<_>>()
            .join(":")
    }

    /// Looks a key up by its `name:name` form.
    pub fn parse_key(&self, name: &str) -> Result<EffectKey> {
        let mut factors = Vec::new();
        for part in name.split(':') {
            let d = self
                .factor_names
                .iter()
                .position(|n| n == part)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown factor `{part}`")))?;
            factors.push(d);
        }
        EffectKey::new(factors)
    }
}

fn default_factor_name(d: usize) -> String {
    if d < 26 {
        ((b'A' + d as u8) as char).to_string()
    } else {
        format!("F{}", d + 1)
    }
}

/// A nonempty, sorted set of (zero-based) factor indices naming one effect.
///
/// Keys order by size first, then lexicographically, so iterating a
/// `BTreeMap<EffectKey, _>` visits main effects before interactions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EffectKey(Vec<usize>);

impl EffectKey {
    pub fn new(mut factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("effect key must be nonempty".into()));
        }
        factors.sort_unstable();
        if factors.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("repeated factor in key {factors:?}")));
        }
        Ok(EffectKey(factors))
    }

    pub fn main(d: usize) -> Self {
        EffectKey(vec![d])
    }

    pub fn factors(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, d: usize) -> bool {
        self.0.contains(&d)
    }

    /// Position of factor `d` among the key's modes.
    pub fn mode_of(&self, d: usize) -> Option<usize> {
        self.0.iter().position(|&e| e == d)
    }
}

impl Ord for EffectKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for EffectKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EffectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .0
            .iter()
            .map(|&d| if d < 26 { (b'a' + d as u8) as char } else { '?' })
            .collect();
        f.write_str(&s)
    }
}
