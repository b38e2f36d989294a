//! Named parameter collections shared by optimizers and checkpoints.

use candle_core::Var;

/// Ordered list of named trainable variables. Order is construction order and
/// is stable across runs, which checkpointing relies on.
#[derive(Default, Clone)]
pub struct ParamList(pub Vec<(String, Var)>);

impl ParamList {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn push(&mut self, name: impl Into<String>, var: Var) {
        self.0.push((name.into(), var));
    }

    /// Appends `other` with every name prefixed by `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ParamList) {
        for (name, var) in other.0 {
            self.0.push((format!("{prefix}.{name}"), var));
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        self.0.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.0.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// FNV-1a hash over the exact parameter bits, used to prove that an
    /// update step touched nothing outside its own group.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for (name, var) in &self.0 {
            for b in name.as_bytes() {
                h = (h ^ u64::from(*b)).wrapping_mul(0x100000001b3);
            }
            let flat = var
                .flatten_all()
                .and_then(|t| t.to_vec1::<f64>())
                .unwrap_or_default();
            for v in flat {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Anything that exposes its trainable parameters.
pub trait Trainable {
    fn params(&self) -> ParamList;
}
