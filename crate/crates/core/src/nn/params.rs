//! Named parameter collections and their JSON checkpoints.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: DenseMatrix,
}

/// Ordered set of uniquely named dense parameters. Order is insertion order
/// and is part of the checkpoint format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Invalid(format!("duplicate parameter name {name:?}")));
        }
        self.params.push(Param { name, value });
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, value: DenseMatrix) -> Result<Self> {
        self.insert(name, value)?;
        Ok(self)
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&DenseMatrix> {
        self.index_of(name)
            .map(|i| &self.params[i].value)
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseMatrix> {
        match self.index_of(name) {
            Some(i) => Ok(&mut self.params[i].value),
            None => Err(Error::Invalid(format!("missing parameter {name:?}"))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.values().len()).sum()
    }

    /// Zero-valued set with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: DenseMatrix::zeros(p.value.rows(), p.value.cols()),
                })
                .collect(),
        }
    }

    /// Checks that `other` has exactly the same names, order and shapes.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::shape(
                "ParamSet",
                format!("{} vs {} parameters", self.params.len(), other.params.len()),
            ));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::shape(
                    "ParamSet",
                    format!(
                        "{} {:?} vs {} {:?}",
                        a.name,
                        a.value.shape(),
                        b.name,
                        b.value.shape()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// `self += alpha * other` for every parameter.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value.axpy(alpha, &b.value)?;
        }
        Ok(())
    }

    /// Restricts to the parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> Self {
        Self {
            params: self
                .params
                .iter()
                .filter(|p| p.name.starts_with(prefix))
                .cloned()
                .collect(),
        }
    }

    /// Overwrites (or adds) every parameter of `other` in `self`.
    pub fn merge_from(&mut self, other: &Self) {
        for p in &other.params {
            match self.index_of(&p.name) {
                Some(i) => self.params[i].value = p.value.clone(),
                None => self.params.push(p.clone()),
            }
        }
    }

    /// Order-sensitive FNV-1a digest over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            feed(p.name.as_bytes());
            feed(&(p.value.rows() as u64).to_le_bytes());
            feed(&(p.value.cols() as u64).to_le_bytes());
            for v in p.value.values() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        for (i, p) in set.params.iter().enumerate() {
            if set.params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::data(path, 0, format!("duplicate parameter {:?}", p.name)));
            }
            if p.value.values().len() != p.value.rows() * p.value.cols() {
                return Err(Error::data(path, 0, format!("bad shape for {:?}", p.name)));
            }
        }
        Ok(set)
    }
}

/// Glorot/Xavier uniform initialization: U(−a, a), a = √(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}
