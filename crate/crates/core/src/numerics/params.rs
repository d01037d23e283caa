use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::Rng;

use super::graph::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable matrices in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Writes `name<TAB>rows<TAB>cols<TAB>v0 v1 ...` lines, values row-major.
    ///
    /// `f64` display is the shortest representation that parses back to the
    /// same bits, so a write/read cycle is exact.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (_, name, value) in self.iter() {
            write!(w, "{name}\t{}\t{}\t", value.nrows(), value.ncols())?;
            for (i, v) in value.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn parse_line(&mut self, line: &str) -> std::result::Result<(), String> {
        let mut parts = line.splitn(4, '\t');
        let (Some(name), Some(rows), Some(cols), Some(values)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err("expected name, rows, cols and values".into());
        };
        let rows: usize = rows.parse().map_err(|e| format!("rows: {e}"))?;
        let cols: usize = cols.parse().map_err(|e| format!("cols: {e}"))?;
        let data = values
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("value: {e}"))?;
        let m = Array2::from_shape_vec((rows, cols), data)
            .map_err(|_| format!("{name}: value count does not match {rows}x{cols}"))?;
        self.add(name, m).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> std::result::Result<Self, String> {
        let mut store = ParamStore::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            store.parse_line(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(store)
    }
}

/// Per-parameter gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Matrix>,
}

impl ParamGrads {
    pub fn zeros(store: &ParamStore) -> Self {
        Self {
            grads: store.values.iter().map(|v| Array2::zeros(v.dim())).collect(),
        }
    }

    pub fn add(&mut self, id: ParamId, g: &Matrix) {
        self.grads[id.0] += g;
    }

    pub fn add_all(&mut self, grads: &super::graph::Gradients) {
        for (id, g) in grads.params() {
            self.add(id, g);
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all buffers so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for g in &mut self.grads {
                g.mapv_inplace(|v| v * k);
            }
        }
    }
}

/// Glorot-uniform initialisation.
pub fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit))
}

pub fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, limit: f64) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit))
}
