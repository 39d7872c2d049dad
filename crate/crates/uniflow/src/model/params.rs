//! Flat parameter storage with a named manifest.
//!
//! All learnable tensors live in one contiguous vector; layers hold
//! [`ParamId`] ranges into it. Gradients are accumulated into a separate
//! equally-sized buffer owned by the training step, so parallel workers can
//! each fill their own copy. The (name, shape, offset) manifest doubles as
//! the checkpoint header.

use crate::linalg::Scalar;
use crate::rng::Stream;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId {
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry>,
    pub values: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut Stream) -> ParamId {
        let len: usize = shape.iter().product();
        let offset = self.values.len();
        for _ in 0..len {
            let v = match init {
                Init::Zeros => 0.0,
                Init::Ones => 1.0,
                Init::Normal(std) => rng.normal_scaled(std),
            };
            self.values.push(T::of_f64(v));
        }
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        ParamId { offset, len }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.offset..id.offset + id.len]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.offset..id.offset + id.len]
    }

    /// Entry covering a parameter index, for grouping in diagnostics.
    pub fn entry_of(&self, flat_index: usize) -> &ParamEntry {
        let pos = self
            .entries
            .partition_point(|e| e.offset <= flat_index)
            .saturating_sub(1);
        &self.entries[pos]
    }

    pub fn to_f32_blob(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        bytes
    }

    pub fn load_f32_blob(&mut self, bytes: &[u8]) -> crate::Result<()> {
        if bytes.len() != self.values.len() * 4 {
            return Err(crate::Error::Checkpoint(format!(
                "blob holds {} bytes, expected {}",
                bytes.len(),
                self.values.len() * 4
            )));
        }
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            self.values[i] = T::of_f32(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient slice helpers mirroring a store's layout.
pub fn grad<T: Scalar>(grads: &mut [T], id: ParamId) -> &mut [T] {
    &mut grads[id.offset..id.offset + id.len]
}
