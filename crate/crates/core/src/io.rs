//! Field dumps: plot-ready CSV and a little-endian binary twin.
//!
//! CSV: header `x1,...,xn,c1,...,ck`, one row per node (axis 1 fastest),
//! node coordinates followed by the components.
//!
//! Binary: magic `LTFD`, `u32` dim, `u32` component count, one `u32` per
//! axis size, then `f64` values in the CSV order (node-major, components
//! contiguous). All integers and floats little endian.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{OneFormField, PeriodicGrid, ScalarField, TwoFormField};
use crate::real::{to_f64, Real};

pub const MAGIC: &[u8; 4] = b"LTFD";

/// Node-sampled multi-component field ready for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub grid: PeriodicGrid,
    /// `components[k][node]`
    pub components: Vec<Vec<f64>>,
}

impl FieldDump {
    pub fn new(grid: &PeriodicGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Format("component length does not match grid".into()));
        }
        Ok(Self { grid: grid.clone(), components })
    }

    pub fn from_scalar<R: Real>(f: &ScalarField<R>) -> Self {
        Self { grid: f.grid().clone(), components: vec![f.values().iter().map(|&v| to_f64(v)).collect()] }
    }

    pub fn from_one_form<R: Real>(f: &OneFormField<R>) -> Self {
        Self {
            grid: f.grid().clone(),
            components: f.comps().iter().map(|c| c.iter().map(|&v| to_f64(v)).collect()).collect(),
        }
    }

    pub fn from_two_form<R: Real>(f: &TwoFormField<R>) -> Self {
        Self {
            grid: f.grid().clone(),
            components: f.comps().iter().map(|c| c.iter().map(|&v| to_f64(v)).collect()).collect(),
        }
    }

    /// Per-node fixed-size arrays, keeping the first `k` entries.
    pub fn from_node_arrays<R: Real, const M: usize>(grid: &PeriodicGrid, values: &[[R; M]], k: usize) -> Self {
        Self {
            grid: grid.clone(),
            components: (0..k).map(|c| values.iter().map(|v| to_f64(v[c])).collect()).collect(),
        }
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let n = self.grid.dim();
        let header: Vec<String> = (1..=n)
            .map(|a| format!("x{a}"))
            .chain((1..=self.components.len()).map(|k| format!("c{k}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.grid.len() {
            let p = self.grid.point::<f64>(i);
            let mut row: Vec<String> = (0..n).map(|a| format!("{}", p[a])).collect();
            row.extend(self.components.iter().map(|c| format!("{:e}", c[i])));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 4 * self.grid.dim() + 8 * self.grid.len() * self.components.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.components.len() as u32).to_le_bytes());
        for &s in self.grid.sizes() {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for i in 0..self.grid.len() {
            for c in &self.components {
                buf.extend_from_slice(&c[i].to_le_bytes());
            }
        }
        buf
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::Format("truncated header".into()))
        };
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing LTFD magic".into()));
        }
        let dim = word(4)? as usize;
        let k = word(8)? as usize;
        let sizes: Vec<usize> = (0..dim).map(|a| word(12 + 4 * a).map(|v| v as usize)).collect::<Result<_>>()?;
        let grid = PeriodicGrid::new(&sizes)?;
        let start = 12 + 4 * dim;
        if bytes.len() != start + 8 * k * grid.len() {
            return Err(Error::Format("payload length does not match header".into()));
        }
        let mut components = vec![vec![0.0; grid.len()]; k];
        for (j, chunk) in bytes[start..].chunks_exact(8).enumerate() {
            components[j % k][j / k] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(Self { grid, components })
    }

    pub fn write_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(&self.to_binary())?;
        Ok(())
    }

    pub fn read_binary<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_binary(&bytes)
    }
}
