//! Timestamped, node-labelled event sequences and their CSV format.
//!
//! On disk an event file is a CSV with header `t,node`, one event per line
//! in ascending time order. The horizon `T` and node count `d` are not part
//! of the CSV; they travel in a JSON sidecar (see [`EventMeta`]) or are
//! supplied by the caller.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::scalar::Scalar;

/// Events `(t_m, u_m)` on `[0, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence<S> {
    times: Vec<S>,
    nodes: Vec<usize>,
    horizon: S,
    d: usize,
}

impl<S: Scalar> EventSequence<S> {
    /// Validates ordering, range, and labels. Equal timestamps are allowed
    /// and kept in the given order.
    pub fn new(times: Vec<S>, nodes: Vec<usize>, horizon: S, d: usize) -> Result<Self> {
        if times.len() != nodes.len() {
            return Err(HawkesError::Shape(format!("{} times but {} node labels", times.len(), nodes.len())));
        }
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(HawkesError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if d == 0 {
            return Err(HawkesError::InvalidParameter("need at least one node".into()));
        }
        for (m, (&t, &u)) in times.iter().zip(&nodes).enumerate() {
            if !(t >= S::zero() && t < horizon) {
                return Err(HawkesError::Format(format!("event {m} at t={t} lies outside [0, {horizon})")));
            }
            if u >= d {
                return Err(HawkesError::Format(format!("event {m} has node {u} but d = {d}")));
            }
            if m > 0 && t < times[m - 1] {
                return Err(HawkesError::Format(format!("event {m} at t={t} is out of order")));
            }
        }
        Ok(Self { times, nodes, horizon, d })
    }

    pub fn empty(horizon: S, d: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), horizon, d)
    }

    /// Builds from unvalidated parts produced by the simulator.
    pub(crate) fn from_sorted_unchecked(times: Vec<S>, nodes: Vec<usize>, horizon: S, d: usize) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        Self { times, nodes, horizon, d }
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (S, usize)> + '_ {
        self.times.iter().copied().zip(self.nodes.iter().copied())
    }

    /// `N^i_T` for every node.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for &u in &self.nodes {
            c[u] += 1;
        }
        c
    }

    /// Empirical rates `N^i_T / T`.
    pub fn lambda_bar(&self) -> Vec<S> {
        self.counts().into_iter().map(|n| S::from_usize_lossy(n) / self.horizon).collect()
    }

    /// Event times of a single node.
    pub fn node_times(&self, node: usize) -> Vec<S> {
        self.iter().filter(|&(_, u)| u == node).map(|(t, _)| t).collect()
    }

    /// Converts to another precision.
    pub fn cast<T: Scalar>(&self) -> EventSequence<T> {
        EventSequence {
            times: self.times.iter().map(|t| T::lit(t.as_f64())).collect(),
            nodes: self.nodes.clone(),
            horizon: T::lit(self.horizon.as_f64()),
            d: self.d,
        }
    }

    /// Writes the `t,node` CSV. Times use the shortest representation that
    /// round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "t,node")?;
        for (t, u) in self.iter() {
            writeln!(w, "{t},{u}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    /// Reads a `t,node` CSV; `horizon` and `d` come from the caller.
    pub fn read_csv<R: Read>(reader: R, horizon: S, d: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "node" {
            return Err(HawkesError::Format(format!(
                "expected header \"t,node\", found \"{}\"",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times = Vec::new();
        let mut nodes = Vec::new();
        for (line, rec) in rdr.deserialize::<(f64, usize)>().enumerate() {
            let (t, u) = rec.map_err(|e| HawkesError::Format(format!("row {}: {e}", line + 2)))?;
            times.push(S::lit(t));
            nodes.push(u);
        }
        Self::new(times, nodes, horizon, d)
    }

    /// Reads a CSV whose horizon and dimension live in the sidecar next to it.
    /// Explicit `horizon` / `d` override the sidecar.
    pub fn read_csv_file(path: impl AsRef<Path>, horizon: Option<S>, d: Option<usize>) -> Result<(Self, Option<EventMeta>)> {
        let path = path.as_ref();
        let meta = EventMeta::read_for(path).ok();
        let horizon = horizon.or_else(|| meta.as_ref().map(|m| S::lit(m.horizon))).ok_or_else(|| {
            HawkesError::Format(format!(
                "no horizon for {}: pass it explicitly or provide {}",
                path.display(),
                EventMeta::path_for(path).display()
            ))
        })?;
        let d =
            d.or_else(|| meta.as_ref().map(|m| m.d)).ok_or_else(|| HawkesError::Format(format!("no node count for {}", path.display())))?;
        Ok((Self::read_csv(File::open(path)?, horizon, d)?, meta))
    }
}

/// JSON sidecar describing an event file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub horizon: f64,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_norm: Option<f64>,
    /// Free-form provenance (e.g. the resolved generating configuration).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl EventMeta {
    /// `events.csv` -> `events.json`.
    pub fn path_for(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    pub fn read_for(csv_path: &Path) -> Result<Self> {
        let f = File::open(Self::path_for(csv_path))?;
        Ok(serde_json::from_reader(f)?)
    }

    pub fn write_for(&self, csv_path: &Path) -> Result<()> {
        let f = File::create(Self::path_for(csv_path))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}
