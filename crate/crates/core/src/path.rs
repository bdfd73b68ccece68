//! Càdlàg paths on the augmented node set and flow fields.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PathMeta {
    /// Requested start time when it was snapped down to the grid.
    pub snapped_from: Option<f64>,
    /// Number of times the state was clamped into the configured box.
    pub clamp_events: usize,
}

/// Right-continuous path. `values` holds the state at each node (the right
/// limit); at large-jump nodes `pre_jump` holds the left limit.
#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    pub dim: usize,
    pub control_dim: usize,
    pub start_time: f64,
    pub start_state: Vec<f64>,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub pre_jump: Vec<Option<Vec<f64>>>,
    /// Row `i` is the control used on `(nodes[i], nodes[i+1]]` (zeros where unused).
    pub controls: Vec<f64>,
    /// Feedback decisions per slot, when driven by a feedback policy.
    pub decisions: Vec<Option<usize>>,
    pub meta: PathMeta,
}

impl CadlagPath {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.nodes.last().expect("paths have at least one node")
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn control(&self, i: usize) -> &[f64] {
        &self.controls[i * self.control_dim..(i + 1) * self.control_dim]
    }

    pub fn is_jump(&self, i: usize) -> bool {
        self.pre_jump[i].is_some()
    }

    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.total_cmp(&t)).ok()
    }

    /// Index of the last node `<= t` (the first node if `t` precedes it).
    pub fn index_at(&self, t: f64) -> usize {
        self.nodes.partition_point(|n| *n <= t).saturating_sub(1)
    }

    /// Càdlàg evaluation between nodes.
    pub fn value_at(&self, t: f64) -> &[f64] {
        self.value(self.index_at(t))
    }

    pub fn final_value(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// `sup_{t >= from} |self(t) - other(t)|` over the union of both node sets.
    pub fn sup_distance(&self, other: &CadlagPath, from: f64) -> f64 {
        let mut best = 0.0f64;
        let mut check = |t: f64| {
            let d = dist(self.value_at(t), other.value_at(t));
            best = best.max(d);
        };
        self.nodes.iter().filter(|t| **t >= from).for_each(|t| check(*t));
        other.nodes.iter().filter(|t| **t >= from).for_each(|t| check(*t));
        best
    }

    /// CSV with columns `node_time, state_*, is_jump, pre_jump_*`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node_time".to_string()];
        header.extend((0..self.dim).map(|i| format!("state_{i}")));
        header.push("is_jump".into());
        header.extend((0..self.dim).map(|i| format!("pre_jump_{i}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.nodes[i].to_string()];
            row.extend(self.value(i).iter().map(f64::to_string));
            row.push(u8::from(self.is_jump(i)).to_string());
            match &self.pre_jump[i] {
                Some(p) => row.extend(p.iter().map(f64::to_string)),
                None => row.extend((0..self.dim).map(|_| String::new())),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// The map `(s, x, t) -> X^{s,x}_t` on one noise realization.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub dim: usize,
    pub s_list: Vec<f64>,
    pub x_list: Vec<Vec<f64>>,
    pub t_list: Vec<f64>,
    pub path_index: u64,
    /// Indexed `(s, x, t, component)`, row-major.
    pub data: Vec<f64>,
}

impl FlowField {
    pub fn get(&self, si: usize, xi: usize, ti: usize) -> &[f64] {
        let nt = self.t_list.len();
        let nx = self.x_list.len();
        let k = ((si * nx + xi) * nt + ti) * self.dim;
        &self.data[k..k + self.dim]
    }

    /// CSV with columns `s, x_index, t, state_*`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string(), "x_index".into(), "t".into()];
        header.extend((0..self.dim).map(|i| format!("state_{i}")));
        w.write_record(&header)?;
        for (si, s) in self.s_list.iter().enumerate() {
            for xi in 0..self.x_list.len() {
                for (ti, t) in self.t_list.iter().enumerate() {
                    let mut row = vec![s.to_string(), xi.to_string(), t.to_string()];
                    row.extend(self.get(si, xi, ti).iter().map(f64::to_string));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
