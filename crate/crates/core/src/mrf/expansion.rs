use std::fmt::Write as _;

use crate::error::MrfError;
use crate::grid::LabelGrid;
use crate::label::NUM_CLASSES;
use crate::mrf::maxflow::{FlowGraph, Segment};
use crate::mrf::{energy_unchecked, for_each_pair, EnergyParams};

/// Energy after an expansion move; `alpha` is `None` for the starting
/// labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub sweep: usize,
    pub alpha: Option<u8>,
    pub energy: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub labels: LabelGrid,
    pub trace: Vec<TraceEntry>,
    pub sweeps: usize,
}

impl Refinement {
    pub fn initial_energy(&self) -> i64 {
        self.trace.first().map_or(0, |t| t.energy)
    }

    pub fn final_energy(&self) -> i64 {
        self.trace.last().map_or(0, |t| t.energy)
    }

    /// `sweep,alpha,energy` rows; the starting row leaves `alpha` empty.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("sweep,alpha,energy\n");
        for t in &self.trace {
            let alpha = t.alpha.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{alpha},{}", t.sweep, t.energy);
        }
        out
    }
}

/// Minimizes the energy starting from the observed labeling by cycling
/// expansions over the six classes in ascending order. A move is kept only
/// if it strictly lowers the energy. Stops after a sweep without change or
/// after `max_sweeps` sweeps.
pub fn alpha_expansion(
    observed: &LabelGrid,
    params: &EnergyParams,
    max_sweeps: usize,
) -> Result<Refinement, MrfError> {
    params.validate()?;
    let (w, h) = (observed.width(), observed.height());
    let obs = observed.as_slice();
    let mut labels = obs.to_vec();
    let mut current = energy_unchecked(obs, &labels, w, h, params);
    let mut trace = vec![TraceEntry {
        sweep: 0,
        alpha: None,
        energy: current,
    }];
    let mut sweeps = 0;
    for sweep in 1..=max_sweeps {
        sweeps = sweep;
        let mut changed = false;
        for alpha in 0..NUM_CLASSES as u8 {
            let (candidate, e) = expand(obs, &labels, w, h, alpha, params);
            debug_assert_eq!(e, energy_unchecked(obs, &candidate, w, h, params));
            if e < current {
                labels = candidate;
                current = e;
                changed = true;
            }
            trace.push(TraceEntry {
                sweep,
                alpha: Some(alpha),
                energy: current,
            });
        }
        if !changed {
            break;
        }
    }
    Ok(Refinement {
        labels: LabelGrid::new(w, h, labels),
        trace,
        sweeps,
    })
}

/// Best labeling within one α-expansion of `labels` and its energy. Each
/// pixel either keeps its label (source side) or switches to α (sink
/// side).
fn expand(
    obs: &[u8],
    labels: &[u8],
    w: usize,
    h: usize,
    alpha: u8,
    params: &EnergyParams,
) -> (Vec<u8>, i64) {
    let n = labels.len();
    // Cost of each pixel staying (x = 0) or switching (x = 1).
    let mut stay: Vec<i64> = (0..n).map(|p| params.unary(obs[p], labels[p])).collect();
    let mut switch: Vec<i64> = (0..n).map(|p| params.unary(obs[p], alpha)).collect();
    let mut constant: i64 = 0;
    let mut edges: Vec<(usize, usize, i64)> = Vec::new();

    for_each_pair(w, h, params.connectivity, |p, q| {
        let a = params.pairwise(labels[p], labels[q]);
        let b = params.pairwise(labels[p], alpha);
        let c = params.pairwise(alpha, labels[q]);
        let d = 0;
        // E(x_p, x_q) = A + (C − A)·x_p + (D − C)·x_q + (B + C − A − D)·(1 − x_p)·x_q
        constant += a;
        switch[p] += c - a;
        switch[q] += d - c;
        let coupling = b + c - a - d;
        debug_assert!(coupling >= 0, "pairwise term is not a metric");
        if coupling > 0 {
            edges.push((p, q, coupling));
        }
    });

    let mut g = FlowGraph::with_capacity(n, edges.len());
    for p in 0..n {
        let base = stay[p].min(switch[p]);
        constant += base;
        stay[p] -= base;
        switch[p] -= base;
        // Cutting source → p puts p on the sink side (switch).
        g.add_tedge(p, switch[p], stay[p]);
    }
    for &(p, q, cap) in &edges {
        g.add_edge(p, q, cap, 0);
    }
    let flow = g.maxflow();
    let out = (0..n)
        .map(|p| match g.segment(p) {
            Segment::Source => labels[p],
            Segment::Sink => alpha,
        })
        .collect();
    (out, constant + flow)
}
