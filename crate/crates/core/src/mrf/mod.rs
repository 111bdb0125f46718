//! MAP refinement of label grids under a Potts MRF prior.
//!
//! The energy of a proposal `f` given observed labels `l` is
//!
//! ```text
//! E(f) = Σ_p U(l_p, f_p) + Σ_{p~q} V(f_p, f_q)
//! U = unknown_cost if f_p is unknown, match_cost if f_p = l_p, mismatch_cost otherwise
//! V = 0 if f_p = f_q, pairwise_cost otherwise
//! ```
//!
//! and is minimized with alpha-expansion over the six classes.

mod expansion;
mod maxflow;

pub use expansion::{alpha_expansion, Refinement, TraceEntry};
pub use maxflow::{FlowGraph, Segment};

use crate::error::MrfError;
use crate::grid::LabelGrid;
use crate::label::{NUM_LABELS, UNKNOWN};

/// Largest grid accepted by [`brute_force_map`].
pub const BRUTE_FORCE_MAX_PIXELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    /// Forward neighbor offsets; each unordered pair is visited once.
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (0, 1)],
            Connectivity::Eight => &[(1, 0), (0, 1), (1, 1), (-1, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyParams {
    pub match_cost: i64,
    pub mismatch_cost: i64,
    pub unknown_cost: i64,
    pub pairwise_cost: i64,
    pub connectivity: Connectivity,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            match_cost: 0,
            mismatch_cost: 10,
            unknown_cost: 15,
            pairwise_cost: 20,
            connectivity: Connectivity::Four,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), MrfError> {
        let costs = [
            ("match", self.match_cost),
            ("mismatch", self.mismatch_cost),
            ("unknown", self.unknown_cost),
            ("pairwise", self.pairwise_cost),
        ];
        for (name, c) in costs {
            if c < 0 {
                return Err(MrfError::Params(format!("{name} cost {c} is negative")));
            }
        }
        if self.pairwise_cost == 0 {
            return Err(MrfError::Params("pairwise cost must be positive".into()));
        }
        Ok(())
    }

    pub fn unary(&self, observed: u8, proposal: u8) -> i64 {
        if proposal == UNKNOWN {
            self.unknown_cost
        } else if proposal == observed {
            self.match_cost
        } else {
            self.mismatch_cost
        }
    }

    pub fn pairwise(&self, a: u8, b: u8) -> i64 {
        if a == b {
            0
        } else {
            self.pairwise_cost
        }
    }

    /// Checks `V(a,a) = 0`, `V(a,b) = V(b,a) > 0` and the triangle
    /// inequality over every label triple.
    pub fn pairwise_is_metric(&self) -> bool {
        let labels = 0..NUM_LABELS as u8;
        for a in labels.clone() {
            if self.pairwise(a, a) != 0 {
                return false;
            }
            for b in labels.clone() {
                let ab = self.pairwise(a, b);
                if ab != self.pairwise(b, a) || (a != b && ab <= 0) {
                    return false;
                }
                for c in labels.clone() {
                    if ab > self.pairwise(a, c) + self.pairwise(c, b) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Visits every unordered neighbor pair as flat indices.
pub(crate) fn for_each_pair(
    w: usize,
    h: usize,
    conn: Connectivity,
    mut f: impl FnMut(usize, usize),
) {
    for y in 0..h {
        for x in 0..w {
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                f(y * w + x, ny as usize * w + nx as usize);
            }
        }
    }
}

fn check_dims(observed: &LabelGrid, proposal: &LabelGrid) -> Result<(), MrfError> {
    if observed.same_shape(proposal) {
        Ok(())
    } else {
        Err(MrfError::Dimension(format!(
            "observed {}x{} vs proposal {}x{}",
            observed.width(),
            observed.height(),
            proposal.width(),
            proposal.height()
        )))
    }
}

fn energy_unchecked(
    observed: &[u8],
    proposal: &[u8],
    w: usize,
    h: usize,
    params: &EnergyParams,
) -> i64 {
    let mut e: i64 = observed
        .iter()
        .zip(proposal)
        .map(|(&o, &f)| params.unary(o, f))
        .sum();
    for_each_pair(w, h, params.connectivity, |p, q| {
        e += params.pairwise(proposal[p], proposal[q]);
    });
    e
}

pub fn energy(
    observed: &LabelGrid,
    proposal: &LabelGrid,
    params: &EnergyParams,
) -> Result<i64, MrfError> {
    check_dims(observed, proposal)?;
    Ok(energy_unchecked(
        observed.as_slice(),
        proposal.as_slice(),
        observed.width(),
        observed.height(),
        params,
    ))
}

/// Exhaustive minimization over all `7ⁿ` labelings. Ties go to the
/// lexicographically smallest labeling in row-major order.
pub fn brute_force_map(
    observed: &LabelGrid,
    params: &EnergyParams,
) -> Result<(LabelGrid, i64), MrfError> {
    let n = observed.len();
    if n > BRUTE_FORCE_MAX_PIXELS {
        return Err(MrfError::TooLarge {
            pixels: n,
            max: BRUTE_FORCE_MAX_PIXELS,
        });
    }
    let (w, h) = (observed.width(), observed.height());
    let obs = observed.as_slice();
    let mut cur = vec![0u8; n];
    let mut best = cur.clone();
    let mut best_e = energy_unchecked(obs, &cur, w, h, params);
    let total = (NUM_LABELS as u64).pow(n as u32);
    for _ in 1..total {
        // Increment the base-7 counter with pixel 0 most significant.
        for d in (0..n).rev() {
            cur[d] += 1;
            if (cur[d] as usize) < NUM_LABELS {
                break;
            }
            cur[d] = 0;
        }
        let e = energy_unchecked(obs, &cur, w, h, params);
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&cur);
        }
    }
    Ok((LabelGrid::new(w, h, best), best_e))
}
