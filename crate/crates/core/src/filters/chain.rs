//! Regime-only block sampling for filters that never touch X.
//!
//! Over one observation interval the chain makes `m` substeps with a fixed
//! transition matrix `p`. Instead of m categorical draws, the sojourn in state
//! `i` is sampled as a geometric number of self-transitions with success
//! probability `p_ii`, and the exit as a draw from `p_ij / (1 - p_ii)`, `j ≠ i`.
//! The resulting sequence has exactly the law of m [`chain_step`] calls.
//!
//! [`chain_step`]: crate::simulator::chain_step

use rand::Rng;

use crate::linalg::Matrix;

#[derive(Clone, Debug)]
pub struct BlockSampler {
    log_stay: Vec<f64>,
    /// Cumulative exit distribution over `j ≠ i`, stored as (j, cdf) pairs.
    exits: Vec<Vec<(usize, f64)>>,
    substeps: usize,
}

impl BlockSampler {
    pub fn new(p: &Matrix, substeps: usize) -> Self {
        let m = p.nrows();
        let mut log_stay = Vec::with_capacity(m);
        let mut exits = Vec::with_capacity(m);
        for i in 0..m {
            let stay = p[(i, i)].clamp(0.0, 1.0);
            log_stay.push(stay.ln());
            let leave: f64 = (0..m).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
            let mut acc = 0.0;
            let mut row = Vec::new();
            if leave > 0.0 {
                for j in (0..m).filter(|&j| j != i) {
                    if p[(i, j)] > 0.0 {
                        acc += p[(i, j)] / leave;
                        row.push((j, acc));
                    }
                }
            }
            exits.push(row);
        }
        Self {
            log_stay,
            exits,
            substeps,
        }
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    fn self_transitions<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let ls = self.log_stay[state];
        if ls == 0.0 || self.exits[state].is_empty() {
            return usize::MAX;
        }
        if ls == f64::NEG_INFINITY {
            return 0;
        }
        let u = 1.0 - rng.random::<f64>();
        let g = u.ln() / ls;
        if g >= usize::MAX as f64 {
            usize::MAX
        } else {
            g as usize
        }
    }

    fn exit<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.exits[state];
        let u: f64 = rng.random();
        row.iter()
            .find(|&&(_, c)| u < c)
            .unwrap_or_else(|| row.last().expect("nonempty exit row"))
            .0
    }

    /// Samples one block starting from `start`; `visit(state, run)` is called
    /// for consecutive runs of substeps in time order. Returns the end state.
    pub fn sample<R: Rng + ?Sized, F: FnMut(usize, usize)>(
        &self,
        start: usize,
        rng: &mut R,
        mut visit: F,
    ) -> usize {
        let mut state = start;
        let mut remaining = self.substeps;
        while remaining > 0 {
            let g = self.self_transitions(state, rng);
            if g >= remaining {
                visit(state, remaining);
                break;
            }
            if g > 0 {
                visit(state, g);
            }
            remaining -= g;
            state = self.exit(state, rng);
            visit(state, 1);
            remaining -= 1;
        }
        state
    }
}
