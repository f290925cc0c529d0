//! Power-of-two symbol-set allocations over beamspaces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symbol-set sizes per beamspace; the sizes add up to `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolAllocation {
    pub sizes: Vec<usize>,
}

impl SymbolAllocation {
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Everything on the strongest beamspace.
    pub fn single(n: usize, k: usize) -> Self {
        let mut sizes = vec![0; k];
        sizes[0] = n;
        SymbolAllocation { sizes }
    }

    /// `N / K̂` symbols on each of the `K̂ = 2^⌊log₂K⌋` strongest beamspaces.
    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        let k_hat = uniform_count(k);
        if k_hat == 0 || n % k_hat != 0 {
            return Err(Error::invalid(format!(
                "uniform activation needs K̂ = {k_hat} to divide N = {n}"
            )));
        }
        let mut sizes = vec![0; k];
        for s in sizes.iter_mut().take(k_hat) {
            *s = n / k_hat;
        }
        Ok(SymbolAllocation { sizes })
    }
}

/// `2^⌊log₂K⌋` (0 for `K = 0`).
pub fn uniform_count(k: usize) -> usize {
    if k == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - k.leading_zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Scored {
    score: f64,
    sizes: Vec<usize>,
}

impl Eq for Scored {}

impl Ord for Scored {
    /// Greater means better: higher score, then lexicographically larger sizes.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| self.sizes.cmp(&other.sizes))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn score(sizes: &[usize], energies: &[f64]) -> f64 {
    sizes
        .iter()
        .zip(energies)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &e)| e / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Allocations with equal beamspace weights.
pub fn enumerate_allocations(n_total: usize, k_spaces: usize, cap: usize) -> Result<Vec<SymbolAllocation>> {
    enumerate_allocations_weighted(n_total, &vec![1.0; k_spaces], cap)
}

/// Allocations whose nonzero sizes are powers of two summing to `n_total`.
///
/// Ranked by the smallest beamspace energy per assigned symbol (largest
/// first, ties to the lexicographically larger allocation) and truncated to
/// `cap`. The single-beamspace and, when valid, the uniform allocation are
/// always present.
pub fn enumerate_allocations_weighted(
    n_total: usize,
    energies: &[f64],
    cap: usize,
) -> Result<Vec<SymbolAllocation>> {
    if n_total == 0 || !n_total.is_power_of_two() {
        return Err(Error::invalid(format!("N = {n_total} is not a power of two")));
    }
    if cap == 0 {
        return Err(Error::invalid("cap must be at least 1"));
    }
    let k = energies.len();
    if k == 0 {
        return Err(Error::invalid("at least one beamspace is required"));
    }
    let parts: Vec<usize> = std::iter::once(0)
        .chain((0..=n_total.trailing_zeros()).map(|b| 1usize << b))
        .collect();
    // min-heap of the best `cap` entries (worst on top)
    let mut heap: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::with_capacity(cap.min(4096) + 1);
    let mut cur = vec![0usize; k];
    fn dfs(
        pos: usize,
        left: usize,
        cur: &mut Vec<usize>,
        parts: &[usize],
        energies: &[f64],
        cap: usize,
        heap: &mut BinaryHeap<std::cmp::Reverse<Scored>>,
    ) {
        let k = cur.len();
        if pos == k - 1 {
            if left != 0 && !left.is_power_of_two() {
                return;
            }
            cur[pos] = left;
            let s = Scored { score: score(cur, energies), sizes: cur.clone() };
            if heap.len() < cap {
                heap.push(std::cmp::Reverse(s));
            } else if let Some(worst) = heap.peek() {
                if s > worst.0 {
                    heap.pop();
                    heap.push(std::cmp::Reverse(s));
                }
            }
            cur[pos] = 0;
            return;
        }
        for &p in parts {
            if p > left {
                break;
            }
            cur[pos] = p;
            dfs(pos + 1, left - p, cur, parts, energies, cap, heap);
        }
        cur[pos] = 0;
    }
    dfs(0, n_total, &mut cur, &parts, energies, cap, &mut heap);
    let mut ranked: Vec<Scored> = heap.into_iter().map(|r| r.0).collect();
    ranked.sort_by(|a, b| b.cmp(a));
    let mut out: Vec<SymbolAllocation> = ranked
        .into_iter()
        .map(|s| SymbolAllocation { sizes: s.sizes })
        .collect();
    let mut forced = vec![SymbolAllocation::single(n_total, k)];
    if let Ok(u) = SymbolAllocation::uniform(n_total, k) {
        if u != forced[0] {
            forced.push(u);
        }
    }
    let missing: Vec<SymbolAllocation> = forced.iter().filter(|f| !out.contains(f)).cloned().collect();
    // drop unforced entries from the tail to make room
    let mut room = (out.len() + missing.len()).saturating_sub(cap);
    let mut i = out.len();
    while room > 0 && i > 0 {
        i -= 1;
        if !forced.contains(&out[i]) {
            out.remove(i);
            room -= 1;
        }
    }
    out.extend(missing);
    Ok(out)
}
