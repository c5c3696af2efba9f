use super::{ArcConfidence, FamilyScorer};
use crate::error::{Error, Result};
use crate::graph::{mask_iter, Dag};

pub const MAX_EXACT_NODES: usize = 16;
pub const MAX_EXACT_PARENTS: usize = 5;

/// Exact posterior edge probabilities under a uniform prior over DAGs, with
/// each graph weighted by the exponentiated sum of its family scores.
///
/// The normalizer over DAGs on a node set `S` satisfies the sink recursion
/// `Z(S) = sum_{T nonempty in S} (-1)^(|T|+1) Z(S\T) prod_{j in T} A_j(S\T)`,
/// where `A_j(U)` sums family weights of `j` over parent sets inside `U`.
/// `Z` is linear in every family weight, so one reverse sweep through the
/// recursion gives `dZ/dw_j(Pa)` for all families at once, and
/// `P(i -> j) = sum_{Pa containing i} w_j(Pa) dZ/dw_j(Pa) / Z`.
/// Cost is `O(3^p p)` time and `O(p 2^p)` memory.
pub fn exact_map_edge_probabilities(scorer: &dyn FamilyScorer, max_parents: usize) -> Result<ArcConfidence> {
    let p = scorer.n_vars();
    let full = (1usize << p) - 1;
    let log_w = family_table(scorer, max_parents)?;

    // family weights, normalized per node by the best family
    let w: Vec<Vec<f64>> = log_w
        .iter()
        .map(|lw| {
            let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lw.iter()
                .map(|&l| if l.is_finite() { (l - top).exp() } else { 0.0 })
                .collect()
        })
        .collect();

    // A_j(U): subset sums of the weights
    let mut a = w.clone();
    for aj in a.iter_mut() {
        for b in 0..p {
            for u in 0..=full {
                if u & (1 << b) != 0 {
                    aj[u] += aj[u ^ (1 << b)];
                }
            }
        }
    }

    let mut z = vec![0.0f64; 1 << p];
    z[0] = 1.0;
    let mut members = Vec::with_capacity(p);
    for s in 1..=full {
        let mut total = 0.0;
        let mut t = s;
        while t != 0 {
            let r = s ^ t;
            let mut prod = z[r];
            members.clear();
            members.extend(mask_iter(t as u64));
            for &j in &members {
                prod *= a[j][r];
            }
            if members.len() % 2 == 1 {
                total += prod;
            } else {
                total -= prod;
            }
            t = (t - 1) & s;
        }
        z[s] = total;
    }
    let z_full = z[full];
    if !(z_full.is_finite() && z_full > 0.0) {
        return Err(Error::InsufficientData(
            "posterior normalizer is not positive and finite".into(),
        ));
    }

    // reverse sweep: adjoints of Z and A with respect to Z(full)
    let mut z_bar = vec![0.0f64; 1 << p];
    let mut a_bar = vec![vec![0.0f64; 1 << p]; p];
    z_bar[full] = 1.0;
    let mut prefix = Vec::with_capacity(p + 1);
    for s in (1..=full).rev() {
        let g = z_bar[s];
        if g == 0.0 {
            continue;
        }
        let mut t = s;
        while t != 0 {
            let r = s ^ t;
            members.clear();
            members.extend(mask_iter(t as u64));
            let sign = if members.len() % 2 == 1 { g } else { -g };
            prefix.clear();
            prefix.push(1.0);
            for &j in &members {
                let last = *prefix.last().unwrap();
                prefix.push(last * a[j][r]);
            }
            let prod_a = prefix[members.len()];
            z_bar[r] += sign * prod_a;
            let mut suffix = 1.0;
            for (k, &j) in members.iter().enumerate().rev() {
                a_bar[j][r] += sign * z[r] * prefix[k] * suffix;
                suffix *= a[j][r];
            }
            t = (t - 1) & s;
        }
    }

    // dZ/dw_j(Pa) = sum over supersets U of Pa of dZ/dA_j(U)
    let mut prob = vec![vec![0.0f64; p]; p];
    for j in 0..p {
        let gj = &mut a_bar[j];
        for b in 0..p {
            for u in (0..=full).rev() {
                if u & (1 << b) == 0 {
                    gj[u] += gj[u | (1 << b)];
                }
            }
        }
        for pa in 0..=full {
            let mass = w[j][pa] * gj[pa];
            if mass == 0.0 {
                continue;
            }
            for i in mask_iter(pa as u64) {
                prob[i][j] += mass;
            }
        }
        for row in prob.iter_mut() {
            row[j] = (row[j] / z_full).clamp(0.0, 1.0);
        }
    }
    ArcConfidence::from_edge_probabilities(scorer.variables().clone(), prob)
}

fn check_limits(p: usize, max_parents: usize) -> Result<()> {
    if p > MAX_EXACT_NODES {
        return Err(Error::SizeLimit {
            what: "nodes for exact search",
            got: p,
            max: MAX_EXACT_NODES,
        });
    }
    if max_parents > MAX_EXACT_PARENTS {
        return Err(Error::SizeLimit {
            what: "max_parents for exact search",
            got: max_parents,
            max: MAX_EXACT_PARENTS,
        });
    }
    Ok(())
}

/// Family scores indexed by `[node][parent mask]`; `-inf` where the mask
/// contains the node or exceeds `max_parents`.
fn family_table(scorer: &dyn FamilyScorer, max_parents: usize) -> Result<Vec<Vec<f64>>> {
    let p = scorer.n_vars();
    check_limits(p, max_parents)?;
    let mut table = vec![vec![f64::NEG_INFINITY; 1 << p]; p];
    for (j, row) in table.iter_mut().enumerate() {
        for (pa, slot) in row.iter_mut().enumerate() {
            if pa & (1 << j) != 0 || pa.count_ones() as usize > max_parents {
                continue;
            }
            let parents: Vec<usize> = mask_iter(pa as u64).collect();
            *slot = scorer.family_score(j, &parents)?;
        }
    }
    Ok(table)
}

/// Highest-scoring DAG (the posterior mode under a uniform prior), found
/// exactly by dynamic programming over node subsets: the best parent set of
/// each node within every candidate set, then the best sink ordering.
/// Ties go to the lower-indexed sink and the earlier parent mask.
pub fn exact_map_dag(scorer: &dyn FamilyScorer, max_parents: usize) -> Result<(Dag, f64)> {
    let p = scorer.n_vars();
    let full = (1usize << p) - 1;
    let table = family_table(scorer, max_parents)?;

    // best[j][U]: best family of j with parents inside U
    let mut best: Vec<Vec<(f64, usize)>> = table
        .iter()
        .map(|row| row.iter().enumerate().map(|(m, &s)| (s, m)).collect())
        .collect();
    for bj in best.iter_mut() {
        for u in 0..=full {
            for b in mask_iter(u as u64) {
                let sub = bj[u ^ (1 << b)];
                if sub.0 > bj[u].0 || (sub.0 == bj[u].0 && sub.1 < bj[u].1) {
                    bj[u] = sub;
                }
            }
        }
    }

    let mut total = vec![f64::NEG_INFINITY; 1 << p];
    let mut sink = vec![usize::MAX; 1 << p];
    total[0] = 0.0;
    for s in 1..=full {
        for j in mask_iter(s as u64) {
            let rest = s ^ (1 << j);
            let cand = total[rest] + best[j][rest].0;
            if cand > total[s] {
                total[s] = cand;
                sink[s] = j;
            }
        }
    }

    let mut parents = vec![0u64; p];
    let mut s = full;
    while s != 0 {
        let j = sink[s];
        s ^= 1 << j;
        parents[j] = best[j][s].1 as u64;
    }
    let dag = Dag::from_parent_masks(scorer.variables().clone(), parents)?;
    Ok((dag, total[full]))
}
