//! Log-domain Sinkhorn on a sparse support with epsilon annealing.

/// Row marginal tolerance, relative to the row mass.
const ROW_TOL: f64 = 1e-11;
const MAX_ITER: usize = 20_000;

pub(crate) struct EntropicPlan {
    /// Mass per (bidder, candidate) in the same layout as the candidates.
    pub mass: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn lse(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropic plan between bidders of unit mass and objects of mass `caps`.
pub(crate) fn sinkhorn(cand: &[Vec<(u32, f64)>], caps: &[u32], epsilon: f64) -> EntropicPlan {
    let a = caps.len();
    // transpose: per object, (bidder, slot in bidder's list)
    let mut by_obj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); a];
    for (j, c) in cand.iter().enumerate() {
        for (k, &(i, _)) in c.iter().enumerate() {
            by_obj[i as usize].push((j as u32, k as u32));
        }
    }
    let log_cap: Vec<f64> = caps.iter().map(|&k| f64::from(k).ln()).collect();
    let cmax = cand.iter().flat_map(|c| c.iter().map(|x| x.1)).fold(0.0f64, f64::max);
    let mut f = vec![0.0; a];
    let mut g = vec![0.0; cand.len()];
    let mut eps = cmax.max(epsilon);
    let mut iterations = 0;
    loop {
        let last = eps <= epsilon;
        let budget = if last { MAX_ITER } else { 50 };
        for _ in 0..budget {
            iterations += 1;
            for (j, c) in cand.iter().enumerate() {
                g[j] = -eps * lse(c.iter().map(|&(i, cost)| (f[i as usize] - cost) / eps));
            }
            let mut worst = 0.0f64;
            for i in 0..a {
                let row = by_obj[i].iter().map(|&(j, k)| (g[j as usize] - cand[j as usize][k as usize].1) / eps);
                let l = lse(row);
                // row error of the plan before this update
                worst = worst.max(((f[i] / eps + l) - log_cap[i]).abs());
                f[i] = eps * (log_cap[i] - l);
            }
            if last && worst < ROW_TOL {
                break;
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(epsilon);
    }
    // end on a column update so every bidder is matched exactly
    for (j, c) in cand.iter().enumerate() {
        g[j] = -epsilon * lse(c.iter().map(|&(i, cost)| (f[i as usize] - cost) / epsilon));
    }
    let mass = cand
        .iter()
        .enumerate()
        .map(|(j, c)| c.iter().map(|&(i, cost)| ((f[i as usize] + g[j] - cost) / epsilon).exp()).collect())
        .collect();
    EntropicPlan { mass, iterations }
}

/// Make row sums exactly `caps` while keeping unit column sums: scale
/// overfull rows down, then spread the freed column mass over deficient
/// rows in proportion to their deficit.
pub(crate) fn round_plan(cand: &mut [Vec<(u32, f64)>], mass: &mut [Vec<f64>], caps: &[u32]) {
    let a = caps.len();
    let mut row = vec![0.0; a];
    for (c, m) in cand.iter().zip(mass.iter()) {
        for (&(i, _), &x) in c.iter().zip(m) {
            row[i as usize] += x;
        }
    }
    let scale: Vec<f64> = row.iter().zip(caps).map(|(&r, &k)| if r > f64::from(k) { f64::from(k) / r } else { 1.0 }).collect();
    let mut col_def = vec![0.0; cand.len()];
    let mut row_after = vec![0.0; a];
    for (j, (c, m)) in cand.iter().zip(mass.iter_mut()).enumerate() {
        let mut s = 0.0;
        for (&(i, _), x) in c.iter().zip(m.iter_mut()) {
            *x *= scale[i as usize];
            s += *x;
            row_after[i as usize] += *x;
        }
        col_def[j] = (1.0 - s).max(0.0);
    }
    let row_def: Vec<f64> = row_after.iter().zip(caps).map(|(&r, &k)| (f64::from(k) - r).max(0.0)).collect();
    let total: f64 = row_def.iter().sum();
    if total <= 0.0 {
        return;
    }
    let deficient: Vec<usize> = (0..a).filter(|&i| row_def[i] > 0.0).collect();
    for j in 0..cand.len() {
        if col_def[j] <= 0.0 {
            continue;
        }
        for &i in &deficient {
            let add = col_def[j] * row_def[i] / total;
            match cand[j].iter().position(|x| x.0 as usize == i) {
                Some(k) => mass[j][k] += add,
                None => {
                    cand[j].push((i as u32, f64::NAN));
                    mass[j].push(add);
                }
            }
        }
    }
}
