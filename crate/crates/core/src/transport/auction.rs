//! Forward auction with epsilon scaling for assigning unit bidders (grid
//! cells) to objects with integer capacity (atoms). Each object holds
//! `cap` copies kept in a min-heap by price, so a bid always takes the
//! cheapest copy and the second-cheapest copy competes with other objects.

const NONE: u32 = u32::MAX;

/// Min-heap of copy prices for one object, with the holder of each copy.
#[derive(Debug, Clone)]
struct Copies {
    heap: Vec<(f64, u32)>,
}

impl Copies {
    fn new(cap: u32) -> Self {
        Self { heap: vec![(0.0, NONE); cap as usize] }
    }

    fn min(&self) -> f64 {
        self.heap[0].0
    }

    fn second(&self) -> f64 {
        match self.heap.len() {
            0 | 1 => f64::INFINITY,
            2 => self.heap[1].0,
            _ => self.heap[1].0.min(self.heap[2].0),
        }
    }

    /// Replace the cheapest copy; returns its previous holder.
    fn take_cheapest(&mut self, price: f64, bidder: u32) -> u32 {
        let old = self.heap[0].1;
        self.heap[0] = (price, bidder);
        let n = self.heap.len();
        let mut k = 0;
        loop {
            let (l, r) = (2 * k + 1, 2 * k + 2);
            let mut m = k;
            if l < n && self.heap[l].0 < self.heap[m].0 {
                m = l;
            }
            if r < n && self.heap[r].0 < self.heap[m].0 {
                m = r;
            }
            if m == k {
                break;
            }
            self.heap.swap(k, m);
            k = m;
        }
        old
    }

    fn release_all(&mut self) {
        for c in &mut self.heap {
            c.1 = NONE;
        }
    }
}

pub(crate) struct Auction {
    objects: Vec<Copies>,
}

pub(crate) struct Assignment {
    /// Object of each bidder, as an index into its candidate list.
    pub choice: Vec<u32>,
    /// Price paid by each bidder for its copy.
    pub paid: Vec<f64>,
    pub epsilon: f64,
}

impl Auction {
    pub fn new(caps: &[u32]) -> Self {
        Self { objects: caps.iter().map(|&k| Copies::new(k)).collect() }
    }

    /// Cheapest copy price over all objects.
    pub fn min_price(&self) -> f64 {
        self.objects.iter().map(Copies::min).fold(f64::INFINITY, f64::min)
    }

    /// Solve from the current prices down to `eps_final`. `done` is asked
    /// after every phase with the cost and epsilon reached and may stop the
    /// scaling early. Candidate lists must admit a full assignment.
    pub fn run(
        &mut self,
        cand: &[Vec<(u32, f64)>],
        eps_start: f64,
        eps_final: f64,
        mut done: impl FnMut(f64, f64) -> bool,
    ) -> Assignment {
        let n = cand.len();
        let cmax = cand.iter().flat_map(|c| c.iter().map(|x| x.1)).fold(0.0f64, f64::max);
        let mut eps = eps_start.max(eps_final);
        let mut choice = vec![NONE; n];
        let mut paid = vec![0.0; n];
        loop {
            for o in &mut self.objects {
                o.release_all();
            }
            choice.fill(NONE);
            let mut queue: Vec<u32> = (0..n as u32).rev().collect();
            while let Some(j) = queue.pop() {
                let c = &cand[j as usize];
                let (mut best, mut v1, mut v2) = (usize::MAX, f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (k, &(i, cost)) in c.iter().enumerate() {
                    let v = -cost - self.objects[i as usize].min();
                    if v > v1 {
                        v2 = v1;
                        v1 = v;
                        best = k;
                    } else if v > v2 {
                        v2 = v;
                    }
                }
                let (obj, cost) = c[best];
                let o = &mut self.objects[obj as usize];
                v2 = v2.max(-cost - o.second());
                let incr = if v2.is_finite() { v1 - v2 } else { cmax };
                let price = o.min() + incr + eps;
                let evicted = o.take_cheapest(price, j);
                choice[j as usize] = best as u32;
                paid[j as usize] = price;
                if evicted != NONE {
                    choice[evicted as usize] = NONE;
                    queue.push(evicted);
                }
            }
            let cost: f64 = choice.iter().zip(cand).map(|(&k, c)| c[k as usize].1).sum();
            if eps <= eps_final || done(cost, eps) {
                return Assignment { choice, paid, epsilon: eps };
            }
            eps = (eps / 5.0).max(eps_final);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(costs: &[Vec<f64>], caps: &[u32]) -> f64 {
        // expand copies and try every permutation
        let slots: Vec<usize> = caps.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat(i).take(k as usize)).collect();
        let n = costs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        fn rec(k: usize, perm: &mut Vec<usize>, costs: &[Vec<f64>], slots: &[usize], best: &mut f64) {
            if k == perm.len() {
                let c: f64 = perm.iter().enumerate().map(|(j, &s)| costs[j][slots[s]]).sum();
                *best = best.min(c);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                rec(k + 1, perm, costs, slots, best);
                perm.swap(k, i);
            }
        }
        rec(0, &mut perm, costs, &slots, &mut best);
        best
    }

    #[test]
    fn matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let caps = [2u32, 1, 3, 1];
            let n = 7;
            let costs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
            let cand: Vec<Vec<(u32, f64)>> = costs.iter().map(|r| r.iter().enumerate().map(|(i, &c)| (i as u32, c)).collect()).collect();
            let mut a = Auction::new(&caps);
            let sol = a.run(&cand, 0.2, 1e-9, |_, _| false);
            let got: f64 = sol.choice.iter().zip(&cand).map(|(&k, c)| c[k as usize].1).sum();
            let want = brute(&costs, &caps);
            assert!(got - want < n as f64 * 1e-9 + 1e-12, "{got} vs {want}");
            let mut load = [0u32; 4];
            for (&k, c) in sol.choice.iter().zip(&cand) {
                load[c[k as usize].0 as usize] += 1;
            }
            assert_eq!(load, caps);
        }
    }
}
