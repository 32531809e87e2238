//! Agglomerative clustering with weighted points.
//!
//! Points carry multiplicities so that repeated observations can be merged
//! up front. Both linkages used here are reducible, which lets the
//! nearest-neighbour chain run in quadratic time.

use serde::{Deserialize, Serialize};

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge
/// `i` has id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Total weight of the merged cluster.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    /// Merges sorted by nondecreasing height.
    pub merges: Vec<Merge>,
}

#[derive(Clone, Copy)]
enum Method {
    Ward,
    Average,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * self.n - a * (a + 1) / 2 + (b - a - 1)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Ward linkage on Euclidean points with positive weights.
///
/// Heights follow the usual convention: merging clusters `A` and `B` costs
/// `sqrt(2 w_A w_B / (w_A + w_B)) * |c_A - c_B|`, which reduces to the plain
/// distance for two unit-weight points.
pub fn ward(points: &[Vec<f64>], weights: &[f64]) -> Dendrogram {
    assert_eq!(points.len(), weights.len(), "one weight per point");
    let n = points.len();
    let mut d = Condensed {
        n,
        d: vec![0.0; n * n.saturating_sub(1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            let sq = sq_dist(&points[i], &points[j]);
            d.set(
                i,
                j,
                2.0 * weights[i] * weights[j] / (weights[i] + weights[j]) * sq,
            );
        }
    }
    let mut tree = nn_chain(d, weights.to_vec(), Method::Ward);
    for m in &mut tree.merges {
        m.height = m.height.max(0.0).sqrt();
    }
    tree
}

/// Average linkage on a precomputed symmetric dissimilarity matrix.
pub fn average(dissimilarity: &[Vec<f64>]) -> Dendrogram {
    let n = dissimilarity.len();
    let mut d = Condensed {
        n,
        d: vec![0.0; n * n.saturating_sub(1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            d.set(i, j, dissimilarity[i][j]);
        }
    }
    nn_chain(d, vec![1.0; n], Method::Average)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nn_chain(mut d: Condensed, mut weight: Vec<f64>, method: Method) -> Dendrogram {
    let n = d.n;
    let leaf_weights = weight.clone();
    let mut active = vec![true; n];
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();

    for _ in 0..n.saturating_sub(1) {
        if chain.is_empty() {
            chain.push(
                active
                    .iter()
                    .position(|&a| a)
                    .expect("an active cluster remains"),
            );
        }
        let (a, b, h) = loop {
            let x = *chain.last().expect("chain is nonempty");
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            // prefer the previous chain element on ties so the chain terminates
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, d.get(x, p)),
                None => (usize::MAX, f64::INFINITY),
            };
            for y in 0..n {
                if y == x || !active[y] {
                    continue;
                }
                let dy = d.get(x, y);
                if dy < best_d || (best == usize::MAX && dy <= best_d) {
                    best = y;
                    best_d = dy;
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (x.min(best), x.max(best), best_d);
            }
            chain.push(best);
        };

        // the merged cluster lives on in slot `b`
        let (wa, wb) = (weight[a], weight[b]);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (dka, dkb) = (d.get(k, a), d.get(k, b));
            let v = match method {
                Method::Ward => {
                    let wk = weight[k];
                    ((wa + wk) * dka + (wb + wk) * dkb - wk * h) / (wa + wb + wk)
                }
                Method::Average => (wa * dka + wb * dkb) / (wa + wb),
            };
            d.set(k, b, v);
        }
        active[a] = false;
        weight[b] = wa + wb;
        raw.push((a, b, h));
    }

    relabel(raw, &leaf_weights)
}

/// Orders slot-based merges by height and assigns cluster ids. Stable
/// sorting keeps every child merge ahead of its parent.
fn relabel(raw: Vec<(usize, usize, f64)>, leaf_weights: &[f64]) -> Dendrogram {
    let n = leaf_weights.len();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].2.total_cmp(&raw[j].2).then(i.cmp(&j)));

    let mut parent: Vec<usize> = (0..n).collect();
    // cluster id currently attached to each union-find root
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut weight = leaf_weights.to_vec();
    let mut merges = Vec::with_capacity(raw.len());
    for (step, &i) in order.iter().enumerate() {
        let (a, b, h) = raw[i];
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let (ca, cb) = (cluster_id[ra], cluster_id[rb]);
        parent[ra] = rb;
        weight[rb] += weight[ra];
        cluster_id[rb] = n + step;
        merges.push(Merge {
            left: ca.min(cb),
            right: ca.max(cb),
            height: h,
            weight: weight[rb],
        });
    }
    Dendrogram { leaves: n, merges }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Dendrogram {
    /// Flat labels in `1..=k` after undoing the last `k - 1` merges. Labels
    /// are numbered by the smallest leaf index in each cluster.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.leaves;
        if n == 0 {
            return Vec::new();
        }
        let k = k.clamp(1, n);
        let mut parent: Vec<usize> = (0..n).collect();
        let mut members: Vec<usize> = (0..n).collect();
        // representative leaf of each cluster id
        let mut rep = vec![0usize; n + self.merges.len()];
        rep[..n].copy_from_slice(&members);
        for (i, m) in self.merges.iter().take(n - k).enumerate() {
            let ra = find(&mut parent, rep[m.left]);
            let rb = find(&mut parent, rep[m.right]);
            parent[ra] = rb;
            rep[n + i] = rb;
        }
        for leaf in 0..n {
            members[leaf] = find(&mut parent, leaf);
        }
        let mut label_of_root = vec![0usize; n];
        let mut next = 1;
        members
            .iter()
            .map(|&r| {
                if label_of_root[r] == 0 {
                    label_of_root[r] = next;
                    next += 1;
                }
                label_of_root[r]
            })
            .collect()
    }

    /// Leaf order of a left-to-right traversal, as drawn under a dendrogram.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.leaves;
        if n == 0 {
            return Vec::new();
        }
        if self.merges.is_empty() {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![n + self.merges.len() - 1];
        while let Some(node) = stack.pop() {
            if node < n {
                out.push(node);
            } else {
                let m = &self.merges[node - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }

    /// Heights are nondecreasing along the merge sequence.
    pub fn is_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }
}

/// Mean silhouette of a labelling of weighted points, each weight counting
/// as that many coincident copies. Points alone in their cluster score 0.
pub fn silhouette(points: &[Vec<f64>], weights: &[f64], labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().unwrap_or(0);
    if k < 2 {
        return 0.0;
    }
    let mut cluster_weight = vec![0.0; k + 1];
    for (&l, &w) in labels.iter().zip(weights) {
        cluster_weight[l] += w;
    }
    let mut total = 0.0;
    let mut mass = 0.0;
    for i in 0..points.len() {
        let mut sums = vec![0.0; k + 1];
        for j in 0..points.len() {
            if i != j {
                sums[labels[j]] += weights[j] * sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let own = labels[i];
        let s = if cluster_weight[own] <= 1.0 {
            0.0
        } else {
            let a = sums[own] / (cluster_weight[own] - 1.0);
            let b = (1..=k)
                .filter(|&c| c != own && cluster_weight[c] > 0.0)
                .map(|c| sums[c] / cluster_weight[c])
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 && b.is_finite() {
                (b - a) / denom
            } else {
                0.0
            }
        };
        total += weights[i] * s;
        mass += weights[i];
    }
    total / mass
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn ward_unit_weights_match_plain_distance() {
        let p = pts(&[0.0, 1.0, 5.0]);
        let t = ward(&p, &[1.0; 3]);
        assert_eq!(t.merges[0].left, 0);
        assert_eq!(t.merges[0].right, 1);
        assert!((t.merges[0].height - 1.0).abs() < 1e-12);
        // {0,1} vs {5}: sqrt(2*2*1/3) * |0.5 - 5|
        let expect = (4.0f64 / 3.0).sqrt() * 4.5;
        assert!((t.merges[1].height - expect).abs() < 1e-12);
        assert_eq!((t.merges[1].left, t.merges[1].right), (2, 3));
    }

    #[test]
    fn weights_equal_duplicates() {
        // weighted points versus the same points physically repeated
        let dup = pts(&[0.0, 0.0, 0.0, 1.0, 4.0, 4.0]);
        let full = ward(&dup, &[1.0; 6]);
        let compact = ward(&pts(&[0.0, 1.0, 4.0]), &[3.0, 1.0, 2.0]);
        let nonzero: Vec<f64> = full
            .merges
            .iter()
            .map(|m| m.height)
            .filter(|h| *h > 0.0)
            .collect();
        let compact_h: Vec<f64> = compact.merges.iter().map(|m| m.height).collect();
        assert_eq!(nonzero.len(), compact_h.len());
        for (a, b) in nonzero.iter().zip(&compact_h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cut_and_order() {
        let p = pts(&[0.0, 10.0, 0.1, 10.2, 0.2]);
        let t = ward(&p, &[1.0; 5]);
        assert!(t.is_monotone());
        assert_eq!(t.cut(2), vec![1, 2, 1, 2, 1]);
        assert_eq!(t.cut(1), vec![1; 5]);
        assert_eq!(t.cut(5), vec![1, 2, 3, 4, 5]);
        let order = t.leaf_order();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let pos = |leaf: usize| order.iter().position(|&x| x == leaf).unwrap();
        let low = [pos(0), pos(2), pos(4)];
        assert!(low.iter().max().unwrap() - low.iter().min().unwrap() == 2);
    }

    #[test]
    fn average_linkage_heights() {
        let d = vec![
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 6.0],
            vec![4.0, 6.0, 0.0],
        ];
        let t = average(&d);
        assert!((t.merges[0].height - 1.0).abs() < 1e-12);
        assert!((t.merges[1].height - 5.0).abs() < 1e-12);
    }

    #[test]
    fn silhouette_separated_groups() {
        let p = pts(&[0.0, 0.0, 10.0, 10.0]);
        let s = silhouette(&p, &[1.0; 4], &[1, 1, 2, 2]);
        assert!((s - 1.0).abs() < 1e-12);
        // the same configuration with multiplicities
        let s = silhouette(&pts(&[0.0, 10.0]), &[2.0, 2.0], &[1, 2]);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(silhouette(&p, &[1.0; 4], &[1, 1, 1, 1]), 0.0);
    }
}
