use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{TypeVector, PMF_TOLERANCE};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Common prior over type vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    /// Product of per-buyer pmfs `f_i`.
    Independent(Vec<Vec<f64>>),
    /// Sparse joint pmf; only positive-mass vectors are stored.
    Joint(JointPrior),
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointPrior {
    entries: Vec<(TypeVector, f64)>,
    index: HashMap<TypeVector, f64>,
}

impl JointPrior {
    pub fn new(mut entries: Vec<(TypeVector, f64)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let index = entries.iter().cloned().collect();
        JointPrior { entries, index }
    }

    pub fn entries(&self) -> &[(TypeVector, f64)] {
        &self.entries
    }

    pub fn prob(&self, t: &TypeVector) -> f64 {
        self.index.get(t).copied().unwrap_or(0.0)
    }
}

impl Prior {
    pub fn joint(entries: Vec<(TypeVector, f64)>) -> Self {
        Prior::Joint(JointPrior::new(entries))
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, Prior::Joint(_))
    }

    pub(crate) fn violations(&self, counts: &[usize], scale: f64) -> Vec<String> {
        let mut out = Vec::new();
        let n = counts.len();
        match self {
            Prior::Independent(pmfs) => {
                if pmfs.len() != n {
                    out.push(format!("prior has {} pmfs for {n} buyers", pmfs.len()));
                    return out;
                }
                for (i, f) in pmfs.iter().enumerate() {
                    if f.len() != counts[i] {
                        out.push(format!(
                            "buyer {i}: pmf has {} entries for {} types",
                            f.len(),
                            counts[i]
                        ));
                        continue;
                    }
                    if f.iter().any(|&p| !(p >= 0.0)) {
                        out.push(format!("buyer {i}: pmf has a negative entry"));
                    }
                    let s: f64 = f.iter().sum();
                    if (s - 1.0).abs() > PMF_TOLERANCE {
                        out.push(format!("buyer {i}: pmf sums to {s}, not 1"));
                    }
                }
            }
            Prior::Joint(j) => {
                let mut seen = std::collections::HashSet::new();
                for (t, p) in &j.entries {
                    if t.len() != n || t.0.iter().zip(counts).any(|(&x, &c)| x >= c) {
                        out.push(format!("joint pmf entry {:?} is not a valid type vector", t.0));
                    }
                    if !(*p > 0.0) {
                        out.push(format!("joint pmf entry {:?} has non-positive mass {p}", t.0));
                    }
                    if !seen.insert(t.clone()) {
                        out.push(format!("joint pmf entry {:?} appears twice", t.0));
                    }
                }
                let s: f64 = j.entries.iter().map(|e| e.1).sum();
                if (s - 1.0).abs() > PMF_TOLERANCE {
                    out.push(format!("joint pmf sums to {s}, not 1"));
                }
            }
        }
        if out.is_empty() {
            let floor = 1.0 / scale;
            for (i, f) in self.marginals(counts).iter().enumerate() {
                for (t, &p) in f.iter().enumerate() {
                    if p < floor * (1.0 - 1e-12) {
                        out.push(format!(
                            "buyer {i}, type {t}: marginal probability {p} below 1/L = {floor}"
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn marginals(&self, counts: &[usize]) -> Vec<Vec<f64>> {
        match self {
            Prior::Independent(pmfs) => pmfs.clone(),
            Prior::Joint(j) => {
                let mut out: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
                for (t, p) in &j.entries {
                    for (i, &ti) in t.0.iter().enumerate() {
                        out[i][ti] += p;
                    }
                }
                out
            }
        }
    }

    pub fn prob(&self, t: &TypeVector) -> f64 {
        match self {
            Prior::Independent(pmfs) => t.0.iter().zip(pmfs).map(|(&ti, f)| f[ti]).product(),
            Prior::Joint(j) => j.prob(t),
        }
    }

    /// Number of type vectors the enumeration would visit.
    pub fn support_size(&self, counts: &[usize]) -> u128 {
        match self {
            Prior::Independent(_) => counts.iter().map(|&c| c as u128).product(),
            Prior::Joint(j) => j.entries.len() as u128,
        }
    }

    /// Every type vector with positive mass, with its probability.
    pub fn enumerate(&self, counts: &[usize], cap: u128) -> Result<Vec<(TypeVector, f64)>> {
        let size = self.support_size(counts);
        if size > cap {
            return Err(Error::CapExceeded { size, cap });
        }
        match self {
            Prior::Joint(j) => Ok(j.entries.clone()),
            Prior::Independent(pmfs) => {
                let mut out = Vec::with_capacity(size as usize);
                for t in product_space(counts) {
                    let p = t.0.iter().zip(pmfs).map(|(&ti, f)| f[ti]).product::<f64>();
                    if p > 0.0 {
                        out.push((t, p));
                    }
                }
                Ok(out)
            }
        }
    }

    /// `mu(t | t_-i) / mu(t' | t_-i)`; entry `i` of `others` is ignored.
    pub fn conditional_ratio(&self, buyer: usize, ty: usize, other_ty: usize, others: &TypeVector) -> Result<f64> {
        if ty == other_ty {
            return Ok(1.0);
        }
        let (num, den) = match self {
            Prior::Independent(pmfs) => (pmfs[buyer][ty], pmfs[buyer][other_ty]),
            Prior::Joint(j) => (j.prob(&others.with(buyer, ty)), j.prob(&others.with(buyer, other_ty))),
        };
        if den <= 0.0 {
            return Err(Error::ZeroConditional {
                buyer,
                denominator: other_ty,
            });
        }
        Ok(num / den)
    }

    /// Distribution of the full type vector conditioned on `t_i = ty`.
    pub fn conditional_on(&self, counts: &[usize], buyer: usize, ty: usize) -> Vec<(TypeVector, f64)> {
        match self {
            Prior::Independent(pmfs) => {
                let mut reduced = counts.to_vec();
                reduced[buyer] = 1;
                product_space(&reduced)
                    .map(|t| {
                        let t = t.with(buyer, ty);
                        let p =
                            t.0.iter()
                                .enumerate()
                                .filter(|&(k, _)| k != buyer)
                                .map(|(k, &tk)| pmfs[k][tk])
                                .product::<f64>();
                        (t, p)
                    })
                    .filter(|e| e.1 > 0.0)
                    .collect()
            }
            Prior::Joint(j) => {
                let f: f64 = j.entries.iter().filter(|e| e.0.get(buyer) == ty).map(|e| e.1).sum();
                j.entries
                    .iter()
                    .filter(|e| e.0.get(buyer) == ty)
                    .map(|(t, p)| (t.clone(), p / f))
                    .collect()
            }
        }
    }

    /// Largest `mu(t | t_-i) / mu(t' | t_-i)` over buyers, type pairs and the
    /// support of `t_-i`. Infinite when some conditional vanishes.
    pub fn z_max(&self, counts: &[usize]) -> f64 {
        match self {
            Prior::Independent(pmfs) => pmfs
                .iter()
                .map(|f| {
                    let hi = f.iter().copied().fold(0.0, f64::max);
                    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
                    if lo > 0.0 {
                        hi / lo
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(1.0, f64::max),
            Prior::Joint(j) => {
                let mut z: f64 = 1.0;
                for (i, &c) in counts.iter().enumerate() {
                    for (t, _) in &j.entries {
                        let probs: Vec<f64> = (0..c).map(|k| j.prob(&t.with(i, k))).collect();
                        let hi = probs.iter().copied().fold(0.0, f64::max);
                        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
                        z = z.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
                    }
                }
                z
            }
        }
    }

    pub fn sampler(&self) -> PriorSampler {
        match self {
            Prior::Independent(pmfs) => PriorSampler::Independent(
                pmfs.iter()
                    .map(|f| WeightedIndex::new(f).expect("validated pmf"))
                    .collect(),
            ),
            Prior::Joint(j) => PriorSampler::Joint {
                support: j.entries.iter().map(|e| e.0.clone()).collect(),
                dist: WeightedIndex::new(j.entries.iter().map(|e| e.1)).expect("validated pmf"),
            },
        }
    }
}

/// Precomputed sampling tables for a prior.
#[derive(Clone, Debug)]
pub enum PriorSampler {
    Independent(Vec<WeightedIndex<f64>>),
    Joint {
        support: Vec<TypeVector>,
        dist: WeightedIndex<f64>,
    },
}

impl PriorSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TypeVector {
        match self {
            PriorSampler::Independent(ds) => TypeVector(ds.iter().map(|d| d.sample(rng)).collect()),
            PriorSampler::Joint { support, dist } => support[dist.sample(rng)].clone(),
        }
    }
}

/// All type vectors of a product space, in lexicographic order.
pub fn product_space(counts: &[usize]) -> impl Iterator<Item = TypeVector> + '_ {
    let total: usize = counts.iter().product();
    (0..total).map(move |mut k| {
        let mut v = vec![0; counts.len()];
        for i in (0..counts.len()).rev() {
            v[i] = k % counts[i];
            k /= counts[i];
        }
        TypeVector(v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tv(v: &[usize]) -> TypeVector {
        TypeVector(v.to_vec())
    }

    fn example_joint() -> Prior {
        // (a,x) .2, (b,x) .4, (a,y) .2, (b,y) .2
        Prior::joint(vec![
            (tv(&[0, 0]), 0.2),
            (tv(&[1, 0]), 0.4),
            (tv(&[0, 1]), 0.2),
            (tv(&[1, 1]), 0.2),
        ])
    }

    #[test]
    fn enumerate_product() {
        let p = Prior::Independent(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let all = p.enumerate(&[2, 2], DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|e| e.1 == 0.25));

        let p = Prior::Independent(vec![vec![0.2, 0.3, 0.5]]);
        let all = p.enumerate(&[3], DEFAULT_ENUMERATION_CAP).unwrap();
        let probs: Vec<f64> = all.iter().map(|e| e.1).collect();
        assert_eq!(probs, vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn enumerate_cap() {
        let p = Prior::Independent(vec![vec![0.1; 10]; 10]);
        assert!(matches!(
            p.enumerate(&[10; 10], DEFAULT_ENUMERATION_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn conditional_ratios() {
        let ind = Prior::Independent(vec![vec![0.25, 0.75], vec![0.5, 0.5]]);
        for other in 0..2 {
            let r = ind.conditional_ratio(0, 0, 1, &tv(&[0, other])).unwrap();
            assert!((r - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(ind.conditional_ratio(0, 1, 1, &tv(&[1, 0])).unwrap(), 1.0);

        let j = example_joint();
        let r = j.conditional_ratio(0, 0, 1, &tv(&[0, 0])).unwrap();
        assert!((r - 0.5).abs() < 1e-15);

        let sparse = Prior::joint(vec![(tv(&[0, 0]), 0.7), (tv(&[1, 1]), 0.3)]);
        assert!(matches!(
            sparse.conditional_ratio(0, 0, 1, &tv(&[0, 0])),
            Err(Error::ZeroConditional { .. })
        ));
    }

    #[test]
    fn z_max_values() {
        // Enumerated by hand: given x, a:b = .2:.4 so ratios 2 and 1/2; given y, 1.
        // For buyer 2 given a: x:y = .2:.2; given b: .4:.2 -> 2.
        assert_eq!(example_joint().z_max(&[2, 2]), 2.0);
        let ind = Prior::Independent(vec![vec![0.25, 0.75], vec![0.5, 0.5]]);
        assert_eq!(ind.z_max(&[2, 2]), 3.0);
    }

    #[test]
    fn joint_marginals() {
        let m = example_joint().marginals(&[2, 2]);
        assert!((m[0][0] - 0.4).abs() < 1e-15 && (m[0][1] - 0.6).abs() < 1e-15);
        assert!((m[1][0] - 0.6).abs() < 1e-15 && (m[1][1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn conditional_on_sums_to_one() {
        let j = example_joint();
        let c = j.conditional_on(&[2, 2], 0, 1);
        let s: f64 = c.iter().map(|e| e.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((c[0].1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_prior_sample() {
        let p = Prior::Independent(vec![vec![1.0], vec![0.0, 1.0]]);
        let s = p.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(s.sample(&mut rng), tv(&[0, 1]));
        }
    }

    #[test]
    fn sample_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Prior::Independent(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let s = p.sampler();
        let hits = (0..100_000).filter(|_| s.sample(&mut rng) == tv(&[0, 0])).count();
        assert!((hits as f64 / 1e5 - 0.25).abs() < 0.01);

        let p = Prior::joint(vec![(tv(&[0, 0]), 0.7), (tv(&[1, 1]), 0.3)]);
        let s = p.sampler();
        let hits = (0..100_000).filter(|_| s.sample(&mut rng) == tv(&[0, 0])).count();
        assert!((hits as f64 / 1e5 - 0.7).abs() < 0.01);
    }
}
