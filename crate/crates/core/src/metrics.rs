//! Saliency agreement metrics (CC, SIM, KL, NSS, AUC-Borji, shuffled AUC) and
//! perceptibility metrics (SSIM, L2).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses;
use crate::math::sqrt;
use crate::{Error, Result, Tensor};

/// Negatives drawn per AUC-Borji split.
pub const BORJI_NEGATIVES: usize = 100;
/// Random splits averaged by AUC-Borji and shuffled AUC.
pub const AUC_SPLITS: u64 = 10;

const SSIM_WINDOW: usize = 8;
const SSIM_STRIDE: usize = 4;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Fixation positions `(row, col)` on a `height × width` map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationSet {
    positions: Vec<(usize, usize)>,
    height: usize,
    width: usize,
}

impl FixationSet {
    pub fn new(positions: Vec<(usize, usize)>, height: usize, width: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("fixation set is empty"));
        }
        if let Some(p) = positions.iter().find(|(r, c)| *r >= height || *c >= width) {
            return Err(Error::invalid(format!(
                "fixation {p:?} outside {height}x{width} map"
            )));
        }
        Ok(FixationSet {
            positions,
            height,
            width,
        })
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn flat(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions.iter().map(move |&(r, c)| r * self.width + c)
    }
}

/// Height and width of a single-channel map (`h×w` or `1×h×w`).
fn plane(map: &Tensor) -> Result<(usize, usize)> {
    match *map.shape() {
        [h, w] | [1, h, w] => Ok((h, w)),
        _ => Err(Error::invalid(format!(
            "expected a single-channel map, got shape {:?}",
            map.shape()
        ))),
    }
}

fn check_fixations(map: &Tensor, f: &FixationSet) -> Result<()> {
    if plane(map)? != f.dims() {
        return Err(Error::ShapeMismatch {
            context: "fixations vs map".into(),
            expected: [f.height, f.width].to_vec(),
            actual: map.shape().to_vec(),
        });
    }
    Ok(())
}

/// Pearson correlation of the flattened maps; 0 when either map is constant.
pub fn cc(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape(b, "cc")?;
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let constant = |t: &Tensor| t.data().iter().all(|&v| v == t.data()[0]);
    if constant(a) || constant(b) || saa * sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

fn sum_normalized(t: &Tensor, what: &str) -> Result<Vec<f64>> {
    if t.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid(format!("{what}: map has negative values")));
    }
    let s = t.sum();
    if s <= 0.0 {
        return Err(Error::invalid(format!("{what}: map sums to zero")));
    }
    Ok(t.data().iter().map(|v| v / s).collect())
}

/// Histogram intersection of the two maps after sum-normalization.
pub fn sim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape(b, "sim")?;
    let p = sum_normalized(a, "sim")?;
    let q = sum_normalized(b, "sim")?;
    Ok(p.iter().zip(&q).map(|(x, y)| x.min(*y)).sum::<f64>().min(1.0))
}

/// `KL(a ‖ b)` between the maps as distributions.
pub fn kl(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape(b, "kl")?;
    let (h, w) = plane(a)?;
    let to3 = |t: &Tensor| Tensor::chw(1, h, w, t.data().to_vec());
    Ok(losses::kl_channelwise(&to3(a)?, &to3(b)?)?.value)
}

/// Mean of the standardized map at the fixations; 0 for a constant map.
pub fn nss(map: &Tensor, fixations: &FixationSet) -> Result<f64> {
    check_fixations(map, fixations)?;
    let d = map.data();
    if d.iter().all(|&v| v == d[0]) {
        return Ok(0.0);
    }
    let n = d.len() as f64;
    let mean = map.sum() / n;
    let sd = sqrt(d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
    Ok(fixations.flat().map(|i| (d[i] - mean) / sd).sum::<f64>() / fixations.len() as f64)
}

/// Exact ROC area of map values at `positives` against `negatives`, with
/// ties counted as one half.
pub fn auc_saliency(map: &Tensor, positives: &FixationSet, negatives: &FixationSet) -> Result<f64> {
    check_fixations(map, positives)?;
    check_fixations(map, negatives)?;
    let pos: BTreeSet<usize> = positives.flat().collect();
    if negatives.flat().any(|i| pos.contains(&i)) {
        return Err(Error::invalid("positive and negative fixations overlap"));
    }
    let d = map.data();
    let pv: Vec<f64> = positives.flat().map(|i| d[i]).collect();
    let nv: Vec<f64> = negatives.flat().map(|i| d[i]).collect();
    Ok(rank_auc(&pv, &nv))
}

fn rank_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut credit = 0.0;
    for &p in pos {
        let below = sorted.partition_point(|&v| v < p);
        let upto = sorted.partition_point(|&v| v <= p);
        credit += below as f64 + 0.5 * (upto - below) as f64;
    }
    credit / (pos.len() * neg.len()) as f64
}

/// AUC against negatives drawn uniformly from non-fixated pixels, averaged
/// over [`AUC_SPLITS`] seeded splits of [`BORJI_NEGATIVES`] draws each.
pub fn auc_borji(map: &Tensor, positives: &FixationSet, seed: u64) -> Result<f64> {
    check_fixations(map, positives)?;
    let pos: BTreeSet<usize> = positives.flat().collect();
    let pool: Vec<usize> = (0..map.len()).filter(|i| !pos.contains(i)).collect();
    if pool.is_empty() {
        return Err(Error::invalid("no non-fixated pixels to draw negatives from"));
    }
    averaged_auc(map, positives, &pool, BORJI_NEGATIVES, seed)
}

/// Shuffled AUC: negatives are fixations of other images, drawn (as many as
/// there are positives) from the pooled set, averaged over [`AUC_SPLITS`]
/// seeded draws. Pool positions that coincide with positives are dropped.
pub fn sauc(map: &Tensor, positives: &FixationSet, others: &[FixationSet], seed: u64) -> Result<f64> {
    check_fixations(map, positives)?;
    let pos: BTreeSet<usize> = positives.flat().collect();
    let mut pool = Vec::new();
    for f in others {
        check_fixations(map, f)?;
        pool.extend(f.flat().filter(|i| !pos.contains(i)));
    }
    if pool.is_empty() {
        return Err(Error::invalid("shuffled AUC needs a non-empty negative pool"));
    }
    averaged_auc(map, positives, &pool, positives.len(), seed)
}

fn averaged_auc(map: &Tensor, positives: &FixationSet, pool: &[usize], draws: usize, seed: u64) -> Result<f64> {
    let d = map.data();
    let pv: Vec<f64> = positives.flat().map(|i| d[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..AUC_SPLITS {
        let nv: Vec<f64> = (0..draws).map(|_| d[pool[rng.gen_range(0..pool.len())]]).collect();
        total += rank_auc(&pv, &nv);
    }
    Ok(total / AUC_SPLITS as f64)
}

/// Mean local SSIM over 8×8 windows at stride 4 (the whole plane when it is
/// smaller), with unit dynamic range constants, averaged over channels.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape(b, "ssim")?;
    let (c, h, w) = match *a.shape() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => return Err(Error::invalid(format!("ssim needs a 2-D or 3-D tensor, got {:?}", a.shape()))),
    };
    if h == 0 || w == 0 {
        return Err(Error::invalid("ssim of an empty image"));
    }
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let starts = |len: usize, win: usize| (0..=len - win).step_by(SSIM_STRIDE);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let pa = &a.data()[ch * h * w..(ch + 1) * h * w];
        let pb = &b.data()[ch * h * w..(ch + 1) * h * w];
        for y0 in starts(h, wh) {
            for x0 in starts(w, ww) {
                let n = (wh * ww) as f64;
                let (mut sa, mut sb) = (0.0, 0.0);
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        sa += pa[y * w + x];
                        sb += pb[y * w + x];
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        let (da, db) = (pa[y * w + x] - ma, pb[y * w + x] - mb);
                        vaa += da * da;
                        vbb += db * db;
                        vab += da * db;
                    }
                }
                let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * vab + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (vaa + vbb + SSIM_C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Euclidean norm of the flattened perturbation.
pub fn l2_perceptibility(delta: &Tensor) -> f64 {
    sqrt(delta.data().iter().map(|v| v * v).sum())
}

/// Samples `count` distinct positions with probability proportional to the
/// map values (without replacement). Stops early when fewer than `count`
/// positions carry mass.
pub fn pseudo_fixations(map: &Tensor, count: usize, seed: u64) -> Result<FixationSet> {
    let (h, w) = plane(map)?;
    if count == 0 {
        return Err(Error::invalid("fixation count must be at least 1"));
    }
    if map.data().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("fixation map must be finite and non-negative"));
    }
    let mut weights = map.data().to_vec();
    let mut remaining: f64 = weights.iter().sum();
    if remaining <= 0.0 {
        return Err(Error::invalid("fixation map sums to zero"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(count);
    while positions.len() < count && remaining > 0.0 {
        let target = rng.gen::<f64>() * remaining;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &v) in weights.iter().enumerate() {
            if v > 0.0 {
                pick = Some(i);
                acc += v;
                if acc > target {
                    break;
                }
            }
        }
        let Some(i) = pick else { break };
        positions.push((i / w, i % w));
        weights[i] = 0.0;
        // re-sum rather than subtract, so rounding never leaves phantom mass
        remaining = weights.iter().sum();
    }
    FixationSet::new(positions, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::seq::SliceRandom;

    fn random_map(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[1, h, w], |_| rng.gen::<f64>())
    }

    #[test]
    fn cc_basics() {
        let x = random_map(6, 5, 1);
        assert!((cc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((cc(&x, &x.map(|v| 3.0 * v + 2.0)).unwrap() - 1.0).abs() < 1e-12);
        let flat = Tensor::filled(&[1, 6, 5], 1.0);
        assert_eq!(cc(&flat, &flat).unwrap(), 0.0);
        let y = random_map(6, 5, 2);
        assert_eq!(cc(&x, &y).unwrap(), cc(&y, &x).unwrap());
    }

    #[test]
    fn cc_against_shuffles_averages_near_zero() {
        let x = random_map(48, 64, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0.0;
        for _ in 0..100 {
            let mut d = x.data().to_vec();
            d.shuffle(&mut rng);
            total += cc(&x, &Tensor::new(x.shape().to_vec(), d).unwrap()).unwrap();
        }
        assert!((total / 100.0).abs() < 0.1);
    }

    #[test]
    fn sim_examples() {
        let x = random_map(4, 4, 5);
        assert!((sim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let a = Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap();
        let b = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(sim(&a, &b).unwrap(), 0.0);
        let p = Tensor::new(vec![1, 1, 2], vec![0.5, 0.5]).unwrap();
        let q = Tensor::new(vec![1, 1, 2], vec![0.25, 0.75]).unwrap();
        assert!((sim(&p, &q).unwrap() - 0.75).abs() < 1e-12);
        assert!(sim(&Tensor::zeros(&[1, 1, 2]), &q).is_err());
    }

    #[test]
    fn kl_of_map_with_itself_is_zero() {
        let x = random_map(5, 7, 6);
        assert_eq!(kl(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn auc_perfect_and_tied() {
        let mut m = Tensor::zeros(&[1, 4, 4]);
        m.data_mut()[0] = 1.0;
        m.data_mut()[5] = 1.0;
        let pos = FixationSet::new(vec![(0, 0), (1, 1)], 4, 4).unwrap();
        let neg = FixationSet::new(vec![(2, 2), (3, 3), (0, 3)], 4, 4).unwrap();
        assert_eq!(auc_saliency(&m, &pos, &neg).unwrap(), 1.0);
        let flat = Tensor::filled(&[1, 4, 4], 0.2);
        assert_eq!(auc_saliency(&flat, &pos, &neg).unwrap(), 0.5);
        assert_eq!(auc_borji(&flat, &pos, 1).unwrap(), 0.5);
        assert!(auc_saliency(&m, &pos, &pos).is_err());
        assert!(sauc(&m, &pos, &[], 1).is_err());
    }

    #[test]
    fn auc_of_label_independent_map_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut total = 0.0;
        for trial in 0..1000 {
            let m = random_map(8, 8, 100 + trial);
            let mut cells: Vec<(usize, usize)> = (0..64).map(|i| (i / 8, i % 8)).collect();
            cells.shuffle(&mut rng);
            let pos = FixationSet::new(cells[..10].to_vec(), 8, 8).unwrap();
            let neg = FixationSet::new(cells[10..30].to_vec(), 8, 8).unwrap();
            total += auc_saliency(&m, &pos, &neg).unwrap();
        }
        assert!((total / 1000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn ssim_identity_shift_and_symmetry() {
        let a = random_map(16, 16, 8).reshape(vec![1, 16, 16]).unwrap().map(|v| 0.3 * v + 0.1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let shifted = a.map(|v| v + 0.5);
        assert!(ssim(&a, &shifted).unwrap() < 0.9);
        let b = random_map(16, 16, 9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
        assert!(ssim(&a, &Tensor::zeros(&[1, 16, 8])).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_perceptibility(&Tensor::zeros(&[3, 2, 2])), 0.0);
        let mut t = Tensor::zeros(&[3, 2, 2]);
        t.data_mut()[4] = 3.0;
        assert_eq!(l2_perceptibility(&t), 3.0);
        let d = random_map(3, 3, 10);
        assert!((l2_perceptibility(&d.scale(-2.5)) - 2.5 * l2_perceptibility(&d)).abs() < 1e-12);
    }

    #[test]
    fn pseudo_fixations_delta_and_determinism() {
        let mut m = Tensor::zeros(&[1, 5, 5]);
        m.data_mut()[13] = 2.0;
        let f = pseudo_fixations(&m, 1, 3).unwrap();
        assert_eq!(f.positions(), &[(2, 3)]);
        let r = random_map(6, 6, 11);
        assert_eq!(pseudo_fixations(&r, 5, 9).unwrap(), pseudo_fixations(&r, 5, 9).unwrap());
        assert!(pseudo_fixations(&Tensor::zeros(&[1, 2, 2]), 1, 0).is_err());
    }

    #[test]
    fn pseudo_fixation_frequencies_follow_map() {
        let m = Tensor::new(vec![1, 2, 3], vec![0.05, 0.1, 0.15, 0.2, 0.0, 0.5]).unwrap();
        let draws = 100_000u64;
        let mut counts = [0usize; 6];
        for s in 0..draws {
            let f = pseudo_fixations(&m, 1, s).unwrap();
            let (r, c) = f.positions()[0];
            counts[r * 3 + c] += 1;
        }
        let total = m.sum();
        let tv: f64 = counts
            .iter()
            .zip(m.data())
            .map(|(&k, &p)| (k as f64 / draws as f64 - p / total).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
        assert_eq!(counts[4], 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn map() -> impl Strategy<Value = Tensor> {
            proptest::collection::vec(0.0f64..1.0, 30).prop_map(|v| Tensor::new(vec![1, 5, 6], v).unwrap())
        }

        proptest! {
            #[test]
            fn affine_invariance(a in map(), b in map(), k in 0.1f64..10.0, off in 0.0f64..2.0) {
                let t = a.map(|x| k * x + off);
                prop_assert!((cc(&a, &b).unwrap() - cc(&t, &b).unwrap()).abs() < 1e-9);
                let scaled = a.map(|x| k * x);
                prop_assert!((sim(&a, &b).unwrap() - sim(&scaled, &b).unwrap()).abs() < 1e-9);
                let pos = FixationSet::new(vec![(0, 0), (2, 3), (4, 5)], 5, 6).unwrap();
                let neg = FixationSet::new(vec![(1, 1), (3, 3), (4, 0), (0, 5)], 5, 6).unwrap();
                let mono = a.map(|x| libm::exp(3.0 * x));
                prop_assert_eq!(auc_saliency(&a, &pos, &neg).unwrap(), auc_saliency(&mono, &pos, &neg).unwrap());
            }

            #[test]
            fn self_similarity(a in map()) {
                prop_assume!(a.sum() > 0.0);
                prop_assert!((sim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
                prop_assert!(kl(&a, &a).unwrap().abs() < 1e-9);
            }
        }
    }
}
