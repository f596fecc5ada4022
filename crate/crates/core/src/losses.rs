//! Attack losses between stacks of feature maps (`N×h×w`), each returning its
//! value and the analytic gradient with respect to the adversarial stack.
//!
//! Every loss is averaged over the `N` channels. The same functions apply to
//! a final saliency map, which is simply a one-channel stack.

use alloc::format;
use alloc::vec::Vec;

use crate::math::ln;
use crate::math::sqrt;
use crate::{Error, Result, Tensor};

/// Guard added to divisors and logarithm arguments.
pub const EPS: f64 = 1e-8;

/// Fraction of reference positions treated as pseudo-fixations by NSS.
pub const NSS_FIXATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Tensor,
}

/// Non-negative component weights of the mixed loss, in KL, CC, NSS, L1 order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixWeights(pub [f64; 4]);

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights([1.0; 4])
    }
}

impl MixWeights {
    /// Equal weights after dividing each component by a typical magnitude of
    /// that component. Zero or non-finite magnitudes keep weight 1.
    pub fn balanced(typical: [f64; 4]) -> Self {
        MixWeights(typical.map(|m| if m.is_finite() && m > 0.0 { 1.0 / m } else { 1.0 }))
    }

    fn check(&self) -> Result<()> {
        if self.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("mix weights must be non-negative: {:?}", self.0)));
        }
        if self.0.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("mix weights must not all be zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Kl,
    Cc,
    Nss,
    L1,
    Mix(MixWeights),
}

impl LossKind {
    pub const BASIC: [LossKind; 4] = [LossKind::Kl, LossKind::Cc, LossKind::Nss, LossKind::L1];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Kl => "KL",
            LossKind::Cc => "CC",
            LossKind::Nss => "NSS",
            LossKind::L1 => "L1",
            LossKind::Mix(_) => "Mix",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(LossKind::Kl),
            "cc" => Ok(LossKind::Cc),
            "nss" => Ok(LossKind::Nss),
            "l1" => Ok(LossKind::L1),
            "mix" => Ok(LossKind::Mix(MixWeights::default())),
            other => Err(Error::invalid(format!("unknown loss {other}"))),
        }
    }

    /// The loss as a metric: KL and L1 are distances, CC and NSS similarities.
    pub fn evaluate(&self, adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
        match self {
            LossKind::Kl => kl_channelwise(adv, reference),
            LossKind::Cc => cc_loss(adv, reference),
            LossKind::Nss => nss_loss(adv, reference),
            LossKind::L1 => l1_loss(adv, reference),
            LossKind::Mix(w) => mix_loss(adv, reference, w),
        }
    }

    /// The loss as a distance that is zero when `adv == reference` and
    /// decreases as the stacks become more alike: KL, `1 − CC`,
    /// `NSS(ref) − NSS(adv)`, L1, or the mix.
    pub fn distance(&self, adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
        match self {
            LossKind::Cc => {
                let LossValue { value, grad } = cc_loss(adv, reference)?;
                Ok(LossValue {
                    value: 1.0 - value,
                    grad: grad.scale(-1.0),
                })
            }
            LossKind::Nss => nss_gap(adv, reference),
            _ => self.evaluate(adv, reference),
        }
    }
}

fn check_pair(adv: &Tensor, reference: &Tensor) -> Result<(usize, usize)> {
    adv.same_shape(reference, "loss stacks")?;
    let (n, h, w) = adv.dims3()?;
    if n == 0 || h * w == 0 {
        return Err(Error::invalid("empty feature stack"));
    }
    Ok((n, h * w))
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Shift by `min(0, min x)` then divide by `sum + EPS`.
fn to_distribution(x: &[f64]) -> (Vec<f64>, f64, f64, usize) {
    let (argmin, min) = x
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let shift = min.min(0.0);
    let denom = x.iter().map(|v| v - shift).sum::<f64>() + EPS;
    let p = x.iter().map(|v| (v - shift) / denom).collect();
    (p, denom, shift, argmin)
}

/// Mean over channels of `KL(p_adv ‖ p_ref)` between the maps normalized to
/// distributions (shifted to be non-negative, then sum-normalized). Each term
/// is `(p + ε)·ln((p + ε)/(q + ε))`, so the value and gradient are exactly
/// zero at `p = q`.
pub fn kl_channelwise(adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
    let (n, plane) = check_pair(adv, reference)?;
    let mut grad = Tensor::zeros(adv.shape());
    let mut total = 0.0;
    for c in 0..n {
        let (p, denom, shift, argmin) = to_distribution(adv.channel(c));
        let (q, ..) = to_distribution(reference.channel(c));
        let mut value = 0.0;
        // dKL/dp_j
        let gp: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(&pj, &qj)| {
                let r = ln((pj + EPS) / (qj + EPS));
                value += (pj + EPS) * r;
                r + 1.0
            })
            .collect();
        total += value;
        let dot: f64 = gp.iter().zip(&p).map(|(g, p)| g * p).sum();
        let sum_gp: f64 = gp.iter().sum();
        let g = grad.channel_mut(c);
        for k in 0..plane {
            g[k] = (gp[k] - dot) / denom;
        }
        if shift < 0.0 {
            // the shift tracks the minimum element
            g[argmin] += (-sum_gp + plane as f64 * dot) / denom;
        }
    }
    let inv = 1.0 / n as f64;
    Ok(LossValue {
        value: total * inv,
        grad: grad.scale(inv),
    })
}

/// Mean over channels of the Pearson correlation. A constant channel on
/// either side contributes 0.
pub fn cc_loss(adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
    let (n, plane) = check_pair(adv, reference)?;
    let mut grad = Tensor::zeros(adv.shape());
    let mut total = 0.0;
    for c in 0..n {
        let (a, b) = (adv.channel(c), reference.channel(c));
        if is_constant(a) || is_constant(b) {
            continue;
        }
        let ma = a.iter().sum::<f64>() / plane as f64;
        let mb = b.iter().sum::<f64>() / plane as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let (da, db) = (x - ma, y - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        let norm = sqrt(saa * sbb);
        if norm == 0.0 {
            continue;
        }
        let r = sab / norm;
        total += r;
        let g = grad.channel_mut(c);
        for k in 0..plane {
            g[k] = (b[k] - mb) / norm - r * (a[k] - ma) / saa;
        }
    }
    let inv = 1.0 / n as f64;
    Ok(LossValue {
        value: total * inv,
        grad: grad.scale(inv),
    })
}

/// Indices of the top `ceil(NSS_FIXATION_FRACTION · len)` values, ties
/// broken by position.
pub fn top_fraction_mask(reference: &[f64]) -> Vec<usize> {
    let k = crate::math::ceil(reference.len() as f64 * NSS_FIXATION_FRACTION).max(1.0) as usize;
    let mut idx: Vec<usize> = (0..reference.len()).collect();
    idx.sort_by(|&i, &j| reference[j].total_cmp(&reference[i]).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

/// NSS of one map at the given fixation positions, with its gradient.
fn nss_channel(a: &[f64], fix: &[usize], grad: Option<&mut [f64]>) -> f64 {
    if is_constant(a) {
        return 0.0;
    }
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = sqrt(var);
    if sd == 0.0 {
        return 0.0;
    }
    let value = fix.iter().map(|&k| (a[k] - mean) / sd).sum::<f64>() / fix.len() as f64;
    if let Some(g) = grad {
        let inv_fix = 1.0 / fix.len() as f64;
        for (k, gk) in g.iter_mut().enumerate() {
            let z = (a[k] - mean) / sd;
            *gk = (-1.0 / n - z * value / n) / sd;
        }
        for &k in fix {
            g[k] += inv_fix / sd;
        }
    }
    value
}

/// Mean over channels of the NSS of the standardized adversarial map at the
/// reference map's top-decile positions. Zero-variance channels contribute 0.
pub fn nss_loss(adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
    let (n, _) = check_pair(adv, reference)?;
    let mut grad = Tensor::zeros(adv.shape());
    let mut total = 0.0;
    for c in 0..n {
        let fix = top_fraction_mask(reference.channel(c));
        total += nss_channel(adv.channel(c), &fix, Some(grad.channel_mut(c)));
    }
    let inv = 1.0 / n as f64;
    Ok(LossValue {
        value: total * inv,
        grad: grad.scale(inv),
    })
}

/// `NSS(ref, ref) − NSS(adv, ref)`: zero at identity, gradient `−∇NSS`.
fn nss_gap(adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
    let LossValue { value, grad } = nss_loss(adv, reference)?;
    let own = nss_loss(reference, reference)?.value;
    Ok(LossValue {
        value: own - value,
        grad: grad.scale(-1.0),
    })
}

/// Mean absolute difference; the gradient uses `sign(0) = 0`.
pub fn l1_loss(adv: &Tensor, reference: &Tensor) -> Result<LossValue> {
    check_pair(adv, reference)?;
    let count = adv.len() as f64;
    let value = adv
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / count;
    let grad = adv.zip_map(reference, |a, b| {
        let d = a - b;
        if d > 0.0 {
            1.0 / count
        } else if d < 0.0 {
            -1.0 / count
        } else {
            0.0
        }
    })?;
    Ok(LossValue { value, grad })
}

/// Weighted sum of KL, `1 − CC`, `NSS(ref) − NSS(adv)` and L1.
pub fn mix_loss(adv: &Tensor, reference: &Tensor, weights: &MixWeights) -> Result<LossValue> {
    weights.check()?;
    check_pair(adv, reference)?;
    let kinds = [LossKind::Kl, LossKind::Cc, LossKind::Nss, LossKind::L1];
    let mut value = 0.0;
    let mut grad = Tensor::zeros(adv.shape());
    for (kind, &w) in kinds.iter().zip(&weights.0) {
        if w == 0.0 {
            continue;
        }
        let part = kind.distance(adv, reference)?;
        value += w * part.value;
        for (g, p) in grad.data_mut().iter_mut().zip(part.grad.data()) {
            *g += w * p;
        }
    }
    Ok(LossValue { value, grad })
}
