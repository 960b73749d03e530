//! Contrastive objectives over a two-view batch: InfoNCE, per-anchor negative
//! logits, the distribution-level supervised contrastive loss keyed on ID/OOD
//! flags, and their weighted combination. Every loss returns its value and the
//! analytic gradient with respect to the embeddings.

use crate::datagen::Domain;
use crate::error::{ColtError, Result};
use crate::numkit::Matrix;

/// Two-view contrastive batch.
///
/// Row layout: views `2i` and `2i+1` are the two augmentations of image `i`.
/// `flags[i]` is the domain indicator of image `i` (+1 ID, -1 OOD); both views
/// of an image share its flag by construction.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub embeddings: Matrix,
    /// Per-image domain indicator, length `embeddings.rows() / 2`.
    pub flags: Vec<f64>,
    pub tau: f64,
}

impl ContrastiveBatch {
    pub fn new(embeddings: Matrix, domains: &[Domain], tau: f64) -> Result<Self> {
        let flags = domains
            .iter()
            .map(|d| match d {
                Domain::Id => 1.0,
                Domain::Ood => -1.0,
            })
            .collect();
        let batch = Self {
            embeddings,
            flags,
            tau,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.embeddings.rows();
        if rows == 0 || rows % 2 != 0 {
            return Err(ColtError::Parameter(format!(
                "batch must hold a positive even number of views, got {}",
                rows
            )));
        }
        if self.flags.len() * 2 != rows {
            return Err(ColtError::Parameter(format!(
                "{} domain flags for {} views",
                self.flags.len(),
                rows
            )));
        }
        if !(self.tau > 0.0) {
            return Err(ColtError::Parameter(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.flags.iter().any(|f| *f != 1.0 && *f != -1.0) {
            return Err(ColtError::Parameter(
                "domain flags must be +1 or -1".to_string(),
            ));
        }
        for (i, norm) in self.embeddings.row_norms().iter().enumerate() {
            if (norm - 1.0).abs() > 1e-6 {
                return Err(ColtError::Parameter(format!(
                    "view {} is not unit-norm (norm {})",
                    i, norm
                )));
            }
        }
        Ok(())
    }

    /// Number of underlying images.
    pub fn num_images(&self) -> usize {
        self.flags.len()
    }

    /// Number of views (anchors).
    pub fn num_views(&self) -> usize {
        self.embeddings.rows()
    }

    fn flag_of_view(&self, view: usize) -> f64 {
        self.flags[view / 2]
    }
}

/// Loss value, embedding gradient, and per-anchor negative logits.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// dL/d-embeddings, same shape as the batch embeddings.
    pub grad: Matrix,
    /// Per-anchor negative logit vectors (softmax shares of each negative);
    /// empty for losses where the quantity is not defined.
    pub neg_logits: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Negative logits of one anchor: `p_j = exp(d_j/tau) / (exp(pos/tau) + sum_k
/// exp(d_k/tau))`. Computed with max-subtraction.
pub fn negative_logits(pos_dot: f64, neg_dots: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(ColtError::Parameter(format!(
            "temperature must be positive, got {}",
            tau
        )));
    }
    let (_, logits) = softmax_shares(pos_dot, neg_dots, tau);
    Ok(logits)
}

/// Returns (positive share, negative shares) of the anchor's softmax.
fn softmax_shares(pos_dot: f64, neg_dots: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let max = neg_dots.iter().cloned().fold(pos_dot, f64::max);
    let pos_exp = ((pos_dot - max) / tau).exp();
    let neg_exps: Vec<f64> = neg_dots.iter().map(|d| ((d - max) / tau).exp()).collect();
    let denom = pos_exp + neg_exps.iter().sum::<f64>();
    (
        pos_exp / denom,
        neg_exps.into_iter().map(|e| e / denom).collect(),
    )
}

/// InfoNCE over all `2B` anchors. For anchor `i` the positive is its sibling
/// view and the negatives are the `2(B-1)` views of the other images.
pub fn info_nce(batch: &ContrastiveBatch) -> Result<LossOutput> {
    batch.validate()?;
    let n = batch.num_views();
    let z = &batch.embeddings;
    let tau = batch.tau;
    let dots = z.matmul_transpose(z);

    let mut warnings = Vec::new();
    if batch.num_images() == 1 {
        warnings.push("batch of one image has no negatives; loss is 0".to_string());
    }

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, z.cols());
    let mut neg_logits = Vec::with_capacity(n);
    let inv = 1.0 / n as f64;

    for i in 0..n {
        let sibling = i ^ 1;
        let pos_dot = dots.get(i, sibling);
        let neg_idx: Vec<usize> = (0..n).filter(|&j| j != i && j != sibling).collect();
        let neg_dots: Vec<f64> = neg_idx.iter().map(|&j| dots.get(i, j)).collect();
        let (pos_share, shares) = softmax_shares(pos_dot, &neg_dots, tau);

        loss -= pos_share.ln() * inv;

        // d(loss_i)/d(dot(i,sibling)) = (pos_share - 1)/tau,
        // d(loss_i)/d(dot(i,j)) = share_j/tau
        let coeff_pos = (pos_share - 1.0) / tau * inv;
        accumulate_pair(&mut grad, z, i, sibling, coeff_pos);
        for (&j, &share) in neg_idx.iter().zip(&shares) {
            let coeff = share / tau * inv;
            accumulate_pair(&mut grad, z, i, j, coeff);
        }
        neg_logits.push(shares);
    }

    Ok(LossOutput {
        loss,
        grad,
        neg_logits,
        warnings,
    })
}

/// Adds `coeff * z_b` to grad row `a` and `coeff * z_a` to grad row `b`.
fn accumulate_pair(grad: &mut Matrix, z: &Matrix, a: usize, b: usize, coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    for (g, v) in grad.row_mut(a).iter_mut().zip(z.row(b)) {
        *g += coeff * v;
    }
    for (g, v) in grad.row_mut(b).iter_mut().zip(z.row(a)) {
        *g += coeff * v;
    }
}

/// Distribution-level supervised contrastive loss.
///
/// For anchor `i`, the positives `P(i)` are every other view in the batch with
/// the same domain flag, and the negatives `N(i)` are the views of the other
/// domain. Each per-positive term's denominator contains only that positive
/// and the cross-domain negatives. Anchors with empty `P(i)` are skipped and
/// excluded from the mean; with empty `N(i)` every term is exactly zero.
pub fn dist_scl(batch: &ContrastiveBatch) -> Result<LossOutput> {
    batch.validate()?;
    let n = batch.num_views();
    let z = &batch.embeddings;
    let tau = batch.tau;
    let dots = z.matmul_transpose(z);

    // first pass: count anchors with at least one same-domain positive
    let positives: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&p| p != i && batch.flag_of_view(p) == batch.flag_of_view(i))
                .collect()
        })
        .collect();
    let valid = positives.iter().filter(|p| !p.is_empty()).count();

    let mut warnings = Vec::new();
    if valid < n {
        warnings.push(format!(
            "{} anchors have no same-domain positive and were skipped",
            n - valid
        ));
    }
    if valid == 0 {
        return Ok(LossOutput {
            loss: 0.0,
            grad: Matrix::zeros(n, z.cols()),
            neg_logits: Vec::new(),
            warnings,
        });
    }

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, z.cols());
    let inv_valid = 1.0 / valid as f64;

    for i in 0..n {
        let pos = &positives[i];
        if pos.is_empty() {
            continue;
        }
        let negs: Vec<usize> = (0..n)
            .filter(|&m| batch.flag_of_view(m) != batch.flag_of_view(i))
            .collect();
        let inv_p = inv_valid / pos.len() as f64;

        if negs.is_empty() {
            // denominator reduces to the positive term; every term is -ln(1) = 0
            continue;
        }

        // shared max-shift across every term of this anchor
        let max = pos
            .iter()
            .chain(&negs)
            .map(|&m| dots.get(i, m))
            .fold(f64::NEG_INFINITY, f64::max);
        let neg_exps: Vec<f64> = negs
            .iter()
            .map(|&m| ((dots.get(i, m) - max) / tau).exp())
            .collect();
        let neg_sum: f64 = neg_exps.iter().sum();

        // per-negative gradient coefficients accumulate over positives via
        // sum_p 1/D_ip
        let mut inv_denom_sum = 0.0;
        for &p in pos {
            let pos_exp = ((dots.get(i, p) - max) / tau).exp();
            let denom = pos_exp + neg_sum;
            let share = pos_exp / denom;
            loss -= share.ln() * inv_p;
            let coeff = (share - 1.0) / tau * inv_p;
            accumulate_pair(&mut grad, z, i, p, coeff);
            inv_denom_sum += 1.0 / denom;
        }
        for (&m, &e) in negs.iter().zip(&neg_exps) {
            let coeff = e * inv_denom_sum / tau * inv_p;
            accumulate_pair(&mut grad, z, i, m, coeff);
        }
    }

    Ok(LossOutput {
        loss,
        grad,
        neg_logits: Vec::new(),
        warnings,
    })
}

/// Combined objective `L = L_CL + alpha * L_SCL`.
///
/// The returned negative logits are those of the InfoNCE component, which is
/// what tailness scoring consumes.
pub fn colt_loss(batch: &ContrastiveBatch, alpha: f64) -> Result<(LossOutput, f64, f64)> {
    if alpha < 0.0 {
        return Err(ColtError::Parameter(format!(
            "alpha must be >= 0, got {}",
            alpha
        )));
    }
    let cl = info_nce(batch)?;
    let scl = dist_scl(batch)?;
    let loss_cl = cl.loss;
    let loss_scl = scl.loss;
    let mut grad = cl.grad;
    for i in 0..grad.rows() {
        for (g, s) in grad.row_mut(i).iter_mut().zip(scl.grad.row(i)) {
            *g += alpha * s;
        }
    }
    let mut warnings = cl.warnings;
    warnings.extend(scl.warnings);
    Ok((
        LossOutput {
            loss: loss_cl + alpha * loss_scl,
            grad,
            neg_logits: cl.neg_logits,
            warnings,
        },
        loss_cl,
        loss_scl,
    ))
}
