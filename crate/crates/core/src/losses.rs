//! Training losses with analytic gradients, and a central-difference
//! gradient estimator to check them against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

/// Class-major grid of per-class probabilities (`classes × height × width`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    classes: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ProbMap {
    pub fn new(classes: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 || width == 0 || height == 0 {
            return Err(Error::argument("probability map dimensions must be positive"));
        }
        if data.len() != classes * width * height {
            return Err(Error::shape(format!(
                "{} values for {classes}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { classes, width, height, data })
    }

    /// One-hot encoding of a per-pixel label grid.
    pub fn one_hot(classes: usize, width: usize, height: usize, labels: &[usize]) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(format!("{} labels for {width}x{height}", labels.len())));
        }
        let mut data = vec![0.0; classes * width * height];
        let plane = width * height;
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::argument(format!("label {l} out of range for {classes} classes")));
            }
            data[l * plane + i] = 1.0;
        }
        Self::new(classes, width, height, data)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, class: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[class * n..(class + 1) * n]
    }

    /// Same shape with replaced values; values are not range-checked so
    /// finite-difference probes may step slightly outside [0, 1].
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { data, ..*self }
    }

    fn check_same_shape(&self, other: &ProbMap) -> Result<()> {
        if (self.classes, self.width, self.height) != (other.classes, other.width, other.height) {
            return Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.classes, self.height, self.width, other.classes, other.height, other.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::argument("class weights must be positive and finite"));
        }
        Ok(Self(weights))
    }

    pub fn uniform(classes: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Scalar loss value with its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Negative mean over classes of the per-class soft IoU
/// `Σ ŷy / Σ (ŷ + y - ŷy)`. A class with an empty denominator (absent from
/// both maps) scores 1 and receives zero gradient.
pub fn soft_iou_loss(pred: &ProbMap, gt: &ProbMap) -> Result<LossGrad> {
    pred.check_same_shape(gt)?;
    let c = pred.classes();
    let mut grad = vec![0.0; pred.data.len()];
    let mut total = 0.0;
    for k in 0..c {
        let (y, t) = (pred.plane(k), gt.plane(k));
        let mut inter = 0.0;
        let mut union = 0.0;
        for (&yi, &ti) in y.iter().zip(t) {
            inter += ti * yi;
            union += ti + yi - ti * yi;
        }
        if union <= 0.0 {
            total += 1.0;
            continue;
        }
        total += inter / union;
        let g = &mut grad[k * pred.pixels()..(k + 1) * pred.pixels()];
        let u2 = union * union;
        for ((gi, &ti), _) in g.iter_mut().zip(t).zip(y) {
            // d(I/U)/dy = (t U - I (1 - t)) / U^2
            *gi = -(ti * union - inter * (1.0 - ti)) / u2 / c as f64;
        }
    }
    Ok(LossGrad {
        loss: -total / c as f64,
        grad,
    })
}

/// Inverse class-frequency weight `1 / ln(1.02 + p)`.
pub fn inverse_boundary_weight(freq: f64) -> f64 {
    1.0 / (1.02 + freq).ln()
}

pub fn inverse_boundary_weights(freqs: &[f64]) -> Result<ClassWeights> {
    if let Some(p) = freqs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::argument(format!("class frequency {p} outside [0, 1]")));
    }
    ClassWeights::new(freqs.iter().map(|&p| inverse_boundary_weight(p)).collect())
}

/// Per-class pixel frequencies of a one-hot map.
pub fn class_frequencies(gt: &ProbMap) -> Vec<f64> {
    (0..gt.classes())
        .map(|k| gt.plane(k).iter().sum::<f64>() / gt.pixels() as f64)
        .collect()
}

/// Class-weighted cross-entropy averaged over pixels and divided by the
/// weight sum.
pub fn balanced_ce_loss(pred: &ProbMap, gt: &ProbMap, weights: &ClassWeights) -> Result<LossGrad> {
    pred.check_same_shape(gt)?;
    if weights.as_slice().len() != pred.classes() {
        return Err(Error::shape(format!(
            "{} weights for {} classes",
            weights.as_slice().len(),
            pred.classes()
        )));
    }
    let n = pred.pixels();
    let scale = 1.0 / (n as f64 * weights.sum());
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for (k, &w) in weights.as_slice().iter().enumerate() {
        for i in 0..n {
            let idx = k * n + i;
            let t = gt.data[idx];
            if t == 0.0 {
                continue;
            }
            let y = pred.data[idx];
            let yc = y.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= t * yc.ln() * w;
            if y > PROB_EPS && y < 1.0 - PROB_EPS {
                grad[idx] = -t * w / yc * scale;
            }
        }
    }
    Ok(LossGrad { loss: loss * scale, grad })
}

/// Unweighted cross-entropy averaged over pixels, with the same clamp.
pub fn plain_ce_loss(pred: &ProbMap, gt: &ProbMap) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let n = pred.pixels();
    let sum: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&y, &t)| -t * y.clamp(PROB_EPS, 1.0 - PROB_EPS).ln())
        .sum();
    Ok(sum / n as f64)
}

/// Sum of segmentation and connectivity losses over all supervised outputs.
pub fn total_loss(seg_losses: &[f64], conn_losses: &[f64]) -> Result<f64> {
    if seg_losses.len() != conn_losses.len() {
        return Err(Error::shape(format!(
            "{} segmentation losses vs {} connectivity losses",
            seg_losses.len(),
            conn_losses.len()
        )));
    }
    Ok(seg_losses.iter().zip(conn_losses).map(|(s, c)| s + c).sum())
}

/// Central differences `(f(x + εe_i) - f(x - εe_i)) / 2ε` for every
/// coordinate of `x`.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Gradients below this magnitude are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Largest `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)` over coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(labels: &[usize]) -> ProbMap {
        ProbMap::one_hot(2, labels.len(), 1, labels).unwrap()
    }

    #[test]
    fn soft_iou_perfect_and_inverted() {
        let gt = two_class(&[0, 1, 1, 0, 1]);
        assert_eq!(soft_iou_loss(&gt, &gt).unwrap().loss, -1.0);
        let inverted = gt.with_data(gt.data().iter().map(|v| 1.0 - v).collect());
        assert_eq!(soft_iou_loss(&inverted, &gt).unwrap().loss, 0.0);
    }

    #[test]
    fn absent_class_scores_one() {
        let gt = ProbMap::one_hot(3, 4, 1, &[0, 0, 1, 1]).unwrap();
        let l = soft_iou_loss(&gt, &gt).unwrap();
        assert_eq!(l.loss, -1.0);
        assert!(l.grad[8..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn weights_formula() {
        assert!((inverse_boundary_weight(0.0) - 50.4975).abs() < 1e-3);
        assert!((inverse_boundary_weight(1.0) - 1.4222).abs() < 1e-3);
        let w = inverse_boundary_weights(&[0.1, 0.5, 0.9]).unwrap();
        assert!(w.as_slice().windows(2).all(|p| p[0] > p[1]));
        assert!(inverse_boundary_weights(&[1.5]).is_err());
    }

    #[test]
    fn balanced_ce_perfect_prediction() {
        let gt = ProbMap::one_hot(3, 3, 1, &[0, 1, 2]).unwrap();
        let w = ClassWeights::new(vec![1.0, 2.0, 3.0]).unwrap();
        let l = balanced_ce_loss(&gt, &gt, &w).unwrap();
        let expected = -(1.0 - PROB_EPS).ln() / 6.0 * (1.0 + 2.0 + 3.0) / 3.0;
        assert!((l.loss - expected).abs() < 1e-15);
        assert!(l.loss < 1e-7);
    }

    #[test]
    fn balanced_ce_uniform_prediction_closed_form() {
        let labels = [0, 1, 1, 2, 2, 2];
        let gt = ProbMap::one_hot(3, 6, 1, &labels).unwrap();
        let pred = gt.with_data(vec![1.0 / 3.0; 18]);
        let w = ClassWeights::new(vec![5.0, 2.0, 1.0]).unwrap();
        let l = balanced_ce_loss(&pred, &gt, &w).unwrap();
        let mean_w: f64 = labels.iter().map(|&k| w.as_slice()[k]).sum::<f64>() / 6.0;
        let expected = 3f64.ln() * mean_w / w.sum();
        assert!((l.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_reduce_to_plain_ce() {
        let gt = ProbMap::one_hot(2, 3, 1, &[0, 1, 1]).unwrap();
        let pred = gt.with_data(vec![0.7, 0.4, 0.1, 0.3, 0.6, 0.9]);
        let w = ClassWeights::uniform(2, 3.0).unwrap();
        let l = balanced_ce_loss(&pred, &gt, &w).unwrap().loss;
        let plain = plain_ce_loss(&pred, &gt).unwrap();
        assert!((l - plain / 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let a = two_class(&[0, 1]);
        let b = two_class(&[0, 1, 1]);
        assert!(soft_iou_loss(&a, &b).is_err());
        let w = ClassWeights::uniform(3, 1.0).unwrap();
        assert!(balanced_ce_loss(&a, &a, &w).is_err());
        assert!(ProbMap::new(1, 2, 1, vec![0.5]).is_err());
        assert!(ProbMap::new(1, 1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn total_loss_sums() {
        assert_eq!(total_loss(&[-1.0], &[0.0]).unwrap(), -1.0);
        assert_eq!(total_loss(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 10.0);
        assert_eq!(
            total_loss(&[2.0, 1.0], &[4.0, 3.0]).unwrap(),
            total_loss(&[1.0, 2.0], &[3.0, 4.0]).unwrap()
        );
        assert!(total_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn finite_differences_on_simple_functions() {
        let x = [0.3, -1.2, 2.5];
        let g = finite_diff_gradient(|v| v.iter().sum(), &x, 1e-4);
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        let g = finite_diff_gradient(|v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(), &x, 1e-4);
        for (gi, xi) in g.iter().zip(x) {
            assert!((gi - xi).abs() < 1e-8);
        }
    }

    #[test]
    fn soft_iou_gradient_matches_differences() {
        let gt = ProbMap::one_hot(2, 4, 1, &[0, 1, 1, 0]).unwrap();
        let pred = gt.with_data(vec![0.8, 0.3, 0.2, 0.6, 0.2, 0.7, 0.8, 0.4]);
        let analytic = soft_iou_loss(&pred, &gt).unwrap().grad;
        let numeric = finite_diff_gradient(|d| soft_iou_loss(&pred.with_data(d.to_vec()), &gt).unwrap().loss, pred.data(), 1e-4);
        assert!(max_relative_error(&analytic, &numeric) < 1e-6);
    }
}
