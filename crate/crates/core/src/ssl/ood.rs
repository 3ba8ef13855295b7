use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OodMask {
    pub masked_losses: Vec<f64>,
    pub kept: Vec<bool>,
}

impl OodMask {
    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        if self.kept.is_empty() {
            1.0
        } else {
            self.kept_count() as f64 / self.kept.len() as f64
        }
    }
}

/// `floor(gamma * n)`. A 1e-9 slack absorbs products such as
/// `0.29 * 100 = 28.999999999999996`.
pub fn masked_count(gamma: f64, n: usize) -> usize {
    ((gamma * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Zeroes the losses of the `floor(gamma * N)` least confident samples of
/// this batch. Ties are broken by index, lower index masked first.
pub fn ood_mask(losses: &[f64], confidences: &[f64], gamma: f64) -> Result<OodMask> {
    if losses.len() != confidences.len() {
        return Err(Error::Shape(format!(
            "{} losses but {} confidences",
            losses.len(),
            confidences.len()
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::validation("gamma", format!("{gamma} not in [0, 1)")));
    }
    let n = losses.len();
    let m = masked_count(gamma, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]).then(a.cmp(&b)));
    let mut kept = vec![true; n];
    for &i in &order[..m] {
        kept[i] = false;
    }
    let masked_losses = losses
        .iter()
        .zip(&kept)
        .map(|(&l, &k)| if k { l } else { 0.0 })
        .collect();
    Ok(OodMask {
        masked_losses,
        kept,
    })
}
