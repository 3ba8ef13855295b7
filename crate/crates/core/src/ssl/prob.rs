use crate::error::{Error, Result};

/// Allowed deviation of a distribution's sum from 1.
pub const PROB_TOLERANCE: f64 = 1e-6;

fn check_row(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(bad) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "entry {bad} is negative or not finite"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Index of the largest entry (first one on ties).
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A class-probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_row(&values)?;
        Ok(ProbVector(values))
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Self {
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        ProbVector(v)
    }

    pub fn uniform(num_classes: usize) -> Self {
        ProbVector(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// A batch of distributions stored row-major, `num_classes` per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Probs {
    num_classes: usize,
    data: Vec<f64>,
}

impl Probs {
    /// Validates every row.
    pub fn new(num_classes: usize, data: Vec<f64>) -> Result<Self> {
        let probs = Probs::new_unchecked(num_classes, data)?;
        for row in probs.rows() {
            check_row(row)?;
        }
        Ok(probs)
    }

    /// Checks only the layout; rows are trusted to be distributions.
    pub fn new_unchecked(num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || !data.len().is_multiple_of(num_classes) {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {num_classes}",
                data.len()
            )));
        }
        Ok(Probs { num_classes, data })
    }

    pub fn from_rows(rows: &[ProbVector]) -> Result<Self> {
        let k = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in rows {
            if r.len() != k {
                return Err(Error::Shape("rows of differing length".into()));
            }
            data.extend_from_slice(r.values());
        }
        Probs::new_unchecked(k, data)
    }

    pub fn one_hot(num_classes: usize, labels: &[usize]) -> Self {
        let mut data = vec![0.0; labels.len() * num_classes];
        for (i, &l) in labels.iter().enumerate() {
            data[i * num_classes + l] = 1.0;
        }
        Probs { num_classes, data }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.num_classes)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn to_vectors(&self) -> Vec<ProbVector> {
        self.rows().map(|r| ProbVector(r.to_vec())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.rows().try_for_each(check_row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(Probs::new(2, vec![0.5, 0.5, 1.0]).is_err());
        assert!(Probs::new(2, vec![0.5, 0.5, 1.0, 0.1]).is_err());
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(ProbVector::new(vec![0.4, 0.4, 0.2]).unwrap().argmax(), 0);
        assert_eq!(ProbVector::one_hot(3, 2).argmax(), 2);
        let p = Probs::one_hot(3, &[1, 0]);
        assert_eq!(p.argmax(0), 1);
        assert_eq!(p.len(), 2);
    }
}
