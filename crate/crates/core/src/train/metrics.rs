use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of the row maximum; ties resolve to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `mask` rows whose argmax equals the label.
pub fn accuracy(scores: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::invalid("accuracy over an empty mask"));
    }
    if labels.len() != scores.rows() {
        return Err(Error::dim(
            "accuracy",
            format!("{} labels for {} rows", labels.len(), scores.rows()),
        ));
    }
    let pred = argmax_rows(scores);
    let mut hits = 0;
    for &i in mask {
        let p = *pred.get(i).ok_or(Error::OutOfBounds {
            op: "accuracy",
            index: i,
            size: scores.rows(),
        })?;
        hits += usize::from(p == labels[i]);
    }
    Ok(hits as f64 / mask.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counts() {
        let s = Tensor::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]]);
        assert_eq!(accuracy(&s, &[0, 1, 0, 1], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&s, &[1, 0, 1, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&s, &[0, 1, 1, 0], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert_eq!(accuracy(&s, &[1, 1, 1, 1], &[1, 3]).unwrap(), 1.0);
    }

    #[test]
    fn ties_go_to_the_lowest_class() {
        let s = Tensor::from_rows(&[[0.5, 0.5, 0.5], [0.1, 0.7, 0.7]]);
        assert_eq!(argmax_rows(&s), vec![0, 1]);
    }

    #[test]
    fn empty_mask_and_bad_index_are_errors() {
        let s = Tensor::zeros(2, 2);
        assert!(accuracy(&s, &[0, 0], &[]).is_err());
        assert!(accuracy(&s, &[0, 0], &[5]).is_err());
        assert!(accuracy(&s, &[0], &[0]).is_err());
    }
}
