//! External predictors for the first-round placeholder count.

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::MAX_INSERT;

/// Mean per-pair ratio of target to source length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    pub ratio: f64,
}

/// Least-squares fit `target_len ~ coef * source_len + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    pub coef: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn length_pairs(corpus: &ParallelCorpus) -> Result<Vec<(f64, f64)>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus
        .source
        .iter()
        .zip(corpus.training_targets())
        .map(|(s, t)| (s.len() as f64, t.len() as f64))
        .collect())
}

/// Unweighted mean of `target_len / source_len` over the training pairs.
pub fn fit_ratio(corpus: &ParallelCorpus) -> Result<RatioModel> {
    let pairs = length_pairs(corpus)?;
    if let Some(i) = pairs.iter().position(|&(x, _)| x == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pair {i} has an empty source"
        )));
    }
    let ratio = pairs.iter().map(|&(x, y)| y / x).sum::<f64>() / pairs.len() as f64;
    Ok(RatioModel { ratio })
}

/// Ordinary least squares on `(x, y)` points.
pub fn fit_points(points: &[(f64, f64)]) -> Result<LinRegModel> {
    if points.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign(points.len()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let coef = sxy / sxx;
    let intercept = my - coef * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - coef * p.0 - intercept).powi(2))
        .sum();
    // constant targets are fit exactly by a flat line
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinRegModel {
        coef,
        intercept,
        r_squared,
    })
}

/// Regresses target length on source length over the training pairs.
pub fn fit_linreg(corpus: &ParallelCorpus) -> Result<LinRegModel> {
    fit_points(&length_pairs(corpus)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthModel {
    SrcLen,
    Ratio(RatioModel),
    LinReg(LinRegModel),
    /// The reference length.
    Oracle,
}

/// Rounds half away from zero and clamps to `[1, 255]`.
pub fn round_length(x: f64) -> usize {
    if x.is_nan() {
        return 1;
    }
    x.round().clamp(1.0, MAX_INSERT as f64) as usize
}

pub fn predict_length(
    model: &LengthModel,
    source_len: usize,
    reference_len: Option<usize>,
) -> Result<usize> {
    let x = source_len as f64;
    let raw = match model {
        LengthModel::SrcLen => x,
        LengthModel::Ratio(m) => x * m.ratio,
        LengthModel::LinReg(m) => m.coef * x + m.intercept,
        LengthModel::Oracle => reference_len
            .ok_or_else(|| Error::InvalidArgument("oracle length needs a reference".into()))?
            as f64,
    };
    Ok(round_length(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use proptest::prelude::*;

    fn corpus(lengths: &[(usize, usize)]) -> ParallelCorpus {
        let s = |n: usize| Sentence::new(vec![4; n], vec![false; n]).unwrap();
        ParallelCorpus::new(
            lengths.iter().map(|&(a, _)| s(a)).collect(),
            lengths.iter().map(|&(_, b)| s(b)).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(fit_ratio(&corpus(&[(3, 3), (7, 7)])).unwrap().ratio, 1.0);
        let r = fit_ratio(&corpus(&[(10, 11), (10, 12)])).unwrap().ratio;
        assert!((r - 1.15).abs() < 1e-12);
        // per-pair mean, not ratio of sums
        let r = fit_ratio(&corpus(&[(1, 2), (9, 9)])).unwrap().ratio;
        assert!((r - 1.5).abs() < 1e-12);
        assert!(fit_ratio(&corpus(&[(0, 2)])).is_err());
        assert!(matches!(fit_ratio(&corpus(&[])), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn linreg_exact_line() {
        let m = fit_linreg(&corpus(&[(1, 3), (2, 5), (4, 9), (7, 15)])).unwrap();
        assert!((m.coef - 2.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
        assert!((m.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linreg_degenerate() {
        assert!(matches!(
            fit_linreg(&corpus(&[(5, 3), (5, 9)])),
            Err(Error::DegenerateDesign(2))
        ));
    }

    #[test]
    fn predictions() {
        assert_eq!(predict_length(&LengthModel::SrcLen, 17, None).unwrap(), 17);
        let ratio = LengthModel::Ratio(RatioModel { ratio: 1.06 });
        assert_eq!(predict_length(&ratio, 100, None).unwrap(), 106);
        assert_eq!(
            predict_length(&LengthModel::Oracle, 3, Some(19)).unwrap(),
            19
        );
        assert!(predict_length(&LengthModel::Oracle, 3, None).is_err());
        assert_eq!(predict_length(&LengthModel::SrcLen, 0, None).unwrap(), 1);
        assert_eq!(
            predict_length(&LengthModel::SrcLen, 900, None).unwrap(),
            255
        );
        let half = LengthModel::LinReg(LinRegModel {
            coef: 0.5,
            intercept: 0.0,
            r_squared: 1.0,
        });
        assert_eq!(predict_length(&half, 5, None).unwrap(), 3);
    }

    proptest! {
        #[test]
        fn prediction_in_range(coef in -10.0f64..10.0, b in -500.0f64..500.0, x in 0usize..400) {
            let m = LengthModel::LinReg(LinRegModel { coef, intercept: b, r_squared: 0.0 });
            let n = predict_length(&m, x, None).unwrap();
            prop_assert!((1..=255).contains(&n));
        }

        #[test]
        fn r_squared_at_most_one(ys in proptest::collection::vec(0.0f64..50.0, 3..20)) {
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            prop_assert!(fit_points(&pts).unwrap().r_squared <= 1.0 + 1e-12);
        }
    }
}
