//! Ranking and agreement metrics for rubric validation.

use super::RubricError;

/// Mann-Whitney AUC: the probability that a random positive-labeled
/// score exceeds a random negative-labeled one, ties counted 0.5.
/// Computed from midranks, so it stays `O(n log n)`.
pub fn compute_auc(scores: &[f64], labels: &[bool]) -> Result<f64, RubricError> {
    if scores.len() != labels.len() {
        return Err(RubricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RubricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // midranks over tie groups, 1-based
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(l, _)| **l)
        .map(|(_, r)| *r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Cohen's kappa with its degenerate-agreement flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    /// Both raters constant and equal: kappa is 1.0 by convention.
    pub degenerate_agreement: bool,
}

/// Cohen's kappa between two binary raters with marginal-product
/// expected agreement.
pub fn compute_kappa(judge: &[bool], human: &[bool]) -> Result<Kappa, RubricError> {
    if judge.len() != human.len() {
        return Err(RubricError::LengthMismatch {
            left: judge.len(),
            right: human.len(),
        });
    }
    let n = judge.len();
    if n < 2 {
        return Err(RubricError::TooFewLabels(n));
    }
    let nf = n as f64;
    let p_o = judge.iter().zip(human).filter(|(a, b)| a == b).count() as f64 / nf;
    let p1 = judge.iter().filter(|x| **x).count() as f64 / nf;
    let q1 = human.iter().filter(|x| **x).count() as f64 / nf;
    let p_e = p1 * q1 + (1.0 - p1) * (1.0 - q1);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(Kappa {
            value: 1.0,
            degenerate_agreement: true,
        });
    }
    Ok(Kappa {
        value: (p_o - p_e) / (1.0 - p_e),
        degenerate_agreement: false,
    })
}
