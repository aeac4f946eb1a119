//! Shared fixtures and brute-force reference implementations for the
//! integration tests. The references loop over individual examples and use
//! `Ratio<i128>`, independently of the library's confusion-matrix code.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stance_audit::calibration::{loss_and_gradient, Row, Weights, FEATURE_DIM};
use stance_audit::corpus::{Example, Provenance};
use stance_audit::labels::{SentimentLabel, StanceLabel};
use stance_audit::predictor::PredictionRecord;

pub type Q = Ratio<i128>;

pub fn big(r: Q) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn example(id: &str, target: &str, stance: StanceLabel, sentiment: SentimentLabel) -> Example {
    Example {
        id: id.to_string(),
        text: format!("text {id}"),
        target_id: target.to_string(),
        stance,
        sentiment,
        rationale: None,
        bias_markers: None,
        provenance: Provenance::Original,
        source_id: None,
        stance_unverified: false,
    }
}

/// A small labelled instance; `pred[i] == None` is a failed prediction.
#[derive(Debug, Clone)]
pub struct Instance {
    pub gold: Vec<StanceLabel>,
    pub sentiment: Vec<SentimentLabel>,
    pub pred: Vec<Option<StanceLabel>>,
}

impl Instance {
    pub fn from_indices(rows: &[(usize, usize, usize)]) -> Self {
        let mut inst = Instance {
            gold: Vec::new(),
            sentiment: Vec::new(),
            pred: Vec::new(),
        };
        for &(g, s, p) in rows {
            inst.gold.push(StanceLabel::ALL[g]);
            inst.sentiment.push(SentimentLabel::ALL[s]);
            inst.pred.push(StanceLabel::ALL.get(p).copied());
        }
        inst
    }

    /// `n` rows drawn uniformly; about one prediction in eight fails.
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let rows: Vec<(usize, usize, usize)> = (0..n)
            .map(|_| {
                let g = (rng.next_u32() % 3) as usize;
                let s = (rng.next_u32() % 3) as usize;
                let p = if rng.next_u32() % 8 == 0 { 3 } else { (rng.next_u32() % 3) as usize };
                (g, s, p)
            })
            .collect();
        Self::from_indices(&rows)
    }

    pub fn examples(&self) -> Vec<Example> {
        (0..self.gold.len())
            .map(|i| example(&format!("e{i}"), "x", self.gold[i], self.sentiment[i]))
            .collect()
    }

    pub fn records(&self) -> Vec<PredictionRecord> {
        self.pred
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                Some(l) => PredictionRecord::hard(format!("e{i}"), *l, "oracle", ""),
                None => PredictionRecord::failed(format!("e{i}"), "failed", "oracle", ""),
            })
            .collect()
    }

    fn scored(&self) -> impl Iterator<Item = (StanceLabel, SentimentLabel, StanceLabel)> + '_ {
        (0..self.gold.len()).filter_map(|i| self.pred[i].map(|p| (self.gold[i], self.sentiment[i], p)))
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Population variance of per-class recall; `None` if a class has no scored
/// gold example.
pub fn recall_variance(inst: &Instance) -> Option<Q> {
    let mut recalls = Vec::new();
    for class in StanceLabel::ALL {
        let mut total = 0i128;
        let mut hit = 0i128;
        for (g, _, p) in inst.scored() {
            if g == class {
                total += 1;
                if p == class {
                    hit += 1;
                }
            }
        }
        if total == 0 {
            return None;
        }
        recalls.push(Q::new(hit, total));
    }
    let n = Q::from_integer(recalls.len() as i128);
    let mean = recalls.iter().copied().sum::<Q>() / n;
    Some(recalls.iter().map(|r| (*r - mean) * (*r - mean)).sum::<Q>() / n)
}

/// Mean of per-class `2PR / (P + R)`. A class absent from gold and
/// predictions is undefined: `None`, or left out when `skip` is set.
pub fn macro_f1(inst: &Instance, skip: bool) -> Option<Q> {
    let mut f1s = Vec::new();
    for class in StanceLabel::ALL {
        let (mut tp, mut fp, mut fn_) = (0i128, 0i128, 0i128);
        for (g, _, p) in inst.scored() {
            match (g == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp + fp + fn_ == 0 {
            if skip {
                continue;
            }
            return None;
        }
        if tp == 0 {
            f1s.push(Q::from_integer(0));
            continue;
        }
        let precision = Q::new(tp, tp + fp);
        let recall = Q::new(tp, tp + fn_);
        f1s.push(Q::from_integer(2) * precision * recall / (precision + recall));
    }
    if f1s.is_empty() {
        return None;
    }
    let n = Q::from_integer(f1s.len() as i128);
    Some(f1s.into_iter().sum::<Q>() / n)
}

pub fn bias_ssc(inst: &Instance, exclude_neutral: bool) -> Option<Q> {
    let mut n = 0i128;
    let mut hits = 0i128;
    for (_, s, p) in inst.scored() {
        if exclude_neutral && s == SentimentLabel::Neutral {
            continue;
        }
        n += 1;
        let aligned = matches!(
            (s, p),
            (SentimentLabel::Positive, StanceLabel::Support) | (SentimentLabel::Negative, StanceLabel::Against)
        );
        if aligned {
            hits += 1;
        }
    }
    (n > 0).then(|| Q::new(hits, n))
}

/// Fleiss' kappa by counting agreeing ordered annotator pairs per item.
pub fn fleiss_kappa(items: &[Vec<StanceLabel>]) -> Option<Q> {
    let n_items = items.len() as i128;
    let raters = items.first()?.len() as i128;
    if raters < 2 {
        return None;
    }
    let mut p_bar = Q::from_integer(0);
    for labels in items {
        let mut agree = 0i128;
        for (a, x) in labels.iter().enumerate() {
            for (b, y) in labels.iter().enumerate() {
                if a != b && x == y {
                    agree += 1;
                }
            }
        }
        p_bar += Q::new(agree, raters * (raters - 1));
    }
    p_bar /= Q::from_integer(n_items);
    let mut p_e = Q::from_integer(0);
    for class in StanceLabel::ALL {
        let c = items.iter().flatten().filter(|l| **l == class).count() as i128;
        let p = Q::new(c, n_items * raters);
        p_e += p * p;
    }
    if p_e == Q::from_integer(1) {
        return None;
    }
    Some((p_bar - p_e) / (Q::from_integer(1) - p_e))
}

pub fn random_annotations(rng: &mut ChaCha8Rng, items: usize, raters: usize) -> Vec<Vec<StanceLabel>> {
    (0..items)
        .map(|_| (0..raters).map(|_| StanceLabel::ALL[(rng.next_u32() % 3) as usize]).collect())
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Largest relative error between the analytic gradient and a central
/// difference, over every weight.
pub fn max_relative_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let n = 4 + (rng.next_u32() % 12) as usize;
    let batch: Vec<Row> = (0..n)
        .map(|_| {
            let mut f: Vec<f64> = (0..FEATURE_DIM).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            f[FEATURE_DIM - 1] = 1.0;
            (f, StanceLabel::ALL[(rng.next_u32() % 3) as usize])
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..FEATURE_DIM).map(|_| uniform(&mut rng, -1.5, 1.5)).collect())
        .collect();
    let w = Weights::from_rows(&rows);
    let l2 = uniform(&mut rng, 0.0, 0.1);
    let (_, grad) = loss_and_gradient(&w, &batch, l2).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.data.len() {
        let mut plus = w.clone();
        plus.data[i] += h;
        let mut minus = w.clone();
        minus.data[i] -= h;
        let numeric = (loss_and_gradient(&plus, &batch, l2).unwrap().0 - loss_and_gradient(&minus, &batch, l2).unwrap().0) / (2.0 * h);
        let analytic = grad.data[i];
        let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}
