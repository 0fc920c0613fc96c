//! Streaming classification: one prediction per completed bin, one
//! trace-level decision every 5 seconds by majority vote over the growing
//! prefix of bin predictions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::pkt::{BinFeatures, BIN_FEATURE_NAMES};
use crate::gbt::GbtModel;

/// Group size growth: the n-th vote takes the first `5n` bin outputs and is
/// stamped `t = (n+1)*5` seconds.
pub const VOTE_GROUP_STEP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub t_s: u32,
    pub label: u8,
    pub votes_for_1: u32,
    pub votes_total: u32,
}

/// Per-session stream state. One value per video session; sessions are
/// independent.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    bin_predictions: Vec<u8>,
    decisions: Vec<Decision>,
    last_label: Option<u8>,
}

impl StreamState {
    pub fn new() -> StreamState {
        StreamState::default()
    }

    pub fn bin_predictions(&self) -> &[u8] {
        &self.bin_predictions
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn last_label(&self) -> Option<u8> {
        self.last_label
    }

    /// Feeds one already-classified bin prediction; returns the new decision
    /// when this prediction completes a vote group.
    pub fn push_prediction(&mut self, prediction: u8) -> Option<Decision> {
        self.bin_predictions.push(prediction);
        let count = self.bin_predictions.len();
        if !count.is_multiple_of(VOTE_GROUP_STEP) {
            return None;
        }
        let n = count / VOTE_GROUP_STEP;
        let votes_for_1 = self.bin_predictions.iter().filter(|&&b| b == 1).count() as u32;
        let label = mode_vote_counts(votes_for_1, count as u32, self.last_label);
        let decision = Decision {
            t_s: ((n + 1) * 5) as u32,
            label,
            votes_for_1,
            votes_total: count as u32,
        };
        self.decisions.push(decision);
        self.last_label = Some(label);
        Some(decision)
    }
}

fn mode_vote_counts(ones: u32, total: u32, prev: Option<u8>) -> u8 {
    let zeros = total - ones;
    if ones > zeros {
        1
    } else if zeros > ones {
        0
    } else {
        prev.unwrap_or(0)
    }
}

/// Majority value of `bits`; an exact tie resolves to the previous decision
/// when there is one, else to 0 (normal).
pub fn mode_vote(bits: &[u8], prev: Option<u8>) -> Result<u8> {
    if bits.is_empty() {
        return Err(Error::EmptyInput("mode_vote needs at least one bit"));
    }
    let ones = bits.iter().filter(|&&b| b == 1).count() as u32;
    Ok(mode_vote_counts(ones, bits.len() as u32, prev))
}

fn check_bin_model(model: &GbtModel) -> Result<()> {
    if model.feature_names != BIN_FEATURE_NAMES {
        return Err(Error::SchemaMismatch(
            "stream model must be trained on the bin feature schema".to_string(),
        ));
    }
    Ok(())
}

/// Classifies one completed bin and advances the vote schedule. Bins must
/// arrive in window order, one per second of stream time.
pub fn push_bin(
    state: &mut StreamState,
    model: &GbtModel,
    bin: &BinFeatures,
) -> Result<Option<Decision>> {
    check_bin_model(model)?;
    let expected = state.bin_predictions.len() as u32;
    if bin.window_start_s != expected {
        return Err(Error::OutOfOrderBin {
            expected,
            got: bin.window_start_s,
        });
    }
    let prediction = model.predict_label_values(&bin.values())?;
    Ok(state.push_prediction(prediction))
}

/// Replays a bin sequence through [`push_bin`] until stream time reaches
/// `stop_s`, returning every decision (one per 5 s from t = 10 s).
pub fn classify_stream(
    model: &GbtModel,
    bins: &[BinFeatures],
    stop_s: u32,
) -> Result<Vec<Decision>> {
    if stop_s < 10 {
        return Err(Error::InvalidArgument("stop_s must be >= 10".to_string()));
    }
    check_bin_model(model)?;
    let max_votes = (stop_s / 5 - 1) as usize;
    let needed_bins = max_votes * VOTE_GROUP_STEP;
    let mut state = StreamState::new();
    for bin in bins.iter().take(needed_bins) {
        push_bin(&mut state, model, bin)?;
    }
    Ok(state.decisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::testutil::vector;
    use crate::features::pkt::BinFeatures;
    use crate::features::LabeledDataset;
    use crate::gbt::{train, GbtHyperparams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Model over the bin schema that predicts 1 iff dl_pkt_size_total is
    /// above `cut` bytes.
    fn threshold_bin_model(cut: f64) -> GbtModel {
        let names = BinFeatures::feature_names();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let vectors = (0..80)
            .map(|i| {
                let total: f64 = if i % 2 == 0 {
                    rng.gen_range(0.0..cut * 0.9)
                } else {
                    rng.gen_range(cut * 1.1..cut * 3.0)
                };
                let mut values = vec![0.0; 9];
                values[2] = total;
                vector(&names, values, &format!("b{i}"), u8::from(i % 2 == 1))
            })
            .collect();
        let data = LabeledDataset::new(vectors).unwrap();
        train(&data, &GbtHyperparams::default()).unwrap()
    }

    fn bin_with_total(window_start_s: u32, total: u64) -> BinFeatures {
        BinFeatures {
            window_start_s,
            dl_pkt_size_total: total,
            ..Default::default()
        }
    }

    #[test]
    fn unanimous_first_group_decides_at_10s() {
        let model = threshold_bin_model(1000.0);
        let mut state = StreamState::new();
        for i in 0..5 {
            let d = push_bin(&mut state, &model, &bin_with_total(i, 50_000)).unwrap();
            if i < 4 {
                assert!(d.is_none());
            } else {
                assert_eq!(
                    d,
                    Some(Decision {
                        t_s: 10,
                        label: 1,
                        votes_for_1: 5,
                        votes_total: 5
                    })
                );
            }
        }
    }

    #[test]
    fn second_decision_counts_first_ten_bins() {
        // Predictions [1,1,0,1,0,0,0,1,1,1]: decision at t=15s is 1 (6/10).
        let model = threshold_bin_model(1000.0);
        let preds = [1u8, 1, 0, 1, 0, 0, 0, 1, 1, 1];
        let mut state = StreamState::new();
        let mut decisions = Vec::new();
        for (i, p) in preds.iter().enumerate() {
            let total = if *p == 1 { 50_000 } else { 0 };
            if let Some(d) = push_bin(&mut state, &model, &bin_with_total(i as u32, total)).unwrap()
            {
                decisions.push(d);
            }
        }
        assert_eq!(decisions.len(), 2);
        assert_eq!(
            decisions[1],
            Decision {
                t_s: 15,
                label: 1,
                votes_for_1: 6,
                votes_total: 10
            }
        );
    }

    #[test]
    fn below_first_group_no_decision() {
        let model = threshold_bin_model(1000.0);
        let mut state = StreamState::new();
        for i in 0..4 {
            assert!(push_bin(&mut state, &model, &bin_with_total(i, 0))
                .unwrap()
                .is_none());
        }
        assert!(state.decisions().is_empty());
    }

    #[test]
    fn out_of_order_bin_is_rejected() {
        let model = threshold_bin_model(1000.0);
        let mut state = StreamState::new();
        push_bin(&mut state, &model, &bin_with_total(0, 0)).unwrap();
        let err = push_bin(&mut state, &model, &bin_with_total(2, 0)).unwrap_err();
        assert!(matches!(
            err,
            Error::OutOfOrderBin {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn mode_vote_rules() {
        assert_eq!(mode_vote(&[1, 1, 0, 1, 0], None).unwrap(), 1);
        assert_eq!(mode_vote(&[1, 0], Some(1)).unwrap(), 1);
        assert_eq!(mode_vote(&[1, 0], None).unwrap(), 0);
        assert!(matches!(
            mode_vote(&[], None),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn mode_vote_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let len = rng.gen_range(0..5) * 2 + 1; // odd lengths
            let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2) as u8).collect();
            let ones = bits.iter().filter(|&&b| b == 1).count();
            let expected = u8::from(ones * 2 > bits.len());
            assert_eq!(mode_vote(&bits, None).unwrap(), expected);
        }
    }

    #[test]
    fn stream_of_120s_yields_23_decisions() {
        let model = threshold_bin_model(1000.0);
        let bins: Vec<BinFeatures> = (0..116).map(|i| bin_with_total(i, 50_000)).collect();
        let decisions = classify_stream(&model, &bins, 120).unwrap();
        assert_eq!(decisions.len(), 23);
        let times: Vec<u32> = decisions.iter().map(|d| d.t_s).collect();
        assert_eq!(times, (2..=24).map(|n| n * 5).collect::<Vec<u32>>());
    }

    #[test]
    fn constant_stream_gives_constant_decisions() {
        let model = threshold_bin_model(1000.0);
        let zero_label = model
            .predict_label_values(&BinFeatures::default().values())
            .unwrap();
        let bins: Vec<BinFeatures> = (0..60).map(|i| bin_with_total(i, 0)).collect();
        let decisions = classify_stream(&model, &bins, 60).unwrap();
        assert_eq!(decisions.len(), 11);
        assert!(decisions.iter().all(|d| d.label == zero_label));
    }

    #[test]
    fn decisions_are_prefix_stable() {
        let model = threshold_bin_model(1000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bins: Vec<BinFeatures> = (0..115)
            .map(|i| bin_with_total(i, if rng.gen_bool(0.6) { 50_000 } else { 0 }))
            .collect();
        let full = classify_stream(&model, &bins, 120).unwrap();
        let early = classify_stream(&model, &bins, 60).unwrap();
        assert_eq!(&full[..early.len()], early.as_slice());
    }

    #[test]
    fn majority_amplification_monte_carlo() {
        // With i.i.d. per-bin accuracy p > 0.5, the voted decision accuracy
        // matches the binomial-majority closed form and grows with the
        // group count.
        let p = 0.7;
        let runs = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut hits = [0u32; 5];
        for _ in 0..runs {
            let mut state = StreamState::new();
            let truth = 1u8;
            for _ in 0..25 {
                let pred = if rng.gen_bool(p) { truth } else { 1 - truth };
                state.push_prediction(pred);
            }
            for (n, d) in state.decisions().iter().enumerate() {
                if d.label == truth {
                    hits[n] += 1;
                }
            }
        }
        let closed_form = |k: u32| -> f64 {
            // Majority of k Bernoulli(p) votes; an exact tie is resolved by
            // the previous (odd-sized) group, correct with probability 1/2.
            let mut acc = 0.0;
            let ln_fact = |m: u32| -> f64 { (1..=m).map(|x| (x as f64).ln()).sum() };
            for j in (k / 2 + 1)..=k {
                let ln_c = ln_fact(k) - ln_fact(j) - ln_fact(k - j);
                acc += (ln_c + f64::from(j) * p.ln() + f64::from(k - j) * (1.0 - p).ln()).exp();
            }
            if k.is_multiple_of(2) {
                let j = k / 2;
                let ln_c = ln_fact(k) - ln_fact(j) - ln_fact(j);
                acc += 0.5
                    * (ln_c + f64::from(j) * p.ln() + f64::from(j) * (1.0 - p).ln()).exp();
            }
            acc
        };
        let mut last = 0.0;
        for n in 1..=5u32 {
            let sim = f64::from(hits[(n - 1) as usize]) / runs as f64;
            let expect = closed_form(5 * n);
            assert!(
                (sim - expect).abs() <= 0.02,
                "n={n}: simulated {sim}, closed form {expect}"
            );
            assert!(sim >= p - 0.02, "n={n}: {sim} below per-bin accuracy");
            assert!(sim >= last - 0.02, "n={n}: accuracy decreased");
            last = sim;
        }
    }
}
