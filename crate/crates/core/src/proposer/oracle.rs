//! Rule-map proposer standing in for the language model on synthetic data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::corpus::{find_rule, DiagnosisRule, FeatureSet, ReportText, FEATURES};
use crate::error::Result;

/// Candidate phrases for one report.
///
/// Every feature of every bundle of every diagnosis is proposed, because a
/// diagnosis does not tell which bundle the patient actually shows. With
/// probability `p_halluc` one feature outside that union is added.
pub fn propose_oracle<R: Rng>(
    report: &ReportText,
    rules: &[DiagnosisRule],
    p_halluc: f64,
    rng: &mut R,
) -> Result<Vec<String>> {
    let mut union = FeatureSet::new();
    for d in &report.diagnoses {
        union.extend(find_rule(rules, d)?.feature_union());
    }
    let mut out: Vec<String> = union.iter().map(|&id| FEATURES[id].name.to_string()).collect();
    // draw unconditionally so the stream position does not depend on the union
    let roll: f64 = rng.random();
    let outside: Vec<usize> = (0..FEATURES.len()).filter(|id| !union.contains(id)).collect();
    if roll < p_halluc && !outside.is_empty() {
        out.push(FEATURES[outside[rng.random_range(0..outside.len())]].name.to_string());
    }
    Ok(out)
}

/// Per-record generator: same seed and record id give the same proposals
/// regardless of the order records are visited in.
pub fn oracle_rng(seed: u64, record_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5052_4f50_0000_0000 | record_id as u64);
    rng
}
