//! Checkpoint selection under the second embedder: signed Wasserstein
//! distance between spoof and bona fide score distributions, minimised in
//! cosine-distance space.

use rayon::prelude::*;

use crate::embedder::{average_enrolment, cosine_similarity, Embedder};
use crate::error::{Error, Result};
use crate::signal::{malacopula_apply, MalacopulaFilter, Signal};
use crate::trainer::FilterCheckpoint;

/// What a score distribution was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreLabel {
    TargetBonaFide,
    SpoofFiltered,
    SpoofBaseline,
}

/// A labelled set of cosine-similarity scores against one enrolment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    label: ScoreLabel,
    scores: Vec<f64>,
}

impl ScoreDistribution {
    pub fn new(label: ScoreLabel, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("score distribution must be non-empty"));
        }
        if scores.iter().any(|s| !s.is_finite() || !(-1.0..=1.0).contains(s)) {
            return Err(Error::invalid("scores must be finite and within [-1, 1]"));
        }
        Ok(ScoreDistribution { label, scores })
    }

    pub fn label(&self) -> ScoreLabel {
        self.label
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn median(&self) -> f64 {
        median_of(&self.scores)
    }
}

/// Median with the even-size convention: mean of the two central order
/// statistics.
fn median_of(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Scores each utterance against the enrolment embedding under the given
/// embedder, applying the filter first when one is supplied.
pub fn score_distribution(
    label: ScoreLabel,
    utts: &[Signal],
    enrol: &[f64],
    embedder: &Embedder,
    filter: Option<&MalacopulaFilter>,
) -> Result<ScoreDistribution> {
    if utts.is_empty() {
        return Err(Error::invalid("cannot score an empty utterance list"));
    }
    let scores = utts
        .iter()
        .map(|utt| {
            let embedding = match filter {
                Some(f) => embedder.extract(&malacopula_apply(utt, f)?)?,
                None => embedder.extract(utt)?,
            };
            Ok(cosine_similarity(&embedding, enrol)?.clamp(-1.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreDistribution::new(label, scores)
}

/// First Wasserstein distance between two empirical distributions. Equal
/// sample counts reduce to the mean absolute difference of sorted values;
/// otherwise the distance is the integral of |F_a − F_b| over the merged
/// support, which the equal-count formula is a special case of.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("wasserstein distance of an empty sample"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("wasserstein samples must be finite"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);

    if sa.len() == sb.len() {
        let n = sa.len() as f64;
        return Ok(sa
            .iter()
            .zip(sb.iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n);
    }

    let na = sa.len() as f64;
    let nb = sb.len() as f64;
    let mut i = 0;
    let mut j = 0;
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!("loop guard keeps one side non-empty"),
        };
        if let Some(p) = prev {
            if x > p {
                let fa = i as f64 / na;
                let fb = j as f64 / nb;
                total += (fa - fb).abs() * (x - p);
            }
        }
        while i < sa.len() && sa[i] == x {
            i += 1;
        }
        while j < sb.len() && sb[j] == x {
            j += 1;
        }
        prev = Some(x);
    }
    Ok(total)
}

/// Signed Wasserstein distance between similarity-score distributions:
/// positive when the spoof median exceeds the target median (the attack
/// scores higher than bona fide trials), negative otherwise, ties counting
/// as negative.
pub fn signed_wasserstein(spoof: &ScoreDistribution, target: &ScoreDistribution) -> Result<f64> {
    let w = wasserstein_1d(spoof.scores(), target.scores())?;
    let sign = if spoof.median() > target.median() {
        1.0
    } else {
        -1.0
    };
    Ok(sign * w)
}

/// Per-checkpoint selection record, in cosine-distance space (d = 1 − CS):
/// positive signed distance means the spoofed distances sit above the bona
/// fide ones (a weaker attack).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionDiagnostic {
    pub epoch: usize,
    pub signed_wasserstein: f64,
    pub spoof_median: f64,
    pub target_median: f64,
}

/// Picks the checkpoint with the minimum signed Wasserstein distance in
/// cosine-distance space, breaking value ties toward the earliest epoch.
/// Returns the winning checkpoint and one diagnostic per input checkpoint,
/// in input order.
pub fn select_best(
    checkpoints: &[FilterCheckpoint],
    spoof_utts: &[Signal],
    target_utts: &[Signal],
    enrol_utts: &[Signal],
    embedder: &Embedder,
) -> Result<(FilterCheckpoint, Vec<SelectionDiagnostic>)> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("selection needs at least one checkpoint"));
    }
    let enrol_embeddings = enrol_utts
        .iter()
        .map(|u| embedder.extract(u))
        .collect::<Result<Vec<_>>>()?;
    let enrol = average_enrolment(&enrol_embeddings)?;

    let target = score_distribution(ScoreLabel::TargetBonaFide, target_utts, &enrol, embedder, None)?;
    let target_distances: Vec<f64> = target.scores().iter().map(|s| 1.0 - s).collect();
    let target_median = median_of(&target_distances);

    let diagnostics: Vec<SelectionDiagnostic> = checkpoints
        .par_iter()
        .map(|cp| {
            let spoof = score_distribution(
                ScoreLabel::SpoofFiltered,
                spoof_utts,
                &enrol,
                embedder,
                Some(&cp.filter),
            )?;
            let spoof_distances: Vec<f64> = spoof.scores().iter().map(|s| 1.0 - s).collect();
            let spoof_median = median_of(&spoof_distances);
            let w = wasserstein_1d(&spoof_distances, &target_distances)?;
            let sign = if spoof_median > target_median { 1.0 } else { -1.0 };
            Ok(SelectionDiagnostic {
                epoch: cp.epoch,
                signed_wasserstein: sign * w,
                spoof_median,
                target_median,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (idx, d) in diagnostics.iter().enumerate().skip(1) {
        let b = &diagnostics[best];
        if d.signed_wasserstein < b.signed_wasserstein
            || (d.signed_wasserstein == b.signed_wasserstein && d.epoch < b.epoch)
        {
            best = idx;
        }
    }
    Ok((checkpoints[best].clone(), diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::EmbedderConfig;
    use crate::rng::SplitMix64;

    /// Independent oracle: integrate |F_a − F_b| over the merged support
    /// grid using rank counts, not the two-pointer sweep.
    fn cdf_integral_oracle(a: &[f64], b: &[f64]) -> f64 {
        let mut grid: Vec<f64> = a.iter().chain(b.iter()).cloned().collect();
        grid.sort_by(f64::total_cmp);
        let frac_le = |xs: &[f64], t: f64| -> f64 {
            xs.iter().filter(|v| **v <= t).count() as f64 / xs.len() as f64
        };
        let mut total = 0.0;
        for pair in grid.windows(2) {
            total += (frac_le(a, pair[0]) - frac_le(b, pair[0])).abs() * (pair[1] - pair[0]);
        }
        total
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[0.3, 0.1, 0.2], &[0.2, 0.3, 0.1]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        assert!(wasserstein_1d(&[1.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn wasserstein_translation_property() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..20 {
            let n = 1 + rng.next_below(30) as usize;
            let a: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let delta = rng.uniform(-2.0, 2.0);
            let shifted: Vec<f64> = a.iter().map(|v| v + delta).collect();
            let w = wasserstein_1d(&a, &shifted).unwrap();
            assert!((w - delta.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn wasserstein_matches_cdf_oracle() {
        let mut rng = SplitMix64::new(32);
        // Includes the duplicated-mass case where a coarser and a finer
        // sample describe the same distribution.
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        for trial in 0..300 {
            let na = 1 + rng.next_below(25) as usize;
            let nb = 1 + rng.next_below(25) as usize;
            let a: Vec<f64> = (0..na).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let got = wasserstein_1d(&a, &b).unwrap();
            let want = cdf_integral_oracle(&a, &b);
            assert!(
                (got - want).abs() < 1e-12,
                "trial {trial}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn wasserstein_symmetry_and_triangle() {
        let mut rng = SplitMix64::new(33);
        for _ in 0..50 {
            let mut sample = |seed_len: u64| -> Vec<f64> {
                let n = 1 + (seed_len % 13) as usize + rng.next_below(8) as usize;
                (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
            };
            let a = sample(3);
            let b = sample(7);
            let c = sample(11);
            let wab = wasserstein_1d(&a, &b).unwrap();
            let wba = wasserstein_1d(&b, &a).unwrap();
            let wac = wasserstein_1d(&a, &c).unwrap();
            let wbc = wasserstein_1d(&b, &c).unwrap();
            assert!((wab - wba).abs() < 1e-15);
            assert!(wab >= 0.0);
            assert!(wac <= wab + wbc + 1e-12);
        }
    }

    #[test]
    fn signed_wasserstein_sign_convention() {
        let mk = |scores: &[f64]| {
            ScoreDistribution::new(ScoreLabel::SpoofFiltered, scores.to_vec()).unwrap()
        };
        let target = ScoreDistribution::new(
            ScoreLabel::TargetBonaFide,
            vec![0.4, 0.5, 0.6],
        )
        .unwrap();

        assert_eq!(signed_wasserstein(&target, &target).unwrap(), 0.0);
        // Spoofs scoring higher than bona fide: positive.
        assert!(signed_wasserstein(&mk(&[0.7, 0.8, 0.9]), &target).unwrap() > 0.0);
        // Spoofs scoring lower (weaker attack): negative.
        assert!(signed_wasserstein(&mk(&[0.1, 0.2, 0.3]), &target).unwrap() < 0.0);
        // Median tie with spread mass: conservatively negative.
        let tied = signed_wasserstein(&mk(&[0.3, 0.5, 0.7]), &target).unwrap();
        assert!(tied < 0.0);
    }

    #[test]
    fn score_distribution_rejects_out_of_range() {
        assert!(ScoreDistribution::new(ScoreLabel::SpoofBaseline, vec![]).is_err());
        assert!(ScoreDistribution::new(ScoreLabel::SpoofBaseline, vec![1.5]).is_err());
        assert!(ScoreDistribution::new(ScoreLabel::SpoofBaseline, vec![0.5, -1.0]).is_ok());
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median_of(&[7.0]), 7.0);
    }

    fn small_embedder() -> Embedder {
        Embedder::new(EmbedderConfig {
            frame_len: 32,
            hop_len: 16,
            fft_len: 64,
            n_mels: 8,
            embedding_dim: 12,
            sample_rate_hz: 16_000,
            seed: 7,
        })
        .unwrap()
    }

    fn noise_signal(n: usize, seed: u64) -> Signal {
        let mut rng = SplitMix64::new(seed);
        Signal::new((0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn identity_filter_matches_unfiltered_scores() {
        let emb = small_embedder();
        let utts: Vec<Signal> = (0..4)
            .map(|i| noise_signal(128, 60 + i).rescale_peak(1.0))
            .collect();
        let enrol = emb.extract(&noise_signal(128, 99).rescale_peak(1.0)).unwrap();
        let identity = MalacopulaFilter::identity(3, 5).unwrap();

        let plain =
            score_distribution(ScoreLabel::SpoofBaseline, &utts, &enrol, &emb, None).unwrap();
        let filtered =
            score_distribution(ScoreLabel::SpoofFiltered, &utts, &enrol, &emb, Some(&identity))
                .unwrap();
        for (a, b) in plain.scores().iter().zip(filtered.scores()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn singleton_distribution_is_direct_cosine() {
        let emb = small_embedder();
        let utt = noise_signal(100, 3);
        let enrol = emb.extract(&noise_signal(100, 4)).unwrap();
        let dist =
            score_distribution(ScoreLabel::TargetBonaFide, &[utt.clone()], &enrol, &emb, None)
                .unwrap();
        let direct = cosine_similarity(&emb.extract(&utt).unwrap(), &enrol).unwrap();
        assert_eq!(dist.scores().len(), 1);
        assert!((dist.scores()[0] - direct).abs() < 1e-15);
    }

    #[test]
    fn select_best_single_checkpoint() {
        let emb = small_embedder();
        let spoofs: Vec<Signal> = (0..3).map(|i| noise_signal(128, 10 + i)).collect();
        let targets: Vec<Signal> = (0..3).map(|i| noise_signal(128, 20 + i)).collect();
        let enrols: Vec<Signal> = (0..2).map(|i| noise_signal(128, 30 + i)).collect();
        let cp = FilterCheckpoint {
            epoch: 1,
            filter: MalacopulaFilter::identity(2, 5).unwrap(),
            mean_loss: 0.5,
        };
        let (best, diags) =
            select_best(&[cp.clone()], &spoofs, &targets, &enrols, &emb).unwrap();
        assert_eq!(best.epoch, 1);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].epoch, 1);
    }

    #[test]
    fn select_best_matches_brute_force_replay() {
        let emb = small_embedder();
        let spoofs: Vec<Signal> = (0..4).map(|i| noise_signal(128, 40 + i)).collect();
        let targets: Vec<Signal> = (0..5).map(|i| noise_signal(128, 50 + i)).collect();
        let enrols: Vec<Signal> = (0..2).map(|i| noise_signal(128, 70 + i)).collect();

        let mut rng = SplitMix64::new(80);
        let checkpoints: Vec<FilterCheckpoint> = (1..=6)
            .map(|epoch| {
                let rows: Vec<Vec<f64>> = (0..2)
                    .map(|_| (0..5).map(|_| rng.uniform(-0.6, 0.6)).collect())
                    .collect();
                FilterCheckpoint {
                    epoch,
                    filter: MalacopulaFilter::from_rows(&rows).unwrap(),
                    mean_loss: 0.0,
                }
            })
            .collect();

        let (best, diags) = select_best(&checkpoints, &spoofs, &targets, &enrols, &emb).unwrap();

        // Sequential replay with independently assembled pieces.
        let enrol_embs: Vec<Vec<f64>> =
            enrols.iter().map(|u| emb.extract(u).unwrap()).collect();
        let enrol = average_enrolment(&enrol_embs).unwrap();
        let target_d: Vec<f64> = targets
            .iter()
            .map(|u| 1.0 - cosine_similarity(&emb.extract(u).unwrap(), &enrol).unwrap())
            .collect();
        let mut want_epoch = 0;
        let mut want_value = f64::INFINITY;
        for cp in checkpoints.iter() {
            let spoof_d: Vec<f64> = spoofs
                .iter()
                .map(|u| {
                    let y = malacopula_apply(u, &cp.filter).unwrap();
                    1.0 - cosine_similarity(&emb.extract(&y).unwrap(), &enrol).unwrap()
                })
                .collect();
            let w = wasserstein_1d(&spoof_d, &target_d).unwrap();
            let sign = if median_of(&spoof_d) > median_of(&target_d) {
                1.0
            } else {
                -1.0
            };
            if sign * w < want_value {
                want_value = sign * w;
                want_epoch = cp.epoch;
            }
        }
        assert_eq!(best.epoch, want_epoch);
        assert!((diags[want_epoch - 1].signed_wasserstein - want_value).abs() < 1e-15);

        // Permutation invariance up to the documented tie-break.
        let mut reversed = checkpoints.clone();
        reversed.reverse();
        let (best_rev, _) = select_best(&reversed, &spoofs, &targets, &enrols, &emb).unwrap();
        assert_eq!(best_rev.epoch, best.epoch);
    }
}
