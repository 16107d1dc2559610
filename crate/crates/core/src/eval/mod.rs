//! Offline comparison of the explainable pipeline against a CSP+LDA baseline:
//! stratified cross-validation per subject, a paired Wilcoxon test across
//! subjects and the inter-trial variance-reduction metric.

mod csp;
mod lda;
pub mod physionet;
mod wilcoxon;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::chaos::{higuchi_hfd, ChaosConfig, HfdPair};
use crate::fusion::{self, decide, fuse, FeatureVector, FusionError};
use crate::physics::{lateralization_index, population_variance, PhysicsConfig};
use crate::quantum::{p_move, score_to_theta};
use crate::synthetic::{mi_recording, SyntheticParams};
use crate::signal_io::{bandpass, epoch_at, FilterSpec, MiClass, Recording, SignalError};
use crate::veto::{
    calibrate_threshold, default_hidden_size, raw_window_features, train, veto, FeatureNormalizer, TrainingParams,
    VetoError,
};

pub use csp::{csp_fit, csp_spectrum, CspModel, COVARIANCE_RIDGE};
pub use lda::{lda_fit, lda_fit_predict, LdaModel, DEFAULT_SHRINKAGE};
pub use wilcoxon::{mid_ranks, wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N, MIN_NONZERO_PAIRS};

use crate::signal_io::EpochWindow;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),
    #[error("covariance is singular")]
    SingularCovariance,
    #[error("{requested} CSP components requested for {channels} channels (need even, <= channels)")]
    InvalidComponents { requested: usize, channels: usize },
    #[error("trials disagree on channel count")]
    ChannelMismatch,
    #[error("need at least {needed} non-zero paired differences, got {got}")]
    TooFewPairs { got: usize, needed: usize },
    #[error("condition a has zero variance")]
    DegenerateCondition,
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Veto(#[from] VetoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// CSP spatial filters, log-variance features, shrinkage LDA.
    Baseline,
    /// Fused lateralization, artifact veto and safety gate; Neutral is an error.
    Explainable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Trial window start relative to the cue, seconds.
    pub trial_offset_s: f64,
    pub trial_len_s: f64,
    pub filter: FilterSpec,
    pub csp_components: usize,
    pub lda_shrinkage: f64,
    pub physics: PhysicsConfig,
    pub chaos: ChaosConfig,
    pub veto: TrainingParams,
    /// Subjects whose baseline accuracy reaches this are reported as responsive.
    pub responsive_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            trial_offset_s: 0.5,
            trial_len_s: 2.0,
            filter: FilterSpec::default(),
            csp_components: 4,
            lda_shrinkage: DEFAULT_SHRINKAGE,
            physics: PhysicsConfig::default(),
            chaos: ChaosConfig::default(),
            veto: TrainingParams::default(),
            responsive_threshold: None,
        }
    }
}

impl EvalConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, crate::session::ConfigError> {
        use crate::session::ConfigError;
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.folds < 2 || cfg.csp_components == 0 || cfg.csp_components % 2 == 1 || !(cfg.trial_len_s > 0.0) {
            return Err(ConfigError::Invalid(
                "folds must be >= 2, csp_components even and positive, trial_len_s positive".into(),
            ));
        }
        Ok(cfg)
    }
}

/// Filters the recording and cuts one window per Left/Right cue.
pub fn extract_trials(recording: &Recording, cfg: &EvalConfig) -> Result<Vec<EpochWindow>, EvalError> {
    let filtered = bandpass(recording, &cfg.filter)?;
    let mut out = Vec::new();
    for a in recording.annotations() {
        let class = MiClass::from_annotation(&a.label);
        if class == MiClass::Rest || cfg.trial_offset_s + cfg.trial_len_s > a.duration_s + 1e-9 {
            continue;
        }
        match epoch_at(&filtered, a.onset_s + cfg.trial_offset_s, cfg.trial_len_s, &[], Some(class)) {
            Ok(w) => out.push(w),
            Err(SignalError::InvalidWindow(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn trial_class(w: &EpochWindow) -> Result<MiClass, EvalError> {
    match w.label {
        Some(c @ (MiClass::Left | MiClass::Right)) => Ok(c),
        _ => Err(EvalError::Data("every trial needs a Left or Right label".into())),
    }
}

/// Fold index per trial: each class shuffled by `seed`, then dealt round-robin.
pub fn stratified_folds(labels: &[MiClass], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::InsufficientTrials(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [MiClass::Left, MiClass::Right] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(EvalError::InsufficientTrials(format!(
                "{} {class:?} trials for {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = (pos + offset) % k;
        }
        // keep fold sizes balanced when class counts are not multiples of k
        offset = (offset + labels.iter().filter(|l| **l == class).count()) % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub n_trials: usize,
    /// Fused inputs of every test trial (explainable pipeline only).
    pub all_features: Vec<FeatureVector>,
    /// Fused inputs of test trials that received a confident decision.
    pub confident_features: Vec<FeatureVector>,
}

fn trial_features(w: &EpochWindow, cfg: &EvalConfig) -> Result<(FeatureVector, bool), EvalError> {
    let (c3, c4) = (w.require_channel("C3")?, w.require_channel("C4")?);
    let l_idx = lateralization_index(c3, c4, &cfg.physics);
    match (higuchi_hfd(c3, &cfg.chaos), higuchi_hfd(c4, &cfg.chaos)) {
        (Ok(a), Ok(b)) if l_idx.is_finite() => Ok((FeatureVector::new(l_idx, HfdPair { c3: a, c4: b }), false)),
        _ => Ok((FeatureVector::from_lateralizations(0.0, 0.0), true)),
    }
}

struct FoldScore {
    correct: usize,
    total: usize,
    all: Vec<FeatureVector>,
    confident: Vec<FeatureVector>,
}

fn baseline_fold(train_set: &[&EpochWindow], test_set: &[&EpochWindow], cfg: &EvalConfig) -> Result<FoldScore, EvalError> {
    let by_class = |c: MiClass| -> Vec<EpochWindow> {
        train_set.iter().filter(|w| w.label == Some(c)).map(|w| (*w).clone()).collect()
    };
    let model = csp_fit(&by_class(MiClass::Left), &by_class(MiClass::Right), cfg.csp_components)?;
    let train: Vec<(Vec<f64>, MiClass)> = train_set
        .iter()
        .map(|w| Ok((model.features(w), trial_class(w)?)))
        .collect::<Result<_, EvalError>>()?;
    let lda = lda_fit(&train, cfg.lda_shrinkage)?;
    let correct = test_set
        .iter()
        .filter(|w| Some(lda.predict(&model.features(w))) == w.label)
        .count();
    Ok(FoldScore {
        correct,
        total: test_set.len(),
        all: Vec::new(),
        confident: Vec::new(),
    })
}

/// Fits fusion and the veto on the training trials; each test trial is scored
/// at steady state (`theta` set directly from its fused score).
fn explainable_fold(train_set: &[&EpochWindow], test_set: &[&EpochWindow], cfg: &EvalConfig) -> Result<FoldScore, EvalError> {
    let mut examples = Vec::new();
    let mut raw = Vec::new();
    for w in train_set {
        let (fv, degenerate) = trial_features(w, cfg)?;
        if !degenerate {
            examples.push((fv, trial_class(w)?));
            raw.push(raw_window_features(w));
        }
    }
    let weights = fusion::calibrate(&examples)?;
    let normalizer = FeatureNormalizer::fit(&raw)?;
    let feats: Vec<Vec<f64>> = raw.iter().map(|r| normalizer.apply(r)).collect();
    let d_hidden = cfg.veto.d_hidden.unwrap_or_else(|| default_hidden_size(feats[0].len()));
    let ae = train(&feats, d_hidden, cfg.veto.epochs, cfg.veto.learning_rate, cfg.veto.seed)?;
    let threshold = calibrate_threshold(&ae, &feats)?;

    let mut score = FoldScore {
        correct: 0,
        total: test_set.len(),
        all: Vec::new(),
        confident: Vec::new(),
    };
    for w in test_set {
        let (fv, degenerate) = trial_features(w, cfg)?;
        let v = veto(&ae, &normalizer.apply(&raw_window_features(w)), threshold);
        let p = p_move(score_to_theta(fuse(&fv, &weights), weights.quantum_gain));
        let decision = decide(p, &v, degenerate);
        if decision.class.matches(trial_class(w)?) {
            score.correct += 1;
        }
        if !degenerate {
            score.all.push(fv);
            if !decision.is_neutral() {
                score.confident.push(fv);
            }
        }
    }
    Ok(score)
}

/// Stratified k-fold accuracy: the mean of the per-fold test accuracies.
pub fn crossval(trials: &[EpochWindow], pipeline: Pipeline, cfg: &EvalConfig) -> Result<CvOutcome, EvalError> {
    let labels: Vec<MiClass> = trials.iter().map(trial_class).collect::<Result<_, _>>()?;
    let folds = stratified_folds(&labels, cfg.folds, cfg.seed)?;
    let mut out = CvOutcome {
        accuracy: 0.0,
        fold_accuracies: Vec::with_capacity(cfg.folds),
        n_trials: trials.len(),
        all_features: Vec::new(),
        confident_features: Vec::new(),
    };
    for k in 0..cfg.folds {
        let train_set: Vec<&EpochWindow> = trials.iter().zip(&folds).filter(|(_, f)| **f != k).map(|(t, _)| t).collect();
        let test_set: Vec<&EpochWindow> = trials.iter().zip(&folds).filter(|(_, f)| **f == k).map(|(t, _)| t).collect();
        let s = match pipeline {
            Pipeline::Baseline => baseline_fold(&train_set, &test_set, cfg)?,
            Pipeline::Explainable => explainable_fold(&train_set, &test_set, cfg)?,
        };
        out.fold_accuracies.push(s.correct as f64 / s.total as f64);
        out.all_features.extend(s.all);
        out.confident_features.extend(s.confident);
    }
    out.accuracy = out.fold_accuracies.iter().sum::<f64>() / cfg.folds as f64;
    Ok(out)
}

fn mean_dim_variance(set: &[FeatureVector]) -> f64 {
    let l: Vec<f64> = set.iter().map(|f| f.l_idx).collect();
    let d: Vec<f64> = set.iter().map(|f| f.delta_hfd).collect();
    let n = set.len() as f64;
    // unbiased sample variance per dimension
    let correction = n / (n - 1.0);
    (population_variance(&l) + population_variance(&d)) / 2.0 * correction
}

/// `1 - mean var(b) / mean var(a)` over the fused dimensions `(l_idx, delta_hfd)`.
pub fn variance_reduction(a: &[FeatureVector], b: &[FeatureVector]) -> Result<f64, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::InsufficientTrials("variance reduction needs 2 vectors per condition".into()));
    }
    let va = mean_dim_variance(a);
    if !(va > 0.0) {
        return Err(EvalError::DegenerateCondition);
    }
    Ok(1.0 - mean_dim_variance(b) / va)
}

/// Smallest accuracy above the 95th percentile of chance guessing over `n` trials.
pub fn chance_upper_bound(n_trials: usize) -> f64 {
    if n_trials == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n_trials as u64).expect("valid binomial");
    let k = (0..=n_trials as u64).find(|&k| b.cdf(k) >= 0.95).unwrap_or(n_trials as u64);
    k as f64 / n_trials as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub baseline: f64,
    pub explainable: f64,
    pub n_trials: usize,
    pub chance_upper: f64,
    pub variance_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub n_subjects: usize,
    pub mean_baseline: f64,
    pub mean_explainable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub folds: usize,
    pub seed: u64,
    pub per_subject: BTreeMap<String, SubjectResult>,
    pub mean_baseline: f64,
    pub mean_explainable: f64,
    /// Two-sided p over subjects; absent with fewer than 5 non-zero differences.
    pub wilcoxon_p: Option<f64>,
    pub wilcoxon_n: usize,
    /// Pooled chance band over all trials of all subjects.
    pub chance_upper: f64,
    pub n_trials: usize,
    /// Mean over subjects of the reduction from all test trials to confidently
    /// decided ones.
    pub variance_reduction: Option<f64>,
    pub responsive_threshold: Option<f64>,
    pub responsive: Option<GroupRow>,
}

fn evaluate_subject(id: &str, trials: &[EpochWindow], cfg: &EvalConfig) -> Result<SubjectResult, EvalError> {
    let base = crossval(trials, Pipeline::Baseline, cfg)?;
    let expl = crossval(trials, Pipeline::Explainable, cfg)?;
    log::info!("{id}: baseline {:.3}, explainable {:.3}", base.accuracy, expl.accuracy);
    Ok(SubjectResult {
        baseline: base.accuracy,
        explainable: expl.accuracy,
        n_trials: trials.len(),
        chance_upper: chance_upper_bound(trials.len()),
        variance_reduction: variance_reduction(&expl.all_features, &expl.confident_features).ok(),
    })
}

/// Runs both pipelines on every subject's trials, one thread per subject.
pub fn evaluate(subjects: &[(String, Vec<EpochWindow>)], cfg: &EvalConfig) -> Result<EvalResult, EvalError> {
    if subjects.is_empty() {
        return Err(EvalError::InsufficientTrials("no subjects".into()));
    }
    let mut ids: Vec<&String> = subjects.iter().map(|(id, _)| id).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(EvalError::Data("duplicate subject id".into()));
    }
    // subjects are independent and every random draw is seeded, so the
    // parallel result equals the serial one
    let outcomes: Vec<Result<SubjectResult, EvalError>> = std::thread::scope(|scope| {
        let jobs: Vec<_> = subjects
            .iter()
            .map(|(id, trials)| scope.spawn(move || evaluate_subject(id, trials, cfg)))
            .collect();
        jobs.into_iter().map(|j| j.join().expect("subject worker panicked")).collect()
    });
    let mut per_subject = BTreeMap::new();
    for ((id, _), outcome) in subjects.iter().zip(outcomes) {
        per_subject.insert(id.clone(), outcome?);
    }
    let n = per_subject.len() as f64;
    let mean_baseline = per_subject.values().map(|s| s.baseline).sum::<f64>() / n;
    let mean_explainable = per_subject.values().map(|s| s.explainable).sum::<f64>() / n;
    let pairs: Vec<(f64, f64)> = per_subject.values().map(|s| (s.baseline, s.explainable)).collect();
    let wilcoxon = wilcoxon_signed_rank(&pairs).ok();
    let vrs: Vec<f64> = per_subject.values().filter_map(|s| s.variance_reduction).collect();
    let n_trials = per_subject.values().map(|s| s.n_trials).sum();

    let responsive = cfg.responsive_threshold.and_then(|th| {
        let chosen: Vec<&SubjectResult> = per_subject.values().filter(|s| s.baseline >= th).collect();
        (!chosen.is_empty()).then(|| GroupRow {
            n_subjects: chosen.len(),
            mean_baseline: chosen.iter().map(|s| s.baseline).sum::<f64>() / chosen.len() as f64,
            mean_explainable: chosen.iter().map(|s| s.explainable).sum::<f64>() / chosen.len() as f64,
        })
    });

    Ok(EvalResult {
        folds: cfg.folds,
        seed: cfg.seed,
        per_subject,
        mean_baseline,
        mean_explainable,
        wilcoxon_n: wilcoxon.as_ref().map_or(0, |w| w.n),
        wilcoxon_p: wilcoxon.map(|w| w.p_value),
        chance_upper: chance_upper_bound(n_trials),
        n_trials,
        variance_reduction: (!vrs.is_empty()).then(|| vrs.iter().sum::<f64>() / vrs.len() as f64),
        responsive_threshold: cfg.responsive_threshold,
        responsive,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Per-subject trials from the seeded generator; subject `i` uses seed `seed + i`.
pub fn synthetic_cohort(
    n_subjects: usize,
    params: &SyntheticParams,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<(String, Vec<EpochWindow>)>, EvalError> {
    (0..n_subjects)
        .map(|i| {
            let rec = mi_recording(params, seed.wrapping_add(i as u64));
            Ok((format!("syn{:03}", i + 1), extract_trials(&rec, cfg)?))
        })
        .collect()
}

/// Aligned text table: one row per method plus the significance row.
pub fn render_table(r: &EvalResult) -> String {
    let resp = |f: fn(&GroupRow) -> f64| r.responsive.as_ref().map_or("n/a".to_string(), |g| pct(f(g)));
    let p = r.wilcoxon_p.map_or("n/a".to_string(), |p| format!("p = {p:.4}"));
    let rows = [
        ("Method".to_string(), "Mean acc. (all)".to_string(), "Responsive".to_string()),
        ("baseline (CSP + LDA)".into(), pct(r.mean_baseline), resp(|g| g.mean_baseline)),
        ("explainable (gated fusion)".into(), pct(r.mean_explainable), resp(|g| g.mean_explainable)),
        (format!("wilcoxon signed-rank (n = {})", r.wilcoxon_n), p, String::new()),
    ];
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (a, b, c) in &rows {
        let _ = writeln!(out, "{a:<w0$}  {b:>w1$}  {c}");
    }
    let _ = writeln!(
        out,
        "\n{} subjects, {} trials, {}-fold CV, seed {}; chance band upper {}",
        r.per_subject.len(),
        r.n_trials,
        r.folds,
        r.seed,
        pct(r.chance_upper)
    );
    if let Some(vr) = r.variance_reduction {
        let _ = writeln!(out, "inter-trial variance reduction (confident vs all trials): {}", pct(vr));
    }
    for (id, s) in &r.per_subject {
        let _ = writeln!(out, "  {id:<8} baseline {:>7}  explainable {:>7}  ({} trials)", pct(s.baseline), pct(s.explainable), s.n_trials);
    }
    out.trim_end().to_string().replace("  \n", "\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fast_cfg() -> EvalConfig {
        EvalConfig {
            veto: TrainingParams {
                epochs: 80,
                ..TrainingParams::default()
            },
            ..EvalConfig::default()
        }
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<MiClass> = (0..43).map(|i| if i % 3 == 0 { MiClass::Left } else { MiClass::Right }).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        for k in 0..5 {
            let left = (0..43).filter(|&i| folds[i] == k && labels[i] == MiClass::Left).count();
            let right = (0..43).filter(|&i| folds[i] == k && labels[i] == MiClass::Right).count();
            assert!((2..=3).contains(&left) && (5..=6).contains(&right), "fold {k}: {left} {right}");
        }
        // every trial is in exactly one fold
        assert!(folds.iter().all(|f| *f < 5));
        assert_eq!(folds, stratified_folds(&labels, 5, 3).unwrap());
        assert_ne!(folds, stratified_folds(&labels, 5, 4).unwrap());
        assert!(matches!(stratified_folds(&labels[..6], 5, 0), Err(EvalError::InsufficientTrials(_))));
    }

    #[test]
    fn separable_subject_baseline_is_perfect() {
        let cfg = fast_cfg();
        let trials = extract_trials(&mi_recording(&SyntheticParams::separable(), 21), &cfg).unwrap();
        assert_eq!(trials.len(), 30);
        let cv = crossval(&trials, Pipeline::Baseline, &cfg).unwrap();
        assert_eq!(cv.accuracy, 1.0);
        let a = crossval(&trials, Pipeline::Explainable, &cfg).unwrap();
        let b = crossval(&trials, Pipeline::Explainable, &cfg).unwrap();
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        assert!(a.accuracy > 0.6, "{}", a.accuracy);
    }

    #[test]
    fn randomized_labels_are_near_chance() {
        let cfg = fast_cfg();
        let params = SyntheticParams {
            trials_per_class: 20,
            ..SyntheticParams::realistic()
        };
        let mut trials = extract_trials(&mi_recording(&params, 2), &cfg).unwrap();
        let mut labels: Vec<Option<MiClass>> = trials.iter().map(|t| t.label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        for (t, l) in trials.iter_mut().zip(labels) {
            t.label = l;
        }
        assert_eq!(trials.len(), 40);
        let acc = crossval(&trials, Pipeline::Baseline, &cfg).unwrap().accuracy;
        assert!((0.3..=0.7).contains(&acc), "{acc}");
    }

    fn gaussian_set(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut *rng);
                let b: f64 = StandardNormal.sample(&mut *rng);
                FeatureVector::from_lateralizations(scale * a, 0.2 * scale * b)
            })
            .collect()
    }

    #[test]
    fn variance_reduction_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian_set(200, 1.0, &mut rng);
        let b = gaussian_set(200, 1.0, &mut rng);
        assert!(variance_reduction(&a, &b).unwrap().abs() < 0.1);

        let n = a.len() as f64;
        let ml = a.iter().map(|f| f.l_idx).sum::<f64>() / n;
        let md = a.iter().map(|f| f.delta_hfd).sum::<f64>() / n;
        let half: Vec<FeatureVector> = a
            .iter()
            .map(|f| FeatureVector::from_lateralizations(ml + 0.5 * (f.l_idx - ml), md + 0.5 * (f.delta_hfd - md)))
            .collect();
        assert!((variance_reduction(&a, &half).unwrap() - 0.75).abs() < 1e-12);

        let flat = vec![FeatureVector::from_lateralizations(0.3, 0.1); 5];
        assert!(matches!(variance_reduction(&flat, &a), Err(EvalError::DegenerateCondition)));
    }

    #[test]
    fn chance_band() {
        assert_eq!(chance_upper_bound(10), 0.8);
        let ub = chance_upper_bound(100);
        assert!((0.57..=0.59).contains(&ub), "{ub}");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = (0..100).filter(|_| rng.random::<bool>()).count();
        assert!((hits as f64 / 100.0) <= ub + 0.05);
    }

    #[test]
    fn table_rows() {
        let cfg = fast_cfg();
        let subjects: Vec<(String, Vec<EpochWindow>)> = (0..2)
            .map(|s| (format!("syn{s}"), extract_trials(&mi_recording(&SyntheticParams::separable(), s), &cfg).unwrap()))
            .collect();
        let r = evaluate(&subjects, &cfg).unwrap();
        assert_eq!(r.wilcoxon_p, None);
        let t = render_table(&r);
        assert!(t.contains("baseline (CSP + LDA)"));
        assert!(t.contains("explainable (gated fusion)"));
        assert!(t.lines().any(|l| l.starts_with("wilcoxon signed-rank (n = 0)") && l.ends_with("n/a")));
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&evaluate(&subjects, &cfg).unwrap()).unwrap());
    }
}
