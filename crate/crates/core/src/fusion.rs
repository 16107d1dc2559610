//! Adaptive vote: per-user logistic fusion of the energy and complexity
//! lateralizations, plus the safety gate that turns a move probability into a
//! decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::HfdPair;
use crate::signal_io::MiClass;
use crate::veto::VetoResult;

pub const MIN_EXAMPLES_PER_CLASS: usize = 4;
pub const CALIBRATION_ITERATIONS: usize = 500;
pub const CALIBRATION_LEARNING_RATE: f64 = 0.1;
/// Open interval of move probabilities in which no class is asserted.
pub const AMBIGUITY_ZONE: (f64, f64) = (0.4, 0.6);

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("need at least {needed} {class:?} examples, got {got}")]
    InsufficientData { class: MiClass, got: usize, needed: usize },
    #[error("calibration data contains only {0:?} examples")]
    SingleClassData(MiClass),
    #[error("calibration data contains no examples")]
    Empty,
    #[error("calibration labels must be Left or Right, got {0:?}")]
    InvalidLabel(MiClass),
}

/// The three engine outputs for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub l_idx: f64,
    pub hfd_c3: f64,
    pub hfd_c4: f64,
    pub delta_hfd: f64,
}

impl FeatureVector {
    pub fn new(l_idx: f64, hfd: HfdPair) -> Self {
        Self {
            l_idx,
            hfd_c3: hfd.c3,
            hfd_c4: hfd.c4,
            delta_hfd: hfd.delta(),
        }
    }

    /// Only the fused inputs are known, e.g. in fixtures.
    pub fn from_lateralizations(l_idx: f64, delta_hfd: f64) -> Self {
        Self {
            l_idx,
            hfd_c3: f64::NAN,
            hfd_c4: f64::NAN,
            delta_hfd,
        }
    }

    /// `[l_idx, hfd_c3, hfd_c4, delta_hfd]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.l_idx, self.hfd_c3, self.hfd_c4, self.delta_hfd]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_physics: f64,
    pub w_chaos: f64,
    pub bias: f64,
    pub quantum_gain: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            w_physics: 1.0,
            w_chaos: 0.0,
            bias: 0.0,
            quantum_gain: 1.0,
        }
    }
}

pub fn fuse(fv: &FeatureVector, w: &FusionWeights) -> f64 {
    w.w_physics * fv.l_idx + w.w_chaos * fv.delta_hfd + w.bias
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic regression of `Right` against `Left` on `(l_idx, delta_hfd)`,
/// full-batch gradient descent from zero weights.
pub fn calibrate(examples: &[(FeatureVector, MiClass)]) -> Result<FusionWeights, FusionError> {
    if examples.is_empty() {
        return Err(FusionError::Empty);
    }
    if let Some((_, bad)) = examples.iter().find(|(_, c)| *c == MiClass::Rest) {
        return Err(FusionError::InvalidLabel(*bad));
    }
    let rights = examples.iter().filter(|(_, c)| *c == MiClass::Right).count();
    let lefts = examples.len() - rights;
    if rights == 0 {
        return Err(FusionError::SingleClassData(MiClass::Left));
    }
    if lefts == 0 {
        return Err(FusionError::SingleClassData(MiClass::Right));
    }
    for (class, got) in [(MiClass::Left, lefts), (MiClass::Right, rights)] {
        if got < MIN_EXAMPLES_PER_CLASS {
            return Err(FusionError::InsufficientData {
                class,
                got,
                needed: MIN_EXAMPLES_PER_CLASS,
            });
        }
    }

    let n = examples.len() as f64;
    let (mut wp, mut wc, mut b) = (0.0, 0.0, 0.0);
    for _ in 0..CALIBRATION_ITERATIONS {
        let (mut gp, mut gc, mut gb) = (0.0, 0.0, 0.0);
        for (fv, class) in examples {
            let y = if *class == MiClass::Right { 1.0 } else { 0.0 };
            let err = sigmoid(wp * fv.l_idx + wc * fv.delta_hfd + b) - y;
            gp += err * fv.l_idx;
            gc += err * fv.delta_hfd;
            gb += err;
        }
        wp -= CALIBRATION_LEARNING_RATE * gp / n;
        wc -= CALIBRATION_LEARNING_RATE * gc / n;
        b -= CALIBRATION_LEARNING_RATE * gb / n;
    }
    Ok(FusionWeights {
        w_physics: wp,
        w_chaos: wc,
        bias: b,
        quantum_gain: 1.0,
    })
}

/// Fraction of examples on the correct side of the fused score's zero.
pub fn training_accuracy(w: &FusionWeights, examples: &[(FeatureVector, MiClass)]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples
        .iter()
        .filter(|(fv, class)| {
            let predicted = if fuse(fv, w) > 0.0 { MiClass::Right } else { MiClass::Left };
            predicted == *class
        })
        .count();
    correct as f64 / examples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DecisionClass {
    Left,
    Neutral,
    Right,
}

impl DecisionClass {
    pub fn matches(self, class: MiClass) -> bool {
        matches!(
            (self, class),
            (DecisionClass::Left, MiClass::Left) | (DecisionClass::Right, MiClass::Right)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionReason {
    Confident,
    AmbiguityZone,
    ArtifactVeto,
    DegenerateSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub class: DecisionClass,
    pub p_move: f64,
    pub reason: DecisionReason,
}

impl Decision {
    pub fn is_neutral(&self) -> bool {
        self.class == DecisionClass::Neutral
    }
}

/// Safety gate. The veto wins over everything, then a degenerate signal, then
/// the open ambiguity zone `(0.4, 0.6)`; its boundaries belong to the classes.
pub fn decide(p_move: f64, veto: &VetoResult, degenerate: bool) -> Decision {
    let (class, reason) = if veto.rejected {
        (DecisionClass::Neutral, DecisionReason::ArtifactVeto)
    } else if degenerate {
        (DecisionClass::Neutral, DecisionReason::DegenerateSignal)
    } else if AMBIGUITY_ZONE.0 < p_move && p_move < AMBIGUITY_ZONE.1 {
        (DecisionClass::Neutral, DecisionReason::AmbiguityZone)
    } else if p_move >= AMBIGUITY_ZONE.1 {
        (DecisionClass::Right, DecisionReason::Confident)
    } else {
        (DecisionClass::Left, DecisionReason::Confident)
    };
    Decision {
        class,
        p_move,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fv(l: f64, d: f64) -> FeatureVector {
        FeatureVector::from_lateralizations(l, d)
    }

    const PASS: VetoResult = VetoResult {
        reconstruction_error: 0.1,
        threshold: 1.0,
        rejected: false,
    };
    const REJECT: VetoResult = VetoResult {
        reconstruction_error: 2.0,
        threshold: 1.0,
        rejected: true,
    };

    #[test]
    fn separable_fit() {
        let mut data = Vec::new();
        for _ in 0..10 {
            data.push((fv(1.0, 0.0), MiClass::Right));
            data.push((fv(-1.0, 0.0), MiClass::Left));
        }
        let w = calibrate(&data).unwrap();
        assert!(w.w_physics > 0.0);
        assert_eq!(w.quantum_gain, 1.0);
        assert_eq!(training_accuracy(&w, &data), 1.0);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut labels: Vec<MiClass> = (0..100)
            .map(|i| if i < 50 { MiClass::Left } else { MiClass::Right })
            .collect();
        labels.shuffle(&mut rng);
        let data: Vec<(FeatureVector, MiClass)> = labels
            .into_iter()
            .map(|c| {
                let l: f64 = StandardNormal.sample(&mut rng);
                let d: f64 = StandardNormal.sample(&mut rng);
                (fv(l, 0.1 * d), c)
            })
            .collect();
        let acc = training_accuracy(&calibrate(&data).unwrap(), &data);
        assert!((0.35..=0.65).contains(&acc), "{acc}");
    }

    #[test]
    fn calibration_errors() {
        let lefts: Vec<_> = (0..8).map(|i| (fv(i as f64, 0.0), MiClass::Left)).collect();
        assert_eq!(calibrate(&lefts), Err(FusionError::SingleClassData(MiClass::Left)));
        let mut few = lefts.clone();
        few.push((fv(1.0, 0.0), MiClass::Right));
        assert!(matches!(calibrate(&few), Err(FusionError::InsufficientData { class: MiClass::Right, got: 1, .. })));
        assert_eq!(calibrate(&[]), Err(FusionError::Empty));
    }

    #[test]
    fn calibration_is_bit_deterministic() {
        let data: Vec<_> = (0..20)
            .map(|i| (fv((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos() * 0.1), if i % 2 == 0 { MiClass::Left } else { MiClass::Right }))
            .collect();
        let a = calibrate(&data).unwrap();
        let b = calibrate(&data).unwrap();
        assert_eq!(a.w_physics.to_bits(), b.w_physics.to_bits());
        assert_eq!(a.w_chaos.to_bits(), b.w_chaos.to_bits());
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn fuse_arithmetic() {
        let zero = FusionWeights { w_physics: 0.0, w_chaos: 0.0, bias: 0.0, quantum_gain: 1.0 };
        assert_eq!(fuse(&fv(3.0, -2.0), &zero), 0.0);
        let phys = FusionWeights { w_physics: 1.0, ..zero };
        assert_eq!(fuse(&fv(0.7, 9.0), &phys), 0.7);
        let mixed = FusionWeights { w_physics: 0.5, w_chaos: -2.0, bias: 0.1, quantum_gain: 1.0 };
        assert!((fuse(&fv(0.4, 0.05), &mixed) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(decide(0.5, &PASS, false).reason, DecisionReason::AmbiguityZone);
        let d = decide(0.95, &REJECT, false);
        assert_eq!((d.class, d.reason), (DecisionClass::Neutral, DecisionReason::ArtifactVeto));
        let d = decide(0.6, &PASS, false);
        assert_eq!((d.class, d.reason), (DecisionClass::Right, DecisionReason::Confident));
        let d = decide(0.4, &PASS, false);
        assert_eq!((d.class, d.reason), (DecisionClass::Left, DecisionReason::Confident));
        let d = decide(0.9, &PASS, true);
        assert_eq!((d.class, d.reason), (DecisionClass::Neutral, DecisionReason::DegenerateSignal));
    }

    proptest! {
        #[test]
        fn veto_always_wins(p in 0.0f64..=1.0, degenerate: bool) {
            prop_assert_eq!(decide(p, &REJECT, degenerate).class, DecisionClass::Neutral);
        }

        #[test]
        fn monotone_in_p(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assume!(a <= b);
            prop_assert!(decide(a, &PASS, false).class <= decide(b, &PASS, false).class);
        }

        #[test]
        fn neutral_iff_withheld_reason(p in 0.0f64..=1.0, rejected: bool, degenerate: bool) {
            let v = VetoResult { rejected, ..PASS };
            let d = decide(p, &v, degenerate);
            prop_assert_eq!(d.is_neutral(), d.reason != DecisionReason::Confident);
        }
    }
}
