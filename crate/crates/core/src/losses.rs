//! Semantic, reconstruction and adversarial losses and their sum.
//!
//! All losses are recorded on a [`Tape`] so they can be differentiated.
//! Log arguments are clamped to `[LOG_CLAMP_MIN, 1]` first.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LOG_CLAMP_MIN: f64 = 1e-7;

/// Class ids for a `[batch, height, width]` block of pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    batch: usize,
    height: usize,
    width: usize,
    labels: Vec<usize>,
}

impl LabelMask {
    pub fn new(batch: usize, height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != batch * height * width {
            return Err(Error::Shape(format!(
                "{} labels for a {batch}x{height}x{width} mask",
                labels.len()
            )));
        }
        Ok(Self {
            batch,
            height,
            width,
            labels,
        })
    }

    pub fn from_u8(batch: usize, height: usize, width: usize, labels: &[u8]) -> Result<Self> {
        Self::new(batch, height, width, labels.iter().map(|&l| l as usize).collect())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.batch, self.height, self.width]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Generator-side adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanForm {
    /// `mean(−log σ(D(fake)))`.
    #[default]
    NonSaturating,
    /// `mean(log(1 − σ(D(fake))))`, the literal minimax term.
    Minimax,
}

/// Which terms of the combined objective are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossToggles {
    pub sem: bool,
    pub rec: bool,
    pub gan: bool,
}

impl LossToggles {
    pub const ALL: Self = Self {
        sem: true,
        rec: true,
        gan: true,
    };
    pub const SEM_ONLY: Self = Self {
        sem: true,
        rec: false,
        gan: false,
    };

    pub fn any(&self) -> bool {
        self.sem || self.rec || self.gan
    }

    /// Short label, e.g. `Sem+Rec+GAN`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.sem {
            parts.push("Sem");
        }
        if self.rec {
            parts.push("Rec");
        }
        if self.gan {
            parts.push("GAN");
        }
        parts.join("+")
    }
}

impl Default for LossToggles {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub sem: f64,
    pub rec: f64,
    pub gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sem: 1.0,
            rec: 1.0,
            gan: 1.0,
        }
    }
}

/// Scalar loss values of one training step; `None` marks a term that was
/// not computed (disabled, or no labels in the batch).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_sem: Option<f64>,
    pub l_rec: Option<f64>,
    pub l_gan_g: Option<f64>,
    pub l_gan_d: Option<f64>,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.l_sem, self.l_rec, self.l_gan_g, self.l_gan_d]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
            && self.total.is_finite()
    }
}

fn clamped_log<T: Scalar>(tape: &mut Tape<T>, p: Var) -> Result<Var> {
    let c = tape.clamp(p, T::lit(LOG_CLAMP_MIN), T::one())?;
    tape.log(c)
}

/// Mean pixel-wise cross entropy between `softmax(scores)` and `labels`.
pub fn sem_loss<T: Scalar>(tape: &mut Tape<T>, scores: Var, labels: &LabelMask) -> Result<Var> {
    let [b, _, h, w] = tape.value(scores).dims4()?;
    if labels.dims() != [b, h, w] {
        return Err(Error::Shape(format!(
            "labels {:?} not aligned with scores {:?}",
            labels.dims(),
            tape.value(scores).shape()
        )));
    }
    let probs = tape.softmax_channels(scores)?;
    let picked = tape.gather_channels(probs, labels.labels())?;
    let logp = clamped_log(tape, picked)?;
    let m = tape.mean(logp)?;
    tape.scale(m, -T::one())
}

/// Mean absolute difference.
pub fn rec_loss<T: Scalar>(tape: &mut Tape<T>, reconstruction: Var, input: Var) -> Result<Var> {
    if tape.value(reconstruction).shape() != tape.value(input).shape() {
        return Err(Error::Usage(format!(
            "reconstruction {:?} vs input {:?}",
            tape.value(reconstruction).shape(),
            tape.value(input).shape()
        )));
    }
    let d = tape.sub(reconstruction, input)?;
    let a = tape.abs(d)?;
    tape.mean(a)
}

/// `mean(−log σ(x))`
fn neg_log_sigmoid_mean<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = tape.sigmoid(x)?;
    let l = clamped_log(tape, s)?;
    let m = tape.mean(l)?;
    tape.scale(m, -T::one())
}

/// Discriminator loss on raw patch scores:
/// `mean(−log σ(real)) + mean(−log(1 − σ(fake)))`.
///
/// `d_fake` must come from reconstructions recorded as constants
/// (see [`Tape::detach`]) so no gradient reaches `G` or `F`.
pub fn gan_d_loss<T: Scalar>(tape: &mut Tape<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let real = neg_log_sigmoid_mean(tape, d_real)?;
    // 1 − σ(x) = σ(−x)
    let neg = tape.scale(d_fake, -T::one())?;
    let fake = neg_log_sigmoid_mean(tape, neg)?;
    tape.add(real, fake)
}

/// Generator-side adversarial loss on the discriminator's raw scores for
/// reconstructed images.
pub fn gan_g_loss<T: Scalar>(tape: &mut Tape<T>, d_fake: Var, form: GanForm) -> Result<Var> {
    match form {
        GanForm::NonSaturating => neg_log_sigmoid_mean(tape, d_fake),
        GanForm::Minimax => {
            let neg = tape.scale(d_fake, -T::one())?;
            let s = tape.sigmoid(neg)?;
            let l = clamped_log(tape, s)?;
            tape.mean(l)
        }
    }
}

/// Terms available for the combined objective; `None` means not computed.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossTerms {
    pub sem: Option<Var>,
    pub rec: Option<Var>,
    pub gan: Option<Var>,
}

/// Weighted sum of the enabled, present terms. A unit weight records no
/// scaling op, so the default graph is the plain sum.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    terms: LossTerms,
    toggles: LossToggles,
    weights: LossWeights,
) -> Result<Var> {
    if !toggles.any() {
        return Err(Error::Config("all loss terms are disabled".into()));
    }
    let parts = [
        (toggles.sem, terms.sem, weights.sem),
        (toggles.rec, terms.rec, weights.rec),
        (toggles.gan, terms.gan, weights.gan),
    ];
    let mut total: Option<Var> = None;
    for (enabled, term, weight) in parts {
        let Some(v) = term.filter(|_| enabled) else { continue };
        let v = if weight == 1.0 { v } else { tape.scale(v, T::lit(weight))? };
        total = Some(match total {
            None => v,
            Some(acc) => tape.add(acc, v)?,
        });
    }
    total.ok_or_else(|| Error::Usage("no enabled loss term is present in this batch".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_diff_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_scores(c: usize) -> f64 {
        let mut t = Tape::<f64>::new();
        let s = t.constant(Tensor::full(&[2, c, 3, 3], 0.7));
        let labels = LabelMask::new(2, 3, 3, (0..18).map(|i| i % c).collect()).unwrap();
        let l = sem_loss(&mut t, s, &labels).unwrap();
        t.value(l).item().unwrap()
    }

    #[test]
    fn sem_loss_uniform_is_ln_c() {
        for c in [2, 8, 13] {
            assert!((uniform_scores(c) - (c as f64).ln()).abs() < 1e-4);
        }
        assert!((uniform_scores(13) - 2.5649).abs() < 1e-4);
    }

    #[test]
    fn sem_loss_saturated_correct_is_zero() {
        let mut t = Tape::<f64>::new();
        let s = t.constant(Tensor::new(&[1, 3, 1, 2], vec![0.0, 1000.0, 1000.0, 0.0, 0.0, 0.0]).unwrap());
        let labels = LabelMask::new(1, 1, 2, vec![1, 0]).unwrap();
        let l = sem_loss(&mut t, s, &labels).unwrap();
        assert!(t.value(l).item().unwrap().abs() < 1e-12);
    }

    #[test]
    fn sem_loss_two_pixel_case() {
        // channel-major layout: channel 0 = (1, 3), channel 1 = (2, 0)
        let mut t = Tape::<f64>::new();
        let s = t.constant(Tensor::new(&[1, 2, 1, 2], vec![1.0, 3.0, 2.0, 0.0]).unwrap());
        let labels = LabelMask::new(1, 1, 2, vec![1, 1]).unwrap();
        let l = sem_loss(&mut t, s, &labels).unwrap();
        let p_first = 1.0 / (1.0 + (-1.0f64).exp()); // e^2/(e^1+e^2)
        let p_second = 1.0 / (1.0 + 3.0f64.exp());
        let expected = -(p_first.ln() + p_second.ln()) / 2.0;
        let got = t.value(l).item().unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.6814).abs() < 1e-3);
    }

    #[test]
    fn sem_loss_rejects_out_of_range_label() {
        let mut t = Tape::<f32>::new();
        let s = t.constant(Tensor::zeros(&[1, 2, 2, 2]));
        let labels = LabelMask::new(1, 2, 2, vec![0, 1, 2, 0]).unwrap();
        match sem_loss(&mut t, s, &labels) {
            Err(Error::Data(msg)) => assert!(msg.contains("pixel index 2"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn rec_loss_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::<f64>::uniform(&[1, 3, 4, 4], 0.0, 1.0, &mut r);
        let b = Tensor::<f64>::uniform(&[1, 3, 4, 4], 0.0, 1.0, &mut r);
        let mut t = Tape::new();
        let (av, bv) = (t.constant(a.clone()), t.constant(b.clone()));
        let same = rec_loss(&mut t, av, av).unwrap();
        assert_eq!(t.value(same).item().unwrap(), 0.0);
        let ab = rec_loss(&mut t, av, bv).unwrap();
        let ba = rec_loss(&mut t, bv, av).unwrap();
        let oracle: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 48.0;
        assert!((t.value(ab).item().unwrap() - oracle).abs() < 1e-6);
        assert_eq!(t.value(ab).item().unwrap(), t.value(ba).item().unwrap());

        let z = t.constant(Tensor::zeros(&[1, 3, 2, 2]));
        let h = t.constant(Tensor::full(&[1, 3, 2, 2], 0.5));
        let l = rec_loss(&mut t, z, h).unwrap();
        assert_eq!(t.value(l).item().unwrap(), 0.5);
        assert!(matches!(rec_loss(&mut t, z, av), Err(Error::Usage(_))));
    }

    #[test]
    fn gan_losses_at_indifference() {
        let mut t = Tape::<f64>::new();
        let real = t.constant(Tensor::zeros(&[2, 1, 4, 4]));
        let fake = t.constant(Tensor::zeros(&[2, 1, 4, 4]));
        let d = gan_d_loss(&mut t, real, fake).unwrap();
        let g = gan_g_loss(&mut t, fake, GanForm::NonSaturating).unwrap();
        assert!((t.value(d).item().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((t.value(g).item().unwrap() - 2f64.ln()).abs() < 1e-12);
        let mm = gan_g_loss(&mut t, fake, GanForm::Minimax).unwrap();
        assert!((t.value(mm).item().unwrap() + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gan_d_loss_for_perfect_discriminator() {
        let mut t = Tape::<f32>::new();
        let real = t.constant(Tensor::full(&[1, 1, 2, 2], 1e4));
        let fake = t.constant(Tensor::full(&[1, 1, 2, 2], -1e4));
        let d = gan_d_loss(&mut t, real, fake).unwrap();
        assert!(t.value(d).item().unwrap().abs() < 1e-6);
    }

    #[test]
    fn total_loss_arithmetic_and_toggles() {
        let mut t = Tape::<f64>::new();
        let s = t.leaf(Tensor::scalar(1.0).with_requires_grad(true));
        let r = t.leaf(Tensor::scalar(0.5).with_requires_grad(true));
        let g = t.leaf(Tensor::scalar(0.7).with_requires_grad(true));
        let all = LossTerms { sem: Some(s), rec: Some(r), gan: Some(g) };
        let tot = total_loss(&mut t, all, LossToggles::ALL, LossWeights::default()).unwrap();
        assert!((t.value(tot).item().unwrap() - 2.2).abs() < 1e-12);

        let unlabeled = LossTerms { sem: None, ..all };
        let tot = total_loss(&mut t, unlabeled, LossToggles::ALL, LossWeights::default()).unwrap();
        assert!((t.value(tot).item().unwrap() - 1.2).abs() < 1e-12);

        let no_gan = LossToggles { gan: false, ..LossToggles::ALL };
        let tot = total_loss(&mut t, all, no_gan, LossWeights::default()).unwrap();
        assert!((t.value(tot).item().unwrap() - 1.5).abs() < 1e-12);

        let none = LossToggles { sem: false, rec: false, gan: false };
        assert!(matches!(total_loss(&mut t, all, none, LossWeights::default()), Err(Error::Config(_))));
    }

    #[test]
    fn disabled_term_leaves_gradients_unchanged() {
        let grads = |with_gan_constructed: bool| {
            let mut t = Tape::<f64>::new();
            let x = t.leaf(Tensor::new(&[1, 1, 1, 3], vec![0.2, -0.4, 0.9]).unwrap().with_requires_grad(true));
            let sq = t.sigmoid(x).unwrap();
            let sem = t.mean(sq).unwrap();
            let rec = t.sum(x).unwrap();
            let gan = if with_gan_constructed { Some(gan_g_loss(&mut t, x, GanForm::NonSaturating).unwrap()) } else { None };
            let toggles = LossToggles { gan: false, ..LossToggles::ALL };
            let terms = LossTerms { sem: Some(sem), rec: Some(rec), gan };
            let tot = total_loss(&mut t, terms, toggles, LossWeights::default()).unwrap();
            t.backward(tot).unwrap();
            t.take_grad(x).unwrap()
        };
        let a = grads(true);
        let b = grads(false);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn losses_pass_gradient_check() {
        for seed in 0..5u64 {
            let mut r = ChaCha8Rng::seed_from_u64(300 + seed);
            let c = 2 + seed as usize % 4;
            let logits = Tensor::<f64>::uniform(&[1, c, 3, 4], -2.0, 2.0, &mut r);
            let labels = LabelMask::new(1, 3, 4, (0..12).map(|i| (i * 7 + seed as usize) % c).collect()).unwrap();
            let err = finite_diff_check(|t, v| sem_loss(t, v, &labels), &logits, 1e-4).unwrap();
            assert!(err < 1e-4, "sem seed {seed}: {err}");

            let recon = Tensor::<f64>::uniform(&[1, 3, 3, 3], 0.0, 1.0, &mut r);
            let target = Tensor::<f64>::uniform(&[1, 3, 3, 3], 0.0, 1.0, &mut r);
            let err = finite_diff_check(
                |t, v| {
                    let tv = t.constant(target.clone());
                    rec_loss(t, v, tv)
                },
                &recon,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "rec seed {seed}: {err}");

            let real = Tensor::<f64>::uniform(&[1, 1, 3, 3], -3.0, 3.0, &mut r);
            let fake = Tensor::<f64>::uniform(&[1, 1, 3, 3], -3.0, 3.0, &mut r);
            let err = finite_diff_check(
                |t, v| {
                    let fv = t.constant(fake.clone());
                    gan_d_loss(t, v, fv)
                },
                &real,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "gan_d (real) seed {seed}: {err}");
            let err = finite_diff_check(
                |t, v| {
                    let rv = t.constant(real.clone());
                    gan_d_loss(t, rv, v)
                },
                &fake,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "gan_d (fake) seed {seed}: {err}");
            for form in [GanForm::NonSaturating, GanForm::Minimax] {
                let err = finite_diff_check(|t, v| gan_g_loss(t, v, form), &fake, 1e-4).unwrap();
                assert!(err < 1e-4, "gan_g {form:?} seed {seed}: {err}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sem_loss_is_non_negative(vals in proptest::collection::vec(-20.0f64..20.0, 16), lab in proptest::collection::vec(0usize..4, 4)) {
                let mut t = Tape::<f64>::new();
                let s = t.constant(Tensor::new(&[1, 4, 2, 2], vals).unwrap());
                let l = sem_loss(&mut t, s, &LabelMask::new(1, 2, 2, lab).unwrap()).unwrap();
                prop_assert!(t.value(l).item().unwrap() >= 0.0);
            }

            #[test]
            fn rec_loss_symmetric(a in proptest::collection::vec(0.0f64..1.0, 12), b in proptest::collection::vec(0.0f64..1.0, 12)) {
                let mut t = Tape::<f64>::new();
                let av = t.constant(Tensor::new(&[1, 3, 2, 2], a).unwrap());
                let bv = t.constant(Tensor::new(&[1, 3, 2, 2], b).unwrap());
                let x = rec_loss(&mut t, av, bv).unwrap();
                let y = rec_loss(&mut t, bv, av).unwrap();
                let z = rec_loss(&mut t, av, av).unwrap();
                prop_assert_eq!(t.value(x).item().unwrap(), t.value(y).item().unwrap());
                prop_assert_eq!(t.value(z).item().unwrap(), 0.0);
            }
        }
    }
}
