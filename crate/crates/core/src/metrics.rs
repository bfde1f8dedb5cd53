//! Confusion-matrix metrics: mean per-class accuracy and mean IoU.
//!
//! Absent classes: a class with no ground-truth pixels is left out of the
//! accuracy mean. For IoU a class is left out only when it appears in
//! neither ground truth nor predictions, so a class that is only ever
//! predicted (false positives) scores 0 and counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i * classes + j]` = pixels of true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// Mean over scored classes plus the per-class values (`None` = excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub mean: f64,
    pub per_class: Vec<Option<f64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Shape(format!(
                "{} counts for {classes} classes",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one count per pixel at `[gt][pred]`.
    pub fn accumulate(&mut self, predicted: &[u8], truth: &[u8]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::Data(format!(
                "prediction has {} pixels, ground truth {}",
                predicted.len(),
                truth.len()
            )));
        }
        let c = self.classes;
        if let Some(i) = predicted.iter().chain(truth).position(|&v| v as usize >= c) {
            let which = if i < predicted.len() { "prediction" } else { "ground truth" };
            let idx = i % predicted.len().max(1);
            return Err(Error::Data(format!(
                "{which} pixel {idx} has class outside [0, {c})"
            )));
        }
        for (&p, &t) in predicted.iter().zip(truth) {
            self.counts[t as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape(format!(
                "merging {}-class and {}-class matrices",
                self.classes, other.classes
            )));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    pub fn per_class_accuracy(&self) -> Result<ClassScores> {
        let per_class: Vec<Option<f64>> = (0..self.classes)
            .map(|i| {
                let t = self.row_sum(i);
                (t > 0).then(|| self.get(i, i) as f64 / t as f64)
            })
            .collect();
        mean_of(per_class, "per-class accuracy")
    }

    pub fn mean_iou(&self) -> Result<ClassScores> {
        let per_class: Vec<Option<f64>> = (0..self.classes)
            .map(|i| {
                let n_ii = self.get(i, i);
                let union = self.row_sum(i) + self.col_sum(i) - n_ii;
                (union > 0).then(|| n_ii as f64 / union as f64)
            })
            .collect();
        mean_of(per_class, "mean IoU")
    }
}

fn mean_of(per_class: Vec<Option<f64>>, what: &str) -> Result<ClassScores> {
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::Data(format!("{what} undefined: no class has ground-truth pixels")));
    }
    Ok(ClassScores {
        mean: scored.iter().sum::<f64>() / scored.len() as f64,
        per_class,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// CSV with header `class,c_acc,m_iou`, an `Average` row, then one row per
/// class. Excluded classes have empty cells.
pub fn metrics_csv(class_names: &[String], acc: &ClassScores, iou: &ClassScores) -> String {
    let mut out = String::from("class,c_acc,m_iou\n");
    out.push_str(&format!("Average,{:.4},{:.4}\n", acc.mean, iou.mean));
    for (i, name) in class_names.iter().enumerate() {
        out.push_str(&format!(
            "{name},{},{}\n",
            fmt_opt(acc.per_class.get(i).copied().flatten()),
            fmt_opt(iou.per_class.get(i).copied().flatten())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction() {
        let mut cm = ConfusionMatrix::new(3);
        let m = [0u8, 1, 2, 2, 1, 0, 0];
        cm.accumulate(&m, &m).unwrap();
        assert_eq!((0..3).map(|i| cm.get(i, i)).sum::<u64>(), 7);
        assert_eq!(cm.per_class_accuracy().unwrap().mean, 1.0);
        assert_eq!(cm.mean_iou().unwrap().mean, 1.0);
        assert!(cm.per_class_accuracy().unwrap().per_class.iter().all(|v| *v == Some(1.0)));
    }

    #[test]
    fn four_pixel_hand_case() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert_eq!(cm.counts(), &[2, 1, 0, 1]);
        let acc = cm.per_class_accuracy().unwrap();
        assert_eq!(acc.per_class, vec![Some(2.0 / 3.0), Some(1.0)]);
        assert!((acc.mean - 5.0 / 6.0).abs() < 1e-12);
        assert!((acc.mean - 0.8333).abs() < 1e-4);
        let iou = cm.mean_iou().unwrap();
        assert_eq!(iou.per_class, vec![Some(2.0 / 3.0), Some(0.5)]);
        assert!((iou.mean - 7.0 / 12.0).abs() < 1e-12);
        assert!((iou.mean - 0.5833).abs() < 1e-4);
    }

    #[test]
    fn absent_class_rules() {
        let cm = ConfusionMatrix::from_counts(2, vec![4, 0, 0, 0]).unwrap();
        let acc = cm.per_class_accuracy().unwrap();
        assert_eq!(acc.per_class, vec![Some(1.0), None]);
        assert_eq!(acc.mean, 1.0);
        assert_eq!(cm.mean_iou().unwrap().mean, 1.0);

        // class 1 never true but predicted once: IoU 0, included
        let cm = ConfusionMatrix::from_counts(2, vec![3, 1, 0, 0]).unwrap();
        let iou = cm.mean_iou().unwrap();
        assert_eq!(iou.per_class, vec![Some(0.75), Some(0.0)]);
        assert!((iou.mean - 0.375).abs() < 1e-12);
        assert_eq!(cm.per_class_accuracy().unwrap().per_class[1], None);

        assert!(ConfusionMatrix::new(3).per_class_accuracy().is_err());
        assert!(ConfusionMatrix::new(3).mean_iou().is_err());
    }

    #[test]
    fn range_and_shape_violations() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(cm.accumulate(&[0, 1], &[0]).is_err());
        assert!(cm.accumulate(&[0, 2], &[0, 1]).is_err());
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn halves_merge_to_whole() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<u8> = (0..100).map(|_| r.gen_range(0..4)).collect();
        let t: Vec<u8> = (0..100).map(|_| r.gen_range(0..4)).collect();
        let mut whole = ConfusionMatrix::new(4);
        whole.accumulate(&p, &t).unwrap();
        let mut a = ConfusionMatrix::new(4);
        a.accumulate(&p[..37], &t[..37]).unwrap();
        let mut b = ConfusionMatrix::new(4);
        b.accumulate(&p[37..], &t[37..]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, whole);
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_counts(2, vec![2, 1, 0, 1]).unwrap();
        let names = vec!["unlabeled".to_string(), "road".to_string()];
        let csv = metrics_csv(&names, &cm.per_class_accuracy().unwrap(), &cm.mean_iou().unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,c_acc,m_iou");
        assert_eq!(lines[1], "Average,0.8333,0.5833");
        assert_eq!(lines[2], "unlabeled,0.6667,0.6667");
        assert_eq!(lines.len(), 4);
    }

    fn cm_strategy() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..6).prop_flat_map(|c| {
            proptest::collection::vec(0u64..20, c * c)
                .prop_filter("needs ground truth", |v| v.iter().any(|&x| x > 0))
                .prop_map(move |v| ConfusionMatrix::from_counts(c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn iou_never_exceeds_accuracy(cm in cm_strategy()) {
            let acc = cm.per_class_accuracy().unwrap();
            let iou = cm.mean_iou().unwrap();
            prop_assert!((0.0..=1.0).contains(&acc.mean));
            prop_assert!((0.0..=1.0).contains(&iou.mean));
            prop_assert!(iou.mean <= acc.mean + 1e-12);
        }

        #[test]
        fn invariant_under_class_permutation(cm in cm_strategy(), shift in 1usize..5) {
            let c = cm.classes();
            let perm: Vec<usize> = (0..c).map(|i| (i + shift) % c).collect();
            let mut counts = vec![0; c * c];
            for i in 0..c {
                for j in 0..c {
                    counts[perm[i] * c + perm[j]] = cm.get(i, j);
                }
            }
            let p = ConfusionMatrix::from_counts(c, counts).unwrap();
            prop_assert!((p.per_class_accuracy().unwrap().mean - cm.per_class_accuracy().unwrap().mean).abs() < 1e-12);
            prop_assert!((p.mean_iou().unwrap().mean - cm.mean_iou().unwrap().mean).abs() < 1e-12);
        }
    }
}
