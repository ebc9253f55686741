//! Small numeric helpers shared across modules.

/// Kahan–Babuška–Neumaier compensated summation.
///
/// Loss terms are means over pixel or instance sets; plain left-to-right
/// accumulation drifts by several ulp, which is enough to break the
/// replication-invariance contracts. Compensated accumulation keeps
/// `mean(n copies of x) == x` bitwise for the set sizes used here.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Start offsets for `patch`-sized windows over an extent. Offsets step by
/// `stride`; when the last full-stride window would not reach the border,
/// one extra offset is clamped so the final window ends exactly at the
/// border (it may overlap its predecessor).
pub fn patch_offsets(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    assert!(patch <= extent, "patch {patch} exceeds extent {extent}");
    assert!(stride >= 1, "stride must be >= 1");
    let last = extent - patch;
    let mut offsets: Vec<usize> = (0..=last).step_by(stride).collect();
    if *offsets.last().expect("at least offset 0") != last {
        offsets.push(last);
    }
    offsets
}

/// Mean with compensated accumulation; `None` for an empty iterator.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut acc = NeumaierSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(acc.total() / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_identical_values_is_exact() {
        let x = std::f64::consts::LN_2;
        for n in [1usize, 7, 36, 100, 504, 1000] {
            let m = compensated_mean(std::iter::repeat(x).take(n)).unwrap();
            assert_eq!(m, x, "mean of {n} copies drifted");
        }
    }

    #[test]
    fn empty_mean_is_none() {
        assert!(compensated_mean(std::iter::empty()).is_none());
    }

    #[test]
    fn compensation_beats_naive_on_mixed_magnitudes() {
        let mut acc = NeumaierSum::new();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.total(), 1.0);
    }

    #[test]
    fn offsets_clamp_to_border() {
        // 5000 with 300/300: 0, 300, ..., 4500, then clamped 4700.
        let offs = patch_offsets(5000, 300, 300);
        assert_eq!(offs.len(), 17);
        assert_eq!(*offs.last().unwrap(), 4700);
        assert_eq!(offs[15], 4500);

        // Exact fit: single offset.
        assert_eq!(patch_offsets(300, 300, 300), vec![0]);

        // Coverage: union of windows is the whole extent.
        let offs = patch_offsets(37, 10, 7);
        let mut covered = vec![false; 37];
        for &o in &offs {
            for i in o..o + 10 {
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&v| v));
        assert_eq!(*offs.last().unwrap(), 27);
    }
}
