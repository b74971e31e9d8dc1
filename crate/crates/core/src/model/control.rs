use crate::error::ModelError;

/// Piecewise-constant, right-continuous control input.
///
/// `u(t) = values[k]` for `times[k] <= t < times[k + 1]`; before the first
/// sample the first value holds and after the last sample the last value holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    range: Vec<(f64, f64)>,
}

impl ControlSignal {
    pub fn new(
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        range: Vec<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        if times.is_empty() {
            return Err(ModelError::Control("signal needs at least one sample".into()));
        }
        if times.len() != values.len() {
            return Err(ModelError::Control(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::Control(
                "sample times must be finite and strictly increasing".into(),
            ));
        }
        for (k, v) in values.iter().enumerate() {
            if v.len() != range.len() {
                return Err(ModelError::DimensionMismatch {
                    expected: range.len(),
                    got: v.len(),
                });
            }
            for (vi, (lo, hi)) in v.iter().zip(&range) {
                if !(lo <= vi && vi <= hi) {
                    return Err(ModelError::Control(format!(
                        "sample {k} value {vi} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(Self {
            times,
            values,
            range,
        })
    }

    pub fn constant(value: Vec<f64>, range: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        Self::new(vec![0.0], vec![value], range)
    }

    /// Zero input on the given range (which must contain 0).
    pub fn zero(range: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        Self::constant(vec![0.0; range.len()], range)
    }

    /// Samples `f` at `t0, t0 + dt, ...` up to and including `t1`.
    pub fn sampled(
        f: impl Fn(f64) -> Vec<f64>,
        t0: f64,
        t1: f64,
        dt: f64,
        range: Vec<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        if !(dt > 0.0) || !(t1 >= t0) {
            return Err(ModelError::Control("need dt > 0 and t1 >= t0".into()));
        }
        let n = ((t1 - t0) / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, range)
    }

    pub fn dim(&self) -> usize {
        self.range.len()
    }

    pub fn range(&self) -> &[(f64, f64)] {
        &self.range
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t);
        &self.values[k.saturating_sub(1)]
    }

    /// Sum of l1 jump magnitudes. Exact for piecewise-constant signals since
    /// the supremum over partitions is attained on the jump set.
    pub fn total_variation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a).abs()).sum::<f64>())
            .sum()
    }

    /// Concatenates `other` after `self`; `other`'s samples must start after
    /// the last sample of `self`.
    pub fn concat(&self, other: &ControlSignal) -> Result<Self, ModelError> {
        if self.range != other.range {
            return Err(ModelError::Control("control ranges differ".into()));
        }
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::new(times, values, self.range.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_signal_has_zero_variation() {
        let u = ControlSignal::constant(vec![3.0, -1.0], vec![(-5.0, 5.0); 2]).unwrap();
        assert_eq!(u.total_variation(), 0.0);
    }

    #[test]
    fn jump_sum() {
        let u = ControlSignal::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0], vec![1.0], vec![0.0]],
            vec![(-1.0, 1.0)],
        )
        .unwrap();
        assert_eq!(u.total_variation(), 2.0);
    }

    #[test]
    fn sampled_cosine_variation() {
        let u = ControlSignal::sampled(
            |t| vec![t.cos()],
            0.0,
            4.0 * std::f64::consts::PI,
            1e-4,
            vec![(-1.0, 1.0)],
        )
        .unwrap();
        assert!((u.total_variation() - 8.0).abs() < 1e-3);
    }

    #[test]
    fn right_continuous_lookup() {
        let u = ControlSignal::new(
            vec![0.0, 1.0],
            vec![vec![0.0], vec![1.0]],
            vec![(0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(u.eval(-1.0), &[0.0]);
        assert_eq!(u.eval(0.999), &[0.0]);
        assert_eq!(u.eval(1.0), &[1.0]);
        assert_eq!(u.eval(7.0), &[1.0]);
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(ControlSignal::new(vec![], vec![], vec![]).is_err());
        assert!(ControlSignal::new(
            vec![0.0, 0.0],
            vec![vec![0.0], vec![0.0]],
            vec![(0.0, 1.0)]
        )
        .is_err());
        assert!(ControlSignal::constant(vec![2.0], vec![(0.0, 1.0)]).is_err());
    }

    fn signal(vals: Vec<f64>, t0: f64) -> ControlSignal {
        let times = (0..vals.len()).map(|k| t0 + k as f64).collect();
        ControlSignal::new(times, vals.into_iter().map(|v| vec![v]).collect(), vec![(-10.0, 10.0)])
            .unwrap()
    }

    proptest! {
        #[test]
        fn variation_is_subadditive(
            a in prop::collection::vec(-10.0f64..10.0, 1..20),
            b in prop::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let ua = signal(a.clone(), 0.0);
            let ub = signal(b, a.len() as f64 + 1.0);
            let joined = ua.concat(&ub).unwrap();
            let jump = (ub.values()[0][0] - ua.values().last().unwrap()[0]).abs();
            let lhs = joined.total_variation();
            prop_assert!(lhs <= ua.total_variation() + ub.total_variation() + jump + 1e-12);
            prop_assert!(lhs >= ua.total_variation().max(ub.total_variation()) - 1e-12);
        }

        #[test]
        fn variation_zero_iff_constant(vals in prop::collection::vec(-3i32..3, 1..10)) {
            let u = signal(vals.iter().map(|&v| v as f64).collect(), 0.0);
            let constant = vals.iter().all(|&v| v == vals[0]);
            prop_assert_eq!(u.total_variation() == 0.0, constant);
        }
    }
}
