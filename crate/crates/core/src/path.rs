//! Right-continuous step paths and continuous piecewise-linear paths.

/// A right-continuous step function given by strictly increasing event times
/// and the value holding from each time (inclusive) to the next (exclusive).
/// `times[0]` is the start of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len(), "times and values must align");
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]), "times must strictly increase");
        Self { times, values }
    }

    pub fn empty() -> Self {
        Self { times: Vec::new(), values: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Value of the latest event at or before `t`. Panics when `t` precedes
    /// the domain.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&u| u <= t);
        assert!(idx > 0, "evaluation at {t} precedes the path domain");
        self.values[idx - 1]
    }

    /// Supremum over `[a, b]` (both clamped into the domain); single pass
    /// over the overlapping segments.
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        assert!(a <= b);
        let first = self.times.partition_point(|&u| u <= a).saturating_sub(1);
        let mut best = f64::NEG_INFINITY;
        for i in first..self.times.len() {
            if self.times[i] > b {
                break;
            }
            best = best.max(self.values[i]);
        }
        best
    }

    /// Running infimum: at each event time, the minimum value seen so far.
    pub fn running_inf(&self) -> Vec<f64> {
        let mut acc = f64::INFINITY;
        self.values
            .iter()
            .map(|&v| {
                acc = acc.min(v);
                acc
            })
            .collect()
    }
}

/// A continuous piecewise-linear path (used for cumulative busy time);
/// breakpoints with linear interpolation in between, constant extrapolation
/// after the last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self { times, values }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        assert!(!self.times.is_empty());
        let idx = self.times.partition_point(|&u| u <= t);
        if idx == 0 {
            assert!(t >= self.times[0], "evaluation at {t} precedes the path domain");
            return self.values[0];
        }
        if idx == self.times.len() {
            return self.values[idx - 1];
        }
        let (t0, v0) = (self.times[idx - 1], self.values[idx - 1]);
        let (t1, v1) = (self.times[idx], self.values[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Slope of the segment holding immediately after `t`.
    pub fn slope_after(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&u| u <= t);
        if idx == 0 || idx >= self.times.len() {
            return 0.0;
        }
        let (t0, v0) = (self.times[idx - 1], self.values[idx - 1]);
        let (t1, v1) = (self.times[idx], self.values[idx]);
        (v1 - v0) / (t1 - t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_eval_is_right_continuous() {
        let p = StepPath::new(vec![0.0, 1.0, 2.0], vec![5.0, 7.0, 3.0]);
        assert_eq!(p.eval(0.0), 5.0);
        assert_eq!(p.eval(0.999), 5.0);
        assert_eq!(p.eval(1.0), 7.0);
        assert_eq!(p.eval(1.5), 7.0);
        assert_eq!(p.eval(2.0), 3.0);
        assert_eq!(p.eval(100.0), 3.0);
    }

    #[test]
    fn step_sup_on_interval() {
        let p = StepPath::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 4.0, 2.0, 0.0]);
        assert_eq!(p.sup_on(0.0, 3.0), 4.0);
        assert_eq!(p.sup_on(1.5, 1.7), 4.0); // value holding on [1,2)
        assert_eq!(p.sup_on(2.0, 2.5), 2.0);
        assert_eq!(p.sup_on(2.5, 3.5), 2.0_f64.max(0.0));
    }

    #[test]
    fn running_inf_single_pass() {
        let p = StepPath::new(vec![0.0, 1.0, 2.0, 3.0], vec![2.0, -1.0, 5.0, -3.0]);
        assert_eq!(p.running_inf(), vec![2.0, -1.0, -1.0, -3.0]);
    }

    #[test]
    fn linear_eval_interpolates() {
        let b = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 1.0]);
        assert_eq!(b.eval(0.5), 0.5);
        assert_eq!(b.eval(1.0), 1.0);
        assert_eq!(b.eval(2.0), 1.0);
        assert_eq!(b.eval(10.0), 1.0);
        assert_eq!(b.slope_after(0.2), 1.0);
        assert_eq!(b.slope_after(1.5), 0.0);
    }
}
