use std::sync::Arc;

use super::simulate::PriceTrajectory;
use crate::error::{Error, Result};

/// Fixed-length price windows of `n_steps + 1` points, the training set.
///
/// Windows are views into shared source series, so overlapping windows cut
/// from one long trajectory cost one index each.
#[derive(Debug, Clone)]
pub struct WindowSet {
    source: Arc<[f64]>,
    starts: Vec<usize>,
    n_steps: usize,
    dt: f64,
}

impl WindowSet {
    /// Builds a set from explicit windows, each of which must hold
    /// `n_steps + 1` positive prices.
    pub fn from_windows(windows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Size("window set is empty".into()))?;
        if first.len() < 2 {
            return Err(Error::Size("windows need at least 2 prices".into()));
        }
        let width = first.len();
        let mut source = Vec::with_capacity(width * windows.len());
        let mut starts = Vec::with_capacity(windows.len());
        for (j, w) in windows.iter().enumerate() {
            if w.len() != width {
                return Err(Error::Size(format!(
                    "window {j} has {} prices, expected {width}",
                    w.len()
                )));
            }
            if let Some(p) = w.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
                return Err(Error::Domain(format!(
                    "window {j} holds non-positive price {p}"
                )));
            }
            starts.push(source.len());
            source.extend_from_slice(w);
        }
        Self::check_dt(dt)?;
        Ok(Self {
            source: source.into(),
            starts,
            n_steps: width - 1,
            dt,
        })
    }

    /// Every independent path becomes one window.
    pub fn from_trajectories(paths: &[PriceTrajectory]) -> Result<Self> {
        let dt = paths
            .first()
            .ok_or_else(|| Error::Size("no trajectories".into()))?
            .dt();
        if paths.iter().any(|p| p.dt() != dt) {
            return Err(Error::Size("trajectories have different time steps".into()));
        }
        let windows: Vec<Vec<f64>> = paths.iter().map(|p| p.prices().to_vec()).collect();
        Self::from_windows(&windows, dt)
    }

    fn check_dt(dt: f64) -> Result<()> {
        if dt > 0.0 && dt.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )))
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Window length in years, `n_steps * dt`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Concatenated storage the windows point into.
    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Offset of every window's head in [`WindowSet::source`].
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn window(&self, j: usize) -> &[f64] {
        let s = self.starts[j];
        &self.source[s..s + self.n_steps + 1]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |j| self.window(j))
    }

    /// First price of every window; their empirical law is the initial-price
    /// distribution the learners see.
    pub fn heads(&self) -> Vec<f64> {
        self.starts.iter().map(|&s| self.source[s]).collect()
    }

    /// Windows at the given indices, sharing storage with `self`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Size("window subset is empty".into()));
        }
        let starts = indices
            .iter()
            .map(|&j| {
                self.starts.get(j).copied().ok_or_else(|| {
                    Error::Size(format!("window index {j} out of range ({})", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source: Arc::clone(&self.source),
            starts,
            n_steps: self.n_steps,
            dt: self.dt,
        })
    }

    /// Union of several sets with the same window length and time step.
    pub fn concat(sets: &[WindowSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Size("nothing to concatenate".into()))?;
        let mut source = Vec::new();
        let mut starts = Vec::new();
        for set in sets {
            if set.n_steps != first.n_steps || set.dt != first.dt {
                return Err(Error::Size(
                    "window sets differ in length or time step".into(),
                ));
            }
            let offset = source.len();
            source.extend_from_slice(&set.source);
            starts.extend(set.starts.iter().map(|s| s + offset));
        }
        Ok(Self {
            source: source.into(),
            starts,
            n_steps: first.n_steps,
            dt: first.dt,
        })
    }
}

/// Windows of `n_steps + 1` prices starting at `0, stride, 2*stride, ...`.
pub fn extract_windows(traj: &PriceTrajectory, n_steps: usize, stride: usize) -> Result<WindowSet> {
    if n_steps == 0 || stride == 0 {
        return Err(Error::Size("n_steps and stride must be at least 1".into()));
    }
    let len = traj.len();
    if len < n_steps + 1 {
        return Err(Error::Size(format!(
            "trajectory of {len} prices is too short for windows of {} prices",
            n_steps + 1
        )));
    }
    let count = (len - n_steps - 1) / stride + 1;
    Ok(WindowSet {
        source: traj.prices().into(),
        starts: (0..count).map(|j| j * stride).collect(),
        n_steps,
        dt: traj.dt(),
    })
}

/// Number of steps per window for a nominal maturity: `round(maturity / dt)`.
pub fn steps_for_maturity(maturity: f64, dt: f64) -> Result<usize> {
    let n = (maturity / dt).round();
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Size(format!(
            "maturity {maturity} is shorter than half a step of {dt}"
        )));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> PriceTrajectory {
        PriceTrajectory::new((0..n).map(|i| 1.0 + i as f64).collect(), 3e-3).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(extract_windows(&ramp(100), 33, 1).unwrap().len(), 67);
        assert_eq!(extract_windows(&ramp(34), 33, 1).unwrap().len(), 1);
        assert!(matches!(
            extract_windows(&ramp(33), 33, 1),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn stride_equal_to_length_partitions() {
        let t = ramp(100);
        let w = extract_windows(&t, 33, 33).unwrap();
        assert_eq!(w.len(), 3);
        for j in 1..w.len() {
            // windows share only the boundary point
            assert_eq!(w.window(j - 1).last(), w.window(j).first());
        }
        assert_eq!(w.heads(), vec![1.0, 34.0, 67.0]);
    }

    #[test]
    fn stride_one_heads_reproduce_prefix() {
        let t = ramp(50);
        let w = extract_windows(&t, 10, 1).unwrap();
        assert_eq!(w.heads(), t.prices()[..w.len()].to_vec());
        assert!(w.iter().all(|x| x.len() == 11));
    }

    #[test]
    fn subset_and_concat() {
        let w = extract_windows(&ramp(50), 10, 1).unwrap();
        let s = w.subset(&[3, 0]).unwrap();
        assert_eq!(s.heads(), vec![4.0, 1.0]);
        let c = WindowSet::concat(&[s.clone(), s]).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.window(2), w.window(3));
        assert!(w.subset(&[99]).is_err());
    }

    #[test]
    fn maturity_rounding() {
        assert_eq!(steps_for_maturity(0.1, 3e-3).unwrap(), 33);
    }
}
