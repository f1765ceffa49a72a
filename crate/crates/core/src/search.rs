//! Multilevel grid search with deterministic tie-breaking.
//!
//! A coarse exhaustive pass is followed by `levels` refinement passes, each
//! shrinking the step by `shrink` and scanning a window of ±2 previous steps
//! around the incumbent. The incumbent is always re-evaluated, so the best
//! value never decreases from one level to the next. Ties go to the first
//! candidate in ascending (lexicographic) order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

/// Half-width of a refinement window in units of the previous step.
pub const WINDOW_STEPS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coarse_step: f64,
    pub levels: usize,
    pub shrink: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid search grid: {0}")]
pub struct GridError(pub String);

impl SearchGrid {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        coarse_step: f64,
        levels: usize,
        shrink: f64,
    ) -> Result<Self, GridError> {
        let g = SearchGrid {
            lower,
            upper,
            coarse_step,
            levels,
            shrink,
        };
        g.validate()?;
        Ok(g)
    }

    /// One-dimensional grid.
    pub fn interval(lower: f64, upper: f64, coarse_step: f64, levels: usize, shrink: f64) -> Result<Self, GridError> {
        Self::new(vec![lower], vec![upper], coarse_step, levels, shrink)
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(GridError("bounds must be non-empty and of equal length".into()));
        }
        for (d, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(GridError(format!("dimension {d}: bounds [{lo}, {hi}] not ordered")));
            }
        }
        if !(self.coarse_step > 0.0 && self.coarse_step.is_finite()) {
            return Err(GridError(format!("coarse step {} must be positive", self.coarse_step)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(GridError(format!("shrink factor {} must lie in (0, 1)", self.shrink)));
        }
        Ok(())
    }

    /// Equivalent grid on integer sample indices of size `unit`: bounds are
    /// rounded inward and steps are whole samples (at least one).
    pub fn to_indices(&self, unit: f64) -> Result<IndexGrid, GridError> {
        self.validate()?;
        if self.dims() != 1 {
            return Err(GridError("index grids are one-dimensional".into()));
        }
        let lo = (self.lower[0] / unit - 1e-9).ceil() as i64;
        let hi = (self.upper[0] / unit + 1e-9).floor() as i64;
        if lo > hi {
            return Err(GridError(format!(
                "no sample of size {unit:e} lies in [{}, {}]",
                self.lower[0], self.upper[0]
            )));
        }
        Ok(IndexGrid {
            lower: lo,
            upper: hi,
            coarse_step: ((self.coarse_step / unit).round() as i64).max(1),
            levels: self.levels,
            shrink: self.shrink,
        })
    }
}

/// One-dimensional grid over integer indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexGrid {
    pub lower: i64,
    pub upper: i64,
    pub coarse_step: i64,
    pub levels: usize,
    pub shrink: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<P> {
    pub point: P,
    pub value: f64,
    pub boundary: bool,
    /// Best value after the coarse pass and after each refinement level.
    pub level_values: Vec<f64>,
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent || (incumbent.is_nan() && !candidate.is_nan())
}

/// Evaluates `points` in order and returns the index of the first maximum.
fn argmax<P, E, F>(points: &[P], f: &F, exec: Exec) -> Result<Option<(usize, f64)>, E>
where
    P: Sync,
    E: Send,
    F: Fn(&P) -> Result<f64, E> + Sync + Send,
{
    let values = exec.map(points, |p| f(p));
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if !better(v, b) => {}
            _ => best = Some((i, v)),
        }
    }
    Ok(best)
}

/// Multilevel search over integer indices.
pub fn search_indices<E, F>(grid: &IndexGrid, f: F, exec: Exec) -> Result<Option<SearchOutcome<i64>>, E>
where
    E: Send,
    F: Fn(&i64) -> Result<f64, E> + Sync + Send,
{
    let mut points: Vec<i64> = (grid.lower..=grid.upper).step_by(grid.coarse_step as usize).collect();
    if *points.last().unwrap() != grid.upper {
        points.push(grid.upper);
    }
    let Some((i, mut value)) = argmax(&points, &f, exec)? else {
        return Ok(None);
    };
    let mut point = points[i];
    let mut level_values = vec![value];
    let mut prev = grid.coarse_step;
    for level in 1..=grid.levels {
        if prev == 1 {
            break;
        }
        let step = ((grid.coarse_step as f64 * grid.shrink.powi(level as i32)).round() as i64).max(1);
        let half = (WINDOW_STEPS * prev as f64) as i64;
        let lo = (point - half).max(grid.lower);
        let hi = (point + half).min(grid.upper);
        let mut pts: Vec<i64> = Vec::new();
        let mut k = -(half / step);
        while point + k * step <= hi {
            let p = point + k * step;
            if p >= lo {
                pts.push(p);
            }
            k += 1;
        }
        if *pts.first().unwrap() != lo {
            pts.insert(0, lo);
        }
        if *pts.last().unwrap() != hi {
            pts.push(hi);
        }
        if let Some((j, v)) = argmax(&pts, &f, exec)? {
            // The incumbent is in `pts`, so `v >= value` unless ties pick an
            // earlier point with the same value.
            if better(v, value) || (v == value && pts[j] < point) {
                point = pts[j];
                value = v;
            }
        }
        level_values.push(value);
        prev = step;
    }
    Ok(Some(SearchOutcome {
        point,
        value,
        boundary: point == grid.lower || point == grid.upper,
        level_values,
    }))
}

/// Axis points `center + k·step` for `|k·step| <= half`; points beyond a
/// bound are replaced by the bound itself so edges remain reachable.
fn axis_points(center: f64, step: f64, half: f64, lower: f64, upper: f64) -> Vec<f64> {
    let n = (half / step + 1e-9).floor() as i64;
    let mut pts = Vec::with_capacity(2 * n as usize + 1);
    for k in -n..=n {
        let p = if k == 0 { center } else { center + k as f64 * step };
        pts.push(p.clamp(lower, upper));
    }
    pts.dedup();
    pts
}

fn coarse_axis(lower: f64, upper: f64, step: f64) -> Vec<f64> {
    let n = ((upper - lower) / step + 1e-9).floor() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|k| lower + k as f64 * step).collect();
    if upper - pts[n] > 1e-9 * step {
        pts.push(upper);
    } else {
        pts[n] = upper;
    }
    pts
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Multilevel search over a continuous box.
pub fn search_box<E, F>(grid: &SearchGrid, f: F, exec: Exec) -> Result<Option<SearchOutcome<Vec<f64>>>, E>
where
    E: Send,
    F: Fn(&Vec<f64>) -> Result<f64, E> + Sync + Send,
{
    let dims = grid.dims();
    let axes: Vec<Vec<f64>> = (0..dims)
        .map(|d| coarse_axis(grid.lower[d], grid.upper[d], grid.coarse_step))
        .collect();
    let points = cartesian(&axes);
    let Some((i, mut value)) = argmax(&points, &f, exec)? else {
        return Ok(None);
    };
    let mut point = points[i].clone();
    let mut level_values = vec![value];
    let mut prev = grid.coarse_step;
    for _ in 0..grid.levels {
        let step = prev * grid.shrink;
        let axes: Vec<Vec<f64>> = (0..dims)
            .map(|d| axis_points(point[d], step, WINDOW_STEPS * prev, grid.lower[d], grid.upper[d]))
            .collect();
        let pts = cartesian(&axes);
        if let Some((j, v)) = argmax(&pts, &f, exec)? {
            if better(v, value) || (v == value && pts[j] < point) {
                point = pts[j].clone();
                value = v;
            }
        }
        level_values.push(value);
        prev = step;
    }
    let boundary = (0..dims).any(|d| point[d] == grid.lower[d] || point[d] == grid.upper[d]);
    Ok(Some(SearchOutcome {
        point,
        value,
        boundary,
        level_values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn index_search_finds_integer_peak() {
        let g = IndexGrid {
            lower: -100,
            upper: 100,
            coarse_step: 20,
            levels: 3,
            shrink: 0.2,
        };
        let out = search_indices(
            &g,
            |&d| Ok::<_, Infallible>(-((d - 37) as f64).powi(2)),
            Exec::Sequential,
        )
        .unwrap()
        .unwrap();
        assert_eq!(out.point, 37);
        assert!(!out.boundary);
        assert!(out.level_values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn index_search_flags_boundary() {
        let g = IndexGrid {
            lower: 0,
            upper: 10,
            coarse_step: 3,
            levels: 2,
            shrink: 0.2,
        };
        let out = search_indices(&g, |&d| Ok::<_, Infallible>(d as f64), Exec::Sequential)
            .unwrap()
            .unwrap();
        assert_eq!(out.point, 10);
        assert!(out.boundary);
    }

    #[test]
    fn ties_go_to_smaller_point() {
        let g = IndexGrid {
            lower: 0,
            upper: 10,
            coarse_step: 1,
            levels: 0,
            shrink: 0.5,
        };
        let out = search_indices(&g, |_| Ok::<_, Infallible>(1.0), Exec::Sequential)
            .unwrap()
            .unwrap();
        assert_eq!(out.point, 0);
    }

    #[test]
    fn box_search_converges() {
        let g = SearchGrid::new(vec![0.0, 0.0, 0.0], vec![8.0, 8.0, 5.0], 0.25, 3, 0.2).unwrap();
        let target = [3.1234, 5.5, 0.77];
        let f = |p: &Vec<f64>| Ok::<_, Infallible>(-(0..3).map(|d| (p[d] - target[d]).powi(2)).sum::<f64>());
        let seq = search_box(&g, f, Exec::Sequential).unwrap().unwrap();
        let par = search_box(&g, f, Exec::Parallel).unwrap().unwrap();
        assert_eq!(seq, par);
        for d in 0..3 {
            assert!((seq.point[d] - target[d]).abs() <= 0.25 * 0.2f64.powi(3) / 2.0 + 1e-12);
        }
        assert!(seq.level_values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn coarse_axis_includes_upper() {
        assert_eq!(coarse_axis(0.0, 1.0, 0.3), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert_eq!(coarse_axis(0.0, 1.0, 0.25).last(), Some(&1.0));
    }

    #[test]
    fn grid_validation() {
        assert!(SearchGrid::interval(1.0, 0.0, 0.1, 1, 0.2).is_err());
        assert!(SearchGrid::interval(0.0, 1.0, 0.0, 1, 0.2).is_err());
        assert!(SearchGrid::interval(0.0, 1.0, 0.1, 1, 1.0).is_err());
        let ig = SearchGrid::interval(2.0, 10.0, 0.05, 3, 0.2)
            .unwrap()
            .to_indices(0.15)
            .unwrap();
        assert_eq!((ig.lower, ig.upper, ig.coarse_step), (14, 66, 1));
    }
}
