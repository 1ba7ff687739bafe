//! Locally-biased DIRECT (DIviding RECTangles) for box-constrained,
//! derivative-free global minimisation.
//!
//! The box is rescaled to the unit cube. Each cell is sampled at its centre
//! and trisected along its longest sides. A cell's measure is its longest
//! side, `3^-min(level)`. Every iteration divides the potentially optimal
//! cells: the lower-right convex hull of `(measure, f)`, keeping at most one
//! cell per measure class.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Minimum improvement of the incumbent over `stall_iters` iterations.
    pub f_tol: f64,
    pub max_evals: usize,
    pub max_iters: usize,
    /// Slack in the potential-optimality test.
    pub epsilon: f64,
    pub stall_iters: usize,
}

impl DirectConfig {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        DirectConfig {
            lo,
            hi,
            f_tol: 1e-6,
            max_evals: 1000,
            max_iters: 1000,
            epsilon: 1e-4,
            stall_iters: 50,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::param(format!(
                "bounds need matching non-empty lo/hi, got {} and {}",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::param(format!("invalid bound [{l}, {h}]")));
            }
        }
        if !(self.f_tol > 0.0) {
            return Err(Error::param("f_tol must be > 0"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::param("epsilon must be >= 0"));
        }
        if self.max_evals == 0 {
            return Err(Error::param("max_evals must be >= 1"));
        }
        if self.stall_iters == 0 {
            return Err(Error::param("stall_iters must be >= 1"));
        }
        Ok(())
    }

    pub fn to_box(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (l, h))| l + u * (h - l))
            .collect()
    }
}

/// Search cell in normalised coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    pub center: Vec<f64>,
    /// Trisection depth per dimension: side `d` has length `3^-levels[d]`.
    pub levels: Vec<u32>,
    pub f_center: f64,
    /// Insertion order, used for tie-breaking.
    pub index: usize,
}

impl HyperRect {
    pub fn root(dim: usize, f_center: f64) -> Self {
        HyperRect {
            center: vec![0.5; dim],
            levels: vec![0; dim],
            f_center,
            index: 0,
        }
    }

    /// Measure class: depth of the longest side.
    pub fn class(&self) -> u32 {
        *self.levels.iter().min().expect("non-empty rect")
    }

    pub fn measure(&self) -> f64 {
        3f64.powi(-(self.class() as i32))
    }

    pub fn side(&self, d: usize) -> f64 {
        3f64.powi(-(self.levels[d] as i32))
    }

    pub fn volume(&self) -> f64 {
        (0..self.levels.len()).map(|d| self.side(d)).product()
    }
}

/// Indices (into `rects`) of the potentially optimal cells, largest measure
/// first.
///
/// Cell `j` qualifies if some rate `K > 0` puts it on the lower-right hull,
/// `f_j - K d_j <= f_i - K d_i` for all class representatives `i`, and the
/// predicted gain beats the incumbent by the slack:
/// `f_j - K d_j <= f_min - epsilon |f_min|`.
pub fn select_potentially_optimal(rects: &[HyperRect], f_min: f64, epsilon: f64) -> Vec<usize> {
    if rects.is_empty() {
        return Vec::new();
    }
    // One representative per class: lowest f, then oldest.
    let mut reps: Vec<usize> = Vec::new();
    let mut sorted: Vec<usize> = (0..rects.len()).collect();
    sorted.sort_by(|&a, &b| {
        let (ra, rb) = (&rects[a], &rects[b]);
        ra.class()
            .cmp(&rb.class())
            .then(ra.f_center.total_cmp(&rb.f_center))
            .then(ra.index.cmp(&rb.index))
    });
    for &i in &sorted {
        if reps.last().is_none_or(|&r| rects[r].class() != rects[i].class()) {
            reps.push(i);
        }
    }
    // reps is ordered by increasing class, i.e. decreasing measure.
    let mut selected = Vec::new();
    for (pos, &j) in reps.iter().enumerate() {
        let (dj, fj) = (rects[j].measure(), rects[j].f_center);
        if !fj.is_finite() {
            continue;
        }
        let larger = &reps[..pos];
        let smaller = &reps[pos + 1..];
        let k_low = smaller
            .iter()
            .map(|&i| (fj - rects[i].f_center) / (dj - rects[i].measure()))
            .fold(f64::NEG_INFINITY, f64::max);
        let k_high = larger
            .iter()
            .map(|&i| (rects[i].f_center - fj) / (rects[i].measure() - dj))
            .fold(f64::INFINITY, f64::min);
        if k_low > k_high || k_high <= 0.0 {
            continue;
        }
        if k_high.is_finite() && fj - k_high * dj > f_min - epsilon * f_min.abs() {
            continue;
        }
        selected.push(j);
    }
    selected
}

/// Result of dividing one cell.
#[derive(Debug, Clone)]
pub struct Trisection {
    /// The centre cell, shrunk along every split dimension; keeps its value.
    pub parent: HyperRect,
    pub children: Vec<HyperRect>,
    pub evals: usize,
}

/// Splits `rect` along all of its longest sides.
///
/// Both neighbours `c +- side/3 e_d` are sampled for each such dimension; the
/// dimensions are then divided in order of their best sample, so the cells
/// holding the best values keep the largest sides. Children get insertion
/// indices from `next_index` onward.
pub fn trisect(rect: &HyperRect, next_index: usize, mut eval: impl FnMut(&[f64]) -> f64) -> Trisection {
    let class = rect.class();
    let dims: Vec<usize> = (0..rect.levels.len()).filter(|&d| rect.levels[d] == class).collect();
    let delta = rect.side(dims[0]) / 3.0;
    let mut samples = Vec::with_capacity(dims.len());
    for &d in &dims {
        let mut lo = rect.center.clone();
        lo[d] -= delta;
        let mut hi = rect.center.clone();
        hi[d] += delta;
        let f_lo = eval(&lo);
        let f_hi = eval(&hi);
        samples.push((d, lo, f_lo, hi, f_hi));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        let wa = samples[a].2.min(samples[a].4);
        let wb = samples[b].2.min(samples[b].4);
        wa.total_cmp(&wb).then(samples[a].0.cmp(&samples[b].0))
    });
    let mut parent = rect.clone();
    let mut children = Vec::with_capacity(2 * dims.len());
    let mut index = next_index;
    for &o in &order {
        let (d, ref lo, f_lo, ref hi, f_hi) = samples[o];
        parent.levels[d] += 1;
        for (center, f_center) in [(lo, f_lo), (hi, f_hi)] {
            children.push(HyperRect {
                center: center.clone(),
                levels: parent.levels.clone(),
                f_center,
                index,
            });
            index += 1;
        }
    }
    Trisection {
        parent,
        children,
        evals: 2 * dims.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEvals,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub evals: usize,
    pub best_value: f64,
    pub best_point: Vec<f64>,
    /// Evaluations so far whose objective was NaN (scored `+inf`).
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evals: usize,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
}

struct Search<'a, F> {
    cfg: &'a DirectConfig,
    objective: F,
    evals: usize,
    flagged: usize,
    best_value: f64,
    best_point: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Search<'_, F> {
    fn eval_box(&mut self, x: &[f64]) -> f64 {
        let mut f = (self.objective)(x);
        self.evals += 1;
        if f.is_nan() {
            self.flagged += 1;
            f = f64::INFINITY;
        }
        if f < self.best_value {
            self.best_value = f;
            self.best_point = x.to_vec();
        }
        f
    }

    fn eval_unit(&mut self, u: &[f64]) -> f64 {
        let x = self.cfg.to_box(u);
        self.eval_box(&x)
    }

    fn row(&self, iter: usize) -> TraceRow {
        TraceRow {
            iter,
            evals: self.evals,
            best_value: self.best_value,
            best_point: self.best_point.clone(),
            flagged: self.flagged,
        }
    }
}

/// Minimises `objective` over the configured box.
///
/// `init` is evaluated first and seeds the incumbent; the search itself starts
/// from the box centre. Stops when `max_evals` would be exceeded, after
/// `max_iters` iterations, or when the incumbent improved by less than `f_tol`
/// over the last `stall_iters` iterations.
pub fn minimize(objective: impl FnMut(&[f64]) -> f64, cfg: &DirectConfig, init: &[f64]) -> Result<DirectResult> {
    cfg.validate()?;
    if init.len() != cfg.dim() {
        return Err(Error::param(format!(
            "init has {} components for a {}-dimensional box",
            init.len(),
            cfg.dim()
        )));
    }
    if init.iter().zip(cfg.lo.iter().zip(&cfg.hi)).any(|(x, (l, h))| !(x >= l && x <= h)) {
        return Err(Error::param(format!("init {init:?} outside bounds")));
    }
    let mut s = Search {
        cfg,
        objective,
        evals: 0,
        flagged: 0,
        best_value: f64::INFINITY,
        best_point: init.to_vec(),
    };
    s.eval_box(init);
    let mut trace = vec![];
    let finish = |s: Search<'_, _>, trace: Vec<TraceRow>, iterations, stop| DirectResult {
        best_point: s.best_point,
        best_value: s.best_value,
        evals: s.evals,
        iterations,
        trace,
        stop,
    };
    if s.evals >= cfg.max_evals {
        trace.push(s.row(0));
        return Ok(finish(s, trace, 0, StopReason::MaxEvals));
    }
    let root_f = s.eval_unit(&vec![0.5; cfg.dim()]);
    let mut rects = vec![HyperRect::root(cfg.dim(), root_f)];
    trace.push(s.row(0));
    let mut history = vec![s.best_value];

    for iter in 1..=cfg.max_iters {
        let selected = select_potentially_optimal(&rects, s.best_value, cfg.epsilon);
        let mut out_of_budget = false;
        for j in selected {
            let splits = rects[j].levels.iter().filter(|&&l| l == rects[j].class()).count();
            if s.evals + 2 * splits > cfg.max_evals {
                out_of_budget = true;
                break;
            }
            let next = rects.len();
            let t = trisect(&rects[j], next, |u| s.eval_unit(u));
            rects[j] = t.parent;
            rects.extend(t.children);
        }
        trace.push(s.row(iter));
        history.push(s.best_value);
        if out_of_budget || s.evals >= cfg.max_evals {
            return Ok(finish(s, trace, iter, StopReason::MaxEvals));
        }
        if history.len() > cfg.stall_iters {
            let then = history[history.len() - 1 - cfg.stall_iters];
            if then - s.best_value < cfg.f_tol {
                return Ok(finish(s, trace, iter, StopReason::Stalled));
            }
        }
    }
    Ok(finish(s, trace, cfg.max_iters, StopReason::MaxIters))
}

/// `iter,evals,best_value,x_1..x_n,flagged` rows.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = trace.first().map_or(0, |r| r.best_point.len());
    let mut header = vec!["iter".to_string(), "evals".to_string(), "best_value".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("flagged".to_string());
    w.write_record(&header)?;
    for r in trace {
        let mut rec = vec![r.iter.to_string(), r.evals.to_string(), r.best_value.to_string()];
        rec.extend(r.best_point.iter().map(|v| v.to_string()));
        rec.push(r.flagged.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(levels: Vec<u32>, f: f64, index: usize) -> HyperRect {
        HyperRect {
            center: vec![0.5; levels.len()],
            levels,
            f_center: f,
            index,
        }
    }

    #[test]
    fn single_rect_is_selected() {
        let r = vec![rect(vec![0], 3.0, 0)];
        assert_eq!(select_potentially_optimal(&r, 3.0, 1e-4), vec![0]);
    }

    #[test]
    fn one_per_measure_class() {
        let r = vec![rect(vec![1], 2.0, 0), rect(vec![1], 1.0, 1)];
        assert_eq!(select_potentially_optimal(&r, 1.0, 1e-4), vec![1]);
        let tie = vec![rect(vec![1], 1.0, 0), rect(vec![1], 1.0, 1)];
        assert_eq!(select_potentially_optimal(&tie, 1.0, 1e-4), vec![0]);
    }

    #[test]
    fn root_trisection_in_one_dimension() {
        let root = HyperRect::root(1, 0.0);
        let mut calls = Vec::new();
        let t = trisect(&root, 1, |u| {
            calls.push(u[0]);
            u[0]
        });
        assert_eq!(t.evals, 2);
        assert_eq!(calls.len(), 2);
        assert!((calls[0] - 1.0 / 6.0).abs() < 1e-15 && (calls[1] - 5.0 / 6.0).abs() < 1e-15);
        for r in std::iter::once(&t.parent).chain(&t.children) {
            assert!((r.side(0) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(t.parent.f_center, 0.0);
    }

    #[test]
    fn trisection_accounting_and_volume() {
        let mut r = HyperRect::root(3, 1.0);
        r.levels = vec![1, 1, 2];
        r.center = vec![0.5, 0.5, 0.5];
        let t = trisect(&r, 10, |u| u.iter().map(|v| (v - 0.3).powi(2)).sum());
        assert_eq!(t.evals, 4);
        assert_eq!(t.children.len(), 4);
        let total: f64 = t.parent.volume() + t.children.iter().map(|c| c.volume()).sum::<f64>();
        assert!((total - r.volume()).abs() < 1e-12);
        assert_eq!(t.children.iter().map(|c| c.index).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let cfg = DirectConfig::new(vec![1.0], vec![0.0]);
        assert!(minimize(|x| x[0], &cfg, &[0.5]).is_err());
        let cfg = DirectConfig::new(vec![0.0], vec![1.0]);
        assert!(minimize(|x| x[0], &cfg, &[2.0]).is_err());
    }

    #[test]
    fn nan_objective_is_flagged_not_fatal() {
        let mut cfg = DirectConfig::new(vec![0.0], vec![1.0]);
        cfg.max_evals = 60;
        let r = minimize(|x| if x[0] > 0.6 { f64::NAN } else { (x[0] - 0.2).powi(2) }, &cfg, &[0.5]).unwrap();
        assert!(r.trace.last().unwrap().flagged > 0);
        assert!((r.best_point[0] - 0.2).abs() < 1e-2);
    }

    #[test]
    fn trace_csv_layout() {
        let mut cfg = DirectConfig::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        cfg.max_iters = 2;
        let r = minimize(|x| x[0] + x[1], &cfg, &[1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,evals,best_value,x_1,x_2,flagged\n"));
        assert_eq!(text.lines().count(), 1 + r.trace.len());
    }
}
