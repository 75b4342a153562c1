//! Staircase Pareto frontier over (performance, fairness) pairs.
//!
//! Fairness is scored by its distance from parity, `|1 - y|`. The frontier routine follows
//! the published pseudocode step by step; [`dominance_oracle`] is an independent brute-force
//! filter used to check it.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svg::Scatter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Performance, e.g. accuracy.
    pub x: f64,
    /// Fairness, e.g. DIR.
    pub y: f64,
    pub model_id: usize,
}

impl ParetoPoint {
    pub fn new(x: f64, y: f64, model_id: usize) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Contract(format!("model {model_id} has non-finite scores ({x}, {y})")));
        }
        Ok(Self { x, y, model_id })
    }

    /// Distance of `y` from parity.
    pub fn gap(&self) -> f64 {
        (1.0 - self.y).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
    pub max_x: bool,
    pub max_y: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    BestFairness,
    BestPerformance,
    Knee,
}

fn sort_order(max_x: bool) -> impl Fn(&ParetoPoint, &ParetoPoint) -> Ordering {
    move |a, b| {
        let by_x = if max_x { b.x.total_cmp(&a.x) } else { a.x.total_cmp(&b.x) };
        by_x.then(a.gap().total_cmp(&b.gap()))
            .then(a.model_id.cmp(&b.model_id))
    }
}

fn check(points: &[ParetoPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Contract("Pareto frontier of an empty set".into()));
    }
    match points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
        Some(p) => Err(Error::Contract(format!("model {} has non-finite scores", p.model_id))),
        None => Ok(()),
    }
}

/// Sorts by `x` (descending when `max_x`), seeds the front with the first point and appends
/// each later point whose `|1 - y|` beats the last front point: smaller when `max_y`, larger
/// otherwise. Ties in `x` go to the smaller gap, then the smaller model id.
pub fn pareto_frontier(points: &[ParetoPoint], max_x: bool, max_y: bool) -> Result<ParetoFront> {
    check(points)?;
    let mut sorted = points.to_vec();
    sorted.sort_by(sort_order(max_x));
    let mut front = vec![sorted[0]];
    for p in &sorted {
        let last = front[front.len() - 1].gap();
        let improves = if max_y { p.gap() < last } else { p.gap() > last };
        if improves {
            front.push(*p);
        }
    }
    Ok(ParetoFront {
        points: front,
        max_x,
        max_y,
    })
}

/// Every point not dominated under (best `x`, smallest `|1 - y|`), in input order.
pub fn dominance_oracle(points: &[ParetoPoint], max_x: bool) -> Vec<ParetoPoint> {
    let better_x = |a: f64, b: f64| if max_x { a > b } else { a < b };
    let dominates = |a: &ParetoPoint, b: &ParetoPoint| {
        let no_worse = (a.x == b.x || better_x(a.x, b.x)) && a.gap() <= b.gap();
        no_worse && (better_x(a.x, b.x) || a.gap() < b.gap())
    };
    points
        .iter()
        .filter(|b| !points.iter().any(|a| dominates(a, b)))
        .copied()
        .collect()
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, policy: SelectionPolicy) -> Result<ParetoPoint> {
        select_model(self, policy)
    }

    /// `model_id,x,y,abs_gap` in front order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model_id", "x", "y", "abs_gap"])?;
        for p in &self.points {
            w.write_record([p.model_id.to_string(), p.x.to_string(), p.y.to_string(), p.gap().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Scatter of `(x, |1 - y|)` for all points with the front drawn as a line.
    pub fn render_svg(&self, all: &[ParetoPoint], selected: Option<&ParetoPoint>, title: &str, x_label: &str) -> String {
        let pts: Vec<(f64, f64)> = all.iter().map(|p| (p.x, p.gap())).collect();
        let line: Vec<(f64, f64)> = self.points.iter().map(|p| (p.x, p.gap())).collect();
        Scatter {
            title,
            x_label,
            y_label: "|1 - DIR|",
            points: &pts,
            line: &line,
            selected: selected.map(|p| (p.x, p.gap())),
        }
        .render()
    }
}

fn first_max_by(points: &[ParetoPoint], key: impl Fn(&ParetoPoint) -> f64) -> ParetoPoint {
    // Earliest front point wins ties.
    let mut best = points[0];
    for p in &points[1..] {
        if key(p) > key(&best) {
            best = *p;
        }
    }
    best
}

fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Picks one model from the front.
///
/// `Knee` maximizes min-max normalized performance minus normalized gap, both normalized over
/// the front.
pub fn select_model(front: &ParetoFront, policy: SelectionPolicy) -> Result<ParetoPoint> {
    check(&front.points)?;
    let sign = if front.max_x { 1.0 } else { -1.0 };
    let best = match policy {
        SelectionPolicy::BestFairness => first_max_by(&front.points, |p| -p.gap()),
        SelectionPolicy::BestPerformance => first_max_by(&front.points, |p| sign * p.x),
        SelectionPolicy::Knee => {
            let xs = front.points.iter().map(|p| sign * p.x);
            let (xl, xh) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            let gs = front.points.iter().map(ParetoPoint::gap);
            let (gl, gh) = gs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            first_max_by(&front.points, |p| normalize(sign * p.x, xl, xh) - normalize(p.gap(), gl, gh))
        }
    };
    Ok(best)
}
