//! Uniform grids and value functions sampled on them.

use std::fmt::Write as _;

use serde::Serialize;

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A uniform axis `min, min + step, …, min + (len − 1)·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    /// Symmetric axis `[−k·step, k·step]` with `k = ceil(halfwidth/step)`, so
    /// that 0 is a node.
    pub fn symmetric(halfwidth: f64, step: f64) -> Self {
        let k = (halfwidth / step - 1e-9).ceil().max(1.0) as usize;
        Self {
            min: -(k as f64) * step,
            step,
            len: 2 * k + 1,
        }
    }

    /// Axis `[0, k·step]` with `k = ceil(width/step)`.
    pub fn nonnegative(width: f64, step: f64) -> Self {
        let k = (width / step - 1e-9).ceil().max(1.0) as usize;
        Self { min: 0.0, step, len: k + 1 }
    }

    pub fn max(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.node(i))
    }

    /// Index of the node nearest to `x`, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.min) / self.step).round();
        i.clamp(0.0, (self.len - 1) as f64) as usize
    }

    /// Segment `(i, t)` for linear interpolation at `x`: the value is
    /// `(1 − t)·v[i] + t·v[i+1]`. Outside the axis the end segment is used
    /// with `t` outside `[0, 1]`, i.e. linear extrapolation.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let u = (x - self.min) / self.step;
        let last = self.len.saturating_sub(2) as f64;
        let i = u.floor().clamp(0.0, last);
        (i as usize, u - i)
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if self.len == 1 {
            return values[0];
        }
        let (i, t) = self.locate(x);
        (1.0 - t) * values[i] + t * values[i + 1]
    }
}

/// Values on a uniform grid: one axis for the state, an optional second axis
/// for the running maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub axis: Axis,
    pub max_axis: Option<Axis>,
    /// Row-major: `values[i_state * max_len + i_max]`.
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(axis: Axis, values: Vec<f64>) -> Self {
        assert_eq!(axis.len, values.len());
        Self {
            axis,
            max_axis: None,
            values,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(axis: Axis, f: F) -> Self {
        Self::new(axis, axis.nodes().map(f).collect())
    }

    pub fn grid_min(&self) -> f64 {
        self.axis.min
    }

    pub fn grid_max(&self) -> f64 {
        self.axis.max()
    }

    pub fn step(&self) -> f64 {
        self.axis.step
    }

    /// Linear interpolation (extrapolation outside the grid) on the state
    /// axis; for two-axis functions the running-max slice at node 0 is used.
    pub fn eval(&self, x: f64) -> f64 {
        match self.max_axis {
            None => self.axis.interpolate(&self.values, x),
            Some(m) => {
                let col: Vec<f64> = (0..self.axis.len).map(|i| self.values[i * m.len]).collect();
                self.axis.interpolate(&col, x)
            }
        }
    }

    /// Value at the node closest to `x`.
    pub fn at_node(&self, x: f64) -> f64 {
        let stride = self.max_axis.map_or(1, |m| m.len);
        self.values[self.axis.nearest(x) * stride]
    }

    /// `state,value` or `state,max,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.max_axis {
            None => {
                out.push_str("state,value\n");
                for (x, v) in self.axis.nodes().zip(&self.values) {
                    let _ = writeln!(out, "{},{}", fmt17(x), fmt17(*v));
                }
            }
            Some(m) => {
                out.push_str("state,max,value\n");
                for i in 0..self.axis.len {
                    for j in 0..m.len {
                        let _ = writeln!(
                            out,
                            "{},{},{}",
                            fmt17(self.axis.node(i)),
                            fmt17(m.node(j)),
                            fmt17(self.values[i * m.len + j])
                        );
                    }
                }
            }
        }
        out
    }

    /// `x,u` rows for a G-heat time slice.
    pub fn to_csv_xu(&self) -> String {
        let mut out = String::from("x,u\n");
        for (x, v) in self.axis.nodes().zip(&self.values) {
            let _ = writeln!(out, "{},{}", fmt17(x), fmt17(*v));
        }
        out
    }
}
