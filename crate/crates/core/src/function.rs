//! Piecewise test functions `φ: ℝ → ℝ`.
//!
//! Every kind except [`PiecewiseFunction::Square`] and
//! [`PiecewiseFunction::Quadratic`] is piecewise linear with linear growth.
//! The quadratic kinds exist for exact second-moment checks and sit outside
//! the linear-growth class.
//!
//! Text grammar (see [`PiecewiseFunction::parse`]):
//!
//! ```text
//! abs | square | identity | tent(a,b) | call(k) | smoothstep(a,b,eps)
//!     | pwl:x0,y0;x1,y1;...;sl=<slope>,sr=<slope>
//!     | quad(c) | quad(c)+pwl:...
//! ```

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("ParseError at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn perr(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        offset,
        message: message.into(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("InvalidBreakpoints: {0}")]
    InvalidBreakpoints(String),
}

/// Continuous piecewise-linear function given by strictly increasing
/// breakpoints and the slopes of the two unbounded tails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>, left_slope: f64, right_slope: f64) -> Result<Self, FunctionError> {
        if points.is_empty() {
            return Err(FunctionError::InvalidBreakpoints("at least one breakpoint is required".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite())
            || !left_slope.is_finite()
            || !right_slope.is_finite()
        {
            return Err(FunctionError::InvalidBreakpoints("breakpoints and slopes must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(FunctionError::InvalidBreakpoints("breakpoints must be strictly increasing".into()));
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(Self {
            xs,
            ys,
            left_slope,
            right_slope,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            xs: vec![0.0],
            ys: vec![c],
            left_slope: 0.0,
            right_slope: 0.0,
        }
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn slopes(&self) -> (f64, f64) {
        (self.left_slope, self.right_slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.left_slope * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.right_slope * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&b| b <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| c * y).collect(),
            left_slope: c * self.left_slope,
            right_slope: c * self.right_slope,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut xs: Vec<f64> = self.xs.iter().chain(&other.xs).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys = xs.iter().map(|&x| self.eval(x) + other.eval(x)).collect();
        Self {
            xs,
            ys,
            left_slope: self.left_slope + other.left_slope,
            right_slope: self.right_slope + other.right_slope,
        }
    }

    /// Slopes of every linear piece including the tails.
    fn piece_slopes(&self) -> Vec<f64> {
        let mut s = vec![self.left_slope];
        for i in 0..self.xs.len() - 1 {
            s.push((self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]));
        }
        s.push(self.right_slope);
        s
    }

    fn render(&self) -> String {
        let pts: Vec<String> = self.breakpoints().map(|(x, y)| format!("{x},{y}")).collect();
        format!("pwl:{};sl={},sr={}", pts.join(";"), self.left_slope, self.right_slope)
    }
}

/// Test function used by the dynamic program, the G-heat solver and the
/// closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PiecewiseFunction {
    /// `|x|`
    Abs,
    /// Hat function on `[a, b]` peaking at the midpoint with value 1.
    Tent { a: f64, b: f64 },
    /// `x²`
    Square,
    /// `(x − strike)⁺`
    Call { strike: f64 },
    /// Equal to 1 on `[a, b]`, ramping linearly to 0 over a width `eps` on
    /// each side; `a`/`b` may be infinite for half-lines.
    Smoothstep { a: f64, b: f64, eps: f64 },
    Custom(PiecewiseLinear),
    /// `coef·x² + linear(x)`
    Quadratic { coef: f64, linear: PiecewiseLinear },
}

impl PiecewiseFunction {
    pub fn identity() -> Self {
        Self::Custom(PiecewiseLinear {
            xs: vec![0.0],
            ys: vec![0.0],
            left_slope: 1.0,
            right_slope: 1.0,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::Custom(PiecewiseLinear::constant(c))
    }

    pub fn tent(a: f64, b: f64) -> Self {
        Self::Tent { a, b }
    }

    pub fn smoothstep(a: f64, b: f64, eps: f64) -> Self {
        Self::Smoothstep { a, b, eps }
    }

    /// `x ↦ inf_{y ∈ [lo, hi]} |x − y|`.
    pub fn distance_to_interval(lo: f64, hi: f64) -> Self {
        let points = if hi > lo { vec![(lo, 0.0), (hi, 0.0)] } else { vec![(lo, 0.0)] };
        Self::Custom(PiecewiseLinear::new(points, -1.0, 1.0).expect("ordered interval"))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Abs => x.abs(),
            Self::Square => x * x,
            Self::Call { strike } => (x - strike).max(0.0),
            Self::Quadratic { coef, linear } => coef * x * x + linear.eval(x),
            Self::Custom(p) => p.eval(x),
            Self::Tent { .. } | Self::Smoothstep { .. } => self.to_pwl().expect("linear kind").eval(x),
        }
    }

    /// Piecewise-linear representation, `None` for the quadratic kinds.
    pub fn to_pwl(&self) -> Option<PiecewiseLinear> {
        let pwl = |pts: Vec<(f64, f64)>, sl: f64, sr: f64| PiecewiseLinear {
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
            left_slope: sl,
            right_slope: sr,
        };
        Some(match self {
            Self::Abs => pwl(vec![(0.0, 0.0)], -1.0, 1.0),
            Self::Tent { a, b } => pwl(vec![(*a, 0.0), (0.5 * (a + b), 1.0), (*b, 0.0)], 0.0, 0.0),
            Self::Call { strike } => pwl(vec![(*strike, 0.0)], 0.0, 1.0),
            Self::Smoothstep { a, b, eps } => {
                let mut pts = Vec::new();
                if a.is_finite() {
                    pts.push((a - eps, 0.0));
                    pts.push((*a, 1.0));
                }
                if b.is_finite() {
                    if !(a.is_finite() && b == a) {
                        pts.push((*b, 1.0));
                    }
                    pts.push((b + eps, 0.0));
                }
                if pts.is_empty() {
                    pts.push((0.0, 1.0));
                }
                pwl(pts, 0.0, 0.0)
            }
            Self::Custom(p) => p.clone(),
            Self::Square | Self::Quadratic { .. } => return None,
        })
    }

    /// Splits into `(quadratic coefficient, linear part)`.
    fn parts(&self) -> (f64, PiecewiseLinear) {
        match self {
            Self::Square => (1.0, PiecewiseLinear::constant(0.0)),
            Self::Quadratic { coef, linear } => (*coef, linear.clone()),
            other => (0.0, other.to_pwl().expect("linear kind")),
        }
    }

    fn from_parts(coef: f64, linear: PiecewiseLinear) -> Self {
        if coef == 0.0 {
            Self::Custom(linear)
        } else {
            Self::Quadratic { coef, linear }
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let (q, l) = self.parts();
        Self::from_parts(c * q, l.scale(c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (q1, l1) = self.parts();
        let (q2, l2) = other.parts();
        Self::from_parts(q1 + q2, l1.add(&l2))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.add(&Self::constant(c))
    }

    /// Whether `|φ(x)| ≤ C(1+|x|)` holds for some finite `C`.
    pub fn has_linear_growth(&self) -> bool {
        self.growth_constant().is_some()
    }

    /// A constant `C` with `|φ(x)| ≤ C(1+|x|)`, `None` for quadratic kinds.
    pub fn growth_constant(&self) -> Option<f64> {
        let (q, l) = self.parts();
        if q != 0.0 {
            return None;
        }
        let lip = l.piece_slopes().into_iter().map(f64::abs).fold(0.0, f64::max);
        Some(lip.max(l.eval(0.0).abs()))
    }

    /// `max_{lo ≤ x ≤ hi} φ(x)`, exact from the breakpoint structure.
    pub fn max_on_interval(&self, lo: f64, hi: f64) -> f64 {
        let (q, l) = self.parts();
        let mut candidates = vec![lo, hi];
        candidates.extend(l.xs.iter().copied().filter(|&x| lo < x && x < hi));
        if q < 0.0 {
            let slopes = l.piece_slopes();
            let mut edges = vec![f64::NEG_INFINITY];
            edges.extend(l.xs.iter().copied());
            edges.push(f64::INFINITY);
            for (i, s) in slopes.iter().enumerate() {
                let v = -s / (2.0 * q);
                if v > edges[i].max(lo) && v < edges[i + 1].min(hi) {
                    candidates.push(v);
                }
            }
        }
        candidates
            .into_iter()
            .map(|x| self.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parses the text grammar described in the module docs.
    pub fn parse(spec: &str) -> Result<Self, ParseError> {
        let lead = spec.len() - spec.trim_start().len();
        let s = spec.trim();
        let p = Parser { src: s, base: lead };
        p.function()
    }

    /// Inverse of [`PiecewiseFunction::parse`].
    pub fn render(&self) -> String {
        match self {
            Self::Abs => "abs".into(),
            Self::Square => "square".into(),
            Self::Tent { a, b } => format!("tent({a},{b})"),
            Self::Call { strike } => format!("call({strike})"),
            Self::Smoothstep { a, b, eps } => format!("smoothstep({a},{b},{eps})"),
            Self::Custom(p) => p.render(),
            Self::Quadratic { coef, linear } => format!("quad({coef})+{}", linear.render()),
        }
    }
}

impl fmt::Display for PiecewiseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

struct Parser<'a> {
    src: &'a str,
    base: usize,
}

impl<'a> Parser<'a> {
    fn function(&self) -> Result<PiecewiseFunction, ParseError> {
        let s = self.src;
        match s {
            "abs" => return Ok(PiecewiseFunction::Abs),
            "square" => return Ok(PiecewiseFunction::Square),
            "identity" => return Ok(PiecewiseFunction::identity()),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("pwl:") {
            return Ok(PiecewiseFunction::Custom(self.pwl(rest, 4)?));
        }
        if let Some(args) = self.call_args(s, "tent", 0)? {
            let [a, b] = self.numbers::<2>(&args)?;
            if !(a < b) {
                return Err(perr(self.base, "tent needs a < b"));
            }
            return Ok(PiecewiseFunction::Tent { a, b });
        }
        if let Some(args) = self.call_args(s, "call", 0)? {
            let [k] = self.numbers::<1>(&args)?;
            return Ok(PiecewiseFunction::Call { strike: k });
        }
        if let Some(args) = self.call_args(s, "smoothstep", 0)? {
            let [a, b, eps] = self.numbers::<3>(&args)?;
            if !(eps > 0.0) || !(a <= b) {
                return Err(perr(self.base, "smoothstep needs a <= b and eps > 0"));
            }
            return Ok(PiecewiseFunction::Smoothstep { a, b, eps });
        }
        if s.starts_with("quad(") {
            let close = s.find(')').ok_or_else(|| perr(self.base + s.len(), "expected ')'"))?;
            let args = self.call_args(&s[..=close], "quad", 0)?.expect("prefix checked");
            let [coef] = self.numbers::<1>(&args)?;
            let rest = &s[close + 1..];
            if rest.is_empty() {
                return Ok(PiecewiseFunction::from_parts(coef, PiecewiseLinear::constant(0.0)));
            }
            let off = close + 1;
            let body = rest
                .strip_prefix("+pwl:")
                .ok_or_else(|| perr(self.base + off, "expected '+pwl:' after quad(c)"))?;
            let linear = self.pwl(body, off + 5)?;
            return Ok(PiecewiseFunction::from_parts(coef, linear));
        }
        Err(perr(self.base, format!("unknown function '{s}'")))
    }

    /// For `name(args)` returns the argument tokens with their offsets.
    fn call_args(&self, s: &str, name: &str, off: usize) -> Result<Option<Vec<(usize, &'a str)>>, ParseError> {
        let Some(rest) = s.strip_prefix(name) else {
            return Ok(None);
        };
        let open = off + name.len();
        let Some(inner) = rest.strip_prefix('(') else {
            return Err(perr(self.base + open, "expected '('"));
        };
        let Some(inner) = inner.strip_suffix(')') else {
            return Err(perr(self.base + off + s.len(), "expected ')'"));
        };
        let inner_start = open + 1;
        let src: &'a str = &self.src[inner_start..inner_start + inner.len()];
        Ok(Some(split_with_offsets(src, ',', inner_start)))
    }

    fn numbers<const N: usize>(&self, args: &[(usize, &str)]) -> Result<[f64; N], ParseError> {
        if args.len() != N {
            let at = args.first().map(|a| a.0).unwrap_or(0);
            return Err(perr(self.base + at, format!("expected {N} arguments, got {}", args.len())));
        }
        let mut out = [0.0; N];
        for (slot, (off, tok)) in out.iter_mut().zip(args) {
            *slot = self.number(tok, *off)?;
        }
        Ok(out)
    }

    fn number(&self, tok: &str, off: usize) -> Result<f64, ParseError> {
        let t = tok.trim();
        t.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| perr(self.base + off + (tok.len() - tok.trim_start().len()), format!("invalid number '{t}'")))
    }

    fn pwl(&self, body: &str, off: usize) -> Result<PiecewiseLinear, ParseError> {
        let mut points = Vec::new();
        let (mut sl, mut sr) = (0.0, 0.0);
        for (pos, part) in split_with_offsets(body, ';', off) {
            if part.trim_start().starts_with("sl=") || part.trim_start().starts_with("sr=") {
                for (p2, kv) in split_with_offsets(part, ',', pos) {
                    let kv_trim = kv.trim_start();
                    let lead = kv.len() - kv_trim.len();
                    let (key, val) = kv_trim
                        .split_once('=')
                        .ok_or_else(|| perr(self.base + p2, "expected key=value"))?;
                    let v = self.number(val, p2 + lead + key.len() + 1)?;
                    match key.trim() {
                        "sl" => sl = v,
                        "sr" => sr = v,
                        other => return Err(perr(self.base + p2 + lead, format!("unknown key '{other}'"))),
                    }
                }
                continue;
            }
            let xy = split_with_offsets(part, ',', pos);
            if xy.len() != 2 {
                return Err(perr(self.base + pos, "expected 'x,y'"));
            }
            let x = self.number(xy[0].1, xy[0].0)?;
            let y = self.number(xy[1].1, xy[1].0)?;
            if let Some(&(px, _)) = points.last() {
                if x <= px {
                    return Err(perr(self.base + pos, "breakpoints must be strictly increasing"));
                }
            }
            points.push((x, y));
        }
        PiecewiseLinear::new(points, sl, sr).map_err(|e| perr(self.base + off, e.to_string()))
    }
}

fn split_with_offsets(s: &str, sep: char, base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == sep {
            out.push((base + start, &s[start..i]));
            start = i + c.len_utf8();
        }
    }
    out.push((base + start, &s[start..]));
    out
}
