//! Radial scalar profiles written in the log-radius variable `t = -ln r`.
//!
//! Every scalar function of the radius used by the toolkit (moduli of
//! continuity, Gilbarg–Serrin profiles `g`, radial coefficient parts) is a
//! [`Profile`]. Profiles are evaluated in `t` so that radii far below the
//! smallest positive `f64` (e.g. `r = e^{-10^4}`) never have to be formed.
//!
//! Profiles can be written as closed-form expressions drawn from a fixed
//! whitelist:
//!
//! | expression              | meaning                         | in `t`                 |
//! |-------------------------|---------------------------------|------------------------|
//! | `c*r^a`                 | power of the radius             | `c e^{-a t}`           |
//! | `c/log(e/r)`            | inverse logarithm               | `c / (1 + t)`          |
//! | `c/(log(e^s/r))^a`      | inverse power of a logarithm    | `c / (s + t)^a`        |
//! | `c/t^a`                 | envelope in log-time            | `c t^{-a}`             |
//! | `piecewise(t0:v0, ...)` | piecewise constant in `log r`   | `v_i` on `[t_i, t_{i+1})` |
//! | `p + q`, `p - q`        | sums of the above               |                        |

use std::fmt;

use serde::{Deserialize, Serialize};

/// One piece of a [`Profile::Piecewise`]: `value` on `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub value: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant { c: f64 },
    /// `c r^a`
    Power { c: f64, a: f64 },
    /// `c / (log(e^shift / r))^a = c / (shift + t)^a`
    InvLog { c: f64, a: f64, shift: f64 },
    /// Segments in `t`; zero outside every segment. Segments must not overlap.
    Piecewise { segments: Vec<Segment> },
    Sum { terms: Vec<Profile> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot parse profile expression `{expr}` at byte {pos}: {msg}")]
pub struct ParseError {
    pub expr: String,
    pub pos: usize,
    pub msg: String,
}

impl Profile {
    pub fn power(c: f64, a: f64) -> Self {
        Profile::Power { c, a }
    }

    /// `c / log(e/r)`.
    pub fn inv_log(c: f64) -> Self {
        Profile::InvLog { c, a: 1.0, shift: 1.0 }
    }

    pub fn inv_log_pow(c: f64, a: f64, shift: f64) -> Self {
        Profile::InvLog { c, a, shift }
    }

    pub fn constant(c: f64) -> Self {
        Profile::Constant { c }
    }

    /// Value at log-radius `t` (radius `e^{-t}`).
    pub fn eval_t(&self, t: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { c } => *c,
            Profile::Power { c, a } => {
                if t == f64::INFINITY {
                    if *a > 0.0 {
                        0.0
                    } else {
                        *c
                    }
                } else {
                    c * (-a * t).exp()
                }
            }
            Profile::InvLog { c, a, shift } => {
                let s = shift + t;
                if s == f64::INFINITY {
                    0.0
                } else {
                    c * s.powf(-a)
                }
            }
            Profile::Piecewise { segments } => segments
                .iter()
                .find(|s| t >= s.start && t < s.end)
                .map_or(0.0, |s| s.value.eval_t(t)),
            Profile::Sum { terms } => terms.iter().map(|p| p.eval_t(t)).sum(),
        }
    }

    /// Value at radius `r > 0`; `r = 0` is the limit `t -> inf`.
    pub fn eval_r(&self, r: f64) -> f64 {
        if r <= 0.0 {
            self.at_origin()
        } else {
            self.eval_t(-r.ln())
        }
    }

    /// Limit of the profile as the radius tends to zero.
    pub fn at_origin(&self) -> f64 {
        match self {
            Profile::Piecewise { segments } => segments
                .iter()
                .find(|s| s.end == f64::INFINITY)
                .map_or(0.0, |s| s.value.at_origin()),
            Profile::Sum { terms } => terms.iter().map(Profile::at_origin).sum(),
            other => other.eval_t(f64::INFINITY),
        }
    }

    /// Closed-form `∫_{t0}^{t1} p(t) dt`, when one exists for every term.
    pub fn integral_t(&self, t0: f64, t1: f64) -> Option<f64> {
        if t1 < t0 {
            return self.integral_t(t1, t0).map(|v| -v);
        }
        if t0 == t1 {
            return Some(0.0);
        }
        match self {
            Profile::Zero => Some(0.0),
            Profile::Constant { c } => Some(c * (t1 - t0)),
            Profile::Power { c, a } => {
                if *a == 0.0 {
                    Some(c * (t1 - t0))
                } else {
                    Some(c / a * ((-a * t0).exp() - (-a * t1).exp()))
                }
            }
            Profile::InvLog { c, a, shift } => {
                let (s0, s1) = (shift + t0, shift + t1);
                if s0 <= 0.0 {
                    return None;
                }
                if (*a - 1.0).abs() < 1e-15 {
                    Some(c * (s1 / s0).ln())
                } else {
                    let e = 1.0 - a;
                    Some(c / e * (s1.powf(e) - s0.powf(e)))
                }
            }
            Profile::Piecewise { segments } => {
                let mut total = 0.0;
                for s in segments {
                    let lo = s.start.max(t0);
                    let hi = s.end.min(t1);
                    if hi > lo {
                        total += s.value.integral_t(lo, hi)?;
                    }
                }
                Some(total)
            }
            Profile::Sum { terms } => terms.iter().map(|p| p.integral_t(t0, t1)).sum(),
        }
    }

    /// Times at which the profile may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.retain(|t| t.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Profile::Piecewise { segments } => {
                for s in segments {
                    out.push(s.start);
                    out.push(s.end);
                    s.value.collect_breakpoints(out);
                }
            }
            Profile::Sum { terms } => terms.iter().for_each(|p| p.collect_breakpoints(out)),
            _ => {}
        }
    }

    /// Multiply by a constant.
    pub fn scaled(&self, k: f64) -> Profile {
        match self {
            Profile::Zero => Profile::Zero,
            Profile::Constant { c } => Profile::Constant { c: k * c },
            Profile::Power { c, a } => Profile::Power { c: k * c, a: *a },
            Profile::InvLog { c, a, shift } => Profile::InvLog { c: k * c, a: *a, shift: *shift },
            Profile::Piecewise { segments } => Profile::Piecewise {
                segments: segments
                    .iter()
                    .map(|s| Segment { start: s.start, end: s.end, value: s.value.scaled(k) })
                    .collect(),
            },
            Profile::Sum { terms } => Profile::Sum { terms: terms.iter().map(|p| p.scaled(k)).collect() },
        }
    }

    /// A profile bounding `|p|` pointwise: every coefficient replaced by its absolute value.
    pub fn abs_envelope(&self) -> Profile {
        match self {
            Profile::Zero => Profile::Zero,
            Profile::Constant { c } => Profile::Constant { c: c.abs() },
            Profile::Power { c, a } => Profile::Power { c: c.abs(), a: *a },
            Profile::InvLog { c, a, shift } => Profile::InvLog { c: c.abs(), a: *a, shift: *shift },
            Profile::Piecewise { segments } => Profile::Piecewise {
                segments: segments
                    .iter()
                    .map(|s| Segment { start: s.start, end: s.end, value: s.value.abs_envelope() })
                    .collect(),
            },
            Profile::Sum { terms } => Profile::Sum { terms: terms.iter().map(Profile::abs_envelope).collect() },
        }
    }

    pub fn parse(expr: &str) -> Result<Profile, ParseError> {
        let mut p = Parser { src: expr, pos: 0 };
        let out = p.sum()?;
        p.skip_ws();
        if p.pos != expr.len() {
            return Err(p.err("trailing input"));
        }
        Ok(out)
    }
}

impl std::str::FromStr for Profile {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::parse(s)
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "0"),
            Profile::Constant { c } => write!(f, "{}", fmt_num(*c)),
            Profile::Power { c, a } => write!(f, "{}*r^{}", fmt_num(*c), fmt_num(*a)),
            Profile::InvLog { c, a, shift } => {
                if *shift == 0.0 {
                    write!(f, "{}/t^{}", fmt_num(*c), fmt_num(*a))
                } else {
                    write!(f, "{}/(log(e^{}/r))^{}", fmt_num(*c), fmt_num(*shift), fmt_num(*a))
                }
            }
            Profile::Piecewise { segments } => {
                // Only the whitelisted constant-valued form has a textual representation.
                write!(f, "piecewise(")?;
                let mut first = true;
                let mut last_end = f64::NAN;
                for s in segments {
                    if !last_end.is_nan() && last_end < s.start {
                        write!(f, ", {}:0", fmt_num(last_end))?;
                    }
                    if !first {
                        write!(f, ", ")?;
                    }
                    first = false;
                    let v = match &s.value {
                        Profile::Constant { c } => *c,
                        Profile::Zero => 0.0,
                        other => other.eval_t(s.start),
                    };
                    write!(f, "{}:{}", fmt_num(s.start), fmt_num(v))?;
                    last_end = s.end;
                }
                if last_end.is_finite() {
                    write!(f, ", {}:0", fmt_num(last_end))?;
                }
                write!(f, ")")
            }
            Profile::Sum { terms } => {
                if terms.is_empty() {
                    return write!(f, "0");
                }
                for (i, p) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError { expr: self.src.to_string(), pos: self.pos, msg: msg.to_string() }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn peek_number(&mut self) -> bool {
        self.skip_ws();
        self.rest().starts_with(|c: char| c.is_ascii_digit() || c == '.')
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let bytes = self.rest().as_bytes();
        let mut i = 0;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        // exponent only when followed by a digit, so `e/r` stays a token
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'-' || bytes[j] == b'+') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.rest()[..i];
        let v = text.parse::<f64>().map_err(|_| self.err("expected a number"))?;
        self.pos += i;
        Ok(v)
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        if self.eat("-") {
            Ok(-self.number()?)
        } else {
            self.eat("+");
            self.number()
        }
    }

    fn sum(&mut self) -> Result<Profile, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat("+") {
                terms.push(self.term()?);
            } else if self.eat("-") {
                terms.push(self.term()?.scaled(-1.0));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Profile::Sum { terms } })
    }

    fn term(&mut self) -> Result<Profile, ParseError> {
        if self.eat("-") {
            return Ok(self.term()?.scaled(-1.0));
        }
        if self.eat("piecewise") {
            return self.piecewise();
        }
        let coeff = if self.peek_number() { Some(self.number()?) } else { None };
        if self.eat("*") {
            return Ok(self.atom()?.scaled(coeff.unwrap_or(1.0)));
        }
        if self.eat("/") {
            return self.reciprocal(coeff.unwrap_or(1.0));
        }
        match coeff {
            Some(c) => Ok(if c == 0.0 { Profile::Zero } else { Profile::Constant { c } }),
            None => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Profile, ParseError> {
        if self.eat("r^") {
            let a = self.signed_number()?;
            return Ok(Profile::Power { c: 1.0, a });
        }
        if self.eat("r") {
            return Ok(Profile::Power { c: 1.0, a: 1.0 });
        }
        Err(self.err("expected `r^a`, a number, or `piecewise(...)`"))
    }

    /// After `c/`: `log(e^s/r)`, `(log(e^s/r))^a`, or `t^a`.
    fn reciprocal(&mut self, c: f64) -> Result<Profile, ParseError> {
        if self.eat("t^") {
            let a = self.number()?;
            return Ok(Profile::InvLog { c, a, shift: 0.0 });
        }
        let parenthesized = self.eat("(");
        self.expect("log(")?;
        self.expect("e")?;
        let shift = if self.eat("^") { self.number()? } else { 1.0 };
        self.expect("/")?;
        self.expect("r")?;
        self.expect(")")?;
        let mut a = 1.0;
        if parenthesized {
            self.expect(")")?;
            self.expect("^")?;
            a = self.number()?;
        }
        Ok(Profile::InvLog { c, a, shift })
    }

    /// `piecewise(t0:v0, t1:v1, ...)`: `v_i` on `[t_i, t_{i+1})`, last piece to infinity.
    fn piecewise(&mut self) -> Result<Profile, ParseError> {
        self.expect("(")?;
        let mut knots = Vec::new();
        loop {
            let t = self.number()?;
            self.expect(":")?;
            let v = self.signed_number()?;
            knots.push((t, v));
            if !self.eat(",") {
                break;
            }
        }
        self.expect(")")?;
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(self.err("piecewise knots must be strictly increasing"));
        }
        let segments = knots
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| *v != 0.0)
            .map(|(i, &(t, v))| Segment {
                start: t,
                end: knots.get(i + 1).map_or(f64::INFINITY, |k| k.0),
                value: Profile::Constant { c: v },
            })
            .collect();
        Ok(Profile::Piecewise { segments })
    }
}
