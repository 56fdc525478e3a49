use crate::error::{Error, Result};

use super::{sigmoid, sigmoid_slope};

/// Absolute tolerance on resolvent values.
pub const RESOLVENT_TOL: f64 = 1e-12;
/// Iteration budget of the resolvent root finder.
pub const RESOLVENT_MAX_ITER: usize = 200;

/// A pointwise monotone function on an interval, treated through its maximal
/// monotone closure.
#[derive(Clone, Copy, Debug)]
pub struct CustomGraph {
    pub lo: f64,
    pub hi: f64,
    /// Nondecreasing on `(lo, hi)`; may diverge at finite endpoints.
    pub beta: fn(f64) -> f64,
    /// Convex primitive of `beta`, nonnegative on `[lo, hi]`.
    pub f1: fn(f64) -> f64,
}

/// The maximal monotone graph β = ∂f₁.
#[derive(Clone, Copy, Debug)]
pub enum ScalarGraph {
    /// f₁(x) = c(x ln x + (1−x) ln(1−x)) + c ln 2 on [0, 1].
    Log { c: f64 },
    /// Subdifferential of the indicator of `[lo, hi]`.
    Obstacle { lo: f64, hi: f64 },
    /// β(x) = c x³, f₁(x) = c x⁴ / 4.
    Poly { c: f64 },
    Zero,
    Custom(CustomGraph),
}

/// How the scheme treats β inside the ρ-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaMode {
    /// Replace β by its Yosida approximation β_ε.
    Yosida { eps: f64 },
    /// Use β itself; only for graphs single-valued on the interior of their domain.
    Exact,
}

impl ScalarGraph {
    pub fn from_name(name: &str, param: f64) -> Option<ScalarGraph> {
        match name {
            "log" => Some(ScalarGraph::Log { c: param }),
            "obstacle" => Some(ScalarGraph::Obstacle { lo: 0.0, hi: 1.0 }),
            "poly" => Some(ScalarGraph::Poly { c: param }),
            "zero" => Some(ScalarGraph::Zero),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarGraph::Log { .. } => "log",
            ScalarGraph::Obstacle { .. } => "obstacle",
            ScalarGraph::Poly { .. } => "poly",
            ScalarGraph::Zero => "zero",
            ScalarGraph::Custom(_) => "custom",
        }
    }

    /// Endpoints of the closure of D(β).
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            ScalarGraph::Log { .. } => (0.0, 1.0),
            ScalarGraph::Obstacle { lo, hi } => (lo, hi),
            ScalarGraph::Poly { .. } | ScalarGraph::Zero => (f64::NEG_INFINITY, f64::INFINITY),
            ScalarGraph::Custom(g) => (g.lo, g.hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(alloc::format!("graph {}: {msg}", self.name())));
        match *self {
            ScalarGraph::Log { c } if !(c > 0.0 && c.is_finite()) => bad("c must be positive"),
            ScalarGraph::Poly { c } if !(c >= 0.0 && c.is_finite()) => bad("c must be nonnegative"),
            ScalarGraph::Obstacle { lo, hi } if !(lo < hi) => bad("empty domain"),
            ScalarGraph::Custom(g) if !(g.lo < g.hi) => bad("empty domain"),
            _ => Ok(()),
        }
    }

    /// The convex part f₁, as an extended real (`+∞` outside the domain).
    pub fn f1(&self, x: f64) -> f64 {
        match *self {
            ScalarGraph::Log { c } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::INFINITY;
                }
                let xlogx = |v: f64| if v == 0.0 { 0.0 } else { v * libm::log(v) };
                c * (xlogx(x) + xlogx(1.0 - x) + core::f64::consts::LN_2)
            }
            ScalarGraph::Obstacle { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ScalarGraph::Poly { c } => 0.25 * c * x * x * x * x,
            ScalarGraph::Zero => 0.0,
            ScalarGraph::Custom(g) => {
                if (g.lo..=g.hi).contains(&x) {
                    (g.f1)(x)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// β(x) where the graph is single-valued, `None` where it is multivalued or empty.
    pub fn beta(&self, x: f64) -> Option<f64> {
        match *self {
            ScalarGraph::Log { c } => (x > 0.0 && x < 1.0).then(|| c * libm::log(x / (1.0 - x))),
            ScalarGraph::Obstacle { lo, hi } => (x > lo && x < hi).then_some(0.0),
            ScalarGraph::Poly { c } => Some(c * x * x * x),
            ScalarGraph::Zero => Some(0.0),
            ScalarGraph::Custom(g) => (x > g.lo && x < g.hi).then(|| (g.beta)(x)),
        }
    }

    /// β'(x) on the interior of the domain, for graphs that are differentiable there.
    pub fn beta_slope(&self, x: f64) -> Option<f64> {
        match *self {
            ScalarGraph::Log { c } => (x > 0.0 && x < 1.0).then(|| c / (x * (1.0 - x))),
            ScalarGraph::Obstacle { lo, hi } => (x > lo && x < hi).then_some(0.0),
            ScalarGraph::Poly { c } => Some(3.0 * c * x * x),
            ScalarGraph::Zero => Some(0.0),
            ScalarGraph::Custom(g) => {
                if !(x > g.lo && x < g.hi) {
                    return None;
                }
                let room = (x - g.lo).min(g.hi - x);
                let d = (1e-6 * (1.0 + x.abs())).min(0.5 * room);
                Some((((g.beta)(x + d) - (g.beta)(x - d)) / (2.0 * d)).max(0.0))
            }
        }
    }

    /// Minimal-norm element of β(x), `None` if x lies outside the closure of D(β)
    /// or β(x) is empty.
    pub fn min_section(&self, x: f64) -> Option<f64> {
        match *self {
            ScalarGraph::Obstacle { lo, hi } => (lo..=hi).contains(&x).then_some(0.0),
            _ => self.beta(x),
        }
    }

    /// Whether `Exact` beta mode is available for this graph.
    pub fn supports_exact(&self) -> bool {
        !matches!(self, ScalarGraph::Obstacle { .. })
    }

    /// Resolvent J_λ(x): the unique y with y + λβ(y) ∋ x.
    pub fn resolvent(&self, lambda: f64, x: f64) -> Result<f64> {
        match *self {
            ScalarGraph::Log { c } => log_resolvent_logit(c, lambda, x).map(sigmoid),
            ScalarGraph::Obstacle { lo, hi } => Ok(x.clamp(lo, hi)),
            ScalarGraph::Poly { c } => poly_resolvent(c, lambda, x),
            ScalarGraph::Zero => Ok(x),
            ScalarGraph::Custom(g) => custom_resolvent(&g, lambda, x),
        }
    }

    /// Yosida approximation β_ε(x) = (x − J_ε(x)) / ε.
    pub fn yosida(&self, eps: f64, x: f64) -> Result<f64> {
        match *self {
            // In logit coordinates β_ε(x) = c·z exactly.
            ScalarGraph::Log { c } => Ok(c * log_resolvent_logit(c, eps, x)?),
            _ => Ok((x - self.resolvent(eps, x)?) / eps),
        }
    }

    /// β_ε(x) together with an element of its generalized derivative, in `[0, 1/ε]`.
    pub fn yosida_with_slope(&self, eps: f64, x: f64) -> Result<(f64, f64)> {
        match *self {
            ScalarGraph::Log { c } => {
                let z = log_resolvent_logit(c, eps, x)?;
                Ok((c * z, c / (sigmoid_slope(z) + eps * c)))
            }
            ScalarGraph::Obstacle { lo, hi } => {
                let y = x.clamp(lo, hi);
                let slope = if x < lo || x > hi { 1.0 / eps } else { 0.0 };
                Ok(((x - y) / eps, slope))
            }
            ScalarGraph::Poly { c } => {
                let y = poly_resolvent(c, eps, x)?;
                let b = 3.0 * c * y * y;
                Ok(((x - y) / eps, b / (1.0 + eps * b)))
            }
            ScalarGraph::Zero => Ok((0.0, 0.0)),
            ScalarGraph::Custom(_) => {
                let value = self.yosida(eps, x)?;
                let d = 1e-6 * (1.0 + x.abs());
                let slope = (self.yosida(eps, x + d)? - self.yosida(eps, x - d)?) / (2.0 * d);
                Ok((value, slope.clamp(0.0, 1.0 / eps)))
            }
        }
    }

    /// Moreau envelope f₁,ε(x) = f₁(J_ε x) + |x − J_ε x|² / (2ε), the convex
    /// primitive of β_ε.
    pub fn moreau_envelope(&self, eps: f64, x: f64) -> Result<f64> {
        let y = self.resolvent(eps, x)?;
        Ok(self.f1(y) + (x - y) * (x - y) / (2.0 * eps))
    }

    /// β_ε or β, depending on the mode, with a derivative selection.
    pub fn eval_with_slope(&self, mode: BetaMode, x: f64) -> Result<(f64, f64)> {
        match mode {
            BetaMode::Yosida { eps } => self.yosida_with_slope(eps, x),
            BetaMode::Exact => match (self.beta(x), self.beta_slope(x)) {
                (Some(b), Some(s)) => Ok((b, s)),
                _ => Err(Error::InvalidParameter(alloc::format!(
                    "exact beta evaluated outside the domain of {} at {x}",
                    self.name()
                ))),
            },
        }
    }
}

/// Solves σ(z) + λcz = x for the logit z of J_λ(x) under the logarithmic graph.
fn log_resolvent_logit(c: f64, lambda: f64, x: f64) -> Result<f64> {
    let lc = lambda * c;
    if !(lc > 0.0) || !x.is_finite() {
        return Err(Error::NonConvergence { x, lambda, iterations: 0 });
    }
    // σ ∈ (0, 1) brackets the root.
    let (mut a, mut b) = ((x - 1.0) / lc, x / lc);
    let mut z = 0.5 * (a + b);
    if z.abs() < 40.0 {
        // Newton is fast from the unconstrained guess in the moderate regime.
        z = (x - 0.5) / (lc + 0.25);
        z = z.clamp(a, b);
    }
    for _ in 0..RESOLVENT_MAX_ITER {
        let s = sigmoid(z);
        let f = s + lc * z - x;
        if f == 0.0 {
            return Ok(z);
        }
        if f > 0.0 {
            b = z;
        } else {
            a = z;
        }
        let slope = sigmoid_slope(z) + lc;
        let mut next = z - f / slope;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let step = (next - z).abs();
        z = next;
        if step <= 1e-14 * z.abs().max(1.0) || (b - a) <= 1e-14 * z.abs().max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence { x, lambda, iterations: RESOLVENT_MAX_ITER })
}

fn poly_resolvent(c: f64, lambda: f64, x: f64) -> Result<f64> {
    let lc = lambda * c;
    if lc == 0.0 {
        return Ok(x);
    }
    let (mut a, mut b) = (x.min(0.0), x.max(0.0));
    // y³ ≤ x/(λc) also bounds the root.
    let cube = libm::cbrt(x / lc);
    if cube.abs() < (b - a) {
        if x > 0.0 {
            b = cube;
        } else {
            a = cube;
        }
    }
    let mut y = 0.5 * (a + b);
    for _ in 0..RESOLVENT_MAX_ITER {
        let f = y + lc * y * y * y - x;
        if f == 0.0 {
            return Ok(y);
        }
        if f > 0.0 {
            b = y;
        } else {
            a = y;
        }
        let mut next = y - f / (1.0 + 3.0 * lc * y * y);
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let step = (next - y).abs();
        y = next;
        if step <= 0.1 * RESOLVENT_TOL || b - a <= RESOLVENT_TOL {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence { x, lambda, iterations: RESOLVENT_MAX_ITER })
}

/// Bisection with secant acceleration on G(y) = y + λβ(y) − x over the open domain.
fn custom_resolvent(g: &CustomGraph, lambda: f64, x: f64) -> Result<f64> {
    let fail = |iterations| Error::NonConvergence { x, lambda, iterations };
    let eval = |y: f64| y + lambda * (g.beta)(y) - x;
    let mut budget = RESOLVENT_MAX_ITER;

    // Bracket [a, b] with G(a) ≤ 0 ≤ G(b); finite endpoints are never evaluated.
    let mut a = g.lo;
    if !a.is_finite() {
        let mut width = 1.0;
        loop {
            a = x.min(g.hi) - width;
            let ga = eval(a);
            if ga.is_nan() {
                return Err(fail(RESOLVENT_MAX_ITER - budget));
            }
            if ga <= 0.0 {
                break;
            }
            width *= 2.0;
            budget = budget.checked_sub(1).ok_or_else(|| fail(RESOLVENT_MAX_ITER))?;
        }
    }
    let mut b = g.hi;
    if !b.is_finite() {
        let mut width = 1.0;
        loop {
            b = x.max(g.lo) + width;
            let gb = eval(b);
            if gb.is_nan() {
                return Err(fail(RESOLVENT_MAX_ITER - budget));
            }
            if gb >= 0.0 {
                break;
            }
            width *= 2.0;
            budget = budget.checked_sub(1).ok_or_else(|| fail(RESOLVENT_MAX_ITER))?;
        }
    }

    let mut ga = if a.is_finite() && a > g.lo { eval(a) } else { f64::NEG_INFINITY };
    let mut gb = if b.is_finite() && b < g.hi { eval(b) } else { f64::INFINITY };
    while budget > 0 {
        budget -= 1;
        if b - a <= RESOLVENT_TOL {
            return Ok(0.5 * (a + b));
        }
        let mid = 0.5 * (a + b);
        // Secant point when both ends are finite, otherwise bisection.
        let mut y = if ga.is_finite() && gb.is_finite() && gb > ga { a - ga * (b - a) / (gb - ga) } else { mid };
        // Keep the secant point away from the ends to guarantee shrinkage.
        let guard = 0.01 * (b - a);
        if !(y > a + guard && y < b - guard) {
            y = mid;
        }
        let gy = eval(y);
        if gy.is_nan() {
            return Err(fail(RESOLVENT_MAX_ITER - budget));
        }
        if gy == 0.0 {
            return Ok(y);
        }
        if gy > 0.0 {
            b = y;
            gb = gy;
        } else {
            a = y;
            ga = gy;
        }
    }
    Err(fail(RESOLVENT_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: ScalarGraph = ScalarGraph::Log { c: 1.0 };

    /// Plain bisection on y + λ ln(y/(1−y)) = x, independent of the logit solver.
    fn bisect_log(lambda: f64, x: f64) -> f64 {
        let (mut a, mut b): (f64, f64) = (1e-300, 1.0 - 1e-16);
        for _ in 0..2000 {
            let m = 0.5 * (a + b);
            if m + lambda * (m / (1.0 - m)).ln() > x {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn log_f1_values() {
        assert_eq!(LOG.f1(0.5), 0.0);
        assert_eq!(LOG.f1(-0.1), f64::INFINITY);
        let expected = 0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln() + 2f64.ln();
        assert!((LOG.f1(0.9) - expected).abs() < 1e-15);
        assert!((LOG.f1(0.9) - 0.3680).abs() < 1e-4);
        assert!((LOG.f1(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_resolvent_examples() {
        assert!((LOG.resolvent(1.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let y = LOG.resolvent(1.0, 2.0).unwrap();
        assert!((y - bisect_log(1.0, 2.0)).abs() < 1e-12);
        // Independent root of y + ln(y/(1-y)) = 2 (scipy brentq, xtol 1e-15).
        assert!((y - 0.773_249_355_165_651_7).abs() < 1e-12);
        for &x in &[-30.0, -3.0, 0.1, 0.9, 4.0, 50.0] {
            for &lambda in &[1e-3, 0.1, 1.0, 10.0] {
                let y = LOG.resolvent(lambda, x).unwrap();
                assert!((y - bisect_log(lambda, x)).abs() < 1e-12, "x={x} lambda={lambda}");
            }
        }
    }

    #[test]
    fn zero_and_obstacle() {
        assert_eq!(ScalarGraph::Zero.resolvent(0.3, 3.7).unwrap(), 3.7);
        let obstacle = ScalarGraph::Obstacle { lo: 0.0, hi: 1.0 };
        assert!((obstacle.yosida(0.1, 1.3).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(obstacle.yosida(0.1, 0.4).unwrap(), 0.0);
        assert_eq!(obstacle.beta(1.0), None);
        assert_eq!(obstacle.min_section(1.0), Some(0.0));
    }

    #[test]
    fn yosida_symmetric_point() {
        assert_eq!(LOG.yosida(0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn yosida_converges_to_beta() {
        for graph in [LOG, ScalarGraph::Poly { c: 2.0 }] {
            let x: f64 = 0.3;
            let exact = graph.beta(x).unwrap();
            let mut last = f64::INFINITY;
            for k in 1..=5 {
                let eps = 10f64.powi(-k);
                let err = (graph.yosida(eps, x).unwrap() - exact).abs();
                assert!(err < last, "{graph:?}: no decrease at eps={eps}");
                last = err;
            }
            assert!(last < 1e-4);
        }
    }

    #[test]
    fn slope_matches_difference_quotient() {
        let graphs = [LOG, ScalarGraph::Poly { c: 1.5 }, ScalarGraph::Obstacle { lo: 0.0, hi: 1.0 }];
        for graph in graphs {
            for &x in &[-0.7, 0.2, 0.55, 1.4] {
                let eps = 0.05;
                let (_, slope) = graph.yosida_with_slope(eps, x).unwrap();
                let d = 1e-6;
                let fd = (graph.yosida(eps, x + d).unwrap() - graph.yosida(eps, x - d).unwrap()) / (2.0 * d);
                assert!((slope - fd).abs() < 1e-4 * (1.0 + fd.abs()), "{graph:?} x={x}: {slope} vs {fd}");
            }
        }
    }

    #[test]
    fn custom_graph_matches_builtin() {
        fn beta(x: f64) -> f64 {
            (x / (1.0 - x)).ln()
        }
        fn f1(x: f64) -> f64 {
            ScalarGraph::Log { c: 1.0 }.f1(x)
        }
        let custom = ScalarGraph::Custom(CustomGraph { lo: 0.0, hi: 1.0, beta, f1 });
        for &x in &[-2.0, 0.1, 0.5, 0.93, 3.0] {
            let a = custom.resolvent(0.2, x).unwrap();
            let b = LOG.resolvent(0.2, x).unwrap();
            assert!((a - b).abs() < 1e-11, "x={x}: {a} vs {b}");
        }
        fn cubic(x: f64) -> f64 {
            x * x * x
        }
        fn quartic(x: f64) -> f64 {
            0.25 * x * x * x * x
        }
        let unbounded = ScalarGraph::Custom(CustomGraph { lo: f64::NEG_INFINITY, hi: f64::INFINITY, beta: cubic, f1: quartic });
        let poly = ScalarGraph::Poly { c: 1.0 };
        for &x in &[-40.0, -1.0, 0.0, 2.5, 100.0] {
            assert!((unbounded.resolvent(0.5, x).unwrap() - poly.resolvent(0.5, x).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn malformed_custom_graph_fails() {
        fn nan(_: f64) -> f64 {
            f64::NAN
        }
        let broken = ScalarGraph::Custom(CustomGraph { lo: f64::NEG_INFINITY, hi: f64::INFINITY, beta: nan, f1: nan });
        assert!(matches!(broken.resolvent(1.0, 0.3), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn moreau_envelope_is_primitive_of_yosida() {
        for graph in [LOG, ScalarGraph::Obstacle { lo: 0.0, hi: 1.0 }, ScalarGraph::Poly { c: 1.0 }] {
            let eps = 0.1;
            for &x in &[-0.4, 0.3, 0.8, 1.2] {
                let d = 1e-5;
                let fd = (graph.moreau_envelope(eps, x + d).unwrap() - graph.moreau_envelope(eps, x - d).unwrap()) / (2.0 * d);
                let beta = graph.yosida(eps, x).unwrap();
                assert!((fd - beta).abs() < 1e-5 * (1.0 + beta.abs()), "{graph:?} x={x}");
            }
        }
    }
}
