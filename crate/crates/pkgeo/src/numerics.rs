//! Small numerical kernels shared across the geometry modules:
//! Gauss–Legendre quadrature, Chebyshev fits, fixed-step RK4, pairwise
//! summation, 2×2 solvers and a Nelder–Mead simplex search.

use std::sync::Arc;

use crate::expr::{self, Expr};

/// Pairwise (cascade) summation: deterministic and with O(log n) error
/// growth, used for every quadrature reduction so reports are reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Gauss–Legendre rule on [-1, 1]; nodes by Newton iteration on Pₙ.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Tricomi-style initial guess, then Newton on Pₙ.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        nodes.reverse();
        weights.reverse();
        GaussLegendre { nodes, weights }
    }

    /// ∫ₐᵇ f, propagating the first integrand error.
    pub fn integrate<E>(
        &self,
        a: f64,
        b: f64,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut terms = Vec::with_capacity(self.nodes.len());
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            terms.push(w * f(mid + half * x)?);
        }
        Ok(half * pairwise_sum(&terms))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Parameter rectangle [s₀,s₁]×[t₀,t₁].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub s0: f64,
    pub s1: f64,
    pub t0: f64,
    pub t1: f64,
}

impl Rect {
    pub fn new(s0: f64, s1: f64, t0: f64, t1: f64) -> Rect {
        Rect { s0, s1, t0, t1 }
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        s >= self.s0 && s <= self.s1 && t >= self.t0 && t <= self.t1
    }

    pub fn area(&self) -> f64 {
        (self.s1 - self.s0) * (self.t1 - self.t0)
    }

    fn quarters(&self) -> [Rect; 4] {
        let sm = 0.5 * (self.s0 + self.s1);
        let tm = 0.5 * (self.t0 + self.t1);
        [
            Rect::new(self.s0, sm, self.t0, tm),
            Rect::new(sm, self.s1, self.t0, tm),
            Rect::new(self.s0, sm, tm, self.t1),
            Rect::new(sm, self.s1, tm, self.t1),
        ]
    }
}

/// Tensor-product Gauss–Legendre over a rectangle.
pub fn quad2d<E>(
    rule: &GaussLegendre,
    rect: Rect,
    f: &mut impl FnMut(f64, f64) -> Result<f64, E>,
) -> Result<f64, E> {
    let sm = 0.5 * (rect.s0 + rect.s1);
    let sh = 0.5 * (rect.s1 - rect.s0);
    let tm = 0.5 * (rect.t0 + rect.t1);
    let th = 0.5 * (rect.t1 - rect.t0);
    let n = rule.nodes.len();
    let mut terms = Vec::with_capacity(n * n);
    for (xs, ws) in rule.nodes.iter().zip(&rule.weights) {
        for (xt, wt) in rule.nodes.iter().zip(&rule.weights) {
            terms.push(ws * wt * f(sm + sh * xs, tm + th * xt)?);
        }
    }
    Ok(sh * th * pairwise_sum(&terms))
}

/// Result of adaptive integration: value, disagreement estimate between the
/// two finest passes, and number of leaf cells used.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub cells: usize,
}

/// Integrate with an order-doubling error estimate; subdivide the rectangle
/// while the two estimates disagree. Handles integrands that are continuous
/// but only piecewise-smooth (e.g. |λ−μ| across umbilic lines).
pub fn quad2d_adaptive<E>(
    order: usize,
    rect: Rect,
    rel_tol: f64,
    max_depth: usize,
    f: &mut impl FnMut(f64, f64) -> Result<f64, E>,
) -> Result<QuadResult, E> {
    let coarse_rule = GaussLegendre::new(order);
    let fine_rule = GaussLegendre::new(2 * order);
    let mut out = QuadResult {
        value: 0.0,
        error_estimate: 0.0,
        cells: 0,
    };
    let mut stack = vec![(rect, 0usize)];
    let mut values = Vec::new();
    while let Some((cell, depth)) = stack.pop() {
        let coarse = quad2d(&coarse_rule, cell, f)?;
        let fine = quad2d(&fine_rule, cell, f)?;
        let scale = 1.0 + fine.abs();
        if (coarse - fine).abs() <= rel_tol * scale || depth >= max_depth {
            values.push(fine);
            out.error_estimate += (coarse - fine).abs();
            out.cells += 1;
        } else {
            for q in cell.quarters() {
                stack.push((q, depth + 1));
            }
        }
    }
    out.value = pairwise_sum(&values);
    Ok(out)
}

/// One classical RK4 step for y' = f(t, y).
pub fn rk4_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let k1 = f(t, y);
    let mut y2 = *y;
    for i in 0..N {
        y2[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(t + 0.5 * h, &y2);
    let mut y3 = *y;
    for i in 0..N {
        y3[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = f(t + 0.5 * h, &y3);
    let mut y4 = *y;
    for i in 0..N {
        y4[i] = y[i] + h * k3[i];
    }
    let k4 = f(t + h, &y4);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Chebyshev interpolant on [a, b], stored as Chebyshev coefficients.
#[derive(Debug, Clone)]
pub struct ChebFit {
    pub a: f64,
    pub b: f64,
    pub coef: Vec<f64>,
}

/// First-kind Chebyshev points mapped to [a, b], ascending.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> Vec<f64> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            mid - half * theta.cos()
        })
        .collect()
}

impl ChebFit {
    /// Interpolate values sampled at `chebyshev_nodes(values.len(), a, b)`.
    pub fn from_values(values: &[f64], a: f64, b: f64) -> ChebFit {
        let n = values.len();
        let mut coef = vec![0.0; n];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut acc = Vec::with_capacity(n);
            for (k, v) in values.iter().enumerate() {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                // Nodes ascend, so node k sits at angle π − θ_k; fold the
                // sign into the cosine directly.
                acc.push(v * ((j as f64) * (std::f64::consts::PI - theta)).cos());
            }
            *c = 2.0 / n as f64 * pairwise_sum(&acc);
        }
        coef[0] *= 0.5;
        ChebFit { a, b, coef }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = (2.0 * x - self.a - self.b) / (self.b - self.a);
        // Clenshaw recurrence.
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * y * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        self.coef[0] + y * b1 - b2
    }

    /// Monomial coefficients in the normalized variable y = (2x−a−b)/(b−a).
    /// Trailing coefficients at the roundoff floor are dropped first: the
    /// conversion scales |c_k| by up to 2^{k−1}, so a converged tail of
    /// ~1e-16 noise would otherwise dominate the result at high degree.
    pub fn to_monomial(&self) -> Vec<f64> {
        let floor = 1e-14
            * self
                .coef
                .iter()
                .fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let n = self
            .coef
            .iter()
            .rposition(|c| c.abs() > floor)
            .map_or(1, |k| k + 1);
        let mut out = vec![0.0; n];
        // T_k in monomial form by the recurrence T_{k+1} = 2yT_k − T_{k−1}.
        let mut tprev = vec![0.0; n];
        let mut tcur = vec![0.0; n];
        tprev[0] = 1.0;
        if n > 1 {
            tcur[1] = 1.0;
        }
        out[0] += self.coef[0];
        if n > 1 {
            for (o, t) in out.iter_mut().zip(&tcur) {
                *o += self.coef[1] * t;
            }
        }
        for k in 2..n {
            let mut tnext = vec![0.0; n];
            for i in 0..n - 1 {
                tnext[i + 1] += 2.0 * tcur[i];
            }
            for i in 0..n {
                tnext[i] -= tprev[i];
            }
            for (o, t) in out.iter_mut().zip(&tnext) {
                *o += self.coef[k] * t;
            }
            tprev = tcur;
            tcur = tnext;
        }
        out
    }

    /// Horner-form AST in `var`, written in the normalized variable so the
    /// polynomial is evaluated where it is well-conditioned.
    pub fn to_expr(&self, var: &str) -> Arc<Expr> {
        let mono = self.to_monomial();
        let y = expr::div(
            expr::sub(
                expr::mul(expr::cst(2.0), expr::var(var)),
                expr::cst(self.a + self.b),
            ),
            expr::cst(self.b - self.a),
        );
        let mut acc = expr::cst(*mono.last().unwrap_or(&0.0));
        for c in mono.iter().rev().skip(1) {
            acc = expr::add(expr::cst(*c), expr::mul(y.clone(), acc));
        }
        acc
    }
}

/// Solve a 2×2 system; `None` when the determinant underflows the scale.
pub fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m[0][0].abs().max(m[0][1].abs()).max(m[1][0].abs()).max(m[1][1].abs());
    if det.abs() <= 1e-14 * scale * scale.max(1.0) {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

/// Eigenvalues of a real 2×2 matrix with real spectrum (shape operators).
/// A slightly negative discriminant from roundoff is clamped to zero.
pub fn eig2_real(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    // (tr²/4 − det) in the cancellation-free form ((a−d)/2)² + bc, so
    // near-scalar matrices do not acquire a spurious O(√ulp) splitting.
    let half_gap = 0.5 * (m[0][0] - m[1][1]);
    let disc = (half_gap * half_gap + m[0][1] * m[1][0]).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

/// Nelder–Mead simplex minimization; deterministic for a fixed start.
pub fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    scale: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += scale;
        let v = f(&p);
        simplex.push((p, v));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let worst = simplex[n].clone();
        let mut centroid = vec![0.0; n];
        for (p, _) in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let blend = |alpha: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + alpha * (c - w))
                .collect()
        };
        let refl = blend(1.0);
        let refl_v = f(&refl);
        if refl_v < simplex[0].1 {
            let exp = blend(2.0);
            let exp_v = f(&exp);
            simplex[n] = if exp_v < refl_v { (exp, exp_v) } else { (refl, refl_v) };
        } else if refl_v < simplex[n - 1].1 {
            simplex[n] = (refl, refl_v);
        } else {
            let contr = blend(-0.5);
            let contr_v = f(&contr);
            if contr_v < worst.1 {
                simplex[n] = (contr, contr_v);
            } else {
                let best = simplex[0].0.clone();
                for (p, v) in simplex.iter_mut().skip(1) {
                    for (x, b) in p.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    *v = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0].clone()
}
