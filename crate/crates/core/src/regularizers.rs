//! Per-example penalties (Frobenius, N3, the DURA family, the L1
//! variant and the temporal variants) and the timestamp smoothers, each with
//! an analytic gradient.
//!
//! Static penalties act on `(u, r, v)`. On temporal models they see the
//! time-dependent relation: `r ∘ t` for TComplEx and `R ⊙ T` for TRESCAL.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::algebra::{complex_hadamard, conj, row_matvec_into};
use crate::error::{KgeError, Result};
use crate::models::{BatchExample, Gradients, ModelKind, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    None,
    Fro,
    N3,
    Dura,
    DuraI,
    DuraII,
    RegP1,
    TDura1,
    TDura2,
    TWeighted,
}

impl RegKind {
    pub const ALL: [RegKind; 10] = [
        RegKind::None,
        RegKind::Fro,
        RegKind::N3,
        RegKind::Dura,
        RegKind::DuraI,
        RegKind::DuraII,
        RegKind::RegP1,
        RegKind::TDura1,
        RegKind::TDura2,
        RegKind::TWeighted,
    ];

    pub fn is_temporal(self) -> bool {
        matches!(self, RegKind::TDura1 | RegKind::TDura2 | RegKind::TWeighted)
    }

    pub fn name(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::Fro => "fro",
            RegKind::N3 => "n3",
            RegKind::Dura => "dura",
            RegKind::DuraI => "dura1-basic",
            RegKind::DuraII => "dura2-basic",
            RegKind::RegP1 => "reg-p1",
            RegKind::TDura1 => "tdura1",
            RegKind::TDura2 => "tdura2",
            RegKind::TWeighted => "tweighted",
        }
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "dura_i" | "dura-i" => Some(RegKind::DuraI),
            "dura_ii" | "dura-ii" => Some(RegKind::DuraII),
            "reg_p1" | "regp1" => Some(RegKind::RegP1),
            _ => None,
        };
        alias
            .or_else(|| RegKind::ALL.into_iter().find(|k| k.name() == s))
            .ok_or_else(|| KgeError::Config(format!("unknown regularizer '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    None,
    /// Mean squared Frobenius norm of consecutive timestamp differences.
    L2,
    /// Mean cubed L3 norm of consecutive timestamp differences.
    L3,
}

impl SmootherKind {
    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::None => "none",
            SmootherKind::L2 => "l2",
            SmootherKind::L3 => "l3",
        }
    }
}

impl FromStr for SmootherKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SmootherKind::None),
            "l2" => Ok(SmootherKind::L2),
            "l3" => Ok(SmootherKind::L3),
            other => Err(KgeError::Config(format!("unknown smoother '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegSpec {
    pub kind: RegKind,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub smoother: SmootherKind,
    pub smoother_weight: f64,
    /// Project tails with `conj(r)` instead of `r` in the reverse term. Only
    /// the L1 variant can tell the two apart; squared moduli cannot.
    pub conjugate_tail_projection: bool,
}

impl Default for RegSpec {
    fn default() -> Self {
        RegSpec {
            kind: RegKind::None,
            lambda: 0.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            smoother: SmootherKind::None,
            smoother_weight: 1.0,
            conjugate_tail_projection: false,
        }
    }
}

impl RegSpec {
    pub fn new(kind: RegKind, lambda: f64) -> Self {
        RegSpec {
            kind,
            lambda,
            ..Default::default()
        }
    }

    pub fn with_weights(mut self, l1: f64, l2: f64, l3: f64, l4: f64) -> Self {
        self.lambda1 = l1;
        self.lambda2 = l2;
        self.lambda3 = l3;
        self.lambda4 = l4;
        self
    }

    /// Rejects combinations the model cannot support.
    pub fn validate(&self, model: ModelKind) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("smoother weight", self.smoother_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(KgeError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.kind.is_temporal() && !model.is_temporal() {
            return Err(KgeError::Unsupported(format!(
                "{} needs a temporal model, got {model}",
                self.kind
            )));
        }
        if self.smoother != SmootherKind::None && !model.is_temporal() {
            return Err(KgeError::Unsupported(format!(
                "timestamp smoother needs a temporal model, got {model}"
            )));
        }
        if self.kind == RegKind::N3 && model.has_dense_relations() {
            return Err(KgeError::Unsupported(format!(
                "n3 needs diagonal relations, got {model}"
            )));
        }
        if model == ModelKind::TRescal {
            let uses_split_terms = self.kind == RegKind::TDura2
                || (self.kind == RegKind::TWeighted && (self.lambda1 > 0.0 || self.lambda2 > 0.0));
            if uses_split_terms {
                return Err(KgeError::Unsupported(
                    "trescal cannot separate relation and time projections (matrix products do not commute)"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// Unweighted (no `λ`) penalty of a static kind on one example.
pub fn static_penalty(spec: &RegSpec, params: &ModelParams, ex: &BatchExample) -> Result<f64> {
    if spec.kind.is_temporal() {
        return Err(KgeError::Config(format!("{} is a temporal penalty", spec.kind)));
    }
    example_penalty(spec, params, ex, None, 0.0)
}

/// Unweighted (no `λ`) penalty of a temporal kind on one example.
pub fn temporal_penalty(spec: &RegSpec, params: &ModelParams, ex: &BatchExample) -> Result<f64> {
    if !spec.kind.is_temporal() {
        return Err(KgeError::Config(format!("{} is a static penalty", spec.kind)));
    }
    example_penalty(spec, params, ex, None, 0.0)
}

/// Penalty of one example; when `grads` is given, `scale` times the penalty
/// gradient is accumulated into it.
pub fn example_penalty(
    spec: &RegSpec,
    params: &ModelParams,
    ex: &BatchExample,
    grads: Option<&mut Gradients>,
    scale: f64,
) -> Result<f64> {
    if spec.kind == RegKind::None {
        return Ok(0.0);
    }
    spec.validate(params.kind)?;
    params.validate_ids(ex.head, ex.relation, ex.tail, ex.time)?;
    let ctx = Ctx::new(params, ex);
    let mut g = ctx.zero_grads();
    let value = if spec.kind.is_temporal() {
        temporal_value(spec, &ctx, &mut g)
    } else {
        static_value(spec, &ctx, &mut g)
    };
    if let Some(out) = grads {
        ctx.scatter(&g, scale, out);
    }
    Ok(value)
}

/// Gradients of one example's penalty with respect to its rows.
struct LocalGrads {
    u: Vec<f64>,
    v: Vec<f64>,
    /// With respect to the (possibly time-dependent) relation.
    r_eff: Vec<f64>,
    /// Direct relation and timestamp parts, used by temporal kinds.
    r: Vec<f64>,
    t: Vec<f64>,
}

struct Ctx<'a> {
    kind: ModelKind,
    ex: BatchExample,
    complex: bool,
    dense: bool,
    dim: usize,
    u: &'a [f64],
    v: &'a [f64],
    r: &'a [f64],
    t: Option<&'a [f64]>,
    r_eff: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(p: &'a ModelParams, ex: &BatchExample) -> Self {
        let r = p.relation_row(ex.relation);
        let t = ex.time.and_then(|l| p.time_row(l));
        let r_eff = match (p.kind, t) {
            (ModelKind::TComplEx, Some(t)) => complex_hadamard(r, t),
            (ModelKind::TRescal, Some(t)) => r.iter().zip(t).map(|(a, b)| a * b).collect(),
            _ => r.to_vec(),
        };
        Ctx {
            kind: p.kind,
            ex: *ex,
            complex: p.kind.is_complex(),
            dense: p.kind.has_dense_relations(),
            dim: p.dim,
            u: p.head_row(ex.head),
            v: p.tail_row(ex.tail),
            r,
            t,
            r_eff,
        }
    }

    fn zero_grads(&self) -> LocalGrads {
        let w = self.r.len();
        LocalGrads {
            u: vec![0.0; self.dim],
            v: vec![0.0; self.dim],
            r_eff: vec![0.0; w],
            r: vec![0.0; w],
            t: vec![0.0; w],
        }
    }

    /// Chains `r_eff` gradients back to relation and timestamp rows and adds
    /// everything, scaled, into the batch gradient.
    fn scatter(&self, g: &LocalGrads, scale: f64, out: &mut Gradients) {
        let mut dr = g.r.clone();
        let mut dt = g.t.clone();
        match (self.kind, self.t) {
            (ModelKind::TComplEx, Some(t)) => {
                let (a, b) = complex_mul_backward(self.r, t, &g.r_eff);
                add(&mut dr, &a, 1.0);
                add(&mut dt, &b, 1.0);
            }
            (ModelKind::TRescal, Some(t)) => {
                for k in 0..dr.len() {
                    dr[k] += g.r_eff[k] * t[k];
                    dt[k] += g.r_eff[k] * self.r[k];
                }
            }
            _ => add(&mut dr, &g.r_eff, 1.0),
        }
        let s = |x: &[f64]| x.iter().map(|a| a * scale).collect::<Vec<_>>();
        out.add_head(self.ex.head, &s(&g.u));
        out.add_tail(self.ex.tail, &s(&g.v));
        out.add_relation(self.ex.relation, &s(&dr));
        if let Some(l) = self.ex.time {
            if self.t.is_some() {
                out.add_time(l, &s(&dt));
            }
        }
    }
}

fn add(a: &mut [f64], b: &[f64], s: f64) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
}

fn complex_mul_backward(a: &[f64], b: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len() / 2;
    let mut da = vec![0.0; a.len()];
    let mut db = vec![0.0; a.len()];
    for k in 0..n {
        let (ar, ai, br, bi) = (a[k], a[n + k], b[k], b[n + k]);
        let (gr, gi) = (dout[k], dout[n + k]);
        da[k] = gr * br + gi * bi;
        da[n + k] = -gr * bi + gi * br;
        db[k] = gr * ar + gi * ai;
        db[n + k] = -gr * ai + gi * ar;
    }
    (da, db)
}

/// Per-coordinate squared moduli: `x_k²` for real vectors, `|x_k|²` for
/// split-half complex ones.
fn sq_moduli(x: &[f64], complex: bool) -> Vec<f64> {
    if complex {
        let n = x.len() / 2;
        (0..n).map(|k| x[k] * x[k] + x[n + k] * x[n + k]).collect()
    } else {
        x.iter().map(|a| a * a).collect()
    }
}

/// Which rows enter a product-of-moduli term.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Factor {
    U,
    V,
    /// The time-dependent relation (plain relation on static models).
    REff,
    R,
    T,
}

/// `coef · Σ_k Π_{f ∈ factors} |f_k|²`, with gradients.
fn diag_term(ctx: &Ctx<'_>, coef: f64, factors: &[Factor], g: &mut LocalGrads) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let rows: Vec<&[f64]> = factors
        .iter()
        .map(|f| match f {
            Factor::U => ctx.u,
            Factor::V => ctx.v,
            Factor::REff => ctx.r_eff.as_slice(),
            Factor::R => ctx.r,
            Factor::T => ctx.t.expect("temporal factor on a static model"),
        })
        .collect();
    let mods: Vec<Vec<f64>> = rows.iter().map(|x| sq_moduli(x, ctx.complex)).collect();
    let n = mods[0].len();
    let mut value = 0.0;
    for k in 0..n {
        value += mods.iter().map(|m| m[k]).product::<f64>();
    }
    for (i, f) in factors.iter().enumerate() {
        let dst = match f {
            Factor::U => &mut g.u,
            Factor::V => &mut g.v,
            Factor::REff => &mut g.r_eff,
            Factor::R => &mut g.r,
            Factor::T => &mut g.t,
        };
        let x = rows[i];
        for k in 0..n {
            let others: f64 = mods
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, m)| m[k])
                .product();
            let c = 2.0 * coef * others;
            dst[k] += c * x[k];
            if ctx.complex {
                dst[n + k] += c * x[n + k];
            }
        }
    }
    coef * value
}

/// `coef · ‖x‖²` on u or v.
fn sq_term(coef: f64, x: &[f64], dst: &mut [f64]) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    add(dst, x, 2.0 * coef);
    coef * x.iter().map(|a| a * a).sum::<f64>()
}

/// `coef · ‖x · M‖²` for a row vector `x` and dense `M`, with `transpose`
/// selecting `‖x · Mᵀ‖²`.
fn dense_proj_term(
    coef: f64,
    x: &[f64],
    m: &[f64],
    transpose: bool,
    dx: &mut [f64],
    dm: &mut [f64],
) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let d = x.len();
    let q = dense_proj(x, m, transpose);
    for i in 0..d {
        for j in 0..d {
            let mij = m[i * d + j];
            if transpose {
                // q_i = Σ_j M_ij x_j
                dx[j] += 2.0 * coef * q[i] * mij;
                dm[i * d + j] += 2.0 * coef * q[i] * x[j];
            } else {
                // q_j = Σ_i x_i M_ij
                dx[i] += 2.0 * coef * q[j] * mij;
                dm[i * d + j] += 2.0 * coef * x[i] * q[j];
            }
        }
    }
    coef * q.iter().map(|a| a * a).sum::<f64>()
}

fn dense_proj(x: &[f64], m: &[f64], transpose: bool) -> Vec<f64> {
    let d = x.len();
    let mut q = vec![0.0; d];
    if transpose {
        for i in 0..d {
            q[i] = crate::algebra::dot(&m[i * d..(i + 1) * d], x);
        }
    } else {
        row_matvec_into(x, m, &mut q);
    }
    q
}

/// DURA-style combination: `a·(‖u‖² + ‖v‖²)` plus `b_head·‖u∘conj(r)‖²` and
/// `b_tail·‖v∘r‖²` (or their dense forms) on the time-dependent relation.
fn dura_like(ctx: &Ctx<'_>, plain_u: f64, plain_v: f64, b_head: f64, b_tail: f64, g: &mut LocalGrads) -> f64 {
    let mut value = sq_term(plain_u, ctx.u, &mut g.u) + sq_term(plain_v, ctx.v, &mut g.v);
    if ctx.dense {
        let m = ctx.r_eff.as_slice();
        value += dense_proj_term(b_head, ctx.u, m, false, &mut g.u, &mut g.r_eff);
        value += dense_proj_term(b_tail, ctx.v, m, true, &mut g.v, &mut g.r_eff);
    } else {
        value += diag_term(ctx, b_head, &[Factor::U, Factor::REff], g);
        value += diag_term(ctx, b_tail, &[Factor::V, Factor::REff], g);
    }
    value
}

fn static_value(spec: &RegSpec, ctx: &Ctx<'_>, g: &mut LocalGrads) -> f64 {
    match spec.kind {
        RegKind::DuraI => dura_like(ctx, 0.0, 1.0, 1.0, 0.0, g),
        RegKind::DuraII => dura_like(ctx, 1.0, 0.0, 0.0, 1.0, g),
        RegKind::Dura => dura_like(ctx, spec.lambda1, spec.lambda1, spec.lambda2, spec.lambda2, g),
        RegKind::Fro => {
            sq_term(1.0, ctx.u, &mut g.u)
                + sq_term(1.0, ctx.v, &mut g.v)
                + sq_term(1.0, &ctx.r_eff, &mut g.r_eff)
        }
        RegKind::N3 => {
            cube_term(ctx.u, ctx.complex, &mut g.u)
                + cube_term(ctx.v, ctx.complex, &mut g.v)
                + cube_term(&ctx.r_eff, ctx.complex, &mut g.r_eff)
        }
        RegKind::RegP1 => reg_p1(spec, ctx, g),
        _ => unreachable!("temporal kinds are dispatched separately"),
    }
}

fn temporal_value(spec: &RegSpec, ctx: &Ctx<'_>, g: &mut LocalGrads) -> f64 {
    use Factor::*;
    let (l1, l2, l3, l4) = match spec.kind {
        RegKind::TDura1 => (0.0, 0.0, 1.0, 1.0),
        RegKind::TDura2 => (1.0, 1.0, 0.0, 0.0),
        RegKind::TWeighted => (spec.lambda1, spec.lambda2, spec.lambda3, spec.lambda4),
        _ => unreachable!("static kinds are dispatched separately"),
    };
    let mut value = dura_like(ctx, l3, l3, l4, l4, g);
    if !ctx.dense {
        value += diag_term(ctx, l1, &[U, R], g) + diag_term(ctx, l1, &[V, T], g);
        value += diag_term(ctx, l2, &[U, T], g) + diag_term(ctx, l2, &[V, R], g);
    }
    value
}

/// `Σ_k |x_k|³` with gradient `3|x_k| x_k`.
fn cube_term(x: &[f64], complex: bool, dst: &mut [f64]) -> f64 {
    if complex {
        let n = x.len() / 2;
        let mut value = 0.0;
        for k in 0..n {
            let m = (x[k] * x[k] + x[n + k] * x[n + k]).sqrt();
            value += m * m * m;
            dst[k] += 3.0 * m * x[k];
            dst[n + k] += 3.0 * m * x[n + k];
        }
        value
    } else {
        x.iter()
            .zip(dst.iter_mut())
            .map(|(&a, d)| {
                *d += 3.0 * a.abs() * a;
                a.abs().powi(3)
            })
            .sum()
    }
}

/// `Σ_k |z_k|` (complex modulus when `complex`) and its subgradient, zero at 0.
fn l1_with_grad(z: &[f64], complex: bool) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; z.len()];
    if complex {
        let n = z.len() / 2;
        let mut value = 0.0;
        for k in 0..n {
            let m = (z[k] * z[k] + z[n + k] * z[n + k]).sqrt();
            value += m;
            if m > 0.0 {
                g[k] = z[k] / m;
                g[n + k] = z[n + k] / m;
            }
        }
        (value, g)
    } else {
        let value = z.iter().map(|a| a.abs()).sum();
        for (gi, &a) in g.iter_mut().zip(z) {
            *gi = if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        (value, g)
    }
}

/// `‖u∘conj(r) − v‖₁ + ‖v∘r − u‖₁`, or `‖uM − v‖₁ + ‖vMᵀ − u‖₁` for dense relations.
fn reg_p1(spec: &RegSpec, ctx: &Ctx<'_>, g: &mut LocalGrads) -> f64 {
    let d = ctx.dim;
    if ctx.dense {
        let m = ctx.r_eff.as_slice();
        let mut value = 0.0;
        for transpose in [false, true] {
            let (x, y) = if transpose { (ctx.v, ctx.u) } else { (ctx.u, ctx.v) };
            let q = dense_proj(x, m, transpose);
            let z: Vec<f64> = q.iter().zip(y).map(|(a, b)| a - b).collect();
            let (val, gz) = l1_with_grad(&z, false);
            value += val;
            // z = proj(x) − y
            let (gx, gy) = if transpose {
                (&mut g.v, &mut g.u)
            } else {
                (&mut g.u, &mut g.v)
            };
            for i in 0..d {
                for j in 0..d {
                    let k = i * d + j;
                    if transpose {
                        // q_i = Σ_j M_ij x_j
                        gx[j] += gz[i] * m[k];
                        g.r_eff[k] += gz[i] * x[j];
                    } else {
                        // q_j = Σ_i x_i M_ij
                        gx[i] += gz[j] * m[k];
                        g.r_eff[k] += x[i] * gz[j];
                    }
                }
            }
            add(gy, &gz, -1.0);
        }
        return value;
    }
    let complex = ctx.complex;
    let r = ctx.r_eff.as_slice();
    let mul = |a: &[f64], b: &[f64]| -> Vec<f64> {
        if complex {
            complex_hadamard(a, b)
        } else {
            a.iter().zip(b).map(|(x, y)| x * y).collect()
        }
    };
    let mul_back = |a: &[f64], b: &[f64], go: &[f64]| -> (Vec<f64>, Vec<f64>) {
        if complex {
            complex_mul_backward(a, b, go)
        } else {
            (
                go.iter().zip(b).map(|(x, y)| x * y).collect(),
                go.iter().zip(a).map(|(x, y)| x * y).collect(),
            )
        }
    };
    let mut value = 0.0;
    // head term uses conj(r); tail term uses r, or conj(r) when configured
    for (tail_term, use_conj) in [(false, true), (true, spec.conjugate_tail_projection)] {
        let rr = if use_conj && complex { conj(r) } else { r.to_vec() };
        let (x, y) = if tail_term { (ctx.v, ctx.u) } else { (ctx.u, ctx.v) };
        let p = mul(x, &rr);
        let z: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
        let (val, gz) = l1_with_grad(&z, complex);
        value += val;
        let (gx_local, grr) = mul_back(x, &rr, &gz);
        let gr = if use_conj && complex { conj(&grr) } else { grr };
        add(&mut g.r_eff, &gr, 1.0);
        let (gx, gy) = if tail_term {
            (&mut g.v, &mut g.u)
        } else {
            (&mut g.u, &mut g.v)
        };
        add(gx, &gx_local, 1.0);
        add(gy, &gz, -1.0);
    }
    value
}

/// Timestamp smoother over the first `chain_len` rows of the timestamp table
/// (the untimed slot, if any, is excluded by the caller). Returns the value
/// and, when `grad` is given, accumulates `scale` times its gradient.
pub fn timestamp_smoother(
    kind: SmootherKind,
    model: ModelKind,
    table: &Array2<f64>,
    chain_len: usize,
    grad: Option<&mut Gradients>,
    scale: f64,
) -> f64 {
    if kind == SmootherKind::None {
        return 0.0;
    }
    let n = chain_len.min(table.nrows());
    if n < 2 {
        log::warn!("timestamp smoother needs at least two timestamps; returning 0");
        return 0.0;
    }
    let complex = model.is_complex();
    let norm = 1.0 / (n - 1) as f64;
    let mut value = 0.0;
    let mut dt: Vec<Vec<f64>> = vec![vec![0.0; table.ncols()]; n];
    for l in 0..n - 1 {
        let a = table.row(l);
        let b = table.row(l + 1);
        let diff: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
        let mut gd = vec![0.0; diff.len()];
        value += match kind {
            SmootherKind::L2 => sq_term(1.0, &diff, &mut gd),
            SmootherKind::L3 => cube_term(&diff, complex, &mut gd),
            SmootherKind::None => unreachable!(),
        };
        add(&mut dt[l + 1], &gd, norm);
        add(&mut dt[l], &gd, -norm);
    }
    if let Some(out) = grad {
        for (l, g) in dt.iter().enumerate() {
            let s: Vec<f64> = g.iter().map(|x| x * scale).collect();
            out.add_time(l as u32, &s);
        }
    }
    value * norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Shape;
    use ndarray::arr1;

    fn static_params(kind: ModelKind, dim: usize, u: &[f64], r: &[f64], v: &[f64]) -> ModelParams {
        let mut p = ModelParams::zeros(
            kind,
            dim,
            Shape {
                entities: 2,
                relations: 1,
                timestamps: 1,
            },
        )
        .unwrap();
        p.entity.row_mut(0).assign(&arr1(u));
        if let Some(t) = &mut p.tail {
            t.row_mut(1).assign(&arr1(v));
        } else {
            p.entity.row_mut(1).assign(&arr1(v));
        }
        p.relation.row_mut(0).assign(&arr1(r));
        p
    }

    fn ex(time: Option<u32>) -> BatchExample {
        BatchExample {
            head: 0,
            relation: 0,
            tail: 1,
            time,
            weight: 1.0,
        }
    }

    #[test]
    fn zero_parameters_give_zero_penalty() {
        for model in ModelKind::ALL {
            let p = ModelParams::zeros(
                model,
                4,
                Shape {
                    entities: 2,
                    relations: 1,
                    timestamps: 2,
                },
            )
            .unwrap();
            let time = model.is_temporal().then_some(0);
            for kind in RegKind::ALL {
                let spec = RegSpec::new(kind, 1.0);
                if spec.validate(model).is_err() {
                    continue;
                }
                let v = example_penalty(&spec, &p, &ex(time), None, 0.0).unwrap();
                assert_eq!(v, 0.0, "{model} {kind}");
            }
        }
    }

    #[test]
    fn dura_cp_example() {
        let p = static_params(ModelKind::Cp, 2, &[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]);
        let spec = RegSpec::new(RegKind::Dura, 1.0);
        assert_eq!(static_penalty(&spec, &p, &ex(None)).unwrap(), 6.0);
    }

    #[test]
    fn n3_example() {
        let p = static_params(ModelKind::Cp, 2, &[1.0, 1.0], &[1.0, 0.0], &[2.0, 0.0]);
        let spec = RegSpec::new(RegKind::N3, 1.0);
        assert_eq!(static_penalty(&spec, &p, &ex(None)).unwrap(), 11.0);
    }

    #[test]
    fn reg_p1_example() {
        let p = static_params(ModelKind::Cp, 2, &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]);
        let spec = RegSpec::new(RegKind::RegP1, 1.0);
        assert_eq!(static_penalty(&spec, &p, &ex(None)).unwrap(), 4.0);
    }

    #[test]
    fn n3_rejected_on_rescal() {
        let p = static_params(ModelKind::Rescal, 2, &[1.0, 0.0], &[1.0; 4], &[0.0, 1.0]);
        let spec = RegSpec::new(RegKind::N3, 1.0);
        assert!(matches!(
            static_penalty(&spec, &p, &ex(None)),
            Err(KgeError::Unsupported(_))
        ));
    }

    #[test]
    fn temporal_kinds_rejected_on_static_models() {
        let p = static_params(ModelKind::Cp, 2, &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]);
        let spec = RegSpec::new(RegKind::TDura1, 1.0);
        assert!(temporal_penalty(&spec, &p, &ex(None)).is_err());
        assert!(static_penalty(&spec, &p, &ex(None)).is_err());
    }

    fn temporal_scalar(model: ModelKind) -> (ModelParams, BatchExample) {
        // one real coordinate: u = 1, r = 2, t = 3, v = 1
        let dim = if model.is_complex() { 2 } else { 1 };
        let mut p = ModelParams::zeros(
            model,
            dim,
            Shape {
                entities: 2,
                relations: 1,
                timestamps: 1,
            },
        )
        .unwrap();
        p.entity[[0, 0]] = 1.0;
        p.entity[[1, 0]] = 1.0;
        p.relation[[0, 0]] = 2.0;
        p.time.as_mut().unwrap()[[0, 0]] = 3.0;
        (p, ex(Some(0)))
    }

    #[test]
    fn tdura1_scalar_example() {
        let spec = RegSpec::new(RegKind::TDura1, 1.0);
        for model in [ModelKind::TComplEx, ModelKind::TRescal] {
            let (p, e) = temporal_scalar(model);
            assert_eq!(temporal_penalty(&spec, &p, &e).unwrap(), 74.0, "{model}");
        }
    }

    #[test]
    fn tdura2_scalar_example() {
        let (p, e) = temporal_scalar(ModelKind::TComplEx);
        let spec = RegSpec::new(RegKind::TDura2, 1.0);
        assert_eq!(temporal_penalty(&spec, &p, &e).unwrap(), 26.0);
        let (p, e) = temporal_scalar(ModelKind::TRescal);
        assert!(matches!(
            temporal_penalty(&spec, &p, &e),
            Err(KgeError::Unsupported(_))
        ));
    }

    #[test]
    fn conjugate_projection_only_matters_for_l1() {
        let p = static_params(
            ModelKind::ComplEx,
            4,
            &[0.3, -1.1, 0.7, 0.2],
            &[0.5, 0.9, -0.4, 1.3],
            &[-0.6, 0.8, 0.1, -0.9],
        );
        let e = ex(None);
        for kind in [RegKind::Dura, RegKind::DuraII, RegKind::Fro, RegKind::N3] {
            let plain = RegSpec::new(kind, 1.0);
            let conj = RegSpec {
                conjugate_tail_projection: true,
                ..plain
            };
            assert_eq!(
                static_penalty(&plain, &p, &e).unwrap(),
                static_penalty(&conj, &p, &e).unwrap()
            );
        }
        let plain = RegSpec::new(RegKind::RegP1, 1.0);
        let conj = RegSpec {
            conjugate_tail_projection: true,
            ..plain
        };
        assert_ne!(
            static_penalty(&plain, &p, &e).unwrap(),
            static_penalty(&conj, &p, &e).unwrap()
        );
    }

    #[test]
    fn smoother_examples() {
        let t2 = ndarray::arr2(&[[1.0], [3.0]]);
        assert_eq!(timestamp_smoother(SmootherKind::L2, ModelKind::TRescal, &t2, 2, None, 0.0), 4.0);
        let t3 = ndarray::arr2(&[[1.0, 0.0], [3.0, 0.0]]);
        assert_eq!(timestamp_smoother(SmootherKind::L3, ModelKind::TComplEx, &t3, 2, None, 0.0), 8.0);
        let flat = ndarray::arr2(&[[0.5, 0.2], [0.5, 0.2], [0.5, 0.2]]);
        assert_eq!(timestamp_smoother(SmootherKind::L3, ModelKind::TComplEx, &flat, 3, None, 0.0), 0.0);
        assert_eq!(timestamp_smoother(SmootherKind::L2, ModelKind::TComplEx, &flat, 1, None, 0.0), 0.0);
        // excluded trailing slot does not contribute
        let with_no_time = ndarray::arr2(&[[1.0], [3.0], [100.0]]);
        assert_eq!(
            timestamp_smoother(SmootherKind::L2, ModelKind::TRescal, &with_no_time, 2, None, 0.0),
            4.0
        );
    }

    #[test]
    fn parse_names() {
        for k in RegKind::ALL {
            assert_eq!(k.name().parse::<RegKind>().unwrap(), k);
        }
        assert_eq!("DURA_I".parse::<RegKind>().unwrap(), RegKind::DuraI);
        assert!("l4".parse::<SmootherKind>().is_err());
    }
}
