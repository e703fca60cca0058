//! Dense vector and matrix primitives shared by every model.
//!
//! Complex vectors use split-half storage: a buffer of even length `2n`
//! holds the `n` real parts followed by the `n` imaginary parts. Dense
//! matrices are square, row-major, and stored as flat slices of length `d*d`.

use crate::error::{KgeError, Result};

/// L1 norm, squared L2 norm and cubed L3 norm of one vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2_sq: f64,
    pub l3_cubed: f64,
}

fn check_same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(KgeError::Dimension(format!(
            "{what}: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_even(len: usize) -> Result<()> {
    if !len.is_multiple_of(2) {
        return Err(KgeError::Dimension(format!(
            "complex vector storage must have even length, got {len}"
        )));
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Elementwise product of two real vectors.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Elementwise product of two split-half complex vectors.
pub fn complex_hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() / 2;
    let mut out = vec![0.0; a.len()];
    for d in 0..n {
        let (ar, ai) = (a[d], a[n + d]);
        let (br, bi) = (b[d], b[n + d]);
        out[d] = ar * br - ai * bi;
        out[n + d] = ar * bi + ai * br;
    }
    out
}

/// Complex conjugate of a split-half vector.
pub fn conj(a: &[f64]) -> Vec<f64> {
    let n = a.len() / 2;
    a.iter()
        .enumerate()
        .map(|(i, &x)| if i < n { x } else { -x })
        .collect()
}

/// `Re(sum_d conj(u_d) * r_d * v_d)` over split-half complex vectors.
pub fn re_trilinear(u: &[f64], r: &[f64], v: &[f64]) -> Result<f64> {
    check_same_len(u, r, "re_trilinear")?;
    check_same_len(u, v, "re_trilinear")?;
    check_even(u.len())?;
    let n = u.len() / 2;
    let mut acc = 0.0;
    for d in 0..n {
        let (ua, ub) = (u[d], u[n + d]);
        let (ra, rb) = (r[d], r[n + d]);
        let (va, vb) = (v[d], v[n + d]);
        // conj(u) * r
        let wa = ua * ra + ub * rb;
        let wb = ua * rb - ub * ra;
        acc += wa * va - wb * vb;
    }
    Ok(acc)
}

/// Row vector times a square row-major matrix: returns `u · m`.
pub fn row_matvec(u: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    let d = u.len();
    if m.len() != d * d {
        return Err(KgeError::Dimension(format!(
            "row_matvec: vector of length {d} against matrix storage of length {}",
            m.len()
        )));
    }
    let mut out = vec![0.0; d];
    row_matvec_into(u, m, &mut out);
    Ok(out)
}

pub(crate) fn row_matvec_into(u: &[f64], m: &[f64], out: &mut [f64]) {
    let d = u.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let row = &m[i * d..(i + 1) * d];
        for (o, &mij) in out.iter_mut().zip(row) {
            *o += ui * mij;
        }
    }
}

/// `v · mᵀ`, i.e. `m · v` read as a row vector.
pub fn row_matvec_transposed(v: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    let d = v.len();
    if m.len() != d * d {
        return Err(KgeError::Dimension(format!(
            "row_matvec_transposed: vector of length {d} against matrix storage of length {}",
            m.len()
        )));
    }
    Ok((0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect())
}

/// Norms of a real vector.
pub fn norms(x: &[f64]) -> Norms {
    x.iter().fold(
        Norms {
            l1: 0.0,
            l2_sq: 0.0,
            l3_cubed: 0.0,
        },
        |acc, &v| {
            let a = v.abs();
            Norms {
                l1: acc.l1 + a,
                l2_sq: acc.l2_sq + a * a,
                l3_cubed: acc.l3_cubed + a * a * a,
            }
        },
    )
}

/// Norms of a split-half complex vector; each entry contributes its modulus.
pub fn complex_norms(x: &[f64]) -> Result<Norms> {
    check_even(x.len())?;
    let n = x.len() / 2;
    let mut out = Norms {
        l1: 0.0,
        l2_sq: 0.0,
        l3_cubed: 0.0,
    };
    for d in 0..n {
        let sq = x[d] * x[d] + x[n + d] * x[n + d];
        let m = sq.sqrt();
        out.l1 += m;
        out.l2_sq += sq;
        out.l3_cubed += sq * m;
    }
    Ok(out)
}

pub fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
