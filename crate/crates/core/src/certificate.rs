//! Stability certificates.
//!
//! A certificate `(P, M, L, s, α)` for a model `θ` consists of
//!
//! ```text
//!     ⎡ -α²P   0     PC2ᵀ+Lᵀ   PAᵀ  ⎤
//! F = ⎢  ⋆    -I     D21ᵀ      Bᵀ   ⎥ ≺ 0,     G_i = ⎡ 1/s²  l_i ⎤ ⪰ 0,
//!     ⎢  ⋆     ⋆    -2M        MB2ᵀ ⎥                ⎣ l_iᵀ   P  ⎦
//!     ⎣  ⋆     ⋆     ⋆        -P    ⎦
//! ```
//!
//! and `δ² ≤ (1-α²)s²`. When all hold, `E(P⁻¹/s²) ⊂ L(LP⁻¹)` is forward
//! invariant for every input sequence with `|u_k| ≤ δ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, Vector};
use crate::model::{Dimensions, ModelParams};
use crate::{Error, Result, SCHEMA_VERSION};

/// Shift added to `G_i` before the Cholesky test, so boundary cases that are
/// PSD up to rounding are accepted.
pub const EPS_PSD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub p: Mat,
    /// Diagonal of M.
    pub m: Vector,
    pub l: Mat,
    pub s: f64,
    pub alpha: f64,
}

/// Row/column offsets of the four block rows of `F`.
#[derive(Clone, Copy, Debug)]
pub struct FLayout {
    pub x: usize,
    pub u: usize,
    pub w: usize,
    pub x_next: usize,
    pub size: usize,
}

impl FLayout {
    pub fn new(dims: Dimensions) -> Self {
        let Dimensions { n, r, m, .. } = dims;
        FLayout {
            x: 0,
            u: n,
            w: n + r,
            x_next: n + r + m,
            size: 2 * n + r + m,
        }
    }
}

impl Certificate {
    pub fn validate(&self, dims: Dimensions) -> Result<()> {
        let Dimensions { n, m, .. } = dims;
        if self.p.shape() != (n, n) || self.l.shape() != (m, n) || self.m.len() != m {
            return Err(Error::Dimension(format!(
                "certificate shapes P {:?}, L {:?}, M {} do not match n = {n}, m = {m}",
                self.p.shape(),
                self.l.shape(),
                self.m.len()
            )));
        }
        if !(linalg::all_finite(&self.p)
            && linalg::all_finite(&self.l)
            && self.m.iter().all(|v| v.is_finite())
            && self.s.is_finite()
            && self.alpha.is_finite())
        {
            return Err(Error::NonFinite("certificate".into()));
        }
        Ok(())
    }

    pub fn m_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CertificateFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<CertificateFile>(text)?.into_certificate()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<CertificateFile>(&text)
            .map_err(|e| Error::parse(path, &e))?
            .into_certificate()
    }
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    schema_version: u32,
    #[serde(rename = "P", with = "linalg::rows")]
    p: Mat,
    #[serde(rename = "M", with = "linalg::rows")]
    m: Mat,
    #[serde(rename = "L", with = "linalg::rows")]
    l: Mat,
    s: f64,
    alpha: f64,
}

impl From<&Certificate> for CertificateFile {
    fn from(c: &Certificate) -> Self {
        CertificateFile {
            schema_version: SCHEMA_VERSION,
            p: c.p.clone(),
            m: c.m_matrix(),
            l: c.l.clone(),
            s: c.s,
            alpha: c.alpha,
        }
    }
}

impl CertificateFile {
    fn into_certificate(self) -> Result<Certificate> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.m.nrows() != self.m.ncols() {
            return Err(Error::Dimension("M must be square".into()));
        }
        for i in 0..self.m.nrows() {
            for j in 0..self.m.ncols() {
                if i != j && self.m[(i, j)] != 0.0 {
                    return Err(Error::Validation("M must be diagonal".into()));
                }
            }
        }
        let l = if self.l.nrows() == 0 {
            Mat::zeros(self.m.nrows(), self.p.ncols())
        } else {
            self.l
        };
        Ok(Certificate {
            m: self.m.diagonal(),
            p: self.p,
            l,
            s: self.s,
            alpha: self.alpha,
        })
    }
}

fn check_shapes(params: &ModelParams, cert: &Certificate) -> Result<()> {
    params.validate()?;
    cert.validate(params.dims)
}

/// Assembles `F`. Only the upper blocks are computed; the lower triangle is a
/// mirror, so the result is bitwise symmetric.
pub fn build_f(params: &ModelParams, cert: &Certificate) -> Result<Mat> {
    check_shapes(params, cert)?;
    Ok(build_f_unchecked(params, cert))
}

pub(crate) fn build_f_unchecked(params: &ModelParams, cert: &Certificate) -> Mat {
    let r = params.dims.r;
    let lay = FLayout::new(params.dims);
    let mut f = Mat::zeros(lay.size, lay.size);
    let p = &cert.p;
    let mm = cert.m_matrix();
    let a2 = cert.alpha * cert.alpha;

    let put = |f: &mut Mat, r0: usize, c0: usize, blk: &Mat| {
        f.view_mut((r0, c0), blk.shape()).copy_from(blk);
    };
    put(&mut f, lay.x, lay.x, &(p * -a2));
    put(&mut f, lay.x, lay.w, &(p * params.c2.transpose() + cert.l.transpose()));
    put(&mut f, lay.x, lay.x_next, &(p * params.a.transpose()));
    put(&mut f, lay.u, lay.u, &(-Mat::identity(r, r)));
    put(&mut f, lay.u, lay.w, &params.d21.transpose());
    put(&mut f, lay.u, lay.x_next, &params.b.transpose());
    put(&mut f, lay.w, lay.w, &(&mm * -2.0));
    put(&mut f, lay.w, lay.x_next, &(&mm * params.b2.transpose()));
    put(&mut f, lay.x_next, lay.x_next, &(-p));

    for i in 0..lay.size {
        for j in 0..i {
            f[(i, j)] = f[(j, i)];
        }
    }
    f
}

/// Assembles `G_i` for a zero-based channel index.
pub fn build_g(cert: &Certificate, i: usize) -> Result<Mat> {
    if i >= cert.l.nrows() {
        return Err(Error::Config(format!(
            "channel index {i} out of range for m = {}",
            cert.l.nrows()
        )));
    }
    Ok(build_g_unchecked(cert, i))
}

pub(crate) fn build_g_unchecked(cert: &Certificate, i: usize) -> Mat {
    let n = cert.p.nrows();
    let mut g = Mat::zeros(n + 1, n + 1);
    g[(0, 0)] = 1.0 / (cert.s * cert.s);
    for j in 0..n {
        g[(0, j + 1)] = cert.l[(i, j)];
        g[(j + 1, 0)] = cert.l[(i, j)];
    }
    g.view_mut((1, 1), (n, n)).copy_from(&cert.p);
    g
}

/// Constants of the input-to-state bound, from the spectrum of `P⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssConstants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub f_negative_definite: bool,
    pub g_psd: Vec<bool>,
    pub delta_ok: bool,
    pub alpha_ok: bool,
    pub p_positive_definite: bool,
    /// Largest admissible input bound, `sqrt(1-α²)·s`.
    pub delta_max: f64,
    pub delta: f64,
    pub eps_psd: f64,
    /// `P⁻¹/s²`, absent when `P` is not invertible.
    #[serde(with = "opt_rows")]
    pub region: Option<Mat>,
    /// `L P⁻¹`, absent when `P` is not invertible.
    #[serde(rename = "H", with = "opt_rows")]
    pub h: Option<Mat>,
    pub iss_constants: Option<IssConstants>,
}

mod opt_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{self, Mat};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(linalg::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        match rows {
            None => Ok(None),
            Some(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                linalg::from_rows(&rows, ncols)
                    .map(Some)
                    .map_err(serde::de::Error::custom)
            }
        }
    }
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.f_negative_definite
            && self.g_psd.iter().all(|&g| g)
            && self.delta_ok
            && self.alpha_ok
            && self.p_positive_definite
    }

    /// Names of the conditions that failed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.f_negative_definite {
            out.push("F < 0".to_string());
        }
        for (i, ok) in self.g_psd.iter().enumerate() {
            if !ok {
                out.push(format!("G_{} >= 0", i + 1));
            }
        }
        if !self.delta_ok {
            out.push("delta^2 <= (1 - alpha^2) s^2".to_string());
        }
        if !self.alpha_ok {
            out.push("0 < alpha < 1".to_string());
        }
        if !self.p_positive_definite {
            out.push("P > 0".to_string());
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Cholesky-based verification of every certificate condition.
pub fn check_certificate(params: &ModelParams, cert: &Certificate, delta: f64) -> Result<CertificateReport> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::Config(format!("delta must be finite and >= 0, got {delta}")));
    }
    check_shapes(params, cert)?;
    let f = build_f_unchecked(params, cert);
    let f_negative_definite = linalg::is_positive_definite(&(-f));
    let g_psd = (0..params.dims.m).map(|i| g_psd_unchecked(cert, i)).collect();
    let (alpha, s) = (cert.alpha, cert.s);
    let delta_ok = s > 0.0 && delta * delta <= (1.0 - alpha * alpha) * s * s;
    let alpha_ok = alpha > 0.0 && alpha < 1.0;
    let p_positive_definite = linalg::is_positive_definite(&cert.p);

    let (region, h, iss_constants) = if p_positive_definite {
        let p_inv = linalg::inverse_pd(&cert.p).expect("P checked positive definite");
        let ev = linalg::sym_eigenvalues(&cert.p);
        let iss = IssConstants {
            lambda_min: 1.0 / ev[ev.len() - 1],
            lambda_max: 1.0 / ev[0],
            alpha,
            s,
        };
        (
            Some(p_inv / (s * s)),
            Some(h_from_certificate(cert)?),
            Some(iss),
        )
    } else {
        (None, None, None)
    };

    Ok(CertificateReport {
        f_negative_definite,
        g_psd,
        delta_ok,
        alpha_ok,
        p_positive_definite,
        delta_max: (1.0 - alpha * alpha).max(0.0).sqrt() * s.abs(),
        delta,
        eps_psd: EPS_PSD,
        region,
        h,
        iss_constants,
    })
}

/// Cholesky verdict on `G_i + ε I`, the test used by [`check_certificate`].
pub fn g_is_psd(cert: &Certificate, i: usize) -> Result<bool> {
    build_g(cert, i)?;
    Ok(g_psd_unchecked(cert, i))
}

fn g_psd_unchecked(cert: &Certificate, i: usize) -> bool {
    let g = build_g_unchecked(cert, i);
    let shift = Mat::identity(g.nrows(), g.ncols()) * EPS_PSD;
    linalg::is_positive_definite(&(g + shift))
}

/// `H = L P⁻¹` through a Cholesky solve.
pub fn h_from_certificate(cert: &Certificate) -> Result<Mat> {
    linalg::right_solve_pd(&cert.l, &cert.p)
        .map_err(|_| Error::Singular("P is not positive definite".into()))
}

/// Extreme eigenvalues `(λ_min, λ_max)` of `P⁻¹`, from the spectrum of `P`.
pub fn inverse_spectrum_bounds(p: &Mat) -> Result<(f64, f64)> {
    let ev = linalg::sym_eigenvalues(p);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > 0.0) {
        return Err(Error::Singular(format!("P has eigenvalue {lo:e}")));
    }
    Ok((1.0 / hi, 1.0 / lo))
}

/// State-norm bound at step `k`:
/// `min{ sqrt(λmax/λmin) α^k |x0| + sqrt(1/((1-α²)λmin)) sup|u|, s/sqrt(λmin) }`,
/// where `u_sup` is the supremum of `|u_j|` over `j < k`.
pub fn iss_bound(cert: &Certificate, x0_norm: f64, u_sup: f64, k: usize) -> Result<f64> {
    if x0_norm < 0.0 || u_sup < 0.0 {
        return Err(Error::Config("norms must be nonnegative".into()));
    }
    let (lmin, lmax) = inverse_spectrum_bounds(&cert.p)?;
    let a = cert.alpha;
    let decay = (lmax / lmin).sqrt() * a.powi(k as i32) * x0_norm;
    let gain = (1.0 / ((1.0 - a * a) * lmin)).sqrt() * u_sup;
    Ok((decay + gain).min(cert.s / lmin.sqrt()))
}
