//! Solver-independent description of a semidefinite program.
//!
//! Decision variables are declared as blocks (symmetric, diagonal, full or
//! scalar) and flattened into one scalar vector `x`. Constraints are affine
//! matrix expressions `C + Σ_j x_j A_j ⪰ 0`; the objective is `min cᵀx`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::linalg::Mat;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    Symmetric { n: usize },
    Diagonal { n: usize },
    Full { rows: usize, cols: usize },
    Scalar,
}

impl VarKind {
    fn len(&self) -> usize {
        match *self {
            VarKind::Symmetric { n } => n * (n + 1) / 2,
            VarKind::Diagonal { n } => n,
            VarKind::Full { rows, cols } => rows * cols,
            VarKind::Scalar => 1,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric { n } | VarKind::Diagonal { n } => (n, n),
            VarKind::Full { rows, cols } => (rows, cols),
            VarKind::Scalar => (1, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

#[derive(Clone, Debug, Serialize)]
pub struct VarBlock {
    pub name: String,
    #[serde(flatten)]
    pub kind: VarKind,
    pub offset: usize,
}

/// Matrix-valued affine function of the scalar decision vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub constant: Mat,
    pub terms: BTreeMap<usize, Mat>,
}

impl Affine {
    pub fn constant(c: Mat) -> Self {
        Affine {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Affine::constant(Mat::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn transpose(&self) -> Self {
        Affine {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(&j, a)| (j, a.transpose())).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Affine {
            constant: &self.constant * k,
            terms: self.terms.iter().map(|(&j, a)| (j, a * k)).collect(),
        }
    }

    /// `left · self`
    pub fn left_mul(&self, left: &Mat) -> Self {
        Affine {
            constant: left * &self.constant,
            terms: self.terms.iter().map(|(&j, a)| (j, left * a)).collect(),
        }
    }

    /// `self · right`
    pub fn right_mul(&self, right: &Mat) -> Self {
        Affine {
            constant: &self.constant * right,
            terms: self.terms.iter().map(|(&j, a)| (j, a * right)).collect(),
        }
    }

    pub fn add(&self, other: &Affine) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine shapes differ");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&j, a) in &other.terms {
            *out.terms
                .entry(j)
                .or_insert_with(|| Mat::zeros(a.nrows(), a.ncols())) += a;
        }
        out
    }

    pub fn add_constant(&self, c: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (&j, a) in &self.terms {
            out += a * x[j];
        }
        out
    }

    /// Builds a symmetric block matrix from its upper block triangle.
    /// `upper[i][j]` for `j >= i` is block `(i, j)`; `None` means zero.
    pub fn symmetric_blocks(sizes: &[usize], upper: &[Vec<Option<Affine>>]) -> Self {
        let total: usize = sizes.iter().sum();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let mut out = Affine::zeros(total, total);
        let place = |dst: &mut Mat, src: &Mat, r0: usize, c0: usize, mirror: bool| {
            dst.view_mut((r0, c0), src.shape()).copy_from(src);
            if mirror {
                dst.view_mut((c0, r0), (src.ncols(), src.nrows()))
                    .copy_from(&src.transpose());
            }
        };
        for (i, row) in upper.iter().enumerate() {
            for (j, blk) in row.iter().enumerate() {
                let Some(blk) = blk else { continue };
                assert!(j >= i, "only upper blocks may be given");
                assert_eq!(blk.shape(), (sizes[i], sizes[j]), "block ({i}, {j}) has wrong shape");
                let mirror = i != j;
                place(&mut out.constant, &blk.constant, offsets[i], offsets[j], mirror);
                for (&v, a) in &blk.terms {
                    let dst = out.terms.entry(v).or_insert_with(|| Mat::zeros(total, total));
                    place(dst, a, offsets[i], offsets[j], mirror);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Lmi {
    pub name: String,
    pub expr: Affine,
}

#[derive(Clone, Debug, Default)]
pub struct SdpProblem {
    pub blocks: Vec<VarBlock>,
    pub num_scalars: usize,
    pub lmis: Vec<Lmi>,
    pub objective: BTreeMap<usize, f64>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, kind: VarKind) -> VarId {
        let id = VarId(self.blocks.len());
        self.blocks.push(VarBlock {
            name: name.to_string(),
            kind,
            offset: self.num_scalars,
        });
        self.num_scalars += kind.len();
        id
    }

    pub fn block(&self, id: VarId) -> &VarBlock {
        &self.blocks[id.0]
    }

    /// The variable as an affine matrix expression.
    pub fn expr(&self, id: VarId) -> Affine {
        let blk = self.block(id);
        let (rows, cols) = blk.kind.shape();
        let mut out = Affine::zeros(rows, cols);
        let mut idx = blk.offset;
        let mut unit = |entries: &[(usize, usize)], idx: usize| {
            let mut a = Mat::zeros(rows, cols);
            for &(i, j) in entries {
                a[(i, j)] = 1.0;
            }
            out.terms.insert(idx, a);
        };
        match blk.kind {
            VarKind::Symmetric { n } => {
                for j in 0..n {
                    for i in 0..=j {
                        if i == j {
                            unit(&[(i, i)], idx);
                        } else {
                            unit(&[(i, j), (j, i)], idx);
                        }
                        idx += 1;
                    }
                }
            }
            VarKind::Diagonal { n } => {
                for i in 0..n {
                    unit(&[(i, i)], idx);
                    idx += 1;
                }
            }
            VarKind::Full { rows, cols } => {
                for i in 0..rows {
                    for j in 0..cols {
                        unit(&[(i, j)], idx);
                        idx += 1;
                    }
                }
            }
            VarKind::Scalar => unit(&[(0, 0)], idx),
        }
        out
    }

    /// Adds `expr ⪰ 0`; `expr` must be square and symmetric.
    pub fn add_lmi(&mut self, name: &str, expr: Affine) -> Result<()> {
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Dimension(format!("LMI {name} is {r}x{c}")));
        }
        let asym = |m: &Mat| (m - m.transpose()).amax();
        if asym(&expr.constant) > 0.0 || expr.terms.values().any(|a| asym(a) > 0.0) {
            return Err(Error::Validation(format!("LMI {name} is not symmetric")));
        }
        if expr.terms.keys().any(|&j| j >= self.num_scalars) {
            return Err(Error::Validation(format!("LMI {name} references an undeclared variable")));
        }
        self.lmis.push(Lmi {
            name: name.to_string(),
            expr,
        });
        Ok(())
    }

    /// Adds `Σ coeffs_j x_j` to the minimized objective, with `expr` 1x1.
    pub fn minimize(&mut self, expr: &Affine) {
        for (&j, a) in &expr.terms {
            *self.objective.entry(j).or_insert(0.0) += a[(0, 0)];
        }
    }

    /// Reassembles a variable from a solution vector.
    pub fn value(&self, id: VarId, x: &[f64]) -> Mat {
        self.expr(id).evaluate(x)
    }

    /// Self-describing JSON: variables, then each constraint's constant and
    /// coefficient matrices as upper-triangle sparse triplets `[i, j, value]`.
    pub fn dump_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Term {
            var: usize,
            triplets: Vec<(usize, usize, f64)>,
        }
        #[derive(Serialize)]
        struct Constraint<'a> {
            name: &'a str,
            size: usize,
            sense: &'static str,
            constant: Vec<(usize, usize, f64)>,
            terms: Vec<Term>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            schema_version: u32,
            num_scalars: usize,
            variables: &'a [VarBlock],
            objective: Vec<(usize, f64)>,
            constraints: Vec<Constraint<'a>>,
        }
        let triplets = |m: &Mat| {
            let mut t = Vec::new();
            for j in 0..m.ncols() {
                for i in 0..=j {
                    if m[(i, j)] != 0.0 {
                        t.push((i, j, m[(i, j)]));
                    }
                }
            }
            t
        };
        let dump = Dump {
            schema_version: crate::SCHEMA_VERSION,
            num_scalars: self.num_scalars,
            variables: &self.blocks,
            objective: self.objective.iter().map(|(&j, &c)| (j, c)).collect(),
            constraints: self
                .lmis
                .iter()
                .map(|l| Constraint {
                    name: &l.name,
                    size: l.expr.shape().0,
                    sense: "psd",
                    constant: triplets(&l.expr.constant),
                    terms: l
                        .expr
                        .terms
                        .iter()
                        .map(|(&var, a)| Term {
                            var,
                            triplets: triplets(a),
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_variable_round_trip() {
        let mut p = SdpProblem::new();
        let s = p.add_var("P", VarKind::Symmetric { n: 2 });
        let d = p.add_var("M", VarKind::Diagonal { n: 2 });
        assert_eq!(p.num_scalars, 5);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(p.value(s, &x), Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(p.value(d, &x), Mat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 5.0]));
    }

    #[test]
    fn block_assembly_mirrors_upper_blocks() {
        let mut p = SdpProblem::new();
        let l = p.add_var("L", VarKind::Full { rows: 1, cols: 2 });
        let e = Affine::symmetric_blocks(
            &[1, 2],
            &[
                vec![Some(Affine::constant(Mat::identity(1, 1))), Some(p.expr(l))],
                vec![None, Some(Affine::constant(Mat::identity(2, 2)))],
            ],
        );
        let m = e.evaluate(&[0.5, -0.25]);
        assert_eq!(m, Mat::from_row_slice(3, 3, &[1.0, 0.5, -0.25, 0.5, 1.0, 0.0, -0.25, 0.0, 1.0]));
        p.add_lmi("G", e).unwrap();
        let dump = p.dump_json().unwrap();
        assert!(dump.contains("\"sense\": \"psd\""));
    }

    #[test]
    fn asymmetric_lmi_is_rejected() {
        let mut p = SdpProblem::new();
        let l = p.add_var("L", VarKind::Full { rows: 2, cols: 2 });
        assert!(p.add_lmi("bad", p.expr(l)).is_err());
    }
}
