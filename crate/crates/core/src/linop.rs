//! Linear operators on the space of n x m matrices, stored through their
//! nm x nm matrix representation `vec . Op . vec^{-1}`, with structural tags
//! for the operator families the positivity theory certifies directly.

use crate::error::{McarmaError, Result};
use crate::matops::{check_finite, fro, kron, unvec, vec_of, Mat};

/// Structural information about an operator; tags carry the generator matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum OpTag {
    General,
    /// x -> a x a^T (square spaces only); rep = a (x) a.
    Conjugation(Mat),
    /// x -> a x + x a^T (square spaces only); rep = I (x) a + a (x) I.
    LyapunovForm(Mat),
    Zero,
    Identity,
}

/// A linear operator on M_{n,m}.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOpNM {
    n: usize,
    m: usize,
    rep: Mat,
    tag: OpTag,
}

const TAG_TOL: f64 = 1e-12;

fn conjugation_rep(a: &Mat) -> Mat {
    kron(a, a)
}

fn lyapunov_rep(a: &Mat) -> Mat {
    let d = a.nrows();
    let i = Mat::identity(d, d);
    kron(&i, a) + kron(a, &i)
}

impl LinOpNM {
    pub fn general(n: usize, m: usize, rep: Mat) -> Result<Self> {
        if rep.nrows() != n * m || rep.ncols() != n * m {
            return Err(McarmaError::DimensionMismatch(format!(
                "operator rep must be {0}x{0} for a {1}x{2} space, got {3}x{4}",
                n * m,
                n,
                m,
                rep.nrows(),
                rep.ncols()
            )));
        }
        check_finite(&rep, "operator rep")?;
        Ok(LinOpNM { n, m, rep, tag: OpTag::General })
    }

    pub fn conjugation(a: &Mat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(McarmaError::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        let d = a.nrows();
        Ok(LinOpNM { n: d, m: d, rep: conjugation_rep(a), tag: OpTag::Conjugation(a.clone()) })
    }

    pub fn lyapunov(a: &Mat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(McarmaError::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        let d = a.nrows();
        Ok(LinOpNM { n: d, m: d, rep: lyapunov_rep(a), tag: OpTag::LyapunovForm(a.clone()) })
    }

    pub fn zero(n: usize, m: usize) -> Self {
        LinOpNM { n, m, rep: Mat::zeros(n * m, n * m), tag: OpTag::Zero }
    }

    pub fn identity(n: usize, m: usize) -> Self {
        LinOpNM { n, m, rep: Mat::identity(n * m, n * m), tag: OpTag::Identity }
    }

    /// Attach a tag to an explicit rep; the tag-specific rep identity is
    /// verified within 1e-12.
    pub fn with_tag(n: usize, m: usize, rep: Mat, tag: OpTag) -> Result<Self> {
        let op = Self::general(n, m, rep)?;
        let expected = match &tag {
            OpTag::General => return Ok(op),
            OpTag::Conjugation(a) => conjugation_rep(a),
            OpTag::LyapunovForm(a) => lyapunov_rep(a),
            OpTag::Zero => Mat::zeros(n * m, n * m),
            OpTag::Identity => Mat::identity(n * m, n * m),
        };
        let err = fro(&(&op.rep - &expected));
        if err > TAG_TOL * (1.0 + fro(&expected)) {
            return Err(McarmaError::InvalidModel(format!(
                "tagged rep disagrees with its tag by {err:e}"
            )));
        }
        Ok(LinOpNM { tag, ..op })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn rep(&self) -> &Mat {
        &self.rep
    }

    pub fn tag(&self) -> &OpTag {
        &self.tag
    }

    pub fn is_square_space(&self) -> bool {
        self.n == self.m
    }

    /// Apply the operator to a matrix.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.nrows() != self.n || x.ncols() != self.m {
            return Err(McarmaError::DimensionMismatch(format!(
                "operator on {}x{} applied to {}x{}",
                self.n,
                self.m,
                x.nrows(),
                x.ncols()
            )));
        }
        unvec(&(&self.rep * vec_of(x)), self.n, self.m)
    }

    pub fn compose(&self, other: &LinOpNM) -> Result<LinOpNM> {
        if (self.n, self.m) != (other.n, other.m) {
            return Err(McarmaError::DimensionMismatch("compose: space mismatch".into()));
        }
        let tag = match (&self.tag, &other.tag) {
            (OpTag::Zero, _) | (_, OpTag::Zero) => OpTag::Zero,
            (OpTag::Identity, t) | (t, OpTag::Identity) => t.clone(),
            (OpTag::Conjugation(a), OpTag::Conjugation(b)) => OpTag::Conjugation(a * b),
            _ => OpTag::General,
        };
        Ok(LinOpNM { n: self.n, m: self.m, rep: &self.rep * &other.rep, tag })
    }

    pub fn add(&self, other: &LinOpNM) -> Result<LinOpNM> {
        if (self.n, self.m) != (other.n, other.m) {
            return Err(McarmaError::DimensionMismatch("add: space mismatch".into()));
        }
        Ok(LinOpNM { n: self.n, m: self.m, rep: &self.rep + &other.rep, tag: OpTag::General })
    }

    pub fn scale(&self, c: f64) -> LinOpNM {
        let tag = if c == 0.0 { OpTag::Zero } else { OpTag::General };
        LinOpNM { n: self.n, m: self.m, rep: &self.rep * c, tag }
    }

    pub fn neg(&self) -> LinOpNM {
        self.scale(-1.0)
    }

    /// `vec . Op . vec^{-1}` composed with transposition on both sides:
    /// the rep of x -> Op(x^T)^T, i.e. K rep K^{-1}.
    pub fn transpose_equivariant_rep(&self, k: &Mat) -> Mat {
        k * &self.rep * k.transpose()
    }
}
