use super::{ModelSpec, ReTerm};
use crate::error::{Error, Result};
use crate::sparse::SparseCsc;

/// Replacement random-effects structures for [`ModelSpec::inject`].
#[derive(Debug, Clone)]
pub struct Injection {
    pub zt: SparseCsc,
    pub lambdat: SparseCsc,
    /// 0-based θ index per stored entry of `lambdat`.
    pub lind: Vec<usize>,
    pub theta0: Vec<f64>,
    pub lower: Vec<f64>,
    /// New term metadata; when `None` the old terms are kept and must still
    /// describe the rows of `zt`.
    pub terms: Option<Vec<ReTerm>>,
}

impl Injection {
    /// Starts from the structures already in `spec`.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            zt: spec.zt.clone(),
            lambdat: spec.lambdat.clone(),
            lind: spec.lind.clone(),
            theta0: spec.theta0.clone(),
            lower: spec.lower.clone(),
            terms: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

impl ModelSpec {
    /// Replaces `Zᵀ`, `Λᵀ`, `Lind`, θ₀ and bounds after checking they fit together.
    pub fn inject(&self, inj: Injection) -> Result<ModelSpec> {
        let n = self.n();
        let q = inj.zt.nrows();
        if inj.zt.ncols() != n {
            return Err(bad(format!("Zt has {} columns, expected n = {n}", inj.zt.ncols())));
        }
        if inj.lambdat.shape() != (q, q) {
            return Err(bad(format!("Lambdat is {:?}, expected {q}x{q}", inj.lambdat.shape())));
        }
        if inj.lind.len() != inj.lambdat.nnz() {
            return Err(bad(format!("Lind has {} entries for {} stored values", inj.lind.len(), inj.lambdat.nnz())));
        }
        let m = inj.theta0.len();
        if inj.lower.len() != m {
            return Err(bad(format!("lower has {} entries for {m} parameters", inj.lower.len())));
        }
        let mut used = vec![false; m];
        for &k in &inj.lind {
            if k >= m {
                return Err(bad(format!("Lind value {k} out of range for {m} parameters")));
            }
            used[k] = true;
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(bad(format!("theta[{k}] is not referenced by Lind")));
        }
        for (k, (&t, &l)) in inj.theta0.iter().zip(&inj.lower).enumerate() {
            if t < l {
                return Err(Error::Bounds { index: k, value: t, lower: l });
            }
        }
        let terms = inj.terms.unwrap_or_else(|| self.terms.clone());
        let covered: usize = terms.iter().map(ReTerm::q).sum();
        if covered != q {
            return Err(bad(format!("term metadata covers {covered} rows, Zt has {q}")));
        }
        let standard = self.standard_layout
            && inj.lind == self.lind
            && inj.lambdat.same_pattern(&self.lambdat)
            && inj.lower == self.lower
            && terms == self.terms;
        Ok(ModelSpec {
            zt: inj.zt,
            lambdat: inj.lambdat,
            lind: inj.lind,
            theta0: inj.theta0,
            lower: inj.lower,
            terms,
            standard_layout: standard,
            ..self.clone()
        })
    }

    /// One variance shared by every random effect: `Λ = θ I`.
    pub fn homogeneous_variance(&self) -> Result<ModelSpec> {
        let q = self.q();
        let group = self.terms.iter().map(|t| t.group.as_str()).collect::<Vec<_>>().join("+");
        let term = ReTerm {
            group,
            lhs: None,
            cnms: vec!["(shared)".into()],
            p: 1,
            levels: (0..q).map(|k| k.to_string()).collect(),
            codes: Vec::new(),
            offset: 0,
        };
        self.inject(Injection {
            zt: self.zt.clone(),
            lambdat: SparseCsc::identity(q),
            lind: vec![0; q],
            theta0: vec![1.0],
            lower: vec![0.0],
            terms: Some(vec![term]),
        })
    }

    /// All terms share the first term's template (terms must have equal `p`).
    pub fn homogeneous_covariance(&self) -> Result<ModelSpec> {
        let p = self.terms[0].p;
        if self.terms.iter().any(|t| t.p != p) {
            return Err(Error::Formula(
                "each random-effects term must have the same number of columns for a shared covariance".into(),
            ));
        }
        let nth = p * (p + 1) / 2;
        // every block repeats the first block's θ indices
        let first = self.lind[..self.lambdat.col_ptr()[p]].to_vec();
        let lind: Vec<usize> = (0..self.lind.len()).map(|i| first[i % first.len()]).collect();
        self.inject(Injection {
            zt: self.zt.clone(),
            lambdat: self.lambdat.clone(),
            lind,
            theta0: self.theta0[..nth].to_vec(),
            lower: self.lower[..nth].to_vec(),
            terms: None,
        })
    }
}
