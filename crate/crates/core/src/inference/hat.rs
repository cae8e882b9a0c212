use nalgebra::DMatrix;

use super::FitResult;
use crate::error::Result;
use crate::sparse::SolveMode;

/// The two triangular-solve blocks whose stacked columns give `H`'s diagonal.
#[derive(Debug, Clone)]
pub struct HatMatrix {
    /// `L⁻¹PΛᵀZᵀW½`, q × n.
    pub c_l: DMatrix<f64>,
    /// `R_X⁻ᵀ(XᵀW½ − R_ZXᵀC_L)`, p × n.
    pub c_r: DMatrix<f64>,
}

impl HatMatrix {
    pub fn trace(&self) -> f64 {
        self.c_l.norm_squared() + self.c_r.norm_squared()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.c_l.ncols()).map(|j| self.c_l.column(j).norm_squared() + self.c_r.column(j).norm_squared()).collect()
    }

    /// Dense symmetric form `W½HW⁻½`, for small models.
    pub fn dense(&self) -> DMatrix<f64> {
        self.c_l.tr_mul(&self.c_l) + self.c_r.tr_mul(&self.c_r)
    }
}

impl FitResult {
    pub fn hat(&self) -> Result<HatMatrix> {
        let st = self.state();
        let fac = st.factor();
        let c_l = fac.solve_dense(SolveMode::P, &st.lt_ztw().to_dense())?;
        let c_l = fac.solve_dense(SolveMode::L, &c_l)?;
        let rhs = st.xw().transpose() - st.rzx().tr_mul(&c_l);
        let c_r = if st.p() == 0 {
            DMatrix::zeros(0, st.n())
        } else {
            st.rx().transpose().solve_lower_triangular(&rhs).ok_or(crate::Error::RankDeficient)?
        };
        Ok(HatMatrix { c_l, c_r })
    }

    pub fn hat_trace(&self) -> Result<f64> {
        Ok(self.hat()?.trace())
    }

    pub fn hat_diag(&self) -> Result<Vec<f64>> {
        Ok(self.hat()?.diag())
    }
}
