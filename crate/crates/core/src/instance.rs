//! A validated case together with everything derived from it.

use crate::assemble::{solve_reduced, OpfSolution, SolveError};
use crate::ldf::LdfModel;
use crate::netcase::{validate_radial, CaseError, NetworkCase, RadialTopology};
use crate::opf_model::{reduce, ModelError, ReducedOpf};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub case: NetworkCase,
    pub topo: RadialTopology,
    pub ldf: LdfModel,
    pub opf: ReducedOpf,
}

impl Instance {
    pub fn new(case: NetworkCase) -> Result<Self, Error> {
        case.validate()?;
        let topo = validate_radial(&case)?;
        let ldf = LdfModel::new(&case, &topo);
        let opf = reduce(&case, &topo, &ldf)?;
        Ok(Instance { case, topo, ldf, opf })
    }

    pub fn solve(&self) -> Result<OpfSolution, SolveError> {
        solve_reduced(&self.opf)
    }

    /// Bus injections `(p, q)` in internal order for a generator dispatch.
    pub fn injections(
        &self,
        p_g: &nalgebra::DVector<f64>,
        q_g: &nalgebra::DVector<f64>,
    ) -> (nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
        let n = self.topo.n();
        let nl = self.opf.num_loads();
        let mut p = nalgebra::DVector::zeros(n);
        let mut q = nalgebra::DVector::zeros(n);
        for (k, &i) in self.ldf.partition.gens.iter().enumerate() {
            p[i] = p_g[k];
            q[i] = q_g[k];
        }
        for (l, &i) in self.ldf.partition.loads.iter().enumerate() {
            p[i] = self.opf.ell[l];
            q[i] = self.opf.ell[nl + l];
        }
        (p, q)
    }
}
