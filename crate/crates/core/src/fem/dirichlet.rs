use crate::error::{check_dim, Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::CsrMatrix;

/// Maps between full P2 coefficient vectors and the free (non-Dirichlet) DOFs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    n_full: usize,
    free: Vec<usize>,
    full_to_free: Vec<Option<usize>>,
}

impl DofMap {
    /// Removes every node carrying one of `constrained` tags.
    pub fn from_tags(mesh: &Mesh, constrained: &[BoundaryTag]) -> Result<Self> {
        let mask: Vec<bool> = mesh
            .node_tags()
            .iter()
            .map(|t| t.is_some_and(|t| constrained.contains(&t)))
            .collect();
        Self::from_mask(&mask)
    }

    /// `constrained[i]` marks DOF `i` as eliminated.
    pub fn from_mask(constrained: &[bool]) -> Result<Self> {
        let n_full = constrained.len();
        let mut free = Vec::with_capacity(n_full);
        let mut full_to_free = vec![None; n_full];
        for (i, &c) in constrained.iter().enumerate() {
            if !c {
                full_to_free[i] = Some(free.len());
                free.push(i);
            }
        }
        if free.is_empty() && n_full > 0 {
            return Err(Error::invalid("Dirichlet tags cover every degree of freedom"));
        }
        Ok(DofMap { n_full, free, full_to_free })
    }

    pub fn identity(n: usize) -> Self {
        DofMap {
            n_full: n,
            free: (0..n).collect(),
            full_to_free: (0..n).map(Some).collect(),
        }
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.full_to_free.get(full).copied().flatten()
    }

    pub fn reduce_matrix(&self, a: &CsrMatrix) -> Result<CsrMatrix> {
        check_dim("matrix rows", self.n_full, a.nrows())?;
        check_dim("matrix cols", self.n_full, a.ncols())?;
        Ok(a.select(&self.free, &self.free))
    }

    pub fn reduce_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("vector length", self.n_full, v.len())?;
        Ok(self.free.iter().map(|&i| v[i]).collect())
    }

    /// Scatters free values into a full vector, eliminated entries set to `fill`.
    pub fn inflate(&self, v: &[f64], fill: f64) -> Result<Vec<f64>> {
        check_dim("reduced vector length", self.free.len(), v.len())?;
        let mut out = vec![fill; self.n_full];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = v[k];
        }
        Ok(out)
    }
}
