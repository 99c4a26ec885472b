use nalgebra::{DMatrix, DVector};

/// Affine symmetric matrix `F0 + sum_i u_i F_i`. Entries are stored once per
/// unordered position with `row <= col`.
#[derive(Debug, Clone, Default)]
pub struct PsdBlock {
    pub dim: usize,
    pub constant: Vec<(usize, usize, f64)>,
    /// `(variable, row, col, value)` with `row <= col`.
    pub coefs: Vec<(usize, usize, usize, f64)>,
}

impl PsdBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, constant: Vec::new(), coefs: Vec::new() }
    }

    fn order(i: usize, j: usize) -> (usize, usize) {
        if i <= j {
            (i, j)
        } else {
            (j, i)
        }
    }

    /// Add `value` to the constant term at `(i, j)` and `(j, i)`.
    pub fn add_constant(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.dim && j < self.dim);
        if value != 0.0 {
            let (r, c) = Self::order(i, j);
            self.constant.push((r, c, value));
        }
    }

    /// Add `value * u_var` at `(i, j)` and `(j, i)`.
    pub fn add_coef(&mut self, var: usize, i: usize, j: usize, value: f64) {
        assert!(i < self.dim && j < self.dim);
        if value != 0.0 {
            let (r, c) = Self::order(i, j);
            self.coefs.push((var, r, c, value));
        }
    }

    /// Evaluate the affine matrix at `u`.
    pub fn evaluate(&self, u: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.constant {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        for &(k, r, c, v) in &self.coefs {
            m[(r, c)] += v * u[k];
            if r != c {
                m[(c, r)] += v * u[k];
            }
        }
        m
    }
}

/// Affine scalar constraint `constant + sum coef_k u_k >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinRow {
    pub constant: f64,
    pub coefs: Vec<(usize, f64)>,
}

impl LinRow {
    pub fn evaluate(&self, u: &[f64]) -> f64 {
        self.constant + self.coefs.iter().map(|&(k, a)| a * u[k]).sum::<f64>()
    }
}

/// Linear matrix inequality program in the free variables `u`.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub nvars: usize,
    pub objective: Vec<f64>,
    pub psd: Vec<PsdBlock>,
    pub lin: Vec<LinRow>,
    /// Equality rows `sum coef_k u_k = rhs`.
    pub eqs: Vec<(Vec<(usize, f64)>, f64)>,
}

impl ConicProgram {
    pub fn new(nvars: usize) -> Self {
        Self { nvars, objective: vec![0.0; nvars], ..Default::default() }
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.nvars);
        self.objective = c;
    }

    /// Add a PSD block and return its index.
    pub fn add_psd_block(&mut self, block: PsdBlock) -> usize {
        for &(k, ..) in &block.coefs {
            assert!(k < self.nvars, "variable {k} out of range");
        }
        self.psd.push(block);
        self.psd.len() - 1
    }

    pub fn add_nonneg(&mut self, constant: f64, coefs: Vec<(usize, f64)>) {
        for &(k, _) in &coefs {
            assert!(k < self.nvars, "variable {k} out of range");
        }
        self.lin.push(LinRow { constant, coefs });
    }

    pub fn add_equality(&mut self, coefs: Vec<(usize, f64)>, rhs: f64) {
        for &(k, _) in &coefs {
            assert!(k < self.nvars, "variable {k} out of range");
        }
        self.eqs.push((coefs, rhs));
    }

    pub fn objective_value(&self, u: &[f64]) -> f64 {
        self.objective.iter().zip(u).map(|(c, x)| c * x).sum()
    }

    /// Dense equality matrix and right-hand side.
    pub fn equality_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut g = DMatrix::zeros(self.eqs.len(), self.nvars);
        let mut rhs = DVector::zeros(self.eqs.len());
        for (r, (coefs, b)) in self.eqs.iter().enumerate() {
            for &(k, a) in coefs {
                g[(r, k)] += a;
            }
            rhs[r] = *b;
        }
        (g, rhs)
    }

    /// Largest violation of any constraint at `u`: equality residual,
    /// negative part of the nonnegative rows and of the smallest eigenvalue
    /// of each PSD block.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (coefs, b) in &self.eqs {
            let v: f64 = coefs.iter().map(|&(k, a)| a * u[k]).sum::<f64>() - b;
            worst = worst.max(v.abs());
        }
        for row in &self.lin {
            worst = worst.max(-row.evaluate(u));
        }
        for blk in &self.psd {
            if blk.dim == 0 {
                continue;
            }
            let m = blk.evaluate(u);
            let ev = m.symmetric_eigenvalues();
            worst = worst.max(-ev.min());
        }
        worst
    }
}
