//! Entropically regularized optimal transport on a fixed finite space.
//!
//! The solver runs the classical alternating scaling iteration entirely in
//! the log domain: the primary state is a pair of dual potentials in cost
//! units plus residual log-scalings, and every update is a row or column
//! log-sum-exp against the cost matrix. Large residuals are absorbed into
//! the potentials, so the iteration stays finite for arbitrarily small
//! regularization where the kernel `exp(-C/λ)` underflows entrywise.
//!
//! Support points with zero mass are excluded from the iteration; their plan
//! entries are zero by feasibility and their output potentials are filled in
//! by a smoothed c-transform so the returned vectors always have length `N`.

use ndarray::Array2;
use serde::ser::SerializeStruct;

use crate::error::{Error, Result};
use crate::measures::{CostMatrix, DiscreteMeasure};

/// Parameters of a single solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Regularization strength λ > 0.
    pub lambda: f64,
    /// Iteration cap; hitting it yields a result flagged as non-converged.
    pub max_iter: usize,
    /// L1 tolerance on the plan marginals.
    pub tol: f64,
    /// Residual log-scaling magnitude that triggers absorption into the
    /// potentials.
    pub absorb_threshold: f64,
}

impl SolverConfig {
    /// Defaults for a given λ: `max_iter = 1e5`, `tol = 1e-9`,
    /// `absorb_threshold = 1e3 / λ`.
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            max_iter: 100_000,
            tol: 1e-9,
            absorb_threshold: 1e3 / lambda,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidInput(
                "lambda must be positive and finite".into(),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.absorb_threshold.is_finite() && self.absorb_threshold > 0.0) {
            return Err(Error::InvalidInput(
                "absorb_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(1.0)
    }
}

/// Converged (or diagnostic) state of a solve.
///
/// `alpha`/`beta` are the dual potentials normalized so that the `alpha`
/// entries over the support of `a` sum to zero; on the supports they satisfy
/// `plan[i][j] = exp((alpha[i] + beta[j] - c[i][j]) / lambda)`. `scaling_u`
/// and `scaling_v` are the matching positive Sinkhorn scalings
/// `exp(alpha/λ)`, `exp(beta/λ)`.
#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub lambda: f64,
    pub plan: Array2<f64>,
    pub scaling_u: Vec<f64>,
    pub scaling_v: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub marginal_err: f64,
    pub converged: bool,
}

impl SinkhornSolution {
    /// Dense CSV export of the plan, one row per source point.
    pub fn write_plan_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.plan.nrows() {
            let row: Vec<String> = (0..self.plan.ncols())
                .map(|j| format!("{}", self.plan[[i, j]]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl serde::Serialize for SinkhornSolution {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("SinkhornSolution", 7)?;
        st.serialize_field("lambda", &self.lambda)?;
        st.serialize_field("primal", &self.primal)?;
        st.serialize_field("dual", &self.dual)?;
        st.serialize_field("iterations", &self.iterations)?;
        st.serialize_field("marginal_err", &self.marginal_err)?;
        st.serialize_field("alpha", &self.alpha)?;
        st.serialize_field("beta", &self.beta)?;
        st.end()
    }
}

/// Elementwise kernel `K = exp(-C/λ)`.
pub fn kernel_matrix(cost: &CostMatrix, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidInput(
            "lambda must be positive and finite".into(),
        ));
    }
    Ok(cost.entries().mapv(|c| (-c / lambda).exp()))
}

/// Solves the regularized transport problem between `a` and `b`.
pub fn sinkhorn_solve(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    cfg: &SolverConfig,
) -> Result<SinkhornSolution> {
    sinkhorn_solve_warm(a, b, cost, cfg, None)
}

/// Same as [`sinkhorn_solve`], optionally warm-started from the potentials of
/// a previous solution on the same space (useful across bootstrap replicates,
/// where consecutive problems are nearly identical).
pub fn sinkhorn_solve_warm(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    cfg: &SolverConfig,
    init: Option<(&[f64], &[f64])>,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    let n = cost.size();
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.len(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some((wa, wb)) = init {
        if wa.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: wa.len(),
            });
        }
        if wb.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: wb.len(),
            });
        }
        if wa.iter().chain(wb).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "warm-start potentials must be finite".into(),
            ));
        }
    }
    let lambda = cfg.lambda;
    let aw = a.weights();
    let bw = b.weights();

    let supp_a = a.support();
    let supp_b = b.support();
    let na = supp_a.len();
    let nb = supp_b.len();
    let ra: Vec<f64> = supp_a.iter().map(|&i| aw[i]).collect();
    let rb: Vec<f64> = supp_b.iter().map(|&j| bw[j]).collect();
    let la: Vec<f64> = ra.iter().map(|&w| w.ln()).collect();
    let lb: Vec<f64> = rb.iter().map(|&w| w.ln()).collect();

    let mut csub = Array2::<f64>::zeros((na, nb));
    for (ik, &i) in supp_a.iter().enumerate() {
        for (jk, &j) in supp_b.iter().enumerate() {
            csub[[ik, jk]] = cost.entries()[[i, j]];
        }
    }

    // Absorbed potentials in cost units plus residual log-scalings.
    let mut pot_a = vec![0.0; na];
    let mut pot_b = vec![0.0; nb];
    if let Some((wa, wb)) = init {
        for (k, &i) in supp_a.iter().enumerate() {
            pot_a[k] = wa[i];
        }
        for (k, &j) in supp_b.iter().enumerate() {
            pot_b[k] = wb[j];
        }
    }
    let mut phi = vec![0.0; na];
    let mut psi = vec![0.0; nb];

    // logk[i][j] = (pot_a[i] + pot_b[j] - c[i][j]) / λ, rebuilt on absorption.
    let mut logk = Array2::<f64>::zeros((na, nb));
    let rebuild = |logk: &mut Array2<f64>, pot_a: &[f64], pot_b: &[f64], csub: &Array2<f64>| {
        for i in 0..na {
            let lk = logk.row_mut(i);
            let cs = csub.row(i);
            let lk = lk.into_slice().expect("standard layout");
            let cs = cs.to_slice().expect("standard layout");
            for j in 0..nb {
                lk[j] = (pot_a[i] + pot_b[j] - cs[j]) / lambda;
            }
        }
    };
    rebuild(&mut logk, &pot_a, &pot_b, &csub);

    let mut row_lse = vec![0.0; na];
    let mut colmax = vec![0.0; nb];
    let mut colsum = vec![0.0; nb];
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;

        // Row pass: row_lse[i] = LSE_j(logk[i][j] + psi[j]).
        for i in 0..na {
            let lk = logk.row(i);
            let lk = lk.to_slice().expect("standard layout");
            let mut mx = f64::NEG_INFINITY;
            for j in 0..nb {
                let v = lk[j] + psi[j];
                if v > mx {
                    mx = v;
                }
            }
            let mut s = 0.0;
            for j in 0..nb {
                s += (lk[j] + psi[j] - mx).exp();
            }
            row_lse[i] = mx + s.ln();
        }

        // Column marginals are exact after the previous v-update, so the row
        // L1 error of the current plan decides convergence.
        if it > 1 {
            let mut err = 0.0;
            for i in 0..na {
                err += ((phi[i] + row_lse[i]).exp() - ra[i]).abs();
            }
            if err <= cfg.tol {
                iterations = it - 1;
                break;
            }
        }

        // u-update: rows become exact.
        for i in 0..na {
            phi[i] = la[i] - row_lse[i];
        }

        // v-update: columns become exact.
        for j in 0..nb {
            colmax[j] = f64::NEG_INFINITY;
        }
        for i in 0..na {
            let lk = logk.row(i);
            let lk = lk.to_slice().expect("standard layout");
            for j in 0..nb {
                let v = lk[j] + phi[i];
                if v > colmax[j] {
                    colmax[j] = v;
                }
            }
        }
        for j in 0..nb {
            colsum[j] = 0.0;
        }
        for i in 0..na {
            let lk = logk.row(i);
            let lk = lk.to_slice().expect("standard layout");
            for j in 0..nb {
                colsum[j] += (lk[j] + phi[i] - colmax[j]).exp();
            }
        }
        for j in 0..nb {
            psi[j] = lb[j] - (colmax[j] + colsum[j].ln());
        }

        let max_phi = phi.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let max_psi = psi.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if max_phi > cfg.absorb_threshold || max_psi > cfg.absorb_threshold {
            for i in 0..na {
                pot_a[i] += lambda * phi[i];
                phi[i] = 0.0;
            }
            for j in 0..nb {
                pot_b[j] += lambda * psi[j];
                psi[j] = 0.0;
            }
            rebuild(&mut logk, &pot_a, &pot_b, &csub);
        }
    }

    // Potentials in cost units, gauge-fixed so Σ_{supp(a)} α = 0.
    let mut asub: Vec<f64> = (0..na).map(|i| pot_a[i] + lambda * phi[i]).collect();
    let mut bsub: Vec<f64> = (0..nb).map(|j| pot_b[j] + lambda * psi[j]).collect();
    let shift = asub.iter().sum::<f64>() / na as f64;
    for x in &mut asub {
        *x -= shift;
    }
    for x in &mut bsub {
        *x += shift;
    }

    let mut plan = Array2::<f64>::zeros((n, n));
    for (ik, &i) in supp_a.iter().enumerate() {
        for (jk, &j) in supp_b.iter().enumerate() {
            plan[[i, j]] = (logk[[ik, jk]] + phi[ik] + psi[jk]).exp();
        }
    }

    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let t = plan[[i, j]];
            row_sums[i] += t;
            col_sums[j] += t;
        }
    }
    let row_err: f64 = (0..n).map(|i| (row_sums[i] - aw[i]).abs()).sum();
    let col_err: f64 = (0..n).map(|j| (col_sums[j] - bw[j]).abs()).sum();
    let marginal_err = row_err.max(col_err);
    let converged = marginal_err <= cfg.tol;

    // Primal value ⟨T,C⟩ - λ h(T), with 0·log 0 = 0.
    let mut primal = 0.0;
    for (ik, &i) in supp_a.iter().enumerate() {
        for (jk, &j) in supp_b.iter().enumerate() {
            let t = plan[[i, j]];
            if t > 0.0 {
                primal += t * csub[[ik, jk]] + lambda * t * t.ln();
            }
        }
    }

    // Full-length potentials; off-support entries are the smoothed
    // c-transform extension, so the vectors stay finite.
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for (k, &i) in supp_a.iter().enumerate() {
        alpha[i] = asub[k];
    }
    for (k, &j) in supp_b.iter().enumerate() {
        beta[j] = bsub[k];
    }
    for i in 0..n {
        if aw[i] > 0.0 {
            continue;
        }
        let mut mx = f64::NEG_INFINITY;
        for (k, &j) in supp_b.iter().enumerate() {
            let v = lb[k] + (bsub[k] - cost.entries()[[i, j]]) / lambda;
            if v > mx {
                mx = v;
            }
        }
        let mut s = 0.0;
        for (k, &j) in supp_b.iter().enumerate() {
            s += (lb[k] + (bsub[k] - cost.entries()[[i, j]]) / lambda - mx).exp();
        }
        alpha[i] = -lambda * (mx + s.ln());
    }
    for j in 0..n {
        if bw[j] > 0.0 {
            continue;
        }
        let mut mx = f64::NEG_INFINITY;
        for (k, &i) in supp_a.iter().enumerate() {
            let v = la[k] + (asub[k] - cost.entries()[[i, j]]) / lambda;
            if v > mx {
                mx = v;
            }
        }
        let mut s = 0.0;
        for (k, &i) in supp_a.iter().enumerate() {
            s += (la[k] + (asub[k] - cost.entries()[[i, j]]) / lambda - mx).exp();
        }
        beta[j] = -lambda * (mx + s.ln());
    }

    // Tight dual value: αᵀa + βᵀb - λ(Σ_ij exp((α_i+β_j-c_ij)/λ) - 1).
    let plan_mass: f64 = plan.sum();
    let dual = dot(&alpha, aw) + dot(&beta, bw) - lambda * (plan_mass - 1.0);

    let scaling_u: Vec<f64> = alpha.iter().map(|&x| (x / lambda).exp()).collect();
    let scaling_v: Vec<f64> = beta.iter().map(|&x| (x / lambda).exp()).collect();

    Ok(SinkhornSolution {
        lambda,
        plan,
        scaling_u,
        scaling_v,
        alpha,
        beta,
        primal,
        dual,
        iterations,
        marginal_err,
        converged,
    })
}

/// Dual functional `αᵀa + βᵀb - λ Σ_ij exp((α_i + β_j - c_ij)/λ)`, evaluated
/// with log-sum-exp safeguards. At the solver's reported potentials this
/// equals `dual - λ`; see [`SinkhornSolution::dual`] for the tight value.
pub fn eval_dual_objective(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    alpha: &[f64],
    beta: &[f64],
    cost: &CostMatrix,
    lambda: f64,
) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidInput(
            "lambda must be positive and finite".into(),
        ));
    }
    let n = cost.size();
    for len in [a.len(), b.len(), alpha.len(), beta.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    if alpha.iter().chain(beta).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("potentials must be finite".into()));
    }
    let mut mx = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let v = (alpha[i] + beta[j] - cost.entries()[[i, j]]) / lambda;
            if v > mx {
                mx = v;
            }
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += ((alpha[i] + beta[j] - cost.entries()[[i, j]]) / lambda - mx).exp();
        }
    }
    Ok(dot(alpha, a.weights()) + dot(beta, b.weights()) - lambda * (mx + s.ln()).exp())
}

/// The divergence value `d_λ(a, b)`: the converged dual value, which equals
/// the primal optimum. Errors if the solve does not converge.
pub fn sinkhorn_divergence(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    cfg: &SolverConfig,
) -> Result<f64> {
    let sol = sinkhorn_solve(a, b, cost, cfg)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    Ok(sol.dual)
}

/// Debiased combination `2 d_λ(a,b) - d_λ(a,a) - d_λ(b,b)`; zero at `a = b`.
pub fn sinkhorn_loss(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    cfg: &SolverConfig,
) -> Result<f64> {
    let dab = sinkhorn_divergence(a, b, cost, cfg)?;
    let daa = sinkhorn_divergence(a, a, cost, cfg)?;
    let dbb = sinkhorn_divergence(b, b, cost, cfg)?;
    Ok(2.0 * dab - daa - dbb)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
