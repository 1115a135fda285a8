/// Summary of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverReport {
    /// Objective after each epoch: the dual `f(beta)` for the kernel solver,
    /// the primal `g(w_bar)` for the linear solver.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub epochs: usize,
    /// Coordinate updates (kernel) or pair draws (linear).
    pub iterations: u64,
    /// Largest projected-gradient violation of the final dual state.
    pub final_violation: Option<f64>,
    pub loo_bound: Option<f64>,
    /// Step size the linear solver ran with.
    pub eta0: Option<f64>,
}

impl SolverReport {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }

    /// One-line human readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "converged={} epochs={} iterations={}",
            self.converged, self.epochs, self.iterations
        );
        if let Some(f) = self.final_objective() {
            s.push_str(&format!(" objective={f:.10e}"));
        }
        if let Some(v) = self.final_violation {
            s.push_str(&format!(" kkt_violation={v:.3e}"));
        }
        if let Some(b) = self.loo_bound {
            s.push_str(&format!(" loo_bound={b:.6}"));
        }
        if let Some(e) = self.eta0 {
            s.push_str(&format!(" eta0={e}"));
        }
        s
    }
}
