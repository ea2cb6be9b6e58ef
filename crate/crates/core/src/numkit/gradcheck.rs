use super::ParamStore;

/// Denominator floor for relative errors; entries whose gradient is
/// numerically zero are effectively compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SlotCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub slots: Vec<SlotCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.slots.iter().all(|s| s.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.slots.iter().fold(0.0, |m, s| m.max(s.max_rel_err))
    }

    pub fn failing(&self) -> Vec<&str> {
        self.slots
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.name.as_str())
            .collect()
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.slots {
            writeln!(
                f,
                "{:<24} n={:<6} rel={:.3e} abs={:.3e} {}",
                s.name,
                s.entries,
                s.max_rel_err,
                s.max_abs_err,
                if s.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compares analytic gradients against central differences for every entry
/// of every slot.
///
/// `objective(params, want_grad)` must return the scalar loss and, when
/// `want_grad` is true, accumulate its gradient into the store's gradient
/// buffers. It must be deterministic in `params`.
pub fn grad_check<F>(params: &mut ParamStore, eps: f64, tolerance: f64, mut objective: F) -> GradCheckReport
where
    F: FnMut(&mut ParamStore, bool) -> f64,
{
    params.zero_grads();
    objective(params, true);
    let analytic: Vec<Vec<f64>> = params.ids().map(|id| params.grad(id).as_slice().to_vec()).collect();
    params.zero_grads();

    let ids: Vec<_> = params.ids().collect();
    let mut slots = Vec::with_capacity(ids.len());
    for (id, analytic) in ids.into_iter().zip(analytic) {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = params.value(id).as_slice()[k];
            params.value_mut(id).as_mut_slice()[k] = orig + eps;
            let fp = objective(params, false);
            params.value_mut(id).as_mut_slice()[k] = orig - eps;
            let fm = objective(params, false);
            params.value_mut(id).as_mut_slice()[k] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        params.zero_grads();
        slots.push(SlotCheck {
            name: params.name(id).to_string(),
            entries: analytic.len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < tolerance,
        });
    }
    GradCheckReport {
        eps,
        tolerance,
        slots,
    }
}
