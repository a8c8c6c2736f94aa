use super::{ParamStore, Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, floor)`.
    pub magnitude_floor: f64,
    /// Check at most this many evenly spaced entries per parameter.
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            magnitude_floor: 1e-6,
            max_entries_per_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `f` with central differences over every
/// parameter in `store` (or a strided subset, see [`GradCheckConfig`]).
pub fn finite_difference_check<F>(store: &ParamStore, f: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss)?;

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.value(l).item())
    };
    for (id, param) in store.iter() {
        let len = param.value.len();
        let stride = match cfg.max_entries_per_param {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        for k in (0..len).step_by(stride) {
            let original = param.value.data()[k];
            probe.value_mut(id).data_mut()[k] = original + cfg.eps;
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = original - cfg.eps;
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(cfg.magnitude_floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = param.name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(3, 2, vec![0.3, -0.1, 0.7, 0.2, -0.5, 0.9]).unwrap());
        let report = finite_difference_check(
            &store,
            |tape, s| {
                let x = tape.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, -3.0]).unwrap());
                let wv = tape.param(s, w);
                let y = tape.matmul(x, wv)?;
                Ok(tape.sum(y))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 6);
        assert!(report.max_rel_error <= 1e-10, "{report:?}");
    }

    #[test]
    fn softmax_cross_entropy_chain() {
        let mut store = ParamStore::new();
        let w = store.add(
            "w",
            Tensor::matrix(2, 3, vec![0.4, -0.3, 0.8, 0.1, 0.5, -0.6]).unwrap(),
        );
        let report = finite_difference_check(
            &store,
            |tape, s| {
                let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, -0.5, 0.3, 2.0]).unwrap());
                let wv = tape.param(s, w);
                let logits = tape.matmul(x, wv)?;
                let nll = tape.cross_entropy(logits, &[2, 0])?;
                Ok(tape.sum(nll))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }
}
