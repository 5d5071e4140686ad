/// Denominator floor for relative errors. Coordinates whose gradients are
/// smaller than this are effectively compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the analytic gradient returned by `loss_and_grad` with central
/// differences `(f(θ+h) − f(θ−h)) / 2h` on every coordinate.
pub fn grad_check<F>(mut loss_and_grad: F, params: &[f64], h: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_and_grad(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
        tolerance,
        passed: true,
    };
    for i in 0..params.len() {
        theta[i] = params[i] + h;
        let up = loss_and_grad(&theta).0;
        theta[i] = params[i] - h;
        let down = loss_and_grad(&theta).0;
        theta[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    report
}
