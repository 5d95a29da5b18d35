/// Transient mean `(gamma/delta)(1 - e^(-delta T))` of the birth-death
/// process started at zero.
pub fn bd_mean_closed_form(gamma: f64, delta: f64, horizon: f64) -> f64 {
    -(gamma / delta) * (-delta * horizon).exp_m1()
}
