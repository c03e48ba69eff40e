/// First epoch `e` where the relative change between the mean of
/// `series[e−w..e]` and `series[e..e+w]` falls below `tol`; `None` if the
/// series is shorter than `2w` or never settles.
pub fn detect_convergence(series: &[f64], window: usize, tol: f64) -> Option<usize> {
    if window == 0 || series.len() < 2 * window {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (window..=series.len() - window).find(|&e| {
        let before = mean(&series[e - window..e]);
        let after = mean(&series[e..e + window]);
        let change = if before == after {
            0.0
        } else {
            (after - before).abs() / before.abs()
        };
        change < tol
    })
}
