//! Accuracy aggregation statistics.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the (n-1) divisor; 0 when n < 2.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let ss: f64 = xs.iter().map(|&x| (x - mu) * (x - mu)).sum();
    libm::sqrt(ss / (n - 1) as f64)
}

/// Half-width of the normal-approximation 95% confidence interval:
/// 1.96 * sample_std / sqrt(n). Reported as 0 when n < 2.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    1.96 * sample_std(xs) / libm::sqrt(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_formula_case() {
        // {0.5, 0.7}: mean 0.6, std sqrt(0.02) ~= 0.141421, half-width 0.196.
        let xs = [0.5, 0.7];
        assert!((mean(&xs) - 0.6).abs() < 1e-15);
        assert!((sample_std(&xs) - 0.141421356).abs() < 1e-8);
        assert!((ci95_half_width(&xs) - 0.196).abs() < 1e-12);
    }

    #[test]
    fn constant_accuracies_have_zero_width() {
        let xs = [0.25; 10];
        assert_eq!(mean(&xs), 0.25);
        assert_eq!(ci95_half_width(&xs), 0.0);
    }

    #[test]
    fn single_run_reports_zero_width() {
        assert_eq!(ci95_half_width(&[0.9]), 0.0);
        assert_eq!(sample_std(&[0.9]), 0.0);
    }
}
