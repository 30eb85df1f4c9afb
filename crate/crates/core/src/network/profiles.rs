//! Normalised daily shapes used to expand single-period cases.

const LOAD_24: [f64; 24] = [
    0.62, 0.58, 0.55, 0.54, 0.56, 0.63, 0.74, 0.86, 0.93, 0.96, 0.98, 1.00, 0.99, 0.97, 0.95, 0.94, 0.96, 1.00, 0.99, 0.95, 0.89, 0.81,
    0.73, 0.66,
];

// Renewable output with a daytime peak; never zero so every period keeps a
// non-degenerate forecast band.
const RENEWABLE_24: [f64; 24] = [
    0.35, 0.33, 0.32, 0.31, 0.33, 0.40, 0.52, 0.66, 0.80, 0.91, 0.98, 1.00, 0.99, 0.95, 0.87, 0.76, 0.63, 0.51, 0.43, 0.39, 0.38, 0.37,
    0.36, 0.35,
];

fn sample(shape: &[f64; 24], horizon: usize) -> Vec<f64> {
    if horizon == 1 {
        return vec![1.0];
    }
    (0..horizon)
        .map(|t| {
            let lo = t * 24 / horizon;
            let hi = ((t + 1) * 24 / horizon).max(lo + 1);
            shape[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn load_profile(horizon: usize) -> Vec<f64> {
    sample(&LOAD_24, horizon)
}

pub fn renewable_profile(horizon: usize) -> Vec<f64> {
    sample(&RENEWABLE_24, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_positive_and_bounded() {
        for t in [1, 4, 12, 24] {
            let l = load_profile(t);
            let r = renewable_profile(t);
            assert_eq!(l.len(), t);
            assert!(l.iter().chain(&r).all(|&v| v > 0.0 && v <= 1.0));
        }
        assert_eq!(load_profile(24), LOAD_24.to_vec());
    }
}
