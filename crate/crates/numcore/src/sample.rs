use crate::rng::Rng;
use crate::{NumError, Result};

/// Draws a unit vector from the von Mises–Fisher distribution with mean
/// direction `mu` and concentration `kappa`.
///
/// Uses Wood's rejection sampler for the component along `mu`, a uniform
/// tangent direction, and a Householder reflection taking `e1` onto `mu`.
pub fn sample_vmf(mu: &[f64], kappa: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let m = mu.len();
    if m < 2 {
        return Err(NumError::Direction(format!("dimension {m} < 2")));
    }
    let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(NumError::Direction("zero mean direction".into()));
    }
    if (norm - 1.0).abs() > 1e-6 {
        return Err(NumError::Direction(format!("mean direction has norm {norm}")));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(NumError::Argument(format!("kappa must be >= 0, got {kappa}")));
    }

    let w = sample_vmf_weight(m, kappa, rng);

    // uniform direction orthogonal to e1
    let mut v: Vec<f64> = (0..m - 1).map(|_| rng.normal()).collect();
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if vn > 0.0 {
        v.iter_mut().for_each(|x| *x /= vn);
    } else {
        v[0] = 1.0;
    }
    let s = (1.0 - w * w).max(0.0).sqrt();
    let mut x = Vec::with_capacity(m);
    x.push(w);
    x.extend(v.iter().map(|t| s * t));

    // Householder: u = e1 - mu maps e1 to mu.
    let mut u: Vec<f64> = mu.iter().map(|t| -t / norm).collect();
    u[0] += 1.0;
    let uu: f64 = u.iter().map(|t| t * t).sum();
    if uu > 1e-24 {
        let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        let c = 2.0 * ux / uu;
        for (xi, ui) in x.iter_mut().zip(&u) {
            *xi -= c * ui;
        }
    }
    let xn = x.iter().map(|t| t * t).sum::<f64>().sqrt();
    x.iter_mut().for_each(|t| *t /= xn);
    Ok(x)
}

fn sample_vmf_weight(m: usize, kappa: f64, rng: &mut Rng) -> f64 {
    let dim = (m - 1) as f64;
    // b written in the cancellation-free form.
    let b = dim / (2.0 * kappa + (4.0 * kappa * kappa + dim * dim).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dim * (1.0 - x0 * x0).ln();
    loop {
        let z = rng.beta(dim / 2.0, dim / 2.0);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u = rng.uniform();
        if kappa * w + dim * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w.clamp(-1.0, 1.0);
        }
    }
}

/// Uniform draw on `[lo, hi]`.
pub fn sample_uniform_interval(lo: f64, hi: f64, rng: &mut Rng) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(NumError::Interval { lo, hi });
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok((lo + (hi - lo) * rng.uniform()).min(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn zero_direction_is_rejected() {
        let mut rng = Rng::seed_from_u64(0);
        assert!(matches!(
            sample_vmf(&[0.0, 0.0, 0.0], 1.0, &mut rng),
            Err(NumError::Direction(_))
        ));
        assert!(sample_vmf(&[1.0], 1.0, &mut rng).is_err());
    }

    #[test]
    fn kappa_zero_is_uniform_on_average() {
        let mut rng = Rng::seed_from_u64(5);
        let mu = unit(6, &mut rng);
        let mut mean = [0.0; 6];
        for _ in 0..10_000 {
            let x = sample_vmf(&mu, 0.0, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&x) {
                *m += v / 10_000.0;
            }
        }
        let n = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n < 0.05, "mean norm {n}");
    }

    #[test]
    fn huge_kappa_concentrates() {
        let mut rng = Rng::seed_from_u64(9);
        let mu = unit(8, &mut rng);
        for _ in 0..200 {
            let x = sample_vmf(&mu, 1e6, &mut rng).unwrap();
            let dot: f64 = x.iter().zip(&mu).map(|(a, b)| a * b).sum();
            assert!(dot > 0.999);
        }
    }

    #[test]
    fn uniform_interval_cases() {
        let mut rng = Rng::seed_from_u64(1);
        assert_eq!(sample_uniform_interval(0.0, 0.0, &mut rng).unwrap(), 0.0);
        assert!(matches!(
            sample_uniform_interval(3.0, 2.0, &mut rng),
            Err(NumError::Interval { .. })
        ));
        let mean: f64 = (0..10_000)
            .map(|_| sample_uniform_interval(2.0, 3.0, &mut rng).unwrap())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean - 2.5).abs() < 0.02);
        let a = sample_uniform_interval(0.0, 1.0, &mut Rng::seed_from_u64(77)).unwrap();
        let b = sample_uniform_interval(0.0, 1.0, &mut Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    proptest! {
        #[test]
        fn vmf_output_is_unit(seed in 0u64..10_000, kappa in 0.0f64..1e4, dim in 2usize..10) {
            let mut rng = Rng::seed_from_u64(seed);
            let mu = unit(dim, &mut rng);
            let x = sample_vmf(&mu, kappa, &mut rng).unwrap();
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }

        #[test]
        fn vmf_stream_is_reproducible(seed in 0u64..10_000) {
            let mu = [0.6, 0.8, 0.0];
            let a = sample_vmf(&mu, 3.0, &mut Rng::seed_from_u64(seed)).unwrap();
            let b = sample_vmf(&mu, 3.0, &mut Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
