//! Non-saturating logistic GAN losses and their score gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn check(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid(format!("{what} scores are empty")));
    }
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite {what} score {v}")));
    }
    Ok(())
}

/// `mean softplus(−real) + mean softplus(fake)`.
pub fn d_loss(real: &[f64], fake: &[f64]) -> Result<f64> {
    check(real, "real")?;
    check(fake, "fake")?;
    let r = real.iter().map(|&s| softplus(-s)).sum::<f64>() / real.len() as f64;
    let f = fake.iter().map(|&s| softplus(s)).sum::<f64>() / fake.len() as f64;
    Ok(r + f)
}

/// Gradients of [`d_loss`] with respect to the real and fake scores.
pub fn d_loss_grad(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    (
        real.iter().map(|&s| -sigmoid(-s) / nr).collect(),
        fake.iter().map(|&s| sigmoid(s) / nf).collect(),
    )
}

/// `mean softplus(−fake)`.
pub fn g_loss(fake: &[f64]) -> Result<f64> {
    check(fake, "fake")?;
    Ok(fake.iter().map(|&s| softplus(-s)).sum::<f64>() / fake.len() as f64)
}

pub fn g_loss_grad(fake: &[f64]) -> Vec<f64> {
    let n = fake.len() as f64;
    fake.iter().map(|&s| -sigmoid(-s) / n).collect()
}

/// Mean absolute difference and its gradient w.r.t. `a`.
pub fn l1_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let loss = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use core::f64::consts::LN_2;

    #[test]
    fn zero_scores() {
        assert!((d_loss(&[0.0; 4], &[0.0; 4]).unwrap() - 2.0 * LN_2).abs() < 1e-15);
        assert!((g_loss(&[0.0; 4]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturation() {
        assert!(d_loss(&[800.0], &[-800.0]).unwrap() < 1e-300);
        assert!(softplus(800.0).is_finite());
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        assert!(matches!(d_loss(&[f64::NAN], &[0.0]), Err(Error::Numeric(_))));
        assert!(matches!(g_loss(&[f64::INFINITY]), Err(Error::Numeric(_))));
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = CounterRng::new(3);
        for _ in 0..100 {
            let r: Vec<f64> = (0..5).map(|_| 3.0 * rng.normal()).collect();
            let f: Vec<f64> = (0..7).map(|_| 3.0 * rng.normal()).collect();
            let direct_d = r.iter().map(|s| libm::log(1.0 + libm::exp(-s))).sum::<f64>() / 5.0
                + f.iter().map(|s| libm::log(1.0 + libm::exp(*s))).sum::<f64>() / 7.0;
            let direct_g = f.iter().map(|s| libm::log(1.0 + libm::exp(-s))).sum::<f64>() / 7.0;
            assert!((d_loss(&r, &f).unwrap() - direct_d).abs() <= 1e-9);
            assert!((g_loss(&f).unwrap() - direct_g).abs() <= 1e-9);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = CounterRng::new(5);
        let r: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let f: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let (gr, gf) = d_loss_grad(&r, &f);
        let gg = g_loss_grad(&f);
        let h = 1e-6;
        for i in 0..4 {
            let (mut a, mut b) = (r.clone(), r.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (d_loss(&a, &f).unwrap() - d_loss(&b, &f).unwrap()) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-8);
        }
        for i in 0..3 {
            let (mut a, mut b) = (f.clone(), f.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (d_loss(&r, &a).unwrap() - d_loss(&r, &b).unwrap()) / (2.0 * h);
            assert!((fd - gf[i]).abs() < 1e-8);
            let fd = (g_loss(&a).unwrap() - g_loss(&b).unwrap()) / (2.0 * h);
            assert!((fd - gg[i]).abs() < 1e-8);
        }
    }
}
