//! Affine-domain effective channel and linear MMSE equalization.

use crate::channel::SparseChannel;
use crate::modem::Modem;
use crate::{Error, Result, C64};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// `H_eff = Q^H H Q` together with the noise variance the equalizer assumes.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub h_eff: DMatrix<C64>,
    pub sigma2: f64,
}

pub fn effective_channel(h: &DMatrix<C64>, modem: &Modem, sigma2: f64) -> Result<EffectiveChannel> {
    let n = modem.n();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::shape(format!(
            "channel is {}x{}, modem expects {n}x{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    let q = modem.modulation_matrix();
    Ok(EffectiveChannel {
        h_eff: q.adjoint() * h * q,
        sigma2,
    })
}

/// Relative pivot size below which a zero-noise system is treated as singular.
const RANK_TOLERANCE: f64 = 1e-12;

/// Factorizes a Hermitian matrix that should be positive definite.
fn factorize(a: DMatrix<C64>, sigma2: f64) -> Result<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::NumericalRank(format!(
            "normal equations are not positive definite (sigma2 = {sigma2})"
        ))
    })?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let min = diag.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    if !(min > RANK_TOLERANCE * max) {
        return Err(Error::NumericalRank(format!(
            "Cholesky pivot ratio {:.3e} below tolerance",
            min / max
        )));
    }
    Ok(chol)
}

/// MMSE equalizer `G = (H^H H + sigma2 I)^{-1} H^H` held as a Cholesky
/// factorization, reusable across received vectors that share the channel.
pub struct MmseEqualizer {
    h_adj: DMatrix<C64>,
    factor: Cholesky<C64, Dyn>,
}

impl MmseEqualizer {
    pub fn new(eff: &EffectiveChannel) -> Result<Self> {
        if !(eff.sigma2 >= 0.0) {
            return Err(Error::config(format!("noise variance {} is negative", eff.sigma2)));
        }
        let n = eff.h_eff.ncols();
        let h_adj = eff.h_eff.adjoint();
        let gram = &h_adj * &eff.h_eff + DMatrix::from_diagonal_element(n, n, C64::new(eff.sigma2, 0.0));
        let factor = factorize(gram, eff.sigma2)?;
        Ok(MmseEqualizer { h_adj, factor })
    }

    pub fn equalize(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.h_adj.ncols() {
            return Err(Error::shape(format!(
                "equalizer expects {} samples, got {}",
                self.h_adj.ncols(),
                y.len()
            )));
        }
        let rhs = &self.h_adj * DVector::from_column_slice(y);
        Ok(self.factor.solve(&rhs).as_slice().to_vec())
    }
}

/// `x_hat = (H_eff^H H_eff + sigma2 I)^{-1} H_eff^H y`.
pub fn mmse_equalize(y: &[C64], eff: &EffectiveChannel) -> Result<Vec<C64>> {
    MmseEqualizer::new(eff)?.equalize(y)
}

/// MMSE solve against the time-domain channel:
/// `z = (H^H H + sigma2 I)^{-1} H^H r`.
///
/// Because `Q` is unitary, demodulating `z` yields exactly the affine-domain
/// MMSE output for `y = Q^H r` and `H_eff = Q^H H Q`, for any phase law used
/// in `Q`. Only the O(N P^2) Gram matrix and one factorization are needed.
pub fn mmse_time_domain(channel: &SparseChannel, r: &[C64], sigma2: f64) -> Result<Vec<C64>> {
    if r.len() != channel.n() {
        return Err(Error::shape(format!(
            "equalizer expects {} samples, got {}",
            channel.n(),
            r.len()
        )));
    }
    let factor = factorize(channel.regularized_gram(sigma2), sigma2)?;
    let rhs = DVector::from_vec(channel.adjoint_apply(r));
    Ok(factor.solve(&rhs).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel_matrix, draw_realization, propagate_time_domain, ChannelProfile};
    use crate::modem::AfdmParams;
    use crate::phasefn::{PhaseFunction, DEFAULT_KAPPA};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn modem(phase: PhaseFunction) -> Modem {
        Modem::new(&AfdmParams::new(64, 3.0, phase, 3).unwrap()).unwrap()
    }

    /// `(A^H A + s I)^{-1} A^H y` through an explicit inverse.
    fn explicit_inverse_mmse(h: &DMatrix<C64>, sigma2: f64, y: &[C64]) -> Vec<C64> {
        let n = h.ncols();
        let inv = (h.adjoint() * h + DMatrix::from_diagonal_element(n, n, C64::new(sigma2, 0.0)))
            .try_inverse()
            .unwrap();
        (inv * h.adjoint() * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    #[test]
    fn identity_and_scalar_channels() {
        let m = modem(PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 1.0));
        let eye = DMatrix::<C64>::identity(64, 64);
        let eff = effective_channel(&eye, &m, 0.0).unwrap();
        assert!((&eff.h_eff - &eye).map(|z| z.norm()).max() < 1e-12);
        let alpha = C64::new(0.3, -1.1);
        let eff = effective_channel(&(&eye * alpha), &m, 0.0).unwrap();
        assert!((&eff.h_eff - &eye * alpha).map(|z| z.norm()).max() < 1e-12);
        assert!(effective_channel(&DMatrix::identity(8, 8), &m, 0.0).is_err());
    }

    #[test]
    fn frobenius_norm_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = modem(PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 10.0));
        for _ in 0..100 {
            let h = random_matrix(&mut rng, 64);
            let eff = effective_channel(&h, &m, 0.0).unwrap();
            assert!((eff.h_eff.norm() - h.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn equalizer_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_vec(&mut rng, 16);
        let eye = EffectiveChannel { h_eff: DMatrix::identity(16, 16), sigma2: 0.0 };
        assert!(max_diff(&mmse_equalize(&y, &eye).unwrap(), &y) < 1e-15);
        let noisy = EffectiveChannel { sigma2: 1.0, ..eye };
        let half: Vec<C64> = y.iter().map(|v| v * 0.5).collect();
        assert!(max_diff(&mmse_equalize(&y, &noisy).unwrap(), &half) < 1e-15);

        let q = Modem::new(&AfdmParams::new(16, 1.0, PhaseFunction::conventional(0.3), 0).unwrap())
            .unwrap()
            .modulation_matrix();
        let eff = EffectiveChannel { h_eff: q.clone(), sigma2: 0.0 };
        let expect = (q.adjoint() * DVector::from_column_slice(&y)).as_slice().to_vec();
        assert!(max_diff(&mmse_equalize(&y, &eff).unwrap(), &expect) < 1e-10);
    }

    #[test]
    fn singular_zero_noise_is_rank_error() {
        let mut h = DMatrix::<C64>::identity(8, 8);
        h[(3, 3)] = C64::new(0.0, 0.0);
        let eff = EffectiveChannel { h_eff: h, sigma2: 0.0 };
        assert!(matches!(MmseEqualizer::new(&eff), Err(Error::NumericalRank(_))));
        let eff = EffectiveChannel { sigma2: 1e-3, ..eff };
        assert!(MmseEqualizer::new(&eff).is_ok());
    }

    #[test]
    fn zero_noise_inverts_well_conditioned_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = DMatrix::<C64>::identity(32, 32) * C64::new(3.0, 0.0) + random_matrix(&mut rng, 32) * C64::new(0.1, 0.0);
        let y = random_vec(&mut rng, 32);
        let eff = EffectiveChannel { h_eff: h.clone(), sigma2: 0.0 };
        let x = mmse_equalize(&y, &eff).unwrap();
        let direct = h.lu().solve(&DVector::from_column_slice(&y)).unwrap();
        assert!(max_diff(&x, direct.as_slice()) < 1e-8);
    }

    #[test]
    fn mmse_converges_as_noise_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = DMatrix::<C64>::identity(32, 32) * C64::new(2.0, 0.0) + random_matrix(&mut rng, 32) * C64::new(0.1, 0.0);
        let y = random_vec(&mut rng, 32);
        let exact = h.clone().lu().solve(&DVector::from_column_slice(&y)).unwrap();
        let mut last = f64::INFINITY;
        for sigma2 in [1e-2, 1e-4, 1e-6] {
            let x = mmse_equalize(&y, &EffectiveChannel { h_eff: h.clone(), sigma2 }).unwrap();
            let err: f64 = x.iter().zip(exact.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < last, "sigma2={sigma2}: {err} >= {last}");
            last = err;
        }
    }

    #[test]
    fn solve_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = AfdmParams::new(64, 3.0, PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 1.0), 3).unwrap();
        let m = Modem::new(&p).unwrap();
        for sigma2 in [1e-3, 0.1] {
            let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
            let h = build_channel_matrix(&real, &p).unwrap();
            let eff = effective_channel(&h, &m, sigma2).unwrap();
            let y = random_vec(&mut rng, 64);
            let a = mmse_equalize(&y, &eff).unwrap();
            let b = explicit_inverse_mmse(&eff.h_eff, sigma2, &y);
            assert!(max_diff(&a, &b) < 1e-8);
        }
    }

    #[test]
    fn end_to_end_pipeline_equals_effective_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for phase in [PhaseFunction::conventional(0.2), PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 10.0)] {
            let p = AfdmParams::new(64, 3.0, phase, 3).unwrap();
            let m = Modem::new(&p).unwrap();
            for _ in 0..10 {
                let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
                let h = build_channel_matrix(&real, &p).unwrap();
                let eff = effective_channel(&h, &m, 0.0).unwrap();
                let x = random_vec(&mut rng, 64);
                let rx = propagate_time_domain(&real, &m.add_cpp(&m.modulate(&x).unwrap()).unwrap(), &p).unwrap();
                let y = m.demodulate(&m.remove_cpp(&rx).unwrap()).unwrap();
                let expect = &eff.h_eff * DVector::from_column_slice(&x);
                assert!(max_diff(&y, expect.as_slice()) < 1e-9);
            }
        }
    }

    #[test]
    fn time_domain_solve_matches_affine_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = AfdmParams::new(64, 3.0, PhaseFunction::cosine(0.2, DEFAULT_KAPPA, 10.0), 3).unwrap();
        let m = Modem::new(&p).unwrap();
        for sigma2 in [0.0, 1e-3, 0.3] {
            let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
            let sparse = SparseChannel::new(&real, &p).unwrap();
            let h = sparse.to_dense();
            let r = random_vec(&mut rng, 64);
            let eff = effective_channel(&h, &m, sigma2).unwrap();
            let affine = mmse_equalize(&m.demodulate(&r).unwrap(), &eff).unwrap();
            let via_time = m.demodulate(&mmse_time_domain(&sparse, &r, sigma2).unwrap()).unwrap();
            // Without regularization the Gram matrix squares the condition
            // number of H, so the unregularized case gets a looser bound.
            let tol = if sigma2 == 0.0 { 1e-7 } else { 1e-9 };
            let d = max_diff(&affine, &via_time);
            assert!(d < tol, "sigma2={sigma2} diff={d}");
        }
    }
}
