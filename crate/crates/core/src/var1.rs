//! VAR(1) processes `X_t = Φ X_{t-1} + ε_t`, `ε_t ~ N(0, I)`, with closed-form
//! stationary covariance `V`, asymptotic covariance `Σ` and bias matrix `Γ`.
//!
//! Random streams come from ChaCha20 seeded with a `u64`; independent
//! sub-streams are selected with [`stream_rng`] so replications can run in
//! any order and on any number of workers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::ChainMatrix;
use crate::error::{Error, Result};

/// Purpose tag for a derived random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Coefficients = 0,
    Pilot = 1,
    Final = 2,
}

/// Generator for `(seed, replication, purpose)`: ChaCha20 keyed by `seed`,
/// stream id `4·replication + purpose`.
pub fn stream_rng(seed: u64, replication: u64, purpose: StreamPurpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication * 4 + purpose as u64);
    rng
}

/// `Φ = ρ·AAᵀ / (λ_max(AAᵀ) + 0.001)` with `A` standard normal, filled row by
/// row from `stream_rng(seed, 0, Coefficients)`.
pub fn make_phi(p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    let mut rng = stream_rng(seed, 0, StreamPurpose::Coefficients);
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let b = &a * a.transpose();
    let b = (&b + b.transpose()) * 0.5;
    let lambda_max = b
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(b * (rho / (lambda_max + 0.001)))
}

pub fn spectral_radius(phi: &DMatrix<f64>) -> f64 {
    phi.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

fn check_square(phi: &DMatrix<f64>) -> Result<()> {
    if phi.nrows() != phi.ncols() || phi.nrows() == 0 {
        return Err(Error::Dimension {
            expected: phi.nrows(),
            found: phi.ncols(),
        });
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Solves `vec(V) = (I - Φ⊗Φ)⁻¹ vec(I)`.
pub fn stationary_cov(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(phi)?;
    if spectral_radius(phi) >= 1.0 - 1e-10 {
        return Err(Error::Singular);
    }
    let p = phi.nrows();
    let system = DMatrix::<f64>::identity(p * p, p * p) - phi.kronecker(phi);
    // column-major storage of the identity is vec(I)
    let rhs = DVector::from_column_slice(DMatrix::<f64>::identity(p, p).as_slice());
    let vec_v = system.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(symmetrize(DMatrix::from_column_slice(p, p, vec_v.as_slice())))
}

fn i_minus(phi: &DMatrix<f64>) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    (DMatrix::<f64>::identity(phi.nrows(), phi.ncols()) - phi).lu()
}

/// `Σ = (I - Φ)⁻¹V + V(I - Φᵀ)⁻¹ - V`.
pub fn true_sigma(phi: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(phi)?;
    let x = i_minus(phi).solve(v).ok_or(Error::Singular)?;
    Ok(symmetrize(&x + x.transpose() - v))
}

/// `Γ = -[(I - Φ)⁻²ΦV + VΦᵀ(I - Φᵀ)⁻²]`.
pub fn true_gamma(phi: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(phi)?;
    let lu = i_minus(phi);
    let once = lu.solve(&(phi * v)).ok_or(Error::Singular)?;
    let y = lu.solve(&once).ok_or(Error::Singular)?;
    Ok(symmetrize(-(&y + y.transpose())))
}

/// A stationary VAR(1) with its closed-form ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Var1Spec {
    pub phi: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub sigma_true: DMatrix<f64>,
    pub gamma_true: DMatrix<f64>,
    pub spectral_radius: f64,
}

impl Var1Spec {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        check_square(&phi)?;
        let radius = spectral_radius(&phi);
        if radius >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "spectral radius {radius} must be < 1"
            )));
        }
        let v = stationary_cov(&phi)?;
        let sigma_true = true_sigma(&phi, &v)?;
        let gamma_true = true_gamma(&phi, &v)?;
        Ok(Var1Spec {
            phi,
            v,
            sigma_true,
            gamma_true,
            spectral_radius: radius,
        })
    }

    /// `Φ = make_phi(p, rho, seed)`.
    pub fn from_rho(p: usize, rho: f64, seed: u64) -> Result<Self> {
        Var1Spec::new(make_phi(p, rho, seed)?)
    }

    pub fn p(&self) -> usize {
        self.phi.nrows()
    }

    /// `(Σ_i Γ_ii² / Σ_i Σ_ii²)^{1/3}`.
    pub fn true_bopt_coefficient(&self) -> f64 {
        let num: f64 = self.gamma_true.diagonal().iter().map(|g| g * g).sum();
        let den: f64 = self.sigma_true.diagonal().iter().map(|s| s * s).sum();
        (num / den).cbrt()
    }

    /// `n` draws with `X_0 ~ N(0, V)`; rows are `X_1..X_n`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<ChainMatrix> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.simulate_with_rng(n, &mut rng)
    }

    pub fn simulate_with_rng<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ChainMatrix> {
        let p = self.p();
        let chol = self.v.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let z = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(rng));
        let mut x: Vec<f64> = (&l * z).iter().copied().collect();
        let phi: Vec<f64> = (0..p * p).map(|idx| self.phi[(idx / p, idx % p)]).collect();
        let mut next = vec![0.0; p];
        let mut data = Vec::with_capacity(n * p);
        for _ in 0..n {
            for (i, out) in next.iter_mut().enumerate() {
                let row = &phi[i * p..(i + 1) * p];
                let mut acc: f64 = StandardNormal.sample(rng);
                for (a, b) in row.iter().zip(&x) {
                    acc += a * b;
                }
                *out = acc;
            }
            std::mem::swap(&mut x, &mut next);
            data.extend_from_slice(&x);
        }
        ChainMatrix::new(data, n, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(phi: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, phi)
    }

    #[test]
    fn scalar_phi_construction() {
        let mut rng = stream_rng(9, 0, StreamPurpose::Coefficients);
        let a: f64 = StandardNormal.sample(&mut rng);
        let phi = make_phi(1, 0.5, 9).unwrap();
        let expected = 0.5 * a * a / (a * a + 0.001);
        assert!((phi[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn make_phi_is_deterministic_and_contractive() {
        for seed in 0..20 {
            let a = make_phi(4, 0.9, seed).unwrap();
            assert_eq!(a, make_phi(4, 0.9, seed).unwrap());
            assert!(spectral_radius(&a) < 0.9);
            assert_eq!(a, a.transpose());
        }
        assert!(make_phi(3, 1.0, 0).is_err());
    }

    #[test]
    fn white_noise_truth() {
        let spec = Var1Spec::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(spec.v, DMatrix::identity(3, 3));
        assert!((spec.sigma_true.clone() - DMatrix::identity(3, 3)).amax() < 1e-15);
        assert_eq!(spec.gamma_true.amax(), 0.0);
        assert_eq!(spec.true_bopt_coefficient(), 0.0);
    }

    #[test]
    fn scalar_truth() {
        let spec = Var1Spec::new(scalar(0.5)).unwrap();
        assert!((spec.v[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!((spec.sigma_true[(0, 0)] - 4.0).abs() < 1e-13);
        assert!((spec.gamma_true[(0, 0)] + 16.0 / 3.0).abs() < 1e-13);
        assert!((spec.true_bopt_coefficient() - (16.0f64 / 9.0).cbrt()).abs() < 1e-13);
    }

    #[test]
    fn fixed_point_residual() {
        let spec = Var1Spec::from_rho(4, 0.9, 3).unwrap();
        let resid = &spec.v - &spec.phi * &spec.v * spec.phi.transpose() - DMatrix::identity(4, 4);
        assert!(resid.amax() <= 1e-10 * spec.v.amax());
    }

    #[test]
    fn rejects_explosive_phi() {
        assert!(Var1Spec::new(scalar(1.2)).is_err());
        assert!(stationary_cov(&scalar(1.0)).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let spec = Var1Spec::from_rho(2, 0.8, 1).unwrap();
        let a = spec.simulate(500, 42).unwrap();
        assert_eq!(a, spec.simulate(500, 42).unwrap());
        assert_ne!(a, spec.simulate(500, 43).unwrap());
    }

    #[test]
    fn simulated_variance_matches_v() {
        let spec = Var1Spec::new(scalar(0.5)).unwrap();
        let chain = spec.simulate(100_000, 7).unwrap();
        let v = chain.sample_autocovariance(0, 0).unwrap().values[0];
        assert!((1.25..=1.42).contains(&v), "{v}");
    }

    #[test]
    fn streams_differ() {
        use rand::Rng;
        let mut a = stream_rng(1, 0, StreamPurpose::Pilot);
        let mut b = stream_rng(1, 0, StreamPurpose::Final);
        let mut c = stream_rng(1, 1, StreamPurpose::Pilot);
        let x: u64 = a.random();
        assert_ne!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
    }
}
