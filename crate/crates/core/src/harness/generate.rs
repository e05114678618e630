//! Seeded random instances with prescribed structure.
//!
//! Generation is a pure function of the [`InstanceSpec`]: the same spec always
//! yields bit-identical families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::io::Instance;
use crate::error::{Error, Result};
use crate::gframe::{frame_operator, BlockFamily, TargetOperator};
use crate::linalg::{self, c64, eigh, pseudo_inverse, Matrix};
use crate::measure::MeasureSpace;

/// Resample budget for rank-deficient draws.
pub const MAX_ATTEMPTS: usize = 100;
/// Generated frames satisfy `λ_min(S) ≥ MIN_LOWER_BOUND`.
pub const MIN_LOWER_BOUND: f64 = 0.1;
/// Largest relative perturbation for `woven_pair` instances.
pub const MAX_WOVEN_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Gframe,
    LgFrame,
    WovenPair,
    AtomicSystem,
    ApproxDualPair,
    PerturbedPair,
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::SpecInvalid(format!("unknown instance kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockDims {
    Constant(usize),
    PerIndex(Vec<usize>),
}

impl BlockDims {
    fn resolve(&self, indices: usize) -> Result<Vec<usize>> {
        let dims = match self {
            BlockDims::Constant(d) => vec![*d; indices],
            BlockDims::PerIndex(v) if v.len() == indices => v.clone(),
            BlockDims::PerIndex(v) => {
                return Err(Error::SpecInvalid(format!("{} block dims for {indices} indices", v.len())));
            }
        };
        if dims.contains(&0) {
            return Err(Error::SpecInvalid("block dims must be at least 1".into()));
        }
        Ok(dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightProfile {
    #[default]
    Uniform,
    /// Independent weights drawn from `[0.5, 2)`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceParams {
    /// Rank of a random target `L`; the identity when absent.
    pub target_rank: Option<usize>,
    /// Relative size of the per-index left perturbation `I + C_ς`.
    pub delta: f64,
    /// Approximate-dual constant `t` for `approx_dual_pair`.
    pub dual_defect: f64,
    /// Bound on `|η_ς|` for `perturbed_pair`.
    pub alpha1: f64,
    pub weights: WeightProfile,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            target_rank: None,
            delta: MAX_WOVEN_DELTA,
            dual_defect: 0.3,
            alpha1: 0.1,
            weights: WeightProfile::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub dim: usize,
    pub indices: usize,
    pub block_dims: BlockDims,
    #[serde(default)]
    pub params: InstanceParams,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind, dim: usize, indices: usize, block_dim: usize, seed: u64) -> Self {
        InstanceSpec {
            kind,
            dim,
            indices,
            block_dims: BlockDims::Constant(block_dim),
            params: InstanceParams::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<Vec<usize>> {
        if self.dim == 0 || self.indices == 0 {
            return Err(Error::SpecInvalid("dim and indices must be at least 1".into()));
        }
        let dims = self.block_dims.resolve(self.indices)?;
        let total: usize = dims.iter().sum();
        if total < self.dim {
            return Err(Error::SpecInvalid(format!("{total} block rows cannot span dimension {}", self.dim)));
        }
        let p = &self.params;
        if let Some(r) = p.target_rank {
            if r == 0 || r > self.dim {
                return Err(Error::SpecInvalid(format!("target rank {r} outside 1..={}", self.dim)));
            }
        }
        let delta_cap = match self.kind {
            InstanceKind::WovenPair | InstanceKind::PerturbedPair => MAX_WOVEN_DELTA,
            _ => 1.0,
        };
        if !(0.0..=delta_cap).contains(&p.delta) || p.delta >= 1.0 {
            return Err(Error::SpecInvalid(format!("delta {} outside [0, {delta_cap}]", p.delta)));
        }
        if !(0.0..1.0).contains(&p.dual_defect) {
            return Err(Error::SpecInvalid(format!("dual defect {} outside [0, 1)", p.dual_defect)));
        }
        if !(0.0..1.0).contains(&p.alpha1) {
            return Err(Error::SpecInvalid(format!("alpha1 {} outside [0, 1)", p.alpha1)));
        }
        Ok(dims)
    }
}

/// Entries are independent standard complex Gaussians (unit variance).
pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    Matrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64(re * scale, im * scale)
    })
}

fn weights(rng: &mut ChaCha8Rng, n: usize, profile: WeightProfile) -> Vec<f64> {
    match profile {
        WeightProfile::Uniform => vec![1.0; n],
        WeightProfile::Random => (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
    }
}

/// Gaussian blocks rescaled so that `λ_min(S) ≥ MIN_LOWER_BOUND`.
pub(crate) fn random_frame(
    rng: &mut ChaCha8Rng,
    space: &MeasureSpace,
    dim: usize,
    dims: &[usize],
) -> Result<BlockFamily> {
    for _ in 0..MAX_ATTEMPTS {
        let blocks = dims.iter().map(|&d| gaussian_matrix(rng, d, dim)).collect();
        let fam = BlockFamily::new(space.clone(), dim, blocks)?;
        let spec = eigh(&frame_operator(&fam, None)?);
        if spec.min() <= 1e-6 * spec.max() {
            continue;
        }
        if spec.min() < MIN_LOWER_BOUND {
            // Aim slightly above the floor so rounding cannot undercut it.
            return Ok(fam.scaled((1.01 * MIN_LOWER_BOUND / spec.min()).sqrt()));
        }
        return Ok(fam);
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS })
}

/// `L = A B*` with `n × r` Gaussian factors, normalized to `‖L‖ = 1`.
pub(crate) fn random_target(rng: &mut ChaCha8Rng, dim: usize, rank: Option<usize>) -> Result<TargetOperator> {
    let Some(r) = rank else {
        return Ok(TargetOperator::identity(dim));
    };
    for _ in 0..MAX_ATTEMPTS {
        let l = gaussian_matrix(rng, dim, r) * gaussian_matrix(rng, dim, r).adjoint();
        let s = linalg::singular_values(&l);
        let top = s[s.len() - 1];
        if top > 0.0 && s[s.len() - r] > 1e-6 * top {
            return TargetOperator::new(l / c64(top, 0.0));
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS })
}

/// Per-index left factor `I + C_ς` with `‖C_ς‖ ≤ delta`, applied as
/// `χ_ς ↦ (I + C_ς) χ_ς R` where `R` is `right` or the identity.
pub(crate) fn left_perturbation(
    rng: &mut ChaCha8Rng,
    fam: &BlockFamily,
    delta: f64,
    right: Option<&Matrix>,
) -> Result<BlockFamily> {
    if delta == 0.0 {
        return Ok(fam.clone());
    }
    let factors: Vec<Matrix> = fam
        .block_dims()
        .into_iter()
        .map(|d| {
            let c = gaussian_matrix(rng, d, d);
            let size: f64 = rng.random_range(0.0..1.0) * delta;
            let norm = linalg::op_norm(&c);
            if norm > 0.0 {
                c * c64(size / norm, 0.0)
            } else {
                c
            }
        })
        .collect();
    fam.map_blocks(|i, b| match right {
        Some(r) => b + &factors[i] * b * r,
        None => b + &factors[i] * b,
    })
}

/// Approximate dual `φ_ς = χ_ς S⁻¹ M*` with `M = L − t·W·L`, `W` normalized so
/// that the approximate-dual constant is exactly `t`.
fn approximate_dual(rng: &mut ChaCha8Rng, chi: &BlockFamily, target: &TargetOperator, t: f64) -> Result<BlockFamily> {
    let n = chi.dim();
    let l = target.matrix();
    let svd = linalg::thin_svd(l);
    let top = svd.values.first().copied().unwrap_or(0.0);
    let range: Vec<_> = (0..svd.values.len())
        .filter(|&k| svd.values[k] > 1e-10 * top)
        .map(|k| svd.left.column(k).into_owned())
        .collect();
    let basis = Matrix::from_columns(&range);
    let w = gaussian_matrix(rng, n, n);
    let w = &w * c64(1.0 / linalg::sigma_max(&(&w * &basis)), 0.0);
    let mixed = l - &w * l * c64(t, 0.0);
    let s_inv = pseudo_inverse(&frame_operator(chi, None)?, 1e-12);
    let right = s_inv * mixed.adjoint();
    chi.map_blocks(|_, b| b * &right)
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    let dims = spec.validate()?;
    let p = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let space = MeasureSpace::new(weights(&mut rng, spec.indices, p.weights))?;
    let chi = random_frame(&mut rng, &space, spec.dim, &dims)?;
    let mut inst = Instance::single(chi);
    match spec.kind {
        InstanceKind::Gframe => {}
        InstanceKind::LgFrame => {
            let rank = p.target_rank.or(Some(spec.dim.saturating_sub(1).max(1)));
            inst.target = Some(random_target(&mut rng, spec.dim, rank)?);
        }
        InstanceKind::WovenPair | InstanceKind::AtomicSystem => {
            inst.target = Some(random_target(&mut rng, spec.dim, p.target_rank)?);
            inst.xi = Some(left_perturbation(&mut rng, &inst.chi, p.delta, None)?);
        }
        InstanceKind::ApproxDualPair => {
            let target = random_target(&mut rng, spec.dim, p.target_rank)?;
            inst.phi = Some(approximate_dual(&mut rng, &inst.chi, &target, p.dual_defect)?);
            // Perturb only along ker(L)ᗮ so the spread vanishes on ker L.
            let row_space = pseudo_inverse(target.matrix(), 1e-10) * target.matrix();
            inst.xi = Some(left_perturbation(&mut rng, &inst.chi, p.delta, Some(&row_space))?);
            inst.target = Some(target);
        }
        InstanceKind::PerturbedPair => {
            inst.target = Some(random_target(&mut rng, spec.dim, p.target_rank)?);
            let xi = left_perturbation(&mut rng, &inst.chi, p.delta, None)?;
            let mut jitter = |fam: &BlockFamily| {
                let eta: Vec<f64> = (0..fam.len()).map(|_| rng.random_range(-1.0..=1.0) * p.alpha1).collect();
                fam.map_blocks(|i, b| b * c64(1.0 + eta[i], 0.0))
            };
            inst.chi_p = Some(jitter(&inst.chi)?);
            inst.xi_p = Some(jitter(&xi)?);
            inst.xi = Some(xi);
        }
    }
    Ok(inst)
}
