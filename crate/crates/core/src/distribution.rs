//! Categorical return distributions on a fixed, evenly spaced support.

use crate::error::{Error, Result};

/// Mass tolerance for the simplex invariant.
pub const MASS_TOL: f64 = 1e-9;

/// Drift beyond this after projection triggers a logged renormalization.
const DRIFT_TOL: f64 = 1e-12;

/// Fractional positions closer than this to an atom snap onto it.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    v_min: f64,
    v_max: f64,
    atoms: Vec<f64>,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, n_atoms: usize) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(Error::Config(format!(
                "support needs finite v_min < v_max, got [{v_min}, {v_max}]"
            )));
        }
        if n_atoms < 2 {
            return Err(Error::Config(format!(
                "support needs at least 2 atoms, got {n_atoms}"
            )));
        }
        let dz = (v_max - v_min) / (n_atoms - 1) as f64;
        let atoms = (0..n_atoms)
            .map(|i| {
                if i == n_atoms - 1 {
                    v_max
                } else {
                    v_min + i as f64 * dz
                }
            })
            .collect();
        Ok(Self {
            v_min,
            v_max,
            atoms,
        })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms.len() - 1) as f64
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn uniform(n_atoms: usize) -> Self {
        Self {
            probs: vec![1.0 / n_atoms as f64; n_atoms],
        }
    }

    pub fn one_hot(n_atoms: usize, atom: usize) -> Self {
        let mut probs = vec![0.0; n_atoms];
        probs[atom] = 1.0;
        Self { probs }
    }

    /// Validates non-negativity and unit mass.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("empty probability vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Config(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self, sup: &Support) -> f64 {
        self.probs.iter().zip(sup.atoms()).map(|(p, z)| p * z).sum()
    }

    pub fn std(&self, sup: &Support) -> f64 {
        let mean = self.mean(sup);
        let second: f64 = self
            .probs
            .iter()
            .zip(sup.atoms())
            .map(|(p, z)| p * z * z)
            .sum();
        (second - mean * mean).max(0.0).sqrt()
    }

    /// Moves `self` a fraction `eta` of the way toward `target`.
    pub fn mix_toward(&mut self, target: &CategoricalDist, eta: f64) {
        debug_assert_eq!(self.len(), target.len());
        for (p, q) in self.probs.iter_mut().zip(&target.probs) {
            *p = (1.0 - eta) * *p + eta * q;
        }
    }
}

/// Shifted atoms and their masses, before projection onto the support.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanTarget {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Applies `r + gamma * Z` to a successor distribution. A terminal successor
/// contributes no future return, so all mass sits at `r`.
pub fn bellman_target(
    dist: &CategoricalDist,
    reward: f64,
    gamma: f64,
    terminal: bool,
    sup: &Support,
) -> BellmanTarget {
    let atoms = if terminal {
        vec![reward; sup.n_atoms()]
    } else {
        sup.atoms().iter().map(|z| reward + gamma * z).collect()
    };
    BellmanTarget {
        atoms,
        probs: dist.probs().to_vec(),
    }
}

/// Categorical projection of arbitrary weighted atoms onto `sup`: each atom is
/// clipped into `[v_min, v_max]` and its mass split linearly between the two
/// neighbouring support atoms.
pub fn project(target_atoms: &[f64], target_probs: &[f64], sup: &Support) -> CategoricalDist {
    debug_assert_eq!(target_atoms.len(), target_probs.len());
    let n = sup.n_atoms();
    let dz = sup.delta_z();
    let mut out = vec![0.0; n];
    for (&t, &p) in target_atoms.iter().zip(target_probs) {
        if p == 0.0 {
            continue;
        }
        let tz = t.clamp(sup.v_min(), sup.v_max());
        let b = (tz - sup.v_min()) / dz;
        let nearest = b.round();
        if (b - nearest).abs() < SNAP_TOL {
            out[(nearest as usize).min(n - 1)] += p;
            continue;
        }
        let lower = b.floor() as usize;
        let upper = (lower + 1).min(n - 1);
        let frac = b - lower as f64;
        out[lower] += p * (1.0 - frac);
        out[upper] += p * frac;
    }
    let total: f64 = out.iter().sum();
    if (total - 1.0).abs() > DRIFT_TOL && total > 0.0 {
        log::warn!("projection mass drift {:.3e}, renormalizing", total - 1.0);
        out.iter_mut().for_each(|p| *p /= total);
    }
    CategoricalDist { probs: out }
}
