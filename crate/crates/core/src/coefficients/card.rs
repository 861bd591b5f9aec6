use std::collections::BTreeSet;
use std::fmt;

use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Structural hypotheses an instance may claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assumption {
    /// Lipschitz driver.
    LipschitzDriver,
    /// Lipschitz backward-noise coefficient with `0 < α_g < 1`.
    LipschitzNoise,
    /// Bounded `∫|f(s,0,0)|ds`.
    BoundedDriverOrigin,
    /// Noise linear in `y`, bounded loading.
    LinearNoise,
    /// Terminal family monotone homeomorphism.
    MonotoneTerminal,
    /// Hölder moment bound on the terminal family.
    HolderTerminal,
    /// Terminal dominates a growth function `h` far out.
    TerminalGrowth,
    /// One-sided coercivity `y f ≥ -C_1 z²` near `y = 0`.
    Coercivity,
    /// Vanishing negative moments of the terminal family.
    NegativeMoment,
    /// Linear growth of the forward coefficients.
    ForwardGrowth,
    /// Polynomial lower bound on `|h|`.
    TerminalFloor,
}

impl Assumption {
    pub const ALL: [Assumption; 11] = [
        Assumption::LipschitzDriver,
        Assumption::LipschitzNoise,
        Assumption::BoundedDriverOrigin,
        Assumption::LinearNoise,
        Assumption::MonotoneTerminal,
        Assumption::HolderTerminal,
        Assumption::TerminalGrowth,
        Assumption::Coercivity,
        Assumption::NegativeMoment,
        Assumption::ForwardGrowth,
        Assumption::TerminalFloor,
    ];

    /// Short label used in configs and reports.
    pub fn label(self) -> &'static str {
        match self {
            Assumption::LipschitzDriver => "H1_f",
            Assumption::LipschitzNoise => "H1_g",
            Assumption::BoundedDriverOrigin => "H2_f",
            Assumption::LinearNoise => "H2_g",
            Assumption::MonotoneTerminal => "H1_xi",
            Assumption::HolderTerminal => "H2_xi",
            Assumption::TerminalGrowth => "H3_xi",
            Assumption::Coercivity => "H2p_f",
            Assumption::NegativeMoment => "H3p_xi",
            Assumption::ForwardGrowth => "C2_sb",
            Assumption::TerminalFloor => "C3_h",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Declared assumption constants. The audit falsifies them; nothing infers them.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCard<T> {
    /// `C_f`: Lipschitz constant of the driver in `(y, z)`.
    pub driver_lipschitz: T,
    /// `C_g`.
    pub noise_lipschitz: T,
    /// `α_g`, the `z`-weight of the noise Lipschitz bound.
    pub noise_z_weight: T,
    /// `C_0`: bound on `∫_0^T |f(s,0,0)| ds`.
    pub driver_origin_bound: Option<T>,
    /// `C_1`.
    pub coercivity: T,
    /// `ε_1`: radius in `y` where the coercivity bound is required.
    pub coercivity_radius: T,
    /// `δ_R`.
    pub holder_exponent: T,
    /// `C_R`.
    pub holder_constant: T,
    /// `R_0`.
    pub growth_radius: T,
    /// `ε`: lower bound of `ξ(x)/h(x)` for `|x| ≥ R_0`.
    pub growth_floor: T,
    /// `β` of the negative-moment hypothesis.
    pub moment_exponent: Option<T>,
    /// `c_1`: `|b(x)| + |σ(x)| ≤ c_1 |x|`.
    pub forward_growth: T,
    /// `c_2`: `|h(x)| ≥ c_2 |x|^γ`.
    pub floor_constant: T,
    /// `γ`.
    pub floor_exponent: T,
    pub claims: BTreeSet<Assumption>,
}

impl<T: Scalar> Default for AssumptionCard<T> {
    fn default() -> Self {
        Self {
            driver_lipschitz: T::one(),
            noise_lipschitz: T::one(),
            noise_z_weight: T::of(0.5),
            driver_origin_bound: None,
            coercivity: T::of(0.1),
            coercivity_radius: T::one(),
            holder_exponent: T::one(),
            holder_constant: T::one(),
            growth_radius: T::one(),
            growth_floor: T::of(0.5),
            moment_exponent: None,
            forward_growth: T::one(),
            floor_constant: T::one(),
            floor_exponent: T::one(),
            claims: BTreeSet::new(),
        }
    }
}

impl<T: Scalar> AssumptionCard<T> {
    pub fn claims(&self, a: Assumption) -> bool {
        self.claims.contains(&a)
    }

    pub fn with_claims(mut self, claims: &[Assumption]) -> Self {
        self.claims.extend(claims.iter().copied());
        self
    }

    /// Upper limit on `β`: `min((1 − 2 C_1)/2, 0)`.
    pub fn moment_exponent_limit(&self) -> T {
        let two = T::of(2.0);
        ((T::one() - two * self.coercivity) / two).min(T::zero())
    }

    /// `ε_0` default: half the growth floor.
    pub fn default_envelope_fraction(&self) -> T {
        self.growth_floor / T::of(2.0)
    }

    /// Checks the internal constraints between declared constants.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.driver_lipschitz > T::zero()) {
            errs.push("C_f must be > 0".to_string());
        }
        if !(self.noise_lipschitz > T::zero()) {
            errs.push("C_g must be > 0".to_string());
        }
        if !(self.noise_z_weight > T::zero() && self.noise_z_weight < T::one()) {
            errs.push("alpha_g must lie in (0, 1)".to_string());
        }
        if !(self.coercivity_radius > T::zero()) {
            errs.push("epsilon_1 must be > 0".to_string());
        }
        if let Some(c0) = self.driver_origin_bound {
            if c0 < T::zero() {
                errs.push("C_0 must be ≥ 0".to_string());
            }
        }
        if self.claims(Assumption::NegativeMoment) {
            match self.moment_exponent {
                None => errs.push("beta is required when H3p_xi is claimed".to_string()),
                Some(b) if !(b < self.moment_exponent_limit()) => errs.push(format!(
                    "beta must be < min((1 - 2 C_1)/2, 0) = {}",
                    self.moment_exponent_limit()
                )),
                _ => {}
            }
        }
        if self.claims(Assumption::BoundedDriverOrigin) && self.driver_origin_bound.is_none() {
            errs.push("C_0 is required when H2_f is claimed".to_string());
        }
        if !(self.growth_floor > T::zero()) {
            errs.push("epsilon must be > 0".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(errs.join("; ")))
        }
    }
}
