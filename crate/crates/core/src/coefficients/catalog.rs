use super::card::{Assumption, AssumptionCard};
use super::{DriverSpec, ForwardSpec, Monotonicity, NoiseLoadingSpec, TerminalFamily};
use crate::scalar::Scalar;

/// A complete problem instance with its declared constants.
#[derive(Debug, Clone)]
pub struct Preset<T> {
    pub name: &'static str,
    pub driver: DriverSpec<T>,
    pub loading: NoiseLoadingSpec<T>,
    pub terminal: TerminalFamily<T>,
    pub forward: Option<ForwardSpec<T>>,
    pub card: AssumptionCard<T>,
}

#[derive(Debug, Clone)]
pub struct Catalog<T> {
    presets: Vec<Preset<T>>,
}

impl<T: Scalar> Catalog<T> {
    pub fn get(&self, name: &str) -> Option<&Preset<T>> {
        self.presets.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.presets.iter().map(|p| p.name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Preset<T>> {
        self.presets.iter()
    }
}

pub fn lookup_preset<T: Scalar>(name: &str) -> Option<Preset<T>> {
    builtin_catalog().get(name).cloned()
}

fn trivial_card<T: Scalar>() -> AssumptionCard<T> {
    AssumptionCard {
        driver_lipschitz: T::one(),
        noise_lipschitz: T::one(),
        driver_origin_bound: Some(T::zero()),
        moment_exponent: Some(T::of(-0.25)),
        ..AssumptionCard::default()
    }
    .with_claims(&[
        Assumption::LipschitzDriver,
        Assumption::LipschitzNoise,
        Assumption::BoundedDriverOrigin,
        Assumption::LinearNoise,
        Assumption::Coercivity,
    ])
}

fn terminal_claims<T: Scalar>(card: AssumptionCard<T>) -> AssumptionCard<T> {
    card.with_claims(&[
        Assumption::MonotoneTerminal,
        Assumption::HolderTerminal,
        Assumption::TerminalGrowth,
    ])
}

fn arctan_card<T: Scalar>() -> AssumptionCard<T> {
    AssumptionCard {
        driver_lipschitz: T::of(3.0),
        noise_lipschitz: T::one(),
        noise_z_weight: T::of(0.5),
        driver_origin_bound: Some(T::zero()),
        // y·f(y, z) ≥ 0 everywhere, so any positive constant is admissible.
        coercivity: T::of(0.1),
        coercivity_radius: T::one(),
        growth_radius: T::one(),
        growth_floor: T::of(0.5),
        moment_exponent: Some(T::of(-0.25)),
        forward_growth: T::of(0.25),
        ..AssumptionCard::default()
    }
    .with_claims(&[
        Assumption::LipschitzDriver,
        Assumption::LipschitzNoise,
        Assumption::BoundedDriverOrigin,
        Assumption::LinearNoise,
        Assumption::MonotoneTerminal,
        Assumption::HolderTerminal,
        Assumption::TerminalGrowth,
        Assumption::Coercivity,
        Assumption::NegativeMoment,
    ])
}

/// Built-in problem presets, addressable by name from experiment configs.
pub fn builtin_catalog<T: Scalar>() -> Catalog<T> {
    let gbm = || ForwardSpec::geometric(T::of(0.05), T::of(0.2));
    let presets = vec![
        Preset {
            name: "zero",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::identity(),
            forward: None,
            card: terminal_claims(trivial_card()),
        },
        Preset {
            name: "identity_terminal",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::identity(),
            forward: None,
            card: terminal_claims(trivial_card()),
        },
        Preset {
            name: "cubic_terminal",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::cubic(),
            forward: None,
            card: terminal_claims(AssumptionCard {
                holder_constant: T::of(9.0),
                ..trivial_card()
            }),
        },
        Preset {
            name: "shift_terminal",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::shift(T::one()),
            forward: None,
            // (x + 1)/x ≥ ½ needs |x| ≥ 2
            card: terminal_claims(AssumptionCard {
                growth_radius: T::of(2.0),
                ..trivial_card()
            }),
        },
        Preset {
            name: "constant_terminal",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::constant(T::one()),
            forward: None,
            card: trivial_card(),
        },
        Preset {
            name: "brownian_shift_terminal",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::brownian_shift(),
            forward: None,
            card: trivial_card().with_claims(&[Assumption::MonotoneTerminal]),
        },
        Preset {
            name: "paper_arctan",
            driver: DriverSpec::arctan(),
            loading: NoiseLoadingSpec::constant(T::of(0.2)),
            terminal: TerminalFamily::identity(),
            forward: None,
            card: arctan_card(),
        },
        Preset {
            name: "paper_arctan_field",
            driver: DriverSpec::arctan(),
            loading: NoiseLoadingSpec::constant(T::of(0.2)),
            terminal: TerminalFamily::forward(Monotonicity::Increasing).with_growth(|x| x),
            forward: Some(gbm()),
            card: arctan_card().with_claims(&[Assumption::ForwardGrowth]),
        },
        Preset {
            name: "linear",
            driver: DriverSpec::linear(T::of(-0.5), T::zero()),
            loading: NoiseLoadingSpec::constant(T::of(0.3)),
            terminal: TerminalFamily::constant(T::one()),
            forward: None,
            card: {
                let mut card = AssumptionCard {
                    driver_lipschitz: T::of(0.5),
                    ..trivial_card()
                };
                card.claims.remove(&Assumption::Coercivity);
                card
            },
        },
        Preset {
            name: "heat",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::forward(Monotonicity::Unspecified),
            forward: Some(ForwardSpec::additive(T::zero(), T::of(2.0).sqrt()).with_terminal(
                "square",
                |x| x * x,
                Monotonicity::Unspecified,
            )),
            card: trivial_card(),
        },
        Preset {
            name: "gbm",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::zero(),
            terminal: TerminalFamily::forward(Monotonicity::Increasing),
            forward: Some(gbm()),
            card: AssumptionCard {
                forward_growth: T::of(0.25),
                ..trivial_card()
            }
            .with_claims(&[Assumption::ForwardGrowth]),
        },
        Preset {
            name: "loaded_brownian",
            driver: DriverSpec::zero(),
            loading: NoiseLoadingSpec::constant(T::of(0.3)),
            terminal: TerminalFamily::forward(Monotonicity::Increasing),
            forward: Some(ForwardSpec::additive(T::zero(), T::one())),
            card: trivial_card(),
        },
    ];
    for p in presets.iter() {
        debug_assert!(p.card.validate().is_ok(), "preset {} card invalid", p.name);
    }
    Catalog { presets }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        let arctan = lookup_preset::<f64>("paper_arctan").unwrap();
        assert_eq!(arctan.driver.eval(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(arctan.card.driver_lipschitz, 3.0);

        let zero = lookup_preset::<f64>("zero").unwrap();
        for &(y, z) in &[(1.0, 2.0), (-3.0, 0.5)] {
            assert_eq!(zero.driver.eval(0.1, 0.0, y, z), 0.0);
        }
        assert!(zero.loading.is_zero());

        let ident = lookup_preset::<f64>("identity_terminal").unwrap();
        assert_eq!(ident.terminal.monotone, Monotonicity::Increasing);
        assert_eq!(ident.terminal.eval(1.25, 0.0, 0.0, None), 1.25);

        assert!(lookup_preset::<f64>("nope").is_none());
    }

    #[test]
    fn all_cards_valid() {
        for p in builtin_catalog::<f64>().iter() {
            p.card.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }
}
