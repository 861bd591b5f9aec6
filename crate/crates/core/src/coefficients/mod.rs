//! Problem data: driver, backward-noise loading, forward coefficients and
//! terminal families, each paired with declared assumption constants.

mod audit;
mod card;
mod catalog;

use std::fmt;
use std::sync::Arc;

use crate::scalar::Scalar;

pub use audit::{audit_assumptions, AuditEntry, AuditReport};
pub use card::{Assumption, AssumptionCard};
pub use catalog::{builtin_catalog, lookup_preset, Catalog, Preset};

type DriverFn<T> = Arc<dyn Fn(T, T, T, T) -> T + Send + Sync>;
type LoadingFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type CompositeFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Driver `f(t, x, y, z)`. In problems without a forward leg `x` is passed as 0.
#[derive(Clone)]
pub struct DriverSpec<T> {
    pub name: String,
    eval: DriverFn<T>,
    /// `(λ, μ)` when `f = λ y + μ z`.
    linear: Option<(T, T)>,
}

impl<T: Scalar> DriverSpec<T> {
    pub fn new(name: impl Into<String>, f: impl Fn(T, T, T, T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            linear: None,
        }
    }

    pub fn zero() -> Self {
        Self::linear(T::zero(), T::zero()).named("zero")
    }

    /// `f = λ y + μ z`.
    pub fn linear(lambda: T, mu: T) -> Self {
        Self {
            name: "linear".into(),
            eval: Arc::new(move |_, _, y, z| lambda * y + mu * z),
            linear: Some((lambda, mu)),
        }
    }

    /// `f(y, z) = y + arctan(y)·(1 + sin z)`.
    pub fn arctan() -> Self {
        Self::new("paper_arctan", |_, _, y: T, z: T| y + y.atan() * (T::one() + z.sin()))
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, t: T, x: T, y: T, z: T) -> T {
        (self.eval)(t, x, y, z)
    }

    pub fn linear_coefficients(&self) -> Option<(T, T)> {
        self.linear
    }

    /// `±(|f(t,x,0,0)| + C (|y| + |z|))`, the dominating drivers of the
    /// sandwich argument.
    pub fn dominating(&self, lipschitz: T, upper: bool) -> Self {
        let base = self.eval.clone();
        let sign = if upper { T::one() } else { -T::one() };
        Self::new(
            format!("{}_{}", self.name, if upper { "upper" } else { "lower" }),
            move |t, x, y: T, z: T| sign * (base(t, x, T::zero(), T::zero()).abs() + lipschitz * (y.abs() + z.abs())),
        )
    }
}

impl<T> fmt::Debug for DriverSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec").field("name", &self.name).finish()
    }
}

/// Backward-noise coefficient `g(t, x, y) = a(t, x)·y`.
#[derive(Clone)]
pub struct NoiseLoadingSpec<T> {
    pub name: String,
    eval: LoadingFn<T>,
    constant: Option<T>,
    spatially_constant: bool,
}

impl<T: Scalar> NoiseLoadingSpec<T> {
    pub fn constant(a: T) -> Self {
        Self {
            name: format!("constant({a})"),
            eval: Arc::new(move |_, _| a),
            constant: Some(a),
            spatially_constant: true,
        }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero()).named("zero")
    }

    /// Loading depending on time only.
    pub fn time_dependent(name: impl Into<String>, a: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(move |t, _| a(t)),
            constant: None,
            spatially_constant: true,
        }
    }

    /// Loading depending on time and the forward state.
    pub fn spatial(name: impl Into<String>, a: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(a),
            constant: None,
            spatially_constant: false,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, t: T, x: T) -> T {
        (self.eval)(t, x)
    }

    pub fn constant_value(&self) -> Option<T> {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(T::zero())
    }

    pub fn is_spatially_constant(&self) -> bool {
        self.spatially_constant
    }
}

impl<T> fmt::Debug for NoiseLoadingSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseLoadingSpec")
            .field("name", &self.name)
            .field("spatially_constant", &self.spatially_constant)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Unspecified,
}

/// How the terminal value depends on the parameter and the forward driver.
///
/// There is deliberately no variant reading `B`: the terminal sigma-field
/// carries no information about the backward driver.
#[derive(Clone)]
pub enum TerminalForm<T> {
    /// `ξ(x) = ψ(x)`.
    Deterministic(ScalarFn<T>),
    /// `ξ(x) = ψ(x, W_T)`.
    Composite(CompositeFn<T>),
    /// `ξ(x) = h(X_T^{t,x}) + c` with `h` taken from the forward spec.
    Forward(T),
}

#[derive(Clone)]
pub struct TerminalFamily<T> {
    pub name: String,
    pub form: TerminalForm<T>,
    pub monotone: Monotonicity,
    /// Growth function `h` of the terminal-growth hypothesis.
    pub growth: Option<ScalarFn<T>>,
}

impl<T: Scalar> TerminalFamily<T> {
    pub fn deterministic(
        name: impl Into<String>,
        monotone: Monotonicity,
        psi: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            form: TerminalForm::Deterministic(Arc::new(psi)),
            monotone,
            growth: None,
        }
    }

    pub fn composite(
        name: impl Into<String>,
        monotone: Monotonicity,
        psi: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            form: TerminalForm::Composite(Arc::new(psi)),
            monotone,
            growth: None,
        }
    }

    pub fn forward(monotone: Monotonicity) -> Self {
        Self {
            name: "forward_h".into(),
            form: TerminalForm::Forward(T::zero()),
            monotone,
            growth: None,
        }
    }

    pub fn identity() -> Self {
        Self::deterministic("identity_terminal", Monotonicity::Increasing, |x| x).with_growth(|x| x)
    }

    pub fn cubic() -> Self {
        Self::deterministic("cubic_terminal", Monotonicity::Increasing, |x: T| x * x * x).with_growth(|x| x)
    }

    pub fn shift(c: T) -> Self {
        Self::deterministic("shift_terminal", Monotonicity::Increasing, move |x| x + c).with_growth(|x| x)
    }

    pub fn constant(c: T) -> Self {
        Self::deterministic("constant_terminal", Monotonicity::Unspecified, move |_| c)
    }

    /// `ξ(x) = x + W_T`.
    pub fn brownian_shift() -> Self {
        Self::composite("brownian_shift_terminal", Monotonicity::Increasing, |x, w| x + w)
    }

    pub fn with_growth(mut self, h: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.growth = Some(Arc::new(h));
        self
    }

    /// `ξ + c`, same monotonicity.
    pub fn shifted(&self, c: T) -> Self {
        let form = match &self.form {
            TerminalForm::Deterministic(f) => {
                let f = f.clone();
                TerminalForm::Deterministic(Arc::new(move |x| f(x) + c))
            }
            TerminalForm::Composite(f) => {
                let f = f.clone();
                TerminalForm::Composite(Arc::new(move |x, w| f(x, w) + c))
            }
            TerminalForm::Forward(d) => TerminalForm::Forward(*d + c),
        };
        Self {
            name: format!("{}+{}", self.name, c),
            form,
            monotone: self.monotone,
            growth: self.growth.clone(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.form, TerminalForm::Deterministic(_))
    }

    /// Terminal value for parameter `x` given `W_T` and `X_T` of one path.
    #[inline]
    pub fn eval(&self, x: T, w_terminal: T, x_terminal: T, fwd: Option<&ForwardSpec<T>>) -> T {
        match &self.form {
            TerminalForm::Deterministic(f) => f(x),
            TerminalForm::Composite(f) => f(x, w_terminal),
            TerminalForm::Forward(c) => match fwd {
                Some(fw) => fw.h(x_terminal) + *c,
                None => T::nan(),
            },
        }
    }
}

impl<T> fmt::Debug for TerminalFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalFamily")
            .field("name", &self.name)
            .field("monotone", &self.monotone)
            .finish()
    }
}

/// Forward coefficients `b`, `σ` and the terminal function `h`.
#[derive(Clone)]
pub struct ForwardSpec<T> {
    pub name: String,
    drift: ScalarFn<T>,
    diffusion: ScalarFn<T>,
    terminal: ScalarFn<T>,
    pub h_monotone: Monotonicity,
    /// Whether `|b| + |σ| ≤ c_1 |x|` is claimed (additive noise cannot claim it).
    pub claims_linear_growth: bool,
}

impl<T: Scalar> ForwardSpec<T> {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(T) -> T + Send + Sync + 'static,
        diffusion: impl Fn(T) -> T + Send + Sync + 'static,
        h: impl Fn(T) -> T + Send + Sync + 'static,
        h_monotone: Monotonicity,
        claims_linear_growth: bool,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            terminal: Arc::new(h),
            h_monotone,
            claims_linear_growth,
        }
    }

    /// `dX = μ X dt + s X dW`, `h(x) = x`.
    pub fn geometric(mu: T, sigma: T) -> Self {
        Self::new(
            "geometric",
            move |x| mu * x,
            move |x| sigma * x,
            |x| x,
            Monotonicity::Increasing,
            true,
        )
    }

    /// `dX = b dt + s dW` with constant coefficients, `h(x) = x`.
    pub fn additive(drift: T, sigma: T) -> Self {
        Self::new(
            "additive",
            move |_| drift,
            move |_| sigma,
            |x| x,
            Monotonicity::Increasing,
            false,
        )
    }

    /// `b = σ = 0`.
    pub fn frozen() -> Self {
        Self::new(
            "frozen",
            |_| T::zero(),
            |_| T::zero(),
            |x| x,
            Monotonicity::Increasing,
            true,
        )
    }

    /// Replaces `h`.
    pub fn with_terminal(
        mut self,
        name: &str,
        h: impl Fn(T) -> T + Send + Sync + 'static,
        monotone: Monotonicity,
    ) -> Self {
        self.terminal = Arc::new(h);
        self.h_monotone = monotone;
        self.name = format!("{}+{}", self.name, name);
        self
    }

    #[inline]
    pub fn b(&self, x: T) -> T {
        (self.drift)(x)
    }

    #[inline]
    pub fn sigma(&self, x: T) -> T {
        (self.diffusion)(x)
    }

    #[inline]
    pub fn h(&self, x: T) -> T {
        (self.terminal)(x)
    }
}

impl<T> fmt::Debug for ForwardSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardSpec").field("name", &self.name).finish()
    }
}
