//! Modulus fields selectable from the configuration.

use elastonet_core::mechanics::ConstantModulus;
use elastonet_core::pinn::square_grid;
use elastonet_core::{ModulusField, ReferenceModulus, Point2};

use crate::config::ModulusSpec;
use crate::CliError;

/// A user expression in `X1` and `X2`, differentiated by central differences.
pub struct ExpressionModulus {
    f: Box<dyn Fn(f64, f64) -> f64>,
}

const FD_STEP: f64 = 1e-6;

impl ExpressionModulus {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |e: meval::Error| CliError::Config(format!("modulus expression {text:?}: {e}"));
        let expr: meval::Expr = text.parse().map_err(bad)?;
        let f = expr.bind2("X1", "X2").map_err(bad)?;
        Ok(ExpressionModulus { f: Box::new(f) })
    }
}

impl ModulusField for ExpressionModulus {
    fn value(&self, x: Point2) -> f64 {
        (self.f)(x.x1, x.x2)
    }

    fn gradient(&self, x: Point2) -> [f64; 2] {
        let h = FD_STEP;
        [
            ((self.f)(x.x1 + h, x.x2) - (self.f)(x.x1 - h, x.x2)) / (2.0 * h),
            ((self.f)(x.x1, x.x2 + h) - (self.f)(x.x1, x.x2 - h)) / (2.0 * h),
        ]
    }
}

/// Builds the field and checks it is finite and positive on a probe grid.
pub fn build(spec: &ModulusSpec) -> Result<Box<dyn ModulusField>, CliError> {
    let field: Box<dyn ModulusField> = match spec {
        ModulusSpec::Reference => Box::new(ReferenceModulus),
        ModulusSpec::Constant(c) => Box::new(ConstantModulus(*c)),
        ModulusSpec::Expression(e) => Box::new(ExpressionModulus::parse(e)?),
    };
    for x in square_grid(11) {
        let v = field.value(x);
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!(
                "modulus is {v} at ({}, {}); it must be positive and finite",
                x.x1, x.x2
            )));
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_field_at_the_inclusion_centre() {
        let f = build(&ModulusSpec::Reference).unwrap();
        // 0.333 - 0.05 (1.1^2 + 0.7^2) + 0.133
        assert!((f.value(Point2::new(0.1, 0.2)) - 0.381).abs() < 1e-12);
    }

    #[test]
    fn expression_value_and_gradient() {
        let f = build(&ModulusSpec::Expression("0.3 + 0.1*X1^2 + 0.05*sin(X2)".into())).unwrap();
        let x = Point2::new(0.4, 0.7);
        assert!((f.value(x) - (0.3 + 0.016 + 0.05 * 0.7f64.sin())).abs() < 1e-15);
        let g = f.gradient(x);
        assert!((g[0] - 0.08).abs() < 1e-8);
        assert!((g[1] - 0.05 * 0.7f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn expression_reproduces_the_reference_field() {
        let text = "0.333 - 0.05*((X1+1)^2 + (X2+0.5)^2) + 0.133*exp(-22.22*((X1-0.1)^2 + (X2-0.2)^2))";
        let e = build(&ModulusSpec::Expression(text.into())).unwrap();
        for x in square_grid(7) {
            assert!((e.value(x) - ReferenceModulus.value(x)).abs() < 1e-14);
            let (a, b) = (e.gradient(x), ReferenceModulus.gradient(x));
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(build(&ModulusSpec::Constant(0.0)).is_err());
        assert!(build(&ModulusSpec::Constant(f64::NAN)).is_err());
        assert!(build(&ModulusSpec::Expression("X1 - 0.5".into())).is_err());
        assert!(build(&ModulusSpec::Expression("Y + 1".into())).is_err());
        assert!(build(&ModulusSpec::Expression("(1".into())).is_err());
    }
}
