//! Case-study registry.

pub mod loan;
pub mod policing;

use crate::config::{ConfigSpace, Configuration, ParamValue};
use crate::rng::RngStream;
use crate::sim::{Scenario, SimError, Trace};

pub use loan::{LoanCase, LoanScale};
pub use policing::{PolicingCase, PolicingScale};

pub const CASE_IDS: [&str; 2] = [loan::CASE_ID, policing::CASE_ID];

/// A registered case study bound to a configuration space.
#[derive(Debug, Clone)]
pub enum CaseStudy {
    Loan(LoanCase),
    Policing(PolicingCase),
}

impl CaseStudy {
    pub fn id(&self) -> &'static str {
        match self {
            CaseStudy::Loan(_) => loan::CASE_ID,
            CaseStudy::Policing(_) => policing::CASE_ID,
        }
    }

    pub fn space(&self) -> &ConfigSpace {
        match self {
            CaseStudy::Loan(c) => &c.space,
            CaseStudy::Policing(c) => &c.space,
        }
    }
}

/// The full space registered for `id`.
pub fn default_space(id: &str) -> Option<ConfigSpace> {
    match id {
        loan::CASE_ID => Some(loan::default_space()),
        policing::CASE_ID => Some(policing::default_space()),
        _ => None,
    }
}

pub fn parameter_names(id: &str) -> Option<&'static [&'static str]> {
    match id {
        loan::CASE_ID => Some(&loan::PARAMETER_NAMES),
        policing::CASE_ID => Some(&policing::PARAMETER_NAMES),
        _ => None,
    }
}

/// Checks a single parameter value against the case's domain.
pub fn validate_value(id: &str, name: &str, value: &ParamValue) -> Result<(), String> {
    match id {
        loan::CASE_ID => loan::validate_value(name, value),
        policing::CASE_ID => policing::validate_value(name, value),
        _ => Err(format!("unknown case study `{id}`")),
    }
}

impl Scenario for CaseStudy {
    fn simulate(&self, config: &Configuration, k: usize, rng: RngStream) -> Result<Trace, SimError> {
        match self {
            CaseStudy::Loan(c) => c.simulate(config, k, rng),
            CaseStudy::Policing(c) => c.simulate(config, k, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        assert_eq!(default_space("loan").unwrap().size(), 768);
        assert_eq!(default_space("policing").unwrap().size(), 105);
        assert!(default_space("lending").is_none());
        assert_eq!(parameter_names("policing").unwrap().len(), 3);
        assert!(validate_value("loan", "bank_utility", &ParamValue::Numeric(2.0)).is_err());
        assert!(validate_value("loan", "agent", &ParamValue::Categorical("eq-op".into())).is_ok());
        assert!(validate_value("policing", "effect_range", &ParamValue::Numeric(1.5)).is_err());
    }
}
