//! Record-linkage adversary: simulates users interacting with services
//! under an identifier regime, then pools every service's database and
//! joins records on exact identifier match.
//!
//! The adversary model is deliberately minimal (an exact-match join over
//! observed identifier strings, no fuzzy or learned linkage) because that
//! is the join every data broker gets for free when identifiers are reused.
//! The point of the simulation is the structural difference between
//! regimes, not adversary sophistication.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest as _, Sha256};

use unlinkid_core::participant::{SelectionMode, SelectionPolicy};
use unlinkid_core::portfolio::{
    derive_portfolio, encode_identifier, DisplayFormat, PortfolioSecret,
};

/// How users identify themselves to services.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// One lifelong identifier reused everywhere (the status quo being
    /// replaced). Rendered as a nine-digit numeric string.
    Uli,
    /// A stable identifier per service, distinct across services.
    PerRp,
    /// A fresh identifier per interaction.
    PerInteraction,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Uli => "uli",
            Regime::PerRp => "per_rp",
            Regime::PerInteraction => "per_interaction",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uli" => Ok(Regime::Uli),
            "per-rp" | "per_rp" => Ok(Regime::PerRp),
            "per-interaction" | "per_interaction" => Ok(Regime::PerInteraction),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

/// Join metrics from one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageReport {
    pub regime: Regime,
    pub services: u32,
    pub users: u32,
    /// Total interactions simulated (every user visits every service
    /// `interactions_per_user` times).
    pub interactions: u64,
    /// Distinct (user, service pair) links the adversary recovered via some
    /// identifier observed at both services.
    pub adversary_joins: u64,
    /// Ground truth: users x C(services, 2).
    pub ground_truth_pairs: u64,
    pub join_rate: f64,
    /// Fraction of (user, service) cells with two or more visits in which
    /// the adversary can group the user's records by a repeated identifier.
    pub within_service_rate: f64,
}

impl fmt::Display for LinkageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "adversary joined {} of {} cross-service pairs under the {} regime",
            self.adversary_joins,
            self.ground_truth_pairs,
            self.regime.name()
        )?;
        writeln!(f, "regime={}", self.regime.name())?;
        writeln!(f, "services={}", self.services)?;
        writeln!(f, "users={}", self.users)?;
        writeln!(f, "interactions={}", self.interactions)?;
        writeln!(f, "adversary_joins={}", self.adversary_joins)?;
        writeln!(f, "ground_truth_pairs={}", self.ground_truth_pairs)?;
        writeln!(f, "join_rate={:.6}", self.join_rate)?;
        write!(f, "within_service_rate={:.6}", self.within_service_rate)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdversaryError {
    #[error("all parameters must be at least 1")]
    BadParameters,
    #[error("portfolio: {0}")]
    Portfolio(#[from] unlinkid_core::portfolio::PortfolioError),
    #[error("encoding: {0}")]
    Encode(#[from] unlinkid_core::portfolio::EncodeError),
}

/// Run the simulation and the pooled exact-match join.
pub fn run_linkage_adversary(
    regime: Regime,
    services: u32,
    users: u32,
    interactions_per_user: u32,
    seed: u64,
) -> Result<LinkageReport, AdversaryError> {
    if services == 0 || users == 0 || interactions_per_user == 0 {
        return Err(AdversaryError::BadParameters);
    }

    // service databases: service -> list of (ground-truth user, display).
    // The user column is bookkeeping for scoring; the adversary's join key
    // is the display string alone.
    let mut databases: Vec<Vec<(u32, String)>> = vec![Vec::new(); services as usize];

    for user in 0..users {
        let mut hasher = Sha256::new();
        hasher.update(b"adversary-user");
        hasher.update(seed.to_le_bytes());
        hasher.update(user.to_le_bytes());
        let secret =
            PortfolioSecret::new(hasher.finalize().into(), b"unlinkid/adversary/v1".to_vec());
        let portfolio_size = match regime {
            Regime::Uli => 1,
            Regime::PerRp => services as usize,
            Regime::PerInteraction => (services * interactions_per_user) as usize,
        };
        let ids = derive_portfolio(&secret, portfolio_size)?;
        let mut policy = SelectionPolicy::new(match regime {
            Regime::Uli => SelectionMode::StaticScoped,
            Regime::PerRp => SelectionMode::PerRelyingParty,
            Regime::PerInteraction => SelectionMode::PerInteraction,
        });
        for service in 0..services {
            let label = format!("service-{service}");
            for _ in 0..interactions_per_user {
                let index = policy
                    .select(ids.len() as u32, Some(label.as_bytes()))
                    .expect("portfolio sized for the regime");
                let value = &ids[index as usize].value;
                let display = match regime {
                    Regime::Uli => encode_identifier(value, DisplayFormat::LegacyNumeric(9))?,
                    _ => encode_identifier(value, DisplayFormat::Uuid)?,
                };
                databases[service as usize].push((user, display));
            }
        }
    }

    // Pool: display -> set of (service, user) observations.
    let mut pooled: BTreeMap<&str, BTreeSet<(u32, u32)>> = BTreeMap::new();
    for (service, records) in databases.iter().enumerate() {
        for (user, display) in records {
            pooled
                .entry(display.as_str())
                .or_default()
                .insert((service as u32, *user));
        }
    }

    // Cross-service join: a (user, service a < service b) triple counts as
    // recovered when one display links the same user's records at both.
    let mut recovered: BTreeSet<(u32, u32, u32)> = BTreeSet::new();
    for observations in pooled.values() {
        for &(service_a, user_a) in observations {
            for &(service_b, user_b) in observations {
                if service_a < service_b && user_a == user_b {
                    recovered.insert((user_a, service_a, service_b));
                }
            }
        }
    }
    let ground_truth_pairs = users as u64 * (services as u64 * (services as u64 - 1) / 2);
    let adversary_joins = recovered.len() as u64;

    // Within-service grouping: can the adversary tie together two visits of
    // the same user at one service?
    let mut linked_cells = 0u64;
    let mut cells = 0u64;
    if interactions_per_user >= 2 {
        for records in &databases {
            let mut per_user: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
            for (user, display) in records {
                per_user.entry(*user).or_default().push(display);
            }
            for displays in per_user.values() {
                cells += 1;
                let distinct: BTreeSet<&&str> = displays.iter().collect();
                if distinct.len() < displays.len() {
                    linked_cells += 1;
                }
            }
        }
    }

    Ok(LinkageReport {
        regime,
        services,
        users,
        interactions: services as u64 * users as u64 * interactions_per_user as u64,
        adversary_joins,
        ground_truth_pairs,
        join_rate: if ground_truth_pairs == 0 {
            0.0
        } else {
            adversary_joins as f64 / ground_truth_pairs as f64
        },
        within_service_rate: if cells == 0 {
            0.0
        } else {
            linked_cells as f64 / cells as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uli_regime_joins_everything() {
        let report = run_linkage_adversary(Regime::Uli, 5, 100, 1, 1).unwrap();
        assert_eq!(report.join_rate, 1.0);
        assert_eq!(report.adversary_joins, report.ground_truth_pairs);
        assert_eq!(report.ground_truth_pairs, 100 * 10);
    }

    #[test]
    fn per_interaction_regime_joins_nothing() {
        let report = run_linkage_adversary(Regime::PerInteraction, 5, 50, 4, 2).unwrap();
        assert_eq!(report.adversary_joins, 0);
        assert_eq!(report.join_rate, 0.0);
        assert_eq!(report.within_service_rate, 0.0);
        assert_eq!(report.interactions, 5 * 50 * 4);
    }

    #[test]
    fn per_rp_regime_links_within_but_not_across() {
        let report = run_linkage_adversary(Regime::PerRp, 4, 30, 3, 3).unwrap();
        assert_eq!(report.join_rate, 0.0);
        assert_eq!(report.within_service_rate, 1.0);
    }

    #[test]
    fn runs_are_deterministic_in_the_seed() {
        let a = run_linkage_adversary(Regime::Uli, 3, 10, 2, 9).unwrap();
        let b = run_linkage_adversary(Regime::Uli, 3, 10, 2, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_parameters_are_rejected() {
        assert!(matches!(
            run_linkage_adversary(Regime::Uli, 0, 10, 1, 1),
            Err(AdversaryError::BadParameters)
        ));
    }

    #[test]
    fn report_renders_summary_plus_key_value_block() {
        let report = run_linkage_adversary(Regime::PerRp, 2, 3, 2, 5).unwrap();
        let text = report.to_string();
        assert!(text.lines().next().unwrap().contains("cross-service pairs"));
        assert!(text.contains("join_rate=0.000000"));
        assert!(text.contains("regime=per_rp"));
    }
}
